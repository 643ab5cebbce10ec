//! Linear-chain CRF over binary features.
//!
//! Potentials: a per-class weight for every input feature plus a per-class
//! bias, a full `C×C` transition table, and initial-state weights. The flat
//! parameter vector is laid out as `[init | trans (row-major) | emit
//! (row-major, F+1 per class)]`; the optimizer and the JSON document both use
//! this order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::viterbi_lex;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::logspace::log_sum_exp;
use crate::optim::{lbfgs_minimize, LbfgsOptions, Termination};

#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    n_classes: usize,
    n_features: usize,
    pub w_init: Vec<f64>,
    /// Row-major `C×C`, `w_trans[prev*C + next]`.
    pub w_trans: Vec<f64>,
    /// Row-major `C×(F+1)`; the last column is the bias.
    pub w_emit: Vec<f64>,
    pub lambda_reg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrfFitReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub grad_max_norm: f64,
    pub objective: f64,
    pub termination: Termination,
}

pub fn param_count(n_classes: usize, n_features: usize) -> usize {
    n_classes + n_classes * n_classes + n_classes * (n_features + 1)
}

/// Borrowed view of a flat parameter vector.
#[derive(Clone, Copy)]
struct Params<'a> {
    c: usize,
    f: usize,
    init: &'a [f64],
    trans: &'a [f64],
    emit: &'a [f64],
}

impl<'a> Params<'a> {
    fn split(c: usize, f: usize, theta: &'a [f64]) -> Self {
        let (init, rest) = theta.split_at(c);
        let (trans, emit) = rest.split_at(c * c);
        Self {
            c,
            f,
            init,
            trans,
            emit,
        }
    }

    /// Row-major `T×C` node potentials (emission weights plus bias).
    fn node_scores(&self, seq: &FeatureSequence) -> Vec<f64> {
        let (c, w) = (self.c, self.f + 1);
        let mut out = vec![0.0; seq.len() * c];
        for t in 0..seq.len() {
            let active = seq.f.row(t);
            for k in 0..c {
                let row = &self.emit[k * w..(k + 1) * w];
                out[t * c + k] = row[self.f] + active.iter().map(|&i| row[i as usize]).sum::<f64>();
            }
        }
        out
    }
}

/// Log-space forward and backward tables for one sequence.
struct Lattice {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    log_z: f64,
}

/// `exp(trans - max)` so products stay in range; returns the shift.
fn scaled_exp(trans: &[f64]) -> (Vec<f64>, f64) {
    let shift = trans.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (trans.iter().map(|&v| (v - shift).exp()).collect(), shift)
}

fn forward(init: &[f64], trans: &[f64], node: &[f64], c: usize) -> Vec<f64> {
    let t_len = node.len() / c;
    let (expt, shift) = scaled_exp(trans);
    let mut alpha = vec![0.0; t_len * c];
    for k in 0..c {
        alpha[k] = init[k] + node[k];
    }
    let mut scaled = vec![0.0; c];
    let mut terms = vec![0.0; c];
    for t in 1..t_len {
        let (done, rest) = alpha.split_at_mut(t * c);
        let prev = &done[(t - 1) * c..];
        let m = prev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (s, &p) in scaled.iter_mut().zip(prev) {
            *s = (p - m).exp();
        }
        for k in 0..c {
            let sum: f64 = (0..c).map(|j| scaled[j] * expt[j * c + k]).sum();
            rest[k] = node[t * c + k]
                + if sum > 0.0 && sum.is_finite() {
                    m + shift + sum.ln()
                } else {
                    for j in 0..c {
                        terms[j] = prev[j] + trans[j * c + k];
                    }
                    log_sum_exp(&terms)
                };
        }
    }
    alpha
}

fn backward(trans: &[f64], node: &[f64], c: usize) -> Vec<f64> {
    let t_len = node.len() / c;
    let (expt, shift) = scaled_exp(trans);
    let mut beta = vec![0.0; t_len * c];
    let mut ahead = vec![0.0; c];
    let mut scaled = vec![0.0; c];
    let mut terms = vec![0.0; c];
    for t in (0..t_len.saturating_sub(1)).rev() {
        for j in 0..c {
            ahead[j] = node[(t + 1) * c + j] + beta[(t + 1) * c + j];
        }
        let m = ahead.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (s, &a) in scaled.iter_mut().zip(&ahead) {
            *s = (a - m).exp();
        }
        for k in 0..c {
            let sum: f64 = (0..c).map(|j| expt[k * c + j] * scaled[j]).sum();
            beta[t * c + k] = if sum > 0.0 && sum.is_finite() {
                m + shift + sum.ln()
            } else {
                for j in 0..c {
                    terms[j] = trans[k * c + j] + ahead[j];
                }
                log_sum_exp(&terms)
            };
        }
    }
    beta
}

impl Lattice {
    fn new(p: &Params, node: &[f64]) -> Self {
        let c = p.c;
        let alpha = forward(p.init, p.trans, node, c);
        let beta = backward(p.trans, node, c);
        let t_len = node.len() / c;
        let log_z = log_sum_exp(&alpha[(t_len - 1) * c..]);
        Self { alpha, beta, log_z }
    }
}

fn check_seq(c: usize, f: usize, seq: &FeatureSequence) -> Result<()> {
    if seq.width() != f {
        return Err(Error::Dimension(format!(
            "sequence has {} features, model expects {f}",
            seq.width()
        )));
    }
    if seq.is_empty() {
        return Err(Error::Dimension("empty sequence".into()));
    }
    if let Some(&y) = seq.labels.iter().find(|&&y| y >= c) {
        return Err(Error::Domain(format!("label {y} out of range 0..{c}")));
    }
    Ok(())
}

/// Forward-backward with per-step normalization in probability space.
/// Fills marginal and pairwise expectations into the gradient and returns
/// `log Z`, or `None` if scaling underflowed and the log-space path is needed.
fn expectations_scaled(p: &Params, seq: &FeatureSequence, node: &[f64], grad: &mut [f64]) -> Option<f64> {
    let (c, w) = (p.c, p.f + 1);
    let t_len = seq.len();
    let (expt, shift) = scaled_exp(p.trans);
    let (expi, shift_i) = scaled_exp(p.init);
    if !shift.is_finite() || !shift_i.is_finite() {
        return None;
    }
    // a transition or start weight that underflows after shifting is not
    // representable here
    let lost = |e: &[f64], v: &[f64]| e.iter().zip(v).any(|(&x, &y)| x == 0.0 && y.is_finite());
    if lost(&expt, p.trans) || lost(&expi, p.init) {
        return None;
    }

    let mut en = vec![0.0; t_len * c];
    let mut log_z = shift_i + (t_len - 1) as f64 * shift;
    for t in 0..t_len {
        let row = &node[t * c..(t + 1) * c];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return None;
        }
        log_z += m;
        for (e, &v) in en[t * c..(t + 1) * c].iter_mut().zip(row) {
            *e = (v - m).exp();
        }
    }

    let mut alpha = vec![0.0; t_len * c];
    let mut norm = vec![0.0; t_len];
    for k in 0..c {
        alpha[k] = expi[k] * en[k];
    }
    for t in 0..t_len {
        if t > 0 {
            let (done, rest) = alpha.split_at_mut(t * c);
            let prev = &done[(t - 1) * c..];
            let cur = &mut rest[..c];
            cur.fill(0.0);
            for (j, &a) in prev.iter().enumerate() {
                if a != 0.0 {
                    for (v, &e) in cur.iter_mut().zip(&expt[j * c..(j + 1) * c]) {
                        *v += a * e;
                    }
                }
            }
            for (v, &e) in cur.iter_mut().zip(&en[t * c..(t + 1) * c]) {
                *v *= e;
            }
        }
        let cur = &mut alpha[t * c..(t + 1) * c];
        let s: f64 = cur.iter().sum();
        if !(s > 0.0 && s.is_finite()) {
            return None;
        }
        cur.iter_mut().for_each(|v| *v /= s);
        norm[t] = s;
        log_z += s.ln();
    }

    let mut beta = vec![1.0; t_len * c];
    let mut ahead = vec![0.0; c];
    for t in (0..t_len - 1).rev() {
        let s = norm[t + 1];
        for k in 0..c {
            ahead[k] = en[(t + 1) * c + k] * beta[(t + 1) * c + k] / s;
        }
        for j in 0..c {
            beta[t * c + j] = expt[j * c..(j + 1) * c].iter().zip(&ahead).map(|(e, a)| e * a).sum();
        }
    }

    let (g_init, rest) = grad.split_at_mut(c);
    let (g_trans, g_emit) = rest.split_at_mut(c * c);
    let mut marg = vec![0.0; c];
    for t in 0..t_len {
        for k in 0..c {
            marg[k] = alpha[t * c + k] * beta[t * c + k];
        }
        if t == 0 {
            for k in 0..c {
                g_init[k] += marg[k];
            }
        }
        let active = seq.f.row(t);
        for k in 0..c {
            let row = &mut g_emit[k * w..(k + 1) * w];
            row[p.f] += marg[k];
            for &i in active {
                row[i as usize] += marg[k];
            }
        }
        if t > 0 {
            let s = norm[t];
            for k in 0..c {
                ahead[k] = en[t * c + k] * beta[t * c + k] / s;
            }
            for j in 0..c {
                let a = alpha[(t - 1) * c + j];
                if a != 0.0 {
                    for k in 0..c {
                        g_trans[j * c + k] += a * expt[j * c + k] * ahead[k];
                    }
                }
            }
        }
    }
    log_z.is_finite().then_some(log_z)
}

/// Log-space expectations; slower but safe for any finite weights.
fn expectations_log(p: &Params, seq: &FeatureSequence, node: &[f64], grad: &mut [f64]) -> f64 {
    let (c, w) = (p.c, p.f + 1);
    let lat = Lattice::new(p, node);
    let t_len = seq.len();
    let (g_init, rest) = grad.split_at_mut(c);
    let (g_trans, g_emit) = rest.split_at_mut(c * c);

    let mut marg = vec![0.0; c];
    for t in 0..t_len {
        for k in 0..c {
            marg[k] = (lat.alpha[t * c + k] + lat.beta[t * c + k] - lat.log_z).exp();
        }
        if t == 0 {
            for k in 0..c {
                g_init[k] += marg[k];
            }
        }
        let active = seq.f.row(t);
        for k in 0..c {
            let row = &mut g_emit[k * w..(k + 1) * w];
            row[p.f] += marg[k];
            for &i in active {
                row[i as usize] += marg[k];
            }
        }
    }
    let (expt, shift) = scaled_exp(p.trans);
    let mut ea = vec![0.0; c];
    let mut eb = vec![0.0; c];
    for t in 1..t_len {
        let prev = &lat.alpha[(t - 1) * c..t * c];
        let ma = prev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for j in 0..c {
            ea[j] = (prev[j] - ma).exp();
            eb[j] = node[t * c + j] + lat.beta[t * c + j];
        }
        let mb = eb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        eb.iter_mut().for_each(|v| *v = (*v - mb).exp());
        let scale = (ma + mb + shift - lat.log_z).exp();
        for j in 0..c {
            let a = ea[j] * scale;
            for k in 0..c {
                g_trans[j * c + k] += a * expt[j * c + k] * eb[k];
            }
        }
    }
    lat.log_z
}

/// Adds `logZ - score(gold)` and its gradient for one sequence into `grad`.
fn accumulate(p: &Params, seq: &FeatureSequence, grad: &mut [f64]) -> f64 {
    let (c, w) = (p.c, p.f + 1);
    let node = p.node_scores(seq);
    let t_len = seq.len();
    let mut expected = vec![0.0; grad.len()];
    let log_z = match expectations_scaled(p, seq, &node, &mut expected) {
        Some(z) => z,
        None => {
            expected.fill(0.0);
            expectations_log(p, seq, &node, &mut expected)
        }
    };
    for (g, e) in grad.iter_mut().zip(&expected) {
        *g += e;
    }
    let (g_init, rest) = grad.split_at_mut(c);
    let (g_trans, g_emit) = rest.split_at_mut(c * c);

    // empirical counts
    let y = &seq.labels;
    let mut gold = p.init[y[0]];
    g_init[y[0]] -= 1.0;
    for t in 0..t_len {
        gold += node[t * c + y[t]];
        let row = &mut g_emit[y[t] * w..(y[t] + 1) * w];
        row[p.f] -= 1.0;
        for &i in seq.f.row(t) {
            row[i as usize] -= 1.0;
        }
        if t > 0 {
            gold += p.trans[y[t - 1] * c + y[t]];
            g_trans[y[t - 1] * c + y[t]] -= 1.0;
        }
    }
    log_z - gold
}

/// Regularized negative conditional log-likelihood and its gradient.
///
/// Sequences are processed in parallel; partial results are summed in input
/// order so the output does not depend on the thread count.
pub fn nll_grad(
    n_classes: usize,
    n_features: usize,
    theta: &[f64],
    data: &[FeatureSequence],
    lambda_reg: f64,
) -> Result<(f64, Vec<f64>)> {
    if theta.len() != param_count(n_classes, n_features) {
        return Err(Error::Dimension(format!(
            "{} parameters supplied, {} expected",
            theta.len(),
            param_count(n_classes, n_features)
        )));
    }
    for seq in data {
        check_seq(n_classes, n_features, seq)?;
    }
    let (value, grad) = nll_grad_unchecked(n_classes, n_features, theta, data, lambda_reg);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!("objective evaluated to {value}")));
    }
    Ok((value, grad))
}

fn nll_grad_unchecked(
    c: usize,
    f: usize,
    theta: &[f64],
    data: &[FeatureSequence],
    lambda_reg: f64,
) -> (f64, Vec<f64>) {
    let p = Params::split(c, f, theta);
    let parts: Vec<(f64, Vec<f64>)> = data
        .par_iter()
        .map(|seq| {
            let mut g = vec![0.0; theta.len()];
            let v = accumulate(&p, seq, &mut g);
            (v, g)
        })
        .collect();
    let mut value = 0.5 * lambda_reg * theta.iter().map(|v| v * v).sum::<f64>();
    let mut grad: Vec<f64> = theta.iter().map(|v| lambda_reg * v).collect();
    for (v, g) in parts {
        value += v;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (value, grad)
}

impl CrfModel {
    pub fn zeros(n_classes: usize, n_features: usize, lambda_reg: f64) -> Self {
        Self::from_params(
            n_classes,
            n_features,
            &vec![0.0; param_count(n_classes, n_features)],
            lambda_reg,
        )
        .expect("length matches")
    }

    pub fn from_params(n_classes: usize, n_features: usize, theta: &[f64], lambda_reg: f64) -> Result<Self> {
        if theta.len() != param_count(n_classes, n_features) {
            return Err(Error::Dimension(format!(
                "{} parameters supplied, {} expected",
                theta.len(),
                param_count(n_classes, n_features)
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("CRF weights must be finite".into()));
        }
        let p = Params::split(n_classes, n_features, theta);
        Ok(Self {
            n_classes,
            n_features,
            w_init: p.init.to_vec(),
            w_trans: p.trans.to_vec(),
            w_emit: p.emit.to_vec(),
            lambda_reg,
        })
    }

    /// Flat parameter vector in canonical order.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(param_count(self.n_classes, self.n_features));
        v.extend_from_slice(&self.w_init);
        v.extend_from_slice(&self.w_trans);
        v.extend_from_slice(&self.w_emit);
        v
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn view(&self) -> Params<'_> {
        Params {
            c: self.n_classes,
            f: self.n_features,
            init: &self.w_init,
            trans: &self.w_trans,
            emit: &self.w_emit,
        }
    }

    fn check_width(&self, seq: &FeatureSequence) -> Result<()> {
        if seq.width() != self.n_features {
            return Err(Error::Dimension(format!(
                "sequence has {} features, model expects {}",
                seq.width(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Row-major `T×C` node potentials.
    pub fn node_scores(&self, seq: &FeatureSequence) -> Result<Vec<f64>> {
        self.check_width(seq)?;
        Ok(self.view().node_scores(seq))
    }

    /// Unnormalized log-potential of a labeling.
    pub fn score(&self, seq: &FeatureSequence, labels: &[usize]) -> Result<f64> {
        let node = self.node_scores(seq)?;
        if labels.len() != seq.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                seq.len()
            )));
        }
        if labels.iter().any(|&y| y >= self.n_classes) {
            return Err(Error::Domain("label out of range".into()));
        }
        Ok(crate::chain::path_score(
            &self.w_init,
            &self.w_trans,
            &node,
            self.n_classes,
            labels,
        ))
    }

    /// `log Z(X)` by the forward recursion.
    pub fn log_partition(&self, seq: &FeatureSequence) -> Result<f64> {
        let node = self.node_scores(seq)?;
        if seq.is_empty() {
            return Ok(0.0);
        }
        let c = self.n_classes;
        let alpha = forward(&self.w_init, &self.w_trans, &node, c);
        Ok(log_sum_exp(&alpha[(seq.len() - 1) * c..]))
    }

    /// `log Z(X)` by the backward recursion.
    pub fn log_partition_backward(&self, seq: &FeatureSequence) -> Result<f64> {
        let node = self.node_scores(seq)?;
        if seq.is_empty() {
            return Ok(0.0);
        }
        let c = self.n_classes;
        let beta = backward(&self.w_trans, &node, c);
        let first: Vec<f64> = (0..c).map(|k| self.w_init[k] + node[k] + beta[k]).collect();
        Ok(log_sum_exp(&first))
    }

    /// Posterior node marginals (`T×C`) and edge marginals (`(T-1)×C×C`).
    pub fn marginals(&self, seq: &FeatureSequence) -> Result<(Vec<f64>, Vec<f64>)> {
        let node = self.node_scores(seq)?;
        let c = self.n_classes;
        let t_len = seq.len();
        if t_len == 0 {
            return Ok((Vec::new(), Vec::new()));
        }
        let lat = Lattice::new(&self.view(), &node);
        let nodes = (0..t_len * c)
            .map(|i| (lat.alpha[i] + lat.beta[i] - lat.log_z).exp())
            .collect();
        let mut edges = vec![0.0; t_len.saturating_sub(1) * c * c];
        for t in 1..t_len {
            for j in 0..c {
                for k in 0..c {
                    edges[((t - 1) * c + j) * c + k] = (lat.alpha[(t - 1) * c + j]
                        + self.w_trans[j * c + k]
                        + node[t * c + k]
                        + lat.beta[t * c + k]
                        - lat.log_z)
                        .exp();
                }
            }
        }
        Ok((nodes, edges))
    }

    /// Lexicographically smallest highest-scoring labeling.
    pub fn viterbi(&self, seq: &FeatureSequence) -> Result<Vec<usize>> {
        let node = self.node_scores(seq)?;
        Ok(viterbi_lex(&self.w_init, &self.w_trans, &node, self.n_classes).0)
    }

    /// L2-regularized conditional maximum likelihood from zero weights.
    pub fn fit(
        data: &[FeatureSequence],
        n_classes: usize,
        lambda_reg: f64,
        opts: &LbfgsOptions,
    ) -> Result<(Self, CrfFitReport)> {
        let data: Vec<FeatureSequence> = data.iter().filter(|s| !s.is_empty()).cloned().collect();
        let f = super::nb::check_training_data(&data, n_classes)?;
        if !(lambda_reg >= 0.0) {
            return Err(Error::Domain(format!("lambda_reg must be ≥ 0, got {lambda_reg}")));
        }
        let theta0 = vec![0.0; param_count(n_classes, f)];
        let objective = |theta: &[f64]| nll_grad_unchecked(n_classes, f, theta, &data, lambda_reg);
        let result = lbfgs_minimize(objective, &theta0, opts)
            .map_err(|e| Error::Optimizer(format!("CRF training: {e}")))?;
        let model = Self::from_params(n_classes, f, &result.x, lambda_reg)?;
        let report = CrfFitReport {
            iterations: result.iterations,
            evaluations: result.evaluations,
            grad_max_norm: result.grad_max_norm,
            objective: result.value,
            termination: result.termination,
        };
        Ok((model, report))
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct CrfParams {
    pub lambda_reg: f64,
    pub w_init: Vec<f64>,
    pub w_trans: Vec<Vec<f64>>,
    pub w_emit: Vec<Vec<f64>>,
}

impl From<&CrfModel> for CrfParams {
    fn from(m: &CrfModel) -> Self {
        Self {
            lambda_reg: m.lambda_reg,
            w_init: m.w_init.clone(),
            w_trans: super::to_rows(&m.w_trans, m.n_classes),
            w_emit: super::to_rows(&m.w_emit, m.n_features + 1),
        }
    }
}

impl CrfParams {
    pub fn into_model(self, c: usize, f: usize) -> Result<CrfModel> {
        let mut theta = self.w_init;
        theta.extend(super::from_rows(self.w_trans, c, c)?);
        theta.extend(super::from_rows(self.w_emit, c, f + 1)?);
        CrfModel::from_params(c, f, &theta, self.lambda_reg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs(rows: &[&[u8]], labels: &[usize]) -> FeatureSequence {
        FeatureSequence::from_dense(rows[0].len(), rows, labels.to_vec()).unwrap()
    }

    fn model(c: usize, f: usize, theta: &[f64]) -> CrfModel {
        CrfModel::from_params(c, f, theta, 0.0).unwrap()
    }

    #[test]
    fn zero_weights() {
        let seq = fs(&[&[1, 0], &[0, 1], &[1, 1]], &[0, 2, 1]);
        let m = CrfModel::zeros(3, 2, 0.0);
        assert_eq!(m.score(&seq, &[0, 2, 1]).unwrap(), 0.0);
        assert!((m.log_partition(&seq).unwrap() - 3.0 * 3f64.ln()).abs() < 1e-12);
        let (v, _) = nll_grad(3, 2, &m.params(), &[seq.clone()], 0.0).unwrap();
        assert!((v - 3.0 * 3f64.ln()).abs() < 1e-12);
        assert_eq!(m.viterbi(&seq).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn hand_score() {
        // C=2, F=1: init | trans | emit (w, bias) per class
        let theta = [0.5, -0.5, 0.1, 0.2, 0.3, 0.4, 1.0, 0.0, -1.0, 2.0];
        let m = model(2, 1, &theta);
        let seq = fs(&[&[1], &[0], &[1]], &[0, 1, 1]);
        // init[0] + (1.0 + 0.0) + trans[0][1] + (2.0) + trans[1][1] + (-1 + 2)
        let expect = 0.5 + 1.0 + 0.2 + 2.0 + 0.4 + 1.0;
        assert!((m.score(&seq, &[0, 1, 1]).unwrap() - expect).abs() < 1e-12);
        let single = fs(&[&[1]], &[1]);
        assert!((m.score(&single, &[1]).unwrap() - (-0.5 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn single_node_partition_and_gradient() {
        let theta = [0.3, -0.2, 0.0, 0.0, 0.0, 0.0, 0.7, 0.1, -0.4, 0.5];
        let m = model(2, 1, &theta);
        let seq = fs(&[&[1]], &[1]);
        let s = [0.3 + 0.7 + 0.1, -0.2 - 0.4 + 0.5];
        let z = log_sum_exp(&s);
        assert!((m.log_partition(&seq).unwrap() - z).abs() < 1e-12);
        let lambda = 0.5;
        let (v, g) = nll_grad(2, 1, &theta, &[seq], lambda).unwrap();
        let p: Vec<f64> = s.iter().map(|x| (x - z).exp()).collect();
        let reg: f64 = theta.iter().map(|x| x * x).sum::<f64>() * lambda / 2.0;
        assert!((v - (z - s[1] + reg)).abs() < 1e-12);
        let expect = [
            p[0] + lambda * theta[0],
            p[1] - 1.0 + lambda * theta[1],
            lambda * theta[2],
            lambda * theta[3],
            lambda * theta[4],
            lambda * theta[5],
            p[0] + lambda * theta[6],
            p[0] + lambda * theta[7],
            p[1] - 1.0 + lambda * theta[8],
            p[1] - 1.0 + lambda * theta[9],
        ];
        for (a, b) in g.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{g:?} vs {expect:?}");
        }
    }

    fn both_paths(theta: &[f64], seq: &FeatureSequence) -> (Option<(f64, Vec<f64>)>, (f64, Vec<f64>)) {
        let p = Params::split(3, 2, theta);
        let node = p.node_scores(seq);
        let mut g1 = vec![0.0; theta.len()];
        let fast = expectations_scaled(&p, seq, &node, &mut g1).map(|z| (z, g1));
        let mut g2 = vec![0.0; theta.len()];
        let slow = expectations_log(&p, seq, &node, &mut g2);
        (fast, (slow, g2))
    }

    #[test]
    fn scaled_and_log_expectations_agree() {
        let seq = fs(&[&[1, 0], &[0, 1], &[1, 1], &[0, 0], &[1, 0], &[0, 1]], &[0; 6]);
        for scale in [0.1, 1.0, 5.0, 30.0] {
            let theta: Vec<f64> = (0..param_count(3, 2))
                .map(|i| ((i * 7919 % 13) as f64 - 6.0) * scale / 6.0)
                .collect();
            let (fast, (z, g)) = both_paths(&theta, &seq);
            let (zf, gf) = fast.expect("moderate weights stay on the scaled path");
            assert!((z - zf).abs() < 1e-9 * z.abs().max(1.0), "{z} vs {zf}");
            for (a, b) in g.iter().zip(&gf) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn scaled_path_declines_huge_spreads() {
        let seq = fs(&[&[1, 0], &[0, 1]], &[0, 0]);
        let mut theta = vec![0.0; param_count(3, 2)];
        theta[3] = 900.0;
        theta[4] = -900.0;
        let (fast, (z, _)) = both_paths(&theta, &seq);
        assert!(fast.is_none());
        assert!(z.is_finite());
    }

    #[test]
    fn forward_equals_backward_with_extreme_weights() {
        let mut theta = vec![0.0; param_count(3, 2)];
        for (i, v) in theta.iter_mut().enumerate() {
            *v = ((i * 37 % 11) as f64 - 5.0) * 90.0;
        }
        let m = model(3, 2, &theta);
        let seq = fs(&[&[1, 0], &[0, 1], &[1, 1], &[0, 0], &[1, 0]], &[0; 5]);
        let a = m.log_partition(&seq).unwrap();
        let b = m.log_partition_backward(&seq).unwrap();
        assert!(a.is_finite());
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn separable_fit() {
        let seq = fs(&[&[1], &[1], &[0], &[0], &[1], &[0]], &[1, 1, 0, 0, 1, 0]);
        let (m, report) = CrfModel::fit(&[seq.clone()], 2, 0.1, &LbfgsOptions::default()).unwrap();
        assert_eq!(m.viterbi(&seq).unwrap(), seq.labels);
        assert!(report.iterations > 0);
    }

    #[test]
    fn strong_regularization_shrinks_to_zero() {
        let seq = fs(&[&[1], &[0], &[1]], &[1, 0, 1]);
        let (m, _) = CrfModel::fit(&[seq], 2, 1e9, &LbfgsOptions::default()).unwrap();
        assert!(m.params().iter().all(|w| w.abs() < 1e-8));
        let zero = CrfModel::zeros(2, 1, 1e9);
        assert_eq!(zero.viterbi(&fs(&[&[1], &[0]], &[0, 0])).unwrap(), vec![0, 0]);
    }

    #[test]
    fn fit_is_deterministic() {
        let seq = fs(&[&[1, 0], &[0, 1], &[1, 1], &[0, 0]], &[0, 1, 2, 0]);
        let data = vec![seq.clone(), seq];
        let opts = LbfgsOptions::default();
        let (a, _) = CrfModel::fit(&data, 3, 1.0, &opts).unwrap();
        let (b, _) = CrfModel::fit(&data, 3, 1.0, &opts).unwrap();
        let bits = |m: &CrfModel| m.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn dimension_errors() {
        let m = CrfModel::zeros(2, 2, 1.0);
        let seq = fs(&[&[1]], &[0]);
        assert!(matches!(m.viterbi(&seq), Err(Error::Dimension(_))));
        assert!(matches!(m.log_partition(&seq), Err(Error::Dimension(_))));
        assert!(nll_grad(2, 2, &[0.0; 3], &[], 1.0).is_err());
        assert!(CrfModel::fit(&[], 2, 1.0, &LbfgsOptions::default()).is_err());
    }
}
