//! Seeded synthetic corpora in the interval-event format.
//!
//! `house_like` simulates one occupant's daily routine with reed-switch style
//! sensors that fire briefly at the start and end of activities, which
//! leaves long stretches where no sensor changes (sleeping, away, idle).
//! `separable` builds a corpus in which every activity is identified by its
//! own pair of sensors under every representation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{
    parse_timestamp, rasterize, split_days, HouseMeta, IntervalEvent, Minute, TimesliceSequence,
    MINUTES_PER_DAY,
};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Corpus {
    pub events: Vec<IntervalEvent>,
    pub meta: HouseMeta,
    pub start: Minute,
    pub end: Minute,
}

impl Corpus {
    pub fn rasterize(&self) -> Result<TimesliceSequence> {
        rasterize(&self.events, &self.meta, self.start, self.end)
    }

    pub fn days(&self) -> Result<Vec<TimesliceSequence>> {
        Ok(split_days(&self.rasterize()?))
    }

    fn sort(&mut self) {
        self.events.sort_by_key(|e| (e.start, e.kind == crate::dataset::EventKind::Activity, e.id, e.end));
    }
}

fn first_midnight() -> Minute {
    parse_timestamp("2008-02-25T00:00").expect("valid literal")
}

/// Activity `k` drives sensor `k` (toggling every minute, starting on) and
/// sensor `C + k` (on throughout). Runs have even length and never cross
/// midnight, so each day starts and ends with every toggling sensor off.
pub fn separable(n_days: usize, n_classes: usize, seed: u64) -> Corpus {
    assert!(n_classes >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sensors = (0..n_classes)
        .map(|k| format!("toggle{k}"))
        .chain((0..n_classes).map(|k| format!("steady{k}")))
        .collect();
    let mut activities = vec![crate::dataset::IDLE.to_string()];
    activities.extend((1..n_classes).map(|k| format!("activity{k}")));
    let meta = HouseMeta::new("separable", sensors, activities).expect("valid names");

    let origin = first_midnight();
    let mut events = Vec::new();
    for day in 0..n_days {
        let day_start = origin + day as Minute * MINUTES_PER_DAY;
        let mut pos = 0;
        let mut prev = usize::MAX;
        while pos < MINUTES_PER_DAY {
            let mut k = rng.gen_range(0..n_classes);
            while k == prev {
                k = rng.gen_range(0..n_classes);
            }
            let len = (2 * rng.gen_range(1..=30)).min(MINUTES_PER_DAY - pos);
            let (s, e) = (day_start + pos, day_start + pos + len);
            events.push(IntervalEvent::sensor(n_classes + k, s, e));
            for m in (s..e).step_by(2) {
                events.push(IntervalEvent::sensor(k, m, m + 1));
            }
            if k != 0 {
                events.push(IntervalEvent::activity(k, s, e));
            }
            prev = k;
            pos += len;
        }
    }
    let mut c = Corpus {
        events,
        meta,
        start: origin,
        end: origin + n_days as Minute * MINUTES_PER_DAY,
    };
    c.sort();
    c
}

mod act {
    pub const LEAVE: usize = 1;
    pub const TOILET: usize = 2;
    pub const SHOWER: usize = 3;
    pub const TEETH: usize = 4;
    pub const BED: usize = 5;
    pub const BREAKFAST: usize = 6;
    pub const DINNER: usize = 7;
    pub const SNACK: usize = 8;
    pub const DRINK: usize = 9;
}

mod sensor {
    pub const MICROWAVE: usize = 0;
    pub const TOILET_DOOR: usize = 1;
    pub const BATHROOM_DOOR: usize = 2;
    pub const CUPS: usize = 3;
    pub const FRIDGE: usize = 4;
    pub const PLATES: usize = 5;
    pub const FRONTDOOR: usize = 6;
    pub const DISHWASHER: usize = 7;
    pub const FLUSH: usize = 8;
    pub const FREEZER: usize = 9;
    pub const PANS: usize = 10;
    pub const WASHING_MACHINE: usize = 11;
    pub const GROCERIES: usize = 12;
    pub const BEDROOM_DOOR: usize = 13;
}

const HOUSE_SENSORS: [&str; 14] = [
    "Microwave",
    "Hall-Toilet door",
    "Hall-Bathroom door",
    "Cups cupboard",
    "Fridge",
    "Plates cupboard",
    "Frontdoor",
    "Dishwasher",
    "ToiletFlush",
    "Freezer",
    "Pans Cupboard",
    "Washingmachine",
    "Groceries Cupboard",
    "Hall-Bedroom door",
];

const HOUSE_ACTIVITIES: [&str; 10] = [
    "Idle",
    "Leave house",
    "Use toilet",
    "Take shower",
    "Brush teeth",
    "Go to bed",
    "Prepare Breakfast",
    "Prepare Dinner",
    "Get snack",
    "Get drink",
];

struct DayWriter<'a> {
    rng: &'a mut ChaCha8Rng,
    events: &'a mut Vec<IntervalEvent>,
}

impl DayWriter<'_> {
    fn fire(&mut self, s: usize, at: Minute, len: Minute) {
        self.events.push(IntervalEvent::sensor(s, at, at + len.max(1)));
    }

    fn label(&mut self, a: usize, s: Minute, e: Minute) {
        self.events.push(IntervalEvent::activity(a, s, e));
    }

    fn between(&mut self, lo: Minute, hi: Minute) -> Minute {
        self.rng.gen_range(lo..=hi)
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    /// Writes one short activity starting at `at`; returns its end.
    fn activity(&mut self, a: usize, at: Minute) -> Minute {
        use sensor::*;
        let dur = match a {
            act::TOILET => self.between(2, 6),
            act::SHOWER => self.between(8, 20),
            act::TEETH => self.between(2, 4),
            act::BREAKFAST => self.between(6, 16),
            act::DINNER => self.between(20, 50),
            act::SNACK => self.between(2, 5),
            act::DRINK => self.between(1, 3),
            _ => unreachable!("not a short activity"),
        };
        let end = at + dur;
        self.label(a, at, end);
        match a {
            act::TOILET => {
                self.fire(TOILET_DOOR, at, 1);
                self.fire(FLUSH, end - 1, 1);
                if dur > 2 {
                    self.fire(TOILET_DOOR, end - 1, 1);
                }
            }
            act::SHOWER | act::TEETH => {
                self.fire(BATHROOM_DOOR, at, 1);
                self.fire(BATHROOM_DOOR, end - 1, 1);
            }
            act::BREAKFAST => {
                self.fire(CUPS, at, 1);
                let t = self.between(at + 1, at + 3);
                self.fire(FRIDGE, t, 2);
                let t = self.between(at + 2, end - 1);
                self.fire(PLATES, t, 1);
                if self.chance(0.5) {
                    let t = self.between(at + 1, end - 1);
                    self.fire(GROCERIES, t, 1);
                }
            }
            act::DINNER => {
                self.fire(PANS, at, 1);
                let t = self.between(at + 1, at + 5);
                self.fire(FRIDGE, t, 2);
                if self.chance(0.6) {
                    let t = self.between(at + 2, at + 10);
                    self.fire(FREEZER, t, 1);
                }
                if self.chance(0.5) {
                    let t = self.between(at + 5, end - 8);
                    let len = self.between(2, 6);
                    self.fire(MICROWAVE, t, len);
                }
                let t = self.between(end - 8, end - 2);
                self.fire(PLATES, t, 1);
                if self.chance(0.4) {
                    let t = self.between(at + 3, end - 3);
                    self.fire(GROCERIES, t, 1);
                }
                if self.chance(0.5) {
                    self.fire(DISHWASHER, end - 1, 1);
                }
            }
            act::SNACK => {
                self.fire(GROCERIES, at, 1);
                if self.chance(0.5) {
                    self.fire(FRIDGE, end - 1, 1);
                }
            }
            act::DRINK => {
                self.fire(FRIDGE, at, 1);
                if self.chance(0.6) {
                    self.fire(CUPS, end - 1, 1);
                }
            }
            _ => {}
        }
        end
    }
}

/// A house-A shaped corpus: 14 sensors, 10 activities, `n_days` full days.
pub fn house_like(n_days: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meta = HouseMeta::new(
        "synthetic-house-a",
        HOUSE_SENSORS.iter().map(|s| s.to_string()).collect(),
        HOUSE_ACTIVITIES.iter().map(|s| s.to_string()).collect(),
    )
    .expect("valid names");
    let origin = first_midnight();
    let end = origin + n_days as Minute * MINUTES_PER_DAY;
    let mut events = Vec::new();
    let mut bed_since = origin;

    for day in 0..n_days {
        let d0 = origin + day as Minute * MINUTES_PER_DAY;
        let weekend = day % 7 >= 5;
        let mut w = DayWriter {
            rng: &mut rng,
            events: &mut events,
        };
        let h = |hours: f64| d0 + (hours * 60.0) as Minute;

        // night and waking
        let wake = w.between(h(6.5), h(if weekend { 9.0 } else { 7.75 }));
        w.label(act::BED, bed_since, wake);
        if w.chance(0.4) {
            let t = w.between(h(1.5), h(5.0));
            w.fire(sensor::BEDROOM_DOOR, t, 1);
            w.activity(act::TOILET, t + 1);
        }
        w.fire(sensor::BEDROOM_DOOR, wake, 1);

        // morning routine
        let mut cursor = wake + w.between(1, 4);
        let mut morning = vec![act::TOILET, act::TEETH];
        if w.chance(0.75) {
            morning.insert(1, act::SHOWER);
        }
        if w.chance(0.85) {
            morning.push(act::BREAKFAST);
        }
        if w.chance(0.5) {
            morning.push(act::DRINK);
        }
        for a in morning {
            cursor = w.activity(a, cursor) + w.between(1, 8);
        }

        // away
        let leave = if weekend { w.chance(0.6) } else { true };
        if leave {
            let start = cursor + w.between(2, 30);
            let stay = if weekend {
                w.between(60, 240)
            } else {
                w.between(7 * 60, 9 * 60 + 30)
            };
            let back = start + stay;
            w.fire(sensor::FRONTDOOR, start, 1);
            w.fire(sensor::FRONTDOOR, back - 1, 1);
            w.label(act::LEAVE, start, back);
            cursor = back + w.between(1, 10);
        }

        // afternoon and evening
        let bedtime = w.between(h(22.25), h(23.8));
        let dinner_at = w.between(h(17.75), h(19.75)).max(cursor + 5);
        let mut dinner_done = false;
        loop {
            if !dinner_done && cursor + 30 >= dinner_at {
                cursor = w.activity(act::DINNER, cursor.max(dinner_at)) + w.between(5, 30);
                dinner_done = true;
                continue;
            }
            let gap = w.between(10, 90);
            let next = cursor + gap;
            if next + 60 > bedtime {
                break;
            }
            if w.chance(0.05) {
                let t = w.between(cursor + 1, next - 1);
                w.fire(sensor::WASHING_MACHINE, t, 1);
            }
            let a = match w.between(0, 9) {
                0..=3 => act::TOILET,
                4..=6 => act::DRINK,
                _ => act::SNACK,
            };
            cursor = w.activity(a, next);
        }
        let teeth_at = (bedtime - w.between(10, 25)).max(cursor + 1);
        let teeth_end = w.activity(act::TEETH, teeth_at);
        if w.chance(0.6) {
            w.activity(act::TOILET, teeth_end + 1);
        }
        let bed = bedtime.max(teeth_end + 8);
        w.fire(sensor::BEDROOM_DOOR, bed, 1);
        bed_since = bed;
    }
    events.push(IntervalEvent::activity(act::BED, bed_since, end));
    events.retain(|e| e.start < end);
    let mut c = Corpus {
        events,
        meta,
        start: origin,
        end,
    };
    c.sort();
    c
}
