//! Time-proportional profiling: each sampled DUT cycle carries a PC and the
//! event (commit or stall class) that the cycle was spent on.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dut::{CycleOutput, Event};
use crate::kernel::RunSummary;

const PC_MASK: u32 = 0x0FFF_FFFF;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub dut_cycle: u64,
    pub attributed_pc: u32,
    pub event: Event,
}

impl Sample {
    /// Two FIFO words: `{cycle_lo, pc | class << 28}`.
    pub fn pack(&self) -> [u32; 2] {
        [self.dut_cycle as u32, (self.attributed_pc & PC_MASK) | (self.event.code() as u32) << 28]
    }
}

/// Rebuilds full cycle numbers from the 32-bit field of in-order samples.
#[derive(Clone, Debug, Default)]
pub struct SampleDecoder {
    last: u64,
}

impl SampleDecoder {
    pub fn decode(&mut self, words: [u32; 2]) -> Option<Sample> {
        let event = Event::from_code((words[1] >> 28) as u8)?;
        let mut cycle = (self.last & !0xFFFF_FFFF) | words[0] as u64;
        if cycle < self.last {
            cycle += 1 << 32;
        }
        self.last = cycle;
        Some(Sample { dut_cycle: cycle, attributed_pc: words[1] & PC_MASK, event })
    }
}

pub fn should_sample(dut_cycle: u64, interval: u64) -> bool {
    interval >= 1 && dut_cycle % interval == 0
}

pub fn attribute(out: &CycleOutput) -> Sample {
    Sample { dut_cycle: out.cycle, attributed_pc: out.sample_pc, event: out.event() }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StallStack {
    pub interval: u64,
    pub cycles: BTreeMap<Event, u64>,
}

impl StallStack {
    pub fn total(&self) -> u64 {
        self.cycles.values().sum()
    }

    pub fn get(&self, event: Event) -> u64 {
        self.cycles.get(&event).copied().unwrap_or(0)
    }

    /// Fraction of all cycles spent on `event`.
    pub fn share(&self, event: Event) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.get(event) as f64 / t as f64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,cycles\n");
        for (e, n) in &self.cycles {
            let _ = writeln!(s, "{e},{n}");
        }
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub stack: StallStack,
    pub per_pc: BTreeMap<(u32, Event), u64>,
}

impl Profile {
    pub fn per_pc_csv(&self) -> String {
        let mut s = String::from("pc,class,cycles\n");
        for ((pc, e), n) in &self.per_pc {
            let _ = writeln!(s, "0x{pc:08x},{e},{n}");
        }
        s
    }
}

/// Interval 1 gives the exact stack; otherwise every sample stands for
/// `interval` cycles.
pub fn aggregate(samples: &[Sample], interval: u64) -> Profile {
    let interval = interval.max(1);
    let mut p = Profile { stack: StallStack { interval, cycles: BTreeMap::new() }, per_pc: BTreeMap::new() };
    for s in samples {
        *p.stack.cycles.entry(s.event).or_default() += interval;
        *p.per_pc.entry((s.attributed_pc, s.event)).or_default() += interval;
    }
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowdownReport {
    pub interval: u64,
    pub host_ticks: u64,
    pub dut_cycles: u64,
    pub slowdown: f64,
}

pub fn slowdown(summary: &RunSummary, interval: u64) -> SlowdownReport {
    let slowdown = if summary.dut_cycles == 0 {
        1.0
    } else {
        summary.host_ticks as f64 / summary.dut_cycles as f64
    };
    SlowdownReport { interval, host_ticks: summary.host_ticks, dut_cycles: summary.dut_cycles, slowdown }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dut::StallClass;
    use proptest::prelude::*;

    const EVENTS: [Event; 4] = [
        Event::Commit,
        Event::Stall(StallClass::LoadArith),
        Event::Stall(StallClass::BranchMispredict),
        Event::Stall(StallClass::DcacheMiss),
    ];

    fn trace(events: &[Event]) -> Vec<Sample> {
        events
            .iter()
            .enumerate()
            .map(|(i, &e)| Sample { dut_cycle: i as u64 + 1, attributed_pc: 0x80 + 4 * (i as u32 % 3), event: e })
            .collect()
    }

    fn subsample(t: &[Sample], interval: u64) -> Vec<Sample> {
        t.iter().filter(|s| should_sample(s.dut_cycle, interval)).copied().collect()
    }

    #[test]
    fn commit_attribution() {
        let out = CycleOutput {
            cycle: 7,
            committed: Some(crate::arch::CommitRecord { pc: 0x80, ..Default::default() }),
            sample_pc: 0x80,
            ..Default::default()
        };
        assert_eq!(attribute(&out), Sample { dut_cycle: 7, attributed_pc: 0x80, event: Event::Commit });
    }

    #[test]
    fn exact_stack_counts() {
        let mut ev = vec![Event::Commit; 60];
        ev.extend([Event::Stall(StallClass::LoadArith); 25]);
        ev.extend([Event::Stall(StallClass::BranchMispredict); 15]);
        let p = aggregate(&trace(&ev), 1);
        assert_eq!(p.stack.get(Event::Commit), 60);
        assert_eq!(p.stack.get(Event::Stall(StallClass::LoadArith)), 25);
        assert_eq!(p.stack.get(Event::Stall(StallClass::BranchMispredict)), 15);
        assert_eq!(p.stack.total(), 100);
    }

    #[test]
    fn interval_ten_stays_within_a_bucket() {
        let mut ev = vec![Event::Commit; 60];
        ev.extend([Event::Stall(StallClass::LoadArith); 25]);
        ev.extend([Event::Stall(StallClass::BranchMispredict); 15]);
        let t = trace(&ev);
        let exact = aggregate(&t, 1).stack;
        let est = aggregate(&subsample(&t, 10), 10).stack;
        assert_eq!(est.total(), 100);
        for e in EVENTS {
            assert!((est.get(e) as i64 - exact.get(e) as i64).abs() <= 10);
        }
    }

    #[test]
    fn empty_run() {
        assert!(aggregate(&[], 1).stack.is_empty());
        assert_eq!(aggregate(&[], 1).stack.share(Event::Commit), 0.0);
    }

    #[test]
    fn pack_and_decode_across_wrap() {
        let mut d = SampleDecoder::default();
        for cycle in [5u64, 0xFFFF_FFF0, 0x1_0000_0004, 0x1_0000_0100] {
            let s = Sample { dut_cycle: cycle, attributed_pc: 0x1234, event: Event::Stall(StallClass::RawOther) };
            assert_eq!(d.decode(s.pack()), Some(s));
        }
    }

    #[test]
    fn csv_shapes() {
        let p = aggregate(&trace(&[Event::Commit, Event::Commit]), 1);
        assert_eq!(p.stack.to_csv(), "class,cycles\ncommit,2\n");
        assert_eq!(p.per_pc_csv(), "pc,class,cycles\n0x00000080,commit,1\n0x00000084,commit,1\n");
    }

    #[test]
    fn free_run_slowdown_is_one() {
        let s = RunSummary { dut_cycles: 500, host_ticks: 500, ..Default::default() };
        assert_eq!(slowdown(&s, 1_000_000).slowdown, 1.0);
    }

    fn runs_of(events: &[Event], e: Event) -> u64 {
        let mut runs = 0;
        let mut prev = None;
        for &x in events {
            if x == e && prev != Some(e) {
                runs += 1;
            }
            prev = Some(x);
        }
        runs
    }

    proptest! {
        #[test]
        fn estimate_error_bounded_by_runs(
            idx in proptest::collection::vec(0usize..4, 0..600),
            interval in 1u64..50,
        ) {
            let events: Vec<Event> = idx.iter().map(|&i| EVENTS[i]).collect();
            let t = trace(&events);
            let exact = aggregate(&t, 1).stack;
            prop_assert_eq!(exact.total(), events.len() as u64);
            let est = aggregate(&subsample(&t, interval), interval).stack;
            for e in EVENTS {
                let err = (est.get(e) as i64 - exact.get(e) as i64).unsigned_abs();
                prop_assert!(err <= interval * runs_of(&events, e).max(1));
            }
        }
    }
}
