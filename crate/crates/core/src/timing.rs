//! Host-computed I/O latencies enforced by DUT-domain hardware timers.
//!
//! The host turns each request into a latency `L` (in DUT cycles). The timer
//! then holds early data until exactly `issue + L`, and gates the DUT clock if
//! the data is late, so the DUT always observes `L`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IoKind {
    MemRead,
    MemWrite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoRequest {
    pub req_id: u32,
    pub kind: IoKind,
    pub address: u32,
    pub data: u32,
    pub issue_cycle: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DramModelParams {
    pub base_latency: u32,
    pub bank_count: u32,
    pub bank_busy: u32,
    pub line_bytes: u32,
}

impl Default for DramModelParams {
    fn default() -> Self {
        DramModelParams { base_latency: 20, bank_count: 8, bank_busy: 10, line_bytes: 64 }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimingError {
    #[error("base latency must be at least 1")]
    ZeroLatency,
    #[error("{what} must be a power of two, got {value}")]
    NotPowerOfTwo { what: &'static str, value: u32 },
    #[error("request {0} delivered twice")]
    DoubleDelivery(u32),
    #[error("request {0} reached its deadline without data")]
    MissingData(u32),
}

impl DramModelParams {
    pub fn validate(&self) -> Result<(), TimingError> {
        if self.base_latency == 0 {
            return Err(TimingError::ZeroLatency);
        }
        for (what, value) in [("bank_count", self.bank_count), ("line_bytes", self.line_bytes)] {
            if !value.is_power_of_two() {
                return Err(TimingError::NotPowerOfTwo { what, value });
            }
        }
        Ok(())
    }

    /// Bank index from the address bits just above the line offset.
    pub fn bank_of(&self, address: u32) -> usize {
        ((address >> self.line_bytes.trailing_zeros()) & (self.bank_count - 1)) as usize
    }
}

/// Closed-page DRAM with a per-bank busy window.
#[derive(Clone, Debug)]
pub struct DramModel {
    params: DramModelParams,
    bank_free: Vec<u64>,
}

impl DramModel {
    pub fn new(params: DramModelParams) -> Result<DramModel, TimingError> {
        params.validate()?;
        Ok(DramModel { params, bank_free: vec![0; params.bank_count as usize] })
    }

    pub fn params(&self) -> &DramModelParams {
        &self.params
    }

    /// Latency for `req`; updates the bank occupancy.
    pub fn service(&mut self, req: &IoRequest) -> u32 {
        let bank = self.params.bank_of(req.address);
        let wait = self.bank_free[bank].saturating_sub(req.issue_cycle);
        self.bank_free[bank] = req.issue_cycle + wait + self.params.bank_busy as u64;
        (self.params.base_latency as u64 + wait) as u32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimerPoll {
    /// The deadline is not in the upcoming cycle.
    Held,
    /// The upcoming cycle is the deadline and data is present.
    Deliver,
    /// The upcoming cycle is the deadline but data has not arrived.
    GateNeeded,
}

/// One outstanding request's timer. `elapsed` counts DUT cycles after issue.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HardwareTimer {
    pub req_id: u32,
    pub programmed_latency: u32,
    pub elapsed: u32,
    pub data_ready: bool,
    pub delivered: bool,
}

impl HardwareTimer {
    pub fn new(req_id: u32, latency: u32) -> HardwareTimer {
        HardwareTimer {
            req_id,
            programmed_latency: latency.max(1),
            elapsed: 0,
            data_ready: false,
            delivered: false,
        }
    }

    /// What the upcoming DUT cycle would do with this timer.
    pub fn try_deliver(&self) -> TimerPoll {
        if self.delivered || self.elapsed + 1 < self.programmed_latency {
            TimerPoll::Held
        } else if self.data_ready {
            TimerPoll::Deliver
        } else {
            TimerPoll::GateNeeded
        }
    }

    /// Advances on a running DUT cycle. Returns `Ok(true)` in the cycle the
    /// response becomes visible.
    pub fn timer_step(&mut self) -> Result<bool, TimingError> {
        if self.delivered {
            return Err(TimingError::DoubleDelivery(self.req_id));
        }
        self.elapsed += 1;
        if self.elapsed < self.programmed_latency {
            return Ok(false);
        }
        if !self.data_ready {
            return Err(TimingError::MissingData(self.req_id));
        }
        self.delivered = true;
        Ok(true)
    }
}

/// One line of the per-request timing trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub req_id: u32,
    pub address: u32,
    pub issue: u64,
    pub latency: u32,
    pub deliver: u64,
}

impl fmt::Display for TimingRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "req={} addr=0x{:08x} issue={} L={} deliver={}",
            self.req_id, self.address, self.issue, self.latency, self.deliver
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(req_id: u32, address: u32, issue_cycle: u64) -> IoRequest {
        IoRequest { req_id, kind: IoKind::MemRead, address, data: 0, issue_cycle }
    }

    /// Cycle-by-cycle replay of bank occupancy: a request starts on the first
    /// cycle at or after issue where its bank is idle and holds it for
    /// `bank_busy` cycles.
    fn replay(params: DramModelParams, reqs: &[IoRequest]) -> Vec<u32> {
        let mut busy_until: Vec<Vec<u64>> = vec![Vec::new(); params.bank_count as usize];
        reqs.iter()
            .map(|r| {
                let b = params.bank_of(r.address);
                let mut start = r.issue_cycle;
                while busy_until[b].iter().any(|&end| start < end) {
                    start += 1;
                }
                busy_until[b].push(start + params.bank_busy as u64);
                params.base_latency + (start - r.issue_cycle) as u32
            })
            .collect()
    }

    #[test]
    fn idle_bank_is_base_latency() {
        let mut m = DramModel::new(DramModelParams::default()).unwrap();
        assert_eq!(m.service(&read(0, 0x1000_0000, 5)), 20);
    }

    #[test]
    fn same_bank_back_to_back() {
        let p = DramModelParams::default();
        let reqs = [read(0, 0x1000_0000, 100), read(1, 0x1000_0000, 101)];
        assert_eq!(replay(p, &reqs), vec![20, 29]);
        let mut m = DramModel::new(p).unwrap();
        assert_eq!(reqs.iter().map(|r| m.service(r)).collect::<Vec<_>>(), vec![20, 29]);
    }

    #[test]
    fn different_banks_are_independent() {
        let p = DramModelParams::default();
        let mut m = DramModel::new(p).unwrap();
        assert_ne!(p.bank_of(0x1000_0000), p.bank_of(0x1000_0040));
        assert_eq!(m.service(&read(0, 0x1000_0000, 100)), 20);
        assert_eq!(m.service(&read(1, 0x1000_0040, 101)), 20);
    }

    #[test]
    fn recurrence_matches_replay_on_random_streams() {
        use rand::{Rng, SeedableRng};
        let p = DramModelParams { base_latency: 7, bank_count: 4, bank_busy: 13, line_bytes: 32 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut cycle = 0u64;
        let reqs: Vec<IoRequest> = (0..2000)
            .map(|k| {
                cycle += rng.gen_range(0..6);
                read(k, rng.gen_range(0..512u32) * 4, cycle)
            })
            .collect();
        let mut m = DramModel::new(p).unwrap();
        let got: Vec<u32> = reqs.iter().map(|r| m.service(r)).collect();
        assert_eq!(got, replay(p, &reqs));
    }

    #[test]
    fn invalid_params() {
        let bad = DramModelParams { base_latency: 0, ..Default::default() };
        assert_eq!(DramModel::new(bad).err(), Some(TimingError::ZeroLatency));
        let bad = DramModelParams { bank_count: 6, ..Default::default() };
        assert!(matches!(DramModel::new(bad), Err(TimingError::NotPowerOfTwo { .. })));
    }

    #[test]
    fn early_data_is_held_until_deadline() {
        let mut t = HardwareTimer::new(1, 20);
        for cycle in 1..=19 {
            if cycle == 5 {
                t.data_ready = true;
            }
            assert_eq!(t.try_deliver(), TimerPoll::Held);
            assert!(!t.timer_step().unwrap());
        }
        assert_eq!(t.try_deliver(), TimerPoll::Deliver);
        assert!(t.timer_step().unwrap());
        assert_eq!(t.elapsed, 20);
        assert_eq!(t.timer_step(), Err(TimingError::DoubleDelivery(1)));
    }

    #[test]
    fn late_data_needs_gate() {
        let mut t = HardwareTimer::new(2, 3);
        t.timer_step().unwrap();
        t.timer_step().unwrap();
        assert_eq!(t.try_deliver(), TimerPoll::GateNeeded);
        t.data_ready = true;
        assert_eq!(t.try_deliver(), TimerPoll::Deliver);
    }

    #[test]
    fn trace_line() {
        let r = TimingRecord { req_id: 3, address: 0x1000_0040, issue: 100, latency: 20, deliver: 120 };
        assert_eq!(r.to_string(), "req=3 addr=0x10000040 issue=100 L=20 deliver=120");
    }
}
