//! Host-side agent. It only talks to the DUT through P-Shell MMIO, so the
//! same code runs in-process or across a wire bridge.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{CommitRecord, InputScript, EOF};
use crate::golden::Lockstep;
use crate::image::ProgramImage;
use crate::profiler::{Sample, SampleDecoder};
use crate::pshell::{AddressMap, ControlReg, Mmio};
use crate::timing::{DramModel, DramModelParams, IoKind, IoRequest, TimingError, TimingRecord};

// DUT→host FIFO lanes. A multi-word record occupies one word in each lane
// of its group, so a record is pushed atomically.
pub const LANE_CHAR: u32 = 0;
pub const LANE_SAMPLE: u32 = 1;
pub const SAMPLE_WORDS: u32 = 2;
pub const LANE_COMMIT: u32 = 3;
pub const COMMIT_WORDS: u32 = 4;
pub const LANE_MEMREQ: u32 = 7;
pub const MEMREQ_WORDS: u32 = 3;
pub const D2H_LANES: u32 = 10;
/// Host→DUT lane carrying getchar bytes.
pub const H2D_INPUT: u32 = 0;

const WRITE_FLAG: u32 = 1 << 31;

/// Memory-request lane words: `{req_id | write << 31, address, issue_lo}`.
pub fn pack_request(req: &IoRequest) -> [u32; 3] {
    let flag = if req.kind == IoKind::MemWrite { WRITE_FLAG } else { 0 };
    [req.req_id & !WRITE_FLAG | flag, req.address, req.issue_cycle as u32]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HostJob {
    Idle,
    Sample,
    Commit,
    Char,
    TimerService,
    Input,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VpsConfig {
    pub dram: DramModelParams,
    pub seed: u64,
    /// Data for a serviced request arrives 0..=this many host ticks after
    /// its latency is programmed.
    pub data_delay_max: u32,
    pub lockstep: bool,
    pub record_commits: bool,
}

/// Input bytes with the cycle they become visible, followed by EOF.
pub fn input_queue(script: &InputScript) -> Vec<(u64, u32)> {
    let mut q: Vec<(u64, u32)> = script.entries.iter().map(|&(d, b)| (d, b as u32)).collect();
    let last = q.last().map_or(0, |e| e.0);
    q.push((last, EOF));
    q
}

pub struct Vps {
    dram: DramModel,
    rng: ChaCha8Rng,
    data_delay_max: u32,
    lockstep: Option<Lockstep>,
    decoder: SampleDecoder,
    pub samples: Vec<Sample>,
    pub output: Vec<u8>,
    pub commits: Vec<CommitRecord>,
    record_commits: bool,
    input: Vec<(u64, u32)>,
    input_pos: usize,
    pending_ready: VecDeque<(u64, u32)>,
    pub timing: Vec<TimingRecord>,
}

impl Vps {
    pub fn new(config: VpsConfig, image: &ProgramImage, script: &InputScript) -> Result<Vps, TimingError> {
        Ok(Vps {
            dram: DramModel::new(config.dram)?,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            data_delay_max: config.data_delay_max,
            lockstep: config.lockstep.then(|| Lockstep::new(image, script)),
            decoder: SampleDecoder::default(),
            samples: Vec::new(),
            output: Vec::new(),
            commits: Vec::new(),
            record_commits: config.record_commits,
            input: input_queue(script),
            input_pos: 0,
            pending_ready: VecDeque::new(),
            timing: Vec::new(),
        })
    }

    pub fn lockstep(&self) -> Option<&Lockstep> {
        self.lockstep.as_ref()
    }

    pub fn lockstep_mut(&mut self) -> Option<&mut Lockstep> {
        self.lockstep.as_mut()
    }

    pub fn diverged(&self) -> bool {
        self.lockstep.as_ref().is_some_and(|l| l.divergence().is_some())
    }

    /// Data-ready notifications still in flight.
    pub fn has_pending_events(&self) -> bool {
        !self.pending_ready.is_empty()
    }

    pub fn jitter(&mut self, max: u32) -> u32 {
        if max == 0 {
            0
        } else {
            self.rng.gen_range(0..=max)
        }
    }

    /// Signals data arrival for every serviced request whose delay elapsed.
    pub fn deliver_due<M: Mmio>(&mut self, now: u64, m: &mut M) -> Result<(), M::Error> {
        while let Some(&(due, req_id)) = self.pending_ready.front() {
            if due > now {
                break;
            }
            m.write32(ControlReg::TimerDataReady.addr(), req_id)?;
            self.pending_ready.pop_front();
        }
        Ok(())
    }

    fn dut_cycle<M: Mmio>(m: &mut M) -> Result<u64, M::Error> {
        loop {
            let hi = m.read32(ControlReg::CycleHi.addr())?;
            let lo = m.read32(ControlReg::CycleLo.addr())?;
            if m.read32(ControlReg::CycleHi.addr())? == hi {
                return Ok((hi as u64) << 32 | lo as u64);
            }
        }
    }

    fn read_record<M: Mmio, const N: usize>(m: &mut M, first_lane: u32) -> Result<[u32; N], M::Error> {
        let mut w = [0u32; N];
        for (k, slot) in w.iter_mut().enumerate() {
            *slot = m.read32(AddressMap::d2h_data(first_lane + k as u32))?;
        }
        Ok(w)
    }

    /// Performs at most one unit of host work, in fixed priority order.
    pub fn poll<M: Mmio>(&mut self, now: u64, m: &mut M) -> Result<HostJob, M::Error> {
        if m.read32(AddressMap::d2h_occupancy(LANE_SAMPLE))? > 0 {
            let w = Self::read_record::<M, 2>(m, LANE_SAMPLE)?;
            if let Some(s) = self.decoder.decode(w) {
                self.samples.push(s);
            }
            return Ok(HostJob::Sample);
        }
        if m.read32(AddressMap::d2h_occupancy(LANE_COMMIT))? > 0 {
            let rec = CommitRecord::unpack(Self::read_record::<M, 4>(m, LANE_COMMIT)?);
            if self.record_commits {
                self.commits.push(rec);
            }
            if let Some(ls) = &mut self.lockstep {
                let _ = ls.check(&rec);
            }
            return Ok(HostJob::Commit);
        }
        if m.read32(AddressMap::d2h_occupancy(LANE_CHAR))? > 0 {
            let c = m.read32(AddressMap::d2h_data(LANE_CHAR))?;
            self.output.push(c as u8);
            return Ok(HostJob::Char);
        }
        if m.read32(AddressMap::d2h_occupancy(LANE_MEMREQ))? > 0 {
            let [tagged_id, address, issue_lo] = Self::read_record::<M, 3>(m, LANE_MEMREQ)?;
            let now_cycle = Self::dut_cycle(m)?;
            let issue_cycle = now_cycle - (now_cycle as u32).wrapping_sub(issue_lo) as u64;
            let req_id = tagged_id & !WRITE_FLAG;
            let kind = if tagged_id & WRITE_FLAG != 0 { IoKind::MemWrite } else { IoKind::MemRead };
            let req = IoRequest { req_id, kind, address, data: 0, issue_cycle };
            let latency = self.dram.service(&req);
            if kind == IoKind::MemWrite {
                return Ok(HostJob::TimerService);
            }
            m.write32(ControlReg::TimerReqId.addr(), req_id)?;
            m.write32(ControlReg::TimerLatency.addr(), latency)?;
            self.timing.push(TimingRecord {
                req_id,
                address,
                issue: issue_cycle,
                latency,
                deliver: issue_cycle + latency as u64,
            });
            match self.jitter(self.data_delay_max) {
                0 => m.write32(ControlReg::TimerDataReady.addr(), req_id)?,
                d => self.pending_ready.push_back((now + d as u64, req_id)),
            }
            return Ok(HostJob::TimerService);
        }
        if let Some(&(due, word)) = self.input.get(self.input_pos) {
            if m.read32(AddressMap::h2d_credits(H2D_INPUT))? > 0 && due <= Self::dut_cycle(m)? + 1 {
                m.write32(AddressMap::h2d_data(H2D_INPUT), word)?;
                self.input_pos += 1;
                return Ok(HostJob::Input);
            }
        }
        Ok(HostJob::Idle)
    }
}
