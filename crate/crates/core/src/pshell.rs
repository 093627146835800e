//! The MMIO shell between host software and the DUT.
//!
//! The host side never blocks: writes to a full FIFO are dropped, reads of an
//! empty FIFO return [`DEAD_BUS`], and both are recorded in a sticky violation
//! log. The DUT side sees ordinary ready/valid FIFOs.
//!
//! Address map (offsets from [`BASE`]):
//!
//! | region | offset |
//! |--------|--------|
//! | output CSR *i* (host writes) | `0x0000 + 4i` |
//! | input CSR *i* (DUT writes) | `0x1000 + 4i` |
//! | host→DUT FIFO *i* data / credits | `0x2000 + 0x10i` / `+4` |
//! | DUT→host FIFO *i* data / occupancy | `0x3000 + 0x10i` / `+4` |
//! | control block | `0x4000` |

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BASE: u32 = 0x4000_0000;
pub const DEAD_BUS: u32 = 0xFFFF_FFFF;

const CSR_OUT_OFF: u32 = 0x0000;
const CSR_IN_OFF: u32 = 0x1000;
const H2D_OFF: u32 = 0x2000;
const D2H_OFF: u32 = 0x3000;
const CTRL_OFF: u32 = 0x4000;
const REGION_SIZE: u32 = 0x1000;
const FIFO_STRIDE: u32 = 0x10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PShellConfig {
    pub num_csrs_out: u32,
    pub num_csrs_in: u32,
    pub num_fifos_h2d: u32,
    pub num_fifos_d2h: u32,
    pub fifo_depth: u32,
    pub data_width: u32,
}

impl Default for PShellConfig {
    fn default() -> Self {
        PShellConfig {
            num_csrs_out: 4,
            num_csrs_in: 4,
            num_fifos_h2d: 1,
            num_fifos_d2h: 1,
            fifo_depth: 8,
            data_width: 32,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PShellError {
    #[error("{region} region needs 0x{needed:x} bytes but only 0x1000 are available")]
    RegionOverlap { region: &'static str, needed: u64 },
    #[error("fifo depth {0} must be a power of two and at least 2")]
    BadDepth(u32),
    #[error("data width {0} unsupported, only 32-bit lanes exist")]
    BadWidth(u32),
}

/// Registers in the control block, by byte offset from `BASE + 0x4000`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ControlReg {
    /// W: 0 = run, 1 = pause.
    RunCtrl = 0x00,
    /// W: n ≥ 1 grants n DUT cycles then re-gates.
    Step = 0x04,
    /// R: bit0 gated, bit1 halted, bit2 paused.
    Status = 0x08,
    CycleLo = 0x0C,
    CycleHi = 0x10,
    ViolCount = 0x14,
    /// W/R: selects the log entry shown by `ViolKind`/`ViolAddr`.
    ViolIndex = 0x18,
    ViolKind = 0x1C,
    ViolAddr = 0x20,
    /// R: bitmask of active gate reasons.
    GateReasons = 0x24,
    TimerReqId = 0x28,
    /// W: arms the hardware timer for `TimerReqId` with this latency.
    TimerLatency = 0x2C,
    /// W: marks the response for the written request id as available.
    TimerDataReady = 0x30,
    HostTickLo = 0x34,
}

impl ControlReg {
    const ALL: [ControlReg; 14] = [
        ControlReg::RunCtrl,
        ControlReg::Step,
        ControlReg::Status,
        ControlReg::CycleLo,
        ControlReg::CycleHi,
        ControlReg::ViolCount,
        ControlReg::ViolIndex,
        ControlReg::ViolKind,
        ControlReg::ViolAddr,
        ControlReg::GateReasons,
        ControlReg::TimerReqId,
        ControlReg::TimerLatency,
        ControlReg::TimerDataReady,
        ControlReg::HostTickLo,
    ];

    fn from_offset(off: u32) -> Option<ControlReg> {
        Self::ALL.iter().copied().find(|r| *r as u32 == off)
    }

    fn host_writable(self) -> bool {
        matches!(
            self,
            ControlReg::RunCtrl
                | ControlReg::Step
                | ControlReg::ViolIndex
                | ControlReg::TimerReqId
                | ControlReg::TimerLatency
                | ControlReg::TimerDataReady
        )
    }

    pub fn addr(self) -> u32 {
        BASE + CTRL_OFF + self as u32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    CsrOut(u32),
    CsrIn(u32),
    H2dData(u32),
    H2dCredits(u32),
    D2hData(u32),
    D2hOccupancy(u32),
    Control(ControlReg),
}

/// Deterministic layout derived from a [`PShellConfig`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AddressMap {
    config: PShellConfig,
}

impl AddressMap {
    pub fn new(config: PShellConfig) -> Result<AddressMap, PShellError> {
        if config.data_width != 32 {
            return Err(PShellError::BadWidth(config.data_width));
        }
        if config.fifo_depth < 2 || !config.fifo_depth.is_power_of_two() {
            return Err(PShellError::BadDepth(config.fifo_depth));
        }
        let regions = [
            ("output CSR", config.num_csrs_out as u64 * 4),
            ("input CSR", config.num_csrs_in as u64 * 4),
            ("host-to-DUT FIFO", config.num_fifos_h2d as u64 * FIFO_STRIDE as u64),
            ("DUT-to-host FIFO", config.num_fifos_d2h as u64 * FIFO_STRIDE as u64),
        ];
        for (region, needed) in regions {
            if needed > REGION_SIZE as u64 {
                return Err(PShellError::RegionOverlap { region, needed });
            }
        }
        Ok(AddressMap { config })
    }

    pub fn config(&self) -> &PShellConfig {
        &self.config
    }

    pub fn csr_out(i: u32) -> u32 {
        BASE + CSR_OUT_OFF + 4 * i
    }
    pub fn csr_in(i: u32) -> u32 {
        BASE + CSR_IN_OFF + 4 * i
    }
    pub fn h2d_data(i: u32) -> u32 {
        BASE + H2D_OFF + FIFO_STRIDE * i
    }
    pub fn h2d_credits(i: u32) -> u32 {
        Self::h2d_data(i) + 4
    }
    pub fn d2h_data(i: u32) -> u32 {
        BASE + D2H_OFF + FIFO_STRIDE * i
    }
    pub fn d2h_occupancy(i: u32) -> u32 {
        Self::d2h_data(i) + 4
    }

    /// Resolves an address; `None` for unmapped or unaligned addresses.
    pub fn decode(&self, addr: u32) -> Option<Region> {
        if addr % 4 != 0 || addr < BASE {
            return None;
        }
        let off = addr - BASE;
        let c = &self.config;
        let within = off % REGION_SIZE;
        match off / REGION_SIZE {
            0 => (within / 4 < c.num_csrs_out).then_some(Region::CsrOut(within / 4)),
            1 => (within / 4 < c.num_csrs_in).then_some(Region::CsrIn(within / 4)),
            2 | 3 => {
                let idx = within / FIFO_STRIDE;
                let port = within % FIFO_STRIDE;
                let h2d = off / REGION_SIZE == 2;
                let n = if h2d { c.num_fifos_h2d } else { c.num_fifos_d2h };
                if idx >= n {
                    return None;
                }
                match (h2d, port) {
                    (true, 0) => Some(Region::H2dData(idx)),
                    (true, 4) => Some(Region::H2dCredits(idx)),
                    (false, 0) => Some(Region::D2hData(idx)),
                    (false, 4) => Some(Region::D2hOccupancy(idx)),
                    _ => None,
                }
            }
            4 => ControlReg::from_offset(within).map(Region::Control),
            _ => None,
        }
    }

    /// Human-readable listing of every mapped address.
    pub fn describe(&self) -> Vec<(u32, String)> {
        let c = &self.config;
        let mut out = Vec::new();
        for i in 0..c.num_csrs_out {
            out.push((Self::csr_out(i), format!("csr_out[{i}]")));
        }
        for i in 0..c.num_csrs_in {
            out.push((Self::csr_in(i), format!("csr_in[{i}]")));
        }
        for i in 0..c.num_fifos_h2d {
            out.push((Self::h2d_data(i), format!("fifo_h2d[{i}].data")));
            out.push((Self::h2d_credits(i), format!("fifo_h2d[{i}].credits")));
        }
        for i in 0..c.num_fifos_d2h {
            out.push((Self::d2h_data(i), format!("fifo_d2h[{i}].data")));
            out.push((Self::d2h_occupancy(i), format!("fifo_d2h[{i}].occupancy")));
        }
        for r in ControlReg::ALL {
            out.push((r.addr(), format!("ctrl.{r:?}")));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    WriteNoCredit = 1,
    ReadEmpty = 2,
    UnmappedAddress = 3,
    ReservedOp = 4,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::WriteNoCredit => "write-no-credit",
            ViolationKind::ReadEmpty => "read-empty",
            ViolationKind::UnmappedAddress => "unmapped-address",
            ViolationKind::ReservedOp => "reserved-op",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MmioViolation {
    pub kind: ViolationKind,
    pub address: u32,
    pub host_tick: u64,
}

impl fmt::Display for MmioViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tick={} kind={} addr=0x{:08x}", self.host_tick, self.kind.as_str(), self.address)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ack {
    Ok,
    Dropped,
    Unmapped,
    Reserved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PushResult {
    Accepted,
    WouldBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    HostToDut,
    DutToHost,
}

/// Semi-blocking FIFO of 32-bit words.
#[derive(Clone, Debug)]
pub struct SbFifo {
    pub direction: Direction,
    depth: usize,
    entries: VecDeque<u32>,
    pushes: u64,
    pops: u64,
}

impl SbFifo {
    fn new(direction: Direction, depth: u32) -> SbFifo {
        SbFifo {
            direction,
            depth: depth as usize,
            entries: VecDeque::with_capacity(depth as usize),
            pushes: 0,
            pops: 0,
        }
    }

    pub fn depth(&self) -> u32 {
        self.depth as u32
    }
    pub fn len(&self) -> u32 {
        self.entries.len() as u32
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn free(&self) -> u32 {
        (self.depth - self.entries.len()) as u32
    }
    pub fn pushes(&self) -> u64 {
        self.pushes
    }
    pub fn pops(&self) -> u64 {
        self.pops
    }
    pub fn entries(&self) -> impl Iterator<Item = &u32> {
        self.entries.iter()
    }

    fn push(&mut self, w: u32) -> bool {
        if self.entries.len() == self.depth {
            return false;
        }
        self.entries.push_back(w);
        self.pushes += 1;
        true
    }

    fn pop(&mut self) -> Option<u32> {
        let w = self.entries.pop_front()?;
        self.pops += 1;
        Some(w)
    }
}

/// Requests decoded from control-block writes, consumed by the kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlCommand {
    Run,
    Pause,
    Step(u32),
    ArmTimer { req_id: u32, latency: u32 },
    DataReady { req_id: u32 },
}

/// Kernel-maintained status mirrored into read-only control registers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ShellStatus {
    pub gated: bool,
    pub halted: bool,
    pub paused: bool,
    pub dut_cycle: u64,
    pub gate_reasons: u32,
}

#[derive(Clone, Debug)]
pub struct PShell {
    map: AddressMap,
    csr_out: Vec<u32>,
    csr_in: Vec<u32>,
    h2d: Vec<SbFifo>,
    d2h: Vec<SbFifo>,
    violations: Vec<MmioViolation>,
    commands: Vec<ControlCommand>,
    run_ctrl: u32,
    step_reg: u32,
    viol_index: u32,
    timer_req_id: u32,
    status: ShellStatus,
    host_tick: u64,
}

impl PShell {
    pub fn new(config: PShellConfig) -> Result<PShell, PShellError> {
        let map = AddressMap::new(config)?;
        Ok(PShell {
            map,
            csr_out: vec![0; config.num_csrs_out as usize],
            csr_in: vec![0; config.num_csrs_in as usize],
            h2d: (0..config.num_fifos_h2d)
                .map(|_| SbFifo::new(Direction::HostToDut, config.fifo_depth))
                .collect(),
            d2h: (0..config.num_fifos_d2h)
                .map(|_| SbFifo::new(Direction::DutToHost, config.fifo_depth))
                .collect(),
            violations: Vec::new(),
            commands: Vec::new(),
            run_ctrl: 0,
            step_reg: 0,
            viol_index: 0,
            timer_req_id: 0,
            status: ShellStatus::default(),
            host_tick: 0,
        })
    }

    pub fn map(&self) -> &AddressMap {
        &self.map
    }

    fn violate(&mut self, kind: ViolationKind, address: u32) {
        self.violations.push(MmioViolation { kind, address, host_tick: self.host_tick });
    }

    pub fn mmio_write(&mut self, addr: u32, data: u32) -> Ack {
        let Some(region) = self.map.decode(addr) else {
            self.violate(ViolationKind::UnmappedAddress, addr);
            return Ack::Unmapped;
        };
        match region {
            Region::CsrOut(i) => {
                self.csr_out[i as usize] = data;
                Ack::Ok
            }
            Region::H2dData(i) => {
                if self.h2d[i as usize].push(data) {
                    Ack::Ok
                } else {
                    self.violate(ViolationKind::WriteNoCredit, addr);
                    Ack::Dropped
                }
            }
            Region::Control(reg) if reg.host_writable() => {
                self.write_control(reg, data);
                Ack::Ok
            }
            _ => {
                self.violate(ViolationKind::ReservedOp, addr);
                Ack::Reserved
            }
        }
    }

    fn write_control(&mut self, reg: ControlReg, data: u32) {
        match reg {
            ControlReg::RunCtrl => {
                self.run_ctrl = data;
                self.commands.push(if data & 1 == 1 { ControlCommand::Pause } else { ControlCommand::Run });
            }
            ControlReg::Step => {
                self.step_reg = data;
                if data > 0 {
                    self.commands.push(ControlCommand::Step(data));
                }
            }
            ControlReg::ViolIndex => self.viol_index = data,
            ControlReg::TimerReqId => self.timer_req_id = data,
            ControlReg::TimerLatency => self
                .commands
                .push(ControlCommand::ArmTimer { req_id: self.timer_req_id, latency: data }),
            ControlReg::TimerDataReady => self.commands.push(ControlCommand::DataReady { req_id: data }),
            _ => unreachable!("read-only control register"),
        }
    }

    pub fn mmio_read(&mut self, addr: u32) -> u32 {
        let Some(region) = self.map.decode(addr) else {
            self.violate(ViolationKind::UnmappedAddress, addr);
            return DEAD_BUS;
        };
        match region {
            Region::CsrOut(i) => self.csr_out[i as usize],
            Region::CsrIn(i) => self.csr_in[i as usize],
            Region::H2dCredits(i) => self.h2d[i as usize].free(),
            Region::D2hOccupancy(i) => self.d2h[i as usize].len(),
            Region::D2hData(i) => match self.d2h[i as usize].pop() {
                Some(w) => w,
                None => {
                    self.violate(ViolationKind::ReadEmpty, addr);
                    DEAD_BUS
                }
            },
            Region::H2dData(_) => {
                self.violate(ViolationKind::ReservedOp, addr);
                DEAD_BUS
            }
            Region::Control(reg) => self.read_control(reg),
        }
    }

    fn read_control(&self, reg: ControlReg) -> u32 {
        let s = &self.status;
        let entry = self.violations.get(self.viol_index as usize);
        match reg {
            ControlReg::RunCtrl => self.run_ctrl,
            ControlReg::Step => self.step_reg,
            ControlReg::Status => s.gated as u32 | (s.halted as u32) << 1 | (s.paused as u32) << 2,
            ControlReg::CycleLo => s.dut_cycle as u32,
            ControlReg::CycleHi => (s.dut_cycle >> 32) as u32,
            ControlReg::ViolCount => self.violations.len() as u32,
            ControlReg::ViolIndex => self.viol_index,
            ControlReg::ViolKind => entry.map_or(0, |v| v.kind as u32),
            ControlReg::ViolAddr => entry.map_or(0, |v| v.address),
            ControlReg::GateReasons => s.gate_reasons,
            ControlReg::TimerReqId => self.timer_req_id,
            ControlReg::TimerLatency | ControlReg::TimerDataReady => 0,
            ControlReg::HostTickLo => self.host_tick as u32,
        }
    }

    // DUT side.

    pub fn dut_fifo_push(&mut self, idx: usize, word: u32) -> PushResult {
        if self.d2h[idx].push(word) {
            PushResult::Accepted
        } else {
            PushResult::WouldBlock
        }
    }

    pub fn dut_fifo_pop(&mut self, idx: usize) -> Option<u32> {
        self.h2d[idx].pop()
    }

    pub fn dut_fifo_peek(&self, idx: usize) -> Option<u32> {
        self.h2d[idx].entries.front().copied()
    }

    pub fn d2h_free(&self, idx: usize) -> u32 {
        self.d2h[idx].free()
    }

    pub fn csr_out(&self, i: usize) -> u32 {
        self.csr_out[i]
    }

    pub fn set_csr_in(&mut self, i: usize, value: u32) {
        self.csr_in[i] = value;
    }

    // Kernel side.

    pub fn set_host_tick(&mut self, tick: u64) {
        self.host_tick = tick;
    }

    pub fn set_status(&mut self, status: ShellStatus) {
        self.status = status;
    }

    pub fn take_commands(&mut self) -> Vec<ControlCommand> {
        std::mem::take(&mut self.commands)
    }

    pub fn violations(&self) -> &[MmioViolation] {
        &self.violations
    }

    pub fn violation_log(&self) -> String {
        self.violations.iter().map(|v| format!("{v}\n")).collect()
    }

    pub fn h2d(&self, i: usize) -> &SbFifo {
        &self.h2d[i]
    }

    pub fn d2h(&self, i: usize) -> &SbFifo {
        &self.d2h[i]
    }
}

/// Host-master word access to a P-Shell, direct or over a transport.
pub trait Mmio {
    type Error: std::error::Error + Send + Sync + 'static;
    fn write32(&mut self, addr: u32, data: u32) -> Result<(), Self::Error>;
    fn read32(&mut self, addr: u32) -> Result<u32, Self::Error>;
}

impl Mmio for PShell {
    type Error = std::convert::Infallible;

    fn write32(&mut self, addr: u32, data: u32) -> Result<(), Self::Error> {
        self.mmio_write(addr, data);
        Ok(())
    }

    fn read32(&mut self, addr: u32) -> Result<u32, Self::Error> {
        Ok(self.mmio_read(addr))
    }
}
