//! Five-stage in-order pipeline (IF, ISS, EX1, EX2, WB) with an optional
//! catch-up ALU in EX2.
//!
//! Timing rules:
//!
//! * The early ALU executes in EX1 and bypasses EX2→EX1, so dependent integer
//!   ops issue back to back.
//! * Data-cache hits take two cycles (EX1 address, EX2 data), so a consumer
//!   directly behind a load waits one bubble in ISS. With the catch-up ALU a
//!   dependent integer or branch op instead executes in EX2 with no bubble.
//! * Branches resolve in EX1 and flush IF/ISS on a mispredict (2 bubbles).
//!   Catch-up branches resolve in EX2 and flush IF/ISS/EX1 (3 bubbles).
//! * Loads to the timed region are serviced by the host timing model. They
//!   retire in order; the destination register is written when the hardware
//!   timer delivers, and only dependents wait.
//! * Syscalls execute at WB, so they are never speculative.
//!
//! Every cycle is accounted to exactly one event: the commit at WB, or the
//! stall class carried by the bubble that reached WB.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{
    CommitRecord, Memory, Syscall, EOF, SYS_EXIT, SYS_EXIT_RESET, SYS_GETCHAR, SYS_SENDCHAR,
};
use crate::image::ProgramImage;
use crate::isa::{alu, branch_taken, decode, Instr, Op, OpClass};
use crate::pshell::{PShell, PushResult};
use crate::timing::{IoKind, IoRequest};

pub const DCACHE_HIT_LATENCY: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StallClass {
    LoadArith,
    LoadControl,
    CatchupDep,
    BranchMispredict,
    CatchupMispredictFlush,
    IcacheMiss,
    DcacheMiss,
    FrontendEmpty,
    SyscallWait,
    RawOther,
}

impl StallClass {
    pub const ALL: [StallClass; 10] = [
        StallClass::LoadArith,
        StallClass::LoadControl,
        StallClass::CatchupDep,
        StallClass::BranchMispredict,
        StallClass::CatchupMispredictFlush,
        StallClass::IcacheMiss,
        StallClass::DcacheMiss,
        StallClass::FrontendEmpty,
        StallClass::SyscallWait,
        StallClass::RawOther,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StallClass::LoadArith => "load-arith",
            StallClass::LoadControl => "load-control",
            StallClass::CatchupDep => "catchup-dep",
            StallClass::BranchMispredict => "branch-mispredict",
            StallClass::CatchupMispredictFlush => "catchup-mispredict-flush",
            StallClass::IcacheMiss => "icache-miss",
            StallClass::DcacheMiss => "dcache-miss",
            StallClass::FrontendEmpty => "frontend-empty",
            StallClass::SyscallWait => "syscall-wait",
            StallClass::RawOther => "raw-other",
        }
    }

    pub fn is_load_use(self) -> bool {
        matches!(self, StallClass::LoadArith | StallClass::LoadControl)
    }

    pub fn is_mispredict(self) -> bool {
        matches!(self, StallClass::BranchMispredict | StallClass::CatchupMispredictFlush)
    }
}

/// What a DUT cycle was spent on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Event {
    Commit,
    Stall(StallClass),
}

impl Event {
    pub const ALL: [Event; 11] = [
        Event::Commit,
        Event::Stall(StallClass::LoadArith),
        Event::Stall(StallClass::LoadControl),
        Event::Stall(StallClass::CatchupDep),
        Event::Stall(StallClass::BranchMispredict),
        Event::Stall(StallClass::CatchupMispredictFlush),
        Event::Stall(StallClass::IcacheMiss),
        Event::Stall(StallClass::DcacheMiss),
        Event::Stall(StallClass::FrontendEmpty),
        Event::Stall(StallClass::SyscallWait),
        Event::Stall(StallClass::RawOther),
    ];

    /// 4-bit code: 0 for commit, 1..=10 for stall classes.
    pub fn code(self) -> u8 {
        Event::ALL.iter().position(|e| *e == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Event> {
        Event::ALL.get(code as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Event::Commit => "commit",
            Event::Stall(s) => s.as_str(),
        }
    }

    pub fn parse(s: &str) -> Option<Event> {
        Event::ALL.iter().copied().find(|e| e.as_str() == s)
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BranchPredictor {
    StaticNotTaken,
    /// Bimodal 2-bit counters; taken predictions need a BTB hit.
    TwoBit { entries: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ICache {
    Perfect,
    /// First touch of each line costs `latency` cycles.
    ColdMiss { latency: u32, line_bytes: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DCache {
    /// Every load hits.
    PerfectHit,
    /// Loads at or above `base` go to the host timing model.
    Timed { base: u32 },
}

/// Deliberately broken microarchitecture variants used to exercise lockstep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutant {
    /// ADD computes a difference and SUB a sum.
    AddSubSwap,
    /// The EX2→EX1 bypass for rs2 is ignored.
    DroppedBypass,
    /// BNE branches when the operands are equal.
    BranchPolarity,
    /// JAL lands one instruction past its target.
    JalOffBy4,
    /// Loads do not see a store that is one stage ahead of them.
    StaleLoad,
}

impl Mutant {
    pub const ALL: [Mutant; 5] = [
        Mutant::AddSubSwap,
        Mutant::DroppedBypass,
        Mutant::BranchPolarity,
        Mutant::JalOffBy4,
        Mutant::StaleLoad,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub catchup_enabled: bool,
    pub branch_predictor: BranchPredictor,
    pub btb_size: u32,
    pub icache: ICache,
    pub dcache: DCache,
    pub mutant: Option<Mutant>,
}

pub const DEFAULT_DRAM_BASE: u32 = 0x1000_0000;

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            catchup_enabled: false,
            branch_predictor: BranchPredictor::TwoBit { entries: 64 },
            btb_size: 64,
            icache: ICache::Perfect,
            dcache: DCache::Timed { base: DEFAULT_DRAM_BASE },
            mutant: None,
        }
    }
}

/// Mux selects instrumented for toggle coverage, in id order.
pub const COVERPOINTS: [&str; 13] = [
    "ex1_rs1_bypass_sel",
    "ex1_rs2_bypass_sel",
    "iss_catchup_dispatch_sel",
    "iss_stall_sel",
    "ex1_branch_taken_sel",
    "ex2_branch_taken_sel",
    "ex1_redirect_sel",
    "ex2_redirect_sel",
    "ex1_dmem_timed_sel",
    "wb_load_data_sel",
    "if_predict_taken_sel",
    "wb_syscall_dir_sel",
    "wb_getchar_wait_sel",
];

#[derive(Clone, Copy, Debug)]
enum Cp {
    Rs1Bypass = 0,
    Rs2Bypass,
    CatchupDispatch,
    IssStall,
    Ex1Taken,
    Ex2Taken,
    Ex1Redirect,
    Ex2Redirect,
    DmemTimed,
    WbLoad,
    PredictTaken,
    SyscallDir,
    GetcharWait,
}

/// Select values observed during one cycle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CoverObs {
    pub seen0: u64,
    pub seen1: u64,
}

impl CoverObs {
    fn observe(&mut self, cp: Cp, value: bool) {
        let bit = 1u64 << cp as u32;
        if value {
            self.seen1 |= bit;
        } else {
            self.seen0 |= bit;
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum DutError {
    #[error("cycle {cycle}: illegal instruction 0x{word:08x} at pc 0x{pc:08x}")]
    Illegal { cycle: u64, pc: u32, word: u32 },
    #[error("cycle {cycle}: misaligned access to 0x{addr:08x} at pc 0x{pc:08x}")]
    Misaligned { cycle: u64, pc: u32, addr: u32 },
    #[error("cycle {cycle}: unknown syscall {num} at pc 0x{pc:08x}")]
    BadSyscall { cycle: u64, pc: u32, num: u32 },
    #[error("cycle {cycle}: output FIFO full at commit of pc 0x{pc:08x}")]
    OutputOverflow { cycle: u64, pc: u32 },
    #[error("cycle {cycle}: pipeline invariant violated at pc 0x{pc:08x}: {what}")]
    Internal { cycle: u64, pc: u32, what: String },
    #[error("DUT is halted")]
    Halted,
}

/// DUT-side syscall plumbing.
pub trait DutIo {
    fn input_peek(&self) -> Option<u32>;
    fn input_pop(&mut self);
    fn output_push(&mut self, byte: u8) -> PushResult;
}

/// Syscall FIFOs on a P-Shell: host→DUT 0 for input, DUT→host 0 for output.
pub struct ShellIo<'a>(pub &'a mut PShell);

impl DutIo for ShellIo<'_> {
    fn input_peek(&self) -> Option<u32> {
        self.0.dut_fifo_peek(0)
    }
    fn input_pop(&mut self) {
        self.0.dut_fifo_pop(0);
    }
    fn output_push(&mut self, byte: u8) -> PushResult {
        self.0.dut_fifo_push(0, byte as u32)
    }
}

/// In-memory syscall endpoint for standalone runs.
#[derive(Clone, Debug, Default)]
pub struct BufferIo {
    pub input: std::collections::VecDeque<u32>,
    pub output: Vec<u8>,
}

impl BufferIo {
    pub fn with_input(bytes: &[u8]) -> BufferIo {
        let mut input: std::collections::VecDeque<u32> = bytes.iter().map(|&b| b as u32).collect();
        input.push_back(EOF);
        BufferIo { input, output: Vec::new() }
    }
}

impl DutIo for BufferIo {
    fn input_peek(&self) -> Option<u32> {
        self.input.front().copied()
    }
    fn input_pop(&mut self) {
        self.input.pop_front();
    }
    fn output_push(&mut self, byte: u8) -> PushResult {
        self.output.push(byte);
        PushResult::Accepted
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WbPreview {
    Bubble,
    Commit { sendchar: bool },
    /// getchar with no input: the cycle will be a syscall-wait stall.
    Blocked,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CycleOutput {
    pub cycle: u64,
    pub committed: Option<CommitRecord>,
    pub stall: Option<StallClass>,
    pub sample_pc: u32,
    pub mem_req: Option<IoRequest>,
    pub delivered: Option<u32>,
    pub syscall: Option<Syscall>,
    pub cover: CoverObs,
}

impl CycleOutput {
    pub fn event(&self) -> Event {
        match self.stall {
            Some(s) => Event::Stall(s),
            None => Event::Commit,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Uop {
    pc: u32,
    instr: Instr,
    pred_next: u32,
    catchup: bool,
    result: Option<u32>,
    addr: u32,
    store_data: u32,
    miss: bool,
    misaligned: bool,
    /// (a7, a0) captured in EX1.
    sys_args: Option<(u32, u32)>,
}

impl Uop {
    fn dest(&self) -> Option<u8> {
        match self.instr.op {
            Op::Ecall if self.is_getchar() => Some(10),
            _ => self.instr.dest(),
        }
    }

    fn is_getchar(&self) -> bool {
        self.instr.op == Op::Ecall && matches!(self.sys_args, Some((SYS_GETCHAR, _)))
    }

    fn is_load(&self) -> bool {
        self.instr.op == Op::Lw
    }
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Bubble { class: StallClass, pc: u32 },
    Op(Uop),
}

impl Slot {
    fn op(&self) -> Option<&Uop> {
        match self {
            Slot::Op(u) => Some(u),
            Slot::Bubble { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct OutstandingMiss {
    req_id: u32,
    pc: u32,
    rd: u8,
    value: u32,
    issue: u64,
    deliver_at: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Readiness {
    /// Consumable by an op entering EX1 next cycle.
    Early,
    /// Consumable by a catch-up op (EX2 one cycle later).
    CatchUp,
    NotYet,
}

struct SourceCheck {
    readiness: Readiness,
    /// Stall class if the consumer has to wait.
    class: StallClass,
    producer_pc: u32,
}

#[derive(Clone, Debug)]
struct Predictor {
    kind: BranchPredictor,
    counters: Vec<u8>,
    btb: Vec<Option<(u32, u32)>>,
}

impl Predictor {
    fn new(kind: BranchPredictor, btb_size: u32) -> Predictor {
        let n = match kind {
            BranchPredictor::StaticNotTaken => 0,
            BranchPredictor::TwoBit { entries } => entries.max(1) as usize,
        };
        Predictor { kind, counters: vec![1; n], btb: vec![None; btb_size.max(1) as usize] }
    }

    fn btb_lookup(&self, pc: u32) -> Option<u32> {
        match self.btb[(pc as usize >> 2) % self.btb.len()] {
            Some((tag, target)) if tag == pc => Some(target),
            _ => None,
        }
    }

    fn predict(&self, pc: u32, instr: &Instr) -> u32 {
        let fallthrough = pc.wrapping_add(4);
        if self.kind == BranchPredictor::StaticNotTaken {
            return fallthrough;
        }
        match instr.op.class() {
            OpClass::Branch => {
                let c = self.counters[(pc as usize >> 2) % self.counters.len()];
                match self.btb_lookup(pc) {
                    Some(t) if c >= 2 => t,
                    _ => fallthrough,
                }
            }
            OpClass::Jump => self.btb_lookup(pc).unwrap_or(fallthrough),
            _ => fallthrough,
        }
    }

    fn train(&mut self, pc: u32, instr: &Instr, taken: bool, target: u32) {
        if self.kind == BranchPredictor::StaticNotTaken {
            return;
        }
        if instr.op.class() == OpClass::Branch {
            let n = self.counters.len();
            let c = &mut self.counters[(pc as usize >> 2) % n];
            *c = if taken { (*c + 1).min(3) } else { c.saturating_sub(1) };
        }
        if taken {
            let n = self.btb.len();
            self.btb[(pc as usize >> 2) % n] = Some((pc, target));
        }
    }
}

#[derive(Clone, Debug)]
pub struct Pipeline {
    config: PipelineConfig,
    regs: [u32; 32],
    mem: Memory,
    if_slot: Slot,
    iss: Slot,
    ex1: Slot,
    ex2: Slot,
    wb: Slot,
    fetch_pc: u32,
    predictor: Predictor,
    icache_lines: HashSet<u32>,
    icache_fill: Option<(u32, u64)>,
    miss: Option<OutstandingMiss>,
    next_req_id: u32,
    cycle: u64,
    halted: bool,
    exit_code: u32,
    cover_seen0: u64,
    cover_seen1: u64,
    latency_floor: u32,
}

impl Pipeline {
    pub fn new(image: &ProgramImage, config: PipelineConfig) -> Pipeline {
        let reset = Slot::Bubble { class: StallClass::FrontendEmpty, pc: image.entry };
        let mut p = Pipeline {
            config,
            regs: [0; 32],
            mem: Memory::from_image(image),
            if_slot: reset,
            iss: reset,
            ex1: reset,
            ex2: reset,
            wb: reset,
            fetch_pc: image.entry,
            predictor: Predictor::new(config.branch_predictor, config.btb_size),
            icache_lines: HashSet::new(),
            icache_fill: None,
            miss: None,
            next_req_id: 0,
            cycle: 0,
            halted: false,
            exit_code: 0,
            cover_seen0: 0,
            cover_seen1: 0,
            latency_floor: 1,
        };
        let mut obs = CoverObs::default();
        p.if_slot = p.fetch(1, &mut obs);
        p
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }
    pub fn cycle(&self) -> u64 {
        self.cycle
    }
    pub fn halted(&self) -> bool {
        self.halted
    }
    pub fn exit_code(&self) -> u32 {
        self.exit_code
    }
    pub fn regs(&self) -> &[u32; 32] {
        &self.regs
    }
    pub fn mem(&self) -> &Memory {
        &self.mem
    }

    /// Deadline for the outstanding timed load, once the host has
    /// programmed its latency.
    pub fn program_latency(&mut self, req_id: u32, latency: u32) -> bool {
        match &mut self.miss {
            Some(m) if m.req_id == req_id && m.deliver_at.is_none() => {
                m.deliver_at = Some(m.issue + latency.max(1) as u64);
                true
            }
            _ => false,
        }
    }

    /// True while a timed load's latency has not been programmed.
    pub fn awaiting_latency(&self) -> Option<u32> {
        self.miss.filter(|m| m.deliver_at.is_none()).map(|m| m.req_id)
    }

    /// Lower bound the timing model guarantees for every latency.
    pub fn set_latency_floor(&mut self, floor: u32) {
        self.latency_floor = floor.max(1);
    }

    /// Whether the upcoming cycle could behave differently depending on the
    /// unprogrammed latency. Until then every latency at or above the floor
    /// leads to the same cycle, so the DUT may run ahead of the host.
    pub fn latency_needed(&self) -> bool {
        match self.miss {
            Some(m) if m.deliver_at.is_none() => self.cycle + 3 >= m.issue + self.latency_floor as u64,
            _ => false,
        }
    }

    pub fn coverage_bits(&self) -> u64 {
        self.cover_seen0 & self.cover_seen1
    }

    pub fn cover_read_word(&self, k: usize) -> u32 {
        match k {
            0 => self.coverage_bits() as u32,
            1 => (self.coverage_bits() >> 32) as u32,
            _ => 0,
        }
    }

    pub fn coverage_words(&self) -> usize {
        COVERPOINTS.len().div_ceil(32)
    }

    /// What WB will do in the upcoming cycle.
    pub fn wb_preview(&self, io: &dyn DutIo) -> WbPreview {
        match &self.wb {
            Slot::Bubble { .. } => WbPreview::Bubble,
            Slot::Op(u) if u.is_getchar() && io.input_peek().is_none() => WbPreview::Blocked,
            Slot::Op(u) => WbPreview::Commit {
                sendchar: u.instr.op == Op::Ecall && matches!(u.sys_args, Some((SYS_SENDCHAR, _))),
            },
        }
    }

    /// Whether the WB instruction is a getchar.
    pub fn wb_is_getchar(&self) -> bool {
        self.wb.op().is_some_and(|u| u.is_getchar())
    }

    /// Whether the upcoming cycle might send a memory request: only a load or
    /// store moving from ISS into EX1 can.
    pub fn may_request_memory(&self) -> bool {
        self.dcache_timed() && self.iss.op().is_some_and(|u| matches!(u.instr.op, Op::Lw | Op::Sw))
    }

    fn dcache_timed(&self) -> bool {
        matches!(self.config.dcache, DCache::Timed { .. })
    }

    fn timed(&self, addr: u32) -> bool {
        match self.config.dcache {
            DCache::PerfectHit => false,
            DCache::Timed { base } => addr >= base,
        }
    }

    fn fetch(&mut self, at_cycle: u64, obs: &mut CoverObs) -> Slot {
        let pc = self.fetch_pc;
        if let ICache::ColdMiss { latency, line_bytes } = self.config.icache {
            let line = pc / line_bytes.max(4);
            if !self.icache_lines.contains(&line) {
                match self.icache_fill {
                    Some((l, ready)) if l == line && ready <= at_cycle => {
                        self.icache_lines.insert(line);
                        self.icache_fill = None;
                    }
                    Some((l, _)) if l == line => {
                        return Slot::Bubble { class: StallClass::IcacheMiss, pc };
                    }
                    _ => {
                        self.icache_fill = Some((line, at_cycle + latency as u64));
                        return Slot::Bubble { class: StallClass::IcacheMiss, pc };
                    }
                }
            }
        }
        let instr = decode(self.mem.read(pc));
        let pred_next = self.predictor.predict(pc, &instr);
        if matches!(instr.op.class(), OpClass::Branch | OpClass::Jump) {
            obs.observe(Cp::PredictTaken, pred_next != pc.wrapping_add(4));
        }
        self.fetch_pc = pred_next;
        Slot::Op(Uop {
            pc,
            instr,
            pred_next,
            catchup: false,
            result: None,
            addr: 0,
            store_data: 0,
            miss: false,
            misaligned: false,
            sys_args: None,
        })
    }

    /// Advances the pipeline by one DUT cycle.
    pub fn step_cycle(&mut self, io: &mut dyn DutIo) -> Result<CycleOutput, DutError> {
        if self.halted {
            return Err(DutError::Halted);
        }
        let c = self.cycle + 1;
        let mut out = CycleOutput { cycle: c, ..Default::default() };
        let mut obs = CoverObs::default();

        // WB
        let frozen = self.writeback(c, io, &mut out, &mut obs)?;

        // Timed-load response lands after WB so an older commit to the same
        // register cannot overwrite it.
        if let Some(m) = self.miss {
            if m.deliver_at == Some(c) {
                if m.rd != 0 {
                    self.regs[m.rd as usize] = m.value;
                }
                out.delivered = Some(m.req_id);
                self.miss = None;
            }
        }

        if self.halted || frozen {
            self.finish_cycle(c, &mut out, obs);
            return Ok(out);
        }

        let mut redirect: Option<(u32, StallClass, u32, usize)> = None;

        // EX2
        if let Some(u) = self.ex2.op().copied() {
            let u = self.execute_ex2(u, c, &mut obs)?;
            if u.catchup && matches!(u.instr.op.class(), OpClass::Branch) {
                let actual = self.resolve_next(&u);
                if actual != u.pred_next {
                    redirect = Some((actual, StallClass::CatchupMispredictFlush, u.pc, 3));
                }
            }
            self.ex2 = Slot::Op(u);
        }
        if let Some((target, class, pc, depth)) = redirect.take() {
            self.flush(target, class, pc, depth);
        }

        // EX1
        if let Some(u) = self.ex1.op().copied() {
            let u = self.execute_ex1(u, c, &mut out, &mut obs)?;
            if !u.catchup && matches!(u.instr.op.class(), OpClass::Branch | OpClass::Jump) {
                let actual = self.resolve_next(&u);
                obs.observe(Cp::Ex1Redirect, actual != u.pred_next);
                if actual != u.pred_next {
                    redirect = Some((actual, StallClass::BranchMispredict, u.pc, 2));
                }
            }
            self.ex1 = Slot::Op(u);
        }
        if let Some((target, class, pc, depth)) = redirect.take() {
            self.flush(target, class, pc, depth);
        }

        // ISS
        let (next_ex1, iss_vacated) = match self.iss {
            Slot::Bubble { .. } => (self.iss, true),
            Slot::Op(mut u) => match self.issue_check(&u, c) {
                Ok(catchup) => {
                    obs.observe(Cp::IssStall, false);
                    if self.config.catchup_enabled && matches!(u.instr.op.class(), OpClass::Alu | OpClass::Branch) {
                        obs.observe(Cp::CatchupDispatch, catchup);
                    }
                    u.catchup = catchup;
                    (Slot::Op(u), true)
                }
                Err((class, pc)) => {
                    obs.observe(Cp::IssStall, true);
                    (Slot::Bubble { class, pc }, false)
                }
            },
        };

        // IF
        let (next_iss, next_if) = if iss_vacated {
            let moved = self.if_slot;
            (moved, self.fetch(c + 1, &mut obs))
        } else if matches!(self.if_slot, Slot::Bubble { .. }) {
            (self.iss, self.fetch(c + 1, &mut obs))
        } else {
            (self.iss, self.if_slot)
        };

        self.wb = self.ex2;
        self.ex2 = self.ex1;
        self.ex1 = next_ex1;
        self.iss = next_iss;
        self.if_slot = next_if;

        self.finish_cycle(c, &mut out, obs);
        Ok(out)
    }

    fn finish_cycle(&mut self, c: u64, out: &mut CycleOutput, obs: CoverObs) {
        self.cycle = c;
        self.cover_seen0 |= obs.seen0;
        self.cover_seen1 |= obs.seen1;
        out.cover = obs;
    }

    /// Returns true if WB is blocked and the whole pipeline holds.
    fn writeback(
        &mut self,
        c: u64,
        io: &mut dyn DutIo,
        out: &mut CycleOutput,
        obs: &mut CoverObs,
    ) -> Result<bool, DutError> {
        let u = match self.wb {
            Slot::Bubble { class, pc } => {
                out.stall = Some(class);
                out.sample_pc = pc;
                self.wb = Slot::Bubble { class: StallClass::FrontendEmpty, pc: self.fetch_pc };
                return Ok(false);
            }
            Slot::Op(u) => u,
        };
        if u.is_getchar() {
            let blocked = io.input_peek().is_none();
            obs.observe(Cp::GetcharWait, blocked);
            if blocked {
                out.stall = Some(StallClass::SyscallWait);
                out.sample_pc = u.pc;
                return Ok(true);
            }
        }
        let mut rec = CommitRecord { pc: u.pc, instr: u.instr.word, rd: 0, wdata: 0 };
        match u.instr.op.class() {
            OpClass::Illegal => {
                return Err(DutError::Illegal { cycle: c, pc: u.pc, word: u.instr.word });
            }
            OpClass::Load | OpClass::Store if u.misaligned => {
                return Err(DutError::Misaligned { cycle: c, pc: u.pc, addr: u.addr });
            }
            OpClass::System if u.instr.op == Op::Ebreak => {
                self.halted = true;
            }
            OpClass::System => {
                let (a7, a0) = u.sys_args.ok_or_else(|| internal(c, u.pc, "syscall args missing"))?;
                match a7 {
                    SYS_SENDCHAR => {
                        obs.observe(Cp::SyscallDir, false);
                        if io.output_push(a0 as u8) == PushResult::WouldBlock {
                            return Err(DutError::OutputOverflow { cycle: c, pc: u.pc });
                        }
                        out.syscall = Some(Syscall::SendChar(a0 as u8));
                    }
                    SYS_GETCHAR => {
                        obs.observe(Cp::SyscallDir, true);
                        let v = io.input_peek().unwrap_or(EOF);
                        // EOF is sticky and stays queued.
                        if v != EOF {
                            io.input_pop();
                        }
                        self.regs[10] = v;
                        rec.rd = 10;
                        rec.wdata = v;
                        out.syscall = Some(Syscall::GetChar);
                    }
                    SYS_EXIT | SYS_EXIT_RESET => {
                        self.halted = true;
                        self.exit_code = a0;
                        out.syscall = Some(Syscall::Exit(a0));
                    }
                    num => return Err(DutError::BadSyscall { cycle: c, pc: u.pc, num }),
                }
            }
            _ => {
                if let Some(rd) = u.instr.dest() {
                    let v = u.result.ok_or_else(|| internal(c, u.pc, "no result at writeback"))?;
                    obs.observe(Cp::WbLoad, u.is_load());
                    if !u.miss {
                        self.regs[rd as usize] = v;
                    }
                    rec.rd = rd;
                    rec.wdata = v;
                }
            }
        }
        out.committed = Some(rec);
        out.sample_pc = u.pc;
        self.wb = Slot::Bubble { class: StallClass::FrontendEmpty, pc: self.fetch_pc };
        Ok(false)
    }

    fn resolve_next(&self, u: &Uop) -> u32 {
        u.result_next()
    }

    fn flush(&mut self, target: u32, class: StallClass, pc: u32, depth: usize) {
        let bubble = Slot::Bubble { class, pc };
        self.if_slot = bubble;
        self.iss = bubble;
        if depth >= 3 {
            self.ex1 = bubble;
        }
        self.fetch_pc = target;
        self.icache_fill = None;
    }

    /// Register read for EX1: the youngest older producer in EX2 is bypassed,
    /// everything older has already reached the register file.
    fn read_ex1(&self, reg: u8, c: u64, consumer_pc: u32, rs2: bool, obs: &mut CoverObs) -> Result<u32, DutError> {
        if reg == 0 {
            return Ok(0);
        }
        let cp = if rs2 { Cp::Rs2Bypass } else { Cp::Rs1Bypass };
        if let Some(p) = self.ex2.op().filter(|p| p.dest() == Some(reg)) {
            if p.catchup || p.is_load() || p.is_getchar() {
                return Err(internal(c, consumer_pc, "EX1 consumer issued under a late producer"));
            }
            let v = p.result.ok_or_else(|| internal(c, consumer_pc, "bypass source has no value"))?;
            obs.observe(cp, true);
            if rs2 && self.config.mutant == Some(Mutant::DroppedBypass) {
                return Ok(self.regs[reg as usize]);
            }
            return Ok(v);
        }
        obs.observe(cp, false);
        self.check_rf(reg, c, consumer_pc)?;
        Ok(self.regs[reg as usize])
    }

    fn check_rf(&self, reg: u8, c: u64, consumer_pc: u32) -> Result<(), DutError> {
        if let Some(m) = self.miss {
            if m.rd == reg {
                return Err(internal(c, consumer_pc, "read of a register awaiting a timed load"));
            }
        }
        Ok(())
    }

    fn execute_ex1(&mut self, mut u: Uop, c: u64, out: &mut CycleOutput, obs: &mut CoverObs) -> Result<Uop, DutError> {
        if u.catchup {
            return Ok(u);
        }
        let i = u.instr;
        let mutant = self.config.mutant;
        match i.op.class() {
            OpClass::Alu => {
                let v = match i.op {
                    Op::Lui => i.imm as u32,
                    Op::Auipc => u.pc.wrapping_add(i.imm as u32),
                    Op::Add | Op::Sub | Op::Slt | Op::And | Op::Or | Op::Xor | Op::Sll | Op::Srl
                    | Op::Sra => {
                        let a = self.read_ex1(i.rs1, c, u.pc, false, obs)?;
                        let b = self.read_ex1(i.rs2, c, u.pc, true, obs)?;
                        alu_mutated(i.op, a, b, mutant)
                    }
                    _ => {
                        let a = self.read_ex1(i.rs1, c, u.pc, false, obs)?;
                        alu(i.op, a, i.imm as u32)
                    }
                };
                u.result = Some(v);
            }
            OpClass::Branch => {
                let a = self.read_ex1(i.rs1, c, u.pc, false, obs)?;
                let b = self.read_ex1(i.rs2, c, u.pc, true, obs)?;
                let taken = branch_mutated(i.op, a, b, mutant);
                obs.observe(Cp::Ex1Taken, taken);
                u.result = None;
                u.addr = if taken { u.pc.wrapping_add(i.imm as u32) } else { u.pc.wrapping_add(4) };
                self.predictor.train(u.pc, &i, taken, u.addr);
            }
            OpClass::Jump => {
                let target = if i.op == Op::Jal {
                    let t = u.pc.wrapping_add(i.imm as u32);
                    if mutant == Some(Mutant::JalOffBy4) {
                        t.wrapping_add(4)
                    } else {
                        t
                    }
                } else {
                    self.read_ex1(i.rs1, c, u.pc, false, obs)?.wrapping_add(i.imm as u32) & !1
                };
                u.result = Some(u.pc.wrapping_add(4));
                u.addr = target;
                self.predictor.train(u.pc, &i, true, target);
            }
            OpClass::Load => {
                let addr = self.read_ex1(i.rs1, c, u.pc, false, obs)?.wrapping_add(i.imm as u32);
                u.addr = addr;
                if addr % 4 != 0 {
                    u.misaligned = true;
                    u.result = Some(0);
                    return Ok(u);
                }
                let mut value = self.mem.read(addr);
                if mutant == Some(Mutant::StaleLoad) {
                    if let Some(s) = self.ex2.op() {
                        // The store one stage ahead wrote memory this cycle;
                        // the mutant reads the value from before it.
                        if s.instr.op == Op::Sw && s.addr == addr {
                            value = s.result.unwrap_or(value);
                        }
                    }
                }
                let timed = self.timed(addr);
                obs.observe(Cp::DmemTimed, timed);
                u.result = Some(value);
                if timed {
                    let req_id = self.next_req_id;
                    self.next_req_id = self.next_req_id.wrapping_add(1);
                    u.miss = true;
                    self.miss = Some(OutstandingMiss {
                        req_id,
                        pc: u.pc,
                        rd: i.rd,
                        value,
                        issue: c,
                        deliver_at: None,
                    });
                    out.mem_req = Some(IoRequest {
                        req_id,
                        kind: IoKind::MemRead,
                        address: addr,
                        data: 0,
                        issue_cycle: c,
                    });
                }
            }
            OpClass::Store => {
                let base = self.read_ex1(i.rs1, c, u.pc, false, obs)?;
                u.store_data = self.read_ex1(i.rs2, c, u.pc, true, obs)?;
                u.addr = base.wrapping_add(i.imm as u32);
                u.misaligned = u.addr % 4 != 0;
                if !u.misaligned && self.timed(u.addr) {
                    // Posted write: occupies its bank, nothing waits on it.
                    let req_id = self.next_req_id;
                    self.next_req_id = self.next_req_id.wrapping_add(1);
                    out.mem_req = Some(IoRequest {
                        req_id,
                        kind: IoKind::MemWrite,
                        address: u.addr,
                        data: u.store_data,
                        issue_cycle: c,
                    });
                }
            }
            OpClass::System => {
                if i.op == Op::Ecall {
                    let a7 = self.read_ex1(17, c, u.pc, true, obs)?;
                    let a0 = self.read_ex1(10, c, u.pc, false, obs)?;
                    u.sys_args = Some((a7, a0));
                }
            }
            OpClass::Illegal => {}
        }
        Ok(u)
    }

    fn execute_ex2(&mut self, mut u: Uop, c: u64, obs: &mut CoverObs) -> Result<Uop, DutError> {
        let i = u.instr;
        if u.catchup {
            let rf = |r: u8| if r == 0 { 0 } else { self.regs[r as usize] };
            for r in [i.rs1, i.rs2] {
                if r != 0 && i.sources().contains(&Some(r)) {
                    self.check_rf(r, c, u.pc)?;
                }
            }
            match i.op.class() {
                OpClass::Alu => {
                    let v = match i.op {
                        Op::Add | Op::Sub | Op::Slt | Op::And | Op::Or | Op::Xor | Op::Sll
                        | Op::Srl | Op::Sra => alu_mutated(i.op, rf(i.rs1), rf(i.rs2), self.config.mutant),
                        Op::Lui => i.imm as u32,
                        Op::Auipc => u.pc.wrapping_add(i.imm as u32),
                        _ => alu(i.op, rf(i.rs1), i.imm as u32),
                    };
                    u.result = Some(v);
                }
                OpClass::Branch => {
                    let taken = branch_mutated(i.op, rf(i.rs1), rf(i.rs2), self.config.mutant);
                    obs.observe(Cp::Ex2Taken, taken);
                    u.addr = if taken { u.pc.wrapping_add(i.imm as u32) } else { u.pc.wrapping_add(4) };
                    obs.observe(Cp::Ex2Redirect, u.addr != u.pred_next);
                    self.predictor.train(u.pc, &i, taken, u.addr);
                }
                _ => return Err(internal(c, u.pc, "non-integer op in the catch-up ALU")),
            }
        } else if i.op == Op::Sw && !u.misaligned {
            // Remember the overwritten word for the stale-load mutant.
            let old = self.mem.read(u.addr);
            self.mem.write(u.addr, u.store_data);
            u.result = Some(old);
        }
        Ok(u)
    }

    /// Classifies one source operand of the instruction sitting in ISS.
    fn source_ready(&self, reg: u8, consumer: &Uop, c: u64) -> SourceCheck {
        let control = matches!(consumer.instr.op.class(), OpClass::Branch | OpClass::Jump);
        let load_class = if control { StallClass::LoadControl } else { StallClass::LoadArith };
        let ready = |pc| SourceCheck { readiness: Readiness::Early, class: StallClass::RawOther, producer_pc: pc };
        let miss_check = |pc: u32| match self.miss.and_then(|m| m.deliver_at) {
            Some(d) if d <= c + 1 => ready(pc),
            Some(d) if d <= c + 2 => SourceCheck { readiness: Readiness::CatchUp, class: StallClass::DcacheMiss, producer_pc: pc },
            _ => SourceCheck { readiness: Readiness::NotYet, class: StallClass::DcacheMiss, producer_pc: pc },
        };

        if let Some(p) = self.ex1.op().filter(|p| p.dest() == Some(reg)) {
            if p.miss {
                return SourceCheck { readiness: Readiness::NotYet, class: StallClass::DcacheMiss, producer_pc: p.pc };
            }
            let class = if p.catchup {
                StallClass::CatchupDep
            } else if p.is_load() {
                load_class
            } else if p.is_getchar() {
                StallClass::RawOther
            } else {
                return ready(p.pc);
            };
            return SourceCheck { readiness: Readiness::CatchUp, class, producer_pc: p.pc };
        }
        for p in [self.ex2.op(), self.wb.op()].into_iter().flatten() {
            if p.dest() == Some(reg) {
                return if p.miss { miss_check(p.pc) } else { ready(p.pc) };
            }
        }
        match self.miss {
            Some(m) if m.rd == reg => miss_check(m.pc),
            _ => ready(0),
        }
    }

    /// `Ok(catchup)` if the ISS instruction can enter EX1 next cycle,
    /// otherwise the stall class and the PC it is charged to.
    fn issue_check(&self, u: &Uop, c: u64) -> Result<bool, (StallClass, u32)> {
        let i = &u.instr;
        if let Some(m) = self.miss {
            if i.op == Op::Lw {
                return Err((StallClass::DcacheMiss, m.pc));
            }
            if u.dest().is_some() && u.dest() == Some(m.rd) {
                return Err((StallClass::DcacheMiss, m.pc));
            }
        }
        let sources: Vec<u8> = match i.op {
            // Syscall arguments; a7 selects getchar, which writes a0.
            Op::Ecall => vec![17, 10],
            _ => i.sources().into_iter().flatten().collect(),
        };
        let checks: Vec<SourceCheck> = sources.iter().map(|&r| self.source_ready(r, u, c)).collect();
        let worst = checks.iter().map(|s| s.readiness).max().unwrap_or(Readiness::Early);
        let eligible = self.config.catchup_enabled
            && matches!(i.op.class(), OpClass::Alu | OpClass::Branch);
        match worst {
            Readiness::Early => Ok(false),
            Readiness::CatchUp if eligible => Ok(true),
            _ => {
                let blocking = checks.iter().find(|s| s.readiness != Readiness::Early).unwrap();
                Err((blocking.class, blocking.producer_pc))
            }
        }
    }
}

impl Uop {
    fn result_next(&self) -> u32 {
        match self.instr.op.class() {
            OpClass::Branch | OpClass::Jump => self.addr,
            _ => self.pc.wrapping_add(4),
        }
    }
}

fn internal(cycle: u64, pc: u32, what: &str) -> DutError {
    DutError::Internal { cycle, pc, what: what.to_string() }
}

fn alu_mutated(op: Op, a: u32, b: u32, mutant: Option<Mutant>) -> u32 {
    match (op, mutant) {
        (Op::Add, Some(Mutant::AddSubSwap)) => alu(Op::Sub, a, b),
        (Op::Sub, Some(Mutant::AddSubSwap)) => alu(Op::Add, a, b),
        _ => alu(op, a, b),
    }
}

fn branch_mutated(op: Op, a: u32, b: u32, mutant: Option<Mutant>) -> bool {
    match (op, mutant) {
        (Op::Bne, Some(Mutant::BranchPolarity)) => a == b,
        _ => branch_taken(op, a, b),
    }
}

/// Runs a pipeline standalone with every timed load given latency `l` and
/// immediate data, until halt or `max_cycles`.
pub fn run_standalone(
    image: &ProgramImage,
    config: PipelineConfig,
    io: &mut dyn DutIo,
    dram_latency: u32,
    max_cycles: u64,
) -> Result<(Pipeline, Vec<CycleOutput>), DutError> {
    let mut p = Pipeline::new(image, config);
    let mut outs = Vec::new();
    while !p.halted() && p.cycle() < max_cycles {
        let o = p.step_cycle(io)?;
        if let Some(req) = o.mem_req {
            p.program_latency(req.req_id, dram_latency);
        }
        outs.push(o);
    }
    Ok((p, outs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;

    fn run(src: &str, config: PipelineConfig) -> (Pipeline, Vec<CycleOutput>) {
        let img = assemble(src).unwrap();
        let mut io = BufferIo::with_input(b"");
        run_standalone(&img, config, &mut io, 20, 10_000).unwrap()
    }

    fn base() -> PipelineConfig {
        PipelineConfig { branch_predictor: BranchPredictor::StaticNotTaken, ..Default::default() }
    }

    fn catchup() -> PipelineConfig {
        PipelineConfig { catchup_enabled: true, ..base() }
    }

    fn commit_cycles(outs: &[CycleOutput]) -> Vec<u64> {
        outs.iter().filter(|o| o.committed.is_some()).map(|o| o.cycle).collect()
    }

    fn count(outs: &[CycleOutput], class: StallClass) -> usize {
        outs.iter().filter(|o| o.stall == Some(class)).count()
    }

    #[test]
    fn five_addis_fill_in_four_cycles() {
        let img = assemble("addi x1,x0,1\naddi x2,x0,2\naddi x3,x0,3\naddi x4,x0,4\naddi x5,x0,5\n").unwrap();
        let mut p = Pipeline::new(&img, base());
        let mut io = BufferIo::default();
        let outs: Vec<CycleOutput> = (0..9).map(|_| p.step_cycle(&mut io).unwrap()).collect();
        assert_eq!(commit_cycles(&outs), vec![5, 6, 7, 8, 9]);
        assert!(outs[..4].iter().all(|o| o.stall == Some(StallClass::FrontendEmpty)));
        assert_eq!(p.regs()[5], 5);
    }

    #[test]
    fn immediate_exit_takes_fill_plus_one() {
        let (p, outs) = run("ecall\n", base());
        assert!(p.halted());
        assert_eq!(outs.len(), 5);
        assert_eq!(commit_cycles(&outs), vec![5]);
    }

    const LOAD_USE: &str = "lw x1, 0x40(x0)\nadd x3, x1, x1\necall\n.org 0x40\n.word 21\n";

    #[test]
    fn load_use_bubble_without_catchup() {
        let (p, outs) = run(LOAD_USE, base());
        assert_eq!(count(&outs, StallClass::LoadArith), 1);
        assert_eq!(commit_cycles(&outs), vec![5, 7, 8]);
        assert_eq!(p.regs()[3], 42);
        // bubble is charged to the load
        let stall = outs.iter().find(|o| o.stall == Some(StallClass::LoadArith)).unwrap();
        assert_eq!(stall.sample_pc, 0);
    }

    #[test]
    fn catchup_removes_load_use_bubble() {
        let (p, outs) = run(LOAD_USE, catchup());
        assert_eq!(count(&outs, StallClass::LoadArith), 0);
        assert_eq!(commit_cycles(&outs), vec![5, 6, 7]);
        assert_eq!(p.regs()[3], 42);
    }

    #[test]
    fn catchup_branch_mispredict_flushes_three() {
        let src = "lw x1, 0x40(x0)\nbeq x1, x0, target\naddi x5, x0, 1\naddi x6, x0, 1\ntarget: ecall\n.org 0x40\n.word 0\n";
        let (p, outs) = run(src, catchup());
        assert_eq!(count(&outs, StallClass::CatchupMispredictFlush), 3);
        assert_eq!(count(&outs, StallClass::LoadControl), 0);
        assert_eq!(p.regs()[5], 0);
        // without catch-up: one load-control bubble then a 2-bubble flush
        let (_, outs) = run(src, base());
        assert_eq!(count(&outs, StallClass::LoadControl), 1);
        assert_eq!(count(&outs, StallClass::BranchMispredict), 2);
    }

    #[test]
    fn early_branch_mispredict_costs_two() {
        let src = "beq x0, x0, target\naddi x5, x0, 1\naddi x6, x0, 1\ntarget: ecall\n";
        let (p, outs) = run(src, base());
        assert_eq!(count(&outs, StallClass::BranchMispredict), 2);
        assert_eq!(p.regs()[5], 0);
        let flush = outs.iter().find(|o| o.stall == Some(StallClass::BranchMispredict)).unwrap();
        assert_eq!(flush.sample_pc, 0);
    }

    #[test]
    fn catchup_dependent_non_integer_op_stalls_once() {
        // sw depends on the catch-up add; it is not catch-up eligible
        let src = "lw x1, 0x40(x0)\nadd x2, x1, x1\nsw x2, 0x44(x0)\necall\n.org 0x40\n.word 5\n";
        let (p, outs) = run(src, catchup());
        assert_eq!(count(&outs, StallClass::CatchupDep), 1);
        assert_eq!(p.mem().read(0x44), 10);
    }

    #[test]
    fn every_cycle_is_commit_or_stall() {
        let src = "li x1, 5\nloop: lw x2, 0x80(x0)\nadd x3, x3, x2\naddi x1, x1, -1\nbnez x1, loop\necall\n.org 0x80\n.word 3\n";
        for cfg in [base(), catchup()] {
            let (p, outs) = run(src, cfg);
            assert_eq!(p.regs()[3], 15);
            for o in &outs {
                assert!(o.committed.is_some() != o.stall.is_some());
            }
        }
    }

    #[test]
    fn timed_load_lets_independent_work_retire() {
        let src = "lui x9, 0x10000\nlw x1, 0(x9)\naddi x2, x0, 1\naddi x3, x0, 2\naddi x4, x0, 3\nadd x5, x1, x2\necall\n";
        let (p, outs) = run(src, base());
        let req = outs.iter().find_map(|o| o.mem_req).unwrap();
        let delivered = outs.iter().find(|o| o.delivered.is_some()).unwrap();
        assert_eq!(delivered.cycle, req.issue_cycle + 20);
        // the three independent addis commit while the load is outstanding
        let independent: Vec<u64> = outs
            .iter()
            .filter(|o| o.committed.is_some_and(|r| r.pc >= 8 && r.pc <= 16))
            .map(|o| o.cycle)
            .collect();
        assert_eq!(independent.len(), 3);
        assert!(independent.iter().all(|&c| c < delivered.cycle));
        assert!(count(&outs, StallClass::DcacheMiss) > 0);
        assert_eq!(p.regs()[5], 1);
    }

    #[test]
    fn x0_stays_zero() {
        let (p, _) = run("addi x0, x0, 9\nlw x0, 0x40(x0)\nadd x1, x0, x0\necall\n.org 0x40\n.word 77\n", catchup());
        assert_eq!(p.regs()[0], 0);
        assert_eq!(p.regs()[1], 0);
    }

    #[test]
    fn getchar_waits_then_reads() {
        let img = assemble("li a7, 2\necall\nmv s0, a0\nli a7, 3\necall\n").unwrap();
        let mut p = Pipeline::new(&img, base());
        let mut io = BufferIo::default();
        let mut waits = 0;
        for _ in 0..40 {
            let o = p.step_cycle(&mut io).unwrap();
            if o.stall == Some(StallClass::SyscallWait) {
                waits += 1;
                if waits == 3 {
                    io.input.push_back(b'k' as u32);
                }
            }
            if p.halted() {
                break;
            }
        }
        assert_eq!(waits, 3);
        assert_eq!(p.regs()[8], b'k' as u32);
    }

    #[test]
    fn sendchar_pushes_output() {
        let img = assemble("li a7, 1\nli a0, 72\necall\nli a0, 105\necall\nli a7, 3\nli a0, 0\necall\n").unwrap();
        let mut io = BufferIo::default();
        let (p, _) = run_standalone(&img, base(), &mut io, 20, 1000).unwrap();
        assert_eq!(io.output, b"Hi");
        assert!(p.halted());
    }

    #[test]
    fn illegal_instruction_halts_with_diagnostic() {
        let img = assemble("nop\n.word 0xFFFFFFFF\n").unwrap();
        let mut io = BufferIo::default();
        let err = run_standalone(&img, base(), &mut io, 20, 100).unwrap_err();
        assert!(matches!(err, DutError::Illegal { pc: 4, word: 0xFFFF_FFFF, .. }));
    }

    #[test]
    fn branch_taken_select_toggles() {
        let src = "li x1, 2\nloop: addi x1, x1, -1\nbnez x1, loop\necall\n";
        let (p, _) = run(src, base());
        assert_ne!(p.coverage_bits() & (1 << Cp::Ex1Taken as u32), 0);
        assert_eq!(Pipeline::new(&assemble(src).unwrap(), base()).cover_read_word(0), 0);
        assert_eq!(p.cover_read_word(5), 0);
    }

    #[test]
    fn event_codes_fit_four_bits() {
        for e in Event::ALL {
            assert!(e.code() < 16);
            assert_eq!(Event::from_code(e.code()), Some(e));
            assert_eq!(Event::parse(e.as_str()), Some(e));
        }
    }
}
