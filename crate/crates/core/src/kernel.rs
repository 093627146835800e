//! Deterministic co-emulation loop with a gated DUT clock.
//!
//! Every host tick does at most one unit of host work, then decides whether
//! the DUT clock runs. The DUT only advances when everything the upcoming
//! cycle needs is in place: room in each FIFO it will push to, a programmed
//! latency for an outstanding timed load, data for a timer at its deadline.
//! Otherwise the cycle is withheld and runs unchanged on a later tick, so
//! host speed never shows up in DUT time.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{CommitRecord, InputScript};
use crate::dut::{CoverObs, DutError, DutIo, Pipeline, PipelineConfig, ShellIo, WbPreview};
use crate::golden::LockstepVerdict;
use crate::image::ProgramImage;
use crate::profiler::{attribute, should_sample, Sample};
use crate::pshell::{ControlCommand, PShell, PShellConfig, PushResult, ShellStatus};
use crate::timing::{DramModelParams, HardwareTimer, IoKind, IoRequest, TimerPoll, TimingError, TimingRecord};
use crate::transport::Mailbox;
use crate::vps::{
    input_queue, HostJob, Vps, VpsConfig, COMMIT_WORDS, D2H_LANES, LANE_CHAR, LANE_COMMIT,
    LANE_MEMREQ, LANE_SAMPLE, MEMREQ_WORDS, SAMPLE_WORDS,
    pack_request,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateReason {
    Backpressure,
    TimerWait,
    HostPause,
    StepExhausted,
}

impl GateReason {
    pub const ALL: [GateReason; 4] =
        [GateReason::Backpressure, GateReason::TimerWait, GateReason::HostPause, GateReason::StepExhausted];

    /// Bit in the GateReasons status register.
    pub fn bit(self) -> u32 {
        1 << self as u32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateState {
    Running,
    Gated,
}

#[derive(Clone, Debug, Default)]
pub struct GateController {
    reasons: BTreeSet<GateReason>,
    pub dut_cycle: u64,
    pub host_tick: u64,
}

impl GateController {
    pub fn request_gate(&mut self, reason: GateReason) {
        self.reasons.insert(reason);
    }

    pub fn release_gate(&mut self, reason: GateReason) {
        self.reasons.remove(&reason);
    }

    pub fn set(&mut self, reason: GateReason, active: bool) {
        if active {
            self.request_gate(reason)
        } else {
            self.release_gate(reason)
        }
    }

    pub fn state(&self) -> GateState {
        if self.reasons.is_empty() {
            GateState::Running
        } else {
            GateState::Gated
        }
    }

    pub fn is_gated(&self) -> bool {
        self.state() == GateState::Gated
    }

    pub fn reasons(&self) -> &BTreeSet<GateReason> {
        &self.reasons
    }

    pub fn bits(&self) -> u32 {
        self.reasons.iter().map(|r| r.bit()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HostCostModel {
    pub ticks_per_sample: u32,
    pub ticks_per_io: u32,
    /// Ticks between polls when the host found nothing to do.
    pub ticks_idle: u32,
    /// Extra 0..=jitter ticks added to every job.
    pub jitter: u32,
    /// Data-ready notifications arrive 0..=this many ticks after service.
    pub data_delay_max: u32,
    pub seed: u64,
}

impl Default for HostCostModel {
    fn default() -> Self {
        HostCostModel { ticks_per_sample: 1, ticks_per_io: 1, ticks_idle: 1, jitter: 0, data_delay_max: 0, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepCommand {
    Run,
    Pause,
    Step(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub fifo_depth: u32,
    pub cost: HostCostModel,
    /// None disables profiling.
    pub sample_interval: Option<u64>,
    pub lockstep: bool,
    pub coverage: bool,
    pub dram: DramModelParams,
    pub pipeline: PipelineConfig,
    pub watchdog_cycles: u64,
    /// Keep the full commit trace on the DUT side.
    pub record_commits: bool,
}

pub const DEFAULT_WATCHDOG: u64 = 100_000_000;

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            fifo_depth: 8,
            cost: HostCostModel::default(),
            sample_interval: None,
            lockstep: false,
            coverage: false,
            dram: DramModelParams::default(),
            pipeline: PipelineConfig::default(),
            watchdog_cycles: DEFAULT_WATCHDOG,
            record_commits: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("watchdog expired after {cycles} DUT cycles")]
    Watchdog { cycles: u64 },
    #[error("no progress possible at host tick {host_tick} (gated by {reasons:?})")]
    Deadlock { host_tick: u64, reasons: Vec<GateReason> },
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error("kernel invariant violated at DUT cycle {cycle}: {what}")]
    Internal { cycle: u64, what: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TickReport {
    pub advanced_dut: bool,
    pub gate_reasons: BTreeSet<GateReason>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatedTicks {
    pub backpressure: u64,
    pub timer_wait: u64,
    pub host_pause: u64,
    pub step_exhausted: u64,
}

impl GatedTicks {
    pub fn total(&self) -> u64 {
        self.backpressure + self.timer_wait + self.host_pause + self.step_exhausted
    }

    fn charge(&mut self, reasons: &BTreeSet<GateReason>) {
        // A tick with several reasons is charged to the first one.
        match reasons.iter().next() {
            Some(GateReason::Backpressure) => self.backpressure += 1,
            Some(GateReason::TimerWait) => self.timer_wait += 1,
            Some(GateReason::HostPause) => self.host_pause += 1,
            Some(GateReason::StepExhausted) => self.step_exhausted += 1,
            None => {}
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dut_cycles: u64,
    pub host_ticks: u64,
    pub gated: GatedTicks,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunPredicate {
    Cycles(u64),
    Halted,
    Violation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum RunOutcome {
    Halted { exit_code: u32 },
    CyclesReached,
    Violation,
    Diverged,
    DutFault { error: DutError },
}

enum Host {
    Local { vps: Box<Vps>, busy_until: u64, last_job: HostJob },
    Remote(Mailbox),
}

const DEADLOCK_TICKS: u64 = 64;

pub struct Kernel {
    config: KernelConfig,
    shell: PShell,
    pipeline: Pipeline,
    gate: GateController,
    host: Host,
    input: Vec<(u64, u32)>,
    paused: bool,
    step_budget: Option<u64>,
    target: Option<u64>,
    awaiting: Option<IoRequest>,
    timer: Option<(HardwareTimer, u64)>,
    fault: Option<DutError>,
    commits: Vec<CommitRecord>,
    timing: Vec<TimingRecord>,
    gated: GatedTicks,
    stuck_ticks: u64,
    last_cover: CoverObs,
}

impl Kernel {
    /// Kernel with the host agent running in-process under the cost model.
    pub fn new(image: &ProgramImage, input: &InputScript, config: KernelConfig) -> Result<Kernel, KernelError> {
        let vps = Vps::new(
            VpsConfig {
                dram: config.dram,
                seed: config.cost.seed,
                data_delay_max: config.cost.data_delay_max,
                lockstep: config.lockstep,
                record_commits: false,
            },
            image,
            input,
        )?;
        Self::build(image, input, config, Host::Local { vps: Box::new(vps), busy_until: 0, last_job: HostJob::Idle })
    }

    /// Kernel whose host agent runs elsewhere and reaches the shell through
    /// `mailbox`.
    pub fn new_bridged(
        image: &ProgramImage,
        input: &InputScript,
        config: KernelConfig,
        mailbox: Mailbox,
    ) -> Result<Kernel, KernelError> {
        Self::build(image, input, config, Host::Remote(mailbox))
    }

    fn build(image: &ProgramImage, input: &InputScript, config: KernelConfig, host: Host) -> Result<Kernel, KernelError> {
        let c = &config.cost;
        if c.ticks_per_sample == 0 || c.ticks_per_io == 0 || c.ticks_idle == 0 {
            return Err(KernelError::Config("host cost model fields must be at least 1".into()));
        }
        if config.sample_interval == Some(0) {
            return Err(KernelError::Config("sampling interval must be at least 1".into()));
        }
        if config.fifo_depth < 1 {
            return Err(KernelError::Config("FIFO depth must be at least 1".into()));
        }
        config.dram.validate()?;
        let shell = PShell::new(Self::shell_config(config.fifo_depth))
            .map_err(|e| KernelError::Config(e.to_string()))?;
        let mut pipeline = Pipeline::new(image, config.pipeline);
        pipeline.set_latency_floor(config.dram.base_latency);
        Ok(Kernel {
            pipeline,
            config,
            shell,
            gate: GateController::default(),
            host,
            input: input_queue(input),
            paused: false,
            step_budget: None,
            target: None,
            awaiting: None,
            timer: None,
            fault: None,
            commits: Vec::new(),
            timing: Vec::new(),
            gated: GatedTicks::default(),
            stuck_ticks: 0,
            last_cover: CoverObs::default(),
        })
    }

    pub fn shell_config(fifo_depth: u32) -> PShellConfig {
        PShellConfig {
            num_csrs_out: 4,
            num_csrs_in: 4,
            num_fifos_h2d: 1,
            num_fifos_d2h: D2H_LANES,
            fifo_depth,
            data_width: 32,
        }
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }
    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }
    pub fn shell(&self) -> &PShell {
        &self.shell
    }
    pub fn shell_mut(&mut self) -> &mut PShell {
        &mut self.shell
    }
    pub fn gate(&self) -> &GateController {
        &self.gate
    }
    pub fn dut_cycle(&self) -> u64 {
        self.gate.dut_cycle
    }
    pub fn host_tick(&self) -> u64 {
        self.gate.host_tick
    }
    pub fn fault(&self) -> Option<&DutError> {
        self.fault.as_ref()
    }
    /// DUT-side commit trace (requires `record_commits`).
    pub fn commits(&self) -> &[CommitRecord] {
        &self.commits
    }
    /// Observed issue, programmed latency and actual delivery per timed load.
    pub fn timing_trace(&self) -> &[TimingRecord] {
        &self.timing
    }

    pub fn vps(&self) -> Option<&Vps> {
        match &self.host {
            Host::Local { vps, .. } => Some(vps),
            Host::Remote(_) => None,
        }
    }

    /// Mux selects observed in the most recent DUT cycle.
    pub fn last_cover(&self) -> CoverObs {
        self.last_cover
    }

    pub fn samples(&self) -> &[Sample] {
        self.vps().map_or(&[], |v| &v.samples)
    }

    pub fn output(&self) -> &[u8] {
        self.vps().map_or(&[], |v| &v.output)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary { dut_cycles: self.gate.dut_cycle, host_ticks: self.gate.host_tick, gated: self.gated }
    }

    /// Final lockstep verdict of the in-process host, if lockstep is on.
    pub fn verdict(&mut self) -> Option<LockstepVerdict> {
        match &mut self.host {
            Host::Local { vps, .. } => vps.lockstep_mut().map(|l| l.finish()),
            Host::Remote(_) => None,
        }
    }

    pub fn command(&mut self, cmd: StepCommand) {
        match cmd {
            StepCommand::Run => {
                self.paused = false;
                self.step_budget = None;
            }
            StepCommand::Pause => {
                self.paused = true;
                self.step_budget = None;
            }
            StepCommand::Step(n) => self.step_budget = Some(n.max(1) as u64),
        }
        self.publish_status();
    }

    fn apply(&mut self, cmd: ControlCommand) {
        match cmd {
            ControlCommand::Run => self.command(StepCommand::Run),
            ControlCommand::Pause => self.command(StepCommand::Pause),
            ControlCommand::Step(n) => self.command(StepCommand::Step(n)),
            ControlCommand::ArmTimer { req_id, latency } => {
                if let Some(req) = self.awaiting.filter(|r| r.req_id == req_id) {
                    let mut timer = HardwareTimer::new(req_id, latency);
                    timer.elapsed = (self.gate.dut_cycle - req.issue_cycle) as u32;
                    self.pipeline.program_latency(req_id, timer.programmed_latency);
                    self.timer = Some((timer, req.issue_cycle));
                    self.timing.push(TimingRecord {
                        req_id,
                        address: req.address,
                        issue: req.issue_cycle,
                        latency: timer.programmed_latency,
                        deliver: 0,
                    });
                    self.awaiting = None;
                }
            }
            ControlCommand::DataReady { req_id } => {
                if let Some((t, _)) = &mut self.timer {
                    if t.req_id == req_id {
                        t.data_ready = true;
                    }
                }
            }
        }
    }

    fn host_work(&mut self) {
        let tick = self.gate.host_tick;
        match &mut self.host {
            Host::Local { vps, busy_until, last_job } => {
                let _ = vps.deliver_due(tick, &mut self.shell);
                if tick >= *busy_until {
                    let job = vps.poll(tick, &mut self.shell).unwrap_or(HostJob::Idle);
                    let cost = &self.config.cost;
                    let ticks = match job {
                        HostJob::Idle => cost.ticks_idle,
                        HostJob::Sample => cost.ticks_per_sample + vps.jitter(cost.jitter),
                        _ => cost.ticks_per_io + vps.jitter(cost.jitter),
                    };
                    *busy_until = tick + ticks as u64;
                    *last_job = job;
                }
            }
            Host::Remote(mailbox) => {
                if mailbox.drain(&mut self.shell) == 0 && self.gate.is_gated() {
                    // Nothing can change until the remote host acts.
                    mailbox.wait(Duration::from_millis(1));
                    mailbox.drain(&mut self.shell);
                }
            }
        }
    }

    fn evaluate_gates(&mut self) {
        let c = self.gate.dut_cycle + 1;
        let preview = self.pipeline.wb_preview(&ShellIo(&mut self.shell) as &dyn DutIo);
        // Remote hosts pop a record one word at a time, so every lane of the
        // group needs room.
        let free = |first: u32, words: u32| (first..first + words).map(|l| self.shell.d2h_free(l as usize)).min().unwrap_or(0);
        let sample_due = self.config.sample_interval.is_some_and(|i| should_sample(c, i));
        let input_lag = preview == WbPreview::Blocked
            && self.input.get(self.shell.h2d(0).pushes() as usize).is_some_and(|&(due, _)| due <= c);
        let backpressure = (sample_due && free(LANE_SAMPLE, SAMPLE_WORDS) == 0)
            || (self.config.lockstep && matches!(preview, WbPreview::Commit { .. }) && free(LANE_COMMIT, COMMIT_WORDS) == 0)
            || (preview == WbPreview::Commit { sendchar: true } && free(LANE_CHAR, 1) == 0)
            || (self.pipeline.may_request_memory() && free(LANE_MEMREQ, MEMREQ_WORDS) == 0)
            || input_lag;
        let timer_wait = self.pipeline.latency_needed()
            || self.timer.is_some_and(|(t, _)| t.try_deliver() == TimerPoll::GateNeeded);
        let exhausted = self.step_budget == Some(0)
            || self.target.is_some_and(|t| self.gate.dut_cycle >= t)
            || self.pipeline.halted()
            || self.fault.is_some();
        self.gate.set(GateReason::Backpressure, backpressure);
        self.gate.set(GateReason::TimerWait, timer_wait);
        self.gate.set(GateReason::HostPause, self.paused && self.step_budget.is_none());
        self.gate.set(GateReason::StepExhausted, exhausted);
    }

    fn push_words(&mut self, first_lane: u32, words: &[u32]) -> Result<(), KernelError> {
        for (k, &w) in words.iter().enumerate() {
            if self.shell.dut_fifo_push((first_lane + k as u32) as usize, w) != PushResult::Accepted {
                return Err(KernelError::Internal {
                    cycle: self.gate.dut_cycle,
                    what: format!("push to lane {} after a clear backpressure check", first_lane + k as u32),
                });
            }
        }
        Ok(())
    }

    /// Runs one DUT cycle; the gate check has already cleared it.
    fn advance(&mut self) -> Result<bool, KernelError> {
        let out = match self.pipeline.step_cycle(&mut ShellIo(&mut self.shell)) {
            Ok(o) => o,
            Err(e) => {
                self.fault = Some(e);
                return Ok(false);
            }
        };
        self.gate.dut_cycle = out.cycle;
        self.last_cover = out.cover;
        if let Some(b) = &mut self.step_budget {
            *b = b.saturating_sub(1);
        }
        if let Some(rec) = out.committed {
            if self.config.record_commits {
                self.commits.push(rec);
            }
            if self.config.lockstep {
                self.push_words(LANE_COMMIT, &rec.pack())?;
            }
        }
        if self.config.sample_interval.is_some_and(|i| should_sample(out.cycle, i)) {
            self.push_words(LANE_SAMPLE, &attribute(&out).pack())?;
        }
        let delivered_now = match &mut self.timer {
            Some((t, _)) => t.timer_step()?,
            None => false,
        };
        if delivered_now {
            let (t, _) = self.timer.take().unwrap();
            if out.delivered != Some(t.req_id) {
                return Err(KernelError::Internal {
                    cycle: out.cycle,
                    what: format!("timer {} fired but the pipeline delivered {:?}", t.req_id, out.delivered),
                });
            }
            if let Some(r) = self.timing.iter_mut().rev().find(|r| r.req_id == t.req_id) {
                r.deliver = out.cycle;
            }
        } else if out.delivered.is_some() {
            return Err(KernelError::Internal { cycle: out.cycle, what: "delivery without a timer".into() });
        }
        if let Some(req) = out.mem_req {
            self.push_words(LANE_MEMREQ, &pack_request(&req))?;
            if req.kind == IoKind::MemRead {
                self.awaiting = Some(req);
            }
        }
        if self.config.coverage {
            for k in 0..self.pipeline.coverage_words() {
                self.shell.set_csr_in(k, self.pipeline.cover_read_word(k));
            }
        }
        Ok(true)
    }

    fn publish_status(&mut self) {
        self.shell.set_status(ShellStatus {
            gated: self.gate.is_gated(),
            halted: self.pipeline.halted() || self.fault.is_some(),
            paused: self.paused,
            dut_cycle: self.gate.dut_cycle,
            gate_reasons: self.gate.bits(),
        });
    }

    pub fn tick(&mut self) -> Result<TickReport, KernelError> {
        self.gate.host_tick += 1;
        self.shell.set_host_tick(self.gate.host_tick);
        self.host_work();
        for cmd in self.shell.take_commands() {
            self.apply(cmd);
        }
        self.evaluate_gates();
        let reasons = self.gate.reasons().clone();
        let advanced = if reasons.is_empty() { self.advance()? } else { false };
        if !advanced {
            if reasons.is_empty() {
                // A faulting cycle never completes; account it as the end.
                self.gate.request_gate(GateReason::StepExhausted);
            }
            self.gated.charge(self.gate.reasons());
        }
        self.publish_status();
        Ok(TickReport { advanced_dut: advanced, gate_reasons: self.gate.reasons().clone() })
    }

    /// Nothing left in flight between the DUT and the host.
    pub fn quiescent(&self) -> bool {
        let drained = (0..D2H_LANES).all(|l| self.shell.d2h(l as usize).is_empty());
        match &self.host {
            Host::Local { vps, last_job, .. } => {
                drained && *last_job == HostJob::Idle && !vps.has_pending_events()
            }
            Host::Remote(mailbox) => drained && mailbox.disconnected(),
        }
    }

    fn diverged(&self) -> bool {
        self.vps().is_some_and(|v| v.diverged())
    }

    /// Ticks until `pred` holds and the host has drained everything the DUT
    /// produced. A divergence or DUT fault ends the run early.
    pub fn run_until(&mut self, pred: RunPredicate) -> Result<RunOutcome, KernelError> {
        let violations_at_start = self.shell.violations().len();
        self.target = match pred {
            RunPredicate::Cycles(n) => Some(n),
            _ => None,
        };
        loop {
            self.tick()?;
            if self.diverged() {
                return Ok(RunOutcome::Diverged);
            }
            if pred == RunPredicate::Violation && self.shell.violations().len() > violations_at_start {
                return Ok(RunOutcome::Violation);
            }
            let quiescent = self.quiescent();
            if quiescent {
                if let Some(error) = &self.fault {
                    return Ok(RunOutcome::DutFault { error: error.clone() });
                }
                if self.pipeline.halted() {
                    if self.diverged() {
                        return Ok(RunOutcome::Diverged);
                    }
                    return Ok(RunOutcome::Halted { exit_code: self.pipeline.exit_code() });
                }
                if let RunPredicate::Cycles(n) = pred {
                    if self.gate.dut_cycle >= n {
                        return Ok(RunOutcome::CyclesReached);
                    }
                }
            }
            if self.gate.dut_cycle >= self.config.watchdog_cycles {
                return Err(KernelError::Watchdog { cycles: self.gate.dut_cycle });
            }
            let local = matches!(self.host, Host::Local { .. });
            if local && quiescent && self.gate.is_gated() {
                self.stuck_ticks += 1;
                if self.stuck_ticks > DEADLOCK_TICKS {
                    return Err(KernelError::Deadlock {
                        host_tick: self.gate.host_tick,
                        reasons: self.gate.reasons().iter().copied().collect(),
                    });
                }
            } else {
                self.stuck_ticks = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::dut::{BranchPredictor, DCache};
    use crate::pshell::ControlReg;

    fn straight(n: usize) -> ProgramImage {
        let mut src = String::new();
        for k in 0..n {
            src.push_str(&format!("addi x{}, x0, {}\n", k % 8 + 1, k));
        }
        src.push_str("ecall\n");
        assemble(&src).unwrap()
    }

    fn loop_program() -> ProgramImage {
        assemble("li x1, 100000\nloop: addi x1, x1, -1\nbnez x1, loop\necall\n").unwrap()
    }

    fn kernel(img: &ProgramImage, config: KernelConfig) -> Kernel {
        Kernel::new(img, &InputScript::default(), config).unwrap()
    }

    #[test]
    fn gate_controller_set_semantics() {
        let mut g = GateController::default();
        g.request_gate(GateReason::TimerWait);
        assert!(g.is_gated());
        g.request_gate(GateReason::TimerWait);
        g.release_gate(GateReason::TimerWait);
        assert_eq!(g.state(), GateState::Running);
        g.request_gate(GateReason::TimerWait);
        g.request_gate(GateReason::HostPause);
        g.release_gate(GateReason::HostPause);
        assert!(g.is_gated());
        g.release_gate(GateReason::Backpressure);
        assert_eq!(g.reasons().len(), 1);
    }

    #[test]
    fn free_run_advances_every_tick() {
        let mut k = kernel(&loop_program(), KernelConfig::default());
        let r = k.tick().unwrap();
        assert!(r.advanced_dut && r.gate_reasons.is_empty());
        assert_eq!(k.dut_cycle(), 1);
        let out = k.run_until(RunPredicate::Cycles(100)).unwrap();
        assert_eq!(out, RunOutcome::CyclesReached);
        let s = k.summary();
        assert_eq!((s.dut_cycles, s.host_ticks, s.gated.total()), (100, 100, 0));
    }

    /// Independent tick model of one sample FIFO drained by a host that
    /// spends `cost` ticks per entry: returns host ticks until the FIFO is
    /// drained and the host is idle after `cycles` DUT cycles.
    fn drain_oracle(depth: usize, cost: u64, cycles: u64) -> u64 {
        let (mut fifo, mut busy_until, mut done, mut tick) = (0usize, 0u64, 0u64, 0u64);
        loop {
            tick += 1;
            let mut idle = false;
            if tick >= busy_until {
                if fifo > 0 {
                    fifo -= 1;
                    busy_until = tick + cost;
                } else {
                    idle = true;
                    busy_until = tick + 1;
                }
            }
            if done < cycles && fifo < depth {
                fifo += 1;
                done += 1;
            }
            if done == cycles && fifo == 0 && idle {
                return tick;
            }
        }
    }

    #[test]
    fn sample_backpressure_drain_pipeline() {
        let expected = drain_oracle(2, 5, 10);
        assert!((46..=55).contains(&expected));
        let cfg = KernelConfig {
            fifo_depth: 2,
            sample_interval: Some(1),
            cost: HostCostModel { ticks_per_sample: 5, ..Default::default() },
            ..Default::default()
        };
        let mut k = kernel(&loop_program(), cfg);
        k.run_until(RunPredicate::Cycles(10)).unwrap();
        assert_eq!(k.summary().dut_cycles, 10);
        assert_eq!(k.summary().host_ticks, expected);
        assert_eq!(k.samples().len(), 10);
    }

    #[test]
    fn full_fifo_withholds_the_cycle_until_drained() {
        let cfg = KernelConfig {
            fifo_depth: 2,
            sample_interval: Some(1),
            cost: HostCostModel { ticks_per_sample: 5, ..Default::default() },
            ..Default::default()
        };
        let mut k = kernel(&loop_program(), cfg);
        let mut saw_gate = false;
        for _ in 0..30 {
            let before = k.dut_cycle();
            let r = k.tick().unwrap();
            if !r.advanced_dut {
                saw_gate = true;
                assert_eq!(r.gate_reasons.iter().copied().collect::<Vec<_>>(), vec![GateReason::Backpressure]);
                assert_eq!(k.dut_cycle(), before);
            }
        }
        assert!(saw_gate);
    }

    #[test]
    fn step_while_paused() {
        let mut k = kernel(&loop_program(), KernelConfig::default());
        k.command(StepCommand::Pause);
        let r = k.tick().unwrap();
        assert!(!r.advanced_dut && r.gate_reasons.contains(&GateReason::HostPause));
        k.command(StepCommand::Step(3));
        let advanced: Vec<bool> = (0..5).map(|_| k.tick().unwrap().advanced_dut).collect();
        assert_eq!(advanced, vec![true, true, true, false, false]);
        assert!(k.gate().reasons().contains(&GateReason::StepExhausted));
        k.command(StepCommand::Run);
        assert!(k.tick().unwrap().advanced_dut);
    }

    #[test]
    fn step_over_mmio() {
        let mut k = kernel(&loop_program(), KernelConfig::default());
        k.shell_mut().mmio_write(ControlReg::RunCtrl.addr(), 1);
        assert!(!k.tick().unwrap().advanced_dut);
        k.shell_mut().mmio_write(ControlReg::Step.addr(), 2);
        assert!(k.tick().unwrap().advanced_dut);
        assert!(k.tick().unwrap().advanced_dut);
        assert!(!k.tick().unwrap().advanced_dut);
        assert_eq!(k.shell_mut().mmio_read(ControlReg::CycleLo.addr()), 2);
    }

    #[test]
    fn straight_line_run_matches_pipeline_diagram() {
        // 7 instructions fill in 4 cycles and then retire one per cycle; the
        // exit ecall retires in the last of them.
        let mut k = kernel(&straight(6), KernelConfig::default());
        let out = k.run_until(RunPredicate::Halted).unwrap();
        assert_eq!(out, RunOutcome::Halted { exit_code: 0 });
        assert_eq!(k.summary().dut_cycles, 4 + 7);
    }

    #[test]
    fn partition_holds() {
        let cfg = KernelConfig {
            fifo_depth: 2,
            sample_interval: Some(3),
            lockstep: true,
            cost: HostCostModel { ticks_per_sample: 7, ticks_per_io: 3, jitter: 2, seed: 5, ..Default::default() },
            ..Default::default()
        };
        let mut k = kernel(&straight(40), cfg);
        k.run_until(RunPredicate::Halted).unwrap();
        let s = k.summary();
        assert_eq!(s.host_ticks, s.dut_cycles + s.gated.total());
        assert!(s.dut_cycles <= s.host_ticks);
        assert_eq!(k.verdict(), Some(LockstepVerdict::Clean { total: 41 }));
    }

    #[test]
    fn watchdog_fires() {
        let cfg = KernelConfig { watchdog_cycles: 50, ..Default::default() };
        let mut k = kernel(&loop_program(), cfg);
        assert!(matches!(k.run_until(RunPredicate::Halted), Err(KernelError::Watchdog { cycles: 50 })));
    }

    #[test]
    fn pause_forever_is_reported() {
        let mut k = kernel(&loop_program(), KernelConfig::default());
        k.command(StepCommand::Pause);
        assert!(matches!(k.run_until(RunPredicate::Halted), Err(KernelError::Deadlock { .. })));
    }

    #[test]
    fn timed_loads_deliver_at_programmed_latency() {
        let src = "lui s0, 0x10000\nli s1, 20\nloop: lw t0, 0(s0)\nadd t1, t1, t0\naddi s0, s0, 64\naddi s1, s1, -1\nbnez s1, loop\necall\n";
        let img = assemble(src).unwrap();
        let mut reference = None;
        for seed in 0..4 {
            let cfg = KernelConfig {
                cost: HostCostModel { ticks_per_io: 3, jitter: 3, data_delay_max: 40, seed, ..Default::default() },
                record_commits: true,
                lockstep: true,
                ..Default::default()
            };
            let mut k = kernel(&img, cfg);
            k.run_until(RunPredicate::Halted).unwrap();
            assert_eq!(k.timing_trace().len(), 20);
            for r in k.timing_trace() {
                assert_eq!(r.deliver - r.issue, r.latency as u64);
            }
            assert!(k.summary().gated.timer_wait > 0);
            let key = (k.summary().dut_cycles, k.commits().to_vec());
            match &reference {
                None => reference = Some(key),
                Some(r) => assert_eq!(r, &key),
            }
        }
    }

    #[test]
    fn dut_runs_ahead_of_unprogrammed_latency() {
        let img = assemble("lui s0, 0x10000\nlw t0, 0(s0)\naddi t1, t1, 1\naddi t2, t2, 1\nadd t3, t0, t1\necall\n").unwrap();
        // A slow host: the first poll takes a long idle stretch.
        let cfg = KernelConfig { cost: HostCostModel { ticks_idle: 12, ..Default::default() }, ..Default::default() };
        let mut k = kernel(&img, cfg);
        while k.pipeline().awaiting_latency().is_none() {
            k.tick().unwrap();
        }
        let issued = k.dut_cycle();
        let mut advanced = 0;
        while k.pipeline().awaiting_latency().is_some() {
            advanced += k.tick().unwrap().advanced_dut as u64;
        }
        assert!(advanced > 0 && advanced <= 17);
        assert!(k.dut_cycle() <= issued + 17);
        k.run_until(RunPredicate::Halted).unwrap();
        let r = k.timing_trace()[0];
        assert_eq!((r.latency, r.deliver - r.issue), (20, 20));
    }

    #[test]
    fn posted_writes_occupy_banks() {
        // Store then load in the same bank, one cycle apart: the load waits 9.
        let img = assemble("lui s0, 0x10000\nsw s1, 512(s0)\nlw t0, 0(s0)\nadd t1, t0, t0\necall\n").unwrap();
        let mut k = kernel(&img, KernelConfig::default());
        k.run_until(RunPredicate::Halted).unwrap();
        assert_eq!(k.timing_trace().len(), 1);
        assert_eq!(k.timing_trace()[0].latency, 29);
    }

    #[test]
    fn getchar_waits_for_due_input() {
        let img = assemble("li a7, 2\necall\nmv s0, a0\necall\nmv s1, a0\nli a7, 3\necall\n").unwrap();
        let script = InputScript { entries: vec![(0, b'a'), (200, b'b')] };
        let cfg = KernelConfig {
            pipeline: PipelineConfig { branch_predictor: BranchPredictor::StaticNotTaken, ..Default::default() },
            cost: HostCostModel { ticks_per_io: 9, ..Default::default() },
            ..Default::default()
        };
        let mut k = Kernel::new(&img, &script, cfg).unwrap();
        k.run_until(RunPredicate::Halted).unwrap();
        assert_eq!(k.pipeline().regs()[8], b'a' as u32);
        assert_eq!(k.pipeline().regs()[9], b'b' as u32);
        assert!(k.summary().dut_cycles > 200);
    }

    #[test]
    fn sendchar_reaches_host() {
        let img = assemble("li a7, 1\nli a0, 79\necall\nli a0, 75\necall\nli a7, 3\nli a0, 0\necall\n").unwrap();
        let cfg = KernelConfig { fifo_depth: 2, cost: HostCostModel { ticks_per_io: 20, ..Default::default() }, ..Default::default() };
        let mut k = kernel(&img, cfg);
        k.run_until(RunPredicate::Halted).unwrap();
        assert_eq!(k.output(), b"OK");
    }

    #[test]
    fn fault_ends_run_with_diagnostic() {
        let img = assemble("nop\n.word 0\n").unwrap();
        let cfg = KernelConfig { pipeline: PipelineConfig { dcache: DCache::PerfectHit, ..Default::default() }, ..Default::default() };
        let mut k = kernel(&img, cfg);
        match k.run_until(RunPredicate::Halted).unwrap() {
            RunOutcome::DutFault { error: DutError::Illegal { pc: 4, .. } } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn summary_json_shape() {
        let s = RunSummary { dut_cycles: 3, host_ticks: 5, gated: GatedTicks { backpressure: 2, ..Default::default() } };
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"dut_cycles":3,"host_ticks":5,"gated":{"backpressure":2,"timer_wait":0,"host_pause":0,"step_exhausted":0}}"#
        );
    }
}
