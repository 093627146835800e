//! Clock-gated co-emulation of a small RV32I-subset pipeline against a
//! software host, with time-proportional profiling and lockstep checking.

pub mod arch;
pub mod asm;
pub mod config;
pub mod covergen;
pub mod dut;
pub mod golden;
pub mod image;
pub mod isa;
pub mod kernel;
pub mod profiler;
pub mod pshell;
pub mod timing;
pub mod transport;
pub mod vps;

pub use arch::{CommitRecord, InputScript, Memory, Syscall};
pub use asm::{assemble, AsmError};
pub use config::{ConfigError, RunConfig};
pub use covergen::{CoverKind, CoverpointDesc};
pub use dut::{CoverObs, CycleOutput, Event, Mutant, Pipeline, PipelineConfig, StallClass, COVERPOINTS};
pub use golden::{lockstep, Divergence, GoldenState, Lockstep, LockstepVerdict};
pub use image::ProgramImage;
pub use isa::{decode, encode, Instr, Op};
pub use pshell::{AddressMap, MmioViolation, PShell, PShellConfig, ViolationKind};
pub use timing::{DramModel, DramModelParams, HardwareTimer, IoRequest, TimingRecord};
pub use kernel::{GateReason, HostCostModel, Kernel, KernelConfig, RunOutcome, RunPredicate, RunSummary, StepCommand};
pub use profiler::{aggregate, slowdown, Profile, Sample, SlowdownReport, StallStack};
pub use transport::{run_bridged, BridgedRun, Decoder, Request};
