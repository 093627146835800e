//! Run configuration: everything that determines an emulation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::InputScript;
use crate::dut::{BranchPredictor, DCache, ICache, Mutant, PipelineConfig};
use crate::kernel::{HostCostModel, KernelConfig, DEFAULT_WATCHDOG};
use crate::timing::{DramModel, DramModelParams};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub branch_predictor: BranchPredictor,
    pub btb_size: u32,
    pub icache: ICache,
    pub dcache: DCache,
    pub mutant: Option<Mutant>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        PipelineSection {
            branch_predictor: p.branch_predictor,
            btb_size: p.btb_size,
            icache: p.icache,
            dcache: p.dcache,
            mutant: p.mutant,
        }
    }
}

/// Host cost fields. The seed lives at the top level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HostSection {
    pub ticks_per_sample: u32,
    pub ticks_per_io: u32,
    pub ticks_idle: u32,
    pub jitter: u32,
    pub data_delay_max: u32,
}

impl Default for HostSection {
    fn default() -> Self {
        let c = HostCostModel::default();
        HostSection {
            ticks_per_sample: c.ticks_per_sample,
            ticks_per_io: c.ticks_per_io,
            ticks_idle: c.ticks_idle,
            jitter: c.jitter,
            data_delay_max: c.data_delay_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Assembly source (`.s`) or image text.
    pub program: Option<String>,
    /// Overrides the image's entry point.
    pub entry: Option<u32>,
    pub catchup_enabled: bool,
    /// Profile every this many DUT cycles; absent disables sampling.
    pub sample_interval: Option<u64>,
    pub lockstep: bool,
    pub coverage: bool,
    pub fifo_depth: u32,
    pub seed: u64,
    pub watchdog_cycles: u64,
    /// Bytes for getchar, all available from reset.
    pub stdin: Option<String>,
    pub host: HostSection,
    pub dram: DramModelParams,
    pub pipeline: PipelineSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            program: None,
            entry: None,
            catchup_enabled: false,
            sample_interval: None,
            lockstep: false,
            coverage: false,
            fifo_depth: KernelConfig::default().fifo_depth,
            seed: 0,
            watchdog_cycles: DEFAULT_WATCHDOG,
            stdin: None,
            host: HostSection::default(),
            dram: DramModelParams::default(),
            pipeline: PipelineSection::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        if self.fifo_depth < 2 || !self.fifo_depth.is_power_of_two() {
            return bad(format!("fifo_depth {} must be a power of two and at least 2", self.fifo_depth));
        }
        let h = &self.host;
        for (name, v) in [("ticks_per_sample", h.ticks_per_sample), ("ticks_per_io", h.ticks_per_io), ("ticks_idle", h.ticks_idle)] {
            if v == 0 {
                return bad(format!("host.{name} must be at least 1"));
            }
        }
        if self.sample_interval == Some(0) {
            return bad("sample_interval must be at least 1".into());
        }
        if self.watchdog_cycles == 0 {
            return bad("watchdog_cycles must be at least 1".into());
        }
        if let BranchPredictor::TwoBit { entries } = self.pipeline.branch_predictor {
            if entries == 0 || !entries.is_power_of_two() {
                return bad(format!("predictor entries {entries} must be a power of two"));
            }
        }
        if self.pipeline.btb_size == 0 || !self.pipeline.btb_size.is_power_of_two() {
            return bad(format!("btb_size {} must be a power of two", self.pipeline.btb_size));
        }
        if let ICache::ColdMiss { line_bytes, .. } = self.pipeline.icache {
            if line_bytes < 4 || !line_bytes.is_power_of_two() {
                return bad(format!("icache line_bytes {line_bytes} must be a power of two of at least 4"));
            }
        }
        DramModel::new(self.dram).map_err(|e| ConfigError(format!("dram: {e}")))?;
        Ok(())
    }

    pub fn kernel_config(&self) -> KernelConfig {
        let h = self.host;
        let p = &self.pipeline;
        KernelConfig {
            fifo_depth: self.fifo_depth,
            cost: HostCostModel {
                ticks_per_sample: h.ticks_per_sample,
                ticks_per_io: h.ticks_per_io,
                ticks_idle: h.ticks_idle,
                jitter: h.jitter,
                data_delay_max: h.data_delay_max,
                seed: self.seed,
            },
            sample_interval: self.sample_interval,
            lockstep: self.lockstep,
            coverage: self.coverage,
            dram: self.dram,
            pipeline: PipelineConfig {
                catchup_enabled: self.catchup_enabled,
                branch_predictor: p.branch_predictor,
                btb_size: p.btb_size,
                icache: p.icache,
                dcache: p.dcache,
                mutant: p.mutant,
            },
            watchdog_cycles: self.watchdog_cycles,
            record_commits: false,
        }
    }

    pub fn input_script(&self) -> InputScript {
        InputScript::immediate(self.stdin.as_deref().unwrap_or("").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_match_kernel_defaults() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.kernel_config(), KernelConfig::default());
    }

    #[test]
    fn json_partial_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(
            r#"{"catchup_enabled": true, "host": {"ticks_per_sample": 32}, "pipeline": {"dcache": {"kind": "perfect-hit"}}}"#,
        )
        .unwrap();
        assert!(c.catchup_enabled);
        assert_eq!(c.host.ticks_per_sample, 32);
        assert_eq!(c.host.ticks_idle, 1);
        assert_eq!(c.pipeline.dcache, DCache::PerfectHit);
        assert_eq!(c.dram, DramModelParams::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"fifo": 4}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"dram": {"latency": 4}}"#).is_err());
    }

    #[test]
    fn validation_errors() {
        let mut c = RunConfig { fifo_depth: 1, ..Default::default() };
        assert!(c.validate().unwrap_err().0.contains("fifo_depth 1"));
        c.fifo_depth = 4;
        c.host.ticks_per_io = 0;
        assert!(c.validate().is_err());
        c.host.ticks_per_io = 1;
        c.sample_interval = Some(0);
        assert!(c.validate().is_err());
        c.sample_interval = Some(3);
        c.dram.bank_count = 6;
        assert!(c.validate().unwrap_err().0.starts_with("dram:"));
    }
}
