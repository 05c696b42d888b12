//! Monte Carlo harnesses: local homogeneity, de-noising through a Gaussian
//! transform, compressive-sensing sweeps and patch-wise processing of large
//! sections.

mod report;
mod runs;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use report::{aggregate, Aggregate, ExperimentReport, Record, AGGREGATES_FILE, RECORDS_FILE, TRACES_DIR};
pub use runs::{
    default_tau, run_cs_sweep, run_denoise_mc, run_lh_study, run_real_patch, solve_with_bank, BankSolution,
    PatchOutcome,
};

use crate::denoiser::{parse_bank_spec, DenoiserHandle};
use crate::error::{Error, Result};
pub use crate::workers::{worker_count, THREADS_ENV};
use crate::linops::OperatorKind;
use crate::signal::{read_sgrd, DEFAULT_LH_EPSILON};
use crate::solver::{SolverOptions, DEFAULT_LAMBDA_SYNTHETIC};
use crate::synth::SynthParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    LhStudy,
    DenoiseMc,
    CsSweep,
    RealPatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub realizations: usize,
    pub snrs: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Measurement oversampling `p / q` of the Gaussian transform.
    pub ratio: f64,
    pub lambda: f64,
    pub master_seed: u64,
    /// Bank description: comma-separated `null`, `blur`,
    /// `blur:<radius>:<sigma>`, `.dncw` files or directories of them.
    pub bank: String,
    pub solver: SolverOptions,
    /// Generator of the clean synthetic section.
    pub synth: SynthParams,
    pub lh_epsilon: f64,
    /// SNR of noise added to compressed data; `None` keeps it noiseless.
    pub cs_snr: Option<f64>,
    /// Input section (SGRD) for `real_patch`.
    pub input: Option<PathBuf>,
    pub patch_size: usize,
    /// Operator used on each patch in `real_patch`.
    pub patch_operator: OperatorKind,
    /// Keep cost histories and write them next to the report.
    pub save_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::DenoiseMc,
            realizations: 100,
            snrs: vec![1.0, 2.0, 3.0, 4.0],
            deltas: vec![0.9, 0.75, 0.5],
            ratio: 8.0,
            lambda: DEFAULT_LAMBDA_SYNTHETIC,
            master_seed: 0,
            bank: "blur".into(),
            solver: SolverOptions::default(),
            synth: SynthParams::default(),
            lh_epsilon: DEFAULT_LH_EPSILON,
            cs_snr: None,
            input: None,
            patch_size: 128,
            patch_operator: OperatorKind::Identity,
            save_traces: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if self.snrs.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad(format!("snrs must be positive, got {:?}", self.snrs));
        }
        if self.deltas.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return bad(format!("deltas must lie in (0, 1], got {:?}", self.deltas));
        }
        if !(self.ratio >= 1.0 && self.ratio.is_finite()) {
            return bad(format!("ratio must be >= 1, got {}", self.ratio));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.lh_epsilon >= 0.0) {
            return bad("lh_epsilon must be >= 0".into());
        }
        if let Some(s) = self.cs_snr {
            if !(s > 0.0) {
                return bad(format!("cs_snr must be positive, got {s}"));
            }
        }
        if self.patch_size == 0 {
            return bad("patch_size must be positive".into());
        }
        self.synth.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_bank(&self) -> Result<Vec<DenoiserHandle>> {
        parse_bank_spec(&self.bank)
    }
}

/// Runs the configured scenario with the configured bank.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let bank = cfg.load_bank()?;
    match cfg.scenario {
        Scenario::LhStudy => run_lh_study(cfg, &bank),
        Scenario::DenoiseMc => run_denoise_mc(cfg, &bank),
        Scenario::CsSweep => run_cs_sweep(cfg, &bank),
        Scenario::RealPatch => {
            let path = cfg
                .input
                .as_ref()
                .ok_or_else(|| Error::Config("real_patch needs an input section".into()))?;
            let section = read_sgrd(path)?;
            Ok(run_real_patch(cfg, &bank, &section)?.report)
        }
    }
}
