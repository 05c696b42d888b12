use log::info;
use rand::RngCore;
use rayon::prelude::*;

use super::{ExperimentConfig, ExperimentReport, Record, Scenario, TRACES_DIR};
use crate::denoiser::{select_operator, Candidate, Criterion, DenoiserHandle, Variant};
use crate::error::{Error, Result};
use crate::linops::{op_norm_estimate, DenseGaussian, LinearOperator, LinearOperatorSpec, OperatorKind, RandomizedDct};
use crate::rng;
use crate::signal::{
    add_noise_for_snr, assemble_patches, gaussian_noise_for_snr, lh_factor, partition_patches, quality_q,
    SeismicSection,
};
use crate::solver::{deep_red_solve_from, RedContext, SolverOptions, SolverResult};
use crate::synth::generate_section;
use crate::workers::with_workers;

/// Seed of realization `r`; shared by every cell and method of that
/// realization.
fn realization_seed(master: u64, r: usize) -> u64 {
    rng::stream(master, r as u64 + 1).next_u64()
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    cell: usize,
    param: &'static str,
    param_value: f64,
    realization: usize,
    seed: u64,
}

impl Ctx<'_> {
    fn record(&self, method: &str, metric: &str, value: f64, operator: &str) -> Record {
        Record {
            cell: self.cell,
            param: self.param.into(),
            param_value: self.param_value,
            realization: self.realization,
            seed: self.seed,
            method: method.into(),
            metric: metric.into(),
            value,
            operator: operator.into(),
            iterations: 0,
            cost_trace: String::new(),
            trace: None,
        }
    }

    fn solve_record(&self, method: &str, metric: &str, value: f64, operator: &str, res: &SolverResult) -> Record {
        let mut r = self.record(method, metric, value, operator);
        r.iterations = res.iterations;
        if self.cfg.save_traces {
            r.cost_trace = format!("{TRACES_DIR}/{method}_c{}_r{}.csv", self.cell, self.realization);
            r.trace = Some(res.cost_history.clone());
        }
        r
    }
}

/// Converts a numerical failure into the `-inf` sentinel record.
fn or_failed(ctx: &Ctx<'_>, method: &str, metric: &str, res: Result<Record>) -> Result<Record> {
    match res {
        Err(e) if e.is_numerical() => Ok(ctx.record(method, metric, f64::NEG_INFINITY, "")),
        other => other,
    }
}

fn run_realizations<F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<Record>>
where
    F: Fn(usize, u64) -> Result<Vec<Record>> + Sync,
{
    let per: Vec<Vec<Record>> = with_workers(|| {
        (0..cfg.realizations)
            .into_par_iter()
            .map(|r| {
                let out = f(r, realization_seed(cfg.master_seed, r));
                if (r + 1) % 10 == 0 {
                    info!("realization {}/{} done", r + 1, cfg.realizations);
                }
                out
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(per.into_iter().flatten().collect())
}

fn check_scenario(cfg: &ExperimentConfig, expected: Scenario) -> Result<()> {
    cfg.validate()?;
    if cfg.scenario != expected {
        return Err(Error::Config(format!(
            "config scenario is {:?}, expected {expected:?}",
            cfg.scenario
        )));
    }
    Ok(())
}

fn require_bank(bank: &[DenoiserHandle]) -> Result<()> {
    if bank.is_empty() {
        return Err(Error::Config("denoiser bank is empty".into()));
    }
    Ok(())
}

/// `L` of the bare network, without the unit-RMS input scaling of the
/// handle; other denoisers are returned unchanged.
fn raw_residual(h: &DenoiserHandle, m: &SeismicSection) -> Result<SeismicSection> {
    match h.variant() {
        Variant::DnCnn { folded, .. } => folded.residual(m),
        _ => h.residual(m),
    }
}

/// For every SNR: noisy copies of one clean section, the best bank member
/// by direct-denoising quality, and the local homogeneity factor of that
/// member as used by the solver (`denoiser`) and of its bare network
/// (`network`).
pub fn run_lh_study(cfg: &ExperimentConfig, bank: &[DenoiserHandle]) -> Result<ExperimentReport> {
    check_scenario(cfg, Scenario::LhStudy)?;
    require_bank(bank)?;
    let (clean, _) = generate_section(&cfg.synth, cfg.master_seed)?;
    let records = run_realizations(cfg, |r, seed| {
        let mut out = Vec::new();
        for (cell, &snr) in cfg.snrs.iter().enumerate() {
            let ctx = Ctx {
                cfg,
                cell,
                param: "snr",
                param_value: snr,
                realization: r,
                seed,
            };
            let (noisy, _) = add_noise_for_snr(&clean, snr, seed)?;
            let sel = select_operator(bank, Criterion::MaxQuality { truth: &clean }, |h| {
                Ok(Candidate::direct(h.denoise(&noisy)?))
            })?;
            let h = &bank[sel.index];
            let lh = lh_factor(|m| h.residual(m), &noisy, cfg.lh_epsilon)
                .map(|v| ctx.record("denoiser", "lh", v, h.name()));
            out.push(or_failed(&ctx, "denoiser", "lh", lh)?);
            let raw = lh_factor(|m| raw_residual(h, m), &noisy, cfg.lh_epsilon)
                .map(|v| ctx.record("network", "lh", v, h.name()));
            out.push(or_failed(&ctx, "network", "lh", raw)?);
        }
        Ok(out)
    })?;
    ExperimentReport::new(cfg.clone(), records)
}

/// `cfg` with `tau0` defaulted to `1 / |A|^2` (power iteration from `seed`).
pub fn default_tau(cfg: &SolverOptions, op: &dyn LinearOperator, seed: u64) -> SolverOptions {
    let mut opts = *cfg;
    if opts.tau0.is_none() {
        let n = op_norm_estimate(op, 20, seed);
        opts.tau0 = Some(if n > 0.0 { 1.0 / (n * n) } else { 1.0 });
    }
    opts
}

fn shape_of(s: &SeismicSection) -> (usize, usize) {
    (s.n_channels(), s.n_time())
}

/// Deep-RED solution kept by [`solve_with_bank`].
#[derive(Debug, Clone)]
pub struct BankSolution {
    pub estimate: SeismicSection,
    /// Index of the selected bank member.
    pub index: usize,
    /// Selection score of the kept solution.
    pub score: f64,
    /// Scores of all members, `-inf` for numerical failures.
    pub scores: Vec<f64>,
    pub result: SolverResult,
}

/// Solves `min |A s - y|^2 + lambda R(s)` from `s0` once per bank member
/// and keeps the best solution under `criterion`.
#[allow(clippy::too_many_arguments)]
pub fn solve_with_bank(
    bank: &[DenoiserHandle],
    criterion: Criterion<'_>,
    op: &dyn LinearOperator,
    y: &[f64],
    s0: &[f64],
    shape: (usize, usize),
    lambda: f64,
    opts: &SolverOptions,
) -> Result<BankSolution> {
    let mut runs: Vec<Option<SolverResult>> = vec![None; bank.len()];
    let mut k = 0;
    let sel = select_operator(bank, criterion, |h| {
        let red = RedContext::new(h.clone(), lambda, shape)?;
        let i = k;
        k += 1;
        let res = deep_red_solve_from(op, y, &red, opts, s0)?;
        let cand = Candidate {
            estimate: SeismicSection::from_vector(shape.0, shape.1, res.estimate.clone())?,
            initial_cost: res.initial_cost(),
            final_cost: res.final_cost(),
        };
        runs[i] = Some(res);
        Ok(cand)
    })?;
    Ok(BankSolution {
        result: runs[sel.index].take().expect("selected member ran"),
        estimate: sel.candidate.estimate,
        index: sel.index,
        score: sel.score,
        scores: sel.scores,
    })
}

#[allow(clippy::too_many_arguments)]
fn best_deep_red(
    ctx: &Ctx<'_>,
    bank: &[DenoiserHandle],
    criterion: Criterion<'_>,
    op: &dyn LinearOperator,
    y: &[f64],
    s0: &[f64],
    shape: (usize, usize),
    opts: &SolverOptions,
) -> Result<(SeismicSection, Record)> {
    let sol = solve_with_bank(bank, criterion, op, y, s0, shape, ctx.cfg.lambda, opts)?;
    let metric = match criterion {
        Criterion::MaxQuality { .. } => "q_db",
        Criterion::MaxCostReduction => "cost_reduction",
    };
    let record = ctx.solve_record("deep_red", metric, sol.score, bank[sol.index].name(), &sol.result);
    Ok((sol.estimate, record))
}

/// Per realization: a `ratio q x q` Gaussian transform of one clean
/// section, white noise added to the transformed data at each SNR, and the
/// quality of the adjoint image, of the best direct denoising of the
/// adjoint image and of the best Deep-RED solution.
pub fn run_denoise_mc(cfg: &ExperimentConfig, bank: &[DenoiserHandle]) -> Result<ExperimentReport> {
    check_scenario(cfg, Scenario::DenoiseMc)?;
    require_bank(bank)?;
    let (clean, _) = generate_section(&cfg.synth, cfg.master_seed)?;
    let shape = shape_of(&clean);
    let q = clean.len();
    let p = (cfg.ratio * q as f64).round() as usize;
    let records = run_realizations(cfg, |r, seed| {
        let mut rng = rng::from_seed(seed);
        let a = DenseGaussian::new(p, q, rng.next_u64())?;
        let opts = default_tau(&cfg.solver, &a, seed);
        let a_s = a.forward(clean.samples());
        let noise_seed = rng.next_u64();
        let mut out = Vec::new();
        for (cell, &snr) in cfg.snrs.iter().enumerate() {
            let ctx = Ctx {
                cfg,
                cell,
                param: "snr",
                param_value: snr,
                realization: r,
                seed,
            };
            // Same noise shape in every cell, scaled to the cell's SNR.
            let (noise, _) = gaussian_noise_for_snr(&a_s, snr, &mut rng::from_seed(noise_seed))?;
            let y: Vec<f64> = a_s.iter().zip(&noise).map(|(u, v)| u + v).collect();
            let s0 = a.adjoint(&y);
            let adj = SeismicSection::from_vector(shape.0, shape.1, s0.clone())?;
            out.push(ctx.record("adjoint", "q_db", quality_q(&adj, &clean)?, ""));

            let truth = Criterion::MaxQuality { truth: &clean };
            let direct = select_operator(bank, truth, |h| Ok(Candidate::direct(h.denoise(&adj)?)))
                .map(|s| ctx.record("direct", "q_db", s.score, bank[s.index].name()));
            out.push(or_failed(&ctx, "direct", "q_db", direct)?);

            let red = best_deep_red(&ctx, bank, truth, &a, &y, &s0, shape, &opts).map(|(_, rec)| rec);
            out.push(or_failed(&ctx, "deep_red", "q_db", red)?);
        }
        Ok(out)
    })?;
    ExperimentReport::new(cfg.clone(), records)
}

/// Per realization and compression rate: a randomized DCT with
/// `round(delta q)` rows, optional noise on the compressed data, and the
/// quality of the adjoint image and of the best Deep-RED recovery.
pub fn run_cs_sweep(cfg: &ExperimentConfig, bank: &[DenoiserHandle]) -> Result<ExperimentReport> {
    check_scenario(cfg, Scenario::CsSweep)?;
    require_bank(bank)?;
    let (clean, _) = generate_section(&cfg.synth, cfg.master_seed)?;
    let shape = shape_of(&clean);
    let q = clean.len();
    let records = run_realizations(cfg, |r, seed| {
        let mut rng = rng::from_seed(seed);
        let op_seed = rng.next_u64();
        let noise_seed = rng.next_u64();
        let mut out = Vec::new();
        for (cell, &delta) in cfg.deltas.iter().enumerate() {
            let ctx = Ctx {
                cfg,
                cell,
                param: "delta",
                param_value: delta,
                realization: r,
                seed,
            };
            let p = ((delta * q as f64).round() as usize).clamp(1, q);
            let a = RandomizedDct::new(p, q, op_seed)?;
            let mut y = a.forward(clean.samples());
            if let Some(snr) = cfg.cs_snr {
                let (noise, _) = gaussian_noise_for_snr(&y, snr, &mut rng::from_seed(noise_seed))?;
                for (u, v) in y.iter_mut().zip(noise) {
                    *u += v;
                }
            }
            let s0 = a.adjoint(&y);
            let adj = SeismicSection::from_vector(shape.0, shape.1, s0.clone())?;
            out.push(ctx.record("adjoint", "q_db", quality_q(&adj, &clean)?, ""));
            let opts = default_tau(&cfg.solver, &a, seed);
            let truth = Criterion::MaxQuality { truth: &clean };
            let red = best_deep_red(&ctx, bank, truth, &a, &y, &s0, shape, &opts).map(|(_, rec)| rec);
            out.push(or_failed(&ctx, "deep_red", "q_db", red)?);
        }
        Ok(out)
    })?;
    ExperimentReport::new(cfg.clone(), records)
}

#[derive(Debug, Clone)]
pub struct PatchOutcome {
    pub section: SeismicSection,
    pub report: ExperimentReport,
}

fn patch_operator(cfg: &ExperimentConfig, q: usize, seed: u64) -> Result<crate::linops::Operator> {
    let p = match cfg.patch_operator {
        OperatorKind::Identity => q,
        OperatorKind::DenseGaussian => (cfg.ratio * q as f64).round() as usize,
        OperatorKind::RandomizedDct => {
            let delta = cfg.deltas.first().copied().unwrap_or(1.0);
            ((delta * q as f64).round() as usize).clamp(1, q)
        }
    };
    LinearOperatorSpec::new(cfg.patch_operator, p, q, seed).build()
}

/// Tiles `section` into non-overlapping `patch_size` squares (smaller at
/// the bottom and right edges), solves each patch with every bank member
/// and keeps the solution with the largest cost reduction.
pub fn run_real_patch(
    cfg: &ExperimentConfig,
    bank: &[DenoiserHandle],
    section: &SeismicSection,
) -> Result<PatchOutcome> {
    cfg.validate()?;
    require_bank(bank)?;
    let (layout, patches) = partition_patches(section, cfg.patch_size, cfg.patch_size)?;
    let results: Vec<(SeismicSection, Record)> = with_workers(|| {
        patches
            .par_iter()
            .enumerate()
            .map(|(k, patch)| {
                let seed = realization_seed(cfg.master_seed, k);
                let ctx = Ctx {
                    cfg,
                    cell: k,
                    param: "patch",
                    param_value: k as f64,
                    realization: 0,
                    seed,
                };
                let q = patch.len();
                let a = patch_operator(cfg, q, seed)?;
                let y = a.forward(patch.samples());
                let s0 = a.adjoint(&y);
                let opts = default_tau(&cfg.solver, &a, seed);
                match best_deep_red(&ctx, bank, Criterion::MaxCostReduction, &a, &y, &s0, shape_of(patch), &opts) {
                    Err(e) if e.is_numerical() => Ok((
                        patch.clone(),
                        ctx.record("deep_red", "cost_reduction", f64::NEG_INFINITY, ""),
                    )),
                    other => other,
                }
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let (estimates, records): (Vec<SeismicSection>, Vec<Record>) = results.into_iter().unzip();
    let out = assemble_patches(&layout, &estimates)?;
    Ok(PatchOutcome {
        section: out,
        report: ExperimentReport::new(
            ExperimentConfig {
                scenario: Scenario::RealPatch,
                ..cfg.clone()
            },
            records,
        )?,
    })
}
