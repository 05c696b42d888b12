use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use red_seis::atomic::write_atomic;
use red_seis::denoiser::{parse_bank_spec, save_weights, Criterion, DenoiserHandle, Variant};
use red_seis::experiments::{
    default_tau, run_experiment, run_real_patch, solve_with_bank, ExperimentConfig, Scenario,
};
use red_seis::linops::{DenseGaussian, LinearOperator, OperatorKind, RandomizedDct};
use red_seis::rng;
use red_seis::signal::{gaussian_noise_for_snr, lh_factor, read_sgrd, write_sgrd, MetricRecord};
use red_seis::solver::{SolverOptions, DEFAULT_LAMBDA_PATCH, DEFAULT_LAMBDA_SYNTHETIC};
use red_seis::synth::{generate_section, SynthParams};
use red_seis::train::{train, TrainConfig};
use red_seis::{Error, SeismicSection};

use crate::{Command, CsArgs, DenoiseArgs, ExperimentArgs, LhArgs, SolveArgs, SynthArgs, TrainArgs};

pub const DEFAULT_BANK: &str = "blur";
pub const DEFAULT_RATIO: f64 = 8.0;
pub const DEFAULT_DELTA: f64 = 0.5;

pub enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub fn run(cmd: Command) -> CmdResult {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Denoise(a) => denoise(a),
        Command::Csrecover(a) => csrecover(a),
        Command::Experiment(a) => experiment(a),
        Command::Lhtest(a) => lhtest(a),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    write_atomic(path, format!("{text}\n").as_bytes())
}

fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// JSON number, or a string for non-finite values.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn synth(a: SynthArgs) -> CmdResult {
    let params = SynthParams {
        n_channels: a.channels as usize,
        n_time: a.time as usize,
        n_events: a.events as usize,
        peak_freq: a.peak_freq,
        ..SynthParams::default()
    };
    params.validate().map_err(|e| usage(e.to_string()))?;
    let (section, events) = generate_section(&params, a.seed)?;
    write_sgrd(&a.out, &section)?;
    let sidecar = a.out.with_extension("json");
    write_json(
        &sidecar,
        &json!({ "params": params, "seed": a.seed, "events": events }),
    )?;
    info!("wrote {} and {}", a.out.display(), sidecar.display());
    Ok(())
}

fn corpus_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Error> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "sgrd"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::Config("corpus contains no .sgrd files".into()));
    }
    Ok(files)
}

fn train_cmd(a: TrainArgs) -> CmdResult {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::from_json(&read_text(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.steps_per_epoch {
        cfg.steps_per_epoch = Some(s);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let corpus = corpus_files(&a.corpus)?
        .iter()
        .map(read_sgrd)
        .collect::<Result<Vec<SeismicSection>, Error>>()?;
    info!(
        "training depth {} x {} channels for {} steps on {} sections",
        cfg.depth,
        cfg.channels,
        cfg.total_steps(&corpus),
        corpus.len()
    );
    let out = train(&cfg, &corpus)?;
    save_weights(&out.weights, &a.out)?;
    let loss_path = a.loss_csv.unwrap_or_else(|| a.out.with_extension("loss.csv"));
    out.write_loss_csv(&loss_path)?;
    info!("wrote {} and {}", a.out.display(), loss_path.display());
    Ok(())
}

/// Fields accepted by the `--config` file of `denoise` and `csrecover`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveConfig {
    bank: Option<String>,
    lambda: Option<f64>,
    seed: Option<u64>,
    snr: Option<f64>,
    ratio: Option<f64>,
    delta: Option<f64>,
    patch_size: Option<usize>,
    solver: Option<SolverOptions>,
}

/// Values after applying flags > config file > defaults.
struct Resolved {
    bank: Vec<DenoiserHandle>,
    bank_spec: String,
    seed: u64,
    snr: Option<f64>,
    solver: SolverOptions,
    file: SolveConfig,
    input: SeismicSection,
}

fn resolve(a: &SolveArgs) -> Result<Resolved, Failure> {
    let file: SolveConfig = match &a.config {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => SolveConfig::default(),
    };
    if let Some(l) = a.lambda.or(file.lambda) {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(usage(format!("lambda must be >= 0, got {l}")));
        }
    }
    let snr = a.snr.or(file.snr);
    if let Some(s) = snr {
        if !(s > 0.0 && s.is_finite()) {
            return Err(usage(format!("snr must be positive, got {s}")));
        }
    }
    let solver = file.solver.unwrap_or_default();
    solver.validate().map_err(|e| usage(e.to_string()))?;
    let bank_spec = a.bank.clone().or(file.bank.clone()).unwrap_or_else(|| DEFAULT_BANK.into());
    let bank = parse_bank_spec(&bank_spec)?;
    let input = read_sgrd(&a.input)?;
    Ok(Resolved {
        bank,
        bank_spec,
        seed: a.seed.or(file.seed).unwrap_or(0),
        snr,
        solver,
        file,
        input,
    })
}

/// `A s`, plus white noise at `snr` when requested.
fn measure(op: &dyn LinearOperator, s: &SeismicSection, snr: Option<f64>, seed: u64) -> Result<Vec<f64>, Error> {
    let mut y = op.forward(s.samples());
    if let Some(snr) = snr {
        let (noise, _) = gaussian_noise_for_snr(&y, snr, &mut rng::stream(seed, 1))?;
        for (u, v) in y.iter_mut().zip(noise) {
            *u += v;
        }
    }
    Ok(y)
}

fn solve_and_write(
    r: &Resolved,
    op: &dyn LinearOperator,
    lambda: f64,
    out: &Path,
    mut summary: serde_json::Map<String, Value>,
) -> CmdResult {
    let shape = r.input.shape();
    let y = measure(op, &r.input, r.snr, r.seed)?;
    let s0 = op.adjoint(&y);
    let opts = default_tau(&r.solver, op, r.seed);
    let sol = solve_with_bank(&r.bank, Criterion::MaxCostReduction, op, &y, &s0, shape, lambda, &opts)?;
    write_sgrd(out, &sol.estimate)?;
    let res = &sol.result;
    summary.insert("operator".into(), json!(r.bank[sol.index].name()));
    summary.insert("bank".into(), json!(r.bank_spec));
    summary.insert("lambda".into(), json!(lambda));
    summary.insert("seed".into(), json!(r.seed));
    summary.insert("snr".into(), json!(r.snr));
    summary.insert("measurements".into(), json!(op.rows()));
    summary.insert("iterations".into(), json!(res.iterations));
    summary.insert("converged".into(), json!(res.converged));
    summary.insert("stop_reason".into(), json!(res.stop_reason));
    summary.insert("initial_cost".into(), num(res.initial_cost()));
    summary.insert("final_cost".into(), num(res.final_cost()));
    summary.insert("scores".into(), Value::Array(sol.scores.iter().map(|&v| num(v)).collect()));
    write_json(&out.with_extension("json"), &summary)?;
    info!(
        "{}: {} iterations with {}, cost {:.6e} -> {:.6e}",
        out.display(),
        res.iterations,
        r.bank[sol.index].name(),
        res.initial_cost(),
        res.final_cost()
    );
    Ok(())
}

fn denoise(a: DenoiseArgs) -> CmdResult {
    let r = resolve(&a.solve)?;
    let ratio = a.ratio.or(r.file.ratio);
    if let Some(v) = ratio {
        if !(v >= 1.0 && v.is_finite()) {
            return Err(usage(format!("ratio must be >= 1, got {v}")));
        }
    }
    if let Some(ps) = a.patch_size.or(r.file.patch_size) {
        if ps == 0 {
            return Err(usage("patch size must be positive"));
        }
        if r.snr.is_some() {
            return Err(usage("--snr is not supported in patch mode"));
        }
        let lambda = a.solve.lambda.or(r.file.lambda).unwrap_or(DEFAULT_LAMBDA_PATCH);
        return denoise_patches(&a, &r, ps, lambda, ratio);
    }
    let lambda = a.solve.lambda.or(r.file.lambda).unwrap_or(DEFAULT_LAMBDA_SYNTHETIC);
    let ratio = ratio.unwrap_or(DEFAULT_RATIO);
    let q = r.input.len();
    let p = (ratio * q as f64).round() as usize;
    let op = DenseGaussian::new(p, q, r.seed)?;
    let mut summary = serde_json::Map::new();
    summary.insert("mode".into(), json!("denoise"));
    summary.insert("ratio".into(), json!(ratio));
    solve_and_write(&r, &op, lambda, &a.solve.out, summary)
}

fn denoise_patches(a: &DenoiseArgs, r: &Resolved, patch_size: usize, lambda: f64, ratio: Option<f64>) -> CmdResult {
    let cfg = ExperimentConfig {
        scenario: Scenario::RealPatch,
        lambda,
        master_seed: r.seed,
        bank: r.bank_spec.clone(),
        solver: r.solver,
        patch_size,
        ratio: ratio.unwrap_or(1.0),
        patch_operator: if ratio.is_some() {
            OperatorKind::DenseGaussian
        } else {
            OperatorKind::Identity
        },
        ..ExperimentConfig::default()
    };
    let outcome = run_real_patch(&cfg, &r.bank, &r.input)?;
    write_sgrd(&a.solve.out, &outcome.section)?;
    let patches: Vec<Value> = outcome
        .report
        .records
        .iter()
        .map(|rec| json!({ "patch": rec.cell, "operator": rec.operator, "cost_reduction": num(rec.value), "iterations": rec.iterations }))
        .collect();
    let summary = json!({
        "mode": "denoise_patches",
        "bank": r.bank_spec,
        "lambda": lambda,
        "seed": r.seed,
        "patch_size": patch_size,
        "operator": cfg.patch_operator,
        "ratio": ratio,
        "patches": patches,
    });
    write_json(&a.solve.out.with_extension("json"), &summary)?;
    info!("{}: {} patches", a.solve.out.display(), patches.len());
    Ok(())
}

fn csrecover(a: CsArgs) -> CmdResult {
    let r = resolve(&a.solve)?;
    let delta = a.delta.or(r.file.delta).unwrap_or(DEFAULT_DELTA);
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(usage(format!("delta must lie in (0, 1], got {delta}")));
    }
    let lambda = a.solve.lambda.or(r.file.lambda).unwrap_or(DEFAULT_LAMBDA_SYNTHETIC);
    let q = r.input.len();
    let p = ((delta * q as f64).round() as usize).clamp(1, q);
    let op = RandomizedDct::new(p, q, r.seed)?;
    let mut summary = serde_json::Map::new();
    summary.insert("mode".into(), json!("csrecover"));
    summary.insert("delta".into(), json!(delta));
    solve_and_write(&r, &op, lambda, &a.solve.out, summary)
}

fn experiment(a: ExperimentArgs) -> CmdResult {
    let mut cfg = ExperimentConfig::from_json(&read_text(&a.config)?)?;
    if let Some(n) = a.realizations {
        cfg.realizations = n;
    }
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(b) = a.bank {
        cfg.bank = b;
    }
    cfg.validate()?;
    let report = run_experiment(&cfg)?;
    report.write(&a.out)?;
    for g in &report.aggregates {
        println!(
            "{}={} {:<10} {:<14} mean {:>12.6e} std {:>12.6e} n {} failed {}",
            g.param, g.param_value, g.method, g.metric, g.mean, g.std, g.n, g.failed
        );
    }
    info!("wrote report to {}", a.out.display());
    Ok(())
}

fn lhtest(a: LhArgs) -> CmdResult {
    if !(a.epsilon >= 0.0 && a.epsilon.is_finite()) {
        return Err(usage(format!("epsilon must be >= 0, got {}", a.epsilon)));
    }
    let bank = parse_bank_spec(&a.weights)?;
    let s = read_sgrd(&a.input)?;
    for h in &bank {
        let handle = lh_factor(|m| h.residual(m), &s, a.epsilon)?;
        let network = match h.variant() {
            Variant::DnCnn { folded, .. } => lh_factor(|m| folded.residual(m), &s, a.epsilon)?,
            _ => handle,
        };
        for (kind, value) in [("denoiser", handle), ("network", network)] {
            let rec = MetricRecord {
                metric: "lh".into(),
                value,
                seed: 0,
                params: json!({ "operator": h.name(), "kind": kind, "epsilon": a.epsilon }),
            };
            println!("{}", serde_json::to_string(&rec).map_err(Error::from)?);
        }
    }
    Ok(())
}
