//! Operator banks and best-operator selection.

use std::path::Path;

use super::{load_weights, DenoiserHandle};
use crate::error::{Error, Result};
use crate::signal::{quality_q, SeismicSection};

/// Loads every `*.dncw` file in `dir`, ordered by file name.
pub fn load_bank(dir: impl AsRef<Path>) -> Result<Vec<DenoiserHandle>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dncw"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no .dncw weight files in {}",
            dir.display()
        )));
    }
    paths.iter().map(|p| load_handle(p)).collect()
}

fn load_handle(path: &Path) -> Result<DenoiserHandle> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    DenoiserHandle::dncnn(name, load_weights(path)?)
}

/// Parses a comma-separated bank description. Entries are `null`, `blur`,
/// `blur:<radius>:<sigma>`, a `.dncw` file, or a directory of them.
pub fn parse_bank_spec(spec: &str) -> Result<Vec<DenoiserHandle>> {
    let mut bank = Vec::new();
    for entry in spec.split(',').map(str::trim).filter(|e| !e.is_empty()) {
        match entry {
            "null" => bank.push(DenoiserHandle::null()),
            "blur" => bank.push(DenoiserHandle::default_blur()),
            e if e.starts_with("blur:") => {
                let parts: Vec<&str> = e.split(':').collect();
                let parsed = (parts.len() == 3)
                    .then(|| Some((parts[1].parse().ok()?, parts[2].parse().ok()?)))
                    .flatten();
                let (radius, sigma) = parsed.ok_or_else(|| {
                    Error::Config(format!("bad blur entry {e:?}, expected blur:<radius>:<sigma>"))
                })?;
                bank.push(DenoiserHandle::gaussian_blur(radius, sigma)?);
            }
            path => {
                let p = Path::new(path);
                if p.is_dir() {
                    bank.extend(load_bank(p)?);
                } else {
                    bank.push(load_handle(p)?);
                }
            }
        }
    }
    if bank.is_empty() {
        return Err(Error::Config("empty denoiser bank".into()));
    }
    Ok(bank)
}

/// How bank members are ranked.
#[derive(Debug, Clone, Copy)]
pub enum Criterion<'a> {
    /// Highest quality of reconstruction against a known truth.
    MaxQuality { truth: &'a SeismicSection },
    /// Largest drop from initial to final cost (no ground truth).
    MaxCostReduction,
}

/// Output of evaluating one bank member.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub estimate: SeismicSection,
    pub initial_cost: f64,
    pub final_cost: f64,
}

impl Candidate {
    /// A direct application without cost bookkeeping.
    pub fn direct(estimate: SeismicSection) -> Self {
        Self {
            estimate,
            initial_cost: 0.0,
            final_cost: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub index: usize,
    pub score: f64,
    pub candidate: Candidate,
    /// Score of every member, `-inf` for members whose evaluation failed
    /// numerically.
    pub scores: Vec<f64>,
}

/// Evaluates each bank member with `run` and keeps the best score under
/// `criterion`. Ties go to the lowest index. Numerical failures of a member
/// score `-inf`; other errors abort.
pub fn select_operator<F>(
    bank: &[DenoiserHandle],
    criterion: Criterion<'_>,
    mut run: F,
) -> Result<Selection>
where
    F: FnMut(&DenoiserHandle) -> Result<Candidate>,
{
    if bank.is_empty() {
        return Err(Error::invalid("empty denoiser bank"));
    }
    let mut best: Option<(usize, f64, Candidate)> = None;
    let mut scores = Vec::with_capacity(bank.len());
    let mut first_failure = None;
    for (i, handle) in bank.iter().enumerate() {
        let cand = match run(handle) {
            Ok(c) => c,
            Err(e) if e.is_numerical() => {
                scores.push(f64::NEG_INFINITY);
                first_failure.get_or_insert(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let score = match criterion {
            Criterion::MaxQuality { truth } => quality_q(&cand.estimate, truth)?,
            Criterion::MaxCostReduction => cand.initial_cost - cand.final_cost,
        };
        scores.push(score);
        let better = match &best {
            None => true,
            Some((_, s, _)) => score > *s,
        };
        if better {
            best = Some((i, score, cand));
        }
    }
    match best {
        Some((index, score, candidate)) => Ok(Selection {
            index,
            score,
            candidate,
            scores,
        }),
        None => Err(first_failure.expect("every member failed")),
    }
}
