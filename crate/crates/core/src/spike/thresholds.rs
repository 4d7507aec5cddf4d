//! Data-driven choice of the bulk cut `delta` and the grouping radius
//! `epsilon`.

use std::collections::HashMap;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::estimate::{check_descending, estimate_bulk, estimate_spike_group, group_eigenvalues};
use super::model::bartlett_factor;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigenvalues_desc;
use crate::rng::{substream, SamplingDist};

/// Walks up from the smallest eigenvalue while adjacent gaps stay below
/// `epsilon0 / 2` and returns the eigenvalue where the walk stopped.
///
/// Fails with [`Error::ModelNotApplicable`] when the walk reaches the top of
/// the spectrum.
pub fn choose_delta(eigs: &[f64], epsilon0: f64) -> Result<f64> {
    check_descending(eigs)?;
    if eigs.len() < 2 {
        return Err(Error::Data("need at least two eigenvalues".into()));
    }
    if !(epsilon0.is_finite() && epsilon0 > 0.0) {
        return Err(Error::Config(format!("epsilon0 must be positive, got {epsilon0}")));
    }
    let mut i = eigs.len() - 1;
    while eigs[i - 1] - eigs[i] < epsilon0 / 2.0 {
        i -= 1;
        if i == 0 {
            return Err(Error::ModelNotApplicable);
        }
    }
    Ok(eigs[i])
}

/// When the `epsilon` sweep ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum StopRule {
    /// Stop once `epsilon >= p * lambda_1`.
    Fraction(f64),
    /// Stop once `epsilon >= lambda_1 - lambda_K`.
    Span,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::Fraction(0.4)
    }
}

impl StopRule {
    fn limit(self, eigs: &[f64]) -> f64 {
        match self {
            StopRule::Fraction(p) => p * eigs[0],
            StopRule::Span => eigs[0] - eigs[eigs.len() - 1],
        }
    }
}

/// How well a candidate's estimated population explains the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Discrepancy {
    /// Relative distance between the observed sample spectrum and the mean
    /// sample spectrum simulated from the candidate population, averaged
    /// over `replicates` white Wishart draws shared by all candidates.
    Spectrum { replicates: usize },
    /// `||mean_i Z_i - zbar|| / ||zbar||` over `samples` draws
    /// `Z_i ~ N(zbar, V_K)` with common random numbers. Requires the data mean.
    MeanVector { samples: usize },
}

impl Default for Discrepancy {
    fn default() -> Self {
        Discrepancy::Spectrum { replicates: 10 }
    }
}

type CandidateOutcome = (Vec<f64>, std::result::Result<f64, String>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSearch {
    pub epsilon0: f64,
    pub epsilon_prime: f64,
    /// Number of samples behind the spectrum.
    pub n_samples: usize,
    /// Whether the spectrum came from a centered covariance.
    pub centered: bool,
    pub stop_rule: StopRule,
    pub discrepancy: Discrepancy,
    pub dist: SamplingDist,
    /// Reject candidates whose adjacent estimated spikes are closer than
    /// `epsilon0`, or which do not clear the bulk estimate.
    pub require_spike_gap: bool,
    pub max_candidates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCandidate {
    pub epsilon: f64,
    pub groups: Vec<Range<usize>>,
    pub estimates: Vec<f64>,
    pub bulk: f64,
    /// `None` when some group could not be estimated.
    pub discrepancy: Option<f64>,
    pub admissible: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonChoice {
    pub epsilon: f64,
    /// Index into `candidates` of the chosen one.
    pub chosen: Option<usize>,
    pub candidates: Vec<EpsilonCandidate>,
    pub warnings: Vec<String>,
}

impl EpsilonChoice {
    /// Discrepancy per candidate, `NaN` where none was computed.
    pub fn trace(&self) -> Vec<f64> {
        self.candidates
            .iter()
            .map(|c| c.discrepancy.unwrap_or(f64::NAN))
            .collect()
    }
}

enum Reference {
    Spectrum {
        observed: Vec<f64>,
        observed_norm: f64,
        wisharts: Vec<DMatrix<f64>>,
    },
    Mean {
        gbar: Vec<f64>,
        zbar_norm: f64,
    },
}

fn white_wishart(cfg: &EpsilonSearch, k: usize, index: u64) -> Result<DMatrix<f64>> {
    let t = cfg.n_samples;
    let mut rng = substream(cfg.seed, "epsilon-wishart", index);
    let dof = if cfg.centered { t - 1 } else { t };
    if cfg.dist == SamplingDist::Gaussian && dof >= k {
        let a = bartlett_factor(&mut rng, k, dof)?;
        return Ok(&a * a.transpose() / t as f64);
    }
    let mut g = DMatrix::from_vec(k, t, cfg.dist.draw(&mut rng, k * t));
    if cfg.centered {
        let mean = g.column_mean();
        for mut col in g.column_iter_mut() {
            col -= &mean;
        }
    }
    Ok(&g * g.transpose() / t as f64)
}

impl Reference {
    fn build(eigs: &[f64], data_mean: Option<&[f64]>, cfg: &EpsilonSearch) -> Result<Self> {
        let k = eigs.len();
        match cfg.discrepancy {
            Discrepancy::Spectrum { replicates } => {
                if replicates == 0 {
                    return Err(Error::Config("need at least one replicate".into()));
                }
                let observed_norm = eigs.iter().map(|l| l * l).sum::<f64>().sqrt();
                if observed_norm == 0.0 {
                    return Err(Error::Degenerate("spectrum is identically zero".into()));
                }
                let wisharts = (0..replicates as u64)
                    .map(|i| white_wishart(cfg, k, i))
                    .collect::<Result<_>>()?;
                Ok(Reference::Spectrum {
                    observed: eigs.to_vec(),
                    observed_norm,
                    wisharts,
                })
            }
            Discrepancy::MeanVector { samples } => {
                if samples == 0 {
                    return Err(Error::Config("need at least one sample".into()));
                }
                let zbar = data_mean.ok_or_else(|| {
                    Error::Config("mean-vector discrepancy needs the data mean".into())
                })?;
                if zbar.len() != k {
                    return Err(Error::dims(k, zbar.len()));
                }
                let zbar_norm = zbar.iter().map(|z| z * z).sum::<f64>().sqrt();
                if zbar_norm == 0.0 {
                    return Err(Error::Degenerate(
                        "data mean is zero; the mean-vector discrepancy is undefined".into(),
                    ));
                }
                let mut gbar = vec![0.0; k];
                let mut draw = vec![0.0; k];
                for i in 0..samples as u64 {
                    cfg.dist.fill(&mut substream(cfg.seed, "epsilon-mc", i), &mut draw);
                    for (a, d) in gbar.iter_mut().zip(&draw) {
                        *a += d / samples as f64;
                    }
                }
                Ok(Reference::Mean { gbar, zbar_norm })
            }
        }
    }

    /// `pop` is the candidate population spectrum (diagonal of `V_K`).
    fn discrepancy(&self, pop: &[f64]) -> f64 {
        match self {
            Reference::Spectrum {
                observed,
                observed_norm,
                wisharts,
            } => {
                let root: Vec<f64> = pop.iter().map(|d| d.sqrt()).collect();
                let mut mean = vec![0.0; observed.len()];
                for w in wisharts {
                    let mut s = w.clone();
                    for j in 0..s.ncols() {
                        for i in 0..s.nrows() {
                            s[(i, j)] *= root[i] * root[j];
                        }
                    }
                    for (m, l) in mean.iter_mut().zip(symmetric_eigenvalues_desc(&s)) {
                        *m += l / wisharts.len() as f64;
                    }
                }
                let diff: f64 = mean
                    .iter()
                    .zip(observed)
                    .map(|(m, o)| (m - o).powi(2))
                    .sum::<f64>()
                    .sqrt();
                diff / observed_norm
            }
            Reference::Mean { gbar, zbar_norm } => {
                let n: f64 = pop
                    .iter()
                    .zip(gbar)
                    .map(|(d, g)| d * g * g)
                    .sum::<f64>()
                    .sqrt();
                n / zbar_norm
            }
        }
    }
}

/// Candidate population spectrum: each estimate repeated over its group,
/// the bulk estimate elsewhere, clamped at zero.
pub fn candidate_population(k: usize, groups: &[Range<usize>], estimates: &[f64], bulk: f64) -> Vec<f64> {
    let mut pop = vec![bulk.max(0.0); k];
    let mut i = 0;
    for (g, &est) in groups.iter().zip(estimates) {
        for p in &mut pop[i..i + g.len()] {
            *p = est.max(0.0);
        }
        i += g.len();
    }
    pop
}

/// Sweeps `epsilon = j * epsilon0` for `j = 1, 2, ...` and keeps the
/// candidate with the smallest discrepancy; ties go to the smallest epsilon.
pub fn choose_epsilon(
    eigs: &[f64],
    delta: f64,
    data_mean: Option<&[f64]>,
    cfg: &EpsilonSearch,
) -> Result<EpsilonChoice> {
    check_descending(eigs)?;
    if !(cfg.epsilon0.is_finite() && cfg.epsilon0 > 0.0) {
        return Err(Error::Config(format!("epsilon0 must be positive, got {}", cfg.epsilon0)));
    }
    if cfg.max_candidates == 0 {
        return Err(Error::Config("max_candidates must be positive".into()));
    }
    let k = eigs.len();
    let mut warnings = Vec::new();
    if !eigs.iter().any(|&l| l > delta) {
        warnings.push(format!(
            "no sample eigenvalue exceeds delta = {delta}; epsilon falls back to epsilon0"
        ));
        return Ok(EpsilonChoice {
            epsilon: cfg.epsilon0,
            chosen: None,
            candidates: Vec::new(),
            warnings,
        });
    }
    let bulk = estimate_bulk(eigs, delta)?;
    let reference = Reference::build(eigs, data_mean, cfg)?;
    let limit = cfg.stop_rule.limit(eigs);

    // Keyed by group sizes: estimates and discrepancy (or the failure message).
    let mut cache: HashMap<Vec<usize>, CandidateOutcome> = HashMap::new();
    let mut candidates = Vec::new();
    for j in 1..=cfg.max_candidates {
        let epsilon = j as f64 * cfg.epsilon0;
        let groups = group_eigenvalues(eigs, delta, epsilon)?;
        let signature: Vec<usize> = groups.iter().map(|g| g.len()).collect();
        let (estimates, outcome) = cache
            .entry(signature)
            .or_insert_with(|| {
                let est: Result<Vec<f64>> = groups
                    .iter()
                    .map(|g| estimate_spike_group(eigs, g, cfg.n_samples, k, cfg.epsilon_prime))
                    .collect();
                match est {
                    Ok(est) => {
                        let pop = candidate_population(k, &groups, &est, bulk);
                        let d = reference.discrepancy(&pop);
                        (est, Ok(d))
                    }
                    Err(e) => (Vec::new(), Err(e.to_string())),
                }
            })
            .clone();

        let (discrepancy, mut admissible, mut note) = match outcome {
            Ok(d) => (Some(d), true, None),
            Err(msg) => (None, false, Some(msg)),
        };
        if admissible && cfg.require_spike_gap {
            if let Some(w) = estimates.windows(2).find(|w| w[0] - w[1] < cfg.epsilon0) {
                admissible = false;
                note = Some(format!(
                    "adjacent estimates {:.4} and {:.4} are closer than epsilon0",
                    w[0], w[1]
                ));
            } else if let Some(e) = estimates.iter().find(|&&e| e <= bulk) {
                admissible = false;
                note = Some(format!("estimate {e:.4} does not exceed the bulk {bulk:.4}"));
            }
        }
        candidates.push(EpsilonCandidate {
            epsilon,
            groups,
            estimates,
            bulk,
            discrepancy,
            admissible,
            note,
        });
        if epsilon >= limit * (1.0 - 1e-9) {
            break;
        }
        if j == cfg.max_candidates {
            warnings.push(format!(
                "epsilon sweep stopped after {j} candidates before reaching the stop rule"
            ));
        }
    }

    let argmin = |pred: &dyn Fn(&EpsilonCandidate) -> bool| {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            if let (true, Some(d)) = (pred(c), c.discrepancy) {
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
        }
        best.map(|b| b.0)
    };
    let mut chosen = argmin(&|c| c.admissible);
    if chosen.is_none() {
        chosen = argmin(&|_| true);
        if chosen.is_some() {
            warnings.push(
                "no candidate separates its estimated spikes by epsilon0; using the best unfiltered one"
                    .into(),
            );
        } else {
            warnings.push("no candidate produced valid estimates; epsilon falls back to epsilon0".into());
        }
    }
    let epsilon = chosen.map_or(cfg.epsilon0, |i| candidates[i].epsilon);
    Ok(EpsilonChoice {
        epsilon,
        chosen,
        candidates,
        warnings,
    })
}
