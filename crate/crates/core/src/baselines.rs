//! Classical source-count estimators on a sample spectrum: AIC, MDL, EIF and
//! the cumulative-variance PCA rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spike::estimate::check_descending;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Mdl,
    Eif,
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionCurve {
    pub criterion: Criterion,
    /// Criterion value per candidate `N = 0..K-1`; cumulative variance
    /// fractions for PCA.
    pub values: Vec<f64>,
    /// Argmin (ties to the smallest `N`), or the PCA count.
    pub count: usize,
    pub warnings: Vec<String>,
}

const LOG_FLOOR: f64 = 1e-300;

fn prepare(eigs: &[f64], t: usize) -> Result<(Vec<f64>, Vec<String>)> {
    if eigs.len() < 2 {
        return Err(Error::Data(format!("need K >= 2 eigenvalues, got {}", eigs.len())));
    }
    if t == 0 {
        return Err(Error::Config("T must be positive".into()));
    }
    check_descending(eigs)?;
    let mut warnings = Vec::new();
    let n_clamped = eigs.iter().filter(|&&l| l < LOG_FLOOR).count();
    if n_clamped > 0 {
        warnings.push(format!("{n_clamped} eigenvalue(s) clamped to {LOG_FLOOR:e}"));
    }
    Ok((eigs.iter().map(|&l| l.max(LOG_FLOOR)).collect(), warnings))
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// `log(geometric mean) - log(arithmetic mean)` of `eigs[n..]` for every `n`.
fn log_mean_ratios(eigs: &[f64]) -> Vec<f64> {
    let k = eigs.len();
    let mut out = vec![0.0; k];
    let (mut sum, mut log_sum) = (0.0, 0.0);
    for n in (0..k).rev() {
        sum += eigs[n];
        log_sum += eigs[n].ln();
        let m = (k - n) as f64;
        out[n] = log_sum / m - (sum / m).ln();
    }
    out
}

fn info_curve(eigs: &[f64], t: usize, criterion: Criterion) -> Result<CriterionCurve> {
    let (eigs, warnings) = prepare(eigs, t)?;
    let k = eigs.len();
    let tf = t as f64;
    let ratios = log_mean_ratios(&eigs);
    let values: Vec<f64> = (0..k)
        .map(|n| {
            let (nf, kf) = (n as f64, k as f64);
            let fit = (kf - nf) * tf * ratios[n];
            let dof = nf * (2.0 * kf - nf);
            match criterion {
                Criterion::Aic => -2.0 * fit + 2.0 * dof,
                _ => -fit + 0.5 * dof * tf.ln(),
            }
        })
        .collect();
    Ok(CriterionCurve {
        criterion,
        count: argmin(&values),
        values,
        warnings,
    })
}

pub fn aic_count(eigs: &[f64], t: usize) -> Result<CriterionCurve> {
    info_curve(eigs, t, Criterion::Aic)
}

pub fn mdl_count(eigs: &[f64], t: usize) -> Result<CriterionCurve> {
    info_curve(eigs, t, Criterion::Mdl)
}

/// `EIF(N) = sqrt(sum_{j>N} l_j) / (sqrt(T) (K-N)^{3/2})`.
pub fn eif_count(eigs: &[f64], t: usize) -> Result<CriterionCurve> {
    let (eigs, warnings) = prepare(eigs, t)?;
    let k = eigs.len();
    let mut values = vec![0.0; k];
    let mut tail = 0.0;
    for n in (0..k).rev() {
        tail += eigs[n];
        values[n] = tail.sqrt() / ((t as f64).sqrt() * ((k - n) as f64).powf(1.5));
    }
    Ok(CriterionCurve {
        criterion: Criterion::Eif,
        count: argmin(&values),
        values,
        warnings,
    })
}

/// Smallest `N` whose leading eigenvalues carry at least `fraction` of the
/// total variance.
pub fn pca_count(eigs: &[f64], fraction: f64) -> Result<CriterionCurve> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    check_descending(eigs)?;
    let mut warnings = Vec::new();
    if eigs.iter().any(|&l| l < 0.0) {
        warnings.push("negative eigenvalues treated as zero".into());
    }
    let clean: Vec<f64> = eigs.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = clean.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("spectrum is identically zero".into()));
    }
    let mut values = Vec::with_capacity(clean.len());
    let mut acc = 0.0;
    for &l in &clean {
        acc += l;
        values.push(acc / total);
    }
    let target = fraction * (1.0 - 1e-12);
    let count = if fraction >= 1.0 {
        clean.iter().filter(|&&l| l > 0.0).count()
    } else {
        values.iter().position(|&v| v >= target).map_or(clean.len(), |i| i + 1)
    };
    Ok(CriterionCurve {
        criterion: Criterion::Pca,
        values,
        count,
        warnings,
    })
}
