//! Grouping of sample spikes and the population-spike estimator.

use std::ops::Range;

use crate::error::{Error, Result};

/// Marčenko–Pastur support `[sigma2 (1 - sqrt g)^2, sigma2 (1 + sqrt g)^2]`.
pub fn mp_edges(gamma: f64, sigma2: f64) -> Result<(f64, f64)> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Config(format!("aspect ratio must be positive, got {gamma}")));
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::Config(format!("variance must be positive, got {sigma2}")));
    }
    let r = gamma.sqrt();
    Ok((sigma2 * (1.0 - r).powi(2), sigma2 * (1.0 + r).powi(2)))
}

pub(crate) fn check_descending(eigs: &[f64]) -> Result<()> {
    if let Some(i) = eigs.windows(2).position(|w| !(w[0] >= w[1])) {
        return Err(Error::Data(format!(
            "eigenvalues must be sorted descending (index {} = {}, index {} = {})",
            i,
            eigs[i],
            i + 1,
            eigs[i + 1]
        )));
    }
    Ok(())
}

/// Greedy grouping of `{k : eigs[k] > delta}`.
///
/// Each group starts at the first unassigned index and absorbs every
/// following index whose eigenvalue lies within `epsilon` of the group's
/// first eigenvalue. Groups are returned as index ranges, in order.
pub fn group_eigenvalues(eigs: &[f64], delta: f64, epsilon: f64) -> Result<Vec<Range<usize>>> {
    check_descending(eigs)?;
    if !delta.is_finite() {
        return Err(Error::Config(format!("delta must be finite, got {delta}")));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let n_spiked = eigs.iter().take_while(|&&l| l > delta).count();
    let mut groups = Vec::new();
    let mut start = 0;
    while start < n_spiked {
        let head = eigs[start];
        let mut end = start + 1;
        while end < n_spiked && (head - eigs[end]).abs() <= epsilon {
            end += 1;
        }
        groups.push(start..end);
        start = end;
    }
    Ok(groups)
}

/// Mean of the sample eigenvalues in `group`.
pub fn group_mean(eigs: &[f64], group: &Range<usize>) -> f64 {
    eigs[group.clone()].iter().sum::<f64>() / group.len() as f64
}

/// Population spike estimate `-1/s` for one group, where
/// `s = (gamma - 1)/x + (1/T) sum_{j : |l_j - x| > eps'} 1/(l_j - x)`
/// and `x` is the group mean. The sum runs over all of `eigs`.
pub fn estimate_spike_group(
    eigs: &[f64],
    group: &Range<usize>,
    t: usize,
    k: usize,
    epsilon_prime: f64,
) -> Result<f64> {
    if group.is_empty() || group.end > eigs.len() {
        return Err(Error::Config(format!(
            "group {group:?} is empty or outside {} eigenvalues",
            eigs.len()
        )));
    }
    if t == 0 || k == 0 {
        return Err(Error::Config("T and K must be positive".into()));
    }
    let gamma = k as f64 / t as f64;
    if gamma >= 1.0 {
        return Err(Error::Config(format!(
            "aspect ratio K/T = {gamma} must be below 1"
        )));
    }
    let x = group_mean(eigs, group);
    if !(x > 0.0) {
        return Err(Error::Estimation(format!("group mean {x} is not positive")));
    }
    let tail: f64 = eigs
        .iter()
        .filter(|&&l| (l - x).abs() > epsilon_prime)
        .map(|&l| 1.0 / (l - x))
        .sum();
    let s = (gamma - 1.0) / x + tail / t as f64;
    if s == 0.0 || !s.is_finite() {
        return Err(Error::Estimation(format!(
            "Stieltjes statistic is {s} for group {group:?}"
        )));
    }
    let est = -1.0 / s;
    if !(est > 0.0) {
        return Err(Error::Estimation(format!(
            "non-positive spike estimate {est} for group {group:?}"
        )));
    }
    Ok(est)
}

/// Mean of the sample eigenvalues at or below `delta`.
pub fn estimate_bulk(eigs: &[f64], delta: f64) -> Result<f64> {
    let (sum, n) = eigs
        .iter()
        .filter(|&&l| l <= delta)
        .fold((0.0, 0usize), |(s, n), &l| (s + l, n + 1));
    if n == 0 {
        return Err(Error::Estimation(format!("no eigenvalue at or below delta = {delta}")));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mp_edge_examples() {
        let (a, b) = mp_edges(1e-14, 1.0).unwrap();
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-6);
        assert_eq!(mp_edges(1.0, 1.0).unwrap(), (0.0, 4.0));
        // (1 -+ sqrt(0.05))^2 = 1.05 -+ 2 sqrt(0.05)
        let (a, b) = mp_edges(0.05, 1.0).unwrap();
        assert_abs_diff_eq!(a, 0.6028, epsilon = 5e-5);
        assert_abs_diff_eq!(b, 1.4972, epsilon = 5e-5);
        assert_abs_diff_eq!(a + b, 2.1, epsilon = 1e-14);
        let (a2, b2) = mp_edges(0.05, 2.0).unwrap();
        assert_abs_diff_eq!(a2, 2.0 * a, epsilon = 1e-15);
        assert_abs_diff_eq!(b2, 2.0 * b, epsilon = 1e-15);
        assert!(mp_edges(0.0, 1.0).is_err());
    }

    #[test]
    fn grouping_examples() {
        let e = [20.0, 19.9, 1.0, 0.9];
        assert_eq!(group_eigenvalues(&e, 2.0, 0.2).unwrap(), vec![0..2]);
        assert!(group_eigenvalues(&e, 25.0, 0.2).unwrap().is_empty());
        assert_eq!(group_eigenvalues(&e, 0.95, 0.05).unwrap(), vec![0..1, 1..2, 2..3]);
        assert!(matches!(group_eigenvalues(&[1.0, 2.0], 0.5, 0.1), Err(Error::Data(_))));
    }

    #[test]
    fn grouping_is_anchored_at_the_first_member() {
        // 10 -> 9.6 -> 9.2: chained gaps are small but 9.2 is 0.8 from the head.
        let e = [10.0, 9.6, 9.2, 1.0];
        assert_eq!(group_eigenvalues(&e, 2.0, 0.5).unwrap(), vec![0..2, 2..3]);
    }

    #[test]
    fn estimate_collapses_to_sample_value_at_vanishing_gamma() {
        let e = [20.0];
        let est = estimate_spike_group(&e, &(0..1), 1_000_000_000, 1, 0.2).unwrap();
        assert_abs_diff_eq!(est, 20.0, epsilon = 1e-6);
    }

    #[test]
    fn estimate_matches_hand_computation() {
        let e = [10.0, 2.0, 1.0];
        // gamma = 3/30, x = 10, s = (0.1 - 1)/10 + (1/30)(1/(2-10) + 1/(1-10))
        let s = -0.09 + (1.0 / 30.0) * (-1.0 / 8.0 - 1.0 / 9.0);
        let est = estimate_spike_group(&e, &(0..1), 30, 3, 0.1).unwrap();
        assert_abs_diff_eq!(est, -1.0 / s, epsilon = 1e-12);
    }

    #[test]
    fn estimation_errors() {
        assert!(matches!(
            estimate_spike_group(&[0.0, -1.0], &(0..1), 10, 2, 0.1),
            Err(Error::Estimation(_))
        ));
        assert!(estimate_spike_group(&[1.0, 0.5], &(0..1), 2, 2, 0.1).is_err());
    }

    #[test]
    fn bulk_examples() {
        assert_eq!(estimate_bulk(&[1.0; 5], 2.0).unwrap(), 1.0);
        assert_abs_diff_eq!(estimate_bulk(&[5.0, 1.2, 0.8], 2.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(estimate_bulk(&[5.0], 2.0), Err(Error::Estimation(_))));
    }
}
