//! Phase-space reconstruction by delay embedding.
//!
//! Each variable of a cycle is embedded as rows
//! `[v_k, v_{k+τ}, …, v_{k+(r−1)τ}]`. The lag τ comes from the first minimum
//! of the average mutual information, the dimension r from the false
//! nearest neighbour fraction. For a multivariate cycle the largest τ and
//! the largest r over variables are used for every variable, so the merged
//! matrix always has `J·r` columns.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::CycleRecord;

/// Delay and dimension of an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub tau: usize,
    pub r: usize,
}

impl EmbeddingParams {
    pub fn new(tau: usize, r: usize) -> Result<Self> {
        if tau == 0 || r == 0 {
            return Err(Error::Usage(format!("embedding needs tau >= 1 and r >= 1, got ({tau}, {r})")));
        }
        Ok(Self { tau, r })
    }

    /// Samples consumed beyond the first row: `(r − 1)·τ`.
    pub fn span(&self) -> usize {
        (self.r - 1) * self.tau
    }

    /// Rows produced from a series of length `len`, if any.
    pub fn rows_for(&self, len: usize) -> Option<usize> {
        len.checked_sub(self.span()).filter(|&n| n >= 1)
    }
}

/// Estimator settings for τ and r selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrConfig {
    /// Largest lag scanned by the mutual-information search.
    pub max_lag: usize,
    /// Equal-width histogram bins per axis.
    pub bins: usize,
    pub max_r: usize,
    /// Distance-ratio tolerance of the false-neighbour test.
    pub r_tol: f64,
    /// Loneliness tolerance relative to the attractor size.
    pub a_tol: f64,
    /// False-neighbour fraction considered "collapsed".
    pub fnn_threshold: f64,
    /// Skip estimation and use these parameters for every variable.
    pub fixed: Option<EmbeddingParams>,
}

impl Default for PsrConfig {
    fn default() -> Self {
        Self {
            max_lag: 50,
            bins: 16,
            max_r: 10,
            r_tol: 15.0,
            a_tol: 2.0,
            fnn_threshold: 0.01,
            fixed: None,
        }
    }
}

/// A cycle after multivariate embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedCycle {
    pub cycle_index: usize,
    /// `rows × J·r`, variable blocks side by side.
    pub data: DMatrix<f64>,
    pub params: EmbeddingParams,
}

impl EmbeddedCycle {
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }
}

/// Delay-embeds one series.
pub fn embed(series: &[f64], params: EmbeddingParams) -> Result<DMatrix<f64>> {
    let rows = params.rows_for(series.len()).ok_or_else(|| {
        Error::Dimension(format!(
            "series of length {} is too short for tau={}, r={} (needs {})",
            series.len(),
            params.tau,
            params.r,
            params.span() + 1
        ))
    })?;
    Ok(DMatrix::from_fn(rows, params.r, |k, j| series[k + j * params.tau]))
}

/// Largest τ and largest r over the given parameters.
pub fn merge_params(params: &[EmbeddingParams]) -> Result<EmbeddingParams> {
    let tau = params.iter().map(|p| p.tau).max();
    let r = params.iter().map(|p| p.r).max();
    match (tau, r) {
        (Some(tau), Some(r)) => EmbeddingParams::new(tau, r),
        _ => Err(Error::Usage("no embedding parameters to merge".into())),
    }
}

/// Embeds every variable of a cycle with the merged parameters and
/// concatenates the blocks column-wise in variable order.
pub fn embed_multivariate(cycle: &CycleRecord, params_per_variable: &[EmbeddingParams]) -> Result<EmbeddedCycle> {
    if params_per_variable.len() != cycle.variables.len() {
        return Err(Error::Dimension(format!(
            "{} parameter sets for {} variables",
            params_per_variable.len(),
            cycle.variables.len()
        )));
    }
    let merged = merge_params(params_per_variable)?;
    embed_with(cycle, merged)
}

/// Embeds every variable of a cycle with one shared parameter set.
pub fn embed_with(cycle: &CycleRecord, params: EmbeddingParams) -> Result<EmbeddedCycle> {
    let blocks = cycle
        .variables
        .iter()
        .map(|v| embed(v, params))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::Dimension(m) => Error::Dimension(format!("cycle {}: {m}", cycle.cycle_index)),
            other => other,
        })?;
    let rows = blocks.iter().map(|b| b.nrows()).min().unwrap_or(0);
    let mut data = DMatrix::zeros(rows, params.r * blocks.len());
    for (j, b) in blocks.iter().enumerate() {
        data.columns_mut(j * params.r, params.r).copy_from(&b.rows(0, rows));
    }
    Ok(EmbeddedCycle { cycle_index: cycle.cycle_index, data, params })
}

fn pooled_range(segments: &[&[f64]]) -> Result<(f64, f64)> {
    let (lo, hi) = segments
        .iter()
        .flat_map(|s| s.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(hi > lo) {
        return Err(Error::Degenerate("series is constant".into()));
    }
    Ok((lo, hi))
}

/// Average mutual information between `x_t` and `x_{t+lag}`, pooled over
/// segments, with an equal-width histogram over the pooled range (nats).
pub fn average_mutual_information(segments: &[&[f64]], lag: usize, bins: usize) -> Result<f64> {
    let (lo, hi) = pooled_range(segments)?;
    ami_in_range(segments, lag, bins, lo, hi)
}

fn ami_in_range(segments: &[&[f64]], lag: usize, bins: usize, lo: f64, hi: f64) -> Result<f64> {
    if bins < 2 {
        return Err(Error::Usage("mutual information needs at least 2 bins".into()));
    }
    let width = (hi - lo) / bins as f64;
    let bin = |x: f64| (((x - lo) / width) as usize).min(bins - 1);
    let mut joint = vec![0usize; bins * bins];
    let mut total = 0usize;
    for s in segments {
        for t in 0..s.len().saturating_sub(lag) {
            joint[bin(s[t]) * bins + bin(s[t + lag])] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Dimension(format!("no sample pairs at lag {lag}")));
    }
    let mut px = vec![0usize; bins];
    let mut py = vec![0usize; bins];
    for i in 0..bins {
        for j in 0..bins {
            px[i] += joint[i * bins + j];
            py[j] += joint[i * bins + j];
        }
    }
    let n = total as f64;
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c > 0 {
                let pij = c as f64 / n;
                mi += pij * (pij * n * n / (px[i] as f64 * py[j] as f64)).ln();
            }
        }
    }
    Ok(mi)
}

/// Mutual information for lags `1..=max_lag`; entry `i` is lag `i + 1`.
pub fn ami_curve(segments: &[&[f64]], max_lag: usize, bins: usize) -> Result<Vec<f64>> {
    let (lo, hi) = pooled_range(segments)?;
    (1..=max_lag).map(|lag| ami_in_range(segments, lag, bins, lo, hi)).collect()
}

/// Lag of the first local minimum of a mutual-information curve (entry `i`
/// is lag `i + 1`), falling back to the smallest lag of the global minimum.
///
/// Lag 1 counts as a minimum when the curve does not drop at lag 2: a
/// series that already decorrelates after one step needs no larger delay.
pub fn first_minimum_lag(curve: &[f64]) -> Option<usize> {
    let n = curve.len();
    if n == 0 {
        return None;
    }
    if n >= 2 && curve[0] <= curve[1] {
        return Some(1);
    }
    for i in 1..n.saturating_sub(1) {
        if curve[i] < curve[i - 1] && curve[i] <= curve[i + 1] {
            return Some(i + 1);
        }
    }
    let mut best = 0;
    for i in 1..n {
        if curve[i] < curve[best] {
            best = i;
        }
    }
    Some(best + 1)
}

/// Chooses τ for one series from its mutual-information curve.
pub fn select_tau(series: &[f64], max_lag: usize) -> Result<usize> {
    select_tau_pooled(&[series], max_lag, PsrConfig::default().bins)
}

/// Chooses τ from the mutual information pooled over several segments of
/// the same variable (e.g. the cycles of a training window).
pub fn select_tau_pooled(segments: &[&[f64]], max_lag: usize, bins: usize) -> Result<usize> {
    if max_lag == 0 {
        return Err(Error::Usage("max_lag must be positive".into()));
    }
    if let Some(s) = segments.iter().find(|s| s.len() < 2 * max_lag) {
        return Err(Error::Usage(format!(
            "series of length {} is too short for max_lag={max_lag} (needs {})",
            s.len(),
            2 * max_lag
        )));
    }
    let curve = ami_curve(segments, max_lag, bins)?;
    Ok(first_minimum_lag(&curve).unwrap_or(1))
}

fn population_std(segments: &[&[f64]]) -> f64 {
    let n: usize = segments.iter().map(|s| s.len()).sum();
    let mean = segments.iter().flat_map(|s| s.iter()).sum::<f64>() / n as f64;
    let var = segments.iter().flat_map(|s| s.iter()).map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    var.sqrt()
}

/// Fraction of nearest neighbours in dimension `r` that turn out false
/// when the `(r+1)`-th delay coordinate is added.
///
/// A neighbour is false when the added coordinate stretches the distance
/// by more than `r_tol`, or when the `(r+1)`-dimensional distance exceeds
/// `a_tol` times the attractor size (standard deviation of the series).
pub fn false_neighbor_fraction(segments: &[&[f64]], tau: usize, r: usize, r_tol: f64, a_tol: f64) -> Result<f64> {
    if tau == 0 || r == 0 {
        return Err(Error::Usage("false-neighbour test needs tau >= 1 and r >= 1".into()));
    }
    pooled_range(segments)?;
    let attractor = population_std(segments);
    // Distances below this are floating-point copies of the same state.
    let eps = 1e-9 * attractor;
    let mut points: Vec<f64> = Vec::new();
    let mut extra: Vec<f64> = Vec::new();
    for s in segments {
        for k in 0..s.len().saturating_sub(r * tau) {
            points.extend((0..r).map(|j| s[k + j * tau]));
            extra.push(s[k + r * tau]);
        }
    }
    let n = extra.len();
    if n < 2 {
        return Err(Error::Dimension(format!("too few points to test dimension {r} at tau={tau}")));
    }
    // Neighbour search walks outward along the first coordinate and stops
    // once that coordinate alone is farther than the best candidate.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a * r].total_cmp(&points[b * r]).then(a.cmp(&b)));
    let mut false_count = 0usize;
    for (pos, &i) in order.iter().enumerate() {
        let pi = &points[i * r..(i + 1) * r];
        let mut best = f64::INFINITY;
        let mut best_j = usize::MAX;
        let visit = |j: usize, best: &mut f64, best_j: &mut usize| {
            let pj = &points[j * r..(j + 1) * r];
            let mut d2 = 0.0;
            for (a, b) in pi.iter().zip(pj) {
                d2 += (a - b) * (a - b);
                if d2 > *best {
                    return;
                }
            }
            if d2 < *best || (d2 == *best && j < *best_j) {
                *best = d2;
                *best_j = j;
            }
        };
        let (mut lo, mut hi) = (pos, pos + 1);
        loop {
            let down = lo.checked_sub(1).map(|k| (k, (pi[0] - points[order[k] * r]).powi(2)));
            let up = order.get(hi).map(|&j| (hi, (points[j * r] - pi[0]).powi(2)));
            let next = match (down, up) {
                (Some(a), Some(b)) => if a.1 <= b.1 { a } else { b },
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => break,
            };
            if next.1 > best {
                break;
            }
            if next.0 < pos {
                lo = next.0;
            } else {
                hi = next.0 + 1;
            }
            visit(order[next.0], &mut best, &mut best_j);
        }
        let dist = best.sqrt();
        let gap = (extra[i] - extra[best_j]).abs();
        let stretched = gap > r_tol * dist.max(eps);
        let lonely = (best + gap * gap).sqrt() / attractor > a_tol;
        if stretched || lonely {
            false_count += 1;
        }
    }
    Ok(false_count as f64 / n as f64)
}

/// Chooses r for one series with the default false-neighbour settings.
pub fn select_r(series: &[f64], tau: usize, max_r: usize) -> Result<usize> {
    let cfg = PsrConfig { max_r, ..PsrConfig::default() };
    select_r_pooled(&[series], tau, &cfg)
}

/// Smallest r whose false-neighbour fraction drops below the threshold,
/// or `max_r` if it never does.
pub fn select_r_pooled(segments: &[&[f64]], tau: usize, config: &PsrConfig) -> Result<usize> {
    if config.max_r == 0 || tau == 0 {
        return Err(Error::Usage("select_r needs tau >= 1 and max_r >= 1".into()));
    }
    pooled_range(segments)?;
    let need = config.max_r * tau + 2;
    if let Some(s) = segments.iter().find(|s| s.len() < need) {
        return Err(Error::Usage(format!(
            "series of length {} is too short to test up to r={} at tau={tau} (needs {need})",
            s.len(),
            config.max_r
        )));
    }
    for r in 1..config.max_r {
        let frac = false_neighbor_fraction(segments, tau, r, config.r_tol, config.a_tol)?;
        log::trace!("fnn r={r} tau={tau} fraction={frac:.4}");
        if frac < config.fnn_threshold {
            return Ok(r);
        }
    }
    Ok(config.max_r)
}

/// Selects `(τ, r)` per variable from a window of cycles.
///
/// Each variable is pooled over the window. The lag bound shrinks to half
/// the shortest cycle when cycles are shorter than `2·max_lag`, and the
/// dimension bound shrinks so that `max_r·τ` still fits. A variable that is
/// constant across the window gets `(1, 1)` so it does not influence the
/// merged parameters.
pub fn select_params(window: &[&CycleRecord], config: &PsrConfig) -> Result<Vec<EmbeddingParams>> {
    let first = window.first().ok_or_else(|| Error::Usage("empty selection window".into()))?;
    let n_vars = first.variables.len();
    if let Some(p) = config.fixed {
        return Ok(vec![p; n_vars]);
    }
    let shortest = window.iter().map(|c| c.len()).min().unwrap_or(0);
    let max_lag = config.max_lag.min(shortest / 2).max(1);
    let mut out = Vec::with_capacity(n_vars);
    for j in 0..n_vars {
        let segments: Vec<&[f64]> = window.iter().map(|c| c.variables[j].as_slice()).collect();
        let tau = match select_tau_pooled(&segments, max_lag, config.bins) {
            Ok(t) => t,
            Err(Error::Degenerate(_)) => {
                log::warn!("variable {j} is constant over the window; embedding it with (1, 1)");
                out.push(EmbeddingParams { tau: 1, r: 1 });
                continue;
            }
            Err(e) => return Err(e),
        };
        let max_r = config.max_r.min(shortest.saturating_sub(2) / tau).max(1);
        let r = select_r_pooled(&segments, tau, &PsrConfig { max_r, ..config.clone() })?;
        log::debug!("variable {j}: tau={tau} r={r}");
        out.push(EmbeddingParams::new(tau, r)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn embed_direct_evaluation() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        let m = embed(&s, EmbeddingParams::new(2, 3).unwrap()).unwrap();
        assert_eq!(m.nrows(), 6);
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 3.0, 5.0]);
        assert_eq!(m.row(5).iter().copied().collect::<Vec<_>>(), vec![6.0, 8.0, 10.0]);
    }

    #[test]
    fn embed_identity_case() {
        let s = vec![0.3, -1.0, 2.5, 7.0];
        let m = embed(&s, EmbeddingParams::new(1, 1).unwrap()).unwrap();
        assert_eq!(m.as_slice(), s.as_slice());
    }

    #[test]
    fn embed_rejects_short_series() {
        let s = vec![0.0; 10];
        assert!(matches!(embed(&s, EmbeddingParams::new(5, 3).unwrap()), Err(Error::Dimension(_))));
        assert!(embed(&[0.0; 11], EmbeddingParams::new(5, 3).unwrap()).is_ok());
        assert!(EmbeddingParams::new(0, 3).is_err());
    }

    fn cycle(vars: Vec<Vec<f64>>) -> CycleRecord {
        let n = vars[0].len();
        CycleRecord { cycle_index: 1, time_s: (0..n).map(|k| k as f64).collect(), variables: vars }
    }

    #[test]
    fn multivariate_merge_uses_max_params() {
        let n = 40;
        let c = cycle((0..3).map(|j| (0..n).map(|k| (k * (j + 1)) as f64).collect()).collect());
        let params = [(5, 3), (3, 2), (4, 3)].map(|(t, r)| EmbeddingParams::new(t, r).unwrap());
        let e = embed_multivariate(&c, &params).unwrap();
        assert_eq!(e.params, EmbeddingParams { tau: 5, r: 3 });
        assert_eq!(e.width(), 9);
        assert_eq!(e.rows(), n - 10);
        // the second block is variable 1 embedded with the merged params
        let direct = embed(&c.variables[1], e.params).unwrap();
        assert_eq!(e.data.columns(3, 3).into_owned(), direct);
    }

    #[test]
    fn multivariate_single_variable_matches_embed() {
        let s: Vec<f64> = (0..20).map(|k| (k as f64).sin()).collect();
        let p = EmbeddingParams::new(2, 4).unwrap();
        let e = embed_multivariate(&cycle(vec![s.clone()]), &[p]).unwrap();
        assert_eq!(e.data, embed(&s, p).unwrap());
    }

    /// Brute-force AMI: explicit pair list, map-based histograms.
    fn oracle_ami(s: &[f64], lag: usize, bins: usize) -> f64 {
        use std::collections::HashMap;
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let b = |x: f64| {
            let mut i = ((x - lo) / (hi - lo) * bins as f64).floor() as i64;
            if i >= bins as i64 {
                i = bins as i64 - 1;
            }
            i
        };
        let pairs: Vec<(i64, i64)> = (0..s.len() - lag).map(|t| (b(s[t]), b(s[t + lag]))).collect();
        let n = pairs.len() as f64;
        let mut joint: HashMap<(i64, i64), f64> = HashMap::new();
        let mut left: HashMap<i64, f64> = HashMap::new();
        let mut right: HashMap<i64, f64> = HashMap::new();
        for &(a, c) in &pairs {
            *joint.entry((a, c)).or_default() += 1.0 / n;
            *left.entry(a).or_default() += 1.0 / n;
            *right.entry(c).or_default() += 1.0 / n;
        }
        joint.iter().map(|(&(a, c), &p)| p * (p / (left[&a] * right[&c])).ln()).sum()
    }

    fn oracle_tau(s: &[f64], max_lag: usize) -> usize {
        let curve: Vec<f64> = (1..=max_lag).map(|l| oracle_ami(s, l, 16)).collect();
        if curve[0] <= curve[1] {
            return 1;
        }
        (1..max_lag - 1)
            .find(|&i| curve[i] < curve[i - 1] && curve[i] <= curve[i + 1])
            .map(|i| i + 1)
            .unwrap()
    }

    fn sine() -> Vec<f64> {
        (1..=400).map(|k| (2.0 * std::f64::consts::PI * k as f64 / 20.0).sin()).collect()
    }

    #[test]
    fn ami_matches_brute_force() {
        let s = sine();
        let curve = ami_curve(&[&s], 20, 16).unwrap();
        for (i, v) in curve.iter().enumerate() {
            assert!((v - oracle_ami(&s, i + 1, 16)).abs() < 1e-10);
        }
    }

    // Sampled at 20 phases, the sine's histogram AMI is flat over lags 2..8
    // and the first dip falls at lag 3 (oracle value, frozen).
    #[test]
    fn tau_of_sine() {
        let s = sine();
        assert_eq!(oracle_tau(&s, 20), 3);
        assert_eq!(select_tau(&s, 20).unwrap(), 3);
    }

    #[test]
    fn tau_of_white_noise_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let s: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let tau = select_tau(&s, 20).unwrap();
        assert_eq!(tau, oracle_tau(&s, 20));
        assert!(tau <= 2, "tau={tau}");
    }

    #[test]
    fn fnn_of_noise_saturates() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        assert_eq!(select_r(&s, 1, 6).unwrap(), 6);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let s = vec![1.5; 200];
        assert!(matches!(select_tau(&s, 10), Err(Error::Degenerate(_))));
        assert!(matches!(select_r(&s, 1, 5), Err(Error::Degenerate(_))));
    }

    #[test]
    fn first_minimum_rules() {
        assert_eq!(first_minimum_lag(&[3.0, 2.0, 1.0, 1.5, 0.5]), Some(3));
        assert_eq!(first_minimum_lag(&[1.0, 1.0, 0.5]), Some(1));
        // monotone: global minimum, smallest lag on ties
        assert_eq!(first_minimum_lag(&[3.0, 2.0, 1.0, 1.0]), Some(3));
        assert_eq!(first_minimum_lag(&[3.0, 2.0, 1.0]), Some(3));
    }

    #[test]
    fn fnn_sine_embeds_in_two_dimensions() {
        let s: Vec<f64> = (1..=400).map(|k| (2.0 * std::f64::consts::PI * k as f64 / 20.0).sin()).collect();
        assert_eq!(select_r(&s, 5, 10).unwrap(), 2);
    }

    proptest! {
        #[test]
        fn embed_columns_are_shifted_copies(
            s in prop::collection::vec(-1e3f64..1e3, 12..60),
            tau in 1usize..4,
            r in 1usize..4,
        ) {
            let p = EmbeddingParams::new(tau, r).unwrap();
            let m = embed(&s, p).unwrap();
            prop_assert_eq!(m.nrows(), s.len() - (r - 1) * tau);
            for j in 0..r {
                for k in 0..m.nrows() {
                    prop_assert_eq!(m[(k, j)], s[k + j * tau]);
                }
            }
        }

        #[test]
        fn embed_is_shift_equivariant(
            s in prop::collection::vec(-10f64..10.0, 15..50),
            c in 0usize..5,
        ) {
            let p = EmbeddingParams::new(2, 3).unwrap();
            let full = embed(&s, p).unwrap();
            let shifted = embed(&s[c..], p).unwrap();
            prop_assert_eq!(shifted, full.rows(c, full.nrows() - c).into_owned());
        }
    }

    #[test]
    fn selection_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        assert_eq!(select_tau(&s, 20).unwrap(), select_tau(&s, 20).unwrap());
        assert_eq!(select_r(&s, 1, 6).unwrap(), select_r(&s, 1, 6).unwrap());
    }
}
