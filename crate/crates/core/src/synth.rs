//! Ground-truth synthetic cycling data.
//!
//! Observed cycles are `x = A·s + noise`, where the first `d_true` sources
//! are AR(1) processes with the same law in every cycle and the remaining
//! sources change mean and variance at each change cycle (and optionally
//! ramp their variance from cycle to cycle inside a segment).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BatteryDataset, CycleRecord, VARIABLE_NAMES};
use crate::linalg::{self, matrix_serde};

/// Per-variable offsets giving synthetic traces battery-like magnitudes.
const BASELINE: [f64; 3] = [3.7, -2.0, 25.0];
const SAMPLE_PERIOD_S: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Mixing {
    Identity,
    /// Haar-random orthogonal matrix drawn from the generator seed.
    RandomOrthogonal,
    Matrix(#[serde(with = "matrix_serde")] DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_cycles: usize,
    pub samples_per_cycle: usize,
    pub d_true: usize,
    pub n_nonstationary: usize,
    /// 1-based cycles at which a new regime starts.
    pub change_cycles: Vec<usize>,
    pub mixing: Mixing,
    pub noise_sigma: f64,
    pub ar_coefficient: f64,
    /// Non-stationary variance per segment; empty means `(s+1)²`.
    pub variance_schedule: Vec<f64>,
    /// Non-stationary mean per segment; empty means zero.
    pub mean_schedule: Vec<f64>,
    /// Ratio of last to first cycle variance inside each segment (1 = flat).
    /// Even-numbered non-stationary sources ramp up, odd ones down.
    pub epoch_variance_ramp: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_cycles: 80,
            samples_per_cycle: 150,
            d_true: 2,
            n_nonstationary: 1,
            change_cycles: Vec::new(),
            mixing: Mixing::RandomOrthogonal,
            noise_sigma: 0.05,
            ar_coefficient: 0.6,
            variance_schedule: Vec::new(),
            mean_schedule: Vec::new(),
            epoch_variance_ramp: 1.0,
        }
    }
}

impl SynthSpec {
    pub fn n_sources(&self) -> usize {
        self.d_true + self.n_nonstationary
    }

    fn n_segments(&self) -> usize {
        self.change_cycles.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Usage(m));
        if self.n_cycles < 2 || self.samples_per_cycle < 2 {
            return bad("need at least 2 cycles of at least 2 samples".into());
        }
        if self.n_sources() == 0 {
            return bad("need at least one source".into());
        }
        if self.change_cycles.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("change cycles {:?} are not strictly increasing", self.change_cycles));
        }
        if let Some(c) = self.change_cycles.iter().find(|&&c| c <= 1 || c >= self.n_cycles) {
            return bad(format!("change cycle {c} must lie strictly between 1 and {}", self.n_cycles));
        }
        if !(self.ar_coefficient.abs() < 1.0) {
            return bad(format!("AR coefficient {} is not stationary", self.ar_coefficient));
        }
        if !(self.noise_sigma >= 0.0 && self.epoch_variance_ramp > 0.0) {
            return bad("noise must be non-negative and the variance ramp positive".into());
        }
        for (name, sched) in [("variance", &self.variance_schedule), ("mean", &self.mean_schedule)] {
            if !sched.is_empty() && sched.len() < self.n_segments() {
                return bad(format!("{name} schedule has {} entries for {} segments", sched.len(), self.n_segments()));
            }
        }
        if self.variance_schedule.iter().any(|v| !(*v > 0.0)) {
            return bad("variances must be positive".into());
        }
        if let Mixing::Matrix(m) = &self.mixing {
            if m.shape() != (self.n_sources(), self.n_sources()) || m.clone().try_inverse().is_none() {
                return bad("mixing matrix must be square, invertible and match the source count".into());
            }
        }
        Ok(())
    }

    fn segment_of(&self, cycle: usize) -> usize {
        self.change_cycles.iter().filter(|&&c| c <= cycle).count()
    }

    fn segment_bounds(&self, segment: usize) -> (usize, usize) {
        let start = if segment == 0 { 1 } else { self.change_cycles[segment - 1] };
        let end = self.change_cycles.get(segment).map_or(self.n_cycles, |c| c - 1);
        (start, end)
    }

    fn segment_variance(&self, segment: usize) -> f64 {
        self.variance_schedule.get(segment).copied().unwrap_or(((segment + 1) * (segment + 1)) as f64)
    }

    fn segment_mean(&self, segment: usize) -> f64 {
        self.mean_schedule.get(segment).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub d_true: usize,
    #[serde(with = "matrix_serde")]
    pub mixing: DMatrix<f64>,
    /// First `d_true` rows of the inverse mixing: the functionals that
    /// extract the stationary sources.
    #[serde(with = "matrix_serde")]
    pub stationary_demixing: DMatrix<f64>,
    pub change_cycles: Vec<usize>,
    pub seed: u64,
}

/// Generated cycles as `samples × sources` matrices.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub cycles: Vec<DMatrix<f64>>,
    pub truth: GroundTruth,
}

fn ar1_path<R: Rng>(rng: &mut R, len: usize, phi: f64) -> Vec<f64> {
    let mut x = rng.sample::<f64, _>(StandardNormal) / (1.0 - phi * phi).sqrt();
    (0..len)
        .map(|_| {
            let out = x;
            x = phi * x + rng.sample::<f64, _>(StandardNormal);
            out
        })
        .collect()
}

/// Generates observed cycles of any source dimension.
pub fn generate_sources(spec: &SynthSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let n = spec.n_sources();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mixing = match &spec.mixing {
        Mixing::Identity => DMatrix::identity(n, n),
        Mixing::RandomOrthogonal => linalg::random_orthogonal(n, &mut rng),
        Mixing::Matrix(m) => m.clone(),
    };
    let inverse = mixing.clone().try_inverse().ok_or_else(|| Error::Usage("mixing is singular".into()))?;
    let phi = spec.ar_coefficient;
    // Unit innovations give an AR(1) with stationary variance 1/(1−φ²);
    // non-stationary sources are rescaled to unit variance before their
    // regime scaling.
    let ar_sd = 1.0 / (1.0 - phi * phi).sqrt();
    let mut cycles = Vec::with_capacity(spec.n_cycles);
    for cycle in 1..=spec.n_cycles {
        let seg = spec.segment_of(cycle);
        let (start, end) = spec.segment_bounds(seg);
        let position = if end > start { (cycle - start) as f64 / (end - start) as f64 } else { 0.0 };
        let mut sources = DMatrix::zeros(spec.samples_per_cycle, n);
        for j in 0..n {
            let path = ar1_path(&mut rng, spec.samples_per_cycle, phi);
            let (scale, shift) = if j < spec.d_true {
                (1.0, 0.0)
            } else {
                let up = (j - spec.d_true) % 2 == 0;
                let ramp = spec.epoch_variance_ramp.powf(if up { position } else { 1.0 - position });
                ((spec.segment_variance(seg) * ramp).sqrt() / ar_sd, spec.segment_mean(seg))
            };
            for (k, v) in path.into_iter().enumerate() {
                sources[(k, j)] = shift + scale * v;
            }
        }
        let mut observed = sources * mixing.transpose();
        if spec.noise_sigma > 0.0 {
            for v in observed.iter_mut() {
                *v += spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        cycles.push(observed);
    }
    let truth = GroundTruth {
        d_true: spec.d_true,
        stationary_demixing: inverse.rows(0, spec.d_true).into_owned(),
        mixing,
        change_cycles: spec.change_cycles.clone(),
        seed,
    };
    Ok(SyntheticData { cycles, truth })
}

/// Generates a three-variable dataset in the ingest layout.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<(BatteryDataset, GroundTruth)> {
    if spec.n_sources() != VARIABLE_NAMES.len() {
        return Err(Error::Usage(format!(
            "a battery dataset needs exactly {} sources, spec has {}",
            VARIABLE_NAMES.len(),
            spec.n_sources()
        )));
    }
    let data = generate_sources(spec, seed)?;
    let cycles = data
        .cycles
        .iter()
        .enumerate()
        .map(|(i, m)| CycleRecord {
            cycle_index: i + 1,
            time_s: (0..m.nrows()).map(|k| k as f64 * SAMPLE_PERIOD_S).collect(),
            variables: (0..m.ncols()).map(|j| m.column(j).iter().map(|v| v + BASELINE[j]).collect()).collect(),
        })
        .collect();
    let names = VARIABLE_NAMES.iter().map(|s| s.to_string()).collect();
    let ds = BatteryDataset::new(format!("synth-{seed}"), names, cycles)?;
    Ok((ds, data.truth))
}
