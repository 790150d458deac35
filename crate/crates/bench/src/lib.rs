//! Shared fixtures for the pipeline benchmarks.

use nalgebra::DMatrix;
use stagewise_core::ssa::{epoch_stats, EpochStats, Whitener};
use stagewise_core::synth::{generate_sources, Mixing};
use stagewise_core::{generate, pooled_whitener, BatteryDataset, SynthSpec};

/// Three-variable dataset with one variance change.
pub fn dataset(n_cycles: usize, samples: usize, change: Option<usize>) -> BatteryDataset {
    let spec = SynthSpec {
        n_cycles,
        samples_per_cycle: samples,
        change_cycles: change.into_iter().collect(),
        ..Default::default()
    };
    generate(&spec, 7).expect("valid fixture").0
}

/// Whitened epoch statistics of an `n`-source mixture.
pub fn epochs(n: usize, d: usize, cycles: usize, samples: usize) -> (Vec<EpochStats>, Whitener) {
    let spec = SynthSpec {
        n_cycles: cycles,
        samples_per_cycle: samples,
        d_true: d,
        n_nonstationary: n - d,
        mixing: Mixing::RandomOrthogonal,
        epoch_variance_ramp: 100.0,
        ..Default::default()
    };
    let data = generate_sources(&spec, 11).expect("valid fixture");
    let w = pooled_whitener(&data.cycles, 1e-10).expect("whitener");
    (epoch_stats(&data.cycles, &w.center).expect("epochs"), w)
}

/// Training invariants for the monitor.
pub fn invariants(rows: usize, cols: usize) -> DMatrix<f64> {
    let spec = SynthSpec {
        n_cycles: 1,
        samples_per_cycle: rows,
        d_true: cols,
        n_nonstationary: 0,
        ..Default::default()
    };
    generate_sources(&spec, 3).expect("valid fixture").cycles.remove(0)
}
