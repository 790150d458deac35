use anyhow::Result;
use clap::Args;

use stagewise_core::linalg::principal_angles;
use stagewise_core::ssa::{epoch_stats, DEFAULT_RIDGE};
use stagewise_core::synth::{generate_sources, Mixing};
use stagewise_core::{divide_stages, generate, optimize_rotation, pooled_whitener, OptimizerConfig, SynthSpec};

use crate::analyze::PipelineArgs;

const REQUIRED_RATE: f64 = 0.90;
const FALSE_STAGE_RATE: f64 = 0.10;
const RECOVERY_RATIO: f64 = 100.0;

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Largest accepted principal angle in degrees.
    #[arg(long, default_value_t = 5.0)]
    pub angle_tol: f64,
    /// Largest accepted boundary error in cycles.
    #[arg(long, default_value_t = 2)]
    pub boundary_tol: usize,
    #[arg(long, default_value_t = 80)]
    pub cycles: usize,
    #[arg(long, default_value_t = 40)]
    pub change: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

fn summary(values: &[f64]) -> String {
    if values.is_empty() {
        return "n/a".into();
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    format!("mean {mean:.2}, median {:.2}, max {:.2}", v[v.len() / 2], v[v.len() - 1])
}

fn recovery_angle(seed: u64, optimizer: &OptimizerConfig) -> Result<f64> {
    let n = 2 + (seed % 5) as usize;
    let d = (1 + ((seed / 5) % 3) as usize).min(n - 1);
    let spec = SynthSpec {
        n_cycles: 30,
        samples_per_cycle: 4000,
        d_true: d,
        n_nonstationary: n - d,
        mixing: Mixing::RandomOrthogonal,
        epoch_variance_ramp: RECOVERY_RATIO,
        ..Default::default()
    };
    let data = generate_sources(&spec, seed)?;
    let whitener = pooled_whitener(&data.cycles, DEFAULT_RIDGE)?;
    let epochs = epoch_stats(&data.cycles, &whitener.center)?;
    let basis = optimize_rotation(&epochs, &whitener, d, optimizer)?;
    let angles = principal_angles(&basis.projector, &data.truth.stationary_demixing)?;
    Ok(angles.last().copied().unwrap_or(0.0).to_degrees())
}

fn line(ok: bool, text: String) -> bool {
    println!("[{}] {text}", if ok { "PASS" } else { "FAIL" });
    ok
}

pub fn run(args: &ValidateArgs) -> Result<bool> {
    if args.seeds == 0 {
        anyhow::bail!("--seeds must be at least 1");
    }
    let config = args.pipeline.config();
    config.validate()?;
    let seeds = args.seeds;

    let angles = (0..seeds).map(|s| recovery_angle(s, &config.ssa.optimizer)).collect::<Result<Vec<_>>>()?;
    let within = angles.iter().filter(|&&a| a <= args.angle_tol).count();
    let recovery_ok = line(
        within as f64 / seeds as f64 >= REQUIRED_RATE,
        format!("subspace recovery: {within}/{seeds} within {}° ({})", args.angle_tol, summary(&angles)),
    );

    let mut errors = Vec::new();
    let mut missed = 0;
    for seed in 0..seeds {
        let spec = SynthSpec { n_cycles: args.cycles, change_cycles: vec![args.change], ..Default::default() };
        let (ds, _) = generate(&spec, seed)?;
        let seg = divide_stages(&ds, &config)?;
        match seg.boundaries().iter().map(|b| b.abs_diff(args.change)).min() {
            Some(e) => errors.push(e as f64),
            None => missed += 1,
        }
    }
    let hits = errors.iter().filter(|&&e| e <= args.boundary_tol as f64).count();
    let mae = if errors.is_empty() { f64::INFINITY } else { errors.iter().sum::<f64>() / errors.len() as f64 };
    let boundary_ok = line(
        hits as f64 / seeds as f64 >= REQUIRED_RATE && mae <= args.boundary_tol as f64,
        format!(
            "change point at {}: {hits}/{seeds} within ±{} cycles, boundary MAE {mae:.2} (≤ {} required), {missed} runs without a boundary",
            args.change, args.boundary_tol, args.boundary_tol
        ),
    );

    let mut over = 0;
    for seed in 0..seeds {
        let spec = SynthSpec { n_cycles: args.cycles, ..Default::default() };
        let (ds, _) = generate(&spec, 1000 + seed)?;
        if divide_stages(&ds, &config)?.stages.len() > 1 {
            over += 1;
        }
    }
    let stationary_ok = line(
        over as f64 / seeds as f64 <= FALSE_STAGE_RATE,
        format!("stationary runs with more than one stage: {over}/{seeds}"),
    );

    let ok = recovery_ok && boundary_ok && stationary_ok;
    println!("validate: {}", if ok { "all checks passed" } else { "FAILED" });
    Ok(ok)
}
