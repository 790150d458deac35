use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};

use stagewise_core::synth::Mixing;
use stagewise_core::{generate, SynthSpec};

use crate::manifest;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MixingKind {
    Random,
    Identity,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 80)]
    pub cycles: usize,
    #[arg(long, default_value_t = 150)]
    pub samples: usize,
    /// 1-based cycle starting a new regime; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    pub change: Vec<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Stationary sources among the three variables.
    #[arg(long, default_value_t = 2)]
    pub d_true: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, value_enum, default_value_t = MixingKind::Random)]
    pub mixing: MixingKind,
    /// Last-to-first cycle variance ratio inside each regime.
    #[arg(long, default_value_t = 1.0)]
    pub ramp: f64,
    #[arg(long, default_value = "synth.csv")]
    pub output: PathBuf,
    /// Ground-truth JSON; defaults to the output path with `.truth.json`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

impl SynthArgs {
    pub fn spec(&self) -> SynthSpec {
        SynthSpec {
            n_cycles: self.cycles,
            samples_per_cycle: self.samples,
            d_true: self.d_true.min(3),
            n_nonstationary: 3usize.saturating_sub(self.d_true),
            change_cycles: self.change.clone(),
            mixing: match self.mixing {
                MixingKind::Random => Mixing::RandomOrthogonal,
                MixingKind::Identity => Mixing::Identity,
            },
            noise_sigma: self.noise,
            epoch_variance_ramp: self.ramp,
            ..Default::default()
        }
    }

    fn truth_path(&self) -> PathBuf {
        self.truth.clone().unwrap_or_else(|| self.output.with_extension("truth.json"))
    }
}

pub fn run(args: &SynthArgs) -> Result<bool> {
    if args.d_true > 3 {
        anyhow::bail!("--d-true must be at most 3, got {}", args.d_true);
    }
    let (ds, truth) = generate(&args.spec(), args.seed)?;
    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    ds.save_csv(&args.output).with_context(|| format!("writing {}", args.output.display()))?;
    let truth_path = args.truth_path();
    std::fs::write(&truth_path, manifest::to_sorted_json(&truth)?)
        .with_context(|| format!("writing {}", truth_path.display()))?;
    println!(
        "wrote {} cycles to {} (changes at {:?}), ground truth in {}",
        ds.n_cycles(),
        args.output.display(),
        truth.change_cycles,
        truth_path.display()
    );
    Ok(true)
}
