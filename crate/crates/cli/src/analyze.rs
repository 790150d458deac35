use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;

use stagewise_core::monitor::write_t2_trace;
use stagewise_core::{divide_stages, load_dataset, BatteryDataset, ColumnMapping, SegmenterConfig, Segmentation};

use crate::manifest::{self, ArtifactLog, RunManifest};

/// Flags shared by every command that runs the segmenter.
#[derive(Args, Debug, Clone)]
pub struct PipelineArgs {
    /// Training cycles per stage.
    #[arg(long, default_value_t = 15)]
    pub window: usize,
    /// Significance level of the control limit and of the switch rule.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Cumulative explained variance kept by the monitor.
    #[arg(long, default_value_t = 0.85)]
    pub variance: f64,
    /// Consecutive abnormal cycles that open a new stage.
    #[arg(long, default_value_t = 2)]
    pub consecutive: usize,
    #[arg(long, default_value_t = 50)]
    pub max_lag: usize,
    #[arg(long, default_value_t = 10)]
    pub max_r: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Optimizer restarts per subspace fit.
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
}

impl PipelineArgs {
    pub fn config(&self) -> SegmenterConfig {
        let mut c = SegmenterConfig {
            window: self.window,
            alpha: self.alpha,
            variance_target: self.variance,
            consecutive_required: self.consecutive,
            ..Default::default()
        };
        c.psr.max_lag = self.max_lag;
        c.psr.max_r = self.max_r;
        c.ssa.optimizer.seed = self.seed;
        c.ssa.optimizer.restarts = self.restarts;
        c
    }
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Cycling CSV with columns cycle,time_s,voltage_v,current_a,temperature_c.
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value = "stagewise-out")]
    pub output_dir: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

/// `1-26,27-108,109-166`
pub fn range_label(seg: &Segmentation) -> String {
    seg.stages.iter().map(|s| format!("{}-{}", s.start_cycle, s.end_cycle)).collect::<Vec<_>>().join(",")
}

pub fn stage_table(results: &[Segmentation]) -> String {
    let name_w = results.iter().map(|s| s.dataset.len()).chain([4]).max().unwrap_or(4);
    let mut out = format!("{:<name_w$}  {:>13}  Range\n", "Name", "No. of stages");
    for s in results {
        out.push_str(&format!("{:<name_w$}  {:>13}  {}\n", s.dataset, s.stages.len(), range_label(s)));
    }
    out
}

fn write_outputs(log: &mut ArtifactLog, prefix: &str, seg: &Segmentation) -> Result<()> {
    log.write(&format!("{prefix}segmentation.json"), seg.to_json()?.as_bytes())?;
    let mut scores = Vec::new();
    seg.write_scores_csv(&mut scores)?;
    log.write(&format!("{prefix}scores.csv"), &scores)?;
    for (i, stage) in seg.stages.iter().enumerate() {
        let mut trace = Vec::new();
        write_t2_trace(&mut trace, &seg.stage_sample_scores(i + 1), stage.meta.t2_limit)?;
        log.write(&format!("{prefix}t2_stage{}.csv", i + 1), &trace)?;
    }
    Ok(())
}

fn load_all(inputs: &[PathBuf]) -> Result<Vec<BatteryDataset>> {
    let mut out: Vec<BatteryDataset> = Vec::new();
    for path in inputs {
        let ds = load_dataset(path, &ColumnMapping::default()).with_context(|| format!("loading {}", path.display()))?;
        if out.iter().any(|o| o.name == ds.name) {
            bail!("two inputs are named {}", ds.name);
        }
        out.push(ds);
    }
    Ok(out)
}

/// Loads, segments and writes every input. A single input writes straight
/// into the output directory; several inputs get one subdirectory each.
pub fn analyze(args: &AnalyzeArgs) -> Result<(Vec<Segmentation>, RunManifest)> {
    let started = Instant::now();
    let config = args.pipeline.config();
    config.validate()?;
    let datasets = load_all(&args.input)?;
    let mut log = ArtifactLog::new(&args.output_dir);
    let mut results = Vec::new();
    for ds in &datasets {
        let seg = divide_stages(ds, &config).with_context(|| format!("segmenting {}", ds.name))?;
        let prefix = if datasets.len() == 1 { String::new() } else { format!("{}/", ds.name) };
        write_outputs(&mut log, &prefix, &seg)?;
        results.push(seg);
    }
    let inputs = args
        .input
        .iter()
        .map(|p| manifest::describe(p, p.display().to_string()))
        .collect::<Result<Vec<_>>>()?;
    let artifacts = log.into_entries();
    manifest::verify(&args.output_dir, &artifacts)?;
    for (ds, seg) in datasets.iter().zip(&results) {
        let prefix = if datasets.len() == 1 { PathBuf::new() } else { PathBuf::from(&ds.name) };
        reread(&args.output_dir.join(prefix).join("segmentation.json"), seg)?;
    }
    let run = RunManifest {
        tool: "stagewise".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "analyze".into(),
        inputs,
        output_dir: args.output_dir.clone(),
        seed: args.pipeline.seed,
        config: serde_json::to_value(&config)?,
        wall_clock_s: started.elapsed().as_secs_f64(),
        artifacts,
    };
    std::fs::write(args.output_dir.join("manifest.json"), manifest::to_sorted_json(&run)?)
        .context("writing manifest.json")?;
    Ok((results, run))
}

fn reread(path: &Path, expected: &Segmentation) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading back {}", path.display()))?;
    let back = Segmentation::from_json(&text)?;
    back.check_partition()?;
    if back.stages != expected.stages {
        bail!("{} does not round-trip", path.display());
    }
    Ok(())
}

pub fn run(args: &AnalyzeArgs) -> Result<bool> {
    let (results, run) = analyze(args)?;
    print!("{}", stage_table(&results));
    for seg in &results {
        if seg.short_tail {
            println!("note: {}: {}", seg.dataset, seg.notes.join("; "));
        }
    }
    log::info!("wrote {} artifacts to {}", run.artifacts.len() + 1, args.output_dir.display());
    Ok(true)
}
