//! Recursive stage division.
//!
//! A stage model is fitted on the first `window` cycles of the current
//! stage: embedding parameters, stationary basis and T² monitor. Later
//! cycles are scored one by one; once the abnormality rate exceeds `alpha`
//! on `consecutive_required` consecutive cycles, the first of them starts a
//! new stage and everything is refitted from there.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{truncate_to_min_length, BatteryDataset, CycleRecord};
use crate::monitor::{fit_monitor_series, score_cycle, CycleScore, MonitoringModel};
use crate::psr::{embed_with, merge_params, select_params, EmbeddingParams, PsrConfig};
use crate::ssa::{fit_stationary_basis, project_invariants, AdfResult, SsaConfig, StationaryBasis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    /// Training cycles per stage.
    pub window: usize,
    pub alpha: f64,
    pub variance_target: f64,
    pub consecutive_required: usize,
    pub psr: PsrConfig,
    pub ssa: SsaConfig,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            window: 15,
            alpha: 0.05,
            variance_target: 0.85,
            consecutive_required: 2,
            psr: PsrConfig::default(),
            ssa: SsaConfig::default(),
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 {
            return Err(Error::Usage(format!("window {} is below 3", self.window)));
        }
        if self.consecutive_required == 0 {
            return Err(Error::Usage("consecutive_required must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Usage(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.variance_target > 0.0 && self.variance_target <= 1.0) {
            return Err(Error::Usage(format!("variance target {} outside (0, 1]", self.variance_target)));
        }
        Ok(())
    }
}

/// Outcome of scoring one monitored cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Decision {
    Continue,
    /// The run of exceedances has started at `since` but is not long enough.
    Pending { since: usize },
    /// A new stage begins at cycle `at`.
    Switch { at: usize },
}

impl Decision {
    fn label(&self) -> &'static str {
        match self {
            Decision::Continue => "continue",
            Decision::Pending { .. } => "pending",
            Decision::Switch { .. } => "switch",
        }
    }
}

/// Switch rule on a stream of abnormality rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchRule {
    alpha: f64,
    required: usize,
    run_start: Option<usize>,
    run_len: usize,
}

impl SwitchRule {
    pub fn new(alpha: f64, required: usize) -> Self {
        Self { alpha, required: required.max(1), run_start: None, run_len: 0 }
    }

    pub fn observe(&mut self, cycle: usize, abnormality_rate: f64) -> Decision {
        if abnormality_rate <= self.alpha {
            self.run_start = None;
            self.run_len = 0;
            return Decision::Continue;
        }
        let since = *self.run_start.get_or_insert(cycle);
        self.run_len += 1;
        if self.run_len >= self.required {
            Decision::Switch { at: since }
        } else {
            Decision::Pending { since }
        }
    }
}

/// Model of one stage's normal behaviour plus the streaming switch state.
#[derive(Debug, Clone)]
pub struct StageModel {
    pub origin: usize,
    pub window: usize,
    /// Parameters chosen per variable before merging.
    pub variable_params: Vec<EmbeddingParams>,
    pub params: EmbeddingParams,
    /// Common embedded length of the training cycles.
    pub sync_length: usize,
    pub basis: StationaryBasis,
    pub adf: Vec<AdfResult>,
    pub monitor: MonitoringModel,
    rule: SwitchRule,
    next_cycle: usize,
}

impl StageModel {
    /// Fits a model on consecutive training cycles.
    pub fn fit(window: &[CycleRecord], config: &SegmenterConfig) -> Result<Self> {
        config.validate()?;
        let first = window.first().ok_or_else(|| Error::Usage("empty training window".into()))?;
        if window.windows(2).any(|w| w[1].cycle_index != w[0].cycle_index + 1) {
            return Err(Error::Usage("training cycles are not consecutive".into()));
        }
        let refs: Vec<&CycleRecord> = window.iter().collect();
        let variable_params = select_params(&refs, &config.psr)?;
        let params = merge_params(&variable_params)?;
        let embedded = window.iter().map(|c| embed_with(c, params)).collect::<Result<Vec<_>>>()?;
        let matrices: Vec<DMatrix<f64>> = embedded.iter().map(|e| e.data.clone()).collect();
        let (synced, sync_length) = truncate_to_min_length(&matrices)?;
        let selection = fit_stationary_basis(&synced, &config.ssa)?;
        let basis = match selection.basis {
            Some(b) if selection.d > 0 => b,
            _ => {
                return Err(Error::Pipeline(format!(
                    "no stationary source found for the stage starting at cycle {} (tried d = {:?})",
                    first.cycle_index, selection.tried
                )))
            }
        };
        let mut training = Vec::with_capacity(window.len());
        for (e, m) in embedded.iter().zip(&synced) {
            let mut cycle = e.clone();
            cycle.data = m.clone();
            training.push(project_invariants(&basis, &cycle, &basis.center)?);
        }
        let monitor = fit_monitor_series(&training, config.variance_target, config.alpha)?;
        log::info!(
            "stage model at cycle {}: tau={} r={} M={} d={} R={} limit={:.3}",
            first.cycle_index,
            params.tau,
            params.r,
            sync_length,
            basis.d,
            monitor.retained,
            monitor.t2_limit
        );
        Ok(Self {
            origin: first.cycle_index,
            window: window.len(),
            variable_params,
            params,
            sync_length,
            basis,
            adf: selection.adf,
            monitor,
            rule: SwitchRule::new(config.alpha, config.consecutive_required),
            next_cycle: first.cycle_index + window.len(),
        })
    }

    /// Scores any cycle without touching the switch state.
    pub fn score(&self, cycle: &CycleRecord) -> Result<CycleScore> {
        let embedded = embed_with(cycle, self.params)?;
        let invariants = project_invariants(&self.basis, &embedded, &self.basis.center)?;
        score_cycle(&self.monitor, &invariants)
    }

    /// Scores the next cycle of the stream and updates the switch state.
    pub fn score_stream(&mut self, cycle: &CycleRecord) -> Result<(CycleScore, Decision)> {
        if cycle.cycle_index != self.next_cycle {
            return Err(Error::Usage(format!(
                "expected cycle {} next, got cycle {}",
                self.next_cycle, cycle.cycle_index
            )));
        }
        let score = self.score(cycle)?;
        self.next_cycle += 1;
        let decision = self.rule.observe(cycle.cycle_index, score.abnormality_rate);
        Ok((score, decision))
    }
}

/// Model summary kept with each stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMeta {
    pub d: usize,
    pub tau: usize,
    pub r: usize,
    pub variable_params: Vec<EmbeddingParams>,
    pub sync_length: usize,
    pub objective: f64,
    pub converged: bool,
    pub retained_components: usize,
    pub t2_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRange {
    pub start_cycle: usize,
    pub end_cycle: usize,
    pub meta: StageMeta,
}

impl StageRange {
    pub fn len(&self) -> usize {
        self.end_cycle + 1 - self.start_cycle
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleRole {
    Training,
    Monitored,
}

/// One scored cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub cycle: usize,
    /// 1-based stage whose model scored the cycle.
    pub stage_id: usize,
    pub role: CycleRole,
    pub abnormality_rate: f64,
    pub t2_limit: f64,
    /// `continue`, `pending` or `switch` for monitored cycles.
    pub decision: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub dataset: String,
    pub n_cycles: usize,
    pub stages: Vec<StageRange>,
    pub trace: Vec<TraceEntry>,
    pub config: SegmenterConfig,
    /// Set when the cycles after the last switch were too few to train a
    /// model and were appended to the previous stage.
    pub short_tail: bool,
    pub notes: Vec<String>,
    /// Per-sample statistics by stage id, for plotting only.
    #[serde(skip)]
    pub sample_scores: Vec<(usize, CycleScore)>,
}

impl Segmentation {
    /// 1-based start cycles of every stage after the first.
    pub fn boundaries(&self) -> Vec<usize> {
        self.stages.iter().skip(1).map(|s| s.start_cycle).collect()
    }

    /// Checks that the stages are ordered, disjoint and cover `1..=N`.
    pub fn check_partition(&self) -> Result<()> {
        let mut expected = 1;
        for (i, s) in self.stages.iter().enumerate() {
            if s.start_cycle != expected || s.end_cycle < s.start_cycle {
                return Err(Error::Integrity(format!(
                    "stage {} spans {}..={} but should start at {expected}",
                    i + 1,
                    s.start_cycle,
                    s.end_cycle
                )));
            }
            if i + 1 < self.stages.len() && s.len() < self.config.window {
                return Err(Error::Integrity(format!("stage {} is shorter than the window", i + 1)));
            }
            expected = s.end_cycle + 1;
        }
        if expected != self.n_cycles + 1 {
            return Err(Error::Integrity(format!("stages end at {} of {} cycles", expected - 1, self.n_cycles)));
        }
        Ok(())
    }

    /// Pretty JSON with 2-space indent and sorted keys.
    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_string_pretty(&value)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Flat `cycle,stage_id,AR,t2_limit` table of every scored cycle.
    pub fn write_scores_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cycle", "stage_id", "AR", "t2_limit"])?;
        for t in &self.trace {
            w.write_record([
                t.cycle.to_string(),
                t.stage_id.to_string(),
                t.abnormality_rate.to_string(),
                t.t2_limit.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-sample statistics of the cycles scored by one stage's model.
    pub fn stage_sample_scores(&self, stage_id: usize) -> Vec<CycleScore> {
        self.sample_scores.iter().filter(|(s, _)| *s == stage_id).map(|(_, c)| c.clone()).collect()
    }
}

fn meta_of(model: &StageModel) -> StageMeta {
    StageMeta {
        d: model.basis.d,
        tau: model.params.tau,
        r: model.params.r,
        variable_params: model.variable_params.clone(),
        sync_length: model.sync_length,
        objective: model.basis.objective_value,
        converged: model.basis.converged,
        retained_components: model.monitor.retained,
        t2_limit: model.monitor.t2_limit,
    }
}

/// Splits a dataset into degradation stages.
pub fn divide_stages(dataset: &BatteryDataset, config: &SegmenterConfig) -> Result<Segmentation> {
    config.validate()?;
    let n = dataset.n_cycles();
    if n < config.window {
        return Err(Error::Usage(format!("{n} cycles are fewer than the training window of {}", config.window)));
    }
    let mut stages: Vec<StageRange> = Vec::new();
    let mut trace = Vec::new();
    let mut sample_scores = Vec::new();
    let mut notes = Vec::new();
    let mut short_tail = false;
    let mut origin = 1;
    loop {
        let remaining = n + 1 - origin;
        if remaining < config.window {
            notes.push(format!(
                "cycles {origin}..={n} are fewer than the window and were appended to stage {}",
                stages.len()
            ));
            let last = stages.last_mut().expect("the first stage always has a full window");
            last.end_cycle = n;
            short_tail = true;
            break;
        }
        let train = &dataset.cycles[origin - 1..origin - 1 + config.window];
        let mut model = StageModel::fit(train, config)?;
        let stage_id = stages.len() + 1;
        let limit = model.monitor.t2_limit;
        for c in train {
            let score = model.score(c)?;
            trace.push(TraceEntry {
                cycle: c.cycle_index,
                stage_id,
                role: CycleRole::Training,
                abnormality_rate: score.abnormality_rate,
                t2_limit: limit,
                decision: None,
            });
            sample_scores.push((stage_id, score));
        }
        let mut switch = None;
        for c in &dataset.cycles[origin - 1 + config.window..] {
            let (score, decision) = model.score_stream(c)?;
            trace.push(TraceEntry {
                cycle: c.cycle_index,
                stage_id,
                role: CycleRole::Monitored,
                abnormality_rate: score.abnormality_rate,
                t2_limit: limit,
                decision: Some(decision.label().to_string()),
            });
            sample_scores.push((stage_id, score));
            if let Decision::Switch { at } = decision {
                switch = Some(at);
                break;
            }
        }
        let end = switch.map_or(n, |at| at - 1);
        stages.push(StageRange { start_cycle: origin, end_cycle: end, meta: meta_of(&model) });
        match switch {
            Some(at) => {
                log::info!("switch detected at cycle {at}");
                origin = at;
            }
            None => break,
        }
    }
    let seg = Segmentation {
        dataset: dataset.name.clone(),
        n_cycles: n,
        stages,
        trace,
        config: config.clone(),
        short_tail,
        notes,
        sample_scores,
    };
    seg.check_partition()?;
    Ok(seg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, Mixing, SynthSpec};

    fn decisions(rates: &[f64], required: usize) -> Vec<Decision> {
        let mut rule = SwitchRule::new(0.05, required);
        rates.iter().enumerate().map(|(i, &a)| rule.observe(i + 1, a)).collect()
    }

    #[test]
    fn below_alpha_continues() {
        assert_eq!(decisions(&[0.01, 0.02], 2), vec![Decision::Continue, Decision::Continue]);
    }

    #[test]
    fn isolated_exceedance_is_discarded() {
        assert_eq!(decisions(&[0.20, 0.01], 2), vec![Decision::Pending { since: 1 }, Decision::Continue]);
        let d = decisions(&[0.2, 0.0, 0.2, 0.0, 0.2], 2);
        assert!(d.iter().all(|x| !matches!(x, Decision::Switch { .. })));
    }

    #[test]
    fn consecutive_exceedances_switch_at_first() {
        let d = decisions(&[0.0, 0.06, 0.3], 2);
        assert_eq!(d[2], Decision::Switch { at: 2 });
        let d = decisions(&[0.1, 0.1, 0.01, 0.1, 0.1, 0.1], 3);
        assert_eq!(d[1], Decision::Pending { since: 1 });
        assert_eq!(d[5], Decision::Switch { at: 4 });
        assert_eq!(decisions(&[0.05], 1), vec![Decision::Continue]);
        assert_eq!(decisions(&[0.051], 1), vec![Decision::Switch { at: 1 }]);
    }

    #[test]
    fn config_validation() {
        let ok = SegmenterConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            SegmenterConfig { window: 2, ..ok.clone() },
            SegmenterConfig { consecutive_required: 0, ..ok.clone() },
            SegmenterConfig { alpha: 1.0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Usage(_))));
        }
    }

    fn small_config() -> SegmenterConfig {
        let mut c = SegmenterConfig::default();
        c.psr.fixed = Some(EmbeddingParams { tau: 1, r: 1 });
        c.ssa.optimizer.restarts = 2;
        c
    }

    fn synth(n_cycles: usize, change: Vec<usize>, seed: u64) -> BatteryDataset {
        let spec = SynthSpec { n_cycles, change_cycles: change, mixing: Mixing::RandomOrthogonal, ..Default::default() };
        generate(&spec, seed).unwrap().0
    }

    #[test]
    fn too_few_cycles() {
        let ds = synth(10, vec![], 1);
        assert!(matches!(divide_stages(&ds, &small_config()), Err(Error::Usage(_))));
    }

    #[test]
    fn stream_rejects_skipped_cycles() {
        let ds = synth(20, vec![], 2);
        let cfg = small_config();
        let mut model = StageModel::fit(&ds.cycles[..15], &cfg).unwrap();
        assert!(matches!(model.score_stream(&ds.cycles[16]), Err(Error::Usage(_))));
        assert!(model.score_stream(&ds.cycles[15]).is_ok());
        assert!(matches!(model.score_stream(&ds.cycles[15]), Err(Error::Usage(_))));
    }

    #[test]
    fn detects_variance_change_and_partitions() {
        let spec = SynthSpec { n_cycles: 40, change_cycles: vec![20], variance_schedule: vec![1.0, 25.0], ..Default::default() };
        let (ds, _) = generate(&spec, 2).unwrap();
        let mut cfg = SegmenterConfig { window: 10, consecutive_required: 3, ..small_config() };
        cfg.ssa.optimizer.restarts = 2;
        let seg = divide_stages(&ds, &cfg).unwrap();
        seg.check_partition().unwrap();
        assert_eq!(seg.boundaries(), vec![20]);
        assert_eq!(seg.stages[1].start_cycle, seg.stages[0].end_cycle + 1);
        let again = divide_stages(&ds, &cfg).unwrap();
        assert_eq!(seg.to_json().unwrap(), again.to_json().unwrap());
    }

    #[test]
    fn short_tail_merges_into_last_stage() {
        let ds = synth(40, vec![30], 4);
        let seg = divide_stages(&ds, &small_config()).unwrap();
        seg.check_partition().unwrap();
        if seg.stages.iter().all(|s| s.end_cycle != 29) {
            assert!(seg.short_tail || seg.stages.len() == 1);
        }
        assert_eq!(seg.stages.last().unwrap().end_cycle, 40);
    }

    #[test]
    fn json_and_csv_outputs() {
        let ds = synth(20, vec![], 5);
        let seg = divide_stages(&ds, &small_config()).unwrap();
        let json = seg.to_json().unwrap();
        let back = Segmentation::from_json(&json).unwrap();
        assert_eq!(back.stages, seg.stages);
        assert!(json.contains("\n  \"config\""));
        let keys: Vec<&str> = json.lines().filter(|l| l.starts_with("  \"")).map(|l| l.trim()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let mut buf = Vec::new();
        seg.write_scores_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("cycle,stage_id,AR,t2_limit\n1,1,"));
        assert_eq!(text.lines().count(), 21);
    }
}
