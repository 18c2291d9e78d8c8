//! Ablation studies over seeded simulator bundles.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::mct::{FusionWeights, SpatialMode};
use crate::pipeline::{run_scenario, RunOutcome};
use crate::quality::UpdateMetric;
use crate::sim::{LookalikePair, OcclusionEpisode, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    /// Scenario seeds per study row.
    pub seeds: u32,
    pub base_seed: u64,
    pub bootstrap_resamples: u32,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self { seeds: 30, base_seed: 1000, bootstrap_resamples: 2000 }
    }
}

impl AblateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 || self.bootstrap_resamples == 0 {
            return Err(Error::InvalidConfig("ablate.seeds and ablate.bootstrap_resamples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Table1,
    Table2,
    Table3,
}

impl std::str::FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Study::Table1),
            "table2" => Ok(Study::Table2),
            "table3" => Ok(Study::Table3),
            other => Err(Error::InvalidConfig(format!("unknown study '{other}' (expected table1, table2 or table3)"))),
        }
    }
}

/// Values of N swept in the occlusion study.
pub const N_SWEEP: [u32; 7] = [0, 2, 3, 4, 5, 6, 8];

/// Drift-heavy scenario: trackers whose jitter and drift grow quickly with
/// template age, strongest toward the image edges.
pub fn drift_scenario(seed: u64) -> ScenarioConfig {
    let mut s = ScenarioConfig { seed, n_vehicles: 8, duration_frames: 300, ..Default::default() };
    s.noise.tracker.drift_rate = 0.1;
    s.noise.tracker.jitter_rate = 0.6;
    s.noise.tracker.edge_gain = 2.0;
    s.noise.tracker.conf_scale = 0.15;
    s.noise.tracker.loss_factor = 1.0;
    s.noise.drift_sigma = 1.0;
    s
}

/// Occlusion scenario: two vehicles repeatedly slip behind a leader for a
/// short or a long spell while other traffic flows in the outer lanes.
pub fn occlusion_scenario(seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0cc1_0000);
    let mut s = ScenarioConfig { seed, n_vehicles: 8, duration_frames: 300, ..Default::default() };
    s.traffic.lanes_per_side = 2;
    s.noise.tracker.drift_rate = 0.0;
    s.noise.occlusion_ramp = 4;
    s.noise.tracker.latch_frames = 1;
    let mut episodes = Vec::new();
    for pair in 0..2 {
        let (occluder, vehicle) = (2 * pair, 2 * pair + 1);
        let mut start = 40 + rng.random_range(0..20);
        while start < 260 {
            let length = if rng.random::<bool>() { rng.random_range(3..=7) } else { rng.random_range(16..=30) };
            episodes.push(OcclusionEpisode { vehicle, occluder, start, length });
            start += length + 30 + rng.random_range(0..20);
        }
    }
    s.noise.occlusions = episodes;
    s
}

/// Lookalike scenario: pairs of near-identical vehicles side by side in
/// neighbouring lanes.
pub fn lookalike_scenario(seed: u64) -> ScenarioConfig {
    let mut s = ScenarioConfig { seed, n_vehicles: 8, duration_frames: 300, ..Default::default() };
    s.traffic.lanes_per_side = 2;
    s.traffic.ahead_probability = 0.0;
    s.traffic.pair_lookalikes = true;
    s.embedding.lookalike_pairs = (0..4).map(|p| LookalikePair { a: 2 * p, b: 2 * p + 1, delta: 0.5 }).collect();
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub label: String,
    pub ic: Interval,
    /// Cross-camera match accuracy pooled over seeds (table3 only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<Interval>,
    pub total_idsw: u64,
    pub total_id: u64,
    pub template_updates: u64,
    pub deletions: u64,
    pub cross_inherits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub study: Study,
    pub seeds: u32,
    pub rows: Vec<StudyRow>,
}

/// Percentile bootstrap interval of the mean.
pub fn bootstrap_mean(values: &[f64], resamples: u32, seed: u64) -> Interval {
    bootstrap_ratio(&values.iter().map(|v| (*v, 1.0)).collect::<Vec<_>>(), resamples, seed)
}

/// Percentile bootstrap interval of `sum(num) / sum(den)` over resampled units.
pub fn bootstrap_ratio(units: &[(f64, f64)], resamples: u32, seed: u64) -> Interval {
    let ratio = |it: &mut dyn Iterator<Item = (f64, f64)>| {
        let (n, d) = it.fold((0.0, 0.0), |a, u| (a.0 + u.0, a.1 + u.1));
        if d > 0.0 { n / d } else { f64::NAN }
    };
    let mean = ratio(&mut units.iter().copied());
    if units.is_empty() {
        return Interval { mean, lo: f64::NAN, hi: f64::NAN };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| ratio(&mut (0..units.len()).map(|_| units[rng.random_range(0..units.len())])))
        .filter(|v| v.is_finite())
        .collect();
    stats.sort_by(f64::total_cmp);
    if stats.is_empty() {
        return Interval { mean, lo: f64::NAN, hi: f64::NAN };
    }
    let at = |q: f64| stats[((q * (stats.len() - 1) as f64).round() as usize).min(stats.len() - 1)];
    Interval { mean, lo: at(0.025), hi: at(0.975) }
}

/// The configured variants of one study, in row order.
pub fn variants(study: Study, base: &RunConfig) -> Vec<(String, RunConfig)> {
    let mut out = Vec::new();
    match study {
        Study::Table1 => {
            let mut default = base.clone();
            default.quality.t1 = 0.0;
            default.quality.t2 = 0.0;
            out.push(("Default".to_owned(), default));
            let mut box_iou = base.clone();
            box_iou.quality.update_metric = UpdateMetric::BoxIou;
            out.push(("IoU_T + C_T".to_owned(), box_iou));
            let mut center = base.clone();
            center.quality.update_metric = UpdateMetric::CenterDrift;
            out.push(("IoU_R + C_R".to_owned(), center));
        }
        Study::Table2 => {
            for n in N_SWEEP {
                let mut c = base.clone();
                c.quality.n_occl = n;
                out.push((format!("N={n}"), c));
            }
        }
        Study::Table3 => {
            let mut feature = base.clone();
            feature.mct.spatial = SpatialMode::Off;
            feature.mct.weights = FusionWeights { alpha: base.mct.weights.alpha.max(f64::MIN_POSITIVE), beta: 0.0 };
            out.push(("feature only".to_owned(), feature));
            let mut gate = base.clone();
            gate.mct.spatial = SpatialMode::Gate;
            out.push(("feature + gate".to_owned(), gate));
            let mut full = base.clone();
            full.mct.spatial = SpatialMode::GateAndScore;
            out.push(("feature + gate + s2".to_owned(), full));
        }
    }
    out
}

pub fn scenario(study: Study, seed: u64) -> ScenarioConfig {
    match study {
        Study::Table1 => drift_scenario(seed),
        Study::Table2 => occlusion_scenario(seed),
        Study::Table3 => lookalike_scenario(seed),
    }
}

/// Runs every (variant, seed) pair, in parallel when a pool is available.
///
/// `threads` caps the worker count; results are assembled in a fixed order
/// so the table does not depend on scheduling.
pub fn run_study(study: Study, base: &RunConfig, threads: Option<usize>) -> Result<StudyTable> {
    base.validate()?;
    let ab = &base.ablate;
    let variants = variants(study, base);
    let jobs: Vec<(usize, u64)> = (0..variants.len())
        .flat_map(|v| (0..ab.seeds as u64).map(move |s| (v, ab.base_seed + s)))
        .collect();
    let run = |&(v, seed): &(usize, u64)| -> Result<RunOutcome> {
        let mut cfg = variants[v].1.clone();
        cfg.sim = scenario(study, seed);
        run_scenario(&cfg)
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let outcomes: Vec<RunOutcome> = pool.install(|| jobs.par_iter().map(run).collect::<Result<Vec<_>>>())?;

    let per_variant = ab.seeds as usize;
    let rows = variants
        .iter()
        .enumerate()
        .map(|(v, (label, _))| {
            let runs = &outcomes[v * per_variant..(v + 1) * per_variant];
            let ics: Vec<f64> = runs.iter().filter_map(|r| r.report.ic).collect();
            let ic = bootstrap_mean(&ics, ab.bootstrap_resamples, 17 + v as u64);
            let accuracy = (study == Study::Table3).then(|| {
                let units: Vec<(f64, f64)> = runs
                    .iter()
                    .map(|r| (r.stats.cross_correct as f64, r.stats.cross_inherits as f64))
                    .collect();
                bootstrap_ratio(&units, ab.bootstrap_resamples, 29 + v as u64)
            });
            StudyRow {
                label: label.clone(),
                ic,
                accuracy,
                total_idsw: runs.iter().map(|r| r.report.total_idsw).sum(),
                total_id: runs.iter().map(|r| r.report.total_id).sum(),
                template_updates: runs.iter().map(|r| r.stats.template_updates).sum(),
                deletions: runs.iter().map(|r| r.stats.deletions).sum(),
                cross_inherits: runs.iter().map(|r| r.stats.cross_inherits).sum(),
            }
        })
        .collect();
    Ok(StudyTable { study, seeds: ab.seeds, rows })
}

impl StudyTable {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:?} over {} seeds", self.study, self.seeds);
        let _ = write!(s, "{:<22} {:>8} {:>19} {:>8} {:>8} {:>8}", "variant", "IC", "95% CI", "IDSW", "ID", "updates");
        if self.study == Study::Table3 {
            let _ = write!(s, " {:>9} {:>19}", "accuracy", "95% CI");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{:<22} {:>8.4} [{:>7.4}, {:>7.4}] {:>8} {:>8} {:>8}",
                r.label, r.ic.mean, r.ic.lo, r.ic.hi, r.total_idsw, r.total_id, r.template_updates
            );
            if let Some(a) = &r.accuracy {
                let _ = write!(s, " {:>9.4} [{:>7.4}, {:>7.4}]", a.mean, a.lo, a.hi);
            }
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,ic,ic_lo,ic_hi,accuracy,accuracy_lo,accuracy_hi,idsw,id,template_updates,deletions\n");
        for r in &self.rows {
            let (a, lo, hi) = r
                .accuracy
                .as_ref()
                .map(|a| (a.mean.to_string(), a.lo.to_string(), a.hi.to_string()))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{a},{lo},{hi},{},{},{},{}",
                r.label, r.ic.mean, r.ic.lo, r.ic.hi, r.total_idsw, r.total_id, r.template_updates, r.deletions
            );
        }
        s
    }
}
