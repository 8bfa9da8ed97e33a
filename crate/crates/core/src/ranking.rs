//! Paired image-level bootstrap ranking of detection methods.
//!
//! Every iteration draws `N` images with replacement from the shared
//! universe; all methods are scored on that same multiset and ranked by the
//! chosen metric (higher is better). The draw of iteration `i` depends only on
//! `(seed, i)`, so results do not depend on the number of worker threads.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{class_universe, match_dataset, score_images, summarize, EvalSettings, GroundTruthSet, MatchTable};
use crate::matching::Detection;

pub const DEFAULT_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMetric {
    Map,
    Froc,
}

impl std::str::FromStr for RankMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "map" => Ok(RankMetric::Map),
            "froc" => Ok(RankMetric::Froc),
            other => Err(Error::Config(format!("unknown ranking metric '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMode {
    /// Tied methods share the average of the ranks they span.
    Fractional,
    /// Tied methods all receive the best rank they span.
    Min,
}

/// One method's predictions over the shared image universe.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method_id: String,
    pub detections: Vec<Detection>,
    /// Images the method declares it processed, when known. Universe images
    /// missing here are scored as having no predictions.
    pub image_ids: Option<Vec<String>>,
}

impl MethodRun {
    pub fn new(method_id: impl Into<String>, detections: Vec<Detection>) -> Self {
        MethodRun {
            method_id: method_id.into(),
            detections,
            image_ids: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub metric: RankMetric,
    pub iterations: usize,
    pub seed: u64,
    pub settings: EvalSettings,
    pub tie_mode: TieMode,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
    pub baseline: Option<String>,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            metric: RankMetric::Map,
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
            settings: EvalSettings::default(),
            tie_mode: TieMode::Fractional,
            threads: 0,
            baseline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRanking {
    pub method_id: String,
    /// Mass per rank `1..=M`; fractional ties spread one unit evenly over
    /// the tied positions. Sums to the iteration count.
    pub rank_histogram: Vec<f64>,
    pub mean_rank: f64,
    /// Metric on the full, un-resampled dataset.
    pub point_metric: f64,
    pub delta_vs_baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingDistribution {
    pub metric: RankMetric,
    pub iterations: usize,
    pub seed: u64,
    pub tie_mode: TieMode,
    pub paired: bool,
    pub n_images: usize,
    pub baseline: Option<String>,
    pub methods: Vec<MethodRanking>,
    pub warnings: Vec<String>,
    /// Metric of every method (inner) in every iteration (outer).
    #[serde(skip)]
    pub iteration_metrics: Vec<Vec<f64>>,
}

/// Image indices drawn with replacement for one iteration.
pub fn bootstrap_draw(seed: u64, iteration: usize, n_images: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    (0..n_images).map(|_| rng.gen_range(0..n_images)).collect()
}

/// Ranks of `values` with higher values ranked first.
pub fn rank_descending(values: &[f64], tie_mode: TieMode) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let better = values.iter().filter(|&&o| o > v).count();
            let tied = values.iter().filter(|&&o| o == v).count();
            match tie_mode {
                TieMode::Fractional => better as f64 + (tied as f64 + 1.0) / 2.0,
                TieMode::Min => better as f64 + 1.0,
            }
        })
        .collect()
}

fn add_to_histogram(hist: &mut [f64], values: &[f64], me: usize, tie_mode: TieMode) {
    let v = values[me];
    let better = values.iter().filter(|&&o| o > v).count();
    let tied = values.iter().filter(|&&o| o == v).count();
    match tie_mode {
        TieMode::Fractional => {
            let share = 1.0 / tied as f64;
            for slot in &mut hist[better..better + tied] {
                *slot += share;
            }
        }
        TieMode::Min => hist[better] += 1.0,
    }
}

/// `metric - baseline_metric` for every method.
pub fn delta_vs_baseline(results: &[(String, f64)], baseline_id: &str) -> Result<Vec<(String, f64)>> {
    let base = results
        .iter()
        .find(|(id, _)| id == baseline_id)
        .map(|r| r.1)
        .ok_or_else(|| Error::UnknownBaseline(baseline_id.to_string()))?;
    Ok(results.iter().map(|(id, v)| (id.clone(), v - base)).collect())
}

fn metric_of(table: &MatchTable, images: &[usize], settings: &EvalSettings, metric: RankMetric) -> f64 {
    match score_images(table, images, &settings.config) {
        Some((map, froc)) => match metric {
            RankMetric::Map => map,
            RankMetric::Froc => froc,
        },
        None => 0.0,
    }
}

pub fn bootstrap_rank(runs: &[MethodRun], gt: &GroundTruthSet, options: &BootstrapOptions) -> Result<RankingDistribution> {
    if runs.len() < 2 {
        return Err(Error::TooFewMethods(runs.len()));
    }
    let n_images = gt.image_ids.len();
    if n_images == 0 {
        return Err(Error::NoImages);
    }
    if options.iterations == 0 {
        return Err(Error::Config("bootstrap needs at least one iteration".into()));
    }
    options.settings.validate()?;
    let mut seen = HashSet::new();
    for r in runs {
        if !seen.insert(r.method_id.as_str()) {
            return Err(Error::DuplicateMethod(r.method_id.clone()));
        }
    }
    if let Some(b) = &options.baseline {
        if !seen.contains(b.as_str()) {
            return Err(Error::UnknownBaseline(b.clone()));
        }
    }

    let mut warnings = Vec::new();
    for r in runs {
        if let Some(ids) = &r.image_ids {
            let covered: HashSet<&str> = ids.iter().map(String::as_str).collect();
            let missing = gt.image_ids.iter().filter(|id| !covered.contains(id.as_str())).count();
            if missing > 0 {
                let msg = format!("method '{}' has no entry for {missing} image(s); scored as empty", r.method_id);
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let all_dets: Vec<&[Detection]> = runs.iter().map(|r| r.detections.as_slice()).collect();
    let classes = class_universe(gt, &all_dets);
    let settings = &options.settings;

    let work = || -> Result<(Vec<MatchTable>, Vec<Vec<f64>>)> {
        let tables = runs
            .iter()
            .map(|r| match_dataset(&r.detections, gt, &classes, settings))
            .collect::<Result<Vec<_>>>()?;
        let per_iteration = (0..options.iterations)
            .into_par_iter()
            .map(|it| {
                let draw = bootstrap_draw(options.seed, it, n_images);
                tables.iter().map(|t| metric_of(t, &draw, settings, options.metric)).collect()
            })
            .collect();
        Ok((tables, per_iteration))
    };
    let (tables, iteration_metrics) = if options.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?
            .install(work)?
    } else {
        work()?
    };

    let m = runs.len();
    let mut histograms = vec![vec![0.0; m]; m];
    let mut rank_sums = vec![0.0; m];
    for values in &iteration_metrics {
        let ranks = rank_descending(values, options.tie_mode);
        for me in 0..m {
            rank_sums[me] += ranks[me];
            add_to_histogram(&mut histograms[me], values, me, options.tie_mode);
        }
    }

    let point: Vec<(String, f64)> = runs
        .iter()
        .zip(&tables)
        .map(|(r, t)| {
            let v = match summarize(t, settings) {
                Ok(res) => match options.metric {
                    RankMetric::Map => res.map,
                    RankMetric::Froc => res.froc_score,
                },
                Err(Error::NoGroundTruth) => 0.0,
                Err(e) => return Err(e),
            };
            Ok((r.method_id.clone(), v))
        })
        .collect::<Result<_>>()?;
    let deltas = match &options.baseline {
        Some(b) => Some(delta_vs_baseline(&point, b)?),
        None => None,
    };

    let methods = (0..m)
        .map(|i| MethodRanking {
            method_id: runs[i].method_id.clone(),
            rank_histogram: histograms[i].clone(),
            mean_rank: rank_sums[i] / options.iterations as f64,
            point_metric: point[i].1,
            delta_vs_baseline: deltas.as_ref().map(|d| d[i].1),
        })
        .collect();
    Ok(RankingDistribution {
        metric: options.metric,
        iterations: options.iterations,
        seed: options.seed,
        tie_mode: options.tie_mode,
        paired: true,
        n_images,
        baseline: options.baseline.clone(),
        methods,
        warnings,
        iteration_metrics,
    })
}
