//! Runtime scaling of the direct pipeline against the top-down comparator.

use std::hint::black_box;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{run_direct, run_topdown_sim, DirectWeights, MaskSource, PipelineConfig, WeightConfig};
use crate::scene::{generate_scene, Scene, SceneConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Direct,
    TopdownSim,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::TopdownSim => "topdown-sim",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub instance_counts: Vec<usize>,
    pub sparsities: Vec<f64>,
    pub pipelines: Vec<Pipeline>,
    pub repeats: usize,
    pub warmup: usize,
    pub base: usize,
    pub channels: usize,
    pub crop: usize,
    /// Per-instance parallelism for the top-down comparator.
    pub parallel: bool,
    pub weights: WeightConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            instance_counts: vec![1, 2, 4, 8],
            sparsities: vec![0.25],
            pipelines: vec![Pipeline::Direct, Pipeline::TopdownSim],
            repeats: 5,
            warmup: 2,
            base: 256,
            channels: 8,
            crop: 56,
            parallel: false,
            weights: WeightConfig::default(),
        }
    }
}

/// One CSV row: median wall time over `repeats` runs after warmup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub pipeline: String,
    pub n: usize,
    pub sparsity: f64,
    pub seconds: f64,
    pub parallel: bool,
}

/// Smallest nonzero step of the monotonic clock.
pub fn timer_tick() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..64 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

/// Median of `repeats` timed calls after `warmup` untimed ones.
pub fn median_time(repeats: usize, warmup: usize, mut f: impl FnMut() -> Result<()>) -> Result<Duration> {
    check_repeats(repeats)?;
    for _ in 0..warmup {
        f()?;
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed());
    }
    median_of(times)
}

fn check_repeats(repeats: usize) -> Result<()> {
    if repeats < 5 {
        return Err(Error::invalid(format!("{repeats} repeats; at least 5 required")));
    }
    Ok(())
}

/// Median of the samples, rejected when it is within ten clock ticks.
fn median_of(mut times: Vec<Duration>) -> Result<Duration> {
    times.sort();
    let n = times.len();
    let median = if n % 2 == 1 { times[n / 2] } else { (times[n / 2 - 1] + times[n / 2]) / 2 };
    let tick = timer_tick();
    if median < tick * 10 {
        return Err(Error::TimerResolution { median_ns: median.as_nanos(), tick_ns: tick.as_nanos() });
    }
    Ok(median)
}

/// The direct pipeline as timed: ground-truth masks drive suppression since
/// untrained heads give arbitrary masks; the instance branch still runs.
fn run_once(p: Pipeline, scene: &Scene, w: &DirectWeights<f32>, cfg: &BenchConfig) -> Result<()> {
    match p {
        Pipeline::Direct => {
            let direct = PipelineConfig { masks: MaskSource::GroundTruth, ..Default::default() };
            black_box(run_direct(scene, w, &direct)?);
        }
        Pipeline::TopdownSim => {
            black_box(run_topdown_sim(scene, w, cfg.crop, cfg.parallel)?);
        }
    }
    Ok(())
}

pub fn time_pipeline(p: Pipeline, scene: &Scene, w: &DirectWeights<f32>, cfg: &BenchConfig) -> Result<Duration> {
    median_time(cfg.repeats, cfg.warmup, || run_once(p, scene, w, cfg))
}

/// Times every `(pipeline, n, sparsity)` combination on seeded scenes.
///
/// Repeats run round-robin over all combinations, so slow periods of the
/// machine spread across every record instead of landing on one.
pub fn bench_scaling(cfg: &BenchConfig, seed: u64) -> Result<Vec<BenchRecord>> {
    check_repeats(cfg.repeats)?;
    let weights = DirectWeights::<f32>::random(cfg.channels, 4, &cfg.weights, seed)?;
    let mut jobs = Vec::new();
    for &sparsity in &cfg.sparsities {
        for &n in &cfg.instance_counts {
            let scene_cfg = SceneConfig {
                n_instances: n,
                sparsity,
                base_h: cfg.base,
                base_w: cfg.base,
                channels: cfg.channels,
                ..Default::default()
            };
            let scene = generate_scene(seed, &scene_cfg)?;
            for &p in &cfg.pipelines {
                jobs.push((p, n, sparsity, scene.clone()));
            }
        }
    }
    for (p, _, _, scene) in &jobs {
        for _ in 0..cfg.warmup {
            run_once(*p, scene, &weights, cfg)?;
        }
    }
    let mut times = vec![Vec::with_capacity(cfg.repeats); jobs.len()];
    for _ in 0..cfg.repeats {
        for ((p, _, _, scene), t) in jobs.iter().zip(&mut times) {
            let start = Instant::now();
            run_once(*p, scene, &weights, cfg)?;
            t.push(start.elapsed());
        }
    }
    jobs.into_iter()
        .zip(times)
        .map(|((p, n, sparsity, _), t)| {
            Ok(BenchRecord {
                pipeline: p.name().into(),
                n,
                sparsity,
                seconds: median_of(t)?.as_secs_f64(),
                parallel: cfg.parallel && p == Pipeline::TopdownSim,
            })
        })
        .collect()
}

pub fn write_bench_csv(records: &[BenchRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bench_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}
