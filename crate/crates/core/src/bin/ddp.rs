use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use ddp_core::bench::{bench_scaling, write_bench_csv, BenchConfig};
use ddp_core::eval::{evaluate_detailed, write_threshold_csv, AreaRanges, GpsConfig, ScoredInstance};
use ddp_core::gradcheck::gradcheck_suite;
use ddp_core::iuv::{fit_iuv, iuv_summarize, FitConfig};
use ddp_core::pipeline::{direct_predictions, run_direct, scene_ground_truth, DirectWeights, PipelineConfig, WeightConfig};
use ddp_core::scene::{generate_scene, read_scene, write_scene, Scene, SceneConfig};
use ddp_core::sparse::to_sparse;
use ddp_core::temporal::{generate_jitter_video, read_video, smooth_video, write_video, MetricSpace, SmoothingConfig, Video, VideoConfig};
use ddp_core::tensor::{write_blob, write_tensor};

#[derive(Parser)]
#[command(name = "ddp", version, about = "Direct dense pose kernels at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON config; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene and write its manifest.
    GenScene(Common),
    /// Run the direct pipeline on a scene.
    Run(Common),
    /// Direct vs top-down runtime scaling.
    Bench(Common),
    /// Temporally smooth a video of IUV logits.
    Smooth(Common),
    /// GPS-based AP/AR of the direct pipeline on a scene.
    Eval(Common),
    /// Finite-difference checks of all analytic gradients.
    Gradcheck(Common),
    /// Gradient-descent fit of the global IUV branch on one scene.
    Fit(Common),
}

fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading config {}", p.display()))?;
            Ok(serde_json::from_slice(&bytes).map_err(ddp_core::Error::from)?)
        }
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_vec_pretty(v)?)?;
    Ok(())
}

/// Scene from a manifest path, or generated from the seed.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct SceneSource {
    scene: Option<PathBuf>,
    generate: SceneConfig,
}

impl SceneSource {
    fn load(&self, seed: u64) -> anyhow::Result<Scene> {
        Ok(match &self.scene {
            Some(p) => read_scene(p)?,
            None => generate_scene(seed, &self.generate)?,
        })
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    #[serde(flatten)]
    source: SceneSource,
    weights: WeightConfig,
    pipeline: PipelineConfig,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct SmoothConfig {
    video: Option<PathBuf>,
    synthetic: VideoConfig,
    smoothing: SmoothingConfig,
    metrics: MetricSpace,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum PredictionSource {
    #[default]
    Direct,
    /// Ground-truth logits; an upper-bound sanity check.
    GroundTruth,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct EvalConfig {
    #[serde(flatten)]
    source: SceneSource,
    weights: WeightConfig,
    pipeline: PipelineConfig,
    predictions: PredictionSource,
    /// Kernel width of the UV similarity; required.
    kappa: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct GradcheckConfig {
    cases: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { cases: 50 }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct FitCliConfig {
    #[serde(flatten)]
    source: SceneSource,
    fit: FitConfig,
}

impl Default for FitCliConfig {
    fn default() -> Self {
        Self {
            source: SceneSource {
                scene: None,
                generate: SceneConfig { n_instances: 2, sparsity: 0.25, base_h: 64, base_w: 64, ..Default::default() },
            },
            fit: FitConfig::default(),
        }
    }
}

fn gen_scene(c: &Common) -> anyhow::Result<serde_json::Value> {
    let cfg: SceneConfig = load_config(&c.config)?;
    let scene = generate_scene(c.seed, &cfg)?;
    let manifest = write_scene(&scene, &c.out_dir)?;
    Ok(json!({ "manifest": manifest, "sparsity": scene.sparsity(), "instances": scene.instances.len() }))
}

fn run(c: &Common) -> anyhow::Result<serde_json::Value> {
    let cfg: RunConfig = load_config(&c.config)?;
    let scene = cfg.source.load(c.seed)?;
    let w = DirectWeights::<f32>::for_scene(&scene, &cfg.weights, c.seed)?;
    let out = run_direct(&scene, &w, &cfg.pipeline)?;
    fs::create_dir_all(&c.out_dir)?;
    write_tensor(out.iuv.logits(), c.out_dir.join("iuv.ddpt"))?;
    write_tensor(&iuv_summarize(&out.iuv).render::<f32>(), c.out_dir.join("iuv_summary.ddpt"))?;
    let sparse = to_sparse(&out.x_agg, &out.foreground)?;
    let (coords, values) = sparse.to_blobs();
    write_blob(&coords, c.out_dir.join("foreground_sites.ddpt"))?;
    write_blob(&values, c.out_dir.join("foreground_values.ddpt"))?;
    let mut index = Vec::new();
    for (i, p) in out.instances.iter().enumerate() {
        let (ins, dp) = (format!("m_ins_{i}.ddpt"), format!("m_dp_{i}.ddpt"));
        write_tensor(&p.m_ins_logits, c.out_dir.join(&ins))?;
        write_tensor(&p.m_dp_logits, c.out_dir.join(&dp))?;
        index.push(json!({ "instance_id": i, "location": p.location, "score": p.score, "m_ins_logits": ins, "m_dp_logits": dp }));
    }
    write_json(&c.out_dir.join("instances.json"), &index)?;
    Ok(json!({
        "iuv": "iuv.ddpt",
        "instances": index.len(),
        "active_sites": sparse.len(),
        "sparsity": out.foreground.count_ones() as f64 / (out.foreground.height() * out.foreground.width()) as f64,
    }))
}

fn bench(c: &Common) -> anyhow::Result<serde_json::Value> {
    let cfg: BenchConfig = load_config(&c.config)?;
    let records = bench_scaling(&cfg, c.seed)?;
    fs::create_dir_all(&c.out_dir)?;
    let path = c.out_dir.join("bench.csv");
    write_bench_csv(&records, &path)?;
    Ok(json!({ "csv": path, "records": records }))
}

fn smooth(c: &Common) -> anyhow::Result<serde_json::Value> {
    let cfg: SmoothConfig = load_config(&c.config)?;
    let video = match &cfg.video {
        Some(p) => read_video(p)?,
        None => generate_jitter_video(c.seed, &cfg.synthetic)?,
    };
    let rep = smooth_video(&video, &cfg.smoothing, cfg.metrics)?;
    let smoothed = Video { frames: rep.frames.clone(), flows: video.flows.clone() };
    if cfg.video.is_none() {
        write_video(&video, c.out_dir.join("input"))?;
    }
    let manifest = write_video(&smoothed, c.out_dir.join("smoothed"))?;
    let mut w = csv::Writer::from_path(c.out_dir.join("pairs.csv")).map_err(ddp_core::Error::from)?;
    w.write_record(["t", "psnr_before", "ssim_before", "psnr_after", "ssim_after"]).map_err(ddp_core::Error::from)?;
    for (b, a) in rep.pairs_before.iter().zip(&rep.pairs_after) {
        w.write_record([b.t.to_string(), b.psnr.to_string(), b.ssim.to_string(), a.psnr.to_string(), a.ssim.to_string()])
            .map_err(ddp_core::Error::from)?;
    }
    w.flush()?;
    let metrics = json!({ "before": rep.before, "after": rep.after });
    write_json(&c.out_dir.join("metrics.json"), &metrics)?;
    Ok(json!({ "manifest": manifest, "metrics": metrics }))
}

fn eval(c: &Common) -> anyhow::Result<serde_json::Value> {
    let cfg: EvalConfig = load_config(&c.config)?;
    let Some(kappa) = cfg.kappa else { bail!(ddp_core::Error::InvalidArgument("config field `kappa` is required".into())) };
    let sim = GpsConfig::new(kappa)?;
    let scene = cfg.source.load(c.seed)?;
    let preds: Vec<ScoredInstance> = match cfg.predictions {
        PredictionSource::Direct => {
            let w = DirectWeights::<f32>::for_scene(&scene, &cfg.weights, c.seed)?;
            direct_predictions(&scene, &run_direct(&scene, &w, &cfg.pipeline)?)?
        }
        PredictionSource::GroundTruth => {
            let (h, w) = scene.iuv_dims();
            let summary = scene.gt_summary(h, w)?;
            scene
                .instance_masks_at(h, w)?
                .iter()
                .zip(&scene.instances)
                .map(|(m, inst)| Ok(ScoredInstance { score: 1.0, summary: summary.masked(m)?, area: inst.area() as f64 }))
                .collect::<ddp_core::Result<_>>()?
        }
    };
    let gts = scene_ground_truth(&scene);
    let (result, rows) = evaluate_detailed(&preds, &gts, &sim, AreaRanges::for_base(scene.base_h, scene.base_w))?;
    fs::create_dir_all(&c.out_dir)?;
    write_json(&c.out_dir.join("eval.json"), &result)?;
    write_threshold_csv(&rows, c.out_dir.join("thresholds.csv"))?;
    Ok(serde_json::to_value(result)?)
}

fn gradcheck(c: &Common) -> anyhow::Result<serde_json::Value> {
    let cfg: GradcheckConfig = load_config(&c.config)?;
    let reports = gradcheck_suite(cfg.cases, c.seed)?;
    fs::create_dir_all(&c.out_dir)?;
    write_json(&c.out_dir.join("gradcheck.json"), &reports)?;
    if let Some(bad) = reports.iter().find(|r| !r.passed) {
        bail!(ddp_core::Error::InvalidArgument(format!(
            "gradient check failed for {}: relative error {:.3e} > {:.0e}",
            bad.op, bad.max_rel_error, bad.tolerance
        )));
    }
    Ok(serde_json::to_value(reports)?)
}

fn fit(c: &Common) -> anyhow::Result<serde_json::Value> {
    let cfg: FitCliConfig = load_config(&c.config)?;
    let scene = cfg.source.load(c.seed)?;
    let trace = fit_iuv(&scene, &cfg.fit)?;
    fs::create_dir_all(&c.out_dir)?;
    let mut w = csv::Writer::from_path(c.out_dir.join("trace.csv")).map_err(ddp_core::Error::from)?;
    w.write_record(["step", "l_iuv", "l_i", "l_uv", "l_s"]).map_err(ddp_core::Error::from)?;
    for k in 0..trace.l_iuv.len() {
        w.write_record([k.to_string(), trace.l_iuv[k].to_string(), trace.l_i[k].to_string(), trace.l_uv[k].to_string(), trace.l_s[k].to_string()])
            .map_err(ddp_core::Error::from)?;
    }
    w.flush()?;
    Ok(json!({ "initial": trace.initial(), "final": trace.last(), "steps": trace.l_iuv.len(), "active_sites": trace.active_sites }))
}

fn error_record(e: &anyhow::Error) -> serde_json::Value {
    let kind = e.chain().find_map(|c| c.downcast_ref::<ddp_core::Error>()).map_or("other", ddp_core::Error::kind);
    json!({ "error": { "kind": kind, "message": format!("{e:#}") } })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenScene(c) => gen_scene(c),
        Command::Run(c) => run(c),
        Command::Bench(c) => bench(c),
        Command::Smooth(c) => smooth(c),
        Command::Eval(c) => eval(c),
        Command::Gradcheck(c) => gradcheck(c),
        Command::Fit(c) => fit(c),
    };
    match result {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::FAILURE
        }
    }
}
