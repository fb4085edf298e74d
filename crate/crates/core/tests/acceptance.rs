//! One line per acceptance criterion, run sequentially so the timing checks
//! see an otherwise idle process.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ddp_core::bench::{bench_scaling, BenchConfig, Pipeline};
use ddp_core::eval::{evaluate, evaluate_detailed, sweep, AreaRanges, GpsConfig, ScoredInstance, GPS_THRESHOLDS};
use ddp_core::gradcheck::{gradcheck_suite, FD_STEP, FD_TOLERANCE};
use ddp_core::iuv::{fit_iuv, total_loss, FitConfig, LossParts, LossWeights, ZeroFcos};
use ddp_core::pipeline::{run_direct, scene_ground_truth, DirectWeights, ForegroundMode, MaskSource, PipelineConfig, WeightConfig};
use ddp_core::scene::{generate_scene, read_scene, write_scene, SceneConfig};
use ddp_core::sparse::{ian_forward, to_sparse, IanParams, InstanceAssignment, NormMode};
use ddp_core::temporal::{generate_jitter_video, smooth_video, temporal_smooth, FlowField, MetricSpace, SmoothingConfig, Video, VideoConfig};
use ddp_core::tensor::{Blob, BlobData};
use ddp_core::{BinaryMask, DenseTensor, Error, FormatError};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

fn within(limit: Duration, t: Instant) -> Result<Duration, String> {
    let dt = t.elapsed();
    check(dt < limit, format!("took {dt:.2?}, limit {limit:?}"))?;
    Ok(dt)
}

/// 64² base gives the 16×16 IUV grid; sparsity varies a little per seed.
fn toy_scene(seed: u64, n: usize) -> SceneConfig {
    SceneConfig { n_instances: n, sparsity: 0.2 + 0.05 * (seed % 3) as f64, base_h: 64, base_w: 64, ..Default::default() }
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let cfg = PipelineConfig { foreground: ForegroundMode::AllOnes, masks: MaskSource::GroundTruth, norm: NormMode::InstanceAware };
    let mut worst = 0f64;
    for seed in 0..10u64 {
        let scene = generate_scene(seed, &toy_scene(seed, 1 + seed as usize % 3)).map_err(err)?;
        let w = DirectWeights::<f32>::for_scene(&scene, &WeightConfig::default(), seed).map_err(err)?;
        let out = run_direct(&scene, &w, &cfg).map_err(err)?;
        let (h, wd) = (out.x_agg.height(), out.x_agg.width());
        check((h, wd) == (16, 16), format!("IUV grid {h}x{wd}"))?;
        check(out.foreground.count_ones() == h * wd, "foreground not all ones")?;
        let masks = scene.instance_masks_at(h, wd).map_err(err)?;
        let labels: Vec<usize> =
            (0..h * wd).map(|i| masks.iter().position(|m| m.get(i / wd, i % wd)).unwrap_or(masks.len())).collect();
        let dense = common::dense_pointwise(&common::dense_fcn(&out.x_agg, &w.iuv.fcn, &labels), &w.iuv.head);
        worst = worst.max(dense.max_abs_diff(out.iuv.logits()).map_err(err)?);
    }
    check(worst <= 1e-6, format!("max |sparse - dense| = {worst:e}"))?;
    let dt = within(Duration::from_secs(5), t)?;
    Ok(format!("10 scenes, max abs diff {worst:e}, {dt:.2?}"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0f64;
    let mut overlaps = 0;
    for _ in 0..20 {
        let (h, w, c) = (rng.gen_range(6..14), rng.gen_range(6..14), rng.gen_range(1..5));
        let n = rng.gen_range(1..=4);
        let masks: Vec<BinaryMask> = (0..n)
            .map(|_| {
                let (r0, c0) = (rng.gen_range(0..h - 2), rng.gen_range(0..w - 2));
                let (r1, c1) = (rng.gen_range(r0 + 2..=h), rng.gen_range(c0 + 2..=w));
                BinaryMask::from_fn(h, w, |r, col| (r0..r1).contains(&r) && (c0..c1).contains(&col))
            })
            .collect();
        // coarse levels make ties common
        let probs: Vec<DenseTensor<f64>> =
            (0..n).map(|_| DenseTensor::from_fn(1, h, w, |_, _, _| rng.gen_range(1..4) as f64 / 4.0)).collect();
        let fg = BinaryMask::from_fn(h, w, |r, col| masks.iter().any(|m| m.get(r, col)));
        let x = DenseTensor::<f64>::from_fn(c, h, w, |_, _, _| rng.gen_range(-2.0..3.0));
        let s = to_sparse(&x, &fg).map_err(err)?;
        let p = IanParams {
            gamma: (0..c).map(|_| rng.gen_range(0.5..1.5)).collect(),
            beta: (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            epsilon: 1e-5,
        };
        let owner: Vec<usize> = s
            .sites()
            .iter()
            .map(|site| {
                let (r, col) = (site.h as usize, site.w as usize);
                let cover: Vec<usize> = (0..n).filter(|&i| masks[i].get(r, col)).collect();
                if cover.len() > 1 {
                    overlaps += 1;
                }
                let best = cover.iter().map(|&i| probs[i].get(0, r, col)).fold(f64::MIN, f64::max);
                *cover.iter().find(|&&i| probs[i].get(0, r, col) == best).expect("covered")
            })
            .collect();
        let a = InstanceAssignment::from_masks(&s, &masks, Some(&probs), false).map_err(err)?;
        let y = ian_forward(&s, &a, &p).map_err(err)?;
        let want = common::gather_norm(s.values(), c, &owner, &p.gamma, &p.beta, p.epsilon);
        let joint = ian_forward(&s, &a.for_mode(NormMode::Joint), &p).map_err(err)?;
        let want_joint = common::gather_norm(s.values(), c, &vec![0; s.len()], &p.gamma, &p.beta, p.epsilon);
        for (got, want) in [(y.values(), &want), (joint.values(), &want_joint)] {
            worst = got.iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
    }
    check(overlaps > 0, "no overlapping sites were drawn")?;
    check(worst <= 1e-6, format!("max |IAN - oracle| = {worst:e}"))?;
    Ok(format!("20 scenes, {overlaps} overlap sites, max abs diff {worst:e} (instance-aware and joint)"))
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let reports = gradcheck_suite(50, 3).map_err(err)?;
    check(reports.len() == 6, format!("{} ops checked", reports.len()))?;
    check(FD_STEP == 1e-6 && FD_TOLERANCE == 1e-4, "finite-difference settings changed")?;
    let mut parts = Vec::new();
    for r in &reports {
        check(r.cases >= 50, format!("{}: {} cases", r.op, r.cases))?;
        check(r.max_rel_error <= 1e-4, format!("{}: rel error {:e}", r.op, r.max_rel_error))?;
        parts.push(format!("{} {:.1e}", r.op, r.max_rel_error));
    }
    let dt = within(Duration::from_secs(60), t)?;
    Ok(format!("{} ({dt:.2?})", parts.join(", ")))
}

fn criterion_4() -> Outcome {
    let w = LossWeights::default();
    check((w.lambda1, w.lambda2, w.lambda3) == (5.0, 10.0, 1.0), "default weights")?;
    let parts = LossParts { l_mins: 0.1, l_mdp: 0.1, l_i: 1.0, l_uv: 0.05, l_s: 0.2 };
    let b = total_loss(&parts, &w, &ZeroFcos).map_err(err)?;
    check((b.l_all - 2.7).abs() <= 4.0 * f64::EPSILON * 2.7, format!("hand case gives {}", b.l_all))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let p = LossParts {
            l_mins: rng.gen_range(0.0..2.0),
            l_mdp: rng.gen_range(0.0..2.0),
            l_i: rng.gen_range(0.0..4.0),
            l_uv: rng.gen_range(0.0..1.0),
            l_s: rng.gen_range(0.0..1.0),
        };
        let f: f64 = rng.gen_range(0.0..3.0);
        let b = total_loss(&p, &w, &|| f).map_err(err)?;
        let mask = f + 5.0 * (p.l_mins + p.l_mdp);
        let iuv = p.l_i + 10.0 * p.l_uv + 1.0 * p.l_s;
        check(b.l_mask == mask && b.l_iuv == iuv && b.l_all == mask + iuv, format!("composition mismatch for {p:?}"))?;
    }
    Ok(format!("hand case {} and 1000 random compositions exact", b.l_all))
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let scene = generate_scene(5, &SceneConfig { base_h: 64, base_w: 64, ..Default::default() }).map_err(err)?;
    check(scene.iuv_dims() == (16, 16), "toy scene is not 16x16 at IUV scale")?;
    let cfg = FitConfig::default();
    check(cfg.steps == 200 && cfg.lr == 0.1, "fit defaults changed")?;
    let a = fit_iuv(&scene, &cfg).map_err(err)?;
    let b = fit_iuv(&scene, &cfg).map_err(err)?;
    check(a == b, "two fits with one seed differ")?;
    check(a.l_iuv.len() == cfg.steps, format!("{} trace entries", a.l_iuv.len()))?;
    let (first, last) = (a.initial(), a.last());
    check(last < 0.5 * first, format!("L_IUV {first} -> {last}"))?;
    let dt = within(Duration::from_secs(30), t)?;
    Ok(format!("L_IUV {first:.3} -> {last:.3} (ratio {:.3}), deterministic, {dt:.2?} for two fits", last / first))
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let cfg = SmoothingConfig::default();
    check(cfg.r == 2 && cfg.alphas == vec![0.2; 5], "smoothing defaults changed")?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let frame = DenseTensor::<f32>::from_fn(75, 16, 16, |_, _, _| rng.gen_range(-3.0..3.0));
    let window = vec![frame.clone(); 5];
    let flows = vec![FlowField::zeros(16, 16); 4];
    let out = temporal_smooth(&window, &flows, &cfg).map_err(err)?;
    check(out == frame, format!("constant window changed by {:e}", out.max_abs_diff(&frame).map_err(err)?))?;
    let mut flows = BTreeMap::new();
    for t in 0..6usize {
        for j in -2i64..=2 {
            if j != 0 && (0..6).contains(&(t as i64 + j)) {
                flows.insert((t, j), FlowField::zeros(16, 16));
            }
        }
    }
    let constant = Video { frames: vec![frame.clone(); 6], flows };
    let rep = smooth_video(&constant, &cfg, MetricSpace::Logits).map_err(err)?;
    check(rep.frames.iter().all(|f| *f == frame), "constant video changed")?;

    let video = generate_jitter_video(4, &VideoConfig::default()).map_err(err)?;
    check(video.frames.len() == 8, "jitter video length")?;
    let rep = smooth_video(&video, &cfg, MetricSpace::Rendered).map_err(err)?;
    let (b, a) = (rep.before, rep.after);
    check(a.itf > b.itf, format!("ITF {} -> {}", b.itf, a.itf))?;
    check(a.isi > b.isi, format!("ISI {} -> {}", b.isi, a.isi))?;
    let dt = within(Duration::from_secs(10), t)?;
    Ok(format!("constant sequences unchanged; ITF {:.2} -> {:.2}, ISI {:.4} -> {:.4}, {dt:.2?}", b.itf, a.itf, b.isi, a.isi))
}

/// Predictions for a scene: each GT instance's own summary with a random
/// fraction of pixels corrupted, plus occasional spurious duplicates.
fn noisy_predictions(scene: &ddp_core::scene::Scene, rng: &mut ChaCha8Rng) -> Vec<ScoredInstance> {
    let (h, w) = scene.iuv_dims();
    let gt = scene.gt_summary(h, w).unwrap();
    let masks = scene.instance_masks_at(h, w).unwrap();
    let mut preds = Vec::new();
    for m in &masks {
        let copies = if rng.gen_bool(0.3) { 2 } else { 1 };
        for _ in 0..copies {
            let mut s = gt.masked(m).unwrap();
            let rate = rng.gen_range(0.0..0.6);
            for i in 0..h * w {
                if rng.gen_bool(rate) {
                    s.part[i] = rng.gen_range(1..25);
                    s.u[i] = rng.gen_range(0.0..1.0);
                    s.v[i] = rng.gen_range(0.0..1.0);
                }
            }
            // quantized so equal scores occur
            preds.push(ScoredInstance { score: rng.gen_range(0..6) as f64 / 5.0, summary: s, area: m.count_ones() as f64 * 16.0 });
        }
    }
    if rng.gen_bool(0.2) {
        preds.pop();
    }
    preds
}

fn criterion_7() -> Outcome {
    let sim = GpsConfig::new(0.3).map_err(err)?;
    let ranges = AreaRanges::for_base(64, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut compared = 0;
    for seed in 0..40u64 {
        let n = 1 + seed as usize % 4;
        let scene = generate_scene(seed, &SceneConfig { n_instances: n, base_h: 64, base_w: 64, ..Default::default() }).map_err(err)?;
        let gts = scene_ground_truth(&scene);
        let preds = noisy_predictions(&scene, &mut rng);
        let (res, rows) = evaluate_detailed(&preds, &gts, &sim, ranges).map_err(err)?;
        let gps = ddp_core::eval::gps_matrix(&preds, &gts, &sim).map_err(err)?;
        let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
        let (mut aps, mut recs) = (Vec::new(), Vec::new());
        for (row, &tau) in rows.iter().zip(&GPS_THRESHOLDS) {
            let (ap, rec) = if preds.is_empty() {
                (0.0, 0.0)
            } else {
                common::reference_ap(&common::brute_force_outcomes(&gps, &scores, tau), gts.len())
            };
            check(row.threshold == tau, "threshold order")?;
            check(row.ap == ap && row.recall == rec, format!("seed {seed} tau {tau}: ({}, {}) vs brute force ({ap}, {rec})", row.ap, row.recall))?;
            aps.push(ap);
            recs.push(rec);
            compared += 1;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        check(res.ap == mean(&aps) && res.ar == mean(&recs), format!("seed {seed}: summary means differ"))?;
        check(res.ap50 == aps[0] && res.ap75 == aps[5], format!("seed {seed}: AP50/AP75"))?;
    }

    // perfect predictions: every instance's own ground-truth summary
    for seed in 0..10u64 {
        let scene = generate_scene(100 + seed, &SceneConfig { n_instances: 1 + seed as usize % 4, base_h: 64, base_w: 64, ..Default::default() })
            .map_err(err)?;
        let (h, w) = scene.iuv_dims();
        let gt = scene.gt_summary(h, w).map_err(err)?;
        let gts = scene_ground_truth(&scene);
        let preds: Vec<ScoredInstance> = scene
            .instance_masks_at(h, w)
            .map_err(err)?
            .iter()
            .zip(&gts)
            .map(|(m, g)| ScoredInstance { score: 0.9, summary: gt.masked(m).unwrap(), area: g.area })
            .collect();
        let r = evaluate(&preds, &gts, &sim, AreaRanges::for_base(64, 64)).map_err(err)?;
        check(r.ap == 1.0 && r.ar == 1.0, format!("perfect predictions give AP {} AR {}", r.ap, r.ar))?;
        let empty = evaluate(&[], &gts, &sim, AreaRanges::for_base(64, 64)).map_err(err)?;
        check(empty.ap == 0.0 && empty.ar == 0.0, "empty predictions nonzero")?;
    }
    let empty_sweep = sweep(&[], &[], &[], &[1.0], ranges).map_err(err)?;
    check(empty_sweep.ap == 0.0 && empty_sweep.ar == 0.0, "empty sweep nonzero")?;
    Ok(format!("{compared} (scene, threshold) pairs equal brute force; perfect -> 1.0; empty -> 0.0"))
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let cfg = BenchConfig { instance_counts: vec![1, 8], sparsities: vec![0.25], ..Default::default() };
    check(cfg.base == 256 && cfg.repeats >= 5, "bench defaults changed")?;
    let recs = bench_scaling(&cfg, 0).map_err(err)?;
    let time = |p: &str, n: usize| recs.iter().find(|r| r.pipeline == p && r.n == n).map(|r| r.seconds).expect("record");
    let direct = time("direct", 8) / time("direct", 1);
    let topdown = time("topdown-sim", 8) / time("topdown-sim", 1);
    check(direct <= 1.5, format!("direct n=8/n=1 ratio {direct:.2}"))?;
    check(topdown >= 4.0, format!("top-down n=8/n=1 ratio {topdown:.2}"))?;
    let sweep_cfg = BenchConfig {
        instance_counts: vec![4],
        sparsities: vec![0.05, 0.15, 0.30, 0.60],
        pipelines: vec![Pipeline::Direct],
        // short runs on a shared core need more samples for a stable median
        repeats: 21,
        warmup: 3,
        ..Default::default()
    };
    let recs = bench_scaling(&sweep_cfg, 0).map_err(err)?;
    let secs: Vec<f64> = recs.iter().map(|r| r.seconds).collect();
    check(secs.windows(2).all(|p| p[0] < p[1]), format!("direct times over sparsity {secs:?}"))?;
    let dt = within(Duration::from_secs(180), t)?;
    Ok(format!(
        "direct x{direct:.2}, top-down x{topdown:.2}; sparsity sweep {} s; {dt:.1?}",
        secs.iter().map(|s| format!("{s:.4}")).collect::<Vec<_>>().join(" < ")
    ))
}

fn expect_format(bytes: &[u8], want: fn(&FormatError) -> bool) -> Result<(), String> {
    match Blob::from_bytes(bytes) {
        Err(e) if want(&e) => Ok(()),
        other => Err(format!("unexpected {other:?}")),
    }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dir = tempfile::tempdir().map_err(err)?;
    // bit patterns include NaN payloads, infinities and signed zeros
    let f32s: Vec<f32> = (0..60).map(|_| f32::from_bits(rng.gen())).chain([f32::NAN, -0.0, f32::INFINITY]).collect();
    let f64s: Vec<f64> = (0..30).map(|_| f64::from_bits(rng.gen())).collect();
    let u32s: Vec<u32> = (0..24).map(|_| rng.gen()).collect();
    let blobs = [
        Blob::new(vec![3, 3, 7], BlobData::F32(f32s)).map_err(err)?,
        Blob::new(vec![5, 6], BlobData::F64(f64s)).map_err(err)?,
        Blob::new(vec![2, 3, 4], BlobData::U32(u32s)).map_err(err)?,
        Blob::new(vec![0, 4], BlobData::F32(vec![])).map_err(err)?,
    ];
    for (i, b) in blobs.iter().enumerate() {
        let bytes = b.to_bytes();
        let path = dir.path().join(format!("b{i}.ddpt"));
        ddp_core::tensor::write_blob(b, &path).map_err(err)?;
        let back = ddp_core::tensor::read_blob(&path).map_err(err)?;
        check(back.to_bytes() == bytes && fs::read(&path).map_err(err)? == bytes, format!("blob {i} changed"))?;
    }

    let scene = generate_scene(9, &SceneConfig { n_instances: 3, ..Default::default() }).map_err(err)?;
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    write_scene(&scene, &a).map_err(err)?;
    let back = read_scene(&a).map_err(err)?;
    check(back == scene, "scene differs after read")?;
    write_scene(&back, &b).map_err(err)?;
    let mut names: Vec<_> = fs::read_dir(&a).map_err(err)?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in &names {
        check(fs::read(a.join(n)).map_err(err)? == fs::read(b.join(n)).map_err(err)?, format!("{n:?} not byte-identical"))?;
    }

    let good = blobs[0].to_bytes();
    let mut negatives = 0;
    let mut neg = |bytes: Vec<u8>, want: fn(&FormatError) -> bool| -> Result<(), String> {
        expect_format(&bytes, want)?;
        negatives += 1;
        Ok(())
    };
    let mut bad = good.clone();
    bad[0] = b'X';
    neg(bad, |e| matches!(e, FormatError::BadMagic))?;
    let mut bad = good.clone();
    bad[4] = 2;
    neg(bad, |e| matches!(e, FormatError::UnsupportedVersion(2)))?;
    let mut bad = good.clone();
    bad[5] = 9;
    neg(bad, |e| matches!(e, FormatError::BadDtype(9)))?;
    neg(good[..3].to_vec(), |e| matches!(e, FormatError::Truncated("magic")))?;
    neg(good[..6].to_vec(), |e| matches!(e, FormatError::Truncated("ndim")))?;
    neg(good[..10].to_vec(), |e| matches!(e, FormatError::Truncated("dims")))?;
    neg(good[..good.len() - 1].to_vec(), |e| matches!(e, FormatError::Truncated("payload")))?;
    let mut bad = good.clone();
    bad.push(0);
    neg(bad, |e| matches!(e, FormatError::TrailingBytes(1)))?;
    let mut bad = good.clone();
    bad[7..11].copy_from_slice(&u32::MAX.to_le_bytes());
    bad[11..15].copy_from_slice(&u32::MAX.to_le_bytes());
    bad[15..19].copy_from_slice(&u32::MAX.to_le_bytes());
    neg(bad, |e| matches!(e, FormatError::DimOverflow | FormatError::Truncated("payload")))?;
    let mut bad = good.clone();
    bad[6] = 4;
    neg(bad, |e| matches!(e, FormatError::Truncated(_) | FormatError::TrailingBytes(_)))?;

    // tensor-level and manifest-level structured errors
    match DenseTensor::<f32>::from_blob(blobs[1].clone()) {
        Err(FormatError::BadNdim { expected: 3, found: 2 }) => negatives += 1,
        other => return Err(format!("ndim: {other:?}")),
    }
    match DenseTensor::<f64>::from_blob(blobs[0].clone()) {
        Err(FormatError::DtypeMismatch { .. }) => negatives += 1,
        other => return Err(format!("dtype: {other:?}")),
    }
    let manifest = fs::read_to_string(a.join("scene.json")).map_err(err)?;
    let edits: [(&str, String); 4] = [
        ("format", manifest.replacen("\"ddp-scene\"", "\"other\"", 1)),
        ("version", manifest.replacen("\"version\": 1", "\"version\": 7", 1)),
        ("path", manifest.replacen("\"mask_0.ddpt\"", "\"../mask_0.ddpt\"", 1)),
        ("unknown field", manifest.replacen('{', "{\"extra\": 1,", 1)),
    ];
    for (what, text) in edits {
        check(text != manifest, format!("{what} edit did not apply"))?;
        fs::write(b.join("scene.json"), text).map_err(err)?;
        match read_scene(&b) {
            Err(Error::Format(_)) | Err(Error::Json(_)) => negatives += 1,
            other => return Err(format!("{what}: {:?}", other.map(|_| ()))),
        }
    }
    check(negatives >= 10, format!("{negatives} negative cases"))?;
    Ok(format!("{} blobs and a {}-file scene byte-identical; {negatives} corruptions rejected with structured errors", blobs.len(), names.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("sparse FCN with all-ones foreground equals dense reference", criterion_1),
        ("instance-aware normalization equals gather oracle", criterion_2),
        ("analytic gradients match central differences", criterion_3),
        ("loss composition", criterion_4),
        ("toy fit halves the IUV loss", criterion_5),
        ("temporal smoothing", criterion_6),
        ("evaluator equals brute force", criterion_7),
        ("runtime scaling", criterion_8),
        ("format round-trips and structured errors", criterion_9),
    ];
    // straight to stdout so the report shows without --nocapture
    let mut out = std::io::stdout();
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => writeln!(out, "criterion {}: PASS {name}: {detail}", i + 1).unwrap(),
            Err(why) => {
                writeln!(out, "criterion {}: FAIL {name}: {why}", i + 1).unwrap();
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
