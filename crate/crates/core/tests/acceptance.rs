//! Acceptance criteria, one line of output each. Exits nonzero on any failure.

mod common;

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use groupforge::attention::{
    attention_baseline, build_indicator_matrix, compute_attention, compute_attention_detailed, IndicatorMatrix,
    Matrix, ReweightParams,
};
use groupforge::mask_engine::{prescribed_rects, sample_training_mask, EngineConfig, Strategy, TargetDraw};
use groupforge::model::{rect_to_mask, BBox, Joint, Keypoint, MaskGrid, PartClass, SeedSpec, Skeleton};
use groupforge::pipeline::{assemble_conditioning, generate_sample, ConditioningStack, PipelineConfig};
use groupforge::skeleton::{limb_region, rotate_limb, RegionParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rng(stream: u64) -> ChaCha8Rng {
    SeedSpec::new(20_240_601, stream).rng()
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.gen_range(-scale..scale))
}

fn random_mask(r: &mut ChaCha8Rng, w: u32, h: u32, p: f64) -> MaskGrid {
    let mut m = MaskGrid::empty(w, h);
    for y in 0..h {
        for x in 0..w {
            m.set(x, y, r.gen_bool(p));
        }
    }
    m
}

/// Direct evaluation of the reweighted attention with plain loops.
fn naive_attention(q: &Matrix, k: &Matrix, v: &Matrix, ind: &Matrix, w: f64, sigma: f64) -> Vec<Vec<f64>> {
    let (hw, tn, d) = (q.rows(), k.rows(), q.cols());
    let mut scores = vec![vec![0.0; tn]; hw];
    let mut max = f64::MIN;
    for i in 0..hw {
        for j in 0..tn {
            let s: f64 = (0..d).map(|c| q.get(i, c) * k.get(j, c)).sum();
            scores[i][j] = s;
            max = max.max(s);
        }
    }
    let wp = w * (1.0 + sigma).ln() * max;
    let mut out = vec![vec![0.0; v.cols()]; hw];
    for i in 0..hw {
        let e: Vec<f64> = (0..tn)
            .map(|j| ((scores[i][j] + wp * ind.get(i, j)) / (d as f64).sqrt()).exp())
            .collect();
        let z: f64 = e.iter().sum();
        for (c, o) in out[i].iter_mut().enumerate() {
            *o = (0..tn).map(|j| e[j] / z * v.get(j, c)).sum();
        }
    }
    out
}

struct Instance {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    masks: Vec<MaskGrid>,
    tokens: usize,
}

fn instance(r: &mut ChaCha8Rng) -> Instance {
    let (h, w) = loop {
        let (h, w) = (r.gen_range(1..=4u32), r.gen_range(1..=4u32));
        if h * w <= 16 {
            break (h, w);
        }
    };
    let n = r.gen_range(1..=3usize);
    let tokens = r.gen_range(1..=8usize);
    let d = r.gen_range(1..=8usize);
    let hw = (h * w) as usize;
    let dv = r.gen_range(1..=8);
    Instance {
        q: random_matrix(r, hw, d, 2.0),
        k: random_matrix(r, n * tokens, d, 2.0),
        v: random_matrix(r, n * tokens, dv, 3.0),
        masks: (0..n).map(|_| random_mask(r, w, h, 0.5)).collect(),
        tokens,
    }
}

fn c1_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let inst = instance(&mut r);
        let ind = build_indicator_matrix(&inst.masks, inst.tokens).map_err(|e| e.to_string())?;
        let (w, sigma) = (r.gen_range(0.0..4.0), r.gen_range(0.0..3.0));
        let got = compute_attention(&inst.q, &inst.k, &inst.v, &ind, &ReweightParams::new(w, sigma))
            .map_err(|e| e.to_string())?;
        let want = naive_attention(&inst.q, &inst.k, &inst.v, ind.matrix(), w, sigma);
        let scale = want.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for (i, row) in want.iter().enumerate() {
            for (c, &x) in row.iter().enumerate() {
                worst = worst.max((got.get(i, c) - x).abs() / scale);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 1e-6, format!("max relative error {worst:e}"))?;
    check(secs < 5.0, format!("took {secs:.2} s"))?;
    Ok(format!("100 instances, max relative error {worst:.1e}, {secs:.2} s"))
}

fn c2_degenerate() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let inst = instance(&mut r);
        let base = attention_baseline(&inst.q, &inst.k, &inst.v).map_err(|e| e.to_string())?;
        let ind = build_indicator_matrix(&inst.masks, inst.tokens).map_err(|e| e.to_string())?;
        let out = compute_attention(&inst.q, &inst.k, &inst.v, &ind, &ReweightParams::new(r.gen_range(0.0..4.0), 0.0))
            .map_err(|e| e.to_string())?;
        worst = worst.max(out.max_abs_diff(&base));

        let t = inst.tokens;
        let k1 = inst.k.slice_rows(0, t);
        let v1 = inst.v.slice_rows(0, t);
        let base1 = attention_baseline(&inst.q, &k1, &v1).map_err(|e| e.to_string())?;
        let ones = IndicatorMatrix::from_matrix(Matrix::from_fn(inst.q.rows(), t, |_, _| 1.0)).map_err(|e| e.to_string())?;
        for w in [0.5, 1.0, 4.0] {
            let out = compute_attention(&inst.q, &k1, &v1, &ones, &ReweightParams::new(w, 1.0)).map_err(|e| e.to_string())?;
            worst = worst.max(out.max_abs_diff(&base1));
        }
    }
    check(worst <= 1e-9, format!("max deviation from baseline {worst:e}"))?;
    Ok(format!("sigma=0 and single-reference all-ones cases, max deviation {worst:.1e}"))
}

fn c3_monotone() -> Outcome {
    let mut r = rng(3);
    let ws = [0.0, 0.5, 1.0, 2.0, 4.0];
    let mut rows_checked = 0;
    let mut instances = 0;
    while instances < 50 {
        let inst = instance(&mut r);
        let ind = build_indicator_matrix(&inst.masks, inst.tokens).map_err(|e| e.to_string())?;
        let m = ind.matrix();
        let mixed: Vec<usize> = (0..m.rows())
            .filter(|&i| m.row(i).contains(&0.0) && m.row(i).contains(&1.0))
            .collect();
        if mixed.is_empty() || inst.q.matmul_transposed(&inst.k).map_err(|e| e.to_string())?.max() <= 0.0 {
            continue;
        }
        instances += 1;
        let masses: Vec<Vec<f64>> = ws
            .iter()
            .map(|&w| {
                let res = compute_attention_detailed(&inst.q, &inst.k, &inst.v, &ind, &ReweightParams::new(w, 1.0)).unwrap();
                mixed
                    .iter()
                    .map(|&i| res.probs.row(i).iter().zip(m.row(i)).map(|(p, b)| p * b).sum())
                    .collect()
            })
            .collect();
        for (n, _) in mixed.iter().enumerate() {
            rows_checked += 1;
            for s in 1..ws.len() {
                check(
                    masses[s][n] > masses[s - 1][n],
                    format!("mass not increasing at w={}: {} <= {}", ws[s], masses[s][n], masses[s - 1][n]),
                )?;
            }
        }
    }
    Ok(format!("50 instances, {rows_checked} mixed rows strictly increasing"))
}

fn union_of(rects: &[BBox], w: u32, h: u32) -> MaskGrid {
    let mut m = MaskGrid::empty(w, h);
    for rect in rects {
        if let Ok(r) = rect_to_mask(rect, w, h) {
            m.union_in_place(&r).unwrap();
        }
    }
    m
}

fn c4_geometry(fixtures: &[common::Loaded]) -> Outcome {
    let start = Instant::now();
    for (strategy, stream) in [(Strategy::Coarse, 40), (Strategy::Body, 41)] {
        let mut cfg = EngineConfig::default();
        cfg.restrict_strategies(&[strategy]);
        for k in 0..1000u64 {
            let f = &fixtures[(k % fixtures.len() as u64) as usize];
            let spec = sample_training_mask(&f.ann, &f.parsings, SeedSpec::new(stream, k), &cfg).map_err(|e| e.to_string())?;
            let mut rects = Vec::new();
            for d in &spec.draws {
                match *d {
                    TargetDraw::Coarse { r, .. } => check((0.1..=0.2).contains(&r), format!("coarse r={r}"))?,
                    TargetDraw::Body { r, .. } => check((0.5..=0.9).contains(&r), format!("body r={r}"))?,
                    _ => return Err(format!("unexpected draw {d:?}")),
                }
                rects.extend(prescribed_rects(&f.ann, d).map_err(|e| e.to_string())?);
            }
            let allowed = union_of(&rects, f.ann.width, f.ann.height);
            match strategy {
                Strategy::Coarse => check(spec.recipe_mask.is_subset_of(&allowed).unwrap(), format!("coarse sample {k} escapes its rectangles"))?,
                _ => check(spec.recipe_mask == allowed, format!("body sample {k} differs from its rectangles"))?,
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 30.0, format!("took {secs:.1} s"))?;
    Ok(format!("1000 coarse and 1000 body samples contained, r in range, {secs:.1} s"))
}

fn c5_faces(fixtures: &[common::Loaded]) -> Outcome {
    let cfg = PipelineConfig::default();
    let mut face_px = 0usize;
    for k in 0..1000u64 {
        let f = &fixtures[(k % fixtures.len() as u64) as usize];
        let s = generate_sample("x", &f.ann, &f.image, &f.parsings, SeedSpec::new(5, k), &cfg).map_err(|e| e.to_string())?;
        for p in &f.parsings {
            face_px += p
                .labels()
                .iter()
                .zip(s.mask.bits())
                .filter(|(l, m)| **l == PartClass::Face && **m)
                .count();
        }
    }
    check(face_px == 0, format!("{face_px} face pixels masked"))?;
    Ok("1000 end-to-end samples, 0 face pixels masked".into())
}

fn c6_anti_leak(fixtures: &[common::Loaded]) -> Outcome {
    let mut cfg = EngineConfig::default();
    cfg.restrict_strategies(&[Strategy::Fine]);
    let region = RegionParams::default();
    let mut checked = 0;
    let mut worst: f64 = 1.0;
    for k in 0..500u64 {
        let f = &fixtures[(k % fixtures.len() as u64) as usize];
        let (w, h) = (f.ann.width, f.ann.height);
        let spec = sample_training_mask(&f.ann, &f.parsings, SeedSpec::new(6, k), &cfg).map_err(|e| e.to_string())?;
        for d in &spec.draws {
            let TargetDraw::Fine { person, augment, limbs } = d else { continue };
            if !augment.rotations.iter().any(|r| r.angle_deg != 0.0) {
                continue;
            }
            checked += 1;
            let original = &f.ann.person(*person).unwrap().skeleton;
            let augmented = &spec.augmented.iter().find(|(id, _)| id == person).unwrap().1;
            for s in [original, augmented] {
                let rects: Vec<BBox> = limbs.iter().filter_map(|&l| limb_region(s, l, &region).ok()).collect();
                let target = union_of(&rects, w, h);
                if target.is_empty() {
                    continue;
                }
                let cov = target.overlap(&spec.brushed_mask).unwrap() as f64 / target.count() as f64;
                worst = worst.min(cov);
            }
        }
    }
    check(checked > 0, "no rotated fine targets")?;
    check(worst >= 0.99, format!("minimum coverage {worst:.4}"))?;
    Ok(format!("{checked} rotated fine targets, minimum coverage {:.2}%", worst * 100.0))
}

fn run_generate(out: &Path) -> Result<(), String> {
    let (a, i) = common::fixture_dirs();
    let status = Command::new(env!("CARGO_BIN_EXE_groupforge"))
        .args(["generate", "--seed", "99", "--num-samples", "24", "--annotations"])
        .arg(&a)
        .arg("--images")
        .arg(&i)
        .arg("--out")
        .arg(out)
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    check(status.success(), format!("generate exited with {status}"))
}

fn digests(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["mask", "masked", "skeleton", "ref", "indicator"] {
        let mut names: Vec<_> = std::fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            out.push((rel, groupforge::pipeline::output::sha256_hex(&std::fs::read(&p).unwrap()).into_bytes()));
        }
    }
    out.push(("manifest".into(), std::fs::read(dir.join("manifest.jsonl")).unwrap()));
    out
}

fn c7_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_generate(&a)?;
    run_generate(&b)?;
    let (da, db) = (digests(&a), digests(&b));
    check(da.len() > 24 * 3, format!("only {} files", da.len()))?;
    check(da == db, "runs differ")?;
    Ok(format!("two runs, {} files byte-identical", da.len() - 1))
}

fn c8_conditioning(fixtures: &[common::Loaded]) -> Outcome {
    let cfg = PipelineConfig::default();
    let gray = cfg.gray[0] as f32 / 255.0;
    let mut stacks = 0;
    for k in 0..100u64 {
        let f = &fixtures[(k % fixtures.len() as u64) as usize];
        let s = generate_sample("x", &f.ann, &f.image, &f.parsings, SeedSpec::new(8, k), &cfg).map_err(|e| e.to_string())?;
        for (w, h) in [(64, 64), (96, 64), (192, 128), (256, 256)] {
            let c = assemble_conditioning(&s, w, h).map_err(|e| e.to_string())?;
            stacks += 1;
            check(c.channel_count() == 12, format!("{} channels", c.channel_count()))?;
            let mask = c.channel(ConditioningStack::MASK);
            check(mask.iter().all(|&v| v == 0.0 || v == 1.0), "mask channel not binary")?;
            for ch in ConditioningStack::MASKED_IMAGE..ConditioningStack::MASKED_IMAGE + 3 {
                let img = c.channel(ch);
                check(
                    mask.iter().zip(img).all(|(&m, &v)| m == 0.0 || v == gray),
                    format!("channel {ch} differs from gray under the mask"),
                )?;
            }
        }
    }
    Ok(format!("{stacks} stacks, 12 channels, binary mask, gray fill exact"))
}

fn c9_indicator() -> Outcome {
    let mut r = rng(9);
    for _ in 0..50 {
        let (w, h) = (r.gen_range(1..12u32), r.gen_range(1..12u32));
        let n = r.gen_range(1..=4usize);
        let t = r.gen_range(1..=10usize);
        let p = r.gen_range(0.0..1.0);
        let masks: Vec<MaskGrid> = (0..n).map(|_| random_mask(&mut r, w, h, p)).collect();
        let ind = build_indicator_matrix(&masks, t).map_err(|e| e.to_string())?;
        let m = ind.matrix();
        check(m.shape() == ((w * h) as usize, n * t), format!("shape {:?}", m.shape()))?;
        for i in 0..(w * h) as usize {
            let (x, y) = (i as u32 % w, i as u32 / w);
            for (k, mask) in masks.iter().enumerate() {
                let want = if mask.get(x, y) { 1.0 } else { 0.0 };
                for tt in 0..t {
                    check(m.get(i, k * t + tt) == want, format!("entry ({i}, {}) wrong", k * t + tt))?;
                }
            }
        }
    }
    Ok("50 random mask sets match the elementwise definition".into())
}

fn c10_rotation() -> Outcome {
    let mut r = rng(10);
    let pivots = [Joint::LeftShoulder, Joint::RightShoulder, Joint::LeftElbow, Joint::RightElbow];
    let mut worst_inv: f64 = 0.0;
    let mut worst_dist: f64 = 0.0;
    for _ in 0..200 {
        let mut s = Skeleton::empty();
        for j in Joint::ALL {
            s = s.with_keypoint(j, Keypoint::new(r.gen_range(0.0..1024.0), r.gen_range(0.0..1024.0), r.gen_range(0.05..1.0)));
        }
        let pivot = pivots[r.gen_range(0..pivots.len())];
        let a = r.gen_range(-180.0..180.0);
        let rotated = rotate_limb(&s, pivot, a).map_err(|e| e.to_string())?;
        let back = rotate_limb(&rotated, pivot, -a).map_err(|e| e.to_string())?;
        let (px, py) = s.position(pivot).unwrap();
        for ((k0, k1), k2) in s.keypoints().iter().zip(rotated.keypoints()).zip(back.keypoints()) {
            worst_inv = worst_inv.max((k0.x - k2.x).abs()).max((k0.y - k2.y).abs());
            let d0 = (k0.x - px).hypot(k0.y - py);
            let d1 = (k1.x - px).hypot(k1.y - py);
            worst_dist = worst_dist.max((d0 - d1).abs());
        }
    }
    check(worst_inv <= 1e-6, format!("inverse error {worst_inv:e}"))?;
    check(worst_dist <= 1e-9, format!("pivot distance error {worst_dist:e}"))?;
    Ok(format!("200 rotations, inverse error {worst_inv:.1e}, distance error {worst_dist:.1e}"))
}

fn main() {
    let fixtures = common::load_fixtures();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("attention oracle equivalence", Box::new(c1_oracle)),
        ("degenerate equalities", Box::new(c2_degenerate)),
        ("reweight monotonicity", Box::new(c3_monotone)),
        ("mask geometry containment", Box::new(|| c4_geometry(&fixtures))),
        ("face preservation", Box::new(|| c5_faces(&fixtures))),
        ("anti-leak coverage", Box::new(|| c6_anti_leak(&fixtures))),
        ("determinism", Box::new(c7_determinism)),
        ("conditioning contract", Box::new(|| c8_conditioning(&fixtures))),
        ("indicator construction", Box::new(c9_indicator)),
        ("rotation invertibility", Box::new(c10_rotation)),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
