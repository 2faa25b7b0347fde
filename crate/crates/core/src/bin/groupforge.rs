use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use image::{Rgb, RgbImage};
use rand::Rng;

use groupforge::attention::{
    block_mass, build_indicator_matrix, compute_attention_detailed, encode_pose_stub, encode_reference_stub,
    fuse_intra_person_keys, project_values, AttentionConfig, FusionWeights, Matrix, ReweightParams,
};
use groupforge::mask_engine::Strategy;
use groupforge::model::{rect_to_mask, BBox, Joint, Keypoint, SeedSpec, Skeleton};
use groupforge::pipeline::{self, GenerateOptions, PipelineConfig};

#[derive(Parser)]
#[command(name = "groupforge", version, about = "Group photo inpainting data engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training samples and a manifest.
    Generate {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        num_samples: u64,
        /// Comma-separated subset of coarse,fine,body.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a side-by-side composite of one sample.
    Preview {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sample: String,
    },
    /// Re-check digests and invariants of a generated directory.
    Validate {
        #[arg(long)]
        out: PathBuf,
        /// Also rebuild every sample from the recorded seed and config.
        #[arg(long)]
        regenerate: bool,
    },
    /// Run the person-aware attention kernel on stub features.
    AttnDemo {
        #[arg(long, default_value_t = 2)]
        refs: usize,
        /// Query grid as H,W.
        #[arg(long, default_value = "16,16")]
        hw: String,
        #[arg(long, default_value_t = 16)]
        tokens: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        w: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the procedural fixture set.
    Fixtures {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        count: u64,
    },
    /// Print the default config file.
    DefaultConfig,
}

fn parse_hw(s: &str) -> Result<(u32, u32)> {
    let (h, w) = s.split_once(',').context("--hw expects H,W")?;
    let (h, w): (u32, u32) = (h.trim().parse()?, w.trim().parse()?);
    if h == 0 || w == 0 {
        bail!("--hw must be positive");
    }
    Ok((h, w))
}

#[allow(clippy::too_many_arguments)]
fn attn_demo(refs: usize, (h, w): (u32, u32), tokens: usize, dim: usize, wt: f64, sigma: f64, seed: u64) -> Result<()> {
    if refs == 0 || tokens == 0 || dim == 0 {
        bail!("--refs, --tokens and --dim must be positive");
    }
    let config = AttentionConfig {
        tokens_per_ref: tokens,
        feature_dim: dim,
        pose_dim: 2 * groupforge::model::NUM_JOINTS,
        fusion_dim: dim,
        key_dim: dim,
        pose_norm: w as f64,
    };
    let weights = FusionWeights::random(&config, SeedSpec::new(seed, u64::MAX));
    let mut rng = SeedSpec::new(seed, 0).rng();
    let band = w as f64 / refs as f64;
    let mut feats = Vec::with_capacity(refs);
    let mut poses = Vec::with_capacity(refs);
    let mut masks = Vec::with_capacity(refs);
    for n in 0..refs {
        let color = Rgb([rng.gen(), rng.gen(), rng.gen()]);
        let img = RgbImage::from_pixel(32, 32, color);
        feats.push(encode_reference_stub(&img, SeedSpec::new(seed, 1 + n as u64), &config)?);
        let cx = band * (n as f64 + 0.5);
        let s = Skeleton::empty()
            .with_keypoint(Joint::Nose, Keypoint::new(cx, h as f64 * 0.2, 1.0))
            .with_keypoint(Joint::LeftHip, Keypoint::new(cx + band * 0.2, h as f64 * 0.6, 1.0))
            .with_keypoint(Joint::RightHip, Keypoint::new(cx - band * 0.2, h as f64 * 0.6, 1.0));
        poses.push(encode_pose_stub(&s, &config));
        let bbox = BBox::spanning(band * n as f64, 0.0, band * (n + 1) as f64, h as f64);
        masks.push(rect_to_mask(&bbox, w, h)?);
    }
    let k = fuse_intra_person_keys(&feats, &poses, &weights)?;
    let v = project_values(&feats, &weights)?;
    let indicator = build_indicator_matrix(&masks, tokens)?;
    let hw = (h * w) as usize;
    // Each query resembles a random token of some reference, not necessarily its own.
    let mut q = Matrix::zeros(hw, dim);
    for i in 0..hw {
        let j = rng.gen_range(0..k.rows());
        for c in 0..dim {
            q.set(i, c, k.get(j, c) + rng.gen_range(-0.1..0.1));
        }
    }
    let base = compute_attention_detailed(&q, &k, &v, &indicator, &ReweightParams::new(0.0, sigma))?;
    let guided = compute_attention_detailed(&q, &k, &v, &indicator, &ReweightParams::new(wt, sigma))?;
    let (mb, mg) = (block_mass(&base.probs, tokens), block_mass(&guided.probs, tokens));
    println!("queries {h}x{w}, refs {refs}, tokens {tokens}, dim {dim}, w {wt}, sigma {sigma}");
    println!("indicator scale {:.6}", guided.scales[0]);
    println!("{:>4} {:>8} {:>14} {:>14}", "ref", "queries", "mass_baseline", "mass_guided");
    for (n, m) in masks.iter().enumerate() {
        let rows: Vec<usize> = (0..hw).filter(|&i| m.bits()[i]).collect();
        let avg = |mm: &Matrix| rows.iter().map(|&i| mm.get(i, n)).sum::<f64>() / rows.len().max(1) as f64;
        println!("{n:>4} {:>8} {:>14.6} {:>14.6}", rows.len(), avg(&mb), avg(&mg));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate {
            annotations,
            images,
            out,
            seed,
            num_samples,
            strategies,
            config,
        } => {
            let mut cfg = match config {
                Some(p) => PipelineConfig::load(&p).with_context(|| format!("loading {}", p.display()))?,
                None => PipelineConfig::default(),
            };
            if let Some(list) = strategies {
                let keep = list
                    .iter()
                    .map(|s| Strategy::parse(s.trim()).with_context(|| format!("unknown strategy {s:?}")))
                    .collect::<Result<Vec<_>>>()?;
                cfg.engine.restrict_strategies(&keep);
                cfg.validate()?;
            }
            let opts = GenerateOptions {
                annotations,
                images,
                out,
                seed,
                num_samples,
                config: cfg,
            };
            pipeline::generate_dataset(&opts)?;
            println!("generated {num_samples} samples in {}", opts.out.display());
            Ok(true)
        }
        Command::Preview { out, sample } => {
            let path = pipeline::write_preview(&out, &sample)?;
            println!("{}", path.display());
            Ok(true)
        }
        Command::Validate { out, regenerate } => {
            let report = pipeline::validate_output(&out, regenerate)?;
            for p in &report.problems {
                println!("FAIL {p}");
            }
            println!(
                "{} samples, {} files checked, {} problems",
                report.samples,
                report.files,
                report.problems.len()
            );
            Ok(report.is_ok())
        }
        Command::AttnDemo {
            refs,
            hw,
            tokens,
            dim,
            w,
            sigma,
            seed,
        } => {
            attn_demo(refs, parse_hw(&hw)?, tokens, dim, w, sigma, seed)?;
            Ok(true)
        }
        Command::Fixtures {
            annotations,
            images,
            seed,
            count,
        } => {
            pipeline::fixtures::write_fixtures(&annotations, &images, seed, count)?;
            Ok(true)
        }
        Command::DefaultConfig => {
            print!("{}", PipelineConfig::default().to_text());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
