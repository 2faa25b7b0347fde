//! Sample files on disk, the manifest, validation and previews.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat, Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::ingest::{ingest_annotations, load_parsings, load_source_image};
use super::sample::{generate_sample, TrainingSample};
use crate::error::{Error, Result};
use crate::mask_engine::{BrushRecord, Strategy, TargetDraw};
use crate::model::{ClassMapping, GroupAnnotation, MaskGrid, SeedSpec};

pub const MANIFEST: &str = "manifest.jsonl";
pub const FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sample_id(index: u64) -> String {
    format!("{index:06}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub person: u32,
    pub bbox: [f64; 4],
    pub image: FileEntry,
    pub indicator: FileEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFiles {
    pub masked: FileEntry,
    pub mask: FileEntry,
    pub skeleton: FileEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub record: String,
    pub format_version: u32,
    pub global_seed: u64,
    pub num_samples: u64,
    pub annotations: String,
    pub images: String,
    /// Annotation file names in sample assignment order.
    pub annotation_files: Vec<String>,
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub record: String,
    pub sample_id: String,
    pub sample_index: u64,
    pub global_seed: u64,
    pub sample_seed: u64,
    pub annotation: String,
    pub width: u32,
    pub height: u32,
    pub strategy: Strategy,
    pub targets: Vec<u32>,
    pub attempt: u32,
    pub draws: Vec<TargetDraw>,
    pub brush: Option<BrushRecord>,
    pub references: Vec<ReferenceEntry>,
    pub files: SampleFiles,
}

impl ManifestHeader {
    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let text: String = self.config.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        PipelineConfig::parse(&text)
    }
}

/// Settings for one `generate` run.
#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub annotations: PathBuf,
    pub images: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub num_samples: u64,
    pub config: PipelineConfig,
}

fn encode_rgb(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

fn encode_mask(mask: &MaskGrid) -> Result<Vec<u8>> {
    let img = GrayImage::from_raw(mask.width(), mask.height(), mask.to_luma_bytes())
        .ok_or_else(|| Error::invalid("mask", "buffer size"))?;
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

/// Encoded files keyed by relative path, plus the manifest record.
pub type RenderedSample = (Vec<(String, Vec<u8>)>, SampleRecord);

/// Encodes a sample's files and builds its manifest record.
pub fn render_sample(
    sample: &TrainingSample,
    ann: &GroupAnnotation,
    annotation_name: &str,
) -> Result<RenderedSample> {
    let id = &sample.sample_id;
    let mut files = Vec::new();
    let mut entry = |path: String, bytes: Vec<u8>| {
        let e = FileEntry {
            path: path.clone(),
            sha256: sha256_hex(&bytes),
        };
        files.push((path, bytes));
        e
    };
    let masked = entry(format!("masked/{id}.png"), encode_rgb(&sample.masked_image)?);
    let mask = entry(format!("mask/{id}.png"), encode_mask(&sample.mask)?);
    let skeleton = entry(format!("skeleton/{id}.png"), encode_rgb(&sample.skeleton_map)?);
    let mut references = Vec::with_capacity(sample.references.len());
    for (r, ind) in sample.references.iter().zip(&sample.indicator_masks) {
        let p = r.person_id;
        references.push(ReferenceEntry {
            person: p,
            bbox: r.source_bbox.as_array(),
            image: entry(format!("ref/{id}_{p}.png"), encode_rgb(&r.pixels)?),
            indicator: entry(format!("indicator/{id}_{p}.png"), encode_mask(ind)?),
        });
    }
    let spec = &sample.mask_spec;
    let record = SampleRecord {
        record: "sample".into(),
        sample_id: id.clone(),
        sample_index: sample.seed.sample_index,
        global_seed: sample.seed.global_seed,
        sample_seed: sample.seed.sample_seed(),
        annotation: annotation_name.to_string(),
        width: ann.width,
        height: ann.height,
        strategy: spec.strategy,
        targets: spec.targets.clone(),
        attempt: spec.attempt,
        draws: spec.draws.clone(),
        brush: spec.brush.clone(),
        references,
        files: SampleFiles { masked, mask, skeleton },
    };
    Ok((files, record))
}

/// Thread pool honouring `GROUPFORGE_THREADS` (unset or 0 means rayon's default).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("GROUPFORGE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("GROUPFORGE_THREADS: cannot parse {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

struct Source {
    name: String,
    ann: GroupAnnotation,
}

fn file_name(ann: &GroupAnnotation) -> String {
    ann.source
        .as_deref()
        .and_then(Path::file_name)
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn build_one(src: &Source, images: &Path, seed: SeedSpec, config: &PipelineConfig) -> Result<RenderedSample> {
    let image = load_source_image(&src.ann, images)?;
    let parsings = load_parsings(&src.ann, images, &ClassMapping::default())?;
    let sample = generate_sample(&sample_id(seed.sample_index), &src.ann, &image, &parsings, seed, config)?;
    render_sample(&sample, &src.ann, &src.name)
}

/// Generates samples `0..n` of a run without writing them, in index order.
fn build_all(opts: &GenerateOptions, sources: &[Source]) -> Result<Vec<RenderedSample>> {
    if opts.num_samples > 0 && sources.is_empty() {
        return Err(Error::invalid("annotations", "no annotations to sample from"));
    }
    let pool = thread_pool()?;
    pool.install(|| {
        (0..opts.num_samples)
            .into_par_iter()
            .map(|k| {
                let src = &sources[(k % sources.len() as u64) as usize];
                build_one(src, &opts.images, SeedSpec::new(opts.seed, k), &opts.config)
                    .map_err(|e| Error::invalid("sample", format!("{} ({}): {e}", sample_id(k), src.name)))
            })
            .collect()
    })
}

fn header_for(opts: &GenerateOptions, sources: &[Source]) -> ManifestHeader {
    ManifestHeader {
        record: "header".into(),
        format_version: FORMAT_VERSION,
        global_seed: opts.seed,
        num_samples: opts.num_samples,
        annotations: opts.annotations.to_string_lossy().into_owned(),
        images: opts.images.to_string_lossy().into_owned(),
        annotation_files: sources.iter().map(|s| s.name.clone()).collect(),
        config: opts
            .config
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
    }
}

fn load_sources(annotations: &Path, images: &Path) -> Result<Vec<Source>> {
    Ok(ingest_annotations(annotations, images)?
        .into_iter()
        .map(|ann| Source { name: file_name(&ann), ann })
        .collect())
}

/// Runs a full generation: sample files plus `manifest.jsonl`.
pub fn generate_dataset(opts: &GenerateOptions) -> Result<ManifestHeader> {
    opts.config.validate()?;
    let sources = load_sources(&opts.annotations, &opts.images)?;
    let built = build_all(opts, &sources)?;
    for dir in ["masked", "mask", "skeleton", "ref", "indicator"] {
        std::fs::create_dir_all(opts.out.join(dir))?;
    }
    let header = header_for(opts, &sources);
    let mut manifest = BufWriter::new(File::create(opts.out.join(MANIFEST))?);
    serde_json::to_writer(&mut manifest, &header)?;
    manifest.write_all(b"\n")?;
    for (files, record) in &built {
        for (rel, bytes) in files {
            std::fs::write(opts.out.join(rel), bytes)?;
        }
        serde_json::to_writer(&mut manifest, record)?;
        manifest.write_all(b"\n")?;
    }
    manifest.flush()?;
    log::info!("wrote {} samples to {}", built.len(), opts.out.display());
    Ok(header)
}

pub fn read_manifest(out: &Path) -> Result<(ManifestHeader, Vec<SampleRecord>)> {
    let path = out.join(MANIFEST);
    let schema = |message: String| Error::Schema {
        file: path.clone(),
        message,
    };
    let reader = BufReader::new(File::open(&path)?);
    let mut lines = reader.lines();
    let first = lines.next().ok_or_else(|| schema("missing header record".into()))??;
    let header: ManifestHeader = serde_json::from_str(&first).map_err(|e| schema(format!("header: {e}")))?;
    if header.record != "header" || header.format_version != FORMAT_VERSION {
        return Err(schema(format!("unsupported header {:?} v{}", header.record, header.format_version)));
    }
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        let r: SampleRecord = serde_json::from_str(&line).map_err(|e| schema(format!("line {}: {e}", n + 2)))?;
        records.push(r);
    }
    Ok((header, records))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    pub files: usize,
    pub problems: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.problems.is_empty()
    }
}

fn check_binary(img: &GrayImage) -> bool {
    img.pixels().all(|p| p.0[0] == 0 || p.0[0] == 255)
}

fn check_record(out: &Path, r: &SampleRecord, gray: [u8; 3], report: &mut ValidationReport) -> Result<()> {
    let mut entries = vec![&r.files.masked, &r.files.mask, &r.files.skeleton];
    for re in &r.references {
        entries.push(&re.image);
        entries.push(&re.indicator);
    }
    let mut intact = true;
    for e in entries {
        report.files += 1;
        match std::fs::read(out.join(&e.path)) {
            Ok(bytes) if sha256_hex(&bytes) == e.sha256 => {}
            Ok(_) => {
                intact = false;
                report.problems.push(format!("{}: digest mismatch", e.path));
            }
            Err(err) => {
                intact = false;
                report.problems.push(format!("{}: {err}", e.path));
            }
        }
    }
    if !intact {
        return Ok(());
    }
    let id = &r.sample_id;
    let mask = image::open(out.join(&r.files.mask.path))?.to_luma8();
    let masked = image::open(out.join(&r.files.masked.path))?.to_rgb8();
    let dims = (r.width, r.height);
    if mask.dimensions() != dims || masked.dimensions() != dims {
        report.problems.push(format!("{id}: image size differs from {dims:?}"));
        return Ok(());
    }
    if !check_binary(&mask) {
        report.problems.push(format!("{id}: mask is not 0/255"));
    }
    let bad_fill = mask
        .pixels()
        .zip(masked.pixels())
        .filter(|(m, p)| m.0[0] == 255 && p.0 != gray)
        .count();
    if bad_fill > 0 {
        report.problems.push(format!("{id}: {bad_fill} masked pixels differ from the gray fill"));
    }
    for re in &r.references {
        let ind = image::open(out.join(&re.indicator.path))?.to_luma8();
        if !check_binary(&ind) {
            report.problems.push(format!("{}: indicator is not 0/255", re.indicator.path));
        }
    }
    Ok(())
}

/// Re-checks digests and per-file invariants; with `regenerate`, also rebuilds
/// every sample from the recorded seed and config and compares records.
pub fn validate_output(out: &Path, regenerate: bool) -> Result<ValidationReport> {
    let (header, records) = read_manifest(out)?;
    let config = header.pipeline_config()?;
    let mut report = ValidationReport {
        samples: records.len(),
        ..Default::default()
    };
    if records.len() as u64 != header.num_samples {
        report
            .problems
            .push(format!("header declares {} samples, found {}", header.num_samples, records.len()));
    }
    for (k, r) in records.iter().enumerate() {
        if r.sample_index != k as u64 || r.sample_id != sample_id(k as u64) {
            report.problems.push(format!("record {k}: out of order ({})", r.sample_id));
        }
        check_record(out, r, config.gray, &mut report)?;
    }
    if regenerate {
        let opts = GenerateOptions {
            annotations: header.annotations.clone().into(),
            images: header.images.clone().into(),
            out: out.to_path_buf(),
            seed: header.global_seed,
            num_samples: header.num_samples,
            config,
        };
        let sources = load_sources(&opts.annotations, &opts.images)?;
        let fresh: Vec<SampleRecord> = build_all(&opts, &sources)?.into_iter().map(|(_, r)| r).collect();
        if header_for(&opts, &sources) != header {
            report.problems.push("regenerated header differs".into());
        }
        for (k, (old, new)) in records.iter().zip(&fresh).enumerate() {
            if old != new {
                report.problems.push(format!("{}: regenerated record differs", sample_id(k as u64)));
            }
        }
    }
    Ok(report)
}

fn paste(dst: &mut RgbImage, src: &RgbImage, x0: u32) {
    for (x, y, p) in src.enumerate_pixels() {
        if x0 + x < dst.width() && y < dst.height() {
            dst.put_pixel(x0 + x, y, *p);
        }
    }
}

/// Side-by-side composite of masked image, mask, skeleton map and references,
/// written to `preview/<id>.png`.
pub fn write_preview(out: &Path, id: &str) -> Result<PathBuf> {
    let (_, records) = read_manifest(out)?;
    let r = records
        .iter()
        .find(|r| r.sample_id == id)
        .ok_or_else(|| Error::invalid("sample", format!("{id} not in manifest")))?;
    let mut panels = vec![
        image::open(out.join(&r.files.masked.path))?.to_rgb8(),
        image::open(out.join(&r.files.mask.path))?.to_rgb8(),
        image::open(out.join(&r.files.skeleton.path))?.to_rgb8(),
    ];
    for re in &r.references {
        panels.push(image::open(out.join(&re.image.path))?.to_rgb8());
    }
    let gap = 4;
    let height = panels.iter().map(RgbImage::height).max().unwrap_or(0);
    let width = panels.iter().map(|p| p.width() + gap).sum::<u32>() - gap;
    let mut canvas = RgbImage::from_pixel(width, height, Rgb([40, 40, 40]));
    let mut x = 0;
    for p in &panels {
        paste(&mut canvas, p, x);
        x += p.width() + gap;
    }
    std::fs::create_dir_all(out.join("preview"))?;
    let path = out.join("preview").join(format!("{id}.png"));
    canvas.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::fixtures::write_fixtures;

    fn setup(n_fixtures: u64) -> (tempfile::TempDir, PathBuf, PathBuf) {
        let d = tempfile::tempdir().unwrap();
        let (a, i) = (d.path().join("ann"), d.path().join("img"));
        write_fixtures(&a, &i, 0, n_fixtures).unwrap();
        (d, a, i)
    }

    fn opts(a: &Path, i: &Path, out: PathBuf, n: u64) -> GenerateOptions {
        GenerateOptions {
            annotations: a.to_path_buf(),
            images: i.to_path_buf(),
            out,
            seed: 42,
            num_samples: n,
            config: PipelineConfig::default(),
        }
    }

    #[test]
    fn zero_samples_writes_header_only() {
        let (d, a, i) = setup(1);
        let out = d.path().join("out");
        generate_dataset(&opts(&a, &i, out.clone(), 0)).unwrap();
        let text = std::fs::read_to_string(out.join(MANIFEST)).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("{\"record\":\"header\""));
        assert!(validate_output(&out, false).unwrap().is_ok());
    }

    #[test]
    fn generate_validate_and_tamper() {
        let (d, a, i) = setup(3);
        let out = d.path().join("out");
        generate_dataset(&opts(&a, &i, out.clone(), 6)).unwrap();
        let report = validate_output(&out, true).unwrap();
        assert!(report.is_ok(), "{:?}", report.problems);
        assert_eq!(report.samples, 6);

        let (_, records) = read_manifest(&out).unwrap();
        let target = out.join(&records[2].files.mask.path);
        let mut bytes = std::fs::read(&target).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        std::fs::write(&target, bytes).unwrap();
        let report = validate_output(&out, false).unwrap();
        assert_eq!(report.problems.len(), 1);
        assert!(report.problems[0].contains("mask/000002.png"));
    }

    #[test]
    fn output_is_independent_of_thread_count() {
        let (d, a, i) = setup(2);
        let one = d.path().join("one");
        let many = d.path().join("many");
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        pool.install(|| generate_dataset(&opts(&a, &i, one.clone(), 5))).unwrap();
        generate_dataset(&opts(&a, &i, many.clone(), 5)).unwrap();
        assert_eq!(
            std::fs::read(one.join(MANIFEST)).unwrap(),
            std::fs::read(many.join(MANIFEST)).unwrap()
        );
    }

    #[test]
    fn preview_has_one_panel_per_image() {
        let (d, a, i) = setup(1);
        let out = d.path().join("out");
        generate_dataset(&opts(&a, &i, out.clone(), 1)).unwrap();
        let (_, records) = read_manifest(&out).unwrap();
        let path = write_preview(&out, "000000").unwrap();
        let img = image::open(path).unwrap();
        let panels = 3 + records[0].references.len() as u32;
        assert_eq!(img.width(), panels * 192 + (panels - 1) * 4);
        assert!(write_preview(&out, "999999").is_err());
    }
}
