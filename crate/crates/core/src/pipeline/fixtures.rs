//! Procedural group photos with matching annotations and parsing maps.
//!
//! Each image shows two or three stick-figure persons standing side by side
//! with arms reaching toward their neighbours. Later persons occlude earlier
//! ones, and each parsing map only labels the person's visible pixels.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::Rng;

use super::ingest::{AnnotationRecord, PersonRecord};
use crate::error::Result;
use crate::model::{Joint, PartClass, SeedSpec, NUM_JOINTS};
use crate::skeleton::for_each_capsule_pixel;

pub const FIXTURE_WIDTH: u32 = 192;
pub const FIXTURE_HEIGHT: u32 = 128;

struct Figure {
    keypoints: [[f64; 3]; NUM_JOINTS],
    skin: [u8; 3],
    shirt: [u8; 3],
    pants: [u8; 3],
    hair: [u8; 3],
}

fn set_joint(kps: &mut [[f64; 3]; NUM_JOINTS], j: Joint, x: f64, y: f64) {
    kps[j.index()] = [x, y, 1.0];
}

fn figure(rng: &mut impl Rng, cx: f64, top: f64, reach_left: bool, reach_right: bool) -> Figure {
    let mut k = [[0.0; 3]; NUM_JOINTS];
    set_joint(&mut k, Joint::Nose, cx, top + 12.0);
    set_joint(&mut k, Joint::LeftEye, cx + 3.0, top + 9.0);
    set_joint(&mut k, Joint::RightEye, cx - 3.0, top + 9.0);
    set_joint(&mut k, Joint::LeftEar, cx + 7.0, top + 11.0);
    set_joint(&mut k, Joint::RightEar, cx - 7.0, top + 11.0);
    let sy = top + 26.0;
    set_joint(&mut k, Joint::LeftShoulder, cx + 11.0, sy);
    set_joint(&mut k, Joint::RightShoulder, cx - 11.0, sy);
    // Image-right arm is the COCO left arm.
    for (dir, reach, shoulder, elbow, wrist) in [
        (1.0, reach_right, Joint::LeftShoulder, Joint::LeftElbow, Joint::LeftWrist),
        (-1.0, reach_left, Joint::RightShoulder, Joint::RightElbow, Joint::RightWrist),
    ] {
        let sx = k[shoulder.index()][0];
        let (ex, ey, wx, wy) = if reach {
            let lift = rng.gen_range(-6.0..6.0);
            (sx + dir * 13.0, sy + 10.0, sx + dir * 25.0, sy + 8.0 + lift)
        } else {
            let swing = rng.gen_range(0.0..5.0);
            (sx + dir * (3.0 + swing), sy + 16.0, sx + dir * (4.0 + swing), sy + 31.0)
        };
        set_joint(&mut k, elbow, ex, ey);
        set_joint(&mut k, wrist, wx, wy);
    }
    let hy = top + 60.0;
    set_joint(&mut k, Joint::LeftHip, cx + 7.0, hy);
    set_joint(&mut k, Joint::RightHip, cx - 7.0, hy);
    let stride = rng.gen_range(0.0..4.0);
    set_joint(&mut k, Joint::LeftKnee, cx + 8.0 + stride, hy + 20.0);
    set_joint(&mut k, Joint::RightKnee, cx - 8.0 - stride, hy + 20.0);
    set_joint(&mut k, Joint::LeftAnkle, cx + 8.0 + stride, hy + 40.0);
    set_joint(&mut k, Joint::RightAnkle, cx - 8.0 - stride, hy + 40.0);
    let skin = [rng.gen_range(150..235), rng.gen_range(110..190), rng.gen_range(90..160)];
    let mut color = |lo: u8, hi: u8| [rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi)];
    Figure {
        keypoints: k,
        skin,
        shirt: color(20, 230),
        pants: color(10, 120),
        hair: color(10, 70),
    }
}

/// Paints one figure, recording labels into `labels` (indexed per pixel).
fn paint(canvas: &mut RgbImage, owner: &mut [Option<(usize, PartClass)>], who: usize, f: &Figure) {
    let (w, h) = canvas.dimensions();
    let p = |j: Joint| (f.keypoints[j.index()][0], f.keypoints[j.index()][1]);
    let mut put = |canvas: &mut RgbImage, x: u32, y: u32, color: [u8; 3], class: PartClass| {
        canvas.put_pixel(x, y, Rgb(color));
        owner[(y * w + x) as usize] = Some((who, class));
    };
    let mut capsule = |canvas: &mut RgbImage, a, b, r, color, class| {
        for_each_capsule_pixel(w, h, a, b, r, |x, y| put(canvas, x, y, color, class));
    };
    for (hip, knee, ankle) in [
        (Joint::LeftHip, Joint::LeftKnee, Joint::LeftAnkle),
        (Joint::RightHip, Joint::RightKnee, Joint::RightAnkle),
    ] {
        capsule(canvas, p(knee), p(ankle), 3.5, f.skin, PartClass::Legs);
        capsule(canvas, p(hip), p(knee), 4.5, f.pants, PartClass::LowerClothes);
    }
    let (ls, rs) = (p(Joint::LeftShoulder), p(Joint::RightShoulder));
    let (lh, rh) = (p(Joint::LeftHip), p(Joint::RightHip));
    let mid_s = ((ls.0 + rs.0) / 2.0, ls.1 + 4.0);
    let mid_h = ((lh.0 + rh.0) / 2.0, lh.1);
    capsule(canvas, mid_s, mid_h, 10.0, f.shirt, PartClass::TorsoClothes);
    for (s, e, wr) in [
        (Joint::LeftShoulder, Joint::LeftElbow, Joint::LeftWrist),
        (Joint::RightShoulder, Joint::RightElbow, Joint::RightWrist),
    ] {
        capsule(canvas, p(s), p(e), 3.0, f.shirt, PartClass::Arms);
        capsule(canvas, p(e), p(wr), 2.5, f.skin, PartClass::Arms);
        capsule(canvas, p(wr), p(wr), 3.5, f.skin, PartClass::Hands);
    }
    let nose = p(Joint::Nose);
    let head = (nose.0, nose.1 - 1.0);
    capsule(canvas, head, head, 9.0, f.skin, PartClass::Face);
    capsule(canvas, (head.0 - 5.0, head.1 - 6.0), (head.0 + 5.0, head.1 - 6.0), 4.0, f.hair, PartClass::Hair);
}

/// Renders fixture `index` and returns its image, per-person parsing maps and annotation.
pub fn render_fixture(seed: u64, index: u64) -> (RgbImage, Vec<GrayImage>, AnnotationRecord) {
    let (w, h) = (FIXTURE_WIDTH, FIXTURE_HEIGHT);
    let mut rng = SeedSpec::new(seed, index).rng();
    let count = 2 + (index % 2) as usize;
    let spacing = if count == 2 { 58.0 } else { 50.0 };
    let start = w as f64 / 2.0 - spacing * (count - 1) as f64 / 2.0;
    let bg_a: [u8; 3] = [rng.gen_range(150..250), rng.gen_range(150..250), rng.gen_range(150..250)];
    let bg_b: [u8; 3] = [rng.gen_range(60..160), rng.gen_range(60..160), rng.gen_range(60..160)];
    let mut canvas = RgbImage::from_fn(w, h, |_, y| {
        let t = y as f64 / (h - 1) as f64;
        Rgb(std::array::from_fn(|c| (bg_a[c] as f64 * (1.0 - t) + bg_b[c] as f64 * t).round() as u8))
    });
    let figures: Vec<Figure> = (0..count)
        .map(|i| {
            let cx = start + spacing * i as f64 + rng.gen_range(-4.0..4.0);
            let top = rng.gen_range(4.0..14.0);
            figure(&mut rng, cx, top, i > 0, i + 1 < count)
        })
        .collect();
    let mut owner = vec![None; (w * h) as usize];
    for (i, f) in figures.iter().enumerate() {
        paint(&mut canvas, &mut owner, i, f);
    }
    let stem = format!("group_{index:02}");
    let mut parsings = Vec::with_capacity(count);
    let mut persons = Vec::with_capacity(count);
    for (i, f) in figures.iter().enumerate() {
        let mut map = GrayImage::new(w, h);
        let (mut x1, mut y1, mut x2, mut y2) = (u32::MAX, u32::MAX, 0, 0);
        for (n, o) in owner.iter().enumerate() {
            if let Some((who, class)) = o {
                if *who == i {
                    let (x, y) = (n as u32 % w, n as u32 / w);
                    map.put_pixel(x, y, Luma([class.id()]));
                    (x1, y1, x2, y2) = (x1.min(x), y1.min(y), x2.max(x + 1), y2.max(y + 1));
                }
            }
        }
        let mut keypoints = f.keypoints.to_vec();
        if index == 7 && i == 0 {
            // one person seen in profile: hidden ear
            keypoints[Joint::RightEar.index()] = [0.0, 0.0, 0.0];
        }
        persons.push(PersonRecord {
            id: i as u32,
            bbox: [
                x1.saturating_sub(2) as f64,
                y1.saturating_sub(2) as f64,
                (x2 + 2).min(w) as f64,
                (y2 + 2).min(h) as f64,
            ],
            keypoints,
            parsing: format!("{stem}_p{i}.png").into(),
        });
        parsings.push(map);
    }
    let record = AnnotationRecord {
        image: format!("{stem}.png").into(),
        width: w,
        height: h,
        persons,
    };
    (canvas, parsings, record)
}

/// Writes `count` fixtures: annotations to `ann_dir`, images and parsing maps to `img_dir`.
pub fn write_fixtures(ann_dir: &Path, img_dir: &Path, seed: u64, count: u64) -> Result<()> {
    std::fs::create_dir_all(ann_dir)?;
    std::fs::create_dir_all(img_dir)?;
    for index in 0..count {
        let (img, parsings, record) = render_fixture(seed, index);
        img.save(img_dir.join(&record.image))?;
        for (map, p) in parsings.iter().zip(&record.persons) {
            map.save(img_dir.join(&p.parsing))?;
        }
        let stem = Path::new(&record.image).with_extension("json");
        let mut text = serde_json::to_string_pretty(&record)?;
        text.push('\n');
        std::fs::write(ann_dir.join(stem), text)?;
    }
    Ok(())
}
