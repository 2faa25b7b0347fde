//! Annotation files and the images they reference.
//!
//! One JSON file per group photo:
//!
//! ```text
//! { "image": "a.png", "width": 640, "height": 480,
//!   "persons": [ { "id": 0, "bbox": [x1, y1, x2, y2],
//!                  "keypoints": [[x, y, conf], ...17], "parsing": "a_p0.png" } ] }
//! ```
//!
//! `image` and `parsing` paths are relative to the images directory. Parsing
//! maps are 8-bit label images using the class ids of [`PartClass`](crate::model::PartClass).

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BBox, ClassMapping, GroupAnnotation, Keypoint, ParsingMap, Person, Skeleton};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonRecord {
    pub id: u32,
    pub bbox: [f64; 4],
    pub keypoints: Vec<[f64; 3]>,
    pub parsing: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub image: PathBuf,
    pub width: u32,
    pub height: u32,
    pub persons: Vec<PersonRecord>,
}

impl AnnotationRecord {
    pub fn from_annotation(ann: &GroupAnnotation) -> Self {
        Self {
            image: ann.image.clone(),
            width: ann.width,
            height: ann.height,
            persons: ann
                .persons
                .iter()
                .map(|p| PersonRecord {
                    id: p.id,
                    bbox: p.bbox.as_array(),
                    keypoints: p
                        .skeleton
                        .keypoints()
                        .iter()
                        .map(|k| [k.x, k.y, k.confidence])
                        .collect(),
                    parsing: p.parsing.clone(),
                })
                .collect(),
        }
    }

    /// Converts and validates; errors name `file` and the offending person.
    pub fn into_annotation(self, file: &Path) -> Result<GroupAnnotation> {
        let schema = |message: String| Error::Schema {
            file: file.to_path_buf(),
            message,
        };
        let mut persons = Vec::with_capacity(self.persons.len());
        for p in self.persons {
            let kps: Vec<Keypoint> = p
                .keypoints
                .iter()
                .map(|&[x, y, c]| Keypoint::new(x, y, c))
                .collect();
            let skeleton = Skeleton::from_slice(&kps)
                .map_err(|e| schema(format!("person {}: keypoints: {e}", p.id)))?;
            let [x1, y1, x2, y2] = p.bbox;
            persons.push(Person {
                id: p.id,
                bbox: BBox { x1, y1, x2, y2 },
                skeleton,
                parsing: p.parsing,
            });
        }
        let ann = GroupAnnotation {
            source: Some(file.to_path_buf()),
            image: self.image,
            width: self.width,
            height: self.height,
            persons,
        };
        ann.validate()?;
        Ok(ann)
    }
}

/// Parses and validates one annotation file without touching the images.
pub fn read_annotation(file: &Path) -> Result<GroupAnnotation> {
    let text = std::fs::read_to_string(file)?;
    let record: AnnotationRecord = serde_json::from_str(&text).map_err(|e| Error::Schema {
        file: file.to_path_buf(),
        message: e.to_string(),
    })?;
    record.into_annotation(file)
}

/// Annotation files (`*.json`) in `dir`, sorted by file name.
pub fn annotation_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads every annotation in `dir` and checks that referenced images exist under `images`.
pub fn ingest_annotations(dir: &Path, images: &Path) -> Result<Vec<GroupAnnotation>> {
    let files = annotation_files(dir)?;
    if files.is_empty() {
        log::warn!("no annotation files in {}", dir.display());
    }
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let ann = read_annotation(&f)?;
        let paths = std::iter::once(&ann.image).chain(ann.persons.iter().map(|p| &p.parsing));
        for p in paths {
            let full = images.join(p);
            if !full.is_file() {
                return Err(Error::MissingImage(full));
            }
        }
        out.push(ann);
    }
    Ok(out)
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    if !path.is_file() {
        return Err(Error::MissingImage(path.to_path_buf()));
    }
    Ok(image::open(path)?.to_rgb8())
}

/// Source image of `ann`, checked against the declared size.
pub fn load_source_image(ann: &GroupAnnotation, images: &Path) -> Result<RgbImage> {
    let img = load_rgb(&images.join(&ann.image))?;
    if img.dimensions() != (ann.width, ann.height) {
        return Err(Error::DimensionMismatch {
            expected: (ann.width, ann.height),
            actual: img.dimensions(),
        });
    }
    Ok(img)
}

/// One parsing map per person, in annotation order.
pub fn load_parsings(ann: &GroupAnnotation, images: &Path, mapping: &ClassMapping) -> Result<Vec<ParsingMap>> {
    ann.persons
        .iter()
        .map(|p| {
            let path = images.join(&p.parsing);
            if !path.is_file() {
                return Err(Error::MissingImage(path));
            }
            let raw = image::open(&path)?.to_luma8();
            if raw.dimensions() != (ann.width, ann.height) {
                return Err(Error::DimensionMismatch {
                    expected: (ann.width, ann.height),
                    actual: raw.dimensions(),
                });
            }
            ParsingMap::from_raw(ann.width, ann.height, raw.as_raw(), mapping)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn person_json(id: u32, bbox: [f64; 4], n_kp: usize) -> serde_json::Value {
        let kps: Vec<[f64; 3]> = (0..n_kp).map(|i| [i as f64, i as f64, 1.0]).collect();
        serde_json::json!({"id": id, "bbox": bbox, "keypoints": kps, "parsing": format!("p{id}.png")})
    }

    fn write(dir: &Path, name: &str, v: &serde_json::Value) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, v.to_string()).unwrap();
        p
    }

    #[test]
    fn empty_directory_gives_empty_list() {
        let d = tempfile::tempdir().unwrap();
        assert!(ingest_annotations(d.path(), d.path()).unwrap().is_empty());
    }

    #[test]
    fn reversed_bbox_names_person() {
        let d = tempfile::tempdir().unwrap();
        let v = serde_json::json!({"image": "a.png", "width": 50, "height": 40,
            "persons": [person_json(0, [1.0, 1.0, 9.0, 9.0], 17), person_json(7, [30.0, 1.0, 20.0, 9.0], 17)]});
        let f = write(d.path(), "a.json", &v);
        match read_annotation(&f) {
            Err(Error::Schema { file, message }) => {
                assert_eq!(file, f);
                assert!(message.contains("person 7"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn keypoint_count_and_missing_field() {
        let d = tempfile::tempdir().unwrap();
        let v = serde_json::json!({"image": "a.png", "width": 50, "height": 40,
            "persons": [person_json(3, [1.0, 1.0, 9.0, 9.0], 16)]});
        let err = read_annotation(&write(d.path(), "a.json", &v)).unwrap_err().to_string();
        assert!(err.contains("person 3") && err.contains("keypoints"), "{err}");

        let v = serde_json::json!({"image": "a.png", "width": 50, "persons": []});
        let err = read_annotation(&write(d.path(), "b.json", &v)).unwrap_err().to_string();
        assert!(err.contains("height") && err.contains("b.json"), "{err}");
    }

    #[test]
    fn missing_image_is_reported() {
        let d = tempfile::tempdir().unwrap();
        let v = serde_json::json!({"image": "a.png", "width": 50, "height": 40,
            "persons": [person_json(0, [1.0, 1.0, 9.0, 9.0], 17)]});
        write(d.path(), "a.json", &v);
        assert!(matches!(
            ingest_annotations(d.path(), d.path()),
            Err(Error::MissingImage(p)) if p.ends_with("a.png")
        ));
    }

    #[test]
    fn record_round_trip() {
        let d = tempfile::tempdir().unwrap();
        let v = serde_json::json!({"image": "a.png", "width": 50, "height": 40,
            "persons": [person_json(2, [1.0, 1.0, 9.0, 9.0], 17)]});
        let f = write(d.path(), "a.json", &v);
        let ann = read_annotation(&f).unwrap();
        let back = AnnotationRecord::from_annotation(&ann).into_annotation(&f).unwrap();
        assert_eq!(back, ann);
    }
}
