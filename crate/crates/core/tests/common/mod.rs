#![allow(dead_code)]

use std::path::PathBuf;

use groupforge::model::{ClassMapping, GroupAnnotation, ParsingMap};
use groupforge::pipeline::{ingest_annotations, load_parsings, load_source_image};
use image::RgbImage;

pub fn fixture_dirs() -> (PathBuf, PathBuf) {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic");
    (root.join("annotations"), root.join("images"))
}

pub struct Loaded {
    pub ann: GroupAnnotation,
    pub image: RgbImage,
    pub parsings: Vec<ParsingMap>,
}

pub fn load_fixtures() -> Vec<Loaded> {
    let (a, i) = fixture_dirs();
    ingest_annotations(&a, &i)
        .unwrap()
        .into_iter()
        .map(|ann| Loaded {
            image: load_source_image(&ann, &i).unwrap(),
            parsings: load_parsings(&ann, &i, &ClassMapping::default()).unwrap(),
            ann,
        })
        .collect()
}
