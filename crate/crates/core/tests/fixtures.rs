mod common;

use std::path::Path;

use groupforge::pipeline::fixtures::write_fixtures;
use groupforge::pipeline::ingest::annotation_files;

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn bundled_fixtures_ingest_without_errors() {
    let loaded = common::load_fixtures();
    assert_eq!(loaded.len(), 10);
    for f in &loaded {
        assert_eq!(f.image.dimensions(), (f.ann.width, f.ann.height));
        assert_eq!(f.parsings.len(), f.ann.persons.len());
        assert!(f.parsings.iter().all(|p| p.foreground_count() > 0));
    }
}

#[test]
fn bundled_fixtures_match_the_generator() {
    let (ann, img) = common::fixture_dirs();
    let tmp = tempfile::tempdir().unwrap();
    let (a, i) = (tmp.path().join("a"), tmp.path().join("i"));
    write_fixtures(&a, &i, 0, 10).unwrap();
    assert_eq!(annotation_files(&a).unwrap().len(), 10);
    assert_eq!(files(&a), files(&ann));
    assert_eq!(files(&i), files(&img));
}
