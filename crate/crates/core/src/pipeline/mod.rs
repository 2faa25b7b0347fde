//! Dataset generation: ingest, sample construction, persistence.

pub mod config;
pub mod fixtures;
pub mod ingest;
pub mod output;
pub mod sample;

pub use config::{PipelineConfig, ReferenceRule};
pub use ingest::{ingest_annotations, load_parsings, load_source_image, read_annotation};
pub use output::{generate_dataset, read_manifest, validate_output, write_preview, GenerateOptions, ValidationReport};
pub use sample::{
    assemble_conditioning, compose_masked, generate_sample, prepare_reference, ConditioningStack, ReferenceImage,
    TrainingSample,
};
