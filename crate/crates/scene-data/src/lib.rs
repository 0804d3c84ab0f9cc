//! Attribute-annotated outdoor scenes.
//!
//! Layouts, attribute vectors and samples, the ALS18K-format loader, and a
//! procedural oracle that renders scenes whose attribute effects are known
//! exactly. The oracle corpus is what the desk-scale models train on.

pub mod attributes;
pub mod dataset;
pub mod error;
pub mod grammar;
pub mod layout;
pub mod oracle;
pub mod scene;

pub use attributes::{
    als18k_attribute_names, desk_attribute_names, AttributeVector, ALS18K_ATTRIBUTES,
    ALS18K_NUM_CLASSES, DESK_ATTRIBUTES, DESK_CLASSES,
};
pub use dataset::{
    build_synthetic_corpus, load_als18k, load_dataset, write_dataset, CorpusConfig, DatasetSplit,
    Manifest, SampleRef,
};
pub use error::{DataError, Result};
pub use grammar::{sample_layout, DESK_NUM_CLASSES};
pub use layout::{decode_layout_binary, encode_layout_binary, SemanticLayout, LAYOUT_BITS};
pub use oracle::{render_oracle, rule_statistic, OracleRecipe};
pub use scene::{preprocess, preprocess_rgb8, PreprocessConfig, SceneImage, SceneSample, SharedSample};
