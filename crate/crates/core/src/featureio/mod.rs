//! Feature bundles: on-disk format, class grouping, subsampling and
//! synthetic generators.

mod bundle;
mod sampling;
pub mod synth;

pub use bundle::{read_bundle, write_bundle, FeatureBundle, SourceMeta, FORMAT_ID};
pub use sampling::{
    group_by_class, select_classes, subsample, subsample_rows, train_test_split, ClassManifold,
    SubsampleSpec,
};
pub use synth::{
    gen_planted, gen_planted_pair, gen_spheres, gen_spheres_with_frames, PlantedSpec, SphereFrame,
    SphereSpec,
};
