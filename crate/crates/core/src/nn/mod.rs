//! Classifier evaluation: network format and forward pass, pixel histograms,
//! image archives and per-pixel sensitivity analysis.

pub mod eval;
pub mod format;
pub mod histogram;
pub mod idx;
pub mod network;

pub use eval::{
    index_map, mean_dimension_report, Degeneracy, EvalError, IndexKind, IndexMap, MapRequest,
    NetworkFunction, ReportRow, Target,
};
pub use format::{load_network, save_network, FormatError};
pub use histogram::{build_histograms, HistogramClass, HistogramError, PixelHistogramSet};
pub use idx::{load_archive, ArchiveError, ImageArchive};
pub use network::{
    softmax, Activation, Conv2d, Dense, Forward, Layer, MaxPool, NetworkError, NetworkSpec, Shape,
};
