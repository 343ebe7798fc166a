//! Feature–target correlation study across domains.

mod emit;
mod fit;
mod heatmap;

pub use emit::{
    diverging_color, emit_heatmap, read_named_table, render_svg, write_named_table,
    ANNOTATION_LIMIT,
};
pub(crate) use emit::comment_block;
pub use fit::{correlation_p_value, pairwise_fit, FitFailure, PairFit, MIN_DOMAINS};
pub use heatmap::{
    assemble_feature_matrix, benjamini_hochberg, build_heatmap, CellStatus, DomainFeatureRow,
    FeatureMatrix, HeatmapCell, HeatmapTable,
};
