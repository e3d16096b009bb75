//! IR-to-IR transformations.

pub mod bufferize;
pub mod canonicalize;
pub mod padpack;
pub mod tiling;
pub mod vector_folds;
pub mod vector_lower;
pub mod vector_unroll;
pub mod vectorize;

pub use bufferize::{analyze, bufferize, clobbered_reads, is_read, last_write, AnalysisOrder, BufferizationState};
pub use canonicalize::{canonicalization_patterns, canonicalize};
pub use tiling::{peel_partial_tiles, tile_op, unroll_loop, unroll_parent_loop, LoopNest, TileConfig};
pub use padpack::{hoist_padding, pad_operands};
pub use vector_folds::{cancelling_pairs, fold_vectors, vector_fold_patterns};
pub use vector_lower::{
    lower_broadcasts, lower_contract, lower_contractions, lower_multi_reduction, lower_multi_reductions, lower_outerproduct,
    lower_outerproducts, lower_transfers, lower_transpose, lower_transposes, lower_vectors, materialize_transfer_permutations,
    max_lowered_rank, split_rows, ContractionLowering, LoweringStrategy, MultiReductionLowering, TransposeLowering,
};
pub use vector_unroll::{unroll_grid, unroll_kind, unroll_shape, unroll_vector, unroll_vectors, UnrollTarget};
pub use vectorize::{classify, hoist_loop_invariants, vectorize, vectorize_pad, vectorize_structured, VectorCase, VectorizeOptions};
