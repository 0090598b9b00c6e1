//! Design-matrix diagnostics on the normalized Gram matrix `C = n⁻¹XᵀX`.

mod eigen;
mod incoherence;
mod irrepresentable;

pub use eigen::{
    sparse_eig, sparse_eig_curve, sparse_eig_with, subset_count, EigMode, SparseEigOptions, SparseEigReport,
    DEFAULT_ENUMERATION_CAP,
};
pub use incoherence::{
    assemble_blocks, block_design_report, default_multiplier_grid, multiplier_search, multiplier_size, uup_check,
    BlockDesignReport, IncoherenceReport, RatioPoint, UupReport, DEFAULT_INCOHERENCE_THRESHOLD,
};
pub use irrepresentable::{irrepresentable_check, IrrepresentableReport};
