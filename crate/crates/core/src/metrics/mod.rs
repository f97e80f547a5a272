//! Evaluation metrics: FID, k-NN precision/recall, the Mann–Whitney based
//! data-copying statistic, latent inversion, and training diagnostics.

mod copying;
mod diagnostics;
mod fid;
mod inversion;
mod pr;

pub use copying::{ct_statistic, mann_whitney, CtResult, MannWhitney};
pub use diagnostics::{
    cosine, feature_correlation, mode_coverage, overfit_gap, pearson, Correlation, Coverage, Scorer,
};
pub use fid::{fid, fid_from_stats};
pub use inversion::{ivom, InversionConfig, InversionResult};
pub use pr::{knn_radii, pr_k, precision_recall, PAPER_K_PRECISION, PAPER_K_RECALL};

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
