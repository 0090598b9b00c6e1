//! Sparsity-multiplier search, block-diagonal condition numbers and the
//! uniform-uncertainty eigenvalue sums.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use super::eigen::{sparse_eig_with, SparseEigOptions, SparseEigReport};
use crate::error::{Error, Result};
use crate::model::GramMatrix;

pub const DEFAULT_INCOHERENCE_THRESHOLD: f64 = 18.0;

#[derive(Debug, Clone, Serialize)]
pub struct RatioPoint {
    pub e: f64,
    /// `⌈e²s⌉` capped at p.
    pub min_size: usize,
    pub phi_min: f64,
    pub max_size: usize,
    pub phi_max: f64,
    pub ratio: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IncoherenceReport {
    pub s: usize,
    pub n: usize,
    pub p: usize,
    pub threshold: f64,
    /// Smallest grid value with `ratio ≥ threshold`; `None` when infeasible on the grid.
    pub e_star: Option<f64>,
    pub curve: Vec<RatioPoint>,
    /// Some eigenvalue on the curve came from the heuristic, so feasibility may be optimistic.
    pub heuristic: bool,
}

impl IncoherenceReport {
    pub fn feasible(&self) -> bool {
        self.e_star.is_some()
    }
}

/// Integers `1..=e_max` with `e_max² s ≤ p`.
pub fn default_multiplier_grid(s: usize, p: usize) -> Vec<f64> {
    (1..).take_while(|e: &usize| e * e * s <= p).map(|e| e as f64).collect()
}

/// `⌈e²s⌉` capped at p.
pub fn multiplier_size(e: f64, s: usize, p: usize) -> usize {
    let m = (e * e * s as f64 - 1e-9).ceil().max(1.0);
    (m as usize).min(p)
}

pub fn multiplier_search(
    c: &GramMatrix,
    s: usize,
    n: usize,
    grid: &[f64],
    threshold: f64,
    opts: &SparseEigOptions,
) -> Result<IncoherenceReport> {
    let p = c.p();
    if s == 0 || s > p {
        return Err(Error::InvalidInput(format!("sparsity must lie in 1..={p}, got {s}")));
    }
    if grid.is_empty() {
        return Err(Error::InvalidInput("multiplier grid is empty".into()));
    }
    if grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidInput("multiplier grid values must be positive".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut cache: BTreeMap<usize, SparseEigReport> = BTreeMap::new();
    let mut eig = |m: usize| -> Result<SparseEigReport> {
        if let Some(r) = cache.get(&m) {
            return Ok(r.clone());
        }
        let r = sparse_eig_with(c, m, opts)?;
        cache.insert(m, r.clone());
        Ok(r)
    };

    let max_size = (s + n.min(p)).min(p);
    let upper = eig(max_size)?;
    let mut curve = Vec::with_capacity(grid.len());
    let mut e_star = None;
    for &e in &grid {
        let min_size = multiplier_size(e, s, p);
        let lower = eig(min_size)?;
        let ratio = if upper.phi_max > 0.0 { e * lower.phi_min / upper.phi_max } else { 0.0 };
        if e_star.is_none() && ratio >= threshold {
            e_star = Some(e);
        }
        curve.push(RatioPoint {
            e,
            min_size,
            phi_min: lower.phi_min,
            max_size,
            phi_max: upper.phi_max,
            ratio,
            exact: lower.exact && upper.exact,
        });
    }
    let heuristic = curve.iter().any(|pt| !pt.exact);
    Ok(IncoherenceReport { s, n, p, threshold, e_star, curve, heuristic })
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockDesignReport {
    pub block_sizes: Vec<usize>,
    pub phi_min_block: f64,
    pub phi_max_block: f64,
    /// `φ_max^block / φ_min^block`
    pub condition_number: f64,
    /// `n / c²`, when the sample size is known.
    pub sparsity_ceiling: Option<f64>,
}

pub fn block_design_report(blocks: &[DMatrix<f64>], n: Option<usize>) -> Result<BlockDesignReport> {
    if blocks.is_empty() {
        return Err(Error::InvalidInput("no blocks given".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut block_sizes = Vec::with_capacity(blocks.len());
    for b in blocks {
        let g = GramMatrix::from_matrix(b.clone(), None)?;
        let eig = g.matrix().clone().symmetric_eigen().eigenvalues;
        lo = lo.min(eig.min().max(0.0));
        hi = hi.max(eig.max());
        block_sizes.push(g.p());
    }
    let condition_number = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let sparsity_ceiling = n.map(|n| n as f64 / (condition_number * condition_number));
    Ok(BlockDesignReport { block_sizes, phi_min_block: lo, phi_max_block: hi, condition_number, sparsity_ceiling })
}

/// Block-diagonal Gram matrix with the given blocks in order.
pub fn assemble_blocks(blocks: &[DMatrix<f64>], n: Option<usize>) -> Result<GramMatrix> {
    let p: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut c = DMatrix::zeros(p, p);
    let mut at = 0;
    for b in blocks {
        if b.nrows() != b.ncols() {
            return Err(Error::InvalidInput("blocks must be square".into()));
        }
        c.view_mut((at, at), b.shape()).copy_from(b);
        at += b.nrows();
    }
    GramMatrix::from_matrix(c, n)
}

#[derive(Debug, Clone, Serialize)]
pub struct UupReport {
    pub s: usize,
    pub phi_min: [f64; 3],
    pub phi_max: [f64; 3],
    /// `φ_min(s) + φ_min(2s) + φ_min(3s)`
    pub lower_sum: f64,
    /// `φ_max(s) + φ_max(2s) + φ_max(3s)`
    pub upper_sum: f64,
    /// `lower_sum > 2`
    pub lower_holds: bool,
    /// `upper_sum < 4`
    pub upper_holds: bool,
    pub exact: bool,
}

impl UupReport {
    pub fn holds(&self) -> bool {
        self.lower_holds && self.upper_holds
    }
}

pub fn uup_check(c: &GramMatrix, s: usize, opts: &SparseEigOptions) -> Result<UupReport> {
    let p = c.p();
    if s == 0 || 3 * s > p {
        return Err(Error::InvalidInput(format!("need 1 ≤ s and 3s ≤ p = {p}, got s = {s}")));
    }
    let reports = [s, 2 * s, 3 * s].map(|m| sparse_eig_with(c, m, opts));
    let mut phi_min = [0.0; 3];
    let mut phi_max = [0.0; 3];
    let mut exact = true;
    for (i, r) in reports.into_iter().enumerate() {
        let r = r?;
        phi_min[i] = r.phi_min;
        phi_max[i] = r.phi_max;
        exact &= r.exact;
    }
    let lower_sum: f64 = phi_min.iter().sum();
    let upper_sum: f64 = phi_max.iter().sum();
    Ok(UupReport {
        s,
        phi_min,
        phi_max,
        lower_sum,
        upper_sum,
        lower_holds: lower_sum > 2.0,
        upper_holds: upper_sum < 4.0,
        exact,
    })
}
