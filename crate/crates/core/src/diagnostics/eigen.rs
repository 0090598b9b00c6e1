//! m-sparse minimal and maximal eigenvalues of a Gram matrix.
//!
//! Exact mode enumerates every principal m×m submatrix. Heuristic mode returns an
//! attained value for some m-subset, so it bounds φ_min from above and φ_max from below.

use std::cmp::Ordering;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::GramMatrix;

pub const DEFAULT_ENUMERATION_CAP: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EigMode {
    Exact,
    Heuristic,
    /// Exact when the subset count is within the cap, heuristic otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy)]
pub struct SparseEigOptions {
    pub mode: EigMode,
    pub cap: u128,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SparseEigOptions {
    fn default() -> Self {
        Self { mode: EigMode::Auto, cap: DEFAULT_ENUMERATION_CAP, restarts: 64, seed: 0 }
    }
}

impl SparseEigOptions {
    pub fn with_mode(mode: EigMode) -> Self {
        Self { mode, ..Self::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SparseEigReport {
    pub m: usize,
    pub phi_min: f64,
    pub phi_max: f64,
    pub exact: bool,
    pub witness_min: Vec<usize>,
    pub witness_max: Vec<usize>,
}

/// `binomial(p, m)`, saturating at `u128::MAX`.
pub fn subset_count(p: usize, m: usize) -> u128 {
    if m > p {
        return 0;
    }
    let m = m.min(p - m);
    let mut acc: u128 = 1;
    for i in 0..m {
        acc = match acc.checked_mul((p - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

pub fn sparse_eig(c: &GramMatrix, m: usize, mode: EigMode) -> Result<SparseEigReport> {
    sparse_eig_with(c, m, &SparseEigOptions::with_mode(mode))
}

pub fn sparse_eig_with(c: &GramMatrix, m: usize, opts: &SparseEigOptions) -> Result<SparseEigReport> {
    let p = c.p();
    if m == 0 || m > p {
        return Err(Error::InvalidInput(format!("subset size must lie in 1..={p}, got {m}")));
    }
    if c.is_diagonal() {
        return Ok(diagonal(c, m));
    }
    if m == p {
        let all: Vec<usize> = (0..p).collect();
        let (lo, hi) = extremes(&c.submatrix(&all, &all));
        return Ok(SparseEigReport {
            m,
            phi_min: lo,
            phi_max: hi,
            exact: true,
            witness_min: all.clone(),
            witness_max: all,
        });
    }
    let count = subset_count(p, m);
    let exact = match opts.mode {
        EigMode::Exact if count > opts.cap => return Err(Error::EnumerationCap { subsets: count, cap: opts.cap }),
        EigMode::Exact => true,
        EigMode::Heuristic => false,
        EigMode::Auto => count <= opts.cap,
    };
    if exact {
        Ok(enumerate(c, m))
    } else {
        Ok(heuristic(c, m, opts))
    }
}

/// φ_min(m) for every m in `sizes`, evaluated once per distinct size.
pub fn sparse_eig_curve(c: &GramMatrix, sizes: &[usize], opts: &SparseEigOptions) -> Result<Vec<SparseEigReport>> {
    sizes.iter().map(|&m| sparse_eig_with(c, m, opts)).collect()
}

fn extremes(sub: &DMatrix<f64>) -> (f64, f64) {
    if sub.nrows() == 1 {
        return (sub[(0, 0)].max(0.0), sub[(0, 0)].max(0.0));
    }
    let eig = sub.clone().symmetric_eigen().eigenvalues;
    (eig.min().max(0.0), eig.max().max(0.0))
}

fn diagonal(c: &GramMatrix, m: usize) -> SparseEigReport {
    let p = c.p();
    let d: Vec<f64> = (0..p).map(|i| c.get(i, i)).collect();
    let pick = |target: usize| -> Vec<usize> {
        // lexicographically first m-subset containing `target`
        let mut idx: Vec<usize> = (0..m).collect();
        if target >= m {
            idx[m - 1] = target;
        }
        idx
    };
    let argmin = (0..p).min_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b))).unwrap();
    let argmax = (0..p).max_by(|&a, &b| d[a].total_cmp(&d[b]).then(b.cmp(&a))).unwrap();
    SparseEigReport {
        m,
        phi_min: d[argmin].max(0.0),
        phi_max: d[argmax].max(0.0),
        exact: true,
        witness_min: pick(argmin),
        witness_max: pick(argmax),
    }
}

#[derive(Debug, Clone)]
struct Best {
    value: f64,
    subset: Vec<usize>,
}

impl Best {
    /// Keeps the smaller value (or larger when `max`), ties going to the lexicographically first subset.
    fn merge(self, other: Best, max: bool) -> Best {
        let ord = self.value.total_cmp(&other.value);
        let ord = if max { ord.reverse() } else { ord };
        match ord.then_with(|| self.subset.cmp(&other.subset)) {
            Ordering::Greater => other,
            _ => self,
        }
    }
}

fn enumerate(c: &GramMatrix, m: usize) -> SparseEigReport {
    let p = c.p();
    if let Some(n) = c.samples() {
        if m > n {
            // rank(C) ≤ n, so every m×m principal submatrix is singular
            let max = enumerate_side(c, m, true);
            return SparseEigReport {
                m,
                phi_min: 0.0,
                phi_max: max.value,
                exact: true,
                witness_min: (0..m).collect(),
                witness_max: max.subset,
            };
        }
    }
    let firsts: Vec<usize> = (0..=p - m).collect();
    let (lo, hi) = firsts
        .par_iter()
        .map(|&first| {
            let mut lo: Option<Best> = None;
            let mut hi: Option<Best> = None;
            for rest in ((first + 1)..p).combinations(m - 1) {
                let mut subset = Vec::with_capacity(m);
                subset.push(first);
                subset.extend(rest);
                let (a, b) = extremes(&c.submatrix(&subset, &subset));
                lo = Some(match lo {
                    Some(cur) => cur.merge(Best { value: a, subset: subset.clone() }, false),
                    None => Best { value: a, subset: subset.clone() },
                });
                hi = Some(match hi {
                    Some(cur) => cur.merge(Best { value: b, subset }, true),
                    None => Best { value: b, subset },
                });
            }
            (lo.unwrap(), hi.unwrap())
        })
        .reduce_with(|(l1, h1), (l2, h2)| (l1.merge(l2, false), h1.merge(h2, true)))
        .expect("at least one subset");
    SparseEigReport {
        m,
        phi_min: lo.value,
        phi_max: hi.value,
        exact: true,
        witness_min: lo.subset,
        witness_max: hi.subset,
    }
}

fn enumerate_side(c: &GramMatrix, m: usize, max: bool) -> Best {
    let p = c.p();
    (0..=p - m)
        .into_par_iter()
        .map(|first| {
            ((first + 1)..p)
                .combinations(m - 1)
                .map(|rest| {
                    let mut subset = vec![first];
                    subset.extend(rest);
                    let (a, b) = extremes(&c.submatrix(&subset, &subset));
                    Best { value: if max { b } else { a }, subset }
                })
                .reduce(|x, y| x.merge(y, max))
                .unwrap()
        })
        .reduce_with(|x, y| x.merge(y, max))
        .unwrap()
}

fn eigvec(sub: &DMatrix<f64>, max: bool) -> (f64, DVector<f64>) {
    let eig = sub.clone().symmetric_eigen();
    let vals = &eig.eigenvalues;
    let i = if max { vals.imax() } else { vals.imin() };
    (vals[i], eig.eigenvectors.column(i).into_owned())
}

/// Backward deletion: repeatedly drop the index with the smallest weight in the
/// minimal eigenvector until `m` remain.
fn shrink_for_min(c: &GramMatrix, mut set: Vec<usize>, m: usize) -> Best {
    set.sort_unstable();
    while set.len() > m {
        let (_, v) = eigvec(&c.submatrix(&set, &set), false);
        let drop = (0..set.len()).min_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
        set.remove(drop);
    }
    let (value, _) = extremes(&c.submatrix(&set, &set));
    Best { value, subset: set }
}

/// Forward selection: add the index with the largest coupling `|C_{k,S} v|` to the
/// current top eigenvector.
fn grow_for_max(c: &GramMatrix, start: usize, m: usize) -> Best {
    let p = c.p();
    let mut set = vec![start];
    let mut inside = vec![false; p];
    inside[start] = true;
    while set.len() < m {
        let (_, v) = eigvec(&c.submatrix(&set, &set), true);
        let mut best: Option<(f64, usize)> = None;
        for k in (0..p).filter(|&k| !inside[k]) {
            let coupling: f64 = set.iter().zip(v.iter()).map(|(&j, vj)| c.get(k, j) * vj).sum();
            let score = coupling.abs() + 0.5 * c.get(k, k);
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, k));
            }
        }
        let (_, k) = best.unwrap();
        inside[k] = true;
        set.push(k);
    }
    set.sort_unstable();
    let (_, value) = extremes(&c.submatrix(&set, &set));
    Best { value, subset: set }
}

fn heuristic(c: &GramMatrix, m: usize, opts: &SparseEigOptions) -> SparseEigReport {
    let p = c.p();
    let all: Vec<usize> = (0..p).collect();
    let full = c.submatrix(&all, &all);

    let rank_deficient = matches!(c.samples(), Some(n) if m > n);
    let lo = if rank_deficient {
        Best { value: 0.0, subset: (0..m).collect() }
    } else {
        let (_, v) = eigvec(&full, false);
        let width = (2 * m).min(p);
        let mut top: Vec<usize> = all.clone();
        top.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
        top.truncate(width);
        let seeded = shrink_for_min(c, top, m);
        let width = (m + 32).min(p);
        (0..opts.restarts)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(r as u64 + 1);
                shrink_for_min(c, sample(&mut rng, p, width).into_vec(), m)
            })
            .reduce_with(|x, y| x.merge(y, false))
            .map_or(seeded.clone(), |r| seeded.clone().merge(r, false))
    };

    let argmax = (0..p).max_by(|&a, &b| c.get(a, a).total_cmp(&c.get(b, b)).then(b.cmp(&a))).unwrap();
    let greedy = grow_for_max(c, argmax, m);
    let (_, v) = eigvec(&full, true);
    let mut top = all.clone();
    top.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    top.truncate(m);
    top.sort_unstable();
    let (_, spectral) = extremes(&c.submatrix(&top, &top));
    let hi = greedy.merge(Best { value: spectral, subset: top }, true);
    let hi = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64 + 1);
            grow_for_max(c, sample(&mut rng, p, 1).index(0), m)
        })
        .reduce_with(|x, y| x.merge(y, true))
        .map_or(hi.clone(), |r| hi.clone().merge(r, true));

    SparseEigReport {
        m,
        phi_min: lo.value,
        phi_max: hi.value,
        exact: false,
        witness_min: lo.subset,
        witness_max: hi.subset,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn equicorrelated(p: usize, rho: f64) -> GramMatrix {
        GramMatrix::from_matrix(DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho }), None).unwrap()
    }

    #[test]
    fn identity_is_one_everywhere() {
        let c = GramMatrix::from_matrix(DMatrix::identity(6, 6), None).unwrap();
        for m in 1..=6 {
            let r = sparse_eig(&c, m, EigMode::Exact).unwrap();
            assert_eq!((r.phi_min, r.phi_max), (1.0, 1.0));
        }
    }

    #[test]
    fn equicorrelated_pairs() {
        // every 2×2 principal block is [[1, ρ], [ρ, 1]] with eigenvalues 1 ± ρ
        let c = equicorrelated(4, 0.5);
        let r = sparse_eig(&c, 2, EigMode::Exact).unwrap();
        assert!((r.phi_min - 0.5).abs() < 1e-12);
        assert!((r.phi_max - 1.5).abs() < 1e-12);
        assert_eq!(r.witness_min, vec![0, 1]);
    }

    #[test]
    fn rank_deficient_sizes_vanish() {
        let x = DMatrix::from_fn(3, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * j as f64);
        let c = GramMatrix::from_matrix((x.transpose() * &x) / 3.0, Some(3)).unwrap();
        let r = sparse_eig(&c, 4, EigMode::Exact).unwrap();
        assert_eq!(r.phi_min, 0.0);
        let (lo, _) = extremes(&c.submatrix(&r.witness_min, &r.witness_min));
        assert!(lo < 1e-10);
        let h = sparse_eig(&c, 4, EigMode::Heuristic).unwrap();
        assert_eq!(h.phi_min, 0.0);
    }

    #[test]
    fn cap_is_enforced() {
        let c = equicorrelated(30, 0.1);
        let opts = SparseEigOptions { mode: EigMode::Exact, cap: 100, ..Default::default() };
        assert!(matches!(sparse_eig_with(&c, 3, &opts), Err(Error::EnumerationCap { subsets: 4060, cap: 100 })));
        let auto = SparseEigOptions { mode: EigMode::Auto, cap: 100, ..Default::default() };
        assert!(!sparse_eig_with(&c, 3, &auto).unwrap().exact);
    }

    #[test]
    fn subset_counts() {
        assert_eq!(subset_count(12, 6), 924);
        assert_eq!(subset_count(5, 0), 1);
        assert_eq!(subset_count(3, 4), 0);
        assert_eq!(subset_count(1000, 500), u128::MAX);
    }

    #[test]
    fn diagonal_witnesses() {
        let c = GramMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 0.5, 1.0])), None)
            .unwrap();
        let r = sparse_eig(&c, 2, EigMode::Exact).unwrap();
        assert_eq!((r.phi_min, r.phi_max), (0.5, 3.0));
        assert_eq!(r.witness_min, vec![0, 2]);
        assert_eq!(r.witness_max, vec![0, 1]);
    }
}
