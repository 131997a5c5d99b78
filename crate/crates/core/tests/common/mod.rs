//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::f64::consts::TAU;

/// Singular values from the eigenvalues of the smaller Gram matrix, descending.
pub fn gram_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let g = if a.nrows() <= a.ncols() {
        a * a.transpose()
    } else {
        a.transpose() * a
    };
    let mut s: Vec<f64> = SymmetricEigen::new(g)
        .eigenvalues
        .iter()
        .map(|&e| e.max(0.0).sqrt())
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `(Σ σ_i^p)^{1/p}` over `σ_i > 1e-6 σ_1`, the cut sitting above the Gram
/// round-off floor.
pub fn schatten_oracle(a: &DMatrix<f64>, p: f64) -> f64 {
    let s = gram_singular_values(a);
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0.0;
    }
    s.iter()
        .filter(|&&v| v > 1e-6 * top)
        .map(|v| v.powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

pub fn rank_oracle(a: &DMatrix<f64>) -> usize {
    let s = gram_singular_values(a);
    let top = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&v| v > 1e-6 * top && top > 0.0).count()
}

/// Pseudo-inverse of a full-rank matrix through the normal equations.
pub fn full_rank_pinv(x: &DMatrix<f64>) -> DMatrix<f64> {
    try_full_rank_pinv(x).expect("full-rank matrix")
}

/// As [`full_rank_pinv`], or `None` when the Gram matrix is singular.
pub fn try_full_rank_pinv(x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if x.nrows() <= x.ncols() {
        let g = (x * x.transpose()).try_inverse()?;
        Some(x.transpose() * g)
    } else {
        let g = (x.transpose() * x).try_inverse()?;
        Some(g * x.transpose())
    }
}

/// Convex hull of 2-D points (monotone chain), counter-clockwise.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Brute-force value of the three-layer ReLU dual for rank-one data
/// `X = c a0ᵀ` with `N = 2` and scalar labels.
///
/// The reachable set `{((c uᵀ)_+ w2)_+ : ‖u‖ = reach, ‖w2‖ = 1}` is sampled on
/// a `res × res` angle grid with two hidden neurons, and the dual
/// `max λᵀy / max_v |λᵀv|` is scanned over 6283 directions and then refined
/// around the best ones.
pub fn rank1_grid_value(c: &DVector<f64>, reach: f64, y: &DVector<f64>, res: usize) -> f64 {
    assert_eq!(c.len(), 2, "the grid oracle is two-dimensional");
    let mut pts = Vec::with_capacity(res * res);
    for i in 0..res {
        let phi = i as f64 * TAU / res as f64;
        let u = [reach * phi.cos(), reach * phi.sin()];
        for j in 0..res {
            let psi = j as f64 * TAU / res as f64;
            let w = [psi.cos(), psi.sin()];
            let v: Vec<f64> = (0..2)
                .map(|r| {
                    let h = (c[r] * u[0]).max(0.0) * w[0] + (c[r] * u[1]).max(0.0) * w[1];
                    h.max(0.0)
                })
                .collect();
            pts.push([v[0], v[1]]);
        }
    }
    let hull = convex_hull_2d(&pts);
    let ratio = |th: f64| {
        let l = [th.cos(), th.sin()];
        let m = hull
            .iter()
            .map(|v| (l[0] * v[0] + l[1] * v[1]).abs())
            .fold(0.0, f64::max);
        let num = l[0] * y[0] + l[1] * y[1];
        if m == 0.0 {
            if num > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY }
        } else {
            num / m
        }
    };
    let dirs = 6283;
    let step = TAU / dirs as f64;
    let mut coarse: Vec<(f64, f64)> = (0..dirs).map(|i| (ratio(i as f64 * step), i as f64 * step)).collect();
    coarse.sort_by(|a, b| b.0.total_cmp(&a.0));
    coarse
        .iter()
        .take(5)
        .map(|&(_, th)| {
            (0..=2000)
                .map(|k| ratio(th - step + 2.0 * step * k as f64 / 2000.0))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
