//! Spectral matrix functionals.
//!
//! Everything here works on dense `f64` matrices and goes through a thin SVD
//! with singular values sorted in nonincreasing order. A singular value counts
//! toward the rank (and toward every Schatten sum) only if it exceeds
//! [`RANK_RTOL`] times the largest one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative cutoff below which a singular value is treated as zero.
pub const RANK_RTOL: f64 = 1e-10;

/// Thin SVD `A = U diag(sigma) Vᵀ` with `sigma` sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows × k` with orthonormal columns, `k = min(rows, cols)`.
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    /// `cols × k` with orthonormal columns.
    pub v: DMatrix<f64>,
    /// Number of singular values above the relative tolerance.
    pub rank: usize,
}

impl Svd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&self.sigma));
        &self.u * s * self.v.transpose()
    }

    /// Singular values that count toward the rank.
    pub fn significant(&self) -> &[f64] {
        &self.sigma[..self.rank]
    }

    /// Leading `rank` left singular vectors.
    pub fn u_r(&self) -> DMatrix<f64> {
        self.u.columns(0, self.rank).into_owned()
    }

    /// Leading `rank` right singular vectors.
    pub fn v_r(&self) -> DMatrix<f64> {
        self.v.columns(0, self.rank).into_owned()
    }
}

pub fn ensure_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    ensure_finite(a, "matrix")?;
    let (m, n) = a.shape();
    if m.min(n) == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(m, 0),
            sigma: Vec::new(),
            v: DMatrix::zeros(n, 0),
            rank: 0,
        });
    }
    let (u, sigma, v) = if m >= n {
        jacobi_svd(a)?
    } else {
        let (v, sigma, u) = jacobi_svd(&a.transpose())?;
        (u, sigma, v)
    };
    let cutoff = RANK_RTOL * sigma[0];
    let rank = sigma.iter().take_while(|&&s| s > cutoff && s > 0.0).count();
    Ok(Svd { u, sigma, v, rank })
}

/// One-sided Jacobi SVD of a tall matrix (`rows ≥ cols`).
///
/// Columns are rotated pairwise until mutually orthogonal; their norms are the
/// singular values. Left vectors of zero singular values are completed to an
/// orthonormal set.
fn jacobi_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    // Columns at roundoff level of the whole matrix are treated as zero.
    let negligible = (f64::EPSILON * a.norm()).powi(2) * n as f64;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0
                    || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt()
                    || alpha.min(beta) <= negligible
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, i, j, c, s);
                rotate_columns(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("Jacobi SVD did not converge".into()));
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let top = norms[order[0]];

    let mut u = DMatrix::zeros(m, n);
    let mut vs = DMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut filled = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma.push(s);
        vs.set_column(dst, &v.column(src));
        if s > f64::EPSILON * top * (m as f64) && s > 0.0 {
            u.set_column(dst, &(w.column(src) / s));
            filled.push(dst);
        }
    }
    complete_orthonormal(&mut u, &filled);
    Ok((u, sigma, vs))
}

const JACOBI_MAX_SWEEPS: usize = 100;

fn rotate_columns(m: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let a = m[(r, i)];
        let b = m[(r, j)];
        m[(r, i)] = c * a - s * b;
        m[(r, j)] = s * a + c * b;
    }
}

/// Fills the columns of `u` not listed in `filled` so all columns are
/// orthonormal, using Gram–Schmidt on coordinate vectors.
fn complete_orthonormal(u: &mut DMatrix<f64>, filled: &[usize]) {
    let m = u.nrows();
    let mut basis: Vec<DVector<f64>> = filled.iter().map(|&j| u.column(j).into_owned()).collect();
    let mut candidate = 0;
    for col in 0..u.ncols() {
        if filled.contains(&col) {
            continue;
        }
        while candidate < m {
            let mut e = DVector::zeros(m);
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for b in &basis {
                    let proj = b.dot(&e);
                    e.axpy(-proj, b, 1.0);
                }
            }
            let nrm = e.norm();
            if nrm > 1e-8 {
                e /= nrm;
                u.set_column(col, &e);
                basis.push(e);
                break;
            }
        }
    }
}

pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    svd(a).map(|s| s.sigma)
}

pub fn rank(a: &DMatrix<f64>) -> Result<usize> {
    svd(a).map(|s| s.rank)
}

/// `(Σ σ_i^p)^{1/p}` over the significant singular values.
///
/// For `p < 1` this is only a quasi-norm: it is absolutely homogeneous but the
/// triangle inequality can fail.
pub fn schatten_quasi_norm(a: &DMatrix<f64>, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let s = svd(a)?;
    Ok(schatten_from_singular_values(s.significant(), p))
}

/// Same as [`schatten_quasi_norm`] raised to the power `p`, i.e. `Σ σ_i^p`.
pub fn schatten_pow(a: &DMatrix<f64>, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let s = svd(a)?;
    Ok(s.significant().iter().map(|x| x.powf(p)).sum())
}

pub fn schatten_from_singular_values(sigma: &[f64], p: f64) -> f64 {
    if sigma.is_empty() {
        return 0.0;
    }
    // Factor out the largest value so tiny p cannot underflow the sum.
    let top = sigma.iter().cloned().fold(0.0_f64, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    let sum: f64 = sigma.iter().map(|x| (x / top).powf(p)).sum();
    top * sum.powf(1.0 / p)
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "Schatten exponent must be positive and finite, got {p}"
        )))
    }
}

pub fn nuclear_norm(a: &DMatrix<f64>) -> Result<f64> {
    let s = svd(a)?;
    Ok(s.significant().iter().sum())
}

pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    let s = svd(a)?;
    Ok(s.sigma.first().copied().unwrap_or(0.0))
}

/// Moore–Penrose pseudo-inverse `V Σ⁺ Uᵀ`, inverting only significant values.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = svd(a)?;
    let (m, n) = a.shape();
    let mut out = DMatrix::zeros(n, m);
    for i in 0..s.rank {
        let vi = s.v.column(i);
        let ui = s.u.column(i);
        out += (vi * ui.transpose()) / s.sigma[i];
    }
    Ok(out)
}

/// Elementwise `max(a, 0)`.
pub fn positive_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.map(|x| x.max(0.0))
}

pub fn positive_part_vec(a: &DVector<f64>) -> DVector<f64> {
    a.map(|x| x.max(0.0))
}

/// Checks `Σ A_ii^p ≥ Σ λ_i(A)^p` for a PSD matrix and `p ∈ (0, 1)`.
///
/// The input is symmetrised first. Eigenvalues below `-1e-8` reject the
/// input; smaller negative noise is clamped to zero.
pub fn diag_eig_power_inequality_check(a: &DMatrix<f64>, p: f64) -> Result<bool> {
    ensure_finite(a, "matrix")?;
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::InvalidInput("expected a non-empty square matrix".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("exponent must lie in (0,1), got {p}")));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let min = eig.eigenvalues.min();
    if min < -1e-8 {
        return Err(Error::InvalidInput(format!(
            "matrix is not positive semi-definite (min eigenvalue {min:e})"
        )));
    }
    let top = eig.eigenvalues.max().max(0.0);
    // Eigenvalues at round-off level are zeros; x^p would magnify them.
    let floor = 1e-13 * top.max(1.0);
    let clamp = |x: f64| if x <= floor { 0.0 } else { x };
    let eig_side: f64 = eig.eigenvalues.iter().map(|&l| clamp(l).powf(p)).sum();
    let diag_side: f64 = sym.diagonal().iter().map(|&d| clamp(d).powf(p)).sum();
    Ok(diag_side >= eig_side - 1e-10)
}

/// Checks `σ_i(PW) ≤ σ_i(W)` for an orthogonal projection `P`.
pub fn projection_shrinks_singvals_check(p: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<bool> {
    ensure_finite(p, "projection")?;
    ensure_finite(w, "matrix")?;
    if !p.is_square() || p.nrows() != w.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "projection is {}x{}, matrix has {} rows",
            p.nrows(),
            p.ncols(),
            w.nrows()
        )));
    }
    let idempotence = (p * p - p).norm();
    let asymmetry = (p - p.transpose()).norm();
    if idempotence > 1e-8 || asymmetry > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "not an orthogonal projection (‖P²−P‖={idempotence:e}, ‖P−Pᵀ‖={asymmetry:e})"
        )));
    }
    let projected = singular_values(&(p * w))?;
    let original = singular_values(w)?;
    Ok(projected
        .iter()
        .zip(&original)
        .all(|(a, b)| *a <= *b + 1e-10))
}
