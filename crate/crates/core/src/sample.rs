//! Random matrix generators shared by the sampler, the trainer and tests.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Matrix with i.i.d. standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Uniform point on the Frobenius sphere of the given radius.
pub fn sphere_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    radius: f64,
) -> DMatrix<f64> {
    loop {
        let g = gaussian_matrix(rng, rows, cols);
        let n = g.norm();
        if n > 1e-12 {
            return g * (radius / n);
        }
    }
}

/// `n × k` matrix with orthonormal columns, Haar distributed.
pub fn orthonormal_columns<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> DMatrix<f64> {
    assert!(k <= n, "cannot fit {k} orthonormal columns in R^{n}");
    if k == 0 {
        return DMatrix::zeros(n, 0);
    }
    let qr = gaussian_matrix(rng, n, k).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random PSD matrix `G Gᵀ` of a random rank between 1 and `n`.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let k = rng.random_range(1..=n);
    let g = gaussian_matrix(rng, n, k);
    &g * g.transpose()
}

/// Orthogonal projection onto a random `k`-dimensional subspace of `R^n`.
pub fn random_projection<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> DMatrix<f64> {
    let q = orthonormal_columns(rng, n, k);
    &q * q.transpose()
}
