//! Deep linear networks: closed-form primal and dual values, balanced
//! factorizations, dual certificates and the partial-dualization staircase.
//!
//! All values are expressed through the minimum-norm interpolant `X†Y`.
//! With `W = X†Y` and scale `t`, the standard primal is
//! `t^{−(L−2)} ‖W‖_{S_{2/L}}`, the dual replaces the Schatten quasi-norm by the
//! nuclear norm, and the parallel architecture closes the gap at
//! `(L/2) ‖W‖_*`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matfun::{self, ensure_finite};
use crate::network::{DualCertificate, Factorization, FeasibilityReport};

/// Tolerance for `Y = X X† Y`, relative to `max(1, ‖Y‖_F)`.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Data matrix `X` (`N × d`) and labels `Y` (`N × K`).
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        ensure_finite(&x, "X")?;
        ensure_finite(&y, "Y")?;
        if x.nrows() == 0 || x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::InvalidInput("X and Y must be non-empty".into()));
        }
        if x.nrows() != y.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "X has {} rows but Y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        Ok(Dataset { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn k(&self) -> usize {
        self.y.ncols()
    }

    /// Returns `X†Y` after checking that it interpolates, i.e. `Y = X X† Y`.
    pub fn min_norm_solution(&self) -> Result<DMatrix<f64>> {
        let xp = matfun::pseudo_inverse(&self.x)?;
        let w = &xp * &self.y;
        let residual = (&self.x * &w - &self.y).norm();
        if residual > FEASIBILITY_TOL * self.y.norm().max(1.0) {
            return Err(Error::Infeasible(format!(
                "labels are not in the range of X (‖XX†Y − Y‖_F = {residual:e})"
            )));
        }
        Ok(w)
    }

    pub fn check_feasible(&self) -> Result<()> {
        self.min_norm_solution().map(|_| ())
    }
}

fn check_depth(l: usize, min: usize) -> Result<()> {
    if l < min {
        return Err(Error::InvalidSpec(format!("depth must be at least {min}, got {l}")));
    }
    Ok(())
}

fn check_scale(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("scale t must be positive, got {t}")))
    }
}

fn scale_factor(l: usize, t: f64) -> f64 {
    t.powi(-(l as i32 - 2))
}

/// `t^{−(L−2)} ‖X†Y‖_{S_{2/L}}`.
pub fn primal_value_standard_linear(ds: &Dataset, l: usize, t: f64) -> Result<f64> {
    check_depth(l, 2)?;
    check_scale(t)?;
    let w = ds.min_norm_solution()?;
    Ok(scale_factor(l, t) * matfun::schatten_quasi_norm(&w, 2.0 / l as f64)?)
}

/// `t^{−(L−2)} ‖X†Y‖_*`.
pub fn dual_value_standard_linear(ds: &Dataset, l: usize, t: f64) -> Result<f64> {
    check_depth(l, 2)?;
    check_scale(t)?;
    let w = ds.min_norm_solution()?;
    Ok(scale_factor(l, t) * matfun::nuclear_norm(&w)?)
}

/// Optimum over the scale of `(L−2)/2 · t² + P_lin(t)`.
///
/// Returns `((L/2) ‖X†Y‖_{S_{2/L}}^{2/L}, ‖X†Y‖_{S_{2/L}}^{1/L})`. For `Y = 0`
/// the optimal scale is 0.
pub fn total_primal_standard_linear(ds: &Dataset, l: usize) -> Result<(f64, f64)> {
    check_depth(l, 2)?;
    let w = ds.min_norm_solution()?;
    let s = matfun::schatten_quasi_norm(&w, 2.0 / l as f64)?;
    let lf = l as f64;
    Ok((0.5 * lf * s.powf(2.0 / lf), s.powf(1.0 / lf)))
}

/// `(L/2) ‖X†Y‖_*`, the common primal and dual value of the parallel network.
pub fn parallel_linear_value(ds: &Dataset, l: usize) -> Result<f64> {
    check_depth(l, 2)?;
    let w = ds.min_norm_solution()?;
    Ok(0.5 * l as f64 * matfun::nuclear_norm(&w)?)
}

/// `(l, t^{−(L−2)} ‖X†Y‖_{S_{2/(l+2)}})` for `l = 0, …, L−2`.
///
/// The first entry is the dual value and the last one the primal value.
pub fn staircase_values(ds: &Dataset, l: usize, t: f64) -> Result<Vec<(usize, f64)>> {
    check_depth(l, 3)?;
    check_scale(t)?;
    let w = ds.min_norm_solution()?;
    let svd = matfun::svd(&w)?;
    let c = scale_factor(l, t);
    Ok((0..=l - 2)
        .map(|i| {
            let p = 2.0 / (i as f64 + 2.0);
            (i, c * matfun::schatten_from_singular_values(svd.significant(), p))
        })
        .collect())
}

/// Balanced factorization `W = W_1 ⋯ W_L` with `hidden` = `m_1, …, m_{L−1}`.
///
/// With `W = U Σ Vᵀ` of rank `r`, every factor carries `Σ^{1/L}` and the rank-r
/// core is embedded in the wider layers through leading coordinate vectors.
/// The objective is `Σ_l ‖W_l‖_F² = L ‖W‖_{S_{2/L}}^{2/L}`, the minimum over all
/// factorizations.
pub fn balanced_factorization(
    w: &DMatrix<f64>,
    l: usize,
    hidden: &[usize],
) -> Result<Factorization> {
    check_depth(l, 1)?;
    if hidden.len() + 1 != l {
        return Err(Error::InvalidSpec(format!(
            "depth {l} needs {} hidden widths, got {}",
            l - 1,
            hidden.len()
        )));
    }
    let svd = matfun::svd(w)?;
    let r = svd.rank;
    if let Some(&m) = hidden.iter().find(|&&m| m < r) {
        return Err(Error::InvalidSpec(format!(
            "hidden width {m} is smaller than rank {r}"
        )));
    }
    let root = DVector::from_iterator(r, svd.significant().iter().map(|s| s.powf(1.0 / l as f64)));
    let root = DMatrix::from_diagonal(&root);
    let embed = |m: usize| DMatrix::<f64>::identity(m, r);

    let mut dims = vec![w.nrows()];
    dims.extend_from_slice(hidden);
    dims.push(w.ncols());

    let layers: Vec<DMatrix<f64>> = (0..l)
        .map(|i| {
            let left = if i == 0 { svd.u_r() } else { embed(dims[i]) };
            let right = if i == l - 1 { svd.v_r() } else { embed(dims[i + 1]) };
            &left * &root * right.transpose()
        })
        .collect();
    let achieved_objective = layers.iter().map(|m| m.norm_squared()).sum();
    Ok(Factorization {
        branches: vec![layers],
        achieved_objective,
        target: w.clone(),
    })
}

/// Parallel factorization with one branch per singular triple.
///
/// Branch `j` is `σ_j^{1/L} u_j e_1ᵀ, σ_j^{1/L} e_1 e_1ᵀ, …, σ_j^{1/L} v_jᵀ`;
/// unused branches are zero. The objective is the parallel regulariser
/// `½ Σ_j Σ_l ‖W_{l,j}‖_F^L = (L/2) ‖W‖_*`.
pub fn parallel_factorization(
    w: &DMatrix<f64>,
    l: usize,
    hidden: usize,
    branches: usize,
) -> Result<Factorization> {
    check_depth(l, 2)?;
    if hidden == 0 {
        return Err(Error::InvalidSpec("hidden width must be positive".into()));
    }
    let svd = matfun::svd(w)?;
    if branches < svd.rank {
        return Err(Error::InvalidSpec(format!(
            "{branches} branches cannot carry rank {}",
            svd.rank
        )));
    }
    let mut dims = vec![w.nrows()];
    dims.extend(std::iter::repeat_n(hidden, l - 2));
    dims.push(1);
    dims.push(w.ncols());
    let lf = l as f64;

    let mut out = Vec::with_capacity(branches);
    let mut objective = 0.0;
    for j in 0..branches {
        let root = if j < svd.rank {
            svd.sigma[j].powf(1.0 / lf)
        } else {
            0.0
        };
        let layers: Vec<DMatrix<f64>> = (0..l)
            .map(|i| {
                let mut m = DMatrix::zeros(dims[i], dims[i + 1]);
                if root > 0.0 {
                    if i == 0 {
                        m.set_column(0, &(svd.u.column(j) * root));
                    } else if i == l - 1 {
                        m.set_row(0, &(svd.v.column(j).transpose() * root));
                    } else {
                        m[(0, 0)] = root;
                    }
                }
                m
            })
            .collect();
        objective += 0.5 * layers.iter().map(|m| m.norm().powf(lf)).sum::<f64>();
        out.push(layers);
    }
    Ok(Factorization {
        branches: out,
        achieved_objective: objective,
        target: w.clone(),
    })
}

/// Dual certificate `Λ = t^{−(L−2)} (X†)ᵀ U Vᵀ` where `X†Y = U Σ Vᵀ`.
///
/// It attains `tr(ΛᵀY) = t^{−(L−2)} ‖X†Y‖_*` with `‖ΛᵀX‖₂ = t^{−(L−2)}`.
pub fn linear_dual_certificate(ds: &Dataset, l: usize, t: f64) -> Result<DualCertificate> {
    check_depth(l, 2)?;
    check_scale(t)?;
    let w = ds.min_norm_solution()?;
    let svd = matfun::svd(&w)?;
    let c = scale_factor(l, t);
    let xp = matfun::pseudo_inverse(ds.x())?;
    let lambda = xp.transpose() * svd.u_r() * svd.v_r().transpose() * c;
    let max_value = matfun::spectral_norm(&(lambda.transpose() * ds.x()))?;
    let objective = (lambda.transpose() * ds.y()).trace();
    Ok(DualCertificate {
        lambda,
        bound: c,
        objective,
        report: FeasibilityReport {
            max_value,
            samples_tested: 0,
            falsified: max_value > c * (1.0 + 1e-8),
            method: "spectral norm of ΛᵀX".into(),
        },
    })
}

/// `½‖XW − Y‖_F² + (βL/2) ‖W‖_{S_{2/L}}^{2/L}`.
pub fn equivalent_schatten_objective(
    ds: &Dataset,
    w: &DMatrix<f64>,
    l: usize,
    beta: f64,
) -> Result<f64> {
    check_depth(l, 2)?;
    if w.nrows() != ds.d() || w.ncols() != ds.k() {
        return Err(Error::ShapeMismatch(format!(
            "W is {}x{}, expected {}x{}",
            w.nrows(),
            w.ncols(),
            ds.d(),
            ds.k()
        )));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidInput(format!("β must be nonnegative, got {beta}")));
    }
    let lf = l as f64;
    let loss = 0.5 * (ds.x() * w - ds.y()).norm_squared();
    Ok(loss + 0.5 * beta * lf * matfun::schatten_pow(w, 2.0 / lf)?)
}

/// Minimiser of `½‖W − Y‖_F² + (βL/2) ‖W‖_{S_{2/L}}^{2/L}` (the `X = I` case).
///
/// The minimiser shares singular vectors with `Y`, so the problem splits into
/// one scalar problem per singular value. Small singular values are cut to 0,
/// which is how the penalty produces low-rank solutions.
pub fn schatten_regularized_minimizer(
    y: &DMatrix<f64>,
    l: usize,
    beta: f64,
) -> Result<DMatrix<f64>> {
    check_depth(l, 2)?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidInput(format!("β must be nonnegative, got {beta}")));
    }
    let svd = matfun::svd(y)?;
    let q = 2.0 / l as f64;
    let c = 0.5 * beta * l as f64;
    let shrunk: Vec<f64> = svd
        .significant()
        .iter()
        .map(|&s| scalar_schatten_prox(s, c, q))
        .collect();
    let d = DMatrix::from_diagonal(&DVector::from_vec(shrunk));
    Ok(svd.u_r() * d * svd.v_r().transpose())
}

/// `argmin_{w ≥ 0} ½(w − s)² + c·w^q` for `s ≥ 0`, `c ≥ 0`, `q ∈ (0, 1]`.
pub fn scalar_schatten_prox(s: f64, c: f64, q: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if c == 0.0 {
        return s;
    }
    let f = |w: f64| 0.5 * (w - s).powi(2) + c * w.powf(q);
    let df = |w: f64| w - s + c * q * w.powf(q - 1.0);
    // f is concave below the inflection point and convex above it.
    let infl = (c * q * (1.0 - q)).powf(1.0 / (2.0 - q));
    let lo0 = infl.max(f64::MIN_POSITIVE);
    if lo0 >= s || df(lo0) >= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (lo0, s);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if df(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * s {
            break;
        }
    }
    let w = 0.5 * (lo + hi);
    if f(w) < f(0.0) {
        w
    } else {
        0.0
    }
}

/// One row of a β sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub beta: f64,
    pub rank: usize,
    pub objective: f64,
}

/// Solves the `X = I` Schatten-regularised problem for each `β`.
pub fn beta_sweep(y: &DMatrix<f64>, l: usize, betas: &[f64]) -> Result<Vec<SweepPoint>> {
    let ds = Dataset::new(DMatrix::identity(y.nrows(), y.nrows()), y.clone())?;
    betas
        .iter()
        .map(|&beta| {
            let w = schatten_regularized_minimizer(y, l, beta)?;
            let rank = if w.norm() == 0.0 { 0 } else { matfun::rank(&w)? };
            Ok(SweepPoint {
                beta,
                rank,
                objective: equivalent_schatten_objective(&ds, &w, l, beta)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn diag_ds(v: &[f64]) -> Dataset {
        Dataset::new(DMatrix::identity(v.len(), v.len()), diag(v)).unwrap()
    }

    /// `(Σ σ^p)^{1/p}` written out by hand for diagonal data.
    fn schatten_diag(v: &[f64], p: f64) -> f64 {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }

    fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn primal_examples() {
        let ds = diag_ds(&[2.0, 1.0]);
        assert_relative_eq!(primal_value_standard_linear(&ds, 2, 7.0).unwrap(), 3.0, max_relative = 1e-12);
        let p3 = schatten_diag(&[2.0, 1.0], 2.0 / 3.0);
        assert_relative_eq!(p3, 4.161938184941462, max_relative = 1e-12);
        assert_relative_eq!(primal_value_standard_linear(&ds, 3, 1.0).unwrap(), p3, max_relative = 1e-12);
        assert_relative_eq!(primal_value_standard_linear(&ds, 3, 2.0).unwrap(), 2.080969092470731, max_relative = 1e-12);
    }

    #[test]
    fn dual_examples() {
        let ds = diag_ds(&[2.0, 1.0]);
        assert_relative_eq!(dual_value_standard_linear(&ds, 3, 1.0).unwrap(), 3.0, max_relative = 1e-12);
        let zero = Dataset::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2)).unwrap();
        for l in 2..6 {
            assert_eq!(dual_value_standard_linear(&zero, l, 0.7).unwrap(), 0.0);
        }
        let ones = diag_ds(&[1.0, 1.0]);
        let p = primal_value_standard_linear(&ones, 3, 1.0).unwrap();
        let d = dual_value_standard_linear(&ones, 3, 1.0).unwrap();
        assert_relative_eq!(d, 2.0, max_relative = 1e-12);
        assert_relative_eq!(p, 2.0f64.powf(1.5), max_relative = 1e-12);
        assert!(p - d > 0.8);
    }

    #[test]
    fn infeasible_labels_are_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let y = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let ds = Dataset::new(x, y).unwrap();
        assert!(matches!(primal_value_standard_linear(&ds, 3, 1.0), Err(Error::Infeasible(_))));
        assert!(matches!(linear_dual_certificate(&ds, 3, 1.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn dataset_rejects_mismatched_rows() {
        assert!(matches!(
            Dataset::new(DMatrix::zeros(3, 2), DMatrix::zeros(2, 1)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn total_primal_examples() {
        let ds = diag_ds(&[2.0, 1.0]);
        let (v2, _) = total_primal_standard_linear(&ds, 2).unwrap();
        assert_relative_eq!(v2, 3.0, max_relative = 1e-12);

        let (v3, t3) = total_primal_standard_linear(&ds, 3).unwrap();
        assert_relative_eq!(v3, 1.5 * (2f64.powf(2.0 / 3.0) + 1.0), max_relative = 1e-12);
        // Independent 1-D minimisation of (L−2)/2 t² + P(t).
        let s = schatten_diag(&[2.0, 1.0], 2.0 / 3.0);
        let obj = |t: f64| 0.5 * t * t + s / t;
        let t_num = golden_min(obj, 0.1, 10.0);
        assert_relative_eq!(t3, t_num, max_relative = 1e-6);
        assert_relative_eq!(t3, 1.608540, max_relative = 1e-6);
        assert_relative_eq!(v3, obj(t_num), max_relative = 1e-10);

        let u = DMatrix::from_column_slice(3, 1, &[3.0, 0.0, 4.0]) / 5.0;
        let v = DMatrix::from_column_slice(2, 1, &[0.6, 0.8]) * 5.0;
        let r1 = Dataset::new(DMatrix::identity(3, 3), &u * v.transpose()).unwrap();
        for l in 2..7 {
            let lf = l as f64;
            let (val, _) = total_primal_standard_linear(&r1, l).unwrap();
            assert_relative_eq!(val, 0.5 * lf * 5f64.powf(2.0 / lf), max_relative = 1e-10);
        }
    }

    #[test]
    fn balanced_factorization_examples() {
        let f = balanced_factorization(&DMatrix::identity(2, 2), 3, &[2, 2]).unwrap();
        for w in f.layers() {
            assert_relative_eq!(w.norm_squared(), 2.0, max_relative = 1e-12);
        }
        assert_relative_eq!(f.achieved_objective, 6.0, max_relative = 1e-12);

        let z = balanced_factorization(&DMatrix::zeros(3, 2), 4, &[1, 2, 3]).unwrap();
        assert_eq!(z.achieved_objective, 0.0);
        assert!(z.layers().iter().all(|w| w.norm() == 0.0));
        assert_eq!(z.layers()[1].shape(), (1, 2));

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w = sample::gaussian_matrix(&mut rng, 4, 2) * sample::gaussian_matrix(&mut rng, 2, 3);
        let f = balanced_factorization(&w, 4, &[2, 5, 3]).unwrap();
        assert!(f.relative_error() <= 1e-6);
        let expect = 4.0 * matfun::schatten_pow(&w, 0.5).unwrap();
        assert_relative_eq!(f.achieved_objective, expect, max_relative = 1e-6);
        let first = f.layers()[0].norm_squared();
        for m in f.layers() {
            assert_relative_eq!(m.norm_squared(), first, max_relative = 1e-8);
        }
        assert!(matches!(
            balanced_factorization(&w, 3, &[1, 3]),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn balanced_factorization_beats_perturbed_factorizations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = sample::gaussian_matrix(&mut rng, 3, 3);
        let f = balanced_factorization(&w, 3, &[3, 3]).unwrap();
        for _ in 0..1000 {
            let mut layers = f.layers().to_vec();
            let i = rng.random_range(0..2);
            let g = DMatrix::identity(3, 3) + sample::gaussian_matrix(&mut rng, 3, 3) * 0.1;
            let Some(gi) = g.clone().try_inverse() else { continue };
            layers[i] = &layers[i] * &g;
            layers[i + 1] = &gi * &layers[i + 1];
            let obj: f64 = layers.iter().map(|m| m.norm_squared()).sum();
            assert!(obj >= f.achieved_objective - 1e-8);
        }
    }

    #[test]
    fn parallel_factorization_reaches_nuclear_value() {
        let w = diag(&[2.0, 1.0]);
        let f = parallel_factorization(&w, 3, 2, 4).unwrap();
        assert!(f.relative_error() < 1e-12);
        assert_relative_eq!(f.achieved_objective, 4.5, max_relative = 1e-12);
        assert_eq!(f.branches.len(), 4);
        assert!(parallel_factorization(&w, 3, 2, 1).is_err());
    }

    #[test]
    fn staircase_examples() {
        let ds = diag_ds(&[2.0, 1.0]);
        let s = staircase_values(&ds, 5, 1.0).unwrap();
        assert_eq!(s.len(), 4);
        assert_relative_eq!(s[0].1, 3.0, max_relative = 1e-12);
        assert_relative_eq!(s[3].1, schatten_diag(&[2.0, 1.0], 0.4), max_relative = 1e-12);
        assert_relative_eq!(s[3].1, 8.193880862255176, max_relative = 1e-12);
        assert!(s.windows(2).all(|w| w[1].1 > w[0].1));
        assert_relative_eq!(s[3].1, primal_value_standard_linear(&ds, 5, 1.0).unwrap(), max_relative = 1e-12);

        let r1 = Dataset::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]),
        )
        .unwrap();
        let s = staircase_values(&r1, 5, 1.3).unwrap();
        for (_, v) in &s {
            assert_relative_eq!(*v, s[0].1, max_relative = 1e-12);
        }
        assert!(staircase_values(&ds, 2, 1.0).is_err());
    }

    #[test]
    fn parallel_value_examples() {
        let ds = diag_ds(&[2.0, 1.0]);
        assert_relative_eq!(parallel_linear_value(&ds, 3).unwrap(), 4.5, max_relative = 1e-12);
        assert_relative_eq!(
            parallel_linear_value(&ds, 2).unwrap(),
            total_primal_standard_linear(&ds, 2).unwrap().0,
            max_relative = 1e-12
        );
        let zero = Dataset::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(parallel_linear_value(&zero, 4).unwrap(), 0.0);
    }

    #[test]
    fn certificate_examples() {
        let ds = diag_ds(&[2.0, 1.0]);
        let cert = linear_dual_certificate(&ds, 3, 1.0).unwrap();
        assert_relative_eq!(cert.report.max_value, 1.0, max_relative = 1e-12);
        assert_relative_eq!(cert.objective, 3.0, max_relative = 1e-12);
        assert!(!cert.report.falsified);

        let zero = Dataset::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2)).unwrap();
        let z = linear_dual_certificate(&zero, 3, 1.0).unwrap();
        assert_eq!(z.lambda, DMatrix::zeros(2, 2));
        assert_eq!(z.objective, 0.0);

        let c2 = linear_dual_certificate(&ds, 4, 2.0).unwrap();
        let c1 = linear_dual_certificate(&ds, 4, 1.0).unwrap();
        assert!((c2.lambda - c1.lambda * 0.25).norm() < 1e-12);
        assert_relative_eq!(c2.objective, c1.objective * 0.25, max_relative = 1e-12);
    }

    #[test]
    fn schatten_objective_examples() {
        let ds = diag_ds(&[2.0, 1.0]);
        let w = ds.min_norm_solution().unwrap();
        let tiny = equivalent_schatten_objective(&ds, &w, 3, 1e-12).unwrap();
        assert!(tiny < 1e-11);
        let zero = equivalent_schatten_objective(&ds, &DMatrix::zeros(2, 2), 3, 0.5).unwrap();
        assert_relative_eq!(zero, 2.5, max_relative = 1e-14);
        assert!(equivalent_schatten_objective(&ds, &DMatrix::zeros(3, 2), 3, 0.5).is_err());
    }

    /// Grid search over diagonal `W = diag(a, b)` for `Y = diag(2, 1)`.
    fn grid_minimizer(l: usize, beta: f64) -> (f64, f64, f64) {
        let ds = diag_ds(&[2.0, 1.0]);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let n = 400;
        for i in 0..=n {
            for j in 0..=n {
                let a = 2.2 * i as f64 / n as f64;
                let b = 1.2 * j as f64 / n as f64;
                let v = equivalent_schatten_objective(&ds, &diag(&[a, b]), l, beta).unwrap();
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        best
    }

    #[test]
    fn beta_sweep_drops_rank() {
        let y = diag(&[2.0, 1.0]);
        let betas = [0.01, 0.1, 0.3, 0.6, 1.0, 2.0];
        let sweep = beta_sweep(&y, 5, &betas).unwrap();
        let ranks: Vec<usize> = sweep.iter().map(|p| p.rank).collect();
        assert!(ranks.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(ranks[0], 2);
        assert!(ranks.contains(&1));
        for p in &sweep {
            let (v, a, b) = grid_minimizer(5, p.beta);
            let grid_rank = [a, b].iter().filter(|x| **x > 1e-9).count();
            assert_eq!(grid_rank, p.rank, "β = {}", p.beta);
            assert!(p.objective <= v + 1e-9);
            assert!(p.objective >= v - 1e-2);
        }
    }

    #[test]
    fn scalar_prox_reduces_to_soft_threshold() {
        for s in [0.0, 0.3, 1.0, 5.0] {
            for c in [0.0, 0.5, 2.0] {
                assert_relative_eq!(scalar_schatten_prox(s, c, 1.0), (s - c).max(0.0), epsilon = 1e-12);
            }
        }
    }

    fn feasible_dataset() -> impl Strategy<Value = Dataset> {
        (1usize..8, 1usize..5, 1usize..5, any::<u64>()).prop_map(|(n, d, k, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = sample::gaussian_matrix(&mut rng, n, d);
            let w = sample::gaussian_matrix(&mut rng, d, k);
            let y = &x * w;
            Dataset::new(x, y).unwrap()
        })
    }

    proptest! {
        #[test]
        fn weak_duality_and_rank_equality(ds in feasible_dataset(), l in 2usize..6, t in 0.3f64..3.0) {
            let p = primal_value_standard_linear(&ds, l, t).unwrap();
            let d = dual_value_standard_linear(&ds, l, t).unwrap();
            prop_assert!(p >= d - 1e-8);
            let r = matfun::rank(&ds.min_norm_solution().unwrap()).unwrap();
            if l == 2 || r <= 1 {
                prop_assert!((p - d).abs() <= 1e-9 * p.max(1.0));
            }
        }

        #[test]
        fn staircase_is_monotone_with_exact_endpoints(ds in feasible_dataset(), l in 3usize..8, t in 0.3f64..3.0) {
            let s = staircase_values(&ds, l, t).unwrap();
            prop_assert_eq!(s.len(), l - 1);
            for w in s.windows(2) {
                prop_assert!(w[1].1 >= w[0].1 * (1.0 - 1e-12));
            }
            prop_assert!((s[0].1 - dual_value_standard_linear(&ds, l, t).unwrap()).abs() <= 1e-10 * s[0].1.max(1.0));
            prop_assert!((s[l - 2].1 - primal_value_standard_linear(&ds, l, t).unwrap()).abs() <= 1e-10 * s[l - 2].1.max(1.0));
        }

        #[test]
        fn primal_scales_as_power_of_t(ds in feasible_dataset(), l in 2usize..6, t in 0.3f64..3.0) {
            let base = primal_value_standard_linear(&ds, l, 1.0).unwrap();
            let scaled = primal_value_standard_linear(&ds, l, t).unwrap() * t.powi(l as i32 - 2);
            prop_assert!((scaled - base).abs() <= 1e-10 * base.max(1.0));
        }

        #[test]
        fn certificate_is_feasible_and_tight(ds in feasible_dataset(), l in 2usize..6, t in 0.3f64..3.0) {
            let cert = linear_dual_certificate(&ds, l, t).unwrap();
            prop_assert!(!cert.report.falsified);
            let d = dual_value_standard_linear(&ds, l, t).unwrap();
            prop_assert!((cert.objective - d).abs() <= 1e-6 * d.max(1.0));
        }
    }
}
