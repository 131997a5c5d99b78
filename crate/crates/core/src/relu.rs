//! Three-layer ReLU closed forms and deep parallel ReLU duality checks.
//!
//! The three-layer problem is
//! `min Σ_j ‖w3_j^row‖₂  s.t. ((X W1)_+ W2)_+ W3 = Y, ‖W1‖_F ≤ t, ‖w2_j^col‖₂ ≤ 1`,
//! and its dual is
//! `max tr(ΛᵀY)  s.t. ‖Λᵀv‖₂ ≤ 1 for v = ((X W1)_+ w2)_+` over the same set.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linear::Dataset;
use crate::matfun::{positive_part, positive_part_vec};
use crate::measure::AtomicMeasure;
use crate::network::{Activation, Architecture, DualCertificate, FeasibilityReport, GapReport, NetSpec, Network};
use crate::sample;
use crate::trainer::{self, Regularizer, TrainConfig};

const WHITENED_TOL: f64 = 1e-8;
const CONSTRAINT_TOL: f64 = 1e-8;
/// Relative tolerance for declaring a sampled constraint violated.
pub const FALSIFY_RTOL: f64 = 1e-6;

fn check_t(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("t must be positive, got {t}")))
    }
}

/// Data with `XXᵀ = I` and labels with mutually orthogonal columns.
#[derive(Debug, Clone)]
pub struct WhitenedDataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl WhitenedDataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "X has {} rows but Y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        crate::matfun::ensure_finite(&x, "X")?;
        crate::matfun::ensure_finite(&y, "Y")?;
        let n = x.nrows();
        let dev = (&x * x.transpose() - DMatrix::<f64>::identity(n, n)).norm();
        if dev > WHITENED_TOL {
            return Err(Error::InvalidInput(format!("X is not whitened: ‖XXᵀ − I‖_F = {dev:e}")));
        }
        for i in 0..y.ncols() {
            for j in i + 1..y.ncols() {
                let dot = y.column(i).dot(&y.column(j)).abs();
                if dot > WHITENED_TOL * y.column(i).norm() * y.column(j).norm() {
                    return Err(Error::InvalidInput(format!(
                        "label columns {i} and {j} are not orthogonal"
                    )));
                }
            }
        }
        Ok(WhitenedDataset { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn parts(&self) -> Vec<SignedPart> {
        signed_parts(&self.y)
    }

    pub fn as_dataset(&self) -> Result<Dataset> {
        Dataset::new(self.x.clone(), self.y.clone())
    }
}

/// A nonzero positive or negative part `(±y_j)_+ = norm · direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPart {
    pub class: usize,
    /// `+1` for `(y_j)_+`, `−1` for `(−y_j)_+`.
    pub sign: f64,
    pub norm: f64,
    /// Unit, nonnegative.
    pub direction: DVector<f64>,
}

/// Nonzero parts in the order `(y_1)_+, (−y_1)_+, (y_2)_+, …`.
pub fn signed_parts(y: &DMatrix<f64>) -> Vec<SignedPart> {
    let mut out = Vec::new();
    for j in 0..y.ncols() {
        let col = y.column(j).into_owned();
        for sign in [1.0, -1.0] {
            let part = positive_part_vec(&(&col * sign));
            let norm = part.norm();
            if norm > 0.0 {
                out.push(SignedPart {
                    class: j,
                    sign,
                    norm,
                    direction: part / norm,
                });
            }
        }
    }
    out
}

/// `t⁻¹ (Σ_r s_r^{2/3})^{3/2}` over the part norms `s_r`.
pub fn relu3_primal_value_whitened(ds: &WhitenedDataset, t: f64) -> Result<f64> {
    check_t(t)?;
    let sum: f64 = ds.parts().iter().map(|p| p.norm.powf(2.0 / 3.0)).sum();
    Ok(sum.powf(1.5) / t)
}

/// `t⁻¹ Σ_r s_r`.
pub fn relu3_dual_value_whitened(ds: &WhitenedDataset, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(ds.parts().iter().map(|p| p.norm).sum::<f64>() / t)
}

/// Per-atom first-layer gains `g_r = t s_r^{1/3} / (Σ s^{2/3})^{1/2}`.
pub fn whitened_layer_gains(ds: &WhitenedDataset, t: f64) -> Result<Vec<f64>> {
    check_t(t)?;
    let parts = ds.parts();
    let sum: f64 = parts.iter().map(|p| p.norm.powf(2.0 / 3.0)).sum();
    Ok(parts.iter().map(|p| t * p.norm.powf(1.0 / 3.0) / sum.sqrt()).collect())
}

/// Weights of a three-layer network `((X W1)_+ W2)_+ W3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluWeights3 {
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub w3: DMatrix<f64>,
}

impl ReluWeights3 {
    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        positive_part(&(positive_part(&(x * &self.w1)) * &self.w2)) * &self.w3
    }

    /// `Σ_j ‖w3_j^row‖₂`.
    pub fn objective(&self) -> f64 {
        self.w3.row_iter().map(|r| r.norm()).sum()
    }

    /// Checks `‖W1‖_F ≤ t` and unit-bounded columns of `W2`.
    pub fn check_constraints(&self, t: f64) -> Result<()> {
        let n1 = self.w1.norm();
        if n1 > t * (1.0 + CONSTRAINT_TOL) {
            return Err(Error::Infeasible(format!("‖W1‖_F = {n1} exceeds t = {t}")));
        }
        for (j, col) in self.w2.column_iter().enumerate() {
            if col.norm() > 1.0 + CONSTRAINT_TOL {
                return Err(Error::Infeasible(format!("column {j} of W2 has norm {}", col.norm())));
            }
        }
        Ok(())
    }

    pub fn to_network(&self) -> Network {
        Network::standard(
            Activation::Relu,
            vec![self.w1.clone(), self.w2.clone(), self.w3.clone()],
        )
    }
}

/// Optimal weights for whitened data.
///
/// One hidden neuron per nonzero part: `W1 = Σ_r g_r Xᵀz_r e_rᵀ`,
/// `W2 = [e_1 … e_R 0 …]`, `W3[r, j] = ±s_r/g_r`. Unused neurons are zero.
pub fn relu3_optimal_weights_whitened(ds: &WhitenedDataset, t: f64, m1: usize) -> Result<ReluWeights3> {
    let parts = ds.parts();
    let gains = whitened_layer_gains(ds, t)?;
    if m1 < parts.len() {
        return Err(Error::InvalidSpec(format!(
            "width {m1} is smaller than the {} nonzero label parts",
            parts.len()
        )));
    }
    let d = ds.x.ncols();
    let k = ds.y.ncols();
    let mut w1 = DMatrix::zeros(d, m1);
    let mut w2 = DMatrix::zeros(m1, m1);
    let mut w3 = DMatrix::zeros(m1, k);
    for (r, (p, g)) in parts.iter().zip(&gains).enumerate() {
        w1.set_column(r, &(ds.x.transpose() * &p.direction * *g));
        w2[(r, r)] = 1.0;
        w3[(r, p.class)] = p.sign * p.norm / g;
    }
    Ok(ReluWeights3 { w1, w2, w3 })
}

/// `Λ*` with columns `t⁻¹ (z_{j+} − z_{j−})`, omitting vanished parts.
pub fn whitened_dual_lambda(ds: &WhitenedDataset, t: f64) -> Result<DMatrix<f64>> {
    check_t(t)?;
    let mut lambda = DMatrix::zeros(ds.y.nrows(), ds.y.ncols());
    for p in ds.parts() {
        let mut col = lambda.column_mut(p.class);
        col += &p.direction * (p.sign / t);
    }
    Ok(lambda)
}

/// `Λ*` together with a sampled feasibility report against bound 1.
pub fn relu3_dual_certificate_whitened(
    ds: &WhitenedDataset,
    t: f64,
    hidden: usize,
    trials: usize,
    seed: u64,
) -> Result<DualCertificate> {
    let lambda = whitened_dual_lambda(ds, t)?;
    let net = NetSpec::standard(3, ds.x.ncols(), ds.y.ncols(), hidden, Activation::Relu, t)?;
    let report = relu_dual_feasibility_sample(&lambda, &net, &ds.x, 1.0, trials, seed)?;
    let objective = lambda.dot(&ds.y);
    Ok(DualCertificate {
        lambda,
        bound: 1.0,
        objective,
        report,
    })
}

/// Atoms `(t z_r, ±(s_r/t) e_j)` of an optimal measure; its total variation is
/// the dual value and its integral is `Y`.
pub fn whitened_bidual_measure(ds: &WhitenedDataset, t: f64) -> Result<AtomicMeasure> {
    check_t(t)?;
    let k = ds.y.ncols();
    let pairs = ds
        .parts()
        .into_iter()
        .map(|p| {
            let mut c = DVector::zeros(k);
            c[p.class] = p.sign * p.norm / t;
            (p.direction * t, c)
        })
        .collect();
    AtomicMeasure::new(k, pairs)
}

/// Branch `[Xᵀv, 1, cᵀ]` whose output is `v cᵀ` for a nonnegative `v` in the
/// row space image of whitened `X`.
pub fn feature_branch(x: &DMatrix<f64>, feature: &DVector<f64>, coefficient: &DVector<f64>) -> Vec<DMatrix<f64>> {
    let w1 = x.transpose() * feature;
    vec![
        DMatrix::from_column_slice(w1.len(), 1, w1.as_slice()),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_row_slice(1, coefficient.len(), coefficient.as_slice()),
    ]
}

/// Rank-one data `X = c a0ᵀ`.
#[derive(Debug, Clone)]
pub struct RankOneDataset {
    c: DVector<f64>,
    a0: DVector<f64>,
}

impl RankOneDataset {
    pub fn new(c: DVector<f64>, a0: DVector<f64>) -> Result<Self> {
        if !c.iter().chain(a0.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entries".into()));
        }
        if c.norm() == 0.0 || a0.norm() == 0.0 {
            return Err(Error::InvalidInput("c and a0 must be nonzero".into()));
        }
        Ok(RankOneDataset { c, a0 })
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn a0(&self) -> &DVector<f64> {
        &self.a0
    }

    pub fn x(&self) -> DMatrix<f64> {
        &self.c * self.a0.transpose()
    }

    /// `(c)_+`.
    pub fn pos(&self) -> DVector<f64> {
        positive_part_vec(&self.c)
    }

    /// `(−c)_+`.
    pub fn neg(&self) -> DVector<f64> {
        positive_part_vec(&-&self.c)
    }

    /// `t ‖a0‖`, the largest reachable first-layer response.
    pub fn reach(&self, t: f64) -> f64 {
        t * self.a0.norm()
    }
}

/// `y = a (c)_+ + b (−c)_+ + r` with `r` orthogonal to both parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankOneDecomposition {
    pub a: f64,
    pub b: f64,
    pub residual: f64,
}

impl RankOneDecomposition {
    /// Whether `y` lies in the span of the two parts (relative `1e-9`).
    pub fn in_span(&self, y_norm: f64) -> bool {
        self.residual <= 1e-9 * y_norm.max(f64::MIN_POSITIVE)
    }
}

pub fn rank1_decompose(ds: &RankOneDataset, y: &DVector<f64>) -> Result<RankOneDecomposition> {
    if y.len() != ds.c.len() {
        return Err(Error::ShapeMismatch(format!(
            "y has length {} but c has {}",
            y.len(),
            ds.c.len()
        )));
    }
    let p = ds.pos();
    let q = ds.neg();
    let coef = |v: &DVector<f64>| {
        let n2 = v.norm_squared();
        if n2 > 0.0 {
            y.dot(v) / n2
        } else {
            0.0
        }
    };
    let a = coef(&p);
    let b = coef(&q);
    let residual = (y - &p * a - &q * b).norm();
    Ok(RankOneDecomposition { a, b, residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOneDual {
    /// An optimal `λ*`, or the unbounded ray direction when `bounded` is false.
    pub lambda: DVector<f64>,
    pub value: f64,
    pub bounded: bool,
}

/// Solves `max λᵀy  s.t. T |λᵀ(c)_+| ≤ 1, T |λᵀ(−c)_+| ≤ 1` with `T = t‖a0‖`.
///
/// The reachable features are `α (c)_+ + β (−c)_+` with `α, β ≥ 0` and
/// `α + β ≤ T`, which reduces the dual constraint to the two inequalities
/// above. A vanished part drops its constraint. Any component of `y` outside
/// the span of the parts makes the dual unbounded.
pub fn relu3_rank1_dual_solve(ds: &RankOneDataset, y: &DVector<f64>, t: f64) -> Result<RankOneDual> {
    check_t(t)?;
    let dec = rank1_decompose(ds, y)?;
    let p = ds.pos();
    let q = ds.neg();
    if !dec.in_span(y.norm()) {
        let r = y - &p * dec.a - &q * dec.b;
        let n = r.norm();
        return Ok(RankOneDual {
            lambda: r / n,
            value: f64::INFINITY,
            bounded: false,
        });
    }
    let big_t = ds.reach(t);
    let mut lambda = DVector::zeros(y.len());
    if dec.a != 0.0 {
        lambda += &p * (dec.a.signum() / (p.norm_squared() * big_t));
    }
    if dec.b != 0.0 {
        lambda += &q * (dec.b.signum() / (q.norm_squared() * big_t));
    }
    Ok(RankOneDual {
        lambda,
        value: (dec.a.abs() + dec.b.abs()) / big_t,
        bounded: true,
    })
}

/// Optimal primal value for rank-one data and scalar labels.
///
/// Equals the dual value `(|a| + |b|)/T` when `a b ≥ 0`; when the two parts
/// carry opposite signs the shared first layer forces two neurons and the
/// value is `(|a|^{2/3} + |b|^{2/3})^{3/2} / T`.
pub fn relu3_rank1_primal_value(ds: &RankOneDataset, y: &DVector<f64>, t: f64) -> Result<f64> {
    check_t(t)?;
    let dec = rank1_decompose(ds, y)?;
    if !dec.in_span(y.norm()) {
        return Err(Error::Infeasible("labels are not reachable by rank-one data".into()));
    }
    let big_t = ds.reach(t);
    let (a, b) = (dec.a.abs(), dec.b.abs());
    Ok(if dec.a * dec.b >= 0.0 {
        (a + b) / big_t
    } else {
        (a.powf(2.0 / 3.0) + b.powf(2.0 / 3.0)).powf(1.5) / big_t
    })
}

/// Optimal weights for rank-one data and scalar labels.
///
/// When `y` is carried by one part the network is a single neuron
/// `W1 = t s ρ0 e1ᵀ`, `w2 = e1` with `s = sign(|λᵀ(c)_+| − |λᵀ(−c)_+|)`; a tie in
/// `s` is resolved from `y`. When both parts are active with equal signs, one
/// neuron mixes them; with opposite signs, two neurons split them.
pub fn relu3_rank1_optimal_weights(
    ds: &RankOneDataset,
    y: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    t: f64,
    m1: usize,
) -> Result<ReluWeights3> {
    check_t(t)?;
    if y.ncols() != 1 || lambda.ncols() != 1 {
        return Err(Error::Unsupported(format!(
            "rank-one weights need scalar outputs, got K = {}",
            y.ncols()
        )));
    }
    if m1 == 0 {
        return Err(Error::InvalidSpec("width must be positive".into()));
    }
    let yv = y.column(0).into_owned();
    let lam = lambda.column(0).into_owned();
    if lam.len() != yv.len() {
        return Err(Error::ShapeMismatch(format!(
            "λ has length {} but y has {}",
            lam.len(),
            yv.len()
        )));
    }
    let dec = rank1_decompose(ds, &yv)?;
    if !dec.in_span(yv.norm()) {
        return Err(Error::Infeasible("labels are not reachable by rank-one data".into()));
    }
    let d = ds.a0.len();
    let big_t = ds.reach(t);
    let rho0 = &ds.a0 / ds.a0.norm();
    let (a, b) = (dec.a, dec.b);

    if a == 0.0 && b == 0.0 {
        return Ok(ReluWeights3 {
            w1: DMatrix::zeros(d, m1),
            w2: DMatrix::zeros(m1, 1),
            w3: DMatrix::zeros(1, 1),
        });
    }

    if a == 0.0 || b == 0.0 {
        let gap = lam.dot(&ds.pos()).abs() - lam.dot(&ds.neg()).abs();
        let from_y = if a != 0.0 { 1.0 } else { -1.0 };
        let s = if gap != 0.0 && gap.signum() == from_y { gap.signum() } else { from_y };
        let coeff = if s > 0.0 { a } else { b };
        let mut w1 = DMatrix::zeros(d, m1);
        w1.set_column(0, &(&rho0 * (t * s)));
        let mut w2 = DMatrix::zeros(m1, 1);
        w2[(0, 0)] = 1.0;
        return Ok(ReluWeights3 {
            w1,
            w2,
            w3: DMatrix::from_element(1, 1, coeff / big_t),
        });
    }

    if m1 < 2 {
        return Err(Error::InvalidSpec("both label parts are active; width 2 is needed".into()));
    }
    let (aa, bb) = (a.abs(), b.abs());
    let mut u = DVector::zeros(m1);
    if a * b > 0.0 {
        let bp = big_t * (aa / (aa + bb)).sqrt();
        let bm = big_t * (bb / (aa + bb)).sqrt();
        u[0] = bp;
        u[1] = -bm;
        let mut w2 = DMatrix::zeros(m1, 1);
        w2[(0, 0)] = bp / big_t;
        w2[(1, 0)] = bm / big_t;
        Ok(ReluWeights3 {
            w1: &rho0 * u.transpose() / ds.a0.norm(),
            w2,
            w3: DMatrix::from_element(1, 1, a.signum() * (aa + bb) / big_t),
        })
    } else {
        let norm = (aa.powf(2.0 / 3.0) + bb.powf(2.0 / 3.0)).sqrt();
        let bp = big_t * aa.powf(1.0 / 3.0) / norm;
        let bm = big_t * bb.powf(1.0 / 3.0) / norm;
        u[0] = bp;
        u[1] = -bm;
        let mut w2 = DMatrix::zeros(m1, 2);
        w2[(0, 0)] = 1.0;
        w2[(1, 1)] = 1.0;
        Ok(ReluWeights3 {
            w1: &rho0 * u.transpose() / ds.a0.norm(),
            w2,
            w3: DMatrix::from_column_slice(2, 1, &[a / bp, b / bm]),
        })
    }
}

/// Samples one dual constraint point `v = ((…(X W1)_+ … W_{L−2})_+ w_{L−1})_+`
/// with `W_l` on the Frobenius sphere of radius `net.scale` and `w_{L−1}` on
/// the unit sphere.
fn sample_constraint_point<R: rand::Rng + ?Sized>(rng: &mut R, net: &NetSpec, x: &DMatrix<f64>) -> DVector<f64> {
    let l = net.depth;
    let mut a = x.clone();
    for i in 1..=l - 2 {
        let w = sample::sphere_matrix(rng, net.widths[i - 1], net.widths[i], net.scale);
        a = positive_part(&(a * w));
    }
    let w = sample::sphere_matrix(rng, net.widths[l - 2], 1, 1.0);
    positive_part(&(a * w)).column(0).into_owned()
}

const SAMPLE_CHUNK: usize = 256;

/// `count` constraint points as the columns of an `N × count` matrix;
/// deterministic in `seed` regardless of thread count.
pub fn relu_constraint_samples(net: &NetSpec, x: &DMatrix<f64>, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    check_sampling_spec(net, x)?;
    let chunks = count.div_ceil(SAMPLE_CHUNK);
    let cols: Vec<DVector<f64>> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
            (0..len).map(move |_| sample_constraint_point(&mut rng, net, x)).collect::<Vec<_>>()
        })
        .collect();
    let mut out = DMatrix::zeros(x.nrows(), count);
    for (j, v) in cols.iter().enumerate() {
        out.set_column(j, v);
    }
    Ok(out)
}

fn check_sampling_spec(net: &NetSpec, x: &DMatrix<f64>) -> Result<()> {
    net.validate()?;
    if net.activation != Activation::Relu {
        return Err(Error::InvalidSpec("feasibility sampling needs a ReLU network".into()));
    }
    if net.depth < 3 {
        return Err(Error::InvalidSpec("feasibility sampling needs depth ≥ 3".into()));
    }
    if x.ncols() != net.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "X has {} columns but the network expects {}",
            x.ncols(),
            net.input_dim()
        )));
    }
    Ok(())
}

/// Largest `‖Λᵀv‖₂` over the columns of `samples`.
fn max_response(lambda: &DMatrix<f64>, samples: &DMatrix<f64>) -> (f64, usize) {
    let resp = lambda.transpose() * samples;
    resp.column_iter()
        .map(|c| c.norm())
        .enumerate()
        .fold((0.0, 0), |best, (i, v)| if v > best.0 { (v, i) } else { best })
}

/// Sampled check of `max_v ‖Λᵀv‖₂ ≤ bound`.
///
/// A report with `falsified = false` only means no violation was found.
pub fn relu_dual_feasibility_sample(
    lambda: &DMatrix<f64>,
    net: &NetSpec,
    x: &DMatrix<f64>,
    bound: f64,
    trials: usize,
    seed: u64,
) -> Result<FeasibilityReport> {
    check_sampling_spec(net, x)?;
    if lambda.nrows() != x.nrows() || lambda.ncols() != net.output_dim() {
        return Err(Error::ShapeMismatch(format!(
            "Λ is {}×{}, expected {}×{}",
            lambda.nrows(),
            lambda.ncols(),
            x.nrows(),
            net.output_dim()
        )));
    }
    let chunks = trials.div_ceil(SAMPLE_CHUNK);
    let max_value = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = SAMPLE_CHUNK.min(trials - c * SAMPLE_CHUNK);
            (0..len)
                .map(|_| (lambda.transpose() * sample_constraint_point(&mut rng, net, x)).norm())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(FeasibilityReport {
        max_value,
        samples_tested: trials,
        falsified: max_value > bound * (1.0 + FALSIFY_RTOL),
        method: "sampled".into(),
    })
}

/// Settings for [`parallel_relu_weak_duality_check`].
#[derive(Debug, Clone)]
pub struct BracketOptions {
    pub depth: usize,
    /// Hidden width of each branch.
    pub hidden: usize,
    pub branches: usize,
    /// Constraint samples for the dual search and again for the final check.
    pub trials: usize,
    /// Projected subgradient iterations per start.
    pub steps: usize,
    /// Gradient steps per penalty stage when training the primal network.
    pub train_steps: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Extra starting certificates for the dual search.
    pub seeds: Vec<DMatrix<f64>>,
    /// Use this network for the upper bound instead of training one.
    pub network: Option<Network>,
}

impl BracketOptions {
    pub fn new(depth: usize) -> Self {
        BracketOptions {
            depth,
            hidden: 4,
            branches: 8,
            trials: 10_000,
            steps: 2000,
            train_steps: 2000,
            restarts: 4,
            seed: 0,
            seeds: Vec::new(),
            network: None,
        }
    }
}

/// Bracket `lower ≤ P = D ≤ upper` for a deep parallel ReLU network.
#[derive(Debug, Clone)]
pub struct DualityBracket {
    pub lower: f64,
    pub upper: f64,
    /// Certificate behind `lower`, normalised to `tr(ΛᵀY) = 1`.
    pub lambda: DMatrix<f64>,
    /// `max ‖Λᵀv‖₂` over every checked constraint point.
    pub constraint_max: f64,
    pub samples_tested: usize,
    /// `‖f(X) − Y‖_F` of the network behind `upper`.
    pub fit_residual: f64,
}

impl DualityBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn to_gap_report(&self) -> GapReport {
        GapReport::new(self.upper, self.lower, Vec::new())
    }
}

/// `(L/2) Σ_j Π_l ‖W_{l,j}‖_F`, the rescaled objective of a parallel network.
pub fn parallel_relu_objective(net: &Network) -> f64 {
    let l = net.depth() as f64;
    0.5 * l * net.branches.iter().map(|b| b.iter().map(|w| w.norm()).product::<f64>()).sum::<f64>()
}

/// Penultimate features of each branch after rescaling its first `L − 1`
/// layers to unit norm; zero branches are skipped.
fn normalized_branch_features(net: &Network, x: &DMatrix<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..net.branches.len())
        .filter_map(|b| {
            let branch = &net.branches[b];
            let scale: f64 = branch[..branch.len() - 1].iter().map(|w| w.norm()).product();
            (scale > 0.0).then(|| net.branch_features(x, b).column(0) / scale)
        })
        .collect();
    let mut out = DMatrix::zeros(x.nrows(), cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Projected subgradient descent on `max_s ‖Λᵀv_s‖` over `tr(ΛᵀY) = 1`.
fn subgradient_search(start: &DMatrix<f64>, y: &DMatrix<f64>, samples: &DMatrix<f64>, steps: usize) -> DMatrix<f64> {
    let y2 = y.norm_squared();
    let mut lambda = start.clone();
    let mut best = lambda.clone();
    let (mut best_val, _) = max_response(&lambda, samples);
    let step0 = 0.5 * start.norm();
    for k in 0..steps {
        let (val, idx) = max_response(&lambda, samples);
        if val < best_val {
            best_val = val;
            best = lambda.clone();
        }
        if val == 0.0 {
            break;
        }
        let v = samples.column(idx);
        let r = lambda.transpose() * v;
        let mut g = v * r.transpose() / val;
        g -= y * (g.dot(y) / y2);
        let gn = g.norm();
        if gn == 0.0 {
            break;
        }
        lambda -= g * (step0 / (gn * ((k + 1) as f64).sqrt()));
    }
    let (val, _) = max_response(&lambda, samples);
    if val < best_val {
        best = lambda;
    }
    best
}

/// Brackets the parallel ReLU optimum.
///
/// The upper bound is the rescaled objective of a feasible network (trained
/// with the `L`-th power regulariser and a polished last layer). The lower
/// bound is `(L/2) tr(ΛᵀY) / M` for a certificate `Λ` found by subgradient
/// search on sampled constraints, where `M` is the largest response over the
/// search samples, a fresh sample set and the network's own branch features.
pub fn parallel_relu_weak_duality_check(ds: &Dataset, opts: &BracketOptions) -> Result<DualityBracket> {
    let (n, d, k) = (ds.n(), ds.d(), ds.k());
    let half_l = 0.5 * opts.depth as f64;
    if opts.depth < 3 {
        return Err(Error::InvalidSpec("parallel ReLU bracket needs depth ≥ 3".into()));
    }
    if ds.y().norm() == 0.0 {
        return Ok(DualityBracket {
            lower: 0.0,
            upper: 0.0,
            lambda: DMatrix::zeros(n, k),
            constraint_max: 0.0,
            samples_tested: 0,
            fit_residual: 0.0,
        });
    }

    let spec = NetSpec::parallel(opts.depth, d, k, opts.hidden, opts.branches, Activation::Relu, 1.0)?;
    let net = match &opts.network {
        Some(net) => net.clone(),
        None => {
            let mut config = TrainConfig::new(spec.clone(), Regularizer::FrobeniusPowL);
            config.steps = opts.train_steps;
            config.restarts = opts.restarts;
            config.seed = opts.seed;
            trainer::train(&config, ds)?.weights
        }
    };
    let fit_residual = (net.forward(ds.x())? - ds.y()).norm();
    let upper = parallel_relu_objective(&net);

    // Constraint points use unit-norm layers, independent of the trained widths.
    let sample_spec = NetSpec::new(
        spec.widths.clone(),
        Architecture::Parallel { branches: 1 },
        Activation::Relu,
        1.0,
    )?;
    let search = relu_constraint_samples(&sample_spec, ds.x(), opts.trials, opts.seed)?;
    let fresh = relu_constraint_samples(&sample_spec, ds.x(), opts.trials, opts.seed.wrapping_add(1))?;
    let own = normalized_branch_features(&net, ds.x());

    let y = ds.y();
    let mut starts = vec![y / y.norm_squared()];
    for s in &opts.seeds {
        if s.shape() != y.shape() {
            return Err(Error::ShapeMismatch(format!("seed certificate is {:?}, expected {:?}", s.shape(), y.shape())));
        }
        let obj = s.dot(y);
        if obj > 0.0 {
            starts.push(s / obj);
        }
    }
    let mut candidates = starts.clone();
    candidates.extend(starts.iter().map(|s| subgradient_search(s, y, &search, opts.steps)));

    let overall_max = |lam: &DMatrix<f64>| {
        [&search, &fresh, &own]
            .iter()
            .map(|m| max_response(lam, m).0)
            .fold(0.0, f64::max)
    };
    let (lambda, constraint_max) = candidates
        .into_iter()
        .map(|lam| {
            let m = overall_max(&lam);
            (lam, m)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");
    if constraint_max == 0.0 {
        return Err(Error::Numerical("certificate has zero response on every sample".into()));
    }
    let lower = half_l * lambda.dot(y) / constraint_max;
    Ok(DualityBracket {
        lower,
        upper,
        lambda,
        constraint_max,
        samples_tested: 2 * opts.trials + own.ncols(),
        fit_residual,
    })
}
