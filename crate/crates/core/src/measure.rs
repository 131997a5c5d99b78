//! Caratheodory reduction of finite atomic measures.
//!
//! A positive measure on `R^N` with more than `N + 1` atoms has an affine
//! dependence among its lifted points `(z_i, 1)`. Moving the weights along
//! that dependence keeps both the integral and the total mass, and can be
//! continued until one weight reaches zero. Repeating this leaves at most
//! `N + 1` affinely independent atoms. Vector measures are handled by lifting
//! each atom to the rank-one matrix `z_i u_iᵀ` with weight `‖c_i‖₂`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matfun;
use crate::network::{Activation, Architecture, NetSpec, Network};

/// One atom: a feature point in `R^N` carrying a coefficient in `R^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub feature: DVector<f64>,
    pub coefficient: DVector<f64>,
    /// Index of the atom in the measure it was reduced from.
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    pub atoms: Vec<Atom>,
    /// Output dimension of the coefficients.
    pub k: usize,
}

impl AtomicMeasure {
    /// Builds a measure from `(feature, coefficient)` pairs; `source` is the
    /// position in `pairs`.
    pub fn new(k: usize, pairs: Vec<(DVector<f64>, DVector<f64>)>) -> Result<Self> {
        let atoms = pairs
            .into_iter()
            .enumerate()
            .map(|(source, (feature, coefficient))| Atom {
                feature,
                coefficient,
                source,
            })
            .collect();
        let m = AtomicMeasure { atoms, k };
        m.validate()?;
        Ok(m)
    }

    pub fn empty(k: usize) -> Self {
        AtomicMeasure {
            atoms: Vec::new(),
            k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.atoms.first().map(|a| a.feature.len());
        for (i, a) in self.atoms.iter().enumerate() {
            if Some(a.feature.len()) != n || a.coefficient.len() != self.k {
                return Err(Error::ShapeMismatch(format!(
                    "atom {i} has feature length {} and coefficient length {}, expected {:?} and {}",
                    a.feature.len(),
                    a.coefficient.len(),
                    n,
                    self.k
                )));
            }
            if !a.feature.iter().chain(a.coefficient.iter()).all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(format!("atom {i} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.atoms.first().map(|a| a.feature.len())
    }

    /// `Σ_i ‖c_i‖₂`.
    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.coefficient.norm()).sum()
    }

    /// `Σ_i z_i c_iᵀ` as an `N × K` matrix (`0 × K` when empty).
    pub fn integral(&self) -> DMatrix<f64> {
        let n = self.feature_dim().unwrap_or(0);
        let mut out = DMatrix::zeros(n, self.k);
        for a in &self.atoms {
            out += &a.feature * a.coefficient.transpose();
        }
        out
    }
}

/// Relative size below which a weight is treated as exhausted.
const DROP_TOL: f64 = 1e-14;

/// Null vector of the lifted matrix `[(z_i, 1)]_i` restricted to `idx`, if the
/// lifted points are affinely dependent.
fn affine_dependence(points: &[DVector<f64>], idx: &[usize]) -> Result<Option<DVector<f64>>> {
    let dim = points[idx[0]].len();
    let cols = idx.len();
    let rows = (dim + 1).max(cols);
    // Zero rows make the matrix square so the SVD returns a full V.
    let mut m = DMatrix::zeros(rows, cols);
    for (c, &i) in idx.iter().enumerate() {
        m.view_mut((0, c), (dim, 1)).copy_from(&points[i]);
        m[(dim, c)] = 1.0;
    }
    let svd = matfun::svd(&m)?;
    let top = svd.sigma[0];
    let last = cols - 1;
    if svd.sigma[last] <= matfun::RANK_RTOL * top {
        Ok(Some(svd.v.column(last).into_owned()))
    } else {
        Ok(None)
    }
}

/// Core reduction on lifted points; returns surviving `(index, weight)` pairs
/// in index order.
fn reduce_points(points: &[DVector<f64>], weights: &[f64]) -> Result<Vec<(usize, f64)>> {
    let mut w = weights.to_vec();
    let scale = w.iter().cloned().fold(0.0, f64::max);
    let mut active: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    if active.is_empty() {
        return Ok(Vec::new());
    }
    let dim = points[active[0]].len();
    loop {
        // Work on dim + 2 atoms at a time while there are too many; a
        // dependence among them is guaranteed.
        let window: Vec<usize> = if active.len() > dim + 1 {
            active[..dim + 2].to_vec()
        } else {
            active.clone()
        };
        let Some(mut delta) = affine_dependence(points, &window)? else {
            break;
        };
        if !delta.iter().any(|&d| d > 0.0) {
            delta.neg_mut();
        }
        // First weight to hit zero along the direction; ties go to the
        // smallest atom index.
        let mut step = f64::INFINITY;
        let mut hit = usize::MAX;
        for (pos, &i) in window.iter().enumerate() {
            if delta[pos] > 0.0 {
                let s = w[i] / delta[pos];
                if s < step {
                    step = s;
                    hit = i;
                }
            }
        }
        if hit == usize::MAX {
            return Err(Error::Numerical("degenerate affine dependence".into()));
        }
        for (pos, &i) in window.iter().enumerate() {
            w[i] -= step * delta[pos];
        }
        w[hit] = 0.0;
        active.retain(|&i| w[i] > DROP_TOL * scale);
    }
    Ok(active.into_iter().map(|i| (i, w[i])).collect())
}

/// Reduces a positive measure on `R^N` to at most `N + 1` atoms with the same
/// integral and total weight.
pub fn caratheodory_reduce_positive(
    features: &[DVector<f64>],
    weights: &[f64],
) -> Result<AtomicMeasure> {
    if features.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} features but {} weights",
            features.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidInput(format!("weights must be positive, got {w}")));
    }
    let pairs: Vec<_> = features
        .iter()
        .zip(weights)
        .map(|(z, &w)| (z.clone(), DVector::from_element(1, w)))
        .collect();
    let input = AtomicMeasure::new(1, pairs)?;
    if input.is_empty() {
        return Ok(input);
    }
    let kept = reduce_points(features, weights)?;
    Ok(AtomicMeasure {
        atoms: kept
            .into_iter()
            .map(|(i, w)| Atom {
                feature: features[i].clone(),
                coefficient: DVector::from_element(1, w),
                source: i,
            })
            .collect(),
        k: 1,
    })
}

/// Reduces a signed vector measure to at most `K·N + 1` atoms with the same
/// integral `Σ z_i c_iᵀ`.
///
/// Atoms with zero coefficient are dropped and atoms with identical features
/// are merged first, so the total variation never increases; after that step
/// it is preserved exactly.
pub fn caratheodory_reduce_vector(measure: &AtomicMeasure) -> Result<AtomicMeasure> {
    measure.validate()?;
    let mut merged: Vec<Atom> = Vec::new();
    for atom in &measure.atoms {
        match merged.iter_mut().find(|m| m.feature == atom.feature) {
            Some(m) => m.coefficient += &atom.coefficient,
            None => merged.push(atom.clone()),
        }
    }
    merged.retain(|a| a.coefficient.norm() > 0.0);
    if merged.is_empty() {
        return Ok(AtomicMeasure::empty(measure.k));
    }

    let lifted: Vec<DVector<f64>> = merged
        .iter()
        .map(|a| {
            let u = &a.coefficient / a.coefficient.norm();
            let outer = &a.feature * u.transpose();
            DVector::from_column_slice(outer.as_slice())
        })
        .collect();
    let weights: Vec<f64> = merged.iter().map(|a| a.coefficient.norm()).collect();
    let kept = reduce_points(&lifted, &weights)?;
    Ok(AtomicMeasure {
        atoms: kept
            .into_iter()
            .map(|(i, w)| {
                let a = &merged[i];
                Atom {
                    feature: a.feature.clone(),
                    coefficient: &a.coefficient * (w / a.coefficient.norm()),
                    source: a.source,
                }
            })
            .collect(),
        k: measure.k,
    })
}

/// A parallel network with one branch per atom of a reduced measure.
#[derive(Debug, Clone)]
pub struct FiniteRepresentation {
    pub spec: NetSpec,
    pub network: Network,
    pub measure: AtomicMeasure,
}

/// Reduces `measure` and turns each surviving atom into a branch through
/// `builder`.
///
/// The builder receives the atom (its `source` indexes the original measure)
/// and returns the branch layers. For an empty measure the network is a single
/// zero branch `d → 1 → K`.
pub fn finite_representation_of_network<F>(
    measure: &AtomicMeasure,
    activation: Activation,
    d: usize,
    builder: F,
) -> Result<FiniteRepresentation>
where
    F: Fn(&Atom) -> Result<Vec<DMatrix<f64>>>,
{
    let reduced = caratheodory_reduce_vector(measure)?;
    let branches: Vec<Vec<DMatrix<f64>>> = if reduced.is_empty() {
        vec![vec![DMatrix::zeros(d, 1), DMatrix::zeros(1, measure.k)]]
    } else {
        reduced.atoms.iter().map(&builder).collect::<Result<_>>()?
    };
    let network = Network::parallel(activation, branches);
    let (nd, nk) = network.dims()?;
    if nd != d || nk != measure.k {
        return Err(Error::ShapeMismatch(format!(
            "builder produced a {nd}→{nk} network, expected {d}→{}",
            measure.k
        )));
    }
    let mut widths: Vec<usize> = vec![d];
    widths.extend(network.branches[0].iter().map(|w| w.ncols()));
    let spec = NetSpec::new(
        widths,
        Architecture::Parallel {
            branches: network.branches.len(),
        },
        activation,
        1.0,
    )?;
    Ok(FiniteRepresentation {
        spec,
        network,
        measure: reduced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn random_positive(rng: &mut ChaCha8Rng, count: usize, n: usize) -> (Vec<DVector<f64>>, Vec<f64>) {
        let feats = (0..count)
            .map(|_| sample::gaussian_matrix(rng, n, 1).column(0).into_owned())
            .collect();
        let weights = (0..count).map(|_| rng.random_range(0.1..2.0)).collect();
        (feats, weights)
    }

    fn weighted_sum(feats: &[DVector<f64>], weights: &[f64]) -> DVector<f64> {
        feats
            .iter()
            .zip(weights)
            .fold(DVector::zeros(feats[0].len()), |acc, (z, w)| acc + z * *w)
    }

    #[test]
    fn collinear_atoms_reduce() {
        let feats = vec![v(&[0.0]), v(&[1.0]), v(&[2.0])];
        let out = caratheodory_reduce_positive(&feats, &[1.0, 1.0, 1.0]).unwrap();
        assert!(out.len() <= 2);
        let total: f64 = out.atoms.iter().map(|a| a.coefficient[0]).sum();
        assert!((total - 3.0).abs() < 1e-12);
        assert!((out.integral()[(0, 0)] - 3.0).abs() < 1e-12);
        // The dependence (1, −2, 1) exhausts atoms 0 and 2 together.
        assert_eq!(out.len(), 1);
        assert_eq!(out.atoms[0].feature, v(&[1.0]));
    }

    #[test]
    fn independent_atoms_are_unchanged() {
        let feats = vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let weights = [0.5, 1.5, 2.0];
        let out = caratheodory_reduce_positive(&feats, &weights).unwrap();
        assert_eq!(out.len(), 3);
        for (a, (z, w)) in out.atoms.iter().zip(feats.iter().zip(weights)) {
            assert_eq!(&a.feature, z);
            assert_eq!(a.coefficient[0], w);
        }
    }

    #[test]
    fn fifty_atoms_in_r5() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let (feats, weights) = random_positive(&mut rng, 50, 5);
        let out = caratheodory_reduce_positive(&feats, &weights).unwrap();
        assert!(out.len() <= 6);
        assert!(out.atoms.iter().all(|a| a.coefficient[0] > 0.0));
        let before = weighted_sum(&feats, &weights);
        let after = out.integral().column(0).into_owned();
        assert!((before - after).norm() <= 1e-8 * 50.0);
        let total: f64 = out.atoms.iter().map(|a| a.coefficient[0]).sum();
        assert!((total - weights.iter().sum::<f64>()).abs() <= 1e-10 * 50.0);
    }

    #[test]
    fn nonpositive_weight_is_rejected() {
        let feats = vec![v(&[0.0]), v(&[1.0])];
        assert!(matches!(
            caratheodory_reduce_positive(&feats, &[1.0, 0.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(caratheodory_reduce_positive(&feats, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn vector_single_atom_unchanged() {
        let m = AtomicMeasure::new(2, vec![(v(&[1.0, 2.0]), v(&[3.0, -1.0]))]).unwrap();
        assert_eq!(caratheodory_reduce_vector(&m).unwrap(), m);
    }

    #[test]
    fn opposite_coefficients_on_one_feature_cancel() {
        let c = v(&[1.0, 2.0]);
        let m = AtomicMeasure::new(2, vec![(v(&[1.0, 0.0]), c.clone()), (v(&[1.0, 0.0]), -c)]).unwrap();
        let out = caratheodory_reduce_vector(&m).unwrap();
        assert!(out.is_empty());
        assert_eq!(out.total_variation(), 0.0);
        assert!(m.total_variation() > 4.0);
    }

    #[test]
    fn zero_coefficients_are_dropped() {
        let m = AtomicMeasure::new(
            1,
            vec![(v(&[1.0]), v(&[0.0])), (v(&[2.0]), v(&[1.0]))],
        )
        .unwrap();
        let out = caratheodory_reduce_vector(&m).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.atoms[0].source, 1);
    }

    #[test]
    fn thirty_vector_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let pairs = (0..30)
            .map(|_| {
                (
                    sample::gaussian_matrix(&mut rng, 4, 1).column(0).into_owned(),
                    sample::gaussian_matrix(&mut rng, 2, 1).column(0).into_owned(),
                )
            })
            .collect();
        let m = AtomicMeasure::new(2, pairs).unwrap();
        let out = caratheodory_reduce_vector(&m).unwrap();
        assert!(out.len() <= 9);
        assert!((out.integral() - m.integral()).norm() <= 1e-8 * m.integral().norm().max(1.0));
        assert!(out.total_variation() <= m.total_variation() + 1e-10);
    }

    #[test]
    fn mismatched_atoms_are_rejected() {
        assert!(AtomicMeasure::new(1, vec![(v(&[1.0]), v(&[1.0])), (v(&[1.0, 2.0]), v(&[1.0]))]).is_err());
        assert!(AtomicMeasure::new(2, vec![(v(&[1.0]), v(&[1.0]))]).is_err());
    }

    #[test]
    fn linear_atoms_give_parallel_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (n, d, k, count) = (4, 3, 2, 20);
        let x = sample::gaussian_matrix(&mut rng, n, d);
        let thetas: Vec<DMatrix<f64>> = (0..count).map(|_| sample::gaussian_matrix(&mut rng, d, 1)).collect();
        let coefs: Vec<DVector<f64>> = (0..count)
            .map(|_| sample::gaussian_matrix(&mut rng, k, 1).column(0).into_owned())
            .collect();
        let y = thetas
            .iter()
            .zip(&coefs)
            .fold(DMatrix::zeros(n, k), |acc, (th, c)| acc + &x * th * c.transpose());
        let m = AtomicMeasure::new(
            k,
            thetas
                .iter()
                .zip(&coefs)
                .map(|(th, c)| ((&x * th).column(0).into_owned(), c.clone()))
                .collect(),
        )
        .unwrap();
        let rep = finite_representation_of_network(&m, Activation::Linear, d, |a| {
            Ok(vec![thetas[a.source].clone(), DMatrix::from_row_slice(1, k, a.coefficient.as_slice())])
        })
        .unwrap();
        assert!(rep.network.branches.len() <= k * n + 1);
        assert_eq!(rep.spec.branch_count(), rep.network.branches.len());
        let out = rep.network.forward(&x).unwrap();
        assert!((out - &y).norm() <= 1e-6 * y.norm().max(1.0));
    }

    #[test]
    fn empty_measure_gives_zero_network() {
        let rep = finite_representation_of_network(&AtomicMeasure::empty(2), Activation::Relu, 3, |_| {
            unreachable!("no atoms")
        })
        .unwrap();
        let out = rep.network.forward(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(out, DMatrix::zeros(3, 2));
    }

    #[test]
    fn builder_errors_propagate() {
        let m = AtomicMeasure::new(1, vec![(v(&[1.0]), v(&[1.0]))]).unwrap();
        let res = finite_representation_of_network(&m, Activation::Linear, 1, |_| {
            Err(Error::InvalidSpec("nope".into()))
        });
        assert!(matches!(res, Err(Error::InvalidSpec(_))));
    }

    fn positive_instance() -> impl Strategy<Value = (Vec<DVector<f64>>, Vec<f64>)> {
        (1usize..9, 1usize..40, any::<u64>()).prop_map(|(n, count, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_positive(&mut rng, count, n)
        })
    }

    fn vector_instance() -> impl Strategy<Value = AtomicMeasure> {
        (1usize..6, 1usize..4, 1usize..30, any::<u64>()).prop_map(|(n, k, count, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs = (0..count)
                .map(|_| {
                    (
                        sample::gaussian_matrix(&mut rng, n, 1).column(0).into_owned(),
                        sample::gaussian_matrix(&mut rng, k, 1).column(0).into_owned(),
                    )
                })
                .collect();
            AtomicMeasure::new(k, pairs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn positive_reduction_invariants((feats, weights) in positive_instance()) {
            let n = feats[0].len();
            let out = caratheodory_reduce_positive(&feats, &weights).unwrap();
            prop_assert!(out.len() <= n + 1);
            let before = weighted_sum(&feats, &weights);
            let after = out.integral().column(0).into_owned();
            prop_assert!((&before - after).norm() <= 1e-8 * before.norm().max(1.0));
            let total: f64 = out.atoms.iter().map(|a| a.coefficient[0]).sum();
            let want: f64 = weights.iter().sum();
            prop_assert!((total - want).abs() <= 1e-10 * want.max(1.0));

            let again_feats: Vec<_> = out.atoms.iter().map(|a| a.feature.clone()).collect();
            let again_w: Vec<_> = out.atoms.iter().map(|a| a.coefficient[0]).collect();
            let again = caratheodory_reduce_positive(&again_feats, &again_w).unwrap();
            prop_assert_eq!(again.len(), out.len());
            for (a, b) in again.atoms.iter().zip(&out.atoms) {
                prop_assert_eq!(&a.feature, &b.feature);
                prop_assert_eq!(a.coefficient[0], b.coefficient[0]);
            }
        }

        #[test]
        fn vector_reduction_invariants(m in vector_instance()) {
            let n = m.feature_dim().unwrap();
            let out = caratheodory_reduce_vector(&m).unwrap();
            prop_assert!(out.len() <= m.k * n + 1);
            let before = m.integral();
            prop_assert!((out.integral() - &before).norm() <= 1e-8 * before.norm().max(1.0));
            prop_assert!(out.total_variation() <= m.total_variation() + 1e-10 * m.total_variation().max(1.0));
            let again = caratheodory_reduce_vector(&out).unwrap();
            prop_assert_eq!(again.len(), out.len());
            prop_assert!((again.integral() - out.integral()).norm() <= 1e-12 * before.norm().max(1.0));
            prop_assert!((again.total_variation() - out.total_variation()).abs() <= 1e-12 * out.total_variation().max(1.0));
        }
    }
}
