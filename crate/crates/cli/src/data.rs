//! Dataset sources: matrix files and seeded synthetic generators.

use nalgebra::{DMatrix, DVector};
use netdual::linear::Dataset;
use netdual::measure::AtomicMeasure;
use netdual::relu::{whitened_bidual_measure, WhitenedDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{Settings, Synthetic};
use crate::io::read_matrices;
use crate::CliError;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Data matrices `(X, Y)` for a synthetic generator.
pub fn synthetic_data(kind: Synthetic, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        Synthetic::Diag => (
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
        ),
        Synthetic::WhitenedOnehot => (
            DMatrix::identity(4, 4),
            DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]),
        ),
        Synthetic::Rank1 => {
            // Labels a (c)_+ + b (−c)_+ with a, b of one sign stay in the
            // strong-duality regime.
            let mut c = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
            c[0] = c[0].abs() + 0.5;
            c[1] = -(c[1].abs() + 0.5);
            let a0 = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let a = s * rng.random_range(0.5..2.0);
            let b = s * rng.random_range(0.5..2.0);
            let y = c.map(|v| if v > 0.0 { a * v } else { -b * v });
            (
                &c * a0.transpose(),
                DMatrix::from_column_slice(4, 1, y.as_slice()),
            )
        }
        Synthetic::Random => {
            let x = gaussian(&mut rng, 6, 4);
            let w0 = gaussian(&mut rng, 4, 3);
            let y = &x * w0;
            (x, y)
        }
    }
}

/// Loads `(X, Y)` from `--data` (two blocks) or a synthetic generator,
/// defaulting to the diagonal example.
pub fn load_pair(s: &Settings) -> Result<(DMatrix<f64>, DMatrix<f64>), CliError> {
    match &s.data {
        Some(path) => {
            let mut blocks = read_matrices(path)?;
            if blocks.len() != 2 {
                return Err(CliError::usage(format!(
                    "{} must hold two blocks (X then Y), found {}",
                    path.display(),
                    blocks.len()
                )));
            }
            let y = blocks.pop().expect("two blocks");
            let x = blocks.pop().expect("two blocks");
            Ok((x, y))
        }
        None => Ok(synthetic_data(
            s.synthetic.unwrap_or(Synthetic::Diag),
            s.seed,
        )),
    }
}

pub fn load_dataset(s: &Settings) -> Result<Dataset, CliError> {
    let (x, y) = load_pair(s)?;
    Ok(Dataset::new(x, y)?)
}

/// Reads a measure from features `Z` (`N×M`, one atom per column) and
/// coefficients `C` (`M×K`), so that the integral is `Z C`.
pub fn measure_from_blocks(z: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<AtomicMeasure, CliError> {
    if z.ncols() != c.nrows() {
        return Err(CliError::usage(format!(
            "{} atoms in the features block but {} in the coefficients block",
            z.ncols(),
            c.nrows()
        )));
    }
    let pairs = (0..z.ncols())
        .map(|i| (z.column(i).into_owned(), c.row(i).transpose()))
        .collect();
    Ok(AtomicMeasure::new(c.ncols(), pairs)?)
}

/// Inverse of [`measure_from_blocks`].
pub fn measure_to_blocks(m: &AtomicMeasure, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut z = DMatrix::zeros(n, m.len());
    let mut c = DMatrix::zeros(m.len(), m.k);
    for (i, atom) in m.atoms.iter().enumerate() {
        z.set_column(i, &atom.feature);
        c.set_row(i, &atom.coefficient.transpose());
    }
    (z, c)
}

/// 50 Gaussian atoms in `R^5` with scalar coefficients.
pub fn synthetic_measure(seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (gaussian(&mut rng, 5, 50), gaussian(&mut rng, 50, 1))
}

/// Measure for `sparsify`: a two-block file, the random generator, or the
/// bi-dual measure of the whitened example at scale `t`.
pub fn load_measure(s: &Settings) -> Result<(AtomicMeasure, usize), CliError> {
    let (z, c) = match (&s.data, s.synthetic) {
        (Some(path), _) => {
            let blocks = read_matrices(path)?;
            if blocks.len() != 2 {
                return Err(CliError::usage(format!(
                    "{} must hold two blocks (features then coefficients), found {}",
                    path.display(),
                    blocks.len()
                )));
            }
            (blocks[0].clone(), blocks[1].clone())
        }
        (None, None | Some(Synthetic::Random)) => synthetic_measure(s.seed),
        (None, Some(Synthetic::WhitenedOnehot)) => {
            let (x, y) = synthetic_data(Synthetic::WhitenedOnehot, s.seed);
            let m = whitened_bidual_measure(&WhitenedDataset::new(x, y)?, s.t)?;
            let n = m.feature_dim().unwrap_or(4);
            return Ok((m, n));
        }
        (None, Some(kind)) => {
            return Err(CliError::usage(format!(
                "sparsify supports the random and whitened-onehot generators, not {kind:?}"
            )))
        }
    };
    let m = measure_from_blocks(&z, &c)?;
    Ok((m, z.nrows()))
}
