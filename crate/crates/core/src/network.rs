//! Network specifications, forward evaluation and shared result types.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfun::positive_part;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
}

impl Activation {
    pub fn apply(self, z: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Linear => z.clone(),
            Activation::Relu => positive_part(z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Standard,
    /// `branches` scalar-output subnetworks summed at the output.
    Parallel { branches: usize },
}

/// Shape and constraint description of a network.
///
/// `widths` lists `m_0, …, m_L` with `m_0 = d` and `m_L = K`. For the parallel
/// architecture the widths are per branch and `m_{L−1} = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub depth: usize,
    pub widths: Vec<usize>,
    pub architecture: Architecture,
    pub activation: Activation,
    /// Frobenius radius `t` on the first `L − 2` layers.
    pub scale: f64,
}

impl NetSpec {
    pub fn new(
        widths: Vec<usize>,
        architecture: Architecture,
        activation: Activation,
        scale: f64,
    ) -> Result<Self> {
        let spec = NetSpec {
            depth: widths.len().saturating_sub(1),
            widths,
            architecture,
            activation,
            scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Standard network with every hidden layer of width `hidden`.
    pub fn standard(
        depth: usize,
        d: usize,
        k: usize,
        hidden: usize,
        activation: Activation,
        scale: f64,
    ) -> Result<Self> {
        let mut widths = vec![hidden; depth.saturating_sub(1)];
        widths.insert(0, d);
        widths.push(k);
        Self::new(widths, Architecture::Standard, activation, scale)
    }

    /// Parallel network whose branches have hidden width `hidden` and a
    /// scalar penultimate unit.
    pub fn parallel(
        depth: usize,
        d: usize,
        k: usize,
        hidden: usize,
        branches: usize,
        activation: Activation,
        scale: f64,
    ) -> Result<Self> {
        let mut widths = vec![hidden; depth.saturating_sub(2)];
        widths.insert(0, d);
        if depth >= 2 {
            widths.push(1);
        }
        widths.push(k);
        Self::new(widths, Architecture::Parallel { branches }, activation, scale)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 || self.widths.len() != self.depth + 1 {
            return Err(Error::InvalidSpec(format!(
                "depth must be at least 2 with depth+1 widths, got depth {} and {} widths",
                self.depth,
                self.widths.len()
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidSpec("layer widths must be positive".into()));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        match self.architecture {
            Architecture::Standard => {
                if self.activation == Activation::Linear {
                    let need = self.input_dim().max(self.output_dim());
                    if let Some(m) = self.hidden_widths().iter().find(|&&m| m < need) {
                        return Err(Error::InvalidSpec(format!(
                            "standard linear networks need hidden widths ≥ max(d, K) = {need}, got {m}"
                        )));
                    }
                }
            }
            Architecture::Parallel { branches } => {
                if branches == 0 {
                    return Err(Error::InvalidSpec("parallel network needs a branch".into()));
                }
                if self.widths[self.depth - 1] != 1 {
                    return Err(Error::InvalidSpec(
                        "parallel branches must have a scalar penultimate layer".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        self.widths[self.depth]
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.widths[1..self.depth]
    }

    pub fn branch_count(&self) -> usize {
        match self.architecture {
            Architecture::Standard => 1,
            Architecture::Parallel { branches } => branches,
        }
    }
}

/// Concrete weights. A standard network is a single branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub activation: Activation,
    pub branches: Vec<Vec<DMatrix<f64>>>,
}

impl Network {
    pub fn standard(activation: Activation, layers: Vec<DMatrix<f64>>) -> Self {
        Network {
            activation,
            branches: vec![layers],
        }
    }

    pub fn parallel(activation: Activation, branches: Vec<Vec<DMatrix<f64>>>) -> Self {
        Network {
            activation,
            branches,
        }
    }

    /// Zero-initialised weights with the shapes of `spec`.
    pub fn zeros(spec: &NetSpec) -> Self {
        let layers: Vec<DMatrix<f64>> = spec
            .widths
            .windows(2)
            .map(|w| DMatrix::zeros(w[0], w[1]))
            .collect();
        Network {
            activation: spec.activation,
            branches: vec![layers; spec.branch_count()],
        }
    }

    pub fn depth(&self) -> usize {
        self.branches.first().map_or(0, Vec::len)
    }

    /// Validates layer chaining and returns `(d, K)`.
    pub fn dims(&self) -> Result<(usize, usize)> {
        let first = self
            .branches
            .first()
            .and_then(|b| b.first())
            .ok_or_else(|| Error::InvalidSpec("network has no layers".into()))?;
        let d = first.nrows();
        let k = self.branches[0].last().expect("non-empty branch").ncols();
        let depth = self.depth();
        for (j, branch) in self.branches.iter().enumerate() {
            if branch.len() != depth {
                return Err(Error::InvalidSpec(format!(
                    "branch {j} has {} layers, expected {depth}",
                    branch.len()
                )));
            }
            if branch[0].nrows() != d || branch[depth - 1].ncols() != k {
                return Err(Error::ShapeMismatch(format!(
                    "branch {j} maps {}→{}, expected {d}→{k}",
                    branch[0].nrows(),
                    branch[depth - 1].ncols()
                )));
            }
            for (l, pair) in branch.windows(2).enumerate() {
                if pair[0].ncols() != pair[1].nrows() {
                    return Err(Error::ShapeMismatch(format!(
                        "branch {j}: layer {} is {}x{} but layer {} is {}x{}",
                        l + 1,
                        pair[0].nrows(),
                        pair[0].ncols(),
                        l + 2,
                        pair[1].nrows(),
                        pair[1].ncols()
                    )));
                }
            }
        }
        Ok((d, k))
    }

    /// Output `Σ_branches φ(…φ(X W_1)…) W_L`; the activation follows every
    /// layer except the last.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (d, k) = self.dims()?;
        if x.ncols() != d {
            return Err(Error::ShapeMismatch(format!(
                "data has {} columns, network expects {d}",
                x.ncols()
            )));
        }
        let mut out = DMatrix::zeros(x.nrows(), k);
        for branch in &self.branches {
            out += self.branch_output(x, branch);
        }
        Ok(out)
    }

    /// Activations feeding the last layer of one branch.
    pub fn branch_features(&self, x: &DMatrix<f64>, branch: usize) -> DMatrix<f64> {
        let layers = &self.branches[branch];
        let mut a = x.clone();
        for w in &layers[..layers.len() - 1] {
            a = self.activation.apply(&(&a * w));
        }
        a
    }

    fn branch_output(&self, x: &DMatrix<f64>, layers: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut a = x.clone();
        for w in &layers[..layers.len() - 1] {
            a = self.activation.apply(&(&a * w));
        }
        a * &layers[layers.len() - 1]
    }

    /// `½ Σ_l ‖W_l‖_F²` summed over branches.
    pub fn sum_frobenius_sq(&self) -> f64 {
        0.5 * self
            .branches
            .iter()
            .flatten()
            .map(|w| w.norm_squared())
            .sum::<f64>()
    }
}

/// Weights whose product (or sum of branch products) equals `target`.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub branches: Vec<Vec<DMatrix<f64>>>,
    pub achieved_objective: f64,
    pub target: DMatrix<f64>,
}

impl Factorization {
    /// `Σ_branches W_1 ⋯ W_L`.
    pub fn product(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.target.nrows(), self.target.ncols());
        for branch in &self.branches {
            let mut p = branch[0].clone();
            for w in &branch[1..] {
                p *= w;
            }
            out += p;
        }
        out
    }

    /// `‖product − target‖_F / max(1, ‖target‖_F)`.
    pub fn relative_error(&self) -> f64 {
        (self.product() - &self.target).norm() / self.target.norm().max(1.0)
    }

    pub fn layers(&self) -> &[DMatrix<f64>] {
        &self.branches[0]
    }
}

/// Outcome of checking a dual matrix against its constraint set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Largest constraint value seen.
    pub max_value: f64,
    /// Number of sampled constraint points; 0 for an exact check.
    pub samples_tested: usize,
    pub falsified: bool,
    pub method: String,
}

#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub lambda: DMatrix<f64>,
    pub bound: f64,
    /// `tr(Λᵀ Y)`.
    pub objective: f64,
    pub report: FeasibilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub staircase: Vec<(usize, f64)>,
}

impl GapReport {
    pub fn new(primal_value: f64, dual_value: f64, staircase: Vec<(usize, f64)>) -> Self {
        GapReport {
            primal_value,
            dual_value,
            gap: primal_value - dual_value,
            staircase,
        }
    }
}
