//! Subcommand implementations. Each returns a JSON report and its CSV form.

use nalgebra::{DMatrix, DVector};
use netdual::linear::{self, Dataset};
use netdual::matfun;
use netdual::measure::caratheodory_reduce_vector;
use netdual::network::{NetSpec, Network};
use netdual::relu::{
    parallel_relu_objective, parallel_relu_weak_duality_check, relu3_dual_value_whitened,
    relu3_optimal_weights_whitened, relu3_primal_value_whitened, relu3_rank1_dual_solve,
    relu3_rank1_optimal_weights, relu3_rank1_primal_value, whitened_dual_lambda, BracketOptions,
    RankOneDataset, ReluWeights3, WhitenedDataset,
};
use netdual::trainer::{self, Regularizer, TrainConfig};
use serde_json::{json, Value};

use crate::config::{Act, Arch, Settings};
use crate::data::{load_dataset, load_measure, measure_to_blocks};
use crate::io::{format_matrices, write_atomic};
use crate::CliError;

pub struct Report {
    pub json: Value,
    pub csv: String,
}

fn arch_name(a: Arch) -> &'static str {
    match a {
        Arch::Standard => "standard",
        Arch::Parallel => "parallel",
    }
}

fn act_name(a: Act) -> &'static str {
    match a {
        Act::Linear => "linear",
        Act::Relu => "relu",
    }
}

fn header(command: &str, s: &Settings) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!(command));
    m.insert("architecture".into(), json!(arch_name(s.arch)));
    m.insert("activation".into(), json!(act_name(s.act)));
    m.insert("L".into(), json!(s.depth));
    m.insert("t".into(), json!(s.t));
    m.insert("seed".into(), json!(s.seed));
    m
}

fn key_value_csv(m: &serde_json::Map<String, Value>) -> String {
    let mut out = String::from("key,value\n");
    for (k, v) in m {
        let v = match v {
            Value::String(s) => s.clone(),
            Value::Number(_) | Value::Bool(_) | Value::Null => v.to_string(),
            _ => continue,
        };
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

fn staircase_json(st: &[(usize, f64)]) -> Value {
    Value::Array(
        st.iter()
            .map(|&(l, v)| json!({"l": l, "value": v}))
            .collect(),
    )
}

fn write_weights(s: &Settings, blocks: &[DMatrix<f64>]) -> Result<(), CliError> {
    match &s.weights {
        Some(p) => write_atomic(p, &format_matrices(blocks)),
        None => Ok(()),
    }
}

/// ReLU data the three-layer closed forms apply to.
enum ReluData {
    Whitened(WhitenedDataset),
    RankOne(RankOneDataset, DVector<f64>),
}

fn relu_data(ds: &Dataset) -> Result<ReluData, CliError> {
    if let Ok(w) = WhitenedDataset::new(ds.x().clone(), ds.y().clone()) {
        return Ok(ReluData::Whitened(w));
    }
    if ds.k() == 1 {
        let svd = matfun::svd(ds.x())?;
        if svd.rank == 1 {
            let c = svd.u.column(0) * svd.sigma[0];
            let a0 = svd.v.column(0).into_owned();
            let y = ds.y().column(0).into_owned();
            return Ok(ReluData::RankOne(RankOneDataset::new(c, a0)?, y));
        }
    }
    Err(CliError::usage(
        "standard ReLU closed forms need whitened data (X Xᵀ = I, orthogonal label columns) or rank-one X with one output",
    ))
}

fn require_relu_depth(s: &Settings) -> Result<(), CliError> {
    if s.depth != 3 {
        return Err(CliError::usage("standard ReLU closed forms are for --L 3"));
    }
    Ok(())
}

fn bracket_options(s: &Settings, ds: &Dataset) -> BracketOptions {
    let mut opts = BracketOptions::new(s.depth);
    opts.hidden = s.hidden.unwrap_or(opts.hidden);
    opts.branches = s.branches;
    opts.trials = s.trials;
    opts.steps = s.steps;
    opts.train_steps = s.steps;
    opts.restarts = s.restarts;
    opts.seed = s.seed;
    if let Ok(w) = WhitenedDataset::new(ds.x().clone(), ds.y().clone()) {
        if let Ok(lambda) = whitened_dual_lambda(&w, 1.0) {
            opts.seeds.push(lambda);
        }
    }
    opts
}

pub fn gap(s: &Settings) -> Result<Report, CliError> {
    let ds = load_dataset(s)?;
    let mut m = header("gap", s);
    let (primal, dual, staircase, provenance, closed_form) = match (s.arch, s.act) {
        (Arch::Standard, Act::Linear) => {
            ds.check_feasible()?;
            let st = if s.depth >= 3 {
                linear::staircase_values(&ds, s.depth, s.t)?
            } else {
                Vec::new()
            };
            (
                linear::primal_value_standard_linear(&ds, s.depth, s.t)?,
                linear::dual_value_standard_linear(&ds, s.depth, s.t)?,
                st,
                "closed form: primal t^-(L-2) ||X+Y||_{S_2/L}, dual t^-(L-2) ||X+Y||_*",
                true,
            )
        }
        (Arch::Parallel, Act::Linear) => {
            ds.check_feasible()?;
            let v = linear::parallel_linear_value(&ds, s.depth)?;
            (
                v,
                v,
                Vec::new(),
                "closed form: (L/2) ||X+Y||_* for primal and dual",
                true,
            )
        }
        (Arch::Standard, Act::Relu) => {
            require_relu_depth(s)?;
            match relu_data(&ds)? {
                ReluData::Whitened(w) => (
                    relu3_primal_value_whitened(&w, s.t)?,
                    relu3_dual_value_whitened(&w, s.t)?,
                    Vec::new(),
                    "closed form: whitened data, primal (sum s^2/3)^3/2 / t, dual sum s / t",
                    true,
                ),
                ReluData::RankOne(r, y) => {
                    let dual = relu3_rank1_dual_solve(&r, &y, s.t)?;
                    if !dual.bounded {
                        return Err(CliError::infeasible(
                            "labels are not in the span of (c)_+ and (-c)_+; the dual is unbounded",
                        ));
                    }
                    (
                        relu3_rank1_primal_value(&r, &y, s.t)?,
                        dual.value,
                        Vec::new(),
                        "closed form: rank-one data, Y = a (c)_+ + b (-c)_+",
                        true,
                    )
                }
            }
        }
        (Arch::Parallel, Act::Relu) => {
            let b = parallel_relu_weak_duality_check(&ds, &bracket_options(s, &ds))?;
            m.insert("constraint_max".into(), json!(b.constraint_max));
            m.insert("samples_tested".into(), json!(b.samples_tested));
            m.insert("fit_residual".into(), json!(b.fit_residual));
            m.insert("branches".into(), json!(s.branches));
            (
                b.upper,
                b.lower,
                Vec::new(),
                "sampled bracket: trained network objective above, sampled dual certificate below",
                false,
            )
        }
    };
    if !(primal.is_finite() && dual.is_finite()) {
        return Err(CliError::numerical("non-finite primal or dual value"));
    }
    m.insert("primal".into(), json!(primal));
    m.insert("dual".into(), json!(dual));
    m.insert("gap".into(), json!(primal - dual));
    m.insert("closed_form".into(), json!(closed_form));
    m.insert("provenance".into(), json!(provenance));
    let csv = key_value_csv(&m);
    m.insert("staircase".into(), staircase_json(&staircase));
    Ok(Report {
        json: Value::Object(m),
        csv,
    })
}

pub fn staircase(s: &Settings) -> Result<Report, CliError> {
    if s.arch != Arch::Standard || s.act != Act::Linear {
        return Err(CliError::usage(
            "staircase is defined for standard linear networks",
        ));
    }
    if s.depth < 3 {
        return Err(CliError::usage("staircase needs --L 3 or more"));
    }
    let ds = load_dataset(s)?;
    ds.check_feasible()?;
    let st = linear::staircase_values(&ds, s.depth, s.t)?;
    let mut csv = String::from("l,value\n");
    for &(l, v) in &st {
        csv.push_str(&format!("{l},{v:.16e}\n"));
    }
    let mut m = header("staircase", s);
    m.insert("staircase".into(), staircase_json(&st));
    Ok(Report {
        json: Value::Object(m),
        csv,
    })
}

fn blocks_summary(blocks: &[DMatrix<f64>]) -> (Value, String) {
    let mut csv = String::from("block,rows,cols,frobenius\n");
    let arr = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            csv.push_str(&format!(
                "{i},{},{},{:.16e}\n",
                b.nrows(),
                b.ncols(),
                b.norm()
            ));
            json!({"rows": b.nrows(), "cols": b.ncols(), "frobenius": b.norm()})
        })
        .collect();
    (Value::Array(arr), csv)
}

fn relu3_weights(s: &Settings, ds: &Dataset) -> Result<(ReluWeights3, f64), CliError> {
    require_relu_depth(s)?;
    match relu_data(ds)? {
        ReluData::Whitened(w) => {
            let parts = netdual::relu::signed_parts(w.y()).len();
            let m1 = s.hidden.unwrap_or(parts.max(1));
            Ok((
                relu3_optimal_weights_whitened(&w, s.t, m1)?,
                relu3_primal_value_whitened(&w, s.t)?,
            ))
        }
        ReluData::RankOne(r, y) => {
            let dual = relu3_rank1_dual_solve(&r, &y, s.t)?;
            if !dual.bounded {
                return Err(CliError::infeasible(
                    "labels are not reachable by rank-one ReLU features",
                ));
            }
            let col = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
            let m1 = s.hidden.unwrap_or(2);
            let w = relu3_rank1_optimal_weights(&r, &col(&y), &col(&dual.lambda), s.t, m1)?;
            Ok((w, relu3_rank1_primal_value(&r, &y, s.t)?))
        }
    }
}

pub fn factorize(s: &Settings) -> Result<Report, CliError> {
    let ds = load_dataset(s)?;
    let mut m = header("factorize", s);
    let (blocks, objective, closed_form, relative_error) = match (s.arch, s.act) {
        (arch, Act::Linear) => {
            ds.check_feasible()?;
            let w = ds.min_norm_solution()?;
            let l = s.depth;
            let lf = l as f64;
            let f = match arch {
                Arch::Standard => {
                    let h = s.hidden.unwrap_or(ds.d().max(ds.k()));
                    linear::balanced_factorization(&w, l, &vec![h; l - 1])?
                }
                Arch::Parallel => {
                    let h = s.hidden.unwrap_or(1);
                    m.insert("branches".into(), json!(s.branches));
                    linear::parallel_factorization(&w, l, h, s.branches)?
                }
            };
            let closed = match arch {
                Arch::Standard => lf * matfun::schatten_pow(&w, 2.0 / lf)?,
                Arch::Parallel => 0.5 * lf * matfun::nuclear_norm(&w)?,
            };
            let rel = f.relative_error();
            (f.branches.concat(), f.achieved_objective, closed, rel)
        }
        (Arch::Standard, Act::Relu) => {
            let (w, value) = relu3_weights(s, &ds)?;
            w.check_constraints(s.t)?;
            let rel = (w.forward(ds.x()) - ds.y()).norm() / ds.y().norm().max(1.0);
            (
                vec![w.w1.clone(), w.w2.clone(), w.w3.clone()],
                w.objective(),
                value,
                rel,
            )
        }
        (Arch::Parallel, Act::Relu) => {
            return Err(CliError::usage(
                "parallel ReLU networks have no closed-form factorization; use `train`",
            ))
        }
    };
    if relative_error > 1e-6 {
        return Err(CliError::numerical(format!(
            "factorization misses the target by {relative_error:e}"
        )));
    }
    write_weights(s, &blocks)?;
    let (summary, csv) = blocks_summary(&blocks);
    m.insert("blocks".into(), summary);
    m.insert("objective".into(), json!(objective));
    m.insert("closed_form_objective".into(), json!(closed_form));
    m.insert("relative_error".into(), json!(relative_error));
    Ok(Report {
        json: Value::Object(m),
        csv,
    })
}

/// Closed-form reference for the trained objective where one exists.
fn train_reference(s: &Settings, ds: &Dataset) -> Option<f64> {
    match (s.arch, s.act) {
        (Arch::Standard, Act::Linear) => linear::total_primal_standard_linear(ds, s.depth)
            .ok()
            .map(|v| v.0),
        (Arch::Parallel, Act::Linear) => linear::parallel_linear_value(ds, s.depth).ok(),
        _ => None,
    }
}

pub fn train(s: &Settings) -> Result<Report, CliError> {
    let ds = load_dataset(s)?;
    let (d, k) = (ds.d(), ds.k());
    let (spec, reg) = match s.arch {
        Arch::Standard => {
            let h = s.hidden.unwrap_or(d.max(k).max(ds.n()));
            (
                NetSpec::standard(s.depth, d, k, h, s.act.into(), s.t)?,
                Regularizer::SumFrobeniusSq,
            )
        }
        Arch::Parallel => {
            let h = s.hidden.unwrap_or(4);
            (
                NetSpec::parallel(s.depth, d, k, h, s.branches, s.act.into(), 1.0)?,
                Regularizer::FrobeniusPowL,
            )
        }
    };
    let mut config = TrainConfig::new(spec, reg);
    config.steps = s.steps;
    config.restarts = s.restarts;
    config.seed = s.seed;
    let result = trainer::train(&config, &ds)?;
    let objective = match s.arch {
        Arch::Standard => result.best_objective,
        Arch::Parallel => parallel_relu_objective(&result.weights),
    };
    write_weights(s, &network_blocks(&result.weights))?;

    let mut m = header("train", s);
    m.insert(
        "regularizer".into(),
        json!(match reg {
            Regularizer::SumFrobeniusSq => "sum_frobenius_sq",
            Regularizer::FrobeniusPowL => "frobenius_pow_l",
        }),
    );
    m.insert("objective".into(), json!(objective));
    m.insert("best_objective".into(), json!(result.best_objective));
    m.insert(
        "constraint_residual".into(),
        json!(result.constraint_residual),
    );
    m.insert("best_restart".into(), json!(result.best_restart));
    m.insert(
        "closed_form_objective".into(),
        json!(train_reference(s, &ds)),
    );
    let mut csv = String::from("restart,objective,residual,diverged\n");
    let per: Vec<Value> = result
        .per_restart
        .iter()
        .enumerate()
        .map(|(i, r)| {
            csv.push_str(&format!(
                "{i},{:.16e},{:.16e},{}\n",
                r.objective, r.residual, r.diverged
            ));
            json!({"objective": r.objective, "residual": r.residual, "diverged": r.diverged})
        })
        .collect();
    m.insert("per_restart".into(), Value::Array(per));
    Ok(Report {
        json: Value::Object(m),
        csv,
    })
}

/// Layers of every branch in order, branch by branch.
fn network_blocks(net: &Network) -> Vec<DMatrix<f64>> {
    net.branches.concat()
}

pub fn sparsify(s: &Settings) -> Result<Report, CliError> {
    let (measure, n) = load_measure(s)?;
    let reduced = caratheodory_reduce_vector(&measure)?;
    let target = measure.integral();
    let got = if reduced.is_empty() {
        DMatrix::zeros(target.nrows(), target.ncols())
    } else {
        reduced.integral()
    };
    let residual = (got - &target).norm() / target.norm().max(1.0);
    if residual > 1e-8 {
        return Err(CliError::numerical(format!(
            "reduced measure misses the integral by {residual:e}"
        )));
    }
    let (z, c) = measure_to_blocks(&reduced, n);
    write_weights(s, &[z, c])?;

    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!("sparsify"));
    m.insert("seed".into(), json!(s.seed));
    m.insert("feature_dim".into(), json!(n));
    m.insert("k".into(), json!(measure.k));
    m.insert("atoms_in".into(), json!(measure.len()));
    m.insert("atoms_out".into(), json!(reduced.len()));
    m.insert("atom_bound".into(), json!(measure.k * n + 1));
    m.insert(
        "total_variation_in".into(),
        json!(measure.total_variation()),
    );
    m.insert(
        "total_variation_out".into(),
        json!(reduced.total_variation()),
    );
    m.insert("integral_residual".into(), json!(residual));
    let mut csv = String::from("source,coefficient_norm\n");
    for a in &reduced.atoms {
        csv.push_str(&format!("{},{:.16e}\n", a.source, a.coefficient.norm()));
    }
    m.insert(
        "sources".into(),
        Value::Array(reduced.atoms.iter().map(|a| json!(a.source)).collect()),
    );
    Ok(Report {
        json: Value::Object(m),
        csv,
    })
}
