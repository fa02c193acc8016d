//! Entropic optimal transport by Sinkhorn matrix scaling.
//!
//! Minimizes `<P, D> - gamma * H(P)` subject to `P 1 = a`, `P^T 1 = b`,
//! with `P` supported on the finite cells of `D`. The plain solver scales
//! the kernel `K = exp(-D / gamma)`; the log-domain solver iterates the
//! same fixed point on dual potentials with log-sum-exp reductions.
//!
//! Every matrix-vector product computes each output entry with one
//! sequential loop over that row (or column), so results do not depend on
//! the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Work below this many finite cells stays on the calling thread.
const PARALLEL_MIN_NNZ: usize = 1 << 16;

/// Marginals plus a masked cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    pub row_mass: Vec<f64>,
    pub col_mass: Vec<f64>,
    pub cost: CsrMatrix,
}

impl TransportProblem {
    /// Checks shapes, positivity of the marginals and that every row and
    /// column has at least one finite cell.
    pub fn new(row_mass: Vec<f64>, col_mass: Vec<f64>, cost: CsrMatrix) -> Result<Self> {
        if row_mass.is_empty() || col_mass.is_empty() {
            return Err(Error::InstanceEmpty);
        }
        if cost.nrows() != row_mass.len() || cost.ncols() != col_mass.len() {
            return Err(Error::ShapeMismatch(format!(
                "cost is {}x{}, marginals are {}x{}",
                cost.nrows(),
                cost.ncols(),
                row_mass.len(),
                col_mass.len()
            )));
        }
        if let Some(bad) = row_mass.iter().chain(&col_mass).find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidArgument(format!("marginal entry {bad} is not strictly positive")));
        }
        if let Some(bad) = cost.values().iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("stored cost {bad} is not finite")));
        }
        for i in 0..cost.nrows() {
            if cost.row_range(i).is_empty() {
                return Err(Error::InfeasibleRow {
                    word: format!("#{i}"),
                    category: String::new(),
                });
            }
        }
        let mut col_seen = vec![false; cost.ncols()];
        for &j in cost.col_indices() {
            col_seen[j as usize] = true;
        }
        if let Some(j) = col_seen.iter().position(|s| !s) {
            return Err(Error::InfeasibleColumn(format!("#{j}")));
        }
        Ok(Self {
            row_mass,
            col_mass,
            cost,
        })
    }

    /// Dense row-major costs, `+inf` marks masked cells.
    pub fn from_dense(row_mass: Vec<f64>, col_mass: Vec<f64>, dense_cost: &[f64]) -> Result<Self> {
        let cost = CsrMatrix::from_dense_masked(row_mass.len(), col_mass.len(), dense_cost)?;
        Self::new(row_mass, col_mass, cost)
    }

    pub fn nrows(&self) -> usize {
        self.row_mass.len()
    }

    pub fn ncols(&self) -> usize {
        self.col_mass.len()
    }

    pub fn max_cost(&self) -> f64 {
        self.cost.values().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stabilization {
    Plain,
    LogDomain,
    /// Log-domain when `gamma < 0.02`, any cost exceeds 20, or the kernel
    /// exponent `max_cost / gamma` exceeds 200.
    Auto,
}

impl Stabilization {
    pub fn resolve(self, problem: &TransportProblem, gamma: f64) -> Stabilization {
        match self {
            Stabilization::Auto => {
                let max_cost = problem.max_cost();
                if gamma < 0.02 || max_cost > 20.0 || max_cost / gamma > 200.0 {
                    Stabilization::LogDomain
                } else {
                    Stabilization::Plain
                }
            }
            other => other,
        }
    }
}

impl std::str::FromStr for Stabilization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Self::Plain),
            "log_domain" | "log" => Ok(Self::LogDomain),
            "auto" => Ok(Self::Auto),
            other => Err(Error::Config(format!("unknown stabilization `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub gamma: f64,
    pub max_iters: usize,
    /// Bound on the summed L1 violation of both marginals.
    pub tolerance: f64,
    pub stabilization: Stabilization,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            max_iters: 10_000,
            tolerance: 1e-8,
            stabilization: Stabilization::Auto,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::NonPositiveGamma(self.gamma));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidSolverConfig(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidSolverConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub marginal_violation: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct TransportPlan {
    /// Same sparsity structure as the problem's cost matrix.
    pub plan: CsrMatrix,
    pub iterations: usize,
    pub marginal_error: f64,
    pub converged: bool,
    pub stabilization: Stabilization,
    pub trace: Vec<TraceRow>,
}

impl TransportPlan {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.plan.get(row, col).unwrap_or(0.0)
    }

    /// Turns a non-converged result into `Error::NotConverged`.
    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                marginal_error: self.marginal_error,
            })
        }
    }

    /// Writes the trace as `iter,marginal_violation,objective` CSV.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,marginal_violation,objective\n");
        for r in &self.trace {
            out.push_str(&format!("{},{:e},{}\n", r.iter, r.marginal_violation, r.objective));
        }
        out
    }
}

/// Kernel in both row-major and column-major order.
struct Kernel {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    by_row: Vec<f64>,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    by_col: Vec<f64>,
    parallel: bool,
}

impl Kernel {
    fn new(cost: &CsrMatrix, f: impl Fn(f64) -> f64) -> Self {
        let by_row: Vec<f64> = cost.values().iter().map(|&c| f(c)).collect();
        let (col_ptr, row_idx, pos) = cost.transpose_positions();
        let by_col = pos.iter().map(|&k| by_row[k]).collect();
        Self {
            nrows: cost.nrows(),
            ncols: cost.ncols(),
            row_ptr: cost.row_ptr().to_vec(),
            col_idx: cost.col_indices().to_vec(),
            by_row,
            col_ptr,
            row_idx,
            by_col,
            parallel: cost.nnz() >= PARALLEL_MIN_NNZ,
        }
    }

    fn map_rows<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&[u32], &[f64]) -> f64 + Sync,
    {
        let one = |i: usize| {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            f(&self.col_idx[r.clone()], &self.by_row[r])
        };
        if self.parallel {
            (0..self.nrows).into_par_iter().map(one).collect()
        } else {
            (0..self.nrows).map(one).collect()
        }
    }

    fn map_cols<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&[u32], &[f64]) -> f64 + Sync,
    {
        let one = |j: usize| {
            let r = self.col_ptr[j]..self.col_ptr[j + 1];
            f(&self.row_idx[r.clone()], &self.by_col[r])
        };
        if self.parallel {
            (0..self.ncols).into_par_iter().map(one).collect()
        } else {
            (0..self.ncols).map(one).collect()
        }
    }
}

fn dot(idx: &[u32], vals: &[f64], x: &[f64]) -> f64 {
    idx.iter().zip(vals).map(|(&j, &k)| k * x[j as usize]).sum()
}

/// log Σ exp(vals[k] + x[idx[k]])
fn log_sum_exp(idx: &[u32], vals: &[f64], x: &[f64]) -> f64 {
    let max = idx
        .iter()
        .zip(vals)
        .map(|(&j, &v)| v + x[j as usize])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = idx.iter().zip(vals).map(|(&j, &v)| (v + x[j as usize] - max).exp()).sum();
    max + s.ln()
}

fn l1(actual: impl Iterator<Item = f64>, target: &[f64]) -> f64 {
    actual.zip(target).map(|(a, t)| (a - t).abs()).sum()
}

/// Solves the entropic transport problem.
///
/// Stops once the L1 violation of both marginals is within
/// `config.tolerance` or after `config.max_iters` sweeps; in the latter case
/// the last iterate is returned with `converged == false`.
pub fn solve(problem: &TransportProblem, config: &SolverConfig) -> Result<TransportPlan> {
    config.validate()?;
    let mode = config.stabilization.resolve(problem, config.gamma);
    match mode {
        Stabilization::LogDomain => solve_log(problem, config),
        _ => solve_plain(problem, config),
    }
}

fn solve_plain(problem: &TransportProblem, config: &SolverConfig) -> Result<TransportPlan> {
    let gamma = config.gamma;
    let kernel = Kernel::new(&problem.cost, |c| (-c / gamma).exp());
    let a = &problem.row_mass;
    let b = &problem.col_mass;

    let mut v = vec![1.0; kernel.ncols];
    let mut u = vec![1.0; kernel.nrows];
    let mut kv = kernel.map_rows(|idx, vals| dot(idx, vals, &v));
    let mut trace = Vec::new();
    let mut err = f64::INFINITY;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        for (i, (ui, kvi)) in u.iter_mut().zip(&kv).enumerate() {
            if !(*kvi > 0.0) || !kvi.is_finite() {
                return Err(Error::NumericalUnderflow(format!("row {i} kernel product is {kvi}")));
            }
            *ui = a[i] / kvi;
        }
        let ktu = kernel.map_cols(|idx, vals| dot(idx, vals, &u));
        for (j, (vj, kj)) in v.iter_mut().zip(&ktu).enumerate() {
            if !(*kj > 0.0) || !kj.is_finite() {
                return Err(Error::NumericalUnderflow(format!("column {j} kernel product is {kj}")));
            }
            *vj = b[j] / kj;
        }
        kv = kernel.map_rows(|idx, vals| dot(idx, vals, &v));
        let col_err = l1(v.iter().zip(&ktu).map(|(v, k)| v * k), b);
        let row_err = l1(u.iter().zip(&kv).map(|(u, k)| u * k), a);
        err = row_err + col_err;
        if !err.is_finite() {
            return Err(Error::NumericalUnderflow(format!("marginal violation is {err}")));
        }
        if config.record_trace {
            let plan = plain_plan(problem, &kernel, &u, &v);
            trace.push(TraceRow {
                iter: iterations,
                marginal_violation: err,
                objective: objective(&plan, problem, gamma),
            });
        }
        if err <= config.tolerance {
            break;
        }
    }

    Ok(TransportPlan {
        plan: plain_plan(problem, &kernel, &u, &v),
        iterations,
        marginal_error: err,
        converged: err <= config.tolerance,
        stabilization: Stabilization::Plain,
        trace,
    })
}

fn plain_plan(problem: &TransportProblem, kernel: &Kernel, u: &[f64], v: &[f64]) -> CsrMatrix {
    let mut vals = Vec::with_capacity(kernel.by_row.len());
    for (i, ui) in u.iter().enumerate() {
        for k in kernel.row_ptr[i]..kernel.row_ptr[i + 1] {
            vals.push(ui * kernel.by_row[k] * v[kernel.col_idx[k] as usize]);
        }
    }
    problem.cost.with_values(vals)
}

fn solve_log(problem: &TransportProblem, config: &SolverConfig) -> Result<TransportPlan> {
    let gamma = config.gamma;
    // log-kernel -D/gamma; potentials are kept divided by gamma
    let kernel = Kernel::new(&problem.cost, |c| -c / gamma);
    let log_a: Vec<f64> = problem.row_mass.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = problem.col_mass.iter().map(|x| x.ln()).collect();

    let mut alpha = vec![0.0; kernel.nrows];
    let mut beta = vec![0.0; kernel.ncols];
    let mut row_lse = kernel.map_rows(|idx, vals| log_sum_exp(idx, vals, &beta));
    let mut trace = Vec::new();
    let mut err = f64::INFINITY;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        for ((al, la), lse) in alpha.iter_mut().zip(&log_a).zip(&row_lse) {
            *al = la - lse;
        }
        let col_lse = kernel.map_cols(|idx, vals| log_sum_exp(idx, vals, &alpha));
        for ((be, lb), lse) in beta.iter_mut().zip(&log_b).zip(&col_lse) {
            *be = lb - lse;
        }
        row_lse = kernel.map_rows(|idx, vals| log_sum_exp(idx, vals, &beta));
        let col_err = l1(beta.iter().zip(&col_lse).map(|(b, l)| (b + l).exp()), &problem.col_mass);
        let row_err = l1(alpha.iter().zip(&row_lse).map(|(a, l)| (a + l).exp()), &problem.row_mass);
        err = row_err + col_err;
        if !err.is_finite() {
            return Err(Error::NumericalUnderflow(format!("log-domain marginal violation is {err}")));
        }
        if config.record_trace {
            let plan = log_plan(problem, &kernel, &alpha, &beta);
            trace.push(TraceRow {
                iter: iterations,
                marginal_violation: err,
                objective: objective(&plan, problem, gamma),
            });
        }
        if err <= config.tolerance {
            break;
        }
    }

    Ok(TransportPlan {
        plan: log_plan(problem, &kernel, &alpha, &beta),
        iterations,
        marginal_error: err,
        converged: err <= config.tolerance,
        stabilization: Stabilization::LogDomain,
        trace,
    })
}

fn log_plan(problem: &TransportProblem, kernel: &Kernel, alpha: &[f64], beta: &[f64]) -> CsrMatrix {
    let mut vals = Vec::with_capacity(kernel.by_row.len());
    for (i, al) in alpha.iter().enumerate() {
        for k in kernel.row_ptr[i]..kernel.row_ptr[i + 1] {
            vals.push((al + kernel.by_row[k] + beta[kernel.col_idx[k] as usize]).exp());
        }
    }
    problem.cost.with_values(vals)
}

fn objective(plan: &CsrMatrix, problem: &TransportProblem, gamma: f64) -> f64 {
    let cost: f64 = plan.values().iter().zip(problem.cost.values()).map(|(p, c)| p * c).sum();
    cost - gamma * entropy(plan.values())
}

fn entropy(values: &[f64]) -> f64 {
    -values.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// `<P, D>` over the finite cells.
pub fn transport_cost(plan: &TransportPlan, problem: &TransportProblem) -> Result<f64> {
    if !plan.plan.same_structure(&problem.cost) {
        return Err(Error::ShapeMismatch(format!(
            "plan is {}x{} with {} cells, cost is {}x{} with {} cells",
            plan.plan.nrows(),
            plan.plan.ncols(),
            plan.plan.nnz(),
            problem.cost.nrows(),
            problem.cost.ncols(),
            problem.cost.nnz()
        )));
    }
    Ok(plan.plan.values().iter().zip(problem.cost.values()).map(|(p, c)| p * c).sum())
}

/// `H(P) = -Σ p ln p` over positive entries.
pub fn plan_entropy(plan: &TransportPlan) -> f64 {
    entropy(plan.plan.values())
}
