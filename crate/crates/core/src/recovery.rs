//! Sparse non-negative recovery: minimise the generalised KL divergence
//! `KL(y || Dx)` over `x >= 0` with an active-set Newton solver, plus the
//! classical multiplicative-update iteration used as a reference.

use ndarray::{Array2, ArrayView1, ArrayView2, ShapeBuilder};

use crate::dictionary::Dictionary;
use crate::error::{invalid, Error, Result};

/// Floor applied to `y` and `Dx` inside logarithms and ratios.
pub const KL_FLOOR: f64 = 1e-12;

const MAX_HALVINGS: usize = 20;
const GRADIENT_TOL: f64 = 1e-9;

/// A labelled, contiguous range of dictionary columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Concatenated atom matrix (column-major) partitioned into source blocks.
#[derive(Debug, Clone)]
pub struct BlockDictionary {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    blocks: Vec<Block>,
}

impl BlockDictionary {
    /// Concatenate dictionaries in order, one block per dictionary.
    pub fn concat(parts: &[(&str, &Dictionary)]) -> Result<Self> {
        let rows = parts.first().map(|(_, d)| d.dim()).ok_or_else(|| invalid("no dictionaries to concatenate"))?;
        let mut data = Vec::new();
        let mut blocks = Vec::with_capacity(parts.len());
        let mut at = 0;
        for (label, d) in parts {
            if d.dim() != rows {
                return Err(Error::DimensionMismatch { expected: rows, found: d.dim() });
            }
            for col in d.atoms().columns() {
                data.extend(col.iter());
            }
            blocks.push(Block { label: label.to_string(), start: at, end: at + d.n_atoms() });
            at += d.n_atoms();
        }
        Ok(Self { data, rows, cols: at, blocks })
    }

    pub fn from_matrix(atoms: ArrayView2<f64>, blocks: Vec<Block>) -> Result<Self> {
        let (rows, cols) = atoms.dim();
        let mut at = 0;
        for b in &blocks {
            if b.start != at || b.end < b.start {
                return Err(invalid("blocks must be contiguous and ordered"));
            }
            at = b.end;
        }
        if at != cols {
            return Err(invalid(format!("blocks cover {at} of {cols} columns")));
        }
        if atoms.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("dictionary entries must be finite and non-negative"));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for col in atoms.columns() {
            data.extend(col.iter());
        }
        Ok(Self { data, rows, cols, blocks })
    }

    /// Single block covering every column.
    pub fn single(atoms: ArrayView2<f64>, label: &str) -> Result<Self> {
        let cols = atoms.ncols();
        Self::from_matrix(atoms, vec![Block { label: label.into(), start: 0, end: cols }])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn matrix(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.rows, self.cols).f(), self.data.clone()).expect("consistent shape")
    }

    /// `D x` restricted to the columns of `block` (all columns when `None`).
    pub fn reconstruct(&self, weights: &[f64], block: Option<usize>) -> Vec<f64> {
        let range = match block {
            Some(b) => self.blocks[b].start..self.blocks[b].end,
            None => 0..self.cols,
        };
        let mut out = vec![0.0; self.rows];
        for j in range {
            let w = weights[j];
            if w != 0.0 {
                for (o, d) in out.iter_mut().zip(self.column(j)) {
                    *o += w * d;
                }
            }
        }
        out
    }
}

/// Target spectrum and the dictionary it is decomposed on.
#[derive(Debug, Clone, Copy)]
pub struct RecoveryProblem<'a> {
    pub target: ArrayView1<'a, f64>,
    pub dictionary: &'a BlockDictionary,
}

impl<'a> RecoveryProblem<'a> {
    pub fn new(target: ArrayView1<'a, f64>, dictionary: &'a BlockDictionary) -> Result<Self> {
        if target.len() != dictionary.rows() {
            return Err(Error::DimensionMismatch { expected: dictionary.rows(), found: target.len() });
        }
        if target.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("target must be finite and non-negative"));
        }
        Ok(Self { target, dictionary })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsnaParams {
    /// Stop once the relative objective decrease falls below this and no atom can be added.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for AsnaParams {
    fn default() -> Self {
        Self { tol: 1e-7, max_iters: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoverySolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub active_set_size: usize,
    /// L1 norm of the weights of each block, in block order.
    pub block_sums: Vec<f64>,
    /// Objective after initialisation and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

/// Generalised KL divergence `sum y log(y / yhat) - y + yhat` with floored ratios.
pub fn kl_divergence(y: &[f64], yhat: &[f64]) -> f64 {
    y.iter()
        .zip(yhat)
        .map(|(&a, &b)| {
            if a > 0.0 {
                a * (a.max(KL_FLOOR) / b.max(KL_FLOOR)).ln() - a + b
            } else {
                b
            }
        })
        .sum()
}

fn sums_per_block(dict: &BlockDictionary, x: &[f64]) -> Vec<f64> {
    dict.blocks.iter().map(|b| x[b.start..b.end].iter().map(|v| v.abs()).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-block sum of weights, labelled.
pub fn block_sums(solution: &RecoverySolution, problem: &RecoveryProblem) -> Result<Vec<(String, f64)>> {
    let dict = problem.dictionary;
    if solution.weights.len() != dict.cols() {
        return Err(Error::DimensionMismatch { expected: dict.cols(), found: solution.weights.len() });
    }
    let sums = sums_per_block(dict, &solution.weights);
    Ok(dict.blocks.iter().zip(sums).map(|(b, s)| (b.label.clone(), s)).collect())
}

fn validate(problem: &RecoveryProblem) -> Result<Vec<f64>> {
    let y = problem.target.to_vec();
    if y.len() != problem.dictionary.rows() {
        return Err(Error::DimensionMismatch { expected: problem.dictionary.rows(), found: y.len() });
    }
    if y.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid("target must be finite and non-negative"));
    }
    if problem.dictionary.cols() == 0 {
        return Err(invalid("empty dictionary"));
    }
    Ok(y)
}

/// Multiplicative updates `x <- x * (D^T (y / Dx)) / (D^T 1)` from `x = 1/M`.
pub fn solve_mu(problem: &RecoveryProblem, iters: usize) -> Result<RecoverySolution> {
    let y = validate(problem)?;
    let dict = problem.dictionary;
    let (p, m) = (dict.rows(), dict.cols());
    let col_sums: Vec<f64> = (0..m).map(|j| dict.column(j).iter().sum()).collect();
    let mut x = vec![1.0 / m as f64; m];
    let mut yhat = dict.reconstruct(&x, None);
    let mut ratio = vec![0.0; p];
    let mut trace = vec![kl_divergence(&y, &yhat)];
    for it in 0..iters {
        for ((r, &a), &b) in ratio.iter_mut().zip(&y).zip(&yhat) {
            *r = a / b.max(KL_FLOOR);
        }
        for j in 0..m {
            if col_sums[j] > 0.0 {
                x[j] *= dot(dict.column(j), &ratio) / col_sums[j];
                // flush subnormals: they change nothing numerically but stall the FPU
                if x[j] < f64::MIN_POSITIVE {
                    x[j] = 0.0;
                }
            }
        }
        yhat.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..m {
            let w = x[j];
            if w != 0.0 {
                for (o, d) in yhat.iter_mut().zip(dict.column(j)) {
                    *o += w * d;
                }
            }
        }
        if yhat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure { iteration: it + 1 });
        }
    }
    let objective = kl_divergence(&y, &yhat);
    trace.push(objective);
    let active = x.iter().filter(|&&v| v > 0.0).count();
    Ok(RecoverySolution {
        block_sums: sums_per_block(dict, &x),
        weights: x,
        objective,
        iterations: iters,
        active_set_size: active,
        objective_trace: trace,
        converged: true,
    })
}

/// Cholesky solve of `(H + lambda I) z = g`, escalating `lambda` until the factorisation succeeds.
fn regularized_solve(h: &Array2<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let max_diag = (0..n).map(|i| h[[i, i]]).fold(0.0, f64::max);
    if !(max_diag > 0.0) || !max_diag.is_finite() {
        return None;
    }
    let mut lambda = 0.0;
    for _ in 0..8 {
        if let Some(z) = cholesky_solve(h, g, lambda) {
            return Some(z);
        }
        lambda = if lambda == 0.0 { 1e-12 * max_diag } else { lambda * 100.0 };
    }
    None
}

fn cholesky_solve(h: &Array2<f64>, g: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let n = g.len();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = h[[i, j]] + if i == j { lambda } else { 0.0 };
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut z = g.to_vec();
    for i in 0..n {
        let mut s = z[i];
        for k in 0..i {
            s -= l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[k * n + i] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    z.iter().all(|v| v.is_finite()).then_some(z)
}

struct Asna<'a> {
    dict: &'a BlockDictionary,
    y: Vec<f64>,
    active: Vec<usize>,
    x: Vec<f64>,
    yhat: Vec<f64>,
    objective: f64,
}

impl<'a> Asna<'a> {
    fn model(&self, active: &[usize], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dict.rows()];
        for (&j, &w) in active.iter().zip(x) {
            if w != 0.0 {
                for (o, d) in out.iter_mut().zip(self.dict.column(j)) {
                    *o += w * d;
                }
            }
        }
        out
    }

    fn residual(&self) -> Vec<f64> {
        self.y.iter().zip(&self.yhat).map(|(&a, &b)| 1.0 - a / b.max(KL_FLOOR)).collect()
    }

    /// Newton direction on the active set, or `None` when the system is unusable.
    fn newton_direction(&self, grad: &[f64]) -> Option<Vec<f64>> {
        let p = self.dict.rows();
        let n = self.active.len();
        let sqrt_w: Vec<f64> = self.y.iter().zip(&self.yhat).map(|(&a, &b)| a.sqrt() / b.max(KL_FLOOR)).collect();
        let mut scaled = Array2::<f64>::zeros((p, n).f());
        for (k, &j) in self.active.iter().enumerate() {
            for ((s, d), w) in scaled.column_mut(k).iter_mut().zip(self.dict.column(j)).zip(&sqrt_w) {
                *s = d * w;
            }
        }
        let h = scaled.t().dot(&scaled);
        regularized_solve(&h, grad)
    }

    /// Largest step along `-dir` keeping weights non-negative, and the indices that hit zero.
    fn boundary(&self, dir: &[f64]) -> (f64, Vec<usize>) {
        let mut alpha = f64::INFINITY;
        let mut hits = Vec::new();
        for (k, (&xi, &di)) in self.x.iter().zip(dir).enumerate() {
            if di > 0.0 {
                let a = xi / di;
                if a < alpha {
                    alpha = a;
                    hits.clear();
                    hits.push(k);
                } else if a == alpha {
                    hits.push(k);
                }
            }
        }
        (alpha, hits)
    }

    /// Backtracking along `-dir` from `alpha0`; returns the accepted trial point.
    fn line_search(&self, dir: &[f64], alpha0: f64, hits: &[usize], alpha_max: f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let mut alpha = alpha0;
        for _ in 0..=MAX_HALVINGS {
            let mut trial: Vec<f64> = self.x.iter().zip(dir).map(|(&xi, &di)| (xi - alpha * di).max(0.0)).collect();
            if alpha == alpha_max {
                for &k in hits {
                    trial[k] = 0.0;
                }
            }
            let yhat = self.model(&self.active, &trial);
            let f = kl_divergence(&self.y, &yhat);
            if f.is_finite() && f <= self.objective {
                return Some((trial, yhat, f));
            }
            alpha *= 0.5;
        }
        None
    }

    fn projected_gradient_step(&self, grad: &[f64]) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let dir: Vec<f64> =
            grad.iter().zip(&self.x).map(|(&g, &xi)| if xi <= 0.0 && g > 0.0 { 0.0 } else { g }).collect();
        let gg = dot(&dir, &dir);
        if gg == 0.0 {
            return None;
        }
        // exact minimiser of the quadratic model along the direction
        let dyhat = self.model(&self.active, &dir);
        let curv: f64 =
            self.y.iter().zip(&self.yhat).zip(&dyhat).map(|((&a, &b), &d)| a * d * d / b.max(KL_FLOOR).powi(2)).sum();
        let mut alpha0 = if curv > 0.0 { gg / curv } else { 1.0 };
        let (alpha_max, hits) = self.boundary(&dir);
        if alpha0 >= alpha_max {
            alpha0 = alpha_max;
        }
        if !(alpha0 > 0.0) {
            return None;
        }
        self.line_search(&dir, alpha0, &hits, alpha_max).filter(|(_, _, f)| *f < self.objective)
    }
}

/// Active-set Newton solver for `min KL(y || Dx)` subject to `x >= 0`.
///
/// Starts from the single atom with the lowest KL at its optimal scale, adds
/// the inactive atom with the most negative gradient each iteration, takes a
/// Newton step on the active set truncated at the non-negativity boundary
/// (halving on objective increase, projected-gradient fallback) and drops
/// atoms whose weight reaches zero.
pub fn solve_asna(problem: &RecoveryProblem, params: &AsnaParams) -> Result<RecoverySolution> {
    let y = validate(problem)?;
    let dict = problem.dictionary;
    let y_sum: f64 = y.iter().sum();
    if y_sum <= 0.0 {
        return Err(Error::DegenerateTarget);
    }
    let m = dict.cols();
    if (0..m).any(|j| (dot(dict.column(j), dict.column(j)).sqrt() - 1.0).abs() > 1e-6) {
        log::warn!("dictionary columns are not unit-norm");
    }

    // initial atom: closed-form optimal scale sum(y) / sum(d)
    let mut best: Option<(f64, usize, f64)> = None;
    for j in 0..m {
        let col = dict.column(j);
        let s: f64 = col.iter().sum();
        if s <= 0.0 {
            continue;
        }
        let scale = y_sum / s;
        let yhat: Vec<f64> = col.iter().map(|d| d * scale).collect();
        let f = kl_divergence(&y, &yhat);
        if best.is_none_or(|(bf, _, _)| f < bf) {
            best = Some((f, j, scale));
        }
    }
    let (f0, j0, s0) = best.ok_or_else(|| invalid("dictionary has no non-zero atom"))?;
    let mut st = Asna { dict, y, active: vec![j0], x: vec![s0], yhat: Vec::new(), objective: f0 };
    st.yhat = st.model(&st.active, &st.x);
    if !f0.is_finite() {
        return Err(Error::NumericalFailure { iteration: 0 });
    }
    let mut trace = vec![f0];
    let mut converged = false;
    let mut iterations = 0;
    let mut last_rel_dec = f64::INFINITY;
    let f_floor = 1e-15 * (1.0 + y_sum);

    for it in 1..=params.max_iters {
        iterations = it;
        let r = st.residual();
        let mut candidate: Option<(usize, f64)> = None;
        for j in 0..m {
            if st.active.contains(&j) {
                continue;
            }
            let g = dot(dict.column(j), &r);
            if !g.is_finite() {
                return Err(Error::NumericalFailure { iteration: it });
            }
            if g < -GRADIENT_TOL && candidate.is_none_or(|(_, bg)| g < bg) {
                candidate = Some((j, g));
            }
        }
        if candidate.is_none() && (last_rel_dec < params.tol || st.objective <= f_floor) {
            converged = true;
            iterations = it - 1;
            break;
        }
        if let Some((j, _)) = candidate {
            st.active.push(j);
            st.x.push(0.0);
        }
        let grad: Vec<f64> = st.active.iter().map(|&j| dot(dict.column(j), &r)).collect();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericalFailure { iteration: it });
        }

        let newton = st.newton_direction(&grad).and_then(|dir| {
            if dot(&dir, &grad) <= 0.0 {
                return None;
            }
            let (alpha_max, hits) = st.boundary(&dir);
            let alpha0 = alpha_max.min(1.0);
            if !(alpha0 > 0.0) {
                return None;
            }
            let hits = if alpha0 == alpha_max { hits } else { Vec::new() };
            st.line_search(&dir, alpha0, &hits, alpha_max)
        });
        let step = match newton {
            Some(s) if s.2 < st.objective || candidate.is_none() => Some(s),
            _ => st.projected_gradient_step(&grad),
        };
        let Some((x_new, yhat_new, f_new)) = step else {
            // no descent available on the active set
            if let Some((j, _)) = candidate {
                let k = st.active.iter().position(|&a| a == j).expect("just added");
                st.active.remove(k);
                st.x.remove(k);
            }
            converged = true;
            break;
        };
        if !f_new.is_finite() || yhat_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure { iteration: it });
        }
        last_rel_dec = (st.objective - f_new) / st.objective.max(f64::MIN_POSITIVE);
        st.x = x_new;
        st.yhat = yhat_new;
        st.objective = f_new;
        trace.push(f_new);

        let mut k = 0;
        while k < st.active.len() {
            if st.x[k] <= 0.0 {
                st.active.remove(k);
                st.x.remove(k);
            } else {
                k += 1;
            }
        }
        if st.active.is_empty() {
            return Err(Error::NumericalFailure { iteration: it });
        }
    }

    let mut weights = vec![0.0; m];
    for (&j, &w) in st.active.iter().zip(&st.x) {
        weights[j] = w;
    }
    Ok(RecoverySolution {
        block_sums: sums_per_block(dict, &weights),
        active_set_size: st.active.len(),
        weights,
        objective: st.objective,
        iterations,
        objective_trace: trace,
        converged,
    })
}
