//! Fitting the anode response `C` from measured output mean and spread.
//!
//! The response is discretized on a grid `x_1 = 0 < x_2 < ... < x_M2`. Row
//! `i` of the probability matrix holds the law of a noiseless sample at
//! optical power `Lambda_i`: its atom in column 1 and the mass of
//! `(x_(j-1), x_j]` in column `j`; the last column also takes the mass
//! beyond the grid, so `C` is held flat there. The values `c_j = C(x_j)`
//! minimize
//!
//! `F(c) = |P c - g1|^2 + |sqrt(P c^2) - g2|^2`
//!
//! with `g1` the measured means and `g2` the root second moments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::nonlinear::{NonlinearFn, Tail};
use crate::error::{domain, Error, Result};
use crate::mixed::{Mixed, SampleDist};
use crate::quad::{integrate_breaks, QuadOptions};

/// Largest tolerated deviation of a row sum from one.
pub const ROW_SUM_TOL: f64 = 1e-6;
/// Columns with less total mass than this are tied to a neighbour.
pub const TIE_MASS: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationProblem {
    pub powers: Vec<f64>,
    pub grid: Vec<f64>,
    /// Row-major `M1 x M2`.
    pub prob_matrix: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

impl CalibrationProblem {
    pub fn rows(&self) -> usize {
        self.powers.len()
    }

    pub fn cols(&self) -> usize {
        self.grid.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.cols();
        &self.prob_matrix[i * m..(i + 1) * m]
    }

    /// Total mass of each column over all rows.
    pub fn column_mass(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols()];
        for i in 0..self.rows() {
            for (o, p) in out.iter_mut().zip(self.row(i)) {
                *o += p;
            }
        }
        out
    }

    /// `(P c, P c^2)`.
    pub fn moments(&self, c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (0..self.rows())
            .map(|i| {
                let r = self.row(i);
                let m1: f64 = r.iter().zip(c).map(|(p, v)| p * v).sum();
                let m2: f64 = r.iter().zip(c).map(|(p, v)| p * v * v).sum();
                (m1, m2)
            })
            .unzip()
    }
}

/// Builds the problem from powers `Lambda_i` (photons per symbol), the
/// grid, the dead time and gain ratio `a`, and the measured output means
/// and variances.
pub fn build_problem(
    powers: &[f64],
    grid: &[f64],
    tau: f64,
    a: f64,
    g_mean: &[f64],
    g_var: &[f64],
) -> Result<CalibrationProblem> {
    let m1 = powers.len();
    if m1 == 0 || g_mean.len() != m1 || g_var.len() != m1 {
        return Err(Error::Config(
            "powers, means and variances must have equal nonzero length".into(),
        ));
    }
    if grid.len() < 2 || grid[0] != 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(
            "grid must start at 0 and increase strictly".into(),
        ));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return domain(format!("dead time must lie in (0, 1), got {tau}"));
    }
    if g_mean.iter().chain(g_var).any(|v| !(*v >= 0.0)) {
        return Err(Error::Config(
            "measured means and variances must be nonnegative".into(),
        ));
    }
    let m2 = grid.len();
    let opts = QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-11,
        max_intervals: 400,
    };
    let rows: Vec<Result<Vec<f64>>> = powers
        .par_iter()
        .map(|&lam| {
            let d = SampleDist::new(lam * tau, a)?;
            let mut row = vec![0.0; m2];
            row[0] = d.atom_weight();
            let upper = d.upper_cutoff(1e-17);
            let inner = d.breakpoints(1e-17);
            for j in 1..m2 {
                let lo = grid[j - 1];
                let hi = if j == m2 - 1 {
                    upper.max(grid[j])
                } else {
                    grid[j]
                };
                if lo >= upper {
                    continue;
                }
                let mut br = vec![lo, hi.min(upper)];
                br.extend(
                    inner
                        .iter()
                        .copied()
                        .filter(|&b| b > lo && b < hi.min(upper)),
                );
                br.sort_by(f64::total_cmp);
                row[j] = integrate_breaks(|x| d.density(x), &br, opts).0.value;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Numeric(format!("row for power {lam} sums to {sum}")));
            }
            Ok(row)
        })
        .collect();
    let mut prob = Vec::with_capacity(m1 * m2);
    for r in rows {
        prob.extend(r?);
    }
    Ok(CalibrationProblem {
        powers: powers.to_vec(),
        grid: grid.to_vec(),
        prob_matrix: prob,
        g1: g_mean.to_vec(),
        g2: g_mean
            .iter()
            .zip(g_var)
            .map(|(m, v)| (m * m + v).sqrt())
            .collect(),
    })
}

#[derive(Debug, Clone)]
pub struct Objective {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Rows whose second moment vanished; their spread term has no
    /// gradient and only its constant `g2^2` enters `F`.
    pub zero_rows: Vec<usize>,
}

/// `F(c)` and its gradient `2 P^T (P c - g1) + 2 d`, with
/// `d_j = sum_i (sqrt(s_i) - g2_i) p_ij c_j / sqrt(s_i)`, `s = P c^2`.
pub fn objective_and_grad(c: &[f64], problem: &CalibrationProblem) -> Result<Objective> {
    if c.len() != problem.cols() {
        return Err(Error::Config(format!(
            "expected {} values, got {}",
            problem.cols(),
            c.len()
        )));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return domain("curve values must be finite");
    }
    let (m1, s) = problem.moments(c);
    let mut value = 0.0;
    let mut grad = vec![0.0; c.len()];
    let mut zero_rows = Vec::new();
    for i in 0..problem.rows() {
        let r = problem.row(i);
        let e1 = m1[i] - problem.g1[i];
        value += e1 * e1;
        if s[i] > 0.0 {
            let root = s[i].sqrt();
            let e2 = root - problem.g2[i];
            value += e2 * e2;
            let w = e2 / root;
            for j in 0..c.len() {
                grad[j] += 2.0 * (e1 * r[j] + w * r[j] * c[j]);
            }
        } else {
            value += problem.g2[i] * problem.g2[i];
            zero_rows.push(i);
            for j in 0..c.len() {
                grad[j] += 2.0 * e1 * r[j];
            }
        }
    }
    Ok(Objective {
        value,
        grad,
        zero_rows,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop when the largest gradient component falls below this.
    pub tolerance: f64,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tolerance: 1e-10,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub curve: NonlinearFn,
    /// Raw optimizer output before tying unconstrained columns.
    pub values: Vec<f64>,
    pub x_s: f64,
    pub l_max: f64,
    pub residual: f64,
    pub iterations: usize,
    pub grad_inf: f64,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub hessian_resets: usize,
}

/// Minimizes `F` by BFGS with Armijo backtracking from `init`. `C(0) = 0`
/// is held fixed, and so are columns too light to be constrained by the
/// data; those are tied to a neighbour afterwards.
pub fn fit(problem: &CalibrationProblem, init: &[f64], opts: FitOptions) -> Result<FitResult> {
    if opts.max_iter == 0 {
        return Err(Error::Config("at least one iteration is required".into()));
    }
    let n = problem.cols();
    if init.len() != n {
        return Err(Error::Config(format!(
            "expected {n} initial values, got {}",
            init.len()
        )));
    }
    let mut c = init.to_vec();
    c[0] = 0.0;
    let mass = problem.column_mass();
    let free: Vec<bool> = mass
        .iter()
        .enumerate()
        .map(|(j, &m)| j > 0 && m >= TIE_MASS)
        .collect();
    let eval = |c: &[f64]| -> Result<(f64, Vec<f64>)> {
        let o = objective_and_grad(c, problem)?;
        let mut g = o.grad;
        g.iter_mut()
            .zip(&free)
            .filter(|(_, f)| !**f)
            .for_each(|(v, _)| *v = 0.0);
        Ok((o.value, g))
    };
    let (mut f, mut g) = eval(&c)?;
    let mut h = identity(n);
    let mut first = true;
    let mut history = vec![f];
    let mut resets = 0;
    let mut iterations = 0;
    while iterations < opts.max_iter && inf_norm(&g) >= opts.tolerance {
        let mut p = mat_vec(&h, &g);
        p.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            h = identity(n);
            resets += 1;
            p = g.iter().map(|v| -v).collect();
            slope = dot(&g, &p);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial: Vec<f64> = c.iter().zip(&p).map(|(x, d)| x + step * d).collect();
            let (ft, gt) = eval(&trial)?;
            if ft <= f + opts.armijo_c1 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= opts.backtrack;
        }
        let Some((cn, fn_, gn)) = accepted else {
            if h.iter()
                .enumerate()
                .all(|(k, v)| *v == if k % (n + 1) == 0 { 1.0 } else { 0.0 })
            {
                break;
            }
            h = identity(n);
            resets += 1;
            continue;
        };
        let s: Vec<f64> = cn.iter().zip(&c).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if first {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
                first = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        c = cn;
        f = fn_;
        g = gn;
        history.push(f);
        iterations += 1;
    }
    let values = c.clone();
    tie_unconstrained(&mut c, &mass);
    let curve = NonlinearFn::new(problem.grid.clone(), c, Tail::Hold)?;
    Ok(FitResult {
        x_s: curve.x_s(),
        l_max: curve.l_max(),
        curve,
        values,
        residual: f,
        iterations,
        grad_inf: inf_norm(&g),
        history,
        hessian_resets: resets,
    })
}

/// Copies the value of the nearest constrained column (preferring the one
/// before) into every column with negligible mass.
fn tie_unconstrained(c: &mut [f64], mass: &[f64]) {
    let constrained: Vec<bool> = mass
        .iter()
        .enumerate()
        .map(|(j, &m)| j == 0 || m >= TIE_MASS)
        .collect();
    let mut last = None;
    for j in 0..c.len() {
        if constrained[j] {
            last = Some(j);
        } else if let Some(k) = last {
            c[j] = c[k];
        } else if let Some(k) = (j..c.len()).find(|&k| constrained[k]) {
            c[j] = c[k];
        }
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn mat_vec(h: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| dot(&h[i * n..(i + 1) * n], v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `H <- (I - r s y^T) H (I - r y s^T) + r s s^T`, `r = 1 / y^T s`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    let k = (1.0 + r * yhy) * r;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += k * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
