//! Dense linear programs `min c'x` subject to `lo_i <= a_i'x <= hi_i`,
//! `x >= 0`, solved by a bounded dual simplex.
//!
//! A plain `a'x <= b` row is the special case `lo = -inf`. Two-sided rows keep
//! the `|.|_inf <= eta` constraint families at one row per component instead
//! of two.
//!
//! The basis is stored in a compact form: with `S` the basic structural
//! columns and `R` the rows whose logical (activity) variable is nonbasic,
//! only `K = A[R, S]^{-1}` is kept. For the sparse L1 solutions we are after
//! `|S|` stays far below the number of rows, so one iteration costs
//! `O(|S| * (n + m))` instead of the `O(m^2)` of a full basis inverse.
//!
//! The all-slack basis is dual feasible whenever `c >= 0`, which is the case
//! for every L1 objective, so no phase one is needed. Negative costs are
//! handled by temporary "artificial" upper bounds; a solution resting on one
//! of them means the problem is unbounded.
//!
//! Anti-cycling: after a run of degenerate pivots the pricing switches to
//! Bland's smallest-index rule until the dual objective moves again.

use nalgebra::DMatrix;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    n: usize,
    objective: Vec<f64>,
    coeffs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self { n: objective.len(), objective, coeffs: Vec::new(), lower: Vec::new(), upper: Vec::new() }
    }

    pub fn with_capacity(objective: Vec<f64>, rows: usize) -> Self {
        let n = objective.len();
        Self {
            n,
            objective,
            coeffs: Vec::with_capacity(rows * n),
            lower: Vec::with_capacity(rows),
            upper: Vec::with_capacity(rows),
        }
    }

    pub fn add_range(&mut self, row: &[f64], lo: f64, hi: f64) {
        assert_eq!(row.len(), self.n, "constraint row has wrong length");
        assert!(lo <= hi, "empty row range [{lo}, {hi}]");
        self.coeffs.extend_from_slice(row);
        self.lower.push(lo);
        self.upper.push(hi);
    }

    pub fn add_le(&mut self, row: &[f64], b: f64) {
        self.add_range(row, f64::NEG_INFINITY, b);
    }

    pub fn add_ge(&mut self, row: &[f64], b: f64) {
        self.add_range(row, b, f64::INFINITY);
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.lower.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coeffs[i * self.n..(i + 1) * self.n]
    }

    pub fn row_bounds(&self, i: usize) -> (f64, f64) {
        (self.lower[i], self.upper[i])
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest absolute constraint violation of `x`, including `x >= 0`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0f64, |m, &v| m.max(-v));
        for i in 0..self.num_rows() {
            let act: f64 = self.row(i).iter().zip(x).map(|(a, v)| a * v).sum();
            worst = worst.max(self.lower[i] - act).max(act - self.upper[i]);
        }
        worst
    }

    /// Largest finite bound magnitude, the `||b||_inf` in the feasibility
    /// tolerance `1e-8 (1 + ||b||_inf)`.
    pub fn bound_scale(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.upper)
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub iterations: usize,
    pub max_violation: f64,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Primal feasibility tolerance (relative to `1 + |bound|`).
    pub tol: f64,
    /// Pivot cap; `None` means `50 * (vars + rows)`.
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iterations: None }
    }
}

pub fn lp_solve(lp: &LinearProgram, tol: f64) -> LpSolution {
    lp_solve_with(lp, &SolverOptions { tol, ..SolverOptions::default() })
}

pub fn lp_solve_with(lp: &LinearProgram, opts: &SolverOptions) -> LpSolution {
    DualSimplex::new(lp, opts).run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
}

const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-10;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_RUN: usize = 40;

enum Leaving {
    Row(usize),
    Col(usize),
}

enum Entering {
    Col(usize),
    /// Position in `tight_rows`.
    Row(usize),
}

struct DualSimplex<'a> {
    lp: &'a LinearProgram,
    opts: &'a SolverOptions,
    m: usize,
    n: usize,
    col_upper: Vec<f64>,
    artificial: Vec<bool>,
    col_state: Vec<State>,
    row_state: Vec<State>,
    basic_cols: Vec<usize>,
    tight_rows: Vec<usize>,
    /// `K = A[R,S]^{-1}`, k x k row-major; rows follow `basic_cols`, columns
    /// follow `tight_rows`.
    kinv: Vec<f64>,
    x: Vec<f64>,
    act: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    row_norm: Vec<f64>,
    updates: usize,
}

impl<'a> DualSimplex<'a> {
    fn new(lp: &'a LinearProgram, opts: &'a SolverOptions) -> Self {
        let (m, n) = (lp.num_rows(), lp.num_vars());
        let scale = 1.0 + lp.bound_scale();
        let mut col_upper = vec![f64::INFINITY; n];
        let mut artificial = vec![false; n];
        let mut col_state = vec![State::Lower; n];
        for j in 0..n {
            if lp.objective[j] < 0.0 {
                col_upper[j] = 1e7 * scale;
                artificial[j] = true;
                col_state[j] = State::Upper;
            }
        }
        let row_norm = (0..m)
            .map(|i| lp.row(i).iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12))
            .collect();
        Self {
            lp,
            opts,
            m,
            n,
            col_upper,
            artificial,
            col_state,
            row_state: vec![State::Basic; m],
            basic_cols: Vec::new(),
            tight_rows: Vec::new(),
            kinv: Vec::new(),
            x: vec![0.0; n],
            act: vec![0.0; m],
            y: Vec::new(),
            d: lp.objective.clone(),
            row_norm,
            updates: 0,
        }
    }

    fn k(&self) -> usize {
        self.basic_cols.len()
    }

    #[inline]
    fn a(&self, i: usize, j: usize) -> f64 {
        self.lp.coeffs[i * self.n + j]
    }

    fn row_value(&self, i: usize, state: State) -> f64 {
        match state {
            State::Lower => self.lp.lower[i],
            State::Upper => self.lp.upper[i],
            State::Basic => unreachable!("basic logical has no bound value"),
        }
    }

    fn compute_primal(&mut self) {
        let k = self.k();
        for j in 0..self.n {
            self.x[j] = match self.col_state[j] {
                State::Upper => self.col_upper[j],
                _ => 0.0,
            };
        }
        let at_upper: Vec<usize> = (0..self.n).filter(|&j| self.col_state[j] == State::Upper).collect();
        let mut rhs = vec![0.0; k];
        for (l, &i) in self.tight_rows.iter().enumerate() {
            let mut v = self.row_value(i, self.row_state[i]);
            for &j in &at_upper {
                v -= self.a(i, j) * self.x[j];
            }
            rhs[l] = v;
        }
        for p in 0..k {
            let row = &self.kinv[p * k..(p + 1) * k];
            self.x[self.basic_cols[p]] = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        }
        let support: Vec<usize> = (0..self.n).filter(|&j| self.x[j] != 0.0).collect();
        for i in 0..self.m {
            let base = i * self.n;
            let mut s = 0.0;
            for &j in &support {
                s += self.lp.coeffs[base + j] * self.x[j];
            }
            self.act[i] = s;
        }
    }

    fn compute_duals(&mut self) {
        let k = self.k();
        self.y = vec![0.0; k];
        for p in 0..k {
            let c = self.lp.objective[self.basic_cols[p]];
            if c != 0.0 {
                for l in 0..k {
                    self.y[l] += self.kinv[p * k + l] * c;
                }
            }
        }
        self.d.copy_from_slice(&self.lp.objective);
        for (l, &i) in self.tight_rows.iter().enumerate() {
            let yl = self.y[l];
            if yl != 0.0 {
                let row = self.lp.row(i);
                for (dj, a) in self.d.iter_mut().zip(row) {
                    *dj -= yl * a;
                }
            }
        }
        for &j in &self.basic_cols {
            self.d[j] = 0.0;
        }
    }

    fn refactor(&mut self) -> bool {
        let k = self.k();
        self.updates = 0;
        if k == 0 {
            self.kinv.clear();
            return true;
        }
        let b = DMatrix::from_fn(k, k, |l, p| self.a(self.tight_rows[l], self.basic_cols[p]));
        match b.try_inverse() {
            Some(inv) => {
                self.kinv = (0..k * k).map(|t| inv[(t / k, t % k)]).collect();
                true
            }
            None => false,
        }
    }

    /// Most infeasible basic variable, or the smallest-index one in Bland mode.
    fn choose_leaving(&self, bland: bool) -> Option<(Leaving, f64)> {
        let tol = self.opts.tol;
        let mut best: Option<(Leaving, f64)> = None;
        let mut best_score = 0.0;
        for (p, &j) in self.basic_cols.iter().enumerate() {
            let v = self.x[j];
            let (viol, dir) = if v < -tol {
                (-v, 1.0)
            } else if v > self.col_upper[j] + tol * (1.0 + self.col_upper[j]) {
                (v - self.col_upper[j], -1.0)
            } else {
                continue;
            };
            if bland {
                return Some((Leaving::Col(p), dir));
            }
            if viol > best_score {
                best_score = viol;
                best = Some((Leaving::Col(p), dir));
            }
        }
        for i in 0..self.m {
            if self.row_state[i] != State::Basic {
                continue;
            }
            let v = self.act[i];
            let (lo, hi) = (self.lp.lower[i], self.lp.upper[i]);
            let (viol, dir) = if v < lo - tol * (1.0 + lo.abs()) {
                (lo - v, 1.0)
            } else if v > hi + tol * (1.0 + hi.abs()) {
                (v - hi, -1.0)
            } else {
                continue;
            };
            if bland {
                if best.is_none() {
                    return Some((Leaving::Row(i), dir));
                }
                continue;
            }
            let score = viol / self.row_norm[i];
            if score > best_score {
                best_score = score;
                best = Some((Leaving::Row(i), dir));
            }
        }
        best
    }

    /// Coefficients of the leaving variable in terms of the nonbasic
    /// structurals (`g`) and nonbasic logicals (`h`, indexed like `R`).
    fn pivot_row(&self, leaving: &Leaving) -> (Vec<f64>, Vec<f64>) {
        let k = self.k();
        let w: Vec<f64> = match *leaving {
            Leaving::Row(i) => {
                let mut w = vec![0.0; k];
                for (p, &j) in self.basic_cols.iter().enumerate() {
                    let a = self.a(i, j);
                    if a != 0.0 {
                        for l in 0..k {
                            w[l] += a * self.kinv[p * k + l];
                        }
                    }
                }
                w
            }
            Leaving::Col(p) => self.kinv[p * k..(p + 1) * k].to_vec(),
        };
        let mut t = vec![0.0; self.n];
        for (l, &i) in self.tight_rows.iter().enumerate() {
            let wl = w[l];
            if wl != 0.0 {
                for (tj, a) in t.iter_mut().zip(self.lp.row(i)) {
                    *tj += wl * a;
                }
            }
        }
        let g = match *leaving {
            Leaving::Row(i) => self.lp.row(i).iter().zip(&t).map(|(a, tj)| a - tj).collect(),
            Leaving::Col(_) => t.into_iter().map(|v| -v).collect(),
        };
        (g, w)
    }

    fn ratio_test(&self, g: &[f64], h: &[f64], dir: f64, bland: bool) -> Option<(Entering, f64)> {
        // (candidate, |d|, |coef|)
        let mut cands: Vec<(Entering, f64, f64, usize)> = Vec::new();
        for j in 0..self.n {
            let st = self.col_state[j];
            let gj = g[j] * dir;
            let ok = match st {
                State::Lower => gj > PIVOT_TOL,
                State::Upper => gj < -PIVOT_TOL,
                State::Basic => false,
            };
            if ok {
                cands.push((Entering::Col(j), self.d[j].abs(), gj.abs(), j));
            }
        }
        for (l, &i) in self.tight_rows.iter().enumerate() {
            if self.lp.lower[i] == self.lp.upper[i] {
                continue;
            }
            let hl = h[l] * dir;
            let ok = match self.row_state[i] {
                State::Lower => hl > PIVOT_TOL,
                State::Upper => hl < -PIVOT_TOL,
                State::Basic => false,
            };
            if ok {
                cands.push((Entering::Row(l), self.y[l].abs(), hl.abs(), self.n + i));
            }
        }
        if cands.is_empty() {
            return None;
        }
        if bland {
            let min = cands.iter().map(|c| c.1 / c.2).fold(f64::INFINITY, f64::min);
            let pick = cands
                .into_iter()
                .filter(|c| c.1 / c.2 <= min + 1e-12)
                .min_by_key(|c| c.3)
                .unwrap();
            let step = pick.1 / pick.2;
            return Some((pick.0, step));
        }
        let bound = cands.iter().map(|c| (c.1 + DUAL_TOL) / c.2).fold(f64::INFINITY, f64::min);
        let pick = cands
            .into_iter()
            .filter(|c| c.1 / c.2 <= bound)
            .max_by(|a, b| a.2.total_cmp(&b.2))
            .unwrap();
        let step = pick.1 / pick.2;
        Some((pick.0, step))
    }

    fn column_over_tight(&self, j: usize) -> Vec<f64> {
        self.tight_rows.iter().map(|&i| self.a(i, j)).collect()
    }

    fn k_times(&self, c: &[f64]) -> Vec<f64> {
        let k = self.k();
        (0..k).map(|p| (0..k).map(|l| self.kinv[p * k + l] * c[l]).sum()).collect()
    }

    fn update(&mut self, leaving: Leaving, entering: Entering, dir: f64, g: &[f64], w: &[f64]) {
        let k = self.k();
        let leave_state = if dir > 0.0 { State::Lower } else { State::Upper };
        match (leaving, entering) {
            (Leaving::Row(i), Entering::Col(q)) => {
                let kc = self.k_times(&self.column_over_tight(q));
                let s = g[q];
                let k2 = k + 1;
                let mut nk = vec![0.0; k2 * k2];
                for p in 0..k {
                    for l in 0..k {
                        nk[p * k2 + l] = self.kinv[p * k + l] + kc[p] * w[l] / s;
                    }
                    nk[p * k2 + k] = -kc[p] / s;
                }
                for l in 0..k {
                    nk[k * k2 + l] = -w[l] / s;
                }
                nk[k * k2 + k] = 1.0 / s;
                self.kinv = nk;
                self.basic_cols.push(q);
                self.tight_rows.push(i);
                self.col_state[q] = State::Basic;
                self.row_state[i] = leave_state;
            }
            (Leaving::Row(i), Entering::Row(l)) => {
                let wl = w[l];
                let kcol: Vec<f64> = (0..k).map(|p| self.kinv[p * k + l]).collect();
                for p in 0..k {
                    for m in 0..k {
                        let e = if m == l { 1.0 } else { 0.0 };
                        self.kinv[p * k + m] -= kcol[p] * (w[m] - e) / wl;
                    }
                }
                let old = self.tight_rows[l];
                self.row_state[old] = State::Basic;
                self.tight_rows[l] = i;
                self.row_state[i] = leave_state;
            }
            (Leaving::Col(p), Entering::Col(q)) => {
                let v = self.k_times(&self.column_over_tight(q));
                let vp = v[p];
                for l in 0..k {
                    self.kinv[p * k + l] /= vp;
                }
                for r in 0..k {
                    if r != p && v[r] != 0.0 {
                        for l in 0..k {
                            self.kinv[r * k + l] -= v[r] * self.kinv[p * k + l];
                        }
                    }
                }
                let old = self.basic_cols[p];
                self.col_state[old] = leave_state;
                self.basic_cols[p] = q;
                self.col_state[q] = State::Basic;
            }
            (Leaving::Col(p), Entering::Row(l)) => {
                let piv = self.kinv[p * k + l];
                let k2 = k - 1;
                let mut nk = vec![0.0; k2 * k2];
                let mut r2 = 0;
                for r in 0..k {
                    if r == p {
                        continue;
                    }
                    let mut c2 = 0;
                    for c in 0..k {
                        if c == l {
                            continue;
                        }
                        nk[r2 * k2 + c2] = self.kinv[r * k + c] - self.kinv[r * k + l] * self.kinv[p * k + c] / piv;
                        c2 += 1;
                    }
                    r2 += 1;
                }
                self.kinv = nk;
                let old_col = self.basic_cols.remove(p);
                let old_row = self.tight_rows.remove(l);
                self.col_state[old_col] = leave_state;
                self.row_state[old_row] = State::Basic;
            }
        }
        self.updates += 1;
    }

    fn finish(&self, status: LpStatus, iterations: usize) -> LpSolution {
        let x: Vec<f64> = self.x.iter().map(|&v| if v < 0.0 && v > -1e-12 { 0.0 } else { v }).collect();
        LpSolution {
            objective: self.lp.objective_value(&x),
            max_violation: self.lp.max_violation(&x),
            x,
            status,
            iterations,
        }
    }

    fn run(mut self) -> LpSolution {
        let cap = self.opts.max_iterations.unwrap_or(50 * (self.n + self.m));
        let mut iterations = 0;
        let mut degenerate = 0;
        let mut bland = false;
        self.compute_primal();
        self.compute_duals();
        loop {
            let Some((leaving, dir)) = self.choose_leaving(bland) else {
                break;
            };
            if iterations >= cap {
                return self.finish(LpStatus::IterationLimit, iterations);
            }
            iterations += 1;
            let (g, w) = self.pivot_row(&leaving);
            let h: Vec<f64> = w.clone();
            let Some((entering, step)) = self.ratio_test(&g, &h, dir, bland) else {
                return self.finish(LpStatus::Infeasible, iterations);
            };
            if step <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
            self.update(leaving, entering, dir, &g, &w);
            if self.updates >= REFACTOR_EVERY && !self.refactor() {
                // Drifted into a numerically singular basis; restart from the slack basis.
                self.restart();
            }
            self.compute_primal();
            self.compute_duals();
        }

        let scale = 1.0 + self.lp.bound_scale();
        let mut sol = self.finish(LpStatus::Optimal, iterations);
        if sol.max_violation > 1e-8 * scale && self.refactor() {
            self.compute_primal();
            sol = self.finish(LpStatus::Optimal, iterations);
        }
        let unbounded = (0..self.n).any(|j| self.artificial[j] && sol.x[j] >= 0.5 * self.col_upper[j]);
        if unbounded {
            sol.status = LpStatus::Unbounded;
        }
        sol
    }

    fn restart(&mut self) {
        self.basic_cols.clear();
        self.tight_rows.clear();
        self.kinv.clear();
        for j in 0..self.n {
            self.col_state[j] = if self.artificial[j] { State::Upper } else { State::Lower };
        }
        self.row_state.iter_mut().for_each(|s| *s = State::Basic);
        self.updates = 0;
    }
}
