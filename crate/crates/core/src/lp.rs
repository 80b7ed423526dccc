//! Small dense linear programs: a two-phase tableau simplex with Bland's rule,
//! plus a brute-force vertex enumerator used as a test oracle.
//!
//! Problems are stated as
//!
//! ```text
//! minimize    cᵀy
//! subject to  A_eq y  = b_eq
//!             A_ub y ≤ b_ub
//!             lo ≤ y ≤ hi      (lo may be −∞, hi may be +∞)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub ub_rows: Vec<Vec<f64>>,
    pub ub_rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// `min cᵀy` with every variable in `[0, +∞)` and no rows yet.
    pub fn new(objective: Vec<f64>) -> Self {
        let m = objective.len();
        Self {
            objective,
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            ub_rows: Vec::new(),
            ub_rhs: Vec::new(),
            lower: vec![0.0; m],
            upper: vec![f64::INFINITY; m],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.ub_rows.push(row);
        self.ub_rhs.push(rhs);
        self
    }

    /// `rowᵀy ≥ rhs`, stored as `−rowᵀy ≤ −rhs`.
    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.add_le(row.into_iter().map(|v| -v).collect(), -rhs)
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) -> &mut Self {
        self.lower[var] = lo;
        self.upper[var] = hi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_vars();
        if m == 0 {
            return Err(Error::invalid("linear program without variables"));
        }
        let dims = [self.lower.len(), self.upper.len()];
        for got in dims {
            if got != m {
                return Err(Error::DimensionMismatch { expected: m, got });
            }
        }
        if self.eq_rows.len() != self.eq_rhs.len() || self.ub_rows.len() != self.ub_rhs.len() {
            return Err(Error::invalid(
                "row count and right-hand side length differ",
            ));
        }
        for row in self.eq_rows.iter().chain(&self.ub_rows) {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: row.len(),
                });
            }
        }
        for j in 0..m {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan()
                || hi.is_nan()
                || lo > hi
                || lo == f64::INFINITY
                || hi == f64::NEG_INFINITY
            {
                return Err(Error::invalid(format!(
                    "bad bounds [{lo}, {hi}] on variable {j}"
                )));
            }
        }
        Ok(())
    }

    pub fn objective_at(&self, y: &[f64]) -> f64 {
        self.objective.iter().zip(y).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any constraint at `y` (0 when feasible).
    pub fn max_violation(&self, y: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(y).map(|(a, v)| a * v).sum::<f64>();
        let mut worst = 0.0f64;
        for (row, b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            worst = worst.max((dot(row) - b).abs());
        }
        for (row, b) in self.ub_rows.iter().zip(&self.ub_rhs) {
            worst = worst.max(dot(row) - b);
        }
        for j in 0..y.len() {
            worst = worst.max(self.lower[j] - y[j]).max(y[j] - self.upper[j]);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub point: Vec<f64>,
    /// Multipliers of the equality rows followed by the inequality rows, in
    /// the sign convention of the Lagrangian `cᵀy − Σ yᵣ (aᵣᵀy − bᵣ)`; empty
    /// unless optimal or when produced by the enumeration oracle.
    pub row_duals: Vec<f64>,
}

impl LpSolution {
    fn infeasible(m: usize) -> Self {
        Self {
            status: LpStatus::Infeasible,
            value: f64::INFINITY,
            point: vec![f64::NAN; m],
            row_duals: Vec::new(),
        }
    }

    fn unbounded(m: usize) -> Self {
        Self {
            status: LpStatus::Unbounded,
            value: f64::NEG_INFINITY,
            point: vec![f64::NAN; m],
            row_duals: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// How an original variable maps onto nonnegative tableau columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `y = shift + p`
    Shifted { col: usize, shift: f64 },
    /// `y = shift − p`
    Mirrored { col: usize, shift: f64 },
    /// `y = p − q`
    Free { pos: usize, neg: usize },
}

struct Tableau {
    rows: usize,
    /// Total columns excluding the right-hand side.
    cols: usize,
    /// `rows` constraint rows then one objective row, each `cols + 1` wide.
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.cols + 1) + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn obj_row(&self) -> usize {
        self.rows
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let piv = self.data[r * w + c];
        {
            let row = &mut self.data[r * w..(r + 1) * w];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[c] = 1.0;
        }
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        let eliminate = |row: &mut [f64]| {
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        };
        before.chunks_exact_mut(w).for_each(eliminate);
        after.chunks_exact_mut(w).for_each(eliminate);
        self.basis[r] = c;
    }

    /// Bland's rule: lowest eligible entering column, lowest basic index on ratio ties.
    fn run(&mut self, allowed: usize, iterations: &mut usize, cap: usize) -> Result<bool> {
        let obj = self.obj_row();
        loop {
            let entering = (0..allowed).find(|&j| self.at(obj, j) < -COST_TOL);
            let Some(c) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Ok(false);
            };
            *iterations += 1;
            if *iterations > cap {
                return Err(Error::SimplexStalled(cap));
            }
            self.pivot(r, c);
        }
    }
}

/// Two-phase dense simplex. `Err(SimplexStalled)` if the iteration cap of
/// `50·(rows + cols)` is exceeded.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let m = lp.num_vars();

    // Column map for the structural variables.
    let mut maps = Vec::with_capacity(m);
    let mut ns = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..m {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        let map = if lo.is_finite() {
            if hi.is_finite() {
                bound_rows.push((ns, hi - lo));
            }
            VarMap::Shifted { col: ns, shift: lo }
        } else if hi.is_finite() {
            VarMap::Mirrored { col: ns, shift: hi }
        } else {
            ns += 1;
            VarMap::Free {
                pos: ns - 1,
                neg: ns,
            }
        };
        ns += 1;
        maps.push(map);
    }

    let n_eq = lp.eq_rows.len();
    let n_ub = lp.ub_rows.len();
    let n_rows = n_eq + n_ub + bound_rows.len();

    // Rows in standard columns: (coefficients, rhs, is_equality).
    let mut std_rows: Vec<(Vec<f64>, f64, bool)> = Vec::with_capacity(n_rows);
    let mut convert = |row: &[f64], rhs: f64, eq: bool| {
        let mut coeffs = vec![0.0; ns];
        let mut b = rhs;
        for (j, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shifted { col, shift } => {
                    coeffs[col] += a;
                    b -= a * shift;
                }
                VarMap::Mirrored { col, shift } => {
                    coeffs[col] -= a;
                    b -= a * shift;
                }
                VarMap::Free { pos, neg } => {
                    coeffs[pos] += a;
                    coeffs[neg] -= a;
                }
            }
        }
        std_rows.push((coeffs, b, eq));
    };
    for (row, &b) in lp.eq_rows.iter().zip(&lp.eq_rhs) {
        convert(row, b, true);
    }
    for (row, &b) in lp.ub_rows.iter().zip(&lp.ub_rhs) {
        convert(row, b, false);
    }
    for &(col, width) in &bound_rows {
        let mut coeffs = vec![0.0; ns];
        coeffs[col] = 1.0;
        std_rows.push((coeffs, width, false));
    }

    let mut cost = vec![0.0; ns];
    for (j, &c) in lp.objective.iter().enumerate() {
        match maps[j] {
            VarMap::Shifted { col, .. } => cost[col] += c,
            VarMap::Mirrored { col, .. } => cost[col] -= c,
            VarMap::Free { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    // Column layout: structural | one slack per inequality | artificials.
    let n_slack = n_rows - n_eq;
    let slack0 = ns;
    let art0 = ns + n_slack;
    let mut signs = vec![1.0; n_rows];
    let mut init_col = vec![0usize; n_rows];
    let mut n_art = 0usize;
    for (r, (_, b, eq)) in std_rows.iter().enumerate() {
        if *b < 0.0 {
            signs[r] = -1.0;
        }
        if !*eq && signs[r] > 0.0 {
            init_col[r] = slack0 + (r - n_eq);
        } else {
            init_col[r] = art0 + n_art;
            n_art += 1;
        }
    }
    let cols = art0 + n_art;
    let w = cols + 1;
    let mut t = Tableau {
        rows: n_rows,
        cols,
        data: vec![0.0; (n_rows + 1) * w],
        basis: init_col.clone(),
    };
    for (r, (coeffs, b, eq)) in std_rows.iter().enumerate() {
        let s = signs[r];
        let row = &mut t.data[r * w..(r + 1) * w];
        for (j, &a) in coeffs.iter().enumerate() {
            row[j] = s * a;
        }
        if !*eq {
            row[slack0 + (r - n_eq)] = s;
        }
        if init_col[r] >= art0 {
            row[init_col[r]] = 1.0;
        }
        row[cols] = s * b;
    }

    let cap = 50 * (n_rows + cols);
    let mut iterations = 0usize;
    let obj = t.obj_row();

    if n_art > 0 {
        // Phase 1: minimise the sum of artificials.
        for r in 0..n_rows {
            if init_col[r] >= art0 {
                for j in 0..w {
                    let v = t.data[r * w + j];
                    if j < art0 || j == cols {
                        t.data[obj * w + j] -= v;
                    }
                }
            }
        }
        t.run(art0, &mut iterations, cap)?;
        let infeasibility = -t.rhs(obj);
        let scale = std_rows
            .iter()
            .map(|(_, b, _)| b.abs())
            .fold(1.0f64, f64::max);
        if infeasibility > FEAS_TOL * scale {
            return Ok(LpSolution::infeasible(m));
        }
        // Drive zero-level artificials out of the basis where possible;
        // rows where that fails are redundant and stay inert.
        for r in 0..n_rows {
            if t.basis[r] >= art0 {
                if let Some(c) = (0..art0).find(|&j| t.at(r, j).abs() > PIVOT_TOL) {
                    t.pivot(r, c);
                }
            }
        }
    }

    // Phase 2 objective row: reduced costs for the true cost vector.
    for j in 0..w {
        t.data[obj * w + j] = if j < ns { cost[j] } else { 0.0 };
    }
    for r in 0..n_rows {
        let b = t.basis[r];
        let cb = if b < ns { cost[b] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..w {
                let v = t.data[r * w + j];
                t.data[obj * w + j] -= cb * v;
            }
        }
    }
    if !t.run(art0, &mut iterations, cap)? {
        return Ok(LpSolution::unbounded(m));
    }

    let mut p = vec![0.0; ns];
    for r in 0..n_rows {
        if t.basis[r] < ns {
            p[t.basis[r]] = t.rhs(r);
        }
    }
    let point: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Shifted { col, shift } => shift + p[col],
            VarMap::Mirrored { col, shift } => shift - p[col],
            VarMap::Free { pos, neg } => p[pos] - p[neg],
        })
        .collect();

    // y'_r = c_B B⁻¹ e_r = −(reduced cost of the row's initial identity column).
    let row_duals: Vec<f64> = (0..n_eq + n_ub)
        .map(|r| -signs[r] * t.at(obj, init_col[r]))
        .collect();

    Ok(LpSolution {
        status: LpStatus::Optimal,
        value: lp.objective_at(&point),
        point,
        row_duals,
    })
}

/// Solves a square system by Gaussian elimination with partial pivoting.
/// `None` when the matrix is numerically singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-10 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for i in col + 1..n {
            let f = a[i][col] / a[col][col];
            if f != 0.0 {
                for j in col..n {
                    a[i][j] -= f * a[col][j];
                }
                b[i] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Exact optimum of a small bounded LP by enumerating every basis.
///
/// Intended as a test oracle; refuses more than 8 variables. The feasible
/// region must be bounded (an unbounded objective is not detected).
pub fn enumerate_vertices(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let m = lp.num_vars();
    if m > 8 {
        return Err(Error::OracleScale(format!("{m} variables (max 8)")));
    }
    // Every vertex is pinned down by m linearly independent active
    // constraints; equalities are active everywhere, so draw bases from all.
    let mut active: Vec<(Vec<f64>, f64)> = lp
        .eq_rows
        .iter()
        .cloned()
        .zip(lp.eq_rhs.iter().copied())
        .chain(lp.ub_rows.iter().cloned().zip(lp.ub_rhs.iter().copied()))
        .collect();
    for j in 0..m {
        let unit = |s: f64| {
            let mut e = vec![0.0; m];
            e[j] = s;
            e
        };
        if lp.lower[j].is_finite() {
            active.push((unit(-1.0), -lp.lower[j]));
        }
        if lp.upper[j].is_finite() {
            active.push((unit(1.0), lp.upper[j]));
        }
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut choose = Vec::with_capacity(m);
    let mut visit = |subset: &[usize]| {
        let a: Vec<Vec<f64>> = subset.iter().map(|&i| active[i].0.clone()).collect();
        let b: Vec<f64> = subset.iter().map(|&i| active[i].1).collect();
        let Some(y) = solve_dense(a, b) else {
            return;
        };
        let scale = y.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        if lp.max_violation(&y) > 1e-9 * scale {
            return;
        }
        let v = lp.objective_at(&y);
        if best.as_ref().is_none_or(|(bv, _)| v < *bv - 1e-12) {
            best = Some((v, y));
        }
    };
    combinations(active.len(), m, &mut choose, 0, &mut visit);
    Ok(match best {
        Some((value, point)) => LpSolution {
            status: LpStatus::Optimal,
            value,
            point,
            row_duals: Vec::new(),
        },
        None => LpSolution::infeasible(m),
    })
}

fn combinations<F: FnMut(&[usize])>(
    n: usize,
    k: usize,
    current: &mut Vec<usize>,
    start: usize,
    visit: &mut F,
) {
    if current.len() == k {
        visit(current);
        return;
    }
    for i in start..n {
        if n - i < k - current.len() {
            break;
        }
        current.push(i);
        combinations(n, k, current, i + 1, visit);
        current.pop();
    }
}
