//! Two-phase primal simplex with Bland's rule.
//!
//! Problems are `max cᵀx` subject to equality rows, `≤` rows and `x ≥ 0`.
//! Rows are scaled to unit max-norm and sign-normalized so the right-hand
//! side is non-negative; feasibility and optimality are then judged at the
//! caller's tolerance. The engine is a revised simplex over a dense LU of
//! the basis with product-form updates, refactorized every
//! [`REFACTOR_EVERY`] pivots.
//!
//! Columns come from an [`LpModel`], so structured problems can supply them
//! implicitly instead of materializing a matrix. [`LinearProgram`] is the
//! plain dense model.
//!
//! A solve may start from a previous basis ([`solve_model`] with `warm`).
//! If that basis is primal infeasible for the new data, a single auxiliary
//! column restores feasibility and a short phase 1 removes it; if the basis
//! is singular or cannot be repaired the solve restarts cold. Cold solves are
//! fully deterministic: the same input gives the same basis.

use thiserror::Error;

/// Pivots between LU refactorizations.
pub const REFACTOR_EVERY: usize = 64;
const PIVOT_TOL: f64 = 1e-9;
const SINGULAR_TOL: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("pivot limit of {0} reached")]
    IterationLimit(usize),
    #[error("basis became numerically singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Eq,
    Le,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Basic variable identity, stable across models with the same row layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisVar {
    Structural(usize),
    Slack(usize),
    Artificial(usize),
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variables; meaningful only when optimal.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Final basis, one entry per row.
    pub basis: Vec<BasisVar>,
    pub pivots: usize,
    /// Whether a supplied starting basis was used rather than a cold start.
    pub warm_started: bool,
}

/// Column-oriented view of an LP the engine can solve.
pub trait LpModel {
    fn num_rows(&self) -> usize;
    fn num_cols(&self) -> usize;
    fn row_kind(&self, row: usize) -> RowKind;
    fn rhs(&self, row: usize) -> f64;
    fn cost(&self, col: usize) -> f64;
    /// Appends the nonzero `(row, value)` entries of `col` to `out`.
    fn column(&self, col: usize, out: &mut Vec<(usize, f64)>);

    /// Max-norm of every row.
    fn row_norms(&self) -> Vec<f64> {
        let mut norms = vec![0.0f64; self.num_rows()];
        let mut buf = Vec::new();
        for j in 0..self.num_cols() {
            buf.clear();
            self.column(j, &mut buf);
            for &(i, v) in &buf {
                norms[i] = norms[i].max(v.abs());
            }
        }
        norms
    }

    /// Smallest column `j` with `skip[j] == false` and
    /// `cost_weight·c_j − Σ_i weights[i]·a_ij > tol`, with that value.
    fn first_improving(
        &self,
        weights: &[f64],
        cost_weight: f64,
        tol: f64,
        skip: &[bool],
    ) -> Option<(usize, f64)> {
        let mut buf = Vec::new();
        for j in 0..self.num_cols() {
            if skip[j] {
                continue;
            }
            buf.clear();
            self.column(j, &mut buf);
            let d = cost_weight * self.cost(j) - buf.iter().map(|&(i, v)| weights[i] * v).sum::<f64>();
            if d > tol {
                return Some((j, d));
            }
        }
        None
    }
}

/// Dense LP: maximize `objective·x` s.t. `eq_rows·x = eq_rhs`,
/// `le_rows·x ≤ le_rhs`, `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    eq_rows: Vec<Vec<f64>>,
    eq_rhs: Vec<f64>,
    le_rows: Vec<Vec<f64>>,
    le_rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            le_rows: Vec::new(),
            le_rhs: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn eq_constraints(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.eq_rows.iter().map(Vec::as_slice).zip(self.eq_rhs.iter().copied())
    }

    pub fn le_constraints(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.le_rows.iter().map(Vec::as_slice).zip(self.le_rhs.iter().copied())
    }

    pub fn num_eq(&self) -> usize {
        self.eq_rows.len()
    }

    pub fn num_le(&self) -> usize {
        self.le_rows.len()
    }

    fn check_row(&self, row: &[f64]) -> Result<(), LpError> {
        if row.len() != self.num_vars() {
            return Err(LpError::Dimension(format!(
                "row has {} coefficients, LP has {} variables",
                row.len(),
                self.num_vars()
            )));
        }
        Ok(())
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> Result<(), LpError> {
        self.check_row(&row)?;
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        Ok(())
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> Result<(), LpError> {
        self.check_row(&row)?;
        self.le_rows.push(row);
        self.le_rhs.push(rhs);
        Ok(())
    }

    /// Largest violation of any constraint or sign bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let eq = self
            .eq_constraints()
            .map(|(r, b)| (dot(r) - b).abs())
            .fold(0.0, f64::max);
        let le = self
            .le_constraints()
            .map(|(r, b)| (dot(r) - b).max(0.0))
            .fold(0.0, f64::max);
        let neg = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        eq.max(le).max(neg)
    }

    fn validate(&self) -> Result<(), LpError> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.objective) {
            return Err(LpError::NonFinite("objective".into()));
        }
        for (k, (row, rhs)) in self.eq_constraints().enumerate() {
            self.check_row(row)?;
            if !finite(row) || !rhs.is_finite() {
                return Err(LpError::NonFinite(format!("equality row {k}")));
            }
        }
        for (k, (row, rhs)) in self.le_constraints().enumerate() {
            self.check_row(row)?;
            if !finite(row) || !rhs.is_finite() {
                return Err(LpError::NonFinite(format!("inequality row {k}")));
            }
        }
        Ok(())
    }

    fn row(&self, i: usize) -> &[f64] {
        if i < self.eq_rows.len() {
            &self.eq_rows[i]
        } else {
            &self.le_rows[i - self.eq_rows.len()]
        }
    }
}

impl LpModel for LinearProgram {
    fn num_rows(&self) -> usize {
        self.eq_rows.len() + self.le_rows.len()
    }

    fn num_cols(&self) -> usize {
        self.num_vars()
    }

    fn row_kind(&self, row: usize) -> RowKind {
        if row < self.eq_rows.len() {
            RowKind::Eq
        } else {
            RowKind::Le
        }
    }

    fn rhs(&self, row: usize) -> f64 {
        if row < self.eq_rows.len() {
            self.eq_rhs[row]
        } else {
            self.le_rhs[row - self.eq_rows.len()]
        }
    }

    fn cost(&self, col: usize) -> f64 {
        self.objective[col]
    }

    fn column(&self, col: usize, out: &mut Vec<(usize, f64)>) {
        for i in 0..self.num_rows() {
            let v = self.row(i)[col];
            if v != 0.0 {
                out.push((i, v));
            }
        }
    }

    fn row_norms(&self) -> Vec<f64> {
        (0..self.num_rows())
            .map(|i| self.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .collect()
    }
}

/// Solves a dense LP from a cold start. `tol` is the feasibility and
/// optimality tolerance (1e−9 is a good default).
///
/// Equality rows that are linear combinations of earlier ones (with a
/// consistent right-hand side) are dropped first; the reported basis refers
/// to the original row numbering.
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let kept = independent_eq_rows(lp);
    if kept.len() == lp.num_eq() {
        return solve_model(lp, tol, None);
    }
    let rows = kept.into_iter().chain(lp.num_eq()..lp.num_rows()).collect();
    let view = RowSubset { lp, rows };
    let mut sol = solve_model(&view, tol, None)?;
    for v in &mut sol.basis {
        *v = match *v {
            BasisVar::Slack(i) => BasisVar::Slack(view.rows[i]),
            BasisVar::Artificial(i) => BasisVar::Artificial(view.rows[i]),
            s => s,
        };
    }
    Ok(sol)
}

const DEPENDENCE_TOL: f64 = 1e-9;

/// Indices of equality rows kept after removing those whose scaled
/// residual against earlier rows vanishes, rhs included.
fn independent_eq_rows(lp: &LinearProgram) -> Vec<usize> {
    let n = lp.num_vars();
    let mut echelon: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut kept = Vec::new();
    for (k, (row, rhs)) in lp.eq_constraints().enumerate() {
        let mut v: Vec<f64> = row.iter().copied().chain([rhs]).collect();
        let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if norm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        for (pivot, e) in &echelon {
            let f = v[*pivot];
            if f != 0.0 {
                v.iter_mut().zip(e).for_each(|(x, y)| *x -= f * y);
            }
        }
        let (pivot, big) = v[..n]
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(pi, pm), (i, x)| if x.abs() > pm { (i, x.abs()) } else { (pi, pm) });
        if big > DEPENDENCE_TOL {
            let p = v[pivot];
            v.iter_mut().for_each(|x| *x /= p);
            echelon.push((pivot, v));
            kept.push(k);
        } else if v[n].abs() > DEPENDENCE_TOL {
            // Inconsistent: keep it so phase 1 reports infeasibility.
            kept.push(k);
        }
    }
    kept
}

/// A dense LP restricted to a subset of its equality rows.
struct RowSubset<'a> {
    lp: &'a LinearProgram,
    /// Original indices of the kept equality rows, then all `≤` rows.
    rows: Vec<usize>,
}

impl LpModel for RowSubset<'_> {
    fn num_rows(&self) -> usize {
        self.rows.len()
    }

    fn num_cols(&self) -> usize {
        self.lp.num_vars()
    }

    fn row_kind(&self, row: usize) -> RowKind {
        self.lp.row_kind(self.rows[row])
    }

    fn rhs(&self, row: usize) -> f64 {
        self.lp.rhs(self.rows[row])
    }

    fn cost(&self, col: usize) -> f64 {
        self.lp.cost(col)
    }

    fn column(&self, col: usize, out: &mut Vec<(usize, f64)>) {
        for (new, &old) in self.rows.iter().enumerate() {
            let v = self.lp.row(old)[col];
            if v != 0.0 {
                out.push((new, v));
            }
        }
    }

    fn row_norms(&self) -> Vec<f64> {
        let all = self.lp.row_norms();
        self.rows.iter().map(|&i| all[i]).collect()
    }
}

/// Solves any [`LpModel`], optionally starting from `warm`.
pub fn solve_model<M: LpModel>(
    model: &M,
    tol: f64,
    warm: Option<&[BasisVar]>,
) -> Result<LpSolution, LpError> {
    if !(tol > 0.0) {
        return Err(LpError::BadTolerance(tol));
    }
    let mut engine = Engine::new(model, tol);
    if let Some(start) = warm {
        if let Some(sol) = engine.try_warm(start)? {
            return Ok(sol);
        }
        engine = Engine::new(model, tol);
    }
    engine.solve_cold()
}

// ---------------------------------------------------------------------------
// Dense LU with partial pivoting.

#[derive(Debug, Clone)]
struct Lu {
    n: usize,
    a: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(n: usize, mut a: Vec<f64>) -> Option<Self> {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best < SINGULAR_TOL {
                return None;
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let inv = 1.0 / a[k * n + k];
            let (top, bottom) = a.split_at_mut((k + 1) * n);
            let pivot_row = &top[k * n..(k + 1) * n];
            for i in 0..n - k - 1 {
                let row = &mut bottom[i * n..(i + 1) * n];
                if row[k] == 0.0 {
                    continue;
                }
                let l = row[k] * inv;
                row[k] = l;
                for j in k + 1..n {
                    row[j] -= l * pivot_row[j];
                }
            }
        }
        Some(Self { n, a, perm })
    }

    /// Solves `B x = rhs` in place.
    fn solve(&self, rhs: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let row = &self.a[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.a[i * n..(i + 1) * n];
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        rhs.copy_from_slice(&x);
    }

    /// Solves `yᵀ B = rhsᵀ` in place.
    fn solve_transpose(&self, rhs: &mut [f64]) {
        let n = self.n;
        let mut z = rhs.to_vec();
        // Uᵀ z = rhs
        for i in 0..n {
            let zi = z[i] / self.a[i * n + i];
            z[i] = zi;
            if zi != 0.0 {
                for j in i + 1..n {
                    z[j] -= self.a[i * n + j] * zi;
                }
            }
        }
        // Lᵀ w = z
        for i in (0..n).rev() {
            let wi = z[i];
            if wi != 0.0 {
                for j in 0..i {
                    z[j] -= self.a[i * n + j] * wi;
                }
            }
        }
        for (k, &p) in self.perm.iter().enumerate() {
            rhs[p] = z[k];
        }
    }
}

#[derive(Debug, Clone)]
struct Eta {
    row: usize,
    alpha: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Engine.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Minimize the sum of row artificials.
    Cold,
    /// Minimize the single auxiliary column of a repaired warm basis.
    Warm,
    Final,
}

struct Engine<'a, M: LpModel> {
    model: &'a M,
    tol: f64,
    rows: usize,
    n: usize,
    /// Row multiplier `sign / norm` applied to every row entry.
    scale: Vec<f64>,
    b: Vec<f64>,
    /// Slack column coefficient per `≤` row (`±1`), `None` for equalities.
    slack_sign: Vec<Option<f64>>,
    slack_col: Vec<Option<usize>>,
    slack_row: Vec<usize>,
    art_col: Vec<Option<usize>>,
    art_row: Vec<usize>,
    /// Dense column of the warm-start auxiliary variable, if any.
    aux: Option<Vec<f64>>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    x_b: Vec<f64>,
    lu: Option<Lu>,
    etas: Vec<Eta>,
    pivots: usize,
    max_pivots: usize,
    buf: Vec<(usize, f64)>,
}

impl<'a, M: LpModel> Engine<'a, M> {
    fn new(model: &'a M, tol: f64) -> Self {
        let rows = model.num_rows();
        let n = model.num_cols();
        let norms = model.row_norms();
        let mut scale = vec![1.0; rows];
        let mut b = vec![0.0; rows];
        let mut slack_sign = vec![None; rows];
        let mut slack_col = vec![None; rows];
        let mut slack_row = Vec::new();
        let mut needs_art = vec![false; rows];
        for i in 0..rows {
            let norm = if norms[i] > 0.0 { norms[i] } else { 1.0 };
            let raw = model.rhs(i) / norm;
            let sign = if raw < 0.0 { -1.0 } else { 1.0 };
            scale[i] = sign / norm;
            b[i] = raw * sign;
            match model.row_kind(i) {
                RowKind::Eq => needs_art[i] = true,
                RowKind::Le => {
                    slack_sign[i] = Some(sign);
                    slack_col[i] = Some(n + slack_row.len());
                    slack_row.push(i);
                    needs_art[i] = sign < 0.0;
                }
            }
        }
        let mut art_col = vec![None; rows];
        let mut art_row = Vec::new();
        let first_art = n + slack_row.len();
        for i in 0..rows {
            if needs_art[i] {
                art_col[i] = Some(first_art + art_row.len());
                art_row.push(i);
            }
        }
        let total = first_art + art_row.len() + 1;
        Self {
            model,
            tol,
            rows,
            n,
            scale,
            b,
            slack_sign,
            slack_col,
            slack_row,
            art_col,
            art_row,
            aux: None,
            basis: Vec::new(),
            in_basis: vec![false; total],
            x_b: Vec::new(),
            lu: None,
            etas: Vec::new(),
            pivots: 0,
            max_pivots: 100_000 + 20 * (rows + n),
            buf: Vec::new(),
        }
    }

    fn first_slack(&self) -> usize {
        self.n
    }

    fn first_art(&self) -> usize {
        self.n + self.slack_row.len()
    }

    fn aux_col(&self) -> usize {
        self.first_art() + self.art_row.len()
    }

    fn is_art(&self, col: usize) -> bool {
        col >= self.first_art()
    }

    fn var_of(&self, col: usize) -> BasisVar {
        if col < self.n {
            BasisVar::Structural(col)
        } else if col < self.first_art() {
            BasisVar::Slack(self.slack_row[col - self.n])
        } else {
            BasisVar::Artificial(self.art_row[col - self.first_art()])
        }
    }

    fn col_of(&self, var: BasisVar) -> Option<usize> {
        match var {
            BasisVar::Structural(j) if j < self.n => Some(j),
            BasisVar::Slack(i) if i < self.rows => self.slack_col[i],
            BasisVar::Artificial(i) if i < self.rows => self.art_col[i],
            _ => None,
        }
    }

    /// Scaled column as a dense vector.
    fn dense_col(&mut self, col: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        if col < self.n {
            self.buf.clear();
            self.model.column(col, &mut self.buf);
            for &(i, v) in &self.buf {
                out[i] += v * self.scale[i];
            }
        } else if col < self.first_art() {
            let i = self.slack_row[col - self.n];
            out[i] = self.slack_sign[i].expect("slack row");
        } else if col < self.aux_col() {
            out[self.art_row[col - self.first_art()]] = 1.0;
        } else {
            out.copy_from_slice(self.aux.as_ref().expect("auxiliary column"));
        }
        out
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.rows;
        let mut dense = vec![0.0; m * m];
        for k in 0..m {
            let col = self.dense_col(self.basis[k]);
            for i in 0..m {
                dense[i * m + k] = col[i];
            }
        }
        self.lu = Some(Lu::factor(m, dense).ok_or(LpError::Singular)?);
        self.etas.clear();
        let mut x = self.b.clone();
        self.ftran(&mut x);
        self.x_b = x;
        Ok(())
    }

    fn ftran(&self, x: &mut [f64]) {
        self.lu.as_ref().expect("factored").solve(x);
        for eta in &self.etas {
            let r = eta.row;
            let t = x[r] / eta.alpha[r];
            if t != 0.0 {
                for (xi, &a) in x.iter_mut().zip(&eta.alpha) {
                    *xi -= a * t;
                }
            }
            x[r] = t;
        }
    }

    fn btran(&self, y: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let r = eta.row;
            let s: f64 = eta
                .alpha
                .iter()
                .zip(y.iter())
                .enumerate()
                .filter(|&(i, _)| i != r)
                .map(|(_, (a, v))| a * v)
                .sum();
            y[r] = (y[r] - s) / eta.alpha[r];
        }
        self.lu.as_ref().expect("factored").solve_transpose(y);
    }

    fn phase_cost(&self, col: usize, phase: Phase) -> f64 {
        match phase {
            Phase::Cold => {
                if self.is_art(col) && col != self.aux_col() {
                    -1.0
                } else {
                    0.0
                }
            }
            Phase::Warm => {
                if col == self.aux_col() {
                    -1.0
                } else {
                    0.0
                }
            }
            Phase::Final => {
                if col < self.n {
                    self.model.cost(col)
                } else {
                    0.0
                }
            }
        }
    }

    /// Basic artificials that must stay at zero during this phase.
    fn locked(&self, col: usize, phase: Phase) -> bool {
        match phase {
            Phase::Cold => false,
            Phase::Warm => self.is_art(col) && col != self.aux_col(),
            Phase::Final => self.is_art(col),
        }
    }

    fn set_basis(&mut self, basis: Vec<usize>) {
        self.in_basis.iter_mut().for_each(|f| *f = false);
        for &c in &basis {
            self.in_basis[c] = true;
        }
        self.basis = basis;
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: Vec<f64>, theta: f64) -> Result<(), LpError> {
        for (xi, &a) in self.x_b.iter_mut().zip(&alpha) {
            *xi -= theta * a;
        }
        self.x_b[r] = theta;
        self.in_basis[self.basis[r]] = false;
        self.in_basis[q] = true;
        self.basis[r] = q;
        self.etas.push(Eta { row: r, alpha });
        self.pivots += 1;
        if self.etas.len() >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Runs simplex iterations for `phase` until optimal or unbounded.
    fn iterate(&mut self, phase: Phase) -> Result<LpStatus, LpError> {
        let m = self.rows;
        let mut y = vec![0.0; m];
        let mut weights = vec![0.0; m];
        loop {
            if self.pivots >= self.max_pivots {
                return Err(LpError::IterationLimit(self.max_pivots));
            }
            for (k, yk) in y.iter_mut().enumerate() {
                *yk = self.phase_cost(self.basis[k], phase);
            }
            self.btran(&mut y);
            for i in 0..m {
                weights[i] = y[i] * self.scale[i];
            }
            let cost_weight = if phase == Phase::Final { 1.0 } else { 0.0 };
            let mut entering = self
                .model
                .first_improving(&weights, cost_weight, self.tol, &self.in_basis[..self.n])
                .map(|(j, _)| j);
            if entering.is_none() {
                for (k, &i) in self.slack_row.iter().enumerate() {
                    let col = self.first_slack() + k;
                    if self.in_basis[col] {
                        continue;
                    }
                    let d = -y[i] * self.slack_sign[i].expect("slack row");
                    if d > self.tol {
                        entering = Some(col);
                        break;
                    }
                }
            }
            let Some(q) = entering else {
                return Ok(LpStatus::Optimal);
            };
            let mut alpha = self.dense_col(q);
            self.ftran(&mut alpha);

            let mut best: Option<(f64, usize)> = None;
            let mut candidates: Vec<(f64, usize)> = Vec::new();
            for i in 0..m {
                let a = alpha[i];
                let col = self.basis[i];
                let ratio = if self.locked(col, phase) {
                    if a.abs() > PIVOT_TOL {
                        0.0
                    } else {
                        continue;
                    }
                } else if a > PIVOT_TOL {
                    self.x_b[i].max(0.0) / a
                } else {
                    continue;
                };
                candidates.push((ratio, i));
                if best.is_none_or(|(b, _)| ratio < b) {
                    best = Some((ratio, i));
                }
            }
            let Some((min_ratio, _)) = best else {
                return Ok(LpStatus::Unbounded);
            };
            // Bland: among tied ratios the basic variable with smallest index leaves.
            let tie = 1e-12 * (1.0 + min_ratio);
            let r = candidates
                .iter()
                .filter(|&&(ratio, _)| ratio <= min_ratio + tie)
                .min_by_key(|&&(_, i)| self.basis[i])
                .map(|&(_, i)| i)
                .expect("nonempty");
            let theta = if self.locked(self.basis[r], phase) {
                0.0
            } else {
                self.x_b[r].max(0.0) / alpha[r]
            };
            self.pivot(r, q, alpha, theta)?;
        }
    }

    fn solve_cold(mut self) -> Result<LpSolution, LpError> {
        let basis: Vec<usize> = (0..self.rows)
            .map(|i| self.art_col[i].or(self.slack_col[i]).expect("row has a basic column"))
            .collect();
        self.set_basis(basis);
        self.refactor()?;
        if !self.art_row.is_empty() {
            self.iterate(Phase::Cold)?;
            let infeas: f64 = (0..self.rows)
                .filter(|&k| self.is_art(self.basis[k]))
                .map(|k| self.x_b[k].max(0.0))
                .sum();
            if infeas > self.tol * (self.rows as f64).max(1.0) {
                return Ok(self.finish(LpStatus::Infeasible, false));
            }
            self.drive_out_artificials()?;
        }
        let status = self.iterate(Phase::Final)?;
        Ok(self.finish(status, false))
    }

    /// Pivots zero-valued artificials out of the basis where some real
    /// column can replace them; the rest sit on redundant rows.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        for r in 0..self.rows {
            if !self.is_art(self.basis[r]) {
                continue;
            }
            let mut row = vec![0.0; self.rows];
            row[r] = 1.0;
            self.btran(&mut row);
            let candidate = (0..self.first_art()).find(|&j| {
                if self.in_basis[j] {
                    return false;
                }
                let col = self.dense_col(j);
                col.iter().zip(&row).map(|(a, b)| a * b).sum::<f64>().abs() > 1e-7
            });
            if let Some(q) = candidate {
                let mut alpha = self.dense_col(q);
                self.ftran(&mut alpha);
                let theta = self.x_b[r].max(0.0) / alpha[r];
                self.pivot(r, q, alpha, theta)?;
            }
        }
        Ok(())
    }

    /// Attempts a solve from `start`; `None` means fall back to cold.
    fn try_warm(&mut self, start: &[BasisVar]) -> Result<Option<LpSolution>, LpError> {
        if start.len() != self.rows {
            return Ok(None);
        }
        let mut basis = Vec::with_capacity(self.rows);
        for &v in start {
            match self.col_of(v) {
                Some(c) if !basis.contains(&c) => basis.push(c),
                _ => return Ok(None),
            }
        }
        self.set_basis(basis);
        if self.refactor().is_err() {
            return Ok(None);
        }
        let feas = self.tol;
        if (0..self.rows).any(|k| self.is_art(self.basis[k]) && self.x_b[k] > feas) {
            return Ok(None);
        }
        let neg: Vec<usize> = (0..self.rows).filter(|&k| self.x_b[k] < -feas).collect();
        if !neg.is_empty() {
            // Auxiliary column −Σ_{k∈neg} B_k: entering it at level θ lifts every
            // negative basic value by θ.
            let mut aux = vec![0.0; self.rows];
            for &k in &neg {
                let col = self.dense_col(self.basis[k]);
                for (a, v) in aux.iter_mut().zip(col) {
                    *a -= v;
                }
            }
            self.aux = Some(aux);
            let q = self.aux_col();
            let mut alpha = self.dense_col(q);
            self.ftran(&mut alpha);
            let r = *neg
                .iter()
                .min_by(|&&a, &&b| self.x_b[a].partial_cmp(&self.x_b[b]).expect("finite"))
                .expect("nonempty");
            let theta = -self.x_b[r];
            for (xi, &a) in self.x_b.iter_mut().zip(&alpha) {
                *xi -= theta * a;
            }
            self.x_b[r] = theta;
            self.in_basis[self.basis[r]] = false;
            self.in_basis[q] = true;
            self.basis[r] = q;
            self.etas.push(Eta { row: r, alpha });
            self.pivots += 1;
            if self.iterate(Phase::Warm).is_err() {
                return Ok(None);
            }
            if let Some(k) = self.basis.iter().position(|&c| c == self.aux_col()) {
                if self.x_b[k] > feas {
                    return Ok(None);
                }
            }
        }
        for x in self.x_b.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        match self.iterate(Phase::Final) {
            Ok(status) => Ok(Some(self.finish(status, true))),
            Err(LpError::Singular) | Err(LpError::IterationLimit(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn finish(&self, status: LpStatus, warm: bool) -> LpSolution {
        let mut x = vec![0.0; self.n];
        for (k, &col) in self.basis.iter().enumerate() {
            if col < self.n {
                x[col] = self.x_b[k].max(0.0);
            }
        }
        let objective = self
            .basis
            .iter()
            .filter(|&&c| c < self.n)
            .map(|&c| self.model.cost(c) * x[c])
            .sum();
        let aux = self.aux_col();
        LpSolution {
            status,
            x,
            objective,
            basis: self
                .basis
                .iter()
                .map(|&c| {
                    if c == aux {
                        // Zero-level auxiliary: report the row's artificial
                        // (or slack) so the basis stays reusable.
                        let r = self.basis.iter().position(|&b| b == c).expect("basic");
                        self.art_col[r]
                            .or(self.slack_col[r])
                            .map(|col| self.var_of(col))
                            .unwrap_or(BasisVar::Artificial(r))
                    } else {
                        self.var_of(c)
                    }
                })
                .collect(),
            pivots: self.pivots,
            warm_started: warm,
        }
    }
}
