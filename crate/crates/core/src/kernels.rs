//! Linear-algebra kernels run in an emulated format, with measured errors
//! and the DBEA / MMIBEA / VIBEA bounds attached.
//!
//! Every kernel has a `*_with` form generic over [`Arithmetic`], used both
//! for real emulation and for the statistical rounding model, and an
//! `*_emulated` form that also measures the errors against the `f64`
//! reference and returns a [`KernelRun`].

use std::fmt;
use std::str::FromStr;

use crate::bounds::{
    gamma_dbea, gamma_mmibea, gamma_vibea, solve_member_confidence, union_confidence, CBound,
    LogErrorStats, Method,
};
use crate::error::{Error, Result};
use crate::precision::{Arithmetic, FloatFormat};

/// Dense matrix in column-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        let mut data = vec![0.0; m * n];
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                data[j * m + i] = v;
            }
        }
        Ok(Matrix { rows: m, cols: n, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn as_col_major(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn round_to(&self, fmt: &FloatFormat) -> Result<Matrix> {
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: fmt.round_slice(&self.data)?,
        })
    }
}

/// Tridiagonal matrix: `sub[i-1] = A[i][i-1]`, `diag[i] = A[i][i]`, `sup[i] = A[i][i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriDiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl TriDiagonal {
    pub fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if sub.len() != n - 1 || sup.len() != n - 1 {
            return Err(Error::ShapeMismatch(format!(
                "tridiagonal of order {n} needs off-diagonals of length {}, got {} and {}",
                n - 1,
                sub.len(),
                sup.len()
            )));
        }
        Ok(TriDiagonal { sub, diag, sup })
    }

    pub fn identity(n: usize) -> Self {
        TriDiagonal {
            sub: vec![0.0; n.saturating_sub(1)],
            diag: vec![1.0; n],
            sup: vec![0.0; n.saturating_sub(1)],
        }
    }

    /// `tridiag(a, b, c)` with constant bands.
    pub fn constant(n: usize, a: f64, b: f64, c: f64) -> Self {
        TriDiagonal {
            sub: vec![a; n - 1],
            diag: vec![b; n],
            sup: vec![c; n - 1],
        }
    }

    pub fn order(&self) -> usize {
        self.diag.len()
    }

    /// `A x` in `f64`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.order();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.sup[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.order();
        Matrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i == j + 1 {
                self.sub[j]
            } else if j == i + 1 {
                self.sup[i]
            } else {
                0.0
            }
        })
    }

    pub fn round_to(&self, fmt: &FloatFormat) -> Result<TriDiagonal> {
        Ok(TriDiagonal {
            sub: fmt.round_slice(&self.sub)?,
            diag: fmt.round_slice(&self.diag)?,
            sup: fmt.round_slice(&self.sup)?,
        })
    }
}

/// Doolittle factors of a tridiagonal matrix: unit lower bidiagonal `L`
/// with subdiagonal `l`, upper bidiagonal `U` with diagonal `u` and the
/// original superdiagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LuFactors {
    pub l: Vec<f64>,
    pub u: Vec<f64>,
    pub sup: Vec<f64>,
}

impl LuFactors {
    pub fn order(&self) -> usize {
        self.u.len()
    }

    /// `(|L||U| |x|)_i`, the Oettli-Prager denominator for the solve.
    pub fn abs_product_apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.order();
        (0..n)
            .map(|i| {
                let mut s = self.u[i].abs() * x[i].abs();
                if i > 0 {
                    let l = self.l[i - 1].abs();
                    s += l * self.u[i - 1].abs() * x[i - 1].abs() + l * self.sup[i - 1].abs() * x[i].abs();
                }
                if i + 1 < n {
                    s += self.sup[i].abs() * x[i + 1].abs();
                }
                s
            })
            .collect()
    }

    /// `L U` as a tridiagonal matrix, in `f64`.
    pub fn product(&self) -> TriDiagonal {
        let n = self.order();
        TriDiagonal {
            sub: (1..n).map(|i| self.l[i - 1] * self.u[i - 1]).collect(),
            diag: (0..n)
                .map(|i| if i == 0 { self.u[0] } else { self.l[i - 1] * self.sup[i - 1] + self.u[i] })
                .collect(),
            sup: self.sup.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Dot,
    Matvec,
    Matmul,
    Thomas,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Dot => "dot",
            Kernel::Matvec => "matvec",
            Kernel::Matmul => "matmul",
            Kernel::Thomas => "thomas",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How bounds are attached: the joint confidence every probabilistic
/// bound should reach, and the Bernstein constant used by VIBEA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConfig {
    pub target: f64,
    pub c_bound: CBound,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            target: 0.99,
            c_bound: CBound::Paper,
        }
    }
}

/// One method's constant for a run. `gamma` is `None` when DBEA is invalid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEntry {
    pub method: Method,
    pub gamma: Option<f64>,
    /// Confidence of each individual rounding-error product.
    pub member_zeta: f64,
    /// Confidence that all products of the run are bounded at once.
    pub confidence: f64,
    /// Bound on the relative forward error, when the run defines one.
    pub forward: Option<f64>,
}

impl BoundEntry {
    pub fn is_valid(&self) -> bool {
        self.gamma.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelRun {
    pub kernel: Kernel,
    pub fmt: FloatFormat,
    pub measured_bwd: f64,
    pub measured_fwd: f64,
    pub bounds: Vec<BoundEntry>,
    /// `n` in the constants `gamma_n` (largest index for the Thomas solve).
    pub op_count: u64,
    /// Number of rounding-error products covered by the union bound.
    pub events: u64,
    /// Factor turning `gamma` into the relative forward-error bound.
    pub condition: f64,
    /// Rows skipped in the backward error because their denominator is zero.
    pub excluded_rows: usize,
}

impl KernelRun {
    pub fn bound(&self, method: Method) -> Option<&BoundEntry> {
        self.bounds.iter().find(|b| b.method == method)
    }

    pub fn gamma(&self, method: Method) -> Option<f64> {
        self.bound(method).and_then(|b| b.gamma)
    }
}

/// `gamma_n` for the three methods at the member confidence solved from
/// `cfg.target` over `events` products.
pub fn attach_bounds(u: f64, n: u64, events: u64, cfg: &BoundConfig) -> Result<Vec<BoundEntry>> {
    let zeta = solve_member_confidence(cfg.target, events)?;
    let stats = LogErrorStats::uniform_with(u, cfg.c_bound)?;
    let q = union_confidence(zeta, events);
    Ok(vec![
        BoundEntry {
            method: Method::Dbea,
            gamma: gamma_dbea(u, n).ok().map(|r| r.gamma),
            member_zeta: 1.0,
            confidence: 1.0,
            forward: None,
        },
        BoundEntry {
            method: Method::Mmibea,
            gamma: Some(gamma_mmibea(zeta, u, n)?.gamma),
            member_zeta: zeta,
            confidence: q,
            forward: None,
        },
        BoundEntry {
            method: Method::Vibea,
            gamma: Some(gamma_vibea(zeta, u, n, &stats)?.gamma),
            member_zeta: zeta,
            confidence: q,
            forward: None,
        },
    ])
}

fn with_forward(mut bounds: Vec<BoundEntry>, condition: f64) -> Vec<BoundEntry> {
    for b in &mut bounds {
        b.forward = b.gamma.map(|g| g * condition);
    }
    bounds
}

fn check_members(xs: &[f64], fmt: &FloatFormat) -> Result<()> {
    match xs.iter().find(|&&x| !fmt.is_representable(x)) {
        Some(x) => Err(Error::invalid(format!("input {x:e} is not a member of {fmt}; round it first"))),
        None => Ok(()),
    }
}

/// Left-to-right recursive dot product `s_i = s_{i-1} + a_i b_i`.
pub fn dot_with<A: Arithmetic>(a: &[f64], b: &[f64], ar: &mut A) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("dot of lengths {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut s = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let p = ar.mul(x, y)?;
        s = ar.add(s, p)?;
    }
    Ok(s)
}

/// `(|y_hat - y| / (|a|^T |b|), |y_hat - y| / |y|, |a|^T |b| / |y|)` in `f64`.
fn dot_errors(a: &[f64], b: &[f64], y_hat: f64) -> (f64, f64, f64) {
    let y: f64 = a.iter().zip(b).map(|(x, z)| x * z).sum();
    let scale: f64 = a.iter().zip(b).map(|(x, z)| (x * z).abs()).sum();
    let err = (y_hat - y).abs();
    let bwd = if scale == 0.0 { 0.0 } else { err / scale };
    let (fwd, cond) = if y == 0.0 {
        (if err == 0.0 { 0.0 } else { f64::INFINITY }, f64::INFINITY)
    } else {
        (err / y.abs(), scale / y.abs())
    };
    (bwd, fwd, cond)
}

/// Measured errors and bounds for a dot product computed as `y_hat`.
pub fn dot_report(a: &[f64], b: &[f64], y_hat: f64, fmt: &FloatFormat, cfg: &BoundConfig) -> Result<KernelRun> {
    let n = a.len() as u64;
    let (bwd, fwd, cond) = dot_errors(a, b, y_hat);
    let bounds = attach_bounds(fmt.unit_roundoff(), n, n, cfg)?;
    Ok(KernelRun {
        kernel: Kernel::Dot,
        fmt: *fmt,
        measured_bwd: bwd,
        measured_fwd: fwd,
        bounds: with_forward(bounds, cond),
        op_count: n,
        events: n,
        condition: cond,
        excluded_rows: 0,
    })
}

/// Dot product of two vectors already rounded to `fmt`.
pub fn dot_emulated(a: &[f64], b: &[f64], fmt: &FloatFormat, cfg: &BoundConfig) -> Result<(f64, KernelRun)> {
    check_members(a, fmt)?;
    check_members(b, fmt)?;
    let mut ar = *fmt;
    let y_hat = dot_with(a, b, &mut ar)?;
    Ok((y_hat, dot_report(a, b, y_hat, fmt, cfg)?))
}

pub fn matvec_with<A: Arithmetic>(a: &Matrix, x: &[f64], ar: &mut A) -> Result<Vec<f64>> {
    if a.cols() != x.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} matrix times vector of length {}",
            a.rows(),
            a.cols(),
            x.len()
        )));
    }
    (0..a.rows()).map(|i| dot_with(&a.row(i), x, ar)).collect()
}

/// Componentwise backward error `max_i |y_hat - y|_i / (|A||x|)_i`, the
/// normwise forward error, `||(|A||x|)||_inf / ||y||_inf`, and the number of
/// rows with zero denominator.
fn matvec_errors(a: &Matrix, x: &[f64], y_hat: &[f64]) -> (f64, f64, f64, usize) {
    let mut bwd: f64 = 0.0;
    let mut excluded = 0;
    let (mut err_max, mut y_max, mut scale_max): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (i, &yh) in y_hat.iter().enumerate() {
        let mut y = 0.0;
        let mut scale = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            y += a.get(i, j) * xj;
            scale += (a.get(i, j) * xj).abs();
        }
        let err = (yh - y).abs();
        if scale == 0.0 {
            excluded += 1;
        } else {
            bwd = bwd.max(err / scale);
        }
        err_max = err_max.max(err);
        y_max = y_max.max(y.abs());
        scale_max = scale_max.max(scale);
    }
    let (fwd, cond) = if y_max == 0.0 {
        (if err_max == 0.0 { 0.0 } else { f64::INFINITY }, f64::INFINITY)
    } else {
        (err_max / y_max, scale_max / y_max)
    };
    (bwd, fwd, cond, excluded)
}

pub fn matvec_report(a: &Matrix, x: &[f64], y_hat: &[f64], fmt: &FloatFormat, cfg: &BoundConfig) -> Result<KernelRun> {
    let n = a.cols() as u64;
    let events = a.rows() as u64 * n;
    let (bwd, fwd, cond, excluded) = matvec_errors(a, x, y_hat);
    let bounds = attach_bounds(fmt.unit_roundoff(), n, events, cfg)?;
    Ok(KernelRun {
        kernel: Kernel::Matvec,
        fmt: *fmt,
        measured_bwd: bwd,
        measured_fwd: fwd,
        bounds: with_forward(bounds, cond),
        op_count: n,
        events,
        condition: cond,
        excluded_rows: excluded,
    })
}

pub fn matvec_emulated(a: &Matrix, x: &[f64], fmt: &FloatFormat, cfg: &BoundConfig) -> Result<(Vec<f64>, KernelRun)> {
    check_members(a.as_col_major(), fmt)?;
    check_members(x, fmt)?;
    let mut ar = *fmt;
    let y_hat = matvec_with(a, x, &mut ar)?;
    let run = matvec_report(a, x, &y_hat, fmt, cfg)?;
    Ok((y_hat, run))
}

pub fn matmul_with<A: Arithmetic>(a: &Matrix, b: &Matrix, ar: &mut A) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} times {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut data = Vec::with_capacity(a.rows() * b.cols());
    for j in 0..b.cols() {
        data.extend(matvec_with(a, b.column(j), ar)?);
    }
    Matrix::from_col_major(a.rows(), b.cols(), data)
}

/// Product of two matrices already rounded to `fmt`. The backward-error
/// slot holds `max_ij |C_hat - C|_ij / (|A||B|)_ij`, the quantity bounded by
/// `gamma_n`; the forward slot holds `max_ij |C_hat - C|_ij / |C|_ij`.
pub fn matmul_emulated(a: &Matrix, b: &Matrix, fmt: &FloatFormat, cfg: &BoundConfig) -> Result<(Matrix, KernelRun)> {
    check_members(a.as_col_major(), fmt)?;
    check_members(b.as_col_major(), fmt)?;
    let mut ar = *fmt;
    let c_hat = matmul_with(a, b, &mut ar)?;
    let n = a.cols() as u64;
    let events = a.rows() as u64 * n * b.cols() as u64;
    let (mut bwd, mut fwd, mut cond): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut excluded = 0;
    for j in 0..b.cols() {
        for i in 0..a.rows() {
            let mut c = 0.0;
            let mut scale = 0.0;
            for k in 0..a.cols() {
                c += a.get(i, k) * b.get(k, j);
                scale += (a.get(i, k) * b.get(k, j)).abs();
            }
            let err = (c_hat.get(i, j) - c).abs();
            if scale == 0.0 {
                excluded += 1;
                continue;
            }
            bwd = bwd.max(err / scale);
            if c != 0.0 {
                fwd = fwd.max(err / c.abs());
                cond = cond.max(scale / c.abs());
            } else if err != 0.0 {
                fwd = f64::INFINITY;
                cond = f64::INFINITY;
            }
        }
    }
    let bounds = attach_bounds(fmt.unit_roundoff(), n, events, cfg)?;
    let run = KernelRun {
        kernel: Kernel::Matmul,
        fmt: *fmt,
        measured_bwd: bwd,
        measured_fwd: fwd,
        bounds: with_forward(bounds, cond),
        op_count: n,
        events,
        condition: cond,
        excluded_rows: excluded,
    };
    Ok((c_hat, run))
}

/// `l_i = alpha_i / u_{i-1}`, `u_i = beta_i - l_i nu_{i-1}`.
pub fn thomas_factor_with<A: Arithmetic>(t: &TriDiagonal, ar: &mut A) -> Result<LuFactors> {
    let n = t.order();
    let mut l = Vec::with_capacity(n.saturating_sub(1));
    let mut u = Vec::with_capacity(n);
    u.push(t.diag[0]);
    for i in 1..n {
        if u[i - 1] == 0.0 {
            return Err(Error::ZeroPivot { index: i - 1 });
        }
        let li = ar.div(t.sub[i - 1], u[i - 1])?;
        let p = ar.mul(li, t.sup[i - 1])?;
        u.push(ar.sub(t.diag[i], p)?);
        l.push(li);
    }
    if u[n - 1] == 0.0 {
        return Err(Error::ZeroPivot { index: n - 1 });
    }
    Ok(LuFactors {
        l,
        u,
        sup: t.sup.clone(),
    })
}

/// `y_1 = b_1`, `y_i = b_i - l_i y_{i-1}`.
pub fn thomas_forward_with<A: Arithmetic>(f: &LuFactors, b: &[f64], ar: &mut A) -> Result<Vec<f64>> {
    if b.len() != f.order() {
        return Err(Error::ShapeMismatch(format!("rhs of length {} for order {}", b.len(), f.order())));
    }
    let mut y = Vec::with_capacity(b.len());
    y.push(b[0]);
    for i in 1..b.len() {
        let p = ar.mul(f.l[i - 1], y[i - 1])?;
        y.push(ar.sub(b[i], p)?);
    }
    Ok(y)
}

/// `x_n = y_n / u_n`, `x_i = (y_i - nu_i x_{i+1}) / u_i`.
pub fn thomas_backward_with<A: Arithmetic>(f: &LuFactors, y: &[f64], ar: &mut A) -> Result<Vec<f64>> {
    let n = f.order();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!("rhs of length {} for order {n}", y.len())));
    }
    if let Some(i) = f.u.iter().position(|&p| p == 0.0) {
        return Err(Error::ZeroPivot { index: i });
    }
    let mut x = vec![0.0; n];
    x[n - 1] = ar.div(y[n - 1], f.u[n - 1])?;
    for i in (0..n - 1).rev() {
        let p = ar.mul(f.sup[i], x[i + 1])?;
        let r = ar.sub(y[i], p)?;
        x[i] = ar.div(r, f.u[i])?;
    }
    Ok(x)
}

pub fn thomas_with<A: Arithmetic>(t: &TriDiagonal, b: &[f64], ar: &mut A) -> Result<(LuFactors, Vec<f64>)> {
    let f = thomas_factor_with(t, ar)?;
    let y = thomas_forward_with(&f, b, ar)?;
    let x = thomas_backward_with(&f, &y, ar)?;
    Ok((f, x))
}

pub fn thomas_factor(t: &TriDiagonal, fmt: &FloatFormat) -> Result<LuFactors> {
    thomas_factor_with(t, &mut { *fmt })
}

pub fn thomas_forward(f: &LuFactors, b: &[f64], fmt: &FloatFormat) -> Result<Vec<f64>> {
    thomas_forward_with(f, b, &mut { *fmt })
}

pub fn thomas_backward(f: &LuFactors, y: &[f64], fmt: &FloatFormat) -> Result<Vec<f64>> {
    thomas_backward_with(f, y, &mut { *fmt })
}

/// Solve in `f64`, treated as exact.
pub fn reference_solve(t: &TriDiagonal, b: &[f64]) -> Result<Vec<f64>> {
    let mut exact = FloatFormat::REFERENCE;
    let (_, x) = thomas_with(t, b, &mut exact).map_err(|e| match e {
        Error::ZeroPivot { .. } => Error::SingularReference,
        e => e,
    })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularReference);
    }
    Ok(x)
}

/// `|| |A^{-1}| w ||_inf`, one reference solve per column of `A^{-1}`.
pub fn abs_inverse_norm_apply(t: &TriDiagonal, w: &[f64]) -> Result<f64> {
    let n = t.order();
    let mut acc = vec![0.0; n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        if w[j] == 0.0 {
            continue;
        }
        e[j] = 1.0;
        let col = reference_solve(t, &e)?;
        e[j] = 0.0;
        for (a, c) in acc.iter_mut().zip(&col) {
            *a += c.abs() * w[j];
        }
    }
    Ok(acc.into_iter().fold(0.0, f64::max))
}

/// How the three substitution constants are combined into one for the solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LsCombination {
    /// `2 g1 + g2 + g1 g2`.
    #[default]
    Full,
    /// `g1 + g2 + g1 g2`, as written for the deterministic constant.
    Deterministic,
}

impl FromStr for LsCombination {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(LsCombination::Full),
            "deterministic" => Ok(LsCombination::Deterministic),
            _ => Err(Error::Parse(format!("unknown combination '{s}' (full|deterministic)"))),
        }
    }
}

pub fn gamma_ls(g1: f64, g2: f64, combination: LsCombination) -> f64 {
    match combination {
        LsCombination::Full => 2.0 * g1 + g2 + g1 * g2,
        LsCombination::Deterministic => g1 + g2 + g1 * g2,
    }
}

/// Union-bound event count of a Thomas solve of order `n`:
/// `3(n-1)` factorization, `2(n-1)` forward and `2n-1` backward products.
pub fn thomas_events(n: u64) -> u64 {
    7 * n - 6
}

/// `gamma_LS` for the three methods, DBEA combined as [`LsCombination::Deterministic`].
pub fn attach_ls_bounds(u: f64, events: u64, cfg: &BoundConfig) -> Result<Vec<BoundEntry>> {
    let g1 = attach_bounds(u, 1, events, cfg)?;
    let g2 = attach_bounds(u, 2, events, cfg)?;
    Ok(g1
        .into_iter()
        .zip(g2)
        .map(|(a, b)| {
            let combination = if a.method == Method::Dbea {
                LsCombination::Deterministic
            } else {
                LsCombination::Full
            };
            BoundEntry {
                gamma: a.gamma.zip(b.gamma).map(|(x, y)| gamma_ls(x, y, combination)),
                ..a
            }
        })
        .collect())
}

/// Thomas solve with errors measured against the `f64` solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ThomasOutcome {
    pub x_hat: Vec<f64>,
    pub factors: LuFactors,
    pub run: KernelRun,
    /// `|| |A^{-1}| (|L||U||x_hat|) ||_inf`, the absolute condition factor.
    pub c_ls_abs: f64,
    /// `|| x_hat - x ||_inf`.
    pub fwd_abs: f64,
}

/// Backward error `max_i |A x_hat - b|_i / (|L||U||x_hat|)_i` and its excluded-row count.
pub fn thomas_backward_error(t: &TriDiagonal, f: &LuFactors, b: &[f64], x_hat: &[f64]) -> (f64, usize) {
    let r = t.apply(x_hat);
    let d = f.abs_product_apply(x_hat);
    let mut excluded = 0;
    let mut bwd: f64 = 0.0;
    for i in 0..b.len() {
        if d[i] == 0.0 {
            excluded += 1;
        } else {
            bwd = bwd.max((r[i] - b[i]).abs() / d[i]);
        }
    }
    (bwd, excluded)
}

/// Measured errors and bounds for the solution `x_hat` with computed factors `f`.
pub fn thomas_report(
    t: &TriDiagonal,
    b: &[f64],
    f: LuFactors,
    x_hat: Vec<f64>,
    fmt: &FloatFormat,
    cfg: &BoundConfig,
) -> Result<ThomasOutcome> {
    let n = t.order() as u64;
    let (bwd, excluded) = thomas_backward_error(t, &f, b, &x_hat);
    let x = reference_solve(t, b)?;
    let fwd_abs = x.iter().zip(&x_hat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let x_norm = x_hat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let c_ls_abs = abs_inverse_norm_apply(t, &f.abs_product_apply(&x_hat))?;
    let (fwd, cond) = if x_norm == 0.0 {
        (if fwd_abs == 0.0 { 0.0 } else { f64::INFINITY }, f64::INFINITY)
    } else {
        (fwd_abs / x_norm, c_ls_abs / x_norm)
    };
    let events = thomas_events(n);
    let bounds = attach_ls_bounds(fmt.unit_roundoff(), events, cfg)?;
    Ok(ThomasOutcome {
        x_hat,
        factors: f,
        run: KernelRun {
            kernel: Kernel::Thomas,
            fmt: *fmt,
            measured_bwd: bwd,
            measured_fwd: fwd,
            bounds: with_forward(bounds, cond),
            op_count: 2,
            events,
            condition: cond,
            excluded_rows: excluded,
        },
        c_ls_abs,
        fwd_abs,
    })
}

/// Solves `A x = b` for a system already rounded to `fmt`.
pub fn thomas_solve(t: &TriDiagonal, b: &[f64], fmt: &FloatFormat, cfg: &BoundConfig) -> Result<ThomasOutcome> {
    check_members(&t.sub, fmt)?;
    check_members(&t.diag, fmt)?;
    check_members(&t.sup, fmt)?;
    check_members(b, fmt)?;
    let (f, x_hat) = thomas_with(t, b, &mut { *fmt })?;
    thomas_report(t, b, f, x_hat, fmt, cfg)
}
