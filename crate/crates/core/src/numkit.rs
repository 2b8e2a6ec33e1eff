//! Small dense complex linear algebra and single-bin harmonic extraction.
//!
//! Matrices in this crate never exceed a handful of rows (one or two reset
//! states, a few more once elements are composed), so everything here is a
//! straightforward row-major implementation without blocking or BLAS.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Reciprocal condition estimate below which a matrix is treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is singular (rcond {rcond:.3e}){}", context_suffix(.omega))]
    Singular { rcond: f64, omega: Option<f64> },
    #[error("frequency must be positive, got {0}")]
    BadFrequency(f64),
    #[error("signal window too short: {available:.6e} s available, one period is {period:.6e} s")]
    WindowTooShort { available: f64, period: f64 },
    #[error("invalid signal: {0}")]
    BadSignal(String),
}

fn context_suffix(omega: &Option<f64>) -> String {
    match omega {
        Some(w) => format!(" at omega = {w} rad/s"),
        None => String::new(),
    }
}

impl NumError {
    /// Attach a frequency to a singularity error.
    pub fn at_omega(self, omega: f64) -> Self {
        match self {
            NumError::Singular { rcond, .. } => NumError::Singular {
                rcond,
                omega: Some(omega),
            },
            other => other,
        }
    }
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    /// Build from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count does not match shape");
        Self::from_fn(rows, cols, |r, c| Complex64::new(entries[r * cols + c], 0.0))
    }

    pub fn from_complex(rows: usize, cols: usize, entries: &[Complex64]) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count does not match shape");
        Self {
            rows,
            cols,
            data: entries.to_vec(),
        }
    }

    pub fn diag_real(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * k).collect(),
        }
    }

    pub fn scale_real(&self, k: f64) -> Self {
        self.scale(Complex64::new(k, 0.0))
    }

    /// Matrix product with a dimension check.
    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix, NumError> {
        if self.cols != rhs.rows {
            return Err(NumError::Dimension(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        Ok(out)
    }

    fn zip_with(&self, rhs: &CMatrix, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<CMatrix, NumError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(NumError::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn try_add(&self, rhs: &CMatrix) -> Result<CMatrix, NumError> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &CMatrix) -> Result<CMatrix, NumError> {
        self.zip_with(rhs, |a, b| a - b)
    }

    /// Induced 1-norm (max column sum).
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self[(r, c)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest entry magnitude.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// The single entry of a 1x1 matrix.
    pub fn scalar(&self) -> Complex64 {
        assert!(self.rows == 1 && self.cols == 1, "scalar() on a non-1x1 matrix");
        self.data[0]
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        assert!(r < self.rows && c < self.cols, "index out of bounds");
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        assert!(r < self.rows && c < self.cols, "index out of bounds");
        &mut self.data[r * self.cols + c]
    }
}

// Operator sugar for internal code where shapes are known to agree.
impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs).expect("matrix product shape mismatch")
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        self.try_add(rhs).expect("matrix sum shape mismatch")
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        self.try_sub(rhs).expect("matrix difference shape mismatch")
    }
}

/// Solve `m * X = rhs` by Gaussian elimination with partial pivoting.
///
/// Returns the solution together with the pivot-based singularity check;
/// exact zero pivots are reported as singular.
pub fn solve(m: &CMatrix, rhs: &CMatrix) -> Result<CMatrix, NumError> {
    if !m.is_square() {
        return Err(NumError::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if m.rows != rhs.rows {
        return Err(NumError::Dimension(format!(
            "solve {}x{} with rhs {}x{}",
            m.rows, m.cols, rhs.rows, rhs.cols
        )));
    }
    if !m.is_finite() || !rhs.is_finite() {
        return Err(NumError::NonFinite);
    }
    let n = m.rows;
    let k = rhs.cols;
    let mut a = m.data.clone();
    let mut b = rhs.data.clone();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].norm().total_cmp(&a[j * n + col].norm()))
            .unwrap();
        if a[pivot * n + col].norm() == 0.0 {
            return Err(NumError::Singular {
                rcond: 0.0,
                omega: None,
            });
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            for j in 0..k {
                b.swap(col * k + j, pivot * k + j);
            }
        }
        let p = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / p;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in col..n {
                let v = a[col * n + j];
                a[row * n + j] -= factor * v;
            }
            for j in 0..k {
                let v = b[col * k + j];
                b[row * k + j] -= factor * v;
            }
        }
    }
    for col in (0..n).rev() {
        let p = a[col * n + col];
        for j in 0..k {
            let mut acc = b[col * k + j];
            for i in (col + 1)..n {
                acc -= a[col * n + i] * b[i * k + j];
            }
            b[col * k + j] = acc / p;
        }
    }
    Ok(CMatrix {
        rows: n,
        cols: k,
        data: b,
    })
}

/// Inverse via Gaussian elimination, rejecting matrices whose reciprocal
/// 1-norm condition number falls below [`SINGULAR_RCOND`].
pub fn mat_inv(m: &CMatrix) -> Result<CMatrix, NumError> {
    let inv = solve(m, &CMatrix::identity(m.rows.max(1)))
        .map_err(|e| match e {
            NumError::Dimension(_) => NumError::NotSquare {
                rows: m.rows,
                cols: m.cols,
            },
            other => other,
        })?;
    let rcond = 1.0 / (m.norm_1() * inv.norm_1());
    if !(rcond >= SINGULAR_RCOND) {
        return Err(NumError::Singular { rcond, omega: None });
    }
    Ok(inv)
}

/// Reciprocal 1-norm condition number; zero for singular input.
pub fn rcond(m: &CMatrix) -> f64 {
    match solve(m, &CMatrix::identity(m.rows)) {
        Ok(inv) => {
            let r = 1.0 / (m.norm_1() * inv.norm_1());
            if r.is_finite() {
                r
            } else {
                0.0
            }
        }
        Err(_) => 0.0,
    }
}

// Padé(13) coefficients and the 1-norm bound below which no scaling is needed.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring around a Padé(13) core.
pub fn mat_exp(m: &CMatrix) -> Result<CMatrix, NumError> {
    if !m.is_square() {
        return Err(NumError::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if !m.is_finite() {
        return Err(NumError::NonFinite);
    }
    let n = m.rows;
    if n == 1 {
        return Ok(CMatrix::from_complex(1, 1, &[m.data[0].exp()]));
    }
    let norm = m.norm_1();
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m.scale_real(0.5f64.powi(s));
    let id = CMatrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |i: usize| PADE13[i];
    let lin = |terms: &[(&CMatrix, f64)]| -> CMatrix {
        let mut acc = CMatrix::zeros(n, n);
        for (mat, coef) in terms {
            acc = &acc + &mat.scale_real(*coef);
        }
        acc
    };
    let u_inner = lin(&[(&a6, b(13)), (&a4, b(11)), (&a2, b(9))]);
    let u_tail = lin(&[(&a6, b(7)), (&a4, b(5)), (&a2, b(3)), (&id, b(1))]);
    let u = &a * &(&(&a6 * &u_inner) + &u_tail);
    let v_inner = lin(&[(&a6, b(12)), (&a4, b(10)), (&a2, b(8))]);
    let v_tail = lin(&[(&a6, b(6)), (&a4, b(4)), (&a2, b(2)), (&id, b(0))]);
    let v = &(&a6 * &v_inner) + &v_tail;
    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    dt: f64,
    samples: Vec<f64>,
}

impl Signal {
    pub fn new(dt: f64, samples: Vec<f64>) -> Result<Self, NumError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(NumError::BadSignal(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { dt, samples })
    }

    /// Sample `f(t)` at `t = i * dt` for `i in 0..len`.
    pub fn from_fn(dt: f64, len: usize, f: impl Fn(f64) -> f64) -> Result<Self, NumError> {
        Self::new(dt, (0..len).map(|i| f(i as f64 * dt)).collect())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }
}

/// Fourier coefficient of `s` at frequency `f` (Hz).
///
/// The first `skip` seconds are discarded and the remainder truncated to the
/// largest whole number of periods. With sample times `t_i = i * dt`, the
/// returned `c` satisfies: the component of `s` at `f` equals
/// `|c| * sin(2*pi*f*t + arg c)`. Equivalently `c = a + j*b` for the
/// component `a*sin + b*cos`.
pub fn single_bin_dft(s: &Signal, f: f64, skip: f64) -> Result<Complex64, NumError> {
    if !(f > 0.0) || !f.is_finite() {
        return Err(NumError::BadFrequency(f));
    }
    if s.len() < 2 {
        return Err(NumError::BadSignal("at least two samples are required".into()));
    }
    let start = (skip.max(0.0) / s.dt - 1e-9).ceil() as usize;
    let period = 1.0 / f;
    let available = s.len().saturating_sub(start) as f64 * s.dt;
    let periods = (available / period + 1e-9).floor();
    if periods < 1.0 {
        return Err(NumError::WindowTooShort { available, period });
    }
    let count = ((periods * period) / s.dt).round() as usize;
    let count = count.min(s.len() - start);
    if count < 2 {
        return Err(NumError::WindowTooShort { available, period });
    }
    let w = 2.0 * PI * f;
    let (mut a, mut b) = (0.0, 0.0);
    for (i, &x) in s.samples[start..start + count].iter().enumerate() {
        let phase = w * ((start + i) as f64 * s.dt);
        a += x * phase.sin();
        b += x * phase.cos();
    }
    let k = 2.0 / count as f64;
    Ok(Complex64::new(a * k, b * k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = mat_exp(&CMatrix::zeros(2, 2)).unwrap();
        assert!((&e - &CMatrix::identity(2)).norm_max() < 1e-15);
    }

    #[test]
    fn exp_of_diagonal() {
        let e = mat_exp(&CMatrix::diag_real(&[-1.0, -2.0])).unwrap();
        assert!((e[(0, 0)].re - (-1.0f64).exp()).abs() < 1e-14);
        assert!((e[(1, 1)].re - (-2.0f64).exp()).abs() < 1e-14);
        assert!(e[(0, 1)].norm() < 1e-15 && e[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn exp_of_half_turn_rotation_is_minus_identity() {
        let m = CMatrix::from_real(2, 2, &[0.0, PI, -PI, 0.0]);
        let e = mat_exp(&m).unwrap();
        // Oracle: exp([[0, t], [-t, 0]]) = [[cos t, sin t], [-sin t, cos t]].
        let t = PI;
        let expected = CMatrix::from_real(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
        assert!((&e - &expected).norm_max() < 1e-12);
    }

    #[test]
    fn exp_large_norm_decaying() {
        let m = CMatrix::from_real(2, 2, &[0.0, 1.0, -400.0, -30.0]).scale_real(10.0);
        let e = mat_exp(&m).unwrap();
        assert!(e.norm_max() < 1e-30);
    }

    #[test]
    fn exp_rejects_bad_input() {
        assert!(matches!(
            mat_exp(&CMatrix::zeros(2, 3)),
            Err(NumError::NotSquare { .. })
        ));
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = Complex64::new(f64::NAN, 0.0);
        assert_eq!(mat_exp(&m), Err(NumError::NonFinite));
    }

    #[test]
    fn inverse_basics() {
        let i = mat_inv(&CMatrix::identity(3)).unwrap();
        assert!((&i - &CMatrix::identity(3)).norm_max() < 1e-15);
        let d = mat_inv(&CMatrix::diag_real(&[2.0, 4.0])).unwrap();
        assert!(close(d[(0, 0)], Complex64::new(0.5, 0.0), 1e-15));
        assert!(close(d[(1, 1)], Complex64::new(0.25, 0.0), 1e-15));
    }

    #[test]
    fn inverse_of_singular_matrix_fails() {
        let m = CMatrix::from_real(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(mat_inv(&m), Err(NumError::Singular { .. })));
        let nearly = CMatrix::from_real(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-14]);
        assert!(matches!(mat_inv(&nearly), Err(NumError::Singular { .. })));
    }

    #[test]
    fn singular_error_carries_omega() {
        let e = NumError::Singular {
            rcond: 0.0,
            omega: None,
        }
        .at_omega(3.0);
        assert!(e.to_string().contains("omega = 3"));
    }

    #[test]
    fn complex_inverse_residual() {
        let m = CMatrix::from_complex(
            2,
            2,
            &[
                Complex64::new(1.0, 2.0),
                Complex64::new(0.5, -1.0),
                Complex64::new(-3.0, 0.1),
                Complex64::new(2.0, 2.0),
            ],
        );
        let r = &(&m * &mat_inv(&m).unwrap()) - &CMatrix::identity(2);
        assert!(r.norm_max() < 1e-12);
    }

    #[test]
    fn dft_pure_tone() {
        let s = Signal::from_fn(1e-3, 3000, |t| (2.0 * PI * t).sin()).unwrap();
        let c = single_bin_dft(&s, 1.0, 0.0).unwrap();
        assert!((c.norm() - 1.0).abs() < 1e-6);
        assert!(c.arg().abs() < 1e-6);
    }

    #[test]
    fn dft_phase_shifted_tone() {
        let s = Signal::from_fn(1e-3, 2000, |t| 0.5 * (2.0 * PI * 3.0 * t + PI / 4.0).sin()).unwrap();
        let c = single_bin_dft(&s, 3.0, 0.0).unwrap();
        assert!((c.norm() - 0.5).abs() < 1e-6);
        assert!((c.arg() - PI / 4.0).abs() < 1e-6);
    }

    #[test]
    fn dft_rejects_other_tones() {
        // Orthogonality over whole periods of the 1 Hz fundamental.
        let s = Signal::from_fn(1e-3, 2000, |t| {
            (2.0 * PI * t).sin() + 0.2 * (2.0 * PI * 3.0 * t + 0.3).sin()
        })
        .unwrap();
        let c = single_bin_dft(&s, 3.0, 0.0).unwrap();
        assert!(close(c, Complex64::from_polar(0.2, 0.3), 1e-6));
    }

    #[test]
    fn dft_skip_and_truncation() {
        let s = Signal::from_fn(1e-3, 2750, |t| (2.0 * PI * 2.0 * t + 1.0).sin()).unwrap();
        let c = single_bin_dft(&s, 2.0, 0.4).unwrap();
        assert!(close(c, Complex64::from_polar(1.0, 1.0), 1e-9));
    }

    #[test]
    fn dft_errors() {
        let s = Signal::from_fn(1e-3, 500, |t| t).unwrap();
        assert!(matches!(
            single_bin_dft(&s, 1.0, 0.0),
            Err(NumError::WindowTooShort { .. })
        ));
        assert!(matches!(single_bin_dft(&s, 0.0, 0.0), Err(NumError::BadFrequency(_))));
        assert!(Signal::new(0.0, vec![1.0, 2.0]).is_err());
    }
}
