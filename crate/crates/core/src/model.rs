//! System and cost descriptions.

use alloc::format;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{ensure_shape, ensure_square, is_finite, lambda_min, op_norm};
use crate::matspec::spectral_abscissa;

/// Drift/input pair `(A, B)`, either the truth or an estimate of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPair {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl ParameterPair {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        ensure_square(&a, "A")?;
        if b.nrows() != a.nrows() {
            return Err(Error::Dimension(format!(
                "B has {} rows, A is {}x{}",
                b.nrows(),
                a.nrows(),
                a.ncols()
            )));
        }
        if !is_finite(&b) {
            return Err(Error::Value("B has non-finite entries".into()));
        }
        Ok(Self { a, b })
    }

    pub fn dx(&self) -> usize {
        self.a.nrows()
    }

    pub fn du(&self) -> usize {
        self.b.ncols()
    }

    /// `[A B]` as one `d_X × (d_X + d_U)` matrix.
    pub fn stacked(&self) -> DMatrix<f64> {
        crate::linalg::hcat(&self.a, &self.b)
    }

    pub fn from_stacked(theta: &DMatrix<f64>, dx: usize) -> Self {
        let a = theta.columns(0, dx).into_owned();
        let b = theta.columns(dx, theta.ncols() - dx).into_owned();
        Self { a, b }
    }

    /// `Ψ(self)` against `truth`: `‖Â − A‖₂ + ‖B̂ − B‖₂`.
    pub fn deviation(&self, truth: &ParameterPair) -> f64 {
        op_norm(&(&self.a - &truth.a)) + op_norm(&(&self.b - &truth.b))
    }

    pub fn closed_loop(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a + &self.b * k
    }

    /// Convex combination `(1 − λ)·self + λ·other`.
    pub fn lerp(&self, other: &ParameterPair, lambda: f64) -> Self {
        Self {
            a: &self.a * (1.0 - lambda) + &other.a * lambda,
            b: &self.b * (1.0 - lambda) + &other.b * lambda,
        }
    }
}

/// `dX = (A X + B U) dt + C dW`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    pub params: ParameterPair,
    pub c: DMatrix<f64>,
    stabilizing_gain: Option<DMatrix<f64>>,
}

impl DynamicsModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let params = ParameterPair::new(a, b)?;
        if c.nrows() != params.dx() {
            return Err(Error::Dimension(format!(
                "C has {} rows, expected {}",
                c.nrows(),
                params.dx()
            )));
        }
        if !is_finite(&c) {
            return Err(Error::Value("C has non-finite entries".into()));
        }
        Ok(Self {
            params,
            c,
            stabilizing_gain: None,
        })
    }

    /// Attaches a gain `K₀` as evidence of stabilizability; rejected unless
    /// `A + B K₀` is Hurwitz.
    pub fn with_stabilizing_gain(mut self, k0: DMatrix<f64>) -> Result<Self> {
        ensure_shape(&k0, self.du(), self.dx(), "stabilizing gain")?;
        let alpha = spectral_abscissa(&self.params.closed_loop(&k0))?;
        if alpha >= 0.0 {
            return Err(Error::Instability { abscissa: alpha });
        }
        self.stabilizing_gain = Some(k0);
        Ok(self)
    }

    pub fn stabilizing_gain(&self) -> Option<&DMatrix<f64>> {
        self.stabilizing_gain.as_ref()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.params.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.params.b
    }

    pub fn dx(&self) -> usize {
        self.params.dx()
    }

    pub fn du(&self) -> usize {
        self.params.du()
    }

    pub fn dw(&self) -> usize {
        self.c.ncols()
    }

    /// Same noise matrix with a different `(A, B)`.
    pub fn with_params(&self, params: ParameterPair) -> Self {
        Self {
            params,
            c: self.c.clone(),
            stabilizing_gain: None,
        }
    }
}

/// Quadratic cost weights; both must be symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
}

impl CostSpec {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        ensure_square(&q, "Q")?;
        ensure_square(&r, "R")?;
        for (m, name) in [(&q, "Q"), (&r, "R")] {
            if crate::linalg::asymmetry(m) > 1e-12 * (1.0 + m.norm()) {
                return Err(Error::Value(format!("{name} is not symmetric")));
            }
            let lmin = lambda_min(m);
            if !(lmin > 0.0) {
                return Err(Error::Value(format!(
                    "{name} is not positive definite (λmin = {lmin})"
                )));
            }
        }
        let r_inv = r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Value("R is singular".into()))?;
        Ok(Self { q, r, r_inv })
    }

    pub fn r_inv(&self) -> &DMatrix<f64> {
        &self.r_inv
    }

    pub fn check_dims(&self, dx: usize, du: usize) -> Result<()> {
        ensure_shape(&self.q, dx, dx, "Q")?;
        ensure_shape(&self.r, du, du, "R")
    }

    /// `xᵀQx + uᵀRu`.
    pub fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        quad(&self.q, x) + quad(&self.r, u)
    }
}

pub(crate) fn quad(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += x[i] * m[(i, j)];
        }
        acc += col * x[j];
    }
    acc
}
