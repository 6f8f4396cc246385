//! Dirichlet eigenbasis of the Laplacian on an interval and diagonal
//! operator actions on coefficient vectors.
//!
//! On `(a, b)` the operator `A = d^2/dx^2` with zero boundary values has
//! eigenfunctions `e_j(x) = sqrt(2/(b-a)) sin(j pi (x-a)/(b-a))` and
//! eigenvalues `-lambda_j` with `lambda_j = (j pi / (b-a))^2`, `j >= 1`.
//! Every linear operator used by the scheme (semigroup, resolvent powers,
//! the Yosida-type approximation `A(I - dt A)^-1`) is diagonal here, so
//! applying one is a single pass over the coefficients.

use crate::error::StoheatError;

/// First `m` Dirichlet eigenpairs of the Laplacian on `(a, b)`.
///
/// Eigenvalues are stored positive: `lambda[j]` is `lambda_{j+1}` and the
/// operator acts as `-lambda_{j+1}` on mode `j+1`. They are strictly
/// increasing since `j -> (j pi / (b-a))^2` is.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    a: f64,
    b: f64,
    lambda: Vec<f64>,
}

impl EigenBasis {
    /// Builds the basis for the first `m >= 1` modes on `(a, b)`, `a < b`.
    pub fn new(a: f64, b: f64, m: usize) -> Result<Self, StoheatError> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(StoheatError::BadDomain { a, b });
        }
        if m == 0 {
            return Err(StoheatError::ZeroModes);
        }
        let len = b - a;
        let lambda = (1..=m)
            .map(|j| {
                let w = j as f64 * std::f64::consts::PI / len;
                w * w
            })
            .collect();
        Ok(Self { a, b, lambda })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len_domain(&self) -> f64 {
        self.b - self.a
    }

    pub fn modes(&self) -> usize {
        self.lambda.len()
    }

    /// Positive eigenvalues `lambda_1 < lambda_2 < ...`.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    /// Evaluates the normalised eigenfunction `e_j` (1-based `j`) at `x`.
    pub fn eigenfunction(&self, j: usize, x: f64) -> f64 {
        assert!(j >= 1 && j <= self.modes(), "mode index out of range");
        let len = self.len_domain();
        (2.0 / len).sqrt() * (j as f64 * std::f64::consts::PI * (x - self.a) / len).sin()
    }

    /// Sum of `lambda_j^-alpha` over the stored modes.
    ///
    /// For `alpha > 1/2` the full series converges (the driving noise has
    /// a trace-class smoothing against `(-A)^-alpha`); at `alpha = 1/2`
    /// the partial sums grow like `log m / pi * (b-a)`.
    pub fn trace_fractional(&self, alpha: f64) -> f64 {
        crate::parallel::pairwise_sum_iter(self.lambda.iter().map(|l| l.powf(-alpha)))
    }

    fn check_dim(&self, field: &SpectralField) -> Result<(), StoheatError> {
        if field.coeffs.len() != self.modes() {
            return Err(StoheatError::DimensionMismatch {
                got: field.coeffs.len(),
                want: self.modes(),
            });
        }
        Ok(())
    }
}

/// Coefficient vector in the Dirichlet eigenbasis; entry `j` (0-based)
/// multiplies eigenfunction `e_{j+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(m: usize) -> Self {
        Self {
            coeffs: vec![0.0; m],
        }
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// Field with a single excited mode (1-based index).
    pub fn single_mode(m: usize, j: usize, amplitude: f64) -> Self {
        assert!(j >= 1 && j <= m, "mode index out of range");
        let mut coeffs = vec![0.0; m];
        coeffs[j - 1] = amplitude;
        Self { coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// L2(a, b) norm; the eigenfunctions are orthonormal so this is the
    /// Euclidean norm of the coefficients.
    pub fn norm(&self) -> f64 {
        crate::parallel::pairwise_sum_iter(self.coeffs.iter().map(|c| c * c)).sqrt()
    }

    /// Pointwise evaluation by direct summation, `O(m)` per call.
    pub fn eval(&self, basis: &EigenBasis, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * basis.eigenfunction(i + 1, x))
            .sum()
    }
}

/// Applies `(I - dt A)^-k`, i.e. divides mode `j` by `(1 + dt lambda_j)^k`.
///
/// `k = 1` is the smoothing factor of one implicit Euler step; higher
/// powers arise when the step recursion is unrolled over `k` steps.
pub fn resolvent_power(
    basis: &EigenBasis,
    field: &SpectralField,
    dt: f64,
    k: u32,
) -> Result<SpectralField, StoheatError> {
    basis.check_dim(field)?;
    assert!(dt >= 0.0, "dt must be nonnegative");
    let coeffs = field
        .coeffs
        .iter()
        .zip(&basis.lambda)
        .map(|(c, l)| c / (1.0 + dt * l).powi(k as i32))
        .collect();
    Ok(SpectralField { coeffs })
}

/// Applies the heat semigroup `e^{tA}`: mode `j` decays by `e^{-t lambda_j}`.
pub fn semigroup(
    basis: &EigenBasis,
    field: &SpectralField,
    t: f64,
) -> Result<SpectralField, StoheatError> {
    basis.check_dim(field)?;
    assert!(t >= 0.0, "semigroup time must be nonnegative");
    let coeffs = field
        .coeffs
        .iter()
        .zip(&basis.lambda)
        .map(|(c, l)| c * (-t * l).exp())
        .collect();
    Ok(SpectralField { coeffs })
}

/// Applies `A_dt = A (I - dt A)^-1`, the generator of the time-discrete
/// flow: mode `j` is scaled by `-lambda_j / (1 + dt lambda_j)`.
///
/// The scaling is bounded by `1/dt` in absolute value uniformly in `j`,
/// which is what makes the piecewise interpolant of the scheme stable.
pub fn yosida(
    basis: &EigenBasis,
    field: &SpectralField,
    dt: f64,
) -> Result<SpectralField, StoheatError> {
    basis.check_dim(field)?;
    assert!(dt > 0.0, "dt must be positive");
    let coeffs = field
        .coeffs
        .iter()
        .zip(&basis.lambda)
        .map(|(c, l)| -c * l / (1.0 + dt * l))
        .collect();
    Ok(SpectralField { coeffs })
}

/// Norm of `(-A)^beta x`: `sqrt(sum lambda_j^{2 beta} x_j^2)`.
///
/// Negative `beta` gives the smoothing norms in which rough noise
/// increments are measured; positive `beta` penalises high modes.
pub fn fractional_norm(basis: &EigenBasis, field: &SpectralField, beta: f64) -> f64 {
    assert_eq!(
        field.coeffs.len(),
        basis.modes(),
        "field/basis dimension mismatch"
    );
    crate::parallel::pairwise_sum_iter(
        field
            .coeffs
            .iter()
            .zip(&basis.lambda)
            .map(|(c, l)| l.powf(2.0 * beta) * c * c),
    )
    .sqrt()
}
