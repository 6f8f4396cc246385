//! Bridge between coefficient space and a collocation grid, and the
//! pointwise (Nemytskii) action of the model coefficients.
//!
//! `f(u)` and `sigma(u) dW` act pointwise in physical space, so each
//! application is synthesise -> evaluate -> project. Both directions
//! are the orthogonal sine transform on the `P` interior nodes
//! `x_i = a + i (b-a)/(P+1)`, `i = 1..P`, evaluated through a complex
//! FFT of length `2(P+1)` on the odd extension. The discrete
//! orthogonality `sum_i sin(i j pi/(P+1)) sin(i j' pi/(P+1)) =
//! (P+1)/2 delta_{jj'}` makes synthesis followed by projection the
//! identity on fields of at most `P` modes.
//!
//! Products of two `m`-mode fields carry tails beyond mode `m`;
//! requiring `P >= 2m` keeps the fold-back of those tails out of the
//! retained modes up to the smooth remainder (checked in the tests
//! against high-`P` references).

use crate::error::StoheatError;
use crate::models::{ModelSpec, SigmaKind};
use crate::spectral::{EigenBasis, SpectralField};
use once_cell::sync::Lazy;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Field values on the `P` interior collocation nodes of `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub values: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

impl GridField {
    pub fn nodes(&self) -> usize {
        self.values.len()
    }

    /// Coordinate of node `i` (0-based): `a + (i+1) (b-a)/(P+1)`.
    pub fn node(&self, i: usize) -> f64 {
        let p = self.values.len();
        self.a + (i as f64 + 1.0) * (self.b - self.a) / (p as f64 + 1.0)
    }
}

// FFT plans are immutable and shareable; keyed by transform length so
// every path working at the same resolution reuses one plan.
static PLANS: Lazy<Mutex<HashMap<usize, Arc<dyn Fft<f64>>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

fn plan_for(len: usize) -> Arc<dyn Fft<f64>> {
    let mut cache = PLANS.lock().expect("fft plan cache poisoned");
    cache
        .entry(len)
        .or_insert_with(|| FftPlanner::new().plan_fft_forward(len))
        .clone()
}

/// Reusable workspace for sine transforms of `P` points.
///
/// Holds the FFT plan and scratch buffers; one instance per worker (it
/// is cheap, the plan itself is shared through a global cache).
pub(crate) struct DstPlan {
    p: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl DstPlan {
    pub fn new(p: usize) -> Self {
        assert!(p >= 1);
        let fft = plan_for(2 * (p + 1));
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Self {
            p,
            fft,
            buf: vec![Complex64::default(); 2 * (p + 1)],
            scratch,
        }
    }

    /// Orthogonal sine kernel: `out[k-1] = sum_{n=1}^{P} y[n-1]
    /// sin(n k pi / (P+1))` for `k = 1..P`. Self-inverse up to the
    /// factor `(P+1)/2`.
    pub fn dst_i(&mut self, input: &[f64], out: &mut [f64]) {
        let p = self.p;
        assert_eq!(input.len(), p);
        assert_eq!(out.len(), p);
        let q = 2 * (p + 1);
        // odd extension: v[0] = v[p+1] = 0, v[n] = y[n], v[q-n] = -y[n]
        self.buf[0] = Complex64::default();
        self.buf[p + 1] = Complex64::default();
        for (n, &y) in input.iter().enumerate() {
            self.buf[n + 1] = Complex64::new(y, 0.0);
            self.buf[q - n - 1] = Complex64::new(-y, 0.0);
        }
        self.fft
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        // V_k = -2i sum y_n sin(n k pi/(P+1))
        for k in 0..p {
            out[k] = -0.5 * self.buf[k + 1].im;
        }
    }
}

/// Scale turning a coefficient vector into node values: eigenfunctions
/// carry `sqrt(2/(b-a))`.
pub(crate) fn synthesis_scale(len_domain: f64) -> f64 {
    (2.0 / len_domain).sqrt()
}

/// Scale turning the sine kernel of node values into coefficients:
/// quadrature weight `(b-a)/(P+1)` times the eigenfunction amplitude.
pub(crate) fn analysis_scale(len_domain: f64, p: usize) -> f64 {
    (2.0 * len_domain).sqrt() / (p as f64 + 1.0)
}

/// Evaluates `field` on the `p`-point collocation grid of the basis
/// domain. Exact (up to rounding): the field has at most `p` modes.
pub fn to_grid(
    basis: &EigenBasis,
    field: &SpectralField,
    p: usize,
) -> Result<GridField, StoheatError> {
    if field.len() > p {
        return Err(StoheatError::CollocationTooSmall {
            p,
            min: field.len(),
        });
    }
    let mut plan = DstPlan::new(p);
    let mut padded = vec![0.0; p];
    padded[..field.len()].copy_from_slice(&field.coeffs);
    let mut values = vec![0.0; p];
    plan.dst_i(&padded, &mut values);
    let s = synthesis_scale(basis.len_domain());
    for v in &mut values {
        *v *= s;
    }
    Ok(GridField {
        values,
        a: basis.a(),
        b: basis.b(),
    })
}

/// Projects node values onto the first `m` modes by the trapezoidal
/// quadrature the collocation grid induces; exact for fields of at most
/// `P` modes by discrete orthogonality.
pub fn to_spectral(grid: &GridField, m: usize) -> Result<SpectralField, StoheatError> {
    let p = grid.nodes();
    if m > p {
        return Err(StoheatError::CollocationTooSmall { p, min: m });
    }
    let mut plan = DstPlan::new(p);
    let mut coeffs = vec![0.0; p];
    plan.dst_i(&grid.values, &mut coeffs);
    let s = analysis_scale(grid.b - grid.a, p);
    coeffs.truncate(m);
    for c in &mut coeffs {
        *c *= s;
    }
    Ok(SpectralField::from_coeffs(coeffs))
}

fn require_alias_safe(p: usize, m: usize) -> Result<(), StoheatError> {
    if p < 2 * m {
        return Err(StoheatError::CollocationTooSmall { p, min: 2 * m });
    }
    Ok(())
}

/// Galerkin action of the reaction term: synthesises `x`, applies `f`
/// pointwise, projects back onto the `m` modes of `x`.
///
/// `f = 0` short-circuits to the zero field without transforms.
pub fn apply_drift(
    basis: &EigenBasis,
    x: &SpectralField,
    model: &ModelSpec,
    p: usize,
) -> Result<SpectralField, StoheatError> {
    require_alias_safe(p, x.len())?;
    if model.f.is_zero() {
        return Ok(SpectralField::zeros(x.len()));
    }
    let mut grid = to_grid(basis, x, p)?;
    model.f.map_inplace(&mut grid.values);
    to_spectral(&grid, x.len())
}

/// Galerkin action of the noise term over one step: forms
/// `sigma(x) dW` pointwise and projects onto the `m` modes of `x`.
/// `dw` holds the mode increments of the step.
///
/// Additive noise never touches the grid: `sigma(x) dW = level * dW`
/// exactly, and the generic route reproduces it only up to rounding.
pub fn diffusion_increment(
    basis: &EigenBasis,
    x: &SpectralField,
    dw: &[f64],
    model: &ModelSpec,
    p: usize,
) -> Result<SpectralField, StoheatError> {
    require_alias_safe(p, x.len())?;
    if dw.len() != x.len() {
        return Err(StoheatError::DimensionMismatch {
            got: dw.len(),
            want: x.len(),
        });
    }
    if model.sigma_kind == SigmaKind::Additive {
        if let crate::models::Diffusion::Constant { level } = model.sigma {
            return Ok(SpectralField::from_coeffs(
                dw.iter().map(|w| level * w).collect(),
            ));
        }
        // Declared additive but not structurally constant: validate_model
        // rejects this; fall through to the generic route, which is
        // always sound.
    }
    let state = to_grid(basis, x, p)?;
    let mut noise = to_grid(basis, &SpectralField::from_coeffs(dw.to_vec()), p)?;
    model.sigma.scale_noise(&state.values, &mut noise.values);
    to_spectral(&noise, x.len())
}
