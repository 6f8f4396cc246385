//! Reaction and diffusion coefficients of the equation
//! `du = (u_xx + f(u)) dt + sigma(u) dW`.
//!
//! The convergence analysis needs `f` and `sigma` Lipschitz (strong
//! rates) and twice differentiable with bounded derivatives (weak
//! rates). A [`ModelSpec`] bundles the two coefficient functions with
//! *declared* constants and structural promises; [`validate_model`]
//! checks the declarations against dense samples of the functions so a
//! hand-assembled spec cannot silently break the assumptions the
//! integrator and the rate harness rely on.

use crate::error::StoheatError;

/// Pointwise reaction term `f(u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    /// `f = 0`; the linear equation, for which closed-form moments exist.
    Zero,
    /// `f(u) = sin u`; globally Lipschitz with constant 1.
    Sin,
    /// `f(u) = u / (1 + u^2)`; bounded, Lipschitz with constant 1.
    Rational,
    /// `f(u) = gain * u + offset`.
    Affine { gain: f64, offset: f64 },
}

impl Nonlinearity {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Sin => u.sin(),
            Nonlinearity::Rational => u / (1.0 + u * u),
            Nonlinearity::Affine { gain, offset } => gain * u + offset,
        }
    }

    /// Applies `f` to every entry. The variant match sits outside the
    /// loop; this is the integrator's hot path.
    pub fn map_inplace(&self, xs: &mut [f64]) {
        match self {
            Nonlinearity::Zero => xs.fill(0.0),
            Nonlinearity::Sin => {
                for v in xs {
                    *v = v.sin();
                }
            }
            Nonlinearity::Rational => {
                for v in xs {
                    *v = *v / (1.0 + *v * *v);
                }
            }
            Nonlinearity::Affine { gain, offset } => {
                for v in xs {
                    *v = gain * *v + offset;
                }
            }
        }
    }

    /// Smallest correct Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Sin => 1.0,
            // sup |(1 - u^2)/(1 + u^2)^2| is attained at u = 0
            Nonlinearity::Rational => 1.0,
            Nonlinearity::Affine { gain, .. } => gain.abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
    }
}

/// Pointwise diffusion coefficient `sigma(u)`; it multiplies the noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diffusion {
    /// `sigma = level`, independent of the state (additive noise).
    Constant { level: f64 },
    /// `sigma(u) = gain * u + offset`.
    Affine { gain: f64, offset: f64 },
    /// `sigma(u) = cos u`; bounded but genuinely nonlinear.
    Cos,
}

impl Diffusion {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Diffusion::Constant { level } => *level,
            Diffusion::Affine { gain, offset } => gain * u + offset,
            Diffusion::Cos => u.cos(),
        }
    }

    /// `noise[i] *= sigma(state[i])` with the variant match hoisted.
    pub fn scale_noise(&self, state: &[f64], noise: &mut [f64]) {
        debug_assert_eq!(state.len(), noise.len());
        match self {
            Diffusion::Constant { level } => {
                for w in noise {
                    *w *= level;
                }
            }
            Diffusion::Affine { gain, offset } => {
                for (w, u) in noise.iter_mut().zip(state) {
                    *w *= gain * u + offset;
                }
            }
            Diffusion::Cos => {
                for (w, u) in noise.iter_mut().zip(state) {
                    *w *= u.cos();
                }
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Diffusion::Constant { .. } => 0.0,
            Diffusion::Affine { gain, .. } => gain.abs(),
            Diffusion::Cos => 1.0,
        }
    }

    fn structure(&self) -> SigmaKind {
        match self {
            Diffusion::Constant { .. } => SigmaKind::Additive,
            Diffusion::Affine { .. } => SigmaKind::LinearAffine,
            Diffusion::Cos => SigmaKind::General,
        }
    }

    fn structure_name(&self) -> &'static str {
        match self.structure() {
            SigmaKind::Additive => "additive",
            SigmaKind::LinearAffine => "linear_affine",
            SigmaKind::General => "general",
        }
    }
}

/// Structural promise about `sigma` that the integrator may exploit.
///
/// Ordered from strongest to weakest: additive noise admits an exact
/// spectral shortcut (no transforms), affine noise still has exact
/// moment recursions in the linear case, general noise gets the full
/// collocation treatment. Declaring a *weaker* kind than the true
/// structure is sound and merely loses the shortcut.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaKind {
    Additive,
    LinearAffine,
    General,
}

impl SigmaKind {
    fn rank(self) -> u8 {
        match self {
            SigmaKind::Additive => 0,
            SigmaKind::LinearAffine => 1,
            SigmaKind::General => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SigmaKind::Additive => "additive",
            SigmaKind::LinearAffine => "linear_affine",
            SigmaKind::General => "general",
        }
    }
}

/// A complete model: coefficient functions plus the declared constants
/// and structure the numerics depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub f: Nonlinearity,
    pub sigma: Diffusion,
    /// Declared Lipschitz constant of `f`.
    pub lip_f: f64,
    /// Declared Lipschitz constant of `sigma`.
    pub lip_sigma: f64,
    pub sigma_kind: SigmaKind,
    /// Whether both coefficients are C^2 with bounded first and second
    /// derivatives, the extra regularity the weak-rate analysis needs.
    pub smooth_to_second_order: bool,
}

impl ModelSpec {
    /// `f = 0`, `sigma = level`: the linear additive model with exact
    /// closed-form moments, the default benchmark.
    pub fn linear_additive(level: f64) -> Self {
        Self::preset(Nonlinearity::Zero, Diffusion::Constant { level })
    }

    /// `f(u) = sin u`, `sigma = level`: the standard nonlinear additive
    /// benchmark.
    pub fn sin_additive(level: f64) -> Self {
        Self::preset(Nonlinearity::Sin, Diffusion::Constant { level })
    }

    /// `f(u) = u/(1+u^2)`, `sigma = level`.
    pub fn rational_additive(level: f64) -> Self {
        Self::preset(Nonlinearity::Rational, Diffusion::Constant { level })
    }

    /// Affine reaction and affine multiplicative noise.
    pub fn affine(f_gain: f64, f_offset: f64, s_gain: f64, s_offset: f64) -> Self {
        Self::preset(
            Nonlinearity::Affine {
                gain: f_gain,
                offset: f_offset,
            },
            Diffusion::Affine {
                gain: s_gain,
                offset: s_offset,
            },
        )
    }

    /// `sigma(u) = cos u` with a chosen reaction term.
    pub fn cos_diffusion(f: Nonlinearity) -> Self {
        Self::preset(f, Diffusion::Cos)
    }

    /// Builds a spec with the tight constants and true structure of the
    /// given coefficients. All library variants are smooth to second
    /// order.
    pub fn preset(f: Nonlinearity, sigma: Diffusion) -> Self {
        Self {
            f,
            sigma,
            lip_f: f.lipschitz(),
            lip_sigma: sigma.lipschitz(),
            sigma_kind: sigma.structure(),
            smooth_to_second_order: true,
        }
    }
}

/// Relative slack allowed when checking declared constants: sampled
/// difference quotients may exceed the declaration by at most 1%.
const SLACK: f64 = 0.01;

fn check_lipschitz<F: Fn(f64) -> f64>(
    name: &'static str,
    f: F,
    declared: f64,
) -> Result<(), StoheatError> {
    // Difference quotients on a dense grid, plus a sweep far from the
    // origin to catch unbounded slopes of affine pieces.
    let mut observed: f64 = 0.0;
    let ranges = [(-30.0, 30.0, 120_000usize), (-3_000.0, 3_000.0, 60_000)];
    for (lo, hi, steps) in ranges {
        let h = (hi - lo) / steps as f64;
        let mut prev = f(lo);
        for i in 1..=steps {
            let u = lo + i as f64 * h;
            let cur = f(u);
            observed = observed.max(((cur - prev) / h).abs());
            prev = cur;
        }
    }
    if observed > declared * (1.0 + SLACK) + 1e-12 {
        return Err(StoheatError::ModelBoundViolated {
            name,
            declared,
            observed,
        });
    }
    Ok(())
}

fn check_growth<F: Fn(f64) -> f64>(
    name: &'static str,
    f: F,
    lip: f64,
) -> Result<(), StoheatError> {
    // Lipschitz continuity forces |f(u)| <= |f(0)| + L |u|; checking it
    // directly guards against declaration/function mismatches.
    let bound0 = f(0.0).abs();
    for i in 0..20_000 {
        let u = -1_000.0 + i as f64 * 0.1;
        let allowed = (bound0 + lip * u.abs()) * (1.0 + SLACK) + 1e-12;
        let got = f(u).abs();
        if got > allowed {
            return Err(StoheatError::ModelBoundViolated {
                name,
                declared: allowed,
                observed: got,
            });
        }
    }
    Ok(())
}

/// Checks every declaration in `model` against the actual coefficient
/// functions: Lipschitz constants and linear growth with 1% slack, and
/// that the declared structure of `sigma` is not stronger than the
/// real one.
pub fn validate_model(model: &ModelSpec) -> Result<(), StoheatError> {
    check_lipschitz("lip_f", |u| model.f.eval(u), model.lip_f)?;
    check_lipschitz("lip_sigma", |u| model.sigma.eval(u), model.lip_sigma)?;
    check_growth("growth_f", |u| model.f.eval(u), model.lip_f)?;
    check_growth("growth_sigma", |u| model.sigma.eval(u), model.lip_sigma)?;
    let actual = model.sigma.structure();
    if model.sigma_kind.rank() < actual.rank() {
        return Err(StoheatError::SigmaKindMismatch {
            declared: model.sigma_kind.name(),
            actual: model.sigma.structure_name(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_presets_validate() {
        for model in [
            ModelSpec::linear_additive(1.0),
            ModelSpec::sin_additive(0.5),
            ModelSpec::rational_additive(2.0),
            ModelSpec::affine(0.7, -0.2, 0.3, 1.0),
            ModelSpec::cos_diffusion(Nonlinearity::Sin),
        ] {
            validate_model(&model).unwrap_or_else(|e| panic!("{model:?}: {e}"));
        }
    }

    #[test]
    fn understated_lipschitz_constant_is_caught() {
        let mut model = ModelSpec::sin_additive(1.0);
        model.lip_f = 0.5;
        let err = validate_model(&model).unwrap_err();
        assert!(matches!(
            err,
            StoheatError::ModelBoundViolated { name: "lip_f", .. }
        ));
    }

    #[test]
    fn understated_sigma_constant_is_caught() {
        let mut model = ModelSpec::affine(0.0, 0.0, 2.0, 0.0);
        model.lip_sigma = 1.0;
        assert!(validate_model(&model).is_err());
    }

    #[test]
    fn overdeclared_structure_is_caught() {
        let mut model = ModelSpec::cos_diffusion(Nonlinearity::Zero);
        model.sigma_kind = SigmaKind::Additive;
        let err = validate_model(&model).unwrap_err();
        assert!(matches!(err, StoheatError::SigmaKindMismatch { .. }));
    }

    #[test]
    fn weaker_structure_declaration_is_sound() {
        let mut model = ModelSpec::linear_additive(1.0);
        model.sigma_kind = SigmaKind::General;
        validate_model(&model).unwrap();
    }

    #[test]
    fn rational_slope_peaks_at_origin() {
        let f = Nonlinearity::Rational;
        // derivative (1 - u^2)/(1 + u^2)^2 has maximum 1 at u = 0
        let mut max_q: f64 = 0.0;
        for i in 0..100_000 {
            let u = -10.0 + i as f64 * 2e-4;
            let q = ((f.eval(u + 1e-6) - f.eval(u)) / 1e-6).abs();
            max_q = max_q.max(q);
        }
        assert!(max_q <= 1.0 + 1e-6, "quotient {max_q}");
        assert!(max_q > 0.999, "quotient {max_q} should approach 1 near 0");
    }

    #[test]
    fn map_inplace_matches_pointwise_eval() {
        let fs = [
            Nonlinearity::Zero,
            Nonlinearity::Sin,
            Nonlinearity::Rational,
            Nonlinearity::Affine {
                gain: -1.3,
                offset: 0.4,
            },
        ];
        let input: Vec<f64> = (0..64).map(|i| (i as f64 - 32.0) * 0.2).collect();
        for f in fs {
            let mut buf = input.clone();
            f.map_inplace(&mut buf);
            for (i, u) in input.iter().enumerate() {
                assert_eq!(buf[i], f.eval(*u));
            }
        }
    }

    #[test]
    fn scale_noise_matches_pointwise_eval() {
        let sigmas = [
            Diffusion::Constant { level: 2.5 },
            Diffusion::Affine {
                gain: 0.5,
                offset: -1.0,
            },
            Diffusion::Cos,
        ];
        let state: Vec<f64> = (0..32).map(|i| (i as f64) * 0.3 - 4.0).collect();
        let noise: Vec<f64> = (0..32).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        for s in sigmas {
            let mut buf = noise.clone();
            s.scale_noise(&state, &mut buf);
            for i in 0..32 {
                assert_eq!(buf[i], noise[i] * s.eval(state[i]));
            }
        }
    }
}
