//! Fully implicit Euler stepping of the spectral Galerkin system.
//!
//! One step with step size `dt` maps
//!
//! ```text
//! X_{k+1} = R (X_k + dt F(X_k) + G(X_k) dW_k),    R = (I - dt A)^-1,
//! ```
//!
//! where `F` is the projected reaction term and `G(X) dW` the projected
//! noise term. Grouping all three contributions before the single
//! diagonal resolvent multiply is algebraically the textbook scheme
//! (`X_{k+1} = R X_k + dt R F(X_k) + R G(X_k) dW_k`) at a third of the
//! operator applications.
//!
//! The linear part is treated exactly per mode, so the step is
//! unconditionally stable; `dt <= 1` is still enforced because the
//! nonlinear convergence analysis assumes it.

use crate::error::StoheatError;
use crate::models::{Diffusion, ModelSpec, SigmaKind};
use crate::noise::{NoisePath, SeedSpec};
use crate::spectral::{EigenBasis, SpectralField};
use crate::transform::{analysis_scale, synthesis_scale, DstPlan};

/// Time and space resolution of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    /// Horizon `T = N dt`.
    pub horizon: f64,
    /// Number of steps.
    pub steps: usize,
    /// Step size.
    pub dt: f64,
    /// Retained spectral modes.
    pub modes: usize,
    /// Collocation nodes for the pointwise coefficient actions.
    pub colloc: usize,
}

impl SchemeParams {
    /// Resolution from a horizon and step count; `dt = T/N`.
    pub fn new(horizon: f64, steps: usize, modes: usize, colloc: usize) -> Result<Self, StoheatError> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(StoheatError::BadHorizon { t: horizon });
        }
        if steps == 0 {
            return Err(StoheatError::ZeroSteps);
        }
        let dt = horizon / steps as f64;
        Self::from_dt(dt, steps, modes, colloc)
    }

    /// Resolution from a step size and count; `T = N dt`. Preferred
    /// when the step size is the primary quantity (noise-driven runs).
    pub fn from_dt(dt: f64, steps: usize, modes: usize, colloc: usize) -> Result<Self, StoheatError> {
        if steps == 0 {
            return Err(StoheatError::ZeroSteps);
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(StoheatError::BadHorizon { t: dt * steps as f64 });
        }
        if dt > 1.0 {
            return Err(StoheatError::StepTooLarge { dt });
        }
        if modes == 0 {
            return Err(StoheatError::ZeroModes);
        }
        if colloc < 2 * modes {
            return Err(StoheatError::CollocationTooSmall {
                p: colloc,
                min: 2 * modes,
            });
        }
        Ok(Self {
            horizon: dt * steps as f64,
            steps,
            dt,
            modes,
            colloc,
        })
    }

    /// Grid time `t_k = k dt`.
    pub fn t_k(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Parameters matching a noise path's resolution.
    pub fn matching_noise(noise: &NoisePath, colloc: usize) -> Result<Self, StoheatError> {
        Self::from_dt(noise.dt(), noise.steps(), noise.modes(), colloc)
    }

    fn check_noise(&self, noise: &NoisePath) -> Result<(), StoheatError> {
        if noise.modes() != self.modes || noise.steps() != self.steps {
            return Err(StoheatError::NoiseShapeMismatch {
                m: noise.modes(),
                n: noise.steps(),
                want_m: self.modes,
                want_n: self.steps,
            });
        }
        Ok(())
    }
}

/// States of one run. By default only the endpoints are kept (Monte
/// Carlo over many paths would otherwise hold `N+1` fields each); dense
/// runs keep all `N+1` states for interpolation and moment probes.
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: SchemeParams,
    dense: bool,
    states: Vec<SpectralField>,
}

impl Trajectory {
    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn is_dense(&self) -> bool {
        self.dense
    }

    pub fn initial(&self) -> &SpectralField {
        &self.states[0]
    }

    pub fn final_state(&self) -> &SpectralField {
        self.states.last().expect("trajectory has states")
    }

    /// State at step `k`; requires a dense run for interior states.
    pub fn state(&self, k: usize) -> Result<&SpectralField, StoheatError> {
        if k > self.params.steps {
            return Err(StoheatError::TimeOutOfRange {
                t: self.params.t_k(k),
                t_max: self.params.horizon,
            });
        }
        if self.dense {
            Ok(&self.states[k])
        } else if k == 0 {
            Ok(&self.states[0])
        } else if k == self.params.steps {
            Ok(self.final_state())
        } else {
            Err(StoheatError::SparseTrajectory)
        }
    }
}

/// Preallocated buffers for repeated stepping at one resolution.
///
/// Holds the precomputed per-mode resolvent factors and, when the model
/// actually needs the grid, one transform plan plus scratch. The
/// workspace route and the one-shot public operators perform the same
/// floating point operations in the same order, so they agree bitwise.
struct StepWorkspace {
    params: SchemeParams,
    resolvent: Vec<f64>,
    needs_grid: bool,
    synth: f64,
    anal: f64,
    plan: Option<DstPlan>,
    padded: Vec<f64>,
    grid_state: Vec<f64>,
    grid_work: Vec<f64>,
    spec_out: Vec<f64>,
    pre: Vec<f64>,
}

impl StepWorkspace {
    fn new(basis: &EigenBasis, model: &ModelSpec, params: SchemeParams) -> Result<Self, StoheatError> {
        if basis.modes() != params.modes {
            return Err(StoheatError::DimensionMismatch {
                got: basis.modes(),
                want: params.modes,
            });
        }
        let resolvent = basis
            .lambdas()
            .iter()
            .map(|l| 1.0 / (1.0 + params.dt * l))
            .collect();
        let needs_grid = !model.f.is_zero() || model.sigma_kind != SigmaKind::Additive;
        let p = params.colloc;
        Ok(Self {
            params,
            resolvent,
            needs_grid,
            synth: synthesis_scale(basis.len_domain()),
            anal: analysis_scale(basis.len_domain(), p),
            plan: needs_grid.then(|| DstPlan::new(p)),
            padded: vec![0.0; if needs_grid { p } else { 0 }],
            grid_state: vec![0.0; if needs_grid { p } else { 0 }],
            grid_work: vec![0.0; if needs_grid { p } else { 0 }],
            spec_out: vec![0.0; if needs_grid { p } else { 0 }],
            pre: vec![0.0; params.modes],
        })
    }

    /// Synthesises the `m` coefficients in `coeffs` onto the grid in
    /// `out`, matching `to_grid` operation for operation.
    fn synthesize(&mut self, coeffs: &[f64], into_work: bool) {
        let m = self.params.modes;
        self.padded[..m].copy_from_slice(coeffs);
        self.padded[m..].fill(0.0);
        let plan = self.plan.as_mut().expect("grid workspace");
        let out = if into_work {
            &mut self.grid_work
        } else {
            &mut self.grid_state
        };
        plan.dst_i(&self.padded, out);
        for v in out.iter_mut() {
            *v *= self.synth;
        }
    }

    /// One scheme step in place: `x <- R (x + dt F(x) + G(x) dw)`.
    fn step(&mut self, model: &ModelSpec, x: &mut [f64], dw: &[f64]) {
        let m = self.params.modes;
        let dt = self.params.dt;
        debug_assert_eq!(x.len(), m);
        debug_assert_eq!(dw.len(), m);

        self.pre.copy_from_slice(x);

        if self.needs_grid {
            self.synthesize(x, false);
        }

        if !model.f.is_zero() {
            self.grid_work.copy_from_slice(&self.grid_state);
            model.f.map_inplace(&mut self.grid_work);
            let plan = self.plan.as_mut().expect("grid workspace");
            plan.dst_i(&self.grid_work, &mut self.spec_out);
            for j in 0..m {
                self.pre[j] += dt * (self.anal * self.spec_out[j]);
            }
        }

        match (model.sigma_kind, model.sigma) {
            (SigmaKind::Additive, Diffusion::Constant { level }) => {
                for j in 0..m {
                    self.pre[j] += level * dw[j];
                }
            }
            _ => {
                self.synthesize(dw, true);
                model.sigma.scale_noise(&self.grid_state, &mut self.grid_work);
                let plan = self.plan.as_mut().expect("grid workspace");
                plan.dst_i(&self.grid_work, &mut self.spec_out);
                for j in 0..m {
                    self.pre[j] += self.anal * self.spec_out[j];
                }
            }
        }

        for j in 0..m {
            x[j] = self.pre[j] * self.resolvent[j];
        }
    }

}

fn check_x0(params: &SchemeParams, x0: &SpectralField) -> Result<(), StoheatError> {
    if x0.len() != params.modes {
        return Err(StoheatError::DimensionMismatch {
            got: x0.len(),
            want: params.modes,
        });
    }
    Ok(())
}

/// One step of the scheme as a standalone operation.
pub fn euler_step(
    basis: &EigenBasis,
    x: &SpectralField,
    dw: &[f64],
    model: &ModelSpec,
    params: &SchemeParams,
) -> Result<SpectralField, StoheatError> {
    check_x0(params, x)?;
    if dw.len() != params.modes {
        return Err(StoheatError::DimensionMismatch {
            got: dw.len(),
            want: params.modes,
        });
    }
    let mut ws = StepWorkspace::new(basis, model, *params)?;
    let mut out = x.coeffs.clone();
    ws.step(model, &mut out, dw);
    Ok(SpectralField::from_coeffs(out))
}

fn run_inner(
    basis: &EigenBasis,
    x0: &SpectralField,
    noise: &NoisePath,
    model: &ModelSpec,
    params: &SchemeParams,
    dense: bool,
) -> Result<Trajectory, StoheatError> {
    check_x0(params, x0)?;
    params.check_noise(noise)?;
    let mut ws = StepWorkspace::new(basis, model, *params)?;
    let mut x = x0.coeffs.clone();
    let mut states = Vec::with_capacity(if dense { params.steps + 1 } else { 2 });
    states.push(x0.clone());
    for k in 0..params.steps {
        ws.step(model, &mut x, noise.increment(k));
        if dense {
            states.push(SpectralField::from_coeffs(x.clone()));
        }
    }
    if !dense {
        states.push(SpectralField::from_coeffs(x));
    }
    Ok(Trajectory {
        params: *params,
        dense,
        states,
    })
}

/// Runs the scheme over the whole noise path, keeping endpoints only.
pub fn run_path(
    basis: &EigenBasis,
    x0: &SpectralField,
    noise: &NoisePath,
    model: &ModelSpec,
    params: &SchemeParams,
) -> Result<Trajectory, StoheatError> {
    run_inner(basis, x0, noise, model, params, false)
}

/// Runs the scheme keeping all `N+1` states (interpolation, probes).
pub fn run_path_dense(
    basis: &EigenBasis,
    x0: &SpectralField,
    noise: &NoisePath,
    model: &ModelSpec,
    params: &SchemeParams,
) -> Result<Trajectory, StoheatError> {
    run_inner(basis, x0, noise, model, params, true)
}

/// Runs the same Brownian path at two resolutions: the fine noise as
/// given and the coarse grid obtained by summing increments in blocks
/// of `factor`. Returns the two final states; their gap is the coupled
/// (strong) discretisation error over one path.
pub fn run_coupled(
    basis: &EigenBasis,
    x0: &SpectralField,
    fine: &NoisePath,
    factor: usize,
    model: &ModelSpec,
    colloc: usize,
) -> Result<(SpectralField, SpectralField), StoheatError> {
    let fine_params = SchemeParams::matching_noise(fine, colloc)?;
    let fine_final = run_path(basis, x0, fine, model, &fine_params)?
        .final_state()
        .clone();
    let coarse_noise = fine.coarsen(factor)?;
    let coarse_params = SchemeParams::matching_noise(&coarse_noise, colloc)?;
    let coarse_final = run_path(basis, x0, &coarse_noise, model, &coarse_params)?
        .final_state()
        .clone();
    Ok((fine_final, coarse_final))
}

/// Piecewise interpolant between grid points:
///
/// ```text
/// Xt(t) = X_k + (t - t_k) (A_dt X_k + R F(X_k)) + R G(X_k) (W(t) - W(t_k))
/// ```
///
/// with the Brownian value inside the step drawn as a bridge
/// conditioned on the stored increment (a dedicated seed stream, so
/// interpolation never perturbs the path itself). At grid times the
/// stored state is returned bit-exactly.
pub fn interpolate(
    basis: &EigenBasis,
    traj: &Trajectory,
    noise: &NoisePath,
    t: f64,
    seed: &SeedSpec,
    model: &ModelSpec,
) -> Result<SpectralField, StoheatError> {
    let params = traj.params;
    if !(0.0..=params.horizon).contains(&t) {
        return Err(StoheatError::TimeOutOfRange {
            t,
            t_max: params.horizon,
        });
    }
    params.check_noise(noise)?;
    let k = ((t / params.dt).floor() as usize).min(params.steps.saturating_sub(1));
    if t == params.t_k(k) {
        return Ok(traj.state(k)?.clone());
    }
    if t == params.horizon {
        return Ok(traj.final_state().clone());
    }
    let xk = traj.state(k)?;
    let elapsed = t - params.t_k(k);
    let theta = elapsed / params.dt;

    let drift_gen = crate::spectral::yosida(basis, xk, params.dt)?;
    let reaction = crate::transform::apply_drift(basis, xk, model, params.colloc)?;
    let reaction = crate::spectral::resolvent_power(basis, &reaction, params.dt, 1)?;
    let bridge = noise.bridge_sample(seed, k, theta);
    let noise_term =
        crate::transform::diffusion_increment(basis, xk, &bridge, model, params.colloc)?;
    let noise_term = crate::spectral::resolvent_power(basis, &noise_term, params.dt, 1)?;

    let coeffs = (0..params.modes)
        .map(|j| {
            xk.coeffs[j]
                + elapsed * (drift_gen.coeffs[j] + reaction.coeffs[j])
                + noise_term.coeffs[j]
        })
        .collect();
    Ok(SpectralField::from_coeffs(coeffs))
}

/// Exact sample of the linear additive solution at the horizon
/// (`f = 0`, `sigma = sqrt(q)`): independently per mode,
/// `X_j(T) ~ Normal(e^{-lambda_j T} x0_j, q (1 - e^{-2 lambda_j T}) / (2 lambda_j))`.
///
/// Uses its own seed stream; a scheme run and an exact sample for the
/// same `SeedSpec` are statistically independent.
pub fn exact_ou_final(
    basis: &EigenBasis,
    x0: &SpectralField,
    params: &SchemeParams,
    q: f64,
    seed: &SeedSpec,
) -> Result<SpectralField, StoheatError> {
    check_x0(params, x0)?;
    if basis.modes() != params.modes {
        return Err(StoheatError::DimensionMismatch {
            got: basis.modes(),
            want: params.modes,
        });
    }
    assert!(q >= 0.0, "variance scale must be nonnegative");
    let t = params.horizon;
    let coeffs = basis
        .lambdas()
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let mean = (-l * t).exp() * x0.coeffs[j];
            let var = q * (1.0 - (-2.0 * l * t).exp()) / (2.0 * l);
            mean + var.sqrt() * seed.ou_normal(j)
        })
        .collect();
    Ok(SpectralField::from_coeffs(coeffs))
}
