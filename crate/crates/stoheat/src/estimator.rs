//! Monte Carlo measurement of weak and strong convergence rates.
//!
//! For a ladder of step sizes `dt_1 > ... > dt_R`, every sample path
//! draws one noise matrix at the reference resolution
//! `dt_ref = min(dt) / 2^ref_refine`, runs the scheme there, and then
//! reruns the *same* Brownian path at every rung by summing increments
//! (common random numbers). The weak error of a rung is the mean of the
//! paired differences `phi(X_rung) - phi(X_ref)`; the strong error is
//! the mean of `|X_rung - X_ref|`. Pairing leaves the expected
//! difference untouched while cancelling most of the sampling noise.
//!
//! A rung whose error magnitude is below twice its standard error is
//! statistically unresolved: it is reported but excluded from the
//! log-log regression, so noise-floor points cannot flatten the fitted
//! slope.
//!
//! Paths are distributed by index and reduced over a fixed pairwise
//! tree, so reports are bit-identical for a given seed regardless of
//! worker count.

use crate::error::StoheatError;
use crate::integrator::{run_path, run_path_dense, SchemeParams};
use crate::models::ModelSpec;
use crate::noise::{NoisePath, SeedSpec};
use crate::parallel::{map_paths, mean_and_stderr};
use crate::spectral::{EigenBasis, SpectralField};
use serde::Serialize;

/// Test functionals `phi` evaluated at the final state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunctional {
    /// `phi(x) = exp(-|x|^2)`: bounded with bounded derivatives of all
    /// orders; the canonical smooth weak-error functional.
    Exp,
    /// `phi(x) = sin(x_1)`: depends on the first coordinate only;
    /// Lipschitz with constant 1, smooth and bounded.
    Coord,
    /// `phi(x) = |x|^2`: unbounded, so outside the smooth bounded
    /// class; kept because its expectation has closed forms in the
    /// linear case (oracle checks only).
    Sq,
}

impl TestFunctional {
    pub const ALL: [TestFunctional; 3] =
        [TestFunctional::Exp, TestFunctional::Coord, TestFunctional::Sq];

    pub fn name(&self) -> &'static str {
        match self {
            TestFunctional::Exp => "phi_exp",
            TestFunctional::Coord => "phi_coord",
            TestFunctional::Sq => "phi_sq",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|f| f.name() == name)
    }

    /// Whether the functional is smooth and bounded with bounded
    /// derivatives (the class the weak-rate statement covers).
    pub fn is_smooth_bounded(&self) -> bool {
        !matches!(self, TestFunctional::Sq)
    }

    pub fn eval(&self, x: &SpectralField) -> f64 {
        match self {
            TestFunctional::Exp => (-x.coeffs.iter().map(|c| c * c).sum::<f64>()).exp(),
            TestFunctional::Coord => x.coeffs[0].sin(),
            TestFunctional::Sq => x.coeffs.iter().map(|c| c * c).sum(),
        }
    }
}

/// Shared shape of a rate experiment: horizon, rung step sizes, sample
/// count, reference refinement and the experiment seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderSpec {
    pub horizon: f64,
    pub dts: Vec<f64>,
    pub samples: usize,
    /// The reference runs at `min(dts) / 2^ref_refine`.
    pub ref_refine: u32,
    pub experiment_seed: u64,
    /// Collocation nodes used by every run in the ladder.
    pub colloc: usize,
}

impl LadderSpec {
    /// Dyadic ladder `dt = T 2^-j` for `j = j_lo..=j_hi`, coarsest
    /// first.
    pub fn dyadic(
        horizon: f64,
        j_lo: u32,
        j_hi: u32,
        samples: usize,
        ref_refine: u32,
        experiment_seed: u64,
        colloc: usize,
    ) -> Self {
        let dts = (j_lo..=j_hi)
            .map(|j| horizon / f64::from(1u32 << j))
            .collect();
        Self {
            horizon,
            dts,
            samples,
            ref_refine,
            experiment_seed,
            colloc,
        }
    }

    /// Checks the ladder geometry without running anything: every `dt`
    /// must divide the horizon and be an integer multiple of the
    /// reference step `min(dts) / 2^ref_refine`.
    pub fn validate(&self) -> Result<(), StoheatError> {
        resolve_grid(self).map(|_| ())
    }
}

/// One resolved rung of a ladder, ready for simulation.
#[derive(Debug)]
struct Rung {
    dt: f64,
    steps: usize,
    /// Coarsening factor from the reference grid to this rung.
    factor: usize,
}

#[derive(Debug)]
struct LadderGrid {
    rungs: Vec<Rung>,
    ref_dt: f64,
    ref_steps: usize,
}

/// Relative slack when checking that one grid quantity is an integer
/// multiple of another; absorbs the rounding of `T/dt`.
const DIVISIBILITY_TOL: f64 = 1e-9;

fn near_integer(x: f64) -> Option<usize> {
    let r = x.round();
    if r >= 1.0 && (x - r).abs() <= DIVISIBILITY_TOL * x.abs().max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

fn resolve_grid(spec: &LadderSpec) -> Result<LadderGrid, StoheatError> {
    if spec.dts.is_empty() {
        return Err(StoheatError::TooFewFitPoints { got: 0 });
    }
    let mut min_dt = f64::INFINITY;
    for (index, &dt) in spec.dts.iter().enumerate() {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(StoheatError::BadLadderRung {
                index,
                dt,
                reason: "step size must be positive and finite".into(),
            });
        }
        if near_integer(spec.horizon / dt).is_none() {
            return Err(StoheatError::BadLadderRung {
                index,
                dt,
                reason: format!(
                    "T/dt = {} is not an integer step count",
                    spec.horizon / dt
                ),
            });
        }
        min_dt = min_dt.min(dt);
    }
    let ref_dt = min_dt / f64::from(1u32 << spec.ref_refine);
    let ref_steps = near_integer(spec.horizon / ref_dt).ok_or_else(|| {
        StoheatError::BadLadderRung {
            index: 0,
            dt: ref_dt,
            reason: "reference grid does not divide the horizon".into(),
        }
    })?;
    let mut rungs = Vec::with_capacity(spec.dts.len());
    for (index, &dt) in spec.dts.iter().enumerate() {
        let steps = near_integer(spec.horizon / dt).expect("validated above");
        let factor = near_integer(dt / ref_dt).ok_or_else(|| StoheatError::BadLadderRung {
            index,
            dt,
            reason: format!("dt is not an integer multiple of the reference dt {ref_dt}"),
        })?;
        rungs.push(Rung { dt, steps, factor });
    }
    Ok(LadderGrid {
        rungs,
        ref_dt,
        ref_steps,
    })
}

/// Weighted log-log regression line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    /// 95% confidence interval from the regression covariance.
    pub slope_ci: (f64, f64),
    pub intercept: f64,
    pub r_squared: f64,
}

/// Measured errors across a ladder plus the fitted rate.
///
/// `fit` is absent when fewer than 3 rungs are statistically resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub n_samples: Vec<usize>,
    /// Whether `|error| > 2 stderr` (the rung carries signal).
    pub resolved: Vec<bool>,
    /// Number of rungs excluded from the fit as unresolved.
    pub excluded: usize,
    pub fit: Option<LogLogFit>,
}

impl RateReport {
    fn from_rungs(
        dts: Vec<f64>,
        errors: Vec<f64>,
        stderrs: Vec<f64>,
        n_samples: Vec<usize>,
    ) -> Self {
        let resolved: Vec<bool> = errors
            .iter()
            .zip(&stderrs)
            .map(|(e, s)| e.abs() > 2.0 * s)
            .collect();
        let excluded = resolved.iter().filter(|r| !**r).count();
        let (fdts, ferrs, fses): (Vec<f64>, Vec<f64>, Vec<f64>) = {
            let mut d = Vec::new();
            let mut e = Vec::new();
            let mut s = Vec::new();
            for i in 0..dts.len() {
                if resolved[i] {
                    d.push(dts[i]);
                    e.push(errors[i]);
                    s.push(stderrs[i]);
                }
            }
            (d, e, s)
        };
        let fit = fit_loglog(&fdts, &ferrs, &fses).ok();
        Self {
            dts,
            errors,
            stderrs,
            n_samples,
            resolved,
            excluded,
            fit,
        }
    }

    /// Per-rung CSV with full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dt,error,stderr,n_samples,resolved_flag\n");
        for i in 0..self.dts.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{},{}\n",
                self.dts[i], self.errors[i], self.stderrs[i], self.n_samples[i], self.resolved[i]
            ));
        }
        out
    }
}

/// Weighted least squares of `ln error` on `ln dt`.
///
/// Weights come from the delta method: `Var(ln e) ~ (stderr/error)^2`.
/// Exactly known points (zero stderr) get a tiny variance floor, which
/// reduces the fit to ordinary least squares in the all-deterministic
/// case. The confidence interval uses the normal 95% quantile; the
/// per-point variances are treated as known, not estimated from
/// residuals.
pub fn fit_loglog(
    dts: &[f64],
    errors: &[f64],
    stderrs: &[f64],
) -> Result<LogLogFit, StoheatError> {
    if dts.len() < 3 {
        return Err(StoheatError::TooFewFitPoints { got: dts.len() });
    }
    assert_eq!(dts.len(), errors.len());
    assert_eq!(dts.len(), stderrs.len());
    for i in 0..dts.len() {
        if !(dts[i] > 0.0) || !(errors[i] > 0.0) {
            return Err(StoheatError::NonpositiveFitPoint { index: i });
        }
    }
    const VAR_FLOOR: f64 = 1e-16;
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let n = dts.len();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for i in 0..n {
        let x = dts[i].ln();
        let y = errors[i].ln();
        let rel = stderrs[i] / errors[i];
        let w = 1.0 / (rel * rel).max(VAR_FLOOR);
        xs.push(x);
        ys.push(y);
        ws.push(w);
        s += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = s * sxx - sx * sx;
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let se_slope = (s / det).sqrt();
    let z = 1.959_963_984_540_054; // normal 97.5% quantile
    let ci = (slope - z * se_slope, slope + z * se_slope);

    let ybar = sy / s;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..n {
        let fitv = intercept + slope * xs[i];
        ss_res += ws[i] * (ys[i] - fitv) * (ys[i] - fitv);
        ss_tot += ws[i] * (ys[i] - ybar) * (ys[i] - ybar);
    }
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(LogLogFit {
        slope,
        slope_ci: ci,
        intercept,
        r_squared,
    })
}

/// Runs one coupled sample: the reference trajectory and every rung on
/// the same Brownian path, handing the finals to `observe`.
fn coupled_sample<T>(
    basis: &EigenBasis,
    model: &ModelSpec,
    x0: &SpectralField,
    grid: &LadderGrid,
    spec: &LadderSpec,
    path: usize,
    mut observe: impl FnMut(&SpectralField, &SpectralField) -> T,
) -> Result<Vec<T>, StoheatError> {
    let seed = SeedSpec::new(spec.experiment_seed, path as u64);
    let fine = NoisePath::sample(&seed, basis.modes(), grid.ref_steps, grid.ref_dt);
    let ref_params = SchemeParams::from_dt(grid.ref_dt, grid.ref_steps, basis.modes(), spec.colloc)?;
    let x_ref = run_path(basis, x0, &fine, model, &ref_params)?
        .final_state()
        .clone();
    let mut out = Vec::with_capacity(grid.rungs.len());
    for rung in &grid.rungs {
        let noise = fine.coarsen(rung.factor)?;
        let params = SchemeParams::from_dt(rung.dt, rung.steps, basis.modes(), spec.colloc)?;
        let x = run_path(basis, x0, &noise, model, &params)?
            .final_state()
            .clone();
        out.push(observe(&x, &x_ref));
    }
    Ok(out)
}

fn ladder_report(
    spec: &LadderSpec,
    per_path: Vec<Vec<f64>>, // samples x rungs
    rung_count: usize,
) -> RateReport {
    let mut errors = Vec::with_capacity(rung_count);
    let mut stderrs = Vec::with_capacity(rung_count);
    let mut n_samples = Vec::with_capacity(rung_count);
    let mut column = vec![0.0; per_path.len()];
    for r in 0..rung_count {
        for (p, row) in per_path.iter().enumerate() {
            column[p] = row[r];
        }
        let (mean, se) = mean_and_stderr(&column);
        errors.push(mean.abs());
        stderrs.push(se);
        n_samples.push(per_path.len());
    }
    RateReport::from_rungs(spec.dts.clone(), errors, stderrs, n_samples)
}

/// Weak error ladder: per rung, the absolute mean of the paired
/// differences `phi(X_rung) - phi(X_ref)` over `samples` common-noise
/// pairs, with its standard error, plus the fitted slope over the
/// resolved rungs.
pub fn weak_error_ladder(
    basis: &EigenBasis,
    model: &ModelSpec,
    x0: &SpectralField,
    phi: TestFunctional,
    spec: &LadderSpec,
) -> Result<RateReport, StoheatError> {
    let grid = resolve_grid(spec)?;
    let results: Vec<Result<Vec<f64>, StoheatError>> = map_paths(spec.samples, |path| {
        coupled_sample(basis, model, x0, &grid, spec, path, |x, x_ref| {
            phi.eval(x) - phi.eval(x_ref)
        })
    });
    let mut per_path = Vec::with_capacity(results.len());
    for r in results {
        per_path.push(r?);
    }
    Ok(ladder_report(spec, per_path, grid.rungs.len()))
}

/// Strong error ladder: per rung, the mean of `|X_rung - X_ref|` over
/// coupled paths (an L1-in-probability pathwise error).
pub fn strong_error_ladder(
    basis: &EigenBasis,
    model: &ModelSpec,
    x0: &SpectralField,
    spec: &LadderSpec,
) -> Result<RateReport, StoheatError> {
    let grid = resolve_grid(spec)?;
    let results: Vec<Result<Vec<f64>, StoheatError>> = map_paths(spec.samples, |path| {
        coupled_sample(basis, model, x0, &grid, spec, path, |x, x_ref| {
            let mut s = 0.0;
            for (a, b) in x.coeffs.iter().zip(&x_ref.coeffs) {
                s += (a - b) * (a - b);
            }
            s.sqrt()
        })
    });
    let mut per_path = Vec::with_capacity(results.len());
    for r in results {
        per_path.push(r?);
    }
    Ok(ladder_report(spec, per_path, grid.rungs.len()))
}

/// Per-step even moments `E |X_k|^l` with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub order: u32,
    pub times: Vec<f64>,
    pub moments: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub samples: usize,
}

impl MomentReport {
    pub fn max_moment(&self) -> f64 {
        self.moments.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,moment,stderr,order,n_samples\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{},{}\n",
                self.times[i], self.moments[i], self.stderrs[i], self.order, self.samples
            ));
        }
        out
    }
}

/// Estimates `E |X_k|^l` for every step of a single-resolution run.
/// `order` must be 2 or 4 (even moments of the norm).
pub fn moment_probe(
    basis: &EigenBasis,
    model: &ModelSpec,
    x0: &SpectralField,
    params: &SchemeParams,
    samples: usize,
    order: u32,
    experiment_seed: u64,
) -> Result<MomentReport, StoheatError> {
    assert!(order == 2 || order == 4, "only even orders 2 and 4");
    let n = params.steps;
    let results: Vec<Result<Vec<f64>, StoheatError>> = map_paths(samples, |path| {
        let seed = SeedSpec::new(experiment_seed, path as u64);
        let noise = NoisePath::sample(&seed, params.modes, n, params.dt);
        let traj = run_path_dense(basis, x0, &noise, model, params)?;
        Ok((0..=n)
            .map(|k| {
                let nrm = traj.state(k).expect("dense run").norm();
                if order == 2 {
                    nrm * nrm
                } else {
                    (nrm * nrm) * (nrm * nrm)
                }
            })
            .collect())
    });
    let mut per_path = Vec::with_capacity(results.len());
    for r in results {
        per_path.push(r?);
    }
    let mut moments = Vec::with_capacity(n + 1);
    let mut stderrs = Vec::with_capacity(n + 1);
    let mut column = vec![0.0; per_path.len()];
    for k in 0..=n {
        for (p, row) in per_path.iter().enumerate() {
            column[p] = row[k];
        }
        let (mean, se) = mean_and_stderr(&column);
        moments.push(mean);
        stderrs.push(se);
    }
    Ok(MomentReport {
        order,
        times: (0..=n).map(|k| params.t_k(k)).collect(),
        moments,
        stderrs,
        samples,
    })
}
