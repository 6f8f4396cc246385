//! Experiment orchestration: run the ladders, write artifacts, print
//! the summary table, and apply any requested assertions.

use std::fmt::Write as _;
use std::fs;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use stoheat::models::validate_model;
use stoheat::oracle::{exact_ou_moments, expected_sq_norm, implicit_moments, stationary_sq_norm};
use stoheat::{
    moment_probe, strong_error_ladder, weak_error_ladder, with_worker_pool, MomentReport,
    RateReport, SigmaKind, SpectralField, StoheatError,
};

use crate::config::{Assertions, ExperimentConfig};

/// Statistical outcome of a verb; configuration errors travel as `Err`.
pub enum Outcome {
    Pass,
    /// A requested assertion failed or a ladder resolved no points.
    StatisticalFailure,
}

/// Checks the model declarations and grid construction; runs nothing.
pub fn validate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = cfg.model.to_spec();
    validate_model(&model).context("model validation")?;
    cfg.basis()?;
    cfg.finest_params()?;
    let min_dt = cfg.dts.iter().copied().fold(f64::INFINITY, f64::min);
    let max_dt = cfg.dts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ref_dt = min_dt / f64::from(1u32 << cfg.ref_refine);
    println!(
        "config ok: {} rungs, dt in [{:.6e}, {:.6e}], reference dt = {:.6e} ({} steps)",
        cfg.dts.len(),
        min_dt,
        max_dt,
        ref_dt,
        (cfg.horizon / ref_dt).round() as usize
    );
    let kind = match model.sigma_kind {
        SigmaKind::Additive => "additive",
        SigmaKind::LinearAffine => "linear affine",
        SigmaKind::General => "general",
    };
    println!(
        "model ok: {} (lip_f = {}, lip_sigma = {}, {} noise)",
        cfg.model.name(),
        model.lip_f,
        model.lip_sigma,
        kind
    );
    println!("phi ok: {}", cfg.phi);
    Ok(Outcome::Pass)
}

/// Runs both rate ladders and the moment probe, writes all artifacts,
/// prints the summary, and evaluates requested assertions.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = cfg.model.to_spec();
    validate_model(&model).context("model validation")?;
    let basis = cfg.basis()?;
    let x0 = SpectralField::zeros(cfg.modes);
    let phi = cfg.phi_functional();
    let weak_spec = cfg.ladder(cfg.m_weak, cfg.weak_seed());
    let strong_spec = cfg.ladder(cfg.m_strong, cfg.strong_seed());
    let moment_params = cfg.finest_params()?;

    let started = Instant::now();
    let (weak, strong, moments) = with_worker_pool(cfg.workers, || {
        let weak = weak_error_ladder(&basis, &model, &x0, phi, &weak_spec)?;
        let strong = strong_error_ladder(&basis, &model, &x0, &strong_spec)?;
        let moments = moment_probe(
            &basis,
            &model,
            &x0,
            &moment_params,
            cfg.m_strong,
            2,
            cfg.moment_seed(),
        )?;
        Ok::<_, StoheatError>((weak, strong, moments))
    })?;
    let elapsed = started.elapsed().as_secs_f64();

    write_artifacts(cfg, &weak, &strong, &moments)?;
    print!("{}", summary_text(&weak, &strong, &cfg.phi));
    println!(
        "moment probe: max_k E|X_k|^2 = {:.6e} ({} paths at dt = {:.6e})",
        moments.max_moment(),
        moments.samples,
        moment_params.dt
    );

    let failures = assertion_failures(&cfg.assertions, &weak, &strong);
    if !cfg.assertions.is_empty() {
        if failures.is_empty() {
            println!("assertions: all requested bounds hold");
        }
        for failure in &failures {
            println!("assertion failed: {failure}");
        }
    }
    println!("artifacts: {}", cfg.output.display());
    println!("wall time: {elapsed:.1} s");

    let starved = [&weak, &strong]
        .iter()
        .any(|rep| !rep.resolved.iter().any(|&r| r));
    if starved || !failures.is_empty() {
        Ok(Outcome::StatisticalFailure)
    } else {
        Ok(Outcome::Pass)
    }
}

/// Prints closed-form tables for the linear additive equation on the
/// configured geometry. The last column is the exact `phi_sq` weak
/// error against the experiment's own reference grid, directly
/// comparable with a `phi = "phi_sq"` run.
pub fn oracle(cfg: &ExperimentConfig) -> Result<Outcome> {
    let basis = cfg.basis()?;
    let level = match cfg.model.additive_level() {
        Some(level) => level,
        None => {
            println!(
                "note: model '{}' has state-dependent noise; tables use level 1",
                cfg.model.name()
            );
            1.0
        }
    };
    let x0 = vec![0.0; cfg.modes];
    let min_dt = cfg.dts.iter().copied().fold(f64::INFINITY, f64::min);
    let ref_dt = min_dt / f64::from(1u32 << cfg.ref_refine);
    let ref_steps = (cfg.horizon / ref_dt).round() as usize;
    let (ref_means, ref_vars) = implicit_moments(&basis, ref_dt, ref_steps, level, &x0);
    let m2_ref = expected_sq_norm(&ref_means, &ref_vars);
    let (ou_means, ou_vars) = exact_ou_moments(&basis, cfg.horizon, level, &x0);
    let m2_exact = expected_sq_norm(&ou_means, &ou_vars);

    println!(
        "linear additive closed forms: domain ({}, {}), m = {}, T = {}, sigma = {level}, x0 = 0",
        cfg.domain_a, cfg.domain_b, cfg.modes, cfg.horizon
    );
    println!(
        "{:>24} {:>8} {:>24} {:>24} {:>24}",
        "dt", "steps", "E|X_N|^2 implicit", "E|X(T)|^2 exact", "phi_sq weak error"
    );
    for &dt in &cfg.dts {
        let steps = (cfg.horizon / dt).round() as usize;
        let (means, vars) = implicit_moments(&basis, dt, steps, level, &x0);
        let m2 = expected_sq_norm(&means, &vars);
        println!(
            "{:>24.16e} {:>8} {:>24.16e} {:>24.16e} {:>24.16e}",
            dt,
            steps,
            m2,
            m2_exact,
            (m2 - m2_ref).abs()
        );
    }
    println!(
        "reference: dt = {:.16e}, {} steps, E|X_ref|^2 = {:.16e}",
        ref_dt, ref_steps, m2_ref
    );
    println!(
        "discrete stationary limit at finest rung dt: {:.16e}",
        stationary_sq_norm(&basis, min_dt, level)
    );
    Ok(Outcome::Pass)
}

#[derive(Serialize)]
struct DerivedSeeds {
    weak: u64,
    strong: u64,
    moments: u64,
}

/// Written next to the data so an artifact directory is
/// self-describing: every input that influenced the numbers is here.
#[derive(Serialize)]
struct Manifest<'a> {
    library: &'static str,
    library_version: &'static str,
    config: &'a ExperimentConfig,
    initial_state: &'static str,
    derived_seeds: DerivedSeeds,
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    weak: &RateReport,
    strong: &RateReport,
    moments: &MomentReport,
) -> Result<()> {
    fs::create_dir_all(&cfg.output)
        .with_context(|| format!("creating output directory {}", cfg.output.display()))?;
    let manifest = Manifest {
        library: "stoheat",
        library_version: stoheat::VERSION,
        config: cfg,
        initial_state: "zero",
        derived_seeds: DerivedSeeds {
            weak: cfg.weak_seed(),
            strong: cfg.strong_seed(),
            moments: cfg.moment_seed(),
        },
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    let mut weak_json = serde_json::to_string_pretty(weak)?;
    weak_json.push('\n');
    let mut strong_json = serde_json::to_string_pretty(strong)?;
    strong_json.push('\n');
    for (name, body) in [
        ("manifest.json", manifest_json),
        ("weak_rate.json", weak_json),
        ("weak_rate.csv", weak.to_csv()),
        ("strong_rate.json", strong_json),
        ("strong_rate.csv", strong.to_csv()),
        ("moments.csv", moments.to_csv()),
    ] {
        let path = cfg.output.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn ladder_block(out: &mut String, title: &str, rep: &RateReport) {
    let samples = rep.n_samples.first().copied().unwrap_or(0);
    let _ = writeln!(out, "{title}   samples = {samples}");
    let _ = writeln!(out, "   {:>18} {:>16} {:>16}", "dt", "error", "stderr");
    for i in 0..rep.dts.len() {
        let mark = if rep.resolved[i] { ' ' } else { '*' };
        let _ = writeln!(
            out,
            " {mark} {:>18.10e} {:>16.8e} {:>16.8e}",
            rep.dts[i], rep.errors[i], rep.stderrs[i]
        );
    }
    let resolved = rep.resolved.iter().filter(|&&r| r).count();
    let excluded_note = if rep.excluded > 0 {
        format!("   ({} of {} rungs excluded)", rep.excluded, rep.dts.len())
    } else {
        String::new()
    };
    if resolved == 0 {
        let _ = writeln!(out, "no resolved points");
    } else if let Some(fit) = rep.fit {
        let _ = writeln!(
            out,
            "slope {:.4}   95% ci [{:.4}, {:.4}]   r^2 {:.4}{excluded_note}",
            fit.slope, fit.slope_ci.0, fit.slope_ci.1, fit.r_squared
        );
    } else {
        let _ = writeln!(
            out,
            "no fit: {resolved} resolved rungs (need 3){excluded_note}"
        );
    }
}

/// Human-readable report table for both ladders plus the slope ratio.
fn summary_text(weak: &RateReport, strong: &RateReport, phi: &str) -> String {
    let mut out = String::new();
    ladder_block(&mut out, &format!("weak error ladder   phi = {phi}"), weak);
    let _ = writeln!(out);
    ladder_block(&mut out, "strong error ladder", strong);
    let _ = writeln!(out);
    match (weak.fit, strong.fit) {
        (Some(w), Some(s)) if s.slope != 0.0 => {
            let _ = writeln!(out, "weak/strong slope ratio: {:.2}", w.slope / s.slope);
        }
        _ => {
            let _ = writeln!(out, "weak/strong slope ratio: unavailable");
        }
    }
    out
}

fn check_band(
    failures: &mut Vec<String>,
    name: &str,
    value: Option<f64>,
    lo: Option<f64>,
    hi: Option<f64>,
) {
    if lo.is_none() && hi.is_none() {
        return;
    }
    let Some(v) = value else {
        failures.push(format!("{name}: bound requested but no fit is available"));
        return;
    };
    if let Some(lo) = lo {
        if v < lo {
            failures.push(format!("{name} = {v:.4} falls below min {lo}"));
        }
    }
    if let Some(hi) = hi {
        if v > hi {
            failures.push(format!("{name} = {v:.4} exceeds max {hi}"));
        }
    }
}

fn assertion_failures(a: &Assertions, weak: &RateReport, strong: &RateReport) -> Vec<String> {
    let mut failures = Vec::new();
    let weak_slope = weak.fit.map(|f| f.slope);
    let strong_slope = strong.fit.map(|f| f.slope);
    let ratio = match (weak_slope, strong_slope) {
        (Some(w), Some(s)) if s != 0.0 => Some(w / s),
        _ => None,
    };
    check_band(
        &mut failures,
        "weak slope",
        weak_slope,
        a.weak_slope_min,
        a.weak_slope_max,
    );
    check_band(
        &mut failures,
        "strong slope",
        strong_slope,
        a.strong_slope_min,
        a.strong_slope_max,
    );
    check_band(
        &mut failures,
        "weak/strong ratio",
        ratio,
        a.ratio_min,
        a.ratio_max,
    );
    failures
}

#[cfg(test)]
mod tests {
    use super::*;
    use stoheat::LogLogFit;

    fn synthetic(slope: f64, resolved: Vec<bool>) -> RateReport {
        let n = resolved.len();
        let excluded = resolved.iter().filter(|&&r| !r).count();
        let fit = if resolved.iter().filter(|&&r| r).count() >= 3 {
            Some(LogLogFit {
                slope,
                slope_ci: (slope - 0.05, slope + 0.05),
                intercept: -1.0,
                r_squared: 0.999,
            })
        } else {
            None
        };
        RateReport {
            dts: (0..n).map(|i| 0.5_f64.powi(i as i32 + 1)).collect(),
            errors: (0..n).map(|i| 0.1 / (i + 1) as f64).collect(),
            stderrs: vec![1e-3; n],
            n_samples: vec![100; n],
            resolved,
            excluded,
            fit,
        }
    }

    #[test]
    fn ratio_of_half_over_quarter_prints_two() {
        let weak = synthetic(0.50, vec![true; 4]);
        let strong = synthetic(0.25, vec![true; 4]);
        let text = summary_text(&weak, &strong, "phi_exp");
        assert!(text.contains("weak/strong slope ratio: 2.00"), "{text}");
    }

    #[test]
    fn unresolved_rungs_are_starred_and_counted() {
        let weak = synthetic(0.5, vec![true, true, true, false]);
        let strong = synthetic(0.25, vec![true; 4]);
        let text = summary_text(&weak, &strong, "phi_exp");
        assert!(text.contains("\n * "), "{text}");
        assert!(text.contains("(1 of 4 rungs excluded)"), "{text}");
    }

    #[test]
    fn all_unresolved_reports_no_resolved_points() {
        let weak = synthetic(0.5, vec![false; 4]);
        let strong = synthetic(0.25, vec![true; 4]);
        let text = summary_text(&weak, &strong, "phi_exp");
        assert!(text.contains("no resolved points"), "{text}");
        assert!(text.contains("ratio: unavailable"), "{text}");
    }

    #[test]
    fn bands_catch_out_of_range_and_missing_values() {
        let weak = synthetic(0.57, vec![true; 4]);
        let strong = synthetic(0.34, vec![true; 4]);
        let mut a = Assertions::default();
        assert!(assertion_failures(&a, &weak, &strong).is_empty());

        a.weak_slope_max = Some(0.55);
        a.strong_slope_min = Some(0.2);
        let failures = assertion_failures(&a, &weak, &strong);
        assert_eq!(failures.len(), 1, "{failures:?}");
        assert!(failures[0].contains("weak slope"), "{failures:?}");

        // An unfittable ladder fails any bound that needs its slope.
        let unfit = synthetic(0.0, vec![false; 4]);
        let mut b = Assertions::default();
        b.ratio_min = Some(1.5);
        let failures = assertion_failures(&b, &weak, &unfit);
        assert_eq!(failures.len(), 1);
        assert!(failures[0].contains("no fit"), "{failures:?}");
    }

    #[test]
    fn in_band_values_pass() {
        let weak = synthetic(0.57, vec![true; 4]);
        let strong = synthetic(0.34, vec![true; 4]);
        let a = Assertions {
            weak_slope_min: Some(0.4),
            weak_slope_max: Some(0.7),
            strong_slope_min: Some(0.2),
            strong_slope_max: Some(0.4),
            ratio_min: Some(1.5),
            ratio_max: Some(2.0),
        };
        assert!(assertion_failures(&a, &weak, &strong).is_empty());
    }
}
