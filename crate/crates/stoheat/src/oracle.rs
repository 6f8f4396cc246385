//! Closed-form and numerically-exact reference quantities.
//!
//! Everything here is derivable with pencil and paper (or a dense
//! brute-force computation) without touching the solver: per-mode
//! moment recursions of the linear additive equation, exact
//! Ornstein-Uhlenbeck transition moments, sine series of constants,
//! smoothing-bound optima, and an independent finite-difference
//! eigensolver. Tests compare solver output against these; the CLI
//! `oracle` verb prints them for external cross-checking. Nothing in
//! this module calls the integrator, the transforms, or the noise
//! generator.

use crate::spectral::EigenBasis;

/// Per-mode mean and variance of the implicit Euler chain for the
/// linear additive model (`f = 0`, `sigma = level`):
///
/// ```text
/// mean_{k+1} = mean_k / (1 + dt lambda),
/// var_{k+1}  = (var_k + level^2 dt) / (1 + dt lambda)^2,
/// ```
///
/// starting from the deterministic `x0` (variance 0). Returns the
/// moments after `n` steps.
pub fn implicit_moments(
    basis: &EigenBasis,
    dt: f64,
    n: usize,
    level: f64,
    x0: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(x0.len(), basis.modes());
    let q = level * level * dt;
    let mut means = x0.to_vec();
    let mut vars = vec![0.0; basis.modes()];
    for _ in 0..n {
        for (j, &l) in basis.lambdas().iter().enumerate() {
            let r = 1.0 / (1.0 + dt * l);
            means[j] *= r;
            vars[j] = (vars[j] + q) * r * r;
        }
    }
    (means, vars)
}

/// Exact transition moments of the continuous linear additive equation
/// (independent Ornstein-Uhlenbeck modes): mean `e^{-lambda t} x0`,
/// variance `level^2 (1 - e^{-2 lambda t}) / (2 lambda)`.
pub fn exact_ou_moments(basis: &EigenBasis, t: f64, level: f64, x0: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(x0.len(), basis.modes());
    let q = level * level;
    let means = x0
        .iter()
        .zip(basis.lambdas())
        .map(|(x, l)| x * (-l * t).exp())
        .collect();
    let vars = basis
        .lambdas()
        .iter()
        .map(|l| q * (1.0 - (-2.0 * l * t).exp()) / (2.0 * l))
        .collect();
    (means, vars)
}

/// `E |X|^2 = sum_j (mean_j^2 + var_j)` for independent Gaussian modes.
pub fn expected_sq_norm(means: &[f64], vars: &[f64]) -> f64 {
    assert_eq!(means.len(), vars.len());
    crate::parallel::pairwise_sum_iter(
        means.iter().zip(vars).map(|(m, v)| m * m + v),
    )
}

/// Variance of `|X|^2` for independent centred-plus-mean Gaussian
/// modes: `sum_j (2 var_j^2 + 4 mean_j^2 var_j)`. Fixes the width of
/// the 3-sigma acceptance band around [`expected_sq_norm`].
pub fn var_sq_norm(means: &[f64], vars: &[f64]) -> f64 {
    assert_eq!(means.len(), vars.len());
    crate::parallel::pairwise_sum_iter(
        means
            .iter()
            .zip(vars)
            .map(|(m, v)| 2.0 * v * v + 4.0 * m * m * v),
    )
}

/// Stationary per-mode second moment of the implicit chain with
/// `f = 0`, `sigma = level`: the fixed point of the variance recursion,
/// `level^2 / (lambda (2 + dt lambda))`, summed over modes.
pub fn stationary_sq_norm(basis: &EigenBasis, dt: f64, level: f64) -> f64 {
    let q = level * level;
    crate::parallel::pairwise_sum_iter(
        basis
            .lambdas()
            .iter()
            .map(|l| q / (l * (2.0 + dt * l))),
    )
}

/// Continuum sine-series coefficient of the constant function `c` on
/// the basis domain: `(c, e_j) = c sqrt(2/L) L (1 - (-1)^j) / (j pi)`.
pub fn sine_series_constant(basis: &EigenBasis, c: f64, j: usize) -> f64 {
    assert!(j >= 1);
    let l = basis.len_domain();
    if j % 2 == 0 {
        0.0
    } else {
        c * (2.0 / l).sqrt() * l * 2.0 / (j as f64 * std::f64::consts::PI)
    }
}

/// Numerically maximises `g` over `lambda > 0`: dense scan of a wide
/// logarithmic grid followed by golden-section refinement around the
/// best cell. Returns `(argmax, max)`.
///
/// The scan covers `[1e-12, 1e12]`, far beyond any eigenvalue or
/// interior optimum arising in the smoothing bounds, so boundary
/// suprema (attained as `lambda -> 0` or `infinity`) are represented by
/// near-boundary values that still dominate every discrete eigenvalue
/// evaluation.
pub fn maximize_over_positive<F: Fn(f64) -> f64>(g: F) -> (f64, f64) {
    let (lo, hi) = (1e-12f64, 1e12f64);
    let cells = 4000;
    let ratio = (hi / lo).powf(1.0 / cells as f64);
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    let mut x = lo;
    for i in 0..=cells {
        let v = g(x);
        if v > best {
            best = v;
            best_i = i;
        }
        x *= ratio;
    }
    // golden-section inside the two cells around the best sample
    let mut a = lo * ratio.powi((best_i as i32 - 1).max(0));
    let mut b = lo * ratio.powi((best_i as i32 + 1).min(cells as i32));
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..200 {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - (b - a) * INV_PHI;
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + (b - a) * INV_PHI;
            gd = g(d);
        }
        if b - a < 1e-14 * b.abs().max(1.0) {
            break;
        }
    }
    let xm = 0.5 * (a + b);
    (xm, g(xm).max(best))
}

/// Continuous optimum dominating the k-step resolvent smoothing factor:
/// `sup_{lambda>0} (t_k lambda)^beta (1 + dt lambda)^{-k}` with
/// `t_k = k dt`.
pub fn resolvent_power_bound(dt: f64, k: u32, beta: f64) -> f64 {
    let tk = k as f64 * dt;
    maximize_over_positive(|l| (tk * l).powf(beta) * (1.0 + dt * l).powf(-(k as f64))).1
}

/// Analytic optimum of the semigroup smoothing factor:
/// `sup_{x>0} x^beta e^{-x} = (beta/e)^beta`.
pub fn semigroup_bound(beta: f64) -> f64 {
    if beta == 0.0 {
        1.0
    } else {
        (beta / std::f64::consts::E).powf(beta)
    }
}

/// Continuous optimum of the single-step resolvent factor:
/// `sup_{lambda>0} lambda^beta / (1 + dt lambda)`.
pub fn resolvent_single_bound(dt: f64, beta: f64) -> f64 {
    maximize_over_positive(|l| l.powf(beta) / (1.0 + dt * l)).1
}

/// Continuous optimum of the one-step damping factor:
/// `sup_{lambda>0} lambda^{-beta} (1 - (1 + dt lambda)^{-1})`, which is
/// at most `dt^beta` for `beta` in `[0, 1]`. Evaluated through the
/// identity `1 - (1+x)^{-1} = x/(1+x)`, which is exact and avoids the
/// catastrophic cancellation of the literal form as `lambda -> 0`.
pub fn step_damping_bound(dt: f64, beta: f64) -> f64 {
    maximize_over_positive(|l| dt * l.powf(1.0 - beta) / (1.0 + dt * l)).1
}

/// `j`-th eigenvalue (1-based, ascending) of the standard second-order
/// finite-difference Dirichlet Laplacian on `n` interior points of an
/// interval of length `len`: an independent discrete route to the
/// continuum eigenvalues.
///
/// The matrix is `(1/h^2) tridiag(-1, 2, -1)` with `h = len/(n+1)`.
/// The eigenvalue is located by bisection on the Sturm count of the
/// shifted tridiagonal matrix (number of negative pivots of the LDL^T
/// factorisation equals the number of eigenvalues below the shift).
pub fn fd_dirichlet_eigenvalue(len: f64, n: usize, j: usize) -> f64 {
    assert!(j >= 1 && j <= n);
    let h = len / (n as f64 + 1.0);
    let diag = 2.0 / (h * h);
    let off = -1.0 / (h * h);

    // Count of eigenvalues strictly below x.
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = diag - x;
        if d < 0.0 {
            count += 1;
        }
        for _ in 1..n {
            // pivot recurrence; guard exact zeros with a tiny shift
            if d == 0.0 {
                d = 1e-300;
            }
            d = (diag - x) - (off * off) / d;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };

    let mut lo = 0.0;
    let mut hi = 4.0 / (h * h); // Gershgorin upper bound
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) >= j {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn maximizer_recovers_known_optima() {
        // x^b e^{-x} peaks at x = b with value (b/e)^b
        for &b in &[0.25, 0.5, 1.0, 2.0] {
            let (arg, val) = maximize_over_positive(|x| x.powf(b) * (-x).exp());
            assert!((arg - b).abs() < 1e-6 * b, "argmax {arg} for b = {b}");
            assert!((val - semigroup_bound(b)).abs() < 1e-12);
        }
    }

    #[test]
    fn resolvent_single_bound_matches_closed_form() {
        // sup lambda^b/(1+dt lambda) = dt^-b b^b (1-b)^(1-b) on (0,1)
        for &dt in &[1e-1f64, 1e-2, 1e-3] {
            for &b in &[0.25f64, 0.5, 0.75] {
                let closed = dt.powf(-b) * b.powf(b) * (1.0 - b).powf(1.0 - b);
                let numeric = resolvent_single_bound(dt, b);
                assert!(
                    (numeric - closed).abs() < 1e-9 * closed,
                    "dt = {dt}, b = {b}: {numeric} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn resolvent_power_bound_matches_closed_form() {
        // sup (t_k l)^b (1+dt l)^-k = b^b ((k-b)/k)^(k-b), dt-free
        for &k in &[1u32, 2, 5, 17, 64] {
            for &b in &[0.25, 0.5, 0.75, 1.0] {
                if (k as f64) <= b {
                    continue;
                }
                let kf = k as f64;
                let closed = b.powf(b) * ((kf - b) / kf).powf(kf - b);
                for &dt in &[1e-1, 1e-3] {
                    let numeric = resolvent_power_bound(dt, k, b);
                    assert!(
                        (numeric - closed).abs() < 1e-8 * closed,
                        "k = {k}, b = {b}, dt = {dt}: {numeric} vs {closed}"
                    );
                }
            }
        }
    }

    #[test]
    fn step_damping_bound_stays_below_dt_power() {
        for &dt in &[1e-1, 1e-2, 1e-3] {
            for &b in &[0.0, 0.25, 0.5, 0.75, 1.0] {
                let numeric = step_damping_bound(dt, b);
                let closed = if b == 0.0 || b == 1.0 {
                    dt.powf(b)
                } else {
                    dt.powf(b) * b.powf(b) * (1.0 - b).powf(1.0 - b)
                };
                assert!(
                    numeric <= closed * (1.0 + 1e-9) && numeric > 0.9 * closed,
                    "dt = {dt}, b = {b}: {numeric} vs {closed}"
                );
                assert!(numeric <= dt.powf(b) * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn fd_eigenvalues_match_tridiagonal_closed_form() {
        // lambda_j = (4/h^2) sin^2(j pi / (2(n+1))) for the FD matrix
        let (len, n) = (1.0, 200);
        let h = len / (n as f64 + 1.0);
        for &j in &[1usize, 2, 7, 64, 200] {
            let solver = fd_dirichlet_eigenvalue(len, n, j);
            let closed = 4.0 / (h * h) * (j as f64 * PI / (2.0 * (n as f64 + 1.0))).sin().powi(2);
            assert!(
                (solver - closed).abs() < 1e-9 * closed,
                "j = {j}: {solver} vs {closed}"
            );
        }
    }

    #[test]
    fn fd_eigenvector_residual_is_small() {
        // independent confirmation that the Sturm bisection really
        // returns eigenvalues of (1/h^2) tridiag(-1, 2, -1)
        let (len, n, j) = (2.0, 50, 3usize);
        let lam = fd_dirichlet_eigenvalue(len, n, j);
        let h = len / (n as f64 + 1.0);
        let v: Vec<f64> = (1..=n)
            .map(|i| (j as f64 * PI * i as f64 / (n as f64 + 1.0)).sin())
            .collect();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let left = if i > 0 { v[i - 1] } else { 0.0 };
            let right = if i + 1 < n { v[i + 1] } else { 0.0 };
            let av = (2.0 * v[i] - left - right) / (h * h);
            worst = worst.max((av - lam * v[i]).abs());
        }
        assert!(worst < 1e-8, "residual {worst}");
    }

    #[test]
    fn implicit_variance_recursion_has_closed_form_partial_sum() {
        // v_n = level^2 dt sum_{i=1..n} r^{2i} with r = 1/(1+dt lambda)
        let basis = crate::spectral::EigenBasis::new(0.0, 1.0, 3).unwrap();
        let (dt, n, level) = (0.125, 20usize, 0.7);
        let (_, vars) = implicit_moments(&basis, dt, n, level, &[0.0; 3]);
        for (j, &l) in basis.lambdas().iter().enumerate() {
            let r2 = 1.0 / (1.0 + dt * l).powi(2);
            let geo = r2 * (1.0 - r2.powi(n as i32)) / (1.0 - r2);
            let want = level * level * dt * geo;
            assert!(
                (vars[j] - want).abs() < 1e-13 * want,
                "mode {j}: {} vs {}",
                vars[j],
                want
            );
        }
    }

    #[test]
    fn implicit_moments_approach_ou_moments_as_dt_shrinks() {
        let basis = crate::spectral::EigenBasis::new(0.0, 1.0, 8).unwrap();
        let x0: Vec<f64> = (1..=8).map(|j| 1.0 / j as f64).collect();
        let t = 0.5;
        let (ou_mean, ou_var) = exact_ou_moments(&basis, t, 1.0, &x0);
        let mut prev_gap = f64::INFINITY;
        for &n in &[64usize, 256, 1024] {
            let (m, v) = implicit_moments(&basis, t / n as f64, n, 1.0, &x0);
            let gap: f64 = m
                .iter()
                .zip(&ou_mean)
                .chain(v.iter().zip(&ou_var))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(gap < prev_gap, "moment gap must shrink with dt");
            prev_gap = gap;
        }
        assert!(prev_gap < 2e-4, "gap at finest dt: {prev_gap}");
    }

    #[test]
    fn ou_variance_small_time_expansion() {
        // (1 - e^{-2 l t})/(2 l) ~ t for l t << 1
        let basis = crate::spectral::EigenBasis::new(0.0, 1.0, 1).unwrap();
        let t = 1e-8;
        let (_, vars) = exact_ou_moments(&basis, t, 1.0, &[0.0]);
        assert!((vars[0] - t).abs() < 1e-3 * t);
    }

    #[test]
    fn sq_norm_moments_compose_mode_moments() {
        let means = [1.0, -2.0, 0.5];
        let vars = [0.1, 0.2, 0.3];
        let want_mean = 1.0 + 0.1 + 4.0 + 0.2 + 0.25 + 0.3;
        assert!((expected_sq_norm(&means, &vars) - want_mean).abs() < 1e-14);
        let want_var = 2.0 * (0.01 + 0.04 + 0.09) + 4.0 * (1.0 * 0.1 + 4.0 * 0.2 + 0.25 * 0.3);
        assert!((var_sq_norm(&means, &vars) - want_var).abs() < 1e-14);
    }

    #[test]
    fn stationary_sum_is_the_recursion_fixed_point() {
        let basis = crate::spectral::EigenBasis::new(0.0, 1.0, 16).unwrap();
        let (dt, level) = (0.02, 1.3);
        // run the recursion long enough to equilibrate
        let (_, vars) = implicit_moments(&basis, dt, 5000, level, &[0.0; 16]);
        let total: f64 = vars.iter().sum();
        let stat = stationary_sq_norm(&basis, dt, level);
        assert!(
            (total - stat).abs() < 1e-10 * stat,
            "recursion {total} vs fixed point {stat}"
        );
    }

    #[test]
    fn sine_series_of_constant_integrates_correctly() {
        // coefficient times eigenfunction integral reproduces c L
        let basis = crate::spectral::EigenBasis::new(0.0, 2.5, 64).unwrap();
        let c = 1.7;
        // partial sums of sum_j coeff_j * int e_j = sum over odd j of
        // coeff_j * sqrt(2/L) L 2/(j pi) should approach c * L
        let mut total = 0.0;
        for j in 1..=63 {
            let coeff = sine_series_constant(&basis, c, j);
            let int_ej = if j % 2 == 1 {
                (2.0f64 / 2.5).sqrt() * 2.5 * 2.0 / (j as f64 * PI)
            } else {
                0.0
            };
            total += coeff * int_ej;
        }
        assert!(
            (total - c * 2.5).abs() < 0.02 * c * 2.5,
            "partial integral {total} vs {}",
            c * 2.5
        );
    }
}
