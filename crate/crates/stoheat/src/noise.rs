//! Counter-based space-time white noise.
//!
//! The noise driving a path is the matrix `dW[j][k]`, the increment of
//! the j-th mode's Brownian motion over step `k`, each `N(0, dt)` and
//! all independent. Entries come from a keyed counter PRF (Philox 4x64,
//! 10 rounds) evaluated at `(experiment seed, path index, stream tag,
//! mode, step block)` and fed through Box-Muller, so
//!
//! * entry `(j, k)` is a pure function of the seed coordinates: growing
//!   `m` or `N` extends the matrix without touching existing entries,
//!   and scheduling order cannot change a path;
//! * auxiliary draws (bridge interpolation, exact linear sampling) use
//!   distinct stream tags and never collide with the increments.
//!
//! Coarsening sums blocks of consecutive increments per mode over a
//! fixed halving tree, so chains of power-of-two factors compose
//! bit-exactly: `coarsen(2)` then `coarsen(2)` is `coarsen(4)`.

use crate::error::StoheatError;
use std::io::{Read, Write};

/// Philox 4x64 multipliers and Weyl key increments (standard constants).
const M0: u64 = 0xD2E7_470E_E14C_6C93;
const M1: u64 = 0xCA5A_8263_9512_1157;
const W0: u64 = 0x9E37_79B9_7F4A_7C15;
const W1: u64 = 0xBB67_AE85_84CA_A73B;
const ROUNDS: usize = 10;

/// Stream tags keep independent uses of the generator disjoint.
const TAG_INCREMENT: u64 = 0;
const TAG_BRIDGE: u64 = 1;
const TAG_OU_EXACT: u64 = 2;

#[inline]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = (a as u128) * (b as u128);
    ((p >> 64) as u64, p as u64)
}

/// One keyed bijection of the counter; 10 rounds of the Feistel-like
/// Philox network with the per-round Weyl key schedule.
#[inline]
fn philox4x64(mut ctr: [u64; 4], mut key: [u64; 2]) -> [u64; 4] {
    for round in 0..ROUNDS {
        if round > 0 {
            key[0] = key[0].wrapping_add(W0);
            key[1] = key[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, ctr[0]);
        let (hi1, lo1) = mulhilo(M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

#[inline]
fn to_open_unit(x: u64) -> f64 {
    // (0, 1]: never 0, so the Box-Muller logarithm is finite.
    ((x >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

#[inline]
fn to_half_open_unit(x: u64) -> f64 {
    // [0, 1) for the angle.
    (x >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Four independent standard normals from one counter block.
#[inline]
fn normals4(ctr: [u64; 4], key: [u64; 2]) -> [f64; 4] {
    let w = philox4x64(ctr, key);
    let r0 = (-2.0 * to_open_unit(w[0]).ln()).sqrt();
    let (s0, c0) = (std::f64::consts::TAU * to_half_open_unit(w[1])).sin_cos();
    let r1 = (-2.0 * to_open_unit(w[2]).ln()).sqrt();
    let (s1, c1) = (std::f64::consts::TAU * to_half_open_unit(w[3])).sin_cos();
    [r0 * c0, r0 * s0, r1 * c1, r1 * s1]
}

/// Identifies one sample path of one experiment.
///
/// The experiment seed separates whole studies; the path index
/// enumerates Monte Carlo samples within one. Two distinct specs give
/// statistically independent noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub experiment_seed: u64,
    pub path_index: u64,
}

impl SeedSpec {
    pub fn new(experiment_seed: u64, path_index: u64) -> Self {
        Self {
            experiment_seed,
            path_index,
        }
    }

    #[inline]
    fn key(&self) -> [u64; 2] {
        [self.experiment_seed, self.path_index]
    }

    /// Standard normal attached to `(tag, mode j, draw k)`; the bulk
    /// fill below must stay consistent with this addressing.
    #[inline]
    pub(crate) fn standard_normal(&self, tag: u64, j: usize, k: usize) -> f64 {
        let block = (k / 4) as u64;
        let lane = k % 4;
        normals4([block, j as u64, tag, 0], self.key())[lane]
    }

    #[inline]
    pub(crate) fn ou_normal(&self, j: usize) -> f64 {
        self.standard_normal(TAG_OU_EXACT, j, 0)
    }
}

/// Dense matrix of Brownian increments for one path: `m` modes by `n`
/// steps of length `dt`, entry `(j, k) ~ N(0, dt)`.
///
/// Stored step-major (all modes of step `k` contiguous) because the
/// integrator consumes one step at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    m: usize,
    n: usize,
    dt: f64,
    data: Vec<f64>,
}

impl NoisePath {
    /// Draws the full increment matrix for `seed`.
    pub fn sample(seed: &SeedSpec, m: usize, n: usize, dt: f64) -> Self {
        assert!(m >= 1 && n >= 1, "noise matrix must be nonempty");
        assert!(dt > 0.0 && dt.is_finite(), "dt must be positive");
        let scale = dt.sqrt();
        let key = seed.key();
        let mut data = vec![0.0; m * n];
        let blocks = n.div_ceil(4);
        for b in 0..blocks {
            let lanes = (n - 4 * b).min(4);
            for j in 0..m {
                let z = normals4([b as u64, j as u64, TAG_INCREMENT, 0], key);
                for (lane, zv) in z.iter().enumerate().take(lanes) {
                    data[(4 * b + lane) * m + j] = scale * zv;
                }
            }
        }
        Self { m, n, dt, data }
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn steps(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// All mode increments of step `k` as a slice of length `m`.
    #[inline]
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.data[k * self.m..(k + 1) * self.m]
    }

    #[inline]
    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.data[k * self.m + j]
    }

    /// Sums `factor` consecutive increments per mode, producing the
    /// noise of the same path on a grid coarsened by `factor`.
    ///
    /// Block sums follow a fixed halving tree, so coarsening by 2 twice
    /// is bitwise the same as coarsening by 4 once.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath, StoheatError> {
        if factor == 0 || self.n % factor != 0 {
            return Err(StoheatError::BadCoarsenFactor {
                factor,
                n: self.n,
            });
        }
        let n_coarse = self.n / factor;
        let mut data = vec![0.0; self.m * n_coarse];
        for kc in 0..n_coarse {
            for j in 0..self.m {
                data[kc * self.m + j] = self.bisect_cols(j, kc * factor, (kc + 1) * factor);
            }
        }
        Ok(NoisePath {
            m: self.m,
            n: n_coarse,
            dt: self.dt * factor as f64,
            data,
        })
    }

    /// Sum of `dW[j][k0..k1]` over the halving tree: a block's sum is
    /// always (sum of left half) + (sum of right half), down to single
    /// entries. Splitting at the midpoint is what makes power-of-two
    /// factor chains compose exactly.
    fn bisect_cols(&self, j: usize, k0: usize, k1: usize) -> f64 {
        debug_assert!(k1 > k0);
        if k1 - k0 == 1 {
            return self.data[k0 * self.m + j];
        }
        let mid = k0 + (k1 - k0) / 2;
        self.bisect_cols(j, k0, mid) + self.bisect_cols(j, mid, k1)
    }

    /// Brownian value `W(t_k + theta dt) - W(t_k)` per mode, conditioned
    /// on the stored increment of step `k`: mean `theta dW`, variance
    /// `theta (1 - theta) dt`, using the bridge stream so the extra
    /// randomness never collides with the increments themselves.
    ///
    /// At `theta = 0` this is exactly zero, at `theta = 1` exactly `dW`.
    pub fn bridge_sample(&self, seed: &SeedSpec, k: usize, theta: f64) -> Vec<f64> {
        assert!((0.0..=1.0).contains(&theta), "theta must lie in [0, 1]");
        assert!(k < self.n, "step index out of range");
        let sd = (theta * (1.0 - theta) * self.dt).sqrt();
        let dw = self.increment(k);
        (0..self.m)
            .map(|j| theta * dw[j] + sd * seed.standard_normal(TAG_BRIDGE, j, k))
            .collect()
    }

    /// Writes `m`, `n`, `dt` (little-endian 64-bit each) followed by the
    /// increments in mode-major order (`m` rows of `n` doubles).
    pub fn write_dump<W: Write>(&self, w: &mut W) -> Result<(), StoheatError> {
        w.write_all(&(self.m as u64).to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        for j in 0..self.m {
            for k in 0..self.n {
                w.write_all(&self.data[k * self.m + j].to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a dump produced by [`write_dump`]; the roundtrip is
    /// bit-exact.
    pub fn read_dump<R: Read>(r: &mut R) -> Result<NoisePath, StoheatError> {
        let mut u = [0u8; 8];
        r.read_exact(&mut u)?;
        let m = u64::from_le_bytes(u) as usize;
        r.read_exact(&mut u)?;
        let n = u64::from_le_bytes(u) as usize;
        r.read_exact(&mut u)?;
        let dt = f64::from_le_bytes(u);
        if m == 0 || n == 0 {
            return Err(StoheatError::BadDump(format!("degenerate shape {m} x {n}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(StoheatError::BadDump(format!("bad dt {dt}")));
        }
        let count = m
            .checked_mul(n)
            .ok_or_else(|| StoheatError::BadDump("shape overflows".into()))?;
        let mut data = vec![0.0; count];
        for j in 0..m {
            for k in 0..n {
                r.read_exact(&mut u)?;
                data[k * m + j] = f64::from_le_bytes(u);
            }
        }
        // A well-formed dump ends exactly after the matrix.
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(StoheatError::BadDump("trailing bytes after matrix".into()));
        }
        Ok(NoisePath { m, n, dt, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(s: u64, p: u64) -> SeedSpec {
        SeedSpec::new(s, p)
    }

    #[test]
    fn philox_matches_published_test_vectors() {
        // Known-answer vectors for philox4x64-10 from the reference
        // distribution's kat_vectors file; pins this implementation to
        // the published function, not merely to itself.
        assert_eq!(
            philox4x64([0; 4], [0; 2]),
            [
                0x16554d9eca36314c,
                0xdb20fe9d672d0fdc,
                0xd7e772cee186176b,
                0x7e68b68aec7ba23b
            ]
        );
        assert_eq!(
            philox4x64([u64::MAX; 4], [u64::MAX; 2]),
            [
                0x87b092c3013fe90b,
                0x438c3c67be8d0224,
                0x9cc7d7c69cd777b6,
                0xa09caebf594f0ba0
            ]
        );
        assert_eq!(
            philox4x64(
                [
                    0x243f6a8885a308d3,
                    0x13198a2e03707344,
                    0xa4093822299f31d0,
                    0x082efa98ec4e6c89
                ],
                [0x452821e638d01377, 0xbe5466cf34e90c6c],
            ),
            [
                0xa528f45403e61d95,
                0x38c72dbd566e9788,
                0xa5a1610e72fd18b5,
                0x57bd43b5e52b7fe6
            ]
        );
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = NoisePath::sample(&seed(42, 7), 16, 33, 0.25);
        let b = NoisePath::sample(&seed(42, 7), 16, 33, 0.25);
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_paths_and_seeds_differ() {
        let a = NoisePath::sample(&seed(42, 0), 8, 8, 0.5);
        let b = NoisePath::sample(&seed(42, 1), 8, 8, 0.5);
        let c = NoisePath::sample(&seed(43, 0), 8, 8, 0.5);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn refining_the_grid_extends_without_rewriting() {
        let small = NoisePath::sample(&seed(9, 3), 4, 8, 0.125);
        let large = NoisePath::sample(&seed(9, 3), 8, 16, 0.125);
        for j in 0..4 {
            for k in 0..8 {
                assert_eq!(
                    small.entry(j, k).to_bits(),
                    large.entry(j, k).to_bits(),
                    "entry ({j},{k}) changed when the matrix grew"
                );
            }
        }
    }

    #[test]
    fn dt_only_rescales_by_sqrt() {
        // sqrt(4 dt) = 2 sqrt(dt) and scaling by 2 is exact in binary.
        let a = NoisePath::sample(&seed(5, 5), 6, 12, 0.25);
        let b = NoisePath::sample(&seed(5, 5), 6, 12, 1.0);
        for j in 0..6 {
            for k in 0..12 {
                assert_eq!((2.0 * a.entry(j, k)).to_bits(), b.entry(j, k).to_bits());
            }
        }
    }

    #[test]
    fn increments_pass_mean_and_variance_z_tests() {
        let dt = 0.3;
        let p = NoisePath::sample(&seed(2024, 0), 64, 512, dt);
        let n = (64 * 512) as f64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for k in 0..512 {
            for &v in p.increment(k) {
                sum += v;
                sumsq += v * v;
            }
        }
        let mean = sum / n;
        let var = sumsq / n - mean * mean;
        // mean ~ N(0, dt/n); var estimate has sd ~ dt sqrt(2/n)
        assert!(
            mean.abs() < 5.0 * (dt / n).sqrt(),
            "increment mean {mean} too far from 0"
        );
        assert!(
            (var - dt).abs() < 5.0 * dt * (2.0 / n).sqrt(),
            "increment variance {var} too far from {dt}"
        );
    }

    #[test]
    fn increments_show_no_serial_or_cross_mode_correlation() {
        let p = NoisePath::sample(&seed(77, 0), 32, 2048, 1.0);
        // lag-1 in time for a fixed mode
        let mut lag = 0.0;
        for k in 0..2047 {
            lag += p.entry(5, k) * p.entry(5, k + 1);
        }
        lag /= 2047.0;
        assert!(lag.abs() < 5.0 / (2047.0f64).sqrt(), "lag-1 corr {lag}");
        // cross-mode at equal times
        let mut cross = 0.0;
        for k in 0..2048 {
            cross += p.entry(3, k) * p.entry(17, k);
        }
        cross /= 2048.0;
        assert!(cross.abs() < 5.0 / (2048.0f64).sqrt(), "cross corr {cross}");
    }

    #[test]
    fn coarsen_sums_blocks_and_rescales_dt() {
        let p = NoisePath::sample(&seed(1, 1), 3, 8, 0.125);
        let c = p.coarsen(4).unwrap();
        assert_eq!(c.steps(), 2);
        assert_eq!(c.dt(), 0.5);
        for j in 0..3 {
            let expect = (p.entry(j, 0) + p.entry(j, 1)) + (p.entry(j, 2) + p.entry(j, 3));
            assert_eq!(c.entry(j, 0).to_bits(), expect.to_bits());
        }
    }

    #[test]
    fn power_of_two_coarsening_chains_compose_bitwise() {
        let p = NoisePath::sample(&seed(11, 4), 5, 64, 0.01);
        let twice = p.coarsen(2).unwrap().coarsen(2).unwrap();
        let once = p.coarsen(4).unwrap();
        assert_eq!(twice, once);
        let thrice = p.coarsen(2).unwrap().coarsen(2).unwrap().coarsen(2).unwrap();
        let eight = p.coarsen(8).unwrap();
        assert_eq!(thrice, eight);
        let mixed = p.coarsen(4).unwrap().coarsen(2).unwrap();
        assert_eq!(mixed, eight);
    }

    #[test]
    fn coarsen_rejects_non_divisors() {
        let p = NoisePath::sample(&seed(0, 0), 2, 10, 0.1);
        assert!(matches!(
            p.coarsen(3),
            Err(StoheatError::BadCoarsenFactor { factor: 3, n: 10 })
        ));
        assert!(p.coarsen(0).is_err());
    }

    #[test]
    fn bridge_endpoints_are_exact() {
        let s = seed(123, 9);
        let p = NoisePath::sample(&s, 8, 4, 0.25);
        let at_zero = p.bridge_sample(&s, 2, 0.0);
        let at_one = p.bridge_sample(&s, 2, 1.0);
        for j in 0..8 {
            assert_eq!(at_zero[j], 0.0);
            assert_eq!(at_one[j].to_bits(), p.entry(j, 2).to_bits());
        }
    }

    #[test]
    fn bridge_residual_has_conditional_mean_and_variance() {
        // B - theta dW should be N(0, theta(1-theta)dt), uncorrelated
        // with dW, across independent paths.
        let theta = 0.3;
        let dt = 0.5;
        let paths = 20_000;
        let (mut sum, mut sumsq, mut cross) = (0.0, 0.0, 0.0);
        for idx in 0..paths {
            let s = seed(321, idx);
            let p = NoisePath::sample(&s, 1, 1, dt);
            let b = p.bridge_sample(&s, 0, theta);
            let r = b[0] - theta * p.entry(0, 0);
            sum += r;
            sumsq += r * r;
            cross += r * p.entry(0, 0);
        }
        let n = paths as f64;
        let mean = sum / n;
        let var = sumsq / n - mean * mean;
        let want = theta * (1.0 - theta) * dt;
        assert!(mean.abs() < 5.0 * (want / n).sqrt(), "residual mean {mean}");
        assert!(
            (var - want).abs() < 5.0 * want * (2.0 / n).sqrt(),
            "residual variance {var}, want {want}"
        );
        assert!(
            (cross / n).abs() < 5.0 * (want * dt / n).sqrt(),
            "residual correlates with increment: {}",
            cross / n
        );
    }

    #[test]
    fn auxiliary_streams_do_not_reuse_increment_draws() {
        let s = seed(6, 6);
        let inc = s.standard_normal(TAG_INCREMENT, 2, 5);
        let bridge = s.standard_normal(TAG_BRIDGE, 2, 5);
        let ou = s.standard_normal(TAG_OU_EXACT, 2, 5);
        assert_ne!(inc, bridge);
        assert_ne!(inc, ou);
        assert_ne!(bridge, ou);
    }

    #[test]
    fn dump_roundtrip_is_bit_exact() {
        let p = NoisePath::sample(&seed(99, 2), 7, 13, 0.0625);
        let mut buf = Vec::new();
        p.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 7 * 13 * 8);
        // header fields are little-endian 64-bit
        assert_eq!(u64::from_le_bytes(buf[0..8].try_into().unwrap()), 7);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 13);
        assert_eq!(
            f64::from_le_bytes(buf[16..24].try_into().unwrap()),
            0.0625
        );
        // first body row is mode 0 across steps
        let first = f64::from_le_bytes(buf[24..32].try_into().unwrap());
        assert_eq!(first.to_bits(), p.entry(0, 0).to_bits());
        let second = f64::from_le_bytes(buf[32..40].try_into().unwrap());
        assert_eq!(second.to_bits(), p.entry(0, 1).to_bits());

        let back = NoisePath::read_dump(&mut buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn truncated_or_padded_dumps_are_rejected() {
        let p = NoisePath::sample(&seed(1, 0), 2, 3, 0.5);
        let mut buf = Vec::new();
        p.write_dump(&mut buf).unwrap();
        let short = &buf[..buf.len() - 4];
        assert!(NoisePath::read_dump(&mut &short[..]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(NoisePath::read_dump(&mut &long[..]).is_err());
    }
}
