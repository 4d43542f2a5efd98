//! Counter-based random streams and the samplers built on them.
//!
//! A stream is keyed by a hash of `(master_seed, stream_id)`; the `k`-th
//! output is `mix64(key ^ mix64(k * GOLDEN + key_hi))`, so any stream can be
//! created independently of every other one and in any order. Outputs are
//! reproducible within this implementation; no cross-language bit identity
//! is promised.
//!
//! Poisson draws use Knuth's product method below [`POISSON_PTRS_SEAM`] and
//! Hörmann's transformed rejection with squeeze (PTRS) at or above it.

use crate::error::{GhostError, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_SALT: u64 = 0xD1B5_4A32_D192_ED03;
const STREAM_SALT: u64 = 0x8CB9_2BA7_2F3D_8DD7;

/// Rate at which Poisson sampling switches from Knuth to PTRS.
pub const POISSON_PTRS_SEAM: f64 = 30.0;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Single-owner deterministic random stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    key: u64,
    key_hi: u64,
    counter: u64,
}

impl RngStream {
    /// Stream for `(master_seed, stream_id)`. Independent of call order.
    pub fn substream(master_seed: u64, stream_id: u64) -> Self {
        let seed_hash = mix64(master_seed ^ SEED_SALT);
        let key = mix64(seed_hash ^ mix64(stream_id.wrapping_add(STREAM_SALT)));
        let key_hi = mix64(key ^ GOLDEN);
        RngStream {
            master_seed,
            stream_id,
            key,
            key_hi,
            counter: 0,
        }
    }

    /// Child stream of this one. The child depends only on the identity of
    /// the parent, never on how many values the parent has produced.
    pub fn derive(&self, label: u64) -> Self {
        let child_seed = mix64(self.key ^ mix64(label ^ STREAM_SALT));
        RngStream::substream(child_seed, label)
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 64-bit words drawn so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key ^ mix64(c.wrapping_mul(GOLDEN).wrapping_add(self.key_hi)))
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; safe to take the logarithm of.
    pub fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; the bias is below 2^-64 * n.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Standard normal draw (Box-Muller, cosine branch; one draw per pair of
    /// uniforms).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// `ln(k!)`: exact table for small `k`, Stirling series beyond.
pub fn ln_factorial(k: u64) -> f64 {
    const TABLE: [f64; 10] = [
        0.0,
        0.0,
        std::f64::consts::LN_2,
        1.791_759_469_228_055,
        3.178_053_830_347_945_6,
        4.787_491_742_782_046,
        6.579_251_212_010_101,
        8.525_161_361_065_415,
        10.604_602_902_745_25,
        12.801_827_480_081_469,
    ];
    if k < 10 {
        return TABLE[k as usize];
    }
    let x = k as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x
        + 0.5 * (std::f64::consts::TAU).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Draw from Poisson(`lambda`).
pub fn sample_poisson(rng: &mut RngStream, lambda: f64) -> Result<u64> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(GhostError::Domain(format!(
            "Poisson rate must be finite and non-negative, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    if lambda < POISSON_PTRS_SEAM {
        Ok(poisson_knuth(rng, lambda))
    } else {
        Ok(poisson_ptrs(rng, lambda))
    }
}

fn poisson_knuth(rng: &mut RngStream, lambda: f64) -> u64 {
    let limit = (-lambda).exp();
    let mut k = 0u64;
    let mut prod = rng.next_f64_open();
    while prod > limit {
        k += 1;
        prod *= rng.next_f64_open();
    }
    k
}

fn poisson_ptrs(rng: &mut RngStream, lambda: f64) -> u64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.024_83 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.next_f64() - 0.5;
        let v = rng.next_f64_open();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Draw from N(`mean`, `sigma`²).
pub fn sample_gaussian(rng: &mut RngStream, mean: f64, sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(GhostError::Domain(format!(
            "standard deviation must be finite and non-negative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(mean);
    }
    Ok(mean + sigma * rng.standard_normal())
}

/// Draw from Binomial(`n`, `p`).
///
/// Inversion of the CDF, applied to chunks small enough that each chunk mean
/// stays below 30; the chunk results are summed, which is exact because
/// binomials with a shared `p` add. `p == 0` consumes no randomness.
pub fn sample_binomial(rng: &mut RngStream, n: u64, p: f64) -> Result<u64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GhostError::Domain(format!(
            "binomial probability must lie in [0, 1], got {p}"
        )));
    }
    if n == 0 || p == 0.0 {
        return Ok(0);
    }
    if p == 1.0 {
        return Ok(n);
    }
    let chunk = ((30.0 / p).floor() as u64).clamp(1, n);
    let mut remaining = n;
    let mut total = 0u64;
    while remaining > 0 {
        let m = remaining.min(chunk);
        total += binomial_inversion(rng, m, p);
        remaining -= m;
    }
    Ok(total)
}

fn binomial_inversion(rng: &mut RngStream, n: u64, p: f64) -> u64 {
    let q = 1.0 - p;
    let ratio = p / q;
    let mut pmf = q.powf(n as f64);
    let mut cdf = pmf;
    let u = rng.next_f64();
    let mut k = 0u64;
    while u >= cdf && k < n {
        pmf *= (n - k) as f64 / (k + 1) as f64 * ratio;
        k += 1;
        cdf += pmf;
        if pmf == 0.0 && cdf < u {
            // Floating-point tail exhausted; the remaining mass is below 1e-300.
            break;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(seed: u64, id: u64, n: usize) -> Vec<u64> {
        let mut r = RngStream::substream(seed, id);
        (0..n).map(|_| r.next_u64()).collect()
    }

    #[test]
    fn substream_is_deterministic() {
        assert_eq!(draws(7, 0, 100), draws(7, 0, 100));
    }

    #[test]
    fn distinct_stream_ids_differ() {
        let a = draws(7, 0, 100);
        let b = draws(7, 1, 100);
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    }

    #[test]
    fn distinct_master_seeds_differ() {
        let a = draws(7, 0, 100);
        let b = draws(8, 0, 100);
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    }

    #[test]
    fn streams_are_not_shifted_copies() {
        let a = draws(1, 0, 64);
        let b = draws(1, 1, 64);
        for shift in 0..32 {
            assert!(a[shift..].iter().zip(&b).any(|(x, y)| x != y));
        }
    }

    #[test]
    fn ln_factorial_matches_direct_sum() {
        for k in 0..200u64 {
            let direct: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
            assert!((ln_factorial(k) - direct).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn poisson_zero_rate() {
        let mut r = RngStream::substream(3, 3);
        for _ in 0..1000 {
            assert_eq!(sample_poisson(&mut r, 0.0).unwrap(), 0);
        }
    }

    #[test]
    fn poisson_rejects_bad_rate() {
        let mut r = RngStream::substream(3, 3);
        assert!(sample_poisson(&mut r, -1.0).is_err());
        assert!(sample_poisson(&mut r, f64::NAN).is_err());
        assert!(sample_poisson(&mut r, f64::INFINITY).is_err());
    }

    #[test]
    fn poisson_rate_95_mean_and_variance() {
        // CLT: sd of the mean is sqrt(95 / 1e5) = 0.0308; 3 sd = 0.0925.
        let mut r = RngStream::substream(11, 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_poisson(&mut r, 95.0).unwrap() as f64)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((mean - 95.0).abs() < 0.0925, "mean {mean}");
        assert!((90.0..=100.0).contains(&var), "var {var}");
    }

    #[test]
    fn gaussian_degenerate_and_domain() {
        let mut r = RngStream::substream(5, 1);
        assert_eq!(sample_gaussian(&mut r, 2.5, 0.0).unwrap(), 2.5);
        assert!(sample_gaussian(&mut r, 0.0, -1.0).is_err());
    }

    #[test]
    fn gaussian_mean_within_clt_bound() {
        let mut r = RngStream::substream(5, 2);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_gaussian(&mut r, 0.0, 1.0).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn gaussian_stream_replays() {
        let mut a = RngStream::substream(9, 4);
        let mut b = RngStream::substream(9, 4);
        for _ in 0..50 {
            assert_eq!(
                sample_gaussian(&mut a, 1.0, 2.0).unwrap().to_bits(),
                sample_gaussian(&mut b, 1.0, 2.0).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn binomial_moments() {
        let mut r = RngStream::substream(2, 2);
        for &(n, p) in &[(150u64, 0.05), (2000, 0.3), (40, 0.5)] {
            let reps = 20_000;
            let xs: Vec<f64> = (0..reps)
                .map(|_| sample_binomial(&mut r, n, p).unwrap() as f64)
                .collect();
            let mean = xs.iter().sum::<f64>() / reps as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / reps as f64;
            let mu = n as f64 * p;
            let sigma2 = mu * (1.0 - p);
            assert!((mean - mu).abs() < 5.0 * (sigma2 / reps as f64).sqrt(), "n={n} p={p} mean={mean}");
            assert!((var / sigma2 - 1.0).abs() < 0.1, "n={n} p={p} var={var}");
        }
    }

    #[test]
    fn binomial_zero_probability_consumes_nothing() {
        let mut r = RngStream::substream(2, 3);
        assert_eq!(sample_binomial(&mut r, 1000, 0.0).unwrap(), 0);
        assert_eq!(r.position(), 0);
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut r = RngStream::substream(1, 1);
        let mut v: Vec<usize> = (0..50).collect();
        r.shuffle(&mut v);
        let mut s = v.clone();
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
        assert_ne!(v, (0..50).collect::<Vec<_>>());
    }
}
