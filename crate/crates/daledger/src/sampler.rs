//! Sampling clients and the probability mathematics behind them.
//!
//! Three closed forms matter here. `detection_probability` is the chance
//! that one client's `s` distinct samples hit at least one withheld cell.
//! `euler_coverage` is the coupon-collector-with-group-drawings formula: the
//! probability that `c` independent drawings of `s` distinct cells each
//! leave at most `lambda` of `n` cells unseen,
//!
//! ```text
//! p(Z ≥ n−λ) = 1 − Σ_{i≥1} (−1)^i C(λ+i−1, λ) C(n, λ+i) W_i^c,
//! W_i = C(n−λ−i, s) / C(n, s).
//! ```
//!
//! `required_samples_for_stake` inverts that sum for a node that knows only
//! its own stake fraction `m` and the network's honest-stake floor `h`: it
//! behaves as if the network were `h/m` copies of itself, so the drawing
//! count is `c = h/m` and no knowledge of the real stake distribution is
//! needed.
//!
//! The alternating sum is numerically hostile. For integer drawing counts it
//! is evaluated in exact big-rational arithmetic; otherwise in compensated
//! floating point over log-space terms, which is dependable for the modest
//! `n` where fractional `c` arises in practice.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplerError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("no sample count up to n reaches the target probability")]
    Infeasible,
    #[error("series evaluation overflowed; inputs too large for the float path")]
    NumericalOverflow,
}

/// Parameters for the stake-proportional sampling rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingParams {
    /// Total extended shares in a block.
    pub n: u64,
    /// Most shares that may go unseen while the block stays recoverable.
    pub lambda: u64,
    /// Minimum honest stake fraction in the network.
    pub h: f64,
    /// This node's own stake fraction.
    pub m: f64,
    /// Target probability that the honest network has seen enough.
    pub p: f64,
}

/// Most shares of a `2k × 2k` square that may remain unseen while the square
/// is still certainly recoverable: one fewer than the `(k+1)²` minimum a
/// withholding adversary needs.
pub fn max_tolerable_missing(k: u64) -> u64 {
    (k + 1) * (k + 1) - 1
}

/// Draws `s` distinct cell positions out of `n`, uniformly, deterministically
/// in the seed. Distinct within one drawing; drawings with different seeds
/// are independent.
pub fn draw_samples(n: usize, s: usize, seed: u64) -> Vec<usize> {
    assert!(s <= n, "cannot draw {s} distinct samples from {n}");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut v = rand::seq::index::sample(&mut rng, n, s).into_vec();
    v.sort_unstable();
    v
}

/// Probability that `s` distinct uniform samples from `n` cells include at
/// least one of `withheld` marked cells:
/// `1 − Π_{i=0}^{s−1} (n − withheld − i) / (n − i)`.
pub fn detection_probability(n: u64, withheld: u64, s: u64) -> Result<f64, SamplerError> {
    if withheld > n {
        return Err(SamplerError::Domain("withheld exceeds n"));
    }
    if s > n {
        return Err(SamplerError::Domain("s exceeds n"));
    }
    if s > n - withheld {
        // more distinct samples than available cells: a hit is forced
        return Ok(1.0);
    }
    let mut miss = 1.0f64;
    for i in 0..s {
        miss *= (n - withheld - i) as f64 / (n - i) as f64;
    }
    Ok(1.0 - miss)
}

fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k {
        num *= BigInt::from(n - i);
        den *= BigInt::from(i + 1);
    }
    num / den
}

/// ln C(n, k) via a shared ln-factorial table.
fn ln_choose(table: &[f64], n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    table[n as usize] - table[k as usize] - table[(n - k) as usize]
}

fn euler_coverage_exact(n: u64, lambda: u64, s: u64, c: u64) -> f64 {
    let cns = binomial(n, s);
    let mut sum = BigRational::zero();
    for i in 1..=(n - lambda) {
        let shell = binomial(lambda + i - 1, lambda) * binomial(n, lambda + i);
        if shell.is_zero() {
            break;
        }
        let w = BigRational::new(binomial(n - lambda - i, s), cns.clone());
        if w.is_zero() {
            // all later terms carry an even smaller W and vanish too
            break;
        }
        let mut term = BigRational::from(shell);
        let mut w_pow = BigRational::one();
        for _ in 0..c {
            w_pow *= &w;
        }
        term *= w_pow;
        if i % 2 == 1 {
            sum -= term;
        } else {
            sum += term;
        }
    }
    let p = BigRational::one() + sum;
    p.to_f64().unwrap_or(if p.is_negative() { 0.0 } else { 1.0 }).clamp(0.0, 1.0)
}

fn euler_coverage_float(n: u64, lambda: u64, s: u64, c: f64) -> Result<f64, SamplerError> {
    let mut lnfact = vec![0.0f64; n as usize + 1];
    for i in 1..=n as usize {
        lnfact[i] = lnfact[i - 1] + (i as f64).ln();
    }
    let ln_cns = ln_choose(&lnfact, n, s);
    // Kahan-compensated alternating sum
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for i in 1..=(n - lambda) {
        if lambda + i > n || n - lambda - i < s {
            break;
        }
        let ln_w = ln_choose(&lnfact, n - lambda - i, s) - ln_cns;
        let ln_term =
            ln_choose(&lnfact, lambda + i - 1, lambda) + ln_choose(&lnfact, n, lambda + i) + c * ln_w;
        if ln_term > 700.0 {
            return Err(SamplerError::NumericalOverflow);
        }
        let term = ln_term.exp() * if i % 2 == 1 { -1.0 } else { 1.0 };
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    Ok((1.0 + sum).clamp(0.0, 1.0))
}

/// Probability that after `c` drawings of `s` distinct cells each, at most
/// `lambda` of the `n` cells remain unseen. `c` may be fractional (the
/// stake rule produces `c = h/m`); integer `c` is evaluated exactly.
pub fn euler_coverage(n: u64, lambda: u64, s: u64, c: f64) -> Result<f64, SamplerError> {
    if n == 0 {
        return Err(SamplerError::Domain("n must be positive"));
    }
    if lambda >= n {
        return Err(SamplerError::Domain("lambda must be below n"));
    }
    if s > n {
        return Err(SamplerError::Domain("s exceeds n"));
    }
    if !c.is_finite() || c < 0.0 {
        return Err(SamplerError::Domain("drawing count must be a finite non-negative number"));
    }
    if c == 0.0 {
        // zero drawings see zero cells, and lambda < n means that is not enough
        return Ok(0.0);
    }
    if c.fract() == 0.0 && c <= 512.0 && n <= 4096 {
        Ok(euler_coverage_exact(n, lambda, s, c as u64))
    } else {
        euler_coverage_float(n, lambda, s, c)
    }
}

/// Smallest integer `s` such that `h/m` drawings of `s` distinct samples
/// reach coverage probability `p`. Monotone bisection over `s`; the node
/// needs only its own stake.
pub fn required_samples_for_stake(params: &SamplingParams) -> Result<u64, SamplerError> {
    let SamplingParams { n, lambda, h, m, p } = *params;
    if !(0.0..1.0).contains(&p) {
        return Err(SamplerError::Domain("target probability must lie in [0, 1)"));
    }
    if m <= 0.0 || h <= 0.0 || m > h || h > 1.0 {
        return Err(SamplerError::Domain("stake fractions must satisfy 0 < m <= h <= 1"));
    }
    if lambda >= n {
        return Err(SamplerError::Domain("lambda must be below n"));
    }
    let c = h / m;
    let reaches = |s: u64| -> Result<bool, SamplerError> { Ok(euler_coverage(n, lambda, s, c)? >= p) };
    if !reaches(n)? {
        return Err(SamplerError::Infeasible);
    }
    if reaches(0)? {
        return Ok(0);
    }
    let (mut lo, mut hi) = (0u64, n); // lo never reaches, hi always does
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if reaches(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn draw_is_deterministic_distinct_and_in_range() {
        let a = draw_samples(64, 15, 42);
        let b = draw_samples(64, 15, 42);
        assert_eq!(a, b);
        assert_eq!(a.len(), 15);
        let mut dedup = a.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 15);
        assert!(a.iter().all(|&x| x < 64));
        assert_ne!(a, draw_samples(64, 15, 43));
        // s = n takes everything
        assert_eq!(draw_samples(4, 4, 7), vec![0, 1, 2, 3]);
    }

    #[test]
    fn draw_is_uniform_by_chi_squared() {
        // 10^5 single draws over 64 cells; reject only below p = 0.001
        let mut counts = [0u64; 64];
        for seed in 0..100_000u64 {
            counts[draw_samples(64, 1, seed)[0]] += 1;
        }
        let expected = 100_000.0 / 64.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        let dist = statrs::distribution::ChiSquared::new(63.0).unwrap();
        let p_value = 1.0 - statrs::distribution::ContinuousCDF::cdf(&dist, stat);
        assert!(p_value > 0.001, "chi-squared stat {stat}, p {p_value}");
    }

    #[test]
    fn detection_probability_edges() {
        assert_eq!(detection_probability(100, 0, 10).unwrap(), 0.0);
        assert_eq!(detection_probability(100, 100, 1).unwrap(), 1.0);
        // more samples than available cells forces a hit
        assert_eq!(detection_probability(10, 5, 6).unwrap(), 1.0);
        assert!(detection_probability(10, 11, 1).is_err());
        assert!(detection_probability(10, 0, 11).is_err());
    }

    #[test]
    fn fifteen_samples_give_the_99_percent_guarantee() {
        // 4096-cell extended square, k = 32, minimal defeating withholding
        let p = detection_probability(4096, 33 * 33, 15).unwrap();
        assert!(p >= 0.99, "got {p}");
        assert!(p < 0.995); // and not trivially higher
    }

    #[test]
    fn detection_probability_is_monotone() {
        for n in [32u64, 100] {
            let s = 5u64;
            let mut prev = 0.0;
            for w in 0..=n - s {
                let p = detection_probability(n, w, s).unwrap();
                assert!(p >= prev - 1e-12);
                prev = p;
            }
            // past n - s a miss is impossible
            assert_eq!(detection_probability(n, n - s + 1, s).unwrap(), 1.0);
            let mut prev = 0.0;
            for s in 0..=n / 2 {
                let p = detection_probability(n, n / 3, s).unwrap();
                assert!(p >= prev - 1e-12);
                prev = p;
            }
        }
    }

    #[test]
    fn euler_coverage_edges() {
        // a single drawing of everything collects everything
        assert_eq!(euler_coverage(16, 0, 16, 1.0).unwrap(), 1.0);
        // zero drawings collect nothing
        assert_eq!(euler_coverage(16, 3, 4, 0.0).unwrap(), 0.0);
        assert!(euler_coverage(16, 16, 4, 1.0).is_err());
        assert!(euler_coverage(16, 3, 17, 1.0).is_err());
    }

    /// Simulates the drawing process directly.
    fn monte_carlo_coverage(n: u64, lambda: u64, s: u64, c: u64, trials: u32, seed: u64) -> f64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut hits = 0u32;
        for _ in 0..trials {
            let mut seen = vec![false; n as usize];
            for _ in 0..c {
                for idx in rand::seq::index::sample(&mut rng, n as usize, s as usize) {
                    seen[idx] = true;
                }
            }
            let distinct = seen.iter().filter(|&&b| b).count() as u64;
            if distinct >= n - lambda {
                hits += 1;
            }
        }
        hits as f64 / trials as f64
    }

    #[test]
    fn euler_formula_matches_simulation() {
        let cases = [(16u64, 3u64, 4u64, 5u64), (16, 5, 8, 2), (24, 6, 6, 4), (12, 2, 5, 3)];
        for (n, lambda, s, c) in cases {
            let exact = euler_coverage(n, lambda, s, c as f64).unwrap();
            let mc = monte_carlo_coverage(n, lambda, s, c, 200_000, 0xC0FFEE ^ n);
            assert!(
                (exact - mc).abs() < 0.005,
                "n={n} λ={lambda} s={s} c={c}: exact {exact} vs mc {mc}"
            );
        }
    }

    #[test]
    fn exact_and_float_paths_agree() {
        for (n, lambda, s, c) in [(32u64, 8u64, 6u64, 3.0f64), (64, 15, 10, 2.0), (24, 4, 4, 5.0)] {
            let exact = euler_coverage_exact(n, lambda, s, c as u64);
            let float = euler_coverage_float(n, lambda, s, c).unwrap();
            assert!((exact - float).abs() < 1e-9, "n={n}: {exact} vs {float}");
        }
    }

    #[test]
    fn coverage_is_monotone_in_s_c_and_lambda() {
        let n = 32u64;
        for c in [1.0f64, 2.0, 4.0] {
            let mut prev = 0.0;
            for s in 1..=n {
                let p = euler_coverage(n, 7, s, c).unwrap();
                assert!(p >= prev - 1e-12, "s monotonicity broke at s={s}, c={c}");
                prev = p;
            }
        }
        let mut prev = 0.0;
        for c in 1..=12u64 {
            let p = euler_coverage(n, 7, 5, c as f64).unwrap();
            assert!(p >= prev - 1e-12, "c monotonicity broke at c={c}");
            prev = p;
        }
        let mut prev = 1.0;
        for lambda in (0..n - 1).rev() {
            let p = euler_coverage(n, lambda, 5, 3.0).unwrap();
            assert!(p <= prev + 1e-12, "lambda monotonicity broke at λ={lambda}");
            prev = p;
        }
    }

    #[test]
    fn stake_rule_with_full_stake_is_single_drawing() {
        let params = SamplingParams { n: 64, lambda: 15, h: 0.5, m: 0.5, p: 0.9 };
        let s = required_samples_for_stake(&params).unwrap();
        // c = h/m = 1: the answer must satisfy the single-drawing coverage
        assert!(euler_coverage(64, 15, s, 1.0).unwrap() >= 0.9);
        assert!(euler_coverage(64, 15, s - 1, 1.0).unwrap() < 0.9);
        // one drawing of s distinct samples covers ≥ 49 cells iff s ≥ 49
        assert_eq!(s, 49);
    }

    #[test]
    fn stake_rule_outputs_are_minimal_across_stakes() {
        for m in [0.5f64, 0.25, 0.125] {
            let params = SamplingParams { n: 64, lambda: 15, h: 0.5, m, p: 0.9 };
            let s = required_samples_for_stake(&params).unwrap();
            let c = 0.5 / m;
            assert!(euler_coverage(64, 15, s, c).unwrap() >= 0.9, "m={m} s={s}");
            assert!(euler_coverage(64, 15, s - 1, c).unwrap() < 0.9, "m={m} s={s}");
        }
    }

    #[test]
    fn halving_stake_never_doubles_the_per_node_load_unreasonably() {
        // s(m/2) ≤ 2·s(m) + slack on a grid of configurations
        for (n, lambda, p) in [(64u64, 15u64, 0.9f64), (64, 24, 0.99), (36, 8, 0.95)] {
            for m in [0.5f64, 0.25] {
                let s_full =
                    required_samples_for_stake(&SamplingParams { n, lambda, h: 0.5, m, p }).unwrap();
                let s_half = required_samples_for_stake(&SamplingParams {
                    n,
                    lambda,
                    h: 0.5,
                    m: m / 2.0,
                    p,
                })
                .unwrap();
                assert!(
                    s_half <= 2 * s_full + 2,
                    "n={n} λ={lambda} p={p} m={m}: s={s_full} vs s(half)={s_half}"
                );
            }
        }
    }

    #[test]
    fn product_identity_from_the_variable_stake_proof() {
        // w = W_j^{h/m_j} for every j forces Π W_j = w, for any stake split
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..100 {
            let d = rng.random_range(1..=6usize);
            let h: f64 = rng.random_range(0.1..1.0);
            let mut parts: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = parts.iter().sum();
            for p in &mut parts {
                *p *= h / total;
            }
            let w: f64 = rng.random_range(0.05..0.95);
            let product: f64 = parts.iter().map(|&m| w.powf(m / h)).product();
            assert!((product - w).abs() < 1e-12, "split {parts:?}: {product} vs {w}");
        }
    }

    #[test]
    fn out_of_range_stakes_are_rejected() {
        for (h, m, p) in [(0.5, 0.6, 0.9), (0.0, 0.0, 0.9), (0.5, 0.25, 1.0)] {
            assert!(matches!(
                required_samples_for_stake(&SamplingParams { n: 16, lambda: 3, h, m, p }),
                Err(SamplerError::Domain(_))
            ));
        }
    }
}
