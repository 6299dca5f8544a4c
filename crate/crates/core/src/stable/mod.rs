//! Alpha-stable laws in the S0 parameterization.
//!
//! Characteristic function, for `a != 1`:
//! `exp(-γ^a |t|^a [1 + i b tan(πa/2) sign(t) (|γt|^{1-a} - 1)] + iδt)`,
//! and for `a == 1`: `exp(-γ|t| [1 + i b (2/π) sign(t) ln(γ|t|)] + iδt)`.
//! With `a = 2` the law is `N(δ, 2γ²)`.
//!
//! Scale-mixture convention: `λ = 2·A` where `A` is totally skewed positive
//! stable with index `a/2` and S1 scale `cos(πa/4)^{2/a}`. Then
//! `γ·√λ·N(0,1) + δ ~ S_a(0, γ, δ)`, so the conditional variance of an
//! innovation given `λ` is `λ·γ²` (γ enters squared).

mod mcculloch;

pub use mcculloch::{fit_mcculloch, quantile_sorted as quantile, McCullochFit, MIN_FIT_SAMPLES};

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl StableParams {
    pub fn new(a: f64, b: f64, gamma: f64, delta: f64) -> Result<Self> {
        let p = StableParams { a, b, gamma, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn standard_symmetric(a: f64) -> Result<Self> {
        Self::new(a, 0.0, 1.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a <= 2.0) {
            return Err(Error::domain(format!("tail index a={} not in (0,2]", self.a)));
        }
        if !(-1.0..=1.0).contains(&self.b) {
            return Err(Error::domain(format!("skew b={} not in [-1,1]", self.b)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::domain(format!("scale gamma={} must be > 0", self.gamma)));
        }
        if !self.delta.is_finite() {
            return Err(Error::domain("location delta must be finite"));
        }
        Ok(())
    }

    pub fn is_gaussian(&self) -> bool {
        self.a == 2.0
    }

    pub fn is_symmetric(&self) -> bool {
        self.b == 0.0 || self.is_gaussian()
    }
}

/// One standard S1 variate `S_a(b, 1, 0)` by Chambers–Mallows–Stuck.
fn standard_s1<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let v = rng.sample(Uniform::new(-FRAC_PI_2, FRAC_PI_2).expect("valid range"));
    let w: f64 = Exp1.sample(rng);
    if a == 1.0 {
        let bv = FRAC_PI_2 + b * v;
        (bv * v.tan() - b * ((FRAC_PI_2 * w * v.cos()) / bv).ln()) / FRAC_PI_2
    } else {
        let zeta = b * (PI * a / 2.0).tan();
        let shift = zeta.atan() / a;
        let scale = (1.0 + zeta * zeta).powf(1.0 / (2.0 * a));
        let arg = a * (v + shift);
        scale * arg.sin() / v.cos().powf(1.0 / a) * ((v - arg).cos() / w).powf((1.0 - a) / a)
    }
}

fn draw_one<R: Rng + ?Sized>(p: &StableParams, rng: &mut R) -> f64 {
    if p.is_gaussian() {
        // skew is irrelevant at a = 2; avoid tan(π) round-off
        return p.gamma * standard_s1(2.0, 0.0, rng) + p.delta;
    }
    let z = standard_s1(p.a, p.b, rng);
    if p.a == 1.0 {
        p.gamma * z + p.delta
    } else {
        p.gamma * (z - p.b * (PI * p.a / 2.0).tan()) + p.delta
    }
}

/// Draws `n` i.i.d. variates from `S_a(b, γ, δ)` (S0).
pub fn sample_stable<R: Rng + ?Sized>(params: &StableParams, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    Ok((0..n).map(|_| draw_one(params, rng)).collect())
}

/// Single draw; parameters must already be validated.
pub fn sample_stable_one<R: Rng + ?Sized>(params: &StableParams, rng: &mut R) -> f64 {
    draw_one(params, rng)
}

/// S0 characteristic function.
pub fn stable_cf(params: &StableParams, t: f64) -> Result<Complex64> {
    params.validate()?;
    Ok(cf_unchecked(params, t))
}

fn cf_unchecked(p: &StableParams, t: f64) -> Complex64 {
    if t == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let StableParams { a, b, gamma, delta } = *p;
    let at = t.abs();
    let sign = t.signum();
    let gt = gamma * at;
    let (re, im) = if a == 2.0 {
        (-gt * gt, 0.0)
    } else if a == 1.0 {
        (-gt, -gt * b * (2.0 / PI) * sign * gt.ln())
    } else {
        let ga = gt.powf(a);
        (-ga, -ga * b * (PI * a / 2.0).tan() * sign * (gt.powf(1.0 - a) - 1.0))
    };
    Complex64::new(re, im + delta * t).exp()
}

/// Mixing variable `λ > 0` such that `√λ·N(0,1) ~ S_a(0, 1, 0)`.
pub fn sample_positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> Result<f64> {
    if !(a > 0.0 && a < 2.0) {
        return Err(Error::domain(format!(
            "positive-stable mixing needs 0 < a < 2, got {a}; the Gaussian case needs no mixing"
        )));
    }
    Ok(positive_stable_unchecked(a, rng))
}

pub(crate) fn positive_stable_unchecked<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let half = a / 2.0;
    let c = (PI * a / 4.0).cos().powf(2.0 / a);
    loop {
        let z = standard_s1(half, 1.0, rng);
        let lambda = 2.0 * c * z;
        // guards against round-off at the support boundary
        if lambda > 0.0 && lambda.is_finite() {
            return lambda;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn params(a: f64, b: f64, g: f64, d: f64) -> StableParams {
        StableParams::new(a, b, g, d).unwrap()
    }

    // Independent transcription of the S0 CF as modulus and phase.
    fn cf_oracle(a: f64, b: f64, g: f64, d: f64, t: f64) -> (f64, f64) {
        let pi = std::f64::consts::PI;
        let x = (g * t.abs()).powf(a);
        let phase = if a == 1.0 {
            d * t - x * b * (2.0 / pi) * t.signum() * (g * t.abs()).ln()
        } else {
            d * t - x * b * (pi * a / 2.0).tan() * t.signum() * ((g * t.abs()).powf(1.0 - a) - 1.0)
        };
        ((-x).exp() * phase.cos(), (-x).exp() * phase.sin())
    }

    #[test]
    fn cf_at_origin_is_one() {
        let c = stable_cf(&params(1.3, 0.5, 2.0, 1.0), 0.0).unwrap();
        assert_eq!(c, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn gaussian_cf() {
        let c = stable_cf(&params(2.0, 0.0, 1.0, 0.0), 1.0).unwrap();
        assert!((c.re - (-1.0f64).exp()).abs() < 1e-15);
        assert!(c.im.abs() < 1e-15);
    }

    #[test]
    fn cf_matches_independent_transcription() {
        let (re, im) = cf_oracle(1.3, 0.5, 1.0, 0.0, 0.7);
        let c = stable_cf(&params(1.3, 0.5, 1.0, 0.0), 0.7).unwrap();
        assert!((c.re - re).abs() < 1e-14 && (c.im - im).abs() < 1e-14);
        // frozen values computed with numpy from the same formula
        assert!((c.re - 0.531_847_855_193_179_3).abs() < 1e-12, "{}", c.re);
        assert!((c.im - 0.037_132_953_812_066_98).abs() < 1e-12, "{}", c.im);
        for &(a, b, g, d, t) in &[(1.0, 0.4, 2.0, 0.3, -1.5), (0.7, -0.9, 0.5, 1.0, 2.0)] {
            let (re, im) = cf_oracle(a, b, g, d, t);
            let c = stable_cf(&params(a, b, g, d), t).unwrap();
            assert!((c.re - re).abs() < 1e-14 && (c.im - im).abs() < 1e-14);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(StableParams::new(2.1, 0.0, 1.0, 0.0).is_err());
        assert!(StableParams::new(1.5, 1.1, 1.0, 0.0).is_err());
        assert!(StableParams::new(1.5, 0.0, 0.0, 0.0).is_err());
        let mut rng = rng_from_seed(0);
        assert!(sample_positive_stable(2.0, &mut rng).is_err());
    }

    #[test]
    fn gaussian_member_variance() {
        let mut rng = rng_from_seed(1);
        let n = 100_000;
        let x = sample_stable(&params(2.0, 0.0, 1.0, 0.0), n, &mut rng).unwrap();
        let m = x.iter().sum::<f64>() / n as f64;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        // SE of the sample variance of N(0,2) is 2·√(2/n)
        assert!((v - 2.0).abs() < 3.0 * 2.0 * (2.0 / n as f64).sqrt(), "{v}");
    }

    #[test]
    fn cauchy_quartiles() {
        let mut rng = rng_from_seed(2);
        let n = 100_000;
        let mut x = sample_stable(&params(1.0, 0.0, 1.0, 0.0), n, &mut rng).unwrap();
        x.sort_by(f64::total_cmp);
        let q1 = x[n / 4];
        let q3 = x[3 * n / 4];
        // SE of a quartile is √(p(1-p)/n)/f(q) = √(3/16/n)·2π at q = ±1
        let se = (3.0 / 16.0 / n as f64).sqrt() * 2.0 * std::f64::consts::PI;
        assert!((q1 + 1.0).abs() < 3.0 * se && (q3 - 1.0).abs() < 3.0 * se, "{q1} {q3}");
    }

    #[test]
    fn positive_stable_is_positive() {
        let mut rng = rng_from_seed(3);
        for _ in 0..100_000 {
            assert!(sample_positive_stable(1.3, &mut rng).unwrap() > 0.0);
        }
    }

    #[test]
    fn determinism() {
        let p = params(1.4, 0.3, 1.0, 0.0);
        let a = sample_stable(&p, 50, &mut rng_from_seed(9)).unwrap();
        let b = sample_stable(&p, 50, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
    }
}
