//! The scaled χ law (the law of `|g|` for `g ~ N(0, σ² I_r)`), the critical
//! standard deviation `σ⋆ = 1/(2√(r-1))`, and the ratio condition that keeps
//! the mixture weight of the unit-step kernel in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible kernel standard deviation for rank `r`.
pub fn sigma_star(r: usize) -> Result<f64> {
    if r < 2 {
        return Err(Error::RankTooSmall(r));
    }
    Ok(1.0 / (2.0 * ((r - 1) as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiLaw {
    r: usize,
    sigma2: f64,
}

impl ChiLaw {
    pub fn new(r: usize, sigma2: f64) -> Result<Self> {
        if r < 1 {
            return Err(Error::RankTooSmall(r));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::BadVariance { r, sigma2, threshold: 0.0 });
        }
        Ok(ChiLaw { r, sigma2 })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Log density; `-inf` off the support.
    pub fn ln_density(&self, s: f64) -> f64 {
        if s < 0.0 {
            return f64::NEG_INFINITY;
        }
        let r = self.r as f64;
        if s == 0.0 {
            return if self.r == 1 {
                (2.0 / (std::f64::consts::PI * self.sigma2)).sqrt().ln()
            } else {
                f64::NEG_INFINITY
            };
        }
        let ln_norm = (r / 2.0 - 1.0) * std::f64::consts::LN_2 + ln_gamma(r / 2.0) + 0.5 * r * self.sigma2.ln();
        (r - 1.0) * s.ln() - s * s / (2.0 * self.sigma2) - ln_norm
    }

    pub fn density(&self, s: f64) -> f64 {
        self.ln_density(s).exp()
    }

    pub fn cdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        gamma_p(self.r as f64 / 2.0, s * s / (2.0 * self.sigma2))
    }

    pub fn mode(&self) -> f64 {
        (self.sigma2 * (self.r as f64 - 1.0)).sqrt()
    }
}

pub fn chi_density(law: &ChiLaw, s: f64) -> f64 {
    law.density(s)
}

pub fn chi_cdf(law: &ChiLaw, s: f64) -> f64 {
    law.cdf(s)
}

/// Outcome of scanning `ln χ(s) - ln χ(1-s)` over `s ∈ [0, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioCheck {
    pub holds: bool,
    /// Grid point with the largest log-ratio excess.
    pub worst_s: f64,
    pub worst_excess: f64,
}

/// Checks `χ(s) <= χ(1-s)` on a uniform grid of `s ∈ [0, 1/2]`, i.e. that
/// the weight `χ(1-t)/χ(t)` never exceeds 1 for `t ∈ [1/2, 1)`. A violation
/// is a log-ratio above 1e-12.
pub fn ratio_condition_holds(r: usize, sigma: f64, grid: usize) -> Result<RatioCheck> {
    if r < 2 {
        return Err(Error::RankTooSmall(r));
    }
    let law = ChiLaw::new(r, sigma * sigma)?;
    let grid = grid.max(2);
    let mut worst = RatioCheck { holds: true, worst_s: 0.0, worst_excess: f64::NEG_INFINITY };
    for k in 0..grid {
        let s = 0.5 * k as f64 / (grid - 1) as f64;
        let excess = law.ln_density(s) - law.ln_density(1.0 - s);
        if excess > worst.worst_excess {
            worst.worst_excess = excess;
            worst.worst_s = s;
        }
    }
    worst.holds = worst.worst_excess <= 1e-12;
    Ok(worst)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const GAMMA_MAX_ITER: usize = 10_000;
const GAMMA_EPS: f64 = 1e-16;

/// Regularized lower incomplete gamma `P(a, x)`. Series below `x = a + 1`,
/// Lentz continued fraction above.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let ln_pref = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        (sum.ln() + ln_pref).exp().min(1.0)
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        (1.0 - (h.ln() + ln_pref).exp()).max(0.0)
    }
}

/// CDF of `N(0, var)`.
pub fn normal_cdf(x: f64, var: f64) -> f64 {
    let p = gamma_p(0.5, x * x / (2.0 * var));
    if x >= 0.0 {
        0.5 + 0.5 * p
    } else {
        0.5 - 0.5 * p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + k as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn sigma_star_values() {
        assert_eq!(sigma_star(2).unwrap(), 0.5);
        assert_eq!(sigma_star(5).unwrap(), 0.25);
        assert_eq!(sigma_star(1), Err(Error::RankTooSmall(1)));
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(25.5) - 56.389_167_643_719_944).abs() < 1e-10);
    }

    #[test]
    fn density_closed_forms() {
        let law = ChiLaw::new(2, 1.0).unwrap();
        assert_eq!(law.density(-1.0), 0.0);
        assert!((law.density(1.0) - (-0.5f64).exp()).abs() < 1e-14);
        assert!((law.density(1.0) - 0.606_531).abs() < 1e-6);
    }

    #[test]
    fn density_mode() {
        let law = ChiLaw::new(5, 0.09).unwrap();
        let (mut best, mut arg) = (0.0, 0.0);
        for k in 0..=200_000 {
            let s = k as f64 * 1e-5;
            let d = law.density(s);
            if d > best {
                best = d;
                arg = s;
            }
        }
        assert!((arg - 0.6).abs() < 1e-4);
        assert!((law.mode() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn cdf_closed_form_rank_two() {
        let law = ChiLaw::new(2, 1.0).unwrap();
        assert_eq!(law.cdf(0.0), 0.0);
        let median = (2.0 * 2f64.ln()).sqrt();
        assert!((law.cdf(median) - 0.5).abs() < 1e-12);
        for s in [0.1, 0.7, 1.5, 3.0, 6.0] {
            assert!((law.cdf(s) - (1.0 - (-s * s / 2.0f64).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_matches_quadrature() {
        for (r, s2) in [(2, 0.25), (3, 1.0), (8, 0.02), (50, 0.3)] {
            let law = ChiLaw::new(r, s2).unwrap();
            let top = 10.0 * (s2 * r as f64).sqrt();
            let mut worst = 0.0f64;
            for k in 1..=20 {
                let s = top * k as f64 / 20.0;
                let q = simpson(|x| law.density(x), 0.0, s, 20_000);
                worst = worst.max((q - law.cdf(s)).abs());
            }
            assert!(worst < 1e-8, "r={r}: {worst}");
            let total = simpson(|x| law.density(x), 0.0, top, 20_000);
            assert!((total - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn density_no_overflow_large_rank() {
        let law = ChiLaw::new(400, 1.0).unwrap();
        let d = law.density(law.mode());
        assert!(d.is_finite() && d > 0.0);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054, 1.0) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-2.0, 4.0) - 0.158_655_253_931_457_05).abs() < 1e-12);
    }

    #[test]
    fn ratio_condition_examples() {
        assert!(ratio_condition_holds(2, 0.5, 100_000).unwrap().holds);
        let bad = ratio_condition_holds(2, 0.4, 100_000).unwrap();
        assert!(!bad.holds);
        assert!(bad.worst_s < 0.5);
        assert!(ratio_condition_holds(10, 10.0, 100_000).unwrap().holds);
        assert_eq!(ratio_condition_holds(1, 1.0, 10), Err(Error::RankTooSmall(1)));
    }

    #[test]
    fn ratio_threshold_is_sharp() {
        for r in 2..=30 {
            let star = sigma_star(r).unwrap();
            assert!(ratio_condition_holds(r, star * (1.0 + 1e-9), 10_000).unwrap().holds, "r={r}");
            assert!(!ratio_condition_holds(r, star * 0.9, 10_000).unwrap().holds, "r={r}");
        }
    }
}
