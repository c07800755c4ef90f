//! χ² tail probabilities and Vuong's closeness test.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{GragraError, Result};

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

/// `ln Γ(x)` for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Upper-tail probability of a χ² variable with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: u32) -> Result<f64> {
    if df < 1 {
        return Err(GragraError::Config("chi-squared degrees of freedom must be at least 1".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(GragraError::Config(format!("chi-squared statistic must be non-negative, got {x}")));
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(gamma_q(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    pub alpha: f64,
    pub alpha_small: f64,
    /// Sample counts below this use `alpha_small`.
    pub small_sample_cutoff: usize,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig {
            alpha: 1e-7,
            alpha_small: 1e-5,
            small_sample_cutoff: 50,
        }
    }
}

impl SignificanceConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0 && self.alpha <= self.alpha_small && self.alpha_small < 1.0;
        if !ok {
            return Err(GragraError::Config(format!(
                "significance levels must satisfy 0 < alpha ({}) <= alpha_small ({}) < 1",
                self.alpha, self.alpha_small
            )));
        }
        if self.small_sample_cutoff < 1 {
            return Err(GragraError::Config("small-sample cutoff must be at least 1".into()));
        }
        Ok(())
    }

    pub fn alpha_for(&self, n_samples: usize) -> f64 {
        if n_samples < self.small_sample_cutoff {
            self.alpha_small
        } else {
            self.alpha
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VuongOutcome {
    pub significant: bool,
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub alpha: f64,
}

/// Vuong's test on a penalized gain: statistic `2·gain`, `|X| + 1` degrees of freedom.
pub fn vuong_significant(gain: f64, pattern_size: usize, n_samples: usize, cfg: &SignificanceConfig) -> VuongOutcome {
    let df = pattern_size as u32 + 1;
    let alpha = cfg.alpha_for(n_samples);
    let statistic = 2.0 * gain;
    if !(gain > 0.0) {
        return VuongOutcome {
            significant: false,
            statistic,
            df,
            p_value: 1.0,
            alpha,
        };
    }
    let p_value = chi2_sf(statistic, df).expect("valid statistic");
    VuongOutcome {
        significant: p_value < alpha,
        statistic,
        df,
        p_value,
        alpha,
    }
}

/// Smallest statistic whose χ² tail probability falls below `alpha`,
/// found by bisection.
pub fn critical_value(df: u32, alpha: f64) -> f64 {
    let sf = |x: f64| chi2_sf(x, df).unwrap();
    let mut hi = df as f64 + 10.0;
    while sf(hi) >= alpha {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sf(mid) < alpha {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    hi
}

/// Memoized significance threshold: a gain is significant iff `2·gain`
/// reaches the critical value. Agrees with [`vuong_significant`] except
/// within bisection precision of the boundary.
#[derive(Debug, Default)]
pub struct CriticalValues {
    cache: Mutex<HashMap<(u32, u64), f64>>,
}

impl CriticalValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, df: u32, alpha: f64) -> f64 {
        let key = (df, alpha.to_bits());
        if let Some(&v) = self.cache.lock().unwrap().get(&key) {
            return v;
        }
        let v = critical_value(df, alpha);
        self.cache.lock().unwrap().insert(key, v);
        v
    }

    /// Whether `gain` over an `size`-edge pattern passes at level `alpha`.
    pub fn passes(&self, gain: f64, size: usize, alpha: f64) -> bool {
        gain > 0.0 && 2.0 * gain >= self.get(size as u32 + 1, alpha)
    }
}
