//! Confidence intervals, goodness-of-fit tests and small regression helpers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF};
use statrs::stats_tests::ks_test::{ks_onesample, KSOneSampleAlternativeMethod};
use statrs::stats_tests::NaNPolicy;

use crate::error::{invalid, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// How an interval was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Normal,
    Wilson,
}

/// Point estimate with a 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub replicas: usize,
    pub half_width: f64,
    pub lo: f64,
    pub hi: f64,
    pub method: CiMethod,
    /// Seed of the run that produced the sample.
    pub seed: u64,
}

impl EstimateWithCI {
    /// Standard error implied by the half-width.
    pub fn std_error(&self) -> f64 {
        self.half_width / Z95
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Proportion `successes / m` with a normal interval, falling back to the
/// Wilson score interval when fewer than 10 successes or failures were seen.
pub fn proportion(successes: usize, m: usize, seed: u64) -> Result<EstimateWithCI> {
    if m == 0 {
        return Err(invalid("proportion needs at least one replica"));
    }
    if successes > m {
        return Err(invalid(format!("{successes} successes out of {m}")));
    }
    let n = m as f64;
    let p = successes as f64 / n;
    if successes >= 10 && m - successes >= 10 {
        let half = Z95 * (p * (1.0 - p) / n).sqrt();
        return Ok(EstimateWithCI {
            estimate: p,
            replicas: m,
            half_width: half,
            lo: (p - half).max(0.0),
            hi: (p + half).min(1.0),
            method: CiMethod::Normal,
            seed,
        });
    }
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // At the boundaries the interval ends at 0 or 1 exactly; the formula
    // only gets there up to rounding.
    let lo = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if successes == m {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    Ok(EstimateWithCI {
        estimate: p,
        replicas: m,
        half_width: half,
        lo,
        hi,
        method: CiMethod::Wilson,
        seed,
    })
}

/// Mean of `values`, summed in the given order after shifting by the first
/// value; a constant sample returns that constant exactly.
pub fn shifted_mean(values: &[f64]) -> f64 {
    let Some(&x0) = values.first() else {
        return f64::NAN;
    };
    x0 + values.iter().map(|x| x - x0).sum::<f64>() / values.len() as f64
}

/// Sample mean and standard deviation (`n − 1` denominator), summed in the
/// given order.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = shifted_mean(values);
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Mean with a normal 95% interval.
pub fn mean_estimate(values: &[f64], seed: u64) -> Result<EstimateWithCI> {
    if values.is_empty() {
        return Err(invalid("mean of an empty sample"));
    }
    let (mean, sd) = mean_sd(values);
    let half = Z95 * sd / (values.len() as f64).sqrt();
    Ok(EstimateWithCI {
        estimate: mean,
        replicas: values.len(),
        half_width: half,
        lo: mean - half,
        hi: mean + half,
        method: CiMethod::Normal,
        seed,
    })
}

/// Result of a goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl TestOutcome {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

/// Two-sided one-sample Kolmogorov–Smirnov test with the asymptotic
/// Kolmogorov p-value.
pub fn ks_test<D: ContinuousCDF<f64, f64>>(sample: &[f64], dist: &D) -> Result<TestOutcome> {
    let (statistic, p_value) = ks_onesample(
        sample.to_vec(),
        dist,
        KSOneSampleAlternativeMethod::TwoSidedAsymptotic,
        NaNPolicy::Error,
    )
    .map_err(|e| invalid(format!("ks test: {e:?}")))?;
    Ok(TestOutcome {
        statistic,
        p_value,
        n: sample.len(),
    })
}

/// Pearson χ² test of observed counts against equal expected counts.
pub fn chi_square_uniform(counts: &[usize]) -> Result<TestOutcome> {
    let (statistic, p_value) = statrs::stats_tests::chisquare::chisquare(counts, None, None)
        .map_err(|e| invalid(format!("chi-square test: {e:?}")))?;
    Ok(TestOutcome {
        statistic,
        p_value,
        n: counts.iter().sum(),
    })
}

/// Pearson correlation coefficient.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, _) = mean_sd(x);
    let (my, _) = mean_sd(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("linear fit needs two or more paired points"));
    }
    let (mx, _) = mean_sd(x);
    let (my, _) = mean_sd(y);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("linear fit needs distinct abscissae"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// `P(Bin(n, p) ≥ k)`.
pub fn binomial_upper_tail(k: u64, n: u64, p: f64) -> Result<f64> {
    if k == 0 {
        return Ok(1.0);
    }
    let b = Binomial::new(p.clamp(0.0, 1.0), n).map_err(|e| invalid(format!("binomial: {e}")))?;
    Ok(b.sf(k - 1))
}

/// Deviation `δ` at which the one-sided Hoeffding bound
/// `exp(−δ² n / (2M²))` for an average of `n` variables bounded by `cap`
/// equals `level`.
pub fn hoeffding_delta(n: usize, cap: f64, level: f64) -> f64 {
    cap * (2.0 * (1.0 / level).ln() / n as f64).sqrt()
}

/// The Hoeffding tail `exp(−δ² n / (2M²))`.
pub fn hoeffding_tail(n: usize, cap: f64, delta: f64) -> f64 {
    (-delta * delta * n as f64 / (2.0 * cap * cap)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::Normal;

    #[test]
    fn wilson_interval_near_zero() {
        let e = proportion(0, 1000, 1).unwrap();
        assert_eq!(e.method, CiMethod::Wilson);
        assert_eq!(e.lo, 0.0);
        // Upper end z²/(n + z²) for zero successes.
        assert_relative_eq!(e.hi, Z95 * Z95 / (1000.0 + Z95 * Z95), max_relative = 1e-12);
        assert!(e.contains(0.0));
    }

    #[test]
    fn normal_interval_in_the_bulk() {
        let e = proportion(500, 1000, 1).unwrap();
        assert_eq!(e.method, CiMethod::Normal);
        assert_relative_eq!(
            e.half_width,
            Z95 * (0.25f64 / 1000.0).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn intervals_shrink_like_inverse_root() {
        let a = proportion(100, 1000, 0).unwrap();
        let b = proportion(400, 4000, 0).unwrap();
        assert_relative_eq!(a.half_width / b.half_width, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn ks_accepts_exact_quantiles_and_rejects_shift() {
        let n = 2000;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let q: Vec<f64> = (0..n)
            .map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64))
            .collect();
        assert!(ks_test(&q, &normal).unwrap().passes(0.5));
        let shifted: Vec<f64> = q.iter().map(|x| x + 0.2).collect();
        assert!(!ks_test(&shifted, &normal).unwrap().passes(0.01));
    }

    #[test]
    fn regression_recovers_a_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let fit = linear_fit(&x, &y).unwrap();
        assert_relative_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert_relative_eq!(correlation(&x, &y), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hoeffding_round_trip() {
        let d = hoeffding_delta(256, 2.0, 0.01);
        assert_relative_eq!(hoeffding_tail(256, 2.0, d), 0.01, max_relative = 1e-12);
    }

    #[test]
    fn binomial_tail_edges() {
        assert_eq!(binomial_upper_tail(0, 10, 0.3).unwrap(), 1.0);
        assert_relative_eq!(
            binomial_upper_tail(10, 10, 0.5).unwrap(),
            0.5f64.powi(10),
            max_relative = 1e-9
        );
    }
}
