//! Sample summaries, a one-sample Kolmogorov-Smirnov test against a centred
//! normal law, and QQ tables.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: f64,
    /// Unbiased.
    pub variance: f64,
    pub std_error_of_mean: f64,
    pub ci95: (f64, f64),
}

impl SampleSummary {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalityResult {
    pub ks_statistic: f64,
    pub p_value_approx: f64,
    pub target_sigma: f64,
    pub standardized: bool,
}

pub fn summarize(samples: &[f64]) -> Result<SampleSummary> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    // Sorting first makes the result independent of input order.
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().copied().collect::<CompensatedSum>().value() / n as f64;
    let ss = sorted
        .iter()
        .map(|x| (x - mean).powi(2))
        .collect::<CompensatedSum>()
        .value();
    let variance = ss / (n - 1) as f64;
    let se = (variance / n as f64).sqrt();
    Ok(SampleSummary {
        count: n,
        mean,
        variance,
        std_error_of_mean: se,
        ci95: (mean - 1.96 * se, mean + 1.96 * se),
    })
}

/// Kolmogorov survival function `Q(lambda) = 2 sum_k (-1)^(k-1) exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    // Below 0.2 the alternating series converges slowly and the value is 1
    // to well within the truncation tolerance.
    if lambda < 0.2 {
        return 1.0;
    }
    let mut total = 0.0;
    let mut k = 1.0f64;
    loop {
        let term = 2.0 * (-2.0 * k * k * lambda * lambda).exp();
        if term < 1e-10 {
            break;
        }
        total += if (k as u64) % 2 == 1 { term } else { -term };
        k += 1.0;
    }
    total.clamp(0.0, 1.0)
}

pub const KS_MIN_SAMPLES: usize = 50;

/// One-sample KS test of `samples` against `N(0, sigma^2)`. No re-centring is
/// applied.
pub fn ks_normal(samples: &[f64], sigma: f64) -> Result<NormalityResult> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let n = samples.len();
    if n < KS_MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: KS_MIN_SAMPLES,
            got: n,
        });
    }
    let law = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        let cdf = law.cdf(x);
        d = d.max((k + 1) as f64 / nf - cdf).max(cdf - k as f64 / nf);
    }
    let lambda = nf.sqrt() * d;
    Ok(NormalityResult {
        ks_statistic: d,
        p_value_approx: kolmogorov_q(lambda),
        target_sigma: sigma,
        standardized: false,
    })
}

/// Rows of `(theoretical standard-normal quantile, empirical quantile)` with
/// Blom positions `(i - 3/8) / (n + 1/4)`.
pub fn qq_export(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let std_normal = Normal::standard();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(k, x)| {
            let pos = ((k + 1) as f64 - 0.375) / (n as f64 + 0.25);
            (std_normal.inverse_cdf(pos), x)
        })
        .collect())
}

pub fn median(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(points: &[(f64, f64)]) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("regressor has zero spread".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            })
            .collect()
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.variance), (1.0, 0.0));
        let s = summarize(&[0.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.variance), (1.0, 2.0));
        assert!(s.ci95.0 <= s.mean && s.mean <= s.ci95.1);
        assert!(matches!(
            summarize(&[1.0]),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn summarize_normal_draws() {
        let x = normals(100_000, 1.0, 11);
        let s = summarize(&x).unwrap();
        assert!(s.mean.abs() < 0.013);
        assert!((s.variance - 1.0).abs() < 0.015);
    }

    #[test]
    fn summarize_is_permutation_invariant() {
        let x = normals(1000, 1.0, 12);
        let mut y = x.clone();
        y.reverse();
        y.rotate_left(17);
        assert_eq!(summarize(&x).unwrap(), summarize(&y).unwrap());
    }

    #[test]
    fn ks_examples() {
        let x = normals(10_000, 2.0, 13);
        assert!(ks_normal(&x, 2.0).unwrap().p_value_approx > 0.01);
        assert!(ks_normal(&x, 1.0).unwrap().p_value_approx < 1e-6);
        let zeros = vec![0.0; 100];
        let r = ks_normal(&zeros, 1.0).unwrap();
        assert!((r.ks_statistic - 0.5).abs() < 1e-15);
        assert!(ks_normal(&zeros, 0.0).is_err());
        assert!(ks_normal(&zeros[..49], 1.0).is_err());
    }

    #[test]
    fn ks_does_not_recentre() {
        let x = normals(2000, 1.0, 14);
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.5).collect();
        let a = ks_normal(&x, 1.0).unwrap();
        let b = ks_normal(&shifted, 1.0).unwrap();
        assert!(b.ks_statistic > a.ks_statistic + 0.1);
    }

    #[test]
    fn kolmogorov_q_values() {
        assert!((kolmogorov_q(1.0) - 0.26999967).abs() < 1e-7);
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn qq_examples() {
        let x = [3.0, -1.0, 2.0, 0.5];
        let t = qq_export(&x).unwrap();
        let col: Vec<f64> = t.iter().map(|r| r.1).collect();
        assert_eq!(col, vec![-1.0, 0.5, 2.0, 3.0]);

        let sym = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let t = qq_export(&sym).unwrap();
        for k in 0..5 {
            assert!((t[k].0 + t[4 - k].0).abs() < 1e-12);
            assert!((t[k].1 + t[4 - k].1).abs() < 1e-12);
        }

        let x = normals(10_000, 1.7, 15);
        let slope = ls_slope(&qq_export(&x).unwrap()).unwrap();
        assert!((slope / 1.7 - 1.0).abs() < 0.03);
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
    }
}
