//! Small statistics toolkit: least squares, Kolmogorov–Smirnov tests, standard errors.

use crate::error::{invalid, Result};
use crate::linalg::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points");
    let n = xs.len() as f64;
    let mx = pairwise_sum(xs) / n;
    let my = pairwise_sum(ys) / n;
    let sxx: Vec<f64> = xs.iter().map(|x| (x - mx).powi(2)).collect();
    let sxy: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .collect();
    let sxx = pairwise_sum(&sxx);
    let slope = pairwise_sum(&sxy) / sxx;
    let intercept = my - slope * mx;
    let slope_se = if xs.len() > 2 {
        let rss: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - slope * x - intercept).powi(2))
            .collect();
        (pairwise_sum(&rss) / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LinearFit {
        slope,
        intercept,
        slope_se,
    }
}

/// Slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> LinearFit {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly)
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let d: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    pairwise_sum(&d) / (xs.len() as f64 - 1.0)
}

/// Delete-one jackknife standard error of the sample mean.
///
/// For the mean the leave-one-out estimates are `(n m - x_i)/(n - 1)`, so the
/// jackknife reduces to `s / sqrt(n)`; it is evaluated in that closed form.
pub fn jackknife_mean_se(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Binomial standard error `sqrt(p(1-p)/n)`.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Jacobi-theta form converges fast for small x
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
        let s: f64 = (0..50).map(|k| y.powi((2 * k + 1) * (2 * k + 1))).sum();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / x * s;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(invalid("sample", "must be nonempty"));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(invalid("sample", "contains NaN"));
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// One-sample test against a continuous CDF, with the asymptotic p-value
/// and Stephens' small-sample correction.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<KsResult> {
    let v = sorted(xs)?;
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let en = n.sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d),
    })
}

/// Two-sample test. Ties across samples are stepped together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseStream;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let f = linear_fit(&xs, &ys);
        assert!((f.slope - 2.5).abs() < 1e-14);
        assert!((f.intercept + 1.0).abs() < 1e-14);
        assert!(f.slope_se < 1e-12);
    }

    #[test]
    fn kolmogorov_tail_reference_values() {
        // P(K > x) at a few tabulated points
        for (x, want) in [
            (0.5, 0.963_945),
            (1.0, 0.269_999),
            (1.36, 0.049_486),
            (2.0, 0.000_671),
        ] {
            assert!(
                (kolmogorov_sf(x) - want).abs() < 2e-5,
                "{x}: {}",
                kolmogorov_sf(x)
            );
        }
        // the two series agree across the switch point
        let lo = kolmogorov_sf(1.1799999);
        let hi = kolmogorov_sf(1.18);
        assert!((lo - hi).abs() < 1e-6);
    }

    #[test]
    fn normal_sample_passes_and_shifted_fails() {
        let mut s = NoiseStream::new(11, 0);
        let xs: Vec<f64> = (0..2000).map(|_| s.standard_normal()).collect();
        let n = Normal::new(0.0, 1.0).unwrap();
        assert!(ks_one_sample(&xs, |x| n.cdf(x)).unwrap().p_value > 0.01);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.3).collect();
        assert!(ks_one_sample(&shifted, |x| n.cdf(x)).unwrap().p_value < 1e-6);
        assert!(ks_two_sample(&xs, &shifted).unwrap().p_value < 1e-6);
        let mut s2 = NoiseStream::new(12, 0);
        let ys: Vec<f64> = (0..1500).map(|_| s2.standard_normal()).collect();
        assert!(ks_two_sample(&xs, &ys).unwrap().p_value > 0.01);
    }

    #[test]
    fn two_sample_statistic_by_hand() {
        let a = [1.0, 2.0, 3.0];
        let b = [2.5, 3.5];
        // after 2.0: Fa = 2/3, Fb = 0
        assert!((ks_two_sample(&a, &b).unwrap().statistic - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn jackknife_equals_leave_one_out() {
        let xs = [0.3, 1.7, -0.2, 4.0, 2.2, 0.9];
        let n = xs.len() as f64;
        let loo: Vec<f64> = (0..xs.len())
            .map(|i| {
                xs.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, x)| x)
                    .sum::<f64>()
                    / (n - 1.0)
            })
            .collect();
        let m = loo.iter().sum::<f64>() / n;
        let brute = ((n - 1.0) / n * loo.iter().map(|x| (x - m).powi(2)).sum::<f64>()).sqrt();
        assert!((jackknife_mean_se(&xs) - brute).abs() < 1e-13);
    }
}
