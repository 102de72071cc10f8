use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    /// Two-tailed p-value.
    pub p: f64,
    pub df: f64,
    /// Set when every difference is identical and non-zero: the statistic is
    /// infinite and `p` is reported as 0.
    pub zero_variance: bool,
}

/// Two-tailed paired t-test of `a` against `b`.
///
/// The p-value comes from the Student-t CDF (regularized incomplete beta,
/// evaluated by continued fraction in `statrs`).
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Degenerate(format!("paired samples differ in length ({} vs {})", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = (n - 1) as f64;
    // Differences equal to rounding noise count as constant.
    let scale = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if var.sqrt() <= 1e-12 * scale.max(f64::MIN_POSITIVE) || var == 0.0 {
        if mean == 0.0 {
            return Ok(TTest { t: 0.0, p: 1.0, df, zero_variance: false });
        }
        return Ok(TTest {
            t: f64::INFINITY.copysign(mean),
            p: 0.0,
            df,
            zero_variance: true,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest { t, p, df, zero_variance: false })
}

/// Bonferroni adjustment `min(1, m·p)`.
pub fn bonferroni(p_values: &[f64], m: usize) -> Vec<f64> {
    assert!(m >= p_values.len(), "m must cover every test");
    p_values.iter().map(|p| (p * m as f64).min(1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [0.1, 0.5, 0.9];
        let r = paired_ttest(&a, &a).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
    }

    #[test]
    fn constant_shift() {
        let a: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let b: Vec<f64> = a.iter().map(|x| x - 0.05).collect();
        let r = paired_ttest(&a, &b).unwrap();
        assert!(r.zero_variance);
        assert!(r.p < 0.001);
    }

    // Reference values from scipy.stats.ttest_rel, computed before the build.
    #[test]
    fn twenty_pair_reference() {
        let a = [0.31, 0.45, 0.12, 0.78, 0.56, 0.33, 0.91, 0.27, 0.64, 0.48, 0.52, 0.39, 0.71, 0.22, 0.58, 0.83, 0.41, 0.36, 0.69, 0.15];
        let b = [0.28, 0.40, 0.15, 0.70, 0.49, 0.35, 0.85, 0.20, 0.60, 0.47, 0.44, 0.33, 0.66, 0.25, 0.50, 0.79, 0.38, 0.30, 0.61, 0.16];
        let r = paired_ttest(&a, &b).unwrap();
        assert!((r.t - 4.780914437337573).abs() < 1e-9, "t = {}", r.t);
        assert!((r.p - 0.00012992826820649338).abs() < 1e-9, "p = {}", r.p);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(paired_ttest(&[1.0], &[2.0]).is_err());
        assert!(paired_ttest(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn bonferroni_adjustment() {
        assert!((bonferroni(&[0.01], 5)[0] - 0.05).abs() < 1e-15);
        assert_eq!(bonferroni(&[0.5], 3), [1.0]);
        assert_eq!(bonferroni(&[0.3, 0.02], 2), [0.6, 0.04]);
        assert_eq!(bonferroni(&[0.3], 1), [0.3]);
    }
}
