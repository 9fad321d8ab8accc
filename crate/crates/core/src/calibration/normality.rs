use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const NORMALITY_ALPHA: f64 = 0.05;
pub const MIN_BATTERY_SIZE: usize = 8;
pub const SHAPIRO_WILK_MAX_N: usize = 5000;

pub const SHAPIRO_WILK: &str = "shapiro_wilk";
pub const JARQUE_BERA: &str = "jarque_bera";
pub const ANDERSON_DARLING: &str = "anderson_darling";
pub const KOLMOGOROV_SMIRNOV: &str = "kolmogorov_smirnov";
pub const CHI_SQUARED: &str = "chi_squared";
pub const TEST_NAMES: [&str; 5] = [SHAPIRO_WILK, JARQUE_BERA, ANDERSON_DARLING, KOLMOGOROV_SMIRNOV, CHI_SQUARED];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub passed: bool,
    pub skipped: bool,
}

impl TestOutcome {
    fn from_p(statistic: f64, p_value: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self { statistic, p_value, passed: p_value >= NORMALITY_ALPHA, skipped: false }
    }

    fn skipped() -> Self {
        Self { statistic: f64::NAN, p_value: f64::NAN, passed: false, skipped: true }
    }
}

fn phi(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// `N/6·(S² + (K − 3)²/4)` with the `χ²₂` p-value `exp(−JB/2)`.
pub fn jarque_bera(z: &[f64]) -> Result<TestOutcome> {
    let n = z.len() as f64;
    if z.len() < 2 {
        return Err(Error::InvalidArgument("Jarque-Bera needs at least 2 values".into()));
    }
    let mean = z.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in z {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return Ok(TestOutcome::from_p(f64::INFINITY, 0.0));
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let jb = n / 6.0 * (skew * skew + 0.25 * (kurt - 3.0).powi(2));
    Ok(TestOutcome::from_p(jb, (-0.5 * jb).exp()))
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS against `N(0, 1)` with the asymptotic p-value `Q(√N·D)`.
pub fn kolmogorov_smirnov(z: &[f64]) -> Result<TestOutcome> {
    if z.is_empty() {
        return Err(Error::InvalidArgument("KS needs at least one value".into()));
    }
    let mut s = z.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = phi(v);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    Ok(TestOutcome::from_p(d, kolmogorov_sf(n.sqrt() * d)))
}

/// Limiting CDF of the Anderson–Darling statistic.
fn ad_inf(z: f64) -> f64 {
    if z < 2.0 {
        return (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z);
    }
    (-(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z).exp()).exp()
}

/// Finite-sample correction to [`ad_inf`].
fn ad_errfix(n: f64, x: f64) -> f64 {
    if x > 0.8 {
        return (-130.2137 + (745.2337 - (1705.091 - (1950.646 - (1116.360 - 255.7844 * x) * x) * x) * x) * x) / n;
    }
    let c = 0.01265 + 0.1757 / n;
    if x < c {
        let t = x / c;
        let t = t.sqrt() * (1.0 - t) * (49.0 * t - 102.0);
        return t * (0.0037 / (n * n) + 0.00078 / n + 0.00006) / n;
    }
    let x = (x - c) / (0.8 - c);
    let x = -0.00022633 + (6.54034 - (14.6538 - (14.458 - (8.259 - 1.91864 * x) * x) * x) * x) * x;
    x * (0.04213 / n + 0.01365 / (n * n))
}

/// `P(A² ≤ a)` for a sample of size `n` from a fully specified law.
pub fn anderson_darling_cdf(n: usize, a: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let x = ad_inf(a);
    (x + ad_errfix(n as f64, x)).clamp(0.0, 1.0)
}

/// Anderson–Darling against the fully specified `N(0, 1)`.
pub fn anderson_darling(z: &[f64]) -> Result<TestOutcome> {
    if z.is_empty() {
        return Err(Error::InvalidArgument("Anderson-Darling needs at least one value".into()));
    }
    let mut s = z.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let nf = n as f64;
    let nd = Normal::standard();
    let mut sum = 0.0;
    for i in 0..n {
        let lo = nd.cdf(s[i]).max(f64::MIN_POSITIVE).ln();
        let hi = nd.sf(s[n - 1 - i]).max(f64::MIN_POSITIVE).ln();
        sum += (2 * i + 1) as f64 * (lo + hi);
    }
    let a2 = -nf - sum / nf;
    Ok(TestOutcome::from_p(a2, 1.0 - anderson_darling_cdf(n, a2)))
}

/// `Σ z²` against `χ²_N`, two-sided.
pub fn chi_squared(z: &[f64]) -> Result<TestOutcome> {
    if z.is_empty() {
        return Err(Error::InvalidArgument("chi-squared test needs at least one value".into()));
    }
    let stat: f64 = z.iter().map(|v| v * v).sum();
    let dist = ChiSquared::new(z.len() as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let c = dist.cdf(stat);
    Ok(TestOutcome::from_p(stat, 2.0 * c.min(1.0 - c)))
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

/// Shapiro–Wilk W with Royston's coefficient and p-value approximations.
pub fn shapiro_wilk(z: &[f64]) -> Result<TestOutcome> {
    let n = z.len();
    if !(3..=SHAPIRO_WILK_MAX_N).contains(&n) {
        return Err(Error::InvalidArgument(format!("Shapiro-Wilk is valid for 3 ≤ N ≤ 5000, got {n}")));
    }
    let mut x = z.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if ss == 0.0 {
        return Ok(TestOutcome::from_p(1.0, 1.0));
    }

    let nd = Normal::standard();
    let mut a = vec![0.0; n];
    if n == 3 {
        a[0] = -std::f64::consts::FRAC_1_SQRT_2;
        a[2] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let m: Vec<f64> = (1..=n).map(|i| nd.inverse_cdf((i as f64 - 0.375) / (nf + 0.25))).collect();
        let mm: f64 = m.iter().map(|v| v * v).sum();
        let u = 1.0 / nf.sqrt();
        let c1 = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
        let c2 = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let an = m[n - 1] / mm.sqrt() + poly(&c1, u);
        if n > 5 {
            let an1 = m[n - 2] / mm.sqrt() + poly(&c2, u);
            let phi = (mm - 2.0 * m[n - 1].powi(2) - 2.0 * m[n - 2].powi(2))
                / (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
            for i in 2..n - 2 {
                a[i] = m[i] / phi.sqrt();
            }
            a[n - 2] = an1;
            a[1] = -an1;
        } else {
            let phi = (mm - 2.0 * m[n - 1].powi(2)) / (1.0 - 2.0 * an * an);
            for i in 1..n - 1 {
                a[i] = m[i] / phi.sqrt();
            }
        }
        a[n - 1] = an;
        a[0] = -an;
    }
    let num: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
    let w = (num * num / ss).min(1.0);

    let p = if n == 3 {
        let p = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - 0.75_f64.sqrt().asin());
        p.max(0.0)
    } else if n <= 11 {
        let gamma = -2.273 + 0.459 * nf;
        let mu = poly(&[0.5440, -0.39978, 0.025054, -0.0006714], nf);
        let sigma = poly(&[1.3822, -0.77857, 0.062767, -0.0020322], nf).exp();
        let arg = gamma - (1.0 - w).ln();
        if arg <= 0.0 {
            0.0
        } else {
            nd.sf((-arg.ln() - mu) / sigma)
        }
    } else {
        let ln_n = nf.ln();
        let mu = poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n);
        let sigma = poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp();
        nd.sf(((1.0 - w).ln() - mu) / sigma)
    };
    Ok(TestOutcome::from_p(w, p))
}

/// All five tests. Tests whose validity range excludes `N` are skipped.
pub fn normality_battery(z: &[f64]) -> BTreeMap<String, TestOutcome> {
    let mut out = BTreeMap::new();
    let n = z.len();
    let run = |f: fn(&[f64]) -> Result<TestOutcome>| {
        if n < MIN_BATTERY_SIZE {
            TestOutcome::skipped()
        } else {
            f(z).unwrap_or_else(|_| TestOutcome::skipped())
        }
    };
    out.insert(SHAPIRO_WILK.to_string(), run(shapiro_wilk));
    out.insert(JARQUE_BERA.to_string(), run(jarque_bera));
    out.insert(ANDERSON_DARLING.to_string(), run(anderson_darling));
    out.insert(KOLMOGOROV_SMIRNOV.to_string(), run(kolmogorov_smirnov));
    out.insert(CHI_SQUARED.to_string(), run(chi_squared));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(n: usize) -> Vec<f64> {
        (1..=n)
            .map(|i| {
                let i = i as f64;
                (1.7 * i).sin() * (1.0 + 0.3 * (0.9 * i).cos()) * 1.2
            })
            .collect()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    // Reference values computed with scipy.stats 1.15 on the fixture above.
    #[test]
    fn matches_reference_n30() {
        let z = fixture(30);
        let sw = shapiro_wilk(&z).unwrap();
        assert!(close(sw.statistic, 0.942877293878828, 1e-6), "{sw:?}");
        assert!(close(sw.p_value, 0.10873918144263, 1e-4), "{sw:?}");
        let jb = jarque_bera(&z).unwrap();
        assert!(close(jb.statistic, 2.15741415308726, 1e-10));
        assert!(close(jb.p_value, 0.340034880630704, 1e-10));
        let ks = kolmogorov_smirnov(&z).unwrap();
        assert!(close(ks.statistic, 0.101794059421696, 1e-9), "{ks:?}");
        assert!(close(ks.p_value, 0.915034863750831, 1e-8));
        let ad = anderson_darling(&z).unwrap();
        assert!(close(ad.statistic, 0.455073082321057, 1e-10));
        let chi = chi_squared(&z).unwrap();
        assert!(close(chi.statistic, 23.3047322640073, 1e-10));
        assert!(close(chi.p_value, 0.394944301510071, 1e-8));
    }

    #[test]
    fn matches_reference_small_n() {
        let sw = shapiro_wilk(&fixture(10)).unwrap();
        assert!(close(sw.statistic, 0.88076634952695, 1e-6), "{sw:?}");
        assert!(close(sw.p_value, 0.133163162032699, 1e-4), "{sw:?}");
        let sw = shapiro_wilk(&fixture(7)).unwrap();
        assert!(close(sw.statistic, 0.891629099892695, 1e-6), "{sw:?}");
        assert!(close(sw.p_value, 0.283269668203807, 1e-4), "{sw:?}");
        let ks = kolmogorov_smirnov(&fixture(10)).unwrap();
        assert!(close(ks.p_value, 0.859241868216958, 1e-8));
    }

    #[test]
    fn anderson_darling_limiting_quantiles() {
        // Asymptotic critical values of A² for a fully specified null.
        assert!(close(ad_inf(1.933), 0.90, 2e-3));
        assert!(close(ad_inf(2.492), 0.95, 2e-3));
        assert!(close(ad_inf(3.857), 0.99, 1e-3));
    }

    #[test]
    fn exact_moment_sample_has_zero_jarque_bera() {
        // Symmetric with m4 = 3·m2²: four zeros and ±1.
        let z = [0.0, 0.0, 0.0, 0.0, 1.0, -1.0];
        let jb = jarque_bera(&z).unwrap();
        assert!(jb.statistic.abs() < 1e-14, "{jb:?}");
        assert!((jb.p_value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn battery_skips_small_samples() {
        let b = normality_battery(&[0.1, -0.2, 0.3]);
        assert!(b.values().all(|t| t.skipped));
        let b = normality_battery(&fixture(30));
        assert_eq!(b.len(), 5);
        assert!(b.values().all(|t| !t.skipped && t.passed));
    }

    #[test]
    fn kolmogorov_tail() {
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert!(close(kolmogorov_sf(1.36), 0.0494, 5e-4));
    }
}
