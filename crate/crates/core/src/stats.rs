//! Mergeable moment accumulators, confidence intervals and Gaussianity
//! diagnostics.

use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

/// Streaming count, mean and central moment sums up to order four
/// (Welford updates, Pébay pairwise merges).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut a = Self::new();
        for &x in xs {
            a.push(x);
        }
        a
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        let d2 = d * d;
        let d3 = d2 * d;
        let d4 = d2 * d2;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * d * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * other.m3 - nb * self.m3) / n;
        self.mean += d * nb / n;
        self.n += other.n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        self.m2 / (self.n - 1) as f64
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Raw sum of squared deviations.
    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Adjusted Fisher–Pearson skewness (G1).
    pub fn skewness(&self) -> f64 {
        let n = self.n as f64;
        if self.n < 3 || self.m2 == 0.0 {
            return f64::NAN;
        }
        let g1 = n.sqrt() * self.m3 / self.m2.powf(1.5);
        g1 * (n * (n - 1.0)).sqrt() / (n - 2.0)
    }

    /// Sample excess kurtosis (G2).
    pub fn excess_kurtosis(&self) -> f64 {
        let n = self.n as f64;
        if self.n < 4 || self.m2 == 0.0 {
            return f64::NAN;
        }
        let g2 = n * self.m4 / (self.m2 * self.m2) - 3.0;
        (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0)
    }

    /// 99% normal-approximation interval for the mean.
    pub fn mean_ci(&self) -> (f64, f64) {
        let half = Z99 * (self.variance() / self.n as f64).sqrt();
        (self.mean - half, self.mean + half)
    }

    /// 99% large-sample interval for the variance, with standard error
    /// `sqrt((m4 - s^4 (n - 3)/(n - 1)) / n)`, `m4` the fourth central moment.
    /// Does not assume normal data.
    pub fn variance_ci(&self) -> (f64, f64) {
        let n = self.n as f64;
        let s2 = self.variance();
        let m4 = self.m4 / n;
        let se = ((m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
        (s2 - Z99 * se, s2 + Z99 * se)
    }

    /// Sample estimate of `E[X^2]`.
    pub fn second_moment(&self) -> f64 {
        let n = self.n as f64;
        self.m2 / n + self.mean * self.mean
    }
}

/// Streaming co-moment of a pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CoAccumulator {
    n: u64,
    mean_x: f64,
    mean_y: f64,
    c: f64,
}

impl CoAccumulator {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        self.mean_y += (y - self.mean_y) / n;
        self.c += dx * (y - self.mean_y);
    }

    pub fn merge(&mut self, other: &CoAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        self.c += other.c + dx * dy * na * nb / n;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        self.c / (self.n - 1) as f64
    }
}

/// Point estimate with a 99% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub low: f64,
    pub high: f64,
}

impl Estimate {
    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.high - self.low)
    }
}

/// Sample covariance with a jackknife 99% interval.
pub fn covariance_jackknife(x: &[f64], y: &[f64]) -> Estimate {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    assert!(n >= 3, "jackknife needs at least three pairs");
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let s: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let cov = s / (nf - 1.0);
    // leave-one-out co-moment: S - n/(n-1) dx dy
    let loo: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| (s - nf / (nf - 1.0) * (a - mx) * (b - my)) / (nf - 2.0))
        .collect();
    let mean_loo = loo.iter().sum::<f64>() / nf;
    let var = (nf - 1.0) / nf * loo.iter().map(|c| (c - mean_loo).powi(2)).sum::<f64>();
    let half = Z99 * var.sqrt();
    Estimate {
        value: cov,
        low: cov - half,
        high: cov + half,
    }
}

/// Mean of `x^2` with a 99% interval.
pub fn second_moment_estimate(x: &[f64]) -> Estimate {
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    let acc = Accumulator::from_slice(&sq);
    let (low, high) = acc.mean_ci();
    Estimate {
        value: acc.mean(),
        low,
        high,
    }
}

/// One-sample Kolmogorov–Smirnov test against the normal law with the
/// sample's own mean and standard deviation. Returns `(D, p)`; `p` uses the
/// asymptotic Kolmogorov distribution with Stephens' finite-n correction.
pub fn ks_normal(xs: &[f64]) -> (f64, f64) {
    let acc = Accumulator::from_slice(xs);
    let normal = Normal::new(acc.mean(), acc.std_dev()).expect("nondegenerate sample");
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_survival(lambda))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
