//! Exact finite-state computations on tiny rings.
//!
//! States are `u64` indices whose bit `s` is the occupancy of site `s`, as in
//! [`Configuration::state_index`](crate::lattice::Configuration::state_index).

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Largest ring the dense representation accepts.
pub const MAX_ORACLE_SITES: usize = 12;

/// Poisson tail mass left out of a uniformized transient law.
pub const UNIFORMIZATION_TAIL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("ring of {0} sites exceeds the dense oracle cap of {MAX_ORACLE_SITES}")]
    TooLarge(usize),
    #[error("ring must have at least one site")]
    Empty,
    #[error("p must lie in [0, 1], got {0}")]
    BadRate(f64),
    #[error("measure has {found} entries, generator has {expected} states")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("block size K = {0} outside [1, 20]")]
    BadBlock(usize),
}

/// Dense ring generator, row-major: `q[from * dim + to]`.
#[derive(Debug, Clone)]
pub struct DenseGenerator {
    len: usize,
    dim: usize,
    q: Vec<f64>,
}

impl DenseGenerator {
    pub fn sites(&self) -> usize {
        self.len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.q[from * self.dim + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.q[from * self.dim..(from + 1) * self.dim]
    }

    /// Largest `|row sum|`.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Largest exit rate `-Q[i][i]`.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.dim)
            .map(|i| -self.rate(i, i))
            .fold(0.0, f64::max)
    }

    fn off_diagonal(&self) -> Vec<(u32, u32, f64)> {
        let mut out = Vec::new();
        for i in 0..self.dim {
            for (j, &r) in self.row(i).iter().enumerate() {
                if i != j && r != 0.0 {
                    out.push((i as u32, j as u32, r));
                }
            }
        }
        out
    }
}

/// Generator of the exclusion process on a ring of `len` sites.
///
/// Each particle jumps to the right neighbour at rate `p` and to the left at
/// rate `1 - p` if the target is empty. On a ring of two sites both
/// neighbours are the same site, so `01 <-> 10` carries the full rate
/// `p + q = 1`.
pub fn build_generator(len: usize, p: f64) -> Result<DenseGenerator, OracleError> {
    if len == 0 {
        return Err(OracleError::Empty);
    }
    if len > MAX_ORACLE_SITES {
        return Err(OracleError::TooLarge(len));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(OracleError::BadRate(p));
    }
    let q = 1.0 - p;
    let dim = 1usize << len;
    let mut m = vec![0.0; dim * dim];
    for state in 0..dim {
        for x in 0..len {
            if state >> x & 1 == 0 {
                continue;
            }
            for (y, rate) in [((x + 1) % len, p), ((x + len - 1) % len, q)] {
                if y == x || state >> y & 1 == 1 || rate == 0.0 {
                    continue;
                }
                let to = state ^ (1 << x) ^ (1 << y);
                m[state * dim + to] += rate;
            }
        }
        let exit: f64 = m[state * dim..(state + 1) * dim].iter().sum();
        m[state * dim + state] = -exit;
    }
    Ok(DenseGenerator { len, dim, q: m })
}

/// Bernoulli product law of density `alpha` as a probability vector.
pub fn bernoulli_measure(len: usize, alpha: f64) -> Vec<f64> {
    (0..1usize << len)
        .map(|s| {
            let k = s.count_ones() as i32;
            alpha.powi(k) * (1.0 - alpha).powi(len as i32 - k)
        })
        .collect()
}

/// Point mass on `state`.
pub fn point_mass(len: usize, state: u64) -> Vec<f64> {
    let mut v = vec![0.0; 1usize << len];
    v[state as usize] = 1.0;
    v
}

/// `max |nu^T Q|` for the Bernoulli law of density `alpha`.
pub fn stationarity_residual(gen: &DenseGenerator, alpha: f64) -> f64 {
    let nu = bernoulli_measure(gen.len, alpha);
    let mut out = vec![0.0; gen.dim];
    for (i, &w) in nu.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, &r) in out.iter_mut().zip(gen.row(i)) {
            *o += w * r;
        }
    }
    out.into_iter().map(f64::abs).fold(0.0, f64::max)
}

/// `nu0^T exp(Q tau)` by uniformization.
///
/// With `lambda` the largest exit rate and `P = I + Q/lambda`, the law is
/// `sum_k Poisson(lambda tau; k) nu0 P^k`. Terms are added until `k` passes
/// the Poisson mean and the remaining Poisson mass is below
/// [`UNIFORMIZATION_TAIL`]; since every `nu0 P^k` is a probability vector,
/// that mass bounds the total-variation error.
pub fn transient_law(gen: &DenseGenerator, nu0: &[f64], tau: f64) -> Result<Vec<f64>, OracleError> {
    if nu0.len() != gen.dim {
        return Err(OracleError::DimensionMismatch {
            expected: gen.dim,
            found: nu0.len(),
        });
    }
    let lambda = gen.max_exit_rate();
    if tau <= 0.0 || lambda == 0.0 {
        return Ok(nu0.to_vec());
    }
    let mean = lambda * tau;
    let edges = gen.off_diagonal();
    let stay: Vec<f64> = (0..gen.dim).map(|i| 1.0 + gen.rate(i, i) / lambda).collect();

    let mut current = nu0.to_vec();
    let mut next = vec![0.0; gen.dim];
    let mut out = vec![0.0; gen.dim];
    let mut mass = 0.0;
    let mut k = 0u64;
    loop {
        let log_w = -mean + k as f64 * mean.ln() - ln_gamma(k as f64 + 1.0);
        let w = log_w.exp();
        if w > 0.0 {
            for (o, c) in out.iter_mut().zip(&current) {
                *o += w * c;
            }
        }
        mass += w;
        if k as f64 > mean && 1.0 - mass < UNIFORMIZATION_TAIL {
            break;
        }
        for ((n, c), s) in next.iter_mut().zip(&current).zip(&stay) {
            *n = c * s;
        }
        for &(i, j, r) in &edges {
            next[j as usize] += current[i as usize] * r / lambda;
        }
        std::mem::swap(&mut current, &mut next);
        k += 1;
    }
    Ok(out)
}

/// Total-variation distance `0.5 sum |a - b|`.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Exhaustive check of the block conditional mean
/// `E[(1/K) sum_{x} etabar(x) etabar(x+1) | block sum]` over all `2^(K+1)`
/// blocks of `K + 1` sites against
/// `(rho - alpha)^2 - rho (1 - rho) / K`, `rho` the block density.
/// Returns the largest absolute deviation over block sums.
pub fn conditional_expectation_check(k: usize, alpha: f64) -> Result<f64, OracleError> {
    if !(1..=20).contains(&k) {
        return Err(OracleError::BadBlock(k));
    }
    let sites = k + 1;
    let mut sum = vec![0.0; sites + 1];
    let mut count = vec![0u64; sites + 1];
    for block in 0u64..1 << sites {
        let eta = |x: usize| (block >> x & 1) as f64 - alpha;
        let pairs: f64 = (0..k).map(|x| eta(x) * eta(x + 1)).sum::<f64>() / k as f64;
        let m = block.count_ones() as usize;
        sum[m] += pairs;
        count[m] += 1;
    }
    let mut worst = 0.0f64;
    for m in 0..=sites {
        let exact = sum[m] / count[m] as f64;
        let rho = m as f64 / sites as f64;
        let formula = (rho - alpha).powi(2) - rho * (1.0 - rho) / k as f64;
        worst = worst.max((exact - formula).abs());
    }
    Ok(worst)
}

/// Centered instantaneous current `W - E[W]` on the bond `[0, 1]` against
///
/// ```text
/// -(p - q) etabar(0) etabar(1) - (q (1 - alpha) + p alpha)(etabar(1) - etabar(0)) + v (eta(0) - alpha)
/// ```
///
/// over the four local states. Returns the largest absolute deviation.
pub fn decomposition_check(p: f64, alpha: f64) -> f64 {
    let q = 1.0 - p;
    let v = (p - q) * (1.0 - 2.0 * alpha);
    let mean = (p - q) * alpha * (1.0 - alpha);
    let mut worst = 0.0f64;
    for (e0, e1) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
        let w = p * e0 * (1.0 - e1) - q * e1 * (1.0 - e0);
        let (b0, b1) = (e0 - alpha, e1 - alpha);
        let rhs = -(p - q) * b0 * b1 - (q * (1.0 - alpha) + p * alpha) * (b1 - b0) + v * b0;
        worst = worst.max((w - mean - rhs).abs());
    }
    worst
}
