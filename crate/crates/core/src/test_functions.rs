//! Test functions the fluctuation fields are evaluated against.
//!
//! Hermite functions are the orthonormal family
//! `psi_z(u) = (2^z z! sqrt(pi))^(-1/2) H_z(u) exp(-u^2/2)`, evaluated by the
//! three-term recurrence on the normalized functions themselves so no factorial
//! or power of two ever appears. They satisfy `(u^2 - d^2/du^2) psi_z =
//! (2z + 1) psi_z`.

use std::path::Path;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

/// Composite Simpson intervals used by [`inner_product`].
pub const QUADRATURE_INTERVALS: usize = 1 << 16;
/// Window used for functions without a tighter effective support.
pub const HERMITE_WINDOW: f64 = 12.0;
/// Step of the central second difference in [`apply_k0`].
pub const K0_STEP: f64 = 1e-4;
/// Threshold defining the effective (numerical) support.
pub const SUPPORT_EPS: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum TestFunctionError {
    #[error("neither function decays: inner product over the real line diverges")]
    Divergent,
    #[error("{0} is not twice differentiable")]
    NotSmooth(&'static str),
    #[error("tabulated grid must be strictly increasing (row {row})")]
    NotIncreasing { row: usize },
    #[error("tabulated function needs at least two rows")]
    TooShort,
    #[error("tabulated row {row}: {msg}")]
    BadRow { row: usize, msg: String },
    #[error("reading tabulated function: {0}")]
    Csv(#[from] csv::Error),
}

/// Piecewise-linear function on a strictly increasing grid, zero outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl Tabulated {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self, TestFunctionError> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(TestFunctionError::TooShort);
        }
        for (i, w) in grid.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(TestFunctionError::NotIncreasing { row: i + 1 });
            }
        }
        Ok(Tabulated { grid, values })
    }

    /// Loads a two-column CSV `u,value`. A non-numeric first row is taken as
    /// a header; lines starting with `#` are ignored.
    pub fn from_csv(path: &Path) -> Result<Self, TestFunctionError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(TestFunctionError::BadRow {
                    row,
                    msg: format!("expected 2 columns, found {}", rec.len()),
                });
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(u), Ok(v)) => {
                    grid.push(u);
                    values.push(v);
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(TestFunctionError::BadRow {
                        row,
                        msg: "non-numeric entry".to_string(),
                    })
                }
            }
        }
        Tabulated::new(grid, values)
    }

    fn eval(&self, u: f64) -> f64 {
        let n = self.grid.len();
        if u < self.grid[0] || u > self.grid[n - 1] {
            return 0.0;
        }
        let i = self.grid.partition_point(|&g| g <= u);
        if i == n {
            return self.values[n - 1];
        }
        let (u0, u1) = (self.grid[i - 1], self.grid[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * (u - u0) / (u1 - u0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// Orthonormal Hermite function of order `z`.
    Hermite(u32),
    /// `G_n(u) = (1 - u/n)^+ 1_[0,inf)(u)`.
    Ramp(f64),
    /// `1_[0,inf)(u)`.
    Heaviside,
    /// Smooth bump `exp(-1/(1 - r^2))`, `r = (u - center)/width`, scaled to
    /// unit L2 norm.
    Bump { center: f64, width: f64 },
    Tabulated(Arc<Tabulated>),
}

fn bump_profile(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// `1 / sqrt(int_{-1}^{1} profile(r)^2 dr)`.
fn bump_normalizer() -> f64 {
    static NORM: OnceLock<f64> = OnceLock::new();
    *NORM.get_or_init(|| {
        let sq = simpson(|r| bump_profile(r).powi(2), -1.0, 1.0, QUADRATURE_INTERVALS);
        1.0 / sq.sqrt()
    })
}

/// Orthonormal Hermite function by upward recurrence.
pub fn hermite_function(z: u32, u: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25) * (-0.5 * u * u).exp();
    for k in 0..z {
        let k = k as f64;
        let next = (2.0 / (k + 1.0)).sqrt() * u * cur - (k / (k + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn hermite_support(z: u32) -> f64 {
    // scan outward from past the last turning point sqrt(2z + 1)
    let mut u = (2.0 * z as f64 + 1.0).sqrt();
    while hermite_function(z, u).abs() >= SUPPORT_EPS {
        u += 0.01;
    }
    u
}

impl TestFunction {
    pub fn bump(center: f64, width: f64) -> Self {
        assert!(width > 0.0, "bump width must be positive");
        TestFunction::Bump { center, width }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            TestFunction::Hermite(z) => hermite_function(*z, u),
            TestFunction::Ramp(n) => {
                if u >= 0.0 {
                    (1.0 - u / n).max(0.0)
                } else {
                    0.0
                }
            }
            TestFunction::Heaviside => {
                if u >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::Bump { center, width } => {
                bump_normalizer() * bump_profile((u - center) / width) / width.sqrt()
            }
            TestFunction::Tabulated(t) => t.eval(u),
        }
    }

    /// Closed interval outside of which `|H| < 1e-14`, or `None` when the
    /// function does not decay.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            TestFunction::Hermite(z) => {
                let r = hermite_support(*z);
                Some((-r, r))
            }
            TestFunction::Ramp(n) => Some((0.0, *n)),
            TestFunction::Heaviside => None,
            TestFunction::Bump { center, width } => Some((center - width, center + width)),
            TestFunction::Tabulated(t) => Some((t.grid[0], t.grid[t.grid.len() - 1])),
        }
    }

    pub fn is_smooth(&self) -> bool {
        matches!(self, TestFunction::Hermite(_) | TestFunction::Bump { .. })
    }

    pub fn label(&self) -> String {
        match self {
            TestFunction::Hermite(z) => format!("hermite{z}"),
            TestFunction::Ramp(n) => format!("ramp{n}"),
            TestFunction::Heaviside => "heaviside".to_string(),
            TestFunction::Bump { center, width } => format!("bump({center},{width})"),
            TestFunction::Tabulated(_) => "tabulated".to_string(),
        }
    }
}

/// Composite Simpson rule with `intervals` (rounded up to even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..m {
        let x = a + i as f64 * h;
        if i % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even)
}

/// `int H(u) G(u) du` by composite Simpson with [`QUADRATURE_INTERVALS`]
/// subintervals over the intersection of the effective supports.
///
/// Ramp and Heaviside kinks sit at support endpoints, so the integrand is
/// smooth on the window (ramp products are then integrated exactly, being
/// quadratic). Hermite supports lie within `[-12, 12]` for the orders used.
pub fn inner_product(h: &TestFunction, g: &TestFunction) -> Result<f64, TestFunctionError> {
    let window = match (h.support(), g.support()) {
        (None, None) => return Err(TestFunctionError::Divergent),
        (Some(s), None) | (None, Some(s)) => s,
        (Some((a1, b1)), Some((a2, b2))) => (a1.max(a2), b1.min(b2)),
    };
    let (a, b) = window;
    if b <= a {
        return Ok(0.0);
    }
    Ok(simpson(|u| h.eval(u) * g.eval(u), a, b, QUADRATURE_INTERVALS))
}

/// `(u^2 - d^2/du^2) H` at `u`, second derivative by central difference with
/// step [`K0_STEP`] (truncation error `O(h^2)`).
pub fn apply_k0(h: &TestFunction, u: f64) -> Result<f64, TestFunctionError> {
    if !h.is_smooth() {
        let name = match h {
            TestFunction::Ramp(_) => "ramp",
            TestFunction::Heaviside => "heaviside",
            _ => "tabulated",
        };
        return Err(TestFunctionError::NotSmooth(name));
    }
    let step = K0_STEP;
    let center = h.eval(u);
    let second = (h.eval(u + step) - 2.0 * center + h.eval(u - step)) / (step * step);
    Ok(u * u * center - second)
}
