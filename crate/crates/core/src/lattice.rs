//! Parameters, ring configurations and the Bernoulli initial laws.
//!
//! The process lives on a ring of `L` sites standing in for ℤ. Integer
//! coordinates `x` are mapped to ring sites by `x mod L`, so the bond
//! `[-1, 0]` is the bond between ring sites `L - 1` and `0`. The ring is
//! required to be at least four times the physical horizon so no
//! disturbance can travel around it within the simulated time.

use std::fmt;

use thiserror::Error;

use crate::rng::{rng_from_seed, unit_f64};

/// Minimum ratio between the ring size and the physical horizon.
pub const RING_MARGIN: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeScale {
    /// Speed `N`.
    Hyperbolic,
    /// Speed `N^(1+gamma)`.
    Longer,
    /// Speed `N^2`; only meaningful for the symmetric process.
    Diffusive,
}

impl TimeScale {
    pub fn name(self) -> &'static str {
        match self {
            TimeScale::Hyperbolic => "hyperbolic",
            TimeScale::Longer => "longer",
            TimeScale::Diffusive => "diffusive",
        }
    }
}

impl fmt::Display for TimeScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Physical and scaling parameters of one experiment.
///
/// `q = 1 - p` is derived on demand and never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub p: f64,
    pub alpha: f64,
    pub n: u64,
    pub gamma: f64,
    pub l: usize,
    pub time_scale: TimeScale,
    pub t_max: f64,
}

impl SimParams {
    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    /// `p - q`.
    pub fn drift(&self) -> f64 {
        self.p - self.q()
    }

    /// Static compressibility `alpha (1 - alpha)`.
    pub fn chi(&self) -> f64 {
        self.alpha * (1.0 - self.alpha)
    }

    /// Characteristic velocity `(p - q)(1 - 2 alpha)` of density fluctuations.
    pub fn velocity(&self) -> f64 {
        self.drift() * (1.0 - 2.0 * self.alpha)
    }

    /// Physical time per unit of macroscopic time.
    pub fn speed(&self) -> f64 {
        let n = self.n as f64;
        match self.time_scale {
            TimeScale::Hyperbolic => n,
            TimeScale::Longer => n.powf(1.0 + self.gamma),
            TimeScale::Diffusive => n * n,
        }
    }

    pub fn physical_time(&self, t: f64) -> f64 {
        t * self.speed()
    }

    pub fn physical_horizon(&self) -> f64 {
        self.physical_time(self.t_max)
    }

    /// Smallest ring size accepted for this horizon.
    pub fn min_ring_size(&self) -> usize {
        (RING_MARGIN * self.physical_horizon()).ceil().max(1.0) as usize
    }

    pub fn validate(&self) -> Validation {
        validate_params(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Outcome of [`validate_params`]: hard violations and advisory warnings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Validation {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every parameter invariant and reports all violations at once.
pub fn validate_params(params: &SimParams) -> Validation {
    let mut out = Validation::default();
    let mut violate = |field, message: String| out.violations.push(Violation { field, message });

    if !(params.p > 0.0 && params.p <= 1.0) {
        violate("p", format!("jump-right probability {} outside (0, 1]", params.p));
    }
    if !(0.0..=1.0).contains(&params.alpha) {
        violate("alpha", format!("density {} outside [0, 1]", params.alpha));
    }
    if params.n == 0 {
        violate("n", "scaling parameter must be a positive integer".to_string());
    }
    if !(params.gamma.is_finite() && params.gamma >= 0.0) {
        violate("gamma", format!("exponent {} must be finite and >= 0", params.gamma));
    }
    if !(params.t_max.is_finite() && params.t_max >= 0.0) {
        violate("t_max", format!("horizon {} must be finite and >= 0", params.t_max));
    }
    if params.l == 0 {
        violate("l", "ring size must be positive".to_string());
    } else if params.n > 0 && params.t_max.is_finite() && params.gamma.is_finite() {
        let horizon = params.physical_horizon();
        if (params.l as f64) < RING_MARGIN * horizon {
            violate(
                "l",
                format!(
                    "ring size {} below {} x physical horizon {} (need l >= {})",
                    params.l,
                    RING_MARGIN,
                    horizon,
                    params.min_ring_size()
                ),
            );
        }
    }

    if params.time_scale == TimeScale::Longer && params.gamma >= 1.0 / 3.0 {
        out.warnings.push(format!(
            "gamma = {} >= 1/3: Boltzmann-Gibbs decay is not expected",
            params.gamma
        ));
    }
    if params.time_scale == TimeScale::Diffusive && params.p != 0.5 {
        out.warnings
            .push(format!("diffusive scale with asymmetric p = {}", params.p));
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("interval [{a}, {b}] is empty or reversed")]
    ReversedInterval { a: i64, b: i64 },
    #[error("interval [{a}, {b}] is longer than the ring ({len} sites)")]
    IntervalExceedsRing { a: i64, b: i64, len: usize },
}

/// Initial laws: product Bernoulli, or product Bernoulli conditioned on a
/// particle at the origin (which becomes the tagged particle).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitialLaw {
    Bernoulli,
    BernoulliStar,
}

/// Bit-packed occupancy of a ring, with an optional tagged particle.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    words: Vec<u64>,
    len: usize,
    tagged: Option<usize>,
    winding: i64,
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bits: String = (0..self.len.min(128))
            .map(|s| if self.get(s) { '1' } else { '0' })
            .collect();
        f.debug_struct("Configuration")
            .field("len", &self.len)
            .field("occupancy", &bits)
            .field("tagged", &self.tagged)
            .field("winding", &self.winding)
            .finish()
    }
}

impl Configuration {
    pub fn empty(len: usize) -> Self {
        Configuration {
            words: vec![0; len.div_ceil(64)],
            len,
            tagged: None,
            winding: 0,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut c = Self::empty(len);
        for s in 0..len {
            c.set(s, true);
        }
        c
    }

    pub fn from_occupancy(bits: &[bool]) -> Self {
        let mut c = Self::empty(bits.len());
        for (s, &b) in bits.iter().enumerate() {
            c.set(s, b);
        }
        c
    }

    /// Builds a configuration from the low `len` bits of `state`
    /// (bit `s` is site `s`).
    pub fn from_state_index(state: u64, len: usize) -> Self {
        assert!(len <= 64);
        let mut c = Self::empty(len);
        for s in 0..len {
            c.set(s, state >> s & 1 == 1);
        }
        c
    }

    /// Inverse of [`Configuration::from_state_index`]; rings up to 64 sites.
    pub fn state_index(&self) -> u64 {
        assert!(self.len <= 64);
        if self.len == 0 {
            0
        } else {
            self.words[0]
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Ring site of the integer coordinate `x`.
    #[inline]
    pub fn site(&self, x: i64) -> usize {
        x.rem_euclid(self.len as i64) as usize
    }

    #[inline]
    pub fn get(&self, site: usize) -> bool {
        self.words[site >> 6] >> (site & 63) & 1 == 1
    }

    /// Occupancy at integer coordinate `x` as 0 or 1.
    #[inline]
    pub fn eta(&self, x: i64) -> u8 {
        self.get(self.site(x)) as u8
    }

    #[inline]
    pub fn set(&mut self, site: usize, occupied: bool) {
        let mask = 1u64 << (site & 63);
        if occupied {
            self.words[site >> 6] |= mask;
        } else {
            self.words[site >> 6] &= !mask;
        }
    }

    /// Moves a particle from `from` to the empty site `to`.
    #[inline]
    pub(crate) fn move_particle(&mut self, from: usize, to: usize) {
        debug_assert!(self.get(from) && !self.get(to));
        self.words[from >> 6] &= !(1u64 << (from & 63));
        self.words[to >> 6] |= 1u64 << (to & 63);
    }

    pub fn particle_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn particle_sites(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&s| self.get(s))
    }

    pub fn tagged(&self) -> Option<usize> {
        self.tagged
    }

    /// Net number of times the tagged particle wrapped around the ring
    /// (positive when crossing from site `L - 1` to site `0`).
    pub fn winding(&self) -> i64 {
        self.winding
    }

    /// Marks the particle at `site` as tagged and resets the winding.
    ///
    /// Panics if the site is empty.
    pub fn set_tagged(&mut self, site: usize) {
        assert!(self.get(site), "tagged site {site} is empty");
        self.tagged = Some(site);
        self.winding = 0;
    }

    pub fn clear_tagged(&mut self) {
        self.tagged = None;
        self.winding = 0;
    }

    #[inline]
    pub(crate) fn record_tagged_move(&mut self, to: usize, wrapped: i64) {
        self.tagged = Some(to);
        self.winding += wrapped;
    }

    /// Winding-corrected displacement of the tagged particle from site 0.
    pub fn tagged_displacement(&self) -> Option<i64> {
        self.tagged
            .map(|s| s as i64 + self.winding * self.len as i64)
    }

    fn check_interval(&self, a: i64, b: i64) -> Result<(), LatticeError> {
        if a > b {
            return Err(LatticeError::ReversedInterval { a, b });
        }
        if (b - a + 1) as u128 > self.len as u128 {
            return Err(LatticeError::IntervalExceedsRing { a, b, len: self.len });
        }
        Ok(())
    }

    /// Number of particles at integer coordinates in `[a, b]`.
    pub fn occupancy_sum(&self, a: i64, b: i64) -> Result<usize, LatticeError> {
        self.check_interval(a, b)?;
        Ok((a..=b).filter(|&x| self.get(self.site(x))).count())
    }

    /// Number of empty sites at integer coordinates in `[a, b]`.
    pub fn hole_count(&self, a: i64, b: i64) -> Result<usize, LatticeError> {
        let occupied = self.occupancy_sum(a, b)?;
        Ok((b - a + 1) as usize - occupied)
    }
}

/// Samples a configuration from the Bernoulli product law of density
/// `params.alpha` on a ring of `params.l` sites. Deterministic given `seed`.
///
/// Site `s` is occupied iff the `s`-th uniform draw is below `alpha`. Under
/// [`InitialLaw::BernoulliStar`] site 0 is then forced occupied and tagged;
/// the draw for site 0 is still consumed so all other sites agree with the
/// plain Bernoulli sample of the same seed.
pub fn sample_initial(law: InitialLaw, params: &SimParams, seed: u64) -> Configuration {
    let mut rng = rng_from_seed(seed);
    let mut config = Configuration::empty(params.l);
    for s in 0..params.l {
        if unit_f64(&mut rng) < params.alpha {
            config.set(s, true);
        }
    }
    if law == InitialLaw::BernoulliStar && params.l > 0 {
        config.set(0, true);
        config.set_tagged(0);
    }
    config
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(l: usize) -> SimParams {
        SimParams {
            p: 0.7,
            alpha: 0.5,
            n: 100,
            gamma: 0.0,
            l,
            time_scale: TimeScale::Hyperbolic,
            t_max: 1.0,
        }
    }

    #[test]
    fn ring_below_margin_is_rejected() {
        let v = validate_params(&params(399));
        assert!(!v.is_ok());
        assert_eq!(v.violations[0].field, "l");
        assert!(validate_params(&params(4096)).is_ok());
    }

    #[test]
    fn density_outside_unit_interval() {
        let mut p = params(4096);
        p.alpha = 1.2;
        let v = validate_params(&p);
        assert_eq!(v.violations.len(), 1);
        assert!(v.violations[0].message.contains("density"));
    }

    #[test]
    fn all_violations_reported() {
        let p = SimParams {
            p: 0.0,
            alpha: -0.1,
            n: 0,
            gamma: -1.0,
            l: 0,
            time_scale: TimeScale::Longer,
            t_max: f64::NAN,
        };
        let fields: Vec<_> = validate_params(&p).violations.iter().map(|v| v.field).collect();
        assert_eq!(fields, vec!["p", "alpha", "n", "gamma", "t_max", "l"]);
    }

    #[test]
    fn large_gamma_only_warns() {
        let mut p = params(1 << 20);
        p.time_scale = TimeScale::Longer;
        p.gamma = 0.4;
        let v = validate_params(&p);
        assert!(v.is_ok());
        assert_eq!(v.warnings.len(), 1);
    }

    #[test]
    fn extreme_densities() {
        let mut p = params(1000);
        p.alpha = 0.0;
        assert_eq!(sample_initial(InitialLaw::Bernoulli, &p, 1).particle_count(), 0);
        p.alpha = 1.0;
        assert_eq!(sample_initial(InitialLaw::Bernoulli, &p, 1).particle_count(), 1000);
    }

    #[test]
    fn sample_mean_within_binomial_bound() {
        let mut p = params(100_000);
        p.alpha = 0.5;
        let c = sample_initial(InitialLaw::Bernoulli, &p, 99);
        let mean = c.particle_count() as f64 / 1e5;
        assert!((mean - 0.5).abs() <= 4.0 * (0.25f64 / 1e5).sqrt());
    }

    #[test]
    fn star_law_tags_origin() {
        let mut p = params(64);
        p.alpha = 0.0;
        let c = sample_initial(InitialLaw::BernoulliStar, &p, 5);
        assert_eq!(c.particle_count(), 1);
        assert_eq!(c.tagged(), Some(0));
        assert_eq!(c.tagged_displacement(), Some(0));
    }

    #[test]
    fn hole_count_extremes() {
        assert_eq!(Configuration::empty(20).hole_count(0, 9).unwrap(), 10);
        assert_eq!(Configuration::full(20).hole_count(0, 9).unwrap(), 0);
        let mut p = params(100_000);
        p.alpha = 0.5;
        let c = sample_initial(InitialLaw::Bernoulli, &p, 3);
        assert_eq!(
            c.hole_count(0, 99_999).unwrap(),
            100_000 - c.particle_count()
        );
    }

    #[test]
    fn hole_count_errors() {
        let c = Configuration::empty(10);
        assert!(matches!(
            c.hole_count(0, 10),
            Err(LatticeError::IntervalExceedsRing { .. })
        ));
        assert!(matches!(
            c.hole_count(3, 2),
            Err(LatticeError::ReversedInterval { .. })
        ));
        // negative coordinates wrap
        assert_eq!(c.hole_count(-5, 4).unwrap(), 10);
    }

    #[test]
    fn star_and_plain_marginals_agree_off_origin() {
        // chi-square on the occupancy count of sites 1..8 over many samples
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut p = params(9);
        p.alpha = 0.3;
        let reps = 100_000u64;
        let mut plain = [0u64; 9];
        let mut star = [0u64; 9];
        for r in 0..reps {
            let a = sample_initial(InitialLaw::Bernoulli, &p, 2 * r);
            let b = sample_initial(InitialLaw::BernoulliStar, &p, 2 * r + 1);
            plain[a.occupancy_sum(1, 8).unwrap()] += 1;
            star[b.occupancy_sum(1, 8).unwrap()] += 1;
        }
        // two-sample chi-square homogeneity test over bins with support
        let mut stat = 0.0;
        let mut dof = 0;
        for k in 0..9 {
            let tot = (plain[k] + star[k]) as f64;
            if tot < 10.0 {
                continue;
            }
            let e = tot / 2.0;
            stat += (plain[k] as f64 - e).powi(2) / e + (star[k] as f64 - e).powi(2) / e;
            dof += 1;
        }
        let pval = 1.0 - ChiSquared::new((dof - 1) as f64).unwrap().cdf(stat);
        assert!(pval > 0.001, "p-value {pval}");
    }

    proptest! {
        #[test]
        fn holes_plus_particles_is_interval_length(seed in any::<u64>(), a in -50i64..50, w in 0i64..64) {
            let mut p = params(64);
            p.alpha = 0.4;
            let c = sample_initial(InitialLaw::Bernoulli, &p, seed);
            let b = a + w - 1;
            prop_assume!(w > 0);
            prop_assert_eq!(
                c.hole_count(a, b).unwrap() + c.occupancy_sum(a, b).unwrap(),
                (b - a + 1) as usize
            );
        }

        #[test]
        fn sampling_is_deterministic(seed in any::<u64>()) {
            let p = params(300);
            prop_assert_eq!(
                sample_initial(InitialLaw::BernoulliStar, &p, seed),
                sample_initial(InitialLaw::BernoulliStar, &p, seed)
            );
        }
    }
}
