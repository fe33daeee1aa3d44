//! Static model quantities: repetition profile, duty cycle, repetition count,
//! effective density, radial distance law and receiver noise.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{lit, rational_ceil, Real};
use crate::quadrature::Adaptive;

/// Fraction of a repetition below which the repetition count is not rounded
/// up. Keeps `N = 1` where the logistic tail is numerically zero (e.g.
/// `ψ ≈ 4e-18` at the edge of a cell whose profile midpoint lies far outside).
pub const REPETITION_SNAP: f64 = 1e-9;

/// Relative duty-cycle excess below which a profile drives the same
/// interferer process as no repetition; probabilities move by less than
/// `1e-13`.
pub const DUTY_SNAP: f64 = 1e-14;

/// Channel model for both the served link and the interferers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    PathLossOnly,
    RayleighFading,
}

/// How the receiver treats the repeated frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CombinerKind {
    /// Single transmission; ignores the repetition profile.
    NoRepetition,
    SelectionCombining,
    MaximalRatioCombining,
}

impl CombinerKind {
    pub const ALL: [CombinerKind; 3] = [
        CombinerKind::NoRepetition,
        CombinerKind::SelectionCombining,
        CombinerKind::MaximalRatioCombining,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            CombinerKind::NoRepetition => "norep",
            CombinerKind::SelectionCombining => "sc",
            CombinerKind::MaximalRatioCombining => "mrc",
        }
    }
}

impl Channel {
    pub fn short_name(self) -> &'static str {
        match self {
            Channel::PathLossOnly => "pathloss",
            Channel::RayleighFading => "fading",
        }
    }
}

/// Shape of the repetition profile function `ψ(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProfileShape<T> {
    /// `ψ(r) = 1 / (1 + exp(-(r - midpoint) / steepness))`
    Logistic { steepness: T, midpoint: T },
    /// `ψ(r) ≡ c`, `c ∈ [0, 1]`. `c = 0` is the no-repetition cell.
    Constant(T),
}

/// Distance-dependent repetition profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepetitionProfile<T> {
    shape: ProfileShape<T>,
    base_duty: T,
}

impl<T: Real> RepetitionProfile<T> {
    pub fn logistic(steepness: T, midpoint: T, base_duty: T) -> Result<Self> {
        if !(steepness > T::zero()) || !steepness.is_finite() {
            return Err(Error::invalid("a", format!("steepness must be > 0, got {steepness}")));
        }
        if !(midpoint >= T::zero()) || !midpoint.is_finite() {
            return Err(Error::invalid("b", format!("midpoint must be >= 0, got {midpoint}")));
        }
        Self::check_duty(base_duty)?;
        Ok(Self {
            shape: ProfileShape::Logistic { steepness, midpoint },
            base_duty,
        })
    }

    pub fn constant(psi: T, base_duty: T) -> Result<Self> {
        if !(psi >= T::zero() && psi <= T::one()) {
            return Err(Error::invalid(
                "psi",
                format!("constant ψ must lie in [0, 1], got {psi}"),
            ));
        }
        Self::check_duty(base_duty)?;
        Ok(Self {
            shape: ProfileShape::Constant(psi),
            base_duty,
        })
    }

    /// Profile of a cell where nobody repeats: `D(r) ≡ D_o`, `N(r) ≡ 1`.
    pub fn no_repetition(base_duty: T) -> Result<Self> {
        Self::constant(T::zero(), base_duty)
    }

    /// The same cell with repetitions switched off.
    pub fn without_repetition(&self) -> Self {
        Self {
            shape: ProfileShape::Constant(T::zero()),
            base_duty: self.base_duty,
        }
    }

    fn check_duty(d: T) -> Result<()> {
        if d > T::zero() && d <= T::one() {
            Ok(())
        } else {
            Err(Error::invalid(
                "D_o",
                format!("base duty cycle must lie in (0, 1], got {d}"),
            ))
        }
    }

    pub fn shape(&self) -> ProfileShape<T> {
        self.shape
    }

    pub fn base_duty(&self) -> T {
        self.base_duty
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.shape, ProfileShape::Constant(_))
    }

    pub fn is_no_repetition(&self) -> bool {
        matches!(self.shape, ProfileShape::Constant(c) if c == T::zero())
    }

    /// Repetition profile function `ψ(r) ∈ [0, 1]`.
    pub fn psi(&self, r: T) -> T {
        match self.shape {
            ProfileShape::Constant(c) => c,
            ProfileShape::Logistic { steepness, midpoint } => {
                let z = -(r - midpoint) / steepness;
                // exp(z) overflow saturates to ψ = 0, which is the limit
                T::one() / (T::one() + z.exp())
            }
        }
    }

    /// This profile, or the no-repetition one when `(D(r) - D_o) / D_o`
    /// stays below [`DUTY_SNAP`] on `[0, r_max]`.
    pub fn duty_equivalent(&self, r_max: T) -> Self {
        // ψ is nondecreasing, so the excess peaks at r_max
        let excess = (T::one() - self.base_duty) * self.psi(r_max);
        if excess <= self.base_duty * T::from_f64(DUTY_SNAP).expect("f64") {
            self.without_repetition()
        } else {
            *self
        }
    }

    /// Effective duty cycle `D(r) = D_o + (1 - D_o) ψ(r)`.
    pub fn duty_cycle(&self, r: T) -> T {
        self.base_duty + (T::one() - self.base_duty) * self.psi(r)
    }

    /// Repetition count `N(r) = ⌈1 + (1 - D_o)/D_o · ψ(r)⌉`.
    ///
    /// The ceiling is taken in exact rational arithmetic on the binary values
    /// of `D_o` and `ψ(r)`. Excesses within [`REPETITION_SNAP`] of an integer
    /// are not rounded up, so integer ties keep `⌈k⌉ = k`.
    pub fn repetitions(&self, r: T) -> u32 {
        self.repetitions_for_psi(self.psi(r))
    }

    pub(crate) fn repetitions_for_psi(&self, psi: T) -> u32 {
        let (Some(d), Some(p)) = (self.base_duty.to_rational(), psi.to_rational()) else {
            return 1;
        };
        let one = BigRational::one();
        let excess = (&one - &d) / &d * p;
        let floor = excess.floor();
        let snap = self.snap().to_rational().expect("finite");
        let extra: BigInt = if &excess - &floor <= snap {
            floor.to_integer()
        } else {
            rational_ceil(&excess)
        };
        (extra + BigInt::from(1)).to_u32().unwrap_or(u32::MAX)
    }

    /// Snap width: [`REPETITION_SNAP`], widened to the precision the excess
    /// is known to in `T`.
    fn snap(&self) -> T {
        let ratio = (T::one() - self.base_duty) / self.base_duty;
        lit::<T>(REPETITION_SNAP).max(lit::<T>(16.0) * T::epsilon() * ratio)
    }

    /// Largest repetition count the profile can produce, `⌈1/D_o⌉`.
    pub fn max_repetitions(&self) -> u32 {
        self.repetitions_for_psi(T::one())
    }

    /// Radii in `(0, r_max)` at which `N(r)` steps up, in increasing order.
    pub fn breakpoints(&self, r_max: T) -> Vec<T> {
        let ProfileShape::Logistic { steepness, midpoint } = self.shape else {
            return Vec::new();
        };
        let ratio = (T::one() - self.base_duty) / self.base_duty;
        if ratio <= T::zero() {
            return Vec::new();
        }
        let snap = self.snap();
        let mut out = Vec::new();
        let mut m = 0u32;
        loop {
            let target = (T::from_u32(m).expect("u32") + snap) / ratio;
            if target >= T::one() {
                break;
            }
            let r = midpoint + steepness * (target / (T::one() - target)).ln();
            if r >= r_max {
                break;
            }
            if r > T::zero() {
                out.push(r);
            }
            m += 1;
        }
        out
    }
}

/// Geometry, channel and radio constants of one cell. All powers are linear
/// (W); the SINR threshold is linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellConfig<T> {
    /// Base device density `λ_o` (devices/m²).
    pub density: T,
    /// Cell radius `R_c` (m).
    pub radius: T,
    /// Path-loss exponent `α`.
    pub path_loss_exp: T,
    /// Transmit power `P_t` (W).
    pub tx_power: T,
    /// Average noise power `σ²` (W).
    pub noise_power: T,
    /// SINR threshold `θ` (linear).
    pub threshold: T,
    pub channel: Channel,
}

impl<T: Real> CellConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, name: &'static str, what: &str, v: T| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{what}, got {v}")))
            }
        };
        check(
            self.density > T::zero(),
            "lambda_o",
            "density must be > 0",
            self.density,
        )?;
        check(self.radius > T::zero(), "R_c", "radius must be > 0", self.radius)?;
        check(
            self.path_loss_exp > lit(2.0),
            "alpha",
            "path-loss exponent must be > 2",
            self.path_loss_exp,
        )?;
        check(
            self.tx_power > T::zero(),
            "P_t",
            "transmit power must be > 0",
            self.tx_power,
        )?;
        check(
            self.noise_power >= T::zero(),
            "sigma2",
            "noise power must be >= 0",
            self.noise_power,
        )?;
        check(
            self.threshold > T::zero(),
            "theta",
            "threshold must be > 0",
            self.threshold,
        )?;
        Ok(())
    }

    /// Received power `P_t r^-α` at distance `r`.
    pub fn received_power(&self, r: T) -> T {
        self.tx_power * r.powf(-self.path_loss_exp)
    }
}

/// Effective density of active devices `λ(r) = λ_o D(r)`.
pub fn effective_density<T: Real>(r: T, prof: &RepetitionProfile<T>, cfg: &CellConfig<T>) -> T {
    cfg.density * prof.duty_cycle(r)
}

/// Cell constant `η(R_c) = ∫₀^{R_c} 2π r D(r) dr`, the normalizer of the
/// radial distance pdf. Exact for constant profiles.
pub fn cell_constant<T: Real>(prof: &RepetitionProfile<T>, cfg: &CellConfig<T>) -> Result<T> {
    let r_c = cfg.radius;
    let disk = T::PI() * r_c * r_c;
    match prof.shape {
        ProfileShape::Constant(_) => Ok(disk * prof.duty_cycle(T::zero())),
        ProfileShape::Logistic { midpoint, .. } => {
            // ∫₀¹ ψ(R ρ) ρ dρ on the unit radius
            let quad = Adaptive {
                rel_tol: lit(1e-13),
                abs_tol: lit(1e-300),
                ..Adaptive::default()
            };
            let mut breaks = vec![T::zero()];
            let mid = midpoint / r_c;
            if mid > T::zero() && mid < T::one() {
                breaks.push(mid);
            }
            breaks.push(T::one());
            let moment = quad
                .integrate_with_breaks(|rho: T| prof.psi(r_c * rho) * rho, &breaks)?
                .value;
            let d_o = prof.base_duty;
            Ok(disk * d_o + lit::<T>(2.0) * disk * (T::one() - d_o) * moment)
        }
    }
}

/// Distribution of the distance from the gNB of an active device,
/// `f_r(r) = 2π r D(r) / η(R_c)` on `[0, R_c]`.
#[derive(Debug, Clone)]
pub struct RadialLaw<T> {
    prof: RepetitionProfile<T>,
    radius: T,
    eta: T,
    /// Cumulative probability at equally spaced nodes (logistic profiles).
    table: Vec<T>,
}

impl<T: Real> RadialLaw<T> {
    const PANELS: usize = 512;

    pub fn new(prof: &RepetitionProfile<T>, cfg: &CellConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let eta = cell_constant(prof, cfg)?;
        let mut law = Self {
            prof: *prof,
            radius: cfg.radius,
            eta,
            table: Vec::new(),
        };
        if !prof.is_constant() {
            let quad = Adaptive {
                rel_tol: lit(1e-12),
                abs_tol: lit(1e-300),
                ..Adaptive::default()
            };
            let h = cfg.radius / T::from_usize(Self::PANELS).expect("usize");
            let mut acc = T::zero();
            law.table.push(acc);
            for i in 0..Self::PANELS {
                let a = h * T::from_usize(i).expect("usize");
                let b = if i + 1 == Self::PANELS { cfg.radius } else { a + h };
                acc = acc + quad.integrate(|r| law.pdf_unchecked(r), a, b)?.value;
                law.table.push(acc);
            }
        }
        Ok(law)
    }

    pub fn cell_constant(&self) -> T {
        self.eta
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    fn pdf_unchecked(&self, r: T) -> T {
        if self.prof.is_constant() {
            // D cancels against η
            lit::<T>(2.0) * r / (self.radius * self.radius)
        } else {
            lit::<T>(2.0) * T::PI() * r * self.prof.duty_cycle(r) / self.eta
        }
    }

    pub fn pdf(&self, r: T) -> Result<T> {
        if !(r >= T::zero()) || r > self.radius {
            return Err(Error::Domain {
                what: "r",
                value: r.to_f64().unwrap_or(f64::NAN),
                domain: format!("[0, {}]", self.radius),
            });
        }
        Ok(self.pdf_unchecked(r))
    }

    /// `P(distance ≤ r)`.
    pub fn cdf(&self, r: T) -> T {
        if r <= T::zero() {
            return T::zero();
        }
        if r >= self.radius {
            return T::one();
        }
        if self.prof.is_constant() {
            let x = r / self.radius;
            return x * x;
        }
        let h = self.radius / T::from_usize(Self::PANELS).expect("usize");
        let i = (r / h).floor().to_usize().unwrap_or(0).min(Self::PANELS - 1);
        let a = h * T::from_usize(i).expect("usize");
        let tail = Adaptive {
            rel_tol: lit(1e-12),
            abs_tol: lit(1e-300),
            ..Adaptive::default()
        }
        .integrate(|x| self.pdf_unchecked(x), a, r)
        .map(|v| v.value)
        .unwrap_or(T::zero());
        (self.table[i] + tail).min(T::one())
    }

    /// Inverse CDF: the distance whose cumulative probability is `u ∈ [0, 1]`.
    pub fn quantile(&self, u: T) -> T {
        let u = u.max(T::zero()).min(T::one());
        if self.prof.is_constant() {
            return self.radius * u.sqrt();
        }
        let h = self.radius / T::from_usize(Self::PANELS).expect("usize");
        let i = match self
            .table
            .binary_search_by(|p| p.partial_cmp(&u).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => return h * T::from_usize(i).expect("usize"),
            Err(i) => i.saturating_sub(1).min(Self::PANELS - 1),
        };
        let (mut lo, mut hi) = (
            h * T::from_usize(i).expect("usize"),
            (h * T::from_usize(i + 1).expect("usize")).min(self.radius),
        );
        let mut r = lit::<T>(0.5) * (lo + hi);
        for _ in 0..60 {
            let f = self.cdf(r) - u;
            if f.abs() <= lit::<T>(4.0) * T::epsilon() {
                break;
            }
            if f > T::zero() {
                hi = r;
            } else {
                lo = r;
            }
            let d = self.pdf_unchecked(r);
            let newton = r - f / d;
            r = if d > T::zero() && newton > lo && newton < hi {
                newton
            } else {
                lit::<T>(0.5) * (lo + hi)
            };
            if hi - lo <= T::epsilon() * self.radius {
                break;
            }
        }
        r
    }
}

/// Radial distance pdf at `r`. Builds the normalizer on every call; use
/// [`RadialLaw`] for repeated evaluation.
pub fn radial_pdf<T: Real>(r: T, prof: &RepetitionProfile<T>, cfg: &CellConfig<T>) -> Result<T> {
    RadialLaw::new(prof, cfg)?.pdf(r)
}

/// Thermal noise floor in dBm/Hz.
pub const THERMAL_FLOOR_DBM_PER_HZ: f64 = -174.0;

/// Receiver noise power (W) for the given bandwidth (Hz) and noise figure (dB).
pub fn noise_power<T: Real>(bandwidth_hz: T, noise_figure_db: T) -> Result<T> {
    if !(bandwidth_hz > T::zero()) {
        return Err(Error::invalid("bandwidth", format!("must be > 0, got {bandwidth_hz}")));
    }
    let dbm = lit::<T>(THERMAL_FLOOR_DBM_PER_HZ) + lit::<T>(10.0) * bandwidth_hz.log10() + noise_figure_db;
    Ok(dbm_to_watts(dbm))
}

pub fn dbm_to_watts<T: Real>(dbm: T) -> T {
    lit::<T>(10.0).powf((dbm - lit(30.0)) / lit(10.0))
}

pub fn watts_to_dbm<T: Real>(w: T) -> T {
    lit::<T>(10.0) * w.log10() + lit(30.0)
}

pub fn db_to_linear<T: Real>(db: T) -> T {
    lit::<T>(10.0).powf(db / lit(10.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table_one() -> CellConfig<f64> {
        CellConfig {
            density: 2e-4,
            radius: 1000.0,
            path_loss_exp: 3.5,
            tx_power: 0.1,
            noise_power: noise_power(180e3, 3.0).unwrap(),
            threshold: 1.0,
            channel: Channel::RayleighFading,
        }
    }

    #[test]
    fn psi_examples() {
        let p = RepetitionProfile::logistic(50.0, 1050.0, 0.01).unwrap();
        assert_eq!(p.psi(1050.0), 0.5);
        // 1/(1+e^-1), high-precision reference 0.7310585786300049
        assert_relative_eq!(p.psi(1100.0), 0.731_058_578_630_004_9, max_relative = 1e-15);
        // 1/(1+e^21) = 7.5825604279119e-10
        assert_relative_eq!(p.psi(0.0), 7.582_560_422_162_384e-10, max_relative = 1e-12);
    }

    #[test]
    fn negligible_duty_excess_collapses_to_no_repetition() {
        let far = RepetitionProfile::logistic(25.0, 2000.0, 0.01).unwrap();
        assert!(far.duty_equivalent(1000.0).is_no_repetition());
        assert!(far.duty_cycle(1000.0) > 0.01);
        let near = RepetitionProfile::logistic(25.0, 1900.0, 0.01).unwrap();
        assert_eq!(near.duty_equivalent(1000.0), near);
        assert_eq!(far.duty_equivalent(1200.0), far);
    }

    #[test]
    fn duty_cycle_examples() {
        let none = RepetitionProfile::no_repetition(0.01).unwrap();
        assert_eq!(none.duty_cycle(123.0), 0.01);
        let full = RepetitionProfile::constant(1.0, 0.01).unwrap();
        assert_eq!(full.duty_cycle(5.0), 1.0);
        let half = RepetitionProfile::constant(0.5, 0.01).unwrap();
        assert_relative_eq!(half.duty_cycle(0.0), 0.505, max_relative = 1e-15);
    }

    #[test]
    fn repetition_examples() {
        let none = RepetitionProfile::no_repetition(0.01).unwrap();
        assert_eq!(none.repetitions(900.0), 1);
        let p = RepetitionProfile::logistic(50.0, 1050.0, 0.01).unwrap();
        assert_eq!(p.repetitions(1050.0), 51);
        assert_eq!(p.repetitions(1e6), 100);
        assert_eq!(p.max_repetitions(), 100);
        // exact integer excess is not rounded up: 1 + 1 = 2
        let half = RepetitionProfile::constant(0.5, 0.5).unwrap();
        assert_eq!(half.repetitions(0.0), 2);
    }

    #[test]
    fn far_midpoint_keeps_single_transmission() {
        // ψ(1000) = e^-40 ≈ 4e-18: 1 + 99ψ rounds up in naive float math
        let p = RepetitionProfile::logistic(25.0, 2000.0, 0.01).unwrap();
        assert!((1.0f64 + 99.0 * p.psi(1000.0)).ceil() > 1.0);
        for i in 0..=1000 {
            assert_eq!(p.repetitions(i as f64), 1);
        }
        assert!(p.breakpoints(1000.0).is_empty());
    }

    #[test]
    fn breakpoints_match_steps() {
        let p = RepetitionProfile::logistic(25.0, 960.0, 0.01).unwrap();
        let bps: Vec<f64> = p.breakpoints(1000.0);
        assert!(!bps.is_empty());
        for w in bps.windows(2) {
            assert!(w[0] < w[1]);
            let mid = 0.5 * (w[0] + w[1]);
            assert_eq!(p.repetitions(mid), p.repetitions(w[0] + 1e-9 * w[0].max(1.0f64)));
        }
        for &r in &bps {
            let lo = p.repetitions(r * (1.0 - 1e-9));
            let hi = p.repetitions(r * (1.0 + 1e-9));
            assert_eq!(hi, lo + 1, "at r = {r}");
        }
    }

    #[test]
    fn effective_density_examples() {
        let cfg = table_one();
        let none = RepetitionProfile::no_repetition(0.01).unwrap();
        assert_relative_eq!(effective_density(10.0, &none, &cfg), 2e-6, max_relative = 1e-15);
        let full = RepetitionProfile::constant(1.0, 0.01).unwrap();
        assert_eq!(effective_density(10.0, &full, &cfg), 2e-4);
        let half = RepetitionProfile::constant(0.5, 0.01).unwrap();
        assert_relative_eq!(effective_density(10.0, &half, &cfg), 1.01e-4, max_relative = 1e-14);
    }

    #[test]
    fn cell_constant_closed_forms() {
        let cfg = table_one();
        let none = RepetitionProfile::no_repetition(0.01).unwrap();
        assert_eq!(cell_constant(&none, &cfg).unwrap(), std::f64::consts::PI * 1e6 * 0.01);
        let full = RepetitionProfile::constant(1.0, 0.01).unwrap();
        assert_eq!(cell_constant(&full, &cfg).unwrap(), std::f64::consts::PI * 1e6);
    }

    /// Midpoint Riemann sum with ten million cells.
    fn riemann_eta(p: &RepetitionProfile<f64>, r_c: f64) -> f64 {
        let n = 10_000_000usize;
        let h = r_c / n as f64;
        let mut acc = crate::num::KahanSum::new();
        for i in 0..n {
            let r = (i as f64 + 0.5) * h;
            acc.add(2.0 * std::f64::consts::PI * r * p.duty_cycle(r));
        }
        acc.value() * h
    }

    #[test]
    fn cell_constant_matches_riemann_oracle() {
        let cfg = table_one();
        let p = RepetitionProfile::logistic(25.0, 1300.0, 0.01).unwrap();
        let eta = cell_constant(&p, &cfg).unwrap();
        let oracle = riemann_eta(&p, 1000.0);
        assert_relative_eq!(eta, oracle, max_relative = 1e-10);
        let p = RepetitionProfile::logistic(50.0, 600.0, 0.01).unwrap();
        assert_relative_eq!(
            cell_constant(&p, &cfg).unwrap(),
            riemann_eta(&p, 1000.0),
            max_relative = 1e-10
        );
    }

    #[test]
    fn radial_pdf_examples() {
        let cfg = table_one();
        let none = RepetitionProfile::no_repetition(0.01).unwrap();
        assert_eq!(radial_pdf(500.0, &none, &cfg).unwrap(), 2.0 * 500.0 / 1e6);
        let p = RepetitionProfile::logistic(25.0, 1300.0, 0.01).unwrap();
        assert_eq!(radial_pdf(0.0, &p, &cfg).unwrap(), 0.0);
        assert!(matches!(radial_pdf(1000.5, &p, &cfg), Err(Error::Domain { .. })));
    }

    #[test]
    fn radial_law_quantile_inverts_cdf() {
        let cfg = table_one();
        let p = RepetitionProfile::logistic(25.0, 960.0, 0.01).unwrap();
        let law = RadialLaw::new(&p, &cfg).unwrap();
        assert_relative_eq!(law.cdf(1000.0), 1.0);
        for &u in &[1e-6, 0.01, 0.2, 0.5, 0.9, 0.999] {
            let r = law.quantile(u);
            assert!((law.cdf(r) - u).abs() < 1e-12, "u = {u}");
        }
    }

    #[test]
    fn noise_power_examples() {
        let w = noise_power(180e3, 3.0).unwrap();
        assert_relative_eq!(watts_to_dbm(w), -118.447_274_948_966_94, max_relative = 1e-12);
        assert!((w - 1.43e-15f64).abs() < 0.01e-15);
        assert_relative_eq!(
            watts_to_dbm(noise_power(1.0, 0.0).unwrap()),
            -174.0,
            max_relative = 1e-13
        );
        let doubled = watts_to_dbm(noise_power(360e3, 3.0).unwrap());
        assert_relative_eq!(doubled, -115.436_974_992_327_1, max_relative = 1e-12);
        assert!(noise_power(0.0, 3.0).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(RepetitionProfile::logistic(0.0, 10.0, 0.01).is_err());
        assert!(RepetitionProfile::logistic(1.0, -1.0, 0.01).is_err());
        assert!(RepetitionProfile::logistic(1.0, 1.0, 0.0).is_err());
        assert!(RepetitionProfile::logistic(1.0, 1.0, 1.5).is_err());
        let mut cfg = table_one();
        cfg.path_loss_exp = 2.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn single_precision_model() {
        let p = RepetitionProfile::<f32>::logistic(50.0, 1050.0, 0.01).unwrap();
        assert_eq!(p.psi(1050.0), 0.5);
        assert_eq!(p.repetitions(1050.0), 51);
        assert_eq!(p.max_repetitions(), 100);
    }

    fn profiles() -> impl Strategy<Value = RepetitionProfile<f64>> {
        (1.0f64..200.0, 0.0f64..2500.0, 0.001f64..1.0)
            .prop_map(|(a, b, d)| RepetitionProfile::logistic(a, b, d).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn psi_is_monotone(p in profiles(), r1 in 0.0f64..3000.0, dr in 0.0f64..500.0) {
            let (lo, hi) = (p.psi(r1), p.psi(r1 + dr));
            prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
            prop_assert!(lo <= hi);
        }

        #[test]
        fn repetitions_are_bounded_and_nondecreasing(p in profiles()) {
            let max = p.max_repetitions();
            let mut prev = 1;
            let mut distinct = std::collections::BTreeSet::new();
            for i in 0..=3000 {
                let n = p.repetitions(i as f64);
                prop_assert!(n >= prev && n >= 1 && n <= max);
                distinct.insert(n);
                prev = n;
            }
            prop_assert!(distinct.len() as u32 <= max);
            let d = p.duty_cycle(700.0);
            prop_assert!(d >= p.base_duty() && d <= 1.0);
        }

        #[test]
        fn radial_pdf_is_normalized(p in profiles()) {
            let cfg = table_one();
            let law = RadialLaw::new(&p, &cfg).unwrap();
            let quad = Adaptive { rel_tol: 1e-12, abs_tol: 1e-300, ..Adaptive::default() };
            let total = quad.integrate(|r| law.pdf(r).unwrap(), 0.0, 1000.0).unwrap().value;
            prop_assert!((total - 1.0).abs() < 1e-9, "total = {}", total);
        }
    }
}
