//! Aggregate interference at the gNB.
//!
//! Active interferers form an inhomogeneous PPP of intensity `λ_o D(r)` on the
//! cell disk. The received interference `I = Σ P_t h_i r_i^-α` has Laplace
//! transform `L(s) = exp(-E(s))` with
//!
//! ```text
//! E(s) = 2π λ_o ∫₀^{R_c} (1 - k(s, r)) D(r) r dr,
//! k(s, r) = E_h[exp(-s P_t h r^-α)],
//! ```
//!
//! where `k = exp(-s P_t r^-α)` without fading and `k = r^α / (r^α + s P_t)`
//! under Rayleigh fading. `I` has an atom at zero of mass
//! `exp(-λ_o η(R_c))`, the void probability of the active process.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inversion::{exp_m1, EulerInverter, TransformedLaw, DEFAULT_TERMS, MAX_PRECISION_SAFE_TERMS};
use crate::model::{cell_constant, CellConfig, Channel, ProfileShape, RepetitionProfile};
use crate::num::{from_usize, lit, Real};
use crate::quadrature::Adaptive;

pub const DEFAULT_QUAD_TOL: f64 = 1e-9;
pub const DEFAULT_GRID_SIZE: usize = 256;
pub const MIN_GRID_SIZE: usize = 64;

/// Probability margin at either end of the cached range.
pub const DEFAULT_CACHE_TAIL: f64 = 1e-4;
/// Decreases between consecutive cache nodes up to this size are absorbed by
/// the monotone post-pass; larger ones trigger a rebuild.
const MONOTONE_SLACK: f64 = 1e-7;
const CACHE_ATTEMPTS: usize = 3;
/// Raw inversions outside `[atom0, 1]` by more than this are reported.
const OVERSHOOT_WARN: f64 = 0.01;

/// Everything needed to evaluate the interference Laplace transform.
#[derive(Debug, Clone)]
pub struct LaplaceSpec<T> {
    profile: RepetitionProfile<T>,
    cell: CellConfig<T>,
    quad_tol: T,
    /// `λ_o η(R_c)`, the mean number of active interferers.
    mean_active: T,
}

impl<T: Real> LaplaceSpec<T> {
    /// The channel model is taken from `cell.channel`. A profile whose duty
    /// cycle never leaves `D_o` by more than an ulp inside the cell is stored
    /// as the no-repetition profile.
    pub fn new(profile: RepetitionProfile<T>, cell: CellConfig<T>, quad_tol: T) -> Result<Self> {
        cell.validate()?;
        let profile = profile.duty_equivalent(cell.radius);
        if !(quad_tol > T::zero() && quad_tol <= lit(1e-3)) {
            return Err(Error::invalid(
                "quad_tol",
                format!("must lie in (0, 1e-3], got {quad_tol}"),
            ));
        }
        let mean_active = cell.density * cell_constant(&profile, &cell)?;
        Ok(Self {
            profile,
            cell,
            quad_tol,
            mean_active,
        })
    }

    pub fn with_default_tolerance(profile: RepetitionProfile<T>, cell: CellConfig<T>) -> Result<Self> {
        Self::new(profile, cell, lit(DEFAULT_QUAD_TOL))
    }

    pub fn with_quad_tol(&self, quad_tol: T) -> Result<Self> {
        Self::new(self.profile, self.cell, quad_tol)
    }

    pub fn channel(&self) -> Channel {
        self.cell.channel
    }

    pub fn profile(&self) -> &RepetitionProfile<T> {
        &self.profile
    }

    pub fn cell(&self) -> &CellConfig<T> {
        &self.cell
    }

    pub fn quad_tol(&self) -> T {
        self.quad_tol
    }

    pub fn mean_active(&self) -> T {
        self.mean_active
    }

    /// `P(I = 0)`.
    pub fn atom0(&self) -> T {
        (-self.mean_active).exp()
    }

    /// `L_I(s)` for `Re(s) ≥ 0`, where `I` is the received interference power.
    pub fn laplace_transform(&self, s: Complex<T>) -> Result<Complex<T>> {
        if s == Complex::new(T::zero(), T::zero()) {
            return Ok(Complex::new(T::one(), T::zero()));
        }
        Ok((-self.exponent(s)?).exp())
    }

    /// `E(s) = -ln L_I(s)`.
    pub fn exponent(&self, s: Complex<T>) -> Result<Complex<T>> {
        if s.re < T::zero() || !s.re.is_finite() || !s.im.is_finite() {
            return Err(Error::Domain {
                what: "Re(s)",
                value: s.re.to_f64().unwrap_or(f64::NAN),
                domain: "[0, inf)".into(),
            });
        }
        let zero = Complex::new(T::zero(), T::zero());
        if s == zero {
            return Ok(zero);
        }
        let r_c = self.cell.radius;
        let alpha = self.cell.path_loss_exp;
        let z = s * self.cell.tx_power;
        let inv_alpha = alpha.recip();

        // Below ρ_cut the path-loss kernel exp(-z r^-α) is negligible or
        // oscillates too fast to resolve; its mean there is zero.
        let rho_cut = match self.cell.channel {
            Channel::PathLossOnly => {
                let damped = (z.re / lit(50.0)).powf(inv_alpha);
                let oscillating = (z.norm() / lit(1e4)).powf(inv_alpha);
                (damped.max(oscillating) / r_c).min(T::one())
            }
            Channel::RayleighFading => T::zero(),
        };
        let mut breaks = vec![T::zero(), T::one(), rho_cut];
        let transition = z.norm().powf(inv_alpha) / r_c;
        if transition > rho_cut {
            breaks.push(transition);
        }
        if let ProfileShape::Logistic { midpoint, .. } = self.profile.shape() {
            breaks.push(midpoint / r_c);
        }
        breaks.retain(|&p| p >= T::zero() && p <= T::one());
        breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        breaks.dedup();

        let one = Complex::new(T::one(), T::zero());
        let channel = self.cell.channel;
        let integrand = |rho: T| -> Complex<T> {
            let r = r_c * rho;
            let duty = self.profile.duty_cycle(r);
            let complement = match channel {
                Channel::PathLossOnly if rho <= rho_cut => one,
                Channel::PathLossOnly => -exp_m1(-z * r.powf(-alpha)),
                Channel::RayleighFading => z / (z + r.powf(alpha)),
            };
            complement * (duty * rho)
        };
        // absolute floor 1e-14 at the default tolerance, tightening with it
        let quad = Adaptive {
            rel_tol: self.quad_tol,
            abs_tol: self.quad_tol * lit(1e-5),
            ..Adaptive::default()
        };
        let integral = quad.integrate_with_breaks(integrand, &breaks)?.value;
        Ok(integral * (lit::<T>(2.0) * T::PI() * self.cell.density * r_c * r_c))
    }

    /// Smallest nonzero value of `I`: one interferer at the cell edge without
    /// fading, zero under fading.
    pub fn min_positive_level(&self) -> T {
        match self.cell.channel {
            Channel::PathLossOnly => self.cell.received_power(self.cell.radius),
            Channel::RayleighFading => T::zero(),
        }
    }

    /// `e^(s d) (λη - E(s))` for the path-loss channel, with `d` the
    /// minimum level, integrated directly so that no cancellation occurs when
    /// `E(s)` approaches `λη`. Only interferers close to the edge contribute
    /// for large `s`, so the integral runs over `u = 1 - r/R_c`.
    fn shifted_gap(&self, s: Complex<T>) -> Result<Complex<T>> {
        let r_c = self.cell.radius;
        let alpha = self.cell.path_loss_exp;
        let q = s * self.min_positive_level();
        let inv_alpha = alpha.recip();
        // u where (1 - u)^-α - 1 reaches v
        let u_at = |v: T| -(-(v.ln_1p()) * inv_alpha).exp_m1();
        // beyond this the kernel is negligible or averages out
        let v_cut = (lit::<T>(50.0) / q.re).min(lit::<T>(1e4) / q.norm());
        let u_cut = u_at(v_cut);
        let mut breaks = vec![T::zero(), u_cut];
        let u_tr = u_at(q.norm().recip());
        if u_tr < u_cut {
            breaks.push(u_tr);
        }
        if let ProfileShape::Logistic { midpoint, .. } = self.profile.shape() {
            let u_mid = T::one() - midpoint / r_c;
            if u_mid > T::zero() && u_mid < u_cut {
                breaks.push(u_mid);
            }
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        breaks.dedup();
        let integrand = |u: T| -> Complex<T> {
            let rho = T::one() - u;
            let excess = (-alpha * (-u).ln_1p()).exp_m1();
            (-q * excess).exp() * (self.profile.duty_cycle(r_c * rho) * rho)
        };
        let quad = Adaptive {
            rel_tol: self.quad_tol,
            abs_tol: self.quad_tol * lit(1e-5) * u_cut,
            ..Adaptive::default()
        };
        let integral = quad.integrate_with_breaks(integrand, &breaks)?.value;
        Ok(integral * (lit::<T>(2.0) * T::PI() * self.cell.density * r_c * r_c))
    }
}

/// Free-function form of [`LaplaceSpec::laplace_transform`].
pub fn laplace_transform<T: Real>(s: Complex<T>, spec: &LaplaceSpec<T>) -> Result<Complex<T>> {
    spec.laplace_transform(s)
}

impl<T: Real> TransformedLaw<T> for LaplaceSpec<T> {
    fn transform(&self, s: Complex<T>) -> Result<Complex<T>> {
        self.laplace_transform(s)
    }

    fn atom(&self) -> T {
        self.atom0()
    }

    fn delay(&self) -> T {
        self.min_positive_level()
    }

    fn continuous_transform(&self, s: Complex<T>) -> Result<Complex<T>> {
        // e^(s d) (L - atom0) with L - atom0 = atom0 (exp(λη - E) - 1)
        let q = s * self.min_positive_level();
        if q.re > T::one() {
            let shifted = self.shifted_gap(s)?;
            let gap = shifted * (-q).exp();
            let ratio = if gap.norm() < T::one() {
                // (e^g - 1) / g; the series avoids dividing subnormals
                let phi = if gap.norm() < lit(1e-8) {
                    gap * lit::<T>(0.5) + T::one()
                } else {
                    exp_m1(gap) / gap
                };
                phi * self.atom0()
            } else {
                ((gap - self.mean_active).exp() - self.atom0()) / gap
            };
            return Ok(shifted * ratio);
        }
        let gap = Complex::new(self.mean_active, T::zero()) - self.exponent(s)?;
        let rest = if gap.norm() < T::one() {
            exp_m1(gap) * self.atom0()
        } else {
            (gap - self.mean_active).exp() - self.atom0()
        };
        Ok(if q.re == T::zero() && q.im == T::zero() {
            rest
        } else {
            rest * q.exp()
        })
    }
}

/// Shape-preserving piecewise cubic (Fritsch–Carlson/PCHIP) in `ln x`.
#[derive(Debug, Clone)]
struct MonotoneCache<T> {
    ln_x: Vec<T>,
    f: Vec<T>,
    slope: Vec<T>,
}

impl<T: Real> MonotoneCache<T> {
    fn new(ln_x: Vec<T>, f: Vec<T>) -> Self {
        let n = ln_x.len();
        let h: Vec<T> = ln_x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<T> = (0..n - 1).map(|k| (f[k + 1] - f[k]) / h[k]).collect();
        let mut slope = vec![T::zero(); n];
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] > T::zero() {
                let w1 = lit::<T>(2.0) * h[k] + h[k - 1];
                let w2 = h[k] + lit::<T>(2.0) * h[k - 1];
                slope[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        slope[0] = Self::edge(h[0], h[1], delta[0], delta[1]);
        slope[n - 1] = Self::edge(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Self { ln_x, f, slope }
    }

    /// One-sided three-point slope, limited to keep the end interval monotone.
    fn edge(h0: T, h1: T, d0: T, d1: T) -> T {
        let d = ((lit::<T>(2.0) * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if d * d0 <= T::zero() {
            T::zero()
        } else if d0 * d1 <= T::zero() && d.abs() > lit::<T>(3.0) * d0.abs() {
            lit::<T>(3.0) * d0
        } else {
            d
        }
    }

    /// `x` at which the interpolant reaches `p`, if inside the grid.
    fn level_at(&self, p: T) -> Option<T> {
        let n = self.f.len();
        if !(p >= self.f[0] && p <= self.f[n - 1]) {
            return None;
        }
        let (mut a, mut b) = (self.ln_x[0], self.ln_x[n - 1]);
        for _ in 0..64 {
            let mid = (a + b) * lit(0.5);
            if self.eval(mid) < p {
                a = mid;
            } else {
                b = mid;
            }
        }
        Some(b.exp())
    }

    fn range(&self) -> (T, T) {
        (self.ln_x[0].exp(), self.ln_x[self.ln_x.len() - 1].exp())
    }

    fn eval(&self, ln_x: T) -> T {
        let n = self.ln_x.len();
        let k = match self
            .ln_x
            .binary_search_by(|p| p.partial_cmp(&ln_x).expect("finite grid"))
        {
            Ok(i) => return self.f[i],
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let h = self.ln_x[k + 1] - self.ln_x[k];
        let t = (ln_x - self.ln_x[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let two = lit::<T>(2.0);
        let three = lit::<T>(3.0);
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + t;
        let h01 = three * t2 - two * t3;
        let h11 = t3 - t2;
        h00 * self.f[k] + h10 * h * self.slope[k] + h01 * self.f[k + 1] + h11 * h * self.slope[k + 1]
    }
}

/// CDF of the aggregate interference, by numerical Laplace inversion with an
/// optional interpolating cache.
#[derive(Debug, Clone)]
pub struct InterferenceCdf<T> {
    spec: LaplaceSpec<T>,
    inverter: EulerInverter<T>,
    x_eps: T,
    cache: Option<MonotoneCache<T>>,
    median: Option<T>,
}

impl<T: Real> InterferenceCdf<T> {
    /// Direct (uncached) evaluator with `inversion_terms` Euler terms.
    pub fn new(spec: LaplaceSpec<T>, inversion_terms: usize) -> Result<Self> {
        let inverter = EulerInverter::new(inversion_terms)?;
        let cell = spec.cell();
        let x_eps = lit::<T>(1e-12) * cell.received_power(cell.radius);
        Ok(Self {
            spec,
            inverter,
            x_eps,
            cache: None,
            median: None,
        })
    }

    pub fn spec(&self) -> &LaplaceSpec<T> {
        &self.spec
    }

    pub fn channel(&self) -> Channel {
        self.spec.channel()
    }

    pub fn atom0(&self) -> T {
        self.spec.atom0()
    }

    pub fn inversion_terms(&self) -> usize {
        self.inverter.terms()
    }

    /// Below this power the CDF is reported as `atom0`.
    pub fn x_eps(&self) -> T {
        self.x_eps
    }

    /// `(x_lo, x_hi)` of the cached grid, if any.
    pub fn cache_range(&self) -> Option<(T, T)> {
        self.cache.as_ref().map(MonotoneCache::range)
    }

    /// `(x_lo, F(x_lo))` at the lower end of the cache: below `x_lo` the CDF
    /// lies between `atom0` and `F(x_lo)`.
    pub fn cache_floor(&self) -> Option<(T, T)> {
        self.cache.as_ref().map(|c| (c.ln_x[0].exp(), c.f[0]))
    }

    /// Median of `I` read off the cache, when the cache covers it.
    pub fn median(&self) -> Option<T> {
        self.median
    }

    /// Unclamped Euler inversion at `x > 0`.
    pub fn invert_raw(&self, x: T) -> Result<T> {
        self.inverter.cdf(&self.spec, x)
    }

    /// Direct inversion, clamped to `[atom0, 1]`.
    pub fn invert(&self, x: T) -> Result<T> {
        if x < T::zero() {
            return Ok(T::zero());
        }
        let atom0 = self.atom0();
        if x < self.x_eps || x == T::zero() {
            return Ok(atom0);
        }
        let raw = self.invert_raw(x)?;
        if !raw.is_finite() {
            return Err(Error::Domain {
                what: "inverted CDF",
                value: raw.to_f64().unwrap_or(f64::NAN),
                domain: "[0, 1]".into(),
            });
        }
        let slack = lit::<T>(OVERSHOOT_WARN);
        if raw < atom0 - slack || raw > T::one() + slack {
            log::warn!(
                "interference CDF inversion at x = {x:e} gave {raw:e}, outside [{atom0:e}, 1]; \
                 inversion_terms = {} may be too low",
                self.inversion_terms()
            );
        }
        Ok(raw.max(atom0).min(T::one()))
    }

    /// `F_I(x)`, from the cache when `x` lies inside its range.
    pub fn eval(&self, x: T) -> Result<T> {
        if let Some(cache) = &self.cache {
            let (lo, hi) = cache.range();
            if x >= lo && x <= hi {
                let v = cache.eval(x.ln());
                return Ok(v.max(self.atom0()).min(T::one()));
            }
        }
        self.invert(x)
    }

    /// Smallest `x` with `F_I(x) ≥ p` located by bisection in `ln x`, for
    /// `atom0 < p < 1`.
    pub fn quantile(&self, p: T) -> Result<T> {
        if !(p > self.atom0() && p < T::one()) {
            return Err(Error::Domain {
                what: "p",
                value: p.to_f64().unwrap_or(f64::NAN),
                domain: "(atom0, 1)".into(),
            });
        }
        let cell = self.spec.cell();
        let ten = lit::<T>(10.0);
        let mut lo = cell.received_power(cell.radius);
        let mut hi = lo;
        let mut steps = 0;
        while self.invert(lo)? >= p {
            lo = lo / ten;
            steps += 1;
            if steps > 60 || lo < self.x_eps {
                return Ok(self.x_eps);
            }
        }
        while self.invert(hi)? < p {
            hi = hi * ten;
            steps += 1;
            if steps > 120 {
                return Err(Error::Inconsistent(format!("no quantile for p = {p} below x = {hi:e}")));
            }
        }
        let (mut a, mut b) = (lo.ln(), hi.ln());
        for _ in 0..48 {
            let mid = (a + b) * lit(0.5);
            if self.invert(mid.exp())? < p {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(b.exp())
    }

    /// Builds the interpolating cache on `grid_size` log-spaced nodes.
    ///
    /// If the inverted node sequence decreases by more than a rounding-level
    /// slack, the build is retried with more Euler terms (up to the
    /// precision-safe maximum) or else a tighter quadrature tolerance.
    pub fn with_cache(self, grid_size: usize) -> Result<Self> {
        self.with_cache_spanning(grid_size, lit(DEFAULT_CACHE_TAIL))
    }

    /// Like [`with_cache`](Self::with_cache), with the grid spanning
    /// `F ∈ [atom0 + tail, 1 - tail]`. A smaller `tail` trades build time for
    /// fewer direct inversions when `F` is queried far out in its tails.
    pub fn with_cache_spanning(self, grid_size: usize, tail: T) -> Result<Self> {
        if !(tail > T::zero() && tail <= lit(1e-2)) {
            return Err(Error::invalid("tail", format!("must lie in (0, 1e-2], got {tail}")));
        }
        if grid_size < MIN_GRID_SIZE {
            return Err(Error::invalid(
                "grid_size",
                format!("need at least {MIN_GRID_SIZE}, got {grid_size}"),
            ));
        }
        let mut cdf = Self {
            cache: None,
            median: None,
            ..self
        };
        let atom0 = cdf.atom0();
        if atom0 + tail >= T::one() - tail {
            // essentially no interference: nothing to interpolate
            return Ok(cdf);
        }
        let mut last_failure = String::new();
        for attempt in 0..CACHE_ATTEMPTS {
            if attempt > 0 {
                cdf = cdf.escalated()?;
            }
            let x_lo = cdf.quantile(atom0 + tail)?;
            let x_hi = cdf.quantile(T::one() - tail)?;
            let (a, b) = (x_lo.ln(), x_hi.ln());
            let step = (b - a) / from_usize::<T>(grid_size - 1);
            let ln_x: Vec<T> = (0..grid_size)
                .map(|i| {
                    if i + 1 == grid_size {
                        b
                    } else {
                        a + step * from_usize::<T>(i)
                    }
                })
                .collect();
            let mut f = ln_x
                .par_iter()
                .map(|&l| cdf.invert(l.exp()))
                .collect::<Result<Vec<T>>>()?;
            let slack = lit::<T>(MONOTONE_SLACK);
            let worst = f
                .windows(2)
                .enumerate()
                .map(|(i, w)| (i, w[0] - w[1]))
                .fold((0, T::zero()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if worst.1 > slack {
                last_failure = format!(
                    "F decreased by {:e} at x = {:e} (inversion_terms = {}, quad_tol = {:e})",
                    worst.1,
                    ln_x[worst.0].exp(),
                    cdf.inversion_terms(),
                    cdf.spec.quad_tol()
                );
                log::debug!("interference cache attempt {} failed: {last_failure}", attempt + 1);
                continue;
            }
            for i in 1..f.len() {
                f[i] = f[i].max(f[i - 1]);
            }
            let cache = MonotoneCache::new(ln_x, f);
            cdf.median = cache.level_at(lit(0.5));
            cdf.cache = Some(cache);
            return Ok(cdf);
        }
        Err(Error::CacheBuild {
            attempts: CACHE_ATTEMPTS,
            reason: last_failure,
        })
    }

    fn escalated(&self) -> Result<Self> {
        let terms = self.inversion_terms();
        if terms < MAX_PRECISION_SAFE_TERMS {
            let m = ((terms - 1) / 2 * 2).min((MAX_PRECISION_SAFE_TERMS - 1) / 2);
            return Self::new(self.spec.clone(), 2 * m + 1);
        }
        let tol = (self.spec.quad_tol() * lit(1e-2)).max(lit(1e-14));
        Self::new(self.spec.with_quad_tol(tol)?, terms)
    }
}

/// `F_I(x)` by direct inversion, clamped to `[atom0, 1]`.
pub fn invert_cdf<T: Real>(x: T, cdf: &InterferenceCdf<T>) -> Result<T> {
    cdf.invert(x)
}

/// Interference CDF with the default Euler depth and a cache of `grid_size`
/// nodes.
pub fn build_cache<T: Real>(spec: LaplaceSpec<T>, grid_size: usize) -> Result<InterferenceCdf<T>> {
    InterferenceCdf::new(spec, DEFAULT_TERMS)?.with_cache(grid_size)
}
