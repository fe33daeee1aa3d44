//! Conditional and cell-average success probability.
//!
//! A transmission from distance `r` succeeds when
//! `P_t h r^-α / (I + σ²) > θ`, i.e. when `I < P_t h r^-α / θ - σ²`, so every
//! success probability is an expectation of `F_I` over the fading.
//!
//! Selection combining multiplies per-repetition failure probabilities, which
//! treats the interference seen by the repetitions as independent. Maximal
//! ratio combining sums the fading of all repetitions against one shared
//! interference draw. The two schemes thus rest on different interference
//! models; both are implemented as stated and the Monte Carlo oracle mirrors
//! each one separately.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interference::InterferenceCdf;
use crate::model::{CellConfig, Channel, CombinerKind, RadialLaw, RepetitionProfile};
use crate::num::{from_usize, lit, Real};
use crate::quadrature::{Adaptive, GammaRule};

/// Gauss–Laguerre nodes per expectation.
pub const DEFAULT_NODES: usize = 64;
/// Largest gamma shape handled by a Gauss–Laguerre rule; beyond it the
/// expectation is integrated adaptively.
pub const MAX_RULE_SHAPE: usize = 60;

/// How expectations over the fading gain are computed.
///
/// `F_I` has a power-law upper tail, so `u ↦ F_I(c u)` is smooth in `ln u`
/// but not polynomial-like in `u`: when the rise of `F_I(c u)` falls below the
/// first Gauss–Laguerre node the rule misses it. The adaptive default
/// integrates in `ln u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum FadingQuadrature {
    #[default]
    AdaptiveLog,
    /// Gauss–Laguerre matched to the gamma weight. Falls back to the adaptive
    /// rule for shapes above [`MAX_RULE_SHAPE`].
    GaussLaguerre { nodes: usize },
}

/// A distribution of the aggregate interference.
pub trait InterferenceLaw<T: Real>: Sync {
    /// `P(I ≤ x)`.
    fn cdf(&self, x: T) -> Result<T>;
    fn channel(&self) -> Channel;
    /// Repetition profile of the interferer field.
    fn profile(&self) -> &RepetitionProfile<T>;
    /// A representative interference power (e.g. the median), used to place
    /// quadrature panels. `None` when unknown.
    fn typical_level(&self) -> Option<T> {
        None
    }
    /// A known bound `F(x) ∈ [low, high]` for `0 ≤ x ≤ end`.
    fn floor_bound(&self) -> Option<FloorBound<T>> {
        None
    }
}

/// `F(x) ∈ [low, high]` for `0 ≤ x ≤ end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorBound<T> {
    pub end: T,
    pub low: T,
    pub high: T,
}

/// Largest absolute error accepted when an integral over the floor region is
/// replaced by the midpoint of its bound.
const FLOOR_SLACK: f64 = 1e-10;

impl<T: Real> InterferenceLaw<T> for InterferenceCdf<T> {
    fn cdf(&self, x: T) -> Result<T> {
        if x.is_infinite() && x > T::zero() {
            return Ok(T::one());
        }
        self.eval(x)
    }

    fn channel(&self) -> Channel {
        InterferenceCdf::channel(self)
    }

    fn profile(&self) -> &RepetitionProfile<T> {
        self.spec().profile()
    }

    fn typical_level(&self) -> Option<T> {
        self.median()
    }

    fn floor_bound(&self) -> Option<FloorBound<T>> {
        self.cache_floor().map(|(end, high)| FloorBound {
            end,
            low: self.atom0(),
            high,
        })
    }
}

/// One point of a coverage curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoveragePoint<T> {
    pub r: T,
    pub repetitions: u32,
    pub p: T,
}

/// Success-probability evaluator for one cell, profile and interference law.
pub struct Coverage<'a, T: Real, L> {
    profile: &'a RepetitionProfile<T>,
    cell: &'a CellConfig<T>,
    law: &'a L,
    quadrature: FadingQuadrature,
    rules: Vec<OnceLock<GammaRule<T>>>,
}

impl<'a, T: Real, L: InterferenceLaw<T>> Coverage<'a, T, L> {
    pub fn new(profile: &'a RepetitionProfile<T>, cell: &'a CellConfig<T>, law: &'a L) -> Result<Self> {
        cell.validate()?;
        if law.channel() != cell.channel {
            return Err(Error::Inconsistent(format!(
                "interference law is for {:?} but the cell uses {:?}",
                law.channel(),
                cell.channel
            )));
        }
        Ok(Self {
            profile,
            cell,
            law,
            quadrature: FadingQuadrature::default(),
            rules: (0..MAX_RULE_SHAPE).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn with_quadrature(mut self, quadrature: FadingQuadrature) -> Result<Self> {
        if quadrature == (FadingQuadrature::GaussLaguerre { nodes: 0 }) {
            return Err(Error::invalid("nodes", "need at least one node"));
        }
        self.quadrature = quadrature;
        self.rules = (0..MAX_RULE_SHAPE).map(|_| OnceLock::new()).collect();
        Ok(self)
    }

    pub fn profile(&self) -> &RepetitionProfile<T> {
        self.profile
    }

    pub fn cell(&self) -> &CellConfig<T> {
        self.cell
    }

    pub fn law(&self) -> &L {
        self.law
    }

    fn rule(&self, shape: usize) -> Result<&GammaRule<T>> {
        let slot = &self.rules[shape - 1];
        if let Some(rule) = slot.get() {
            return Ok(rule);
        }
        let nodes = match self.quadrature {
            FadingQuadrature::GaussLaguerre { nodes } => nodes,
            FadingQuadrature::AdaptiveLog => DEFAULT_NODES,
        };
        let rule = GammaRule::new(nodes, shape)?;
        Ok(slot.get_or_init(|| rule))
    }

    fn check_radius(&self, r: T) -> Result<()> {
        if r > T::zero() && r <= self.cell.radius {
            Ok(())
        } else {
            Err(Error::Domain {
                what: "r_o",
                value: r.to_f64().unwrap_or(f64::NAN),
                domain: format!("(0, {}]", self.cell.radius),
            })
        }
    }

    /// `P_t r^-α / θ`: the interference level a unit fading gain can beat.
    fn margin(&self, r: T) -> T {
        self.cell.received_power(r) / self.cell.threshold
    }

    /// Single-transmission success probability `p|r(1)`.
    pub fn p_single(&self, r: T) -> Result<T> {
        self.check_radius(r)?;
        let c = self.margin(r);
        let sigma2 = self.cell.noise_power;
        let p = match self.cell.channel {
            Channel::PathLossOnly => self.law.cdf(c - sigma2)?,
            Channel::RayleighFading => {
                // E[F(c h - σ²)], h ~ Exp(1); substituting h = σ²/c + v moves
                // the jump of F at zero onto the weight's endpoint.
                let shift = (-sigma2 / c).exp();
                if shift == T::zero() {
                    T::zero()
                } else {
                    shift * self.fading_expectation(1, T::zero(), c, |v| self.law.cdf(c * v))?
                }
            }
        };
        Ok(clamp_unit(p))
    }

    /// Selection combining over `n` repetitions.
    pub fn p_sc(&self, r: T, n: u32) -> Result<T> {
        check_count(n)?;
        Ok(sc_from_single(self.p_single(r)?, n))
    }

    /// Maximal ratio combining over `n` repetitions.
    pub fn p_mrc(&self, r: T, n: u32) -> Result<T> {
        check_count(n)?;
        if n == 1 {
            return self.p_single(r);
        }
        self.check_radius(r)?;
        let c = self.margin(r);
        let sigma2 = self.cell.noise_power;
        let nf = T::from_u32(n).expect("u32");
        let p = match self.cell.channel {
            Channel::PathLossOnly => self.law.cdf(nf * c - sigma2)?,
            Channel::RayleighFading => {
                let u0 = sigma2 / c;
                self.fading_expectation(n, u0, c, |u| self.law.cdf(c * u - sigma2))?
            }
        };
        Ok(clamp_unit(p))
    }

    /// `E[φ(G)]` for `G ~ gamma(n, 1)`, where `φ(u)` vanishes below `lower`
    /// and depends on `u` through the interference level `scale · u`.
    fn fading_expectation<F>(&self, n: u32, lower: T, scale: T, phi: F) -> Result<T>
    where
        F: Fn(T) -> Result<T>,
    {
        let shape = n as usize;
        let rule_ok = shape <= MAX_RULE_SHAPE && gamma_lower_regularized(n, lower) <= lit(1e-13);
        match self.quadrature {
            FadingQuadrature::GaussLaguerre { .. } if rule_ok => {
                self.rule(shape)?
                    .try_expectation(|u| if u < lower { Ok(T::zero()) } else { phi(u) })
            }
            _ => {
                // far below the typical interference level F is nearly flat
                let knee = self.law.typical_level().map(|m| lit::<T>(1e-3) * m / scale);
                let sigma2 = if lower > T::zero() {
                    self.cell.noise_power
                } else {
                    T::zero()
                };
                let floor = self.law.floor_bound().map(|b| FloorBound {
                    end: (b.end + sigma2) / scale,
                    ..b
                });
                log_space_expectation(n, lower, floor, knee, phi)
            }
        }
    }

    /// Repetition count used by `combiner` at `r`.
    pub fn repetitions(&self, combiner: CombinerKind, r: T) -> u32 {
        match combiner {
            CombinerKind::NoRepetition => 1,
            _ => self.profile.repetitions(r),
        }
    }

    /// Success probability for `combiner` at `r` with `N` from the profile
    /// (or `n` when given).
    pub fn success(&self, combiner: CombinerKind, r: T, n: Option<u32>) -> Result<T> {
        match combiner {
            CombinerKind::NoRepetition => {
                if !self.law.profile().is_no_repetition() {
                    return Err(Error::Inconsistent(
                        "no-repetition coverage needs an interference law built with D(r) = D_o".into(),
                    ));
                }
                self.p_single(r)
            }
            CombinerKind::SelectionCombining => self.p_sc(r, n.unwrap_or_else(|| self.profile.repetitions(r))),
            CombinerKind::MaximalRatioCombining => self.p_mrc(r, n.unwrap_or_else(|| self.profile.repetitions(r))),
        }
    }

    /// Success probability along `r_grid`, evaluated in parallel.
    pub fn curve(&self, combiner: CombinerKind, r_grid: &[T]) -> Result<Vec<CoveragePoint<T>>> {
        r_grid
            .par_iter()
            .map(|&r| {
                let p = self
                    .success(combiner, r, None)
                    .map_err(|e| e.at_radius(r.to_f64().unwrap_or(f64::NAN)))?;
                Ok(CoveragePoint {
                    r,
                    repetitions: self.repetitions(combiner, r),
                    p,
                })
            })
            .collect()
    }

    /// `∫₀^{R_c} p(r) f_r(r) dr`.
    pub fn cell_average(&self, combiner: CombinerKind) -> Result<T> {
        Ok(clamp_unit(self.cell_expectation(combiner, |_, p| p)?))
    }

    /// `∫₀^{R_c} g(N(r), p(r)) f_r(r) dr`, integrated panel by panel between
    /// the radii where `N` steps. `f_r` uses `D ≡ D_o` for no repetition.
    pub fn cell_expectation<G>(&self, combiner: CombinerKind, g: G) -> Result<T>
    where
        G: Fn(u32, T) -> T + Sync,
    {
        let profile = match combiner {
            CombinerKind::NoRepetition => self.profile.without_repetition(),
            _ => *self.profile,
        };
        let radial = RadialLaw::new(&profile, self.cell)?;
        let r_c = self.cell.radius;
        let mut edges = vec![T::zero()];
        edges.extend(profile.breakpoints(r_c));
        edges.push(r_c);

        let quad = Adaptive {
            rel_tol: lit(1e-7),
            abs_tol: lit(1e-10),
            ..Adaptive::default()
        };
        let panels: Vec<(T, T)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
        let parts = panels
            .par_iter()
            .map(|&(a, b)| {
                let n = profile.repetitions(lit::<T>(0.5) * (a + b));
                let mut breaks = vec![a, b];
                if self.cell.channel == Channel::PathLossOnly && self.cell.noise_power > T::zero() {
                    // beyond this radius the signal cannot beat the noise alone
                    let nf = T::from_u32(n).expect("u32");
                    let reach = (nf * self.cell.tx_power / (self.cell.threshold * self.cell.noise_power))
                        .powf(self.cell.path_loss_exp.recip());
                    if reach > a && reach < b {
                        breaks.insert(1, reach);
                    }
                }
                let first_error: OnceLock<Error> = OnceLock::new();
                let value = quad
                    .integrate_with_breaks(
                        |r| {
                            let p = match combiner {
                                CombinerKind::NoRepetition => self.p_single(r),
                                CombinerKind::SelectionCombining => self.p_sc(r, n),
                                CombinerKind::MaximalRatioCombining => self.p_mrc(r, n),
                            };
                            match p.and_then(|p| Ok(g(n, p) * radial.pdf(r)?)) {
                                Ok(v) => v,
                                Err(e) => {
                                    let _ = first_error.set(e.at_radius(r.to_f64().unwrap_or(f64::NAN)));
                                    T::zero()
                                }
                            }
                        },
                        &breaks,
                    )?
                    .value;
                match first_error.into_inner() {
                    Some(e) => Err(e),
                    None => Ok(value),
                }
            })
            .collect::<Result<Vec<T>>>()?;
        Ok(parts.into_iter().fold(T::zero(), |acc, v| acc + v))
    }
}

/// `∫ φ(u) u^(n-1) e^-u / Γ(n) du` over `u ≥ lower`, integrated in `t = ln u`
/// above `knee` and in `u` below it. Over `floor` (in units of `u`) `φ` is
/// replaced by the midpoint of its bound when that is accurate enough. The
/// mass of the gamma law outside the integrated range is below 1e-15.
fn log_space_expectation<T: Real, F>(
    n: u32,
    lower: T,
    floor: Option<FloorBound<T>>,
    knee: Option<T>,
    phi: F,
) -> Result<T>
where
    F: Fn(T) -> Result<T>,
{
    let nf = T::from_u32(n).expect("u32");
    // P(G < u) ≤ u^n / n!
    let t_min = (lit::<T>(1e-15).ln() + ln_factorial::<T>(n)) / nf;
    let spread = lit::<T>(12.0) * nf.sqrt();
    let upper = lower.max(nf + spread) + spread + lit(40.0);
    let mut t_lo = if lower > T::zero() {
        lower.ln().max(t_min)
    } else {
        t_min
    };
    let t_hi = upper.ln();
    let first_error: OnceLock<Error> = OnceLock::new();
    let weighted = |u: T| match phi(u) {
        Ok(f) => f * gamma_pdf(u, n),
        Err(e) => {
            let _ = first_error.set(e);
            T::zero()
        }
    };
    let mut head = T::zero();
    let mut start = lower.max(T::zero());
    if let Some(b) = floor {
        if b.end > start && b.end.ln() < t_hi {
            let mass = gamma_lower_regularized(n, b.end) - gamma_lower_regularized(n, start);
            if (b.high - b.low) * mass <= lit(2.0 * FLOOR_SLACK) {
                head = (b.low + b.high) * lit(0.5) * mass;
                start = b.end;
                t_lo = t_lo.max(start.ln());
            }
        }
    }
    if let Some(knee) = knee {
        if knee.is_finite() && knee > start && knee.ln() > t_lo && knee.ln() < t_hi {
            let quad = Adaptive {
                rel_tol: lit(1e-7),
                abs_tol: lit(1e-12),
                ..Adaptive::default()
            };
            head = head + quad.integrate(weighted, start, knee)?.value;
            t_lo = knee.ln();
        }
    }
    let mut breaks = vec![t_lo, t_hi];
    let mode = (nf - T::one()).max(T::one()).ln();
    if mode > t_lo && mode < t_hi {
        breaks.insert(1, mode);
    }
    let quad = Adaptive {
        rel_tol: lit(1e-7),
        abs_tol: lit(1e-12),
        ..Adaptive::default()
    };
    let value = quad
        .integrate_with_breaks(
            |t: T| {
                let u = t.exp();
                weighted(u) * u
            },
            &breaks,
        )?
        .value;
    match first_error.into_inner() {
        Some(e) => Err(e),
        None => Ok(head + value),
    }
}

fn check_count(n: u32) -> Result<()> {
    if n == 0 {
        Err(Error::invalid("N", "repetition count must be >= 1"))
    } else {
        Ok(())
    }
}

fn clamp_unit<T: Real>(p: T) -> T {
    p.max(T::zero()).min(T::one())
}

/// `1 - (1 - p)^N`.
pub fn sc_from_single<T: Real>(p_single: T, n: u32) -> T {
    if n == 1 {
        return p_single;
    }
    let fail = T::one() - p_single;
    T::one() - fail.powi(n as i32)
}

/// Gamma(N, 1) density `u^(N-1) e^-u / Γ(N)`.
pub fn gamma_pdf<T: Real>(u: T, n: u32) -> T {
    if u < T::zero() || n == 0 {
        return T::zero();
    }
    if n == 1 {
        return (-u).exp();
    }
    if u == T::zero() {
        return T::zero();
    }
    let k = T::from_u32(n - 1).expect("u32");
    (k * u.ln() - u - ln_factorial::<T>(n - 1)).exp()
}

fn ln_factorial<T: Real>(n: u32) -> T {
    (2..=n).fold(T::zero(), |acc, k| acc + T::from_u32(k).expect("u32").ln())
}

/// `P(G < x)` for `G ~ gamma(n, 1)`: power series below `n + 1`, the finite
/// Poisson sum for the complement above.
fn gamma_lower_regularized<T: Real>(n: u32, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if !x.is_finite() {
        return T::one();
    }
    let nf = T::from_u32(n).expect("u32");
    if x < nf + T::one() {
        // e^-x x^n / n! Σ_k x^k / ((n+1)...(n+k))
        let lead = (nf * x.ln() - x - ln_factorial::<T>(n)).exp();
        let mut term = T::one();
        let mut sum = T::one();
        for k in 1..1000 {
            term = term * x / (nf + from_usize::<T>(k));
            sum = sum + term;
            if term < T::epsilon() * sum {
                break;
            }
        }
        return (lead * sum).min(T::one());
    }
    // Q(n, x) = e^-x Σ_{k<n} x^k / k!
    let ln_x = x.ln();
    let upper = (0..n).fold(T::zero(), |acc, k| {
        acc + (T::from_u32(k).expect("u32") * ln_x - x - ln_factorial::<T>(k)).exp()
    });
    (T::one() - upper).max(T::zero())
}

/// Free-function form of [`Coverage::p_single`].
pub fn p_single<T: Real, L: InterferenceLaw<T>>(r: T, cell: &CellConfig<T>, law: &L) -> Result<T> {
    Coverage::new(law.profile(), cell, law)?.p_single(r)
}

/// Free-function form of [`Coverage::p_mrc`].
pub fn p_mrc<T: Real, L: InterferenceLaw<T>>(r: T, n: u32, cell: &CellConfig<T>, law: &L) -> Result<T> {
    Coverage::new(law.profile(), cell, law)?.p_mrc(r, n)
}

/// Coverage curve of `combiner` along `r_grid`.
pub fn coverage_profile<T: Real, L: InterferenceLaw<T>>(
    combiner: CombinerKind,
    profile: &RepetitionProfile<T>,
    cell: &CellConfig<T>,
    law: &L,
    r_grid: &[T],
) -> Result<Vec<CoveragePoint<T>>> {
    Coverage::new(profile, cell, law)?.curve(combiner, r_grid)
}

/// Cell-average success probability of `combiner`.
pub fn cell_average_coverage<T: Real, L: InterferenceLaw<T>>(
    combiner: CombinerKind,
    profile: &RepetitionProfile<T>,
    cell: &CellConfig<T>,
    law: &L,
) -> Result<T> {
    Coverage::new(profile, cell, law)?.cell_average(combiner)
}
