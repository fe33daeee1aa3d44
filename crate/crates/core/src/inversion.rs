//! Numerical inversion of Laplace transforms.
//!
//! [`EulerInverter`] implements the Abate–Whitt Euler algorithm in its unified
//! form: with `M` terms of Euler summation,
//!
//! ```text
//! f(t) ≈ 10^(M/3) / t · Σ_{k=0}^{2M} η_k Re F(β_k / t),
//! β_k = M ln(10) / 3 + iπk,
//! η_0 = 1/2, η_k = (-1)^k for 1 ≤ k ≤ M, η_2M = (-1)^M 2^-M,
//! η_{2M-k} = (-1)^k [ξ_{2M-k+1} + 2^-M C(M, k)] for 0 < k < M.
//! ```
//!
//! The algorithm converges badly near discontinuities of `f` and of its
//! derivative. CDFs of random variables with an atom at zero are therefore
//! inverted through [`TransformedLaw`], which separates the atom from the
//! continuous part and moves the start of the continuous support to the
//! origin before inverting.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::num::{from_usize, lit, Real};

/// Default number of terms, `2M + 1` with `M = 17`.
pub const DEFAULT_TERMS: usize = 35;

/// Largest `M` whose amplification `10^(M/3)` still leaves f64 headroom.
pub const MAX_PRECISION_SAFE_TERMS: usize = DEFAULT_TERMS;

/// Unified Euler inversion with `2M + 1` terms.
#[derive(Debug, Clone)]
pub struct EulerInverter<T> {
    terms: usize,
    scale: T,
    beta: Vec<Complex<T>>,
    eta: Vec<T>,
}

impl<T: Real> EulerInverter<T> {
    /// `terms` is the total number of transform evaluations, `2M + 1`.
    pub fn new(terms: usize) -> Result<Self> {
        if terms < 3 {
            return Err(Error::invalid(
                "inversion_terms",
                format!("need at least 3, got {terms}"),
            ));
        }
        let m = (terms - 1) / 2;
        let mf = from_usize::<T>(m);
        let ten = lit::<T>(10.0);
        let base = mf * ten.ln() / lit(3.0);
        let beta = (0..=2 * m)
            .map(|k| Complex::new(base, T::PI() * from_usize::<T>(k)))
            .collect();

        let two_pow_m = lit::<T>(2.0).powi(-(m as i32));
        let mut xi = vec![T::zero(); 2 * m + 1];
        xi[0] = lit(0.5);
        for x in xi.iter_mut().take(m + 1).skip(1) {
            *x = T::one();
        }
        xi[2 * m] = two_pow_m;
        let mut binom = T::one();
        for k in 1..m {
            // C(M, k) built incrementally
            binom = binom * from_usize::<T>(m - k + 1) / from_usize::<T>(k);
            xi[2 * m - k] = xi[2 * m - k + 1] + two_pow_m * binom;
        }
        let eta = xi
            .into_iter()
            .enumerate()
            .map(|(k, x)| if k % 2 == 0 { x } else { -x })
            .collect();
        Ok(Self {
            terms: 2 * m + 1,
            scale: ten.powf(mf / lit(3.0)),
            beta,
            eta,
        })
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    /// Inverts `transform` at `t > 0`.
    pub fn invert<F>(&self, transform: F, t: T) -> Result<T>
    where
        F: Fn(Complex<T>) -> Result<Complex<T>>,
    {
        if !(t > T::zero()) {
            return Err(Error::Domain {
                what: "t",
                value: t.to_f64().unwrap_or(f64::NAN),
                domain: "(0, inf)".into(),
            });
        }
        let mut acc = T::zero();
        for (b, &e) in self.beta.iter().zip(&self.eta) {
            acc = acc + e * transform(*b / t)?.re;
        }
        Ok(self.scale / t * acc)
    }

    /// Raw (unclamped) CDF of `law` at `x`.
    pub fn cdf<L: TransformedLaw<T> + ?Sized>(&self, law: &L, x: T) -> Result<T> {
        if x < T::zero() {
            return Ok(T::zero());
        }
        let atom = law.atom();
        let offset = x - law.delay();
        if offset <= T::zero() {
            return Ok(atom);
        }
        let continuous = self.invert(|s| Ok(law.continuous_transform(s)? / s), offset)?;
        Ok(atom + continuous)
    }
}

impl<T: Real> Default for EulerInverter<T> {
    fn default() -> Self {
        Self::new(DEFAULT_TERMS).expect("default terms are valid")
    }
}

/// A nonnegative random variable `X` described in the Laplace domain: `X = 0`
/// with probability `atom()`, and otherwise `X ≥ delay()`.
pub trait TransformedLaw<T: Real> {
    /// `E[exp(-s X)]`.
    fn transform(&self, s: Complex<T>) -> Result<Complex<T>>;

    /// `P(X = 0)`.
    fn atom(&self) -> T {
        T::zero()
    }

    /// Lower end of the support of the continuous part.
    fn delay(&self) -> T {
        T::zero()
    }

    /// `e^(s delay) (transform(s) - atom())`: the continuous part moved to
    /// start at the origin. The default loses all precision once
    /// `Re(s) delay` is large; laws with a delay should override it.
    fn continuous_transform(&self, s: Complex<T>) -> Result<Complex<T>> {
        let rest = self.transform(s)? - Complex::new(self.atom(), T::zero());
        let d = self.delay();
        Ok(if d == T::zero() { rest } else { rest * (s * d).exp() })
    }
}

/// `e^z - 1` without cancellation for small `|z|`.
pub(crate) fn exp_m1<T: Real>(z: Complex<T>) -> Complex<T> {
    let (x, y) = (z.re, z.im);
    let half_sin = (y * lit(0.5)).sin();
    let re = x.exp_m1() * y.cos() - lit::<T>(2.0) * half_sin * half_sin;
    let im = x.exp() * y.sin();
    Complex::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exponential;
    impl TransformedLaw<f64> for Exponential {
        fn transform(&self, s: Complex<f64>) -> Result<Complex<f64>> {
            Ok(1.0 / (1.0 + s))
        }
    }

    /// `c + Exp(1)`: exercises the support offset with a continuous part.
    struct DelayedExponential(f64);
    impl TransformedLaw<f64> for DelayedExponential {
        fn transform(&self, s: Complex<f64>) -> Result<Complex<f64>> {
            Ok((-s * self.0).exp() / (1.0 + s))
        }
        fn continuous_transform(&self, s: Complex<f64>) -> Result<Complex<f64>> {
            Ok(1.0 / (1.0 + s))
        }
        fn delay(&self) -> f64 {
            self.0
        }
    }

    /// Half the mass at 0, half exponential.
    struct Mixed;
    impl TransformedLaw<f64> for Mixed {
        fn transform(&self, s: Complex<f64>) -> Result<Complex<f64>> {
            Ok(0.5 + 0.5 / (1.0 + s))
        }
        fn atom(&self) -> f64 {
            0.5
        }
    }

    #[test]
    fn weights_for_small_m() {
        // M = 1: η = [1/2, -1, 1/2]
        let inv = EulerInverter::<f64>::new(3).unwrap();
        assert_eq!(inv.eta, vec![0.5, -1.0, 0.5]);
        let inv = EulerInverter::<f64>::new(35).unwrap();
        assert!(inv.eta.iter().sum::<f64>().abs() < 1e-15);
        assert_eq!(inv.terms(), 35);
    }

    #[test]
    fn density_pair() {
        let inv = EulerInverter::<f64>::default();
        for &t in &[0.1, 1.0, 5.0, 10.0] {
            let f = inv.invert(|s| Ok(1.0 / (1.0 + s)), t).unwrap();
            assert!((f - (-t).exp()).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn delayed_exponential_cdf() {
        let inv = EulerInverter::<f64>::default();
        let law = DelayedExponential(2.0);
        assert_eq!(inv.cdf(&law, 1.999).unwrap(), 0.0);
        for &x in &[2.001, 2.5, 4.0, 9.0] {
            let want = 1.0 - (-(x - 2.0f64)).exp();
            assert!((inv.cdf(&law, x).unwrap() - want).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn atom_is_separated() {
        let inv = EulerInverter::<f64>::default();
        assert_eq!(inv.cdf(&Mixed, 0.0).unwrap(), 0.5);
        assert_eq!(inv.cdf(&Mixed, -1.0).unwrap(), 0.0);
        let x = 1e-6f64;
        let want = 0.5 + 0.5 * (1.0 - (-x).exp());
        assert!((inv.cdf(&Mixed, x).unwrap() - want).abs() < 1e-10);
        assert!((inv.cdf(&Exponential, 1.0).unwrap() - 0.632_120_558_828_557_7).abs() < 1e-10);
    }

    /// Mass 0.3 at zero, otherwise `1 + Exp(1)`.
    struct AtomThenGap;
    impl TransformedLaw<f64> for AtomThenGap {
        fn transform(&self, s: Complex<f64>) -> Result<Complex<f64>> {
            Ok(0.3 + 0.7 * (-s).exp() / (1.0 + s))
        }
        fn atom(&self) -> f64 {
            0.3
        }
        fn delay(&self) -> f64 {
            1.0
        }
        fn continuous_transform(&self, s: Complex<f64>) -> Result<Complex<f64>> {
            Ok(0.7 / (1.0 + s))
        }
    }

    #[test]
    fn default_continuous_transform_shifts() {
        let s = Complex::new(0.4, 1.5);
        let got = TransformedLaw::continuous_transform(&DelayedExponential(2.0), s).unwrap();
        let generic = (DelayedExponential(2.0).transform(s).unwrap()) * (s * 2.0).exp();
        assert!((got - generic).norm() < 1e-14);
        let mixed = Mixed.continuous_transform(s).unwrap();
        assert!((mixed - 0.5 / (1.0 + s)).norm() < 1e-15);
    }

    #[test]
    fn atom_and_delay_together() {
        let inv = EulerInverter::<f64>::default();
        assert_eq!(inv.cdf(&AtomThenGap, 0.0).unwrap(), 0.3);
        assert_eq!(inv.cdf(&AtomThenGap, 0.999).unwrap(), 0.3);
        for &x in &[1.0 + 1e-9, 1.3, 2.0, 6.0] {
            let want = 0.3 + 0.7 * (1.0 - (-(x - 1.0f64)).exp());
            assert!((inv.cdf(&AtomThenGap, x).unwrap() - want).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn too_few_terms_is_inaccurate() {
        let inv = EulerInverter::<f64>::new(3).unwrap();
        let err = (inv.cdf(&Exponential, 1.0).unwrap() - 0.632_120_558_828_557_7).abs();
        assert!(err > 1e-3, "err = {err}");
    }

    #[test]
    fn doubling_terms_loses_precision() {
        let exact = 0.632_120_558_828_557_7;
        let err = |terms| {
            let inv = EulerInverter::<f64>::new(terms).unwrap();
            (inv.cdf(&Exponential, 1.0).unwrap() - exact).abs()
        };
        let (base, doubled) = (err(35), err(69));
        assert!(base < 1e-10 && doubled > 10.0 * base, "{base:e} vs {doubled:e}");
    }

    #[test]
    fn rejects_nonpositive_time() {
        let inv = EulerInverter::<f64>::default();
        assert!(inv.invert(|s| Ok(1.0 / s), 0.0).is_err());
        assert!(EulerInverter::<f64>::new(2).is_err());
    }

    #[test]
    fn complex_exp_m1_small_argument() {
        let z = Complex::new(1e-12, -3e-12);
        let e = exp_m1(z);
        assert!((e - z).norm() < 1e-23);
        let z = Complex::new(0.7, 2.0);
        assert!((exp_m1(z) - (z.exp() - 1.0)).norm() < 1e-15);
    }

    #[test]
    fn single_precision_inversion() {
        let inv = EulerInverter::<f32>::new(15).unwrap();
        let f = inv.invert(|s| Ok(1.0 / (s * (1.0 + s))), 1.0).unwrap();
        assert!((f - 0.632_120_56).abs() < 1e-3);
    }
}
