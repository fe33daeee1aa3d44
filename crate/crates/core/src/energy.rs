//! Transmission energy and the energy wasted on failed repetition bursts.
//!
//! A device at distance `r` sends `N(r)` copies of a frame, each costing
//! `ε(1) = (η_ε P_t + P_O) T_m`. When no copy gets through, the whole burst
//! `ε(N) = ε(1) N(r)` is wasted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{Coverage, InterferenceLaw};
use crate::error::{Error, Result};
use crate::model::{CombinerKind, RepetitionProfile};
use crate::num::Real;

/// Power and timing constants of the device radio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams<T> {
    /// Power-amplifier conversion factor `η_ε ≥ 1`.
    pub amplifier_factor: T,
    /// RF transmit power `P_t` (W).
    pub tx_power: T,
    /// Overhead power `P_O` drawn by the radio while active (W).
    pub overhead_power: T,
    /// Time on air of one frame `T_m` (s).
    pub time_on_air: T,
}

impl<T: Real> EnergyParams<T> {
    pub fn new(amplifier_factor: T, tx_power: T, overhead_power: T, time_on_air: T) -> Result<Self> {
        let params = Self {
            amplifier_factor,
            tx_power,
            overhead_power,
            time_on_air,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, name: &'static str, what: &str, v: T| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{what}, got {v}")))
            }
        };
        check(
            self.amplifier_factor >= T::one(),
            "eta_eps",
            "conversion factor must be >= 1",
            self.amplifier_factor,
        )?;
        check(
            self.tx_power > T::zero(),
            "P_t",
            "transmit power must be > 0",
            self.tx_power,
        )?;
        check(
            self.overhead_power >= T::zero(),
            "P_O",
            "overhead power must be >= 0",
            self.overhead_power,
        )?;
        check(
            self.time_on_air >= T::zero(),
            "T_m",
            "time on air must be >= 0",
            self.time_on_air,
        )
    }

    /// `ε(1)` in joules.
    pub fn energy_single(&self) -> T {
        energy_single(self)
    }
}

/// One point of a wasted-energy curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WastedPoint<T> {
    pub r: T,
    pub repetitions: u32,
    pub wasted: T,
}

/// `ε(1) = (η_ε P_t + P_O) T_m`.
pub fn energy_single<T: Real>(ep: &EnergyParams<T>) -> T {
    (ep.amplifier_factor * ep.tx_power + ep.overhead_power) * ep.time_on_air
}

/// `ε(N) = ε(1) N(r)`. The overhead power is paid for every repetition.
pub fn energy_n<T: Real>(r: T, ep: &EnergyParams<T>, prof: &RepetitionProfile<T>) -> T {
    energy_single(ep) * T::from_u32(prof.repetitions(r)).expect("u32")
}

/// Energy of a burst of `n` frames multiplied by the probability that all of
/// them fail.
fn burst_wasted<T: Real>(e1: T, n: u32, p: T) -> T {
    e1 * T::from_u32(n).expect("u32") * (T::one() - p)
}

/// `ε_w = ε(N) (1 - p)` at `r`, with `p` the success probability of
/// `combiner` itself. No repetition sends a single frame.
pub fn energy_wasted<T: Real, L: InterferenceLaw<T>>(
    r: T,
    combiner: CombinerKind,
    ep: &EnergyParams<T>,
    coverage: &Coverage<'_, T, L>,
) -> Result<T> {
    let n = coverage.repetitions(combiner, r);
    let p = coverage.success(combiner, r, Some(n))?;
    Ok(burst_wasted(energy_single(ep), n, p))
}

/// Wasted energy along `r_grid`, evaluated in parallel.
pub fn wasted_curve<T: Real, L: InterferenceLaw<T>>(
    combiner: CombinerKind,
    ep: &EnergyParams<T>,
    coverage: &Coverage<'_, T, L>,
    r_grid: &[T],
) -> Result<Vec<WastedPoint<T>>> {
    r_grid
        .par_iter()
        .map(|&r| {
            let wasted =
                energy_wasted(r, combiner, ep, coverage).map_err(|e| e.at_radius(r.to_f64().unwrap_or(f64::NAN)))?;
            Ok(WastedPoint {
                r,
                repetitions: coverage.repetitions(combiner, r),
                wasted,
            })
        })
        .collect()
}

/// Cell-average wasted energy `∫₀^{R_c} ε_w(r) f_r(r) dr`.
pub fn cell_avg_wasted<T: Real, L: InterferenceLaw<T>>(
    combiner: CombinerKind,
    ep: &EnergyParams<T>,
    coverage: &Coverage<'_, T, L>,
) -> Result<T> {
    let e1 = energy_single(ep);
    coverage.cell_expectation(combiner, |n, p| burst_wasted(e1, n, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CellConfig, Channel};
    use proptest::prelude::*;

    /// Exponential interference with mean `m`, no atom.
    struct ExpLaw {
        mean: f64,
        profile: RepetitionProfile<f64>,
    }

    impl InterferenceLaw<f64> for ExpLaw {
        fn cdf(&self, x: f64) -> Result<f64> {
            Ok(if x <= 0.0 { 0.0 } else { -(-x / self.mean).exp_m1() })
        }
        fn channel(&self) -> Channel {
            Channel::RayleighFading
        }
        fn profile(&self) -> &RepetitionProfile<f64> {
            &self.profile
        }
    }

    fn cell() -> CellConfig<f64> {
        CellConfig {
            density: 1e-3,
            radius: 1000.0,
            path_loss_exp: 3.5,
            tx_power: 0.1,
            noise_power: 0.0,
            threshold: 1.0,
            channel: Channel::RayleighFading,
        }
    }

    fn table_params() -> EnergyParams<f64> {
        EnergyParams::new(4.0, 0.1, 0.21, 1.0).unwrap()
    }

    #[test]
    fn single_frame_energy() {
        assert!((energy_single(&table_params()) - 0.61).abs() < 1e-15);
        let idle = EnergyParams::new(4.0, 0.1, 0.21, 0.0).unwrap();
        assert_eq!(energy_single(&idle), 0.0);
        let ideal = EnergyParams::new(1.0, 0.2, 0.0, 3.0).unwrap();
        assert!((energy_single(&ideal) - 0.6f64).abs() < 1e-15);
    }

    #[test]
    fn burst_energy_scales_with_repetitions() {
        let full = RepetitionProfile::constant(1.0, 0.01).unwrap();
        assert_eq!(full.repetitions(10.0), 100);
        assert!((energy_n(10.0, &table_params(), &full) - 61.0).abs() < 1e-12);
        let none = RepetitionProfile::no_repetition(0.01).unwrap();
        assert_eq!(energy_n(10.0, &table_params(), &none), 0.61);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(EnergyParams::new(0.5, 0.1, 0.21, 1.0).is_err());
        assert!(EnergyParams::new(4.0, 0.0, 0.21, 1.0).is_err());
        assert!(EnergyParams::new(4.0, 0.1, -0.1, 1.0).is_err());
        assert!(EnergyParams::new(4.0, 0.1, 0.21, f64::NAN).is_err());
    }

    #[test]
    fn wasted_energy_extremes() {
        assert_eq!(burst_wasted(0.61, 7, 1.0), 0.0);
        assert!((burst_wasted(0.61f64, 7, 0.0) - 4.27).abs() < 1e-14);
    }

    #[test]
    fn energy_monotone_in_distance() {
        let prof = RepetitionProfile::logistic(50.0, 500.0, 0.01).unwrap();
        let ep = table_params();
        let mut last = 0.0;
        for i in 0..=1000 {
            let e = energy_n(i as f64, &ep, &prof);
            assert!(e >= last);
            last = e;
        }
        assert!((last - 0.61 * prof.repetitions(1000.0) as f64).abs() < 1e-12);
    }

    #[test]
    fn cell_average_of_certain_failure_is_mean_burst() {
        // a huge threshold makes every transmission fail
        let prof = RepetitionProfile::logistic(50.0, 500.0, 0.01).unwrap();
        let mut c = cell();
        c.threshold = 1e300;
        let law = ExpLaw {
            mean: 1e-12,
            profile: prof,
        };
        let cov = Coverage::new(&prof, &c, &law).unwrap();
        let ep = table_params();
        let avg = cell_avg_wasted(CombinerKind::SelectionCombining, &ep, &cov).unwrap();
        let mean_n = cov
            .cell_expectation(CombinerKind::SelectionCombining, |n, _| n as f64)
            .unwrap();
        assert!((avg - 0.61 * mean_n).abs() < 1e-9 * avg);
        assert!(mean_n > 1.0 && mean_n < 100.0);
    }

    #[test]
    fn curve_matches_pointwise() {
        let prof = RepetitionProfile::logistic(50.0, 700.0, 0.01).unwrap();
        let c = cell();
        let law = ExpLaw {
            mean: 1e-12,
            profile: prof,
        };
        let cov = Coverage::new(&prof, &c, &law).unwrap();
        let grid: Vec<f64> = (1..=20).map(|i| 50.0 * i as f64).collect();
        let ep = table_params();
        let curve = wasted_curve(CombinerKind::MaximalRatioCombining, &ep, &cov, &grid).unwrap();
        for (pt, &r) in curve.iter().zip(&grid) {
            assert_eq!(pt.r, r);
            assert_eq!(
                pt.wasted,
                energy_wasted(r, CombinerKind::MaximalRatioCombining, &ep, &cov).unwrap()
            );
        }
        assert!(wasted_curve(CombinerKind::NoRepetition, &ep, &cov, &grid).is_err());
    }

    proptest! {
        #[test]
        fn sc_waste_is_unimodal_in_repetitions(p in 0.005f64..0.999) {
            // N (1-p)^N: successive ratios (N+1)/N (1-p) decrease in N
            let q = 1.0 - p;
            let w: Vec<f64> = (1..=400i32).map(|n| n as f64 * q.powi(n)).collect();
            let peak = w.iter().enumerate().fold(0, |best, (i, &v)| if v > w[best] { i } else { best });
            for i in 0..peak {
                prop_assert!(w[i] <= w[i + 1] * (1.0 + 1e-12));
            }
            for i in peak..w.len() - 1 {
                prop_assert!(w[i + 1] <= w[i] * (1.0 + 1e-12));
            }
            let expected_peak = (q / (1.0 - q)).floor().max(0.0) as usize;
            prop_assert!(peak.abs_diff(expected_peak) <= 1);
        }

        #[test]
        fn wasted_never_exceeds_burst(r in 1.0f64..1000.0, b in 0.0f64..1500.0, mean in 1e-16f64..1e-9) {
            let prof = RepetitionProfile::logistic(40.0, b, 0.02).unwrap();
            let c = cell();
            let law = ExpLaw { mean, profile: prof };
            let cov = Coverage::new(&prof, &c, &law).unwrap();
            let ep = table_params();
            for combiner in [CombinerKind::SelectionCombining, CombinerKind::MaximalRatioCombining] {
                let w = energy_wasted(r, combiner, &ep, &cov).unwrap();
                prop_assert!(w >= 0.0);
                prop_assert!(w <= energy_n(r, &ep, &prof) * (1.0 + 1e-15));
            }
        }
    }
}
