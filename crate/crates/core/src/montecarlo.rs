//! Monte Carlo oracle for the analytic coverage and energy results.
//!
//! Every trial draws from its own ChaCha stream (`seed`, stream = trial
//! index), so an estimate depends only on `(seed, trials, config)` and not on
//! how the trials are spread over threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{energy_single, EnergyParams};
use crate::error::{Error, Result};
use crate::model::{CellConfig, Channel, CombinerKind, RadialLaw, RepetitionProfile};
use crate::num::KahanSum;

/// Trials per accumulation chunk. Chunk boundaries are fixed, so partial sums
/// are combined in the same order for any thread count.
const CHUNK: u64 = 4096;

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

/// How the interference seen by the repetitions of one burst is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchModel {
    /// A fresh interferer field (and fading) for every repetition.
    IndependentPerRepetition,
    /// One interferer field for the whole burst; fading still per repetition.
    SharedInterference,
}

impl BranchModel {
    /// The branch model the analytic formula of `combiner` assumes.
    pub fn for_combiner(combiner: CombinerKind) -> Self {
        match combiner {
            CombinerKind::MaximalRatioCombining => BranchModel::SharedInterference,
            _ => BranchModel::IndependentPerRepetition,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: u64,
    pub seed: u64,
    pub branch_model: BranchModel,
    pub cell: CellConfig<f64>,
    pub profile: RepetitionProfile<f64>,
}

impl McConfig {
    pub fn new(
        trials: u64,
        seed: u64,
        branch_model: BranchModel,
        cell: CellConfig<f64>,
        profile: RepetitionProfile<f64>,
    ) -> Result<Self> {
        let mc = Self {
            trials,
            seed,
            branch_model,
            cell,
            profile,
        };
        mc.validate()?;
        Ok(mc)
    }

    /// Configuration whose branch model matches the analytic formula of
    /// `combiner`.
    pub fn for_combiner(
        combiner: CombinerKind,
        trials: u64,
        seed: u64,
        cell: CellConfig<f64>,
        profile: RepetitionProfile<f64>,
    ) -> Result<Self> {
        Self::new(trials, seed, BranchModel::for_combiner(combiner), cell, profile)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials", "need at least one trial"));
        }
        self.cell.validate()
    }

    fn rng(&self, trial: u64) -> ChaCha8Rng {
        trial_rng(self.seed, trial)
    }
}

/// Sample mean with a normal 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub trials: u64,
    pub seed: u64,
}

impl McEstimate {
    fn from_moments(sum: f64, sum_sq: f64, trials: u64, seed: u64) -> Self {
        let n = trials as f64;
        let mean = sum / n;
        let var = if trials > 1 {
            ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Self {
            mean,
            half_width_95: Z95 * (var / n).sqrt(),
            trials,
            seed,
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.half_width_95 / Z95
    }
}

/// Generator of trial `trial` under `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// One realization of the active interferer field: number of active
/// interferers and their total received power.
///
/// The `K ~ Poisson(λ_o π R_c²)` devices are thinned with probability
/// `D(r)`. Since `D ≤ D(R_c)`, the thinning is done in two exact stages: a
/// binomial pre-selection with `D(R_c)`, then `D(r) / D(R_c)` for the
/// candidates that were placed.
pub fn sample_field<R: Rng + ?Sized>(
    rng: &mut R,
    cell: &CellConfig<f64>,
    profile: &RepetitionProfile<f64>,
) -> (u64, f64) {
    let mean = cell.density * std::f64::consts::PI * cell.radius * cell.radius;
    if !(mean > 0.0) {
        return (0, 0.0);
    }
    let k = Poisson::new(mean).expect("positive mean").sample(rng) as u64;
    let d_max = profile.duty_cycle(cell.radius);
    let candidates = if d_max >= 1.0 {
        k
    } else {
        Binomial::new(k, d_max).expect("probability in [0, 1]").sample(rng)
    };
    let mut active = 0;
    let mut power = 0.0;
    for _ in 0..candidates {
        // 1 - U keeps r away from zero
        let r = cell.radius * (1.0 - rng.random::<f64>()).sqrt();
        if !profile.is_constant() && rng.random::<f64>() * d_max >= profile.duty_cycle(r) {
            continue;
        }
        active += 1;
        power += fading(rng, cell.channel) * cell.received_power(r);
    }
    (active, power)
}

/// Aggregate interference power `Σ P_t h_i r_i^-α` of one field.
pub fn sample_interference<R: Rng + ?Sized>(
    rng: &mut R,
    cell: &CellConfig<f64>,
    profile: &RepetitionProfile<f64>,
) -> f64 {
    sample_field(rng, cell, profile).1
}

fn fading<R: Rng + ?Sized>(rng: &mut R, channel: Channel) -> f64 {
    match channel {
        Channel::PathLossOnly => 1.0,
        Channel::RayleighFading => Exp1.sample(rng),
    }
}

/// Whether one burst of `n` repetitions from `r` gets through.
fn link_trial<R: Rng + ?Sized>(
    rng: &mut R,
    mc: &McConfig,
    field: &RepetitionProfile<f64>,
    r: f64,
    n: u32,
    combiner: CombinerKind,
) -> bool {
    let cell = &mc.cell;
    let signal = cell.received_power(r);
    let sinr = |h: f64, i: f64| signal * h / (i + cell.noise_power);
    if combiner == CombinerKind::NoRepetition {
        let i = sample_interference(rng, cell, field);
        return sinr(fading(rng, cell.channel), i) > cell.threshold;
    }
    let maximal = combiner == CombinerKind::MaximalRatioCombining;
    match mc.branch_model {
        BranchModel::SharedInterference => {
            let i = sample_interference(rng, cell, field);
            let mut best = 0.0f64;
            let mut total = 0.0;
            for _ in 0..n {
                let h = fading(rng, cell.channel);
                best = best.max(h);
                total += h;
            }
            sinr(if maximal { total } else { best }, i) > cell.threshold
        }
        BranchModel::IndependentPerRepetition => {
            let mut total = 0.0;
            for _ in 0..n {
                let i = sample_interference(rng, cell, field);
                let g = sinr(fading(rng, cell.channel), i);
                if !maximal && g > cell.threshold {
                    return true;
                }
                total += g;
            }
            maximal && total > cell.threshold
        }
    }
}

/// Interferer profile and repetition count `combiner` uses at `r`.
fn scheme(mc: &McConfig, combiner: CombinerKind, r: f64) -> (RepetitionProfile<f64>, u32) {
    match combiner {
        CombinerKind::NoRepetition => (mc.profile.without_repetition(), 1),
        _ => (mc.profile, mc.profile.repetitions(r)),
    }
}

/// Success rate of `combiner` at `r`.
///
/// Selection combining succeeds if any repetition clears `θ`; maximal ratio
/// combining if the sum of the branch SINRs does. `mc.branch_model` decides
/// whether the repetitions share one interferer field.
pub fn estimate_coverage(mc: &McConfig, r: f64, combiner: CombinerKind) -> Result<McEstimate> {
    mc.validate()?;
    if !(r > 0.0 && r <= mc.cell.radius) {
        return Err(Error::Domain {
            what: "r_o",
            value: r,
            domain: format!("(0, {}]", mc.cell.radius),
        });
    }
    let (field, n) = scheme(mc, combiner, r);
    let successes: u64 = (0..mc.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = mc.rng(t);
            u64::from(link_trial(&mut rng, mc, &field, r, n, combiner))
        })
        .sum();
    let s = successes as f64;
    Ok(McEstimate::from_moments(s, s, mc.trials, mc.seed))
}

/// Cell-average wasted energy of `combiner`: each trial places the device
/// by inverse-CDF sampling of the radial law and charges `ε(N)` on failure.
pub fn estimate_wasted_energy(mc: &McConfig, combiner: CombinerKind, ep: &EnergyParams<f64>) -> Result<McEstimate> {
    mc.validate()?;
    ep.validate()?;
    let placement = match combiner {
        CombinerKind::NoRepetition => mc.profile.without_repetition(),
        _ => mc.profile,
    };
    let radial = RadialLaw::new(&placement, &mc.cell)?;
    let e1 = energy_single(ep);
    let chunks = mc.trials.div_ceil(CHUNK);
    let partial: Vec<(KahanSum, KahanSum)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let (mut sum, mut sum_sq) = (KahanSum::new(), KahanSum::new());
            for t in c * CHUNK..((c + 1) * CHUNK).min(mc.trials) {
                let mut rng = mc.rng(t);
                let r = radial.quantile(1.0 - rng.random::<f64>()).max(f64::MIN_POSITIVE);
                let (field, n) = scheme(mc, combiner, r);
                if !link_trial(&mut rng, mc, &field, r, n, combiner) {
                    let w = e1 * f64::from(n);
                    sum.add(w);
                    sum_sq.add(w * w);
                }
            }
            (sum, sum_sq)
        })
        .collect();
    let (mut sum, mut sum_sq) = (KahanSum::new(), KahanSum::new());
    for (s, q) in partial {
        sum.add(s.value());
        sum_sq.add(q.value());
    }
    Ok(McEstimate::from_moments(
        sum.value(),
        sum_sq.value(),
        mc.trials,
        mc.seed,
    ))
}

/// `count` independent interference draws for the cell and profile of `mc`,
/// sorted ascending.
pub fn interference_samples(mc: &McConfig, count: u64) -> Result<Vec<f64>> {
    mc.validate()?;
    let mut samples: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|t| sample_interference(&mut mc.rng(t), &mc.cell, &mc.profile))
        .collect();
    samples.sort_by(f64::total_cmp);
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dbm_to_watts;

    fn cell(channel: Channel) -> CellConfig<f64> {
        CellConfig {
            density: 2e-4,
            radius: 1000.0,
            path_loss_exp: 3.5,
            tx_power: 0.1,
            noise_power: dbm_to_watts(-118.0),
            threshold: 1.0,
            channel,
        }
    }

    fn logistic() -> RepetitionProfile<f64> {
        RepetitionProfile::logistic(50.0, 1050.0, 0.01).unwrap()
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = trial_rng(7, 3).random();
        let b: f64 = trial_rng(7, 3).random();
        let c: f64 = trial_rng(7, 4).random();
        let d: f64 = trial_rng(8, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn empty_cell_has_no_interference() {
        let mut c = cell(Channel::RayleighFading);
        c.density = 0.0;
        let mut rng = trial_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_field(&mut rng, &c, &logistic()), (0, 0.0));
        }
    }

    #[test]
    fn estimate_is_deterministic_across_thread_counts() {
        let mc = McConfig::for_combiner(
            CombinerKind::MaximalRatioCombining,
            5000,
            42,
            cell(Channel::RayleighFading),
            logistic(),
        )
        .unwrap();
        let ep = EnergyParams::new(4.0, 0.1, 0.21, 1.0).unwrap();
        let run = || {
            (
                estimate_coverage(&mc, 950.0, CombinerKind::MaximalRatioCombining).unwrap(),
                estimate_wasted_energy(&mc, CombinerKind::SelectionCombining, &ep).unwrap(),
            )
        };
        let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        let serial = pool(1).install(run);
        let parallel = pool(4).install(run);
        assert_eq!(serial, parallel);
        assert_eq!(serial, run());
        assert_eq!(serial.0.seed, 42);
        assert_eq!(serial.0.trials, 5000);
    }

    #[test]
    fn half_width_follows_binomial_formula() {
        // 30 successes out of 100
        let e = McEstimate::from_moments(30.0, 30.0, 100, 0);
        let var = 0.3 * 0.7 * 100.0 / 99.0;
        assert!((e.half_width_95 - 1.96 * (var / 100.0f64).sqrt()).abs() < 1e-15);
        assert!((e.std_error() - (var / 100.0f64).sqrt()).abs() < 1e-15);
        let single = McEstimate::from_moments(1.0, 1.0, 1, 0);
        assert_eq!(single.half_width_95, 0.0);
    }

    #[test]
    fn vanishing_threshold_always_succeeds() {
        let mut c = cell(Channel::RayleighFading);
        c.threshold = 1e-30;
        for combiner in CombinerKind::ALL {
            let mc = McConfig::for_combiner(combiner, 2000, 5, c, logistic()).unwrap();
            assert_eq!(estimate_coverage(&mc, 700.0, combiner).unwrap().mean, 1.0);
        }
    }

    #[test]
    fn certain_success_wastes_nothing() {
        let mut c = cell(Channel::PathLossOnly);
        c.threshold = 1e-30;
        let mc = McConfig::for_combiner(CombinerKind::SelectionCombining, 2000, 5, c, logistic()).unwrap();
        let ep = EnergyParams::new(4.0, 0.1, 0.21, 1.0).unwrap();
        let e = estimate_wasted_energy(&mc, CombinerKind::SelectionCombining, &ep).unwrap();
        assert_eq!((e.mean, e.half_width_95), (0.0, 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let mc = McConfig::for_combiner(
            CombinerKind::NoRepetition,
            10,
            0,
            cell(Channel::PathLossOnly),
            logistic(),
        )
        .unwrap();
        assert!(estimate_coverage(&mc, 0.0, CombinerKind::NoRepetition).is_err());
        assert!(estimate_coverage(&mc, 1000.5, CombinerKind::NoRepetition).is_err());
        assert!(McConfig::new(
            0,
            0,
            BranchModel::SharedInterference,
            cell(Channel::PathLossOnly),
            logistic()
        )
        .is_err());
    }

    #[test]
    fn pathloss_field_power_is_bounded_below() {
        // every active interferer contributes at least P_t R_c^-α
        let c = cell(Channel::PathLossOnly);
        let floor = c.received_power(c.radius);
        for t in 0..2000 {
            let (k, i) = sample_field(&mut trial_rng(3, t), &c, &logistic());
            assert!(i >= k as f64 * floor * (1.0 - 1e-12));
            assert_eq!(k == 0, i == 0.0);
        }
    }
}
