//! Self-checks of the analytic pipeline against closed forms and against the
//! Monte Carlo oracle, collected into a serializable report.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::coverage::{gamma_pdf, Coverage};
use crate::error::Result;
use crate::interference::{InterferenceCdf, LaplaceSpec};
use crate::inversion::{EulerInverter, TransformedLaw};
use crate::model::{CellConfig, Channel, CombinerKind, RadialLaw, RepetitionProfile};
use crate::montecarlo::{estimate_coverage, McConfig};

/// Absolute tolerance of the inversion self-test.
pub const INVERSION_TOL: f64 = 1e-6;
/// Absolute tolerance of the void-probability check.
pub const VOID_TOL: f64 = 1e-4;
/// Tolerance of the reduction identities and pdf normalizations.
pub const IDENTITY_TOL: f64 = 1e-10;
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Floor of the analytic-vs-Monte-Carlo tolerance; the tolerance is
/// `max(3 SE, MC_FLOOR)`.
pub const MC_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    fn compare(name: String, value: f64, reference: f64, tolerance: f64) -> Self {
        let pass = (value - reference).abs() <= tolerance;
        Self {
            name,
            value,
            reference,
            tolerance,
            pass,
            detail: None,
        }
    }

    fn failed(name: String, detail: String) -> Self {
        Self {
            name,
            value: f64::NAN,
            reference: f64::NAN,
            tolerance: 0.0,
            pass: false,
            detail: Some(detail),
        }
    }
}

/// What to validate. The channel of `cell` is ignored: both channels are
/// checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationPlan {
    pub cell: CellConfig<f64>,
    pub profile: RepetitionProfile<f64>,
    pub radii: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub inversion_terms: usize,
    pub grid_size: usize,
    pub cache_tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub trials: u64,
    pub inversion_terms: usize,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// `1 + Exp(1)` on top of nothing: a unit step at `x = 1` once the delay is
/// taken out.
struct UnitDelay;

impl TransformedLaw<f64> for UnitDelay {
    fn transform(&self, s: Complex<f64>) -> Result<Complex<f64>> {
        Ok((-s).exp())
    }

    fn delay(&self) -> f64 {
        1.0
    }

    fn continuous_transform(&self, _s: Complex<f64>) -> Result<Complex<f64>> {
        Ok(Complex::new(1.0, 0.0))
    }
}

/// Largest absolute error of three inversions over 100 log-spaced points in
/// `[0.1, 10]`: the density `e^-t`, the gamma-2 density `t e^-t`, and the
/// step `H(t - 1)`.
pub fn inversion_self_test(terms: usize) -> Vec<Check> {
    let inv = match EulerInverter::<f64>::new(terms) {
        Ok(inv) => inv,
        Err(e) => return vec![Check::failed("inversion".into(), e.to_string())],
    };
    let grid: Vec<f64> = (0..100).map(|i| 10f64.powf(-1.0 + 2.0 * i as f64 / 99.0)).collect();
    type Pair = (
        &'static str,
        Box<dyn Fn(&EulerInverter<f64>, f64) -> Result<f64>>,
        fn(f64) -> f64,
    );
    let pairs: [Pair; 3] = [
        (
            "exponential",
            Box::new(|inv, t| inv.invert(|s| Ok(1.0 / (1.0 + s)), t)),
            |t| (-t).exp(),
        ),
        (
            "gamma-2",
            Box::new(|inv, t| inv.invert(|s| Ok(1.0 / ((1.0 + s) * (1.0 + s))), t)),
            |t| t * (-t).exp(),
        ),
        ("delayed step", Box::new(|inv, t| inv.cdf(&UnitDelay, t)), |t| {
            if t >= 1.0 {
                1.0
            } else {
                0.0
            }
        }),
    ];
    pairs
        .iter()
        .map(|(name, got, want)| {
            let name = format!("inversion/{name}");
            let mut worst = (0.0f64, grid[0]);
            for &t in &grid {
                match got(&inv, t) {
                    Ok(v) if v.is_finite() => {
                        let err = (v - want(t)).abs();
                        if err > worst.0 {
                            worst = (err, t);
                        }
                    }
                    Ok(v) => return Check::failed(name, format!("non-finite value {v} at t = {t}")),
                    Err(e) => return Check::failed(name, e.to_string()),
                }
            }
            let mut check = Check::compare(name, worst.0, 0.0, INVERSION_TOL);
            if !check.pass {
                check.detail = Some(format!(
                    "max error {:.3e} at t = {:.4} with {terms} terms",
                    worst.0, worst.1
                ));
            }
            check
        })
        .collect()
}

/// Composite Simpson with `panels` (even) panels.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for i in 1..panels {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// `∫ f_r = 1` for `profile` and `∫ gamma_pdf(·, N) = 1` for `N = 1..=100`.
pub fn normalization_checks(cell: &CellConfig<f64>, profile: &RepetitionProfile<f64>) -> Vec<Check> {
    let mut out = Vec::new();
    for (label, prof) in [("norep", profile.without_repetition()), ("profile", *profile)] {
        let name = format!("normalization/radial_pdf/{label}");
        match RadialLaw::new(&prof, cell) {
            Ok(law) => {
                let mut edges = vec![0.0];
                edges.extend(prof.breakpoints(cell.radius));
                edges.push(cell.radius);
                let total: f64 = edges
                    .windows(2)
                    .map(|w| simpson(|r| law.pdf(r).unwrap_or(f64::NAN), w[0], w[1], 20_000))
                    .sum();
                out.push(Check::compare(name, total, 1.0, NORMALIZATION_TOL));
            }
            Err(e) => out.push(Check::failed(name, e.to_string())),
        }
    }
    let worst = (1..=100u32)
        .map(|n| {
            let nf = n as f64;
            let upper = nf + 40.0 * nf.sqrt() + 60.0;
            let total = simpson(|u| gamma_pdf(u, n), 0.0, upper, 200_000);
            ((total - 1.0).abs(), n)
        })
        .fold((0.0f64, 1), |acc, cur| if cur.0 > acc.0 { cur } else { acc });
    let mut check = Check::compare("normalization/gamma_pdf".into(), worst.0, 0.0, NORMALIZATION_TOL);
    check.detail = Some(format!("worst shape N = {}", worst.1));
    out.push(check);
    out
}

fn cell_for(plan: &ValidationPlan, channel: Channel) -> CellConfig<f64> {
    CellConfig { channel, ..plan.cell }
}

fn build_law(plan: &ValidationPlan, profile: RepetitionProfile<f64>, channel: Channel) -> Result<InterferenceCdf<f64>> {
    let spec = LaplaceSpec::with_default_tolerance(profile, cell_for(plan, channel))?;
    InterferenceCdf::new(spec, plan.inversion_terms)?.with_cache_spanning(plan.grid_size, plan.cache_tail)
}

/// `F_I(0⁺)` against the void probability `exp(-λ_o η)`.
fn void_checks(plan: &ValidationPlan, channel: Channel) -> Vec<Check> {
    let mut out = Vec::new();
    for (label, profile) in [("norep", plan.profile.without_repetition()), ("profile", plan.profile)] {
        let name = format!("void/{}/{label}", channel.short_name());
        let run = || -> Result<Check> {
            let spec = LaplaceSpec::with_default_tolerance(profile, cell_for(plan, channel))?;
            let want = (-spec.mean_active()).exp();
            let cdf = InterferenceCdf::new(spec, plan.inversion_terms)?;
            let got = cdf.invert_raw(cdf.x_eps())?;
            Ok(Check::compare(name.clone(), got, want, VOID_TOL))
        };
        out.push(run().unwrap_or_else(|e| Check::failed(name, e.to_string())));
    }
    out
}

/// Reduction identities and analytic-vs-Monte-Carlo coverage for one
/// channel.
fn coverage_checks(plan: &ValidationPlan, channel: Channel) -> Vec<Check> {
    let tag = channel.short_name();
    let cell = cell_for(plan, channel);
    let norep = plan.profile.without_repetition();
    let laws = build_law(plan, plan.profile, channel).and_then(|l| Ok((l, build_law(plan, norep, channel)?)));
    let (law, norep_law) = match laws {
        Ok(pair) => pair,
        Err(e) => return vec![Check::failed(format!("coverage/{tag}"), e.to_string())],
    };
    let mut out = Vec::new();
    let (cov, norep_cov) = match (
        Coverage::new(&plan.profile, &cell, &law),
        Coverage::new(&norep, &cell, &norep_law),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return vec![Check::failed(format!("coverage/{tag}"), e.to_string())],
    };

    for &r in &plan.radii {
        let name = format!("reduction/{tag}/r={r}");
        let run = || -> Result<Vec<Check>> {
            let single = cov.p_single(r)?;
            Ok(vec![
                Check::compare(format!("{name}/sc_n1"), cov.p_sc(r, 1)?, single, IDENTITY_TOL),
                Check::compare(format!("{name}/mrc_n1"), cov.p_mrc(r, 1)?, single, IDENTITY_TOL),
            ])
        };
        match run() {
            Ok(checks) => out.extend(checks),
            Err(e) => out.push(Check::failed(name, e.to_string())),
        }
    }

    for combiner in CombinerKind::ALL {
        let evaluator = if combiner == CombinerKind::NoRepetition {
            &norep_cov
        } else {
            &cov
        };
        for &r in &plan.radii {
            let name = format!("mc/{tag}/{}/r={r}", combiner.short_name());
            let run = || -> Result<Check> {
                let analytic = evaluator.success(combiner, r, None)?;
                let mc = McConfig::for_combiner(combiner, plan.trials, plan.seed, cell, plan.profile)?;
                let est = estimate_coverage(&mc, r, combiner)?;
                let tol = (3.0 * est.std_error()).max(MC_FLOOR);
                let mut check = Check::compare(name.clone(), analytic, est.mean, tol);
                check.detail = Some(format!(
                    "N = {}, MC half-width {:.3e}",
                    evaluator.repetitions(combiner, r),
                    est.half_width_95
                ));
                Ok(check)
            };
            out.push(run().unwrap_or_else(|e| Check::failed(name, e.to_string())));
        }
    }
    out
}

/// Runs every check of `plan`.
pub fn run_validation(plan: &ValidationPlan) -> ValidationReport {
    let mut checks = inversion_self_test(plan.inversion_terms);
    for channel in [Channel::PathLossOnly, Channel::RayleighFading] {
        checks.extend(void_checks(plan, channel));
    }
    checks.extend(normalization_checks(&plan.cell, &plan.profile));
    for channel in [Channel::PathLossOnly, Channel::RayleighFading] {
        checks.extend(coverage_checks(plan, channel));
    }
    let all_pass = checks.iter().all(|c| c.pass);
    ValidationReport {
        seed: plan.seed,
        trials: plan.trials,
        inversion_terms: plan.inversion_terms,
        checks,
        all_pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inversion::DEFAULT_TERMS;
    use crate::model::dbm_to_watts;

    fn plan(terms: usize) -> ValidationPlan {
        ValidationPlan {
            cell: CellConfig {
                density: 2e-4,
                radius: 1000.0,
                path_loss_exp: 3.5,
                tx_power: 0.1,
                noise_power: dbm_to_watts(-118.0),
                threshold: 1.0,
                channel: Channel::RayleighFading,
            },
            profile: RepetitionProfile::logistic(50.0, 1050.0, 0.01).unwrap(),
            radii: vec![300.0, 950.0],
            trials: 4000,
            seed: 99,
            inversion_terms: terms,
            grid_size: 256,
            cache_tail: 1e-4,
        }
    }

    #[test]
    fn self_test_passes_at_default_depth() {
        let checks = inversion_self_test(DEFAULT_TERMS);
        assert_eq!(checks.len(), 3);
        for c in &checks {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn self_test_fails_with_three_terms() {
        let checks = inversion_self_test(3);
        assert!(checks.iter().all(|c| !c.pass));
        assert!(checks[0].detail.as_deref().unwrap().contains("3 terms"));
    }

    #[test]
    fn normalizations_hold() {
        let p = plan(DEFAULT_TERMS);
        for c in normalization_checks(&p.cell, &p.profile) {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn small_plan_passes_and_echoes_seed() {
        let report = run_validation(&plan(DEFAULT_TERMS));
        let failures: Vec<_> = report.failures().collect();
        assert!(failures.is_empty(), "{failures:?}");
        assert_eq!(report.seed, 99);
        // 3 inversion + 4 void + 3 normalization + per channel 2 radii x (2 + 3)
        assert_eq!(report.checks.len(), 3 + 4 + 3 + 2 * 2 * 5);
    }

    #[test]
    fn low_depth_plan_reports_instead_of_aborting() {
        let report = run_validation(&plan(3));
        assert!(!report.all_pass);
        assert!(report.failures().any(|c| c.name.starts_with("inversion/")));
    }
}
