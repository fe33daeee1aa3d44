//! The four subcommands. Each returns the finished document; nothing is
//! written until the whole run has succeeded.

use rayon::prelude::*;
use repcov::coverage::Coverage;
use repcov::energy::{cell_avg_wasted, wasted_curve, EnergyParams};
use repcov::interference::{InterferenceCdf, LaplaceSpec};
use repcov::model::{db_to_linear, CellConfig, CombinerKind, ProfileShape, RepetitionProfile};
use repcov::montecarlo::{estimate_coverage, estimate_wasted_energy, interference_samples, BranchModel, McConfig};
use repcov::validation::{run_validation, ValidationReport};

use crate::config::{Axis, ConfigError, ExperimentConfig};
use crate::output::{Field, Table};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] repcov::Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 1 for configuration problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Model(e) if !is_parameter_error(e) => 2,
            _ => 1,
        }
    }
}

fn is_parameter_error(e: &repcov::Error) -> bool {
    match e {
        repcov::Error::InvalidParameter { .. } | repcov::Error::Domain { .. } => true,
        repcov::Error::AtRadius { source, .. } => is_parameter_error(source),
        _ => false,
    }
}

type Result<T> = std::result::Result<T, RunError>;

/// A rendered output document.
#[derive(Debug, Clone)]
pub struct Document {
    pub contents: String,
    /// False when a validation check failed.
    pub passed: bool,
}

fn build_law(
    cfg: &ExperimentConfig,
    profile: RepetitionProfile<f64>,
    cell: CellConfig<f64>,
) -> Result<InterferenceCdf<f64>> {
    let n = &cfg.numerics;
    let spec = LaplaceSpec::new(profile, cell, n.quad_tol)?;
    Ok(InterferenceCdf::new(spec, n.inversion_terms)?.with_cache_spanning(n.grid_size, n.cache_tail)?)
}

/// The profile the analytic side uses: no repetition ignores the file's.
fn effective_profile(cfg: &ExperimentConfig, combiner: CombinerKind) -> RepetitionProfile<f64> {
    if combiner == CombinerKind::NoRepetition {
        if !cfg.profile.is_no_repetition() {
            log::info!("combiner norep ignores the repetition profile; every device sends once at duty cycle D_o");
        }
        cfg.profile.without_repetition()
    } else {
        cfg.profile
    }
}

fn mc_config(
    cfg: &ExperimentConfig,
    combiner: CombinerKind,
    cell: CellConfig<f64>,
    profile: RepetitionProfile<f64>,
) -> Result<McConfig> {
    let model = cfg.mc.branch_model.unwrap_or(BranchModel::for_combiner(combiner));
    Ok(McConfig::new(cfg.mc.trials, cfg.mc.seed, model, cell, profile)?)
}

/// Cell and profile at sweep value `x` of a cell-average axis.
fn at_point(cfg: &ExperimentConfig, x: f64) -> Result<(CellConfig<f64>, RepetitionProfile<f64>)> {
    let mut cell = cfg.cell;
    let mut profile = cfg.profile;
    let d = cfg.profile.base_duty();
    match (cfg.sweep.axis, cfg.profile.shape()) {
        (Axis::ThetaDb, _) => cell.threshold = db_to_linear(x),
        (Axis::A, ProfileShape::Logistic { midpoint, .. }) => profile = RepetitionProfile::logistic(x, midpoint, d)?,
        (Axis::B, ProfileShape::Logistic { steepness, .. }) => profile = RepetitionProfile::logistic(steepness, x, d)?,
        (Axis::R, _) => unreachable!("distance sweeps are per-distance"),
        _ => unreachable!("a and b sweeps are rejected for constant profiles"),
    }
    Ok((cell, profile))
}

fn labels(combiner: CombinerKind, cell: &CellConfig<f64>) -> [Field; 2] {
    [combiner.short_name().into(), cell.channel.short_name().into()]
}

pub fn run_coverage(cfg: &ExperimentConfig, with_mc: bool) -> Result<Document> {
    let combiner = cfg.combiner()?;
    let grid = cfg.sweep.values();
    let mut table;
    if cfg.sweep.axis == Axis::R {
        table = Table::new(&[
            "r_m",
            "N",
            "p_analytic",
            "p_mc_mean",
            "p_mc_hw95",
            "combiner",
            "channel",
        ]);
        let profile = effective_profile(cfg, combiner);
        let law = build_law(cfg, profile, cfg.cell)?;
        let cov = Coverage::new(&profile, &cfg.cell, &law)?;
        let curve = cov.curve(combiner, &grid)?;
        let mc = if with_mc {
            Some(mc_config(cfg, combiner, cfg.cell, cfg.profile)?)
        } else {
            None
        };
        for pt in curve {
            let (mean, hw) = match &mc {
                Some(mc) => {
                    let est = estimate_coverage(mc, pt.r, combiner)?;
                    (est.mean.into(), est.half_width_95.into())
                }
                None => (Field::Empty, Field::Empty),
            };
            let mut row = vec![pt.r.into(), pt.repetitions.into(), pt.p.into(), mean, hw];
            row.extend(labels(combiner, &cfg.cell));
            table.push(row);
        }
    } else {
        if with_mc {
            log::warn!("Monte Carlo columns are produced for distance sweeps only");
        }
        table = Table::new(&[cfg.sweep.axis.column(), "N", "p_cell_avg", "combiner", "channel"]);
        let rows: Vec<Vec<Field>> = grid
            .par_iter()
            .map(|&x| {
                let (cell, profile) = at_point(cfg, x)?;
                let profile = if combiner == CombinerKind::NoRepetition {
                    profile.without_repetition()
                } else {
                    profile
                };
                let law = build_law(cfg, profile, cell)?;
                let p = Coverage::new(&profile, &cell, &law)?.cell_average(combiner)?;
                let mut row = vec![x.into(), profile.repetitions(cell.radius).into(), p.into()];
                row.extend(labels(combiner, &cell));
                Ok(row)
            })
            .collect::<Result<_>>()?;
        table.rows = rows;
    }
    let table = if with_mc { table } else { table.prune_empty() };
    Ok(Document {
        contents: table.render(cfg.output.format, "coverage", &cfg.to_toml()),
        passed: true,
    })
}

fn cell_avg(
    cfg: &ExperimentConfig,
    combiner: CombinerKind,
    ep: &EnergyParams<f64>,
    cell: CellConfig<f64>,
    profile: RepetitionProfile<f64>,
) -> Result<f64> {
    let law = build_law(cfg, profile, cell)?;
    Ok(cell_avg_wasted(combiner, ep, &Coverage::new(&profile, &cell, &law)?)?)
}

/// Per-distance wasted energy, or cell averages with the no-repetition
/// baseline. `b_values` repeats a distance sweep for several profile
/// midpoints.
pub fn run_energy(cfg: &ExperimentConfig, b_values: &[f64], with_mc: bool) -> Result<Document> {
    let combiner = cfg.combiner()?;
    let ep = cfg.energy_params()?;
    let grid = cfg.sweep.values();
    let mut table;
    if cfg.sweep.axis == Axis::R {
        if with_mc {
            log::warn!("Monte Carlo columns are produced for cell-average sweeps only");
        }
        let mut profiles = Vec::new();
        if b_values.is_empty() {
            profiles.push((None, effective_profile(cfg, combiner)));
        } else {
            let ProfileShape::Logistic { steepness, .. } = cfg.profile.shape() else {
                return Err(ConfigError::Field {
                    field: "--b-values".into(),
                    reason: "needs a logistic profile".into(),
                }
                .into());
            };
            for &b in b_values {
                let p = RepetitionProfile::logistic(steepness, b, cfg.profile.base_duty())?;
                let p = if combiner == CombinerKind::NoRepetition {
                    p.without_repetition()
                } else {
                    p
                };
                profiles.push((Some(b), p));
            }
        }
        let columns = ["b_m", "r_m", "N", "e_wasted_J", "combiner", "channel"];
        table = Table::new(if b_values.is_empty() { &columns[1..] } else { &columns });
        for (b, profile) in profiles {
            let law = build_law(cfg, profile, cfg.cell)?;
            let cov = Coverage::new(&profile, &cfg.cell, &law)?;
            for pt in wasted_curve(combiner, &ep, &cov, &grid)? {
                let mut row: Vec<Field> = b.map(Field::from).into_iter().collect();
                row.extend([pt.r.into(), pt.repetitions.into(), pt.wasted.into()]);
                row.extend(labels(combiner, &cfg.cell));
                table.push(row);
            }
        }
    } else {
        if !b_values.is_empty() {
            return Err(ConfigError::Field {
                field: "--b-values".into(),
                reason: "only combines with a distance sweep (axis r)".into(),
            }
            .into());
        }
        table = Table::new(&[
            cfg.sweep.axis.column(),
            "N",
            "e_cell_avg_J",
            "e_norep_J",
            "e_mc_mean_J",
            "e_mc_hw95_J",
            "combiner",
            "channel",
        ]);
        // the baseline only moves with the threshold
        let fixed_baseline = match cfg.sweep.axis {
            Axis::ThetaDb => None,
            _ => Some(cell_avg(
                cfg,
                CombinerKind::NoRepetition,
                &ep,
                cfg.cell,
                cfg.profile.without_repetition(),
            )?),
        };
        let rows: Vec<Vec<Field>> = grid
            .par_iter()
            .map(|&x| {
                let (cell, profile) = at_point(cfg, x)?;
                let eval = if combiner == CombinerKind::NoRepetition {
                    profile.without_repetition()
                } else {
                    profile
                };
                let e = cell_avg(cfg, combiner, &ep, cell, eval)?;
                let base = match fixed_baseline {
                    Some(b) => b,
                    None => cell_avg(cfg, CombinerKind::NoRepetition, &ep, cell, profile.without_repetition())?,
                };
                let (mean, hw) = if with_mc {
                    let est = estimate_wasted_energy(&mc_config(cfg, combiner, cell, profile)?, combiner, &ep)?;
                    (est.mean.into(), est.half_width_95.into())
                } else {
                    (Field::Empty, Field::Empty)
                };
                let mut row = vec![
                    x.into(),
                    eval.repetitions(cell.radius).into(),
                    e.into(),
                    base.into(),
                    mean,
                    hw,
                ];
                row.extend(labels(combiner, &cell));
                Ok(row)
            })
            .collect::<Result<_>>()?;
        table.rows = rows;
    }
    let table = if with_mc { table } else { table.prune_empty() };
    Ok(Document {
        contents: table.render(cfg.output.format, "energy", &cfg.to_toml()),
        passed: true,
    })
}

/// Sampled interference against the analytic CDF at 200 empirical quantiles,
/// plus the atom at zero.
pub fn run_mc_cdf(cfg: &ExperimentConfig) -> Result<Document> {
    let combiner = cfg.combiner.unwrap_or(CombinerKind::SelectionCombining);
    let profile = effective_profile(cfg, combiner);
    let law = build_law(cfg, profile, cfg.cell)?;
    let mc = McConfig::new(
        cfg.mc.trials,
        cfg.mc.seed,
        BranchModel::IndependentPerRepetition,
        cfg.cell,
        profile,
    )?;
    let samples = interference_samples(&mc, cfg.mc.trials)?;
    let n = samples.len();
    let nf = n as f64;
    // two-sided 95% Dvoretzky-Kiefer-Wolfowitz band
    let dkw = ((2.0f64 / 0.05).ln() / (2.0 * nf)).sqrt();
    let mut xs = vec![0.0];
    for k in 0..200 {
        let x = samples[((k as f64 + 0.5) / 200.0 * nf) as usize];
        if x > 0.0 && xs.last() != Some(&x) {
            xs.push(x);
        }
    }
    let mut table = Table::new(&["x_W", "f_analytic", "f_mc", "dkw_eps95", "channel"]);
    for x in xs {
        let f = if x == 0.0 { law.atom0() } else { law.eval(x)? };
        let below = samples.partition_point(|&s| s <= x);
        table.push(vec![
            x.into(),
            f.into(),
            (below as f64 / nf).into(),
            dkw.into(),
            cfg.cell.channel.short_name().into(),
        ]);
    }
    Ok(Document {
        contents: table.render(cfg.output.format, "mc-cdf", &cfg.to_toml()),
        passed: true,
    })
}

pub fn validation_report(cfg: &ExperimentConfig) -> ValidationReport {
    run_validation(&cfg.validation_plan())
}

/// The validation report as JSON, whatever the configured format.
pub fn run_validate(cfg: &ExperimentConfig) -> Result<Document> {
    let report = validation_report(cfg);
    for c in report.failures() {
        log::warn!(
            "FAILED {}: value {:e}, reference {:e}, tolerance {:e}{}",
            c.name,
            c.value,
            c.reference,
            c.tolerance,
            c.detail.as_deref().map(|d| format!(" ({d})")).unwrap_or_default()
        );
    }
    let mut doc = serde_json::to_value(&report).expect("serializable");
    doc["config"] = cfg.to_toml().into();
    let mut contents = serde_json::to_string_pretty(&doc).expect("serializable");
    contents.push('\n');
    Ok(Document {
        contents,
        passed: report.all_pass,
    })
}
