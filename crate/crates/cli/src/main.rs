use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use repcov::model::{Channel, CombinerKind};
use repcov_cli::config::{parse_threshold, ConfigError, ExperimentConfig, Format, Overrides, Sweep};
use repcov_cli::output::write_output;
use repcov_cli::run::{run_coverage, run_energy, run_mc_cdf, run_validate, Document, RunError};

#[derive(Parser, Debug)]
#[command(
    name = "repcov",
    version,
    about = "Coverage and wasted energy of repetition-based IoT uplinks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Success probability against distance, or cell averages against a, b or theta.
    Coverage {
        #[command(flatten)]
        common: Common,
        /// Add Monte Carlo columns to distance sweeps.
        #[arg(long)]
        mc: bool,
    },
    /// Wasted energy against distance, or cell averages with the no-repetition baseline.
    Energy {
        #[command(flatten)]
        common: Common,
        /// Repeat a distance sweep for each profile midpoint b (m), e.g. 1000,1300,2000.
        #[arg(long, value_delimiter = ',')]
        b_values: Vec<f64>,
        /// Add Monte Carlo columns to cell-average sweeps.
        #[arg(long)]
        mc: bool,
    },
    /// Analytic-vs-Monte-Carlo and closed-form checks as a JSON report; exit 3 on any failure.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Empirical interference CDF against the analytic one.
    McCdf {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_enum)]
    combiner: Option<CombinerArg>,
    #[arg(long, value_enum)]
    channel: Option<ChannelArg>,
    /// AXIS:START:STOP:COUNT[:log] with AXIS one of r, a, b (m) or theta_db (dB).
    #[arg(long, value_name = "SPEC")]
    sweep: Option<String>,
    #[arg(long, value_name = "N")]
    mc_trials: Option<u64>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// SINR threshold with unit, e.g. "0 dB" or "1 linear".
    #[arg(long, value_name = "QUANTITY", allow_hyphen_values = true)]
    theta: Option<String>,
    /// Terms of the Euler inverse-Laplace sum.
    #[arg(long, value_name = "M")]
    inversion_terms: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads; defaults to all cores.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CombinerArg {
    Norep,
    Sc,
    Mrc,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ChannelArg {
    Pathloss,
    Fading,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Csv,
    Json,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        let threshold = self
            .theta
            .as_deref()
            .map(|t| parse_threshold("--theta", t))
            .transpose()?;
        cfg.apply(&Overrides {
            combiner: self.combiner.map(|c| match c {
                CombinerArg::Norep => CombinerKind::NoRepetition,
                CombinerArg::Sc => CombinerKind::SelectionCombining,
                CombinerArg::Mrc => CombinerKind::MaximalRatioCombining,
            }),
            channel: self.channel.map(|c| match c {
                ChannelArg::Pathloss => Channel::PathLossOnly,
                ChannelArg::Fading => Channel::RayleighFading,
            }),
            sweep: self.sweep.as_deref().map(Sweep::parse_flag).transpose()?,
            mc_trials: self.mc_trials,
            seed: self.seed,
            out: self.out.clone(),
            format: self.format.map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            }),
            threshold,
            inversion_terms: self.inversion_terms,
        })?;
        Ok(cfg)
    }
}

fn execute(command: &Command, cfg: &ExperimentConfig) -> Result<Document, RunError> {
    match command {
        Command::Coverage { mc, .. } => run_coverage(cfg, *mc),
        Command::Energy { b_values, mc, .. } => run_energy(cfg, b_values, *mc),
        Command::Validate { .. } => run_validate(cfg),
        Command::McCdf { .. } => run_mc_cdf(cfg),
    }
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Coverage { common, .. }
        | Command::Energy { common, .. }
        | Command::Validate { common }
        | Command::McCdf { common } => common,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let common = common(&cli.command);
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::error!("cannot size the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = common
        .load()
        .map_err(RunError::from)
        .and_then(|cfg| Ok((execute(&cli.command, &cfg)?, cfg.output.path)));
    let (doc, out) = match result {
        Ok(done) => done,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Err(e) = write_output(out.as_deref(), &doc.contents) {
        log::error!("cannot write output: {e}");
        return ExitCode::from(1);
    }
    if doc.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}
