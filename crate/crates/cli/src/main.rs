use clap::{Args, Parser, Subcommand};
use jmsglmb_cli::{CliError, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "jmsglmb", version, about = "JMS-GLMB multi-target tracker")]
struct Cli {
    /// More output: -v for progress, -vv for per-step filter statistics.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// `linear`, `nonlinear` or a scenario file.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u32>,
    #[arg(long, env = "JMSGLMB_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = &self.scenario {
            config.scenario = s.clone();
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if self.steps.is_some() {
            config.steps = self.steps;
        }
        if let Some(d) = &self.output_dir {
            config.output_dir = d.clone();
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo simulation and filtering.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Filter a recorded scan log.
    Replay {
        /// JSON array of `{k, measurements}`.
        #[arg(long)]
        scans: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Parse and check a configuration file.
    ValidateConfig { config: PathBuf },
    /// Write the model, truth and scans of one run.
    ExportScenario {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            common,
            runs,
            threads,
        } => {
            let mut config = common.load()?;
            if let Some(r) = runs {
                config.runs = r;
            }
            if let Some(t) = threads {
                config.threads = t;
            }
            let report = jmsglmb_cli::run(&config)?;
            log::info!(
                "{} runs written to {}",
                report.results.len(),
                report.output_dir.display()
            );
        }
        Command::Replay { scans, common } => {
            let config = common.load()?;
            jmsglmb_cli::replay(&config, &scans)?;
        }
        Command::ValidateConfig { config } => {
            RunConfig::load(&config)?.validate()?;
            println!("{}: ok", config.display());
        }
        Command::ExportScenario { common, run } => {
            let config = common.load()?;
            jmsglmb_cli::export_scenario(&config, run)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Off,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
