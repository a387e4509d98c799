use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use entmatch::pipeline::{self, MatchMode, Policy, RunConfig};
use entmatch::Error;

#[derive(Parser)]
#[command(name = "entmatch", version, about = "Variable-ratio matching with fine balance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run the matching pipeline and write artifacts
    Run(RunArgs),
    /// Compare the balance of two finished runs
    Compare {
        manifest_a: PathBuf,
        manifest_b: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Declarative run configuration (TOML); flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input table (delimiter-separated, header row)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// Treatment column (values 0/1)
    #[arg(long)]
    treatment: Option<String>,
    /// Subject ID column; row numbers when absent
    #[arg(long)]
    id_col: Option<String>,
    /// Covariate columns (default: all remaining columns)
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Covariate columns holding nominal levels
    #[arg(long, value_delimiter = ',')]
    nominal: Option<Vec<String>>,
    /// Columns to ignore
    #[arg(long, value_delimiter = ',')]
    exclude: Option<Vec<String>>,
    /// Maximum controls per treated subject
    #[arg(short = 'K', long = "K")]
    k: Option<usize>,
    /// Caliper width as a multiple of the score SD
    #[arg(long)]
    caliper: Option<f64>,
    /// Penalty per caliper width of violation
    #[arg(long)]
    penalty_scale: Option<f64>,
    /// Columns whose interaction is balanced near-finely
    #[arg(long, value_delimiter = ',')]
    fine_balance: Option<Vec<String>>,
    /// Common-support policy: subset, trim, or fail
    #[arg(long)]
    policy: Option<Policy>,
    /// Matching structure: variable or pair
    #[arg(long)]
    mode: Option<MatchMode>,
    /// Master seed for permutation p-values
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo draws per permutation p-value
    #[arg(long)]
    draws: Option<usize>,
    /// Column of externally fitted propensity scores
    #[arg(long)]
    scores: Option<String>,
    /// Ridge penalty for the logistic fit
    #[arg(long)]
    ridge: Option<f64>,
    /// Treated-by-control distance file, bypassing the internal metric
    #[arg(long)]
    distance_file: Option<PathBuf>,
    /// Field delimiter: comma or tab
    #[arg(long)]
    delimiter: Option<pipeline::Delimiter>,
    /// Dump each stratum's flow network in arc-list form
    #[arg(long)]
    dump_networks: bool,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, Error> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.input {
            config.input = v;
        }
        if let Some(v) = self.out {
            config.out = v;
        }
        if let Some(v) = self.treatment {
            config.schema.treatment = v;
        }
        if let Some(v) = self.id_col {
            config.schema.id = Some(v);
        }
        if let Some(v) = self.covariates {
            config.schema.covariates = v;
        }
        if let Some(v) = self.nominal {
            config.schema.nominal = v;
        }
        if let Some(v) = self.exclude {
            config.schema.exclude = v;
        }
        if let Some(v) = self.k {
            config.matching.k = v;
        }
        if let Some(v) = self.caliper {
            config.matching.caliper = v;
        }
        if let Some(v) = self.penalty_scale {
            config.matching.penalty_scale = Some(v);
        }
        if let Some(v) = self.fine_balance {
            config.matching.fine_balance = v;
        }
        if let Some(v) = self.policy {
            config.matching.policy = v;
        }
        if let Some(v) = self.mode {
            config.matching.mode = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.draws {
            config.draws = v;
        }
        if let Some(v) = self.scores {
            config.propensity.scores = Some(v);
        }
        if let Some(v) = self.ridge {
            config.propensity.ridge = v;
        }
        if let Some(v) = self.distance_file {
            config.matching.distance_file = Some(v);
        }
        if let Some(v) = self.delimiter {
            config.delimiter = v;
        }
        if self.dump_networks {
            config.dump_networks = true;
        }
        Ok(config)
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::MissingColumn { .. } => 2,
        Error::CommonSupportFail { .. } => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let config = args.into_config()?;
            let summary = pipeline::run_pipeline(&config)?;
            if summary.propensity.separation_warning {
                eprintln!(
                    "warning: some propensity scores sit at the clamp bound; \
                     the fit may be separated (consider --ridge)"
                );
            }
            let counts = &summary.manifest.counts;
            println!(
                "matched {} treated to {} controls ({} discarded treated, \
                 effective sample size {:.1} pairs)",
                counts.matched_sets,
                counts.matched_controls,
                counts.discarded_treated,
                counts.effective_sample_size
            );
            for s in &summary.manifest.strata {
                match s.deviation {
                    Some(dev) => println!(
                        "  stratum {}: {} treated, {} controls, ratio 1:{}, \
                         distance {:.4}, deviation {}{}",
                        s.stratum,
                        s.n_treated,
                        s.n_controls,
                        s.ratio,
                        s.distance,
                        dev,
                        if s.subset { " (subset)" } else { "" }
                    ),
                    None => println!(
                        "  stratum {}: {} treated, {} controls, ratio 1:{}, distance {:.4}{}",
                        s.stratum,
                        s.n_treated,
                        s.n_controls,
                        s.ratio,
                        s.distance,
                        if s.subset { " (subset)" } else { "" }
                    ),
                }
            }
            println!("artifacts in {}", config.out.display());
            Ok(())
        }
        Command::Compare {
            manifest_a,
            manifest_b,
        } => {
            let cmp = pipeline::compare_runs(&manifest_a, &manifest_b)?;
            println!("{cmp}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
