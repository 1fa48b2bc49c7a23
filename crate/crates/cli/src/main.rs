use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lspica::harness::{self, ExperimentConfig, Method, SeparateOptions};
use lspica::signals::{read_csv, CsvOptions, Orientation};
use lspica::spectral::cross_periodogram;

const USAGE_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "lspica", version, about = "Blind source separation for mixed-spectrum time series")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "LSPICA_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment from a preset name or TOML file.
    Simulate {
        /// Preset (sim1, sim1_512, sim1_4096, sim1_desk, ar2_rate) or path to a TOML config.
        #[arg(long)]
        config: String,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Separate the channels of a CSV file.
    Separate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "cica_lsp", value_parser = parse_method)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        csv: CsvArgs,
    },
    /// Quantile table and boxplot from a results.csv.
    Summarize {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the cross-periodogram of a CSV file.
    Periodogram {
        #[arg(long)]
        input: PathBuf,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        csv: CsvArgs,
    },
}

#[derive(Args)]
struct CsvArgs {
    /// The first row is a header.
    #[arg(long)]
    header: bool,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Each row is a channel instead of each column.
    #[arg(long)]
    channels_as_rows: bool,
}

impl CsvArgs {
    fn options(&self) -> Result<CsvOptions, String> {
        if !self.delimiter.is_ascii() {
            return Err(format!("delimiter {:?} must be a single ASCII character", self.delimiter));
        }
        Ok(CsvOptions {
            delimiter: self.delimiter as u8,
            has_header: self.header,
            orientation: if self.channels_as_rows { Orientation::ChannelsAsRows } else { Orientation::ChannelsAsColumns },
        })
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: lspica::Error| e.to_string())
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<lspica::Error> for Failure {
    fn from(e: lspica::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = ExperimentConfig::load(&config).map_err(|e| Failure::Usage(e.to_string()))?;
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Failure::Usage("no output directory: pass --out or set output_dir".into()))?;
            let result = harness::run_experiment(&cfg)?;
            harness::write_experiment(&cfg, &result, &dir)?;
            let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
            if let Ok(summary) = harness::summarize(&result.rows) {
                for q in &summary {
                    println!(
                        "{:<9} T={:<6} n={:<4} median={:.4} q1={:.4} q3={:.4}",
                        q.method.name(),
                        q.n_samples,
                        q.count,
                        q.median,
                        q.q1,
                        q.q3
                    );
                }
            }
            if failed > 0 {
                println!("{failed} of {} runs failed; see results.csv", result.rows.len());
            }
            println!("wrote {}", dir.display());
        }
        Command::Separate { input, method, out, csv } => {
            let opts = SeparateOptions { csv: csv.options().map_err(Failure::Usage)?, ..Default::default() };
            let res = harness::separate(&input, method, &opts, &out)?;
            println!(
                "{} sources, {} iterations, converged: {}",
                res.estimate.dim(),
                res.estimate.trace.len(),
                res.estimate.converged
            );
            println!("wrote {}", out.display());
        }
        Command::Summarize { results, out } => {
            let rows = harness::read_results_csv(&results)?;
            let summary = harness::summarize(&rows)?;
            std::fs::create_dir_all(&out).map_err(lspica::Error::from)?;
            harness::write_summary_csv(&summary, out.join("summary.csv"))?;
            harness::write_boxplot_svg(&summary, out.join("boxplot.svg"))?;
            println!("wrote {}", out.display());
        }
        Command::Periodogram { input, out, csv } => {
            let x = read_csv::<f64>(&input, &csv.options().map_err(Failure::Usage)?)?;
            cross_periodogram(&x)?.write_csv(&out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {}", one_line(&msg));
            ExitCode::from(USAGE_ERROR)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {}", one_line(&msg));
            ExitCode::from(RUNTIME_ERROR)
        }
    }
}
