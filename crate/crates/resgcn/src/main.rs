//! Thin CLI over the library pipeline. Exit codes: 0 success, 1 for
//! usage/config problems, 2 for runtime/numeric failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use resgcn::config::RunConfig;
use resgcn::pipeline::{
    cmd_compare, cmd_eval, cmd_inject, cmd_score, cmd_selfcheck, cmd_sweep, cmd_train, SweepParam,
};
use resgcn::{Error, Result};

#[derive(Parser)]
#[command(name = "resgcn", version, about = "Anomaly detection on attributed networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a labeled benchmark by injecting structural and attribute anomalies
    Inject(CommonArgs),
    /// Train a model, writing a checkpoint and a loss history
    Train(CommonArgs),
    /// Rank nodes with a trained checkpoint, one CSV per strategy
    Score {
        #[command(flatten)]
        common: CommonArgs,
        /// Trained model produced by `train`
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate a scores CSV against ground-truth labels
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Scores CSV produced by `score`
        #[arg(long)]
        scores: PathBuf,
    },
    /// Tabulate all four ranking strategies for one checkpoint
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train across a parameter grid and tabulate metric vs parameter
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Parameter to vary: alpha or lambda
        #[arg(long)]
        param: String,
        /// Comma-separated grid; default 0.0,0.1,...,1.0
        #[arg(long)]
        values: Option<String>,
    },
    /// Run the built-in gradient and oracle suites
    Selfcheck,
}

/// Config-file path plus per-key overrides; flags win over the file, the
/// file wins over defaults.
#[derive(Args)]
struct CommonArgs {
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    attributes: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pca_dim: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    strategy: Option<String>,
    /// Comma-separated K values for precision/recall
    #[arg(long)]
    ks: Option<String>,
}

impl CommonArgs {
    fn build_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.edges {
            cfg.edges = Some(v.clone());
        }
        if let Some(v) = &self.attributes {
            cfg.attributes = Some(v.clone());
        }
        if let Some(v) = &self.labels {
            cfg.labels = Some(v.clone());
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.pca_dim {
            cfg.pca_dim = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.s {
            cfg.s = v;
        }
        if let Some(v) = self.t {
            cfg.t = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = &self.strategy {
            cfg.strategy = v.clone();
        }
        if let Some(v) = &self.ks {
            cfg.ks = parse_list(v, "ks")?;
        }
        Ok(cfg)
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::InvalidArgument(format!("invalid {what} entry {s:?}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Inject(common) => {
            let cfg = common.build_config()?;
            let out = cmd_inject(&cfg)?;
            if out.stats.self_loops_dropped > 0 || out.stats.duplicate_edges_dropped > 0 {
                eprintln!(
                    "note: dropped {} self-loops and {} duplicate edges on load",
                    out.stats.self_loops_dropped, out.stats.duplicate_edges_dropped
                );
            }
            println!(
                "injected {} structural + {} attribute anomalies",
                out.structural, out.attribute
            );
            for f in [
                &out.files.edges,
                &out.files.attributes,
                &out.files.labels,
                &out.files.manifest,
            ] {
                println!("wrote {}", f.display());
            }
        }
        Command::Train(common) => {
            let cfg = common.build_config()?;
            let out = cmd_train(&cfg)?;
            let first = out.history.first_loss().unwrap_or(f64::NAN);
            let last = out.history.last_loss().unwrap_or(f64::NAN);
            println!("trained {} epochs, loss {first:.6} -> {last:.6}", out.history.epochs.len());
            println!("wrote {}", out.checkpoint.display());
            println!("wrote {}", out.history_csv.display());
        }
        Command::Score { common, checkpoint } => {
            let cfg = common.build_config()?;
            let out = cmd_score(&cfg, &checkpoint)?;
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Eval { common, scores } => {
            let cfg = common.build_config()?;
            let out = cmd_eval(&cfg, &scores)?;
            println!("auc = {}", out.result.auc);
            println!("wrote {}", out.json.display());
            println!("wrote {}", out.csv.display());
        }
        Command::Compare { common, checkpoint } => {
            let cfg = common.build_config()?;
            let path = cmd_compare(&cfg, &checkpoint)?;
            println!("wrote {}", path.display());
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let cfg = common.build_config()?;
            let param: SweepParam = param.parse()?;
            let grid = match values {
                Some(text) => parse_list::<f64>(&text, "grid")?,
                None => (0..=10).map(|i| f64::from(i) / 10.0).collect(),
            };
            let out = cmd_sweep(&cfg, param, &grid)?;
            println!("swept {} values of {param}", out.rows.len());
            println!("wrote {}", out.csv.display());
        }
        Command::Selfcheck => {
            let outcomes = cmd_selfcheck();
            let mut failed = 0;
            for o in &outcomes {
                let status = if o.passed { "PASS" } else { "FAIL" };
                println!("{status} {} ({})", o.name, o.detail);
                if !o.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                return Err(Error::State(format!("{failed} selfcheck(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message; map usage problems to exit code 1
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
