use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fingae::pipeline::{self, AblationMode, RunConfig};

#[derive(Parser)]
#[command(name = "fingae", version, about = "Graph auto-encoder clustering of companies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the graph and features, write edges, feature stages and manifest.
    Build(Common),
    /// Cross-validate the grid; write cv_report.json and cv_choice.json.
    Cv(Common),
    /// Final training, test AP, clustering and exports.
    TrainEval(Common),
    /// Run train-eval once per ablation mode.
    Ablate(Common),
    /// Write a planted-partition dataset into the output directory.
    Synth(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run config; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<AblationMode>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Read cooc.csv, prices.csv and labels.csv from this directory.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> fingae::error::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(d) = &self.data_dir {
            cfg.use_dataset_dir(d);
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> fingae::error::Result<String> {
    Ok(match cli.command {
        Command::Build(c) => {
            let m = pipeline::cmd_build(&c.resolve()?)?;
            format!(
                "{} nodes, {} raw edges, {} after threshold, {} clipped entries",
                m.nodes, m.raw_edges, m.thresholded_edges, m.clipped_entries
            )
        }
        Command::Cv(c) => {
            let out = pipeline::cmd_cv(&c.resolve()?)?;
            format!(
                "best config {} of {}: mean AP {:.4}, {} epochs",
                out.best_index,
                out.report.len(),
                out.report[out.best_index].mean_ap,
                out.epochs
            )
        }
        Command::TrainEval(c) => {
            let m = pipeline::cmd_train_eval(&c.resolve()?)?;
            format!(
                "{}: test AP {:.4}, purity {:.4}, NMI {:.4}",
                m.mode, m.test_ap, m.latent.purity, m.latent.nmi
            )
        }
        Command::Ablate(c) => pipeline::cmd_ablate(&c.resolve()?)?
            .iter()
            .map(|r| format!("{}: test AP {:.4}, purity {:.4}, NMI {:.4}", r.mode, r.test_ap, r.purity, r.nmi))
            .collect::<Vec<_>>()
            .join("\n"),
        Command::Synth(c) => {
            let cfg = c.resolve()?;
            let s = pipeline::cmd_synth(&cfg)?;
            format!("{} companies in groups {:?} -> {}", s.config.n_companies, s.group_sizes, cfg.out_dir.display())
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
