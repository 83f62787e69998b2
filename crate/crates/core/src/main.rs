use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use crn::analysis::BoundStatus;
use crn::pipeline;
use crn::verify::{run_verify, Faults, Level};
use crn::{Error, ExperimentConfig, Mode};

#[derive(Parser)]
#[command(name = "crn", version, about = "Chemical reaction network classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run feature-subset selection and write selection.json.
    Select(Common),
    /// Train output weights and write model.json and trace.csv.
    Train(Common),
    /// Score the held-out samples with model.json.
    Infer(Common),
    /// Accuracy against complexity over repeated splits.
    Sweep(Common),
    /// Run the built-in self-checks.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "quick")]
        level: Level,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    mode: Option<Mode>,
}

impl Common {
    fn load(&self) -> crn::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.reps {
            cfg.repetitions = r;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> crn::Result<()> {
    match cli.command {
        Command::Select(c) => {
            let cfg = c.load()?;
            let sel = pipeline::cmd_select(&cfg)?;
            println!("selected {} subsets of depth {}", sel.len(), sel.depth);
        }
        Command::Train(c) => {
            let cfg = c.load()?;
            let model = pipeline::cmd_train(&cfg)?;
            println!("trained {} subsets x {} classes", model.subsets.len(), model.n_classes);
        }
        Command::Infer(c) => {
            let cfg = c.load()?;
            let acc = pipeline::cmd_infer(&cfg)?;
            println!("test accuracy {:.4}", acc);
        }
        Command::Sweep(c) => {
            let cfg = c.load()?;
            info!("sweep with {} workers", pipeline::worker_count());
            let res = pipeline::cmd_sweep(&cfg)?;
            if let Some(p) = res.peak() {
                println!("peak {:.4} at complexity {}", p.mean, p.complexity);
            }
        }
        Command::Verify { common, level } => {
            let cfg = common.load()?;
            let (results, report) = run_verify(level, Faults::default(), cfg.seed)?;
            for r in &results {
                println!("{:<34} {}  {}", r.name, if r.passed { "pass" } else { "FAIL" }, r.detail);
            }
            for row in &report.rows {
                let status = match row.status {
                    BoundStatus::Pass => "pass",
                    BoundStatus::Fail => "FAIL",
                    BoundStatus::NotInstantiated => "not_instantiated",
                };
                println!("bound {:<28} {status}", row.name);
            }
            std::fs::create_dir_all(&cfg.out_dir)?;
            std::fs::write(cfg.out_dir.join("bounds.csv"), report.to_csv()?)?;
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
            if !failed.is_empty() || !report.passed() {
                return Err(Error::Verification(format!("failed: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
