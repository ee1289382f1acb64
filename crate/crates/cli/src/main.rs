use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hrnlse::harness::{
    apply_overrides, emit_results, load_config, reference_snapshots, sweep_table, tolerance_sweep,
    Preset, RunSummary,
};
use hrnlse::{run, Error, RunConfig};

/// hr-adaptive moving mesh solver for the cubic nonlinear Schrodinger equation.
#[derive(Parser, Debug)]
#[command(name = "hrnlse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation and write series, snapshots and counters.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat a run for several RTOL values and tabulate N^0 and the final L2 error.
    Sweep {
        #[command(flatten)]
        source: ConfigSource,
        /// Comma separated RTOL values.
        #[arg(long, value_delimiter = ',', required = true)]
        rtol: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute (or reuse) the uniform-mesh reference snapshots of a preset.
    Reference {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ConfigSource {
    /// Named preset.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set refine.rtol=1e-2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigSource {
    fn resolve(&self) -> hrnlse::Result<(RunConfig, Option<String>)> {
        let (base, name) = match (&self.preset, &self.config) {
            (Some(name), _) => (Preset::from_name(name)?.config(), Some(name.clone())),
            (None, Some(path)) => (load_config(path)?, None),
            (None, None) => unreachable!("clap requires one source"),
        };
        let config = apply_overrides(&base, &self.overrides)?;
        config.validate()?;
        Ok((config, name))
    }
}

fn create_dir(dir: &Path) -> hrnlse::Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn error_line(kind: &str, message: &str) {
    eprintln!("error kind={kind} message={message:?}");
}

fn execute(command: Command) -> hrnlse::Result<bool> {
    match command {
        Command::Run { source, out } => {
            let (config, name) = source.resolve()?;
            create_dir(&out)?;
            let result = run(config)?;
            for path in emit_results(&result, name.as_deref(), &out)? {
                log::info!("wrote {}", path.display());
            }
            let summary = RunSummary::new(&result, name.as_deref());
            println!(
                "{}",
                serde_json::to_string(&summary).expect("summary serialises")
            );
            Ok(true)
        }
        Command::Sweep { source, rtol, out } => {
            let (config, _) = source.resolve()?;
            create_dir(&out)?;
            let rows = tolerance_sweep(&config, &rtol);
            let table = sweep_table(&rows);
            let path = out.join("sweep.csv");
            fs::write(&path, &table).map_err(|source| Error::Io { path, source })?;
            print!("{table}");
            let mut ok = true;
            for row in &rows {
                if let Err(e) = &row.outcome {
                    error_line(e.kind(), &format!("rtol {}: {e}", row.rtol));
                    ok = false;
                }
            }
            Ok(ok)
        }
        Command::Reference { preset, out } => {
            let preset = Preset::from_name(&preset)?;
            create_dir(&out)?;
            let snaps = reference_snapshots(preset, &out)?;
            println!("{} reference snapshots in {}", snaps.len(), out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let summary: Vec<&str> = text
                .lines()
                .map(str::trim)
                .take_while(|l| !l.is_empty())
                .collect();
            error_line("usage", summary.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error_line(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
