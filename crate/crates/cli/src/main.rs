use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rfmap_cli::commands::{
    cmd_baselines, cmd_export, cmd_generate, cmd_grad_check, cmd_run, cmd_sweep, ExportKind,
};
use rfmap_cli::config::RunConfig;
use rfmap_cli::exit_code_for;
use rfmap_core::error::invalid_argument;
use rfmap_core::eval::ParamKind;

#[derive(Parser)]
#[command(
    name = "rfmap",
    about = "Construct dense multipath RF maps from sparse samples",
    version
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Run configuration file (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output/run directory (default "rfmap-out").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to RFMAP_THREADS, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the scene and write the ground-truth dataset.
    Generate,
    /// Run the full construction pipeline and write all artifacts.
    Run,
    /// Run comparison methods and write the comparison table.
    Baselines {
        /// Comma-separated subset of kriging,separate,gnn_only,pinn_only,proposed.
        #[arg(long, value_delimiter = ',', default_values_t = default_methods())]
        methods: Vec<String>,
    },
    /// Repeat the pipeline across sampling rates.
    Sweep {
        /// Comma-separated sampling rates.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.05, 0.10, 0.15, 0.20])]
        rates: Vec<f64>,
    },
    /// Produce plot-ready CSVs from a finished run directory.
    Export {
        /// One of heatmap, cdf, cir, graph.
        #[arg(long)]
        kind: String,
        /// Parameter for heatmap exports: power, delay, elevation, azimuth.
        #[arg(long, default_value = "power")]
        param: String,
        /// 1-based path index for heatmap exports.
        #[arg(long, default_value_t = 1)]
        path_index: usize,
        /// "x,y" receiver location for CIR exports.
        #[arg(long)]
        coords: Option<String>,
    },
    /// Validate analytic gradients against finite differences.
    GradCheck,
}

fn default_methods() -> Vec<String> {
    rfmap_cli::METHODS.iter().map(|s| s.to_string()).collect()
}

fn configure_threads(requested: Option<usize>) {
    let from_env = std::env::var("RFMAP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = requested.or(from_env) {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn run(cli: Cli) -> rfmap_core::Result<()> {
    configure_threads(cli.global.threads);
    let mut config = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        config.seed = seed;
    }
    let out = cli
        .global
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("rfmap-out"));

    match &cli.command {
        Command::Generate => cmd_generate(&config, &out),
        Command::Run => cmd_run(&config, &out).map(|_| ()),
        Command::Baselines { methods } => cmd_baselines(&config, &out, methods).map(|_| ()),
        Command::Sweep { rates } => cmd_sweep(&config, &out, rates).map(|_| ()),
        Command::Export {
            kind,
            param,
            path_index,
            coords,
        } => {
            let kind = match kind.as_str() {
                "heatmap" => ExportKind::Heatmap {
                    param: ParamKind::parse(param)
                        .ok_or_else(|| invalid_argument(format!("unknown parameter {param:?}")))?,
                    path_index: *path_index,
                },
                "cdf" => ExportKind::Cdf,
                "cir" => {
                    let raw = coords
                        .as_ref()
                        .ok_or_else(|| invalid_argument("cir export needs --coords x,y"))?;
                    let parts: Vec<&str> = raw.split(',').collect();
                    let parse = |s: &str| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| invalid_argument(format!("bad coordinate {s:?}")))
                    };
                    if parts.len() != 2 {
                        return Err(invalid_argument("cir export needs --coords x,y"));
                    }
                    ExportKind::Cir {
                        coords: (parse(parts[0])?, parse(parts[1])?),
                    }
                }
                "graph" => ExportKind::Graph,
                other => {
                    return Err(invalid_argument(format!(
                        "unknown export kind {other:?}; expected heatmap, cdf, cir, or graph"
                    )))
                }
            };
            cmd_export(&config, &out, &kind).map(|_| ())
        }
        Command::GradCheck => {
            if cmd_grad_check(&config)? {
                Ok(())
            } else {
                Err(rfmap_core::Error::Training(
                    "gradient check failed".to_string(),
                ))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err) as u8)
        }
    }
}
