use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cml_lab::{emit_report, parse_config, preflight_output_dir, run_experiment, ReportFormat};
use cml_lab_core::transfer::{export_triplets, ulam_matrix};

/// Transfer-operator laboratory for coupled map lattices.
#[derive(Parser)]
#[command(name = "cml-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments listed in a config file.
    Run {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        format: Format,
    },
    /// Parse and validate a config file without running anything.
    Validate { config: PathBuf },
    /// Assemble the configured operator and write it as triplets.
    ExportOperator {
        config: PathBuf,
        /// Output file; defaults to `operator.txt` in the output directory.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn output_dir(configured: PathBuf) -> PathBuf {
    std::env::var_os("CML_LAB_OUTPUT_DIR").map(PathBuf::from).unwrap_or(configured)
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("CML_LAB_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| format!("CML_LAB_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("CML_LAB_THREADS must be a positive integer".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Validate { config } => parse_config(&config).map(|cfg| {
            println!("{}: ok ({} experiments)", config.display(), cfg.experiments.len());
        }).map_err(|e| e.to_string()),
        Command::Run { config, format } => (|| {
            let cfg = parse_config(&config).map_err(|e| e.to_string())?;
            let dir = output_dir(cfg.output_dir.clone());
            preflight_output_dir(&dir).map_err(|e| format!("output directory {}: {e}", dir.display()))?;
            let report = run_experiment(&cfg);
            let format = match format {
                Format::Json => ReportFormat::Json,
                Format::Csv => ReportFormat::Csv,
                Format::All => ReportFormat::All,
            };
            let files = emit_report(&report, format, &dir).map_err(|e| e.to_string())?;
            print!("{}", cml_lab::summary_text(&report));
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        })(),
        Command::ExportOperator { config, output } => (|| {
            let cfg = parse_config(&config).map_err(|e| e.to_string())?;
            let path = match output {
                Some(p) => p,
                None => {
                    let dir = output_dir(cfg.output_dir.clone());
                    preflight_output_dir(&dir).map_err(|e| format!("output directory {}: {e}", dir.display()))?;
                    dir.join("operator.txt")
                }
            };
            let map = cfg.build_map();
            let metric = cfg.build_metric();
            let f = cfg.potential.potential(&map, &metric, cfg.operator.k).map_err(|e| e.to_string())?;
            let op = &cfg.operator;
            let built = ulam_matrix(op.kind(), &op.ulam(op.bins), &map, &f, &cfg.build_coupling(), op.tol, op.max_iter)
                .map_err(|e| e.to_string())?;
            std::fs::write(&path, export_triplets(&built.operator)).map_err(|e| format!("{}: {e}", path.display()))?;
            println!("wrote {}", path.display());
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
