use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use surround_reid::ablate::{run_study, Study};
use surround_reid::io::{read_jsonl, write_jsonl, DatasetRecord, ResultsRecord};
use surround_reid::pipeline::{evaluate_records, simulate_records, track_records, EvaluationReport};
use surround_reid::{Error, RunConfig};

#[derive(Parser)]
#[command(name = "surround-reid", version, about = "Surround-view vehicle re-identification engine and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed (the first seed for ablations).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the tracking and association pipeline over a dataset.
    Track {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score results against a dataset's ground truth.
    Evaluate {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Report file; defaults to `<results>.report.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Run an ablation study: table1, table2 or table3.
    Ablate {
        study: String,
        #[command(flatten)]
        common: Common,
        /// Machine-readable table (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

fn load_config(common: &Common) -> surround_reid::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_toml_str(&std::fs::read_to_string(path)?).map_err(|e| match e {
            Error::Config(inner) => Error::InvalidConfig(format!("{}: {inner}", path.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
        cfg.ablate.base_seed = seed;
    }
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidConfig(_) => 2,
        Error::DimensionMismatch { .. } => 3,
        Error::SequenceMismatch(_) => 4,
        _ => 1,
    }
}

fn threads() -> Option<usize> {
    std::env::var("SURROUND_REID_THREADS").ok()?.parse().ok()
}

fn print_report(report: &EvaluationReport, format: Format) {
    match format {
        Format::Text => {
            println!("IDSW {}", report.total_idsw);
            println!("ID {}", report.total_id);
            match report.ic {
                Some(ic) => println!("IC {ic:.4}"),
                None => println!("IC undefined (no ground truth)"),
            }
            for (cam, c) in &report.per_camera {
                let ic = c.ic.map_or("undefined".to_owned(), |v| format!("{v:.4}"));
                println!("  {cam:<6} IDSW {:>6} ID {:>7} IC {ic}", c.idsw, c.id);
            }
        }
        Format::Csv => {
            println!("camera,idsw,id,ic");
            for (cam, c) in &report.per_camera {
                println!("{cam},{},{},{}", c.idsw, c.id, c.ic.map_or(String::new(), |v| format!("{v:.4}")));
            }
            let ic = report.ic.map_or(String::new(), |v| format!("{v:.4}"));
            println!("total,{},{},{ic}", report.total_idsw, report.total_id);
        }
    }
}

fn default_report_path(results: &Path) -> PathBuf {
    let mut s = results.as_os_str().to_owned();
    s.push(".report.json");
    PathBuf::from(s)
}

fn run(cli: Cli) -> surround_reid::Result<()> {
    match cli.command {
        Command::Simulate { common, out } => {
            let cfg = load_config(&common)?;
            let records = simulate_records(&cfg)?;
            write_jsonl(&out, &records)?;
            let per_camera = |c: surround_reid::types::CameraId| records.iter().filter(|r| r.camera == c).count();
            println!(
                "simulated {} vehicles over {} frames: {} records (left {}, front {}, right {})",
                cfg.sim.n_vehicles,
                cfg.sim.duration_frames,
                records.len(),
                per_camera(surround_reid::types::CameraId::Left),
                per_camera(surround_reid::types::CameraId::Front),
                per_camera(surround_reid::types::CameraId::Right),
            );
        }
        Command::Track { dataset, common, out } => {
            let cfg = load_config(&common)?;
            let records: Vec<DatasetRecord> = read_jsonl(&dataset)?;
            let results = track_records(&records, &cfg)?;
            write_jsonl(&out, &results)?;
            let stats = surround_reid::pipeline::RunStats::from_results(&results);
            println!(
                "tracked {} records: {} tracks created, {} template updates, {} deletions, {} exits, {} inherits, {} new ids",
                records.len(),
                stats.tracks_created,
                stats.template_updates,
                stats.deletions,
                stats.exits,
                stats.inherits,
                stats.new_ids
            );
        }
        Command::Evaluate { results, dataset, common, out, format } => {
            let cfg = load_config(&common)?;
            let data: Vec<DatasetRecord> = read_jsonl(&dataset)?;
            let res: Vec<ResultsRecord> = read_jsonl(&results)?;
            let report = evaluate_records(&data, &res, &cfg)?;
            print_report(&report, format);
            let path = out.unwrap_or_else(|| default_report_path(&results));
            std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
        }
        Command::Ablate { study, common, out, format } => {
            let study: Study = study.parse()?;
            let cfg = load_config(&common)?;
            let table = run_study(study, &cfg, threads())?;
            match format {
                Format::Text => print!("{}", table.to_text()),
                Format::Csv => print!("{}", table.to_csv()),
            }
            if let Some(path) = out {
                std::fs::write(path, serde_json::to_string_pretty(&table)? + "\n")?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
