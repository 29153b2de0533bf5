use clap::{Parser, Subcommand};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use pvshare::audit::{verify_bytes, ChainStatus};
use pvshare::ingestion::{group_by_meter, ingest_path, normalize_to_slots, IngestError};
use pvshare::model::time::format_slot;
use pvshare::model::{MeterId, SeriesKind};
use pvshare::runner::{history_kors, run, synthesize_demo_data, PolicyName, RadiationProfile, RunConfig, RunError};

/// Collective self-consumption settlement for a PV installation shared by
/// several buildings.
#[derive(Parser)]
#[command(name = "pvshare", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a meter CSV to 30-minute Wh slots.
    Ingest {
        input: PathBuf,
        /// Meters to treat as production (others are consumption).
        #[arg(long = "production")]
        production: Vec<MeterId>,
        /// Write slots here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive static keys from the config's consumption history.
    DeriveKors {
        #[arg(long)]
        config: PathBuf,
    },
    /// Settle the configured policies and write reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Restrict to these policies (repeatable).
        #[arg(long = "policy")]
        policies: Vec<PolicyName>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write seeded demo meter data, history and config.
    SynthData {
        #[arg(long, default_value = "high")]
        profile: RadiationProfile,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a ledger file's hash chain.
    AuditVerify { ledger: PathBuf },
}

fn fail(err: RunError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn ingest(input: &Path, production: &[MeterId], out: Option<&Path>) -> Result<(), RunError> {
    let outcome = ingest_path(input).map_err(|e| match e {
        IngestError::Io { path, message } => RunError::Io {
            path: path.into(),
            message,
        },
        other => RunError::Validation(vec![other.to_string()]),
    })?;
    let mut findings: Vec<String> = outcome.row_errors.iter().map(|e| e.to_string()).collect();
    let mut text = String::from("meter_id,slot,energy_wh\n");
    for (meter, (_, records)) in group_by_meter(&outcome.records) {
        let kind = if production.contains(&meter) {
            SeriesKind::Production
        } else {
            SeriesKind::Consumption
        };
        match normalize_to_slots(&records, kind) {
            Ok(series) => {
                for (ts, e) in series.slots() {
                    text.push_str(&format!("{meter},{},{}\n", format_slot(ts), e.wh()));
                }
            }
            Err(e) => findings.push(e.to_string()),
        }
    }
    if !findings.is_empty() {
        return Err(RunError::Validation(findings));
    }
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| RunError::Io {
            path: path.into(),
            message: e.to_string(),
        }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| RunError::Io {
                path: "<stdout>".into(),
                message: e.to_string(),
            }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest { input, production, out } => ingest(&input, &production, out.as_deref()),
        Command::DeriveKors { config } => RunConfig::load(&config).and_then(|cfg| {
            let kors = history_kors(&cfg)?;
            println!("[static_kors]");
            let map: BTreeMap<_, _> = kors.iter().collect();
            for (id, c) in map {
                println!("{id} = {c}");
            }
            Ok(())
        }),
        Command::Run { config, policies, out } => RunConfig::load(&config).and_then(|mut cfg| {
            if !policies.is_empty() {
                cfg.policies = policies;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let settlement = run(&cfg)?;
            for o in &settlement.outcomes {
                let scr = o.scr.scr.map_or("undefined".to_string(), |s| format!("{:.2} %", s * rust_decimal::Decimal::from(100)));
                println!("{:<16} SCR {scr:>9}  savings {}", o.name.as_str(), o.savings.total);
            }
            println!("wrote {}", cfg.output_dir.display());
            Ok(())
        }),
        Command::SynthData { profile, seed, out } => {
            synthesize_demo_data(profile, seed).write_to(&out).map(|()| println!("wrote {}", out.display()))
        }
        Command::AuditVerify { ledger } => match std::fs::read(&ledger) {
            Err(e) => Err(RunError::Io {
                path: ledger,
                message: e.to_string(),
            }),
            Ok(bytes) => match verify_bytes(&bytes) {
                ChainStatus::Intact { records } => {
                    println!("intact ({records} records)");
                    Ok(())
                }
                ChainStatus::Broken { index, reason } => {
                    println!("broken at record {index}: {reason}");
                    return ExitCode::from(1);
                }
            },
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
