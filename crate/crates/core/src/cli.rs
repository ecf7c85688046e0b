//! Command-line front end. Exit codes: 0 ok, 1 verification failure,
//! 2 usage or configuration error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::canonical::{canonicalize, Value};
use crate::crypto::Hash256;
use crate::explain::{explain_linear, Explanation};
use crate::harness::{
    run_workflow, score, tamper, verify_decision, DecisionVerdict, HarnessError, ScenarioConfig, TamperTarget,
    WorldState, REPORT_FILE,
};
use crate::learning::predict;
use crate::ledger::{ChainStatus, Ledger, TxBody};

#[derive(Debug, Parser)]
#[command(
    name = "bxhf",
    version,
    about = "Ledger-audited explainable federated prediction simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the default heart-failure scenario.
    Init {
        #[arg(long)]
        out: PathBuf,
    },
    /// Build and run a scenario, writing the world into a directory.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every block hash and link of a ledger dump.
    VerifyChain {
        #[arg(long)]
        ledger: PathBuf,
    },
    /// List every transaction that touches a record, oldest first.
    Audit {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        record: String,
    },
    /// Re-derive one decision and compare against its on-chain hashes.
    VerifyDecision {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        decision: String,
    },
    /// Flip one byte of a block, sealed record or stored explanation.
    Tamper {
        #[arg(long)]
        world: PathBuf,
        /// block:<index>, record:<id> or explanation:<decision id>
        #[arg(long)]
        target: String,
        #[arg(long)]
        offset: usize,
    },
    /// Print the security score and trust objective of a world.
    Score {
        #[arg(long)]
        world: PathBuf,
    },
    /// Print the explanation of every decision on a record.
    Explain {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        record: String,
    },
}

enum Failure {
    Verification(String),
    Usage(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::IntegrityAlarm { .. } => Failure::Verification(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

/// Parse `std::env::args` and run.
pub fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => execute(cli, &mut std::io::stdout().lock()),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> ExitCode {
    let result = match cli.command {
        Command::Init { out: path } => init(&path, out),
        Command::Run {
            scenario,
            seed,
            out: dir,
        } => run(&scenario, seed, &dir, out),
        Command::VerifyChain { ledger } => verify_chain(&ledger, out),
        Command::Audit { ledger, record } => audit(&ledger, &record, out),
        Command::VerifyDecision { world, decision } => verify(&world, &decision, out),
        Command::Tamper { world, target, offset } => tamper_cmd(&world, &target, offset, out),
        Command::Score { world } => score_cmd(&world, out),
        Command::Explain { world, record } => explain_cmd(&world, &record, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn init(path: &Path, out: &mut dyn Write) -> CmdResult {
    fs::write(path, ScenarioConfig::demo().to_pretty())?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

fn run(scenario: &Path, seed: u64, dir: &Path, out: &mut dyn Write) -> CmdResult {
    let mut config = ScenarioConfig::parse(&fs::read_to_string(scenario)?)?;
    config.seed = seed;
    let mut world = WorldState::build(config)?;
    let report = run_workflow(&mut world)?;
    world.save(dir)?;
    fs::write(dir.join(REPORT_FILE), report.to_canonical())?;
    for step in &report.steps {
        writeln!(
            out,
            "block {:>3}  {:<24} {} tx",
            step.block_index, step.name, step.transactions
        )?;
    }
    writeln!(
        out,
        "decisions {}  denied {}",
        report.decision_count, report.denied_count
    )?;
    for (id, verdict) in &report.verifications {
        writeln!(out, "decision {id}  {verdict}")?;
    }
    writeln!(
        out,
        "I={:.4} P={:.4} A={:.4} S={:.4}",
        report.security.integrity, report.security.provenance, report.security.auditability, report.security.score
    )?;
    writeln!(
        out,
        "loss={:.6} omega_bar={:.6} J={:.6}",
        report.trust.empirical_loss, report.trust.mean_penalty, report.trust.objective
    )?;
    writeln!(out, "model {}", report.global_model_hash)?;
    writeln!(out, "tip   {}", report.final_block_hash)?;
    if report.all_valid() {
        Ok(())
    } else {
        Err(Failure::Verification("some decisions failed verification".into()))
    }
}

fn load_ledger(path: &Path) -> Result<Ledger, Failure> {
    Ledger::load(&fs::read(path)?).map_err(|e| Failure::Usage(e.to_string()))
}

fn verify_chain(path: &Path, out: &mut dyn Write) -> CmdResult {
    let ledger = load_ledger(path)?;
    match ledger.verify_chain() {
        ChainStatus::Valid => {
            writeln!(out, "valid ({} blocks)", ledger.len())?;
            Ok(())
        }
        ChainStatus::CorruptAt(i) => {
            writeln!(out, "corrupt at block {i}")?;
            Err(Failure::Verification(format!("chain corrupt at block {i}")))
        }
    }
}

fn audit(path: &Path, record: &str, out: &mut dyn Write) -> CmdResult {
    let ledger = load_ledger(path)?;
    let trail = ledger.audit_trail(record);
    for tx in &trail {
        let detail = match &tx.body {
            TxBody::AccessDecision(d) => format!(" {} {} ({})", d.purpose, d.outcome, d.reason),
            TxBody::ConsentUpdate(p) => format!(" {} {} granted={}", p.policy_id, p.purpose, p.granted),
            _ => String::new(),
        };
        writeln!(
            out,
            "t={:<4} {:<18} actor={:<16} tx={}{}",
            tx.logical_time,
            tx.kind(),
            tx.actor,
            tx.tx_id,
            detail
        )?;
    }
    writeln!(out, "{} transaction(s)", trail.len())?;
    Ok(())
}

fn parse_hash(s: &str) -> Result<Hash256, Failure> {
    s.parse()
        .map_err(|_| Failure::Usage(format!("{s:?} is not a 64-digit hex id")))
}

fn verify(dir: &Path, decision: &str, out: &mut dyn Write) -> CmdResult {
    let id = parse_hash(decision)?;
    let world = WorldState::load(dir)?;
    let verdict = verify_decision(&world, &id)?;
    writeln!(out, "{verdict}")?;
    match verdict {
        DecisionVerdict::Valid => Ok(()),
        DecisionVerdict::Mismatch(_) => Err(Failure::Verification(format!("decision {id}: {verdict}"))),
    }
}

fn tamper_cmd(dir: &Path, target: &str, offset: usize, out: &mut dyn Write) -> CmdResult {
    let target: TamperTarget = target.parse()?;
    let mut world = WorldState::load(dir)?;
    tamper(&mut world, &target, offset)?;
    world.save(dir)?;
    writeln!(out, "flipped byte {offset} of {target}")?;
    Ok(())
}

fn score_cmd(dir: &Path, out: &mut dyn Write) -> CmdResult {
    let world = WorldState::load(dir)?;
    let (security, trust) = score(&world)?;
    let v = Value::map()
        .with("A", security.auditability)
        .with("I", security.integrity)
        .with("J", trust.objective)
        .with("P", security.provenance)
        .with("S", security.score)
        .with("loss", trust.empirical_loss)
        .with("omega_bar", trust.mean_penalty)
        .build();
    let line = canonicalize(&v).map_err(HarnessError::from)?;
    writeln!(out, "{}", line.as_str())?;
    Ok(())
}

fn explain_cmd(dir: &Path, record: &str, out: &mut dyn Write) -> CmdResult {
    let world = WorldState::load(dir)?;
    let sealed = world
        .vault
        .get(record)
        .ok_or_else(|| Failure::Usage(format!("unknown record {record:?}")))?;
    let decisions = world.decisions_for(record);
    if decisions.is_empty() {
        let model = world.global().ok_or(HarnessError::NotRun)?;
        let reg = world
            .ledger
            .registration(record)
            .ok_or_else(|| Failure::Verification(format!("record {record:?} has no registration")))?;
        let plain = sealed
            .open(&world.keys, &reg.commitment)
            .map_err(|e| Failure::Verification(format!("integrity alarm on {record:?}: {e}")))?;
        let prediction = predict(model, &plain.features).map_err(HarnessError::from)?;
        let e =
            explain_linear(model, &world.spec, &plain.features, record, reg.commitment).map_err(HarnessError::from)?;
        writeln!(
            out,
            "no recorded decision; current model gives p={:.6}",
            prediction.value
        )?;
        write!(out, "{}", e.table())?;
        return Ok(());
    }
    for id in decisions {
        let stored = world
            .decisions
            .get(&id)
            .ok_or_else(|| Failure::Verification(format!("decision {id}: explanation missing")))?;
        let e = Value::parse_canonical::<Explanation>(&stored.explanation)
            .map_err(|err| Failure::Verification(format!("decision {id}: explanation unreadable: {err}")))?;
        writeln!(out, "decision {id}  p={:.6}", stored.prediction.value)?;
        write!(out, "{}", e.table())?;
    }
    Ok(())
}
