//! Command-line front door: run scenario scripts, execute the built-in
//! attack and fairness suites, and render reports.
//!
//! Exit codes are the machine contract: 0 all checks pass, 1 an expectation
//! failed, 2 usage or parse error.

mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reputation_core::{
    apply_feedback, closed_form_gr, fairness_threshold, fairness_threshold_scan,
    global_reputation, new_ledger, to_decimal_string, FairnessParams, GlobalReputation,
    LocalScore, ServerId, WeightMode,
};
use servnet_sim::{build_sim, evaluate, ScenarioScript};

#[derive(Parser)]
#[command(
    name = "servnet",
    about = "Reputation-system simulator for a semi-centralized anonymous storage network",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and write events.jsonl, snapshot.csv and a
    /// report into the output directory.
    Run {
        /// Scenario file (TOML; see docs/scenarios.md).
        file: PathBuf,
        /// Override the script's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: $SERVNET_OUT_DIR or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in attack scenarios and report per-scenario verdicts.
    AttackSuite {
        /// Output directory (default: $SERVNET_OUT_DIR or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the closed-form fairness model against its threshold formula
    /// and the step-by-step simulation.
    Fairness {
        /// Peer 1's negative-score period (>= 2).
        #[arg(long)]
        m1: u64,
        /// Peer 2's transaction count.
        #[arg(long)]
        t2: u64,
        /// Peer 2's negative-score period (>= 2).
        #[arg(long)]
        m2: u64,
        /// Largest T to tabulate (default: threshold + 10).
        #[arg(long)]
        t_max: Option<u64>,
    },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("SERVNET_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { file, seed, out } => cmd_run(&file, seed, out_dir(out)),
        Command::AttackSuite { out } => cmd_attack_suite(out_dir(out)),
        Command::Fairness { m1, t2, m2, t_max } => cmd_fairness(m1, t2, m2, t_max),
    }
}

/// Runs one scenario end to end; returns the report.
fn execute_script(script: &ScenarioScript) -> Result<report::RunReport, String> {
    let mut sim = build_sim(script).map_err(|e| e.to_string())?;
    sim.run(script.until);
    let snapshot = sim.snapshot_reputations();
    let results = evaluate(sim.expectations(), sim.log(), &snapshot);
    Ok(report::build_report(
        sim.name(),
        sim.log(),
        &snapshot,
        results,
    ))
}

fn write_outputs(
    dir: &std::path::Path,
    script: &ScenarioScript,
    rep: &report::RunReport,
) -> std::io::Result<()> {
    // Re-run for the export so the written log, snapshot and report all
    // come from one deterministic execution.
    let mut sim = build_sim(script).expect("validated earlier");
    sim.run(script.until);
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("events.jsonl"), sim.log().to_jsonl())?;
    std::fs::write(
        dir.join("snapshot.csv"),
        sim.snapshot_reputations().to_csv(),
    )?;
    std::fs::write(dir.join("report.txt"), &rep.text)?;
    Ok(())
}

fn cmd_run(file: &std::path::Path, seed: Option<u64>, out: PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(file) {
        Ok(t) => t,
        Err(err) => {
            eprintln!("error: cannot read {}: {err}", file.display());
            return ExitCode::from(2);
        }
    };
    let mut script = match ScenarioScript::from_toml(&text) {
        Ok(s) => s,
        Err(err) => {
            eprintln!("error: {}: {err}", file.display());
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = seed {
        script.seed = seed;
    }
    if let Err(err) = script.validate() {
        eprintln!("error: {}: {err}", file.display());
        return ExitCode::from(2);
    }
    let rep = match execute_script(&script) {
        Ok(r) => r,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(2);
        }
    };
    if let Err(err) = write_outputs(&out, &script, &rep) {
        eprintln!("error: cannot write outputs under {}: {err}", out.display());
        return ExitCode::from(2);
    }
    print!("{}", rep.text);
    println!("\noutputs under: {}", out.display());
    if rep.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_attack_suite(out: PathBuf) -> ExitCode {
    let mut all_passed = true;
    for text in servnet_sim::attacks::all() {
        let script = match ScenarioScript::from_toml(text) {
            Ok(s) => s,
            Err(err) => {
                eprintln!("error: built-in scenario failed to parse: {err}");
                return ExitCode::from(2);
            }
        };
        let rep = match execute_script(&script) {
            Ok(r) => r,
            Err(err) => {
                eprintln!("error: {err}");
                return ExitCode::from(2);
            }
        };
        let dir = out.join(&rep.scenario);
        if let Err(err) = write_outputs(&dir, &script, &rep) {
            eprintln!("error: cannot write outputs under {}: {err}", dir.display());
            return ExitCode::from(2);
        }
        println!(
            "scenario {:<26} {}",
            rep.scenario,
            if rep.passed { "PASS" } else { "FAIL" }
        );
        if !rep.passed {
            all_passed = false;
            for result in rep.expectations.iter().filter(|r| !r.passed) {
                println!(
                    "    failed: {} (actual {})",
                    result.description, result.actual
                );
            }
        }
    }
    if all_passed {
        println!("attack suite: all scenarios PASS");
        ExitCode::SUCCESS
    } else {
        println!("attack suite: FAIL");
        ExitCode::from(1)
    }
}

/// Unit-weight simulation of a peer with a negative every `m`-th feedback.
fn simulate_unit_gr(t: u64, m: u64) -> GlobalReputation {
    let mut ledger = new_ledger(ServerId::new("peer"));
    for i in 1..=t {
        let score = if i % m == 0 {
            LocalScore::Negative
        } else {
            LocalScore::Positive
        };
        ledger = apply_feedback(&ledger, score, &GlobalReputation::zero(), WeightMode::Unit);
    }
    global_reputation(&ledger)
}

fn cmd_fairness(m1: u64, t2: u64, m2: u64, t_max: Option<u64>) -> ExitCode {
    if m1 < 2 || m2 < 2 {
        eprintln!("error: negative-score periods m1 and m2 must be at least 2");
        return ExitCode::from(2);
    }
    let peer2 = FairnessParams::new(t2, m2).expect("validated above");
    let analytic = match fairness_threshold(m1, &peer2) {
        Ok(t) => t,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(2);
        }
    };
    let scan = fairness_threshold_scan(m1, &peer2).expect("same validation");
    let target = closed_form_gr(&peer2);

    println!("peer 1: negative every {m1} transactions");
    println!(
        "peer 2: T2 = {t2}, negative every {m2} transactions, GR = {}",
        to_decimal_string(target.as_rational(), 6)
    );
    println!();

    let t_max = t_max.unwrap_or(analytic + 10).max(analytic + 1);
    let step = (t_max / 20).max(1);
    println!("{:>8} {:>18} {:>18}", "T", "GR peer1(T)", "GR peer2(T)");
    let mut t = 0;
    while t <= t_max {
        let gr1 = closed_form_gr(&FairnessParams::new(t, m1).expect("m1 checked"));
        let gr2 = closed_form_gr(&FairnessParams::new(t, m2).expect("m2 checked"));
        println!(
            "{:>8} {:>18} {:>18}",
            t,
            to_decimal_string(gr1.as_rational(), 6),
            to_decimal_string(gr2.as_rational(), 6)
        );
        t += step;
    }
    println!();
    println!("analytic threshold T1 = {analytic}");
    println!("scan threshold     T1 = {scan}");
    let agree = analytic == scan;
    println!("agreement: {}", if agree { "yes" } else { "NO" });
    println!();

    // Simulated-vs-closed-form check at three period boundaries.
    let mut samples = vec![m1, (analytic / m1).max(1) * m1, ((analytic / m1) + 1) * m1];
    samples.dedup();
    println!("unit-mode simulation check (period boundaries):");
    let mut deltas_zero = true;
    for t in samples {
        let simulated = simulate_unit_gr(t, m1);
        let closed = closed_form_gr(&FairnessParams::new(t, m1).expect("m1 checked"));
        let delta = simulated.as_rational() - closed.as_rational();
        if delta.numer() != &reputation_core::RationalInt::from(0) {
            deltas_zero = false;
        }
        println!(
            "  T = {:>6}: simulated {} closed-form {} delta {}",
            t,
            to_decimal_string(simulated.as_rational(), 6),
            to_decimal_string(closed.as_rational(), 6),
            to_decimal_string(&delta, 6)
        );
    }
    if agree && deltas_zero {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
