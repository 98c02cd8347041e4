//! Command-line experiment runner.
//!
//! Usage: `misspec-bounds <scenario> [--config FILE] [--key=value ...] [--out DIR]`
//!
//! Scenarios: box1, box2, box3, box4, doa_sweep, random_order_check.
//! The `MISSPEC_SEED` environment variable overrides the configured seed.
//!
//! Exit codes: 0 all scenario assertions passed; 1 an assertion failed;
//! 2 usage or configuration error; 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use misspec_bounds::experiments::{run_scenario, write_outputs, ExperimentConfig, Scenario};
use misspec_bounds::Error;

const USAGE: &str = "usage: misspec-bounds <scenario> [--config FILE] [--key=value ...] [--out DIR]
scenarios: box1 | box2 | box3 | box4 | doa_sweep | random_order_check
settings:  --n= --n_min= --n_max= --sigma2= --epsilon= --sigma1_sq= --sigma2_sq=
           --theta0= --m= --rho=r1,r2,... --s_re= --s_im= --phi= --n_cases=
           --n_trials= --mc_samples= --z_threshold= --seed=
env:       MISSPEC_SEED overrides the seed";

struct Cli {
    scenario: Scenario,
    config_file: Option<PathBuf>,
    overrides: Vec<(String, String)>,
}

fn parse_args(args: &[String]) -> Result<Cli, String> {
    let mut it = args.iter();
    let scenario: Scenario = it
        .next()
        .ok_or_else(|| "missing scenario".to_string())?
        .parse()
        .map_err(|e: Error| e.to_string())?;
    let mut config_file = None;
    let mut overrides = Vec::new();
    while let Some(arg) = it.next() {
        if let Some(v) = arg.strip_prefix("--config=") {
            config_file = Some(PathBuf::from(v));
        } else if arg == "--config" {
            let v = it.next().ok_or_else(|| "--config needs a file".to_string())?;
            config_file = Some(PathBuf::from(v));
        } else if let Some(v) = arg.strip_prefix("--out=") {
            overrides.push(("out".to_string(), v.to_string()));
        } else if arg == "--out" {
            let v = it.next().ok_or_else(|| "--out needs a directory".to_string())?;
            overrides.push(("out".to_string(), v.clone()));
        } else if let Some(rest) = arg.strip_prefix("--") {
            let (key, value) = rest
                .split_once('=')
                .ok_or_else(|| format!("expected --key=value, got '{arg}'"))?;
            overrides.push((key.to_string(), value.to_string()));
        } else {
            return Err(format!("unexpected argument '{arg}'"));
        }
    }
    Ok(Cli { scenario, config_file, overrides })
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        Error::Io(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--help" || a == "-h") || args.is_empty() {
        eprintln!("{USAGE}");
        return ExitCode::from(if args.is_empty() { 2 } else { 0 });
    }
    let cli = match parse_args(&args) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    let cfg = match ExperimentConfig::resolve(
        cli.scenario,
        cli.config_file.as_deref(),
        &cli.overrides,
    ) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code_for(&e).max(2));
        }
    };
    let report = match run_scenario(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code_for(&e));
        }
    };
    if let Err(e) = write_outputs(&cfg, &report) {
        eprintln!("error writing outputs: {e}");
        return ExitCode::from(3);
    }
    for check in &report.checks {
        println!("{} - {}", if check.passed { "PASS" } else { "FAIL" }, check.name);
    }
    if let Some(dir) = &cfg.output_dir {
        println!(
            "wrote {} rows to {}",
            report.table.rows.len(),
            dir.join(format!("{}.csv", cfg.scenario.name())).display()
        );
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
