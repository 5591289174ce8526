//! Command-line driver: fitting, feasibility checks, simulation, moments,
//! pricing, and saddle-point verification as reproducible runs.
//!
//! Every command writes its outputs into `--out` together with a
//! `manifest.json` recording input/output checksums, the seed, and wall-clock
//! timestamps. Timestamps live only in the manifest, so rerunning a command
//! with the same inputs reproduces every other output byte for byte.

// Validation uses `!(x > 0.0)` deliberately so NaN fails closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use clap::{Parser, Subcommand};
use riskshare::compensators::{check_assumption_1, check_assumption_2, ModelEnsemble};
use riskshare::controls::MarketParams;
use riskshare::error::{Error, Result};
use riskshare::fitting;
use riskshare::manifest::RunManifest;
use riskshare::moments::{Measure, MomentReport};
use riskshare::pricing;
use riskshare::simulate::{self, SimConfig};
use riskshare::verify;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "riskshare",
    version,
    about = "Optimal risk sharing under model ambiguity: fit, simulate, price, verify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a cross-validation model ensemble from a policy CSV
    /// (columns: policy_id,exposure,n_claims,avg_claim).
    Fit {
        /// Input portfolio CSV.
        data_csv: PathBuf,
        /// Number of candidate models (subsample refits).
        #[arg(long, default_value_t = 10)]
        n_models: usize,
        /// Subsample fraction in (0, 1].
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check the ensemble's integrability assumptions (exit 3 on failure).
    Check {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Simulate paths of the optimally-shared wealth and the model weights.
    Simulate {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        market: PathBuf,
        /// Sampling measure: qstar, pc, or pk:IDX (1-based).
        #[arg(long, default_value = "qstar")]
        measure: String,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Recording grid: "t1,t2,..." or "start:end:step"; must start at 0
        /// and end at the horizon. Default: 50 uniform steps.
        #[arg(long)]
        grid: Option<String>,
        /// Number of leading paths written to paths.csv (summaries and KDEs
        /// always use every path).
        #[arg(long, default_value_t = 100)]
        csv_paths: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Closed-form moments at the requested times.
    Moments {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        market: PathBuf,
        /// Measure: qstar, pc, or pk:IDX (1-based).
        #[arg(long, default_value = "qstar")]
        measure: String,
        /// Evaluation times: "t1,t2,..." or "start:end:step".
        #[arg(long)]
        grid: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Optimize the counterparty's safety loading η.
    Price {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        market: PathBuf,
        /// Upper end of the η search interval.
        #[arg(long, default_value_t = 1.0)]
        eta_max: f64,
        /// Optional comma-separated θ values for a risk-aversion sweep.
        #[arg(long)]
        theta_sweep: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Verify the saddle point: HJBI residuals under randomized admissible
    /// control perturbations (exit 4 if any check fails).
    Verify {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        market: PathBuf,
        /// Randomized perturbations per control side (canonical ones are
        /// always included).
        #[arg(long, default_value_t = 25)]
        n_perturbations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Fit {
            data_csv,
            n_models,
            fraction,
            seed,
            out,
        } => cmd_fit(&data_csv, n_models, fraction, seed, &out),
        Command::Check { ensemble, out } => cmd_check(&ensemble, &out),
        Command::Simulate {
            ensemble,
            market,
            measure,
            paths,
            seed,
            grid,
            csv_paths,
            out,
        } => cmd_simulate(
            &ensemble, &market, &measure, paths, seed, grid.as_deref(), csv_paths, &out,
        ),
        Command::Moments {
            ensemble,
            market,
            measure,
            grid,
            out,
        } => cmd_moments(&ensemble, &market, &measure, &grid, &out),
        Command::Price {
            ensemble,
            market,
            eta_max,
            theta_sweep,
            out,
        } => cmd_price(&ensemble, &market, eta_max, theta_sweep.as_deref(), &out),
        Command::Verify {
            ensemble,
            market,
            n_perturbations,
            seed,
            out,
        } => cmd_verify(&ensemble, &market, n_perturbations, seed, &out),
    }
}

/// Decimal with 16 significant digits (scientific), for CSV and stdout.
fn num(v: f64) -> String {
    format!("{v:.15e}")
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn load_ensemble(path: &Path) -> Result<ModelEnsemble> {
    let text = std::fs::read_to_string(path)?;
    ModelEnsemble::from_json(&text)
}

fn load_market(path: &Path) -> Result<MarketParams> {
    let text = std::fs::read_to_string(path)?;
    MarketParams::from_json(&text)
}

/// Parses "t1,t2,..." or "start:end:step" (end included; the step must tile
/// the interval to within 1e-9 relative).
fn parse_time_list(spec: &str) -> Result<Vec<f64>> {
    let parse_one = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("cannot parse '{s}' as a number")))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "grid range must be start:end:step, got '{spec}'"
            )));
        }
        let (start, end, step) = (parse_one(parts[0])?, parse_one(parts[1])?, parse_one(parts[2])?);
        if !(step > 0.0) || !(end > start) {
            return Err(Error::Config(format!(
                "grid range needs end > start and step > 0, got '{spec}'"
            )));
        }
        let n = ((end - start) / step).round();
        if ((start + n * step) - end).abs() > 1e-9 * end.abs().max(1.0) {
            return Err(Error::Config(format!(
                "step {step} does not tile [{start}, {end}]"
            )));
        }
        let n = n as usize;
        Ok((0..=n)
            .map(|i| if i == n { end } else { start + i as f64 * step })
            .collect())
    } else {
        spec.split(',').map(parse_one).collect()
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot serialize {}: {e}", path.display())))?;
    std::fs::write(path, json)?;
    Ok(())
}

fn cmd_fit(data_csv: &Path, n_models: usize, fraction: f64, seed: u64, out: &Path) -> Result<()> {
    ensure_out_dir(out)?;
    let records = fitting::read_policy_csv(data_csv)?;
    let full = fitting::fit_model(&records)?;
    let ensemble = fitting::cv_ensemble(&records, n_models, fraction, seed)?;

    let ensemble_path = out.join("ensemble.json");
    std::fs::write(&ensemble_path, ensemble.to_json())?;

    // Parameter scatter (one row per candidate plus the counterparty): all
    // three pairings — shape/scale, rate/scale, rate/shape — are projections
    // of these columns.
    let scatter_path = out.join("fit_scatter.csv");
    let mut csv = String::from("model,rate,shape,scale\n");
    for i in 0..ensemble.n_models() {
        let m = ensemble.entry(i);
        let _ = writeln!(csv, "{},{},{},{}", i + 1, num(m.rate()), num(m.shape()), num(m.scale()));
    }
    let c = ensemble.counterparty();
    let _ = writeln!(csv, "C,{},{},{}", num(c.rate()), num(c.shape()), num(c.scale()));
    std::fs::write(&scatter_path, csv)?;

    let mut manifest = RunManifest::start("fit", Some(seed), &[data_csv.to_path_buf()], out)?;
    manifest.record_output(&ensemble_path)?;
    manifest.record_output(&scatter_path)?;
    let manifest_path = manifest.finish()?;

    println!(
        "fit: {} policies, {} claims; counterparty rate {} (se {}), shape {} (se {}), scale {} (se {})",
        full.n_policies,
        full.n_claims_total,
        num(full.model.rate()),
        num(full.rate_std_error),
        num(full.model.shape()),
        num(full.shape_std_error),
        num(full.model.scale()),
        num(full.scale_std_error),
    );
    println!(
        "wrote {}, {}, {}",
        ensemble_path.display(),
        scatter_path.display(),
        manifest_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CheckReport {
    assumption_1: riskshare::compensators::Assumption1Report,
    assumption_2: riskshare::compensators::Assumption2Report,
    all_ok: bool,
}

fn cmd_check(ensemble_path: &Path, out: &Path) -> Result<()> {
    ensure_out_dir(out)?;
    let ensemble = load_ensemble(ensemble_path)?;
    let a1 = check_assumption_1(&ensemble);
    let a2 = check_assumption_2(&ensemble);
    let report = CheckReport {
        all_ok: a1.all_ok && a2.all_ok,
        assumption_1: a1,
        assumption_2: a2,
    };
    let report_path = out.join("check.json");
    write_json(&report_path, &report)?;
    let mut manifest = RunManifest::start("check", None, &[ensemble_path.to_path_buf()], out)?;
    manifest.record_output(&report_path)?;
    manifest.finish()?;

    println!(
        "assumption 1 (pairwise integrability): {}",
        if report.assumption_1.all_ok { "PASS" } else { "FAIL" }
    );
    println!(
        "assumption 2 (triple integrability):   {}",
        if report.assumption_2.all_ok { "PASS" } else { "FAIL" }
    );
    if !report.assumption_1.all_ok {
        let failures = report.assumption_1.entries.iter().filter(|e| !e.ok).count();
        return Err(Error::InfeasiblePair(format!(
            "{failures} of {} (counterparty, entry) pairs violate the second-order integrability condition; see {}",
            report.assumption_1.entries.len(),
            report_path.display()
        )));
    }
    if !report.assumption_2.all_ok {
        let failures = report.assumption_2.pairs.iter().filter(|p| !p.ok).count();
        return Err(Error::InfeasibleTriple(format!(
            "{failures} of {} entry pairs violate the third-order integrability condition; see {}",
            report.assumption_2.pairs.len(),
            report_path.display()
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    ensemble_path: &Path,
    market_path: &Path,
    measure: &str,
    n_paths: usize,
    seed: u64,
    grid: Option<&str>,
    csv_paths: usize,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    let ensemble = load_ensemble(ensemble_path)?;
    let market = load_market(market_path)?;
    let measure = Measure::from_str(measure)?;
    let config = match grid {
        Some(spec) => SimConfig::new(measure, n_paths, seed, parse_time_list(spec)?)?,
        None => SimConfig::uniform(measure, n_paths, seed, 50, &market)?,
    };
    let paths = simulate::simulate_prm(&config, &ensemble, &market)?;
    let summary = simulate::simulate_summary(&config, &paths)?;

    let summary_path = out.join("summary.json");
    write_json(&summary_path, &summary)?;

    // Path CSV: long format, one row per (path, grid time).
    let paths_path = out.join("paths.csv");
    let n_entries = ensemble.n_entries();
    let mut csv = String::from("path_id,time,X_star,X_cl,Y");
    for i in 0..n_entries - 1 {
        let _ = write!(csv, ",logZ_{}", i + 1);
    }
    csv.push_str(",logZ_C\n");
    for bundle in paths.iter().take(csv_paths) {
        for (g, &t) in bundle.grid.iter().enumerate() {
            let _ = write!(
                csv,
                "{},{},{},{},{}",
                bundle.path_id,
                num(t),
                num(bundle.x_star[g]),
                num(bundle.x_cl[g]),
                num(bundle.y[g])
            );
            for e in 0..n_entries {
                let _ = write!(csv, ",{}", num(bundle.log_z[g][e]));
            }
            csv.push('\n');
        }
    }
    std::fs::write(&paths_path, csv)?;

    // Terminal-wealth KDEs; skipped (with a warning) when too few distinct
    // samples exist, e.g. a single-path run.
    let samples = simulate::terminal_samples(&paths)?;
    let mut kde_paths = Vec::new();
    for (name, data) in [
        ("kde_x_star.csv", &samples.x_star),
        ("kde_x_cl.csv", &samples.x_cl),
        ("kde_y.csv", &samples.y),
    ] {
        match simulate::terminal_kde(data, None) {
            Ok(curve) => {
                let path = out.join(name);
                let mut csv = String::from("abscissa,density\n");
                for (a, d) in curve.abscissa.iter().zip(&curve.density) {
                    let _ = writeln!(csv, "{},{}", num(*a), num(*d));
                }
                std::fs::write(&path, csv)?;
                kde_paths.push(path);
            }
            Err(Error::DegenerateSample(msg)) => {
                log::warn!("skipping {name}: {msg}");
            }
            Err(e) => return Err(e),
        }
    }

    let mut manifest = RunManifest::start(
        "simulate",
        Some(seed),
        &[ensemble_path.to_path_buf(), market_path.to_path_buf()],
        out,
    )?;
    manifest.record_output(&summary_path)?;
    manifest.record_output(&paths_path)?;
    for p in &kde_paths {
        manifest.record_output(p)?;
    }
    manifest.finish()?;

    let last = summary.grid.len() - 1;
    println!(
        "simulate: {} paths under {} with seed {}; {} jumps total",
        summary.n_paths, summary.measure, seed, summary.total_jumps
    );
    println!(
        "terminal X*: mean {} (se {}), terminal Y: mean {} (se {})",
        num(summary.x_star.mean[last]),
        num(summary.x_star.std_error[last]),
        num(summary.y.mean[last]),
        num(summary.y.std_error[last]),
    );
    Ok(())
}

fn cmd_moments(
    ensemble_path: &Path,
    market_path: &Path,
    measure: &str,
    grid: &str,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    let ensemble = load_ensemble(ensemble_path)?;
    let market = load_market(market_path)?;
    let measure = Measure::from_str(measure)?;
    let times = parse_time_list(grid)?;
    let reports: Vec<MomentReport> = times
        .iter()
        .map(|&t| MomentReport::compute(measure, t, &ensemble, &market))
        .collect::<Result<_>>()?;

    let path = out.join("moments.json");
    write_json(&path, &reports)?;
    let mut manifest = RunManifest::start(
        "moments",
        None,
        &[ensemble_path.to_path_buf(), market_path.to_path_buf()],
        out,
    )?;
    manifest.record_output(&path)?;
    manifest.finish()?;

    for r in &reports {
        let mean_x = r.mean_x.map(num).unwrap_or_else(|| "-".into());
        let var_x = r.var_x.map(num).unwrap_or_else(|| "-".into());
        println!("t = {}: mean X = {mean_x}, var X = {var_x}", num(r.t));
    }
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct PricingReport {
    optimize: pricing::PricingResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<pricing::PricingResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_sweep: Option<Vec<pricing::ThetaPoint>>,
}

fn cmd_price(
    ensemble_path: &Path,
    market_path: &Path,
    eta_max: f64,
    theta_sweep: Option<&str>,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    let ensemble = load_ensemble(ensemble_path)?;
    let market = load_market(market_path)?;
    let optimize = pricing::optimize_eta(&ensemble, &market, eta_max)?;
    let closed_form = if ensemble.is_one_model() {
        Some(pricing::price_one_model(ensemble.counterparty(), &market)?)
    } else {
        None
    };
    let sweep = match theta_sweep {
        Some(spec) => Some(pricing::theta_sweep(
            &ensemble,
            &market,
            &parse_time_list(spec)?,
            eta_max,
        )?),
        None => None,
    };
    let report = PricingReport {
        optimize,
        closed_form,
        theta_sweep: sweep,
    };

    let report_path = out.join("pricing.json");
    write_json(&report_path, &report)?;
    let scan_path = out.join("eta_scan.csv");
    let mut csv = String::from("eta,expected_wealth\n");
    for p in &report.optimize.scan {
        let _ = writeln!(csv, "{},{}", num(p.eta), num(p.value));
    }
    std::fs::write(&scan_path, csv)?;
    let mut written = vec![report_path.clone(), scan_path];
    if let Some(points) = &report.theta_sweep {
        let sweep_path = out.join("theta_sweep.csv");
        let mut csv = String::from("theta,eta_star,expected_wealth\n");
        for p in points {
            let _ = writeln!(csv, "{},{},{}", num(p.theta), num(p.eta_star), num(p.expected_wealth));
        }
        std::fs::write(&sweep_path, csv)?;
        written.push(sweep_path);
    }

    let mut manifest = RunManifest::start(
        "price",
        None,
        &[ensemble_path.to_path_buf(), market_path.to_path_buf()],
        out,
    )?;
    for p in &written {
        manifest.record_output(p)?;
    }
    manifest.finish()?;

    println!(
        "price: eta* = {} with expected counterparty wealth {}",
        num(report.optimize.eta_star),
        num(report.optimize.expected_wealth)
    );
    if let Some(cf) = &report.closed_form {
        println!("closed form (one model): eta* = {}", num(cf.eta_star));
    }
    for w in &report.optimize.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

fn cmd_verify(
    ensemble_path: &Path,
    market_path: &Path,
    n_perturbations: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    ensure_out_dir(out)?;
    let ensemble = load_ensemble(ensemble_path)?;
    let market = load_market(market_path)?;
    // Canonical interior evaluation state: mid-horizon, initial wealth,
    // all model weights at their unit start.
    let t = 0.5 * market.horizon();
    let z = vec![1.0; ensemble.n_entries()];
    let report =
        verify::verification_report(n_perturbations, seed, t, market.x0(), &z, &ensemble, &market)?;

    let path = out.join("verification.json");
    write_json(&path, &report)?;
    let mut manifest = RunManifest::start(
        "verify",
        Some(seed),
        &[ensemble_path.to_path_buf(), market_path.to_path_buf()],
        out,
    )?;
    manifest.record_output(&path)?;
    manifest.finish()?;

    for check in report.alpha_checks.iter().chain(&report.beta_checks) {
        println!(
            "{} residual {} (threshold {}): {}",
            check.description,
            num(check.residual),
            num(check.threshold),
            if check.pass { "PASS" } else { "FAIL" }
        );
    }
    if !report.all_pass {
        let worst = report
            .alpha_checks
            .iter()
            .chain(&report.beta_checks)
            .filter(|c| !c.pass)
            .map(|c| c.residual.abs())
            .fold(0.0_f64, f64::max);
        return Err(Error::Numerical {
            context: "saddle-point verification".into(),
            achieved: worst,
            requested: verify::BETA_FIXED_TOLERANCE,
        });
    }
    println!("all {} checks passed", report.alpha_checks.len() + report.beta_checks.len());
    Ok(())
}
