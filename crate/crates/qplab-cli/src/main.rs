//! Command-line front end: one configuration file, one subcommand per
//! pipeline, deterministic CSV/JSON outputs for downstream plotting.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use qplab::config::{load_config, RunConfig};
use qplab::experiments;
use qplab::lattice::{boxed, Site, SiteSet};
use qplab::model::solve_theta0;
use qplab::msa::{self, BoundAuditReport, MsaParams, MsaTrace};
use qplab::report::{fmt_float, write_csv, write_json_summary, RunManifest};
use qplab::verify;

#[derive(Parser)]
#[command(name = "qplab", about = "Finite-volume laboratory for quasi-periodic lattice operators", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (TOML with [model], [frequency], [potential], [hopping]).
    #[arg(long, global = true, default_value = "qplab.toml")]
    config: PathBuf,

    /// Output directory for the manifest, CSV tables and JSON summaries.
    #[arg(long, global = true, default_value = "qplab-out")]
    out: PathBuf,

    /// Override a configuration value: --set section.key=value (repeatable).
    #[arg(long = "set", global = true, value_name = "K=V")]
    sets: Vec<String>,

    /// RNG seed; falls back to QPLAB_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Scale-schedule mode override.
    #[arg(long, global = true, value_enum)]
    scale_mode: Option<ScaleModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleModeArg {
    Paper,
    Exploration,
}

impl ScaleModeArg {
    fn as_str(&self) -> &'static str {
        match self {
            ScaleModeArg::Paper => "paper",
            ScaleModeArg::Exploration => "exploration",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the randomized inequality suites for every norm lemma.
    Verify,
    /// Print the scale schedule (s, N_s, log10 delta_s).
    Schedule,
    /// Run the multi-scale induction and audit its Green's-function bounds.
    Msa,
    /// Green's function of one box: norms, determinant, decay summary.
    Green,
    /// Eigenvector decay fits over phase samples.
    Eigen,
    /// Wavepacket moment sup over time.
    Dynamics,
    /// Finite-volume eigenvalue counting and its Hölder modulus.
    Ids,
    /// Aubry-dual delocalization proxy on doubling boxes.
    Dual,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed.unwrap_or_else(|| {
        std::env::var("QPLAB_SEED").ok().and_then(|v| v.parse().ok()).unwrap_or(0)
    });
    if let Ok(threads) = std::env::var("QPLAB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
        }
    }
    let cfg = match load_config(&cli.config, &cli.sets) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    let name = match cli.command {
        Command::Verify => "verify",
        Command::Schedule => "schedule",
        Command::Msa => "msa",
        Command::Green => "green",
        Command::Eigen => "eigen",
        Command::Dynamics => "dynamics",
        Command::Ids => "ids",
        Command::Dual => "dual",
    };
    let manifest = RunManifest::new(name, &cli.config, &cfg.hash, &cli.sets, seed, &cli.out);
    if let Err(e) = manifest.write(&cli.out) {
        eprintln!("cannot write manifest: {e}");
        return ExitCode::from(1);
    }
    let mode_override = cli.scale_mode.map(|m| m.as_str());
    let result = match cli.command {
        Command::Verify => cmd_verify(&cfg, seed, &cli.out),
        Command::Schedule => cmd_schedule(&cfg, seed, &cli.out, mode_override),
        Command::Msa => cmd_msa(&cfg, seed, &cli.out, mode_override),
        Command::Green => cmd_green(&cfg, seed, &cli.out),
        Command::Eigen => cmd_eigen(&cfg, seed, &cli.out),
        Command::Dynamics => cmd_dynamics(&cfg, seed, &cli.out),
        Command::Ids => cmd_ids(&cfg, seed, &cli.out),
        Command::Dual => cmd_dual(&cfg, seed, &cli.out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{name} failed: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_verify(cfg: &RunConfig, seed: u64, out: &std::path::Path) -> qplab::Result<ExitCode> {
    let instances = cfg.experiment.instances;
    let report = verify::run_suites(instances, seed);
    let rows: Vec<Vec<String>> = report
        .outcomes
        .iter()
        .map(|o| {
            vec![
                o.suite.clone(),
                o.instances.to_string(),
                fmt_float(o.max_ratio),
                o.failures.len().to_string(),
                o.pass().to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("verify.csv"),
        &cfg.hash,
        seed,
        &["suite", "instances", "max_ratio", "failures", "pass"],
        &rows,
    )?;
    for o in &report.outcomes {
        println!(
            "{:<18} instances={:<5} max_ratio={:<22} {}",
            o.suite,
            o.instances,
            fmt_float(o.max_ratio),
            if o.pass() { "pass" } else { "FAIL" }
        );
    }
    let failures: Vec<&verify::Counterexample> =
        report.outcomes.iter().flat_map(|o| o.failures.iter()).collect();
    if !failures.is_empty() {
        let path = out.join("counterexamples.json");
        std::fs::write(&path, serde_json::to_string_pretty(&failures).unwrap())?;
        eprintln!("{} counterexample(s) written to {}", failures.len(), path.display());
    }
    write_json_summary(
        &out.join("verify.json"),
        &cfg.hash,
        seed,
        "verify",
        serde_json::json!({
            "suites": report.outcomes.len(),
            "all_pass": report.all_pass(),
            "instances": instances,
        }),
    )?;
    Ok(if report.all_pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_schedule(
    cfg: &RunConfig,
    seed: u64,
    out: &std::path::Path,
    mode_override: Option<&str>,
) -> qplab::Result<ExitCode> {
    let schedule = cfg.schedule(mode_override)?;
    let rows: Vec<Vec<String>> = schedule
        .entries
        .iter()
        .map(|e| {
            vec![
                e.s.to_string(),
                e.n.to_string(),
                fmt_float(e.log10_n),
                fmt_float(e.log10_delta),
            ]
        })
        .collect();
    write_csv(
        &out.join("schedule.csv"),
        &cfg.hash,
        seed,
        &["s", "n", "log10_n", "log10_delta"],
        &rows,
    )?;
    for e in &schedule.entries {
        println!("s={} N={} log10(delta)={}", e.s, e.n, fmt_float(e.log10_delta));
    }
    Ok(ExitCode::SUCCESS)
}

/// Deterministic sample boxes inside the window, clear of its center.
fn sample_sets(cfg: &RunConfig, window_radius: i64) -> Vec<SiteSet> {
    let count = cfg.experiment.sample_sets.max(1);
    let radius = (window_radius / 5).max(3);
    (0..count)
        .map(|i| {
            let offset = window_radius / 2 + (i as i64 * radius) % (window_radius / 3 + 1);
            let side = if i % 2 == 0 { 1 } else { -1 };
            boxed(&Site::from_ints(&[side * offset]), radius)
        })
        .collect()
}

fn trace_json(trace: &MsaTrace) -> serde_json::Value {
    let generations: Vec<serde_json::Value> = trace
        .generations
        .iter()
        .map(|g| {
            serde_json::json!({
                "s": g.s,
                "case": g.case_tag,
                "l_s": g.l_step.twice(),
                "theta_s": [g.theta.0, g.theta.1],
                "P_s": g.p_set,
                "Q_s": g.q_set(),
                "blocks": g.blocks.iter().map(|b| serde_json::json!({
                    "center": b.center.twice(),
                    "omega": b.omega,
                    "omega_tilde": b.omega_tilde,
                    "singular": b.singular,
                    "clipped": b.clipped,
                })).collect::<Vec<_>>(),
                "truncated": g.truncated,
            })
        })
        .collect();
    serde_json::json!({
        "generations": generations,
        "certificates": trace.certificates,
    })
}

fn cmd_msa(
    cfg: &RunConfig,
    seed: u64,
    out: &std::path::Path,
    mode_override: Option<&str>,
) -> qplab::Result<ExitCode> {
    let schedule = cfg.schedule(mode_override)?;
    let window_radius = cfg.msa.window_radius.unwrap_or(60);
    let s_max = cfg.msa.s_max.unwrap_or(2);
    let params = MsaParams { window_radius, s_max };
    let samples = sample_sets(cfg, window_radius);

    // Phase sweep: the configured θ first, then seeded uniform draws.
    let mut thetas = vec![cfg.model.theta];
    let extra = cfg.experiment.theta_samples.saturating_sub(1);
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    for _ in 0..extra {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        thetas.push((state >> 11) as f64 / (1u64 << 53) as f64);
    }

    let runs: Vec<(f64, Result<(MsaTrace, BoundAuditReport), String>)> = thetas
        .par_iter()
        .map(|&theta| {
            let mut model = cfg.model.clone();
            model.theta = theta;
            let outcome = msa::run_msa(&model, &schedule, &params)
                .and_then(|trace| {
                    let audit = msa::audit_bounds(&trace, &model, &schedule, &samples)?;
                    Ok((trace, audit))
                })
                .map_err(|e| e.to_string());
            (theta, outcome)
        })
        .collect();

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut geometry_failures = Vec::new();
    let mut first_trace: Option<&MsaTrace> = None;
    for (theta, outcome) in &runs {
        match outcome {
            Ok((trace, audit)) => {
                if first_trace.is_none() {
                    first_trace = Some(trace);
                }
                for row in &audit.rows {
                    rows.push(vec![
                        row.s.to_string(),
                        row.bound_id.clone(),
                        fmt_float(row.lhs_log10),
                        fmt_float(row.rhs_log10),
                        fmt_float(row.ratio_log10),
                        row.pass.to_string(),
                    ]);
                }
            }
            Err(msg) => {
                geometry_failures.push(serde_json::json!({"theta": theta, "error": msg}));
            }
        }
    }
    write_csv(
        &out.join("audit.csv"),
        &cfg.hash,
        seed,
        &["s", "bound_id", "lhs_log10", "rhs_log10", "ratio_log10", "pass"],
        &rows,
    )?;
    if let Some(trace) = first_trace {
        std::fs::write(
            out.join("trace.json"),
            serde_json::to_string_pretty(&trace_json(trace)).unwrap(),
        )?;
    }
    let audited = runs.iter().filter(|(_, o)| o.is_ok()).count();
    write_json_summary(
        &out.join("msa.json"),
        &cfg.hash,
        seed,
        "msa",
        serde_json::json!({
            "thetas": thetas.len(),
            "audited": audited,
            "geometry_failures": geometry_failures,
            "bound_rows": rows.len(),
        }),
    )?;
    println!("msa: {audited}/{} phases audited, {} bound rows", thetas.len(), rows.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_green(cfg: &RunConfig, seed: u64, out: &std::path::Path) -> qplab::Result<ExitCode> {
    let lambda = boxed(&Site::origin(cfg.model.d), cfg.experiment.box_radius);
    let (inv, report) = msa::green(&lambda, &cfg.model, &cfg.experiment.alphas)?;
    let rows: Vec<Vec<String>> = report
        .norms
        .iter()
        .map(|p| vec![fmt_float(p.alpha), fmt_float(p.value)])
        .collect();
    write_csv(&out.join("green_norms.csv"), &cfg.hash, seed, &["alpha", "value"], &rows)?;
    let diag_rows: Vec<Vec<String>> = lambda
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let z = inv.matrix()[[i, i]];
            vec![
                s.twice().iter().map(|c| (c / 2).to_string()).collect::<Vec<_>>().join(";"),
                fmt_float(z.re),
                fmt_float(z.im),
            ]
        })
        .collect();
    write_csv(
        &out.join("green_diagonal.csv"),
        &cfg.hash,
        seed,
        &["site", "re", "im"],
        &diag_rows,
    )?;
    write_json_summary(
        &out.join("green.json"),
        &cfg.hash,
        seed,
        "green",
        serde_json::json!({
            "condition": report.condition,
            "log10_abs_det": report.log10_abs_det,
            "offdiag_lhs": report.offdiag_lhs,
            "offdiag_rhs": report.offdiag_rhs,
            "sites": lambda.len(),
        }),
    )?;
    println!(
        "green: {} sites, condition {:.3e}, log10|det| = {:.6}",
        lambda.len(),
        report.condition,
        report.log10_abs_det
    );
    Ok(ExitCode::SUCCESS)
}

fn theta_sweep(cfg: &RunConfig, seed: u64) -> Vec<f64> {
    let mut thetas = vec![cfg.model.theta];
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(17);
    for _ in 0..cfg.experiment.theta_samples.saturating_sub(1) {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        thetas.push((state >> 11) as f64 / (1u64 << 53) as f64);
    }
    thetas
}

fn cmd_eigen(cfg: &RunConfig, seed: u64, out: &std::path::Path) -> qplab::Result<ExitCode> {
    let thetas = theta_sweep(cfg, seed);
    let samples = experiments::localization_scan(
        &cfg.model,
        cfg.experiment.box_radius,
        &thetas,
        cfg.experiment.tau1,
        cfg.experiment.a_param,
    )?;
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            let class = match &s.theta_class {
                experiments::ThetaClass::Generic => "generic".to_string(),
                experiments::ThetaClass::Exceptional { .. } => "exceptional".to_string(),
            };
            vec![
                fmt_float(s.theta),
                class,
                fmt_float(s.median_exponent),
                fmt_float(s.median_r2),
            ]
        })
        .collect();
    write_csv(
        &out.join("eigen.csv"),
        &cfg.hash,
        seed,
        &["theta", "class", "median_exponent", "median_r2"],
        &rows,
    )?;
    let fit_rows: Vec<Vec<String>> = samples[0]
        .fits
        .iter()
        .enumerate()
        .map(|(q, f)| vec![q.to_string(), fmt_float(f.exponent), fmt_float(f.r2)])
        .collect();
    write_csv(
        &out.join("eigen_fits.csv"),
        &cfg.hash,
        seed,
        &["q", "exponent", "r2"],
        &fit_rows,
    )?;
    write_json_summary(
        &out.join("eigen.json"),
        &cfg.hash,
        seed,
        "eigen",
        serde_json::json!({
            "thetas": thetas.len(),
            "box_radius": cfg.experiment.box_radius,
            "median_exponent": samples[0].median_exponent,
            "median_r2": samples[0].median_r2,
        }),
    )?;
    println!(
        "eigen: median exponent {} (r2 {}) at theta {}",
        fmt_float(samples[0].median_exponent),
        fmt_float(samples[0].median_r2),
        fmt_float(samples[0].theta)
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_dynamics(cfg: &RunConfig, seed: u64, out: &std::path::Path) -> qplab::Result<ExitCode> {
    let result = experiments::dynamics_moment(
        &cfg.model,
        cfg.experiment.box_radius,
        cfg.experiment.p_moment,
        cfg.experiment.t_max,
    )?;
    let rows: Vec<Vec<String>> = result
        .series
        .iter()
        .map(|(t, m)| vec![fmt_float(*t), fmt_float(*m)])
        .collect();
    write_csv(&out.join("dynamics.csv"), &cfg.hash, seed, &["t", "moment"], &rows)?;
    write_json_summary(
        &out.join("dynamics.json"),
        &cfg.hash,
        seed,
        "dynamics",
        serde_json::json!({
            "sup_moment": result.sup_moment,
            "unitarity_defect": result.unitarity_defect,
            "box_radius": cfg.experiment.box_radius,
            "p": cfg.experiment.p_moment,
        }),
    )?;
    println!(
        "dynamics: sup moment {} (unitarity defect {:.3e})",
        fmt_float(result.sup_moment),
        result.unitarity_defect
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_ids(cfg: &RunConfig, seed: u64, out: &std::path::Path) -> qplab::Result<ExitCode> {
    let exp = &cfg.experiment;
    let grid: Vec<f64> = (0..exp.e_points)
        .map(|i| exp.e_min + (exp.e_max - exp.e_min) * i as f64 / (exp.e_points - 1) as f64)
        .collect();
    let curve = experiments::ids_curve(&cfg.model, exp.box_radius, &grid)?;
    let rows: Vec<Vec<String>> = grid
        .iter()
        .zip(&curve.counts)
        .map(|(e, c)| vec![fmt_float(*e), fmt_float(*c)])
        .collect();
    write_csv(&out.join("ids.csv"), &cfg.hash, seed, &["energy", "count"], &rows)?;
    let (exponent, points) = experiments::holder_modulus(&curve, &exp.eta);
    let mod_rows: Vec<Vec<String>> = points
        .iter()
        .map(|(eta, s)| vec![fmt_float(*eta), fmt_float(*s)])
        .collect();
    write_csv(
        &out.join("ids_modulus.csv"),
        &cfg.hash,
        seed,
        &["eta", "sup_diff"],
        &mod_rows,
    )?;
    write_json_summary(
        &out.join("ids.json"),
        &cfg.hash,
        seed,
        "ids",
        serde_json::json!({
            "box_radius": exp.box_radius,
            "holder_exponent": exponent,
            "eigenvalues": curve.eigenvalues.len(),
        }),
    )?;
    println!("ids: fitted Hoelder modulus exponent {}", fmt_float(exponent));
    Ok(ExitCode::SUCCESS)
}

fn cmd_dual(cfg: &RunConfig, seed: u64, out: &std::path::Path) -> qplab::Result<ExitCode> {
    let d = cfg.model.d;
    let mut xs = Vec::new();
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(31);
    for _ in 0..cfg.experiment.x_samples.max(1) {
        let mut x = Vec::with_capacity(d);
        for _ in 0..d {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            x.push((state >> 11) as f64 / (1u64 << 53) as f64);
        }
        xs.push(x);
    }
    let report = experiments::dual_localization_proxy(
        &cfg.model,
        cfg.experiment.band_cut,
        cfg.experiment.dual_radius,
        &xs,
    )?;
    let mut rows = Vec::new();
    for sample in &report {
        let x = sample.x.iter().map(|v| fmt_float(*v)).collect::<Vec<_>>().join(";");
        for stats in &sample.scales {
            rows.push(vec![
                x.clone(),
                stats.m_radius.to_string(),
                fmt_float(stats.ipr_median),
                fmt_float(stats.boundary_min),
                fmt_float(stats.boundary_median),
                sample.self_adjoint.to_string(),
            ]);
        }
    }
    write_csv(
        &out.join("dual.csv"),
        &cfg.hash,
        seed,
        &["x", "m_radius", "ipr_median", "boundary_min", "boundary_median", "self_adjoint"],
        &rows,
    )?;
    write_json_summary(
        &out.join("dual.json"),
        &cfg.hash,
        seed,
        "dual",
        serde_json::json!({
            "x_samples": xs.len(),
            "band_cut": cfg.experiment.band_cut,
            "finite_volume_note":
                "absence of point spectrum is not decidable at finite volume; \
                 this reports the boundary-weight doubling surrogate only",
            "samples": report,
        }),
    )?;
    // θ0 is part of the model surface; exercise it for the summary line.
    let theta0 = solve_theta0(&cfg.model).ok();
    println!(
        "dual: {} phase samples at band cut {}{}",
        xs.len(),
        cfg.experiment.band_cut,
        theta0.map(|t| format!(", theta0 = {}", fmt_float(t.re))).unwrap_or_default()
    );
    Ok(ExitCode::SUCCESS)
}
