//! Command-line front end for the pulsed optomechanics simulator.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use levopt::harness::{
    self, find_recipe, load_config, output, RunConfig, SweepSpec, RECIPES,
};
use levopt::measures::{optimize_angles, LogBase, Measures};
use levopt::model::Frame;
use levopt::protocol::{
    blue_gain, max_gamma_search, red_transmittance, run_full,
};

#[derive(Parser)]
#[command(
    name = "levopt",
    version,
    about = "Gaussian-state simulator for pulsed levitated cavity optomechanics",
    long_about = "Propagates the cavity, the mechanical mode and the temporal \
                  output modes of a blue-detuned entangling pulse and a \
                  red-detuned readout pulse, and reports two-mode squeezing, \
                  logarithmic negativity and homodyne variances."
)]
struct Cli {
    /// TOML config file; built-in defaults are used when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override a config value (repeatable), e.g. --set params.g=0.4
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Worker threads for sweep points (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full protocol at the configured point and print measures.
    Point,
    /// Run the configured sweeps (or a built-in recipe) and write files.
    Sweep {
        /// Use a built-in recipe instead of --config.
        #[arg(long, value_name = "NAME")]
        recipe: Option<String>,
        /// Override the output directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Scan the entangling pulse's homodyne angle at the configured point.
    Angles(AnglesArgs),
    /// Grid-search coupling and pulse length for reheating tolerance.
    Optimize(OptimizeArgs),
    /// List built-in recipes, print one, or write them all out.
    Recipes {
        /// Print the named recipe's TOML to stdout.
        #[arg(long, value_name = "NAME")]
        show: Option<String>,
        /// Write every recipe as <NAME>.toml into this directory.
        #[arg(long, value_name = "DIR")]
        write_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AnglesArgs {
    /// Number of scan points over [lo, hi].
    #[arg(long, default_value_t = 181)]
    points: usize,
    /// Scan start (radians); default 0, or -pi with --locked.
    #[arg(long)]
    lo: Option<f64>,
    /// Scan end (radians); default pi, or +pi with --locked.
    #[arg(long)]
    hi: Option<f64>,
    /// Fix the pulse-mixing angle instead of re-optimizing it.
    #[arg(long)]
    phi: Option<f64>,
    /// Lock phi and theta_R at the jointly optimal angles instead of
    /// re-optimizing them at each scan point.
    #[arg(long, conflicts_with = "phi")]
    locked: bool,
    /// Bipartition to scan: pulse-pulse or pulse-mech.
    #[arg(long, default_value = "pulse-pulse")]
    bipartition: String,
    /// Write the scan as CSV here instead of printing a summary.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long, default_value_t = 0.1)]
    g_lo: f64,
    #[arg(long, default_value_t = 0.7)]
    g_hi: f64,
    #[arg(long, default_value_t = 7)]
    g_points: usize,
    #[arg(long, default_value_t = 2.0)]
    tau_lo: f64,
    #[arg(long, default_value_t = 14.0)]
    tau_hi: f64,
    #[arg(long, default_value_t = 7)]
    tau_points: usize,
}

fn parse_sets(raw: &[String]) -> Result<Vec<(String, String)>, String> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| format!("--set {s}: expected KEY=VALUE"))
        })
        .collect()
}

fn print_measures(label: &str, m: &Measures, base: LogBase) {
    let unit = match base {
        LogBase::Nat => "nats",
        LogBase::Two => "ebits",
    };
    println!("{label}");
    println!("  S            = {:.4} dB", m.s_db);
    println!("  E_N          = {:.4} {unit}", m.e_n);
    println!("  nu_minus     = {:.6}", m.nu_minus);
    println!("  lambda_min   = {:.6}", m.lambda_min);
}

fn frame_of(cfg: &RunConfig) -> Result<Frame, String> {
    match cfg.run.frame.as_str() {
        "rwa" => Ok(Frame::Rwa),
        "beyond-rwa" | "beyond_rwa" => Ok(Frame::BeyondRwa),
        other => Err(format!("run.frame: unknown value {other:?}")),
    }
}

fn base_of(cfg: &RunConfig) -> Result<LogBase, String> {
    match cfg.run.e_n_base.as_str() {
        "nat" => Ok(LogBase::Nat),
        "log2" => Ok(LogBase::Two),
        other => Err(format!("run.e_n_base: unknown value {other:?}")),
    }
}

fn cmd_point(cfg: &RunConfig) -> Result<ExitCode, String> {
    let frame = frame_of(cfg)?;
    let base = base_of(cfg)?;
    let p = cfg
        .params
        .to_system(cfg.run.dt)
        .map_err(|e| e.to_string())?;
    println!(
        "point: g = {} kappa, omega = {} kappa, tau = {} /kappa, reheat = {} kappa",
        p.g,
        p.omega,
        p.tau,
        p.reheat_rate()
    );
    println!(
        "       gain G = {:.4}, readout transmittance T = {:.4}, frame = {:?}",
        blue_gain(&p),
        red_transmittance(&p),
        frame
    );
    let result = run_full(&p, frame).map_err(|e| e.to_string())?;
    let convert = |mut m: Measures| {
        if base == LogBase::Two {
            m.e_n /= std::f64::consts::LN_2;
        }
        m
    };
    print_measures(
        "pulse-mech (after entangling pulse):",
        &convert(result.measures_pm),
        base,
    );
    print_measures(
        "pulse-pulse (after readout pulse):",
        &convert(result.measures_pp),
        base,
    );
    let (angles, var) =
        optimize_angles(&result.cm_pulse_pulse).map_err(|e| e.to_string())?;
    println!("optimal homodyne on pulse-pulse:");
    println!(
        "  theta_B = {:.4} rad, theta_R = {:.4} rad, phi = {:.4} rad",
        angles.theta_b, angles.theta_r, angles.phi
    );
    println!(
        "  variance = {:.6} ({:.4} dB)",
        var,
        -10.0 * var.log10()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(cfg: &RunConfig, out: Option<&PathBuf>) -> Result<ExitCode, String> {
    let outcomes = harness::run_config(cfg).map_err(|e| e.to_string())?;
    let written = output::write_all(&outcomes, &cfg.output, out.map(|p| p.as_path()))
        .map_err(|e| e.to_string())?;
    let mut failed = false;
    for o in &outcomes {
        let errors = o.rows.iter().filter(|r| r.error.is_some()).count();
        failed |= errors > 0;
        println!(
            "sweep {}: {} points over {}, {} errored",
            o.name,
            o.rows.len(),
            o.variable,
            errors
        );
    }
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(if failed {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_angles(cfg: &RunConfig, args: &AnglesArgs) -> Result<ExitCode, String> {
    // Re-optimized scans repeat every pi; locked ones only every 2 pi
    // (the pulse-pulse correlation flips sign half a turn away), so the
    // default range widens to a full turn.
    let lo_default = if args.locked { -std::f64::consts::PI } else { 0.0 };
    let mut scan = RunConfig::clone(cfg);
    scan.sweeps = vec![SweepSpec {
        name: Some("angle-scan".into()),
        variable: "theta_b".into(),
        scale: "linear".into(),
        lo: args.lo.unwrap_or(lo_default),
        hi: args.hi.unwrap_or(std::f64::consts::PI),
        points: args.points,
        bipartition: args.bipartition.clone(),
        phi_mode: if args.locked {
            "locked".into()
        } else if args.phi.is_some() {
            "fixed".into()
        } else {
            "reoptimize".into()
        },
        phi: args.phi,
        ..SweepSpec::default()
    }];
    let outcomes = harness::run_config(&scan).map_err(|e| e.to_string())?;
    let o = &outcomes[0];
    if let Some(dir) = &args.out {
        let written = output::write_all(&outcomes, &scan.output, Some(dir.as_path()))
            .map_err(|e| e.to_string())?;
        for path in &written {
            println!("wrote {}", path.display());
        }
    } else {
        let mut best: Option<&harness::SweepRow> = None;
        let mut positive = 0usize;
        for row in &o.rows {
            if let Some(s) = row.s_db {
                if s > 0.0 {
                    positive += 1;
                }
                if best.and_then(|b| b.s_db).map_or(true, |b| s > b) {
                    best = Some(row);
                }
            }
        }
        match best {
            Some(row) => {
                println!(
                    "best angle: theta_B = {:.4} rad, S = {:.4} dB",
                    row.value,
                    row.s_db.unwrap_or(f64::NAN)
                );
                println!(
                    "{} of {} scan points squeeze below vacuum",
                    positive,
                    o.rows.len()
                );
            }
            None => println!("no scan point produced a finite variance"),
        }
    }
    Ok(if o.any_error() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_optimize(cfg: &RunConfig, args: &OptimizeArgs) -> Result<ExitCode, String> {
    let frame = frame_of(cfg)?;
    let base = cfg
        .params
        .to_system(cfg.run.dt)
        .map_err(|e| e.to_string())?;
    let lin = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        let n = n.max(2);
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    };
    let g_grid = lin(args.g_lo, args.g_hi, args.g_points);
    let tau_grid = lin(args.tau_lo, args.tau_hi, args.tau_points);
    let search = max_gamma_search(&base, frame, &g_grid, &tau_grid, (1e-4, 4.0));
    println!("g/kappa  tau*kappa  max reheat (kappa units)");
    for row in &search.rows {
        match (&row.gamma_crit, &row.error) {
            (Some(gc), _) => println!("{:>7.3}  {:>9.3}  {:.6}", row.g, row.tau, gc),
            (None, Some(e)) => println!("{:>7.3}  {:>9.3}  failed: {e}", row.g, row.tau),
            (None, None) => {
                println!("{:>7.3}  {:>9.3}  no squeezing anywhere", row.g, row.tau)
            }
        }
    }
    match &search.best {
        Some((g, tau, gamma_crit)) => {
            println!(
                "best cell: g = {g:.3} kappa, tau = {tau:.3} /kappa, tolerates reheat up to {gamma_crit:.6} kappa"
            );
            Ok(ExitCode::SUCCESS)
        }
        None => {
            println!("no grid cell kept squeezing positive");
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_recipes(
    show: Option<&String>,
    write_dir: Option<&PathBuf>,
) -> Result<ExitCode, String> {
    if let Some(name) = show {
        let recipe =
            find_recipe(name).ok_or_else(|| format!("no recipe named {name:?}"))?;
        print!("{}", recipe.toml);
        return Ok(ExitCode::SUCCESS);
    }
    if let Some(dir) = write_dir {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        for recipe in RECIPES {
            let path = dir.join(format!("{}.toml", recipe.name));
            std::fs::write(&path, recipe.toml).map_err(|e| e.to_string())?;
            println!("wrote {}", path.display());
        }
        return Ok(ExitCode::SUCCESS);
    }
    for recipe in RECIPES {
        println!("{:<16} {}", recipe.name, recipe.description);
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode, String> {
    if let Some(jobs) = cli.jobs {
        // Ignore the error if a pool already exists (e.g. repeated init in
        // the same process during tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let sets = parse_sets(&cli.set)?;
    let recipe_cfg = match &cli.cmd {
        Cmd::Sweep {
            recipe: Some(name), ..
        } => {
            let recipe =
                find_recipe(name).ok_or_else(|| format!("no recipe named {name:?}"))?;
            if cli.config.is_some() {
                return Err("--recipe and --config are mutually exclusive".into());
            }
            let mut table: toml::Table =
                toml::from_str(recipe.toml).map_err(|e| e.to_string())?;
            harness::apply_env_overrides(&mut table, std::env::vars())
                .map_err(|e| e.to_string())?;
            for (k, v) in &sets {
                harness::apply_set(&mut table, k, v).map_err(|e| e.to_string())?;
            }
            Some(
                toml::Value::Table(table)
                    .try_into::<RunConfig>()
                    .map_err(|e| e.to_string())?,
            )
        }
        _ => None,
    };
    let cfg = match recipe_cfg {
        Some(cfg) => cfg,
        None => load_config(cli.config.as_deref(), &sets).map_err(|e| e.to_string())?,
    };
    match &cli.cmd {
        Cmd::Point => cmd_point(&cfg),
        Cmd::Sweep { out, .. } => cmd_sweep(&cfg, out.as_ref()),
        Cmd::Angles(args) => cmd_angles(&cfg, args),
        Cmd::Optimize(args) => cmd_optimize(&cfg, args),
        Cmd::Recipes { show, write_dir } => {
            cmd_recipes(show.as_ref(), write_dir.as_ref())
        }
    }
}

fn main() -> ExitCode {
    // Die quietly when the reader of our stdout goes away (`levopt ... |
    // head`) instead of panicking on the broken pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
