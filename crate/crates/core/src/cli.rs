//! Command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::belief::BeliefTriple;
use crate::bounds::{bound_report, optimize_xi, BoundReport, XiOptions};
use crate::config::{Config, Scenario};
use crate::error::{Error, Result};
use crate::policy::{PolicyKind, PolicySpec};
use crate::report::{fmt_bound, fmt_float, write_simulate, write_table, SimulateRow};
use crate::sim::monte_carlo;
use crate::verify::{empirical_belief, independence_check, theta_experiment};

#[derive(Debug, Parser)]
#[command(name = "aoisched", version, about = "AoI scheduling simulator and bound calculator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo EWSAoI of each policy at each sweep point.
    Simulate(CommonArgs),
    /// Upper and lower bounds at each sweep point.
    Bounds(CommonArgs),
    /// Optimal randomized scheduler behind the upper bound.
    OptimizeXi(CommonArgs),
    /// Empirical belief distributions against the closed forms.
    VerifyBelief(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Replaces the configured policy list; repeatable.
    #[arg(long = "policy")]
    pub policies: Vec<String>,
    /// Write 0 for wall_time_s so repeated runs produce identical files.
    #[arg(long)]
    pub no_timing: bool,
}

impl CommonArgs {
    pub fn load(&self) -> Result<Config> {
        let mut config = Config::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if !self.policies.is_empty() {
            config.policies = self.policies.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotConverged { .. } => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let args = match &cli.command {
        Command::Simulate(a) | Command::Bounds(a) | Command::OptimizeXi(a) | Command::VerifyBelief(a) => a,
    };
    if args.workers == Some(0) {
        return Err(Error::invalid("workers", "must be positive"));
    }
    let config = args.load()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| Error::Io(e.to_string()))?;
    let mut buf = Vec::new();
    pool.install(|| -> Result<()> {
        match &cli.command {
            Command::Simulate(_) => write_simulate(&simulate(&config, !args.no_timing)?, &mut buf),
            Command::Bounds(_) => write_table(&BOUNDS_HEADER, &bounds_rows(&config)?, &mut buf),
            Command::OptimizeXi(_) => write_table(&XI_HEADER, &optimize_xi_rows(&config)?, &mut buf),
            Command::VerifyBelief(_) => write_table(&VERIFY_HEADER, &verify_rows(&config)?, &mut buf),
        }
    })?;
    match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            w.write_all(&buf)
                .and_then(|_| w.flush())
                .map_err(|e| Error::Io(e.to_string()))
        }
        None => io::stdout().write_all(&buf).map_err(|e| Error::Io(e.to_string())),
    }
}

fn report_for(s: &Scenario) -> Result<BoundReport> {
    bound_report(
        &s.network.channel,
        &s.network.lambdas,
        &s.network.omegas,
        XiOptions::default(),
    )
}

pub fn policy_spec(kind: PolicyKind, report: &BoundReport) -> PolicySpec {
    let weights = kind.uses_drift().then(|| report.beta.clone());
    PolicySpec::new(kind, weights, report.n_star)
}

/// One row per (sweep point, policy), in that order.
pub fn simulate(config: &Config, timing: bool) -> Result<Vec<SimulateRow>> {
    let kinds = config.policy_kinds()?;
    let mut rows = Vec::new();
    for s in config.scenarios()? {
        let report = report_for(&s)?;
        for &kind in &kinds {
            let start = Instant::now();
            let summary = monte_carlo(&s.network, &policy_spec(kind, &report))?;
            let wall = if timing { start.elapsed().as_secs_f64() } else { 0.0 };
            rows.push(SimulateRow {
                policy: kind.to_string(),
                n_devices: s.n_devices(),
                antennas: s.antennas(),
                snr_db: s.snr_db,
                lambda_spec: s.lambda_spec.to_string(),
                omega_spec: s.omega_spec.to_string(),
                horizon: s.network.horizon,
                runs: s.network.runs,
                ewsaoi_mean: summary.mean,
                ewsaoi_stderr: summary.stderr,
                upper_bound: report.upper_bound,
                lower_bound: report.lower_bound,
                n_star: report.n_star,
                wall_time_s: wall,
            });
        }
    }
    Ok(rows)
}

pub const BOUNDS_HEADER: [&str; 11] = [
    "N",
    "M",
    "snr_db",
    "lambda_spec",
    "omega_spec",
    "n_star",
    "symmetric",
    "upper_bound",
    "lower_bound",
    "psi",
    "beta",
];

fn join(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_float(v)).collect::<Vec<_>>().join(";")
}

pub fn bounds_rows(config: &Config) -> Result<Vec<Vec<String>>> {
    config
        .scenarios()?
        .iter()
        .map(|s| {
            let r = report_for(s)?;
            Ok(vec![
                s.n_devices().to_string(),
                s.antennas().to_string(),
                fmt_float(s.snr_db),
                s.lambda_spec.to_string(),
                s.omega_spec.to_string(),
                r.n_star.to_string(),
                r.symmetric.to_string(),
                fmt_bound(r.upper_bound),
                fmt_float(r.lower_bound),
                join(&r.psi),
                join(r.beta.as_slice()),
            ])
        })
        .collect()
}

pub const XI_HEADER: [&str; 3] = ["point", "item", "value"];

/// `xi` per action in enumeration order, then the objective, the final
/// Frank-Wolfe gap and the iteration count.
pub fn optimize_xi_rows(config: &Config) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    for (point, s) in config.scenarios()?.iter().enumerate() {
        let sol = optimize_xi(
            &s.network.channel,
            &s.network.lambdas,
            &s.network.omegas,
            XiOptions::default(),
        )?;
        let p = point.to_string();
        for (a, &x) in sol.xi.actions().iter().zip(sol.xi.probs()) {
            rows.push(vec![p.clone(), a.to_string(), fmt_float(x)]);
        }
        rows.push(vec![p.clone(), "objective".into(), fmt_float(sol.objective)]);
        rows.push(vec![p.clone(), "fw_gap".into(), fmt_float(sol.gap)]);
        rows.push(vec![p, "iterations".into(), sol.iterations.to_string()]);
    }
    Ok(rows)
}

pub const VERIFY_HEADER: [&str; 7] = [
    "table",
    "state",
    "entry",
    "theoretical",
    "empirical",
    "abs_error",
    "matches",
];

/// Single-device distribution check followed by the joint independence
/// check on the first sweep point's network.
pub fn verify_rows(config: &Config) -> Result<Vec<Vec<String>>> {
    let v = config.verify.clone().unwrap_or_default();
    let scenario = config.scenarios()?.into_iter().next().expect("at least one scenario");
    let channel = scenario.network.channel;
    let mut rows = Vec::new();
    let row = |table: &str, state: String, entry: String, theory: f64, emp: f64, matches: usize| {
        vec![
            table.to_string(),
            state,
            entry,
            fmt_float(theory),
            fmt_float(emp),
            fmt_float((theory - emp).abs()),
            matches.to_string(),
        ]
    };

    for (t, &[k, m, u]) in v.theta_targets.iter().enumerate() {
        let seed = config.seed.wrapping_add(t as u64);
        let e = theta_experiment(channel, v.theta_lambda, (k, m, u), v.samples, seed, v.max_runs)?;
        let belief = BeliefTriple::new(k, m, u, v.theta_lambda)?;
        let theory = belief.pmf(belief.support_len().max(5))?;
        for d in 1..=5u32 {
            rows.push(row(
                "theta",
                format!("({k},{m},{u})"),
                d.to_string(),
                theory[d as usize - 1],
                e.marginal(0, d),
                e.matches,
            ));
        }
    }

    let lambdas = scenario.network.lambdas.clone();
    if v.joint_targets.len() != lambdas.len() {
        return Err(Error::LengthMismatch {
            what: "joint_targets",
            expected: lambdas.len(),
            got: v.joint_targets.len(),
        });
    }
    let targets: Vec<(u32, u32, u32)> = v.joint_targets.iter().map(|&[k, m, u]| (k, m, u)).collect();
    let beliefs = targets
        .iter()
        .zip(&lambdas)
        .map(|(&(k, m, u), &l)| BeliefTriple::new(k, m, u, l))
        .collect::<Result<Vec<_>>>()?;
    let e = empirical_belief(
        channel,
        lambdas,
        v.joint_slot,
        targets,
        v.samples,
        config.seed,
        v.max_runs,
    )?;
    for point in &v.joint_points {
        if point.len() != beliefs.len() || point.contains(&0) {
            return Err(Error::invalid(
                "joint_points",
                format!("{point:?} is not a local-age vector"),
            ));
        }
        let state = format!(
            "d=[{}]",
            point.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        );
        let mut theory_product = 1.0;
        let mut emp_product = 1.0;
        for (i, (&d, b)) in point.iter().zip(&beliefs).enumerate() {
            let theory = b.pmf(b.support_len().max(d as usize))?[d as usize - 1];
            let emp = e.marginal(i, d);
            theory_product *= theory;
            emp_product *= emp;
            rows.push(row(
                "joint",
                state.clone(),
                format!("b_{}({d})", i + 1),
                theory,
                emp,
                e.matches,
            ));
        }
        rows.push(row(
            "joint",
            state.clone(),
            "product".into(),
            theory_product,
            emp_product,
            e.matches,
        ));
        let joint = e.joint(point);
        let mut r = row("joint", state, "joint".into(), theory_product, joint, e.matches);
        // For the joint entry the error column is the independence deviation.
        r[5] = fmt_float(independence_check(&e.joint, &e.marginals, std::slice::from_ref(point)));
        rows.push(r);
    }
    Ok(rows)
}
