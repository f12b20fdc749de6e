//! `rbsde`: solve reflected BSDEs on scenario trees from JSON configs.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbsde_core::penalization::{default_ladder, sweep};
use rbsde_core::reflected_one::stopping_payoff;
use rbsde_core::reflected_two::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use rbsde_core::verify::CHECK_TOL;
use rbsde_core::{
    alpha_rule, brute_force_value, check_solution_one, check_solution_two, optimal_stopping_time, picard_snell_solve,
    picard_solve, snell, snell_representation_check, solve_double_obstacle, solve_reflected_one, CheckReport, Error,
    FixpointOptions, FixpointSolution, NodeId, Obstacles,
};
use serde::Serialize;

use config::{Config, SolverKind};
use output::{node_rows, timeline_one, timeline_two, OutDir, SolutionFile, Summary};

/// Largest depth at which `snell` also reports the brute-force root value.
const BRUTE_FORCE_DEPTH: usize = 6;

#[derive(Debug)]
pub enum Failure {
    /// Exit 2: malformed or inconsistent config, bad flags.
    Schema(String),
    /// Exit 3.
    Solver(Error),
    /// Exit 4: the solution failed at least one condition.
    Checks(String),
    /// Exit 1.
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Schema(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Checks(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "rbsde", version, about = "Reflected BSDEs with jumps on finite scenario trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Problem configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write per-node values to nodes.csv.
    #[arg(long)]
    full: bool,
    /// Stopping tolerance of iterative solvers; check tolerance for `verify`.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Reserved; the tree backend is exact and uses no randomness.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a one-barrier problem and check the solution.
    SolveOne(Common),
    /// Solve a two-barrier problem and check the solution.
    SolveTwo(Common),
    /// Run the penalization ladder against the reflected solution.
    PenalizeSweep {
        #[command(flatten)]
        common: Common,
        /// Penalty levels, ascending.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<f64>>,
    },
    /// Snell envelope of the stopping payoff (coefficient-free drivers).
    Snell(Common),
    /// Check a solution.json against its config.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        solution: PathBuf,
    },
    /// Picard iteration for a list of weight exponents.
    ContractionStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        alpha_list: Option<Vec<f64>>,
    },
}

fn fixpoint_options(c: &Common, config: &Config) -> FixpointOptions {
    FixpointOptions {
        alpha: config.solver.alpha,
        tol: c.tol.or(config.solver.tol).unwrap_or(1e-12),
        max_iter: c.max_iter.or(config.solver.max_iter).unwrap_or(1_000),
        ..Default::default()
    }
}

fn finish(report: &CheckReport) -> Result<String, Failure> {
    let lines: Vec<String> = report
        .clauses
        .iter()
        .map(|c| format!("  ({}) {} {:.3e} {}", c.clause.letter(), if c.passed { "ok  " } else { "FAIL" }, c.residual, c.detail))
        .collect();
    let text = lines.join("\n");
    if report.passed() {
        Ok(text)
    } else {
        Err(Failure::Checks(format!("solution conditions violated:\n{text}")))
    }
}

fn solve_one(c: &Common) -> Result<String, Failure> {
    let config = Config::load(&c.config)?;
    let tree = config.tree()?;
    let problem = config.one_barrier(&tree)?;
    let sol = match config.solver.kind {
        SolverKind::Direct => solve_reflected_one(&tree, &problem)?,
        SolverKind::Fixpoint => {
            let obstacles = Obstacles::Lower(problem.barrier.clone());
            match picard_solve(&tree, &problem.driver, &problem.terminal, &obstacles, &fixpoint_options(c, &config))?.0 {
                FixpointSolution::OneBarrier(s) => s,
                _ => unreachable!("one obstacle gives a one-barrier solution"),
            }
        }
        SolverKind::PicardSnell => return Err(Failure::Schema("picard_snell needs two barriers".into())),
    };
    let out = OutDir::create(&c.out)?;
    let report = check_solution_one(&tree, &sol, &problem, CHECK_TOL);
    let mut summary = Summary::default();
    summary
        .adapted(&tree, "y", &sol.y)
        .predictable(&tree, "z", &sol.z)
        .marks(&tree, "v", &sol.v)
        .adapted(&tree, "k", &sol.k)
        .adapted(&tree, "k_c", &sol.k_c)
        .adapted(&tree, "k_d", &sol.k_d);
    out.csv("summary.csv", &summary.0)?;
    out.csv("timeline.csv", &timeline_one(&tree, &sol))?;
    if c.full {
        out.csv("nodes.csv", &node_rows(&tree, &[("y", &sol.y), ("k", &sol.k), ("k_c", &sol.k_c), ("k_d", &sol.k_d)]))?;
    }
    out.json("report.json", &report)?;
    let y0 = sol.y.get(NodeId::ROOT);
    out.json("solution.json", &SolutionFile::OneBarrier(sol))?;
    let checks = finish(&report)?;
    Ok(format!("Y_0 = {y0}\n{checks}"))
}

fn solve_two(c: &Common) -> Result<String, Failure> {
    let config = Config::load(&c.config)?;
    let tree = config.tree()?;
    let problem = config.two_barrier(&tree)?;
    let tol = c.tol.or(config.solver.tol);
    let sol = match config.solver.kind {
        SolverKind::Direct => solve_double_obstacle(&tree, &problem)?,
        SolverKind::PicardSnell => {
            let max_iter = c.max_iter.or(config.solver.max_iter).unwrap_or(DEFAULT_MAX_ITER);
            picard_snell_solve(&tree, &problem, None, tol.unwrap_or(DEFAULT_TOL), max_iter)?.0
        }
        SolverKind::Fixpoint => {
            let obstacles = Obstacles::Both { lower: problem.lower.clone(), upper: problem.upper.clone() };
            match picard_solve(&tree, &problem.driver, &problem.terminal, &obstacles, &fixpoint_options(c, &config))?.0 {
                FixpointSolution::TwoBarrier(s) => s,
                _ => unreachable!("two obstacles give a two-barrier solution"),
            }
        }
    };
    let out = OutDir::create(&c.out)?;
    let report = check_solution_two(&tree, &sol, &problem, CHECK_TOL);
    let mut summary = Summary::default();
    summary
        .adapted(&tree, "y", &sol.y)
        .predictable(&tree, "z", &sol.z)
        .marks(&tree, "v", &sol.v)
        .adapted(&tree, "k_plus", &sol.k_plus)
        .adapted(&tree, "k_plus_d", &sol.k_plus_d)
        .adapted(&tree, "k_minus", &sol.k_minus)
        .adapted(&tree, "k_minus_d", &sol.k_minus_d);
    out.csv("summary.csv", &summary.0)?;
    out.csv("timeline.csv", &timeline_two(&tree, &sol))?;
    if c.full {
        out.csv("nodes.csv", &node_rows(&tree, &[("y", &sol.y), ("k_plus", &sol.k_plus), ("k_minus", &sol.k_minus)]))?;
    }
    out.json("report.json", &report)?;
    let y0 = sol.y.get(NodeId::ROOT);
    out.json("solution.json", &SolutionFile::TwoBarrier(sol))?;
    let checks = finish(&report)?;
    Ok(format!("Y_0 = {y0}\n{checks}"))
}

#[derive(Serialize)]
struct SweepRow {
    n: f64,
    y_root: f64,
    sup_gap: f64,
    z_gap: f64,
    v_gap: f64,
    k_gap: f64,
    k_tau_gap: f64,
    jump_slot_gap: f64,
}

fn penalize_sweep(c: &Common, n_list: Option<&[f64]>) -> Result<String, Failure> {
    let config = Config::load(&c.config)?;
    let tree = config.tree()?;
    let problem = config.one_barrier(&tree)?;
    let ladder = n_list.map_or_else(default_ladder, <[f64]>::to_vec);
    let rep = sweep(&tree, &problem, &ladder, tree.steps())?;
    let rows: Vec<SweepRow> = (0..rep.levels.len())
        .map(|i| SweepRow {
            n: rep.levels[i],
            y_root: rep.y_root[i],
            sup_gap: rep.sup_gaps[i],
            z_gap: rep.z_gaps[i],
            v_gap: rep.v_gaps[i],
            k_gap: rep.k_gaps[i],
            k_tau_gap: rep.k_tau_gaps[i],
            jump_slot_gap: rep.jump_slot_gaps[i],
        })
        .collect();
    let out = OutDir::create(&c.out)?;
    out.csv("sweep.csv", &rows)?;
    out.json("sweep.json", &rep)?;
    Ok(format!("limit Y_0 = {}, {} ladder entries, final sup gap {:.3e}", rep.limit_root, rows.len(), rep.sup_gaps.last().unwrap_or(&0.0)))
}

#[derive(Serialize)]
struct SnellSummary {
    root_value: f64,
    brute_force_root: Option<f64>,
    representation_deviation: f64,
    stopped_martingale_defect: f64,
}

#[derive(Serialize)]
struct SnellRow {
    time: f64,
    mean_envelope: f64,
    mean_payoff: f64,
    stop_probability: f64,
}

fn snell_cmd(c: &Common) -> Result<String, Failure> {
    let config = Config::load(&c.config)?;
    let tree = config.tree()?;
    let problem = config.one_barrier(&tree)?;
    let (eta, _) = stopping_payoff(&tree, &problem)?;
    let res = snell(&tree, &eta);
    let rule = optimal_stopping_time(&tree, &res);
    let mut stop = vec![0.0; tree.steps() + 1];
    for leaf in tree.nodes(tree.steps()) {
        stop[rule.stopping_level(&tree, leaf)] += tree.path_prob(leaf);
    }
    let rows: Vec<SnellRow> = (0..=tree.steps())
        .map(|k| SnellRow {
            time: tree.time(k),
            mean_envelope: tree.expect_at(res.envelope.level(k)),
            mean_payoff: tree.expect_at(eta.level(k)),
            stop_probability: stop[k],
        })
        .collect();
    let brute_force_root = if tree.steps() <= BRUTE_FORCE_DEPTH { Some(brute_force_value(&tree, &eta, NodeId::ROOT)?) } else { None };
    let sol = solve_reflected_one(&tree, &problem)?;
    let summary = SnellSummary {
        root_value: res.envelope.get(NodeId::ROOT),
        brute_force_root,
        representation_deviation: snell_representation_check(&tree, &sol, &problem)?,
        stopped_martingale_defect: rule.stopped_martingale_defect(&tree, &res.envelope),
    };
    let out = OutDir::create(&c.out)?;
    out.csv("snell.csv", &rows)?;
    out.json("snell.json", &summary)?;
    Ok(format!("R_0 = {}, representation deviation {:.3e}", summary.root_value, summary.representation_deviation))
}

fn verify_cmd(c: &Common, solution: &std::path::Path) -> Result<String, Failure> {
    let config = Config::load(&c.config)?;
    let tree = config.tree()?;
    let text = std::fs::read_to_string(solution).map_err(|e| Failure::Io(format!("reading {}: {e}", solution.display())))?;
    let file: SolutionFile = serde_json::from_str(&text).map_err(|e| Failure::Schema(format!("{}: {e}", solution.display())))?;
    let tol = c.tol.unwrap_or(CHECK_TOL);
    let report = match &file {
        SolutionFile::OneBarrier(s) => check_solution_one(&tree, s, &config.one_barrier(&tree)?, tol),
        SolutionFile::TwoBarrier(s) => check_solution_two(&tree, s, &config.two_barrier(&tree)?, tol),
    };
    OutDir::create(&c.out)?.json("report.json", &report)?;
    finish(&report)
}

#[derive(Serialize)]
struct ContractionRow {
    alpha: f64,
    status: String,
    iterations: Option<usize>,
    final_distance: Option<f64>,
    max_ratio: Option<f64>,
    ratios: String,
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|r| format!("{r:.6e}")).collect::<Vec<_>>().join(";")
}

fn contraction_study(c: &Common, alpha_list: Option<&[f64]>) -> Result<String, Failure> {
    let config = Config::load(&c.config)?;
    let tree = config.tree()?;
    let (driver, terminal, obstacles) = config.any_problem(&tree)?;
    let alphas = alpha_list.map_or_else(|| vec![config.solver.alpha.unwrap_or_else(|| alpha_rule(driver.lipschitz()))], <[f64]>::to_vec);
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Failure::Schema(format!("alpha must be positive, got {a}")));
    }
    let mut rows = Vec::new();
    for alpha in alphas {
        let opts = FixpointOptions { alpha: Some(alpha), ..fixpoint_options(c, &config) };
        rows.push(match picard_solve(&tree, &driver, &terminal, &obstacles, &opts) {
            Ok((_, trace)) => ContractionRow {
                alpha,
                status: "converged".into(),
                iterations: Some(trace.iterations()),
                final_distance: trace.distances.last().copied(),
                max_ratio: trace.ratios.iter().copied().reduce(f64::max),
                ratios: join(&trace.ratios),
            },
            Err(Error::NoContractionObserved(ratios)) => ContractionRow {
                alpha,
                status: "no_contraction".into(),
                iterations: None,
                final_distance: None,
                max_ratio: ratios.iter().copied().reduce(f64::max),
                ratios: join(&ratios),
            },
            Err(Error::MaxIterExceeded(n)) => ContractionRow {
                alpha,
                status: "max_iter".into(),
                iterations: Some(n),
                final_distance: None,
                max_ratio: None,
                ratios: String::new(),
            },
            Err(e) => return Err(e.into()),
        });
    }
    let out = OutDir::create(&c.out)?;
    out.csv("contraction.csv", &rows)?;
    let converged = rows.iter().filter(|r| r.status == "converged").count();
    Ok(format!("{converged} of {} exponents converged", rows.len()))
}

fn run(cli: &Cli) -> Result<String, Failure> {
    match &cli.command {
        Command::SolveOne(c) => solve_one(c),
        Command::SolveTwo(c) => solve_two(c),
        Command::PenalizeSweep { common, n_list } => penalize_sweep(common, n_list.as_deref()),
        Command::Snell(c) => snell_cmd(c),
        Command::Verify { common, solution } => verify_cmd(common, solution),
        Command::ContractionStudy { common, alpha_list } => contraction_study(common, alpha_list.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            match &f {
                Failure::Solver(e) => eprintln!("solver error: {e:?}\n  {e}"),
                Failure::Schema(m) => eprintln!("config error: {m}"),
                Failure::Checks(m) => eprintln!("{m}"),
                Failure::Io(m) => eprintln!("io error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
