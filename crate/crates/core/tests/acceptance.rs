//! Acceptance run: one `[PASS]`/`[FAIL]` line per criterion.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbsde_core::corpus;
use rbsde_core::penalization::{default_ladder, sweep};
use rbsde_core::reflected_one::stopping_payoff;
use rbsde_core::reflected_two::{monotone_iterate_check, DEFAULT_MAX_ITER, DEFAULT_TOL};
use rbsde_core::verify::CHECK_TOL;
use rbsde_core::*;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(id: &str, title: &str, budget: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let (passed, detail) = match outcome {
        Ok(d) if elapsed <= budget => (true, d),
        Ok(d) => (false, format!("{d}; over the {:.0?} budget", budget)),
        Err(e) => (false, e),
    };
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("[{tag}] {id} {title} ({:.2} s): {detail}", elapsed.as_secs_f64());
    passed
}

fn marks(m: usize) -> MarkSet {
    let pairs: Vec<(f64, f64)> = (0..m).map(|i| (1.0 + i as f64, 0.5)).collect();
    MarkSet::from_pairs(&pairs).unwrap()
}

fn err(e: Error) -> String {
    e.to_string()
}

fn ac1() -> Check {
    let mut cases = 0;
    let mut timed = Duration::ZERO;
    for (m, sizes) in [(0, &[2usize, 4, 8, 12][..]), (1, &[2, 4, 6, 8][..]), (2, &[2, 4, 6][..])] {
        for &n in sizes {
            let start = Instant::now();
            let (tree, problem) = corpus::counterexample(n, marks(m)).map_err(err)?;
            let sol = solve_reflected_one(&tree, &problem).map_err(err)?;
            if (n, m) == (8, 1) {
                timed = start.elapsed();
            }
            let half = n / 2;
            for (node, y) in sol.y.iter() {
                let (want_y, want_k) = if node.level < half { (1.0, 0.0) } else { (0.5, 0.5) };
                ensure((y - want_y).abs() <= 1e-12, || format!("N={n} m={m}: Y={y} at {node:?}"))?;
                ensure((sol.k.get(node) - want_k).abs() <= 1e-12, || format!("N={n} m={m}: K at {node:?}"))?;
                ensure((sol.k_d.get(node) - want_k).abs() <= 1e-12, || format!("N={n} m={m}: K^d at {node:?}"))?;
                ensure(sol.k_c.get(node).abs() <= 1e-12, || format!("N={n} m={m}: K^c at {node:?}"))?;
            }
            ensure(sol.z.max_abs() <= 1e-12 && sol.v.max_abs() <= 1e-12, || format!("N={n} m={m}: Z or V nonzero"))?;
            cases += 1;
        }
    }
    ensure(timed < Duration::from_secs(1), || format!("N=8 m=1 took {timed:?}"))?;
    Ok(format!("{cases} grids, Y = 1 then 1/2, K = K^d jumps by 1/2 at t = 1/2, Z = V = 0; N=8 m=1 solved in {:.1} ms", timed.as_secs_f64() * 1e3))
}

fn ac2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_snell, mut worst_bf, mut nodes) = (0.0f64, 0.0f64, 0usize);
    for case in 0..200 {
        let (tree, problem) = corpus::random_one_barrier(&mut rng, 6, 1);
        let sol = solve_reflected_one(&tree, &problem).map_err(err)?;
        worst_snell = worst_snell.max(snell_representation_check(&tree, &sol, &problem).map_err(err)?);
        let (eta, integral) = stopping_payoff(&tree, &problem).map_err(err)?;
        for k in 0..=tree.steps() {
            for node in tree.nodes(k) {
                let bf = brute_force_value(&tree, &eta, node).map_err(err)? - integral.get(node);
                worst_bf = worst_bf.max((bf - sol.y.get(node)).abs());
                nodes += 1;
            }
        }
        ensure(worst_snell <= 1e-12 && worst_bf <= 1e-12, || format!("case {case}: snell {worst_snell:e}, brute force {worst_bf:e}"))?;
    }
    Ok(format!("200 problems, {nodes} nodes; snell deviation {worst_snell:.1e}, brute-force deviation {worst_bf:.1e}"))
}

fn ac3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ladder = default_ladder();
    let i32_ = ladder.iter().position(|n| *n == 32.0).unwrap();
    let (mut worst_excess, mut worst_ratio) = (f64::NEG_INFINITY, 0.0f64);
    for case in 0..200 {
        let (tree, problem) = corpus::random_one_barrier(&mut rng, 6, 1);
        let rep = sweep(&tree, &problem, &ladder, tree.steps()).map_err(|e| format!("case {case}: {e}"))?;
        worst_excess = worst_excess.max(rep.max_excess_over_limit);
        ensure(rep.max_excess_over_limit <= 1e-12, || format!("case {case}: Y^n exceeds Y by {:e}", rep.max_excess_over_limit))?;
        let g = &rep.sup_gaps;
        let last = g.len() - 1;
        ensure(g[last] < g[i32_], || format!("case {case}: gap(1024) = {:e} not below gap(32) = {:e}", g[last], g[i32_]))?;
        let extrapolated = g[last - 1] * g[last - 1] / g[last - 2];
        ensure(g[last] <= 10.0 * extrapolated, || format!("case {case}: gap(1024) = {:e}, extrapolation {extrapolated:e}", g[last]))?;
        worst_ratio = worst_ratio.max(g[last] / extrapolated);
        let k = &rep.k_gaps;
        ensure(k.windows(2).all(|w| w[1] <= w[0] + 1e-12) && k[last] < k[0], || format!("case {case}: K gaps {k:?}"))?;
    }
    Ok(format!(
        "200 problems, ladder 1..1024 monotone (largest Y^n - Y = {worst_excess:.1e}); worst gap(1024)/extrapolation = {worst_ratio:.2}"
    ))
}

fn check_one(tree: &ScenarioTree, sol: &SolutionQuadruple, problem: &OneBarrierProblem, what: &str) -> std::result::Result<(), String> {
    let rep = check_solution_one(tree, sol, problem, CHECK_TOL);
    ensure(rep.passed(), || format!("{what}: failing {:?}, max residual {:e}", rep.failing(), rep.max_residual()))
}

fn check_two(tree: &ScenarioTree, sol: &SolutionQuintuple, problem: &TwoBarrierProblem, what: &str) -> std::result::Result<(), String> {
    let rep = check_solution_two(tree, sol, problem, CHECK_TOL);
    ensure(rep.passed(), || format!("{what}: failing {:?}, max residual {:e}", rep.failing(), rep.max_residual()))
}

fn ac4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut outputs = 0;
    let mut mutants = 0;
    let mut seen = std::collections::BTreeSet::new();

    let mut one: Vec<(ScenarioTree, OneBarrierProblem)> = vec![corpus::counterexample(8, marks(1)).map_err(err)?];
    one.extend((0..60).map(|_| corpus::random_one_barrier(&mut rng, 5, 1)));
    for (i, (tree, problem)) in one.iter().enumerate() {
        let sol = solve_reflected_one(tree, problem).map_err(err)?;
        check_one(tree, &sol, problem, &format!("reflected one #{i}"))?;
        let linear = OneBarrierProblem { driver: problem.driver.clone().with_linear(-0.3, 0.2, 0.1), ..problem.clone() };
        let lin_sol = solve_reflected_one(tree, &linear).map_err(err)?;
        check_one(tree, &lin_sol, &linear, &format!("linear reflected one #{i}"))?;
        let (fp, _) = picard_solve(tree, &linear.driver, &linear.terminal, &Obstacles::Lower(linear.barrier.clone()), &FixpointOptions::default())
            .map_err(err)?;
        if let FixpointSolution::OneBarrier(fp) = fp {
            check_one(tree, &fp, &linear, &format!("fixpoint one #{i}"))?;
        }
        outputs += 3;
        for clause in Clause::ONE_BARRIER {
            if let Some((s, p)) = verify::inject_fault_one(tree, &sol, problem, clause) {
                let failing = check_solution_one(tree, &s, &p, CHECK_TOL).failing();
                ensure(failing == vec![clause], || format!("one-barrier mutant {clause:?} on #{i} fails {failing:?}"))?;
                mutants += 1;
                seen.insert(clause.letter());
            }
        }
    }

    let mut two: Vec<(ScenarioTree, TwoBarrierProblem)> = vec![{
        let (tree, problem) = corpus::counterexample(8, marks(1)).map_err(err)?;
        let p = corpus::with_inactive_upper(&tree, &problem, 5.0);
        (tree, p)
    }];
    two.extend((0..60).map(|_| corpus::random_two_barrier(&mut rng, 5, 1, 0.2)));
    for (i, (tree, problem)) in two.iter().enumerate() {
        let sol = solve_double_obstacle(tree, problem).map_err(err)?;
        check_two(tree, &sol, problem, &format!("double obstacle #{i}"))?;
        let (ps, _) = picard_snell_solve(tree, problem, None, DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(err)?;
        check_two(tree, &ps, problem, &format!("snell pair #{i}"))?;
        outputs += 2;
        for clause in Clause::TWO_BARRIERS {
            if let Some((s, p)) = verify::inject_fault_two(tree, &sol, problem, clause) {
                let failing = check_solution_two(tree, &s, &p, CHECK_TOL).failing();
                ensure(failing == vec![clause], || format!("two-barrier mutant {clause:?} on #{i} fails {failing:?}"))?;
                mutants += 1;
                seen.insert(clause.letter());
            }
        }
    }
    let letters: String = seen.into_iter().collect();
    Ok(format!(
        "{outputs} solver outputs pass at 1e-10; {mutants} mutants each fail exactly their clause (clauses {letters}); clause g has no isolated mutant"
    ))
}

fn ac5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut iters) = (0.0f64, 0usize);
    for case in 0..100 {
        let (tree, problem) = corpus::random_two_barrier(&mut rng, 5, 1, 0.2);
        let direct = solve_double_obstacle(&tree, &problem).map_err(err)?;
        let (ps, trace) = picard_snell_solve(&tree, &problem, None, DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(|e| format!("case {case}: {e}"))?;
        let dev = ps.y.max_abs_diff(&direct.y);
        worst = worst.max(dev);
        ensure(dev <= 1e-10, || format!("case {case}: sup |Y_picard - Y_direct| = {dev:e}"))?;
        let rep = monotone_iterate_check(&trace).map_err(|e| format!("case {case}: {e}"))?;
        iters = iters.max(rep.iterations);
    }
    Ok(format!("100 problems, worst sup deviation {worst:.1e}, iterates monotone and bounded (at most {iters} iterations)"))
}

fn ac6() -> Check {
    let mut lines = Vec::new();
    for (c_f, n, m) in [(0.25, 4, 1), (0.5, 5, 1), (1.0, 10, 0)] {
        let tree = build_tree(n, marks(m)).map_err(err)?;
        let jump_scale = tree.intensities().iter().sum::<f64>().sqrt();
        let (a, b, c) = if m == 0 { (-0.5 * c_f, 0.5 * c_f, 0.0) } else { (-0.4 * c_f, 0.3 * c_f, 0.3 * c_f / jump_scale) };
        let driver = reflected_one::grid_driver(&tree, |k| 0.3 - 0.05 * k as f64).with_linear(a, b, c);
        ensure((driver.lipschitz() - c_f).abs() < 1e-12 && tree.dt() * c_f <= 0.1 + 1e-15, || format!("bad driver for C_f = {c_f}"))?;
        let barrier = Adapted::from_fn(&tree, |node| 0.4 - tree.w(node).abs() - 0.2 * tree.time(node.level));
        let terminal: Vec<f64> = tree.nodes(n).map(|leaf| barrier.get(leaf).max(tree.w(leaf))).collect();
        let lower = EvaluatedBarrier::continuous(barrier.clone());
        let upper = EvaluatedBarrier::continuous(barrier.map(|s| s + 1.2));
        let terminal_two: Vec<f64> = terminal.iter().zip(upper.values.terminal()).map(|(x, u)| x.min(*u)).collect();
        let cases: [(&str, Obstacles, &[f64]); 3] = [
            ("standard", Obstacles::None, &terminal),
            ("one barrier", Obstacles::Lower(lower.clone()), &terminal),
            ("two barriers", Obstacles::Both { lower: lower.clone(), upper: upper.clone() }, &terminal_two),
        ];
        for (name, obstacles, xi) in cases {
            let opts = FixpointOptions { tol: 1e-12, max_iter: 60, ..Default::default() };
            let (sol, trace) = picard_solve(&tree, &driver, xi, &obstacles, &opts).map_err(|e| format!("C_f={c_f} {name}: {e}"))?;
            let bad = trace.ratios.iter().position(|r| r.is_nan() || *r >= 1.0);
            ensure(bad.is_none(), || format!("C_f={c_f} {name}: ratios {:?}", trace.ratios))?;
            let direct = match &obstacles {
                Obstacles::None => solve_bsde(&tree, &driver, xi).map_err(err)?.y,
                Obstacles::Lower(l) => solve_reflected_one(&tree, &OneBarrierProblem { driver: driver.clone(), terminal: xi.to_vec(), barrier: l.clone() }).map_err(err)?.y,
                Obstacles::Both { lower, upper } => {
                    solve_double_obstacle(&tree, &TwoBarrierProblem { driver: driver.clone(), terminal: xi.to_vec(), lower: lower.clone(), upper: upper.clone() })
                        .map_err(err)?
                        .y
                }
            };
            let dev = sol.y().max_abs_diff(&direct);
            ensure(dev <= 1e-10, || format!("C_f={c_f} {name}: sup |Y_picard - Y_direct| = {dev:e}"))?;
            let worst_ratio = trace.ratios.iter().copied().fold(0.0, f64::max);
            lines.push(format!("C_f={c_f} {name}: {} it, max r {worst_ratio:.3}, dev {dev:.0e}", trace.iterations()));
        }
    }
    Ok(lines.join("; "))
}

fn ac7() -> Check {
    let (tree, problem) = corpus::counterexample(8, marks(1)).map_err(err)?;
    let probe = regularity_probe(&tree, &problem, None).map_err(err)?;
    ensure(probe.verdict == Verdict::PredictableJump && (probe.kd_mass - 0.5).abs() <= 1e-12, || format!("counterexample: {probe:?}"))?;
    ensure(probe.zv_gaps_vanish && probe.persistent_jump_gap && probe.zv_converge_with_jump, || format!("counterexample gaps: {probe:?}"))?;

    let tree2 = build_tree(6, marks(1)).map_err(err)?;
    let s = Adapted::from_fn(&tree2, |n| tree2.w(n) - 2.0);
    let problem2 = OneBarrierProblem {
        driver: Driver::from_grid(&tree2, vec![-1.0; 6]),
        terminal: s.terminal().to_vec(),
        barrier: EvaluatedBarrier::continuous(s),
    };
    let probe2 = regularity_probe(&tree2, &problem2, None).map_err(err)?;
    ensure(probe2.verdict == Verdict::ContinuousCompensator && probe2.kd_mass == 0.0, || format!("continuous: {probe2:?}"))?;
    ensure(probe2.uniform_decay && probe2.y_gaps[0] > 0.0, || format!("continuous gaps: {:?}", probe2.y_gaps))?;
    Ok(format!(
        "counterexample K^d mass {:.3} with zero (Z, V) gaps and jump-slot gap {:.3e} at n = 1024; continuous barrier K^d = 0, Y gap {:.2e} -> {:.2e}",
        probe.kd_mass,
        probe.jump_slot_gaps.last().unwrap(),
        probe2.y_gaps[0],
        probe2.y_gaps.last().unwrap()
    ))
}

/// Compensated summation, so that the leaf total measures the path
/// probabilities rather than the rounding of a long naive sum.
fn neumaier_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

fn ac8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let tree = corpus::random_tree(&mut rng, 6, 3);
        let dt = tree.dt();
        let p = tree.child_probs();
        let db = tree.child_increments();
        let m = tree.num_marks();
        let mut err = (p.iter().sum::<f64>() - 1.0).abs();
        err = err.max(p.iter().zip(db).map(|(p, b)| p * b).sum::<f64>().abs());
        err = err.max((p.iter().zip(db).map(|(p, b)| p * b * b).sum::<f64>() - dt).abs());
        let comp: Vec<&[f64]> = (0..tree.branching()).map(|c| tree.branch_compensated(c)).collect();
        for i in 0..m {
            let lam = tree.intensities()[i];
            err = err.max(p.iter().zip(&comp).map(|(p, u)| p * u[i]).sum::<f64>().abs());
            err = err.max(p.iter().zip(db).zip(&comp).map(|((p, b), u)| p * b * u[i]).sum::<f64>().abs());
            for j in 0..m {
                let cov: f64 = p.iter().zip(&comp).map(|(p, u)| p * u[i] * u[j]).sum();
                let want = if i == j { lam * dt } else { 0.0 } - lam * tree.intensities()[j] * dt * dt;
                err = err.max((cov - want).abs());
            }
        }
        for k in 0..tree.steps() {
            for node in tree.nodes(k) {
                let total: f64 = tree.children(node).map(|c| tree.transition_prob(NodeId::new(k + 1, c))).sum();
                err = err.max((total - 1.0).abs());
            }
        }
        let leaves = neumaier_sum(tree.nodes(tree.steps()).map(|l| tree.path_prob(l)));
        err = err.max((leaves - 1.0).abs());
        worst = worst.max(err);
        ensure(err <= 1e-14, || format!("tree {case}: identity error {err:e}"))?;
    }
    Ok(format!("50 trees, worst identity error {worst:.1e}"))
}

fn main() -> ExitCode {
    let results = [
        run("AC1", "counterexample reproduction", Duration::from_secs(5), ac1),
        run("AC2", "Snell envelope vs brute force", Duration::from_secs(60), ac2),
        run("AC3", "penalization monotonicity and convergence", Duration::from_secs(60), ac3),
        run("AC4", "solution-condition suite and fault injection", Duration::from_secs(60), ac4),
        run("AC5", "two-barrier cross-algorithm agreement", Duration::from_secs(90), ac5),
        run("AC6", "contraction certification", Duration::from_secs(30), ac6),
        run("AC7", "regularity dichotomy", Duration::from_secs(20), ac7),
        run("AC8", "noise-model identities", Duration::from_secs(5), ac8),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
