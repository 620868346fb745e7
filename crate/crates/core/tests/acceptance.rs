//! One pass/fail line per acceptance criterion. Runs as a plain binary so the
//! report prints in order, and exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::net::TcpListener;
use std::thread;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use dvqa::ansatz::{build_circuit, cost_exact, exact_gradient, AnsatzConfig, ParamVector};
use dvqa::attacks::{select_exact_rounds, AttackSpec, CorruptionMode, ShiftScope, Targeting};
use dvqa::exec::Execution;
use dvqa::experiments::{run_detection_grid, run_tfim_vqe, Arm, DetectionExperiment, VqeExperiment};
use dvqa::hamiltonian::{build_tfim, LatticeSpec, Pauli, PauliObservable, PauliString};
use dvqa::mbqc::{
    circuit_to_pattern, greedy_coloring, make_computation_round, make_test_round, server_execute, simulate_pattern,
    ClientRound, GraphSim, ReadoutPattern, ALPHABET_SIZE as ALPHABET,
};
use dvqa::protocol::{
    compile_patterns, run_step, sample_gradient_with_corruption, scan_for_secrets, serve_referee, serve_server,
    ClientSession, InProcess, Problem, StepMode, TcpClient, WireMessage,
};
use dvqa::quantum::{Gate, StateVector};
use dvqa::rng::{stream, Domain, SimRng};
use dvqa::verification::{
    check_convergence_conditions, delta_max, empirical_failure_rate, error_neighborhood, failure_probability_bound,
    iterations_needed, AttackedRounds, ConvergenceInputs, ErrorModel, StepBudget,
};

const ALPHABET_SIZE: usize = ALPHABET as usize;
const TFIM_2X2_E0: f64 = -4.0405936992038605;
const Z_INF_GOLDEN: f64 = 0.007586206896551725;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn random_observable(n: usize, rng: &mut SimRng) -> PauliObservable {
    let letters = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    let terms: Vec<(f64, PauliString)> = (0..3)
        .map(|_| {
            // Skip I on the first qubit so no term is the identity.
            let p = PauliString::new((0..n).map(|q| letters[rng.random_range(usize::from(q == 0)..4)]).collect());
            (rng.random_range(-1.0..1.0), p)
        })
        .collect();
    PauliObservable::new(n, terms).expect("valid observable")
}

fn random_theta(n: usize, rng: &mut SimRng) -> ParamVector {
    ParamVector((0..n).map(|_| rng.random_range(-PI..PI)).collect())
}

fn gradient_correctness() -> Outcome {
    let mut rng = stream(1, Domain::Trial, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let cfg = ok(AnsatzConfig::new(rng.random_range(1..=3), rng.random_range(1..=2)))?;
        let obs = random_observable(cfg.num_qubits, &mut rng);
        let theta = random_theta(cfg.num_params(), &mut rng);
        let g = ok(exact_gradient(&cfg, &theta, &obs))?;
        for i in 0..theta.len() {
            let h = 1e-5;
            let fd = (ok(cost_exact(&cfg, &theta.shifted(i, h), &obs))? - ok(cost_exact(&cfg, &theta.shifted(i, -h), &obs))?)
                / (2.0 * h);
            worst = worst.max((fd - g.values[i]).abs());
        }
    }
    ensure(worst <= 1e-6, format!("max |shift - fd| = {worst:.2e}"))?;
    Ok(format!("max |shift - fd| = {worst:.2e} over 20 cases"))
}

fn oracle_checks() -> Outcome {
    let hx = ok(PauliObservable::new(1, vec![(0.7, PauliString::new(vec![Pauli::X]))]))?;
    let e_hx = ok(ok(hx.to_dense())?.ground_energy())?;
    ensure((e_hx + 0.7).abs() < 1e-12, format!("hX gave {e_hx}"))?;
    let zz = ok(PauliObservable::new(2, vec![(1.0, PauliString::new(vec![Pauli::Z, Pauli::Z]))]))?;
    let e_zz = ok(ok(zz.to_dense())?.ground_energy())?;
    ensure((e_zz + 1.0).abs() < 1e-12, format!("ZZ gave {e_zz}"))?;
    let tfim = build_tfim(ok(LatticeSpec::new(2, 2))?, 0.2);
    let e0 = ok(ok(tfim.to_dense())?.ground_energy())?;
    ensure((e0 - TFIM_2X2_E0).abs() <= 1e-9, format!("2x2 gave {e0}"))?;
    Ok(format!("hX {e_hx}, ZZ {e_zz}, 2x2 TFIM {e0:.12}"))
}

fn random_gate(n: usize, rng: &mut SimRng) -> Gate {
    let q = rng.random_range(0..n);
    let a = rng.random_range(-PI..PI);
    let kinds = if n > 1 { 6 } else { 4 };
    match rng.random_range(0..kinds) {
        0 => Gate::Rx { qubit: q, angle: a },
        1 => Gate::Ry { qubit: q, angle: a },
        2 => Gate::Rz { qubit: q, angle: a },
        3 => Gate::H { qubit: q },
        4 => {
            let b = (q + rng.random_range(1..n)) % n;
            Gate::Cz { a: q, b }
        }
        _ => {
            let t = (q + rng.random_range(1..n)) % n;
            Gate::Cnot { control: q, target: t }
        }
    }
}

fn fidelity_of(circuit: &[Gate], n: usize, rng: &mut SimRng) -> Result<f64, String> {
    let inputs: Vec<(Complex64, Complex64)> = (0..n)
        .map(|_| {
            let (t, p): (f64, f64) = (rng.random_range(0.0..PI), rng.random_range(-PI..PI));
            (Complex64::new((t / 2.0).cos(), 0.0), Complex64::from_polar((t / 2.0).sin(), p))
        })
        .collect();
    let mut expected = ok(StateVector::single(inputs[0].0, inputs[0].1))?;
    for &(a, b) in &inputs[1..] {
        expected.push_qubit(a, b);
    }
    ok(expected.apply_circuit(circuit))?;
    let pattern = ok(circuit_to_pattern(circuit, n))?;
    let got = ok(simulate_pattern(&pattern, &inputs, rng))?;
    ok(got.fidelity(&expected))
}

fn mbqc_fidelity() -> Outcome {
    let mut rng = stream(3, Domain::Trial, 0);
    let mut worst: f64 = 1.0;
    let mut cases = 0;
    for n in 1..=3 {
        for layers in 1..=2 {
            let cfg = ok(AnsatzConfig::new(n, layers))?;
            for _ in 0..50 {
                let circuit = ok(build_circuit(&cfg, &random_theta(cfg.num_params(), &mut rng)))?;
                worst = worst.min(fidelity_of(&circuit, n, &mut rng)?);
                cases += 1;
            }
        }
        for _ in 0..50 {
            let len = rng.random_range(1..=10);
            let circuit: Vec<Gate> = (0..len).map(|_| random_gate(n, &mut rng)).collect();
            worst = worst.min(fidelity_of(&circuit, n, &mut rng)?);
            cases += 1;
        }
    }
    ensure(worst >= 1.0 - 1e-9, format!("worst fidelity {worst}"))?;
    Ok(format!("worst fidelity 1 - {:.1e} over {cases} circuits", 1.0 - worst))
}

fn fig2_problem() -> Result<Problem, String> {
    let obs = build_tfim(ok(LatticeSpec::new(1, 2))?, 0.2);
    ok(Problem::new(ok(AnsatzConfig::new(2, 2))?, obs))
}

fn readout_pattern(problem: &Problem, theta: &ParamVector, term: usize) -> Result<ReadoutPattern, String> {
    let circuit = ok(build_circuit(&problem.ansatz, theta))?;
    ok(ReadoutPattern::compile(&circuit, &problem.obs.terms()[term].pauli))
}

fn honest_traps() -> Outcome {
    let problem = fig2_problem()?;
    let pattern = readout_pattern(&problem, &ParamVector(vec![0.3, -0.8, 1.2, 2.0]), 0)?;
    let graph = &pattern.pattern.graph;
    let coloring = greedy_coloring(graph);
    let (mut failures, mut traps) = (0, 0);
    for i in 0..10_000u64 {
        let mut rng = stream(4, Domain::Client, i);
        let plan = ok(make_test_round(graph, &coloring, &mut rng))?;
        let outcome = ok(server_execute(&pattern, plan, &AttackSpec::None, false, &mut stream(4, Domain::Referee, i)))?;
        failures += outcome.trap_failures();
        traps += outcome.trap_verdicts.len();
    }
    ensure(failures == 0, format!("{failures} trap failures"))?;
    Ok(format!("0 failures over {traps} traps in 10^4 rounds ({} vertices)", graph.num_vertices))
}

fn blindness() -> Outcome {
    let problem = fig2_problem()?;
    let chi = ok(ChiSquared::new((ALPHABET_SIZE - 1) as f64))?;
    let mut min_p: f64 = 1.0;
    for (setting, theta) in [ParamVector(vec![0.0; 4]), ParamVector(vec![0.37, -1.9, 2.4, 0.05])].iter().enumerate() {
        let pattern = readout_pattern(&problem, theta, 2)?;
        let graph = &pattern.pattern.graph;
        let n = graph.num_vertices;
        let mut counts = vec![[0u64; ALPHABET_SIZE]; n];
        for i in 0..10_000u64 {
            let mut rng = stream(5 + setting as u64, Domain::Client, i);
            let plan = make_computation_round(n, &mut rng);
            let mut sim = ok(GraphSim::from_preps(graph, &plan.preps()))?;
            let mut client = ok(ClientRound::new(&pattern, plan))?;
            let mut q = stream(5 + setting as u64, Domain::Referee, i);
            while let Some((v, delta)) = ok(client.next_angle())? {
                let bin = (delta.rem_euclid(2.0 * PI) / (PI / 4.0) + 1e-9).floor() as usize % ALPHABET_SIZE;
                counts[v][bin] += 1;
                let bit = ok(sim.measure(v, delta, &mut q))?;
                ok(client.record(v, bit))?;
            }
        }
        for c in &counts {
            let expect = 10_000.0 / ALPHABET_SIZE as f64;
            let stat: f64 = c.iter().map(|&o| (o as f64 - expect).powi(2) / expect).sum();
            min_p = min_p.min(1.0 - chi.cdf(stat));
        }
    }
    ensure(min_p > 1e-3, format!("smallest p-value {min_p:.2e}"))?;
    Ok(format!("smallest per-vertex p-value {min_p:.3} over two angle settings"))
}

fn corruption_error() -> Outcome {
    let mut rng = stream(6, Domain::Trial, 0);
    let shots = 1000;
    let e_th = 0.2;
    let mut worst_ratio: f64 = 0.0;
    for k in 0..50u64 {
        let (rows, cols) = [(1, 2), (1, 3), (2, 2)][rng.random_range(0..3)];
        let obs = build_tfim(ok(LatticeSpec::new(rows, cols))?, rng.random_range(0.1..1.0));
        let problem = ok(Problem::new(ok(AnsatzConfig::new(rows * cols, rng.random_range(1..=2)))?, obs))?;
        let model = ErrorModel::with_defaults(e_th, problem.obs.one_norm());
        let budget = ok(StepBudget::new(problem.ansatz.num_params(), shots, 0, 2))?;
        let dmax = ok(delta_max(&model, &budget))?.delta_max.floor() as usize;
        let delta = rng.random_range(1..=dmax);
        let mut attempt = 0u64;
        let trial = loop {
            let theta = random_theta(problem.ansatz.num_params(), &mut rng);
            if ok(exact_gradient(&problem.ansatz, &theta, &problem.obs))?.norm1() < model.eps0 {
                continue;
            }
            let mut trng = stream(6, Domain::Shots, k * 1000 + attempt);
            attempt += 1;
            let rounds = ok(select_exact_rounds(budget.d, delta, Targeting::Uniform, &[], &mut trng))?;
            let trial =
                ok(sample_gradient_with_corruption(&problem, &theta, shots, &rounds, CorruptionMode::WorstCase, &mut trng))?;
            if trial.honest.norm1() >= model.eps0 {
                break trial;
            }
        };
        let bound = problem.obs.one_norm() * delta as f64 / (model.eps0 * shots as f64);
        let measured = trial.relative_error();
        worst_ratio = worst_ratio.max(measured / bound);
    }
    ensure(worst_ratio <= 1.0, format!("measured/bound reached {worst_ratio:.3}"))?;
    Ok(format!("50/50 configurations within the bound, worst measured/bound = {worst_ratio:.3}"))
}

fn theorem1() -> Outcome {
    let (w, eps1, colors) = (0.05, 0.025, 2);
    let mut bounds = Vec::new();
    let mut lines = Vec::new();
    for scale in [1usize, 2, 4] {
        let n = 8000 * scale;
        let t = n / 5;
        let budget = ok(StepBudget::new(4, (n - t) / 8, t, colors))?;
        let m = (2.0 * w * n as f64).round() as usize;
        let bound = failure_probability_bound(m as f64, &budget, w, eps1);
        let rate = ok(empirical_failure_rate(
            &budget,
            w * budget.d as f64,
            AttackedRounds::Fixed(m),
            2000,
            7 + scale as u64,
            Execution::Parallel,
        ))?;
        ensure(
            rate.rate <= bound + rate.ci_width(),
            format!("n={n}: empirical {} > bound {bound:.3e} + ci {:.3e}", rate.rate, rate.ci_width()),
        )?;
        lines.push(format!("n={n}: rate {} bound {bound:.3e}", rate.rate));
        bounds.push(bound);
    }
    ensure(bounds.windows(2).all(|b| b[1] < b[0]), format!("bound not decreasing: {bounds:?}"))?;
    Ok(lines.join("; "))
}

fn fig1() -> Outcome {
    let exp = VqeExperiment::default();
    let results = ok(run_tfim_vqe(&exp, Execution::Parallel))?;
    let traps = results.mean_final_gap(Arm::Traps);
    let no_traps = results.mean_final_gap(Arm::NoTraps);
    let free = results.mean_final_gap(Arm::AttackFree);
    let reruns: usize = results.summaries.iter().filter(|s| s.arm == Arm::Traps).map(|s| s.total_reruns).sum();
    let detail = format!("gaps: attack-free {free:.4}, no traps {no_traps:.4}, traps {traps:.4}; traps reruns {reruns}");
    ensure(traps <= no_traps / 3.0, format!("traps gap too large; {detail}"))?;
    ensure(free <= 0.05 * results.e0.abs(), format!("attack-free gap too large; {detail}"))?;
    Ok(detail)
}

fn fig2() -> Outcome {
    let exp = DetectionExperiment::default();
    let rows = ok(run_detection_grid(&exp, Execution::Parallel))?;
    let above = rows.iter().filter(|r| r.e > exp.e_th).count();
    let missed = rows.iter().filter(|r| !r.agrees(exp.e_th)).count();
    let false_alarms = rows.iter().filter(|r| r.p_attack == 0.0 && r.n_td > 0).count();
    let mut worst_agreement: f64 = 1.0;
    for chunk in rows.chunks(exp.runs) {
        let agree = chunk.iter().filter(|r| r.agrees(exp.e_th)).count() as f64 / chunk.len() as f64;
        worst_agreement = worst_agreement.min(agree);
    }
    let detail = format!(
        "{} runs, {above} above e_th = {}, {missed} undetected above e_th, {false_alarms} detections without attack, worst per-setting agreement {:.0}%",
        rows.len(),
        exp.e_th,
        100.0 * worst_agreement
    );
    ensure(missed == 0 && false_alarms == 0 && worst_agreement >= 0.9, detail.clone())?;
    Ok(detail)
}

fn closed_forms() -> Outcome {
    let model = ErrorModel { e_th: 0.1, eps0: 1.0, one_norm: 5.0, eps1: None };
    let dm = ok(delta_max(&model, &ok(StepBudget::new(2, 1000, 50, 2))?))?.delta_max;
    ensure((dm - 20.0).abs() < 1e-12, format!("delta_max = {dm}"))?;

    let (mu, l, alpha) = (0.5, 4.0, 0.1);
    let inp = ConvergenceInputs { mu, lipschitz: l, alpha, e: 0.0, sigma2: 0.01 };
    let g = check_convergence_conditions(&inp).gamma;
    ensure((g - (1.0 - mu * alpha * (2.0 - alpha * l))).abs() < 1e-15, format!("gamma(e=0) = {g}"))?;

    let e = 0.3;
    let inp = ConvergenceInputs { mu, lipschitz: l, alpha: 1.0 / (l * (1.0 + e)), e, sigma2: 0.01 };
    let g = check_convergence_conditions(&inp).gamma;
    ensure((g - (1.0 - mu / l)).abs() < 1e-15, format!("gamma at alpha = 1/(L(1+e)) is {g}"))?;

    let base = ConvergenceInputs { mu: 1.0, lipschitz: 5.0, alpha: 0.1, e: 0.1, sigma2: 0.04 };
    let z1 = ok(error_neighborhood(&base))?;
    ensure((z1 - Z_INF_GOLDEN).abs() < 1e-15, format!("z_inf = {z1}"))?;
    let z3 = ok(error_neighborhood(&ConvergenceInputs { sigma2: 0.12, ..base }))?;
    ensure((z3 - 3.0 * z1).abs() < 1e-15, "z_inf is not linear in sigma^2")?;

    let k = ok(iterations_needed(0.1, 1.0, 1e-3))?;
    ensure(k == 70, format!("iterations_needed = {k}"))?;
    Ok("delta_max 20, gamma reductions, z_inf linearity, 70 iterations".into())
}

fn transport_equivalence() -> Outcome {
    let problem = fig2_problem()?;
    let theta = ParamVector(vec![0.3, 0.4, -0.2, 1.0]);
    let probe = ok(compile_patterns(&problem, std::slice::from_ref(&theta)))?;
    let colors = greedy_coloring(&probe[0][0].pattern.graph).num_colors;
    let budget = ok(StepBudget::new(4, 8, 6, colors))?;
    let attack = AttackSpec::AngleShift { p_attack: 0.2, shift: PI / 2.0, scope: ShiftScope::Output };
    let seed = 21;

    let mut inproc = ClientSession::new(InProcess::new(seed, attack), seed);
    let expected = ok(run_step(&mut inproc, &problem, &theta, &budget, StepMode::RunAll))?;

    let referee_listener = ok(TcpListener::bind("127.0.0.1:0"))?;
    let server_listener = ok(TcpListener::bind("127.0.0.1:0"))?;
    let referee_addr = ok(referee_listener.local_addr())?;
    let server_addr = ok(server_listener.local_addr())?;
    let referee = thread::spawn(move || serve_referee(referee_listener, seed, 2));
    let server = thread::spawn(move || serve_server(server_listener, referee_addr, seed, attack));
    let got = {
        let mut session = ClientSession::new(ok(TcpClient::connect(referee_addr, server_addr))?, seed);
        ok(run_step(&mut session, &problem, &theta, &budget, StepMode::RunAll))?
    };
    let log = ok(server.join().map_err(|_| "server thread panicked"))?.map_err(|e| e.to_string())?;
    ok(referee.join().map_err(|_| "referee thread panicked"))?.map_err(|e| e.to_string())?;

    ensure(got == expected, "TCP and in-process transcripts differ")?;
    let leaked = scan_for_secrets(log.iter().map(String::as_str));
    ensure(leaked.is_empty(), format!("server log mentions {leaked:?}"))?;
    let prep = WireMessage::PrepareBatch { round_id: 0, vertex_count: 0, preps: Vec::new() }.to_json();
    ensure(!scan_for_secrets([prep.as_str()]).is_empty(), "secret scan is blind")?;
    Ok(format!("digest {:016x} on both transports, {} server log entries clean", got.1.digest, log.len()))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 11] = [
        ("gradient correctness", 10, gradient_correctness),
        ("oracle checks", 5, oracle_checks),
        ("MBQC fidelity", 60, mbqc_fidelity),
        ("honest-trap determinism", 120, honest_traps),
        ("blindness smoke test", 60, blindness),
        ("corruption error bound", 120, corruption_error),
        ("failure-probability bound", 300, theorem1),
        ("verified descent end to end", 900, fig1),
        ("verified step end to end", 1200, fig2),
        ("closed forms", 1, closed_forms),
        ("transport equivalence", 30, transport_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let (verdict, detail) = match (&outcome, in_time) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("too slow; {d}")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!("criterion {:>2} {verdict} {name} ({:.2}s / {limit}s): {detail}", i + 1, elapsed.as_secs_f64());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
