use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use dvqa::ansatz::{cost_exact, exact_gradient, AnsatzConfig, ParamVector};
use dvqa::attacks::{corrupt_sample, deviate_measurement, AttackSpec, CorruptionMode, ShiftScope, VertexRole};
use dvqa::hamiltonian::{build_tfim, estimate_cost, LatticeSpec, Pauli, PauliObservable, PauliString};
use dvqa::mbqc::{greedy_coloring, make_test_round, server_execute, ReadoutPattern};
use dvqa::protocol::{
    compile_patterns, run_step, ClientSession, InProcess, Problem, RoundSchedule, Slot, StepMode,
};
use dvqa::quantum::{Gate, StateVector};
use dvqa::rng::{stream, Domain};
use dvqa::verification::{
    delta_max, empirical_failure_rate, failure_probability_bound, lemma1_error_bound, AttackedRounds, ErrorModel,
    StepBudget,
};

fn gate(n: usize) -> impl Strategy<Value = Gate> {
    let q = 0..n;
    let a = -PI..PI;
    let single = prop_oneof![
        (q.clone(), a.clone()).prop_map(|(qubit, angle)| Gate::Rx { qubit, angle }),
        (q.clone(), a.clone()).prop_map(|(qubit, angle)| Gate::Ry { qubit, angle }),
        (q.clone(), a).prop_map(|(qubit, angle)| Gate::Rz { qubit, angle }),
        q.clone().prop_map(|qubit| Gate::H { qubit }),
    ];
    if n == 1 {
        return single.boxed();
    }
    let pair = (0..n, 1..n).prop_map(move |(a, off)| (a, (a + off) % n));
    prop_oneof![
        3 => single,
        1 => pair.clone().prop_map(|(a, b)| Gate::Cz { a, b }),
        1 => pair.prop_map(|(control, target)| Gate::Cnot { control, target }),
    ]
    .boxed()
}

fn circuit() -> impl Strategy<Value = (usize, Vec<Gate>)> {
    (1usize..=4).prop_flat_map(|n| (Just(n), prop::collection::vec(gate(n), 0..=40)))
}

fn state(n: usize) -> impl Strategy<Value = StateVector> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << n).prop_filter_map("zero vector", |amps| {
        let v: Vec<Complex64> = amps.into_iter().map(|(re, im)| Complex64::new(re, im)).collect();
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        (norm > 1e-3).then(|| StateVector::from_amplitudes(v.into_iter().map(|a| a / norm).collect()).unwrap())
    })
}

fn pauli(n: usize) -> impl Strategy<Value = PauliString> {
    prop::collection::vec(0usize..4, n).prop_filter_map("identity", |ks| {
        let letters = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
        let p = PauliString::new(ks.into_iter().map(|k| letters[k]).collect());
        (!p.is_identity()).then_some(p)
    })
}

fn observable(n: usize) -> impl Strategy<Value = PauliObservable> {
    prop::collection::vec((-2.0f64..2.0, pauli(n)), 1..6)
        .prop_map(move |terms| PauliObservable::new(n, terms).unwrap())
}

fn params(len: usize) -> impl Strategy<Value = ParamVector> {
    prop::collection::vec(-PI..PI, len).prop_map(ParamVector)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn circuits_preserve_norm((n, gates) in circuit()) {
        let mut s = StateVector::zero(n).unwrap();
        s.apply_circuit(&gates).unwrap();
        prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn expectation_is_linear((s, obs) in (1usize..=3).prop_flat_map(|n| (state(n), observable(n)))) {
        let termwise = obs.expectation(&s).unwrap();
        let dense = obs.to_dense().unwrap().expectation(&s).unwrap();
        prop_assert!((termwise - dense).abs() < 1e-10);
    }

    #[test]
    fn sample_means_track_expectation((s, p) in (1usize..=3).prop_flat_map(|n| (state(n), pauli(n))), seed in any::<u64>()) {
        let shots = 2000;
        let samples = s.sample_pauli(&p, shots, &mut stream(seed, Domain::Shots, 0)).unwrap();
        prop_assert!(samples.iter().all(|&x| x == 1 || x == -1));
        let mean = samples.iter().map(|&x| f64::from(x)).sum::<f64>() / shots as f64;
        prop_assert!((mean - s.pauli_expectation(&p).unwrap()).abs() <= 6.0 / (shots as f64).sqrt());
    }

    #[test]
    fn tfim_term_count(rows in 1usize..=3, cols in 1usize..=3, h in 0.05f64..2.0) {
        let obs = build_tfim(LatticeSpec::new(rows, cols).unwrap(), h);
        let edges = rows * (cols - 1) + cols * (rows - 1);
        prop_assert_eq!(obs.num_terms(), rows * cols + edges);
        prop_assert!((obs.one_norm() - (h * (rows * cols) as f64 + edges as f64)).abs() < 1e-12);
    }

    #[test]
    fn one_norm_ignores_term_order(obs in observable(3), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut terms: Vec<(f64, PauliString)> = obs.terms().iter().map(|t| (t.coeff, t.pauli.clone())).collect();
        terms.shuffle(&mut stream(seed, Domain::Trial, 0));
        let shuffled = PauliObservable::new(3, terms).unwrap();
        prop_assert!((shuffled.one_norm() - obs.one_norm()).abs() < 1e-12);
    }

    #[test]
    fn cost_is_periodic(n in 1usize..=3, layers in 1usize..=2, seed in any::<u64>(), shift in 0usize..6) {
        let cfg = AnsatzConfig::new(n, layers).unwrap();
        let obs = build_tfim(LatticeSpec::new(1, n).unwrap(), 0.4);
        let theta = ParamVector::zeros(cfg.num_params()).shifted(0, (seed % 1000) as f64 / 100.0);
        let i = shift % cfg.num_params();
        let a = cost_exact(&cfg, &theta, &obs).unwrap();
        let b = cost_exact(&cfg, &theta.shifted(i, 2.0 * PI), &obs).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn corrupted_samples_stay_eigenvalues(lambda in prop_oneof![Just(1i8), Just(-1i8)], seed in any::<u64>(), worst in any::<bool>()) {
        let mode = if worst { CorruptionMode::WorstCase } else { CorruptionMode::RandomFlip };
        let out = corrupt_sample(lambda, mode, &mut stream(seed, Domain::Attack, 0));
        prop_assert!(out == 1 || out == -1);
        if worst {
            prop_assert_eq!(out, -lambda);
        }
    }

    #[test]
    fn unattacked_rounds_measure_announced_angle(delta in -PI..PI, shift in -PI..PI, output in any::<bool>(), all in any::<bool>()) {
        let spec = AttackSpec::AngleShift { p_attack: 1.0, shift, scope: if all { ShiftScope::All } else { ShiftScope::Output } };
        let role = if output { VertexRole::Output } else { VertexRole::Internal };
        prop_assert_eq!(deviate_measurement(delta, &spec, role, false), delta);
        let shifted = deviate_measurement(delta, &spec, role, true);
        prop_assert_eq!(shifted == delta + shift, all || output);
    }

    #[test]
    fn corruption_bound_is_linear_and_shrinks_with_shots(delta in 1.0f64..100.0, shots in 1usize..10_000, e_th in 0.01f64..1.0, norm in 0.1f64..10.0) {
        let model = ErrorModel::with_defaults(e_th, norm);
        let one = lemma1_error_bound(1.0, &model, shots).unwrap();
        let many = lemma1_error_bound(delta, &model, shots).unwrap();
        prop_assert!((many - delta * one).abs() <= 1e-12 * many.max(1.0));
        prop_assert!(lemma1_error_bound(delta, &model, shots + 1).unwrap() < many);
    }

    #[test]
    fn delta_max_equals_w_d(e_th in 0.0f64..1.0, eps0 in 0.0f64..5.0, norm in 0.1f64..10.0, np in 1usize..10, shots in 1usize..5000) {
        let model = ErrorModel { e_th, eps0, one_norm: norm, eps1: Some(0.0) };
        let budget = StepBudget::new(np, shots, 10, 2).unwrap();
        let b = delta_max(&model, &budget).unwrap();
        prop_assert!((b.delta_max - b.w * budget.d as f64).abs() <= 1e-12 * b.delta_max.max(1.0));
    }

    #[test]
    fn failure_bound_non_increasing_in_t(frac in 0.0f64..0.5, t in 0usize..2000, w in 0.001f64..0.1, c in 1usize..4) {
        let eps1 = w / 2.0;
        let m = frac * (4000 + t) as f64;
        let at = |t: usize| failure_probability_bound(m, &StepBudget::new(2, 1000, t, c).unwrap(), w, eps1);
        // m stays fixed. With m/n fixed instead, the below-budget factor grows
        // with n when t is small, so the bound is not monotone there.
        prop_assert!(at(t + 25) <= at(t) + 1e-12);
    }

    #[test]
    fn schedules_cover_every_pair_once(evals in 1usize..6, shots in 1usize..20, t in 0usize..20, seed in any::<u64>()) {
        let s = RoundSchedule::new(evals, shots, t, &mut stream(seed, Domain::Schedule, 0)).unwrap();
        prop_assert_eq!(s.len(), evals * shots + t);
        prop_assert_eq!(s.num_tests(), t);
        let mut seen = vec![false; evals * shots];
        for slot in &s.slots {
            if let Slot::Computation { evaluation, shot } = *slot {
                prop_assert!(!seen[evaluation * shots + shot]);
                seen[evaluation * shots + shot] = true;
            }
        }
        prop_assert!(seen.into_iter().all(|x| x));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn honest_traps_always_pass(theta in params(4), seed in any::<u64>(), term in 0usize..3) {
        let obs = build_tfim(LatticeSpec::new(1, 2).unwrap(), 0.2);
        let cfg = AnsatzConfig::new(2, 2).unwrap();
        let circuit = dvqa::ansatz::build_circuit(&cfg, &theta).unwrap();
        let pattern = ReadoutPattern::compile(&circuit, &obs.terms()[term].pauli).unwrap();
        let coloring = greedy_coloring(&pattern.pattern.graph);
        for i in 0..20 {
            let plan = make_test_round(&pattern.pattern.graph, &coloring, &mut stream(seed, Domain::Client, i)).unwrap();
            let out = server_execute(&pattern, plan, &AttackSpec::None, false, &mut stream(seed, Domain::Referee, i)).unwrap();
            prop_assert_eq!(out.trap_failures(), 0);
        }
    }

    #[test]
    fn trap_failures_always_abort(seed in any::<u64>(), p in 0.0f64..0.5, shift in -PI..PI) {
        let obs = build_tfim(LatticeSpec::new(1, 2).unwrap(), 0.2);
        let problem = Problem::new(AnsatzConfig::new(2, 1).unwrap(), obs).unwrap();
        let budget = StepBudget::new(2, 4, 6, 2).unwrap();
        let attack = AttackSpec::AngleShift { p_attack: p, shift, scope: ShiftScope::All };
        for mode in [StepMode::RunAll, StepMode::AbortOnFirstFailure] {
            let mut session = ClientSession::new(InProcess::new(seed, attack), seed);
            let (outcome, report) = run_step(&mut session, &problem, &ParamVector(vec![0.4, 0.9]), &budget, mode).unwrap();
            prop_assert_eq!(outcome.is_accept(), report.trap_failures == 0);
        }
    }

    #[test]
    fn server_record_has_one_shape_for_every_round(seed in any::<u64>()) {
        let obs = build_tfim(LatticeSpec::new(1, 2).unwrap(), 0.2);
        let problem = Problem::new(AnsatzConfig::new(2, 1).unwrap(), obs).unwrap();
        let theta = ParamVector(vec![0.4, 0.9]);
        let budget = StepBudget::new(2, 3, 4, 2).unwrap();
        let mut transport = InProcess::new(seed, AttackSpec::None);
        transport.server = dvqa::protocol::Server::new(seed, AttackSpec::None).with_log();
        let mut session = ClientSession::new(transport, seed);
        run_step(&mut session, &problem, &theta, &budget, StepMode::RunAll).unwrap();
        let log = session.transport().server.log().to_vec();
        // Shape of a message: its type, its keys and its vertex, never its values.
        let mut per_round: BTreeMap<u64, Vec<String>> = BTreeMap::new();
        for line in &log {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let Some(round) = v.get("round_id").and_then(|r| r.as_u64()) else { continue };
            let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
            keys.sort_unstable();
            per_round.entry(round).or_default().push(format!("{}:{}:{}", v["type"], keys.join(","), v.get("vertex").map_or(String::new(), |x| x.to_string())));
        }
        prop_assert_eq!(per_round.len(), budget.n);
        let first = per_round.values().next().unwrap();
        prop_assert!(per_round.values().all(|shape| shape == first));
    }
}

#[test]
fn estimate_converges_with_many_shots() {
    for (n, seed) in [(1usize, 1u64), (2, 2), (3, 3)] {
        let cfg = AnsatzConfig::new(n, 2).unwrap();
        let obs = build_tfim(LatticeSpec::new(1, n).unwrap(), 0.7);
        let theta = ParamVector((0..cfg.num_params()).map(|i| 0.3 * i as f64 - 0.5).collect());
        let s = dvqa::ansatz::prepare_state(&cfg, &theta).unwrap();
        let est = estimate_cost(&s, &obs, 1_000_000, &mut stream(seed, Domain::Shots, 0)).unwrap();
        assert!((est - obs.expectation(&s).unwrap()).abs() <= 0.01 * obs.one_norm());
    }
}

#[test]
fn empty_observable_has_zero_gradient() {
    let cfg = AnsatzConfig::new(2, 1).unwrap();
    let obs = PauliObservable::new(2, Vec::<(f64, PauliString)>::new()).unwrap();
    let g = exact_gradient(&cfg, &ParamVector(vec![0.3, 0.1]), &obs).unwrap();
    assert_eq!(g.values, vec![0.0, 0.0]);
}

#[test]
fn failure_bound_vanishes_along_n() {
    let (w, eps1) = (0.05, 0.02);
    let bounds: Vec<f64> = (0..10)
        .map(|k| {
            let n = 1000usize << k;
            let t = n / 10;
            let budget = StepBudget::new(1, (n - t) / 2, t, 2).unwrap();
            failure_probability_bound(0.1 * budget.n as f64, &budget, w, eps1)
        })
        .collect();
    assert!(bounds.windows(2).all(|b| b[1] < b[0] || b[0] == 0.0), "{bounds:?}");
    assert!(*bounds.last().unwrap() < 1e-6, "{bounds:?}");
}

#[test]
fn empirical_rates_respect_bound_on_grid() {
    let model = ErrorModel::with_defaults(0.2, 1.4);
    for t in [50usize, 200, 800] {
        let budget = StepBudget::new(2, 1000, t, 2).unwrap();
        let bounds = delta_max(&model, &budget).unwrap();
        for p in [0.01, 0.05, 0.2] {
            let rate = empirical_failure_rate(
                &budget,
                bounds.delta_max,
                AttackedRounds::Bernoulli(p),
                400,
                t as u64,
                dvqa::exec::Execution::Parallel,
            )
            .unwrap();
            assert!(rate.rate <= bounds.p_fail_bound + rate.ci_width(), "t={t} p={p}: {rate:?} vs {}", bounds.p_fail_bound);
        }
    }
}

#[test]
fn patterns_share_one_graph_across_parameters() {
    let obs = build_tfim(LatticeSpec::new(1, 2).unwrap(), 0.2);
    let problem = Problem::new(AnsatzConfig::new(2, 2).unwrap(), obs).unwrap();
    let thetas = [ParamVector(vec![0.0; 4]), ParamVector(vec![1.0, -2.0, 0.5, 3.0])];
    assert!(compile_patterns(&problem, &thetas).is_ok());
}
