use std::f64::consts::PI;

use dvqa::attacks::AttackSpec;
use dvqa::exec::Execution;
use dvqa::experiments::{run_arm, run_detection_grid, run_tfim_vqe, Arm, DetectionExperiment, VqeExperiment};
use dvqa::protocol::{convergence_check, FinalVerdict, RunConfig};

#[test]
fn descent_is_identical_across_execution_modes() {
    let exp = VqeExperiment {
        run: RunConfig { n_iter: 20, ..VqeExperiment::default().run },
        seeds: vec![3, 4],
        ..VqeExperiment::default()
    };
    let a = run_tfim_vqe(&exp, Execution::Parallel).unwrap();
    let b = run_tfim_vqe(&exp, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 2 * 3 * 20);
}

#[test]
fn zero_iterations_give_no_rows() {
    let exp = VqeExperiment { run: RunConfig { n_iter: 0, ..VqeExperiment::default().run }, ..VqeExperiment::default() };
    let r = run_tfim_vqe(&exp, Execution::Parallel).unwrap();
    assert!(r.rows.is_empty());
    assert!(r.summaries.iter().all(|s| matches!(s.verdict, FinalVerdict::Abort { .. })));
}

#[test]
fn verified_arm_pays_reruns_and_unverified_arm_ends_worse() {
    let r = run_tfim_vqe(&VqeExperiment::default(), Execution::Parallel).unwrap();
    let traps_reruns: usize = r.summaries.iter().filter(|s| s.arm == Arm::Traps).map(|s| s.total_reruns).sum();
    assert!(traps_reruns > 0);
    assert!(r.mean_final_gap(Arm::NoTraps) > r.mean_final_gap(Arm::Traps));
    assert_eq!(r.mean_curve(Arm::Traps).len(), 150);
    for s in &r.summaries {
        let accepted = matches!(s.verdict, FinalVerdict::Accept { .. });
        assert_eq!(accepted, s.arm != Arm::NoTraps, "seed {} {:?}: {:?}", s.seed, s.arm, s.verdict);
    }
}

#[test]
fn attack_free_run_converges_within_200_steps() {
    let exp = VqeExperiment {
        run: RunConfig { n_iter: 200, ..VqeExperiment::default().run },
        attack: AttackSpec::None,
        ..VqeExperiment::default()
    };
    let problem = exp.problem().unwrap();
    let tol_g = exp.run.tol_g_for(problem.obs.one_norm());
    for &seed in &exp.seeds {
        let t = run_arm(&exp, &problem, Arm::AttackFree, seed).unwrap();
        let first =
            (exp.run.window..=t.steps.len()).find(|&k| convergence_check(&t.steps[..k], exp.run.window, tol_g));
        assert!(first.is_some_and(|k| k <= 200), "seed {seed}: {first:?}");
        assert!(t.is_accept());
    }
}

#[test]
fn detection_grid_edge_settings() {
    let exp = DetectionExperiment { p_attack: vec![0.0, 1.0], angle_shift: vec![PI], ..DetectionExperiment::default() };
    let rows = run_detection_grid(&exp, Execution::Parallel).unwrap();
    assert_eq!(rows.len(), 20);
    let (honest, attacked) = rows.split_at(10);
    assert!(honest.iter().all(|r| r.n_td == 0 && r.e < exp.e_th));
    assert!(attacked.iter().all(|r| r.n_td > 0));
}

#[test]
fn detection_grid_rejects_bad_budgets() {
    let exp = DetectionExperiment { d: 4001, ..DetectionExperiment::default() };
    assert!(run_detection_grid(&exp, Execution::Sequential).is_err());
    let exp = DetectionExperiment {
        lattice: dvqa::hamiltonian::LatticeSpec { rows: 3, cols: 3 },
        d: 36,
        ..DetectionExperiment::default()
    };
    assert!(matches!(run_detection_grid(&exp, Execution::Sequential), Err(dvqa::Error::TooLarge(_))));
}
