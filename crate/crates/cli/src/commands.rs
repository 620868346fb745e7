use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use dvqa::ansatz::{AnsatzConfig, ParamVector};
use dvqa::attacks::{AttackSpec, ShiftScope, Targeting};
use dvqa::exec::Execution;
use dvqa::experiments::{
    run_detection_grid, run_tfim_vqe, Arm, DetectionExperiment, DetectionRow, DetectionSetup, VqeExperiment,
};
use dvqa::hamiltonian::{build_tfim, LatticeSpec};
use dvqa::mbqc::greedy_coloring;
use dvqa::protocol::{compile_patterns, serve_referee, serve_server, ClientSession, Loopback, Problem, TcpClient};
use dvqa::verification::{
    check_convergence_conditions, delta_max, iterations_needed, ConvergenceInputs, ErrorModel, StepBudget,
};
use serde::Serialize;
use serde_json::json;

use crate::settings::{AttackKind, Settings, Transport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const VQE_COLUMNS: [&str; 7] = ["seed", "arm", "step", "f_hat", "f_exact", "reruns", "grad_norm1"];
pub const DETECTION_COLUMNS: [&str; 4] = ["p_attack", "angle_shift", "e", "n_td"];

/// Why a command did not finish cleanly.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Internal(String),
}

impl From<dvqa::Error> for Failure {
    fn from(e: dvqa::Error) -> Self {
        match e {
            dvqa::Error::Input(_) | dvqa::Error::TooLarge(_) | dvqa::Error::Infeasible(_) => {
                Failure::Usage(e.to_string())
            }
            dvqa::Error::Communication(_) | dvqa::Error::Session(_) => Failure::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Whether the command finished with an Accept or an Abort verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Abort,
}

/// Reject flags a command would silently ignore.
pub fn check_fields(command: &str, s: &Settings, allowed: &[&str]) -> Result<(), Failure> {
    let value = serde_json::to_value(s)?;
    let used: Vec<&String> = value.as_object().map(|m| m.keys().collect()).unwrap_or_default();
    let stray: Vec<String> = used.into_iter().filter(|k| !allowed.contains(&k.as_str())).map(|k| format!("--{k}")).collect();
    if stray.is_empty() {
        Ok(())
    } else {
        Err(usage(format!("{command} does not take {}", stray.join(", "))))
    }
}

fn single<T: Copy>(name: &str, v: &Option<Vec<T>>) -> Result<Option<T>, Failure> {
    match v.as_deref() {
        None => Ok(None),
        Some([x]) => Ok(Some(*x)),
        Some(_) => Err(usage(format!("--{name} takes a single value here"))),
    }
}

fn execution(s: &Settings) -> Execution {
    if s.sequential == Some(true) {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn out_dir(s: &Settings) -> Result<PathBuf, Failure> {
    let dir = s.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_csv<R: Serialize>(path: &Path, columns: &[&str], rows: &[R]) -> Result<(), Failure> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(columns)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub const VQE_FIELDS: &[&str] = &[
    "lattice", "h", "layers", "shots", "lr", "e-th", "eps0", "attack", "p-attack", "delta", "t-rounds", "n-iter",
    "max-reruns", "window", "tol-g", "round-budget", "seeds", "out", "sequential",
];

pub fn vqe_experiment(s: &Settings) -> Result<VqeExperiment, Failure> {
    check_fields("tfim-vqe", s, VQE_FIELDS)?;
    let mut exp = VqeExperiment::default();
    if let Some(l) = s.lattice {
        exp.lattice = l.0;
    }
    exp.h = s.h.unwrap_or(exp.h);
    exp.layers = s.layers.unwrap_or(exp.layers);
    let run = &mut exp.run;
    run.shots = s.shots.unwrap_or(run.shots);
    run.alpha = s.lr.unwrap_or(run.alpha);
    run.e_th = s.e_th.unwrap_or(run.e_th);
    run.eps0 = s.eps0.or(run.eps0);
    run.t_rounds = s.t_rounds.unwrap_or(run.t_rounds);
    run.n_iter = s.n_iter.unwrap_or(run.n_iter);
    run.max_reruns = s.max_reruns.unwrap_or(run.max_reruns);
    run.window = s.window.unwrap_or(run.window);
    run.tol_g = s.tol_g.or(run.tol_g);
    run.round_budget = s.round_budget.or(run.round_budget);
    let p = single("p-attack", &s.p_attack)?;
    let kind = s.attack.unwrap_or(AttackKind::Gradient);
    exp.attack = match (kind.corruption_mode(), exp.attack) {
        (None, AttackSpec::GradientPerturb { p: p0, delta: d0 }) => {
            AttackSpec::GradientPerturb { p: p.unwrap_or(p0), delta: s.delta.unwrap_or(d0) }
        }
        (None, _) => unreachable!("the default attack perturbs gradients"),
        (Some(mode), _) => {
            if s.delta.is_some() {
                return Err(usage("--delta only applies to --attack gradient"));
            }
            AttackSpec::RoundCorruption { p_attack: p.unwrap_or(0.1), mode, targeting: Targeting::Uniform }
        }
    };
    if let Some(seeds) = &s.seeds {
        exp.seeds = seeds.clone();
    }
    LatticeSpec::new(exp.lattice.rows, exp.lattice.cols)?;
    AnsatzConfig::new(exp.lattice.num_sites(), exp.layers)?;
    exp.validate()?;
    Ok(exp)
}

pub fn tfim_vqe(s: &Settings) -> Result<Verdict, Failure> {
    let exp = vqe_experiment(s)?;
    let dir = out_dir(s)?;
    let results = run_tfim_vqe(&exp, execution(s))?;

    write_csv(&dir.join("tfim_vqe.csv"), &VQE_COLUMNS, &results.rows)?;
    let transcripts = dir.join("transcripts");
    fs::create_dir_all(&transcripts)?;
    for (summary, t) in results.summaries.iter().zip(&results.transcripts) {
        let path = transcripts.join(format!("seed{}_{}.jsonl", summary.seed, summary.arm.name()));
        let mut w = BufWriter::new(File::create(path)?);
        t.write_jsonl(&mut w)?;
        w.flush()?;
    }
    let gaps: serde_json::Map<String, serde_json::Value> =
        Arm::ALL.iter().map(|&a| (a.name().to_string(), json!(results.mean_final_gap(a)))).collect();
    let meta = json!({
        "command": "tfim-vqe",
        "version": VERSION,
        "csv": "tfim_vqe.csv",
        "columns": VQE_COLUMNS,
        "config": exp,
        "settings": s,
        "seeds": exp.seeds,
        "e0": results.e0,
        "mean_final_gap": gaps,
        "summaries": results.summaries,
    });
    write_json(&dir.join("tfim_vqe.meta.json"), &meta)?;
    write_json(&dir.join("config.json"), &serde_json::to_value(s)?)?;

    let aborted = results.summaries.iter().filter(|x| x.arm == Arm::Traps && !matches!(x.verdict, dvqa::protocol::FinalVerdict::Accept { .. })).count();
    for x in &results.summaries {
        log::info!("seed {} {}: final f_exact {:.6}, {} reruns, {:?}", x.seed, x.arm.name(), x.final_f_exact, x.total_reruns, x.verdict);
    }
    if aborted > 0 {
        log::warn!("{aborted} of {} traps-arm runs ended in Abort", exp.seeds.len());
        Ok(Verdict::Abort)
    } else {
        Ok(Verdict::Accept)
    }
}

pub const DETECTION_FIELDS: &[&str] = &[
    "lattice", "h", "layers", "shots", "e-th", "eps0", "colors", "p-attack", "angle-shift", "t-rounds", "runs",
    "seeds", "out", "transport", "connect", "sequential",
];

pub fn detection_experiment(s: &Settings) -> Result<DetectionExperiment, Failure> {
    check_fields("verify-step", s, DETECTION_FIELDS)?;
    let mut exp = DetectionExperiment::default();
    if let Some(l) = s.lattice {
        exp.lattice = l.0;
    }
    exp.h = s.h.unwrap_or(exp.h);
    exp.layers = s.layers.unwrap_or(exp.layers);
    let n_p = AnsatzConfig::new(exp.lattice.num_sites(), exp.layers)?.num_params();
    if let Some(shots) = s.shots {
        exp.d = 2 * n_p * shots;
    }
    exp.t = s.t_rounds.unwrap_or(exp.t);
    exp.e_th = s.e_th.unwrap_or(exp.e_th);
    exp.eps0 = s.eps0.unwrap_or(exp.eps0);
    if let Some(p) = &s.p_attack {
        exp.p_attack = p.clone();
    }
    if let Some(a) = &s.angle_shift {
        exp.angle_shift = a.iter().map(|a| a.0).collect();
    }
    exp.runs = s.runs.unwrap_or(exp.runs);
    exp.seed = single("seeds", &s.seeds)?.unwrap_or(exp.seed);
    exp.validate()?;
    Ok(exp)
}

fn detection_rows(s: &Settings, exp: &DetectionExperiment, setup: &DetectionSetup) -> Result<Vec<DetectionRow>, Failure> {
    match (s.transport.unwrap_or(Transport::Inproc), s.connect.as_deref()) {
        (Transport::Inproc, None) => Ok(run_detection_grid(exp, execution(s))?),
        (Transport::Inproc, Some(_)) => Err(usage("--connect needs --transport tcp")),
        (Transport::Tcp, None) => {
            let mut rows = Vec::new();
            for (p_attack, shift) in exp.settings() {
                for run in 0..exp.runs as u64 {
                    let seed = DetectionSetup::session_seed(exp, run);
                    let attack = AttackSpec::AngleShift { p_attack, shift, scope: ShiftScope::Output };
                    let (client, parties) = Loopback::start(seed, attack)?;
                    let mut session = ClientSession::new(client, seed);
                    let row = setup.run(exp, &mut session, run, p_attack, shift);
                    drop(session);
                    parties.join()?;
                    rows.push(row?);
                }
            }
            Ok(rows)
        }
        (Transport::Tcp, Some([referee, server])) => {
            let [(p_attack, shift)] = exp.settings()[..] else {
                return Err(usage("a remote server runs one attack setting: give single --p-attack and --angle-shift values"));
            };
            let client = TcpClient::connect(referee.as_str(), server.as_str())?;
            let mut session = ClientSession::new(client, exp.seed);
            (0..exp.runs as u64).map(|run| Ok(setup.run(exp, &mut session, run, p_attack, shift)?)).collect()
        }
        (Transport::Tcp, Some(_)) => Err(usage("--connect takes REFEREE,SERVER")),
    }
}

pub fn verify_step(s: &Settings) -> Result<Verdict, Failure> {
    let exp = detection_experiment(s)?;
    let setup = DetectionSetup::new(&exp)?;
    if let Some(c) = s.colors {
        if c != setup.budget.colors {
            return Err(usage(format!("--colors {c} disagrees with the pattern graph, which needs {}", setup.budget.colors)));
        }
    }
    let dir = out_dir(s)?;
    let rows = detection_rows(s, &exp, &setup)?;
    write_csv(&dir.join("verify_step.csv"), &DETECTION_COLUMNS, &rows)?;
    let above = rows.iter().filter(|r| r.e > exp.e_th).count();
    let undetected = rows.iter().filter(|r| !r.agrees(exp.e_th)).count();
    let meta = json!({
        "command": "verify-step",
        "version": VERSION,
        "csv": "verify_step.csv",
        "columns": DETECTION_COLUMNS,
        "config": exp,
        "settings": s,
        "seeds": [exp.seed],
        "transport": s.transport.unwrap_or(Transport::Inproc),
        "e_th": exp.e_th,
        "budget": setup.budget,
        "rows_above_e_th": above,
        "undetected_above_e_th": undetected,
    });
    write_json(&dir.join("verify_step.meta.json"), &meta)?;
    write_json(&dir.join("config.json"), &serde_json::to_value(s)?)?;
    Ok(Verdict::Accept)
}

pub const BOUNDS_FIELDS: &[&str] = &[
    "lattice", "h", "layers", "shots", "lr", "e-th", "eps0", "eps1", "colors", "t-rounds", "one-norm", "mu",
    "lipschitz", "sigma2", "out",
];

/// Gaps reported in the iterations table, relative to an initial gap of 1.
const ITERATION_TARGETS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

pub fn bounds_report(s: &Settings) -> Result<serde_json::Value, Failure> {
    check_fields("bounds", s, BOUNDS_FIELDS)?;
    let lattice = s.lattice.map_or(LatticeSpec { rows: 2, cols: 2 }, |l| l.0);
    let h = s.h.unwrap_or(0.2);
    let layers = s.layers.unwrap_or(2);
    let shots = s.shots.unwrap_or(1000);
    let t = s.t_rounds.unwrap_or(50);
    let e_th = s.e_th.unwrap_or(0.2);
    let ansatz = AnsatzConfig::new(lattice.num_sites(), layers)?;
    let n_p = ansatz.num_params();
    let one_norm = match s.one_norm {
        Some(v) => v,
        None => build_tfim(lattice, h).one_norm(),
    };
    let colors = match s.colors {
        Some(c) => c,
        None => {
            let problem = Problem::new(ansatz, build_tfim(lattice, h))?;
            let probe = compile_patterns(&problem, &[ParamVector::zeros(n_p)])?;
            greedy_coloring(&probe[0][0].pattern.graph).num_colors
        }
    };
    let model = ErrorModel { e_th, eps0: s.eps0.unwrap_or(0.05 * one_norm), one_norm, eps1: s.eps1 };
    let budget = StepBudget::new(n_p, shots, t, colors)?;
    let vb = delta_max(&model, &budget)?;
    let grid = [1usize, 2, 4, 8]
        .iter()
        .map(|&k| {
            let b = StepBudget::new(n_p, shots * k, t * k, colors)?;
            let v = delta_max(&model, &b)?;
            Ok(json!({ "scale": k, "d": b.d, "t": b.t, "n": b.n, "delta_max": v.delta_max, "p_fail_bound": v.p_fail_bound }))
        })
        .collect::<Result<Vec<_>, dvqa::Error>>()?;

    let inp = ConvergenceInputs {
        mu: s.mu.unwrap_or(1.0),
        lipschitz: s.lipschitz.unwrap_or(5.0),
        alpha: s.lr.unwrap_or(0.1),
        e: e_th,
        sigma2: s.sigma2.unwrap_or(0.04),
    };
    let report = check_convergence_conditions(&inp);
    let iterations: Vec<_> = ITERATION_TARGETS
        .iter()
        .map(|&eps| json!({ "eps": eps, "iterations": iterations_needed(report.rho, 1.0, eps).ok() }))
        .collect();

    Ok(json!({
        "command": "bounds",
        "version": VERSION,
        "settings": s,
        "model": model,
        "budget": budget,
        "eps1": model.eps1.unwrap_or(vb.w / 2.0),
        "delta_max": vb.delta_max,
        "w": vb.w,
        "p_fail_bound": vb.p_fail_bound,
        "n_grid": grid,
        "convergence": {
            "inputs": inp,
            "gamma": report.gamma,
            "rho": report.rho,
            "conditions_met": report.conditions_met,
            "z_inf": report.z_inf,
        },
        "iterations": iterations,
    }))
}

pub fn bounds(s: &Settings) -> Result<Verdict, Failure> {
    let report = bounds_report(s)?;
    print_json(&report, true)?;
    if s.out.is_some() {
        write_json(&out_dir(s)?.join("bounds.json"), &report)?;
    }
    Ok(Verdict::Accept)
}

pub fn ground_energy(s: &Settings) -> Result<Verdict, Failure> {
    check_fields("ground-energy", s, &["lattice", "h", "out"])?;
    let lattice = s.lattice.map_or(LatticeSpec { rows: 2, cols: 2 }, |l| l.0);
    let h = s.h.unwrap_or(0.2);
    let e0 = build_tfim(lattice, h).to_dense()?.ground_energy()?;
    let report = json!({ "lattice": lattice.to_string(), "h": h, "e0": e0, "version": VERSION });
    print_json(&report, false)?;
    if s.out.is_some() {
        write_json(&out_dir(s)?.join("ground_energy.json"), &report)?;
    }
    Ok(Verdict::Accept)
}

fn print_json(value: &serde_json::Value, pretty: bool) -> Result<(), Failure> {
    let text = if pretty { serde_json::to_string_pretty(value)? } else { serde_json::to_string(value)? };
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

fn bind(s: &Settings) -> Result<TcpListener, Failure> {
    let addr = s.listen.as_deref().ok_or_else(|| usage("--listen is required"))?;
    let listener = TcpListener::bind(addr).map_err(|e| usage(format!("cannot listen on {addr}: {e}")))?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    Ok(listener)
}

pub fn serve_referee_cmd(s: &Settings) -> Result<Verdict, Failure> {
    check_fields("serve-referee", s, &["listen", "seeds", "connections"])?;
    let seed = single("seeds", &s.seeds)?.unwrap_or(0);
    let listener = bind(s)?;
    serve_referee(listener, seed, s.connections.unwrap_or(2))?;
    Ok(Verdict::Accept)
}

pub fn serve_server_cmd(s: &Settings) -> Result<Verdict, Failure> {
    check_fields("serve-server", s, &["listen", "connect", "seeds", "p-attack", "angle-shift", "scope", "out"])?;
    let seed = single("seeds", &s.seeds)?.unwrap_or(0);
    let referee = match s.connect.as_deref() {
        Some([r]) => r.clone(),
        _ => return Err(usage("--connect takes the referee address")),
    };
    let attack = match (single("p-attack", &s.p_attack)?, single("angle-shift", &s.angle_shift)?) {
        (None, None) => AttackSpec::None,
        (Some(p_attack), Some(a)) => {
            AttackSpec::AngleShift { p_attack, shift: a.0, scope: s.scope.map_or(ShiftScope::Output, Into::into) }
        }
        _ => return Err(usage("--p-attack and --angle-shift go together")),
    };
    attack.validate()?;
    let listener = bind(s)?;
    let log = serve_server(listener, referee.as_str(), seed, attack)?;
    if s.out.is_some() {
        let mut w = BufWriter::new(File::create(out_dir(s)?.join("server_log.jsonl"))?);
        for line in &log {
            writeln!(w, "{line}")?;
        }
        w.flush()?;
    }
    Ok(Verdict::Accept)
}
