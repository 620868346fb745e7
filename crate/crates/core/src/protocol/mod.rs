//! Delegated step orchestration, rerun-on-abort gradient descent, and the
//! client/server/referee transport.

mod abstract_model;
mod parties;
mod schedule;
mod step;
mod tcp;
mod vqa;
mod wire;

pub use abstract_model::{
    heaviest_term_rounds, sample_gradient, sample_gradient_with_corruption, AbstractExecutor, CorruptionTrial,
};
pub use parties::{ClientTransport, InProcess, Link, Referee, Server};
pub use schedule::{RoundSchedule, Slot};
pub use step::{
    compile_patterns, report_gradient, run_step, shifted_parameters, ClientSession, DelegationReport, Problem,
    StepMode, StepOutcome,
};
pub use tcp::{serve_referee, serve_server, FramedStream, Loopback, TcpClient};
pub use vqa::{
    convergence_check, run_vqa, DelegatedExecutor, FinalVerdict, RunConfig, RunTranscript, StepAttempt,
    StepExecutor, StepRecord,
};
pub use wire::{read_frame, write_frame, WireMessage, MAX_FRAME_BYTES};

/// Field names that must never appear in anything the server sees.
pub const SECRET_FIELDS: &[&str] =
    &["preps", "theta", "\"r\"", "dummy", "dummy_angle", "is_trap", "trap_color", "kind", "evaluation", "shot"];

/// Secret field names occurring in a server log.
pub fn scan_for_secrets<'a>(log: impl IntoIterator<Item = &'a str>) -> Vec<&'static str> {
    let mut found: Vec<&'static str> = Vec::new();
    for line in log {
        for &f in SECRET_FIELDS {
            if line.contains(f) && !found.contains(&f) {
                found.push(f);
            }
        }
    }
    found
}
