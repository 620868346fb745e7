//! Messages exchanged between client, server and referee, and their TCP
//! framing: a 4-byte big-endian length followed by a UTF-8 JSON body.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mbqc::{OpenGraph, Prep};

/// Largest frame accepted from a peer.
pub const MAX_FRAME_BYTES: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    /// Client to server and referee at the start of a session.
    SessionInit { graph: OpenGraph, alphabet: u8 },
    /// Client to referee: the qubits for one round.
    PrepareBatch { round_id: u64, vertex_count: usize, preps: Vec<Prep> },
    /// Client to server: the angle for the next vertex of a round.
    MeasureAngle { round_id: u64, vertex: usize, angle: f64 },
    /// Server to referee.
    MeasureRequest { round_id: u64, vertex: usize, angle: f64 },
    /// Referee to server, and server to client.
    MeasureResult { round_id: u64, vertex: usize, bit: u8 },
    /// Client to server once every vertex of a round is measured.
    RoundEnd { round_id: u64 },
    /// Server to client: all bits of the round, by vertex.
    RoundReport { round_id: u64, bits: Vec<u8> },
    /// Client to server at the end of a step.
    StepVerdict { accept: bool },
    Ack,
    Error { message: String },
}

impl WireMessage {
    pub fn name(&self) -> &'static str {
        match self {
            WireMessage::SessionInit { .. } => "session_init",
            WireMessage::PrepareBatch { .. } => "prepare_batch",
            WireMessage::MeasureAngle { .. } => "measure_angle",
            WireMessage::MeasureRequest { .. } => "measure_request",
            WireMessage::MeasureResult { .. } => "measure_result",
            WireMessage::RoundEnd { .. } => "round_end",
            WireMessage::RoundReport { .. } => "round_report",
            WireMessage::StepVerdict { .. } => "step_verdict",
            WireMessage::Ack => "ack",
            WireMessage::Error { .. } => "error",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    /// Turn an `Error` reply into an error value.
    pub fn into_result(self) -> Result<WireMessage> {
        match self {
            WireMessage::Error { message } => Err(Error::Session(message)),
            other => Ok(other),
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Communication(e.to_string())
}

pub fn write_frame<W: Write>(w: &mut W, msg: &WireMessage) -> Result<()> {
    let body = msg.to_json();
    let len = u32::try_from(body.len()).map_err(|_| Error::Communication("frame too large".into()))?;
    let mut frame = Vec::with_capacity(4 + body.len());
    frame.extend_from_slice(&len.to_be_bytes());
    frame.extend_from_slice(body.as_bytes());
    w.write_all(&frame).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Read one frame. `Ok(None)` on a clean end of stream before a header.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<WireMessage>> {
    let mut header = [0u8; 4];
    match r.read_exact(&mut header) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(io_err(e)),
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(Error::Session(format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(io_err)?;
    let text = std::str::from_utf8(&body).map_err(|e| Error::Session(format!("frame is not UTF-8: {e}")))?;
    serde_json::from_str(text).map(Some).map_err(|e| Error::Session(format!("malformed message: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let msgs = vec![
            WireMessage::MeasureAngle { round_id: 3, vertex: 1, angle: 0.25 },
            WireMessage::RoundReport { round_id: 3, bits: vec![0, 1, 1] },
            WireMessage::Ack,
        ];
        let mut buf = Vec::new();
        for m in &msgs {
            write_frame(&mut buf, m).unwrap();
        }
        let first_len = msgs[0].to_json().len() as u32;
        assert_eq!(buf[..4], first_len.to_be_bytes());
        let mut cur = std::io::Cursor::new(buf);
        for m in &msgs {
            assert_eq!(read_frame(&mut cur).unwrap().as_ref(), Some(m));
        }
        assert_eq!(read_frame(&mut cur).unwrap(), None);
    }

    #[test]
    fn malformed_frames() {
        let mut buf = Vec::new();
        buf.extend_from_slice(&5u32.to_be_bytes());
        buf.extend_from_slice(b"{oops");
        assert!(matches!(read_frame(&mut std::io::Cursor::new(buf)), Err(Error::Session(_))));
        let mut short = Vec::new();
        short.extend_from_slice(&10u32.to_be_bytes());
        short.extend_from_slice(b"{}");
        assert!(matches!(read_frame(&mut std::io::Cursor::new(short)), Err(Error::Communication(_))));
    }
}
