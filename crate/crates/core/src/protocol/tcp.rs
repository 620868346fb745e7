//! TCP endpoints. Each connection carries length-prefixed JSON frames in
//! strict request/response order.

use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::parties::{ClientTransport, Link, Referee, Server};
use super::wire::{read_frame, write_frame, WireMessage};
use crate::attacks::AttackSpec;
use crate::error::{Error, Result};

/// One framed connection.
pub struct FramedStream {
    stream: TcpStream,
}

impl FramedStream {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true).map_err(|e| Error::Communication(e.to_string()))?;
        Ok(FramedStream { stream })
    }

    /// Connect, retrying for up to `patience` while the peer starts up.
    pub fn connect<A: ToSocketAddrs + Copy>(addr: A, patience: Duration) -> Result<Self> {
        let start = std::time::Instant::now();
        loop {
            match TcpStream::connect(addr) {
                Ok(s) => return Self::new(s),
                Err(e) if start.elapsed() >= patience => return Err(Error::Communication(e.to_string())),
                Err(_) => thread::sleep(Duration::from_millis(50)),
            }
        }
    }

    pub fn send(&mut self, msg: &WireMessage) -> Result<()> {
        write_frame(&mut self.stream, msg)
    }

    pub fn receive(&mut self) -> Result<Option<WireMessage>> {
        read_frame(&mut self.stream)
    }
}

impl Link for FramedStream {
    fn call(&mut self, msg: &WireMessage) -> Result<WireMessage> {
        self.send(msg)?;
        self.receive()?.ok_or_else(|| Error::Communication("peer closed the connection".into()))
    }
}

/// Client side of a TCP session.
pub struct TcpClient {
    referee: FramedStream,
    server: FramedStream,
}

impl TcpClient {
    pub fn connect<A: ToSocketAddrs + Copy, B: ToSocketAddrs + Copy>(referee: A, server: B) -> Result<Self> {
        let patience = Duration::from_secs(10);
        Ok(TcpClient { referee: FramedStream::connect(referee, patience)?, server: FramedStream::connect(server, patience)? })
    }
}

impl ClientTransport for TcpClient {
    fn to_referee(&mut self, msg: &WireMessage) -> Result<WireMessage> {
        self.referee.call(msg)
    }

    fn to_server(&mut self, msg: &WireMessage) -> Result<WireMessage> {
        self.server.call(msg)
    }
}

fn serve_referee_connection(stream: TcpStream, referee: &Mutex<Referee>) -> Result<()> {
    let mut conn = FramedStream::new(stream)?;
    loop {
        let msg = match conn.receive() {
            Ok(Some(m)) => m,
            Ok(None) => return Ok(()),
            Err(e @ Error::Session(_)) => {
                conn.send(&WireMessage::Error { message: e.to_string() })?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let reply = referee.lock().expect("referee lock poisoned").handle(&msg);
        conn.send(&reply)?;
    }
}

/// Serve `connections` peers (normally the client and the server) until all
/// of them disconnect. Returns the first connection error, if any.
pub fn serve_referee(listener: TcpListener, seed: u64, connections: usize) -> Result<()> {
    let referee = Arc::new(Mutex::new(Referee::new(seed)));
    let mut handles = Vec::with_capacity(connections);
    for _ in 0..connections {
        let (stream, _) = listener.accept().map_err(|e| Error::Communication(e.to_string()))?;
        let referee = Arc::clone(&referee);
        handles.push(thread::spawn(move || serve_referee_connection(stream, &referee)));
    }
    let mut first_err = None;
    for h in handles {
        let res = h.join().unwrap_or_else(|_| Err(Error::Communication("referee worker panicked".into())));
        if let Err(e) = res {
            first_err.get_or_insert(e);
        }
    }
    first_err.map_or(Ok(()), Err)
}

/// Connect to the referee, serve one client until it disconnects, and return
/// the server's session log.
pub fn serve_server<A: ToSocketAddrs + Copy>(
    listener: TcpListener,
    referee_addr: A,
    seed: u64,
    attack: AttackSpec,
) -> Result<Vec<String>> {
    let mut referee = FramedStream::connect(referee_addr, Duration::from_secs(10))?;
    let mut server = Server::new(seed, attack).with_log();
    let (stream, _) = listener.accept().map_err(|e| Error::Communication(e.to_string()))?;
    let mut client = FramedStream::new(stream)?;
    loop {
        let msg = match client.receive() {
            Ok(Some(m)) => m,
            Ok(None) => return Ok(server.log().to_vec()),
            Err(e @ Error::Session(_)) => {
                client.send(&WireMessage::Error { message: e.to_string() })?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        match server.handle(&msg, &mut referee) {
            Ok(reply) => client.send(&reply)?,
            Err(e) => {
                let _ = client.send(&WireMessage::Error { message: e.to_string() });
                return Err(e);
            }
        }
    }
}

/// Referee and server threads listening on loopback ports.
pub struct Loopback {
    referee: JoinHandle<Result<()>>,
    server: JoinHandle<Result<Vec<String>>>,
}

impl Loopback {
    /// Start both parties on ephemeral `127.0.0.1` ports and connect a client.
    pub fn start(seed: u64, attack: AttackSpec) -> Result<(TcpClient, Loopback)> {
        let bind = || TcpListener::bind("127.0.0.1:0").map_err(|e| Error::Communication(e.to_string()));
        let (referee_listener, server_listener) = (bind()?, bind()?);
        let addr = |l: &TcpListener| l.local_addr().map_err(|e| Error::Communication(e.to_string()));
        let (referee_addr, server_addr) = (addr(&referee_listener)?, addr(&server_listener)?);
        let referee = thread::spawn(move || serve_referee(referee_listener, seed, 2));
        let server = thread::spawn(move || serve_server(server_listener, referee_addr, seed, attack));
        let client = TcpClient::connect(referee_addr, server_addr)?;
        Ok((client, Loopback { referee, server }))
    }

    /// Wait for both parties once the client has been dropped; returns the
    /// server's session log.
    pub fn join(self) -> Result<Vec<String>> {
        let panicked = |who: &str| Error::Communication(format!("{who} thread panicked"));
        let log = self.server.join().map_err(|_| panicked("server"))?;
        self.referee.join().map_err(|_| panicked("referee"))??;
        log
    }
}
