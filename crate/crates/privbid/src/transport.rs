//! Concurrent transports for the protocol actors.
//!
//! [`ChannelNetwork`] connects actors on threads of one process. The TCP
//! relay and [`TcpEndpoint`] carry the same frames between processes: each
//! frame is a `u64` little-endian length followed by [`Message::to_frame`].

use std::io::{Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use privbid_core::lp::SimplexSolver;
use privbid_core::masking::{MaskingKeys, Recovered};
use privbid_core::netmodel::Blocks;
use privbid_core::protocol::{
    build_transcript, check_agreement, make_actors, Endpoint, Message, PartyActor, PartyOutcome, ProtocolRun,
};
use privbid_core::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
const MAX_FRAME: u64 = 1 << 32;

/// In-process broadcast over `mpsc` queues; FIFO per sender.
pub struct ChannelNetwork;

impl ChannelNetwork {
    pub fn endpoints(parties: usize, timeout: Duration) -> Vec<ChannelEndpoint> {
        let (senders, receivers): (Vec<Sender<Message>>, Vec<Receiver<Message>>) =
            (0..parties).map(|_| mpsc::channel()).unzip();
        receivers
            .into_iter()
            .enumerate()
            .map(|(party, inbox)| ChannelEndpoint {
                party,
                peers: senders.clone(),
                inbox,
                timeout,
            })
            .collect()
    }
}

pub struct ChannelEndpoint {
    party: usize,
    peers: Vec<Sender<Message>>,
    inbox: Receiver<Message>,
    timeout: Duration,
}

impl Endpoint for ChannelEndpoint {
    fn broadcast(&mut self, msg: &Message) -> Result<()> {
        for p in &self.peers {
            // A peer that already finished has dropped its inbox.
            let _ = p.send(msg.clone());
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<Message> {
        recv_within(&self.inbox, self.timeout, self.party)
    }

    fn try_recv(&mut self) -> Result<Option<Message>> {
        try_take(&self.inbox)
    }
}

fn recv_within(inbox: &Receiver<Message>, timeout: Duration, party: usize) -> Result<Message> {
    inbox.recv_timeout(timeout).map_err(|e| match e {
        RecvTimeoutError::Timeout => Error::Protocol(format!("party {party}: timed out waiting for messages")),
        RecvTimeoutError::Disconnected => Error::Protocol(format!("party {party}: channel closed early")),
    })
}

fn try_take(inbox: &Receiver<Message>) -> Result<Option<Message>> {
    match inbox.try_recv() {
        Ok(m) => Ok(Some(m)),
        Err(TryRecvError::Empty | TryRecvError::Disconnected) => Ok(None),
    }
}

fn join_outcomes(outcomes: Vec<Result<PartyOutcome>>, c: &[f64], warnings: Vec<(usize, String)>) -> Result<ProtocolRun> {
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let outputs: Vec<Recovered> = outcomes.iter().map(|o| o.recovered.clone()).collect();
    check_agreement(&outputs)?;
    let transcript = build_transcript(c, &outcomes[0].messages, outputs.clone());
    Ok(ProtocolRun {
        outputs,
        transcript,
        warnings,
    })
}

/// One thread per party; every party solves the masked program itself.
pub fn run_threaded(blocks: &Blocks, keys: Vec<MaskingKeys>, timeout: Duration) -> Result<ProtocolRun> {
    let actors = make_actors(blocks, keys)?;
    let warnings = actors
        .iter()
        .flat_map(|a| a.warnings().into_iter().map(move |w| (a.party(), w)))
        .collect();
    let endpoints = ChannelNetwork::endpoints(actors.len(), timeout);
    let outcomes = thread::scope(|s| {
        let handles: Vec<_> = actors
            .into_iter()
            .zip(endpoints)
            .map(|(actor, ep)| s.spawn(move || run_actor(actor, ep)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("actor thread panicked".into()))))
            .collect::<Vec<_>>()
    });
    join_outcomes(outcomes, &blocks.c, warnings)
}

/// Sends, waits for every payload, then solves and recovers.
pub fn run_actor(mut actor: PartyActor, mut endpoint: impl Endpoint) -> Result<PartyOutcome> {
    actor.send_all(&mut endpoint)?;
    actor.receive_all(&mut endpoint, &SimplexSolver::default())
}

fn io_err(context: &str, e: std::io::Error) -> Error {
    Error::Protocol(format!("{context}: {e}"))
}

fn write_frame(stream: &mut TcpStream, frame: &[u8]) -> std::io::Result<()> {
    stream.write_all(&(frame.len() as u64).to_le_bytes())?;
    stream.write_all(frame)?;
    stream.flush()
}

/// `Ok(None)` on a clean end of stream.
fn read_frame(stream: &mut TcpStream) -> std::io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 8];
    match stream.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u64::from_le_bytes(len);
    if len > MAX_FRAME {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut buf = vec![0u8; len as usize];
    stream.read_exact(&mut buf)?;
    Ok(Some(buf))
}

/// What the relay saw.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelayStats {
    pub parties: usize,
    pub frames: usize,
}

/// Accepts one connection per party and forwards every frame to all of them
/// until every connection has closed. The relay never decodes payloads.
pub fn run_relay(listener: TcpListener, parties: usize, timeout: Duration) -> Result<RelayStats> {
    let mut streams: Vec<Option<TcpStream>> = (0..parties).map(|_| None).collect();
    for _ in 0..parties {
        let (mut stream, _) = listener.accept().map_err(|e| io_err("relay accept", e))?;
        stream.set_read_timeout(Some(timeout)).map_err(|e| io_err("relay", e))?;
        let mut hello = [0u8; 4];
        stream.read_exact(&mut hello).map_err(|e| io_err("relay hello", e))?;
        let party = u32::from_le_bytes(hello) as usize;
        match streams.get_mut(party) {
            Some(slot @ None) => *slot = Some(stream),
            _ => return Err(Error::Protocol(format!("relay: unexpected or duplicate party {party}"))),
        }
    }
    let streams: Vec<TcpStream> = streams.into_iter().map(|s| s.expect("every party connected")).collect();
    let writers: Arc<Vec<Mutex<TcpStream>>> = Arc::new(
        streams
            .iter()
            .map(|s| s.try_clone().map(Mutex::new))
            .collect::<std::io::Result<_>>()
            .map_err(|e| io_err("relay", e))?,
    );
    let handles: Vec<_> = streams
        .into_iter()
        .map(|mut reader| {
            let writers = Arc::clone(&writers);
            thread::spawn(move || -> Result<usize> {
                let mut frames = 0;
                while let Some(frame) = read_frame(&mut reader).map_err(|e| io_err("relay read", e))? {
                    frames += 1;
                    for w in writers.iter() {
                        let mut w = w.lock().expect("relay writer lock");
                        let _ = write_frame(&mut w, &frame);
                    }
                }
                Ok(frames)
            })
        })
        .collect();
    let mut frames = 0;
    for h in handles {
        frames += h.join().map_err(|_| Error::Protocol("relay thread panicked".into()))??;
    }
    Ok(RelayStats { parties, frames })
}

/// A party's connection to the relay. A reader thread feeds an inbox so
/// `try_recv` never blocks.
pub struct TcpEndpoint {
    party: usize,
    stream: TcpStream,
    inbox: Receiver<Message>,
    timeout: Duration,
}

impl TcpEndpoint {
    /// Connects, retrying until `timeout` in case the relay is not up yet.
    pub fn connect(addr: impl ToSocketAddrs + Clone, party: usize, timeout: Duration) -> Result<Self> {
        let start = Instant::now();
        let mut stream = loop {
            match TcpStream::connect(addr.clone()) {
                Ok(s) => break s,
                Err(e) if start.elapsed() >= timeout => return Err(io_err("connect", e)),
                Err(_) => thread::sleep(Duration::from_millis(50)),
            }
        };
        stream
            .write_all(&(party as u32).to_le_bytes())
            .map_err(|e| io_err("hello", e))?;
        let mut reader = stream.try_clone().map_err(|e| io_err("connect", e))?;
        let (tx, inbox) = mpsc::channel();
        thread::spawn(move || {
            while let Ok(Some(frame)) = read_frame(&mut reader) {
                match Message::from_frame(&frame) {
                    Ok(m) => {
                        if tx.send(m).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        log::warn!("dropping malformed frame: {e}");
                        break;
                    }
                }
            }
        });
        Ok(Self {
            party,
            stream,
            inbox,
            timeout,
        })
    }
}

impl Endpoint for TcpEndpoint {
    fn broadcast(&mut self, msg: &Message) -> Result<()> {
        write_frame(&mut self.stream, &msg.to_frame()).map_err(|e| io_err("send", e))
    }

    fn recv(&mut self) -> Result<Message> {
        recv_within(&self.inbox, self.timeout, self.party)
    }

    fn try_recv(&mut self) -> Result<Option<Message>> {
        try_take(&self.inbox)
    }
}

impl Drop for TcpEndpoint {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

/// Relay plus one thread per party over loopback TCP, in one process.
pub fn run_loopback_tcp(blocks: &Blocks, keys: Vec<MaskingKeys>, timeout: Duration) -> Result<ProtocolRun> {
    let actors = make_actors(blocks, keys)?;
    let warnings = actors
        .iter()
        .flat_map(|a| a.warnings().into_iter().map(move |w| (a.party(), w)))
        .collect();
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| io_err("bind", e))?;
    let addr = listener.local_addr().map_err(|e| io_err("bind", e))?;
    let parties = actors.len();
    let relay = thread::spawn(move || run_relay(listener, parties, timeout));
    let outcomes = thread::scope(|s| {
        let handles: Vec<_> = actors
            .into_iter()
            .map(|actor| {
                s.spawn(move || {
                    let ep = TcpEndpoint::connect(addr, actor.party(), timeout)?;
                    run_actor(actor, ep)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("actor thread panicked".into()))))
            .collect::<Vec<_>>()
    });
    relay.join().map_err(|_| Error::Protocol("relay panicked".into()))??;
    join_outcomes(outcomes, &blocks.c, warnings)
}
