//! Per-party actors that exchange only masked payloads, then each solve the
//! same masked program and recover their own results.
//!
//! Every actor broadcasts two messages: its encoded payload and its objective
//! offset. Once it holds one of each from every party (its own included, read
//! back from the bytes) it decodes them in party order, assembles the masked
//! program and solves it. Identical bytes give identical programs, so all
//! parties land on bit-identical bid-prices.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::rc::Rc;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lp::{LpSolution, LpSolver};
use crate::masking::{
    assemble_masked_model, generate_keys, key_warnings, mask, objective_offset, recover, KeyPolicy, MaskedModel,
    MaskingKeys, Recovered,
};
use crate::mmatrix::{is_m_matrix, MMatrixMode};
use crate::models::{check_primal, solve_collective};
use crate::netmodel::{Blocks, PartyBlocks};
use crate::seed;
use crate::wire;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Payload,
    Offset,
}

impl MessageKind {
    fn code(self) -> u8 {
        match self {
            Self::Payload => 1,
            Self::Offset => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            1 => Ok(Self::Payload),
            2 => Ok(Self::Offset),
            _ => Err(Error::Wire(format!("unknown message kind {c}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub sender: usize,
    pub kind: MessageKind,
    pub hash: [u8; 32],
    pub bytes: Vec<u8>,
}

const FRAME_MAGIC: &[u8; 4] = b"PBM1";

impl Message {
    pub fn new(sender: usize, kind: MessageKind, bytes: Vec<u8>) -> Self {
        Self {
            sender,
            kind,
            hash: wire::sha256(&bytes),
            bytes,
        }
    }

    pub fn hash_ok(&self) -> bool {
        wire::sha256(&self.bytes) == self.hash
    }

    /// `PBM1`, kind, sender (`u32`), hash, body length (`u64`), body.
    pub fn to_frame(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(49 + self.bytes.len());
        out.extend_from_slice(FRAME_MAGIC);
        out.push(self.kind.code());
        out.extend_from_slice(&(self.sender as u32).to_le_bytes());
        out.extend_from_slice(&self.hash);
        out.extend_from_slice(&(self.bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn from_frame(frame: &[u8]) -> Result<Self> {
        if frame.len() < 49 || &frame[..4] != FRAME_MAGIC {
            return Err(Error::Wire("bad frame header".into()));
        }
        let kind = MessageKind::from_code(frame[4])?;
        let sender = u32::from_le_bytes(frame[5..9].try_into().expect("4 bytes")) as usize;
        let hash: [u8; 32] = frame[9..41].try_into().expect("32 bytes");
        let len = u64::from_le_bytes(frame[41..49].try_into().expect("8 bytes"));
        if len != (frame.len() - 49) as u64 {
            return Err(Error::Wire("frame length mismatch".into()));
        }
        Ok(Self {
            sender,
            kind,
            hash,
            bytes: frame[49..].to_vec(),
        })
    }
}

/// One actor's view of the broadcast medium. Delivery is FIFO per sender.
pub trait Endpoint {
    fn broadcast(&mut self, msg: &Message) -> Result<()>;
    /// Next message; an error means the message is not coming.
    fn recv(&mut self) -> Result<Message>;
    /// A message that is already waiting, if any.
    fn try_recv(&mut self) -> Result<Option<Message>>;
}

/// Deliberate misbehaviour of the in-memory network, for testing aborts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    Drop { sender: usize, kind: MessageKind },
    Duplicate { sender: usize, kind: MessageKind },
}

struct Inboxes {
    queues: Vec<VecDeque<Message>>,
    fault: Fault,
}

/// Single-threaded broadcast network backed by per-party queues.
#[derive(Clone)]
pub struct MemoryNetwork {
    inner: Rc<RefCell<Inboxes>>,
}

impl MemoryNetwork {
    pub fn new(parties: usize) -> Self {
        Self::with_fault(parties, Fault::None)
    }

    pub fn with_fault(parties: usize, fault: Fault) -> Self {
        Self {
            inner: Rc::new(RefCell::new(Inboxes {
                queues: (0..parties).map(|_| VecDeque::new()).collect(),
                fault,
            })),
        }
    }

    pub fn endpoint(&self, party: usize) -> MemoryEndpoint {
        MemoryEndpoint {
            party,
            net: self.clone(),
        }
    }
}

pub struct MemoryEndpoint {
    party: usize,
    net: MemoryNetwork,
}

impl Endpoint for MemoryEndpoint {
    fn broadcast(&mut self, msg: &Message) -> Result<()> {
        let mut inner = self.net.inner.borrow_mut();
        let copies = match inner.fault {
            Fault::Drop { sender, kind } if sender == msg.sender && kind == msg.kind => 0,
            Fault::Duplicate { sender, kind } if sender == msg.sender && kind == msg.kind => 2,
            _ => 1,
        };
        for q in inner.queues.iter_mut() {
            for _ in 0..copies {
                q.push_back(msg.clone());
            }
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<Message> {
        self.try_recv()?.ok_or_else(|| {
            Error::Protocol(format!("party {}: expected message never arrived", self.party))
        })
    }

    fn try_recv(&mut self) -> Result<Option<Message>> {
        Ok(self.net.inner.borrow_mut().queues[self.party].pop_front())
    }
}

/// Collects every party's payload and offset and solves the masked program.
#[derive(Clone, Debug)]
pub struct Collector {
    c: Vec<f64>,
    messages: Vec<[Option<Message>; 2]>,
}

impl Collector {
    pub fn new(num_parties: usize, c: Vec<f64>) -> Self {
        Self {
            c,
            messages: vec![[None, None]; num_parties],
        }
    }

    pub fn receive(&mut self, msg: Message) -> Result<()> {
        if !msg.hash_ok() {
            return Err(Error::Protocol(format!("hash mismatch on message from party {}", msg.sender)));
        }
        let slot = self
            .messages
            .get_mut(msg.sender)
            .ok_or_else(|| Error::Protocol(format!("message from unknown party {}", msg.sender)))?;
        let idx = match msg.kind {
            MessageKind::Payload => 0,
            MessageKind::Offset => 1,
        };
        if slot[idx].is_some() {
            return Err(Error::Protocol(format!(
                "duplicate {:?} message from party {}",
                msg.kind, msg.sender
            )));
        }
        slot[idx] = Some(msg);
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.messages.iter().all(|s| s[0].is_some() && s[1].is_some())
    }

    /// All received messages ordered by sender, payload before offset.
    pub fn messages(&self) -> Vec<Message> {
        self.messages.iter().flatten().flatten().cloned().collect()
    }

    /// Decodes in party order, assembles and solves.
    pub fn solve(&self, solver: &dyn LpSolver) -> Result<Solved> {
        if !self.is_complete() {
            return Err(Error::Protocol("not every party has reported".into()));
        }
        let mut payloads = Vec::with_capacity(self.messages.len());
        let mut offset_total = 0.0;
        for (k, [payload, offset]) in self.messages.iter().enumerate() {
            let p = wire::decode_payload(&payload.as_ref().expect("complete").bytes)?;
            let (party, o) = wire::decode_offset(&offset.as_ref().expect("complete").bytes)?;
            if p.party != k || party != k {
                return Err(Error::Protocol(format!("party {k} sent a message labelled for another party")));
            }
            payloads.push(p);
            offset_total += o;
        }
        let model = assemble_masked_model(&payloads, &self.c)?;
        let solution = solver.solve(&model.lp)?;
        solution.require_optimal()?;
        Ok(Solved {
            model,
            solution,
            offset_total,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Solved {
    pub model: MaskedModel,
    pub solution: LpSolution,
    pub offset_total: f64,
}

impl Solved {
    pub fn recover(&self, keys: &MaskingKeys) -> Result<Recovered> {
        recover(&self.model, keys, &self.solution, self.offset_total)
    }
}

/// One party: its private block, its keys and what it has heard so far.
pub struct PartyActor {
    blocks: PartyBlocks,
    keys: MaskingKeys,
    collector: Collector,
}

impl PartyActor {
    pub fn new(blocks: PartyBlocks, keys: MaskingKeys, num_parties: usize, c: Vec<f64>) -> Result<Self> {
        keys.validate(blocks.n(), blocks.m_private())?;
        if keys.party != blocks.party {
            return Err(Error::Protocol("keys belong to another party".into()));
        }
        Ok(Self {
            blocks,
            keys,
            collector: Collector::new(num_parties, c),
        })
    }

    pub fn party(&self) -> usize {
        self.blocks.party
    }

    pub fn warnings(&self) -> Vec<String> {
        key_warnings(&self.blocks, &self.keys)
    }

    pub fn outgoing(&self) -> Result<[Message; 2]> {
        let payload = mask(&self.blocks, &self.keys)?;
        let offset = objective_offset(&self.blocks, &self.keys)?;
        Ok([
            Message::new(self.party(), MessageKind::Payload, wire::encode_payload(&payload)),
            Message::new(self.party(), MessageKind::Offset, wire::encode_offset(self.party(), offset)),
        ])
    }

    pub fn receive(&mut self, msg: Message) -> Result<()> {
        self.collector.receive(msg)
    }

    pub fn is_complete(&self) -> bool {
        self.collector.is_complete()
    }

    pub fn finish(&self, solver: &dyn LpSolver) -> Result<PartyOutcome> {
        let solved = self.collector.solve(solver)?;
        Ok(PartyOutcome {
            recovered: solved.recover(&self.keys)?,
            messages: self.collector.messages(),
        })
    }

    pub fn send_all(&self, endpoint: &mut dyn Endpoint) -> Result<()> {
        for msg in self.outgoing()? {
            endpoint.broadcast(&msg)?;
        }
        Ok(())
    }

    /// Receives until complete, rejects any surplus message, then solves.
    pub fn receive_all(&mut self, endpoint: &mut dyn Endpoint, solver: &dyn LpSolver) -> Result<PartyOutcome> {
        while !self.is_complete() {
            let msg = endpoint.recv()?;
            self.receive(msg)?;
        }
        if let Some(extra) = endpoint.try_recv()? {
            self.receive(extra)?;
            return Err(Error::Protocol("unexpected extra message".into()));
        }
        self.finish(solver)
    }
}

#[derive(Clone, Debug)]
pub struct PartyOutcome {
    pub recovered: Recovered,
    pub messages: Vec<Message>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub sender: usize,
    pub kind: MessageKind,
    pub hash: [u8; 32],
    pub length: usize,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub num_parties: usize,
    pub c: Vec<f64>,
    pub entries: Vec<TranscriptEntry>,
    pub outputs: Vec<Recovered>,
}

impl Transcript {
    pub fn messages(&self) -> Vec<Message> {
        self.entries
            .iter()
            .map(|e| Message {
                sender: e.sender,
                kind: e.kind,
                hash: e.hash,
                bytes: e.payload.clone(),
            })
            .collect()
    }
}

/// Derives every party's keys from one master seed.
pub fn derive_keys(blocks: &Blocks, policy: &KeyPolicy, master_seed: u64) -> Result<Vec<MaskingKeys>> {
    derive_keys_attempt(blocks, policy, master_seed, 0)
}

/// Keys for a resampling attempt; attempt 0 equals [`derive_keys`].
pub fn derive_keys_attempt(
    blocks: &Blocks,
    policy: &KeyPolicy,
    master_seed: u64,
    attempt: usize,
) -> Result<Vec<MaskingKeys>> {
    blocks
        .parties
        .iter()
        .map(|p| {
            let label = match attempt {
                0 => format!("keys/party-{}", p.party),
                a => format!("keys/party-{}/attempt-{a}", p.party),
            };
            generate_keys(p, &mut seed::rng(master_seed, &label), policy)
        })
        .collect()
}

/// Key draws tried in GENERAL mode before giving up.
pub const MAX_KEY_ATTEMPTS: usize = 8;

/// Checks recovered primals against the original model: feasible, and with
/// the collective optimal objective.
pub fn certify_recovery(blocks: &Blocks, outputs: &[Recovered], collective_z: f64) -> Result<()> {
    let x: Vec<Vec<f64>> = outputs.iter().map(|o| o.x.clone()).collect();
    let check = check_primal(blocks, &x)?;
    let tol = 1e-6 * (1.0 + collective_z.abs());
    if check.residual > 1e-6 {
        return Err(Error::Protocol(format!("recovered primal infeasible (residual {:e})", check.residual)));
    }
    if (check.objective - collective_z).abs() > tol {
        return Err(Error::Protocol(format!(
            "recovered objective {} differs from the collective optimum {collective_z}",
            check.objective
        )));
    }
    Ok(())
}

pub struct CertifiedRun {
    pub run: ProtocolRun,
    pub keys: Vec<MaskingKeys>,
    /// Key draws used, 1 when the first draw was accepted.
    pub attempts: usize,
}

/// Runs `execute` with fresh keys until the recovery certificate holds.
///
/// DIAGONAL keys preserve the feasible set, so they run once uncertified.
/// GENERAL keys can shrink it; failed or suboptimal runs are redrawn.
pub fn run_certified(
    blocks: &Blocks,
    policy: &KeyPolicy,
    master_seed: u64,
    mut execute: impl FnMut(Vec<MaskingKeys>) -> Result<ProtocolRun>,
) -> Result<CertifiedRun> {
    if policy.mode == MMatrixMode::Diagonal {
        let keys = derive_keys(blocks, policy, master_seed)?;
        let run = execute(keys.clone())?;
        return Ok(CertifiedRun { run, keys, attempts: 1 });
    }
    let collective_z = solve_collective(blocks)?.z;
    let mut last = None;
    for attempt in 0..MAX_KEY_ATTEMPTS {
        let keys = derive_keys_attempt(blocks, policy, master_seed, attempt)?;
        match execute(keys.clone()).and_then(|run| certify_recovery(blocks, &run.outputs, collective_z).map(|_| run)) {
            Ok(run) => return Ok(CertifiedRun { run, keys, attempts: attempt + 1 }),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::Protocol(format!(
        "no certified run after {MAX_KEY_ATTEMPTS} key draws: {}",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

pub fn make_actors(blocks: &Blocks, keys: Vec<MaskingKeys>) -> Result<Vec<PartyActor>> {
    if blocks.parties.len() < 2 {
        return Err(Error::Protocol("the protocol needs at least two parties".into()));
    }
    if keys.len() != blocks.parties.len() {
        return Err(Error::Protocol("one key set per party expected".into()));
    }
    blocks
        .parties
        .iter()
        .cloned()
        .zip(keys)
        .map(|(p, k)| PartyActor::new(p, k, blocks.parties.len(), blocks.c.clone()))
        .collect()
}

/// Checks that every party recovered bit-identical shared quantities.
pub fn check_agreement(outputs: &[Recovered]) -> Result<()> {
    let Some(first) = outputs.first() else {
        return Err(Error::Protocol("no outputs".into()));
    };
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
    for o in &outputs[1..] {
        if bits(&o.alpha) != bits(&first.alpha) || o.z.to_bits() != first.z.to_bits() {
            return Err(Error::Protocol(format!(
                "party {} disagrees with party {} on shared results",
                o.party, first.party
            )));
        }
    }
    Ok(())
}

pub fn build_transcript(c: &[f64], messages: &[Message], outputs: Vec<Recovered>) -> Transcript {
    let mut entries: Vec<TranscriptEntry> = messages
        .iter()
        .map(|m| TranscriptEntry {
            sender: m.sender,
            kind: m.kind,
            hash: m.hash,
            length: m.bytes.len(),
            payload: m.bytes.clone(),
        })
        .collect();
    entries.sort_by_key(|e| (e.sender, e.kind));
    Transcript {
        num_parties: outputs.len(),
        c: c.to_vec(),
        entries,
        outputs,
    }
}

#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub outputs: Vec<Recovered>,
    pub transcript: Transcript,
    pub warnings: Vec<(usize, String)>,
}

/// Runs every actor over `network`, one after another.
pub fn run_on_network(actors: Vec<PartyActor>, network: &MemoryNetwork, solver: &dyn LpSolver) -> Result<ProtocolRun> {
    let mut warnings = Vec::new();
    let mut endpoints: Vec<MemoryEndpoint> = actors.iter().map(|a| network.endpoint(a.party())).collect();
    for (actor, ep) in actors.iter().zip(endpoints.iter_mut()) {
        warnings.extend(actor.warnings().into_iter().map(|w| (actor.party(), w)));
        actor.send_all(ep)?;
    }
    let c = actors[0].collector.c.clone();
    let mut outcomes = Vec::with_capacity(actors.len());
    for (mut actor, mut ep) in actors.into_iter().zip(endpoints) {
        outcomes.push(actor.receive_all(&mut ep, solver)?);
    }
    let outputs: Vec<Recovered> = outcomes.iter().map(|o| o.recovered.clone()).collect();
    check_agreement(&outputs)?;
    let transcript = build_transcript(&c, &outcomes[0].messages, outputs.clone());
    Ok(ProtocolRun {
        outputs,
        transcript,
        warnings,
    })
}

/// Keys from `master_seed`, in-memory network, sequential actors, with
/// GENERAL-mode keys redrawn until certified.
pub fn run_protocol(blocks: &Blocks, policy: &KeyPolicy, master_seed: u64, solver: &dyn LpSolver) -> Result<ProtocolRun> {
    let certified = run_certified(blocks, policy, master_seed, |keys| {
        let network = MemoryNetwork::new(blocks.parties.len());
        run_on_network(make_actors(blocks, keys)?, &network, solver)
    })?;
    Ok(certified.run)
}

/// Re-solves from the transcript's payload bytes and recovers with `keys`.
pub fn replay(transcript: &Transcript, keys: &[MaskingKeys], solver: &dyn LpSolver) -> Result<Vec<Recovered>> {
    let mut collector = Collector::new(transcript.num_parties, transcript.c.clone());
    for msg in transcript.messages() {
        collector.receive(msg)?;
    }
    let solved = collector.solve(solver)?;
    keys.iter().map(|k| solved.recover(k)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub party: Option<usize>,
    pub message: String,
}

pub const FINDING_SMALL_PARTY: &str = "below privacy threshold";
pub const FINDING_SINGLE_PRIVATE_LEG: &str = "single private capacity";
pub const FINDING_IDENTITY_INCIDENCE: &str = "identity-like incidence pattern";
pub const FINDING_SQUARE_KEYS: &str = "square keys allow reconstruction from leaked multipliers";

/// Schema compliance and known-weak configurations, judged from the transcript alone.
pub fn verify_semi_honest(transcript: &Transcript) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut note = |party: Option<usize>, message: String| findings.push(Finding { party, message });
    let mut seen = vec![[0usize; 2]; transcript.num_parties];
    for e in &transcript.entries {
        if e.length != e.payload.len() || wire::sha256(&e.payload) != e.hash {
            note(Some(e.sender), String::from("hash or length mismatch"));
        }
        let Some(counts) = seen.get_mut(e.sender) else {
            note(Some(e.sender), String::from("unknown sender"));
            continue;
        };
        match e.kind {
            MessageKind::Offset => {
                counts[1] += 1;
                match wire::decode_offset(&e.payload) {
                    Ok((p, _)) if p == e.sender => {}
                    Ok(_) => note(Some(e.sender), String::from("offset labelled for another party")),
                    Err(err) => note(Some(e.sender), format!("schema violation: {err}")),
                }
            }
            MessageKind::Payload => {
                counts[0] += 1;
                let p = match wire::decode_payload(&e.payload) {
                    Ok(p) if p.party == e.sender && p.a_eta.len() == transcript.c.len() => p,
                    Ok(_) => {
                        note(Some(e.sender), String::from("schema violation: payload dimensions or label"));
                        continue;
                    }
                    Err(err) => {
                        note(Some(e.sender), format!("schema violation: {err}"));
                        continue;
                    }
                };
                let k = Some(e.sender);
                let n = p.one_bar.len();
                if n <= 2 {
                    note(k, format!("{FINDING_SMALL_PARTY} (n = {n})"));
                }
                if p.m_private() == 1 {
                    note(k, String::from(FINDING_SINGLE_PRIVATE_LEG));
                }
                if identity_like(&p.a_bar, &p.g_bar) || identity_like(&p.a_bar, &p.h_bar) {
                    note(k, String::from(FINDING_IDENTITY_INCIDENCE));
                }
                if p.s() == n || (p.m_private() > 0 && p.t() == p.m_private()) {
                    note(k, String::from(FINDING_SQUARE_KEYS));
                }
            }
        }
    }
    for (k, counts) in seen.iter().enumerate() {
        if *counts != [1, 1] {
            note(Some(k), format!("expected one payload and one offset, saw {counts:?}"));
        }
    }
    findings
}

/// `A_bar = D^T` exposes `D` when `Gbar A_bar^{-1}` is itself an M-matrix.
fn identity_like(a_bar: &Matrix, g_bar: &Matrix) -> bool {
    if a_bar.rows() != a_bar.cols() || a_bar.rows() == 0 || g_bar.cols() != a_bar.cols() || g_bar.rows() != a_bar.rows() {
        return false;
    }
    match a_bar.inverse().and_then(|inv| g_bar.mul(&inv)) {
        Ok(m) => is_m_matrix(&m),
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::SimplexSolver;
    use crate::models::solve_collective;
    use crate::netmodel::example_network;

    fn blocks() -> Blocks {
        example_network([2, 2, 3, 2], [30.0, 20.0, 45.0, 25.0, 40.0, 50.0])
            .assemble_blocks()
            .unwrap()
    }

    #[test]
    fn parties_agree_and_match_direct_solve() {
        let b = blocks();
        let run = run_protocol(&b, &KeyPolicy::default(), 11, &SimplexSolver::default()).unwrap();
        let direct = solve_collective(&b).unwrap();
        assert_eq!(run.outputs.len(), 2);
        assert!((run.outputs[0].z - direct.z).abs() < 1e-6);
        assert_eq!(run.outputs[0].alpha, run.outputs[1].alpha);
        assert_eq!(run.transcript.entries.len(), 4);
    }

    #[test]
    fn loss_and_duplication_abort() {
        let b = blocks();
        let solver = SimplexSolver::default();
        for fault in [
            Fault::Drop { sender: 1, kind: MessageKind::Offset },
            Fault::Duplicate { sender: 0, kind: MessageKind::Payload },
            Fault::Duplicate { sender: 1, kind: MessageKind::Offset },
        ] {
            let keys = derive_keys(&b, &KeyPolicy::default(), 1).unwrap();
            let actors = make_actors(&b, keys).unwrap();
            let net = MemoryNetwork::with_fault(2, fault);
            let err = run_on_network(actors, &net, &solver).unwrap_err();
            assert!(matches!(err, Error::Protocol(_)), "{fault:?}: {err}");
        }
    }

    #[test]
    fn frames_round_trip() {
        let m = Message::new(3, MessageKind::Offset, wire::encode_offset(3, 2.5));
        assert_eq!(Message::from_frame(&m.to_frame()).unwrap(), m);
        let mut bad = m.to_frame();
        bad.pop();
        assert!(Message::from_frame(&bad).is_err());
    }

    #[test]
    fn replay_reproduces_outputs() {
        let b = blocks();
        let solver = SimplexSolver::default();
        let keys = derive_keys(&b, &KeyPolicy::default(), 5).unwrap();
        let run = run_on_network(make_actors(&b, keys.clone()).unwrap(), &MemoryNetwork::new(2), &solver).unwrap();
        assert_eq!(replay(&run.transcript, &keys, &solver).unwrap(), run.outputs);
    }

    #[test]
    fn small_square_parties_are_flagged() {
        let b = blocks();
        let run = run_protocol(&b, &KeyPolicy::default(), 2, &SimplexSolver::default()).unwrap();
        let findings = verify_semi_honest(&run.transcript);
        assert!(findings.iter().any(|f| f.message.contains(FINDING_SQUARE_KEYS)));
        assert!(!findings.iter().any(|f| f.message.contains("schema")));
    }
}
