use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use privbid::experiment::{bench_once, simulate_parallel, BenchRun};
use privbid::io::{self, sha256_hex};
use privbid::manifest::OutputDir;
use privbid::report::{self, ResultRow, SparsityCsvRow, TimingRow};
use privbid::transport::{self, run_actor, TcpEndpoint};
use privbid_core::masking::{audit_attack, key_warnings, mask, objective_offset, reconstruction_error, KeyPolicy, KeyStructure};
use privbid_core::mmatrix::MMatrixMode;
use privbid_core::models::solve_collective;
use privbid_core::netmodel::{generate_instance, AllianceInstance, Blocks, GeneratorConfig};
use privbid_core::protocol::{derive_keys, verify_semi_honest, PartyActor, ProtocolRun};
use privbid_core::sim::{SimConfig, Simulator, Strategy};
use privbid_core::sparsity::SECURITY_CAVEAT;
use privbid_core::{protocol, wire};

/// Thread count for parallel replications.
const THREADS_ENV: &str = "PRIVBID_THREADS";

#[derive(Parser)]
#[command(name = "privbid", version, about = "Data-private bid-price control for alliance revenue management")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random alliance instance.
    Gen(GenArgs),
    /// Mask one party's block and write its payload and offset.
    Mask(MaskArgs),
    /// Run the full protocol with one actor per party.
    Protocol(ProtocolArgs),
    /// Compare dense and sparse keys: nonzeros and solve times.
    Sparsity(SparsityArgs),
    /// Booking simulation of CP, CCS and IC.
    Simulate(SimulateArgs),
    /// Key-leak reconstruction audit and transcript checks.
    Audit(AuditArgs),
    /// Forward frames between party processes over TCP.
    Relay(RelayArgs),
    /// One party of a multi-process run, connected to a relay.
    Party(PartyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Keys {
    Dense,
    Sparse,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Diagonal,
    General,
}

#[derive(Args, Clone)]
struct KeyArgs {
    #[arg(long, value_enum, default_value = "dense")]
    keys: Keys,
    /// M-matrix family for F, G, H and L.
    #[arg(long, value_enum, default_value = "diagonal")]
    mode: Mode,
    /// Extra masked variables per party (s - n).
    #[arg(long, default_value_t = 0)]
    extra_u: usize,
    /// Extra masked private rows per party (t - m_k).
    #[arg(long, default_value_t = 0)]
    extra_w: usize,
    /// Randomly permute each party's columns before masking.
    #[arg(long)]
    permute: bool,
    /// Draw the dual shift from a symmetric range.
    #[arg(long)]
    signed_xi: bool,
}

impl KeyArgs {
    fn policy(&self) -> KeyPolicy {
        KeyPolicy {
            structure: match self.keys {
                Keys::Dense => KeyStructure::Dense,
                Keys::Sparse => KeyStructure::Sparse,
                Keys::Identity => KeyStructure::Identity,
            },
            mode: match self.mode {
                Mode::Diagonal => MMatrixMode::Diagonal,
                Mode::General => MMatrixMode::General,
            },
            extra_u: self.extra_u,
            extra_w: self.extra_w,
            permute: self.permute,
            signed_xi: self.signed_xi,
            ..KeyPolicy::default()
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    paths: usize,
    #[arg(long, default_value_t = 2)]
    parties: usize,
    /// Load factor: expected demand over capacity.
    #[arg(long, default_value_t = 1.2)]
    rho: f64,
    #[arg(long, default_value_t = 1000.0)]
    horizon: f64,
    #[arg(long, default_value_t = 3)]
    hubs: usize,
    /// Chance that a path borrows a leg of another party.
    #[arg(long, default_value_t = 0.2)]
    share_prob: f64,
    #[arg(long, default_value_t = 20)]
    max_breakpoints: usize,
    #[arg(long, default_value_t = 1.0)]
    dirichlet_alpha: f64,
    /// Instance file to write; its directory receives the manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    party: usize,
    #[command(flatten)]
    keys: KeyArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Transport {
    Memory,
    Threads,
    Tcp,
}

#[derive(Args)]
struct ProtocolArgs {
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    keys: KeyArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "threads")]
    transport: Transport,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SparsityArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Independent key draws.
    #[arg(long, default_value_t = 3)]
    runs: usize,
    /// Solves per model and run; the median is reported.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "cp,ccs,ic")]
    strategies: Vec<Strategy>,
    /// Load factor; defaults to the instance's.
    #[arg(long)]
    rho: Option<f64>,
    /// Booking horizon; defaults to the instance's.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 5)]
    segments: usize,
    #[command(flatten)]
    keys: KeyArgs,
    /// Reject CCS requests beyond the party's recovered shared-leg allocation.
    #[arg(long)]
    enforce_limits: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    /// Instance whose parties are attacked with leaked multipliers.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Protocol output directory whose transcript is checked.
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[command(flatten)]
    keys: KeyArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RelayArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    #[arg(long)]
    parties: usize,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
}

#[derive(Args)]
struct PartyArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    connect: String,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    party: usize,
    #[command(flatten)]
    keys: KeyArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn argv() -> Vec<String> {
    std::env::args().collect()
}

fn seeds(master: u64) -> BTreeMap<String, u64> {
    BTreeMap::from([("master".to_string(), master)])
}

fn load_instance(path: &Path) -> Result<(AllianceInstance, String)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes).context("malformed instance file: not UTF-8")?;
    let instance = io::instance_from_str(&text).with_context(|| format!("in {}", path.display()))?;
    for w in instance.sharing_warnings() {
        warn(w);
    }
    Ok((instance, sha256_hex(text.as_bytes())))
}

fn open_out(dir: &Path, command: &str, master: u64, instance_hash: Option<String>) -> Result<OutputDir> {
    OutputDir::create(dir, command, argv(), seeds(master), instance_hash)
}

fn json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    Ok((serde_json::to_string_pretty(value)? + "\n").into_bytes())
}

fn caveat_if_sparse(keys: &KeyArgs) {
    if keys.keys == Keys::Sparse {
        warn(SECURITY_CAVEAT);
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let cfg = GeneratorConfig {
        seed: a.seed,
        n_paths: a.paths,
        n_parties: a.parties,
        hub_count: a.hubs,
        load_factor: a.rho,
        horizon: a.horizon,
        max_breakpoints: a.max_breakpoints,
        share_prob: a.share_prob,
        dirichlet_alpha: a.dirichlet_alpha,
        ..GeneratorConfig::default()
    };
    let instance = generate_instance(&cfg)?;
    for w in instance.sharing_warnings() {
        warn(w);
    }
    let text = io::instance_to_string(&instance)?;
    let name = a
        .out
        .file_name()
        .and_then(|n| n.to_str())
        .context("--out must name a file")?
        .to_string();
    let dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut out = open_out(dir, "gen", a.seed, None)?;
    out.write(&name, text.as_bytes(), true)?;
    out.finish()?;
    Ok(())
}

fn party_blocks(blocks: &Blocks, party: usize) -> Result<&privbid_core::netmodel::PartyBlocks> {
    blocks
        .parties
        .iter()
        .find(|p| p.party == party)
        .with_context(|| format!("instance has no party {party}"))
}

fn cmd_mask(a: MaskArgs) -> Result<()> {
    caveat_if_sparse(&a.keys);
    let (instance, hash) = load_instance(&a.instance)?;
    let blocks = instance.assemble_blocks()?;
    let party = party_blocks(&blocks, a.party)?;
    let keys = party_keys(&blocks, &a.keys.policy(), a.seed, a.party)?;
    for w in key_warnings(party, &keys) {
        warn(format!("party {}: {w}", a.party));
    }
    let payload = mask(party, &keys)?;
    let offset = objective_offset(party, &keys)?;
    let mut out = open_out(&a.out_dir, "mask", a.seed, Some(hash))?;
    let k = a.party;
    out.write(&format!("party-{k}.payload"), &wire::encode_payload(&payload), true)?;
    out.write(&format!("party-{k}.offset"), &wire::encode_offset(k, offset), true)?;
    out.write(&format!("private/keys-party-{k}.json"), io::keys_to_string(&keys)?.as_bytes(), true)?;
    out.finish()?;
    Ok(())
}

/// Party `k`'s keys, derived exactly as in a full protocol run.
fn party_keys(blocks: &Blocks, policy: &KeyPolicy, master: u64, k: usize) -> Result<privbid_core::masking::MaskingKeys> {
    let p = party_blocks(blocks, k)?;
    let mut rng = privbid_core::seed::rng(master, &format!("keys/party-{k}"));
    Ok(privbid_core::masking::generate_keys(p, &mut rng, policy)?)
}

fn report_findings(t: &protocol::Transcript) -> Vec<protocol::Finding> {
    let findings = verify_semi_honest(t);
    for f in &findings {
        match f.party {
            Some(k) => warn(format!("transcript, party {k}: {}", f.message)),
            None => warn(format!("transcript: {}", f.message)),
        }
    }
    findings
}

fn write_transcript(out: &mut OutputDir, run: &ProtocolRun) -> Result<()> {
    let index = io::transcript_index(&run.transcript);
    for (e, rec) in run.transcript.entries.iter().zip(&index.messages) {
        out.write(&rec.file, &e.payload, true)?;
    }
    out.write("transcript.json", &json(&index)?, true)?;
    Ok(())
}

fn cmd_protocol(a: ProtocolArgs) -> Result<()> {
    caveat_if_sparse(&a.keys);
    let (instance, hash) = load_instance(&a.instance)?;
    let blocks = instance.assemble_blocks()?;
    let timeout = Duration::from_secs(a.timeout_secs);
    let certified = protocol::run_certified(&blocks, &a.keys.policy(), a.seed, |keys| match a.transport {
        Transport::Memory => {
            let actors = protocol::make_actors(&blocks, keys)?;
            let net = protocol::MemoryNetwork::new(blocks.parties.len());
            protocol::run_on_network(actors, &net, &privbid_core::lp::SimplexSolver::default())
        }
        Transport::Threads => transport::run_threaded(&blocks, keys, timeout),
        Transport::Tcp => transport::run_loopback_tcp(&blocks, keys, timeout),
    })?;
    if certified.attempts > 1 {
        warn(format!("general-mode keys redrawn; certified on draw {}", certified.attempts));
    }
    let (run, keys) = (certified.run, certified.keys);
    let mut seen = BTreeSet::new();
    for (k, w) in &run.warnings {
        if seen.insert((k, w)) {
            warn(format!("party {k}: {w}"));
        }
    }
    let findings = report_findings(&run.transcript);

    let direct = solve_collective(&blocks)?;
    let z = run.outputs[0].z;
    let tol = 1e-6 * (1.0 + direct.z.abs());
    let mut out = open_out(&a.out_dir, "protocol", a.seed, Some(hash))?;
    write_transcript(&mut out, &run)?;
    out.write("outputs.json", &json(&run.outputs)?, true)?;
    out.write("findings.json", &json(&findings)?, true)?;
    for k in &keys {
        out.write(&format!("private/keys-party-{}.json", k.party), io::keys_to_string(k)?.as_bytes(), true)?;
    }
    let summary = format!(
        "parties {}\nrecovered Z {z}\ncollective Z {}\nshared bid-prices {:?}\n",
        run.outputs.len(),
        direct.z,
        run.outputs[0].alpha
    );
    out.write("summary.txt", summary.as_bytes(), true)?;
    out.finish()?;
    print!("{summary}");
    if (z - direct.z).abs() > tol {
        bail!("recovered Z {z} differs from the collective optimum {}", direct.z);
    }
    Ok(())
}

fn cmd_sparsity(a: SparsityArgs) -> Result<()> {
    warn(SECURITY_CAVEAT);
    let (instance, hash) = load_instance(&a.instance)?;
    let runs = (0..a.runs.max(1))
        .map(|r| bench_once(&instance, privbid_core::seed::sub_seed(a.seed, &format!("sparsity/run-{r}")), a.repeats))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<SparsityCsvRow> = runs[0].rows.iter().map(SparsityCsvRow::from).collect();
    let mut buf = Vec::new();
    report::write_rows(&mut buf, &rows)?;
    let mut out = open_out(&a.out_dir, "sparsity", a.seed, Some(hash))?;
    out.write("sparsity.csv", &buf, true)?;

    #[derive(serde::Serialize)]
    struct RunRow {
        run: usize,
        nnz_cp: usize,
        nnz_dense: usize,
        nnz_sparse: usize,
        cp_ms: f64,
        dense_ms: f64,
        sparse_ms: f64,
    }
    let run_rows: Vec<RunRow> = runs
        .iter()
        .enumerate()
        .map(|(i, r)| RunRow {
            run: i,
            nnz_cp: r.nnz_cp,
            nnz_dense: r.nnz_dense,
            nnz_sparse: r.nnz_sparse,
            cp_ms: r.cp_ms,
            dense_ms: r.dense_ms,
            sparse_ms: r.sparse_ms,
        })
        .collect();
    let mut buf = Vec::new();
    report::write_rows(&mut buf, &run_rows)?;
    out.write("runs.csv", &buf, false)?;
    let timing = BenchRun::timing_rows(&runs);
    let mut buf = Vec::new();
    report::write_rows(&mut buf, &timing)?;
    out.write("timing.csv", &buf, false)?;
    out.finish()?;

    for r in &runs {
        if r.nnz_sparse >= r.nnz_dense {
            warn(format!("sparse keys did not reduce nonzeros ({} vs {})", r.nnz_sparse, r.nnz_dense));
        }
    }
    println!("model nonzeros: cp {} sparse {} dense {}", runs[0].nnz_cp, runs[0].nnz_sparse, runs[0].nnz_dense);
    for t in &timing {
        println!("{:<10} mean {:.3} ms  std {:.3} ms", t.model, t.mean_ms, t.std_ms);
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    if a.strategies.contains(&Strategy::Ccs) {
        caveat_if_sparse(&a.keys);
    }
    let (instance, hash) = load_instance(&a.instance)?;
    let mut strategies = a.strategies.clone();
    strategies.sort();
    strategies.dedup();
    let config = SimConfig {
        horizon: a.horizon.unwrap_or(instance.config.horizon),
        load_factor: a.rho.unwrap_or(instance.config.load_factor),
        segments: a.segments,
        replications: a.reps,
        seed: a.seed,
        strategies: strategies.clone(),
        key_policy: a.keys.policy(),
        enforce_ccs_limits: a.enforce_limits,
    };
    let n_paths = instance.paths.len();
    let parties = instance.num_parties();
    if strategies.contains(&Strategy::Ccs) {
        let blocks = instance.assemble_blocks()?;
        for p in &blocks.parties {
            let keys = party_keys(&blocks, &config.key_policy, a.seed, p.party)?;
            for w in key_warnings(p, &keys) {
                warn(format!("party {}: {w}", p.party));
            }
        }
    }
    let sim = Simulator::new(instance, config)?;
    let results = simulate_parallel(&sim)?;

    let rows: Vec<ResultRow> = results.iter().map(ResultRow::from).collect();
    let mut results_csv = Vec::new();
    report::write_results(&mut results_csv, &rows)?;
    let keys_name = format!("{:?}", a.keys.keys).to_lowercase();
    let timing: Vec<TimingRow> = report::timing_rows(
        &results,
        |s| match s {
            Strategy::Ccs => format!("ccs-{keys_name}"),
            other => other.name().to_string(),
        },
        n_paths,
        parties,
    );
    let mut timing_csv = Vec::new();
    report::write_rows(&mut timing_csv, &timing)?;
    let summary = report::summary_text(&results);

    let mut out = open_out(&a.out_dir, "simulate", a.seed, Some(hash))?;
    out.write("results.csv", &results_csv, false)?;
    out.write("timing.csv", &timing_csv, false)?;
    out.write("summary.txt", summary.as_bytes(), false)?;
    out.add_digest("results", report::result_digest(&results));
    out.finish()?;

    // The written table must read back to what was simulated.
    if report::read_results(results_csv.as_slice())? != rows {
        bail!("results.csv does not round-trip");
    }
    print!("{summary}");
    Ok(())
}

fn cmd_audit(a: AuditArgs) -> Result<()> {
    if a.instance.is_none() && a.transcript.is_none() {
        bail!("audit needs --instance, --transcript or both");
    }
    #[derive(serde::Serialize)]
    struct AttackRow {
        party: usize,
        n: usize,
        s: usize,
        max_abs_error: Option<f64>,
        failure: Option<String>,
    }
    let mut attacks = Vec::new();
    let mut findings = Vec::new();
    let mut hash = None;
    if let Some(path) = &a.instance {
        let (instance, h) = load_instance(path)?;
        hash = Some(h);
        let blocks = instance.assemble_blocks()?;
        let keys = derive_keys(&blocks, &a.keys.policy(), a.seed)?;
        for (p, k) in blocks.parties.iter().zip(&keys) {
            let payload = mask(p, k)?;
            let result = audit_attack(&payload, &k.g, &k.f).and_then(|rec| reconstruction_error(&rec, p, k));
            let (max_abs_error, failure) = match result {
                Ok(e) => (Some(e), None),
                Err(e) => (None, Some(e.to_string())),
            };
            if let Some(e) = max_abs_error.filter(|&e| e <= 1e-6) {
                warn(format!("party {}: leaked G and F reconstruct the private block (max error {e:.2e})", p.party));
            }
            attacks.push(AttackRow {
                party: p.party,
                n: p.n(),
                s: k.s(),
                max_abs_error,
                failure,
            });
        }
    }
    if let Some(dir) = &a.transcript {
        let t = io::read_transcript(dir)?;
        findings = report_findings(&t);
    }
    let mut out = open_out(&a.out_dir, "audit", a.seed, hash)?;
    out.write("attack.json", &json(&attacks)?, true)?;
    out.write("findings.json", &json(&findings)?, true)?;
    out.finish()?;
    for r in &attacks {
        match (&r.max_abs_error, &r.failure) {
            (Some(e), _) => println!("party {}: reconstruction max error {e:.3e}", r.party),
            (None, Some(f)) => println!("party {}: reconstruction failed ({f})", r.party),
            _ => {}
        }
    }
    println!("{} transcript finding(s)", findings.len());
    Ok(())
}

fn cmd_relay(a: RelayArgs) -> Result<()> {
    let listener = TcpListener::bind(&a.listen).with_context(|| format!("binding {}", a.listen))?;
    eprintln!("relay listening on {}", listener.local_addr()?);
    let stats = transport::run_relay(listener, a.parties, Duration::from_secs(a.timeout_secs))?;
    println!("relayed {} frames for {} parties", stats.frames, stats.parties);
    Ok(())
}

fn cmd_party(a: PartyArgs) -> Result<()> {
    caveat_if_sparse(&a.keys);
    let (instance, hash) = load_instance(&a.instance)?;
    let blocks = instance.assemble_blocks()?;
    let keys = party_keys(&blocks, &a.keys.policy(), a.seed, a.party)?;
    let actor = PartyActor::new(party_blocks(&blocks, a.party)?.clone(), keys, blocks.parties.len(), blocks.c.clone())?;
    for w in actor.warnings() {
        warn(format!("party {}: {w}", a.party));
    }
    let timeout = Duration::from_secs(a.timeout_secs);
    let endpoint = TcpEndpoint::connect(a.connect.as_str(), a.party, timeout)?;
    let outcome = run_actor(actor, endpoint)?;
    let transcript = protocol::build_transcript(&blocks.c, &outcome.messages, vec![outcome.recovered.clone()]);
    let mut out = open_out(&a.out_dir, "party", a.seed, Some(hash))?;
    out.write(&format!("recovered-party-{}.json", a.party), &json(&outcome.recovered)?, true)?;
    let index = io::transcript_index(&transcript);
    for (e, rec) in transcript.entries.iter().zip(&index.messages) {
        out.write(&rec.file, &e.payload, true)?;
    }
    out.write("transcript.json", &json(&index)?, true)?;
    out.finish()?;
    println!("party {} recovered Z {}", a.party, outcome.recovered.z);
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV} must be a positive integer"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Mask(a) => cmd_mask(a),
        Command::Protocol(a) => cmd_protocol(a),
        Command::Sparsity(a) => cmd_sparsity(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Relay(a) => cmd_relay(a),
        Command::Party(a) => cmd_party(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
