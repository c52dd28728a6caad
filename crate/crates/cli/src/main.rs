use std::io::Write as _;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use streamac_cli::bench::{
    bench_crypto, bench_policies, bench_rate, rng_from, CryptoBench, PoliciesBench, RateBench,
    RATE_MAX_VIOLATION_SHARE, RATE_SLACK,
};
use streamac_cli::files::{
    message_from_text, message_to_text, read_toml, write_toml, CloudConfig, GrantFile, GroupParams, OwnerFile,
    UserFile, DEFAULT_GROUP,
};
use streamac_cli::BenchReport;
use streamac_core::abe::{AccessPolicy, CompareOp};
use streamac_core::roles::{
    plaintext_oracle, run_simulation, CloudServer, CloudService, OwnerKeys, OwnerSession, Scenario, TableCache,
    Transport, UserAgent, UserEvent,
};
use streamac_core::wire::{tcp, Message, WireError};
use streamac_core::Backend;

#[derive(Parser)]
#[command(name = "streamac", version, about = "Outsourced access control for encrypted data streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate owner keys for one stream.
    Keygen(KeygenArgs),
    /// Agree on a policy with a user: writes the user's key file and the
    /// messages for the cloud.
    Grant(GrantArgs),
    /// Run the cloud relay.
    Cloud {
        #[command(subcommand)]
        command: CloudCommand,
    },
    /// Publish a stream.
    Owner {
        #[command(subcommand)]
        command: OwnerCommand,
    },
    /// Subscribe and print decrypted outputs.
    User {
        #[command(subcommand)]
        command: UserCommand,
    },
    /// Run a scenario file end to end and check it against the plaintext
    /// oracle.
    Simulate(SimulateArgs),
    /// Measurements.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Args)]
struct GroupFlags {
    #[arg(long, value_enum, default_value = "transparent")]
    backend: BackendArg,
    /// Group parameter label shared by all parties.
    #[arg(long, default_value = DEFAULT_GROUP)]
    group: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Transparent,
    External,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Transparent => Backend::Transparent,
            BackendArg::External => Backend::External,
        }
    }
}

impl GroupFlags {
    fn params(&self) -> GroupParams {
        GroupParams { backend: Backend::from(self.backend).to_string(), group: self.group.clone() }
    }
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long)]
    stream: String,
    /// Supported window sizes, e.g. `5,12`.
    #[arg(long, value_delimiter = ',')]
    window_sizes: Vec<u32>,
    #[arg(long = "vmax", default_value_t = 1000)]
    v_max: u64,
    #[command(flatten)]
    group: GroupFlags,
    /// Seed for key generation; fresh OS randomness when absent.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GrantArgs {
    #[arg(long)]
    owner: PathBuf,
    #[arg(long)]
    policy_id: String,
    /// `eq:θ`, `ge:θ`, `gt:θ`, `le:θ`, `lt:θ` or `window:α,β`.
    #[arg(long)]
    policy: AccessPolicy,
    #[arg(long)]
    user: String,
    #[arg(long)]
    user_out: PathBuf,
    #[arg(long)]
    cloud_out: PathBuf,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Subcommand)]
enum CloudCommand {
    Run(CloudRunArgs),
}

#[derive(Args)]
struct CloudRunArgs {
    /// TOML file with `listen`, `backend`, `group`, `stall_timeout_ms`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    #[command(flatten)]
    group: GroupFlags,
    #[arg(long)]
    stall_timeout_ms: Option<u64>,
}

#[derive(Subcommand)]
enum OwnerCommand {
    Run(OwnerRunArgs),
}

#[derive(Args)]
struct OwnerRunArgs {
    #[arg(long)]
    owner: PathBuf,
    #[arg(long)]
    cloud: String,
    /// Grant files produced by `grant`; sent before any tuple.
    #[arg(long)]
    grants: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    tuples: u64,
    #[arg(long, default_value_t = 0)]
    start_key: u64,
    /// Send interval in milliseconds.
    #[arg(long, default_value_t = 0.0)]
    rate_ms: f64,
    /// `uniform` or `constant:V`.
    #[arg(long, default_value = "uniform")]
    generator: String,
    /// Pause between sending grants and the first tuple, so users can
    /// subscribe.
    #[arg(long, default_value_t = 0)]
    start_delay_ms: u64,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Subcommand)]
enum UserCommand {
    Run(UserRunArgs),
}

#[derive(Args)]
struct UserRunArgs {
    /// Key files produced by `grant`, all for the same user.
    #[arg(long = "key", required = true)]
    keys: Vec<PathBuf>,
    #[arg(long)]
    cloud: String,
    /// Exit after this many outputs.
    #[arg(long)]
    count: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's transport.
    #[arg(long, value_enum)]
    transport: Option<TransportArg>,
    /// Print every user output.
    #[arg(long)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Memory,
    Tcp,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Per-operation latencies and pairing counts.
    Crypto(CryptoArgs),
    /// User-side inter-arrival times for a sweep of send intervals.
    Rate(RateArgs),
    /// Policy evaluation latency against the number of policies.
    Policies(PoliciesArgs),
}

#[derive(Args)]
struct CryptoArgs {
    #[arg(long, value_enum, default_value = "transparent")]
    backend: BackendArg,
    #[arg(long, default_value = "eq:42")]
    policy: AccessPolicy,
    #[arg(long = "vmax", default_value_t = 1000)]
    v_max: u64,
    #[arg(long, default_value_t = 100)]
    samples: u32,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long, value_enum, default_value = "transparent")]
    backend: BackendArg,
    #[arg(long, default_value = "ge:0")]
    policy: AccessPolicy,
    #[arg(long = "vmax", default_value_t = 1000)]
    v_max: u64,
    /// Send intervals to sweep, in milliseconds.
    #[arg(long, value_delimiter = ',', default_value = "0,0.01,1,5")]
    rate_ms: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    tuples: u32,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct PoliciesArgs {
    /// Policy counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000,10000")]
    policies: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    requests: u32,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Keygen(a) => keygen(a),
        Command::Grant(a) => grant(a),
        Command::Cloud { command: CloudCommand::Run(a) } => cloud_run(a),
        Command::Owner { command: OwnerCommand::Run(a) } => owner_run(a),
        Command::User { command: UserCommand::Run(a) } => user_run(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench { command } => match command {
            BenchCommand::Crypto(a) => crypto(a),
            BenchCommand::Rate(a) => rate(a),
            BenchCommand::Policies(a) => policies(a),
        },
    }
}

fn key_rng(seed: Option<&str>, label: &str) -> ChaCha20Rng {
    match seed {
        Some(_) => rng_from(seed, label),
        None => ChaCha20Rng::from_os_rng(),
    }
}

fn keygen(a: KeygenArgs) -> Result<()> {
    let params = a.group.params();
    let ctx = params.context()?;
    let mut rng = key_rng(a.seed.as_deref(), "keygen");
    let keys = OwnerKeys::generate(&ctx, &a.stream, &a.window_sizes, a.v_max, &mut rng)?;
    write_toml(&a.out, &OwnerFile::new(params, &ctx, &keys))?;
    println!("owner keys for stream {:?} (window sizes {:?}) written to {}", a.stream, a.window_sizes, a.out.display());
    Ok(())
}

fn grant(a: GrantArgs) -> Result<()> {
    let file: OwnerFile = read_toml(&a.owner)?;
    let ctx = file.params.context()?;
    let keys = file.keys(&ctx)?;
    let mut owner = OwnerSession::from_keys(&ctx, keys, key_rng(a.seed.as_deref(), "grant"));
    let n = owner.negotiate(&a.policy_id, &a.user, a.policy)?;
    let messages = n.to_cloud.iter().map(|m| message_to_text(&ctx, m)).collect();
    write_toml(&a.cloud_out, &GrantFile { params: file.params.clone(), messages })?;
    write_toml(&a.user_out, &UserFile { params: file.params, key_material: message_to_text(&ctx, &n.to_user) })?;
    println!("granted {} to {:?} under {:?}", a.policy, a.user, a.policy_id);
    Ok(())
}

fn cloud_run(a: CloudRunArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => read_toml::<CloudConfig>(path)?,
        None => CloudConfig {
            listen: "127.0.0.1:7878".into(),
            backend: Backend::from(a.group.backend).to_string(),
            group: a.group.group.clone(),
            stall_timeout_ms: None,
        },
    };
    if let Some(l) = a.listen {
        cfg.listen = l;
    }
    if a.stall_timeout_ms.is_some() {
        cfg.stall_timeout_ms = a.stall_timeout_ms;
    }
    let ctx = GroupParams { backend: cfg.backend.clone(), group: cfg.group.clone() }.context()?;
    let cloud = Arc::new(CloudService::new(&ctx).with_stall_timeout(cfg.stall_timeout_ms.map(Duration::from_millis)));
    let listener = TcpListener::bind(&cfg.listen).with_context(|| format!("binding {}", cfg.listen))?;
    let server = CloudServer::spawn(listener, cloud, None)?;
    println!("listening on {}", server.local_addr());
    std::io::stdout().flush()?;
    server.wait();
    Ok(())
}

fn owner_run(a: OwnerRunArgs) -> Result<()> {
    let file: OwnerFile = read_toml(&a.owner)?;
    let ctx = file.params.context()?;
    let keys = file.keys(&ctx)?;
    let v_max = keys.v_max;
    let constant = match a.generator.as_str() {
        "uniform" => None,
        other => match other.strip_prefix("constant:").map(str::parse::<u64>) {
            Some(Ok(v)) if v <= v_max => Some(v),
            _ => bail!("generator must be `uniform` or `constant:V` with V <= {v_max}"),
        },
    };
    let mut data_rng = key_rng(a.seed.as_deref(), "owner-data");
    let mut owner = OwnerSession::from_keys(&ctx, keys, key_rng(a.seed.as_deref(), "owner-encrypt"));
    let (mut r, mut w) = tcp::connect(&a.cloud, &ctx).with_context(|| format!("connecting to {}", a.cloud))?;
    w.send(&owner.register_message())?;
    for path in &a.grants {
        let g: GrantFile = read_toml(path)?;
        if g.params != file.params {
            bail!("{} was issued under different group parameters", path.display());
        }
        for text in &g.messages {
            w.send(&message_from_text(&ctx, text)?)?;
        }
    }
    thread::sleep(Duration::from_millis(a.start_delay_ms));
    let interval = Duration::from_secs_f64(a.rate_ms.max(0.0) / 1000.0);
    let start = Instant::now();
    for i in 0..a.tuples {
        let due = start + interval.mul_f64(i as f64);
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
        let v = constant.unwrap_or_else(|| data_rng.random_range(0..=v_max));
        w.send(&owner.publish(a.start_key + i, v)?)?;
    }
    tcp::finish(&w)?;
    let mut errors = 0;
    loop {
        match r.recv() {
            Ok(Message::Error { code, text }) => {
                errors += 1;
                eprintln!("cloud error {code}: {text}");
            }
            Ok(m) => bail!("unexpected {} from the cloud", m.name()),
            Err(WireError::Closed) => break,
            Err(e) => return Err(e.into()),
        }
    }
    println!("published {} tuples on {:?}", a.tuples, owner.stream());
    if errors > 0 {
        bail!("the cloud reported {errors} errors");
    }
    Ok(())
}

fn user_run(a: UserRunArgs) -> Result<()> {
    let mut files = Vec::new();
    for path in &a.keys {
        files.push(read_toml::<UserFile>(path)?);
    }
    let params = files[0].params.clone();
    let ctx = params.context()?;
    let mut agent: Option<UserAgent> = None;
    for f in &files {
        if f.params != params {
            bail!("key files use different group parameters");
        }
        let m = message_from_text(&ctx, &f.key_material)?;
        let Message::KeyMaterial { user_id, .. } = &m else { bail!("not a key file") };
        let agent = agent.get_or_insert_with(|| UserAgent::new(&ctx, user_id, TableCache::new(&ctx)));
        agent.receive(&m)?;
    }
    let mut agent = agent.ok_or_else(|| anyhow!("no key files"))?;
    let (mut r, mut w) = tcp::connect(&a.cloud, &ctx).with_context(|| format!("connecting to {}", a.cloud))?;
    for m in agent.subscribe_messages() {
        w.send(&m)?;
    }
    let mut seen = 0u64;
    let stdout = std::io::stdout();
    while a.count.is_none_or(|c| seen < c) {
        let m = match r.recv() {
            Ok(m) => m,
            Err(WireError::Closed) => break,
            Err(e) => return Err(e.into()),
        };
        let Some(out) = agent.receive(&m)? else { continue };
        seen += 1;
        let mut lock = stdout.lock();
        match out.event {
            UserEvent::Value { k, v } => writeln!(lock, "{}\t{}\tvalue\tk={k}\tv={v}", out.user_id, out.policy_id)?,
            UserEvent::Average { index, sum, count } => writeln!(
                lock,
                "{}\t{}\taverage\tindex={index}\tsum={sum}\tcount={count}\tmean={:.3}",
                out.user_id,
                out.policy_id,
                sum as f64 / count as f64
            )?,
            UserEvent::AuthorizationFailure { at } => {
                writeln!(lock, "{}\t{}\tunauthorized\tat={at}", out.user_id, out.policy_id)?
            }
        }
        lock.flush()?;
    }
    tcp::finish(&w)?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.scenario).with_context(|| format!("reading {}", a.scenario.display()))?;
    let mut s = Scenario::from_toml(&text)?;
    match a.transport {
        Some(TransportArg::Memory) => s.transport = Transport::Memory,
        Some(TransportArg::Tcp) => s.transport = Transport::Tcp,
        None => {}
    }
    let t = run_simulation(&s)?;
    if a.verbose {
        for o in &t.outputs {
            println!("{}\t{}\t{:?}", o.user_id, o.policy_id, o.event);
        }
    }
    let digest: String = t.digest().iter().map(|b| format!("{b:02x}")).collect();
    println!("frames: {}", t.frames.len());
    println!("outputs: {}", t.outputs.len());
    println!("cloud: {:?}", t.stats);
    println!("cloud errors: {}", t.errors.len());
    println!("transcript sha256: {digest}");
    let got = t.outputs_by_subscription();
    let want = plaintext_oracle(&s);
    if got != want {
        bail!("outputs differ from the plaintext oracle");
    }
    println!("oracle: match ({} subscriptions)", want.len());
    Ok(())
}

fn emit(report: &BenchReport, csv: Option<&PathBuf>) -> Result<()> {
    print!("{}", report.render_table());
    if let Some(path) = csv {
        std::fs::write(path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn crypto(a: CryptoArgs) -> Result<()> {
    let cfg =
        CryptoBench { backend: a.backend.into(), policy: a.policy, v_max: a.v_max, samples: a.samples, seed: a.seed };
    let report = bench_crypto(&cfg)?;
    emit(&report, a.csv.as_ref())?;
    println!("reference, original evaluation hardware (not asserted): encrypt ~179 ms, transform up to ~120 ms");
    let pairings: Vec<u32> =
        report.samples.iter().filter(|s| s.operation == "transform").filter_map(|s| s.pairings).collect();
    if let AccessPolicy::Trigger { op: CompareOp::Eq, .. } = a.policy {
        if pairings.iter().any(|&p| p != 64) {
            bail!("eq transform must take exactly 64 pairings, saw {pairings:?}");
        }
    }
    Ok(())
}

fn rate(a: RateArgs) -> Result<()> {
    if !matches!(a.backend, BackendArg::Transparent) {
        bail!("backend {} is not available for the rate benchmark", Backend::from(a.backend));
    }
    let intervals = a.rate_ms.iter().map(|ms| Duration::from_secs_f64(ms.max(0.0) / 1000.0)).collect();
    let cfg = RateBench { policy: a.policy, v_max: a.v_max, tuples: a.tuples, intervals, seed: a.seed };
    let (report, runs) = bench_rate(&cfg)?;
    emit(&report, a.csv.as_ref())?;
    let mut failed = false;
    println!("interval_us  encrypt_median_us  inter_arrival_median_us  inter_arrival_mean_us  bound_us  violations");
    for run in &runs {
        let lb = run.lower_bound();
        let interval = run.interval.as_secs_f64() * 1e6;
        let checked = interval < lb.bound;
        println!(
            "{:>11.1}  {:>17.3}  {:>23.3}  {:>21.3}  {:>8.3}  {}/{}{}",
            interval,
            lb.encrypt_median,
            run.median_inter_arrival(),
            run.mean_inter_arrival(),
            lb.bound,
            lb.violations,
            lb.samples,
            if checked { "" } else { " (not checked: interval above bound)" }
        );
        if checked && !lb.holds() {
            failed = true;
        }
    }
    if failed {
        bail!(
            "inter-arrival fell more than {:.0}% below the encryption cost in over {:.0}% of samples",
            RATE_SLACK * 100.0,
            RATE_MAX_VIOLATION_SHARE * 100.0
        );
    }
    Ok(())
}

fn policies(a: PoliciesArgs) -> Result<()> {
    let report = bench_policies(&PoliciesBench { counts: a.policies, requests: a.requests, seed: a.seed })?;
    emit(&report, a.csv.as_ref())
}
