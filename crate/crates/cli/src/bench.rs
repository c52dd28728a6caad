//! Measurement harness: per-operation latencies, the rate pipeline and
//! policy-matching scaling.

use std::sync::mpsc::sync_channel;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use streamac_core::abe::{
    compute_sum, decrypt_trigger, decrypt_window, encrypt, generate_window_secrets, master_keygen, transform,
    user_keygen, AccessPolicy, CompareOp, DlogTable,
};
use streamac_core::policy::{KeyRef, PolicyStore, XacmlPolicy, XacmlRequest};
use streamac_core::roles::{required_table_size, CloudService, OwnerSession, TableCache, UserAgent};
use streamac_core::wire::{decode, encode, Message};
use streamac_core::{Backend, GroupContext};

use crate::report::{median, BenchReport, Sample};

/// Group parameters shared by every benchmark run.
pub const BENCH_GROUP: &str = "streamac-bench";

/// Seeded RNG, or one seeded from the OS when no seed is given.
pub fn rng_from(seed: Option<&str>, label: &str) -> ChaCha20Rng {
    match seed {
        Some(s) => {
            let d =
                Sha256::new().chain_update(label.as_bytes()).chain_update([0]).chain_update(s.as_bytes()).finalize();
            ChaCha20Rng::from_seed(d.into())
        }
        None => ChaCha20Rng::from_os_rng(),
    }
}

pub fn bench_context(backend: Backend) -> Result<GroupContext> {
    GroupContext::setup(backend, BENCH_GROUP.as_bytes()).with_context(|| format!("backend {backend}"))
}

/// A random key the policy admits. Window policies get the first key of
/// window `i`.
pub fn admitted_key<R: Rng>(policy: &AccessPolicy, i: u64, rng: &mut R) -> u64 {
    match *policy {
        AccessPolicy::Trigger { theta, op } => match op {
            CompareOp::Eq => theta,
            CompareOp::Ge => rng.random_range(theta..=u64::MAX),
            CompareOp::Gt => rng.random_range(theta + 1..=u64::MAX),
            CompareOp::Le => rng.random_range(0..=theta),
            CompareOp::Lt => rng.random_range(0..theta),
        },
        AccessPolicy::Window { alpha, beta } => alpha + i * beta as u64,
    }
}

fn window_sizes(policy: &AccessPolicy) -> Vec<u32> {
    policy.window().map(|(_, b)| vec![b]).unwrap_or_default()
}

fn micros(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

#[derive(Debug, Clone)]
pub struct CryptoBench {
    pub backend: Backend,
    pub policy: AccessPolicy,
    pub v_max: u64,
    pub samples: u32,
    pub seed: Option<String>,
}

/// Times setup, keygen, encrypt, transform, compute_sum (window policies),
/// decrypt and the lookup-table build, one operation at a time.
pub fn bench_crypto(cfg: &CryptoBench) -> Result<BenchReport> {
    cfg.policy.validate().map_err(|e| anyhow!("policy {}: {e}", cfg.policy))?;
    let ctx = bench_context(cfg.backend)?;
    let mut rng = rng_from(cfg.seed.as_deref(), "bench-crypto");
    let sizes = window_sizes(&cfg.policy);
    let policy = cfg.policy.to_string();
    let params = format!("vmax={}", cfg.v_max);
    let mut report = BenchReport::new();
    let mut push = |operation: &str, seq: u32, d: Duration, pairings: Option<u32>| {
        report.push(Sample {
            backend: cfg.backend.to_string(),
            operation: operation.to_string(),
            policy: policy.clone(),
            params: params.clone(),
            seq,
            micros: micros(d),
            pairings,
        });
    };

    for seq in 0..cfg.samples {
        let t = Instant::now();
        let keys = master_keygen(&ctx, &mut rng);
        let windows = generate_window_secrets(&sizes, &mut rng)?;
        push("setup", seq, t.elapsed(), None);
        drop((keys, windows));
    }
    let (mk, pk) = master_keygen(&ctx, &mut rng);
    let windows = generate_window_secrets(&sizes, &mut rng)?;
    let mut tk_uk = None;
    for seq in 0..cfg.samples {
        let t = Instant::now();
        let keys = user_keygen(&ctx, &mk, &windows, cfg.policy, &mut rng)?;
        push("keygen", seq, t.elapsed(), None);
        tk_uk = Some(keys);
    }
    let (tk, uk) = tk_uk.ok_or_else(|| anyhow!("at least one sample is required"))?;
    let table_max = required_table_size(&cfg.policy, cfg.v_max)?;
    let mut table = None;
    for seq in 0..cfg.samples.min(5) {
        let t = Instant::now();
        let built = DlogTable::build(&ctx, table_max)?;
        push("dlog_table", seq, t.elapsed(), None);
        table = Some(built);
    }
    let table = table.expect("samples > 0");

    let beta = cfg.policy.window().map_or(1, |(_, b)| b);
    for seq in 0..cfg.samples {
        let k0 = admitted_key(&cfg.policy, seq as u64, &mut rng);
        let mut transformed = Vec::with_capacity(beta as usize);
        let mut expected = 0;
        for j in 0..beta as u64 {
            let v = rng.random_range(0..=cfg.v_max);
            expected += v;
            let t = Instant::now();
            let record = encrypt(&ctx, &pk, &windows, cfg.v_max, k0 + j, v, &mut rng)?;
            let enc = t.elapsed();
            let t = Instant::now();
            let outcome = transform(&ctx, &tk, &record)?;
            let tr = t.elapsed();
            if j == 0 {
                push("encrypt", seq, enc, None);
                push("transform", seq, tr, Some(outcome.pairings));
            }
            transformed.push(outcome.transformed.ok_or_else(|| anyhow!("admitted key {} was refused", k0 + j))?);
        }
        let got = match cfg.policy {
            AccessPolicy::Trigger { .. } => {
                let t = Instant::now();
                let v = decrypt_trigger(&uk, &transformed[0], &table)?;
                push("decrypt", seq, t.elapsed(), None);
                v
            }
            AccessPolicy::Window { alpha, beta } => {
                let t = Instant::now();
                let sum = compute_sum(&transformed, alpha, beta)?;
                push("compute_sum", seq, t.elapsed(), None);
                let t = Instant::now();
                let avg = decrypt_window(&ctx, &uk, sum.index, sum.e1, sum.e2, &table)?;
                push("decrypt", seq, t.elapsed(), None);
                avg.sum
            }
        };
        if got != expected {
            bail!("decryption returned {got}, expected {expected}");
        }
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct RateBench {
    pub policy: AccessPolicy,
    pub v_max: u64,
    pub tuples: u32,
    pub intervals: Vec<Duration>,
    pub seed: Option<String>,
}

/// One send interval of the rate sweep.
#[derive(Debug, Clone)]
pub struct RateRun {
    pub interval: Duration,
    /// Owner-side time to produce each tuple's ciphertext message.
    pub encrypt_micros: Vec<f64>,
    /// Gaps between consecutive outputs at the user.
    pub inter_arrival_micros: Vec<f64>,
    /// Tuples behind each output: 1 for trigger policies, `β` for windows.
    pub tuples_per_output: u32,
}

/// Outcome of comparing inter-arrivals with the encryption cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBound {
    pub encrypt_median: f64,
    pub bound: f64,
    pub samples: usize,
    pub violations: usize,
}

/// A gap counts as a violation when it is more than this fraction below
/// the bound.
pub const RATE_SLACK: f64 = 0.05;
/// Largest share of violating gaps still accepted.
pub const RATE_MAX_VIOLATION_SHARE: f64 = 0.01;

impl LowerBound {
    pub fn violation_share(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.violations as f64 / self.samples as f64
        }
    }

    pub fn holds(&self) -> bool {
        self.samples > 0 && self.violation_share() <= RATE_MAX_VIOLATION_SHARE
    }
}

impl RateRun {
    /// Median per-output encryption cost, the lower bound on user-side
    /// inter-arrival when the owner is the bottleneck.
    pub fn lower_bound(&self) -> LowerBound {
        let encrypt_median = median(&self.encrypt_micros);
        let bound = encrypt_median * self.tuples_per_output as f64;
        let threshold = bound * (1.0 - RATE_SLACK);
        LowerBound {
            encrypt_median,
            bound,
            samples: self.inter_arrival_micros.len(),
            violations: self.inter_arrival_micros.iter().filter(|&&g| g < threshold).count(),
        }
    }

    pub fn median_inter_arrival(&self) -> f64 {
        median(&self.inter_arrival_micros)
    }

    /// Mean gap, i.e. the inverse of sustained output throughput. Unlike a
    /// single gap it cannot drop below the slowest stage's cost.
    pub fn mean_inter_arrival(&self) -> f64 {
        let g = &self.inter_arrival_micros;
        g.iter().sum::<f64>() / g.len() as f64
    }
}

/// Runs owner, cloud and user on three threads joined by rendezvous
/// channels carrying encoded frames, so each stage hands over one tuple at
/// a time and nothing queues between them.
pub fn run_rate(
    policy: AccessPolicy,
    v_max: u64,
    tuples: u32,
    interval: Duration,
    seed: Option<&str>,
) -> Result<RateRun> {
    let ctx = bench_context(Backend::Transparent)?;
    let sizes = window_sizes(&policy);
    let mut owner = OwnerSession::new(&ctx, "bench", &sizes, v_max, rng_from(seed, "bench-rate-owner"))?;
    let cloud = CloudService::new(&ctx);
    let mut agent = UserAgent::new(&ctx, "u", TableCache::new(&ctx));
    cloud.handle(owner.register_message())?;
    let n = owner.negotiate("p", "u", policy)?;
    for m in n.to_cloud {
        cloud.handle(m)?;
    }
    agent.receive(&n.to_user)?;
    for m in agent.subscribe_messages() {
        cloud.handle(m)?;
    }

    let mut rng = rng_from(seed, "bench-rate-data");
    let data: Vec<(u64, u64)> = (0..tuples as u64)
        .map(|i| {
            let k = match policy {
                AccessPolicy::Window { alpha, .. } => alpha + i,
                AccessPolicy::Trigger { .. } => admitted_key(&policy, i, &mut rng),
            };
            (k, rng.random_range(0..=v_max))
        })
        .collect();

    let (to_cloud, cloud_in) = sync_channel::<Vec<u8>>(0);
    let (to_user, user_in) = sync_channel::<Vec<u8>>(0);
    let owner_ctx = ctx.clone();
    let owner_thread = thread::spawn(move || -> Result<Vec<f64>> {
        let mut costs = Vec::with_capacity(data.len());
        let start = Instant::now();
        for (i, (k, v)) in data.into_iter().enumerate() {
            let due = start + interval * i as u32;
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
            let t = Instant::now();
            let m = owner.publish(k, v)?;
            let bytes = encode(&owner_ctx, &m);
            costs.push(micros(t.elapsed()));
            to_cloud.send(bytes).map_err(|_| anyhow!("cloud stage stopped"))?;
        }
        Ok(costs)
    });
    let cloud_ctx = ctx.clone();
    let cloud_thread = thread::spawn(move || -> Result<()> {
        for bytes in cloud_in {
            for d in cloud.handle(decode(&cloud_ctx, &bytes)?)?.deliveries {
                to_user.send(encode(&cloud_ctx, &d.message)).map_err(|_| anyhow!("user stage stopped"))?;
            }
        }
        Ok(())
    });
    let user_thread = thread::spawn(move || -> Result<Vec<Instant>> {
        let mut arrivals = Vec::new();
        for bytes in user_in {
            let m: Message = decode(&ctx, &bytes)?;
            match agent.receive(&m)? {
                Some(_) => arrivals.push(Instant::now()),
                None => bail!("delivery produced no output"),
            }
        }
        Ok(arrivals)
    });
    let encrypt_micros = owner_thread.join().map_err(|_| anyhow!("owner thread panicked"))??;
    cloud_thread.join().map_err(|_| anyhow!("cloud thread panicked"))??;
    let arrivals = user_thread.join().map_err(|_| anyhow!("user thread panicked"))??;
    let inter_arrival_micros = arrivals.windows(2).map(|w| micros(w[1] - w[0])).collect();
    Ok(RateRun {
        interval,
        encrypt_micros,
        inter_arrival_micros,
        tuples_per_output: policy.window().map_or(1, |(_, b)| b),
    })
}

pub fn bench_rate(cfg: &RateBench) -> Result<(BenchReport, Vec<RateRun>)> {
    cfg.policy.validate().map_err(|e| anyhow!("policy {}: {e}", cfg.policy))?;
    let mut report = BenchReport::new();
    let mut runs = Vec::new();
    for &interval in &cfg.intervals {
        let run = run_rate(cfg.policy, cfg.v_max, cfg.tuples, interval, cfg.seed.as_deref())?;
        let params = format!("interval_us={},vmax={}", interval.as_micros(), cfg.v_max);
        let mut push = |operation: &str, values: &[f64]| {
            for (seq, &micros) in values.iter().enumerate() {
                report.push(Sample {
                    backend: Backend::Transparent.to_string(),
                    operation: operation.to_string(),
                    policy: cfg.policy.to_string(),
                    params: params.clone(),
                    seq: seq as u32,
                    micros,
                    pairings: None,
                });
            }
        };
        push("encrypt", &run.encrypt_micros);
        push("inter_arrival", &run.inter_arrival_micros);
        runs.push(run);
    }
    Ok((report, runs))
}

#[derive(Debug, Clone)]
pub struct PoliciesBench {
    pub counts: Vec<usize>,
    pub requests: u32,
    pub seed: Option<String>,
}

/// `n` mixed trigger / window policies on one stream, each granted to one
/// user.
pub fn policy_store(n: usize, rng: &mut ChaCha20Rng) -> PolicyStore {
    let mut store = PolicyStore::new();
    for i in 0..n {
        let policy = if rng.random_bool(0.5) {
            AccessPolicy::Window { alpha: rng.random_range(0..10_000), beta: rng.random_range(1..=12) }
        } else {
            AccessPolicy::Trigger { theta: rng.random_range(0..10_000), op: CompareOp::ALL[rng.random_range(0..5)] }
        };
        let id = format!("p{i:06}");
        store.register_policy(XacmlPolicy::new(&id, "s", policy)).expect("fresh id");
        store.register_grant(&id, &format!("u{i}"), KeyRef(format!("tk{i}"))).expect("registered");
    }
    store
}

/// Median evaluate latency for each policy count.
pub fn bench_policies(cfg: &PoliciesBench) -> Result<BenchReport> {
    let mut rng = rng_from(cfg.seed.as_deref(), "bench-policies");
    let mut report = BenchReport::new();
    for &n in &cfg.counts {
        let store = policy_store(n, &mut rng);
        let requests: Vec<XacmlRequest> =
            (0..cfg.requests).map(|_| XacmlRequest::new("s", rng.random_range(0..12_000))).collect();
        for (seq, req) in requests.iter().enumerate() {
            let t = Instant::now();
            let verdicts = store.evaluate(req)?;
            let d = t.elapsed();
            std::hint::black_box(&verdicts);
            report.push(Sample {
                backend: Backend::Transparent.to_string(),
                operation: "evaluate".into(),
                policy: "mixed".into(),
                params: format!("n={n}"),
                seq: seq as u32,
                micros: micros(d),
                pairings: None,
            });
        }
    }
    Ok(report)
}
