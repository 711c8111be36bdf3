//! Scripted publish-subscribe runs over the in-process broker.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! mode = "jedi"            # or "baseline": one pre-shared AEAD key, no WKD-IBE
//! seed = 7                 # all randomness derives from this
//! integrity = false        # sign each (URI, hour) and MAC every message
//! chain_length = 4096      # messages per signed hour when integrity is on
//!
//! [hierarchy]
//! authority = "facilities" # principal holding the master key
//! uri_slots = 14
//! time_slots = 4           # 4: year/month/day/hour, 6: finer tree
//! revocation_slots = 0     # > 0 enables revocation with 2^slots leaves
//! signature = true
//!
//! [[delegation]]           # applied in order
//! from = "facilities"
//! to = "building"
//! uri = "buildingA/*"
//! start = "2017-01-01T00"  # slots ending after start, up to and including end
//! end = "2018-01-01T00"
//! leaves = [1, 4]          # optional, revocation leaf range
//!
//! [[publisher]]
//! name = "sensor"
//! principal = "sensor"     # signing identity when integrity is on
//! uri = "buildingA/lab/temp"
//! start = "2017-06-08T01"  # time stamp of the first message
//! hours = 10               # messages are spread evenly over this many hours
//! messages = 1000
//! payload_bytes = 1024
//!
//! [[subscriber]]
//! name = "alice"
//! principal = "alice"      # whose keys are used; defaults to the name
//! filter = "buildingA/lab/*"
//!
//! [[revocation]]
//! publisher = "sensor"     # applied just before this publisher's message
//! after_message = 500
//! prefix = "buildingA/*"
//! leaves = [3, 4]
//! ```

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use jedi_core::metrics::{snapshot, OpCounts};
use jedi_core::pattern::{Hour, TimePath, TimeRange, Uri};
use jedi_core::protocol::{
    accept_delegation, create_hierarchy, delegate, start_epoch_integrity, subscribe_decrypt, verify_epoch_header,
    DecryptionCache, EpochSigner, EpochVerifier, Hierarchy, HybridCiphertext, KeyStore, PublisherSession,
};
use jedi_core::revocation::{LeafRange, RevocationList};
use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};
use serde::Deserialize;

use crate::bench::{percentile, summarize};
use crate::broker::{Broker, BrokerStats, Envelope};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Jedi,
    Baseline,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub integrity: bool,
    #[serde(default = "default_chain_length")]
    pub chain_length: u32,
    pub hierarchy: HierarchySpec,
    #[serde(default, rename = "delegation")]
    pub delegations: Vec<DelegationSpec>,
    #[serde(default, rename = "publisher")]
    pub publishers: Vec<PublisherSpec>,
    #[serde(default, rename = "subscriber")]
    pub subscribers: Vec<SubscriberSpec>,
    #[serde(default, rename = "revocation")]
    pub revocations: Vec<RevocationSpec>,
}

fn default_chain_length() -> u32 {
    4096
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchySpec {
    #[serde(default = "default_authority")]
    pub authority: String,
    #[serde(default = "default_uri_slots")]
    pub uri_slots: usize,
    #[serde(default = "default_time_slots")]
    pub time_slots: usize,
    #[serde(default)]
    pub revocation_slots: usize,
    #[serde(default = "yes")]
    pub signature: bool,
}

fn default_authority() -> String {
    "authority".into()
}
fn default_uri_slots() -> usize {
    14
}
fn default_time_slots() -> usize {
    4
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelegationSpec {
    pub from: String,
    pub to: String,
    pub uri: String,
    pub start: String,
    pub end: String,
    pub leaves: Option<[u32; 2]>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublisherSpec {
    pub name: String,
    pub principal: Option<String>,
    pub uri: String,
    pub start: String,
    #[serde(default = "one")]
    pub hours: u32,
    pub messages: u32,
    #[serde(default = "default_payload")]
    pub payload_bytes: usize,
}

fn one() -> u32 {
    1
}
fn default_payload() -> usize {
    1024
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscriberSpec {
    pub name: String,
    pub principal: Option<String>,
    pub filter: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevocationSpec {
    pub publisher: String,
    pub after_message: u32,
    pub prefix: String,
    pub leaves: [u32; 2],
    pub expires: Option<String>,
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Scenario(e.message().to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Publisher,
    Subscriber,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Publisher => "publisher",
            Role::Subscriber => "subscriber",
        }
    }
}

/// Latencies and operation counts of one kind of step.
#[derive(Clone, Debug, Default)]
pub struct Phase {
    pub latencies: Vec<Duration>,
    pub counts: OpCounts,
    pub aead_ops: u64,
}

impl Phase {
    fn record(&mut self, elapsed: Duration, counts: OpCounts) {
        self.latencies.push(elapsed);
        self.counts = self.counts + counts;
    }

    pub fn count(&self) -> usize {
        self.latencies.len()
    }

    pub fn mean(&self) -> Duration {
        summarize(&self.latencies).0
    }

    pub fn median(&self) -> Duration {
        percentile(&self.latencies, 50)
    }

    pub fn p95(&self) -> Duration {
        percentile(&self.latencies, 95)
    }
}

/// What one subscriber made of one delivered message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub uri: Uri,
    pub time: TimePath,
    /// The error name on failure.
    pub result: std::result::Result<(), &'static str>,
}

#[derive(Clone, Debug)]
pub struct ActorReport {
    pub name: String,
    pub role: Role,
    /// Publishers: messages that wrapped a fresh key. Subscribers: messages
    /// whose key was not cached.
    pub first: Phase,
    pub usual: Phase,
    pub failures: BTreeMap<&'static str, u64>,
    pub rotations: u64,
    pub revocations: u64,
    pub bytes: u64,
    pub outcomes: Vec<Outcome>,
}

impl ActorReport {
    fn new(name: &str, role: Role) -> Self {
        ActorReport {
            name: name.to_string(),
            role,
            first: Phase::default(),
            usual: Phase::default(),
            failures: BTreeMap::new(),
            rotations: 0,
            revocations: 0,
            bytes: 0,
            outcomes: Vec::new(),
        }
    }

    pub fn counts(&self) -> OpCounts {
        self.first.counts + self.usual.counts
    }

    pub fn successes(&self) -> usize {
        self.first.count() + self.usual.count()
    }

    pub fn failed(&self) -> u64 {
        self.failures.values().sum()
    }
}

#[derive(Clone, Debug)]
pub struct Transcript {
    pub mode: Mode,
    pub actors: Vec<ActorReport>,
    pub broker: BrokerStats,
    pub wall: Duration,
}

fn micros(d: Duration) -> String {
    format!("{:.1}", d.as_secs_f64() * 1e6)
}

impl Transcript {
    pub fn actor(&self, name: &str) -> Option<&ActorReport> {
        self.actors.iter().find(|a| a.name == name)
    }

    /// Counts summed over all actors.
    pub fn totals(&self) -> OpCounts {
        self.actors.iter().fold(OpCounts::default(), |acc, a| acc + a.counts())
    }

    fn rows(&self) -> Vec<[String; 11]> {
        let mut rows = Vec::new();
        for a in &self.actors {
            let op = match a.role {
                Role::Publisher => "encrypt",
                Role::Subscriber => "decrypt",
            };
            for (label, p) in [("1st", &a.first), ("usual", &a.usual)] {
                rows.push([
                    a.name.clone(),
                    op.to_string(),
                    label.to_string(),
                    p.count().to_string(),
                    micros(p.mean()),
                    micros(p.median()),
                    micros(p.p95()),
                    p.counts.wkd_encrypts.to_string(),
                    p.counts.wkd_decrypts.to_string(),
                    p.counts.pairings.to_string(),
                    p.aead_ops.to_string(),
                ]);
            }
            if a.failed() > 0 {
                let zero = "0".to_string();
                rows.push([
                    a.name.clone(),
                    op.to_string(),
                    "failed".into(),
                    a.failed().to_string(),
                    zero.clone(),
                    zero.clone(),
                    zero.clone(),
                    zero.clone(),
                    zero.clone(),
                    zero.clone(),
                    zero,
                ]);
            }
        }
        rows
    }

    const HEADER: [&'static str; 11] = [
        "actor",
        "operation",
        "phase",
        "count",
        "mean_us",
        "p50_us",
        "p95_us",
        "wkd_encrypts",
        "wkd_decrypts",
        "pairings",
        "aead_ops",
    ];

    pub fn to_csv(&self) -> String {
        let mut out = Self::HEADER.join(",");
        out.push('\n');
        for r in self.rows() {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    /// Aligned text table followed by broker and failure summaries.
    pub fn to_table(&self) -> String {
        let rows = self.rows();
        let mut widths = Self::HEADER.map(str::len);
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[&str]| {
            let mut l = String::new();
            for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
                if i < 3 {
                    let _ = write!(l, "{c:<w$}  ");
                } else {
                    let _ = write!(l, "{c:>w$}  ");
                }
            }
            out.push_str(l.trim_end());
            out.push('\n');
        };
        line(&Self::HEADER);
        for r in &rows {
            line(&r.iter().map(String::as_str).collect::<Vec<_>>());
        }
        let b = self.broker;
        let _ = writeln!(
            out,
            "\nmode {:?}: {} published, {} delivered, {} dropped, {} bytes in, {} bytes out, {:.3} s",
            self.mode,
            b.published,
            b.routed,
            b.dropped,
            b.bytes_in,
            b.bytes_out,
            self.wall.as_secs_f64()
        );
        for a in &self.actors {
            if a.role == Role::Publisher {
                let _ =
                    writeln!(out, "{}: {} key rotations, {} revocations applied", a.name, a.rotations, a.revocations);
            }
            for (name, n) in &a.failures {
                let _ = writeln!(out, "{}: {n} x {name}", a.name);
            }
        }
        out
    }
}

fn config(msg: impl Into<String>) -> Error {
    Error::Scenario(msg.into())
}

fn parse_uri(text: &str, what: &str) -> Result<Uri> {
    text.parse().map_err(|_| config(format!("{what}: invalid URI {text:?}")))
}

fn parse_hour(text: &str, what: &str) -> Result<Hour> {
    text.parse().map_err(|_| config(format!("{what}: invalid time {text:?}")))
}

fn leaf_range(r: [u32; 2], what: &str) -> Result<LeafRange> {
    LeafRange::new(r[0], r[1]).map_err(|_| config(format!("{what}: invalid leaf range {}..{}", r[0], r[1])))
}

struct Publisher {
    spec: PublisherSpec,
    uri: Uri,
    start: Hour,
    revocations: Vec<(u32, Uri, LeafRange, Option<Hour>)>,
    store: Option<KeyStore>,
}

struct Subscriber {
    name: String,
    filter: Uri,
    store: KeyStore,
}

struct Shared<'a> {
    spec: &'a ScenarioSpec,
    hierarchy: &'a Hierarchy,
    broker: &'a Broker,
    revocations: Option<&'a Mutex<RevocationList>>,
    shared_key: [u8; 32],
}

/// Runs the scenario: sets up the hierarchy and delegations, then runs
/// each publisher and subscriber on its own thread.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<Transcript> {
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let hs = &spec.hierarchy;
    let (hierarchy, master) =
        create_hierarchy("scenario", hs.uri_slots, hs.time_slots, hs.revocation_slots, hs.signature, &mut rng)
            .map_err(|e| config(format!("hierarchy: {e}")))?;

    let mut stores: BTreeMap<String, KeyStore> = BTreeMap::new();
    let mut authority = KeyStore::new();
    authority.add_authority(hierarchy.clone(), master);
    stores.insert(hs.authority.clone(), authority);
    for d in &spec.delegations {
        let what = format!("delegation {} -> {}", d.from, d.to);
        let uri = parse_uri(&d.uri, &what)?;
        let range = TimeRange::between(parse_hour(&d.start, &what)?, parse_hour(&d.end, &what)?)
            .map_err(|_| config(format!("{what}: empty time range")))?;
        let leaves = d.leaves.map(|l| leaf_range(l, &what)).transpose()?;
        let from = stores.get(&d.from).ok_or_else(|| config(format!("{what}: unknown principal {:?}", d.from)))?;
        let ks = delegate(from, hierarchy.id(), &uri, &range, leaves, &mut rng)?;
        let to = stores.entry(d.to.clone()).or_default();
        to.add_hierarchy(hierarchy.clone());
        accept_delegation(to, &ks)?;
    }

    let principal = |name: &str, what: &str| -> Result<KeyStore> {
        stores.get(name).cloned().ok_or_else(|| config(format!("{what}: unknown principal {name:?}")))
    };
    let tree = hierarchy.revocation_tree();
    let mut names = BTreeSet::new();
    let mut publishers = Vec::new();
    for p in &spec.publishers {
        let what = format!("publisher {}", p.name);
        if !names.insert(p.name.clone()) {
            return Err(config(format!("{what}: duplicate actor name")));
        }
        if p.messages == 0 || p.hours == 0 {
            return Err(config(format!("{what}: messages and hours must be positive")));
        }
        let uri = parse_uri(&p.uri, &what)?;
        if !uri.is_concrete() {
            return Err(config(format!("{what}: messages need a concrete URI")));
        }
        let store = if spec.integrity && spec.mode == Mode::Jedi {
            Some(principal(p.principal.as_deref().unwrap_or(&p.name), &what)?)
        } else {
            None
        };
        publishers.push(Publisher {
            spec: p.clone(),
            uri,
            start: parse_hour(&p.start, &what)?,
            revocations: Vec::new(),
            store,
        });
    }
    for r in &spec.revocations {
        let what = format!("revocation by {}", r.publisher);
        let Some(tree) = &tree else {
            return Err(config(format!("{what}: hierarchy has no revocation slots")));
        };
        let range = leaf_range(r.leaves, &what)?;
        tree.check(&range).map_err(|_| config(format!("{what}: leaves outside 1..={}", tree.leaves())))?;
        let expires = r.expires.as_deref().map(|e| parse_hour(e, &what)).transpose()?;
        let prefix = parse_uri(&r.prefix, &what)?;
        let p = publishers
            .iter_mut()
            .find(|p| p.spec.name == r.publisher)
            .ok_or_else(|| config(format!("{what}: unknown publisher")))?;
        p.revocations.push((r.after_message, prefix, range, expires));
    }
    let mut subscribers = Vec::new();
    for s in &spec.subscribers {
        let what = format!("subscriber {}", s.name);
        if !names.insert(s.name.clone()) {
            return Err(config(format!("{what}: duplicate actor name")));
        }
        let store = match spec.mode {
            Mode::Jedi => principal(s.principal.as_deref().unwrap_or(&s.name), &what)?,
            Mode::Baseline => KeyStore::new(),
        };
        subscribers.push(Subscriber { name: s.name.clone(), filter: parse_uri(&s.filter, &what)?, store });
    }

    let broker = Broker::new();
    for (i, s) in subscribers.iter().enumerate() {
        broker.subscribe(i as u64, s.filter.clone());
    }
    let revocations = tree.as_ref().map(|_| Mutex::new(RevocationList::new(*hierarchy.id())));
    let mut shared_key = [0u8; 32];
    rng.fill_bytes(&mut shared_key);
    let shared = Shared { spec, hierarchy: &hierarchy, broker: &broker, revocations: revocations.as_ref(), shared_key };

    let started = Instant::now();
    let (pub_reports, sub_reports) = thread::scope(|scope| {
        let subs: Vec<_> = subscribers
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let shared = &shared;
                scope.spawn(move || run_subscriber(shared, i as u64, s))
            })
            .collect();
        let pubs: Vec<_> = publishers
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let shared = &shared;
                let seed = spec.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1));
                scope.spawn(move || run_publisher(shared, p, seed))
            })
            .collect();
        let pub_reports: Vec<_> = pubs.into_iter().map(|h| h.join().expect("publisher thread panicked")).collect();
        broker.close();
        let sub_reports: Vec<_> = subs.into_iter().map(|h| h.join().expect("subscriber thread panicked")).collect();
        (pub_reports, sub_reports)
    });
    let wall = started.elapsed();

    let mut actors = pub_reports.into_iter().collect::<Result<Vec<_>>>()?;
    actors.extend(sub_reports);
    Ok(Transcript { mode: spec.mode, actors, broker: broker.stats(), wall })
}

fn run_publisher(sh: &Shared<'_>, p: Publisher, seed: u64) -> Result<ActorReport> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut report = ActorReport::new(&p.spec.name, Role::Publisher);
    let mut session = PublisherSession::new(sh.hierarchy.clone());
    let mut signer: Option<EpochSigner> = None;
    let n = p.spec.messages as u64;
    for i in 0..p.spec.messages {
        for (_, prefix, range, expires) in p.revocations.iter().filter(|r| r.0 == i) {
            let list = sh.revocations.expect("checked when loading");
            if list.lock().unwrap().revoke(prefix, *range, *expires) {
                report.revocations += 1;
            }
        }
        let now = p.start.plus((i as u64 * p.spec.hours as u64 / n) as i64);
        let mut plaintext = vec![0u8; p.spec.payload_bytes.max(8)];
        rng.fill_bytes(&mut plaintext);
        plaintext[..8].copy_from_slice(&(i as u64).to_be_bytes());

        let before = snapshot();
        let rotations = session.rotations();
        let t0 = Instant::now();
        let (message, first) = match sh.spec.mode {
            Mode::Jedi => {
                let guard = sh.revocations.map(|l| l.lock().unwrap());
                let m = session.publish_encrypt(&p.uri, now, &plaintext, guard.as_deref(), &mut rng)?;
                (m, session.rotations() > rotations)
            }
            Mode::Baseline => (baseline_seal(sh, &p.uri, now, &plaintext, &mut rng), false),
        };
        let mut env = Envelope::plain(message);
        if let Some(store) = &p.store {
            let stale = signer.as_ref().is_none_or(|s| s.header().time != env.message.time);
            if stale {
                signer =
                    Some(start_epoch_integrity(store, sh.hierarchy.id(), &p.uri, now, sh.spec.chain_length, &mut rng)?);
            }
            let s = signer.as_mut().expect("set above");
            env.tag = Some(s.mac_next(&env.message.encode())?);
            env.header = Some(s.header().clone());
        }
        let elapsed = t0.elapsed();
        let phase = if first { &mut report.first } else { &mut report.usual };
        phase.record(elapsed, snapshot().since(&before));
        phase.aead_ops += 1;
        report.bytes += env.encode().len() as u64;
        sh.broker.publish(env);
    }
    report.rotations = session.rotations();
    Ok(report)
}

fn baseline_seal(sh: &Shared<'_>, uri: &Uri, now: Hour, plaintext: &[u8], rng: &mut StdRng) -> HybridCiphertext {
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let mut m = HybridCiphertext {
        hierarchy: *sh.hierarchy.id(),
        uri: uri.clone(),
        time: sh.hierarchy.layout().leaf(now),
        epoch: 0,
        wrapped: Vec::new(),
        nonce,
        payload: Vec::new(),
    };
    let aad = m.aad();
    m.payload = Aes256Gcm::new(&sh.shared_key.into())
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: plaintext, aad: &aad })
        .expect("AES-GCM sealing does not fail");
    m
}

fn baseline_open(sh: &Shared<'_>, m: &HybridCiphertext) -> std::result::Result<Vec<u8>, jedi_core::Error> {
    Aes256Gcm::new(&sh.shared_key.into())
        .decrypt(Nonce::from_slice(&m.nonce), Payload { msg: &m.payload, aad: &m.aad() })
        .map_err(|_| jedi_core::Error::AuthFailure)
}

fn run_subscriber(sh: &Shared<'_>, id: u64, s: Subscriber) -> ActorReport {
    let mut report = ActorReport::new(&s.name, Role::Subscriber);
    let mut cache = DecryptionCache::new(1024);
    let mut verifiers: BTreeMap<[u8; 32], EpochVerifier> = BTreeMap::new();
    while let Some(env) = sh.broker.recv(id) {
        let before = snapshot();
        let t0 = Instant::now();
        let result = check_integrity(sh, &mut verifiers, &env).and_then(|()| match sh.spec.mode {
            Mode::Jedi => subscribe_decrypt(&s.store, &mut cache, &env.message),
            Mode::Baseline => baseline_open(sh, &env.message),
        });
        let elapsed = t0.elapsed();
        let counts = snapshot().since(&before);
        report.bytes += env.encode().len() as u64;
        match &result {
            Ok(_) => {
                let first = sh.spec.mode == Mode::Jedi && counts.cache_hits == 0;
                let phase = if first { &mut report.first } else { &mut report.usual };
                phase.record(elapsed, counts);
                phase.aead_ops += 1;
            }
            Err(e) => *report.failures.entry(e.name()).or_default() += 1,
        }
        report.outcomes.push(Outcome {
            uri: env.message.uri.clone(),
            time: env.message.time.clone(),
            result: result.map(|_| ()).map_err(|e| e.name()),
        });
    }
    report
}

fn check_integrity(
    sh: &Shared<'_>,
    verifiers: &mut BTreeMap<[u8; 32], EpochVerifier>,
    env: &Envelope,
) -> std::result::Result<(), jedi_core::Error> {
    if !sh.spec.integrity || sh.spec.mode == Mode::Baseline {
        return Ok(());
    }
    let (Some(header), Some(tag)) = (&env.header, &env.tag) else {
        return Err(jedi_core::Error::AuthFailure);
    };
    if header.uri != env.message.uri || header.time != env.message.time {
        return Err(jedi_core::Error::AuthFailure);
    }
    let verifier = match verifiers.entry(header.commitment) {
        Entry::Occupied(e) => e.into_mut(),
        Entry::Vacant(e) => {
            if !verify_epoch_header(sh.hierarchy, header) {
                return Err(jedi_core::Error::AuthFailure);
            }
            e.insert(EpochVerifier::new(header.clone()))
        }
    };
    verifier.verify(tag, &env.message.encode())
}
