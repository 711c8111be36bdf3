//! The `jedi` command. Each subcommand loads its inputs, calls one library
//! operation and writes the result.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use jedi_core::pattern::{Hour, TimeRange, Uri};
use jedi_core::protocol::{
    accept_delegation, create_hierarchy, delegate, ratchet_forward, start_epoch_integrity, subscribe_decrypt,
    verify_epoch_header, verify_mac, DecryptionCache, EpochIntegrityHeader, EpochSigner, HashChain, Hierarchy,
    KeyMaterial, KeySet, KeyStore, PublisherSession,
};
use jedi_core::revocation::{LeafRange, RevocationList, RevocationProof};
use rand::rngs::OsRng;

use crate::bench::{bench_range_bundle, bench_wkdibe, to_csv};
use crate::error::{io_at, Error, Result, EXIT_MALFORMED, EXIT_OK};
use crate::files::{self, decode_container, ChainState, FileKind, FileObject, MessageFile, RevocationFile};
use crate::scenario::{run_scenario, ScenarioSpec};

/// End-to-end encryption for publish-subscribe resource hierarchies.
///
/// Times are UTC hours written `YYYY-MM-DDTHH`; minutes and seconds are
/// truncated. A time names the hour slot that ends at it.
///
/// Exit codes: 0 success, 2 missing authority or key (InsufficientAuthority,
/// NoMatchingKey, Revoked), 3 malformed input, 4 failed cryptographic check
/// (AuthFailure, VerificationFailed).
#[derive(Parser, Debug)]
#[command(name = "jedi", version)]
pub struct Cli {
    #[command(flatten)]
    pub config: CliConfig,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CliConfig {
    /// Key store of the acting principal. Created when missing.
    #[arg(long, global = true, default_value = "jedi.keystore")]
    pub store: PathBuf,
    /// Public parameters of the hierarchy.
    #[arg(long, global = true, default_value = "jedi.params")]
    pub params: PathBuf,
    /// Overrides the clock.
    #[arg(long, global = true, value_name = "TIME")]
    pub now: Option<Hour>,
}

impl CliConfig {
    fn now(&self) -> Hour {
        self.now.unwrap_or_else(|| {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            Hour((secs / 3600) as i64)
        })
    }

    fn hierarchy(&self) -> Result<Hierarchy> {
        files::load(&self.params)
    }

    fn load_store(&self) -> Result<KeyStore> {
        if self.store.exists() {
            files::load(&self.store)
        } else {
            Ok(KeyStore::new())
        }
    }

    fn existing_store(&self) -> Result<KeyStore> {
        files::load(&self.store)
    }

    fn save_store(&self, store: &KeyStore) -> Result<()> {
        files::save(&self.store, store)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Create a hierarchy: writes its parameters and adds the master key to the store.
    Init {
        #[arg(long, default_value_t = 14)]
        uri_slots: usize,
        /// 4 for year/month/day/hour, 6 for the finer tree.
        #[arg(long, default_value_t = 4)]
        time_slots: usize,
        /// Levels of the revocation tree; 0 disables revocation.
        #[arg(long, default_value_t = 0)]
        revocation_slots: usize,
        /// Omit the signature slot; keys from this hierarchy cannot sign.
        #[arg(long)]
        no_signature: bool,
        #[arg(long, default_value = "")]
        label: String,
    },
    /// Derive keys for a URI prefix and time range from the store into a key set file.
    Delegate {
        #[arg(long)]
        uri: Uri,
        /// Exclusive start: the first slot granted ends one hour later.
        #[arg(long)]
        from: Hour,
        /// Inclusive end: the last slot granted ends here.
        #[arg(long)]
        to: Hour,
        /// Revocation leaf range, `FIRST..LAST` (1-based).
        #[arg(long, value_parser = parse_leaves)]
        leaves: Option<LeafRange>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a key set and add its keys to the store.
    Accept { keyset: PathBuf },
    /// Encrypt a payload for a URI at a time.
    Encrypt {
        #[arg(long)]
        uri: Uri,
        /// Defaults to the current time.
        #[arg(long)]
        at: Option<Hour>,
        /// Plaintext file; `-` or absent reads standard input.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Revocation list to encrypt around.
        #[arg(long)]
        revocations: Option<PathBuf>,
        /// Epoch chain from `sign-epoch`; the message is tagged and the chain advanced.
        #[arg(long)]
        epoch_chain: Option<PathBuf>,
    },
    /// Decrypt a message with the store's keys.
    Decrypt {
        #[arg(long = "in")]
        input: PathBuf,
        /// Plaintext file; absent writes standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Epoch header; required if the message carries a tag.
        #[arg(long)]
        header: Option<PathBuf>,
    },
    /// Start an authenticated epoch: sign a hash chain commitment for a URI and hour.
    SignEpoch {
        #[arg(long)]
        uri: Uri,
        #[arg(long)]
        at: Option<Hour>,
        /// Number of messages the chain can tag.
        #[arg(long, default_value_t = 1024)]
        length: u32,
        #[arg(long)]
        header_out: PathBuf,
        #[arg(long)]
        chain_out: PathBuf,
    },
    /// Verify an epoch header, optionally a tagged message, and revocation proofs.
    Verify {
        #[arg(long)]
        header: Option<PathBuf>,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        revocations: Option<PathBuf>,
    },
    /// Revoke a leaf range under a URI prefix.
    Revoke {
        #[arg(long)]
        list: PathBuf,
        #[arg(long)]
        prefix: Uri,
        #[arg(long, value_parser = parse_leaves)]
        leaves: LeafRange,
        /// Last hour the revoked keys could decrypt; the entry may be culled after it.
        #[arg(long)]
        expires: Option<Hour>,
        /// Attach a proof signed with the store's bundle for exactly these leaves.
        #[arg(long)]
        prove: bool,
    },
    /// Remove a revocation.
    Unrevoke {
        #[arg(long)]
        list: PathBuf,
        #[arg(long)]
        prefix: Uri,
        #[arg(long, value_parser = parse_leaves)]
        leaves: LeafRange,
    },
    /// Drop and re-derive keys so that nothing before the current time can be decrypted.
    Ratchet,
    /// Time the core operations and print CSV.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 8, 20])]
        slots: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        iterations: usize,
        /// Range sizes for derive_range_bundle; empty skips it.
        #[arg(long, value_delimiter = ',')]
        bundle_ranges: Vec<u32>,
        /// Revocation tree height for derive_range_bundle.
        #[arg(long, default_value_t = 16)]
        tree_height: u8,
    },
    /// Run a scenario file and print its transcript.
    Simulate {
        spec: PathBuf,
        /// CSV instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Describe any JEDI file.
    Inspect { file: PathBuf },
}

fn parse_leaves(text: &str) -> std::result::Result<LeafRange, String> {
    let (a, b) = text.split_once("..").or_else(|| text.split_once('-')).unwrap_or((text, text));
    let num = |s: &str| s.trim().parse::<u32>().map_err(|_| format!("bad leaf range {text:?}"));
    LeafRange::new(num(a)?, num(b)?).map_err(|e| e.to_string())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn read_input(path: Option<&Path>) -> Result<Vec<u8>> {
    match path {
        Some(p) if p != Path::new("-") => fs::read(p).map_err(io_at(p)),
        _ => {
            let mut buf = Vec::new();
            io::stdin().read_to_end(&mut buf).map_err(io_at("<stdin>"))?;
            Ok(buf)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_MALFORMED
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn output(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(io_at("<stdout>"))
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = &cli.config;
    let mut rng = OsRng;
    match &cli.command {
        Command::Init { uri_slots, time_slots, revocation_slots, no_signature, label } => {
            let (h, master) =
                create_hierarchy(label, *uri_slots, *time_slots, *revocation_slots, !no_signature, &mut rng)?;
            let mut store = cfg.load_store()?;
            store.add_authority(h.clone(), master);
            files::save(&cfg.params, &h)?;
            cfg.save_store(&store)?;
            output(out, &format!("hierarchy {}\n", hex(h.id())))
        }
        Command::Delegate { uri, from, to, leaves, out: path } => {
            let h = cfg.hierarchy()?;
            let store = cfg.existing_store()?;
            let range = TimeRange::between(*from, *to)?;
            let ks = delegate(&store, h.id(), uri, &range, *leaves, &mut rng)?;
            files::save(path, &ks)?;
            output(out, &describe_keyset(&ks))
        }
        Command::Accept { keyset } => {
            let ks: KeySet = files::load(keyset)?;
            let mut store = cfg.load_store()?;
            let added = accept_delegation(&mut store, &ks)?;
            cfg.save_store(&store)?;
            output(out, &format!("accepted {added} of {} keys for {}\n", ks.entries.len(), ks.uri))
        }
        Command::Encrypt { uri, at, input, out: path, revocations, epoch_chain } => {
            let h = cfg.hierarchy()?;
            let now = at.unwrap_or_else(|| cfg.now());
            let plaintext = read_input(input.as_deref())?;
            let list = revocations.as_deref().map(files::load::<RevocationFile>).transpose()?;
            if let Some(l) = &list {
                if l.list.hierarchy() != h.id() {
                    return Err(jedi_core::Error::UnknownHierarchy.into());
                }
            }
            let message = PublisherSession::new(h.clone()).publish_encrypt(
                uri,
                now,
                &plaintext,
                list.as_ref().map(|l| &l.list),
                &mut rng,
            )?;
            let mut file = MessageFile { message, tag: None };
            if let Some(chain_path) = epoch_chain {
                let state: ChainState = files::load(chain_path)?;
                if state.header.uri != file.message.uri || state.header.time != file.message.time {
                    return Err(Error::InvalidArgument("epoch chain is for a different URI or hour".into()));
                }
                let chain = HashChain::from_seed(state.header.chain_length, state.seed)?;
                let mut signer = EpochSigner::resume(state.header.clone(), chain, state.next)?;
                file.tag = Some(signer.mac_next(&file.message.encode())?);
                files::save(chain_path, &ChainState { next: signer.next_index(), ..state })?;
            }
            files::save(path, &file)?;
            output(out, &format!("{} @ {}\n", file.message.uri, file.message.time.display_in(&h.layout().tree)))
        }
        Command::Decrypt { input, out: path, header } => {
            let file: MessageFile = files::load(input)?;
            match (&file.tag, header) {
                (Some(tag), Some(hp)) => {
                    let header: EpochIntegrityHeader = files::load(hp)?;
                    check_header(cfg, &header)?;
                    if header.uri != file.message.uri || header.time != file.message.time {
                        return Err(Error::VerificationFailed("header is for a different URI or hour".into()));
                    }
                    if !verify_mac(&header, tag, &file.message.encode()) {
                        return Err(Error::VerificationFailed("message tag".into()));
                    }
                }
                (Some(_), None) => {
                    return Err(Error::InvalidArgument("message is tagged; pass its epoch --header".into()))
                }
                (None, Some(_)) => return Err(Error::VerificationFailed("message carries no tag".into())),
                (None, None) => {}
            }
            let store = cfg.existing_store()?;
            let plaintext = match store.hierarchy(&file.message.hierarchy) {
                Ok(_) => subscribe_decrypt(&store, &mut DecryptionCache::new(1), &file.message)?,
                Err(_) => return Err(jedi_core::Error::NoMatchingKey.into()),
            };
            match path {
                Some(p) => files::write_bytes(p, &plaintext, false),
                None => out.write_all(&plaintext).map_err(io_at("<stdout>")),
            }
        }
        Command::SignEpoch { uri, at, length, header_out, chain_out } => {
            let h = cfg.hierarchy()?;
            let store = cfg.existing_store()?;
            let now = at.unwrap_or_else(|| cfg.now());
            let signer = start_epoch_integrity(&store, h.id(), uri, now, *length, &mut rng)?;
            let header = signer.header().clone();
            files::save(chain_out, &ChainState { header: header.clone(), seed: *signer.chain().seed(), next: 0 })?;
            files::save(header_out, &header)?;
            output(
                out,
                &format!("epoch {} @ {}: {} messages\n", header.uri, header.time.display_in(&h.layout().tree), length),
            )
        }
        Command::Verify { header, input, revocations } => {
            if header.is_none() && revocations.is_none() {
                return Err(Error::InvalidArgument("nothing to verify; pass --header or --revocations".into()));
            }
            if let Some(hp) = header {
                let header: EpochIntegrityHeader = files::load(hp)?;
                check_header(cfg, &header)?;
                output(out, &format!("header ok: {} commitment {}\n", header.uri, hex(&header.commitment)))?;
                if let Some(mp) = input {
                    let file: MessageFile = files::load(mp)?;
                    let tag = file.tag.ok_or_else(|| Error::VerificationFailed("message carries no tag".into()))?;
                    if header.uri != file.message.uri
                        || header.time != file.message.time
                        || !verify_mac(&header, &tag, &file.message.encode())
                    {
                        return Err(Error::VerificationFailed("message tag".into()));
                    }
                    output(out, &format!("message ok: index {}\n", tag.index))?;
                }
            } else if input.is_some() {
                return Err(Error::InvalidArgument("--in needs --header".into()));
            }
            if let Some(rp) = revocations {
                let h = cfg.hierarchy()?;
                let file: RevocationFile = files::load(rp)?;
                let tree = h.revocation_tree().ok_or(jedi_core::Error::InvalidConfig("hierarchy has no revocation"))?;
                for p in &file.proofs {
                    if p.hierarchy != *h.id() || !p.verify(h.params(), &tree) {
                        return Err(Error::VerificationFailed(format!("revocation proof for leaves {}", p.range)));
                    }
                }
                output(out, &format!("{} revocation proofs ok\n", file.proofs.len()))?;
            }
            Ok(())
        }
        Command::Revoke { list, prefix, leaves, expires, prove } => {
            let h = cfg.hierarchy()?;
            let tree = h.revocation_tree().ok_or(jedi_core::Error::InvalidConfig("hierarchy has no revocation"))?;
            tree.check(leaves)?;
            let mut file = load_list(list, &h)?;
            if *prove {
                let store = cfg.existing_store()?;
                let bundle = store
                    .entries()
                    .iter()
                    .filter(|e| e.hierarchy == *h.id() && e.uri.as_prefix() == prefix.as_prefix())
                    .find_map(|e| match &e.material {
                        KeyMaterial::Ranged(b) if b.range() == *leaves => Some(b),
                        _ => None,
                    })
                    .ok_or(jedi_core::Error::NoMatchingKey)?;
                let proof = RevocationProof::create(h.params(), *h.id(), bundle, &mut rng)?;
                if !file.proofs.contains(&proof) {
                    file.proofs.push(proof);
                }
            }
            let changed = file.list.revoke(prefix, *leaves, *expires);
            files::save(list, &file)?;
            let verb = if changed { "revoked" } else { "already revoked" };
            output(out, &format!("{verb} leaves {leaves} under {prefix} (epoch {})\n", file.list.epoch()))
        }
        Command::Unrevoke { list, prefix, leaves } => {
            let h = cfg.hierarchy()?;
            let mut file = load_list(list, &h)?;
            let changed = file.list.unrevoke(prefix, *leaves);
            file.proofs.retain(|p| p.range != *leaves);
            files::save(list, &file)?;
            let verb = if changed { "unrevoked" } else { "not revoked" };
            output(out, &format!("{verb} leaves {leaves} under {prefix} (epoch {})\n", file.list.epoch()))
        }
        Command::Ratchet => {
            let mut store = cfg.existing_store()?;
            let before = store.entries().len();
            let now = cfg.now();
            ratchet_forward(&mut store, now, &mut rng)?;
            cfg.save_store(&store)?;
            output(out, &format!("ratcheted to {now}: {before} keys before, {} after\n", store.entries().len()))
        }
        Command::Bench { slots, iterations, bundle_ranges, tree_height } => {
            let mut rows = Vec::new();
            for &s in slots {
                if s == 0 {
                    return Err(Error::InvalidArgument("slot counts must be positive".into()));
                }
                rows.extend(bench_wkdibe(s, *iterations, &mut rng)?);
            }
            if !bundle_ranges.is_empty() {
                rows.extend(bench_range_bundle(*tree_height, bundle_ranges, *iterations, &mut rng)?);
            }
            output(out, &to_csv(&rows))
        }
        Command::Simulate { spec, csv } => {
            let text = fs::read_to_string(spec).map_err(io_at(spec))?;
            let t = run_scenario(&ScenarioSpec::from_toml(&text)?)?;
            output(out, &if *csv { t.to_csv() } else { t.to_table() })
        }
        Command::Inspect { file } => output(out, &inspect(file)?),
    }
}

fn check_header(cfg: &CliConfig, header: &EpochIntegrityHeader) -> Result<()> {
    let h = cfg.hierarchy()?;
    if !verify_epoch_header(&h, header) {
        return Err(Error::VerificationFailed("epoch header signature".into()));
    }
    Ok(())
}

fn load_list(path: &Path, h: &Hierarchy) -> Result<RevocationFile> {
    if !path.exists() {
        return Ok(RevocationFile { list: RevocationList::new(*h.id()), proofs: Vec::new() });
    }
    let file: RevocationFile = files::load(path)?;
    if file.list.hierarchy() != h.id() {
        return Err(jedi_core::Error::UnknownHierarchy.into());
    }
    Ok(file)
}

fn describe_keyset(ks: &KeySet) -> String {
    let tree = ks.hierarchy.layout().tree;
    let mut s = format!("{} keys\n", ks.entries.len());
    for e in &ks.entries {
        s.push_str(&format!("  {} @ {}", e.uri, e.time.display_in(&tree)));
        if let Some(r) = e.leaf_range() {
            s.push_str(&format!(" leaves {r}"));
        }
        s.push('\n');
    }
    s
}

fn describe_hierarchy(h: &Hierarchy) -> String {
    let l = h.layout();
    format!(
        "hierarchy {}{}\n  {} URI slots, {} time slots, {} revocation slots, signatures {}\n",
        hex(h.id()),
        if h.label().is_empty() { String::new() } else { format!(" ({})", h.label()) },
        l.uri_slots,
        l.time_slots(),
        l.revocation_slots,
        if h.params().has_signature_slot() { "on" } else { "off" },
    )
}

/// A human-readable summary of any container file.
pub fn inspect(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    let (kind, _) = decode_container(&bytes)?;
    Ok(match kind {
        FileKind::Params => describe_hierarchy(&Hierarchy::from_file_bytes(&bytes)?),
        FileKind::KeySet => describe_keyset(&KeySet::from_file_bytes(&bytes)?),
        FileKind::KeyStore => {
            let store = KeyStore::from_file_bytes(&bytes)?;
            let mut s = String::new();
            for h in store.hierarchies() {
                s.push_str(&describe_hierarchy(h));
                if store.master(h.id()).is_some() {
                    s.push_str("  master key held\n");
                }
            }
            s.push_str(&format!("{} keys\n", store.entries().len()));
            for e in store.entries() {
                let tree = store.hierarchy(&e.hierarchy)?.layout().tree;
                s.push_str(&format!("  {} @ {}", e.uri, e.time.display_in(&tree)));
                if let Some(r) = e.leaf_range() {
                    s.push_str(&format!(" leaves {r}"));
                }
                s.push('\n');
            }
            s
        }
        FileKind::Message => {
            let m = MessageFile::from_file_bytes(&bytes)?;
            format!(
                "message {} @ {}\n  hierarchy {}\n  revocation epoch {}, wrapped key {} bytes, payload {} bytes{}\n",
                m.message.uri,
                m.message.time,
                hex(&m.message.hierarchy),
                m.message.epoch,
                m.message.wrapped.len(),
                m.message.payload.len(),
                m.tag.map_or(String::new(), |t| format!(", tag index {}", t.index)),
            )
        }
        FileKind::RevocationList => {
            let f = RevocationFile::from_file_bytes(&bytes)?;
            let mut s = format!("revocation list epoch {}, {} proofs\n", f.list.epoch(), f.proofs.len());
            for (uri, r) in f.list.entries() {
                s.push_str(&format!("  {uri} leaves {}", r.range));
                if let Some(x) = r.expires {
                    s.push_str(&format!(" until {x}"));
                }
                s.push('\n');
            }
            s
        }
        FileKind::EpochHeader => {
            let h = EpochIntegrityHeader::from_file_bytes(&bytes)?;
            format!(
                "epoch header {} @ {}\n  {} messages, commitment {}\n",
                h.uri,
                h.time,
                h.chain_length,
                hex(&h.commitment)
            )
        }
        FileKind::EpochChain => {
            let c = ChainState::from_file_bytes(&bytes)?;
            format!(
                "epoch chain {} @ {}\n  {} of {} messages used\n",
                c.header.uri, c.header.time, c.next, c.header.chain_length
            )
        }
    })
}
