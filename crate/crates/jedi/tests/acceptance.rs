//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test -p jedi --test acceptance`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use jedi::bench::{bench_range_bundle, bench_wkdibe, BenchRow};
use jedi::scenario::{run_scenario, PublisherSpec, ScenarioSpec};
use jedi_core::groups::pair;
use jedi_core::pattern::{
    terminator_hash, time_label_hash, uri_component_hash, Hour, Layout, TimeRange, TimeTree, Uri,
};
use jedi_core::protocol::{accept_delegation, create_hierarchy, delegate, KeyStore};
use jedi_core::revocation::{
    decrypt_revocable, derive_range_bundle, encrypt_revocable, BundleParent, LeafRange, NodeId, RevocationTree,
};
use jedi_core::wkdibe::{decrypt, setup};
use jedi_core::{Error, Gt, Pattern, Scalar, Signature, WkdCiphertext, G1, G2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn hour(s: &str) -> Hour {
    s.parse().unwrap()
}

fn uri(s: &str) -> Uri {
    Uri::parse(s).unwrap()
}

fn bundled(name: &str) -> ScenarioSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name);
    ScenarioSpec::from_toml(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Each slot free with probability `free`, otherwise a random scalar.
fn random_pattern(len: usize, free: f64, rng: &mut StdRng) -> Pattern {
    Pattern::from_slots((0..len).map(|_| (!rng.gen_bool(free)).then(|| Scalar::random(rng))).collect()).unwrap()
}

/// `p` with every free slot fixed at random.
fn qualify(p: &Pattern, rng: &mut StdRng) -> Pattern {
    Pattern::from_slots(p.slots().iter().map(|s| s.or_else(|| Some(Scalar::random(rng)))).collect()).unwrap()
}

/// `p` with slot `i` replaced by a different value.
fn perturb(p: &Pattern, i: usize, rng: &mut StdRng) -> Pattern {
    let mut q = p.clone();
    q.set(i, Some(Scalar::random(rng))).unwrap();
    q
}

/// Re-encodes `ct` claiming it was made for `pattern`, so the decryption
/// is attempted rather than refused on the digest.
fn relabel(ct: &WkdCiphertext, pattern: &Pattern) -> WkdCiphertext {
    let mut bytes = ct.encode();
    let at = bytes.len() - 752;
    bytes[at..at + 32].copy_from_slice(&pattern.digest());
    WkdCiphertext::decode(&bytes).unwrap()
}

fn flip_bit(bytes: &mut [u8], from: usize, rng: &mut StdRng) {
    let bit = rng.gen_range(from * 8..bytes.len() * 8);
    bytes[bit / 8] ^= 1 << (bit % 8);
}

fn crypto_roundtrips() -> Check {
    let mut rng = StdRng::seed_from_u64(1);
    let mut rejected = 0;
    for len in [1, 8, 20] {
        let (params, master) = setup(len, false, &mut rng).map_err(|e| e.to_string())?;
        for i in 0..1000 {
            let grant = random_pattern(len, 0.4, &mut rng);
            let target = qualify(&grant, &mut rng);
            let parent = params.key_der(&master, &grant, &mut rng).unwrap();
            let key = params.key_der(&parent, &target, &mut rng).unwrap();
            let m = params.random_gt(&mut rng);
            let ct = params.encrypt(&target, &m, &mut rng).unwrap();
            ensure(decrypt(&key, &ct) == Ok(m), || format!("roundtrip {i} at {len} slots"))?;

            if i % 4 != 0 {
                continue;
            }
            let slot = rng.gen_range(0..len);
            let other = perturb(&target, slot, &mut rng);
            let wrong = params.encrypt(&other, &m, &mut rng).unwrap();
            ensure(decrypt(&key, &wrong) == Err(Error::PatternMismatch), || "digest check".into())?;
            ensure(decrypt(&key, &relabel(&wrong, &target)) != Ok(m), || format!("wrong pattern decrypts at {len}"))?;
            if let Some(fixed) = grant.fixed().map(|(j, _)| j).next() {
                let outside = perturb(&target, fixed, &mut rng);
                ensure(params.key_der(&parent, &outside, &mut rng).is_err(), || "derived outside grant".into())?;
            }
            let mut bytes = ct.encode();
            let core = bytes.len() - 720;
            flip_bit(&mut bytes, core, &mut rng);
            let ok = WkdCiphertext::decode(&bytes).map(|c| decrypt(&key, &c) == Ok(m)).unwrap_or(false);
            ensure(!ok, || format!("bit-flipped ciphertext decrypts at {len}"))?;
            rejected += 3;
        }
    }

    let (params, master) = setup(8, true, &mut rng).map_err(|e| e.to_string())?;
    for i in 0..500 {
        let grant = random_pattern(8, 0.4, &mut rng);
        let target = qualify(&grant, &mut rng);
        let parent = params.key_der(&master, &grant, &mut rng).unwrap();
        let key = params.key_der(&parent, &target, &mut rng).unwrap();
        let msg = Scalar::random(&mut rng);
        let sig = params.sign(&key, &msg, &mut rng).unwrap();
        ensure(params.verify(&target, &sig, &msg), || format!("signature {i} fails"))?;
        let general = params.generalized_sign(&parent, &target, &msg, &mut rng).unwrap();
        ensure(params.verify(&target, &general, &msg), || format!("generalized signature {i} fails"))?;

        let other = perturb(&target, rng.gen_range(0..8), &mut rng);
        ensure(!params.verify(&other, &sig, &msg), || "wrong pattern verifies".into())?;
        ensure(!params.verify(&target, &sig, &Scalar::random(&mut rng)), || "wrong message verifies".into())?;
        let mut bytes = sig.to_bytes();
        flip_bit(&mut bytes, 0, &mut rng);
        let ok = Signature::from_bytes(&bytes).map(|s| params.verify(&target, &s, &msg)).unwrap_or(false);
        ensure(!ok, || "bit-flipped signature verifies".into())?;
        rejected += 3;
    }
    Ok(format!("3000 roundtrips, 500 signatures, {rejected} negatives rejected"))
}

fn worked_delegation() -> Check {
    let mut rng = StdRng::seed_from_u64(2);
    let (h, master) = create_hierarchy("acceptance", 14, 4, 0, false, &mut rng).unwrap();
    let id = *h.id();
    let mut store = KeyStore::new();
    store.add_authority(h, master);
    let range = TimeRange::between(hour("2014-10-29T22"), hour("2014-12-02T01")).unwrap();
    let ks = delegate(&store, &id, &uri("buildingA/*"), &range, None, &mut rng).map_err(|e| e.to_string())?;
    let got: Vec<String> = ks.entries.iter().map(|e| e.time.to_string()).collect();
    let want = [
        "2014/Oct/29/23",
        "2014/Oct/29/24",
        "2014/Oct/30/*",
        "2014/Oct/31/*",
        "2014/Nov/*",
        "2014/Dec/01/*",
        "2014/Dec/02/01",
    ];
    ensure(got == want, || format!("got {got:?}"))?;
    let mut recipient = KeyStore::new();
    let added = accept_delegation(&mut recipient, &ks).map_err(|e| e.to_string())?;
    ensure(added == 7, || format!("accepted {added}"))?;
    Ok("7 keys, string-for-string".into())
}

fn message_layout() -> Check {
    let layout = Layout::new(4, 4, 0).unwrap();
    let leaf = layout.leaf(hour("2017-06-08T06"));
    let p = layout.message_pattern(&uri("a/b"), &leaf).unwrap();
    let want = [
        Some(uri_component_hash("a")),
        Some(uri_component_hash("b")),
        Some(terminator_hash()),
        None,
        Some(time_label_hash("2017")),
        Some(time_label_hash("Jun")),
        Some(time_label_hash("08")),
        Some(time_label_hash("06")),
    ];
    ensure(p.slots() == want, || format!("leaf {leaf}: slots differ"))?;
    Ok("H(a) H(b) H($) _ H(2017) H(Jun) H(08) H(06)".into())
}

fn precompute_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(4);
    let (params, _) = setup(20, true, &mut rng).unwrap();
    for i in 0..200 {
        let from = random_pattern(20, 0.3, &mut rng);
        let mut to = from.clone();
        for _ in 0..rng.gen_range(1..=20) {
            let j = rng.gen_range(0..20);
            to.set(j, (!rng.gen_bool(0.3)).then(|| Scalar::random(&mut rng))).unwrap();
        }
        let adjusted = params.adjust_precomputed(&params.precompute(&from).unwrap(), &to).unwrap();
        let direct = params.precompute(&to).unwrap();
        ensure(adjusted.value() == direct.value() && adjusted.pattern() == &to, || format!("pair {i}: Q differs"))?;

        let m = params.random_gt(&mut rng);
        let seed: u64 = rng.gen();
        let prepared = params.encrypt_prepared(&adjusted, &m, &mut StdRng::seed_from_u64(seed));
        let plain = params.encrypt(&to, &m, &mut StdRng::seed_from_u64(seed)).unwrap();
        ensure(prepared.encode() == plain.encode(), || format!("pair {i}: ciphertexts differ"))?;
    }
    Ok("200 pairs exact, ciphertexts bitwise equal".into())
}

fn sizes() -> Check {
    let mut rng = StdRng::seed_from_u64(5);
    let (params, master) = setup(20, true, &mut rng).unwrap();
    let p = qualify(&Pattern::free(20), &mut rng);
    let key = params.key_der(&master, &p, &mut rng).unwrap();
    let ct = params.encrypt(&p, &params.random_gt(&mut rng), &mut rng).unwrap();
    let sig = params.sign(&key, &Scalar::one(), &mut rng).unwrap();
    let g1 = G1::random(&mut rng);
    let g2 = G2::random(&mut rng);
    let gt = pair(&g1, &g2);
    let got =
        [g1.to_bytes().len(), g2.to_bytes().len(), gt.to_bytes().len(), ct.core_bytes().len(), sig.to_bytes().len()];
    ensure(got == [48, 96, 576, 720, 144], || format!("sizes {got:?}"))?;
    ensure(
        G1::from_bytes(&g1.to_bytes()) == Ok(g1)
            && G2::from_bytes(&g2.to_bytes()) == Ok(g2)
            && Gt::from_bytes(&gt.to_bytes()) == Ok(gt)
            && Signature::from_bytes(&sig.to_bytes()) == Ok(sig),
        || "encodings do not roundtrip".into(),
    )?;
    Ok("G1 48, G2 96, GT 576, ciphertext 720, signature 144".into())
}

fn hybrid_transcript() -> Check {
    let spec = bundled("hybrid.toml");
    let p = &spec.publishers[0];
    ensure(spec.publishers.len() == 1 && p.messages == 10_000 && p.hours == 10, || "scenario changed".into())?;
    let t = run_scenario(&spec).map_err(|e| e.to_string())?;
    let c = t.totals();
    ensure(c.wkd_encrypts == 10 && c.wkd_decrypts == 10, || {
        format!("{} encrypts, {} decrypts", c.wkd_encrypts, c.wkd_decrypts)
    })?;
    for a in &t.actors {
        ensure(a.usual.counts.pairings == 0, || format!("{}: usual path paired", a.name))?;
        ensure(a.successes() == 10_000, || format!("{}: {} ok", a.name, a.successes()))?;
    }
    Ok("10 encrypts, 10 decrypts, 0 usual-path pairings".into())
}

/// Leaf spans of the maximal subtrees of `lo..=hi` free of revoked leaves.
fn oracle_cover(lo: u32, hi: u32, revoked: &BTreeSet<u32>, out: &mut BTreeSet<(u32, u32)>) {
    if !revoked.iter().any(|l| (lo..=hi).contains(l)) {
        out.insert((lo, hi));
    } else if lo < hi {
        let mid = lo + (hi - lo) / 2;
        oracle_cover(lo, mid, revoked, out);
        oracle_cover(mid + 1, hi, revoked, out);
    }
}

/// Fewest aligned power-of-two blocks tiling exactly the unrevoked leaves.
fn min_tiling(n: u32, revoked: &BTreeSet<u32>) -> usize {
    let n = n as usize;
    let mut best = vec![usize::MAX; n + 1];
    best[0] = 0;
    for end in 1..=n {
        if revoked.contains(&(end as u32)) {
            best[end] = best[end - 1];
            continue;
        }
        let mut size = 1;
        while size <= end {
            let start = end - size;
            let clean = (start + 1..=end).all(|l| !revoked.contains(&(l as u32)));
            if start % size == 0 && clean && best[start] != usize::MAX {
                best[end] = best[end].min(best[start] + 1);
            }
            size *= 2;
        }
    }
    best[n]
}

fn subsets(n: u32, max: usize) -> Vec<BTreeSet<u32>> {
    let mut out = vec![BTreeSet::new()];
    for leaf in 1..=n {
        let grown: Vec<_> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut s = s.clone();
                s.insert(leaf);
                s
            })
            .collect();
        out.extend(grown);
    }
    out
}

fn revocation_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(7);
    let mut sets = 0;
    let mut decrypts = 0;
    for height in [3u8, 4] {
        let n = 1u32 << height;
        let tree = RevocationTree::new(2, height).unwrap();
        let (params, master) = setup(2 + height as usize, false, &mut rng).unwrap();
        let mut base = Pattern::free(2 + height as usize);
        base.set(0, Some(Scalar::random(&mut rng))).unwrap();
        base.set(1, Some(Scalar::random(&mut rng))).unwrap();
        let bundles: Vec<_> = (1..=n)
            .map(|l| {
                let range = LeafRange::single(l).unwrap();
                derive_range_bundle(&params, &tree, BundleParent::Master(&master), &base, range, &mut rng).unwrap()
            })
            .collect();
        for revoked in subsets(n, 4) {
            let ranges: Vec<LeafRange> = revoked.iter().map(|&l| LeafRange::single(l).unwrap()).collect();
            let cover = tree.subset_cover(&ranges);
            let spans: BTreeSet<(u32, u32)> =
                cover.iter().map(|v| tree.leaves_of(v)).map(|r| (r.first, r.last)).collect();
            let mut want = BTreeSet::new();
            oracle_cover(1, n, &revoked, &mut want);
            ensure(spans == want && cover.len() == spans.len(), || format!("n={n} {revoked:?}: cover {spans:?}"))?;
            ensure(cover.len() == min_tiling(n, &revoked), || format!("n={n} {revoked:?}: cover not minimal"))?;

            let m = params.random_gt(&mut rng);
            let cts = encrypt_revocable(&params, &tree, &base, &ranges, &m, &mut rng).unwrap();
            let nodes: Vec<NodeId> = cts.iter().map(|c| c.node).collect();
            ensure(nodes == cover, || "ciphertexts do not follow the cover".into())?;
            for (i, bundle) in bundles.iter().enumerate() {
                let got = decrypt_revocable(&params, &tree, bundle, &base, &cts);
                let leaf = i as u32 + 1;
                if revoked.contains(&leaf) {
                    ensure(got == Err(Error::Revoked), || format!("n={n} {revoked:?}: leaf {leaf} not Revoked"))?;
                } else {
                    ensure(got == Ok(m), || format!("n={n} {revoked:?}: leaf {leaf} fails"))?;
                    decrypts += 1;
                }
            }
            sets += 1;
        }
    }
    Ok(format!("{sets} revocation sets over n=8,16, {decrypts} decryptions"))
}

fn range_bundle_nodes() -> Check {
    let mut rng = StdRng::seed_from_u64(8);
    let tree = RevocationTree::new(1, 2).unwrap();
    let (params, master) = setup(3, false, &mut rng).unwrap();
    let mut base = Pattern::free(3);
    base.set(0, Some(Scalar::random(&mut rng))).unwrap();
    let range = LeafRange::new(3, 4).unwrap();
    let b = derive_range_bundle(&params, &tree, BundleParent::Master(&master), &base, range, &mut rng).unwrap();
    let names = |m: &std::collections::BTreeMap<NodeId, _>| m.keys().map(|v| v.to_string()).collect::<Vec<_>>();
    let (q, l) = (names(b.qualifiable()), names(b.limited()));
    ensure(q == ["v3"] && l == ["v1"], || format!("qualifiable {q:?}, limited {l:?}"))?;
    b.check(&params, &tree).map_err(|e| e.to_string())?;
    Ok("qualifiable {v3}, limited {v1}".into())
}

fn row<'a>(rows: &'a [BenchRow], op: &str) -> &'a BenchRow {
    rows.iter().find(|r| r.operation == op).unwrap()
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn performance_shape() -> Check {
    let mut rng = StdRng::seed_from_u64(9);
    let rows = bench_wkdibe(20, 30, &mut rng).map_err(|e| e.to_string())?;
    for op in ["encrypt", "decrypt", "key_der", "sign", "verify"] {
        let r = row(&rows, op);
        ensure(r.p95 <= Duration::from_millis(50), || format!("{op}: p95 {:.2} ms", ms(r.p95)))?;
    }
    let slowest = rows.iter().map(|r| ms(r.p95)).fold(0.0, f64::max);
    let speedup = ms(row(&rows, "precompute+encrypt").mean) / ms(row(&rows, "adjust+encrypt").mean);
    ensure(speedup >= 3.0, || format!("adjust speedup {speedup:.2}x"))?;

    let ks = [5, 10, 50, 100, 500, 1000];
    let bundles = bench_range_bundle(16, &ks, 20, &mut rng).map_err(|e| e.to_string())?;
    let medians: Vec<f64> = bundles.iter().map(|r| ms(r.median)).collect();
    let spread = medians.iter().cloned().fold(0.0, f64::max) / medians.iter().cloned().fold(f64::MAX, f64::min);
    ensure(spread <= 2.0, || format!("range bundle spread {spread:.2}x over medians {medians:.2?} ms"))?;
    Ok(format!("slowest p95 {slowest:.2} ms, adjust {speedup:.1}x faster, bundle spread {spread:.2}x"))
}

fn building_story() -> Check {
    let mut spec = bundled("building.toml");
    let template = spec.publishers[0].clone();
    for (name, path) in [
        ("office7-desk-lamp", "buildingA/floor2/office7/desk/lamp"),
        ("office77-temp", "buildingA/floor2/office77/temp"),
        ("floor2", "buildingA/floor2"),
        ("building", "buildingA"),
    ] {
        spec.publishers.push(PublisherSpec { name: name.into(), uri: path.into(), ..template.clone() });
    }
    let expected: usize = spec.publishers.iter().map(|p| p.messages as usize).sum();
    let t = run_scenario(&spec).map_err(|e| e.to_string())?;
    let alice = t.actor("alice").ok_or("no alice")?;
    ensure(alice.outcomes.len() == expected, || format!("alice saw {} of {expected}", alice.outcomes.len()))?;

    let tree = TimeTree::for_slots(4).unwrap();
    let (from, to) = (hour("2017-06-08T01"), hour("2017-06-10T00"));
    let mut granted = 0;
    for o in &alice.outcomes {
        let text = o.uri.to_string();
        let (slot, _) = tree.bounds(&o.time).ok_or("outcome time is not a leaf")?;
        let office = text == "buildingA/floor2/office7" || text.starts_with("buildingA/floor2/office7/");
        let allowed = office && from <= slot && slot <= to;
        ensure(o.result.is_ok() == allowed, || format!("{text} @ {}: {:?}", o.time, o.result))?;
        granted += allowed as usize;
    }
    ensure(granted == 4 * 48, || format!("{granted} messages granted"))?;
    Ok(format!("{} probes, {granted} decrypted, all others refused", alice.outcomes.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("crypto roundtrip suite", crypto_roundtrips),
        ("worked range delegation", worked_delegation),
        ("message pattern slot layout", message_layout),
        ("precompute/adjust oracle", precompute_oracle),
        ("serialization sizes", sizes),
        ("hybrid-layer transcript", hybrid_transcript),
        ("revocation oracle equivalence", revocation_oracle),
        ("range bundle node sets", range_bundle_nodes),
        ("performance shape", performance_shape),
        ("end-to-end delegation story", building_story),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} ({secs:.1}s)");
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
