use std::sync::Arc;
use std::thread;

use jedi::broker::{Broker, Envelope};
use jedi_core::pattern::{Hour, Uri};
use jedi_core::protocol::{create_hierarchy, PublisherSession};
use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};

/// Filter matching over plain strings: `+` is one component, a final `*`
/// any suffix, and `+`s directly before the final `*` may also be empty.
fn oracle(filter: &[&str], uri: &[&str]) -> bool {
    match filter.split_first() {
        None => uri.is_empty(),
        Some((&"*", [])) => true,
        Some((&"+", rest)) => {
            let skippable = rest.last() == Some(&"*") && rest.iter().all(|c| *c == "+" || *c == "*");
            (!uri.is_empty() && oracle(rest, &uri[1..])) || (skippable && oracle(rest, uri))
        }
        Some((c, rest)) => uri.first() == Some(c) && oracle(rest, &uri[1..]),
    }
}

fn parse(text: &str) -> Uri {
    text.parse().unwrap()
}

fn components(text: &str) -> Vec<&str> {
    if text.is_empty() {
        Vec::new()
    } else {
        text.split('/').collect()
    }
}

fn envelope(uri: &str, session: &mut PublisherSession, rng: &mut StdRng) -> Envelope {
    let now: Hour = "2017-06-08T06".parse().unwrap();
    Envelope::plain(session.publish_encrypt(&parse(uri), now, b"x", None, rng).unwrap())
}

#[test]
fn delivery_matches_the_string_oracle() {
    let mut rng = StdRng::seed_from_u64(11);
    let (h, _) = create_hierarchy("t", 6, 4, 0, false, &mut rng).unwrap();
    let mut session = PublisherSession::new(h);
    let names = ["a", "b", "c"];
    let mut delivered = 0;
    for _ in 0..10_000 {
        let mut f: Vec<&str> = (0..rng.gen_range(0..4))
            .map(|_| if rng.gen_bool(0.3) { "+" } else { names[rng.gen_range(0..3)] })
            .collect();
        if rng.gen_bool(0.5) {
            f.push("*");
        }
        let u: Vec<&str> = (0..rng.gen_range(0..5)).map(|_| names[rng.gen_range(0..3)]).collect();
        let (filter, uri) = (f.join("/"), u.join("/"));
        let broker = Broker::new();
        broker.subscribe(1, parse(&filter));
        let got = broker.publish(envelope(&uri, &mut session, &mut rng)) == 1;
        assert_eq!(got, oracle(&components(&filter), &components(&uri)), "filter {filter:?} uri {uri:?}");
        delivered += got as usize;
    }
    assert!(delivered > 1000 && delivered < 9000, "degenerate sample: {delivered}");
}

#[test]
fn broker_state_never_contains_plaintext() {
    let mut rng = StdRng::seed_from_u64(12);
    let (h, _) = create_hierarchy("t", 6, 4, 0, false, &mut rng).unwrap();
    let mut session = PublisherSession::new(h);
    let broker = Broker::with_log();
    broker.subscribe(1, parse("home/*"));
    broker.subscribe(2, parse("home/+/light"));
    let mut markers = Vec::new();
    for i in 0..300 {
        let mut plaintext = vec![0u8; 64 + i % 50];
        rng.fill_bytes(&mut plaintext);
        let uri = ["home/kitchen/light", "home/hall/temp", "garden/light"][i % 3];
        let now = Hour("2017-06-08T06".parse::<Hour>().unwrap().0 + (i / 100) as i64);
        broker.publish(Envelope::plain(session.publish_encrypt(&parse(uri), now, &plaintext, None, &mut rng).unwrap()));
        markers.push(plaintext);
    }
    let observed = broker.observable_bytes();
    assert!(observed.len() > 300 * 64);
    for m in &markers {
        // Any 16-byte window of a payload would do as a marker; check them all.
        for w in m.windows(16).step_by(8) {
            assert!(!observed.windows(16).any(|o| o == w), "plaintext bytes visible to the broker");
        }
    }
    let s = broker.stats();
    assert_eq!((s.published, s.routed, s.dropped), (300, 300, 100));
}

#[test]
fn concurrent_publishers_and_subscribers() {
    let mut rng = StdRng::seed_from_u64(13);
    let (h, _) = create_hierarchy("t", 6, 4, 0, false, &mut rng).unwrap();
    let broker = Arc::new(Broker::new());
    broker.subscribe(0, parse("*"));
    broker.subscribe(1, parse("a/*"));
    broker.subscribe(2, parse("b/*"));
    let subs: Vec<_> = (0..3u64)
        .map(|id| {
            let b = broker.clone();
            thread::spawn(move || {
                let mut n = 0;
                while b.recv(id).is_some() {
                    n += 1;
                }
                n
            })
        })
        .collect();
    let pubs: Vec<_> = ["a/x", "a/y", "b/z"]
        .into_iter()
        .enumerate()
        .map(|(i, uri)| {
            let b = broker.clone();
            let h = h.clone();
            thread::spawn(move || {
                let mut rng = StdRng::seed_from_u64(i as u64);
                let mut session = PublisherSession::new(h);
                for _ in 0..200 {
                    b.publish(envelope(uri, &mut session, &mut rng));
                }
            })
        })
        .collect();
    for p in pubs {
        p.join().unwrap();
    }
    broker.close();
    let counts: Vec<usize> = subs.into_iter().map(|s| s.join().unwrap()).collect();
    assert_eq!(counts, [600, 400, 200]);
    assert_eq!(broker.stats().routed, 1200);
}

mod fanout {
    use super::*;
    use jedi_core::protocol::Hierarchy;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn hierarchy() -> &'static Hierarchy {
        static H: OnceLock<Hierarchy> = OnceLock::new();
        H.get_or_init(|| create_hierarchy("t", 6, 4, 0, false, &mut StdRng::seed_from_u64(14)).unwrap().0)
    }

    fn filter() -> impl Strategy<Value = String> {
        (prop::collection::vec(prop::sample::select(vec!["a", "b", "+"]), 0..4), any::<bool>()).prop_map(
            |(mut f, star)| {
                if star {
                    f.push("*");
                }
                f.join("/")
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn every_matching_subscriber_gets_one_copy(
            filters in prop::collection::vec(filter(), 1..6),
            uri in prop::collection::vec(prop::sample::select(vec!["a", "b"]), 0..4),
        ) {
            let uri = uri.join("/");
            let broker = Broker::new();
            for (id, f) in filters.iter().enumerate() {
                broker.subscribe(id as u64, parse(f));
            }
            let mut rng = StdRng::seed_from_u64(0);
            let mut session = PublisherSession::new(hierarchy().clone());
            let fanout = broker.publish(envelope(&uri, &mut session, &mut rng));
            let expected: Vec<bool> = filters.iter().map(|f| oracle(&components(f), &components(&uri))).collect();
            prop_assert_eq!(fanout, expected.iter().filter(|m| **m).count());
            for (id, m) in expected.iter().enumerate() {
                prop_assert_eq!(broker.try_recv(id as u64).is_some(), *m);
            }
            prop_assert_eq!(broker.stats().dropped, expected.iter().all(|m| !m) as u64);
        }
    }
}
