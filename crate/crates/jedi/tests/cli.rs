use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jedi::error::{Error, EXIT_CRYPTO, EXIT_MALFORMED, EXIT_UNAUTHORIZED};

struct Workdir {
    dir: tempfile::TempDir,
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Workdir {
    fn new() -> Self {
        Workdir { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn raw(&self, args: &[&str], stdin: Option<&[u8]>) -> Output {
        use std::io::Write;
        use std::process::Stdio;
        let mut child = Command::new(env!("CARGO_BIN_EXE_jedi"))
            .current_dir(self.dir.path())
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(stdin.unwrap_or_default()).unwrap();
        child.wait_with_output().unwrap()
    }

    fn run(&self, args: &[&str]) -> Run {
        let out = self.raw(args, None);
        Run {
            code: out.status.code().unwrap(),
            stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        }
    }

    fn ok(&self, args: &[&str]) -> String {
        let r = self.run(args);
        assert_eq!(r.code, 0, "{args:?} failed: {}", r.stderr);
        r.stdout
    }

    fn fails(&self, args: &[&str], code: i32, name: &str) {
        let r = self.run(args);
        assert_eq!(r.code, code, "{args:?}: {}", r.stderr);
        assert!(r.stderr.contains(name), "{args:?}: expected {name}, got {}", r.stderr);
    }

    fn write(&self, name: &str, bytes: &[u8]) {
        fs::write(self.path(name), bytes).unwrap();
    }

    /// Authority with a depth-4 hierarchy and Alice holding `a/*` for June 2017.
    fn with_alice(&self, extra_init: &[&str]) {
        let mut init = vec!["--store", "auth.keystore", "init", "--uri-slots", "8", "--time-slots", "4"];
        init.extend_from_slice(extra_init);
        self.ok(&init);
        self.ok(&[
            "--store",
            "auth.keystore",
            "delegate",
            "--uri",
            "a/*",
            "--from",
            "2017-06-01T00",
            "--to",
            "2017-07-01T00",
            "--out",
            "alice.keyset",
        ]);
        self.ok(&["--store", "alice.keystore", "accept", "alice.keyset"]);
        self.write("plain.txt", b"the lab is 21 degrees");
    }
}

#[test]
fn worked_range_delegation_output() {
    let w = Workdir::new();
    let init = w.ok(&["init", "--uri-slots", "14", "--time-slots", "6"]);
    assert!(init.starts_with("hierarchy ") && init.trim_end().len() == "hierarchy ".len() + 64);
    let out = w.ok(&[
        "delegate",
        "--uri",
        "buildingA/*",
        "--from",
        "2014-10-29T22",
        "--to",
        "2014-12-02T01",
        "--out",
        "b.keyset",
    ]);
    let golden = "7 keys
  buildingA/* @ 2014/10/6/4/4/5
  buildingA/* @ 2014/10/6/4/4/6
  buildingA/* @ 2014/10/6/5/*
  buildingA/* @ 2014/10/7/*
  buildingA/* @ 2014/11/*
  buildingA/* @ 2014/12/1/1/*
  buildingA/* @ 2014/12/1/2/1/1
";
    assert_eq!(out, golden);
    assert_eq!(w.ok(&["inspect", "b.keyset"]), golden);
}

#[test]
fn worked_range_on_the_calendar_tree() {
    let w = Workdir::new();
    w.ok(&["init", "--uri-slots", "14", "--time-slots", "4"]);
    let out = w.ok(&[
        "delegate",
        "--uri",
        "buildingA/*",
        "--from",
        "2014-10-29T22",
        "--to",
        "2014-12-02T01",
        "--out",
        "b.keyset",
    ]);
    assert_eq!(
        out,
        "7 keys
  buildingA/* @ 2014/Oct/29/23
  buildingA/* @ 2014/Oct/29/24
  buildingA/* @ 2014/Oct/30/*
  buildingA/* @ 2014/Oct/31/*
  buildingA/* @ 2014/Nov/*
  buildingA/* @ 2014/Dec/01/*
  buildingA/* @ 2014/Dec/02/01
"
    );
}

#[test]
fn encrypt_then_decrypt_with_a_prefix_key() {
    let w = Workdir::new();
    w.with_alice(&[]);
    assert_eq!(
        w.ok(&["encrypt", "--uri", "a/b", "--at", "2017-06-08T06", "--in", "plain.txt", "--out", "m.msg"]),
        "a/b @ 2017/Jun/08/06\n"
    );
    assert_eq!(w.ok(&["--store", "alice.keystore", "decrypt", "--in", "m.msg"]), "the lab is 21 degrees");
    w.ok(&["--store", "alice.keystore", "decrypt", "--in", "m.msg", "--out", "back.txt"]);
    assert_eq!(fs::read(w.path("back.txt")).unwrap(), b"the lab is 21 degrees");
    // The authority decrypts anything in its hierarchy.
    assert_eq!(w.ok(&["--store", "auth.keystore", "decrypt", "--in", "m.msg"]), "the lab is 21 degrees");
    let inspected = w.ok(&["inspect", "m.msg"]);
    assert!(inspected.starts_with("message a/b @ 2017/Jun/08/06\n"), "{inspected}");
}

#[test]
fn plaintext_from_stdin() {
    let w = Workdir::new();
    w.with_alice(&[]);
    let out = w.raw(&["encrypt", "--uri", "a/c/d", "--at", "2017-06-30T23", "--out", "m.msg"], Some(b"piped"));
    assert!(out.status.success());
    assert_eq!(w.ok(&["--store", "alice.keystore", "decrypt", "--in", "m.msg"]), "piped");
}

#[test]
fn expired_keys_give_no_matching_key() {
    let w = Workdir::new();
    w.with_alice(&[]);
    w.ok(&["encrypt", "--uri", "a/b", "--at", "2017-07-01T01", "--in", "plain.txt", "--out", "late.msg"]);
    w.fails(&["--store", "alice.keystore", "decrypt", "--in", "late.msg"], EXIT_UNAUTHORIZED, "NoMatchingKey");
    w.ok(&["encrypt", "--uri", "b/a", "--at", "2017-06-08T06", "--in", "plain.txt", "--out", "other.msg"]);
    w.fails(&["--store", "alice.keystore", "decrypt", "--in", "other.msg"], EXIT_UNAUTHORIZED, "NoMatchingKey");
    // A principal with no keys at all.
    w.fails(&["--store", "nobody.keystore", "decrypt", "--in", "other.msg"], EXIT_MALFORMED, "Io");
    w.ok(&["--store", "empty.keystore", "accept", "alice.keyset"]);
    w.fails(&["--store", "empty.keystore", "decrypt", "--in", "late.msg"], EXIT_UNAUTHORIZED, "NoMatchingKey");
}

#[test]
fn redelegation_beyond_held_authority() {
    let w = Workdir::new();
    w.with_alice(&[]);
    let r = w.run(&[
        "--store",
        "alice.keystore",
        "delegate",
        "--uri",
        "a/b/*",
        "--from",
        "2017-06-20T00",
        "--to",
        "2017-07-02T00",
        "--out",
        "bob.keyset",
    ]);
    assert_eq!(r.code, EXIT_UNAUTHORIZED);
    // The slot ending at 07-02T00 is the last hour of July 1.
    assert_eq!(r.stderr, "error: InsufficientAuthority: uncovered a/b/* @ 2017/Jul/01/*\n");
    let out = w.ok(&[
        "--store",
        "alice.keystore",
        "delegate",
        "--uri",
        "a/b/*",
        "--from",
        "2017-06-20T00",
        "--to",
        "2017-06-30T00",
        "--out",
        "bob.keyset",
    ]);
    assert!(out.starts_with("10 keys\n"), "{out}");
    w.ok(&["--store", "bob.keystore", "accept", "bob.keyset"]);
    w.ok(&["encrypt", "--uri", "a/b/c", "--at", "2017-06-25T12", "--in", "plain.txt", "--out", "m.msg"]);
    assert_eq!(w.ok(&["--store", "bob.keystore", "decrypt", "--in", "m.msg"]), "the lab is 21 degrees");
}

#[test]
fn revocation_flow() {
    let w = Workdir::new();
    w.ok(&["--store", "auth.keystore", "init", "--uri-slots", "6", "--time-slots", "4", "--revocation-slots", "2"]);
    for (who, leaves) in [("alice", "1..2"), ("bob", "3..4")] {
        let ks = format!("{who}.keyset");
        let store = format!("{who}.keystore");
        w.ok(&[
            "--store",
            "auth.keystore",
            "delegate",
            "--uri",
            "a/*",
            "--from",
            "2017-06-01T00",
            "--to",
            "2017-07-01T00",
            "--leaves",
            leaves,
            "--out",
            &ks,
        ]);
        w.ok(&["--store", &store, "accept", &ks]);
    }
    assert!(w.ok(&["inspect", "bob.keyset"]).contains("a/* @ 2017/Jun/* leaves 3..4"));
    w.write("plain.txt", b"secret");
    let out = w.ok(&[
        "--store",
        "alice.keystore",
        "revoke",
        "--list",
        "r.revlist",
        "--prefix",
        "a/*",
        "--leaves",
        "1..2",
        "--prove",
    ]);
    assert_eq!(out, "revoked leaves 1..2 under a/* (epoch 1)\n");
    w.ok(&["verify", "--revocations", "r.revlist"]);
    w.ok(&[
        "encrypt",
        "--uri",
        "a/x",
        "--at",
        "2017-06-08T06",
        "--in",
        "plain.txt",
        "--out",
        "m.msg",
        "--revocations",
        "r.revlist",
    ]);
    w.fails(&["--store", "alice.keystore", "decrypt", "--in", "m.msg"], EXIT_UNAUTHORIZED, "Revoked");
    assert_eq!(w.ok(&["--store", "bob.keystore", "decrypt", "--in", "m.msg"]), "secret");

    // Bob holds no bundle for leaves 1..2 and cannot prove that revocation.
    w.fails(
        &["--store", "bob.keystore", "revoke", "--list", "r.revlist", "--prefix", "a/*", "--leaves", "1..2", "--prove"],
        EXIT_UNAUTHORIZED,
        "NoMatchingKey",
    );
    let out = w.ok(&["unrevoke", "--list", "r.revlist", "--prefix", "a/*", "--leaves", "1..2"]);
    assert_eq!(out, "unrevoked leaves 1..2 under a/* (epoch 2)\n");
    w.ok(&[
        "encrypt",
        "--uri",
        "a/x",
        "--at",
        "2017-06-08T06",
        "--in",
        "plain.txt",
        "--out",
        "m2.msg",
        "--revocations",
        "r.revlist",
    ]);
    assert_eq!(w.ok(&["--store", "alice.keystore", "decrypt", "--in", "m2.msg"]), "secret");
    w.fails(&["revoke", "--list", "r.revlist", "--prefix", "a/*", "--leaves", "2..5"], EXIT_UNAUTHORIZED, "OutOfRange");
    w.fails(&["revoke", "--list", "r.revlist", "--prefix", "a/*", "--leaves", "0..1"], EXIT_MALFORMED, "OutOfRange");
}

#[test]
fn epoch_integrity_flow() {
    let w = Workdir::new();
    w.with_alice(&[]);
    let out = w.ok(&[
        "--store",
        "alice.keystore",
        "sign-epoch",
        "--uri",
        "a/b",
        "--at",
        "2017-06-08T06",
        "--length",
        "4",
        "--header-out",
        "e.header",
        "--chain-out",
        "e.chain",
    ]);
    assert_eq!(out, "epoch a/b @ 2017/Jun/08/06: 4 messages\n");
    for i in 0..4 {
        let m = format!("m{i}.msg");
        w.ok(&[
            "encrypt",
            "--uri",
            "a/b",
            "--at",
            "2017-06-08T06",
            "--in",
            "plain.txt",
            "--out",
            &m,
            "--epoch-chain",
            "e.chain",
        ]);
        let v = w.ok(&["verify", "--header", "e.header", "--in", &m]);
        assert!(v.ends_with(&format!("message ok: index {i}\n")), "{v}");
        w.ok(&["--store", "alice.keystore", "decrypt", "--in", &m, "--header", "e.header"]);
    }
    assert!(w.ok(&["inspect", "e.chain"]).contains("4 of 4 messages used"));
    w.fails(
        &[
            "encrypt",
            "--uri",
            "a/b",
            "--at",
            "2017-06-08T06",
            "--in",
            "plain.txt",
            "--out",
            "m4.msg",
            "--epoch-chain",
            "e.chain",
        ],
        EXIT_CRYPTO,
        "ChainExhausted",
    );
    w.fails(
        &[
            "encrypt",
            "--uri",
            "a/b",
            "--at",
            "2017-06-08T07",
            "--in",
            "plain.txt",
            "--out",
            "m4.msg",
            "--epoch-chain",
            "e.chain",
        ],
        EXIT_MALFORMED,
        "InvalidArgument",
    );
    w.fails(&["--store", "alice.keystore", "decrypt", "--in", "m0.msg"], EXIT_MALFORMED, "InvalidArgument");

    // A flipped commitment byte breaks the header signature.
    let mut header = fs::read(w.path("e.header")).unwrap();
    let n = header.len();
    header[n - 200] ^= 1;
    w.write("bad.header", &header);
    w.fails(&["verify", "--header", "bad.header"], EXIT_CRYPTO, "VerificationFailed");
    // A message tagged in one epoch does not verify against another.
    w.ok(&[
        "--store",
        "auth.keystore",
        "sign-epoch",
        "--uri",
        "a/b",
        "--at",
        "2017-06-08T06",
        "--header-out",
        "f.header",
        "--chain-out",
        "f.chain",
    ]);
    w.fails(&["verify", "--header", "f.header", "--in", "m0.msg"], EXIT_CRYPTO, "VerificationFailed");
    // Alice holds no key for b/*.
    w.fails(
        &[
            "--store",
            "alice.keystore",
            "sign-epoch",
            "--uri",
            "b/c",
            "--at",
            "2017-06-08T06",
            "--header-out",
            "x",
            "--chain-out",
            "y",
        ],
        EXIT_UNAUTHORIZED,
        "NoSigningAuthority",
    );
}

#[test]
fn malformed_inputs_exit_3() {
    let w = Workdir::new();
    w.with_alice(&[]);
    w.write("junk.msg", b"JEDI but not really");
    w.fails(&["--store", "alice.keystore", "decrypt", "--in", "junk.msg"], EXIT_MALFORMED, "MalformedFile");
    w.fails(&["--store", "alice.keystore", "decrypt", "--in", "missing.msg"], EXIT_MALFORMED, "Io");
    w.fails(&["--store", "alice.keystore", "accept", "jedi.params"], EXIT_MALFORMED, "expected a keyset file");
    w.fails(&["encrypt", "--uri", "a/b", "--at", "2017-13-01T00", "--out", "x"], EXIT_MALFORMED, "InvalidTime");
    w.fails(
        &["encrypt", "--uri", "a/*", "--at", "2017-06-01T00", "--in", "plain.txt", "--out", "x"],
        EXIT_MALFORMED,
        "InvalidUri",
    );
    w.fails(&["frobnicate"], EXIT_MALFORMED, "unrecognized subcommand");

    // A key set whose key elements were altered fails the well-formedness check.
    let mut ks = fs::read(w.path("alice.keyset")).unwrap();
    let n = ks.len();
    ks[n - 60] ^= 0x01;
    w.write("bad.keyset", &ks);
    let r = w.run(&["--store", "fresh.keystore", "accept", "bad.keyset"]);
    assert_eq!(r.code, EXIT_MALFORMED, "{}", r.stderr);
    assert!(["MalformedKey", "MalformedEncoding"].iter().any(|e| r.stderr.contains(e)), "{}", r.stderr);
    assert!(!w.path("fresh.keystore").exists());
}

#[test]
fn tampered_payload_is_an_auth_failure() {
    let w = Workdir::new();
    w.with_alice(&[]);
    w.ok(&["encrypt", "--uri", "a/b", "--at", "2017-06-08T06", "--in", "plain.txt", "--out", "m.msg"]);
    let mut m = fs::read(w.path("m.msg")).unwrap();
    *m.last_mut().unwrap() ^= 0x80;
    w.write("bad.msg", &m);
    w.fails(&["--store", "alice.keystore", "decrypt", "--in", "bad.msg"], EXIT_CRYPTO, "AuthFailure");
}

#[test]
fn ratchet_forgets_the_past() {
    let w = Workdir::new();
    w.with_alice(&[]);
    w.ok(&["encrypt", "--uri", "a/b", "--at", "2017-06-08T06", "--in", "plain.txt", "--out", "early.msg"]);
    w.ok(&["encrypt", "--uri", "a/b", "--at", "2017-06-20T06", "--in", "plain.txt", "--out", "late.msg"]);
    // Kept: the slot ending at the ratchet time (Jun 14, hour 24) and June 15 to 30.
    let out = w.ok(&["--store", "alice.keystore", "--now", "2017-06-15T00", "ratchet"]);
    assert_eq!(out, "ratcheted to 2017-06-15T00: 1 keys before, 17 after\n");
    w.fails(&["--store", "alice.keystore", "decrypt", "--in", "early.msg"], EXIT_UNAUTHORIZED, "NoMatchingKey");
    w.ok(&["--store", "alice.keystore", "decrypt", "--in", "late.msg"]);
}

#[cfg(unix)]
#[test]
fn key_files_are_owner_only() {
    use std::os::unix::fs::PermissionsExt;
    let w = Workdir::new();
    w.with_alice(&[]);
    let mode = |p: &Path| fs::metadata(p).unwrap().permissions().mode() & 0o777;
    for f in ["auth.keystore", "alice.keystore", "alice.keyset"] {
        assert_eq!(mode(&w.path(f)), 0o600, "{f}");
    }
}

#[test]
fn bench_prints_csv() {
    let w = Workdir::new();
    let out = w.ok(&["bench", "--slots", "2", "--iterations", "2", "--bundle-ranges", "1,3", "--tree-height", "3"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "operation,slots,mean-latency,p95");
    assert_eq!(lines.len(), 1 + 7 + 2);
    for l in &lines[1..] {
        let cells: Vec<&str> = l.split(',').collect();
        assert_eq!(cells.len(), 4, "{l}");
        assert!(cells[2].parse::<f64>().unwrap() >= 0.0 && cells[3].parse::<f64>().is_ok());
    }
    assert!(lines[9].starts_with("derive_range_bundle,3,"));
}

#[test]
fn simulate_prints_transcript() {
    let w = Workdir::new();
    w.write(
        "s.toml",
        br#"
        [hierarchy]
        [[delegation]]
        from = "authority"
        to = "r"
        uri = "x/*"
        start = "2017-06-08T00"
        end = "2017-06-09T00"
        [[publisher]]
        name = "p"
        uri = "x/y"
        start = "2017-06-08T03"
        messages = 5
        [[subscriber]]
        name = "r"
        filter = "x/*"
        "#,
    );
    let csv = w.ok(&["simulate", "s.toml", "--csv"]);
    assert!(csv.starts_with("actor,operation,phase,count,"));
    assert!(csv.contains("\nr,decrypt,usual,4,"));
    let table = w.ok(&["simulate", "s.toml"]);
    assert!(table.contains("5 published, 5 delivered, 0 dropped"));
    w.write("bad.toml", b"[hierarchy]\nuri_slots = \"many\"\n");
    w.fails(&["simulate", "bad.toml"], EXIT_MALFORMED, "ScenarioConfigError");
}

#[test]
fn help_lists_every_command() {
    let w = Workdir::new();
    let help = w.ok(&["--help"]);
    for cmd in [
        "init",
        "delegate",
        "accept",
        "encrypt",
        "decrypt",
        "sign-epoch",
        "verify",
        "revoke",
        "unrevoke",
        "ratchet",
        "bench",
        "simulate",
        "inspect",
    ] {
        assert!(help.contains(&format!("  {cmd} ")), "{cmd} missing from help");
    }
    assert!(help.contains("Exit codes"));
}

#[test]
fn exit_code_per_error_class() {
    use jedi_core::Error as C;
    let cases: Vec<(Error, i32)> = vec![
        (C::InsufficientAuthority { uncovered: vec![] }.into(), EXIT_UNAUTHORIZED),
        (C::NoMatchingKey.into(), EXIT_UNAUTHORIZED),
        (C::Revoked.into(), EXIT_UNAUTHORIZED),
        (C::NotAMatch.into(), EXIT_UNAUTHORIZED),
        (C::NotExtendable(3).into(), EXIT_UNAUTHORIZED),
        (C::NonDelegable.into(), EXIT_UNAUTHORIZED),
        (C::OutOfRange.into(), EXIT_UNAUTHORIZED),
        (C::NoSigningAuthority.into(), EXIT_UNAUTHORIZED),
        (C::AuthFailure.into(), EXIT_CRYPTO),
        (C::ChainExhausted.into(), EXIT_CRYPTO),
        (C::IndexOutOfOrder { got: 1, last: 2 }.into(), EXIT_CRYPTO),
        (Error::VerificationFailed("x".into()), EXIT_CRYPTO),
        (C::InvalidLength("x").into(), EXIT_MALFORMED),
        (C::MalformedEncoding("x").into(), EXIT_MALFORMED),
        (C::PatternMismatch.into(), EXIT_MALFORMED),
        (C::NoSignatureSlot.into(), EXIT_MALFORMED),
        (C::UriTooLong { len: 9, slots: 8 }.into(), EXIT_MALFORMED),
        (C::InvalidUri("x".into()).into(), EXIT_MALFORMED),
        (C::InvalidTime("x".into()).into(), EXIT_MALFORMED),
        (C::InvalidConfig("x").into(), EXIT_MALFORMED),
        (C::MalformedKey.into(), EXIT_MALFORMED),
        (C::MalformedCiphertext("x").into(), EXIT_MALFORMED),
        (C::UnknownHierarchy.into(), EXIT_MALFORMED),
        (Error::MalformedFile("x".into()), EXIT_MALFORMED),
        (Error::Scenario("x".into()), EXIT_MALFORMED),
        (Error::InvalidArgument("x".into()), EXIT_MALFORMED),
        (Error::Io { path: "p".into(), source: std::io::ErrorKind::NotFound.into() }, EXIT_MALFORMED),
    ];
    for (e, code) in cases {
        assert_eq!(e.exit_code(), code, "{e}");
        assert!(e.to_string().starts_with(e.name()), "{e}");
    }
}
