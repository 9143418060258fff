use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn semindex(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semindex")).env("SEMINDEX_STORE", store).args(args).output().unwrap()
}

fn ok(store: &Path, args: &[&str]) -> String {
    let out = semindex(store, args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn index_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["anamnesis", "pain"] {
        let file = data(&format!("{name}.ch"));
        let got = ok(dir.path(), &["index", file.to_str().unwrap()]);
        assert_eq!(got, std::fs::read_to_string(data(&format!("{name}.idx"))).unwrap());
        // byte-identical on repetition
        assert_eq!(ok(dir.path(), &["index", file.to_str().unwrap()]), got);
    }
    let pain = std::fs::read_to_string(data("pain.idx")).unwrap();
    assert!(pain.contains("([0,x,0] \"localization\" ([0,x,0,0] [0,x,0,1] [0,x,0,2]))"));
}

#[test]
fn check_reports_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let out = semindex(dir.path(), &["check", data("cycle.ch").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "dependency cycle: fever -> infection -> fever\n");
    assert_eq!(ok(dir.path(), &["check", data("pain.ch").to_str().unwrap()]), "correct  14  10\n");
    let out = semindex(dir.path(), &["index", data("cycle.ch").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ok(dir.path(), &["query", "--axis", "A", "--key", "[0]"]), "");
    assert_eq!(semindex(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(semindex(dir.path(), &["query", "--axis", "A"]).status.code(), Some(2));
    assert_eq!(semindex(dir.path(), &["query", "--axis", "A", "--key", "[1,"]).status.code(), Some(1));
    assert_eq!(semindex(dir.path(), &["index", "/nonexistent.ch"]).status.code(), Some(1));
    assert_eq!(semindex(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn store_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path();
    ok(s, &["index", "--register", data("anamnesis.ch").to_str().unwrap()]);
    let ts = "2026-03-01T10:00:00Z";
    let key = ok(s, &["episode", "add", "--id", "p1", "--ts", ts, "--situation", "(A[0,0,0,1])", "--negated", "(A[0,1])"]);
    assert_eq!(key, "p1@2026-03-01T10:00:00.000000000Z\n");
    ok(s, &["episode", "add", "--id", "p2", "--ts", ts, "--situation", "(A[0,0,2,1])"]);

    let hits = ok(s, &["--format", "lines", "query", "--axis", "A", "--key", "[0,0]"]);
    assert_eq!(
        hits,
        "p1@2026-03-01T10:00:00.000000000Z\tA\t[0,0,0,1]\taffirmed\t-\t-\n\
         p2@2026-03-01T10:00:00.000000000Z\tA\t[0,0,2,1]\taffirmed\t-\t-\n"
    );
    assert_eq!(ok(s, &["query", "--axis", "A", "--key", "[0,1]"]).lines().count(), 1);

    ok(s, &["dconcepts", "put", data("anamnesis.dc").to_str().unwrap()]);
    assert_eq!(ok(s, &["infer", "--situation", "(A[0,0,0,1])"]), "headache\n");
    let from_file = ok(s, &["infer", "--situation", "(A[0,1])", "--file", data("anamnesis.dc").to_str().unwrap()]);
    assert_eq!(from_file, "mood\n");

    // dry run leaves the store alone
    let dry = ok(s, &["insert-node", "--axis", "A", "--parent", "anamnesis", "--concept", "history"]);
    assert_eq!(dry, "version  0  1\nADD \"history\" [0,2]\n");
    let dry_again = ok(s, &["insert-node", "--axis", "A", "--parent", "anamnesis", "--concept", "history"]);
    assert_eq!(dry, dry_again);

    // moving "pain pattern" under "feeling" reindexes it and everything below
    let applied =
        ok(s, &["insert-node", "--axis", "A", "--parent", "anamnesis > feeling", "--concept", "pain pattern", "--remap"]);
    assert!(applied.starts_with("version  0  1\n"), "{applied}");
    assert!(applied.contains("MOD \"head\" [0,0,0,1] [0,2,0,0,1]\n"), "{applied}");
    // p1's head and p2's intensity move, p1's negated feeling stays
    assert!(applied.ends_with("remap  2  1  0\n"), "{applied}");
    let p1 = ok(s, &["episode", "get", "--id", "p1"]);
    assert!(p1.contains("  [0,2,0,0,1]  affirmed"), "{p1}");

    // deleting "feeling" removes its subtree, including the new occurrence
    let deleted = ok(s, &["delete-node", "--axis", "A", "--node", "anamnesis > feeling", "--remap"]);
    assert!(deleted.starts_with("version  1  2\nDEL \"feeling\" [0,1]\n"), "{deleted}");
    assert!(deleted.ends_with("remap  0  2  1\n"), "{deleted}");
    let p1 = ok(s, &["episode", "get", "--id", "p1"]);
    assert!(p1.contains("  [0,1]  negated  -  orphaned"), "{p1}");
    assert_eq!(ok(s, &["query", "--axis", "A", "--key", "[0,1]"]), "");

    let case = ok(s, &["cbr", "add", "--problem", "p2@2026-03-01T10:00:00Z", "--solution", "(A[0,2,0,2,1])", "--score", "1"]);
    assert_eq!(case, "1\n");
    let out = semindex(s, &["cbr", "add", "--problem", "nobody@2026-03-01T10:00:00Z"]);
    assert_eq!(out.status.code(), Some(1));
    let ranked = ok(s, &["cbr", "retrieve", "--situation", "(A[0,2,0,2,1])", "--k", "3"]);
    assert_eq!(ranked, "1  1.000000  (A[0,2,0,2,1])\n");
}
