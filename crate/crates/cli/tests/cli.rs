use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hexdiary::geojson::{load_layer, validate_feature_collection};
use hexdiary::homework::read_pairs_csv;
use hexdiary::ingest::StatsSummary;
use hexdiary::synth::GroundTruthLedger;
use hexdiary::UserType;

fn hexdiary(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hexdiary"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hexdiary(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small world without suppression in `dir/world`.
fn world(dir: &Path) -> PathBuf {
    let w = dir.join("world");
    ok(&[
        "synth",
        "--seed",
        "7",
        "--n-hexes",
        "160",
        "--n-agents",
        "1200",
        "--cohort-size",
        "30",
        "--suppression-threshold",
        "1",
        "--out",
        p(&w),
    ]);
    w
}

#[test]
fn homework_on_synth_output_equals_ledger_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let w = world(dir.path());
    let out = dir.path().join("out");
    ok(&["homework", "--od", p(&w.join("od.csv")), "--out", p(&out)]);
    let text = fs::read_to_string(out.join("homework_pairs.csv")).unwrap();
    let detected: BTreeSet<_> = read_pairs_csv(text.as_bytes(), "pairs")
        .unwrap()
        .into_iter()
        .map(|p| (p.home, p.work))
        .collect();
    let ledger = GroundTruthLedger::load(w.join("ledger.json")).unwrap();
    assert_eq!(detected, ledger.expected_pairs(10));
    assert!(!detected.is_empty());
}

#[test]
fn diff_layers_are_antisymmetric_after_reload() {
    let dir = tempfile::tempdir().unwrap();
    let w = world(dir.path());
    let out = dir.path().join("out");
    let od = w.join("od.csv");
    ok(&[
        "diff",
        "--od",
        p(&od),
        "--a",
        "4",
        "--b",
        "7",
        "--out",
        p(&out),
    ]);
    ok(&[
        "diff",
        "--od",
        p(&od),
        "--a",
        "7",
        "--b",
        "4",
        "--out",
        p(&out),
    ]);
    let ab = load_layer(out.join("diff_4_7.csv")).unwrap();
    let ba = load_layer(out.join("diff_7_4.csv")).unwrap();
    assert_eq!(ab.keys().collect::<Vec<_>>(), ba.keys().collect::<Vec<_>>());
    for (hex, v) in &ab {
        assert_eq!(-v, ba[hex], "{hex}");
    }
}

#[test]
fn stats_match_the_ledger_summary() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("world");
    ok(&[
        "synth",
        "--n-hexes",
        "160",
        "--n-agents",
        "1200",
        "--out",
        p(&w),
    ]);
    let ledger = GroundTruthLedger::load(w.join("ledger.json")).unwrap();
    let out = dir.path().join("out");
    for ut in [UserType::Worker, UserType::All] {
        let stdout = ok(&[
            "stats",
            "--od",
            p(&w.join("od.csv")),
            "--user-type",
            ut.as_str(),
            "--out",
            p(&out),
        ]);
        let expected = StatsSummary::of_counts(
            ledger
                .emitted_records()
                .filter(|r| r.user_type == ut)
                .map(|r| r.count),
        )
        .unwrap();
        let row: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[0], ut.as_str());
        assert_eq!(row[1].parse::<u64>().unwrap(), expected.count);
        assert_eq!(row[2].parse::<f64>().unwrap(), expected.mean);
        assert_eq!(row[3].parse::<f64>().unwrap(), expected.std);
        assert_eq!(row[4].parse::<u32>().unwrap(), expected.min);
        assert_eq!(row[5].parse::<u32>().unwrap(), expected.max);
        assert!(expected.min >= 22);
    }
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

/// Runs every subcommand into `out`, returning their stdout.
fn run_all(w: &Path, out: &Path, scratch: &Path) -> Vec<String> {
    let od = w.join("od.csv");
    let ff = w.join("footfall.csv");
    let tx = scratch.join("tx.txt");
    fs::write(&tx, "a b c\nb c\na c\na b c\n").unwrap();
    let mut stdout = vec![
        ok(&[
            "synth",
            "--seed",
            "3",
            "--n-hexes",
            "80",
            "--n-agents",
            "500",
            "--cohort-size",
            "25",
            "--out",
            p(&out.join("synth")),
        ]),
        ok(&["ingest-check", "--od", p(&od), "--ff", p(&ff)]),
        ok(&["stats", "--od", p(&od), "--out", p(out)]),
        ok(&["homework", "--od", p(&od), "--out", p(out)]),
        ok(&[
            "diary",
            "--od",
            p(&od),
            "--ff",
            p(&ff),
            "--weekday",
            "2",
            "--out",
            p(out),
        ]),
        ok(&[
            "profile",
            "--od",
            p(&od),
            "--role",
            "origin",
            "--out",
            p(out),
        ]),
        ok(&["dow", "--od", p(&od), "--out", p(out)]),
        ok(&[
            "diff",
            "--od",
            p(&od),
            "--a",
            "4",
            "--b",
            "7",
            "--out",
            p(out),
        ]),
        ok(&["topk", "--od", p(&od), "--k", "5", "--out", p(out)]),
        ok(&["mine", "--transactions", p(&tx), "--out", p(out)]),
    ];
    stdout.push(ok(&[
        "export-geojson",
        "--layer",
        p(&out.join("diff_4_7.csv")),
        "--boundaries",
        p(&w.join("boundaries.csv")),
        "--out",
        p(out),
    ]));
    stdout
}

#[test]
fn every_subcommand_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let w = world(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out_a = run_all(&w, &a, dir.path());
    let out_b = run_all(&w, &b, dir.path());
    assert_eq!(out_a, out_b);
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta, tb);
    assert_eq!(tree(&a.join("synth")), tree(&b.join("synth")));
    let names: Vec<&str> = ta.iter().map(|(n, _)| n.as_str()).collect();
    for expected in [
        "stats.csv",
        "homework_pairs.csv",
        "profile_origin.csv",
        "dow_totals.csv",
        "dow_summary.csv",
        "diff_4_7.csv",
        "diff_4_7.geojson",
        "topk_destination.csv",
        "itemsets.tsv",
    ] {
        assert!(
            names.contains(&expected),
            "{expected} missing from {names:?}"
        );
    }
    assert!(names
        .iter()
        .any(|n| n.starts_with("diary_") && n.ends_with("_2.json")));

    let geo: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("diff_4_7.geojson")).unwrap()).unwrap();
    let layer = load_layer(a.join("diff_4_7.csv")).unwrap();
    assert_eq!(validate_feature_collection(&geo), Ok(layer.len()));
}

#[test]
fn errors_are_one_line_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(
        &bad,
        "origin_hex,destination_hex,date,interval,user_type,count\n8a195da43687fff,8a195da4368ffff,2022-06-02,12,worker,30\n",
    )
    .unwrap();
    let out = hexdiary(&["stats", "--od", p(&bad), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: malformed: "), "{err}");
    assert!(err.contains("row 2"), "{err}");

    let out = hexdiary(&["stats", "--od", p(&dir.path().join("missing.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error: io: "));

    assert_eq!(hexdiary(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        hexdiary(&["stats", "--od", "x", "--bogus", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        hexdiary(&["diff", "--od", "x", "--a", "9", "--b", "1"])
            .status
            .code(),
        Some(2)
    );

    let out = hexdiary(&[
        "mine",
        "--transactions",
        p(&bad),
        "--min-support",
        "0",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error: domain: "));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let w = world(dir.path());
    let cfg = dir.path().join("run.conf");
    let out = dir.path().join("cfg_out");
    fs::write(
        &cfg,
        format!(
            "# shared settings\nod = {}\nout = {}\nmin_days = 40\nk = 3\n",
            p(&w.join("od.csv")),
            p(&out)
        ),
    )
    .unwrap();
    // min-days 40 exceeds the month: nothing qualifies
    assert_eq!(ok(&["homework", "--config", p(&cfg)]).trim(), "pairs 0");
    let stdout = ok(&["--config", p(&cfg), "homework", "--min-days", "10"]);
    assert_ne!(stdout.trim(), "pairs 0");
    // `k` only applies to topk
    assert_eq!(ok(&["topk", "--config", p(&cfg)]).lines().count(), 3);

    fs::write(&cfg, "colour = blue\n").unwrap();
    let out = hexdiary(&["homework", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error: config: "));
}

#[test]
fn help_documents_defaults() {
    for (sub, flags) in [
        (
            "homework",
            &[
                "--min-days",
                "[default: 10]",
                "[default: 3,4,5]",
                "[default: worker]",
            ][..],
        ),
        (
            "diary",
            &["--min-support", "max(2, ceil(n/2))", "[default: 4]"],
        ),
        (
            "synth",
            &[
                "--seed",
                "[default: 7]",
                "[default: 22]",
                "[default: 2022-06]",
            ],
        ),
        ("topk", &["--k", "[default: 10]", "[default: destination]"]),
        ("export-geojson", &["--layer", "--boundaries"]),
    ] {
        let help = ok(&[sub, "--help"]);
        for f in flags {
            assert!(help.contains(f), "{sub} help lacks {f}:\n{help}");
        }
    }
}
