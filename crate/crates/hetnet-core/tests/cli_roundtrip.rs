//! CLI behavior: exit codes, sidecar contents, and golden-file checks that
//! pin the CSV formats byte for byte.

use hetnet_core::cli::{self, EXIT_OK, EXIT_USAGE};
use std::path::Path;

const TINY_CONFIG: &str = "preset=indoor, seed=7, trials=2\n\
    phantom_cells=2, macro_users=3, users_per_phantom=2, subcarriers=4\n\
    [sweep]\npoints=3\n";

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["hetnet"];
    argv.extend_from_slice(args);
    cli::run_command(argv)
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["simulate", "--preset", "underwater"]), EXIT_USAGE);
    assert_eq!(run(&["simulate", "--config", "/nonexistent/path.cfg"]), EXIT_USAGE);
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(&["--help"]), EXIT_OK);
}

#[test]
fn sidecar_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.cfg");
    std::fs::write(&cfg_path, TINY_CONFIG).unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        run(&[
            "simulate",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        EXIT_OK
    );
    let meta = std::fs::read_to_string(out.join("run_meta.txt")).unwrap();
    assert!(meta.contains("command = simulate"));
    assert!(meta.contains("master_seed = 7"));
    // The canonical config embedded in the sidecar parses back to the same
    // run (same hash), so the CSVs are reproducible from the sidecar alone.
    let canonical: String = meta
        .lines()
        .skip_while(|l| !l.starts_with("[scenario]"))
        .collect::<Vec<_>>()
        .join("\n");
    let reparsed = cli::parse_config(&canonical).unwrap();
    let first = std::fs::read(out.join("trials.csv")).unwrap();
    let out2 = dir.path().join("out2");
    let mut replay = reparsed.clone();
    replay.out_dir = out2.clone();
    let text = replay.serialize();
    let cfg2_path = dir.path().join("replay.cfg");
    std::fs::write(&cfg2_path, text).unwrap();
    assert_eq!(
        run(&["simulate", "--config", cfg2_path.to_str().unwrap()]),
        EXIT_OK
    );
    let second = std::fs::read(out2.join("trials.csv")).unwrap();
    assert_eq!(first, second);
}

fn golden_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden"))
}

/// Regenerate with:
///   HETNET_BLESS_GOLDEN=1 cargo test -p hetnet-core --test cli_roundtrip
#[test]
fn golden_csv_formats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.cfg");
    std::fs::write(&cfg_path, TINY_CONFIG).unwrap();

    let produced: [(&str, &[&str]); 4] = [
        ("simulate", &["trials.csv", "allocations.csv"]),
        ("sweep", &["sweep.csv"]),
        ("trace", &["trace_f1.csv", "trace_f2.csv"]),
        ("compare", &["compare.csv", "compare_trace.csv"]),
    ];
    let bless = std::env::var("HETNET_BLESS_GOLDEN").is_ok();
    for (cmd, files) in produced {
        let out = dir.path().join(cmd);
        assert_eq!(
            run(&[
                cmd,
                "--config",
                cfg_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap()
            ]),
            EXIT_OK,
            "{cmd} failed"
        );
        for file in files {
            let got = std::fs::read(out.join(file)).unwrap();
            let golden_path = golden_dir().join(file);
            if bless {
                std::fs::create_dir_all(golden_dir()).unwrap();
                std::fs::write(&golden_path, &got).unwrap();
                continue;
            }
            let want = std::fs::read(&golden_path)
                .unwrap_or_else(|e| panic!("missing golden {}: {e}", golden_path.display()));
            assert_eq!(
                got,
                want,
                "{file} drifted from its golden copy (re-bless deliberately if the format changed)"
            );
        }
    }
}
