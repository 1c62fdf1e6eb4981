//! End-to-end determinism acceptance: the full pipeline on a 200-record
//! fixture corpus with the deterministic backend produces byte-identical
//! outputs across repeated runs and across --jobs 1 vs --jobs 8.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_babelkit")
}

struct Criterion {
    id: &'static str,
    name: &'static str,
}

impl Drop for Criterion {
    fn drop(&mut self) {
        let verdict = if std::thread::panicking() {
            "FAIL"
        } else {
            "PASS"
        };
        println!("ACCEPTANCE {} {}: {}", self.id, self.name, verdict);
    }
}

/// 200 records with dirty texture: undersized images, extreme aspect
/// ratios, short alt texts, planted duplicates.
fn write_fixture_corpus(path: &Path) {
    let subjects = [
        "a red torii gate under snow",
        "street food stall with lanterns at night",
        "fishermen repairing nets in the harbor",
        "a ceramic bowl painted with blue waves",
        "dancers in traditional dress at the festival",
        "terraced rice fields after the rain",
        "an old stone bridge crossing the river",
        "spice market with sacks of saffron and pepper",
    ];
    let mut lines = Vec::new();
    for i in 0..200u32 {
        let alt = if i % 17 == 0 {
            "tiny".to_string() // under the length floor
        } else {
            format!(
                "{} photographed in scene {}",
                subjects[(i as usize) % subjects.len()],
                i / 8
            )
        };
        let (w, h) = match i % 13 {
            0 => (64, 64),    // undersized
            1 => (1200, 200), // extreme aspect
            _ => (800, 600),
        };
        let mut record = serde_json::json!({
            "id": format!("rec-{i:04}"),
            "image_uri": format!("https://img.example/{:04}.jpg", i % 190), // some shared URIs
            "alt_text": alt,
            "width_px": w,
            "height_px": h,
        });
        if i % 29 == 0 && i > 0 {
            // exact duplicate of an earlier record modulo case/whitespace
            record["image_uri"] =
                serde_json::json!(format!("https://img.example/{:04}.jpg", (i - 29) % 190));
            record["alt_text"] = serde_json::json!(format!(
                "{}  photographed in scene {}",
                subjects[((i - 29) as usize) % subjects.len()].to_uppercase(),
                (i - 29) / 8
            ));
        }
        lines.push(record.to_string());
    }
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn run_ok(dir: &Path, jobs: usize, args: &[&str]) {
    let output = Command::new(binary())
        .current_dir(dir)
        .arg("--jobs")
        .arg(jobs.to_string())
        .arg("--seed")
        .arg("42")
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "babelkit {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

/// Run the whole pipeline inside `dir` with the given worker count.
fn run_pipeline(dir: &Path, jobs: usize) {
    write_fixture_corpus(&dir.join("raw.jsonl"));
    run_ok(
        dir,
        jobs,
        &[
            "ingest",
            "--in",
            "raw.jsonl",
            "--out",
            "records.jsonl",
            "--shards",
            "4",
        ],
    );
    run_ok(
        dir,
        jobs,
        &["filter", "--in", "records.jsonl", "--out", "filtered.jsonl"],
    );
    run_ok(
        dir,
        jobs,
        &[
            "curate",
            "--in",
            "filtered.jsonl",
            "--verdicts",
            "verdicts.jsonl",
            "--out",
            "curated.jsonl",
        ],
    );
    run_ok(
        dir,
        jobs,
        &[
            "recaption",
            "--in",
            "curated.jsonl",
            "--verdicts",
            "verdicts.jsonl",
            "--out",
            "captions.jsonl",
        ],
    );
    run_ok(
        dir,
        jobs,
        &[
            "generate",
            "--captions",
            "captions.jsonl",
            "--records",
            "curated.jsonl",
            "--out",
            "samples.jsonl",
        ],
    );

    // derive an English corpus for the translation stage (the generated
    // corpus is multilingual by design)
    let samples = std::fs::read_to_string(dir.join("samples.jsonl")).unwrap();
    let english: Vec<String> = samples
        .lines()
        .map(|line| {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            v["language"] = serde_json::json!("en");
            v.to_string()
        })
        .collect();
    std::fs::write(dir.join("samples_en.jsonl"), english.join("\n") + "\n").unwrap();

    run_ok(
        dir,
        jobs,
        &[
            "translate",
            "--in",
            "samples_en.jsonl",
            "--target",
            "ko",
            "--out",
            "translated.jsonl",
        ],
    );
    run_ok(
        dir,
        jobs,
        &[
            "validate",
            "--orig",
            "samples_en.jsonl",
            "--trans",
            "translated.jsonl",
        ],
    );
    run_ok(
        dir,
        jobs,
        &[
            "mix",
            "--in",
            "samples.jsonl",
            "--total",
            "12",
            "--english-fraction",
            "0.0",
            "--out",
            "mixed.txt",
            "--plan-out",
            "plan.json",
        ],
    );
    run_ok(
        dir,
        jobs,
        &["stats", "--in", "samples.jsonl", "--out", "stats.json"],
    );
    run_ok(
        dir,
        jobs,
        &[
            "sweep",
            "--total",
            "500000",
            "--ratios",
            "0.0,0.4,1.0",
            "--k-langs",
            "17",
            "--out-dir",
            "sweep",
        ],
    );
}

/// Every produced file, relative path -> bytes.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, into: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, into);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                into.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut files = BTreeMap::new();
    walk(dir, dir, &mut files);
    files
}

#[test]
fn c11_end_to_end_determinism() {
    let _c = Criterion {
        id: "C11",
        name: "end-to-end determinism (reruns and --jobs 1 vs 8)",
    };
    let start = Instant::now();

    let run_a = tempfile::tempdir().unwrap();
    let run_b = tempfile::tempdir().unwrap();
    let run_c = tempfile::tempdir().unwrap();
    run_pipeline(run_a.path(), 1);
    run_pipeline(run_b.path(), 1);
    run_pipeline(run_c.path(), 8);

    let a = snapshot(run_a.path());
    let b = snapshot(run_b.path());
    let c = snapshot(run_c.path());

    // sanity: the pipeline actually produced data at each stage
    assert!(!a["samples.jsonl"].is_empty(), "no samples generated");
    assert!(
        a.len() >= 20,
        "expected a full set of outputs, got {:?}",
        a.keys()
    );
    let curated = String::from_utf8_lossy(&a["curated.jsonl"]).lines().count();
    assert!(
        curated >= 10,
        "too few curated records ({curated}) to be meaningful"
    );

    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    assert_eq!(a.keys().collect::<Vec<_>>(), c.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert_eq!(bytes, &b[name], "rerun changed bytes of {name}");
        assert_eq!(bytes, &c[name], "--jobs 8 changed bytes of {name}");
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 60.0,
        "three pipeline runs took {elapsed}s, budget is 60s"
    );
}

// ---------------------------------------------------------------------------
// Exit-code contract
// ---------------------------------------------------------------------------

#[test]
fn stats_on_fixture_exits_zero_with_table() {
    let dir = tempfile::tempdir().unwrap();
    let sample = serde_json::json!({
        "id": "s1",
        "images": [],
        "conversations": [
            {"from": "human", "value": "hello"},
            {"from": "gpt", "value": "hi"}
        ],
        "language": "ja",
        "provenance": "fixture",
    });
    std::fs::write(dir.path().join("corpus.jsonl"), sample.to_string() + "\n").unwrap();
    let output = Command::new(binary())
        .current_dir(dir.path())
        .args(["stats", "--in", "corpus.jsonl"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("language"));
    assert!(stdout.contains("ja"));
    assert!(stdout.contains("100.0"));
}

#[test]
fn misspelled_config_key_exits_two_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "[curate]\nmax_subject_shore = 0.2\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("in.jsonl"), "").unwrap();
    let output = Command::new(binary())
        .current_dir(dir.path())
        .args(["--config", "run.toml", "stats", "--in", "in.jsonl"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("max_subject_shore"),
        "stderr must name the key: {stderr}"
    );
}

#[test]
fn missing_required_backend_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[backend]\nkind = \"http\"\n").unwrap();
    std::fs::write(dir.path().join("in.jsonl"), "").unwrap();
    let output = Command::new(binary())
        .current_dir(dir.path())
        .args(["--config", "run.toml", "stats", "--in", "in.jsonl"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("backend.endpoint"),
        "stderr must name the key path: {stderr}"
    );
}

#[test]
fn validate_on_corrupted_pairs_exits_one_with_class_counts() {
    let dir = tempfile::tempdir().unwrap();
    let orig = serde_json::json!({
        "id": "s1",
        "images": ["img://1"],
        "conversations": [
            {"from": "human", "value": "<image>\nPick one:\nA. cat\nB. dog\nC. bird"},
            {"from": "gpt", "value": "B. dog"}
        ],
        "language": "en",
        "provenance": "fixture",
    });
    // corruption: the option line "C." vanished in translation
    let trans = serde_json::json!({
        "id": "s1",
        "images": ["img://1"],
        "conversations": [
            {"from": "human", "value": "<image>\nWähle eins:\nA. Katze\nB. Hund"},
            {"from": "gpt", "value": "B. Hund"}
        ],
        "language": "de",
        "provenance": "fixture",
    });
    std::fs::write(dir.path().join("orig.jsonl"), orig.to_string() + "\n").unwrap();
    std::fs::write(dir.path().join("trans.jsonl"), trans.to_string() + "\n").unwrap();
    let output = Command::new(binary())
        .current_dir(dir.path())
        .args([
            "validate",
            "--orig",
            "orig.jsonl",
            "--trans",
            "trans.jsonl",
            "--out",
            "v.manifest.json",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let manifest = std::fs::read_to_string(dir.path().join("v.manifest.json")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(manifest["drops"]["MissingChoice"], serde_json::json!(1));
}

#[test]
fn ingest_over_malformed_budget_exits_one_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut lines: Vec<String> = (0..20)
        .map(|i| {
            serde_json::json!({
                "id": format!("r{i}"),
                "image_uri": "u",
                "alt_text": "t",
            })
            .to_string()
        })
        .collect();
    lines.push("{broken".to_string());
    lines.push("{also broken".to_string());
    std::fs::write(dir.path().join("raw.jsonl"), lines.join("\n") + "\n").unwrap();
    let output = Command::new(binary())
        .current_dir(dir.path())
        .args(["ingest", "--in", "raw.jsonl", "--out", "records.jsonl"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let manifest = std::fs::read_to_string(dir.path().join("records.jsonl.manifest.json")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(manifest["drops"]["Malformed"], serde_json::json!(2));
}

#[test]
fn unsupported_target_language_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("in.jsonl"), "").unwrap();
    let output = Command::new(binary())
        .current_dir(dir.path())
        .args([
            "translate",
            "--in",
            "in.jsonl",
            "--target",
            "xx",
            "--out",
            "out.jsonl",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

/// Re-running curate against an existing verdict store must not re-score:
/// the verdict file and outputs stay byte-identical.
#[test]
fn curate_resumes_from_persisted_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<String> = (0..30)
        .map(|i| {
            serde_json::json!({
                "id": format!("r{i:02}"),
                "image_uri": format!("img://{i}"),
                "alt_text": format!("a descriptive alt text about subject {i}"),
            })
            .to_string()
        })
        .collect();
    std::fs::write(dir.path().join("records.jsonl"), records.join("\n") + "\n").unwrap();
    let curate = |_: ()| {
        run_ok(
            dir.path(),
            1,
            &[
                "curate",
                "--in",
                "records.jsonl",
                "--verdicts",
                "verdicts.jsonl",
                "--out",
                "curated.jsonl",
            ],
        );
    };
    curate(());
    let verdicts_first = std::fs::read(dir.path().join("verdicts.jsonl")).unwrap();
    let curated_first = std::fs::read(dir.path().join("curated.jsonl")).unwrap();
    curate(());
    assert_eq!(
        verdicts_first,
        std::fs::read(dir.path().join("verdicts.jsonl")).unwrap()
    );
    assert_eq!(
        curated_first,
        std::fs::read(dir.path().join("curated.jsonl")).unwrap()
    );
}
