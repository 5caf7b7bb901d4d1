use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn demo(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("demo")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn seqshap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqshap")).args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn manifest(out: &Path) -> Value {
    let mut name = out.file_name().unwrap().to_os_string();
    name.push(".manifest.json");
    read_json(&out.with_file_name(name))
}

struct Demo {
    dir: tempfile::TempDir,
    model: String,
}

impl Demo {
    fn new() -> Self {
        Demo {
            dir: tempfile::tempdir().unwrap(),
            model: format!("gru:{}", demo("gru.json")),
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn explain(&self, extra: &[&str], out: &Path) -> Output {
        let (input, schema, background) = (demo("events.csv"), demo("schema.json"), demo("background.json"));
        let mut args = vec![
            "explain",
            "--input",
            &input,
            "--schema",
            &schema,
            "--background",
            &background,
            "--model",
            &self.model,
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        seqshap(&args)
    }
}

#[test]
fn event_mode_on_demo_is_locally_accurate() {
    let d = Demo::new();
    let out = d.out("ev.json");
    let run = d.explain(&["--mode", "event", "--nsamples", "4096"], &out);
    assert!(run.status.success(), "{}", stderr(&run));
    let all = read_json(&out);
    let all = all.as_array().unwrap();
    assert_eq!(all.len(), 12);
    for e in all {
        let events = e["events"].as_array().unwrap();
        let sum: f64 = events.iter().map(|v| v["value"].as_f64().unwrap()).sum();
        let gap = sum + e["base_score"].as_f64().unwrap() - e["score"].as_f64().unwrap();
        assert!(gap.abs() < 1e-8, "{}: {gap}", e["entity"]);
        assert!(e["features"].as_array().unwrap().is_empty());
        assert!(e["cells"].as_array().unwrap().is_empty());
        // most recent event last, labelled 0
        assert_eq!(events.last().unwrap()["t"], 0);
        if e["prune_index"].as_u64().unwrap() > 0 {
            assert_eq!(events[0]["t"], "pruned");
        }
    }
}

#[test]
fn cell_mode_emits_only_cells_that_cover_the_grid() {
    let d = Demo::new();
    let out = d.out("cells.json");
    let run = d.explain(&["--mode", "cell", "--nsamples", "2048", "--theta", "0.01"], &out);
    assert!(run.status.success(), "{}", stderr(&run));
    for e in read_json(&out).as_array().unwrap() {
        assert!(e["events"].as_array().unwrap().is_empty());
        let cells = e["cells"].as_array().unwrap();
        let members: usize = cells.iter().map(|c| c["members"].as_array().unwrap().len()).sum();
        assert_eq!(members, 4 * e["n_events"].as_u64().unwrap() as usize);
        let sum: f64 = cells.iter().map(|c| c["value"].as_f64().unwrap()).sum();
        assert!((sum + e["base_score"].as_f64().unwrap() - e["score"].as_f64().unwrap()).abs() < 1e-8);
    }
}

#[test]
fn manifest_echoes_defaults() {
    let d = Demo::new();
    let out = d.out("all.json");
    let run = d.explain(&["--eta", "0.025", "--theta", "0.1", "--nsamples", "32000"], &out);
    assert!(run.status.success(), "{}", stderr(&run));
    let m = manifest(&out);
    assert_eq!(m["config"]["n_samples"], 32000);
    assert_eq!(m["config"]["eta"], 0.025);
    assert_eq!(m["config"]["theta"], 0.1);
    assert_eq!(m["config"]["seed"], 0);
    assert_eq!(m["config"]["mode"], "all");
    assert_eq!(m["config"]["model"], d.model.as_str());
    assert_eq!(m["inputs"]["input"], demo("events.csv"));
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["evaluations"].as_array().unwrap().len(), 12);
    assert!(m["wall_time_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn missing_background_is_a_data_error_naming_the_flag() {
    let d = Demo::new();
    let out = d.out("x.json");
    let run = seqshap(&[
        "explain",
        "--input",
        &demo("events.csv"),
        "--schema",
        &demo("schema.json"),
        "--model",
        &d.model,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(3));
    assert!(stderr(&run).contains("--background"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let run = seqshap(&["explain", "--frobnicate", "1"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(stderr(&run).contains("--frobnicate"));
}

#[test]
fn repeated_mode_is_a_usage_error() {
    let d = Demo::new();
    let run = d.explain(&["--mode", "event", "--mode", "cell"], &d.out("x.json"));
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn bad_flag_values_are_usage_errors() {
    let d = Demo::new();
    for extra in [["--eta", "-1"], ["--nsamples", "1"], ["--theta", "-0.5"], ["--mode", "sideways"]] {
        let run = d.explain(&extra, &d.out("x.json"));
        assert_eq!(run.status.code(), Some(1), "{extra:?}: {}", stderr(&run));
    }
    let run = seqshap(&["explain", "--model", "onnx:foo", "--out", "x"]);
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn help_and_version_succeed() {
    assert!(seqshap(&["--help"]).status.success());
    assert!(seqshap(&["--version"]).status.success());
}

#[test]
fn model_failures_exit_2() {
    let d = Demo::new();
    let missing = Demo {
        dir: tempfile::tempdir().unwrap(),
        model: "gru:/nonexistent/weights.json".into(),
    };
    let run = missing.explain(&[], &d.out("x.json"));
    assert_eq!(run.status.code(), Some(2), "{}", stderr(&run));

    let dead = Demo {
        dir: tempfile::tempdir().unwrap(),
        model: "proc:exit 0".into(),
    };
    let run = dead.explain(&[], &d.out("x.json"));
    assert_eq!(run.status.code(), Some(2), "{}", stderr(&run));
}

#[test]
fn malformed_data_exits_3() {
    let d = Demo::new();
    let bad = d.out("bad.csv");
    std::fs::write(&bad, "account,ts,amount,hour,merchant_risk,channel\na,1,oops,0,0,0\n").unwrap();
    let run = seqshap(&[
        "explain",
        "--input",
        bad.to_str().unwrap(),
        "--schema",
        &demo("schema.json"),
        "--background",
        &demo("background.json"),
        "--model",
        &d.model,
        "--out",
        d.out("x.json").to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(3));
    assert!(stderr(&run).contains("row 1"), "{}", stderr(&run));
}

#[test]
fn process_adapter_drives_explain() {
    // every sequence scores 0.5, so all attributions vanish
    let adapter = r#"proc:echo '{"type":"hello","protocol":1}'; while IFS= read -r l; do id=$(printf '%s' "$l" | sed 's/.*"id":\([0-9]*\).*/\1/'); n=$(printf '%s' "$l" | grep -o '\]\],\[\[' | wc -l); s=0.5; i=0; while [ $i -lt $n ]; do s="$s,0.5"; i=$((i+1)); done; printf '{"type":"scores","id":%s,"scores":[%s]}\n' "$id" "$s"; done"#;
    let d = Demo {
        dir: tempfile::tempdir().unwrap(),
        model: adapter.into(),
    };
    let out = d.out("p.json");
    let run = d.explain(&["--mode", "feature", "--nsamples", "64"], &out);
    assert!(run.status.success(), "{}", stderr(&run));
    for e in read_json(&out).as_array().unwrap() {
        assert_eq!(e["score"], 0.5);
        assert!(e["features"].as_array().unwrap().iter().all(|f| f["value"].as_f64().unwrap().abs() < 1e-12));
    }
}

#[test]
fn background_build_matches_bundled_file() {
    let d = Demo::new();
    let out = d.out("bg.json");
    let run = seqshap(&[
        "background",
        "build",
        "--data",
        &demo("events.csv"),
        "--schema",
        &demo("schema.json"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    assert_eq!(read_json(&out), read_json(Path::new(&demo("background.json"))));
    assert_eq!(manifest(&out)["command"], "background build");
}

#[test]
fn prune_scan_has_a_row_per_split() {
    let d = Demo::new();
    let out = d.out("scan.json");
    let run = seqshap(&[
        "prune",
        "scan",
        "--input",
        &demo("events.csv"),
        "--schema",
        &demo("schema.json"),
        "--background",
        &demo("background.json"),
        "--model",
        &d.model,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let scans = read_json(&out);
    let m = manifest(&out);
    for (s, count) in scans.as_array().unwrap().iter().zip(m["evaluations"].as_array().unwrap()) {
        let l = s["n_events"].as_u64().unwrap();
        let rows = s["rows"].as_array().unwrap();
        assert_eq!(rows.len() as u64, l - 1);
        assert_eq!(rows[0]["i"], 1);
        assert_eq!(count["evaluations"].as_u64().unwrap(), 2 * (l - 1) + 2);
    }
}

#[test]
fn report_global_reads_objects_and_arrays() {
    let d = Demo::new();
    let dir = d.out("exps");
    std::fs::create_dir(&dir).unwrap();
    let run = d.explain(&["--mode", "event", "--nsamples", "256"], &dir.join("batch.json"));
    assert!(run.status.success(), "{}", stderr(&run));
    let first = read_json(&dir.join("batch.json"))[0].clone();
    std::fs::write(dir.join("single.json"), first.to_string()).unwrap();

    let out = d.out("global.json");
    let run = seqshap(&[
        "report",
        "global",
        "--explanations",
        dir.to_str().unwrap(),
        "--nsamples",
        "32000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let r = read_json(&out);
    assert_eq!(r["n_sequences"], 13);
    assert!(r["event_attributions"].as_array().unwrap().iter().any(|e| e["t"] == 0));
}

#[test]
fn report_global_without_explanations_fails() {
    let d = Demo::new();
    let empty = d.out("none");
    std::fs::create_dir(&empty).unwrap();
    let run = seqshap(&[
        "report",
        "global",
        "--explanations",
        empty.to_str().unwrap(),
        "--out",
        d.out("g.json").to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(3));
}

#[test]
fn report_rsd_uses_consecutive_seeds() {
    let d = Demo::new();
    let out = d.out("rsd.json");
    let run = seqshap(&[
        "report",
        "rsd",
        "--repeats",
        "3",
        "--mode",
        "feature",
        "--input",
        &demo("events.csv"),
        "--schema",
        &demo("schema.json"),
        "--background",
        &demo("background.json"),
        "--model",
        &d.model,
        "--nsamples",
        "8",
        "--seed",
        "40",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let r = read_json(&out);
    assert_eq!(r["repeats"], 3);
    let study = &r["studies"][0];
    assert_eq!(study["seeds"], serde_json::json!([40, 41, 42]));
    assert_eq!(study["runs"].as_array().unwrap().len(), 3);
    assert!(r["mean_rsd"].as_f64().unwrap() >= 0.0);

    let run = seqshap(&["report", "rsd", "--repeats", "1", "--model", "gru:x", "--out", "y"]);
    assert_eq!(run.status.code(), Some(1));
}
