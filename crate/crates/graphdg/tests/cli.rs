use std::path::Path;
use std::process::{Command, Output};

const SPEC: &str = r#"
conformations = 30
burn_in = 1000
thin = 10
[[molecule]]
id = "ethane"
chain = "CC"
[[molecule]]
id = "methanol"
chain = "CO"
[[molecule]]
id = "ethanol"
chain = "CCO"
[[molecule]]
id = "ether"
chain = "COC"
[[molecule]]
id = "propane"
chain = "CCC"
"#;

const CONFIG: &str = r#"
[model]
message_passes = 2
hidden = [8]
readout_hidden = [8]
[training]
batch_size = 8
epochs = 3
max_batches_per_epoch = 2
[split]
fractions = [0.6, 0.2, 0.2]
"#;

fn graphdg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphdg")).current_dir(dir).args(args).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.toml"), SPEC).unwrap();
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    ok(graphdg(dir.path(), &["--seed", "2", "make-data", "--spec", "spec.toml", "--out", "data.jsonl"]));
    dir
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = graphdg(dir.path(), &["make-data", "--spec", "nope.toml", "--out", "d.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));
    let out = graphdg(dir.path(), &["train", "--data", "absent.jsonl", "--out", "ck.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.jsonl"));
    assert_eq!(graphdg(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn make_data_is_reproducible_and_reports_counts() {
    let dir = setup();
    let again = ok(graphdg(dir.path(), &["--seed", "2", "make-data", "--spec", "spec.toml", "--out", "again.jsonl"]));
    assert!(again.starts_with("molecules=5 records=150"), "{again}");
    assert_eq!(read(dir.path(), "data.jsonl"), read(dir.path(), "again.jsonl"));
    assert_eq!(read(dir.path(), "data.energy.toml"), read(dir.path(), "again.energy.toml"));
    ok(graphdg(dir.path(), &["--seed", "3", "make-data", "--spec", "spec.toml", "--out", "other.jsonl"]));
    assert_ne!(read(dir.path(), "data.jsonl"), read(dir.path(), "other.jsonl"));
}

#[test]
fn interrupted_training_resumes_to_the_same_bytes() {
    let dir = setup();
    let d = dir.path();
    let train = |out: &str, extra: &[&str]| {
        let mut args = vec!["--config", "run.toml", "train", "--data", "data.jsonl", "--out", out];
        args.extend_from_slice(extra);
        ok(graphdg(d, &args))
    };
    let line = train("full.json", &[]);
    assert!(line.starts_with("epochs=3/3"), "{line}");
    assert!(train("part.json", &["--stop-after", "1"]).starts_with("epochs=1/3"));
    train("part.json", &["--resume"]);
    assert_eq!(read(d, "part.json"), read(d, "full.json"));
    assert_eq!(read(d, "part.json.metrics.jsonl"), read(d, "full.json.metrics.jsonl"));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = setup();
    let d = dir.path();
    let mut outputs = Vec::new();
    for t in ["1", "2"] {
        let ck = format!("ck{t}.json");
        let gen = format!("gen{t}.jsonl");
        let ev = format!("eval{t}");
        ok(graphdg(d, &["--threads", t, "--config", "run.toml", "train", "--data", "data.jsonl", "--out", &ck]));
        let line =
            ok(graphdg(d, &["--threads", t, "generate", "--checkpoint", &ck, "--data", "data.jsonl", "--out", &gen, "-n", "5"]));
        assert!(line.contains("triangle_consistency_rate=") && line.contains("success_rate="), "{line}");
        let model = format!("model={gen}");
        let text = ok(graphdg(d, &["--threads", t, "evaluate", "--truth", "data.jsonl", "--generated", &model, "--out", &ev]));
        assert!(text.contains("marginal MMD^2"));
        outputs.push([read(d, &ck), read(d, &gen), read(d, &format!("{ev}/rows.tsv")), read(d, &format!("{ev}/summary.json"))]);
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn estimate_one_and_error_codes() {
    let dir = setup();
    let d = dir.path();
    ok(graphdg(d, &["--config", "run.toml", "train", "--data", "data.jsonl", "--out", "ck.json"]));
    ok(graphdg(d, &["generate", "--checkpoint", "ck.json", "--data", "data.jsonl", "--out", "gen.jsonl", "-n", "4", "--molecules", "all"]));
    let text = ok(graphdg(d, &["estimate", "--generated", "gen.jsonl", "--energy", "data.energy.toml", "--observable", "one"]));
    let rows: Vec<serde_json::Value> = serde_json::from_str(&text).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r["estimate"] == 1.0));

    let bad = graphdg(d, &["estimate", "--generated", "gen.jsonl", "--energy", "data.energy.toml", "--observable", "volume"]);
    assert_eq!(bad.status.code(), Some(2));

    std::fs::write(d.join("hot.toml"), format!("step_size = 40.0\n{SPEC}")).unwrap();
    let hot = graphdg(d, &["make-data", "--spec", "hot.toml", "--out", "hot.jsonl"]);
    assert_eq!(hot.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&hot.stderr).contains("step_size"));
}
