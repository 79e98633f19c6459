use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn mimic(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimic"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mimic(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn record_train_play_bootstrap_distill_style() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["record", "--policy", "circler", "--ticks", "300", "--seed", "1", "--out", "c1.ndjson"]);
    ok(d, &["record", "--policy", "circler", "--ticks", "300", "--seed", "2", "--out", "c2.ndjson"]);
    ok(d, &["record", "--policy", "zigzag", "--ticks", "300", "--seed", "1", "--out", "z.ndjson"]);
    ok(d, &["train", "--episodes", "c1.ndjson", "--out", "c.ens.ndjson"]);
    ok(d, &["play", "--ensemble", "c.ens.ndjson", "--ticks", "100", "--out", "p.ndjson"]);
    let ep = mimic::Episode::from_doc(&std::fs::read_to_string(d.join("p.ndjson")).unwrap()).unwrap();
    assert!(ep.len() > 50);

    let comp = ok(d, &["eval", "competence", "--ensemble", "c.ens.ndjson", "--episodes", "c1.ndjson"]);
    assert_eq!(comp.lines().count(), 10);
    for line in comp.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["competence"], 1.0);
    }

    ok(d, &["bootstrap", "--ensemble", "c.ens.ndjson", "--episodes", "c1.ndjson", "--multiplier", "5", "--out", "ds.ndjson"]);
    let ds = mimic::distill::BootstrapDataset::from_doc(&std::fs::read_to_string(d.join("ds.ndjson")).unwrap()).unwrap();
    assert!(ds.multiplier() >= 5.0);
    ok(d, &["distill", "--dataset", "ds.ndjson", "--ensemble", "c.ens.ndjson", "--epochs", "2", "--out", "net.ndjson"]);
    mimic::distill::PolicyNet::from_doc(&std::fs::read_to_string(d.join("net.ndjson")).unwrap()).unwrap();

    let far = ok(d, &["style-dist", "--a", "c1.ndjson", "--b", "z.ndjson", "--out", "far.ndjson"]);
    let near = ok(d, &["style-dist", "--a", "c1.ndjson", "--b", "c2.ndjson"]);
    let normalized = |text: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with("D_normalized")).unwrap();
        line.split_whitespace().last().unwrap().parse().unwrap()
    };
    assert!(normalized(&far) > 5.0 * normalized(&near), "{far}\n{near}");
    mimic::style::StyleDistanceReport::from_doc(&std::fs::read_to_string(d.join("far.ndjson")).unwrap()).unwrap();
}

#[test]
fn astar_on_the_toy_model_lists_four_actions() {
    let tmp = tempfile::tempdir().unwrap();
    let text = ok(tmp.path(), &["plan", "astar", "--model", "toy"]);
    let actions: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(actions.len(), 4, "{text}");
    assert!(text.lines().next().unwrap().contains("length 4"));
}

#[test]
fn es_prints_one_row_per_iteration() {
    let tmp = tempfile::tempdir().unwrap();
    let text = ok(tmp.path(), &["plan", "es", "--model", "toy", "--iterations", "4", "--population", "8"]);
    assert_eq!(text.lines().count(), 5, "{text}");
}

#[test]
fn seeds_make_outputs_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let a = ok(d, &["record", "--policy", "exploratory", "--ticks", "200", "--seed", "9"]);
    let b = ok(d, &["record", "--policy", "exploratory", "--ticks", "200", "--seed", "9"]);
    let c = ok(d, &["record", "--policy", "exploratory", "--ticks", "200", "--seed", "10"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let es = |s: &str| ok(d, &["plan", "es", "--model", "barista", "--iterations", "3", "--seed", s]);
    assert_eq!(es("4"), es("4"));
}

#[test]
fn bad_configs_and_inputs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.toml"), "[arenna]\nwidth = 3\n").unwrap();
    let out = mimic(d, &["--config", "bad.toml", "plan", "astar", "--model", "toy"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("arenna"));
    std::fs::write(d.join("neg.toml"), "[arena]\nwidth = -1.0\n").unwrap();
    assert!(!mimic(d, &["--config", "neg.toml", "record", "--policy", "circler"]).status.success());
    assert!(!mimic(d, &["train", "--episodes", "missing.ndjson"]).status.success());
    assert!(!mimic(d, &["plan", "astar", "--model", "no-such-model"]).status.success());
}

#[test]
fn serve_announces_its_address_and_answers() {
    let tmp = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_mimic"))
        .args(["serve", "--addr", "127.0.0.1:0", "--out"])
        .arg(tmp.path())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let mut conn = TcpStream::connect(&addr).unwrap();
    conn.write_all(b"{\"v\":1,\"id\":\"r\",\"kind\":\"reset\",\"seed\":5}\n{\"v\":1,\"kind\":\"step\"}\n")
        .unwrap();
    let mut reader = BufReader::new(conn.try_clone().unwrap());
    let mut kinds = Vec::new();
    for _ in 0..3 {
        let mut l = String::new();
        reader.read_line(&mut l).unwrap();
        let v: serde_json::Value = serde_json::from_str(&l).unwrap();
        assert_eq!(v["v"], 1);
        kinds.push(v["kind"].as_str().unwrap().to_string());
        if kinds.len() == 1 {
            assert_eq!(v["id"], "r");
        }
    }
    assert_eq!(kinds, ["reset", "state", "state"]);
    child.kill().unwrap();
    child.wait().unwrap();
}
