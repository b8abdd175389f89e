use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use astcomp::checkpoint;
use astcomp::files::{read_shard, read_vocabs};
use astcomp::input::write_trees;
use astcomp_core::corpus::{flatten, path_to_root, AstNode, AstTree};
use astcomp_core::eval::normalized_improvement;
use astcomp_core::model::Task;
use astcomp_core::synth::{generate, SynthConfig};
use astcomp_core::training::{build_report, predict, Fingerprints, ReportOptions};
use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = "[model]
d_type = 8
d_value = 8
n_layers = 1
n_heads = 2
d_head = 4
d_ff = 16
segment_len = 16
mem_len = 16
path_dim = 8

[train]
batch_size = 4
learning_rate = 0.003
";

fn astcomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_astcomp")).args(args).env_remove("ASTCOMP_CONFIG_DIR").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = astcomp(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// Synthetic train and test corpora, preprocessed with the training vocabulary.
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let f = Self { dir };
        fs::create_dir(f.p("train")).unwrap();
        fs::create_dir(f.p("test")).unwrap();
        write_trees(&f.p("train/a.json"), &generate(&SynthConfig { programs: 12, seed: 1, ..SynthConfig::default() }))
            .unwrap();
        write_trees(&f.p("test/a.json"), &generate(&SynthConfig { programs: 6, seed: 2, ..SynthConfig::default() }))
            .unwrap();
        fs::write(f.p("small.toml"), SMALL).unwrap();
        ok(&["preprocess", s(&f.p("train")), "--out", s(&f.p("prep"))]);
        ok(&["preprocess", s(&f.p("test")), "--out", s(&f.p("prept")), "--vocab", s(&f.p("prep"))]);
        f
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn train(&self, out: &str, extra: &[&str]) -> PathBuf {
        let (out, prep, cfg) = (self.p(out), self.p("prep"), self.p("small.toml"));
        let mut args = vec!["train", "--train", s(&prep), "--out", s(&out), "--config", s(&cfg), "--epochs", "2"];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

fn node(kind: &str, value: Option<&str>, children: Vec<usize>) -> AstNode {
    AstNode::new(kind, value, children)
}

#[test]
fn preprocess_three_trees() {
    let dir = TempDir::new().unwrap();
    let trees = vec![
        AstTree::new(vec![
            node("Module", None, vec![1, 2]),
            node("Name", Some("x"), vec![]),
            node("Pass", None, vec![]),
        ])
        .unwrap(),
        AstTree::new(vec![node("Module", None, vec![1]), node("Num", Some("1"), vec![])]).unwrap(),
        AstTree::new(vec![node("Module", None, vec![])]).unwrap(),
    ];
    fs::create_dir(dir.path().join("in")).unwrap();
    write_trees(&dir.path().join("in/trees.json"), &trees).unwrap();
    let out = dir.path().join("out");
    ok(&["preprocess", s(&dir.path().join("in")), "--out", s(&out)]);

    let stats = &json(&out.join("shard.manifest.json"))["stats"];
    assert_eq!(stats["programs"], 3);
    assert_eq!(stats["nodes"], 6);
    assert_eq!(stats["avg_nodes"], 2.0);
    let shard = read_shard(&out).unwrap();
    assert_eq!(shard.programs.len(), 3);
    assert_eq!(shard.num_queries(), 6);
    assert_eq!(shard.path_len, 5);
    assert_eq!(json(&out.join("values.vocab.json"))["k"], 50_000);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "preprocess");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);
    assert!(manifest["fingerprints"]["types"].is_string());
}

#[test]
fn strict_preprocess_reports_the_corrupt_line() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("bad.json");
    fs::write(&file, "[{\"type\":\"Module\"}]\n[{\"type\":\"Module\",\"children\":[7]}]\n").unwrap();
    let out = astcomp(&["preprocess", s(&file), "--out", s(&dir.path().join("o")), "--strict"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json:2"), "{err}");

    let lenient = ok(&["preprocess", s(&file), "--out", s(&dir.path().join("o"))]);
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("skipped 1"));
    let entry = &json(&dir.path().join("o/shard.manifest.json"))["files"][0];
    assert_eq!(entry["failed_lines"], serde_json::json!([2]));
}

#[test]
fn usage_and_missing_inputs_exit_1() {
    let dir = TempDir::new().unwrap();
    let out = astcomp(&["train", "--train", s(&dir.path().join("missing")), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
    assert_eq!(astcomp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(astcomp(&["--help"]).status.code(), Some(0));
    assert_eq!(astcomp(&["train", "--ablate", "no-such"]).status.code(), Some(1));
}

#[test]
fn train_eval_and_library_agree() {
    let f = Fixture::new();
    let valid = f.p("prept");
    let run = f.train("run", &["--valid", s(&valid)]);
    let metrics = fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    for name in ["final.ckpt", "best.ckpt", "epoch-1.ckpt", "epoch-2.ckpt"] {
        assert!(run.join("checkpoints").join(name).is_file(), "{name}");
    }
    assert!(run.join("types.vocab.json").is_file());

    let ckpt = run.join("checkpoints/final.ckpt");
    let ev = f.p("ev");
    ok(&["eval", "--checkpoint", s(&ckpt), "--shard", s(&f.p("prept")), "--out", s(&ev), "--baseline", "pmn=type:0.3"]);
    let report = json(&ev.join("report.json"));

    let (types, values) = read_vocabs(&f.p("prep")).unwrap();
    let fp = Fingerprints::of(&types, &values);
    let model = checkpoint::load(&ckpt).unwrap().model;
    let preds = predict(&model, &read_shard(&f.p("prept")).unwrap(), &fp).unwrap();
    let lib = build_report(&preds, &types, &ReportOptions::default()).unwrap();
    assert_eq!(report["accuracy_type"].as_f64().unwrap(), lib.accuracy_type);
    assert_eq!(report["accuracy_value"].as_f64().unwrap(), lib.accuracy_value);
    assert_eq!(report["loss"].as_f64().unwrap(), lib.loss);

    let imp = &report["normalized_improvements"][0];
    assert_eq!(imp["vs"], "pmn");
    assert_eq!(imp["task"], "type");
    let expected = normalized_improvement(lib.accuracy_type, 0.3, 1.0).unwrap();
    assert!((imp["value"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert!(report["difficult_types"].is_null());
    assert!(!ev.join("difficult_types.csv").exists());

    let ev2 = f.p("ev2");
    ok(&["eval", "--checkpoint", s(&ckpt), "--shard", s(&f.p("prept")), "--out", s(&ev2), "--difficult-types"]);
    let report = json(&ev2.join("report.json"));
    assert_eq!(report["normalized_improvements"], serde_json::json!([]));
    assert_eq!(report["difficult_types"].as_array().unwrap().len(), 8);
    let csv = fs::read_to_string(ev2.join("difficult_types.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.starts_with("type,correct,total,accuracy\n"));
}

#[test]
fn eval_rejects_mismatched_vocabulary() {
    let f = Fixture::new();
    let run = f.train("run", &[]);
    ok(&["preprocess", s(&f.p("test")), "--out", s(&f.p("own"))]);
    let out = astcomp(&[
        "eval",
        "--checkpoint",
        s(&run.join("checkpoints/final.ckpt")),
        "--shard",
        s(&f.p("own")),
        "--out",
        s(&f.p("ev")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fingerprint"));
}

#[test]
fn ablation_and_weight_flags_reach_the_checkpoint() {
    let f = Fixture::new();
    let run = f.train("a", &["--ablate", "no-mtl", "--ablate", "no-recurrence", "--single-task", "value"]);
    let c = checkpoint::load(&run.join("checkpoints/final.ckpt")).unwrap();
    let a = c.model.ablation();
    assert!(!a.use_mtl && !a.use_recurrence && a.use_path);
    assert_eq!(a.single_task, Task::Value);
    let first: Value =
        serde_json::from_str(fs::read_to_string(run.join("metrics.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert!(first["train_type_accuracy"].is_null());
    assert!(first["train_value_accuracy"].is_number());

    let run = f.train("b", &["--alpha", "0.7", "0.3", "--ablate", "no-path"]);
    let c = checkpoint::load(&run.join("checkpoints/final.ckpt")).unwrap();
    assert_eq!(c.model.config().alpha, [0.7, 0.3]);
    assert!(!c.model.ablation().use_path);

    let bad = astcomp(&["train", "--train", s(&f.p("prep")), "--out", s(&f.p("c")), "--alpha", "0.7", "0.7"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn config_directory_from_environment() {
    let f = Fixture::new();
    let cfg_dir = f.p("cfg");
    fs::create_dir(&cfg_dir).unwrap();
    fs::write(cfg_dir.join("astcomp.toml"), format!("{SMALL}epochs = 1\n")).unwrap();
    let run = f.p("run");
    let out = Command::new(env!("CARGO_BIN_EXE_astcomp"))
        .args(["train", "--train", s(&f.p("prep")), "--out", s(&run)])
        .env("ASTCOMP_CONFIG_DIR", &cfg_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(run.join("metrics.jsonl")).unwrap().lines().count(), 1);
    let manifest = json(&run.join("manifest.json"));
    assert!(manifest["config_paths"][0].as_str().unwrap().ends_with("astcomp.toml"));
}

#[test]
fn runs_are_reproducible() {
    let f = Fixture::new();
    ok(&["preprocess", s(&f.p("train")), "--out", s(&f.p("prep2"))]);
    for name in ["shard.jsonl", "types.vocab.json", "values.vocab.json", "shard.manifest.json"] {
        assert_eq!(fs::read(f.p("prep").join(name)).unwrap(), fs::read(f.p("prep2").join(name)).unwrap(), "{name}");
    }
    let a = f.train("a", &["--seed", "7"]);
    let b = f.train("b", &["--seed", "7"]);
    let c = f.train("c", &["--seed", "8"]);
    let ckpt = |r: &Path| fs::read(r.join("checkpoints/final.ckpt")).unwrap();
    assert_eq!(ckpt(&a), ckpt(&b));
    assert_ne!(ckpt(&a), ckpt(&c));
    assert_eq!(fs::read(a.join("metrics.jsonl")).unwrap(), fs::read(b.join("metrics.jsonl")).unwrap());
    for ev in ["e1", "e2"] {
        ok(&[
            "eval",
            "--checkpoint",
            s(&a.join("checkpoints/final.ckpt")),
            "--shard",
            s(&f.p("prept")),
            "--out",
            s(&f.p(ev)),
        ]);
    }
    assert_eq!(fs::read(f.p("e1/report.json")).unwrap(), fs::read(f.p("e2/report.json")).unwrap());
}

#[test]
fn sweep_tabulates_each_setting() {
    let f = Fixture::new();
    let out = f.p("sweep");
    ok(&[
        "sweep",
        "--train",
        s(&f.p("prep")),
        "--valid",
        s(&f.p("prept")),
        "--out",
        s(&out),
        "--config",
        s(&f.p("small.toml")),
        "--epochs",
        "1",
        "--alpha",
        "1,0",
        "--alpha",
        "0.5,0.5",
    ]);
    let rows = json(&out.join("sweep.json"));
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert!(rows[0]["value_accuracy"].is_null());
    assert!(rows[1]["value_accuracy"].is_number());
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().split(',').nth(3) == Some("-"), "{csv}");
}

fn complete(ckpt: &Path, ast: &str, path: &str, k: &str) -> Vec<Value> {
    let out = ok(&["complete", "--checkpoint", s(ckpt), "--ast", ast, "--path", path, "--top-k", k, "--json"]);
    serde_json::from_slice::<Value>(&out.stdout).unwrap().as_array().unwrap().clone()
}

#[test]
fn completion_ranking_contract() {
    let f = Fixture::new();
    let run = f.train("run", &[]);
    let ckpt = run.join("checkpoints/final.ckpt");
    let ast = r#"[{"type":"Program","children":[1,5]},{"type":"FunctionDeclaration","children":[2]}]"#;
    let top = complete(&ckpt, ast, r#"["FunctionDeclaration","Program"]"#, "20");
    assert_eq!(top.len(), 20);
    let probs: Vec<f64> = top.iter().map(|x| x["probability"].as_f64().unwrap()).collect();
    assert!(probs.windows(2).all(|w| w[0] >= w[1]), "{probs:?}");

    // Top-1 is the argmax of the joint distribution.
    let (types, values) = read_vocabs(&f.p("prep")).unwrap();
    let model = checkpoint::load(&ckpt).unwrap().model;
    let tree = astcomp::input::parse_partial_ast_json(ast).unwrap().unwrap();
    let labels = flatten(&tree);
    let t: Vec<u32> = labels.iter().map(|l| types.encode(&l.kind)).collect();
    let v: Vec<u32> = labels.iter().map(|l| values.encode(&l.value)).collect();
    let mut path = astcomp_core::corpus::PathIds::empty(5);
    path.ids[0] = types.encode("FunctionDeclaration");
    path.ids[1] = types.encode("Program");
    path.true_length = 2;
    let d = model.next_distribution(&t, &v, &path).unwrap();
    let argmax = |xs: &[f64]| (0..xs.len()).fold(0, |b, i| if xs[i] > xs[b] { i } else { b });
    let (bt, bv) = (argmax(&d.type_probs), argmax(&d.value_probs));
    let one = complete(&ckpt, ast, r#"["FunctionDeclaration","Program"]"#, "1");
    assert_eq!(one.len(), 1);
    assert_eq!(one[0]["type"], types.decode(bt as u32).unwrap());
    assert_eq!(one[0]["value"], values.decode(bv as u32).unwrap());
    assert!((one[0]["probability"].as_f64().unwrap() - d.type_probs[bt] * d.value_probs[bv]).abs() < 1e-12);
    assert_eq!(one[0], top[0]);

    // Unseen types warn and fall back to UNK; bad input is a data error.
    let out = ok(&["complete", "--checkpoint", s(&ckpt), "--ast", r#"[{"type":"NoSuchType"}]"#]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("NoSuchType"));
    let bad = astcomp(&["complete", "--checkpoint", s(&ckpt), "--ast", "[{\"type\":"]);
    assert_eq!(bad.status.code(), Some(2));
    let long =
        astcomp(&["complete", "--checkpoint", s(&ckpt), "--ast", "[]", "--path", r#"["a","b","c","d","e","f"]"#]);
    assert_eq!(long.status.code(), Some(1));
}

#[test]
fn memorized_program_completes_at_rank_one() {
    let dir = TempDir::new().unwrap();
    let tree = generate(&SynthConfig { programs: 1, max_depth: 2, seed: 3, ..SynthConfig::default() }).remove(0);
    fs::create_dir(dir.path().join("in")).unwrap();
    write_trees(&dir.path().join("in/one.json"), std::slice::from_ref(&tree)).unwrap();
    let prep = dir.path().join("prep");
    ok(&["preprocess", s(&dir.path().join("in")), "--out", s(&prep)]);
    fs::write(dir.path().join("c.toml"), "[model]\nmem_len = 128\n[train]\nbatch_size = 1\nlearning_rate = 0.003\n")
        .unwrap();
    let run = dir.path().join("run");
    ok(&[
        "train",
        "--train",
        s(&prep),
        "--valid",
        s(&prep),
        "--out",
        s(&run),
        "--config",
        s(&dir.path().join("c.toml")),
        "--epochs",
        "80",
    ]);
    let ckpt = run.join("checkpoints/best.ckpt");
    let (types, values) = read_vocabs(&prep).unwrap();
    let model = checkpoint::load(&ckpt).unwrap().model;
    let preds = predict(&model, &read_shard(&prep).unwrap(), &Fingerprints::of(&types, &values)).unwrap();
    assert_eq!(preds.accuracy(Task::Type), 1.0, "type head did not memorize the program");
    assert_eq!(preds.accuracy(Task::Value), 1.0, "value head did not memorize the program");

    // Every prefix of the program, fed through the REPL with its cursor path.
    let order = tree.preorder();
    let labels = flatten(&tree);
    let mut input = String::new();
    for (i, &node) in order.iter().enumerate() {
        let prefix: Vec<AstNode> = order[..i]
            .iter()
            .map(|&n| {
                let src = &tree.nodes()[n];
                let children = src.children.iter().filter_map(|c| order[..i].iter().position(|x| x == c)).collect();
                AstNode::new(src.kind.as_str(), src.value.as_deref(), children)
            })
            .collect();
        let prefix_json = if prefix.is_empty() {
            "[]".to_string()
        } else {
            astcomp::input::tree_to_json(&AstTree::new(prefix).unwrap())
        };
        let path = path_to_root(&tree, node, 5).unwrap();
        let ancestors: Vec<&str> = path.types[..path.true_length].iter().map(String::as_str).collect();
        input.push_str(&format!("{}\t{prefix_json}\n", serde_json::to_string(&ancestors).unwrap()));
    }
    let mut child = Command::new(env!("CARGO_BIN_EXE_astcomp"))
        .args(["complete", "--checkpoint", s(&ckpt), "--repl", "--json", "--top-k", "1"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let answers: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()[0].clone())
        .collect();
    assert_eq!(answers.len(), labels.len());
    for (i, (answer, label)) in answers.iter().zip(&labels).enumerate() {
        assert_eq!(answer["type"], label.kind.as_str(), "node {i}");
        assert_eq!(answer["value"], label.value.as_str(), "node {i}");
    }
}
