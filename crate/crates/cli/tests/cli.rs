use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn ibp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ibp")).args(args).env_remove("IBP_SEED").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("not JSON ({e}): {}", String::from_utf8_lossy(bytes)))
}

fn assert_schema(name: &str, doc: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    let msgs: Vec<String> = match compiled.validate(doc) {
        Ok(()) => return,
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    panic!("{name} schema rejects output:\n{}\n{doc:#}", msgs.join("\n"));
}

fn write(dir: &TempDir, name: &str, v: &Value) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sample_to(dir: &TempDir, name: &str, args: &[&str]) -> (Value, Value) {
    let out = dir.path().join(name);
    let mut all = vec!["sample", "--out", s(&out)];
    all.extend_from_slice(args);
    let o = ibp(&all);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = json_of(&o.stdout);
    let matrix = json_of(&std::fs::read(&out).unwrap());
    (matrix, summary)
}

const BETA_BERNOULLI: [&str; 9] =
    ["sample", "--prior", "beta:theta=1,beta=1", "--score", "bernoulli", "--customers", "10", "--seed", "7"];

#[test]
fn sample_is_deterministic_and_valid() {
    let dir = TempDir::new().unwrap();
    let a = ibp(&BETA_BERNOULLI);
    let b = ibp(&BETA_BERNOULLI);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);
    let matrix = json_of(&a.stdout);
    assert_schema("feature_matrix", &matrix);
    assert_schema("sample_summary", &json_of(&a.stderr));
    assert_eq!(matrix["customers"], 10);
    assert_eq!(matrix["seed"], 7);

    let (m2, summary) = sample_to(&dir, "m.json", &BETA_BERNOULLI[1..]);
    assert_eq!(m2, matrix);
    assert_schema("sample_summary", &summary);
    let per: Vec<u64> = serde_json::from_value(summary["new_dishes_per_customer"].clone()).unwrap();
    assert_eq!(per.len(), 10);
    assert_eq!(per.iter().sum::<u64>(), summary["dishes"].as_u64().unwrap());
    assert_eq!(summary["dishes"].as_u64().unwrap() as usize, matrix["dishes"].as_array().unwrap().len());
}

#[test]
fn different_seeds_give_different_matrices() {
    let mut args = BETA_BERNOULLI.to_vec();
    args[6] = "40";
    let a = ibp(&args);
    args[8] = "8";
    let b = ibp(&args);
    assert_eq!((code(&a), code(&b)), (0, 0));
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn seed_falls_back_to_environment() {
    let by_flag = ibp(&BETA_BERNOULLI);
    let by_env = Command::new(env!("CARGO_BIN_EXE_ibp"))
        .args(&BETA_BERNOULLI[..7])
        .env("IBP_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(code(&by_env), 0, "{}", stderr(&by_env));
    assert!(!by_flag.stdout.is_empty());
    assert_eq!(by_flag.stdout, by_env.stdout);
}

#[test]
fn config_file_wins_over_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.json", &json!({"command": "sample", "seed": 5, "customers": 6}));
    let mut args = BETA_BERNOULLI.to_vec();
    args.extend(["--config", s(&cfg)]);
    let via_config = ibp(&args);
    assert_eq!(code(&via_config), 0, "{}", stderr(&via_config));
    let mut direct = BETA_BERNOULLI.to_vec();
    direct[6] = "6";
    direct[8] = "5";
    assert_eq!(via_config.stdout, ibp(&direct).stdout);
    assert_eq!(json_of(&via_config.stdout)["seed"], 5);

    let full = write(
        &dir,
        "full.json",
        &json!({"prior": {"kind": "gamma_process", "params": {"theta": 2.0, "beta": 1.0}}, "score": "poisson:b=1", "customers": 3, "seed": 1}),
    );
    let o = ibp(&["sample", "--config", s(&full)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json_of(&o.stdout)["prior"]["kind"], "gamma_process");

    let wrong = write(&dir, "wrong.json", &json!({"command": "verify"}));
    assert_eq!(code(&ibp(&["sample", "--config", s(&wrong)])), 2);
    let typo = write(&dir, "typo.json", &json!({"sead": 3}));
    assert_eq!(code(&ibp(&["sample", "--config", s(&typo)])), 2);
}

#[test]
fn csv_output() {
    let mut args = BETA_BERNOULLI.to_vec();
    args.extend(["--format", "csv"]);
    let o = ibp(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("customer,dish,atom,score\n"), "{text}");
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 4));
    assert_eq!(code(&ibp(&["verify", "--suite", "explosivity", "--format", "csv"])), 2);
}

#[test]
fn explosive_configuration_exits_3() {
    let args = ["sample", "--prior", "beta:theta=1,beta=0.5", "--score", "nb:r=1", "--customers", "3", "--seed", "1"];
    let o = ibp(&args);
    assert_eq!(code(&o), 3);
    let err = stderr(&o);
    assert!(err.contains("explosive"), "{err}");
    assert!(err.contains("E[Z(Ω)] is infinite"), "{err}");
    assert!(o.stdout.is_empty());

    let mut allowed = args.to_vec();
    allowed.push("--allow-explosive");
    let o = ibp(&allowed);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json_of(&o.stderr)["explosivity"]["status"], "infinite");

    let stable = ["sample", "--prior", "stable:alpha=0.5", "--score", "poisson:b=1", "--customers", "2"];
    assert_eq!(code(&ibp(&stable)), 3);
}

fn empty_matrix(prior: Value, model: Value) -> Value {
    json!({"customers": 0, "model": model, "prior": prior, "dishes": []})
}

#[test]
fn logprob_of_empty_matrix_is_zero() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (json!({"kind": "beta_process", "params": {"theta": 1.0, "beta": 1.0}}), json!({"kind": "bernoulli"})),
        (json!({"kind": "gamma_process", "params": {"theta": 2.0, "beta": 1.0}}), json!({"kind": "poisson", "b": 1.0})),
        (json!({"kind": "stable_beta", "params": {"theta": 1.0, "alpha": 0.5, "beta": 0.5}}), json!({"kind": "negative_binomial", "r": 2.0})),
        (json!({"kind": "generalized_gamma", "params": {"alpha": 0.3, "beta": 2.0}}), json!({"kind": "poisson", "b": 0.5})),
    ];
    for (i, (prior, model)) in cases.into_iter().enumerate() {
        let m = write(&dir, &format!("e{i}.json"), &empty_matrix(prior, model));
        for method in ["auto", "closed", "quadrature"] {
            let o = ibp(&["logprob", "--in", s(&m), "--method", method]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            let r = json_of(&o.stdout);
            assert_schema("logprob", &r);
            assert_eq!(r["log_marginal"], 0.0);
            assert_eq!(r["log_pattern_probability"], 0.0);
        }
    }
}

#[test]
fn logprob_gamma_poisson_worked_example() {
    let dir = TempDir::new().unwrap();
    let m = write(
        &dir,
        "g.json",
        &json!({
            "customers": 1,
            "model": {"kind": "poisson", "b": 1.0},
            "prior": {"kind": "gamma_process", "params": {"theta": 1.0, "beta": 1.0}},
            "dishes": [{"atom": 0.25, "scores": {"1": 2}}]
        }),
    );
    let want = -(2f64.ln()) + (0.125f64).ln();
    for (method, tol) in [("closed", 1e-14), ("quadrature", 1e-9)] {
        let o = ibp(&["logprob", "--in", s(&m), "--method", method]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let got = json_of(&o.stdout)["log_marginal"].as_f64().unwrap();
        assert!(((got - want) / want).abs() < tol, "{method}: {got} vs {want}");
    }
    let atoms = ibp(&["logprob", "--in", s(&m), "--include-atoms"]);
    let r = json_of(&atoms.stdout);
    assert_eq!(r["include_atoms"], true);
    assert!(((r["log_marginal"].as_f64().unwrap() - want) / want).abs() < 1e-14);
}

#[test]
fn closed_and_quadrature_paths_agree() {
    let dir = TempDir::new().unwrap();
    for (prior, score) in [
        ("stable-beta:theta=2,alpha=0.3,beta=1", "bernoulli"),
        ("beta:theta=1.5,beta=2", "nb:r=1.5"),
        ("gg:alpha=0.4,beta=1", "poisson:b=0.7"),
        ("gamma:theta=2,beta=1", "poisson:b=1"),
    ] {
        let (_, _) = sample_to(&dir, "m.json", &["--prior", prior, "--score", score, "--customers", "8", "--seed", "11"]);
        let path = dir.path().join("m.json");
        let get = |method: &str| {
            let o = ibp(&["logprob", "--in", s(&path), "--method", method]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            json_of(&o.stdout)["log_marginal"].as_f64().unwrap()
        };
        let (c, q) = (get("closed"), get("quadrature"));
        assert!(((c - q) / c).abs() < 1e-6, "{prior} / {score}: {c} vs {q}");
    }
}

#[test]
fn posterior_reports_conjugate_parameters() {
    let dir = TempDir::new().unwrap();
    let (matrix, _) = sample_to(&dir, "b.json", &["--prior", "beta:theta=3,beta=2", "--score", "bernoulli", "--customers", "6", "--seed", "4"]);
    let o = ibp(&["posterior", "--in", s(&dir.path().join("b.json"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json_of(&o.stdout);
    assert_schema("posterior", &r);
    assert_eq!(r["tilted"]["prior"]["params"]["beta"], 8.0);
    let dishes = r["dishes"].as_array().unwrap();
    assert_eq!(dishes.len(), matrix["dishes"].as_array().unwrap().len());
    assert!(!dishes.is_empty());
    for d in dishes {
        let c = d["total_score"].as_f64().unwrap();
        assert_eq!(d["jump"]["law"], "beta");
        assert_eq!(d["jump"]["a"].as_f64().unwrap(), c);
        assert_eq!(d["jump"]["b"].as_f64().unwrap(), 6.0 - c + 2.0);
        assert!((d["take_probability"].as_f64().unwrap() - c / 8.0).abs() < 1e-15);
    }

    sample_to(&dir, "g.json", &["--prior", "gamma:theta=2,beta=1", "--score", "poisson:b=0.5", "--customers", "4", "--seed", "2"]);
    let r = json_of(&ibp(&["posterior", "--in", s(&dir.path().join("g.json"))]).stdout);
    assert_schema("posterior", &r);
    for d in r["dishes"].as_array().unwrap() {
        assert_eq!(d["jump"]["law"], "gamma");
        assert_eq!(d["jump"]["shape"].as_f64().unwrap(), d["total_score"].as_f64().unwrap());
        assert_eq!(d["jump"]["rate"].as_f64().unwrap(), 1.0 + 0.5 * 4.0);
    }
}

#[test]
fn multinomial_sample_and_posterior() {
    let dir = TempDir::new().unwrap();
    let args = ["--prior", "sbd:theta=2,alpha=0.3,beta=1,gamma=1/2/0.5", "--score", "multinomial", "--customers", "5", "--seed", "9"];
    let (matrix, summary) = sample_to(&dir, "s.json", &args);
    assert_schema("feature_matrix", &matrix);
    assert_schema("sample_summary", &summary);
    assert_eq!(matrix["q"], 3);
    let o = ibp(&["posterior", "--in", s(&dir.path().join("s.json"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json_of(&o.stdout);
    assert_schema("posterior", &r);
    assert_eq!(r["tilted"]["prior"]["beta"], 6.0);
    for d in r["dishes"].as_array().unwrap() {
        let c: f64 = d["counts"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        let total = d["take_probability"].as_f64().unwrap();
        assert!((total - (c - 0.3) / 6.0).abs() < 1e-14);
    }
    assert_eq!(code(&ibp(&["logprob", "--in", s(&dir.path().join("s.json"))])), 2);
    let mismatch = ["sample", "--prior", "sbd:theta=2,beta=1,gamma=1/1", "--score", "multinomial:q=3", "--customers", "2"];
    assert_eq!(code(&ibp(&mismatch)), 2);
}

#[test]
fn validation_errors_exit_2_and_list_entries() {
    let dir = TempDir::new().unwrap();
    let m = write(
        &dir,
        "p.json",
        &json!({
            "customers": 2,
            "model": {"kind": "poisson", "b": 1.0},
            "prior": {"kind": "beta_process", "params": {"theta": 1.0, "beta": 1.0}},
            "dishes": [{"atom": 0.5, "scores": {"1": 3, "2": 1}}, {"atom": 0.7, "scores": {"3": 1}}]
        }),
    );
    let o = ibp(&["logprob", "--in", s(&m), "--prior", "gamma:theta=1,beta=1"]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("dish 1: customer 3 outside 1..=2"), "{err}");

    let o = ibp(&["logprob", "--in", s(&m), "--prior", "gamma:theta=1,beta=1", "--score", "bernoulli"]);
    let err = stderr(&o);
    assert_eq!(code(&o), 2);
    assert!(err.contains("entry 3 above the maximum 1"), "{err}");
    assert!(err.contains("need a prior on"), "{err}");

    for bad in [
        vec!["sample", "--prior", "beta:theta=1", "--score", "bernoulli", "--customers", "1"],
        vec!["sample", "--prior", "weibull:k=2", "--score", "bernoulli", "--customers", "1"],
        vec!["sample", "--prior", "beta:theta=1,beta=1", "--score", "bernoulli"],
        vec!["sample", "--prior", "gamma:theta=1,beta=1", "--score", "bernoulli", "--customers", "1"],
        vec!["transform", "--prior", "gamma:theta=1,beta=1", "--direction", "to-halfline"],
        vec!["verify", "--suite", "nope"],
        vec!["logprob", "--in", "/nonexistent/m.json"],
    ] {
        let o = ibp(&bad);
        assert_eq!(code(&o), 2, "{bad:?}: {}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn transform_round_trips() {
    let dir = TempDir::new().unwrap();
    let o = ibp(&["transform", "--prior", "beta:theta=1,beta=2", "--direction", "to-halfline"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json_of(&o.stdout);
    assert_schema("transform", &r);
    assert_eq!(r["round_trip"], true);
    assert_eq!(r["pass"], true);
    assert_eq!(r["output"]["support"], "positive_half_line");

    let out = write(&dir, "t.json", &r["output"]);
    let back = ibp(&["transform", "--prior", &std::fs::read_to_string(&out).unwrap(), "--direction", "to-unit"]);
    assert_eq!(code(&back), 0, "{}", stderr(&back));
    let b = json_of(&back.stdout);
    assert_eq!(b["output"], r["input"]);

    for prior in ["gamma:theta=2,beta=1", "stable:alpha=0.5", "gg:alpha=0.3,beta=2"] {
        let o = ibp(&["transform", "--prior", prior, "--direction", "to-unit"]);
        assert_eq!(code(&o), 0, "{prior}: {}", stderr(&o));
        assert_eq!(json_of(&o.stdout)["pass"], true, "{prior}");
    }
}

#[test]
fn verify_all_passes_and_is_reproducible() {
    let a = ibp(&["verify", "--suite", "all", "--seed", "42"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    let report = json_of(&a.stdout);
    assert_schema("verify_report", &report);
    assert_eq!(report["pass"], true);
    assert!(report["checks"].as_array().unwrap().len() > 50);
    assert!(stderr(&a).contains("suite all (seed 42"));
    let b = ibp(&["verify", "--suite", "all", "--seed", "42"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn shipped_run_config_schema_accepts_configs() {
    for cfg in [
        json!({"command": "sample", "prior": "beta:theta=1,beta=1", "score": "bernoulli", "customers": 3, "seed": 1}),
        json!({"prior": {"kind": "sbd", "theta": 1.0, "alpha": 0.0, "beta": 1.0, "gamma": [1.0, 1.0]}, "score": {"kind": "multinomial"}}),
        json!({"command": "verify", "suite": "explosivity", "budget": 10, "format": "json"}),
    ] {
        assert_schema("run_config", &cfg);
    }
}
