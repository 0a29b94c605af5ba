use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn jobs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("jobs")
}

fn maxclass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxclass"))
        .args(args)
        .env_remove("MAXCLASS_TOL")
        .output()
        .expect("binary runs")
}

fn job_arg(name: &str) -> String {
    jobs().join(name).to_string_lossy().into_owned()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_job(dir: &Path, text: &str) -> String {
    let path = dir.join("job.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn growth_on_darboux() {
    let out = maxclass(&["growth", "--job", &job_arg("darboux.toml")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["tolerance"]["source"], "default");
    for p in v["result"]["points"].as_array().unwrap() {
        assert_eq!(p["growth_vector"], serde_json::json!([2, 3]));
        assert_eq!(p["rank_records"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn class_on_cartan_model_is_two() {
    let out = maxclass(&["class", "--job", &job_arg("cartan.toml")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for p in v["result"]["points"].as_array().unwrap() {
        assert_eq!(p["m"], 2);
        assert_eq!(p["extension_dims"][0], 4);
    }
}

#[test]
fn explicit_fields_agree_with_the_ode() {
    let out = maxclass(&["class", "--job", &job_arg("cartan-explicit.toml")]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["points"][0]["m"], 2);
}

#[test]
fn malformed_rhs_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let job = write_job(
        dir.path(),
        "[distribution.ode]\nr = 1\ns = 2\nf = \"p2^^2\"\n[points]\nbase = [[0, 0, 0, 0, 0]]\n",
    );
    let out = maxclass(&["growth", "--job", &job]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("error[expr.syntax]"), "{err}");
    assert!(err.contains("  | p2^^2\n  |    ^"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let both = write_job(
        dir.path(),
        "[distribution]\nchart = [\"x\", \"y\", \"z\"]\n[distribution.ode]\nr = 1\ns = 0\nf = \"p0\"\n",
    );
    assert_eq!(maxclass(&["growth", "--job", &both]).status.code(), Some(1));
    assert_eq!(maxclass(&["growth"]).status.code(), Some(1));
    assert_eq!(maxclass(&["frobnicate", "--job", &both]).status.code(), Some(1));
    assert_eq!(
        maxclass(&["growth", "--job", "/nonexistent/job.toml"]).status.code(),
        Some(1)
    );
    let no_seed = write_job(
        dir.path(),
        "[distribution.ode]\nr = 1\ns = 2\nf = \"p2^2\"\n[points]\nbase = [[0, 0, 0, 0, 0]]\n",
    );
    let out = maxclass(&["class", "--job", &no_seed]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("job.seed"));
    assert_eq!(
        maxclass(&["growth", "--job", &job_arg("darboux.toml"), "--seed", "1"])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        maxclass(&["class", "--job", &job_arg("darboux.toml")]).status.code(),
        Some(1)
    );
}

#[test]
fn numerical_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let job = write_job(
        dir.path(),
        "seed = 1\n[distribution.ode]\nr = 1\ns = 2\nf = \"p2^2\"\n[points]\nbase = [[0, 0, 0, 0, 0]]\n\
         [curve]\ncovector = [0, 0, 0, 0, 0, 1, 0, 0, 0, 0]\n",
    );
    let out = maxclass(&["characteristic", "--job", &job]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("error[symplectic.stratum]"));
}

#[test]
fn tolerance_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let run = |job: &str, env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_maxclass"));
        c.args(["growth", "--job", job]).env_remove("MAXCLASS_TOL");
        if let Some(e) = env {
            c.env("MAXCLASS_TOL", e);
        }
        c.output().unwrap()
    };
    let plain = job_arg("darboux.toml");
    let v = json(&run(&plain, Some("1e-7")));
    assert_eq!(v["tolerance"]["source"], "env");
    assert_eq!(v["tolerance"]["rank"], 1e-7);
    assert_eq!(v["result"]["points"][0]["rank_records"][0]["tol"], 1e-7);
    let overridden = write_job(
        dir.path(),
        &format!(
            "{}\n[tolerances]\nrank = 1e-8\n",
            std::fs::read_to_string(&plain).unwrap()
        ),
    );
    let v = json(&run(&overridden, Some("1e-7")));
    assert_eq!(v["tolerance"]["source"], "job");
    assert_eq!(v["tolerance"]["rank"], 1e-8);
    assert_eq!(run(&plain, Some("tiny")).status.code(), Some(1));
}

#[test]
fn out_directory_receives_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = maxclass(&[
        "rho-profile",
        "--job",
        &job_arg("cartan.toml"),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("rho-profile.json")).unwrap()).unwrap();
    let csv = std::fs::read_to_string(out_dir.join("rho-profile.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,value"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (t, v) = l.split_once(',').unwrap();
            (t.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 31);
    for (i, (t, v)) in rows.iter().enumerate() {
        assert_eq!(*t, report["result"]["t"][i].as_f64().unwrap());
        assert_eq!(*v, report["result"]["rho"][i].as_f64().unwrap());
    }
}

#[test]
fn projectivize_passes_its_post_check() {
    let out = maxclass(&["projectivize", "--job", &job_arg("cartan.toml")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let check = &v["result"]["post_check"];
    assert_eq!(check["passed"], true);
    assert!(check["max_abs_rho_after"].as_f64().unwrap() < 1e-5);
    assert_eq!(v["result"]["k"], 4);
}

#[test]
fn verify_model_reports_the_table() {
    let out = maxclass(&["verify-model", "--n", "5"]);
    let v = json(&out);
    let relations: Vec<&str> = v["result"]["relations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_str().unwrap())
        .collect();
    assert!(relations.contains(&"[g1,g2] = 2 g2"), "{relations:?}");
    let mismatches = v["result"]["mismatches"].as_array().unwrap();
    let brackets: Vec<&str> = mismatches.iter().map(|m| m["bracket"].as_str().unwrap()).collect();
    assert_eq!(brackets, ["[g1,eta]"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(v["result"]["status"], "fail");
    assert_eq!(maxclass(&["verify-model", "--n", "3"]).status.code(), Some(1));
}

#[test]
fn reports_are_byte_identical() {
    for cmd in ["class", "projectivize", "characteristic"] {
        let a = maxclass(&[cmd, "--job", &job_arg("cartan.toml"), "--seed", "21"]);
        let b = maxclass(&[cmd, "--job", &job_arg("cartan.toml"), "--seed", "21"]);
        assert_eq!(a.status.code(), Some(0));
        assert_eq!(a.stdout, b.stdout, "{cmd}");
    }
    let a = maxclass(&["class", "--job", &job_arg("cartan.toml"), "--seed", "22"]);
    let b = maxclass(&["class", "--job", &job_arg("cartan.toml"), "--seed", "21"]);
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn report_isolates_failing_sections() {
    let out = maxclass(&["report", "--job", &job_arg("class-one.toml")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["class"]["points"][0]["m"], 1);
    assert_eq!(v["result"]["projectivize"]["k"], 1);
    assert!(!v["result"].as_object().unwrap().contains_key("verify_model"));

    let dir = tempfile::tempdir().unwrap();
    let darboux = write_job(
        dir.path(),
        "[distribution.ode]\nr = 1\ns = 0\nf = \"p0\"\n[points]\nbase = [[0.3, -0.2, 1.1]]\n",
    );
    let out = maxclass(&["report", "--job", &darboux, "--seed", "3", "--n", "5"]);
    let v = json(&out);
    let sections = v["result"].as_object().unwrap();
    assert_eq!(
        sections["growth"]["points"][0]["growth_vector"],
        serde_json::json!([2, 3])
    );
    assert_eq!(sections["class"]["error"]["code"], "input");
    assert!(sections["verify_model"]["mismatches"].is_array());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(v["status"], "fail");
}
