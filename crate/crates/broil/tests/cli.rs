use std::path::Path;
use std::process::{Command, Output};

fn broil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_broil")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn quick_config(dir: &Path) -> std::path::PathBuf {
    let out = broil(&["print-config", "--env", "cartpole"]);
    assert_eq!(code(&out), 0);
    let mut c: toml::Table = toml::from_str(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    let opt = c["optimizer"].as_table_mut().unwrap();
    opt.insert("epochs".into(), 1.into());
    opt.insert("steps_per_epoch".into(), 200.into());
    opt.insert("hidden".into(), toml::Value::Array(vec![8.into()]));
    c.insert("output_dir".into(), dir.join("run").to_str().unwrap().into());
    c["evaluation"].as_table_mut().unwrap().insert("episodes".into(), 3.into());
    let path = dir.join("quick.toml");
    std::fs::write(&path, toml::to_string(&c).unwrap()).unwrap();
    path
}

#[test]
fn train_then_evaluate_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let out = broil(&["train", "--config", cfg.to_str().unwrap(), "--lambda", "0.5", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("lambda=0.5 alpha=0.95 seed=7 "), "{stdout}");
    let run = dir.path().join("run");
    assert_eq!(std::fs::read_to_string(run.join("frontier.csv")).unwrap().lines().count(), 2);
    let ckpt = run.join("checkpoints").join("l0.5_a0.95_s7.json");
    let trajs = dir.path().join("trajs.csv");
    let out = broil(&[
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--episodes",
        "2",
        "--trajectories",
        trajs.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(trajs).unwrap();
    assert!(csv.starts_with("episode,t,obs_0,"));
}

#[test]
fn demos_then_posterior_inference() {
    let dir = tempfile::tempdir().unwrap();
    let prefs = dir.path().join("prefs.json");
    let post = dir.path().join("post.json");
    let out = broil(&["make-demos", "--out", prefs.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = broil(&["infer-posterior", "--prefs", prefs.to_str().unwrap(), "--steps", "2000", "--out", post.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&post).unwrap()).unwrap();
    assert_eq!(json["format"], "broil-posterior/1");
    assert_eq!(json["feature_dim"], 3);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&broil(&["train"])), 1);
    assert_eq!(code(&broil(&["train", "--env", "cartpole", "--alpha", "1.5"])), 1);
    assert_eq!(code(&broil(&["train", "--env", "cartpole", "--seed", "1,1"])), 1);
    assert_eq!(code(&broil(&["sweep", "--env", "nowhere"])), 1);
    assert_eq!(code(&broil(&["train", "--config", "/nonexistent/config.toml"])), 1);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"format\": \"something-else\"}").unwrap();
    let text = format!(
        "output_dir = {:?}\n[env]\nkind = \"cartpole\"\n[posterior]\nsource = \"file\"\npath = \"bad.json\"\n[sweep]\nlambdas = [1.0]\nalphas = [0.95]\nseeds = [0]\n",
        dir.path().join("run")
    );
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = broil(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out_dir = blocker.join("run");
    assert_eq!(code(&broil(&["train", "--env", "cartpole", "--epochs", "0", "--out", out_dir.to_str().unwrap()])), 1);
}

#[test]
fn print_config_is_loadable() {
    let dir = tempfile::tempdir().unwrap();
    for env in ["cartpole", "pointmass", "trashbot"] {
        let out = broil(&["print-config", "--env", env]);
        assert_eq!(code(&out), 0);
        let path = dir.path().join(format!("{env}.toml"));
        std::fs::write(&path, &out.stdout).unwrap();
        let run = dir.path().join(env);
        let out = broil(&[
            "train", "--config", path.to_str().unwrap(), "--epochs", "0", "--episodes", "1", "--out", run.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{env}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
