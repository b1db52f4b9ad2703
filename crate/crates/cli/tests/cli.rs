use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = "\
[system]
N = 4
M = 2
K = 2
power_dbm = 10

[hyper]
n_outer = 6
hidden = 8

[run]
n_realizations = 3
master_seed = 5

[output]
prefix = \"tiny\"

[sweep]
powers_dbm = [0, 10]
n_values = [2, 4]
";

fn gamn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gamn"))
        .args(args)
        .env_remove("GAMN_OUT_DIR")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_in(dir: &Path, verb: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        verb,
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    gamn(&args)
}

#[test]
fn run_writes_trace_and_sidecar() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let o = run_in(tmp.path(), "run", &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("tiny_trace.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,epoch,mean_wsr,stderr_wsr");
    assert_eq!(lines.len(), 1 + 4 * 6);
    assert!(!csv.contains('\r') && csv.ends_with('\n'));
    assert!(lines[1].starts_with("gamn,0,"));
    assert!(lines[6].starts_with("gamn,5,"));
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4);
        let mean: f64 = fields[2].parse().unwrap();
        assert!(mean >= 0.0);
        // 17 significant digits
        assert_eq!(
            fields[2]
                .split('e')
                .next()
                .unwrap()
                .replace(['.', '-'], "")
                .len(),
            17
        );
    }
    let meta = fs::read_to_string(tmp.path().join("tiny_meta.txt")).unwrap();
    assert!(meta.starts_with(&format!(
        "# gamn-cli {}\n# command: run\n",
        env!("CARGO_PKG_VERSION")
    )));
}

#[test]
fn sidecar_reproduces_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(
        run_in(&a, "run", &cfg, &["--variants", "gamn,pga", "--seed", "9"])
            .status
            .success()
    );
    let meta = a.join("tiny_meta.txt");
    assert!(run_in(&b, "run", &meta, &[]).status.success());
    assert_eq!(
        fs::read(a.join("tiny_trace.csv")).unwrap(),
        fs::read(b.join("tiny_trace.csv")).unwrap()
    );
    assert_eq!(
        fs::read(&meta).unwrap(),
        fs::read(b.join("tiny_meta.txt")).unwrap()
    );
    let csv = fs::read_to_string(b.join("tiny_trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 6);
}

#[test]
fn same_config_twice_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run_in(&a, "run", &cfg, &["--jobs", "1"]).status.success());
    assert!(run_in(&b, "run", &cfg, &["--jobs", "3"]).status.success());
    assert_eq!(
        fs::read(a.join("tiny_trace.csv")).unwrap(),
        fs::read(b.join("tiny_trace.csv")).unwrap()
    );
}

#[test]
fn missing_key_exits_1_and_names_it() {
    let tmp = TempDir::new().unwrap();
    let text = TINY.replace("N = 4\n", "");
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let o = run_in(tmp.path(), "run", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("system.N"), "{}", stderr(&o));
}

#[test]
fn bad_overrides_exit_1() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    for (verb, extra) in [
        ("run", vec!["--variants", "gamn,nope"]),
        ("sweep-power", vec!["--powers", "0,5,5"]),
        ("sweep-n", vec!["--n-values", "0,8"]),
        ("sweep-n", vec!["--n-values", "8,8"]),
        ("run", vec!["--jobs", "0"]),
    ] {
        let o = run_in(tmp.path(), verb, &cfg, &extra);
        assert_eq!(o.status.code(), Some(1), "{verb} {extra:?}: {}", stderr(&o));
    }
    let o = run_in(tmp.path(), "run", &tmp.path().join("absent.toml"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweeps_emit_one_row_per_point() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let o = run_in(
        tmp.path(),
        "sweep-power",
        &cfg,
        &["--powers", "-5,0,5", "--variants", "gamn"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("tiny_sweep_power.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,power_dBm,final_wsr,best_wsr,stderr");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("gamn,-5.0000000000000000e0,"));
    for line in &lines[1..] {
        let f: Vec<f64> = line
            .split(',')
            .skip(2)
            .map(|x| x.parse().unwrap())
            .collect();
        assert!(f[1] >= f[0], "best below final: {line}");
    }
    assert!(tmp.path().join("tiny_sweep_power_meta.txt").exists());

    let o = run_in(tmp.path(), "sweep-n", &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("tiny_sweep_n.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,N,final_wsr,best_wsr,stderr");
    assert_eq!(lines.len(), 1 + 4 * 2);
    assert!(lines[2].starts_with("gamn,4,"));
    assert!(tmp.path().join("tiny_sweep_n_meta.txt").exists());
}

#[test]
fn grad_check_reports_four_names() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        &TINY.replace("hidden = 8", "hidden = 200"),
    );
    let o = run_in(tmp.path(), "grad-check", &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let names: Vec<&str> = out.lines().map(|l| l.split(' ').next().unwrap()).collect();
    assert_eq!(
        names,
        ["grad_theta_R", "grad_W_R", "grad_xP_L", "grad_xPR_L"]
    );

    let o = run_in(tmp.path(), "grad-check", &cfg, &["--tol", "1e-12"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn output_directory_precedence() {
    let tmp = TempDir::new().unwrap();
    let env_dir = tmp.path().join("env");
    let cfg_dir = tmp.path().join("cfg");
    let flag_dir = tmp.path().join("flag");
    let plain = write_config(tmp.path(), "plain.toml", TINY);
    let text = TINY.replace(
        "[output]\n",
        &format!("[output]\ndir = {:?}\n", cfg_dir.to_str().unwrap()),
    );
    let with_dir = write_config(tmp.path(), "dir.toml", &text);
    let quick = ["--variants", "pga"];

    let run = |cfg: &Path, out: Option<&Path>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_gamn"));
        cmd.args(["run", "--config", cfg.to_str().unwrap()])
            .args(quick);
        if let Some(out) = out {
            cmd.args(["--out", out.to_str().unwrap()]);
        }
        cmd.env("GAMN_OUT_DIR", &env_dir).current_dir(tmp.path());
        assert!(cmd.status().unwrap().success());
    };
    run(&plain, None);
    assert!(env_dir.join("tiny_trace.csv").exists());
    run(&with_dir, None);
    assert!(cfg_dir.join("tiny_trace.csv").exists());
    run(&with_dir, Some(&flag_dir));
    assert!(flag_dir.join("tiny_trace.csv").exists());
}

#[test]
fn channel_dumps_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let o = run_in(
        tmp.path(),
        "run",
        &cfg,
        &["--dump-channels", "--variants", "pga"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let dumps: Vec<_> = fs::read_dir(tmp.path().join("channels")).unwrap().collect();
    assert_eq!(dumps.len(), 3);
    let first = tmp.path().join("channels").join("tiny_00000.txt");
    let text = fs::read_to_string(&first).unwrap();
    let ch = gamn_core::channel::read_dump(text.as_bytes()).unwrap();
    assert_eq!((ch.n(), ch.m(), ch.k()), (4, 2, 2));
    assert_eq!(ch.seed, gamn_core::gamn::realization_seed(5, 0));
}
