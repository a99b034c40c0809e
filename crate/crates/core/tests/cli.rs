use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lesion_debias::eval::read_results;
use lesion_debias::synthgen::{gen_dataset, GenConfig};
use lesion_debias::trapset::SplitFile;

const SMALL: &str = r#"
name = "small"
n_runs = 1
tta_samples = 2

[generate]
image_size = 16
n_samples = 80
base_seed = 3
artifact_prevalence = [0.5, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]

[trap]
target_corr = 0.5
n_train = 32
n_test = 32

[train]
lr0 = 0.05
pretrain_epochs = 1
unlearn_epochs = 1
batch_size = 8
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lesion-debias"))
}

/// Write `text` as a config under `dir` and return its path.
fn config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

fn exec(dir: &Path, cfg: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(cfg)
        .env("LESION_DEBIAS_OUT", dir.join("out"))
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_is_reproducible_and_guards_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let pool = dir.path().join("out/small/pool");
    assert_eq!(code(&exec(dir.path(), &cfg, &["generate"])), 0);
    let first = fs::read(pool.join("manifest.csv")).unwrap();

    let again = exec(dir.path(), &cfg, &["generate"]);
    assert_eq!(code(&again), 2, "{}", stderr(&again));
    assert!(stderr(&again).contains("--force"));

    assert_eq!(code(&exec(dir.path(), &cfg, &["generate", "--force"])), 0);
    assert_eq!(fs::read(pool.join("manifest.csv")).unwrap(), first);
}

#[test]
fn manifest_flags_match_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    assert_eq!(code(&exec(dir.path(), &cfg, &["generate"])), 0);
    let text = fs::read_to_string(dir.path().join("out/small/pool/manifest.csv")).unwrap();
    let mut g = GenConfig::new(80, 3);
    g.image_size = 16;
    g.artifact_prevalence = [0.5, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
    let expected = gen_dataset(&g).unwrap();
    let rows: Vec<Vec<String>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), expected.len());
    let malignant = rows.iter().filter(|r| r[1] == "malignant").count();
    assert_eq!(malignant, 40);
    for (row, s) in rows.iter().zip(&expected) {
        assert_eq!(row[0].parse::<u64>().unwrap(), s.id);
        let flags: Vec<bool> = row[2..9].iter().map(|v| v == "1").collect();
        assert_eq!(flags, s.artifacts.to_vec());
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let zero = config(dir.path(), &SMALL.replace("n_samples = 80", "n_samples = 0"));
    let o = exec(dir.path(), &zero, &["generate"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("n_samples"));

    let unknown = config(dir.path(), &format!("{SMALL}\nextra = 1\n"));
    assert_eq!(code(&exec(dir.path(), &unknown, &["generate"])), 2);

    let cfg = config(dir.path(), SMALL);
    let o = exec(dir.path(), &cfg, &["run", "--pipeline", "magic"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn trap_feasibility_and_split_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    assert_eq!(code(&exec(dir.path(), &cfg, &["generate"])), 0);
    assert_eq!(code(&exec(dir.path(), &cfg, &["trap"])), 0);
    let split = SplitFile::read(&dir.path().join("out/small/trap")).unwrap();
    assert_eq!(split.split.spec.target_corr, 0.5);
    assert_eq!(split.config["trap"]["target_corr"], 0.5);

    // Only ~8 malignant samples carry the rare artifact; a perfect trap on
    // 32 needs 16 of them.
    let rare = SMALL
        .replace("[0.5, 0.1,", "[0.1, 0.1,")
        .replace("target_corr = 0.5", "target_corr = 1.0");
    let rare_cfg = config(dir.path(), &rare);
    let o = exec(dir.path(), &rare_cfg, &["generate", "--force"]);
    assert_eq!(code(&o), 0);
    let o = exec(dir.path(), &rare_cfg, &["trap"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("artifact+malignant"), "{}", stderr(&o));
}

#[test]
fn run_checks_inputs_and_appends_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);

    let missing = exec(dir.path(), &cfg, &["run", "--pipeline", "unchanged"]);
    assert_eq!(code(&missing), 1);

    assert_eq!(code(&exec(dir.path(), &cfg, &["generate"])), 0);
    assert_eq!(code(&exec(dir.path(), &cfg, &["trap"])), 0);
    for _ in 0..2 {
        let o = exec(dir.path(), &cfg, &["run", "--pipeline", "lntl"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let run_dir = dir.path().join("out/small/lntl");
    let rows = read_results(&run_dir.join("results.csv")).unwrap();
    // trap_test and held_out, twice.
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].run_id, rows[2].run_id);
    assert!(run_dir.join("run0/unlearn.ckpt").is_file());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(run_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["generate"]["n_samples"], 80);
    assert!(report["version"].as_str().unwrap().starts_with("lesion-debias"));

    let o = bin()
        .args(["report", "--in"])
        .arg(dir.path().join("out/small"))
        .args(["--format", "json"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary[0]["n_runs"], 2);

    // Regenerating the pool with another seed invalidates the split.
    let other = config(dir.path(), &SMALL.replace("base_seed = 3", "base_seed = 4"));
    assert_eq!(code(&exec(dir.path(), &other, &["generate", "--force"])), 0);
    let o = exec(dir.path(), &cfg, &["run", "--pipeline", "unchanged"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn untrapped_baseline_separates_classes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/untrapped.toml");
    assert_eq!(code(&exec(dir.path(), &cfg, &["generate"])), 0);
    let o = exec(dir.path(), &cfg, &["run", "--pipeline", "unchanged"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = read_results(&dir.path().join("out/untrapped/unchanged/results.csv")).unwrap();
    assert_eq!(rows[0].dataset, "test");
    assert!(rows[0].auc >= 0.85, "AUC {}", rows[0].auc);
}
