//! The generate, trap, run and report steps driven from a config, as the
//! command-line tool does it.

use lesion_debias::experiment::{cmd_generate, cmd_report, cmd_run, cmd_trap, ExperimentConfig, Pipeline, ReportFormat};

const CONFIG: &str = r#"
name = "workflow"
n_runs = 2
tta_samples = 4

[generate]
image_size = 16
n_samples = 200
base_seed = 5
artifact_prevalence = [0.5, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]

[trap]
target_corr = 0.6
n_train = 60
n_test = 60

[train]
lr0 = 0.05
pretrain_epochs = 3
unlearn_epochs = 3
batch_size = 8
grad_clip = 1.0
"#;

fn main() -> lesion_debias::Result<()> {
    let dir = tempfile::tempdir()?;
    let output = format!("output={:?}", dir.path().display().to_string());
    let config = ExperimentConfig::from_toml_with(CONFIG, &[output])?;

    cmd_generate(&config, &config.pool_dir(), false)?;
    let trap = cmd_trap(&config, &config.pool_dir(), &config.split_dir())?;
    println!("trap phi: train {:+.3}, test {:+.3}", trap.train_corr, trap.test_corr);

    for pipeline in [Pipeline::Unchanged, Pipeline::Normalized, Pipeline::Lntl] {
        cmd_run(&config, pipeline, &config.root().join(pipeline.name()))?;
    }
    print!("{}", cmd_report(&config.root(), ReportFormat::Csv)?);
    Ok(())
}
