use std::path::PathBuf;
use std::process::Command;

/// Example binaries built alongside this test by `cargo test`.
fn example(name: &str) -> PathBuf {
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    deps.parent().unwrap().join("examples").join(name)
}

#[test]
fn fast_examples_run_cleanly() {
    for name in [
        "single_contrast_design",
        "interim_decision",
        "predictive_power",
        "general_prior",
        "mvn_probabilities",
        "multi_contrast_design",
    ] {
        let path = example(name);
        assert!(path.exists(), "{} was not built; run the full `cargo test`, which builds examples", path.display());
        let out = Command::new(&path).output().unwrap();
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stdout.is_empty(), "{name} printed nothing");
    }
}

#[test]
fn simulation_example_runs_with_few_replicates() {
    let out = Command::new(example("simulate_table")).arg("200").output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 7);
}
