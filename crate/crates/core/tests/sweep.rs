mod common;

use volterra_lq::experiment::{run_sweep, ExperimentConfig};

#[test]
fn error_shrinks_with_more_training_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_file(
        &std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/sweep.json"),
    )
    .unwrap();
    cfg.output_dir = dir.path().join("sweep");
    let cells = run_sweep(&cfg, 4).unwrap();
    assert_eq!(cells.len(), 30);
    assert!(dir.path().join("sweep/sweep_summary.csv").is_file());
    for q in [1.0, 2.0] {
        let medians: Vec<f64> = [500, 1000, 2000]
            .iter()
            .map(|&n| {
                let mut v: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.train_len == n)
                    .map(|c| c.rows.iter().find(|r| r.q == q).unwrap().rmse)
                    .collect();
                common::median(&mut v)
            })
            .collect();
        assert!(medians.windows(2).all(|w| w[1] <= w[0]), "q={q}: {medians:?}");
    }
}
