use causal_patterns::clustering::{clusterwise_gc, hard_assign, misallocation_rate, ClusterAssignment};
use causal_patterns::io::read_table;
use causal_patterns::mppcca::{e_step_with_log_likelihood, fit, FitConfig, MppccaModel};
use causal_patterns::pcca::Ridge;
use causal_patterns::preprocess::{apply_document, build_regression_blocks, EmbeddingSpec, PreprocessDocument};
use causal_patterns::synthgen::{gen_exp1, Exp1Params, LabeledSeries};
use causal_patterns::RegressionDataset;
use nalgebra::DMatrix;

fn column(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

#[test]
fn csv_to_report_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let series_path = dir.path().join("exp1.csv");
    gen_exp1(&Exp1Params::default(), 4)
        .unwrap()
        .write_csv(std::fs::File::create(&series_path).unwrap())
        .unwrap();
    let series = LabeledSeries::read_csv(std::fs::File::open(&series_path).unwrap()).unwrap();

    // Single-lag embedding with full PCA is a rotation of the lagged blocks.
    let spec = EmbeddingSpec::single_lag();
    let blocks = build_regression_blocks(&column(&series.y), &column(&series.x), &spec, 1.0).unwrap();
    let lagged = RegressionDataset::lagged(&series.x, &series.y).unwrap();
    assert_eq!(blocks.dataset.len(), lagged.len());
    assert_eq!(blocks.first_time, 1);

    let result = fit(
        &blocks.dataset,
        3,
        1,
        &FitConfig {
            restarts: 4,
            ..Default::default()
        },
    )
    .unwrap();
    let model_path = dir.path().join("model.json");
    std::fs::write(&model_path, result.model.to_json().unwrap()).unwrap();
    let doc_path = dir.path().join("preprocess.json");
    std::fs::write(&doc_path, serde_json::to_string(&blocks.document(spec, 1.0)).unwrap()).unwrap();

    let model = MppccaModel::from_json(&std::fs::read_to_string(&model_path).unwrap()).unwrap();
    let doc: PreprocessDocument = serde_json::from_str(&std::fs::read_to_string(&doc_path).unwrap()).unwrap();
    let data = apply_document(&doc, &column(&series.y), &column(&series.x)).unwrap();
    assert_eq!(data, blocks.dataset);

    let (resp, ll) = e_step_with_log_likelihood(&model, &data).unwrap();
    assert_eq!(ll, *result.trace.log_likelihood_per_iter.last().unwrap());
    let est = hard_assign(&resp);
    let truth = ClusterAssignment::from_labels(series.truth[1..].to_vec());
    assert!(misallocation_rate(&est, &truth).unwrap() < 0.1);

    let report = clusterwise_gc(&data, &est, Ridge::default()).unwrap();
    let lagged_report = clusterwise_gc(&lagged, &est, Ridge::default()).unwrap();
    for (a, b) in report.per_cluster.iter().zip(&lagged_report.per_cluster) {
        assert!((a.gc_index.unwrap() - b.gc_index.unwrap()).abs() < 1e-8);
    }

    let gc_path = dir.path().join("gc.csv");
    report.write_csv(std::fs::File::create(&gc_path).unwrap()).unwrap();
    let table = read_table(std::fs::File::open(&gc_path).unwrap()).unwrap();
    assert_eq!(table.headers, ["cluster_id", "n_samples", "rho1", "gc_index"]);
    let max = table.column("gc_index").unwrap().into_iter().fold(0.0, f64::max);
    assert!((max - 4.62).abs() < 0.5, "{max}");
}
