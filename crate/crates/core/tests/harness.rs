use std::fs;

use lspica::harness::{
    estimate_file_name, generate_replicate, read_results_csv, replicate_mixing, run_experiment, separate,
    write_experiment, ExperimentConfig, Method, SeparateOptions,
};
use lspica::metrics::{amari_index, correlation_discrepancy};
use lspica::signals::{read_csv, write_csv, CsvOptions};
use lspica::whittle_ica::EstimateDocument;

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("sim1_desk").unwrap();
    cfg.replicates = 3;
    cfg
}

#[test]
fn amari_recomputes_from_saved_estimates() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let res = run_experiment(&cfg).unwrap();
    write_experiment(&cfg, &res, dir.path()).unwrap();
    let rows = read_results_csv(dir.path().join("results.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    for row in &rows {
        let path = dir.path().join("estimates").join(estimate_file_name(row.method, row.n_samples, row.replicate));
        let doc = EstimateDocument::from_json(&fs::read_to_string(path).unwrap()).unwrap();
        let a = replicate_mixing(&cfg, row.n_samples, row.replicate).unwrap();
        let amari = amari_index(&(doc.unmixing_matrix().unwrap() * a));
        assert!((amari - row.amari.unwrap()).abs() <= 1e-12, "{row:?}");
    }
}

#[test]
fn adding_replicates_leaves_earlier_rows_alone() {
    let mut cfg = small();
    cfg.methods = vec![Method::Sobi];
    let a = run_experiment(&cfg).unwrap();
    cfg.replicates = 5;
    let b = run_experiment(&cfg).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!((x.replicate, x.amari, x.cor_disc), (y.replicate, y.amari, y.cor_disc));
    }
}

#[test]
fn rows_are_sorted_and_complete() {
    let mut cfg = small();
    cfg.sample_sizes = vec![256, 128];
    let res = run_experiment(&cfg).unwrap();
    let keys: Vec<_> = res.rows.iter().map(|r| (r.method, r.n_samples, r.replicate)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(keys.len(), 2 * 2 * 3);
}

#[test]
fn separate_round_trip_on_sim1() {
    let cfg = ExperimentConfig::preset("sim1_4096").unwrap();
    let rep = generate_replicate(&cfg, 4096, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_csv(&rep.observations, &input, &CsvOptions::default()).unwrap();
    for method in [Method::CicaLsp, Method::Sobi] {
        let out_dir = dir.path().join(method.name());
        let out = separate(&input, method, &SeparateOptions::default(), &out_dir).unwrap();
        let s_hat = read_csv::<f64>(&out.sources_csv, &CsvOptions::default()).unwrap();
        let rec = correlation_discrepancy(s_hat.data(), rep.sources.data()).unwrap();
        if method == Method::CicaLsp {
            assert!(rec.cor_disc < 0.5, "{}", rec.cor_disc);
        }
        let doc = EstimateDocument::from_json(&fs::read_to_string(&out.estimate_json).unwrap()).unwrap();
        assert_eq!(doc.unmixing.len(), 4);
        assert!(fs::read_to_string(&out.report_txt).unwrap().contains(method.name()));
    }
}

#[test]
fn malformed_input_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "1,2\n3,4\n5\n").unwrap();
    let err = separate(&input, Method::Sobi, &SeparateOptions::default(), dir.path().join("o")).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
}
