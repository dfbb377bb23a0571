use slatenet::estimator::PipelineConfig;
use slatenet::harness::{
    read_results_csv, run_montecarlo, summarize, write_results_csv, write_summary_csv, EstimatorKind, FailureHook,
    McOptions, McResult,
};
use slatenet::simgen::DgpProfile;

fn small() -> DgpProfile {
    DgpProfile {
        p: 4,
        covariate_dim: 2,
        avg_degree: 4.0,
        true_contrast: 1.5,
        ..DgpProfile::fig2()
    }
}

fn options<'a>() -> McOptions<'a> {
    McOptions {
        sizes: vec![40, 80],
        reps: 4,
        base_seed: 17,
        pipeline: PipelineConfig {
            order_cap: Some(2),
            ..PipelineConfig::default()
        },
        ..McOptions::default()
    }
}

#[test]
fn noiseless_oracle_recovers_truth_exactly() {
    let profile = DgpProfile { noise_sd: 0.0, ..small() };
    let opts = McOptions {
        estimators: vec![EstimatorKind::Oracle],
        ..options()
    };
    let rows = run_montecarlo(&profile, &opts).unwrap();
    assert_eq!(rows.len(), 8);
    for r in &rows {
        assert_eq!(r.estimate, Some(r.truth));
        assert_eq!(r.ci_low, r.ci_high);
        assert!(r.covered);
    }
}

#[test]
fn injected_failures_become_rows() {
    let hook: &FailureHook = &|kind, n, rep| kind == EstimatorKind::Proposed && n == 80 && rep % 2 == 1;
    let opts = McOptions {
        failure_hook: Some(hook),
        ..options()
    };
    let rows = run_montecarlo(&small(), &opts).unwrap();
    assert_eq!(rows.len(), 2 * 4 * 3);
    let failed: Vec<_> = rows.iter().filter(|r| !r.succeeded()).collect();
    assert_eq!(failed.len(), 2);
    assert!(failed.iter().all(|r| r.estimator == EstimatorKind::Proposed && r.n == 80 && r.error.is_some()));
    let summary = summarize(&rows);
    let cell = summary.iter().find(|s| s.estimator == EstimatorKind::Proposed && s.n == 80).unwrap();
    assert_eq!((cell.reps, cell.failed), (2, 2));
    assert!(summary.iter().filter(|s| s.n == 40).all(|s| s.failed == 0));
}

#[test]
fn outputs_identical_across_worker_counts_and_coverage_recomputable() {
    let one = run_montecarlo(&small(), &options()).unwrap();
    let three = run_montecarlo(&small(), &McOptions { workers: 3, ..options() }).unwrap();
    let csv = |rows: &[McResult]| {
        let mut buf = Vec::new();
        write_results_csv(&mut buf, rows).unwrap();
        buf
    };
    assert_eq!(csv(&one), csv(&three));
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_summary_csv(&mut a, &summarize(&one)).unwrap();
    write_summary_csv(&mut b, &summarize(&three)).unwrap();
    assert_eq!(a, b);

    let back = read_results_csv(csv(&one).as_slice()).unwrap();
    assert_eq!(back.len(), one.len());
    for r in &back {
        let covered = r.ci_low.zip(r.ci_high).is_some_and(|(lo, hi)| lo <= r.truth && r.truth <= hi);
        assert_eq!(r.covered, covered);
    }
}
