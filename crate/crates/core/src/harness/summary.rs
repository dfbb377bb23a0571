use serde::{Deserialize, Serialize};

use super::montecarlo::{EstimatorKind, McResult};

/// Per-(estimator, N) aggregate. Statistics are `None` when every rep in the
/// cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub estimator: EstimatorKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub mean_bias: Option<f64>,
    pub median_bias: Option<f64>,
    pub mean_estimate: Option<f64>,
    pub median_estimate: Option<f64>,
    pub sd: Option<f64>,
    pub q025: Option<f64>,
    pub q975: Option<f64>,
    /// Spread of the estimates, `Q97.5 - Q2.5`.
    pub ci95_width: Option<f64>,
    pub mean_interval_width: Option<f64>,
    pub coverage: Option<f64>,
    pub reps: usize,
    pub failed: usize,
}

/// Linear-interpolation quantile (`h = (n - 1) q`) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn summarize_cell(estimator: EstimatorKind, n: usize, rows: &[&McResult]) -> McSummary {
    let ok: Vec<&McResult> = rows.iter().copied().filter(|r| r.succeeded()).collect();
    let failed = rows.len() - ok.len();
    if ok.is_empty() {
        return McSummary {
            estimator,
            n,
            mean_bias: None,
            median_bias: None,
            mean_estimate: None,
            median_estimate: None,
            sd: None,
            q025: None,
            q975: None,
            ci95_width: None,
            mean_interval_width: None,
            coverage: None,
            reps: 0,
            failed,
        };
    }
    let mut est: Vec<f64> = ok.iter().map(|r| r.estimate.unwrap()).collect();
    let mut bias: Vec<f64> = ok.iter().map(|r| r.estimate.unwrap() - r.truth).collect();
    let widths: Vec<f64> = ok.iter().map(|r| r.ci_high.unwrap() - r.ci_low.unwrap()).collect();
    let covered = ok.iter().filter(|r| r.covered).count();
    let sd = sample_sd(&est);
    let mean_est = mean(&est);
    let mean_bias = mean(&bias);
    est.sort_by(f64::total_cmp);
    bias.sort_by(f64::total_cmp);
    let q025 = quantile_sorted(&est, 0.025);
    let q975 = quantile_sorted(&est, 0.975);
    McSummary {
        estimator,
        n,
        mean_bias: Some(mean_bias),
        median_bias: Some(quantile_sorted(&bias, 0.5)),
        mean_estimate: Some(mean_est),
        median_estimate: Some(quantile_sorted(&est, 0.5)),
        sd: Some(sd),
        q025: Some(q025),
        q975: Some(q975),
        ci95_width: Some(q975 - q025),
        mean_interval_width: Some(mean(&widths)),
        coverage: Some(covered as f64 / ok.len() as f64),
        reps: ok.len(),
        failed,
    }
}

/// One summary per (estimator, N), ordered by estimator then N.
pub fn summarize(results: &[McResult]) -> Vec<McSummary> {
    let mut keys: Vec<(EstimatorKind, usize)> = results.iter().map(|r| (r.estimator, r.n)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(e, n)| {
            let rows: Vec<&McResult> = results.iter().filter(|r| r.estimator == e && r.n == n).collect();
            summarize_cell(e, n, &rows)
        })
        .collect()
}
