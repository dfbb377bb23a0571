//! Exit criteria. Every test prints one `PASS`/`FAIL` line and then asserts.
//! Thresholds are fixed here; nothing is calibrated after the fact.

mod common;

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::distance::{brute_discrepancy, partner, random_instance};
use common::*;
use slatenet::estimator::{
    plugin_contrast_t, structural_contrasts, weighted_lasso, weighted_lasso_with, weighted_score, ContrastReport,
    LassoFit, LassoOptions, PipelineConfig, PipelineContext,
};
use slatenet::graph_config::{
    config_distance, extract_config, mark_discrepancy, Graph, MatchOptions, RootMarkPolicy, TreatmentSlate,
};
use slatenet::harness::{run_montecarlo, summarize, EstimatorKind, McOptions, McSummary};
use slatenet::localize::LocalWeights;
use slatenet::nuisance::{make_folds, FeatureTable, ResidualPanel};
use slatenet::simgen::{
    default_contrast, default_target_unit, generate_dataset, true_contrast_value, DgpProfile,
};
use slatenet::walsh::{contrast_direction, walsh_features, WalshIndexSet};

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    println!("criterion {id:>2} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

const SIZES: [usize; 5] = [50, 100, 200, 500, 1000];

struct Sweep {
    summary: Vec<McSummary>,
    elapsed: Duration,
}

impl Sweep {
    fn cell(&self, kind: EstimatorKind, n: usize) -> &McSummary {
        self.summary.iter().find(|s| s.estimator == kind && s.n == n).expect("cell present")
    }
}

/// The shared fig2 Monte Carlo: 100 reps per size, all three estimators,
/// interaction order capped at 2.
fn sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let opts = McOptions {
            sizes: SIZES.to_vec(),
            reps: 100,
            base_seed: 2024,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            pipeline: PipelineConfig {
                order_cap: Some(2),
                ..PipelineConfig::default()
            },
            ..McOptions::default()
        };
        let start = Instant::now();
        let results = run_montecarlo(&DgpProfile::fig2(), &opts).expect("sweep runs");
        let summary = summarize(&results);
        for s in &summary {
            println!(
                "  {:<8} N={:<5} mean_bias={:+.4} median_bias={:+.4} sd={:.4} spread={:.4} ci_width={:.4} coverage={:.2} failed={}",
                s.estimator.name(),
                s.n,
                s.mean_bias.unwrap_or(f64::NAN),
                s.median_bias.unwrap_or(f64::NAN),
                s.sd.unwrap_or(f64::NAN),
                s.ci95_width.unwrap_or(f64::NAN),
                s.mean_interval_width.unwrap_or(f64::NAN),
                s.coverage.unwrap_or(f64::NAN),
                s.failed
            );
        }
        Sweep {
            summary,
            elapsed: start.elapsed(),
        }
    })
}

/// Lower bound on the wall time of the full-dictionary sweep: 100 times one
/// proposed-only replication per size, smallest sizes first, stopping once
/// the budget is exceeded.
fn projected_full_dictionary_sweep(budget: Duration) -> (Duration, bool) {
    let mut total = Duration::ZERO;
    for &n in &SIZES {
        let opts = McOptions {
            sizes: vec![n],
            reps: 1,
            estimators: vec![EstimatorKind::Proposed],
            base_seed: 99,
            pipeline: PipelineConfig::default(),
            ..McOptions::default()
        };
        let start = Instant::now();
        run_montecarlo(&DgpProfile::fig2(), &opts).expect("cell runs");
        total += start.elapsed() * 100;
        if total > budget {
            return (total, false);
        }
    }
    (total, true)
}

#[test]
fn criterion_01_spread_contracts() {
    let s = sweep();
    let spread: Vec<f64> = SIZES
        .iter()
        .map(|&n| s.cell(EstimatorKind::Proposed, n).ci95_width.unwrap_or(f64::NAN))
        .collect();
    let decreasing = spread.windows(2).all(|w| w[1] < w[0]);
    let small_ok = (0.30..=0.80).contains(&spread[0]);
    let large_ok = (0.06..=0.25).contains(&spread[4]);
    let (projected, runtime_ok) = projected_full_dictionary_sweep(Duration::from_secs(30 * 60));
    verdict(
        1,
        "spread contracts in N",
        decreasing && small_ok && large_ok && runtime_ok,
        &format!(
            "spreads {spread:.3?} (decreasing {decreasing}, N=50 in [0.30,0.80] {small_ok}, N=1000 in [0.06,0.25] {large_ok}); \
             capped sweep took {:.0?}; full-dictionary sweep projected at least {:.0?} (<= 30 min {runtime_ok})",
            s.elapsed, projected
        ),
    );
}

#[test]
fn criterion_02_root_n_rate() {
    let s = sweep();
    let sd50 = s.cell(EstimatorKind::Proposed, 50).sd.unwrap_or(f64::NAN);
    let sd1000 = s.cell(EstimatorKind::Proposed, 1000).sd.unwrap_or(f64::NAN);
    let ratio = sd50 / sd1000;
    verdict(
        2,
        "sd ratio N=50 / N=1000",
        (3.0..=6.5).contains(&ratio),
        &format!("sd {sd50:.4} / {sd1000:.4} = {ratio:.3}, need [3.0, 6.5]"),
    );
}

#[test]
fn criterion_03_coverage() {
    let s = sweep();
    let cov: Vec<f64> = SIZES
        .iter()
        .map(|&n| s.cell(EstimatorKind::Proposed, n).coverage.unwrap_or(f64::NAN))
        .collect();
    verdict(
        3,
        "nominal 95% coverage",
        cov.iter().all(|c| (0.88..=0.98).contains(c)),
        &format!("coverage by N {cov:.2?}, need [0.88, 0.98] everywhere"),
    );
}

#[test]
fn criterion_04_estimator_ordering() {
    let s = sweep();
    let get = |k| {
        let c = s.cell(k, 500);
        (
            c.mean_bias.unwrap_or(f64::NAN).abs(),
            c.mean_interval_width.unwrap_or(f64::NAN),
        )
    };
    let (bo, wo) = get(EstimatorKind::Oracle);
    let (bp, wp) = get(EstimatorKind::Proposed);
    let (bb, wb) = get(EstimatorKind::Baseline);
    let bias_order = bo < bp && bp < bb;
    let width_order = wo < wp && wp < wb;
    let proposed_ok = bp <= 0.08;
    verdict(
        4,
        "oracle < proposed < baseline at N=500",
        bias_order && width_order && proposed_ok,
        &format!(
            "|bias| oracle {bo:.4} proposed {bp:.4} baseline {bb:.4} (ordered {bias_order}); \
             width oracle {wo:.4} proposed {wp:.4} baseline {wb:.4} (ordered {width_order}); \
             proposed |bias| <= 0.08 {proposed_ok}"
        ),
    );
}

#[test]
fn criterion_05_median_bias() {
    let s = sweep();
    let med: Vec<(usize, f64)> = SIZES
        .iter()
        .filter(|&&n| n >= 200)
        .map(|&n| (n, s.cell(EstimatorKind::Proposed, n).median_bias.unwrap_or(f64::NAN)))
        .collect();
    verdict(
        5,
        "median bias for N >= 200",
        med.iter().all(|(_, m)| m.abs() <= 0.05),
        &format!("median bias {med:.4?}, need within +-0.05"),
    );
}

fn star(leaves: &[&[i8]], root: &[i8]) -> slatenet::graph_config::RootedConfig {
    let n = leaves.len() + 1;
    let edges: Vec<(usize, usize)> = (1..n).map(|v| (0, v)).collect();
    let g = Graph::new(n, &edges).unwrap();
    let mut slates = vec![TreatmentSlate::new(root.to_vec()).unwrap()];
    slates.extend(leaves.iter().map(|l| TreatmentSlate::new(l.to_vec()).unwrap()));
    extract_config(&g, &slates, 0, 1).unwrap()
}

#[test]
fn criterion_06_distance_oracle() {
    let opts = MatchOptions::default();
    // Two-leaf stars with equal roots; one leaf slate differs.
    let g = star(&[&[1, -1], &[-1, 1]], &[1, 1]);
    let g2 = star(&[&[1, 1], &[-1, 1]], &[1, 1]);
    let g3 = star(&[&[1, -1], &[-1, 1], &[1, 1]], &[1, 1]);
    let half = mark_discrepancy(&g, &g2, 1, &opts).unwrap();
    let dist = config_distance(&g, &g2, 1, &opts).unwrap();
    let non_iso = mark_discrepancy(&g, &g3, 1, &opts).unwrap();
    let example_ok = half == 0.5 && dist == 0.125 && non_iso == 1.0;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n = rng.random_range(1..=8);
        let p = rng.random_range(1..=2);
        let (ga, sa) = random_instance(&mut rng, n, 0.4, p);
        let (gb, sb) = partner(&mut rng, &ga, &sa, p);
        let a = extract_config(&ga, &sa, rng.random_range(0..n), 2).unwrap();
        let b = extract_config(&gb, &sb, rng.random_range(0..n), 2).unwrap();
        for policy in [RootMarkPolicy::Exclude, RootMarkPolicy::Include] {
            let o = MatchOptions {
                root_marks: policy,
                ..MatchOptions::default()
            };
            for r in 0..=2 {
                if mark_discrepancy(&a, &b, r, &o).unwrap() != brute_discrepancy(&a, &b, r, policy) {
                    mismatches += 1;
                }
            }
        }
    }
    verdict(
        6,
        "configuration distance",
        example_ok && mismatches == 0,
        &format!(
            "worked example delta_1 {half}, d {dist}, non-isomorphic {non_iso}; \
             {mismatches} disagreements with exhaustive matching over 500 pairs"
        ),
    );
}

#[test]
fn criterion_07_walsh_orthonormality() {
    let mut failures = 0;
    for p in 1..=6usize {
        let set = WalshIndexSet::full(p).unwrap();
        let rows: Vec<Vec<i64>> = (0..1u64 << p)
            .map(|m| {
                walsh_features(&TreatmentSlate::from_neg_mask(p, m).unwrap(), &set)
                    .unwrap()
                    .iter()
                    .map(|&x| x as i64)
                    .collect()
            })
            .collect();
        for a in 0..set.len() {
            for b in 0..set.len() {
                let sum: i64 = rows.iter().map(|r| r[a] * r[b]).sum();
                if sum != if a == b { 1 << p } else { 0 } {
                    failures += 1;
                }
            }
        }
    }
    verdict(
        7,
        "character orthonormality p <= 6",
        failures == 0,
        &format!("{failures} nonzero off-diagonal or non-unit diagonal sums"),
    );
}

/// Debiasing Monte Carlo shared by criteria 8, 9 and 11: small p = 4
/// network, nonzero contrast, heavy penalty.
struct DebiasRun {
    fits: Vec<(LassoFit, Vec<f64>)>,
    reports: Vec<(ContrastReport, f64)>,
    family_failures: usize,
}

fn debias_run() -> &'static DebiasRun {
    static RUN: OnceLock<DebiasRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let (t, t2) = default_contrast(4);
        let mut fits = Vec::new();
        let mut reports = Vec::new();
        let mut family_failures = 0;
        for seed in 0..200u64 {
            let profile = DgpProfile {
                n: 300,
                p: 4,
                true_contrast: 2.0,
                covariate_dim: 3,
                seed: 9000 + seed,
                ..DgpProfile::fig2()
            };
            let (data, truth) = generate_dataset(&profile).unwrap();
            let cfg = PipelineConfig {
                c_lambda: 4.0,
                order_cap: Some(2),
                seed,
                ..PipelineConfig::default()
            };
            let ctx = PipelineContext::new(&data, &cfg).unwrap();
            let unit = default_target_unit(data.graph());
            let report = ctx.estimate(unit, &t, &t2).unwrap();
            reports.push((report, true_contrast_value(&truth, unit, &t, &t2).unwrap()));
            let (fit, _) = ctx.fit(&ctx.weights_for_unit(unit).unwrap()).unwrap();
            if seed % 10 == 0 {
                let other = (unit + 1) % data.len();
                let (fit2, _) = ctx.fit(&ctx.weights_for_unit(other).unwrap()).unwrap();
                let (g_same, gt_same) = structural_contrasts(&fit, &fit, &t, &t2).unwrap();
                if g_same != 0.0 || gt_same != plugin_contrast_t(&fit, &t, &t2).unwrap() {
                    family_failures += 1;
                }
                let (g, gt) = structural_contrasts(&fit, &fit2, &t2, &t2).unwrap();
                if g != gt {
                    family_failures += 1;
                }
            }
            fits.push((fit, truth.alpha_of_unit[unit].values().to_vec()));
        }
        DebiasRun {
            fits,
            reports,
            family_failures,
        }
    })
}

#[test]
fn criterion_08_lasso_correctness() {
    // KKT on every converged fit: the pipeline fits plus a warm-started path.
    let run = debias_run();
    let mut worst: f64 = 0.0;
    let mut converged = 0;
    for (fit, _) in &run.fits {
        if fit.converged {
            converged += 1;
            worst = worst.max(fit.kkt_violation);
        }
    }
    let set = WalshIndexSet::new(5, 2).unwrap();
    let mut r = rng(8);
    let z = random_walsh_rows(150, &set, &mut r);
    let y: Vec<f64> = z.iter().map(|row| row[2] - row[9] + r.random_range(-1.0..1.0)).collect();
    let w = random_weights(150, &mut r);
    let p = panel(y, z, set);
    let mut warm: Option<Vec<f64>> = None;
    for lambda in [2.0, 0.5, 0.1, 0.02, 0.0] {
        let fit = weighted_lasso_with(&p, &w, lambda, warm.as_deref(), &LassoOptions::default()).unwrap();
        if fit.converged {
            converged += 1;
            worst = worst.max(fit.kkt_violation);
        }
        warm = Some(fit.alpha_hat.into_values());
    }
    let kkt_ok = worst <= 1e-8;

    // Unpenalized fits against the normal equations, d = 2, 3, 4.
    let mut wls_gap: f64 = 0.0;
    for (k, set) in [WalshIndexSet::full(1), WalshIndexSet::new(2, 1), WalshIndexSet::full(2)]
        .into_iter()
        .enumerate()
    {
        let set = set.unwrap();
        let mut r = rng(80 + k as u64);
        let z = random_walsh_rows(50, &set, &mut r);
        let y: Vec<f64> = (0..50).map(|_| r.random_range(-3.0..3.0)).collect();
        let w = random_weights(50, &mut r);
        let want = wls(&y, &z, w.weights());
        let fit = weighted_lasso(&panel(y, z, set), &w, 0.0).unwrap();
        for (a, b) in fit.alpha_hat.values().iter().zip(&want) {
            wls_gap = wls_gap.max((a - b).abs());
        }
    }
    let wls_ok = wls_gap <= 1e-8;

    // Exhaustive support search on N = 30, d = 8 noiseless 2-sparse designs.
    let set = WalshIndexSet::full(3).unwrap();
    let mut oracle_gap: f64 = 0.0;
    let mut support_misses = 0;
    for seed in 0..20 {
        let mut r = rng(800 + seed);
        let mut z: Vec<Vec<f64>> = (0..24u64)
            .map(|k| walsh_features(&TreatmentSlate::from_neg_mask(3, k % 8).unwrap(), &set).unwrap())
            .collect();
        z.extend(random_walsh_rows(6, &set, &mut r));
        let a = r.random_range(0..8);
        let b = (a + r.random_range(1..8)) % 8;
        let mut beta = vec![0.0; 8];
        beta[a] = r.random_range(1.0..2.0);
        beta[b] = -r.random_range(1.0..2.0);
        let y: Vec<f64> = z.iter().map(|row| row.iter().zip(&beta).map(|(u, v)| u * v).sum()).collect();
        let w = random_weights(30, &mut r);
        let (g, c) = normal_equations(&y, &z, w.weights());
        let want = exhaustive_lasso(&g, &c, 0.02);
        let fit = weighted_lasso(&panel(y, z, set.clone()), &w, 0.02).unwrap();
        for k in 0..8 {
            oracle_gap = oracle_gap.max((fit.alpha_hat.values()[k] - want[k]).abs());
            if (fit.alpha_hat.values()[k] != 0.0) != (beta[k] != 0.0) {
                support_misses += 1;
            }
        }
    }
    let oracle_ok = oracle_gap <= 1e-7 && support_misses == 0;
    verdict(
        8,
        "weighted Lasso",
        kkt_ok && wls_ok && oracle_ok,
        &format!(
            "worst KKT {worst:.2e} over {converged} converged fits; unpenalized vs normal equations {wls_gap:.2e}; \
             exhaustive search gap {oracle_gap:.2e} with {support_misses} support misses"
        ),
    );
}

#[test]
fn criterion_09_debias_feasibility_and_benefit() {
    let run = debias_run();
    let infeasible = run
        .reports
        .iter()
        .filter(|(r, _)| r.diagnostics.feasibility_gap > r.eta)
        .count();
    let closer = run
        .reports
        .iter()
        .filter(|(r, truth)| (r.debiased_estimate - truth).abs() < (r.plugin_estimate - truth).abs())
        .count();
    let share = closer as f64 / run.reports.len() as f64;
    verdict(
        9,
        "debiasing",
        infeasible == 0 && share >= 0.70,
        &format!(
            "{infeasible} reports with gap > eta; debiased closer than plug-in in {closer}/{} ({share:.2}), need >= 0.70",
            run.reports.len()
        ),
    );
}

#[test]
fn criterion_10_orthogonal_score() {
    // No interference, so the true nuisances are known: the outcome mean is
    // zero and the feature mean is the intercept indicator.
    let profile = DgpProfile {
        n: 200_000,
        p: 4,
        interference_strength: 0.0,
        covariate_dim: 2,
        seed: 10,
        ..DgpProfile::fig2()
    };
    let (data, truth) = generate_dataset(&profile).unwrap();
    let set = truth.index_set().clone();
    let alpha = truth.alpha_of_unit[0].values().to_vec();
    let d = set.len();
    let n = data.len();
    let features = FeatureTable::new(data.slates(), &set).unwrap();
    let folds = make_folds(n, 2, 0).unwrap();
    let weights = LocalWeights::uniform(n).unwrap();

    // Perturbation directions bounded by 1 in sup norm.
    let k = (1..d).find(|&k| alpha[k] != 0.0).expect("a non-intercept active term");
    let a: Vec<f64> = data.covariates().iter().map(|x| x[0].cos()).collect();
    let b_sign = -alpha[k].signum();
    let score_at = |delta: f64| -> Vec<f64> {
        let mu: Vec<f64> = a.iter().map(|v| delta * v).collect();
        let m: Vec<Vec<f64>> = a
            .iter()
            .map(|v| {
                let mut row = vec![0.0; d];
                row[0] = 1.0;
                row[k] = delta * b_sign * v;
                row
            })
            .collect();
        let panel = ResidualPanel::from_nuisance(data.outcomes(), &features, &mu, &m, folds.clone()).unwrap();
        weighted_score(&panel, &weights, &alpha).unwrap()
    };
    let base = score_at(0.0);

    // First-order sampling scale: sd of the per-unit derivative of the
    // summand at delta = 0.
    let mut s_hat: f64 = 0.0;
    for c in 0..d {
        let vals: Vec<f64> = (0..n)
            .map(|j| {
                let z = features.row(j);
                let mut zt = z.to_vec();
                zt[0] = 0.0;
                let eps = data.outcomes()[j] - zt.iter().zip(&alpha).map(|(u, v)| u * v).sum::<f64>();
                let bj = if c == k { b_sign * a[j] } else { 0.0 };
                zt[c] * (a[j] - b_sign * a[j] * alpha[k]) + bj * eps
            })
            .collect();
        s_hat = s_hat.max(slatenet::harness::sample_sd(&vals));
    }
    let floor_rate = (2.0 * ((2 * d) as f64).ln() / weights.n_eff()).sqrt() * s_hat;

    let deltas = [0.2, 0.1, 0.05, 0.025];
    let mut remainders = Vec::new();
    for &delta in &deltas {
        let shifted = score_at(delta);
        let shift = shifted.iter().zip(&base).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        remainders.push(shift - delta * floor_rate);
    }
    let positive = remainders.iter().all(|&r| r > 0.0);
    let slope = if positive { log_log_slope(&deltas, &remainders) } else { f64::NAN };
    verdict(
        10,
        "score shift is second order",
        positive && slope > 1.5,
        &format!(
            "floor rate {floor_rate:.2e}; remainders [{}]; log-log slope {slope:.3}, need > 1.5",
            remainders.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    );
}

#[test]
fn criterion_11_contrast_geometry() {
    let run = debias_run();
    let set = run.fits[0].0.alpha_hat.index_set().clone();
    let mut violations = 0;
    let mut checked = 0;
    for (fit, alpha) in &run.fits {
        let l1: f64 = fit.alpha_hat.values().iter().zip(alpha).map(|(a, b)| (a - b).abs()).sum();
        for ta in 0..16u64 {
            for tb in 0..16u64 {
                let t = TreatmentSlate::from_neg_mask(4, ta).unwrap();
                let t2 = TreatmentSlate::from_neg_mask(4, tb).unwrap();
                let v = contrast_direction(&t, &t2, &set).unwrap();
                let truth: f64 = alpha.iter().zip(&v).map(|(a, b)| a * b).sum();
                let err = plugin_contrast_t(fit, &t, &t2).unwrap() - truth;
                checked += 1;
                if err.abs() > 2.0 * l1 + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    verdict(
        11,
        "contrast geometry and family identities",
        violations == 0 && run.family_failures == 0,
        &format!(
            "{violations} bound violations over {checked} fit/slate pairs; {} family identity failures",
            run.family_failures
        ),
    );
}
