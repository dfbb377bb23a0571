use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::montecarlo::McResult;
use super::summary::McSummary;
use super::HarnessError;
use crate::graph_config::{Graph, TreatmentSlate};
use crate::nuisance::Dataset;
use crate::simgen::{exposure, DgpProfile, GroundTruth};
use crate::walsh::{walsh_features, WalshCoeffs};

pub const RESULTS_HEADER: [&str; 10] = [
    "estimator",
    "N",
    "rep",
    "seed",
    "estimate",
    "ci_low",
    "ci_high",
    "truth",
    "covered",
    "runtime_ms",
];

const SUMMARY_HEADER: [&str; 14] = [
    "estimator",
    "N",
    "reps",
    "failed",
    "mean_bias",
    "median_bias",
    "mean_estimate",
    "median_estimate",
    "sd",
    "q025",
    "q975",
    "ci95_width",
    "mean_interval_width",
    "coverage",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Failed rows leave estimate and interval empty and are marked uncovered.
pub fn write_results_csv<W: Write>(writer: W, results: &[McResult]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        w.write_record([
            r.estimator.name().to_string(),
            r.n.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            opt(r.estimate),
            opt(r.ci_low),
            opt(r.ci_high),
            r.truth.to_string(),
            r.covered.to_string(),
            r.runtime_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<McResult>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(HarnessError::Parse(format!("unexpected results header {header:?}")));
    }
    let num = |s: &str, what: &str| -> Result<Option<f64>, HarnessError> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>()
            .map(Some)
            .map_err(|_| HarnessError::Parse(format!("bad {what} value {s:?}")))
    };
    let int = |s: &str, what: &str| -> Result<u64, HarnessError> {
        s.parse::<u64>().map_err(|_| HarnessError::Parse(format!("bad {what} value {s:?}")))
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let estimate = num(&rec[4], "estimate")?;
        out.push(McResult {
            estimator: rec[0].parse()?,
            n: int(&rec[1], "N")? as usize,
            rep: int(&rec[2], "rep")? as usize,
            seed: int(&rec[3], "seed")?,
            estimate,
            ci_low: num(&rec[5], "ci_low")?,
            ci_high: num(&rec[6], "ci_high")?,
            truth: num(&rec[7], "truth")?.unwrap_or(f64::NAN),
            covered: rec[8]
                .parse()
                .map_err(|_| HarnessError::Parse(format!("bad covered value {:?}", &rec[8])))?,
            runtime_ms: int(&rec[9], "runtime_ms")?,
            error: estimate.is_none().then(|| "failed".to_string()),
        });
    }
    Ok(out)
}

pub fn write_summary_csv<W: Write>(writer: W, summary: &[McSummary]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for s in summary {
        w.write_record([
            s.estimator.name().to_string(),
            s.n.to_string(),
            s.reps.to_string(),
            s.failed.to_string(),
            opt(s.mean_bias),
            opt(s.median_bias),
            opt(s.mean_estimate),
            opt(s.median_estimate),
            opt(s.sd),
            opt(s.q025),
            opt(s.q975),
            opt(s.ci95_width),
            opt(s.mean_interval_width),
            opt(s.coverage),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Mirror<'a> {
    results: &'a [McResult],
    summary: &'a [McSummary],
}

/// JSON copy of the results and summary tables.
pub fn write_json_mirror<W: Write>(writer: W, results: &[McResult], summary: &[McSummary]) -> Result<(), HarnessError> {
    serde_json::to_writer_pretty(writer, &Mirror { results, summary })?;
    Ok(())
}

/// Long-format plot data: `estimator,N,rep,stat,value`. Each successful rep
/// contributes an `estimate` row; each summary contributes one row per
/// statistic with `rep` left empty.
pub fn write_plot_csv<W: Write>(writer: W, results: &[McResult], summary: &[McSummary]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["estimator", "N", "rep", "stat", "value"])?;
    for r in results {
        if let Some(e) = r.estimate {
            w.write_record([r.estimator.name(), &r.n.to_string(), &r.rep.to_string(), "estimate", &e.to_string()])?;
        }
    }
    for s in summary {
        let stats = [
            ("mean", s.mean_estimate),
            ("median", s.median_estimate),
            ("sd", s.sd),
            ("q025", s.q025),
            ("q975", s.q975),
            ("ci95_width", s.ci95_width),
            ("mean_interval_width", s.mean_interval_width),
            ("coverage", s.coverage),
        ];
        for (name, v) in stats {
            if let Some(v) = v {
                w.write_record([s.estimator.name(), &s.n.to_string(), "", name, &v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDump {
    /// True coefficient vector of every unit.
    pub alpha: Vec<WalshCoeffs>,
    /// Base coefficients as `(subset mask, value)`, when known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub base: Vec<(u64, f64)>,
}

/// Replayable dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBundle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<DgpProfile>,
    pub graph: GraphDump,
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    pub t: Vec<TreatmentSlate>,
    #[serde(rename = "Y")]
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthDump>,
}

impl DatasetBundle {
    pub fn from_parts(data: &Dataset, profile: Option<&DgpProfile>, truth: Option<&GroundTruth>) -> Self {
        Self {
            profile: profile.cloned(),
            graph: GraphDump {
                n: data.graph().num_nodes(),
                edges: data.graph().edges().iter().map(|&(u, v)| [u, v]).collect(),
            },
            x: data.covariates().to_vec(),
            t: data.slates().to_vec(),
            y: data.outcomes().to_vec(),
            truth: truth.map(|g| TruthDump {
                alpha: g.alpha_of_unit.clone(),
                base: g.base.clone(),
            }),
        }
    }

    /// Radius recorded in the profile, if any.
    pub fn radius(&self) -> Option<usize> {
        self.profile.as_ref().map(|p| p.radius)
    }

    pub fn graph(&self) -> Result<Graph, HarnessError> {
        let edges: Vec<(usize, usize)> = self.graph.edges.iter().map(|e| (e[0], e[1])).collect();
        Ok(Graph::new(self.graph.n, &edges)?)
    }

    pub fn to_dataset(&self, radius: usize) -> Result<Dataset, HarnessError> {
        let graph = self.graph()?;
        // Units without covariates get a single zero column.
        let x = if self.x.is_empty() { vec![vec![0.0]; self.graph.n] } else { self.x.clone() };
        Ok(Dataset::new(graph, x, self.t.clone(), self.y.clone(), radius)?)
    }

    /// Rebuilds the ground truth. Needs both `profile` and `truth`; the noise
    /// is recovered as `Y - <alpha_i, Z(T_i)>`.
    pub fn ground_truth(&self) -> Result<Option<GroundTruth>, HarnessError> {
        let (Some(profile), Some(truth)) = (&self.profile, &self.truth) else {
            return Ok(None);
        };
        let n = self.graph.n;
        if truth.alpha.len() != n || self.t.len() != n || self.y.len() != n {
            return Err(HarnessError::Parse(format!(
                "truth has {} units, T {}, Y {}, graph {n}",
                truth.alpha.len(),
                self.t.len(),
                self.y.len()
            )));
        }
        let graph = self.graph()?;
        let mut noiseless = Vec::with_capacity(n);
        for (a, t) in truth.alpha.iter().zip(&self.t) {
            let z = walsh_features(t, a.index_set())?;
            noiseless.push(a.dot(&z)?);
        }
        Ok(Some(GroundTruth {
            noise: self.y.iter().zip(&noiseless).map(|(y, m)| y - m).collect(),
            noiseless_outcomes: noiseless,
            alpha_of_unit: truth.alpha.clone(),
            base: truth.base.clone(),
            exposure: (0..n).map(|i| exposure(&graph, &self.t, i)).collect(),
            dgp: profile.clone(),
        }))
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string(self)?)
    }
}
