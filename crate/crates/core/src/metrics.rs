//! Filter coefficient ε₁ and error variance ε₂ per quantity, with class
//! aggregates, run comparison and CSV / text emission.
//!
//! ```text
//! ε₁ = Σ_t (x̂_t − x⁺_t)² / Σ_t (x^M_t − x⁺_t)²        ε₂ = Σ_t (x̂_t − x⁺_t)² / S
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimationProblem, EstimationTrace};
use crate::net::density_to_pressure_bar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantityClass {
    Pressure,
    Flow,
    Load,
    E,
    F,
}

impl QuantityClass {
    pub const ALL: [QuantityClass; 5] = [
        QuantityClass::Pressure,
        QuantityClass::Flow,
        QuantityClass::Load,
        QuantityClass::E,
        QuantityClass::F,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuantityClass::Pressure => "pressure",
            QuantityClass::Flow => "flow",
            QuantityClass::Load => "load",
            QuantityClass::E => "e",
            QuantityClass::F => "f",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// Aligned series of one reported quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantitySeries {
    pub name: String,
    pub class: QuantityClass,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
    /// Direct measurement of the quantity, if it has one.
    pub measured: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityMetrics {
    pub name: String,
    pub class: QuantityClass,
    pub eps1: Option<f64>,
    /// ε₁ with both sums replaced by medians, for heavy-tailed noise.
    pub eps1_median: Option<f64>,
    pub eps2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAggregate {
    pub count: usize,
    pub measured: usize,
    pub mean_eps1: Option<f64>,
    pub max_eps1: Option<f64>,
    pub mean_eps2: f64,
    pub max_eps2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub steps: usize,
    pub quantities: Vec<QuantityMetrics>,
    pub aggregates: BTreeMap<QuantityClass, ClassAggregate>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `(ε₁, ε₂)` of one quantity; ε₁ is `None` without measurements or when
/// the measurement error is identically zero.
pub fn filter_coefficients(truth: &[f64], measured: Option<&[f64]>, estimate: &[f64]) -> Result<(Option<f64>, f64)> {
    let s = truth.len();
    if s == 0 || estimate.len() != s || measured.is_some_and(|m| m.len() != s) {
        return Err(Error::InvalidArgument(
            "metrics need equal-length, non-empty truth / estimate / measurement series".into(),
        ));
    }
    let est_err: f64 = truth.iter().zip(estimate).map(|(t, e)| (e - t).powi(2)).sum();
    let eps1 = measured.and_then(|m| {
        let meas_err: f64 = truth.iter().zip(m).map(|(t, z)| (z - t).powi(2)).sum();
        (meas_err > 0.0).then(|| est_err / meas_err)
    });
    Ok((eps1, est_err / s as f64))
}

fn median_coefficient(q: &QuantitySeries) -> Option<f64> {
    let m = q.measured.as_ref()?;
    let num = median(q.truth.iter().zip(&q.estimate).map(|(t, e)| (e - t).powi(2)).collect());
    let den = median(q.truth.iter().zip(m).map(|(t, z)| (z - t).powi(2)).collect());
    (den > 0.0).then(|| num / den)
}

pub fn aggregate(quantities: &[QuantityMetrics]) -> BTreeMap<QuantityClass, ClassAggregate> {
    let mut out = BTreeMap::new();
    for class in QuantityClass::ALL {
        let members: Vec<&QuantityMetrics> = quantities.iter().filter(|q| q.class == class).collect();
        if members.is_empty() {
            continue;
        }
        let e1: Vec<f64> = members.iter().filter_map(|q| q.eps1).collect();
        let e2: Vec<f64> = members.iter().map(|q| q.eps2).collect();
        out.insert(
            class,
            ClassAggregate {
                count: members.len(),
                measured: e1.len(),
                mean_eps1: (!e1.is_empty()).then(|| e1.iter().sum::<f64>() / e1.len() as f64),
                max_eps1: e1.iter().copied().reduce(f64::max),
                mean_eps2: e2.iter().sum::<f64>() / e2.len() as f64,
                max_eps2: e2.iter().copied().fold(0.0, f64::max),
            },
        );
    }
    out
}

pub fn compute_metrics(series: &[QuantitySeries]) -> Result<RunReport> {
    let steps = series.first().map_or(0, |q| q.truth.len());
    let mut quantities = Vec::with_capacity(series.len());
    for q in series {
        if q.truth.len() != steps {
            return Err(Error::InvalidArgument(format!(
                "quantity {} has {} samples, expected {steps}",
                q.name,
                q.truth.len()
            )));
        }
        let (eps1, eps2) = filter_coefficients(&q.truth, q.measured.as_deref(), &q.estimate)?;
        quantities.push(QuantityMetrics {
            name: q.name.clone(),
            class: q.class,
            eps1,
            eps1_median: median_coefficient(q),
            eps2,
        });
    }
    Ok(RunReport {
        steps,
        aggregates: aggregate(&quantities),
        quantities,
    })
}

/// Reported quantities of an estimation run: voltages, pressures (bar),
/// segment flows and sink loads, each paired with its truth and, where a
/// channel measures it directly, its measurement.
///
/// Only the slice of the joint state covered by `trace` is reported.
pub fn extract_quantities(
    problem: &EstimationProblem,
    trace: &EstimationTrace,
    truth: &[DVector<f64>],
    measurements: &[DVector<f64>],
) -> Result<Vec<QuantitySeries>> {
    let model = &problem.model;
    let gas = &problem.gas.layout;
    let layout = &problem.layout;
    let state_cols = trace.state_cols.clone();
    let estimates = &trace.estimates;
    if truth.len() != estimates.len() || truth.len() != measurements.len() {
        return Err(Error::InvalidArgument(format!(
            "trajectory lengths differ: truth {}, measurements {}, estimates {}",
            truth.len(),
            measurements.len(),
            estimates.len()
        )));
    }
    let c_s = model.constants.c_s;
    let np = model.power_state_dim();
    let channel_series = |name: &str| {
        layout
            .index_of(name)
            .map(|i| measurements.iter().map(|z| z[i]).collect::<Vec<f64>>())
    };
    let mut out = Vec::new();
    for (k, name) in trace.state_names.iter().enumerate() {
        let col = state_cols.start + k;
        let est: Vec<f64> = estimates.iter().map(|x| x[k]).collect();
        let tru: Vec<f64> = truth.iter().map(|x| x[col]).collect();
        let (qname, class, scale) = if let Some(node) = name.strip_prefix("rho_") {
            (format!("p_{node}"), QuantityClass::Pressure, density_to_pressure_bar(1.0, c_s))
        } else if name.starts_with("mflow_") {
            (name.clone(), QuantityClass::Flow, 1.0)
        } else if name.starts_with("e_") {
            (name.clone(), QuantityClass::E, 1.0)
        } else {
            (name.clone(), QuantityClass::F, 1.0)
        };
        let measured = channel_series(&qname);
        out.push(QuantitySeries {
            truth: tru.iter().map(|v| v * scale).collect(),
            estimate: est.iter().map(|v| v * scale).collect(),
            measured,
            name: qname,
            class,
        });
    }

    let gas_cols = np..np + gas.dim();
    if state_cols.start <= gas_cols.start && state_cols.end >= gas_cols.end {
        let off = gas_cols.start - state_cols.start;
        for &pos in &gas.sinks {
            let node = &model.gas_nodes[pos];
            if node.is_junction() && model.gtu_for_sink(node.id).is_none() {
                continue;
            }
            let row = gas.balance_row(pos);
            let eval = |x: &DVector<f64>, base: usize| row.iter().map(|&(c, w)| w * x[base + c]).sum::<f64>();
            let name = format!("load_{}", node.id);
            out.push(QuantitySeries {
                truth: truth.iter().map(|x| eval(x, gas_cols.start)).collect(),
                estimate: estimates.iter().map(|x| eval(x, off)).collect(),
                measured: channel_series(&name),
                name,
                class: QuantityClass::Load,
            });
        }
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_report_csv(report: &RunReport, path: &Path) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["quantity", "class", "eps1", "eps1_median", "eps2"]).map_err(csv_err)?;
    for q in &report.quantities {
        w.write_record([
            q.name.clone(),
            q.class.as_str().to_string(),
            fmt_opt(q.eps1),
            fmt_opt(q.eps1_median),
            q.eps2.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a report written by [`write_report_csv`]; aggregates are recomputed.
pub fn read_report_csv(path: &Path, steps: usize) -> Result<RunReport> {
    let bad = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let parse_opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad(format!("not a number: '{s}'")))
        }
    };
    let mut quantities = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", rec.len())));
        }
        quantities.push(QuantityMetrics {
            name: rec[0].to_string(),
            class: QuantityClass::parse(&rec[1]).ok_or_else(|| bad(format!("unknown class '{}'", &rec[1])))?,
            eps1: parse_opt(&rec[2])?,
            eps1_median: parse_opt(&rec[3])?,
            eps2: parse_opt(&rec[4])?.ok_or_else(|| bad("missing eps2".into()))?,
        });
    }
    Ok(RunReport {
        steps,
        aggregates: aggregate(&quantities),
        quantities,
    })
}

/// Per-class means followed by the ten quantities with the largest ε₁.
pub fn summary_text(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "steps: {}", report.steps);
    let _ = writeln!(s, "{:<10} {:>6} {:>8} {:>14} {:>14} {:>14}", "class", "count", "measured", "mean_eps1", "max_eps1", "mean_eps2");
    for (class, a) in &report.aggregates {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6e}"));
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>8} {:>14} {:>14} {:>14.6e}",
            class.as_str(),
            a.count,
            a.measured,
            f(a.mean_eps1),
            f(a.max_eps1),
            a.mean_eps2
        );
    }
    let mut worst: Vec<&QuantityMetrics> = report.quantities.iter().filter(|q| q.eps1.is_some()).collect();
    worst.sort_by(|a, b| b.eps1.partial_cmp(&a.eps1).unwrap_or(std::cmp::Ordering::Equal).then(a.name.cmp(&b.name)));
    let _ = writeln!(s, "\nworst eps1:");
    for q in worst.iter().take(10) {
        let _ = writeln!(s, "  {:<16} {:.6e}", q.name, q.eps1.unwrap_or(f64::NAN));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassComparison {
    pub class: QuantityClass,
    pub count: usize,
    pub mean_eps2_a: f64,
    pub mean_eps2_b: f64,
    /// `mean_eps2_a / mean_eps2_b`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantityDelta {
    pub name: String,
    pub eps2_a: f64,
    pub eps2_b: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub classes: Vec<ClassComparison>,
    pub quantities: Vec<QuantityDelta>,
}

impl Comparison {
    pub fn class(&self, class: QuantityClass) -> Option<&ClassComparison> {
        self.classes.iter().find(|c| c.class == class)
    }
}

/// Compares two runs over the quantities both of them report.
pub fn compare_runs(a: &RunReport, b: &RunReport) -> Result<Comparison> {
    let b_by_name: BTreeMap<&str, &QuantityMetrics> = b.quantities.iter().map(|q| (q.name.as_str(), q)).collect();
    let common: Vec<(&QuantityMetrics, &QuantityMetrics)> = a
        .quantities
        .iter()
        .filter_map(|qa| b_by_name.get(qa.name.as_str()).map(|qb| (qa, *qb)))
        .collect();
    if common.is_empty() {
        return Err(Error::InvalidArgument("the two runs share no reported quantity".into()));
    }
    let mut classes = Vec::new();
    for class in QuantityClass::ALL {
        let pairs: Vec<_> = common.iter().filter(|(qa, _)| qa.class == class).collect();
        if pairs.is_empty() {
            continue;
        }
        let n = pairs.len() as f64;
        let ma = pairs.iter().map(|(qa, _)| qa.eps2).sum::<f64>() / n;
        let mb = pairs.iter().map(|(_, qb)| qb.eps2).sum::<f64>() / n;
        classes.push(ClassComparison {
            class,
            count: pairs.len(),
            mean_eps2_a: ma,
            mean_eps2_b: mb,
            ratio: if ma == mb { 1.0 } else { ma / mb },
        });
    }
    let quantities = common
        .iter()
        .map(|(qa, qb)| QuantityDelta {
            name: qa.name.clone(),
            eps2_a: qa.eps2,
            eps2_b: qb.eps2,
            delta: qa.eps2 - qb.eps2,
        })
        .collect();
    Ok(Comparison { classes, quantities })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let (e1, e2) = filter_coefficients(&[1.0, 1.0], Some(&[1.1, 0.9]), &[1.05, 0.95]).unwrap();
        assert!((e1.unwrap() - 0.25).abs() < 1e-12);
        assert!((e2 - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_copycat_estimates() {
        let t = [1.0, 2.0, 3.0];
        let m = [1.5, 1.0, 3.2];
        assert_eq!(filter_coefficients(&t, Some(&m), &t).unwrap(), (Some(0.0), 0.0));
        assert_eq!(filter_coefficients(&t, Some(&m), &m).unwrap().0, Some(1.0));
        assert_eq!(filter_coefficients(&t, Some(&t), &m).unwrap().0, None);
        assert!(filter_coefficients(&t, None, &m[..2]).is_err());
    }

    #[test]
    fn self_comparison_is_unity() {
        let q = QuantitySeries {
            name: "p_1".into(),
            class: QuantityClass::Pressure,
            truth: vec![1.0, 2.0],
            estimate: vec![1.1, 2.0],
            measured: Some(vec![1.2, 1.9]),
        };
        let r = compute_metrics(&[q]).unwrap();
        let c = compare_runs(&r, &r).unwrap();
        assert_eq!(c.class(QuantityClass::Pressure).unwrap().ratio, 1.0);
        assert!(c.quantities.iter().all(|d| d.delta == 0.0));
    }
}
