//! Aggregated per-method reports in CSV or JSON, with optional pairwise
//! Wilcoxon tests against a reference method.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics;

use super::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidParameter(format!(
                "unknown report format {other:?} (expected csv or json)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct MethodSummary {
    method: String,
    runs: usize,
    failures: usize,
    fitness_mean: Option<f64>,
    ari_mean: Option<f64>,
    ari_std: Option<f64>,
    nmi_mean: Option<f64>,
    nmi_std: Option<f64>,
    ci_mean: Option<f64>,
    ci_std: Option<f64>,
    time_mean_seconds: Option<f64>,
    /// Two-sided Wilcoxon p-value of the per-seed ARIs against the reference
    /// method; "insufficient_data" when all paired differences vanish.
    #[serde(skip_serializing_if = "Option::is_none")]
    wilcoxon_p_vs_reference: Option<String>,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation (n-1 denominator); zero for a single value.
fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Some(0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    Some(var.sqrt())
}

fn format_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.6}"),
        None => String::new(),
    }
}

/// Paired per-seed ARIs of two methods, for the Wilcoxon column.
fn paired_aris(reference: &[&RunRecord], other: &[&RunRecord]) -> (Vec<f64>, Vec<f64>) {
    let by_seed: BTreeMap<u64, f64> = reference
        .iter()
        .filter_map(|r| r.ari.map(|a| (r.seed, a)))
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in other {
        if let (Some(ari), Some(reference_ari)) = (record.ari, by_seed.get(&record.seed)) {
            xs.push(*reference_ari);
            ys.push(ari);
        }
    }
    (xs, ys)
}

/// Renders per-method means and standard deviations of the validity metrics
/// plus mean fit time. Ordering is lexicographic by method label; float cells
/// use six decimals, so identical inputs yield byte-identical output.
pub fn emit_report(
    records: &[RunRecord],
    format: ReportFormat,
    reference: Option<&str>,
) -> Result<String> {
    if records.is_empty() {
        return Err(Error::InvalidState("no records to report".into()));
    }

    let mut by_method: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for record in records {
        by_method.entry(&record.method).or_default().push(record);
    }
    if let Some(reference) = reference {
        if !by_method.contains_key(reference) {
            return Err(Error::InvalidParameter(format!(
                "reference method {reference:?} has no records"
            )));
        }
    }

    let mut summaries = Vec::new();
    for (method, group) in &by_method {
        let ok: Vec<&&RunRecord> = group.iter().filter(|r| !r.failed).collect();
        let collect = |f: fn(&RunRecord) -> Option<f64>| -> Vec<f64> {
            ok.iter().filter_map(|r| f(r)).collect()
        };
        let aris = collect(|r| r.ari);
        let nmis = collect(|r| r.nmi);
        let cis = collect(|r| r.ci.map(|c| c as f64));
        let fitnesses = collect(|r| (!r.fitness.is_nan()).then_some(r.fitness));
        let times = collect(|r| Some(r.wall_time_seconds));

        let wilcoxon = match reference {
            Some(reference) if *method != reference => {
                let (xs, ys) = paired_aris(&by_method[reference], group);
                Some(match metrics::wilcoxon_signed_rank(&xs, &ys) {
                    Ok(p) => format!("{p:.6e}"),
                    Err(Error::InsufficientData(_)) => "insufficient_data".to_string(),
                    Err(e) => return Err(e),
                })
            }
            _ => None,
        };

        summaries.push(MethodSummary {
            method: method.to_string(),
            runs: group.len(),
            failures: group.len() - ok.len(),
            fitness_mean: mean(&fitnesses),
            ari_mean: mean(&aris),
            ari_std: std_dev(&aris),
            nmi_mean: mean(&nmis),
            nmi_std: std_dev(&nmis),
            ci_mean: mean(&cis),
            ci_std: std_dev(&cis),
            time_mean_seconds: mean(&times),
            wilcoxon_p_vs_reference: wilcoxon,
        });
    }

    match format {
        ReportFormat::Json => {
            Ok(serde_json::to_string_pretty(&summaries).expect("summaries serialize"))
        }
        ReportFormat::Csv => {
            let mut out = String::new();
            out.push_str(
                "method,runs,failures,fitness_mean,ari_mean,ari_std,nmi_mean,nmi_std,\
                 ci_mean,ci_std,time_mean_seconds",
            );
            if reference.is_some() {
                out.push_str(",wilcoxon_p_vs_reference");
            }
            out.push('\n');
            for s in &summaries {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    s.method,
                    s.runs,
                    s.failures,
                    format_opt(s.fitness_mean),
                    format_opt(s.ari_mean),
                    format_opt(s.ari_std),
                    format_opt(s.nmi_mean),
                    format_opt(s.nmi_std),
                    format_opt(s.ci_mean),
                    format_opt(s.ci_std),
                    format_opt(s.time_mean_seconds),
                ));
                if reference.is_some() {
                    out.push(',');
                    out.push_str(s.wilcoxon_p_vs_reference.as_deref().unwrap_or(""));
                }
                out.push('\n');
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn record(method: &str, seed: u64, ari: f64) -> RunRecord {
        RunRecord {
            method: method.to_string(),
            seed,
            fitness: -100.0 - seed as f64,
            ari: Some(ari),
            nmi: Some(ari * 0.9),
            ci: Some(if ari > 0.8 { 0 } else { 1 }),
            wall_time_seconds: 0.5,
            failed: false,
            error: None,
        }
    }

    #[test]
    fn single_record_mean_equals_value_and_std_is_zero() {
        let records = vec![record("gmm", 1, 0.9)];
        let csv = emit_report(&records, ReportFormat::Csv, None).unwrap();
        let line = csv.lines().nth(1).unwrap();
        assert!(line.starts_with("gmm,1,0,"));
        assert!(line.contains("0.900000,0.000000"));
    }

    #[test]
    fn report_averages_match_arithmetic_mean() {
        let records = vec![
            record("gmm", 1, 0.5),
            record("gmm", 2, 0.7),
            record("gmm", 3, 0.9),
        ];
        let json = emit_report(&records, ReportFormat::Json, None).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        let ari_mean = parsed[0]["ari_mean"].as_f64().unwrap();
        assert_relative_eq!(ari_mean, 0.7, epsilon = 1e-12);
        let expected = ((0.5f64 - 0.7).powi(2) + 0.0 + (0.9f64 - 0.7).powi(2)) / 2.0;
        assert_relative_eq!(
            parsed[0]["ari_std"].as_f64().unwrap(),
            expected.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn identical_paired_aris_mark_insufficient_data() {
        let mut records = Vec::new();
        for seed in 1..=6 {
            records.push(record("gmm_hg_shrunk", seed, 0.8));
            records.push(record("kmeans", seed, 0.8));
        }
        let csv = emit_report(&records, ReportFormat::Csv, Some("gmm_hg_shrunk")).unwrap();
        let kmeans_line = csv.lines().find(|l| l.starts_with("kmeans")).unwrap();
        assert!(kmeans_line.ends_with("insufficient_data"));
        let reference_line = csv
            .lines()
            .find(|l| l.starts_with("gmm_hg_shrunk"))
            .unwrap();
        assert!(reference_line.ends_with(','));
    }

    #[test]
    fn wilcoxon_column_reports_p_value() {
        let mut records = Vec::new();
        for seed in 1..=8 {
            records.push(record("gmm_hg_shrunk", seed, 0.9 + 0.001 * seed as f64));
            records.push(record("kmeans", seed, 0.5 + 0.01 * seed as f64));
        }
        let csv = emit_report(&records, ReportFormat::Csv, Some("gmm_hg_shrunk")).unwrap();
        let kmeans_line = csv.lines().find(|l| l.starts_with("kmeans")).unwrap();
        let p: f64 = kmeans_line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(p < 0.05);
    }

    #[test]
    fn failed_runs_are_counted_but_excluded_from_stats() {
        let mut records = vec![record("gmm", 1, 0.6), record("gmm", 2, 0.8)];
        records.push(RunRecord {
            method: "gmm".into(),
            seed: 3,
            fitness: f64::NAN,
            ari: None,
            nmi: None,
            ci: None,
            wall_time_seconds: 0.1,
            failed: true,
            error: Some("degenerate cluster: boom".into()),
        });
        let json = emit_report(&records, ReportFormat::Json, None).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed[0]["runs"], 3);
        assert_eq!(parsed[0]["failures"], 1);
        assert_relative_eq!(
            parsed[0]["ari_mean"].as_f64().unwrap(),
            0.7,
            epsilon = 1e-12
        );
    }

    #[test]
    fn empty_records_are_invalid() {
        assert!(matches!(
            emit_report(&[], ReportFormat::Csv, None),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn csv_output_is_byte_stable() {
        let records = vec![
            record("kmeans", 1, 0.61),
            record("kmeans", 2, 0.63),
            record("gmm_hg_shrunk", 1, 0.96),
            record("gmm_hg_shrunk", 2, 0.94),
        ];
        let out = emit_report(&records, ReportFormat::Csv, None).unwrap();
        let expected = "method,runs,failures,fitness_mean,ari_mean,ari_std,nmi_mean,nmi_std,\
                        ci_mean,ci_std,time_mean_seconds\n\
                        gmm_hg_shrunk,2,0,-101.500000,0.950000,0.014142,0.855000,0.012728,\
                        0.000000,0.000000,0.500000\n\
                        kmeans,2,0,-101.500000,0.620000,0.014142,0.558000,0.012728,\
                        1.000000,0.000000,0.500000\n";
        assert_eq!(out, expected);
    }
}
