//! Fixed-column CSV rows and grouped summaries of evaluation reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::pipeline::EvaluationReport;

/// Column order of [`csv_row`].
pub const CSV_COLUMNS: [&str; 31] = [
    "scenario_id",
    "scenario_hash",
    "method",
    "regime",
    "snr_db",
    "status",
    "noise_est_1",
    "noise_est_2",
    "noise_correct_1",
    "noise_correct_2",
    "transition_true_s",
    "transition_est_s",
    "transition_err_s",
    "speaker_est_1",
    "speaker_est_2",
    "speaker_correct_1",
    "speaker_correct_2",
    "speaker_top3_1",
    "speaker_top3_2",
    "low_confidence_1",
    "low_confidence_2",
    "sdr_db",
    "snr_err_mean_abs",
    "snr_err_std",
    "miss_rate_k2",
    "false_alarm_rate_k2",
    "miss_rate_k4",
    "false_alarm_rate_k4",
    "failed_frames",
    "noise_accuracy",
    "speaker_accuracy",
];

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|b| b.to_string()).unwrap_or_default()
}

/// Quote a field when it holds a separator, quote or newline.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Fraction of reached segments classified correctly, as a percentage.
fn share(flags: &[Option<bool>]) -> Option<f64> {
    let seen: Vec<bool> = flags.iter().flatten().copied().collect();
    (!seen.is_empty()).then(|| 100.0 * seen.iter().filter(|&&b| b).count() as f64 / seen.len() as f64)
}

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

/// One CSV line (without newline); floats use six decimals, unreached fields are empty.
pub fn csv_row(r: &EvaluationReport) -> String {
    let cells = [
        field(&r.scenario_id),
        r.scenario_hash.clone(),
        field(&r.method),
        field(&r.regime),
        num(r.snr_db),
        field(&r.status),
        field(r.noise_est[0].as_deref().unwrap_or_default()),
        field(r.noise_est[1].as_deref().unwrap_or_default()),
        opt_bool(r.noise_correct[0]),
        opt_bool(r.noise_correct[1]),
        num(r.transition_true_s),
        opt_num(r.transition_est_s),
        opt_num(r.transition_err_s),
        field(r.speaker_est[0].as_deref().unwrap_or_default()),
        field(r.speaker_est[1].as_deref().unwrap_or_default()),
        opt_bool(r.speaker_correct[0]),
        opt_bool(r.speaker_correct[1]),
        opt_bool(r.speaker_top3[0]),
        opt_bool(r.speaker_top3[1]),
        opt_bool(r.low_confidence[0]),
        opt_bool(r.low_confidence[1]),
        opt_num(r.sdr_db),
        opt_num(r.snr_err_mean_abs),
        opt_num(r.snr_err_std),
        opt_num(r.miss_rate[0]),
        opt_num(r.false_alarm_rate[0]),
        opt_num(r.miss_rate[1]),
        opt_num(r.false_alarm_rate[1]),
        r.failed_frames.map(|f| f.to_string()).unwrap_or_default(),
        opt_num(share(&r.noise_correct)),
        opt_num(share(&r.speaker_correct)),
    ];
    cells.join(",")
}

/// Header plus one line per report, newline-terminated.
pub fn to_csv(reports: &[EvaluationReport]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for r in reports {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation; `None` below two values.
fn std_dev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    (xs.len() > 1).then(|| (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

/// Summary of all runs sharing a method, regime and SNR.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupSummary {
    pub method: String,
    pub regime: String,
    pub snr_db: f64,
    pub runs: usize,
    pub failures: usize,
    /// Percent of segments whose noise was classified correctly.
    pub noise_accuracy: Option<f64>,
    pub transition_mae_s: Option<f64>,
    pub transition_err_std_s: Option<f64>,
    pub speaker_top1: Option<f64>,
    pub speaker_top3: Option<f64>,
    pub sdr_db_mean: Option<f64>,
    pub snr_err_mean_abs: Option<f64>,
    pub snr_err_std: Option<f64>,
    pub miss_rate: [Option<f64>; 2],
    pub false_alarm_rate: [Option<f64>; 2],
}

/// Group reports by (method, regime, SNR), in sorted key order.
pub fn summarize(reports: &[EvaluationReport]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(String, String, String), Vec<&EvaluationReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.method.clone(), r.regime.clone(), num(r.snr_db))).or_default().push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let collect = |f: &dyn Fn(&EvaluationReport) -> Option<f64>| rs.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            let flags = |f: &dyn Fn(&EvaluationReport) -> [Option<bool>; 2]| rs.iter().flat_map(|r| f(r)).collect::<Vec<_>>();
            let terr = collect(&|r| r.transition_err_s);
            let abs_terr: Vec<f64> = terr.iter().map(|e| e.abs()).collect();
            GroupSummary {
                method: rs[0].method.clone(),
                regime: rs[0].regime.clone(),
                snr_db: rs[0].snr_db,
                runs: rs.len(),
                failures: rs.iter().filter(|r| !r.is_ok()).count(),
                noise_accuracy: share(&flags(&|r| r.noise_correct)),
                transition_mae_s: mean(&abs_terr),
                transition_err_std_s: std_dev(&terr),
                speaker_top1: share(&flags(&|r| r.speaker_correct)),
                speaker_top3: share(&flags(&|r| r.speaker_top3)),
                sdr_db_mean: mean(&collect(&|r| r.sdr_db)),
                snr_err_mean_abs: mean(&collect(&|r| r.snr_err_mean_abs)),
                snr_err_std: mean(&collect(&|r| r.snr_err_std)),
                miss_rate: [0, 1].map(|k| mean(&collect(&|r| r.miss_rate[k]))),
                false_alarm_rate: [0, 1].map(|k| mean(&collect(&|r| r.false_alarm_rate[k]))),
            }
        })
        .collect()
}
