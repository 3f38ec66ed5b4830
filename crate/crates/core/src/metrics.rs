//! Prediction-error metrics and the two report layouts: orientation
//! accuracy (MAE, clipped MAE, share of points over threshold, MSE) and
//! position accuracy (per-axis displacement and step errors).

use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::wrap_diff;
use crate::predictors::DecisionError;
use crate::textdoc::{fmt_f64, TextDoc};

/// `|wrap_diff(truth, pred)|` per aligned point.
pub fn angle_errors(preds: &[f64], truths: &[f64]) -> Result<Vec<f64>> {
    if preds.len() != truths.len() {
        return Err(Error::shape(format!(
            "{} predictions vs {} ground-truth values",
            preds.len(),
            truths.len()
        )));
    }
    preds
        .iter()
        .zip(truths)
        .map(|(p, t)| wrap_diff(*t, *p).map(f64::abs))
        .collect()
}

fn nonempty(errors: &[f64], what: &str) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::domain(format!("{what} of an empty error set")));
    }
    Ok(errors.len() as f64)
}

pub fn mae(errors: &[f64]) -> Result<f64> {
    let n = nonempty(errors, "MAE")?;
    Ok(errors.iter().map(|e| e.abs()).sum::<f64>() / n)
}

pub fn mse(errors: &[f64]) -> Result<f64> {
    let n = nonempty(errors, "MSE")?;
    Ok(errors.iter().map(|e| e * e).sum::<f64>() / n)
}

/// Mean of `min(|e|, clip)`.
pub fn clipped_mae(errors: &[f64], clip: f64) -> Result<f64> {
    let n = nonempty(errors, "clipped MAE")?;
    if !(clip >= 0.0) {
        return Err(Error::domain(format!("clip {clip} must be non-negative")));
    }
    Ok(errors.iter().map(|e| e.abs().min(clip)).sum::<f64>() / n)
}

/// Percentage of errors strictly above `threshold`.
pub fn pct_over(errors: &[f64], threshold: f64) -> Result<f64> {
    let n = nonempty(errors, "pct_over")?;
    Ok(100.0 * errors.iter().filter(|e| e.abs() > threshold).count() as f64 / n)
}

/// Percentage of decisions that call for an edge re-render.
pub fn pct_rerender(errors: &[DecisionError], angle_threshold_deg: f64, pos_threshold_mm: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::domain("re-render share of an empty decision set"));
    }
    let k = errors
        .iter()
        .filter(|e| e.exceeds(angle_threshold_deg, pos_threshold_mm))
        .count();
    Ok(100.0 * k as f64 / errors.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleMetrics {
    pub n: usize,
    pub mae_deg: f64,
    pub mse: f64,
    pub clipped_mae_deg: f64,
    pub pct_over: f64,
}

impl AngleMetrics {
    pub fn from_errors(errors: &[f64], threshold_deg: f64) -> Result<Self> {
        Ok(AngleMetrics {
            n: errors.len(),
            mae_deg: mae(errors)?,
            mse: mse(errors)?,
            clipped_mae_deg: clipped_mae(errors, threshold_deg)?,
            pct_over: pct_over(errors, threshold_deg)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionMetrics {
    pub n: usize,
    /// Mean absolute next-frame displacement error per axis, mm.
    pub disp_mm: [f64; 3],
    /// Mean absolute step error, ms; `None` when steps are not predicted.
    pub dt_ms: Option<f64>,
}

impl PositionMetrics {
    /// Mean displacement error over the three axes.
    pub fn mean_disp_mm(&self) -> f64 {
        self.disp_mm.iter().sum::<f64>() / 3.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub threshold_deg: f64,
    /// Per channel (ϕ, θ, ψ) and pooled orientation metrics.
    pub channels: Option<[AngleMetrics; 3]>,
    pub pooled: Option<AngleMetrics>,
    pub position: Option<PositionMetrics>,
}

/// Absolute position errors of next-frame predictions: per axis, and
/// optionally for the step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PositionErrors {
    pub disp_mm: Vec<[f64; 3]>,
    pub dt_ms: Option<Vec<f64>>,
}

pub fn build_report(
    label: &str,
    angle_errors: Option<&[Vec<f64>; 3]>,
    position: Option<&PositionErrors>,
    threshold_deg: f64,
) -> Result<EvalReport> {
    if !(threshold_deg > 0.0) {
        return Err(Error::domain(format!("threshold {threshold_deg} must be positive")));
    }
    let (channels, pooled) = match angle_errors {
        Some(ch) => {
            let per = [
                AngleMetrics::from_errors(&ch[0], threshold_deg)?,
                AngleMetrics::from_errors(&ch[1], threshold_deg)?,
                AngleMetrics::from_errors(&ch[2], threshold_deg)?,
            ];
            let all: Vec<f64> = ch.iter().flatten().copied().collect();
            (Some(per), Some(AngleMetrics::from_errors(&all, threshold_deg)?))
        }
        None => (None, None),
    };
    let position = match position {
        Some(p) => {
            let n = nonempty_len(p.disp_mm.len(), "displacement error")?;
            let disp_mm = std::array::from_fn(|c| p.disp_mm.iter().map(|d| d[c].abs()).sum::<f64>() / n);
            let dt_ms = match &p.dt_ms {
                Some(d) => Some(mae(d)?),
                None => None,
            };
            Some(PositionMetrics {
                n: p.disp_mm.len(),
                disp_mm,
                dt_ms,
            })
        }
        None => None,
    };
    Ok(EvalReport {
        label: label.to_string(),
        threshold_deg,
        channels,
        pooled,
        position,
    })
}

fn nonempty_len(n: usize, what: &str) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain(format!("no {what} values")));
    }
    Ok(n as f64)
}

pub const ANGLE_ROWS: [&str; 5] = [
    "MAE [degree]",
    "clipped MAE [degree]",
    "points over threshold [%]",
    "MSE [degree]",
    "points",
];

pub const POSITION_HEADER: [&str; 6] = ["model", "dx error [mm]", "dy error [mm]", "dz error [mm]", "dt error [ms]", "points"];

/// Orientation table: one row per metric, one column per configuration.
pub fn angle_table_csv(reports: &[EvalReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["metric".to_string()];
    let mut cols = Vec::new();
    for r in reports {
        let m = r
            .pooled
            .ok_or_else(|| Error::domain(format!("report `{}` has no orientation metrics", r.label)))?;
        header.push(r.label.clone());
        cols.push(m);
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, name) in ANGLE_ROWS.iter().enumerate() {
        let mut row = vec![name.to_string()];
        for m in &cols {
            row.push(match i {
                0 => fmt_f64(m.mae_deg),
                1 => fmt_f64(m.clipped_mae_deg),
                2 => fmt_f64(m.pct_over),
                3 => fmt_f64(m.mse),
                _ => m.n.to_string(),
            });
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

/// Parses [`angle_table_csv`] output back to `(label, pooled metrics)`.
pub fn parse_angle_table(text: &str) -> Result<Vec<(String, AngleMetrics)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>().map_err(csv_err)?;
    if rows.len() != ANGLE_ROWS.len() + 1 || rows[0].get(0) != Some("metric") {
        return Err(Error::Format("not an orientation metrics table".into()));
    }
    for (row, name) in rows[1..].iter().zip(ANGLE_ROWS) {
        if row.get(0) != Some(name) || row.len() != rows[0].len() {
            return Err(Error::Format(format!("expected row `{name}`")));
        }
    }
    let num = |r: usize, c: usize| -> Result<f64> {
        let s = &rows[r][c];
        s.parse()
            .map_err(|_| Error::Format(format!("row {r}, column {c}: `{s}` is not a number")))
    };
    (1..rows[0].len())
        .map(|c| {
            Ok((
                rows[0][c].to_string(),
                AngleMetrics {
                    mae_deg: num(1, c)?,
                    clipped_mae_deg: num(2, c)?,
                    pct_over: num(3, c)?,
                    mse: num(4, c)?,
                    n: rows[5][c]
                        .parse()
                        .map_err(|_| Error::Format(format!("column {c}: bad point count")))?,
                },
            ))
        })
        .collect()
}

/// Position table: one row per configuration.
pub fn position_table_csv(reports: &[EvalReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(POSITION_HEADER).map_err(csv_err)?;
    for r in reports {
        let p = r
            .position
            .ok_or_else(|| Error::domain(format!("report `{}` has no position metrics", r.label)))?;
        w.write_record([
            r.label.clone(),
            fmt_f64(p.disp_mm[0]),
            fmt_f64(p.disp_mm[1]),
            fmt_f64(p.disp_mm[2]),
            p.dt_ms.map_or(String::new(), fmt_f64),
            p.n.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn parse_position_table(text: &str) -> Result<Vec<(String, PositionMetrics)>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(POSITION_HEADER) {
        return Err(Error::Format("not a position metrics table".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |c: usize| -> Result<f64> {
            rec[c]
                .parse()
                .map_err(|_| Error::Format(format!("row {}, column {c}: `{}` is not a number", i + 1, &rec[c])))
        };
        out.push((
            rec[0].to_string(),
            PositionMetrics {
                disp_mm: [num(1)?, num(2)?, num(3)?],
                dt_ms: if rec[4].is_empty() { None } else { Some(num(4)?) },
                n: rec[5]
                    .parse()
                    .map_err(|_| Error::Format(format!("row {}: bad point count", i + 1)))?,
            },
        ));
    }
    Ok(out)
}

/// Full-precision structured form of a set of reports.
pub fn reports_doc(reports: &[EvalReport]) -> TextDoc {
    let mut doc = TextDoc::new();
    doc.set("reports", reports.len());
    for (i, r) in reports.iter().enumerate() {
        let k = format!("report{i}");
        doc.set(format!("{k}.label"), &r.label)
            .set_f64(format!("{k}.threshold_deg"), r.threshold_deg);
        let mut put = |name: &str, m: &AngleMetrics| {
            doc.set(format!("{k}.{name}.n"), m.n)
                .set_f64(format!("{k}.{name}.mae_deg"), m.mae_deg)
                .set_f64(format!("{k}.{name}.clipped_mae_deg"), m.clipped_mae_deg)
                .set_f64(format!("{k}.{name}.pct_over"), m.pct_over)
                .set_f64(format!("{k}.{name}.mse"), m.mse);
        };
        if let Some(ch) = &r.channels {
            for (m, name) in ch.iter().zip(["phi", "theta", "psi"]) {
                put(name, m);
            }
        }
        if let Some(m) = &r.pooled {
            put("pooled", m);
        }
        if let Some(p) = &r.position {
            doc.set(format!("{k}.position.n"), p.n)
                .set_array(format!("{k}.position.disp_mm"), &[3], &p.disp_mm);
            if let Some(dt) = p.dt_ms {
                doc.set_f64(format!("{k}.position.dt_ms"), dt);
            }
        }
    }
    doc
}

pub fn write_reports(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    let csv_text = if reports.iter().all(|r| r.pooled.is_some()) {
        angle_table_csv(reports)?
    } else {
        position_table_csv(reports)?
    };
    let path = dir.join("report.csv");
    std::fs::write(&path, csv_text).map_err(|e| Error::io(&path, e))?;
    reports_doc(reports).write(&dir.join("report.txt"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}
