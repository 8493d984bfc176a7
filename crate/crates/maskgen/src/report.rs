//! Evaluation reports in three synchronized renderings. JSON is canonical;
//! CSV carries the metric rows; the text table is for people.
//!
//! Every real number is printed with four decimals. Rust's fixed-precision
//! formatting rounds the exact binary value and sends exact ties to the even
//! digit, so `0.03125` renders as `0.0312`.

use maskgen_core::dataset::Task;
use maskgen_core::metrics::{c_iou, m_ahd, EvalPair};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{HarnessError, Result};

pub const CSV_HEADER: [&str; 4] = ["metric", "threshold", "count", "value"];
pub const NA: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    #[serde(serialize_with = "fixed4")]
    pub threshold: Option<f64>,
    pub count: usize,
    #[serde(serialize_with = "fixed4")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Hash of the run manifest that produced the report.
    pub manifest: String,
    pub task: Task,
    pub decode: String,
    pub pairs: usize,
    pub metrics: Vec<MetricRow>,
}

pub fn format4(v: f64) -> String {
    format!("{v:.4}")
}

fn fixed4<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => {
            let raw = RawValue::from_string(format4(*x)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        }
        _ => s.serialize_none(),
    }
}

/// Rounds through the four-decimal rendering, as a reader of any output sees it.
fn rounded(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite()).map(|x| format4(x).parse().expect("formatted float parses"))
}

impl EvalReport {
    /// Aggregates evaluated pairs: cIoU, mean IoU, AHD over all pairs with a
    /// defined distance, then mAHD per IoU threshold.
    pub fn from_pairs(
        pairs: &[EvalPair],
        thresholds: &[f64],
        strict_above: bool,
        manifest: impl Into<String>,
        task: Task,
        decode: impl Into<String>,
    ) -> Result<Self> {
        let n = pairs.len();
        let mut metrics = vec![
            MetricRow {
                metric: "ciou".into(),
                threshold: None,
                count: n,
                value: Some(c_iou(pairs)?),
            },
            MetricRow {
                metric: "miou".into(),
                threshold: None,
                count: n,
                value: Some(pairs.iter().map(|p| p.iou).sum::<f64>() / n as f64),
            },
        ];
        let defined: Vec<f64> = pairs.iter().filter_map(|p| p.ahd).collect();
        metrics.push(MetricRow {
            metric: "ahd".into(),
            threshold: None,
            count: defined.len(),
            value: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        });
        for g in m_ahd(pairs, thresholds, strict_above)?.groups {
            metrics.push(MetricRow {
                metric: "mahd".into(),
                threshold: Some(g.threshold),
                count: g.count,
                value: g.mean,
            });
        }
        Ok(Self {
            manifest: manifest.into(),
            task,
            decode: decode.into(),
            pairs: n,
            metrics,
        }
        .normalized())
    }

    /// The report as it reads back from any rendering.
    pub fn normalized(mut self) -> Self {
        for r in &mut self.metrics {
            r.threshold = rounded(r.threshold);
            r.value = rounded(r.value);
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.metrics)
    }

    pub fn to_table(&self) -> String {
        let cell = |v: Option<f64>| v.map(format4).unwrap_or_else(|| NA.to_string());
        let rows: Vec<[String; 4]> = self
            .metrics
            .iter()
            .map(|r| [r.metric.clone(), cell(r.threshold), r.count.to_string(), cell(r.value)])
            .collect();
        let mut width = CSV_HEADER.map(str::len);
        for r in &rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let task = serde_json::to_value(self.task).expect("task serializes");
        let mut out = format!(
            "task {}, decode {}, {} pairs, manifest {}\n",
            task.as_str().unwrap_or_default(),
            self.decode,
            self.pairs,
            &self.manifest[..self.manifest.len().min(12)]
        );
        let line = |cells: [&str; 4]| {
            format!(
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}\n",
                cells[0],
                cells[1],
                cells[2],
                cells[3],
                w0 = width[0],
                w1 = width[1],
                w2 = width[2],
                w3 = width[3]
            )
        };
        out += &line(CSV_HEADER);
        for r in &rows {
            out += &line([&r[0], &r[1], &r[2], &r[3]]);
        }
        out
    }
}

pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    let cell = |v: Option<f64>| v.filter(|x| x.is_finite()).map(format4).unwrap_or_else(|| NA.to_string());
    for r in rows {
        w.write_record([r.metric.clone(), cell(r.threshold), r.count.to_string(), cell(r.value)])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn rows_from_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| HarnessError::Input(format!("csv header: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    if header != CSV_HEADER {
        return Err(HarnessError::Input(format!("unexpected csv header {header:?}")));
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s == NA {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| HarnessError::Input(format!("bad number {s:?} in csv")))
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| HarnessError::Input(format!("csv: {e}")))?;
        rows.push(MetricRow {
            metric: rec[0].to_string(),
            threshold: num(&rec[1])?,
            count: rec[2]
                .parse()
                .map_err(|_| HarnessError::Input(format!("bad count {:?} in csv", &rec[2])))?,
            value: num(&rec[3])?,
        });
    }
    Ok(rows)
}
