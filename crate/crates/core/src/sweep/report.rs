use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::Method;
use crate::domains::DomainSpec;
use crate::{Error, Result};

pub const CSV_COLUMNS: [&str; 12] = [
    "method",
    "domain",
    "H",
    "trial",
    "seed",
    "estimate",
    "stderr",
    "truth",
    "truth_stderr",
    "normalized_error",
    "status",
    "diagnostics",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Refused,
    Error,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Refused => "refused",
            Status::Error => "error",
        }
    }
}

/// One `(method, H, trial)` cell. Numeric fields are `None` for refused or
/// failed cells and for undefined normalized errors.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub domain: String,
    pub h: usize,
    pub trial: usize,
    pub seed: u64,
    pub estimate: Option<f64>,
    pub stderr: Option<f64>,
    pub truth: f64,
    pub truth_stderr: f64,
    pub normalized_error: Option<f64>,
    pub status: Status,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

impl SweepRow {
    pub fn sort_key(&self) -> (Method, usize, usize) {
        (self.method, self.h, self.trial)
    }
}

/// Shortest round-trip decimal, with `inf`, `-inf` and `nan` spelled out.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x}")
    }
}

fn parse_float(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Config(format!("bad numeric cell `{s}`")))
}

fn opt_cell(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_float(s).map(Some)
    }
}

/// JSON value for a diagnostic, with non-finite numbers as strings.
pub fn diagnostic_value(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::Value::from(x)
    } else {
        serde_json::Value::from(format_float(x))
    }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.domain.clone(),
            r.h.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            opt_cell(r.estimate),
            opt_cell(r.stderr),
            format_float(r.truth),
            format_float(r.truth_stderr),
            opt_cell(r.normalized_error),
            r.status.as_str().to_string(),
            serde_json::to_string(&r.diagnostics)?,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses and validates a sweep CSV against the column schema.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let int = |k: usize| {
            field(k)
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad integer cell `{}`", field(k))))
        };
        let status = match field(10) {
            "ok" => Status::Ok,
            "refused" => Status::Refused,
            "error" => Status::Error,
            other => return Err(Error::Config(format!("bad status `{other}`"))),
        };
        let row = SweepRow {
            method: field(0).parse()?,
            domain: field(1).to_string(),
            h: int(2)? as usize,
            trial: int(3)? as usize,
            seed: int(4)?,
            estimate: parse_opt(field(5))?,
            stderr: parse_opt(field(6))?,
            truth: parse_float(field(7))?,
            truth_stderr: parse_float(field(8))?,
            normalized_error: parse_opt(field(9))?,
            status,
            diagnostics: serde_json::from_str(field(11))?,
        };
        let numeric = [row.estimate, row.stderr, Some(row.truth), Some(row.truth_stderr), row.normalized_error];
        if numeric.iter().flatten().any(|x| x.is_nan() || *x == f64::NEG_INFINITY) {
            return Err(Error::Config("numeric cells must be finite or `inf`".into()));
        }
        if status != Status::Ok && row.estimate.is_some() {
            return Err(Error::Config("non-ok rows must leave estimates blank".into()));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Type-7 sample quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    #[serde(rename = "H")]
    pub h: usize,
    /// Cells with a defined normalized error.
    pub n: usize,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub refused: usize,
    pub errors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub value: f64,
    pub stderr: f64,
    /// `exact` or `monte-carlo`.
    pub source: String,
    pub rollouts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub domain: DomainSpec,
    pub master_seed: u64,
    pub truth: TruthRecord,
    pub cells: Vec<CellSummary>,
}

impl Summary {
    pub fn cell(&self, method: Method, h: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.method == method && c.h == h)
    }

    pub fn median(&self, method: Method, h: usize) -> Option<f64> {
        self.cell(method, h).and_then(|c| c.median)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-`(method, H)` median and quartiles of the normalized error.
pub fn summarize(rows: &[SweepRow]) -> Vec<CellSummary> {
    let mut groups: BTreeMap<(Method, usize), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method, r.h)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, h), rs)| {
            let mut errs: Vec<f64> = rs.iter().filter_map(|r| r.normalized_error).collect();
            errs.sort_by(f64::total_cmp);
            let q = |p| (!errs.is_empty()).then(|| quantile(&errs, p));
            CellSummary {
                method,
                h,
                n: errs.len(),
                median: q(0.5),
                q1: q(0.25),
                q3: q(0.75),
                refused: rs.iter().filter(|r| r.status == Status::Refused).count(),
                errors: rs.iter().filter(|r| r.status == Status::Error).count(),
            }
        })
        .collect()
}

/// Fixed-width table of a summary, one line per `(method, H)`.
pub fn render_table(cells: &[CellSummary]) -> String {
    let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    let mut s = format!(
        "{:<8} {:>6} {:>4} {:>9} {:>9} {:>9} {:>8}\n",
        "method", "H", "n", "q1", "median", "q3", "refused"
    );
    for c in cells {
        s.push_str(&format!(
            "{:<8} {:>6} {:>4} {:>9} {:>9} {:>9} {:>8}\n",
            c.method.name(),
            c.h,
            c.n,
            f(c.q1),
            f(c.median),
            f(c.q3),
            c.refused
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, h: usize, trial: usize, err: Option<f64>, status: Status) -> SweepRow {
        SweepRow {
            method,
            domain: "taxi".into(),
            h,
            trial,
            seed: 42,
            estimate: err.map(|e| 1.0 + e),
            stderr: err.map(|_| 0.01),
            truth: 1.0,
            truth_stderr: 0.0,
            normalized_error: err,
            status,
            diagnostics: BTreeMap::from([("clip".to_string(), diagnostic_value(f64::INFINITY))]),
        }
    }

    #[test]
    fn type7_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.25), 1.75);
        assert_eq!(quantile(&xs, 0.75), 3.25);
        assert_eq!(quantile(&[7.0], 0.25), 7.0);
    }

    #[test]
    fn golden_csv() {
        let rows = vec![
            row(Method::Gscope, 10, 0, Some(0.25), Status::Ok),
            row(Method::Flat, 10, 0, None, Status::Refused),
        ];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let expected = "\
method,domain,H,trial,seed,estimate,stderr,truth,truth_stderr,normalized_error,status,diagnostics
gscope,taxi,10,0,42,1.25,0.01,1,0,0.25,ok,\"{\"\"clip\"\":\"\"inf\"\"}\"
flat,taxi,10,0,42,,,1,0,,refused,\"{\"\"clip\"\":\"\"inf\"\"}\"
";
        assert_eq!(text, expected);
        assert_eq!(read_csv(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn rejects_schema_violations() {
        let bad_header = "method,domain\ngscope,taxi\n";
        assert!(read_csv(bad_header.as_bytes()).is_err());
        let mut buf = Vec::new();
        write_csv(&[row(Method::Ks, 10, 0, Some(0.1), Status::Ok)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace(",ok,", ",maybe,");
        assert!(read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn summary_groups_and_counts() {
        let rows = vec![
            row(Method::Gscope, 10, 0, Some(0.1), Status::Ok),
            row(Method::Gscope, 10, 1, Some(0.3), Status::Ok),
            row(Method::Gscope, 10, 2, Some(0.2), Status::Ok),
            row(Method::Flat, 10, 0, None, Status::Refused),
        ];
        let cells = summarize(&rows);
        assert_eq!(cells.len(), 2);
        let g = &cells[0];
        assert_eq!((g.method, g.n, g.median), (Method::Gscope, 3, Some(0.2)));
        assert_eq!((cells[1].n, cells[1].refused, cells[1].median), (0, 1, None));
        assert!(render_table(&cells).contains("gscope"));
    }
}
