use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

pub const REPORT_SCHEMA: &str = "ral.report/1";

/// Bound expressions as they appear in report rows.
pub mod expr {
    pub const TV_REGRET: &str = "2mLHρ+η";
    pub const TV_REVENUE: &str = "nmLHρ";
    pub const DSIC_TV_REGRET: &str = "η";
    pub const DSIC_TV_REVENUE: &str = "n²mLHν";
    pub const LIFT_REGRET: &str = "3mLδ";
    pub const ROUND_REGRET: &str = "ξ2+3mLδ";
    pub const SHIFT_REVENUE: &str = "nmLδ";
    pub const LEVY_GAP: &str = "(6nH+3nε+2)ε";
    pub const KOLMOGOROV_GAP: &str = "3nHε";
    pub const BIC_GAP: &str = "2n√(mLHε)";
    pub const NISAN_REVENUE: &str = "(1−√ε)(Rev_T(M,D)−√ε)";
    pub const ROUNDED_TV: &str = "(1+1/δ)ε";
    pub const EXACT_IC: &str = "0";
    pub const PROKHOROV_LEARN: &str = "η";
    pub const FAILURE_RATE: &str = "δ_fail+1.96√(δ_fail(1−δ_fail)/T)";
    /// Failure means Rev_T < OPT_η(D)−ε in a trial.
    pub const END_TO_END_FAILURE: &str = "max_failure_rate";
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub experiment: String,
    pub instance_hash: String,
    pub metric: String,
    pub measured: f64,
    /// Symbolic form of the bound, empty for report-only rows.
    pub bound_expr: String,
    pub bound: Option<f64>,
    pub pass: bool,
}

impl ReportRow {
    /// Row that passes iff measured ≤ bound + tol.
    pub fn bounded(exp: &str, hash: &str, metric: &str, measured: f64, expr: &str, bound: f64, tol: f64) -> Self {
        ReportRow {
            experiment: exp.into(),
            instance_hash: hash.into(),
            metric: metric.into(),
            measured,
            bound_expr: expr.into(),
            bound: Some(bound),
            pass: measured <= bound + tol,
        }
    }

    pub fn info(exp: &str, hash: &str, metric: &str, measured: f64) -> Self {
        ReportRow {
            experiment: exp.into(),
            instance_hash: hash.into(),
            metric: metric.into(),
            measured,
            bound_expr: String::new(),
            bound: None,
            pass: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub command: String,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn new(command: &str, seed: u64, rows: Vec<ReportRow>) -> Self {
        Report { schema: REPORT_SCHEMA, command: command.into(), seed, rows }
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let bound = r.bound.map(|b| format!("{} <= {}", r.bound_expr, b)).unwrap_or_default();
            let verdict = if r.bound.is_none() { "" } else if r.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", r.experiment, r.metric, r.measured, bound, verdict);
        }
        s
    }

    pub fn to_csv(&self) -> anyhow::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["experiment", "instance_hash", "metric", "measured", "bound_expr", "bound", "pass"])?;
        for r in &self.rows {
            w.write_record([
                r.experiment.clone(),
                r.instance_hash.clone(),
                r.metric.clone(),
                r.measured.to_string(),
                r.bound_expr.clone(),
                r.bound.map(|b| b.to_string()).unwrap_or_default(),
                r.pass.to_string(),
            ])?;
        }
        let body = String::from_utf8(w.into_inner()?)?;
        Ok(format!("# schema: {}\n# command: {}\n# seed: {}\n{}", self.schema, self.command, self.seed, body))
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let text = if path.extension().map_or(false, |e| e == "csv") {
            self.to_csv()?
        } else {
            serde_json::to_string_pretty(self)? + "\n"
        };
        std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}

/// 64-bit FNV-1a of a string, printed as hex; stable across platforms and runs.
pub fn instance_hash(s: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{:016x}", h)
}

/// Writes a JSON artifact with the schema tag as its first field.
pub fn write_artifact<T: Serialize>(path: &Path, schema: &str, body: &T) -> anyhow::Result<()> {
    let mut v = serde_json::Map::new();
    v.insert("schema".into(), schema.into());
    match serde_json::to_value(body)? {
        serde_json::Value::Object(o) => v.extend(o),
        other => {
            v.insert("data".into(), other);
        }
    }
    std::fs::write(path, serde_json::to_string_pretty(&v)? + "\n").with_context(|| format!("cannot write {}", path.display()))
}
