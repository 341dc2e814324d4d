//! File loaders. Scenario and product files may reference distribution files by path,
//! resolved relative to the referencing file.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;

use ral_core::dist::{DiscreteDist, ProductDist};
use ral_core::learn::SampleSet;
use ral_core::multi_item::Scenario;

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn parse_json(path: &Path, text: &str) -> Result<Value> {
    serde_json::from_str(text)
        .map_err(|e| anyhow!("{}: line {} column {}: {}", path.display(), e.line(), e.column(), e))
}

pub fn load_dist(path: &Path) -> Result<DiscreteDist> {
    DiscreteDist::from_json_str(&read(path)?).map_err(|e| anyhow!("{}: {}", path.display(), e))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

// replaces string entries of `factors` by the parsed distribution files they name
fn inline_factors(path: &Path, v: &mut Value) -> Result<()> {
    let dir = base_dir(path);
    let Some(factors) = v.get_mut("factors").and_then(Value::as_array_mut) else {
        bail!("{}: missing array field `factors`", path.display());
    };
    for (i, f) in factors.iter_mut().enumerate() {
        if let Value::String(p) = f {
            let fp = dir.join(&*p);
            let text = read(&fp).with_context(|| format!("{}: factor {}", path.display(), i))?;
            *f = parse_json(&fp, &text)?;
        }
    }
    Ok(())
}

pub fn scenario_from_value(path: &Path, mut v: Value) -> Result<Scenario> {
    inline_factors(path, &mut v)?;
    serde_json::from_value(v).map_err(|e| anyhow!("{}: invalid scenario: {}", path.display(), e))
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let v = parse_json(path, &read(path)?)?;
    scenario_from_value(path, v)
}

/// A product of per-bidder distributions: any JSON object with a `factors` array (a scenario
/// file qualifies).
pub fn load_product(path: &Path) -> Result<ProductDist> {
    let mut v = parse_json(path, &read(path)?)?;
    inline_factors(path, &mut v)?;
    let factors: Vec<DiscreteDist> = serde_json::from_value(v["factors"].take())
        .map_err(|e| anyhow!("{}: invalid factor: {}", path.display(), e))?;
    ProductDist::new(factors).map_err(|e| anyhow!("{}: {}", path.display(), e))
}

/// Headerless CSV of floats; `#` starts a comment line.
pub fn load_samples(path: &Path) -> Result<SampleSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("{}", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| anyhow!("{}: line {}: `{}` is not a number", path.display(), line, f)))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let dim = rows.first().map_or(0, Vec::len);
    if dim == 0 {
        bail!("{}: no samples", path.display());
    }
    SampleSet::new(dim, rows).map_err(|e| anyhow!("{}: {}", path.display(), e))
}
