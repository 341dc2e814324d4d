use std::path::PathBuf;

use anyhow::{anyhow, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use ral_core::dist::{prokhorov_distance, tv_distance};
use ral_core::learn::{bn_joint, bn_learn_known_dag, learn_product, product_sample_count, BayesNet};

use crate::audit::Ctx;
use crate::load::{load_dist, load_samples, read};
use crate::report::{expr, instance_hash, Report};
use crate::Global;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LearnKind {
    Product,
    Bayesnet,
}

#[derive(Args, Debug)]
pub struct LearnArgs {
    #[arg(long, value_enum, default_value = "product")]
    pub kind: LearnKind,
    /// Headerless CSV, one sample per row.
    #[arg(long)]
    pub samples: PathBuf,
    /// Target Prokhorov accuracy for product learning.
    #[arg(long, default_value_t = 0.2)]
    pub eta: f64,
    /// Value bound H.
    #[arg(long = "value-bound", default_value_t = 1.0)]
    pub h: f64,
    /// Failure probability used to report the recommended sample count.
    #[arg(long, default_value_t = 0.1)]
    pub delta_fail: f64,
    /// Known DAG for Bayes-net learning: {"parents": [[...], ...], "alphabet": [...]}.
    #[arg(long)]
    pub dag: Option<PathBuf>,
    /// Truth to compare against: a distribution file, or a Bayes-net file for `bayesnet`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Where to write the learned model.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct Dag {
    parents: Vec<Vec<usize>>,
    alphabet: Vec<f64>,
}

pub fn run(a: &LearnArgs, g: &Global) -> Result<Report> {
    let samples = load_samples(&a.samples)?;
    let mut text = read(&a.samples)?;
    let mut rows = Vec::new();
    match a.kind {
        LearnKind::Product => {
            let d = learn_product(&samples, a.eta, a.h)?;
            if let Some(p) = &a.model_out {
                std::fs::write(p, d.to_json_string())?;
            }
            if let Some(t) = &a.truth {
                text.push_str(&read(t)?);
            }
            let hash = instance_hash(&text);
            let c = Ctx { exp: "learn_product", hash: &hash, tol: g.tolerance };
            rows.push(c.info("samples", samples.len() as f64));
            rows.push(c.info("recommended_samples", product_sample_count(samples.dim, a.h, a.eta, a.delta_fail)? as f64));
            rows.push(c.info("support_size", d.len() as f64));
            if let Some(t) = &a.truth {
                let truth = load_dist(t)?;
                let p = prokhorov_distance(&d, &truth)?.value;
                rows.push(c.bounded("prokhorov", p, expr::PROKHOROV_LEARN, a.eta));
            }
        }
        LearnKind::Bayesnet => {
            let dag_path = a.dag.as_ref().ok_or_else(|| anyhow!("bayesnet learning needs --dag"))?;
            let dag_text = read(dag_path)?;
            let dag: Dag = serde_json::from_str(&dag_text)
                .map_err(|e| anyhow!("{}: line {} column {}: {}", dag_path.display(), e.line(), e.column(), e))?;
            let bn = bn_learn_known_dag(&samples, &dag.parents, &dag.alphabet)?;
            if let Some(p) = &a.model_out {
                std::fs::write(p, serde_json::to_string_pretty(&bn)? + "\n")?;
            }
            text.push_str(&dag_text);
            if let Some(t) = &a.truth {
                text.push_str(&read(t)?);
            }
            let hash = instance_hash(&text);
            let c = Ctx { exp: "learn_bayesnet", hash: &hash, tol: g.tolerance };
            rows.push(c.info("samples", samples.len() as f64));
            rows.push(c.info("max_in_degree", bn.max_in_degree() as f64));
            if let Some(t) = &a.truth {
                let truth = BayesNet::from_json_str(&read(t)?).map_err(|e| anyhow!("{}: {}", t.display(), e))?;
                rows.push(c.info("tv", tv_distance(&bn_joint(&bn)?, &bn_joint(&truth)?)?));
            }
        }
    }
    Ok(Report::new("learn", g.seed(), rows))
}
