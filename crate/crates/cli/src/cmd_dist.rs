use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ral_core::derive_seed;
use ral_core::dist::{expected_rounded_tv, kolmogorov_distance, levy_distance, prokhorov_distance, tv_distance};

use crate::load::{load_dist, read};
use crate::report::{expr, instance_hash, write_artifact, Report, ReportRow};
use crate::{Global, Metric};

pub const COUPLING_SCHEMA: &str = "ral.coupling/1";

#[derive(Args, Debug)]
pub struct DistArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    #[arg(long, value_enum, default_value = "tv")]
    pub metric: Metric,
    /// Where to write the Prokhorov witness coupling.
    #[arg(long)]
    pub witness: Option<PathBuf>,
    /// Grid width δ: also estimate the expected TV after random rounding (Prokhorov only).
    #[arg(long)]
    pub delta: Option<f64>,
}

const DEFAULT_GRID_DRAWS: usize = 1000;

pub fn run(a: &DistArgs, g: &Global) -> Result<Report> {
    let (p, q) = (load_dist(&a.left)?, load_dist(&a.right)?);
    let hash = instance_hash(&(read(&a.left)? + &read(&a.right)?));
    let exp = "dist";
    let tol = g.tolerance;
    let mut rows = Vec::new();
    match a.metric {
        Metric::Tv => rows.push(ReportRow::info(exp, &hash, "tv", tv_distance(&p, &q)?)),
        Metric::Kolmogorov => rows.push(ReportRow::info(exp, &hash, "kolmogorov", kolmogorov_distance(&p, &q)?)),
        Metric::Levy => {
            let l = levy_distance(&p, &q)?;
            let k = kolmogorov_distance(&p, &q)?;
            rows.push(ReportRow::info(exp, &hash, "levy", l));
            rows.push(ReportRow::bounded(exp, &hash, "levy_vs_kolmogorov", l, "kolmogorov", k, tol));
        }
        Metric::Prokhorov => {
            let r = prokhorov_distance(&p, &q)?;
            let tv = tv_distance(&p, &q)?;
            rows.push(ReportRow::info(exp, &hash, "prokhorov", r.value));
            rows.push(ReportRow::bounded(exp, &hash, "prokhorov_vs_tv", r.value, "tv", tv, tol));
            let tail = r.coupling.mass_beyond(r.value);
            rows.push(ReportRow::bounded(exp, &hash, "witness_tail_mass", tail, "eps*", r.value, tol));
            if let Some(d) = a.delta {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(g.seed(), 0));
                let (mean, se) = expected_rounded_tv(&p, &q, d, g.trials.unwrap_or(DEFAULT_GRID_DRAWS), &mut rng)?;
                // Monte Carlo mean, so the bound carries three standard errors of slack
                let bound = (1.0 + 1.0 / d) * r.value + 3.0 * se;
                rows.push(ReportRow::bounded(exp, &hash, "rounded_tv", mean, expr::ROUNDED_TV, bound, tol));
            }
            if let Some(w) = &a.witness {
                write_artifact(w, COUPLING_SCHEMA, &r.coupling)?;
            }
        }
        Metric::Nisan => bail!("nisan is not a distance; use `robustify --metric nisan`"),
    }
    Ok(Report::new("dist", g.seed(), rows))
}
