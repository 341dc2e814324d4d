use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use serde_json::json;

use ral_core::dist::{kolmogorov_distance, levy_distance, Point, ProductDist};
use ral_core::mech::{eps_bic_regret, eps_bic_regret_on, eps_dsic_regret_on, revenue_exact, revenue_exact_on};
use ral_core::multi_item::{bic_prokhorov_robustify, dsic_prokhorov_robustify, nisan_ic_transform, nisan_revenue_bound, opt_bic_lp};
use ral_core::single_item::{kolmogorov_gap_bound, levy_gap_bound, levy_robust, myerson_optimal};

use crate::audit::{base_mechanism, bic_pipeline_rows, dsic_pipeline_rows, tv_rows, Ctx};
use crate::load::{load_product, load_scenario, read};
use crate::report::{expr, instance_hash, write_artifact, Report};
use crate::{Global, Ic, Metric};

pub const ROBUST_SCHEMA: &str = "ral.robust-mechanism/1";

#[derive(Args, Debug)]
pub struct RobustifyArgs {
    pub scenario: PathBuf,
    #[arg(long, value_enum)]
    pub metric: Metric,
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    /// Grid width override for the Prokhorov pipeline.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of random grids K.
    #[arg(long, default_value_t = 8)]
    pub grids: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "bic")]
    pub ic: Ic,
    /// True distribution to audit against; any JSON with a `factors` array.
    #[arg(long)]
    pub adversary: Option<PathBuf>,
    /// Where to write the constructed mechanism.
    #[arg(long)]
    pub mech_out: Option<PathBuf>,
}

fn supports(d: &ProductDist) -> Vec<Vec<Point>> {
    d.factors.iter().map(|f| f.support().to_vec()).collect()
}

fn union(a: &ProductDist, b: &ProductDist) -> Vec<Vec<Point>> {
    supports(a).into_iter().zip(supports(b)).map(|(x, y)| x.into_iter().chain(y).collect()).collect()
}

pub fn run(a: &RobustifyArgs, g: &Global) -> Result<Report> {
    let s = load_scenario(&a.scenario)?;
    let mut text = read(&a.scenario)?;
    // construction happens before the adversary file is even opened
    let hat_path = a.adversary.clone();
    let load_hat = |text: &mut String| -> Result<Option<ProductDist>> {
        match &hat_path {
            None => Ok(None),
            Some(p) => {
                text.push_str(&read(p)?);
                let d = load_product(p)?;
                if d.n() != s.n || d.dim() != s.m {
                    bail!("{}: adversary shape does not match the scenario", p.display());
                }
                Ok(Some(d))
            }
        }
    };
    let mut rows = Vec::new();
    let exp = format!("robustify_{:?}", a.metric).to_lowercase();
    match a.metric {
        Metric::Levy => {
            if s.m != 1 {
                bail!("levy robustification needs a single item");
            }
            let lr = levy_robust(&s.d, a.eps)?;
            if let Some(p) = &a.mech_out {
                write_artifact(p, ROBUST_SCHEMA, &json!({
                    "kind": "levy_extension",
                    "eps": a.eps,
                    "base": serde_json::from_str::<serde_json::Value>(&lr.mechanism.base().to_json_string())?,
                }))?;
            }
            let hat = load_hat(&mut text)?;
            let hash = instance_hash(&text);
            let c = Ctx { exp: &exp, hash: &hash, tol: g.tolerance };
            rows.push(c.info("opt_worst", lr.opt_worst));
            rows.push(c.info("revenue_design", revenue_exact_on(&lr.mechanism, &s.d)?));
            if let Some(hat) = hat {
                let eps = s.d.factors.iter().zip(&hat.factors).map(|(x, y)| levy_distance(x, y)).collect::<ral_core::Result<Vec<_>>>()?;
                let eps = eps.into_iter().fold(0.0, f64::max);
                let (opt_m, _) = myerson_optimal(&hat.factors)?;
                let opt = revenue_exact(&opt_m, &hat)?;
                let rev = revenue_exact_on(&lr.mechanism, &hat)?;
                rows.push(c.info("levy_distance", eps));
                if eps > a.eps + 1e-9 {
                    rows.push(c.bounded("levy_distance_vs_eps", eps, "ε", a.eps));
                }
                rows.push(c.bounded("revenue_gap", opt - rev, expr::LEVY_GAP, levy_gap_bound(s.n, s.h, a.eps)));
                let r = eps_dsic_regret_on(&lr.mechanism, &union(&hat, &s.d), &supports(&hat))?;
                rows.push(c.bounded("dsic_regret", r.eps, expr::EXACT_IC, 0.0));
            }
        }
        Metric::Tv => {
            let m1 = base_mechanism(&s, a.ic)?;
            if let Some(p) = &a.mech_out {
                write_artifact(p, ROBUST_SCHEMA, &json!({
                    "kind": format!("tv_{:?}", a.ic).to_lowercase(),
                    "design": s,
                    "base": serde_json::from_str::<serde_json::Value>(&m1.to_json_string())?,
                }))?;
            }
            let hat = load_hat(&mut text)?;
            let hash = instance_hash(&text);
            let c = Ctx { exp: &exp, hash: &hash, tol: g.tolerance };
            rows.push(c.info("revenue_design", revenue_exact(&m1, &s.d)?));
            if let Some(hat) = hat {
                rows.extend(tv_rows(&c, &s, a.ic, m1, &hat)?);
            }
        }
        Metric::Prokhorov => {
            let m = base_mechanism(&s, a.ic)?;
            let p = match a.ic {
                Ic::Bic => bic_prokhorov_robustify(&*m, &s, a.eps, a.grids, g.seed(), a.delta)?,
                Ic::Dsic => dsic_prokhorov_robustify(&*m, &s, a.eps, a.alpha, a.grids, g.seed(), a.delta)?,
            };
            if let Some(path) = &a.mech_out {
                write_artifact(path, ROBUST_SCHEMA, &json!({
                    "kind": format!("prokhorov_{:?}", a.ic).to_lowercase(),
                    "eps": p.eps,
                    "delta": p.delta,
                    "seed": p.seed,
                    "offsets": p.branches.iter().map(|b| b.grid.offset.clone()).collect::<Vec<_>>(),
                    "design": s,
                    "base": serde_json::from_str::<serde_json::Value>(&m.to_json_string())?,
                }))?;
            }
            let hat = load_hat(&mut text)?;
            let hash = instance_hash(&text);
            let c = Ctx { exp: &exp, hash: &hash, tol: g.tolerance };
            rows.push(c.info("delta", p.delta));
            if let Some(hat) = hat {
                match a.ic {
                    Ic::Bic => rows.extend(bic_pipeline_rows(&c, &s, &p.evaluate_bic(&*m, &hat)?)),
                    Ic::Dsic => rows.extend(dsic_pipeline_rows(&c, &p.evaluate_dsic(&*m, &hat, a.alpha)?)),
                }
            }
        }
        Metric::Nisan => {
            if s.n != 1 {
                bail!("the menu transform needs a single bidder, scenario has {}", s.n);
            }
            let (_, m) = opt_bic_lp(&s, a.eps)?;
            let eps = eps_bic_regret(&m, &s.d)?.eps.max(0.0).min(1.0);
            let nm = nisan_ic_transform(&m, eps)?;
            if let Some(p) = &a.mech_out {
                write_artifact(p, ROBUST_SCHEMA, &json!({
                    "kind": "nisan_menu",
                    "eps": eps,
                    "menu": nm.menu(),
                }))?;
            }
            let hat = load_hat(&mut text)?;
            let hash = instance_hash(&text);
            let c = Ctx { exp: &exp, hash: &hash, tol: g.tolerance };
            let grid: Vec<Vec<Point>> = vec![m.typespace().types(0).to_vec()];
            let r = eps_bic_regret_on(&nm, &s.d, &grid)?;
            let rev_m = revenue_exact_on(&m, &s.d)?;
            let rev = revenue_exact_on(&nm, &s.d)?;
            rows.push(c.info("eps_measured", eps));
            rows.push(c.bounded("ic_regret", r.eps, expr::EXACT_IC, 1e-9));
            rows.push(c.bounded("ir_violations", r.ir_violations.len() as f64, expr::EXACT_IC, 0.0));
            rows.push(c.bounded("revenue_shortfall", nisan_revenue_bound(rev_m, eps) - rev, expr::NISAN_REVENUE, 0.0));
            if let Some(hat) = hat {
                let r = eps_bic_regret_on(&nm, &hat, &union(&hat, &s.d))?;
                rows.push(c.bounded("ic_regret_true", r.eps, expr::EXACT_IC, 1e-9));
                rows.push(c.info("revenue_true", revenue_exact_on(&nm, &hat)?));
            }
        }
        Metric::Kolmogorov => {
            if s.m != 1 {
                bail!("kolmogorov continuity needs a single item");
            }
            // no transform: the check is that OPT itself moves by at most 3nHε
            let (opt_m, _) = myerson_optimal(&s.d.factors)?;
            let opt = revenue_exact(&opt_m, &s.d)?;
            if let Some(p) = &a.mech_out {
                write_artifact(p, ROBUST_SCHEMA, &json!({
                    "kind": "myerson",
                    "base": serde_json::from_str::<serde_json::Value>(&opt_m.to_json_string())?,
                }))?;
            }
            let hat = load_hat(&mut text)?;
            let hash = instance_hash(&text);
            let c = Ctx { exp: &exp, hash: &hash, tol: g.tolerance };
            rows.push(c.info("opt_design", opt));
            if let Some(hat) = hat {
                let eps = s.d.factors.iter().zip(&hat.factors).map(|(x, y)| kolmogorov_distance(x, y)).collect::<ral_core::Result<Vec<_>>>()?;
                let eps = eps.into_iter().fold(0.0, f64::max);
                let (hat_m, _) = myerson_optimal(&hat.factors)?;
                let opt_hat = revenue_exact(&hat_m, &hat)?;
                rows.push(c.info("kolmogorov_distance", eps));
                rows.push(c.info("opt_true", opt_hat));
                rows.push(c.bounded("opt_gap", (opt - opt_hat).abs(), expr::KOLMOGOROV_GAP, kolmogorov_gap_bound(s.n, s.h, eps)));
            }
        }
    }
    Ok(Report::new("robustify", g.seed(), rows))
}
