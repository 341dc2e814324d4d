//! Audits shared by `robustify` and `experiment`: run a transform and turn its measured
//! guarantees into report rows.

use std::sync::Arc;

use anyhow::Result;

use ral_core::dist::{tv_distance, Point, ProductDist};
use ral_core::mech::{eps_bic_regret, eps_bic_regret_on, eps_dsic_regret, eps_dsic_regret_on, revenue_exact, revenue_exact_on, TabularMechanism};
use ral_core::multi_item::{dsic_tv_robustify, tv_robustify, DsicPipelineReport, PipelineReport, Scenario};

use crate::report::{expr, ReportRow};
use crate::Ic;

pub struct Ctx<'a> {
    pub exp: &'a str,
    pub hash: &'a str,
    pub tol: f64,
}

impl Ctx<'_> {
    pub fn bounded(&self, metric: &str, measured: f64, e: &str, bound: f64) -> ReportRow {
        ReportRow::bounded(self.exp, self.hash, metric, measured, e, bound, self.tol)
    }

    pub fn info(&self, metric: &str, measured: f64) -> ReportRow {
        ReportRow::info(self.exp, self.hash, metric, measured)
    }
}

fn supports(d: &ProductDist) -> Vec<Vec<Point>> {
    d.factors.iter().map(|f| f.support().to_vec()).collect()
}

/// TV transform of `m1` (designed for `s.d`) audited against `fhat`.
pub fn tv_rows(c: &Ctx, s: &Scenario, ic: Ic, m1: Arc<TabularMechanism>, fhat: &ProductDist) -> Result<Vec<ReportRow>> {
    let ml = s.m as f64 * s.lipschitz();
    let n = s.n as f64;
    let tvs = s.d.factors.iter().zip(&fhat.factors).map(|(a, b)| tv_distance(a, b)).collect::<ral_core::Result<Vec<f64>>>()?;
    let rho: f64 = tvs.iter().sum();
    let nu = tvs.iter().cloned().fold(0.0, f64::max);
    let rev1 = revenue_exact(&m1, &s.d)?;
    let mis: Vec<Vec<Point>> =
        supports(&s.d).into_iter().zip(supports(fhat)).map(|(a, b)| a.into_iter().chain(b).collect()).collect();
    let mut rows = vec![c.info("rho", rho)];
    match ic {
        Ic::Bic => {
            let eta = eps_bic_regret(&m1, &s.d)?.eps;
            let m2 = tv_robustify(m1, &s.d)?;
            let r = eps_bic_regret_on(&m2, fhat, &mis)?;
            let rev2 = revenue_exact_on(&m2, fhat)?;
            rows.push(c.info("eta", eta));
            rows.push(c.bounded("bic_regret", r.eps, expr::TV_REGRET, 2.0 * ml * s.h * rho + eta));
            rows.push(c.bounded("revenue_loss", rev1 - rev2, expr::TV_REVENUE, n * ml * s.h * rho));
            rows.push(c.bounded("ir_violations", r.ir_violations.len() as f64, expr::EXACT_IC, 0.0));
        }
        Ic::Dsic => {
            let eta = eps_dsic_regret(&m1)?.eps;
            let m2 = dsic_tv_robustify(m1, &s.d)?;
            let r = eps_dsic_regret_on(&m2, &mis, &supports(&s.d))?;
            let rev2 = revenue_exact_on(&m2, fhat)?;
            rows.push(c.info("eta", eta));
            rows.push(c.bounded("dsic_regret", r.eps, expr::DSIC_TV_REGRET, eta));
            rows.push(c.bounded("revenue_loss", rev1 - rev2, expr::DSIC_TV_REVENUE, n * n * ml * s.h * nu));
            rows.push(c.bounded("ir_violations", r.ir_violations.len() as f64, expr::EXACT_IC, 0.0));
        }
    }
    Ok(rows)
}

pub fn bic_pipeline_rows(c: &Ctx, s: &Scenario, rep: &PipelineReport) -> Vec<ReportRow> {
    let ml = s.m as f64 * s.lipschitz();
    let n = s.n as f64;
    let d = rep.delta;
    let mut rows = Vec::new();
    for (l, b) in rep.branches.iter().enumerate() {
        let tag = |m: &str| format!("branch{}_{}", l, m);
        rows.push(c.info(&tag("rho"), b.rho));
        rows.push(c.bounded(&tag("xi1"), b.xi1, expr::LIFT_REGRET, 3.0 * ml * d));
        rows.push(c.bounded(&tag("xi2"), b.xi2, expr::TV_REGRET, 2.0 * ml * s.h * b.rho + b.xi1));
        rows.push(c.bounded(&tag("regret"), b.regret, expr::ROUND_REGRET, b.xi2 + 3.0 * ml * d));
        rows.push(c.bounded(&tag("lift_revenue_loss"), rep.base_revenue - b.rev_m1, expr::SHIFT_REVENUE, n * ml * d));
        rows.push(c.bounded(&tag("tv_revenue_loss"), b.rev_m1 - b.rev_m2, expr::TV_REVENUE, n * ml * s.h * b.rho));
        rows.push(c.bounded(&tag("round_revenue_loss"), b.rev_m2 - b.rev_hat, expr::SHIFT_REVENUE, n * ml * d));
        rows.push(c.bounded(&tag("ir_violations"), if b.ir_ok { 0.0 } else { 1.0 }, expr::EXACT_IC, 0.0));
    }
    rows.push(c.info("kappa", rep.kappa));
    rows.push(c.info("mean_regret", rep.mean_regret));
    rows.push(c.info("mixture_regret", rep.mixture_regret));
    rows.push(c.info("regret_constant", rep.regret_constant));
    rows.push(c.info("base_revenue", rep.base_revenue));
    rows.push(c.info("mean_revenue", rep.mean_revenue));
    rows.push(c.info("revenue_constant", rep.revenue_constant));
    rows
}

pub fn dsic_pipeline_rows(c: &Ctx, rep: &DsicPipelineReport) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for (l, b) in rep.branches.iter().enumerate() {
        let tag = |m: &str| format!("branch{}_{}", l, m);
        rows.push(c.bounded(&tag("m2_regret"), b.m2_regret, expr::DSIC_TV_REGRET, b.xi1));
        rows.push(c.info(&tag("regret"), b.regret));
        rows.push(c.bounded(&tag("ir_violations"), if b.ir_ok { 0.0 } else { 1.0 }, expr::EXACT_IC, 0.0));
    }
    rows.push(c.info("tv_threshold", rep.tv_threshold));
    for (i, r) in rep.exceed_rate.iter().enumerate() {
        rows.push(c.info(&format!("exceed_rate_bidder{}", i), *r));
    }
    rows.push(c.info("exceed_rate_any", rep.exceed_rate_any));
    rows.push(c.info("regret_quantile", rep.regret_quantile));
    rows.push(c.info("base_revenue", rep.base_revenue));
    rows.push(c.info("mean_revenue", rep.mean_revenue));
    rows
}

/// Mechanism that the adversary never influences: all transforms are built before `fhat` is read.
pub fn base_mechanism(s: &Scenario, ic: Ic) -> Result<Arc<TabularMechanism>> {
    let (_, m) = match ic {
        Ic::Bic => ral_core::multi_item::opt_bic_lp(s, 0.0)?,
        Ic::Dsic => ral_core::multi_item::opt_dsic_lp(s, 0.0)?,
    };
    Ok(Arc::new(m))
}
