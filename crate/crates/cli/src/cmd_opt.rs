use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use ral_core::mech::revenue_exact;
use ral_core::multi_item::{bic_gap_bound, opt_bic_lp, opt_dsic_lp};
use ral_core::single_item::myerson_optimal;

use crate::load::{load_scenario, read};
use crate::report::{expr, instance_hash, Report, ReportRow};
use crate::{Global, Ic};

#[derive(Args, Debug)]
pub struct OptArgs {
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value = "bic")]
    pub ic: Ic,
    /// Allowed regret η (BIC) or γ (DSIC).
    #[arg(long, default_value_t = 0.0)]
    pub eta: f64,
    /// Where to write the optimal mechanism.
    #[arg(long)]
    pub mech_out: Option<PathBuf>,
}

pub fn run(a: &OptArgs, g: &Global) -> Result<Report> {
    let s = load_scenario(&a.scenario)?;
    let hash = instance_hash(&read(&a.scenario)?);
    let (value, mech) = match a.ic {
        Ic::Bic => opt_bic_lp(&s, a.eta)?,
        Ic::Dsic => opt_dsic_lp(&s, a.eta)?,
    };
    let metric = match a.ic {
        Ic::Bic => "opt_bic",
        Ic::Dsic => "opt_dsic",
    };
    let mut rows = vec![ReportRow::info("opt", &hash, metric, value)];
    if a.ic == Ic::Bic && a.eta > 0.0 {
        let (exact, _) = opt_bic_lp(&s, 0.0)?;
        let bound = bic_gap_bound(s.n, s.m, s.lipschitz(), s.h, a.eta);
        rows.push(ReportRow::info("opt", &hash, "opt_bic_exact", exact));
        rows.push(ReportRow::bounded("opt", &hash, "relaxation_gap", value - exact, expr::BIC_GAP, bound, g.tolerance));
    }
    if s.m == 1 && a.eta == 0.0 {
        // single item: the LP must agree with Myerson's auction
        let (my, _) = myerson_optimal(&s.d.factors)?;
        let rev = revenue_exact(&my, &s.d)?;
        rows.push(ReportRow::info("opt", &hash, "myerson", rev));
        if a.ic == Ic::Dsic {
            rows.push(ReportRow::bounded("opt", &hash, "myerson_lp_gap", (rev - value).abs(), "0", 0.0, g.tolerance));
        }
    }
    if let Some(p) = &a.mech_out {
        std::fs::write(p, mech.to_json_string())?;
    }
    Ok(Report::new("opt", g.seed(), rows))
}
