//! Multi-item revenue oracles and robustification transforms.

mod nisan;
mod pipeline;
mod tv;

pub use nisan::{nisan_ic_transform, nisan_revenue_bound, NisanMechanism};
pub use pipeline::{
    bic_prokhorov_robustify, dsic_prokhorov_robustify, kappa, resample_lift, resample_lift_sampled, round_lift,
    BranchReport, DsicBranchReport, DsicPipelineReport, Guarantee, MixtureMechanism, PipelineBranch, PipelineReport,
    ProkhorovPipeline, RoundLift, CHAIN_TOL,
};
pub use tv::{dsic_tv_robustify, tv_robustify, DsicTvRobust, TvRobust};

use serde::{Deserialize, Serialize};

use crate::dist::{DiscreteDist, ProductDist};
use crate::error::{Error, Result};
use crate::lpcore::{lp_solve, LpProblem, LpStatus, Relation};
use crate::mech::{check_cap, for_each_index, profile_count, LotteryEntry, Outcome, TabularMechanism, TypeSpace};
use crate::valuation::{value, AllocSet, ValuationModel};

pub const SCENARIO_SCHEMA: &str = "ral.scenario/1";

/// Largest LP (variables × rows) the dense solver is asked to handle.
pub const LP_CELL_CAP: u128 = 60_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioFile", into = "ScenarioFile")]
pub struct Scenario {
    pub n: usize,
    pub m: usize,
    pub h: f64,
    pub model: ValuationModel,
    pub d: ProductDist,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ScenarioFile {
    n: usize,
    m: usize,
    #[serde(rename = "H")]
    h: f64,
    model: ValuationModel,
    factors: Vec<DiscreteDist>,
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = Error;
    fn try_from(f: ScenarioFile) -> Result<Self> {
        Scenario::new(f.n, f.m, f.h, f.model, ProductDist::new(f.factors)?)
    }
}

impl From<Scenario> for ScenarioFile {
    fn from(s: Scenario) -> Self {
        ScenarioFile { n: s.n, m: s.m, h: s.h, model: s.model, factors: s.d.factors }
    }
}

impl Scenario {
    pub fn new(n: usize, m: usize, h: f64, model: ValuationModel, d: ProductDist) -> Result<Self> {
        model.validate(m)?;
        if n == 0 || d.n() != n {
            return Err(Error::ShapeMismatch(format!("{} bidders but {} factors", n, d.n())));
        }
        if d.dim() != m {
            return Err(Error::DimMismatch { left: m, right: d.dim() });
        }
        if !(h > 0.0) {
            return Err(Error::InvalidModel(format!("value bound {} must be positive", h)));
        }
        for (i, f) in d.factors.iter().enumerate() {
            if let Some(x) = f.support().iter().find(|x| x.iter().any(|&v| !(v >= -1e-9 && v <= h + 1e-9))) {
                return Err(Error::InvalidModel(format!("bidder {} type {:?} outside [0, {}]^{}", i, x, h, m)));
            }
        }
        Ok(Scenario { n, m, h, model, d })
    }

    /// Same bidders and model, different type distribution.
    pub fn with_dist(&self, d: ProductDist) -> Result<Self> {
        Scenario::new(self.n, self.m, self.h, self.model, d)
    }

    pub fn lipschitz(&self) -> f64 {
        self.model.lipschitz()
    }
}

/// All deterministic allocations except the empty one: each item goes to one bidder or nobody.
pub fn allocations(n: usize, m: usize) -> Vec<Vec<AllocSet>> {
    let total = (n + 1).pow(m as u32);
    (1..total)
        .map(|mut code| {
            let mut a = vec![0 as AllocSet; n];
            for j in 0..m {
                let who = code % (n + 1);
                code /= n + 1;
                if who > 0 {
                    a[who - 1] |= 1 << j;
                }
            }
            a
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Ic {
    Bic(f64),
    Dsic(f64),
}

fn optimal_lp(s: &Scenario, ic: Ic) -> Result<(f64, TabularMechanism)> {
    let n = s.n;
    let sup: Vec<&[Vec<f64>]> = s.d.factors.iter().map(|f| f.support()).collect();
    let radix: Vec<usize> = sup.iter().map(|x| x.len()).collect();
    check_cap(&radix)?;
    let allocs = allocations(n, s.m);
    let na = allocs.len();
    let block = na + n;
    let np = profile_count(&radix) as usize;
    let nvars = np * block;
    let rows_est = np
        + np * n
        + match ic {
            Ic::Bic(_) => radix.iter().map(|r| r * r).sum::<usize>(),
            Ic::Dsic(_) => np * radix.iter().sum::<usize>(),
        };
    let cells = nvars as u128 * rows_est as u128;
    if cells > LP_CELL_CAP {
        return Err(Error::InstanceTooLarge(cells));
    }
    // vt[i][t][a]: value of allocation a to bidder i at type t
    let vt: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| sup[i].iter().map(|v| allocs.iter().map(|a| value(s.model, v, a[i])).collect()).collect())
        .collect();
    let flat = |idx: &[usize]| idx.iter().zip(&radix).fold(0usize, |k, (&t, &r)| k * r + t);
    let xv = |k: usize, a: usize| k * block + a;
    let pv = |k: usize, i: usize| k * block + na + i;

    let mut obj = vec![0.0; nvars];
    let mut profiles = Vec::with_capacity(np);
    for_each_index(&radix, |idx| profiles.push(idx.to_vec()));
    for (k, idx) in profiles.iter().enumerate() {
        let p = s.d.prob(idx);
        for i in 0..n {
            obj[pv(k, i)] = p;
        }
    }
    let mut lp = LpProblem::new(obj);
    for k in 0..np {
        for i in 0..n {
            lp.set_bounds(pv(k, i), f64::NEG_INFINITY, f64::INFINITY);
        }
    }
    for (k, idx) in profiles.iter().enumerate() {
        let terms: Vec<(usize, f64)> = (0..na).map(|a| (xv(k, a), 1.0)).collect();
        lp.add_sparse(&terms, Relation::Le, 1.0);
        for i in 0..n {
            let mut terms: Vec<(usize, f64)> = vec![(pv(k, i), 1.0)];
            terms.extend((0..na).map(|a| (xv(k, a), -vt[i][idx[i]][a])));
            lp.add_sparse(&terms, Relation::Le, 0.0);
        }
    }
    match ic {
        Ic::Bic(eta) => {
            for i in 0..n {
                let opp_radix: Vec<usize> = radix.iter().enumerate().map(|(j, &r)| if j == i { 1 } else { r }).collect();
                for t in 0..radix[i] {
                    for t2 in 0..radix[i] {
                        if t2 == t {
                            continue;
                        }
                        let mut terms = Vec::new();
                        for_each_index(&opp_radix, |o| {
                            let mut real = o.to_vec();
                            let w: f64 = (0..n).filter(|&j| j != i).map(|j| s.d.factors[j].probs()[o[j]]).product();
                            real[i] = t2;
                            let kd = flat(&real);
                            real[i] = t;
                            let kt = flat(&real);
                            for a in 0..na {
                                let v = vt[i][t][a];
                                if v != 0.0 {
                                    terms.push((xv(kd, a), w * v));
                                    terms.push((xv(kt, a), -w * v));
                                }
                            }
                            terms.push((pv(kd, i), -w));
                            terms.push((pv(kt, i), w));
                        });
                        lp.add_sparse(&terms, Relation::Le, eta);
                    }
                }
            }
        }
        Ic::Dsic(gamma) => {
            for (k, idx) in profiles.iter().enumerate() {
                for i in 0..n {
                    let t = idx[i];
                    let mut dev = idx.clone();
                    for t2 in 0..radix[i] {
                        if t2 == t {
                            continue;
                        }
                        dev[i] = t2;
                        let kd = flat(&dev);
                        let mut terms = Vec::new();
                        for a in 0..na {
                            let v = vt[i][t][a];
                            if v != 0.0 {
                                terms.push((xv(kd, a), v));
                                terms.push((xv(k, a), -v));
                            }
                        }
                        terms.push((pv(kd, i), -1.0));
                        terms.push((pv(k, i), 1.0));
                        lp.add_sparse(&terms, Relation::Le, gamma);
                    }
                }
            }
        }
    }
    let sol = lp_solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::LpFailure(format!("{:?} revenue LP", sol.status)));
    }
    let ts = TypeSpace::from_supports(&s.d);
    let mut k = 0usize;
    let mech = TabularMechanism::from_fn(ts, s.m, s.h, s.model, |idx| {
        let mut lottery: Vec<LotteryEntry> = (0..na)
            .filter_map(|a| {
                let p = sol.x[xv(k, a)];
                (p > 1e-12).then(|| LotteryEntry { assign: allocs[a].clone(), p })
            })
            .collect();
        let total: f64 = lottery.iter().map(|e| e.p).sum();
        if total > 1.0 {
            for e in lottery.iter_mut() {
                e.p /= total;
            }
        }
        let mut out = Outcome { lottery, payments: (0..n).map(|i| sol.x[pv(k, i)]).collect() };
        // snap solver noise so ex-post IR holds exactly
        for i in 0..n {
            let val = out.bundle_value(s.model, &sup[i][idx[i]], i);
            if out.payments[i] > val {
                out.payments[i] = val;
            }
        }
        k += 1;
        out
    })?;
    Ok((sol.objective, mech))
}

/// Optimal revenue over η-BIC, ex-post IR mechanisms on the support of `s.d`.
pub fn opt_bic_lp(s: &Scenario, eta: f64) -> Result<(f64, TabularMechanism)> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidEpsilon(eta));
    }
    optimal_lp(s, Ic::Bic(eta))
}

/// Optimal revenue over γ-DSIC, ex-post IR mechanisms on the support of `s.d`.
pub fn opt_dsic_lp(s: &Scenario, gamma: f64) -> Result<(f64, TabularMechanism)> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidEpsilon(gamma));
    }
    optimal_lp(s, Ic::Dsic(gamma))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub opt: f64,
    pub opt_eta: f64,
    pub bound: f64,
    pub pass: bool,
}

/// 2n√(mLHε): how much relaxing BIC to ε-BIC can raise optimal revenue.
pub fn bic_gap_bound(n: usize, m: usize, l: f64, h: f64, eps: f64) -> f64 {
    2.0 * n as f64 * (m as f64 * l * h * eps).sqrt()
}

pub fn bic_gap_report(s: &Scenario, eps: f64) -> Result<GapReport> {
    let (opt, _) = opt_bic_lp(s, 0.0)?;
    let (opt_eta, _) = opt_bic_lp(s, eps)?;
    let bound = bic_gap_bound(s.n, s.m, s.lipschitz(), s.h, eps);
    Ok(GapReport { opt, opt_eta, bound, pass: opt_eta - opt <= bound + 1e-6 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mech::{eps_bic_regret, eps_dsic_regret, ir_check, revenue_exact};

    fn scen(n: usize, atoms: &[(f64, f64)]) -> Scenario {
        let f = DiscreteDist::from_atoms(atoms).unwrap();
        Scenario::new(n, 1, 2.0, ValuationModel::Additive, ProductDist::new(vec![f; n]).unwrap()).unwrap()
    }

    #[test]
    fn allocation_count() {
        assert_eq!(allocations(2, 2).len(), 8);
        assert_eq!(allocations(3, 1).len(), 3);
        assert!(allocations(2, 2).iter().all(|a| a[0] & a[1] == 0));
    }

    #[test]
    fn single_bidder_two_point() {
        let s = scen(1, &[(1.0, 0.5), (2.0, 0.5)]);
        let (b, mb) = opt_bic_lp(&s, 0.0).unwrap();
        let (d, _) = opt_dsic_lp(&s, 0.0).unwrap();
        assert!((b - 1.0).abs() < 1e-9 && (d - 1.0).abs() < 1e-9);
        assert!((revenue_exact(&mb, &s.d).unwrap() - b).abs() < 1e-9);
        assert!(eps_bic_regret(&mb, &s.d).unwrap().eps < 1e-9);
        assert!(ir_check(&mb).unwrap().is_empty());
    }

    #[test]
    fn two_bidders_match_myerson() {
        let s = scen(2, &[(1.0, 0.5), (2.0, 0.5)]);
        let (d, md) = opt_dsic_lp(&s, 0.0).unwrap();
        let (b, _) = opt_bic_lp(&s, 0.0).unwrap();
        assert!((d - 1.5).abs() < 1e-9, "{}", d);
        assert!(d <= b + 1e-9);
        assert!(eps_dsic_regret(&md).unwrap().eps < 1e-9);
    }

    #[test]
    fn zero_values_zero_revenue() {
        let s = scen(2, &[(0.0, 1.0)]);
        assert!(opt_bic_lp(&s, 0.0).unwrap().0.abs() < 1e-12);
    }

    #[test]
    fn relaxed_ic_gap() {
        let s = scen(1, &[(1.0, 0.5), (2.0, 0.5)]);
        let (opt, _) = opt_bic_lp(&s, 0.0).unwrap();
        let (opt_h, _) = opt_bic_lp(&s, s.h).unwrap();
        assert!(opt_h >= opt - 1e-9);
        assert!(opt_h - opt <= bic_gap_bound(1, 1, 1.0, s.h, s.h) + 1e-9);
        let r = bic_gap_report(&s, 0.0).unwrap();
        assert!((r.opt_eta - r.opt).abs() < 1e-9 && r.pass);
        assert!((bic_gap_bound(2, 1, 1.0, 1.0, 0.04) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn scenario_json() {
        let s = scen(2, &[(1.0, 0.5), (2.0, 0.5)]);
        let txt = serde_json::to_string(&s).unwrap();
        assert!(txt.contains("\"H\":2.0"));
        let back: Scenario = serde_json::from_str(&txt).unwrap();
        assert_eq!(back, s);
    }
}
