//! Transforms that keep incentive guarantees when the true distribution is TV-close to
//! the one the base mechanism was designed for.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use crate::dist::{Point, ProductDist};
use crate::error::{Error, Result};
use crate::mech::{
    for_each_index, ir_check_on, point_key, utility, Bid, Mechanism, Outcome, TabularMechanism, IR_TOL,
};
use crate::valuation::{value, AllocSet, ValuationModel};

const TIE_TOL: f64 = 1e-12;

fn supports(f: &ProductDist) -> Vec<Vec<Point>> {
    f.factors.iter().map(|x| x.support().to_vec()).collect()
}

// maps supp F_i into the base type space
fn locate(base: &TabularMechanism, f: &ProductDist) -> Result<Vec<Vec<usize>>> {
    if base.typespace().n() != f.n() {
        return Err(Error::ShapeMismatch(format!("mechanism has {} bidders, distribution {}", base.typespace().n(), f.n())));
    }
    f.factors
        .iter()
        .enumerate()
        .map(|(i, fi)| {
            fi.support()
                .iter()
                .map(|x| base.typespace().index_of(i, x).ok_or(Error::UnsupportedType { bidder: i, point: x.clone() }))
                .collect()
        })
        .collect()
}

fn require_ir(base: &TabularMechanism, f: &ProductDist) -> Result<()> {
    let sup = supports(f);
    if let Some(v) = ir_check_on(base, &sup)?.into_iter().next() {
        let profile = v
            .profile
            .iter()
            .enumerate()
            .map(|(i, x)| f.factors[i].index_of(x).unwrap_or(usize::MAX))
            .collect();
        return Err(Error::BaseMechanismNotIr { bidder: v.bidder, profile, utility: v.utility });
    }
    Ok(())
}

#[derive(Clone, Debug)]
struct Interim {
    bundles: Vec<(AllocSet, f64)>,
    pay: f64,
}

impl Interim {
    fn value(&self, model: ValuationModel, v: &[f64]) -> f64 {
        self.bundles.iter().map(|&(s, p)| p * value(model, v, s)).sum()
    }
}

/// Interim-BIC robustification: off-support types are mapped to their best on-support report
/// (or ⊥), and their payment is scaled so that ex-post IR holds.
pub struct TvRobust {
    base: Arc<TabularMechanism>,
    f_index: Vec<Vec<usize>>,
    f_support: Vec<Vec<Point>>,
    interim: Vec<Vec<Interim>>,
    cache: Mutex<HashMap<(usize, Vec<i64>), Option<usize>>>,
}

pub fn tv_robustify(base: Arc<TabularMechanism>, f: &ProductDist) -> Result<TvRobust> {
    let f_index = locate(&base, f)?;
    require_ir(&base, f)?;
    let n = f.n();
    let radix: Vec<usize> = f.factors.iter().map(|x| x.len()).collect();
    let mut interim = Vec::with_capacity(n);
    for i in 0..n {
        let mut per = Vec::with_capacity(radix[i]);
        for z in 0..radix[i] {
            let mut opp = radix.clone();
            opp[i] = 1;
            let mut bundles: BTreeMap<AllocSet, f64> = BTreeMap::new();
            let mut pay = 0.0;
            for_each_index(&opp, |o| {
                let mut idx = o.to_vec();
                idx[i] = z;
                let w: f64 = (0..n).filter(|&j| j != i).map(|j| f.factors[j].probs()[idx[j]]).product();
                let base_idx: Vec<usize> = idx.iter().enumerate().map(|(j, &t)| f_index[j][t]).collect();
                let out = base.get(&base_idx).expect("support profile is tabulated");
                for e in &out.lottery {
                    if e.assign[i] != 0 {
                        *bundles.entry(e.assign[i]).or_insert(0.0) += w * e.p;
                    }
                }
                pay += w * out.payments[i];
            });
            per.push(Interim { bundles: bundles.into_iter().collect(), pay });
        }
        interim.push(per);
    }
    Ok(TvRobust { base, f_index, f_support: supports(f), interim, cache: Mutex::new(HashMap::new()) })
}

impl TvRobust {
    pub fn base(&self) -> &TabularMechanism {
        &self.base
    }

    /// Report the bidder is mapped to: an index into supp F_i, or `None` for ⊥.
    pub fn tau(&self, i: usize, v: &[f64]) -> Option<usize> {
        let key = (i, point_key(v));
        if let Some(k) = self.f_support[i].iter().position(|z| point_key(z) == key.1) {
            return Some(k);
        }
        if let Some(r) = self.cache.lock().unwrap().get(&key) {
            return *r;
        }
        let model = self.base.model;
        let mut best: Option<(usize, f64)> = None;
        for (z, it) in self.interim[i].iter().enumerate() {
            let u = it.value(model, v) - it.pay;
            if best.map_or(true, |(_, b)| u > b + TIE_TOL) {
                best = Some((z, u));
            }
        }
        let r = best.filter(|&(_, u)| u >= -TIE_TOL).map(|(z, _)| z);
        self.cache.lock().unwrap().insert(key, r);
        r
    }
}

impl Mechanism for TvRobust {
    fn n(&self) -> usize {
        self.f_index.len()
    }

    fn model(&self) -> ValuationModel {
        self.base.model
    }

    fn outcome(&self, bids: &[Bid<'_>]) -> Outcome {
        let n = self.n();
        let mut idx = Vec::with_capacity(n);
        let mut mapped = Vec::with_capacity(n);
        for (i, b) in bids.iter().enumerate() {
            let Some(v) = b else { return Outcome::zero(n) };
            match self.tau(i, v) {
                None => return Outcome::zero(n),
                Some(z) => {
                    let off = point_key(&self.f_support[i][z]) != point_key(v);
                    mapped.push(off.then_some(z));
                    idx.push(self.f_index[i][z]);
                }
            }
        }
        let mut out = self.base.outcome_idx(&idx);
        let model = self.base.model;
        for (i, z) in mapped.iter().enumerate() {
            let Some(z) = *z else { continue };
            let v = bids[i].unwrap();
            let it = &self.interim[i][z];
            let big_v = it.value(model, v);
            let realized = out.bundle_value(model, v, i);
            out.payments[i] = if big_v > 0.0 { realized * it.pay / big_v } else { 0.0 };
        }
        out
    }
}

/// Ex-post robustification: with one bidder off-support that bidder picks its best on-support
/// report against the realized opponents; with two or more the outcome is empty.
pub struct DsicTvRobust {
    base: Arc<TabularMechanism>,
    f_index: Vec<Vec<usize>>,
    f_support: Vec<Vec<Point>>,
}

pub fn dsic_tv_robustify(base: Arc<TabularMechanism>, f: &ProductDist) -> Result<DsicTvRobust> {
    let f_index = locate(&base, f)?;
    require_ir(&base, f)?;
    Ok(DsicTvRobust { base, f_index, f_support: supports(f) })
}

impl DsicTvRobust {
    fn on_support(&self, i: usize, v: &[f64]) -> Option<usize> {
        let key = point_key(v);
        self.f_support[i].iter().position(|z| point_key(z) == key)
    }
}

impl Mechanism for DsicTvRobust {
    fn n(&self) -> usize {
        self.f_index.len()
    }

    fn model(&self) -> ValuationModel {
        self.base.model
    }

    fn outcome(&self, bids: &[Bid<'_>]) -> Outcome {
        let n = self.n();
        let mut idx = vec![0usize; n];
        let mut off = None;
        for (i, b) in bids.iter().enumerate() {
            let Some(v) = b else { return Outcome::zero(n) };
            match self.on_support(i, v) {
                Some(z) => idx[i] = self.f_index[i][z],
                None if off.is_none() => off = Some(i),
                None => return Outcome::zero(n),
            }
        }
        let Some(i) = off else { return self.base.outcome_idx(&idx) };
        let v = bids[i].unwrap();
        let model = self.base.model;
        let mut best: Option<(Outcome, f64)> = None;
        for &z in &self.f_index[i] {
            idx[i] = z;
            let out = self.base.outcome_idx(&idx);
            let u = utility(model, v, &out, i);
            if best.as_ref().map_or(true, |(_, b)| u > b + TIE_TOL) {
                best = Some((out, u));
            }
        }
        match best {
            Some((out, u)) if u >= -IR_TOL => out,
            _ => Outcome::zero(n),
        }
    }
}
