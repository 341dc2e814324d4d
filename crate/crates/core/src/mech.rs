//! Mechanisms as outcome tables or evaluation wrappers, plus exact IC/IR/revenue verifiers.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{quantize_point, sample_product, Point, ProductDist};
use crate::error::{Error, Result};
use crate::valuation::{value, AllocSet, ValuationModel};

/// Upper bound on enumerated type profiles.
pub const PROFILE_CAP: u128 = 1_000_000;
pub const IR_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotteryEntry {
    pub assign: Vec<AllocSet>,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub lottery: Vec<LotteryEntry>,
    pub payments: Vec<f64>,
}

impl Outcome {
    pub fn zero(n: usize) -> Self {
        Outcome { lottery: Vec::new(), payments: vec![0.0; n] }
    }

    /// Deterministic single assignment.
    pub fn sure(assign: Vec<AllocSet>, payments: Vec<f64>) -> Self {
        let lottery = if assign.iter().all(|s| *s == 0) {
            Vec::new()
        } else {
            vec![LotteryEntry { assign, p: 1.0 }]
        };
        Outcome { lottery, payments }
    }

    /// Expected value of bidder `i`'s bundle for type `v`.
    pub fn bundle_value(&self, model: ValuationModel, v: &[f64], i: usize) -> f64 {
        self.lottery.iter().map(|e| e.p * value(model, v, e.assign[i])).sum()
    }

    /// Probability that bidder `i` receives a nonempty bundle.
    pub fn alloc_prob(&self, i: usize) -> f64 {
        self.lottery.iter().filter(|e| e.assign[i] != 0).map(|e| e.p).sum()
    }

    pub fn revenue(&self) -> f64 {
        self.payments.iter().sum()
    }

    pub fn total_prob(&self) -> f64 {
        self.lottery.iter().map(|e| e.p).sum()
    }
}

pub fn utility(model: ValuationModel, v: &[f64], out: &Outcome, i: usize) -> f64 {
    out.bundle_value(model, v, i) - out.payments[i]
}

/// Accumulates weighted outcomes, merging identical assignments.
#[derive(Default)]
pub struct OutcomeMixer {
    entries: BTreeMap<Vec<AllocSet>, f64>,
    payments: Vec<f64>,
}

impl OutcomeMixer {
    pub fn new(n: usize) -> Self {
        OutcomeMixer { entries: BTreeMap::new(), payments: vec![0.0; n] }
    }

    pub fn add(&mut self, w: f64, out: &Outcome, payments: &[f64]) {
        for e in &out.lottery {
            *self.entries.entry(e.assign.clone()).or_insert(0.0) += w * e.p;
        }
        for (acc, p) in self.payments.iter_mut().zip(payments) {
            *acc += w * p;
        }
    }

    pub fn finish(self) -> Outcome {
        let lottery = self
            .entries
            .into_iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(assign, p)| LotteryEntry { assign, p })
            .collect();
        Outcome { lottery, payments: self.payments }
    }
}

/// A bid is a type vector or ⊥ (`None`).
pub type Bid<'a> = Option<&'a [f64]>;

pub trait Mechanism: Send + Sync {
    fn n(&self) -> usize;
    fn model(&self) -> ValuationModel;
    fn outcome(&self, bids: &[Bid<'_>]) -> Outcome;
}

impl<T: Mechanism + ?Sized> Mechanism for Arc<T> {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn model(&self) -> ValuationModel {
        (**self).model()
    }
    fn outcome(&self, bids: &[Bid<'_>]) -> Outcome {
        (**self).outcome(bids)
    }
}

pub(crate) fn point_key(x: &[f64]) -> Vec<i64> {
    x.iter().map(|&v| (v * 1e12).round() as i64).collect()
}

/// Per-bidder type lists; ⊥ is the implicit index `types[i].len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct TypeSpace {
    types: Vec<Vec<Point>>,
    lookup: Vec<HashMap<Vec<i64>, usize>>,
}

impl TypeSpace {
    pub fn new(types: Vec<Vec<Point>>) -> Result<Self> {
        let mut lookup = Vec::with_capacity(types.len());
        let types: Vec<Vec<Point>> =
            types.into_iter().map(|ts| ts.iter().map(|t| quantize_point(t)).collect()).collect();
        for (i, ts) in types.iter().enumerate() {
            if ts.is_empty() {
                return Err(Error::ShapeMismatch(format!("bidder {} has no types", i)));
            }
            let mut map = HashMap::new();
            for (k, t) in ts.iter().enumerate() {
                if map.insert(point_key(t), k).is_some() {
                    return Err(Error::ShapeMismatch(format!("duplicate type {:?} for bidder {}", t, i)));
                }
            }
            lookup.push(map);
        }
        Ok(TypeSpace { types, lookup })
    }

    pub fn from_supports(d: &ProductDist) -> Self {
        TypeSpace::new(d.factors.iter().map(|f| f.support().to_vec()).collect()).expect("supports are distinct")
    }

    pub fn n(&self) -> usize {
        self.types.len()
    }

    pub fn types(&self, i: usize) -> &[Point] {
        &self.types[i]
    }

    pub fn all(&self) -> &[Vec<Point>] {
        &self.types
    }

    pub fn bottom(&self, i: usize) -> usize {
        self.types[i].len()
    }

    pub fn index_of(&self, i: usize, x: &[f64]) -> Option<usize> {
        self.lookup[i].get(&point_key(x)).copied()
    }

    pub fn radix(&self) -> Vec<usize> {
        self.types.iter().map(|t| t.len()).collect()
    }
}

pub fn profile_count(radix: &[usize]) -> u128 {
    radix.iter().map(|&r| r as u128).product()
}

pub fn check_cap(radix: &[usize]) -> Result<()> {
    let c = profile_count(radix);
    if c > PROFILE_CAP {
        return Err(Error::InstanceTooLarge(c));
    }
    Ok(())
}

/// Visits every index tuple of the mixed-radix space in lexicographic order.
pub fn for_each_index<F: FnMut(&[usize])>(radix: &[usize], mut f: F) {
    if radix.iter().any(|&r| r == 0) {
        return;
    }
    let mut idx = vec![0usize; radix.len()];
    loop {
        f(&idx);
        let mut k = radix.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < radix[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularMechanism {
    pub m: usize,
    pub h: f64,
    pub model: ValuationModel,
    typespace: TypeSpace,
    table: Vec<Outcome>,
}

impl TabularMechanism {
    pub fn from_fn<F: FnMut(&[usize]) -> Outcome>(
        typespace: TypeSpace,
        m: usize,
        h: f64,
        model: ValuationModel,
        mut f: F,
    ) -> Result<Self> {
        let radix = typespace.radix();
        check_cap(&radix)?;
        let mut table = Vec::with_capacity(profile_count(&radix) as usize);
        for_each_index(&radix, |idx| table.push(f(idx)));
        Ok(TabularMechanism { m, h, model, typespace, table })
    }

    pub fn typespace(&self) -> &TypeSpace {
        &self.typespace
    }

    pub fn n_profiles(&self) -> usize {
        self.table.len()
    }

    fn flat(&self, idx: &[usize]) -> Option<usize> {
        let mut k = 0usize;
        for (i, &t) in idx.iter().enumerate() {
            let r = self.typespace.types[i].len();
            if t >= r {
                return None;
            }
            k = k * r + t;
        }
        Some(k)
    }

    /// Outcome at an index profile; `None` when the profile contains ⊥.
    pub fn get(&self, idx: &[usize]) -> Option<&Outcome> {
        self.flat(idx).map(|k| &self.table[k])
    }

    pub fn get_mut(&mut self, idx: &[usize]) -> Option<&mut Outcome> {
        self.flat(idx).map(move |k| &mut self.table[k])
    }

    pub fn outcome_idx(&self, idx: &[usize]) -> Outcome {
        self.get(idx).cloned().unwrap_or_else(|| Outcome::zero(self.typespace.n()))
    }

    pub fn to_json_string(&self) -> String {
        let mut entries = Vec::with_capacity(self.table.len());
        for_each_index(&self.typespace.radix(), |idx| {
            let out = self.get(idx).unwrap();
            entries.push(TableEntry {
                profile: idx.to_vec(),
                lottery: out
                    .lottery
                    .iter()
                    .map(|e| JsonLottery {
                        assign: e.assign.iter().map(|&s| crate::valuation::items_of(s).collect()).collect(),
                        p: e.p,
                    })
                    .collect(),
                payments: out.payments.clone(),
            });
        });
        let file = MechanismFile {
            schema: MECH_SCHEMA.into(),
            m: self.m,
            h: self.h,
            model: self.model,
            typespace: self.typespace.types.clone(),
            entries,
        };
        serde_json::to_string_pretty(&file).expect("mechanism serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: MechanismFile = serde_json::from_str(s)
            .map_err(|e| Error::ShapeMismatch(format!("line {} column {}: {}", e.line(), e.column(), e)))?;
        let ts = TypeSpace::new(file.typespace)?;
        let n = ts.n();
        let mut by_profile: HashMap<Vec<usize>, Outcome> = HashMap::new();
        for e in file.entries {
            let lottery = e
                .lottery
                .into_iter()
                .map(|l| LotteryEntry { assign: l.assign.iter().map(|b| b.iter().map(|j| 1u32 << j).sum()).collect(), p: l.p })
                .collect();
            by_profile.insert(e.profile, Outcome { lottery, payments: e.payments });
        }
        let mut missing = None;
        let mech = TabularMechanism::from_fn(ts, file.m, file.h, file.model, |idx| {
            by_profile.remove(idx).unwrap_or_else(|| {
                missing.get_or_insert(idx.to_vec());
                Outcome::zero(n)
            })
        })?;
        if let Some(p) = missing {
            return Err(Error::ShapeMismatch(format!("table has no entry for profile {:?}", p)));
        }
        Ok(mech)
    }
}

pub const MECH_SCHEMA: &str = "ral.mechanism/1";

#[derive(Serialize, Deserialize)]
struct JsonLottery {
    assign: Vec<Vec<usize>>,
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct TableEntry {
    profile: Vec<usize>,
    lottery: Vec<JsonLottery>,
    payments: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MechanismFile {
    schema: String,
    m: usize,
    h: f64,
    model: ValuationModel,
    typespace: Vec<Vec<Point>>,
    entries: Vec<TableEntry>,
}

impl Mechanism for TabularMechanism {
    fn n(&self) -> usize {
        self.typespace.n()
    }

    fn model(&self) -> ValuationModel {
        self.model
    }

    fn outcome(&self, bids: &[Bid<'_>]) -> Outcome {
        let mut idx = Vec::with_capacity(bids.len());
        for (i, b) in bids.iter().enumerate() {
            match b.and_then(|x| self.typespace.index_of(i, x)) {
                Some(k) => idx.push(k),
                None => return Outcome::zero(self.n()),
            }
        }
        self.outcome_idx(&idx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub bidder: usize,
    pub truth: Point,
    /// `None` stands for ⊥.
    pub misreport: Option<Point>,
    pub regret: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrViolation {
    pub bidder: usize,
    pub profile: Vec<Point>,
    pub utility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub per_bidder: Vec<f64>,
    pub eps: f64,
    pub witness: Option<Witness>,
    pub ir_violations: Vec<IrViolation>,
}

impl RegretReport {
    fn new(n: usize) -> Self {
        RegretReport { per_bidder: vec![0.0; n], eps: 0.0, witness: None, ir_violations: Vec::new() }
    }

    fn record(&mut self, bidder: usize, regret: f64, truth: &[f64], mis: Option<&Point>) {
        if regret > self.per_bidder[bidder] {
            self.per_bidder[bidder] = regret;
        }
        if regret > self.eps {
            self.eps = regret;
            self.witness = Some(Witness { bidder, truth: truth.to_vec(), misreport: mis.cloned(), regret });
        }
    }
}

// candidate reports: the given types first, then extra misreports not already listed
fn merged_reports(first: &[Point], extra: &[Point]) -> Vec<Point> {
    let mut seen: HashMap<Vec<i64>, ()> = first.iter().map(|p| (point_key(p), ())).collect();
    let mut out: Vec<Point> = first.to_vec();
    for p in extra {
        if seen.insert(point_key(p), ()).is_none() {
            out.push(quantize_point(p));
        }
    }
    out
}

fn others(lists: &[Vec<Point>], i: usize) -> Vec<usize> {
    (0..lists.len()).filter(|&k| k != i).collect()
}

/// Exact interim ε-BIC regret of any mechanism: truthful types from `d`, misreports from
/// `misreports[i]` together with supp(d_i) and ⊥.
pub fn eps_bic_regret_on(mech: &dyn Mechanism, d: &ProductDist, misreports: &[Vec<Point>]) -> Result<RegretReport> {
    let n = d.n();
    if mech.n() != n || misreports.len() != n {
        return Err(Error::ShapeMismatch(format!("mechanism has {} bidders, distribution {}", mech.n(), n)));
    }
    check_cap(&d.factors.iter().map(|f| f.len()).collect::<Vec<_>>())?;
    let model = mech.model();
    let mut report = RegretReport::new(n);
    let supports: Vec<Vec<Point>> = d.factors.iter().map(|f| f.support().to_vec()).collect();
    for i in 0..n {
        let opp = others(&supports, i);
        let radix: Vec<usize> = opp.iter().map(|&k| supports[k].len()).collect();
        let truths = &supports[i];
        let cands = merged_reports(truths, &misreports[i]);
        let nc = cands.len() + 1;
        let mut u = vec![vec![0.0; nc]; truths.len()];
        let mut bids: Vec<Bid<'_>> = vec![None; n];
        for_each_index(&radix, |oidx| {
            let mut prob = 1.0;
            for (slot, (&k, &t)) in opp.iter().zip(oidx).enumerate() {
                let _ = slot;
                bids[k] = Some(&supports[k][t]);
                prob *= d.factors[k].probs()[t];
            }
            for c in 0..nc {
                bids[i] = cands.get(c).map(|p| p.as_slice());
                let out = mech.outcome(&bids);
                for (a, v) in truths.iter().enumerate() {
                    let ut = utility(model, v, &out, i);
                    u[a][c] += prob * ut;
                    if c == a && ut < -IR_TOL {
                        let mut profile: Vec<Point> = bids.iter().map(|b| b.unwrap().to_vec()).collect();
                        profile[i] = v.clone();
                        report.ir_violations.push(IrViolation { bidder: i, profile, utility: ut });
                    }
                }
            }
        });
        for (a, v) in truths.iter().enumerate() {
            for c in 0..nc {
                let r = u[a][c] - u[a][a];
                report.record(i, r, v, cands.get(c));
            }
        }
    }
    Ok(report)
}

fn require_supported(ts: &TypeSpace, d: &ProductDist) -> Result<()> {
    if ts.n() != d.n() {
        return Err(Error::ShapeMismatch(format!("type space has {} bidders, distribution {}", ts.n(), d.n())));
    }
    for (i, f) in d.factors.iter().enumerate() {
        for x in f.support() {
            if ts.index_of(i, x).is_none() {
                return Err(Error::UnsupportedType { bidder: i, point: x.clone() });
            }
        }
    }
    Ok(())
}

/// Interim regret with misreports ranging over the whole type space.
pub fn eps_bic_regret(mech: &TabularMechanism, d: &ProductDist) -> Result<RegretReport> {
    require_supported(mech.typespace(), d)?;
    eps_bic_regret_on(mech, d, mech.typespace().all())
}

/// Ex-post regret: true types and misreports from `grid[i]` (plus ⊥), opponents from `opponents`.
pub fn eps_dsic_regret_on(mech: &dyn Mechanism, grid: &[Vec<Point>], opponents: &[Vec<Point>]) -> Result<RegretReport> {
    let n = mech.n();
    if grid.len() != n || opponents.len() != n {
        return Err(Error::ShapeMismatch("audit grid does not match bidder count".into()));
    }
    let model = mech.model();
    let mut report = RegretReport::new(n);
    for i in 0..n {
        let opp = others(opponents, i);
        let radix: Vec<usize> = opp.iter().map(|&k| opponents[k].len()).collect();
        check_cap(&radix)?;
        let cands = &grid[i];
        let nc = cands.len() + 1;
        let mut bids: Vec<Bid<'_>> = vec![None; n];
        let mut outs = Vec::with_capacity(nc);
        for_each_index(&radix, |oidx| {
            for (&k, &t) in opp.iter().zip(oidx) {
                bids[k] = Some(&opponents[k][t]);
            }
            outs.clear();
            for c in 0..nc {
                bids[i] = cands.get(c).map(|p| p.as_slice());
                outs.push(mech.outcome(&bids));
            }
            for (a, v) in cands.iter().enumerate() {
                let truthful = utility(model, v, &outs[a], i);
                if truthful < -IR_TOL {
                    let mut profile: Vec<Point> = bids.iter().map(|b| b.map(|x| x.to_vec()).unwrap_or_default()).collect();
                    profile[i] = v.clone();
                    report.ir_violations.push(IrViolation { bidder: i, profile, utility: truthful });
                }
                for (c, out) in outs.iter().enumerate() {
                    let r = utility(model, v, out, i) - truthful;
                    report.record(i, r, v, cands.get(c));
                }
            }
        });
    }
    Ok(report)
}

pub fn eps_dsic_regret(mech: &TabularMechanism) -> Result<RegretReport> {
    let t = mech.typespace().all();
    eps_dsic_regret_on(mech, t, t)
}

/// Profiles from the product of `grid` where some bidder's truthful utility is below −1e-9.
pub fn ir_check_on(mech: &dyn Mechanism, grid: &[Vec<Point>]) -> Result<Vec<IrViolation>> {
    let radix: Vec<usize> = grid.iter().map(|g| g.len()).collect();
    check_cap(&radix)?;
    let model = mech.model();
    let mut out = Vec::new();
    for_each_index(&radix, |idx| {
        let bids: Vec<Bid<'_>> = idx.iter().enumerate().map(|(i, &k)| Some(grid[i][k].as_slice())).collect();
        let o = mech.outcome(&bids);
        for (i, b) in bids.iter().enumerate() {
            let u = utility(model, b.unwrap(), &o, i);
            if u < -IR_TOL {
                out.push(IrViolation {
                    bidder: i,
                    profile: bids.iter().map(|b| b.unwrap().to_vec()).collect(),
                    utility: u,
                });
            }
        }
    });
    Ok(out)
}

pub fn ir_check(mech: &TabularMechanism) -> Result<Vec<IrViolation>> {
    ir_check_on(mech, mech.typespace().all())
}

/// Truthful expected revenue by exact enumeration of the product support.
pub fn revenue_exact_on(mech: &dyn Mechanism, d: &ProductDist) -> Result<f64> {
    let radix: Vec<usize> = d.factors.iter().map(|f| f.len()).collect();
    check_cap(&radix)?;
    let mut rev = 0.0;
    for_each_index(&radix, |idx| {
        let bids: Vec<Bid<'_>> =
            idx.iter().zip(&d.factors).map(|(&k, f)| Some(f.support()[k].as_slice())).collect();
        rev += d.prob(idx) * mech.outcome(&bids).revenue();
    });
    Ok(rev)
}

pub fn revenue_exact(mech: &TabularMechanism, d: &ProductDist) -> Result<f64> {
    require_supported(mech.typespace(), d)?;
    revenue_exact_on(mech, d)
}

/// Monte Carlo revenue: (mean, standard error).
pub fn revenue_monte_carlo<R: Rng + ?Sized>(
    mech: &dyn Mechanism,
    d: &ProductDist,
    samples: usize,
    rng: &mut R,
) -> (f64, f64) {
    let (mut s, mut sq) = (0.0, 0.0);
    for _ in 0..samples {
        let prof = sample_product(d, rng);
        let bids: Vec<Bid<'_>> = prof.iter().map(|p| Some(p.as_slice())).collect();
        let r = mech.outcome(&bids).revenue();
        s += r;
        sq += r * r;
    }
    let k = samples as f64;
    let mean = s / k;
    let var = ((sq - k * mean * mean) / (k - 1.0).max(1.0)).max(0.0);
    (mean, (var / k).sqrt())
}

/// Single-item extension of a tabular mechanism to arbitrary real bids.
///
/// Bids are rounded down to the nearest type; a bid below every type leaves that bidder out
/// (nothing allocated, nothing charged) while the others face the lowest type in that slot.
/// Payments follow the payment identity of the extended step allocation, which agrees with
/// threshold payments on the type space.
#[derive(Clone, Debug)]
pub struct ExtendedMechanism {
    base: Arc<TabularMechanism>,
    // per bidder: (value, type index) sorted by value
    sorted: Vec<Vec<(f64, usize)>>,
}

pub fn extend_mechanism(base: Arc<TabularMechanism>) -> Result<ExtendedMechanism> {
    if base.m != 1 {
        return Err(Error::DimMismatch { left: base.m, right: 1 });
    }
    let sorted = (0..base.typespace().n())
        .map(|i| {
            let mut v: Vec<(f64, usize)> =
                base.typespace().types(i).iter().enumerate().map(|(k, t)| (t[0], k)).collect();
            v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            v
        })
        .collect();
    Ok(ExtendedMechanism { base, sorted })
}

impl ExtendedMechanism {
    pub fn base(&self) -> &TabularMechanism {
        &self.base
    }

    // position in the sorted list of the largest type <= b
    fn round_down(&self, i: usize, b: f64) -> Option<usize> {
        let b = crate::dist::quantize(b);
        match self.sorted[i].partition_point(|&(t, _)| t <= b) {
            0 => None,
            k => Some(k - 1),
        }
    }
}

impl Mechanism for ExtendedMechanism {
    fn n(&self) -> usize {
        self.base.n()
    }

    fn model(&self) -> ValuationModel {
        self.base.model
    }

    fn outcome(&self, bids: &[Bid<'_>]) -> Outcome {
        let n = self.n();
        let mut pos = Vec::with_capacity(n);
        for (i, b) in bids.iter().enumerate() {
            match b {
                None => return Outcome::zero(n),
                Some(x) => pos.push(self.round_down(i, x[0])),
            }
        }
        let base_idx: Vec<usize> =
            pos.iter().enumerate().map(|(i, p)| self.sorted[i][p.unwrap_or(0)].1).collect();
        let out = self.base.get(&base_idx).expect("rounded profile is in the table");
        let mut lottery = Vec::with_capacity(out.lottery.len());
        for e in &out.lottery {
            let mut assign = e.assign.clone();
            for (i, p) in pos.iter().enumerate() {
                if p.is_none() {
                    assign[i] = 0;
                }
            }
            if assign.iter().any(|s| *s != 0) {
                lottery.push(LotteryEntry { assign, p: e.p });
            }
        }
        let mut payments = vec![0.0; n];
        let mut idx = base_idx.clone();
        for i in 0..n {
            let Some(r) = pos[i] else { continue };
            let mut prev = 0.0;
            let mut pay = 0.0;
            for k in 0..=r {
                let (t, ti) = self.sorted[i][k];
                idx[i] = ti;
                let x = self.base.get(&idx).unwrap().alloc_prob(i);
                pay += t * (x - prev);
                prev = x;
            }
            idx[i] = base_idx[i];
            payments[i] = pay;
        }
        Outcome { lottery, payments }
    }
}
