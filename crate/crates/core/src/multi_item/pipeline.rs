//! Grid-randomized robustification against Prokhorov shifts: resample onto a random grid,
//! robustify against TV on the grid, then round incoming bids back onto it.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dsic_tv_robustify, tv_robustify, Scenario};
use crate::derive_seed;
use crate::dist::{round_dist, sample_index, tv_distance, DiscreteDist, GridSpec, Point, ProductDist};
use crate::error::{Error, Result};
use crate::mech::{
    eps_bic_regret_on, eps_dsic_regret_on, for_each_index, revenue_exact_on, Bid, Mechanism, Outcome, OutcomeMixer,
    TabularMechanism, TypeSpace,
};
use crate::valuation::ValuationModel;

/// Tolerance used for every chained inequality in pipeline reports.
pub const CHAIN_TOL: f64 = 1e-6;

/// nmLHε + mL√(nHε), the order of the pipeline's regret and per-bidder revenue loss.
pub fn kappa(s: &Scenario, eps: f64) -> f64 {
    let (n, m, l, h) = (s.n as f64, s.m as f64, s.lipschitz(), s.h);
    n * m * l * h * eps + m * l * (n * h * eps).sqrt()
}

// for each rounded support point of D_i: the original atoms mapping there, with conditional weights
type Preimages = Vec<Vec<(usize, f64)>>;

fn preimages(d: &DiscreteDist, g: &GridSpec) -> Result<(DiscreteDist, Preimages)> {
    let r = round_dist(d, g)?;
    let mut groups: Preimages = vec![Vec::new(); r.len()];
    for (k, (x, p)) in d.atoms().enumerate() {
        let w = r.index_of(&g.round_point(x)).expect("rounded atom is in the rounded support");
        groups[w].push((k, p));
    }
    for (grp, &mass) in groups.iter_mut().zip(r.probs()) {
        for e in grp.iter_mut() {
            e.1 /= mass;
        }
    }
    Ok((r, groups))
}

/// Tabulates the mechanism on the rounded support of `s.d`: a rounded profile runs `m` on
/// originals drawn from their exact preimages and charges (p - mLδ)^+. The mixture over
/// preimages is computed exactly. Returns the tabular mechanism and the rounded distribution.
pub fn resample_lift(m: &dyn Mechanism, s: &Scenario, g: &GridSpec) -> Result<(TabularMechanism, ProductDist)> {
    lift(m, s, g, None)
}

/// Monte Carlo variant of [`resample_lift`] for supports too large to integrate: each rounded
/// profile averages `samples` draws from the preimages.
pub fn resample_lift_sampled(
    m: &dyn Mechanism,
    s: &Scenario,
    g: &GridSpec,
    samples: usize,
    seed: u64,
) -> Result<(TabularMechanism, ProductDist)> {
    if samples == 0 {
        return Err(Error::EmptySamples);
    }
    lift(m, s, g, Some((samples, seed)))
}

fn lift(m: &dyn Mechanism, s: &Scenario, g: &GridSpec, mc: Option<(usize, u64)>) -> Result<(TabularMechanism, ProductDist)> {
    if m.n() != s.n {
        return Err(Error::ShapeMismatch(format!("mechanism has {} bidders, scenario {}", m.n(), s.n)));
    }
    let n = s.n;
    let shift = s.m as f64 * s.lipschitz() * g.width;
    let (rounded, groups): (Vec<DiscreteDist>, Vec<Preimages>) =
        s.d.factors.iter().map(|f| preimages(f, g)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let rd = ProductDist::new(rounded)?;
    let ts = TypeSpace::from_supports(&rd);
    let mut rng = mc.map(|(_, seed)| ChaCha8Rng::seed_from_u64(seed));
    let tab = TabularMechanism::from_fn(ts, s.m, s.h, s.model, |idx| {
        let mut mix = OutcomeMixer::new(n);
        let mut run = |w: f64, orig: &[usize]| {
            let bids: Vec<Bid<'_>> =
                orig.iter().enumerate().map(|(i, &k)| Some(s.d.factors[i].support()[k].as_slice())).collect();
            let out = m.outcome(&bids);
            let pay: Vec<f64> = out.payments.iter().map(|p| (p - shift).max(0.0)).collect();
            mix.add(w, &out, &pay);
        };
        let grp: Vec<&Vec<(usize, f64)>> = idx.iter().enumerate().map(|(i, &w)| &groups[i][w]).collect();
        match (&mut rng, mc) {
            (Some(rng), Some((samples, _))) => {
                for _ in 0..samples {
                    let orig: Vec<usize> = grp
                        .iter()
                        .map(|g| {
                            let cond = DiscreteDist::from_weights(
                                1,
                                (0..g.len()).map(|k| vec![k as f64]).collect(),
                                g.iter().map(|e| e.1).collect(),
                            )
                            .expect("preimage weights are positive");
                            g[sample_index(&cond, rng)].0
                        })
                        .collect();
                    run(1.0 / samples as f64, &orig);
                }
            }
            _ => {
                let radix: Vec<usize> = grp.iter().map(|g| g.len()).collect();
                for_each_index(&radix, |sel| {
                    let w: f64 = sel.iter().zip(&grp).map(|(&k, g)| g[k].1).product();
                    let orig: Vec<usize> = sel.iter().zip(&grp).map(|(&k, g)| g[k].0).collect();
                    run(w, &orig);
                });
            }
        }
        mix.finish()
    })?;
    Ok((tab, rd))
}

/// Rounds each bid onto the grid, runs the inner mechanism and charges max(0, p - shift).
pub struct RoundLift {
    inner: Arc<dyn Mechanism>,
    pub grid: GridSpec,
    pub shift: f64,
}

pub fn round_lift(inner: Arc<dyn Mechanism>, grid: GridSpec, shift: f64) -> RoundLift {
    RoundLift { inner, grid, shift }
}

impl Mechanism for RoundLift {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn model(&self) -> ValuationModel {
        self.inner.model()
    }

    fn outcome(&self, bids: &[Bid<'_>]) -> Outcome {
        let rounded: Vec<Option<Point>> = bids.iter().map(|b| b.map(|x| self.grid.round_point(x))).collect();
        let rb: Vec<Bid<'_>> = rounded.iter().map(|r| r.as_deref()).collect();
        let mut out = self.inner.outcome(&rb);
        for p in out.payments.iter_mut() {
            *p = (*p - self.shift).max(0.0);
        }
        out
    }
}

/// Uniform mixture of mechanisms; payments are averaged too.
pub struct MixtureMechanism {
    parts: Vec<Arc<dyn Mechanism>>,
}

impl MixtureMechanism {
    pub fn new(parts: Vec<Arc<dyn Mechanism>>) -> Result<Self> {
        let Some(first) = parts.first() else { return Err(Error::EmptyCandidates) };
        if parts.iter().any(|p| p.n() != first.n() || p.model() != first.model()) {
            return Err(Error::StructureMismatch);
        }
        Ok(MixtureMechanism { parts })
    }
}

impl Mechanism for MixtureMechanism {
    fn n(&self) -> usize {
        self.parts[0].n()
    }

    fn model(&self) -> ValuationModel {
        self.parts[0].model()
    }

    fn outcome(&self, bids: &[Bid<'_>]) -> Outcome {
        let w = 1.0 / self.parts.len() as f64;
        let mut mix = OutcomeMixer::new(self.n());
        for p in &self.parts {
            let out = p.outcome(bids);
            mix.add(w, &out, &out.payments);
        }
        mix.finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guarantee {
    Bic,
    Dsic,
}

pub struct PipelineBranch {
    pub grid: GridSpec,
    pub rounded: ProductDist,
    pub m1: Arc<TabularMechanism>,
    pub m2: Arc<dyn Mechanism>,
    pub mhat: Arc<RoundLift>,
}

pub struct ProkhorovPipeline {
    pub guarantee: Guarantee,
    pub scenario: Scenario,
    pub eps: f64,
    pub delta: f64,
    pub shift: f64,
    pub seed: u64,
    pub branches: Vec<PipelineBranch>,
}

fn build(
    m: &dyn Mechanism,
    s: &Scenario,
    eps: f64,
    k: usize,
    seed: u64,
    delta: f64,
    guarantee: Guarantee,
) -> Result<ProkhorovPipeline> {
    if !(eps >= 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    if k == 0 {
        return Err(Error::EmptySamples);
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidEpsilon(delta));
    }
    let shift = s.m as f64 * s.lipschitz() * delta;
    let mut branches = Vec::with_capacity(k);
    for l in 0..k {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, l as u64));
        let grid = GridSpec::draw(s.m, delta, &mut rng)?;
        let (m1, rounded) = resample_lift(m, s, &grid)?;
        let m1 = Arc::new(m1);
        let m2: Arc<dyn Mechanism> = match guarantee {
            Guarantee::Bic => Arc::new(tv_robustify(m1.clone(), &rounded)?),
            Guarantee::Dsic => Arc::new(dsic_tv_robustify(m1.clone(), &rounded)?),
        };
        let mhat = Arc::new(round_lift(m2.clone(), grid.clone(), shift));
        branches.push(PipelineBranch { grid, rounded, m1, m2, mhat });
    }
    Ok(ProkhorovPipeline { guarantee, scenario: s.clone(), eps, delta, shift, seed, branches })
}

/// BIC pipeline with δ = √(nHε) unless overridden. `m` must be BIC and IR under `s.d`.
pub fn bic_prokhorov_robustify(
    m: &dyn Mechanism,
    s: &Scenario,
    eps: f64,
    k: usize,
    seed: u64,
    delta: Option<f64>,
) -> Result<ProkhorovPipeline> {
    let delta = delta.unwrap_or_else(|| (s.n as f64 * s.h * eps).sqrt());
    build(m, s, eps, k, seed, delta, Guarantee::Bic)
}

/// DSIC pipeline with δ = n√(Hε) unless overridden. `alpha` is only validated here; it is
/// used by [`ProkhorovPipeline::evaluate_dsic`].
pub fn dsic_prokhorov_robustify(
    m: &dyn Mechanism,
    s: &Scenario,
    eps: f64,
    alpha: f64,
    k: usize,
    seed: u64,
    delta: Option<f64>,
) -> Result<ProkhorovPipeline> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidEpsilon(alpha));
    }
    let delta = delta.unwrap_or_else(|| s.n as f64 * (s.h * eps).sqrt());
    build(m, s, eps, k, seed, delta, Guarantee::Dsic)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub offset: Vec<f64>,
    /// Σ_i TV between the rounded design and rounded true marginals.
    pub rho: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub regret: f64,
    pub rev_m1: f64,
    pub rev_m2: f64,
    pub rev_hat: f64,
    pub ir_ok: bool,
    /// Every per-branch inequality of the composition held.
    pub chain_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub eps: f64,
    pub delta: f64,
    pub kappa: f64,
    pub base_revenue: f64,
    pub mean_regret: f64,
    pub mixture_regret: f64,
    pub mean_revenue: f64,
    /// mean_regret / κ
    pub regret_constant: f64,
    /// (base_revenue - mean_revenue) / (nκ), floored at 0
    pub revenue_constant: f64,
    pub branches: Vec<BranchReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsicBranchReport {
    pub offset: Vec<f64>,
    pub tv_terms: Vec<f64>,
    pub exceed: Vec<bool>,
    pub xi1: f64,
    pub m2_regret: f64,
    pub preserved: bool,
    pub regret: f64,
    pub rev_hat: f64,
    pub ir_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsicPipelineReport {
    pub eps: f64,
    pub delta: f64,
    pub alpha: f64,
    /// (n/α)(1 + 1/δ)ε
    pub tv_threshold: f64,
    pub exceed_rate: Vec<f64>,
    pub exceed_rate_any: f64,
    pub regret_quantile: f64,
    pub base_revenue: f64,
    pub mean_revenue: f64,
    pub branches: Vec<DsicBranchReport>,
}

fn supports(d: &ProductDist) -> Vec<Vec<Point>> {
    d.factors.iter().map(|f| f.support().to_vec()).collect()
}

fn union(a: &[Vec<Point>], b: &[Vec<Point>]) -> Vec<Vec<Point>> {
    a.iter().zip(b).map(|(x, y)| x.iter().chain(y).cloned().collect()).collect()
}

fn dedup(lists: Vec<Vec<Point>>) -> Vec<Vec<Point>> {
    lists
        .into_iter()
        .map(|l| {
            let mut l: Vec<Point> = l;
            l.sort_by(|a, b| crate::dist::cmp_points(a, b));
            l.dedup_by(|a, b| crate::mech::point_key(a) == crate::mech::point_key(b));
            l
        })
        .collect()
}

impl ProkhorovPipeline {
    pub fn mixture(&self) -> MixtureMechanism {
        MixtureMechanism::new(self.branches.iter().map(|b| b.mhat.clone() as Arc<dyn Mechanism>).collect())
            .expect("pipeline has at least one branch")
    }

    fn check_hat(&self, d_hat: &ProductDist) -> Result<()> {
        if d_hat.n() != self.scenario.n || d_hat.dim() != self.scenario.m {
            return Err(Error::ShapeMismatch("true distribution does not match the scenario".into()));
        }
        Ok(())
    }

    /// Per-bidder TV between rounded design and rounded true marginals, per branch.
    pub fn tv_terms(&self, d_hat: &ProductDist) -> Result<Vec<Vec<f64>>> {
        self.check_hat(d_hat)?;
        self.branches
            .iter()
            .map(|b| {
                d_hat
                    .factors
                    .iter()
                    .zip(&b.rounded.factors)
                    .map(|(fh, r)| tv_distance(r, &round_dist(fh, &b.grid)?))
                    .collect()
            })
            .collect()
    }

    /// Exact audit of every stage of the BIC pipeline against the true distribution `d_hat`.
    pub fn evaluate_bic(&self, base: &dyn Mechanism, d_hat: &ProductDist) -> Result<PipelineReport> {
        self.check_hat(d_hat)?;
        let s = &self.scenario;
        let (n, ml) = (s.n as f64, s.m as f64 * s.lipschitz());
        let base_revenue = revenue_exact_on(base, &s.d)?;
        let hat_mis = dedup(union(&supports(d_hat), &supports(&s.d)));
        let tvs = self.tv_terms(d_hat)?;
        let mut branches = Vec::with_capacity(self.branches.len());
        for (b, tv) in self.branches.iter().zip(&tvs) {
            let rounded_hat = ProductDist::new(
                d_hat.factors.iter().map(|f| round_dist(f, &b.grid)).collect::<Result<Vec<_>>>()?,
            )?;
            let rho: f64 = tv.iter().sum();
            let r1 = eps_bic_regret_on(&*b.m1, &b.rounded, &supports(&b.rounded))?;
            let grid_mis = dedup(union(&supports(&b.rounded), &supports(&rounded_hat)));
            let r2 = eps_bic_regret_on(&*b.m2, &rounded_hat, &grid_mis)?;
            let r3 = eps_bic_regret_on(&*b.mhat, d_hat, &hat_mis)?;
            let rev_m1 = revenue_exact_on(&*b.m1, &b.rounded)?;
            let rev_m2 = revenue_exact_on(&*b.m2, &rounded_hat)?;
            let rev_hat = revenue_exact_on(&*b.mhat, d_hat)?;
            let d = self.delta;
            let chain_ok = r1.eps <= 3.0 * ml * d + CHAIN_TOL
                && r2.eps <= 2.0 * ml * s.h * rho + r1.eps + CHAIN_TOL
                && r3.eps <= r2.eps + 3.0 * ml * d + CHAIN_TOL
                && rev_m1 >= base_revenue - n * ml * d - CHAIN_TOL
                && rev_m2 >= rev_m1 - n * ml * s.h * rho - CHAIN_TOL
                && rev_hat >= rev_m2 - n * ml * d - CHAIN_TOL;
            branches.push(BranchReport {
                offset: b.grid.offset.clone(),
                rho,
                xi1: r1.eps,
                xi2: r2.eps,
                regret: r3.eps,
                rev_m1,
                rev_m2,
                rev_hat,
                ir_ok: r1.ir_violations.is_empty() && r2.ir_violations.is_empty() && r3.ir_violations.is_empty(),
                chain_ok,
            });
        }
        let k = branches.len() as f64;
        let mean_regret = branches.iter().map(|b| b.regret).sum::<f64>() / k;
        let mean_revenue = branches.iter().map(|b| b.rev_hat).sum::<f64>() / k;
        let mix = self.mixture();
        let mixture_regret = eps_bic_regret_on(&mix, d_hat, &hat_mis)?.eps;
        let kap = kappa(s, self.eps);
        let ratio = |x: f64, y: f64| if y > 0.0 { x / y } else if x > 0.0 { f64::INFINITY } else { 0.0 };
        Ok(PipelineReport {
            eps: self.eps,
            delta: self.delta,
            kappa: kap,
            base_revenue,
            mean_regret,
            mixture_regret,
            mean_revenue,
            regret_constant: ratio(mean_regret, kap),
            revenue_constant: ratio((base_revenue - mean_revenue).max(0.0), n * kap),
            branches,
        })
    }

    /// Audit of the DSIC pipeline. The tail check counts grid draws whose per-bidder TV term
    /// exceeds (n/α)(1 + 1/δ)ε.
    pub fn evaluate_dsic(&self, base: &dyn Mechanism, d_hat: &ProductDist, alpha: f64) -> Result<DsicPipelineReport> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidEpsilon(alpha));
        }
        self.check_hat(d_hat)?;
        let s = &self.scenario;
        let n = s.n;
        let base_revenue = revenue_exact_on(base, &s.d)?;
        let tv_threshold = n as f64 / alpha * (1.0 + 1.0 / self.delta) * self.eps;
        let hat_sup = supports(d_hat);
        let grid_hat = dedup(union(&hat_sup, &supports(&s.d)));
        let tvs = self.tv_terms(d_hat)?;
        let mut branches = Vec::with_capacity(self.branches.len());
        for (b, tv) in self.branches.iter().zip(tvs) {
            let rsup = supports(&b.rounded);
            let rhat: Vec<Vec<Point>> = d_hat
                .factors
                .iter()
                .map(|f| Ok(round_dist(f, &b.grid)?.support().to_vec()))
                .collect::<Result<_>>()?;
            let xi1 = eps_dsic_regret_on(&*b.m1, &rsup, &rsup)?.eps;
            let r2 = eps_dsic_regret_on(&*b.m2, &dedup(union(&rsup, &rhat)), &rsup)?;
            let r3 = eps_dsic_regret_on(&*b.mhat, &grid_hat, &hat_sup)?;
            let rev_hat = revenue_exact_on(&*b.mhat, d_hat)?;
            branches.push(DsicBranchReport {
                offset: b.grid.offset.clone(),
                exceed: tv.iter().map(|&t| t > tv_threshold).collect(),
                tv_terms: tv,
                xi1,
                m2_regret: r2.eps,
                preserved: r2.eps <= xi1 + 1e-9,
                regret: r3.eps,
                rev_hat,
                ir_ok: r3.ir_violations.is_empty(),
            });
        }
        let k = branches.len() as f64;
        let exceed_rate =
            (0..n).map(|i| branches.iter().filter(|b| b.exceed[i]).count() as f64 / k).collect();
        let exceed_rate_any = branches.iter().filter(|b| b.exceed.iter().any(|&e| e)).count() as f64 / k;
        let mut regrets: Vec<f64> = branches.iter().map(|b| b.regret).collect();
        regrets.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = ((1.0 - alpha) * k).ceil().max(1.0) as usize - 1;
        Ok(DsicPipelineReport {
            eps: self.eps,
            delta: self.delta,
            alpha,
            tv_threshold,
            exceed_rate,
            exceed_rate_any,
            regret_quantile: regrets[q.min(regrets.len() - 1)],
            base_revenue,
            mean_revenue: branches.iter().map(|b| b.rev_hat).sum::<f64>() / k,
            branches,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mech::{eps_bic_regret, ir_check_on, revenue_exact};
    use crate::multi_item::{opt_bic_lp, opt_dsic_lp};

    fn d(atoms: &[(f64, f64)]) -> DiscreteDist {
        DiscreteDist::from_atoms(atoms).unwrap()
    }

    fn scen(factors: Vec<DiscreteDist>) -> Scenario {
        let n = factors.len();
        Scenario::new(n, 1, 1.0, ValuationModel::Additive, ProductDist::new(factors).unwrap()).unwrap()
    }

    #[test]
    fn resample_point_mass() {
        let s = scen(vec![d(&[(0.3, 1.0)])]);
        let (_, m) = opt_bic_lp(&s, 0.0).unwrap();
        let g = GridSpec::new(vec![0.0], 0.5).unwrap();
        let (m1, r) = resample_lift(&m, &s, &g).unwrap();
        assert_eq!(r.factors[0].support(), &[vec![0.0]]);
        let out = m1.outcome(&[Some(&[0.0])]);
        // the lift sells at 0.3 - mLδ = 0 → price floored at 0
        assert!((out.alloc_prob(0) - 1.0).abs() < 1e-9);
        assert!(out.payments[0].abs() < 1e-9);
    }

    #[test]
    fn resample_shifts_revenue_exactly() {
        let s = scen(vec![d(&[(0.6, 0.5), (0.9, 0.5)])]);
        let (opt, m) = opt_bic_lp(&s, 0.0).unwrap();
        let g = GridSpec::new(vec![0.0], 0.1).unwrap();
        let (m1, r) = resample_lift(&m, &s, &g).unwrap();
        let rev = revenue_exact(&m1, &r).unwrap();
        assert!((rev - (opt - 0.1)).abs() < 1e-9, "{} vs {}", rev, opt);
        assert!(eps_bic_regret(&m1, &r).unwrap().eps <= 0.3 + 1e-6);
    }

    #[test]
    fn sampled_lift_is_close() {
        let s = scen(vec![d(&[(0.61, 0.3), (0.65, 0.3), (0.9, 0.4)])]);
        let (_, m) = opt_bic_lp(&s, 0.0).unwrap();
        let g = GridSpec::new(vec![0.0], 0.1).unwrap();
        let (exact, r) = resample_lift(&m, &s, &g).unwrap();
        let (mc, _) = resample_lift_sampled(&m, &s, &g, 4000, 7).unwrap();
        let a = revenue_exact(&exact, &r).unwrap();
        let b = revenue_exact(&mc, &r).unwrap();
        assert!((a - b).abs() < 0.03);
    }

    #[test]
    fn round_lift_routes_to_grid() {
        let ts = TypeSpace::new(vec![vec![vec![1.2]]]).unwrap();
        let inner = TabularMechanism::from_fn(ts, 1, 2.0, ValuationModel::Additive, |_| Outcome::sure(vec![1], vec![1.0])).unwrap();
        let g = GridSpec::new(vec![0.2], 1.0).unwrap();
        let ml = round_lift(Arc::new(inner), g, 1.0);
        let out = ml.outcome(&[Some(&[1.3])]);
        assert!((out.alloc_prob(0) - 1.0).abs() < 1e-12);
        assert_eq!(out.payments[0], 0.0);
    }

    #[test]
    fn bic_pipeline_same_distribution() {
        let s = scen(vec![d(&[(0.4, 0.5), (0.8, 0.5)]), d(&[(0.5, 0.5), (1.0, 0.5)])]);
        let (_, m) = opt_bic_lp(&s, 0.0).unwrap();
        let p = bic_prokhorov_robustify(&m, &s, 0.01, 4, 3, None).unwrap();
        assert!((p.delta - (2.0f64 * 0.01).sqrt()).abs() < 1e-12);
        let rep = p.evaluate_bic(&m, &s.d).unwrap();
        for b in &rep.branches {
            assert!(b.rho.abs() < 1e-12);
            assert!(b.chain_ok && b.ir_ok, "{:?}", b);
            assert!(b.regret <= 6.0 * p.delta + 1e-6);
        }
        assert!(rep.mixture_regret <= rep.mean_regret + 1e-9);
    }

    #[test]
    fn bic_pipeline_shifted_truth() {
        let s = scen(vec![d(&[(0.4, 0.5), (0.8, 0.5)])]);
        let (_, m) = opt_bic_lp(&s, 0.0).unwrap();
        let eps = 0.02;
        let hat = ProductDist::new(vec![crate::dist::shift(&s.d.factors[0], eps)]).unwrap();
        let p = bic_prokhorov_robustify(&m, &s, eps, 6, 11, None).unwrap();
        let rep = p.evaluate_bic(&m, &hat).unwrap();
        assert!(rep.branches.iter().all(|b| b.chain_ok && b.ir_ok));
        for b in &p.branches {
            let grid = vec![vec![vec![0.0], vec![0.3], vec![0.5], vec![0.9], vec![1.0]]];
            assert!(ir_check_on(&*b.mhat, &grid).unwrap().is_empty());
        }
    }

    #[test]
    fn dsic_pipeline_preserves_regret() {
        let s = scen(vec![d(&[(0.4, 0.5), (0.8, 0.5)]), d(&[(0.5, 0.5), (1.0, 0.5)])]);
        let (_, m) = opt_dsic_lp(&s, 0.0).unwrap();
        let eps = 0.01;
        let hat = ProductDist::new(s.d.factors.iter().map(|f| crate::dist::shift(f, eps)).collect()).unwrap();
        let p = dsic_prokhorov_robustify(&m, &s, eps, 0.5, 5, 1, None).unwrap();
        assert!((p.delta - 2.0 * 0.1).abs() < 1e-12);
        let rep = p.evaluate_dsic(&m, &hat, 0.5).unwrap();
        assert!(rep.branches.iter().all(|b| b.preserved && b.ir_ok));
        assert_eq!(rep.exceed_rate.len(), 2);
    }

    #[test]
    fn mixture_averages() {
        let ts = TypeSpace::new(vec![vec![vec![1.0]]]).unwrap();
        let a = TabularMechanism::from_fn(ts.clone(), 1, 1.0, ValuationModel::Additive, |_| Outcome::sure(vec![1], vec![1.0])).unwrap();
        let b = TabularMechanism::from_fn(ts, 1, 1.0, ValuationModel::Additive, |_| Outcome::zero(1)).unwrap();
        let mix = MixtureMechanism::new(vec![Arc::new(a), Arc::new(b)]).unwrap();
        let out = mix.outcome(&[Some(&[1.0])]);
        assert!((out.alloc_prob(0) - 0.5).abs() < 1e-12 && (out.payments[0] - 0.5).abs() < 1e-12);
        assert!(MixtureMechanism::new(vec![]).is_err());
    }

    #[test]
    fn kappa_value() {
        let s = scen(vec![d(&[(0.5, 1.0)])]);
        assert!((kappa(&s, 0.04) - (0.04 + 0.2)).abs() < 1e-12);
    }
}
