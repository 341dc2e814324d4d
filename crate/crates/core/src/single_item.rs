//! Discrete Myerson auctions, the Lévy-robust construction and the shifted-support transform.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dist::{levy_ball_extremes, DiscreteDist, ProductDist};
use crate::error::{Error, Result};
use crate::mech::{extend_mechanism, ExtendedMechanism, Outcome, TabularMechanism, TypeSpace};
use crate::valuation::ValuationModel;

/// Quantile-space revenue curve of one bidder and its concave majorant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IronedCurve {
    /// Support values in ascending order.
    pub values: Vec<f64>,
    /// P[V >= v] per support value.
    pub quantiles: Vec<f64>,
    /// v · P[V >= v].
    pub revenue: Vec<f64>,
    /// Concave hull evaluated at each quantile.
    pub hull: Vec<f64>,
    /// Unironed discrete virtual values v - (1 - F(v))·Δv / f(v).
    pub phi: Vec<f64>,
    /// Ironed virtual values, nondecreasing in v.
    pub phi_bar: Vec<f64>,
}

pub fn ironed_curve(d: &DiscreteDist) -> Result<IronedCurve> {
    if d.dim() != 1 {
        return Err(Error::DimMismatch { left: d.dim(), right: 1 });
    }
    let k = d.len();
    let values: Vec<f64> = d.support().iter().map(|s| s[0]).collect();
    let probs = d.probs();
    let mut quantiles = vec![0.0; k];
    let mut acc = 0.0;
    for j in (0..k).rev() {
        acc += probs[j];
        quantiles[j] = acc.min(1.0);
    }
    quantiles[0] = 1.0;
    let revenue: Vec<f64> = values.iter().zip(&quantiles).map(|(v, q)| v * q).collect();
    let upper = |j: usize| if j + 1 < k { quantiles[j + 1] } else { 0.0 };
    let phi: Vec<f64> = (0..k)
        .map(|j| {
            if j + 1 < k {
                values[j] - upper(j) * (values[j + 1] - values[j]) / probs[j]
            } else {
                values[j]
            }
        })
        .collect();

    // points ordered by quantile: origin, then atoms from the top value down
    let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for j in (0..k).rev() {
        pts.push((quantiles[j], revenue[j]));
    }
    let mut hull: Vec<usize> = Vec::new();
    for idx in 0..pts.len() {
        while hull.len() >= 2 {
            let (a, b) = (pts[hull[hull.len() - 2]], pts[hull[hull.len() - 1]]);
            let c = pts[idx];
            // drop b when it lies on or below segment a-c
            let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(idx);
    }
    // slope of the hull edge covering each point interval
    let mut edge_slope = vec![0.0; pts.len()];
    let mut hull_val = vec![0.0; pts.len()];
    for w in hull.windows(2) {
        let (a, b) = (pts[w[0]], pts[w[1]]);
        let s = (b.1 - a.1) / (b.0 - a.0);
        for t in w[0] + 1..=w[1] {
            edge_slope[t] = s;
            hull_val[t] = a.1 + s * (pts[t].0 - a.0);
        }
        hull_val[w[0]] = a.1;
    }
    // pts[t] for t >= 1 is atom j = k - t; its interval is [pts[t-1].0, pts[t].0]
    let mut phi_bar = vec![0.0; k];
    let mut hull_at = vec![0.0; k];
    for t in 1..pts.len() {
        phi_bar[k - t] = edge_slope[t];
        hull_at[k - t] = hull_val[t];
    }
    Ok(IronedCurve { values, quantiles, revenue, hull: hull_at, phi, phi_bar })
}

/// Monotone per-bidder priorities; the highest positive one wins, ties to the lower index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MyersonRule {
    pub values: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
}

impl MyersonRule {
    pub fn winner(&self, idx: &[usize]) -> Option<usize> {
        let mut best = 0.0;
        let mut w = None;
        for (i, &k) in idx.iter().enumerate() {
            let m = self.mu[i][k];
            if m > best {
                best = m;
                w = Some(i);
            }
        }
        w
    }

    /// Expected max(μ, 0) under independent draws, which is the auction's revenue.
    pub fn expected_virtual_surplus(&self, dists: &[DiscreteDist]) -> f64 {
        let radix: Vec<usize> = dists.iter().map(|d| d.len()).collect();
        let mut s = 0.0;
        crate::mech::for_each_index(&radix, |idx| {
            let p: f64 = idx.iter().zip(dists).map(|(&k, d)| d.probs()[k]).product();
            let best = idx.iter().enumerate().map(|(i, &k)| self.mu[i][k]).fold(0.0, f64::max);
            s += p * best;
        });
        s
    }
}

/// Revenue-optimal DSIC, IR single-item auction for independent discrete values.
pub fn myerson_optimal(dists: &[DiscreteDist]) -> Result<(TabularMechanism, MyersonRule)> {
    let curves = dists.iter().map(ironed_curve).collect::<Result<Vec<_>>>()?;
    let rule = MyersonRule {
        values: curves.iter().map(|c| c.values.clone()).collect(),
        mu: curves.iter().map(|c| c.phi_bar.clone()).collect(),
    };
    let n = dists.len();
    let h = rule.values.iter().flatten().copied().fold(0.0, f64::max);
    let ts = TypeSpace::new(rule.values.iter().map(|v| v.iter().map(|&x| vec![x]).collect()).collect())?;
    let mut probe = vec![0usize; n];
    let mech = TabularMechanism::from_fn(ts, 1, h, ValuationModel::Additive, |idx| {
        let Some(w) = rule.winner(idx) else {
            return Outcome::zero(n);
        };
        probe.copy_from_slice(idx);
        let mut price = rule.values[w][idx[w]];
        for k in 0..idx[w] {
            probe[w] = k;
            if rule.winner(&probe) == Some(w) {
                price = rule.values[w][k];
                break;
            }
        }
        let mut assign = vec![0; n];
        assign[w] = 1;
        let mut pay = vec![0.0; n];
        pay[w] = price;
        Outcome::sure(assign, pay)
    })?;
    Ok((mech, rule))
}

/// Output of the Lévy-robust construction.
#[derive(Clone, Debug)]
pub struct LevyRobust {
    pub mechanism: ExtendedMechanism,
    pub worst: ProductDist,
    pub rule: MyersonRule,
    /// Optimal revenue under the worst-case product, a floor for any member of the ball.
    pub opt_worst: f64,
}

/// Extension of the Myerson auction for the FOSD-worst member of each ε Lévy ball.
pub fn levy_robust(d: &ProductDist, eps: f64) -> Result<LevyRobust> {
    if d.dim() != 1 {
        return Err(Error::DimMismatch { left: d.dim(), right: 1 });
    }
    if !(eps >= 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    let worst = if eps == 0.0 {
        d.clone()
    } else {
        let h = d.factors.iter().flat_map(|f| f.support().iter().map(|s| s[0])).fold(0.0, f64::max);
        ProductDist::new(
            d.factors
                .iter()
                .map(|f| levy_ball_extremes(f, eps, h).map(|(w, _)| w))
                .collect::<Result<Vec<_>>>()?,
        )?
    };
    let (mech, rule) = myerson_optimal(&worst.factors)?;
    let opt_worst = crate::mech::revenue_exact(&mech, &worst)?;
    Ok(LevyRobust { mechanism: extend_mechanism(Arc::new(mech))?, worst, rule, opt_worst })
}

/// Explicit revenue-gap bound (6nH + 3nε + 2)ε for the Lévy-robust auction.
pub fn levy_gap_bound(n: usize, h: f64, eps: f64) -> f64 {
    let n = n as f64;
    (6.0 * n * h + 3.0 * n * eps + 2.0) * eps
}

/// Kolmogorov continuity bound 3nHε on optimal revenue.
pub fn kolmogorov_gap_bound(n: usize, h: f64, eps: f64) -> f64 {
    3.0 * n as f64 * h * eps
}

/// Moves a single-item mechanism for the right-shifted supports down by 2ε:
/// x'(v) = x(v+2ε), p'(v) = p(v+2ε) − 2ε·x(v+2ε).
pub fn shift_mechanism(m: &TabularMechanism, eps: f64) -> Result<TabularMechanism> {
    if m.m != 1 {
        return Err(Error::DimMismatch { left: m.m, right: 1 });
    }
    let ts = m.typespace();
    let shifted = TypeSpace::new(
        ts.all().iter().map(|t| t.iter().map(|x| vec![x[0] - 2.0 * eps]).collect()).collect(),
    )?;
    TabularMechanism::from_fn(shifted, 1, m.h, m.model, |idx| {
        let mut out = m.get(idx).expect("same shape").clone();
        for i in 0..out.payments.len() {
            out.payments[i] -= 2.0 * eps * out.alloc_prob(i);
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mech::{eps_dsic_regret, ir_check, revenue_exact, Mechanism};

    fn d(atoms: &[(f64, f64)]) -> DiscreteDist {
        DiscreteDist::from_atoms(atoms).unwrap()
    }

    fn rev(dists: &[DiscreteDist]) -> f64 {
        let (m, _) = myerson_optimal(dists).unwrap();
        revenue_exact(&m, &ProductDist::new(dists.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn single_bidder_two_points() {
        assert!((rev(&[d(&[(1.0, 0.5), (2.0, 0.5)])]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_iid_bidders() {
        let u = d(&[(1.0, 0.5), (2.0, 0.5)]);
        assert!((rev(&[u.clone(), u]) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn point_mass_posts_its_value() {
        assert!((rev(&[d(&[(0.8, 1.0)])]) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn ironing_flattens_nonmonotone_virtual_values() {
        let c = ironed_curve(&d(&[(1.0, 0.1), (1.1, 0.8), (10.0, 0.1)])).unwrap();
        assert!(c.phi[1] < c.phi[0]);
        assert_eq!(c.phi_bar[0], c.phi_bar[1]);
        assert!(c.phi_bar.windows(2).all(|w| w[0] <= w[1]));
        assert!(c.hull.iter().zip(&c.revenue).all(|(h, r)| h >= r));
        // regular case: no ironing
        let r = ironed_curve(&d(&[(1.0, 0.5), (2.0, 0.5)])).unwrap();
        assert_eq!(r.phi, r.phi_bar);
    }

    #[test]
    fn output_is_dsic_ir_and_earns_virtual_surplus() {
        let ds = vec![d(&[(0.2, 0.3), (0.5, 0.3), (0.9, 0.4)]), d(&[(0.1, 0.6), (0.7, 0.4)])];
        let (m, rule) = myerson_optimal(&ds).unwrap();
        assert_eq!(eps_dsic_regret(&m).unwrap().eps, 0.0);
        assert!(ir_check(&m).unwrap().is_empty());
        let r = revenue_exact(&m, &ProductDist::new(ds.clone()).unwrap()).unwrap();
        assert!((r - rule.expected_virtual_surplus(&ds)).abs() < 1e-12);
    }

    #[test]
    fn levy_robust_examples() {
        let pd = ProductDist::new(vec![d(&[(0.3, 0.5), (1.0, 0.5)])]).unwrap();
        let lr = levy_robust(&pd, 0.0).unwrap();
        let (plain, _) = myerson_optimal(&pd.factors).unwrap();
        assert_eq!(lr.mechanism.base(), &plain);

        let one = ProductDist::new(vec![d(&[(1.0, 1.0)])]).unwrap();
        let lr = levy_robust(&one, 0.1).unwrap();
        assert_eq!(lr.worst.factors[0], d(&[(-0.1, 0.1), (0.9, 0.9)]));
        let sells = lr.mechanism.outcome(&[Some(&[1.0])]);
        assert_eq!(sells.alloc_prob(0), 1.0);
        assert!((sells.payments[0] - 0.9).abs() < 1e-12);
        assert_eq!(lr.mechanism.outcome(&[Some(&[0.85])]).alloc_prob(0), 0.0);
        assert!(matches!(levy_robust(&one, 1.0), Err(Error::InvalidEpsilon(_))));
    }

    #[test]
    fn shift_examples() {
        let (m, _) = myerson_optimal(&[d(&[(1.0, 1.0)])]).unwrap();
        assert_eq!(shift_mechanism(&m, 0.0).unwrap(), m);
        let s = shift_mechanism(&m, 0.1).unwrap();
        let out = s.outcome(&[Some(&[0.8])]);
        assert_eq!(out.alloc_prob(0), 1.0);
        assert!((out.payments[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn bounds() {
        assert!((levy_gap_bound(2, 1.0, 0.1) - (12.0 + 0.6 + 2.0) * 0.1).abs() < 1e-12);
        assert!((kolmogorov_gap_bound(3, 2.0, 0.05) - 0.9).abs() < 1e-12);
    }
}
