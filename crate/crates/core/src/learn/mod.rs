//! Learning type distributions from samples.

mod bayes;
mod mrf;

pub use bayes::{bn_hybrid_check, bn_joint, bn_learn_known_dag, bn_sample, BayesNet, HybridCheck};
pub use mrf::{mrf_joint, mrf_round_potentials, mrf_rounding_base, Factor, Mrf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{sample, DiscreteDist, Point, GRID_GUARD};
use crate::error::{Error, Result};

/// Largest joint support enumerated by the graphical-model routines.
pub const ENUM_CAP: u128 = 1_000_000;

/// Constant inside the product-learning sample bound.
pub const SAMPLE_CONSTANT: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub dim: usize,
    pub rows: Vec<Point>,
    pub seed: Option<u64>,
}

impl SampleSet {
    pub fn new(dim: usize, rows: Vec<Point>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimMismatch { left: dim, right: r.len() });
        }
        Ok(SampleSet { dim, rows, seed: None })
    }

    pub fn draw<R: Rng + ?Sized>(d: &DiscreteDist, count: usize, rng: &mut R) -> Self {
        SampleSet { dim: d.dim(), rows: (0..count).map(|_| sample(d, rng)).collect(), seed: None }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Uniform weights over the rows.
    pub fn empirical(&self) -> Result<DiscreteDist> {
        if self.rows.is_empty() {
            return Err(Error::EmptySamples);
        }
        DiscreteDist::from_weights(self.dim, self.rows.clone(), vec![1.0; self.rows.len()])
    }
}

/// ceil(2·m³H/η³·(ln(1/δ) + ln m))
pub fn product_sample_count(m: usize, h: f64, eta: f64, delta_fail: f64) -> Result<u64> {
    if m == 0 {
        return Err(Error::InvalidModel("no items".into()));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidEpsilon(eta));
    }
    if !(delta_fail > 0.0 && delta_fail < 1.0) {
        return Err(Error::InvalidEpsilon(delta_fail));
    }
    let m = m as f64;
    let n = SAMPLE_CONSTANT * m.powi(3) * h / eta.powi(3) * ((1.0 / delta_fail).ln() + m.ln());
    Ok(n.ceil().max(1.0) as u64)
}

/// Per-coordinate empirical marginals after flooring each sample to multiples of η/m.
pub fn learn_product_marginals(samples: &SampleSet, eta: f64, h: f64) -> Result<Vec<DiscreteDist>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidEpsilon(eta));
    }
    let m = samples.dim;
    let step = eta / m as f64;
    if let Some(r) = samples.rows.iter().find(|r| r.iter().any(|&x| !(x >= 0.0 && x <= h))) {
        return Err(Error::InvalidDistribution(format!("sample {:?} outside [0, {}]", r, h)));
    }
    (0..m)
        .map(|j| {
            let pts: Vec<Point> =
                samples.rows.iter().map(|r| vec![(r[j] / step + GRID_GUARD).floor() * step]).collect();
            DiscreteDist::from_weights(1, pts, vec![1.0; samples.len()])
        })
        .collect()
}

/// Joint distribution of independent one-dimensional marginals.
pub fn product_joint(marginals: &[DiscreteDist]) -> Result<DiscreteDist> {
    let size: u128 = marginals.iter().map(|d| d.len() as u128).product();
    if size > ENUM_CAP {
        return Err(Error::TooLarge(size));
    }
    if let Some(d) = marginals.iter().find(|d| d.dim() != 1) {
        return Err(Error::DimMismatch { left: 1, right: d.dim() });
    }
    let mut pts = vec![Vec::new()];
    let mut ws = vec![1.0];
    for d in marginals {
        let mut np = Vec::with_capacity(pts.len() * d.len());
        let mut nw = Vec::with_capacity(pts.len() * d.len());
        for (p, w) in pts.iter().zip(&ws) {
            for (x, q) in d.atoms() {
                let mut e: Point = p.clone();
                e.push(x[0]);
                np.push(e);
                nw.push(w * q);
            }
        }
        pts = np;
        ws = nw;
    }
    DiscreteDist::from_weights(marginals.len(), pts, ws)
}

/// Product of the rounded empirical marginals.
pub fn learn_product(samples: &SampleSet, eta: f64, h: f64) -> Result<DiscreteDist> {
    product_joint(&learn_product_marginals(samples, eta, h)?)
}

/// Learns every bidder's product distribution from its own samples.
pub fn learn_scenario(
    samples: &[SampleSet],
    eta: f64,
    h: f64,
    model: crate::valuation::ValuationModel,
) -> Result<crate::multi_item::Scenario> {
    let m = samples.first().ok_or(Error::EmptySamples)?.dim;
    let factors = samples.iter().map(|s| learn_product(s, eta, h)).collect::<Result<Vec<_>>>()?;
    crate::multi_item::Scenario::new(samples.len(), m, h, model, crate::dist::ProductDist::new(factors)?)
}

/// Scheffé tournament. Candidate i beats j when its mass on {q_i > q_j} is at least as close
/// to the empirical mass as q_j's. Returns the winner (most wins, lowest index on ties) and the
/// win counts.
pub fn scheffe_select(candidates: &[DiscreteDist], samples: &SampleSet) -> Result<(usize, Vec<usize>)> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if let Some(c) = candidates.iter().find(|c| c.dim() != samples.dim) {
        return Err(Error::DimMismatch { left: samples.dim, right: c.dim() });
    }
    let k = candidates.len();
    let nrows = samples.len() as f64;
    // densities of every candidate at every sample
    let at: Vec<Vec<f64>> =
        candidates.iter().map(|c| samples.rows.iter().map(|x| c.prob_of(x)).collect()).collect();
    let mut wins = vec![0usize; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let (qi, qj) = (&candidates[i], &candidates[j]);
            let in_a = |x: &[f64]| qi.prob_of(x) > qj.prob_of(x);
            let mass_i: f64 = qi.atoms().filter(|(x, _)| in_a(x)).map(|(_, p)| p).sum();
            let mass_j: f64 = qj.atoms().filter(|(x, _)| in_a(x)).map(|(_, p)| p).sum();
            let emp = (0..samples.len()).filter(|&r| at[i][r] > at[j][r]).count() as f64 / nrows;
            if (mass_i - emp).abs() <= (mass_j - emp).abs() {
                wins[i] += 1;
            }
        }
    }
    let best = (0..k).fold(0, |b, i| if wins[i] > wins[b] { i } else { b });
    Ok((best, wins))
}
