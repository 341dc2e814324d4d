#![allow(dead_code)]

use proptest::prelude::*;
use ral_core::dist::{DiscreteDist, ProductDist};
use ral_core::lpcore::max_mass_transport;

pub const STEP: f64 = 0.05;

/// Distribution on the 0.05 grid of [0,1]^dim with at most `max_len` atoms.
pub fn dist(dim: usize, max_len: usize) -> impl Strategy<Value = DiscreteDist> {
    prop::collection::vec((prop::collection::vec(0u32..=20, dim), 1u32..=10), 1..=max_len).prop_map(move |atoms| {
        let pts = atoms.iter().map(|(p, _)| p.iter().map(|&k| k as f64 * STEP).collect()).collect();
        let ws = atoms.iter().map(|(_, w)| *w as f64).collect();
        DiscreteDist::from_weights(dim, pts, ws).unwrap()
    })
}

pub fn dist1(max_len: usize) -> impl Strategy<Value = DiscreteDist> {
    dist(1, max_len)
}

pub fn product(n: usize, dim: usize, max_len: usize) -> impl Strategy<Value = ProductDist> {
    prop::collection::vec(dist(dim, max_len), n).prop_map(|f| ProductDist::new(f).unwrap())
}

/// Brute-force Prokhorov distance. The far mass f(ε) = 1 − (max mass on pairs within ε) is a
/// decreasing step function with jumps at pairwise distances, so the infimum of
/// {ε : f(ε) ≤ ε} is min over candidate distances d of max(d, f(d)).
pub fn prokhorov_brute(p: &DiscreteDist, q: &DiscreteDist) -> f64 {
    let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let mut cands = vec![0.0];
    for a in p.support() {
        for b in q.support() {
            cands.push(l1(a, b));
        }
    }
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();
    cands
        .iter()
        .map(|&d| {
            let allowed: Vec<Vec<bool>> =
                p.support().iter().map(|a| q.support().iter().map(|b| l1(a, b) <= d + 1e-12).collect()).collect();
            let far = 1.0 - max_mass_transport(p.probs(), q.probs(), &allowed).unwrap();
            d.max(far)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Moves every atom by an offset in [−r, r], clamped to [0, h].
pub fn jitter(d: &DiscreteDist, offsets: &[f64], h: f64) -> DiscreteDist {
    let pts = d.support().iter().zip(offsets.iter().cycle()).map(|(x, o)| vec![(x[0] + o).clamp(0.0, h)]).collect();
    DiscreteDist::from_weights(1, pts, d.probs().to_vec()).unwrap()
}
