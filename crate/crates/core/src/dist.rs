//! Finite-support distributions over R^m and the distances between them.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpcore::max_mass_plan;

pub type Point = Vec<f64>;

/// Search resolution for Lévy and Prokhorov distances.
pub const SEARCH_TOL: f64 = 1e-9;
/// Cells of the rounding grid absorb this much float noise on their lower edge.
pub const GRID_GUARD: f64 = 1e-9;

/// Snap to the 1e-12 lattice used for exact support comparison.
pub fn quantize(x: f64) -> f64 {
    let q = (x * 1e12).round() / 1e12;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

pub fn quantize_point(p: &[f64]) -> Point {
    p.iter().map(|&x| quantize(x)).collect()
}

pub fn cmp_points(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DistFile {
    dim: usize,
    support: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistFile")]
pub struct DiscreteDist {
    dim: usize,
    support: Vec<Point>,
    probs: Vec<f64>,
}

impl TryFrom<DistFile> for DiscreteDist {
    type Error = Error;
    fn try_from(f: DistFile) -> Result<Self> {
        DiscreteDist::new(f.dim, f.support, f.probs)
    }
}

impl DiscreteDist {
    /// Validates normalization (within 1e-9), merges duplicate atoms and drops zero-mass atoms.
    pub fn new(dim: usize, support: Vec<Point>, probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {} (deficit {:e})",
                total,
                1.0 - total
            )));
        }
        Self::from_weights(dim, support, probs)
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn from_weights(dim: usize, support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDistribution("dimension must be at least 1".into()));
        }
        if support.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} support points but {} probabilities",
                support.len(),
                weights.len()
            )));
        }
        let mut atoms: Vec<(Point, f64)> = Vec::with_capacity(support.len());
        for (pt, w) in support.into_iter().zip(weights) {
            if pt.len() != dim {
                return Err(Error::DimMismatch { left: dim, right: pt.len() });
            }
            if pt.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidDistribution("non-finite coordinate".into()));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidDistribution("negative or non-finite weight".into()));
            }
            if w > 0.0 {
                atoms.push((quantize_point(&pt), w));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.is_empty() || total <= 0.0 {
            return Err(Error::InvalidDistribution("no positive mass".into()));
        }
        atoms.sort_by(|a, b| cmp_points(&a.0, &b.0));
        let mut out_s: Vec<Point> = Vec::with_capacity(atoms.len());
        let mut out_p: Vec<f64> = Vec::with_capacity(atoms.len());
        for (pt, w) in atoms {
            if out_s.last().map_or(false, |l| *l == pt) {
                *out_p.last_mut().unwrap() += w;
            } else {
                out_s.push(pt);
                out_p.push(w);
            }
        }
        for p in out_p.iter_mut() {
            *p /= total;
        }
        Ok(DiscreteDist { dim, support: out_s, probs: out_p })
    }

    pub fn point_mass(x: Point) -> Self {
        let dim = x.len();
        DiscreteDist { dim, support: vec![quantize_point(&x)], probs: vec![1.0] }
    }

    /// One-dimensional convenience constructor from `(value, prob)` atoms.
    pub fn from_atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        Self::new(1, atoms.iter().map(|a| vec![a.0]).collect(), atoms.iter().map(|a| a.1).collect())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str::<DistFile>(s)
            .map_err(|e| Error::InvalidDistribution(format!("line {} column {}: {}", e.line(), e.column(), e)))
            .and_then(DiscreteDist::try_from)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("distribution serializes")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[Point] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.support.iter().zip(self.probs.iter().copied())
    }

    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        let q = quantize_point(x);
        self.support.binary_search_by(|s| cmp_points(s, &q)).ok()
    }

    pub fn prob_of(&self, x: &[f64]) -> f64 {
        self.index_of(x).map_or(0.0, |i| self.probs[i])
    }

    /// Pushforward under `f`.
    pub fn map<F: Fn(&[f64]) -> Point>(&self, f: F) -> DiscreteDist {
        let dim = self.support.first().map(|s| f(s).len()).unwrap_or(self.dim);
        DiscreteDist::from_weights(dim, self.support.iter().map(|s| f(s)).collect(), self.probs.clone())
            .expect("pushforward of a valid distribution")
    }

    /// F(x) = P[X <= x] (one-dimensional).
    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms().filter(|(s, _)| s[0] <= x).map(|a| a.1).sum::<f64>().min(1.0)
    }

    /// P[X < x] (one-dimensional).
    pub fn cdf_left(&self, x: f64) -> f64 {
        self.atoms().filter(|(s, _)| s[0] < x).map(|a| a.1).sum::<f64>().min(1.0)
    }

    pub fn to_cdf(&self) -> Result<Cdf> {
        self.require_1d()?;
        let mut acc = 0.0;
        let mut values = Vec::with_capacity(self.len());
        for p in &self.probs {
            acc += p;
            values.push(acc.min(1.0));
        }
        if let Some(v) = values.last_mut() {
            *v = 1.0;
        }
        Ok(Cdf { breakpoints: self.support.iter().map(|s| s[0]).collect(), values })
    }

    pub fn expectation<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.atoms().map(|(s, p)| p * f(s)).sum()
    }

    fn require_1d(&self) -> Result<()> {
        if self.dim != 1 {
            return Err(Error::DimMismatch { left: self.dim, right: 1 });
        }
        Ok(())
    }
}

/// Right-continuous step CDF of a one-dimensional distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl Cdf {
    pub fn eval(&self, x: f64) -> f64 {
        match self.breakpoints.partition_point(|&b| b <= x) {
            0 => 0.0,
            k => self.values[k - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductDist {
    pub factors: Vec<DiscreteDist>,
}

impl ProductDist {
    pub fn new(factors: Vec<DiscreteDist>) -> Result<Self> {
        let first = factors
            .first()
            .ok_or_else(|| Error::InvalidDistribution("product of zero factors".into()))?;
        for f in &factors {
            if f.dim() != first.dim() {
                return Err(Error::DimMismatch { left: first.dim(), right: f.dim() });
            }
        }
        Ok(ProductDist { factors })
    }

    pub fn n(&self) -> usize {
        self.factors.len()
    }

    pub fn dim(&self) -> usize {
        self.factors[0].dim()
    }

    pub fn profile_count(&self) -> u128 {
        self.factors.iter().map(|f| f.len() as u128).product()
    }

    /// Profile probability for per-bidder support indices.
    pub fn prob(&self, idx: &[usize]) -> f64 {
        idx.iter().zip(&self.factors).map(|(&k, f)| f.probs()[k]).product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub offset: Vec<f64>,
    pub width: f64,
}

impl GridSpec {
    pub fn new(offset: Vec<f64>, width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::InvalidEpsilon(width));
        }
        if offset.iter().any(|&l| !(l >= 0.0 && l <= width)) {
            return Err(Error::ShapeMismatch("grid offset must lie in [0, width]".into()));
        }
        Ok(GridSpec { offset, width })
    }

    /// Coordinatewise max{floor((x-l)/w)*w + l, 0}.
    pub fn round_point(&self, x: &[f64]) -> Point {
        x.iter()
            .zip(&self.offset)
            .map(|(&xi, &l)| {
                let k = ((xi - l) / self.width + GRID_GUARD).floor();
                quantize((k * self.width + l).max(0.0))
            })
            .collect()
    }

    pub fn draw<R: Rng + ?Sized>(dim: usize, width: f64, rng: &mut R) -> Result<Self> {
        let offset = (0..dim).map(|_| rng.gen::<f64>() * width).collect();
        GridSpec::new(offset, width)
    }
}

/// Joint mass over two supports with the given marginals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub left: DiscreteDist,
    pub right: DiscreteDist,
    pub mass: Vec<Vec<f64>>,
}

impl Coupling {
    /// Mass on pairs at ℓ1 distance greater than `eps` (up to float noise).
    pub fn mass_beyond(&self, eps: f64) -> f64 {
        let mut s = 0.0;
        for (i, a) in self.left.support().iter().enumerate() {
            for (j, b) in self.right.support().iter().enumerate() {
                if l1(a, b) > eps + 1e-9 {
                    s += self.mass[i][j];
                }
            }
        }
        s
    }
}

fn same_dim(p: &DiscreteDist, q: &DiscreteDist) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimMismatch { left: p.dim(), right: q.dim() });
    }
    Ok(())
}

pub fn tv_distance(p: &DiscreteDist, q: &DiscreteDist) -> Result<f64> {
    same_dim(p, q)?;
    let (mut i, mut j) = (0, 0);
    let mut s = 0.0;
    let (ps, qs) = (p.support(), q.support());
    while i < ps.len() || j < qs.len() {
        let o = if i == ps.len() {
            Ordering::Greater
        } else if j == qs.len() {
            Ordering::Less
        } else {
            cmp_points(&ps[i], &qs[j])
        };
        match o {
            Ordering::Less => {
                s += p.probs()[i];
                i += 1;
            }
            Ordering::Greater => {
                s += q.probs()[j];
                j += 1;
            }
            Ordering::Equal => {
                s += (p.probs()[i] - q.probs()[j]).abs();
                i += 1;
                j += 1;
            }
        }
    }
    Ok((0.5 * s).min(1.0))
}

pub fn kolmogorov_distance(p: &DiscreteDist, q: &DiscreteDist) -> Result<f64> {
    p.require_1d()?;
    q.require_1d()?;
    let (fp, fq) = (p.to_cdf()?, q.to_cdf()?);
    let gap = p
        .support()
        .iter()
        .chain(q.support())
        .map(|x| (fp.eval(x[0]) - fq.eval(x[0])).abs())
        .fold(0.0, f64::max);
    Ok(gap)
}

// F(x-e)-e <= G(x) <= F(x+e)+e for all x, checked where either side can fail
fn levy_feasible(f: &DiscreteDist, g: &DiscreteDist, e: f64) -> bool {
    for a in f.support() {
        let a = a[0];
        if f.cdf(a) - e > g.cdf(a + e) + 1e-15 {
            return false;
        }
        if g.cdf_left(a - e) > f.cdf_left(a) + e + 1e-15 {
            return false;
        }
    }
    true
}

pub fn levy_distance(p: &DiscreteDist, q: &DiscreteDist) -> Result<f64> {
    p.require_1d()?;
    q.require_1d()?;
    if levy_feasible(p, q, 0.0) && levy_feasible(q, p, 0.0) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > SEARCH_TOL {
        let mid = 0.5 * (lo + hi);
        if levy_feasible(p, q, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // the Kolmogorov gap is always a feasible slack, so it caps the search result
    Ok(hi.min(kolmogorov_distance(p, q)?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProkhorovResult {
    /// Distance after snapping the search bracket onto the feasibility breakpoint.
    pub value: f64,
    /// Upper end of the bisection bracket.
    pub searched: f64,
    pub coupling: Coupling,
}

struct MassOracle<'a> {
    p: &'a DiscreteDist,
    q: &'a DiscreteDist,
    dist: Vec<Vec<f64>>,
    breaks: Vec<f64>,
    memo: Vec<Option<(f64, Vec<Vec<f64>>)>>,
}

impl<'a> MassOracle<'a> {
    fn new(p: &'a DiscreteDist, q: &'a DiscreteDist) -> Self {
        let dist: Vec<Vec<f64>> = p
            .support()
            .iter()
            .map(|a| q.support().iter().map(|b| quantize(l1(a, b))).collect())
            .collect();
        let mut breaks: Vec<f64> = dist.iter().flatten().copied().collect();
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
        let memo = vec![None; breaks.len() + 1];
        MassOracle { p, q, dist, breaks, memo }
    }

    // number of breakpoints <= eps
    fn level(&self, eps: f64) -> usize {
        self.breaks.partition_point(|&b| b <= eps + 1e-12)
    }

    fn at_level(&mut self, k: usize) -> Result<&(f64, Vec<Vec<f64>>)> {
        if self.memo[k].is_none() {
            let r = if k == 0 {
                (0.0, vec![vec![0.0; self.q.len()]; self.p.len()])
            } else {
                let thr = self.breaks[k - 1];
                let allowed: Vec<Vec<bool>> =
                    self.dist.iter().map(|r| r.iter().map(|&d| d <= thr).collect()).collect();
                max_mass_plan(self.p.probs(), self.q.probs(), &allowed)?
            };
            self.memo[k] = Some(r);
        }
        Ok(self.memo[k].as_ref().unwrap())
    }

    fn mass(&mut self, eps: f64) -> Result<f64> {
        let k = self.level(eps);
        Ok(self.at_level(k)?.0)
    }

    fn feasible(&mut self, eps: f64) -> Result<bool> {
        Ok(self.mass(eps)? + eps >= 1.0 - 1e-10)
    }
}

/// Prokhorov distance under ℓ1 via the coupling characterization, with a witness coupling.
pub fn prokhorov_distance(p: &DiscreteDist, q: &DiscreteDist) -> Result<ProkhorovResult> {
    same_dim(p, q)?;
    let mut oracle = MassOracle::new(p, q);
    let (value, searched) = if oracle.feasible(0.0)? {
        (0.0, 0.0)
    } else {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > SEARCH_TOL {
            let mid = 0.5 * (lo + hi);
            if oracle.feasible(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let k_lo = oracle.level(lo);
        let k_hi = oracle.level(hi);
        let exact = if k_hi > k_lo {
            let b = oracle.breaks[k_lo];
            let f = oracle.at_level(k_lo + 1)?.0;
            b.max(1.0 - f)
        } else {
            1.0 - oracle.at_level(k_hi)?.0
        };
        let exact = if (exact - hi).abs() <= 1e-7 { exact.clamp(0.0, 1.0) } else { hi };
        (exact, hi)
    };
    let k = oracle.level(value);
    let plan = oracle.at_level(k)?.1.clone();
    let coupling = complete_coupling(p, q, plan);
    Ok(ProkhorovResult { value, searched, coupling })
}

// extend a sub-coupling to a full one by pairing leftover masses proportionally
fn complete_coupling(p: &DiscreteDist, q: &DiscreteDist, mut plan: Vec<Vec<f64>>) -> Coupling {
    let row: Vec<f64> = p
        .probs()
        .iter()
        .zip(&plan)
        .map(|(pi, r)| (pi - r.iter().sum::<f64>()).max(0.0))
        .collect();
    let col: Vec<f64> = (0..q.len())
        .map(|j| (q.probs()[j] - plan.iter().map(|r| r[j]).sum::<f64>()).max(0.0))
        .collect();
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        for (i, r) in row.iter().enumerate() {
            for (j, c) in col.iter().enumerate() {
                plan[i][j] += r * c / total;
            }
        }
    }
    Coupling { left: p.clone(), right: q.clone(), mass: plan }
}

/// True iff `q` first-order stochastically dominates `p`.
pub fn fosd(p: &DiscreteDist, q: &DiscreteDist) -> Result<bool> {
    p.require_1d()?;
    q.require_1d()?;
    let (fp, fq) = (p.to_cdf()?, q.to_cdf()?);
    Ok(p.support().iter().chain(q.support()).all(|x| fq.eval(x[0]) <= fp.eval(x[0]) + 1e-12))
}

/// FOSD-minimal and maximal members of the ε Lévy ball around `d` (values capped at `h`).
pub fn levy_ball_extremes(d: &DiscreteDist, eps: f64, h: f64) -> Result<(DiscreteDist, DiscreteDist)> {
    d.require_1d()?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    let mut ws = vec![vec![-eps]];
    let mut wp = vec![eps];
    let mut bs = Vec::new();
    let mut bp = Vec::new();
    let (mut acc, mut prev_w, mut prev_b) = (0.0, eps, 0.0);
    for (x, p) in d.atoms() {
        acc += p;
        let cw = (acc + eps).min(1.0);
        ws.push(vec![x[0] - eps]);
        wp.push((cw - prev_w).max(0.0));
        prev_w = cw;
        let cb = (acc - eps).max(0.0);
        bs.push(vec![x[0] + eps]);
        bp.push((cb - prev_b).max(0.0));
        prev_b = cb;
    }
    bs.push(vec![h + eps]);
    bp.push((1.0 - prev_b).max(0.0));
    Ok((DiscreteDist::from_weights(1, ws, wp)?, DiscreteDist::from_weights(1, bs, bp)?))
}

pub fn shift(d: &DiscreteDist, t: f64) -> DiscreteDist {
    d.map(|x| x.iter().map(|v| v + t).collect())
}

pub fn round_dist(d: &DiscreteDist, g: &GridSpec) -> Result<DiscreteDist> {
    if g.offset.len() != d.dim() {
        return Err(Error::DimMismatch { left: d.dim(), right: g.offset.len() });
    }
    Ok(d.map(|x| g.round_point(x)))
}

/// `d` restricted to the half-open cube ⨉_j [corner_j, corner_j + widths_j), renormalized.
pub fn condition_cube(d: &DiscreteDist, corner: &[f64], widths: &[f64]) -> Result<DiscreteDist> {
    if corner.len() != d.dim() || widths.len() != d.dim() {
        return Err(Error::DimMismatch { left: d.dim(), right: corner.len() });
    }
    let inside = |x: &[f64]| {
        x.iter()
            .zip(corner.iter().zip(widths))
            .all(|(&v, (&c, &w))| v >= c - 1e-12 && v < c + w - 1e-12)
    };
    condition_on(d, inside)
}

pub fn condition_on<F: Fn(&[f64]) -> bool>(d: &DiscreteDist, event: F) -> Result<DiscreteDist> {
    let (s, w): (Vec<Point>, Vec<f64>) =
        d.atoms().filter(|(x, _)| event(x)).map(|(x, p)| (x.clone(), p)).unzip();
    if w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::EmptyConditioning);
    }
    DiscreteDist::from_weights(d.dim(), s, w)
}

pub fn sample<R: Rng + ?Sized>(d: &DiscreteDist, rng: &mut R) -> Point {
    d.support()[sample_index(d, rng)].clone()
}

pub fn sample_index<R: Rng + ?Sized>(d: &DiscreteDist, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in d.probs().iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    d.len() - 1
}

pub fn sample_product<R: Rng + ?Sized>(pd: &ProductDist, rng: &mut R) -> Vec<Point> {
    pd.factors.iter().map(|f| sample(f, rng)).collect()
}

/// Monte Carlo (mean, standard error) of TV between the two distributions rounded on a random grid.
pub fn expected_rounded_tv<R: Rng + ?Sized>(
    p: &DiscreteDist,
    q: &DiscreteDist,
    delta: f64,
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    same_dim(p, q)?;
    if trials == 0 {
        return Err(Error::ShapeMismatch("need at least one trial".into()));
    }
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..trials {
        let g = GridSpec::draw(p.dim(), delta, rng)?;
        let t = tv_distance(&round_dist(p, &g)?, &round_dist(q, &g)?)?;
        sum += t;
        sq += t * t;
    }
    let k = trials as f64;
    let mean = sum / k;
    let var = if trials > 1 { ((sq - k * mean * mean) / (k - 1.0)).max(0.0) } else { 0.0 };
    Ok((mean, (var / k).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn d(atoms: &[(f64, f64)]) -> DiscreteDist {
        DiscreteDist::from_atoms(atoms).unwrap()
    }

    #[test]
    fn merges_and_sorts() {
        let x = DiscreteDist::new(1, vec![vec![1.0], vec![0.0], vec![1.0]], vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(x.support(), &[vec![0.0], vec![1.0]]);
        assert_eq!(x.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn rejects_unnormalized_with_deficit() {
        let e = DiscreteDist::from_json_str(r#"{"dim":1,"support":[[0],[1]],"probs":[0.5,0.4]}"#).unwrap_err();
        assert!(e.to_string().contains("deficit"), "{}", e);
    }

    #[test]
    fn tv_examples() {
        let a = d(&[(0.0, 0.5), (1.0, 0.5)]);
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(tv_distance(&d(&[(0.0, 1.0)]), &d(&[(1.0, 1.0)])).unwrap(), 1.0);
        assert!((tv_distance(&a, &d(&[(0.0, 0.25), (1.0, 0.75)])).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_examples() {
        let a = d(&[(0.0, 0.5), (1.0, 0.5)]);
        assert_eq!(kolmogorov_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(kolmogorov_distance(&d(&[(0.0, 1.0)]), &d(&[(0.1, 1.0)])).unwrap(), 1.0);
        assert!((kolmogorov_distance(&a, &d(&[(0.0, 0.3), (1.0, 0.7)])).unwrap() - 0.2).abs() < 1e-12);
        let two = DiscreteDist::point_mass(vec![0.0, 0.0]);
        assert!(matches!(kolmogorov_distance(&two, &two), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn levy_examples() {
        let a = d(&[(0.0, 0.5), (1.0, 0.5)]);
        assert_eq!(levy_distance(&a, &a).unwrap(), 0.0);
        for &t in &[0.1, 0.37, 0.9] {
            let l = levy_distance(&d(&[(0.0, 1.0)]), &d(&[(t, 1.0)])).unwrap();
            assert!((l - t).abs() <= 2e-9, "{} vs {}", l, t);
        }
        // point masses at A and A - eps: Lévy eps, Kolmogorov 1
        let (big_a, eps) = (5.0, 0.05);
        let (x, y) = (d(&[(big_a, 1.0)]), d(&[(big_a - eps, 1.0)]));
        assert!((levy_distance(&x, &y).unwrap() - eps).abs() <= 2e-9);
        assert_eq!(kolmogorov_distance(&x, &y).unwrap(), 1.0);
    }

    #[test]
    fn prokhorov_examples() {
        let a = d(&[(0.0, 0.5), (1.0, 0.5)]);
        assert_eq!(prokhorov_distance(&a, &a).unwrap().value, 0.0);
        let (x, y) = (d(&[(3.0, 1.0)]), d(&[(2.95, 1.0)]));
        let r = prokhorov_distance(&x, &y).unwrap();
        assert!((r.value - 0.05).abs() < 1e-12);
        assert!((r.searched - 0.05).abs() < 2e-9);
        assert_eq!(tv_distance(&x, &y).unwrap(), 1.0);
        // far apart point masses: the bound is 1
        let r = prokhorov_distance(&d(&[(0.0, 1.0)]), &d(&[(4.0, 1.0)])).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prokhorov_mass_threshold_case() {
        // moving 0.2 mass by 0.5: infimum sits at 1 - f = 0.2, not on a breakpoint
        let p = d(&[(0.0, 0.8), (1.0, 0.2)]);
        let q = d(&[(0.0, 0.8), (1.5, 0.2)]);
        let r = prokhorov_distance(&p, &q).unwrap();
        assert!((r.value - 0.2).abs() < 1e-12, "{:?}", r.value);
        assert!(r.coupling.mass_beyond(r.value + 1e-9) <= r.value + 1e-9);
    }

    #[test]
    fn fosd_examples() {
        let a = d(&[(0.0, 0.5), (1.0, 0.5)]);
        assert!(fosd(&a, &a).unwrap());
        assert!(fosd(&d(&[(0.0, 1.0)]), &d(&[(1.0, 1.0)])).unwrap());
        assert!(!fosd(&d(&[(1.0, 1.0)]), &d(&[(0.0, 1.0)])).unwrap());
        let (u, v) = (d(&[(0.0, 0.5), (2.0, 0.5)]), d(&[(1.0, 1.0)]));
        assert!(!fosd(&u, &v).unwrap() && !fosd(&v, &u).unwrap());
    }

    #[test]
    fn levy_ball_point_mass() {
        let (w, b) = levy_ball_extremes(&d(&[(1.0, 1.0)]), 0.1, 1.0).unwrap();
        assert_eq!(w.support(), &[vec![-0.1], vec![0.9]]);
        assert!((w.probs()[0] - 0.1).abs() < 1e-12 && (w.probs()[1] - 0.9).abs() < 1e-12);
        assert_eq!(b.support(), &[vec![1.1]]);
    }

    #[test]
    fn levy_ball_uniform_follows_cdf_formula() {
        // F_worst(x) = min(F(x+0.5)+0.5, 1) reaches 1 already at -0.5
        let (w, _) = levy_ball_extremes(&d(&[(0.0, 0.5), (1.0, 0.5)]), 0.5, 1.0).unwrap();
        assert_eq!(w.support(), &[vec![-0.5]]);
        assert!(matches!(levy_ball_extremes(&d(&[(0.0, 1.0)]), 0.0, 1.0), Err(Error::InvalidEpsilon(_))));
    }

    #[test]
    fn shift_examples() {
        let a = d(&[(0.2, 0.3), (1.0, 0.7)]);
        assert_eq!(shift(&a, 0.0), a);
        assert_eq!(shift(&d(&[(1.0, 1.0)]), -0.2).support(), &[vec![0.8]]);
        assert_eq!(shift(&shift(&a, 0.3), -0.3), a);
    }

    #[test]
    fn rounding_examples() {
        let g = GridSpec::new(vec![0.2], 1.0).unwrap();
        assert_eq!(g.round_point(&[0.1]), vec![0.0]);
        assert_eq!(g.round_point(&[1.3]), vec![1.2]);
        assert_eq!(g.round_point(&[1.2]), vec![1.2]);
        let a = d(&[(0.25, 0.5), (0.5, 0.5)]);
        let fine = GridSpec::new(vec![0.0], 0.05).unwrap();
        assert_eq!(round_dist(&a, &fine).unwrap(), a);
    }

    #[test]
    fn conditioning_examples() {
        let a = d(&[(0.0, 0.5), (1.0, 0.5)]);
        assert_eq!(condition_cube(&a, &[0.0], &[2.0]).unwrap(), a);
        assert_eq!(condition_cube(&a, &[0.0], &[0.5]).unwrap(), d(&[(0.0, 1.0)]));
        let b = d(&[(0.0, 0.25), (0.4, 0.25), (1.0, 0.5)]);
        assert_eq!(condition_cube(&b, &[0.0], &[0.5]).unwrap(), d(&[(0.0, 0.5), (0.4, 0.5)]));
        assert_eq!(condition_cube(&a, &[2.0], &[1.0]).unwrap_err(), Error::EmptyConditioning);
    }

    #[test]
    fn sampling_is_deterministic_and_calibrated() {
        let a = d(&[(0.0, 0.5), (1.0, 0.5)]);
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let s1: Vec<Point> = (0..50).map(|_| sample(&a, &mut r1)).collect();
        let s2: Vec<Point> = (0..50).map(|_| sample(&a, &mut r2)).collect();
        assert_eq!(s1, s2);
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let ones = (0..100_000).filter(|_| sample(&a, &mut r)[0] == 1.0).count();
        assert!((ones as f64 / 1e5 - 0.5).abs() < 0.01);
        let pm = d(&[(0.7, 1.0)]);
        assert!((0..100).all(|_| sample(&pm, &mut r) == vec![0.7]));
    }

    #[test]
    fn rounded_tv_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let a = d(&[(0.0, 0.5), (0.3, 0.5)]);
        assert_eq!(expected_rounded_tv(&a, &a, 0.1, 100, &mut r).unwrap(), (0.0, 0.0));
        let (t, delta) = (0.03, 0.1);
        let (mean, se) = expected_rounded_tv(&d(&[(0.0, 1.0)]), &d(&[(t, 1.0)]), delta, 20_000, &mut r).unwrap();
        assert!((mean - t / delta).abs() <= 3.0 * se + 1e-12, "{} {}", mean, se);
    }
}
