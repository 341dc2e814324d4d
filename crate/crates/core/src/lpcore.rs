//! Dense two-phase primal simplex and the transportation helper built on it.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEAS_TOL: f64 = 1e-7;
pub const PIVOT_TOL: f64 = 1e-10;
const ZERO_CLEAN: f64 = 1e-14;
// consecutive degenerate pivots tolerated before Bland's rule takes over
const STALL_LIMIT: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

/// Maximize `objective · x` subject to the constraint rows and per-variable bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LpProblem {
    /// New problem with every variable bounded to `[0, +inf)`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem {
            objective,
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        self.constraints.push(Constraint { coeffs, rel, rhs });
    }

    /// Adds a row given as sparse `(index, coefficient)` pairs.
    pub fn add_sparse(&mut self, terms: &[(usize, f64)], rel: Relation, rhs: f64) {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(j, c) in terms {
            coeffs[j] += c;
        }
        self.add(coeffs, rel, rhs);
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.bounds[j] = (lower, upper);
    }

    fn instance_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for c in &self.objective {
            c.to_bits().hash(&mut h);
        }
        for row in &self.constraints {
            for c in &row.coeffs {
                c.to_bits().hash(&mut h);
            }
            (row.rel as u8).hash(&mut h);
            row.rhs.to_bits().hash(&mut h);
        }
        for (l, u) in &self.bounds {
            l.to_bits().hash(&mut h);
            u.to_bits().hash(&mut h);
        }
        h.finish()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if n == 0 {
            return Err(Error::ShapeMismatch("LP has no variables".into()));
        }
        if self.bounds.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "row {} has {} coefficients, expected {}",
                    i,
                    row.coeffs.len(),
                    n
                )));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::ShapeMismatch(format!("row {} is not finite", i)));
            }
        }
        for (j, &(l, u)) in self.bounds.iter().enumerate() {
            if l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::ShapeMismatch(format!("bad bounds on variable {}", j)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals read off the final basis (only meaningful when optimal).
    pub duals: Vec<f64>,
}

impl LpSolution {
    fn empty(status: LpStatus, n: usize, rows: usize) -> Self {
        LpSolution {
            status,
            x: vec![0.0; n],
            objective: 0.0,
            duals: vec![0.0; rows],
        }
    }
}

// how an original variable maps onto nonnegative columns
struct VarMap {
    offset: f64,
    cols: Vec<(usize, f64)>,
}

struct Tableau {
    rows: usize,
    width: usize,
    a: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    allowed: Vec<bool>,
}

enum Phase {
    Done,
    Unbounded,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.a[r * self.width + self.width - 1]
    }

    fn pivot(&mut self, p: usize, q: usize) {
        let w = self.width;
        let piv = self.a[p * w + q];
        let mut nz: Vec<(usize, f64)> = Vec::new();
        for j in 0..w {
            let v = self.a[p * w + j] / piv;
            let v = if v.abs() < ZERO_CLEAN { 0.0 } else { v };
            self.a[p * w + j] = v;
            if v != 0.0 {
                nz.push((j, v));
            }
        }
        self.a[p * w + q] = 1.0;
        for r in 0..self.rows {
            if r == p {
                continue;
            }
            let f = self.a[r * w + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[r * w..(r + 1) * w];
            for &(j, v) in &nz {
                let nv = row[j] - f * v;
                row[j] = if nv.abs() < ZERO_CLEAN { 0.0 } else { nv };
            }
            row[q] = 0.0;
        }
        let f = self.obj[q];
        if f != 0.0 {
            for &(j, v) in &nz {
                self.obj[j] -= f * v;
            }
            self.obj[q] = 0.0;
        }
        self.basis[p] = q;
    }

    fn run(&mut self, iters: &mut usize, cap: usize) -> Option<Phase> {
        let w = self.width;
        let mut stall = 0usize;
        loop {
            let bland = stall >= STALL_LIMIT;
            let mut enter = None;
            let mut best = FEAS_TOL;
            for j in 0..w - 1 {
                if !self.allowed[j] {
                    continue;
                }
                let d = self.obj[j];
                if d > best || (bland && d > FEAS_TOL) {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let q = match enter {
                None => return Some(Phase::Done),
                Some(q) => q,
            };
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.rows {
                let arq = self.at(r, q);
                if arq > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / arq;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            if ratio < best_ratio - 1e-12 {
                                true
                            } else if ratio <= best_ratio + 1e-12 {
                                if bland {
                                    self.basis[r] < self.basis[l]
                                } else {
                                    arq > self.at(l, q)
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        leave = Some(r);
                        best_ratio = best_ratio.min(ratio);
                    }
                }
            }
            let p = match leave {
                None => return Some(Phase::Unbounded),
                Some(p) => p,
            };
            if best_ratio < 1e-12 {
                stall += 1;
            } else {
                stall = 0;
            }
            self.pivot(p, q);
            *iters += 1;
            if *iters > cap {
                return None;
            }
        }
    }
}

/// Solves the LP. Optimal solutions satisfy every row within `FEAS_TOL`.
pub fn lp_solve(problem: &LpProblem) -> Result<LpSolution> {
    problem.validate()?;
    let n = problem.num_vars();
    let n_rows = problem.constraints.len();
    let breakdown = |iterations| Error::NumericalBreakdown {
        iterations,
        hash: problem.instance_hash(),
    };

    // contradictory bounds are caught by validate; map variables to y >= 0
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut ub_rows: Vec<(usize, f64)> = Vec::new();
    for &(l, u) in &problem.bounds {
        if l.is_finite() {
            maps.push(VarMap { offset: l, cols: vec![(ncols, 1.0)] });
            if u.is_finite() {
                ub_rows.push((ncols, u - l));
            }
            ncols += 1;
        } else if u.is_finite() {
            maps.push(VarMap { offset: u, cols: vec![(ncols, -1.0)] });
            ncols += 1;
        } else {
            maps.push(VarMap { offset: 0.0, cols: vec![(ncols, 1.0), (ncols + 1, -1.0)] });
            ncols += 2;
        }
    }
    let n_struct = ncols;

    // standard-form rows over structural columns, rhs made nonnegative
    struct Row {
        coeffs: Vec<(usize, f64)>,
        rel: Relation,
        rhs: f64,
        flipped: bool,
    }
    let mut rows: Vec<Row> = Vec::with_capacity(n_rows + ub_rows.len());
    for c in &problem.constraints {
        let mut rhs = c.rhs;
        let mut coeffs = Vec::new();
        for (j, &aj) in c.coeffs.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            rhs -= aj * maps[j].offset;
            for &(col, s) in &maps[j].cols {
                coeffs.push((col, aj * s));
            }
        }
        let mut rel = c.rel;
        let mut flipped = false;
        if rhs < 0.0 {
            rhs = -rhs;
            for t in coeffs.iter_mut() {
                t.1 = -t.1;
            }
            rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
            flipped = true;
        }
        rows.push(Row { coeffs, rel, rhs, flipped });
    }
    for &(col, cap) in &ub_rows {
        rows.push(Row { coeffs: vec![(col, 1.0)], rel: Relation::Le, rhs: cap, flipped: false });
    }

    // slack / surplus / artificial columns
    let m = rows.len();
    let mut id_col = vec![0usize; m];
    let mut art_cols = Vec::new();
    let mut extra: Vec<(usize, usize, f64)> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        match r.rel {
            Relation::Le => {
                extra.push((i, ncols, 1.0));
                id_col[i] = ncols;
                ncols += 1;
            }
            Relation::Ge => {
                extra.push((i, ncols, -1.0));
                ncols += 1;
                extra.push((i, ncols, 1.0));
                id_col[i] = ncols;
                art_cols.push(ncols);
                ncols += 1;
            }
            Relation::Eq => {
                extra.push((i, ncols, 1.0));
                id_col[i] = ncols;
                art_cols.push(ncols);
                ncols += 1;
            }
        }
    }
    let width = ncols + 1;
    let mut t = Tableau {
        rows: m,
        width,
        a: vec![0.0; m * width],
        obj: vec![0.0; width],
        basis: id_col.clone(),
        allowed: vec![true; ncols],
    };
    for (i, r) in rows.iter().enumerate() {
        for &(c, v) in &r.coeffs {
            t.a[i * width + c] += v;
        }
        t.a[i * width + width - 1] = r.rhs;
    }
    for &(i, c, v) in &extra {
        t.a[i * width + c] = v;
    }
    let mut is_art = vec![false; ncols];
    for &c in &art_cols {
        is_art[c] = true;
    }

    let cap = 50 * (n + n_rows).max(1);
    let mut iters = 0usize;

    if !art_cols.is_empty() {
        for i in 0..m {
            if is_art[t.basis[i]] {
                for j in 0..width {
                    t.obj[j] += t.a[i * width + j];
                }
            }
        }
        for &c in &art_cols {
            t.obj[c] = 0.0;
        }
        match t.run(&mut iters, cap) {
            None => return Err(breakdown(iters)),
            Some(Phase::Unbounded) => return Err(breakdown(iters)),
            Some(Phase::Done) => {}
        }
        if t.obj[width - 1] > FEAS_TOL {
            return Ok(LpSolution::empty(LpStatus::Infeasible, n, n_rows));
        }
        for i in 0..m {
            if !is_art[t.basis[i]] {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..ncols {
                if is_art[j] {
                    continue;
                }
                let v = t.at(i, j).abs();
                if v > 1e-9 && best.map_or(true, |(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                t.pivot(i, j);
            }
        }
        for &c in &art_cols {
            t.allowed[c] = false;
        }
    }

    // phase two objective row
    let mut cost = vec![0.0; ncols];
    for (j, map) in maps.iter().enumerate() {
        for &(col, s) in &map.cols {
            cost[col] += problem.objective[j] * s;
        }
    }
    t.obj = vec![0.0; width];
    t.obj[..ncols].copy_from_slice(&cost);
    for i in 0..m {
        let cb = cost[t.basis[i]];
        if cb != 0.0 {
            for j in 0..width {
                t.obj[j] -= cb * t.a[i * width + j];
            }
        }
    }
    for i in 0..m {
        t.obj[t.basis[i]] = 0.0;
    }
    match t.run(&mut iters, cap) {
        None => return Err(breakdown(iters)),
        Some(Phase::Unbounded) => {
            return Ok(LpSolution::empty(LpStatus::Unbounded, n, n_rows));
        }
        Some(Phase::Done) => {}
    }

    let mut y = vec![0.0; ncols];
    for i in 0..m {
        y[t.basis[i]] = t.rhs(i).max(0.0);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|mp| mp.offset + mp.cols.iter().map(|&(c, s)| s * y[c]).sum::<f64>())
        .collect();
    let _ = n_struct;

    for c in &problem.constraints {
        let act: f64 = c.coeffs.iter().zip(&x).map(|(a, b)| a * b).sum();
        let scale = 1.0 + c.rhs.abs();
        let viol = match c.rel {
            Relation::Le => act - c.rhs,
            Relation::Ge => c.rhs - act,
            Relation::Eq => (act - c.rhs).abs(),
        };
        if viol > 10.0 * FEAS_TOL * scale {
            return Err(breakdown(iters));
        }
    }

    let duals = (0..n_rows)
        .map(|i| {
            let d = -t.obj[id_col[i]];
            if rows[i].flipped {
                -d
            } else {
                d
            }
        })
        .collect();
    let objective = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { status: LpStatus::Optimal, x, objective, duals })
}

/// Largest sub-coupling mass on `allowed` pairs, together with the plan.
pub fn max_mass_plan(p: &[f64], q: &[f64], allowed: &[Vec<bool>]) -> Result<(f64, Vec<Vec<f64>>)> {
    if allowed.len() != p.len() || allowed.iter().any(|r| r.len() != q.len()) {
        return Err(Error::ShapeMismatch(format!(
            "allowed must be {}x{}",
            p.len(),
            q.len()
        )));
    }
    for (name, v) in [("p", p), ("q", q)] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 || v.iter().any(|x| *x < 0.0) {
            return Err(Error::InvalidDistribution(format!("{} sums to {}", name, s)));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..p.len())
        .flat_map(|i| (0..q.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| allowed[i][j])
        .collect();
    let mut plan = vec![vec![0.0; q.len()]; p.len()];
    if pairs.is_empty() {
        return Ok((0.0, plan));
    }
    let mut lp = LpProblem::new(vec![1.0; pairs.len()]);
    for i in 0..p.len() {
        let terms: Vec<(usize, f64)> = pairs
            .iter()
            .enumerate()
            .filter(|(_, &(a, _))| a == i)
            .map(|(k, _)| (k, 1.0))
            .collect();
        if !terms.is_empty() {
            lp.add_sparse(&terms, Relation::Le, p[i]);
        }
    }
    for j in 0..q.len() {
        let terms: Vec<(usize, f64)> = pairs
            .iter()
            .enumerate()
            .filter(|(_, &(_, b))| b == j)
            .map(|(k, _)| (k, 1.0))
            .collect();
        if !terms.is_empty() {
            lp.add_sparse(&terms, Relation::Le, q[j]);
        }
    }
    let sol = lp_solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::LpFailure(format!("{:?} transport LP", sol.status)));
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        plan[i][j] = sol.x[k].max(0.0);
    }
    Ok((sol.objective.clamp(0.0, 1.0), plan))
}

/// Max Σ γ(i,j) over allowed pairs for sub-couplings of `p` and `q`.
pub fn max_mass_transport(p: &[f64], q: &[f64], allowed: &[Vec<bool>]) -> Result<f64> {
    max_mass_plan(p, q, allowed).map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable_bound() {
        let mut lp = LpProblem::new(vec![1.0]);
        lp.add(vec![1.0], Relation::Le, 1.0);
        let s = lp_solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut lp = LpProblem::new(vec![1.0]);
        lp.add(vec![1.0], Relation::Le, -1.0);
        assert_eq!(lp_solve(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn boxed_symmetric() {
        let mut lp = LpProblem::new(vec![1.0, 1.0]);
        lp.add(vec![1.0, 1.0], Relation::Le, 2.0);
        lp.set_bounds(0, 0.0, 1.0);
        lp.set_bounds(1, 0.0, 1.0);
        let s = lp_solve(&lp).unwrap();
        assert!((s.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_and_free_variables() {
        let lp = LpProblem::new(vec![1.0]);
        assert_eq!(lp_solve(&lp).unwrap().status, LpStatus::Unbounded);

        // max -|x - 3| style: min t with t >= x - 3, t >= 3 - x, x free
        let mut lp = LpProblem::new(vec![0.0, -1.0]);
        lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add(vec![1.0, -1.0], Relation::Le, 3.0);
        lp.add(vec![-1.0, -1.0], Relation::Le, -3.0);
        let s = lp_solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-9);
        assert!(s.objective.abs() < 1e-9);
    }

    #[test]
    fn equality_and_negative_upper() {
        // x in (-inf, -1], y >= 0, x + y = 2, maximize x
        let mut lp = LpProblem::new(vec![1.0, 0.0]);
        lp.set_bounds(0, f64::NEG_INFINITY, -1.0);
        lp.add(vec![1.0, 1.0], Relation::Eq, 2.0);
        let s = lp_solve(&lp).unwrap();
        assert!((s.x[0] + 1.0).abs() < 1e-9);
        assert!((s.x[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn shape_errors() {
        let mut lp = LpProblem::new(vec![1.0, 2.0]);
        lp.add(vec![1.0], Relation::Le, 1.0);
        assert!(matches!(lp_solve(&lp), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            max_mass_transport(&[1.0], &[1.0], &[vec![true, true]]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn transport_examples() {
        assert!((max_mass_transport(&[0.5, 0.5], &[0.3, 0.7], &[vec![true; 2], vec![true; 2]]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(max_mass_transport(&[0.5, 0.5], &[1.0], &[vec![false], vec![false]]).unwrap(), 0.0);
        assert_eq!(max_mass_transport(&[1.0], &[1.0], &[vec![false]]).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_assignment_lp() {
        // 6x6 assignment polytope is highly degenerate
        let k = 6;
        let mut obj = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                obj[i * k + j] = ((i * 7 + j * 3) % 5) as f64;
            }
        }
        let mut lp = LpProblem::new(obj);
        for i in 0..k {
            let terms: Vec<_> = (0..k).map(|j| (i * k + j, 1.0)).collect();
            lp.add_sparse(&terms, Relation::Eq, 1.0);
            let terms: Vec<_> = (0..k).map(|j| (j * k + i, 1.0)).collect();
            lp.add_sparse(&terms, Relation::Eq, 1.0);
        }
        let s = lp_solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        // brute force over permutations
        fn best(k: usize, row: usize, used: &mut Vec<bool>, obj: &[f64]) -> f64 {
            if row == k {
                return 0.0;
            }
            let mut b = f64::NEG_INFINITY;
            for j in 0..k {
                if !used[j] {
                    used[j] = true;
                    b = b.max(obj[row * k + j] + best(k, row + 1, used, obj));
                    used[j] = false;
                }
            }
            b
        }
        let want = best(k, 0, &mut vec![false; k], &lp.objective);
        assert!((s.objective - want).abs() < 1e-9);
    }
}
