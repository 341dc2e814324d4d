//! Finite-alphabet Bayesian networks on a known DAG.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SampleSet, ENUM_CAP};
use crate::dist::{sample_index, tv_distance, DiscreteDist};
use crate::error::{Error, Result};

/// `cpts[v][c][s]` is P(X_v = alphabet[s] | parents in configuration c), where c enumerates the
/// parents' symbol indices in mixed radix, first parent most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesNet {
    pub parents: Vec<Vec<usize>>,
    pub alphabet: Vec<f64>,
    pub cpts: Vec<Vec<Vec<f64>>>,
}

impl BayesNet {
    pub fn new(parents: Vec<Vec<usize>>, alphabet: Vec<f64>, cpts: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let bn = BayesNet { parents, alphabet, cpts };
        bn.validate()?;
        Ok(bn)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let bn: BayesNet = serde_json::from_str(s).map_err(|e| Error::InvalidModel(e.to_string()))?;
        bn.validate()?;
        Ok(bn)
    }

    pub fn nodes(&self) -> usize {
        self.parents.len()
    }

    pub fn max_in_degree(&self) -> usize {
        self.parents.iter().map(|p| p.len()).max().unwrap_or(0)
    }

    pub fn configs(&self, v: usize) -> usize {
        self.alphabet.len().pow(self.parents[v].len() as u32)
    }

    fn validate(&self) -> Result<()> {
        let (n, k) = (self.nodes(), self.alphabet.len());
        if n == 0 || k == 0 {
            return Err(Error::InvalidModel("empty network or alphabet".into()));
        }
        if self.cpts.len() != n {
            return Err(Error::ShapeMismatch(format!("{} nodes but {} tables", n, self.cpts.len())));
        }
        if self.parents.iter().flatten().any(|&p| p >= n) {
            return Err(Error::InvalidModel("parent index out of range".into()));
        }
        self.topo_order()?;
        for v in 0..n {
            if self.cpts[v].len() != self.configs(v) {
                return Err(Error::ShapeMismatch(format!("node {} needs {} rows", v, self.configs(v))));
            }
            for row in &self.cpts[v] {
                if row.len() != k || row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidDistribution(format!("bad conditional row at node {}", v)));
                }
            }
        }
        Ok(())
    }

    /// Kahn's algorithm; ties go to the smallest node index.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes();
        let mut indeg: Vec<usize> = self.parents.iter().map(|p| p.len()).collect();
        let mut order = Vec::with_capacity(n);
        let mut done = vec![false; n];
        while order.len() < n {
            let Some(v) = (0..n).find(|&v| !done[v] && indeg[v] == 0) else {
                return Err(Error::InvalidModel("parent graph has a cycle".into()));
            };
            done[v] = true;
            order.push(v);
            for (w, ps) in self.parents.iter().enumerate() {
                indeg[w] -= ps.iter().filter(|&&p| p == v).count();
            }
        }
        Ok(order)
    }

    fn config_of(&self, v: usize, sym: &[usize]) -> usize {
        self.parents[v].iter().fold(0, |c, &p| c * self.alphabet.len() + sym[p])
    }

    fn prob_of_symbols(&self, sym: &[usize]) -> f64 {
        (0..self.nodes()).map(|v| self.cpts[v][self.config_of(v, sym)][sym[v]]).product()
    }

    fn symbol(&self, v: usize, x: f64) -> Result<usize> {
        self.alphabet
            .iter()
            .position(|&a| (a - x).abs() <= 1e-9)
            .ok_or(Error::AlphabetViolation { node: v, value: x })
    }
}

fn enumerate(k: usize, n: usize) -> Result<Vec<Vec<usize>>> {
    let size = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if size > ENUM_CAP {
        return Err(Error::TooLarge(size));
    }
    let mut out = Vec::with_capacity(size as usize);
    crate::mech::for_each_index(&vec![k; n], |idx| out.push(idx.to_vec()));
    Ok(out)
}

pub(super) fn joint_from<F: Fn(&[usize]) -> f64>(alphabet: &[f64], n: usize, f: F) -> Result<DiscreteDist> {
    let all = enumerate(alphabet.len(), n)?;
    let pts = all.iter().map(|s| s.iter().map(|&i| alphabet[i]).collect()).collect();
    let ws = all.iter().map(|s| f(s)).collect();
    DiscreteDist::from_weights(n, pts, ws)
}

pub fn bn_joint(bn: &BayesNet) -> Result<DiscreteDist> {
    joint_from(&bn.alphabet, bn.nodes(), |s| bn.prob_of_symbols(s))
}

pub fn bn_sample<R: Rng + ?Sized>(bn: &BayesNet, rng: &mut R) -> Vec<f64> {
    let order = bn.topo_order().expect("validated network");
    let mut sym = vec![0usize; bn.nodes()];
    let idx: Vec<Vec<f64>> = (0..bn.alphabet.len()).map(|i| vec![i as f64]).collect();
    for v in order {
        let row = &bn.cpts[v][bn.config_of(v, &sym)];
        let d = DiscreteDist::from_weights(1, idx.clone(), row.clone()).expect("row has mass");
        sym[v] = d.support()[sample_index(&d, rng)][0] as usize;
    }
    sym.iter().map(|&s| bn.alphabet[s]).collect()
}

/// Empirical conditional frequencies; parent configurations never seen get a uniform row.
pub fn bn_learn_known_dag(samples: &SampleSet, parents: &[Vec<usize>], alphabet: &[f64]) -> Result<BayesNet> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if samples.dim != parents.len() {
        return Err(Error::DimMismatch { left: parents.len(), right: samples.dim });
    }
    let k = alphabet.len();
    let shell = BayesNet {
        parents: parents.to_vec(),
        alphabet: alphabet.to_vec(),
        cpts: (0..parents.len()).map(|v| vec![vec![1.0 / k as f64; k]; k.pow(parents[v].len() as u32)]).collect(),
    };
    shell.validate()?;
    let mut counts: Vec<Vec<Vec<f64>>> =
        shell.cpts.iter().map(|t| t.iter().map(|r| vec![0.0; r.len()]).collect()).collect();
    for row in &samples.rows {
        let sym: Vec<usize> = row.iter().enumerate().map(|(v, &x)| shell.symbol(v, x)).collect::<Result<_>>()?;
        for v in 0..shell.nodes() {
            counts[v][shell.config_of(v, &sym)][sym[v]] += 1.0;
        }
    }
    let cpts = counts
        .into_iter()
        .map(|t| {
            t.into_iter()
                .map(|r| {
                    let tot: f64 = r.iter().sum();
                    if tot > 0.0 {
                        r.iter().map(|c| c / tot).collect()
                    } else {
                        vec![1.0 / k as f64; k]
                    }
                })
                .collect()
        })
        .collect();
    Ok(BayesNet { cpts, ..shell })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridCheck {
    /// |V| times the largest conditional-row TV.
    pub lhs: f64,
    /// Exact joint TV.
    pub rhs: f64,
    pub pass: bool,
}

pub fn bn_hybrid_check(p: &BayesNet, q: &BayesNet) -> Result<HybridCheck> {
    if p.parents != q.parents || p.alphabet != q.alphabet {
        return Err(Error::StructureMismatch);
    }
    let mut worst: f64 = 0.0;
    for (tp, tq) in p.cpts.iter().zip(&q.cpts) {
        for (rp, rq) in tp.iter().zip(tq) {
            worst = worst.max(0.5 * rp.iter().zip(rq).map(|(a, b)| (a - b).abs()).sum::<f64>());
        }
    }
    let lhs = p.nodes() as f64 * worst;
    let rhs = tv_distance(&bn_joint(p)?, &bn_joint(q)?)?;
    Ok(HybridCheck { lhs, rhs, pass: rhs <= lhs + 1e-9 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn copy_chain() -> BayesNet {
        BayesNet::new(
            vec![vec![], vec![0]],
            vec![0.0, 1.0],
            vec![vec![vec![0.3, 0.7]], vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
        )
        .unwrap()
    }

    #[test]
    fn uniform_and_diagonal() {
        let u = BayesNet::new(vec![vec![], vec![]], vec![0.0, 1.0], vec![vec![vec![0.5, 0.5]]; 2]).unwrap();
        let j = bn_joint(&u).unwrap();
        assert_eq!(j.len(), 4);
        assert!(j.probs().iter().all(|&p| (p - 0.25).abs() < 1e-12));
        let j = bn_joint(&copy_chain()).unwrap();
        assert!(j.support().iter().all(|x| x[0] == x[1]));
        assert!((j.prob_of(&[1.0, 1.0]) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn learns_copy_chain() {
        let bn = copy_chain();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = (0..100).map(|_| bn_sample(&bn, &mut rng)).collect();
        let s = SampleSet::new(2, rows).unwrap();
        let l = bn_learn_known_dag(&s, &bn.parents, &bn.alphabet).unwrap();
        assert_eq!(l.cpts[1], bn.cpts[1]);
    }

    #[test]
    fn unseen_rows_are_uniform_and_alphabet_checked() {
        let s = SampleSet::new(2, vec![vec![0.0, 0.0]; 3]).unwrap();
        let l = bn_learn_known_dag(&s, &[vec![], vec![0]], &[0.0, 1.0]).unwrap();
        assert_eq!(l.cpts[1][1], vec![0.5, 0.5]);
        let s = SampleSet::new(2, vec![vec![0.0, 0.5]]).unwrap();
        assert!(matches!(
            bn_learn_known_dag(&s, &[vec![], vec![0]], &[0.0, 1.0]),
            Err(Error::AlphabetViolation { node: 1, .. })
        ));
    }

    #[test]
    fn rejects_cycles_and_bad_rows() {
        assert!(BayesNet::new(vec![vec![1], vec![0]], vec![0.0, 1.0], vec![vec![vec![0.5, 0.5]; 2]; 2]).is_err());
        assert!(BayesNet::new(vec![vec![]], vec![0.0, 1.0], vec![vec![vec![0.5, 0.6]]]).is_err());
    }

    #[test]
    fn hybrid_examples() {
        let p = copy_chain();
        let r = bn_hybrid_check(&p, &p).unwrap();
        assert_eq!((r.lhs, r.rhs, r.pass), (0.0, 0.0, true));
        let mut q = p.clone();
        q.cpts[1][0] = vec![0.95, 0.05];
        let r = bn_hybrid_check(&p, &q).unwrap();
        assert!((r.lhs - 0.1).abs() < 1e-12 && r.pass);
        let other = BayesNet::new(vec![vec![], vec![]], vec![0.0, 1.0], vec![vec![vec![0.5, 0.5]]; 2]).unwrap();
        assert!(matches!(bn_hybrid_check(&p, &other), Err(Error::StructureMismatch)));
    }
}
