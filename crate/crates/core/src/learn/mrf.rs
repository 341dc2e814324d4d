//! Markov random fields with [0,1]-valued potentials.

use serde::{Deserialize, Serialize};

use super::bayes::joint_from;
use crate::dist::DiscreteDist;
use crate::error::{Error, Result};

/// Potential over `scope`; `table` is indexed by the scope's symbol indices in mixed radix,
/// first node most significant. Node potentials are factors with a single-node scope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub scope: Vec<usize>,
    pub table: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mrf {
    pub nodes: usize,
    pub alphabet: Vec<f64>,
    pub factors: Vec<Factor>,
}

impl Mrf {
    pub fn new(nodes: usize, alphabet: Vec<f64>, factors: Vec<Factor>) -> Result<Self> {
        let m = Mrf { nodes, alphabet, factors };
        m.validate()?;
        Ok(m)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: Mrf = serde_json::from_str(s).map_err(|e| Error::InvalidModel(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    /// Largest factor scope.
    pub fn degree(&self) -> usize {
        self.factors.iter().map(|f| f.scope.len()).max().unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        let k = self.alphabet.len();
        if self.nodes == 0 || k == 0 {
            return Err(Error::InvalidModel("empty field or alphabet".into()));
        }
        for f in &self.factors {
            if f.scope.is_empty() || f.scope.iter().any(|&v| v >= self.nodes) {
                return Err(Error::InvalidModel(format!("bad scope {:?}", f.scope)));
            }
            if f.table.len() != k.pow(f.scope.len() as u32) {
                return Err(Error::ShapeMismatch(format!("scope {:?} needs {} entries", f.scope, k.pow(f.scope.len() as u32))));
            }
            if f.table.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::InvalidModel("potentials must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    fn weight(&self, sym: &[usize]) -> f64 {
        let k = self.alphabet.len();
        self.factors
            .iter()
            .map(|f| f.table[f.scope.iter().fold(0, |c, &v| c * k + sym[v])])
            .product()
    }
}

/// Normalized product of potentials; an identically zero product gives the uniform law.
pub fn mrf_joint(mrf: &Mrf) -> Result<DiscreteDist> {
    match joint_from(&mrf.alphabet, mrf.nodes, |s| mrf.weight(s)) {
        Err(Error::InvalidDistribution(_)) => joint_from(&mrf.alphabet, mrf.nodes, |_| 1.0),
        r => r,
    }
}

/// 1 + ε/(2·max(n^d, |factors|)). Counting the factors keeps the bound valid when a field
/// repeats scopes.
pub fn mrf_rounding_base(mrf: &Mrf, eps: f64) -> f64 {
    let nd = (mrf.nodes as f64).powi(mrf.degree() as i32);
    1.0 + eps / (2.0 * nd.max(mrf.factors.len() as f64))
}

/// Snaps every potential down to a power of the rounding base; zeros stay zero.
pub fn mrf_round_potentials(mrf: &Mrf, eps: f64) -> Result<Mrf> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    let lb = mrf_rounding_base(mrf, eps).ln();
    let snap = |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            let k = (x.ln() / lb + 1e-9).floor();
            (k * lb).exp().min(x)
        }
    };
    let factors = mrf
        .factors
        .iter()
        .map(|f| Factor { scope: f.scope.clone(), table: f.table.iter().map(|&x| snap(x)).collect() })
        .collect();
    Ok(Mrf { nodes: mrf.nodes, alphabet: mrf.alphabet.clone(), factors })
}
