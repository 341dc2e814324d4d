//! Valuation models over item bundles. Bundles are bitmasks over item indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Items awarded to one bidder, bit `j` set when item `j` is included.
pub type AllocSet = u32;

pub const MAX_ITEMS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuationModel {
    Additive,
    UnitDemand,
    TopK(usize),
}

impl ValuationModel {
    /// Lipschitz constant with respect to ℓ1 on type vectors.
    pub fn lipschitz(&self) -> f64 {
        1.0
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if m == 0 || m > MAX_ITEMS {
            return Err(Error::InvalidModel(format!("{} items unsupported", m)));
        }
        if let ValuationModel::TopK(k) = *self {
            if k == 0 || k > m {
                return Err(Error::InvalidModel(format!("top_k {} outside [1, {}]", k, m)));
            }
        }
        Ok(())
    }
}

pub fn items_of(s: AllocSet) -> impl Iterator<Item = usize> {
    (0..32).filter(move |j| s >> j & 1 == 1)
}

pub fn value(model: ValuationModel, v: &[f64], s: AllocSet) -> f64 {
    if s == 0 {
        return 0.0;
    }
    match model {
        ValuationModel::Additive => items_of(s).map(|j| v[j]).sum(),
        ValuationModel::UnitDemand => items_of(s).map(|j| v[j]).fold(f64::NEG_INFINITY, f64::max),
        ValuationModel::TopK(k) => {
            let mut vals: Vec<f64> = items_of(s).map(|j| v[j]).collect();
            vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
            vals.iter().take(k).sum()
        }
    }
}

/// Checks |value(v,s) - value(v',s)| <= L·‖v - v'‖₁ over every bundle.
pub fn lipschitz_audit(model: ValuationModel, v: &[f64], w: &[f64]) -> Result<bool> {
    if v.len() != w.len() {
        return Err(Error::DimMismatch { left: v.len(), right: w.len() });
    }
    let m = v.len();
    if m > MAX_ITEMS {
        return Err(Error::DimensionTooLarge(m));
    }
    let bound = model.lipschitz() * crate::dist::l1(v, w) + 1e-12;
    Ok((0..(1u32 << m)).all(|s| (value(model, v, s) - value(model, w, s)).abs() <= bound))
}
