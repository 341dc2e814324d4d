//! Exact IC for a single bidder: offer the ε-IC mechanism's outcomes as a menu at discounted
//! prices and let the bidder pick.

use crate::error::{Error, Result};
use crate::mech::{utility, Bid, Mechanism, Outcome, TabularMechanism};
use crate::valuation::ValuationModel;

pub struct NisanMechanism {
    model: ValuationModel,
    menu: Vec<Outcome>,
}

pub fn nisan_ic_transform(m: &TabularMechanism, eps: f64) -> Result<NisanMechanism> {
    let n = m.typespace().n();
    if n != 1 {
        return Err(Error::MultiBidderUnsupported(n));
    }
    if !(eps >= 0.0 && eps <= 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    let scale = 1.0 - eps.sqrt();
    let mut menu = Vec::with_capacity(m.n_profiles());
    for t in 0..m.n_profiles() {
        let mut o = m.outcome_idx(&[t]);
        o.payments[0] *= scale;
        menu.push(o);
    }
    Ok(NisanMechanism { model: m.model, menu })
}

/// (1 - √ε)(rev - √ε)
pub fn nisan_revenue_bound(rev: f64, eps: f64) -> f64 {
    (1.0 - eps.sqrt()) * (rev - eps.sqrt())
}

impl NisanMechanism {
    pub fn menu(&self) -> &[Outcome] {
        &self.menu
    }
}

impl Mechanism for NisanMechanism {
    fn n(&self) -> usize {
        1
    }

    fn model(&self) -> ValuationModel {
        self.model
    }

    fn outcome(&self, bids: &[Bid<'_>]) -> Outcome {
        let Some(v) = bids[0] else { return Outcome::zero(1) };
        let mut best: Option<(&Outcome, f64)> = None;
        for o in &self.menu {
            let u = utility(self.model, v, o, 0);
            let better = match best {
                None => true,
                // ties go to the seller, which is what makes an already IC input reproduce itself
                Some((b, bu)) => u > bu + 1e-12 || (u >= bu - 1e-12 && o.payments[0] > b.payments[0]),
            };
            if better {
                best = Some((o, u));
            }
        }
        // walking away is the fallback only when every entry hurts
        match best {
            Some((o, u)) if u >= -1e-12 => o.clone(),
            _ => Outcome::zero(1),
        }
    }
}
