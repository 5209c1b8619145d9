//! Closed-form sample-complexity bound calculators.
//!
//! Everything here is a pure formula: the `d_nu` deviation metric, the
//! log-capacity approximations for Lipschitz-bounded networks,
//! `ln C <= 2W ln(k/eps)`, the optimal split of the accuracy budget
//! between the head class and the trunk class, and the resulting bounds
//! on examples-per-task (`m`) and tasks (`n`). Capacity terms are kept in
//! log space throughout; the raw capacities overflow `f64` for any
//! realistic weight count.

use crate::{Error, Result};

/// Deviation metric `|x - y| / (nu + x + y)` on the non-negative reals.
pub fn d_nu(x: f64, y: f64, nu: f64) -> Result<f64> {
    if x < 0.0 || y < 0.0 {
        return Err(Error::InvalidParameter(format!("d_nu needs non-negative arguments, got ({x}, {y})")));
    }
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
    }
    // `x + y` first keeps the evaluation bitwise symmetric in x and y.
    Ok((x - y).abs() / (nu + (x + y)))
}

/// A log-capacity value together with a flag marking the vacuous regime
/// (`eps >= k`, where the capacity bound drops to 1 and its log to 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LnCapacity {
    pub value: f64,
    pub vacuous: bool,
}

fn ln_capacity(eps: f64, weights: usize, k: f64) -> Result<LnCapacity> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!("capacity constant must be positive, got {k}")));
    }
    if weights == 0 {
        return Err(Error::InvalidParameter("weight count must be positive".into()));
    }
    if eps >= k {
        return Ok(LnCapacity { value: 0.0, vacuous: true });
    }
    Ok(LnCapacity { value: 2.0 * weights as f64 * (k / eps).ln(), vacuous: false })
}

/// Log of the capacity bound `[k/eps]^(2 W_G)` for the head class.
pub fn ln_capacity_g(eps: f64, w_g: usize, k: f64) -> Result<LnCapacity> {
    ln_capacity(eps, w_g, k)
}

/// Log of the capacity bound `[k'/eps]^(2 W_F)` for the trunk class.
pub fn ln_capacity_f(eps: f64, w_f: usize, k_prime: f64) -> Result<LnCapacity> {
    ln_capacity(eps, w_f, k_prime)
}

/// Splits an accuracy budget between the two capacity terms:
/// `eps1 = min(W_F, n W_G) / (W_F + n W_G) * budget`, with `eps2` the
/// remainder, so the sum is exactly the budget and `eps1 <= eps2`.
pub fn epsilon_split(w_f: usize, w_g: usize, n: usize, budget: f64) -> Result<(f64, f64)> {
    if !(budget > 0.0) {
        return Err(Error::InvalidParameter(format!("budget must be positive, got {budget}")));
    }
    if w_f == 0 || w_g == 0 || n == 0 {
        return Err(Error::InvalidParameter("weight counts and n must be positive".into()));
    }
    let wf = w_f as f64;
    let nwg = n as f64 * w_g as f64;
    let eps1 = wf.min(nwg) / (wf + nwg) * budget;
    // eps2 >= budget/2, so budget - eps2 is exact (Sterbenz) and the
    // re-derived eps1 makes the pair sum to the budget bitwise.
    let eps2 = budget - eps1;
    let eps1 = budget - eps2;
    Ok((eps1, eps2))
}

/// Inputs shared by all bound calculators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInputs {
    /// Upper bound `M` on the loss.
    pub loss_bound: f64,
    /// Deviation threshold in `(0, 1)`.
    pub alpha: f64,
    /// Metric parameter of `d_nu`.
    pub nu: f64,
    /// Confidence parameter in `(0, 1)`.
    pub delta: f64,
    /// Weight count of the trunk class F.
    pub w_f: usize,
    /// Weight count of one head class G.
    pub w_g: usize,
    /// Lipschitz capacity constant for G.
    pub k: f64,
    /// Lipschitz capacity constant for F.
    pub k_prime: f64,
    /// Number of tasks learnt jointly.
    pub n: usize,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.loss_bound > 0.0) {
            return Err(Error::InvalidParameter(format!("loss bound must be positive, got {}", self.loss_bound)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.nu > 0.0) {
            return Err(Error::InvalidParameter(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if self.w_f == 0 || self.w_g == 0 {
            return Err(Error::InvalidParameter("weight counts must be positive".into()));
        }
        if !(self.k > 0.0 && self.k_prime > 0.0) {
            return Err(Error::InvalidParameter("capacity constants must be positive".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        Ok(())
    }
}

/// All computed quantities for one set of inputs. `eps1`/`eps2` and the
/// `a`/`b` decomposition refer to the first bound (budget `alpha nu / 8`);
/// the second theorem's bounds use their own internal split of
/// `alpha nu / 16`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub eps1: f64,
    pub eps2: f64,
    pub ln_capacity_g: f64,
    pub ln_capacity_f: f64,
    pub m_bound_thm1: f64,
    pub n_bound_thm2: f64,
    pub m_bound_thm2: f64,
    /// Head-capacity part of the first bound: the per-task floor `a`.
    pub a_term: f64,
    /// Trunk-capacity part: divided by `n` in the first bound.
    pub b_term: f64,
    /// Set when any capacity was evaluated in its vacuous regime.
    pub vacuous: bool,
}

/// Evaluates every bound for one set of inputs.
pub fn bound_report(inp: &BoundInputs) -> Result<BoundReport> {
    inp.validate()?;
    let n = inp.n as f64;
    let ln4 = 4.0f64.ln();
    let ln8 = 8.0f64.ln();
    let ln_delta = inp.delta.ln();

    // First bound: budget alpha*nu/8, prefactor 8M/(alpha^2 nu).
    let budget1 = inp.alpha * inp.nu / 8.0;
    let (eps1, eps2) = epsilon_split(inp.w_f, inp.w_g, inp.n, budget1)?;
    let cap_g = ln_capacity_g(eps1, inp.w_g, inp.k)?;
    let cap_f = ln_capacity_f(eps2, inp.w_f, inp.k_prime)?;
    let pref1 = 8.0 * inp.loss_bound / (inp.alpha * inp.alpha * inp.nu);
    let a_term = pref1 * cap_g.value;
    let b_term = pref1 * (ln4 + cap_f.value - ln_delta);
    let m_bound_thm1 = a_term + b_term / n;

    // Second bound: budget alpha*nu/16, prefactor 32M/(alpha^2 nu). The
    // n-bound evaluates the trunk capacity at the full budget.
    let pref2 = 32.0 * inp.loss_bound / (inp.alpha * inp.alpha * inp.nu);
    let budget2 = inp.alpha * inp.nu / 16.0;
    let cap_f_full = ln_capacity_f(budget2, inp.w_f, inp.k_prime)?;
    let n_bound_thm2 = pref2 * (ln8 + cap_f_full.value - ln_delta);
    let (eps1b, eps2b) = epsilon_split(inp.w_f, inp.w_g, inp.n, budget2)?;
    let cap_g2 = ln_capacity_g(eps1b, inp.w_g, inp.k)?;
    let cap_f2 = ln_capacity_f(eps2b, inp.w_f, inp.k_prime)?;
    let m_bound_thm2 = pref2 * (cap_g2.value + (ln8 + cap_f2.value - ln_delta) / n);

    Ok(BoundReport {
        eps1,
        eps2,
        ln_capacity_g: cap_g.value,
        ln_capacity_f: cap_f.value,
        m_bound_thm1,
        n_bound_thm2,
        m_bound_thm2,
        a_term,
        b_term,
        vacuous: cap_g.vacuous || cap_f.vacuous || cap_f_full.vacuous || cap_g2.vacuous || cap_f2.vacuous,
    })
}

/// Examples-per-task bound for learning the n sampled tasks jointly.
pub fn m_bound_thm1(inp: &BoundInputs) -> Result<f64> {
    Ok(bound_report(inp)?.m_bound_thm1)
}

/// Task-count bound for the learnt representation to transfer to novel
/// tasks from the same environment.
pub fn n_bound_thm2(inp: &BoundInputs) -> Result<f64> {
    Ok(bound_report(inp)?.n_bound_thm2)
}

/// Examples-per-task bound accompanying [`n_bound_thm2`].
pub fn m_bound_thm2(inp: &BoundInputs) -> Result<f64> {
    Ok(bound_report(inp)?.m_bound_thm2)
}
