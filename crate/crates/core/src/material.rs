//! Pointwise constitutive laws: linear elasticity and J2 flow theory with
//! isotropic hardening, integrated by radial return.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{stiffness_apply, IsotropicModuli};
use crate::tensor::SymTensor;

/// Yield stress as a function of cumulated plastic strain, `sigma0(p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum HardeningCurve {
    Perfect { sigma0: f64 },
    Linear { sigma0: f64, modulus: f64 },
    /// Piecewise-linear `(p, sigma0(p))` knots starting at `p = 0`.
    Tabulated { points: Vec<(f64, f64)> },
}

impl HardeningCurve {
    pub fn perfect(sigma0: f64) -> Result<Self> {
        Self::Perfect { sigma0 }.validated()
    }

    pub fn linear(sigma0: f64, modulus: f64) -> Result<Self> {
        Self::Linear { sigma0, modulus }.validated()
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::Tabulated { points }.validated()
    }

    /// Checks positivity of the initial yield stress and the absence of softening.
    pub fn validated(self) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidHardening(m));
        match &self {
            Self::Perfect { sigma0 } | Self::Linear { sigma0, .. } if !(*sigma0 > 0.0 && sigma0.is_finite()) => {
                return bad(format!("initial yield stress must be positive, got {sigma0}"));
            }
            Self::Linear { modulus, .. } if !(*modulus >= 0.0 && modulus.is_finite()) => {
                return bad(format!("softening is not supported: hardening modulus {modulus}"));
            }
            Self::Tabulated { points } => {
                if points.len() < 2 {
                    return bad("a hardening table needs at least two knots".into());
                }
                if points[0].0 != 0.0 {
                    return bad(format!("a hardening table must start at p = 0, got {}", points[0].0));
                }
                if !(points[0].1 > 0.0) {
                    return bad(format!("initial yield stress must be positive, got {}", points[0].1));
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return bad(format!("knots must be strictly increasing in p: {} then {}", w[0].0, w[1].0));
                    }
                    if w[1].1 < w[0].1 {
                        return bad(format!("softening is not supported: sigma0 drops from {} to {}", w[0].1, w[1].1));
                    }
                }
            }
            _ => {}
        }
        Ok(self)
    }

    pub fn initial_yield(&self) -> f64 {
        self.sigma0(0.0)
    }

    pub fn sigma0(&self, p: f64) -> f64 {
        match self {
            Self::Perfect { sigma0 } => *sigma0,
            Self::Linear { sigma0, modulus } => sigma0 + modulus * p,
            Self::Tabulated { points } => {
                let l = segment(points, |q| q.0, p);
                let (p0, s0) = points[l];
                let (p1, s1) = points[l + 1];
                s0 + (p - p0) * (s1 - s0) / (p1 - p0)
            }
        }
    }
}

/// Index `l` of the segment `[x_l, x_{l+1}]` holding `x`; the first or last
/// segment when `x` is out of range.
fn segment<T>(pts: &[T], key: impl Fn(&T) -> f64, x: f64) -> usize {
    let last = pts.len() - 2;
    match pts.iter().position(|q| key(q) > x) {
        Some(0) => 0,
        Some(i) => (i - 1).min(last),
        None => last,
    }
}

/// Result of inverting `h(p) = sigma0(p) + 3 mu p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HardeningInverse {
    pub p: f64,
    /// Set when a tabulated curve had to be extended past its last knot.
    pub extrapolated: bool,
}

/// Solves `sigma0(p) + 3 mu p = k` for `p >= 0`.
pub fn h_inverse(curve: &HardeningCurve, mu: f64, k: f64) -> Result<HardeningInverse> {
    let s0 = curve.initial_yield();
    if k < s0 {
        return Err(Error::BelowInitialYield { value: k, sigma0: s0 });
    }
    let exact = |p| HardeningInverse { p, extrapolated: false };
    match curve {
        HardeningCurve::Perfect { sigma0 } => Ok(exact((k - sigma0) / (3.0 * mu))),
        HardeningCurve::Linear { sigma0, modulus } => Ok(exact((k - sigma0) / (modulus + 3.0 * mu))),
        HardeningCurve::Tabulated { points } => {
            let h: Vec<(f64, f64)> = points.iter().map(|&(p, s)| (p, s + 3.0 * mu * p)).collect();
            let l = segment(&h, |q| q.1, k);
            let (p0, h0) = h[l];
            let (p1, h1) = h[l + 1];
            Ok(HardeningInverse { p: p0 + (k - h0) * (p1 - p0) / (h1 - h0), extrapolated: k > h[h.len() - 1].1 })
        }
    }
}

/// Constitutive law of one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialLaw {
    pub elastic: IsotropicModuli,
    pub plastic: Option<HardeningCurve>,
}

impl MaterialLaw {
    pub fn elastic(moduli: IsotropicModuli) -> Self {
        Self { elastic: moduli, plastic: None }
    }

    pub fn plastic(moduli: IsotropicModuli, curve: HardeningCurve) -> Self {
        Self { elastic: moduli, plastic: Some(curve) }
    }

    pub fn is_elastic(&self) -> bool {
        self.plastic.is_none()
    }
}

/// Strain, stress and cumulated plastic strain at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointState {
    pub strain: SymTensor,
    pub stress: SymTensor,
    pub p: f64,
}

/// One implicit J2 step from the converged state `state_n` to the total strain `strain_np1`.
pub fn radial_return(
    moduli: &IsotropicModuli,
    curve: &HardeningCurve,
    state_n: &PointState,
    strain_np1: &SymTensor,
) -> Result<PointState> {
    radial_return_flagged(moduli, curve, state_n, strain_np1).map(|(s, _)| s)
}

/// As [`radial_return`], also reporting whether a tabulated curve was extrapolated.
pub fn radial_return_flagged(
    moduli: &IsotropicModuli,
    curve: &HardeningCurve,
    state_n: &PointState,
    strain_np1: &SymTensor,
) -> Result<(PointState, bool)> {
    let mu = moduli.mu;
    let d_eps = *strain_np1 - state_n.strain;
    let trial = state_n.stress + stiffness_apply(moduli, &d_eps);
    let s_trial = trial.deviator();
    let eq_trial = s_trial.von_mises();

    let (p, s, extrapolated) = if eq_trial < curve.sigma0(state_n.p) {
        (state_n.p, s_trial, false)
    } else {
        let inv = h_inverse(curve, mu, eq_trial + 3.0 * mu * state_n.p)?;
        // eq_trial >= sigma0 > 0 on this branch
        (inv.p, s_trial * (curve.sigma0(inv.p) / eq_trial), inv.extrapolated)
    };
    let tr = state_n.stress.trace() + 3.0 * moduli.bulk() * d_eps.trace();
    Ok((PointState { strain: *strain_np1, stress: s + SymTensor::IDENTITY * (tr / 3.0), p }, extrapolated))
}

/// Stress update for either kind of law; elastic laws use the total form.
pub fn evaluate_stress(law: &MaterialLaw, state_n: &PointState, strain_np1: &SymTensor) -> Result<PointState> {
    evaluate_stress_flagged(law, state_n, strain_np1).map(|(s, _)| s)
}

/// As [`evaluate_stress`], also reporting hardening-table extrapolation.
pub fn evaluate_stress_flagged(
    law: &MaterialLaw,
    state_n: &PointState,
    strain_np1: &SymTensor,
) -> Result<(PointState, bool)> {
    match &law.plastic {
        None => Ok((
            PointState { strain: *strain_np1, stress: stiffness_apply(&law.elastic, strain_np1), p: state_n.p },
            false,
        )),
        Some(curve) => radial_return_flagged(&law.elastic, curve, state_n, strain_np1),
    }
}

/// Equivalent strain `sqrt(2/3 e:e)` of the strain deviator.
pub fn equivalent_strain(e: &SymTensor) -> f64 {
    let d = e.deviator();
    (2.0 / 3.0 * d.ddot(&d)).sqrt()
}
