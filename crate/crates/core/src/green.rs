//! Periodic Green operator of an isotropic reference medium, in Fourier space.

use std::ops::{Add, Mul, Sub};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{frequency_grid, FrequencyGrid, HighestFrequencyMask, SpectralField};
use crate::tensor::{GridSpec, SymTensor};

/// Isotropic stiffness given by its Lamé coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropicModuli {
    pub lambda: f64,
    pub mu: f64,
}

impl IsotropicModuli {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() || !lambda.is_finite() {
            return Err(Error::InvalidModuli(format!("need finite mu > 0, got lambda={lambda}, mu={mu}")));
        }
        if !(3.0 * lambda + 2.0 * mu > 0.0) {
            return Err(Error::InvalidModuli(format!(
                "stiffness not positive definite: 3 lambda + 2 mu = {}",
                3.0 * lambda + 2.0 * mu
            )));
        }
        Ok(Self { lambda, mu })
    }

    pub fn from_young_poisson(young: f64, poisson: f64) -> Result<Self> {
        if !(young > 0.0) || !(-1.0 < poisson && poisson < 0.5) {
            return Err(Error::InvalidModuli(format!("need E > 0 and -1 < nu < 0.5, got E={young}, nu={poisson}")));
        }
        let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
        let mu = young / (2.0 * (1.0 + poisson));
        Self::new(lambda, mu)
    }

    pub fn young(&self) -> f64 {
        self.mu * (3.0 * self.lambda + 2.0 * self.mu) / (self.lambda + self.mu)
    }

    pub fn poisson(&self) -> f64 {
        self.lambda / (2.0 * (self.lambda + self.mu))
    }

    /// Bulk modulus `k = lambda + 2 mu / 3`.
    pub fn bulk(&self) -> f64 {
        self.lambda + 2.0 * self.mu / 3.0
    }

    /// `c : e`
    #[inline]
    pub fn stress(&self, e: &SymTensor) -> SymTensor {
        stiffness_apply(self, e)
    }

    /// `c^-1 : s`
    #[inline]
    pub fn strain(&self, s: &SymTensor) -> SymTensor {
        compliance_apply(self, s)
    }
}

/// `sigma = lambda tr(e) Id + 2 mu e`.
#[inline]
pub fn stiffness_apply(m: &IsotropicModuli, e: &SymTensor) -> SymTensor {
    let lt = m.lambda * e.trace();
    let tm = 2.0 * m.mu;
    SymTensor::new(lt + tm * e.c11, lt + tm * e.c22, lt + tm * e.c33, tm * e.c12)
}

/// Isotropic compliance, the inverse of [`stiffness_apply`].
#[inline]
pub fn compliance_apply(m: &IsotropicModuli, s: &SymTensor) -> SymTensor {
    SymTensor::from_array(compliance_generic(m, &s.to_array()))
}

fn compliance_generic<T>(m: &IsotropicModuli, s: &[T; 4]) -> [T; 4]
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    let vol = (s[0] + s[1] + s[2]) * (m.lambda / (3.0 * m.lambda + 2.0 * m.mu));
    let inv = 1.0 / (2.0 * m.mu);
    [(s[0] - vol) * inv, (s[1] - vol) * inv, (s[2] - vol) * inv, s[3] * inv]
}

/// In-plane acoustic tensor `K_ij = (lambda + mu) xi_i xi_j + mu |xi|^2 delta_ij`.
pub fn acoustic_tensor(m: &IsotropicModuli, xi: [f64; 2]) -> Result<[[f64; 2]; 2]> {
    let q = xi[0] * xi[0] + xi[1] * xi[1];
    if q == 0.0 {
        return Err(Error::ZeroFrequencyAcoustic);
    }
    let lm = m.lambda + m.mu;
    Ok([
        [lm * xi[0] * xi[0] + m.mu * q, lm * xi[0] * xi[1]],
        [lm * xi[1] * xi[0], lm * xi[1] * xi[1] + m.mu * q],
    ])
}

/// Green operator of the reference medium at one in-plane frequency.
#[derive(Clone, Copy, Debug)]
pub struct GammaHat {
    xi: [f64; 2],
    // 1 / (2 mu |xi|^2)
    a: f64,
    // (lambda + mu) / (mu (lambda + 2 mu) |xi|^4)
    b: f64,
}

impl GammaHat {
    /// Component `Gamma_ijkh` with indices in `0..3`; `xi_3 = 0`.
    pub fn component(&self, i: usize, j: usize, k: usize, h: usize) -> f64 {
        let x = [self.xi[0], self.xi[1], 0.0];
        let d = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
        // a/2 = 1 / (4 mu |xi|^2)
        0.5 * self.a
            * (d(k, i) * x[h] * x[j] + d(h, i) * x[k] * x[j] + d(k, j) * x[h] * x[i] + d(h, j) * x[k] * x[i])
            - self.b * x[i] * x[j] * x[k] * x[h]
    }

    /// `Gamma : tau` for real or complex component arrays (11, 22, 33, 12).
    #[inline]
    pub fn apply_to<T>(&self, tau: &[T; 4]) -> [T; 4]
    where
        T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
    {
        let [x1, x2] = self.xi;
        let v1 = tau[0] * x1 + tau[3] * x2;
        let v2 = tau[3] * x1 + tau[1] * x2;
        let w = v1 * x1 + v2 * x2;
        let zero = tau[0] * 0.0;
        [
            v1 * (2.0 * x1 * self.a) - w * (self.b * x1 * x1),
            v2 * (2.0 * x2 * self.a) - w * (self.b * x2 * x2),
            zero,
            (v2 * x1 + v1 * x2) * self.a - w * (self.b * x1 * x2),
        ]
    }

    pub fn apply(&self, tau: &SymTensor) -> SymTensor {
        SymTensor::from_array(self.apply_to(&tau.to_array()))
    }
}

pub fn gamma_hat(m: &IsotropicModuli, xi: [f64; 2]) -> Result<GammaHat> {
    let q = xi[0] * xi[0] + xi[1] * xi[1];
    if q == 0.0 {
        return Err(Error::ZeroFrequencyGreen);
    }
    Ok(GammaHat {
        xi,
        a: 1.0 / (2.0 * m.mu * q),
        b: (m.lambda + m.mu) / (m.mu * (m.lambda + 2.0 * m.mu) * q * q),
    })
}

/// Full `3x3x3x3` operator assembled from the inverse acoustic tensor:
/// `Gamma_khij = 1/4 (N_hi xi_j xi_k + N_ki xi_j xi_h + N_hj xi_i xi_k + N_kj xi_i xi_h)`.
///
/// The stiffness is contracted index by index and `K` is inverted
/// numerically; nothing is shared with [`gamma_hat`].
pub fn gamma_hat_assembled(m: &IsotropicModuli, xi: [f64; 2]) -> Result<[[[[f64; 3]; 3]; 3]; 3]> {
    if xi == [0.0, 0.0] {
        return Err(Error::ZeroFrequencyGreen);
    }
    let x = [xi[0], xi[1], 0.0];
    let d = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
    let c = |i: usize, j: usize, k: usize, h: usize| {
        m.lambda * d(i, j) * d(k, h) + m.mu * (d(i, k) * d(j, h) + d(i, h) * d(j, k))
    };
    let mut kmat = [[0.0; 3]; 3];
    for (i, row) in kmat.iter_mut().enumerate() {
        for (k, entry) in row.iter_mut().enumerate() {
            for j in 0..3 {
                for h in 0..3 {
                    *entry += c(i, j, k, h) * x[h] * x[j];
                }
            }
        }
    }
    let n = invert3(&kmat).ok_or_else(|| Error::Singular("acoustic tensor".into()))?;
    let mut g = [[[[0.0; 3]; 3]; 3]; 3];
    for k in 0..3 {
        for h in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    g[k][h][i][j] = 0.25
                        * (n[h][i] * x[j] * x[k]
                            + n[k][i] * x[j] * x[h]
                            + n[h][j] * x[i] * x[k]
                            + n[k][j] * x[i] * x[h]);
                }
            }
        }
    }
    Ok(g)
}

fn invert3(a: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < f64::MIN_POSITIVE {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            *entry = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / det;
        }
    }
    Some(inv)
}

/// Per-run context for applying the Green operator on a whole spectrum.
#[derive(Clone, Debug)]
pub struct GreenApplyPlan {
    pub reference: IsotropicModuli,
    pub freq: FrequencyGrid,
    pub mask: HighestFrequencyMask,
}

impl GreenApplyPlan {
    pub fn new(reference: IsotropicModuli, grid: &GridSpec) -> Self {
        Self { reference, freq: frequency_grid(grid), mask: HighestFrequencyMask::new(grid) }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.freq.grid
    }

    /// `-Gamma(xi) : sigma_hat(xi)` for `xi != 0`, with the compliance of
    /// the reference medium standing in on masked frequencies. The zero
    /// frequency is left to the caller.
    #[inline]
    pub fn increment_at(&self, k1: usize, k2: usize, sigma_hat: &[Complex64; 4]) -> [Complex64; 4] {
        let out = if self.mask.is_masked(k1, k2) {
            compliance_generic(&self.reference, sigma_hat)
        } else {
            // xi != 0 here: the zero frequency is never masked and callers skip it
            let xi = self.freq.xi(k1, k2);
            let q = xi[0] * xi[0] + xi[1] * xi[1];
            let g = GammaHat {
                xi,
                a: 1.0 / (2.0 * self.reference.mu * q),
                b: (self.reference.lambda + self.reference.mu)
                    / (self.reference.mu * (self.reference.lambda + 2.0 * self.reference.mu) * q * q),
            };
            g.apply_to(sigma_hat)
        };
        out.map(|z| -z)
    }
}

/// Applies `-Gamma` to a stress spectrum and pins the zero frequency to `e_macro`.
pub fn apply_green_field(plan: &GreenApplyPlan, sigma_hat: &SpectralField, e_macro: &SymTensor) -> Result<SpectralField> {
    plan.grid().check_same(sigma_hat.grid())?;
    let g = *plan.grid();
    let mut out = SpectralField::zeros(g);
    for k1 in 0..g.n1 {
        for k2 in 0..g.n2 {
            let v = if k1 == 0 && k2 == 0 {
                e_macro.to_array().map(|x| Complex64::new(x, 0.0))
            } else {
                plan.increment_at(k1, k2, &sigma_hat.get(k1, k2))
            };
            out.set(k1, k2, v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{forward, inverse};
    use crate::tensor::SymTensorField;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn moduli() -> impl Strategy<Value = IsotropicModuli> {
        (0.1f64..200.0, 0.1f64..200.0).prop_map(|(l, m)| IsotropicModuli::new(l, m).unwrap())
    }

    fn freq() -> impl Strategy<Value = [f64; 2]> {
        (-50.0f64..50.0, -50.0f64..50.0)
            .prop_filter("nonzero", |(a, b)| a.abs() + b.abs() > 1e-3)
            .prop_map(|(a, b)| [a, b])
    }

    #[test]
    fn moduli_conversions() {
        let m = IsotropicModuli::from_young_poisson(68.9e3, 0.35).unwrap();
        assert_relative_eq!(m.lambda, 59_543.2, max_relative = 1e-6);
        assert_relative_eq!(m.mu, 25_518.5, max_relative = 1e-5);
        assert_relative_eq!(m.young(), 68.9e3, max_relative = 1e-12);
        assert_relative_eq!(m.poisson(), 0.35, max_relative = 1e-12);
        assert!(IsotropicModuli::new(1.0, 0.0).is_err());
        assert!(IsotropicModuli::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn stiffness_examples() {
        let m = IsotropicModuli::new(1.0, 2.0).unwrap();
        assert_eq!(stiffness_apply(&m, &SymTensor::IDENTITY), SymTensor::IDENTITY * 7.0);
        assert_eq!(stiffness_apply(&m, &SymTensor::new(0.0, 0.0, 0.0, 0.3)), SymTensor::new(0.0, 0.0, 0.0, 1.2));
        assert_eq!(stiffness_apply(&m, &SymTensor::new(1.0, 0.0, 0.0, 0.0)), SymTensor::new(5.0, 1.0, 1.0, 0.0));
        let s = SymTensor::new(3.0, -1.0, 0.5, 2.0);
        assert!((stiffness_apply(&m, &compliance_apply(&m, &s)) - s).norm() < 1e-14);
    }

    #[test]
    fn acoustic_examples() {
        let m = IsotropicModuli::new(1.0, 1.0).unwrap();
        assert_eq!(acoustic_tensor(&m, [1.0, 0.0]).unwrap(), [[3.0, 0.0], [0.0, 1.0]]);
        assert_eq!(acoustic_tensor(&m, [0.0, 1.0]).unwrap(), [[1.0, 0.0], [0.0, 3.0]]);
        assert!(matches!(acoustic_tensor(&m, [0.0, 0.0]), Err(Error::ZeroFrequencyAcoustic)));
        let m = IsotropicModuli::new(2.5, 1.5).unwrap();
        let xi = [0.7, -1.3];
        let k = acoustic_tensor(&m, xi).unwrap();
        let q: f64 = xi[0] * xi[0] + xi[1] * xi[1];
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        assert_relative_eq!(det, m.mu * (m.lambda + 2.0 * m.mu) * q * q, max_relative = 1e-13);
    }

    #[test]
    fn gamma_examples() {
        let m = IsotropicModuli::new(3.0, 2.0).unwrap();
        let g = gamma_hat(&m, [1.0, 0.0]).unwrap();
        assert_relative_eq!(g.component(0, 0, 0, 0), 1.0 / (m.lambda + 2.0 * m.mu), max_relative = 1e-14);
        let g = gamma_hat(&m, [0.3, -0.8]).unwrap();
        assert_eq!(g.component(2, 2, 2, 2), 0.0);
        assert!(matches!(gamma_hat(&m, [0.0, 0.0]), Err(Error::ZeroFrequencyGreen)));
    }

    proptest! {
        #[test]
        fn gamma_symmetries(m in moduli(), xi in freq()) {
            let g = gamma_hat(&m, xi).unwrap();
            let scale = 1.0 / m.mu.min(m.lambda + 2.0 * m.mu);
            for i in 0..3 { for j in 0..3 { for k in 0..3 { for h in 0..3 {
                let v = g.component(i, j, k, h);
                prop_assert!((v - g.component(j, i, k, h)).abs() <= 1e-14 * scale);
                prop_assert!((v - g.component(i, j, h, k)).abs() <= 1e-14 * scale);
                prop_assert!((v - g.component(k, h, i, j)).abs() <= 1e-14 * scale);
                if (i == 2 && j == 2) || (k == 2 && h == 2) {
                    prop_assert!(v == 0.0);
                }
            }}}}
        }

        #[test]
        fn closed_form_matches_assembly(m in moduli(), xi in freq()) {
            let g = gamma_hat(&m, xi).unwrap();
            let a = gamma_hat_assembled(&m, xi).unwrap();
            let scale = 1.0 / m.mu.min(m.lambda + 2.0 * m.mu);
            for i in 0..3 { for j in 0..3 { for k in 0..3 { for h in 0..3 {
                prop_assert!((g.component(i, j, k, h) - a[i][j][k][h]).abs() <= 1e-12 * scale);
            }}}}
        }

        #[test]
        fn fast_apply_matches_components(m in moduli(), xi in freq(), tau in prop::array::uniform4(-5.0f64..5.0)) {
            let g = gamma_hat(&m, xi).unwrap();
            let t = SymTensor::from_array(tau);
            let fast = g.apply(&t);
            let full = |i: usize, j: usize| {
                let tt = [[t.c11, t.c12, 0.0], [t.c12, t.c22, 0.0], [0.0, 0.0, t.c33]];
                let mut s = 0.0;
                for k in 0..3 { for h in 0..3 { s += g.component(i, j, k, h) * tt[k][h]; } }
                s
            };
            let scale = t.norm() / m.mu.min(m.lambda + 2.0 * m.mu) + 1e-300;
            prop_assert!((fast.c11 - full(0, 0)).abs() <= 1e-12 * scale);
            prop_assert!((fast.c22 - full(1, 1)).abs() <= 1e-12 * scale);
            prop_assert!((fast.c12 - full(0, 1)).abs() <= 1e-12 * scale);
            prop_assert!(fast.c33 == 0.0);
        }

        #[test]
        fn projector_identity(m in moduli(), xi in freq(), u in prop::array::uniform4(-1.0f64..1.0)) {
            // eps_kh = (i/2)(xi_h u_k + xi_k u_h) for a complex displacement amplitude
            let uk = [Complex64::new(u[0], u[1]), Complex64::new(u[2], u[3])];
            let half_i = Complex64::new(0.0, 0.5);
            let eps = [
                half_i * (uk[0] * xi[0] * 2.0),
                half_i * (uk[1] * xi[1] * 2.0),
                Complex64::new(0.0, 0.0),
                half_i * (uk[0] * xi[1] + uk[1] * xi[0]),
            ];
            let re = stiffness_apply(&m, &SymTensor::from_array(eps.map(|z| z.re)));
            let im = stiffness_apply(&m, &SymTensor::from_array(eps.map(|z| z.im)));
            let sig: [Complex64; 4] = std::array::from_fn(|c| Complex64::new(re.to_array()[c], im.to_array()[c]));
            let back = gamma_hat(&m, xi).unwrap().apply_to(&sig);
            let norm = eps.iter().map(|z| z.norm()).fold(0.0, f64::max) + 1e-300;
            for c in 0..4 {
                prop_assert!((back[c] - eps[c]).norm() <= 1e-10 * norm);
            }
        }
    }

    #[test]
    fn zero_stress_gives_macro_strain_only() {
        let g = GridSpec::square(8).unwrap();
        let plan = GreenApplyPlan::new(IsotropicModuli::new(2.0, 1.0).unwrap(), &g);
        let e = SymTensor::new(0.1, -0.2, 0.0, 0.05);
        let out = apply_green_field(&plan, &SpectralField::zeros(g), &e).unwrap();
        for k1 in 0..8 {
            for k2 in 0..8 {
                let v = out.get(k1, k2);
                if k1 == 0 && k2 == 0 {
                    assert_eq!(v.map(|z| z.re), e.to_array());
                } else {
                    assert!(v.iter().all(|z| z.norm() == 0.0));
                }
            }
        }
        let other = GridSpec::square(4).unwrap();
        assert!(apply_green_field(&plan, &SpectralField::zeros(other), &e).is_err());
    }

    #[test]
    fn compatible_strain_is_recovered() {
        // strain of a smooth periodic displacement, sampled on the grid
        let g = GridSpec::new(16, 12, 1.0, 1.3).unwrap();
        let m = IsotropicModuli::new(4.0, 1.5).unwrap();
        let plan = GreenApplyPlan::new(m, &g);
        let tau = std::f64::consts::TAU;
        let eps = SymTensorField::from_fn(g, |i1, i2| {
            let (x1, x2) = g.coord(i1, i2);
            let (p1, p2) = (tau * x1 / g.t1, tau * 2.0 * x2 / g.t2);
            // u1 = sin(p1 + p2), u2 = cos(p1) sin(p2)
            let e11 = (p1 + p2).cos() * tau / g.t1;
            let e22 = p1.cos() * p2.cos() * tau * 2.0 / g.t2;
            let e12 = 0.5 * ((p1 + p2).cos() * tau * 2.0 / g.t2 - p1.sin() * p2.sin() * tau / g.t1);
            SymTensor::new(e11, e22, 0.0, e12)
        });
        let sig = eps.map(|e| stiffness_apply(&m, e));
        let e_macro = SymTensor::new(0.01, 0.0, 0.0, 0.0);
        let out = apply_green_field(&plan, &forward(&sig), &e_macro).unwrap();
        let eh = forward(&eps);
        for k1 in 0..g.n1 {
            for k2 in 0..g.n2 {
                if k1 == 0 && k2 == 0 {
                    continue;
                }
                let (o, e) = (out.get(k1, k2), eh.get(k1, k2));
                for c in 0..4 {
                    assert!((o[c] + e[c]).norm() < 1e-12, "{k1},{k2}");
                }
            }
        }
        // the output spectrum is Hermitian and inverts to a real field
        assert!(inverse(&out).is_ok());
    }

    #[test]
    fn masked_frequency_inverts_stiffness() {
        let g = GridSpec::square(8).unwrap();
        let m = IsotropicModuli::new(4.0, 1.5).unwrap();
        let plan = GreenApplyPlan::new(m, &g);
        let a = SymTensor::new(0.3, -0.1, 0.2, 0.4);
        let s = stiffness_apply(&m, &a).to_array().map(|x| Complex64::new(x, 0.0));
        let out = plan.increment_at(4, 1, &s);
        for c in 0..4 {
            assert!((out[c].re + a.to_array()[c]).abs() < 1e-14);
        }
    }
}
