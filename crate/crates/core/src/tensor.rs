//! Symmetric tensors and pixel fields under generalized plane strain.
//!
//! Only the four independent components (11, 22, 33, 12) are stored, as
//! plain tensor components. The factor 2 carried by the shear terms appears
//! in [`SymTensor::ddot`] and in the stiffness application, nowhere else.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regular periodic pixel grid: `n1 x n2` pixels over a `t1 x t2` cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
    pub t1: f64,
    pub t2: f64,
}

impl GridSpec {
    pub fn new(n1: usize, n2: usize, t1: f64, t2: f64) -> Result<Self> {
        if n1 < 2 || n2 < 2 {
            return Err(Error::InvalidGrid(format!("pixel counts must be >= 2, got {n1}x{n2}")));
        }
        if !(t1 > 0.0 && t2 > 0.0) || !t1.is_finite() || !t2.is_finite() {
            return Err(Error::InvalidGrid(format!("periods must be positive, got {t1}x{t2}")));
        }
        Ok(Self { n1, n2, t1, t2 })
    }

    /// Square `n x n` grid on the unit cell.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major storage index of pixel `(i1, i2)` (zero-based).
    #[inline]
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n2 + i2
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> (usize, usize) {
        (idx / self.n2, idx % self.n2)
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.t1 / self.n1 as f64, self.t2 / self.n2 as f64)
    }

    /// Sample point of pixel `(i1, i2)`, which is also its center.
    pub fn coord(&self, i1: usize, i2: usize) -> (f64, f64) {
        let (h1, h2) = self.spacing();
        (i1 as f64 * h1, i2 as f64 * h2)
    }

    pub fn area(&self) -> f64 {
        self.t1 * self.t2
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self.n1 != other.n1 || self.n2 != other.n2 {
            return Err(Error::GridMismatch {
                expected: (self.n1, self.n2),
                got: (other.n1, other.n2),
            });
        }
        Ok(())
    }
}

/// Symmetric second-order tensor with zero 13 and 23 components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymTensor {
    pub c11: f64,
    pub c22: f64,
    pub c33: f64,
    pub c12: f64,
}

impl SymTensor {
    pub const ZERO: SymTensor = SymTensor { c11: 0.0, c22: 0.0, c33: 0.0, c12: 0.0 };
    pub const IDENTITY: SymTensor = SymTensor { c11: 1.0, c22: 1.0, c33: 1.0, c12: 0.0 };

    pub const fn new(c11: f64, c22: f64, c33: f64, c12: f64) -> Self {
        Self { c11, c22, c33, c12 }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.c11, self.c22, self.c33, self.c12]
    }

    pub fn trace(&self) -> f64 {
        self.c11 + self.c22 + self.c33
    }

    pub fn deviator(&self) -> SymTensor {
        let m = self.trace() / 3.0;
        SymTensor::new(self.c11 - m, self.c22 - m, self.c33 - m, self.c12)
    }

    /// Double contraction `a : b`.
    #[inline]
    pub fn ddot(&self, b: &SymTensor) -> f64 {
        self.c11 * b.c11 + self.c22 * b.c22 + self.c33 * b.c33 + 2.0 * self.c12 * b.c12
    }

    /// Frobenius norm induced by the double contraction.
    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    /// Von Mises equivalent stress `sqrt(3/2 s:s)`.
    pub fn von_mises(&self) -> f64 {
        let s = self.deviator();
        (1.5 * s.ddot(&s)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Free-function form of [`SymTensor::ddot`].
pub fn double_contract(a: &SymTensor, b: &SymTensor) -> f64 {
    a.ddot(b)
}

/// Free-function form of [`SymTensor::von_mises`].
pub fn von_mises(s: &SymTensor) -> f64 {
    s.von_mises()
}

impl Add for SymTensor {
    type Output = SymTensor;
    #[inline]
    fn add(self, o: SymTensor) -> SymTensor {
        SymTensor::new(self.c11 + o.c11, self.c22 + o.c22, self.c33 + o.c33, self.c12 + o.c12)
    }
}

impl Sub for SymTensor {
    type Output = SymTensor;
    #[inline]
    fn sub(self, o: SymTensor) -> SymTensor {
        SymTensor::new(self.c11 - o.c11, self.c22 - o.c22, self.c33 - o.c33, self.c12 - o.c12)
    }
}

impl Mul<f64> for SymTensor {
    type Output = SymTensor;
    #[inline]
    fn mul(self, a: f64) -> SymTensor {
        SymTensor::new(self.c11 * a, self.c22 * a, self.c33 * a, self.c12 * a)
    }
}

impl Mul<SymTensor> for f64 {
    type Output = SymTensor;
    #[inline]
    fn mul(self, t: SymTensor) -> SymTensor {
        t * self
    }
}

impl Neg for SymTensor {
    type Output = SymTensor;
    fn neg(self) -> SymTensor {
        self * -1.0
    }
}

impl AddAssign for SymTensor {
    #[inline]
    fn add_assign(&mut self, o: SymTensor) {
        *self = *self + o;
    }
}

impl SubAssign for SymTensor {
    #[inline]
    fn sub_assign(&mut self, o: SymTensor) {
        *self = *self - o;
    }
}

/// Real-domain symmetric tensor field, one [`SymTensor`] per pixel.
///
/// The Fourier-domain counterpart is [`crate::spectral::SpectralField`]; keeping the two
/// as distinct types makes "average of a spectrum" unrepresentable.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    grid: GridSpec,
    data: Vec<SymTensor>,
}

impl SymTensorField {
    pub fn uniform(grid: GridSpec, value: SymTensor) -> Self {
        Self { grid, data: vec![value; grid.len()] }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::uniform(grid, SymTensor::ZERO)
    }

    pub fn from_vec(grid: GridSpec, data: Vec<SymTensor>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} pixels, grid expects {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(usize, usize) -> SymTensor) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for i1 in 0..grid.n1 {
            for i2 in 0..grid.n2 {
                data.push(f(i1, i2));
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[SymTensor] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [SymTensor] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<SymTensor> {
        self.data
    }

    pub fn get(&self, i1: usize, i2: usize) -> SymTensor {
        self.data[self.grid.index(i1, i2)]
    }

    pub fn set(&mut self, i1: usize, i2: usize, v: SymTensor) {
        let k = self.grid.index(i1, i2);
        self.data[k] = v;
    }

    /// Volume average; equals the zero-frequency coefficient of
    /// [`crate::spectral::forward`].
    pub fn average(&self) -> SymTensor {
        field_average(self)
    }

    pub fn map(&self, f: impl Fn(&SymTensor) -> SymTensor) -> SymTensorField {
        SymTensorField { grid: self.grid, data: self.data.iter().map(f).collect() }
    }

    /// Scalar field of one component (0 = 11, 1 = 22, 2 = 33, 3 = 12).
    pub fn component(&self, c: usize) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: self.data.iter().map(|t| t.to_array()[c]).collect(),
        }
    }

    pub fn von_mises_field(&self) -> ScalarField {
        ScalarField { grid: self.grid, data: self.data.iter().map(|t| t.von_mises()).collect() }
    }
}

/// Volume average `(1/N) sum_d f(x_d)`, component-wise.
///
/// The sum is evaluated in a fixed order so results are bit-reproducible.
pub fn field_average(f: &SymTensorField) -> SymTensor {
    let n = f.data.len() as f64;
    let mut acc = [0.0f64; 4];
    for chunk in f.data.chunks(4096) {
        let mut part = [0.0f64; 4];
        for t in chunk {
            part[0] += t.c11;
            part[1] += t.c22;
            part[2] += t.c33;
            part[3] += t.c12;
        }
        for c in 0..4 {
            acc[c] += part[c];
        }
    }
    SymTensor::from_array(acc.map(|a| a / n))
}

/// Real scalar field on the pixel grid (e.g. cumulated plastic strain).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, data: vec![0.0; grid.len()] }
    }

    pub fn get(&self, i1: usize, i2: usize) -> f64 {
        self.data[self.grid.index(i1, i2)]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn t(a: [f64; 4]) -> SymTensor {
        SymTensor::from_array(a)
    }

    #[test]
    fn grid_rejects_degenerate() {
        assert!(GridSpec::new(1, 4, 1.0, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 0.0, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 1.0, -2.0).is_err());
        let g = GridSpec::new(4, 8, 2.0, 1.0).unwrap();
        assert_eq!(g.coord(1, 2), (0.5, 0.25));
        assert_eq!(g.unindex(g.index(3, 5)), (3, 5));
    }

    #[test]
    fn average_of_constant() {
        let g = GridSpec::square(6).unwrap();
        let a = t([1.5, -2.0, 0.25, 3.0]);
        assert_eq!(field_average(&SymTensorField::uniform(g, a)), a);
    }

    #[test]
    fn average_of_balanced_field_vanishes() {
        let g = GridSpec::square(8).unwrap();
        let f = SymTensorField::from_fn(g, |i1, _| {
            t([if i1 < 4 { 1.0 } else { -1.0 }, 0.0, 0.0, 0.0])
        });
        assert_eq!(field_average(&f), SymTensor::ZERO);
    }

    #[test]
    fn average_two_by_two() {
        let g = GridSpec::square(2).unwrap();
        let vals = [1.0, 2.0, 3.0, 6.0];
        let f = SymTensorField::from_fn(g, |i1, i2| t([vals[2 * i1 + i2], 0.0, 0.0, 0.0]));
        assert_eq!(field_average(&f).c11, 3.0);
    }

    #[test]
    fn double_contract_examples() {
        assert_eq!(double_contract(&SymTensor::IDENTITY, &SymTensor::IDENTITY), 3.0);
        let s = t([0.0, 0.0, 0.0, 1.0]);
        assert_eq!(double_contract(&s, &s), 2.0);
        assert_eq!(double_contract(&t([1.0, 2.0, 0.0, 3.0]), &t([4.0, 0.0, 5.0, 1.0])), 10.0);
    }

    #[test]
    fn von_mises_examples() {
        assert!(von_mises(&t([7.0, 7.0, 7.0, 0.0])).abs() < 1e-14);
        assert_relative_eq!(von_mises(&t([5.0, 0.0, 0.0, 0.0])), 5.0, max_relative = 1e-14);
        assert_relative_eq!(von_mises(&t([0.0, 0.0, 0.0, 2.0])), 3f64.sqrt() * 2.0, max_relative = 1e-14);
    }

    fn tensor() -> impl Strategy<Value = SymTensor> {
        prop::array::uniform4(-10.0f64..10.0).prop_map(SymTensor::from_array)
    }

    proptest! {
        #[test]
        fn average_is_linear(a in -5.0f64..5.0, seed in 0u64..1000) {
            let g = GridSpec::new(5, 3, 1.0, 2.0).unwrap();
            let mut s = seed;
            let mut next = move || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5 };
            let f = SymTensorField::from_fn(g, |_, _| t([next(), next(), next(), next()]));
            let h = SymTensorField::from_fn(g, |_, _| t([next(), next(), next(), next()]));
            let combo = SymTensorField::from_vec(g, f.data().iter().zip(h.data()).map(|(x, y)| *x * a + *y).collect()).unwrap();
            let lhs = field_average(&combo);
            let rhs = field_average(&f) * a + field_average(&h);
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn von_mises_ignores_hydrostatic(s in tensor(), p in -100.0f64..100.0) {
            let shifted = s + SymTensor::IDENTITY * p;
            prop_assert!((shifted.von_mises() - s.von_mises()).abs() < 1e-9);
            prop_assert!(s.von_mises() >= 0.0);
        }

        #[test]
        fn ddot_symmetric_bilinear(a in tensor(), b in tensor(), c in tensor(), k in -3.0f64..3.0) {
            prop_assert!((a.ddot(&b) - b.ddot(&a)).abs() < 1e-12);
            let lhs = (a * k + c).ddot(&b);
            let rhs = k * a.ddot(&b) + c.ddot(&b);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
