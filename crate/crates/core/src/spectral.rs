//! Discrete Fourier transforms of tensor fields on the periodic grid.
//!
//! Normalization: the forward transform divides by `N = n1 * n2`, the
//! inverse does not, so the zero-frequency coefficient is the volume average.
//! Spectra are stored in standard FFT order (zero, positive, negative).

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::{GridSpec, SymTensor, SymTensorField};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Signed integer frequency index for storage slot `k` of an axis of length `n`.
#[inline]
pub fn signed_index(k: usize, n: usize) -> i64 {
    // even n: slot n/2 carries +n/2 (it is not mirrored)
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Storage slot of the frequency opposite to slot `k`.
#[inline]
pub fn negated_slot(k: usize, n: usize) -> usize {
    if k == 0 {
        0
    } else {
        n - k
    }
}

/// Discrete frequencies of the grid, per axis, in FFT storage order.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGrid {
    pub grid: GridSpec,
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
}

impl FrequencyGrid {
    #[inline]
    pub fn xi(&self, k1: usize, k2: usize) -> [f64; 2] {
        [self.xi1[k1], self.xi2[k2]]
    }
}

pub fn frequency_grid(grid: &GridSpec) -> FrequencyGrid {
    let axis = |n: usize, t: f64| (0..n).map(|k| signed_index(k, n) as f64 / t).collect();
    FrequencyGrid { grid: *grid, xi1: axis(grid.n1, grid.t1), xi2: axis(grid.n2, grid.t2) }
}

/// Frequencies at which some even axis reaches `+-n_j / (2 T_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HighestFrequencyMask {
    pub grid: GridSpec,
    flags: Vec<bool>,
}

impl HighestFrequencyMask {
    pub fn new(grid: &GridSpec) -> Self {
        let hit1 = |k1: usize| grid.n1 % 2 == 0 && k1 == grid.n1 / 2;
        let hit2 = |k2: usize| grid.n2 % 2 == 0 && k2 == grid.n2 / 2;
        let mut flags = Vec::with_capacity(grid.len());
        for k1 in 0..grid.n1 {
            for k2 in 0..grid.n2 {
                flags.push(hit1(k1) || hit2(k2));
            }
        }
        Self { grid: *grid, flags }
    }

    #[inline]
    pub fn is_masked(&self, k1: usize, k2: usize) -> bool {
        self.flags[self.grid.index(k1, k2)]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }
}

/// Fourier-domain symmetric tensor field, component-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    comps: [Vec<Complex64>; 4],
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        let z = vec![ZERO; grid.len()];
        Self { grid, comps: [z.clone(), z.clone(), z.clone(), z] }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn get(&self, k1: usize, k2: usize) -> [Complex64; 4] {
        let i = self.grid.index(k1, k2);
        [self.comps[0][i], self.comps[1][i], self.comps[2][i], self.comps[3][i]]
    }

    pub fn set(&mut self, k1: usize, k2: usize, v: [Complex64; 4]) {
        let i = self.grid.index(k1, k2);
        for c in 0..4 {
            self.comps[c][i] = v[c];
        }
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        &self.comps[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.comps[c]
    }

    /// Largest deviation from `F(-xi) = conj F(xi)` over all frequencies.
    pub fn hermitian_defect(&self) -> f64 {
        let g = self.grid;
        let mut worst = 0.0f64;
        for k1 in 0..g.n1 {
            for k2 in 0..g.n2 {
                let a = self.get(k1, k2);
                let b = self.get(negated_slot(k1, g.n1), negated_slot(k2, g.n2));
                for c in 0..4 {
                    worst = worst.max((a[c] - b[c].conj()).norm());
                }
            }
        }
        worst
    }

    /// `sum_xi |F(xi)|^2` with the double-contraction weighting.
    pub fn energy(&self) -> f64 {
        let w = [1.0, 1.0, 1.0, 2.0];
        (0..4).map(|c| w[c] * self.comps[c].iter().map(|z| z.norm_sqr()).sum::<f64>()).sum()
    }
}

/// Norm of one spectral coefficient, induced by the double contraction.
pub fn coefficient_norm(v: &[Complex64; 4]) -> f64 {
    (v[0].norm_sqr() + v[1].norm_sqr() + v[2].norm_sqr() + 2.0 * v[3].norm_sqr()).sqrt()
}

/// Unnormalized 2D complex FFT on a row-major `n1 x n2` buffer.
pub struct Fft2d {
    n1: usize,
    n2: usize,
    rows_fwd: Arc<dyn Fft<f64>>,
    rows_inv: Arc<dyn Fft<f64>>,
    cols_fwd: Arc<dyn Fft<f64>>,
    cols_inv: Arc<dyn Fft<f64>>,
    transposed: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft2d {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let rows_fwd = planner.plan_fft_forward(grid.n2);
        let rows_inv = planner.plan_fft_inverse(grid.n2);
        let cols_fwd = planner.plan_fft_forward(grid.n1);
        let cols_inv = planner.plan_fft_inverse(grid.n1);
        let scratch_len = [&rows_fwd, &rows_inv, &cols_fwd, &cols_inv]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            n1: grid.n1,
            n2: grid.n2,
            rows_fwd,
            rows_inv,
            cols_fwd,
            cols_inv,
            transposed: vec![ZERO; grid.len()],
            scratch: vec![ZERO; scratch_len],
        }
    }

    pub fn forward(&mut self, buf: &mut [Complex64]) {
        self.run(buf, true);
    }

    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        self.run(buf, false);
    }

    fn run(&mut self, buf: &mut [Complex64], fwd: bool) {
        debug_assert_eq!(buf.len(), self.n1 * self.n2);
        let (rows, cols) = if fwd {
            (&self.rows_fwd, &self.cols_fwd)
        } else {
            (&self.rows_inv, &self.cols_inv)
        };
        rows.process_with_scratch(buf, &mut self.scratch);
        transpose(buf, &mut self.transposed, self.n1, self.n2);
        cols.process_with_scratch(&mut self.transposed, &mut self.scratch);
        transpose(&self.transposed, buf, self.n2, self.n1);
    }
}

/// Blocked transpose of a row-major `rows x cols` matrix into `dst`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Component-wise forward DFT, normalized so that `F(0)` is the average.
pub fn forward(f: &SymTensorField) -> SpectralField {
    let grid = *f.grid();
    let mut fft = Fft2d::new(&grid);
    let scale = 1.0 / grid.len() as f64;
    let mut out = SpectralField::zeros(grid);
    for c in 0..4 {
        let buf = out.component_mut(c);
        for (z, t) in buf.iter_mut().zip(f.data()) {
            *z = Complex64::new(t.to_array()[c], 0.0);
        }
        fft.forward(buf);
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }
    out
}

/// Relative imaginary residue tolerated by [`inverse`].
pub const HERMITIAN_TOL: f64 = 1e-8;

/// Component-wise inverse DFT. Fails if the result is not real.
pub fn inverse(f: &SpectralField) -> Result<SymTensorField> {
    let grid = *f.grid();
    let mut fft = Fft2d::new(&grid);
    let mut comps: [Vec<f64>; 4] = Default::default();
    let mut re2 = 0.0;
    let mut im2 = 0.0;
    for (c, comp) in comps.iter_mut().enumerate() {
        let mut buf = f.component(c).to_vec();
        fft.inverse(&mut buf);
        for z in &buf {
            re2 += z.re * z.re;
            im2 += z.im * z.im;
        }
        *comp = buf.iter().map(|z| z.re).collect();
    }
    let norm = (re2 + im2).sqrt();
    let residue = im2.sqrt();
    if residue > HERMITIAN_TOL * norm {
        return Err(Error::NonHermitian { residue, limit: HERMITIAN_TOL * norm });
    }
    let data = (0..grid.len())
        .map(|i| SymTensor::new(comps[0][i], comps[1][i], comps[2][i], comps[3][i]))
        .collect();
    SymTensorField::from_vec(grid, data)
}

/// Two-for-one transform of real tensor fields used by the solver.
///
/// Components are packed pairwise as `c11 + i c22` and `c33 + i c12`, so a
/// four-component real field costs two complex FFTs each way. Individual
/// component spectra are recovered from `Z(k)` and `Z(-k)`.
pub struct PackedFft {
    grid: GridSpec,
    fft: Fft2d,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

impl PackedFft {
    pub fn new(grid: &GridSpec) -> Self {
        Self {
            grid: *grid,
            fft: Fft2d::new(grid),
            a: vec![ZERO; grid.len()],
            b: vec![ZERO; grid.len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Loads `f` and replaces the buffers with its normalized spectrum.
    pub fn forward(&mut self, f: &SymTensorField) {
        for ((za, zb), t) in self.a.iter_mut().zip(self.b.iter_mut()).zip(f.data()) {
            *za = Complex64::new(t.c11, t.c22);
            *zb = Complex64::new(t.c33, t.c12);
        }
        self.fft.forward(&mut self.a);
        self.fft.forward(&mut self.b);
        let scale = 1.0 / self.grid.len() as f64;
        for z in self.a.iter_mut().chain(self.b.iter_mut()) {
            *z *= scale;
        }
    }

    #[inline]
    fn unpack(&self, i: usize, j: usize) -> [Complex64; 4] {
        // i = slot of xi, j = slot of -xi
        let half = Complex64::new(0.5, 0.0);
        let minus_half_i = Complex64::new(0.0, -0.5);
        let (za, zan) = (self.a[i], self.a[j].conj());
        let (zb, zbn) = (self.b[i], self.b[j].conj());
        [(za + zan) * half, (za - zan) * minus_half_i, (zb + zbn) * half, (zb - zbn) * minus_half_i]
    }

    /// Spectrum of the loaded field at `(k1, k2)`.
    pub fn spectrum_at(&self, k1: usize, k2: usize) -> [Complex64; 4] {
        let g = &self.grid;
        self.unpack(g.index(k1, k2), g.index(negated_slot(k1, g.n1), negated_slot(k2, g.n2)))
    }

    /// Replaces the spectrum frequency by frequency with `op(k1, k2, coeff)`.
    ///
    /// `op` is called exactly once per frequency, in a fixed order. The new
    /// spectrum must again be that of a real field for [`Self::inverse_add`]
    /// to be meaningful.
    pub fn map_spectrum(&mut self, mut op: impl FnMut(usize, usize, &[Complex64; 4]) -> [Complex64; 4]) {
        let g = self.grid;
        let i_unit = Complex64::new(0.0, 1.0);
        for k1 in 0..g.n1 {
            let m1 = negated_slot(k1, g.n1);
            for k2 in 0..g.n2 {
                let m2 = negated_slot(k2, g.n2);
                let i = g.index(k1, k2);
                let j = g.index(m1, m2);
                if j < i {
                    continue;
                }
                let s = self.unpack(i, j);
                let o = op(k1, k2, &s);
                if i == j {
                    self.a[i] = o[0] + i_unit * o[1];
                    self.b[i] = o[2] + i_unit * o[3];
                } else {
                    let sn = self.unpack(j, i);
                    let on = op(m1, m2, &sn);
                    self.a[i] = o[0] + i_unit * o[1];
                    self.b[i] = o[2] + i_unit * o[3];
                    self.a[j] = on[0] + i_unit * on[1];
                    self.b[j] = on[2] + i_unit * on[3];
                }
            }
        }
    }

    /// Inverse-transforms the current spectrum and adds it to `out`.
    pub fn inverse_add(&mut self, out: &mut SymTensorField) {
        self.fft.inverse(&mut self.a);
        self.fft.inverse(&mut self.b);
        for ((t, za), zb) in out.data_mut().iter_mut().zip(&self.a).zip(&self.b) {
            t.c11 += za.re;
            t.c22 += za.im;
            t.c33 += zb.re;
            t.c12 += zb.im;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn even_axis_layout() {
        let g = GridSpec::new(4, 3, 1.0, 1.0).unwrap();
        let f = frequency_grid(&g);
        assert_eq!(f.xi1, vec![0.0, 1.0, 2.0, -1.0]);
        assert_eq!(sorted(f.xi1.clone()), vec![-1.0, 0.0, 1.0, 2.0]);
        assert_eq!(f.xi2, vec![0.0, 1.0, -1.0]);
    }

    #[test]
    fn two_pixel_axis() {
        let g = GridSpec::new(2, 2, 2.0, 2.0).unwrap();
        assert_eq!(frequency_grid(&g).xi1, vec![0.0, 0.5]);
    }

    #[test]
    fn one_zero_per_axis_and_unmirrored_nyquist() {
        for n in 2..40 {
            let g = GridSpec::new(n, n + 1, 1.5, 1.0).unwrap();
            let f = frequency_grid(&g);
            assert_eq!(f.xi1.iter().filter(|x| **x == 0.0).count(), 1);
            assert_eq!(f.xi2.iter().filter(|x| **x == 0.0).count(), 1);
            if n % 2 == 0 {
                let top = n as f64 / 2.0 / 1.5;
                assert_eq!(f.xi1.iter().filter(|x| (**x - top).abs() < 1e-12).count(), 1);
                assert_eq!(f.xi1.iter().filter(|x| (**x + top).abs() < 1e-12).count(), 0);
            }
        }
    }

    #[test]
    fn mask_marks_even_nyquist_lines() {
        let g = GridSpec::new(4, 5, 1.0, 1.0).unwrap();
        let m = HighestFrequencyMask::new(&g);
        // only axis 1 is even: one full line of 5 frequencies
        assert_eq!(m.count(), 5);
        assert!(m.is_masked(2, 3));
        assert!(!m.is_masked(1, 2));
    }

    fn random_field(g: GridSpec, seed: u64) -> SymTensorField {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        SymTensorField::from_fn(g, |_, _| SymTensor::new(next(), next(), next(), next()))
    }

    #[test]
    fn constant_field_is_dc_only() {
        let g = GridSpec::new(6, 4, 1.0, 2.0).unwrap();
        let a = SymTensor::new(1.0, -2.0, 3.0, 0.5);
        let s = forward(&SymTensorField::uniform(g, a));
        for k1 in 0..6 {
            for k2 in 0..4 {
                let v = s.get(k1, k2);
                if k1 == 0 && k2 == 0 {
                    let arr = a.to_array();
                    for c in 0..4 {
                        assert!((v[c].re - arr[c]).abs() < 1e-14 && v[c].im.abs() < 1e-14);
                    }
                } else {
                    assert!(coefficient_norm(&v) < 1e-14);
                }
            }
        }
    }

    #[test]
    fn cosine_wave_spectrum() {
        let g = GridSpec::new(8, 4, 2.0, 1.0).unwrap();
        let a = SymTensor::new(1.0, 2.0, 3.0, 4.0);
        let f = SymTensorField::from_fn(g, |i1, i2| {
            let (x1, _) = g.coord(i1, i2);
            a * (2.0 * PI * x1 / g.t1).cos()
        });
        let s = forward(&f);
        let half = a * 0.5;
        for k1 in 0..8 {
            for k2 in 0..4 {
                let v = s.get(k1, k2);
                let expect = if k2 == 0 && (k1 == 1 || k1 == 7) { half } else { SymTensor::ZERO };
                let arr = expect.to_array();
                for c in 0..4 {
                    assert!((v[c] - Complex64::new(arr[c], 0.0)).norm() < 1e-13, "{k1} {k2}");
                }
            }
        }
        let back = inverse(&s).unwrap();
        for (x, y) in back.data().iter().zip(f.data()) {
            assert!((*x - *y).norm() < 1e-13);
        }
    }

    #[test]
    fn inverse_of_hermitian_pair_is_cosine() {
        let g = GridSpec::square(8).unwrap();
        let a = SymTensor::new(2.0, 0.0, -1.0, 1.0);
        let mut s = SpectralField::zeros(g);
        let h = a * 0.5;
        let c = h.to_array().map(|v| Complex64::new(v, 0.0));
        s.set(1, 0, c);
        s.set(7, 0, c);
        let f = inverse(&s).unwrap();
        for i1 in 0..8 {
            let expect = a * (2.0 * PI * i1 as f64 / 8.0).cos();
            assert!((f.get(i1, 3) - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn dc_only_spectrum_is_constant() {
        let g = GridSpec::new(3, 5, 1.0, 1.0).unwrap();
        let mut s = SpectralField::zeros(g);
        s.set(0, 0, [1.0, 2.0, 3.0, 4.0].map(|v| Complex64::new(v, 0.0)));
        let f = inverse(&s).unwrap();
        assert!(f.data().iter().all(|t| *t == SymTensor::new(1.0, 2.0, 3.0, 4.0)));
    }

    #[test]
    fn non_hermitian_spectrum_rejected() {
        let g = GridSpec::square(8).unwrap();
        let mut s = forward(&random_field(g, 3));
        let v = s.get(1, 2);
        s.set(1, 2, v.map(|z| z * Complex64::new(1.1, 0.0)));
        assert!(matches!(inverse(&s), Err(Error::NonHermitian { .. })));
    }

    #[test]
    fn parseval_and_round_trip() {
        for (n1, n2) in [(8, 8), (7, 5), (12, 9), (16, 6)] {
            let g = GridSpec::new(n1, n2, 1.0, 0.7).unwrap();
            let f = random_field(g, (n1 * 31 + n2) as u64);
            let s = forward(&f);
            let real_energy: f64 = f.data().iter().map(|t| t.ddot(t)).sum();
            let spec_energy = s.energy();
            assert!((real_energy - g.len() as f64 * spec_energy).abs() < 1e-10 * real_energy);
            assert!(s.hermitian_defect() < 1e-14);
            let back = inverse(&s).unwrap();
            let scale = f.data().iter().map(|t| t.norm()).fold(0.0, f64::max);
            for (x, y) in back.data().iter().zip(f.data()) {
                assert!((*x - *y).norm() < 1e-12 * scale);
            }
            // zero frequency is the average
            let dc = s.get(0, 0);
            let avg = f.average().to_array();
            for c in 0..4 {
                assert!((dc[c].re - avg[c]).abs() < 1e-14 && dc[c].im.abs() < 1e-14);
            }
            // spectrum -> field -> spectrum
            let again = forward(&back);
            for k1 in 0..n1 {
                for k2 in 0..n2 {
                    let (x, y) = (again.get(k1, k2), s.get(k1, k2));
                    for c in 0..4 {
                        assert!((x[c] - y[c]).norm() < 1e-12 * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn packed_transform_matches_reference() {
        for (n1, n2) in [(8, 8), (7, 6), (10, 5)] {
            let g = GridSpec::new(n1, n2, 1.0, 1.0).unwrap();
            let f = random_field(g, 77 + n1 as u64);
            let reference = forward(&f);
            let mut packed = PackedFft::new(&g);
            packed.forward(&f);
            for k1 in 0..n1 {
                for k2 in 0..n2 {
                    let (x, y) = (packed.spectrum_at(k1, k2), reference.get(k1, k2));
                    for c in 0..4 {
                        assert!((x[c] - y[c]).norm() < 1e-14);
                    }
                }
            }
            // identity map followed by inverse reproduces the field
            let mut calls = 0;
            packed.map_spectrum(|_, _, s| {
                calls += 1;
                *s
            });
            assert_eq!(calls, g.len());
            let mut out = SymTensorField::zeros(g);
            packed.inverse_add(&mut out);
            for (x, y) in out.data().iter().zip(f.data()) {
                assert!((*x - *y).norm() < 1e-13);
            }
        }
    }
}
