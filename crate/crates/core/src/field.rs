//! Periodic-box fields: real samples, conjugate-symmetric spectra, exact
//! spectral derivatives, 2/3-rule dealiasing and the norms used to state
//! the decay estimates.
//!
//! Spectral coefficients are Fourier-series coefficients,
//! `f(x) = sum_xi c_xi exp(i xi.x)`, so a constant field `c` has a single
//! coefficient `c` at `xi = 0` and `||f||_2^2 = V sum |c_xi|^2`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Cubic periodic box `[0, L)^3` sampled with `n` points per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::InvalidParameters(format!(
                "grid resolution must be even and >= 4, got {n}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "box length must be positive, got {length}"
            )));
        }
        Ok(Grid { n, length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(3)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    /// Number of real samples, `n^3`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Length of the last (halved) spectral axis, `n/2 + 1`.
    pub fn half(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn spectral_len(&self) -> usize {
        self.n * self.n * self.half()
    }

    /// Fundamental wavenumber `2 pi / L`.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Signed integer wavenumber of index `idx` on a full axis, in `[-n/2, n/2)`.
    pub fn signed_index(&self, idx: usize) -> i64 {
        if idx < self.n / 2 {
            idx as i64
        } else {
            idx as i64 - self.n as i64
        }
    }

    pub fn position(&self, flat: usize) -> [f64; 3] {
        let n = self.n;
        let h = self.spacing();
        let k = flat % n;
        let j = (flat / n) % n;
        let i = flat / (n * n);
        [i as f64 * h, j as f64 * h, k as f64 * h]
    }

    /// Describes the spectral mode stored at `(i, j, kk)` of the half layout.
    pub fn mode(&self, i: usize, j: usize, kk: usize) -> Mode {
        let n = self.n;
        let idx = [self.signed_index(i), self.signed_index(j), kk as i64];
        let dk = self.dk();
        let nyquist = [i == n / 2, j == n / 2, kk == n / 2];
        let xi = [idx[0] as f64 * dk, idx[1] as f64 * dk, idx[2] as f64 * dk];
        Mode {
            xi,
            index: idx,
            nyquist,
            multiplicity: if kk == 0 || kk == n / 2 { 1.0 } else { 2.0 },
        }
    }
}

/// One Fourier mode of the half-complex layout.
#[derive(Clone, Copy, Debug)]
pub struct Mode {
    /// Wavevector in rad/length.
    pub xi: [f64; 3],
    /// Signed integer wavenumbers.
    pub index: [i64; 3],
    /// Whether each axis sits at the Nyquist index `n/2`.
    pub nyquist: [bool; 3],
    /// 1 on the self-conjugate planes `kk = 0, n/2`, otherwise 2: the number of
    /// full-spectrum modes this entry stands for.
    pub multiplicity: f64,
}

impl Mode {
    pub fn xi_sq(&self) -> f64 {
        self.xi[0] * self.xi[0] + self.xi[1] * self.xi[1] + self.xi[2] * self.xi[2]
    }

    pub fn has_nyquist(&self) -> bool {
        self.nyquist.iter().any(|&b| b)
    }

    /// Complex multiplier of `d^alpha` at this mode. Odd derivatives along a
    /// Nyquist axis vanish so that real fields stay real.
    pub fn derivative_multiplier(&self, alpha: MultiIndex) -> Complex64 {
        let mut scale = 1.0;
        for axis in 0..3 {
            let order = alpha.0[axis] as i32;
            if order == 0 {
                continue;
            }
            if self.nyquist[axis] && order % 2 == 1 {
                return Complex64::new(0.0, 0.0);
            }
            scale *= self.xi[axis].powi(order);
        }
        match alpha.order() % 4 {
            0 => Complex64::new(scale, 0.0),
            1 => Complex64::new(0.0, scale),
            2 => Complex64::new(-scale, 0.0),
            _ => Complex64::new(0.0, -scale),
        }
    }

    /// `|multiplier|^2` of `d^alpha`.
    pub fn derivative_weight(&self, alpha: MultiIndex) -> f64 {
        self.derivative_multiplier(alpha).norm_sqr()
    }

    /// 2/3-rule: retained iff every `3 |index| < n`. For `n` not divisible
    /// by 3 this is `|index| <= n/3`.
    pub fn retained(&self, n: usize) -> bool {
        self.index.iter().all(|&k| 3 * (k.unsigned_abs() as usize) < n)
    }
}

/// Multi-index `alpha = (alpha_1, alpha_2, alpha_3)` of a partial derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub [u8; 3]);

impl MultiIndex {
    pub const fn new(a1: u8, a2: u8, a3: u8) -> Self {
        MultiIndex([a1, a2, a3])
    }

    pub const fn axis(axis: usize) -> Self {
        let mut a = [0u8; 3];
        a[axis] = 1;
        MultiIndex(a)
    }

    pub fn order(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    /// All multi-indices with `|alpha| = order`.
    pub fn of_order(order: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for a1 in (0..=order).rev() {
            for a2 in (0..=order - a1).rev() {
                let a3 = order - a1 - a2;
                out.push(MultiIndex([a1 as u8, a2 as u8, a3 as u8]));
            }
        }
        out
    }

    /// All multi-indices with `lo <= |alpha| <= hi`.
    pub fn range(lo: usize, hi: usize) -> Vec<MultiIndex> {
        (lo..=hi).flat_map(MultiIndex::of_order).collect()
    }

    pub fn plus_axis(&self, axis: usize) -> MultiIndex {
        let mut a = self.0;
        a[axis] += 1;
        MultiIndex(a)
    }
}

pub const MAX_DERIVATIVE_ORDER: usize = 4;

struct Fft3 {
    n: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

static PLANS: Lazy<Mutex<HashMap<usize, Arc<Fft3>>>> = Lazy::new(|| Mutex::new(HashMap::new()));

fn plans(n: usize) -> Arc<Fft3> {
    let mut cache = PLANS.lock().expect("fft plan cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| {
            let mut real = RealFftPlanner::<f64>::new();
            let mut complex = FftPlanner::<f64>::new();
            Arc::new(Fft3 {
                n,
                r2c: real.plan_fft_forward(n),
                c2r: real.plan_fft_inverse(n),
                forward: complex.plan_fft_forward(n),
                inverse: complex.plan_fft_inverse(n),
            })
        })
        .clone()
}

impl Fft3 {
    /// Complex transform along the middle axis of each `[j][kk]` plane.
    fn middle_axis(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let nh = n / 2 + 1;
        let fft = if inverse { &self.inverse } else { &self.forward };
        data.par_chunks_mut(n * nh).for_each_init(
            || vec![Complex64::new(0.0, 0.0); n * nh],
            |buf, plane| {
                for j in 0..n {
                    for kk in 0..nh {
                        buf[kk * n + j] = plane[j * nh + kk];
                    }
                }
                fft.process(buf);
                for j in 0..n {
                    for kk in 0..nh {
                        plane[j * nh + kk] = buf[kk * n + j];
                    }
                }
            },
        );
    }

    /// Complex transform along the outer axis, via a transposed copy.
    fn outer_axis(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let nh = n / 2 + 1;
        let plane = n * nh;
        let fft = if inverse { &self.inverse } else { &self.forward };
        let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
        {
            let src: &[Complex64] = data;
            t.par_chunks_mut(n).enumerate().for_each(|(line, out)| {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = src[i * plane + line];
                }
            });
        }
        t.par_chunks_mut(n * nh).for_each(|chunk| fft.process(chunk));
        let t = &t;
        data.par_chunks_mut(plane).enumerate().for_each(|(i, out)| {
            for (line, o) in out.iter_mut().enumerate() {
                *o = t[line * n + i];
            }
        });
    }

    fn forward(&self, real: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        let nh = n / 2 + 1;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n * nh];
        out.par_chunks_mut(nh)
            .zip(real.par_chunks(n))
            .for_each_init(
                || (vec![0.0; n], self.r2c.make_scratch_vec()),
                |(input, scratch), (o, row)| {
                    input.copy_from_slice(row);
                    self.r2c
                        .process_with_scratch(input, o, scratch)
                        .expect("r2c buffer sizes are fixed by the plan");
                },
            );
        self.middle_axis(&mut out, false);
        self.outer_axis(&mut out, false);
        let norm = 1.0 / (n * n * n) as f64;
        out.par_iter_mut().for_each(|c| *c *= norm);
        out
    }

    fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        let nh = n / 2 + 1;
        let mut work = spectrum.to_vec();
        self.outer_axis(&mut work, true);
        self.middle_axis(&mut work, true);
        let mut out = vec![0.0; n * n * n];
        out.par_chunks_mut(n)
            .zip(work.par_chunks_mut(nh))
            .for_each_init(
                || self.c2r.make_scratch_vec(),
                |scratch, (o, row)| {
                    // imaginary parts of the self-conjugate entries are rounding noise
                    row[0].im = 0.0;
                    row[nh - 1].im = 0.0;
                    self.c2r
                        .process_with_scratch(row, o, scratch)
                        .expect("c2r buffer sizes are fixed by the plan");
                },
            );
        out
    }
}

fn check_finite(values: impl IntoParallelIterator<Item = f64>) -> Result<()> {
    if values.into_par_iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("non-finite value in field".into()))
    }
}

/// Real samples on the grid in row-major order (last axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ScalarField {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Shape(format!(
                "expected {} samples, got {}",
                grid.len(),
                data.len()
            )));
        }
        Ok(ScalarField { grid, data })
    }

    /// Samples `f` at every grid point `x = (i, j, k) * spacing`.
    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 3]) -> f64) -> Self {
        let data = (0..grid.len()).map(|p| f(grid.position(p))).collect();
        ScalarField { grid, data }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        ScalarField {
            grid: self.grid,
            data: self.data.par_iter().map(|&x| f(x)).collect(),
        }
    }

    /// Box average.
    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.volume()
    }

    /// Trapezoidal (spectrally accurate) integral over the box.
    pub fn integral(&self) -> f64 {
        let n = self.grid.n;
        let partial: Vec<f64> = self
            .data
            .par_chunks(n * n)
            .map(|plane| plane.iter().sum::<f64>())
            .collect();
        partial.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn to_spectrum(&self) -> Result<Spectrum> {
        check_finite(self.data.par_iter().copied())?;
        Ok(Spectrum {
            grid: self.grid,
            data: plans(self.grid.n).forward(&self.data),
        })
    }

    pub fn lq_norm(&self, q: f64) -> Result<f64> {
        lq_norm(self, q)
    }
}

/// Half-complex spectrum, layout `[i][j][kk]` with `kk` in `0..=n/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: Grid) -> Self {
        Spectrum {
            grid,
            data: vec![Complex64::new(0.0, 0.0); grid.spectral_len()],
        }
    }

    pub fn from_vec(grid: Grid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.spectral_len() {
            return Err(Error::Shape(format!(
                "expected {} coefficients, got {}",
                grid.spectral_len(),
                data.len()
            )));
        }
        Ok(Spectrum { grid, data })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.data
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn flat_index(&self, i: usize, j: usize, kk: usize) -> usize {
        let n = self.grid.n;
        (i * n + j) * self.grid.half() + kk
    }

    pub fn coefficient(&self, i: usize, j: usize, kk: usize) -> Complex64 {
        self.data[self.flat_index(i, j, kk)]
    }

    pub fn to_field(&self) -> Result<ScalarField> {
        check_finite(self.data.par_iter().flat_map_iter(|c| [c.re, c.im]))?;
        Ok(ScalarField {
            grid: self.grid,
            data: plans(self.grid.n).inverse(&self.data),
        })
    }

    /// Applies `f(mode, coefficient)` to every entry, in parallel over planes.
    pub fn map_modes(&self, f: impl Fn(&Mode, Complex64) -> Complex64 + Sync) -> Spectrum {
        let grid = self.grid;
        let (n, nh) = (grid.n, grid.half());
        let mut out = self.clone();
        out.data
            .par_chunks_mut(n * nh)
            .enumerate()
            .for_each(|(i, plane)| {
                for j in 0..n {
                    for kk in 0..nh {
                        let mode = grid.mode(i, j, kk);
                        let c = &mut plane[j * nh + kk];
                        *c = f(&mode, *c);
                    }
                }
            });
        out
    }

    /// Deterministic reduction `sum_modes f(mode, c)` over the half layout.
    pub fn reduce_modes(&self, f: impl Fn(&Mode, Complex64) -> f64 + Sync) -> f64 {
        let grid = self.grid;
        let (n, nh) = (grid.n, grid.half());
        let partial: Vec<f64> = self
            .data
            .par_chunks(n * nh)
            .enumerate()
            .map(|(i, plane)| {
                let mut acc = 0.0;
                for j in 0..n {
                    for kk in 0..nh {
                        acc += f(&grid.mode(i, j, kk), plane[j * nh + kk]);
                    }
                }
                acc
            })
            .collect();
        partial.iter().sum()
    }

    /// `d^alpha` by exact spectral multiplication.
    pub fn derivative(&self, alpha: MultiIndex) -> Spectrum {
        self.map_modes(|mode, c| c * mode.derivative_multiplier(alpha))
    }

    /// Zeroes every mode outside the 2/3-rule band.
    pub fn dealias(&self) -> Spectrum {
        let n = self.grid.n;
        self.map_modes(|mode, c| if mode.retained(n) { c } else { Complex64::new(0.0, 0.0) })
    }

    pub fn scale(&self, s: f64) -> Spectrum {
        Spectrum {
            grid: self.grid,
            data: self.data.par_iter().map(|&c| c * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &Spectrum) -> Spectrum {
        Spectrum {
            grid: self.grid,
            data: self
                .data
                .par_iter()
                .zip(other.data.par_iter())
                .map(|(&a, &b)| a + b * s)
                .collect(),
        }
    }

    /// `||f||_2^2` by Parseval.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.volume() * self.reduce_modes(|m, c| m.multiplicity * c.norm_sqr())
    }

    /// `sum_{alpha in set} ||d^alpha f||_2^2` by Parseval.
    pub fn derivative_norm_sq(&self, set: &[MultiIndex]) -> f64 {
        let vol = self.grid.volume();
        vol * self.reduce_modes(|m, c| {
            let w: f64 = set.iter().map(|&a| m.derivative_weight(a)).sum();
            m.multiplicity * w * c.norm_sqr()
        })
    }

    /// Real L2 inner product `<f, g>` by Parseval.
    pub fn inner(&self, other: &Spectrum) -> f64 {
        let vol = self.grid.volume();
        let g = &other.data;
        let (n, nh) = (self.grid.n, self.grid.half());
        vol * self.reduce_modes(|m, c| {
            let [i, j, kk] = [
                wrap(m.index[0], n),
                wrap(m.index[1], n),
                m.index[2] as usize,
            ];
            let d = g[(i * n + j) * nh + kk];
            m.multiplicity * (c.conj() * d).re
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

fn wrap(k: i64, n: usize) -> usize {
    if k < 0 {
        (k + n as i64) as usize
    } else {
        k as usize
    }
}

/// Forward (`to_spectrum`) or backward (`to_field`) transform.
#[derive(Clone, Debug, PartialEq)]
pub enum Representation {
    Real(ScalarField),
    Spectral(Spectrum),
}

impl Representation {
    pub fn transform(&self) -> Result<Representation> {
        match self {
            Representation::Real(f) => f.to_spectrum().map(Representation::Spectral),
            Representation::Spectral(s) => s.to_field().map(Representation::Real),
        }
    }
}

/// `(sum |f|^q dV)^(1/q)` by real-space quadrature, `q = inf` the max norm.
pub fn lq_norm(field: &ScalarField, q: f64) -> Result<f64> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::Domain(format!("Lq norm requires q >= 1, got {q}")));
    }
    if q.is_infinite() {
        return Ok(field.max_abs());
    }
    let n = field.grid.n;
    let partial: Vec<f64> = field
        .data
        .par_chunks(n * n)
        .map(|plane| {
            if q == 2.0 {
                plane.iter().map(|x| x * x).sum::<f64>()
            } else {
                plane.iter().map(|x| x.abs().powf(q)).sum::<f64>()
            }
        })
        .collect();
    let sum: f64 = partial.iter().sum::<f64>() * field.grid.cell_volume();
    Ok(sum.powf(1.0 / q))
}

/// `sqrt(sum_fields sum_{|alpha| <= s} ||d^alpha f||_2^2)`.
pub fn sobolev_norm(fields: &[&Spectrum], s: usize) -> Result<f64> {
    if s > MAX_DERIVATIVE_ORDER {
        return Err(Error::UnsupportedOrder(s));
    }
    let set = MultiIndex::range(0, s);
    Ok(fields
        .iter()
        .map(|f| f.derivative_norm_sq(&set))
        .sum::<f64>()
        .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};

    fn random_field(grid: Grid, seed: u64) -> ScalarField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ScalarField::from_fn(grid, |_| rng.random_range(-1.0..1.0))
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn grid_invariants() {
        assert!(Grid::new(3, 1.0).is_err());
        assert!(Grid::new(2, 1.0).is_err());
        assert!(Grid::new(8, 0.0).is_err());
        let g = Grid::new(8, 2.0).unwrap();
        assert_eq!(g.spacing(), 0.25);
        assert_eq!(g.signed_index(4), -4);
        assert_eq!(g.signed_index(7), -1);
        assert_eq!(g.signed_index(3), 3);
    }

    #[test]
    fn constant_has_single_coefficient() {
        let g = Grid::new(8, 3.0).unwrap();
        let s = ScalarField::constant(g, 2.5).to_spectrum().unwrap();
        for (p, c) in s.coefficients().iter().enumerate() {
            if p == 0 {
                assert!((c.re - 2.5).abs() < 1e-14 && c.im.abs() < 1e-14);
            } else {
                assert!(c.norm() < 1e-14);
            }
        }
    }

    #[test]
    fn sine_has_conjugate_pair() {
        let g = Grid::new(8, 2.0).unwrap();
        let k = g.dk();
        let f = ScalarField::from_fn(g, |x| (k * x[0]).sin());
        let s = f.to_spectrum().unwrap();
        // sin = (e^{ikx} - e^{-ikx}) / 2i: coefficient -i/2 at +1, +i/2 at -1
        let plus = s.coefficient(1, 0, 0);
        let minus = s.coefficient(7, 0, 0);
        assert!((plus - Complex64::new(0.0, -0.5)).norm() < 1e-14);
        assert!((minus - Complex64::new(0.0, 0.5)).norm() < 1e-14);
        let rest: f64 = s
            .coefficients()
            .iter()
            .enumerate()
            .filter(|(p, _)| *p != s.flat_index(1, 0, 0) && *p != s.flat_index(7, 0, 0))
            .map(|(_, c)| c.norm())
            .sum();
        assert!(rest < 1e-13);
    }

    #[test]
    fn round_trip_and_parseval() {
        let g = Grid::new(16, 5.0).unwrap();
        let f = random_field(g, 7);
        let s = f.to_spectrum().unwrap();
        let back = s.to_field().unwrap();
        let scale = f.max_abs();
        for (a, b) in f.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
        let direct = lq_norm(&f, 2.0).unwrap().powi(2);
        assert!(rel(s.l2_norm_sq(), direct) < 1e-12);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let g = Grid::new(4, 1.0).unwrap();
        let mut f = ScalarField::zeros(g);
        f.values_mut()[3] = f64::NAN;
        assert!(matches!(f.to_spectrum(), Err(Error::Numeric(_))));
        f.values_mut()[3] = f64::INFINITY;
        assert!(f.to_spectrum().is_err());
    }

    #[test]
    fn derivative_of_sine() {
        let g = Grid::new(16, 3.0).unwrap();
        let k = g.dk();
        let f = ScalarField::from_fn(g, |x| (k * x[0]).sin());
        let d = f
            .to_spectrum()
            .unwrap()
            .derivative(MultiIndex::axis(0))
            .to_field()
            .unwrap();
        for (p, v) in d.values().iter().enumerate() {
            let x = g.position(p);
            assert!((v - k * (k * x[0]).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = Grid::new(8, 1.0).unwrap();
        let s = ScalarField::constant(g, 4.0).to_spectrum().unwrap();
        for alpha in MultiIndex::range(1, 4) {
            let d = s.derivative(alpha);
            assert!(d.coefficients().iter().all(|c| c.norm() == 0.0));
        }
    }

    #[test]
    fn mixed_partials_commute() {
        let g = Grid::new(8, 1.7).unwrap();
        let s = random_field(g, 3).to_spectrum().unwrap();
        let d12 = s.derivative(MultiIndex::new(1, 1, 0));
        let seq12 = s.derivative(MultiIndex::axis(0)).derivative(MultiIndex::axis(1));
        let seq21 = s.derivative(MultiIndex::axis(1)).derivative(MultiIndex::axis(0));
        // multi-index application is order-free by construction
        assert_eq!(d12, s.derivative(MultiIndex([1, 1, 0])));
        let scale = d12.coefficients().iter().map(|c| c.norm()).fold(0.0, f64::max);
        for ((a, b), c) in d12
            .coefficients()
            .iter()
            .zip(seq12.coefficients())
            .zip(seq21.coefficients())
        {
            assert!((a - b).norm() <= 1e-15 * scale);
            assert!((a - c).norm() <= 1e-15 * scale);
        }
    }

    #[test]
    fn derivative_keeps_fields_real() {
        let g = Grid::new(8, 1.0).unwrap();
        let s = random_field(g, 11).to_spectrum().unwrap();
        let d = s.derivative(MultiIndex::new(1, 0, 0)).to_field().unwrap();
        let again = d.to_spectrum().unwrap();
        let d2 = s.derivative(MultiIndex::new(1, 0, 0));
        for (a, b) in again.coefficients().iter().zip(d2.coefficients()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn lq_norm_examples() {
        let g = Grid::new(8, 2.0).unwrap();
        let v = g.volume();
        let c = ScalarField::constant(g, -1.5);
        for q in [1.0, 2.0, 3.0, 6.0] {
            assert!(rel(lq_norm(&c, q).unwrap(), 1.5 * v.powf(1.0 / q)) < 1e-13);
        }
        assert_eq!(lq_norm(&c, f64::INFINITY).unwrap(), 1.5);
        assert!(matches!(lq_norm(&c, 0.5), Err(Error::Domain(_))));

        let k = g.dk();
        let s = ScalarField::from_fn(g, |x| (k * x[0]).sin());
        assert!(rel(lq_norm(&s, 2.0).unwrap(), (v / 2.0).sqrt()) < 1e-13);
        let spectral = s.to_spectrum().unwrap().l2_norm_sq().sqrt();
        assert!(rel(spectral, (v / 2.0).sqrt()) < 1e-10);
    }

    #[test]
    fn max_norm_of_bump() {
        let g = Grid::new(32, 10.0).unwrap();
        // peak sits exactly on the grid point (5, 5, 5)
        let f = ScalarField::from_fn(g, |x| {
            let r2: f64 = x.iter().map(|c| (c - 5.0).powi(2)).sum();
            3.0 * (-r2 / 2.0).exp()
        });
        assert!((lq_norm(&f, f64::INFINITY).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn power_mean_is_monotone_in_q() {
        let g = Grid::new(8, 1.3).unwrap();
        let f = random_field(g, 5);
        let v = g.volume();
        let qs = [1.0, 1.5, 2.0, 3.0, 6.0, 10.0];
        let means: Vec<f64> = qs
            .iter()
            .map(|&q| lq_norm(&f, q).unwrap() * v.powf(-1.0 / q))
            .collect();
        for w in means.windows(2) {
            assert!(w[1] >= w[0] * (1.0 - 1e-14));
        }
        assert!(lq_norm(&f, f64::INFINITY).unwrap() >= means[5]);
    }

    #[test]
    fn sobolev_examples() {
        let l = 2.0 * PI;
        let g = Grid::new(16, l).unwrap();
        let v = g.volume();
        let f = ScalarField::from_fn(g, |x| x[0].sin());
        let s = f.to_spectrum().unwrap();
        let h0 = sobolev_norm(&[&s], 0).unwrap();
        assert!(rel(h0, lq_norm(&f, 2.0).unwrap()) < 1e-12);
        let h1 = sobolev_norm(&[&s], 1).unwrap();
        assert!(rel(h1, (v / 2.0 + v / 2.0).sqrt()) < 1e-12);
        let zero = Spectrum::zeros(g);
        assert_eq!(sobolev_norm(&[&zero], 4).unwrap(), 0.0);
        assert!(matches!(
            sobolev_norm(&[&s], 5),
            Err(Error::UnsupportedOrder(5))
        ));
    }

    #[test]
    fn sobolev_matches_real_space_derivatives() {
        let g = Grid::new(8, 1.9).unwrap();
        let s = random_field(g, 9).to_spectrum().unwrap().dealias();
        let mut direct = 0.0;
        for alpha in MultiIndex::range(0, 2) {
            direct += lq_norm(&s.derivative(alpha).to_field().unwrap(), 2.0)
                .unwrap()
                .powi(2);
        }
        assert!(rel(sobolev_norm(&[&s], 2).unwrap(), direct.sqrt()) < 1e-12);
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(MultiIndex::of_order(0).len(), 1);
        assert_eq!(MultiIndex::of_order(1).len(), 3);
        assert_eq!(MultiIndex::of_order(2).len(), 6);
        assert_eq!(MultiIndex::of_order(3).len(), 10);
        assert_eq!(MultiIndex::range(1, 3).len(), 19);
        assert!(MultiIndex::of_order(3).iter().all(|a| a.order() == 3));
    }

    #[test]
    fn dealias_low_high_and_idempotent() {
        let g = Grid::new(12, 1.0).unwrap();
        let k = g.dk();
        let low = ScalarField::from_fn(g, |x| (k * x[0]).cos() + (2.0 * k * x[1]).sin());
        let s = low.to_spectrum().unwrap();
        for (a, b) in s.dealias().coefficients().iter().zip(s.coefficients()) {
            assert!((a - b).norm() < 1e-15);
        }
        // index 5 lies in the top third
        let high = ScalarField::from_fn(g, |x| (5.0 * k * x[2]).cos())
            .to_spectrum()
            .unwrap();
        assert!(high.dealias().coefficients().iter().all(|c| c.norm() < 1e-15));
        let r = random_field(g, 2).to_spectrum().unwrap();
        assert_eq!(r.dealias().dealias(), r.dealias());
    }

    /// Brute-force circular convolution on a small grid, truncated to the
    /// retained band, against the pointwise product of band-limited fields.
    #[test]
    fn dealiased_product_matches_direct_convolution() {
        let n = 8;
        let g = Grid::new(n, 1.0).unwrap();
        let f = random_field(g, 21).to_spectrum().unwrap().dealias();
        let h = random_field(g, 22).to_spectrum().unwrap().dealias();
        let ff = f.to_field().unwrap();
        let hf = h.to_field().unwrap();
        let prod = ScalarField::from_vec(
            g,
            ff.values().iter().zip(hf.values()).map(|(a, b)| a * b).collect(),
        )
        .unwrap()
        .to_spectrum()
        .unwrap()
        .dealias();

        // full coefficient lookup from the half layout
        let full = |s: &Spectrum, k: [i64; 3]| -> Complex64 {
            let w = |x: i64| x.rem_euclid(n as i64) as usize;
            if k[2].rem_euclid(n as i64) as usize <= n / 2 {
                s.coefficient(w(k[0]), w(k[1]), w(k[2]))
            } else {
                s.coefficient(w(-k[0]), w(-k[1]), w(-k[2])).conj()
            }
        };
        let band: Vec<i64> = (-(n as i64) / 2..(n as i64) / 2).collect();
        for &k1 in &band {
            for &k2 in &band {
                for k3 in 0..=(n as i64 / 2) {
                    let target = [k1, k2, k3];
                    if target.iter().any(|k| 3 * k.unsigned_abs() as usize >= n) {
                        continue;
                    }
                    let mut acc = Complex64::new(0.0, 0.0);
                    for &p1 in &band {
                        for &p2 in &band {
                            for &p3 in &band {
                                let q = [k1 - p1, k2 - p2, k3 - p3];
                                // exact (non-periodic) convolution of band-limited data
                                if q.iter().any(|x| 3 * x.unsigned_abs() as usize >= n) {
                                    continue;
                                }
                                let p = [p1, p2, p3];
                                if p.iter().any(|x| 3 * x.unsigned_abs() as usize >= n) {
                                    continue;
                                }
                                acc += full(&f, p) * full(&h, q);
                            }
                        }
                    }
                    let got = full(&prod, target);
                    assert!((got - acc).norm() < 1e-10, "{target:?}: {got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn inner_product_matches_quadrature() {
        let g = Grid::new(8, 1.4).unwrap();
        let f = random_field(g, 1);
        let h = random_field(g, 2);
        let direct: f64 = f
            .values()
            .iter()
            .zip(h.values())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * g.cell_volume();
        let spectral = f.to_spectrum().unwrap().inner(&h.to_spectrum().unwrap());
        assert!(rel(spectral, direct) < 1e-12);
    }
}
