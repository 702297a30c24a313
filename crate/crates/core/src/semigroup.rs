//! Exact solution operators of the linearized system.
//!
//! In Fourier variables the velocity splits into its potential part
//! `w = i xi.v / |xi|` and a solenoidal remainder. `(a, w)` evolve under the
//! real 2x2 mode matrix
//!
//! ```text
//! M = [[0, -gamma r], [gamma r, -2 lambda r^2]],   r = |xi|
//! ```
//!
//! while the solenoidal part and `h, m, eps` are damped by
//! `exp(-lambda r^2 t)`. Writing `M = -d I + N` with `d = lambda r^2` and
//! `N^2 = (d^2 - c^2) I`, `c = gamma r`, any analytic `f` gives
//! `f(M) = alpha I + beta N`, which is how the exponential and the
//! `phi` functions of the exponential integrator are evaluated.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Grid, Mode, Spectrum};
use crate::model::DerivedConstants;
use crate::quadrature::Quadrature;
use crate::state::{self, SpectralState};

pub type Block = [[f64; 2]; 2];

pub const IDENTITY: Block = [[1.0, 0.0], [0.0, 1.0]];

/// Relative discriminant below which the Jordan-limit formula is used.
pub const DEGENERACY_TOL: f64 = 1e-12;

pub fn mode_matrix(xi_abs: f64, constants: &DerivedConstants) -> Block {
    let c = constants.gamma * xi_abs;
    let d = constants.lambda * xi_abs * xi_abs;
    [[0.0, -c], [c, -2.0 * d]]
}

pub fn block_mul(x: &Block, y: &Block) -> Block {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
        }
    }
    out
}

/// Frobenius norm of `x - y`.
pub fn block_distance(x: &Block, y: &Block) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            s += (x[i][j] - y[i][j]).powi(2);
        }
    }
    s.sqrt()
}

pub fn block_norm(x: &Block) -> f64 {
    block_distance(x, &[[0.0; 2]; 2])
}

/// Spectral (operator 2-) norm of a real 2x2 matrix.
pub fn block_operator_norm(x: &Block) -> f64 {
    let [[a, b], [c, d]] = *x;
    let s1 = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (s1 + disc)).sqrt()
}

fn combine(alpha: f64, beta: f64, c: f64, d: f64) -> Block {
    // alpha I + beta N with N = [[d, -c], [c, -d]]
    [
        [alpha + beta * d, -beta * c],
        [beta * c, alpha - beta * d],
    ]
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Spectrum2 {
    Zero,
    /// Complex pair `-d +- i omega`.
    Oscillatory { omega: f64 },
    /// Real pair `-d +- kappa`.
    Damped { kappa: f64 },
    /// Double eigenvalue `-d`.
    Degenerate,
}

fn classify(c: f64, d: f64) -> Spectrum2 {
    if c == 0.0 && d == 0.0 {
        return Spectrum2::Zero;
    }
    let disc = (d - c) * (d + c);
    let scale = (d * d).max(c * c);
    if disc.abs() < DEGENERACY_TOL * scale {
        Spectrum2::Degenerate
    } else if disc < 0.0 {
        Spectrum2::Oscillatory {
            omega: (-disc).sqrt(),
        }
    } else {
        Spectrum2::Damped { kappa: disc.sqrt() }
    }
}

/// Exact `exp(t M)` for the acoustic mode at radius `xi_abs`.
pub fn acoustic_mode(xi_abs: f64, t: f64, constants: &DerivedConstants) -> Result<Block> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    if !(xi_abs >= 0.0) {
        return Err(Error::Domain(format!("|xi| must be non-negative, got {xi_abs}")));
    }
    Ok(acoustic_exp(xi_abs, t, constants))
}

fn acoustic_exp(xi_abs: f64, t: f64, constants: &DerivedConstants) -> Block {
    let c = constants.gamma * xi_abs;
    let d = constants.lambda * xi_abs * xi_abs;
    match classify(c, d) {
        Spectrum2::Zero => IDENTITY,
        Spectrum2::Degenerate => {
            let e = (-d * t).exp();
            combine(e, t * e, c, d)
        }
        Spectrum2::Oscillatory { omega } => {
            let e = (-d * t).exp();
            let (s, co) = (omega * t).sin_cos();
            combine(e * co, e * s / omega, c, d)
        }
        Spectrum2::Damped { kappa } => {
            // slow eigenvalue -d + kappa = -c^2 / (d + kappa) without cancellation
            let slow = -c * c / (d + kappa);
            let fast = -d - kappa;
            let (alpha, beta) = if kappa * t < 1.0 {
                let e = (-d * t).exp();
                let kt = kappa * t;
                let sinhc = if kt == 0.0 { t } else { kt.sinh() / kappa };
                (e * kt.cosh(), e * sinhc)
            } else {
                let (ep, em) = ((slow * t).exp(), (fast * t).exp());
                (0.5 * (ep + em), (ep - em) / (2.0 * kappa))
            };
            combine(alpha, beta, c, d)
        }
    }
}

/// Scalar functions of the linear operator used by the integrators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorFn {
    Exp,
    /// `(e^z - 1) / z`
    Phi1,
    /// `(e^z - 1 - z) / z^2`
    Phi2,
}

const PHI1_SERIES_RADIUS: f64 = 1e-4;
const PHI2_SERIES_RADIUS: f64 = 0.5;

impl OperatorFn {
    pub fn eval(self, z: Complex64) -> Complex64 {
        match self {
            OperatorFn::Exp => z.exp(),
            OperatorFn::Phi1 => {
                if z.norm() < PHI1_SERIES_RADIUS {
                    Complex64::new(1.0, 0.0) + z * (0.5 + z * (1.0 / 6.0 + z / 24.0))
                } else {
                    (z.exp() - 1.0) / z
                }
            }
            OperatorFn::Phi2 => {
                if z.norm() < PHI2_SERIES_RADIUS {
                    // sum_k z^k / (k + 2)!
                    let mut term = Complex64::new(0.5, 0.0);
                    let mut acc = term;
                    for k in 1..20 {
                        term = term * z / (k as f64 + 2.0);
                        acc += term;
                    }
                    acc
                } else {
                    (z.exp() - 1.0 - z) / (z * z)
                }
            }
        }
    }

    fn eval_real(self, x: f64) -> f64 {
        match self {
            OperatorFn::Exp => x.exp(),
            OperatorFn::Phi1 => {
                if x.abs() < PHI1_SERIES_RADIUS {
                    1.0 + x * (0.5 + x * (1.0 / 6.0 + x / 24.0))
                } else {
                    x.exp_m1() / x
                }
            }
            OperatorFn::Phi2 => self.eval(Complex64::new(x, 0.0)).re,
        }
    }

    /// Derivative, used on the double eigenvalue.
    fn derivative_real(self, x: f64) -> f64 {
        match self {
            OperatorFn::Exp => x.exp(),
            OperatorFn::Phi1 => {
                // phi1' = phi2 - phi1/ ... expressed via series near 0
                if x.abs() < PHI2_SERIES_RADIUS {
                    // sum_k k x^(k-1) / (k+1)!
                    let mut acc = 0.0;
                    let mut pow = 1.0;
                    let mut fact = 2.0;
                    for k in 1..22 {
                        acc += k as f64 * pow / fact;
                        pow *= x;
                        fact *= k as f64 + 2.0;
                    }
                    acc
                } else {
                    (x.exp() * (x - 1.0) + 1.0) / (x * x)
                }
            }
            OperatorFn::Phi2 => {
                if x.abs() < PHI2_SERIES_RADIUS {
                    // sum_k k x^(k-1) / (k+2)!
                    let mut acc = 0.0;
                    let mut pow = 1.0;
                    let mut fact = 6.0;
                    for k in 1..22 {
                        acc += k as f64 * pow / fact;
                        pow *= x;
                        fact *= k as f64 + 3.0;
                    }
                    acc
                } else {
                    (x.exp() * (x - 2.0) + x + 2.0) / (x * x * x)
                }
            }
        }
    }
}

/// `f(h M)` for the acoustic mode matrix at radius `xi_abs`.
pub fn acoustic_function(xi_abs: f64, h: f64, constants: &DerivedConstants, f: OperatorFn) -> Block {
    if f == OperatorFn::Exp {
        return acoustic_exp(xi_abs, h, constants);
    }
    let c = constants.gamma * xi_abs;
    let d = constants.lambda * xi_abs * xi_abs;
    match classify(c, d) {
        Spectrum2::Zero => {
            let v = f.eval_real(0.0);
            [[v, 0.0], [0.0, v]]
        }
        Spectrum2::Degenerate => combine(f.eval_real(-h * d), h * f.derivative_real(-h * d), c, d),
        Spectrum2::Oscillatory { omega } => {
            let v = f.eval(Complex64::new(-h * d, h * omega));
            combine(v.re, v.im / omega, c, d)
        }
        Spectrum2::Damped { kappa } => {
            let slow = -c * c / (d + kappa);
            let fast = -d - kappa;
            let (fp, fm) = (f.eval_real(h * slow), f.eval_real(h * fast));
            combine(0.5 * (fp + fm), (fp - fm) / (2.0 * kappa), c, d)
        }
    }
}

/// `f(h A)` restricted to one Fourier mode: the acoustic block plus the
/// scalar factor shared by the solenoidal velocity and `h, m, eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeOperator {
    pub block: Block,
    pub scalar: f64,
}

impl ModeOperator {
    pub fn new(mode: &Mode, h: f64, constants: &DerivedConstants, f: OperatorFn) -> Self {
        let r2 = mode.xi_sq();
        let scalar = f.eval_real(-constants.lambda * r2 * h);
        if r2 == 0.0 || mode.has_nyquist() {
            // Nyquist modes carry no odd-derivative coupling and only diffuse
            return ModeOperator {
                block: [[scalar, 0.0], [0.0, scalar]],
                scalar,
            };
        }
        ModeOperator {
            block: acoustic_function(r2.sqrt(), h, constants, f),
            scalar,
        }
    }

    /// Applies the operator to `(a, v1, v2, v3)` of one mode.
    pub fn apply_acoustic(&self, mode: &Mode, a: Complex64, v: [Complex64; 3]) -> (Complex64, [Complex64; 3]) {
        let r2 = mode.xi_sq();
        if r2 == 0.0 || mode.has_nyquist() {
            let s = self.block[0][0];
            return (a * s, [v[0] * s, v[1] * s, v[2] * s]);
        }
        let r = r2.sqrt();
        let n = [mode.xi[0] / r, mode.xi[1] / r, mode.xi[2] / r];
        let p = v[0] * n[0] + v[1] * n[1] + v[2] * n[2];
        let w = Complex64::i() * p;
        let sol = [v[0] - p * n[0], v[1] - p * n[1], v[2] - p * n[2]];
        let b = &self.block;
        let a_new = a * b[0][0] + w * b[0][1];
        let w_new = a * b[1][0] + w * b[1][1];
        let p_new = -Complex64::i() * w_new;
        (
            a_new,
            [
                sol[0] * self.scalar + p_new * n[0],
                sol[1] * self.scalar + p_new * n[1],
                sol[2] * self.scalar + p_new * n[2],
            ],
        )
    }

    pub fn apply(&self, mode: &Mode, c: [&mut Complex64; 7]) {
        let [a, v1, v2, v3, h, m, e] = c;
        let (a_new, v_new) = self.apply_acoustic(mode, *a, [*v1, *v2, *v3]);
        *a = a_new;
        *v1 = v_new[0];
        *v2 = v_new[1];
        *v3 = v_new[2];
        *h *= self.scalar;
        *m *= self.scalar;
        *e *= self.scalar;
    }
}

/// Precomputed per-mode table of `f(h A)` on one grid.
#[derive(Clone, Debug)]
pub struct SpectralOperator {
    grid: Grid,
    table: Arc<Vec<ModeOperator>>,
}

impl SpectralOperator {
    pub fn new(grid: Grid, h: f64, constants: &DerivedConstants, f: OperatorFn) -> Self {
        let (n, nh) = (grid.n(), grid.half());
        let table: Vec<ModeOperator> = (0..grid.spectral_len())
            .into_par_iter()
            .map(|p| {
                let kk = p % nh;
                let j = (p / nh) % n;
                let i = p / (nh * n);
                ModeOperator::new(&grid.mode(i, j, kk), h, constants, f)
            })
            .collect();
        SpectralOperator {
            grid,
            table: Arc::new(table),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn apply(&self, x: &SpectralState) -> SpectralState {
        let mut out = x.clone();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_in_place(&self, x: &mut SpectralState) {
        let (n, nh) = (self.grid.n(), self.grid.half());
        let table = &self.table;
        state::update_modes(x, |mode, c| {
            let i = mode.index[0].rem_euclid(n as i64) as usize;
            let j = mode.index[1].rem_euclid(n as i64) as usize;
            let kk = mode.index[2] as usize;
            table[(i * n + j) * nh + kk].apply(mode, c);
        });
    }
}

/// `E(t)` applied to `(a, v)` in spectral form.
pub fn apply_e(
    a: &Spectrum,
    v: &[Spectrum; 3],
    t: f64,
    constants: &DerivedConstants,
) -> Result<(Spectrum, [Spectrum; 3])> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    let grid = a.grid();
    if v.iter().any(|s| s.grid() != grid) {
        return Err(Error::Shape("a and v live on different grids".into()));
    }
    let zero = Spectrum::zeros(grid);
    let mut w = crate::model::Perturbation {
        a: a.clone(),
        v: v.clone(),
        h: zero.clone(),
        m: zero.clone(),
        eps: zero,
    };
    state::update_modes(&mut w, |mode, c| {
        ModeOperator::new(mode, t, constants, OperatorFn::Exp).apply(mode, c);
    });
    Ok((w.a, w.v))
}

/// The generator `A W` itself, consistent with the propagator mode by mode.
pub fn apply_generator(x: &SpectralState, constants: &DerivedConstants) -> SpectralState {
    let mut out = x.clone();
    state::update_modes(&mut out, |mode, c| {
        let r2 = mode.xi_sq();
        let d = -constants.lambda * r2;
        let block = if r2 == 0.0 || mode.has_nyquist() {
            [[d, 0.0], [0.0, d]]
        } else {
            mode_matrix(r2.sqrt(), constants)
        };
        ModeOperator { block, scalar: d }.apply(mode, c);
    });
    out
}

/// Heat semigroup `S(t) = exp(lambda t Delta)`.
pub fn apply_s(field: &Spectrum, t: f64, lambda: f64) -> Result<Spectrum> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    Ok(field.map_modes(|mode, c| c * (-lambda * mode.xi_sq() * t).exp()))
}

/// Exact linear propagation of the whole state: `E(t)` on `(a, v)` and
/// `S(t)` on `h, m, eps`.
pub fn propagate(x: &SpectralState, t: f64, constants: &DerivedConstants) -> Result<SpectralState> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    Ok(SpectralOperator::new(state::grid_of(x), t, constants, OperatorFn::Exp).apply(x))
}

/// Radial function `g(|xi|)` standing for the (unitary) Fourier transform of
/// radially symmetric data on the whole space, with the cutoff `xi_max`
/// beyond which its L2 mass is negligible.
#[derive(Clone)]
pub struct RadialProfile {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    xi_max: f64,
}

impl std::fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialProfile")
            .field("xi_max", &self.xi_max)
            .finish_non_exhaustive()
    }
}

/// Tail mass allowed beyond `xi_max`, relative to the total.
pub const PROFILE_TAIL_TOL: f64 = 1e-10;

fn shell_mass(f: &(dyn Fn(f64) -> f64 + Send + Sync), a: f64, b: f64) -> Result<f64> {
    let q = Quadrature::with_rel_tol(1e-12);
    Ok(q.integrate(|r| 4.0 * std::f64::consts::PI * r * r * f(r).powi(2), a, b)?
        .value)
}

impl RadialProfile {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let f: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(f);
        let mut r = 0.25;
        while r < 1e8 {
            let total = shell_mass(f.as_ref(), 0.0, 16.0 * r)?;
            let tail = shell_mass(f.as_ref(), r, 16.0 * r)?;
            if total == 0.0 || tail <= PROFILE_TAIL_TOL * total {
                return Ok(RadialProfile { f, xi_max: r });
            }
            r *= 2.0;
        }
        Err(Error::Truncation(
            "profile tail mass stays above tolerance up to |xi| = 1e8".into(),
        ))
    }

    /// Transform of `amplitude * exp(-|x|^2 / (2 width^2))`:
    /// `amplitude * width^3 * exp(-width^2 |xi|^2 / 2)`.
    pub fn gaussian(amplitude: f64, width: f64) -> Result<Self> {
        let w2 = width * width;
        let scale = amplitude * width.powi(3);
        Self::new(move |r| scale * (-0.5 * w2 * r * r).exp())
    }

    /// Potential component `w = i xi.v / |xi|` of `v = grad phi` with `phi` the
    /// Gaussian `amplitude * exp(-|x|^2 / (2 width^2))`: `w = -|xi| phi_hat`.
    pub fn gaussian_gradient(amplitude: f64, width: f64) -> Result<Self> {
        let w2 = width * width;
        let scale = amplitude * width.powi(3);
        Self::new(move |r| -r * scale * (-0.5 * w2 * r * r).exp())
    }

    pub fn value(&self, r: f64) -> f64 {
        (self.f)(r)
    }

    pub fn xi_max(&self) -> f64 {
        self.xi_max
    }

    /// Whole-space `||f||_2` by Parseval.
    pub fn l2_norm(&self) -> Result<f64> {
        Ok(shell_mass(self.f.as_ref(), 0.0, self.xi_max)?.sqrt())
    }
}

/// Geometric panel boundaries on `(0, upper]`, refined toward 0 down to
/// `lower`.
fn radial_breaks(upper: f64, lower: f64) -> Vec<f64> {
    let mut pts = vec![upper];
    let mut r = upper;
    while r > lower {
        r *= 0.5;
        pts.push(r);
    }
    pts.push(0.0);
    pts.reverse();
    pts
}

fn radial_quadrature(
    xi_max: f64,
    t: f64,
    lambda: f64,
    l: u32,
    integrand: impl Fn(f64) -> f64,
) -> Result<f64> {
    if l > 2 {
        return Err(Error::Domain(format!("derivative order {l} outside 0..=2")));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    // beyond this radius the heat factor exp(-2 lambda r^2 t) is below e^-100
    let cutoff = if t > 0.0 {
        (50.0 / (lambda * t)).sqrt()
    } else {
        f64::INFINITY
    };
    let upper = xi_max.min(cutoff);
    let peak = ((l as f64 + 1.0) / (2.0 * lambda * t.max(1e-300))).sqrt().min(upper);
    let breaks = radial_breaks(upper, 1e-3 * peak);
    let q = Quadrature::with_rel_tol(1e-13);
    let value = q
        .integrate_panels(
            |r| 4.0 * std::f64::consts::PI * r * r * r.powi(2 * l as i32) * integrand(r),
            &breaks,
        )?
        .value;
    Ok(value.max(0.0).sqrt())
}

/// Whole-space `||grad^l S(t) f||_2` for radial data by quadrature in `|xi|`.
pub fn radial_l2_norm(profile: &RadialProfile, t: f64, l: u32, lambda: f64) -> Result<f64> {
    radial_quadrature(profile.xi_max, t, lambda, l, |r| {
        (-2.0 * lambda * r * r * t).exp() * profile.value(r).powi(2)
    })
}

/// Whole-space `||grad^l E(t) (a0, v0)||_2` for radial `a0` and a potential
/// `v0` given by its potential profile `w0`.
pub fn radial_acoustic_l2_norm(
    a0: &RadialProfile,
    w0: &RadialProfile,
    t: f64,
    l: u32,
    constants: &DerivedConstants,
) -> Result<f64> {
    let xi_max = a0.xi_max.max(w0.xi_max);
    radial_quadrature(xi_max, t, constants.lambda, l, |r| {
        let b = acoustic_exp(r, t, constants);
        let (a, w) = (a0.value(r), w0.value(r));
        let a_t = b[0][0] * a + b[0][1] * w;
        let w_t = b[1][0] * a + b[1][1] * w;
        a_t * a_t + w_t * w_t
    })
}
