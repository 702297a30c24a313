//! Nonlinear forcing `F1..F5` of the perturbation system.
//!
//! Derivatives are exact spectral derivatives; every product and rational
//! coefficient is formed pointwise on the grid, transformed back and
//! dealiased.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Grid, MultiIndex, ScalarField, Spectrum};
use crate::model::{DerivedConstants, ModelParams, Perturbation, PerturbationState};
use crate::semigroup;
use crate::state::{self, SpectralState};

/// `(F1, F2, F3, F4, F5)` in spectral form, laid out like the state.
pub type Tendency = SpectralState;

/// Validity floors as fractions of the equilibrium values.
pub const RHO_FLOOR_FRACTION: f64 = 0.1;
pub const K_FLOOR_FRACTION: f64 = 0.1;

const DX: [MultiIndex; 3] = [MultiIndex::axis(0), MultiIndex::axis(1), MultiIndex::axis(2)];

pub(crate) fn laplacian(s: &Spectrum) -> Spectrum {
    s.derivative(MultiIndex::new(2, 0, 0))
        .add_scaled(1.0, &s.derivative(MultiIndex::new(0, 2, 0)))
        .add_scaled(1.0, &s.derivative(MultiIndex::new(0, 0, 2)))
}

pub(crate) fn gradient(s: &Spectrum) -> [Spectrum; 3] {
    DX.map(|d| s.derivative(d))
}

pub(crate) fn divergence(v: &[Spectrum; 3]) -> Spectrum {
    v[0].derivative(DX[0])
        .add_scaled(1.0, &v[1].derivative(DX[1]))
        .add_scaled(1.0, &v[2].derivative(DX[2]))
}

/// Grid samples of every quantity the pointwise formulas need.
struct Samples {
    a: Vec<f64>,
    v: [Vec<f64>; 3],
    m: Vec<f64>,
    eps: Vec<f64>,
    /// `dv[i][j] = d_j v^i`
    dv: [[Vec<f64>; 3]; 3],
    /// `Lap v + grad div v`
    visc: [Vec<f64>; 3],
    grad_a: [Vec<f64>; 3],
    grad_h: [Vec<f64>; 3],
    grad_m: [Vec<f64>; 3],
    grad_eps: [Vec<f64>; 3],
    lap_h: Vec<f64>,
    lap_m: Vec<f64>,
    lap_eps: Vec<f64>,
}

impl Samples {
    fn new(w: &SpectralState) -> Result<Self> {
        let mut list: Vec<Spectrum> = Vec::with_capacity(33);
        list.push(w.a.clone());
        list.extend(w.v.iter().cloned());
        list.push(w.m.clone());
        list.push(w.eps.clone());
        for vi in &w.v {
            list.extend(gradient(vi));
        }
        let div = divergence(&w.v);
        for i in 0..3 {
            list.push(laplacian(&w.v[i]).add_scaled(1.0, &div.derivative(DX[i])));
        }
        for s in [&w.a, &w.h, &w.m, &w.eps] {
            list.extend(gradient(s));
        }
        list.push(laplacian(&w.h));
        list.push(laplacian(&w.m));
        list.push(laplacian(&w.eps));

        let real = list
            .par_iter()
            .map(|s| s.to_field().map(ScalarField::into_values))
            .collect::<Result<Vec<_>>>()?;
        let mut it = real.into_iter();
        let mut take = move || it.next().expect("sample count");
        Ok(Samples {
            a: take(),
            v: [take(), take(), take()],
            m: take(),
            eps: take(),
            dv: [
                [take(), take(), take()],
                [take(), take(), take()],
                [take(), take(), take()],
            ],
            visc: [take(), take(), take()],
            grad_a: [take(), take(), take()],
            grad_h: [take(), take(), take()],
            grad_m: [take(), take(), take()],
            grad_eps: [take(), take(), take()],
            lap_h: take(),
            lap_m: take(),
            lap_eps: take(),
        })
    }
}

fn grid_location(grid: Grid, p: usize) -> [usize; 3] {
    let n = grid.n();
    [p / (n * n), (p / n) % n, p % n]
}

fn check_floors(grid: Grid, a: &[f64], m: &[f64], params: &ModelParams) -> Result<()> {
    let rho_floor = RHO_FLOOR_FRACTION * params.rho_bar;
    let k_floor = K_FLOOR_FRACTION * params.k_bar;
    // NaN fails the comparison and is reported as a breach too
    if let Some(p) = a.par_iter().position_first(|x| !(x + params.rho_bar >= rho_floor)) {
        return Err(Error::StateValidity {
            field: "rho",
            value: a[p] + params.rho_bar,
            floor: rho_floor,
            location: grid_location(grid, p),
        });
    }
    if let Some(p) = m.par_iter().position_first(|x| !(x + params.k_bar >= k_floor)) {
        return Err(Error::StateValidity {
            field: "k",
            value: m[p] + params.k_bar,
            floor: k_floor,
            location: grid_location(grid, p),
        });
    }
    Ok(())
}

/// `S_k` and `G` at one point from `du[i][j] = d_j u^i`.
fn source_terms(
    params: &ModelParams,
    rho: f64,
    k: f64,
    p_prime: f64,
    du: &[[f64; 3]; 3],
    grad_rho: [f64; 3],
) -> (f64, f64) {
    let mut shear = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            shear += (du[i][j] + du[j][i]) * du[i][j];
        }
    }
    let div_u = du[0][0] + du[1][1] + du[2][2];
    let grad_rho_sq = grad_rho.iter().map(|g| g * g).sum::<f64>();
    let sk = params.mu * shear - 2.0 / 3.0 * params.mu * div_u * div_u
        + params.mu_t / (rho * rho) * p_prime * grad_rho_sq;
    let mu_e = params.mu_e();
    let g = mu_e * shear - 2.0 / 3.0 * (rho * k + mu_e * div_u) * div_u;
    (sk, g)
}

fn velocity_gradient(s: &Samples, p: usize, scale: f64) -> [[f64; 3]; 3] {
    let mut du = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            du[i][j] = scale * s.dv[i][j][p];
        }
    }
    du
}

/// Production terms `(S_k, G)` on the grid, with `u = gamma lambda v`,
/// `rho = a + rho_bar`, `k = m + k_bar`.
pub fn turbulence_sources(
    w: &PerturbationState,
    params: &ModelParams,
    constants: &DerivedConstants,
) -> Result<(ScalarField, ScalarField)> {
    let grid = w.a.grid();
    let spec = state::to_spectral(w)?;
    let s = Samples::new(&spec)?;
    check_floors(grid, &s.a, &s.m, params)?;
    let gl = constants.velocity_scale();
    let (sk, g): (Vec<f64>, Vec<f64>) = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let rho = s.a[p] + params.rho_bar;
            let k = s.m[p] + params.k_bar;
            let pp = params.pressure.derivative(rho);
            let ga = [s.grad_a[0][p], s.grad_a[1][p], s.grad_a[2][p]];
            source_terms(params, rho, k, pp, &velocity_gradient(&s, p, gl), ga)
        })
        .unzip();
    Ok((ScalarField::from_vec(grid, sk)?, ScalarField::from_vec(grid, g)?))
}

/// Evaluates `F1..F5` for a spectral state.
pub fn rhs_spectral(
    w: &SpectralState,
    params: &ModelParams,
    constants: &DerivedConstants,
) -> Result<Tendency> {
    let grid = state::grid_of(w);
    let s = Samples::new(w)?;
    check_floors(grid, &s.a, &s.m, params)?;
    let gl = constants.velocity_scale();
    let (rb, kb) = (params.rho_bar, params.k_bar);
    let pb = params.pressure.derivative(rb);
    let (c1, c2) = (params.c1, params.c2);

    // flux a v (3), F2 (3), F3, F4, F5
    let pointwise: Vec<[f64; 9]> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let a = s.a[p];
            let rho = a + rb;
            let k = s.m[p] + kb;
            let eps = s.eps[p];
            let v = [s.v[0][p], s.v[1][p], s.v[2][p]];
            let ga = [s.grad_a[0][p], s.grad_a[1][p], s.grad_a[2][p]];
            let dot = |g: &[Vec<f64>; 3]| v[0] * g[0][p] + v[1] * g[1][p] + v[2] * g[2][p];

            let inv = 1.0 / rho - 1.0 / rb;
            let pp = params.pressure.derivative(rho);
            let coef = pp / rho - pb / rb + 2.0 * k / (3.0 * rho) - 2.0 * kb / (3.0 * rb);
            let div_v = s.dv[0][0][p] + s.dv[1][1][p] + s.dv[2][2][p];
            let (sk, g) = source_terms(params, rho, k, pp, &velocity_gradient(&s, p, gl), ga);

            let mut out = [0.0; 9];
            for i in 0..3 {
                out[i] = a * v[i];
                out[3 + i] = inv * s.visc[i][p] - coef * ga[i] / gl - 2.0 / (3.0 * gl) * s.grad_m[i][p];
            }
            out[6] = inv * s.lap_h[p] - gl * pp * div_v + sk / rho - gl * dot(&s.grad_h);
            out[7] = inv * s.lap_m[p] + g / rho - eps - gl * dot(&s.grad_m);
            out[8] = inv * s.lap_eps[p] + c1 * g * eps / (rho * k) - c2 * eps * eps / k
                - gl * dot(&s.grad_eps);
            out
        })
        .collect();
    drop(s);

    let spectra = (0..9)
        .into_par_iter()
        .map(|c| {
            let values = pointwise.iter().map(|o| o[c]).collect();
            ScalarField::from_vec(grid, values)?.to_spectrum()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = spectra.into_iter();
    let mut take = move || it.next().expect("nine outputs");
    let flux = [take(), take(), take()];
    let f1 = divergence(&flux).scale(-gl);
    let tendency = Perturbation {
        a: f1,
        v: [take(), take(), take()],
        h: take(),
        m: take(),
        eps: take(),
    };
    Ok(state::dealias(&tendency))
}

/// Evaluates `F1..F5` for a state given by grid samples.
pub fn rhs(w: &PerturbationState, params: &ModelParams, constants: &DerivedConstants) -> Result<Tendency> {
    rhs_spectral(&state::to_spectral(w)?, params, constants)
}

/// `dW/dt = A W + F(W)`, the full right side of the evolution equations.
pub fn time_derivative(
    w: &SpectralState,
    params: &ModelParams,
    constants: &DerivedConstants,
) -> Result<SpectralState> {
    let f = rhs_spectral(w, params, constants)?;
    Ok(state::add_scaled(&semigroup::apply_generator(w, constants), 1.0, &f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_constants, PressureLaw};
    use std::f64::consts::PI;

    fn zero_state(g: Grid) -> PerturbationState {
        let z = ScalarField::zeros(g);
        Perturbation::from_components([
            z.clone(),
            z.clone(),
            z.clone(),
            z.clone(),
            z.clone(),
            z.clone(),
            z,
        ])
    }

    fn setup() -> (ModelParams, DerivedConstants) {
        let params = ModelParams {
            rho_bar: 1.3,
            k_bar: 0.8,
            ..Default::default()
        };
        let c = derive_constants(&params).unwrap();
        (params, c)
    }

    fn all_zero(t: &Tendency) -> bool {
        t.components()
            .iter()
            .all(|s| s.coefficients().iter().all(|z| z.re == 0.0 && z.im == 0.0))
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let g = Grid::new(8, 5.0).unwrap();
        let (params, c) = setup();
        assert!(all_zero(&rhs(&zero_state(g), &params, &c).unwrap()));
        let (sk, gg) = turbulence_sources(&zero_state(g), &params, &c).unwrap();
        assert!(sk.values().iter().chain(gg.values()).all(|x| *x == 0.0));
    }

    #[test]
    fn f1_of_density_wave_in_uniform_flow() {
        let g = Grid::new(16, 7.0).unwrap();
        let (params, c) = setup();
        let k = 2.0 * PI / g.length();
        let mut w = zero_state(g);
        w.a = ScalarField::from_fn(g, |x| 0.01 * (k * x[0]).sin());
        w.v[0] = ScalarField::constant(g, 1.0);
        let f1 = rhs(&w, &params, &c).unwrap().a.to_field().unwrap();
        let gl = c.velocity_scale();
        for (p, val) in f1.values().iter().enumerate() {
            let x = g.position(p);
            assert!((val + gl * 0.01 * k * (k * x[0]).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_m_gives_zero_forcing() {
        let g = Grid::new(8, 3.0).unwrap();
        let (params, c) = setup();
        let mut w = zero_state(g);
        w.m = ScalarField::constant(g, 1e-3);
        let t = rhs(&w, &params, &c).unwrap();
        for s in [&t.v[0], &t.v[1], &t.v[2], &t.m, &t.eps] {
            assert!(s.coefficients().iter().all(|z| z.norm() < 1e-18));
        }
    }

    #[test]
    fn shear_mode_sources() {
        let g = Grid::new(16, 4.0).unwrap();
        let (params, c) = setup();
        let k = 2.0 * PI / g.length();
        let gl = c.velocity_scale();
        let mut w = zero_state(g);
        // u = (gl sin(k x2), 0, 0)
        w.v[0] = ScalarField::from_fn(g, |x| (k * x[1]).sin());
        let (sk, gg) = turbulence_sources(&w, &params, &c).unwrap();
        for p in 0..g.len() {
            let x = g.position(p);
            let d = gl * k * (k * x[1]).cos();
            assert!((sk.values()[p] - params.mu * d * d).abs() < 1e-12);
            assert!((gg.values()[p] - params.mu_e() * d * d).abs() < 1e-12);
        }
    }

    #[test]
    fn density_wave_sources() {
        let g = Grid::new(16, 4.0).unwrap();
        let (params, c) = setup();
        let k = 2.0 * PI / g.length();
        let amp = 0.05;
        let mut w = zero_state(g);
        w.a = ScalarField::from_fn(g, |x| amp * (k * x[0]).sin());
        let (sk, gg) = turbulence_sources(&w, &params, &c).unwrap();
        for p in 0..g.len() {
            let x = g.position(p);
            let rho = params.rho_bar + amp * (k * x[0]).sin();
            let d = amp * k * (k * x[0]).cos();
            let expect = params.mu_t / (rho * rho) * params.pressure.derivative(rho) * d * d;
            assert!((sk.values()[p] - expect).abs() < 1e-13);
            assert!(gg.values()[p].abs() < 1e-15);
        }
    }

    #[test]
    fn floor_breach_reports_location() {
        let g = Grid::new(8, 3.0).unwrap();
        let (params, c) = setup();
        let mut w = zero_state(g);
        w.a.values_mut()[(2 * 8 + 5) * 8 + 1] = -0.95 * params.rho_bar;
        match rhs(&w, &params, &c) {
            Err(Error::StateValidity { field, location, .. }) => {
                assert_eq!(field, "rho");
                assert_eq!(location, [2, 5, 1]);
            }
            other => panic!("expected validity error, got {other:?}"),
        }
        let mut w = zero_state(g);
        w.m.values_mut()[7] = -0.95 * params.k_bar;
        assert!(matches!(
            rhs(&w, &params, &c),
            Err(Error::StateValidity { field: "k", location: [0, 0, 7], .. })
        ));
    }

    fn smooth_state(g: Grid, scale: f64) -> PerturbationState {
        let k = 2.0 * PI / g.length();
        let f = |c: [f64; 6]| {
            ScalarField::from_fn(g, move |x| {
                scale
                    * (c[0] * (k * x[0] + c[1]).sin() * (k * x[1]).cos()
                        + c[2] * (k * x[2] + c[3]).cos()
                        + c[4] * (k * (x[0] + x[2]) + c[5]).sin())
            })
        };
        Perturbation::from_components([
            f([0.3, 0.1, 0.2, 0.4, 0.1, 0.0]),
            f([0.2, 0.5, 0.1, 0.0, 0.3, 0.7]),
            f([0.1, 1.1, 0.4, 0.2, 0.2, 0.1]),
            f([0.3, 0.2, 0.2, 0.9, 0.1, 0.4]),
            f([0.2, 0.3, 0.1, 0.5, 0.2, 0.2]),
            f([0.1, 0.7, 0.3, 0.1, 0.2, 0.6]),
            f([0.2, 0.4, 0.2, 0.3, 0.1, 0.9]),
        ])
    }

    #[test]
    fn mean_of_f1_vanishes() {
        let g = Grid::new(16, 6.0).unwrap();
        let (params, c) = setup();
        let t = rhs(&smooth_state(g, 0.2), &params, &c).unwrap();
        let f1 = t.a.to_field().unwrap();
        let scale = f1.max_abs();
        assert!(f1.mean().abs() < 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn f1_scales_quadratically() {
        let g = Grid::new(16, 6.0).unwrap();
        let (params, c) = setup();
        let norms: Vec<f64> = [1.0, 0.5, 0.25]
            .iter()
            .map(|s| {
                let t = rhs(&smooth_state(g, 0.1 * s), &params, &c).unwrap();
                t.a.l2_norm_sq().sqrt()
            })
            .collect();
        assert!((norms[0] / norms[1] - 4.0).abs() < 1e-10);
        assert!((norms[1] / norms[2] - 4.0).abs() < 1e-10);
    }

    /// Second-order centered finite-difference oracle for the printed
    /// forcing terms, including the pointwise product `a v` in `F1`.
    fn fd_rhs(w: &PerturbationState, params: &ModelParams, c: &DerivedConstants) -> [Vec<f64>; 7] {
        let g = w.a.grid();
        let n = g.n();
        let h = g.spacing();
        let idx = |i: usize, j: usize, k: usize| (i % n * n + j % n) * n + k % n;
        let shift = |p: usize, axis: usize, s: isize| {
            let mut ijk = [p / (n * n), (p / n) % n, p % n];
            ijk[axis] = (ijk[axis] as isize + s).rem_euclid(n as isize) as usize;
            idx(ijk[0], ijk[1], ijk[2])
        };
        let d1 = |f: &[f64], p: usize, ax: usize| (f[shift(p, ax, 1)] - f[shift(p, ax, -1)]) / (2.0 * h);
        let d2 = |f: &[f64], p: usize, ax: usize| {
            (f[shift(p, ax, 1)] - 2.0 * f[p] + f[shift(p, ax, -1)]) / (h * h)
        };
        let dmix = |f: &[f64], p: usize, a1: usize, a2: usize| {
            if a1 == a2 {
                return d2(f, p, a1);
            }
            let pp = shift(shift(p, a1, 1), a2, 1);
            let pm = shift(shift(p, a1, 1), a2, -1);
            let mp = shift(shift(p, a1, -1), a2, 1);
            let mm = shift(shift(p, a1, -1), a2, -1);
            (f[pp] - f[pm] - f[mp] + f[mm]) / (4.0 * h * h)
        };
        let lap = |f: &[f64], p: usize| d2(f, p, 0) + d2(f, p, 1) + d2(f, p, 2);
        let a = w.a.values();
        let v = [w.v[0].values(), w.v[1].values(), w.v[2].values()];
        let (hh, m, e) = (w.h.values(), w.m.values(), w.eps.values());
        let gl = c.velocity_scale();
        let (rb, kb) = (params.rho_bar, params.k_bar);
        let pb = params.pressure.derivative(rb);
        let av: [Vec<f64>; 3] = [0, 1, 2].map(|j| (0..g.len()).map(|p| a[p] * v[j][p]).collect());
        let mut out: [Vec<f64>; 7] = Default::default();
        for p in 0..g.len() {
            let rho = a[p] + rb;
            let k = m[p] + kb;
            let inv = 1.0 / rho - 1.0 / rb;
            let pp = params.pressure.derivative(rho);
            let ga = [0, 1, 2].map(|ax| d1(a, p, ax));
            let mut du = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    du[i][j] = gl * d1(v[i], p, j);
                }
            }
            let div_v = (du[0][0] + du[1][1] + du[2][2]) / gl;
            let (sk, gg) = source_terms(params, rho, k, pp, &du, ga);
            let vdot = |f: &[f64]| (0..3).map(|ax| v[ax][p] * d1(f, p, ax)).sum::<f64>();
            out[0].push(-gl * (0..3).map(|j| d1(&av[j], p, j)).sum::<f64>());
            let coef = pp / rho - pb / rb + 2.0 * k / (3.0 * rho) - 2.0 * kb / (3.0 * rb);
            for i in 0..3 {
                let visc = lap(v[i], p) + (0..3).map(|j| dmix(v[j], p, i, j)).sum::<f64>();
                out[1 + i].push(inv * visc - coef * ga[i] / gl - 2.0 / (3.0 * gl) * d1(m, p, i));
            }
            out[4].push(inv * lap(hh, p) - gl * pp * div_v + sk / rho - gl * vdot(hh));
            out[5].push(inv * lap(m, p) + gg / rho - e[p] - gl * vdot(m));
            out[6].push(
                inv * lap(e, p) + params.c1 * gg * e[p] / (rho * k) - params.c2 * e[p] * e[p] / k
                    - gl * vdot(e),
            );
        }
        out
    }

    fn fd_discrepancy(n: usize, params: &ModelParams, c: &DerivedConstants) -> f64 {
        let g = Grid::new(n, 2.0 * PI).unwrap();
        let w = smooth_state(g, 0.2);
        let spectral = state::to_real(&rhs(&w, params, c).unwrap()).unwrap();
        let fd = fd_rhs(&w, params, c);
        let mut worst: f64 = 0.0;
        for (s, f) in spectral.components().iter().zip(fd.iter()) {
            for (x, y) in s.values().iter().zip(f) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }

    #[test]
    fn agrees_with_finite_differences_at_second_order() {
        let params = ModelParams {
            rho_bar: 1.1,
            k_bar: 0.9,
            pressure: PressureLaw::Polytropic {
                coefficient: 1.5,
                exponent: 1.4,
            },
            ..Default::default()
        };
        let c = derive_constants(&params).unwrap();
        let e1 = fd_discrepancy(24, &params, &c);
        let e2 = fd_discrepancy(48, &params, &c);
        let order = (e1 / e2).log2();
        assert!(e2 < 5e-3, "discrepancy {e2}");
        assert!(order > 1.8, "observed order {order} ({e1} -> {e2})");
    }
}
