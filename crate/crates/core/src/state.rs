//! Spectral form of the perturbation state and per-mode traversal helpers.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::Result;
use crate::field::{Grid, Mode, Spectrum};
use crate::model::{Perturbation, PerturbationState};

pub type SpectralState = Perturbation<Spectrum>;

pub fn to_spectral(state: &PerturbationState) -> Result<SpectralState> {
    state.try_map(|f| f.to_spectrum())
}

pub fn to_real(state: &SpectralState) -> Result<PerturbationState> {
    state.try_map(|s| s.to_field())
}

pub fn zeros(grid: Grid) -> SpectralState {
    let z = Spectrum::zeros(grid);
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

pub fn grid_of(state: &SpectralState) -> Grid {
    state.a.grid()
}

/// Calls `f` on the seven coefficients of every mode, data-parallel over planes.
pub fn update_modes(state: &mut SpectralState, f: impl Fn(&Mode, [&mut Complex64; 7]) + Sync) {
    let grid = grid_of(state);
    let (n, nh) = (grid.n(), grid.half());
    let plane = n * nh;
    let [a, v1, v2, v3, h, m, e] = state.components_mut();
    (
        a.coefficients_mut().par_chunks_mut(plane),
        v1.coefficients_mut().par_chunks_mut(plane),
        v2.coefficients_mut().par_chunks_mut(plane),
        v3.coefficients_mut().par_chunks_mut(plane),
        h.coefficients_mut().par_chunks_mut(plane),
        m.coefficients_mut().par_chunks_mut(plane),
        e.coefficients_mut().par_chunks_mut(plane),
    )
        .into_par_iter()
        .enumerate()
        .for_each(|(i, (pa, p1, p2, p3, ph, pm, pe))| {
            for j in 0..n {
                for kk in 0..nh {
                    let idx = j * nh + kk;
                    let mode = grid.mode(i, j, kk);
                    f(
                        &mode,
                        [
                            &mut pa[idx],
                            &mut p1[idx],
                            &mut p2[idx],
                            &mut p3[idx],
                            &mut ph[idx],
                            &mut pm[idx],
                            &mut pe[idx],
                        ],
                    );
                }
            }
        });
}

/// `x + s * y`, componentwise.
pub fn add_scaled(x: &SpectralState, s: f64, y: &SpectralState) -> SpectralState {
    x.zip_map(y, |a, b| a.add_scaled(s, b))
}

pub fn scale(x: &SpectralState, s: f64) -> SpectralState {
    x.map(|a| a.scale(s))
}

pub fn dealias(x: &SpectralState) -> SpectralState {
    x.map(|a| a.dealias())
}

/// `||W||_2^2` summed over the seven components.
pub fn l2_norm_sq(x: &SpectralState) -> f64 {
    x.components().iter().map(|s| s.l2_norm_sq()).sum()
}
