//! Initial-data recipes for box runs.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{sobolev_norm, Grid, MultiIndex, ScalarField};
use crate::model::{DerivedConstants, Perturbation, PerturbationState};
use crate::state;

/// Which of `(a, v, h, m, eps)` a recipe populates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldMask(pub [bool; 5]);

impl FieldMask {
    pub const ALL: FieldMask = FieldMask([true; 5]);

    /// Parses a comma-separated list of `a, v, h, m, eps`, or `all`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut mask = [false; 5];
        for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "all" => mask = [true; 5],
                "a" => mask[0] = true,
                "v" => mask[1] = true,
                "h" => mask[2] = true,
                "m" => mask[3] = true,
                "eps" => mask[4] = true,
                other => return Err(Error::Domain(format!("unknown field `{other}` in mask"))),
            }
        }
        Ok(FieldMask(mask))
    }

    pub fn render(&self) -> String {
        if self.0 == [true; 5] {
            return "all".into();
        }
        let names = ["a", "v", "h", "m", "eps"];
        names
            .iter()
            .zip(self.0)
            .filter(|(_, on)| *on)
            .map(|(n, _)| *n)
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Recipe {
    Zero,
    /// `amplitude * exp(-|x - center|^2 / (2 width^2))` in every masked field
    /// (each velocity component alike). `center = None` is the box center.
    GaussianBump {
        amplitude: f64,
        width: f64,
        center: Option<[f64; 3]>,
        fields: FieldMask,
    },
    /// Seeded white noise under a Gaussian envelope of the given width,
    /// smoothed by `exp(-decay_rate |xi|^2)` and scaled to the amplitude in
    /// max norm.
    RandomSmooth {
        amplitude: f64,
        decay_rate: f64,
        envelope_width: f64,
        fields: FieldMask,
    },
}

impl Recipe {
    /// Radius containing the data for practical purposes.
    pub fn support_radius(&self) -> f64 {
        match self {
            Recipe::Zero => 0.0,
            Recipe::GaussianBump { width, .. } => 3.0 * width,
            Recipe::RandomSmooth {
                envelope_width,
                decay_rate,
                ..
            } => 3.0 * (envelope_width * envelope_width + 2.0 * decay_rate).sqrt(),
        }
    }
}

/// Relative size of the H^3 norm beyond the dealiasing cutoff that makes the
/// data count as unresolved.
pub const RESOLUTION_TOL: f64 = 1e-6;

/// Time before acoustic waves from the data reach its periodic images.
pub fn fidelity_window(recipe: &Recipe, grid: Grid, constants: &DerivedConstants) -> f64 {
    ((0.5 * grid.length() - recipe.support_radius()) / constants.gamma).max(0.0)
}

fn masked(grid: Grid, mask: FieldMask, mut make: impl FnMut() -> ScalarField) -> PerturbationState {
    let zero = ScalarField::zeros(grid);
    let mut pick = |on: bool| if on { make() } else { zero.clone() };
    let a = pick(mask.0[0]);
    let v = [pick(mask.0[1]), pick(mask.0[1]), pick(mask.0[1])];
    let h = pick(mask.0[2]);
    let m = pick(mask.0[3]);
    let eps = pick(mask.0[4]);
    Perturbation { a, v, h, m, eps }
}

fn gaussian(grid: Grid, amplitude: f64, width: f64, center: [f64; 3]) -> ScalarField {
    let l = grid.length();
    ScalarField::from_fn(grid, |x| {
        // nearest periodic image
        let r2: f64 = (0..3)
            .map(|i| {
                let d = (x[i] - center[i]).rem_euclid(l);
                d.min(l - d).powi(2)
            })
            .sum();
        amplitude * (-r2 / (2.0 * width * width)).exp()
    })
}

fn random_smooth(grid: Grid, rng: &mut ChaCha8Rng, decay_rate: f64, envelope_width: f64) -> Result<ScalarField> {
    let center = [0.5 * grid.length(); 3];
    let envelope = gaussian(grid, 1.0, envelope_width, center);
    let noise: Vec<f64> = envelope
        .values()
        .iter()
        .map(|e| e * rng.random_range(-1.0..1.0))
        .collect();
    ScalarField::from_vec(grid, noise)?
        .to_spectrum()?
        .map_modes(|mode, c| c * (-decay_rate * mode.xi_sq()).exp())
        .to_field()
}

/// Generated data together with the quantities a run reports about it.
#[derive(Clone, Debug)]
pub struct InitialData {
    pub state: PerturbationState,
    /// `||W0||_{H^3}` after any rescaling.
    pub h3_norm: f64,
    /// Factor applied to meet the `delta` cap (1 when none was needed).
    pub rescale: f64,
}

/// Builds the recipe on `grid`. With `delta`, data whose H^3 norm exceeds it
/// is scaled down to exactly `delta`.
pub fn make_initial_data(recipe: &Recipe, grid: Grid, seed: u64, delta: Option<f64>) -> Result<InitialData> {
    if let Some(d) = delta {
        if !(d > 0.0) {
            return Err(Error::Domain(format!("delta must be positive, got {d}")));
        }
    }
    let state = match *recipe {
        Recipe::Zero => masked(grid, FieldMask([false; 5]), || ScalarField::zeros(grid)),
        Recipe::GaussianBump {
            amplitude,
            width,
            center,
            fields,
        } => {
            if !(width > 0.0) {
                return Err(Error::Domain(format!("bump width must be positive, got {width}")));
            }
            let c = center.unwrap_or([0.5 * grid.length(); 3]);
            let bump = gaussian(grid, amplitude, width, c);
            masked(grid, fields, || bump.clone())
        }
        Recipe::RandomSmooth {
            amplitude,
            decay_rate,
            envelope_width,
            fields,
        } => {
            if !(decay_rate > 0.0 && envelope_width > 0.0) {
                return Err(Error::Domain(
                    "random-smooth needs positive decay rate and envelope width".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut failure = None;
            let mut st = masked(grid, fields, || {
                random_smooth(grid, &mut rng, decay_rate, envelope_width).unwrap_or_else(|e| {
                    failure = Some(e);
                    ScalarField::zeros(grid)
                })
            });
            if let Some(e) = failure {
                return Err(e);
            }
            for f in st.components_mut() {
                let peak = f.max_abs();
                if peak > 0.0 {
                    *f = f.map(|x| amplitude * x / peak);
                }
            }
            st
        }
    };

    let spec = state::to_spectral(&state)?;
    let comps = spec.components();
    let h3 = sobolev_norm(&comps, 3)?;
    if h3 > 0.0 {
        let n = grid.n();
        let all = MultiIndex::range(0, 3);
        let tail: f64 = comps
            .iter()
            .map(|s| {
                s.reduce_modes(|mode, c| {
                    if mode.retained(n) {
                        0.0
                    } else {
                        let w: f64 = all.iter().map(|&al| mode.derivative_weight(al)).sum();
                        mode.multiplicity * w * c.norm_sqr()
                    }
                }) * grid.volume()
            })
            .sum();
        if tail.sqrt() > RESOLUTION_TOL * h3 {
            return Err(Error::Resolution(format!(
                "data not resolved on {n}^3 points: H^3 tail fraction {:.3e} exceeds {RESOLUTION_TOL:e}",
                tail.sqrt() / h3
            )));
        }
    }
    let rescale = match delta {
        Some(d) if h3 > d => d / h3,
        _ => 1.0,
    };
    let state = if rescale == 1.0 {
        state
    } else {
        state.map(|f| f.map(|x| rescale * x))
    };
    Ok(InitialData {
        state,
        h3_norm: h3 * rescale,
        rescale,
    })
}
