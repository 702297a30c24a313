//! Physical constants, closed-form rate formulas and the change of
//! variables between physical and perturbation unknowns.

use crate::error::{Error, Result};
use crate::field::ScalarField;

/// Scalar pressure law `p(rho)` with its derivative.
#[allow(unpredictable_function_pointer_comparisons)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PressureLaw {
    /// `p(rho) = coefficient * rho^exponent`.
    Polytropic { coefficient: f64, exponent: f64 },
    /// Arbitrary smooth law supplied as a pair of function pointers.
    Custom {
        pressure: fn(f64) -> f64,
        derivative: fn(f64) -> f64,
    },
}

impl Default for PressureLaw {
    fn default() -> Self {
        PressureLaw::Polytropic {
            coefficient: 1.0,
            exponent: 1.4,
        }
    }
}

impl PressureLaw {
    pub fn pressure(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::Polytropic {
                coefficient,
                exponent,
            } => coefficient * rho.powf(exponent),
            PressureLaw::Custom { pressure, .. } => pressure(rho),
        }
    }

    pub fn derivative(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::Polytropic {
                coefficient,
                exponent,
            } => coefficient * exponent * rho.powf(exponent - 1.0),
            PressureLaw::Custom { derivative, .. } => derivative(rho),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub rho_bar: f64,
    pub k_bar: f64,
    pub mu: f64,
    pub mu_t: f64,
    pub c1: f64,
    pub c2: f64,
    pub pressure: PressureLaw,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            rho_bar: 1.0,
            k_bar: 1.0,
            mu: 1.0,
            mu_t: 1.0,
            c1: 1.44,
            c2: 1.92,
            pressure: PressureLaw::default(),
        }
    }
}

impl ModelParams {
    /// Effective viscosity `mu + mu_t`.
    pub fn mu_e(&self) -> f64 {
        self.mu + self.mu_t
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho_bar", self.rho_bar),
            ("k_bar", self.k_bar),
            ("mu", self.mu),
            ("mu_t", self.mu_t),
            ("c1", self.c1),
            ("c2", self.c2),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameters(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        let sound = self.pressure.derivative(self.rho_bar) + self.k_bar;
        if !(sound > 0.0) {
            return Err(Error::InvalidParameters(format!(
                "p'(rho_bar) + k_bar must be positive, got {sound}"
            )));
        }
        Ok(())
    }
}

/// The two constants of the reformulated system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedConstants {
    /// Sound-like speed `sqrt(p'(rho_bar) + k_bar)`.
    pub gamma: f64,
    /// Inverse reference density `1 / rho_bar`.
    pub lambda: f64,
}

impl DerivedConstants {
    /// Velocity scale `gamma * lambda` linking `u` and `v`.
    pub fn velocity_scale(&self) -> f64 {
        self.gamma * self.lambda
    }

    /// Radius `gamma / lambda` where the acoustic mode matrix has a double eigenvalue.
    pub fn degenerate_radius(&self) -> f64 {
        self.gamma / self.lambda
    }
}

/// Computes `(gamma, lambda)` from the model parameters.
///
/// Only `rho_bar > 0` and `p'(rho_bar) + k_bar > 0` are required here, so the
/// identity configuration `(rho_bar = 1, k_bar = 0, p = rho)` is accepted.
pub fn derive_constants(params: &ModelParams) -> Result<DerivedConstants> {
    if !(params.rho_bar > 0.0 && params.rho_bar.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "rho_bar must be positive, got {}",
            params.rho_bar
        )));
    }
    let sound = params.pressure.derivative(params.rho_bar) + params.k_bar;
    if !(sound > 0.0 && sound.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "p'(rho_bar) + k_bar must be positive, got {sound}"
        )));
    }
    Ok(DerivedConstants {
        gamma: sound.sqrt(),
        lambda: 1.0 / params.rho_bar,
    })
}

/// Query for the decay exponent `sigma(p, q; l)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateQuery {
    pub p: f64,
    pub q: f64,
    pub l: u32,
}

impl RateQuery {
    pub fn new(p: f64, q: f64, l: u32) -> Self {
        RateQuery { p, q, l }
    }
}

/// `3/2 (1/p - 1/q) + l/2`. `q = f64::INFINITY` is allowed.
pub fn sigma(query: RateQuery) -> Result<f64> {
    let RateQuery { p, q, l } = query;
    if !(p >= 1.0) || p.is_infinite() || q.is_nan() || p > q {
        return Err(Error::Domain(format!(
            "sigma requires 1 <= p <= q, got p = {p}, q = {q}"
        )));
    }
    Ok(1.5 * (1.0 / p - 1.0 / q) + 0.5 * l as f64)
}

/// Constant of the convolution inequality
/// `int_0^t (1+t-s)^-r1 (1+s)^-r2 ds <= C(r1, r2) (1+t)^-r2`.
pub fn c1_bound(r1: f64, r2: f64) -> Result<f64> {
    if !(r1 > 1.0) || !(0.0..=r1).contains(&r2) {
        return Err(Error::Domain(format!(
            "c1_bound requires r1 > 1 and 0 <= r2 <= r1, got r1 = {r1}, r2 = {r2}"
        )));
    }
    Ok(2f64.powf(r2 + 1.0) / (r1 - 1.0))
}

/// Result of [`iteration_cap`]. A negative cap is reported as-is with
/// `negative` set; on the admissible domain the raw value is bounded below
/// by `2 (5/4 - 1/4) - 2 = 0`, so the flag only guards the formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IterationCap {
    pub value: i64,
    pub negative: bool,
}

/// `floor(2n (3/(2p) - 1/4) - 2)` for `n >= 1`, `p` in `[1, 6/5)`.
pub fn iteration_cap(n: u32, p: f64) -> Result<IterationCap> {
    if n == 0 {
        return Err(Error::Domain("iteration_cap requires n >= 1".into()));
    }
    if !(1.0..1.2).contains(&p) {
        return Err(Error::Domain(format!(
            "iteration_cap requires p in [1, 6/5), got {p}"
        )));
    }
    let raw = 2.0 * n as f64 * (1.5 / p - 0.25) - 2.0;
    let value = raw.floor() as i64;
    Ok(IterationCap {
        value,
        negative: value < 0,
    })
}

pub const COMPONENT_NAMES: [&str; 7] = ["a", "v1", "v2", "v3", "h", "m", "eps"];

/// The perturbation unknowns `(a, v, h, m, eps)`, generic over the field
/// representation (real samples or spectra).
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation<F> {
    pub a: F,
    pub v: [F; 3],
    pub h: F,
    pub m: F,
    pub eps: F,
}

impl<F> Perturbation<F> {
    pub fn from_components(c: [F; 7]) -> Self {
        let [a, v1, v2, v3, h, m, eps] = c;
        Perturbation {
            a,
            v: [v1, v2, v3],
            h,
            m,
            eps,
        }
    }

    pub fn into_components(self) -> [F; 7] {
        let [v1, v2, v3] = self.v;
        [self.a, v1, v2, v3, self.h, self.m, self.eps]
    }

    pub fn components(&self) -> [&F; 7] {
        [
            &self.a, &self.v[0], &self.v[1], &self.v[2], &self.h, &self.m, &self.eps,
        ]
    }

    pub fn components_mut(&mut self) -> [&mut F; 7] {
        let [v1, v2, v3] = &mut self.v;
        [&mut self.a, v1, v2, v3, &mut self.h, &mut self.m, &mut self.eps]
    }

    pub fn map<G>(&self, mut f: impl FnMut(&F) -> G) -> Perturbation<G> {
        Perturbation {
            a: f(&self.a),
            v: [f(&self.v[0]), f(&self.v[1]), f(&self.v[2])],
            h: f(&self.h),
            m: f(&self.m),
            eps: f(&self.eps),
        }
    }

    pub fn try_map<G>(&self, mut f: impl FnMut(&F) -> Result<G>) -> Result<Perturbation<G>> {
        Ok(Perturbation {
            a: f(&self.a)?,
            v: [f(&self.v[0])?, f(&self.v[1])?, f(&self.v[2])?],
            h: f(&self.h)?,
            m: f(&self.m)?,
            eps: f(&self.eps)?,
        })
    }

    pub fn zip_map<G, H>(&self, other: &Perturbation<G>, mut f: impl FnMut(&F, &G) -> H) -> Perturbation<H> {
        Perturbation {
            a: f(&self.a, &other.a),
            v: [
                f(&self.v[0], &other.v[0]),
                f(&self.v[1], &other.v[1]),
                f(&self.v[2], &other.v[2]),
            ],
            h: f(&self.h, &other.h),
            m: f(&self.m, &other.m),
            eps: f(&self.eps, &other.eps),
        }
    }
}

pub type PerturbationState = Perturbation<ScalarField>;

/// Physical unknowns `(rho, u, h, k, eps)` on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalState {
    pub rho: ScalarField,
    pub u: [ScalarField; 3],
    pub h: ScalarField,
    pub k: ScalarField,
    pub eps: ScalarField,
}

impl PhysicalState {
    fn fields(&self) -> [&ScalarField; 7] {
        [
            &self.rho, &self.u[0], &self.u[1], &self.u[2], &self.h, &self.k, &self.eps,
        ]
    }
}

fn check_common_grid(fields: [&ScalarField; 7]) -> Result<()> {
    let grid = fields[0].grid();
    for (name, f) in COMPONENT_NAMES.iter().zip(fields) {
        if f.grid() != grid {
            return Err(Error::Shape(format!(
                "component {name} lives on {:?}, expected {:?}",
                f.grid(),
                grid
            )));
        }
    }
    Ok(())
}

/// `a = rho - rho_bar`, `v = u / (gamma lambda)`, `m = k - k_bar`.
pub fn to_perturbation(
    state: &PhysicalState,
    params: &ModelParams,
    constants: &DerivedConstants,
) -> Result<PerturbationState> {
    check_common_grid(state.fields())?;
    let scale = 1.0 / constants.velocity_scale();
    Ok(Perturbation {
        a: state.rho.map(|x| x - params.rho_bar),
        v: [
            state.u[0].map(|x| x * scale),
            state.u[1].map(|x| x * scale),
            state.u[2].map(|x| x * scale),
        ],
        h: state.h.clone(),
        m: state.k.map(|x| x - params.k_bar),
        eps: state.eps.clone(),
    })
}

pub fn from_perturbation(
    state: &PerturbationState,
    params: &ModelParams,
    constants: &DerivedConstants,
) -> Result<PhysicalState> {
    check_common_grid(state.components())?;
    let scale = constants.velocity_scale();
    Ok(PhysicalState {
        rho: state.a.map(|x| x + params.rho_bar),
        u: [
            state.v[0].map(|x| x * scale),
            state.v[1].map(|x| x * scale),
            state.v[2].map(|x| x * scale),
        ],
        h: state.h.clone(),
        k: state.m.map(|x| x + params.k_bar),
        eps: state.eps.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use proptest::prelude::*;

    fn linear_pressure() -> PressureLaw {
        PressureLaw::Polytropic {
            coefficient: 1.0,
            exponent: 1.0,
        }
    }

    #[test]
    fn constants_identity_parameters() {
        let params = ModelParams {
            rho_bar: 1.0,
            k_bar: 0.0,
            pressure: linear_pressure(),
            ..Default::default()
        };
        let c = derive_constants(&params).unwrap();
        assert_eq!(c.gamma, 1.0);
        assert_eq!(c.lambda, 1.0);
    }

    #[test]
    fn constants_direct_arithmetic() {
        let params = ModelParams {
            rho_bar: 2.0,
            k_bar: 3.0,
            pressure: linear_pressure(),
            ..Default::default()
        };
        let c = derive_constants(&params).unwrap();
        assert_eq!(c.gamma, 2.0);
        assert_eq!(c.lambda, 0.5);
        assert_eq!(c.gamma * c.gamma, 1.0 + 3.0);
        assert_eq!(c.lambda * params.rho_bar, 1.0);
    }

    #[test]
    fn constants_reject_negative_sound_speed() {
        let params = ModelParams {
            rho_bar: 1.0,
            k_bar: -2.0,
            pressure: linear_pressure(),
            ..Default::default()
        };
        assert!(matches!(
            derive_constants(&params),
            Err(Error::InvalidParameters(_))
        ));
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(RateQuery::new(1.0, 2.0, 0)).unwrap(), 0.75);
        assert_eq!(sigma(RateQuery::new(1.0, 2.0, 1)).unwrap(), 1.25);
        assert_eq!(sigma(RateQuery::new(2.0, 2.0, 0)).unwrap(), 0.0);
        assert_eq!(sigma(RateQuery::new(1.0, f64::INFINITY, 0)).unwrap(), 1.5);
        assert!(matches!(
            sigma(RateQuery::new(3.0, 2.0, 0)),
            Err(Error::Domain(_))
        ));
        assert!(sigma(RateQuery::new(0.5, 2.0, 0)).is_err());
    }

    #[test]
    fn c1_bound_examples() {
        assert_eq!(c1_bound(2.0, 1.0).unwrap(), 4.0);
        assert_eq!(c1_bound(3.0, 0.0).unwrap(), 1.0);
        assert!(c1_bound(1.0, 0.0).is_err());
        assert!(c1_bound(2.0, 2.5).is_err());
        assert!(c1_bound(2.0, -0.1).is_err());
    }

    #[test]
    fn iteration_cap_examples() {
        assert_eq!(iteration_cap(2, 1.0).unwrap().value, 3);
        assert_eq!(iteration_cap(1, 1.0).unwrap().value, 0);
        // direct evaluation: 8 (3/(2p) - 1/4) - 2 just above 6
        let p = 1.2 - 1e-9;
        let raw = 8.0 * (1.5 / p - 0.25) - 2.0;
        assert!(raw > 6.0 && raw < 7.0);
        assert_eq!(iteration_cap(4, p).unwrap().value, 6);
        assert!(iteration_cap(1, 1.2).is_err());
        assert!(iteration_cap(1, 0.9).is_err());
        assert!(iteration_cap(0, 1.0).is_err());
    }

    #[test]
    fn iteration_cap_is_non_negative_on_its_domain() {
        // smallest raw value is 2 (5/4 - 1/4) - 2 = 0 as p -> 6/5, n = 1
        for n in 1..6 {
            for p in [1.0, 1.05, 1.1, 1.15, 1.199_999] {
                let cap = iteration_cap(n, p).unwrap();
                assert!(!cap.negative && cap.value >= 0);
            }
        }
    }

    fn sample_state(grid: Grid, seed: u64) -> PhysicalState {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = |offset: f64| {
            ScalarField::from_fn(grid, |_| offset + rng.random_range(-0.1..0.1))
        };
        PhysicalState {
            rho: f(1.3),
            u: [f(0.0), f(0.0), f(0.0)],
            h: f(0.0),
            k: f(0.7),
            eps: f(0.0),
        }
    }

    #[test]
    fn equilibrium_maps_to_zero() {
        let grid = Grid::new(4, 1.0).unwrap();
        let params = ModelParams {
            rho_bar: 1.3,
            k_bar: 0.7,
            ..Default::default()
        };
        let c = derive_constants(&params).unwrap();
        let zero = ScalarField::zeros(grid);
        let eq = PhysicalState {
            rho: ScalarField::constant(grid, 1.3),
            u: [zero.clone(), zero.clone(), zero.clone()],
            h: zero.clone(),
            k: ScalarField::constant(grid, 0.7),
            eps: zero.clone(),
        };
        let w = to_perturbation(&eq, &params, &c).unwrap();
        for comp in w.components() {
            assert!(comp.values().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn velocity_is_scaled_by_gamma_lambda() {
        let grid = Grid::new(4, 1.0).unwrap();
        let params = ModelParams {
            rho_bar: 2.0,
            k_bar: 3.0,
            pressure: linear_pressure(),
            ..Default::default()
        };
        let c = derive_constants(&params).unwrap();
        let zero = ScalarField::zeros(grid);
        let s = PhysicalState {
            rho: ScalarField::constant(grid, 2.1),
            u: [
                ScalarField::constant(grid, c.velocity_scale()),
                zero.clone(),
                zero.clone(),
            ],
            h: zero.clone(),
            k: ScalarField::constant(grid, 3.0),
            eps: zero.clone(),
        };
        let w = to_perturbation(&s, &params, &c).unwrap();
        assert!((w.a.values()[0] - 0.1).abs() < 1e-15);
        assert_eq!(w.v[0].values()[5], 1.0);
        assert_eq!(w.m.values()[0], 0.0);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let g1 = Grid::new(4, 1.0).unwrap();
        let g2 = Grid::new(6, 1.0).unwrap();
        let params = ModelParams::default();
        let c = derive_constants(&params).unwrap();
        let mut s = sample_state(g1, 1);
        s.h = ScalarField::zeros(g2);
        assert!(matches!(
            to_perturbation(&s, &params, &c),
            Err(Error::Shape(_))
        ));
    }

    proptest! {
        #[test]
        fn sigma_monotone(p in 1.0f64..2.0, dq in 0.0f64..4.0, dq2 in 0.0f64..4.0, l in 0u32..4) {
            let q1 = p + dq;
            let q2 = q1 + dq2;
            let s1 = sigma(RateQuery::new(p, q1, l)).unwrap();
            let s2 = sigma(RateQuery::new(p, q2, l)).unwrap();
            // sigma grows with q: the exponent is non-increasing as a bound
            // on decay of -sigma
            prop_assert!(s2 >= s1);
            let up = sigma(RateQuery::new(p, q1, l + 1)).unwrap();
            prop_assert!((up - s1 - 0.5).abs() < 1e-14);
            prop_assert_eq!(sigma(RateQuery::new(p, p, 0)).unwrap(), 0.0);
        }

        #[test]
        fn c1_bound_monotone(r1 in 1.01f64..5.0, dr in 0.01f64..2.0, frac in 0.0f64..1.0) {
            let r2 = frac * r1;
            let base = c1_bound(r1, r2).unwrap();
            prop_assert!(c1_bound(r1 + dr, r2).unwrap() < base);
            let r2_up = (r2 + dr).min(r1);
            if r2_up > r2 {
                prop_assert!(c1_bound(r1, r2_up).unwrap() > base);
            }
        }

        #[test]
        fn perturbation_round_trip(seed in 0u64..1000) {
            let grid = Grid::new(4, 2.0).unwrap();
            let params = ModelParams { rho_bar: 1.3, k_bar: 0.7, ..Default::default() };
            let c = derive_constants(&params).unwrap();
            let s = sample_state(grid, seed);
            let back = from_perturbation(&to_perturbation(&s, &params, &c).unwrap(), &params, &c).unwrap();
            for (x, y) in s.fields().iter().zip(back.fields()) {
                for (a, b) in x.values().iter().zip(y.values()) {
                    prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300));
                }
            }
        }
    }
}
