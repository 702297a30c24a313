//! Norm battery, energy functional, exponent fits and the verdicts built on
//! them.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::MultiIndex;
use crate::model::{c1_bound, sigma, DerivedConstants, ModelParams, PerturbationState, RateQuery};
use crate::quadrature::Quadrature;
use crate::rhs;
use crate::semigroup;
use crate::state::{self, SpectralState};

/// Default weight of the derivative sum in the energy functional.
pub const DEFAULT_C1_WEIGHT: f64 = 10.0;

/// One row of `norms.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub t: f64,
    pub l2: f64,
    pub l3: f64,
    pub l6: f64,
    pub linf: f64,
    /// `||grad W||_{H^2}`
    pub h2grad: f64,
    /// `||dW/dt||_2`
    pub dtl2: f64,
    #[serde(rename = "M")]
    pub energy: f64,
    pub mass: f64,
}

pub const CSV_HEADER: [&str; 9] = ["t", "l2", "l3", "l6", "linf", "h2grad", "dtl2", "M", "mass"];

impl NormRecord {
    pub fn values(&self) -> [f64; 9] {
        [
            self.t,
            self.l2,
            self.l3,
            self.l6,
            self.linf,
            self.h2grad,
            self.dtl2,
            self.energy,
            self.mass,
        ]
    }

    /// The row as CSV fields with 17 significant digits.
    pub fn csv_fields(&self) -> Vec<String> {
        self.values().iter().map(|v| format!("{v:.16e}")).collect()
    }
}

/// Time-ordered norm records of one trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormSeries {
    pub records: Vec<NormRecord>,
}

/// Columns of a [`NormSeries`] that decay claims refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Column {
    L2,
    L3,
    L6,
    Linf,
    H2grad,
    Dtl2,
    #[serde(rename = "M")]
    Energy,
}

impl Column {
    pub fn of(self, r: &NormRecord) -> f64 {
        match self {
            Column::L2 => r.l2,
            Column::L3 => r.l3,
            Column::L6 => r.l6,
            Column::Linf => r.linf,
            Column::H2grad => r.h2grad,
            Column::Dtl2 => r.dtl2,
            Column::Energy => r.energy,
        }
    }
}

impl NormSeries {
    pub fn push(&mut self, r: NormRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if !(r.t > last.t) {
                return Err(Error::Domain(format!(
                    "norm records must have increasing times ({} after {})",
                    r.t, last.t
                )));
            }
        }
        self.records.push(r);
        Ok(())
    }

    pub fn column(&self, c: Column) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, c.of(r))).collect()
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
        let headers = reader.headers().map_err(csv_error)?.clone();
        if headers.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(Error::Domain(format!(
                "{}: unexpected header {:?}",
                path.display(),
                headers
            )));
        }
        let mut series = NormSeries::default();
        for row in reader.deserialize() {
            series.push(row.map_err(csv_error)?)?;
        }
        Ok(series)
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Domain(format!("csv: {other:?}")),
    }
}

/// `sum_{lo <= |alpha| <= hi} ||d^alpha W||_2^2` over all seven components.
pub fn derivative_sum_sq(w: &SpectralState, lo: usize, hi: usize) -> f64 {
    let set = MultiIndex::range(lo, hi);
    w.components().iter().map(|s| s.derivative_norm_sq(&set)).sum()
}

/// `||grad W||_{H^2}^2 = sum_{1 <= |alpha| <= 3} ||d^alpha W||_2^2`.
pub fn gradient_h2_sq(w: &SpectralState) -> f64 {
    derivative_sum_sq(w, 1, 3)
}

/// `sum_{1 <= |alpha| <= 2} <d^alpha v, grad d^alpha a>`.
pub fn cross_term(w: &SpectralState) -> f64 {
    MultiIndex::range(1, 2)
        .iter()
        .map(|&alpha| {
            (0..3)
                .map(|i| {
                    w.v[i]
                        .derivative(alpha)
                        .inner(&w.a.derivative(alpha.plus_axis(i)))
                })
                .sum::<f64>()
        })
        .sum()
}

/// `M = c1_weight * sum_{1<=|alpha|<=3} ||d^alpha W||^2 + cross term`.
pub fn energy_functional(w: &SpectralState, c1_weight: f64) -> Result<f64> {
    if !(c1_weight > 0.0) {
        return Err(Error::Domain(format!("C1 weight must be positive, got {c1_weight}")));
    }
    Ok(c1_weight * gradient_h2_sq(w) + cross_term(w))
}

/// Outcome of an equivalence sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Equivalence {
    /// Smallest `C2` with `N / C2 <= M <= C2 N` over the sample.
    pub c2: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Whether `|cross| <= (1/2) sum (||d^alpha v||^2 + ||grad d^alpha a||^2)`
    /// held on every state.
    pub cauchy_schwarz: bool,
    pub samples: usize,
}

fn cauchy_schwarz_bound(w: &SpectralState) -> f64 {
    let mut total = 0.0;
    for alpha in MultiIndex::range(1, 2) {
        for i in 0..3 {
            total += w.v[i].derivative_norm_sq(&[alpha]);
            total += w.a.derivative_norm_sq(&[alpha.plus_axis(i)]);
        }
    }
    0.5 * total
}

pub fn check_equivalence(states: &[SpectralState], c1_weight: f64) -> Result<Equivalence> {
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    let mut samples = 0;
    let mut cauchy_schwarz = true;
    for w in states {
        let n = gradient_h2_sq(w);
        if n == 0.0 {
            continue;
        }
        let cross = cross_term(w);
        let m = c1_weight * n + cross;
        if !(m > 0.0) {
            return Err(Error::CoefficientTooSmall { value: m });
        }
        cauchy_schwarz &= cross.abs() <= cauchy_schwarz_bound(w) * (1.0 + 1e-12);
        let r = m / n;
        min_ratio = min_ratio.min(r);
        max_ratio = max_ratio.max(r);
        samples += 1;
    }
    if samples == 0 {
        return Err(Error::InsufficientData("equivalence needs a nonzero state".into()));
    }
    Ok(Equivalence {
        c2: max_ratio.max(1.0 / min_ratio),
        min_ratio,
        max_ratio,
        cauchy_schwarz,
        samples,
    })
}

/// `[l2, l3, l6, linf]` of the pointwise Euclidean norm `|W(x)|`.
pub fn lq_battery(w: &PerturbationState) -> [f64; 4] {
    let grid = w.a.grid();
    let n = grid.n();
    let comps = w.components();
    let partial: Vec<[f64; 4]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = [0.0f64; 4];
            for p in i * n * n..(i + 1) * n * n {
                let s: f64 = comps.iter().map(|f| f.values()[p].powi(2)).sum();
                let r = s.sqrt();
                acc[0] += s;
                acc[1] += s * r;
                acc[2] += s * s * s;
                acc[3] = acc[3].max(r);
            }
            acc
        })
        .collect();
    let mut tot = [0.0f64; 4];
    for a in &partial {
        for k in 0..3 {
            tot[k] += a[k];
        }
        tot[3] = tot[3].max(a[3]);
    }
    let dv = grid.cell_volume();
    [
        (tot[0] * dv).sqrt(),
        (tot[1] * dv).cbrt(),
        (tot[2] * dv).powf(1.0 / 6.0),
        tot[3],
    ]
}

/// What the time-derivative column is computed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dynamics {
    Linear,
    Nonlinear,
}

/// Evaluates the full norm battery of a spectral state at time `t`.
pub fn norm_record(
    t: f64,
    w: &SpectralState,
    params: &ModelParams,
    constants: &DerivedConstants,
    c1_weight: f64,
    dynamics: Dynamics,
) -> Result<NormRecord> {
    let real = state::to_real(w)?;
    let [l2, l3, l6, linf] = lq_battery(&real);
    let dt = match dynamics {
        Dynamics::Linear => semigroup::apply_generator(w, constants),
        Dynamics::Nonlinear => rhs::time_derivative(w, params, constants)?,
    };
    Ok(NormRecord {
        t,
        l2,
        l3,
        l6,
        linf,
        h2grad: gradient_h2_sq(w).sqrt(),
        dtl2: state::l2_norm_sq(&dt).sqrt(),
        energy: energy_functional(w, c1_weight)?,
        mass: real.a.integral(),
    })
}

/// Least-squares line through `(log(1+t), log value)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub exponent: f64,
    pub intercept: f64,
    pub window: [f64; 2],
    pub residual_rms: f64,
    pub samples: usize,
}

pub const MIN_FIT_SAMPLES: usize = 8;

pub fn fit_exponent(series: &[(f64, f64)], window: [f64; 2]) -> Result<FitResult> {
    let [t0, t1] = window;
    if !(t1 > t0) {
        return Err(Error::Domain(format!("fit window [{t0}, {t1}] is empty")));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= t0 && *t <= t1)
        .copied()
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples in [{t0}, {t1}], need {MIN_FIT_SAMPLES}",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::Domain(format!("non-positive value {v} at t = {t}")));
    }
    let xy: Vec<(f64, f64)> = pts.iter().map(|(t, v)| ((1.0 + t).ln(), v.ln())).collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let rss: f64 = xy
        .iter()
        .map(|p| (p.1 - intercept - exponent * p.0).powi(2))
        .sum();
    Ok(FitResult {
        exponent,
        intercept,
        window,
        residual_rms: (rss / n).sqrt(),
        samples: pts.len(),
    })
}

/// One entry of the convolution-bound certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvolutionCheck {
    pub r1: f64,
    pub r2: f64,
    pub t: f64,
    pub lhs: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvolutionReport {
    pub entries: Vec<ConvolutionCheck>,
    pub max_ratio: f64,
    pub pass: bool,
}

pub const LATTICE_R1: [f64; 4] = [1.25, 1.5, 2.0, 3.0];
pub const LATTICE_T: [f64; 5] = [0.1, 1.0, 10.0, 100.0, 1000.0];

/// The `(r1, r2)` pairs of the default lattice: `r2 in {0, r1/2, r1}`.
pub fn default_lattice() -> Vec<(f64, f64)> {
    LATTICE_R1
        .iter()
        .flat_map(|&r1| [(r1, 0.0), (r1, 0.5 * r1), (r1, r1)])
        .collect()
}

/// Compares `int_0^t (1+t-s)^-r1 (1+s)^-r2 ds` against
/// `C1(r1, r2) (1+t)^-r2` at every `t`.
pub fn verify_convolution_bound(r1: f64, r2: f64, t_grid: &[f64], tolerance: f64) -> Result<ConvolutionReport> {
    let c1 = c1_bound(r1, r2)?;
    let q = Quadrature::with_rel_tol(tolerance);
    let mut entries = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("t must be positive, got {t}")));
        }
        // split at t/2: each half carries one of the two endpoint peaks
        let lhs = q
            .integrate_panels(
                |s| (1.0 + t - s).powf(-r1) * (1.0 + s).powf(-r2),
                &[0.0, 0.5 * t, t],
            )?
            .value;
        let bound = c1 * (1.0 + t).powf(-r2);
        entries.push(ConvolutionCheck {
            r1,
            r2,
            t,
            lhs,
            bound,
            ratio: lhs / bound,
        });
    }
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    Ok(ConvolutionReport {
        entries,
        max_ratio,
        pass: max_ratio <= 1.0,
    })
}

/// Runs the whole default lattice.
pub fn verify_convolution_lattice(tolerance: f64) -> Result<ConvolutionReport> {
    let mut entries = Vec::new();
    for (r1, r2) in default_lattice() {
        entries.extend(verify_convolution_bound(r1, r2, &LATTICE_T, tolerance)?.entries);
    }
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    Ok(ConvolutionReport {
        entries,
        max_ratio,
        pass: max_ratio <= 1.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

/// One decay claim: the named column must decay at least like
/// `(1+t)^-sigma(p, q; l)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Claim {
    pub claim: &'static str,
    pub norm: Column,
    pub q: f64,
    pub l: u32,
    pub slack: f64,
}

/// Start of the default fitting window.
pub const FIT_T0: f64 = 4.0;
/// Upper cap of the default fitting window.
pub const FIT_T1_CAP: f64 = 50.0;
/// Required ratio `(1 + t1) / (1 + t0)`.
pub const FIT_MIN_SPAN: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ReportSettings {
    /// Lebesgue exponent of the initial data.
    pub p: f64,
    pub slack: f64,
    pub linf_slack: f64,
    /// Explicit window; otherwise `[FIT_T0, min(FIT_T1_CAP, 0.8 t_wrap)]`.
    pub window: Option<[f64; 2]>,
    pub t_wrap: Option<f64>,
}

impl Default for ReportSettings {
    fn default() -> Self {
        ReportSettings {
            p: 1.0,
            slack: 0.1,
            linf_slack: 0.15,
            window: None,
            t_wrap: None,
        }
    }
}

impl ReportSettings {
    pub fn claims(&self) -> Vec<Claim> {
        let c = |claim, norm, q, l, slack| Claim {
            claim,
            norm,
            q,
            l,
            slack,
        };
        vec![
            c("l2", Column::L2, 2.0, 0, self.slack),
            c("l3", Column::L3, 3.0, 0, self.slack),
            c("l6", Column::L6, 6.0, 0, self.slack),
            c("linf", Column::Linf, 2.0, 1, self.linf_slack),
            c("h2grad", Column::H2grad, 2.0, 1, self.slack),
            c("dtl2", Column::Dtl2, 2.0, 1, self.slack),
        ]
    }

    pub fn resolve_window(&self) -> Result<[f64; 2]> {
        let window = match (self.window, self.t_wrap) {
            (Some(w), _) => w,
            (None, Some(t_wrap)) => [FIT_T0, FIT_T1_CAP.min(0.8 * t_wrap)],
            (None, None) => [FIT_T0, FIT_T1_CAP],
        };
        if (1.0 + window[1]) / (1.0 + window[0]) < FIT_MIN_SPAN * (1.0 - 1e-12) {
            return Err(Error::InsufficientData(format!(
                "fit window [{}, {}] spans less than a decade in 1+t",
                window[0], window[1]
            )));
        }
        Ok(window)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClaimResult {
    pub claim: &'static str,
    pub norm: Column,
    pub target_exponent: f64,
    pub fitted_exponent: Option<f64>,
    pub residual: Option<f64>,
    pub slack: f64,
    pub verdict: Verdict,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub schema: u32,
    pub p: f64,
    pub window: [f64; 2],
    pub claims: Vec<ClaimResult>,
    pub verdict: Verdict,
}

impl DecayReport {
    pub fn claim(&self, name: &str) -> Option<&ClaimResult> {
        self.claims.iter().find(|c| c.claim == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One-sided decay verdicts: a claim passes iff its fitted exponent is at
/// most `-sigma + slack`.
pub fn decay_report(series: &NormSeries, settings: &ReportSettings) -> Result<DecayReport> {
    let window = settings.resolve_window()?;
    let last = series.records.last().map(|r| r.t).unwrap_or(f64::NEG_INFINITY);
    if last < window[1] * (1.0 - 1e-12) {
        return Err(Error::InsufficientData(format!(
            "trajectory ends at t = {last}, before the window end {}",
            window[1]
        )));
    }
    let mut claims = Vec::new();
    for claim in settings.claims() {
        let target = -sigma(RateQuery::new(settings.p, claim.q, claim.l))?;
        let data = series.column(claim.norm);
        let in_window: Vec<(f64, f64)> = data
            .iter()
            .filter(|(t, _)| *t >= window[0] && *t <= window[1])
            .copied()
            .collect();
        let result = if !in_window.is_empty() && in_window.iter().all(|(_, v)| *v == 0.0) {
            ClaimResult {
                claim: claim.claim,
                norm: claim.norm,
                target_exponent: target,
                fitted_exponent: None,
                residual: None,
                slack: claim.slack,
                verdict: Verdict::Pass,
                degenerate: true,
            }
        } else {
            let fit = fit_exponent(&data, window)?;
            ClaimResult {
                claim: claim.claim,
                norm: claim.norm,
                target_exponent: target,
                fitted_exponent: Some(fit.exponent),
                residual: Some(fit.residual_rms),
                slack: claim.slack,
                verdict: Verdict::from_bool(fit.exponent <= target + claim.slack),
                degenerate: false,
            }
        };
        claims.push(result);
    }
    let verdict = Verdict::from_bool(claims.iter().all(|c| c.verdict.passed()));
    Ok(DecayReport {
        schema: 1,
        p: settings.p,
        window,
        claims,
        verdict,
    })
}

/// Whole-space fit window for the radial rate checks.
pub const RADIAL_WINDOW: [f64; 2] = [10.0, 1000.0];
/// Two-sided exponent tolerances for the heat and acoustic checks.
pub const HEAT_TOLERANCE: f64 = 0.02;
pub const ACOUSTIC_TOLERANCE: f64 = 0.05;
/// Width of the reference Gaussian `exp(-|x|^2 / 4)`.
pub const REFERENCE_WIDTH: f64 = std::f64::consts::SQRT_2;

/// Exponent match of one whole-space linear decay curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateCheck {
    pub name: &'static str,
    pub l: u32,
    pub target_exponent: f64,
    pub fitted_exponent: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub schema: u32,
    pub window: [f64; 2],
    pub checks: Vec<RateCheck>,
    pub verdict: Verdict,
}

impl RateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `count` times spaced geometrically in `1 + t` over `window`.
pub fn geometric_times(window: [f64; 2], count: usize) -> Vec<f64> {
    let (lo, hi) = ((1.0 + window[0]).ln(), (1.0 + window[1]).ln());
    (0..count)
        .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp() - 1.0)
        .collect()
}

/// Fits the whole-space L^2 decay of Gaussian data under the heat semigroup
/// and of Gaussian `(a0, potential v0)` under the acoustic block, for
/// `l = 0, 1`, and compares with `-sigma(1, 2; l)`.
pub fn radial_rate_report(constants: &DerivedConstants, width: f64, window: [f64; 2]) -> Result<RateReport> {
    let times = geometric_times(window, 41);
    let bump = semigroup::RadialProfile::gaussian(1.0, width)?;
    let potential = semigroup::RadialProfile::gaussian_gradient(1.0, width)?;
    let mut checks = Vec::new();
    for (name, tolerance) in [("heat", HEAT_TOLERANCE), ("acoustic", ACOUSTIC_TOLERANCE)] {
        for l in [0u32, 1] {
            let series = times
                .par_iter()
                .map(|&t| {
                    let v = if name == "heat" {
                        semigroup::radial_l2_norm(&bump, t, l, constants.lambda)?
                    } else {
                        semigroup::radial_acoustic_l2_norm(&bump, &potential, t, l, constants)?
                    };
                    Ok((t, v))
                })
                .collect::<Result<Vec<_>>>()?;
            let fit = fit_exponent(&series, window)?;
            let target = -sigma(RateQuery::new(1.0, 2.0, l))?;
            checks.push(RateCheck {
                name,
                l,
                target_exponent: target,
                fitted_exponent: fit.exponent,
                residual: fit.residual_rms,
                tolerance,
                verdict: Verdict::from_bool((fit.exponent - target).abs() <= tolerance),
            });
        }
    }
    let verdict = Verdict::from_bool(checks.iter().all(|c| c.verdict.passed()));
    Ok(RateReport {
        schema: 1,
        window,
        checks,
        verdict,
    })
}
