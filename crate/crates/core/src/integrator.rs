//! Time stepping of the nonlinear system with the exact linear propagator
//! as integrating factor.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::analysis::{self, Dynamics, NormRecord, NormSeries};
use crate::error::{Error, Result};
use crate::field::{sobolev_norm, Grid};
use crate::model::{derive_constants, DerivedConstants, ModelParams, PerturbationState};
use crate::rhs;
use crate::semigroup::{OperatorFn, SpectralOperator};
use crate::snapshot::write_snapshot;
use crate::state::{self, SpectralState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Heun's method in integrating-factor form.
    IfRk2,
    /// Second-order exponential time differencing (Cox-Matthews).
    EtdRk2,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::IfRk2 => "if-rk2",
            Scheme::EtdRk2 => "etd-rk2",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "if-rk2" => Ok(Scheme::IfRk2),
            "etd-rk2" => Ok(Scheme::EtdRk2),
            other => Err(Error::Domain(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub dt: f64,
    pub t_end: f64,
    /// Steps between norm records.
    pub output_stride: usize,
    /// Steps between snapshots, 0 for none.
    pub snapshot_stride: usize,
    pub cfl_safety: f64,
    pub scheme: Scheme,
    /// Drop the nonlinear forcing entirely.
    pub linear_only: bool,
    /// Abort once `||W||_2` exceeds this multiple of its initial value.
    pub growth_limit: f64,
    /// Warn when `||W0||_{H^3}` exceeds this.
    pub delta_warning: f64,
    pub c1_weight: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ModelParams::default(),
            dt: 0.05,
            t_end: 10.0,
            output_stride: 10,
            snapshot_stride: 0,
            cfl_safety: 0.5,
            scheme: Scheme::IfRk2,
            linear_only: false,
            growth_limit: 10.0,
            delta_warning: 0.05,
            c1_weight: analysis::DEFAULT_C1_WEIGHT,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |what: &str| Err(Error::InvalidParameters(what.to_string()));
        if !(self.dt > 0.0) {
            return bad("run.dt must be positive");
        }
        if !(self.t_end > 0.0) {
            return bad("run.t_end must be positive");
        }
        if self.output_stride == 0 {
            return bad("run.output_stride must be at least 1");
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("run.cfl_safety must lie in (0, 1]");
        }
        if !(self.growth_limit > 1.0) {
            return bad("run.growth_limit must exceed 1");
        }
        if !(self.c1_weight > 0.0) {
            return bad("analysis.c1_weight must be positive");
        }
        Ok(())
    }

    /// Advective step bound `cfl * spacing / max(gamma, ||gamma lambda v||_inf)`.
    pub fn cfl_limit(&self, w: &PerturbationState, constants: &DerivedConstants) -> f64 {
        let vmax = w.v.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
        let speed = constants.gamma.max(constants.velocity_scale() * vmax);
        self.cfl_safety * w.a.grid().spacing() / speed
    }
}

/// One scheme with its per-mode operator tables built for a fixed step.
#[derive(Clone, Debug)]
pub struct Stepper {
    pub dt: f64,
    pub scheme: Scheme,
    pub linear_only: bool,
    params: ModelParams,
    constants: DerivedConstants,
    exp: SpectralOperator,
    phi1: Option<SpectralOperator>,
    phi2: Option<SpectralOperator>,
}

impl Stepper {
    pub fn new(
        grid: Grid,
        dt: f64,
        scheme: Scheme,
        linear_only: bool,
        params: &ModelParams,
        constants: &DerivedConstants,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("step must be positive, got {dt}")));
        }
        let etd = scheme == Scheme::EtdRk2 && !linear_only;
        Ok(Stepper {
            dt,
            scheme,
            linear_only,
            params: *params,
            constants: *constants,
            exp: SpectralOperator::new(grid, dt, constants, OperatorFn::Exp),
            phi1: etd.then(|| SpectralOperator::new(grid, dt, constants, OperatorFn::Phi1)),
            phi2: etd.then(|| SpectralOperator::new(grid, dt, constants, OperatorFn::Phi2)),
        })
    }

    fn forcing(&self, w: &SpectralState) -> Result<SpectralState> {
        rhs::rhs_spectral(w, &self.params, &self.constants)
    }

    pub fn step(&self, w: &SpectralState) -> Result<SpectralState> {
        let h = self.dt;
        if self.linear_only {
            return Ok(self.exp.apply(w));
        }
        let f0 = self.forcing(w)?;
        match self.scheme {
            Scheme::IfRk2 => {
                // W* = P (W + h F(W));  W' = P (W + h/2 F(W)) + h/2 F(W*)
                let predictor = self.exp.apply(&state::add_scaled(w, h, &f0));
                let f1 = self.forcing(&predictor)?;
                let base = self.exp.apply(&state::add_scaled(w, 0.5 * h, &f0));
                Ok(state::add_scaled(&base, 0.5 * h, &f1))
            }
            Scheme::EtdRk2 => {
                let phi1 = self.phi1.as_ref().expect("phi1 table");
                let phi2 = self.phi2.as_ref().expect("phi2 table");
                let a = state::add_scaled(&self.exp.apply(w), h, &phi1.apply(&f0));
                let f1 = self.forcing(&a)?;
                let diff = state::add_scaled(&f1, -1.0, &f0);
                Ok(state::add_scaled(&a, h, &phi2.apply(&diff)))
            }
        }
    }
}

/// Single step from scratch; runs build a [`Stepper`] once instead.
pub fn step(
    w: &SpectralState,
    dt: f64,
    scheme: Scheme,
    params: &ModelParams,
    constants: &DerivedConstants,
) -> Result<SpectralState> {
    Stepper::new(state::grid_of(w), dt, scheme, false, params, constants)?.step(w)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEntry {
    pub t: f64,
    pub record: NormRecord,
    pub snapshot: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub entries: Vec<TrajectoryEntry>,
    pub final_state: SpectralState,
    pub steps: usize,
    /// Step actually used after the CFL cap and landing on `t_end`.
    pub dt: f64,
}

impl Trajectory {
    pub fn series(&self) -> NormSeries {
        NormSeries {
            records: self.entries.iter().map(|e| e.record).collect(),
        }
    }
}

struct Sink {
    dir: PathBuf,
    csv: csv::Writer<File>,
}

impl Sink {
    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut csv = csv::Writer::from_path(dir.join("norms.csv")).map_err(analysis::csv_error)?;
        csv.write_record(analysis::CSV_HEADER).map_err(analysis::csv_error)?;
        csv.flush()?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            csv,
        })
    }

    fn record(&mut self, r: &NormRecord) -> Result<()> {
        self.csv.write_record(r.csv_fields()).map_err(analysis::csv_error)?;
        self.csv.flush()?;
        Ok(())
    }

    fn snapshot(&self, name: &str, t: f64, w: &SpectralState) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_snapshot(&path, t, &state::to_real(w)?)?;
        Ok(path)
    }
}

/// Number of steps and step size that land exactly on `t_end`.
pub fn step_plan(t_end: f64, dt_max: f64) -> (usize, f64) {
    let steps = ((t_end / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (steps, t_end / steps as f64)
}

/// Advances `initial` to `config.t_end`, recording norms every
/// `output_stride` steps (and at the end). With `out`, norms stream to
/// `out/norms.csv` and snapshots go to `out/snap_<step>.tdk`.
pub fn run(config: &RunConfig, initial: &PerturbationState, out: Option<&Path>) -> Result<Trajectory> {
    config.validate()?;
    let params = &config.params;
    let constants = derive_constants(params)?;
    let grid = initial.a.grid();
    let mut w = state::to_spectral(initial)?;

    let h3 = sobolev_norm(&w.components(), 3)?;
    if h3 > config.delta_warning {
        warn!(
            "initial H^3 norm {h3:.3e} exceeds the small-data threshold {:.3e}",
            config.delta_warning
        );
    }
    let cfl = config.cfl_limit(initial, &constants);
    let (steps, dt) = step_plan(config.t_end, config.dt.min(cfl));
    info!(
        "{} on {}^3, L = {}: {steps} steps of {dt:.6e} (cfl bound {cfl:.3e})",
        config.scheme.name(),
        grid.n(),
        grid.length()
    );
    let stepper = Stepper::new(grid, dt, config.scheme, config.linear_only, params, &constants)?;
    let dynamics = if config.linear_only {
        Dynamics::Linear
    } else {
        Dynamics::Nonlinear
    };

    let mut sink = out.map(Sink::open).transpose()?;
    let mut entries = Vec::new();
    let mut record = |t: f64, w: &SpectralState, snap: Option<PathBuf>, sink: &mut Option<Sink>| -> Result<()> {
        let r = analysis::norm_record(t, w, params, &constants, config.c1_weight, dynamics)?;
        if let Some(s) = sink.as_mut() {
            s.record(&r)?;
        }
        entries.push(TrajectoryEntry {
            t,
            record: r,
            snapshot: snap,
        });
        Ok(())
    };
    let snapshot_due = |n: usize| config.snapshot_stride > 0 && n.is_multiple_of(config.snapshot_stride);
    let snap0 = match (&sink, snapshot_due(0)) {
        (Some(s), true) => Some(s.snapshot("snap_0.tdk", 0.0, &w)?),
        _ => None,
    };
    record(0.0, &w, snap0, &mut sink)?;

    let l2_initial = state::l2_norm_sq(&w).sqrt();
    for n in 1..=steps {
        let t_prev = (n - 1) as f64 * dt;
        let t = n as f64 * dt;
        let abort = |reason: String, sink: &Option<Sink>, w: &SpectralState| -> Error {
            let where_ = match sink {
                Some(s) => match s.snapshot("snap_last_stable.tdk", t_prev, w) {
                    Ok(p) => format!("; last stable state in {}", p.display()),
                    Err(e) => format!("; snapshot failed: {e}"),
                },
                None => String::new(),
            };
            Error::Aborted {
                t: t_prev,
                reason: format!("{reason}{where_}"),
            }
        };
        let next = match stepper.step(&w) {
            Ok(x) => x,
            Err(e @ Error::StateValidity { .. }) | Err(e @ Error::Numeric(_)) => {
                return Err(abort(e.to_string(), &sink, &w));
            }
            Err(e) => return Err(e),
        };
        let l2 = state::l2_norm_sq(&next).sqrt();
        let grown = if l2_initial > 0.0 {
            l2 > config.growth_limit * l2_initial
        } else {
            l2 > 0.0
        };
        if !l2.is_finite() || grown {
            return Err(abort(
                format!("L2 norm grew to {l2:.3e} from {l2_initial:.3e}"),
                &sink,
                &w,
            ));
        }
        w = next;
        let snap = match (&sink, snapshot_due(n)) {
            (Some(s), true) => Some(s.snapshot(&format!("snap_{n}.tdk"), t, &w)?),
            _ => None,
        };
        if n % config.output_stride == 0 || n == steps || snap.is_some() {
            if let Err(e) = record(t, &w, snap, &mut sink) {
                return Err(match e {
                    Error::StateValidity { .. } => abort(e.to_string(), &sink, &w),
                    other => other,
                });
            }
        }
    }
    if let Some(s) = sink.as_mut() {
        s.csv.flush()?;
    }
    Ok(Trajectory {
        entries,
        final_state: w,
        steps,
        dt,
    })
}
