//! Linearized dynamics of a driven optical cavity coupled to a levitated
//! mechanical oscillator.
//!
//! Conventions used throughout the crate:
//!
//! - Quadratures satisfy `[X, P] = 2i`, so vacuum variance is 1 and a
//!   thermal state has variance `2n + 1`.
//! - Rates are in units of the cavity amplitude decay `kappa`; times in
//!   `1/kappa`.
//! - Lab frame (frame rotating at the drive): basis `(X_c, P_c, X_m, P_m)`.
//! - Co-rotating frame: slowly varying quadrature amplitudes
//!   `(X_c^c, X_c^s, X_m^c, X_m^s)` defined by `u = R(t) v` with
//!   `R = R2(delta t) (+) R2(Omega t)`, where `X^c` multiplies `cos` and
//!   `X^s` multiplies `sin` of the carrier. Dropping terms oscillating at
//!   `2 Omega` in this frame gives the time-independent sideband-resonant
//!   drift [`build_drift_rwa`].
//!
//! A blue-detuned drive (`delta = -Omega`) keeps the parametric-gain part of
//! the coupling (two-mode squeezing between light and mechanics); a
//! red-detuned drive (`delta = +Omega`) keeps the beam-splitter part (state
//! swap). Both appear here only through the drift and diffusion matrices;
//! pulse integration lives in [`crate::propagate`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default mechanical damping floor, in units of `kappa`.
///
/// Reheating is specified through the rate `gamma * n_th`, so when only that
/// product is known, `gamma` is pinned to this floor and `n_th` absorbs the
/// rest. At `1e-6 kappa` the damping itself is irrelevant on pulse
/// timescales, exactly the regime of an optically levitated particle.
pub const GAMMA_FLOOR: f64 = 1e-6;

/// Default reheating rate `gamma * n_th` in units of `kappa` (photon recoil
/// at ultra-high vacuum).
pub const DEFAULT_REHEAT: f64 = 0.06;

/// Which rotating frame a matrix is expressed in.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Frame {
    /// Frame rotating at the drive; mechanics and cavity detuning still
    /// oscillate explicitly.
    Lab,
    /// Co-rotating quadrature amplitudes with fast terms dropped.
    Rwa,
    /// Co-rotating quadrature amplitudes with the full time-dependent
    /// coefficients kept (no secular truncation).
    BeyondRwa,
}

/// Drive detuning relative to the cavity resonance.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Detuning {
    /// Drive above resonance: `delta = -Omega`, parametric gain.
    Blue,
    /// Drive below resonance: `delta = +Omega`, beam-splitter.
    Red,
    /// Explicit detuning in units of `kappa`.
    Custom(f64),
}

impl Detuning {
    /// Numerical detuning for a given mechanical frequency.
    pub fn value(&self, omega: f64) -> f64 {
        match self {
            Detuning::Blue => -omega,
            Detuning::Red => omega,
            Detuning::Custom(d) => *d,
        }
    }
}

/// Role of the drive during a protocol window.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PulseKind {
    /// Entangling window: blue-detuned drive on.
    Blue,
    /// Readout window: red-detuned drive on.
    Red,
    /// Drive off (free evolution).
    Off,
}

impl PulseKind {
    /// Sideband couplings `(g_blue, g_red)` for drive strength `g`.
    pub fn couplings(&self, g: f64) -> (f64, f64) {
        match self {
            PulseKind::Blue => (g, 0.0),
            PulseKind::Red => (0.0, g),
            PulseKind::Off => (0.0, 0.0),
        }
    }

    pub fn detuning(&self) -> Detuning {
        match self {
            PulseKind::Blue => Detuning::Blue,
            PulseKind::Red => Detuning::Red,
            PulseKind::Off => Detuning::Custom(0.0),
        }
    }
}

/// Physical parameters of the levitated optomechanical system.
///
/// All rates are in units of `kappa`, all times in `1/kappa`. `eta_b` and
/// `eta_r` are the detection efficiencies of the entangling and readout
/// pulse modes; `eta_m` models imperfect access to the mechanical
/// quadratures when the mechanics itself is one side of the bipartition.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    /// Cavity amplitude decay rate.
    pub kappa: f64,
    /// Linearized optomechanical coupling.
    pub g: f64,
    /// Mechanical frequency.
    pub omega: f64,
    /// Mechanical amplitude damping rate.
    pub gamma: f64,
    /// Thermal occupation of the mechanical bath.
    pub n_th: f64,
    /// Initial mechanical occupation.
    pub n0: f64,
    /// Detection efficiency of the entangling pulse mode.
    pub eta_b: f64,
    /// Detection efficiency of the readout pulse mode.
    pub eta_r: f64,
    /// Effective efficiency applied to the mechanical mode.
    pub eta_m: f64,
    /// Entangling pulse duration.
    pub tau: f64,
    /// Dark waiting time between the pulses.
    pub tau_d: f64,
    /// Readout pulse duration.
    pub tau_r: f64,
    /// Integrator step override; `None` picks [`SystemParams::default_dt`].
    pub dt: Option<f64>,
}

impl Default for SystemParams {
    fn default() -> Self {
        let gamma = GAMMA_FLOOR;
        SystemParams {
            kappa: 1.0,
            g: 0.6,
            omega: 2.0,
            gamma,
            n_th: DEFAULT_REHEAT / gamma,
            n0: 1e4,
            eta_b: 0.8,
            eta_r: 0.8,
            eta_m: 0.8,
            tau: 8.0,
            tau_d: 0.0,
            tau_r: 8.0,
            dt: None,
        }
    }
}

impl SystemParams {
    /// Reheating rate `gamma * n_th` (phonons per unit time at late times).
    pub fn reheat_rate(&self) -> f64 {
        self.gamma * self.n_th
    }

    /// Re-express a target reheating rate through `n_th`, keeping `gamma`.
    ///
    /// If `gamma` is zero a nonzero rate is unrepresentable and rejected.
    pub fn set_reheat(&mut self, reheat: f64) -> Result<()> {
        if reheat < 0.0 || !reheat.is_finite() {
            return Err(Error::InvalidParams(format!(
                "reheat rate must be finite and >= 0, got {reheat}"
            )));
        }
        if self.gamma == 0.0 {
            if reheat > 0.0 {
                return Err(Error::InvalidParams(
                    "cannot set a nonzero reheat rate while gamma = 0".into(),
                ));
            }
            self.n_th = 0.0;
        } else {
            self.n_th = reheat / self.gamma;
        }
        Ok(())
    }

    /// Variance of the mechanical bath state, `2 n_th + 1`.
    pub fn thermal_variance(&self) -> f64 {
        2.0 * self.n_th + 1.0
    }

    /// Variance of the initial mechanical state, `2 n0 + 1`.
    pub fn initial_variance(&self) -> f64 {
        2.0 * self.n0 + 1.0
    }

    /// Default integrator step: resolves both the cavity decay and (for the
    /// non-secular frame) the `2 Omega` oscillation of the coefficients.
    pub fn default_dt(&self) -> f64 {
        (0.01 / self.kappa).min(0.05 / self.omega)
    }

    /// Integrator step actually used: the override if set, else the default.
    pub fn effective_dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| self.default_dt())
    }

    /// Check every parameter against its documented range.
    ///
    /// Collects all violations into a single [`Error::InvalidParams`] so a
    /// bad config surfaces every problem at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        let fin = |v: f64| v.is_finite();

        check(
            fin(self.kappa) && self.kappa > 0.0,
            format!("kappa must be > 0, got {}", self.kappa),
        );
        check(
            fin(self.g) && self.g >= 0.0,
            format!("g must be >= 0, got {}", self.g),
        );
        check(
            fin(self.omega) && self.omega > 0.0,
            format!("omega must be > 0, got {}", self.omega),
        );
        check(
            fin(self.gamma) && self.gamma >= 0.0,
            format!("gamma must be >= 0, got {}", self.gamma),
        );
        check(
            fin(self.n_th) && self.n_th >= 0.0,
            format!("n_th must be >= 0, got {}", self.n_th),
        );
        check(
            fin(self.n0) && self.n0 >= 0.0,
            format!("n0 must be >= 0, got {}", self.n0),
        );
        for (name, eta) in [
            ("eta_b", self.eta_b),
            ("eta_r", self.eta_r),
            ("eta_m", self.eta_m),
        ] {
            check(
                fin(eta) && (0.0..=1.0).contains(&eta),
                format!("{name} must lie in [0, 1], got {eta}"),
            );
        }
        check(
            fin(self.tau) && self.tau > 0.0,
            format!("tau must be > 0, got {}", self.tau),
        );
        check(
            fin(self.tau_d) && self.tau_d >= 0.0,
            format!("tau_d must be >= 0, got {}", self.tau_d),
        );
        check(
            fin(self.tau_r) && self.tau_r > 0.0,
            format!("tau_r must be > 0, got {}", self.tau_r),
        );
        if let Some(dt) = self.dt {
            check(
                fin(dt) && dt > 0.0,
                format!("dt must be > 0, got {dt}"),
            );
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs.join("; ")))
        }
    }
}

/// Drift matrix `A` of `d<r>/dt = A <r>` together with its frame.
#[derive(Clone, Debug)]
pub struct DriftMatrix {
    pub frame: Frame,
    pub matrix: DMatrix<f64>,
}

/// Diffusion matrix `D` of the covariance equation `dV/dt = AV + VA^T + D`.
#[derive(Clone, Debug)]
pub struct DiffusionMatrix {
    pub frame: Frame,
    pub matrix: DMatrix<f64>,
}

/// Frame selector for [`build_diffusion`]. The non-secular variant is time
/// dependent, so it carries the evaluation time.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum DiffusionFrame {
    Rwa,
    BeyondRwa { t: f64 },
    Lab,
}

/// Lab-frame drift in the basis `(X_c, P_c, X_m, P_m)`.
///
/// Cavity rows implement `a' = (-kappa + i delta) a` written in quadratures,
/// the mechanics is an undamped rotation at `Omega` plus damping `gamma` on
/// the momentum row, and the drive-enhanced coupling `2g` enters through the
/// position quadratures.
pub fn build_drift_lab(p: &SystemParams, delta: Detuning) -> DriftMatrix {
    let d = delta.value(p.omega);
    let g2 = 2.0 * p.g;
    let matrix = DMatrix::from_row_slice(
        4,
        4,
        &[
            -p.kappa, d, 0.0, 0.0, //
            -d, -p.kappa, g2, 0.0, //
            0.0, 0.0, 0.0, p.omega, //
            g2, 0.0, -p.omega, -p.gamma,
        ],
    );
    DriftMatrix {
        frame: Frame::Lab,
        matrix,
    }
}

/// Sideband-resonant drift in the basis `(X_c^c, X_c^s, X_m^c, X_m^s)`.
///
/// With both sideband couplings present the off-diagonal pattern is
/// `(1,4) = (3,2) = g_b - g_r` and `(2,3) = (4,1) = g_b + g_r` (1-based
/// indices). A pure blue drive therefore couples the pairs
/// `(X_c^c, X_m^s)` and `(X_c^s, X_m^c)` symmetrically (hyperbolic,
/// amplifying), while a pure red drive couples them antisymmetrically
/// (rotation, state swap): the red drift is the blue one with the signs of
/// the `(1,4)` and `(3,2)` entries flipped.
pub fn build_drift_rwa(p: &SystemParams, kind: PulseKind) -> DriftMatrix {
    let (gb, gr) = kind.couplings(p.g);
    let diff = gb - gr;
    let sum = gb + gr;
    let gh = -0.5 * p.gamma;
    let matrix = DMatrix::from_row_slice(
        4,
        4,
        &[
            -p.kappa, 0.0, 0.0, diff, //
            0.0, -p.kappa, sum, 0.0, //
            0.0, diff, gh, 0.0, //
            sum, 0.0, 0.0, gh,
        ],
    );
    DriftMatrix {
        frame: Frame::Rwa,
        matrix,
    }
}

/// Diffusion matrix for the requested frame.
///
/// - `Lab`: vacuum noise `2 kappa` on both cavity quadratures, thermal noise
///   `2 gamma (2 n_th + 1)` on the mechanical momentum only.
/// - `Rwa`: the same noise averaged over a mechanical period, `2 kappa` on
///   the cavity and `2 gamma n_th` (twice the reheating rate, dropping the
///   `gamma`-small vacuum piece) on both mechanical quadrature amplitudes.
/// - `BeyondRwa`: the lab noise rotated into the co-rotating frame without
///   averaging; its mechanical block oscillates at `2 Omega t` around the
///   mean `gamma (2 n_th + 1)` and is rank one at every instant.
pub fn build_diffusion(p: &SystemParams, frame: DiffusionFrame) -> DiffusionMatrix {
    let k2 = 2.0 * p.kappa;
    let (frame_tag, matrix) = match frame {
        DiffusionFrame::Lab => {
            let m = DMatrix::from_diagonal(
                &nalgebra::DVector::from_row_slice(&[
                    k2,
                    k2,
                    0.0,
                    2.0 * p.gamma * p.thermal_variance(),
                ]),
            );
            (Frame::Lab, m)
        }
        DiffusionFrame::Rwa => {
            let reheat2 = 2.0 * p.reheat_rate();
            let m = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[
                k2, k2, reheat2, reheat2,
            ]));
            (Frame::Rwa, m)
        }
        DiffusionFrame::BeyondRwa { t } => {
            let w = p.gamma * p.thermal_variance();
            let (s, c) = (2.0 * p.omega * t).sin_cos();
            let mut m = DMatrix::zeros(4, 4);
            m[(0, 0)] = k2;
            m[(1, 1)] = k2;
            m[(2, 2)] = w * (1.0 - c);
            m[(2, 3)] = -w * s;
            m[(3, 2)] = -w * s;
            m[(3, 3)] = w * (1.0 + c);
            (Frame::BeyondRwa, m)
        }
    };
    DiffusionMatrix {
        frame: frame_tag,
        matrix,
    }
}

/// Planar rotation `R2(a) = [[cos a, sin a], [-sin a, cos a]]`.
fn rot2(a: f64) -> [[f64; 2]; 2] {
    let (s, c) = a.sin_cos();
    [[c, s], [-s, c]]
}

/// Frame rotation `R(t) = R2(delta t) (+) R2(Omega t)` mapping co-rotating
/// amplitudes `v` to lab quadratures `u = R v`.
pub fn rotation_matrix(delta: f64, omega: f64, t: f64) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(4, 4);
    for (off, block) in [(0, rot2(delta * t)), (2, rot2(omega * t))] {
        for i in 0..2 {
            for j in 0..2 {
                r[(off + i, off + j)] = block[i][j];
            }
        }
    }
    r
}

/// Exact co-rotating-frame drift `R^T A_lab R - (delta J (+) Omega J)` with
/// `J = [[0, 1], [-1, 0]]`; no terms are dropped.
///
/// Averaging this over one mechanical period at sideband resonance
/// reproduces [`build_drift_rwa`] exactly, since every entry is a constant
/// plus pure `cos(2 Omega t)` / `sin(2 Omega t)` oscillations.
pub fn transformed_drift(p: &SystemParams, delta: f64, t: f64) -> DMatrix<f64> {
    let r = rotation_matrix(delta, p.omega, t);
    let a = build_drift_lab(p, Detuning::Custom(delta)).matrix;
    let mut out = r.transpose() * a * &r;
    out[(0, 1)] -= delta;
    out[(1, 0)] += delta;
    out[(2, 3)] -= p.omega;
    out[(3, 2)] += p.omega;
    out
}

/// Lab diffusion rotated into the co-rotating frame, `R^T D_lab R`.
///
/// Identical to [`build_diffusion`] with [`DiffusionFrame::BeyondRwa`]; kept
/// as the independent definition the closed form is tested against.
pub fn transformed_diffusion(p: &SystemParams, delta: f64, t: f64) -> DMatrix<f64> {
    let r = rotation_matrix(delta, p.omega, t);
    let d = build_diffusion(p, DiffusionFrame::Lab).matrix;
    r.transpose() * d * r
}
