//! Covariance propagation: matrix exponentials, a fixed-step Lyapunov
//! integrator with physicality monitoring, temporal output modes, and the
//! cascaded augmentation that records a travelling pulse mode.
//!
//! The covariance matrix `V` of a Gaussian state evolves as
//! `dV/dt = A V + V A^T + D`. The integrator is classical RK4 with
//! symmetrization after every step; it refuses to continue when the
//! system block of the state stops being physical (smallest symplectic
//! eigenvalue below 1 beyond tolerance), which is how sign errors in `A`
//! or `D` surface instead of producing plausible-looking garbage.
//!
//! A travelling output mode with normalized envelope `f(t)` is recorded by
//! appending one extra mode whose quadratures integrate the cavity output:
//! the pair picks up drift `sqrt(2 kappa) f(t)` from the cavity
//! quadratures, diffusion `f(t)^2` from the vacuum entering the cavity, and
//! the cross-correlation `-f(t) sqrt(2 kappa)` that encodes interference
//! between the intracavity field and the directly reflected noise.

use nalgebra::{DMatrix, Matrix2};

use crate::error::{Error, Result};
use crate::model::{
    build_diffusion, build_drift_lab, build_drift_rwa, transformed_drift, DiffusionFrame,
    DiffusionMatrix, DriftMatrix, Frame, PulseKind, SystemParams,
};

/// States are declared unphysical when a symplectic eigenvalue drops below
/// `1 - PHYSICALITY_TOL`.
pub const PHYSICALITY_TOL: f64 = 1e-6;

/// Transfer-matrix element (zero-based `(row, col)` of `exp(A t)` in the
/// co-rotating basis) whose time trace defines the entangling-pulse mode:
/// the `X_c^s <- X_m^c` response of the blue drift.
pub const BLUE_TRANSFER_ELEMENT: (usize, usize) = (1, 2);

/// Transfer element defining the readout-pulse mode: the `X_c^c <- X_m^s`
/// response of the red drift.
pub const RED_TRANSFER_ELEMENT: (usize, usize) = (0, 3);

/// Identity of a mode tracked through the protocol.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ModeLabel {
    Cavity,
    Mech,
    /// Output mode recorded during the entangling (blue) window.
    PulseB,
    /// Output mode recorded during the readout (red) window.
    PulseR,
}

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModeLabel::Cavity => "cavity",
            ModeLabel::Mech => "mech",
            ModeLabel::PulseB => "pulse_b",
            ModeLabel::PulseR => "pulse_r",
        };
        f.write_str(s)
    }
}

/// Symmetric covariance matrix with two quadratures per labelled mode.
#[derive(Clone, Debug)]
pub struct CovarianceMatrix {
    mat: DMatrix<f64>,
    labels: Vec<ModeLabel>,
}

impl CovarianceMatrix {
    /// Wrap a matrix, checking dimensions and near-symmetry (relative
    /// asymmetry up to `1e-8` is symmetrized away, more is an error).
    pub fn new(mat: DMatrix<f64>, labels: Vec<ModeLabel>) -> Result<Self> {
        let dim = 2 * labels.len();
        if mat.nrows() != dim || mat.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: mat.nrows().max(mat.ncols()),
                context: "covariance matrix".into(),
            });
        }
        let asym = (&mat - mat.transpose()).norm();
        let scale = mat.norm().max(1.0);
        if asym > 1e-8 * scale {
            return Err(Error::InvalidParams(format!(
                "covariance matrix asymmetry {asym:.3e} exceeds tolerance"
            )));
        }
        let sym = (&mat + mat.transpose()) * 0.5;
        Ok(CovarianceMatrix { mat: sym, labels })
    }

    /// Product state with the given diagonal variances (two per mode).
    pub fn from_diagonal(labels: Vec<ModeLabel>, diag: &[f64]) -> Result<Self> {
        if diag.len() != 2 * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: 2 * labels.len(),
                found: diag.len(),
                context: "diagonal covariance".into(),
            });
        }
        let mat = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(diag));
        Ok(CovarianceMatrix { mat, labels })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.labels
    }

    pub fn n_modes(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// The 2x2 block coupling modes `i` and `j`.
    pub fn block(&self, i: usize, j: usize) -> Matrix2<f64> {
        Matrix2::new(
            self.mat[(2 * i, 2 * j)],
            self.mat[(2 * i, 2 * j + 1)],
            self.mat[(2 * i + 1, 2 * j)],
            self.mat[(2 * i + 1, 2 * j + 1)],
        )
    }

    /// Marginal state of the selected modes, in the given order.
    ///
    /// Tracing out modes of a Gaussian state just deletes their rows and
    /// columns, so this both discards and reorders.
    pub fn keep_modes(&self, modes: &[usize]) -> Result<Self> {
        for &m in modes {
            if m >= self.n_modes() {
                return Err(Error::DimensionMismatch {
                    expected: self.n_modes(),
                    found: m,
                    context: "keep_modes index".into(),
                });
            }
        }
        let dim = 2 * modes.len();
        let mut mat = DMatrix::zeros(dim, dim);
        for (bi, &mi) in modes.iter().enumerate() {
            for (bj, &mj) in modes.iter().enumerate() {
                for a in 0..2 {
                    for b in 0..2 {
                        mat[(2 * bi + a, 2 * bj + b)] = self.mat[(2 * mi + a, 2 * mj + b)];
                    }
                }
            }
        }
        let labels = modes.iter().map(|&m| self.labels[m]).collect();
        Ok(CovarianceMatrix { mat, labels })
    }

    /// Apply the local phase-space rotation `R2(angle)` to one mode.
    pub fn rotate_mode(&mut self, mode: usize, angle: f64) {
        assert!(mode < self.n_modes(), "mode index out of range");
        let (s, c) = angle.sin_cos();
        let mut r = DMatrix::identity(self.dim(), self.dim());
        r[(2 * mode, 2 * mode)] = c;
        r[(2 * mode, 2 * mode + 1)] = s;
        r[(2 * mode + 1, 2 * mode)] = -s;
        r[(2 * mode + 1, 2 * mode + 1)] = c;
        self.mat = &r * &self.mat * r.transpose();
        self.mat = (&self.mat + self.mat.transpose()) * 0.5;
    }

    /// Symplectic eigenvalues, sorted descending. All are `>= 1` for a
    /// physical state in these units.
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        symplectic_spectrum(&self.mat)
    }

    pub fn min_symplectic(&self) -> f64 {
        self.symplectic_eigenvalues()
            .last()
            .copied()
            .unwrap_or(f64::NAN)
    }

    pub fn is_physical(&self) -> bool {
        self.min_symplectic() >= 1.0 - PHYSICALITY_TOL
    }
}

/// Symplectic spectrum of an even-dimensional symmetric matrix: the moduli
/// of the eigenvalues of `Omega V` with `Omega = (+)_k [[0,1],[-1,0]]`,
/// which come in equal pairs; one representative per pair is returned,
/// sorted descending.
///
/// Computed without a nonsymmetric eigensolver: with the Cholesky factor
/// `V = L L^T`, the eigenvalues of `Omega V` equal those of the
/// antisymmetric `K = L^T Omega L`, whose moduli are the square roots of
/// the (symmetric, PSD) eigenvalues of `K^T K`. A matrix that is not
/// positive definite has no Williamson form and cannot be a physical
/// covariance matrix; its spectrum is reported as all zeros.
pub fn symplectic_spectrum(v: &DMatrix<f64>) -> Vec<f64> {
    let dim = v.nrows();
    assert!(dim % 2 == 0 && dim == v.ncols(), "even square matrix required");
    let mut omega = DMatrix::zeros(dim, dim);
    for k in 0..dim / 2 {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    let Some(chol) = v.clone().cholesky() else {
        return vec![0.0; dim / 2];
    };
    let l = chol.l();
    let k = l.transpose() * omega * &l;
    let gram = k.transpose() * &k;
    let mut moduli: Vec<f64> = gram
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|e| e.max(0.0).sqrt())
        .collect();
    moduli.sort_by(|a, b| b.partial_cmp(a).unwrap());
    moduli.into_iter().step_by(2).collect()
}

/// Normalized temporal envelope of a travelling pulse mode, sampled on the
/// integration grid and interpolated linearly in between.
///
/// Normalization makes the exact integral of the squared interpolant equal
/// to 1. That integral is what the RK4 quadrature of the recorded mode's
/// variance reproduces term by term, so a mode filtered out of pure vacuum
/// comes out with variance 1 to machine precision rather than to the
/// integrator's truncation error.
#[derive(Clone, Debug)]
pub struct ModeProfile {
    samples: Vec<f64>,
    dt: f64,
}

impl ModeProfile {
    /// Normalize raw samples on a uniform grid of spacing `dt`.
    pub fn new(samples: Vec<f64>, dt: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::DegenerateProfile(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::DegenerateProfile(format!("bad grid spacing {dt}")));
        }
        let norm_sq = piecewise_linear_norm_sq(&samples, dt);
        if !(norm_sq.is_finite() && norm_sq > 1e-24) {
            return Err(Error::DegenerateProfile(format!(
                "squared norm {norm_sq:.3e} too small to normalize"
            )));
        }
        let scale = norm_sq.sqrt().recip();
        let samples = samples.into_iter().map(|s| s * scale).collect();
        Ok(ModeProfile { samples, dt })
    }

    /// Constant envelope over `[0, duration]`, normalized.
    pub fn flat(duration: f64, dt: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0 && dt > 0.0) {
            return Err(Error::DegenerateProfile(format!(
                "bad flat profile window: duration {duration}, dt {dt}"
            )));
        }
        let n = (duration / dt).ceil().max(1.0) as usize;
        ModeProfile::new(vec![1.0; n + 1], duration / n as f64)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.samples.len() - 1) as f64
    }

    /// Squared norm of the piecewise-linear interpolant (1 after `new`).
    pub fn norm_sq(&self) -> f64 {
        piecewise_linear_norm_sq(&self.samples, self.dt)
    }

    /// Envelope value at `t`; zero outside `[0, duration]`.
    ///
    /// The boundary carries ulp-scale slack: solver stage times accumulate
    /// rounding, and a hard cutoff would zero the final Simpson stage and
    /// bias the recorded variance by `O(h f^2)`. Window switches sit at
    /// least a full step away, so the slack cannot leak a dormant segment.
    pub fn value(&self, t: f64) -> f64 {
        let slack = 1e-9 * self.dt;
        if t < -slack || t > self.duration() + slack {
            return 0.0;
        }
        let u = (t / self.dt).clamp(0.0, (self.samples.len() - 1) as f64);
        let k = (u.floor() as usize).min(self.samples.len() - 2);
        let frac = u - k as f64;
        self.samples[k] * (1.0 - frac) + self.samples[k + 1] * frac
    }
}

/// Exact integral of the square of the piecewise-linear interpolant:
/// `dt/3 * sum_k (f_k^2 + f_k f_{k+1} + f_{k+1}^2)`.
fn piecewise_linear_norm_sq(samples: &[f64], dt: f64) -> f64 {
    samples
        .windows(2)
        .map(|w| w[0] * w[0] + w[0] * w[1] + w[1] * w[1])
        .sum::<f64>()
        * dt
        / 3.0
}

/// `exp(A t)`.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    assert_eq!(a.nrows(), a.ncols(), "square matrix required");
    (a * t).exp()
}

type MatrixFn = Box<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// Time-dependent Lyapunov system `dV/dt = A(t) V + V A(t)^T + D(t)`.
///
/// Base systems are 4-dimensional (cavity plus mechanics, in some frame);
/// each recorded pulse mode appends two dimensions at the end. Pulse
/// augmentation assumes the cavity quadratures are components 0 and 1.
pub struct LyapunovSystem {
    dim: usize,
    drift: MatrixFn,
    diffusion: MatrixFn,
}

impl LyapunovSystem {
    /// Constant-coefficient system from prebuilt matrices.
    pub fn time_invariant(a: DriftMatrix, d: DiffusionMatrix) -> Result<Self> {
        if a.frame != d.frame {
            return Err(Error::InvalidParams(format!(
                "drift frame {:?} does not match diffusion frame {:?}",
                a.frame, d.frame
            )));
        }
        let (am, dm) = (a.matrix, d.matrix);
        if am.nrows() != dm.nrows() || am.nrows() != am.ncols() || dm.nrows() != dm.ncols() {
            return Err(Error::DimensionMismatch {
                expected: am.nrows(),
                found: dm.nrows(),
                context: "time-invariant Lyapunov system".into(),
            });
        }
        let dim = am.nrows();
        Ok(LyapunovSystem {
            dim,
            drift: Box::new(move |_| am.clone()),
            diffusion: Box::new(move |_| dm.clone()),
        })
    }

    /// Sideband-resonant (secular) system for the given pulse kind.
    pub fn rwa(p: &SystemParams, kind: PulseKind) -> Self {
        LyapunovSystem::time_invariant(
            build_drift_rwa(p, kind),
            build_diffusion(p, DiffusionFrame::Rwa),
        )
        .expect("secular builder matrices always agree")
    }

    /// Co-rotating system with the full time-dependent coefficients.
    pub fn beyond_rwa(p: &SystemParams, kind: PulseKind) -> Self {
        let delta = kind.detuning().value(p.omega);
        let mut pd = p.clone();
        if kind == PulseKind::Off {
            pd.g = 0.0;
        }
        let pd2 = pd.clone();
        LyapunovSystem {
            dim: 4,
            drift: Box::new(move |t| transformed_drift(&pd, delta, t)),
            diffusion: Box::new(move |t| {
                build_diffusion(&pd2, DiffusionFrame::BeyondRwa { t }).matrix
            }),
        }
    }

    /// Lab-frame system (mostly for cross-checks; pulse recording is done
    /// in the co-rotating frames).
    pub fn lab(p: &SystemParams, detuning: crate::model::Detuning) -> Self {
        LyapunovSystem::time_invariant(
            build_drift_lab(p, detuning),
            build_diffusion(p, DiffusionFrame::Lab),
        )
        .expect("lab builder matrices always agree")
    }

    /// Dispatch on the frame; `Lab` is refused because pulse modes are
    /// defined through the co-rotating quadrature amplitudes.
    pub fn for_frame(p: &SystemParams, frame: Frame, kind: PulseKind) -> Result<Self> {
        match frame {
            Frame::Rwa => Ok(LyapunovSystem::rwa(p, kind)),
            Frame::BeyondRwa => Ok(LyapunovSystem::beyond_rwa(p, kind)),
            Frame::Lab => Err(Error::InvalidParams(
                "pulsed propagation requires the secular or non-secular co-rotating frame".into(),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn drift_at(&self, t: f64) -> DMatrix<f64> {
        (self.drift)(t)
    }

    pub fn diffusion_at(&self, t: f64) -> DMatrix<f64> {
        (self.diffusion)(t)
    }

    /// Append a recorded pulse mode whose window starts at `t = 0`.
    pub fn augment_with_pulse(self, profile: &ModeProfile, kappa: f64) -> LyapunovSystem {
        self.augment_with_pulse_windowed(profile, kappa, 0.0)
    }

    /// Append a pulse mode with no coupling at all: a placeholder keeping
    /// mode ordering stable across protocol segments in which this pulse's
    /// window is closed.
    pub fn augment_inactive(self) -> LyapunovSystem {
        let dim = self.dim;
        let nd = dim + 2;
        let (base_a, base_d) = (self.drift, self.diffusion);
        let pad = move |m: DMatrix<f64>| {
            let mut out = DMatrix::zeros(nd, nd);
            out.view_mut((0, 0), (dim, dim)).copy_from(&m);
            out
        };
        let pad2 = pad.clone();
        LyapunovSystem {
            dim: nd,
            drift: Box::new(move |t| pad(base_a(t))),
            diffusion: Box::new(move |t| pad2(base_d(t))),
        }
    }

    /// Append a recorded pulse mode active on
    /// `[window_start, window_start + profile.duration()]`; outside the
    /// window the envelope is zero, so the mode's quadratures freeze.
    pub fn augment_with_pulse_windowed(
        self,
        profile: &ModeProfile,
        kappa: f64,
        window_start: f64,
    ) -> LyapunovSystem {
        let dim = self.dim;
        let nd = dim + 2;
        let root = (2.0 * kappa).sqrt();
        let (base_a, base_d) = (self.drift, self.diffusion);
        let (pa, pd) = (profile.clone(), profile.clone());
        let drift = Box::new(move |t: f64| {
            let mut a = DMatrix::zeros(nd, nd);
            a.view_mut((0, 0), (dim, dim)).copy_from(&base_a(t));
            let f = pa.value(t - window_start);
            a[(dim, 0)] = root * f;
            a[(dim + 1, 1)] = root * f;
            a
        });
        let diffusion = Box::new(move |t: f64| {
            let mut d = DMatrix::zeros(nd, nd);
            d.view_mut((0, 0), (dim, dim)).copy_from(&base_d(t));
            let f = pd.value(t - window_start);
            d[(dim, dim)] = f * f;
            d[(dim + 1, dim + 1)] = f * f;
            let cross = -f * root;
            d[(0, dim)] = cross;
            d[(dim, 0)] = cross;
            d[(1, dim + 1)] = cross;
            d[(dim + 1, 1)] = cross;
            d
        });
        LyapunovSystem {
            dim: nd,
            drift,
            diffusion,
        }
    }
}

/// Covariance history produced by [`solve_lyapunov`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub labels: Vec<ModeLabel>,
    pub times: Vec<f64>,
    pub states: Vec<DMatrix<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_matrix(&self) -> &DMatrix<f64> {
        self.states.last().expect("trajectory holds >= 1 state")
    }

    pub fn final_cm(&self) -> CovarianceMatrix {
        CovarianceMatrix::new(self.final_matrix().clone(), self.labels.clone())
            .expect("integrator output stays symmetric")
    }
}

/// Integrate the covariance equation over `t_span` with fixed-step RK4.
///
/// The step is `dt` rounded so the span divides evenly. After every step
/// the state is symmetrized and the leading 4x4 system block (cavity plus
/// mechanics marginal) is checked for physicality; recorded pulse blocks
/// are excluded because they legitimately start at zero variance.
pub fn solve_lyapunov(
    sys: &LyapunovSystem,
    v0: &CovarianceMatrix,
    t_span: (f64, f64),
    dt: f64,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if v0.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            found: v0.dim(),
            context: "initial covariance".into(),
        });
    }
    if !(dt.is_finite() && dt > 0.0) || !t0.is_finite() || !t1.is_finite() || t1 < t0 {
        return Err(Error::InvalidParams(format!(
            "bad integration window [{t0}, {t1}] with dt {dt}"
        )));
    }

    let span = t1 - t0;
    let n = if span == 0.0 {
        0
    } else {
        ((span / dt) - 1e-9).ceil().max(1.0) as usize
    };
    let h = if n == 0 { 0.0 } else { span / n as f64 };

    let deriv = |t: f64, v: &DMatrix<f64>| -> DMatrix<f64> {
        let a = sys.drift_at(t);
        let d = sys.diffusion_at(t);
        &a * v + v * a.transpose() + d
    };

    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut v = v0.matrix().clone();
    times.push(t0);
    states.push(v.clone());

    let check_dim = sys.dim().min(4);
    for k in 0..n {
        let t = t0 + k as f64 * h;
        let k1 = deriv(t, &v);
        let k2 = deriv(t + 0.5 * h, &(&v + &k1 * (0.5 * h)));
        let k3 = deriv(t + 0.5 * h, &(&v + &k2 * (0.5 * h)));
        let k4 = deriv(t + h, &(&v + &k3 * h));
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        v = (&v + v.transpose()) * 0.5;

        let block = v.view((0, 0), (check_dim, check_dim)).into_owned();
        // The attainable accuracy of the eigenvalues scales with the matrix
        // norm, so a hot amplified state (entries ~ 1e5) must not trip the
        // guard on roundoff; the tripwire is for structural errors.
        let tol = PHYSICALITY_TOL * block.amax().max(1.0);
        let nu_min = symplectic_spectrum(&block).last().copied().unwrap_or(f64::NAN);
        if !(nu_min >= 1.0 - tol) {
            return Err(Error::NonPhysicalState {
                nu_min,
                context: format!("system block at t = {:.6}", t + h),
            });
        }

        times.push(t0 + (k + 1) as f64 * h);
        states.push(v.clone());
    }

    Ok(Trajectory {
        labels: v0.labels().to_vec(),
        times,
        states,
    })
}

/// Temporal mode of the output pulse: the selected element of the transfer
/// matrix `exp(A t)` sampled on the integration grid and normalized.
///
/// The transfer matrix is built incrementally, `M(t + h) = exp(A h) M(t)`,
/// so one small exponential is computed rather than one per sample. Errors
/// with [`Error::DegenerateProfile`] when the element stays below `1e-12`
/// in magnitude over the whole window (no light is scattered into the
/// mode, e.g. at zero coupling).
pub fn temporal_mode(
    a: &DriftMatrix,
    tau: f64,
    dt: f64,
    element: (usize, usize),
) -> Result<ModeProfile> {
    let n_dim = a.matrix.nrows();
    if element.0 >= n_dim || element.1 >= n_dim {
        return Err(Error::DimensionMismatch {
            expected: n_dim,
            found: element.0.max(element.1),
            context: "transfer element".into(),
        });
    }
    if !(tau.is_finite() && tau > 0.0 && dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParams(format!(
            "bad temporal-mode window: tau {tau}, dt {dt}"
        )));
    }

    let n = ((tau / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = tau / n as f64;
    let step = matrix_exponential(&a.matrix, h);
    let mut m = DMatrix::identity(n_dim, n_dim);
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(m[element]);
    for _ in 0..n {
        m = &step * m;
        samples.push(m[element]);
    }

    let max_abs = samples.iter().fold(0.0f64, |acc, s| acc.max(s.abs()));
    if max_abs < 1e-12 {
        return Err(Error::DegenerateProfile(format!(
            "transfer element ({}, {}) stays below 1e-12 over [0, {tau}]",
            element.0, element.1
        )));
    }
    // Canonical sign: the largest-magnitude sample is positive. The overall
    // sign of an envelope is a gauge choice; fixing it keeps recorded
    // correlation signs deterministic.
    let peak = samples
        .iter()
        .cloned()
        .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
        .unwrap();
    if peak < 0.0 {
        for s in &mut samples {
            *s = -*s;
        }
    }
    ModeProfile::new(samples, h)
}

/// Closed-form free evolution over a dark interval of length `tau_d`.
///
/// In the co-rotating frame with the drive off, every mode relaxes
/// independently: cavity blocks contract at `2 kappa` towards vacuum,
/// mechanical blocks at `gamma` towards the bath variance `2 n_th + 1`,
/// cross blocks decay with the mean of the two rates, and recorded pulse
/// modes are frozen.
pub fn free_segment(v: &CovarianceMatrix, p: &SystemParams, tau_d: f64) -> CovarianceMatrix {
    assert!(tau_d >= 0.0, "dark time must be >= 0");
    let rate = |l: ModeLabel| match l {
        ModeLabel::Cavity => p.kappa,
        ModeLabel::Mech => 0.5 * p.gamma,
        ModeLabel::PulseB | ModeLabel::PulseR => 0.0,
    };
    let asymptote = |l: ModeLabel| match l {
        ModeLabel::Cavity => 1.0,
        ModeLabel::Mech => p.thermal_variance(),
        ModeLabel::PulseB | ModeLabel::PulseR => 0.0,
    };

    let n = v.n_modes();
    let mut mat = v.matrix().clone();
    for i in 0..n {
        for j in 0..n {
            let decay = (-(rate(v.labels()[i]) + rate(v.labels()[j])) * tau_d).exp();
            for a in 0..2 {
                for b in 0..2 {
                    mat[(2 * i + a, 2 * j + b)] *= decay;
                }
            }
        }
    }
    for i in 0..n {
        let r = rate(v.labels()[i]);
        if r > 0.0 {
            let fill = (1.0 - (-2.0 * r * tau_d).exp()) * asymptote(v.labels()[i]);
            mat[(2 * i, 2 * i)] += fill;
            mat[(2 * i + 1, 2 * i + 1)] += fill;
        }
    }
    CovarianceMatrix::new(mat, v.labels().to_vec()).expect("scaling preserves symmetry")
}
