//! Protocol drivers: the entangling pulse alone, the full
//! entangle-wait-readout sequence, closed-form adiabatic references, and
//! Monte-Carlo parameter ensembles.
//!
//! Mode conventions of the returned covariance matrices:
//!
//! - `run_blue` returns `[pulse_b, mech]`.
//! - `run_full` returns the same snapshot after the entangling window plus
//!   the final `[pulse_b, pulse_r]` state.
//!
//! Each recorded pulse is rotated by `pi/2` after its window closes. The
//! raw recorded quadratures come out crossed (`U_X` follows `X_m^s`, `U_Y`
//! follows `X_m^c`); a fixed local rotation aligns them with the
//! mechanical `(X, P)` ordering, so that the adiabatic references below
//! hold entry by entry. Being local, the rotation changes no measure.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::measures::{apply_loss, LogBase, Measures};
use crate::model::{build_drift_rwa, Frame, PulseKind, SystemParams};
use crate::propagate::{
    free_segment, solve_lyapunov, temporal_mode, CovarianceMatrix, LyapunovSystem, ModeLabel,
    ModeProfile, BLUE_TRANSFER_ELEMENT, RED_TRANSFER_ELEMENT,
};

/// Which pair of modes a measure refers to.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Bipartition {
    /// Entangling pulse versus the mechanical mode.
    PulseMech,
    /// Entangling pulse versus the readout pulse.
    PulsePulse,
}

/// Which scalar of [`Measures`] an ensemble or sweep tracks.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum MeasureKind {
    SDb,
    EN,
    NuMinus,
    LambdaMin,
}

impl MeasureKind {
    pub fn pick(&self, m: &Measures) -> f64 {
        match self {
            MeasureKind::SDb => m.s_db,
            MeasureKind::EN => m.e_n,
            MeasureKind::NuMinus => m.nu_minus,
            MeasureKind::LambdaMin => m.lambda_min,
        }
    }
}

/// A measure on a bipartition: the quantity ensembles average.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct TargetMeasure {
    pub bipartition: Bipartition,
    pub kind: MeasureKind,
}

/// Amplification factor of the entangling window, `exp(2 g^2 tau / kappa)`.
pub fn blue_gain(p: &SystemParams) -> f64 {
    (2.0 * p.g * p.g * p.tau / p.kappa).exp()
}

/// State-transfer factor of the readout window,
/// `exp(2 g^2 tau_r / kappa)`; the transferred fraction is `1 - 1/T`.
pub fn red_transmittance(p: &SystemParams) -> f64 {
    (2.0 * p.g * p.g * p.tau_r / p.kappa).exp()
}

/// Adiabatic (kappa-dominated) reference for the entangling window:
/// the joint `[pulse_b, mech]` covariance after amplification by `gain`
/// starting from a mechanical occupation `n0`, with an ideal cavity.
///
/// Blocks, with `v = 2 n0 + 1`:
/// pulse `G + (G - 1)(v + 1) - 1 = (G - 1) v + G` wait: pulse block is
/// `(G + (G - 1) v) * 1`, mech block `(G v + G - 1) * 1`, correlations
/// `2 sqrt(G (G - 1)) (n0 + 1) diag(1, -1)`. The X-sector determinant
/// equals `v` identically, which pins the minimum joint variance at
/// `lambda_min ~ v / (2 (2G - 1) (n0 + 1))` for strong gain.
pub fn adiabatic_blue(gain: f64, n0: f64) -> Result<CovarianceMatrix> {
    if !(gain.is_finite() && gain >= 1.0) {
        return Err(Error::InvalidParams(format!(
            "adiabatic gain must be >= 1, got {gain}"
        )));
    }
    if !(n0.is_finite() && n0 >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "initial occupation must be >= 0, got {n0}"
        )));
    }
    let v = 2.0 * n0 + 1.0;
    let b = gain + (gain - 1.0) * v;
    let m = gain * v + gain - 1.0;
    let c = 2.0 * (gain * (gain - 1.0)).sqrt() * (n0 + 1.0);
    let mut mat = DMatrix::zeros(4, 4);
    mat[(0, 0)] = b;
    mat[(1, 1)] = b;
    mat[(2, 2)] = m;
    mat[(3, 3)] = m;
    mat[(0, 2)] = c;
    mat[(2, 0)] = c;
    mat[(1, 3)] = -c;
    mat[(3, 1)] = -c;
    CovarianceMatrix::new(mat, vec![ModeLabel::PulseB, ModeLabel::Mech])
}

/// Adiabatic reference for the readout window: a passive swap of the
/// mechanical side of `v_pm = [pulse_b, mech]` onto the readout pulse with
/// transferred fraction `s = 1 - 1/T`, vacuum filling the rest.
///
/// `T = 1` leaves the readout pulse in uncorrelated vacuum; `T -> inf`
/// reproduces the mechanical block and its correlations exactly.
pub fn adiabatic_red(transmittance: f64, v_pm: &CovarianceMatrix) -> Result<CovarianceMatrix> {
    if !(transmittance.is_finite() && transmittance >= 1.0) {
        return Err(Error::InvalidParams(format!(
            "readout transmittance must be >= 1, got {transmittance}"
        )));
    }
    if v_pm.n_modes() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: v_pm.n_modes(),
            context: "adiabatic readout input".into(),
        });
    }
    let s = 1.0 - 1.0 / transmittance;
    let root = s.sqrt();
    let mut mat = DMatrix::zeros(4, 4);
    let vb = v_pm.block(0, 0);
    let vm = v_pm.block(1, 1);
    let cbm = v_pm.block(0, 1);
    for a in 0..2 {
        for b in 0..2 {
            mat[(a, b)] = vb[(a, b)];
            mat[(2 + a, 2 + b)] = s * vm[(a, b)];
            mat[(a, 2 + b)] = root * cbm[(a, b)];
            mat[(2 + b, a)] = root * cbm[(a, b)];
        }
    }
    mat[(2, 2)] += 1.0 - s;
    mat[(3, 3)] += 1.0 - s;
    CovarianceMatrix::new(mat, vec![ModeLabel::PulseB, ModeLabel::PulseR])
}

/// Gauge rotation applied to every recorded pulse once its window closes.
const PULSE_GAUGE: f64 = std::f64::consts::FRAC_PI_2;

fn initial_state(p: &SystemParams, labels: Vec<ModeLabel>) -> Result<CovarianceMatrix> {
    let vm = p.initial_variance();
    let mut diag = vec![1.0, 1.0, vm, vm];
    diag.resize(2 * labels.len(), 0.0);
    CovarianceMatrix::from_diagonal(labels, &diag)
}

/// Propagate the entangling window and return the lossy `[pulse_b, mech]`
/// state together with the normalized pulse envelope.
///
/// The envelope is always derived from the secular blue drift (that is
/// what a mode-matched detector would lock to); the covariance propagation
/// honours `frame`.
pub fn run_blue(p: &SystemParams, frame: Frame) -> Result<(CovarianceMatrix, ModeProfile)> {
    p.validate()?;
    let dt = p.effective_dt();
    let n = ((p.tau / dt) - 1e-9).ceil().max(1.0);
    let h = p.tau / n;

    // With the drive off there is no transfer to lock to; any normalized
    // envelope then records plain vacuum, so take a flat one.
    let profile = if p.g > 0.0 {
        temporal_mode(
            &build_drift_rwa(p, PulseKind::Blue),
            p.tau,
            h,
            BLUE_TRANSFER_ELEMENT,
        )?
    } else {
        ModeProfile::flat(p.tau, h)?
    };
    let sys =
        LyapunovSystem::for_frame(p, frame, PulseKind::Blue)?.augment_with_pulse(&profile, p.kappa);
    let v0 = initial_state(p, vec![ModeLabel::Cavity, ModeLabel::Mech, ModeLabel::PulseB])?;
    let traj = solve_lyapunov(&sys, &v0, (0.0, p.tau), h)?;

    let mut cm = traj.final_cm().keep_modes(&[2, 1])?;
    cm.rotate_mode(0, PULSE_GAUGE);
    let cm = apply_loss(&cm, &[p.eta_b, p.eta_m])?;
    Ok((cm, profile))
}

/// Everything the two-pulse protocol produces.
#[derive(Clone, Debug)]
pub struct ProtocolResult {
    pub params: SystemParams,
    pub frame: Frame,
    /// Lossy `[pulse_b, mech]` state at the end of the entangling window.
    pub cm_pulse_mech: CovarianceMatrix,
    /// Lossy `[pulse_b, pulse_r]` state at the end of the readout window.
    pub cm_pulse_pulse: CovarianceMatrix,
    pub measures_pm: Measures,
    pub measures_pp: Measures,
    pub profile_blue: ModeProfile,
    pub profile_red: ModeProfile,
}

/// Run the full sequence: entangling window, dark wait, readout window.
pub fn run_full(p: &SystemParams, frame: Frame) -> Result<ProtocolResult> {
    run_full_custom(p, frame, p.g)
}

/// [`run_full`] with an independent readout coupling (zero switches the
/// readout drive off entirely, leaving the second pulse in vacuum).
pub fn run_full_custom(p: &SystemParams, frame: Frame, g_red: f64) -> Result<ProtocolResult> {
    p.validate()?;
    if !(g_red.is_finite() && g_red >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "readout coupling must be >= 0, got {g_red}"
        )));
    }

    let dt = p.effective_dt();
    let nb = ((p.tau / dt) - 1e-9).ceil().max(1.0);
    let hb = p.tau / nb;
    let nr = ((p.tau_r / dt) - 1e-9).ceil().max(1.0);
    let hr = p.tau_r / nr;

    let p_red = SystemParams {
        g: g_red,
        ..p.clone()
    };

    // With a drive off there is no transfer to lock to; any normalized
    // envelope then records plain vacuum, so take a flat one.
    let profile_blue = if p.g > 0.0 {
        temporal_mode(
            &build_drift_rwa(p, PulseKind::Blue),
            p.tau,
            hb,
            BLUE_TRANSFER_ELEMENT,
        )?
    } else {
        ModeProfile::flat(p.tau, hb)?
    };
    let profile_red = if g_red > 0.0 {
        temporal_mode(
            &build_drift_rwa(&p_red, PulseKind::Red),
            p.tau_r,
            hr,
            RED_TRANSFER_ELEMENT,
        )?
    } else {
        ModeProfile::flat(p.tau_r, hr)?
    };

    let t_red0 = p.tau + p.tau_d;
    let labels = vec![
        ModeLabel::Cavity,
        ModeLabel::Mech,
        ModeLabel::PulseB,
        ModeLabel::PulseR,
    ];
    let v0 = initial_state(p, labels)?;

    // Entangling window: blue drive on, readout pulse dormant.
    let sys_blue = LyapunovSystem::for_frame(p, frame, PulseKind::Blue)?
        .augment_with_pulse(&profile_blue, p.kappa)
        .augment_inactive();
    let after_blue = solve_lyapunov(&sys_blue, &v0, (0.0, p.tau), hb)?.final_cm();

    let mut pm = after_blue.keep_modes(&[2, 1])?;
    pm.rotate_mode(0, PULSE_GAUGE);
    let cm_pulse_mech = apply_loss(&pm, &[p.eta_b, p.eta_m])?;
    let measures_pm = Measures::of(&cm_pulse_mech, LogBase::Nat)?;

    // Dark interval: drive off, both pulses frozen. The secular frame has
    // the exact closed form; the non-secular frame keeps the oscillating
    // thermal noise and is integrated.
    let before_red = if p.tau_d == 0.0 {
        after_blue
    } else {
        match frame {
            Frame::Rwa => free_segment(&after_blue, p, p.tau_d),
            Frame::BeyondRwa => {
                let sys_dark = LyapunovSystem::beyond_rwa(p, PulseKind::Off)
                    .augment_inactive()
                    .augment_inactive();
                solve_lyapunov(&sys_dark, &after_blue, (p.tau, t_red0), dt)?.final_cm()
            }
            Frame::Lab => unreachable!("for_frame rejected the lab frame above"),
        }
    };

    // Readout window: red drive on, entangling pulse frozen.
    let sys_red = LyapunovSystem::for_frame(&p_red, frame, PulseKind::Red)?
        .augment_inactive()
        .augment_with_pulse_windowed(&profile_red, p.kappa, t_red0);
    let final_state =
        solve_lyapunov(&sys_red, &before_red, (t_red0, t_red0 + p.tau_r), hr)?.final_cm();

    let mut pp = final_state.keep_modes(&[2, 3])?;
    pp.rotate_mode(0, PULSE_GAUGE);
    pp.rotate_mode(1, PULSE_GAUGE);
    let cm_pulse_pulse = apply_loss(&pp, &[p.eta_b, p.eta_r])?;
    let measures_pp = Measures::of(&cm_pulse_pulse, LogBase::Nat)?;

    Ok(ProtocolResult {
        params: p.clone(),
        frame,
        cm_pulse_mech,
        cm_pulse_pulse,
        measures_pm,
        measures_pp,
        profile_blue,
        profile_red,
    })
}

/// Summary statistics of a Monte-Carlo ensemble (sample standard
/// deviation, `n - 1` in the denominator).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

/// SplitMix64 scrambler: decorrelates per-sample seeds derived from a base
/// seed plus an index.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Monte-Carlo ensemble over shot-to-shot parameter fluctuations.
///
/// Each sample independently scales `g`, `tau` and `log10(n0)` by uniform
/// factors in `[1 - rel_width, 1 + rel_width]` (an `n0` of exactly 0 or 1
/// is a fixed point of the last rule) and re-runs the protocol for the
/// requested target. Sample `i` uses an RNG seeded with
/// `splitmix64(seed + i)`, so results are bit-reproducible for a given
/// seed regardless of evaluation order, and a failing sample reports its
/// index instead of being silently dropped.
pub fn monte_carlo_ensemble(
    p: &SystemParams,
    frame: Frame,
    target: TargetMeasure,
    n: usize,
    rel_width: f64,
    seed: u64,
) -> Result<EnsembleStats> {
    if n == 0 {
        return Err(Error::InvalidParams("ensemble needs n >= 1 samples".into()));
    }
    if !(rel_width.is_finite() && (0.0..1.0).contains(&rel_width)) {
        return Err(Error::InvalidParams(format!(
            "relative width must lie in [0, 1), got {rel_width}"
        )));
    }
    p.validate()?;

    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha12Rng::seed_from_u64(splitmix64(seed.wrapping_add(i as u64)));
        let lo = 1.0 - rel_width;
        let hi = 1.0 + rel_width;
        let fg: f64 = rng.gen_range(lo..=hi);
        let ftau: f64 = rng.gen_range(lo..=hi);
        let flog: f64 = rng.gen_range(lo..=hi);

        let mut pi = p.clone();
        pi.g *= fg;
        pi.tau *= ftau;
        if pi.n0 > 0.0 {
            pi.n0 = 10f64.powf(pi.n0.log10() * flog);
        }

        let sample = |pi: &SystemParams| -> Result<f64> {
            let m = match target.bipartition {
                Bipartition::PulseMech => {
                    let (cm, _) = run_blue(pi, frame)?;
                    Measures::of(&cm, LogBase::Nat)?
                }
                Bipartition::PulsePulse => run_full(pi, frame)?.measures_pp,
            };
            Ok(target.kind.pick(&m))
        };
        let value = sample(&pi).map_err(|e| Error::EnsembleSample {
            index: i,
            source: Box::new(e),
        })?;
        values.push(value);
    }

    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0)).sqrt()
    } else {
        0.0
    };
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(EnsembleStats {
        mean,
        std,
        min,
        max,
        n,
    })
}

/// Largest reheating rate at which the entangling pulse still squeezes
/// (`S > 0` dB), found by bisection inside `bracket`.
///
/// Returns `None` when there is no squeezing even at the lower bracket
/// edge, and the upper edge itself when squeezing survives the whole
/// bracket. The squeezing is monotone non-increasing in the reheating
/// rate, which is what makes bisection valid.
pub fn critical_reheat(p: &SystemParams, frame: Frame, bracket: (f64, f64)) -> Result<Option<f64>> {
    let (lo, hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi) {
        return Err(Error::InvalidParams(format!(
            "bad reheating bracket [{lo}, {hi}]"
        )));
    }
    let s_at = |reheat: f64| -> Result<f64> {
        let mut pi = p.clone();
        pi.set_reheat(reheat)?;
        let (cm, _) = run_blue(&pi, frame)?;
        Ok(Measures::of(&cm, LogBase::Nat)?.s_db)
    };
    if s_at(lo)? <= 0.0 {
        return Ok(None);
    }
    if s_at(hi)? > 0.0 {
        return Ok(Some(hi));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if s_at(mid)? > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(Some(0.5 * (a + b)))
}

/// One cell of [`max_gamma_search`].
#[derive(Clone, Debug)]
pub struct GammaSearchRow {
    pub g: f64,
    pub tau: f64,
    pub gamma_crit: Option<f64>,
    pub error: Option<String>,
}

/// Result of the robustness grid search.
#[derive(Clone, Debug)]
pub struct GammaSearch {
    pub rows: Vec<GammaSearchRow>,
    /// `(g, tau, gamma_crit)` of the most reheating-tolerant cell.
    pub best: Option<(f64, f64, f64)>,
}

/// Grid search for the working point that tolerates the most reheating:
/// for every `(g, tau)` combination, find [`critical_reheat`] and keep the
/// largest.
pub fn max_gamma_search(
    p: &SystemParams,
    frame: Frame,
    g_grid: &[f64],
    tau_grid: &[f64],
    bracket: (f64, f64),
) -> GammaSearch {
    let mut rows = Vec::with_capacity(g_grid.len() * tau_grid.len());
    let mut best: Option<(f64, f64, f64)> = None;
    for &g in g_grid {
        for &tau in tau_grid {
            let mut pi = p.clone();
            pi.g = g;
            pi.tau = tau;
            let (gamma_crit, error) = match critical_reheat(&pi, frame, bracket) {
                Ok(gc) => (gc, None),
                Err(e) => (None, Some(e.to_string())),
            };
            if let Some(gc) = gamma_crit {
                if best.map_or(true, |(_, _, b)| gc > b) {
                    best = Some((g, tau, gc));
                }
            }
            rows.push(GammaSearchRow {
                g,
                tau,
                gamma_crit,
                error,
            });
        }
    }
    GammaSearch { rows, best }
}
