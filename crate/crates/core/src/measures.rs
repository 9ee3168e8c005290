//! Entanglement and squeezing measures on two-mode covariance matrices,
//! plus the loss channel and generalized homodyne variances.
//!
//! Two-mode squeezing is reported as `S = -10 log10(lambda_min)` where
//! `lambda_min` is the smallest eigenvalue of the covariance matrix: the
//! variance of the best joint quadrature, in dB below vacuum. Positive `S`
//! certifies EPR-type correlations no local state can produce.
//!
//! Logarithmic negativity comes from the smallest symplectic eigenvalue of
//! the partial transpose, computed through the standard two-mode invariant
//! formula; it is reported in nats by default.

use nalgebra::{DMatrix, DVector, Vector4};

use crate::error::{Error, Result};
use crate::propagate::CovarianceMatrix;

/// Logarithm base for the negativity. Natural log (nats) is the default.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub enum LogBase {
    #[default]
    Nat,
    Two,
}

/// Homodyne angles selecting the generalized joint quadrature
/// `cos(phi) X_B(theta_b) + sin(phi) X_R(theta_r)` of a two-mode state,
/// where `X(theta) = cos(theta) X + sin(theta) P` on each side.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct HomodyneAngles {
    /// Weight between the two sides, in `[0, pi/2]`.
    pub phi: f64,
    /// Local quadrature angle on the first mode.
    pub theta_b: f64,
    /// Local quadrature angle on the second mode.
    pub theta_r: f64,
}

impl HomodyneAngles {
    /// Coefficient vector `c` with `Var = c^T V c`; unit norm by
    /// construction.
    pub fn coefficients(&self) -> Vector4<f64> {
        let (sp, cp) = self.phi.sin_cos();
        let (sb, cb) = self.theta_b.sin_cos();
        let (sr, cr) = self.theta_r.sin_cos();
        Vector4::new(cp * cb, cp * sb, sp * cr, sp * sr)
    }
}

/// Scalar summary of a two-mode state.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Measures {
    /// Two-mode squeezing in dB below vacuum (positive = squeezed).
    pub s_db: f64,
    /// Logarithmic negativity (0 for separable-by-PPT states).
    pub e_n: f64,
    /// Smallest symplectic eigenvalue of the partial transpose.
    pub nu_minus: f64,
    /// Smallest eigenvalue of the covariance matrix.
    pub lambda_min: f64,
}

impl Measures {
    /// Compute all measures of a two-mode covariance matrix.
    pub fn of(v: &CovarianceMatrix, base: LogBase) -> Result<Measures> {
        let s_db = two_mode_squeezing_db(v)?;
        let (e_n, nu_minus) = log_negativity(v, base)?;
        Ok(Measures {
            s_db,
            e_n,
            nu_minus,
            lambda_min: lambda_min(v)?,
        })
    }
}

fn require_two_modes(v: &CovarianceMatrix, context: &str) -> Result<()> {
    if v.n_modes() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: v.n_modes(),
            context: context.into(),
        });
    }
    Ok(())
}

/// Pure loss channel: each mode `i` is mixed with vacuum on a beamsplitter
/// of transmissivity `eta_i`, `V -> S V S^T + (1 - eta) * 1` blockwise.
pub fn apply_loss(v: &CovarianceMatrix, etas: &[f64]) -> Result<CovarianceMatrix> {
    if etas.len() != v.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: v.n_modes(),
            found: etas.len(),
            context: "loss efficiencies".into(),
        });
    }
    for &eta in etas {
        if !(eta.is_finite() && (0.0..=1.0).contains(&eta)) {
            return Err(Error::InvalidParams(format!(
                "efficiency must lie in [0, 1], got {eta}"
            )));
        }
    }
    let dim = v.dim();
    let mut scale = DVector::zeros(dim);
    let mut add = DVector::zeros(dim);
    for (i, &eta) in etas.iter().enumerate() {
        for a in 0..2 {
            scale[2 * i + a] = eta.sqrt();
            add[2 * i + a] = 1.0 - eta;
        }
    }
    let mut mat = v.matrix().clone();
    for i in 0..dim {
        for j in 0..dim {
            mat[(i, j)] *= scale[i] * scale[j];
        }
    }
    for i in 0..dim {
        mat[(i, i)] += add[i];
    }
    CovarianceMatrix::new(mat, v.labels().to_vec())
}

/// Smallest eigenvalue of a two-mode covariance matrix: the variance of the
/// optimal generalized quadrature.
pub fn lambda_min(v: &CovarianceMatrix) -> Result<f64> {
    require_two_modes(v, "lambda_min")?;
    let eig = v.matrix().clone().symmetric_eigen().eigenvalues;
    Ok(eig.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Two-mode squeezing in dB below vacuum, `-10 log10(lambda_min)`.
pub fn two_mode_squeezing_db(v: &CovarianceMatrix) -> Result<f64> {
    Ok(-10.0 * lambda_min(v)?.max(f64::MIN_POSITIVE).log10())
}

/// Logarithmic negativity and the smallest partial-transpose symplectic
/// eigenvalue `nu_minus` of a two-mode state.
///
/// Uses the invariant form: with `V = [[B, C], [C^T, R]]` in 2x2 blocks,
/// `Sigma = det B + det R - 2 det C` and
/// `nu_minus^2 = (Sigma - sqrt(Sigma^2 - 4 det V)) / 2`.
pub fn log_negativity(v: &CovarianceMatrix, base: LogBase) -> Result<(f64, f64)> {
    require_two_modes(v, "log_negativity")?;
    let b = v.block(0, 0);
    let r = v.block(1, 1);
    let c = v.block(0, 1);
    let sigma = b.determinant() + r.determinant() - 2.0 * c.determinant();
    let det_v = v.matrix().determinant();
    let scale = sigma.abs().max(1.0);
    let disc = sigma * sigma - 4.0 * det_v;
    if disc < -1e-9 * scale * scale {
        return Err(Error::NonPhysicalState {
            nu_min: f64::NAN,
            context: "complex partial-transpose spectrum".into(),
        });
    }
    let nu_sq = 0.5 * (sigma - disc.max(0.0).sqrt());
    if nu_sq < -1e-12 * scale {
        return Err(Error::NonPhysicalState {
            nu_min: nu_sq,
            context: "negative squared symplectic eigenvalue".into(),
        });
    }
    let nu = nu_sq.max(0.0).sqrt();
    let e_n_nat = (-nu.max(f64::MIN_POSITIVE).ln()).max(0.0);
    let e_n = match base {
        LogBase::Nat => e_n_nat,
        LogBase::Two => e_n_nat / std::f64::consts::LN_2,
    };
    Ok((e_n, nu))
}

/// Variance of the generalized quadrature selected by `angles`.
pub fn gen_quad_variance(v: &CovarianceMatrix, angles: &HomodyneAngles) -> Result<f64> {
    require_two_modes(v, "gen_quad_variance")?;
    let c = angles.coefficients();
    let m = v.matrix();
    let mut out = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            out += c[i] * m[(i, j)] * c[j];
        }
    }
    Ok(out)
}

/// Extract `(phi, theta_b, theta_r)` from a unit coefficient vector.
///
/// Any unit vector factors as homodyne coefficients because the two local
/// pairs can carry independent phases; the global sign is fixed so the
/// first-mode weight `cos(phi)` is non-negative, with a fallback for purely
/// second-mode vectors.
fn angles_from_vector(v: &Vector4<f64>) -> HomodyneAngles {
    let mut v = *v;
    let wb = v.xy().norm();
    let wr = Vector4::new(0.0, 0.0, v[2], v[3]).norm();
    // Fix the overall sign deterministically: dominant side points "up".
    let flip = if wb >= wr { v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) } else { v[2] < 0.0 || (v[2] == 0.0 && v[3] < 0.0) };
    if flip {
        v = -v;
    }
    let phi = wr.atan2(wb);
    let theta_b = if wb > 1e-300 { v[1].atan2(v[0]) } else { 0.0 };
    let theta_r = if wr > 1e-300 { v[3].atan2(v[2]) } else { 0.0 };
    HomodyneAngles {
        phi,
        theta_b,
        theta_r,
    }
}

/// Globally optimal homodyne angles and the achieved minimum variance.
///
/// The minimum of `c^T V c` over unit vectors is the smallest eigenvalue,
/// and its eigenvector is itself a valid coefficient vector, so the optimum
/// is found by eigendecomposition rather than by search.
pub fn optimize_angles(v: &CovarianceMatrix) -> Result<(HomodyneAngles, f64)> {
    require_two_modes(v, "optimize_angles")?;
    let eig = v.matrix().clone().symmetric_eigen();
    let mut best = 0;
    for i in 1..4 {
        if eig.eigenvalues[i] < eig.eigenvalues[best] {
            best = i;
        }
    }
    let col = eig.eigenvectors.column(best);
    let vec = Vector4::new(col[0], col[1], col[2], col[3]).normalize();
    let angles = angles_from_vector(&vec);
    let var = gen_quad_variance(v, &angles)?;
    Ok((angles, var))
}

/// How the remaining angles are chosen while `theta_b` is scanned.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum PhiMode {
    /// Re-optimize both `phi` and `theta_r` at every `theta_b`.
    Reoptimize,
    /// Hold `phi` fixed and optimize only `theta_r`.
    Fixed(f64),
    /// Hold both remaining angles fixed: a detector whose local oscillator
    /// is already locked for the readout pulse while the first angle is
    /// detuned. This is the scan that exposes a finite squeezing window;
    /// with `theta_r` free the two angles compensate each other. The
    /// pinned variance has period 2 pi in `theta_b` (the cross term flips
    /// sign half a turn away), so a full scan covers a whole turn, not pi.
    Pinned { phi: f64, theta_r: f64 },
}

/// Minimum generalized variance with the first-mode angle pinned.
///
/// For [`PhiMode::Reoptimize`] the constrained coefficient set
/// `(cos(phi) u, sin(phi) w)` with `u = (cos theta_b, sin theta_b)` fixed
/// spans a 3-dimensional subspace, so the constrained optimum is the
/// smallest eigenvalue of the compressed 3x3 matrix `[u, e3, e4]^T V [...]`.
pub fn min_variance_at(
    v: &CovarianceMatrix,
    theta_b: f64,
    mode: PhiMode,
) -> Result<(HomodyneAngles, f64)> {
    require_two_modes(v, "min_variance_at")?;
    let (sb, cb) = theta_b.sin_cos();
    match mode {
        PhiMode::Reoptimize => {
            let m = v.matrix();
            let u = [cb, sb, 0.0, 0.0];
            let basis = [u, [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
            let mut k = DMatrix::zeros(3, 3);
            for a in 0..3 {
                for b in 0..3 {
                    let mut s = 0.0;
                    for i in 0..4 {
                        for j in 0..4 {
                            s += basis[a][i] * m[(i, j)] * basis[b][j];
                        }
                    }
                    k[(a, b)] = s;
                }
            }
            let eig = k.symmetric_eigen();
            let mut best = 0;
            for i in 1..3 {
                if eig.eigenvalues[i] < eig.eigenvalues[best] {
                    best = i;
                }
            }
            let w = eig.eigenvectors.column(best);
            let full = Vector4::new(w[0] * cb, w[0] * sb, w[1], w[2]).normalize();
            let mut angles = angles_from_vector(&full);
            // Keep the requested theta_b (mod pi it is the same quadrature).
            angles.theta_b = theta_b;
            Ok((angles, eig.eigenvalues[best]))
        }
        PhiMode::Fixed(phi) => {
            if !(phi.is_finite() && (0.0..=std::f64::consts::FRAC_PI_2).contains(&phi)) {
                return Err(Error::InvalidParams(format!(
                    "phi must lie in [0, pi/2], got {phi}"
                )));
            }
            // 1-parameter minimization over theta_r: coarse grid plus
            // parabolic refinement, plenty for a smooth trig polynomial.
            let eval = |theta_r: f64| {
                let angles = HomodyneAngles {
                    phi,
                    theta_b,
                    theta_r,
                };
                (angles, gen_quad_variance(v, &angles).expect("dims checked"))
            };
            let n = 720;
            let mut best = eval(0.0);
            for k in 1..n {
                let cand = eval(std::f64::consts::TAU * k as f64 / n as f64);
                if cand.1 < best.1 {
                    best = cand;
                }
            }
            let mut step = std::f64::consts::TAU / n as f64;
            let mut center = best.0.theta_r;
            for _ in 0..30 {
                step *= 0.5;
                for cand_theta in [center - step, center + step] {
                    let cand = eval(cand_theta);
                    if cand.1 < best.1 {
                        best = cand;
                        center = cand_theta;
                    }
                }
            }
            Ok(best)
        }
        PhiMode::Pinned { phi, theta_r } => {
            if !(phi.is_finite() && theta_r.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "pinned angles must be finite, got phi {phi}, theta_r {theta_r}"
                )));
            }
            let angles = HomodyneAngles {
                phi,
                theta_b,
                theta_r,
            };
            let var = gen_quad_variance(v, &angles)?;
            Ok((angles, var))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagate::ModeLabel;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    /// Ideal two-mode-squeezed covariance matrix with gain `g`:
    /// diag blocks `(2g - 1) * 1`, off-diag `2 sqrt(g(g-1)) diag(1, -1)`.
    fn tms(gain: f64) -> CovarianceMatrix {
        let b = 2.0 * gain - 1.0;
        let c = 2.0 * (gain * (gain - 1.0)).sqrt();
        let mut m = DMatrix::zeros(4, 4);
        for i in 0..4 {
            m[(i, i)] = b;
        }
        m[(0, 2)] = c;
        m[(2, 0)] = c;
        m[(1, 3)] = -c;
        m[(3, 1)] = -c;
        CovarianceMatrix::new(m, vec![ModeLabel::PulseB, ModeLabel::Mech]).unwrap()
    }

    #[test]
    fn loss_with_unit_efficiency_is_identity() {
        let v = tms(2.0);
        let out = apply_loss(&v, &[1.0, 1.0]).unwrap();
        assert!((out.matrix() - v.matrix()).norm() < 1e-14);
    }

    #[test]
    fn loss_with_zero_efficiency_gives_vacuum() {
        let v = tms(3.0);
        let out = apply_loss(&v, &[0.0, 0.0]).unwrap();
        assert!((out.matrix() - DMatrix::identity(4, 4)).norm() < 1e-14);
    }

    #[test]
    fn loss_rejects_bad_efficiencies() {
        let v = tms(2.0);
        assert!(apply_loss(&v, &[1.2, 0.5]).is_err());
        assert!(apply_loss(&v, &[0.5]).is_err());
    }

    #[test]
    fn tms_gain_two_frozen_values() {
        // Exact values for gain 2: lambda_min = 3 - 2 sqrt(2),
        // S = -10 log10(lambda_min) = 7.6555 dB, E_N = -ln(lambda_min).
        let v = tms(2.0);
        let lam = lambda_min(&v).unwrap();
        assert_abs_diff_eq!(lam, 3.0 - 2.0 * 2.0f64.sqrt(), epsilon = 1e-12);
        let s = two_mode_squeezing_db(&v).unwrap();
        assert_abs_diff_eq!(s, 7.6555137, epsilon = 1e-6);
        let (e_n, nu) = log_negativity(&v, LogBase::Nat).unwrap();
        assert_abs_diff_eq!(nu, 3.0 - 2.0 * 2.0f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(e_n, -(3.0 - 2.0 * 2.0f64.sqrt()).ln(), epsilon = 1e-10);
    }

    #[test]
    fn negativity_of_vacuum_and_thermal_products_is_zero() {
        let vac = CovarianceMatrix::from_diagonal(
            vec![ModeLabel::PulseB, ModeLabel::Mech],
            &[1.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let (e_n, nu) = log_negativity(&vac, LogBase::Nat).unwrap();
        assert_eq!(e_n, 0.0);
        assert_abs_diff_eq!(nu, 1.0, epsilon = 1e-12);

        let th = CovarianceMatrix::from_diagonal(
            vec![ModeLabel::PulseB, ModeLabel::Mech],
            &[3.0, 3.0, 3.0, 3.0],
        )
        .unwrap();
        let (e_n, nu) = log_negativity(&th, LogBase::Nat).unwrap();
        assert_eq!(e_n, 0.0);
        assert_abs_diff_eq!(nu, 3.0, epsilon = 1e-11);
    }

    #[test]
    fn negativity_base_conversion() {
        let v = tms(2.0);
        let (nat, _) = log_negativity(&v, LogBase::Nat).unwrap();
        let (bits, _) = log_negativity(&v, LogBase::Two).unwrap();
        assert_abs_diff_eq!(bits, nat / std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn pure_tms_symplectic_spectrum_is_vacuum() {
        let v = tms(2.5);
        for nu in v.symplectic_eigenvalues() {
            assert_abs_diff_eq!(nu, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn gen_quad_matches_direct_combination() {
        let v = tms(2.0);
        // phi = pi/4, theta_b = 0, theta_r = 0: Var = (B_11 + R_11 + 2 C_11) / 2.
        let angles = HomodyneAngles {
            phi: std::f64::consts::FRAC_PI_4,
            theta_b: 0.0,
            theta_r: 0.0,
        };
        let m = v.matrix();
        let want = 0.5 * (m[(0, 0)] + m[(2, 2)] + 2.0 * m[(0, 2)]);
        assert_abs_diff_eq!(gen_quad_variance(&v, &angles).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn optimal_angles_reach_lambda_min_on_tms() {
        let v = tms(2.0);
        let (angles, var) = optimize_angles(&v).unwrap();
        let lam = lambda_min(&v).unwrap();
        assert_abs_diff_eq!(var, lam, epsilon = 1e-10);
        // Balanced weight between the modes for symmetric TMS.
        assert_abs_diff_eq!(angles.phi, std::f64::consts::FRAC_PI_4, epsilon = 1e-8);
        // The reported angles must reproduce the reported variance.
        assert_abs_diff_eq!(
            gen_quad_variance(&v, &angles).unwrap(),
            var,
            epsilon = 1e-12
        );
    }

    #[test]
    fn constrained_scan_touches_global_optimum() {
        // Plain TMS has variance depending only on theta_b + theta_r, so a
        // theta_b scan would be flat. A local squeeze on the first mode
        // breaks that degeneracy and singles out one optimal theta_b.
        let base = tms(2.0);
        let s = 1.6f64;
        let mut sq = DMatrix::<f64>::identity(4, 4);
        sq[(0, 0)] = s;
        sq[(1, 1)] = 1.0 / s;
        let m = &sq * base.matrix() * sq.transpose();
        let v = CovarianceMatrix::new(m, base.labels().to_vec()).unwrap();

        let (best, lam) = optimize_angles(&v).unwrap();
        assert_abs_diff_eq!(lam, lambda_min(&v).unwrap(), epsilon = 1e-10);
        let (_, constrained) = min_variance_at(&v, best.theta_b, PhiMode::Reoptimize).unwrap();
        assert_abs_diff_eq!(constrained, lam, epsilon = 1e-10);
        // Away from the optimal theta_b the constrained minimum is larger.
        let (_, off) =
            min_variance_at(&v, best.theta_b + std::f64::consts::FRAC_PI_2, PhiMode::Reoptimize)
                .unwrap();
        assert!(off > constrained + 1e-6);
    }

    #[test]
    fn pinned_scan_recovers_the_optimum_and_shows_a_window() {
        let v = tms(2.0);
        let (best, lam) = optimize_angles(&v).unwrap();
        let pin = PhiMode::Pinned {
            phi: best.phi,
            theta_r: best.theta_r,
        };
        let (_, at_opt) = min_variance_at(&v, best.theta_b, pin).unwrap();
        assert_abs_diff_eq!(at_opt, lam, epsilon = 1e-10);
        // With the readout angle locked the compensation is gone: a
        // quarter turn lands on the anti-squeezed combination.
        let (_, off) =
            min_variance_at(&v, best.theta_b + std::f64::consts::FRAC_PI_2, pin).unwrap();
        assert!(off > 1.0, "expected anti-squeezing, got {off}");
    }

    #[test]
    fn fixed_phi_scan_agrees_with_reoptimized_at_balanced_weight() {
        // Symmetric TMS optimizes at phi = pi/4, so pinning it there must
        // reproduce the reoptimized result.
        let v = tms(2.0);
        let (best, lam) = optimize_angles(&v).unwrap();
        let (_, var) = min_variance_at(
            &v,
            best.theta_b,
            PhiMode::Fixed(std::f64::consts::FRAC_PI_4),
        )
        .unwrap();
        assert_abs_diff_eq!(var, lam, epsilon = 1e-8);
    }

    #[test]
    fn loss_shrinks_negativity_monotonically() {
        let v = tms(2.0);
        let mut last = f64::INFINITY;
        for eta in [1.0, 0.8, 0.6, 0.4, 0.2] {
            let lossy = apply_loss(&v, &[eta, eta]).unwrap();
            let (e_n, _) = log_negativity(&lossy, LogBase::Nat).unwrap();
            assert!(e_n < last + 1e-12, "E_N not monotone at eta = {eta}");
            last = e_n;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn optimizer_matches_lambda_min_on_rotated_lossy_tms(
            gain in 1.0f64..6.0,
            a1 in 0.0f64..std::f64::consts::TAU,
            a2 in 0.0f64..std::f64::consts::TAU,
            eta1 in 0.05f64..1.0,
            eta2 in 0.05f64..1.0,
        ) {
            let mut v = tms(gain);
            v.rotate_mode(0, a1);
            v.rotate_mode(1, a2);
            let v = apply_loss(&v, &[eta1, eta2]).unwrap();
            let (angles, var) = optimize_angles(&v).unwrap();
            let lam = lambda_min(&v).unwrap();
            prop_assert!((var - lam).abs() < 1e-8);
            let direct = gen_quad_variance(&v, &angles).unwrap();
            prop_assert!((direct - lam).abs() < 1e-8);
        }

        #[test]
        fn coefficients_always_unit_norm(
            phi in 0.0f64..std::f64::consts::FRAC_PI_2,
            tb in 0.0f64..std::f64::consts::TAU,
            tr in 0.0f64..std::f64::consts::TAU,
        ) {
            let c = HomodyneAngles { phi, theta_b: tb, theta_r: tr }.coefficients();
            prop_assert!((c.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn physical_states_have_nu_minus_from_invariants(
            gain in 1.0f64..5.0,
            eta in 0.1f64..1.0,
        ) {
            let v = apply_loss(&tms(gain), &[eta, eta]).unwrap();
            let (e_n, nu) = log_negativity(&v, LogBase::Nat).unwrap();
            prop_assert!(nu.is_finite() && nu > 0.0);
            prop_assert!(e_n >= 0.0);
        }
    }
}
