//! Gaussian-state simulation of a pulsed levitated-optomechanics protocol.
//!
//! An optically levitated nanoparticle sits in a driven cavity. A
//! blue-detuned drive pulse amplifies joint quadratures of the leaking light
//! and the mechanical motion, preparing two-mode squeezing between the
//! mechanics and a travelling temporal mode of the output field; a later
//! red-detuned pulse swaps the remaining mechanical state onto a second
//! output mode. This crate propagates covariance matrices through both
//! windows and quantifies what survives decoherence and detection loss.
//!
//! Quadratures satisfy `[X, P] = 2i` (vacuum variance 1, thermal variance
//! `2n + 1`); rates are in units of the cavity decay `kappa`, times in
//! `1/kappa`.
//!
//! Module map:
//!
//! - [`model`]: parameters plus drift, diffusion and frame-rotation
//!   matrices in the lab, sideband-resonant and non-secular frames.
//! - [`propagate`]: matrix exponentials, a fixed-step Lyapunov integrator
//!   with physicality monitoring, temporal output modes and the
//!   cascaded-pulse augmentation.
//! - [`measures`]: detection loss, two-mode squeezing in dB, logarithmic
//!   negativity and generalized homodyne variances with angle optimization.
//! - [`protocol`]: closed-form adiabatic references, the one- and two-pulse
//!   protocol drivers, and Monte-Carlo parameter ensembles.
//! - [`harness`]: TOML-driven sweeps, CSV/JSON/SVG output and built-in
//!   recipe configurations; the `levopt` binary is a thin wrapper over it.

mod error;

pub mod harness;
pub mod measures;
pub mod model;
pub mod propagate;
pub mod protocol;

pub use error::{Error, Result};
