//! Simulation and analysis pipeline for imaging laser-cooled trapped ions
//! through a microfabricated binary phase Fresnel lens (PFL).
//!
//! The library covers the full chain:
//!
//! * [`pfl_design`] — zone-plate geometry from the scalar design equation,
//!   numerical aperture and solid-angle bookkeeping, π-step etch depth.
//! * [`wave_optics`] — radial (Hankel-kernel) diffraction integral for the
//!   circularly symmetric lens, a 2-D angular-spectrum engine for
//!   cross-checks, knife-edge scans, and binary-grating efficiencies.
//! * [`trap_physics`] — Coulomb-crystal equilibrium positions, the two-ion
//!   spacing formula, thermal motion amplitudes and the Doppler limit.
//! * [`image_formation`] — synthetic CCD frames: PSF × motion blur ×
//!   magnification × pixel integration × shot/read/dark noise.
//! * [`analysis`] — 2-D Gaussian spot fitting, object-plane FWHM conversion,
//!   two-ion magnification calibration and the displacement cross-check.
//! * [`scenario`] — JSON scenario files driving the `pflsim` CLI.

pub mod analysis;
pub mod constants;
pub mod error;
pub mod image_formation;
pub mod math;
pub mod pfl_design;
pub mod scenario;
pub mod trap_physics;
pub mod wave_optics;

pub use error::{Error, Result};
