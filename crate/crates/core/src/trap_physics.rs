//! Trapped-ion observables: Coulomb equilibrium spacing and positions in a
//! harmonic axial well, thermal motion amplitudes, the Doppler limit.

use crate::constants::{
    ATOMIC_MASS, BOLTZMANN, ELEMENTARY_CHARGE, REDUCED_PLANCK, VACUUM_PERMITTIVITY,
};
use crate::error::{ensure_positive, Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Static trap parameters. Drive voltage and drive frequency are scenario
/// metadata; the secular frequencies are inputs, not derived from them.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrapParams {
    /// Ion mass, kg.
    pub ion_mass: f64,
    /// Secular frequency along the weak (needle) axis, Hz.
    pub axial_frequency: f64,
    /// Transverse secular frequency, Hz.
    pub radial_frequency: f64,
    /// Ion temperature, K.
    pub temperature: f64,
    /// RF drive amplitude, V.
    pub drive_voltage: f64,
    /// RF drive angular frequency, rad/s.
    pub drive_frequency: f64,
}

impl TrapParams {
    pub fn new(
        ion_mass: f64,
        axial_frequency: f64,
        radial_frequency: f64,
        temperature: f64,
        drive_voltage: f64,
        drive_frequency: f64,
    ) -> Result<Self> {
        ensure_positive("ion_mass", ion_mass)?;
        ensure_positive("axial_frequency", axial_frequency)?;
        ensure_positive("radial_frequency", radial_frequency)?;
        if !temperature.is_finite() || temperature < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "temperature must be non-negative, got {temperature}"
            )));
        }
        // Secular approximation requires the drive to be fast compared with
        // the secular motion.
        let ratio = drive_frequency / (2.0 * PI) / axial_frequency.max(radial_frequency);
        if !(ratio > 5.0) {
            return Err(Error::InvalidParameter(format!(
                "drive frequency / secular frequency ratio {ratio:.2} must exceed 5"
            )));
        }
        Ok(Self {
            ion_mass,
            axial_frequency,
            radial_frequency,
            temperature,
            drive_voltage,
            drive_frequency,
        })
    }

    /// Mass given in unified atomic mass units.
    pub fn with_mass_u(
        mass_u: f64,
        axial_frequency: f64,
        radial_frequency: f64,
        temperature: f64,
        drive_voltage: f64,
        drive_frequency: f64,
    ) -> Result<Self> {
        Self::new(
            mass_u * ATOMIC_MASS,
            axial_frequency,
            radial_frequency,
            temperature,
            drive_voltage,
            drive_frequency,
        )
    }
}

/// Ion positions and residual motion, the object-plane source model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IonScene {
    /// Ion positions in the object plane frame, m.
    pub positions: Vec<[f64; 3]>,
    /// Per-axis RMS thermal excursion, m.
    pub motion_rms: [f64; 3],
    /// Fluorescence wavelength, m.
    pub emission_wavelength: f64,
}

impl IonScene {
    pub fn new(
        positions: Vec<[f64; 3]>,
        motion_rms: [f64; 3],
        emission_wavelength: f64,
    ) -> Result<Self> {
        ensure_positive("emission_wavelength", emission_wavelength)?;
        for s in motion_rms {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "motion_rms must be non-negative, got {s}"
                )));
            }
        }
        if positions.is_empty() {
            return Err(Error::InvalidParameter("scene has no ions".into()));
        }
        for (i, a) in positions.iter().enumerate() {
            for b in positions.iter().skip(i + 1) {
                if a == b {
                    return Err(Error::InvalidParameter(
                        "ion positions must be pairwise distinct".into(),
                    ));
                }
            }
        }
        Ok(Self {
            positions,
            motion_rms,
            emission_wavelength,
        })
    }
}

/// Two-ion equilibrium spacing along the weak axis:
/// l = (e² / (8π³ ε0 M ν²))^(1/3), with ν the axial secular frequency in Hz.
pub fn ion_spacing(params: &TrapParams) -> Result<f64> {
    ensure_positive("ion_mass", params.ion_mass)?;
    ensure_positive("axial_frequency", params.axial_frequency)?;
    let e2 = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE;
    let denom = 8.0
        * PI.powi(3)
        * VACUUM_PERMITTIVITY
        * params.ion_mass
        * params.axial_frequency
        * params.axial_frequency;
    Ok((e2 / denom).cbrt())
}

/// Characteristic length ℓ with ℓ³ = e²/(4π ε0 M ω²); equilibrium positions
/// scale with it.
fn length_scale(mass: f64, axial_frequency: f64) -> f64 {
    let omega = 2.0 * PI * axial_frequency;
    let e2 = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE;
    (e2 / (4.0 * PI * VACUUM_PERMITTIVITY * mass * omega * omega)).cbrt()
}

/// Gradient of the scaled potential V(u) = Σ u²/2 + Σ_{i<j} 1/|u_i − u_j|.
fn scaled_gradient(u: &[f64], grad: &mut [f64]) {
    for (g, &ui) in grad.iter_mut().zip(u.iter()) {
        *g = ui;
    }
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            let d = u[i] - u[j];
            let f = 1.0 / (d * d) * d.signum();
            grad[i] -= f;
            grad[j] += f;
        }
    }
}

fn scaled_potential(u: &[f64]) -> f64 {
    let mut v: f64 = u.iter().map(|x| 0.5 * x * x).sum();
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            v += 1.0 / (u[i] - u[j]).abs();
        }
    }
    v
}

/// Axial equilibrium positions of a linear Coulomb crystal of `n_ions` ions,
/// sorted and centered on the trap minimum.
///
/// Minimizes harmonic + pairwise Coulomb energy in dimensionless scaled
/// coordinates by gradient descent with backtracking line search;
/// convergence at gradient norm < 1e-12 (scaled), iteration cap 1e5.
pub fn equilibrium_positions(n_ions: usize, params: &TrapParams) -> Result<Vec<f64>> {
    if n_ions == 0 {
        return Err(Error::InvalidParameter("n_ions must be at least 1".into()));
    }
    if n_ions == 1 {
        return Ok(vec![0.0]);
    }

    // Initial guess: uniform ladder at roughly the crystal extent.
    let spread = 0.75 * (n_ions as f64).powf(0.56);
    let mut u: Vec<f64> = (0..n_ions)
        .map(|i| spread * (2.0 * i as f64 / (n_ions as f64 - 1.0) - 1.0))
        .collect();

    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 100_000;
    let mut grad = vec![0.0; n_ions];
    let mut iter = 0;
    loop {
        scaled_gradient(&u, &mut grad);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < TOL {
            break;
        }
        if iter >= MAX_ITER {
            return Err(Error::Convergence {
                iterations: iter,
                residual: gnorm,
            });
        }
        // Backtracking line search on the steepest-descent direction. Near
        // the minimum the energy decrease falls below f64 resolution long
        // before the 1e-12 gradient target; small steps are then accepted
        // on a non-increase basis (descent still contracts the error since
        // the scaled Hessian eigenvalues are bounded below by 1).
        let v0 = scaled_potential(&u);
        let floor_tol = 1e-15 * (1.0 + v0.abs());
        let mut step = 0.25;
        let mut accepted = false;
        while step > 1e-20 {
            let trial: Vec<f64> = u
                .iter()
                .zip(grad.iter())
                .map(|(&ui, &gi)| ui - step * gi)
                .collect();
            let ordered = trial.windows(2).all(|w| w[1] > w[0]);
            if ordered {
                let v = scaled_potential(&trial);
                if v < v0 || (step <= 0.25 / 16.0 && v <= v0 + floor_tol) {
                    u = trial;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::Convergence {
                iterations: iter,
                residual: gnorm,
            });
        }
        iter += 1;
    }

    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Center exactly on the trap minimum (parity of the potential).
    let mean: f64 = u.iter().sum::<f64>() / n_ions as f64;
    let scale = length_scale(params.ion_mass, params.axial_frequency);
    Ok(u.into_iter().map(|ui| (ui - mean) * scale).collect())
}

/// Classical harmonic-oscillator RMS position excursion:
/// x_rms = sqrt(kB T / (M (2πν)²)).
pub fn thermal_rms(temperature: f64, ion_mass: f64, frequency: f64) -> Result<f64> {
    if !temperature.is_finite() || temperature < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "temperature must be non-negative, got {temperature}"
        )));
    }
    ensure_positive("ion_mass", ion_mass)?;
    ensure_positive("frequency", frequency)?;
    let omega = 2.0 * PI * frequency;
    Ok((BOLTZMANN * temperature / (ion_mass * omega * omega)).sqrt())
}

/// Doppler cooling limit T = ħΓ / (2 kB) for natural linewidth Γ (rad/s).
pub fn doppler_temperature(linewidth: f64) -> Result<f64> {
    ensure_positive("linewidth", linewidth)?;
    Ok(REDUCED_PLANCK * linewidth / (2.0 * BOLTZMANN))
}
