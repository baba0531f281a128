//! Scalar wave optics: the radial diffraction engine for the circularly
//! symmetric PFL, a 2-D angular-spectrum engine for cross-checks, knife-edge
//! scans, and binary grating efficiencies.

mod angular_spectrum;
mod radial;

pub use angular_spectrum::{
    angular_spectrum_propagate, converging_lens_field, gaussian_beam_field, ScalarField,
};
pub use radial::{focal_field_radial, ideal_focus_psf, pupil_from_zoneplate, RadialPupil};

use crate::error::{Error, Result};
use crate::math::trapezoid;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Normalized intensity on a uniform radial grid r_i = i · pitch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialPsf {
    pub intensity: Vec<f64>,
    /// Radial sample spacing, m.
    pub pitch: f64,
}

impl RadialPsf {
    /// Normalizes so that ∫ 2πr I(r) dr = 1 on the sampled support.
    pub fn new(mut intensity: Vec<f64>, pitch: f64) -> Result<Self> {
        if intensity.len() < 2 || !pitch.is_finite() || pitch <= 0.0 {
            return Err(Error::InvalidParameter(
                "radial PSF needs at least two samples and positive pitch".into(),
            ));
        }
        if intensity.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidParameter(
                "radial PSF intensity must be finite and non-negative".into(),
            ));
        }
        let mut psf = Self {
            intensity: Vec::new(),
            pitch,
        };
        let total = {
            let integrand: Vec<f64> = intensity
                .iter()
                .enumerate()
                .map(|(i, &v)| 2.0 * PI * (i as f64 * pitch) * v)
                .collect();
            trapezoid(&integrand, pitch)
        };
        if total <= 0.0 {
            return Err(Error::InvalidParameter("radial PSF has zero power".into()));
        }
        for v in &mut intensity {
            *v /= total;
        }
        psf.intensity = intensity;
        Ok(psf)
    }

    /// Discrete integral ∫ 2πr I dr; 1 within 1e-9 after construction.
    pub fn total(&self) -> f64 {
        let integrand: Vec<f64> = self
            .intensity
            .iter()
            .enumerate()
            .map(|(i, &v)| 2.0 * PI * (i as f64 * self.pitch) * v)
            .collect();
        trapezoid(&integrand, self.pitch)
    }

    /// Linear interpolation; zero beyond the sampled support.
    pub fn value_at(&self, r: f64) -> f64 {
        if r < 0.0 {
            return self.value_at(-r);
        }
        let x = r / self.pitch;
        let i = x.floor() as usize;
        if i + 1 >= self.intensity.len() {
            return 0.0;
        }
        let frac = x - i as f64;
        self.intensity[i] * (1.0 - frac) + self.intensity[i + 1] * frac
    }

    pub fn max_radius(&self) -> f64 {
        (self.intensity.len() - 1) as f64 * self.pitch
    }

    /// FWHM of a centrally peaked profile: twice the first half-maximum
    /// crossing radius (linear interpolation between samples).
    pub fn fwhm(&self) -> Result<f64> {
        let half = self.intensity[0] / 2.0;
        if self.intensity[0] <= 0.0 {
            return Err(Error::InvalidParameter(
                "PSF peak is not at the origin".into(),
            ));
        }
        for i in 1..self.intensity.len() {
            if self.intensity[i] <= half {
                let a = self.intensity[i - 1];
                let b = self.intensity[i];
                let frac = (a - half) / (a - b);
                return Ok(2.0 * self.pitch * ((i - 1) as f64 + frac));
            }
        }
        Err(Error::InvalidParameter(
            "half-maximum not reached inside the sampled support".into(),
        ))
    }
}

/// Normalized intensity on a square Cartesian grid. The pattern center sits
/// at grid coordinate ((n−1)/2, (n−1)/2).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CartesianPsf {
    pub intensity: Vec<f64>,
    pub n: usize,
    /// Sample spacing, m.
    pub pitch: f64,
}

impl CartesianPsf {
    /// Normalizes so that Σ I · pitch² = 1.
    pub fn new(mut intensity: Vec<f64>, n: usize, pitch: f64) -> Result<Self> {
        if n < 2 || intensity.len() != n * n || !pitch.is_finite() || pitch <= 0.0 {
            return Err(Error::InvalidParameter(
                "Cartesian PSF needs an n x n grid (n >= 2) and positive pitch".into(),
            ));
        }
        if intensity.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidParameter(
                "Cartesian PSF intensity must be finite and non-negative".into(),
            ));
        }
        let total: f64 = intensity.iter().sum::<f64>() * pitch * pitch;
        if total <= 0.0 {
            return Err(Error::InvalidParameter("Cartesian PSF has zero power".into()));
        }
        for v in &mut intensity {
            *v /= total;
        }
        Ok(Self { intensity, n, pitch })
    }

    pub fn total(&self) -> f64 {
        self.intensity.iter().sum::<f64>() * self.pitch * self.pitch
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.intensity[iy * self.n + ix]
    }
}

/// Intensity distribution at the focal or image plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Psf {
    Radial(RadialPsf),
    Cartesian(CartesianPsf),
}

impl Psf {
    pub fn total(&self) -> f64 {
        match self {
            Psf::Radial(p) => p.total(),
            Psf::Cartesian(p) => p.total(),
        }
    }
}

/// Knife translation axis in the PSF plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

/// Knife-edge scan: for each knife position x0 the transmitted power
/// fraction over the half-plane axis > x0. Monotone decreasing from 1 to 0.
pub fn knife_edge_scan(psf: &Psf, axis: Axis, positions: &[f64]) -> Result<Vec<(f64, f64)>> {
    if positions.is_empty() {
        return Err(Error::InvalidParameter("empty knife position list".into()));
    }
    match psf {
        Psf::Radial(p) => {
            // Fraction of the circle of radius r lying at x > x0 is
            // arccos(x0/r)/π; isotropic, so the axis label is irrelevant.
            let total = p.total();
            Ok(positions
                .iter()
                .map(|&x0| {
                    let integrand: Vec<f64> = p
                        .intensity
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| {
                            let r = i as f64 * p.pitch;
                            let frac = if r <= x0.abs() {
                                if x0 > 0.0 {
                                    0.0
                                } else {
                                    1.0
                                }
                            } else {
                                (x0 / r).acos() / PI
                            };
                            2.0 * PI * r * v * frac
                        })
                        .collect();
                    (x0, trapezoid(&integrand, p.pitch) / total)
                })
                .collect())
        }
        Psf::Cartesian(p) => {
            // Marginal along the knife axis with partial-cell weighting.
            let mut marginal = vec![0.0; p.n];
            for iy in 0..p.n {
                for ix in 0..p.n {
                    let j = match axis {
                        Axis::X => ix,
                        Axis::Y => iy,
                    };
                    marginal[j] += p.at(ix, iy);
                }
            }
            let total: f64 = marginal.iter().sum();
            let center = (p.n as f64 - 1.0) / 2.0;
            Ok(positions
                .iter()
                .map(|&x0| {
                    let t: f64 = marginal
                        .iter()
                        .enumerate()
                        .map(|(j, &m)| {
                            let x = (j as f64 - center) * p.pitch;
                            let w = ((x + p.pitch / 2.0 - x0) / p.pitch).clamp(0.0, 1.0);
                            m * w
                        })
                        .sum();
                    (x0, t / total)
                })
                .collect())
        }
    }
}

/// Diffraction efficiency of an ideal 50/50 binary π-step phase grating into
/// order `m`: 4/(m²π²) for odd m, zero for m = 0 and even m.
pub fn binary_grating_efficiency(order: i64) -> f64 {
    if order == 0 || order % 2 == 0 {
        0.0
    } else {
        let m = order as f64;
        4.0 / (m * m * PI * PI)
    }
}

/// Cross-checks the two diffraction engines on an ideal converging pupil:
/// propagates a sampled lens field to focus with the angular-spectrum method
/// and compares the focal-plane intensity cut against the radial integral.
///
/// Returns the peak-normalized RMS difference over ±`window` samples around
/// the axis.
pub fn radial_vs_angular_spectrum_rms(
    wavelength: f64,
    focal_length: f64,
    aperture_diameter: f64,
    grid_n: usize,
    grid_pitch: f64,
    window: usize,
) -> Result<f64> {
    if window == 0 || window >= grid_n / 2 {
        return Err(Error::InvalidParameter(format!(
            "window must be in 1..{}, got {window}",
            grid_n / 2
        )));
    }
    let lens = converging_lens_field(
        wavelength,
        focal_length,
        aperture_diameter,
        grid_n,
        grid_pitch,
    )?;
    let focal = angular_spectrum_propagate(&lens, focal_length)?;
    let c = grid_n / 2;
    let center = focal.amplitude[c * grid_n + c].norm_sqr();
    if center <= 0.0 {
        return Err(Error::InvalidParameter("no on-axis focal intensity".into()));
    }

    let r_max = (window + 2) as f64 * grid_pitch;
    let radial = ideal_focus_psf(
        wavelength,
        focal_length,
        aperture_diameter,
        r_max,
        8 * (window + 2) + 1,
    )?;
    let radial_peak = radial.intensity[0];

    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for ix in c - window..=c + window {
        let x = (ix as f64 - c as f64) * grid_pitch;
        let a = focal.amplitude[c * grid_n + ix].norm_sqr() / center;
        let b = radial.value_at(x) / radial_peak;
        sum_sq += (a - b) * (a - b);
        count += 1;
    }
    Ok((sum_sq / count as f64).sqrt())
}
