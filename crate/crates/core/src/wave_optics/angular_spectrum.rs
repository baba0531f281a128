//! Band-limited angular-spectrum propagation on a square Cartesian grid.
//! Serves as the 2-D cross-check engine for the radial integral.

use crate::error::{ensure_positive, Error, Result};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Complex scalar field sampled on a square N×N grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    /// Row-major amplitude, length n·n.
    pub amplitude: Vec<Complex64>,
    pub n: usize,
    /// Sample pitch, m.
    pub pitch: f64,
    /// Wavelength, m.
    pub wavelength: f64,
}

impl ScalarField {
    pub fn new(
        amplitude: Vec<Complex64>,
        n: usize,
        pitch: f64,
        wavelength: f64,
    ) -> Result<Self> {
        ensure_positive("pitch", pitch)?;
        ensure_positive("wavelength", wavelength)?;
        if n < 2 || amplitude.len() != n * n {
            return Err(Error::InvalidParameter(
                "field must be square with n >= 2".into(),
            ));
        }
        if amplitude
            .iter()
            .any(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(Error::InvalidParameter("field must be finite".into()));
        }
        Ok(Self {
            amplitude,
            n,
            pitch,
            wavelength,
        })
    }

    /// Total power Σ|a|²·pitch².
    pub fn power(&self) -> f64 {
        self.amplitude.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.pitch * self.pitch
    }

    /// |a|² grid, row-major.
    pub fn intensity(&self) -> Vec<f64> {
        self.amplitude.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Grid coordinate of sample index along either axis, centered so that
    /// index n/2 sits at 0.
    pub fn coordinate(&self, index: usize) -> f64 {
        (index as f64 - (self.n / 2) as f64) * self.pitch
    }
}

fn fft2(data: &mut [Complex64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    // Rows.
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    // Columns via transpose.
    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = data[i * n + j];
        }
    }
    for row in t.chunks_exact_mut(n) {
        fft.process(row);
    }
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] = t[j * n + i];
        }
    }
}

/// Propagates a field a distance `z` (negative z back-propagates) with the
/// exact scalar transfer function e^{iz√(k² − kx² − ky²)}; evanescent
/// components are set to zero. `z = 0` returns the input unchanged.
pub fn angular_spectrum_propagate(field: &ScalarField, z: f64) -> Result<ScalarField> {
    if !z.is_finite() {
        return Err(Error::InvalidParameter(format!("z must be finite, got {z}")));
    }
    if z == 0.0 {
        return Ok(field.clone());
    }
    let n = field.n;
    let k = 2.0 * PI / field.wavelength;
    let mut spectrum = field.amplitude.clone();
    fft2(&mut spectrum, n, false);

    let df = 1.0 / (n as f64 * field.pitch);
    let freq = |i: usize| -> f64 {
        if i <= n / 2 {
            i as f64 * df
        } else {
            (i as f64 - n as f64) * df
        }
    };
    for iy in 0..n {
        let ky = 2.0 * PI * freq(iy);
        for ix in 0..n {
            let kx = 2.0 * PI * freq(ix);
            let kz2 = k * k - kx * kx - ky * ky;
            let idx = iy * n + ix;
            if kz2 > 0.0 {
                spectrum[idx] *= Complex64::from_polar(1.0, z * kz2.sqrt());
            } else {
                spectrum[idx] = Complex64::new(0.0, 0.0);
            }
        }
    }
    fft2(&mut spectrum, n, true);
    let scale = 1.0 / (n * n) as f64;
    for a in &mut spectrum {
        *a *= scale;
    }
    ScalarField::new(spectrum, n, field.pitch, field.wavelength)
}

/// Hard circular aperture with the ideal converging phase of a perfect lens
/// of focal length `f`: t(ρ) = e^{−ik(√(f²+ρ²) − f)} inside the aperture.
pub fn converging_lens_field(
    wavelength: f64,
    focal_length: f64,
    aperture_diameter: f64,
    n: usize,
    pitch: f64,
) -> Result<ScalarField> {
    ensure_positive("focal_length", focal_length)?;
    ensure_positive("aperture_diameter", aperture_diameter)?;
    let k = 2.0 * PI / wavelength;
    let r_ap = aperture_diameter / 2.0;
    let c = (n / 2) as f64;
    let mut amp = vec![Complex64::new(0.0, 0.0); n * n];
    for iy in 0..n {
        let y = (iy as f64 - c) * pitch;
        for ix in 0..n {
            let x = (ix as f64 - c) * pitch;
            let rho2 = x * x + y * y;
            if rho2 <= r_ap * r_ap {
                let d = (focal_length * focal_length + rho2).sqrt();
                amp[iy * n + ix] = Complex64::from_polar(1.0, -k * (d - focal_length));
            }
        }
    }
    ScalarField::new(amp, n, pitch, wavelength)
}

/// Collimated Gaussian beam at its waist: a(ρ) = e^{−ρ²/w0²} (1/e² intensity
/// radius w0).
pub fn gaussian_beam_field(
    wavelength: f64,
    waist: f64,
    n: usize,
    pitch: f64,
) -> Result<ScalarField> {
    ensure_positive("waist", waist)?;
    let c = (n / 2) as f64;
    let mut amp = vec![Complex64::new(0.0, 0.0); n * n];
    for iy in 0..n {
        let y = (iy as f64 - c) * pitch;
        for ix in 0..n {
            let x = (ix as f64 - c) * pitch;
            amp[iy * n + ix] = Complex64::new((-(x * x + y * y) / (waist * waist)).exp(), 0.0);
        }
    }
    ScalarField::new(amp, n, pitch, wavelength)
}
