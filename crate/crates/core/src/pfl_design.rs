//! Binary phase Fresnel lens design: zone boundaries from the scalar design
//! equation, π-step etch depth, and collection geometry (NA, solid angle).

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Which zones carry the π phase step.
///
/// Zone `n` (1-based) spans radii `(r_{n-1}, r_n]` with `r_0 = 0`. Flipping
/// the parity multiplies the pupil transmission by a global `e^{iπ}`, which
/// drops out of the focal intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneParity {
    /// Even-numbered zones etched; the first (central) zone is unetched.
    #[default]
    EvenEtched,
    /// Odd-numbered zones etched.
    OddEtched,
}

impl ZoneParity {
    /// Phase (rad) imposed on zone `n` (1-based).
    pub fn phase(self, zone_index: usize) -> f64 {
        let etched = match self {
            ZoneParity::EvenEtched => zone_index % 2 == 0,
            ZoneParity::OddEtched => zone_index % 2 == 1,
        };
        if etched {
            std::f64::consts::PI
        } else {
            0.0
        }
    }
}

/// A designed binary phase Fresnel lens.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZonePlateSpec {
    /// Design wavelength, m.
    pub design_wavelength: f64,
    /// Focal length, m.
    pub focal_length: f64,
    /// Clear aperture diameter, m.
    pub aperture_diameter: f64,
    /// Zone boundary radii r_1..r_N satisfying r_n² = nλf + n²λ²/4, m.
    pub zone_boundaries: Vec<f64>,
    /// Etch depth producing a π phase step, m.
    pub etch_depth: f64,
    /// Substrate refractive index at the design wavelength.
    pub substrate_index: f64,
    /// Which zones are etched.
    pub etched_parity: ZoneParity,
}

impl ZonePlateSpec {
    /// Number of complete zone boundaries inside the aperture.
    pub fn zone_count(&self) -> usize {
        self.zone_boundaries.len()
    }

    /// Aperture radius, m.
    pub fn aperture_radius(&self) -> f64 {
        self.aperture_diameter / 2.0
    }

    /// Writes the mask as CSV: `n,inner_radius_m,outer_radius_m,phase_rad`.
    ///
    /// The final row is the partial zone truncated at the aperture edge,
    /// when one exists.
    pub fn write_mask_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,inner_radius_m,outer_radius_m,phase_rad")?;
        let r_ap = self.aperture_radius();
        let mut inner = 0.0f64;
        for (i, &outer) in self.zone_boundaries.iter().enumerate() {
            let n = i + 1;
            writeln!(
                out,
                "{n},{inner:.12e},{outer:.12e},{:.12e}",
                self.etched_parity.phase(n)
            )?;
            inner = outer;
        }
        if inner < r_ap {
            let n = self.zone_boundaries.len() + 1;
            writeln!(
                out,
                "{n},{inner:.12e},{r_ap:.12e},{:.12e}",
                self.etched_parity.phase(n)
            )?;
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }
}

/// Collection geometry derived from focal length and aperture.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LensGeometry {
    pub numerical_aperture: f64,
    pub f_number: f64,
    pub solid_angle_fraction: f64,
}

/// NA = sin(arctan(d/2f)); always below the paraxial estimate d/2f.
pub fn numerical_aperture(focal_length: f64, aperture_diameter: f64) -> Result<f64> {
    ensure_positive("focal_length", focal_length)?;
    ensure_positive("aperture_diameter", aperture_diameter)?;
    Ok((aperture_diameter / (2.0 * focal_length)).atan().sin())
}

/// Fraction of the full 4π sphere subtended by a cone of half-angle
/// arcsin(NA): (1 − √(1 − NA²))/2.
pub fn solid_angle_fraction(na: f64) -> Result<f64> {
    ensure_finite("numerical_aperture", na)?;
    if !(0.0..=1.0).contains(&na) {
        return Err(Error::InvalidParameter(format!(
            "numerical aperture must lie in [0, 1], got {na}"
        )));
    }
    Ok((1.0 - (1.0 - na * na).sqrt()) / 2.0)
}

/// Etch depth giving a π phase step in transmission: λ / (2(n − 1)).
pub fn pi_etch_depth(wavelength: f64, substrate_index: f64) -> Result<f64> {
    ensure_positive("wavelength", wavelength)?;
    ensure_finite("substrate_index", substrate_index)?;
    if substrate_index <= 1.0 {
        return Err(Error::NoPhaseContrast(substrate_index));
    }
    Ok(wavelength / (2.0 * (substrate_index - 1.0)))
}

/// NA, f-number and solid-angle fraction for a lens of the given focal
/// length and clear aperture.
pub fn lens_geometry(focal_length: f64, aperture_diameter: f64) -> Result<LensGeometry> {
    let na = numerical_aperture(focal_length, aperture_diameter)?;
    Ok(LensGeometry {
        numerical_aperture: na,
        f_number: focal_length / aperture_diameter,
        solid_angle_fraction: solid_angle_fraction(na)?,
    })
}

/// Fused-silica refractive index from the three-term Sellmeier relation
/// (Malitson 1965). Wavelength in meters; valid ~0.21–3.7 µm.
pub fn fused_silica_index(wavelength: f64) -> f64 {
    let l2 = (wavelength * 1e6).powi(2);
    let n2 = 1.0
        + 0.6961663 * l2 / (l2 - 0.0684043f64.powi(2))
        + 0.4079426 * l2 / (l2 - 0.1162414f64.powi(2))
        + 0.8974794 * l2 / (l2 - 9.896161f64.powi(2));
    n2.sqrt()
}

/// Designs a binary PFL: every boundary r_n = √(nλf + n²λ²/4) with
/// r_n ≤ d/2, plus the π-step etch depth for the given substrate.
pub fn design_zoneplate(
    wavelength: f64,
    focal_length: f64,
    aperture_diameter: f64,
    substrate_index: f64,
) -> Result<ZonePlateSpec> {
    design_zoneplate_with(
        wavelength,
        focal_length,
        aperture_diameter,
        substrate_index,
        ZoneParity::default(),
        None,
    )
}

/// [`design_zoneplate`] with explicit etched-zone parity and an optional
/// fabrication-grid snap (boundaries rounded to the nearest grid multiple).
pub fn design_zoneplate_with(
    wavelength: f64,
    focal_length: f64,
    aperture_diameter: f64,
    substrate_index: f64,
    parity: ZoneParity,
    snap_grid: Option<f64>,
) -> Result<ZonePlateSpec> {
    ensure_positive("wavelength", wavelength)?;
    ensure_positive("focal_length", focal_length)?;
    ensure_positive("aperture_diameter", aperture_diameter)?;
    let etch_depth = pi_etch_depth(wavelength, substrate_index)?;
    if let Some(g) = snap_grid {
        ensure_positive("snap_grid", g)?;
    }

    let r_ap = aperture_diameter / 2.0;
    // Largest n with r_n <= d/2: n = floor(2 (sqrt(f² + R²) − f) / λ).
    let n_max = (2.0 * ((focal_length * focal_length + r_ap * r_ap).sqrt() - focal_length)
        / wavelength)
        .floor() as usize;
    if n_max == 0 {
        return Err(Error::InvalidParameter(format!(
            "aperture radius {r_ap} m is smaller than the first zone radius"
        )));
    }

    let mut boundaries = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let nf = n as f64;
        let mut r = (nf * wavelength * focal_length
            + nf * nf * wavelength * wavelength / 4.0)
            .sqrt();
        if let Some(g) = snap_grid {
            r = (r / g).round() * g;
        }
        boundaries.push(r);
    }

    Ok(ZonePlateSpec {
        design_wavelength: wavelength,
        focal_length,
        aperture_diameter,
        zone_boundaries: boundaries,
        etch_depth,
        substrate_index,
        etched_parity: parity,
    })
}
