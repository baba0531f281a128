//! Scenario files: the JSON schema driving the CLI, with strict validation
//! (unknown keys rejected) and builders into the domain types.
//!
//! All lengths, times and frequencies are SI; the one exception is the ion
//! mass, given in unified atomic mass units and converted internally.

use crate::error::{Error, Result};
use crate::image_formation::{CcdModel, ImagingSystem, PsfPlane, RenderOptions};
use crate::pfl_design::{
    design_zoneplate_with, fused_silica_index, solid_angle_fraction, numerical_aperture,
    ZoneParity, ZonePlateSpec,
};
use crate::trap_physics::{IonScene, TrapParams};
use crate::wave_optics::{
    binary_grating_efficiency, focal_field_radial, ideal_focus_psf, pupil_from_zoneplate,
    RadialPsf,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Schema version written into bundled scenarios and embedded in
/// `--version`; scenarios with a different major version are rejected.
pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lens: Option<LensBlock>,
    #[serde(default)]
    pub trap: Option<TrapBlock>,
    #[serde(default)]
    pub scene: Option<SceneBlock>,
    #[serde(default)]
    pub imaging: Option<ImagingBlock>,
    #[serde(default)]
    pub ccd: Option<CcdBlock>,
    #[serde(default)]
    pub render: Option<RenderBlock>,
    #[serde(default)]
    pub analysis: Option<AnalysisBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LensBlock {
    /// Design wavelength, m.
    pub wavelength: f64,
    /// Focal length, m.
    pub focal_length: f64,
    /// Clear aperture diameter, m.
    pub aperture_diameter: f64,
    /// Explicit refractive index; when absent the fused-silica Sellmeier
    /// model at the design wavelength is used.
    #[serde(default)]
    pub substrate_index: Option<f64>,
    #[serde(default)]
    pub etched_parity: ZoneParity,
    /// Optional fabrication grid the zone boundaries snap to, m.
    #[serde(default)]
    pub snap_grid: Option<f64>,
    /// Pupil sampling density for the diffraction integral.
    #[serde(default = "default_samples_per_zone")]
    pub samples_per_zone: usize,
}

fn default_samples_per_zone() -> usize {
    4
}

impl LensBlock {
    pub fn substrate_index(&self) -> f64 {
        self.substrate_index
            .unwrap_or_else(|| fused_silica_index(self.wavelength))
    }

    pub fn to_spec(&self) -> Result<ZonePlateSpec> {
        design_zoneplate_with(
            self.wavelength,
            self.focal_length,
            self.aperture_diameter,
            self.substrate_index(),
            self.etched_parity,
            self.snap_grid,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapBlock {
    /// Ion mass in unified atomic mass units.
    pub ion_mass_u: f64,
    /// Axial secular frequency, Hz.
    pub axial_frequency: f64,
    /// Radial secular frequency, Hz.
    pub radial_frequency: f64,
    /// Ion temperature, K.
    pub temperature: f64,
    /// RF drive amplitude, V (descriptive metadata).
    pub drive_voltage: f64,
    /// RF drive angular frequency, rad/s.
    pub drive_frequency: f64,
    /// 1-sigma uncertainty on the measured axial frequency, Hz.
    #[serde(default)]
    pub axial_frequency_uncertainty: f64,
}

impl TrapBlock {
    pub fn to_params(&self) -> Result<TrapParams> {
        TrapParams::with_mass_u(
            self.ion_mass_u,
            self.axial_frequency,
            self.radial_frequency,
            self.temperature,
            self.drive_voltage,
            self.drive_frequency,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneBlock {
    /// Ion positions in the object plane, m, 3-D.
    pub positions: Vec<[f64; 3]>,
    /// Per-axis RMS motion excursion, m.
    pub motion_rms: [f64; 3],
    /// Fluorescence wavelength, m.
    pub emission_wavelength: f64,
}

impl SceneBlock {
    pub fn to_scene(&self) -> Result<IonScene> {
        IonScene::new(
            self.positions.clone(),
            self.motion_rms,
            self.emission_wavelength,
        )
    }
}

/// Where the optical PSF comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsfSource {
    /// Binary-PFL diffraction integral from the `lens` block.
    Lens,
    /// Ideal converging pupil of the `lens` block geometry (aberration-free
    /// reference).
    Ideal,
    /// Analytic Gaussian of the given object-plane FWHM, m.
    Gaussian { fwhm: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingBlock {
    pub magnification: f64,
    /// Collected fraction of emitted photons (solid angle × efficiency ×
    /// transmission); when absent it is computed from the lens geometry and
    /// the first-order binary efficiency.
    #[serde(default)]
    pub collection_fraction: Option<f64>,
    pub psf: PsfSource,
    /// Object-plane radial extent of the computed PSF, m.
    #[serde(default = "default_psf_r_max")]
    pub psf_r_max: f64,
    /// Radial sample count of the computed PSF.
    #[serde(default = "default_psf_samples")]
    pub psf_samples: usize,
}

fn default_psf_r_max() -> f64 {
    1.5e-6
}

fn default_psf_samples() -> usize {
    400
}

impl ImagingBlock {
    fn optical_psf(&self, lens: Option<&LensBlock>) -> Result<RadialPsf> {
        match &self.psf {
            PsfSource::Gaussian { fwhm } => {
                let sigma = fwhm / (8.0 * 2f64.ln()).sqrt();
                let n = self.psf_samples.max(2);
                let pitch = self.psf_r_max / (n - 1) as f64;
                let intensity = (0..n)
                    .map(|i| (-0.5 * ((i as f64 * pitch) / sigma).powi(2)).exp())
                    .collect();
                RadialPsf::new(intensity, pitch)
            }
            PsfSource::Ideal => {
                let lens = lens.ok_or_else(|| {
                    Error::Scenario("imaging.psf = ideal requires a lens block".into())
                })?;
                ideal_focus_psf(
                    lens.wavelength,
                    lens.focal_length,
                    lens.aperture_diameter,
                    self.psf_r_max,
                    self.psf_samples,
                )
            }
            PsfSource::Lens => {
                let lens = lens.ok_or_else(|| {
                    Error::Scenario("imaging.psf = lens requires a lens block".into())
                })?;
                let spec = lens.to_spec()?;
                let pupil = pupil_from_zoneplate(&spec, lens.samples_per_zone)?;
                focal_field_radial(&pupil, lens.focal_length, self.psf_r_max, self.psf_samples)
            }
        }
    }

    pub fn to_system(&self, lens: Option<&LensBlock>) -> Result<ImagingSystem> {
        let collection = match self.collection_fraction {
            Some(c) => c,
            None => {
                let lens = lens.ok_or_else(|| {
                    Error::Scenario(
                        "imaging.collection_fraction absent and no lens block to derive it"
                            .into(),
                    )
                })?;
                let na = numerical_aperture(lens.focal_length, lens.aperture_diameter)?;
                solid_angle_fraction(na)? * binary_grating_efficiency(1)
            }
        };
        ImagingSystem::new(
            self.magnification,
            self.optical_psf(lens)?,
            PsfPlane::Object,
            collection,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcdBlock {
    /// Pixel pitch, m.
    pub pixel_pitch: f64,
    /// (width, height) in pixels.
    pub array_size: (usize, usize),
    #[serde(default = "default_qe")]
    pub quantum_efficiency: f64,
    /// Electrons RMS per read.
    #[serde(default = "default_read_noise")]
    pub read_noise: f64,
    /// Electrons per second per pixel.
    #[serde(default)]
    pub dark_rate: f64,
    /// Electrons per count unit.
    #[serde(default = "default_gain")]
    pub gain: f64,
    #[serde(default = "default_saturation")]
    pub saturation: u32,
}

fn default_qe() -> f64 {
    0.35
}

fn default_read_noise() -> f64 {
    10.0
}

fn default_gain() -> f64 {
    1.0
}

fn default_saturation() -> u32 {
    65535
}

impl CcdBlock {
    pub fn to_model(&self) -> Result<CcdModel> {
        let model = CcdModel {
            pixel_pitch: self.pixel_pitch,
            array_size: self.array_size,
            quantum_efficiency: self.quantum_efficiency,
            read_noise: self.read_noise,
            dark_rate: self.dark_rate,
            gain: self.gain,
            saturation: self.saturation,
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderBlock {
    /// Exposure time, s.
    pub exposure: f64,
    /// Collected-photon source rate per ion before solid angle and QE,
    /// photons/s.
    pub photon_rate: f64,
    /// Uniform background photon rate per pixel, photons/s (stray light and
    /// other diffraction orders).
    #[serde(default)]
    pub background_rate: f64,
    #[serde(default = "default_supersample")]
    pub supersample: usize,
}

fn default_supersample() -> usize {
    4
}

impl RenderBlock {
    pub fn to_options(&self) -> RenderOptions {
        RenderOptions {
            background_rate: self.background_rate,
            supersample: self.supersample,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBlock {
    /// Fit region of interest [x0, y0, width, height]; whole frame when
    /// absent.
    #[serde(default)]
    pub roi: Option<[usize; 4]>,
    /// Known physical displacement for the cross-check, m.
    #[serde(default)]
    pub displacement: Option<[f64; 3]>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.check_schema()?;
        Ok(scenario)
    }

    pub fn from_file(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    fn check_schema(&self) -> Result<()> {
        let major = self.schema_version.split('.').next().unwrap_or("");
        let expected = SCHEMA_VERSION.split('.').next().unwrap();
        if major != expected {
            return Err(Error::Scenario(format!(
                "schema_version {} has major version {major:?}, expected {expected}",
                self.schema_version
            )));
        }
        Ok(())
    }

    /// The named block, or a scenario error telling the user what is
    /// missing.
    pub fn require<'a, T>(block: &'a Option<T>, name: &str) -> Result<&'a T> {
        block
            .as_ref()
            .ok_or_else(|| Error::Scenario(format!("missing required block `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"{
            "schema_version": "1.0",
            "seed": 7,
            "lens": {
                "wavelength": 369.5e-9,
                "focal_length": 3e-3,
                "aperture_diameter": 5e-3
            }
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_applies_defaults() {
        let s = Scenario::from_json(&minimal()).unwrap();
        assert_eq!(s.seed, 7);
        let lens = s.lens.unwrap();
        assert_eq!(lens.samples_per_zone, 4);
        assert!(lens.substrate_index.is_none());
        // Sellmeier index at 369.5 nm.
        assert!((lens.substrate_index() - 1.4739).abs() < 1e-3);
        assert_eq!(lens.etched_parity, ZoneParity::default());
    }

    #[test]
    fn unknown_key_rejected() {
        let text = minimal().replace("\"seed\": 7,", "\"seed\": 7, \"sneed\": 1,");
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("sneed"), "{err}");
    }

    #[test]
    fn missing_field_names_the_field() {
        let text = minimal().replace("\"focal_length\": 3e-3,", "");
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("focal_length"), "{err}");
    }

    #[test]
    fn schema_major_mismatch_rejected() {
        let text = minimal().replace("\"1.0\"", "\"2.0\"");
        assert!(matches!(
            Scenario::from_json(&text),
            Err(Error::Scenario(_))
        ));
        // Minor bumps are fine.
        let text = minimal().replace("\"1.0\"", "\"1.3\"");
        assert!(Scenario::from_json(&text).is_ok());
    }

    #[test]
    fn round_trips_through_json() {
        let s = Scenario::from_json(&minimal()).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let s2 = Scenario::from_json(&text).unwrap();
        assert_eq!(s2.seed, s.seed);
        assert_eq!(
            s2.lens.unwrap().focal_length,
            s.lens.unwrap().focal_length
        );
    }

    #[test]
    fn missing_block_reported_by_name() {
        let s = Scenario::from_json(&minimal()).unwrap();
        let err = Scenario::require(&s.trap, "trap").unwrap_err();
        assert!(err.to_string().contains("trap"), "{err}");
    }

    #[test]
    fn gaussian_psf_source_builds_a_system() {
        let text = r#"{
            "schema_version": "1.0",
            "imaging": {
                "magnification": 615.0,
                "collection_fraction": 0.047,
                "psf": { "type": "gaussian", "fwhm": 300e-9 }
            }
        }"#;
        let s = Scenario::from_json(text).unwrap();
        let sys = s.imaging.as_ref().unwrap().to_system(None).unwrap();
        assert_eq!(sys.magnification, 615.0);
        let fwhm = sys.psf.fwhm().unwrap();
        assert!((fwhm - 300e-9).abs() / 300e-9 < 0.02, "fwhm {fwhm}");
    }
}
