//! Command-line front end: scenario-driven lens design, PSF computation,
//! synthetic frame rendering, spot fitting and magnification calibration.

use clap::{Parser, Subcommand};
use pflsim::analysis::{
    calibrate_magnification, displacement_crosscheck, fit_gaussian_2d, fit_single_spot,
    object_plane_fwhm, Roi, ValueWithUncertainty,
};
use pflsim::image_formation::{render_frame_with, CcdFrame, RenderOptions};
use pflsim::pfl_design::lens_geometry;
use pflsim::scenario::{Scenario, SCHEMA_VERSION};
use pflsim::wave_optics::{
    focal_field_radial, ideal_focus_psf, knife_edge_scan, pupil_from_zoneplate,
    radial_vs_angular_spectrum_rms, Axis, Psf,
};
use pflsim::{Error, Result};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

const PAPER_NOMINAL: &str = include_str!("../../scenarios/paper_nominal.json");

fn version_string() -> &'static str {
    Box::leak(
        format!("{} (schema {SCHEMA_VERSION})", env!("CARGO_PKG_VERSION")).into_boxed_str(),
    )
}

#[derive(Parser)]
#[command(
    name = "pflsim",
    version = version_string(),
    about = "Binary phase Fresnel lens imaging pipeline"
)]
struct Cli {
    /// Scenario JSON; the bundled paper-nominal scenario when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread count; results are invariant to it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design the zone plate: mask CSV, lens JSON, geometry report.
    Design,
    /// Compute the focal PSF, FWHM summary and knife-edge scan.
    Psf {
        /// Also run the reduced-aperture radial vs 2-D engine cross-check.
        #[arg(long)]
        crosscheck: bool,
    },
    /// Render a synthetic CCD frame of the scene.
    Simulate,
    /// Fit a 2-D Gaussian to a frame CSV and report object-plane widths.
    Fit {
        /// Frame CSV produced by `simulate`.
        frame: PathBuf,
    },
    /// Two-ion magnification calibration from a frame CSV.
    Calibrate {
        /// Frame CSV produced by `simulate`.
        frame: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // Ignore failure: the global pool may already exist in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Err(e) = run(&cli) {
        let obj = serde_json::json!({
            "error": { "kind": e.kind(), "message": e.to_string() }
        });
        eprintln!("{obj}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: &Cli) -> Result<()> {
    let text = match &cli.scenario {
        Some(path) => fs::read_to_string(path)?,
        None => PAPER_NOMINAL.to_string(),
    };
    let mut scenario = Scenario::from_json(&text)?;
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    fs::create_dir_all(&cli.out)?;

    match &cli.command {
        Command::Design => cmd_design(&scenario, &cli.out),
        Command::Psf { crosscheck } => cmd_psf(&scenario, &cli.out, *crosscheck),
        Command::Simulate => cmd_simulate(&scenario, &text, &cli.out),
        Command::Fit { frame } => cmd_fit(frame, &scenario, &cli.out),
        Command::Calibrate { frame } => cmd_calibrate(frame, &scenario, &cli.out),
    }
}

/// Writes through a temp file in the same directory so readers never see a
/// partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn cmd_design(scenario: &Scenario, out: &Path) -> Result<()> {
    let lens = Scenario::require(&scenario.lens, "lens")?;
    let spec = lens.to_spec()?;
    let geometry = lens_geometry(spec.focal_length, spec.aperture_diameter)?;

    let mut mask = Vec::new();
    spec.write_mask_csv(&mut mask)?;
    write_atomic(&out.join("mask.csv"), &mask)?;
    spec.write_json(&out.join("lens.json"))?;

    let outer_width = spec.zone_boundaries[spec.zone_count() - 1]
        - spec.zone_boundaries[spec.zone_count() - 2];
    write_json(
        &out.join("geometry.json"),
        &serde_json::json!({
            "numerical_aperture": geometry.numerical_aperture,
            "f_number": geometry.f_number,
            "solid_angle_fraction": geometry.solid_angle_fraction,
            "zone_count": spec.zone_count(),
            "etch_depth_m": spec.etch_depth,
            "substrate_index": spec.substrate_index,
            "outer_zone_width_m": outer_width,
        }),
    )?;
    println!(
        "designed {} zones, NA {:.3}, etch depth {:.1} nm",
        spec.zone_count(),
        geometry.numerical_aperture,
        spec.etch_depth * 1e9
    );
    Ok(())
}

fn psf_csv(psf: &pflsim::wave_optics::RadialPsf) -> String {
    let mut text = String::from("r_m,intensity\n");
    for (i, v) in psf.intensity.iter().enumerate() {
        writeln!(text, "{:.12e},{:.12e}", i as f64 * psf.pitch, v).unwrap();
    }
    text
}

fn cmd_psf(scenario: &Scenario, out: &Path, crosscheck: bool) -> Result<()> {
    let lens = Scenario::require(&scenario.lens, "lens")?;
    let (r_max, n_r) = scenario
        .imaging
        .as_ref()
        .map(|b| (b.psf_r_max, b.psf_samples))
        .unwrap_or((1.5e-6, 400));

    let spec = lens.to_spec()?;
    let pupil = pupil_from_zoneplate(&spec, lens.samples_per_zone)?;
    let binary = focal_field_radial(&pupil, spec.focal_length, r_max, n_r)?;
    let ideal = ideal_focus_psf(
        spec.design_wavelength,
        spec.focal_length,
        spec.aperture_diameter,
        r_max,
        n_r,
    )?;
    write_atomic(&out.join("psf.csv"), psf_csv(&binary).as_bytes())?;
    write_atomic(&out.join("psf_ideal.csv"), psf_csv(&ideal).as_bytes())?;
    // Sidecar describing the normalization of both CSVs.
    write_json(
        &out.join("psf_meta.json"),
        &serde_json::json!({
            "normalization": "integral of 2*pi*r*I(r) dr equals 1 over the sampled support",
            "r_max_m": r_max,
            "samples": n_r,
        }),
    )?;

    let binary_fwhm = binary.fwhm()?;
    let ideal_fwhm = ideal.fwhm()?;
    let na = lens_geometry(spec.focal_length, spec.aperture_diameter)?.numerical_aperture;

    let positions: Vec<f64> = (0..401)
        .map(|i| -r_max + 2.0 * r_max * i as f64 / 400.0)
        .collect();
    let scan = knife_edge_scan(&Psf::Radial(binary.clone()), Axis::X, &positions)?;
    let mut knife = String::from("position_m,transmitted_fraction\n");
    for (x, t) in &scan {
        writeln!(knife, "{x:.12e},{t:.12e}").unwrap();
    }
    write_atomic(&out.join("knife_edge.csv"), knife.as_bytes())?;

    let mut summary = serde_json::json!({
        "binary_fwhm_m": binary_fwhm,
        "ideal_fwhm_m": ideal_fwhm,
        "binary_to_ideal_ratio": binary_fwhm / ideal_fwhm,
        "airy_fwhm_m": 0.514 * spec.design_wavelength / na,
        "numerical_aperture": na,
    });
    if crosscheck {
        let rms = radial_vs_angular_spectrum_rms(
            spec.design_wavelength,
            150e-6,
            40e-6,
            1024,
            0.125e-6,
            40,
        )?;
        summary["crosscheck"] = serde_json::json!({
            "focal_length_m": 150e-6,
            "aperture_diameter_m": 40e-6,
            "rms_relative_difference": rms,
        });
    }
    write_json(&out.join("fwhm.json"), &summary)?;
    println!(
        "binary FWHM {:.1} nm, ideal {:.1} nm",
        binary_fwhm * 1e9,
        ideal_fwhm * 1e9
    );
    Ok(())
}

/// FNV-1a over the scenario text, recorded as provenance in frame metadata.
fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn cmd_simulate(scenario: &Scenario, scenario_text: &str, out: &Path) -> Result<()> {
    let scene = Scenario::require(&scenario.scene, "scene")?.to_scene()?;
    let imaging = Scenario::require(&scenario.imaging, "imaging")?;
    let ccd = Scenario::require(&scenario.ccd, "ccd")?.to_model()?;
    let render = Scenario::require(&scenario.render, "render")?;

    let system = imaging.to_system(scenario.lens.as_ref())?;
    let options: RenderOptions = render.to_options();
    let frame = render_frame_with(
        &system,
        &scene,
        &ccd,
        render.exposure,
        render.photon_rate,
        scenario.seed,
        &options,
    )?;

    let mut csv = Vec::new();
    frame.write_csv(&mut csv)?;
    write_atomic(&out.join("frame.csv"), &csv)?;
    // Temp name keeps the .png suffix so the encoder recognizes the format.
    let png_tmp = out.join(".frame.tmp.png");
    frame.write_png(&png_tmp)?;
    fs::rename(&png_tmp, out.join("frame.png"))?;

    write_json(
        &out.join("frame_meta.json"),
        &serde_json::json!({
            "seed": scenario.seed,
            "exposure_s": render.exposure,
            "scenario_fnv1a": format!("{:016x}", fnv1a(scenario_text)),
            "saturation_warning": frame.saturation_warning,
            "array_size": [frame.width, frame.height],
        }),
    )?;
    if frame.saturation_warning {
        eprintln!("warning: more than 1% of pixels saturated");
    }
    println!("rendered {}x{} frame, seed {}", frame.width, frame.height, scenario.seed);
    Ok(())
}

fn fit_report(fit: &pflsim::analysis::GaussianFitResult) -> serde_json::Value {
    let (fx, fy) = fit.fwhm_px();
    let (ux, uy) = fit.fwhm_uncertainty_px();
    serde_json::json!({
        "amplitude": fit.amplitude,
        "center_px": [fit.center.0, fit.center.1],
        "center_uncertainty_px": [
            fit.center_uncertainty_px().0,
            fit.center_uncertainty_px().1
        ],
        "sigma_px": [fit.sigma.0, fit.sigma.1],
        "offset": fit.offset,
        "fwhm_px": [fx, fy],
        "fwhm_uncertainty_px": [ux, uy],
        "reduced_chi2": fit.reduced_chi2,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "covariance": fit.covariance,
    })
}

fn cmd_fit(frame_path: &Path, scenario: &Scenario, out: &Path) -> Result<()> {
    let frame = CcdFrame::read_csv(frame_path)?;
    let roi = scenario
        .analysis
        .as_ref()
        .and_then(|a| a.roi)
        .map(|[x0, y0, width, height]| Roi {
            x0,
            y0,
            width,
            height,
        });

    let fit = match roi {
        Some(roi) => {
            let fit = fit_gaussian_2d(&frame, roi, None)?;
            if !fit.converged {
                return Err(Error::FitNotConverged);
            }
            fit
        }
        None => fit_single_spot(&frame)?,
    };
    let mut report = fit_report(&fit);

    if let (Some(imaging), Some(ccd)) = (&scenario.imaging, &scenario.ccd) {
        let m = ValueWithUncertainty {
            value: imaging.magnification,
            uncertainty: 0.0,
        };
        let (fx, fy) = object_plane_fwhm(&fit, m, ccd.pixel_pitch)?;
        report["object_plane_fwhm_nm"] = serde_json::json!([fx.value * 1e9, fy.value * 1e9]);
        report["object_plane_fwhm_uncertainty_nm"] =
            serde_json::json!([fx.uncertainty * 1e9, fy.uncertainty * 1e9]);
        println!(
            "object-plane FWHM {:.1} nm x {:.1} nm",
            fx.value * 1e9,
            fy.value * 1e9
        );
    }
    write_json(&out.join("fit.json"), &report)
}

fn cmd_calibrate(frame_path: &Path, scenario: &Scenario, out: &Path) -> Result<()> {
    let frame = CcdFrame::read_csv(frame_path)?;
    let trap_block = Scenario::require(&scenario.trap, "trap")?;
    let trap = trap_block.to_params()?;
    let ccd = Scenario::require(&scenario.ccd, "ccd")?.to_model()?;

    let cal = calibrate_magnification(
        &frame,
        &trap,
        trap_block.axial_frequency_uncertainty,
        &ccd,
    )?;
    let mut report = serde_json::to_value(&cal)?;

    // Optional displacement cross-check against a sibling displaced frame.
    if let Some(delta) = scenario.analysis.as_ref().and_then(|a| a.displacement) {
        let displaced_path = frame_path.with_file_name("frame_displaced.csv");
        if displaced_path.exists() {
            let displaced = CcdFrame::read_csv(&displaced_path)?;
            let d = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
            let discrepancy = displacement_crosscheck(
                &frame,
                &displaced,
                d,
                cal.magnification.value,
                &ccd,
            )?;
            report["displacement_discrepancy"] = serde_json::json!(discrepancy);
        }
    }
    write_json(&out.join("calibration.json"), &report)?;
    println!(
        "magnification {:.1} +/- {:.1}",
        cal.magnification.value, cal.magnification.uncertainty
    );
    Ok(())
}
