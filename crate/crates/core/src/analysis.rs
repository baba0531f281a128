//! The measurement chain applied to camera frames: 2-D Gaussian spot
//! fitting, object-plane FWHM conversion, two-ion magnification calibration
//! and the displacement cross-check.

use crate::error::{ensure_positive, Error, Result};
use crate::image_formation::{CcdFrame, CcdModel};
use crate::trap_physics::{ion_spacing, TrapParams};
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

/// 2√(2 ln 2): FWHM per unit Gaussian sigma.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Pixel rectangle, half-open, inside a frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    pub fn full(frame: &CcdFrame) -> Self {
        Roi {
            x0: 0,
            y0: 0,
            width: frame.width,
            height: frame.height,
        }
    }

    fn contains(&self, frame: &CcdFrame) -> bool {
        self.width >= 1
            && self.height >= 1
            && self.x0 + self.width <= frame.width
            && self.y0 + self.height <= frame.height
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ValueWithUncertainty {
    pub value: f64,
    pub uncertainty: f64,
}

/// Result of an axis-aligned elliptical Gaussian + offset fit.
///
/// Parameter order in the covariance matrix:
/// amplitude, x0, y0, sigma_x, sigma_y, offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianFitResult {
    pub amplitude: f64,
    /// Center in absolute frame pixel coordinates.
    pub center: (f64, f64),
    pub sigma: (f64, f64),
    pub offset: f64,
    pub covariance: [[f64; 6]; 6],
    pub reduced_chi2: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl GaussianFitResult {
    pub fn fwhm_px(&self) -> (f64, f64) {
        (FWHM_PER_SIGMA * self.sigma.0, FWHM_PER_SIGMA * self.sigma.1)
    }

    /// 1-sigma uncertainty on the FWHM per axis, from the covariance.
    pub fn fwhm_uncertainty_px(&self) -> (f64, f64) {
        (
            FWHM_PER_SIGMA * self.covariance[3][3].max(0.0).sqrt(),
            FWHM_PER_SIGMA * self.covariance[4][4].max(0.0).sqrt(),
        )
    }

    pub fn center_uncertainty_px(&self) -> (f64, f64) {
        (
            self.covariance[1][1].max(0.0).sqrt(),
            self.covariance[2][2].max(0.0).sqrt(),
        )
    }
}

/// Two-ion magnification calibration outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub magnification: ValueWithUncertainty,
    pub pixel_separation: ValueWithUncertainty,
    /// Coulomb-equilibrium spacing predicted from the trap frequency, m.
    pub predicted_spacing: f64,
}

/// Model value and analytic Jacobian row of the elliptical Gaussian at pixel
/// center (x, y). Parameters: [amplitude, x0, y0, sigma_x, sigma_y, offset].
pub fn gaussian_model_and_jacobian(p: &[f64; 6], x: f64, y: f64) -> (f64, [f64; 6]) {
    let [a, x0, y0, sx, sy, _b] = *p;
    let dx = x - x0;
    let dy = y - y0;
    let ex = (-0.5 * (dx / sx).powi(2) - 0.5 * (dy / sy).powi(2)).exp();
    let f = a * ex;
    (
        f + p[5],
        [
            ex,
            f * dx / (sx * sx),
            f * dy / (sy * sy),
            f * dx * dx / (sx * sx * sx),
            f * dy * dy / (sy * sy * sy),
            1.0,
        ],
    )
}

fn roi_data(frame: &CcdFrame, roi: &Roi) -> Vec<(f64, f64, f64)> {
    let mut data = Vec::with_capacity(roi.width * roi.height);
    for y in roi.y0..roi.y0 + roi.height {
        for x in roi.x0..roi.x0 + roi.width {
            data.push((x as f64, y as f64, frame.get(x, y) as f64));
        }
    }
    data
}

/// Moments-based initial parameter estimate: background from the ROI
/// median, centroid and second moments of the background-subtracted counts.
fn moments_init(data: &[(f64, f64, f64)]) -> [f64; 6] {
    let mut values: Vec<f64> = data.iter().map(|d| d.2).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = values[values.len() / 2];
    let peak = values[values.len() - 1];

    let mut m0 = 0.0;
    let mut mx = 0.0;
    let mut my = 0.0;
    for &(x, y, v) in data {
        let w = (v - median).max(0.0);
        m0 += w;
        mx += w * x;
        my += w * y;
    }
    let (cx, cy) = if m0 > 0.0 {
        (mx / m0, my / m0)
    } else {
        let n = data.len() as f64;
        (
            data.iter().map(|d| d.0).sum::<f64>() / n,
            data.iter().map(|d| d.1).sum::<f64>() / n,
        )
    };
    let mut vx = 0.0;
    let mut vy = 0.0;
    for &(x, y, v) in data {
        let w = (v - median).max(0.0);
        vx += w * (x - cx) * (x - cx);
        vy += w * (y - cy) * (y - cy);
    }
    let (sx, sy) = if m0 > 0.0 {
        ((vx / m0).sqrt().max(0.5), (vy / m0).sqrt().max(0.5))
    } else {
        (1.0, 1.0)
    };
    [(peak - median).max(1.0), cx, cy, sx, sy, median]
}

fn chi2(data: &[(f64, f64, f64)], p: &[f64; 6]) -> f64 {
    data.iter()
        .map(|&(x, y, v)| {
            let (f, _) = gaussian_model_and_jacobian(p, x, y);
            let w = 1.0 / v.max(1.0);
            w * (v - f) * (v - f)
        })
        .sum()
}

/// Weighted nonlinear least squares of an axis-aligned elliptical Gaussian
/// plus constant offset, by damped Gauss–Newton (Levenberg–Marquardt
/// adaptive damping) with the analytic Jacobian and Poisson-motivated
/// weights 1/max(counts, 1).
///
/// Non-convergence is reported through the `converged` flag, not an error;
/// the last iterate is returned.
pub fn fit_gaussian_2d(
    frame: &CcdFrame,
    roi: Roi,
    init: Option<[f64; 6]>,
) -> Result<GaussianFitResult> {
    if !roi.contains(frame) {
        return Err(Error::InvalidParameter(format!(
            "ROI {roi:?} does not fit inside the {}x{} frame",
            frame.width, frame.height
        )));
    }
    if roi.width * roi.height < 70 {
        return Err(Error::InvalidParameter(
            "ROI must contain at least 70 pixels (10x the parameter count)".into(),
        ));
    }
    let data = roi_data(frame, &roi);
    let first = data[0].2;
    if data.iter().all(|d| d.2 == first) {
        return Err(Error::FlatField);
    }

    let mut p = init.unwrap_or_else(|| moments_init(&data));
    let mut lambda = 1e-3;
    let mut current_chi2 = chi2(&data, &p);
    let mut converged = false;
    let max_iter = 300;
    let mut iterations = 0;

    for iter in 0..max_iter {
        iterations = iter + 1;
        // Accumulate the normal equations.
        let mut jtj = SMatrix::<f64, 6, 6>::zeros();
        let mut jtr = SVector::<f64, 6>::zeros();
        for &(x, y, v) in &data {
            let (f, jac) = gaussian_model_and_jacobian(&p, x, y);
            let w = 1.0 / v.max(1.0);
            let r = v - f;
            for i in 0..6 {
                jtr[i] += w * jac[i] * r;
                for j in 0..6 {
                    jtj[(i, j)] += w * jac[i] * jac[j];
                }
            }
        }

        let mut stepped = false;
        for _ in 0..60 {
            let mut damped = jtj;
            for i in 0..6 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(delta) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for i in 0..6 {
                trial[i] += delta[i];
            }
            // Keep widths positive.
            if trial[3] <= 0.0 || trial[4] <= 0.0 {
                lambda *= 10.0;
                continue;
            }
            let trial_chi2 = chi2(&data, &trial);
            if trial_chi2 <= current_chi2 {
                let rel_step = (0..6)
                    .map(|i| (delta[i] / p[i].abs().max(1e-12)).abs())
                    .fold(0.0f64, f64::max);
                p = trial;
                current_chi2 = trial_chi2;
                lambda = (lambda / 3.0).max(1e-14);
                stepped = true;
                if rel_step < 1e-10 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !stepped {
            // Damping exhausted: stationary at f64 resolution.
            converged = true;
            break;
        }
    }

    // Covariance from the undamped normal equations at the solution.
    let mut jtj = SMatrix::<f64, 6, 6>::zeros();
    for &(x, y, v) in &data {
        let (_, jac) = gaussian_model_and_jacobian(&p, x, y);
        let w = 1.0 / v.max(1.0);
        for i in 0..6 {
            for j in 0..6 {
                jtj[(i, j)] += w * jac[i] * jac[j];
            }
        }
    }
    let covariance = jtj
        .try_inverse()
        .map(|inv| {
            let mut c = [[0.0; 6]; 6];
            for i in 0..6 {
                for j in 0..6 {
                    c[i][j] = inv[(i, j)];
                }
            }
            c
        })
        .unwrap_or([[f64::NAN; 6]; 6]);

    let dof = (data.len() - 6) as f64;
    Ok(GaussianFitResult {
        amplitude: p[0],
        center: (p[1], p[2]),
        sigma: (p[3], p[4]),
        offset: p[5],
        covariance,
        reduced_chi2: current_chi2 / dof,
        converged,
        iterations,
    })
}

/// Converts a fitted spot width to the object plane:
/// FWHM_obj = 2√(2 ln 2) σ · pitch / M per axis, with the fit and
/// magnification uncertainties combined in quadrature.
pub fn object_plane_fwhm(
    fit: &GaussianFitResult,
    magnification: ValueWithUncertainty,
    pixel_pitch: f64,
) -> Result<(ValueWithUncertainty, ValueWithUncertainty)> {
    if !fit.converged {
        return Err(Error::FitNotConverged);
    }
    ensure_positive("pixel_pitch", pixel_pitch)?;
    ensure_positive("magnification", magnification.value)?;
    let (fx, fy) = fit.fwhm_px();
    let (ux, uy) = fit.fwhm_uncertainty_px();
    let rel_m = magnification.uncertainty / magnification.value;
    let convert = |fwhm_px: f64, unc_px: f64| {
        let value = fwhm_px * pixel_pitch / magnification.value;
        let rel_fit = if fwhm_px > 0.0 { unc_px / fwhm_px } else { 0.0 };
        ValueWithUncertainty {
            value,
            uncertainty: value * (rel_fit * rel_fit + rel_m * rel_m).sqrt(),
        }
    };
    Ok((convert(fx, ux), convert(fy, uy)))
}

/// 5x5 boxcar smoothing used only for spot detection.
fn smoothed(frame: &CcdFrame) -> Vec<f64> {
    let (w, h) = (frame.width, frame.height);
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            let mut n = 0.0;
            for dy in -2i64..=2 {
                for dx in -2i64..=2 {
                    let xx = x as i64 + dx;
                    let yy = y as i64 + dy;
                    if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                        sum += frame.get(xx as usize, yy as usize) as f64;
                        n += 1.0;
                    }
                }
            }
            out[y * w + x] = sum / n;
        }
    }
    out
}

/// Local maxima of the smoothed frame above a contrast threshold, largest
/// first, greedily thinned to a minimum mutual separation of 3 px.
fn detect_spots(frame: &CcdFrame) -> Vec<(usize, usize)> {
    let (w, h) = (frame.width, frame.height);
    let sm = smoothed(frame);
    let mut sorted: Vec<f64> = sm.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let peak = sorted[sorted.len() - 1];
    let threshold = median + 0.25 * (peak - median);

    let mut maxima = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let v = sm[y * w + x];
            if v < threshold {
                continue;
            }
            let mut is_max = true;
            'nbr: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let u = sm[(y as i64 + dy) as usize * w + (x as i64 + dx) as usize];
                    // Strict on the lexicographically earlier side breaks
                    // plateau ties deterministically.
                    if u > v || (u == v && (dy < 0 || (dy == 0 && dx < 0))) {
                        is_max = false;
                        break 'nbr;
                    }
                }
            }
            if is_max {
                maxima.push((x, y, v));
            }
        }
    }
    maxima.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    let mut picked: Vec<(usize, usize)> = Vec::new();
    for (x, y, _) in maxima {
        let far = picked.iter().all(|&(px, py)| {
            let dx = px as f64 - x as f64;
            let dy = py as f64 - y as f64;
            (dx * dx + dy * dy).sqrt() >= 3.0
        });
        if far {
            picked.push((x, y));
        }
    }
    picked
}

fn clamped_roi(frame: &CcdFrame, cx: usize, cy: usize, half: usize) -> Roi {
    let x0 = cx.saturating_sub(half);
    let y0 = cy.saturating_sub(half);
    let x1 = (cx + half + 1).min(frame.width);
    let y1 = (cy + half + 1).min(frame.height);
    Roi {
        x0,
        y0,
        width: x1 - x0,
        height: y1 - y0,
    }
}

/// Fits the single brightest spot in a frame (detection + Gaussian fit).
pub fn fit_single_spot(frame: &CcdFrame) -> Result<GaussianFitResult> {
    let spots = detect_spots(frame);
    let &(cx, cy) = spots
        .first()
        .ok_or_else(|| Error::InvalidParameter("no spot detected".into()))?;
    let fit = fit_gaussian_2d(frame, clamped_roi(frame, cx, cy, 24), None)?;
    if !fit.converged {
        return Err(Error::FitNotConverged);
    }
    Ok(fit)
}

/// Two-ion magnification calibration: fits both spots, converts the pixel
/// separation to a magnification through the Coulomb spacing predicted by
/// the trap frequency, and propagates fit and frequency uncertainties.
///
/// `axial_frequency_uncertainty` is the 1-sigma uncertainty on the measured
/// trap frequency (Hz).
pub fn calibrate_magnification(
    frame: &CcdFrame,
    trap: &TrapParams,
    axial_frequency_uncertainty: f64,
    ccd: &CcdModel,
) -> Result<CalibrationResult> {
    let spots = detect_spots(frame);
    if spots.len() != 2 {
        return Err(Error::SpotCount(spots.len()));
    }
    // Deterministic left-to-right ordering.
    let mut spots = spots;
    spots.sort_by_key(|&(x, _)| x);

    let sep_px_coarse = {
        let dx = spots[1].0 as f64 - spots[0].0 as f64;
        let dy = spots[1].1 as f64 - spots[0].1 as f64;
        (dx * dx + dy * dy).sqrt()
    };
    let half = ((sep_px_coarse / 2.5) as usize).clamp(8, 40);
    let fit_a = fit_gaussian_2d(frame, clamped_roi(frame, spots[0].0, spots[0].1, half), None)?;
    let fit_b = fit_gaussian_2d(frame, clamped_roi(frame, spots[1].0, spots[1].1, half), None)?;
    if !fit_a.converged || !fit_b.converged {
        return Err(Error::FitNotConverged);
    }

    let dx = fit_b.center.0 - fit_a.center.0;
    let dy = fit_b.center.1 - fit_a.center.1;
    let sep = (dx * dx + dy * dy).sqrt();
    let mean_fwhm = (fit_a.fwhm_px().0 + fit_b.fwhm_px().0) / 2.0;
    if sep < 2.0 * mean_fwhm {
        return Err(Error::Unresolvable {
            separation_px: sep,
            fwhm_px: mean_fwhm,
        });
    }
    let (uax, _) = fit_a.center_uncertainty_px();
    let (ubx, _) = fit_b.center_uncertainty_px();
    let (_, uay) = fit_a.center_uncertainty_px();
    let (_, uby) = fit_b.center_uncertainty_px();
    let sep_unc = (((dx / sep) * uax).powi(2)
        + ((dx / sep) * ubx).powi(2)
        + ((dy / sep) * uay).powi(2)
        + ((dy / sep) * uby).powi(2))
    .sqrt();

    let spacing = ion_spacing(trap)?;
    // l ∝ ν^(-2/3), so Δl/l = (2/3) Δν/ν.
    let rel_spacing = 2.0 / 3.0 * axial_frequency_uncertainty / trap.axial_frequency;

    let m = sep * ccd.pixel_pitch / spacing;
    let rel_m = ((sep_unc / sep).powi(2) + rel_spacing.powi(2)).sqrt();
    Ok(CalibrationResult {
        magnification: ValueWithUncertainty {
            value: m,
            uncertainty: m * rel_m,
        },
        pixel_separation: ValueWithUncertainty {
            value: sep,
            uncertainty: sep_unc,
        },
        predicted_spacing: spacing,
    })
}

/// Relative discrepancy between a known physical displacement and the
/// displacement inferred from the image centroid shift:
/// |Δcentroid · pitch / M − d| / d.
pub fn displacement_crosscheck(
    frame_a: &CcdFrame,
    frame_b: &CcdFrame,
    physical_displacement: f64,
    magnification: f64,
    ccd: &CcdModel,
) -> Result<f64> {
    if physical_displacement == 0.0 {
        return Err(Error::ZeroDisplacement);
    }
    ensure_positive("magnification", magnification)?;
    let fit_a = fit_single_spot(frame_a)?;
    let fit_b = fit_single_spot(frame_b)?;
    let dx = fit_b.center.0 - fit_a.center.0;
    let dy = fit_b.center.1 - fit_a.center.1;
    let measured = (dx * dx + dy * dy).sqrt() * ccd.pixel_pitch / magnification;
    Ok((measured - physical_displacement.abs()).abs() / physical_displacement.abs())
}
