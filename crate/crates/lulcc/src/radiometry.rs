//! Radiometric preprocessing for single-band DN rasters: scan-line gap
//! filling, dark-object subtraction, and DN -> radiance -> top-of-atmosphere
//! reflectance calibration.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::ContinuousGrid;

/// Per-band calibration constants.
///
/// The DN -> radiance conversion uses a denominator of 254, the span of the
/// usable 8-bit quantization range, so DN=0 maps to `l_min` and DN=254 maps
/// to `l_max` exactly.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BandCalibration {
    pub l_min: f64,
    pub l_max: f64,
    pub esun: f64,
    pub sun_zenith_deg: f64,
    pub earth_sun_distance_au: f64,
}

impl BandCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.l_max > self.l_min) {
            return Err(Error::InvalidCalibration(format!(
                "l_max ({}) must exceed l_min ({})",
                self.l_max, self.l_min
            )));
        }
        if !(self.esun > 0.0) {
            return Err(Error::InvalidCalibration(format!(
                "esun must be positive, got {}",
                self.esun
            )));
        }
        if !(0.0..90.0).contains(&self.sun_zenith_deg) {
            return Err(Error::InvalidCalibration(format!(
                "sun zenith must be in [0, 90), got {}",
                self.sun_zenith_deg
            )));
        }
        if !(self.earth_sun_distance_au > 0.0) {
            return Err(Error::InvalidCalibration(format!(
                "earth-sun distance must be positive, got {}",
                self.earth_sun_distance_au
            )));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cal: BandCalibration = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        cal.validate()?;
        Ok(cal)
    }
}

/// Fills nodata cells (scan-line gaps) with the mode of valid values in a
/// `window`x`window` neighborhood, repeating up to `max_passes` passes.
///
/// Within a pass every gap cell sees the previous pass's state, so fill
/// order does not matter. Mode ties break to the smallest value. Cells
/// whose window never gains a valid neighbor stay nodata.
pub fn slc_gap_fill(
    band: &ContinuousGrid,
    window: usize,
    max_passes: usize,
) -> Result<ContinuousGrid> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::EvenWindow(window));
    }
    let header = *band.header();
    let (nrows, ncols) = (header.nrows, header.ncols);
    let half = window / 2;
    let mut current = band.cells().to_vec();
    for _ in 0..max_passes {
        // gather gaps against the frozen previous state
        let prev = current.clone();
        let mut changed = false;
        let mut any_gap = false;
        for r in 0..nrows {
            for c in 0..ncols {
                let idx = r * ncols + c;
                if prev[idx] != header.nodata_value {
                    continue;
                }
                any_gap = true;
                let r0 = r.saturating_sub(half);
                let r1 = (r + half).min(nrows - 1);
                let c0 = c.saturating_sub(half);
                let c1 = (c + half).min(ncols - 1);
                let mut neighbors = Vec::new();
                for rr in r0..=r1 {
                    for cc in c0..=c1 {
                        let v = prev[rr * ncols + cc];
                        if v != header.nodata_value {
                            neighbors.push(v);
                        }
                    }
                }
                if let Some(m) = mode_smallest(&mut neighbors) {
                    current[idx] = m;
                    changed = true;
                }
            }
        }
        if !any_gap || !changed {
            break;
        }
    }
    ContinuousGrid::new(header, current)
}

/// Mode of the values, ties broken by the smallest value. Values compare
/// bit-for-bit (DN rasters hold exact small reals).
fn mode_smallest(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mut best = values[0];
    let mut best_run = 1usize;
    let mut run_val = values[0];
    let mut run = 1usize;
    for &v in &values[1..] {
        if v == run_val {
            run += 1;
        } else {
            run_val = v;
            run = 1;
        }
        if run > best_run {
            best_run = run;
            best = run_val;
        }
    }
    Some(best)
}

/// Subtracts a dark-object DN from every valid cell, clamping at zero.
pub fn dark_object_subtract(band: &ContinuousGrid, dark_dn: f64) -> Result<ContinuousGrid> {
    if !dark_dn.is_finite() {
        return Err(Error::InvalidCalibration(format!(
            "dark DN must be finite, got {dark_dn}"
        )));
    }
    let header = *band.header();
    let cells = band
        .cells()
        .iter()
        .map(|&v| {
            if v == header.nodata_value {
                v
            } else {
                (v - dark_dn).max(0.0)
            }
        })
        .collect();
    ContinuousGrid::new(header, cells)
}

/// Spectral radiance from a digital number:
/// `L = l_min + (l_max - l_min) / 254 * DN`.
pub fn dn_to_radiance(dn: f64, cal: &BandCalibration) -> Result<f64> {
    if !(0.0..=255.0).contains(&dn) {
        return Err(Error::DnOutOfRange(dn));
    }
    Ok(cal.l_min + (cal.l_max - cal.l_min) / 254.0 * dn)
}

/// Unitless planetary reflectance from radiance:
/// `rho = pi * L * d^2 / (ESUN * cos(theta_s))`.
pub fn toa_reflectance(radiance: f64, cal: &BandCalibration) -> Result<f64> {
    cal.validate()?;
    let cos_z = cal.sun_zenith_deg.to_radians().cos();
    let d = cal.earth_sun_distance_au;
    Ok(std::f64::consts::PI * radiance * d * d / (cal.esun * cos_z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridHeader;

    fn band(ncols: usize, nrows: usize, cells: Vec<f64>) -> ContinuousGrid {
        let h = GridHeader::new(ncols, nrows, 0.0, 0.0, 30.0, -9999.0).unwrap();
        ContinuousGrid::new(h, cells).unwrap()
    }

    fn cal(l_min: f64, l_max: f64, esun: f64, zen: f64, d: f64) -> BandCalibration {
        BandCalibration {
            l_min,
            l_max,
            esun,
            sun_zenith_deg: zen,
            earth_sun_distance_au: d,
        }
    }

    #[test]
    fn gap_fill_mode_by_hand() {
        // 2x2 with one gap; clipped 3x3 window sees {5,5,7} -> mode 5
        let g = band(2, 2, vec![5.0, 5.0, 7.0, -9999.0]);
        let filled = slc_gap_fill(&g, 3, 5).unwrap();
        assert_eq!(filled.get(1, 1), 5.0);
        // valid cells untouched
        assert_eq!(filled.get(0, 0), 5.0);
        assert_eq!(filled.get(1, 0), 7.0);
    }

    #[test]
    fn gap_fill_tie_breaks_to_smallest() {
        let g = band(2, 2, vec![5.0, 9.0, -9999.0, -9999.0]);
        let filled = slc_gap_fill(&g, 3, 5).unwrap();
        assert_eq!(filled.get(1, 0), 5.0);
        assert_eq!(filled.get(1, 1), 5.0);
    }

    #[test]
    fn gap_fill_identity_without_gaps() {
        let g = band(3, 1, vec![1.0, 2.0, 3.0]);
        let filled = slc_gap_fill(&g, 9, 5).unwrap();
        assert_eq!(filled, g);
    }

    #[test]
    fn gap_fill_unreachable_region_stays_nodata() {
        // 7-wide strip with a single valid cell at the left end; window 3,
        // one pass can only creep one cell.
        let g = band(
            7,
            1,
            vec![4.0, -9999.0, -9999.0, -9999.0, -9999.0, -9999.0, -9999.0],
        );
        let filled = slc_gap_fill(&g, 3, 1).unwrap();
        assert_eq!(filled.get(0, 1), 4.0);
        assert_eq!(filled.get(0, 2), -9999.0);
        assert_eq!(filled.get(0, 6), -9999.0);
        // more passes creep further
        let filled = slc_gap_fill(&g, 3, 5).unwrap();
        assert_eq!(filled.get(0, 5), 4.0);
        assert_eq!(filled.get(0, 6), -9999.0);
    }

    #[test]
    fn gap_fill_rejects_even_window() {
        let g = band(1, 1, vec![1.0]);
        assert!(matches!(slc_gap_fill(&g, 4, 1), Err(Error::EvenWindow(4))));
    }

    #[test]
    fn dark_subtract_cases() {
        let g = band(3, 1, vec![12.0, 5.0, -9999.0]);
        let out = dark_object_subtract(&g, 10.0).unwrap();
        assert_eq!(out.cells(), &[2.0, 0.0, -9999.0]);
        let same = dark_object_subtract(&g, 0.0).unwrap();
        assert_eq!(same, g);
    }

    #[test]
    fn radiance_formula_endpoints() {
        let c = cal(0.0, 10.0, 1000.0, 0.0, 1.0);
        assert_eq!(dn_to_radiance(0.0, &c).unwrap(), 0.0);
        assert_eq!(dn_to_radiance(254.0, &c).unwrap(), 10.0);
        let c = cal(0.0, 254.0, 1000.0, 0.0, 1.0);
        assert_eq!(dn_to_radiance(127.0, &c).unwrap(), 127.0);
        assert!(matches!(
            dn_to_radiance(256.0, &c),
            Err(Error::DnOutOfRange(_))
        ));
    }

    #[test]
    fn reflectance_identity_construction() {
        let l = 3.7;
        let c = cal(0.0, 10.0, std::f64::consts::PI * l, 0.0, 1.0);
        assert!((toa_reflectance(l, &c).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(toa_reflectance(0.0, &c).unwrap(), 0.0);
        let c60 = cal(0.0, 10.0, std::f64::consts::PI * l, 60.0, 1.0);
        assert!((toa_reflectance(l, &c60).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reflectance_increases_with_zenith() {
        let c = |z| cal(0.0, 10.0, 1000.0, z, 1.0);
        let mut prev = toa_reflectance(5.0, &c(0.0)).unwrap();
        for z in [10.0, 30.0, 60.0, 85.0, 89.9] {
            let r = toa_reflectance(5.0, &c(z)).unwrap();
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn calibration_validation() {
        assert!(cal(5.0, 1.0, 1000.0, 0.0, 1.0).validate().is_err());
        assert!(cal(0.0, 1.0, 0.0, 0.0, 1.0).validate().is_err());
        assert!(cal(0.0, 1.0, 1000.0, 90.0, 1.0).validate().is_err());
        assert!(cal(0.0, 1.0, 1000.0, 0.0, 0.0).validate().is_err());
        assert!(cal(0.0, 1.0, 1000.0, 0.0, 1.0).validate().is_ok());
    }
}
