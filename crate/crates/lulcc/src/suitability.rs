//! Spatial driver rasters and their diagnostic statistics: slope from a
//! DEM, the negative-power slope suitability transform, exact Euclidean
//! proximity, and Cramér's V association between a driver and a
//! categorical outcome.

use crate::error::{Error, Result};
use crate::grid::{CategoricalGrid, ClassCode, ContinuousGrid};

/// Slope magnitude (rise/run) from a 3x3 Horn stencil, linearly rescaled
/// to [0, 255] over the grid's observed range.
///
/// Border cells use clipped stencils: each row/column term spans only the
/// in-bounds (and valid) neighbors and divides by the actual span, so a
/// planar ramp produces one constant slope value everywhere. A constant
/// raw field rescales to all zeros.
pub fn slope_from_dem(dem: &ContinuousGrid) -> Result<ContinuousGrid> {
    let h = *dem.header();
    if h.nrows < 2 || h.ncols < 2 {
        return Err(Error::GridTooSmall {
            need: 2,
            nrows: h.nrows,
            ncols: h.ncols,
        });
    }
    let (nrows, ncols) = (h.nrows, h.ncols);
    let value = |r: usize, c: usize| dem.value(r, c);

    let mut raw = vec![h.nodata_value; nrows * ncols];
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for r in 0..nrows {
        for c in 0..ncols {
            if value(r, c).is_none() {
                continue;
            }
            // east-west gradient: one term per valid row of the window
            let ce = (c + 1).min(ncols - 1);
            let cw = c.saturating_sub(1);
            let span_x = (ce - cw) as f64 * h.cellsize;
            let mut gx = 0.0;
            let mut wx = 0.0;
            // north-south gradient: one term per valid column
            let rs = (r + 1).min(nrows - 1);
            let rn = r.saturating_sub(1);
            let span_y = (rs - rn) as f64 * h.cellsize;
            let mut gy = 0.0;
            let mut wy = 0.0;
            for (d, w) in [(-1i64, 1.0), (0, 2.0), (1, 1.0)] {
                let rr = r as i64 + d;
                if rr >= 0 && (rr as usize) < nrows && span_x > 0.0 {
                    if let (Some(e), Some(w_val)) =
                        (value(rr as usize, ce), value(rr as usize, cw))
                    {
                        gx += w * (e - w_val) / span_x;
                        wx += w;
                    }
                }
                let cc = c as i64 + d;
                if cc >= 0 && (cc as usize) < ncols && span_y > 0.0 {
                    if let (Some(s), Some(n)) =
                        (value(rs, cc as usize), value(rn, cc as usize))
                    {
                        gy += w * (s - n) / span_y;
                        wy += w;
                    }
                }
            }
            let dzdx = if wx > 0.0 { gx / wx } else { 0.0 };
            let dzdy = if wy > 0.0 { gy / wy } else { 0.0 };
            let s = (dzdx * dzdx + dzdy * dzdy).sqrt();
            raw[r * ncols + c] = s;
            min = min.min(s);
            max = max.max(s);
        }
    }
    if !min.is_finite() {
        // every cell nodata
        return ContinuousGrid::new(h, raw);
    }
    let span = max - min;
    let cells = raw
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if dem.cells()[i] == h.nodata_value {
                h.nodata_value
            } else if span == 0.0 {
                0.0
            } else {
                (v - min) / span * 255.0
            }
        })
        .collect();
    ContinuousGrid::new(h, cells)
}

/// Urbanization suitability from slope: `max(slope, 1)^(-0.1)`.
///
/// The power law is singular at zero, so slopes below 1 clamp to 1 and
/// map to the maximum suitability of 1. Output values lie in (0, 1].
pub fn slope_suitability(slope: &ContinuousGrid) -> Result<ContinuousGrid> {
    let h = *slope.header();
    let mut cells = Vec::with_capacity(slope.cells().len());
    for &v in slope.cells() {
        if v == h.nodata_value {
            cells.push(v);
            continue;
        }
        if v < 0.0 {
            return Err(Error::NegativeSlope(v));
        }
        cells.push(v.max(1.0).powf(-0.1));
    }
    ContinuousGrid::new(h, cells)
}

const FAR: f64 = 1e20;

/// One-dimensional squared-distance transform (lower envelope of
/// parabolas).
fn dt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -FAR;
    z[1] = FAR;
    let sep = |p: usize, q: usize| -> f64 {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2 * q - 2 * p) as f64
    };
    for q in 1..n {
        let mut s = sep(v[k], q);
        while s <= z[k] {
            k -= 1;
            s = sep(v[k], q);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = FAR;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        d[q] = dq * dq + f[v[k]];
    }
}

/// Exact Euclidean distance (cell-center to nearest target cell-center,
/// times cellsize) to the nearest cell carrying `target_code`.
pub fn proximity_transform(
    target_mask: &CategoricalGrid,
    target_code: ClassCode,
) -> Result<ContinuousGrid> {
    let h = *target_mask.header();
    let (nrows, ncols) = (h.nrows, h.ncols);
    let mut f: Vec<f64> = target_mask
        .cells()
        .iter()
        .map(|&c| if c == target_code { 0.0 } else { FAR })
        .collect();
    if !f.iter().any(|&v| v == 0.0) {
        return Err(Error::NoTargetCells(target_code));
    }
    // columns first, then rows, on squared distances
    let mut col_buf = vec![0.0; nrows];
    let mut out_buf = vec![0.0; nrows];
    for c in 0..ncols {
        for r in 0..nrows {
            col_buf[r] = f[r * ncols + c];
        }
        dt_1d(&col_buf, &mut out_buf);
        for r in 0..nrows {
            f[r * ncols + c] = out_buf[r];
        }
    }
    let mut row_out = vec![0.0; ncols];
    let mut cells = vec![0.0; nrows * ncols];
    for r in 0..nrows {
        dt_1d(&f[r * ncols..(r + 1) * ncols], &mut row_out);
        for c in 0..ncols {
            cells[r * ncols + c] = row_out[c].sqrt() * h.cellsize;
        }
    }
    ContinuousGrid::new(h, cells)
}

/// Cramér's V between a binned continuous driver and a categorical
/// outcome, over unmasked cells valid in both grids.
///
/// The driver is split into `bins` equal-width bins over its observed
/// range; empty bins and outcome categories do not contribute to the
/// degrees of freedom. Returns 0 when the table degenerates to a single
/// row or column (including the all-equal-driver case).
pub fn cramers_v(
    driver: &ContinuousGrid,
    outcome: &CategoricalGrid,
    bins: usize,
    mask: Option<&CategoricalGrid>,
) -> Result<f64> {
    if bins == 0 {
        return Err(Error::InvalidGrid("bins must be positive".to_string()));
    }
    driver.header().ensure_aligned(outcome.header())?;
    if let Some(m) = mask {
        driver.header().ensure_aligned(m.header())?;
    }
    let mut pairs: Vec<(f64, ClassCode)> = Vec::new();
    for idx in 0..driver.cells().len() {
        if mask.is_some_and(|m| m.masks_out(idx)) {
            continue;
        }
        let v = driver.cells()[idx];
        if driver.is_nodata(v) {
            continue;
        }
        let code = outcome.cells()[idx];
        if outcome.is_nodata(code) || code == 0 {
            continue;
        }
        pairs.push((v, code));
    }
    let mut codes: Vec<ClassCode> = pairs.iter().map(|&(_, c)| c).collect();
    codes.sort_unstable();
    codes.dedup();
    if codes.len() < 2 {
        return Err(Error::TooFewCategories);
    }
    let min = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(0.0);
    }
    let width = (max - min) / bins as f64;
    let mut counts = vec![vec![0u64; codes.len()]; bins];
    for (v, code) in pairs {
        let b = (((v - min) / width) as usize).min(bins - 1);
        let j = codes.binary_search(&code).unwrap();
        counts[b][j] += 1;
    }
    let filled: Vec<&Vec<u64>> = counts
        .iter()
        .filter(|row| row.iter().any(|&c| c > 0))
        .collect();
    let r = filled.len();
    let c = codes.len();
    if r.min(c) < 2 {
        return Ok(0.0);
    }
    let n: u64 = filled.iter().flat_map(|row| row.iter()).sum();
    let row_tot: Vec<u64> = filled.iter().map(|row| row.iter().sum()).collect();
    let mut col_tot = vec![0u64; c];
    for row in &filled {
        for (j, &v) in row.iter().enumerate() {
            col_tot[j] += v;
        }
    }
    let mut chi2 = 0.0;
    for (i, row) in filled.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expect = row_tot[i] as f64 * col_tot[j] as f64 / n as f64;
            if expect > 0.0 {
                let diff = obs as f64 - expect;
                chi2 += diff * diff / expect;
            }
        }
    }
    let v = (chi2 / (n as f64 * (r.min(c) as f64 - 1.0))).sqrt();
    Ok(v.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{canonical_legend, CategoricalGrid, GridHeader};

    fn header(ncols: usize, nrows: usize) -> GridHeader {
        GridHeader::new(ncols, nrows, 0.0, 0.0, 30.0, -9999.0).unwrap()
    }

    fn cont(ncols: usize, nrows: usize, cells: Vec<f64>) -> ContinuousGrid {
        ContinuousGrid::new(header(ncols, nrows), cells).unwrap()
    }

    fn cont1(ncols: usize, nrows: usize, cells: Vec<f64>) -> ContinuousGrid {
        let h = GridHeader::new(ncols, nrows, 0.0, 0.0, 1.0, -9999.0).unwrap();
        ContinuousGrid::new(h, cells).unwrap()
    }

    #[test]
    fn slope_flat_dem_is_zero() {
        let dem = cont(4, 3, vec![7.0; 12]);
        let s = slope_from_dem(&dem).unwrap();
        assert!(s.cells().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn slope_planar_ramp_rescales_to_zero() {
        // z = x: clipped one-sided differences recover the exact gradient
        // at the borders too, so the raw field is constant
        let cells: Vec<f64> = (0..4)
            .flat_map(|_| (0..5).map(|c| c as f64 * 2.5))
            .collect();
        let dem = cont1(5, 4, cells);
        let s = slope_from_dem(&dem).unwrap();
        assert!(s.cells().iter().all(|&v| v == 0.0), "{:?}", s.cells());
    }

    #[test]
    fn slope_corner_peak_hand_values() {
        // 3x3 with one raised corner, cellsize 1; hand-evaluated stencil
        let dem = cont1(3, 3, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 9.0]);
        let s = slope_from_dem(&dem).unwrap();
        assert!((s.get(2, 2) - 255.0).abs() < 1e-9);
        assert!((s.get(1, 1) - 47.8125).abs() < 1e-9);
        let expect_edge = 255.0 * (15.0 / 4.0) / (6.0 * 2f64.sqrt());
        assert!((s.get(2, 1) - expect_edge).abs() < 1e-9);
        assert!((s.get(1, 2) - expect_edge).abs() < 1e-9);
        assert_eq!(s.get(0, 0), 0.0);
        assert_eq!(s.get(0, 2), 0.0);
        assert_eq!(s.get(2, 0), 0.0);
    }

    #[test]
    fn slope_rejects_tiny_grid() {
        let dem = cont(1, 3, vec![0.0, 1.0, 2.0]);
        assert!(matches!(
            slope_from_dem(&dem),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn suitability_fixture_values() {
        let slope = cont(4, 1, vec![1.0, 32.0, 0.0, 255.0]);
        let s = slope_suitability(&slope).unwrap();
        assert_eq!(s.get(0, 0), 1.0);
        assert!((s.get(0, 1) - 0.7071067811865476).abs() < 1e-12);
        assert_eq!(s.get(0, 2), 1.0);
        assert!(s.get(0, 3) > 0.0 && s.get(0, 3) < 1.0);
        let bad = cont(1, 1, vec![-3.0]);
        assert!(matches!(
            slope_suitability(&bad),
            Err(Error::NegativeSlope(_))
        ));
    }

    #[test]
    fn suitability_monotone_decreasing() {
        let slope = cont(5, 1, vec![1.0, 2.0, 10.0, 100.0, 255.0]);
        let s = slope_suitability(&slope).unwrap();
        for w in s.cells().windows(2) {
            assert!(w[1] < w[0]);
            assert!(w[1] > 0.0 && w[1] <= 1.0);
        }
    }

    fn mask_grid(ncols: usize, nrows: usize, cells: Vec<i32>) -> CategoricalGrid {
        CategoricalGrid::new(header(ncols, nrows), cells, canonical_legend()).unwrap()
    }

    #[test]
    fn proximity_hand_distances() {
        let m = mask_grid(3, 3, vec![0, 0, 0, 0, 1, 0, 0, 0, 0]);
        let d = proximity_transform(&m, 1).unwrap();
        assert_eq!(d.get(1, 1), 0.0);
        assert_eq!(d.get(0, 1), 30.0);
        assert_eq!(d.get(1, 0), 30.0);
        assert!((d.get(0, 0) - 30.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!((d.get(2, 2) - 30.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn proximity_matches_brute_force() {
        // deterministic scattered targets on a 9x7 grid
        let (ncols, nrows) = (9usize, 7usize);
        let mut cells = vec![0i32; ncols * nrows];
        for (r, c) in [(0, 3), (5, 1), (6, 8), (2, 6)] {
            cells[r * ncols + c] = 1;
        }
        let m = mask_grid(ncols, nrows, cells.clone());
        let d = proximity_transform(&m, 1).unwrap();
        for r in 0..nrows {
            for c in 0..ncols {
                let mut best = f64::INFINITY;
                for tr in 0..nrows {
                    for tc in 0..ncols {
                        if cells[tr * ncols + tc] == 1 {
                            let dr = r as f64 - tr as f64;
                            let dc = c as f64 - tc as f64;
                            best = best.min((dr * dr + dc * dc).sqrt());
                        }
                    }
                }
                assert!(
                    (d.get(r, c) - best * 30.0).abs() < 1e-9,
                    "({r},{c}): {} vs {}",
                    d.get(r, c),
                    best * 30.0
                );
            }
        }
    }

    #[test]
    fn proximity_triangle_consistency() {
        let m = mask_grid(4, 4, vec![1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2]);
        let d = proximity_transform(&m, 2).unwrap();
        let step = 30.0 * 2f64.sqrt();
        for r in 0..4usize {
            for c in 0..4usize {
                for (dr, dc) in [(0i64, 1i64), (1, 0), (1, 1), (1, -1)] {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nr >= 4 || nc < 0 || nc >= 4 {
                        continue;
                    }
                    let a = d.get(r, c);
                    let b = d.get(nr as usize, nc as usize);
                    assert!(a <= b + step + 1e-9);
                    assert!(b <= a + step + 1e-9);
                }
            }
        }
    }

    #[test]
    fn proximity_requires_targets() {
        let m = mask_grid(2, 2, vec![0, 0, 0, 0]);
        assert!(matches!(
            proximity_transform(&m, 1),
            Err(Error::NoTargetCells(1))
        ));
    }

    /// Builds aligned driver/outcome grids realizing the given 2x2 table:
    /// rows = driver level (0.0 / 1.0), columns = outcome code (1 / 2).
    fn grids_for_table(t: [[u64; 2]; 2]) -> (ContinuousGrid, CategoricalGrid) {
        let mut driver = Vec::new();
        let mut outcome = Vec::new();
        for (level, row) in t.iter().enumerate() {
            for (code, &count) in row.iter().enumerate() {
                for _ in 0..count {
                    driver.push(level as f64);
                    outcome.push(code as i32 + 1);
                }
            }
        }
        let n = driver.len();
        let h = GridHeader::new(n, 1, 0.0, 0.0, 30.0, -9999.0).unwrap();
        (
            ContinuousGrid::new(h, driver).unwrap(),
            CategoricalGrid::new(h, outcome, canonical_legend()).unwrap(),
        )
    }

    #[test]
    fn cramers_v_fixtures() {
        let (d, o) = grids_for_table([[10, 0], [0, 10]]);
        assert!((cramers_v(&d, &o, 2, None).unwrap() - 1.0).abs() < 1e-12);
        let (d, o) = grids_for_table([[5, 5], [5, 5]]);
        assert!(cramers_v(&d, &o, 2, None).unwrap().abs() < 1e-12);
        let (d, o) = grids_for_table([[30, 10], [10, 30]]);
        assert!((cramers_v(&d, &o, 2, None).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cramers_v_degenerate_cases() {
        // constant driver -> 0 by convention
        let h = header(4, 1);
        let d = ContinuousGrid::new(h, vec![2.0; 4]).unwrap();
        let o = CategoricalGrid::new(h, vec![1, 1, 2, 2], canonical_legend()).unwrap();
        assert_eq!(cramers_v(&d, &o, 10, None).unwrap(), 0.0);
        // single outcome category -> error
        let o1 = CategoricalGrid::new(h, vec![1, 1, 1, 1], canonical_legend()).unwrap();
        let dv = ContinuousGrid::new(h, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            cramers_v(&dv, &o1, 10, None),
            Err(Error::TooFewCategories)
        ));
    }

    #[test]
    fn cramers_v_affine_invariant() {
        let (d, o) = grids_for_table([[25, 9], [14, 32]]);
        let v0 = cramers_v(&d, &o, 2, None).unwrap();
        let h = *d.header();
        let scaled = ContinuousGrid::new(
            h,
            d.cells().iter().map(|&x| 3.5 * x - 11.0).collect(),
        )
        .unwrap();
        let v1 = cramers_v(&scaled, &o, 2, None).unwrap();
        assert!((v0 - v1).abs() < 1e-12);
    }
}
