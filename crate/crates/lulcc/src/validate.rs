//! Prediction quality assessment: confusion matrices, per-class precision
//! and recall, urban blob analysis, and a color overlay image.

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{CategoricalGrid, ClassCode};

/// Rows are actual classes, columns predicted.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ClassCode>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn overall_accuracy(&self) -> f64 {
        let diag: u64 = (0..self.classes.len()).map(|i| self.counts[i][i]).sum();
        diag as f64 / self.total() as f64
    }
}

pub fn confusion_matrix(
    actual: &CategoricalGrid,
    predicted: &CategoricalGrid,
    classes: &[ClassCode],
    mask: Option<&CategoricalGrid>,
) -> Result<ConfusionMatrix> {
    if classes.is_empty() {
        return Err(Error::EmptyClassList);
    }
    actual.header().ensure_aligned(predicted.header())?;
    if let Some(m) = mask {
        actual.header().ensure_aligned(m.header())?;
    }
    let n = classes.len();
    let ncols = actual.header().ncols;
    let mut counts = vec![vec![0u64; n]; n];
    let mut total = 0u64;
    for idx in 0..actual.cells().len() {
        if mask.is_some_and(|m| m.masks_out(idx)) {
            continue;
        }
        let a = actual.cells()[idx];
        let p = predicted.cells()[idx];
        if actual.is_nodata(a) || predicted.is_nodata(p) || a == 0 || p == 0 {
            continue;
        }
        let locate = |code: ClassCode| -> Result<usize> {
            classes
                .iter()
                .position(|&k| k == code)
                .ok_or(Error::UnexpectedClass {
                    code,
                    row: idx / ncols,
                    col: idx % ncols,
                })
        };
        counts[locate(a)?][locate(p)?] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::NoCountableCells);
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
    })
}

/// Per-class precision and recall; `None` marks the undefined 0/0 case,
/// which is distinct from a true zero.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassScore {
    pub class: ClassCode,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn precision_recall(cm: &ConfusionMatrix) -> Vec<ClassScore> {
    let n = cm.classes.len();
    (0..n)
        .map(|k| {
            let predicted: u64 = (0..n).map(|i| cm.counts[i][k]).sum();
            let actual: u64 = cm.counts[k].iter().sum();
            let hit = cm.counts[k][k];
            ClassScore {
                class: cm.classes[k],
                precision: (predicted > 0).then(|| hit as f64 / predicted as f64),
                recall: (actual > 0).then(|| hit as f64 / actual as f64),
            }
        })
        .collect()
}

/// Blob statistics for one pixel category.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct BlobStats {
    pub blob_count: usize,
    pub total_area: u64,
    pub mean_area: f64,
    pub largest_area: u64,
}

/// Urban/non-urban comparison: true-positive, false-positive and
/// false-negative blobs under 8-connectivity.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlobReport {
    pub true_positive: BlobStats,
    pub false_positive: BlobStats,
    pub false_negative: BlobStats,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PixelCat {
    Outside,
    Tp,
    Fp,
    Fn,
}

fn categorize(
    actual: &CategoricalGrid,
    predicted: &CategoricalGrid,
    urban_code: ClassCode,
    mask: Option<&CategoricalGrid>,
) -> Result<Vec<PixelCat>> {
    actual.header().ensure_aligned(predicted.header())?;
    if let Some(m) = mask {
        actual.header().ensure_aligned(m.header())?;
    }
    let mut cats = vec![PixelCat::Outside; actual.cells().len()];
    for idx in 0..actual.cells().len() {
        if mask.is_some_and(|m| m.masks_out(idx)) {
            continue;
        }
        let a = actual.cells()[idx];
        let p = predicted.cells()[idx];
        if actual.is_nodata(a) || predicted.is_nodata(p) {
            continue;
        }
        let au = a == urban_code;
        let pu = p == urban_code;
        cats[idx] = match (au, pu) {
            (true, true) => PixelCat::Tp,
            (false, true) => PixelCat::Fp,
            (true, false) => PixelCat::Fn,
            (false, false) => PixelCat::Outside,
        };
    }
    Ok(cats)
}

/// 8-connected component areas among cells matching `cat`.
fn component_areas(cats: &[PixelCat], cat: PixelCat, nrows: usize, ncols: usize) -> Vec<u64> {
    let mut visited = vec![false; cats.len()];
    let mut areas = Vec::new();
    let mut stack = Vec::new();
    for start in 0..cats.len() {
        if visited[start] || cats[start] != cat {
            continue;
        }
        let mut area = 0u64;
        stack.push(start);
        visited[start] = true;
        while let Some(idx) = stack.pop() {
            area += 1;
            let (r, c) = (idx / ncols, idx % ncols);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= nrows as i64 || nc >= ncols as i64 {
                        continue;
                    }
                    let nidx = nr as usize * ncols + nc as usize;
                    if !visited[nidx] && cats[nidx] == cat {
                        visited[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
        areas.push(area);
    }
    areas
}

fn stats_from_areas(areas: &[u64]) -> BlobStats {
    let total: u64 = areas.iter().sum();
    BlobStats {
        blob_count: areas.len(),
        total_area: total,
        mean_area: if areas.is_empty() {
            0.0
        } else {
            total as f64 / areas.len() as f64
        },
        largest_area: areas.iter().copied().max().unwrap_or(0),
    }
}

/// Per-pixel TP/FP/FN categorization of the urban class followed by
/// 8-connected component labeling within each category.
pub fn blob_analysis(
    actual: &CategoricalGrid,
    predicted: &CategoricalGrid,
    urban_code: ClassCode,
    mask: Option<&CategoricalGrid>,
) -> Result<BlobReport> {
    let cats = categorize(actual, predicted, urban_code, mask)?;
    let (nrows, ncols) = (actual.header().nrows, actual.header().ncols);
    Ok(BlobReport {
        true_positive: stats_from_areas(&component_areas(&cats, PixelCat::Tp, nrows, ncols)),
        false_positive: stats_from_areas(&component_areas(&cats, PixelCat::Fp, nrows, ncols)),
        false_negative: stats_from_areas(&component_areas(&cats, PixelCat::Fn, nrows, ncols)),
    })
}

/// Writes a binary PPM (P6) overlay, one pixel per cell: green TP, red FP,
/// blue FN, white true-negative, black masked or nodata.
pub fn render_overlay(
    actual: &CategoricalGrid,
    predicted: &CategoricalGrid,
    urban_code: ClassCode,
    mask: Option<&CategoricalGrid>,
    path: &Path,
) -> Result<()> {
    let cats = categorize(actual, predicted, urban_code, mask)?;
    let (nrows, ncols) = (actual.header().nrows, actual.header().ncols);
    let mut data = Vec::with_capacity(nrows * ncols * 3 + 32);
    write!(data, "P6\n{ncols} {nrows}\n255\n").expect("in-memory write");
    for idx in 0..cats.len() {
        let a = actual.cells()[idx];
        let p = predicted.cells()[idx];
        let blanked = mask.is_some_and(|m| m.masks_out(idx))
            || actual.is_nodata(a)
            || predicted.is_nodata(p);
        let rgb: [u8; 3] = if blanked {
            [0, 0, 0]
        } else {
            match cats[idx] {
                PixelCat::Tp => [0, 255, 0],
                PixelCat::Fp => [255, 0, 0],
                PixelCat::Fn => [0, 0, 255],
                PixelCat::Outside => [255, 255, 255],
            }
        };
        data.extend_from_slice(&rgb);
    }
    std::fs::write(path, data).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Everything the validation step reports, serialized as one JSON file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ValidationReport {
    pub classes: Vec<ClassCode>,
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassScore>,
    pub overall_accuracy: f64,
    pub blob: BlobReport,
    /// Cramér's V per driver name, when drivers were supplied.
    pub cramers_v: std::collections::BTreeMap<String, f64>,
}

pub fn build_report(
    cm: &ConfusionMatrix,
    blob: BlobReport,
    cramers_v: std::collections::BTreeMap<String, f64>,
) -> ValidationReport {
    ValidationReport {
        classes: cm.classes.clone(),
        confusion: cm.counts.clone(),
        per_class: precision_recall(cm),
        overall_accuracy: cm.overall_accuracy(),
        blob,
        cramers_v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{canonical_legend, GridHeader};

    fn cat(ncols: usize, nrows: usize, cells: Vec<i32>) -> CategoricalGrid {
        let h = GridHeader::new(ncols, nrows, 0.0, 0.0, 30.0, -9999.0).unwrap();
        CategoricalGrid::new(h, cells, canonical_legend()).unwrap()
    }

    #[test]
    fn confusion_perfect_prediction() {
        let g = cat(2, 2, vec![1, 1, 2, 3]);
        let cm = confusion_matrix(&g, &g, &[1, 2, 3], None).unwrap();
        assert_eq!(cm.counts[0], vec![2, 0, 0]);
        assert_eq!(cm.counts[1], vec![0, 1, 0]);
        assert_eq!(cm.counts[2], vec![0, 0, 1]);
        assert_eq!(cm.total(), 4);
        assert_eq!(cm.overall_accuracy(), 1.0);
    }

    #[test]
    fn confusion_swapped_pair() {
        let a = cat(2, 1, vec![1, 2]);
        let p = cat(2, 1, vec![2, 1]);
        let cm = confusion_matrix(&a, &p, &[1, 2], None).unwrap();
        assert_eq!(cm.counts, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn confusion_empty_region_errors() {
        let a = cat(2, 1, vec![-9999, -9999]);
        assert!(matches!(
            confusion_matrix(&a, &a, &[1, 2], None),
            Err(Error::NoCountableCells)
        ));
    }

    #[test]
    fn precision_recall_hand_values() {
        let cm = ConfusionMatrix {
            classes: vec![1, 2],
            counts: vec![vec![2, 1], vec![1, 2]],
        };
        let pr = precision_recall(&cm);
        for s in &pr {
            assert!((s.precision.unwrap() - 2.0 / 3.0).abs() < 1e-12);
            assert!((s.recall.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn precision_undefined_when_never_predicted() {
        let cm = ConfusionMatrix {
            classes: vec![1, 2],
            counts: vec![vec![3, 0], vec![2, 0]],
        };
        let pr = precision_recall(&cm);
        assert_eq!(pr[1].precision, None);
        assert_eq!(pr[1].recall, Some(0.0));
    }

    #[test]
    fn precision_recall_is_permutation_equivariant() {
        let cm = ConfusionMatrix {
            classes: vec![1, 2, 3],
            counts: vec![vec![5, 2, 1], vec![0, 7, 3], vec![2, 2, 9]],
        };
        let pr = precision_recall(&cm);
        // permute classes (3, 1, 2)
        let perm = [2usize, 0, 1];
        let pcm = ConfusionMatrix {
            classes: perm.iter().map(|&i| cm.classes[i]).collect(),
            counts: perm
                .iter()
                .map(|&i| perm.iter().map(|&j| cm.counts[i][j]).collect())
                .collect(),
        };
        let ppr = precision_recall(&pcm);
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(ppr[k].precision, pr[i].precision);
            assert_eq!(ppr[k].recall, pr[i].recall);
        }
    }

    #[test]
    fn blob_single_patch() {
        let a = cat(3, 3, vec![1, 2, 2, 1, 2, 2, 1, 1, 1]);
        let r = blob_analysis(&a, &a, 2, None).unwrap();
        assert_eq!(r.true_positive.blob_count, 1);
        assert_eq!(r.true_positive.total_area, 4);
        assert_eq!(r.true_positive.largest_area, 4);
        assert_eq!(r.false_positive.blob_count, 0);
        assert_eq!(r.false_negative.blob_count, 0);
    }

    #[test]
    fn blob_no_urban_anywhere() {
        let a = cat(2, 2, vec![1, 1, 3, 3]);
        let r = blob_analysis(&a, &a, 2, None).unwrap();
        assert_eq!(r.true_positive.blob_count, 0);
        assert_eq!(r.false_positive.total_area, 0);
        assert_eq!(r.false_negative.total_area, 0);
    }

    #[test]
    fn blob_diagonal_cells_join_under_8_connectivity() {
        let a = cat(2, 2, vec![1, 1, 1, 1]);
        let p = cat(2, 2, vec![2, 1, 1, 2]);
        let r = blob_analysis(&a, &p, 2, None).unwrap();
        assert_eq!(r.false_positive.blob_count, 1);
        assert_eq!(r.false_positive.total_area, 2);
    }

    #[test]
    fn blob_area_identities() {
        let a = cat(3, 2, vec![2, 2, 1, 1, 2, 3]);
        let p = cat(3, 2, vec![2, 1, 2, 1, 2, 2]);
        let r = blob_analysis(&a, &p, 2, None).unwrap();
        let predicted_urban = p.cells().iter().filter(|&&c| c == 2).count() as u64;
        let actual_urban = a.cells().iter().filter(|&&c| c == 2).count() as u64;
        assert_eq!(
            r.true_positive.total_area + r.false_positive.total_area,
            predicted_urban
        );
        assert_eq!(
            r.true_positive.total_area + r.false_negative.total_area,
            actual_urban
        );
    }

    #[test]
    fn overlay_pixel_colors() {
        let dir = tempfile::tempdir().unwrap();
        let check = |a: i32, p: i32, masked: bool, rgb: [u8; 3]| {
            let ag = cat(1, 1, vec![a]);
            let pg = cat(1, 1, vec![p]);
            let mg = cat(1, 1, vec![if masked { 1 } else { 0 }]);
            let path = dir.path().join("o.ppm");
            render_overlay(&ag, &pg, 2, Some(&mg), &path).unwrap();
            let data = std::fs::read(&path).unwrap();
            assert_eq!(&data[..9], b"P6\n1 1\n25");
            assert_eq!(&data[data.len() - 3..], &rgb);
        };
        check(2, 2, false, [0, 255, 0]);
        check(1, 2, false, [255, 0, 0]);
        check(2, 1, false, [0, 0, 255]);
        check(1, 1, false, [255, 255, 255]);
        check(2, 2, true, [0, 0, 0]);
    }
}
