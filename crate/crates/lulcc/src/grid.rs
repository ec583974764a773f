//! Raster data model and ASCII grid I/O.
//!
//! Grids are row-major, top row first (north-up). Two grids are *aligned*
//! when all six header fields are equal; every multi-grid operation guards
//! on alignment before touching cells.
//!
//! Class code conventions: codes are small positive integers; the canonical
//! legend is 1=vegetation, 2=impervious, 3=soil, 4=water. Code 0 is
//! reserved as a background marker (used by mask grids for "not masked")
//! and is never a valid class. A mask grid excludes a cell when its value
//! there is non-zero and not nodata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub type ClassCode = i32;

/// Builds the canonical four-class legend.
pub fn canonical_legend() -> BTreeMap<ClassCode, String> {
    [
        (1, "vegetation"),
        (2, "impervious"),
        (3, "soil"),
        (4, "water"),
    ]
    .into_iter()
    .map(|(c, n)| (c, n.to_string()))
    .collect()
}

/// Georeferencing metadata shared by categorical and continuous grids.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridHeader {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata_value: f64,
}

impl GridHeader {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        nodata_value: f64,
    ) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::MalformedHeader(format!(
                "ncols/nrows must be >= 1, got {ncols}x{nrows}"
            )));
        }
        if !(cellsize > 0.0) || !cellsize.is_finite() {
            return Err(Error::MalformedHeader(format!(
                "cellsize must be a positive real, got {cellsize}"
            )));
        }
        if !nodata_value.is_finite()
            || !xllcorner.is_finite()
            || !yllcorner.is_finite()
        {
            return Err(Error::MalformedHeader(
                "corner and nodata values must be finite".to_string(),
            ));
        }
        Ok(Self {
            ncols,
            nrows,
            xllcorner,
            yllcorner,
            cellsize,
            nodata_value,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.ncols * self.nrows
    }

    /// Name of the first differing header field, if any.
    fn mismatch(&self, other: &GridHeader) -> Option<&'static str> {
        if self.ncols != other.ncols {
            Some("ncols")
        } else if self.nrows != other.nrows {
            Some("nrows")
        } else if self.xllcorner != other.xllcorner {
            Some("xllcorner")
        } else if self.yllcorner != other.yllcorner {
            Some("yllcorner")
        } else if self.cellsize != other.cellsize {
            Some("cellsize")
        } else if self.nodata_value != other.nodata_value {
            Some("nodata_value")
        } else {
            None
        }
    }

    pub fn ensure_aligned(&self, other: &GridHeader) -> Result<()> {
        match self.mismatch(other) {
            None => Ok(()),
            Some(field) => Err(Error::Unaligned { field }),
        }
    }
}

/// Checks that every header equals the first; reports the first differing
/// field by name.
pub fn validate_alignment(headers: &[&GridHeader]) -> Result<()> {
    if let Some((first, rest)) = headers.split_first() {
        for h in rest {
            first.ensure_aligned(h)?;
        }
    }
    Ok(())
}

/// Classified raster with integer class codes and a code -> name legend.
///
/// Immutable after construction. Nodata cells hold the header's nodata
/// value (required to be an integral real for categorical grids); code 0
/// cells are background and, like nodata, exempt from the legend.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalGrid {
    header: GridHeader,
    cells: Vec<ClassCode>,
    legend: BTreeMap<ClassCode, String>,
}

impl CategoricalGrid {
    pub fn new(
        header: GridHeader,
        cells: Vec<ClassCode>,
        legend: BTreeMap<ClassCode, String>,
    ) -> Result<Self> {
        if cells.len() != header.cell_count() {
            return Err(Error::CellCountMismatch {
                expected: header.cell_count(),
                found: cells.len(),
            });
        }
        let nodata = categorical_nodata(&header)?;
        if legend.contains_key(&0) {
            return Err(Error::InvalidGrid(
                "legend must not contain reserved code 0".to_string(),
            ));
        }
        for (&code, _) in &legend {
            if code < 0 {
                return Err(Error::InvalidGrid(format!(
                    "legend code {code} is negative"
                )));
            }
        }
        for &c in &cells {
            if c == nodata || c == 0 {
                continue;
            }
            if c < 0 {
                return Err(Error::InvalidGrid(format!(
                    "negative class code {c} (not the nodata value)"
                )));
            }
            if !legend.contains_key(&c) {
                return Err(Error::InvalidGrid(format!(
                    "cell code {c} missing from legend"
                )));
            }
        }
        Ok(Self {
            header,
            cells,
            legend,
        })
    }

    pub fn header(&self) -> &GridHeader {
        &self.header
    }

    pub fn cells(&self) -> &[ClassCode] {
        &self.cells
    }

    pub fn legend(&self) -> &BTreeMap<ClassCode, String> {
        &self.legend
    }

    pub fn nodata_code(&self) -> ClassCode {
        self.header.nodata_value as ClassCode
    }

    pub fn is_nodata(&self, code: ClassCode) -> bool {
        code == self.nodata_code()
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.header.ncols + col
    }

    pub fn get(&self, row: usize, col: usize) -> ClassCode {
        self.cells[self.index(row, col)]
    }

    /// Mask semantics: a cell is excluded when its value is non-zero and
    /// not nodata.
    pub fn masks_out(&self, index: usize) -> bool {
        let v = self.cells[index];
        v != 0 && !self.is_nodata(v)
    }

    /// Replaces every cell through `group_map`; header unchanged. Nodata
    /// and background (0) cells pass through, every other code must be
    /// mapped.
    pub fn reclass_group(
        &self,
        group_map: &BTreeMap<ClassCode, ClassCode>,
    ) -> Result<CategoricalGrid> {
        let nodata = self.nodata_code();
        let mut out = Vec::with_capacity(self.cells.len());
        for &c in &self.cells {
            if c == nodata || c == 0 {
                out.push(c);
                continue;
            }
            match group_map.get(&c) {
                Some(&t) => out.push(t),
                None => return Err(Error::UnmappedCode { code: c }),
            }
        }
        let canonical = canonical_legend();
        let mut legend = BTreeMap::new();
        for &t in group_map.values() {
            let name = self
                .legend
                .get(&t)
                .cloned()
                .or_else(|| canonical.get(&t).cloned())
                .unwrap_or_else(|| format!("class_{t}"));
            legend.insert(t, name);
        }
        CategoricalGrid::new(self.header, out, legend)
    }

    pub fn write_ascii(&self, path: &Path) -> Result<()> {
        let mut body = header_text(&self.header);
        for row in 0..self.header.nrows {
            let mut line = String::new();
            for col in 0..self.header.ncols {
                if col > 0 {
                    line.push(' ');
                }
                write!(line, "{}", self.get(row, col)).unwrap();
            }
            body.push_str(&line);
            body.push('\n');
        }
        write_file(path, &body)?;
        let legend: BTreeMap<String, String> = self
            .legend
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect();
        let text = serde_json::to_string_pretty(&legend).expect("legend serializes");
        write_file(&legend_sidecar_path(path), &text)
    }
}

/// Real-valued raster. All non-nodata values are finite; NaN and infinity
/// are rejected at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousGrid {
    header: GridHeader,
    cells: Vec<f64>,
}

impl ContinuousGrid {
    pub fn new(header: GridHeader, cells: Vec<f64>) -> Result<Self> {
        if cells.len() != header.cell_count() {
            return Err(Error::CellCountMismatch {
                expected: header.cell_count(),
                found: cells.len(),
            });
        }
        for &v in &cells {
            if !v.is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "non-finite cell value {v}"
                )));
            }
        }
        Ok(Self { header, cells })
    }

    pub fn header(&self) -> &GridHeader {
        &self.header
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn is_nodata(&self, value: f64) -> bool {
        value == self.header.nodata_value
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.header.ncols + col
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[self.index(row, col)]
    }

    /// Value at `(row, col)` unless it is the nodata marker.
    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.get(row, col);
        if self.is_nodata(v) {
            None
        } else {
            Some(v)
        }
    }

    pub fn write_ascii(&self, path: &Path) -> Result<()> {
        let mut body = header_text(&self.header);
        for row in 0..self.header.nrows {
            let mut line = String::new();
            for col in 0..self.header.ncols {
                if col > 0 {
                    line.push(' ');
                }
                // Shortest decimal that parses back to the identical f64.
                write!(line, "{}", self.get(row, col)).unwrap();
            }
            body.push_str(&line);
            body.push('\n');
        }
        write_file(path, &body)
    }
}

/// Sidecar path for a categorical grid's legend: `lc.asc` -> `lc.legend.json`.
pub fn legend_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("legend.json")
}

fn categorical_nodata(header: &GridHeader) -> Result<ClassCode> {
    let nd = header.nodata_value;
    if nd.fract() != 0.0 || nd < i32::MIN as f64 || nd > i32::MAX as f64 {
        return Err(Error::MalformedHeader(format!(
            "categorical nodata value must be an integral i32, got {nd}"
        )));
    }
    Ok(nd as ClassCode)
}

fn header_text(h: &GridHeader) -> String {
    format!(
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
        h.ncols, h.nrows, h.xllcorner, h.yllcorner, h.cellsize, h.nodata_value
    )
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })
}

struct ParsedAscii {
    header: GridHeader,
    tokens: Vec<String>,
}

fn parse_ascii(text: &str) -> Result<ParsedAscii> {
    let mut lines = text.lines();
    let mut fields: BTreeMap<&'static str, f64> = BTreeMap::new();
    const KEYS: [&str; 6] = [
        "ncols",
        "nrows",
        "xllcorner",
        "yllcorner",
        "cellsize",
        "nodata_value",
    ];
    let mut taken = 0;
    for line in lines.by_ref() {
        let mut parts = line.split_whitespace();
        let key = match parts.next() {
            Some(k) => k.to_ascii_lowercase(),
            None => continue, // blank line before/inside the header block
        };
        let canonical = match KEYS.iter().find(|k| **k == key) {
            Some(k) => *k,
            None => {
                return Err(Error::MalformedHeader(format!(
                    "expected header key, got {key:?}"
                )))
            }
        };
        let value: f64 = parts
            .next()
            .ok_or_else(|| Error::MalformedHeader(format!("key {key} has no value")))?
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("key {key} has a non-numeric value")))?;
        if parts.next().is_some() {
            return Err(Error::MalformedHeader(format!(
                "trailing tokens after header key {key}"
            )));
        }
        if fields.insert(canonical, value).is_some() {
            return Err(Error::MalformedHeader(format!("duplicate key {canonical}")));
        }
        taken += 1;
        if taken == 6 {
            break;
        }
    }
    for k in KEYS {
        if !fields.contains_key(k) {
            return Err(Error::MalformedHeader(format!("missing key {k}")));
        }
    }
    let as_count = |k: &str| -> Result<usize> {
        let v = fields[k];
        if v.fract() != 0.0 || v < 1.0 {
            return Err(Error::MalformedHeader(format!(
                "{k} must be a positive integer, got {v}"
            )));
        }
        Ok(v as usize)
    };
    let header = GridHeader::new(
        as_count("ncols")?,
        as_count("nrows")?,
        fields["xllcorner"],
        fields["yllcorner"],
        fields["cellsize"],
        fields["nodata_value"],
    )?;
    let tokens: Vec<String> = lines
        .flat_map(|l| l.split_whitespace().map(str::to_string))
        .collect();
    if tokens.len() != header.cell_count() {
        return Err(Error::CellCountMismatch {
            expected: header.cell_count(),
            found: tokens.len(),
        });
    }
    Ok(ParsedAscii { header, tokens })
}

/// Reads a categorical ASCII grid; the legend sidecar is loaded when
/// present, otherwise placeholder names are generated for observed codes.
pub fn read_categorical_ascii(path: &Path) -> Result<CategoricalGrid> {
    let parsed = parse_ascii(&read_file(path)?)?;
    let mut cells = Vec::with_capacity(parsed.tokens.len());
    for t in &parsed.tokens {
        let v: i64 = t
            .parse()
            .map_err(|_| Error::NonIntegerCell { token: t.clone() })?;
        if v < i32::MIN as i64 || v > i32::MAX as i64 {
            return Err(Error::NonIntegerCell { token: t.clone() });
        }
        cells.push(v as ClassCode);
    }
    let sidecar = legend_sidecar_path(path);
    let legend = if sidecar.exists() {
        let text = read_file(&sidecar)?;
        let raw: BTreeMap<String, String> =
            serde_json::from_str(&text).map_err(|e| Error::Json {
                path: sidecar.clone(),
                detail: e.to_string(),
            })?;
        let mut legend = BTreeMap::new();
        for (k, v) in raw {
            let code: ClassCode = k.parse().map_err(|_| Error::Json {
                path: sidecar.clone(),
                detail: format!("legend key {k:?} is not an integer code"),
            })?;
            legend.insert(code, v);
        }
        legend
    } else {
        let nodata = categorical_nodata(&parsed.header)?;
        let mut legend = BTreeMap::new();
        for &c in &cells {
            if c != nodata && c != 0 {
                legend.entry(c).or_insert_with(|| format!("class_{c}"));
            }
        }
        legend
    };
    CategoricalGrid::new(parsed.header, cells, legend)
}

/// Reads a continuous ASCII grid; rejects NaN/Inf tokens.
pub fn read_continuous_ascii(path: &Path) -> Result<ContinuousGrid> {
    let parsed = parse_ascii(&read_file(path)?)?;
    let mut cells = Vec::with_capacity(parsed.tokens.len());
    for t in &parsed.tokens {
        let v: f64 = t
            .parse()
            .map_err(|_| Error::NonFiniteCell { token: t.clone() })?;
        if !v.is_finite() {
            return Err(Error::NonFiniteCell { token: t.clone() });
        }
        cells.push(v);
    }
    ContinuousGrid::new(parsed.header, cells)
}

/// Relative frequency of each class among countable cells.
///
/// A cell counts when it is not nodata, not excluded by the mask, and its
/// code is in `classes`; the result sums to 1 over counted cells.
pub fn class_frequencies(
    grid: &CategoricalGrid,
    classes: &[ClassCode],
    mask: Option<&CategoricalGrid>,
) -> Result<Vec<f64>> {
    if classes.is_empty() {
        return Err(Error::EmptyClassList);
    }
    if let Some(m) = mask {
        grid.header().ensure_aligned(m.header())?;
    }
    let mut counts = vec![0u64; classes.len()];
    let mut total = 0u64;
    for (i, &c) in grid.cells().iter().enumerate() {
        if grid.is_nodata(c) || c == 0 {
            continue;
        }
        if mask.is_some_and(|m| m.masks_out(i)) {
            continue;
        }
        if let Some(pos) = classes.iter().position(|&k| k == c) {
            counts[pos] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::NoCountableCells);
    }
    Ok(counts.iter().map(|&n| n as f64 / total as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn header(ncols: usize, nrows: usize) -> GridHeader {
        GridHeader::new(ncols, nrows, 0.0, 0.0, 30.0, -9999.0).unwrap()
    }

    fn vis_legend() -> BTreeMap<ClassCode, String> {
        canonical_legend()
    }

    fn cat(ncols: usize, nrows: usize, cells: Vec<ClassCode>) -> CategoricalGrid {
        CategoricalGrid::new(header(ncols, nrows), cells, vis_legend()).unwrap()
    }

    #[test]
    fn parse_literal_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.asc");
        std::fs::write(
            &path,
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 30\nNODATA_value -9999\n1 2\n3 1\n",
        )
        .unwrap();
        let g = read_categorical_ascii(&path).unwrap();
        assert_eq!(g.cells(), &[1, 2, 3, 1]);
        assert_eq!(g.get(0, 1), 2);
        assert_eq!(g.get(1, 0), 3);
    }

    #[test]
    fn roundtrip_categorical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.asc");
        let g = cat(3, 2, vec![1, 2, 3, 1, -9999, 2]);
        g.write_ascii(&path).unwrap();
        let back = read_categorical_ascii(&path).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn roundtrip_continuous_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.asc");
        let vals = vec![
            0.1,
            std::f64::consts::PI,
            -9999.0,
            1.0 / 3.0,
            12345.678901234567,
            1e-300,
        ];
        let g = ContinuousGrid::new(header(3, 2), vals.clone()).unwrap();
        g.write_ascii(&path).unwrap();
        let back = read_continuous_ascii(&path).unwrap();
        assert_eq!(back.cells(), vals.as_slice());
    }

    #[test]
    fn one_by_one_body() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.asc");
        let g = CategoricalGrid::new(header(1, 1), vec![5], [(5, "x".to_string())].into())
            .unwrap();
        g.write_ascii(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.ends_with("\n5\n"));
    }

    #[test]
    fn cell_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.asc");
        std::fs::write(
            &path,
            "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 30\nNODATA_value -9999\n1 2\n3 1\n",
        )
        .unwrap();
        match read_categorical_ascii(&path) {
            Err(Error::CellCountMismatch { expected: 6, found: 4 }) => {}
            other => panic!("expected cell count mismatch, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_missing_header_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.asc");
        std::fs::write(
            &path,
            "ncols 1\nncols 1\nxllcorner 0\nyllcorner 0\ncellsize 30\nNODATA_value -9999\n1\n",
        )
        .unwrap();
        assert!(matches!(
            read_categorical_ascii(&path),
            Err(Error::MalformedHeader(_))
        ));
        std::fs::write(
            &path,
            "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 30\n1\n",
        )
        .unwrap();
        assert!(matches!(
            read_categorical_ascii(&path),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn categorical_rejects_fractional_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.asc");
        std::fs::write(
            &path,
            "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 30\nNODATA_value -9999\n1.5\n",
        )
        .unwrap();
        assert!(matches!(
            read_categorical_ascii(&path),
            Err(Error::NonIntegerCell { .. })
        ));
    }

    #[test]
    fn header_keys_case_insensitive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.asc");
        std::fs::write(
            &path,
            "NCOLS 1\nNROWS 1\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 30\nnodata_VALUE -9999\n7\n",
        )
        .unwrap();
        let g = read_categorical_ascii(&path).unwrap();
        assert_eq!(g.cells(), &[7]);
    }

    #[test]
    fn frequencies_hand_count() {
        let g = cat(2, 2, vec![1, 1, 2, 3]);
        let f = class_frequencies(&g, &[1, 2, 3], None).unwrap();
        assert_eq!(f, vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn frequencies_uniform_grid() {
        let g = cat(2, 2, vec![1, 1, 1, 1]);
        let f = class_frequencies(&g, &[1, 2, 3], None).unwrap();
        assert_eq!(f, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn frequencies_all_nodata_errors() {
        let g = cat(2, 1, vec![-9999, -9999]);
        assert!(matches!(
            class_frequencies(&g, &[1, 2, 3], None),
            Err(Error::NoCountableCells)
        ));
    }

    #[test]
    fn frequencies_respect_mask() {
        let g = cat(2, 2, vec![1, 2, 2, 3]);
        let mask = cat(2, 2, vec![0, 1, 0, 0]); // exclude the first 2
        let f = class_frequencies(&g, &[1, 2, 3], Some(&mask)).unwrap();
        assert_eq!(f, vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn reclass_seven_to_three() {
        let mut legend = BTreeMap::new();
        for (c, n) in [
            (11, "forest"),
            (12, "agriculture"),
            (21, "residential"),
            (22, "industrial"),
            (31, "open_area"),
            (32, "burnt_grass"),
            (33, "bright_soil"),
        ] {
            legend.insert(c, n.to_string());
        }
        let g = CategoricalGrid::new(
            header(7, 1),
            vec![11, 12, 21, 22, 31, 32, 33],
            legend,
        )
        .unwrap();
        let map: BTreeMap<i32, i32> =
            [(11, 1), (12, 1), (21, 2), (22, 2), (31, 3), (32, 3), (33, 3)].into();
        let r = g.reclass_group(&map).unwrap();
        assert_eq!(r.cells(), &[1, 1, 2, 2, 3, 3, 3]);
        assert_eq!(r.header(), g.header());
        assert_eq!(r.legend().get(&1).unwrap(), "vegetation");
    }

    #[test]
    fn reclass_identity() {
        let g = cat(2, 2, vec![1, 2, 3, 1]);
        let map: BTreeMap<i32, i32> = [(1, 1), (2, 2), (3, 3)].into();
        let r = g.reclass_group(&map).unwrap();
        assert_eq!(r.cells(), g.cells());
    }

    #[test]
    fn reclass_unmapped_code_errors() {
        let g = CategoricalGrid::new(
            header(1, 1),
            vec![99],
            [(99, "mystery".to_string())].into(),
        )
        .unwrap();
        let map: BTreeMap<i32, i32> = [(1, 1)].into();
        assert!(matches!(
            g.reclass_group(&map),
            Err(Error::UnmappedCode { code: 99 })
        ));
    }

    #[test]
    fn alignment_reports_field() {
        let a = header(2, 2);
        let mut b = a;
        b.cellsize = 31.0;
        match validate_alignment(&[&a, &b]) {
            Err(Error::Unaligned { field: "cellsize" }) => {}
            other => panic!("expected cellsize mismatch, got {other:?}"),
        }
        assert!(validate_alignment(&[&a]).is_ok());
        assert!(validate_alignment(&[&a, &a.clone()]).is_ok());
    }
}
