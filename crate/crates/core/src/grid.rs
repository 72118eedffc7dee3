//! Gridded fields, coastal masks and the flat-binary grid file format.
//!
//! A grid file is a pair of files sharing a stem: `<stem>.json` holds the
//! metadata and `<stem>.f32` holds `height * width` little-endian `f32`
//! values in row-major order, row 0 at the top. NaN payload cells are
//! invalid; the in-memory validity mask is authoritative.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bit pattern written for invalid cells.
pub const FILL_BITS: u32 = 0x7fc0_0000;

/// Smallest grid a three-level U-net with 2x pooling can use.
pub const MIN_GRID_CELLS: usize = 8;

/// Coastal buffer width in cells (50 km on the 25 km grid).
pub const COASTAL_BUFFER_CELLS: usize = 2;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed header field `{field}`: {reason}")]
    MalformedHeader {
        path: PathBuf,
        field: &'static str,
        reason: String,
    },
    #[error("{path}: payload has {actual} bytes, geometry {height}x{width} needs {expected}")]
    SizeMismatch {
        path: PathBuf,
        height: usize,
        width: usize,
        expected: usize,
        actual: usize,
    },
    #[error("{path}: unknown variable tag `{tag}`")]
    UnknownVariable { path: PathBuf, tag: String },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid {variable} field: {reason}")]
    Validation { variable: Variable, reason: String },
    #[error("{path}: {source}")]
    InvalidFile {
        path: PathBuf,
        #[source]
        source: Box<GridError>,
    },
}

pub type Result<T> = std::result::Result<T, GridError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub height: usize,
    pub width: usize,
    pub cell_size_km: f64,
    #[serde(default)]
    pub origin: String,
}

impl GridGeometry {
    pub fn new(height: usize, width: usize, cell_size_km: f64, origin: impl Into<String>) -> Result<Self> {
        let g = Self {
            height,
            width,
            cell_size_km,
            origin: origin.into(),
        };
        g.validate()?;
        Ok(g)
    }

    /// 25 km grid with an empty origin tag.
    pub fn ease25(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, 25.0, "")
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < MIN_GRID_CELLS || self.width < MIN_GRID_CELLS {
            return Err(GridError::Geometry(format!(
                "{}x{} is smaller than the {MIN_GRID_CELLS}x{MIN_GRID_CELLS} minimum",
                self.height, self.width
            )));
        }
        if !(self.cell_size_km > 0.0 && self.cell_size_km.is_finite()) {
            return Err(GridError::Geometry(format!("cell size {} km must be positive", self.cell_size_km)));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    /// Same shape and spacing; the origin tag is informational.
    pub fn compatible(&self, other: &GridGeometry) -> bool {
        self.height == other.height && self.width == other.width && self.cell_size_km == other.cell_size_km
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variable {
    #[serde(rename = "SIV_U")]
    SivU,
    #[serde(rename = "SIV_V")]
    SivV,
    #[serde(rename = "SIC")]
    Sic,
    #[serde(rename = "T2M")]
    T2m,
    #[serde(rename = "WIND_U")]
    WindU,
    #[serde(rename = "WIND_V")]
    WindV,
}

impl Variable {
    /// Per-day input order of the model's channel stack.
    pub const ALL: [Variable; 6] = [
        Variable::SivU,
        Variable::SivV,
        Variable::Sic,
        Variable::T2m,
        Variable::WindU,
        Variable::WindV,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variable::SivU => "SIV_U",
            Variable::SivV => "SIV_V",
            Variable::Sic => "SIC",
            Variable::T2m => "T2M",
            Variable::WindU => "WIND_U",
            Variable::WindV => "WIND_V",
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            Variable::SivU | Variable::SivV => "km/day",
            Variable::Sic => "fraction",
            Variable::T2m => "degC",
            Variable::WindU | Variable::WindV => "m/s",
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variable {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Variable::ALL
            .into_iter()
            .find(|v| v.tag() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// One 2-D field on a grid. Invalid cells always hold the NaN fill value.
#[derive(Debug, Clone)]
pub struct GridField {
    geometry: GridGeometry,
    variable: Variable,
    date: NaiveDate,
    values: Vec<f32>,
    valid: Vec<bool>,
}

impl GridField {
    pub fn new(
        geometry: GridGeometry,
        variable: Variable,
        date: NaiveDate,
        mut values: Vec<f32>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        geometry.validate()?;
        let n = geometry.cells();
        if values.len() != n || valid.len() != n {
            return Err(GridError::Validation {
                variable,
                reason: format!(
                    "expected {n} cells, got {} values and {} mask entries",
                    values.len(),
                    valid.len()
                ),
            });
        }
        for (i, (v, ok)) in values.iter_mut().zip(&valid).enumerate() {
            if !*ok {
                *v = f32::from_bits(FILL_BITS);
                continue;
            }
            if !v.is_finite() {
                return Err(GridError::Validation {
                    variable,
                    reason: format!("non-finite value {v} at valid cell ({}, {})", i / geometry.width, i % geometry.width),
                });
            }
            if variable == Variable::Sic && !(0.0..=1.0).contains(v) {
                return Err(GridError::Validation {
                    variable,
                    reason: format!(
                        "concentration {v} outside [0, 1] at cell ({}, {})",
                        i / geometry.width,
                        i % geometry.width
                    ),
                });
            }
        }
        Ok(Self {
            geometry,
            variable,
            date,
            values,
            valid,
        })
    }

    /// Builds a field whose validity is "value is not NaN".
    pub fn from_values(geometry: GridGeometry, variable: Variable, date: NaiveDate, values: Vec<f32>) -> Result<Self> {
        let valid = values.iter().map(|v| !v.is_nan()).collect();
        Self::new(geometry, variable, date, values, valid)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn variable(&self) -> Variable {
        self.variable
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f32> {
        let i = row * self.geometry.width + col;
        self.valid[i].then(|| self.values[i])
    }

    /// Bitwise equality of metadata, mask and payload.
    pub fn bit_eq(&self, other: &GridField) -> bool {
        self.geometry == other.geometry
            && self.variable == other.variable
            && self.date == other.date
            && self.valid == other.valid
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Land cells and the cells within the coastal buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct CoastMask {
    geometry: GridGeometry,
    land: Vec<bool>,
    near_coast: Vec<bool>,
}

impl CoastMask {
    pub fn new(geometry: GridGeometry, land: Vec<bool>) -> Result<Self> {
        geometry.validate()?;
        if land.len() != geometry.cells() {
            return Err(GridError::Geometry(format!(
                "land mask has {} cells, geometry needs {}",
                land.len(),
                geometry.cells()
            )));
        }
        let near_coast = dilate_mask(&land, geometry.height, geometry.width, COASTAL_BUFFER_CELLS);
        Ok(Self {
            geometry,
            land,
            near_coast,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn land(&self) -> &[bool] {
        &self.land
    }

    pub fn near_coast(&self) -> &[bool] {
        &self.near_coast
    }
}

/// Chebyshev dilation: a cell is set iff some set cell of `mask` lies within
/// `radius` cells in both row and column.
pub fn dilate_mask(mask: &[bool], height: usize, width: usize, radius: usize) -> Vec<bool> {
    assert_eq!(mask.len(), height * width, "mask size does not match {height}x{width}");
    if radius == 0 {
        return mask.to_vec();
    }
    // The square structuring element is separable: rows first, then columns.
    let mut rows = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(width - 1);
            rows[y * width + x] = mask[y * width + lo..=y * width + hi].iter().any(|m| *m);
        }
    }
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(height - 1);
        for x in 0..width {
            out[y * width + x] = (lo..=hi).any(|yy| rows[yy * width + x]);
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct GridHeader {
    height: usize,
    width: usize,
    cell_size_km: f64,
    variable: String,
    date: String,
    units: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    origin: String,
}

/// Strips a trailing `.json` or `.f32` so either file of a pair (or the
/// bare stem) can be passed.
pub fn grid_stem(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("f32") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn with_suffix(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn write_grid_file(field: &GridField, path: impl AsRef<Path>) -> Result<()> {
    let stem = grid_stem(path.as_ref());
    let header = GridHeader {
        height: field.geometry.height,
        width: field.geometry.width,
        cell_size_km: field.geometry.cell_size_km,
        variable: field.variable.tag().to_string(),
        date: field.date.format("%Y-%m-%d").to_string(),
        units: field.variable.units().to_string(),
        origin: field.geometry.origin.clone(),
    };
    let json_path = with_suffix(&stem, "json");
    let payload_path = with_suffix(&stem, "f32");
    if let Some(parent) = json_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| GridError::Io { path: parent.to_path_buf(), source })?;
    }
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(&json_path, json).map_err(|source| GridError::Io { path: json_path.clone(), source })?;

    let mut bytes = Vec::with_capacity(field.values.len() * 4);
    for (v, ok) in field.values.iter().zip(&field.valid) {
        let bits = if *ok { v.to_bits() } else { FILL_BITS };
        bytes.extend_from_slice(&bits.to_le_bytes());
    }
    fs::write(&payload_path, bytes).map_err(|source| GridError::Io { path: payload_path, source })
}

pub fn read_grid_file(path: impl AsRef<Path>) -> Result<GridField> {
    let stem = grid_stem(path.as_ref());
    let json_path = with_suffix(&stem, "json");
    let payload_path = with_suffix(&stem, "f32");
    let text = fs::read_to_string(&json_path).map_err(|source| GridError::Io { path: json_path.clone(), source })?;
    let header: GridHeader = serde_json::from_str(&text).map_err(|e| GridError::MalformedHeader {
        path: json_path.clone(),
        field: "<json>",
        reason: e.to_string(),
    })?;
    let variable: Variable = header.variable.parse().map_err(|tag| GridError::UnknownVariable {
        path: json_path.clone(),
        tag,
    })?;
    let date = NaiveDate::parse_from_str(&header.date, "%Y-%m-%d").map_err(|e| GridError::MalformedHeader {
        path: json_path.clone(),
        field: "date",
        reason: format!("`{}`: {e}", header.date),
    })?;
    let geometry = GridGeometry {
        height: header.height,
        width: header.width,
        cell_size_km: header.cell_size_km,
        origin: header.origin,
    };
    geometry.validate().map_err(|e| GridError::MalformedHeader {
        path: json_path.clone(),
        field: "height/width/cell_size_km",
        reason: e.to_string(),
    })?;

    let bytes = fs::read(&payload_path).map_err(|source| GridError::Io { path: payload_path.clone(), source })?;
    let expected = geometry.cells() * 4;
    if bytes.len() != expected {
        return Err(GridError::SizeMismatch {
            path: payload_path,
            height: geometry.height,
            width: geometry.width,
            expected,
            actual: bytes.len(),
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    GridField::from_values(geometry, variable, date, values).map_err(|e| GridError::InvalidFile {
        path: payload_path,
        source: Box::new(e),
    })
}
