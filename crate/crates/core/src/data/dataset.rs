//! On-disk dataset: a manifest plus one grid file pair per day and variable,
//! stored as `grids/<YYYY-MM-DD>/<VARIABLE>.{json,f32}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DataError, SynthScenario};
use crate::grid::{read_grid_file, write_grid_file, CoastMask, GridField, GridGeometry, Variable};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "icepinn-dataset";
const FORMAT_VERSION: u32 = 1;

/// Fields by day, then by variable.
pub type DailyFields = BTreeMap<NaiveDate, BTreeMap<Variable, GridField>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDay {
    pub date: NaiveDate,
    pub variables: Vec<Variable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub format_version: u32,
    pub geometry: GridGeometry,
    /// One string per row, `1` for land.
    pub land: Vec<String>,
    pub days: Vec<ManifestDay>,
    /// Free-form provenance (e.g. the generator config).
    #[serde(default)]
    pub source: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: Manifest,
    coast: CoastMask,
}

fn grid_path(root: &Path, date: NaiveDate, var: Variable) -> PathBuf {
    root.join("grids").join(date.format("%Y-%m-%d").to_string()).join(var.tag())
}

fn encode_land(land: &[bool], width: usize) -> Vec<String> {
    land.chunks(width)
        .map(|row| row.iter().map(|l| if *l { '1' } else { '0' }).collect())
        .collect()
}

impl Dataset {
    /// Writes every field and the manifest under `root`.
    pub fn write(
        root: &Path,
        coast: &CoastMask,
        days: &DailyFields,
        source: serde_json::Value,
    ) -> Result<Dataset, DataError> {
        let geometry = coast.geometry().clone();
        let mut listed = Vec::with_capacity(days.len());
        for (date, fields) in days {
            for (var, f) in fields {
                if !f.geometry().compatible(&geometry) {
                    return Err(DataError::GeometryMismatch(format!("{var} on {date}")));
                }
                write_grid_file(f, grid_path(root, *date, *var))?;
            }
            listed.push(ManifestDay {
                date: *date,
                variables: fields.keys().copied().collect(),
            });
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            format_version: FORMAT_VERSION,
            geometry: geometry.clone(),
            land: encode_land(coast.land(), geometry.width),
            days: listed,
            source,
        };
        let path = root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|source| DataError::Io { path, source })?;
        Ok(Dataset {
            root: root.to_path_buf(),
            manifest,
            coast: coast.clone(),
        })
    }

    pub fn write_scenario(root: &Path, scenario: &SynthScenario) -> Result<Dataset, DataError> {
        let source = serde_json::json!({ "generator": "synthetic", "config": scenario.config });
        Self::write(root, &scenario.coast, &scenario.days, source)
    }

    pub fn open(root: &Path) -> Result<Dataset, DataError> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|source| DataError::Io {
            path: path.clone(),
            source,
        })?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DataError::Manifest {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let bad = |reason: String| DataError::Manifest {
            path: path.clone(),
            reason,
        };
        if manifest.format != FORMAT || manifest.format_version != FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format {} v{}",
                manifest.format, manifest.format_version
            )));
        }
        manifest.geometry.validate()?;
        let g = &manifest.geometry;
        if manifest.land.len() != g.height || manifest.land.iter().any(|r| r.len() != g.width) {
            return Err(bad(format!("land mask is not {}x{}", g.height, g.width)));
        }
        let mut land = Vec::with_capacity(g.cells());
        for row in &manifest.land {
            for ch in row.chars() {
                match ch {
                    '0' => land.push(false),
                    '1' => land.push(true),
                    other => return Err(bad(format!("land mask character `{other}`"))),
                }
            }
        }
        let coast = CoastMask::new(g.clone(), land)?;
        Ok(Dataset {
            root: root.to_path_buf(),
            manifest,
            coast,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.manifest.geometry
    }

    pub fn coast(&self) -> &CoastMask {
        &self.coast
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.manifest.days.iter().map(|d| d.date).collect()
    }

    /// Loads listed fields whose date lies in `range` (inclusive; all days when `None`).
    pub fn load(&self, range: Option<(NaiveDate, NaiveDate)>) -> Result<DailyFields, DataError> {
        let mut out = DailyFields::new();
        for day in &self.manifest.days {
            if let Some((a, b)) = range {
                if day.date < a || day.date > b {
                    continue;
                }
            }
            let mut fields = BTreeMap::new();
            for var in &day.variables {
                let f = read_grid_file(grid_path(&self.root, day.date, *var))?;
                if f.variable() != *var || f.date() != day.date || !f.geometry().compatible(self.geometry()) {
                    return Err(DataError::GeometryMismatch(format!(
                        "grid file for {var} on {} disagrees with the manifest",
                        day.date
                    )));
                }
                fields.insert(*var, f);
            }
            out.insert(day.date, fields);
        }
        Ok(out)
    }
}
