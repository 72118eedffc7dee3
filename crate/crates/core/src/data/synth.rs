//! Synthetic sea-ice scenario with known, physically consistent dynamics.
//!
//! Winds combine a rotating uniform flow, an oscillating gyre and a few
//! random Fourier modes redrawn daily. Ice drifts in free drift (a fixed
//! fraction of the wind, turned clockwise) and is still wherever the
//! concentration is below 15%. Concentration is advected with a donor-cell
//! scheme in a closed basin (no flux through land or the outer boundary)
//! and then receives a thermodynamic source proportional to the distance of
//! the air temperature from freezing.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DailyFields, DataError};
use crate::grid::{CoastMask, GridField, GridGeometry, Variable};

/// Open-water threshold shared with the saturation loss.
pub const OPEN_WATER_SIC: f64 = 0.15;

const NOISE_MODES: usize = 3;

/// Land: a frame of `border` cells plus an optional rectangle.
///
/// `block = [row, col, height, width]`; when omitted a block of a quarter of
/// the width and an eighth of the height is placed left of centre. A block
/// with zero height or width disables it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandLayout {
    #[serde(default = "default_border")]
    pub border: usize,
    #[serde(default)]
    pub block: Option<[usize; 4]>,
}

fn default_border() -> usize {
    1
}

impl Default for LandLayout {
    fn default() -> Self {
        Self {
            border: default_border(),
            block: None,
        }
    }
}

impl LandLayout {
    pub fn resolved_block(&self, height: usize, width: usize) -> [usize; 4] {
        self.block
            .unwrap_or([height * 3 / 8, width / 8, (height / 8).max(1), (width / 4).max(1)])
    }

    pub fn mask(&self, height: usize, width: usize) -> Result<Vec<bool>, DataError> {
        if 2 * self.border >= height.min(width) {
            return Err(DataError::Config(format!(
                "land border {} leaves no ocean on a {height}x{width} grid",
                self.border
            )));
        }
        let [r0, c0, bh, bw] = self.resolved_block(height, width);
        if bh > 0 && bw > 0 && (r0 + bh > height || c0 + bw > width) {
            return Err(DataError::Config(format!(
                "land block rows {r0}..{} cols {c0}..{} exceeds the {height}x{width} grid",
                r0 + bh,
                c0 + bw
            )));
        }
        let b = self.border;
        Ok((0..height * width)
            .map(|i| {
                let (r, c) = (i / width, i % width);
                let frame = r < b || c < b || r >= height - b || c >= width - b;
                let block = (r0..r0 + bh).contains(&r) && (c0..c0 + bw).contains(&c);
                frame || block
            })
            .collect())
    }
}

/// Scenario parameters. Speeds are m/s for wind and km/day for drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub height: usize,
    pub width: usize,
    pub days: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    pub cell_size_km: f64,
    pub land: LandLayout,
    /// Speed of the uniform synoptic wind.
    pub wind_speed: f64,
    /// Period of one full turn of the synoptic wind direction.
    pub wind_rotation_days: f64,
    /// Peak speed of the basin gyre.
    pub gyre_strength: f64,
    pub gyre_period_days: f64,
    /// Bound on each wind component's random perturbation.
    pub wind_noise: f64,
    /// Ice drift speed per unit wind speed, km/day per m/s.
    pub drift_factor: f64,
    /// Clockwise turning of drift relative to wind.
    pub turning_angle_deg: f64,
    pub t2m_mean: f64,
    pub t2m_seasonal_amplitude: f64,
    /// Temperature difference between the bottom and top rows.
    pub t2m_meridional_range: f64,
    pub t2m_noise: f64,
    pub freezing_point: f64,
    /// Concentration change per day per degree below freezing.
    pub growth_rate: f64,
    /// Bound on the magnitude of the daily thermodynamic source.
    pub max_source: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            days: 400,
            seed: 0,
            start_date: NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date"),
            cell_size_km: 25.0,
            land: LandLayout::default(),
            wind_speed: 5.0,
            wind_rotation_days: 20.0,
            gyre_strength: 3.0,
            gyre_period_days: 45.0,
            wind_noise: 1.5,
            drift_factor: 0.8,
            turning_angle_deg: 20.0,
            t2m_mean: -8.0,
            t2m_seasonal_amplitude: 14.0,
            t2m_meridional_range: 20.0,
            t2m_noise: 1.0,
            freezing_point: -1.8,
            growth_rate: 0.01,
            max_source: 0.05,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        toml::from_str(text).map_err(|e| DataError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| DataError::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn geometry(&self) -> Result<GridGeometry, DataError> {
        Ok(GridGeometry::new(self.height, self.width, self.cell_size_km, "synthetic")?)
    }

    /// Upper bound on the ice speed over the whole run, km/day.
    pub fn max_drift_speed(&self) -> f64 {
        let wind = self.wind_speed.abs() + self.gyre_strength.abs() + std::f64::consts::SQRT_2 * self.wind_noise.abs();
        self.drift_factor.abs() * wind
    }

    /// Worst-case Courant number of the advection step (one-day step).
    pub fn courant(&self) -> f64 {
        self.max_drift_speed() / self.cell_size_km
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.height < 16 || self.width < 16 {
            return Err(DataError::Config(format!(
                "synthetic grid {}x{} must be at least 16x16",
                self.height, self.width
            )));
        }
        if self.days < 5 {
            return Err(DataError::Config(format!(
                "{} days admit no training window with a target day; need at least 5",
                self.days
            )));
        }
        for (name, v) in [
            ("wind_rotation_days", self.wind_rotation_days),
            ("gyre_period_days", self.gyre_period_days),
            ("cell_size_km", self.cell_size_km),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DataError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.growth_rate >= 0.0 && self.max_source >= 0.0) {
            return Err(DataError::Config("growth_rate and max_source must be nonnegative".into()));
        }
        let c = self.courant();
        if c >= 0.5 {
            return Err(DataError::Cfl { courant: c });
        }
        Ok(())
    }
}

/// Generated fields plus the bookkeeping needed to audit them.
#[derive(Debug, Clone)]
pub struct SynthScenario {
    pub config: ScenarioConfig,
    pub coast: CoastMask,
    pub days: DailyFields,
    /// `source[t]` is the concentration added between day `t` and `t + 1`
    /// after advection, clamping included.
    pub source: Vec<Vec<f64>>,
}

impl SynthScenario {
    pub fn geometry(&self) -> &GridGeometry {
        self.coast.geometry()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.days.keys().copied().collect()
    }
}

struct WindDay {
    phase_u: [(f64, f64, f64); NOISE_MODES],
    phase_v: [(f64, f64, f64); NOISE_MODES],
}

fn draw_modes(rng: &mut ChaCha8Rng) -> [(f64, f64, f64); NOISE_MODES] {
    std::array::from_fn(|_| {
        let kx = rng.gen_range(1..=3) as f64;
        let ky = rng.gen_range(1..=3) as f64;
        (kx, ky, rng.gen_range(0.0..2.0 * PI))
    })
}

pub fn synth_scenario(config: &ScenarioConfig) -> Result<SynthScenario, DataError> {
    config.validate()?;
    let geometry = config.geometry()?;
    let (h, w) = (config.height, config.width);
    let n = h * w;
    let land = config.land.mask(h, w)?;
    let coast = CoastMask::new(geometry.clone(), land.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // normalized coordinates, x east and y north (row 0 is the top)
    let xs: Vec<f64> = (0..n).map(|i| ((i % w) as f64 + 0.5) / w as f64).collect();
    let ys: Vec<f64> = (0..n).map(|i| ((h - i / w) as f64 - 0.5) / h as f64).collect();

    let wave_phase = rng.gen_range(0.0..2.0 * PI);
    let wind_phase = rng.gen_range(0.0..2.0 * PI);
    let mut sic: Vec<f32> = (0..n)
        .map(|i| {
            if land[i] {
                return 0.0;
            }
            let a = 0.2 + 0.9 * ys[i] + 0.1 * (4.0 * PI * xs[i] + wave_phase).sin();
            a.clamp(0.0, 1.0) as f32
        })
        .collect();

    let (sin_t, cos_t) = config.turning_angle_deg.to_radians().sin_cos();
    let ocean: Vec<bool> = land.iter().map(|l| !l).collect();
    let mut days = BTreeMap::new();
    let mut source = Vec::with_capacity(config.days.saturating_sub(1));

    for t in 0..config.days {
        let date = config
            .start_date
            .checked_add_days(Days::new(t as u64))
            .ok_or_else(|| DataError::Config("scenario runs past the calendar".into()))?;
        let td = t as f64;
        let modes = WindDay {
            phase_u: draw_modes(&mut rng),
            phase_v: draw_modes(&mut rng),
        };
        let synoptic = 2.0 * PI * td / config.wind_rotation_days + wind_phase;
        let gyre = config.gyre_strength * (2.0 * PI * td / config.gyre_period_days).cos();
        let amp = config.wind_noise / NOISE_MODES as f64;

        let mut wind_u = vec![0.0f32; n];
        let mut wind_v = vec![0.0f32; n];
        let mut siv_u = vec![0.0f32; n];
        let mut siv_v = vec![0.0f32; n];
        for i in 0..n {
            let (x, y) = (xs[i], ys[i]);
            let noise = |m: &[(f64, f64, f64); NOISE_MODES]| {
                m.iter()
                    .map(|(kx, ky, p)| amp * (2.0 * PI * (kx * x + ky * y) + p).sin())
                    .sum::<f64>()
            };
            let wu = config.wind_speed * synoptic.cos() - gyre * (PI * x).sin() * (PI * y).cos() + noise(&modes.phase_u);
            let wv = config.wind_speed * synoptic.sin() + gyre * (PI * x).cos() * (PI * y).sin() + noise(&modes.phase_v);
            wind_u[i] = wu as f32;
            wind_v[i] = wv as f32;
            if ocean[i] && f64::from(sic[i]) >= OPEN_WATER_SIC {
                siv_u[i] = (config.drift_factor * (wu * cos_t + wv * sin_t)) as f32;
                siv_v[i] = (config.drift_factor * (-wu * sin_t + wv * cos_t)) as f32;
            }
        }

        let doy = f64::from(date.ordinal0());
        let season = -(2.0 * PI * (doy - 15.0) / 365.25).cos();
        let t2m: Vec<f32> = (0..n)
            .map(|i| {
                let merid = config.t2m_meridional_range * (0.5 - ys[i]);
                let noise = config.t2m_noise * rng.gen_range(-1.0..1.0);
                (config.t2m_mean + config.t2m_seasonal_amplitude * season + merid + noise) as f32
            })
            .collect();

        let masked = |vals: &[f32]| -> Vec<f32> {
            vals.iter()
                .zip(&ocean)
                .map(|(v, o)| if *o { *v } else { f32::NAN })
                .collect()
        };
        let mut fields = BTreeMap::new();
        for (var, vals) in [
            (Variable::SivU, masked(&siv_u)),
            (Variable::SivV, masked(&siv_v)),
            (Variable::Sic, masked(&sic)),
            (Variable::T2m, t2m.clone()),
            (Variable::WindU, wind_u),
            (Variable::WindV, wind_v),
        ] {
            fields.insert(var, GridField::from_values(geometry.clone(), var, date, vals)?);
        }
        days.insert(date, fields);

        if t + 1 < config.days {
            let advected = donor_cell_step(&sic, &siv_u, &siv_v, &ocean, h, w, config.cell_size_km);
            let mut added = vec![0.0f64; n];
            for i in 0..n {
                if !ocean[i] {
                    continue;
                }
                let thermo = (config.growth_rate * (config.freezing_point - f64::from(t2m[i])))
                    .clamp(-config.max_source, config.max_source);
                let next = (advected[i] + thermo).clamp(0.0, 1.0) as f32;
                added[i] = f64::from(next) - advected[i];
                sic[i] = next;
            }
            source.push(added);
        }
    }

    Ok(SynthScenario {
        config: config.clone(),
        coast,
        days,
        source,
    })
}

/// One explicit donor-cell advection step with a one-day time step. Face
/// velocities average the two adjacent cells; faces touching land or the
/// grid edge carry no flux.
fn donor_cell_step(a: &[f32], u: &[f32], v: &[f32], ocean: &[bool], h: usize, w: usize, dx: f64) -> Vec<f64> {
    let at = |i: usize| f64::from(a[i]);
    let mut out: Vec<f64> = a.iter().map(|x| f64::from(*x)).collect();
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !ocean[i] {
                continue;
            }
            // eastward flux through the east face
            if c + 1 < w && ocean[i + 1] {
                let uf = 0.5 * (f64::from(u[i]) + f64::from(u[i + 1])) / dx;
                let flux = if uf > 0.0 { uf * at(i) } else { uf * at(i + 1) };
                out[i] -= flux;
                out[i + 1] += flux;
            }
            // northward flux through the north face (toward row r - 1)
            if r > 0 && ocean[i - w] {
                let vf = 0.5 * (f64::from(v[i]) + f64::from(v[i - w])) / dx;
                let flux = if vf > 0.0 { vf * at(i) } else { vf * at(i - w) };
                out[i] -= flux;
                out[i - w] += flux;
            }
        }
    }
    out
}
