use chrono::{Days, NaiveDate};
use log::debug;

use super::{DailyFields, DataError, NormalizationSpec};
use crate::grid::{CoastMask, GridGeometry, Variable};

/// Days of history stacked into one input.
pub const INPUT_DAYS: usize = 3;
/// `INPUT_DAYS` days x six variables.
pub const INPUT_CHANNELS: usize = INPUT_DAYS * Variable::ALL.len();
/// Target `u`, `v` (normalized) and SIC (fraction).
pub const TARGET_CHANNELS: usize = 3;

/// One training example.
///
/// `input` is `(18, H, W)` ordered `[day-2, day-1, day0] x [u, v, A, T, wind_u,
/// wind_v]`, every channel normalized to `[-1, 1]` with invalid cells set to
/// zero. `target` is `(3, H, W)` holding normalized `u`, `v` and SIC as a
/// fraction; `target_siv_kmday` keeps the raw drift for evaluation.
#[derive(Debug, Clone)]
pub struct SampleWindow {
    pub date: NaiveDate,
    pub geometry: GridGeometry,
    pub input: Vec<f32>,
    pub target: Vec<f32>,
    pub target_siv_kmday: Vec<f32>,
    pub prev_sic: Vec<f32>,
    pub valid: Vec<bool>,
}

impl SampleWindow {
    pub fn cells(&self) -> usize {
        self.geometry.cells()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

fn day_offset(date: NaiveDate, back: u64) -> Option<NaiveDate> {
    date.checked_sub_days(Days::new(back))
}

/// One window per target date whose three preceding days carry all six
/// variables and whose target day carries drift and concentration.
/// Inadmissible dates are skipped.
pub fn build_windows(
    days: &DailyFields,
    coast: &CoastMask,
    spec: &NormalizationSpec,
) -> Result<Vec<SampleWindow>, DataError> {
    let geometry = coast.geometry().clone();
    for (date, fields) in days {
        for f in fields.values() {
            if !f.geometry().compatible(&geometry) {
                return Err(DataError::GeometryMismatch(format!(
                    "{} on {date} is {}x{}, coast mask is {}x{}",
                    f.variable(),
                    f.geometry().height,
                    f.geometry().width,
                    geometry.height,
                    geometry.width
                )));
            }
        }
    }

    let mut windows = Vec::new();
    for &target_day in days.keys() {
        match build_one(days, coast, spec, &geometry, target_day)? {
            Some(w) => windows.push(w),
            None => debug!("skipping {target_day}: incomplete inputs or target"),
        }
    }
    Ok(windows)
}

fn build_one(
    days: &DailyFields,
    coast: &CoastMask,
    spec: &NormalizationSpec,
    geometry: &GridGeometry,
    target_day: NaiveDate,
) -> Result<Option<SampleWindow>, DataError> {
    let cells = geometry.cells();
    let Some(target) = days.get(&target_day) else {
        return Ok(None);
    };
    let (Some(tu), Some(tv), Some(ta)) = (
        target.get(&Variable::SivU),
        target.get(&Variable::SivV),
        target.get(&Variable::Sic),
    ) else {
        return Ok(None);
    };

    let mut input_days = Vec::with_capacity(INPUT_DAYS);
    for back in (1..=INPUT_DAYS as u64).rev() {
        let Some(fields) = day_offset(target_day, back).and_then(|d| days.get(&d)) else {
            return Ok(None);
        };
        if Variable::ALL.iter().any(|v| !fields.contains_key(v)) {
            return Ok(None);
        }
        input_days.push(fields);
    }

    let mut valid: Vec<bool> = coast.near_coast().iter().map(|c| !c).collect();
    let mut input = Vec::with_capacity(INPUT_CHANNELS * cells);
    for fields in &input_days {
        for var in Variable::ALL {
            let f = &fields[&var];
            let norm = spec.normalize(f)?;
            for (ok, fv) in valid.iter_mut().zip(f.valid()) {
                *ok &= *fv;
            }
            input.extend(norm.into_iter().map(|v| if v.is_nan() { 0.0 } else { v }));
        }
    }
    for f in [tu, tv, ta] {
        for (ok, fv) in valid.iter_mut().zip(f.valid()) {
            *ok &= *fv;
        }
    }

    let mut target_vals = Vec::with_capacity(TARGET_CHANNELS * cells);
    for f in [tu, tv] {
        let norm = spec.normalize(f)?;
        target_vals.extend(norm.into_iter().map(|v| if v.is_nan() { 0.0 } else { v }));
    }
    target_vals.extend(ta.values().iter().map(|v| if v.is_nan() { 0.0 } else { *v }));
    let mut target_siv_kmday: Vec<f32> = tu.values().to_vec();
    target_siv_kmday.extend_from_slice(tv.values());

    let prev = &input_days[INPUT_DAYS - 1][&Variable::Sic];
    let prev_sic = prev.values().iter().map(|v| if v.is_nan() { 0.0 } else { *v }).collect();

    Ok(Some(SampleWindow {
        date: target_day,
        geometry: geometry.clone(),
        input,
        target: target_vals,
        target_siv_kmday,
        prev_sic,
        valid,
    }))
}
