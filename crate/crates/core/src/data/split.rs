use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, SampleWindow};

/// Inclusive train and test date ranges plus the training subsampling ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub ratio: f64,
    pub seed: u64,
}

impl SplitPlan {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.train_start > self.train_end || self.test_start > self.test_end {
            return Err(DataError::Config("split ranges must have start <= end".into()));
        }
        if self.train_start <= self.test_end && self.test_start <= self.train_end {
            return Err(DataError::Config(format!(
                "train range {}..={} overlaps test range {}..={}",
                self.train_start, self.train_end, self.test_start, self.test_end
            )));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(DataError::Config(format!("sampling ratio {} must lie in (0, 1]", self.ratio)));
        }
        Ok(())
    }

    pub fn in_train(&self, d: NaiveDate) -> bool {
        (self.train_start..=self.train_end).contains(&d)
    }

    pub fn in_test(&self, d: NaiveDate) -> bool {
        (self.test_start..=self.test_end).contains(&d)
    }

    /// Number of training windows kept out of `n`: `round(ratio * n)`, at least one.
    pub fn sample_size(&self, n: usize) -> usize {
        ((self.ratio * n as f64).round() as usize).clamp(1.min(n), n)
    }
}

/// Training windows are subsampled uniformly without replacement (kept in
/// date order); the test set is every window in the test range.
pub fn split_and_sample(
    windows: Vec<SampleWindow>,
    plan: &SplitPlan,
) -> Result<(Vec<SampleWindow>, Vec<SampleWindow>), DataError> {
    plan.validate()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for w in windows {
        if plan.in_train(w.date) {
            train.push(w);
        } else if plan.in_test(w.date) {
            test.push(w);
        }
    }
    if train.is_empty() {
        return Err(DataError::EmptySet(format!(
            "no windows in train range {}..={}",
            plan.train_start, plan.train_end
        )));
    }
    if test.is_empty() {
        return Err(DataError::EmptySet(format!(
            "no windows in test range {}..={}",
            plan.test_start, plan.test_end
        )));
    }

    let k = plan.sample_size(train.len());
    if k < train.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        let mut keep = rand::seq::index::sample(&mut rng, train.len(), k).into_vec();
        keep.sort_unstable();
        let mut it = keep.into_iter().peekable();
        train = train
            .into_iter()
            .enumerate()
            .filter_map(|(i, w)| {
                if it.peek() == Some(&i) {
                    it.next();
                    Some(w)
                } else {
                    None
                }
            })
            .collect();
    }
    Ok((train, test))
}
