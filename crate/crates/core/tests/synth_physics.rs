//! The generator's ground truth, measured with the loss's own stencils.

use icepinn::data::{build_windows, synth_scenario, NormalizationSpec, ScenarioConfig};
use icepinn::physics::{source_term_values, OPEN_WATER_SIC, SOURCE_BOUND};
use icepinn::train::{evaluate_predictions, Prediction};

#[test]
fn observed_days_respect_both_constraints() {
    let cfg = ScenarioConfig {
        days: 120,
        seed: 2,
        ..ScenarioConfig::default()
    };
    let s = synth_scenario(&cfg).unwrap();
    let windows = build_windows(&s.days, &s.coast, &NormalizationSpec::default()).unwrap();
    let mut worst = 0.0f64;
    for w in &windows {
        let hw = w.cells();
        let (u, v) = w.target_siv_kmday.split_at(hw);
        let a = &w.target[2 * hw..];
        let (sa, stencil) = source_term_values(a, &w.prev_sic, u, v, &w.geometry, &w.valid).unwrap();
        for i in (0..hw).filter(|&i| stencil[i]) {
            worst = worst.max(sa[i].abs());
        }
        for i in (0..hw).filter(|&i| w.valid[i] && f64::from(a[i]) < OPEN_WATER_SIC) {
            assert_eq!((u[i], v[i]), (0.0, 0.0), "{} cell {i} drifts in open water", w.date);
        }
    }
    assert!(worst <= SOURCE_BOUND, "worst |S_A| {worst}");

    // so the truth scores a zero violation rate
    let truth: Vec<Prediction> = windows
        .iter()
        .map(|w| {
            let hw = w.cells();
            Prediction {
                date: w.date,
                geometry: w.geometry.clone(),
                u_kmday: w.target_siv_kmday[..hw].to_vec(),
                v_kmday: w.target_siv_kmday[hw..].to_vec(),
                sic: w.target[2 * hw..].to_vec(),
            }
        })
        .collect();
    assert_eq!(evaluate_predictions(&truth, &windows).unwrap().violation_rate, 0.0);
}
