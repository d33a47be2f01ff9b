use super::*;
use crate::surrogate::tests::synthetic_set;
use crate::surrogate::TrainConfig;
use proptest::prelude::*;
use std::sync::OnceLock;

fn model() -> &'static SurrogateModel {
    static MODEL: OnceLock<SurrogateModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let set = synthetic_set(600);
        SurrogateModel::train(&set, &TrainConfig { hidden: 6, max_epochs: 30, ..Default::default() }).unwrap()
    })
}

fn with_ctx<T>(f: impl FnOnce(&StudyContext) -> T) -> T {
    let reference = ReferencePlate::violin();
    let options = NelderMeadOptions::default();
    let oracle = OracleConfig::default();
    let ctx =
        StudyContext { reference: &reference, model: model(), options: &options, oracle: &oracle, workers: 0, seed: 5 };
    f(&ctx)
}

#[test]
fn wave_speed_of_reference_spruce() {
    assert!((wave_speed(400.0, 10.8e9) - 5196.152422706632).abs() < 1e-9);
    assert_eq!(wave_speed(1.0, 1.0), 1.0);
}

proptest! {
    #[test]
    fn wave_speed_is_scale_invariant(rho in 100.0f64..1000.0, e in 1e9f64..2e10, k in 0.1f64..10.0) {
        let a = wave_speed(rho, e);
        let b = wave_speed(rho * k * k, e * k * k);
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }
}

#[test]
fn linear_fit_on_exact_line() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
    let fit = linear_fit(&x, &y);
    assert!((fit.slope + 2.0).abs() < 1e-12 && (fit.intercept - 3.0).abs() < 1e-12);
    assert!((fit.r + 1.0).abs() < 1e-12 && (fit.r_squared - 1.0).abs() < 1e-12);
    let fit = linear_fit(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.5]);
    assert!((fit.r_squared - 0.25).abs() < 1e-12);
}

#[test]
fn grid_scales_cover_ten_percent_in_two_percent_steps() {
    let s = grid_scales();
    assert_eq!(s.len(), 11);
    assert!((s[0] - 0.9).abs() < 1e-12 && (s[10] - 1.1).abs() < 1e-12 && (s[5] - 1.0).abs() < 1e-12);
    assert!(s.windows(2).all(|w| (w[1] - w[0] - 0.02).abs() < 1e-12));
}

#[test]
fn zero_sigma_equivalence_gives_zero_error() {
    let report = with_ctx(|ctx| study_equivalence(ctx, &[0.0], 2)).unwrap();
    assert_eq!(report.rows.len(), 8);
    assert!(report.rows.iter().all(|r| r.baseline == 0.0 && r.optimized == 0.0));
}

#[test]
fn equivalence_aggregates_match_rows_and_improve() {
    let report = with_ctx(|ctx| study_equivalence(ctx, &[0.05], 3)).unwrap();
    assert_eq!(report.aggregates, EquivalenceReport::recompute(&report.rows));
    for a in &report.aggregates {
        let opt: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.compensation == a.key.compensation && r.error == a.key.error)
            .map(|r| r.optimized)
            .collect();
        assert!((a.mean - mean(&opt)).abs() <= 1e-12);
        assert!(a.mean <= a.baseline_mean);
    }
    // Both error functions see the same perturbed design.
    let b: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.replicate == 0 && r.compensation == Compensation::Outline)
        .map(|r| r.baseline)
        .collect();
    assert_eq!(b.len(), 2);
    let again = with_ctx(|ctx| study_equivalence(ctx, &[0.05], 3)).unwrap();
    assert_eq!(again, report);
}

#[test]
fn zero_sigma_material_gives_zero_error() {
    let report = with_ctx(|ctx| study_material(ctx, 0.0, 1)).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.rows.iter().all(|r| r.optimized == 0.0));
    assert!(report.baseline_mean == 0.0);
}

#[test]
fn material_rows_stay_in_box() {
    let report = with_ctx(|ctx| study_material(ctx, 0.2, 2)).unwrap();
    let reference = ReferencePlate::violin().params();
    for r in &report.rows {
        let mut start = r.params;
        start.outline = reference.outline;
        start.thickness = reference.thickness;
        assert!(within_box(&start, &r.params, &r.free.vars()));
        assert_eq!(r.params.material, report.rows[r.replicate * 3].params.material);
        assert!(r.optimized <= r.baseline);
    }
    assert_eq!(report.aggregates, MaterialReport::recompute(&report.rows));
}

#[test]
fn single_mode_targets_strictly_improve() {
    let report = with_ctx(|ctx| study_single_modes(ctx, MODE_SHIFT)).unwrap();
    assert_eq!(report.rows.len(), 20);
    for r in &report.rows {
        assert!(r.final_gap < r.start_gap, "mode {} sign {}: {} vs {}", r.mode, r.sign, r.final_gap, r.start_gap);
        assert!(r.evaluations <= 200 * OUTLINE_DIM);
    }
    let mut ranked = report.ranking.clone();
    ranked.sort();
    assert_eq!(ranked, (1..=10).collect::<Vec<_>>());
}

#[test]
fn zero_shift_is_a_no_op() {
    let report = with_ctx(|ctx| study_single_modes(ctx, 0.0)).unwrap();
    assert!(report.rows.iter().all(|r| r.displacement_mm == 0.0 && r.final_gap == 0.0));
}

#[test]
fn small_grid_centre_and_report_files() {
    let scales = [0.9, 1.0, 1.1];
    let report = with_ctx(|ctx| study_density_modulus_grid(ctx, &scales)).unwrap();
    assert_eq!(report.cells.len(), 9);
    assert_eq!(report.cell(1, 1).optimized, 0.0);
    assert!(report.cell(1, 1).area_change.abs() < 1e-12);
    for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
        assert!(report.cell(i, j).baseline > 0.0);
    }
    let dir = tempfile::tempdir().unwrap();
    let paths = write_report(&report, &ReferencePlate::violin(), dir.path()).unwrap();
    assert_eq!(paths.len(), 3);
    let csv = std::fs::read_to_string(&paths[1]).unwrap();
    assert_eq!(csv.lines().count(), 10);
    let outlines: Vec<OutlineArtifact> = serde_json::from_str(&std::fs::read_to_string(&paths[2]).unwrap()).unwrap();
    assert_eq!(outlines.len(), 10);
    let back: GridReport = serde_json::from_str(&std::fs::read_to_string(&paths[0]).unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn study_names_parse() {
    assert_eq!(StudyName::parse("single-modes").unwrap(), StudyName::SingleModes);
    assert!(StudyName::parse("nope").is_err());
}
