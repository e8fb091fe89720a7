use proptest::prelude::*;
use proxynn_core::landscape::InverseProblem;
use proxynn_core::optimize::{
    bfgs, bfgs_baseline, gradient_descent, two_step_with, BfgsOptions, FnObjective, GdOptions, GroundTruthObjective,
    Objective, OptTrace, Stage, VALUE_NOISE,
};
use proxynn_core::simulators::analytic::{rastrigin, rastrigin_gradient};
use proxynn_core::simulators::{Bounds, BurgersSpec, SystemSpec};

fn descends(trace: &OptTrace) -> bool {
    trace
        .iterates
        .windows(2)
        .all(|w| w[1].value < w[0].value || w[1].value <= w[0].value + VALUE_NOISE * w[0].value.abs())
}

fn inside(trace: &OptTrace, b: &Bounds) -> bool {
    trace.iterates.iter().all(|it| b.contains(&it.x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bfgs_descends_and_stays_in_box(x0 in -5.12..5.12f64, x1 in -5.12..5.12f64) {
        let b = Bounds::uniform(2, -5.12, 5.12).unwrap();
        let obj = FnObjective::with_gradient(b.clone(), |x: &[f64]| Ok(rastrigin(x)), |x: &[f64]| Ok(rastrigin_gradient(x)));
        let t = bfgs(&obj, &[x0, x1], &BfgsOptions::default(), Stage::Baseline).unwrap();
        prop_assert!(descends(&t));
        prop_assert!(inside(&t, &b));
    }

    #[test]
    fn gd_descends_and_stays_in_box(x0 in -5.12..5.12f64, lr in 1e-4..5e-3f64) {
        let b = Bounds::uniform(1, -5.12, 5.12).unwrap();
        let obj = FnObjective::with_gradient(b.clone(), |x: &[f64]| Ok(rastrigin(x)), |x: &[f64]| Ok(rastrigin_gradient(x)));
        let opts = GdOptions { learning_rate: lr, ..GdOptions::default() };
        let t = gradient_descent(&obj, &[x0], &opts, Stage::Baseline).unwrap();
        prop_assert!(t.iterates.windows(2).all(|w| w[1].value < w[0].value));
        prop_assert!(inside(&t, &b));
    }

    #[test]
    fn secondary_stage_never_worsens(x0 in -1.0..3.0f64, shift in -0.5..0.5f64) {
        let b = Bounds::uniform(1, -1.0, 3.0).unwrap();
        let truth = FnObjective::new(b.clone(), |x: &[f64]| Ok(SystemSpec::GramacyLee.analytic_value(x)? + 1.0));
        let proxy = FnObjective::new(b, move |x: &[f64]| Ok((x[0] - 1.0 - shift).powi(2)));
        let r = two_step_with(&proxy, &truth, &[x0], &BfgsOptions::default()).unwrap();
        let secondary = r.secondary_trace.as_ref().unwrap();
        prop_assert!(secondary.last().value <= secondary.iterates[0].value + 1e-12);
    }
}

#[test]
fn burgers_bfgs_on_ground_truth_recovers_viscosity() {
    let system = SystemSpec::Burgers(BurgersSpec::default());
    let problem = InverseProblem::generate(&system, 4, 0).unwrap();
    let x0 = problem.true_params.iter().map(|v| v * 1.2).collect::<Vec<_>>();
    let r = bfgs_baseline(&problem, &x0, &BfgsOptions::default()).unwrap();
    let t = &r.primary_trace;
    assert!(descends(t));
    assert!(
        (r.x_predicted[0] - problem.true_params[0]).abs() < 1e-3 * problem.true_params[0].max(0.01),
        "{:?} vs {:?}",
        r.x_predicted,
        problem.true_params
    );
    assert!(GroundTruthObjective::new(&problem).bounds().contains(&r.x_predicted));
}
