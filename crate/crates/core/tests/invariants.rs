use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use oppcharge::heuristic3s::{run_3s, run_once, HeuristicConfig};
use oppcharge::model::{Instance, InstanceFile};
use oppcharge::oracle::{random_toy, ToySize};
use oppcharge::simulate::{hourly_charging_histogram, replay, ScenarioTransform};

fn toy(seed: u64, buses: usize, trips: usize, chargers: usize) -> Instance {
    Instance::from_file(&random_toy(seed, &ToySize { buses, trips, chargers })).unwrap()
}

#[test]
fn toy_generator_is_frozen() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/toy_seed1.json");
    let frozen = InstanceFile::load(path).unwrap();
    assert_eq!(frozen, random_toy(1, &ToySize::default()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_priorities_give_replayable_plans(
        seed in 0u64..10_000,
        buses in 2usize..4,
        trips in 4usize..9,
        chargers in 1usize..3,
        theta in prop::collection::vec(-2.0f64..2.0, 9),
    ) {
        let inst = toy(seed, buses, trips, chargers);
        let plan = run_once(&inst, &theta[..inst.trips().len()]).unwrap();
        prop_assert!(plan.soc_violation(&inst).0 <= 1e-5);
        let r = replay(&inst, &plan).unwrap();
        assert_abs_diff_eq!(r.total_delay_min, plan.objective, epsilon = 1e-6);
        for i in inst.trip_ids() {
            assert_abs_diff_eq!(r.plugin_min[i.0], plan.plugin_min[i.0], epsilon = 1e-6);
            prop_assert!(plan.delay_min[i.0] >= 0.0);
        }
        let hist = hourly_charging_histogram(&plan);
        assert_abs_diff_eq!(hist.iter().sum::<f64>(), plan.total_charge_min(), epsilon = 1e-6);
    }

    #[test]
    fn more_iterations_never_hurt(seed in 0u64..10_000, trips in 4usize..9) {
        let inst = toy(seed, 2, trips, 1);
        let short = HeuristicConfig { iterations: 8, stop_on_zero: false, ..HeuristicConfig::default() };
        let long = HeuristicConfig { iterations: 40, ..short.clone() };
        let a = run_3s(&inst, &short).unwrap();
        let b = run_3s(&inst, &long).unwrap();
        prop_assert!(b.best.objective <= a.best.objective + 1e-9);
    }

    #[test]
    fn unit_multiplier_is_identity(start in 0.0f64..600.0, len in 1.0f64..300.0, seed in 0u64..1000) {
        let file = random_toy(seed, &ToySize::default());
        let tr = ScenarioTransform::new(start, start + len, 1.0).unwrap();
        prop_assert_eq!(tr.apply_file(&file), file);
    }
}
