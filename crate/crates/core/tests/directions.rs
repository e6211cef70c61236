use latent_lexicon::directions::{
    generate_lsd_set, generate_lsd_sets, optimize_lsd, pca_baseline_directions, LsdSchedule,
    OptimizerOptions,
};
use latent_lexicon::generator::{SyntheticWorld, WorldConfig};
use latent_lexicon::numerics::{dot, project_orthonormal, Vector};
use latent_lexicon::rng::{derive_indexed, gaussian_vector, seeded};
use proptest::prelude::*;

fn world(epsilon: f64) -> SyntheticWorld {
    SyntheticWorld::build(WorldConfig {
        epsilon,
        ..WorldConfig::default()
    })
    .unwrap()
}

#[test]
fn default_schedule_over_several_z() {
    let w = world(0.1);
    let zs: Vec<(Vector, u64)> = (0..4)
        .map(|i| {
            let s = derive_indexed(17, "z", i);
            (gaussian_vector(&mut seeded(s), 32), s)
        })
        .collect();
    let t = std::time::Instant::now();
    let sets = generate_lsd_sets(&w, &zs, 0, &LsdSchedule::default()).unwrap();
    eprintln!("4 z: {:?}", t.elapsed());
    for set in &sets {
        assert_eq!(set.directions.len(), 20);
        for (i, a) in set.directions.iter().enumerate() {
            assert!((a.norm() - 1.0).abs() <= 1e-9);
            for b in &set.directions[..i] {
                assert!(dot(&a.vector, &b.vector).abs() <= 1e-8);
            }
        }
        for &(init, fin) in &set.losses {
            assert!(fin <= init);
        }
    }
}

#[test]
fn pca_on_attribute_layer_stays_near_planted_span() {
    // With no perturbation the attributes depend on z only through its
    // projections onto the planted directions; the orthogonal part enters
    // the regression as pure sampling noise of order 1/sqrt(samples).
    let w = world(0.0);
    let planted: Vec<Vector> = (0..8).map(|k| w.planted_direction(k).to_vec()).collect();
    let mut basis: Vec<Vector> = Vec::new();
    for u in &planted {
        basis.push(project_orthonormal(u, &basis).unwrap());
    }
    for samples in [400usize, 6400] {
        let dirs = pca_baseline_directions(&w, 0, 3, samples, &[2], 5).unwrap();
        let worst = dirs
            .iter()
            .map(|d| {
                let in_span: f64 = basis.iter().map(|b| dot(&d.vector, b).powi(2)).sum();
                (1.0 - in_span).max(0.0).sqrt()
            })
            .fold(0.0, f64::max);
        let bound = 6.0 * (32.0f64 / samples as f64).sqrt();
        assert!(worst <= bound, "samples {samples}: residual {worst} > {bound}");
    }
}

#[test]
fn pca_leading_direction_is_seed_stable() {
    // Two concepts, the second masked in class 1: its attribute is pinned
    // near zero, so class-1 attribute features vary along one axis.
    let w = SyntheticWorld::build(WorldConfig {
        epsilon: 0.0,
        concept_count: 2,
        class_count: 2,
        concept_tokens: vec!["sunlight".into(), "mountain".into()],
        class_mask: Some(vec![vec![true, true], vec![true, false]]),
        class_names: Some(vec!["lake".into(), "kitchen".into()]),
        ..WorldConfig::default()
    })
    .unwrap();
    let runs: Vec<_> = (1..=3)
        .map(|seed| pca_baseline_directions(&w, 1, 1, 4000, &[2], seed).unwrap())
        .collect();
    for r in &runs[1..] {
        let c = dot(&runs[0][0].vector, &r[0].vector).abs();
        assert!(c >= 0.99, "|cos| = {c}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn optimizer_contract(seed in any::<u64>(), layer in 0usize..4, n_basis in 0usize..6) {
        let w = world(0.1);
        let mut rng = seeded(seed);
        let z = gaussian_vector(&mut rng, 32);
        let mut basis: Vec<Vector> = Vec::new();
        for _ in 0..n_basis {
            let v = gaussian_vector(&mut rng, 32);
            basis.push(project_orthonormal(&v, &basis).unwrap());
        }
        let opts = OptimizerOptions { max_iterations: 60, ..OptimizerOptions::default() };
        let out = optimize_lsd(&w, &z, 1, layer, &basis, &opts, seed ^ 1).unwrap();
        prop_assert!((out.direction.norm() - 1.0).abs() <= 1e-9);
        for b in &basis {
            prop_assert!(dot(&out.direction.vector, b).abs() <= 1e-8);
        }
        for pair in out.loss_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0]);
        }
        prop_assert!(out.final_loss <= out.initial_loss);
    }

    #[test]
    fn schedule_totals_are_exact(per in 0usize..3, extra in 0usize..4, seed in any::<u64>()) {
        let w = world(0.1);
        let schedule = LsdSchedule {
            per_layer: vec![(3, per), (1, per)],
            extra_orthogonal: extra,
            optimizer: OptimizerOptions { max_iterations: 20, ..OptimizerOptions::default() },
        };
        let z = gaussian_vector(&mut seeded(seed), 32);
        let set = generate_lsd_set(&w, &z, 0, &schedule, seed).unwrap();
        prop_assert_eq!(set.directions.len(), schedule.total());
    }
}
