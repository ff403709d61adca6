use fieldroad::dynamics::trajectory_rng;
use fieldroad::empirical::{pair_field, pair_road, Boundary, CoarseGrid, ReplacementTracker, ReplacementWeights};
use fieldroad::testfn::{FieldMode, TestFunctionPair, TimeFactor};
use fieldroad::{Configuration, LatticeGeom, ModelParams, Simulator};
use proptest::prelude::*;
use rand::Rng;

fn random_config(geom: &LatticeGeom, seed: u64) -> Configuration {
    let mut rng = trajectory_rng(seed, 0);
    Configuration {
        eta: (0..geom.bulk_len()).map(|_| rng.random::<bool>() as u8).collect(),
        xi: (0..geom.road_len()).map(|_| rng.random::<bool>() as u8).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Coarse densities are cell averages: they lie in [0, 1], vanish on the
    /// empty state, equal one on the full state, and the count-weighted
    /// total recovers the particle number.
    #[test]
    fn coarse_density_is_an_average(p in 2usize..4, n in 8usize..13, bins in 1usize..4, seed in any::<u64>()) {
        let geom = LatticeGeom::new(p, n).unwrap();
        let grid = CoarseGrid::new(&geom, bins).unwrap();
        prop_assert!(grid.density(&Configuration::empty(&geom)).field.iter().all(|&v| v == 0.0));
        prop_assert!(grid.density(&Configuration::full(&geom)).road.iter().all(|&v| v == 1.0));
        let c = random_config(&geom, seed);
        let d = grid.density(&c);
        prop_assert!(d.field.iter().chain(&d.road).all(|&v| (0.0..=1.0).contains(&v)));
        let field_total: f64 = d.field.iter().zip(grid.field_counts()).map(|(v, &k)| v * k as f64).sum();
        let road_total: f64 = d.road.iter().zip(grid.road_counts()).map(|(v, &k)| v * k as f64).sum();
        let (nf, nr) = c.total_particles();
        prop_assert!((field_total - nf as f64).abs() < 1e-9);
        prop_assert!((road_total - nr as f64).abs() < 1e-9);
        let proj = grid.project(|_, _| 0.3, |_| 0.7);
        prop_assert!(proj.field.iter().all(|&v| (v - 0.3).abs() < 1e-14));
        prop_assert!(proj.road.iter().all(|&v| (v - 0.7).abs() < 1e-14));
    }

    /// Pairings are additive over disjoint particle sets.
    #[test]
    fn pairing_is_additive(n in 4usize..10, seed in any::<u64>(), t in 0.0f64..1.0) {
        let geom = LatticeGeom::new(2, n).unwrap();
        let pair = TestFunctionPair::fourier(vec![1], 1, 1.0, 0.5, 2.0);
        let c = random_config(&geom, seed);
        let mut a = Configuration::empty(&geom);
        let mut b = Configuration::empty(&geom);
        for (s, &e) in c.eta.iter().enumerate() {
            if s % 2 == 0 { a.eta[s] = e } else { b.eta[s] = e }
        }
        for (i, &x) in c.xi.iter().enumerate() {
            if i % 2 == 0 { a.xi[i] = x } else { b.xi[i] = x }
        }
        let f = |c: &Configuration| (pair_field(c, &pair, t, &geom), pair_road(c, &pair, t, &geom));
        let (fc, rc) = f(&c);
        let (fa, ra) = f(&a);
        let (fb, rb) = f(&b);
        prop_assert!((fc - fa - fb).abs() < 1e-12);
        prop_assert!((rc - ra - rb).abs() < 1e-12);
        prop_assert_eq!(f(&Configuration::empty(&geom)), (0.0, 0.0));
    }
}

/// Starting full with only births, every box average equals the site value,
/// so the replacement integral vanishes up to roundoff.
#[test]
fn replacement_vanishes_on_frozen_full_state() {
    let geom = LatticeGeom::new(2, 16).unwrap();
    let sim = Simulator::new(ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap(), geom.clone()).unwrap();
    let g = FieldMode::constant(1.0, 2);
    for boundary in [Boundary::Lower, Boundary::Upper] {
        let w = ReplacementWeights::new(&geom, &g, TimeFactor::one(), 0.2, boundary).unwrap();
        let init = Configuration::full(&geom);
        let mut tr = ReplacementTracker::new(&w, &init).unwrap();
        let mut rng = trajectory_rng(3, 0);
        sim.run(&init, 0.05, &[], &mut rng, |t, ev, after| {
            tr.on_event(t, ev, after);
            Ok(())
        })
        .unwrap();
        assert!(tr.finish(0.05).abs() < 1e-13);
    }
}
