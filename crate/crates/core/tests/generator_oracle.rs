use fieldroad::dynamics::trajectory_rng;
use fieldroad::generator_exact::{
    bernoulli_measure, forward_solve, forward_solve_rk, product_measure, GeneratorParts, MeasureVector, StateSpace,
};
use fieldroad::{LatticeGeom, ModelParams};
use proptest::prelude::*;
use rand::Rng;

fn occupation_means(space: &StateSpace, mu: &MeasureVector<f64>) -> (Vec<f64>, Vec<f64>) {
    let g = space.geometry();
    let mut field = vec![0.0; g.bulk_len()];
    let mut road = vec![0.0; g.road_len()];
    for (s, &w) in mu.0.iter().enumerate() {
        let c = space.decode(s);
        for (a, &e) in field.iter_mut().zip(&c.eta) {
            *a += w * e as f64;
        }
        for (a, &x) in road.iter_mut().zip(&c.xi) {
            *a += w * x as f64;
        }
    }
    (field, road)
}

/// Right-hand side of the closed linear system for one-site means.
fn mean_rhs(geom: &LatticeGeom, m: &ModelParams, rho: &[f64], r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = geom.n() as f64;
    let mut drho = vec![0.0; rho.len()];
    let mut dr = vec![0.0; r.len()];
    for &(a, b) in geom.field_edges() {
        let flux = n * n * m.d * (rho[b as usize] - rho[a as usize]);
        drho[a as usize] += flux;
        drho[b as usize] -= flux;
    }
    for &(a, b) in geom.road_edges() {
        let flux = n * n * m.road_d * (r[b as usize] - r[a as usize]);
        dr[a as usize] += flux;
        dr[b as usize] -= flux;
    }
    for i in geom.lower_sites() {
        drho[i] += n * m.alpha * (r[i] - rho[i]);
        dr[i] += m.alpha * (rho[i] - r[i]);
    }
    for s in geom.upper_sites() {
        drho[s] += m.b - rho[s];
    }
    (drho, dr)
}

fn rk4_means(geom: &LatticeGeom, m: &ModelParams, mut rho: Vec<f64>, mut r: Vec<f64>, t: f64) -> (Vec<f64>, Vec<f64>) {
    let steps = 20_000;
    let h = t / steps as f64;
    let axpy = |x: &[f64], k: &[f64], c: f64| x.iter().zip(k).map(|(a, b)| a + c * b).collect::<Vec<_>>();
    for _ in 0..steps {
        let (a1, b1) = mean_rhs(geom, m, &rho, &r);
        let (a2, b2) = mean_rhs(geom, m, &axpy(&rho, &a1, h / 2.0), &axpy(&r, &b1, h / 2.0));
        let (a3, b3) = mean_rhs(geom, m, &axpy(&rho, &a2, h / 2.0), &axpy(&r, &b2, h / 2.0));
        let (a4, b4) = mean_rhs(geom, m, &axpy(&rho, &a3, h), &axpy(&r, &b3, h));
        for i in 0..rho.len() {
            rho[i] += h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
        }
        for i in 0..r.len() {
            r[i] += h / 6.0 * (b1[i] + 2.0 * b2[i] + 2.0 * b3[i] + b4[i]);
        }
    }
    (rho, r)
}

/// One-site marginals of the exact law follow the linear mean equations.
#[test]
fn exact_means_follow_linear_equations() {
    let geom = LatticeGeom::new(2, 3).unwrap();
    let space = StateSpace::new(&geom).unwrap();
    let model = ModelParams::new(0.7, 1.3, 2.0, 0.8).unwrap();
    let gen = GeneratorParts::<f64>::new(&space, &model).unwrap();
    let mut rng = trajectory_rng(11, 0);
    let pf: Vec<f64> = (0..geom.bulk_len()).map(|_| rng.random()).collect();
    let pr: Vec<f64> = (0..geom.road_len()).map(|_| rng.random()).collect();
    let mu0 = product_measure(&space, &pf, &pr).unwrap();
    for t in [0.01, 0.05, 0.2] {
        let exact = forward_solve(&gen, &mu0, t).unwrap();
        let (rho, r) = occupation_means(&space, &exact.measure);
        let (rho_ode, r_ode) = rk4_means(&geom, &model, pf.clone(), pr.clone(), t);
        for (a, b) in rho.iter().chain(&r).zip(rho_ode.iter().chain(&r_ode)) {
            assert!((a - b).abs() < 1e-9, "t = {t}: {a} vs {b}");
        }
    }
}

#[test]
fn uniformization_agrees_with_runge_kutta() {
    for n in [3, 4] {
        let geom = LatticeGeom::new(2, n).unwrap();
        let space = StateSpace::new(&geom).unwrap();
        let gen = GeneratorParts::<f64>::new(&space, &ModelParams::new(1.0, 2.0, 1.5, 0.3).unwrap()).unwrap();
        let mu0 = MeasureVector::dirac(&space, space.len() / 3);
        let a = forward_solve(&gen, &mu0, 0.07).unwrap();
        let b = forward_solve_rk(&gen, &mu0, 0.07, 1e-11).unwrap();
        assert!(a.measure.total_variation(&b.0) < 1e-8, "N = {n}");
        assert!(!a.drift_flag);
    }
}

/// `b = 1` with everything occupied is absorbing.
#[test]
fn full_state_absorbs_when_reservoir_only_births() {
    let geom = LatticeGeom::new(2, 3).unwrap();
    let space = StateSpace::new(&geom).unwrap();
    let gen = GeneratorParts::<f64>::new(&space, &ModelParams::new(1.0, 1.0, 1.0, 1.0).unwrap()).unwrap();
    let full = space.len() - 1;
    let mu = forward_solve(&gen, &MeasureVector::dirac(&space, full), 0.3).unwrap().measure;
    assert!((mu.0[full] - 1.0).abs() < 1e-12);
    assert!(bernoulli_measure(&space, 1.0f64).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The forward law stays a probability vector for any product start.
    #[test]
    fn forward_law_is_a_probability(
        probs in proptest::collection::vec(0.0f64..=1.0, 9),
        t in 0.0f64..0.5,
        b in 0.0f64..=1.0,
    ) {
        let geom = LatticeGeom::new(2, 3).unwrap();
        let space = StateSpace::new(&geom).unwrap();
        let gen = GeneratorParts::<f64>::new(&space, &ModelParams::new(1.0, 1.0, 1.0, b).unwrap()).unwrap();
        let mu0 = product_measure(&space, &probs[..6], &probs[6..]).unwrap();
        let sol = forward_solve(&gen, &mu0, t).unwrap();
        prop_assert!((sol.measure.total() - 1.0).abs() < 1e-12);
        prop_assert!(sol.measure.0.iter().all(|&w| w >= -1e-15));
        prop_assert!(sol.mass_drift < 1e-9);
    }

    #[test]
    fn encode_decode_round_trip(s in 0usize..512) {
        let geom = LatticeGeom::new(2, 3).unwrap();
        let space = StateSpace::new(&geom).unwrap();
        prop_assert_eq!(space.encode(&space.decode(s)), s);
    }
}
