mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rawls_core::eval::evaluate;
use rawls_core::oracle::{
    brute_force_rawls, dual_classifier, dual_value, error_rate_routes, error_rates, max_error_dual,
    randomized_minimax_p1, DualWeights, FiniteDistribution, TabularClassifier,
};
use rawls_core::{LabeledDataset, ScoreThresholdModel, SubPopId};

fn random_dist(rng: &mut ChaCha8Rng, p: usize, n: usize) -> FiniteDistribution {
    let mut mass: Vec<f64> = (0..n * 2 * p).map(|_| rng.random_range(0.0..1.0)).collect();
    let s: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= s);
    FiniteDistribution::from_dense((0..n).map(|i| format!("x{i}")).collect(), p, mass).unwrap()
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| -rng.random_range(1e-9f64..1.0).ln()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

#[test]
fn unveil_identity_on_random_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for _ in 0..100 {
        let p = rng.random_range(1..=5);
        let n = rng.random_range(1..=8);
        let dist = random_dist(&mut rng, p, n);
        let f = TabularClassifier::new((0..n).map(|_| rng.random_range(0..2u8)).collect()).unwrap();
        let routes = error_rate_routes(&dist, &f).unwrap();
        assert!(routes.max_discrepancy() <= 1e-12);
    }
}

#[test]
fn weak_duality_and_dual_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    for _ in 0..50 {
        let p = rng.random_range(1..=3);
        let n = rng.random_range(1..=7);
        let dist = random_dist(&mut rng, p, n);
        let bf = brute_force_rawls(&dist).unwrap();
        for _ in 0..10 {
            let c = DualWeights::new(p, random_simplex(&mut rng, 2 * p)).unwrap();
            let g = dual_value(&dist, &c).unwrap();
            assert!(g <= bf.r_star + 1e-12);
            // the inner minimiser attains g
            let h = dual_classifier(&dist, &c).unwrap();
            assert!((max_error_dual(&dist, &h, &c).unwrap() - g).abs() <= 1e-12);
        }
        let opt = &bf.optima[0];
        let rates = error_rates(&dist, &opt.classifier).unwrap();
        for id in SubPopId::all(p) {
            let v = max_error_dual(&dist, &opt.classifier, &DualWeights::vertex(p, id)).unwrap();
            assert!((v - rates[&id]).abs() <= 1e-12);
        }
    }
}

#[test]
fn randomization_never_hurts() {
    let mut rng = ChaCha8Rng::seed_from_u64(302);
    for _ in 0..50 {
        let n = rng.random_range(1..=8);
        let dist = random_dist(&mut rng, 1, n);
        let rand = randomized_minimax_p1(&dist).unwrap();
        let det = brute_force_rawls(&dist).unwrap().r_star;
        assert!(rand <= det + 1e-12);
    }
}

#[test]
fn evaluate_matches_empirical_oracle() {
    // an empirical sample on a handful of score values is a finite
    // distribution; the two error computations must agree
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let p = 2;
    let values = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let mut data = LabeledDataset::new(p, 1);
    let mut counts = vec![0u64; values.len() * 2 * p];
    for _ in 0..997 {
        let x = rng.random_range(0..values.len());
        let y = rng.random_range(0..2u8);
        let z = rng.random_range(1..=p);
        data.push(&[values[x]], y, z).unwrap();
        counts[x * 2 * p + SubPopId { label: y, group: z }.index(p)] += 1;
    }
    let n: u64 = counts.iter().sum();
    let dist = FiniteDistribution::from_dense(
        values.iter().map(|v| v.to_string()).collect(),
        p,
        counts.iter().map(|&c| c as f64 / n as f64).collect(),
    )
    .unwrap();
    for b in [-1.5, -0.5, 0.5, 1.5] {
        let report = evaluate(&data, &ScoreThresholdModel::new(b).into()).unwrap();
        let f = TabularClassifier::new(values.iter().map(|&v| (v >= b) as u8).collect()).unwrap();
        let rates = error_rates(&dist, &f).unwrap();
        for (id, r) in &rates {
            assert!((report.per_subpop_error[id] - r).abs() <= 1e-12);
        }
    }
}
