use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spiked_core::tensor::{
    generate_observation, hamiltonian, inner_rank_one, sample_noise, sample_sphere_uniform, sphere_gradient,
    tilted_hamiltonian,
};
use spiked_core::{ModelParams, SphereVector, SymmetricTensor};

fn naive_contraction(t: &SymmetricTensor, x: &[f64]) -> f64 {
    let (k, n) = (t.order(), t.dim());
    let mut idx = vec![0usize; k];
    let mut total = 0.0;
    loop {
        total += t.get(&idx) * idx.iter().map(|&i| x[i]).product::<f64>();
        let mut slot = k;
        loop {
            if slot == 0 {
                return total;
            }
            slot -= 1;
            idx[slot] += 1;
            if idx[slot] < n {
                break;
            }
            idx[slot] = 0;
        }
    }
}

#[test]
fn contraction_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 2..=13usize {
        for n in 2..=100usize {
            if (n as f64).powi(k as i32) > 1e4 {
                break;
            }
            for symmetrize in [true, false] {
                let p = ModelParams::new(n, k, 0.0, rng.random()).unwrap().with_symmetrize(symmetrize);
                let w = sample_noise(&p).unwrap();
                let x = sample_sphere_uniform(n, rng.random()).unwrap();
                let fast = inner_rank_one(&w, &x).unwrap();
                let slow = naive_contraction(&w, x.as_slice());
                assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0), "n={n} k={k}: {fast} vs {slow}");
            }
        }
    }
}

fn tangent_fd_gradient(t: &SymmetricTensor, x: &[f64], h: f64) -> Vec<f64> {
    let f = |v: &[f64]| {
        let s = SphereVector::new(v.to_vec()).unwrap();
        inner_rank_one(t, &s).unwrap()
    };
    (0..x.len())
        .map(|i| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += h;
            minus[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn sphere_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..100 {
        let n = rng.random_range(2..=8);
        let k = rng.random_range(2..=5);
        let p = ModelParams::new(n, k, 0.0, rng.random()).unwrap().with_symmetrize(case % 2 == 0);
        let w = sample_noise(&p).unwrap();
        let x = sample_sphere_uniform(n, rng.random()).unwrap();
        let g = sphere_gradient(&w, &x).unwrap();
        let fd = tangent_fd_gradient(&w, x.as_slice(), 1e-5);
        let err: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err <= 1e-6 * scale.max(1e-3), "case {case}: relative error {}", err / scale);
    }
}

#[test]
fn hamiltonian_covariance_matches_kernel() {
    let (n, k, draws) = (5usize, 3usize, 4000u64);
    let x = SphereVector::new(vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let y = SphereVector::new(vec![0.6, 0.8, 0.0, 0.0, 0.0]).unwrap();
    let target = n as f64 * 0.6f64.powi(k as i32);
    for symmetrize in [true, false] {
        let mut products = Vec::new();
        let mut squares = Vec::new();
        for d in 0..draws {
            let p = ModelParams::new(n, k, 0.0, 1000 + d).unwrap().with_symmetrize(symmetrize);
            let w = sample_noise(&p).unwrap();
            let hx = hamiltonian(&w, &x).unwrap();
            products.push(hx * hamiltonian(&w, &y).unwrap());
            squares.push(hx * hx);
        }
        let m = draws as f64;
        let mean = products.iter().sum::<f64>() / m;
        let sd = (products.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        assert!((mean - target).abs() <= 3.0 * sd / m.sqrt(), "symmetrize={symmetrize}: {mean} vs {target}");
        let var = squares.iter().sum::<f64>() / m;
        assert!((var - n as f64).abs() <= 0.1 * n as f64, "variance {var}");
    }
}

#[test]
fn tilted_hamiltonian_is_scaled_data_pairing() {
    let p = ModelParams::new(6, 4, 1.3, 17).unwrap();
    let obs = generate_observation(&p, None).unwrap();
    let x = sample_sphere_uniform(6, 4).unwrap();
    let lhs = tilted_hamiltonian(&obs.noise, &obs.signal, 1.3, &x).unwrap();
    let rhs = 6f64.sqrt() * inner_rank_one(&obs.data, &x).unwrap();
    assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetrized_noise_is_permutation_invariant(
        seed in any::<u64>(),
        n in 2usize..6,
        k in 2usize..5,
        raw in prop::collection::vec(0usize..100, 5),
        swaps in prop::collection::vec((0usize..5, 0usize..5), 1..6),
    ) {
        let w = sample_noise(&ModelParams::new(n, k, 0.0, seed).unwrap()).unwrap();
        let idx: Vec<usize> = raw[..k].iter().map(|v| v % n).collect();
        let mut perm = idx.clone();
        for (a, b) in swaps {
            perm.swap(a % k, b % k);
        }
        prop_assert_eq!(w.get(&idx), w.get(&perm));
    }
}
