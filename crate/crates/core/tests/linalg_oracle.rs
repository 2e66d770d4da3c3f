mod common;

use geosplat::linalg3::{eig_sym3, SymMat3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_psd(rng: &mut ChaCha8Rng) -> SymMat3 {
    let b = nalgebra::Matrix3::<f64>::from_fn(|_, _| rng.random_range(-1.0..1.0));
    SymMat3::from_upper(&(b * b.transpose()))
}

#[test]
fn jacobi_oracle_on_diagonal_cases() {
    assert_eq!(common::jacobi_eigenvalues(&SymMat3::diagonal(0.25, 4.0, 1.0)), [4.0, 1.0, 0.25]);
    let ev = common::jacobi_eigenvalues(&SymMat3::new(2.0, 1.0, 0.0, 2.0, 0.0, 5.0));
    for (a, b) in ev.iter().zip([5.0, 3.0, 1.0]) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn closed_form_matches_jacobi() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_norm = 0.0f64;
    let mut worst_reconstruction = 0.0f64;
    for _ in 0..100_000 {
        let m = random_psd(&mut rng);
        let e = eig_sym3(&m).unwrap();
        let r = common::jacobi_eigenvalues(&m);
        for i in 0..3 {
            worst_norm = worst_norm.max((e.values[i] - r[i]).abs() / r[0]);
        }
        let mut rebuilt = nalgebra::Matrix3::zeros();
        for i in 0..3 {
            rebuilt += e.vectors[i] * e.vectors[i].transpose() * e.values[i];
        }
        let full = m.to_matrix();
        worst_reconstruction = worst_reconstruction.max((rebuilt - full).norm() / full.norm());
    }
    assert!(worst_norm <= 1e-9, "eigenvalue error {worst_norm:e}");
    assert!(worst_reconstruction <= 1e-8, "reconstruction error {worst_reconstruction:e}");
}
