use skm_core::integrators::{sk_row, SpdeParams};
use skm_core::noise::NoisePath;
use skm_core::ou::OUPath;
use skm_core::par::Execution;
use skm_core::spectral::{Nonlinearity, QSpectrum, SpectralField};

use proptest::prelude::*;

const M: usize = 8;

fn q() -> QSpectrum {
    QSpectrum::power_law(M, 4.0, 1.0).unwrap()
}

#[test]
fn noise_does_not_depend_on_execution_or_window() {
    let a = NoisePath::with_execution(7, 0.01, M, -50, 100, Execution::Sequential).unwrap();
    let b = NoisePath::with_execution(7, 0.01, M, -50, 100, Execution::Parallel).unwrap();
    let c = NoisePath::new(7, 0.01, M, -10, 20).unwrap();
    for n in -10..10 {
        assert_eq!(a.normals(n).unwrap(), b.normals(n).unwrap());
        assert_eq!(a.normals(n).unwrap(), c.normals(n).unwrap());
    }
    assert_eq!(a.restrict(-10, 20).unwrap().normals(3).unwrap(), c.normals(3).unwrap());
}

#[test]
fn shifted_path_reads_ahead() {
    let noise = NoisePath::covering(3, 0.01, M, -2.0, 1.0).unwrap();
    let path = OUPath::stationary(&noise, &q(), Some(0.01)).unwrap();
    let shifted = path.shift(0.5).unwrap();
    let i = path.index_of(0.3).unwrap();
    let j = shifted.index_of(-0.2).unwrap();
    assert_eq!(path.heat(i), shifted.heat(j));
    assert_eq!(path.wave(i), shifted.wave(j));
    assert!(path.shift(0.505).is_err());
}

#[test]
fn sk_control_without_noise_or_nonlinearity_never_exceeds() {
    let mut u0 = vec![0.0; M];
    u0[0] = 0.3;
    let u0 = SpectralField::from_coeffs(u0).unwrap();
    let u1 = SpectralField::zeros(M);
    for nu in [1e-1, 1e-2, 1e-3] {
        let params = SpdeParams { nu, q: QSpectrum::zero(M), f: Nonlinearity::Zero, phys_points: 2 * M };
        let row = sk_row(&params, &u0, &u1, 1e-3, 1.0, 0.1, 1, 4, Execution::default()).unwrap();
        assert_eq!(row.exceedance, 0.0);
        assert_eq!(row.blow_ups, 0);
    }
}

#[test]
fn sk_rows_agree_across_execution() {
    let u0 = SpectralField::zeros(M);
    let u1 = SpectralField::zeros(M);
    let params = SpdeParams { nu: 1e-2, q: q(), f: Nonlinearity::ScaledSine { a: 0.5 }, phys_points: 2 * M };
    let s = sk_row(&params, &u0, &u1, 1e-3, 0.2, 0.1, 5, 6, Execution::Sequential).unwrap();
    let p = sk_row(&params, &u0, &u1, 1e-3, 0.2, 0.1, 5, 6, Execution::Parallel).unwrap();
    assert_eq!(s, p);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exceedance_is_a_probability(seed in 0u64..1000, delta in 0.0..1.0f64) {
        let u0 = SpectralField::zeros(M);
        let params = SpdeParams { nu: 1e-2, q: q(), f: Nonlinearity::ScaledSine { a: 0.5 }, phys_points: 2 * M };
        let row = sk_row(&params, &u0, &u0, 1e-3, 0.1, delta, seed, 5, Execution::Sequential).unwrap();
        prop_assert!((0.0..=1.0).contains(&row.exceedance));
        prop_assert!(row.mean_sup_diff >= 0.0);
        prop_assert_eq!(row.replicas, 5);
    }
}
