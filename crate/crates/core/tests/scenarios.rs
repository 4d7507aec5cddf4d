use spikeid_core::noise::{estimate_noise_threshold, NoiseMethod, NoiseParams};
use spikeid_core::simulator::{separated_dipoles, simulate, SimulationConfig};
use spikeid_core::snr::{loglog_slope, perturbation_curve};
use spikeid_core::spike::{
    estimate_bulk, estimate_spike_group, mp_edges, sample_spiked_covariance, sample_spiked_model,
    Rotation, SpikedModelSpec,
};
use spikeid_core::*;

fn spectrum(c: &CovarianceMatrix) -> Vec<f64> {
    symmetric_eigenvalues_desc(c.values())
}

#[test]
fn single_spike_estimate_is_accurate_at_large_t() {
    let (k, t) = (300, 30_000);
    let spec = SpikedModelSpec::new(vec![(20.0, 5)], k).unwrap();
    let mut sum = 0.0;
    for seed in 0..20 {
        let e = spectrum(&sample_spiked_covariance(&spec, t, false, seed).unwrap());
        sum += estimate_spike_group(&e, &(0..5), t, k, 0.01 * e[0]).unwrap();
    }
    let mean = sum / 20.0;
    assert!((mean / 20.0 - 1.0).abs() <= 0.02, "mean estimate {mean}");
}

#[test]
fn white_noise_bulk_is_close_to_one() {
    let (k, t) = (100, 2000);
    let spec = SpikedModelSpec::new(vec![], k).unwrap();
    let (_, b) = mp_edges(k as f64 / t as f64, 1.0).unwrap();
    for seed in 0..5 {
        let y = sample_spiked_model(&spec, t, SamplingDist::Gaussian, Rotation::Identity, seed).unwrap();
        let e = spectrum(&sample_covariance(&y, false).unwrap());
        let bulk = estimate_bulk(&e, b).unwrap();
        assert!((bulk - 1.0).abs() <= 0.05, "seed {seed}: {bulk}");
    }
}

#[test]
fn independent_channels_keep_no_off_diagonal() {
    let seeds = 40;
    let clean = (0..seeds)
        .filter(|&seed| {
            let mut rng = substream(seed, "white", 0);
            let v = SamplingDist::Gaussian.draw(&mut rng, 8 * 2000);
            let d = DataMatrix::new(nalgebra::DMatrix::from_vec(8, 2000, v), 1.0).unwrap();
            let est = estimate_noise_threshold(&d, 2.5, 5).unwrap();
            let m = est.covariance.values();
            (0..8).all(|i| (0..8).all(|j| i == j || m[(i, j)] == 0.0))
        })
        .count();
    assert!(clean as f64 >= 0.95 * seeds as f64, "{clean}/{seeds}");
}

#[test]
fn halving_omega_halves_the_deviation() {
    let mut rng = substream(3, "pair", 0);
    let a = nalgebra::DMatrix::from_vec(12, 12, SamplingDist::Gaussian.draw(&mut rng, 144));
    let b = nalgebra::DMatrix::from_vec(12, 12, SamplingDist::Gaussian.draw(&mut rng, 144));
    let eye = nalgebra::DMatrix::<f64>::identity(12, 12);
    let r = CovarianceMatrix::new(&a * a.transpose() + &eye).unwrap();
    let rn = CovarianceMatrix::new(&b * b.transpose() + &eye).unwrap();
    let curve = perturbation_curve(&r, &rn, &[5e-7, 1e-6, 1e-5, 1e-4, 1e-3], 9).unwrap();
    let slope = loglog_slope(&curve).unwrap();
    assert!((0.8..=1.2).contains(&slope), "slope {slope}");
    let ratio = curve[1].1 / curve[0].1;
    assert!(ratio >= 2.0 / 1.3, "ratio {ratio}");
}

fn separated(snr: f64, seed: u64) -> DataMatrix {
    let cfg = SimulationConfig {
        dipoles: separated_dipoles(),
        ..SimulationConfig::reference(snr, seed)
    };
    simulate(&cfg).unwrap().averaged
}

fn count(y: &DataMatrix, method: NoiseMethod) -> usize {
    let noise = estimate_noise(y, method, &NoiseParams::default()).unwrap();
    intrinsic_dimensionality(y, Some(&noise.covariance), &IdConfig::default())
        .unwrap()
        .l
}

#[test]
fn separated_dipoles_are_counted_from_clean_to_noisy() {
    for snr in [f64::INFINITY, 1.0, 0.1] {
        let y = separated(snr, 1);
        for method in [NoiseMethod::Fft, NoiseMethod::Residual] {
            assert_eq!(count(&y, method), 4, "snr {snr}, {method:?}");
        }
    }
}

#[test]
fn noise_estimators_agree_on_a_noisy_recording() {
    let y = separated(0.1, 2);
    let counts: Vec<usize> = NoiseMethod::ESTIMATORS.iter().map(|&m| count(&y, m)).collect();
    assert_eq!(counts, vec![4, 4, 4]);
}

#[test]
fn far_below_detectability_nothing_is_counted() {
    let y = separated(1e-4, 1);
    assert_eq!(count(&y, NoiseMethod::Fft), 0);
}

#[test]
fn simulated_sources_superpose() {
    let dipoles = separated_dipoles();
    let base = SimulationConfig {
        dipoles: dipoles.clone(),
        ..SimulationConfig::reference(f64::INFINITY, 4)
    };
    let both = simulate(&base).unwrap().clean;
    let mut sum = nalgebra::DMatrix::zeros(both.n_channels(), both.n_samples());
    for d in dipoles {
        let single = SimulationConfig { dipoles: vec![d], ..base.clone() };
        sum += simulate(&single).unwrap().clean.values();
    }
    let diff = (both.values() - sum).amax();
    assert!(diff <= 1e-9 * both.values().amax(), "{diff}");
}
