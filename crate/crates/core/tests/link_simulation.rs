use num_complex::Complex64;
use oamswipt::linalg::CVector;
use oamswipt::metrics::mode_sinr;
use oamswipt::transform::{demodulate, modulate, recover, simulate_link, SINR_CAP};
use oamswipt::{
    build_channels, compose, element_layout, oam_channel, LinkBudget, NoiseModel, PowerAllocation, PowerSplit,
    PropagationParams, ReflectionState, SystemGeometry, TransformPair,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn paper_link() -> (oamswipt::ChannelSet, ReflectionState, TransformPair) {
    let channels = build_channels(
        &element_layout(&SystemGeometry::default()).unwrap(),
        &PropagationParams::default(),
    )
    .unwrap();
    (channels, ReflectionState::ones(16), TransformPair::oam(8, 8))
}

#[test]
fn full_split_leaves_nothing_to_decode() {
    let (channels, refl, transforms) = paper_link();
    let budget = LinkBudget::default();
    let sim = simulate_link(
        &channels,
        &refl,
        &transforms,
        &budget.uniform_allocation(8),
        &PowerSplit::uniform(8, 1.0).unwrap(),
        &budget.noise,
        5_000,
        1,
    )
    .unwrap();
    for g in sim.sinr {
        assert!(g < 1e-3, "{g}");
    }
}

#[test]
fn noiseless_single_mode_is_recovered_exactly() {
    let (channels, refl, transforms) = paper_link();
    let silent = NoiseModel {
        antenna: 0.0,
        conversion: 0.0,
    };
    let mut power = vec![0.0; 8];
    power[0] = 1.0;
    let alloc = PowerAllocation::custom(power).unwrap();
    let split = PowerSplit::zeros(8);

    let sim = simulate_link(&channels, &refl, &transforms, &alloc, &split, &silent, 1_000, 5).unwrap();
    assert_eq!(sim.sinr[0], SINR_CAP);
    assert!(sim.sinr[1..].iter().all(|&g| g == 0.0));

    let h = compose(&channels, &refl).unwrap();
    let h_oam = oam_channel(&h, &transforms);
    let diag: Vec<Complex64> = (0..8).map(|l| h_oam[(l, l)]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let mut x = CVector::zeros(8);
        x[0] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let y = demodulate(&(&h * modulate(&x, &alloc, &transforms).unwrap()), &transforms).unwrap();
        let x_hat = recover(&y, &CVector::zeros(8), &diag, &split, &alloc).unwrap();
        assert!((x_hat[0] - x[0]).norm() <= 1e-9 * x[0].norm().max(1.0));
    }
}

#[test]
fn empirical_sinr_tracks_closed_form() {
    let (channels, refl, transforms) = paper_link();
    let budget = LinkBudget::default();
    let alloc = budget.uniform_allocation(8);
    let split = PowerSplit::uniform(8, 0.3).unwrap();
    let h_oam = oam_channel(&compose(&channels, &refl).unwrap(), &transforms);
    let want = mode_sinr(&h_oam, &split, &alloc, &budget.noise).unwrap();
    let sim = simulate_link(&channels, &refl, &transforms, &alloc, &split, &budget.noise, 100_000, 77).unwrap();
    for l in 0..8 {
        let gap = (sim.sinr[l] - want[l]).abs();
        assert!(gap <= 3.0 * sim.std_error[l], "mode {l}: {} vs {} (se {})", sim.sinr[l], want[l], sim.std_error[l]);
    }
}
