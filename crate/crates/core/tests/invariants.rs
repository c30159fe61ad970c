use proptest::prelude::*;

use subqkd_core::keyrate::{
    guessing_probability, iso_keyrate_closed_form, keyrate_from_state, min_entropy_bound,
};
use subqkd_core::noise::{spatial, temporal};
use subqkd_core::protocol::{estimate_parameters, run_protocol};
use subqkd_core::quantum::{
    born_joint_distribution, build_measurements, divisors, isotropic_state, project_subspace,
};
use subqkd_core::sdp::dual_certificate;
use subqkd_core::{PartyNoise, ProtocolConfig, SpatialParams, SubspaceLayout, TemporalParams};

fn layout_strategy(max_d: usize) -> impl Strategy<Value = SubspaceLayout> {
    (1..=max_d)
        .prop_flat_map(|d| (Just(d), proptest::sample::select(divisors(d))))
        .prop_map(|(d, k)| SubspaceLayout::new(d, k).unwrap())
}

fn party_strategy() -> impl Strategy<Value = PartyNoise> {
    (0.0f64..1e7, 0.0f64..1e4, 0.0f64..0.99, 0.05f64..=1.0).prop_map(|(nu, mu, pl, pc)| {
        PartyNoise {
            env_rate: nu,
            dark_rate: mu,
            loss: pl,
            efficiency: pc,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn isotropic_state_is_a_state(d in 1usize..=6, v in 0.0f64..=1.0) {
        let rho = isotropic_state(d, v).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-12);
        prop_assert!(rho.hermitian_deviation() < 1e-12);
        prop_assert!(rho.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn born_statistics_of_isotropic_state(layout in layout_strategy(8), v in 0.0f64..=1.0) {
        let d = layout.d();
        let rho = isotropic_state(d, v).unwrap();
        let ms = build_measurements(layout);
        let expected = v + (1.0 - v) / d as f64;
        for (a, b) in [(&ms.alice_key, &ms.bob_key), (&ms.alice_test, &ms.bob_test)] {
            let joint = born_joint_distribution(&rho, a, b).unwrap();
            let total: f64 = joint.probs().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
            prop_assert!(joint.probs().iter().all(|&p| p >= 0.0));
            prop_assert!((joint.agreement() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn block_projection_weight(layout in layout_strategy(8), v in 0.0f64..=1.0) {
        let (d, k) = (layout.d() as f64, layout.k() as f64);
        let rho = isotropic_state(layout.d(), v).unwrap();
        let oracle = k * (v * d + k - v * k) / (d * d);
        for m in 0..layout.blocks() {
            let proj = project_subspace(&rho, m, layout).unwrap();
            prop_assert!((proj.probability - oracle).abs() < 1e-12);
            let block = proj.state.unwrap();
            prop_assert!((block.trace() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn key_rate_bounded_by_subspace_size(d in 1usize..=64, v in 0.0f64..=1.0) {
        for k in divisors(d) {
            let r = iso_keyrate_closed_form(d, v, k).unwrap();
            prop_assert!(r.signed <= (k as f64).log2() + 1e-12);
            prop_assert!(r.clamped >= 0.0 && r.clamped >= r.signed);
        }
    }

    #[test]
    fn generic_path_matches_closed_form(layout in layout_strategy(6), v in 0.0f64..=1.0) {
        let rho = isotropic_state(layout.d(), v).unwrap();
        let generic = keyrate_from_state(&rho, layout, false).unwrap().total;
        let closed = iso_keyrate_closed_form(layout.d(), v, layout.k()).unwrap().signed;
        prop_assert!((generic - closed).abs() < 1e-9);
    }

    #[test]
    fn guessing_probability_range(k in 1usize..=12, t in 0.0f64..=1.0) {
        let w = 1.0 / k as f64 + t * (1.0 - 1.0 / k as f64);
        let pg = guessing_probability(w, k).unwrap();
        prop_assert!(pg >= 1.0 / k as f64 - 1e-15 && pg <= 1.0 + 1e-15);
        let below = min_entropy_bound(t / k as f64, k).unwrap();
        prop_assert_eq!(below, 0.0);
    }

    #[test]
    fn dual_certificate_feasible_and_tight(k in 2usize..=6, t in 0.0f64..0.999) {
        let w = 1.0 / k as f64 + t * (1.0 - 1.0 / k as f64);
        let cert = dual_certificate(w, k).unwrap();
        prop_assert!(cert.is_feasible());
        let pg = guessing_probability(w, k).unwrap();
        prop_assert!((cert.dual_value - pg).abs() < 1e-9);
    }

    #[test]
    fn temporal_visibility_oracle(
        lambda in 0.0f64..1e7,
        a in party_strategy(),
        b in party_strategy(),
        bin in 1e-10f64..1e-8,
        d in 1usize..=64,
    ) {
        let p = TemporalParams { pair_rate: lambda, alice: a, bob: b, bin_width: bin };
        let c = temporal::derive_constants(&p).unwrap();
        let miss = |q: &PartyNoise| 1.0 - q.efficiency + q.efficiency * q.loss;
        let (sa, sb) = (miss(&a), miss(&b));
        let ta = a.dark_rate + a.env_rate * a.efficiency + lambda * sb * (1.0 - sa);
        let tb = b.dark_rate + b.env_rate * b.efficiency + lambda * sa * (1.0 - sb);
        let gamma = lambda * (1.0 - sa) * (1.0 - sb);
        let f = d as f64 * bin;
        let v = temporal::visibility(d, &c, bin);
        if gamma > 0.0 {
            let oracle = 1.0 / (1.0 + f * ta * tb / gamma);
            let v = v.unwrap();
            prop_assert!((v - oracle).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let p11 = temporal::coincidence_probability(d, &c, bin);
        let oracle = (-f * (ta + tb + gamma)).exp() * (f * ta * tb + gamma) * f;
        prop_assert!((p11 - oracle).abs() <= 1e-12 * oracle.max(1e-300));
    }

    #[test]
    fn temporal_visibility_falls_with_noise(nu in 0.0f64..1e7, extra in 1.0f64..1e6, d in 1usize..=64) {
        let party = |nu| PartyNoise { env_rate: nu, dark_rate: 100.0, loss: 0.5, efficiency: 0.6 };
        let v = |nu| {
            let p = TemporalParams::symmetric(1e6, party(nu), 1e-9);
            temporal::visibility(d, &temporal::derive_constants(&p).unwrap(), 1e-9).unwrap()
        };
        prop_assert!(v(nu + extra) < v(nu));
    }

    #[test]
    fn spatial_single_click_events_are_probabilities(
        j in 0usize..=8,
        d in 1usize..=16,
        a in party_strategy(),
        b in party_strategy(),
    ) {
        let p0 = spatial::p_none(j, &a);
        let p1 = spatial::p_single(j, d, &a);
        prop_assert!(p0 >= 0.0 && p1 >= 0.0 && p0 + p1 <= 1.0 + 1e-12);
        let same = spatial::p_same(j, d, &a, &b);
        let diff = if d >= 2 { spatial::p_different(j, d, &a, &b) } else { 0.0 };
        prop_assert!(same >= -1e-12 && diff >= -1e-12);
        prop_assert!(same + diff <= p1.min(spatial::p_single(j, d, &b)) + 1e-12);
    }

    #[test]
    fn spatial_visibility_in_unit_interval(
        dt in 1e-9f64..1e-6,
        lambda in 1.0f64..1e7,
        a in party_strategy(),
        b in party_strategy(),
        d in 1usize..=64,
    ) {
        let p = SpatialParams { window: dt, pair_rate: lambda, alice: a, bob: b, projection_prob: 1.0 };
        let c = spatial::derive_constants(&p).unwrap();
        let v = spatial::visibility(d, &c, dt).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(spatial::coincidence_probability(d, &c, dt) >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sifting_is_consistent(layout in layout_strategy(8), v in 0.0f64..=1.0, seed in any::<u64>()) {
        let config = ProtocolConfig { layout, epsilon: 0.3, n_rounds: 20_000, seed };
        let rho = isotropic_state(layout.d(), v).unwrap();
        let records = run_protocol(&rho, &config).unwrap();
        prop_assert_eq!(records.len(), 20_000);
        let k = layout.k() as u32;
        for r in &records {
            let kept = r.w_a == r.w_b && r.x / k == r.y / k;
            prop_assert_eq!(r.block.is_some(), kept);
            if let Some(m) = r.block {
                prop_assert_eq!(r.x_prime, Some(r.x - m * k));
                prop_assert_eq!(r.y_prime, Some(r.y - m * k));
            }
        }
        let est = estimate_parameters(&records, layout).unwrap();
        let kept = records.iter().filter(|r| r.block.is_some()).count() as u64;
        prop_assert_eq!(est.kept_rounds, kept);
        for b in est.defined_blocks() {
            let w = b.w.unwrap();
            prop_assert!((0.0..=1.0).contains(&w));
        }
    }
}

#[test]
fn protocol_is_reproducible() {
    let layout = SubspaceLayout::new(4, 2).unwrap();
    let config = ProtocolConfig {
        layout,
        epsilon: 0.2,
        n_rounds: 50_000,
        seed: 9,
    };
    let rho = isotropic_state(4, 0.8).unwrap();
    let a = run_protocol(&rho, &config).unwrap();
    let b = run_protocol(&rho, &config).unwrap();
    assert_eq!(a, b);
}
