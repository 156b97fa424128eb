//! Property tests: gradient correctness on randomized small instances,
//! bit-level determinism, simulator output invariants and metric ranges.

use proptest::prelude::*;
use tppmix::metrics::{purity, rand_index, ClusteringResult};
use tppmix::nn::{
    finite_difference_check, CellKind, Graph, GradStore, ParamSet, RecurrentCell,
};
use tppmix::policy::{ActionDistribution, Policy, PolicyConfig};
use tppmix::seeding::rng_from;
use tppmix::sim::{simulate, EventSequence, IntensitySpec};

fn unrolled_loss(ps: &ParamSet, cell: &RecurrentCell, inputs: &[f64]) -> f64 {
    let mut g = Graph::new(ps);
    let mut state = cell.init_state(&mut g);
    for &x in inputs {
        let xv = g.const_v(&[x]);
        state = cell.step(&mut g, &state, xv);
    }
    g.value_v(state.hidden).iter().sum()
}

fn unrolled_grads(ps: &ParamSet, cell: &RecurrentCell, inputs: &[f64]) -> GradStore {
    let mut g = Graph::new(ps);
    let mut state = cell.init_state(&mut g);
    for &x in inputs {
        let xv = g.const_v(&[x]);
        state = cell.step(&mut g, &state, xv);
    }
    let loss = g.sum_v(state.hidden);
    g.backward(loss)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn recurrent_gradients_match_finite_differences(
        seed in 0u64..1000,
        d in 1usize..=8,
        lstm in any::<bool>(),
        inputs in prop::collection::vec(0.05f64..3.0, 1..8),
    ) {
        let kind = if lstm { CellKind::Lstm } else { CellKind::Tanh };
        let mut rng = rng_from(seed);
        let mut ps = ParamSet::new();
        let cell = RecurrentCell::new(&mut ps, "r", kind, 1, d, &mut rng);
        let analytic = unrolled_grads(&ps, &cell, &inputs);
        let err = finite_difference_check(&mut ps, &analytic, 1e-5, |ps| {
            unrolled_loss(ps, &cell, &inputs)
        });
        prop_assert!(err < 1e-4, "rel. error {err}");
    }

    #[test]
    fn forward_and_gradients_are_bit_deterministic(
        seed in 0u64..1000,
        inputs in prop::collection::vec(0.05f64..3.0, 1..6),
    ) {
        let build = || {
            let mut rng = rng_from(seed);
            let mut ps = ParamSet::new();
            let cell = RecurrentCell::new(&mut ps, "r", CellKind::Lstm, 1, 4, &mut rng);
            let loss = unrolled_loss(&ps, &cell, &inputs);
            let grads = unrolled_grads(&ps, &cell, &inputs);
            let flat: Vec<f64> = ps
                .ids()
                .flat_map(|id| grads.get(id).map(<[f64]>::to_vec).unwrap_or_default())
                .collect();
            (loss, flat)
        };
        let (l1, g1) = build();
        let (l2, g2) = build();
        prop_assert!(l1.to_bits() == l2.to_bits());
        prop_assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn simulated_sequences_respect_invariants(
        seed in 0u64..10_000,
        kind in 0usize..5,
        t_max in 5.0f64..150.0,
    ) {
        let spec = match kind {
            0 => IntensitySpec::Constant,
            1 => IntensitySpec::Sine,
            2 => IntensitySpec::NegativeSine,
            3 => IntensitySpec::Bimodal { t_max },
            _ => IntensitySpec::Hawkes { base: 0.2, excitation: 0.3, decay: 1.0 },
        };
        let mut rng = rng_from(seed);
        let seq = simulate(&spec, t_max, &mut rng).unwrap();
        prop_assert!(seq.timestamps().windows(2).all(|w| w[1] > w[0]));
        prop_assert!(seq.timestamps().iter().all(|&t| t > 0.0 && t <= t_max));
    }

    #[test]
    fn rollouts_respect_sequence_invariants(
        seed in 0u64..10_000,
        rayleigh in any::<bool>(),
        t_max in 1.0f64..60.0,
    ) {
        let dist = if rayleigh { ActionDistribution::Rayleigh } else { ActionDistribution::Exponential };
        let mut rng = rng_from(seed);
        let policy = Policy::new(
            PolicyConfig { hidden_dim: 4, cell: CellKind::Tanh, distribution: dist, ..Default::default() },
            &mut rng,
        );
        let r = policy.rollout(t_max, &mut rng).unwrap();
        prop_assert!(r.steps.iter().all(|s| s.action > 0.0));
        prop_assert!(r.sequence.timestamps().windows(2).all(|w| w[1] > w[0]));
        prop_assert!(r.sequence.timestamps().iter().all(|&t| t > 0.0 && t <= t_max));
    }

    #[test]
    fn clustering_metrics_stay_in_range(
        labels in prop::collection::vec((0usize..4, 0usize..4), 2..40),
    ) {
        let (predicted, truth): (Vec<usize>, Vec<usize>) = labels.into_iter().unzip();
        let r = ClusteringResult::new(predicted, Some(truth)).unwrap();
        let p = purity(&r).unwrap();
        let ri = rand_index(&r).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((0.0..=1.0).contains(&ri));
    }

    #[test]
    fn eid_nonnegative_and_zero_on_self(
        seed in 0u64..1000,
        n in 1usize..20,
    ) {
        let seqs: Vec<EventSequence> = (0..n)
            .map(|i| {
                let mut rng = rng_from(seed ^ i as u64);
                simulate(&IntensitySpec::Constant, 50.0, &mut rng).unwrap()
            })
            .collect();
        let self_eid = tppmix::metrics::eid(&seqs, &seqs, 5.0).unwrap();
        prop_assert!(self_eid == 0.0);
    }
}
