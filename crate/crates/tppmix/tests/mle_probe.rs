use tppmix::nn::{optimizer_step, CellKind, Graph, OptimizerConfig, Sc};
use tppmix::metrics::eid;
use tppmix::policy::{ActionDistribution, Policy, PolicyConfig};
use tppmix::seeding::{rng_from, sequence_seed};
use tppmix::sim::{simulate, EventSequence, IntensitySpec};

#[test]
#[ignore]
fn mle_fit_bound() {
    let data: Vec<EventSequence> = (0..200)
        .map(|i| {
            let mut rng = rng_from(sequence_seed(2000, i as u64));
            simulate(&IntensitySpec::Sine, 100.0, &mut rng).unwrap()
        })
        .collect();
    let mean_rate = data.iter().map(|s| s.len()).sum::<usize>() as f64 / data.len() as f64 / 100.0;
    for (dist, d, epochs) in [
        (ActionDistribution::Exponential, 32usize, 300usize),
        (ActionDistribution::Exponential, 48, 300),
        (ActionDistribution::Rayleigh, 32, 300),
    ] {
        let mut rng = rng_from(9);
        let mut policy = Policy::new(
            PolicyConfig { hidden_dim: d, cell: CellKind::Lstm, distribution: dist, input_scale: mean_rate, ..Default::default() },
            &mut rng,
        );
        let cfg = OptimizerConfig::with_learning_rate(3e-3);
        let t0 = std::time::Instant::now();
        for epoch in 0..epochs {
            // minibatch MLE: maximize sum log prob
            for chunk in data.chunks(20) {
                let mut g = Graph::new(&policy.params);
                let mut terms: Vec<(Sc, f64)> = Vec::new();
                for seq in chunk {
                    for n in policy.log_prob_nodes(&mut g, seq).unwrap() {
                        terms.push((n, -1.0 / chunk.len() as f64));
                    }
                }
                let loss = g.weighted_sum(&terms);
                let store = g.backward(loss);
                drop(g);
                policy.params.accumulate(&store);
                optimizer_step(&mut policy.params, &cfg);
            }
            if epoch % 50 == 49 {
                let logp: f64 = data.iter().map(|s| policy.log_prob_sequence(s).unwrap().total).sum::<f64>() / data.len() as f64;
                let mut rng2 = rng_from(55);
                let rollouts: Vec<EventSequence> = (0..2000).map(|_| policy.rollout(100.0, &mut rng2).unwrap().sequence).collect();
                let e = eid(&data, &rollouts, 5.0).unwrap();
                let mean_len = rollouts.iter().map(|s| s.len()).sum::<usize>() as f64 / 2000.0;
                eprintln!("{dist:?} d{d} epoch {epoch}: logp {logp:.2} len {mean_len:.1} EID {e:.3} ({:.0?})", t0.elapsed());
            }
        }
    }
}
