use tppmix::metrics::eid;
use tppmix::seeding::{rng_from, sequence_seed};
use tppmix::sim::{simulate, EventSequence, IntensitySpec};

#[test]
#[ignore]
fn eid_floor() {
    for seed in [1u64, 2, 3] {
        let data: Vec<EventSequence> = (0..200)
            .map(|i| {
                let mut rng = rng_from(sequence_seed(seed * 1000, i as u64));
                simulate(&IntensitySpec::Sine, 100.0, &mut rng).unwrap()
            })
            .collect();
        for n_sims in [1000usize, 4000, 16000] {
            let sims: Vec<EventSequence> = (0..n_sims)
                .map(|i| {
                    let mut rng = rng_from(sequence_seed(seed * 7777 + 13, i as u64));
                    simulate(&IntensitySpec::Sine, 100.0, &mut rng).unwrap()
                })
                .collect();
            let v = eid(&data, &sims, 5.0).unwrap();
            eprintln!("seed {seed} n_sims {n_sims}: EID floor {v:.3}");
        }
    }
}
