use rubriclearn::judge::{ScoreCache, Scorer};
use rubriclearn::selection::evaluate;
use rubriclearn::pipeline::SynthDataConfig;
use rubriclearn::synthworld::make_world;

#[test]
fn per_seed_ceilings() {
    for floor in [0.35f64, 0.5] {
        for seed in [42u64, 7, 13, 99, 2024] {
            let mut synth = SynthDataConfig::default();
            synth.spec.rng_seed = seed;
            synth.spec.min_margin = floor;
            let world = make_world(&synth.spec).unwrap();
            let (_train, valid) = world.split(synth.train_pairs);
            let scorer = Scorer::new(world.judge_backend(), ScoreCache::in_memory(), 8);
            let vm = scorer.score_matrix(&valid, world.planted()).unwrap();
            let oracle = evaluate(&world.oracle_set(), &valid, &vm).unwrap();
            println!("floor {floor} seed {seed}: oracle valid = {:.4} ({} wrong of {})",
                oracle.strict_accuracy, oracle.misranked_ids.len(), valid.len());
        }
    }
}
