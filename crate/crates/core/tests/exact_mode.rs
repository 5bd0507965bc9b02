use depwise::model::{ExactModel, Predictor};
use depwise::taskgen::{generate, NoiseKind, MAX_K};

#[test]
fn exact_mode_answers_every_generated_story() {
    let m = ExactModel::default();
    for noise in NoiseKind::ALL {
        for k in 1..=MAX_K {
            for inst in generate(100 + k as u64, k, noise, 45).unwrap() {
                assert_eq!(m.predict(&inst).unwrap(), inst.gold, "k={k} noise={noise}");
            }
        }
    }
}
