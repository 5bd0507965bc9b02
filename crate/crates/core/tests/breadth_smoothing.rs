use depwise::baseline::{breadth_forward, smoothing_metric, BreadthLayer, BreadthLayerStack};
use depwise::taskgen::{generate, NoiseKind};
use depwise::tpr::random_unit_vector;
use depwise::NUM_LABELS;
use depwise_autodiff::{Activation, ParamVars, Tape, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn deeper_shared_stacks_smooth_more() {
    let d = 16;
    let stories = generate(31, 5, NoiseKind::Supporting, 3).unwrap();
    for (trial, inst) in stories.iter().enumerate() {
        let g = inst.graph().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(trial as u64);
        let embeds: Vec<Vec<f64>> = (0..g.num_nodes()).map(|_| random_unit_vector(d, &mut rng)).collect();
        let mut curve = Vec::new();
        for layers in 1..=12 {
            let stack = BreadthLayerStack::shared(BreadthLayer::identity(d), layers, Activation::Identity).unwrap();
            let mut tape = Tape::new();
            let nodes: Vec<Var> = embeds
                .iter()
                .map(|e| tape.constant_vector(e.clone()).unwrap())
                .collect();
            let edges: Vec<Var> = (0..NUM_LABELS)
                .map(|_| tape.constant_vector(vec![0.0; d]).unwrap())
                .collect();
            let out = breadth_forward(&mut tape, &g, &stack, &mut ParamVars::default(), &nodes, &edges).unwrap();
            let h: Vec<Vec<f64>> = out.iter().map(|&v| tape.value(v).to_vec()).collect();
            curve.push(smoothing_metric(&h).unwrap());
        }
        assert!(curve.windows(2).all(|w| w[1] > w[0]), "trial {trial}: {curve:?}");
        assert!(curve[11] - curve[0] > 0.3, "trial {trial}: {curve:?}");
    }
}
