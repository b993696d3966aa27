use degroot_core::audit::{
    check_variation_bound, eps_degroot_params, exact, lyapunov, EdgeWeights, LyapunovConfig, LyapunovTracker,
};
use degroot_core::dynamics::roles_from_bots;
use degroot_core::{Bot, Distortion, Graph, GraphSpec, InitialDistribution, Noise, Simulation, UpdateRule};
use num_rational::BigRational;
use num_traits::ToPrimitive;

fn run_layers(g: &Graph, eps: f64, distortion: Distortion, bots: &[Bot], steps: usize, seed: u64) -> Vec<Vec<f64>> {
    let init = InitialDistribution {
        mu: 0.5,
        noise: Noise::Uniform { half_width: 0.5 },
        clip_range: None,
    };
    let roles = roles_from_bots(g.node_count(), bots).unwrap();
    let opinions = init.sample(g.node_count(), seed).unwrap();
    let mut sim = Simulation::new(g, UpdateRule::EpsDeGroot { eps }, roles, distortion, seed, opinions);
    let mut layers = vec![sim.state().now.clone()];
    for _ in 0..steps {
        sim.step();
        layers.push(sim.state().now.clone());
    }
    layers
}

#[test]
fn exact_lyapunov_identities() {
    let g = Graph::generate(&GraphSpec::RandomRegular { n: 16, degree: 3, seed: 2 }).unwrap();
    let layers = run_layers(&g, 0.05, Distortion::None, &[], 12, 7);
    let config = LyapunovConfig { center: 3, ratio: 0.75 };
    let weights = EdgeWeights::new(&g, config).unwrap();
    for t in 1..layers.len() - 1 {
        let l_t = exact::lyapunov(&g, config, &layers[t], &layers[t + 1]);
        // L is the sum of the forward terms ...
        assert_eq!(l_t, exact::sum_j_plus(&g, config, &layers[t], &layers[t + 1]));
        // ... and the backward terms one step later sum to the same value
        assert_eq!(l_t, exact::sum_j_minus(&g, config, &layers[t + 1], &layers[t]));
        let float = lyapunov(&g, &weights, &layers[t], &layers[t + 1]);
        assert!((float - l_t.to_f64().unwrap()).abs() <= 1e-12 * float.max(1.0));
    }
}

#[test]
fn exact_lyapunov_does_not_increase() {
    let g = Graph::generate(&GraphSpec::Cycle { n: 9 }).unwrap();
    let layers = run_layers(&g, 0.1, Distortion::None, &[Bot { node: 0, value: 1.0 }], 30, 1);
    let config = LyapunovConfig { center: 4, ratio: 0.91 };
    let series: Vec<BigRational> = (0..layers.len() - 1)
        .map(|t| exact::lyapunov(&g, config, &layers[t], &layers[t + 1]))
        .collect();
    for w in series.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn tracker_matches_batch_audit() {
    let g = Graph::generate(&GraphSpec::RandomRegular { n: 60, degree: 3, seed: 4 }).unwrap();
    let (eps, gamma) = (0.02, 0.019);
    let params = eps_degroot_params(eps, gamma).unwrap();
    for (distortion, seed) in [(Distortion::None, 1), (Distortion::UniformNoise { beta: 0.0171 }, 2)] {
        let init = InitialDistribution {
            mu: 0.5,
            noise: Noise::Uniform { half_width: 0.5 },
            clip_range: None,
        };
        let roles = roles_from_bots(g.node_count(), &[]).unwrap();
        let opinions = init.sample(g.node_count(), seed).unwrap();
        let mut sim = Simulation::new(&g, UpdateRule::EpsDeGroot { eps }, roles, distortion, seed, opinions);
        let mut tracker = LyapunovTracker::new(&g, 5, params.gamma, params.eta).unwrap().keep_series();
        let mut layers = vec![sim.state().now.clone()];
        for _ in 0..700 {
            sim.step();
            tracker.observe(&g, sim.state());
            layers.push(sim.state().now.clone());
        }
        let streamed = tracker.finish();
        let batch = check_variation_bound(&g, 5, params.gamma, params.eta, &layers, 0, 700).unwrap();
        assert_eq!(streamed.lyapunov.len(), batch.lyapunov.len());
        for (a, b) in streamed.lyapunov.iter().zip(&batch.lyapunov) {
            assert!((a - b).abs() <= 1e-9 * batch.mass, "{a} vs {b}");
        }
        assert!((streamed.variation - batch.variation).abs() <= 1e-12);
        assert!(batch.monotone.pass && batch.bound.pass);
        assert!(streamed.monotone.pass && streamed.bound.pass);
        assert!(tracker.max_drift() <= 1e-9 * batch.mass);
    }
}

#[test]
fn variation_matches_direct_sum() {
    let g = Graph::generate(&GraphSpec::Torus { width: 7, height: 7 }).unwrap();
    let layers = run_layers(&g, 0.05, Distortion::None, &[], 200, 3);
    let params = eps_degroot_params(0.05, 0.04).unwrap();
    let audit = check_variation_bound(&g, 10, params.gamma, params.eta, &layers, 0, 200).unwrap();
    let direct: f64 = (1..200).map(|t| (layers[t + 1][10] - layers[t - 1][10]).abs()).sum();
    assert!((audit.variation - direct).abs() <= 1e-12);
    assert!(audit.variation <= audit.budget + 1e-9 * audit.mass / params.eta);
}
