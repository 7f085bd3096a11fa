use dynkin_core::neuralnet::*;
use dynkin_core::seed;
use proptest::prelude::*;

fn sample(n: usize) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
    let ys = xs.iter().map(|x| (5.0 * x).sin() + 0.3 * x).collect();
    (xs, ys)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn loss_gradient_matches_differences(s in any::<u64>(), hidden in 1usize..12) {
        let net = FeedforwardNet::shallow(hidden, Activation::Tanh, &mut seed::rng(s)).unwrap();
        let (xs, ys) = sample(17);
        let (_, grad) = loss_and_gradient(&net, &xs, &ys);
        let theta = net.params();
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-3);
        for k in 0..theta.len() {
            let h = 1e-6 * theta[k].abs().max(1.0);
            let mut probe = net.clone();
            let mut t = theta.clone();
            t[k] += h;
            probe.set_params(&t).unwrap();
            let up = loss_and_gradient(&probe, &xs, &ys).0;
            t[k] -= 2.0 * h;
            probe.set_params(&t).unwrap();
            let down = loss_and_gradient(&probe, &xs, &ys).0;
            let fd = (up - down) / (2.0 * h);
            prop_assert!((fd - grad[k]).abs() <= 1e-5 * scale, "param {}: {} vs {}", k, fd, grad[k]);
        }
    }

    #[test]
    fn gradient_pass_returns_the_output(s in any::<u64>(), x in -1.0f64..2.0) {
        let net = FeedforwardNet::shallow(8, Activation::Tanh, &mut seed::rng(s)).unwrap().with_input_range(-1.0, 2.0);
        let mut grad = vec![0.0; net.param_count()];
        let out = net.gradient(x, &mut grad);
        prop_assert!((out - net.eval(x)).abs() <= 1e-14);
        prop_assert!((out - net.forward(&[x]).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn levenberg_marquardt_loss_never_increases() {
    let (xs, ys) = sample(33);
    for s in 0..4u64 {
        let init = FeedforwardNet::shallow(10, Activation::Tanh, &mut seed::rng(s)).unwrap();
        let mut config = TrainConfig::new(Optimizer::LevenbergMarquardt);
        let mut last = loss_and_gradient(&init, &xs, &ys).0;
        for iters in 1..=40 {
            config.max_iters = iters;
            let (net, _, _) = levenberg_marquardt(&init, &xs, &ys, &config, Evidence::Off).unwrap();
            let loss = loss_and_gradient(&net, &xs, &ys).0;
            assert!(loss <= last, "seed {s}, {iters} iterations: {loss} > {last}");
            last = loss;
        }
    }
}

#[test]
fn optimizers_share_the_stopping_rule() {
    let (xs, ys) = sample(33);
    let init = FeedforwardNet::shallow(10, Activation::Tanh, &mut seed::rng(3)).unwrap();
    let start = loss_and_gradient(&init, &xs, &ys).0;
    for opt in [Optimizer::LevenbergMarquardt, Optimizer::Lbfgs, Optimizer::BayesianRegularization] {
        let mut config = TrainConfig::new(opt);
        config.max_iters = 60;
        let (net, report) = fit(&init, &xs, &ys, &config).unwrap();
        assert!(report.iterations <= 60);
        assert!(report.mse <= start, "{opt:?}");
        assert!((report.mse - loss_and_gradient(&net, &xs, &ys).0).abs() <= 1e-14);
    }
}
