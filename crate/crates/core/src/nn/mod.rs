//! Small dense networks with exact reverse-mode gradients.

mod adam;
mod dense;

pub use adam::{Adam, AdamConfig};
pub use dense::{
    soft_update, Activation, DenseLayer, DenseNetwork, ForwardTrace, GradientBundle, LayerGrads,
    ParamGrads,
};

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(rng: &mut ChaCha8Rng) -> DenseNetwork {
        let depth = rng.random_range(1..4);
        let mut sizes = vec![rng.random_range(1..6)];
        for _ in 0..depth {
            sizes.push(rng.random_range(1..7));
        }
        let acts = [Activation::Relu, Activation::Tanh, Activation::Identity];
        let hidden = acts[rng.random_range(0..3)];
        let out = acts[rng.random_range(0..3)];
        DenseNetwork::mlp(&sizes, hidden, out, 0.5, rng).unwrap()
    }

    fn scalar(net: &DenseNetwork, x: &[f64], up: &[f64]) -> f64 {
        net.forward(x)
            .unwrap()
            .iter()
            .zip(up)
            .map(|(a, b)| a * b)
            .sum()
    }

    fn param_mut(net: &mut DenseNetwork, li: usize, k: usize) -> &mut f64 {
        let l = &mut net.layers_mut()[li];
        let n_w = l.weights.len();
        if k < n_w {
            &mut l.weights[k]
        } else {
            &mut l.bias[k - n_w]
        }
    }

    fn near_kink(net: &DenseNetwork, x: &[f64]) -> bool {
        // central differences are meaningless next to a ReLU corner
        let mut cur = x.to_vec();
        for l in net.layers() {
            let mut pre = vec![0.0; l.outputs];
            for (o, p) in pre.iter_mut().enumerate() {
                *p = l.bias[o]
                    + (0..l.inputs)
                        .map(|i| l.weights[o * l.inputs + i] * cur[i])
                        .sum::<f64>();
            }
            if l.activation == Activation::Relu && pre.iter().any(|p| p.abs() < 1e-4) {
                return true;
            }
            cur = net_apply(l.activation, &pre);
        }
        false
    }

    fn net_apply(a: Activation, pre: &[f64]) -> Vec<f64> {
        pre.iter()
            .map(|&v| match a {
                Activation::Relu => v.max(0.0),
                Activation::Tanh => num_traits::Float::tanh(v),
                Activation::Identity => v,
            })
            .collect()
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-6;
        let mut checked = 0;
        while checked < 50 {
            let net = random_net(&mut rng);
            let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let up: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            if near_kink(&net, &x) {
                continue;
            }
            let g = net.backward(&x, &up).unwrap();
            let mut probe = net.clone();
            for li in 0..net.layers().len() {
                let n_w = net.layers()[li].weights.len();
                for k in 0..n_w + net.layers()[li].bias.len() {
                    let orig = *param_mut(&mut probe, li, k);
                    *param_mut(&mut probe, li, k) = orig + h;
                    let plus = scalar(&probe, &x, &up);
                    *param_mut(&mut probe, li, k) = orig - h;
                    let minus = scalar(&probe, &x, &up);
                    *param_mut(&mut probe, li, k) = orig;
                    let fd = (plus - minus) / (2.0 * h);
                    let an = if k < n_w {
                        g.params.layers[li].weights[k]
                    } else {
                        g.params.layers[li].bias[k - n_w]
                    };
                    let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                    assert!(err < 1e-5, "param grad {an} vs fd {fd}");
                }
            }
            for i in 0..x.len() {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let fd = (scalar(&net, &xp, &up) - scalar(&net, &xm, &up)) / (2.0 * h);
                let err = (fd - g.input[i]).abs() / fd.abs().max(g.input[i].abs()).max(1e-6);
                assert!(err < 1e-5, "input grad {} vs fd {fd}", g.input[i]);
            }
            checked += 1;
        }
    }

    #[test]
    fn frozen_layers_get_zero_param_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net =
            DenseNetwork::mlp(&[3, 4, 2], Activation::Tanh, Activation::Identity, 0.5, &mut rng)
                .unwrap();
        net.layers_mut()[0].frozen = true;
        let g = net.backward(&[0.3, -0.2, 0.9], &[1.0, 1.0]).unwrap();
        assert!(g.params.layers[0].weights.iter().all(|&w| w == 0.0));
        assert!(g.params.layers[1].weights.iter().any(|&w| w != 0.0));
        assert!(g.input.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn mismatched_input_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = DenseNetwork::mlp(&[3, 2], Activation::Relu, Activation::Identity, 0.1, &mut rng)
            .unwrap();
        assert!(net.forward(&[1.0, 2.0]).is_err());
        assert!(net.backward(&[1.0, 2.0, 3.0], &[1.0]).is_err());
    }

    #[test]
    fn inconsistent_layers_are_rejected() {
        let a = DenseLayer::zeros(3, 4, Activation::Relu);
        let b = DenseLayer::zeros(5, 1, Activation::Identity);
        assert!(DenseNetwork::new(vec![a, b]).is_err());
        assert!(DenseNetwork::new(Vec::new()).is_err());
    }

    #[test]
    fn soft_update_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = DenseNetwork::mlp(&[2, 3, 1], Activation::Relu, Activation::Identity, 0.5, &mut rng)
            .unwrap();
        let orig = DenseNetwork::mlp(&[2, 3, 1], Activation::Relu, Activation::Identity, 0.5, &mut rng)
            .unwrap();
        let mut t = orig.clone();
        soft_update(&mut t, &src, 0.0).unwrap();
        assert_eq!(t, orig);
        soft_update(&mut t, &src, 1.0).unwrap();
        assert_eq!(t, src);
        let mut half = orig.clone();
        soft_update(&mut half, &src, 0.5).unwrap();
        let w = half.layers()[0].weights[0];
        let expect = 0.5 * (src.layers()[0].weights[0] + orig.layers()[0].weights[0]);
        assert!((w - expect).abs() < 1e-15);
        assert!(soft_update(&mut t, &src, 1.5).is_err());
    }

    #[test]
    fn adam_fits_a_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net =
            DenseNetwork::mlp(&[1, 1], Activation::Identity, Activation::Identity, 0.1, &mut rng)
                .unwrap();
        let mut opt = Adam::new(&net, AdamConfig::with_learning_rate(0.05));
        let mut grads = ParamGrads::zeros_like(&net);
        let mut trace = ForwardTrace::default();
        let mut ig = Vec::new();
        for _ in 0..2000 {
            grads.fill_zero();
            for k in 0..8 {
                let x = k as f64 / 4.0 - 1.0;
                net.forward_trace(&[x], &mut trace).unwrap();
                let err = trace.output()[0] - (3.0 * x - 0.5);
                net.backward_trace(&[x], &trace, &[2.0 * err / 8.0], &mut grads, &mut ig)
                    .unwrap();
            }
            opt.step(&mut net, &grads).unwrap();
        }
        let l = &net.layers()[0];
        assert!((l.weights[0] - 3.0).abs() < 1e-3 && (l.bias[0] + 0.5).abs() < 1e-3);
    }
}
