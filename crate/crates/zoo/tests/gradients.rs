//! Backpropagation against finite differences and a scalar reference.

use arturo_zoo::{fd_check, Arch, Batch, Loss, Model};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> Batch {
    let inputs = Array2::from_shape_fn((n, d), |_| rng.random_range(0.0..1.0));
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Batch { inputs, labels }
}

fn check(model: &Model, seeds: std::ops::Range<u64>, coords_per_seed: usize) {
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let params = model.init_params(seed);
        let batch = random_batch(&mut rng, 6, model.arch().input_size(), model.arch().num_classes());
        let coords: Vec<usize> = (0..coords_per_seed).map(|_| rng.random_range(0..model.num_params())).collect();
        let err = fd_check(model, &params, &batch, &coords, 1e-6).unwrap();
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    for loss in [Loss::CrossEntropy, Loss::SquaredError] {
        check(&Model::new(Arch::mlp(&[20, 16, 8, 5]), loss).unwrap(), 0..5, 50);
    }
}

#[test]
fn cnn_gradients_match_finite_differences() {
    for loss in [Loss::CrossEntropy, Loss::SquaredError] {
        check(&Model::new(Arch::small_cnn(2, 8, 8, 4), loss).unwrap(), 0..5, 50);
    }
}

#[test]
fn fd_check_rejects_bad_arguments() {
    let model = Model::new(Arch::mlp(&[3, 2]), Loss::CrossEntropy).unwrap();
    let params = model.init_params(0);
    let batch = Batch { inputs: Array2::zeros((1, 3)), labels: vec![1] };
    assert!(fd_check(&model, &params, &batch, &[0], 0.0).is_err());
    assert!(fd_check(&model, &params, &batch, &[model.num_params()], 1e-5).is_err());
}

/// Loop-based 4-3-2 network with ReLU hidden units.
fn scalar_reference(p: &[f64], x: &[[f64; 4]], y: &[usize], loss: Loss) -> (f64, Vec<f64>) {
    let w1 = |o: usize, i: usize| p[o * 4 + i];
    let b1 = |o: usize| p[12 + o];
    let w2 = |o: usize, i: usize| p[15 + o * 3 + i];
    let b2 = |o: usize| p[21 + o];
    let n = x.len() as f64;
    let mut total = 0.0;
    let mut g = vec![0.0; 23];
    for (xs, &label) in x.iter().zip(y) {
        let z1: Vec<f64> = (0..3).map(|o| b1(o) + (0..4).map(|i| w1(o, i) * xs[i]).sum::<f64>()).collect();
        let h: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
        let out: Vec<f64> = (0..2).map(|o| b2(o) + (0..3).map(|i| w2(o, i) * h[i]).sum::<f64>()).collect();
        let onehot = |k: usize| if k == label { 1.0 } else { 0.0 };
        let d_out: Vec<f64> = match loss {
            Loss::CrossEntropy => {
                let m = out[0].max(out[1]);
                let z: f64 = out.iter().map(|o| (o - m).exp()).sum();
                total += -(out[label] - m - z.ln());
                (0..2).map(|k| (out[k] - m).exp() / z - onehot(k)).collect()
            }
            Loss::SquaredError => {
                total += (0..2).map(|k| (out[k] - onehot(k)).powi(2)).sum::<f64>();
                (0..2).map(|k| 2.0 * (out[k] - onehot(k))).collect()
            }
        };
        for o in 0..2 {
            for i in 0..3 {
                g[15 + o * 3 + i] += d_out[o] * h[i] / n;
            }
            g[21 + o] += d_out[o] / n;
        }
        for i in 0..3 {
            if z1[i] <= 0.0 {
                continue;
            }
            let dh: f64 = (0..2).map(|o| d_out[o] * w2(o, i)).sum();
            for j in 0..4 {
                g[i * 4 + j] += dh * xs[j] / n;
            }
            g[12 + i] += dh / n;
        }
    }
    (total / n, g)
}

#[test]
fn small_mlp_matches_scalar_reference() {
    let model_ce = Model::new(Arch::mlp(&[4, 3, 2]), Loss::CrossEntropy).unwrap();
    let model_se = Model::new(Arch::mlp(&[4, 3, 2]), Loss::SquaredError).unwrap();
    assert_eq!(model_ce.num_params(), 23);
    let params: Vec<f64> = (0..23).map(|k| ((k * 7 % 11) as f64 - 5.0) * 0.13).collect();
    let x = [[0.1, 0.9, 0.3, 0.0], [1.0, 0.2, 0.5, 0.7], [0.0, 0.0, 0.4, 0.8]];
    let y = [1, 0, 1];
    let batch = Batch {
        inputs: Array2::from_shape_fn((3, 4), |(r, c)| x[r][c]),
        labels: y.to_vec(),
    };
    for (model, loss) in [(&model_ce, Loss::CrossEntropy), (&model_se, Loss::SquaredError)] {
        let (l, g) = model.loss_and_grad(&params, &batch).unwrap();
        let (l_ref, g_ref) = scalar_reference(&params, &x, &y, loss);
        assert!((l - l_ref).abs() < 1e-12, "{loss:?}: {l} vs {l_ref}");
        for (k, (a, b)) in g.iter().zip(&g_ref).enumerate() {
            assert!((a - b).abs() < 1e-12, "{loss:?} coord {k}: {a} vs {b}");
        }
        assert_eq!(model.forward_loss(&params, &batch).unwrap().0, l);
    }
}

#[test]
fn flatten_roundtrips() {
    let model = Model::new(Arch::small_cnn(1, 8, 8, 3), Loss::CrossEntropy).unwrap();
    let params = model.init_params(4);
    let layers = model.unflatten(&params).unwrap();
    assert_eq!(model.flatten(&layers).unwrap(), params);
}
