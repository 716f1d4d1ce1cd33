use arturo_zoo::SyntheticQuadraticTask;

#[test]
fn noisy_gradients_average_to_the_exact_gradient() {
    let s = 0.5;
    let task = SyntheticQuadraticTask::random(6, 0.1, 10.0, s, 17).unwrap();
    let mu = [0.3, -0.2, 0.0, 1.5, -1.0, 0.7];
    let draws = 10_000;
    let mut mean = [0.0; 6];
    for k in 0..draws {
        for (m, g) in mean.iter_mut().zip(task.grad(&mu, k).unwrap()) {
            *m += g / draws as f64;
        }
    }
    let exact = task.exact_grad(&mu);
    for j in 0..6 {
        let tol = 3.0 * s * task.d[j] / (draws as f64).sqrt();
        assert!((mean[j] - exact[j]).abs() <= tol, "dim {j}: {} vs {}", mean[j], exact[j]);
    }
}

#[test]
fn batched_draws_shrink_the_noise() {
    let task = SyntheticQuadraticTask::new(vec![0.0; 4], vec![1.0; 4], 1.0, 5).unwrap();
    let mu = [0.0; 4];
    let spread = |samples: usize| {
        let vals: Vec<f64> = (0..2000).map(|k| task.grad_batch(&mu, k, samples).unwrap()[0]).collect();
        vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64
    };
    let (v1, v16) = (spread(1), spread(16));
    assert!((v1 - 1.0).abs() < 0.1, "{v1}");
    assert!((v16 - 1.0 / 16.0).abs() < 0.01, "{v16}");
}

#[test]
fn draws_are_reproducible_and_validated() {
    let task = SyntheticQuadraticTask::random(3, 1.0, 1.0, 0.2, 1).unwrap();
    assert_eq!(task.d, vec![1.0; 3]);
    let mu = [0.0; 3];
    assert_eq!(task.grad(&mu, 9).unwrap(), task.grad(&mu, 9).unwrap());
    assert_ne!(task.grad(&mu, 9).unwrap(), task.grad(&mu, 10).unwrap());
    assert!(task.grad(&[0.0; 2], 0).is_err());
    assert!(task.grad_batch(&mu, 0, 0).is_err());
    assert!(SyntheticQuadraticTask::new(vec![0.0], vec![-1.0], 0.1, 0).is_err());
    let quiet = SyntheticQuadraticTask::new(vec![1.0], vec![2.0], 0.0, 0).unwrap();
    assert_eq!(quiet.grad(&[0.0], 3).unwrap(), vec![-2.0]);
    assert_eq!(quiet.loss(&[0.0]), 1.0);
}
