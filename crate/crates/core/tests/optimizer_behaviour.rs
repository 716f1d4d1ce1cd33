use arturo::{
    Arturo, ArturoConfig, ArturoState, ConstantEta, Error, Mode, Optimizer, WeightDecayMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Quadratic {
    d: Vec<f64>,
    theta: Vec<f64>,
}

impl Quadratic {
    fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
        let theta = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { d, theta }
    }

    fn grad(&self, mu: &[f64]) -> Vec<f64> {
        mu.iter().zip(&self.theta).zip(&self.d).map(|((m, t), d)| d * (m - t)).collect()
    }

    fn dist(&self, mu: &[f64]) -> f64 {
        mu.iter().zip(&self.theta).map(|(m, t)| (m - t) * (m - t)).sum::<f64>().sqrt()
    }
}

fn eps_config(epsilon: f64) -> ArturoConfig {
    ArturoConfig { epsilon, ..ArturoConfig::default() }
}

#[test]
fn converges_on_noiseless_quadratics() {
    for seed in 0..5 {
        let task = Quadratic::random(10, seed);
        let mut opt = Arturo::new(eps_config(0.01), vec![0.0; 10]).unwrap();
        let mut mu = vec![0.0; 10];
        let hit = (1..=200).find(|_| {
            let g = task.grad(&mu);
            opt.step(&mut mu, &g).unwrap();
            task.dist(&mu) < 1e-3
        });
        assert!(hit.is_some(), "seed {seed}: distance {} after 200 steps", task.dist(&mu));
    }
}

#[test]
fn forced_constant_eta_equals_fixed_eta_mode() {
    let task = Quadratic::random(20, 3);
    let noise = Normal::new(0.0, 0.5).unwrap();
    for eta in [0.05, 1.0, 30.0] {
        let standard = eps_config(0.02);
        let fixed = ArturoConfig { mode: Mode::FixedEta { eta }, ..standard.clone() };
        let mut s1 = ArturoState::new(20, &standard, vec![0.1; 20]).unwrap();
        let mut s2 = ArturoState::new(20, &fixed, vec![0.1; 20]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let g: Vec<f64> = task.grad(&s1.dist.mu).into_iter().map(|g| g + noise.sample(&mut rng)).collect();
            let d1 = s1.step_with_solver(&g, &standard, &ConstantEta(eta)).unwrap();
            let d2 = s2.step(&g, &fixed).unwrap();
            assert_eq!(d1.eta, d2.eta);
            assert_eq!(s1.dist, s2.dist);
            assert_eq!(s1.filter, s2.filter);
        }
    }
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let task = Quadratic::random(15, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut opt = Arturo::new(eps_config(0.05), vec![0.0; 15]).unwrap();
        let mut mu = vec![0.0; 15];
        let mut trace = Vec::new();
        for _ in 0..200 {
            let g: Vec<f64> = task.grad(&mu).into_iter().map(|g| g + rng.random_range(-1.0..1.0)).collect();
            opt.step(&mut mu, &g).unwrap();
            trace.extend_from_slice(&mu);
        }
        trace
    };
    assert_eq!(run(), run());
}

#[test]
fn variance_does_not_depend_on_the_multiplier() {
    let task = Quadratic::random(8, 2);
    let cfg = eps_config(0.02);
    let mut base = ArturoState::new(8, &cfg, vec![0.2; 8]).unwrap();
    for _ in 0..10 {
        let g = task.grad(&base.dist.mu);
        base.step(&g, &cfg).unwrap();
    }
    let g = task.grad(&base.dist.mu);
    let sigma2: Vec<Vec<f64>> = [0.1, 1.0, 10.0]
        .into_iter()
        .map(|eta| {
            let mut s = base.clone();
            s.step_with_solver(&g, &cfg, &ConstantEta(eta)).unwrap();
            s.dist.sigma2
        })
        .collect();
    assert_eq!(sigma2[0], sigma2[1]);
    assert_eq!(sigma2[1], sigma2[2]);
    assert!(sigma2[0].iter().all(|&v| v > 0.0));
}

#[test]
fn every_step_respects_the_trust_region() {
    let task = Quadratic::random(30, 4);
    let cfg = eps_config(0.01);
    let mut state = ArturoState::new(30, &cfg, vec![0.0; 30]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..300 {
        let g: Vec<f64> = task.grad(&state.dist.mu).into_iter().map(|g| g + rng.random_range(-2.0..2.0)).collect();
        let d = state.step(&g, &cfg).unwrap();
        assert!((d.eta == 0.0 && d.c_mu <= cfg.epsilon) || (d.c_mu - cfg.epsilon).abs() <= 0.1 * cfg.epsilon);
    }
}

#[test]
fn epsilon_schedule_and_weight_decay_modes() {
    let cfg = ArturoConfig { schedule_milestones: vec![2, 3], weight_decay: 0.1, ..ArturoConfig::default() };
    let mut opt = Arturo::new(cfg.clone(), vec![1.0]).unwrap();
    let mut eps = vec![];
    for _ in 0..4 {
        eps.push(opt.state.epsilon);
        opt.on_epoch_end();
    }
    let e0 = cfg.epsilon;
    assert_eq!(eps, vec![e0, e0, e0 * 0.006, e0 * 0.006 * 0.006]);

    // Huge η freezes the trust-region move, leaving only the decay.
    let frozen = |mode| ArturoConfig {
        weight_decay: 0.1,
        weight_decay_mode: mode,
        mode: Mode::FixedEta { eta: 1e15 },
        ..ArturoConfig::default()
    };
    let mut s = ArturoState::new(1, &frozen(WeightDecayMode::Decoupled), vec![2.0]).unwrap();
    s.step(&[0.0], &frozen(WeightDecayMode::Decoupled)).unwrap();
    assert!((s.dist.mu[0] - 1.8).abs() < 1e-9);
}

#[test]
fn rejects_non_finite_gradients_without_moving() {
    let mut opt = Arturo::new(ArturoConfig::default(), vec![0.5, 0.5]).unwrap();
    let mut p = vec![0.5, 0.5];
    opt.step(&mut p, &[0.1, 0.2]).unwrap();
    let before = opt.state.clone();
    let err = opt.step(&mut p, &[f64::NAN, 0.0]).unwrap_err();
    assert_eq!(err, Error::NonFiniteGradient { step: 1, index: 0 });
    assert_eq!(opt.state, before);
}

#[test]
fn moment_surrogate_never_clamps() {
    let cfg = ArturoConfig {
        mode: Mode::AdamMomentSurrogate { beta1: 0.9, beta2: 0.999, adam_eps: 1e-8 },
        ..eps_config(0.01)
    };
    let task = Quadratic::random(10, 8);
    let mut opt = Arturo::new(cfg, vec![0.0; 10]).unwrap();
    let mut mu = vec![0.0; 10];
    let start = task.dist(&mu);
    for _ in 0..300 {
        let g = task.grad(&mu);
        let d = opt.step(&mut mu, &g).unwrap().unwrap();
        assert_eq!(d.clamped, 0);
    }
    assert!(task.dist(&mu) < start);
}
