use bias_lab::enco::{gamma_gradient, EncoNets, EncoParams, GraphBatch};
use bias_lab::info::{entropy, ProbVector};
use bias_lab::meta::{adapt_on_batches, pretrain, sigmoid, Direction, MetaConfig, MetaParams, ModelPair, PretrainConfig};
use bias_lab::sampling::SeededRng;
use bias_lab::scm::{BivariateScm, SamplePair, Variable};
use bias_lab::toy::gate::sample_gate_noise;
use bias_lab::toy::{GateParams, ModelKind, ToyModel, Trainer};

fn swap_batch(batch: &[SamplePair]) -> Vec<SamplePair> {
    batch.iter().map(|s| s.swapped()).collect()
}

#[test]
fn toy_training_is_mirror_symmetric() {
    for kind in [ModelKind::Marginal, ModelKind::Conditional] {
        let mut rng = SeededRng::new(5);
        let scm = BivariateScm::new(5, 1.0, &mut rng).unwrap();
        let model = ToyModel::init(kind, 5, &mut rng);
        let gate = GateParams::new(0.7, 0.2, 2.0).unwrap();
        let mut a = Trainer::new(model.clone(), gate, 0.1);
        let mut b = Trainer::new(model, gate.swapped(), 0.1);
        for _ in 0..300 {
            let batch = scm.sample_batch(64, &mut rng).unwrap();
            let noise = sample_gate_noise(&mut rng);
            let ca = a.step(&batch, noise).unwrap().c;
            let cb = b.step(&swap_batch(&batch), [noise[1], noise[0]]).unwrap().c;
            assert_eq!(ca, [cb[1], cb[0]], "{kind}");
            assert!((ca[0] + ca[1] - 1.0).abs() <= f64::EPSILON);
            assert!(ca[0] > 0.0 && ca[0] < 1.0);
        }
        assert_eq!(a.gate.z, b.gate.swapped().z);
    }
}

#[test]
fn marginal_model_cannot_beat_marginal_entropies() {
    let mut rng = SeededRng::new(8);
    let scm = BivariateScm::new(5, 1.0, &mut rng).unwrap();
    let mut trainer = Trainer::new(
        ToyModel::init(ModelKind::Marginal, 5, &mut rng),
        GateParams::new(0.5, 0.5, 2.0).unwrap(),
        0.1,
    );
    for _ in 0..3000 {
        let batch = scm.sample_batch(128, &mut rng).unwrap();
        trainer.step(&batch, sample_gate_noise(&mut rng)).unwrap();
    }

    let eval = scm.sample_batch(20_000, &mut rng).unwrap();
    let c = trainer.gate.gate([0.0, 0.0]);
    let losses: Vec<f64> = eval
        .iter()
        .map(|s| trainer.model.loss(c, std::slice::from_ref(s)).unwrap())
        .collect();
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();

    let plug_in = |pick: fn(&SamplePair) -> usize| {
        let mut counts = vec![0.0; 5];
        for s in &eval {
            counts[pick(s)] += 1.0;
        }
        entropy(&ProbVector::from_weights(counts).unwrap())
    };
    let bound = plug_in(|s| s.x1) + plug_in(|s| s.x2);
    assert!(mean >= bound - 3.0 * se, "loss {mean} vs entropy sum {bound} (se {se})");
}

fn mirrored(models: &ModelPair) -> ModelPair {
    let mut forward = models.backward.clone();
    forward.direction = Direction::Forward;
    let mut backward = models.forward.clone();
    backward.direction = Direction::Backward;
    ModelPair { forward, backward }
}

#[test]
fn meta_transfer_is_mirror_symmetric() {
    let mut rng = SeededRng::new(12);
    let mut scm = BivariateScm::new(4, 1.0, &mut rng).unwrap();
    let mut models = ModelPair::uniform(4);
    pretrain(&mut models, &scm, &PretrainConfig::default()).unwrap();
    let mut mirror = mirrored(&models);
    let mut meta = MetaParams::new(0.1, 1.0, 10).unwrap();
    meta.gamma = 0.3;
    let mut meta_m = MetaParams { gamma: -0.3, ..meta };
    for episode in 0..40 {
        let target = if episode % 3 == 0 { Variable::X2 } else { Variable::X1 };
        scm.intervene(target, &mut rng).unwrap();
        let batches: Vec<Vec<SamplePair>> = (0..10).map(|_| scm.sample_batch(64, &mut rng).unwrap()).collect();
        let swapped: Vec<Vec<SamplePair>> = batches.iter().map(|b| swap_batch(b)).collect();
        let out = adapt_on_batches(&mut models, &mut meta, &batches).unwrap();
        let out_m = adapt_on_batches(&mut mirror, &mut meta_m, &swapped).unwrap();
        assert_eq!(out.log_l12, out_m.log_l21);
        assert_eq!(out.log_l21, out_m.log_l12);
        assert!((meta.belief() - (1.0 - meta_m.belief())).abs() < 1e-12);
    }
    assert_eq!(mirrored(&models), mirror);
}

#[test]
fn adaptation_lowers_nll() {
    let cfg = MetaConfig::default();
    let (mut first, mut last) = ([0.0; 2], [0.0; 2]);
    for seed in 0..100 {
        let mut rng = SeededRng::new(seed);
        let mut scm = BivariateScm::new(cfg.k, cfg.epsilon, &mut rng).unwrap();
        let mut models = ModelPair::uniform(cfg.k);
        pretrain(&mut models, &scm, &cfg.pretrain).unwrap();
        let target = if seed % 2 == 0 { Variable::X1 } else { Variable::X2 };
        scm.intervene(target, &mut rng).unwrap();
        let batches: Vec<Vec<SamplePair>> = (0..cfg.adapt_steps)
            .map(|_| scm.sample_batch(cfg.batch_size, &mut rng).unwrap())
            .collect();
        let mut meta = MetaParams::new(cfg.meta_lr, cfg.adapt_lr, cfg.adapt_steps).unwrap();
        let out = adapt_on_batches(&mut models, &mut meta, &batches).unwrap();
        for (i, nll) in [&out.nll_forward, &out.nll_backward].into_iter().enumerate() {
            first[i] += nll[0] / 100.0;
            last[i] += nll[nll.len() - 1] / 100.0;
        }
    }
    for i in 0..2 {
        assert!(last[i] < first[i], "model {i}: first {} last {}", first[i], last[i]);
    }
}

#[test]
fn pretrained_factorizations_agree() {
    for seed in 0..10 {
        let mut rng = SeededRng::new(seed);
        let scm = BivariateScm::new(5, [0.1, 1.0, 10.0][seed as usize % 3], &mut rng).unwrap();
        let mut models = ModelPair::uniform(5);
        pretrain(&mut models, &scm, &PretrainConfig::default()).unwrap();
        let batch = scm.sample_batch(100_000, &mut rng).unwrap();
        let diff = models.forward.nll(&batch).unwrap() - models.backward.nll(&batch).unwrap();
        assert!(diff.abs() < 1e-3, "seed {seed}: {diff}");
    }
}

fn scored_batches(seed: u64) -> (EncoParams, Vec<GraphBatch>) {
    let mut rng = SeededRng::new(seed);
    let scm = BivariateScm::new(4, 1.0, &mut rng).unwrap();
    let mut nets = EncoNets::uniform(4);
    for _ in 0..50 {
        nets.fit_step(&scm.sample_batch(128, &mut rng).unwrap(), 1.0).unwrap();
    }
    let mut params = EncoParams::new(0.4, 0.002).unwrap();
    params.gamma12 = rng.uniform_range(-2.0, 2.0);
    params.gamma21 = rng.uniform_range(-2.0, 2.0);
    params.theta12 = rng.uniform_range(-2.0, 2.0);
    let batches = (0..8)
        .map(|i| {
            let target = if i % 3 == 0 { Variable::X2 } else { Variable::X1 };
            GraphBatch::score(&nets, &scm.sample_batch(32, &mut rng).unwrap(), target).unwrap()
        })
        .collect();
    (params, batches)
}

#[test]
fn enco_gamma_gradient_ignores_likelihood_level() {
    for seed in 0..20 {
        let (params, batches) = scored_batches(seed);
        let base = gamma_gradient(&params, &batches).unwrap();
        for (shift_x1, c) in [(true, 7.5), (false, -3.25), (false, 40.0)] {
            let shifted: Vec<GraphBatch> = batches
                .iter()
                .cloned()
                .map(|mut b| {
                    let (with, without) = if shift_x1 {
                        (&mut b.x1_with, &mut b.x1_without)
                    } else {
                        (&mut b.x2_with, &mut b.x2_without)
                    };
                    with.iter_mut().chain(without.iter_mut()).for_each(|v| *v += c);
                    b
                })
                .collect();
            let g = gamma_gradient(&params, &shifted).unwrap();
            assert!((g.0 - base.0).abs() < 1e-12 && (g.1 - base.1).abs() < 1e-12);
        }
    }
}

#[test]
fn enco_suppresses_intervened_variable() {
    let (params, batches) = scored_batches(3);
    for b in &batches {
        assert!(b.edge_slots(b.target, params.lambda_sparse).iter().all(|&v| v == 0.0));
        assert!(b.edge_slots(b.target.other(), params.lambda_sparse).iter().any(|&v| v != 0.0));
    }
    let p = EncoParams { theta12: 1.7, ..params };
    assert!((sigmoid(p.theta12) + sigmoid(p.theta21()) - 1.0).abs() < 1e-15);
}
