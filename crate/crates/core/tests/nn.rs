use cidnet::netspec::{
    ActivationKind, ActivationSpec, Domain, LayerDecl, LayerKind, NetworkSpec, Variant,
};
use cidnet::nn::*;
use cidnet::pipeline::Model;
use cidnet::{Complex, ComplexTensor, RealTensor, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_complex(rng: &mut ChaCha8Rng, shape: Shape) -> ComplexTensor {
    ComplexTensor::from_fn(shape, |_, _, _| {
        Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

fn layer(
    kernel_count: usize,
    kernels: &[(usize, usize)],
    kind: ActivationKind,
    pieces: usize,
) -> LayerDecl {
    LayerDecl {
        kind: if kernels.len() > 1 {
            LayerKind::Inception
        } else {
            LayerKind::Conv
        },
        kernel_count,
        kernels: kernels.to_vec(),
        activation: ActivationSpec { kind, pieces },
    }
}

fn tiny(domain: Domain) -> NetworkSpec {
    let kind = match domain {
        Domain::Real => ActivationKind::Mu,
        Domain::Complex => ActivationKind::Amu,
    };
    NetworkSpec::custom(
        "tiny",
        domain,
        3,
        vec![
            layer(8, &[(3, 3)], kind, 2),
            layer(4, &[(3, 3), (5, 3)], kind, 2),
            layer(2, &[(1, 1)], kind, 2),
        ],
    )
    .unwrap()
}

#[test]
fn complex_conv_is_linear_in_the_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut l = ComplexConvLayer::zeros(2, 3, (3, 5));
    xavier_init(&mut l, &mut rng);
    let a = rand_complex(&mut rng, Shape::new(3, 6, 7));
    let b = rand_complex(&mut rng, Shape::new(3, 6, 7));
    let k = Complex::new(0.3, -1.2);
    let lhs = complex_conv2d(&a.scale(k).add(&b).unwrap(), &l).unwrap();
    let rhs = complex_conv2d(&a, &l)
        .unwrap()
        .scale(k)
        .add(&complex_conv2d(&b, &l).unwrap())
        .unwrap();
    for (x, y) in lhs.planes().iter().zip(rhs.planes()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn xavier_variance_matches_uniform_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // 64 * 32 * 7 * 7 > 10^5 draws per plane
    let mut l = ComplexConvLayer::zeros(64, 32, (7, 7));
    xavier_init(&mut l, &mut rng);
    let fan = (32 + 64) * 49;
    let expect = 2.0 / fan as f64;
    let bound = xavier_bound(32 * 49, 64 * 49);
    for plane in [&l.w_re, &l.w_im] {
        assert!(plane.len() >= 100_000);
        assert!(plane.iter().all(|v| v.abs() <= bound));
        let var = plane.iter().map(|v| v * v).sum::<f64>() / plane.len() as f64;
        assert!(
            (var / expect - 1.0).abs() < 0.05,
            "variance {var} vs {expect}"
        );
    }
    assert!(l.b_re.iter().chain(&l.b_im).all(|&b| b == 0.0));

    let mut again = ComplexConvLayer::zeros(64, 32, (7, 7));
    xavier_init(&mut again, &mut ChaCha8Rng::seed_from_u64(4));
    assert_eq!(again, l);
}

#[test]
fn non_selected_branch_has_no_gradient() {
    // one output pixel, two pieces; the second piece loses by a wide margin
    let spec = NetworkSpec::custom(
        "one",
        Domain::Complex,
        1,
        vec![layer(2, &[(1, 1)], ActivationKind::Amu, 2)],
    )
    .unwrap();
    let mut net = Network::new(&spec).unwrap();
    net.set_params_flat(&[2.0, 0.1, 0.5, 0.05, 0.0, 0.0, 0.0, 0.0])
        .unwrap();
    let x = Signal::Complex(ComplexTensor::from_fn(Shape::new(1, 1, 1), |_, _, _| {
        Complex::new(1.0, 0.5)
    }));
    let y = Signal::Complex(ComplexTensor::zeros(Shape::new(1, 1, 1)));
    let s = Sample {
        input: x,
        target: y,
    };
    let (loss, grad) = batch_gradient(&net, std::slice::from_ref(&s)).unwrap();
    // parameter layout: w_re[2], w_im[2], b_re[2], b_im[2]
    for i in [1, 3, 5, 7] {
        assert_eq!(grad[i], 0.0, "parameter {i}");
    }
    let mut p = net.params_flat();
    p[1] += 1e-3;
    net.set_params_flat(&p).unwrap();
    assert_eq!(sample_loss(&net, &s).unwrap(), loss);
}

#[test]
fn overfits_a_single_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net_spec = tiny(Domain::Complex);
    let mut net = Network::initialized(&net_spec, &mut rng).unwrap();
    let x = rand_complex(&mut rng, Shape::new(3, 6, 6));
    let s = Sample {
        input: Signal::Complex(x.clone()),
        target: Signal::Complex(x.channels(0..1).scale_real(0.5)),
    };
    let cfg = TrainerConfig {
        batch_size: 1,
        lr0: 1e-2,
        max_epochs: 500,
        threads: 1,
        ..Default::default()
    };
    let report = train(
        &mut net,
        std::slice::from_ref(&s),
        std::slice::from_ref(&s),
        &cfg,
    )
    .unwrap();
    let first = report.history[0].train_loss;
    assert!(
        report.best_val_loss < 0.01 * first,
        "{} vs {first}",
        report.best_val_loss
    );
    // on average decreasing: each 50-epoch window beats the previous one until converged
    let means: Vec<f64> = report
        .history
        .chunks(50)
        .map(|c| c.iter().map(|r| r.train_loss).sum::<f64>() / c.len() as f64)
        .collect();
    assert!(means.windows(2).take(3).all(|w| w[1] < w[0]), "{means:?}");
}

#[test]
fn training_is_deterministic_and_thread_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let spec = tiny(Domain::Complex);
    let init = Network::initialized(&spec, &mut rng).unwrap();
    let set: Vec<Sample> = (0..4)
        .map(|_| {
            let x = rand_complex(&mut rng, Shape::new(3, 8, 8));
            Sample {
                target: Signal::Complex(x.channels(1..2)),
                input: Signal::Complex(x),
            }
        })
        .collect();
    let run = |threads| {
        let mut net = init.clone();
        let cfg = TrainerConfig {
            batch_size: 2,
            lr0: 1e-3,
            max_epochs: 5,
            crop: Some((5, 6)),
            threads,
            ..Default::default()
        };
        (train(&mut net, &set[..3], &set[3..], &cfg).unwrap(), net)
    };
    let (a, na) = run(1);
    let (b, nb) = run(1);
    let (c, nc) = run(3);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(na, nb);
    assert_eq!(na, nc);
}

#[test]
fn empty_sets_are_rejected() {
    let mut net = Network::new(&tiny(Domain::Real)).unwrap();
    let err = train(&mut net, &[], &[], &TrainerConfig::default()).unwrap_err();
    assert!(matches!(err, cidnet::Error::Config(_)));
}

#[test]
fn two_branch_model_processes_planes_independently() {
    let model = Model::initialized(Variant::TwoBranch, 3).unwrap();
    let Model::TwoBranch { re, im } = &model else {
        panic!("expected two branches")
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = rand_complex(&mut rng, Shape::new(3, 10, 12));
    let y = model.forward(&Signal::Complex(x.clone())).unwrap();
    let y = y.as_complex().unwrap();
    let yr = re.forward(&Signal::Real(x.real_part())).unwrap();
    let yi = im.forward(&Signal::Real(x.imag_part())).unwrap();
    assert_eq!(y.re(), yr.values());
    assert_eq!(y.im(), yi.values());
    assert_ne!(re.params_flat(), im.params_flat());
}

#[test]
fn zero_final_layer_gives_zero_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = &NetworkSpec::branches(Variant::Cid)[0];
    let mut net = Network::initialized(spec, &mut rng).unwrap();
    let last = net.units_mut().last_mut().unwrap();
    for a in last.params_mut() {
        a.fill(0.0);
    }
    let x = rand_complex(&mut rng, Shape::new(3, 12, 9));
    let y = net.forward(&Signal::Complex(x)).unwrap();
    assert_eq!(y.shape(), Shape::new(1, 12, 9));
    assert!(y.values().iter().all(|&v| v == 0.0));
}

#[test]
fn every_variant_preserves_spatial_extent() {
    for v in [Variant::Cid, Variant::Id, Variant::TwoBranch] {
        let model = Model::initialized(v, 0).unwrap();
        let x = if v.uses_iq() {
            Signal::Complex(ComplexTensor::zeros(Shape::new(3, 9, 7)))
        } else {
            Signal::Real(RealTensor::zeros(Shape::new(3, 9, 7)))
        };
        assert_eq!(
            model.forward(&x).unwrap().shape(),
            Shape::new(1, 9, 7),
            "{v}"
        );
    }
}
