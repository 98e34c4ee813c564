use prspider::numerics::{ParamVector, RngStream, StreamId};
use prspider::problems::{make_nonconvex_suite, make_quadratic_suite, make_suite, Family, ProblemSuite, SampleCount};
use prspider::verify::{enumeration_bias, finite_difference_error, smoothness_ratio, variance_ratio};

fn suites() -> Vec<(&'static str, ProblemSuite)> {
    vec![
        ("quadratic finite", make_quadratic_suite(3, SampleCount::Finite(32), 6, 1.0, 7).unwrap()),
        ("quadratic online", make_quadratic_suite(3, SampleCount::Online, 6, 1.0, 7).unwrap()),
        ("sigmoid finite", make_nonconvex_suite(3, SampleCount::Finite(32), 6, 1.0, 7).unwrap()),
        ("sigmoid online", make_nonconvex_suite(3, SampleCount::Online, 6, 1.0, 7).unwrap()),
    ]
}

#[test]
fn gradients_are_lipschitz_with_the_declared_constant() {
    for (name, suite) in suites() {
        let ratio = smoothness_ratio(&suite, 10_000, 1).unwrap();
        assert!(ratio <= 1.0 + 1e-12, "{name}: ratio {ratio}");
    }
}

#[test]
fn sampled_variance_stays_below_the_declared_bound() {
    for (name, suite) in suites() {
        let ratio = variance_ratio(&suite, 20, 2000, 2).unwrap();
        assert!(ratio <= 1.0, "{name}: ratio {ratio}");
    }
}

#[test]
fn gradients_match_finite_differences() {
    for (name, suite) in suites() {
        let err = finite_difference_error(&suite, 50, 3).unwrap();
        assert!(err <= 1e-6, "{name}: relative error {err}");
    }
}

#[test]
fn finite_sum_sampler_is_unbiased() {
    for (name, suite) in suites().into_iter().filter(|(_, s)| s.is_finite_sum()) {
        let bias = enumeration_bias(&suite, 10, 4).unwrap();
        assert!(bias <= 1e-12, "{name}: bias {bias}");
    }
}

#[test]
fn quadratic_optimum_lower_bounds_every_point() {
    for samples in [SampleCount::Finite(16), SampleCount::Online] {
        let suite = make_quadratic_suite(4, samples, 5, 2.0, 9).unwrap();
        let f_star = suite.optimum_value();
        let centre = suite.grand_mean().unwrap().clone();
        assert!((suite.value(&centre) - f_star).abs() <= 1e-12 * (1.0 + f_star));
        let mut rng = RngStream::new(5, StreamId::new(0, 0, 0));
        for _ in 0..1000 {
            let x = ParamVector::new((0..5).map(|_| rng.uniform(-5.0, 5.0)).collect());
            assert!(suite.value(&x) >= f_star);
        }
    }
}

#[test]
fn sigmoid_reference_value_lower_bounds_sampled_points() {
    let suite = make_nonconvex_suite(4, SampleCount::Finite(32), 5, 1.0, 9).unwrap();
    let f_star = suite.optimum_value();
    let mut rng = RngStream::new(6, StreamId::new(0, 0, 0));
    for _ in 0..1000 {
        let x = ParamVector::new((0..5).map(|_| rng.uniform(-5.0, 5.0)).collect());
        assert!(suite.value(&x) >= f_star);
    }
}

#[test]
fn generators_are_deterministic_in_the_seed() {
    for family in [Family::Quadratic, Family::Sigmoid] {
        let a = make_suite(family, 3, SampleCount::Finite(8), 4, 1.0, 42).unwrap();
        let b = make_suite(family, 3, SampleCount::Finite(8), 4, 1.0, 42).unwrap();
        let c = make_suite(family, 3, SampleCount::Finite(8), 4, 1.0, 43).unwrap();
        let x = ParamVector::new(vec![0.3, -0.1, 0.2, 0.5]);
        assert_eq!(a.value(&x), b.value(&x));
        assert_eq!(a.initial_point(), b.initial_point());
        assert_ne!(a.value(&x), c.value(&x));
    }
}

#[test]
fn fused_value_and_gradient_match_separate_passes() {
    for (name, suite) in suites() {
        let x = suite.initial_point().clone();
        let (f, g) = suite.value_and_gradient(&x);
        let g_ref = suite.true_global_gradient(&x);
        assert!((f - suite.value(&x)).abs() <= 1e-12 * (1.0 + f.abs()), "{name}");
        let err = prspider::numerics::sq_dist(&g, &g_ref).sqrt();
        assert!(err <= 1e-12, "{name}: {err}");
    }
}

#[test]
fn invalid_shapes_are_rejected() {
    assert!(make_quadratic_suite(0, SampleCount::Finite(4), 3, 1.0, 0).is_err());
    assert!(make_quadratic_suite(2, SampleCount::Finite(0), 3, 1.0, 0).is_err());
    assert!(make_nonconvex_suite(2, SampleCount::Finite(4), 0, 1.0, 0).is_err());
    assert!(make_nonconvex_suite(2, SampleCount::Finite(4), 3, -1.0, 0).is_err());
}
