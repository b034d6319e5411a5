use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Scalar function of a flattened parameter set, built on a tape.
struct TapeFn<F> {
    shapes: Vec<Shape>,
    build: F,
}

impl<F> TapeFn<F>
where
    F: Fn(&mut Tape) -> Result<NodeId, TensorError>,
{
    fn unflatten(&self, x: &[f64]) -> Vec<Tensor> {
        let mut off = 0;
        self.shapes
            .iter()
            .map(|&(r, c)| {
                let t = Tensor::from_vec(r, c, x[off..off + r * c].to_vec()).unwrap();
                off += r * c;
                t
            })
            .collect()
    }
}

impl<F> Differentiable for TapeFn<F>
where
    F: Fn(&mut Tape) -> Result<NodeId, TensorError>,
{
    fn value(&self, x: &[f64]) -> Result<f64, TensorError> {
        let params = self.unflatten(x);
        let mut tape = Tape::new(&params);
        let out = (self.build)(&mut tape)?;
        Ok(tape.value(out).data()[0])
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, TensorError> {
        let params = self.unflatten(x);
        let mut tape = Tape::new(&params);
        let out = (self.build)(&mut tape)?;
        let grads = tape.backward(out)?;
        Ok(grads
            .params
            .iter()
            .zip(&params)
            .flat_map(|(g, p)| g.to_dense(p.shape()).into_vec())
            .collect())
    }
}

fn random_point(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

/// Reduces a vector node to a scalar with fixed weights so that every
/// output coordinate gets a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, v: NodeId) -> Result<NodeId, TensorError> {
    let n = tape.value(v).len();
    let w = tape.constant(Tensor::vector((0..n).map(|i| 0.3 + 0.7 * i as f64).collect()));
    let prod = tape.hadamard(v, w)?;
    let ones = tape.constant(Tensor::from_vec(1, n, vec![1.0; n])?);
    tape.matvec(ones, prod)
}

#[test]
fn sigmoid_at_zero() {
    assert_eq!(sigmoid(0.0), 0.5);
}

#[test]
fn hadamard_example() {
    let params = [Tensor::vector(vec![1.0, 2.0]), Tensor::vector(vec![3.0, 4.0])];
    let mut tape = Tape::new(&params);
    let (a, b) = (tape.param(0), tape.param(1));
    let h = tape.hadamard(a, b).unwrap();
    assert_eq!(tape.value(h).data(), &[3.0, 8.0]);
}

#[test]
fn tanh_derivative_at_zero() {
    let f = TapeFn {
        shapes: vec![(1, 1)],
        build: |t: &mut Tape| {
            let x = t.param(0);
            Ok(t.tanh(x))
        },
    };
    let g = f.gradient(&[0.0]).unwrap()[0];
    assert_eq!(g, 1.0);
    let h = 1e-5;
    let fd = (f.value(&[h]).unwrap() - f.value(&[-h]).unwrap()) / (2.0 * h);
    assert!((g - fd).abs() < 1e-8);
}

#[test]
fn quadratic_grad_check() {
    let f = TapeFn {
        shapes: vec![(1, 1)],
        build: |t: &mut Tape| {
            let x = t.param(0);
            Ok(t.sum_squares(x))
        },
    };
    assert_eq!(f.gradient(&[3.0]).unwrap()[0], 6.0);
    let report = grad_check(&f, &[3.0], 1e-5, 1e-9).unwrap();
    assert!(report.passed, "{report}");
}

/// f(x) = x^2 with a deliberately wrong derivative.
struct WrongSquare;

impl Differentiable for WrongSquare {
    fn value(&self, x: &[f64]) -> Result<f64, TensorError> {
        Ok(x[0] * x[0])
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, TensorError> {
        Ok(vec![x[0]])
    }
}

#[test]
fn wrong_backward_is_caught() {
    let report = grad_check(&WrongSquare, &[3.0], 1e-5, 1e-4).unwrap();
    assert!(!report.passed);
    assert!((report.max_rel_err - 0.5).abs() < 1e-6);
}

#[test]
fn non_finite_is_an_error() {
    struct Blowup;
    impl Differentiable for Blowup {
        fn value(&self, _: &[f64]) -> Result<f64, TensorError> {
            Ok(f64::NAN)
        }
        fn gradient(&self, _: &[f64]) -> Result<Vec<f64>, TensorError> {
            Ok(vec![1.0])
        }
    }
    assert!(matches!(
        grad_check(&Blowup, &[0.0], 1e-5, 1e-4),
        Err(TensorError::NonFinite { .. })
    ));
}

#[test]
fn shape_errors_name_both_shapes() {
    let params = [Tensor::zeros(2, 3), Tensor::vector(vec![1.0, 2.0])];
    let mut tape = Tape::new(&params);
    let (m, v) = (tape.param(0), tape.param(1));
    let e = tape.matvec(m, v).unwrap_err();
    assert_eq!(
        e,
        TensorError::ShapeMismatch {
            op: "matvec",
            left: (2, 3),
            right: (2, 1)
        }
    );
    assert!(e.to_string().contains("(2, 3)") && e.to_string().contains("(2, 1)"));
    assert!(tape.add(m, v).is_err());
    assert!(tape.hadamard(m, v).is_err());
}

#[test]
fn softmax_sums_to_one() {
    let p = softmax(&[1000.0, 0.0, -1000.0, 3.5]);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(p.iter().all(|v| v.is_finite()));
    let q = softmax(&[2f64.ln(), 0.0]);
    assert!((q[0] - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn row_gradients_are_sparse() {
    let params = [Tensor::from_vec(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap()];
    let mut tape = Tape::new(&params);
    let r = tape.row(0, 1).unwrap();
    assert_eq!(tape.value(r).data(), &[3.0, 4.0]);
    let s = tape.sum_squares(r);
    let g = tape.backward(s).unwrap();
    match &g.params[0] {
        ParamGrad::Rows(rows) => {
            assert_eq!(rows.len(), 1);
            assert_eq!(rows[&1], vec![6.0, 8.0]);
        }
        other => panic!("expected sparse rows, got {other:?}"),
    }
    assert!(tape.row(0, 3).is_err());
}

#[test]
fn backward_requires_scalar() {
    let params = [Tensor::vector(vec![1.0, 2.0])];
    let mut tape = Tape::new(&params);
    let p = tape.param(0);
    let t = tape.tanh(p);
    assert!(tape.backward(t).is_err());
}

/// One case per primitive: each is grad-checked through a weighted sum.
fn primitive_cases() -> Vec<(&'static str, Vec<Shape>, fn(&mut Tape) -> Result<NodeId, TensorError>)> {
    vec![
        ("matvec", vec![(3, 4), (4, 1)], |t| {
            let (m, v) = (t.param(0), t.param(1));
            let y = t.matvec(m, v)?;
            weighted_sum(t, y)
        }),
        ("add", vec![(4, 1), (4, 1)], |t| {
            let (a, b) = (t.param(0), t.param(1));
            let y = t.add(a, b)?;
            let y = t.tanh(y);
            weighted_sum(t, y)
        }),
        ("hadamard", vec![(4, 1), (4, 1)], |t| {
            let (a, b) = (t.param(0), t.param(1));
            let y = t.hadamard(a, b)?;
            weighted_sum(t, y)
        }),
        ("sigmoid", vec![(5, 1)], |t| {
            let a = t.param(0);
            let y = t.sigmoid(a);
            weighted_sum(t, y)
        }),
        ("tanh", vec![(5, 1)], |t| {
            let a = t.param(0);
            let y = t.tanh(a);
            weighted_sum(t, y)
        }),
        ("sum", vec![(3, 1), (3, 1), (3, 1)], |t| {
            let ids = [t.param(0), t.param(1), t.param(2)];
            let y = t.sum(&ids)?;
            let y = t.sigmoid(y);
            weighted_sum(t, y)
        }),
        ("concat", vec![(2, 1), (3, 1)], |t| {
            let (a, b) = (t.param(0), t.param(1));
            let y = t.concat(&[a, b])?;
            let y = t.tanh(y);
            weighted_sum(t, y)
        }),
        ("softmax", vec![(4, 1)], |t| {
            let a = t.param(0);
            let y = t.softmax(a)?;
            weighted_sum(t, y)
        }),
        ("scale", vec![(3, 1)], |t| {
            let a = t.param(0);
            let y = t.scale(a, -2.5);
            let y = t.tanh(y);
            weighted_sum(t, y)
        }),
        ("mask", vec![(3, 1)], |t| {
            let a = t.param(0);
            let y = t.mask(a, vec![1.25, 0.0, 1.25])?;
            let y = t.sigmoid(y);
            weighted_sum(t, y)
        }),
        ("ln", vec![(3, 1)], |t| {
            let a = t.param(0);
            let s = t.sigmoid(a);
            let y = t.ln(s)?;
            weighted_sum(t, y)
        }),
        ("pick", vec![(4, 1)], |t| {
            let a = t.param(0);
            let y = t.tanh(a);
            t.pick(y, 2)
        }),
        ("sum_squares", vec![(2, 3)], |t| {
            let a = t.param(0);
            Ok(t.sum_squares(a))
        }),
        ("nll_softmax", vec![(3, 2), (2, 1)], |t| {
            let (m, v) = (t.param(0), t.param(1));
            let z = t.matvec(m, v)?;
            t.nll_softmax(z, 1)
        }),
        ("row", vec![(3, 2)], |t| {
            let r = t.row(0, 2)?;
            let y = t.tanh(r);
            weighted_sum(t, y)
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn primitive_backward_matches_central_differences(seed in any::<u64>()) {
        for (name, shapes, build) in primitive_cases() {
            let f = TapeFn { shapes: shapes.clone(), build };
            let n: usize = shapes.iter().map(|(r, c)| r * c).sum();
            let x = random_point(n, seed);
            let report = grad_check(&f, &x, 1e-5, 1e-4).unwrap();
            prop_assert!(report.passed, "{name}: {report}");
        }
    }

    #[test]
    fn softmax_entries_in_open_unit_interval(z in proptest::collection::vec(-30.0f64..30.0, 1..20)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0 || z.len() == 1));
    }
}
