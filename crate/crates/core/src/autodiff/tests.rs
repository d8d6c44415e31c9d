use super::check::{max_relative_error, numerical_gradient};
use super::*;
use proptest::prelude::*;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![0.0, 0.0, 0.0]));
    let y = g.softmax(x).unwrap();
    for &v in g.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn log_of_one_is_zero() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(1.0));
    let y = g.log(x).unwrap();
    assert_eq!(g.value(y).item(), Some(0.0));
}

#[test]
fn matmul_of_ones() {
    let mut g = Graph::new();
    let a = g.leaf(Tensor::ones(&[2, 3]));
    let b = g.leaf(Tensor::ones(&[3, 1]));
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c), &t(&[2, 1], &[3.0, 3.0]));
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.leaf(Tensor::ones(&[2, 3]));
    let b = g.leaf(Tensor::ones(&[2, 1]));
    let err = g.matmul(a, b).unwrap_err();
    assert_eq!(
        err,
        AutodiffError::ShapeMismatch {
            op: "matmul",
            lhs: vec![2, 3],
            rhs: vec![2, 1]
        }
    );
    assert!(err.to_string().contains("[2, 3]") && err.to_string().contains("[2, 1]"));
}

#[test]
fn non_finite_output_reports_op() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(0.0));
    assert_eq!(
        g.log(x).unwrap_err(),
        AutodiffError::NonFinite { op: "log" }
    );
    let y = g.leaf(Tensor::scalar(-1.0));
    assert_eq!(
        g.pow(y, 0.5).unwrap_err(),
        AutodiffError::NonFinite { op: "pow" }
    );
}

#[test]
fn product_rule() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(2.0));
    let y = g.leaf(Tensor::scalar(3.0));
    let z = g.mul(x, y).unwrap();
    g.backward(z).unwrap();
    assert_eq!(g.grad(x).item(), Some(3.0));
    assert_eq!(g.grad(y).item(), Some(2.0));
}

#[test]
fn identity_root_has_unit_grad() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(5.0));
    g.backward(x).unwrap();
    assert_eq!(g.grad(x).item(), Some(1.0));
}

#[test]
fn relu_inactive_region_has_zero_grad() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(-1.0));
    let y = g.relu(x).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).item(), Some(0.0));
}

#[test]
fn backward_rejects_non_scalar_root() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::ones(&[2]));
    assert_eq!(
        g.backward(x).unwrap_err(),
        AutodiffError::NonScalarRoot(vec![2])
    );
}

#[test]
fn repeated_backward_accumulates_until_zeroed() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(2.0));
    let y = g.mul(x, x).unwrap();
    g.backward(y).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).item(), Some(8.0));
    g.zero_grad();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).item(), Some(4.0));
}

#[test]
fn leaves_have_no_parents_and_grads_match_shapes() {
    let mut g = Graph::new();
    let a = g.leaf(Tensor::ones(&[2, 3]));
    let b = g.leaf(Tensor::ones(&[3]));
    let c = g.add(a, b).unwrap();
    let s = g.sum(c).unwrap();
    g.backward(s).unwrap();
    assert!(g.parents(a).is_empty());
    assert_eq!(g.parents(c), &[a, b]);
    assert_eq!(g.op_tag(c), "add");
    for v in [a, b, c, s] {
        assert_eq!(g.grad(v).shape(), g.value(v).shape());
    }
    assert_eq!(g.grad(b).data(), &[2.0, 2.0, 2.0]);
}

#[test]
fn grad_reverse_forward_is_identity() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let y = g.grad_reverse(x, 0.7).unwrap();
    assert_eq!(g.value(y), g.value(x));
}

fn reversed_grad(incoming: &[f64], scale: f64) -> Vec<f64> {
    // root = sum(grad_reverse(x) * c) so the incoming gradient at the reversal is c
    let mut g = Graph::new();
    let x = g.leaf(Tensor::zeros(&[incoming.len()]));
    let c = g.leaf(Tensor::vector(incoming.to_vec()));
    let r = g.grad_reverse(x, scale).unwrap();
    let p = g.mul(r, c).unwrap();
    let s = g.sum(p).unwrap();
    g.backward(s).unwrap();
    g.grad(x).data().to_vec()
}

#[test]
fn grad_reverse_backward_negates_and_scales() {
    assert_eq!(reversed_grad(&[1.0, 1.0], 1.0), vec![-1.0, -1.0]);
    assert_eq!(reversed_grad(&[2.0, -4.0], 0.5), vec![-1.0, 2.0]);
}

#[test]
fn grad_reverse_rejects_negative_scale() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(1.0));
    assert_eq!(
        g.grad_reverse(x, -0.1).unwrap_err(),
        AutodiffError::NegativeScale(-0.1)
    );
}

#[test]
fn concat_and_slice_round_trip() {
    let mut g = Graph::new();
    let a = g.leaf(t(&[2, 1], &[1.0, 2.0]));
    let b = g.leaf(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
    let c = g.concat(&[a, b], 1).unwrap();
    assert_eq!(g.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    let s = g.slice_last(c, 1, 3).unwrap();
    assert_eq!(g.value(s), g.value(b));
    let r = g.concat(&[a, a], 0).unwrap();
    assert_eq!(g.value(r).shape(), &[4, 1]);
}

// ----- finite-difference checks -----

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

type Builder = fn(&mut Graph, &[Var]) -> Result<Var>;

/// Reduces any output to a scalar with fixed, non-uniform weights so that every
/// output entry contributes a distinct amount.
fn weighted_sum(g: &mut Graph, y: Var) -> Result<Var> {
    let shape = g.value(y).shape().to_vec();
    let n = g.value(y).len();
    let w = Tensor::new(shape, (0..n).map(|i| 0.3 + 0.17 * i as f64).collect())?;
    let w = g.leaf(w);
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn check(build: Builder, inputs: &[Tensor]) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let y = build(&mut g, &vars).unwrap();
    let root = weighted_sum(&mut g, y).unwrap();
    g.backward(root).unwrap();

    let mut f = |xs: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.leaf(t.clone())).collect();
        let y = build(&mut g, &vars).unwrap();
        let root = weighted_sum(&mut g, y).unwrap();
        g.value(root).item().unwrap()
    };
    let numeric = numerical_gradient(&mut f, inputs, STEP);
    for (k, v) in vars.iter().enumerate() {
        let err = max_relative_error(g.grad(*v), &numeric[k]);
        assert!(err < TOL, "input {k}: relative error {err}");
    }
}

fn arb_tensor(shape: Vec<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(lo..hi, n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

fn away_from_zero(t: Tensor) -> Tensor {
    // keeps relu/clamp kinks out of the finite-difference stencil
    t.map(|v| if v.abs() < 1e-2 { v + 0.05 } else { v })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fd_matmul(a in arb_tensor(vec![3, 4], -2.0, 2.0), b in arb_tensor(vec![4, 2], -2.0, 2.0)) {
        check(|g, v| g.matmul(v[0], v[1]), &[a, b]);
    }

    #[test]
    fn fd_broadcast_binary(a in arb_tensor(vec![3, 4], -2.0, 2.0), b in arb_tensor(vec![4], -2.0, 2.0),
                           c in arb_tensor(vec![3, 1], 0.5, 2.0)) {
        check(|g, v| g.add(v[0], v[1]), &[a.clone(), b.clone()]);
        check(|g, v| g.sub(v[0], v[1]), &[a.clone(), b.clone()]);
        check(|g, v| g.mul(v[0], v[1]), &[a.clone(), b.clone()]);
        check(|g, v| g.mul(v[0], v[1]), &[a.clone(), c.clone()]);
        check(|g, v| g.div(v[0], v[1]), &[a, c]);
    }

    #[test]
    fn fd_unary(x in arb_tensor(vec![2, 3], -2.0, 2.0), pos in arb_tensor(vec![5], 0.1, 2.0)) {
        let x = away_from_zero(x);
        check(|g, v| g.neg(v[0]), std::slice::from_ref(&x));
        check(|g, v| g.affine(v[0], -1.5, 0.25), std::slice::from_ref(&x));
        check(|g, v| g.exp(v[0]), std::slice::from_ref(&x));
        check(|g, v| g.relu(v[0]), std::slice::from_ref(&x));
        check(|g, v| g.sigmoid(v[0]), std::slice::from_ref(&x));
        check(|g, v| g.clamp(v[0], -0.5, 0.5), std::slice::from_ref(&x));
        check(|g, v| g.log(v[0]), std::slice::from_ref(&pos));
        check(|g, v| g.pow(v[0], 2.5), std::slice::from_ref(&pos));
        check(|g, v| g.pow(v[0], -1.0), &[pos]);
    }

    #[test]
    fn fd_softmax_and_reductions(x in arb_tensor(vec![3, 4], -2.0, 2.0)) {
        check(|g, v| g.softmax(v[0]), std::slice::from_ref(&x));
        check(|g, v| g.sum(v[0]), std::slice::from_ref(&x));
        check(|g, v| g.mean(v[0]), std::slice::from_ref(&x));
        check(|g, v| g.sum_axis(v[0], 0, false), std::slice::from_ref(&x));
        check(|g, v| g.mean_axis(v[0], 1, true), std::slice::from_ref(&x));
        check(|g, v| g.transpose(v[0]), std::slice::from_ref(&x));
        check(|g, v| g.reshape(v[0], &[2, 6]), std::slice::from_ref(&x));
        check(|g, v| g.slice_last(v[0], 1, 3), std::slice::from_ref(&x));
        check(|g, v| g.take_along_rows(v[0], &[3, 0, 2]), &[x]);
    }

    #[test]
    fn fd_concat(a in arb_tensor(vec![2, 3], -2.0, 2.0), b in arb_tensor(vec![2, 1], -2.0, 2.0)) {
        check(|g, v| g.concat(&[v[0], v[1]], 1), &[a.clone(), b]);
        check(|g, v| g.concat(&[v[0], v[0]], 0), &[a]);
    }

    #[test]
    fn softmax_rows_are_distributions(x in arb_tensor(vec![4, 5], -50.0, 50.0)) {
        let mut g = Graph::new();
        let v = g.leaf(x);
        let y = g.softmax(v).unwrap();
        for row in g.value(y).data().chunks(5) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reversal_equals_negated_scaled_plain_backward(
        x in arb_tensor(vec![3, 2], -2.0, 2.0),
        w in arb_tensor(vec![2, 1], -2.0, 2.0),
        scale in 0.0f64..3.0,
    ) {
        let run = |reverse: bool| {
            let mut g = Graph::new();
            let xv = g.leaf(x.clone());
            let wv = g.leaf(w.clone());
            let h = if reverse { g.grad_reverse(xv, scale).unwrap() } else { xv };
            let y = g.matmul(h, wv).unwrap();
            let e = g.exp(y).unwrap();
            let s = g.mean(e).unwrap();
            g.backward(s).unwrap();
            (g.grad(xv).clone(), g.grad(wv).clone())
        };
        let (gx_rev, gw_rev) = run(true);
        let (gx, gw) = run(false);
        prop_assert_eq!(gx_rev, gx.map(|v| -scale * v));
        prop_assert_eq!(gw_rev, gw);
    }
}
