use proptest::prelude::*;
use tvsurv_autodiff::{grad_check, Graph, Result, Tensor, Var};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    proptest::collection::vec(-2.0..2.0_f64, rows * cols)
        .prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

type Op = fn(&mut Graph, &[Var]) -> Result<Var>;

// Every op reduced to a scalar through a weighted sum so that each output
// coordinate carries a distinct cotangent.
fn reduce(g: &mut Graph, v: Var) -> Result<Var> {
    let (r, c) = g.value(v).dims2().unwrap();
    let w: Vec<f64> = (0..r * c).map(|i| 0.3 + 0.17 * i as f64).collect();
    let w = g.constant(Tensor::new(g.value(v).shape().to_vec(), w)?);
    let p = g.mul(v, w)?;
    Ok(g.sum(p))
}

fn ops() -> Vec<(&'static str, Op)> {
    vec![
        ("add", |g, v| { let o = g.add(v[0], v[1])?; reduce(g, o) }),
        ("add_row", |g, v| { let b = g.slice_cols(v[1], 0, 3)?; let b = g.select_rows(b, &[0])?; let o = g.add(v[0], b)?; reduce(g, o) }),
        ("sub", |g, v| { let o = g.sub(v[0], v[1])?; reduce(g, o) }),
        ("mul", |g, v| { let o = g.mul(v[0], v[1])?; reduce(g, o) }),
        ("mul_col", |g, v| { let c = g.slice_cols(v[1], 1, 2)?; let o = g.mul(v[0], c)?; reduce(g, o) }),
        ("matmul", |g, v| { let o = g.matmul(v[0], v[2])?; reduce(g, o) }),
        ("sigmoid", |g, v| { let o = g.sigmoid(v[0]); reduce(g, o) }),
        ("tanh", |g, v| { let o = g.tanh(v[0]); reduce(g, o) }),
        ("exp", |g, v| { let o = g.exp(v[0]); reduce(g, o) }),
        ("log", |g, v| { let s = g.square(v[0]); let s = g.add_scalar(s, 0.5); let o = g.log(s); reduce(g, o) }),
        ("softmax", |g, v| { let o = g.softmax(v[0])?; reduce(g, o) }),
        ("concat", |g, v| { let o = g.concat(&[v[0], v[1]])?; reduce(g, o) }),
        ("slice", |g, v| { let o = g.slice_cols(v[0], 1, 3)?; reduce(g, o) }),
        ("select_rows", |g, v| { let o = g.select_rows(v[0], &[1, 0, 1])?; reduce(g, o) }),
        ("sum", |g, v| { let s = g.square(v[0]); Ok(g.sum(s)) }),
        ("mean", |g, v| { let s = g.tanh(v[0]); Ok(g.mean(s)) }),
        ("square", |g, v| { let o = g.square(v[0]); reduce(g, o) }),
        ("scale", |g, v| { let o = g.scale(v[0], -1.7); reduce(g, o) }),
        ("sq_dist", |g, v| { let d = g.sq_dist(v[0], v[1])?; let k = g.scale(d, -0.5); let k = g.exp(k); reduce(g, k) }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_op_matches_central_differences(a in matrix(2, 3), b in matrix(2, 3), c in matrix(3, 2)) {
        for (name, op) in ops() {
            let r = grad_check(op, &[a.clone(), b.clone(), c.clone()], STEP, TOL).unwrap();
            prop_assert!(r.passed, "{name}: max_rel {} at {:?}", r.max_rel, r.worst);
        }
    }

    #[test]
    fn composite_matches_central_differences(x in matrix(3, 2), w in matrix(2, 4), u in matrix(1, 4)) {
        let f = |g: &mut Graph, v: &[Var]| -> Result<Var> {
            let h = g.matmul(v[0], v[1])?;
            let h = g.add(h, v[2])?;
            let h = g.tanh(h);
            let p = g.softmax(h)?;
            let l = g.log(p);
            let s = g.sigmoid(h);
            let m = g.mul(l, s)?;
            Ok(g.mean(m))
        };
        let r = grad_check(f, &[x, w, u], STEP, TOL).unwrap();
        prop_assert!(r.passed, "max_rel {}", r.max_rel);
    }

    #[test]
    fn backward_is_linear(x in matrix(2, 3), a in -2.0..2.0_f64, b in -2.0..2.0_f64) {
        fn f(g: &mut Graph, x: Var) -> Var { let s = g.sigmoid(x); g.sum(s) }
        fn h(g: &mut Graph, x: Var) -> Var { let s = g.square(x); let e = g.exp(s); g.mean(e) }
        let grad_of = |build: &dyn Fn(&mut Graph, Var) -> Var| {
            let mut g = Graph::new();
            let v = g.param(x.clone());
            let root = build(&mut g, v);
            g.backward(root).unwrap();
            g.grad(v)
        };
        let gf = grad_of(&f);
        let gh = grad_of(&h);
        let combined = grad_of(&|g: &mut Graph, v: Var| {
            let fv = f(g, v);
            let hv = h(g, v);
            let fa = g.scale(fv, a);
            let hb = g.scale(hv, b);
            g.add(fa, hb).unwrap()
        });
        for i in 0..combined.numel() {
            let expect = a * gf.data()[i] + b * gh.data()[i];
            prop_assert!((combined.data()[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }
}

#[test]
fn repeated_backward_after_zeroing_is_deterministic() {
    let mut g = Graph::new();
    let x = g.param(Tensor::matrix(2, 2, vec![0.1, -0.4, 1.3, 0.7]).unwrap());
    let w = g.param(Tensor::matrix(2, 2, vec![0.5, 0.2, -1.1, 0.9]).unwrap());
    let y = g.matmul(x, w).unwrap();
    let y = g.tanh(y);
    let s = g.softmax(y).unwrap();
    let root = g.mean(s);
    g.backward(root).unwrap();
    let first = (g.grad(x), g.grad(w));
    for _ in 0..3 {
        g.zero_grads();
        g.backward(root).unwrap();
        assert_eq!(g.grad(x), first.0);
        assert_eq!(g.grad(w), first.1);
    }
}
