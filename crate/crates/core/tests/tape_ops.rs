//! Central-difference checks for every differentiable tape op in isolation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use teg::numerics::{grad_check, Csr, Init, ParamStore, Tape, Tensor, Var};
use teg::Result;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn store(params: &[(&str, Tensor)]) -> ParamStore {
    let mut s = ParamStore::new(0);
    for (name, value) in params {
        s.add_given(name, value.clone()).unwrap();
        s.set(name, value.clone()).unwrap();
    }
    s
}

/// `Σ w ⊙ y` with fixed random weights, so every output entry matters.
fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(y).shape().to_vec();
    let w = tape.constant(random(&shape, seed, -1.0, 1.0));
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

fn check<F>(params: &[(&str, Tensor)], f: F)
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
{
    let s = store(params);
    let r = grad_check(f, &s, STEP, usize::MAX, 0).unwrap();
    assert!(r.checked > 0);
    assert!(r.max_rel_error <= TOL, "{r:?}");
}

#[test]
fn matmul() {
    check(
        &[
            ("a", random(&[3, 4], 1, -1.0, 1.0)),
            ("b", random(&[4, 2], 2, -1.0, 1.0)),
        ],
        |s, t| {
            let (a, b) = (t.param(s, "a")?, t.param(s, "b")?);
            let y = t.matmul(a, b)?;
            project(t, y, 3)
        },
    );
}

#[test]
fn affine() {
    check(
        &[
            ("x", random(&[5, 3], 1, -1.0, 1.0)),
            ("w", random(&[3, 2], 2, -1.0, 1.0)),
            ("b", random(&[1, 2], 3, -1.0, 1.0)),
        ],
        |s, t| {
            let (x, w, b) = (t.param(s, "x")?, t.param(s, "w")?, t.param(s, "b")?);
            let y = t.affine(x, w, b)?;
            project(t, y, 4)
        },
    );
}

#[test]
fn elementwise_binary() {
    let params = [
        ("a", random(&[3, 3], 1, -1.0, 1.0)),
        ("b", random(&[3, 3], 2, -1.0, 1.0)),
    ];
    check(&params, |s, t| {
        let (a, b) = (t.param(s, "a")?, t.param(s, "b")?);
        let y = t.add(a, b)?;
        project(t, y, 3)
    });
    check(&params, |s, t| {
        let (a, b) = (t.param(s, "a")?, t.param(s, "b")?);
        let y = t.sub(a, b)?;
        project(t, y, 3)
    });
    check(&params, |s, t| {
        let (a, b) = (t.param(s, "a")?, t.param(s, "b")?);
        let y = t.mul(a, b)?;
        project(t, y, 3)
    });
    // Same variable on both sides.
    check(&params[..1], |s, t| {
        let a = t.param(s, "a")?;
        let y = t.mul(a, a)?;
        project(t, y, 3)
    });
}

#[test]
fn scale_and_square() {
    check(&[("a", random(&[2, 5], 1, -2.0, 2.0))], |s, t| {
        let a = t.param(s, "a")?;
        let y = t.scale(a, -0.7);
        let y = t.square(y);
        project(t, y, 2)
    });
}

#[test]
fn broadcasts() {
    check(
        &[
            ("x", random(&[4, 3], 1, -1.0, 1.0)),
            ("r", random(&[1, 3], 2, -1.0, 1.0)),
        ],
        |s, t| {
            let (x, r) = (t.param(s, "x")?, t.param(s, "r")?);
            let y = t.add_row_broadcast(x, r)?;
            project(t, y, 3)
        },
    );
    check(
        &[
            ("x", random(&[4, 3], 1, -1.0, 1.0)),
            ("c", random(&[4, 1], 2, -1.0, 1.0)),
        ],
        |s, t| {
            let (x, c) = (t.param(s, "x")?, t.param(s, "c")?);
            let y = t.mul_col(x, c)?;
            project(t, y, 3)
        },
    );
}

#[test]
fn concat_columns() {
    check(
        &[
            ("a", random(&[3, 2], 1, -1.0, 1.0)),
            ("b", random(&[3, 1], 2, -1.0, 1.0)),
            ("c", random(&[3, 4], 3, -1.0, 1.0)),
        ],
        |s, t| {
            let (a, b, c) = (t.param(s, "a")?, t.param(s, "b")?, t.param(s, "c")?);
            let y = t.concat(&[a, b, c, a])?;
            project(t, y, 4)
        },
    );
}

#[test]
fn gather_and_scatter() {
    check(&[("x", random(&[4, 3], 1, -1.0, 1.0))], |s, t| {
        let x = t.param(s, "x")?;
        let y = t.gather_rows(x, Arc::from([3, 0, 0, 2, 3]))?;
        project(t, y, 2)
    });
    check(&[("x", random(&[5, 2], 1, -1.0, 1.0))], |s, t| {
        let x = t.param(s, "x")?;
        let y = t.scatter_add_rows(x, Arc::from([1, 1, 0, 3, 1]), 4)?;
        project(t, y, 2)
    });
}

#[test]
fn reductions() {
    let p = [("x", random(&[4, 3], 1, -1.0, 1.0))];
    check(&p, |s, t| {
        let x = t.param(s, "x")?;
        let y = t.sum_rows(x);
        project(t, y, 2)
    });
    check(&p, |s, t| {
        let x = t.param(s, "x")?;
        let y = t.mean_rows(x);
        project(t, y, 2)
    });
    check(&p, |s, t| {
        let x = t.param(s, "x")?;
        let y = t.square(x);
        Ok(t.mean(y))
    });
}

#[test]
fn pairwise_sqdist() {
    check(
        &[
            ("a", random(&[3, 4], 1, -1.0, 1.0)),
            ("b", random(&[2, 4], 2, -1.0, 1.0)),
        ],
        |s, t| {
            let (a, b) = (t.param(s, "a")?, t.param(s, "b")?);
            let y = t.pairwise_sqdist(a, b)?;
            project(t, y, 3)
        },
    );
}

#[test]
fn activations() {
    // Entries kept away from the ReLU kink.
    let x = random(&[4, 4], 1, 0.05, 1.0).zip_map(&random(&[4, 4], 2, 0.0, 1.0), |v, u| {
        if u < 0.5 {
            -v
        } else {
            v
        }
    });
    check(&[("x", x.clone())], |s, t| {
        let x = t.param(s, "x")?;
        let y = t.relu(x);
        project(t, y, 3)
    });
    check(&[("x", x.map(|v| 4.0 * v))], |s, t| {
        let x = t.param(s, "x")?;
        let y = t.silu(x);
        project(t, y, 3)
    });
}

#[test]
fn dropout_with_fixed_mask() {
    check(&[("x", random(&[6, 3], 1, -1.0, 1.0))], |s, t| {
        let x = t.param(s, "x")?;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = t.dropout(x, 0.4, &mut rng);
        project(t, y, 3)
    });
}

#[test]
fn log_softmax_and_nll() {
    check(&[("x", random(&[4, 5], 1, -3.0, 3.0))], |s, t| {
        let x = t.param(s, "x")?;
        let y = t.log_softmax(x);
        project(t, y, 2)
    });
    check(&[("x", random(&[4, 5], 1, -3.0, 3.0))], |s, t| {
        let x = t.param(s, "x")?;
        let y = t.log_softmax(x);
        t.nll(y, Arc::from([4, 0, 2, 2]))
    });
}

#[test]
fn sparse_matmul() {
    let a = Arc::new(Csr::from_triplets(
        3,
        4,
        vec![
            (0, 0, 0.5),
            (0, 3, -1.0),
            (1, 1, 2.0),
            (2, 0, 0.25),
            (2, 2, 1.5),
        ],
    ));
    check(&[("x", random(&[4, 2], 1, -1.0, 1.0))], move |s, t| {
        let x = t.param(s, "x")?;
        let y = t.sparse_matmul(Arc::clone(&a), x)?;
        project(t, y, 2)
    });
}

#[test]
fn composed_two_layer_network() {
    let mut s = ParamStore::new(5);
    s.add("w1", &[3, 6], Init::GlorotUniform).unwrap();
    s.add("w2", &[6, 4], Init::GlorotUniform).unwrap();
    s.add_given("b1", random(&[1, 6], 7, -0.5, 0.5)).unwrap();
    s.set("b1", random(&[1, 6], 7, -0.5, 0.5)).unwrap();
    let x = random(&[5, 3], 8, -1.0, 1.0);
    let r = grad_check(
        |s, t| {
            let xv = t.constant(x.clone());
            let (w1, b1, w2) = (t.param(s, "w1")?, t.param(s, "b1")?, t.param(s, "w2")?);
            let h = t.affine(xv, w1, b1)?;
            let h = t.silu(h);
            let z = t.matmul(h, w2)?;
            let lp = t.log_softmax(z);
            t.nll(lp, Arc::from([0, 1, 2, 3, 0]))
        },
        &s,
        STEP,
        usize::MAX,
        0,
    )
    .unwrap();
    assert_eq!(r.checked, 18 + 6 + 24);
    assert!(r.max_rel_error <= TOL, "{r:?}");
}
