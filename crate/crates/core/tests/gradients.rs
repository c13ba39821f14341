//! Finite-difference checks of every differentiable graph operation over
//! seeded random shapes.

use dvc_core::tensor_engine::{grad_check, lstm_step, BoundParams, Graph, LstmParams, ParamStore, Tensor, Var};
use dvc_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: u64 = 100;
const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values whose magnitude stays at least `gap` away from every kink in `kinks`.
fn away_from(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, kinks: &[f64], gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let x = rng.random_range(lo..hi);
            if kinks.iter().all(|k| (x - k).abs() > gap) {
                break x;
            }
        })
        .collect()
}

fn store(entries: Vec<(&str, Vec<usize>, Vec<f64>)>) -> ParamStore<f64> {
    let mut p = ParamStore::new();
    for (name, shape, data) in entries {
        p.insert(name, Tensor::new(shape, data).unwrap());
    }
    p
}

/// Reduces `v` to a scalar through fixed random weights so that every
/// output coordinate contributes a distinct gradient.
fn project(g: &mut Graph<f64>, v: Var, w: &[f64]) -> Result<Var> {
    let m = g.mul_const(v, w.to_vec())?;
    Ok(g.sum(m))
}

fn run<F>(op: &str, params: &ParamStore<f64>, f: F)
where
    F: Fn(&mut Graph<f64>, &BoundParams) -> Result<Var>,
{
    let report = grad_check(params, EPS, f).unwrap();
    assert!(
        report.passed(TOL),
        "{op}: relative error {:.3e} at {:?}",
        report.max_rel_error,
        report.worst
    );
}

/// Random elementwise-op harness: `x` of random length, projected output.
fn unary(op: &str, seed_base: u64, sample: impl Fn(&mut ChaCha8Rng, usize) -> Vec<f64>, apply: impl Fn(&mut Graph<f64>, Var) -> Var) {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_base + trial);
        let n = rng.random_range(1..8);
        let params = store(vec![("x", vec![n], sample(&mut rng, n))]);
        let w = rand_vec(&mut rng, n, -1.0, 1.0);
        run(op, &params, |g, p| {
            let y = apply(g, p.get("x")?);
            project(g, y, &w)
        });
    }
}

fn binary(op: &str, seed_base: u64, apply: impl Fn(&mut Graph<f64>, Var, Var) -> Result<Var>) {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_base + trial);
        let (r, c) = (rng.random_range(1..5), rng.random_range(1..5));
        let params = store(vec![
            ("a", vec![r, c], rand_vec(&mut rng, r * c, -2.0, 2.0)),
            ("b", vec![r, c], rand_vec(&mut rng, r * c, -2.0, 2.0)),
        ]);
        let w = rand_vec(&mut rng, r * c, -1.0, 1.0);
        run(op, &params, |g, p| {
            let y = apply(g, p.get("a")?, p.get("b")?)?;
            project(g, y, &w)
        });
    }
}

#[test]
fn elementwise_binary_ops() {
    binary("add", 1000, |g, a, b| g.add(a, b));
    binary("sub", 2000, |g, a, b| g.sub(a, b));
    binary("mul", 3000, |g, a, b| g.mul(a, b));
    // Shared operand: both paths accumulate into one gradient.
    binary("mul_self", 4000, |g, a, _| g.mul(a, a));
}

#[test]
fn elementwise_unary_ops() {
    let plain = |rng: &mut ChaCha8Rng, n| rand_vec(rng, n, -2.0, 2.0);
    unary("scale", 10_000, plain, |g, x| g.scale(x, -1.7));
    unary("neg", 11_000, plain, |g, x| g.neg(x));
    unary("sigmoid", 12_000, plain, |g, x| g.sigmoid(x));
    unary("tanh", 13_000, plain, |g, x| g.tanh(x));
    unary("exp", 14_000, plain, |g, x| g.exp(x));
    unary("square", 15_000, plain, |g, x| g.square(x));
    unary(
        "relu",
        18_000,
        |rng, n| away_from(rng, n, -2.0, 2.0, &[0.0], 1e-3),
        |g, x| g.relu(x),
    );
    unary(
        "clamp",
        19_000,
        |rng, n| away_from(rng, n, -2.0, 2.0, &[-0.5, 0.8], 1e-3),
        |g, x| g.clamp(x, -0.5, 0.8),
    );
    unary(
        "smooth_l1",
        20_000,
        |rng, n| away_from(rng, n, -3.0, 3.0, &[-1.0, 1.0], 1e-3),
        |g, x| g.smooth_l1(x),
    );
    unary("normalize", 21_000, |rng, n| rand_vec(rng, n, 0.1, 2.0), |g, x| g.normalize(x));
}

#[test]
fn reductions() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(16_000 + trial);
        let n = rng.random_range(1..8);
        let params = store(vec![("x", vec![n], rand_vec(&mut rng, n, -2.0, 2.0))]);
        run("sum", &params, |g, p| {
            let s = g.sum(p.get("x")?);
            Ok(g.square(s))
        });
        run("mean", &params, |g, p| {
            let s = g.mean(p.get("x")?);
            Ok(g.exp(s))
        });
    }
}

#[test]
fn constant_operand_ops() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(30_000 + trial);
        let n = rng.random_range(1..8);
        let params = store(vec![("x", vec![n], rand_vec(&mut rng, n, -2.0, 2.0))]);
        let c = rand_vec(&mut rng, n, -1.0, 1.0);
        let w = rand_vec(&mut rng, n, -1.0, 1.0);
        run("add_const", &params, |g, p| {
            let y = g.add_const(p.get("x")?, &c)?;
            let y = g.square(y);
            project(g, y, &w)
        });
        run("mul_const", &params, |g, p| {
            let y = g.mul_const(p.get("x")?, c.clone())?;
            let y = g.square(y);
            project(g, y, &w)
        });
    }
}

#[test]
fn linear_algebra_ops() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(40_000 + trial);
        let (n, k, m) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
        let params = store(vec![
            ("a", vec![n, k], rand_vec(&mut rng, n * k, -1.0, 1.0)),
            ("row", vec![k], rand_vec(&mut rng, k, -1.0, 1.0)),
            ("b", vec![k, m], rand_vec(&mut rng, k * m, -1.0, 1.0)),
            ("bias", vec![m], rand_vec(&mut rng, m, -1.0, 1.0)),
        ]);
        let w2 = rand_vec(&mut rng, n * m, -1.0, 1.0);
        let w1 = rand_vec(&mut rng, m, -1.0, 1.0);
        run("matmul+add_row_bias", &params, |g, p| {
            let y = g.matmul(p.get("a")?, p.get("b")?)?;
            let y = g.add_row_bias(y, p.get("bias")?)?;
            project(g, y, &w2)
        });
        run("matmul_vector", &params, |g, p| {
            let y = g.matmul(p.get("row")?, p.get("b")?)?;
            project(g, y, &w1)
        });
    }
}

#[test]
fn conv1d_over_length_stride_and_padding() {
    let mut trial = 0;
    for t in 1..=9 {
        for stride in 1..=2 {
            for padding in 0..=1 {
                for _ in 0..3 {
                    let mut rng = ChaCha8Rng::seed_from_u64(50_000 + trial);
                    trial += 1;
                    let k = rng.random_range(1..=3usize);
                    if t + 2 * padding < k {
                        continue;
                    }
                    let (ci, co) = (rng.random_range(1..4), rng.random_range(1..4));
                    let t_out = (t + 2 * padding - k) / stride + 1;
                    let params = store(vec![
                        ("x", vec![t, ci], rand_vec(&mut rng, t * ci, -1.0, 1.0)),
                        ("w", vec![k, ci, co], rand_vec(&mut rng, k * ci * co, -1.0, 1.0)),
                        ("b", vec![co], rand_vec(&mut rng, co, -1.0, 1.0)),
                    ]);
                    let w = rand_vec(&mut rng, t_out * co, -1.0, 1.0);
                    run(&format!("conv1d t={t} k={k} s={stride} p={padding}"), &params, |g, p| {
                        let y = g.conv1d(p.get("x")?, p.get("w")?, p.get("b")?, stride, padding)?;
                        project(g, y, &w)
                    });
                }
            }
        }
    }
    assert!(trial >= 100);
}

#[test]
fn indexing_ops() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(60_000 + trial);
        let n = rng.random_range(2..9);
        let params = store(vec![
            ("x", vec![n], rand_vec(&mut rng, n, -2.0, 2.0)),
            ("y", vec![2, 2], rand_vec(&mut rng, 4, -2.0, 2.0)),
        ]);
        // Repeated indices exercise scatter-add.
        let idx: Vec<usize> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..n)).collect();
        let wg = rand_vec(&mut rng, idx.len(), -1.0, 1.0);
        let start = rng.random_range(0..n);
        let len = rng.random_range(1..=n - start);
        let ws = rand_vec(&mut rng, len, -1.0, 1.0);
        let wc = rand_vec(&mut rng, n + 4, -1.0, 1.0);
        run("gather", &params, |g, p| {
            let y = g.gather(p.get("x")?, idx.clone())?;
            let y = g.square(y);
            project(g, y, &wg)
        });
        run("slice", &params, |g, p| {
            let y = g.slice(p.get("x")?, start, len)?;
            let y = g.tanh(y);
            project(g, y, &ws)
        });
        run("concat+reshape", &params, |g, p| {
            let y = g.reshape(p.get("y")?, vec![4])?;
            let c = g.concat(&[p.get("x")?, y])?;
            let c = g.sigmoid(c);
            project(g, c, &wc)
        });
    }
}

#[test]
fn xent_rows_op() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(70_000 + trial);
        let (r, c) = (rng.random_range(1..5), rng.random_range(2..6));
        let params = store(vec![("z", vec![r, c], rand_vec(&mut rng, r * c, -3.0, 3.0))]);
        let labels: Vec<usize> = (0..r).map(|_| rng.random_range(0..c)).collect();
        let w = rand_vec(&mut rng, r, 0.1, 1.0);
        run("xent_rows", &params, |g, p| {
            let y = g.xent_rows(p.get("z")?, labels.clone())?;
            project(g, y, &w)
        });
    }
}

#[test]
fn lstm_cell() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(80_000 + trial);
        let (d, h) = (rng.random_range(1..4), rng.random_range(1..4));
        let params = store(vec![
            ("x", vec![d], rand_vec(&mut rng, d, -1.0, 1.0)),
            ("h", vec![h], rand_vec(&mut rng, h, -1.0, 1.0)),
            ("c", vec![h], rand_vec(&mut rng, h, -1.0, 1.0)),
            ("wx", vec![d, 4 * h], rand_vec(&mut rng, d * 4 * h, -1.0, 1.0)),
            ("wh", vec![h, 4 * h], rand_vec(&mut rng, h * 4 * h, -1.0, 1.0)),
            ("b", vec![4 * h], rand_vec(&mut rng, 4 * h, -1.0, 1.0)),
        ]);
        let (wh_out, wc_out) = (rand_vec(&mut rng, h, -1.0, 1.0), rand_vec(&mut rng, h, -1.0, 1.0));
        run("lstm_step", &params, |g, p| {
            let cell = LstmParams {
                wx: p.get("wx")?,
                wh: p.get("wh")?,
                b: p.get("b")?,
            };
            let (h1, c1) = lstm_step(g, p.get("x")?, p.get("h")?, p.get("c")?, &cell)?;
            // Second step feeds the state back through the same weights.
            let (h2, c2) = lstm_step(g, p.get("x")?, h1, c1, &cell)?;
            let a = project(g, h2, &wh_out)?;
            let b = project(g, c2, &wc_out)?;
            g.add(a, b)
        });
    }
}
