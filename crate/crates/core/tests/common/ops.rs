//! Finite-difference checks for every differentiable tape operation over
//! seeded random instances.

use vagueness::tensor::{grad_check, Graph, NodeId, ParamStore, Rng, Tensor, TensorError};

pub const SEEDS: u64 = 100;
pub const TOL: f64 = 1e-4;
pub const EPS: f64 = 1e-5;

pub fn random(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.uniform_range(lo, hi);
    }
    t
}

fn dim(rng: &mut Rng) -> usize {
    1 + rng.below(8)
}

/// `Σ x ⊙ R` with a fixed random `R`, so every output entry matters.
fn weighted_sum(g: &mut Graph, x: NodeId, seed: u64) -> Result<NodeId, TensorError> {
    let shape = g.value(x).shape().to_vec();
    let r = random(&shape, -1.0, 1.0, &mut Rng::new(seed ^ 0xABCD));
    let rn = g.input(r);
    let m = g.mul(x, rn)?;
    g.sum(m)
}

/// Runs `build` over 100 seeds; `build` registers parameters and returns the
/// loss closure's body.
fn check_op<S, F>(name: &str, setup: S, f: F) -> f64
where
    S: Fn(&mut Rng, &mut ParamStore) -> Vec<usize>,
    F: Fn(&mut Graph, &ParamStore, &[usize], u64) -> Result<NodeId, TensorError>,
{
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let extra = setup(&mut rng, &mut store);
        let report = grad_check(&mut store, EPS, |g, s| f(g, s, &extra, seed)).unwrap();
        if report.max_relative_error > worst {
            worst = report.max_relative_error;
            if worst > TOL {
                eprintln!("{name} seed {seed}: {report:?}");
            }
        }
    }
    worst
}

fn pid(s: &ParamStore, name: &str) -> vagueness::tensor::ParamId {
    s.id(name).unwrap()
}

pub fn matmul() -> f64 {
    let mut worst: f64 = 0.0;
    worst = worst.max(check_op(
        "matmul",
        |rng, s| {
            let (n, k, m) = (dim(rng), dim(rng), dim(rng));
            s.add("a", random(&[n, k], -1.0, 1.0, rng)).unwrap();
            s.add("b", random(&[k, m], -1.0, 1.0, rng)).unwrap();
            vec![]
        },
        |g, s, _, seed| {
            let a = g.param(s, pid(s, "a"));
            let b = g.param(s, pid(s, "b"));
            let y = g.matmul(a, b)?;
            weighted_sum(g, y, seed)
        },
    ));
    worst
}

pub fn elementwise_binary() -> f64 {
    let mut worst: f64 = 0.0;
    for op in ["add", "sub", "mul"] {
        worst = worst.max(check_op(
            op,
            |rng, s| {
                let shape = [dim(rng), dim(rng)];
                s.add("a", random(&shape, -1.0, 1.0, rng)).unwrap();
                s.add("b", random(&shape, -1.0, 1.0, rng)).unwrap();
                vec![]
            },
            |g, s, _, seed| {
                let a = g.param(s, pid(s, "a"));
                let b = g.param(s, pid(s, "b"));
                let y = match op {
                    "add" => g.add(a, b)?,
                    "sub" => g.sub(a, b)?,
                    _ => g.mul(a, b)?,
                };
                weighted_sum(g, y, seed)
            },
        ));
    }
    worst
}

pub fn add_row_and_scale() -> f64 {
    let mut worst: f64 = 0.0;
    worst = worst.max(check_op(
        "add_row+scale",
        |rng, s| {
            let (n, m) = (dim(rng), dim(rng));
            s.add("x", random(&[n, m], -1.0, 1.0, rng)).unwrap();
            s.add("b", random(&[m], -1.0, 1.0, rng)).unwrap();
            vec![]
        },
        |g, s, _, seed| {
            let x = g.param(s, pid(s, "x"));
            let b = g.param(s, pid(s, "b"));
            let y = g.add_row(x, b)?;
            let y = g.scale(y, -1.7)?;
            weighted_sum(g, y, seed)
        },
    ));
    worst
}

pub fn unary() -> f64 {
    let mut worst: f64 = 0.0;
    for op in ["sigmoid", "tanh", "exp", "log", "relu"] {
        worst = worst.max(check_op(
            op,
            |rng, s| {
                let shape = [dim(rng), dim(rng)];
                let (lo, hi) = if op == "log" { (0.2, 2.0) } else { (-2.0, 2.0) };
                s.add("x", random(&shape, lo, hi, rng)).unwrap();
                vec![]
            },
            |g, s, _, seed| {
                let x = g.param(s, pid(s, "x"));
                let y = match op {
                    "sigmoid" => g.sigmoid(x)?,
                    "tanh" => g.tanh(x)?,
                    "exp" => g.exp(x)?,
                    "log" => g.log(x)?,
                    _ => g.relu(x)?,
                };
                weighted_sum(g, y, seed)
            },
        ));
    }
    worst
}

pub fn softmax_with_temperature() -> f64 {
    let mut worst: f64 = 0.0;
    worst = worst.max(check_op(
        "softmax_t",
        |rng, s| {
            let shape = [dim(rng), 1 + dim(rng)];
            s.add("x", random(&shape, -2.0, 2.0, rng)).unwrap();
            vec![(rng.uniform_range(0.3, 2.0) * 1000.0) as usize]
        },
        |g, s, extra, seed| {
            let x = g.param(s, pid(s, "x"));
            let y = g.softmax_t(x, extra[0] as f64 / 1000.0)?;
            weighted_sum(g, y, seed)
        },
    ));
    worst
}

pub fn log_softmax_and_cross_entropy() -> f64 {
    let mut worst: f64 = 0.0;
    worst = worst.max(check_op(
        "log_softmax",
        |rng, s| {
            let shape = [dim(rng), 1 + dim(rng)];
            s.add("x", random(&shape, -2.0, 2.0, rng)).unwrap();
            vec![]
        },
        |g, s, _, seed| {
            let x = g.param(s, pid(s, "x"));
            let y = g.log_softmax(x)?;
            weighted_sum(g, y, seed)
        },
    ));
    worst = worst.max(check_op(
        "cross_entropy",
        |rng, s| {
            let (n, c) = (dim(rng), 1 + dim(rng));
            s.add("x", random(&[n, c], -2.0, 2.0, rng)).unwrap();
            (0..n).map(|_| rng.below(c)).collect()
        },
        |g, s, targets, _| {
            let x = g.param(s, pid(s, "x"));
            g.cross_entropy(x, targets)
        },
    ));
    worst
}

pub fn max_rows_pooling() -> f64 {
    let mut worst: f64 = 0.0;
    worst = worst.max(check_op(
        "max_rows",
        |rng, s| {
            let (n, m) = (dim(rng), dim(rng));
            s.add("x", random(&[n, m], -2.0, 2.0, rng)).unwrap();
            vec![1 + rng.below(n)]
        },
        |g, s, extra, seed| {
            let x = g.param(s, pid(s, "x"));
            let y = g.max_rows(x, extra[0])?;
            weighted_sum(g, y, seed)
        },
    ));
    worst
}

pub fn gather_rows() -> f64 {
    let mut worst: f64 = 0.0;
    worst = worst.max(check_op(
        "gather",
        |rng, s| {
            let (v, d) = (dim(rng), dim(rng));
            s.add("e", random(&[v, d], -1.0, 1.0, rng)).unwrap();
            (0..dim(rng)).map(|_| rng.below(v)).collect()
        },
        |g, s, ids, seed| {
            let e = g.param(s, pid(s, "e"));
            let y = g.gather(e, ids)?;
            weighted_sum(g, y, seed)
        },
    ));
    worst
}

pub fn conv1d_valid() -> f64 {
    let mut worst: f64 = 0.0;
    worst = worst.max(check_op(
        "conv1d",
        |rng, s| {
            let d = dim(rng);
            let k = 1 + rng.below(5);
            let t = k + rng.below(8);
            let f = dim(rng);
            s.add("x", random(&[t, d], -1.0, 1.0, rng)).unwrap();
            s.add("w", random(&[k * d, f], -1.0, 1.0, rng)).unwrap();
            vec![]
        },
        |g, s, _, seed| {
            let x = g.param(s, pid(s, "x"));
            let w = g.param(s, pid(s, "w"));
            let y = g.conv1d(x, w)?;
            weighted_sum(g, y, seed)
        },
    ));
    worst
}

pub fn concat_and_slices() -> f64 {
    let mut worst: f64 = 0.0;
    worst = worst.max(check_op(
        "concat/slice",
        |rng, s| {
            let (n, m1, m2) = (dim(rng), dim(rng), dim(rng));
            s.add("a", random(&[n, m1], -1.0, 1.0, rng)).unwrap();
            s.add("b", random(&[n, m2], -1.0, 1.0, rng)).unwrap();
            s.add("c", random(&[dim(rng), m1], -1.0, 1.0, rng)).unwrap();
            vec![]
        },
        |g, s, _, seed| {
            let a = g.param(s, pid(s, "a"));
            let b = g.param(s, pid(s, "b"));
            let c = g.param(s, pid(s, "c"));
            let cols = g.concat(&[a, b], 1)?;
            let m = g.value(cols).shape()[1];
            let sc = g.slice_cols(cols, 1.min(m - 1), m)?;
            let rows = g.concat(&[a, c], 0)?;
            let n = g.value(rows).shape()[0];
            let sr = g.slice_rows(rows, n / 2, n)?;
            let l1 = weighted_sum(g, sc, seed)?;
            let l2 = weighted_sum(g, sr, seed + 1)?;
            g.add(l1, l2)
        },
    ));
    worst
}

pub fn pick_mean_reshape() -> f64 {
    let mut worst: f64 = 0.0;
    worst = worst.max(check_op(
        "pick/mean/reshape",
        |rng, s| {
            let (n, m) = (dim(rng), dim(rng));
            s.add("x", random(&[n, m], -1.0, 1.0, rng)).unwrap();
            (0..n).map(|_| rng.below(m)).collect()
        },
        |g, s, idx, seed| {
            let x = g.param(s, pid(s, "x"));
            let n = g.value(x).len();
            let flat = g.reshape(x, &[1, n])?;
            let back = g.reshape(flat, g.value(x).shape().to_vec().as_slice())?;
            let p = g.pick(back, idx)?;
            let sq = g.mul(p, p)?;
            let m = g.mean(sq)?;
            let w = weighted_sum(g, back, seed)?;
            g.add(m, w)
        },
    ));
    worst
}

pub fn bce_with_logits() -> f64 {
    let mut worst: f64 = 0.0;
    worst = worst.max(check_op(
        "bce",
        |rng, s| {
            let n = dim(rng);
            s.add("x", random(&[n, 1], -3.0, 3.0, rng)).unwrap();
            (0..n).map(|_| rng.below(2)).collect()
        },
        |g, s, y, _| {
            let x = g.param(s, pid(s, "x"));
            let targets: Vec<f64> = y.iter().map(|&v| v as f64).collect();
            let weights: Vec<f64> = (0..y.len()).map(|i| 0.5 + i as f64 * 0.25).collect();
            g.bce_with_logits(x, &targets, &weights, 2.5)
        },
    ));
    worst
}

/// Every op check, by name.
pub type Check = (&'static str, fn() -> f64);

pub const ALL: &[Check] = &[
    ("matmul", matmul),
    ("elementwise_binary", elementwise_binary),
    ("add_row_and_scale", add_row_and_scale),
    ("unary", unary),
    ("softmax_with_temperature", softmax_with_temperature),
    ("log_softmax_and_cross_entropy", log_softmax_and_cross_entropy),
    ("max_rows_pooling", max_rows_pooling),
    ("gather_rows", gather_rows),
    ("conv1d_valid", conv1d_valid),
    ("concat_and_slices", concat_and_slices),
    ("pick_mean_reshape", pick_mean_reshape),
    ("bce_with_logits", bce_with_logits),
];
