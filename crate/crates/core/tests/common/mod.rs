//! Shared helpers for the integration tests.

#![allow(dead_code)]

use dbpm::diffcore::{finite_difference_check, NodeId, Result, Tape};
use dbpm::seeding::{rng_for, Rng};
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOLERANCE: f64 = 1e-4;
pub const FD_TRIALS: usize = 20;

type Build = Box<dyn Fn(&mut Tape<f64>, NodeId) -> Result<NodeId>>;
type Sample = fn(&mut Rng, usize) -> Vec<f64>;

/// One differentiable op, wired so that the checked input flows through it
/// and a fixed random projection turns the output into a scalar.
pub struct OpCase {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub build: Build,
    pub sample: Sample,
}

fn fixed(n: usize, salt: f64) -> Vec<f64> {
    (0..n).map(|i| ((i as f64 + 1.0) * 0.731 + salt).sin()).collect()
}

fn constant(t: &mut Tape<f64>, shape: &[usize], salt: f64) -> Result<NodeId> {
    t.leaf(shape, fixed(shape.iter().product(), salt))
}

/// `sum(out * w)` with a fixed, non-degenerate `w`.
fn project(t: &mut Tape<f64>, out: NodeId) -> Result<NodeId> {
    let shape = t.shape(out).to_vec();
    let w = t.leaf(&shape, fixed(shape.iter().product(), 0.3).into_iter().map(|v| v + 1.5).collect())?;
    let prod = t.mul(out, w)?;
    t.sum(prod)
}

fn uniform(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn positive(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.5..2.0)).collect()
}

/// Magnitudes in [0.1, 1]: central differences never straddle the kink.
fn off_kink(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.1..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect()
}

/// Distinct values at least 0.05 apart, so window maxima are unique.
fn spread(rng: &mut Rng, n: usize) -> Vec<f64> {
    use rand::seq::SliceRandom;
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.1 + rng.random_range(0.0..0.05)).collect();
    v.shuffle(rng);
    v
}

macro_rules! case {
    ($name:expr, $shape:expr, $sample:expr, |$t:ident, $x:ident| $body:expr) => {
        OpCase {
            name: $name,
            shape: $shape.to_vec(),
            sample: $sample,
            build: Box::new(move |$t: &mut Tape<f64>, $x: NodeId| {
                let out = $body;
                project($t, out)
            }),
        }
    };
}

/// Every op, with each differentiable operand checked at least once.
pub fn op_cases() -> Vec<OpCase> {
    vec![
        case!("add", [3, 4], uniform, |t, x| { let c = constant(t, &[3, 4], 1.0)?; t.add(x, c)? }),
        case!("add_bias_row", [4], uniform, |t, x| { let c = constant(t, &[3, 4], 1.0)?; t.add(c, x)? }),
        case!("sub_lhs", [3, 4], uniform, |t, x| { let c = constant(t, &[3, 4], 2.0)?; t.sub(x, c)? }),
        case!("sub_rhs", [3, 4], uniform, |t, x| { let c = constant(t, &[3, 4], 2.0)?; t.sub(c, x)? }),
        case!("mul", [3, 4], uniform, |t, x| { let c = constant(t, &[3, 4], 3.0)?; t.mul(x, c)? }),
        case!("mul_self", [5], uniform, |t, x| t.mul(x, x)?),
        case!("matmul_lhs", [3, 4], uniform, |t, x| { let c = constant(t, &[4, 2], 4.0)?; t.matmul(x, c)? }),
        case!("matmul_rhs", [4, 2], uniform, |t, x| { let c = constant(t, &[3, 4], 4.0)?; t.matmul(c, x)? }),
        case!("matmul_t_lhs", [3, 4], uniform, |t, x| { let c = constant(t, &[2, 4], 5.0)?; t.matmul_t(x, c)? }),
        case!("matmul_t_rhs", [2, 4], uniform, |t, x| { let c = constant(t, &[3, 4], 5.0)?; t.matmul_t(c, x)? }),
        case!("conv1d_input", [2, 2, 9], uniform, |t, x| {
            let w = constant(t, &[3, 2, 3], 6.0)?;
            let b = constant(t, &[3], 7.0)?;
            t.conv1d(x, w, Some(b), 1)?
        }),
        case!("conv1d_weight", [3, 2, 3], uniform, |t, x| {
            let input = constant(t, &[2, 2, 9], 6.0)?;
            t.conv1d(input, x, None, 2)?
        }),
        case!("conv1d_bias", [3], uniform, |t, x| {
            let input = constant(t, &[2, 2, 9], 6.0)?;
            let w = constant(t, &[3, 2, 3], 8.0)?;
            t.conv1d(input, w, Some(x), 1)?
        }),
        case!("relu", [12], off_kink, |t, x| t.relu(x)?),
        case!("max_pool1d", [2, 2, 8], spread, |t, x| t.max_pool1d(x, 2)?),
        case!("global_mean_pool", [2, 3, 5], uniform, |t, x| t.global_mean_pool(x)?),
        case!("exp", [6], uniform, |t, x| t.exp(x)?),
        case!("log", [6], positive, |t, x| t.log(x)?),
        case!("sum", [6], uniform, |t, x| { let s = t.sum(x)?; t.mul(s, s)? }),
        case!("mean", [6], uniform, |t, x| { let s = t.mean(x)?; t.exp(s)? }),
        case!("scalar_scale", [6], uniform, |t, x| t.scale(x, -1.7)?),
        case!("l2_normalize_rows", [3, 4], positive, |t, x| t.l2_normalize_rows(x)?),
        case!("concat_rows_first", [2, 3], uniform, |t, x| { let c = constant(t, &[1, 3], 9.0)?; t.concat_rows(&[x, c])? }),
        case!("concat_rows_second", [2, 3], uniform, |t, x| { let c = constant(t, &[1, 3], 9.0)?; t.concat_rows(&[c, x])? }),
        case!("dot_rows", [3, 4], uniform, |t, x| { let c = constant(t, &[3, 4], 10.0)?; t.dot_rows(x, c)? }),
        case!("softmax_rows", [3, 4], uniform, |t, x| t.softmax_rows(x)?),
        case!("cross_entropy", [3, 4], uniform, |t, x| t.cross_entropy(x, vec![2, 0, 3])?),
    ]
}

/// Largest relative error over `FD_TRIALS` random inputs.
pub fn worst_fd_error(case: &OpCase, seed: u64) -> f64 {
    let n = case.shape.iter().product();
    (0..FD_TRIALS as u64)
        .map(|trial| {
            let x = (case.sample)(&mut rng_for(seed, &[trial]), n);
            finite_difference_check(|t, input| (case.build)(t, input), &case.shape, &x, FD_STEP)
                .unwrap_or_else(|e| panic!("{}: {e}", case.name))
        })
        .fold(0.0, f64::max)
}

/// Random unit rows, flattened `[b, h]`.
pub fn unit_rows(rng: &mut Rng, b: usize, h: usize) -> Vec<f64> {
    let mut v = uniform(rng, b * h);
    for row in v.chunks_exact_mut(h) {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        row.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Gradient of pair `index`'s InfoNCE loss w.r.t. its anchor, by autodiff
/// through the batch graph with the normalization step taken out.
pub fn autodiff_anchor_grad(ru: &[f64], rv: &[f64], dim: usize, t: f64, index: usize) -> Vec<f64> {
    let b = ru.len() / dim;
    let mut tape: Tape<f64> = Tape::new();
    let u = tape.leaf(&[b, dim], ru.to_vec()).unwrap();
    let v = tape.leaf(&[b, dim], rv.to_vec()).unwrap();
    let scores = tape.matmul_t(u, v).unwrap();
    let logits = tape.scale(scores, 1.0 / t).unwrap();
    let losses = tape.cross_entropy(logits, (0..b).collect()).unwrap();
    let mask: Vec<f64> = (0..b).map(|i| if i == index { 1.0 } else { 0.0 }).collect();
    let m = tape.leaf(&[b], mask).unwrap();
    let picked = tape.mul(losses, m).unwrap();
    let loss = tape.sum(picked).unwrap();
    tape.backward(loss).unwrap();
    tape.grad(u)[index * dim..(index + 1) * dim].iter().map(|g| -g).collect()
}
