use super::{DiffError, NodeId, Result, Tape};

/// `max_i |a_i - b_i| / max(|a_i|, |b_i|, 1e-8)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

fn evaluate<F>(f: &F, shape: &[usize], x: Vec<f64>) -> Result<(Tape<f64>, NodeId, NodeId)>
where
    F: Fn(&mut Tape<f64>, NodeId) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let input = tape.leaf(shape, x)?;
    let out = f(&mut tape, input)?;
    if tape.value(out).numel() != 1 {
        return Err(DiffError::NonScalarLoss(tape.shape(out).to_vec()));
    }
    Ok((tape, input, out))
}

/// Compares reverse-mode gradients of `f` at `x` against central differences.
///
/// `f` receives a fresh 64-bit tape and the input node and must return a
/// scalar node. Returns the largest per-coordinate relative error.
pub fn finite_difference_check<F>(f: F, shape: &[usize], x: &[f64], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, NodeId) -> Result<NodeId>,
{
    if !(1e-5..=1e-2).contains(&step) {
        return Err(DiffError::InvalidStep(step));
    }
    let (mut tape, input, out) = evaluate(&f, shape, x.to_vec())?;
    tape.backward(out)?;
    let analytic = tape.grad(input).to_vec();

    let mut numeric = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let (t_plus, _, o_plus) = evaluate(&f, shape, probe.clone())?;
        probe[i] = x[i] - step;
        let (t_minus, _, o_minus) = evaluate(&f, shape, probe.clone())?;
        probe[i] = x[i];
        numeric.push((t_plus.data(o_plus)[0] - t_minus.data(o_minus)[0]) / (2.0 * step));
    }
    Ok(max_relative_error(&analytic, &numeric))
}
