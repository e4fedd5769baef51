use super::{AutodiffError, NodeId, Tape, Tensor};

/// Compares tape gradients of a scalar function against central differences.
///
/// `build` records the function on a fresh tape given one parameter leaf per
/// entry of `params` and returns the scalar root. The result is the maximum
/// over every coordinate of `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn check_gradient<F>(build: F, params: &[Tensor], step: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId, AutodiffError>,
{
    assert!(step > 0.0, "finite-difference step must be positive");

    let eval = |values: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = values.iter().map(|t| tape.param(t.clone())).collect();
        let root = build(&mut tape, &ids)?;
        Ok(tape.value(root).item())
    };

    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|t| tape.param(t.clone())).collect();
    let root = build(&mut tape, &ids)?;
    let grads = tape.backward(root)?;

    let mut worst: f64 = 0.0;
    let mut probe: Vec<Tensor> = params.to_vec();
    for (p, id) in ids.iter().enumerate() {
        let zeros = Tensor::zeros(params[p].shape());
        let analytic = grads.wrt(*id).unwrap_or(&zeros).clone();
        for i in 0..params[p].len() {
            let orig = params[p].data()[i];
            probe[p].data_mut()[i] = orig + step;
            let up = eval(&probe)?;
            probe[p].data_mut()[i] = orig - step;
            let down = eval(&probe)?;
            probe[p].data_mut()[i] = orig;

            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[i];
            let denom = 1.0_f64.max(a.abs()).max(numeric.abs());
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
