use crate::{Graph, NnError, Tensor, Var};

/// Largest elementwise relative error between two gradient lists.
///
/// Each element is compared against `max(|a|, |b|) + floor`, where the floor
/// is `1e-6` times the largest magnitude seen anywhere, so entries that are
/// tiny relative to the gradient's scale do not dominate.
pub fn max_relative_error(analytic: &[Tensor<f64>], numeric: &[Tensor<f64>]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|t| t.max_abs())
        .fold(0.0f64, f64::max);
    let floor = 1e-6 * scale.max(1e-300);
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        for (&x, &y) in a.data().iter().zip(n.data()) {
            let err = (x - y).abs() / (x.abs().max(y.abs()) + floor);
            worst = worst.max(err);
        }
    }
    worst
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `h`, returning the maximum relative error.
pub fn grad_check<F, E>(f: F, params: &[Tensor<f64>], h: f64) -> std::result::Result<f64, E>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> std::result::Result<Var<'g, f64>, E>,
    E: From<NnError>,
{
    grad_check_sampled(f, params, h, usize::MAX)
}

/// [`grad_check`] restricted to at most `per_tensor` evenly spaced entries
/// of each parameter, for graphs too large to difference exhaustively.
pub fn grad_check_sampled<F, E>(f: F, params: &[Tensor<f64>], h: f64, per_tensor: usize) -> std::result::Result<f64, E>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> std::result::Result<Var<'g, f64>, E>,
    E: From<NnError>,
{
    let picks: Vec<Vec<usize>> = params
        .iter()
        .map(|p| {
            let n = p.len();
            let k = n.min(per_tensor.max(1));
            (0..k).map(|j| j * n / k).collect()
        })
        .collect();
    let full: Vec<Tensor<f64>> = {
        let g = Graph::new();
        let vars: Vec<_> = params.iter().map(|p| g.leaf(p.clone())).collect();
        let out = f(&g, &vars)?;
        g.grad(out, &vars)?.iter().map(|v| (*v.value()).clone()).collect()
    };
    let eval = |ps: &[Tensor<f64>]| -> std::result::Result<f64, E> {
        let g = Graph::new();
        let vars: Vec<_> = ps.iter().map(|p| g.leaf(p.clone())).collect();
        Ok(f(&g, &vars)?.item())
    };
    let mut analytic = Vec::with_capacity(params.len());
    let mut numeric = Vec::with_capacity(params.len());
    let mut work = params.to_vec();
    for (k, idx) in picks.iter().enumerate() {
        let mut num = Vec::with_capacity(idx.len());
        for &i in idx {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let up = eval(&work)?;
            work[k].data_mut()[i] = orig - h;
            let down = eval(&work)?;
            work[k].data_mut()[i] = orig;
            num.push((up - down) / (2.0 * h));
        }
        let shape = [1, 1, 1, idx.len()];
        analytic.push(Tensor::new(shape, idx.iter().map(|&i| full[k].data()[i]).collect())?);
        numeric.push(Tensor::new(shape, num)?);
    }
    Ok(max_relative_error(&analytic, &numeric))
}
