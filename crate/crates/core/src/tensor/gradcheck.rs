use super::{Graph, NodeId, ParamId, ParamStore, Rng, TensorError};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub entries_checked: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Compares analytic gradients of every entry of every parameter in `params`
/// with central differences `(f(p+ε) − f(p−ε)) / 2ε`.
///
/// Relative error is `|a − n| / max(|a|, |n|, 1e-6)`; the floor keeps
/// finite-difference roundoff on near-zero gradients from dominating.
pub fn grad_check<F>(params: &mut ParamStore, eps: f64, f: F) -> Result<GradCheckReport, TensorError>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<NodeId, TensorError>,
{
    run(params, eps, None, f)
}

/// As [`grad_check`], but checks at most `per_param` randomly chosen entries
/// of each parameter.
pub fn grad_check_sampled<F>(
    params: &mut ParamStore,
    eps: f64,
    per_param: usize,
    rng: &mut Rng,
    f: F,
) -> Result<GradCheckReport, TensorError>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<NodeId, TensorError>,
{
    run(params, eps, Some((per_param, rng)), f)
}

fn eval<F>(params: &ParamStore, f: &mut F) -> Result<f64, TensorError>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<NodeId, TensorError>,
{
    let mut g = Graph::new();
    let loss = f(&mut g, params)?;
    let v = g.value(loss);
    if v.len() != 1 {
        return Err(TensorError::NonScalarLoss(v.shape().to_vec()));
    }
    Ok(v.item())
}

fn run<F>(
    params: &mut ParamStore,
    eps: f64,
    mut sample: Option<(usize, &mut Rng)>,
    mut f: F,
) -> Result<GradCheckReport, TensorError>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<NodeId, TensorError>,
{
    params.zero_grads();
    let mut g = Graph::new();
    let loss = f(&mut g, params)?;
    let base = g.value(loss).item();
    g.backward(loss, &mut [params])?;
    let again = eval(params, &mut f)?;
    if again.to_bits() != base.to_bits() {
        return Err(TensorError::NondeterministicFunction(base, again));
    }

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        entries_checked: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        let n = params.value(id).len();
        let entries: Vec<usize> = match sample.as_mut() {
            Some((k, rng)) if *k < n => {
                let mut all: Vec<usize> = (0..n).collect();
                rng.shuffle(&mut all);
                all.truncate(*k);
                all
            }
            _ => (0..n).collect(),
        };
        for j in entries {
            let analytic = params.grad(id).data()[j];
            let orig = params.value(id).data()[j];
            params.value_mut(id).data_mut()[j] = orig + eps;
            let plus = eval(params, &mut f)?;
            params.value_mut(id).data_mut()[j] = orig - eps;
            let minus = eval(params, &mut f)?;
            params.value_mut(id).data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            let err = (analytic - numeric).abs() / denom;
            report.entries_checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_param = params.name(id).to_string();
                report.worst_index = j;
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    params.zero_grads();
    Ok(report)
}
