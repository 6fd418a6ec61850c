use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Tensor, Var};

/// Denominator floor for [`relative_error`]; below it the comparison is
/// effectively absolute.
const FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn eval_scalar(g: &Graph<f64>, v: Var) -> Result<f64> {
    let value = g.value(v);
    if value.len() != 1 {
        return Err(Error::shape("grad_check", value.shape(), &[1, 1]));
    }
    Ok(value.data()[0])
}

/// Compares the backward gradient of scalar `f` at `x` with central
/// differences; returns the maximum relative error over all entries.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let input = g.input(x.clone());
    let out = f(&mut g, input)?;
    let grads = g.backward(out)?;
    let zeros = Tensor::zeros(x.shape());
    let analytic = grads.get(input).unwrap_or(&zeros);

    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for k in 0..x.len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + eps;
        let plus = {
            let mut g = Graph::new();
            let v = g.input(probe.clone());
            let o = f(&mut g, v)?;
            eval_scalar(&g, o)?
        };
        probe.data_mut()[k] = orig - eps;
        let minus = {
            let mut g = Graph::new();
            let v = g.input(probe.clone());
            let o = f(&mut g, v)?;
            eval_scalar(&g, o)?
        };
        probe.data_mut()[k] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.data()[k], numeric));
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric gradient at the worst entry.
    pub worst_values: (f64, f64),
    pub entries: usize,
}

/// Gradient check of `loss(store)` with respect to every trainable entry of
/// `store`. `loss` must build its graph from `store` via [`Graph::param`].
pub fn grad_check_params<F>(loss: F, store: &ParamStore<f64>, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut analytic = store.clone();
    analytic.zero_grad();
    let mut g = Graph::new();
    let out = loss(&mut g, store)?;
    g.backward(out)?.accumulate_into(&g, &mut analytic)?;

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        entries: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if !store.get(id).trainable {
            continue;
        }
        for k in 0..store.value(id).len() {
            let orig = probe.value(id).data()[k];
            let at = |v: f64, probe: &mut ParamStore<f64>| -> Result<f64> {
                probe.value_mut(id).data_mut()[k] = v;
                let mut g = Graph::new();
                let o = loss(&mut g, probe)?;
                eval_scalar(&g, o)
            };
            let plus = at(orig + eps, &mut probe)?;
            let minus = at(orig - eps, &mut probe)?;
            probe.value_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let exact = analytic.grad(id).data()[k];
            let err = relative_error(exact, numeric);
            report.entries += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_values = (exact, numeric);
                report.worst = Some((store.get(id).name.clone(), k));
            }
        }
    }
    Ok(report)
}
