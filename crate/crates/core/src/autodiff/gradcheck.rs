//! Central-difference gradient checking.

use super::{Graph, NodeId, Parameters, Tensor};
use crate::error::{Error, Result};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-4;

/// Worst disagreement between analytic and numeric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max |a - n| / max(1, |a|, |n|)` over every checked coordinate.
    pub max_rel_error: f64,
    /// Input and flat element where the maximum was observed.
    pub worst: (usize, usize),
    pub checked: usize,
    /// Coordinates whose `+h` or `-h` tape took a different discrete branch
    /// (relu sign, max winner, neighbor set, matching). They straddle a kink,
    /// so the central difference says nothing about the gradient there.
    pub skipped: usize,
}

impl GradCheckReport {
    fn new() -> Self {
        Self {
            max_rel_error: 0.0,
            worst: (0, 0),
            checked: 0,
            skipped: 0,
        }
    }

    fn record(&mut self, at: (usize, usize), analytic: f64, up: f64, down: f64) {
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs());
        self.checked += 1;
        if err > self.max_rel_error {
            self.max_rel_error = err;
            self.worst = at;
        }
    }
}

fn scalar_output(g: &Graph, out: NodeId) -> Result<()> {
    if g.value(out).numel() != 1 {
        return Err(Error::InvalidArgument("gradient check needs a scalar output".into()));
    }
    Ok(())
}

fn eval<F>(f: &F, inputs: &[Tensor]) -> Result<(f64, u64)>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = f(&mut g, &ids)?;
    Ok((g.scalar(out)?, g.structure_digest()))
}

/// Compares the reverse-mode gradient of a scalar function against central
/// differences for every coordinate of every input.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor]) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = f(&mut g, &ids)?;
    scalar_output(&g, out)?;
    let digest = g.structure_digest();
    let grads = g.backward(out)?;

    let mut report = GradCheckReport::new();
    let mut work = inputs.to_vec();
    for (k, id) in ids.iter().enumerate() {
        let analytic = grads.wrt(*id).expect("variable gradient");
        for e in 0..inputs[k].numel() {
            let x0 = inputs[k].data()[e];
            work[k].data_mut()[e] = x0 + FD_STEP;
            let (up, du) = eval(&f, &work)?;
            work[k].data_mut()[e] = x0 - FD_STEP;
            let (down, dd) = eval(&f, &work)?;
            work[k].data_mut()[e] = x0;
            if du != digest || dd != digest {
                report.skipped += 1;
                continue;
            }
            report.record((k, e), analytic.data()[e], up, down);
        }
    }
    Ok(report)
}

/// Single-input form of [`grad_check_many`]; returns the maximum relative error.
pub fn grad_check<F>(f: F, point: &Tensor) -> Result<f64>
where
    F: Fn(&mut Graph, NodeId) -> Result<NodeId>,
{
    grad_check_many(|g, ids| f(g, ids[0]), std::slice::from_ref(point)).map(|r| r.max_rel_error)
}

/// Checks the gradient with respect to every named parameter of `params`.
/// `f` must bind the parameters on the tape it is given. `worst.0` indexes
/// parameters in visiting order.
pub fn grad_check_params<P, F>(params: &P, f: F) -> Result<GradCheckReport>
where
    P: Parameters + Clone,
    F: Fn(&P, &mut Graph) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let out = f(params, &mut g)?;
    scalar_output(&g, out)?;
    let digest = g.structure_digest();
    let grads = g.backward(out)?;

    let mut shapes = Vec::new();
    params.visit(&mut |name, t| shapes.push((name.to_string(), t.numel())));

    let eval_at = |name: &str, e: usize, delta: f64| -> Result<(f64, u64)> {
        let mut p = params.clone();
        p.visit_mut(&mut |n, t| {
            if n == name {
                t.data_mut()[e] += delta;
            }
        });
        let mut g = Graph::new();
        let out = f(&p, &mut g)?;
        Ok((g.scalar(out)?, g.structure_digest()))
    };

    let mut report = GradCheckReport::new();
    for (k, (name, numel)) in shapes.iter().enumerate() {
        let analytic = grads
            .named(name)
            .ok_or_else(|| Error::InvalidArgument(format!("parameter `{name}` was not bound")))?;
        for e in 0..*numel {
            let (up, du) = eval_at(name, e, FD_STEP)?;
            let (down, dd) = eval_at(name, e, -FD_STEP)?;
            if du != digest || dd != digest {
                report.skipped += 1;
                continue;
            }
            report.record((k, e), analytic.data()[e], up, down);
        }
    }
    Ok(report)
}
