//! Analytic oracles: the global minimizer, heterogeneity and admissibility.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::loss::{dot, LossModel};

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 200;

/// Minimizer of `(1/|V|) Σ_v E_{P_v} f(x, D)`.
pub fn global_minimizer(loss: &LossModel) -> Result<Vec<f64>> {
    match loss {
        LossModel::Quadratic(q) => {
            let n = q.means.len() as f64;
            let mut mean = vec![0.0; loss.dim()];
            for m in &q.means {
                for (acc, v) in mean.iter_mut().zip(m) {
                    *acc += v;
                }
            }
            Ok(mean.into_iter().map(|v| v / n).collect())
        }
        LossModel::Logistic(_) => newton(loss),
        LossModel::Custom(_) => Err(Error::UnsupportedOracle),
    }
}

fn mean_gradient(loss: &LossModel, x: &[f64]) -> Result<Vec<f64>> {
    let n = loss.n_agents();
    let mut sum = vec![0.0; x.len()];
    for v in 0..n {
        for (acc, g) in sum.iter_mut().zip(loss.expected_gradient(v, x)?) {
            *acc += g;
        }
    }
    Ok(sum.into_iter().map(|g| g / n as f64).collect())
}

fn newton(loss: &LossModel) -> Result<Vec<f64>> {
    let LossModel::Logistic(l) = loss else {
        return Err(Error::UnsupportedOracle);
    };
    let d = loss.dim();
    let n = l.datasets.len() as f64;
    let mut x = DVector::<f64>::zeros(d);
    for _ in 0..NEWTON_MAX_ITERS {
        let g = DVector::from_vec(mean_gradient(loss, x.as_slice())?);
        if g.norm() < NEWTON_TOL {
            return Ok(x.as_slice().to_vec());
        }
        let mut hess = DMatrix::<f64>::identity(d, d) * l.reg;
        for data in &l.datasets {
            let w = 1.0 / (n * data.len() as f64);
            for p in data {
                let z = p.label * dot(&p.features, x.as_slice());
                let s = 1.0 / (1.0 + (-z).exp());
                let a = DVector::from_column_slice(&p.features);
                hess += &a * a.transpose() * (w * s * (1.0 - s));
            }
        }
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("logistic Hessian not positive definite".into()))?
            .solve(&g);
        // Backtrack on the gradient norm; the full step is taken near the optimum.
        let mut t = 1.0;
        loop {
            let candidate = &x - &step * t;
            let gc = DVector::from_vec(mean_gradient(loss, candidate.as_slice())?);
            if gc.norm() < g.norm() || t < 1e-8 {
                x = candidate;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::InvalidParameter(
        "logistic minimizer did not reach the gradient tolerance".into(),
    ))
}

/// `(1/|V|) Σ_v ‖E_{P_v} ∇f(x*, D)‖²`.
pub fn heterogeneity(loss: &LossModel, xstar: &[f64]) -> Result<f64> {
    let n = loss.n_agents();
    let mut total = 0.0;
    for v in 0..n {
        let g = loss.expected_gradient(v, xstar)?;
        total += dot(&g, &g);
    }
    Ok(total / n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Admissibility {
    pub admissible: bool,
    /// Substitute gradients for the agents outside `honest`, in id order.
    pub witness: Vec<Vec<f64>>,
    /// `(1/|V|)(Σ_U ‖g_u‖² + Σ ‖ĝ_v‖²)`.
    pub mean_sq_norm: f64,
}

/// Decides whether `xhat` is an admissible consensus model for the agents in
/// `honest` under heterogeneity budget `delta`.
pub fn check_admissible(
    xhat: &[f64],
    honest: &[usize],
    loss: &LossModel,
    delta: f64,
    tol: f64,
) -> Result<Admissibility> {
    let n = loss.n_agents();
    if honest.is_empty() {
        return Err(Error::InvalidParameter("admissibility needs a nonempty agent set".into()));
    }
    if let Some(&bad) = honest.iter().find(|&&u| u >= n) {
        return Err(Error::InvalidParameter(format!("agent {bad} out of range")));
    }
    let mut in_set = vec![false; n];
    for &u in honest {
        in_set[u] = true;
    }
    let members = in_set.iter().filter(|&&b| b).count();
    let mut sum = vec![0.0; xhat.len()];
    let mut sq = 0.0;
    for u in (0..n).filter(|&u| in_set[u]) {
        let g = loss.expected_gradient(u, xhat)?;
        sq += dot(&g, &g);
        for (acc, gi) in sum.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    let outside = n - members;
    if outside == 0 {
        let mean_sq_norm = sq / n as f64;
        let admissible = dot(&sum, &sum).sqrt() <= tol && mean_sq_norm <= delta + tol;
        return Ok(Admissibility { admissible, witness: Vec::new(), mean_sq_norm });
    }
    let share: Vec<f64> = sum.iter().map(|s| -s / outside as f64).collect();
    let mean_sq_norm = (sq + outside as f64 * dot(&share, &share)) / n as f64;
    Ok(Admissibility {
        admissible: mean_sq_norm <= delta + tol,
        witness: vec![share; outside],
        mean_sq_norm,
    })
}
