//! Conjugate-gradient search over the orthogonal group.
//!
//! Iterates are kept orthogonal by moving along `B ↦ exp(tH)·B` with `H`
//! skew-symmetric. The Riemannian gradient in these coordinates is the
//! skew part of `G·Bᵀ`, and search directions are combined with the
//! Polak–Ribière+ rule directly in the Lie algebra.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{EpochStats, SsaObjective};
use super::whiten::Whitener;
use super::StationaryBasis;
use crate::error::{Error, Result};
use crate::linalg::{orthogonality_error, random_orthogonal, reorthonormalize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Number of starting points; the first is the identity.
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once the Frobenius norm of the Riemannian gradient is below this.
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { restarts: 5, max_iters: 500, grad_tol: 1e-6, seed: 42 }
    }
}

/// Outcome of a single descent run.
#[derive(Debug, Clone)]
pub struct DescentRun {
    pub rotation: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn skew_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

/// Riemannian gradient at `rotation` as a skew-symmetric matrix, so that
/// `d/dt f(exp(tH)B)|₀ = ⟨Γ, H⟩`.
pub fn riemannian_gradient(euclidean: &DMatrix<f64>, rotation: &DMatrix<f64>) -> DMatrix<f64> {
    skew_part(&(euclidean * rotation.transpose()))
}

fn step(rotation: &DMatrix<f64>, direction: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    reorthonormalize(&((direction * t).exp() * rotation))
}

/// Runs conjugate-gradient descent from one starting rotation.
pub fn descend(problem: &SsaObjective, init: DMatrix<f64>, d: usize, config: &OptimizerConfig) -> Result<DescentRun> {
    let mut b = init;
    let (mut f, g) = problem.value_and_gradient(&b, d)?;
    let mut gamma = riemannian_gradient(&g, &b);
    let mut dir = -&gamma;
    let mut t_guess = 1.0 / gamma.norm().max(1e-12);
    let mut history = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        let gnorm = gamma.norm();
        if gnorm < config.grad_tol {
            converged = true;
            break;
        }
        let mut slope = gamma.dot(&dir);
        if slope >= 0.0 {
            dir = -&gamma;
            slope = -gnorm * gnorm;
        }
        // Armijo backtracking along the geodesic.
        let mut t = t_guess;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = step(&b, &dir, t);
            if let Ok(fc) = problem.value(&cand, d) {
                if fc <= f + ARMIJO * t * slope {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next, f_next)) = accepted else {
            // No decrease is representable any more; the iterate is a
            // numerical stationary point.
            converged = gnorm < config.grad_tol.sqrt();
            log::debug!("line search stalled at |grad|={gnorm:.3e}");
            break;
        };
        iterations += 1;
        let (f_eval, g_next) = problem.value_and_gradient(&next, d)?;
        debug_assert!((f_eval - f_next).abs() <= 1e-9 * f_next.abs().max(1.0));
        let gamma_next = riemannian_gradient(&g_next, &next);
        let beta = (gamma_next.dot(&(&gamma_next - &gamma)) / (gnorm * gnorm)).max(0.0);
        dir = -&gamma_next + dir * beta;
        gamma = gamma_next;
        b = next;
        f = f_next;
        history.push(f);
        t_guess = (t * 2.0).min(1e3);
    }
    if orthogonality_error(&b) > 1e-8 {
        b = reorthonormalize(&b);
    }
    Ok(DescentRun { rotation: b, objective: f, iterations, converged, history })
}

/// Finds the rotation whose first `d` rows minimize the objective, keeping
/// the best of `config.restarts` starts.
pub fn optimize_rotation(
    epochs: &[EpochStats],
    whitener: &Whitener,
    d: usize,
    config: &OptimizerConfig,
) -> Result<StationaryBasis> {
    if epochs.len() < 2 {
        return Err(Error::Usage(format!(
            "rotation search needs at least 2 epochs, got {}",
            epochs.len()
        )));
    }
    let problem = SsaObjective::new(epochs, whitener)?;
    let n = problem.dim();
    if d == 0 || d > n {
        return Err(Error::Usage(format!("stationary dimension {d} outside 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<DescentRun> = None;
    let mut last_err = None;
    for k in 0..config.restarts.max(1) {
        let init = if k == 0 { DMatrix::identity(n, n) } else { random_orthogonal(n, &mut rng) };
        match descend(&problem, init, d, config) {
            Ok(run) => {
                log::debug!(
                    "restart {k}: objective={:.6e} iters={} converged={}",
                    run.objective,
                    run.iterations,
                    run.converged
                );
                if best.as_ref().is_none_or(|b| run.objective < b.objective) {
                    best = Some(run);
                }
            }
            Err(e) => {
                log::debug!("restart {k} failed: {e}");
                last_err = Some(e);
            }
        }
    }
    let run = match (best, last_err) {
        (Some(run), _) => run,
        (None, Some(e)) => return Err(e),
        (None, None) => return Err(Error::Usage("no restarts were run".into())),
    };
    if !run.converged {
        log::warn!("rotation search did not converge within {} iterations", config.max_iters);
    }
    Ok(StationaryBasis::new(whitener.clone(), run.rotation, d, run.objective, run.converged, run.iterations))
}
