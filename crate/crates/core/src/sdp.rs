//! Small dense semidefinite programming by a log-det barrier method.
//!
//! Solves linear-matrix-inequality problems of the form
//!
//! ```text
//!   maximize    c·y
//!   subject to  F(y) = F0 + Σ_i y_i F_i  ⪰ 0
//! ```
//!
//! with all `F_i` symmetric and dense. The cone program the registration dual
//! needs is tiny (a single 10×10 PSD block, 22 variables), so a path-following
//! Newton method on the analytic center is both fast and accurate: each stage
//! minimizes `-t·c·y - log det F(y)` and the barrier parameter `t` grows until
//! the duality measure `n/t` drops below the requested tolerance.
//!
//! The interface is deliberately solver-agnostic: any conic backend that can
//! maximize a linear functional over an LMI could replace [`solve_lmi`].

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors from the LMI solver.
#[derive(Debug, Error)]
pub enum SdpError {
    /// The supplied starting point is not strictly feasible.
    #[error("starting point is not strictly inside the PSD cone")]
    InfeasibleStart,
    /// Dimensions of base/directions/objective disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// The Newton iteration broke down.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// `maximize c·y  s.t.  base + Σ y_i directions[i] ⪰ 0`.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub base: DMatrix<f64>,
    pub directions: Vec<DMatrix<f64>>,
    pub objective: DVector<f64>,
}

impl LmiProblem {
    /// Slack matrix `F(y)`.
    pub fn assemble(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut f = self.base.clone();
        for (yi, fi) in y.iter().zip(&self.directions) {
            f.axpy(*yi, fi, 1.0);
        }
        f
    }

    fn validate(&self) -> Result<(), SdpError> {
        let n = self.base.nrows();
        if self.base.ncols() != n {
            return Err(SdpError::DimensionMismatch("base not square".into()));
        }
        if self.directions.len() != self.objective.len() {
            return Err(SdpError::DimensionMismatch(format!(
                "{} directions vs {} objective entries",
                self.directions.len(),
                self.objective.len()
            )));
        }
        for (i, fi) in self.directions.iter().enumerate() {
            if fi.nrows() != n || fi.ncols() != n {
                return Err(SdpError::DimensionMismatch(format!(
                    "direction {i} is {}x{}, expected {n}x{n}",
                    fi.nrows(),
                    fi.ncols()
                )));
            }
        }
        Ok(())
    }
}

/// Tolerances and iteration limits for [`solve_lmi`].
#[derive(Debug, Clone)]
pub struct SdpOptions {
    /// Target duality measure `n / t_final`; the returned objective is within
    /// roughly this amount of the true optimum (on a unit-scale problem).
    pub gap_tol: f64,
    /// Newton decrement threshold (`δ²/2`) ending each centering stage.
    pub newton_tol: f64,
    /// Initial barrier parameter.
    pub t_init: f64,
    /// Multiplicative growth of the barrier parameter between stages.
    pub t_growth: f64,
    /// Maximum number of barrier stages.
    pub max_stages: usize,
    /// Maximum Newton iterations per stage.
    pub max_newton_per_stage: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-10,
            newton_tol: 1e-13,
            t_init: 1.0,
            t_growth: 10.0,
            max_stages: 24,
            max_newton_per_stage: 80,
        }
    }
}

/// Result of an LMI solve.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// Maximizer.
    pub y: DVector<f64>,
    /// Objective value `c·y`.
    pub objective: f64,
    /// Slack matrix `F(y)` at the returned point.
    pub slack: DMatrix<f64>,
    /// Total Newton iterations across all stages.
    pub newton_iters: usize,
    /// Final duality measure `n / t`.
    pub duality_measure: f64,
    /// False when an iteration limit was hit before reaching `gap_tol`.
    pub converged: bool,
}

fn log_det_cholesky(m: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    let chol = nalgebra::linalg::Cholesky::new(m.clone())?;
    let l = chol.l();
    let mut ld = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        ld += d.ln();
    }
    Some((2.0 * ld, l))
}

fn min_eigenvalue_sym(m: &DMatrix<f64>) -> f64 {
    let eig = nalgebra::linalg::SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Path-following barrier solve of an LMI maximization problem.
///
/// `y0` must be strictly feasible (`F(y0) ≻ 0`); the caller constructs it
/// from problem structure. Returns the last centered iterate even when the
/// stage budget runs out, with `converged = false`.
pub fn solve_lmi(
    problem: &LmiProblem,
    y0: &DVector<f64>,
    opts: &SdpOptions,
) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    let n = problem.base.nrows();
    let m = problem.directions.len();
    if y0.len() != m {
        return Err(SdpError::DimensionMismatch(format!(
            "y0 has {} entries, expected {m}",
            y0.len()
        )));
    }

    let mut y = y0.clone();
    let mut f = problem.assemble(&y);
    let (mut log_det, mut l) = log_det_cholesky(&f).ok_or(SdpError::InfeasibleStart)?;

    let nu = n as f64;
    let mut t = opts.t_init;
    let mut total_newton = 0usize;

    let mut grad = DVector::<f64>::zeros(m);
    let mut hess = DMatrix::<f64>::zeros(m, m);
    let mut slacks: Vec<DMatrix<f64>> = Vec::with_capacity(m);

    for _stage in 0..opts.max_stages {
        // Center for the current barrier parameter.
        for _ in 0..opts.max_newton_per_stage {
            total_newton += 1;

            // S_j = L^{-1} F_j L^{-T}; grad and Hessian of the barrier come
            // from traces of these whitened directions.
            slacks.clear();
            for fj in &problem.directions {
                let a = l
                    .solve_lower_triangular(fj)
                    .ok_or_else(|| SdpError::NumericalFailure("triangular solve".into()))?;
                let s = l
                    .solve_lower_triangular(&a.transpose())
                    .ok_or_else(|| SdpError::NumericalFailure("triangular solve".into()))?;
                slacks.push(s);
            }
            for j in 0..m {
                grad[j] = -t * problem.objective[j] - slacks[j].trace();
                for k in j..m {
                    let h = slacks[j].dot(&slacks[k]);
                    hess[(j, k)] = h;
                    hess[(k, j)] = h;
                }
            }

            // Tiny ridge keeps the system solvable when constraint matrices
            // are linearly dependent (the Gram families share one relation).
            let ridge = 1e-13 * (hess.trace() / m as f64).max(1.0);
            for j in 0..m {
                hess[(j, j)] += ridge;
            }

            let chol_h = nalgebra::linalg::Cholesky::new(hess.clone()).ok_or_else(|| {
                SdpError::NumericalFailure("newton system not positive definite".into())
            })?;
            let step = chol_h.solve(&(-&grad));
            let decrement = -grad.dot(&step);
            if !decrement.is_finite() {
                return Err(SdpError::NumericalFailure("non-finite newton decrement".into()));
            }
            if decrement * 0.5 <= opts.newton_tol {
                break;
            }

            // Step length: stay strictly inside the cone, then Armijo.
            let mut delta_f = DMatrix::<f64>::zeros(n, n);
            for (sj, fj) in step.iter().zip(&problem.directions) {
                delta_f.axpy(*sj, fj, 1.0);
            }
            let a = l
                .solve_lower_triangular(&delta_f)
                .ok_or_else(|| SdpError::NumericalFailure("triangular solve".into()))?;
            let s_delta = l
                .solve_lower_triangular(&a.transpose())
                .ok_or_else(|| SdpError::NumericalFailure("triangular solve".into()))?;
            let lam_min = min_eigenvalue_sym(&s_delta);
            let mut alpha = if lam_min < 0.0 {
                (0.98 / -lam_min).min(1.0)
            } else {
                1.0
            };

            let phi0 = -t * problem.objective.dot(&y) - log_det;
            let slope = grad.dot(&step);
            let mut accepted = false;
            for _ in 0..60 {
                let y_trial = &y + alpha * &step;
                let f_trial = problem.assemble(&y_trial);
                if let Some((ld_trial, l_trial)) = log_det_cholesky(&f_trial) {
                    let phi_trial = -t * problem.objective.dot(&y_trial) - ld_trial;
                    if phi_trial <= phi0 + 0.25 * alpha * slope {
                        y = y_trial;
                        f = f_trial;
                        log_det = ld_trial;
                        l = l_trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                // Stalled line search: the iterate is already essentially
                // centered at this accuracy; move on to the next stage.
                break;
            }
        }

        if nu / t <= opts.gap_tol {
            return Ok(SdpSolution {
                objective: problem.objective.dot(&y),
                y,
                slack: f,
                newton_iters: total_newton,
                duality_measure: nu / t,
                converged: true,
            });
        }
        t *= opts.t_growth;
    }

    Ok(SdpSolution {
        objective: problem.objective.dot(&y),
        y,
        slack: f,
        newton_iters: total_newton,
        duality_measure: nu / (t / opts.t_growth),
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_interval_problem() {
        // maximize y s.t. diag(1+y, 1-y) ⪰ 0  →  y* = 1.
        let problem = LmiProblem {
            base: DMatrix::identity(2, 2),
            directions: vec![DMatrix::from_diagonal(&nalgebra::dvector![1.0, -1.0])],
            objective: nalgebra::dvector![1.0],
        };
        let sol = solve_lmi(&problem, &nalgebra::dvector![0.0], &SdpOptions::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.objective - 1.0).abs() < 1e-8, "objective {}", sol.objective);
    }

    #[test]
    fn recovers_smallest_eigenvalue() {
        // maximize y s.t. Q - y I ⪰ 0  →  y* = λ_min(Q).
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let n = 6;
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let q = &a * a.transpose() + DMatrix::identity(n, n) * 0.3;
            let lam_min = min_eigenvalue_sym(&q);

            let problem = LmiProblem {
                base: q.clone(),
                directions: vec![-DMatrix::<f64>::identity(n, n)],
                objective: nalgebra::dvector![1.0],
            };
            // y = 0 gives F = Q ≻ 0: strictly feasible.
            let sol =
                solve_lmi(&problem, &nalgebra::dvector![0.0], &SdpOptions::default()).unwrap();
            assert!(
                (sol.objective - lam_min).abs() < 1e-7 * (1.0 + lam_min.abs()),
                "objective {} vs lambda_min {}",
                sol.objective,
                lam_min
            );
            // The slack Q - y* I is singular at the optimum.
            assert!(min_eigenvalue_sym(&sol.slack) < 1e-6);
        }
    }

    #[test]
    fn tolerates_dependent_directions() {
        // Duplicate direction makes the Newton system singular without a ridge.
        let q = DMatrix::from_diagonal(&nalgebra::dvector![2.0, 3.0, 5.0]);
        let d = -DMatrix::<f64>::identity(3, 3);
        let problem = LmiProblem {
            base: q,
            directions: vec![d.clone(), d],
            objective: nalgebra::dvector![0.5, 0.5],
        };
        let sol =
            solve_lmi(&problem, &nalgebra::dvector![0.0, 0.0], &SdpOptions::default()).unwrap();
        // y1 + y2 plays the role of a single multiplier; objective is
        // (y1 + y2)/2 maximized at y1 + y2 = 2.
        assert!((sol.objective - 1.0).abs() < 1e-7, "objective {}", sol.objective);
    }

    #[test]
    fn rejects_infeasible_start() {
        let problem = LmiProblem {
            base: -DMatrix::<f64>::identity(2, 2),
            directions: vec![DMatrix::identity(2, 2)],
            objective: nalgebra::dvector![1.0],
        };
        assert!(matches!(
            solve_lmi(&problem, &nalgebra::dvector![0.0], &SdpOptions::default()),
            Err(SdpError::InfeasibleStart)
        ));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let problem = LmiProblem {
            base: DMatrix::identity(2, 2),
            directions: vec![DMatrix::identity(3, 3)],
            objective: nalgebra::dvector![1.0],
        };
        assert!(matches!(
            solve_lmi(&problem, &nalgebra::dvector![0.0], &SdpOptions::default()),
            Err(SdpError::DimensionMismatch(_))
        ));
    }
}
