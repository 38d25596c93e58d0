//! Point-to-line reduction of the sonar PnP problem and its certified solver.
//!
//! Under the orthographic approximation each sonar measurement pins the
//! transformed world point to a vertical line through `o = [u, v, 0]` with
//! direction `d = [0, 0, 1]`, turning pose estimation into point-to-line
//! registration. Minimizing over the translation in closed form leaves a
//! quadratic form in the homogenized rotation vector
//! `r̃ = [c1; c2; c3; h]` (stacked columns of `R` plus a homogenizing
//! scalar), constrained by 22 quadratic SO(3) conditions. The Lagrangian
//! dual of that QCQP is a small SDP; a zero duality gap certifies global
//! optimality and the optimal rotation is read off the kernel of the
//! certificate matrix.

use crate::geometry::{project_to_so3, Measurement, Point3};
use crate::sdp::{solve_lmi, LmiProblem, SdpOptions};
use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector2, Vector3};
use thiserror::Error;

/// Homogenized rotation vector: stacked columns of `R` plus the scalar `h`.
pub type HomogRotVec = SVector<f64, 10>;
/// Symmetric 10×10 matrix over the homogenized rotation vector.
pub type Matrix10 = SMatrix<f64, 10, 10>;

/// Minimum correspondence count accepted at all (coplanar scenes).
pub const MIN_POINTS_COPLANAR: usize = 5;
/// Minimum correspondence count for the general (rank-1 kernel) path.
pub const MIN_POINTS_GENERAL: usize = 7;

/// Number of quadratic constraints in the homogenized rotation QCQP.
pub const NUM_CONSTRAINTS: usize = 22;

/// Errors from problem construction, the dual solve, and recovery.
#[derive(Debug, Error)]
pub enum PtlError {
    #[error("correspondence lists differ in length: {0} world points vs {1} measurements")]
    LengthMismatch(usize, usize),
    #[error("insufficient points: got {got}, need at least {need} ({context})")]
    InsufficientPoints {
        got: usize,
        need: usize,
        context: &'static str,
    },
    #[error("non-finite value in correspondence {0}")]
    NonFiniteData(usize),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("SDP solver failure: {0}")]
    SolverFailure(String),
    #[error("degenerate configuration: certificate kernel dimension {0} exceeds 2")]
    DegenerateConfiguration(usize),
    #[error("recovery failure: {0}")]
    RecoveryFailure(String),
}

/// Paired 3D world points and 2D sonar measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    world_points: Vec<Point3>,
    measurements: Vec<Measurement>,
}

impl CorrespondenceSet {
    /// Validates lengths, finiteness, and the hard minimum of 5 points.
    pub fn new(
        world_points: Vec<Point3>,
        measurements: Vec<Measurement>,
    ) -> Result<Self, PtlError> {
        if world_points.len() != measurements.len() {
            return Err(PtlError::LengthMismatch(
                world_points.len(),
                measurements.len(),
            ));
        }
        if world_points.len() < MIN_POINTS_COPLANAR {
            return Err(PtlError::InsufficientPoints {
                got: world_points.len(),
                need: MIN_POINTS_COPLANAR,
                context: "hard minimum, coplanar scenes",
            });
        }
        for (i, (p, m)) in world_points.iter().zip(&measurements).enumerate() {
            if !(p.iter().all(|v| v.is_finite()) && m.iter().all(|v| v.is_finite())) {
                return Err(PtlError::NonFiniteData(i));
            }
        }
        Ok(Self {
            world_points,
            measurements,
        })
    }

    pub fn len(&self) -> usize {
        self.world_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.world_points.is_empty()
    }

    pub fn world_points(&self) -> &[Point3] {
        &self.world_points
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    /// Centroid of the world points.
    pub fn world_centroid(&self) -> Point3 {
        self.world_points.iter().sum::<Point3>() / self.world_points.len() as f64
    }

    /// Mean measurement.
    pub fn measurement_mean(&self) -> Measurement {
        self.measurements.iter().sum::<Measurement>() / self.measurements.len() as f64
    }
}

/// Point-to-line residual data: anchors on the imaging plane, the shared
/// vertical line direction, and the associated projection weight.
#[derive(Debug, Clone)]
pub struct PtLCost {
    anchors: Vec<Point3>,
    direction: Vector3<f64>,
    weight: Matrix3<f64>,
}

impl PtLCost {
    pub fn anchors(&self) -> &[Point3] {
        &self.anchors
    }

    pub fn direction(&self) -> &Vector3<f64> {
        &self.direction
    }

    /// The weight `C = I - d dᵀ = diag(1, 1, 0)`.
    pub fn weight(&self) -> &Matrix3<f64> {
        &self.weight
    }

    /// Cost `Σ ‖R p_i + t - o_i‖²_C` at an explicit pose.
    pub fn evaluate(
        &self,
        rotation: &Matrix3<f64>,
        translation: &Vector3<f64>,
        corr: &CorrespondenceSet,
    ) -> f64 {
        self.anchors
            .iter()
            .zip(corr.world_points())
            .map(|(o, p)| {
                let e = rotation * p + translation - o;
                e.x * e.x + e.y * e.y
            })
            .sum()
    }
}

/// Lifts each measurement to an anchor `[u, v, 0]` in the sonar frame.
pub fn build_ptl_cost(corr: &CorrespondenceSet) -> PtLCost {
    let d = Vector3::new(0.0, 0.0, 1.0);
    PtLCost {
        anchors: corr
            .measurements()
            .iter()
            .map(|m| Vector3::new(m.x, m.y, 0.0))
            .collect(),
        direction: d,
        weight: Matrix3::identity() - d * d.transpose(),
    }
}

/// The homogenized rotation QCQP: cost matrix plus the 22 quadratic
/// constraints `r̃ᵀ A_j r̃ = c_j`.
#[derive(Debug, Clone)]
pub struct QcqpProblem {
    /// Translation-marginalized cost `Q̃` (symmetric PSD).
    pub cost: Matrix10,
    /// Constraint matrices and their right-hand sides, in the fixed order
    /// produced by [`build_constraint_matrices`].
    pub constraints: Vec<(Matrix10, f64)>,
}

impl QcqpProblem {
    /// Quadratic cost value `r̃ᵀ Q̃ r̃`.
    pub fn cost_value(&self, r: &HomogRotVec) -> f64 {
        (r.transpose() * self.cost * r)[(0, 0)]
    }

    /// Largest constraint violation `max_j |r̃ᵀ A_j r̃ - c_j|`.
    pub fn max_constraint_violation(&self, r: &HomogRotVec) -> f64 {
        self.constraints
            .iter()
            .map(|(a, c)| ((r.transpose() * a * r)[(0, 0)] - c).abs())
            .fold(0.0, f64::max)
    }
}

/// Stacks the columns of a rotation and the homogenizing scalar into `r̃`.
pub fn homogenize_rotation(rotation: &Matrix3<f64>, h: f64) -> HomogRotVec {
    let mut r = HomogRotVec::zeros();
    for col in 0..3 {
        for row in 0..3 {
            r[3 * col + row] = rotation[(row, col)];
        }
    }
    r[9] = h;
    r
}

/// Reads the leading nine entries back into a 3×3 matrix (column order).
pub fn reshape_rotation(r: &HomogRotVec) -> Matrix3<f64> {
    Matrix3::from_columns(&[
        Vector3::new(r[0], r[1], r[2]),
        Vector3::new(r[3], r[4], r[5]),
        Vector3::new(r[6], r[7], r[8]),
    ])
}

/// Eliminates the translation from the PtL cost and expands the concentrated
/// objective into the 10-dimensional homogeneous quadratic form.
///
/// The weight kills the component along the line direction, so only the
/// in-plane translation is determined; its optimum is the centroid difference
/// and substituting it leaves `Σ ‖R (p_i - p̄) - (o_i - ō)‖²_C`, an exact
/// quadratic in `r̃`. World points are centered before assembly, which both
/// performs the elimination and conditions the cost matrix.
pub fn marginalize_translation(
    cost: &PtLCost,
    corr: &CorrespondenceSet,
) -> Result<QcqpProblem, PtlError> {
    let n = corr.len();
    if n == 0 {
        return Err(PtlError::DegenerateInput(
            "translation normal system is rank deficient: no correspondences".into(),
        ));
    }
    let p_bar = corr.world_centroid();
    let o_bar = cost.anchors.iter().sum::<Point3>() / n as f64;

    let mut q = Matrix10::zeros();
    for (p, o) in corr.world_points().iter().zip(&cost.anchors) {
        let pc = p - p_bar;
        let oc = o - o_bar;
        let mut a = HomogRotVec::zeros();
        let mut b = HomogRotVec::zeros();
        for m in 0..3 {
            a[3 * m] = pc[m];
            b[3 * m + 1] = pc[m];
        }
        a[9] = -oc.x;
        b[9] = -oc.y;
        q += a * a.transpose() + b * b.transpose();
    }
    // Symmetrize against accumulation round-off.
    q = (q + q.transpose()) * 0.5;

    Ok(QcqpProblem {
        cost: q,
        constraints: build_constraint_matrices(),
    })
}

// r̃ layout: r̃[3m + k] = R[k, m], r̃[9] = h.
#[inline]
fn entry_index(row: usize, col: usize) -> usize {
    3 * col + row
}

fn add_sym(a: &mut Matrix10, i: usize, j: usize, w: f64) {
    if i == j {
        a[(i, i)] += w;
    } else {
        a[(i, j)] += 0.5 * w;
        a[(j, i)] += 0.5 * w;
    }
}

/// The 22 quadratic SO(3) constraints on the homogenized rotation vector:
/// 6 from `RᵀR = h²I`, 6 from `RRᵀ = h²I`, 9 from the cyclic right-hand-rule
/// identities `row_a × row_b = h·row_c`, and the homogenization `h² = 1`.
///
/// Every `r̃` built from a rotation and `h = ±1` satisfies all of them
/// exactly; reflections violate at least one cross-product row.
pub fn build_constraint_matrices() -> Vec<(Matrix10, f64)> {
    let mut out = Vec::with_capacity(NUM_CONSTRAINTS);

    // Column Gram: c_i · c_j - h² δ_ij = 0.
    for i in 0..3 {
        for j in i..3 {
            let mut a = Matrix10::zeros();
            for k in 0..3 {
                add_sym(&mut a, entry_index(k, i), entry_index(k, j), 1.0);
            }
            if i == j {
                a[(9, 9)] -= 1.0;
            }
            out.push((a, 0.0));
        }
    }

    // Row Gram: row_k · row_l - h² δ_kl = 0.
    for k in 0..3 {
        for l in k..3 {
            let mut a = Matrix10::zeros();
            for m in 0..3 {
                add_sym(&mut a, entry_index(k, m), entry_index(l, m), 1.0);
            }
            if k == l {
                a[(9, 9)] -= 1.0;
            }
            out.push((a, 0.0));
        }
    }

    // Right-hand rule: (row_a × row_b)[c] - h·row_cr[c] = 0 for the three
    // cyclic row triples and each component c.
    for k in 0..3 {
        let (ra, rb, rc) = (k, (k + 1) % 3, (k + 2) % 3);
        for c in 0..3 {
            let c1 = (c + 1) % 3;
            let c2 = (c + 2) % 3;
            let mut a = Matrix10::zeros();
            add_sym(&mut a, entry_index(ra, c1), entry_index(rb, c2), 1.0);
            add_sym(&mut a, entry_index(ra, c2), entry_index(rb, c1), -1.0);
            add_sym(&mut a, 9, entry_index(rc, c), -1.0);
            out.push((a, 0.0));
        }
    }

    // Homogenization: h² = 1.
    let mut a_h = Matrix10::zeros();
    a_h[(9, 9)] = 1.0;
    out.push((a_h, 1.0));

    debug_assert_eq!(out.len(), NUM_CONSTRAINTS);
    out
}

/// Dual solution of the rotation QCQP: multipliers, certificate matrix, and
/// its numerical kernel.
#[derive(Debug, Clone)]
pub struct DualSolution {
    /// Multipliers `λ̃ = [λᵀ, γ]ᵀ`; the homogenization multiplier `γ` is last.
    pub lambda: SVector<f64, 22>,
    /// Dual optimum `γ = d*`, a certified lower bound on the QCQP minimum.
    pub dual_value: f64,
    /// Certificate matrix `Z̃(λ̃) ⪰ 0` at the dual optimum.
    pub z: Matrix10,
    /// Number of certificate eigenvalues at numerical zero (1 in general
    /// scenes, 2 for coplanar ones).
    pub kernel_dim: usize,
    /// Orthonormal eigenvectors spanning the numerical kernel (ascending
    /// eigenvalue order).
    pub kernel_basis: Vec<HomogRotVec>,
    /// Eigenvalues of `Z̃`, ascending.
    pub z_eigenvalues: [f64; 10],
    /// Primal cost minus `dual_value`; filled in once a pose is recovered.
    pub duality_gap: Option<f64>,
    /// Total Newton iterations spent in the conic solve.
    pub newton_iters: usize,
    /// Final duality measure of the interior-point path (relative scale).
    pub duality_measure: f64,
    /// False when the solver hit an iteration limit before its tolerance.
    pub converged: bool,
}

impl DualSolution {
    /// Records the primal cost reached by a recovered pose and returns the
    /// relative duality gap `(cost - d*) / (1 + |d*|)`.
    pub fn record_primal_cost(&mut self, primal_cost: f64) -> f64 {
        let gap = primal_cost - self.dual_value;
        self.duality_gap = Some(gap);
        gap / (1.0 + self.dual_value.abs())
    }

    /// Relative duality gap, if a primal cost has been recorded.
    pub fn relative_gap(&self) -> Option<f64> {
        self.duality_gap
            .map(|g| g / (1.0 + self.dual_value.abs()))
    }
}

/// Options for the dual solve and kernel detection.
#[derive(Debug, Clone)]
pub struct DualSolveOptions {
    /// Eigenvalues of `Z̃` at or below `rank_tol · max(1, λ_max)` count as
    /// kernel; noise blurs the rank-1/rank-2 boundary so the threshold is
    /// explicit and reported.
    pub rank_tol: f64,
    /// Conic solver tolerances.
    pub sdp: SdpOptions,
}

impl Default for DualSolveOptions {
    fn default() -> Self {
        Self {
            rank_tol: 1e-6,
            sdp: SdpOptions::default(),
        }
    }
}

/// Maximizes the Lagrangian dual `max γ s.t. Z̃(λ̃) ⪰ 0` where
/// `Z̃ = Q̃ + Σ_j λ_j A_j - γ A_h`.
///
/// Sign conventions make `r̃ᵀ Z̃ r̃ = r̃ᵀ Q̃ r̃ - γ` for every feasible `r̃`,
/// so `γ` lower-bounds the primal and the optimal `r̃` lies in the kernel of
/// `Z̃` whenever the gap vanishes. The problem is scale-normalized before the
/// solve and the multipliers are scaled back afterwards.
pub fn solve_dual_sdp(
    problem: &QcqpProblem,
    opts: &DualSolveOptions,
) -> Result<DualSolution, PtlError> {
    let scale = problem.cost.norm().max(1e-9);
    let q_scaled = problem.cost / scale;

    let to_dyn = |m: &Matrix10| DMatrix::from_column_slice(10, 10, m.as_slice());

    let mut directions: Vec<DMatrix<f64>> = problem.constraints
        [..NUM_CONSTRAINTS - 1]
        .iter()
        .map(|(a, _)| to_dyn(a))
        .collect();
    // The homogenization multiplier enters with a minus sign: growing γ eats
    // into the (h, h) entry of the certificate.
    let (a_h, _) = &problem.constraints[NUM_CONSTRAINTS - 1];
    directions.push(-to_dyn(a_h));

    let mut objective = DVector::zeros(NUM_CONSTRAINTS);
    objective[NUM_CONSTRAINTS - 1] = 1.0;

    let lmi = LmiProblem {
        base: to_dyn(&q_scaled),
        directions,
        objective,
    };

    // Strictly feasible start: weight s0 on the three column-norm constraints
    // contributes diag(I9, -3); pairing it with γ0 = -4 s0 yields
    // Z0 = Q̃/scale + s0·I ≻ 0. The margin absorbs any tiny negative
    // eigenvalue the cost picked up from rounding.
    let lam_min_q = nalgebra::linalg::SymmetricEigen::new(q_scaled)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let s0 = (1e-4_f64).max(-2.0 * lam_min_q + 1e-10);
    let mut y0 = DVector::zeros(NUM_CONSTRAINTS);
    // Column-Gram diagonal constraints sit at indices 0, 3, 5.
    y0[0] = s0;
    y0[3] = s0;
    y0[5] = s0;
    y0[NUM_CONSTRAINTS - 1] = -4.0 * s0;

    let sol = solve_lmi(&lmi, &y0, &opts.sdp).map_err(|e| PtlError::SolverFailure(e.to_string()))?;

    let mut lambda = SVector::<f64, 22>::zeros();
    for j in 0..NUM_CONSTRAINTS {
        lambda[j] = sol.y[j] * scale;
    }
    let dual_value = sol.objective * scale;

    let mut z = Matrix10::zeros();
    for i in 0..10 {
        for j in 0..10 {
            z[(i, j)] = sol.slack[(i, j)] * scale;
        }
    }
    z = (z + z.transpose()) * 0.5;

    let eig = nalgebra::linalg::SymmetricEigen::new(z);
    let mut order: Vec<usize> = (0..10).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
    });
    let mut z_eigenvalues = [0.0; 10];
    for (slot, &idx) in order.iter().enumerate() {
        z_eigenvalues[slot] = eig.eigenvalues[idx];
    }
    let lam_max = z_eigenvalues[9];
    let threshold = opts.rank_tol * lam_max.max(1.0);
    let kernel_dim = z_eigenvalues.iter().filter(|&&v| v <= threshold).count();

    if kernel_dim == 0 {
        return Err(PtlError::SolverFailure(format!(
            "certificate has no numerical kernel (smallest eigenvalue {:.3e}, threshold {:.3e})",
            z_eigenvalues[0], threshold
        )));
    }
    if kernel_dim > 2 {
        return Err(PtlError::DegenerateConfiguration(kernel_dim));
    }

    let kernel_basis: Vec<HomogRotVec> = order[..kernel_dim]
        .iter()
        .map(|&idx| {
            let col = eig.eigenvectors.column(idx);
            HomogRotVec::from_fn(|i, _| col[i])
        })
        .collect();

    Ok(DualSolution {
        lambda,
        dual_value,
        z,
        kernel_dim,
        kernel_basis,
        z_eigenvalues,
        duality_gap: None,
        newton_iters: sol.newton_iters,
        duality_measure: sol.duality_measure,
        converged: sol.converged,
    })
}

/// Recovers the rotation from a one-dimensional certificate kernel.
///
/// The kernel vector is scaled so its homogenizing component is +1, the nine
/// leading entries are reshaped column-wise, and the result is projected onto
/// SO(3) by orthogonal Procrustes.
pub fn recover_rotation_rank1(dual: &DualSolution) -> Result<Matrix3<f64>, PtlError> {
    if dual.kernel_dim != 1 {
        return Err(PtlError::RecoveryFailure(format!(
            "rank-1 recovery requires kernel dimension 1, got {}",
            dual.kernel_dim
        )));
    }
    rotation_from_kernel_vector(&dual.kernel_basis[0])
}

/// Rank-1 recovery from an explicit kernel vector.
pub fn rotation_from_kernel_vector(v: &HomogRotVec) -> Result<Matrix3<f64>, PtlError> {
    let h = v[9];
    if h.abs() < 1e-8 {
        return Err(PtlError::RecoveryFailure(format!(
            "homogenizing component {h:.3e} too small: rotation scale undetermined"
        )));
    }
    let scaled = v / h;
    Ok(project_to_so3(&reshape_rotation(&scaled)))
}

/// In-plane translation for a fixed rotation: the component of the optimal
/// translation orthogonal to the line direction,
/// `t_xy = mean(m) - (R p̄)_xy`. The component along the lines is
/// unobservable here and is recovered downstream.
pub fn recover_translation_xy(rotation: &Matrix3<f64>, corr: &CorrespondenceSet) -> Vector2<f64> {
    let rp = rotation * corr.world_centroid();
    corr.measurement_mean() - Vector2::new(rp.x, rp.y)
}
