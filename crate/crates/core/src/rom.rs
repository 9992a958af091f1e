//! Hyper-reduced entropy-stable Galerkin reduced-order model.
//!
//! Offline: test bases, cubature rules, the projection `P_t`, the
//! compressed operators `Q_t` and the hybridized `Q_h`. Online: entropy
//! projection, flux differencing over the evaluation points, boundary and
//! viscous terms, and a mass-matrix solve.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::ReducedBasis;
use crate::cubature::{
    self, empirical_cubature, stabilizing_points, target_space, CubatureRule, RuleKind, Selection,
    StabilizationOptions, StabilizationReport,
};
use crate::error::{Error, Result};
use crate::fom::{total_entropy, Fom};
use crate::numerics::{orthonormal_range, Cholesky, DenseMatrix, SparseMatrix};
use crate::operators::{BoundaryPoint, FomOperators};
use crate::physics::{ConservationLaw, MAX_VARS};
use crate::rk::{self, StepControl};

/// Number of row blocks in the flux-pair loop. Fixed so that the order of
/// the reduction does not depend on the thread count.
const PAIR_CHUNKS: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestBasis {
    /// `span{1, V, QⁱV}` per direction.
    #[default]
    Enriched,
    /// The identity: every grid function is representable.
    Complete,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Viscosity {
    None,
    /// Sampled rows of `D` applied to the entropy-projected state.
    V1,
    /// Sampled rows of `D` with the `∂u/∂v` Jacobian at interface averages.
    #[default]
    V2,
    /// `ε w₀ VᵀKV` applied to the coefficients of the entropy-projected state.
    V3,
}

impl std::str::FromStr for Viscosity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "v1" => Ok(Self::V1),
            "v2" => Ok(Self::V2),
            "v3" => Ok(Self::V3),
            _ => Err(Error::Config(format!("unknown viscosity treatment '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialProjection {
    /// `Vᵀu₀` on the full grid.
    #[default]
    Dense,
    /// `P u₀(𝓘)` from the hyper-reduced points.
    Hyper,
}

/// Orthonormal basis of `span{1, V, QV}`; columns are normalized before
/// the rank-revealing SVD, which cuts at `σ_max · 1e-10`.
pub fn build_test_basis(v: &DenseMatrix, q: &SparseMatrix) -> Result<DenseMatrix> {
    let k = v.rows();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0 / (k as f64).sqrt(); k]];
    let qv = q.matmul_dense(v);
    for m in [v, &qv] {
        for j in 0..m.cols() {
            let c = m.col(j);
            let n = crate::numerics::norm2(c);
            if n > 0.0 {
                cols.push(c.iter().map(|x| x / n).collect());
            }
        }
    }
    Ok(orthonormal_range(&DenseMatrix::from_columns(&cols), 1e-10)?)
}

/// `P_t = (V_t(𝓘)ᵀ W V_t(𝓘))⁻¹ V_t(𝓘)ᵀ W`.
pub fn projection_matrix(v_t: &DenseMatrix, rule: &CubatureRule) -> Result<DenseMatrix> {
    let vi = v_t.select_rows(&rule.indices);
    let wv = vi.scale_rows(&rule.weights);
    let m = vi.t_matmul(&wv);
    let chol = Cholesky::new(&m).map_err(|e| {
        Error::SingularTestMass(format!(
            "test mass matrix of dimension {} on {} points is not positive definite ({e}); add stabilizing points",
            m.rows(),
            rule.len()
        ))
    })?;
    Ok(chol.solve(&wv.transpose()))
}

/// `Q_t = P_tᵀ Q̂_t P_t`. With `skew`, `Q̂_t` and the result are
/// antisymmetrized so that skew-symmetry holds bitwise.
pub fn hyper_reduced_diff(q_hat: &DenseMatrix, p_t: &DenseMatrix, skew: bool) -> DenseMatrix {
    let qh = if skew { antisymmetric_part(q_hat) } else { q_hat.clone() };
    let qt = p_t.t_matmul(&qh.matmul(p_t));
    if skew {
        antisymmetric_part(&qt)
    } else {
        qt
    }
}

/// `½(A − Aᵀ)`.
pub fn antisymmetric_part(a: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| 0.5 * (a[(i, j)] - a[(j, i)]))
}

/// `Q_h = ½ [[Q_t − Q_tᵀ, EᵀB], [−BE, B]]` with `B = diag(b)`.
pub fn hybridized_sbp(q_t: &DenseMatrix, e: &DenseMatrix, b: &[f64]) -> DenseMatrix {
    let ns = q_t.rows();
    let nb = b.len();
    let mut qh = DenseMatrix::zeros(ns + nb, ns + nb);
    let s = antisymmetric_part(q_t);
    for j in 0..ns {
        for i in 0..ns {
            qh[(i, j)] = s[(i, j)];
        }
    }
    for r in 0..nb {
        for i in 0..ns {
            let x = 0.5 * e[(r, i)] * b[r];
            qh[(i, ns + r)] = x;
            qh[(ns + r, i)] = -x;
        }
        qh[(ns + r, ns + r)] = 0.5 * b[r];
    }
    qh
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperReductionOptions {
    /// Cubature tolerance; defaults to the basis truncation tolerance.
    pub tol: Option<f64>,
    pub selection: Selection,
    pub test_basis: TestBasis,
    /// `None` disables stabilizing points.
    pub stabilization: Option<StabilizationOptions>,
    pub viscous: bool,
    /// Use every grid point with weight `w₀` instead of a cubature rule.
    pub full_rule: bool,
}

impl Default for HyperReductionOptions {
    fn default() -> Self {
        Self {
            tol: None,
            selection: Selection::MostPositive,
            test_basis: TestBasis::Enriched,
            stabilization: Some(StabilizationOptions::default()),
            viscous: true,
            full_rule: false,
        }
    }
}

/// Smallest cubature tolerance used when the basis captures all energy.
pub const MIN_CUBATURE_TOL: f64 = 1e-12;

/// Offline hyper-reduction output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HyperReduction {
    pub tol: f64,
    pub test_basis: TestBasis,
    /// Greedy volume rule before stabilization.
    pub volume: CubatureRule,
    /// Rule used online (volume plus stabilizing points).
    pub stabilized: CubatureRule,
    pub stabilization: StabilizationReport,
    /// Indices into the boundary entries of the operators.
    pub boundary: Option<CubatureRule>,
    /// Indices into the rows of the difference matrix.
    pub viscous: Option<CubatureRule>,
    pub basis_fingerprint: String,
}

pub fn test_bases(basis: &ReducedBasis, ops: &FomOperators, kind: TestBasis) -> Result<Vec<DenseMatrix>> {
    match kind {
        TestBasis::Enriched => ops.q.iter().map(|q| build_test_basis(&basis.v, q)).collect(),
        TestBasis::Complete => Ok(vec![DenseMatrix::identity(ops.n_points()); ops.dim]),
    }
}

/// Computes every cubature rule the online model needs.
pub fn hyperreduce(
    basis: &ReducedBasis,
    ops: &FomOperators,
    opts: &HyperReductionOptions,
) -> Result<HyperReduction> {
    if basis.n_points() != ops.n_points() {
        return Err(Error::Config(format!(
            "basis has {} points, grid has {}",
            basis.n_points(),
            ops.n_points()
        )));
    }
    let tol = opts.tol.unwrap_or(basis.tol).max(MIN_CUBATURE_TOL);
    let w0 = ops.cell_volume();
    let np = ops.n_points();
    let w_target = vec![w0; np];
    let v_t = test_bases(basis, ops, opts.test_basis)?;
    let vt_refs: Vec<&DenseMatrix> = v_t.iter().collect();
    let (volume, stabilized, report) = if opts.full_rule {
        let r = CubatureRule::full(w_target.clone(), RuleKind::Volume);
        (r.clone(), r, StabilizationReport::default())
    } else {
        let target = target_space(&basis.v, tol)?;
        let volume = empirical_cubature(&target, &w_target, tol, opts.selection)?;
        let (stabilized, report) = match &opts.stabilization {
            Some(s) => stabilizing_points(&vt_refs, &volume, &target, &w_target, tol, opts.selection, s)?,
            None => (volume.clone(), StabilizationReport::default()),
        };
        (volume, stabilized, report)
    };
    let boundary = if ops.periodic() {
        None
    } else if ops.dim == 1 || opts.full_rule {
        let w: Vec<f64> = ops.boundary_points.iter().map(|b| b.weight).collect();
        Some(CubatureRule::full(w, RuleKind::Boundary))
    } else {
        Some(cubature::boundary_weights(
            &basis.v,
            &vt_refs,
            &ops.boundary_points,
            tol,
            opts.selection,
        )?)
    };
    let viscous = if !opts.viscous {
        None
    } else if opts.full_rule {
        Some(CubatureRule::full(vec![w0; ops.d_matrix.rows()], RuleKind::Viscous))
    } else {
        Some(cubature::viscous_points(&ops.d_matrix, &basis.v, w0, tol, opts.selection)?)
    };
    Ok(HyperReduction {
        tol,
        test_basis: opts.test_basis,
        volume,
        stabilized,
        stabilization: report,
        boundary,
        viscous,
        basis_fingerprint: basis.fingerprint(),
    })
}

/// Sampled rows of `D` with the grid points they touch.
#[derive(Clone, Debug)]
pub struct ViscousSampling {
    /// Per sampled row: `(local point index, coefficient)`.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub weights: Vec<f64>,
    pub points: Vec<usize>,
    /// `V` at `points`.
    pub v_adj: DenseMatrix,
}

/// Online operators of the hyper-reduced model.
#[derive(Clone, Debug)]
pub struct RomOperators {
    pub dim: usize,
    pub n_grid: usize,
    pub dx: f64,
    pub cell_volume: f64,
    pub periodic: bool,
    pub vol_indices: Vec<usize>,
    pub vol_weights: Vec<f64>,
    /// `V(𝓘,:)`.
    pub v_vol: DenseMatrix,
    pub boundary: Vec<BoundaryPoint>,
    /// `V` at the boundary entries.
    pub v_bnd: DenseMatrix,
    pub v_t: Vec<DenseMatrix>,
    pub p_t: Vec<DenseMatrix>,
    /// `P_tᵀ(V_tᵀQⁱV_t)P_t`.
    pub q_t: Vec<DenseMatrix>,
    /// Operators applied to the flux matrices: `Q_t` (periodic) or `Q_h`.
    pub q_h: Vec<DenseMatrix>,
    /// `M_N = V(𝓘)ᵀWV(𝓘)`.
    pub mass: DenseMatrix,
    /// `P = M_N⁻¹V(𝓘)ᵀW`.
    pub projection: DenseMatrix,
    pub viscous: Option<ViscousSampling>,
    /// `w₀ VᵀKV`.
    pub vkv: DenseMatrix,
    mass_chol: Cholesky,
    /// `[V(𝓘); V_b]`.
    v_h: DenseMatrix,
    row_abs: Vec<Vec<f64>>,
    chunks: Vec<(usize, usize)>,
    /// Nonzero `(Q_hⁱ[j,k], Q_hⁱ[k,j])` per upper-triangle pair.
    pairs: Vec<Vec<(usize, [f64; 2], [f64; 2])>>,
}

impl RomOperators {
    pub fn build(basis: &ReducedBasis, ops: &FomOperators, hr: &HyperReduction) -> Result<Self> {
        let v = &basis.v;
        let rule = &hr.stabilized;
        let v_vol = v.select_rows(&rule.indices);
        let v_t = test_bases(basis, ops, hr.test_basis)?;
        let mut p_t = Vec::with_capacity(ops.dim);
        let mut q_t = Vec::with_capacity(ops.dim);
        for (a, vt) in v_t.iter().enumerate() {
            let p = projection_matrix(vt, rule)?;
            let q_hat = vt.t_matmul(&ops.q[a].matmul_dense(vt));
            q_t.push(hyper_reduced_diff(&q_hat, &p, ops.periodic()));
            p_t.push(p);
        }
        let boundary: Vec<BoundaryPoint> = match &hr.boundary {
            Some(b) => b
                .indices
                .iter()
                .zip(&b.weights)
                .map(|(&i, &w)| BoundaryPoint {
                    weight: w,
                    ..ops.boundary_points[i]
                })
                .collect(),
            None => Vec::new(),
        };
        let bpts: Vec<usize> = boundary.iter().map(|b| b.point).collect();
        let v_bnd = v.select_rows(&bpts);
        let q_h: Vec<DenseMatrix> = if ops.periodic() {
            q_t.clone()
        } else {
            (0..ops.dim)
                .map(|a| {
                    let e = v_t[a].select_rows(&bpts).matmul(&p_t[a]);
                    let b: Vec<f64> = boundary.iter().map(|bp| bp.normal[a] * bp.weight).collect();
                    hybridized_sbp(&q_t[a], &e, &b)
                })
                .collect()
        };
        let wv = v_vol.scale_rows(&rule.weights);
        let mass = v_vol.t_matmul(&wv);
        let mass_chol = Cholesky::new(&mass)
            .map_err(|e| Error::SingularTestMass(format!("reduced mass matrix: {e}")))?;
        let projection = mass_chol.solve(&wv.transpose());
        let viscous = hr.viscous.as_ref().map(|r| viscous_sampling(&ops.d_matrix, v, r));
        let kv = ops.k_matrix.matmul_dense(v);
        let vkv = v.t_matmul(&kv).scale(ops.cell_volume());
        let v_h = v_vol.vcat(&v_bnd);
        let nh = v_h.rows();
        let row_abs = q_h
            .iter()
            .map(|q| (0..nh).map(|j| (0..nh).map(|k| q[(j, k)].abs()).sum()).collect())
            .collect();
        let pairs = (0..nh)
            .map(|j| {
                ((j + 1)..nh)
                    .filter_map(|k| {
                        let mut a = [0.0; 2];
                        let mut b = [0.0; 2];
                        for (d, q) in q_h.iter().enumerate() {
                            a[d] = q[(j, k)];
                            b[d] = q[(k, j)];
                        }
                        (a != [0.0; 2] || b != [0.0; 2]).then_some((k, a, b))
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            dim: ops.dim,
            n_grid: ops.n_points(),
            dx: ops.dx,
            cell_volume: ops.cell_volume(),
            periodic: ops.periodic(),
            vol_indices: rule.indices.clone(),
            vol_weights: rule.weights.clone(),
            v_vol,
            boundary,
            v_bnd,
            v_t,
            p_t,
            q_t,
            q_h,
            mass,
            projection,
            viscous,
            vkv,
            mass_chol,
            chunks: balanced_chunks(nh),
            v_h,
            row_abs,
            pairs,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.v_vol.cols()
    }

    pub fn n_volume(&self) -> usize {
        self.v_vol.rows()
    }

    pub fn n_eval(&self) -> usize {
        self.v_h.rows()
    }

    /// `Q_hⁱ + Q_hⁱᵀ`.
    pub fn boundary_matrix(&self, axis: usize) -> DenseMatrix {
        let q = &self.q_h[axis];
        q.add(&q.transpose())
    }

    /// Condition numbers of the hyper-reduced test mass matrices.
    pub fn test_mass_conditions(&self) -> Result<Vec<f64>> {
        let rule = CubatureRule {
            indices: self.vol_indices.clone(),
            weights: self.vol_weights.clone(),
            kind: RuleKind::Stabilized,
            residual: 0.0,
            constraint_residual: None,
        };
        self.v_t
            .iter()
            .map(|vt| cubature::test_mass_spectrum(vt, &rule).map(|r| r.0))
            .collect()
    }
}

fn balanced_chunks(nh: usize) -> Vec<(usize, usize)> {
    let total = nh * nh.saturating_sub(1) / 2 + nh;
    let per = total.div_ceil(PAIR_CHUNKS).max(1);
    let mut out = Vec::with_capacity(PAIR_CHUNKS);
    let mut start = 0;
    let mut acc = 0;
    for j in 0..nh {
        acc += nh - j;
        if acc >= per {
            out.push((start, j + 1));
            start = j + 1;
            acc = 0;
        }
    }
    if start < nh {
        out.push((start, nh));
    }
    out
}

fn viscous_sampling(d: &SparseMatrix, v: &DenseMatrix, rule: &CubatureRule) -> ViscousSampling {
    let mut points: Vec<usize> = rule.indices.iter().flat_map(|&r| d.row(r).map(|(c, _)| c)).collect();
    points.sort_unstable();
    points.dedup();
    let local = |p: usize| points.binary_search(&p).expect("point collected above");
    let rows = rule
        .indices
        .iter()
        .map(|&r| d.row(r).map(|(c, x)| (local(c), x)).collect())
        .collect();
    ViscousSampling {
        rows,
        weights: rule.weights.clone(),
        v_adj: v.select_rows(&points),
        points,
    }
}

/// Entropy projection of a coefficient vector.
#[derive(Clone, Debug)]
pub struct Projected {
    /// `V(𝓘)u_N`, point-major.
    pub u_vol: Vec<f64>,
    /// `v_N = P v(V(𝓘)u_N)`, component-major.
    pub v_n: Vec<f64>,
    /// `ṽ` at volume and boundary points, point-major.
    pub v_h: Vec<f64>,
    /// `ũ = u(ṽ)` at volume and boundary points, point-major.
    pub u_h: Vec<f64>,
    /// `ṽ` and `ũ` at the viscous stencil points.
    pub v_adj: Vec<f64>,
    pub u_adj: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RomParts {
    /// `V_hᵀ Σᵢ 2(Q_hⁱ∘Fⁱ)1`.
    pub convective: Vec<f64>,
    /// `V_bᵀ B(f* − f(ũ_b))`, penalty included.
    pub boundary: Vec<f64>,
    pub viscous: Vec<f64>,
    pub v_n: Vec<f64>,
    /// `v_Nᵀ` times the convective term plus the entropy-conservative part
    /// of the boundary term; vanishes semi-discretely.
    pub convective_entropy: f64,
    /// `v_Nᵀ` times the Lax–Friedrichs part of the boundary term.
    pub boundary_entropy: f64,
    /// `v_Nᵀ·viscous`.
    pub dissipation: f64,
    /// Magnitude of the terms cancelling in `convective_entropy`.
    pub scale: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomConfig {
    pub final_time: f64,
    pub cfl: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub viscosity: Viscosity,
    #[serde(default = "default_true")]
    pub wall_penalty: bool,
    #[serde(default)]
    pub initial: InitialProjection,
    #[serde(default)]
    pub fixed_dt: Option<f64>,
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Coefficient trajectory is recorded every this many steps.
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

fn default_true() -> bool {
    true
}

fn default_stride() -> usize {
    1
}

impl RomConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.final_time >= 0.0) || !self.final_time.is_finite() {
            return Err(Error::Config(format!("final_time must be ≥ 0, got {}", self.final_time)));
        }
        if !(self.cfl > 0.0) {
            return Err(Error::Config(format!("cfl must be positive, got {}", self.cfl)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be ≥ 0, got {}", self.epsilon)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            final_time: self.final_time,
            fixed_dt: self.fixed_dt,
            max_steps: self.max_steps,
        }
    }
}

/// Per-step diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub step: usize,
    pub time: f64,
    pub total_entropy: f64,
    pub convective_entropy_term: f64,
    pub viscous_dissipation: f64,
    pub conserved: Vec<f64>,
    pub dt: f64,
    pub boundary_entropy_term: f64,
    pub entropy_scale: f64,
}

#[derive(Clone, Debug)]
pub struct RomRun {
    pub u_n: Vec<f64>,
    pub times: Vec<f64>,
    /// Recorded coefficient vectors, one per entry of `times`.
    pub trajectory: Vec<Vec<f64>>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub steps: usize,
}

pub struct Rom<L: ConservationLaw> {
    pub law: L,
    pub ops: RomOperators,
    pub epsilon: f64,
    pub viscosity: Viscosity,
    pub wall_penalty: bool,
}

impl<L: ConservationLaw> Rom<L> {
    pub fn new(law: L, ops: RomOperators, epsilon: f64, viscosity: Viscosity, wall_penalty: bool) -> Result<Self> {
        if law.dim() != ops.dim {
            return Err(Error::Config(format!(
                "{}-dimensional law with {}-dimensional operators",
                law.dim(),
                ops.dim
            )));
        }
        if epsilon > 0.0 && matches!(viscosity, Viscosity::V1 | Viscosity::V2) && ops.viscous.is_none() {
            return Err(Error::Config("viscosity v1/v2 requires a viscous cubature rule".into()));
        }
        Ok(Self {
            law,
            ops,
            epsilon,
            viscosity,
            wall_penalty,
        })
    }

    pub fn coeff_len(&self) -> usize {
        self.law.n_vars() * self.ops.n_modes()
    }

    fn rows_times(&self, m: &DenseMatrix, coef: &[f64]) -> Vec<f64> {
        // Point-major `m · coef_c` for every component.
        let nv = self.law.n_vars();
        let n = self.ops.n_modes();
        let mut out = vec![0.0; m.rows() * nv];
        for c in 0..nv {
            let y = m.matvec(&coef[c * n..(c + 1) * n]);
            for (p, x) in y.into_iter().enumerate() {
                out[p * nv + c] = x;
            }
        }
        out
    }

    fn invert(&self, v: &[f64], points: impl Fn(usize) -> usize) -> Result<Vec<f64>> {
        let nv = self.law.n_vars();
        let mut u = vec![0.0; v.len()];
        for (p, (vs, us)) in v.chunks(nv).zip(u.chunks_mut(nv)).enumerate() {
            self.law
                .conservative_from_entropy(vs, us)
                .and_then(|_| self.law.validate(us))
                .map_err(|e| e.at_point(points(p)))?;
        }
        Ok(u)
    }

    fn needs_adjacent(&self) -> bool {
        self.epsilon > 0.0 && matches!(self.viscosity, Viscosity::V1 | Viscosity::V2)
    }

    /// `v_N = P v(V(𝓘)u_N)`, `ṽ = V v_N` and `ũ = u(ṽ)` at the evaluation points.
    pub fn entropy_project(&self, u_n: &[f64]) -> Result<Projected> {
        let nv = self.law.n_vars();
        let n = self.ops.n_modes();
        if u_n.len() != nv * n {
            return Err(Error::Config(format!(
                "coefficient vector has {} entries, expected {}",
                u_n.len(),
                nv * n
            )));
        }
        let u_vol = self.rows_times(&self.ops.v_vol, u_n);
        let ns = self.ops.n_volume();
        let mut v_vol = vec![0.0; ns * nv];
        for p in 0..ns {
            let s = &u_vol[p * nv..(p + 1) * nv];
            self.law
                .validate(s)
                .map_err(|e| e.at_point(self.ops.vol_indices[p]))?;
            self.law.entropy_variables(s, &mut v_vol[p * nv..(p + 1) * nv]);
        }
        let mut v_n = vec![0.0; nv * n];
        for c in 0..nv {
            let vc: Vec<f64> = (0..ns).map(|p| v_vol[p * nv + c]).collect();
            v_n[c * n..(c + 1) * n].copy_from_slice(&self.ops.projection.matvec(&vc));
        }
        let v_h = self.rows_times(&self.ops.v_h, &v_n);
        let u_h = self.invert(&v_h, |p| {
            if p < ns {
                self.ops.vol_indices[p]
            } else {
                self.ops.boundary[p - ns].point
            }
        })?;
        let (v_adj, u_adj) = match (&self.ops.viscous, self.needs_adjacent()) {
            (Some(vs), true) => {
                let va = self.rows_times(&vs.v_adj, &v_n);
                let ua = self.invert(&va, |p| vs.points[p])?;
                (va, ua)
            }
            _ => (Vec::new(), Vec::new()),
        };
        Ok(Projected {
            u_vol,
            v_n,
            v_h,
            u_h,
            v_adj,
            u_adj,
        })
    }

    /// `Σᵢ 2(Q_hⁱ∘Fⁱ)1` at the evaluation points, point-major.
    fn flux_differencing(&self, u_h: &[f64]) -> Vec<f64> {
        let nv = self.law.n_vars();
        let nh = self.ops.n_eval();
        let dim = self.ops.dim;
        let partials: Vec<Vec<f64>> = self
            .ops
            .chunks
            .par_iter()
            .map(|&(j0, j1)| {
                let mut acc = vec![0.0; nh * nv];
                let mut f = [0.0; 2 * MAX_VARS];
                let mut fp = [0.0; MAX_VARS];
                for j in j0..j1 {
                    let uj = &u_h[j * nv..(j + 1) * nv];
                    for &(k, qjk, qkj) in &self.ops.pairs[j] {
                        let uk = &u_h[k * nv..(k + 1) * nv];
                        self.law.ec_flux(uj, uk, &mut f);
                        for a in 0..dim {
                            for c in 0..nv {
                                let fv = f[a * nv + c];
                                acc[j * nv + c] += 2.0 * qjk[a] * fv;
                                acc[k * nv + c] += 2.0 * qkj[a] * fv;
                            }
                        }
                    }
                    for (a, q) in self.ops.q_h.iter().enumerate() {
                        let d = q[(j, j)];
                        if d != 0.0 {
                            self.law.flux(uj, a, &mut fp);
                            for c in 0..nv {
                                acc[j * nv + c] += 2.0 * d * fp[c];
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; nh * nv];
        for p in partials {
            for (o, x) in out.iter_mut().zip(p) {
                *o += x;
            }
        }
        out
    }

    /// `mᵀ g_c` for every component of a point-major `g`; component-major.
    fn project_rows(&self, m: &DenseMatrix, g: &[f64]) -> Vec<f64> {
        let nv = self.law.n_vars();
        let np = m.rows();
        (0..nv)
            .flat_map(|c| {
                let gc: Vec<f64> = (0..np).map(|p| g[p * nv + c]).collect();
                m.t_matvec(&gc)
            })
            .collect()
    }

    fn viscous_term(&self, pr: &Projected) -> Result<Vec<f64>> {
        let nv = self.law.n_vars();
        let n = self.ops.n_modes();
        if self.epsilon == 0.0 || self.viscosity == Viscosity::None {
            return Ok(vec![0.0; nv * n]);
        }
        let eps = self.epsilon;
        match self.viscosity {
            Viscosity::None => unreachable!(),
            Viscosity::V3 => {
                let ns = self.ops.n_volume();
                let mut out = vec![0.0; nv * n];
                for c in 0..nv {
                    let uc: Vec<f64> = (0..ns).map(|p| pr.u_h[p * nv + c]).collect();
                    let coef = self.ops.projection.matvec(&uc);
                    let d = self.ops.vkv.matvec(&coef);
                    for (o, x) in out[c * n..(c + 1) * n].iter_mut().zip(d) {
                        *o = eps * x;
                    }
                }
                Ok(out)
            }
            Viscosity::V1 | Viscosity::V2 => {
                let vs = self.ops.viscous.as_ref().expect("checked at construction");
                let mut g = vec![0.0; vs.points.len() * nv];
                let mut jac = [0.0; MAX_VARS * MAX_VARS];
                let mut ubar = [0.0; MAX_VARS];
                for (row, &w) in vs.rows.iter().zip(&vs.weights) {
                    let mut h = [0.0; MAX_VARS];
                    if self.viscosity == Viscosity::V1 {
                        for &(p, x) in row {
                            for c in 0..nv {
                                h[c] += x * pr.u_adj[p * nv + c];
                            }
                        }
                    } else {
                        let mut dv = [0.0; MAX_VARS];
                        ubar[..nv].iter_mut().for_each(|x| *x = 0.0);
                        let share = 1.0 / row.len() as f64;
                        for &(p, x) in row {
                            for c in 0..nv {
                                dv[c] += x * pr.v_adj[p * nv + c];
                                ubar[c] += share * pr.u_adj[p * nv + c];
                            }
                        }
                        self.law
                            .validate(&ubar[..nv])
                            .map_err(|e| e.at_point(vs.points[row[0].0]))?;
                        self.law.jacobian_dudv(&ubar[..nv], &mut jac);
                        for r in 0..nv {
                            h[r] = (0..nv).map(|c| jac[c * nv + r] * dv[c]).sum();
                        }
                    }
                    for &(p, x) in row {
                        for c in 0..nv {
                            g[p * nv + c] += w * x * h[c];
                        }
                    }
                }
                let mut out = self.project_rows(&vs.v_adj, &g);
                out.iter_mut().for_each(|x| *x *= eps);
                Ok(out)
            }
        }
    }

    pub fn rhs_parts(&self, u_n: &[f64]) -> Result<RomParts> {
        let nv = self.law.n_vars();
        let ns = self.ops.n_volume();
        let pr = self.entropy_project(u_n)?;
        let r_h = self.flux_differencing(&pr.u_h);
        let convective = self.project_rows(&self.ops.v_h, &r_h);
        let nb = self.ops.boundary.len();
        let mut g_ec = vec![0.0; nb * nv];
        let mut g_pen = vec![0.0; nb * nv];
        let mut fs = [0.0; MAX_VARS];
        let mut fnrm = [0.0; MAX_VARS];
        let mut up = [0.0; MAX_VARS];
        let mut pen = [0.0; MAX_VARS];
        for (b, bp) in self.ops.boundary.iter().enumerate() {
            let s = &pr.u_h[(ns + b) * nv..(ns + b + 1) * nv];
            self.law
                .wall_flux(s, bp.normal, false, &mut fs)
                .map_err(|e| e.at_point(bp.point))?;
            self.law.normal_flux(s, bp.normal, &mut fnrm);
            if self.wall_penalty {
                self.law.mirror_state(s, bp.normal, &mut up[..nv]);
                self.law
                    .lax_friedrichs_penalty(s, &up[..nv], bp.normal, &mut pen[..nv])
                    .map_err(|e| e.at_point(bp.point))?;
            }
            for c in 0..nv {
                g_ec[b * nv + c] = bp.weight * (fs[c] - fnrm[c]);
                g_pen[b * nv + c] = bp.weight * pen[c];
            }
        }
        let boundary_ec = self.project_rows(&self.ops.v_bnd, &g_ec);
        let penalty = self.project_rows(&self.ops.v_bnd, &g_pen);
        let boundary: Vec<f64> = boundary_ec.iter().zip(&penalty).map(|(a, b)| a + b).collect();
        let viscous = self.viscous_term(&pr)?;
        let dotv = |x: &[f64]| -> f64 { pr.v_n.iter().zip(x).map(|(a, b)| a * b).sum() };
        let mut scale = 0.0;
        let mut f = [0.0; MAX_VARS];
        for (a, ra) in self.ops.row_abs.iter().enumerate() {
            for (j, w) in ra.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                self.law.flux(&pr.u_h[j * nv..(j + 1) * nv], a, &mut f);
                scale += w * (0..nv).map(|c| (pr.v_h[j * nv + c] * f[c]).abs()).sum::<f64>();
            }
        }
        Ok(RomParts {
            convective_entropy: dotv(&convective) + dotv(&boundary_ec),
            boundary_entropy: dotv(&penalty),
            dissipation: dotv(&viscous),
            convective,
            boundary,
            viscous,
            v_n: pr.v_n,
            scale,
        })
    }

    /// `du_N/dt = −M_N⁻¹(convective + boundary + viscous)`.
    pub fn rhs(&self, u_n: &[f64]) -> Result<Vec<f64>> {
        let p = self.rhs_parts(u_n)?;
        Ok(self.solve_mass(&p.convective, &p.boundary, &p.viscous))
    }

    fn solve_mass(&self, a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
        let n = self.ops.n_modes();
        let total: Vec<f64> = (0..a.len()).map(|i| -(a[i] + b[i] + c[i])).collect();
        total.chunks(n).flat_map(|r| self.ops.mass_chol.solve_vec(r)).collect()
    }

    /// `Σ_{i∈𝓘} wᵢ S(V(𝓘)u_N)ᵢ`.
    pub fn total_entropy(&self, u_n: &[f64]) -> Result<f64> {
        let u = self.rows_times(&self.ops.v_vol, u_n);
        let nv = self.law.n_vars();
        let ns = self.ops.n_volume();
        let u = &u;
        let cm: Vec<f64> = (0..nv).flat_map(|c| (0..ns).map(move |p| u[p * nv + c])).collect();
        total_entropy(&self.law, &cm, &self.ops.vol_weights)
    }

    /// `wᵀV(𝓘)u_N,c` per component.
    pub fn conserved(&self, u_n: &[f64]) -> Vec<f64> {
        let n = self.ops.n_modes();
        let vw = self.ops.v_vol.t_matvec(&self.ops.vol_weights);
        u_n.chunks(n)
            .map(|c| c.iter().zip(&vw).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn stable_dt(&self, u_n: &[f64], cfl: f64) -> Result<f64> {
        let pr = self.entropy_project(u_n)?;
        let nv = self.law.n_vars();
        let mut lam = 0.0f64;
        for s in pr.u_h.chunks(nv).chain(pr.u_vol.chunks(nv)) {
            for a in 0..self.law.dim() {
                let mut n = [0.0; 2];
                n[a] = 1.0;
                lam = lam.max(self.law.wavespeed(s, n));
            }
        }
        Ok(cfl * self.ops.dx / lam)
    }

    /// Initial coefficients from a component-major full-grid field.
    pub fn initial_coefficients(&self, basis: &ReducedBasis, u0: &[f64], how: InitialProjection) -> Vec<f64> {
        match how {
            InitialProjection::Dense => basis.project(u0),
            InitialProjection::Hyper => {
                let k = self.ops.n_grid;
                u0.chunks(k)
                    .flat_map(|c| {
                        let ci: Vec<f64> = self.ops.vol_indices.iter().map(|&i| c[i]).collect();
                        self.ops.projection.matvec(&ci)
                    })
                    .collect()
            }
        }
    }

    pub fn diagnostics(&self, step: usize, time: f64, dt: f64, u_n: &[f64]) -> Result<DiagnosticRow> {
        let p = self.rhs_parts(u_n)?;
        Ok(DiagnosticRow {
            step,
            time,
            total_entropy: self.total_entropy(u_n)?,
            convective_entropy_term: p.convective_entropy,
            viscous_dissipation: p.dissipation,
            conserved: self.conserved(u_n),
            dt,
            boundary_entropy_term: p.boundary_entropy,
            entropy_scale: p.scale,
        })
    }

    pub fn integrate(&self, u_n0: &[f64], cfg: &RomConfig) -> Result<RomRun> {
        cfg.validate()?;
        let mut u = u_n0.to_vec();
        let mut diagnostics = Vec::new();
        let mut trajectory = Vec::new();
        let mut times = Vec::new();
        let mut last = usize::MAX;
        let summary = rk::integrate(
            "reduced-order solve",
            &mut u,
            &cfg.step_control(),
            |u, _, out| {
                out.copy_from_slice(&self.rhs(u)?);
                Ok(())
            },
            |u| self.stable_dt(u, cfg.cfl),
            |step, t, dt, u| {
                diagnostics.push(self.diagnostics(step, t, dt, u)?);
                if step % cfg.snapshot_stride == 0 {
                    trajectory.push(u.to_vec());
                    times.push(t);
                    last = step;
                }
                Ok(())
            },
        )?;
        if last != summary.steps {
            trajectory.push(u.clone());
            times.push(summary.time);
        }
        Ok(RomRun {
            u_n: u,
            times,
            trajectory,
            diagnostics,
            steps: summary.steps,
        })
    }
}

/// CSV rendering of the per-step diagnostics.
pub fn diagnostics_csv(rows: &[DiagnosticRow]) -> String {
    let nc = rows.first().map_or(0, |r| r.conserved.len());
    let mut s = String::from("step,time,total_entropy,convective_entropy_term,viscous_dissipation");
    for c in 0..nc {
        s.push_str(&format!(",conserved_{c}"));
    }
    s.push_str(",dt,boundary_entropy_term,entropy_scale\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:e},{:e},{:e},{:e}",
            r.step, r.time, r.total_entropy, r.convective_entropy_term, r.viscous_dissipation
        ));
        for c in &r.conserved {
            s.push_str(&format!(",{c:e}"));
        }
        s.push_str(&format!(",{:e},{:e},{:e}\n", r.dt, r.boundary_entropy_term, r.entropy_scale));
    }
    s
}

/// Galerkin model without hyper-reduction: full-grid operators applied to
/// the entropy-projected state `ũ = u(V Vᵀ v(V u_N))`.
pub struct DenseGalerkin<L: ConservationLaw> {
    pub fom: Fom<L>,
    pub v: DenseMatrix,
    mass_chol: Cholesky,
}

impl<L: ConservationLaw> DenseGalerkin<L> {
    pub fn new(fom: Fom<L>, basis: &ReducedBasis) -> Result<Self> {
        if basis.n_points() != fom.n_points() {
            return Err(Error::Config("basis and grid sizes differ".into()));
        }
        let m = basis.v.t_matmul(&basis.v).scale(fom.ops.cell_volume());
        Ok(Self {
            mass_chol: Cholesky::new(&m)?,
            fom,
            v: basis.v.clone(),
        })
    }

    /// Component-major `ũ` on the full grid.
    pub fn entropy_projected_state(&self, u_n: &[f64]) -> Result<Vec<f64>> {
        let n = self.v.cols();
        let u: Vec<f64> = u_n.chunks(n).flat_map(|c| self.v.matvec(c)).collect();
        let v = self.fom.entropy_variables(&u)?;
        let k = self.fom.n_points();
        let vt: Vec<f64> = v
            .chunks(k)
            .flat_map(|c| self.v.matvec(&self.v.t_matvec(c)))
            .collect();
        let nv = self.fom.law.n_vars();
        let mut ut = vec![0.0; vt.len()];
        let mut vs = [0.0; MAX_VARS];
        let mut us = [0.0; MAX_VARS];
        for p in 0..k {
            for c in 0..nv {
                vs[c] = vt[c * k + p];
            }
            self.fom
                .law
                .conservative_from_entropy(&vs[..nv], &mut us[..nv])
                .and_then(|_| self.fom.law.validate(&us[..nv]))
                .map_err(|e| e.at_point(p))?;
            for c in 0..nv {
                ut[c * k + p] = us[c];
            }
        }
        Ok(ut)
    }

    pub fn rhs(&self, u_n: &[f64]) -> Result<Vec<f64>> {
        let ut = self.entropy_projected_state(u_n)?;
        let parts = self.fom.rhs_parts(&ut)?;
        let k = self.fom.n_points();
        let mut out = Vec::with_capacity(u_n.len());
        for c in 0..self.fom.law.n_vars() {
            let r = c * k..(c + 1) * k;
            let total: Vec<f64> = r
                .map(|i| parts.convective[i] + parts.boundary[i] + parts.viscous[i])
                .collect();
            let rhs: Vec<f64> = self.v.t_matvec(&total).into_iter().map(|x| -x).collect();
            out.extend(self.mass_chol.solve_vec(&rhs));
        }
        Ok(out)
    }

    pub fn integrate(&self, u_n0: &[f64], cfg: &RomConfig) -> Result<RomRun> {
        cfg.validate()?;
        let mut u = u_n0.to_vec();
        let mut trajectory = Vec::new();
        let mut times = Vec::new();
        let mut last = usize::MAX;
        let summary = rk::integrate(
            "dense Galerkin solve",
            &mut u,
            &cfg.step_control(),
            |u, _, out| {
                out.copy_from_slice(&self.rhs(u)?);
                Ok(())
            },
            |u| {
                let ut = self.entropy_projected_state(u)?;
                self.fom.stable_dt(&ut, cfg.cfl)
            },
            |step, t, _, u| {
                if step % cfg.snapshot_stride == 0 {
                    trajectory.push(u.to_vec());
                    times.push(t);
                    last = step;
                }
                Ok(())
            },
        )?;
        if last != summary.steps {
            trajectory.push(u.clone());
            times.push(summary.time);
        }
        Ok(RomRun {
            u_n: u,
            times,
            trajectory,
            diagnostics: Vec::new(),
            steps: summary.steps,
        })
    }
}
