//! Hyper-reduction: greedy empirical cubature and the point sets derived
//! from it (volume, stabilizing, viscous and boundary points).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    dot, lstsq, nnls, nnls_warm, norm2, orthonormal_range, symmetric_eigen, thin_svd, DenseMatrix,
    SparseMatrix,
};
use crate::operators::BoundaryPoint;

/// Largest tolerated boundary-constraint violation.
pub const BOUNDARY_CONSTRAINT_TOL: f64 = 5e-8;

/// Boundary weights keep growing their support until the constraints hold
/// to this fraction of their scale (or no point is left).
pub const BOUNDARY_CONSTRAINT_GOAL: f64 = 1e-12;

/// Growth gives up after this many points without halving the violation.
const BOUNDARY_STALL_STEPS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Volume,
    Stabilized,
    Viscous,
    Boundary,
}

/// Greedy selection criterion applied to the normalized rows `Ṽ_i` of the
/// target matrix against the current residual direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// `argmax_i Ṽ_i·r/‖r‖`.
    #[default]
    MostPositive,
    /// `argmin_i Ṽ_i·r/‖r‖`.
    Minimum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubatureRule {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub kind: RuleKind,
    /// `‖V_target(𝓘,:)ᵀw − b‖ / ‖b‖` at termination.
    pub residual: f64,
    /// Largest violation of the boundary constraints (boundary rules).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_residual: Option<f64>,
}

impl CubatureRule {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Full-set rule with the given weights.
    pub fn full(weights: Vec<f64>, kind: RuleKind) -> Self {
        Self {
            indices: (0..weights.len()).collect(),
            weights,
            kind,
            residual: 0.0,
            constraint_residual: None,
        }
    }

    /// `V(𝓘,:)ᵀ W V(𝓘,:)`.
    pub fn gram(&self, v: &DenseMatrix) -> DenseMatrix {
        let vi = v.select_rows(&self.indices);
        vi.t_matmul(&vi.scale_rows(&self.weights))
    }
}

/// Columns `V(:,i) ∘ V(:,j)` for `i ≤ j`.
pub fn hadamard_products(v: &DenseMatrix) -> DenseMatrix {
    let n = v.cols();
    let mut cols = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            cols.push(v.col(i).iter().zip(v.col(j)).map(|(a, b)| a * b).collect());
        }
    }
    if cols.is_empty() {
        return DenseMatrix::zeros(v.rows(), 0);
    }
    DenseMatrix::from_columns(&cols)
}

/// `E_i = sqrt(Σ_{j>i} μ_j² / Σ_j μ_j²)` for `i = 0, …, len`.
pub fn energy_residuals(mu: &[f64]) -> Vec<f64> {
    let total: f64 = mu.iter().map(|s| s * s).sum();
    let mut tail = total;
    let mut out = Vec::with_capacity(mu.len() + 1);
    out.push(if total > 0.0 { 1.0 } else { 0.0 });
    for s in mu {
        tail -= s * s;
        out.push(if total > 0.0 { (tail.max(0.0) / total).sqrt() } else { 0.0 });
    }
    out
}

/// Dimensionally reduced span of the pairwise products of the columns of
/// `v`: the `k` leading left singular vectors with `k` the smallest index
/// such that `E_k ≤ tol`.
pub fn target_space(v: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    let prods = hadamard_products(v);
    if prods.cols() == 0 {
        return Ok(prods);
    }
    let svd = thin_svd(&prods)?;
    let e = energy_residuals(&svd.singular_values);
    let k = (1..e.len()).find(|&k| e[k] <= tol).unwrap_or(e.len() - 1);
    Ok(svd.left_vectors.leading_cols(k))
}

fn select(scores: &[f64], taken: &[bool], valid: &[bool], sel: Selection) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in 0..scores.len() {
        if taken[i] || !valid[i] {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let better = match sel {
                    Selection::MostPositive => scores[i] > scores[b],
                    Selection::Minimum => scores[i] < scores[b],
                };
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// Greedy empirical cubature. Returns the rule and the relative residual
/// after every iteration.
pub fn empirical_cubature_traced(
    v_target: &DenseMatrix,
    w_target: &[f64],
    tol: f64,
    sel: Selection,
) -> Result<(CubatureRule, Vec<f64>)> {
    let m = v_target.rows();
    if w_target.len() != m {
        return Err(Error::Config(format!(
            "{} target weights for {m} points",
            w_target.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("cubature tolerance must be positive, got {tol}")));
    }
    let b = v_target.t_matvec(w_target);
    let bn = norm2(&b);
    let mut indices: Vec<usize> = Vec::new();
    let mut w: Vec<f64> = Vec::new();
    let mut history = Vec::new();
    if bn == 0.0 {
        return Ok((empty_rule(RuleKind::Volume), history));
    }
    let row_norms: Vec<f64> = (0..m)
        .map(|i| (0..v_target.cols()).map(|j| v_target[(i, j)].powi(2)).sum::<f64>().sqrt())
        .collect();
    let valid: Vec<bool> = row_norms.iter().map(|&n| n > 0.0).collect();
    let mut taken = vec![false; m];
    let mut r = b.clone();
    let mut rel = 1.0;
    while rel > tol {
        let rn = norm2(&r);
        let proj = v_target.matvec(&r);
        let scores: Vec<f64> = proj
            .iter()
            .zip(&row_norms)
            .map(|(p, n)| if *n > 0.0 { p / (n * rn) } else { 0.0 })
            .collect();
        let Some(i) = select(&scores, &taken, &valid, sel) else {
            return Err(Error::Cubature(format!(
                "empirical cubature exhausted all {m} candidate points with relative residual {rel:.3e} > {tol:.3e}"
            )));
        };
        taken[i] = true;
        indices.push(i);
        let a = v_target.select_rows(&indices).transpose();
        let prev: Vec<f64> = w.iter().copied().chain([0.0]).collect();
        w = lstsq(&a, &b)?;
        if w.iter().any(|&x| x <= 0.0) {
            w = match nnls_warm(&a, &b, &prev) {
                Ok(x) => x,
                Err(crate::numerics::NumericsError::NnlsNoConvergence { best, .. }) => best,
                Err(e) => return Err(e.into()),
            };
        }
        let aw = a.matvec(&w);
        r = b.iter().zip(&aw).map(|(x, y)| x - y).collect();
        rel = norm2(&r) / bn;
        history.push(rel);
    }
    let (indices, weights): (Vec<usize>, Vec<f64>) =
        indices.into_iter().zip(w).filter(|&(_, x)| x > 0.0).unzip();
    Ok((
        CubatureRule {
            indices,
            weights,
            kind: RuleKind::Volume,
            residual: rel,
            constraint_residual: None,
        },
        history,
    ))
}

/// Greedy empirical cubature: points `𝓘` and weights `w ≥ 0` with
/// `‖V_target(𝓘,:)ᵀw − V_targetᵀw_target‖ ≤ tol · ‖V_targetᵀw_target‖`.
pub fn empirical_cubature(
    v_target: &DenseMatrix,
    w_target: &[f64],
    tol: f64,
    sel: Selection,
) -> Result<CubatureRule> {
    empirical_cubature_traced(v_target, w_target, tol, sel).map(|r| r.0)
}

fn empty_rule(kind: RuleKind) -> CubatureRule {
    CubatureRule {
        indices: Vec::new(),
        weights: Vec::new(),
        kind,
        residual: 0.0,
        constraint_residual: None,
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizationOptions {
    pub cond_threshold: f64,
    pub alpha_z: f64,
    pub max_rounds: usize,
    /// Eigenvalues below `small_ratio · λ_max` count as small.
    pub small_ratio: f64,
    pub max_vectors: usize,
}

impl Default for StabilizationOptions {
    fn default() -> Self {
        Self {
            cond_threshold: 1e6,
            alpha_z: 1e-2,
            max_rounds: 2,
            small_ratio: 1e-10,
            max_vectors: 10,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StabilizationReport {
    /// Condition numbers per direction before stabilization.
    pub cond_before: Vec<f64>,
    pub cond_after: Vec<f64>,
    pub rounds: usize,
    pub added_points: usize,
    pub converged: bool,
}

/// Condition number of `V_t(𝓘,:)ᵀ W V_t(𝓘,:)`, with eigen-pairs.
pub fn test_mass_spectrum(v_t: &DenseMatrix, rule: &CubatureRule) -> Result<(f64, Vec<f64>, DenseMatrix)> {
    let m = rule.gram(v_t);
    let (vals, vecs) = symmetric_eigen(&m)?;
    let lmax = vals.last().copied().unwrap_or(0.0);
    let lmin = vals.first().copied().unwrap_or(0.0);
    let cond = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    Ok((cond, vals, vecs))
}

/// Adds stabilizing points until every test mass matrix has condition
/// number at most `cond_threshold`, re-solving all weights by NNLS on the
/// stacked mass/stabilization system.
pub fn stabilizing_points(
    v_t: &[&DenseMatrix],
    rule: &CubatureRule,
    v_target: &DenseMatrix,
    w_target: &[f64],
    tol: f64,
    sel: Selection,
    opts: &StabilizationOptions,
) -> Result<(CubatureRule, StabilizationReport)> {
    let mut report = StabilizationReport::default();
    let mut current = rule.clone();
    let b = v_target.t_matvec(w_target);
    for round in 0..=opts.max_rounds {
        let mut z_cols: Vec<Vec<f64>> = Vec::new();
        let mut conds = Vec::with_capacity(v_t.len());
        for vt in v_t {
            let (cond, vals, vecs) = test_mass_spectrum(vt, &current)?;
            conds.push(cond);
            if cond <= opts.cond_threshold {
                continue;
            }
            let lmax = vals.last().copied().unwrap_or(0.0).max(0.0);
            let mut small: Vec<usize> = (0..vals.len())
                .filter(|&j| vals[j] < opts.small_ratio * lmax)
                .collect();
            if small.is_empty() {
                small = (0..vals.len())
                    .filter(|&j| vals[j] < lmax / opts.cond_threshold)
                    .collect();
            }
            small.truncate(opts.max_vectors);
            for j in small {
                z_cols.push(vt.matvec(vecs.col(j)));
            }
        }
        if round == 0 {
            report.cond_before = conds.clone();
        }
        report.cond_after = conds;
        if z_cols.is_empty() {
            report.converged = true;
            break;
        }
        if round == opts.max_rounds {
            log::warn!(
                "test mass matrix still ill-conditioned after {} stabilization rounds (cond {:?})",
                opts.max_rounds,
                report.cond_after
            );
            break;
        }
        report.rounds += 1;
        let z = DenseMatrix::from_columns(&z_cols);
        let z_target = hadamard_products(&z);
        let d = z_target.t_matvec(w_target);
        let z_rule = empirical_cubature(&z_target, w_target, tol, sel)?;
        let mut merged = current.indices.clone();
        for &i in &z_rule.indices {
            if !merged.contains(&i) {
                merged.push(i);
                report.added_points += 1;
            }
        }
        let sa = opts.alpha_z.sqrt();
        let a = v_target
            .select_rows(&merged)
            .transpose()
            .vcat(&z_target.select_rows(&merged).transpose().scale(sa));
        let rhs: Vec<f64> = b.iter().copied().chain(d.iter().map(|x| sa * x)).collect();
        let w = match nnls(&a, &rhs) {
            Ok(x) => x,
            Err(crate::numerics::NumericsError::NnlsNoConvergence { best, .. }) => best,
            Err(e) => return Err(e.into()),
        };
        let (indices, weights): (Vec<usize>, Vec<f64>) =
            merged.into_iter().zip(w).filter(|&(_, x)| x > 0.0).unzip();
        let vi = v_target.select_rows(&indices);
        let res = vi.t_matvec(&weights);
        let rel = norm2(&b.iter().zip(&res).map(|(x, y)| x - y).collect::<Vec<_>>())
            / norm2(&b).max(f64::MIN_POSITIVE);
        current = CubatureRule {
            indices,
            weights,
            kind: RuleKind::Stabilized,
            residual: rel,
            constraint_residual: None,
        };
    }
    Ok((current, report))
}

/// Orthonormal basis of `range(D V)`.
pub fn difference_basis(d: &SparseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    let dv = d.matmul_dense(v);
    if dv.max_abs() == 0.0 {
        return Ok(DenseMatrix::zeros(d.rows(), 0));
    }
    Ok(orthonormal_range(&dv, 1e-10)?)
}

/// Interfaces (rows of `D`) and weights approximating `w₀ V_DᵀV_D`.
pub fn viscous_points(
    d: &SparseMatrix,
    v: &DenseMatrix,
    cell_volume: f64,
    tol: f64,
    sel: Selection,
) -> Result<CubatureRule> {
    let vd = difference_basis(d, v)?;
    if vd.cols() == 0 {
        return Ok(empty_rule(RuleKind::Viscous));
    }
    let target = target_space(&vd, tol)?;
    let mut rule = empirical_cubature(&target, &vec![cell_volume; d.rows()], tol, sel)?;
    rule.kind = RuleKind::Viscous;
    Ok(rule)
}

/// `(C, c)` with `C w = c` encoding `V_btⁱ(:, ·)ᵀ diag(nⁱ) w = V_tⁱᵀ Bⁱ 1`
/// for every direction, over the candidate boundary entries.
pub fn boundary_constraints(v_t: &[&DenseMatrix], entries: &[BoundaryPoint]) -> (DenseMatrix, Vec<f64>) {
    let nb = entries.len();
    let rows: usize = v_t.iter().map(|m| m.cols()).sum();
    let mut c = DenseMatrix::zeros(rows, nb);
    let mut off = 0;
    for (axis, vt) in v_t.iter().enumerate() {
        for (j, e) in entries.iter().enumerate() {
            for m in 0..vt.cols() {
                c[(off + m, j)] = e.normal[axis] * vt[(e.point, m)];
            }
        }
        off += vt.cols();
    }
    let full: Vec<f64> = entries.iter().map(|e| e.weight).collect();
    let rhs = c.matvec(&full);
    (c, rhs)
}

/// Boundary entries and weights approximating the boundary Gram matrix of
/// `V` while satisfying the discrete divergence-theorem constraints to
/// [`BOUNDARY_CONSTRAINT_TOL`].
///
/// Equality constraints are imposed by penalty continuation on a stacked
/// NNLS problem; when the penalty saturates, the entry whose constraint
/// column best matches the residual is added.
pub fn boundary_weights(
    v: &DenseMatrix,
    v_t: &[&DenseMatrix],
    entries: &[BoundaryPoint],
    tol: f64,
    sel: Selection,
) -> Result<CubatureRule> {
    let nb = entries.len();
    if nb == 0 {
        return Ok(empty_rule(RuleKind::Boundary));
    }
    let w_full: Vec<f64> = entries.iter().map(|e| e.weight).collect();
    let rows: Vec<usize> = entries.iter().map(|e| e.point).collect();
    let vb = v.select_rows(&rows);
    let target = target_space(&vb, tol)?;
    let initial = empirical_cubature(&target, &w_full, tol, sel)?;
    let b = target.t_matvec(&w_full);
    let bn = norm2(&b).max(f64::MIN_POSITIVE);
    let (c, cr) = boundary_constraints(v_t, entries);
    let mut active = initial.indices.clone();
    // Column norms of the constraint block for the growth step.
    let cnorm: Vec<f64> = (0..nb).map(|j| norm2(c.col(j))).collect();
    let scale = target.max_abs().max(1e-300) / c.max_abs().max(1e-300);
    let wmax = w_full.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let goal = BOUNDARY_CONSTRAINT_GOAL * cr.iter().fold(c.max_abs() * wmax, |m, x| m.max(x.abs()));
    let finish = |idx: Vec<usize>, w: Vec<f64>, cv: f64| -> CubatureRule {
        let (indices, weights): (Vec<usize>, Vec<f64>) = idx.into_iter().zip(w).filter(|&(_, x)| x > 0.0).unzip();
        let gw = target.select_rows(&indices).t_matvec(&weights);
        let res = norm2(&b.iter().zip(&gw).map(|(x, y)| x - y).collect::<Vec<_>>()) / bn;
        CubatureRule {
            indices,
            weights,
            kind: RuleKind::Boundary,
            residual: res,
            constraint_residual: Some(cv),
        }
    };
    let mut feasible: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    let mut stalled = 0;
    loop {
        let mut alpha: f64 = 1.0;
        let mut best: (Vec<f64>, f64, Vec<f64>) = (Vec::new(), f64::INFINITY, Vec::new());
        while alpha <= 1e14 {
            let sa = alpha.sqrt() * scale;
            let a = target
                .select_rows(&active)
                .transpose()
                .vcat(&c.select_cols(&active).scale(sa));
            let rhs: Vec<f64> = b.iter().copied().chain(cr.iter().map(|x| sa * x)).collect();
            let w = match nnls(&a, &rhs) {
                Ok(x) => x,
                Err(crate::numerics::NumericsError::NnlsNoConvergence { best, .. }) => best,
                Err(e) => return Err(e.into()),
            };
            let (w, v_max, r) = polish(&c, &cr, &active, w)?;
            if v_max < best.1 {
                best = (w, v_max, r);
            }
            if best.1 <= goal {
                break;
            }
            alpha *= 10.0;
        }
        let (w, v_max, r) = best;
        if v_max <= goal {
            return Ok(finish(active, w, v_max));
        }
        if v_max <= BOUNDARY_CONSTRAINT_TOL && feasible.as_ref().is_none_or(|f| v_max < f.2) {
            if feasible.as_ref().is_none_or(|f| v_max < 0.5 * f.2) {
                stalled = 0;
            }
            feasible = Some((active.clone(), w, v_max));
        } else if feasible.is_some() {
            stalled += 1;
        }
        if stalled >= BOUNDARY_STALL_STEPS {
            let (idx, w, cv) = feasible.expect("stall counting starts once feasible");
            return Ok(finish(idx, w, cv));
        }
        let candidate = (0..nb)
            .filter(|j| !active.contains(j) && cnorm[*j] > 0.0)
            .map(|j| (j, dot(c.col(j), &r) / cnorm[j]))
            .fold(None::<(usize, f64)>, |best, (j, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((j, s)),
            });
        match candidate {
            Some((j, _)) => active.push(j),
            None => {
                return match feasible {
                    Some((idx, w, cv)) => Ok(finish(idx, w, cv)),
                    None => Err(Error::Cubature(format!(
                        "boundary constraints infeasible: residual {v_max:.3e} with all {nb} boundary points"
                    ))),
                }
            }
        }
    }
}

/// Least-squares correction of `w` on its positive support while that
/// lowers the constraint violation and keeps the weights positive.
fn polish(c: &DenseMatrix, cr: &[f64], active: &[usize], mut w: Vec<f64>) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let viol = |w: &[f64]| -> (f64, Vec<f64>) {
        let cw = c.select_cols(active).matvec(w);
        let r: Vec<f64> = cr.iter().zip(&cw).map(|(a, b)| a - b).collect();
        (r.iter().fold(0.0f64, |m, x| m.max(x.abs())), r)
    };
    let (mut cv, mut r) = viol(&w);
    let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] > 0.0).collect();
    if support.is_empty() {
        return Ok((w, cv, r));
    }
    let cols: Vec<usize> = support.iter().map(|&j| active[j]).collect();
    let cs = c.select_cols(&cols);
    for _ in 0..3 {
        let d = lstsq(&cs, &r)?;
        let mut trial = w.clone();
        for (&j, dj) in support.iter().zip(&d) {
            trial[j] += dj;
        }
        if support.iter().any(|&j| trial[j] <= 0.0) {
            break;
        }
        let (tv, tr) = viol(&trial);
        if tv >= cv {
            break;
        }
        (w, cv, r) = (trial, tv, tr);
    }
    Ok((w, cv, r))
}
