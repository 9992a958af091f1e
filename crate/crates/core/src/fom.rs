//! Full-order entropy-conservative finite-volume solver.
//!
//! The semi-discretization is
//!
//! ```text
//! w₀ du/dt + Σᵢ 2(Qⁱ ∘ Fⁱ)1 + Σᵢ Bⁱ(fⁱ* − fⁱ(u)) + ε w₀ K u = 0,
//! ```
//!
//! with `w₀ = Δxᵈ`, `Fⁱ_jk = fⁱ_S(u_j, u_k)` and the wall flux `f*` built
//! from the mirror state. Fields are stored component-major: component `c`
//! of point `p` lives at `c·n_points + p`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::operators::{BoundaryKind, FomOperators};
use crate::physics::{ConservationLaw, MAX_VARS};
use crate::rk::{self, StepControl};

fn default_true() -> bool {
    true
}

fn default_gamma() -> f64 {
    1.4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FomConfig {
    pub dim: usize,
    /// Cells per direction.
    pub cells: usize,
    /// `[lo, hi]`, identical in every direction.
    pub domain: [f64; 2],
    pub cfl: f64,
    pub epsilon: f64,
    pub final_time: f64,
    pub boundary: BoundaryKind,
    pub snapshot_stride: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Lax–Friedrichs penalty on the wall flux.
    #[serde(default = "default_true")]
    pub wall_penalty: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

impl FomConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.cfl > 0.0) {
            return bad(format!("cfl must be positive, got {}", self.cfl));
        }
        if !(self.epsilon >= 0.0) {
            return bad(format!("epsilon must be nonnegative, got {}", self.epsilon));
        }
        if self.cells < 3 {
            return bad(format!("at least 3 cells are required, got {}", self.cells));
        }
        if !(self.domain[1] > self.domain[0]) {
            return bad(format!("empty domain {:?}", self.domain));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be at least 1".into());
        }
        if !(self.final_time >= 0.0) {
            return bad(format!("final_time must be nonnegative, got {}", self.final_time));
        }
        if !(self.gamma > 1.0) {
            return bad(format!("gamma must exceed 1, got {}", self.gamma));
        }
        if !(1..=2).contains(&self.dim) {
            return bad(format!("dim must be 1 or 2, got {}", self.dim));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0) {
                return bad(format!("fixed_dt must be positive, got {dt}"));
            }
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.domain[1] - self.domain[0]) / self.cells as f64
    }

    pub fn operators(&self) -> Result<FomOperators> {
        self.validate()?;
        FomOperators::new(self.dim, self.cells, self.dx(), self.boundary)
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            final_time: self.final_time,
            fixed_dt: self.fixed_dt,
            max_steps: self.max_steps,
        }
    }
}

/// The three residual contributions of one RHS evaluation, before division
/// by the cell volume.
#[derive(Clone, Debug)]
pub struct RhsParts {
    pub convective: Vec<f64>,
    pub boundary: Vec<f64>,
    pub viscous: Vec<f64>,
}

/// Entropy budget `w₀ 1ᵀ dS/dt = −(convective + boundary + viscous)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EntropyBalance {
    /// `vᵀ Σᵢ 2(Qⁱ∘Fⁱ)1`; zero for periodic problems.
    pub convective: f64,
    /// `vᵀ Σᵢ Bⁱ(fⁱ* − fⁱ(u))`.
    pub boundary: f64,
    /// `ε w₀ vᵀ K u`, nonnegative.
    pub viscous: f64,
    /// Magnitude against which the convective term is judged.
    pub scale: f64,
}

/// A pair `(j, k)`, `j < k`, coupled by some `Qⁱ`, with the entries
/// `Qⁱ_jk` and `Qⁱ_kj` for each direction.
#[derive(Clone, Copy, Debug)]
struct Coupling {
    j: usize,
    k: usize,
    q_jk: [f64; 2],
    q_kj: [f64; 2],
}

pub struct Fom<L: ConservationLaw> {
    pub law: L,
    pub ops: FomOperators,
    pub epsilon: f64,
    pub wall_penalty: bool,
    couplings: Vec<Coupling>,
    diagonal: Vec<(usize, [f64; 2])>,
}

impl<L: ConservationLaw> Fom<L> {
    pub fn new(law: L, ops: FomOperators, epsilon: f64, wall_penalty: bool) -> Result<Self> {
        if law.dim() != ops.dim {
            return Err(Error::Config(format!(
                "{}-dimensional law on a {}-dimensional grid",
                law.dim(),
                ops.dim
            )));
        }
        let mut map: std::collections::BTreeMap<(usize, usize), ([f64; 2], [f64; 2])> =
            Default::default();
        let mut diag: std::collections::BTreeMap<usize, [f64; 2]> = Default::default();
        for (axis, q) in ops.q.iter().enumerate() {
            for (i, j, v) in q.triplets() {
                if i == j {
                    diag.entry(i).or_default()[axis] += v;
                } else if i < j {
                    map.entry((i, j)).or_default().0[axis] += v;
                } else {
                    map.entry((j, i)).or_default().1[axis] += v;
                }
            }
        }
        let couplings = map
            .into_iter()
            .map(|((j, k), (q_jk, q_kj))| Coupling { j, k, q_jk, q_kj })
            .collect();
        Ok(Self {
            law,
            ops,
            epsilon,
            wall_penalty,
            couplings,
            diagonal: diag.into_iter().collect(),
        })
    }

    pub fn from_config(law: L, cfg: &FomConfig) -> Result<Self> {
        Self::new(law, cfg.operators()?, cfg.epsilon, cfg.wall_penalty)
    }

    pub fn n_points(&self) -> usize {
        self.ops.n_points()
    }

    pub fn field_len(&self) -> usize {
        self.n_points() * self.law.n_vars()
    }

    /// Copies a component-major field into point-major order, validating
    /// every state.
    pub fn gather(&self, u: &[f64]) -> Result<Vec<f64>> {
        gather_points(&self.law, u, self.n_points())
    }

    /// Convective, boundary and viscous residuals.
    pub fn rhs_parts(&self, u: &[f64]) -> Result<RhsParts> {
        let nv = self.law.n_vars();
        let np = self.n_points();
        let d = self.law.dim();
        let pts = self.gather(u)?;
        let st = |p: usize| &pts[p * nv..(p + 1) * nv];
        let mut conv = vec![0.0; nv * np];
        let mut f = [0.0; 2 * MAX_VARS];
        for c in &self.couplings {
            self.law.ec_flux(st(c.j), st(c.k), &mut f);
            for a in 0..d {
                let (qa, qb) = (2.0 * c.q_jk[a], 2.0 * c.q_kj[a]);
                if qa == 0.0 && qb == 0.0 {
                    continue;
                }
                for comp in 0..nv {
                    let fv = f[a * nv + comp];
                    conv[comp * np + c.j] += qa * fv;
                    conv[comp * np + c.k] += qb * fv;
                }
            }
        }
        let mut fp = [0.0; MAX_VARS];
        for &(p, q) in &self.diagonal {
            for a in 0..d {
                if q[a] != 0.0 {
                    self.law.flux(st(p), a, &mut fp);
                    for comp in 0..nv {
                        conv[comp * np + p] += 2.0 * q[a] * fp[comp];
                    }
                }
            }
        }
        let mut bnd = vec![0.0; nv * np];
        let mut fs = [0.0; MAX_VARS];
        for bp in &self.ops.boundary_points {
            let s = st(bp.point);
            self.law
                .wall_flux(s, bp.normal, self.wall_penalty, &mut fs)
                .map_err(|e| e.at_point(bp.point))?;
            self.law.normal_flux(s, bp.normal, &mut fp);
            for comp in 0..nv {
                bnd[comp * np + bp.point] += bp.weight * (fs[comp] - fp[comp]);
            }
        }
        let mut visc = vec![0.0; nv * np];
        if self.epsilon > 0.0 {
            let s = self.epsilon * self.ops.cell_volume();
            for comp in 0..nv {
                let ku = self.ops.k_matrix.matvec(&u[comp * np..(comp + 1) * np]);
                for (o, x) in visc[comp * np..(comp + 1) * np].iter_mut().zip(ku) {
                    *o = s * x;
                }
            }
        }
        Ok(RhsParts {
            convective: conv,
            boundary: bnd,
            viscous: visc,
        })
    }

    /// `du/dt`.
    pub fn rhs(&self, u: &[f64]) -> Result<Vec<f64>> {
        let parts = self.rhs_parts(u)?;
        let inv = -1.0 / self.ops.cell_volume();
        Ok((0..u.len())
            .map(|i| inv * (parts.convective[i] + parts.boundary[i] + parts.viscous[i]))
            .collect())
    }

    pub fn entropy_variables(&self, u: &[f64]) -> Result<Vec<f64>> {
        let nv = self.law.n_vars();
        let np = self.n_points();
        let pts = self.gather(u)?;
        let mut v = vec![0.0; u.len()];
        let mut vp = [0.0; MAX_VARS];
        for p in 0..np {
            self.law.entropy_variables(&pts[p * nv..(p + 1) * nv], &mut vp);
            for c in 0..nv {
                v[c * np + p] = vp[c];
            }
        }
        Ok(v)
    }

    pub fn entropy_balance(&self, u: &[f64]) -> Result<EntropyBalance> {
        let parts = self.rhs_parts(u)?;
        let v = self.entropy_variables(u)?;
        let dot = |x: &[f64]| -> f64 { v.iter().zip(x).map(|(a, b)| a * b).sum() };
        Ok(EntropyBalance {
            convective: dot(&parts.convective),
            boundary: dot(&parts.boundary),
            viscous: dot(&parts.viscous),
            scale: self.entropy_scale(u, &v)?,
        })
    }

    /// `Σᵢ Σ_p (Σ_q |Qⁱ_pq|) Σ_c |v_pc| |fⁱ_c(u_p)|`.
    fn entropy_scale(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        let nv = self.law.n_vars();
        let np = self.n_points();
        let pts = self.gather(u)?;
        let mut f = [0.0; MAX_VARS];
        let mut total = 0.0;
        for (a, q) in self.ops.q.iter().enumerate() {
            for p in 0..np {
                let w: f64 = q.row(p).map(|(_, x)| x.abs()).sum();
                self.law.flux(&pts[p * nv..(p + 1) * nv], a, &mut f);
                total += w * (0..nv).map(|c| (v[c * np + p] * f[c]).abs()).sum::<f64>();
            }
        }
        Ok(total)
    }

    /// `Σ_p w₀ S(u_p)`.
    pub fn total_entropy(&self, u: &[f64]) -> Result<f64> {
        let w = vec![self.ops.cell_volume(); self.n_points()];
        total_entropy(&self.law, u, &w)
    }

    /// `w₀ Σ_p u_p` per component.
    pub fn conserved_totals(&self, u: &[f64]) -> Vec<f64> {
        let np = self.n_points();
        let w = self.ops.cell_volume();
        u.chunks(np).map(|c| w * c.iter().sum::<f64>()).collect()
    }

    /// CFL-limited step `cfl · Δx / max λ`.
    pub fn stable_dt(&self, u: &[f64], cfl: f64) -> Result<f64> {
        let lam = max_wavespeed(&self.law, u, self.n_points())?;
        Ok(cfl * self.ops.dx / lam)
    }

    /// Integrates from `u0`, recording every `stride`-th step and the final
    /// state.
    pub fn integrate(&self, u0: &[f64], cfg: &FomConfig) -> Result<SnapshotSet> {
        self.gather(u0)?;
        let nrows = u0.len();
        let mut cols: Vec<f64> = Vec::new();
        let mut times = Vec::new();
        let mut last_recorded = usize::MAX;
        let mut u = u0.to_vec();
        let stride = cfg.snapshot_stride;
        let mut last_step = 0;
        let summary = rk::integrate(
            "full-order solve",
            &mut u,
            &cfg.step_control(),
            |u, _, out| {
                out.copy_from_slice(&self.rhs(u)?);
                Ok(())
            },
            |u| self.stable_dt(u, cfg.cfl),
            |step, t, _, u| {
                last_step = step;
                if step % stride == 0 {
                    cols.extend_from_slice(u);
                    times.push(t);
                    last_recorded = step;
                }
                Ok(())
            },
        )?;
        if last_recorded != summary.steps {
            cols.extend_from_slice(&u);
            times.push(summary.time);
        }
        debug_assert_eq!(last_step, summary.steps);
        let ns = times.len();
        Ok(SnapshotSet {
            data: DenseMatrix::from_col_major(nrows, ns, cols)?,
            times,
            n_components: self.law.n_vars(),
            dim: self.ops.dim,
            dx: self.ops.dx,
            steps: summary.steps,
            metadata: serde_json::to_value(cfg)?,
        })
    }
}

/// Recorded full-order states, one column per recorded time.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    pub data: DenseMatrix,
    pub times: Vec<f64>,
    pub n_components: usize,
    pub dim: usize,
    pub dx: f64,
    pub steps: usize,
    /// Echo of the configuration that produced the run.
    pub metadata: serde_json::Value,
}

impl SnapshotSet {
    pub fn points_per_component(&self) -> usize {
        self.data.rows() / self.n_components
    }

    pub fn n_snapshots(&self) -> usize {
        self.data.cols()
    }

    pub fn fingerprint(&self) -> String {
        crate::io::fingerprint(&serde_json::json!({
            "metadata": self.metadata,
            "shape": [self.data.rows(), self.data.cols()],
            "times": self.times,
        }))
    }
}

/// Point-major copy of a component-major field; fails on the first
/// inadmissible point.
pub fn gather_points<L: ConservationLaw>(law: &L, u: &[f64], np: usize) -> Result<Vec<f64>> {
    let nv = law.n_vars();
    if u.len() != nv * np {
        return Err(Error::Config(format!(
            "field has {} values, expected {} components × {} points",
            u.len(),
            nv,
            np
        )));
    }
    let mut pts = vec![0.0; u.len()];
    for p in 0..np {
        for c in 0..nv {
            pts[p * nv + c] = u[c * np + p];
        }
        law.validate(&pts[p * nv..(p + 1) * nv])
            .map_err(|e| e.at_point(p))?;
    }
    Ok(pts)
}

/// `Σ_p w_p S(u_p)` for a component-major field.
pub fn total_entropy<L: ConservationLaw>(law: &L, u: &[f64], weights: &[f64]) -> Result<f64> {
    let nv = law.n_vars();
    let pts = gather_points(law, u, weights.len())?;
    Ok(weights
        .iter()
        .enumerate()
        .map(|(p, w)| w * law.entropy(&pts[p * nv..(p + 1) * nv]))
        .sum())
}

pub fn max_wavespeed<L: ConservationLaw>(law: &L, u: &[f64], np: usize) -> Result<f64> {
    let nv = law.n_vars();
    let pts = gather_points(law, u, np)?;
    let mut lam = 0.0f64;
    for p in 0..np {
        for a in 0..law.dim() {
            let mut n = [0.0; 2];
            n[a] = 1.0;
            lam = lam.max(law.wavespeed(&pts[p * nv..(p + 1) * nv], n));
        }
    }
    Ok(lam)
}

/// Samples an initial condition at the cell centers of the grid.
pub fn sample_field<L: ConservationLaw>(
    law: &L,
    ops: &FomOperators,
    lo: f64,
    init: impl Fn([f64; 2]) -> Vec<f64>,
) -> Result<Vec<f64>> {
    let np = ops.n_points();
    let nv = law.n_vars();
    let mut u = vec![0.0; nv * np];
    for p in 0..np {
        let s = init(ops.coords(lo, p));
        law.validate(&s).map_err(|e| e.at_point(p))?;
        for c in 0..nv {
            u[c * np + p] = s[c];
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{Burgers, Euler1d, Euler2d};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_euler_field(law: &Euler1d, k: usize, rng: &mut StdRng) -> Vec<f64> {
        let mut u = vec![0.0; 3 * k];
        for p in 0..k {
            let s = law.from_primitive(&[
                rng.gen_range(0.5..2.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.5..2.0),
            ]);
            for c in 0..3 {
                u[c * k + p] = s[c];
            }
        }
        u
    }

    /// Brute-force `2(Q∘F)1` over every pair `(i, j)` of a dense `Q`.
    fn dense_flux_differencing<L: ConservationLaw>(
        law: &L,
        q: &[DenseMatrix],
        u: &[f64],
    ) -> Vec<f64> {
        let nv = law.n_vars();
        let np = q[0].rows();
        let pts = gather_points(law, u, np).unwrap();
        let mut out = vec![0.0; u.len()];
        let mut f = [0.0; 8];
        for (a, qa) in q.iter().enumerate() {
            for i in 0..np {
                for j in 0..np {
                    law.ec_flux(&pts[i * nv..(i + 1) * nv], &pts[j * nv..(j + 1) * nv], &mut f);
                    for c in 0..nv {
                        out[c * np + i] += 2.0 * qa[(i, j)] * f[a * nv + c];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn constant_state_is_steady() {
        let law = Euler1d::default();
        let ops = FomOperators::new(1, 16, 0.125, BoundaryKind::Periodic).unwrap();
        let fom = Fom::new(law, ops.clone(), 0.0, true).unwrap();
        let u = sample_field(&law, &ops, -1.0, |_| law.from_primitive(&[1.2, 0.3, 0.8])).unwrap();
        assert!(fom.rhs(&u).unwrap().iter().all(|&x| x == 0.0));
        let law2 = Euler2d::default();
        let ops2 = FomOperators::new(2, 6, 0.3, BoundaryKind::Wall).unwrap();
        let fom2 = Fom::new(law2, ops2.clone(), 1e-2, true).unwrap();
        let u = sample_field(&law2, &ops2, 0.0, |_| law2.from_primitive(&[1.2, 0.0, 0.0, 0.8]))
            .unwrap();
        assert!(fom2.rhs(&u).unwrap().iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn burgers_k4_matches_brute_force() {
        let ops = FomOperators::new(1, 4, 0.5, BoundaryKind::Periodic).unwrap();
        let fom = Fom::new(Burgers, ops.clone(), 0.0, true).unwrap();
        let u = vec![1.0, -2.0, 0.5, 3.0];
        let parts = fom.rhs_parts(&u).unwrap();
        let dense = dense_flux_differencing(&Burgers, &[ops.q[0].to_dense()], &u);
        // Hand value at point 0: F(u0,u1) − F(u0,u3).
        let fs = |a: f64, b: f64| (a * a + a * b + b * b) / 6.0;
        assert!((parts.convective[0] - (fs(1.0, -2.0) - fs(1.0, 3.0))).abs() < 1e-15);
        for (a, b) in parts.convective.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn structured_rhs_matches_dense_for_walls_and_2d() {
        let mut rng = StdRng::seed_from_u64(8);
        let law = Euler1d::default();
        let ops = FomOperators::new(1, 9, 0.2, BoundaryKind::Wall).unwrap();
        let fom = Fom::new(law, ops.clone(), 0.0, true).unwrap();
        let u = random_euler_field(&law, 9, &mut rng);
        let parts = fom.rhs_parts(&u).unwrap();
        let dense = dense_flux_differencing(&law, &[ops.q[0].to_dense()], &u);
        for (a, b) in parts.convective.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-13);
        }

        let law2 = Euler2d::default();
        let k = 5;
        let ops2 = FomOperators::new(2, k, 0.4, BoundaryKind::Wall).unwrap();
        let fom2 = Fom::new(law2, ops2.clone(), 0.0, true).unwrap();
        let u2 = sample_field(&law2, &ops2, 0.0, |x| {
            law2.from_primitive(&[1.0 + 0.3 * x[0], 0.2 * x[1], -0.1, 1.0 + 0.1 * x[0] * x[1]])
        })
        .unwrap();
        let parts = fom2.rhs_parts(&u2).unwrap();
        let q: Vec<DenseMatrix> = ops2.q.iter().map(|q| q.to_dense()).collect();
        let dense = dense_flux_differencing(&law2, &q, &u2);
        for (a, b) in parts.convective.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn periodic_entropy_conservation_and_global_conservation() {
        let mut rng = StdRng::seed_from_u64(9);
        let law = Euler1d::default();
        let k = 64;
        let ops = FomOperators::new(1, k, 2.0 / k as f64, BoundaryKind::Periodic).unwrap();
        let fom = Fom::new(law, ops, 0.0, true).unwrap();
        for _ in 0..20 {
            let u = random_euler_field(&law, k, &mut rng);
            let bal = fom.entropy_balance(&u).unwrap();
            assert!(bal.convective.abs() <= 1e-12 * bal.scale, "{bal:?}");
            let parts = fom.rhs_parts(&u).unwrap();
            for comp in parts.convective.chunks(k) {
                let s: f64 = comp.iter().sum();
                let mag: f64 = comp.iter().map(|x| x.abs()).sum();
                assert!(s.abs() <= 1e-12 * mag.max(1.0));
            }
        }
    }

    #[test]
    fn wall_boundary_entropy_term_is_dissipative() {
        let mut rng = StdRng::seed_from_u64(10);
        let law = Euler1d::default();
        let k = 32;
        let ops = FomOperators::new(1, k, 2.0 / k as f64, BoundaryKind::Wall).unwrap();
        for &pen in &[false, true] {
            let fom = Fom::new(law, ops.clone(), 0.0, pen).unwrap();
            for _ in 0..20 {
                let u = random_euler_field(&law, k, &mut rng);
                let bal = fom.entropy_balance(&u).unwrap();
                // With skew-symmetric volume terms removed, the total
                // production is the wall term ψ_n − vᵀf*, which must not
                // create entropy.
                let total = bal.convective + bal.boundary;
                assert!(-total <= 1e-12 * bal.scale, "{bal:?}");
                if !pen {
                    assert!(total.abs() <= 1e-12 * bal.scale, "{bal:?}");
                }
            }
        }
    }

    #[test]
    fn viscous_dissipation_nonnegative() {
        let mut rng = StdRng::seed_from_u64(11);
        let law = Euler1d::default();
        let k = 40;
        let ops = FomOperators::new(1, k, 0.05, BoundaryKind::Wall).unwrap();
        let fom = Fom::new(law, ops, 1e-2, true).unwrap();
        for _ in 0..50 {
            let u = random_euler_field(&law, k, &mut rng);
            assert!(fom.entropy_balance(&u).unwrap().viscous >= -1e-12);
        }
        let u: Vec<f64> = [1.0; 40].iter().chain(&[0.0; 40]).chain(&[2.5; 40]).copied().collect();
        assert_eq!(fom.entropy_balance(&u).unwrap().viscous, 0.0);
        assert!(fom.total_entropy(&u).unwrap().abs() < 1e-14);
    }

    #[test]
    fn runge_kutta_self_convergence_is_fourth_order() {
        let k = 40;
        let ops = FomOperators::new(1, k, 2.0 / k as f64, BoundaryKind::Periodic).unwrap();
        let fom = Fom::new(Burgers, ops.clone(), 0.0, true).unwrap();
        let u0 = sample_field(&Burgers, &ops, -1.0, |x| {
            vec![1.0 + 1e-4 * (std::f64::consts::PI * x[0]).sin()]
        })
        .unwrap();
        let run = |dt: f64| {
            let cfg = FomConfig {
                dim: 1,
                cells: k,
                domain: [-1.0, 1.0],
                cfl: 1.0,
                epsilon: 0.0,
                final_time: 0.4,
                boundary: BoundaryKind::Periodic,
                snapshot_stride: 1000,
                gamma: 1.4,
                wall_penalty: true,
                fixed_dt: Some(dt),
                max_steps: None,
            };
            let s = fom.integrate(&u0, &cfg).unwrap();
            s.data.col(s.n_snapshots() - 1).to_vec()
        };
        let reference = run(0.4 / 640.0);
        let err = |dt: f64| {
            let u = run(dt);
            u.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(0.4 / 10.0), err(0.4 / 20.0), err(0.4 / 40.0));
        let s1 = (e1 / e2).log2();
        let s2 = (e2 / e3).log2();
        assert!((s1 - 4.0).abs() < 0.2 && (s2 - 4.0).abs() < 0.2, "slopes {s1} {s2}");
    }

    #[test]
    fn zero_final_time_returns_initial_state() {
        let ops = FomOperators::new(1, 8, 0.25, BoundaryKind::Periodic).unwrap();
        let fom = Fom::new(Burgers, ops.clone(), 0.0, true).unwrap();
        let u0 = sample_field(&Burgers, &ops, -1.0, |x| vec![x[0]]).unwrap();
        let cfg = FomConfig {
            dim: 1,
            cells: 8,
            domain: [-1.0, 1.0],
            cfl: 0.5,
            epsilon: 0.0,
            final_time: 0.0,
            boundary: BoundaryKind::Periodic,
            snapshot_stride: 1,
            gamma: 1.4,
            wall_penalty: true,
            fixed_dt: None,
            max_steps: None,
        };
        let s = fom.integrate(&u0, &cfg).unwrap();
        assert_eq!(s.n_snapshots(), 1);
        assert_eq!(s.data.col(0), &u0[..]);
    }

    #[test]
    fn positivity_failure_names_point() {
        let law = Euler1d::default();
        let ops = FomOperators::new(1, 8, 0.25, BoundaryKind::Periodic).unwrap();
        let fom = Fom::new(law, ops, 0.0, true).unwrap();
        let mut u: Vec<f64> = [1.0; 8].iter().chain(&[0.0; 8]).chain(&[2.5; 8]).copied().collect();
        u[5] = -0.1;
        match fom.rhs(&u) {
            Err(Error::Inadmissible { point, quantity, .. }) => {
                assert_eq!(point, 5);
                assert_eq!(quantity, "density");
            }
            other => panic!("{other:?}"),
        }
    }
}
