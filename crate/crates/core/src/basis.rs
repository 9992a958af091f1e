//! POD reduced bases built from snapshot sets.

use crate::error::{Error, Result};
use crate::fom::SnapshotSet;
use crate::numerics::{dot, norm2, thin_svd, DenseMatrix};
use crate::physics::{ConservationLaw, MAX_VARS};

/// Threshold on the projection residual of the normalized constant vector.
pub const CONSTANT_MODE_TOL: f64 = 1e-10;

/// One spatial basis shared by every solution component.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedBasis {
    /// `K × N`, orthonormal columns.
    pub v: DenseMatrix,
    /// Full singular spectrum of the snapshot matrix.
    pub singular_values: Vec<f64>,
    /// `sqrt(Σ_{j>N} σ_j² / Σ_j σ_j²)` for the POD truncation.
    pub tol: f64,
    pub enriched: bool,
    pub constant_augmented: bool,
    /// Fingerprint of the snapshot set the basis came from.
    pub source: String,
}

impl ReducedBasis {
    pub fn n_modes(&self) -> usize {
        self.v.cols()
    }

    pub fn n_points(&self) -> usize {
        self.v.rows()
    }

    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for x in self.v.data() {
            h.update(x.to_le_bytes());
        }
        crate::io::fingerprint(&serde_json::json!({
            "v": hex::encode(h.finalize()),
            "source": self.source,
            "shape": [self.v.rows(), self.v.cols()],
            "tol": self.tol,
            "enriched": self.enriched,
            "constant_augmented": self.constant_augmented,
            "spectrum": self.singular_values,
        }))
    }

    /// Coefficients `Vᵀu_c` for every component of a component-major field,
    /// stored component-major.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        let k = self.n_points();
        u.chunks(k).flat_map(|c| self.v.t_matvec(c)).collect()
    }

    /// `V u_N,c` for every component.
    pub fn reconstruct(&self, u_n: &[f64]) -> Vec<f64> {
        let n = self.n_modes();
        u_n.chunks(n).flat_map(|c| self.v.matvec(c)).collect()
    }
}

/// `sqrt(Σ_{j≥n} σ_j² / Σ_j σ_j²)`.
pub fn truncation_tol(sigma: &[f64], n: usize) -> f64 {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0.0;
    }
    let tail: f64 = sigma.iter().skip(n).map(|s| s * s).sum();
    (tail / total).sqrt()
}

/// Snapshot matrix with one column per component per retained snapshot,
/// followed (if `enrich`) by the same columns in entropy variables.
pub fn assemble_snapshots<L: ConservationLaw>(
    snaps: &SnapshotSet,
    stride: usize,
    enrich: bool,
    law: &L,
) -> Result<DenseMatrix> {
    let nv = law.n_vars();
    if snaps.n_components != nv {
        return Err(Error::Config(format!(
            "snapshots carry {} components, the law has {}",
            snaps.n_components, nv
        )));
    }
    if stride == 0 {
        return Err(Error::Config("subsampling stride must be at least 1".into()));
    }
    let k = snaps.points_per_component();
    let selected: Vec<usize> = (0..snaps.n_snapshots()).step_by(stride).collect();
    if selected.is_empty() || k == 0 {
        return Err(Error::Config("no snapshots selected".into()));
    }
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(selected.len() * nv * (1 + enrich as usize));
    for &s in &selected {
        let col = snaps.data.col(s);
        for c in 0..nv {
            cols.push(col[c * k..(c + 1) * k].to_vec());
        }
    }
    if enrich {
        let mut state = [0.0; MAX_VARS];
        let mut v = [0.0; MAX_VARS];
        for &s in &selected {
            let col = snaps.data.col(s);
            let mut ev = vec![vec![0.0; k]; nv];
            for p in 0..k {
                for c in 0..nv {
                    state[c] = col[c * k + p];
                }
                law.validate(&state[..nv]).map_err(|e| e.at_point(p))?;
                law.entropy_variables(&state[..nv], &mut v);
                for c in 0..nv {
                    ev[c][p] = v[c];
                }
            }
            cols.extend(ev);
        }
    }
    Ok(DenseMatrix::from_columns(&cols))
}

/// Leading `n_modes` left singular vectors of the snapshot matrix.
pub fn pod(snapshots: &DenseMatrix, n_modes: usize) -> Result<ReducedBasis> {
    let svd = thin_svd(snapshots)?;
    let rank = svd.numerical_rank(1e-12);
    if n_modes == 0 || n_modes > rank {
        return Err(Error::Config(format!(
            "requested {n_modes} modes but the snapshot matrix has numerical rank {rank}"
        )));
    }
    Ok(ReducedBasis {
        v: svd.left_vectors.leading_cols(n_modes),
        tol: truncation_tol(&svd.singular_values, n_modes),
        singular_values: svd.singular_values,
        enriched: false,
        constant_augmented: false,
        source: String::new(),
    })
}

/// Full pipeline: assemble, POD, and (optionally) add the constant mode.
pub fn build_basis<L: ConservationLaw>(
    snaps: &SnapshotSet,
    law: &L,
    n_modes: usize,
    stride: usize,
    enrich: bool,
    constant_mode: bool,
) -> Result<ReducedBasis> {
    let x = assemble_snapshots(snaps, stride, enrich, law)?;
    let mut b = pod(&x, n_modes)?;
    b.enriched = enrich;
    b.source = snaps.fingerprint();
    if constant_mode {
        b = ensure_constant_mode(&b);
    }
    Ok(b)
}

/// Residual of projecting `1/‖1‖` onto `range(V)`.
pub fn constant_residual(v: &DenseMatrix) -> f64 {
    let k = v.rows();
    let e = vec![1.0 / (k as f64).sqrt(); k];
    let c = v.t_matvec(&e);
    let pe = v.matvec(&c);
    norm2(&e.iter().zip(&pe).map(|(a, b)| a - b).collect::<Vec<_>>())
}

/// Prepends the normalized constant vector when it is not already in the
/// range of the basis, then re-orthonormalizes the remaining columns.
pub fn ensure_constant_mode(basis: &ReducedBasis) -> ReducedBasis {
    if constant_residual(&basis.v) <= CONSTANT_MODE_TOL {
        return basis.clone();
    }
    let k = basis.n_points();
    let mut q: Vec<Vec<f64>> = vec![vec![1.0 / (k as f64).sqrt(); k]];
    for j in 0..basis.n_modes() {
        let mut x = basis.v.col(j).to_vec();
        // Classical Gram–Schmidt, twice.
        for _ in 0..2 {
            for qi in &q {
                let c = dot(qi, &x);
                for (xa, qa) in x.iter_mut().zip(qi) {
                    *xa -= c * qa;
                }
            }
        }
        let nx = norm2(&x);
        if nx > 1e-8 {
            x.iter_mut().for_each(|a| *a /= nx);
            q.push(x);
        }
    }
    let mut out = basis.clone();
    out.v = DenseMatrix::from_columns(&q);
    out.constant_augmented = true;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{Burgers, Euler1d};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn gram_error(v: &DenseMatrix) -> f64 {
        v.t_matmul(v).sub(&DenseMatrix::identity(v.cols())).max_abs()
    }

    fn snapshot_set(data: DenseMatrix, nc: usize) -> SnapshotSet {
        let ns = data.cols();
        SnapshotSet {
            data,
            times: (0..ns).map(|i| i as f64).collect(),
            n_components: nc,
            dim: 1,
            dx: 0.1,
            steps: ns,
            metadata: serde_json::json!({}),
        }
    }

    #[test]
    fn rank_one_has_zero_tol() {
        let x = DenseMatrix::from_fn(10, 4, |i, j| (i as f64 + 1.0) * (j as f64 - 0.5));
        let b = pod(&x, 1).unwrap();
        assert!(b.tol < 1e-14);
        assert!(pod(&x, 2).is_err());
    }

    #[test]
    fn tol_formula_example() {
        let x = DenseMatrix::from_fn(5, 3, |i, j| if i == j { [2.0, 1.0, 1.0][i] } else { 0.0 });
        let b = pod(&x, 1).unwrap();
        assert!((b.tol - (2.0f64 / 6.0).sqrt()).abs() < 1e-15);
        assert!((truncation_tol(&b.singular_values, 1) - b.tol).abs() <= 1e-14);
        assert!(gram_error(&b.v) < 1e-12);
    }

    #[test]
    fn projection_error_bounded_by_next_singular_value() {
        let mut rng = StdRng::seed_from_u64(12);
        let k = 80;
        let x = DenseMatrix::from_fn(k, 30, |i, j| {
            let t = j as f64 / 30.0;
            let xx = i as f64 / k as f64;
            (6.0 * (xx - t)).sin() + 0.3 * (13.0 * xx * t).cos() + 1e-3 * rng.gen_range(-1.0..1.0)
        });
        for n in [1, 3, 6, 10] {
            let b = pod(&x, n).unwrap();
            assert!(gram_error(&b.v) < 1e-12);
            let sig = b.singular_values[n];
            for j in 0..x.cols() {
                let col = x.col(j);
                let p = b.v.matvec(&b.v.t_matvec(col));
                let r = norm2(&col.iter().zip(&p).map(|(a, b)| a - b).collect::<Vec<_>>());
                assert!(r <= sig * 1.01, "n={n}: {r} > {sig}");
            }
        }
    }

    #[test]
    fn assembly_column_counts() {
        let law = Euler1d::default();
        let k = 12;
        let data = DenseMatrix::from_fn(3 * k, 7, |i, j| {
            let p = i % k;
            let w = law.from_primitive(&[1.0 + 0.1 * (p + j) as f64, 0.1, 1.0]);
            w[i / k]
        });
        let s = snapshot_set(data, 3);
        assert_eq!(assemble_snapshots(&s, 7, false, &law).unwrap().cols(), 3);
        let plain = assemble_snapshots(&s, 2, false, &law).unwrap();
        let rich = assemble_snapshots(&s, 2, true, &law).unwrap();
        assert_eq!(plain.cols(), 4 * 3);
        assert_eq!(rich.cols(), 2 * plain.cols());
        assert!(assemble_snapshots(&s, 0, false, &law).is_err());
    }

    #[test]
    fn burgers_enrichment_duplicates_columns() {
        let data = DenseMatrix::from_fn(20, 5, |i, j| ((i * j) as f64 * 0.1).sin());
        let s = snapshot_set(data, 1);
        let plain = assemble_snapshots(&s, 1, false, &Burgers).unwrap();
        let rich = assemble_snapshots(&s, 1, true, &Burgers).unwrap();
        assert_eq!(rich.cols(), 2 * plain.cols());
        let a = pod(&plain, 3).unwrap();
        let b = pod(&rich, 3).unwrap();
        // Same subspace: the projectors agree.
        let pa = a.v.matmul(&a.v.transpose());
        let pb = b.v.matmul(&b.v.transpose());
        assert!(pa.sub(&pb).max_abs() < 1e-10);
    }

    #[test]
    fn constant_mode_handling() {
        let k = 16;
        let with_const = DenseMatrix::from_fn(k, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => ((i * i) as f64 * 0.1).sin(),
        });
        let b = pod(&with_const, 3).unwrap();
        assert!(constant_residual(&b.v) <= CONSTANT_MODE_TOL);
        assert_eq!(ensure_constant_mode(&b), b);

        // Basis orthogonal to 1: alternating and zero-mean modes.
        let ortho = DenseMatrix::from_fn(k, 2, |i, j| {
            if j == 0 {
                if i % 2 == 0 { 0.25 } else { -0.25 }
            } else {
                (i as f64 - 7.5) / 18.439088914585774
            }
        });
        let b = ReducedBasis {
            v: ortho,
            singular_values: vec![1.0, 1.0],
            tol: 0.0,
            enriched: false,
            constant_augmented: false,
            source: String::new(),
        };
        let c = ensure_constant_mode(&b);
        assert_eq!(c.n_modes(), 3);
        assert!(c.constant_augmented);
        assert!(constant_residual(&c.v) <= 1e-12);
        assert!(gram_error(&c.v) < 1e-12);
        assert_eq!(ensure_constant_mode(&c), c);
    }

    #[test]
    fn project_reconstruct_round_trip() {
        let k = 10;
        let x = DenseMatrix::from_fn(k, 4, |i, j| ((i + 1) as f64).powi(j as i32));
        let b = pod(&x, 4).unwrap();
        let u: Vec<f64> = (0..2 * k).map(|i| (i % k) as f64 * 0.5 + (i / k) as f64).collect();
        let back = b.reconstruct(&b.project(&u));
        for (a, r) in u.iter().zip(&back) {
            assert!((a - r).abs() < 1e-10);
        }
    }
}
