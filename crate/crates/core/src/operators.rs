//! Full-order difference, boundary and diffusion operators on uniform grids.
//!
//! The public constructors return dense matrices for inspection and testing;
//! [`FomOperators`] keeps the same operators in sparse form, which is what
//! the solvers apply.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, SparseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Periodic,
    Wall,
}

/// A grid point on the domain boundary with its outward unit normal and
/// surface quadrature weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub point: usize,
    pub normal: [f64; 2],
    pub weight: f64,
}

fn check_cells(k: usize, min: usize) -> Result<()> {
    if k < min {
        return Err(Error::Config(format!(
            "at least {min} cells are required, got {k}"
        )));
    }
    Ok(())
}

fn periodic_q_sparse(k: usize) -> SparseMatrix {
    let mut t = Vec::with_capacity(2 * k);
    for i in 0..k {
        t.push((i, (i + 1) % k, 0.5));
        t.push((i, (i + k - 1) % k, -0.5));
    }
    SparseMatrix::from_triplets(k, k, t)
}

fn sbp_q_sparse(k: usize) -> SparseMatrix {
    let mut t = Vec::with_capacity(2 * k);
    t.push((0, 0, -0.5));
    t.push((k - 1, k - 1, 0.5));
    for i in 0..k - 1 {
        t.push((i, i + 1, 0.5));
        t.push((i + 1, i, -0.5));
    }
    SparseMatrix::from_triplets(k, k, t)
}

/// Forward differences across each interface; rows are `(left, right)` pairs.
fn difference_sparse(k: usize, dx: f64, interfaces: &[(usize, usize)]) -> SparseMatrix {
    let mut t = Vec::with_capacity(2 * interfaces.len());
    for (r, &(a, b)) in interfaces.iter().enumerate() {
        t.push((r, a, -1.0 / dx));
        t.push((r, b, 1.0 / dx));
    }
    SparseMatrix::from_triplets(interfaces.len(), k, t)
}

fn interfaces_1d(k: usize, periodic: bool) -> Vec<(usize, usize)> {
    if periodic {
        (0..k).map(|i| (i, (i + 1) % k)).collect()
    } else {
        (0..k - 1).map(|i| (i, i + 1)).collect()
    }
}

/// Periodic central difference matrix `½(δ₊ − δ₋)` with wraparound.
pub fn periodic_diff_matrix(k: usize) -> Result<DenseMatrix> {
    check_cells(k, 3)?;
    Ok(periodic_q_sparse(k).to_dense())
}

/// Central difference matrix closed with first-order boundary rows, together
/// with `B = diag(−1, 0, …, 0, 1)` so that `Q + Qᵀ = B`.
pub fn sbp_diff_matrix(k: usize) -> Result<(DenseMatrix, DenseMatrix)> {
    check_cells(k, 3)?;
    let mut b = vec![0.0; k];
    b[0] = -1.0;
    b[k - 1] = 1.0;
    Ok((sbp_q_sparse(k).to_dense(), DenseMatrix::from_diagonal(&b)))
}

/// Laplacian `K` with Neumann-type ends and its factor `D`, `K = DᵀD`.
pub fn diffusion_matrices(k: usize, dx: f64) -> Result<(DenseMatrix, DenseMatrix)> {
    check_cells(k, 2)?;
    if !(dx > 0.0) {
        return Err(Error::Config(format!("grid spacing must be positive, got {dx}")));
    }
    let d = difference_sparse(k, dx, &interfaces_1d(k, false));
    let dd = d.to_dense();
    Ok((dd.t_matmul(&dd), dd))
}

/// Axis 1: `Q ⊗ (dx I)`; axis 2: `(dx I) ⊗ Q`.
pub fn kron_extend_2d(q1d: &DenseMatrix, dx: f64, axis: usize) -> Result<DenseMatrix> {
    if !q1d.is_square() {
        return Err(Error::Config("kron_extend_2d needs a square matrix".into()));
    }
    let id = DenseMatrix::identity(q1d.rows()).scale(dx);
    match axis {
        1 => Ok(q1d.kron(&id)),
        2 => Ok(id.kron(q1d)),
        _ => Err(Error::Config(format!("axis must be 1 or 2, got {axis}"))),
    }
}

/// Grid operators for a uniform 1D or 2D tensor grid. In 2D the point
/// index is `ix·k + iy`.
#[derive(Clone, Debug)]
pub struct FomOperators {
    pub dim: usize,
    pub k: usize,
    pub dx: f64,
    pub boundary: BoundaryKind,
    /// `Qⁱ` per direction.
    pub q: Vec<SparseMatrix>,
    pub k_matrix: SparseMatrix,
    pub d_matrix: SparseMatrix,
    /// `(left, right)` grid points of each row of `D`.
    pub interfaces: Vec<(usize, usize)>,
    pub boundary_points: Vec<BoundaryPoint>,
}

impl FomOperators {
    pub fn new(dim: usize, k: usize, dx: f64, boundary: BoundaryKind) -> Result<Self> {
        check_cells(k, 3)?;
        if !(dx > 0.0) {
            return Err(Error::Config(format!("grid spacing must be positive, got {dx}")));
        }
        let periodic = boundary == BoundaryKind::Periodic;
        let q1 = if periodic { periodic_q_sparse(k) } else { sbp_q_sparse(k) };
        let if1 = interfaces_1d(k, periodic);
        match dim {
            1 => {
                let d = difference_sparse(k, dx, &if1);
                let kk = squared(&d);
                let boundary_points = if periodic {
                    Vec::new()
                } else {
                    vec![
                        BoundaryPoint { point: 0, normal: [-1.0, 0.0], weight: 1.0 },
                        BoundaryPoint { point: k - 1, normal: [1.0, 0.0], weight: 1.0 },
                    ]
                };
                Ok(Self {
                    dim,
                    k,
                    dx,
                    boundary,
                    q: vec![q1],
                    k_matrix: kk,
                    d_matrix: d,
                    interfaces: if1,
                    boundary_points,
                })
            }
            2 => {
                let id = SparseMatrix::identity(k);
                let q = vec![q1.kron(&id.scale(dx)), id.scale(dx).kron(&q1)];
                let mut interfaces = Vec::with_capacity(2 * if1.len() * k);
                for &(a, b) in &if1 {
                    for iy in 0..k {
                        interfaces.push((a * k + iy, b * k + iy));
                    }
                }
                for ix in 0..k {
                    for &(a, b) in &if1 {
                        interfaces.push((ix * k + a, ix * k + b));
                    }
                }
                let d = difference_sparse(k * k, dx, &interfaces);
                let kk = squared(&d);
                let mut boundary_points = Vec::new();
                if !periodic {
                    let faces: [([f64; 2], Box<dyn Fn(usize) -> usize>); 4] = [
                        ([-1.0, 0.0], Box::new(|j| j)),
                        ([1.0, 0.0], Box::new(move |j| (k - 1) * k + j)),
                        ([0.0, -1.0], Box::new(move |j| j * k)),
                        ([0.0, 1.0], Box::new(move |j| j * k + k - 1)),
                    ];
                    for (normal, idx) in faces.iter() {
                        for j in 0..k {
                            boundary_points.push(BoundaryPoint {
                                point: idx(j),
                                normal: *normal,
                                weight: dx,
                            });
                        }
                    }
                }
                Ok(Self {
                    dim,
                    k,
                    dx,
                    boundary,
                    q,
                    k_matrix: kk,
                    d_matrix: d,
                    interfaces,
                    boundary_points,
                })
            }
            _ => Err(Error::Config(format!("dimension must be 1 or 2, got {dim}"))),
        }
    }

    pub fn n_points(&self) -> usize {
        self.k.pow(self.dim as u32)
    }

    pub fn periodic(&self) -> bool {
        self.boundary == BoundaryKind::Periodic
    }

    /// Volume weight of one grid point, `dxᵈ`.
    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.dim as i32)
    }

    /// Diagonal of `Bⁱ = Σ_b nⁱ w_b e_b e_bᵀ`, which equals `Qⁱ + Qⁱᵀ`.
    pub fn b_diagonal(&self, axis: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.n_points()];
        for bp in &self.boundary_points {
            b[bp.point] += bp.normal[axis] * bp.weight;
        }
        b
    }

    /// Grid coordinates of a point (cell centers on `[lo, lo + k·dx]`).
    pub fn coords(&self, lo: f64, p: usize) -> [f64; 2] {
        let c = |i: usize| lo + (i as f64 + 0.5) * self.dx;
        if self.dim == 1 {
            [c(p), 0.0]
        } else {
            [c(p / self.k), c(p % self.k)]
        }
    }
}

fn squared(d: &SparseMatrix) -> SparseMatrix {
    let n = d.cols();
    let dt = d.transpose();
    let mut t = Vec::new();
    for i in 0..n {
        for (r, a) in dt.row(i) {
            for (j, b) in d.row(r) {
                t.push((i, j, a * b));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::symmetric_eigen;

    fn ones(n: usize) -> Vec<f64> {
        vec![1.0; n]
    }

    #[test]
    fn periodic_stencil_k3() {
        let q = periodic_diff_matrix(3).unwrap();
        let expect = DenseMatrix::from_rows(&[
            &[0.0, 0.5, -0.5],
            &[-0.5, 0.0, 0.5],
            &[0.5, -0.5, 0.0],
        ]);
        assert_eq!(q, expect);
        assert!(periodic_diff_matrix(2).is_err());
    }

    #[test]
    fn periodic_skew_and_row_sums_exact() {
        for k in 3..40 {
            let q = periodic_diff_matrix(k).unwrap();
            assert_eq!(q.add(&q.transpose()).max_abs(), 0.0);
            assert!(q.matvec(&ones(k)).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn sbp_stencil_k3() {
        let (q, b) = sbp_diff_matrix(3).unwrap();
        let expect = DenseMatrix::from_rows(&[
            &[-0.5, 0.5, 0.0],
            &[-0.5, 0.0, 0.5],
            &[0.0, -0.5, 0.5],
        ]);
        assert_eq!(q, expect);
        assert_eq!(b, DenseMatrix::from_diagonal(&[-1.0, 0.0, 1.0]));
    }

    #[test]
    fn sbp_property_exact() {
        for k in 3..40 {
            let (q, b) = sbp_diff_matrix(k).unwrap();
            assert_eq!(q.add(&q.transpose()), b);
            assert!(q.matvec(&ones(k)).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn diffusion_stencil_and_factorization() {
        let (kk, d) = diffusion_matrices(3, 1.0).unwrap();
        let expect = DenseMatrix::from_rows(&[
            &[1.0, -1.0, 0.0],
            &[-1.0, 2.0, -1.0],
            &[0.0, -1.0, 1.0],
        ]);
        assert_eq!(kk, expect);
        assert_eq!((d.rows(), d.cols()), (2, 3));
        for k in 2..=50 {
            let dx = 2.0 / k as f64;
            let (kk, d) = diffusion_matrices(k, dx).unwrap();
            assert_eq!(kk, d.t_matmul(&d));
            assert!(kk.matvec(&ones(k)).iter().all(|&x| x.abs() < 1e-9 / (dx * dx)));
            let expect = DenseMatrix::from_fn(k, k, |i, j| {
                let inv = 1.0 / (dx * dx);
                if i == j {
                    if i == 0 || i == k - 1 { inv } else { 2.0 * inv }
                } else if i.abs_diff(j) == 1 {
                    -inv
                } else {
                    0.0
                }
            });
            assert!(kk.sub(&expect).max_abs() <= 1e-12 * expect.max_abs());
        }
    }

    #[test]
    fn kron_blocks_k2() {
        let q = DenseMatrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let x = kron_extend_2d(&q, 0.5, 1).unwrap();
        let expect_x = DenseMatrix::from_rows(&[
            &[0.0, 0.0, 0.5, 0.0],
            &[0.0, 0.0, 0.0, 0.5],
            &[-0.5, 0.0, 0.0, 0.0],
            &[0.0, -0.5, 0.0, 0.0],
        ]);
        assert_eq!(x, expect_x);
        let y = kron_extend_2d(&q, 0.5, 2).unwrap();
        let expect_y = DenseMatrix::from_rows(&[
            &[0.0, 0.5, 0.0, 0.0],
            &[-0.5, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.5],
            &[0.0, 0.0, -0.5, 0.0],
        ]);
        assert_eq!(y, expect_y);
        assert!(kron_extend_2d(&q, 0.5, 3).is_err());
    }

    #[test]
    fn kron_inherits_structure() {
        for k in 3..10 {
            let q = periodic_diff_matrix(k).unwrap();
            for axis in 1..=2 {
                let q2 = kron_extend_2d(&q, 0.1, axis).unwrap();
                assert_eq!(q2.add(&q2.transpose()).max_abs(), 0.0);
                assert!(q2.matvec(&ones(k * k)).iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn fom_operators_match_dense_constructors() {
        for &bc in &[BoundaryKind::Periodic, BoundaryKind::Wall] {
            let k = 7;
            let dx = 2.0 / k as f64;
            let ops = FomOperators::new(2, k, dx, bc).unwrap();
            let q1 = match bc {
                BoundaryKind::Periodic => periodic_diff_matrix(k).unwrap(),
                BoundaryKind::Wall => sbp_diff_matrix(k).unwrap().0,
            };
            for axis in 0..2 {
                let dense = kron_extend_2d(&q1, dx, axis + 1).unwrap();
                assert_eq!(ops.q[axis].to_dense(), dense);
                let qd = ops.q[axis].to_dense();
                let b = qd.add(&qd.transpose());
                assert_eq!(b, DenseMatrix::from_diagonal(&ops.b_diagonal(axis)));
            }
            let kd = ops.k_matrix.to_dense();
            let dd = ops.d_matrix.to_dense();
            assert_eq!(kd, dd.t_matmul(&dd));
        }
    }

    #[test]
    fn two_dimensional_diffusion_is_psd() {
        for &bc in &[BoundaryKind::Periodic, BoundaryKind::Wall] {
            for k in [3, 8, 16] {
                let dx = 1.0 / k as f64;
                let ops = FomOperators::new(2, k, dx, bc).unwrap();
                let kd = ops.k_matrix.to_dense();
                let k1 = FomOperators::new(1, k, dx, bc).unwrap().k_matrix.to_dense();
                let id = DenseMatrix::identity(k);
                assert!(kd.sub(&k1.kron(&id).add(&id.kron(&k1))).max_abs() < 1e-9);
                let (vals, _) = symmetric_eigen(&kd).unwrap();
                assert!(vals[0] >= -1e-12 * vals[vals.len() - 1].max(1.0));
            }
        }
    }

    #[test]
    fn wall_boundary_points_cover_faces() {
        let k = 5;
        let ops = FomOperators::new(2, k, 0.4, BoundaryKind::Wall).unwrap();
        assert_eq!(ops.boundary_points.len(), 4 * k);
        // Closed surface: the normals integrate to zero.
        for axis in 0..2 {
            let s: f64 = ops.boundary_points.iter().map(|b| b.normal[axis] * b.weight).sum();
            assert!(s.abs() < 1e-15);
        }
        let corner = ops.boundary_points.iter().filter(|b| b.point == 0).count();
        assert_eq!(corner, 2);
        let ops1 = FomOperators::new(1, k, 0.4, BoundaryKind::Wall).unwrap();
        assert_eq!(ops1.b_diagonal(0), vec![-1.0, 0.0, 0.0, 0.0, 1.0]);
    }
}
