use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use super::NonRigidError;
use crate::math::{Mat6, Vec6};

/// Block-sparse Jacobian over node-major unknowns (6 per node). Every block
/// row has height `R` and holds `(node, R x 6 block)` pairs with strictly
/// increasing node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBlockMatrix<const R: usize> {
    nodes: usize,
    rows: Vec<Vec<(usize, SMatrix<f64, R, 6>)>>,
}

impl<const R: usize> SparseBlockMatrix<R> {
    pub fn new(nodes: usize) -> Self {
        Self { nodes, rows: Vec::new() }
    }

    pub fn from_rows(nodes: usize, rows: Vec<Vec<(usize, SMatrix<f64, R, 6>)>>) -> Self {
        let mut m = Self { nodes, rows: Vec::with_capacity(rows.len()) };
        for r in rows {
            m.push_row(r);
        }
        m
    }

    pub fn push_row(&mut self, blocks: Vec<(usize, SMatrix<f64, R, 6>)>) {
        assert!(blocks.windows(2).all(|w| w[0].0 < w[1].0), "block columns must increase strictly");
        assert!(blocks.last().is_none_or(|b| b.0 < self.nodes), "block column out of range");
        self.rows.push(blocks);
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// Number of block rows.
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, SMatrix<f64, R, 6>)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(usize, SMatrix<f64, R, 6>)]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(R * self.rows.len(), 6 * self.nodes);
        for (i, row) in self.rows.iter().enumerate() {
            for (j, block) in row {
                m.view_mut((R * i, 6 * j), (R, 6)).copy_from(block);
            }
        }
        m
    }
}

/// Symmetric normal equations `J^T J` and `J^T r` with 6x6 blocks.
/// Off-diagonal blocks are kept for `i < j` only.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    diag: Vec<Mat6>,
    upper: BTreeMap<(usize, usize), Mat6>,
    rhs: Vec<Vec6>,
}

impl BlockSystem {
    pub fn new(nodes: usize) -> Self {
        Self { diag: vec![Mat6::zeros(); nodes], upper: BTreeMap::new(), rhs: vec![Vec6::zeros(); nodes] }
    }

    pub fn node_count(&self) -> usize {
        self.diag.len()
    }

    /// Adds `J^T J` and `J^T r` of a block matrix and its residuals.
    pub fn add_term<const R: usize>(&mut self, jac: &SparseBlockMatrix<R>, residuals: &[SVector<f64, R>]) {
        assert_eq!(jac.node_count(), self.node_count());
        assert_eq!(jac.row_count(), residuals.len());
        for (row, r) in jac.rows().zip(residuals) {
            for (a, (i, ji)) in row.iter().enumerate() {
                self.diag[*i] += ji.transpose() * ji;
                self.rhs[*i] += ji.transpose() * r;
                for (j, jj) in &row[a + 1..] {
                    *self.upper.entry((*i, *j)).or_insert_with(Mat6::zeros) += ji.transpose() * jj;
                }
            }
        }
    }

    pub fn rhs(&self) -> DVector<f64> {
        DVector::from_iterator(6 * self.rhs.len(), self.rhs.iter().flat_map(|b| b.iter().copied()))
    }

    pub fn max_diagonal(&self) -> f64 {
        self.diag.iter().flat_map(|d| d.diagonal().iter().copied().collect::<Vec<_>>()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let mut m = DMatrix::zeros(6 * n, 6 * n);
        for (i, d) in self.diag.iter().enumerate() {
            m.view_mut((6 * i, 6 * i), (6, 6)).copy_from(d);
        }
        for ((i, j), b) in &self.upper {
            m.view_mut((6 * i, 6 * j), (6, 6)).copy_from(b);
            m.view_mut((6 * j, 6 * i), (6, 6)).copy_from(&b.transpose());
        }
        m
    }

    /// `(J^T J + damping I) x`.
    pub fn apply(&self, x: &DVector<f64>, damping: f64) -> DVector<f64> {
        let block = |v: &DVector<f64>, i: usize| Vec6::from_iterator(v.rows(6 * i, 6).iter().copied());
        let mut y = vec![Vec6::zeros(); self.node_count()];
        for (i, d) in self.diag.iter().enumerate() {
            y[i] = d * block(x, i) + block(x, i) * damping;
        }
        for ((i, j), b) in &self.upper {
            y[*i] += b * block(x, *j);
            y[*j] += b.tr_mul(&block(x, *i));
        }
        DVector::from_iterator(x.len(), y.iter().flat_map(|b| b.iter().copied()))
    }

    /// Solves `(J^T J + damping I) h = -J^T r` by conjugate gradients with a
    /// block-Jacobi preconditioner, to `‖A h + J^T r‖ <= tol ‖J^T r‖`.
    pub fn solve(&self, damping: f64, tol: f64) -> Result<DVector<f64>, NonRigidError> {
        let n = 6 * self.node_count();
        let b = -self.rhs();
        let b_norm = b.norm();
        let mut x = DVector::zeros(n);
        if b_norm == 0.0 {
            return Ok(x);
        }
        let precond: Vec<Mat6> = self
            .diag
            .iter()
            .map(|d| {
                let m = d + Mat6::identity() * damping;
                m.cholesky().map(|c| c.inverse()).unwrap_or_else(|| m.pseudo_inverse(1e-12 * m.amax()).unwrap_or(Mat6::zeros()))
            })
            .collect();
        let precondition = |r: &DVector<f64>| {
            DVector::from_iterator(
                n,
                precond.iter().enumerate().flat_map(|(i, p)| (p * Vec6::from_iterator(r.rows(6 * i, 6).iter().copied())).data.0[0]),
            )
        };
        let mut r = b.clone();
        let mut z = precondition(&r);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        for _ in 0..(10 * n).max(100) {
            let ap = self.apply(&p, damping);
            let pap = p.dot(&ap);
            if !(pap > 0.0) {
                break;
            }
            let step = rz / pap;
            x.axpy(step, &p, 1.0);
            r.axpy(-step, &ap, 1.0);
            if r.norm() <= tol * b_norm {
                return Ok(x);
            }
            z = precondition(&r);
            let rz_next = r.dot(&z);
            p = &z + &p * (rz_next / rz);
            rz = rz_next;
        }
        // Recompute the true residual before giving up.
        let rel = (self.apply(&x, damping) - &b).norm() / b_norm;
        if rel <= tol {
            Ok(x)
        } else {
            Err(NonRigidError::SolverStalled(rel))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{RowVector6, Matrix3x6};
    use rand::{Rng, SeedableRng};

    fn random_problem(nodes: usize, seed: u64) -> (SparseBlockMatrix<1>, Vec<SVector<f64, 1>>, SparseBlockMatrix<3>, Vec<SVector<f64, 3>>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut data = SparseBlockMatrix::<1>::new(nodes);
        let mut data_r = Vec::new();
        for _ in 0..8 * nodes {
            let mut cols: Vec<usize> = rand::seq::index::sample(&mut rng, nodes, 4.min(nodes)).into_vec();
            cols.sort_unstable();
            data.push_row(cols.into_iter().map(|c| (c, RowVector6::from_fn(|_, _| rng.random_range(-1.0..1.0)))).collect());
            data_r.push(SVector::<f64, 1>::new(rng.random_range(-0.1..0.1)));
        }
        let mut reg = SparseBlockMatrix::<3>::new(nodes);
        let mut reg_r = Vec::new();
        for i in 0..nodes - 1 {
            reg.push_row(vec![
                (i, Matrix3x6::from_fn(|_, _| rng.random_range(-1.0..1.0))),
                (i + 1, Matrix3x6::from_fn(|_, _| rng.random_range(-1.0..1.0))),
            ]);
            reg_r.push(SVector::<f64, 3>::from_fn(|_, _| rng.random_range(-0.1..0.1)));
        }
        (data, data_r, reg, reg_r)
    }

    #[test]
    fn normal_equations_match_dense_oracle() {
        for nodes in [1, 5, 20] {
            let (d, dr, g, gr) = random_problem(nodes.max(2), nodes as u64);
            let mut sys = BlockSystem::new(nodes.max(2));
            sys.add_term(&d, &dr);
            sys.add_term(&g, &gr);
            let jd = d.to_dense();
            let jg = g.to_dense();
            let rd = DVector::from_iterator(dr.len(), dr.iter().map(|r| r[0]));
            let rg = DVector::from_iterator(3 * gr.len(), gr.iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()));
            let jtj = jd.transpose() * &jd + jg.transpose() * &jg;
            let jtr = jd.transpose() * rd + jg.transpose() * rg;
            assert!((sys.to_dense() - jtj).amax() < 1e-9);
            assert!((sys.rhs() - jtr).amax() < 1e-9);
        }
    }

    #[test]
    fn cg_meets_residual_contract() {
        let (d, dr, g, gr) = random_problem(20, 3);
        let mut sys = BlockSystem::new(20);
        sys.add_term(&d, &dr);
        sys.add_term(&g, &gr);
        for damping in [0.0, 1e-3, 1.0] {
            let h = sys.solve(damping, 1e-8).unwrap();
            let res = sys.apply(&h, damping) + sys.rhs();
            assert!(res.norm() <= 1e-8 * sys.rhs().norm());
            let dense = sys.to_dense() + DMatrix::identity(120, 120) * damping;
            let direct = dense.cholesky().unwrap().solve(&(-sys.rhs()));
            assert!((h - direct).amax() < 1e-6);
        }
    }

    #[test]
    fn block_columns_must_increase() {
        let mut m = SparseBlockMatrix::<1>::new(3);
        let row = vec![(2, RowVector6::zeros()), (1, RowVector6::zeros())];
        assert!(std::panic::catch_unwind(move || m.push_row(row)).is_err());
    }
}
