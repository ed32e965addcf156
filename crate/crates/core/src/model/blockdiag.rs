use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Square block-diagonal matrix whose blocks follow the grouping of the data.
///
/// Used for the proxy precision `P~`, the true precision `P`, and products of
/// them. Blocks are small (group sizes), so everything is dense per block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagMatrix {
    blocks: Vec<DMatrix<f64>>,
}

impl BlockDiagMatrix {
    pub fn from_blocks(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if blocks.iter().any(|b| !b.is_square() || b.nrows() == 0) {
            return Err(Error::InvalidInput("blocks must be non-empty and square".into()));
        }
        Ok(Self { blocks })
    }

    pub fn identity(groups: &[usize]) -> Self {
        Self { blocks: groups.iter().map(|&g| DMatrix::identity(g, g)).collect() }
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i]
    }

    pub fn groups(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| a.nrows() == b.nrows())
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.dim(), "vector length does not match block layout");
        let mut out = DVector::zeros(v.len());
        let mut start = 0;
        for b in &self.blocks {
            let k = b.nrows();
            let r = b * v.rows(start, k);
            out.rows_mut(start, k).copy_from(&r);
            start += k;
        }
        out
    }

    /// Row-blockwise product `A * M` for a tall matrix `M`.
    pub fn mul_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(m.nrows(), self.dim(), "matrix rows do not match block layout");
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        let mut start = 0;
        for b in &self.blocks {
            let k = b.nrows();
            let r = b * m.rows(start, k);
            out.rows_mut(start, k).copy_from(&r);
            start += k;
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if !self.same_layout(other) {
            return Err(Error::LayoutMismatch);
        }
        Ok(Self { blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a * b).collect() })
    }

    /// `v' A v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.mul_vec(v))
    }

    /// Trace, summed over groups left to right.
    pub fn trace(&self) -> f64 {
        self.blocks.iter().fold(0.0, |acc, b| acc + b.trace())
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().flat_map(|b| b.iter()).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest relative asymmetry `|A - A'| / max(1, |A|)` over blocks.
    pub fn asymmetry(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| (b - b.transpose()).amax() / b.amax().max(1.0))
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue over all blocks (after symmetrisation).
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let s = (b + b.transpose()) * 0.5;
                s.symmetric_eigenvalues().min()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let s = (b + b.transpose()) * 0.5;
                s.symmetric_eigenvalues().max()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inverse(&self) -> Result<Self> {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            blocks.push(b.clone().try_inverse().ok_or(Error::SingularBlock { group: i })?);
        }
        Ok(Self { blocks })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut start = 0;
        for b in &self.blocks {
            let k = b.nrows();
            out.view_mut((start, start), (k, k)).copy_from(b);
            start += k;
        }
        out
    }
}

pub fn block_trace(a: &BlockDiagMatrix) -> f64 {
    a.trace()
}

/// `trace(A B C)` computed group by group.
pub fn block_triple_trace(a: &BlockDiagMatrix, b: &BlockDiagMatrix, c: &BlockDiagMatrix) -> Result<f64> {
    if !a.same_layout(b) || !a.same_layout(c) {
        return Err(Error::LayoutMismatch);
    }
    let mut acc = 0.0;
    for ((x, y), z) in a.blocks.iter().zip(&b.blocks).zip(&c.blocks) {
        acc += (x * y * z).trace();
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_block_diag(rng: &mut ChaCha8Rng, groups: &[usize]) -> BlockDiagMatrix {
        BlockDiagMatrix::from_blocks(
            groups.iter().map(|&g| DMatrix::from_fn(g, g, |_, _| rng.random::<f64>() - 0.5)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_traces() {
        let i = BlockDiagMatrix::identity(&[3, 2, 4]);
        assert_eq!(block_trace(&i), 9.0);
        assert_eq!(block_triple_trace(&i, &i, &i).unwrap(), 9.0);
    }

    #[test]
    fn traces_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = [3, 5];
        let (a, b, c) = (
            random_block_diag(&mut rng, &g),
            random_block_diag(&mut rng, &g),
            random_block_diag(&mut rng, &g),
        );
        let dense = a.to_dense() * b.to_dense() * c.to_dense();
        let t = block_triple_trace(&a, &b, &c).unwrap();
        assert!((t - dense.trace()).abs() <= 1e-10 * dense.trace().abs().max(1.0));
        assert!((block_trace(&a) - a.to_dense().trace()).abs() < 1e-12);
    }

    #[test]
    fn layout_mismatch_is_reported() {
        let a = BlockDiagMatrix::identity(&[2, 2]);
        let b = BlockDiagMatrix::identity(&[4]);
        assert_eq!(block_triple_trace(&a, &b, &a), Err(Error::LayoutMismatch));
    }

    #[test]
    fn products_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_block_diag(&mut rng, &[2, 3]);
        let v = DVector::from_fn(5, |i, _| i as f64 - 1.5);
        let m = DMatrix::from_fn(5, 2, |i, j| (i * j) as f64 + 0.5);
        assert!((a.mul_vec(&v) - a.to_dense() * &v).norm() < 1e-12);
        assert!((a.mul_mat(&m) - a.to_dense() * &m).norm() < 1e-12);
    }
}
