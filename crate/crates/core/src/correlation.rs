//! Partial knowledge of the joint distribution: hypotheses are partitioned
//! into blocks, and only within-block correlations are known.

use crate::error::{Error, Result};
use crate::mvn::CorrelationMatrix;
use crate::subset::{check_size, IndexSet};

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationModel {
    m: usize,
    blocks: Vec<IndexSet>,
    /// One matrix per block, rows in increasing member order.
    matrices: Vec<CorrelationMatrix>,
    block_of: Vec<usize>,
}

impl CorrelationModel {
    /// `blocks` holds 0-based member lists; `matrices[h]` is indexed in the
    /// order of `blocks[h]` and may be omitted (`None`) for singletons.
    pub fn new(m: usize, blocks: Vec<Vec<usize>>, matrices: Vec<Option<CorrelationMatrix>>) -> Result<Self> {
        check_size(m)?;
        if matrices.len() != blocks.len() {
            return Err(Error::InvalidModel(format!("{} blocks but {} matrices", blocks.len(), matrices.len())));
        }
        let mut block_of = vec![usize::MAX; m];
        let mut sets = Vec::with_capacity(blocks.len());
        let mut sorted_matrices = Vec::with_capacity(blocks.len());
        for (h, (members, matrix)) in blocks.iter().zip(matrices).enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidModel(format!("block {} is empty", h + 1)));
            }
            let set = IndexSet::from_indices(members, m).map_err(|e| Error::InvalidModel(e.to_string()))?;
            for &j in members {
                if block_of[j] != usize::MAX {
                    return Err(Error::InvalidModel(format!("H{} appears in more than one block", j + 1)));
                }
                block_of[j] = h;
            }
            let matrix = match matrix {
                Some(mat) => {
                    if mat.dim() != members.len() {
                        return Err(Error::InvalidModel(format!(
                            "block {} has {} members but a {}x{} matrix",
                            h + 1,
                            members.len(),
                            mat.dim(),
                            mat.dim()
                        )));
                    }
                    // reorder rows to increasing member index
                    let mut order: Vec<usize> = (0..members.len()).collect();
                    order.sort_by_key(|&k| members[k]);
                    mat.submatrix(&order)
                }
                None if members.len() == 1 => CorrelationMatrix::identity(1),
                None => {
                    return Err(Error::InvalidModel(format!(
                        "block {} has {} members but no correlation matrix",
                        h + 1,
                        members.len()
                    )))
                }
            };
            sets.push(set);
            sorted_matrices.push(matrix);
        }
        if let Some(j) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::InvalidModel(format!("H{} is not covered by any block", j + 1)));
        }
        Ok(Self { m, blocks: sets, matrices: sorted_matrices, block_of })
    }

    /// Joint distribution of all `m` statistics known.
    pub fn full(matrix: CorrelationMatrix) -> Self {
        let m = matrix.dim();
        Self { m, blocks: vec![IndexSet::full(m)], matrices: vec![matrix], block_of: vec![0; m] }
    }

    /// Nothing known beyond the marginals: every hypothesis is its own block.
    pub fn singletons(m: usize) -> Self {
        Self {
            m,
            blocks: (0..m).map(IndexSet::singleton).collect(),
            matrices: vec![CorrelationMatrix::identity(1); m],
            block_of: (0..m).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn blocks(&self) -> &[IndexSet] {
        &self.blocks
    }

    pub fn block_of(&self, j: usize) -> usize {
        self.block_of[j]
    }

    /// Block matrix in increasing member order.
    pub fn block_matrix(&self, h: usize) -> &CorrelationMatrix {
        &self.matrices[h]
    }

    pub fn is_single_block(&self) -> bool {
        self.blocks.len() == 1
    }

    /// Correlation matrix of `members` (all in one block, increasing order).
    pub fn matrix_for(&self, members: IndexSet) -> Result<CorrelationMatrix> {
        let first = members.iter().next().ok_or_else(|| Error::InvalidModel("empty member set".into()))?;
        let h = self.block_of[first];
        let block = self.blocks[h];
        if !members.is_subset_of(block) {
            return Err(Error::MethodMismatch(format!("joint distribution of {members} is not fully known")));
        }
        let pos: Vec<usize> = members.iter().map(|j| block.rank_of(j).unwrap_or(0)).collect();
        Ok(self.matrices[h].submatrix(&pos))
    }

    /// `members` split by block, in block order; empty parts omitted.
    pub fn split(&self, members: IndexSet) -> Vec<(usize, IndexSet)> {
        self.blocks.iter().enumerate().map(|(h, b)| (h, b.intersect(members))).filter(|(_, s)| !s.is_empty()).collect()
    }

    /// Assemble the full `m x m` matrix, with `cross` as every unknown
    /// between-block correlation.
    pub fn assemble(&self, cross: f64) -> Result<CorrelationMatrix> {
        let m = self.m;
        let mut entries = vec![cross; m * m];
        for (h, block) in self.blocks.iter().enumerate() {
            for (a, i) in block.iter().enumerate() {
                for (b, j) in block.iter().enumerate() {
                    entries[i * m + j] = self.matrices[h].get(a, b);
                }
            }
        }
        CorrelationMatrix::new(m, entries)
    }
}
