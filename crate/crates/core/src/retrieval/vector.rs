use super::{rank_order, AuthMask, RetrievalError};

/// Exact cosine search over a dense row-major table of unit vectors.
#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    dim: usize,
    data: Vec<f32>,
}

/// Dot product accumulated in f64.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

impl VectorIndex {
    pub fn from_rows(rows: Vec<Vec<f32>>) -> Result<Self, RetrievalError> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in rows {
            if row.len() != dim {
                return Err(RetrievalError::DimensionMismatch { expected: dim, got: row.len() });
            }
            data.extend(row);
        }
        Ok(VectorIndex { dim, data })
    }

    pub(crate) fn from_flat(dim: usize, data: Vec<f32>) -> Self {
        VectorIndex { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn raw(&self) -> &[f32] {
        &self.data
    }

    /// Authorized rows ranked by cosine similarity with a unit query.
    pub fn search(
        &self,
        query: &[f32],
        mask: &AuthMask<'_>,
        ids: &[String],
        depth: usize,
    ) -> Result<Vec<(usize, f64)>, RetrievalError> {
        if self.is_empty() {
            return Ok(Vec::new());
        }
        if query.len() != self.dim {
            return Err(RetrievalError::DimensionMismatch { expected: self.dim, got: query.len() });
        }
        let mut ranked: Vec<(usize, f64)> =
            (0..self.len()).filter(|i| mask.allows(*i)).map(|i| (i, dot(query, self.row(i)))).collect();
        ranked.sort_by(|a, b| rank_order(a.1, &ids[a.0], b.1, &ids[b.0]));
        ranked.truncate(depth);
        Ok(ranked)
    }
}
