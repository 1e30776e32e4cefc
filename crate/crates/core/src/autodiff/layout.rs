use std::sync::{Arc, OnceLock};

use super::{AutodiffError, MultiIndex};

/// A downward-closed set of multi-indices over (x, t) carried by every point of a
/// batched jet tensor, plus the product table `α_i + α_j = α_k` restricted to it.
#[derive(Debug, PartialEq, Eq)]
pub struct JetLayout {
    indices: Vec<MultiIndex>,
    table: Vec<(u8, u8, u8)>,
}

impl JetLayout {
    /// Closes `wanted` downward and orders the result by total degree, then by t-order.
    /// The constant index always sits at position 0.
    pub fn covering(wanted: &[MultiIndex]) -> Result<Arc<Self>, AutodiffError> {
        let mut indices = vec![MultiIndex::VALUE];
        for w in wanted {
            if w.order() > super::MAX_ORDER {
                return Err(AutodiffError::UnsupportedOrder(*w));
            }
            for a in 0..=w.x {
                for b in 0..=w.t {
                    let m = MultiIndex::new(a, b);
                    if !indices.contains(&m) {
                        indices.push(m);
                    }
                }
            }
        }
        indices.sort_by_key(|m| (m.order(), m.t));
        let n = indices.len();
        let mut table = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let s = MultiIndex::new(indices[i].x + indices[j].x, indices[i].t + indices[j].t);
                if let Some(k) = indices.iter().position(|m| *m == s) {
                    table.push((i as u8, j as u8, k as u8));
                }
            }
        }
        Ok(Arc::new(Self { indices, table }))
    }

    /// The layout with only the value coefficient.
    pub fn value_only() -> Arc<Self> {
        static CELL: OnceLock<Arc<JetLayout>> = OnceLock::new();
        CELL.get_or_init(|| JetLayout::covering(&[]).expect("order 0")).clone()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, m: MultiIndex) -> Option<usize> {
        self.indices.iter().position(|i| *i == m)
    }

    /// Triples `(i, j, k)` with `α_i + α_j = α_k`.
    pub fn table(&self) -> &[(u8, u8, u8)] {
        &self.table
    }

    pub fn max_order(&self) -> u8 {
        self.indices.iter().map(|m| m.order()).max().unwrap_or(0)
    }
}
