use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::text::NUM_RESERVED;

/// Normalized mean of token vectors, optionally after subtracting the mean
/// vector of the whole table. Reserved tokens are skipped.
#[derive(Clone, Debug)]
pub struct SentenceEmbedder {
    table: Tensor,
    center: Option<Vec<f32>>,
}

impl SentenceEmbedder {
    pub fn new(table: Tensor, centered: bool) -> Self {
        let center = centered.then(|| {
            let (v, d) = (table.rows(), table.cols());
            let mut mean = vec![0.0f64; d];
            for r in NUM_RESERVED.min(v)..v {
                for (m, x) in mean.iter_mut().zip(table.row(r)) {
                    *m += *x as f64;
                }
            }
            let n = v.saturating_sub(NUM_RESERVED).max(1) as f64;
            mean.into_iter().map(|m| (m / n) as f32).collect()
        });
        SentenceEmbedder { table, center }
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    /// Unit vector for `ids`.
    pub fn embed(&self, ids: &[usize]) -> Result<Vec<f32>> {
        let d = self.table.cols();
        let mut acc = vec![0.0f64; d];
        let mut n = 0usize;
        for &id in ids.iter().filter(|&&id| id >= NUM_RESERVED) {
            if id >= self.table.rows() {
                return Err(Error::Eval(format!("token {id} outside the embedding table")));
            }
            for (a, x) in acc.iter_mut().zip(self.table.row(id)) {
                *a += *x as f64;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Eval("cannot embed a sentence without content tokens".into()));
        }
        if let Some(c) = &self.center {
            for (a, m) in acc.iter_mut().zip(c) {
                *a = *a / n as f64 - *m as f64;
            }
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Eval("sentence embedding has zero norm".into()));
        }
        Ok(acc.into_iter().map(|x| (x / norm) as f32).collect())
    }

    /// Cosine similarity of the two sentences; 0 when either has no content
    /// tokens.
    pub fn similarity(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        let has_content = |s: &[usize]| s.iter().any(|&id| id >= NUM_RESERVED);
        if !has_content(a) || !has_content(b) {
            return Ok(0.0);
        }
        let (ea, eb) = (self.embed(a)?, self.embed(b)?);
        Ok(ea.iter().zip(&eb).map(|(x, y)| *x as f64 * *y as f64).sum())
    }
}
