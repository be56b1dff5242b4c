use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{
    cyclic_orthogonal, orthogonality_defect, random_orthogonal, Matrix, RngStream,
};

/// Structure of the orthogonal matrix on the residual branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrthoKind {
    Random,
    Cyclic,
    Identity,
}

impl OrthoKind {
    pub const ALL: [OrthoKind; 3] = [OrthoKind::Random, OrthoKind::Cyclic, OrthoKind::Identity];

    pub fn name(self) -> &'static str {
        match self {
            OrthoKind::Random => "random",
            OrthoKind::Cyclic => "cyclic",
            OrthoKind::Identity => "identity",
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            OrthoKind::Random => "R",
            OrthoKind::Cyclic => "C",
            OrthoKind::Identity => "I",
        }
    }
}

/// An orthogonal matrix together with its structure.
///
/// Cyclic and identity matrices are applied as a shift and a copy; both give
/// bit-identical results to the dense product.
#[derive(Debug, Clone, PartialEq)]
pub struct Orthogonal {
    kind: OrthoKind,
    matrix: Matrix,
}

impl Orthogonal {
    /// Builds `O` of the given kind. Random matrices draw from stream "O".
    pub fn build(kind: OrthoKind, n: usize, seed: u64) -> Result<Self> {
        let matrix = match kind {
            OrthoKind::Random => random_orthogonal(&mut RngStream::new(seed, "O"), n)?,
            OrthoKind::Cyclic => cyclic_orthogonal(n)?,
            OrthoKind::Identity => Matrix::identity(n)?,
        };
        Ok(Self { kind, matrix })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::build(OrthoKind::Identity, n, 0)
    }

    pub fn cyclic(n: usize) -> Result<Self> {
        Self::build(OrthoKind::Cyclic, n, 0)
    }

    /// Wraps an arbitrary dense orthogonal matrix (treated as `Random`).
    pub fn dense(matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(dim_err!("orthogonal matrix must be square"));
        }
        let defect = orthogonality_defect(&matrix);
        if defect > 1e-10 {
            return Err(Error::Param(format!(
                "matrix is not orthogonal (defect {defect:e})"
            )));
        }
        Ok(Self {
            kind: OrthoKind::Random,
            matrix,
        })
    }

    pub fn kind(&self) -> OrthoKind {
        self.kind
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn order(&self) -> usize {
        self.matrix.rows()
    }

    #[inline]
    pub(crate) fn apply_into(&self, h: &[f64], out: &mut [f64]) {
        let n = h.len();
        match self.kind {
            OrthoKind::Identity => out.copy_from_slice(h),
            OrthoKind::Cyclic => {
                out[0] = h[n - 1];
                out[1..].copy_from_slice(&h[..n - 1]);
            }
            OrthoKind::Random => self.matrix.matvec_into(h, out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_apply_matches_dense() {
        let h: Vec<f64> = (0..7).map(|i| (i as f64 * 0.37).sin()).collect();
        for kind in [OrthoKind::Cyclic, OrthoKind::Identity] {
            let o = Orthogonal::build(kind, 7, 3).unwrap();
            let mut fast = vec![0.0; 7];
            o.apply_into(&h, &mut fast);
            let dense = o.matrix().matvec(&h).unwrap();
            assert_eq!(fast, dense, "{kind:?}");
        }
    }

    #[test]
    fn dense_rejects_non_orthogonal() {
        let m = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!(Orthogonal::dense(m).is_err());
    }

    #[test]
    fn identity_is_exact() {
        let o = Orthogonal::build(OrthoKind::Identity, 5, 9).unwrap();
        assert_eq!(o.matrix(), &Matrix::identity(5).unwrap());
    }
}
