//! Linear maps on creation operators.

use std::collections::HashSet;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mode::ModeId;

/// Deviation from `U†U = I` accepted when a transform is constructed.
pub const ISOMETRY_TOLERANCE: f64 = 1e-10;

/// `a†_i -> Σ_j U[(j, i)] b†_j` for `a_i` in `in_modes` and `b_j` in `out_modes`.
///
/// Must be an isometry. Input modes that do not reappear among the outputs
/// are emptied by the transform and leave the state's registry.
#[derive(Debug, Clone)]
pub struct ModeTransform {
    in_modes: Vec<ModeId>,
    out_modes: Vec<ModeId>,
    matrix: DMatrix<Complex64>,
}

fn check_distinct(modes: &[ModeId]) -> Result<()> {
    let mut seen = HashSet::with_capacity(modes.len());
    for m in modes {
        if !seen.insert(m) {
            return Err(Error::DuplicateMode(m.clone()));
        }
    }
    Ok(())
}

impl ModeTransform {
    pub fn new(
        in_modes: Vec<ModeId>,
        out_modes: Vec<ModeId>,
        matrix: DMatrix<Complex64>,
    ) -> Result<Self> {
        if matrix.nrows() != out_modes.len() || matrix.ncols() != in_modes.len() {
            return Err(Error::ShapeMismatch(format!(
                "matrix is {}x{}, expected {}x{} (outputs x inputs)",
                matrix.nrows(),
                matrix.ncols(),
                out_modes.len(),
                in_modes.len()
            )));
        }
        check_distinct(&in_modes)?;
        check_distinct(&out_modes)?;
        let t = ModeTransform {
            in_modes,
            out_modes,
            matrix,
        };
        let deviation = t.isometry_deviation();
        if !(deviation <= ISOMETRY_TOLERANCE) {
            return Err(Error::NotIsometric { deviation });
        }
        Ok(t)
    }

    /// Builds a transform from a row-major list of entries, `rows[j][i] = U[(j, i)]`.
    pub fn from_rows(
        in_modes: Vec<ModeId>,
        out_modes: Vec<ModeId>,
        rows: &[Vec<Complex64>],
    ) -> Result<Self> {
        let ncols = in_modes.len();
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        let matrix = DMatrix::from_fn(rows.len(), ncols, |j, i| rows[j][i]);
        Self::new(in_modes, out_modes, matrix)
    }

    pub fn identity(modes: Vec<ModeId>) -> Result<Self> {
        let n = modes.len();
        Self::new(modes.clone(), modes, DMatrix::identity(n, n))
    }

    /// Permutation that moves each `from` mode onto its `to` label.
    pub fn relabel(pairs: &[(ModeId, ModeId)]) -> Result<Self> {
        let (ins, outs): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        let n = pairs.len();
        Self::new(ins, outs, DMatrix::identity(n, n))
    }

    pub fn in_modes(&self) -> &[ModeId] {
        &self.in_modes
    }

    pub fn out_modes(&self) -> &[ModeId] {
        &self.out_modes
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// Nonzero entries of column `i` as `(output index, coefficient)`.
    pub(crate) fn column(&self, i: usize) -> Vec<(usize, Complex64)> {
        (0..self.out_modes.len())
            .filter_map(|j| {
                let c = self.matrix[(j, i)];
                (c.norm() > 0.0).then_some((j, c))
            })
            .collect()
    }

    /// Largest entry of `|U†U - I|`.
    pub fn isometry_deviation(&self) -> f64 {
        let gram = self.matrix.adjoint() * &self.matrix;
        max_deviation_from_identity(&gram)
    }

    /// Largest entry of `|U†U - I|` and `|UU† - I|`; `None` when `U` is not square.
    pub fn unitarity_deviation(&self) -> Option<f64> {
        if !self.matrix.is_square() {
            return None;
        }
        let outer = &self.matrix * self.matrix.adjoint();
        Some(self.isometry_deviation().max(max_deviation_from_identity(&outer)))
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_deviation()
            .is_some_and(|d| d <= ISOMETRY_TOLERANCE)
    }

    /// Inverse of a unitary transform, mapping the outputs back onto the inputs.
    pub fn adjoint(&self) -> Result<Self> {
        match self.unitarity_deviation() {
            Some(d) if d <= ISOMETRY_TOLERANCE => Self::new(
                self.out_modes.clone(),
                self.in_modes.clone(),
                self.matrix.adjoint(),
            ),
            Some(d) => Err(Error::NotIsometric { deviation: d }),
            None => Err(Error::ShapeMismatch(
                "adjoint of a non-square isometry is not an isometry".into(),
            )),
        }
    }

    /// Block-diagonal combination of two transforms acting on disjoint modes.
    pub fn direct_sum(&self, other: &ModeTransform) -> Result<Self> {
        let mut ins = self.in_modes.clone();
        ins.extend(other.in_modes.iter().cloned());
        let mut outs = self.out_modes.clone();
        outs.extend(other.out_modes.iter().cloned());
        let (r1, c1) = self.matrix.shape();
        let (r2, c2) = other.matrix.shape();
        let mut m = DMatrix::zeros(r1 + r2, c1 + c2);
        m.view_mut((0, 0), (r1, c1)).copy_from(&self.matrix);
        m.view_mut((r1, c1), (r2, c2)).copy_from(&other.matrix);
        Self::new(ins, outs, m)
    }

    /// Direct sum of a list of transforms.
    pub fn direct_sum_all(parts: &[ModeTransform]) -> Result<Self> {
        let (first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::ShapeMismatch("empty direct sum".into()))?;
        rest.iter().try_fold(first.clone(), |acc, t| acc.direct_sum(t))
    }
}

fn max_deviation_from_identity(m: &DMatrix<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.nrows() {
        for i in 0..m.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            let d = (m[(j, i)] - Complex64::new(target, 0.0)).norm();
            if d.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(d);
        }
    }
    worst
}
