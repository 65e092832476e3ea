//! Dense symmetric kernels: Gram accumulation, inverse square roots, SPD solves.
//!
//! Everything here is dense. The ambient dimension n stays small (the number
//! of terms m is what grows), so an n×n eigendecomposition per call is cheap.

use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated when wrapping a matrix.
const SYMMETRY_TOL: f64 = 1e-12;

/// A dense symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m`, checking squareness and symmetry, then symmetrizing exactly.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::InvalidParameter(format!(
                "matrix is not symmetric (asymmetry {asym:e})"
            )));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(SymMatrix(sym))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// xᵀ S x
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.0[(i, j)] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.0 * DVector::from_column_slice(x);
        v.as_slice().to_vec()
    }
}

/// AᵀWA for a k×n matrix `a` and nonnegative diagonal `w` of length k.
pub fn gram(a: &DMatrix<f64>, w: &[f64]) -> Result<SymMatrix> {
    if w.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: w.len(),
        });
    }
    let n = a.ncols();
    let mut g = DMatrix::<f64>::zeros(n, n);
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        let row = a.row(i);
        for r in 0..n {
            let s = wi * row[r];
            if s == 0.0 {
                continue;
            }
            for c in r..n {
                g[(r, c)] += s * row[c];
            }
        }
    }
    for r in 0..n {
        for c in 0..r {
            g[(r, c)] = g[(c, r)];
        }
    }
    Ok(SymMatrix(g))
}

/// Output of [`inv_sqrt`].
#[derive(Clone, Debug)]
pub struct InvSqrt {
    pub matrix: SymMatrix,
    /// Number of eigenvalues raised to the floor.
    pub floored: usize,
    pub eigenvalues: Vec<f64>,
}

/// S^{-1/2} through a symmetric eigendecomposition, with eigenvalues clamped
/// below at `floor_rel · λ_max`.
pub fn inv_sqrt(s: &SymMatrix, floor_rel: f64) -> InvSqrt {
    let eig = s.0.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let floor = (floor_rel * lmax).max(f64::MIN_POSITIVE);
    let mut floored = 0;
    let scaled: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            if l < floor {
                floored += 1;
                1.0 / floor.sqrt()
            } else {
                1.0 / l.sqrt()
            }
        })
        .collect();
    if floored > 0 {
        log::debug!("inv_sqrt: {floored} eigenvalue(s) clamped at {floor:e}");
    }
    let q = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&DVector::from_vec(scaled));
    let m = q * d * q.transpose();
    let m = (&m + m.transpose()) * 0.5;
    InvSqrt {
        matrix: SymMatrix(m),
        floored,
        eigenvalues: eig.eigenvalues.as_slice().to_vec(),
    }
}

/// Solves S x = b by Cholesky.
pub fn solve_spd(s: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: b.len(),
        });
    }
    let chol = s
        .0
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("matrix is not positive definite".into()))?;
    Ok(chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
}

/// Reads a row-major CSV matrix. A first line that does not parse as numbers
/// is treated as a header.
pub fn read_csv_matrix<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> =
            rec.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(Error::InvalidParameter(format!(
                    "csv line {}: {e}",
                    line + 1
                )))
            }
        }
    }
    let k = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.len(),
        });
    }
    if let Some(i) = rows.iter().flatten().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(DMatrix::from_row_iterator(k, n, rows.into_iter().flatten()))
}
