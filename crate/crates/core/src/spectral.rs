//! Dense Hermitian matrices with cached eigendecompositions, frames, and the
//! small set of linear-algebra primitives everything else is built on.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::cell::OnceCell;

use crate::Error;

/// A Hermitian matrix together with a lazily computed eigendecomposition.
///
/// Eigenvalues are ascending; eigenvectors are the columns of `vecs`.
pub struct HMat {
    mat: Array2<C64>,
    eig: OnceCell<(Array1<f64>, Array2<C64>)>,
}

impl HMat {
    /// Wrap a matrix, checking Hermiticity to `tol` and symmetrizing the
    /// rounding-level remainder.
    pub fn new(mat: Array2<C64>) -> Result<Self, Error> {
        let n = mat.nrows();
        if n != mat.ncols() {
            return Err(Error::NotSquare(mat.nrows(), mat.ncols()));
        }
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((mat[[i, j]] - mat[[j, i]].conj()).norm());
            }
        }
        let scale = mat.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
        if dev > 1e-8 * scale {
            return Err(Error::NotHermitian(dev));
        }
        let herm = symmetrize(&mat);
        Ok(HMat { mat: herm, eig: OnceCell::new() })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    /// Eigenvalues (ascending) and eigenvectors (columns), computed once.
    pub fn eig(&self) -> &(Array1<f64>, Array2<C64>) {
        self.eig.get_or_init(|| {
            self.mat
                .eigh(UPLO::Lower)
                .expect("eigendecomposition failed on a finite Hermitian matrix")
        })
    }

    /// Spectral calculus: g(M) = V g(D) V†.
    pub fn apply_fn(&self, g: impl Fn(f64) -> f64) -> Array2<C64> {
        let (vals, vecs) = self.eig();
        let gvals: Array1<f64> = vals.mapv(&g);
        let mut scaled = vecs.clone();
        for (mut col, gv) in scaled.axis_iter_mut(Axis(1)).zip(gvals.iter()) {
            col.mapv_inplace(|z| z * *gv);
        }
        let vh = conj_t(vecs);
        scaled.dot(&vh)
    }

    /// Operator norm (largest eigenvalue magnitude).
    pub fn op_norm(&self) -> f64 {
        let (vals, _) = self.eig();
        vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// (M + M†)/2.
pub fn symmetrize(m: &Array2<C64>) -> Array2<C64> {
    let mh = conj_t(m);
    (m + &mh).mapv(|z| z * 0.5)
}

/// Conjugate transpose.
pub fn conj_t(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// Operator (2-)norm of a general matrix, via the Hermitian square.
pub fn op_norm(m: &Array2<C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    // ||M|| = sqrt(lambda_max(M† M)); use the smaller Gram side.
    let g = if m.nrows() >= m.ncols() {
        conj_t(m).dot(m)
    } else {
        m.dot(&conj_t(m))
    };
    let (vals, _) = g.eigh(UPLO::Lower).expect("Gram eigendecomposition failed");
    vals.iter().fold(0.0_f64, |mx, v| mx.max(*v)).max(0.0).sqrt()
}

/// Operator norm of the commutator [A, B].
pub fn commutator_norm(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    op_norm(&(a.dot(b) - b.dot(a)))
}

/// Orthonormalize the columns of `cols` by modified Gram-Schmidt, dropping
/// columns whose remainder falls below `tol` times the largest input norm.
///
/// Never use this to orthonormalize projector columns; take `complement`
/// instead, which is rank-safe for near-dependent frames.
pub fn orthonormalize(cols: &Array2<C64>, tol: f64) -> Array2<C64> {
    let n = cols.nrows();
    let max_norm = cols
        .axis_iter(Axis(1))
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0_f64, f64::max);
    let mut kept: Vec<Array1<C64>> = Vec::new();
    if max_norm == 0.0 {
        return Array2::zeros((n, 0));
    }
    for col in cols.axis_iter(Axis(1)) {
        let mut v: Array1<C64> = col.to_owned();
        // two MGS passes for numerical orthogonality
        for _ in 0..2 {
            for q in &kept {
                let ip: C64 = q.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                v = &v - &q.mapv(|z| z * ip);
            }
        }
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > tol * max_norm {
            kept.push(v.mapv(|z| z / nrm));
        }
    }
    let mut out = Array2::zeros((n, kept.len()));
    for (j, q) in kept.iter().enumerate() {
        out.column_mut(j).assign(q);
    }
    out
}

/// Orthonormal basis for the complement of the column span of `frame` in C^dim,
/// computed from the eigendecomposition of the frame projector (eigenvalue < 1/2
/// marks a complement direction). Safe for near-dependent input frames.
pub fn complement(frame: &Array2<C64>, dim: usize) -> Array2<C64> {
    if frame.ncols() == 0 {
        return Array2::eye(dim);
    }
    let proj = frame.dot(&conj_t(frame));
    let (vals, vecs) = proj.eigh(UPLO::Lower).expect("projector eigendecomposition failed");
    let idx: Vec<usize> = vals
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < 0.5)
        .map(|(i, _)| i)
        .collect();
    let mut out = Array2::zeros((dim, idx.len()));
    for (j, &i) in idx.iter().enumerate() {
        out.column_mut(j).assign(&vecs.column(i));
    }
    // eigensolvers can return poor invariant subspaces on clustered spectra
    // even when the eigenvector matrix is orthonormal; one explicit projection
    // pass removes any residual component along the frame
    let coeff = conj_t(frame).dot(&out);
    out -= &frame.dot(&coeff);
    orthonormalize(&out, 1e-10)
}

/// Row-major serialized form: separate real and imaginary parts.
#[derive(Serialize, Deserialize)]
pub struct MatrixJson {
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &Array2<C64>) -> Self {
        let n = m.nrows();
        let re = (0..n).map(|i| (0..n).map(|j| m[[i, j]].re).collect()).collect();
        let im = (0..n).map(|i| (0..n).map(|j| m[[i, j]].im).collect()).collect();
        MatrixJson { n, re, im }
    }

    pub fn to_matrix(&self) -> Result<Array2<C64>, Error> {
        let n = self.n;
        if self.re.len() != n || self.im.len() != n
            || self.re.iter().any(|r| r.len() != n)
            || self.im.iter().any(|r| r.len() != n)
        {
            return Err(Error::BadMatrixFile("row lengths do not match n".into()));
        }
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[[i, j]] = C64::new(self.re[i][j], self.im[i][j]);
            }
        }
        Ok(m)
    }
}

pub fn save_matrix(path: impl AsRef<std::path::Path>, m: &Array2<C64>) -> Result<(), Error> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(f), &MatrixJson::from_matrix(m))?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<std::path::Path>) -> Result<Array2<C64>, Error> {
    let f = std::fs::File::open(path)?;
    let mj: MatrixJson = serde_json::from_reader(std::io::BufReader::new(f))?;
    mj.to_matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eig_of_pauli_x_is_plus_minus_one() {
        let m = HMat::new(array![[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]]).unwrap();
        let (vals, _) = m.eig();
        assert_abs_diff_eq!(vals[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.op_norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn apply_fn_squares_eigenvalues() {
        let m = HMat::new(array![[c(0., 0.), c(0., -2.)], [c(0., 2.), c(0., 0.)]]).unwrap();
        let sq = m.apply_fn(|x| x * x);
        // M^2 = 4 I for this matrix
        assert_abs_diff_eq!(sq[[0, 0]].re, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sq[[0, 1]].norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = array![[c(0., 0.), c(1., 0.)], [c(0., 0.), c(0., 0.)]];
        assert!(HMat::new(m).is_err());
    }

    #[test]
    fn op_norm_matches_hand_value() {
        // [[0, 3], [0, 0]] has operator norm 3
        let m = array![[c(0., 0.), c(3., 0.)], [c(0., 0.), c(0., 0.)]];
        assert_abs_diff_eq!(op_norm(&m), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn pauli_commutator_norm() {
        // [sigma_x, sigma_y] = 2i sigma_z, norm 2
        let sx = array![[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]];
        let sy = array![[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]];
        assert_abs_diff_eq!(commutator_norm(&sx, &sy), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn orthonormalize_drops_dependent_column() {
        let cols = array![
            [c(1., 0.), c(2., 0.), c(0., 0.)],
            [c(0., 0.), c(0., 0.), c(1., 0.)]
        ];
        let q = orthonormalize(&cols, 1e-10);
        assert_eq!(q.ncols(), 2);
        let g = conj_t(&q).dot(&q);
        assert_abs_diff_eq!(g[[0, 0]].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[[0, 1]].norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn complement_of_one_vector_in_c2() {
        let frame = array![[c(1., 0.)], [c(0., 0.)]];
        let comp = complement(&frame, 2);
        assert_eq!(comp.ncols(), 1);
        assert_abs_diff_eq!(comp[[0, 0]].norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(comp[[1, 0]].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn matrix_json_roundtrip() {
        let m = array![[c(1., 2.), c(3., -4.)], [c(3., 4.), c(-1., 0.)]];
        let mj = MatrixJson::from_matrix(&m);
        let back = mj.to_matrix().unwrap();
        assert!(m.iter().zip(back.iter()).all(|(a, b)| (a - b).norm() == 0.0));
    }
}
