//! Reduction of an almost-commuting pair to a banded one-dimensional problem:
//! smooth truncation of A in B's eigenbasis, rounding of B to a uniform grid,
//! and the locality (leakage) bound for the resulting banded Hamiltonian.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::spectral::{conj_t, HMat};
use crate::Error;

/// Frequency profile of the truncation kernel: (1 - om^2)^3 on [-1, 1], 0 outside.
pub fn band_profile(om: f64) -> f64 {
    if om.abs() < 1.0 {
        let u = 1.0 - om * om;
        u * u * u
    } else {
        0.0
    }
}

/// Smoothly truncate `a` in the eigenbasis of `b` to bandwidth `delta_band`:
/// H_jk = A_jk * profile((x_j - x_k)/delta_band), where x are b's eigenvalues.
///
/// Returns (H in b's eigenbasis, eigenvalues x ascending, eigenvector matrix V);
/// the original-basis operator is V H V†. H commutes with any function of b up
/// to the commutator of A itself, and ||A - V H V†|| <= c0 * delta / delta_band
/// with c0 the kernel moment.
pub fn smooth_truncate(a: &Array2<C64>, b: &HMat, delta_band: f64) -> (Array2<C64>, Array1<f64>, Array2<C64>) {
    let (x, v) = b.eig();
    let a_eig = conj_t(v).dot(a).dot(v);
    let n = a_eig.nrows();
    let mut h = a_eig;
    for i in 0..n {
        for j in 0..n {
            let w = band_profile((x[i] - x[j]) / delta_band);
            h[[i, j]] *= w;
        }
    }
    // profile is even, so Hermiticity is preserved exactly up to rounding
    (h, x.clone(), v.clone())
}

/// One grid block of the rounded operator: all eigenvectors of b whose
/// eigenvalue rounds to the same grid point.
#[derive(Clone, Debug)]
pub struct GridBlock {
    /// grid value delta * round(x/delta), shared by the whole block
    pub value: f64,
    /// indices into the ascending eigenbasis of b
    pub indices: Vec<usize>,
}

/// Rounding of b's spectrum to a uniform grid of spacing `delta_grid`:
/// Q(x) = delta * floor(x/delta + 1/2) (ties round up). The blocks are the
/// "sites" of the one-dimensional chain; ||X - B|| <= delta_grid / 2.
#[derive(Clone, Debug)]
pub struct BlockPartition {
    pub delta_grid: f64,
    pub blocks: Vec<GridBlock>,
}

impl BlockPartition {
    pub fn new(x: &Array1<f64>, delta_grid: f64) -> Result<Self, Error> {
        if !(delta_grid > 0.0) {
            return Err(Error::BadParameter(format!("grid spacing {delta_grid} must be positive")));
        }
        let mut blocks: Vec<GridBlock> = Vec::new();
        for (i, &xi) in x.iter().enumerate() {
            let q = delta_grid * (xi / delta_grid + 0.5).floor();
            match blocks.last_mut() {
                Some(blk) if (blk.value - q).abs() < 1e-9 * delta_grid.max(1.0) => {
                    blk.indices.push(i)
                }
                _ => blocks.push(GridBlock { value: q, indices: vec![i] }),
            }
        }
        Ok(BlockPartition { delta_grid, blocks })
    }

    /// Rounded eigenvalues in eigenbasis order.
    pub fn rounded_values(&self, dim: usize) -> Array1<f64> {
        let mut out = Array1::zeros(dim);
        for blk in &self.blocks {
            for &i in &blk.indices {
                out[i] = blk.value;
            }
        }
        out
    }

    /// max |Q(x_i) - x_i|, which is at most delta_grid / 2.
    pub fn rounding_error(&self, x: &Array1<f64>) -> f64 {
        let mut worst = 0.0_f64;
        for blk in &self.blocks {
            for &i in &blk.indices {
                worst = worst.max((blk.value - x[i]).abs());
            }
        }
        worst
    }
}

/// Leakage of a banded Hamiltonian across a spectral gap under time evolution:
/// for `v` supported on positions `s1` (eigenvalue set of the position operator)
/// and the projector onto positions `s2`, returns ||P(s2) exp(-iHt) P(s1)||.
///
/// For ||H|| <= 1 with bandwidth `delta_band` in the positions, the leakage is
/// at most exp(-dist/delta_band) whenever |t| <= dist / (e^2 * delta_band).
pub fn lr_leakage(h: &HMat, t: f64, s1: &[usize], s2: &[usize]) -> f64 {
    let (vals, vecs) = h.eig();
    let n = h.dim();
    // U = exp(-iHt) columns restricted to s1, rows restricted to s2
    let vh = conj_t(vecs);
    let mut phases = Array2::zeros((n, n));
    for k in 0..n {
        phases[[k, k]] = C64::from_polar(1.0, -vals[k] * t);
    }
    let u = vecs.dot(&phases).dot(&vh);
    let mut sub = Array2::zeros((s2.len(), s1.len()));
    for (r, &i) in s2.iter().enumerate() {
        for (c, &j) in s1.iter().enumerate() {
            sub[[r, c]] = u[[i, j]];
        }
    }
    crate::spectral::op_norm(&sub)
}

/// The locality bound itself, for reporting alongside the measurement.
pub fn lr_bound(dist: f64, delta_band: f64) -> f64 {
    (-dist / delta_band).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{commutator_norm, op_norm};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn band_profile_endpoints() {
        assert_abs_diff_eq!(band_profile(0.0), 1.0);
        assert_abs_diff_eq!(band_profile(1.0), 0.0);
        assert_abs_diff_eq!(band_profile(0.5), 0.421875); // (3/4)^3
    }

    #[test]
    fn smooth_truncate_keeps_commuting_pair_intact() {
        // if [A, B] = 0 and the bandwidth exceeds nothing, H keeps only
        // the diagonal entries of A in B's eigenbasis when all gaps >= band
        let a = array![[c(2., 0.), c(0., 0.)], [c(0., 0.), c(5., 0.)]];
        let b = HMat::new(array![[c(0., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]]).unwrap();
        let (h, _x, v) = smooth_truncate(&a, &b, 0.5);
        let back = v.dot(&h).dot(&conj_t(&v));
        assert!(op_norm(&(back - a)) < 1e-12);
    }

    #[test]
    fn truncation_error_within_kernel_bound() {
        // small random-ish pair, fixed entries
        let a = array![
            [c(0.2, 0.), c(0.3, 0.1), c(0., 0.)],
            [c(0.3, -0.1), c(-0.1, 0.), c(0.2, 0.2)],
            [c(0., 0.), c(0.2, -0.2), c(0.4, 0.)]
        ];
        let b = HMat::new(array![
            [c(0.0, 0.), c(0., 0.), c(0., 0.)],
            [c(0., 0.), c(0.35, 0.), c(0., 0.)],
            [c(0., 0.), c(0., 0.), c(0.9, 0.)]
        ])
        .unwrap();
        let delta = commutator_norm(&a, b.matrix());
        let band = 0.4;
        let (h, _x, v) = smooth_truncate(&a, &b, band);
        let back = v.dot(&h).dot(&conj_t(&v));
        let err = op_norm(&(back - &a));
        assert!(err <= crate::filters::kernel_moment() * delta / band + 1e-9);
        // bandwidth property: entries across a gap >= band vanish
        assert_abs_diff_eq!(h[[0, 2]].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn grid_rounding_half_tie_rounds_up() {
        let x = array![0.5];
        let p = BlockPartition::new(&x, 1.0).unwrap();
        assert_abs_diff_eq!(p.blocks[0].value, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn grid_rounding_error_at_most_half_spacing() {
        let x = array![-0.9, -0.3, 0.1, 0.1001, 0.74];
        let p = BlockPartition::new(&x, 0.2).unwrap();
        assert!(p.rounding_error(&x) <= 0.1 + 1e-12);
        // 0.1 and 0.1001 share a block
        assert!(p.blocks.iter().any(|b| b.indices.len() == 2));
    }

    #[test]
    fn leakage_obeys_locality_bound_on_a_small_chain() {
        // tridiagonal hopping chain with unit-spaced positions, bandwidth 1.5
        let n = 24;
        let mut m = Array2::zeros((n, n));
        for i in 0..n - 1 {
            m[[i, i + 1]] = c(0.5, 0.0);
            m[[i + 1, i]] = c(0.5, 0.0);
        }
        let h = HMat::new(m).unwrap();
        let band: f64 = 1.5;
        let dist = 8.0;
        let t = dist / (std::f64::consts::E.powi(2) * band);
        let leak = lr_leakage(&h, t, &[0, 1], &[20, 21, 22, 23]);
        assert!(leak <= lr_bound(dist, band), "leak {leak} bound {}", lr_bound(dist, band));
    }
}
