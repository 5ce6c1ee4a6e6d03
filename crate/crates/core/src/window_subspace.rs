//! Per-interval invariant-subspace construction for a banded Hamiltonian on a
//! finite chain of sites.
//!
//! Given J (block tridiagonal with respect to the site decomposition, norm <= 1)
//! the goal is a subspace W that (1) contains the first site's subspace up to a
//! small residual, (2) is nearly J-invariant, and (3) barely overlaps the last
//! site. W is assembled from smooth spectral windows of the first-site vectors,
//! with a Gram-matrix near-kernel sweep that removes directions along which the
//! window vectors nearly cancel.

use ndarray::{s, Array1, Array2, Axis};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::filters::{window, window_centers};
use crate::spectral::{complement, conj_t, op_norm, orthonormalize, HMat};

/// Knobs of the construction. The defaults differ per driver mode: the block
/// driver favors many narrow windows (deep capture of the interval edge), the
/// chain driver favors fewer windows (smaller invariance residual).
#[derive(Clone, Copy, Debug)]
pub struct SubspaceConfig {
    /// n_win is the largest even integer >= 2 not exceeding L / window_divisor.
    pub window_divisor: f64,
    /// slack in the near-kernel overlap pruning threshold 1/2 + eta
    pub eta: f64,
}

impl SubspaceConfig {
    pub fn block_mode() -> Self {
        SubspaceConfig { window_divisor: 1.0, eta: 0.01 }
    }

    pub fn chain_mode() -> Self {
        SubspaceConfig { window_divisor: 3.0, eta: 0.01 }
    }
}

/// Largest even n_win >= 2 with n_win <= l_sites / divisor.
pub fn choose_n_win(l_sites: usize, divisor: f64) -> usize {
    let raw = (l_sites as f64 / divisor) as usize;
    (raw - raw % 2).max(2)
}

/// One spectral window of the first-site subspace.
pub struct WindowSlot {
    /// center of this window on [-1, 1]
    pub center: f64,
    /// tau = window(J) restricted to the first-site columns
    pub tau: Array2<C64>,
    /// retained eigenvectors of tau† tau (columns, in the first-site domain)
    pub kept: Array2<C64>,
    /// discarded eigenvectors (the projector Z complementary to `kept`)
    pub discarded: Array2<C64>,
    /// orthonormal frame for the window subspace span(tau * kept)
    pub frame: Array2<C64>,
}

pub struct WindowFamily {
    pub n_win: usize,
    pub kappa: f64,
    pub lambda_min: f64,
    pub slots: Vec<WindowSlot>,
}

/// Build the window family: for each center, filter the first-site frame
/// through the window of J and keep the directions whose weight is at least
/// lambda_min = 1/(n_win * L^2).
pub fn build_windows(j: &HMat, d1: usize, l_sites: usize, n_win: usize) -> WindowFamily {
    let (centers, kappa) = window_centers(n_win);
    let lambda_min = 1.0 / (n_win as f64 * (l_sites * l_sites) as f64);
    let slots = centers
        .iter()
        .map(|&c| {
            let filtered = j.apply_fn(|x| window(c, 0.0, kappa, x));
            let tau = filtered.slice(s![.., ..d1]).to_owned();
            let gram = HMat::new(conj_t(&tau).dot(&tau)).expect("tau gram is Hermitian");
            let (vals, vecs) = gram.eig();
            let keep_idx: Vec<usize> =
                (0..d1).filter(|&k| vals[k] >= lambda_min).collect();
            let drop_idx: Vec<usize> =
                (0..d1).filter(|&k| vals[k] < lambda_min).collect();
            let kept = select_columns(vecs, &keep_idx);
            let discarded = select_columns(vecs, &drop_idx);
            let frame = if keep_idx.is_empty() {
                Array2::zeros((j.dim(), 0))
            } else {
                orthonormalize(&tau.dot(&kept), 1e-10)
            };
            WindowSlot { center: c, tau, kept, discarded, frame }
        })
        .collect();
    WindowFamily { n_win, kappa, lambda_min, slots }
}

fn select_columns(m: &Array2<C64>, idx: &[usize]) -> Array2<C64> {
    let mut out = Array2::zeros((m.nrows(), idx.len()));
    for (j, &i) in idx.iter().enumerate() {
        out.column_mut(j).assign(&m.column(i));
    }
    out
}

/// The Gram system of the pooled window frames.
pub struct GramSystem {
    /// all window frame vectors as columns, window by window
    pub frame_map: Array2<C64>,
    /// rho = frame_map† frame_map; block tridiagonal with identity diagonal blocks
    pub rho: HMat,
    /// columns contributed by each window
    pub window_dims: Vec<usize>,
    /// superblock length and count
    pub lb: usize,
    pub n_sb: usize,
    /// flat radius / roll-off of the near-kernel filter, already divided by lb
    pub g_width: f64,
}

pub fn build_gram(fam: &WindowFamily) -> GramSystem {
    let dim = fam.slots.first().map(|s| s.frame.nrows()).unwrap_or(0);
    let window_dims: Vec<usize> = fam.slots.iter().map(|s| s.frame.ncols()).collect();
    let total: usize = window_dims.iter().sum();
    let mut frame_map = Array2::zeros((dim, total));
    let mut col = 0;
    for slot in &fam.slots {
        for c in slot.frame.axis_iter(Axis(1)) {
            frame_map.column_mut(col).assign(&c);
            col += 1;
        }
    }
    let rho = HMat::new(conj_t(&frame_map).dot(&frame_map)).expect("gram is Hermitian");
    // superblocks group lb adjacent windows; lb >= 2 keeps the superblock
    // truncation from splitting near-kernel vectors in half
    let lb = ((fam.n_win as f64).powf(1.0 / 3.0).floor() as usize).max(2);
    let mut n_sb = fam.n_win.div_ceil(lb);
    n_sb += n_sb % 2;
    // near-kernel filter width; capped so the flat region stays inside the
    // spectrum of rho (which lives in [0, 2])
    let g = ((lb as f64 + std::f64::consts::E).ln().powi(2)).min(lb as f64 / 2.0);
    GramSystem { frame_map, rho, window_dims, lb, n_sb, g_width: g / lb as f64 }
}

/// Indices (into the pooled frame) of the windows in superblock `i`.
fn superblock_indices(g: &GramSystem, i: i64) -> Vec<usize> {
    window_range_indices(g, i * g.lb as i64, (i + 1) * g.lb as i64)
}

/// Indices of the windows centered on superblock boundary `i` (half-shifted).
fn centered_indices(g: &GramSystem, i: i64) -> Vec<usize> {
    let lo = (i as f64 - 0.5) * g.lb as f64;
    let hi = (i as f64 + 0.5) * g.lb as f64;
    let mut out = Vec::new();
    let mut col = 0;
    for (w, &d) in g.window_dims.iter().enumerate() {
        if (w as f64) >= lo && (w as f64) < hi {
            out.extend(col..col + d);
        }
        col += d;
    }
    out
}

fn window_range_indices(g: &GramSystem, lo: i64, hi: i64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut col = 0;
    for (w, &d) in g.window_dims.iter().enumerate() {
        if (w as i64) >= lo && (w as i64) < hi {
            out.extend(col..col + d);
        }
        col += d;
    }
    out
}

/// Near-kernel spaces of rho, one per superblock boundary: filter rho through
/// g0(lambda) = window(0, gw, gw, sqrt(lambda)), compress to the boundary
/// windows, keep eigendirections above lambda0 = exp(-sqrt(lb)), and project
/// onto the two adjacent superblocks.
pub fn near_kernel_spaces(g: &GramSystem) -> Vec<Array2<C64>> {
    let r = g.frame_map.ncols();
    let gw = g.g_width;
    let o0 = g.rho.apply_fn(|lam| window(0.0, gw, gw, lam.max(0.0).sqrt()));
    let o2 = o0.dot(&o0);
    let lambda0 = (-(g.lb as f64).sqrt()).exp();
    let mut out = Vec::new();
    for i in 0..=(g.n_sb as i64) {
        let ai = centered_indices(g, i);
        if ai.is_empty() {
            out.push(Array2::zeros((r, 0)));
            continue;
        }
        // compression of O0^2 to the boundary windows
        let mut m = Array2::zeros((ai.len(), ai.len()));
        for (a, &p) in ai.iter().enumerate() {
            for (b, &q) in ai.iter().enumerate() {
                m[[a, b]] = o2[[p, q]];
            }
        }
        let (vals, vecs) = m.eigh(UPLO::Lower).expect("near-kernel compression eig failed");
        let kept: Vec<usize> = (0..ai.len()).filter(|&k| vals[k] >= lambda0).collect();
        if kept.is_empty() {
            out.push(Array2::zeros((r, 0)));
            continue;
        }
        let support: Vec<usize> = {
            let mut s = superblock_indices(g, i - 1);
            s.extend(superblock_indices(g, i));
            s
        };
        let mut cols = Array2::zeros((r, kept.len()));
        for (c, &k) in kept.iter().enumerate() {
            // x lives on the boundary windows; apply O0 then truncate to the
            // two adjacent superblocks
            let mut x = Array1::<C64>::zeros(r);
            for (a, &p) in ai.iter().enumerate() {
                x[p] = vecs[[a, k]];
            }
            let ox = o0.dot(&x);
            let mut y = Array1::<C64>::zeros(r);
            for &p in &support {
                y[p] = ox[p];
            }
            cols.column_mut(c).assign(&y);
        }
        out.push(orthonormalize(&cols, 1e-10));
    }
    out
}

/// Keep the directions of `n_frame` whose overlap with the projector onto
/// `q_frame` is at most 1/2 + eta; the retained directions are mutually
/// orthogonal in both frames.
pub fn jordan_prune(n_frame: &Array2<C64>, q_frame: &Array2<C64>, eta: f64) -> Array2<C64> {
    if n_frame.ncols() == 0 || q_frame.ncols() == 0 {
        return n_frame.clone();
    }
    let qn = conj_t(q_frame).dot(n_frame);
    let m = conj_t(&qn).dot(&qn); // N† Q N on the range of the frame
    let (vals, vecs) = m.eigh(UPLO::Lower).expect("pruning compression eig failed");
    let kept: Vec<usize> = (0..n_frame.ncols()).filter(|&k| vals[k] <= 0.5 + eta).collect();
    if kept.is_empty() {
        return Array2::zeros((n_frame.nrows(), 0));
    }
    orthonormalize(&n_frame.dot(&select_columns(&vecs, &kept)), 1e-10)
}

/// Diagnostics of one interval's construction, serialized into run reports.
#[derive(Clone, Debug, Serialize)]
pub struct WindowAudit {
    pub l_sites: usize,
    pub n_win: usize,
    pub lb: usize,
    pub n_sb: usize,
    pub lambda_min: f64,
    pub kappa: f64,
    pub dim_frame: usize,
    pub dim_w: usize,
    /// worst residual of a first-site basis vector outside W
    pub eps_capture: f64,
    /// norm of (1-P) J P for P the projector onto W
    pub eps_invariance: f64,
    /// norm of the restriction of P to the last site
    pub eps_far_overlap: f64,
    /// min eigenvalue of rho compressed to the retained Gram directions
    pub rho_min_eig_u: Option<f64>,
    /// max over windows of ||(J - center) restricted to the window frame||,
    /// bounded by kappa
    pub window_eig_dev: f64,
    /// measured residual of the window-sum reconstruction of the first site,
    /// squared norm; bounded by 2 n_win lambda_min
    pub capture_chain_residual_sq: f64,
}

/// Full construction. `site_dims` gives the dimension of each site of the
/// chain in order; J must act on the direct sum of the sites with norm <= 1.
pub fn build_w(j: &HMat, site_dims: &[usize], cfg: &SubspaceConfig) -> (Array2<C64>, WindowAudit) {
    let l_sites = site_dims.len();
    let d1 = site_dims[0];
    let dim = j.dim();
    assert!(l_sites >= 2, "need at least two sites");
    assert_eq!(site_dims.iter().sum::<usize>(), dim, "site dims must cover J");

    let n_win = choose_n_win(l_sites, cfg.window_divisor);
    let fam = build_windows(j, d1, l_sites, n_win);
    let gram = build_gram(&fam);
    let r = gram.frame_map.ncols();

    let w = if r == 0 {
        Array2::zeros((dim, 0))
    } else {
        let spaces = near_kernel_spaces(&gram);
        // odd-boundary sweep: prune each odd space against its even neighbors
        // and the previous pruned odd space
        let mut pruned: Vec<Option<Array2<C64>>> = vec![None; spaces.len()];
        let mut i = 1;
        while i < spaces.len() {
            let mut q_cols: Vec<Array2<C64>> = Vec::new();
            if i + 1 < spaces.len() {
                q_cols.push(spaces[i + 1].clone());
            }
            q_cols.push(spaces[i - 1].clone());
            if i >= 2 {
                if let Some(p) = &pruned[i - 2] {
                    q_cols.push(p.clone());
                }
            }
            let q = orthonormalize(&hstack(r, &q_cols), 1e-10);
            pruned[i] = Some(jordan_prune(&spaces[i], &q, cfg.eta));
            i += 2;
        }
        let mut discard_cols: Vec<Array2<C64>> = Vec::new();
        for (i, sp) in spaces.iter().enumerate() {
            if i % 2 == 0 {
                discard_cols.push(sp.clone());
            } else if let Some(p) = &pruned[i] {
                discard_cols.push(p.clone());
            }
        }
        let u_perp = orthonormalize(&hstack(r, &discard_cols), 1e-10);
        let u = complement(&u_perp, r);
        if u.ncols() == 0 {
            Array2::zeros((dim, 0))
        } else {
            orthonormalize(&gram.frame_map.dot(&u), 1e-10)
        }
    };

    let audit = measure_audit(j, site_dims, &fam, &gram, &w);
    (w, audit)
}

fn hstack(rows: usize, parts: &[Array2<C64>]) -> Array2<C64> {
    let total: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Array2::zeros((rows, total));
    let mut col = 0;
    for p in parts {
        for c in p.axis_iter(Axis(1)) {
            out.column_mut(col).assign(&c);
            col += 1;
        }
    }
    out
}

fn measure_audit(
    j: &HMat,
    site_dims: &[usize],
    fam: &WindowFamily,
    gram: &GramSystem,
    w: &Array2<C64>,
) -> WindowAudit {
    let dim = j.dim();
    let d1 = site_dims[0];
    let dl = *site_dims.last().unwrap();
    let last_start = dim - dl;

    // eps_capture: worst first-site basis vector residual off W
    let mut eps_capture: f64 = if w.ncols() == 0 { 1.0 } else { 0.0 };
    if w.ncols() > 0 {
        for k in 0..d1 {
            let mut v = Array1::<C64>::zeros(dim);
            v[k] = C64::new(1.0, 0.0);
            let coeff = conj_t(w).dot(&v);
            let proj = w.dot(&coeff);
            let res = (&v - &proj).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            eps_capture = eps_capture.max(res);
        }
    }

    // eps_invariance: ||(1-P) J P||
    let eps_invariance = if w.ncols() == 0 {
        0.0
    } else {
        let jw = j.matrix().dot(w);
        let inside = w.dot(&conj_t(w).dot(&jw));
        op_norm(&(jw - inside))
    };

    // eps_far_overlap: ||P restricted to the last site||
    let eps_far_overlap = if w.ncols() == 0 {
        0.0
    } else {
        let tail = w.slice(s![last_start.., ..]).to_owned();
        op_norm(&tail)
    };

    // window eigenvalue deviation: ||(J - center) X_i|| <= kappa
    let mut window_eig_dev = 0.0_f64;
    for slot in &fam.slots {
        if slot.frame.ncols() == 0 {
            continue;
        }
        let mut shifted = j.matrix().dot(&slot.frame);
        shifted -= &slot.frame.mapv(|z| z * C64::new(slot.center, 0.0));
        window_eig_dev = window_eig_dev.max(op_norm(&shifted));
    }

    // capture chain residual: |v - sum_i tau_i (1 - Z_i) x|^2 over first-site
    // basis vectors x (v = the basis vector itself, since the windows sum to 1)
    let mut chain_sq = 0.0_f64;
    for k in 0..d1 {
        let mut recon = Array1::<C64>::zeros(dim);
        for slot in &fam.slots {
            if slot.kept.ncols() == 0 {
                continue;
            }
            // (1 - Z) x = kept kept† x
            let x = slot.kept.row(k).mapv(|z| z.conj());
            let dom = slot.kept.dot(&x);
            recon += &slot.tau.dot(&dom);
        }
        let mut v = Array1::<C64>::zeros(dim);
        v[k] = C64::new(1.0, 0.0);
        let res: f64 = (&v - &recon).iter().map(|z| z.norm_sqr()).sum();
        chain_sq = chain_sq.max(res);
    }

    // min eigenvalue of rho compressed to the span actually used for W
    let rho_min_eig_u = if w.ncols() == 0 || gram.frame_map.ncols() == 0 {
        None
    } else {
        // recover U as the coefficient frame of W in the pooled windows:
        // rho-compression via the pseudo-solve frame_map† W
        let coeffs = conj_t(&gram.frame_map).dot(w);
        let q = orthonormalize(&coeffs, 1e-10);
        if q.ncols() == 0 {
            None
        } else {
            let comp = conj_t(&q).dot(gram.rho.matrix()).dot(&q);
            let (vals, _) = comp.eigh(UPLO::Lower).expect("rho compression eig failed");
            vals.iter().cloned().fold(f64::INFINITY, f64::min).into()
        }
    };

    WindowAudit {
        l_sites: site_dims.len(),
        n_win: fam.n_win,
        lb: gram.lb,
        n_sb: gram.n_sb,
        lambda_min: fam.lambda_min,
        kappa: fam.kappa,
        dim_frame: gram.frame_map.ncols(),
        dim_w: w.ncols(),
        eps_capture,
        eps_invariance,
        eps_far_overlap,
        rho_min_eig_u,
        window_eig_dev,
        capture_chain_residual_sq: chain_sq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::HMat;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn chain_j(l: usize) -> HMat {
        let mut m = Array2::zeros((l, l));
        for i in 0..l - 1 {
            m[[i, i + 1]] = c(0.5, 0.0);
            m[[i + 1, i]] = c(0.5, 0.0);
        }
        HMat::new(m).unwrap()
    }

    #[test]
    fn n_win_choices() {
        assert_eq!(choose_n_win(11, 1.0), 10);
        assert_eq!(choose_n_win(16, 3.0), 4);
        assert_eq!(choose_n_win(4, 3.0), 2);
    }

    #[test]
    fn windows_far_apart_are_orthogonal() {
        let j = chain_j(32);
        let fam = build_windows(&j, 1, 32, choose_n_win(32, 3.0));
        for a in 0..fam.slots.len() {
            for b in 0..fam.slots.len() {
                if a + 1 < b && fam.slots[a].frame.ncols() > 0 && fam.slots[b].frame.ncols() > 0 {
                    let ip = conj_t(&fam.slots[a].frame).dot(&fam.slots[b].frame);
                    assert!(op_norm(&ip) <= 1e-10, "windows {a},{b} overlap");
                }
            }
        }
    }

    #[test]
    fn zero_j_retains_only_central_windows() {
        let j = HMat::new(Array2::zeros((8, 8))).unwrap();
        let fam = build_windows(&j, 1, 8, 4);
        // only windows whose filter is nonzero at 0 retain anything
        for slot in &fam.slots {
            let at_zero = window(slot.center, 0.0, fam.kappa, 0.0);
            let has = slot.frame.ncols() > 0;
            assert_eq!(has, at_zero * at_zero >= fam.lambda_min);
        }
    }

    #[test]
    fn gram_is_block_tridiagonal_with_unit_diagonal() {
        let j = chain_j(24);
        let fam = build_windows(&j, 1, 24, choose_n_win(24, 3.0));
        let g = build_gram(&fam);
        let rho = g.rho.matrix();
        let mut col = 0;
        for &d in &g.window_dims {
            for a in 0..d {
                for b in 0..d {
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((rho[[col + a, col + b]] - c(expect, 0.0)).norm() < 1e-10);
                }
            }
            col += d;
        }
        // PSD with eigenvalues in [0, 2] (adjacent-only overlaps)
        let (vals, _) = g.rho.eig();
        assert!(vals.iter().all(|&v| (-1e-10..=2.0 + 1e-10).contains(&v)));
    }

    #[test]
    fn jordan_prune_hand_cases() {
        // Q orthogonal to N: keep everything
        let n = array![[c(1., 0.)], [c(0., 0.)]];
        let q = array![[c(0., 0.)], [c(1., 0.)]];
        assert_eq!(jordan_prune(&n, &q, 0.01).ncols(), 1);
        // N inside Q: drop everything
        assert_eq!(jordan_prune(&n, &n, 0.01).ncols(), 0);
        // 45-degree case: overlap exactly 1/2, kept under the 1/2 + eta rule
        let inv = 1.0 / 2.0_f64.sqrt();
        let q45 = array![[c(inv, 0.)], [c(inv, 0.)]];
        assert_eq!(jordan_prune(&n, &q45, 0.01).ncols(), 1);
    }

    #[test]
    fn diagonal_j_with_separated_eigenvalues_localizes() {
        // J diagonal: windows of the first coordinate are exact; W contains it
        let j = HMat::new(Array2::from_diag(
            &array![-0.8, -0.2, 0.1, 0.4, 0.6, 0.9].mapv(|x: f64| c(x, 0.0)),
        ))
        .unwrap();
        let (w, audit) = build_w(&j, &[1, 1, 1, 1, 1, 1], &SubspaceConfig::chain_mode());
        assert!(w.ncols() >= 1);
        assert!(audit.eps_capture <= 1e-6, "eps_capture {}", audit.eps_capture);
        assert!(audit.eps_invariance <= 1e-6);
        assert!(audit.eps_far_overlap <= 1e-6);
    }

    #[test]
    fn chain_claims_hold_and_shrink() {
        let cfg = SubspaceConfig::chain_mode();
        let mut prev_inv = f64::INFINITY;
        for l in [16usize, 32, 64] {
            let j = chain_j(l);
            let dims = vec![1usize; l];
            let (_w, audit) = build_w(&j, &dims, &cfg);
            assert!(audit.capture_chain_residual_sq <= 2.0 / (l * l) as f64 + 1e-10);
            assert!(audit.window_eig_dev <= audit.kappa + 1e-10);
            assert!(audit.eps_invariance <= 1.0);
            assert!(audit.eps_invariance < prev_inv + 0.05);
            prev_inv = audit.eps_invariance;
            if let Some(me) = audit.rho_min_eig_u {
                assert!(me > 0.0, "rho min eig on retained span {me}");
            }
        }
    }
}
