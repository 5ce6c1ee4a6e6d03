//! Top-level driver: split the rounded spectrum into intervals, build the
//! per-interval subspaces, assemble the new basis, and emit an exactly
//! commuting pair with a full diagnostic report.

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::reduction::{smooth_truncate, BlockPartition};
use crate::spectral::{commutator_norm, complement, conj_t, op_norm, HMat};
use crate::window_subspace::{build_w, SubspaceConfig, WindowAudit};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Auto,
    Block,
    Tridiag,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveConfig {
    pub mode: Mode,
    /// bandwidth floor used when the commutator is numerically zero
    pub delta_floor: f64,
    /// per-interval subspace knobs; None = per-mode default
    pub subspace: Option<SubspaceConfig>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { mode: Mode::Auto, delta_floor: 1e-3, subspace: None }
    }
}

/// Everything the solver reports besides the basis itself.
#[derive(Clone, Debug, Serialize)]
pub struct PairReport {
    pub dim: usize,
    pub mode: Mode,
    pub delta: f64,
    /// bandwidth / grid spacing used for the reduction
    pub delta_band: f64,
    pub n_cut: usize,
    pub err_a: f64,
    pub err_b: f64,
    /// norm of the block-off-diagonal part of H in the new basis
    pub offdiag_norm: f64,
    pub commutator_residual: f64,
    /// inputs are divided by this factor when a norm exceeds 1
    pub scale_factor: f64,
    pub intervals: Vec<Option<WindowAudit>>,
}

/// The commuting pair in a common eigenbasis: A' = V diag(a) V†, B' = V diag(b) V†.
pub struct PairResult {
    pub v: Array2<C64>,
    pub a_vals: Array1<f64>,
    pub b_vals: Array1<f64>,
    pub report: PairReport,
}

impl PairResult {
    pub fn a_matrix(&self) -> Array2<C64> {
        reconstruct(&self.v, &self.a_vals)
    }

    pub fn b_matrix(&self) -> Array2<C64> {
        reconstruct(&self.v, &self.b_vals)
    }
}

fn reconstruct(v: &Array2<C64>, d: &Array1<f64>) -> Array2<C64> {
    let mut scaled = v.clone();
    for (mut col, &x) in scaled.axis_iter_mut(Axis(1)).zip(d.iter()) {
        col.mapv_inplace(|z| z * x);
    }
    scaled.dot(&conj_t(v))
}

/// Construct an exactly commuting pair near (a, b).
pub fn solve(a: &Array2<C64>, b: &Array2<C64>, cfg: &SolveConfig) -> Result<PairResult, Error> {
    let dim = a.nrows();
    if b.nrows() != dim || b.ncols() != dim || a.ncols() != dim {
        return Err(Error::NotSquare(a.nrows(), b.ncols()));
    }
    // rescale so both norms are <= 1
    let a_h = HMat::new(a.clone())?;
    let b_h = HMat::new(b.clone())?;
    let scale = a_h.op_norm().max(b_h.op_norm()).max(1.0);
    let (a_s, b_s) = if scale > 1.0 {
        (a.mapv(|z| z / scale), b.mapv(|z| z / scale))
    } else {
        (a.clone(), b.clone())
    };
    let a_s = HMat::new(a_s)?;
    let b_s = HMat::new(b_s)?;
    let delta = commutator_norm(a_s.matrix(), b_s.matrix());

    // detect the tridiagonal fast path
    let (x, v_b) = b_s.eig();
    let a_eig = conj_t(v_b).dot(a_s.matrix()).dot(v_b);
    let min_gap = x
        .iter()
        .zip(x.iter().skip(1))
        .map(|(p, q)| q - p)
        .filter(|g| *g > 1e-12)
        .fold(f64::INFINITY, f64::min);
    let bandable = {
        let mut ok = min_gap.is_finite();
        if ok {
            'outer: for i in 0..dim {
                for j in i + 2..dim {
                    if a_eig[[i, j]].norm() > 1e-10 {
                        ok = false;
                        break 'outer;
                    }
                }
            }
        }
        ok
    };
    let mode = match cfg.mode {
        Mode::Auto => {
            if bandable {
                Mode::Tridiag
            } else {
                Mode::Block
            }
        }
        Mode::Tridiag if !bandable => return Err(Error::ModeMismatch),
        m => m,
    };

    // reduction: H in b's eigenbasis, grid spacing, interval count
    let trivial = delta < 1e-14;
    let (h, delta_band, n_cut) = match mode {
        Mode::Tridiag => {
            let d = min_gap.clamp(1e-6, 1.0);
            let mut n = (d.powf(-0.5)).ceil() as usize;
            n += n % 2; // even count aligns an interval edge with the spectrum midpoint
            (a_eig.clone(), d, n.clamp(1, dim))
        }
        _ => {
            let d = if trivial { cfg.delta_floor } else { delta.powf(0.8) }.clamp(1e-6, 1.0);
            let n = (d.powf(-0.25)).ceil() as usize;
            let (h, _x, _v) = smooth_truncate(a_s.matrix(), &b_s, d);
            (h, d, n.clamp(1, dim))
        }
    };
    let partition = BlockPartition::new(x, delta_band)?;

    // assign grid blocks to intervals [-1 + 2(i-1)/n_cut, -1 + 2i/n_cut);
    // the first and last interval absorb out-of-range rounded values
    let edges: Vec<f64> = (0..=n_cut).map(|i| -1.0 + 2.0 * i as f64 / n_cut as f64).collect();
    let mut interval_blocks: Vec<Vec<usize>> = vec![Vec::new(); n_cut + 1]; // 1-based
    for (bi, blk) in partition.blocks.iter().enumerate() {
        let mut placed = false;
        for i in 1..=n_cut {
            let in_low = i == 1 || blk.value >= edges[i - 1] - 1e-12;
            let in_high = i == n_cut || blk.value < edges[i] - 1e-12;
            if in_low && in_high {
                interval_blocks[i].push(bi);
                placed = true;
                break;
            }
        }
        if !placed {
            interval_blocks[n_cut].push(bi);
        }
    }

    // per-interval subspaces (parallel; intervals are independent)
    let sub_cfg = cfg.subspace.unwrap_or(match mode {
        Mode::Tridiag => SubspaceConfig::chain_mode(),
        _ => SubspaceConfig::block_mode(),
    });
    let per_interval: Vec<(Vec<usize>, Array2<C64>, Option<WindowAudit>)> = (1..=n_cut)
        .into_par_iter()
        .map(|i| {
            let idx: Vec<usize> = interval_blocks[i]
                .iter()
                .flat_map(|&bi| partition.blocks[bi].indices.iter().copied())
                .collect();
            let l_sites = interval_blocks[i].len();
            if l_sites < 4 || idx.len() < 4 {
                // too small to split; the whole interval forms one block
                return (idx.clone(), Array2::eye(idx.len()), None);
            }
            let mut j_local = Array2::zeros((idx.len(), idx.len()));
            for (r, &p) in idx.iter().enumerate() {
                for (c, &q) in idx.iter().enumerate() {
                    j_local[[r, c]] = h[[p, q]];
                }
            }
            let j_h = HMat::new(j_local).expect("interval compression is Hermitian");
            let nrm = j_h.op_norm();
            let j_n = if nrm > 1.0 {
                HMat::new(j_h.matrix().mapv(|z| z / nrm)).unwrap()
            } else {
                j_h
            };
            let site_dims: Vec<usize> = interval_blocks[i]
                .iter()
                .map(|&bi| partition.blocks[bi].indices.len())
                .collect();
            let (w, audit) = build_w(&j_n, &site_dims, &sub_cfg);
            (idx, w, Some(audit))
        })
        .collect();

    // assemble the new basis: block i holds W_{i+1} and the complement of W_i
    // inside interval i; block 0 = W_1, block n_cut = complement of W_{n_cut}
    let mut v_blocks: Vec<Array2<C64>> = Vec::with_capacity(n_cut + 1);
    for i in 0..=n_cut {
        let mut cols: Vec<Array2<C64>> = Vec::new();
        if i + 1 <= n_cut {
            let (idx, w, _) = &per_interval[i]; // interval i+1 (0-based vec)
            if w.ncols() > 0 {
                cols.push(embed(dim, idx, w));
            }
        }
        if i >= 1 {
            let (idx, w, _) = &per_interval[i - 1]; // interval i
            if !idx.is_empty() {
                let comp = complement(w, idx.len());
                if comp.ncols() > 0 {
                    cols.push(embed(dim, idx, &comp));
                }
            }
        }
        let total: usize = cols.iter().map(|c| c.ncols()).sum();
        let mut blk = Array2::zeros((dim, total));
        let mut at = 0;
        for c in &cols {
            for col in c.axis_iter(Axis(1)) {
                blk.column_mut(at).assign(&col);
                at += 1;
            }
        }
        v_blocks.push(blk);
    }
    let assembled: usize = v_blocks.iter().map(|b| b.ncols()).sum();
    if assembled != dim {
        return Err(Error::AssemblyRank { expected: dim, got: assembled });
    }

    // finalize: compress H to the new basis, keep the block-diagonal part,
    // eigendecompose each block so the output is a common eigenbasis
    let mut v_new = Array2::zeros((dim, dim));
    let mut at = 0;
    for blk in &v_blocks {
        for col in blk.axis_iter(Axis(1)) {
            v_new.column_mut(at).assign(&col);
            at += 1;
        }
    }
    let h_new = conj_t(&v_new).dot(&h).dot(&v_new);
    let mut offdiag = h_new.clone();
    let mut a_vals = Array1::zeros(dim);
    let mut b_vals = Array1::zeros(dim);
    let mut u_rot: Array2<C64> = Array2::eye(dim);
    let mut start = 0;
    for (i, blk) in v_blocks.iter().enumerate() {
        let sz = blk.ncols();
        if sz > 0 {
            let end = start + sz;
            let sub = h_new.slice(ndarray::s![start..end, start..end]).to_owned();
            let sub_h = HMat::new(crate::spectral::symmetrize(&sub))
                .expect("diagonal block is Hermitian");
            let (vals, vecs) = sub_h.eig();
            for k in 0..sz {
                a_vals[start + k] = vals[k];
                b_vals[start + k] = -1.0 + 2.0 * i as f64 / n_cut as f64;
            }
            u_rot.slice_mut(ndarray::s![start..end, start..end]).assign(vecs);
            offdiag
                .slice_mut(ndarray::s![start..end, start..end])
                .fill(C64::new(0.0, 0.0));
            start = end;
        }
    }
    let offdiag_norm = op_norm(&offdiag);
    let v_full = v_b.dot(&v_new).dot(&u_rot);

    let a_prime = reconstruct(&v_full, &a_vals);
    let b_prime = reconstruct(&v_full, &b_vals);
    let err_a = op_norm(&(&a_prime - a_s.matrix()));
    let err_b = op_norm(&(&b_prime - b_s.matrix()));
    let comm = commutator_norm(&a_prime, &b_prime);

    let report = PairReport {
        dim,
        mode,
        delta,
        delta_band,
        n_cut,
        err_a,
        err_b,
        offdiag_norm,
        commutator_residual: comm,
        scale_factor: scale,
        intervals: per_interval.into_iter().map(|(_, _, aud)| aud).collect(),
    };
    Ok(PairResult { v: v_full, a_vals, b_vals, report })
}

/// Place the columns of `w` (indexed within `idx`) into the full space.
fn embed(dim: usize, idx: &[usize], w: &Array2<C64>) -> Array2<C64> {
    let mut out = Array2::zeros((dim, w.ncols()));
    for (r, &p) in idx.iter().enumerate() {
        for c in 0..w.ncols() {
            out[[p, c]] = w[[r, c]];
        }
    }
    out
}
