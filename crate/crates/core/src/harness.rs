//! Instance generators and the scaling-study driver. All randomness is
//! seeded explicitly, so every generated instance is reproducible.

use std::time::Instant;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{solve, SolveConfig};
use crate::spectral::{load_matrix, op_norm, symmetrize};
use crate::Error;

/// Hopping chain: constant off-diagonal couplings 1/2 (so the norm stays
/// below 1) against the position matrix diag(1/n, 2/n, ..., 1).
pub fn uniform_chain(n: usize) -> (Array2<C64>, Array2<C64>) {
    let mut a = Array2::<C64>::zeros((n, n));
    for j in 0..n.saturating_sub(1) {
        a[[j, j + 1]] = C64::new(0.5, 0.0);
        a[[j + 1, j]] = C64::new(0.5, 0.0);
    }
    let b = Array2::from_diag(
        &Array1::from_iter((1..=n).map(|j| C64::new(j as f64 / n as f64, 0.0))),
    );
    (a, b)
}

/// Normalized angular-momentum operators (S_x/S, S_y/S, S_z/S) for total
/// spin s; s may be a half-integer. All three have operator norm 1 and
/// pairwise commutators of norm 1/s.
pub fn spin_operators(s: f64) -> (Array2<C64>, Array2<C64>, Array2<C64>) {
    let d = (2.0 * s).round() as usize + 1;
    assert!(
        d >= 2 && ((2.0 * s) - (2.0 * s).round()).abs() < 1e-9,
        "2s must be a positive integer, got s = {s}"
    );
    let m: Vec<f64> = (0..d).map(|k| s - k as f64).collect();
    let mut sp = Array2::<C64>::zeros((d, d));
    for k in 0..d - 1 {
        let amp = (s * (s + 1.0) - m[k + 1] * (m[k + 1] + 1.0)).sqrt();
        sp[[k, k + 1]] = C64::new(amp, 0.0);
    }
    let sm = crate::spectral::conj_t(&sp);
    let sx = (&sp + &sm).mapv(|z| z / (2.0 * s));
    let sy = (&sp - &sm).mapv(|z| z / C64::new(0.0, 2.0 * s));
    let sz = Array2::from_diag(&Array1::from_iter(m.iter().map(|&v| C64::new(v / s, 0.0))));
    (sx, sy, sz)
}

fn random_hermitian(dim: usize, rng: &mut ChaCha8Rng) -> Array2<C64> {
    let mut m = Array2::<C64>::zeros((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            m[[i, j]] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    symmetrize(&m)
}

/// Perturbed commuting pair: a block-diagonal Hermitian A against a block
/// identity B (distinct value per block), plus independent random Hermitian
/// perturbations of norm `eps` on each. Output norms are at most 1.
pub fn random_pair(dim: usize, eps: f64, seed: u64) -> (Array2<C64>, Array2<C64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_blocks = (dim / 4).max(1);
    // block sizes: as even as possible
    let base = dim / n_blocks;
    let extra = dim % n_blocks;
    let mut a = Array2::<C64>::zeros((dim, dim));
    let mut b = Array2::<C64>::zeros((dim, dim));
    let mut at = 0;
    for k in 0..n_blocks {
        let sz = base + usize::from(k < extra);
        let bv = -1.0 + 2.0 * (k as f64 + 0.5) / n_blocks as f64;
        let blk = random_hermitian(sz, &mut rng);
        let nrm = op_norm(&blk).max(1e-12);
        for i in 0..sz {
            for j in 0..sz {
                a[[at + i, at + j]] = blk[[i, j]] / nrm;
            }
            b[[at + i, at + i]] = C64::new(bv, 0.0);
        }
        at += sz;
    }
    let pa = random_hermitian(dim, &mut rng);
    let pb = random_hermitian(dim, &mut rng);
    let na = eps / op_norm(&pa).max(1e-12);
    let nb = eps / op_norm(&pb).max(1e-12);
    let a = &a + &pa.mapv(|z| z * na);
    let b = &b + &pb.mapv(|z| z * nb);
    let scale = op_norm(&a).max(op_norm(&b)).max(1.0);
    (a.mapv(|z| z / scale), b.mapv(|z| z / scale))
}

/// Random Hermitian block-tridiagonal matrix (`blocks` blocks of size
/// `block_size`), normalized to operator norm at most 1.
pub fn random_block_tridiag(blocks: usize, block_size: usize, seed: u64) -> Array2<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = blocks * block_size;
    let mut m = Array2::<C64>::zeros((dim, dim));
    for k in 0..blocks {
        let s = k * block_size;
        let diag = random_hermitian(block_size, &mut rng);
        for i in 0..block_size {
            for j in 0..block_size {
                m[[s + i, s + j]] = diag[[i, j]];
            }
        }
        if k + 1 < blocks {
            for i in 0..block_size {
                for j in 0..block_size {
                    let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    m[[s + i, s + block_size + j]] = z;
                    m[[s + block_size + j, s + i]] = z.conj();
                }
            }
        }
    }
    let nrm = op_norm(&m).max(1e-12);
    m.mapv(|z| z / nrm)
}

/// Random real symmetric tridiagonal matrix of size l, operator norm at most 1.
pub fn random_tridiag(l: usize, seed: u64) -> Array2<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Array2::<C64>::zeros((l, l));
    for i in 0..l {
        m[[i, i]] = C64::new(rng.random_range(-1.0..1.0), 0.0);
        if i + 1 < l {
            let z = C64::new(rng.random_range(-1.0..1.0), 0.0);
            m[[i, i + 1]] = z;
            m[[i + 1, i]] = z;
        }
    }
    let nrm = op_norm(&m).max(1e-12);
    m.mapv(|z| z / nrm)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSpec {
    UniformChain { n: usize },
    SpinPair { s: f64 },
    SpinTriple { s: f64 },
    RandomPair { dim: usize, eps: f64, seed: u64 },
    RandomBlockTridiag { blocks: usize, block_size: usize, seed: u64 },
    FromFiles { a: String, b: String },
}

impl InstanceSpec {
    /// A scalar size parameter for reporting (N, S, or dim).
    pub fn param(&self) -> f64 {
        match self {
            InstanceSpec::UniformChain { n } => *n as f64,
            InstanceSpec::SpinPair { s } | InstanceSpec::SpinTriple { s } => *s,
            InstanceSpec::RandomPair { dim, .. } => *dim as f64,
            InstanceSpec::RandomBlockTridiag { blocks, block_size, .. } => {
                (blocks * block_size) as f64
            }
            InstanceSpec::FromFiles { .. } => 0.0,
        }
    }
}

/// Generate the operators named by the spec (two for pairs, three for the
/// spin triple). Deterministic for a fixed spec.
pub fn generate(spec: &InstanceSpec) -> Result<Vec<Array2<C64>>, Error> {
    match spec {
        InstanceSpec::UniformChain { n } => {
            if *n < 2 {
                return Err(Error::BadParameter("chain needs n >= 2".into()));
            }
            let (a, b) = uniform_chain(*n);
            Ok(vec![a, b])
        }
        InstanceSpec::SpinPair { s } => {
            validate_spin(*s)?;
            let (sx, _sy, sz) = spin_operators(*s);
            Ok(vec![sx, sz])
        }
        InstanceSpec::SpinTriple { s } => {
            validate_spin(*s)?;
            let (sx, sy, sz) = spin_operators(*s);
            Ok(vec![sx, sy, sz])
        }
        InstanceSpec::RandomPair { dim, eps, seed } => {
            if *dim < 2 || *eps < 0.0 {
                return Err(Error::BadParameter("random pair needs dim >= 2, eps >= 0".into()));
            }
            let (a, b) = random_pair(*dim, *eps, *seed);
            Ok(vec![a, b])
        }
        InstanceSpec::RandomBlockTridiag { blocks, block_size, seed } => {
            if *blocks < 1 || *block_size < 1 {
                return Err(Error::BadParameter("block tridiag needs positive sizes".into()));
            }
            Ok(vec![random_block_tridiag(*blocks, *block_size, *seed)])
        }
        InstanceSpec::FromFiles { a, b } => Ok(vec![load_matrix(a)?, load_matrix(b)?]),
    }
}

fn validate_spin(s: f64) -> Result<(), Error> {
    let two_s = 2.0 * s;
    if !(two_s >= 1.0 && (two_s - two_s.round()).abs() < 1e-9) {
        return Err(Error::BadParameter(format!("2s must be a positive integer, got s = {s}")));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub param: f64,
    pub delta: f64,
    pub delta_band: f64,
    pub n_cut: usize,
    pub err_a: f64,
    pub err_b: f64,
    pub offdiag_norm: f64,
    /// wall clock; reported, never asserted
    pub runtime_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub family: String,
    /// sorted by delta descending
    pub rows: Vec<ScalingRow>,
    /// log-log slope of max(err_a, err_b) against delta, with a 95% interval;
    /// None when fewer than 4 rows have positive delta and error
    pub slope: Option<f64>,
    pub slope_interval: Option<(f64, f64)>,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("param,delta,delta_band,n_cut,err_a,err_b,offdiag_norm,runtime_s\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.3}\n",
                r.param, r.delta, r.delta_band, r.n_cut, r.err_a, r.err_b, r.offdiag_norm,
                r.runtime_s
            ));
        }
        out
    }

    pub fn max_errs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_a.max(r.err_b)).collect()
    }
}

/// Ordinary least squares of log(y) on log(x) over points with x, y > 0.
/// Returns (slope, 95% interval) or None with fewer than 4 usable points.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<(f64, (f64, f64))> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| x > 0.0 && y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len();
    if n < 4 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ssr: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - slope * p.0 - icpt;
            e * e
        })
        .sum();
    let se = (ssr / (n as f64 - 2.0) / sxx).sqrt();
    Some((slope, (slope - 1.96 * se, slope + 1.96 * se)))
}

/// Run the solver over a family of instances and fit the error-vs-delta law.
/// Needs at least 4 instances; instances run in parallel internally (the
/// solver parallelizes over intervals), the report itself is assembled in
/// order.
pub fn run_scaling_study(
    family: &str,
    specs: &[InstanceSpec],
    cfg: &SolveConfig,
) -> Result<ScalingReport, Error> {
    if specs.len() < 4 {
        return Err(Error::BadParameter(format!(
            "scaling study needs at least 4 instances, got {}",
            specs.len()
        )));
    }
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let ops = generate(spec)?;
        if ops.len() != 2 {
            return Err(Error::BadParameter("scaling study needs pair instances".into()));
        }
        let t0 = Instant::now();
        let r = solve(&ops[0], &ops[1], cfg)?;
        rows.push(ScalingRow {
            param: spec.param(),
            delta: r.report.delta,
            delta_band: r.report.delta_band,
            n_cut: r.report.n_cut,
            err_a: r.report.err_a,
            err_b: r.report.err_b,
            offdiag_norm: r.report.offdiag_norm,
            runtime_s: t0.elapsed().as_secs_f64(),
        });
    }
    rows.sort_by(|p, q| q.delta.partial_cmp(&p.delta).unwrap());
    let deltas: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.err_a.max(r.err_b)).collect();
    let fit = fit_loglog(&deltas, &errs);
    Ok(ScalingReport {
        family: family.to_string(),
        rows,
        slope: fit.map(|f| f.0),
        slope_interval: fit.map(|f| f.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::commutator_norm;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chain_matches_formula() {
        let (a, b) = uniform_chain(4);
        assert_abs_diff_eq!(b[[0, 0]].re, 0.25);
        assert_abs_diff_eq!(b[[3, 3]].re, 1.0);
        assert_abs_diff_eq!(a[[0, 1]].re, 0.5);
        assert_abs_diff_eq!(a[[1, 0]].re, 0.5);
        assert_abs_diff_eq!(a[[0, 2]].norm(), 0.0);
    }

    #[test]
    fn spin_half_gives_paulis() {
        let (sx, sy, sz) = spin_operators(0.5);
        assert_abs_diff_eq!(sx[[0, 1]].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sy[[0, 1]].im, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sz[[0, 0]].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(commutator_norm(&sx, &sy), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn spin_commutator_scales_as_inverse_s() {
        for s in [5.0, 10.0] {
            let (sx, _sy, sz) = spin_operators(s);
            assert_abs_diff_eq!(commutator_norm(&sx, &sz), 1.0 / s, epsilon = 1e-12);
            assert_abs_diff_eq!(op_norm(&sx), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn random_pair_is_deterministic_and_nearly_commuting() {
        let (a1, b1) = random_pair(16, 0.01, 7);
        let (a2, b2) = random_pair(16, 0.01, 7);
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert!(op_norm(&a1) <= 1.0 + 1e-12);
        assert!(op_norm(&b1) <= 1.0 + 1e-12);
        assert!(commutator_norm(&a1, &b1) <= 4.0 * 0.01 + 1e-12);
        let (a3, _) = random_pair(16, 0.01, 8);
        assert_ne!(a1, a3);
    }

    #[test]
    fn block_tridiag_has_no_far_coupling() {
        let m = random_block_tridiag(6, 4, 3);
        assert!(op_norm(&m) <= 1.0 + 1e-12);
        for i in 0..4 {
            for j in 12..24 {
                assert_eq!(m[[i, j]], C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn loglog_fit_recovers_exact_power_law() {
        let xs: Vec<f64> = vec![1.0, 0.5, 0.25, 0.125, 0.0625];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(0.7)).collect();
        let (slope, (lo, hi)) = fit_loglog(&xs, &ys).unwrap();
        assert_abs_diff_eq!(slope, 0.7, epsilon = 1e-9);
        assert!(lo <= 0.7 && 0.7 <= hi);
        assert!(fit_loglog(&xs[..3], &ys[..3]).is_none());
    }

    #[test]
    fn small_scaling_study_sorts_by_delta() {
        let specs: Vec<InstanceSpec> =
            [16, 24, 32, 48].iter().map(|&n| InstanceSpec::UniformChain { n }).collect();
        let rep = run_scaling_study("chain", &specs, &SolveConfig::default()).unwrap();
        assert_eq!(rep.rows.len(), 4);
        for w in rep.rows.windows(2) {
            assert!(w[0].delta >= w[1].delta);
        }
        assert!(rep.slope.is_some());
        let csv = rep.to_csv();
        assert!(csv.lines().count() == 5);
        assert!(csv.starts_with("param,delta"));
    }

    #[test]
    fn generate_rejects_bad_specs() {
        assert!(generate(&InstanceSpec::UniformChain { n: 1 }).is_err());
        assert!(generate(&InstanceSpec::SpinPair { s: 0.3 }).is_err());
        assert!(generate(&InstanceSpec::SpinTriple { s: 2.0 }).unwrap().len() == 3);
    }
}
