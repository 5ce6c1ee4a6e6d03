//! Soft simultaneous measurement of several almost-commuting observables:
//! each operator gets a family of square-root window Kraus factors that sum to
//! the identity; measuring them in sequence yields one value per operator with
//! a mean-square error controlled by the worst pairwise commutator.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::filters::{window, window_centers};
use crate::spectral::{commutator_norm, conj_t, op_norm, HMat};
use crate::Error;

pub struct Scheme {
    pub ops: Vec<HMat>,
    pub delta: f64,
    pub n_win: usize,
    pub kappa: f64,
    pub centers: Vec<f64>,
    /// kraus[i][n] = sqrt(window_n(A_i))
    pub kraus: Vec<Vec<Array2<C64>>>,
    pub scale_factor: f64,
}

/// Build the measurement scheme. Operators with norm above 1 are rescaled
/// jointly and the factor recorded. The window count defaults to
/// ceil(delta^{-1/2} (N-1)^{-1/2}) for two or more operators, and to
/// ceil(delta^{-1/2}) clamped to [2, 10^4] for a single one.
pub fn build_scheme(operators: &[Array2<C64>], n_win_override: Option<usize>) -> Result<Scheme, Error> {
    if operators.is_empty() {
        return Err(Error::BadParameter("need at least one operator".into()));
    }
    let hm: Vec<HMat> = operators
        .iter()
        .map(|m| HMat::new(m.clone()))
        .collect::<Result<_, _>>()?;
    let scale = hm.iter().map(|h| h.op_norm()).fold(1.0_f64, f64::max);
    let ops: Vec<HMat> = if scale > 1.0 {
        operators
            .iter()
            .map(|m| HMat::new(m.mapv(|z| z / scale)))
            .collect::<Result<_, _>>()?
    } else {
        hm
    };
    let n = ops.len();
    let mut delta = 0.0_f64;
    for i in 0..n {
        for j in i + 1..n {
            delta = delta.max(commutator_norm(ops[i].matrix(), ops[j].matrix()));
        }
    }
    let n_win = match n_win_override {
        Some(k) => k.max(2),
        None => {
            if n >= 2 && delta > 0.0 {
                ((delta.powf(-0.5) * ((n - 1) as f64).powf(-0.5)).ceil() as usize).max(2)
            } else if delta > 0.0 {
                (delta.powf(-0.5).ceil() as usize).clamp(2, 10_000)
            } else {
                2
            }
        }
    };
    let (centers, kappa) = window_centers(n_win);
    let kraus: Vec<Vec<Array2<C64>>> = ops
        .iter()
        .map(|a| {
            centers
                .iter()
                .map(|&c| a.apply_fn(|x| window(c, 0.0, kappa, x).max(0.0).sqrt()))
                .collect()
        })
        .collect();
    let scheme = Scheme { ops, delta, n_win, kappa, centers, kraus, scale_factor: scale };
    // per-operator completeness must hold to rounding
    let res = scheme.completeness_residual();
    debug_assert!(res <= 1e-10, "completeness residual {res}");
    Ok(scheme)
}

impl Scheme {
    pub fn dim(&self) -> usize {
        self.ops[0].dim()
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    /// max over operators of || sum_n M(i,n)^2 - I ||.
    pub fn completeness_residual(&self) -> f64 {
        let d = self.dim();
        let eye: Array2<C64> = Array2::eye(d);
        self.kraus
            .iter()
            .map(|ms| {
                let mut total = Array2::<C64>::zeros((d, d));
                for m in ms {
                    total += &m.dot(m);
                }
                op_norm(&(total - &eye))
            })
            .fold(0.0, f64::max)
    }

    /// Kraus product for one outcome tuple, first operator applied first:
    /// K = M(N, n_N) ... M(1, n_1).
    fn kraus_product(&self, tuple: &[usize]) -> Array2<C64> {
        let d = self.dim();
        let mut k: Array2<C64> = Array2::eye(d);
        for (i, &n) in tuple.iter().enumerate() {
            k = self.kraus[i][n].dot(&k);
        }
        k
    }

    /// Smallest eigenvalue over all enumerated outcome operators O = K†K
    /// (each is PSD by construction; this is the numerical check).
    pub fn positivity_min_eig(&self) -> Result<f64, Error> {
        let total = (self.n_win as f64).powi(self.num_ops() as i32);
        if total > 1e6 {
            return Err(Error::EnumerationTooLarge(total));
        }
        let mut worst = f64::INFINITY;
        for tuple in Tuples::new(self.num_ops(), self.n_win) {
            let k = self.kraus_product(&tuple);
            let o = HMat::new(conj_t(&k).dot(&k)).expect("outcome operator is Hermitian");
            let (vals, _) = o.eig();
            worst = worst.min(vals.iter().cloned().fold(f64::INFINITY, f64::min));
        }
        Ok(worst)
    }

    /// Exact mean-square error of operator `i`'s reported value over all
    /// outcome tuples: sum_n tr((A_i - w(n_i))^2 K rho K†).
    pub fn exact_ms_error(&self, rho: &Array2<C64>, i: usize) -> Result<f64, Error> {
        validate_density(rho)?;
        let total = (self.n_win as f64).powi(self.num_ops() as i32);
        if total > 1e6 {
            return Err(Error::EnumerationTooLarge(total));
        }
        let d = self.dim();
        let mut err = 0.0;
        for tuple in Tuples::new(self.num_ops(), self.n_win) {
            let k = self.kraus_product(&tuple);
            let post = k.dot(rho).dot(&conj_t(&k));
            let shift = self.ops[i].matrix() - &(Array2::<C64>::eye(d) * C64::new(self.centers[tuple[i]], 0.0));
            let sq = shift.dot(&shift);
            let val: C64 = sq.dot(&post).diag().iter().sum();
            err += val.re;
        }
        Ok(err)
    }

    /// Enumerated outcome distribution (probability per tuple, row-major in
    /// tuple order); small schemes only.
    pub fn outcome_distribution(&self, rho: &Array2<C64>) -> Result<Vec<f64>, Error> {
        validate_density(rho)?;
        let total = (self.n_win as f64).powi(self.num_ops() as i32);
        if total > 1e6 {
            return Err(Error::EnumerationTooLarge(total));
        }
        let mut probs = Vec::new();
        for tuple in Tuples::new(self.num_ops(), self.n_win) {
            let k = self.kraus_product(&tuple);
            let post = k.dot(rho).dot(&conj_t(&k));
            let p: C64 = post.diag().iter().sum();
            probs.push(p.re.max(0.0));
        }
        Ok(probs)
    }

    /// Sample one outcome tuple by sequential collapse (first operator first).
    /// Deterministic for a fixed seeded generator.
    pub fn sample_outcome(&self, rho: &Array2<C64>, rng: &mut ChaCha8Rng) -> OutcomeRecord {
        let mut state = rho.clone();
        let mut tuple = Vec::with_capacity(self.num_ops());
        for ms in &self.kraus {
            let probs: Vec<f64> = ms
                .iter()
                .map(|m| {
                    let post = m.dot(&state).dot(&conj_t(m));
                    post.diag().iter().map(|z| z.re).sum::<f64>().max(0.0)
                })
                .collect();
            let total: f64 = probs.iter().sum();
            let mut r = rng.random_range(0.0..1.0) * total;
            let mut chosen = probs.len() - 1;
            for (k, &p) in probs.iter().enumerate() {
                if r < p {
                    chosen = k;
                    break;
                }
                r -= p;
            }
            let m = &ms[chosen];
            state = m.dot(&state).dot(&conj_t(m));
            let tr: f64 = state.diag().iter().map(|z| z.re).sum();
            if tr > 0.0 {
                state.mapv_inplace(|z| z / tr);
            }
            tuple.push(chosen);
        }
        let values = tuple.iter().map(|&n| self.centers[n]).collect();
        OutcomeRecord { tuple, values }
    }

    /// Monte Carlo estimate of the mean-square error of operator `i`, with the
    /// standard error of the estimate.
    pub fn mc_ms_error(
        &self,
        rho: &Array2<C64>,
        i: usize,
        samples: usize,
        seed: u64,
    ) -> Result<(f64, f64), Error> {
        validate_density(rho)?;
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vals = Vec::with_capacity(samples);
        for _ in 0..samples {
            let rec = self.sample_outcome(rho, &mut rng);
            // statistic: tr((A_i - value)^2 rho_post) for the sampled tuple
            let k = self.kraus_product(&rec.tuple);
            let mut post = k.dot(rho).dot(&conj_t(&k));
            let tr: f64 = post.diag().iter().map(|z| z.re).sum();
            if tr > 0.0 {
                post.mapv_inplace(|z| z / tr);
            }
            let shift = self.ops[i].matrix() - &(Array2::<C64>::eye(d) * C64::new(rec.values[i], 0.0));
            let v: C64 = shift.dot(&shift).dot(&post).diag().iter().sum();
            vals.push(v.re);
        }
        let mean = vals.iter().sum::<f64>() / samples as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (samples as f64 - 1.0);
        Ok((mean, (var / samples as f64).sqrt()))
    }

    /// Measured left-hand sides of the soft-measurement commutator estimates,
    /// as ratios against kappa, delta/kappa and (delta/kappa)^2:
    /// (sum_n ||(A_i - w(n)) M(i,n)|| / kappa,
    ///  ||sum_n M(j,n) A_i M(j,n) - A_i|| / (delta/kappa),
    ///  ||sum_n M(j,n) [A_i, M(j,n)]|| / (delta/kappa)^2).
    pub fn check_commutator_lemmas(&self, i: usize, j: usize) -> (f64, f64, f64) {
        assert_ne!(i, j);
        let ai = self.ops[i].matrix();
        let mut small_sum = 0.0;
        for (n, m) in self.kraus[i].iter().enumerate() {
            let shift = ai - &(Array2::<C64>::eye(self.dim()) * C64::new(self.centers[n], 0.0));
            small_sum += op_norm(&shift.dot(m));
        }
        let mut conj_sum = Array2::<C64>::zeros((self.dim(), self.dim()));
        let mut comm_sum = Array2::<C64>::zeros((self.dim(), self.dim()));
        for m in &self.kraus[j] {
            conj_sum += &m.dot(ai).dot(m);
            comm_sum += &m.dot(&(ai.dot(m) - m.dot(ai)));
        }
        let conj_dev = op_norm(&(conj_sum - ai));
        let comm_dev = op_norm(&comm_sum);
        let ratio = self.delta / self.kappa;
        (
            small_sum / self.kappa,
            if ratio > 0.0 { conj_dev / ratio } else { conj_dev },
            if ratio > 0.0 { comm_dev / (ratio * ratio) } else { comm_dev },
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OutcomeRecord {
    pub tuple: Vec<usize>,
    pub values: Vec<f64>,
}

fn validate_density(rho: &Array2<C64>) -> Result<(), Error> {
    let h = HMat::new(rho.clone())?;
    let (vals, _) = h.eig();
    if vals.iter().any(|&v| v < -1e-10) {
        return Err(Error::BadParameter("density matrix is not PSD".into()));
    }
    let tr: f64 = vals.sum();
    if (tr - 1.0).abs() > 1e-10 {
        return Err(Error::BadParameter(format!("density matrix trace {tr} != 1")));
    }
    Ok(())
}

/// Odometer over outcome tuples.
struct Tuples {
    n_ops: usize,
    n_win: usize,
    next: Option<Vec<usize>>,
}

impl Tuples {
    fn new(n_ops: usize, n_win: usize) -> Self {
        Tuples { n_ops, n_win, next: Some(vec![0; n_ops]) }
    }
}

impl Iterator for Tuples {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.clone()?;
        let mut succ = current.clone();
        let mut k = self.n_ops;
        loop {
            if k == 0 {
                self.next = None;
                break;
            }
            k -= 1;
            succ[k] += 1;
            if succ[k] < self.n_win {
                self.next = Some(succ);
                break;
            }
            succ[k] = 0;
        }
        Some(current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::spin_operators;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn single_diagonal_operator_is_exact_on_grid_eigenstates() {
        // eigenvalues exactly at window centers: the reported value is certain
        let a = Array2::from_diag(&Array1::from(vec![-1.0, 0.0, 1.0]).mapv(|x: f64| c(x, 0.0)));
        let s = build_scheme(&[a.clone()], Some(3)).unwrap();
        assert!(s.completeness_residual() <= 1e-10);
        let mut rho = Array2::<C64>::zeros((3, 3));
        rho[[1, 1]] = c(1.0, 0.0);
        let err = s.exact_ms_error(&rho, 0).unwrap();
        assert_abs_diff_eq!(err, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenstate_error_within_window_width() {
        let a = Array2::from_diag(&Array1::from(vec![-0.37, 0.22, 0.81]).mapv(|x: f64| c(x, 0.0)));
        let s = build_scheme(&[a.clone()], Some(5)).unwrap();
        let mut rho = Array2::<C64>::zeros((3, 3));
        rho[[0, 0]] = c(1.0, 0.0);
        let err = s.exact_ms_error(&rho, 0).unwrap();
        assert!(err <= s.kappa * s.kappa + 1e-12, "err {err} kappa {}", s.kappa);
    }

    #[test]
    fn spin_pair_window_count_matches_formula() {
        let (sx, sy, _sz) = spin_operators(20.0);
        let s = build_scheme(&[sx, sy], None).unwrap();
        assert_abs_diff_eq!(s.delta, 0.05, epsilon = 1e-12);
        assert_eq!(s.n_win, 5); // ceil(sqrt(20))
    }

    #[test]
    fn commuting_operators_have_zero_commutator_deviations() {
        let a = Array2::from_diag(&Array1::from(vec![0.1, 0.5, -0.4]).mapv(|x: f64| c(x, 0.0)));
        let b = Array2::from_diag(&Array1::from(vec![0.9, -0.2, 0.3]).mapv(|x: f64| c(x, 0.0)));
        let s = build_scheme(&[a, b], Some(4)).unwrap();
        let (small, conj_dev, comm_dev) = s.check_commutator_lemmas(0, 1);
        assert!(small <= 2.0 + 1e-9, "diagonal small-sum ratio {small}");
        assert_abs_diff_eq!(conj_dev, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(comm_dev, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn distribution_sums_to_one_and_mc_is_consistent() {
        let (sx, sy, _sz) = spin_operators(2.0);
        let s = build_scheme(&[sx, sy], None).unwrap();
        let d = s.dim();
        let rho = Array2::<C64>::eye(d).mapv(|z| z / d as f64);
        let probs = s.outcome_distribution(&rho).unwrap();
        assert_abs_diff_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        let exact = s.exact_ms_error(&rho, 0).unwrap();
        let (mc, se) = s.mc_ms_error(&rho, 0, 2000, 7).unwrap();
        assert!((mc - exact).abs() <= 3.0 * se + 1e-12, "mc {mc} exact {exact} se {se}");
    }

    #[test]
    fn fixed_seed_reproduces_outcomes() {
        let (sx, sy, _sz) = spin_operators(3.0);
        let s = build_scheme(&[sx, sy], None).unwrap();
        let d = s.dim();
        let rho = Array2::<C64>::eye(d).mapv(|z| z / d as f64);
        let mut r1 = ChaCha8Rng::seed_from_u64(99);
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        let o1 = s.sample_outcome(&rho, &mut r1);
        let o2 = s.sample_outcome(&rho, &mut r2);
        assert_eq!(o1.tuple, o2.tuple);
    }

    #[test]
    fn tuples_odometer_counts() {
        let all: Vec<_> = Tuples::new(2, 3).collect();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[8], vec![2, 2]);
    }
}
