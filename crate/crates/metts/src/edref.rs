//! Exact-diagonalization reference: Fock-basis enumeration, dense
//! Hamiltonians, thermal expectations, and the sampling chain's dense
//! transition matrix with its mixing-time estimate.
//!
//! Everything here scales exponentially in system size and exists to
//! validate the tensor-network path on small chains.

use std::collections::HashMap;

use ndarray::Array2;
use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;

use crate::linalg;
use crate::model::{self, BondTerm, ModelSpec};
use crate::{Error, Real, Result};

/// Occupation-number basis of a chain, in lexicographic order.
pub struct FockBasis {
    states: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
    l: usize,
    n_max: usize,
}

const MAX_BASIS: usize = 200_000;
const MAX_TRANSITION_BASIS: usize = 2_000;

impl FockBasis {
    /// All configurations with exactly `n_total` particles.
    pub fn canonical(l: usize, n_total: usize, n_max: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::Domain("chain length must be positive".into()));
        }
        let mut states = Vec::new();
        let mut current = vec![0usize; l];
        enumerate_rec(&mut states, &mut current, 0, n_total, n_max)?;
        if states.is_empty() {
            return Err(Error::Domain(format!(
                "no configurations of {n_total} particles on {l} sites with n_max {n_max}"
            )));
        }
        Ok(Self::from_states(states, l, n_max))
    }

    /// All configurations of any particle number.
    pub fn grand(l: usize, n_max: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::Domain("chain length must be positive".into()));
        }
        let d = n_max + 1;
        let dim = d.checked_pow(l as u32).filter(|&x| x <= MAX_BASIS).ok_or_else(|| {
            Error::Domain(format!("grand basis for l={l}, n_max={n_max} is too large"))
        })?;
        let mut states = Vec::with_capacity(dim);
        for code in 0..dim {
            let mut cfg = vec![0usize; l];
            let mut rem = code;
            for site in (0..l).rev() {
                cfg[site] = rem % d;
                rem /= d;
            }
            states.push(cfg);
        }
        Ok(Self::from_states(states, l, n_max))
    }

    fn from_states(states: Vec<Vec<usize>>, l: usize, n_max: usize) -> Self {
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        FockBasis {
            states,
            index,
            l,
            n_max,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn sites(&self) -> usize {
        self.l
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn state(&self, i: usize) -> &[usize] {
        &self.states[i]
    }

    pub fn states(&self) -> &[Vec<usize>] {
        &self.states
    }

    pub fn position(&self, config: &[usize]) -> Option<usize> {
        self.index.get(config).copied()
    }
}

fn enumerate_rec(
    out: &mut Vec<Vec<usize>>,
    current: &mut Vec<usize>,
    site: usize,
    remaining: usize,
    n_max: usize,
) -> Result<()> {
    let l = current.len();
    if site == l {
        if remaining == 0 {
            if out.len() >= MAX_BASIS {
                return Err(Error::Domain(format!(
                    "canonical basis exceeds {MAX_BASIS} states"
                )));
            }
            out.push(current.clone());
        }
        return Ok(());
    }
    // occupations left to place on later sites bound the minimum here
    let later_cap = (l - site - 1) * n_max;
    let low = remaining.saturating_sub(later_cap);
    let high = remaining.min(n_max);
    for n in low..=high {
        current[site] = n;
        enumerate_rec(out, current, site + 1, remaining - n, n_max)?;
    }
    current[site] = 0;
    Ok(())
}

/// Dense Hamiltonian in the given basis: hopping -J, on-site (U/2) n(n-1),
/// chemical potential -μ n.
pub fn dense_hamiltonian<T: Real>(spec: &ModelSpec<T>, basis: &FockBasis) -> Result<Array2<T>> {
    if basis.sites() != spec.l || basis.n_max() != spec.n_max {
        return Err(Error::Structure(
            "basis does not match the model's chain length or local dimension".into(),
        ));
    }
    let dim = basis.len();
    let half_u = spec.u * T::of(0.5);
    let mut h = Array2::zeros((dim, dim));
    for (b, cfg) in basis.states().iter().enumerate() {
        let mut diag = T::zero();
        for &n in cfg {
            let x = T::of(n as f64);
            diag += half_u * x * (x - T::one()) - spec.mu * x;
        }
        h[(b, b)] = diag;
        for m in 0..spec.l - 1 {
            // b†_m b_{m+1}: move one particle left
            if cfg[m + 1] >= 1 && cfg[m] + 1 <= spec.n_max {
                let amp = -spec.j
                    * (T::of((cfg[m] + 1) as f64) * T::of(cfg[m + 1] as f64)).sqrt();
                let mut other = cfg.clone();
                other[m] += 1;
                other[m + 1] -= 1;
                if let Some(a) = basis.position(&other) {
                    h[(a, b)] += amp;
                    h[(b, a)] += amp;
                }
            }
        }
    }
    Ok(h)
}

/// Embed a two-site bond term into the full basis.
pub fn embed_bond_term<T: Real>(basis: &FockBasis, term: &BondTerm<T>) -> Result<Array2<T>> {
    let d = basis.n_max() + 1;
    if term.matrix.nrows() != d * d || term.site + 1 >= basis.sites() {
        return Err(Error::Structure(format!(
            "bond term at site {} does not fit the basis",
            term.site
        )));
    }
    let dim = basis.len();
    let m = term.site;
    let mut h = Array2::zeros((dim, dim));
    for (b, cfg) in basis.states().iter().enumerate() {
        let col = cfg[m] * d + cfg[m + 1];
        for r1 in 0..d {
            for r2 in 0..d {
                let amp = term.matrix[(r1 * d + r2, col)];
                if amp == T::zero() {
                    continue;
                }
                let mut other = cfg.clone();
                other[m] = r1;
                other[m + 1] = r2;
                if let Some(a) = basis.position(&other) {
                    h[(a, b)] += amp;
                }
            }
        }
    }
    Ok(h)
}

/// Dense even/odd gate Hamiltonians (interaction U', no chemical potential).
pub fn dense_trotter_hamiltonians<T: Real>(
    spec: &ModelSpec<T>,
    basis: &FockBasis,
) -> Result<(Array2<T>, Array2<T>)> {
    let (even_terms, odd_terms) = model::trotter_hamiltonians(spec);
    let dim = basis.len();
    let mut even = Array2::zeros((dim, dim));
    for t in &even_terms {
        even = even + embed_bond_term(basis, t)?;
    }
    let mut odd = Array2::zeros((dim, dim));
    for t in &odd_terms {
        odd = odd + embed_bond_term(basis, t)?;
    }
    Ok((even, odd))
}

/// tr(e^{-βH} O) / tr(e^{-βH}), computed with the spectrum shifted so the
/// largest Boltzmann weight is exactly 1.
pub fn thermal_expectation<T: Real>(h: &Array2<T>, obs: &Array2<T>, beta: T) -> Result<T> {
    if h.nrows() != h.ncols() || obs.dim() != h.dim() {
        return Err(Error::Structure(
            "Hamiltonian and observable must be square and same-sized".into(),
        ));
    }
    if beta < T::zero() {
        return Err(Error::Domain(format!("beta must be non-negative, got {beta}")));
    }
    let (vals, vecs) = linalg::eigh(h)?;
    let shift = vals[0];
    let ov = linalg::matmul_rr(obs, &vecs);
    let mut z = T::zero();
    let mut acc = T::zero();
    let dim = vals.len();
    for k in 0..dim {
        let w = (-(beta) * (vals[k] - shift)).exp();
        z += w;
        let mut val = T::zero();
        for i in 0..dim {
            val += vecs[(i, k)] * ov[(i, k)];
        }
        acc += w * val;
    }
    Ok(acc / z)
}

/// The diagonal of e^{-βH} divided by its trace: the sampling chain's
/// stationary distribution in closed form.
pub fn stationary_distribution<T: Real>(h: &Array2<T>, beta: T) -> Result<Vec<T>> {
    if beta < T::zero() {
        return Err(Error::Domain(format!("beta must be non-negative, got {beta}")));
    }
    let (vals, vecs) = linalg::eigh(h)?;
    let shift = vals[0];
    let dim = vals.len();
    let mut z = T::zero();
    let weights: Vec<T> = (0..dim)
        .map(|k| {
            let w = (-(beta) * (vals[k] - shift)).exp();
            z += w;
            w
        })
        .collect();
    let mut pi = vec![T::zero(); dim];
    for (i, p) in pi.iter_mut().enumerate() {
        for k in 0..dim {
            *p += vecs[(i, k)] * vecs[(i, k)] * weights[k];
        }
        *p /= z;
    }
    Ok(pi)
}

/// A validated row-stochastic matrix over a Fock basis.
pub struct TransitionMatrix<T: Real> {
    p: Array2<T>,
}

impl<T: Real> TransitionMatrix<T> {
    /// Validate non-negativity (tiny negative roundoff is clamped) and unit
    /// row sums, then renormalize rows exactly.
    pub fn new(mut p: Array2<T>) -> Result<Self> {
        if p.nrows() != p.ncols() {
            return Err(Error::Structure("transition matrix must be square".into()));
        }
        for x in p.iter_mut() {
            if *x < T::zero() {
                if *x < T::of(-1e-14) {
                    return Err(Error::Numerical {
                        step: 0,
                        msg: format!("negative transition probability {x:e}"),
                    });
                }
                *x = T::zero();
            }
        }
        for i in 0..p.nrows() {
            let s: T = p.row(i).iter().copied().fold(T::zero(), |a, b| a + b);
            if (s - T::one()).abs() > T::of(1e-10) {
                return Err(Error::Numerical {
                    step: 0,
                    msg: format!("row {i} of transition matrix sums to {s}"),
                });
            }
            for x in p.row_mut(i).iter_mut() {
                *x /= s;
            }
        }
        Ok(TransitionMatrix { p })
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }
}

/// Dense transition matrix of the sampling chain at inverse temperature β.
/// τ = 0 gives the plain product-basis chain p_ij = |<j|M|i>|^2 / (M^2)_ii
/// with M = e^{-(β/2)H}. τ > 0 interleaves the basis rotation
/// W = [U_T(τ/n)]^n: a collapse in the rotated basis followed by a collapse
/// in the product basis, p = q r with
///   q_ik = |<k|W† M|i>|^2 / (M^2)_ii,
///   r_kj = |<j|M W|k>|^2 / (W† M^2 W)_kk.
pub fn transition_matrix<T: Real>(
    spec: &ModelSpec<T>,
    n_total: usize,
    beta: T,
    tau: T,
    n_gates: usize,
) -> Result<TransitionMatrix<T>> {
    let basis = FockBasis::canonical(spec.l, n_total, spec.n_max)?;
    if basis.len() > MAX_TRANSITION_BASIS {
        return Err(Error::Domain(format!(
            "basis of {} states is too large for a dense transition matrix",
            basis.len()
        )));
    }
    if beta < T::zero() {
        return Err(Error::Domain(format!("beta must be non-negative, got {beta}")));
    }
    let dim = basis.len();
    let h = dense_hamiltonian(spec, &basis)?;
    let (vals, vecs) = linalg::eigh(&h)?;
    let shift = vals[0];
    // M = e^{-(β/2)(H - shift)}; the shift cancels in every probability ratio
    let mut scaled = vecs.clone();
    for k in 0..dim {
        let w = (-(beta) * T::of(0.5) * (vals[k] - shift)).exp();
        for i in 0..dim {
            scaled[(i, k)] *= w;
        }
    }
    let m = linalg::matmul_rr(&scaled, &vecs.t().to_owned());
    if tau == T::zero() {
        // p_ij = M_ji^2 / (M^2)_ii
        let mut p = Array2::zeros((dim, dim));
        for i in 0..dim {
            let mut denom = T::zero();
            for j in 0..dim {
                denom += m[(j, i)] * m[(j, i)];
            }
            for j in 0..dim {
                p[(i, j)] = m[(j, i)] * m[(j, i)] / denom;
            }
        }
        return TransitionMatrix::new(p);
    }
    if n_gates == 0 {
        return Err(Error::Domain("gate repetition count must be positive".into()));
    }
    // dense W = (e^{-is H_even} e^{-is H_odd})^n with s = τ/n
    let (h_even, h_odd) = dense_trotter_hamiltonians(spec, &basis)?;
    let s = tau / T::of(n_gates as f64);
    let step = Complex::new(T::zero(), s);
    let u_even = linalg::expm_sym_scaled(&h_even, -step)?;
    let u_odd = linalg::expm_sym_scaled(&h_odd, -step)?;
    let u_step = linalg::matmul_cc(&u_even, &u_odd);
    let mut w = u_step.clone();
    for _ in 1..n_gates {
        w = linalg::matmul_cc(&w, &u_step);
    }
    let mc = m.mapv(|x| Complex::new(x, T::zero()));
    // A = W† M, columns indexed by the starting product state
    let wh = Array2::from_shape_fn((dim, dim), |(i, j)| w[(j, i)].conj());
    let a = linalg::matmul_cc(&wh, &mc);
    // B = M W, columns indexed by the rotated-basis label
    let b = linalg::matmul_cc(&mc, &w);
    let mut q = Array2::zeros((dim, dim));
    let mut r = Array2::zeros((dim, dim));
    for i in 0..dim {
        let mut denom = T::zero();
        for k in 0..dim {
            denom += a[(k, i)].norm_sqr();
        }
        for k in 0..dim {
            q[(i, k)] = a[(k, i)].norm_sqr() / denom;
        }
    }
    for k in 0..dim {
        let mut denom = T::zero();
        for j in 0..dim {
            denom += b[(j, k)].norm_sqr();
        }
        for j in 0..dim {
            r[(k, j)] = b[(j, k)].norm_sqr() / denom;
        }
    }
    TransitionMatrix::new(linalg::matmul_rr(&q, &r))
}

/// Result of the dominant-subspace analysis of a transition matrix.
#[derive(Clone, Copy, Debug)]
pub struct SlmeReport<T> {
    /// Modulus of the second largest eigenvalue.
    pub lambda2_mag: T,
    /// Mixing-time estimate -1/ln(lambda2_mag); +inf when the chain is
    /// effectively reducible, 0 when it mixes in one step.
    pub bound: T,
    /// Power-iteration sweeps used.
    pub iterations: usize,
}

const GROWTH_WINDOW: usize = 32;

/// Second-largest-modulus eigenvalue of a stochastic matrix by deflated
/// power iteration. The stationary distribution comes from left fixed-point
/// iteration; the rank-one projector onto it is then removed and the
/// leading remaining growth rate is estimated from a geometric mean over a
/// sliding window of sweeps.
pub fn slme<T: Real>(p: &TransitionMatrix<T>, tol: T, max_iter: usize) -> Result<SlmeReport<T>> {
    let dim = p.dim();
    if tol <= T::zero() {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    if dim == 1 {
        return Ok(SlmeReport {
            lambda2_mag: T::zero(),
            bound: T::zero(),
            iterations: 0,
        });
    }
    let m = p.matrix();
    // left fixed point: π ← πP until the l1 change is negligible
    let mut pi = vec![T::one() / T::of(dim as f64); dim];
    let pi_tol = T::of(1e-13);
    let mut converged = false;
    for _ in 0..max_iter {
        let mut next = vec![T::zero(); dim];
        for i in 0..dim {
            let w = pi[i];
            if w == T::zero() {
                continue;
            }
            for j in 0..dim {
                next[j] += w * m[(i, j)];
            }
        }
        let total: T = next.iter().copied().fold(T::zero(), |a, b| a + b);
        for x in next.iter_mut() {
            *x /= total;
        }
        let change: T = next
            .iter()
            .zip(&pi)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), |a, b| a + b);
        pi = next;
        if change < pi_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "stationary distribution did not settle in {max_iter} sweeps"
        )));
    }
    // power iteration on P' = P - 1 π^T (the deflated matvec keeps P sparse)
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x51_4d_45);
    let mut v: Vec<T> = (0..dim).map(|_| T::of(rng.gen::<f64>() - 0.5)).collect();
    normalize_l2(&mut v);
    let mut growths: Vec<T> = Vec::new();
    let mut estimates: Vec<T> = Vec::new();
    let mut iterations = 0;
    let mut lambda2 = None;
    for it in 0..max_iter {
        iterations = it + 1;
        let mut w = vec![T::zero(); dim];
        for i in 0..dim {
            let vi = v[i];
            if vi == T::zero() {
                continue;
            }
            for j in 0..dim {
                w[j] += m[(j, i)] * vi; // (P v)_j reads row j of P
            }
        }
        let s: T = pi.iter().zip(&v).map(|(a, b)| *a * *b).fold(T::zero(), |a, b| a + b);
        for x in w.iter_mut() {
            *x -= s;
        }
        let g = l2_norm(&w);
        if g < T::of(1e-14) {
            // contraction at roundoff scale: the deflated matrix is zero
            lambda2 = Some(T::zero());
            break;
        }
        for x in w.iter_mut() {
            *x /= g;
        }
        v = w;
        growths.push(g);
        if growths.len() >= GROWTH_WINDOW {
            let tail = &growths[growths.len() - GROWTH_WINDOW..];
            let log_mean: T = tail
                .iter()
                .map(|x| x.ln())
                .fold(T::zero(), |a, b| a + b)
                / T::of(GROWTH_WINDOW as f64);
            let est = log_mean.exp();
            estimates.push(est);
            if estimates.len() > GROWTH_WINDOW {
                let prev = estimates[estimates.len() - 1 - GROWTH_WINDOW];
                if (est - prev).abs() <= tol * est.max(T::of(1e-300)) {
                    lambda2 = Some(est);
                    break;
                }
            }
        }
    }
    let lambda2 = match lambda2 {
        Some(x) => x,
        None => {
            let last = estimates.last().copied().unwrap_or(T::zero());
            let prev = estimates
                .len()
                .checked_sub(1 + GROWTH_WINDOW)
                .map(|i| estimates[i])
                .unwrap_or(T::zero());
            return Err(Error::NoConvergence(format!(
                "growth estimate still moving after {max_iter} sweeps: {prev} -> {last}"
            )));
        }
    };
    let bound = if lambda2 >= T::one() - T::of(1e-12) {
        T::of(f64::INFINITY)
    } else if lambda2 <= T::of(1e-300) {
        T::zero()
    } else {
        -T::one() / lambda2.ln()
    };
    Ok(SlmeReport {
        lambda2_mag: lambda2,
        bound,
        iterations,
    })
}

/// Largest absolute violation of π P = π.
pub fn stationarity_deviation<T: Real>(p: &TransitionMatrix<T>, pi: &[T]) -> Result<T> {
    let dim = p.dim();
    if pi.len() != dim {
        return Err(Error::Structure(format!(
            "distribution of length {} does not match a {dim}-state chain",
            pi.len()
        )));
    }
    let m = p.matrix();
    let mut worst = T::zero();
    for j in 0..dim {
        let mut acc = T::zero();
        for i in 0..dim {
            acc += pi[i] * m[(i, j)];
        }
        let dev = (acc - pi[j]).abs();
        if dev > worst {
            worst = dev;
        }
    }
    Ok(worst)
}

fn l2_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).fold(T::zero(), |a, b| a + b).sqrt()
}

fn normalize_l2<T: Real>(v: &mut [T]) {
    let n = l2_norm(v);
    for x in v.iter_mut() {
        *x /= n;
    }
}
