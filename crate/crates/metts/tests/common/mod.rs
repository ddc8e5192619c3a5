//! Dense oracles and synthetic generators shared by the integration suites.
//!
//! Everything here works on full product-space arrays with no charge
//! bookkeeping, so agreement with the block-sparse code is an independent
//! check rather than a tautology.

#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use metts::model::ModelSpec;
use metts::mps::MatrixProductState;
use metts::symtensor::{ChargeIndex, SymTensor};
use metts::Real;

pub type C64 = Complex<f64>;

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn frob(a: &ArrayD<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frob_diff(a: &ArrayD<C64>, b: &ArrayD<C64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in frob_diff");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Plain dense tensor contraction over the listed (a_axis, b_axis) pairs.
pub fn tensordot(a: &ArrayD<C64>, b: &ArrayD<C64>, pairs: &[(usize, usize)]) -> ArrayD<C64> {
    let a_con: Vec<usize> = pairs.iter().map(|&(i, _)| i).collect();
    let b_con: Vec<usize> = pairs.iter().map(|&(_, j)| j).collect();
    let a_free: Vec<usize> = (0..a.ndim()).filter(|i| !a_con.contains(i)).collect();
    let b_free: Vec<usize> = (0..b.ndim()).filter(|j| !b_con.contains(j)).collect();
    for (&i, &j) in a_con.iter().zip(&b_con) {
        assert_eq!(a.shape()[i], b.shape()[j], "contracted axis size mismatch");
    }

    let m: usize = a_free.iter().map(|&i| a.shape()[i]).product();
    let k: usize = a_con.iter().map(|&i| a.shape()[i]).product();
    let n: usize = b_free.iter().map(|&j| b.shape()[j]).product();

    let mut perm_a = a_free.clone();
    perm_a.extend(&a_con);
    let mut perm_b = b_con.clone();
    perm_b.extend(&b_free);

    let a_mat = a
        .clone()
        .permuted_axes(perm_a)
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order(IxDyn(&[m, k]))
        .unwrap()
        .into_dimensionality::<ndarray::Ix2>()
        .unwrap();
    let b_mat = b
        .clone()
        .permuted_axes(perm_b)
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order(IxDyn(&[k, n]))
        .unwrap()
        .into_dimensionality::<ndarray::Ix2>()
        .unwrap();

    let out_dims: Vec<usize> = a_free
        .iter()
        .map(|&i| a.shape()[i])
        .chain(b_free.iter().map(|&j| b.shape()[j]))
        .collect();
    a_mat
        .dot(&b_mat)
        .into_dyn()
        .into_shape_with_order(IxDyn(&out_dims))
        .unwrap()
}

/// Full coefficient vector of an MPS, axis order = site order, slower digits
/// first. Contraction happens in the block algebra; only the final embedding
/// is dense, so bond layouts never enter.
pub fn mps_to_dense(psi: &MatrixProductState<f64>) -> Array1<C64> {
    let l = psi.len();
    let mut acc = psi.site(0).clone();
    for m in 1..l {
        let last = acc.rank() - 1;
        acc = SymTensor::contract(&acc, psi.site(m), &[(last, 0)]).unwrap();
    }
    let dense = acc.to_dense();
    let total: usize = dense.len();
    dense
        .into_shape_with_order(IxDyn(&[total]))
        .unwrap()
        .into_dimensionality::<ndarray::Ix1>()
        .unwrap()
}

pub fn kron_c(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = (a.nrows(), a.ncols());
    let (rb, cb) = (b.nrows(), b.ncols());
    Array2::from_shape_fn((ra * rb, ca * cb), |(i, j)| {
        a[(i / rb, j / cb)] * b[(i % rb, j % cb)]
    })
}

pub fn eye_c(n: usize) -> Array2<C64> {
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            c64(1.0, 0.0)
        } else {
            c64(0.0, 0.0)
        }
    })
}

/// Embed a two-site operator acting on sites (m, m+1) of a uniform chain of
/// `l` sites with local dimension `d`. Site 0 is the most significant digit.
pub fn embed_two_site(g: &Array2<C64>, m: usize, l: usize, d: usize) -> Array2<C64> {
    let pre = eye_c(d.pow(m as u32));
    let post = eye_c(d.pow((l - m - 2) as u32));
    kron_c(&kron_c(&pre, g), &post)
}

/// Dense product-space Hamiltonian from the model's bond decomposition.
pub fn dense_bond_sum(terms: &[metts::model::BondTerm<f64>], l: usize, d: usize) -> Array2<C64> {
    let n = d.pow(l as u32);
    let mut h = Array2::from_elem((n, n), c64(0.0, 0.0));
    for t in terms {
        let g = t.matrix.mapv(|x| c64(x, 0.0));
        h = h + embed_two_site(&g, t.site, l, d);
    }
    h
}

pub fn dense_hamiltonian_product_space(spec: &ModelSpec<f64>) -> Array2<C64> {
    dense_bond_sum(
        &metts::model::hamiltonian_bonds(spec),
        spec.l,
        spec.local_dim(),
    )
}

/// Eigendecomposition of a real symmetric matrix, ascending eigenvalues.
pub fn eigh_dense(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let m = nalgebra::DMatrix::from_row_iterator(n, n, a.iter().copied());
    let se = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let vecs = Array2::from_shape_fn((n, n), |(i, j)| se.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

/// exp(scale * H) for real symmetric H, via its eigendecomposition.
pub fn expm_sym(h: &Array2<f64>, scale: C64) -> Array2<C64> {
    let n = h.nrows();
    let (vals, vecs) = eigh_dense(h);
    let phases: Vec<C64> = vals.iter().map(|&x| (scale * x).exp()).collect();
    let mut out = Array2::from_elem((n, n), c64(0.0, 0.0));
    for (i, j) in itertools_pairs(n) {
        let mut acc = c64(0.0, 0.0);
        for k in 0..n {
            acc += phases[k] * vecs[(i, k)] * vecs[(j, k)];
        }
        out[(i, j)] = acc;
    }
    out
}

fn itertools_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (0..n).map(move |j| (i, j)))
}

pub fn matvec(m: &Array2<C64>, v: &Array1<C64>) -> Array1<C64> {
    m.dot(v)
}

pub fn vdot(a: &Array1<C64>, b: &Array1<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn normalize_vec(v: &mut Array1<C64>) {
    let n = vdot(v, v).re.sqrt();
    v.mapv_inplace(|z| z / n);
}

/// ⟨v|M|v⟩ for a normalized vector.
pub fn expectation(m: &Array2<C64>, v: &Array1<C64>) -> f64 {
    vdot(v, &matvec(m, v)).re
}

/// Stationary AR(1) series x_{t+1} = rho x_t + sqrt(1-rho^2) eps_t with unit
/// marginal variance.
pub fn ar1_series(rho: f64, m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let mut x = rand::distributions::Distribution::sample(&gauss, &mut rng);
    let drive = (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        out.push(x);
        let eps: f64 = rand::distributions::Distribution::sample(&gauss, &mut rng);
        x = rho * x + drive * eps;
    }
    out
}

pub fn gaussian_series(mean: f64, sd: f64, m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(mean, sd).unwrap();
    (0..m)
        .map(|_| rand::distributions::Distribution::sample(&gauss, &mut rng))
        .collect()
}

/// Upper-tail p-value of a chi-square statistic.
pub fn chi2_pvalue(stat: f64, dof: usize) -> f64 {
    let dist = ChiSquared::new(dof as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Pearson chi-square of observed counts against expected probabilities,
/// merging low-expectation cells (< 5 expected) into a shared tail bucket.
/// Returns (statistic, degrees of freedom).
pub fn chi2_counts(observed: &[u64], probs: &[f64], total: u64) -> (f64, usize) {
    assert_eq!(observed.len(), probs.len());
    let mut stat = 0.0;
    let mut cells = 0usize;
    let mut tail_obs = 0.0;
    let mut tail_exp = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * total as f64;
        if e >= 5.0 {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        } else {
            tail_obs += o as f64;
            tail_exp += e;
        }
    }
    if tail_exp > 5.0 {
        stat += (tail_obs - tail_exp).powi(2) / tail_exp;
        cells += 1;
    }
    assert!(cells >= 2, "chi-square needs at least two live cells");
    (stat, cells - 1)
}

/// Random charge-conserving tensor: every allowed block is filled with
/// uniform complex entries in the unit square.
pub fn random_sym_tensor(
    rng: &mut ChaCha8Rng,
    indices: Vec<ChargeIndex>,
    total: i64,
) -> SymTensor<f64> {
    let mut t = SymTensor::new(indices.clone(), total);
    let rank = indices.len();
    let mut key = vec![0usize; rank];
    let mut n_allowed = 0;
    loop {
        if t.key_allowed(&key) {
            let dims: Vec<usize> = key
                .iter()
                .zip(&indices)
                .map(|(&s, idx)| idx.degeneracy(s))
                .collect();
            let data = ArrayD::from_shape_fn(IxDyn(&dims), |_| {
                c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            t.insert_block(key.clone(), data).unwrap();
            n_allowed += 1;
        }
        // odometer over sector positions
        let mut carry = rank;
        while carry > 0 {
            key[carry - 1] += 1;
            if key[carry - 1] < indices[carry - 1].n_sectors() {
                break;
            }
            key[carry - 1] = 0;
            carry -= 1;
        }
        if carry == 0 {
            break;
        }
    }
    assert!(n_allowed > 0, "no allowed block for total charge {total}");
    t
}

/// Random real symmetric matrix with entries of order one.
pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let mut a = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0_f64));
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    a
}

/// Scramble a CPS into a generic entangled state of the same charge by a
/// few layers of random real-time two-site gates, applied without
/// truncation.
pub fn scrambled_state(
    l: usize,
    d: usize,
    config: &[usize],
    layers: usize,
    seed: u64,
) -> MatrixProductState<f64> {
    use metts::model::BondTerm;
    use metts::propagator::{apply_gate, gate_from_term};
    use metts::symtensor::TruncationSpec;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = MatrixProductState::from_cps(
        &metts::mps::CpsConfig::new(config.to_vec()),
        d,
    )
    .unwrap();
    let exact = TruncationSpec::new(4096, 0.0).unwrap();
    for _ in 0..layers {
        for m in 0..l - 1 {
            let term = BondTerm {
                site: m,
                matrix: random_symmetric(&mut rng, d * d),
            };
            let t: f64 = rng.gen_range(0.2..1.0);
            let gate = gate_from_term(&term, c64(0.0, t)).unwrap();
            apply_gate(&mut psi, &gate, m, &exact).unwrap();
        }
    }
    psi.normalize().unwrap();
    psi
}

/// Row-major product-space index of an occupation configuration.
pub fn product_index(config: &[usize], d: usize) -> usize {
    config.iter().fold(0, |acc, &n| acc * d + n)
}

/// Amplitudes of a full product-space vector on the states of a Fock basis,
/// in basis order. The unused complement is returned as its leftover weight
/// so callers can assert the vector really lives in the sector.
pub fn sector_amplitudes(
    v: &Array1<C64>,
    basis: &metts::edref::FockBasis,
    d: usize,
) -> (Array1<C64>, f64) {
    let mut amps = Array1::from_elem(basis.len(), c64(0.0, 0.0));
    let mut inside = 0.0;
    for (k, config) in basis.states().iter().enumerate() {
        let a = v[product_index(config, d)];
        amps[k] = a;
        inside += a.norm_sqr();
    }
    let total: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    (amps, total - inside)
}

/// Mean and variance helpers for plain slices.
pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

pub fn assert_real<T: Real>(z: Complex<T>, tol: T, what: &str) -> T {
    assert!(
        z.im.abs() < tol,
        "{what}: imaginary part {:e} exceeds {:e}",
        z.im,
        tol
    );
    z.re
}
