//! Matrix product states over charge-conserving tensors.
//!
//! Site tensors carry legs [left bond (incoming), physical (incoming),
//! right bond (outgoing)] and total charge 0, so the bond sector charges
//! accumulate the occupation from the left edge. The left edge bond is the
//! trivial charge-0 sector; the right edge bond holds a single sector whose
//! charge is the state's global particle number.

use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex;
use rand::Rng;

use crate::symtensor::{ChargeIndex, Direction, SymTensor, TruncationSpec};
use crate::{Error, Real, Result};

/// Occupation-basis product configuration.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CpsConfig {
    pub occupations: Vec<usize>,
}

impl CpsConfig {
    pub fn new(occupations: Vec<usize>) -> Self {
        CpsConfig { occupations }
    }

    pub fn uniform(l: usize, n: usize) -> Self {
        CpsConfig {
            occupations: vec![n; l],
        }
    }

    pub fn len(&self) -> usize {
        self.occupations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupations.is_empty()
    }

    pub fn total(&self) -> usize {
        self.occupations.iter().sum()
    }
}

/// Chain of site tensors with an optional orthogonality center.
#[derive(Clone, Debug)]
pub struct MatrixProductState<T: Real> {
    sites: Vec<SymTensor<T>>,
    center: Option<usize>,
    local_dims: Vec<usize>,
    global_charge: i64,
}

impl<T: Real> MatrixProductState<T> {
    /// Bond-dimension-1 state for a product configuration. All sites share
    /// the same physical dimension `local_dim`.
    pub fn from_cps(config: &CpsConfig, local_dim: usize) -> Result<Self> {
        if config.is_empty() {
            return Err(Error::Structure("empty configuration".into()));
        }
        if let Some(&n) = config.occupations.iter().find(|&&n| n >= local_dim) {
            return Err(Error::Domain(format!(
                "occupation {n} exceeds local dimension {local_dim}"
            )));
        }
        let phys = ChargeIndex::occupation(Direction::Incoming, local_dim - 1);
        let mut sites = Vec::with_capacity(config.len());
        let mut acc = 0i64;
        for &n in &config.occupations {
            let left = ChargeIndex::new(Direction::Incoming, vec![(acc, 1)])?;
            acc += n as i64;
            let right = ChargeIndex::new(Direction::Outgoing, vec![(acc, 1)])?;
            let mut t = SymTensor::new(vec![left, phys.clone(), right], 0);
            t.insert_block(
                vec![0, n, 0],
                ArrayD::from_elem(IxDyn(&[1, 1, 1]), Complex::new(T::one(), T::zero())),
            )?;
            sites.push(t);
        }
        Ok(MatrixProductState {
            sites,
            center: Some(0),
            local_dims: vec![local_dim; config.len()],
            global_charge: acc,
        })
    }

    /// Assemble from explicit site tensors (used by the hybrid edge-pair
    /// construction). Tensors must have legs [in, in, out], total charge 0,
    /// matching neighbor bonds, a trivial left edge, and a single-sector
    /// right edge.
    pub fn from_site_tensors(sites: Vec<SymTensor<T>>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Structure("empty site list".into()));
        }
        for (m, t) in sites.iter().enumerate() {
            if t.rank() != 3 {
                return Err(Error::Structure(format!(
                    "site {m} has rank {}, want 3",
                    t.rank()
                )));
            }
            if t.index(0).direction() != Direction::Incoming
                || t.index(1).direction() != Direction::Incoming
                || t.index(2).direction() != Direction::Outgoing
            {
                return Err(Error::Structure(format!(
                    "site {m} legs must be [incoming, incoming, outgoing]"
                )));
            }
            if t.total_charge() != 0 {
                return Err(Error::Structure(format!(
                    "site {m} has total charge {}, want 0",
                    t.total_charge()
                )));
            }
        }
        for m in 0..sites.len() - 1 {
            if sites[m].index(2).sectors() != sites[m + 1].index(0).sectors() {
                return Err(Error::Structure(format!(
                    "bond sector mismatch between sites {m} and {}",
                    m + 1
                )));
            }
        }
        let left_edge = sites[0].index(0);
        if left_edge.sectors() != [(0, 1)] {
            return Err(Error::Structure(
                "left edge bond must be the trivial charge-0 sector".into(),
            ));
        }
        let right_edge = sites[sites.len() - 1].index(2);
        if right_edge.n_sectors() != 1 || right_edge.degeneracy(0) != 1 {
            return Err(Error::Structure(
                "right edge bond must be a single one-dimensional sector".into(),
            ));
        }
        let global_charge = right_edge.charge(0);
        let local_dims = sites.iter().map(|t| t.index(1).dim()).collect();
        Ok(MatrixProductState {
            sites,
            center: None,
            local_dims,
            global_charge,
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn local_dims(&self) -> &[usize] {
        &self.local_dims
    }

    pub fn global_charge(&self) -> i64 {
        self.global_charge
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn site(&self, m: usize) -> &SymTensor<T> {
        &self.sites[m]
    }

    /// Largest bond dimension along the chain.
    pub fn max_bond(&self) -> usize {
        (0..self.len() - 1)
            .map(|m| self.sites[m].index(2).dim())
            .max()
            .unwrap_or(1)
            .max(1)
    }

    pub fn norm_sqr(&self) -> T {
        match self.center {
            Some(c) => self.sites[c].norm_sqr(),
            None => Self::inner(self, self)
                .expect("self-overlap of a well-formed state")
                .re,
        }
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    /// Scale the state to norm 1; returns the previous norm.
    pub fn normalize(&mut self) -> Result<T> {
        let n = self.norm();
        if n <= T::zero() || !n.is_finite() {
            return Err(Error::Numerical {
                step: 0,
                msg: format!("cannot normalize state with norm {n:e}"),
            });
        }
        let f = Complex::new(T::one() / n, T::zero());
        match self.center {
            Some(c) => self.sites[c].scale(f),
            None => self.sites[0].scale(f),
        }
        Ok(n)
    }

    fn move_center_right(&mut self) -> Result<()> {
        let c = self.center.expect("center set");
        let (u, s, v, _) = self.sites[c].svd_truncate(&[0, 1], &TruncationSpec::exact())?;
        let sv = SymTensor::contract(&s.to_tensor(), &v, &[(1, 0)])?;
        self.sites[c] = u;
        self.sites[c + 1] = SymTensor::contract(&sv, &self.sites[c + 1], &[(1, 0)])?;
        self.center = Some(c + 1);
        Ok(())
    }

    fn move_center_left(&mut self) -> Result<()> {
        let c = self.center.expect("center set");
        let (u, s, v, _) = self.sites[c].svd_truncate(&[0], &TruncationSpec::exact())?;
        let us = SymTensor::contract(&u, &s.to_tensor(), &[(1, 0)])?;
        self.sites[c] = v;
        self.sites[c - 1] = SymTensor::contract(&self.sites[c - 1], &us, &[(2, 0)])?;
        self.center = Some(c - 1);
        Ok(())
    }

    /// Bring the orthogonality center to `target` (isometries to its left
    /// and right); the represented state is unchanged.
    pub fn canonicalize(&mut self, target: usize) -> Result<()> {
        if target >= self.len() {
            return Err(Error::Structure(format!(
                "center {target} out of range for {} sites",
                self.len()
            )));
        }
        if self.center.is_none() {
            // left-isometrize everything, making the last site the center
            self.center = Some(0);
            for _ in 0..self.len() - 1 {
                self.move_center_right()?;
            }
        }
        while self.center.expect("set above") < target {
            self.move_center_right()?;
        }
        while self.center.expect("set above") > target {
            self.move_center_left()?;
        }
        Ok(())
    }

    /// Dense overlap ⟨a|b⟩.
    pub fn inner(a: &Self, b: &Self) -> Result<Complex<T>> {
        if a.len() != b.len() || a.local_dims != b.local_dims {
            return Err(Error::Structure(
                "overlap of states with different site structure".into(),
            ));
        }
        if a.global_charge != b.global_charge {
            return Ok(Complex::new(T::zero(), T::zero()));
        }
        let a0 = a.sites[0].conj();
        let mut env = SymTensor::contract(&a0, &b.sites[0], &[(0, 0), (1, 1)])?;
        for m in 1..a.len() {
            let c = SymTensor::contract(&env, &b.sites[m], &[(1, 0)])?;
            env = SymTensor::contract(&a.sites[m].conj(), &c, &[(0, 0), (1, 1)])?;
        }
        // env legs: [bra right edge (incoming), ket right edge (outgoing)],
        // both one-dimensional
        Ok(env
            .block(&[0, 0])
            .map(|b| b[IxDyn(&[0, 0])])
            .unwrap_or_else(|| Complex::new(T::zero(), T::zero())))
    }

    /// Convert a dense two-site operator ((d1*d2) x (d1*d2), row-major over
    /// site pairs) into a four-leg tensor [new1 in, new2 in, old1 out,
    /// old2 out] matching the physical legs of sites (m, m+1).
    pub(crate) fn two_site_operator(
        &self,
        dense: &Array2<Complex<T>>,
        m: usize,
        total_charge: i64,
        tol: T,
    ) -> Result<SymTensor<T>> {
        let (d1, d2) = (self.local_dims[m], self.local_dims[m + 1]);
        if dense.nrows() != d1 * d2 || dense.ncols() != d1 * d2 {
            return Err(Error::Structure(format!(
                "two-site operator is {}x{}, want {}x{}",
                dense.nrows(),
                dense.ncols(),
                d1 * d2,
                d1 * d2
            )));
        }
        let p1 = self.sites[m].index(1);
        let p2 = self.sites[m + 1].index(1);
        let indices = vec![p1.clone(), p2.clone(), p1.dual(), p2.dual()];
        let reshaped = dense
            .to_owned()
            .into_shape_with_order(IxDyn(&[d1, d2, d1, d2]))
            .expect("square operator reshapes to four legs");
        SymTensor::from_dense(indices, total_charge, &reshaped, tol)
    }

    /// Apply a four-leg gate tensor to sites (m, m+1) with SVD truncation;
    /// returns the discarded squared weight. The center ends at m+1.
    pub(crate) fn apply_two_site(
        &mut self,
        gate: &SymTensor<T>,
        m: usize,
        spec: &TruncationSpec<T>,
    ) -> Result<T> {
        self.canonicalize(m)?;
        let theta = SymTensor::contract(&self.sites[m], &self.sites[m + 1], &[(2, 0)])?;
        let rotated = SymTensor::contract(gate, &theta, &[(2, 1), (3, 2)])?;
        // [n1, n2, left, right] -> [left, n1, n2, right]
        let theta2 = rotated.permuted(&[2, 0, 1, 3])?;
        let (u, s, v, w) = theta2.svd_truncate(&[0, 1], spec)?;
        self.sites[m] = u;
        self.sites[m + 1] = SymTensor::contract(&s.to_tensor(), &v, &[(1, 0)])?;
        self.center = Some(m + 1);
        Ok(w)
    }

    /// ⟨ψ| term_{m,m+1} |ψ⟩ for a Hermitian two-site operator given densely.
    pub fn expect_bond(&mut self, term: &Array2<Complex<T>>, m: usize) -> Result<T> {
        if m + 1 >= self.len() {
            return Err(Error::Structure(format!(
                "bond {m} out of range for {} sites",
                self.len()
            )));
        }
        let mut scale = T::zero();
        let mut asym = T::zero();
        for i in 0..term.nrows() {
            for j in 0..term.ncols() {
                let d = (term[(i, j)] - term[(j, i)].conj()).norm_sqr().sqrt();
                if d > asym {
                    asym = d;
                }
                let a = term[(i, j)].norm_sqr().sqrt();
                if a > scale {
                    scale = a;
                }
            }
        }
        if asym > T::of(1e-12) * scale.max(T::one()) {
            return Err(Error::Domain(format!(
                "two-site term is not Hermitian (max deviation {asym:e})"
            )));
        }
        self.canonicalize(m)?;
        let op = self.two_site_operator(term, m, 0, T::of(1e-12) * scale.max(T::one()))?;
        let theta = SymTensor::contract(&self.sites[m], &self.sites[m + 1], &[(2, 0)])?;
        let op_theta = SymTensor::contract(&op, &theta, &[(2, 1), (3, 2)])?;
        // op_theta legs [n1, n2, left, right]; close with the conjugate
        let val = SymTensor::contract(
            &theta.conj(),
            &op_theta,
            &[(0, 2), (1, 0), (2, 1), (3, 3)],
        )?
        .scalar_value()?;
        let im = val.im.abs();
        if im > T::of(1e-10) * val.re.abs().max(T::one()) {
            return Err(Error::Numerical {
                step: 0,
                msg: format!("Hermitian expectation has imaginary part {im:e}"),
            });
        }
        Ok(val.re)
    }

    /// Multiply the physical leg of a site tensor by per-sector diagonal
    /// values (indexed by sector position).
    fn apply_diag(site: &SymTensor<T>, vals: &[T]) -> SymTensor<T> {
        let mut out = SymTensor::new(site.indices().to_vec(), site.total_charge());
        for (key, block) in site.blocks_iter() {
            let f = Complex::new(vals[key[1]], T::zero());
            out.insert_block(key.clone(), block.mapv(|z| z * f))
                .expect("same key stays allowed");
        }
        out
    }

    /// Per-site expectations ⟨o_m⟩ of diagonal single-site operators;
    /// `site_ops[m][k]` is the eigenvalue on sector k of site m's leg.
    pub fn site_expectations(&mut self, site_ops: &[Vec<T>]) -> Result<Vec<T>> {
        self.check_site_ops(site_ops)?;
        let mut out = Vec::with_capacity(self.len());
        for m in 0..self.len() {
            self.canonicalize(m)?;
            let mut acc = T::zero();
            for (key, block) in self.sites[m].blocks_iter() {
                acc += site_ops[m][key[1]] * block.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, x| a + x);
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Matrix of ⟨o_i o_j⟩ for diagonal single-site operators. Symmetric,
    /// with ⟨o_i²⟩ on the diagonal, so the sum of all entries is ⟨(Σ o)²⟩.
    pub fn correlation_matrix(&mut self, site_ops: &[Vec<T>]) -> Result<Array2<T>> {
        self.check_site_ops(site_ops)?;
        let l = self.len();
        let mut corr = Array2::zeros((l, l));
        for i in 0..l {
            self.canonicalize(i)?;
            // diagonal: ⟨o_i²⟩ from sector weights of the center
            let mut acc = T::zero();
            for (key, block) in self.sites[i].blocks_iter() {
                let o = site_ops[i][key[1]];
                acc += o * o * block.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, x| a + x);
            }
            corr[(i, i)] = acc;
            if i + 1 == l {
                break;
            }
            // transfer with o_i inserted, then sweep j upward
            let oi = Self::apply_diag(&self.sites[i], &site_ops[i]);
            let mut env = SymTensor::contract(&self.sites[i].conj(), &oi, &[(0, 0), (1, 1)])?;
            for j in i + 1..l {
                let oj = Self::apply_diag(&self.sites[j], &site_ops[j]);
                let tmp = SymTensor::contract(&env, &oj, &[(1, 0)])?;
                let val = SymTensor::contract(
                    &self.sites[j].conj(),
                    &tmp,
                    &[(0, 0), (1, 1), (2, 2)],
                )?
                .scalar_value()?;
                corr[(i, j)] = val.re;
                corr[(j, i)] = val.re;
                if j + 1 < l {
                    let step = SymTensor::contract(&env, &self.sites[j], &[(1, 0)])?;
                    env = SymTensor::contract(&self.sites[j].conj(), &step, &[(0, 0), (1, 1)])?;
                }
            }
        }
        Ok(corr)
    }

    fn check_site_ops(&self, site_ops: &[Vec<T>]) -> Result<()> {
        if site_ops.len() != self.len() {
            return Err(Error::Structure(format!(
                "{} site operators for {} sites",
                site_ops.len(),
                self.len()
            )));
        }
        for (m, ops) in site_ops.iter().enumerate() {
            if ops.len() != self.sites[m].index(1).n_sectors() {
                return Err(Error::Structure(format!(
                    "site {m} operator has {} eigenvalues for {} sectors",
                    ops.len(),
                    self.sites[m].index(1).n_sectors()
                )));
            }
        }
        Ok(())
    }

    /// Sequentially measure the occupation of every site in `range`
    /// (ascending), projecting and renormalizing as it goes. Outcome k at a
    /// site means sector position k of that site's physical leg. Returns the
    /// drawn positions and the log of the realized probability.
    ///
    /// The state must be normalized. After the call the sites in `range` are
    /// projected onto the drawn occupations and the center sits at
    /// `range.end` (or the last site).
    pub fn collapse_sites<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        range: std::ops::Range<usize>,
    ) -> Result<(CpsConfig, T)> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::Structure(format!(
                "collapse range {range:?} invalid for {} sites",
                self.len()
            )));
        }
        let mut drawn = Vec::with_capacity(range.end - range.start);
        let mut log_prob = T::zero();
        self.canonicalize(range.start)?;
        for m in range.clone() {
            debug_assert_eq!(self.center, Some(m));
            let n_out = self.sites[m].index(1).n_sectors();
            let mut probs = vec![T::zero(); n_out];
            for (key, block) in self.sites[m].blocks_iter() {
                probs[key[1]] += block.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, x| a + x);
            }
            let total: T = probs.iter().fold(T::zero(), |a, &x| a + x);
            if (total - T::one()).abs() > T::of(1e-8) {
                return Err(Error::Numerical {
                    step: m as u64,
                    msg: format!("collapse distribution sums to {total} at site {m}"),
                });
            }
            for p in &mut probs {
                *p /= total;
            }
            // inverse-CDF draw; skip numerically empty outcomes
            let u = T::of(rng.gen::<f64>());
            let mut choice = None;
            let mut cum = T::zero();
            for (k, &p) in probs.iter().enumerate() {
                if p <= T::zero() {
                    continue;
                }
                cum += p;
                choice = Some(k);
                if u < cum {
                    break;
                }
            }
            let k = choice.ok_or_else(|| Error::Numerical {
                step: m as u64,
                msg: format!("no positive-probability outcome at site {m}"),
            })?;
            let p_k = probs[k];
            log_prob += p_k.ln();
            drawn.push(k);

            // project onto sector k and renormalize
            let mut projected = SymTensor::new(
                self.sites[m].indices().to_vec(),
                self.sites[m].total_charge(),
            );
            let f = Complex::new(T::one() / p_k.sqrt(), T::zero());
            for (key, block) in self.sites[m].blocks_iter() {
                if key[1] == k {
                    projected
                        .insert_block(key.clone(), block.mapv(|z| z * f))
                        .expect("projection keeps keys allowed");
                }
            }
            self.sites[m] = projected;
            if m + 1 < self.len() {
                self.move_center_right()?;
            }
        }
        Ok((CpsConfig::new(drawn), log_prob))
    }
}
