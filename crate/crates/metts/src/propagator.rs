//! Two-site gate exponentials and their sweeps: imaginary-time evolution
//! e^{-(β/2)H} by TEBD, and the real-time symmetric-basis unitary
//! [U_T(τ/n)]^n with U_T(s) = e^{-is H_even} e^{-is H_odd}.
//!
//! Gate matrices are exponentiated block by block in the two-site total
//! occupation, so particle-number conservation is exact rather than
//! eigensolver-accurate.

use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex;

use crate::linalg;
use crate::model::{self, BondTerm, ModelSpec};
use crate::mps::MatrixProductState;
use crate::symtensor::{ChargeIndex, Direction, SymTensor, TruncationSpec};
use crate::{Error, Real, Result};

/// Which commuting bond group a sweep stage applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BondParity {
    Even,
    Odd,
}

/// Direction of a unitary application.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitaryDirection {
    Forward,
    Adjoint,
}

/// An ordered list of (parity, coefficient) stages making up one Trotter
/// step of size dtau: stage k applies e^{-coeff_k * dtau * H_parity}.
/// Coefficients of each parity must sum to 1.
#[derive(Clone, Debug)]
pub struct SweepSchedule<T> {
    stages: Vec<(BondParity, T)>,
}

impl<T: Real> SweepSchedule<T> {
    pub fn new(stages: Vec<(BondParity, T)>) -> Result<Self> {
        let mut sums = [T::zero(), T::zero()];
        for &(p, c) in &stages {
            sums[matches!(p, BondParity::Odd) as usize] += c;
        }
        for (s, name) in sums.iter().zip(["even", "odd"]) {
            if (*s - T::one()).abs() > T::of(1e-12) {
                return Err(Error::Structure(format!(
                    "{name} coefficients sum to {s}, want 1"
                )));
            }
        }
        Ok(SweepSchedule { stages })
    }

    /// First-order splitting: even then odd, full steps.
    pub fn first_order() -> Self {
        SweepSchedule {
            stages: vec![(BondParity::Even, T::one()), (BondParity::Odd, T::one())],
        }
    }

    /// Symmetric second-order splitting: even/2, odd, even/2.
    pub fn second_order() -> Self {
        let half = T::of(0.5);
        SweepSchedule {
            stages: vec![
                (BondParity::Even, half),
                (BondParity::Odd, T::one()),
                (BondParity::Even, half),
            ],
        }
    }

    /// Omelyan-Mryglod-Folk optimized fourth-order decomposition (the
    /// position-extended Forest-Ruth form), nine stages.
    pub fn omelyan_fourth_order() -> Self {
        let xi = T::of(0.178_617_895_844_809_1);
        let lambda = T::of(-0.212_341_831_062_605_4);
        let chi = T::of(-0.066_264_582_669_818_49);
        let one = T::one();
        let two = T::of(2.0);
        let half = T::of(0.5);
        let mid_even = one - two * (chi + xi);
        let edge_odd = half * (one - two * lambda);
        SweepSchedule {
            stages: vec![
                (BondParity::Even, xi),
                (BondParity::Odd, edge_odd),
                (BondParity::Even, chi),
                (BondParity::Odd, lambda),
                (BondParity::Even, mid_even),
                (BondParity::Odd, lambda),
                (BondParity::Even, chi),
                (BondParity::Odd, edge_odd),
                (BondParity::Even, xi),
            ],
        }
    }

    pub fn stages(&self) -> &[(BondParity, T)] {
        &self.stages
    }
}

/// exp(-step * term) for a Hermitian two-site term, exponentiated within
/// each two-site total-occupation block.
pub fn gate_from_term<T: Real>(
    term: &BondTerm<T>,
    step: Complex<T>,
) -> Result<Array2<Complex<T>>> {
    let dd = term.matrix.nrows();
    if term.matrix.ncols() != dd {
        return Err(Error::Structure("two-site term must be square".into()));
    }
    let d = (dd as f64).sqrt().round() as usize;
    if d * d != dd {
        return Err(Error::Structure(format!(
            "two-site term dimension {dd} is not a perfect square"
        )));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..dd {
        groups.entry(i / d + i % d).or_default().push(i);
    }
    let mut out = Array2::zeros((dd, dd));
    for idx in groups.values() {
        let k = idx.len();
        let sub = Array2::from_shape_fn((k, k), |(a, b)| term.matrix[(idx[a], idx[b])]);
        let e = linalg::expm_sym_scaled(&sub, -step)?;
        for a in 0..k {
            for b in 0..k {
                out[(idx[a], idx[b])] = e[(a, b)];
            }
        }
    }
    Ok(out)
}

/// Turn a dense two-site gate into a four-leg tensor [new1 in, new2 in,
/// old1 out, old2 out] over occupation legs of dimension n_max + 1.
fn gate_tensor<T: Real>(dense: &Array2<Complex<T>>, n_max: usize) -> Result<SymTensor<T>> {
    let d = n_max + 1;
    let phys = ChargeIndex::occupation(Direction::Incoming, n_max);
    let indices = vec![phys.clone(), phys.clone(), phys.dual(), phys.dual()];
    let reshaped = dense
        .to_owned()
        .into_shape_with_order(ndarray::IxDyn(&[d, d, d, d]))
        .map_err(|_| Error::Structure("gate dimension does not match n_max".into()))?;
    SymTensor::from_dense(indices, 0, &reshaped, T::of(1e-12))
}

/// Apply one dense two-site gate to bond m of a state.
pub fn apply_gate<T: Real>(
    psi: &mut MatrixProductState<T>,
    gate: &Array2<Complex<T>>,
    bond: usize,
    trunc: &TruncationSpec<T>,
) -> Result<T> {
    let n_max = psi.local_dims()[bond] - 1;
    let tensor = gate_tensor(gate, n_max)?;
    psi.apply_two_site(&tensor, bond, trunc)
}

/// A bundle of simultaneous (disjoint-support) gates, prebuilt as tensors.
pub struct GateSet<T: Real> {
    gates: Vec<(usize, SymTensor<T>)>,
    step: Complex<T>,
}

impl<T: Real> GateSet<T> {
    /// Build gates exp(-step * term) for every term, acting at chain bond
    /// `term.site + bond_offset`. For purely imaginary steps each gate is
    /// checked unitary; real steps produce Hermitian positive gates.
    pub fn build(
        terms: &[BondTerm<T>],
        step: Complex<T>,
        n_max: usize,
        bond_offset: usize,
    ) -> Result<Self> {
        let mut gates = Vec::with_capacity(terms.len());
        for term in terms {
            let dense = gate_from_term(term, step)?;
            if step.re.abs() <= T::of(1e-14) * step.im.abs().max(T::one()) {
                let err = unitarity_deviation(&dense);
                if err > T::of(1e-12) {
                    return Err(Error::Structure(format!(
                        "real-time gate at bond {} deviates from unitarity by {err:e}",
                        term.site
                    )));
                }
            }
            gates.push((term.site + bond_offset, gate_tensor(&dense, n_max)?));
        }
        gates.sort_by_key(|&(bond, _)| bond);
        Ok(GateSet { gates, step })
    }

    pub fn step(&self) -> Complex<T> {
        self.step
    }

    pub fn bonds(&self) -> impl Iterator<Item = usize> + '_ {
        self.gates.iter().map(|&(b, _)| b)
    }

    /// Apply every gate once; ascending bond order forward, exact reverse
    /// otherwise. Returns accumulated discarded weight.
    pub fn apply(
        &self,
        psi: &mut MatrixProductState<T>,
        trunc: &TruncationSpec<T>,
        reverse: bool,
    ) -> Result<T> {
        let mut discarded = T::zero();
        if reverse {
            for (bond, gate) in self.gates.iter().rev() {
                discarded += psi.apply_two_site(gate, *bond, trunc)?;
            }
        } else {
            for (bond, gate) in &self.gates {
                discarded += psi.apply_two_site(gate, *bond, trunc)?;
            }
        }
        Ok(discarded)
    }
}

fn unitarity_deviation<T: Real>(gate: &Array2<Complex<T>>) -> T {
    let gh = Array2::from_shape_fn((gate.ncols(), gate.nrows()), |(i, j)| gate[(j, i)].conj());
    let prod = gh.dot(gate);
    let mut err = T::zero();
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let want = if i == j { T::one() } else { T::zero() };
            let dev = (prod[(i, j)] - Complex::new(want, T::zero()))
                .norm_sqr()
                .sqrt();
            if dev > err {
                err = dev;
            }
        }
    }
    err
}

/// Imaginary-time evolve psi toward e^{-beta_half * H} psi using the given
/// Trotter schedule, renormalizing after every step of size dtau. The
/// Hamiltonian (including -μ n) comes from the model's bond decomposition.
/// Returns the total discarded weight.
pub fn evolve_imaginary<T: Real>(
    psi: &mut MatrixProductState<T>,
    spec: &ModelSpec<T>,
    beta_half: T,
    dtau: T,
    schedule: &SweepSchedule<T>,
    trunc: &TruncationSpec<T>,
) -> Result<T> {
    if beta_half < T::zero() {
        return Err(Error::Domain(format!(
            "imaginary time must be non-negative, got {beta_half}"
        )));
    }
    if beta_half == T::zero() {
        return Ok(T::zero());
    }
    if dtau <= T::zero() {
        return Err(Error::Domain(format!("dtau must be positive, got {dtau}")));
    }
    let steps_f = (beta_half / dtau).as_f64();
    let n_steps = steps_f.round() as u64;
    if n_steps == 0 || (T::of(n_steps as f64) * dtau - beta_half).abs() > T::of(1e-12) {
        return Err(Error::Domain(format!(
            "dtau {dtau} does not divide the imaginary time {beta_half}"
        )));
    }
    let offset = if psi.len() == spec.l { 0 } else { 1 };
    // partition the full Hamiltonian (μ included) into commuting bond groups
    let (even_terms, odd_terms): (Vec<_>, Vec<_>) = model::hamiltonian_bonds(spec)
        .into_iter()
        .partition(|t| t.site % 2 == 1);
    // one gate set per distinct (parity, coefficient)
    let mut cache: BTreeMap<(bool, u64), GateSet<T>> = BTreeMap::new();
    for &(parity, coeff) in schedule.stages() {
        let key = (
            matches!(parity, BondParity::Odd),
            coeff.as_f64().to_bits(),
        );
        if !cache.contains_key(&key) {
            let terms = match parity {
                BondParity::Even => &even_terms,
                BondParity::Odd => &odd_terms,
            };
            let step = Complex::new(coeff * dtau, T::zero());
            cache.insert(key, GateSet::build(terms, step, spec.n_max, offset)?);
        }
    }
    let mut total = T::zero();
    for _ in 0..n_steps {
        let mut step_discarded = T::zero();
        for &(parity, coeff) in schedule.stages() {
            let key = (
                matches!(parity, BondParity::Odd),
                coeff.as_f64().to_bits(),
            );
            step_discarded += cache[&key].apply(psi, trunc, false)?;
        }
        psi.normalize()?;
        total += step_discarded;
        if step_discarded > T::of(1e3) * trunc.cutoff {
            log::warn!(
                "imaginary-time step discarded weight {:.3e} (cutoff {:.1e})",
                step_discarded.as_f64(),
                trunc.cutoff.as_f64()
            );
        }
    }
    Ok(total)
}

/// The gate sequence of [U_T(τ/n)]^n, prebuilt for repeated application.
pub struct SymmetricUnitary<T: Real> {
    odd: GateSet<T>,
    even: GateSet<T>,
    n: usize,
}

impl<T: Real> SymmetricUnitary<T> {
    /// Build from the model's even/odd gate Hamiltonians (interaction U',
    /// no chemical potential) with per-gate time τ/n. `bond_offset` shifts
    /// bond indices for ancilla-padded chains.
    pub fn build(spec: &ModelSpec<T>, tau: T, n: usize, bond_offset: usize) -> Result<Self> {
        if tau < T::zero() {
            return Err(Error::Domain(format!("tau must be non-negative, got {tau}")));
        }
        if n == 0 {
            return Err(Error::Domain("gate repetition count must be positive".into()));
        }
        let (even_terms, odd_terms) = model::trotter_hamiltonians(spec);
        let s = tau / T::of(n as f64);
        let step = Complex::new(T::zero(), s);
        Ok(SymmetricUnitary {
            odd: GateSet::build(&odd_terms, step, spec.n_max, bond_offset)?,
            even: GateSet::build(&even_terms, step, spec.n_max, bond_offset)?,
            n,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.odd.step.im == T::zero() && self.even.step.im == T::zero()
    }

    /// Apply [U_T(τ/n)]^n (forward) or its adjoint (exact reverse order with
    /// conjugated gates). Returns the discarded weight.
    pub fn apply(
        &self,
        psi: &mut MatrixProductState<T>,
        trunc: &TruncationSpec<T>,
        direction: UnitaryDirection,
    ) -> Result<T> {
        if self.is_identity() {
            return Ok(T::zero());
        }
        let mut discarded = T::zero();
        match direction {
            UnitaryDirection::Forward => {
                for _ in 0..self.n {
                    // U_T(s) = e^{-is H_even} e^{-is H_odd}: odd acts first
                    discarded += self.odd.apply(psi, trunc, false)?;
                    discarded += self.even.apply(psi, trunc, false)?;
                }
            }
            UnitaryDirection::Adjoint => {
                let odd_adj = self.odd.conjugated();
                let even_adj = self.even.conjugated();
                for _ in 0..self.n {
                    discarded += even_adj.apply(psi, trunc, true)?;
                    discarded += odd_adj.apply(psi, trunc, true)?;
                }
            }
        }
        Ok(discarded)
    }
}

impl<T: Real> GateSet<T> {
    /// The adjoint gate set: same bonds, conjugate-transposed gates. For a
    /// gate e^{-step H} this is e^{-conj(step) H}.
    fn conjugated(&self) -> GateSet<T> {
        let gates = self
            .gates
            .iter()
            .map(|(bond, g)| {
                // conj() flips directions and leg meaning: [new,new,old,old]
                // conjugated becomes [old out, old out, new in, new in];
                // permute back to [new, new, old, old]
                let adj = g
                    .conj()
                    .permuted(&[2, 3, 0, 1])
                    .expect("rank-4 permutation is valid");
                (*bond, adj)
            })
            .collect();
        GateSet {
            gates,
            step: self.step.conj(),
        }
    }
}

/// Convenience wrapper: build and apply [U_T(τ/n)]^n once.
pub fn apply_symmetric_unitary<T: Real>(
    psi: &mut MatrixProductState<T>,
    spec: &ModelSpec<T>,
    tau: T,
    n: usize,
    trunc: &TruncationSpec<T>,
    direction: UnitaryDirection,
) -> Result<T> {
    let offset = if psi.len() == spec.l { 0 } else { 1 };
    SymmetricUnitary::build(spec, tau, n, offset)?.apply(psi, trunc, direction)
}
