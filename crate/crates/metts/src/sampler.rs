//! The thermal-sampling Markov chain: imaginary-time evolution of a
//! product state, measurement, and collapse back to a product state,
//! alternating between the computational occupation basis (even steps) and
//! a gate-rotated symmetric basis (odd steps). A hybrid variant purifies
//! the two edge sites against ancillas so the physical particle number can
//! fluctuate at fixed chemical potential.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{self, ModelSpec};
use crate::mps::{CpsConfig, MatrixProductState};
use crate::propagator::{
    evolve_imaginary, SweepSchedule, SymmetricUnitary, UnitaryDirection,
};
use crate::symtensor::{ChargeIndex, Direction, SymTensor, TruncationSpec};
use crate::{Error, Real, Result};

/// Thermal ensemble being sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// Fixed particle number, set by the initial configuration's total.
    Canonical,
    /// Fixed chemical potential with purified edge sites.
    GrandCanonical,
}

/// Whether a step collapses to the plain occupation basis (even) or the
/// gate-rotated basis (odd).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepParity {
    Even,
    Odd,
}

impl StepParity {
    pub fn of_step(step: u64) -> Self {
        if step % 2 == 0 {
            StepParity::Even
        } else {
            StepParity::Odd
        }
    }
}

/// Everything one Markov chain needs.
#[derive(Clone, Debug)]
pub struct ChainConfig<T: Real> {
    pub model: ModelSpec<T>,
    /// Inverse temperature (units 1/J).
    pub beta: T,
    /// Imaginary-time step; must divide beta/2.
    pub dtau: T,
    /// Basis-rotation gate time; 0 disables rotation entirely.
    pub tau: T,
    /// Gate repetitions n in [U_T(tau/n)]^n.
    pub n_gates: usize,
    pub ensemble: Ensemble,
    pub n_samples: usize,
    /// Leading steps excluded from statistics (still recorded; consumers
    /// slice on the step index).
    pub burn_in: usize,
    pub seed: u64,
    pub trunc: TruncationSpec<T>,
    /// Starting configuration: all sites (canonical) or the inner physical
    /// sites only (grand-canonical).
    pub initial: CpsConfig,
    pub schedule: SweepSchedule<T>,
}

pub const DEFAULT_BURN_IN: usize = 32;

/// Imaginary-time step giving negligible Trotter bias for the default
/// second-order schedule: coarser for soft-core, finer for hardcore.
pub fn default_dtau<T: Real>(hardcore: bool) -> T {
    T::of(if hardcore { 0.025 } else { 0.0625 })
}

impl<T: Real> ChainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.beta < T::zero() {
            return Err(Error::Domain(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        if self.beta > T::zero() {
            if self.dtau <= T::zero() {
                return Err(Error::Domain(format!(
                    "dtau must be positive, got {}",
                    self.dtau
                )));
            }
            let half = self.beta * T::of(0.5);
            let steps = (half / self.dtau).as_f64().round();
            if steps < 1.0 || (T::of(steps) * self.dtau - half).abs() > T::of(1e-12) {
                return Err(Error::Domain(format!(
                    "dtau {} does not divide beta/2 = {half}",
                    self.dtau
                )));
            }
        }
        if self.tau < T::zero() {
            return Err(Error::Domain(format!(
                "tau must be non-negative, got {}",
                self.tau
            )));
        }
        if self.n_gates == 0 {
            return Err(Error::Domain("gate repetition count must be positive".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::Domain("n_samples must be positive".into()));
        }
        let want = match self.ensemble {
            Ensemble::Canonical => self.model.l,
            Ensemble::GrandCanonical => self.model.l - 2,
        };
        if self.initial.len() != want {
            return Err(Error::Domain(format!(
                "initial configuration has {} sites, expected {want}",
                self.initial.len()
            )));
        }
        if let Some(&n) = self
            .initial
            .occupations
            .iter()
            .find(|&&n| n > self.model.n_max)
        {
            return Err(Error::Domain(format!(
                "initial occupation {n} exceeds n_max {}",
                self.model.n_max
            )));
        }
        Ok(())
    }
}

/// One measurement, emitted every Monte Carlo step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub step: u64,
    pub parity: StepParity,
    /// ⟨H⟩ of the evolved state, chemical-potential term excluded (units J).
    pub energy: f64,
    /// ⟨N⟩ over physical sites.
    pub n_total: f64,
    /// ⟨N²⟩ over physical sites.
    pub n_total_sq: f64,
    /// Largest bond dimension of the evolved state.
    pub max_bond: usize,
    /// Truncation weight discarded during this step.
    pub discarded: f64,
    /// Wall-clock time of the full step: rebuild, evolution, measurement,
    /// and collapse.
    pub wall_seconds: f64,
}

/// The chain's between-step state: a stored configuration plus a flag
/// saying whether it labels a rotated-basis state (the represented state
/// is then [U_T(τ/n)]^n |config⟩).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainState {
    pub config: CpsConfig,
    pub rotated: bool,
}

fn with_step<V>(r: Result<V>, step: u64) -> Result<V> {
    r.map_err(|e| match e {
        Error::Numerical { msg, .. } => Error::Numerical { step, msg },
        other => other,
    })
}

/// Ancilla leg: occupation n carries charge -n, so a purified pair is
/// charge-neutral. Sector position p holds occupation d-1-p.
fn ancilla_index(d: usize) -> ChargeIndex {
    let sectors = (0..d).map(|p| (p as i64 - (d as i64 - 1), 1)).collect();
    ChargeIndex::new(Direction::Incoming, sectors).expect("ascending by construction")
}

/// Build the purified chain [ancilla, p_1, ..., p_L, ancilla]: both edge
/// physical sites are maximally entangled with their ancilla,
/// Σ_n |n⟩|n⟩/√d, and the inner sites hold the given configuration. The
/// global charge equals the inner occupation total; the physical particle
/// number fluctuates against the ancillas during evolution.
pub fn hybrid_reset_and_build<T: Real>(
    inner: &CpsConfig,
    spec: &ModelSpec<T>,
) -> Result<MatrixProductState<T>> {
    if inner.len() + 2 != spec.l {
        return Err(Error::Domain(format!(
            "inner configuration has {} sites, expected {}",
            inner.len(),
            spec.l - 2
        )));
    }
    if let Some(&n) = inner.occupations.iter().find(|&&n| n > spec.n_max) {
        return Err(Error::Domain(format!(
            "inner occupation {n} exceeds n_max {}",
            spec.n_max
        )));
    }
    let d = spec.local_dim();
    let amp = num_complex::Complex::new(T::one() / T::of(d as f64).sqrt(), T::zero());
    let one = num_complex::Complex::new(T::one(), T::zero());
    let anc = ancilla_index(d);
    let phys = ChargeIndex::occupation(Direction::Incoming, spec.n_max);
    let block1 = ndarray::ArrayD::from_elem(ndarray::IxDyn(&[1, 1, 1]), amp);
    let unit = ndarray::ArrayD::from_elem(ndarray::IxDyn(&[1, 1, 1]), one);

    let mut sites = Vec::with_capacity(spec.l + 2);
    // left ancilla: bond charge -n for pair occupation n
    let pair_bond = anc.sectors().to_vec();
    let left_bond = ChargeIndex::new(Direction::Outgoing, pair_bond.clone())?;
    let mut anc0 = SymTensor::new(
        vec![ChargeIndex::trivial(Direction::Incoming), anc.clone(), left_bond.clone()],
        0,
    );
    for n in 0..d {
        anc0.insert_block(vec![0, d - 1 - n, d - 1 - n], block1.clone())?;
    }
    sites.push(anc0);
    // first physical site closes the pair: bond charge returns to 0
    let zero_bond = ChargeIndex::new(Direction::Outgoing, vec![(0, 1)])?;
    let mut p1 = SymTensor::new(vec![left_bond.dual(), phys.clone(), zero_bond.clone()], 0);
    for n in 0..d {
        p1.insert_block(vec![d - 1 - n, n, 0], unit.clone())?;
    }
    sites.push(p1);
    // inner sites accumulate their occupations on the bond
    let mut acc = 0i64;
    let mut prev_bond = zero_bond;
    for &n in &inner.occupations {
        acc += n as i64;
        let next_bond = ChargeIndex::new(Direction::Outgoing, vec![(acc, 1)])?;
        let mut site = SymTensor::new(vec![prev_bond.dual(), phys.clone(), next_bond.clone()], 0);
        site.insert_block(vec![0, n, 0], unit.clone())?;
        sites.push(site);
        prev_bond = next_bond;
    }
    // last physical site opens the right pair
    let right_pair = ChargeIndex::new(
        Direction::Outgoing,
        (0..d).map(|n| (acc + n as i64, 1)).collect(),
    )?;
    let mut pl = SymTensor::new(vec![prev_bond.dual(), phys.clone(), right_pair.clone()], 0);
    for n in 0..d {
        pl.insert_block(vec![0, n, n], unit.clone())?;
    }
    sites.push(pl);
    // right ancilla closes it at the fixed global charge
    let edge = ChargeIndex::new(Direction::Outgoing, vec![(acc, 1)])?;
    let mut anc1 = SymTensor::new(vec![right_pair.dual(), anc, edge], 0);
    for n in 0..d {
        anc1.insert_block(vec![n, d - 1 - n, 0], block1.clone())?;
    }
    sites.push(anc1);
    MatrixProductState::from_site_tensors(sites)
}

fn build_unitary<T: Real>(cfg: &ChainConfig<T>) -> Result<Option<SymmetricUnitary<T>>> {
    if cfg.tau == T::zero() {
        return Ok(None);
    }
    let offset = match cfg.ensemble {
        Ensemble::Canonical => 0,
        Ensemble::GrandCanonical => 1,
    };
    Ok(Some(SymmetricUnitary::build(
        &cfg.model,
        cfg.tau,
        cfg.n_gates,
        offset,
    )?))
}

fn step_core<T: Real>(
    state: &ChainState,
    parity: StepParity,
    step_index: u64,
    cfg: &ChainConfig<T>,
    unitary: Option<&SymmetricUnitary<T>>,
    rng: &mut (impl Rng + ?Sized),
) -> Result<(ChainState, SampleRecord)> {
    let start = Instant::now();
    let mut discarded = T::zero();
    // rebuild the represented state from the stored configuration
    let mut psi = match cfg.ensemble {
        Ensemble::Canonical => MatrixProductState::from_cps(&state.config, cfg.model.local_dim())?,
        Ensemble::GrandCanonical => hybrid_reset_and_build(&state.config, &cfg.model)?,
    };
    if state.rotated {
        if let Some(u) = unitary {
            discarded += with_step(
                u.apply(&mut psi, &cfg.trunc, UnitaryDirection::Forward),
                step_index,
            )?;
            with_step(psi.normalize(), step_index)?;
        }
    }
    discarded += with_step(
        evolve_imaginary(
            &mut psi,
            &cfg.model,
            cfg.beta * T::of(0.5),
            cfg.dtau,
            &cfg.schedule,
            &cfg.trunc,
        ),
        step_index,
    )?;
    with_step(psi.normalize(), step_index)?;
    // measure on the evolved state, before any basis change
    let energy = with_step(model::energy(&mut psi, &cfg.model), step_index)?;
    let (n_total, n_total_sq) = with_step(model::number_total(&mut psi, &cfg.model), step_index)?;
    let max_bond = psi.max_bond();
    // collapse: odd parity rotates back first, storing a rotated-basis label
    let rotate_collapse = matches!(parity, StepParity::Odd) && unitary.is_some();
    if rotate_collapse {
        let u = unitary.expect("checked above");
        discarded += with_step(
            u.apply(&mut psi, &cfg.trunc, UnitaryDirection::Adjoint),
            step_index,
        )?;
        with_step(psi.normalize(), step_index)?;
    }
    let range = match cfg.ensemble {
        Ensemble::Canonical => 0..cfg.model.l,
        Ensemble::GrandCanonical => 2..cfg.model.l,
    };
    let (config, _log_prob) = with_step(psi.collapse_sites(rng, range), step_index)?;
    let record = SampleRecord {
        step: step_index,
        parity,
        energy: energy.as_f64(),
        n_total: n_total.as_f64(),
        n_total_sq: n_total_sq.as_f64(),
        max_bond,
        discarded: discarded.as_f64().max(0.0),
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((
        ChainState {
            config,
            rotated: rotate_collapse,
        },
        record,
    ))
}

/// One canonical Monte Carlo step: rebuild, evolve to β/2, measure, and
/// collapse in the basis selected by `parity`. The gate unitary is rebuilt
/// on every call; [`MettsChain`] caches it across a run.
pub fn metts_step_canonical<T: Real>(
    state: &ChainState,
    parity: StepParity,
    step_index: u64,
    cfg: &ChainConfig<T>,
    rng: &mut (impl Rng + ?Sized),
) -> Result<(ChainState, SampleRecord)> {
    if cfg.ensemble != Ensemble::Canonical {
        return Err(Error::Domain("config is not canonical".into()));
    }
    let unitary = build_unitary(cfg)?;
    step_core(state, parity, step_index, cfg, unitary.as_ref(), rng)
}

/// One grand-canonical step over the purified chain: as the canonical step,
/// but gates and Hamiltonian act on physical sites only, the collapse runs
/// over the inner physical sites, and the edge pairs are rebuilt fresh from
/// the stored inner configuration on the next step.
pub fn metts_step_grand<T: Real>(
    state: &ChainState,
    parity: StepParity,
    step_index: u64,
    cfg: &ChainConfig<T>,
    rng: &mut (impl Rng + ?Sized),
) -> Result<(ChainState, SampleRecord)> {
    if cfg.ensemble != Ensemble::GrandCanonical {
        return Err(Error::Domain("config is not grand-canonical".into()));
    }
    let unitary = build_unitary(cfg)?;
    step_core(state, parity, step_index, cfg, unitary.as_ref(), rng)
}

/// A running Markov chain with its cached gate sequence and generator.
/// The generator is consumed only by collapse draws, so equal seeds give
/// equal trajectories.
pub struct MettsChain<T: Real> {
    cfg: ChainConfig<T>,
    unitary: Option<SymmetricUnitary<T>>,
    rng: ChaCha8Rng,
    state: ChainState,
    step: u64,
}

impl<T: Real> MettsChain<T> {
    pub fn new(cfg: ChainConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let unitary = build_unitary(&cfg)?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let state = ChainState {
            config: cfg.initial.clone(),
            rotated: false,
        };
        Ok(MettsChain {
            cfg,
            unitary,
            rng,
            state,
            step: 0,
        })
    }

    pub fn config(&self) -> &ChainConfig<T> {
        &self.cfg
    }

    /// The stored configuration entering the next step.
    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Advance one step and return its measurement record.
    pub fn step_once(&mut self) -> Result<SampleRecord> {
        let parity = StepParity::of_step(self.step);
        let (next, record) = step_core(
            &self.state,
            parity,
            self.step,
            &self.cfg,
            self.unitary.as_ref(),
            &mut self.rng,
        )?;
        self.state = next;
        self.step += 1;
        Ok(record)
    }
}

/// Run burn_in + n_samples steps, handing each record to the sink as soon
/// as it exists. Burn-in records have step < burn_in.
pub fn run_chain_with<T: Real>(
    cfg: &ChainConfig<T>,
    mut sink: impl FnMut(&SampleRecord) -> Result<()>,
) -> Result<()> {
    let mut chain = MettsChain::new(cfg.clone())?;
    let total = cfg.burn_in + cfg.n_samples;
    for _ in 0..total {
        let record = chain.step_once()?;
        sink(&record)?;
    }
    Ok(())
}

/// Run the chain and collect every record.
pub fn run_chain<T: Real>(cfg: &ChainConfig<T>) -> Result<Vec<SampleRecord>> {
    let mut out = Vec::with_capacity(cfg.burn_in + cfg.n_samples);
    run_chain_with(cfg, |r| {
        out.push(r.clone());
        Ok(())
    })?;
    Ok(out)
}
