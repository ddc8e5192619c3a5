//! Block-sparse tensors with an additive U(1) charge law.
//!
//! Every tensor leg is a [`ChargeIndex`]: an ordered list of (charge,
//! degeneracy) sectors plus a direction. A dense block may exist only for
//! sector combinations whose signed charge sum (outgoing minus incoming)
//! equals the tensor's `total_charge`. Contraction and SVD act sector by
//! sector, which is what keeps particle number exactly conserved through
//! every MPS operation built on top.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayD, Dimension, IxDyn};
use num_complex::Complex;

use crate::linalg;
use crate::{Error, Real, Result};

/// Whether a leg's charge counts negatively (incoming) or positively
/// (outgoing) toward the tensor's total charge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Incoming,
    Outgoing,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Incoming => Direction::Outgoing,
            Direction::Outgoing => Direction::Incoming,
        }
    }

    fn sign(self) -> i64 {
        match self {
            Direction::Incoming => -1,
            Direction::Outgoing => 1,
        }
    }
}

/// A tensor leg: charge sectors with degeneracies, plus a direction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChargeIndex {
    direction: Direction,
    sectors: Vec<(i64, usize)>,
}

impl ChargeIndex {
    pub fn new(direction: Direction, sectors: Vec<(i64, usize)>) -> Result<Self> {
        if sectors.is_empty() {
            return Err(Error::Structure("charge index with no sectors".into()));
        }
        for w in sectors.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Structure(format!(
                    "sector charges must be strictly increasing, got {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if sectors.iter().any(|&(_, d)| d == 0) {
            return Err(Error::Structure("sector with zero degeneracy".into()));
        }
        Ok(ChargeIndex { direction, sectors })
    }

    /// Single sector of charge 0 and dimension 1.
    pub fn trivial(direction: Direction) -> Self {
        ChargeIndex {
            direction,
            sectors: vec![(0, 1)],
        }
    }

    /// One sector of dimension 1 for each occupation 0..=n_max.
    pub fn occupation(direction: Direction, n_max: usize) -> Self {
        ChargeIndex {
            direction,
            sectors: (0..=n_max as i64).map(|c| (c, 1)).collect(),
        }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn sectors(&self) -> &[(i64, usize)] {
        &self.sectors
    }

    pub fn n_sectors(&self) -> usize {
        self.sectors.len()
    }

    pub fn charge(&self, sector: usize) -> i64 {
        self.sectors[sector].0
    }

    pub fn degeneracy(&self, sector: usize) -> usize {
        self.sectors[sector].1
    }

    pub fn dim(&self) -> usize {
        self.sectors.iter().map(|&(_, d)| d).sum()
    }

    /// Same sectors, opposite direction.
    pub fn dual(&self) -> Self {
        ChargeIndex {
            direction: self.direction.flip(),
            sectors: self.sectors.clone(),
        }
    }

    /// Sector position holding the given charge.
    pub fn position(&self, charge: i64) -> Option<usize> {
        self.sectors.binary_search_by_key(&charge, |&(c, _)| c).ok()
    }

    /// Dense offset of each sector's first state.
    pub(crate) fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.sectors.len());
        let mut acc = 0;
        for &(_, d) in &self.sectors {
            out.push(acc);
            acc += d;
        }
        out
    }

    fn same_sectors(&self, other: &Self) -> bool {
        self.sectors == other.sectors
    }
}

/// Truncation policy for [`SymTensor::svd_truncate`].
#[derive(Clone, Copy, Debug)]
pub struct TruncationSpec<T> {
    pub max_bond: usize,
    pub cutoff: T,
}

impl<T: Real> TruncationSpec<T> {
    pub fn new(max_bond: usize, cutoff: T) -> Result<Self> {
        if max_bond == 0 {
            return Err(Error::Structure("max_bond must be positive".into()));
        }
        if cutoff < T::zero() || cutoff >= T::one() {
            return Err(Error::Structure(format!(
                "cutoff must lie in [0, 1), got {cutoff}"
            )));
        }
        Ok(TruncationSpec { max_bond, cutoff })
    }

    /// No truncation beyond exact rank (within numerical zero).
    pub fn exact() -> Self {
        TruncationSpec {
            max_bond: usize::MAX,
            cutoff: T::zero(),
        }
    }
}

/// Singular values of a charge-resolved SVD, grouped by bond sector.
#[derive(Clone, Debug)]
pub struct SingularValues<T> {
    /// Ascending bond charge; values within a sector descend.
    sectors: Vec<(i64, Vec<T>)>,
}

impl<T: Real> SingularValues<T> {
    pub fn sectors(&self) -> &[(i64, Vec<T>)] {
        &self.sectors
    }

    pub fn bond_dim(&self) -> usize {
        self.sectors.iter().map(|(_, v)| v.len()).sum()
    }

    /// All values, sorted descending across sectors.
    pub fn values_desc(&self) -> Vec<T> {
        let mut v: Vec<T> = self
            .sectors
            .iter()
            .flat_map(|(_, vals)| vals.iter().copied())
            .collect();
        v.sort_by(|a, b| b.partial_cmp(a).expect("singular values are finite"));
        v
    }

    pub fn norm_sqr(&self) -> T {
        let mut acc = T::zero();
        for (_, vals) in &self.sectors {
            for &s in vals {
                acc += s * s;
            }
        }
        acc
    }

    /// The bond index these values live on, with the given direction.
    pub fn bond_index(&self, direction: Direction) -> ChargeIndex {
        ChargeIndex {
            direction,
            sectors: self.sectors.iter().map(|(q, v)| (*q, v.len())).collect(),
        }
    }

    /// Diagonal two-leg tensor [incoming bond, outgoing bond].
    pub fn to_tensor(&self) -> SymTensor<T> {
        let mut t = SymTensor::new(
            vec![
                self.bond_index(Direction::Incoming),
                self.bond_index(Direction::Outgoing),
            ],
            0,
        );
        for (pos, (_, vals)) in self.sectors.iter().enumerate() {
            let d = vals.len();
            let mut a = ArrayD::zeros(IxDyn(&[d, d]));
            for (i, &s) in vals.iter().enumerate() {
                a[[i, i]] = Complex::new(s, T::zero());
            }
            t.insert_block(vec![pos, pos], a)
                .expect("diagonal block is charge-allowed");
        }
        t
    }
}

/// Block-sparse tensor: dense blocks keyed by per-leg sector choices.
#[derive(Clone, Debug)]
pub struct SymTensor<T: Real> {
    indices: Vec<ChargeIndex>,
    total_charge: i64,
    blocks: BTreeMap<Vec<usize>, ArrayD<Complex<T>>>,
}

impl<T: Real> SymTensor<T> {
    /// Empty (all-zero) tensor over the given legs.
    pub fn new(indices: Vec<ChargeIndex>, total_charge: i64) -> Self {
        SymTensor {
            indices,
            total_charge,
            blocks: BTreeMap::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[ChargeIndex] {
        &self.indices
    }

    pub fn index(&self, i: usize) -> &ChargeIndex {
        &self.indices[i]
    }

    pub fn total_charge(&self) -> i64 {
        self.total_charge
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn key_charge(&self, key: &[usize]) -> i64 {
        key.iter()
            .zip(&self.indices)
            .map(|(&s, idx)| idx.direction.sign() * idx.charge(s))
            .sum()
    }

    /// Is this sector combination charge-allowed?
    pub fn key_allowed(&self, key: &[usize]) -> bool {
        key.len() == self.indices.len()
            && key.iter().zip(&self.indices).all(|(&s, idx)| s < idx.n_sectors())
            && self.key_charge(key) == self.total_charge
    }

    /// Store a block. The key picks one sector per leg; the block shape must
    /// match the sector degeneracies and the signed charges must sum to
    /// `total_charge`.
    pub fn insert_block(&mut self, key: Vec<usize>, data: ArrayD<Complex<T>>) -> Result<()> {
        if key.len() != self.indices.len() {
            return Err(Error::Structure(format!(
                "block key rank {} vs tensor rank {}",
                key.len(),
                self.indices.len()
            )));
        }
        for (leg, (&s, idx)) in key.iter().zip(&self.indices).enumerate() {
            if s >= idx.n_sectors() {
                return Err(Error::Structure(format!(
                    "sector {s} out of range on leg {leg}"
                )));
            }
        }
        if self.key_charge(&key) != self.total_charge {
            return Err(Error::Structure(format!(
                "block {key:?} violates the charge law (sum {} vs total {})",
                self.key_charge(&key),
                self.total_charge
            )));
        }
        let want: Vec<usize> = key
            .iter()
            .zip(&self.indices)
            .map(|(&s, idx)| idx.degeneracy(s))
            .collect();
        if data.shape() != want.as_slice() {
            return Err(Error::Structure(format!(
                "block {key:?} shape {:?} vs sector degeneracies {want:?}",
                data.shape()
            )));
        }
        self.blocks.insert(key, data);
        Ok(())
    }

    pub fn block(&self, key: &[usize]) -> Option<&ArrayD<Complex<T>>> {
        self.blocks.get(key)
    }

    pub fn blocks_iter(&self) -> impl Iterator<Item = (&Vec<usize>, &ArrayD<Complex<T>>)> {
        self.blocks.iter()
    }

    pub fn norm_sqr(&self) -> T {
        let mut acc = T::zero();
        for b in self.blocks.values() {
            for z in b.iter() {
                acc += z.norm_sqr();
            }
        }
        acc
    }

    pub fn scale(&mut self, f: Complex<T>) {
        for b in self.blocks.values_mut() {
            b.mapv_inplace(|z| z * f);
        }
    }

    /// Complex conjugate: entries conjugated, every leg direction flipped,
    /// total charge negated.
    pub fn conj(&self) -> Self {
        SymTensor {
            indices: self.indices.iter().map(|i| i.dual()).collect(),
            total_charge: -self.total_charge,
            blocks: self
                .blocks
                .iter()
                .map(|(k, b)| (k.clone(), b.mapv(|z| z.conj())))
                .collect(),
        }
    }

    /// Reorder legs; `perm[i]` is the old position of new leg i.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Structure(format!(
                "invalid permutation {perm:?} for rank {r}"
            )));
        }
        let indices = perm.iter().map(|&p| self.indices[p].clone()).collect();
        let mut out = SymTensor {
            indices,
            total_charge: self.total_charge,
            blocks: BTreeMap::new(),
        };
        for (key, block) in &self.blocks {
            let new_key: Vec<usize> = perm.iter().map(|&p| key[p]).collect();
            let data = block
                .view()
                .permuted_axes(IxDyn(perm))
                .as_standard_layout()
                .into_owned();
            out.blocks.insert(new_key, data);
        }
        Ok(out)
    }

    /// Two-leg identity [dual(idx), idx]; contracting it onto a matching leg
    /// is a no-op.
    pub fn identity(idx: &ChargeIndex) -> Self {
        let mut t = SymTensor::new(vec![idx.dual(), idx.clone()], 0);
        for (pos, &(_, d)) in idx.sectors.iter().enumerate() {
            let mut a = ArrayD::zeros(IxDyn(&[d, d]));
            for i in 0..d {
                a[[i, i]] = Complex::new(T::one(), T::zero());
            }
            t.insert_block(vec![pos, pos], a)
                .expect("identity block is charge-allowed");
        }
        t
    }

    /// Value of a rank-0 tensor.
    pub fn scalar_value(&self) -> Result<Complex<T>> {
        if self.rank() != 0 {
            return Err(Error::Structure(format!(
                "scalar_value on a rank-{} tensor",
                self.rank()
            )));
        }
        Ok(self
            .blocks
            .get(&Vec::new())
            .map(|b| b[IxDyn(&[])])
            .unwrap_or_else(|| Complex::new(T::zero(), T::zero())))
    }

    /// Dense embedding with zeros in charge-forbidden entries.
    pub fn to_dense(&self) -> ArrayD<Complex<T>> {
        let dims: Vec<usize> = self.indices.iter().map(|i| i.dim()).collect();
        let offsets: Vec<Vec<usize>> = self.indices.iter().map(|i| i.offsets()).collect();
        let mut out = ArrayD::zeros(IxDyn(&dims));
        let mut pos = Vec::new();
        for (key, block) in &self.blocks {
            for (idx, &val) in block.indexed_iter() {
                pos.clear();
                for leg in 0..key.len() {
                    pos.push(offsets[leg][key[leg]] + idx[leg]);
                }
                out[IxDyn(&pos)] = val;
            }
        }
        out
    }

    /// Inverse of [`to_dense`]: entries in charge-forbidden positions larger
    /// than `tol` in magnitude are a structural error.
    pub fn from_dense(
        indices: Vec<ChargeIndex>,
        total_charge: i64,
        dense: &ArrayD<Complex<T>>,
        tol: T,
    ) -> Result<Self> {
        let dims: Vec<usize> = indices.iter().map(|i| i.dim()).collect();
        if dense.shape() != dims.as_slice() {
            return Err(Error::Structure(format!(
                "dense shape {:?} vs index dims {dims:?}",
                dense.shape()
            )));
        }
        // Per leg, map each dense position to (sector, inner offset).
        let lookup: Vec<Vec<(usize, usize)>> = indices
            .iter()
            .map(|idx| {
                let mut v = Vec::with_capacity(idx.dim());
                for (s, &(_, d)) in idx.sectors.iter().enumerate() {
                    for i in 0..d {
                        v.push((s, i));
                    }
                }
                v
            })
            .collect();
        let mut out = SymTensor::new(indices, total_charge);
        let rank = out.rank();
        let mut key = vec![0usize; rank];
        let mut inner = vec![0usize; rank];
        for (pos, &val) in dense.indexed_iter() {
            if val.norm_sqr() == T::zero() {
                continue;
            }
            for leg in 0..rank {
                let (s, i) = lookup[leg][pos[leg]];
                key[leg] = s;
                inner[leg] = i;
            }
            if out.key_charge(&key) != out.total_charge {
                let mag = val.norm_sqr().sqrt();
                if mag > tol {
                    return Err(Error::Structure(format!(
                        "dense entry at {:?} (magnitude {mag:e}) violates the charge law",
                        pos.slice(),
                    )));
                }
                continue;
            }
            if !out.blocks.contains_key(&key) {
                let shape: Vec<usize> = key
                    .iter()
                    .zip(&out.indices)
                    .map(|(&s, idx)| idx.degeneracy(s))
                    .collect();
                out.blocks
                    .insert(key.clone(), ArrayD::zeros(IxDyn(&shape)));
            }
            let block = out.blocks.get_mut(&key).expect("just inserted");
            block[IxDyn(&inner)] = val;
        }
        Ok(out)
    }

    /// Pairwise contraction. Each pair (axis of a, axis of b) must carry
    /// identical sectors and opposite directions. Output legs are a's free
    /// legs (in order) followed by b's.
    pub fn contract(a: &Self, b: &Self, pairs: &[(usize, usize)]) -> Result<Self> {
        let (ra, rb) = (a.rank(), b.rank());
        let mut used_a = vec![false; ra];
        let mut used_b = vec![false; rb];
        for &(pa, pb) in pairs {
            if pa >= ra || pb >= rb {
                return Err(Error::Structure(format!(
                    "contraction pair ({pa},{pb}) out of range for ranks ({ra},{rb})"
                )));
            }
            if std::mem::replace(&mut used_a[pa], true)
                || std::mem::replace(&mut used_b[pb], true)
            {
                return Err(Error::Structure(format!(
                    "axis repeated in contraction pairs at ({pa},{pb})"
                )));
            }
            let (ia, ib) = (&a.indices[pa], &b.indices[pb]);
            if !ia.same_sectors(ib) {
                return Err(Error::Structure(format!(
                    "paired legs ({pa},{pb}) have different sectors"
                )));
            }
            if ia.direction() == ib.direction() {
                return Err(Error::Structure(format!(
                    "paired legs ({pa},{pb}) have the same direction"
                )));
            }
        }
        let a_free: Vec<usize> = (0..ra).filter(|&i| !used_a[i]).collect();
        let b_free: Vec<usize> = (0..rb).filter(|&i| !used_b[i]).collect();
        let a_con: Vec<usize> = pairs.iter().map(|&(pa, _)| pa).collect();
        let b_con: Vec<usize> = pairs.iter().map(|&(_, pb)| pb).collect();

        let mut out_indices: Vec<ChargeIndex> =
            a_free.iter().map(|&i| a.indices[i].clone()).collect();
        out_indices.extend(b_free.iter().map(|&i| b.indices[i].clone()));
        let mut out = SymTensor::new(out_indices, a.total_charge + b.total_charge);

        // Group blocks by the contracted sector key.
        let mut a_groups: BTreeMap<Vec<usize>, Vec<(Vec<usize>, Array2<Complex<T>>)>> =
            BTreeMap::new();
        for (key, block) in &a.blocks {
            let kc: Vec<usize> = a_con.iter().map(|&i| key[i]).collect();
            let kf: Vec<usize> = a_free.iter().map(|&i| key[i]).collect();
            let mat = block_as_matrix(block, &a_free, &a_con);
            a_groups.entry(kc).or_default().push((kf, mat));
        }
        let mut b_groups: BTreeMap<Vec<usize>, Vec<(Vec<usize>, Array2<Complex<T>>)>> =
            BTreeMap::new();
        for (key, block) in &b.blocks {
            let kc: Vec<usize> = b_con.iter().map(|&i| key[i]).collect();
            let kf: Vec<usize> = b_free.iter().map(|&i| key[i]).collect();
            let mat = block_as_matrix(block, &b_con, &b_free);
            b_groups.entry(kc).or_default().push((kf, mat));
        }

        let mut acc: BTreeMap<Vec<usize>, Array2<Complex<T>>> = BTreeMap::new();
        for (kc, avec) in &a_groups {
            let Some(bvec) = b_groups.get(kc) else {
                continue;
            };
            for (kfa, ma) in avec {
                for (kfb, mb) in bvec {
                    let prod = linalg::matmul_auto(ma, mb);
                    let mut key = kfa.clone();
                    key.extend_from_slice(kfb);
                    match acc.get_mut(&key) {
                        Some(m) => *m += &prod,
                        None => {
                            acc.insert(key, prod);
                        }
                    }
                }
            }
        }

        for (key, mat) in acc {
            let dims: Vec<usize> = key
                .iter()
                .zip(&out.indices)
                .map(|(&s, idx)| idx.degeneracy(s))
                .collect();
            let data = mat
                .into_shape_with_order(IxDyn(&dims))
                .expect("matrix size matches block dims");
            out.blocks.insert(key, data);
        }
        Ok(out)
    }

    /// Charge-resolved truncated SVD across the bipartition (left legs |
    /// remaining legs). Returns (u, s, v, discarded weight) with
    /// u : [left..., bond out], total charge 0;
    /// v : [bond in, right...], total charge of self;
    /// so contract(contract(u, s.to_tensor()), v) reconstructs self up to
    /// the discarded weight.
    ///
    /// Truncation: singular values are sorted descending across all bond
    /// sectors; the largest tail with squared weight within cutoff * |t|^2 is
    /// dropped, the rest capped at max_bond, and then any value within 1e-12
    /// relative of the smallest kept one is kept too (possibly exceeding
    /// max_bond) so degenerate multiplets are never split.
    pub fn svd_truncate(
        &self,
        left: &[usize],
        spec: &TruncationSpec<T>,
    ) -> Result<(Self, SingularValues<T>, Self, T)> {
        let r = self.rank();
        let mut is_left = vec![false; r];
        if left.is_empty() || left.len() >= r {
            return Err(Error::Structure(format!(
                "svd bipartition needs 1..rank-1 left legs, got {} of {r}",
                left.len()
            )));
        }
        for &l in left {
            if l >= r || std::mem::replace(&mut is_left[l], true) {
                return Err(Error::Structure(format!("bad left leg set {left:?}")));
            }
        }
        let right: Vec<usize> = (0..r).filter(|&i| !is_left[i]).collect();
        if self.blocks.is_empty() {
            return Err(Error::Structure("svd of an all-zero tensor".into()));
        }

        // Assemble one dense matrix per bond charge.
        struct Sector<S> {
            rows: BTreeMap<Vec<usize>, (usize, usize)>,
            cols: BTreeMap<Vec<usize>, (usize, usize)>,
            mat: Array2<S>,
        }
        let mut row_keys: BTreeMap<i64, BTreeMap<Vec<usize>, usize>> = BTreeMap::new();
        let mut col_keys: BTreeMap<i64, BTreeMap<Vec<usize>, usize>> = BTreeMap::new();
        for key in self.blocks.keys() {
            let q_left: i64 = left
                .iter()
                .map(|&i| self.indices[i].direction.sign() * self.indices[i].charge(key[i]))
                .sum();
            let q_bond = -q_left;
            let kl: Vec<usize> = left.iter().map(|&i| key[i]).collect();
            let kr: Vec<usize> = right.iter().map(|&i| key[i]).collect();
            let dl: usize = left.iter().map(|&i| self.indices[i].degeneracy(key[i])).product();
            let dr: usize = right
                .iter()
                .map(|&i| self.indices[i].degeneracy(key[i]))
                .product();
            row_keys.entry(q_bond).or_default().insert(kl, dl);
            col_keys.entry(q_bond).or_default().insert(kr, dr);
        }
        let mut sectors: BTreeMap<i64, Sector<Complex<T>>> = BTreeMap::new();
        for (&q, rows_raw) in &row_keys {
            let cols_raw = &col_keys[&q];
            let mut rows = BTreeMap::new();
            let mut off = 0;
            for (k, &d) in rows_raw {
                rows.insert(k.clone(), (off, d));
                off += d;
            }
            let rtot = off;
            let mut cols = BTreeMap::new();
            let mut off = 0;
            for (k, &d) in cols_raw {
                cols.insert(k.clone(), (off, d));
                off += d;
            }
            let ctot = off;
            sectors.insert(
                q,
                Sector {
                    rows,
                    cols,
                    mat: Array2::zeros((rtot, ctot)),
                },
            );
        }
        for (key, block) in &self.blocks {
            let q_bond: i64 = -left
                .iter()
                .map(|&i| self.indices[i].direction.sign() * self.indices[i].charge(key[i]))
                .sum::<i64>();
            let kl: Vec<usize> = left.iter().map(|&i| key[i]).collect();
            let kr: Vec<usize> = right.iter().map(|&i| key[i]).collect();
            let sector = sectors.get_mut(&q_bond).expect("registered in pass one");
            let &(r0, dl) = &sector.rows[&kl];
            let &(c0, dr) = &sector.cols[&kr];
            let mat = block_as_matrix(block, &left.to_vec(), &right);
            sector
                .mat
                .slice_mut(ndarray::s![r0..r0 + dl, c0..c0 + dr])
                .assign(&mat);
        }

        // Per-sector dense SVDs, then one global truncation decision.
        let mut decomps: BTreeMap<i64, (Array2<Complex<T>>, Vec<T>, Array2<Complex<T>>)> =
            BTreeMap::new();
        let mut entries: Vec<(T, i64, usize)> = Vec::new();
        for (&q, sector) in &sectors {
            let (u, s, vh) = linalg::svd_c(&sector.mat)?;
            for (i, &val) in s.iter().enumerate() {
                entries.push((val, q, i));
            }
            decomps.insert(q, (u, s, vh));
        }
        entries.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("finite singular values")
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let total_sq: T = entries.iter().map(|e| e.0 * e.0).fold(T::zero(), |a, x| a + x);
        if total_sq == T::zero() {
            return Err(Error::Structure("svd of an all-zero tensor".into()));
        }
        let budget = spec.cutoff * total_sq;
        let mut keep = entries.len();
        let mut tail = T::zero();
        while keep > 0 {
            let s = entries[keep - 1].0;
            let next = tail + s * s;
            if next <= budget {
                tail = next;
                keep -= 1;
            } else {
                break;
            }
        }
        keep = keep.min(spec.max_bond);
        if keep == 0 {
            return Err(Error::DegenerateTruncation(format!(
                "no singular values survive (cutoff {:e}, max_bond {})",
                spec.cutoff, spec.max_bond
            )));
        }
        // Keep the whole degenerate multiplet at the boundary.
        let s_min = entries[keep - 1].0;
        let tie = s_min * (T::one() - T::of(1e-12));
        while keep < entries.len() && entries[keep].0 >= tie {
            keep += 1;
        }
        let discarded: T = entries[keep..]
            .iter()
            .map(|e| e.0 * e.0)
            .fold(T::zero(), |a, x| a + x);

        let mut kept_per_sector: BTreeMap<i64, usize> = BTreeMap::new();
        for e in &entries[..keep] {
            *kept_per_sector.entry(e.1).or_insert(0) += 1;
        }

        let sv_sectors: Vec<(i64, Vec<T>)> = kept_per_sector
            .iter()
            .map(|(&q, &m)| (q, decomps[&q].1[..m].to_vec()))
            .collect();
        let svals = SingularValues { sectors: sv_sectors };

        let bond_out = svals.bond_index(Direction::Outgoing);
        let bond_in = svals.bond_index(Direction::Incoming);
        let mut u_indices: Vec<ChargeIndex> =
            left.iter().map(|&i| self.indices[i].clone()).collect();
        u_indices.push(bond_out);
        let mut u_t = SymTensor::new(u_indices, 0);
        let mut v_indices = vec![bond_in];
        v_indices.extend(right.iter().map(|&i| self.indices[i].clone()));
        let mut v_t = SymTensor::new(v_indices, self.total_charge);

        for (bond_pos, (&q, &m)) in kept_per_sector.iter().enumerate() {
            let sector = &sectors[&q];
            let (u, _, vh) = &decomps[&q];
            for (kl, &(off, d)) in &sector.rows {
                let mut dims: Vec<usize> = kl
                    .iter()
                    .zip(left.iter())
                    .map(|(&s, &i)| self.indices[i].degeneracy(s))
                    .collect();
                dims.push(m);
                let data = u
                    .slice(ndarray::s![off..off + d, ..m])
                    .to_owned()
                    .into_shape_with_order(IxDyn(&dims))
                    .expect("slice matches block dims");
                let mut key = kl.clone();
                key.push(bond_pos);
                u_t.blocks.insert(key, data);
            }
            for (kr, &(off, d)) in &sector.cols {
                let mut dims = vec![m];
                dims.extend(
                    kr.iter()
                        .zip(right.iter())
                        .map(|(&s, &i)| self.indices[i].degeneracy(s)),
                );
                let data = vh
                    .slice(ndarray::s![..m, off..off + d])
                    .to_owned()
                    .into_shape_with_order(IxDyn(&dims))
                    .expect("slice matches block dims");
                let mut key = vec![bond_pos];
                key.extend_from_slice(kr);
                v_t.blocks.insert(key, data);
            }
        }
        Ok((u_t, svals, v_t, discarded))
    }
}

/// Flatten a block into a matrix: `row_axes` become the (row-major) row
/// index, `col_axes` the column index.
fn block_as_matrix<T: Real>(
    block: &ArrayD<Complex<T>>,
    row_axes: &[usize],
    col_axes: &[usize],
) -> Array2<Complex<T>> {
    let perm: Vec<usize> = row_axes.iter().chain(col_axes.iter()).copied().collect();
    let rows: usize = row_axes.iter().map(|&i| block.shape()[i]).product();
    let cols: usize = col_axes.iter().map(|&i| block.shape()[i]).product();
    block
        .view()
        .permuted_axes(IxDyn(&perm))
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((rows, cols))
        .expect("permuted block reshapes to its own size")
}

#[cfg(test)]
mod tests {
    use super::*;

    type St = SymTensor<f64>;

    fn two_site_state(amps: &[((usize, usize), f64)], n_total: i64) -> St {
        // [left trivial in, phys in, phys in, right out] with d = 2.
        let phys = ChargeIndex::occupation(Direction::Incoming, 1);
        let left = ChargeIndex::trivial(Direction::Incoming);
        let right = ChargeIndex::new(Direction::Outgoing, vec![(n_total, 1)]).unwrap();
        let mut t = St::new(vec![left, phys.clone(), phys, right], 0);
        for &((n1, n2), a) in amps {
            t.insert_block(
                vec![0, n1, n2, 0],
                ArrayD::from_elem(IxDyn(&[1, 1, 1, 1]), Complex::new(a, 0.0)),
            )
            .unwrap();
        }
        t
    }

    #[test]
    fn charge_index_rejects_bad_sectors() {
        assert!(ChargeIndex::new(Direction::Incoming, vec![]).is_err());
        assert!(ChargeIndex::new(Direction::Incoming, vec![(0, 1), (0, 2)]).is_err());
        assert!(ChargeIndex::new(Direction::Incoming, vec![(1, 1), (0, 2)]).is_err());
        assert!(ChargeIndex::new(Direction::Incoming, vec![(0, 0)]).is_err());
    }

    #[test]
    fn insert_rejects_charge_violation() {
        let phys = ChargeIndex::occupation(Direction::Incoming, 2);
        let right = ChargeIndex::new(Direction::Outgoing, vec![(1, 1)]).unwrap();
        let mut t = St::new(vec![phys, right], 0);
        // occupation 2 out of a charge-1 leg cannot balance
        let block = ArrayD::from_elem(IxDyn(&[1, 1]), Complex::new(1.0, 0.0));
        assert!(t.insert_block(vec![2, 0], block.clone()).is_err());
        assert!(t.insert_block(vec![1, 0], block).is_ok());
    }

    #[test]
    fn identity_contraction_is_noop() {
        let t = two_site_state(&[((0, 1), 0.6), ((1, 0), 0.8)], 1);
        let id = St::identity(t.index(3));
        // pair t's outgoing right leg with the identity's incoming leg
        let r = St::contract(&t, &id, &[(3, 0)]).unwrap();
        assert_eq!(r.total_charge(), t.total_charge());
        let (d0, d1) = (t.to_dense(), r.to_dense());
        assert_eq!(d0.shape(), d1.shape());
        for (a, b) in d0.iter().zip(d1.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn dense_round_trip() {
        let t = two_site_state(&[((0, 1), 0.6), ((1, 0), -0.8)], 1);
        let dense = t.to_dense();
        let back = St::from_dense(t.indices().to_vec(), 0, &dense, 0.0).unwrap();
        let d2 = back.to_dense();
        for (a, b) in dense.iter().zip(d2.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn from_dense_rejects_forbidden_entries() {
        let t = two_site_state(&[((0, 1), 1.0)], 1);
        let mut dense = t.to_dense();
        // (0,0) has total occupation 0, incompatible with the charge-1 edge
        dense[IxDyn(&[0, 0, 0, 0])] = Complex::new(0.5, 0.0);
        let err = St::from_dense(t.indices().to_vec(), 0, &dense, 1e-12);
        assert!(err.is_err());
    }

    #[test]
    fn svd_of_product_state_is_rank_one() {
        let t = two_site_state(&[((1, 1), 0.7)], 2);
        let spec = TruncationSpec::exact();
        let (u, s, v, w) = t.svd_truncate(&[0, 1], &spec).unwrap();
        assert_eq!(s.bond_dim(), 1);
        assert!((s.values_desc()[0] - 0.7).abs() < 1e-14);
        assert!(w == 0.0);
        // isometry on the new bond
        let uu = St::contract(&u.conj(), &u, &[(0, 0), (1, 1)]).unwrap();
        let uu_d = uu.to_dense();
        assert!((uu_d[IxDyn(&[0, 0])] - Complex::new(1.0, 0.0)).norm() < 1e-14);
        let vv = St::contract(&v, &v.conj(), &[(1, 1), (2, 2)]).unwrap();
        assert!((vv.to_dense()[IxDyn(&[0, 0])] - Complex::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn svd_splits_symmetric_pair_into_two_sectors() {
        let amp = std::f64::consts::FRAC_1_SQRT_2;
        let t = two_site_state(&[((0, 1), amp), ((1, 0), amp)], 1);
        let (u, s, v, w) = t.svd_truncate(&[0, 1], &TruncationSpec::exact()).unwrap();
        let vals = s.values_desc();
        assert_eq!(vals.len(), 2);
        assert!((vals[0] - amp).abs() < 1e-14);
        assert!((vals[1] - amp).abs() < 1e-14);
        assert_eq!(s.sectors().len(), 2);
        assert!(w.abs() < 1e-28);
        // reconstruction
        let us = St::contract(&u, &s.to_tensor(), &[(2, 0)]).unwrap();
        let rec = St::contract(&us, &v, &[(2, 0)]).unwrap();
        let (d0, d1) = (t.to_dense(), rec.to_dense());
        for (a, b) in d0.iter().zip(d1.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn truncation_respects_cutoff_and_ties() {
        // three sectors with values 1.0, 0.5, 1e-8
        let phys = ChargeIndex::occupation(Direction::Incoming, 2);
        let left = ChargeIndex::occupation(Direction::Outgoing, 2);
        let mut t = St::new(vec![left.clone(), phys.clone()], 0);
        for (n, val) in [(0, 1.0), (1, 0.5), (2, 1e-8)] {
            t.insert_block(
                vec![n, n],
                ArrayD::from_elem(IxDyn(&[1, 1]), Complex::new(val, 0.0)),
            )
            .unwrap();
        }
        let spec = TruncationSpec::new(10, 1e-10).unwrap();
        let (_, s, _, w) = t.svd_truncate(&[0], &spec).unwrap();
        assert_eq!(s.bond_dim(), 2);
        assert!((w - 1e-16).abs() < 1e-22);

        // max_bond 1 with a degenerate pair keeps both
        let mut t2 = St::new(vec![left, phys], 0);
        for (n, val) in [(0, 1.0), (1, 1.0), (2, 0.5)] {
            t2.insert_block(
                vec![n, n],
                ArrayD::from_elem(IxDyn(&[1, 1]), Complex::new(val, 0.0)),
            )
            .unwrap();
        }
        let spec = TruncationSpec::new(1, 0.0).unwrap();
        let (_, s2, _, _) = t2.svd_truncate(&[0], &spec).unwrap();
        assert_eq!(s2.bond_dim(), 2);
    }

    #[test]
    fn permute_round_trip() {
        let t = two_site_state(&[((0, 1), 0.3), ((1, 0), 0.9)], 1);
        let p = t.permuted(&[3, 1, 0, 2]).unwrap();
        // inverse of [3,1,0,2] is [2,1,3,0]
        let back = p.permuted(&[2, 1, 3, 0]).unwrap();
        let (d0, d1) = (t.to_dense(), back.to_dense());
        assert_eq!(d0.shape(), d1.shape());
        for (a, b) in d0.iter().zip(d1.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn norm_and_scale() {
        let mut t = two_site_state(&[((0, 1), 0.6), ((1, 0), 0.8)], 1);
        assert!((t.norm_sqr() - 1.0).abs() < 1e-14);
        t.scale(Complex::new(0.0, 2.0));
        assert!((t.norm_sqr() - 4.0).abs() < 1e-14);
    }
}
