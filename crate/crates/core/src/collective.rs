//! Bosonized collective superoperators acting on the symmetric subspace.
//!
//! A collective superoperator `Σ_μ T^{(μ)}` built from a single-system
//! supermatrix `T` acts on symmetric vectors as `Σ_{αβ} T_{αβ} b†_α b_β`,
//! where `b†_α b_β` moves one unit of occupation from slot `β` to slot `α`.

pub mod product_identities;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::basis::{SymBasis, SymState};
use crate::error::{Error, Result};
use crate::liouville::{slot, SuperMatrix, C_ZERO};
use crate::sparse::{CscBuilder, CscMatrix};

/// Hop coefficients with modulus at or below this are dropped when merging.
pub const MERGE_TOL: f64 = 1e-15;

/// `coeff · Σ_μ b†_α b_β`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HopTerm {
    pub alpha: usize,
    pub beta: usize,
    pub coeff: C64,
}

impl HopTerm {
    pub fn new(alpha: usize, beta: usize, coeff: C64) -> Self {
        Self { alpha, beta, coeff }
    }
}

/// A collective superoperator as a merged list of hops, sorted by `(α, β)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HopTermList {
    levels: usize,
    terms: Vec<HopTerm>,
}

impl HopTermList {
    pub fn new(levels: usize, terms: impl IntoIterator<Item = HopTerm>) -> Result<Self> {
        let d = levels * levels;
        let mut merged: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for t in terms {
            if t.alpha >= d || t.beta >= d {
                return Err(Error::OutOfRange(format!("hop ({}, {}) outside {d} slots", t.alpha, t.beta)));
            }
            *merged.entry((t.alpha, t.beta)).or_insert(C_ZERO) += t.coeff;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| c.norm() > MERGE_TOL)
            .map(|((alpha, beta), coeff)| HopTerm { alpha, beta, coeff })
            .collect();
        Ok(Self { levels, terms })
    }

    pub fn empty(levels: usize) -> Self {
        Self { levels, terms: Vec::new() }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn terms(&self) -> &[HopTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of `b†_α b_β`, zero if absent.
    pub fn coeff(&self, alpha: usize, beta: usize) -> C64 {
        self.terms.binary_search_by_key(&(alpha, beta), |t| (t.alpha, t.beta)).map_or(C_ZERO, |k| self.terms[k].coeff)
    }

    /// `self + c · other`, merged.
    pub fn add_scaled(&self, other: &HopTermList, c: C64) -> Result<HopTermList> {
        if self.levels != other.levels {
            return Err(Error::DimensionMismatch("hop lists for different level counts".into()));
        }
        let scaled = other.terms.iter().map(|t| HopTerm { coeff: t.coeff * c, ..*t });
        Self::new(self.levels, self.terms.iter().copied().chain(scaled))
    }

    pub fn scale(&self, c: C64) -> HopTermList {
        Self::new(self.levels, self.terms.iter().map(|t| HopTerm { coeff: t.coeff * c, ..*t }))
            .expect("scaling keeps slots in range")
    }

    /// The single-system supermatrix with entries `T_{αβ} = coeff`; inverse
    /// of [`bosonize`].
    pub fn to_supermatrix(&self) -> SuperMatrix {
        let mut mat = SuperMatrix::zeros(self.levels).matrix().clone();
        for h in &self.terms {
            mat[(h.alpha, h.beta)] = h.coeff;
        }
        SuperMatrix::new(self.levels, mat).expect("shape preserved")
    }

    /// Sparse matrix of the collective operator on `basis`.
    pub fn matrix(&self, basis: &SymBasis) -> Result<CscMatrix> {
        assemble(self, basis)
    }

    pub fn apply(&self, state: &SymState) -> Result<SymState> {
        self.check_levels(state.basis())?;
        let mut out = SymState::zeros(state.basis().clone());
        for t in &self.terms {
            accumulate_hop(t, state, &mut out);
        }
        Ok(out)
    }

    fn check_levels(&self, basis: &SymBasis) -> Result<()> {
        if basis.levels() != self.levels {
            return Err(Error::DimensionMismatch(format!(
                "operator has {} levels, basis has {}",
                self.levels,
                basis.levels()
            )));
        }
        Ok(())
    }
}

/// Bosonization: one hop `(α, β, T_{αβ})` per nonzero supermatrix entry.
pub fn bosonize(t: &SuperMatrix) -> HopTermList {
    let d = t.dim();
    let terms = (0..d).flat_map(|a| (0..d).map(move |b| (a, b))).filter_map(|(a, b)| {
        let c = t.get(a, b);
        (c != C_ZERO).then_some(HopTerm::new(a, b, c))
    });
    HopTermList::new(t.levels(), terms).expect("supermatrix slots are in range")
}

/// Kind of collective `sl(2)` generator attached to an ordered slot pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ladder {
    /// `Ă₊^{ab} = Σ b†_a b_b`.
    Raise,
    /// `Ă₋^{ab} = Σ b†_b b_a`.
    Lower,
    /// `Ă₃^{ab} = ½(n_a − n_b)`.
    Cartan,
}

/// Collective generator `Ă_kind^{ab}` for slots `a = (i, j)`, `b = (k, l)`.
pub fn ladder(levels: usize, kind: Ladder, a: (usize, usize), b: (usize, usize)) -> Result<HopTermList> {
    if [a.0, a.1, b.0, b.1].iter().any(|&x| x >= levels) {
        return Err(Error::OutOfRange(format!("slot labels {a:?}, {b:?} for {levels} levels")));
    }
    let (sa, sb) = (slot(a.0, a.1, levels), slot(b.0, b.1, levels));
    ladder_slots(levels, kind, sa, sb)
}

/// As [`ladder`] with slot indices.
pub fn ladder_slots(levels: usize, kind: Ladder, a: usize, b: usize) -> Result<HopTermList> {
    if a == b {
        return Err(Error::InvalidArgument(format!("ladder pair needs distinct slots, got {a} twice")));
    }
    let one = C64::new(1.0, 0.0);
    let half = C64::new(0.5, 0.0);
    let terms = match kind {
        Ladder::Raise => vec![HopTerm::new(a, b, one)],
        Ladder::Lower => vec![HopTerm::new(b, a, one)],
        Ladder::Cartan => vec![HopTerm::new(a, a, half), HopTerm::new(b, b, -half)],
    };
    HopTermList::new(levels, terms)
}

/// The independent diagonal generators: the fixed pair list for `M = 3`,
/// consecutive slots `(α + 1, α)` otherwise.
pub fn cartan_pairs(levels: usize) -> Vec<(usize, usize)> {
    if levels == 3 {
        let s = |i, j| slot(i, j, 3);
        vec![
            (s(2, 2), s(1, 1)),
            (s(2, 1), s(1, 2)),
            (s(2, 0), s(1, 0)),
            (s(0, 2), s(0, 1)),
            (s(2, 2), s(0, 0)),
            (s(2, 1), s(0, 1)),
            (s(1, 2), s(1, 0)),
            (s(1, 1), s(0, 2)),
        ]
    } else {
        (0..levels * levels - 1).map(|a| (a + 1, a)).collect()
    }
}

/// `out += term · state`.
fn accumulate_hop(term: &HopTerm, state: &SymState, out: &mut SymState) {
    let basis = state.basis().clone();
    let coeffs = state.coeffs();
    let dst = out.coeffs_mut();
    let (a, b) = (term.alpha, term.beta);
    for (k, idx) in basis.iter().enumerate() {
        let c = coeffs[k];
        let nb = idx.slot(b);
        if c == C_ZERO || nb == 0 {
            continue;
        }
        let target = if a == b { k } else { basis.rank_occ(idx.hopped(a, b).unwrap().occupations()) };
        dst[target] += term.coeff * nb as f64 * c;
    }
}

/// `coeff · b†_α b_β` applied to `state`.
pub fn apply_hop(term: &HopTerm, state: &SymState) -> Result<SymState> {
    let d = state.basis().slots();
    if term.alpha >= d || term.beta >= d {
        return Err(Error::OutOfRange(format!("hop ({}, {}) outside {d} slots", term.alpha, term.beta)));
    }
    let mut out = SymState::zeros(state.basis().clone());
    accumulate_hop(term, state, &mut out);
    Ok(out)
}

/// `Ă₃ = ½(n_a − n_b)` applied to `state`.
pub fn apply_hop_diag3(pair: (usize, usize), state: &SymState) -> Result<SymState> {
    let (a, b) = pair;
    let d = state.basis().slots();
    if a == b || a >= d || b >= d {
        return Err(Error::InvalidArgument(format!("invalid Cartan slot pair ({a}, {b})")));
    }
    let basis = state.basis().clone();
    let coeffs =
        basis.iter().zip(state.coeffs()).map(|(idx, c)| c * 0.5 * (idx.slot(a) as f64 - idx.slot(b) as f64)).collect();
    SymState::from_coeffs(basis, coeffs)
}

const CHUNK: usize = 1 << 14;

/// Sparse matrix of a hop list; columns are built independently in parallel.
pub fn assemble(terms: &HopTermList, basis: &SymBasis) -> Result<CscMatrix> {
    terms.check_levels(basis)?;
    let d = basis.slots();
    let mut diag = vec![C_ZERO; d];
    let mut off = Vec::new();
    for t in terms.terms() {
        if t.alpha == t.beta {
            diag[t.alpha] += t.coeff;
        } else {
            off.push(*t);
        }
    }
    let s = basis.size();
    let chunks: Vec<CscBuilder> = (0..s.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(s);
            let mut b = CscBuilder::with_capacity(s, end - start, (end - start) * (off.len() + 1));
            let mut occ = basis.unrank(start).expect("chunk start in range").occupations().to_vec();
            let mut col = Vec::with_capacity(off.len() + 1);
            for k in start..end {
                col.clear();
                let dval: C64 = diag.iter().zip(&occ).map(|(c, &n)| c * n as f64).sum();
                if dval != C_ZERO {
                    col.push((k, dval));
                }
                for t in &off {
                    let nb = occ[t.beta];
                    if nb == 0 {
                        continue;
                    }
                    occ[t.beta] -= 1;
                    occ[t.alpha] += 1;
                    col.push((basis.rank_occ(&occ), t.coeff * nb as f64));
                    occ[t.alpha] -= 1;
                    occ[t.beta] += 1;
                }
                b.push_column(&mut col);
                crate::basis::next_composition(&mut occ);
            }
            b
        })
        .collect();
    let mut all = CscBuilder::with_capacity(s, s, chunks.iter().map(|c| c.nnz()).sum());
    for c in chunks {
        all.append(c);
    }
    Ok(all.finish())
}

/// The generator restricted to the symmetric subspace.
#[derive(Clone, Debug)]
pub struct SymLiouvillian {
    basis: Arc<SymBasis>,
    matrix: CscMatrix,
}

impl SymLiouvillian {
    pub fn from_hops(terms: &HopTermList, basis: Arc<SymBasis>) -> Result<Self> {
        let matrix = assemble(terms, &basis)?;
        Ok(Self { basis, matrix })
    }

    pub fn basis(&self) -> &Arc<SymBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &CscMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.basis.size()
    }

    pub fn apply(&self, state: &SymState) -> Result<SymState> {
        if **state.basis() != *self.basis {
            return Err(Error::DimensionMismatch("state and generator use different bases".into()));
        }
        SymState::from_coeffs(self.basis.clone(), self.matrix.matvec(state.coeffs()))
    }

    /// Coordinate-list export, one `row col re im` line per entry.
    pub fn write_coo<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.matrix.write_coo(w)
    }
}

pub fn assemble_sym_liouvillian(l1: &SuperMatrix, basis: Arc<SymBasis>) -> Result<SymLiouvillian> {
    if l1.levels() != basis.levels() {
        return Err(Error::DimensionMismatch(format!(
            "supermatrix for {} levels, basis for {}",
            l1.levels(),
            basis.levels()
        )));
    }
    SymLiouvillian::from_hops(&bosonize(l1), basis)
}

/// Max-entry residual of the `sl(2)` relations for the slot pair `(a, b)`.
pub fn check_sl2_relations(pair: (usize, usize), basis: &SymBasis) -> Result<f64> {
    let (a, b) = pair;
    let m = basis.levels();
    let plus = ladder_slots(m, Ladder::Raise, a, b)?.matrix(basis)?;
    let minus = ladder_slots(m, Ladder::Lower, a, b)?.matrix(basis)?;
    let cartan = ladder_slots(m, Ladder::Cartan, a, b)?.matrix(basis)?;
    let two = C64::new(2.0, 0.0);
    let r1 = plus.commutator(&minus)?.sub(&cartan.scale(two))?.max_abs();
    let r2 = cartan.commutator(&plus)?.sub(&plus)?.max_abs();
    let r3 = cartan.commutator(&minus)?.add_scaled(&minus, C64::new(1.0, 0.0))?.max_abs();
    Ok(r1.max(r2).max(r3))
}
