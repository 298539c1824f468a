//! Basis of the permutation-symmetric subspace of `N`-fold Liouville space.
//!
//! A basis vector is labelled by an [`OccupationIndex`]: for every slot `α`
//! (the dyad `|i⟩⟨j|`) it records how many of the `N` tensor factors carry
//! that dyad. The vector is `K · Σ_P P(⊗ |ij)^{n_ij})` summed over distinct
//! arrangements with `K = ∏ n_ij! / N!`, so it is *not* unit norm: its
//! Hilbert–Schmidt norm is `√K` (see [`OccupationIndex::hs_norm`]). With this
//! normalization a hop `b†_α b_β` acts with the integer coefficient `n_β`.
//!
//! Basis vectors are enumerated in descending lexicographic order of the
//! occupation tuple `(n_00, n_01, …, n_(M−1)(M−1))`, so rank 0 puts all `N`
//! units on slot `00` and, for `N = 1`, the rank of a slot equals its index.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouville::{max_abs, slot_levels, Operator, C_ZERO};

/// Tolerance used when validating density matrices.
pub const DENSITY_TOL: f64 = 1e-10;

/// Occupation numbers `{n_ij}` of one symmetric basis vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccupationIndex {
    levels: usize,
    occ: Vec<u32>,
}

impl OccupationIndex {
    /// `occ` lists the occupations of all `M²` slots in row-major order.
    pub fn new(levels: usize, occ: Vec<u32>) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 levels, got {levels}")));
        }
        if occ.len() != levels * levels {
            return Err(Error::DimensionMismatch(format!(
                "occupation tuple for {levels} levels needs {} entries, got {}",
                levels * levels,
                occ.len()
            )));
        }
        if occ.iter().all(|&n| n == 0) {
            return Err(Error::InvalidArgument("occupation tuple must sum to N ≥ 1".into()));
        }
        Ok(Self { levels, occ })
    }

    /// Builds an index from `((i, j), n_ij)` pairs; unlisted slots are empty.
    pub fn from_pairs(levels: usize, pairs: &[((usize, usize), u32)]) -> Result<Self> {
        let mut occ = vec![0; levels * levels];
        for &((i, j), n) in pairs {
            if i >= levels || j >= levels {
                return Err(Error::OutOfRange(format!("level pair ({i},{j}) for {levels} levels")));
            }
            occ[i * levels + j] += n;
        }
        Self::new(levels, occ)
    }

    pub(crate) fn from_raw(levels: usize, occ: Vec<u32>) -> Self {
        Self { levels, occ }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Number of systems `N = Σ n_ij`.
    pub fn n(&self) -> usize {
        self.occ.iter().map(|&n| n as usize).sum()
    }

    pub fn occupations(&self) -> &[u32] {
        &self.occ
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.occ[i * self.levels + j]
    }

    pub fn slot(&self, alpha: usize) -> u32 {
        self.occ[alpha]
    }

    /// The index `n*` with `n*_ij = n_ji`, labelling the adjoint basis vector.
    pub fn transposed(&self) -> Self {
        let m = self.levels;
        let occ = (0..m * m)
            .map(|alpha| {
                let (i, j) = slot_levels(alpha, m);
                self.occ[j * m + i]
            })
            .collect();
        Self { levels: m, occ }
    }

    /// True if every unit sits on a diagonal dyad `|i⟩⟨i|`.
    pub fn is_diagonal(&self) -> bool {
        is_diagonal_occ(&self.occ, self.levels)
    }

    /// Number of distinct arrangements `N! / ∏ n_ij!`.
    pub fn permutation_count(&self) -> f64 {
        multinomial(&self.occ)
    }

    /// `K = ∏ n_ij! / N!`.
    pub fn normalization_k(&self) -> f64 {
        1.0 / self.permutation_count()
    }

    /// Hilbert–Schmidt norm of the basis vector, `√K`.
    pub fn hs_norm(&self) -> f64 {
        self.normalization_k().sqrt()
    }

    /// Index obtained by moving one unit from slot `beta` to slot `alpha`.
    pub fn hopped(&self, alpha: usize, beta: usize) -> Option<Self> {
        if self.occ[beta] == 0 {
            return None;
        }
        let mut occ = self.occ.clone();
        occ[beta] -= 1;
        occ[alpha] += 1;
        Some(Self { levels: self.levels, occ })
    }
}

impl fmt::Display for OccupationIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q[")?;
        for (k, n) in self.occ.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "]")
    }
}

pub(crate) fn is_diagonal_occ(occ: &[u32], levels: usize) -> bool {
    occ.iter().enumerate().all(|(alpha, &n)| n == 0 || alpha / levels == alpha % levels)
}

/// `N! / ∏ n_k!` in floating point, accumulated as a product of binomials.
pub(crate) fn multinomial(occ: &[u32]) -> f64 {
    let mut total = 0u64;
    let mut acc = 1.0;
    for &n in occ {
        for k in 1..=n as u64 {
            total += 1;
            acc = acc * total as f64 / k as f64;
        }
    }
    acc
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact binomial coefficient, `None` when the result exceeds `u64`.
pub(crate) fn binomial_u64(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        let num = (n - i) as u128;
        let den = (i + 1) as u128;
        let g = gcd(acc, den);
        acc = (acc / g).checked_mul(num)? / (den / g);
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Dimension `s = C(N + M² − 1, N)` of the symmetric subspace.
pub fn sym_dimension(levels: usize, n: usize) -> Result<u64> {
    if levels < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 levels, got {levels}")));
    }
    if n < 1 {
        return Err(Error::InvalidArgument("need at least one system".into()));
    }
    let top = (n + levels * levels - 1) as u64;
    match binomial_u64(top, n as u64) {
        Some(s) if s <= i64::MAX as u64 => Ok(s),
        _ => Err(Error::Overflow(format!("symmetric dimension C({top}, {n}) exceeds 2^63 - 1"))),
    }
}

/// Enumeration of the symmetric basis for fixed `M` and `N`, with ranking.
#[derive(Debug, PartialEq, Eq)]
pub struct SymBasis {
    levels: usize,
    n: usize,
    size: usize,
    /// `compositions[s][t]`: ways to place `t` units in `s` slots.
    compositions: Vec<Vec<u64>>,
}

impl SymBasis {
    pub fn new(levels: usize, n: usize) -> Result<Self> {
        let size = sym_dimension(levels, n)?;
        let size =
            usize::try_from(size).map_err(|_| Error::Overflow(format!("symmetric dimension {size} exceeds usize")))?;
        let d = levels * levels;
        let mut compositions = vec![vec![0u64; n + 1]; d + 1];
        compositions[0][0] = 1;
        for (s, row) in compositions.iter_mut().enumerate().skip(1) {
            for (t, c) in row.iter_mut().enumerate() {
                // C(t + s − 1, s − 1); bounded by `size` so it cannot overflow.
                *c = binomial_u64((t + s - 1) as u64, (s - 1) as u64)
                    .expect("composition count bounded by the basis size");
            }
        }
        Ok(Self { levels, n, size, compositions })
    }

    pub fn shared(levels: usize, n: usize) -> Result<Arc<Self>> {
        Self::new(levels, n).map(Arc::new)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of slots `M²`.
    pub fn slots(&self) -> usize {
        self.levels * self.levels
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn check(&self, idx: &OccupationIndex) -> Result<()> {
        if idx.levels != self.levels || idx.n() != self.n {
            return Err(Error::InvalidArgument(format!(
                "index {idx} (M={}, N={}) does not belong to basis M={}, N={}",
                idx.levels,
                idx.n(),
                self.levels,
                self.n
            )));
        }
        Ok(())
    }

    pub fn rank(&self, idx: &OccupationIndex) -> Result<usize> {
        self.check(idx)?;
        Ok(self.rank_occ(&idx.occ))
    }

    /// Rank of a raw occupation tuple already known to be valid.
    pub(crate) fn rank_occ(&self, occ: &[u32]) -> usize {
        let d = occ.len();
        let mut rem = self.n;
        let mut r = 0u64;
        for (k, &nk) in occ[..d - 1].iter().enumerate() {
            let nk = nk as usize;
            if rem > nk {
                r += self.compositions[d - k][rem - nk - 1];
            }
            rem -= nk;
        }
        r as usize
    }

    pub fn unrank(&self, k: usize) -> Result<OccupationIndex> {
        if k >= self.size {
            return Err(Error::OutOfRange(format!("rank {k} outside basis of size {}", self.size)));
        }
        let d = self.slots();
        let mut occ = vec![0u32; d];
        let mut r = k as u64;
        let mut rem = self.n;
        for (pos, slot) in occ[..d - 1].iter_mut().enumerate() {
            let tail = d - pos - 1;
            let mut v = rem;
            loop {
                let block = self.compositions[tail][rem - v];
                if r < block {
                    break;
                }
                r -= block;
                v -= 1;
            }
            *slot = v as u32;
            rem -= v;
        }
        occ[d - 1] = rem as u32;
        Ok(OccupationIndex::from_raw(self.levels, occ))
    }

    /// All basis indices in rank order.
    pub fn iter(&self) -> BasisIter {
        let mut first = vec![0u32; self.slots()];
        first[0] = self.n as u32;
        BasisIter { levels: self.levels, next: Some(first) }
    }

    /// Indices in rank order, starting at `start`.
    pub fn iter_from(&self, start: usize) -> BasisIter {
        BasisIter { levels: self.levels, next: self.unrank(start).ok().map(|idx| idx.occ) }
    }

    /// Ranks of all purely diagonal indices.
    pub fn diagonal_ranks(&self) -> Vec<usize> {
        let m = self.levels;
        let mut out = Vec::new();
        let mut diag = vec![0u32; m];
        diag[0] = self.n as u32;
        loop {
            let mut occ = vec![0u32; m * m];
            for i in 0..m {
                occ[i * m + i] = diag[i];
            }
            out.push(self.rank_occ(&occ));
            if !next_composition(&mut diag) {
                break;
            }
        }
        out
    }
}

/// Advances `t` to the next weak composition in descending lexicographic
/// order. Returns `false` after the last one.
pub(crate) fn next_composition(t: &mut [u32]) -> bool {
    let d = t.len();
    if d < 2 {
        return false;
    }
    let Some(k) = (0..d - 1).rev().find(|&k| t[k] > 0) else {
        return false;
    };
    let tail: u32 = t[k + 1..].iter().sum();
    t[k] -= 1;
    t[k + 1] = tail + 1;
    for x in &mut t[k + 2..] {
        *x = 0;
    }
    true
}

pub struct BasisIter {
    levels: usize,
    next: Option<Vec<u32>>,
}

impl Iterator for BasisIter {
    type Item = OccupationIndex;

    fn next(&mut self) -> Option<OccupationIndex> {
        let cur = self.next.take()?;
        let mut succ = cur.clone();
        if next_composition(&mut succ) {
            self.next = Some(succ);
        }
        Some(OccupationIndex::from_raw(self.levels, cur))
    }
}

/// Coefficients `c_n` of a symmetric operator in the basis `{Q_n}`.
#[derive(Clone, Debug)]
pub struct SymState {
    basis: Arc<SymBasis>,
    coeffs: Vec<C64>,
}

impl PartialEq for SymState {
    fn eq(&self, other: &Self) -> bool {
        *self.basis == *other.basis && self.coeffs == other.coeffs
    }
}

impl SymState {
    pub fn zeros(basis: Arc<SymBasis>) -> Self {
        let coeffs = vec![C_ZERO; basis.size()];
        Self { basis, coeffs }
    }

    pub fn from_coeffs(basis: Arc<SymBasis>, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != basis.size() {
            return Err(Error::DimensionMismatch(format!(
                "basis has {} vectors, got {} coefficients",
                basis.size(),
                coeffs.len()
            )));
        }
        Ok(Self { basis, coeffs })
    }

    /// The single basis vector `Q_idx` with unit coefficient.
    pub fn basis_vector(basis: Arc<SymBasis>, idx: &OccupationIndex) -> Result<Self> {
        let k = basis.rank(idx)?;
        let mut state = Self::zeros(basis);
        state.coeffs[k] = C64::new(1.0, 0.0);
        Ok(state)
    }

    pub fn basis(&self) -> &Arc<SymBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    pub fn coeff(&self, idx: &OccupationIndex) -> Result<C64> {
        Ok(self.coeffs[self.basis.rank(idx)?])
    }

    pub(crate) fn same_basis(&self, other: &SymState) -> Result<()> {
        if *self.basis != *other.basis {
            return Err(Error::DimensionMismatch("states live in different bases".into()));
        }
        Ok(())
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖self − other‖₂` over coefficients.
    pub fn distance(&self, other: &SymState) -> Result<f64> {
        self.same_basis(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
    }

    pub fn scale(&mut self, c: C64) {
        self.coeffs.iter_mut().for_each(|z| *z *= c);
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: C64, other: &SymState) -> Result<()> {
        self.same_basis(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += c * b;
        }
        Ok(())
    }

    /// Trace of the represented operator: the sum of `c_n` over purely
    /// diagonal indices (every other basis vector is traceless).
    pub fn trace(&self) -> C64 {
        self.basis.diagonal_ranks().into_iter().map(|k| self.coeffs[k]).sum()
    }

    /// `max_n |c_n − conj(c_{n*})|`; zero for Hermitian operators.
    pub fn hermiticity_defect(&self) -> f64 {
        let b = &self.basis;
        let m = b.levels();
        let mut worst = 0.0f64;
        let mut tr = vec![0u32; b.slots()];
        for (k, idx) in b.iter().enumerate() {
            for (alpha, t) in tr.iter_mut().enumerate() {
                let (i, j) = slot_levels(alpha, m);
                *t = idx.occ[j * m + i];
            }
            let kt = b.rank_occ(&tr);
            worst = worst.max((self.coeffs[k] - self.coeffs[kt].conj()).norm());
        }
        worst
    }

    /// Lists the nonzero coefficients as JSON `{M, N, entries: [[n], re, im]}`.
    pub fn to_json(&self) -> Result<String> {
        let entries = self
            .basis
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != C_ZERO)
            .map(|(idx, c)| (idx.occ, c.re, c.im))
            .collect();
        let doc = SymStateDoc { m: self.basis.levels(), n: self.basis.n(), entries };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SymStateDoc = serde_json::from_str(text)?;
        let basis = SymBasis::shared(doc.m, doc.n)?;
        let mut state = Self::zeros(basis);
        for (occ, re, im) in doc.entries {
            let idx = OccupationIndex::new(doc.m, occ)?;
            let k = state.basis.rank(&idx)?;
            state.coeffs[k] += C64::new(re, im);
        }
        Ok(state)
    }
}

#[derive(Serialize, Deserialize)]
struct SymStateDoc {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    entries: Vec<(Vec<u32>, f64, f64)>,
}

/// Checks Hermiticity, unit trace and positivity of a density matrix.
pub fn check_density_matrix(rho: &Operator) -> Result<()> {
    if rho.hermiticity_defect() > DENSITY_TOL {
        return Err(Error::InvalidArgument("density matrix is not Hermitian".into()));
    }
    if (rho.trace() - 1.0).norm() > DENSITY_TOL {
        return Err(Error::InvalidArgument(format!("density matrix has trace {} instead of 1", rho.trace())));
    }
    let herm: DMatrix<C64> = (rho.matrix() + rho.matrix().adjoint()) * C64::new(0.5, 0.0);
    let min = herm.symmetric_eigenvalues().min();
    if min < -DENSITY_TOL {
        return Err(Error::InvalidArgument(format!(
            "density matrix is not positive semidefinite (min eigenvalue {min:.3e})"
        )));
    }
    debug_assert!(max_abs(&herm).is_finite());
    Ok(())
}

/// Coefficients of `ρ₁^{⊗N}`: `c_n = (N!/∏ n_ij!) ∏ (ρ₁)_ij^{n_ij}`.
pub fn product_state_expand(rho1: &Operator, basis: Arc<SymBasis>) -> Result<SymState> {
    if rho1.dim() != basis.levels() {
        return Err(Error::DimensionMismatch(format!(
            "density matrix has {} levels, basis has {}",
            rho1.dim(),
            basis.levels()
        )));
    }
    check_density_matrix(rho1)?;
    Ok(product_coefficients(rho1, basis))
}

/// Same expansion without validating `op`; it may be any operator.
pub fn product_coefficients(op: &Operator, basis: Arc<SymBasis>) -> SymState {
    let m = basis.levels();
    let entries: Vec<C64> = (0..m * m)
        .map(|alpha| {
            let (i, j) = slot_levels(alpha, m);
            op[(i, j)]
        })
        .collect();
    let coeffs = basis
        .iter()
        .map(|idx| {
            let mut c = C64::new(multinomial(&idx.occ), 0.0);
            for (alpha, &n) in idx.occ.iter().enumerate() {
                if n > 0 {
                    c *= entries[alpha].powu(n);
                }
            }
            c
        })
        .collect();
    SymState { basis, coeffs }
}
