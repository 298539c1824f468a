//! Brute-force reference dynamics on the full `M^{2N}`-dimensional space.
//!
//! Full-space index of the tensor basis vector `|s₁)|s₂)…|s_N)` is
//! `Σ_μ s_μ d^{N−μ}` with `d = M²`, so the first factor is most significant.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::basis::{multinomial, SymBasis, SymState};
use crate::error::{Error, Result};
use crate::evolution::{propagate_vector, Method, PropagationSpec};
use crate::liouville::{row_vectorize, Operator, SuperMatrix, C_ZERO};
use crate::sparse::{CscBuilder, CscMatrix};

/// Default limit on the full vector length, `3⁶ · 81`.
pub const DEFAULT_CAP: usize = 59_049;
/// Limit that no caller can raise.
pub const HARD_CAP: usize = 1_000_000;

/// `M^{2N}`, checked against `cap` (itself clamped to [`HARD_CAP`]).
pub fn full_dimension(levels: usize, n: usize, cap: usize) -> Result<usize> {
    let cap = cap.min(HARD_CAP);
    let d = levels * levels;
    let mut size: usize = 1;
    for _ in 0..n {
        size = size
            .checked_mul(d)
            .filter(|&s| s <= cap)
            .ok_or_else(|| Error::SizeCap(format!("full space for M={levels}, N={n} exceeds {cap} entries")))?;
    }
    Ok(size)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FullState {
    levels: usize,
    n: usize,
    v: Vec<C64>,
}

impl FullState {
    pub fn new(levels: usize, n: usize, v: Vec<C64>) -> Result<Self> {
        let size = full_dimension(levels, n, HARD_CAP)?;
        if v.len() != size {
            return Err(Error::DimensionMismatch(format!("full state needs {size} entries, got {}", v.len())));
        }
        Ok(Self { levels, n, v })
    }

    /// The tensor basis vector with slot `slots[μ]` on factor `μ`.
    pub fn basis_vector(levels: usize, slots: &[usize]) -> Result<Self> {
        let d = levels * levels;
        let size = full_dimension(levels, slots.len(), HARD_CAP)?;
        let mut idx = 0;
        for &s in slots {
            if s >= d {
                return Err(Error::OutOfRange(format!("slot {s} for {levels} levels")));
            }
            idx = idx * d + s;
        }
        let mut v = vec![C_ZERO; size];
        v[idx] = C64::new(1.0, 0.0);
        Ok(Self { levels, n: slots.len(), v })
    }

    /// `row(ρ₁) ⊗ … ⊗ row(ρ_N)`.
    pub fn product(factors: &[Operator]) -> Result<Self> {
        let first = factors.first().ok_or_else(|| Error::InvalidArgument("empty product".into()))?;
        let levels = first.dim();
        full_dimension(levels, factors.len(), HARD_CAP)?;
        let mut v = vec![C64::new(1.0, 0.0)];
        for f in factors {
            if f.dim() != levels {
                return Err(Error::DimensionMismatch("factors of different dimension".into()));
            }
            let r = row_vectorize(f);
            v = v.iter().flat_map(|a| r.iter().map(move |b| a * b)).collect();
        }
        Ok(Self { levels, n: factors.len(), v })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vector(&self) -> &[C64] {
        &self.v
    }

    pub fn norm(&self) -> f64 {
        self.v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &FullState) -> Result<f64> {
        if self.levels != other.levels || self.n != other.n {
            return Err(Error::DimensionMismatch("full states of different shape".into()));
        }
        Ok(self.v.iter().zip(&other.v).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
    }
}

/// Occupation tuple of the tensor basis vector with full index `idx`.
fn occupation_of(mut idx: usize, d: usize, n: usize, occ: &mut [u32]) {
    occ.fill(0);
    for _ in 0..n {
        occ[idx % d] += 1;
        idx /= d;
    }
}

/// `Σ_μ 𝟙^{⊗(μ−1)} ⊗ L₁ ⊗ 𝟙^{⊗(N−μ)}` with the default size cap.
pub fn full_liouvillian(l1: &SuperMatrix, n: usize) -> Result<CscMatrix> {
    full_liouvillian_capped(l1, n, DEFAULT_CAP)
}

pub fn full_liouvillian_capped(l1: &SuperMatrix, n: usize, cap: usize) -> Result<CscMatrix> {
    if n < 1 {
        return Err(Error::InvalidArgument("need at least one system".into()));
    }
    let d = l1.dim();
    let size = full_dimension(l1.levels(), n, cap)?;
    let cols: Vec<Vec<(usize, C64)>> =
        (0..d).map(|b| (0..d).filter_map(|a| Some((a, l1.get(a, b))).filter(|e| e.1 != C_ZERO)).collect()).collect();
    let mut builder = CscBuilder::with_capacity(size, size, size * n * d);
    let mut col = Vec::new();
    for j in 0..size {
        col.clear();
        let mut stride = 1;
        let mut rest = j;
        for _ in 0..n {
            let s = rest % d;
            rest /= d;
            let base = j - s * stride;
            col.extend(cols[s].iter().map(|&(a, v)| (base + a * stride, v)));
            stride *= d;
        }
        builder.push_column(&mut col);
    }
    Ok(builder.finish())
}

/// Places `K_n c_n` on every arrangement of each occupation `n`.
pub fn embed(state: &SymState) -> Result<FullState> {
    embed_capped(state, DEFAULT_CAP)
}

pub fn embed_capped(state: &SymState, cap: usize) -> Result<FullState> {
    let basis = state.basis();
    let (m, n, d) = (basis.levels(), basis.n(), basis.slots());
    let size = full_dimension(m, n, cap)?;
    let mut occ = vec![0u32; d];
    let v = (0..size)
        .map(|j| {
            occupation_of(j, d, n, &mut occ);
            state.coeffs()[basis.rank_occ(&occ)] / multinomial(&occ)
        })
        .collect();
    Ok(FullState { levels: m, n, v })
}

/// Symmetric coefficients `c_n = Σ_{arrangements of n} v` and the norm of
/// the part of `full` outside the symmetric subspace.
pub fn project(full: &FullState) -> Result<(SymState, f64)> {
    let basis: Arc<SymBasis> = SymBasis::shared(full.levels, full.n)?;
    let d = basis.slots();
    let mut state = SymState::zeros(basis.clone());
    let mut occ = vec![0u32; d];
    for (j, &x) in full.v.iter().enumerate() {
        occupation_of(j, d, full.n, &mut occ);
        state.coeffs_mut()[basis.rank_occ(&occ)] += x;
    }
    let back = embed_capped(&state, HARD_CAP)?;
    let residual = back.distance(full)?;
    Ok((state, residual))
}

/// `exp(L_full t) v₀` to relative tolerance `tol`.
pub fn full_propagate(lfull: &CscMatrix, v0: &FullState, t: f64, tol: f64) -> Result<FullState> {
    let mut out = full_propagate_grid(lfull, v0, &[t], tol)?;
    Ok(out.remove(0))
}

pub fn full_propagate_grid(lfull: &CscMatrix, v0: &FullState, times: &[f64], tol: f64) -> Result<Vec<FullState>> {
    let spec = PropagationSpec::new(times.to_vec(), Method::Auto, tol)?;
    Ok(propagate_vector(lfull, &v0.v, &spec)?
        .into_iter()
        .map(|v| FullState { levels: v0.levels, n: v0.n, v })
        .collect())
}
