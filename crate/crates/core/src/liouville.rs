//! Single-system Liouville space.
//!
//! Operators on the `M`-level Hilbert space are mapped to vectors of length
//! `M²` by stacking their rows (row vectorization). The dyad `|i⟩⟨j|`
//! (0-based levels) occupies slot `α = i·M + j`. In this convention the
//! superoperator `A ↦ U·A·V` is represented by the supermatrix `U ⊗ Vᵀ`.

use std::ops::{Add, Index, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub(crate) const C_ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const C_ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const C_I: C64 = C64::new(0.0, 1.0);

/// Tolerance on Hilbert–Schmidt orthonormality and Hermiticity of model data.
pub const MODEL_TOL: f64 = 1e-12;
/// Lowest admissible eigenvalue of the Kossakowski matrix.
pub const PSD_TOL: f64 = 1e-10;

/// Slot index of the dyad `|i⟩⟨j|` for an `m`-level system.
#[inline]
pub fn slot(i: usize, j: usize, m: usize) -> usize {
    i * m + j
}

/// Inverse of [`slot`].
#[inline]
pub fn slot_levels(alpha: usize, m: usize) -> (usize, usize) {
    (alpha / m, alpha % m)
}

/// An operator on the Hilbert space of a single `M`-level system.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
}

impl Operator {
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "operator must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if mat.nrows() < 2 {
            return Err(Error::InvalidArgument(format!("operator dimension must be at least 2, got {}", mat.nrows())));
        }
        Ok(Self { mat })
    }

    /// Builds an operator from its entries listed row by row.
    pub fn from_row_slice(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {dim}x{dim} operator, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub(crate) fn from_matrix_unchecked(mat: DMatrix<C64>) -> Self {
        debug_assert!(mat.is_square() && mat.nrows() >= 2);
        Self { mat }
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 2, "operator dimension must be at least 2");
        Self { mat: DMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 2, "operator dimension must be at least 2");
        Self { mat: DMatrix::zeros(dim, dim) }
    }

    /// The dyad `|i⟩⟨j|`.
    pub fn dyad(dim: usize, i: usize, j: usize) -> Self {
        assert!(i < dim && j < dim, "level index out of range");
        let mut op = Self::zeros(dim);
        op.mat[(i, j)] = C_ONE;
        op
    }

    /// Diagonal operator with the given real entries.
    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        let dim = entries.len();
        let mut mat = DMatrix::zeros(dim, dim);
        for (k, &e) in entries.iter().enumerate() {
            mat[(k, k)] = C64::new(e, 0.0);
        }
        Self::new(mat)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn adjoint(&self) -> Self {
        Self { mat: self.mat.adjoint() }
    }

    pub fn transpose(&self) -> Self {
        Self { mat: self.mat.transpose() }
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// Hilbert–Schmidt inner product `Tr(self† · other)`.
    pub fn hs_inner(&self, other: &Operator) -> C64 {
        self.mat.iter().zip(other.mat.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    /// Largest entry of `|A − A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.mat - self.mat.adjoint()))
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { mat: &self.mat * c }
    }
}

impl Index<(usize, usize)> for Operator {
    type Output = C64;

    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.mat[idx]
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;

    fn add(self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat + &rhs.mat }
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;

    fn sub(self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat - &rhs.mat }
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat * &rhs.mat }
    }
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Stacks the rows of `a` top to bottom: component `i·M + j` is `A[i][j]`.
pub fn row_vectorize(a: &Operator) -> DVector<C64> {
    let m = a.dim();
    DVector::from_fn(m * m, |alpha, _| {
        let (i, j) = slot_levels(alpha, m);
        a.mat[(i, j)]
    })
}

/// Inverse of [`row_vectorize`].
pub fn unvectorize(v: &[C64]) -> Result<Operator> {
    let m = (v.len() as f64).sqrt().round() as usize;
    if m * m != v.len() {
        return Err(Error::DimensionMismatch(format!("vector length {} is not a perfect square", v.len())));
    }
    Operator::from_row_slice(m, v)
}

/// `M² × M²` matrix of a single-system superoperator in the row convention.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperMatrix {
    levels: usize,
    mat: DMatrix<C64>,
}

impl SuperMatrix {
    pub fn new(levels: usize, mat: DMatrix<C64>) -> Result<Self> {
        let d = levels * levels;
        if levels < 2 || mat.nrows() != d || mat.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "supermatrix for {levels} levels must be {d}x{d}, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { levels, mat })
    }

    pub fn identity(levels: usize) -> Self {
        let d = levels * levels;
        Self { levels, mat: DMatrix::identity(d, d) }
    }

    pub fn zeros(levels: usize) -> Self {
        let d = levels * levels;
        Self { levels, mat: DMatrix::zeros(d, d) }
    }

    /// Number of levels `M` of the underlying system.
    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Liouville-space dimension `M²`.
    pub fn dim(&self) -> usize {
        self.levels * self.levels
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn get(&self, alpha: usize, beta: usize) -> C64 {
        self.mat[(alpha, beta)]
    }

    /// Applies the superoperator to an operator.
    pub fn apply(&self, a: &Operator) -> Result<Operator> {
        if a.dim() != self.levels {
            return Err(Error::DimensionMismatch(format!(
                "supermatrix acts on {} levels, operator has {}",
                self.levels,
                a.dim()
            )));
        }
        let v = &self.mat * row_vectorize(a);
        unvectorize(v.as_slice())
    }

    pub fn commutator(&self, other: &SuperMatrix) -> SuperMatrix {
        SuperMatrix { levels: self.levels, mat: &self.mat * &other.mat - &other.mat * &self.mat }
    }

    pub fn scale(&self, c: C64) -> SuperMatrix {
        SuperMatrix { levels: self.levels, mat: &self.mat * c }
    }

    pub fn max_abs_diff(&self, other: &SuperMatrix) -> f64 {
        max_abs(&(&self.mat - &other.mat))
    }
}

impl<'a> Add<&'a SuperMatrix> for &'a SuperMatrix {
    type Output = SuperMatrix;

    fn add(self, rhs: &SuperMatrix) -> SuperMatrix {
        assert_eq!(self.levels, rhs.levels, "supermatrix level mismatch");
        SuperMatrix { levels: self.levels, mat: &self.mat + &rhs.mat }
    }
}

impl<'a> Sub<&'a SuperMatrix> for &'a SuperMatrix {
    type Output = SuperMatrix;

    fn sub(self, rhs: &SuperMatrix) -> SuperMatrix {
        assert_eq!(self.levels, rhs.levels, "supermatrix level mismatch");
        SuperMatrix { levels: self.levels, mat: &self.mat - &rhs.mat }
    }
}

/// Supermatrix of `A ↦ U·A·V`, i.e. `U ⊗ Vᵀ`.
pub fn left_right_supermatrix(u: &Operator, v: &Operator) -> Result<SuperMatrix> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch(format!(
            "left operator has {} levels, right operator has {}",
            u.dim(),
            v.dim()
        )));
    }
    Ok(SuperMatrix { levels: u.dim(), mat: u.mat.kronecker(&v.mat.transpose()) })
}

/// `−i[H, ·] + Σ γ (L·L† − ½{L†L, ·})` built directly from jump operators.
pub fn lindblad_supermatrix(h: &Operator, jumps: &[(Operator, f64)]) -> Result<SuperMatrix> {
    let m = h.dim();
    let id = Operator::identity(m);
    let mut out = (&left_right_supermatrix(h, &id)? - &left_right_supermatrix(&id, h)?).scale(-C_I);
    for (jump, rate) in jumps {
        let jd = jump.adjoint();
        let jdj = &jd * jump;
        let sandwich = left_right_supermatrix(jump, &jd)?;
        let anti = &left_right_supermatrix(&jdj, &id)? + &left_right_supermatrix(&id, &jdj)?;
        let d = &sandwich - &anti.scale(C64::new(0.5, 0.0));
        out = &out + &d.scale(C64::new(*rate, 0.0));
    }
    Ok(out)
}

/// Generalized Gell-Mann matrices normalized to `Tr(F_j† F_k) = δ_jk`.
///
/// Ordering: the symmetric off-diagonal ones for `j < k` in row-major order,
/// then the antisymmetric ones in the same order, then the `M − 1` diagonal
/// ones.
pub fn gell_mann_basis(m: usize) -> Result<Vec<Operator>> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("Gell-Mann basis needs at least 2 levels, got {m}")));
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(m * m - 1);
    for j in 0..m {
        for k in j + 1..m {
            let mut op = Operator::zeros(m);
            op.mat[(j, k)] = C64::new(r, 0.0);
            op.mat[(k, j)] = C64::new(r, 0.0);
            out.push(op);
        }
    }
    for j in 0..m {
        for k in j + 1..m {
            let mut op = Operator::zeros(m);
            op.mat[(j, k)] = C64::new(0.0, -r);
            op.mat[(k, j)] = C64::new(0.0, r);
            out.push(op);
        }
    }
    for l in 1..m {
        let norm = ((l * (l + 1)) as f64).sqrt();
        let mut op = Operator::zeros(m);
        for d in 0..l {
            op.mat[(d, d)] = C64::new(1.0 / norm, 0.0);
        }
        op.mat[(l, l)] = C64::new(-(l as f64) / norm, 0.0);
        out.push(op);
    }
    Ok(out)
}

/// A permutation-symmetric model with independent dissipation, specified by
/// a traceless orthonormal operator basis `F_k`, Hamiltonian coefficients
/// `h_k` (`H = Σ h_k F_k`, ħ = 1) and the Kossakowski matrix `a_jk`.
#[derive(Clone, Debug)]
pub struct SindipModel {
    levels: usize,
    h: Vec<C64>,
    basis: Vec<Operator>,
    kossakowski: DMatrix<C64>,
}

impl SindipModel {
    pub fn new(h: Vec<C64>, basis: Vec<Operator>, kossakowski: DMatrix<C64>) -> Result<Self> {
        let levels =
            basis.first().map(Operator::dim).ok_or_else(|| Error::InvalidModel("operator basis is empty".into()))?;
        let n_ops = levels * levels - 1;
        if basis.len() != n_ops || basis.iter().any(|f| f.dim() != levels) {
            return Err(Error::InvalidModel(format!("basis must contain {n_ops} operators of dimension {levels}")));
        }
        if h.len() != n_ops {
            return Err(Error::InvalidModel(format!("expected {n_ops} Hamiltonian coefficients, got {}", h.len())));
        }
        if kossakowski.nrows() != n_ops || kossakowski.ncols() != n_ops {
            return Err(Error::InvalidModel(format!(
                "Kossakowski matrix must be {n_ops}x{n_ops}, got {}x{}",
                kossakowski.nrows(),
                kossakowski.ncols()
            )));
        }
        for (k, f) in basis.iter().enumerate() {
            if f.trace().norm() > MODEL_TOL {
                return Err(Error::InvalidModel(format!("basis operator F_{k} is not traceless")));
            }
        }
        for j in 0..n_ops {
            for k in 0..n_ops {
                let g = basis[j].hs_inner(&basis[k]);
                let expected = if j == k { C_ONE } else { C_ZERO };
                if (g - expected).norm() > MODEL_TOL {
                    return Err(Error::InvalidModel(format!(
                        "basis is not Hilbert-Schmidt orthonormal: Tr(F_{j}† F_{k}) = {g}"
                    )));
                }
            }
        }
        let scale = max_abs(&kossakowski).max(1.0);
        if max_abs(&(&kossakowski - kossakowski.adjoint())) > MODEL_TOL * scale {
            return Err(Error::InvalidModel("Kossakowski matrix is not Hermitian".into()));
        }
        let herm = (&kossakowski + kossakowski.adjoint()) * C64::new(0.5, 0.0);
        let min_eig = herm.symmetric_eigenvalues().min();
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidModel(format!(
                "Kossakowski matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})"
            )));
        }
        let model = Self { levels, h, basis, kossakowski };
        let ham = model.hamiltonian();
        let hscale = max_abs(ham.matrix()).max(1.0);
        if ham.hermiticity_defect() > MODEL_TOL * hscale {
            return Err(Error::InvalidModel("Hamiltonian Σ h_k F_k is not Hermitian".into()));
        }
        Ok(model)
    }

    /// Model expressed in the generalized Gell-Mann basis.
    pub fn with_gell_mann(levels: usize, h: Vec<C64>, kossakowski: DMatrix<C64>) -> Result<Self> {
        Self::new(h, gell_mann_basis(levels)?, kossakowski)
    }

    /// Converts a Hamiltonian plus jump operators (with rates) to the
    /// Gell-Mann representation. Trace parts of the jumps are moved into the
    /// Hamiltonian; the trace part of `H` is dropped.
    pub fn from_lindblad(h: &Operator, jumps: &[(Operator, f64)]) -> Result<Self> {
        let m = h.dim();
        let basis = gell_mann_basis(m)?;
        let n_ops = m * m - 1;
        let id = Operator::identity(m);
        let mut ham = h - &id.scale(h.trace() / m as f64);
        let mut a = DMatrix::<C64>::zeros(n_ops, n_ops);
        for (jump, rate) in jumps {
            if jump.dim() != m {
                return Err(Error::DimensionMismatch(format!(
                    "jump operator has {} levels, Hamiltonian has {m}",
                    jump.dim()
                )));
            }
            if *rate < 0.0 {
                return Err(Error::InvalidModel(format!("negative jump rate {rate}")));
            }
            let c = jump.trace() / m as f64;
            let traceless = jump - &id.scale(c);
            let shift = (&traceless.scale(c.conj()) - &traceless.adjoint().scale(c)).scale(C_I * 0.5 * *rate);
            ham = &ham + &shift;
            let l: Vec<C64> = basis.iter().map(|f| f.hs_inner(&traceless)).collect();
            for j in 0..n_ops {
                for k in 0..n_ops {
                    a[(j, k)] += l[j] * l[k].conj() * *rate;
                }
            }
        }
        let hk = basis.iter().map(|f| f.hs_inner(&ham)).collect();
        Self::new(hk, basis, a)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn hamiltonian_coefficients(&self) -> &[C64] {
        &self.h
    }

    pub fn basis(&self) -> &[Operator] {
        &self.basis
    }

    pub fn kossakowski(&self) -> &DMatrix<C64> {
        &self.kossakowski
    }

    pub fn hamiltonian(&self) -> Operator {
        let mut mat = DMatrix::zeros(self.levels, self.levels);
        for (hk, f) in self.h.iter().zip(&self.basis) {
            mat += f.matrix() * *hk;
        }
        Operator::from_matrix_unchecked(mat)
    }

    pub fn liouvillian(&self) -> SuperMatrix {
        single_system_liouvillian(self)
    }
}

/// `L₁ = −i(H⊗𝟙 − 𝟙⊗Hᵀ) + ½ Σ_jk a_jk (2 F_j⊗F_k* − (F_k†F_j)⊗𝟙 − 𝟙⊗(F_k†F_j)ᵀ)`.
pub fn single_system_liouvillian(model: &SindipModel) -> SuperMatrix {
    let m = model.levels;
    let d = m * m;
    let id = DMatrix::<C64>::identity(m, m);
    let h = model.hamiltonian();
    let mut out = (h.matrix().kronecker(&id) - id.kronecker(&h.matrix().transpose())) * -C_I;
    let n_ops = model.basis.len();
    let mut acc = DMatrix::<C64>::zeros(d, d);
    for j in 0..n_ops {
        let fj = model.basis[j].matrix();
        for k in 0..n_ops {
            let a = model.kossakowski[(j, k)];
            if a == C_ZERO {
                continue;
            }
            let fk = model.basis[k].matrix();
            let fkd_fj = fk.adjoint() * fj;
            let term = fj.kronecker(&fk.conjugate()) * C64::new(2.0, 0.0)
                - fkd_fj.kronecker(&id)
                - id.kronecker(&fkd_fj.transpose());
            acc += term * a;
        }
    }
    out += acc * C64::new(0.5, 0.0);
    SuperMatrix { levels: m, mat: out }
}
