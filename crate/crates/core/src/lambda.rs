//! Exact dynamics of an ensemble of three-level Λ atoms.
//!
//! Levels `0 < 1 < 2`; level 2 decays to 1 and to 0 at rates `γ₂₁`, `γ₂₀`
//! in a thermal bath with mean occupation `N₀`. The collective generator
//! splits into an `sl(3)` part spanned by
//!
//! * `S₊²⁰ = Ă₊^{22,00}`, `S₊²¹ = Ă₊^{22,11}`, `S₊¹⁰ = Ă₊^{11,00}`,
//! * their lowering partners `S₋`,
//! * `S₃²⁰ = Ă₃^{22,00}`, `S₃²¹ = Ă₃^{22,11}`,
//!
//! plus five diagonal generators commuting with it and a multiple of the
//! identity. The `sl(3)` exponential is disentangled into an ordered product
//! of single-generator exponentials, each of which acts on a symmetric basis
//! vector as a terminating binomial sum.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Matrix3;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::basis::{binomial_u64, OccupationIndex, SymBasis, SymState};
use crate::collective::{bosonize, ladder, HopTermList, Ladder};
use crate::error::{Error, Result};
use crate::liouville::{lindblad_supermatrix, slot, Operator, SuperMatrix, C_ONE, C_ZERO};

/// Relative eigenvalue gap below which two eigenvalues count as equal.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaParams {
    #[serde(rename = "N")]
    pub n: usize,
    pub gamma20: f64,
    pub gamma21: f64,
    #[serde(rename = "N0")]
    pub n0: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "E1")]
    pub e1: f64,
    #[serde(rename = "E2")]
    pub e2: f64,
}

impl LambdaParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.gamma20, self.gamma21, self.n0, self.e0, self.e1, self.e2].iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidModel("Λ parameters must be finite".into()));
        }
        if self.n < 1 {
            return Err(Error::InvalidModel("need at least one atom".into()));
        }
        if self.gamma20 <= 0.0 || self.gamma21 <= 0.0 {
            return Err(Error::InvalidModel("decay rates must be positive".into()));
        }
        if self.n0 < 0.0 {
            return Err(Error::InvalidModel("bath occupation must be non-negative".into()));
        }
        if !(self.e0 < self.e1 && self.e1 < self.e2) {
            return Err(Error::InvalidModel("level energies must satisfy E0 < E1 < E2".into()));
        }
        Ok(())
    }

    /// `γ = γ₂₀ + γ₂₁`.
    pub fn gamma(&self) -> f64 {
        self.gamma20 + self.gamma21
    }

    /// `Ñ₀ = 2N₀ + 1`.
    pub fn n0_tilde(&self) -> f64 {
        2.0 * self.n0 + 1.0
    }

    /// Mean level energy, the zero of energy.
    pub fn e_bar(&self) -> f64 {
        (self.e0 + self.e1 + self.e2) / 3.0
    }

    /// `Ẽ_i = 2(Ē − E_i)`.
    pub fn e_tilde(&self, i: usize) -> f64 {
        let e = [self.e0, self.e1, self.e2];
        2.0 * (self.e_bar() - e[i])
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..*self }
    }
}

/// A diagonal generator `Ă₃` given by its two slots, with its coefficient.
pub type DiagonalTerm = ((usize, usize), (usize, usize), C64);

/// Coefficients of the collective generator in the `sl(3)` plus diagonal
/// decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaCoefficients {
    /// Identity coefficient, proportional to `N`.
    pub alpha1: C64,
    /// On `Ă₃^{21,12}`.
    pub alpha2: C64,
    /// On `Ă₃^{21,01}`.
    pub alpha3: C64,
    /// On `Ă₃^{20,10}`.
    pub alpha4: C64,
    /// On `Ă₃^{12,10}`.
    pub alpha5: C64,
    /// On `Ă₃^{02,01}`.
    pub alpha6: C64,
    pub alpha_p21: C64,
    pub alpha_p20: C64,
    pub alpha_m21: C64,
    pub alpha_m20: C64,
    pub alpha3_21: C64,
    pub alpha3_20: C64,
}

impl LambdaCoefficients {
    pub fn new(p: &LambdaParams) -> Result<Self> {
        p.validate()?;
        let (g20, g21, n0) = (p.gamma20, p.gamma21, p.n0);
        let nt = p.n0_tilde();
        let a20 = (n0 - 1.0) * g20 - g21 * nt;
        let a21 = (n0 - 1.0) * g21 - g20 * nt;
        let et0 = p.e_tilde(0);
        let re = |x: f64| C64::new(x, 0.0);
        let im = |x: f64| C64::new(0.0, x);
        Ok(Self {
            alpha1: re(-p.gamma() * nt * p.n as f64 / 3.0),
            alpha2: im(-4.0 * (2.0 * p.e0 + p.e2 - 3.0 * p.e_bar())),
            alpha3: im(-3.0 * et0) + re(a20 / 3.0),
            alpha4: im(-2.0 * (p.e2 - p.e0)) + re(a21 / 3.0),
            alpha5: im(3.0 * et0) + re(a20 / 3.0),
            alpha6: im(2.0 * (p.e2 - p.e0)) + re(a21 / 3.0),
            alpha_p21: re(n0 * g21),
            alpha_p20: re(n0 * g20),
            alpha_m21: re(g21 * (n0 + 1.0)),
            alpha_m20: re(g20 * (n0 + 1.0)),
            alpha3_21: re(2.0 / 3.0 * a21),
            alpha3_20: re(2.0 / 3.0 * a20),
        })
    }

    /// Slot pairs and coefficients of the five commuting diagonal terms.
    pub fn diagonal_terms(&self) -> [DiagonalTerm; 5] {
        [
            ((2, 1), (1, 2), self.alpha2),
            ((2, 1), (0, 1), self.alpha3),
            ((2, 0), (1, 0), self.alpha4),
            ((1, 2), (1, 0), self.alpha5),
            ((0, 2), (0, 1), self.alpha6),
        ]
    }
}

/// Single-atom supermatrix built directly from the Hamiltonian and the two
/// thermal decay channels.
pub fn lambda_single_liouvillian(p: &LambdaParams) -> Result<SuperMatrix> {
    p.validate()?;
    let eb = p.e_bar();
    let h = Operator::diagonal(&[p.e0 - eb, p.e1 - eb, p.e2 - eb])?;
    let mut jumps = Vec::new();
    for (upper, lower, g) in [(2, 1, p.gamma21), (2, 0, p.gamma20)] {
        // σ₋ = |lower⟩⟨upper| with rate (N₀+1)γ, σ₊ with rate N₀γ
        jumps.push((Operator::dyad(3, lower, upper), (p.n0 + 1.0) * g));
        jumps.push((Operator::dyad(3, upper, lower), p.n0 * g));
    }
    lindblad_supermatrix(&h, &jumps)
}

/// The collective generator obtained by bosonizing the single-atom one.
pub fn build_lambda_liouvillian(p: &LambdaParams) -> Result<HopTermList> {
    Ok(bosonize(&lambda_single_liouvillian(p)?))
}

/// The collective generator assembled from the tabulated coefficients.
/// The identity term `α₁ 𝟙` is written as `(α₁/N) Σ_α b†_α b_α`.
pub fn lambda_table(p: &LambdaParams) -> Result<HopTermList> {
    let c = LambdaCoefficients::new(p)?;
    let mut out = HopTermList::empty(3);
    let mut add = |kind, a, b, coeff: C64| -> Result<()> {
        out = out.add_scaled(&ladder(3, kind, a, b)?, coeff)?;
        Ok(())
    };
    add(Ladder::Raise, (2, 2), (0, 0), c.alpha_p20)?;
    add(Ladder::Raise, (2, 2), (1, 1), c.alpha_p21)?;
    add(Ladder::Lower, (2, 2), (0, 0), c.alpha_m20)?;
    add(Ladder::Lower, (2, 2), (1, 1), c.alpha_m21)?;
    add(Ladder::Cartan, (2, 2), (0, 0), c.alpha3_20)?;
    add(Ladder::Cartan, (2, 2), (1, 1), c.alpha3_21)?;
    for (a, b, coeff) in c.diagonal_terms() {
        add(Ladder::Cartan, a, b, coeff)?;
    }
    let number = bosonize(&SuperMatrix::identity(3));
    out.add_scaled(&number, c.alpha1 / p.n as f64)
}

/// Generators of the three-dimensional `sl(3)` representation, with the
/// slots `00, 11, 22` mapped to rows `0, 1, 2`.
pub mod sl3 {
    use super::*;

    fn e(i: usize, j: usize) -> Matrix3<C64> {
        let mut m = Matrix3::zeros();
        m[(i, j)] = C_ONE;
        m
    }

    pub fn raise20() -> Matrix3<C64> {
        e(2, 0)
    }
    pub fn raise21() -> Matrix3<C64> {
        e(2, 1)
    }
    pub fn raise10() -> Matrix3<C64> {
        e(1, 0)
    }
    pub fn lower20() -> Matrix3<C64> {
        e(0, 2)
    }
    pub fn lower21() -> Matrix3<C64> {
        e(1, 2)
    }
    pub fn lower10() -> Matrix3<C64> {
        e(0, 1)
    }
    pub fn cartan20() -> Matrix3<C64> {
        (e(2, 2) - e(0, 0)) * C64::new(0.5, 0.0)
    }
    pub fn cartan21() -> Matrix3<C64> {
        (e(2, 2) - e(1, 1)) * C64::new(0.5, 0.0)
    }

    /// `Σ α · S` for the `sl(3)` part of the generator.
    pub fn exponent(c: &LambdaCoefficients) -> Matrix3<C64> {
        raise21() * c.alpha_p21
            + raise20() * c.alpha_p20
            + lower21() * c.alpha_m21
            + lower20() * c.alpha_m20
            + cartan21() * c.alpha3_21
            + cartan20() * c.alpha3_20
    }

    /// The ordered product `Π exp(β S)` in the disentangled order.
    pub fn ordered_product(b: &BchCoefficients) -> Matrix3<C64> {
        let ex = |m: Matrix3<C64>, beta: C64| (m * beta).exp();
        ex(raise20(), b.beta_p20)
            * ex(raise10(), b.beta_p10)
            * ex(raise21(), b.beta_p21)
            * ex(cartan21(), b.beta3_21)
            * ex(cartan20(), b.beta3_20)
            * ex(lower21(), b.beta_m21)
            * ex(lower10(), b.beta_m10)
            * ex(lower20(), b.beta_m20)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralBranch {
    Distinct,
    /// `μ = ν` with a diagonalizable exponent.
    Degenerate,
    /// Triple or defective degeneracy; disentangled numerically.
    Fallback,
}

/// Eigenvalues of the `sl(3)` exponent and the interpolation data of
/// `exp(tX) = (f₀ + f₁ X + f₂ X²) / D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralData {
    pub lambda: C64,
    pub mu: C64,
    pub nu: C64,
    pub d: C64,
    pub f0: C64,
    pub f1: C64,
    pub f2: C64,
    pub branch: SpectralBranch,
}

fn char_poly(x: &Matrix3<C64>) -> [C64; 4] {
    // z³ − tr z² + s₂ z − det
    let tr = x.trace();
    let s2 = x[(0, 0)] * x[(1, 1)] - x[(0, 1)] * x[(1, 0)] + x[(0, 0)] * x[(2, 2)] - x[(0, 2)] * x[(2, 0)]
        + x[(1, 1)] * x[(2, 2)]
        - x[(1, 2)] * x[(2, 1)];
    [-x.determinant(), s2, -tr, C_ONE]
}

fn polish(z: C64, p: &[C64; 4]) -> C64 {
    let mut z = z;
    for _ in 0..3 {
        let val = ((p[3] * z + p[2]) * z + p[1]) * z + p[0];
        let der = (3.0 * p[3] * z + 2.0 * p[2]) * z + p[1];
        if der.norm() <= 1e-12 * (1.0 + z.norm_sqr()) {
            break;
        }
        let step = val / der;
        if !step.is_finite() {
            break;
        }
        z -= step;
    }
    z
}

/// Eigenvalues ordered so that a degenerate pair, if any, is `(μ, ν)`.
fn spectrum(x: &Matrix3<C64>) -> (C64, C64, C64, SpectralBranch) {
    let ev = x.schur().eigenvalues().expect("complex Schur form always yields eigenvalues");
    let p = char_poly(x);
    let mut z = [ev[0], ev[1], ev[2]];
    let scale = z.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let thr = DEGENERACY_TOL * scale;
    let gaps = [(z[1] - z[2]).norm(), (z[0] - z[2]).norm(), (z[0] - z[1]).norm()];
    // `k` is the eigenvalue left out of the closest pair
    let k = (0..3).min_by(|&a, &b| gaps[a].total_cmp(&gaps[b])).unwrap();
    if gaps.iter().all(|&g| g <= thr) {
        return (z[0], z[1], z[2], SpectralBranch::Fallback);
    }
    if gaps[k] <= thr {
        let lambda = polish(z[k], &p);
        // the exponent is traceless, so the double root is −λ/2
        let mu = -lambda * 0.5;
        let id = Matrix3::<C64>::identity();
        let defect = ((x - id * lambda) * (x - id * mu)).iter().map(|v| v.norm()).fold(0.0, f64::max);
        let branch = if defect <= 1e-8 * scale * scale { SpectralBranch::Degenerate } else { SpectralBranch::Fallback };
        return (lambda, mu, mu, branch);
    }
    for v in &mut z {
        *v = polish(*v, &p);
    }
    (z[0], z[1], z[2], SpectralBranch::Distinct)
}

fn spectral_at(lambda: C64, mu: C64, nu: C64, branch: SpectralBranch, t: f64) -> SpectralData {
    let (el, em, en) = ((lambda * t).exp(), (mu * t).exp(), (nu * t).exp());
    let (d, f0, f1, f2) = match branch {
        SpectralBranch::Distinct => (
            (mu - lambda) * (nu - lambda) * (mu - nu),
            (mu * mu * nu - mu * nu * nu) * el
                + (nu * nu * lambda - nu * lambda * lambda) * em
                + (lambda * lambda * mu - lambda * mu * mu) * en,
            (nu * nu - mu * mu) * el + (lambda * lambda - nu * nu) * em + (mu * mu - lambda * lambda) * en,
            (mu - nu) * el + (nu - lambda) * em + (lambda - mu) * en,
        ),
        _ => (lambda - mu, lambda * em - mu * el, el - em, C_ZERO),
    };
    SpectralData { lambda, mu, nu, d, f0, f1, f2, branch }
}

pub fn sl3_spectral(c: &LambdaCoefficients, t: f64) -> SpectralData {
    let (l, m, n, branch) = spectrum(&sl3::exponent(c));
    spectral_at(l, m, n, branch, t)
}

/// Coordinates of the second kind: `exp(t Σ α S) = Π exp(β S)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BchCoefficients {
    pub beta3_21: C64,
    pub beta3_20: C64,
    pub beta_p21: C64,
    pub beta_p20: C64,
    pub beta_p10: C64,
    pub beta_m21: C64,
    pub beta_m20: C64,
    pub beta_m10: C64,
    /// Set when the coefficients came from the numerical factorization.
    pub fallback: bool,
}

impl BchCoefficients {
    pub fn zero() -> Self {
        Self {
            beta3_21: C_ZERO,
            beta3_20: C_ZERO,
            beta_p21: C_ZERO,
            beta_p20: C_ZERO,
            beta_p10: C_ZERO,
            beta_m21: C_ZERO,
            beta_m20: C_ZERO,
            beta_m10: C_ZERO,
            fallback: false,
        }
    }

    pub fn as_array(&self) -> [C64; 8] {
        [
            self.beta3_21,
            self.beta3_20,
            self.beta_p21,
            self.beta_p20,
            self.beta_p10,
            self.beta_m21,
            self.beta_m20,
            self.beta_m10,
        ]
    }
}

/// `−2 log z` on the principal branch, rejecting the cut and non-finite input.
fn minus_two_log(z: C64, expr: &'static str) -> Result<C64> {
    if !z.is_finite() || z.norm() == 0.0 {
        return Err(Error::Branch { expr, detail: format!("value {z} has no logarithm") });
    }
    if z.re <= 0.0 && z.im.abs() <= 1e-14 * z.norm() {
        return Err(Error::Branch { expr, detail: format!("value {z} lies on the branch cut") });
    }
    Ok(-2.0 * z.ln())
}

fn check_finite(b: &BchCoefficients) -> Result<()> {
    if b.as_array().iter().all(|z| z.is_finite()) {
        Ok(())
    } else {
        Err(Error::Branch { expr: "beta", detail: "non-finite disentangling coefficient".into() })
    }
}

/// Disentangling coefficients at time `t`.
///
/// The closed forms are evaluated with the Cartan coefficients halved, and
/// the resulting Cartan exponents doubled, which matches the normalization
/// `S₃ = ½(n_a − n_b)`.
pub fn bch_sl3(c: &LambdaCoefficients, t: f64) -> Result<BchCoefficients> {
    if t == 0.0 {
        return Ok(BchCoefficients::zero());
    }
    let sp = sl3_spectral(c, t);
    if sp.branch == SpectralBranch::Fallback {
        return bch_numerical(c, t);
    }
    let (d, f0, f1, f2) = (sp.d, sp.f0, sp.f1, sp.f2);
    let a20 = c.alpha3_20 * 0.5;
    let a21 = c.alpha3_21 * 0.5;
    let (p20, p21, m20, m21) = (c.alpha_p20, c.alpha_p21, c.alpha_m20, c.alpha_m21);

    let emb20 = (-a20 * f1 + f0 + f2 * (p20 * m20 + a20 * a20)) / d;
    let eb20 = 1.0 / emb20;
    let beta_p10 = p20 * f2 * m21 * eb20 / d;
    let beta_m10 = m20 * f2 * p21 * eb20 / d;
    let beta_p20 = p20 * eb20 * (a21 * f2 + f1) / d;
    let beta_m20 = m20 * eb20 * (a21 * f2 + f1) / d;
    let emb21 = -emb20 * beta_p10 * beta_m10 + (-a21 * f1 + f0 + f2 * (p21 * m21 + a21 * a21)) / d;
    let eb21 = 1.0 / emb21;
    let beta_p21 = eb21 * (-beta_m10 * beta_p20 * emb20 + p21 * (a20 * f2 + f1) / d);
    let beta_m21 = eb21 * (-beta_p10 * beta_m20 * emb20 + m21 * (a20 * f2 + f1) / d);
    let out = BchCoefficients {
        beta3_21: minus_two_log(emb21, "exp(-beta3_21/2)")?,
        beta3_20: minus_two_log(emb20, "exp(-beta3_20/2)")?,
        beta_p21,
        beta_p20,
        beta_p10,
        beta_m21,
        beta_m20,
        beta_m10,
        fallback: false,
    };
    check_finite(&out)?;
    Ok(out)
}

/// Disentangling by an unpivoted `L·D·U` factorization of `exp(tX)`.
pub fn bch_numerical(c: &LambdaCoefficients, t: f64) -> Result<BchCoefficients> {
    let g = (sl3::exponent(c) * C64::new(t, 0.0)).exp();
    let d0 = g[(0, 0)];
    if d0.norm() <= 1e-300 {
        return Err(Error::Branch { expr: "exp(tX)[0,0]", detail: "zero pivot in numerical disentangling".into() });
    }
    let l10 = g[(1, 0)] / d0;
    let l20 = g[(2, 0)] / d0;
    let u01 = g[(0, 1)] / d0;
    let u02 = g[(0, 2)] / d0;
    let d1 = g[(1, 1)] - l10 * d0 * u01;
    if d1.norm() <= 1e-300 {
        return Err(Error::Branch {
            expr: "exp(tX) second pivot",
            detail: "zero pivot in numerical disentangling".into(),
        });
    }
    let l21 = (g[(2, 1)] - l20 * d0 * u01) / d1;
    let u12 = (g[(1, 2)] - l10 * d0 * u02) / d1;
    // exp(β₃²¹S₃²¹)exp(β₃²⁰S₃²⁰) = diag(e^{−β₃²⁰/2}, e^{−β₃²¹/2}, ·)
    let out = BchCoefficients {
        beta3_21: minus_two_log(d1, "exp(-beta3_21/2)")?,
        beta3_20: minus_two_log(d0, "exp(-beta3_20/2)")?,
        beta_p21: l21,
        beta_p20: l20,
        beta_p10: l10,
        beta_m21: u12,
        beta_m20: u02,
        beta_m10: u01,
        fallback: true,
    };
    check_finite(&out)?;
    Ok(out)
}

/// Shifts `cur` by multiples of `4πi` (the period of a Cartan exponent) to
/// the representative closest to `prev`.
fn unwrap(prev: C64, cur: C64) -> C64 {
    let period = 4.0 * PI;
    let k = ((cur.im - prev.im) / period).round();
    C64::new(cur.re, cur.im - k * period)
}

/// [`bch_sl3`] along an increasing time grid, with the Cartan exponents
/// made continuous in `t`.
pub fn bch_sl3_grid(c: &LambdaCoefficients, times: &[f64]) -> Result<Vec<BchCoefficients>> {
    let mut out: Vec<BchCoefficients> = Vec::with_capacity(times.len());
    for &t in times {
        let mut b = bch_sl3(c, t)?;
        if let Some(prev) = out.last() {
            b.beta3_20 = unwrap(prev.beta3_20, b.beta3_20);
            b.beta3_21 = unwrap(prev.beta3_21, b.beta3_21);
        }
        out.push(b);
    }
    Ok(out)
}

/// `max|Π exp(βS) − exp(tX)| / max(1, max|exp(tX)|)` in the 3×3
/// representation.
pub fn disentangle_residual(c: &LambdaCoefficients, t: f64, b: &BchCoefficients) -> f64 {
    let g = (sl3::exponent(c) * C64::new(t, 0.0)).exp();
    let p = sl3::ordered_product(b);
    let scale = g.iter().map(|v| v.norm()).fold(1.0, f64::max);
    (p - g).iter().map(|v| v.norm()).fold(0.0, f64::max) / scale
}

fn binom(n: i64, k: i64) -> f64 {
    if k < 0 || n < 0 || k > n {
        return 0.0;
    }
    binomial_u64(n as u64, k as u64).expect("occupations are small") as f64
}

fn check_three_level(state: &SymState) -> Result<()> {
    if state.basis().levels() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "Λ dynamics needs three levels, state has {}",
            state.basis().levels()
        )));
    }
    Ok(())
}

/// `exp(β Ă) · state` for a single ladder generator on slots `a`, `b`.
///
/// Raising and lowering exponentials are evaluated as the terminating sum
/// `Σ_k β^k C(n_src, k) Q_{n − k e_src + k e_dst}`.
pub fn ladder_exponential(kind: Ladder, a: usize, b: usize, beta: C64, state: &SymState) -> Result<SymState> {
    let basis = state.basis().clone();
    let d = basis.slots();
    if a == b || a >= d || b >= d {
        return Err(Error::InvalidArgument(format!("invalid slot pair ({a}, {b})")));
    }
    let mut out = SymState::zeros(basis.clone());
    if beta == C_ZERO {
        out.coeffs_mut().copy_from_slice(state.coeffs());
        return Ok(out);
    }
    let (dst, src) = match kind {
        Ladder::Raise => (a, b),
        Ladder::Lower => (b, a),
        Ladder::Cartan => {
            for ((idx, c), o) in basis.iter().zip(state.coeffs()).zip(out.coeffs_mut()) {
                let e = (idx.slot(a) as f64 - idx.slot(b) as f64) * 0.5;
                *o = c * (beta * e).exp();
            }
            return Ok(out);
        }
    };
    for (idx, &c) in basis.iter().zip(state.coeffs()) {
        if c == C_ZERO {
            continue;
        }
        let mut occ = idx.occupations().to_vec();
        let n_src = occ[src] as i64;
        let mut power = C_ONE;
        for k in 0..=n_src {
            out.coeffs_mut()[basis.rank_occ(&occ)] += c * power * binom(n_src, k);
            occ[src] = occ[src].saturating_sub(1);
            occ[dst] += 1;
            power *= beta;
        }
    }
    Ok(out)
}

fn check_params_state(p: &LambdaParams, state: &SymState) -> Result<()> {
    check_three_level(state)?;
    if state.basis().n() != p.n {
        return Err(Error::DimensionMismatch(format!(
            "parameters describe {} atoms, state has {}",
            p.n,
            state.basis().n()
        )));
    }
    Ok(())
}

/// `exp(L t) ρ₀` as the product of single-generator exponentials.
pub fn analytic_propagate(p: &LambdaParams, rho0: &SymState, t: f64) -> Result<SymState> {
    check_params_state(p, rho0)?;
    let c = LambdaCoefficients::new(p)?;
    let b = bch_sl3(&c, t)?;
    apply_disentangled(&c, &b, rho0, t)
}

pub(crate) fn apply_disentangled(
    c: &LambdaCoefficients,
    b: &BchCoefficients,
    rho0: &SymState,
    t: f64,
) -> Result<SymState> {
    let s = |i, j| slot(i, j, 3);
    let (s00, s11, s22) = (s(0, 0), s(1, 1), s(2, 2));
    // rightmost factor first
    let steps = [
        (Ladder::Lower, s22, s00, b.beta_m20),
        (Ladder::Lower, s11, s00, b.beta_m10),
        (Ladder::Lower, s22, s11, b.beta_m21),
        (Ladder::Cartan, s22, s00, b.beta3_20),
        (Ladder::Cartan, s22, s11, b.beta3_21),
        (Ladder::Raise, s22, s11, b.beta_p21),
        (Ladder::Raise, s11, s00, b.beta_p10),
        (Ladder::Raise, s22, s00, b.beta_p20),
    ];
    let mut x = rho0.clone();
    for (kind, a, bb, beta) in steps {
        x = ladder_exponential(kind, a, bb, beta, &x)?;
    }
    for ((i, j), (k, l), alpha) in c.diagonal_terms() {
        x = ladder_exponential(Ladder::Cartan, s(i, j), s(k, l), alpha * t, &x)?;
    }
    x.scale((c.alpha1 * t).exp());
    Ok(x)
}

/// `exp(L t) Q_idx` from the explicit multi-sum over lowering counts
/// `(i₋, j₋, k₋)` and raising counts `(k₊, j₊, i₊)`.
pub fn closed_form_coefficients(idx: &OccupationIndex, p: &LambdaParams, t: f64) -> Result<SymState> {
    if idx.levels() != 3 || idx.n() != p.n {
        return Err(Error::InvalidArgument(format!("index {idx} does not describe {} three-level atoms", p.n)));
    }
    let c = LambdaCoefficients::new(p)?;
    let b = bch_sl3(&c, t)?;
    let basis = SymBasis::shared(3, p.n)?;
    Ok(closed_form_with(idx, &c, &b, basis, t))
}

fn closed_form_with(
    idx: &OccupationIndex,
    c: &LambdaCoefficients,
    b: &BchCoefficients,
    basis: Arc<SymBasis>,
    t: f64,
) -> SymState {
    let q = |i, j| idx.get(i, j) as i64;
    let (n00, n11, n22) = (q(0, 0), q(1, 1), q(2, 2));
    let n = idx.n() as f64;
    let half_t = 0.5 * t;
    let off = (q(1, 0) + q(2, 0) + q(2, 1) + q(1, 2) + 2 * q(0, 1)) as f64;
    let diag_part = (c.alpha2 * (q(2, 1) - q(1, 2)) as f64
        + c.alpha3 * (q(2, 1) - q(0, 1)) as f64
        + c.alpha4 * (q(2, 0) - q(1, 0)) as f64
        + c.alpha5 * (q(1, 2) - q(1, 0)) as f64)
        * half_t;
    let mut out = SymState::zeros(basis.clone());
    let mut occ = idx.occupations().to_vec();
    for im in 0..=n22 {
        let w_im = b.beta_m20.powu(im as u32) * binom(n22, im);
        for jm in 0..=n11 {
            let w_jm = w_im * b.beta_m10.powu(jm as u32) * binom(n11, jm);
            for km in 0..=(n22 - im) {
                let w_km = w_jm * b.beta_m21.powu(km as u32) * binom(n22 - im, km);
                if w_km == C_ZERO {
                    continue;
                }
                // occupations after the lowering factors
                let (l00, l11, l22) = (n00 + im + jm, n11 - jm + km, n22 - im - km);
                let cartan = (b.beta3_21 * ((l22 - l11) as f64 * 0.5) + b.beta3_20 * ((l22 - l00) as f64 * 0.5)).exp();
                for kp in 0..=l11 {
                    let w_kp = w_km * cartan * b.beta_p21.powu(kp as u32) * binom(l11, kp);
                    for jp in 0..=l00 {
                        let w_jp = w_kp * b.beta_p10.powu(jp as u32) * binom(l00, jp);
                        for ip in 0..=(l00 - jp) {
                            let w = w_jp * b.beta_p20.powu(ip as u32) * binom(l00 - jp, ip);
                            if w == C_ZERO {
                                continue;
                            }
                            let v00 = l00 - jp - ip;
                            let v11 = l11 - kp + jp;
                            let v22 = l22 + kp + ip;
                            let n02 = n - (v00 + v11 + v22) as f64 - off;
                            let big_c = (c.alpha1 * t + c.alpha6 * n02 * half_t + diag_part).exp();
                            occ[slot(0, 0, 3)] = v00 as u32;
                            occ[slot(1, 1, 3)] = v11 as u32;
                            occ[slot(2, 2, 3)] = v22 as u32;
                            out.coeffs_mut()[basis.rank_occ(&occ)] += w * big_c;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Applies [`closed_form_coefficients`] to every component of `rho0`.
pub fn closed_form_propagate(p: &LambdaParams, rho0: &SymState, t: f64) -> Result<SymState> {
    check_params_state(p, rho0)?;
    let c = LambdaCoefficients::new(p)?;
    let b = bch_sl3(&c, t)?;
    let basis = rho0.basis().clone();
    let mut out = SymState::zeros(basis.clone());
    for (idx, &x) in basis.iter().zip(rho0.coeffs()) {
        if x != C_ZERO {
            let col = closed_form_with(&idx, &c, &b, basis.clone(), t);
            out.axpy(x, &col)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::product_state_expand;
    use crate::collective::assemble;
    use crate::collective::SymLiouvillian;
    use crate::evolution::{collective_expectation, propagate, Method, PropagationSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(n: usize, n0: f64) -> LambdaParams {
        LambdaParams { n, gamma20: 0.7, gamma21: 1.3, n0, e0: 0.0, e1: 0.4, e2: 1.5 }
    }

    #[test]
    fn validation() {
        assert!(params(2, 0.5).validate().is_ok());
        assert!(LambdaParams { gamma20: 0.0, ..params(2, 0.5) }.validate().is_err());
        assert!(LambdaParams { n0: -0.1, ..params(2, 0.5) }.validate().is_err());
        assert!(LambdaParams { e1: 2.0, ..params(2, 0.5) }.validate().is_err());
        assert!(LambdaParams { n: 0, ..params(2, 0.5) }.validate().is_err());
    }

    #[test]
    fn bosonized_generator_matches_table() {
        for n in 1..=3 {
            for n0 in [0.0, 0.8] {
                let p = params(n, n0);
                let basis = SymBasis::new(3, n).unwrap();
                let a = assemble(&build_lambda_liouvillian(&p).unwrap(), &basis).unwrap();
                let b = assemble(&lambda_table(&p).unwrap(), &basis).unwrap();
                assert!(a.sub(&b).unwrap().max_abs() <= 1e-12, "N={n} N0={n0}");
            }
        }
    }

    #[test]
    fn tabulated_coefficient_values() {
        let p = params(4, 0.8);
        let h = build_lambda_liouvillian(&p).unwrap();
        let (s00, s11, s22) = (0, 4, 8);
        assert!((h.coeff(s22, s00).re - p.n0 * p.gamma20).abs() < 1e-15);
        assert!((h.coeff(s00, s22).re - (p.n0 + 1.0) * p.gamma20).abs() < 1e-15);
        let c = LambdaCoefficients::new(&p).unwrap();
        assert!((c.alpha1.re + p.gamma() * p.n0_tilde() * 4.0 / 3.0).abs() < 1e-15);
        let cold = build_lambda_liouvillian(&params(4, 0.0)).unwrap();
        assert_eq!(cold.coeff(s22, s00), C_ZERO);
        assert_eq!(cold.coeff(s22, s11), C_ZERO);
    }

    #[test]
    fn spectral_data_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (l, m, n) = (
                C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
            );
            let sp = spectral_at(l, m, n, SpectralBranch::Distinct, 0.0);
            assert!(sp.f1.norm() < 1e-12 && sp.f2.norm() < 1e-12);
            assert!((sp.f0 - sp.d).norm() < 1e-12);
        }
        let cold = sl3_spectral(&LambdaCoefficients::new(&params(1, 0.0)).unwrap(), 0.7);
        assert_eq!(cold.branch, SpectralBranch::Degenerate);
        assert_eq!(cold.f2, C_ZERO);
    }

    #[test]
    fn interpolation_reproduces_exponential() {
        for n0 in [0.0, 0.3, 2.0] {
            let c = LambdaCoefficients::new(&params(1, n0)).unwrap();
            let x = sl3::exponent(&c);
            let t = 1.1;
            let sp = sl3_spectral(&c, t);
            let id = Matrix3::<C64>::identity();
            let approx = (id * sp.f0 + x * sp.f1 + x * x * sp.f2) / sp.d;
            let exact = (x * C64::new(t, 0.0)).exp();
            assert!((approx - exact).iter().all(|v| v.norm() < 1e-12), "N0={n0}");
        }
    }

    #[test]
    fn disentangling_identity() {
        for n0 in [0.0, 0.2, 1.0, 3.0] {
            let c = LambdaCoefficients::new(&params(1, n0)).unwrap();
            for t in [0.0, 0.3, 2.0, 5.0] {
                let b = bch_sl3(&c, t).unwrap();
                assert!(disentangle_residual(&c, t, &b) <= 1e-10, "N0={n0} t={t}");
                let numeric = bch_numerical(&c, t).unwrap();
                assert!(disentangle_residual(&c, t, &numeric) <= 1e-10);
            }
        }
        assert_eq!(bch_sl3(&LambdaCoefficients::new(&params(1, 1.0)).unwrap(), 0.0).unwrap(), BchCoefficients::zero());
    }

    #[test]
    fn unwrap_keeps_cartan_exponents_continuous() {
        let prev = C64::new(1.0, 6.0);
        let cur = C64::new(1.1, 6.0 - 4.0 * PI + 0.1);
        assert!((unwrap(prev, cur) - C64::new(1.1, 6.1)).norm() < 1e-12);
    }

    #[test]
    fn branch_cut_is_reported() {
        assert!(matches!(minus_two_log(C64::new(-1.0, 0.0), "x"), Err(Error::Branch { .. })));
        assert!(minus_two_log(C64::new(f64::NAN, 0.0), "x").is_err());
        assert!(minus_two_log(C64::new(-1.0, 0.5), "x").is_ok());
    }

    #[test]
    fn ladder_exponential_examples() {
        let basis = SymBasis::shared(3, 2).unwrap();
        let idx = OccupationIndex::from_pairs(3, &[((2, 2), 1), ((0, 1), 1)]).unwrap();
        let x = SymState::basis_vector(basis.clone(), &idx).unwrap();
        assert_eq!(ladder_exponential(Ladder::Lower, 8, 4, C_ZERO, &x).unwrap(), x);
        let beta = C64::new(0.3, -0.2);
        let y = ladder_exponential(Ladder::Lower, 8, 4, beta, &x).unwrap();
        let moved = OccupationIndex::from_pairs(3, &[((1, 1), 1), ((0, 1), 1)]).unwrap();
        assert_eq!(y.coeff(&idx).unwrap(), C_ONE);
        assert_eq!(y.coeff(&moved).unwrap(), beta);
        assert!((y.norm().powi(2) - 1.0 - beta.norm_sqr()).abs() < 1e-15);

        let even = OccupationIndex::from_pairs(3, &[((2, 2), 1), ((1, 1), 1)]).unwrap();
        let z = SymState::basis_vector(basis, &even).unwrap();
        assert_eq!(ladder_exponential(Ladder::Cartan, 8, 4, beta, &z).unwrap(), z);
    }

    #[test]
    fn single_atom_zero_temperature_decay() {
        let p = params(1, 0.0);
        let basis = SymBasis::shared(3, 1).unwrap();
        let rho0 = product_state_expand(&Operator::dyad(3, 2, 2), basis).unwrap();
        let g = p.gamma();
        for t in [0.0, 0.4, 1.7] {
            let s = analytic_propagate(&p, &rho0, t).unwrap();
            let pop = |k| collective_expectation(&Operator::dyad(3, k, k), &s).unwrap().re;
            let decay = (-g * t).exp();
            assert!((pop(2) - decay).abs() < 1e-12);
            assert!((pop(1) - p.gamma21 / g * (1.0 - decay)).abs() < 1e-12);
            assert!((pop(0) - p.gamma20 / g * (1.0 - decay)).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_and_closed_form_match_numerics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=3 {
            for n0 in [0.0, 1.0] {
                let p = params(n, n0);
                let basis = SymBasis::shared(3, n).unwrap();
                let l = SymLiouvillian::from_hops(&build_lambda_liouvillian(&p).unwrap(), basis.clone()).unwrap();
                let coeffs =
                    (0..basis.size()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                let mut x = SymState::from_coeffs(basis.clone(), coeffs).unwrap();
                let tr = x.trace();
                x.scale(1.0 / tr);
                let t = 0.9;
                let spec = PropagationSpec::new(vec![t], Method::DenseExpm, 1e-12).unwrap();
                let reference = propagate(&l, &x, &spec).unwrap().remove(0);
                let scale = reference.norm();
                let a = analytic_propagate(&p, &x, t).unwrap();
                let cf = closed_form_propagate(&p, &x, t).unwrap();
                assert!(a.distance(&reference).unwrap() <= 1e-9 * scale, "analytic N={n} N0={n0}");
                assert!(cf.distance(&reference).unwrap() <= 1e-9 * scale, "closed N={n} N0={n0}");
            }
        }
    }

    #[test]
    fn closed_form_at_zero_time_is_identity() {
        let p = params(2, 1.0);
        let idx = OccupationIndex::from_pairs(3, &[((2, 2), 2)]).unwrap();
        let s = closed_form_coefficients(&idx, &p, 0.0).unwrap();
        assert_eq!(s.coeff(&idx).unwrap(), C_ONE);
        assert!((s.norm() - 1.0).abs() < 1e-15);
        assert!(closed_form_coefficients(&idx, &params(3, 1.0), 0.1).is_err());
    }
}
