//! Time propagation `ρ(t) = exp(L t) ρ₀` and one-body observables.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::basis::SymState;
use crate::collective::{bosonize, SymLiouvillian};
use crate::error::{Error, Result};
use crate::liouville::{left_right_supermatrix, slot, Operator, C_ZERO};
use crate::sparse::CscMatrix;

pub const DEFAULT_TOL: f64 = 1e-10;
/// Largest dimension for which `Method::Auto` picks the dense exponential.
pub const AUTO_DENSE_MAX: usize = 500;
/// Largest dimension accepted by the dense exponential at all.
pub const DENSE_CAP: usize = 4096;
/// Allowed deviation of the initial trace from one.
pub const TRACE_TOL: f64 = 1e-8;

const KRYLOV_DIM: usize = 30;
const MAX_REJECTIONS: usize = 60;
const MAX_ODE_STEPS: usize = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DenseExpm,
    KrylovExpmv,
    AdaptiveOde,
    /// Dense up to [`AUTO_DENSE_MAX`], Krylov beyond.
    #[default]
    Auto,
}

impl Method {
    pub fn resolve(self, dim: usize) -> Method {
        match self {
            Method::Auto if dim <= AUTO_DENSE_MAX => Method::DenseExpm,
            Method::Auto => Method::KrylovExpmv,
            m => m,
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" | "dense-expm" => Ok(Method::DenseExpm),
            "krylov" | "krylov-expmv" => Ok(Method::KrylovExpmv),
            "ode" | "adaptive-ode" => Ok(Method::AdaptiveOde),
            "auto" => Ok(Method::Auto),
            other => Err(Error::InvalidArgument(format!("unknown propagation method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationSpec {
    t_grid: Vec<f64>,
    method: Method,
    tol: f64,
}

impl PropagationSpec {
    /// `t_grid` must be non-empty, start at `t ≥ 0` and increase strictly.
    pub fn new(t_grid: Vec<f64>, method: Method, tol: f64) -> Result<Self> {
        if t_grid.is_empty() || !t_grid.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidArgument("time grid must be non-empty and finite".into()));
        }
        if t_grid[0] < 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("time grid must start at t ≥ 0 and increase".into()));
        }
        if !(tol > 0.0 && tol <= 1e-2) {
            return Err(Error::InvalidArgument(format!("tolerance {tol} outside (0, 1e-2]")));
        }
        Ok(Self { t_grid, method, tol })
    }

    /// `count` equally spaced times from `start` to `stop` inclusive.
    pub fn linspace(start: f64, stop: f64, count: usize, method: Method, tol: f64) -> Result<Self> {
        let grid = match count {
            0 => Vec::new(),
            1 => vec![start],
            _ => (0..count).map(|k| start + (stop - start) * k as f64 / (count - 1) as f64).collect(),
        };
        Self::new(grid, method, tol)
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Calls `visit(k, t_k, v(t_k))` for every grid time, where `v(t) = exp(A t) v₀`.
pub fn propagate_vector_with<F>(a: &CscMatrix, v0: &[C64], spec: &PropagationSpec, mut visit: F) -> Result<()>
where
    F: FnMut(usize, f64, &[C64]) -> Result<()>,
{
    let n = a.ncols();
    if a.nrows() != n || v0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "generator {}x{} with vector of length {}",
            a.nrows(),
            n,
            v0.len()
        )));
    }
    let grid = spec.t_grid();
    let span = grid[grid.len() - 1];
    let mut w = v0.to_vec();
    let mut t_prev = 0.0;
    match spec.method().resolve(n) {
        Method::DenseExpm => {
            if n > DENSE_CAP {
                return Err(Error::SizeCap(format!("dense exponential limited to dimension {DENSE_CAP}, got {n}")));
            }
            let dense = a.to_dense();
            let mut cached: Option<(f64, DMatrix<C64>)> = None;
            for (k, &t) in grid.iter().enumerate() {
                let dt = t - t_prev;
                if dt > 0.0 {
                    let reuse = cached.as_ref().is_some_and(|(h, _)| (h - dt).abs() <= 1e-14 * dt);
                    if !reuse {
                        cached = Some((dt, (&dense * C64::new(dt, 0.0)).exp()));
                    }
                    let e = &cached.as_ref().unwrap().1;
                    w = (e * DVector::from_vec(w)).data.into();
                }
                visit(k, t, &w)?;
                t_prev = t;
            }
        }
        Method::KrylovExpmv => {
            let mut kry = Krylov::new(a, spec.tol(), span);
            for (k, &t) in grid.iter().enumerate() {
                kry.advance(&mut w, t - t_prev)?;
                visit(k, t, &w)?;
                t_prev = t;
            }
        }
        Method::AdaptiveOde => {
            let mut ode = Dopri::new(a, spec.tol(), span);
            for (k, &t) in grid.iter().enumerate() {
                ode.advance(&mut w, t - t_prev)?;
                visit(k, t, &w)?;
                t_prev = t;
            }
        }
        Method::Auto => unreachable!("resolved above"),
    }
    Ok(())
}

/// `exp(A t_k) v₀` for every grid time.
pub fn propagate_vector(a: &CscMatrix, v0: &[C64], spec: &PropagationSpec) -> Result<Vec<Vec<C64>>> {
    let mut out = Vec::with_capacity(spec.t_grid().len());
    propagate_vector_with(a, v0, spec, |_, _, w| {
        out.push(w.to_vec());
        Ok(())
    })?;
    Ok(out)
}

fn check_initial(l: &SymLiouvillian, rho0: &SymState) -> Result<()> {
    if **rho0.basis() != **l.basis() {
        return Err(Error::DimensionMismatch("state and generator use different bases".into()));
    }
    let tr = rho0.trace();
    if (tr - 1.0).norm() > TRACE_TOL {
        return Err(Error::InvalidArgument(format!("initial state has trace {tr}, expected 1")));
    }
    Ok(())
}

/// Like [`propagate`] but hands each state to `visit` instead of storing it.
pub fn propagate_with<F>(l: &SymLiouvillian, rho0: &SymState, spec: &PropagationSpec, mut visit: F) -> Result<()>
where
    F: FnMut(usize, f64, &SymState) -> Result<()>,
{
    check_initial(l, rho0)?;
    let basis = l.basis().clone();
    let mut scratch = Some(SymState::zeros(basis));
    propagate_vector_with(l.matrix(), rho0.coeffs(), spec, |k, t, w| {
        let state = scratch.as_mut().unwrap();
        state.coeffs_mut().copy_from_slice(w);
        visit(k, t, state)
    })
}

/// States at every grid time.
pub fn propagate(l: &SymLiouvillian, rho0: &SymState, spec: &PropagationSpec) -> Result<Vec<SymState>> {
    let mut out = Vec::with_capacity(spec.t_grid().len());
    propagate_with(l, rho0, spec, |_, _, s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Rounds to two significant digits, as step sizes are reported.
fn round2(x: f64) -> f64 {
    if x <= 0.0 || !x.is_finite() {
        return x;
    }
    let s = 10f64.powf(x.log10().floor() - 1.0);
    (x / s + 0.55).trunc() * s
}

/// Arnoldi-based `exp(A t) v` with local error control.
struct Krylov<'a> {
    a: &'a CscMatrix,
    m: usize,
    anorm: f64,
    /// Local error allowed per unit time, relative to the current norm.
    tol_rate: f64,
    tol: f64,
    t_new: f64,
    v: Vec<Vec<C64>>,
    p: Vec<C64>,
}

impl<'a> Krylov<'a> {
    fn new(a: &'a CscMatrix, tol: f64, span: f64) -> Self {
        let n = a.ncols();
        let m = KRYLOV_DIM.min(n).max(1);
        let anorm = a.norm1().max(f64::MIN_POSITIVE);
        let xm = 1.0 / m as f64;
        let mp1 = (m + 1) as f64;
        let fact = (mp1 / std::f64::consts::E).powf(mp1) * (2.0 * std::f64::consts::PI * mp1).sqrt();
        let t_new = round2((1.0 / anorm) * ((fact * tol) / (4.0 * anorm)).powf(xm));
        Self {
            a,
            m,
            anorm,
            tol_rate: tol / span.max(f64::MIN_POSITIVE),
            tol,
            t_new,
            v: vec![vec![C_ZERO; n]; m + 1],
            p: vec![C_ZERO; n],
        }
    }

    fn advance(&mut self, w: &mut [C64], dt: f64) -> Result<()> {
        let m = self.m;
        let btol = 1e-13 * self.anorm;
        let (gamma, delta) = (0.9, 1.0);
        let mut t_now = 0.0;
        while t_now < dt {
            let beta = norm(w);
            if beta == 0.0 {
                return Ok(());
            }
            let mut t_step = self.t_new.min(dt - t_now);
            for (vi, wi) in self.v[0].iter_mut().zip(w.iter()) {
                *vi = wi / beta;
            }
            let mut h = DMatrix::<C64>::zeros(m + 2, m + 2);
            let mut happy = None;
            for j in 0..m {
                self.a.matvec_into(&self.v[j], &mut self.p);
                for i in 0..=j {
                    let hij: C64 = self.v[i].iter().zip(&self.p).map(|(x, y)| x.conj() * y).sum();
                    h[(i, j)] = hij;
                    for (pk, vk) in self.p.iter_mut().zip(&self.v[i]) {
                        *pk -= hij * vk;
                    }
                }
                let s = norm(&self.p);
                if s <= btol {
                    happy = Some(j + 1);
                    t_step = dt - t_now;
                    break;
                }
                h[(j + 1, j)] = C64::new(s, 0.0);
                let (head, tail) = self.v.split_at_mut(j + 1);
                let _ = head;
                for (vk, pk) in tail[0].iter_mut().zip(&self.p) {
                    *vk = pk / s;
                }
            }
            let mut avnorm = 0.0;
            if happy.is_none() {
                h[(m + 1, m)] = C64::new(1.0, 0.0);
                self.a.matvec_into(&self.v[m], &mut self.p);
                avnorm = norm(&self.p);
            }
            let mut rejections = 0;
            let (f, err_loc, xm) = loop {
                let mx = happy.unwrap_or(m + 2);
                let f = (h.view((0, 0), (mx, mx)) * C64::new(t_step, 0.0)).exp();
                if happy.is_some() {
                    break (f, 0.0, 1.0 / m as f64);
                }
                let phi1 = (f[(m, 0)] * beta).norm();
                let phi2 = (f[(m + 1, 0)] * beta * avnorm).norm();
                let (err_loc, xm) = if phi1 > 10.0 * phi2 {
                    (phi2, 1.0 / m as f64)
                } else if phi1 > phi2 {
                    (phi1 * phi2 / (phi1 - phi2), 1.0 / m as f64)
                } else {
                    (phi1, 1.0 / (m.max(2) - 1) as f64)
                };
                let allowed = delta * t_step * self.tol_rate * beta;
                if err_loc <= allowed {
                    break (f, err_loc, xm);
                }
                rejections += 1;
                if rejections > MAX_REJECTIONS || !err_loc.is_finite() {
                    return Err(Error::NonConvergence {
                        residual: err_loc / beta,
                        reason: format!("Krylov step rejected {rejections} times at t = {t_now:.6e}"),
                    });
                }
                t_step = round2(gamma * t_step * (t_step * self.tol_rate * beta / err_loc).powf(xm));
            };
            let mx = happy.unwrap_or(m + 1);
            w.fill(C_ZERO);
            for i in 0..mx {
                let c = f[(i, 0)] * beta;
                for (wk, vk) in w.iter_mut().zip(&self.v[i]) {
                    *wk += c * vk;
                }
            }
            t_now += t_step;
            self.t_new = if err_loc > 0.0 {
                round2(gamma * t_step * (t_step * self.tol_rate * beta / err_loc).powf(xm))
            } else {
                round2(10.0 * t_step.max(self.t_new))
            };
            // also catches NaN
            if self.t_new.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::NonConvergence { residual: self.tol, reason: "Krylov step size collapsed".into() });
            }
        }
        Ok(())
    }
}

/// Dormand–Prince 5(4) integrator for `dv/dt = A v`.
struct Dopri<'a> {
    a: &'a CscMatrix,
    tol: f64,
    h: f64,
    k: [Vec<C64>; 7],
    y: Vec<C64>,
    steps: usize,
}

const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const DP_E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

impl<'a> Dopri<'a> {
    fn new(a: &'a CscMatrix, tol: f64, _span: f64) -> Self {
        let n = a.ncols();
        let anorm = a.norm1().max(f64::MIN_POSITIVE);
        Self {
            a,
            // local control tighter than the requested global tolerance
            tol: 0.05 * tol,
            h: (0.1 * tol).powf(0.2) / anorm,
            k: std::array::from_fn(|_| vec![C_ZERO; n]),
            y: vec![C_ZERO; n],
            steps: 0,
        }
    }

    fn advance(&mut self, w: &mut [C64], dt: f64) -> Result<()> {
        if dt <= 0.0 {
            return Ok(());
        }
        let mut t = 0.0;
        self.a.matvec_into(w, &mut self.k[0]);
        while t < dt {
            let last = self.h >= dt - t;
            let h = if last { dt - t } else { self.h };
            for s in 0..6 {
                for (i, yi) in self.y.iter_mut().enumerate() {
                    let mut acc = w[i];
                    for (r, coef) in DP_A[s][..=s].iter().enumerate() {
                        if *coef != 0.0 {
                            acc += self.k[r][i] * (h * coef);
                        }
                    }
                    *yi = acc;
                }
                let (done, rest) = self.k.split_at_mut(s + 1);
                let _ = done;
                self.a.matvec_into(&self.y, &mut rest[0]);
            }
            let mut err2 = 0.0;
            for i in 0..w.len() {
                let e: C64 = (0..7).map(|r| self.k[r][i] * DP_E[r]).sum::<C64>() * h;
                err2 += e.norm_sqr();
            }
            let scale = norm(w).max(norm(&self.y)).max(f64::MIN_POSITIVE);
            let err = err2.sqrt() / (self.tol * scale);
            self.steps += 1;
            if self.steps > MAX_ODE_STEPS || !err.is_finite() {
                return Err(Error::NonConvergence {
                    residual: err * self.tol,
                    reason: format!("adaptive integrator exhausted its step budget at t = {t:.6e}"),
                });
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                w.copy_from_slice(&self.y);
                self.k.swap(0, 6);
                t = if last { dt } else { t + h };
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
            } else {
                self.h = h * factor;
                if self.h < 1e-14 * dt {
                    return Err(Error::NonConvergence {
                        residual: err * self.tol,
                        reason: "adaptive step size underflow".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// `R_ij = Tr[(Σ_μ (|j⟩⟨i|)^{(μ)}) ρ]`, which equals `N · Tr ρ · (ρ₁)_ij`.
pub fn one_body_moments(state: &SymState) -> DMatrix<C64> {
    let basis = state.basis();
    let m = basis.levels();
    let n = basis.n();
    let mut r = DMatrix::zeros(m, m);
    let mut occ = vec![0u32; m * m];
    // diagonal moments from purely diagonal indices
    let mut diag = vec![0u32; m];
    diag[0] = n as u32;
    loop {
        occ.fill(0);
        for i in 0..m {
            occ[slot(i, i, m)] = diag[i];
        }
        let c = state.coeffs()[basis.rank_occ(&occ)];
        for i in 0..m {
            r[(i, i)] += c * diag[i] as f64;
        }
        if !crate::basis::next_composition(&mut diag) {
            break;
        }
    }
    // off-diagonal moments from indices with a single off-diagonal unit
    let mut diag = vec![0u32; m];
    diag[0] = n as u32 - 1;
    loop {
        occ.fill(0);
        for i in 0..m {
            occ[slot(i, i, m)] = diag[i];
        }
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    occ[slot(i, j, m)] += 1;
                    r[(i, j)] += state.coeffs()[basis.rank_occ(&occ)];
                    occ[slot(i, j, m)] -= 1;
                }
            }
        }
        if !crate::basis::next_composition(&mut diag) {
            break;
        }
    }
    r
}

fn check_observable(obs: &Operator, state: &SymState) -> Result<()> {
    if obs.dim() != state.basis().levels() {
        return Err(Error::DimensionMismatch(format!(
            "observable on {} levels, state on {}",
            obs.dim(),
            state.basis().levels()
        )));
    }
    Ok(())
}

/// `Tr[(Σ_μ O^{(μ)}) ρ]`.
pub fn collective_expectation(obs: &Operator, state: &SymState) -> Result<C64> {
    check_observable(obs, state)?;
    let r = one_body_moments(state);
    let m = obs.dim();
    Ok((0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| obs[(i, j)] * r[(j, i)]).sum())
}

/// Same value as [`collective_expectation`], computed by applying the
/// bosonized `O^L 𝟙^R` to the whole state and taking the trace.
pub fn collective_expectation_bosonized(obs: &Operator, state: &SymState) -> Result<C64> {
    check_observable(obs, state)?;
    let t = left_right_supermatrix(obs, &Operator::identity(obs.dim()))?;
    Ok(bosonize(&t).apply(state)?.trace())
}

/// One-system reduced density matrix, normalized to unit trace.
pub fn reduced_single_density(state: &SymState) -> Result<Operator> {
    let tr = state.trace();
    if tr.norm() <= 1e-14 {
        return Err(Error::InvalidArgument("state has zero trace".into()));
    }
    let n = state.basis().n() as f64;
    Operator::new(one_body_moments(state) / (tr * n))
}

/// Smallest eigenvalue of the Hermitian part of the reduced density matrix.
pub fn positivity_check(state: &SymState) -> Result<f64> {
    let rho = reduced_single_density(state)?;
    let herm = (rho.matrix() + rho.matrix().adjoint()) * C64::new(0.5, 0.0);
    Ok(herm.symmetric_eigenvalues().min())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{product_state_expand, OccupationIndex, SymBasis};
    use crate::collective::assemble_sym_liouvillian;
    use crate::liouville::lindblad_supermatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn damping(gamma: f64, n: usize) -> SymLiouvillian {
        let l1 = lindblad_supermatrix(&Operator::zeros(2), &[(Operator::dyad(2, 0, 1), gamma)]).unwrap();
        assemble_sym_liouvillian(&l1, SymBasis::shared(2, n).unwrap()).unwrap()
    }

    fn random_density(rng: &mut ChaCha8Rng, m: usize) -> Operator {
        let g = DMatrix::from_fn(m, m, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let p = &g * g.adjoint();
        let tr = p.trace();
        Operator::new(p / tr).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(PropagationSpec::new(vec![], Method::Auto, 1e-10).is_err());
        assert!(PropagationSpec::new(vec![-1.0], Method::Auto, 1e-10).is_err());
        assert!(PropagationSpec::new(vec![1.0, 1.0], Method::Auto, 1e-10).is_err());
        assert!(PropagationSpec::new(vec![1.0], Method::Auto, 0.1).is_err());
        assert!(PropagationSpec::new(vec![0.0, 1.0], Method::Auto, 1e-10).is_ok());
        assert_eq!("krylov".parse::<Method>().unwrap(), Method::KrylovExpmv);
        assert!("rk4".parse::<Method>().is_err());
    }

    #[test]
    fn collective_damping_population() {
        let gamma = 0.7;
        let l = damping(gamma, 3);
        let rho0 = product_state_expand(&Operator::dyad(2, 1, 1), l.basis().clone()).unwrap();
        let excited = Operator::dyad(2, 1, 1);
        for method in [Method::DenseExpm, Method::KrylovExpmv, Method::AdaptiveOde] {
            let spec = PropagationSpec::linspace(0.0, 4.0, 9, method, 1e-10).unwrap();
            let states = propagate(&l, &rho0, &spec).unwrap();
            assert_eq!(states[0].coeffs(), rho0.coeffs());
            for (s, &t) in states.iter().zip(spec.t_grid()) {
                let pop = collective_expectation(&excited, s).unwrap();
                assert!((pop.re - 3.0 * (-gamma * t).exp()).abs() < 1e-8, "{method:?} t={t}");
            }
        }
    }

    #[test]
    fn methods_agree_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = {
            let g = DMatrix::from_fn(3, 3, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            Operator::new(&g + g.adjoint()).unwrap()
        };
        let l1 = lindblad_supermatrix(&h, &[(Operator::dyad(3, 0, 2), 0.8), (Operator::dyad(3, 1, 2), 0.3)]).unwrap();
        let l = assemble_sym_liouvillian(&l1, SymBasis::shared(3, 3).unwrap()).unwrap();
        let rho0 = product_state_expand(&random_density(&mut rng, 3), l.basis().clone()).unwrap();
        let tol = 1e-10;
        let grid = vec![0.5, 1.0, 2.5];
        let reference =
            propagate(&l, &rho0, &PropagationSpec::new(grid.clone(), Method::DenseExpm, tol).unwrap()).unwrap();
        for method in [Method::KrylovExpmv, Method::AdaptiveOde] {
            let got = propagate(&l, &rho0, &PropagationSpec::new(grid.clone(), method, tol).unwrap()).unwrap();
            for (a, b) in got.iter().zip(&reference) {
                assert!(a.distance(b).unwrap() <= tol * b.norm(), "{method:?}");
            }
        }
    }

    #[test]
    fn zero_generator_keeps_state() {
        let basis = SymBasis::shared(2, 2).unwrap();
        let l = SymLiouvillian::from_hops(&crate::collective::HopTermList::empty(2), basis.clone()).unwrap();
        let rho0 = product_state_expand(&Operator::diagonal(&[0.4, 0.6]).unwrap(), basis).unwrap();
        for method in [Method::DenseExpm, Method::KrylovExpmv, Method::AdaptiveOde] {
            let states = propagate(&l, &rho0, &PropagationSpec::new(vec![0.0, 3.0], method, 1e-10).unwrap()).unwrap();
            assert_eq!(states[1].coeffs(), rho0.coeffs());
        }
    }

    #[test]
    fn initial_trace_is_checked() {
        let l = damping(1.0, 2);
        let bad = SymState::zeros(l.basis().clone());
        assert!(propagate(&l, &bad, &PropagationSpec::new(vec![1.0], Method::Auto, 1e-10).unwrap()).is_err());
    }

    #[test]
    fn expectation_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (m, n) in [(2, 1), (2, 3), (3, 2), (3, 3)] {
            let basis = SymBasis::shared(m, n).unwrap();
            let coeffs =
                (0..basis.size()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let x = SymState::from_coeffs(basis, coeffs).unwrap();
            let o = Operator::new(DMatrix::from_fn(m, m, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }))
            .unwrap();
            let fast = collective_expectation(&o, &x).unwrap();
            let slow = collective_expectation_bosonized(&o, &x).unwrap();
            assert!((fast - slow).norm() < 1e-12, "M={m} N={n}");
        }
    }

    #[test]
    fn expectation_examples() {
        let basis = SymBasis::shared(3, 4).unwrap();
        let ground = product_state_expand(&Operator::dyad(3, 0, 0), basis).unwrap();
        assert!((collective_expectation(&Operator::identity(3), &ground).unwrap() - 4.0).norm() < 1e-14);
        assert_eq!(collective_expectation(&Operator::dyad(3, 2, 2), &ground).unwrap(), C_ZERO);

        let basis = SymBasis::shared(2, 2).unwrap();
        let mixed = product_state_expand(&Operator::diagonal(&[0.5, 0.5]).unwrap(), basis).unwrap();
        assert!((collective_expectation(&Operator::dyad(2, 1, 1), &mixed).unwrap() - 1.0).norm() < 1e-14);
    }

    #[test]
    fn reduced_density_of_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..=4 {
            let rho = random_density(&mut rng, 3);
            let s = product_state_expand(&rho, SymBasis::shared(3, n).unwrap()).unwrap();
            let red = reduced_single_density(&s).unwrap();
            assert!((red.matrix() - rho.matrix()).iter().all(|z| z.norm() < 1e-12));
            assert!(positivity_check(&s).unwrap() >= -1e-12);
        }
        let pure = product_state_expand(&Operator::dyad(3, 0, 0), SymBasis::shared(3, 2).unwrap()).unwrap();
        assert!(positivity_check(&pure).unwrap().abs() < 1e-14);
        assert!(reduced_single_density(&SymState::zeros(SymBasis::shared(3, 2).unwrap())).is_err());
    }

    #[test]
    fn single_system_reduced_density_is_the_state() {
        let basis = SymBasis::shared(3, 1).unwrap();
        let idx = OccupationIndex::from_pairs(3, &[((1, 2), 1)]).unwrap();
        let mut s = SymState::basis_vector(basis.clone(), &idx).unwrap();
        s.coeffs_mut()[0] = C64::new(1.0, 0.0);
        let red = reduced_single_density(&s).unwrap();
        assert_eq!(red[(1, 2)], C64::new(1.0, 0.0));
        assert_eq!(red[(0, 0)], C64::new(1.0, 0.0));
    }
}
