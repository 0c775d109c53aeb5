//! Poincaré constants and comparison constants.
//!
//! Every quadratic form here only sees the symmetric part of its generator,
//! so each is represented by the symmetric matrix `D^{-1/2} A D^{-1/2}` where
//! `D` is the diagonal of the reference law and `A` the additive
//! symmetrization of `D (I − P)` (resp. `−D L`). In those coordinates the
//! constants are the vector `√π` (resp. `√μ`), which a Householder reflector
//! maps onto the first basis vector and removes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, ZrpError};
use crate::forms::{self, SparseOperator, ZrpSystem};
use crate::model::{JumpMatrix, RateSpec, ZrpModel, STATIONARY_TOL};
use crate::Budget;

pub const ILL_CONDITIONED: f64 = 1e12;
pub const ITERATIVE_TOL: f64 = 1e-9;
const LANCZOS_SEED: u64 = 0x5eed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dense,
    Iterative,
}

/// Minimum of a form ratio together with the function attaining it.
#[derive(Clone, Debug, Serialize)]
pub struct GapResult {
    pub value: f64,
    pub method: Method,
    pub residual: f64,
    pub minimizer: Vec<f64>,
}

/// Symmetric form `I − (D^{1/2} P D^{-1/2} + transpose)/2` of `E_P` in √π-coordinates.
fn jump_form(p: &JumpMatrix) -> DMatrix<f64> {
    let n = p.sites();
    let sq: Vec<f64> = p.stationary().iter().map(|v| v.sqrt()).collect();
    DMatrix::from_fn(n, n, |x, y| {
        let off = 0.5 * (sq[x] * p.get(x, y) / sq[y] + sq[y] * p.get(y, x) / sq[x]);
        if x == y {
            1.0 - off
        } else {
            -off
        }
    })
}

/// Symmetric form of `E_zrp` in √μ-coordinates.
fn zrp_form(op: &SparseOperator, probs: &[f64]) -> DMatrix<f64> {
    let n = op.dim();
    let sq: Vec<f64> = probs.iter().map(|v| v.sqrt()).collect();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut exit = 0.0;
        for &(j, r) in op.row(i) {
            exit += r;
            // μ_i L_ij / √(μ_i μ_j), split evenly over (i,j) and (j,i)
            let v = 0.5 * r * sq[i] / sq[j];
            a[(i, j)] -= v;
            a[(j, i)] -= v;
        }
        a[(i, i)] += exit;
    }
    a
}

/// Householder reflector `R = I − β w wᵀ` with `R s = ±e_0` for unit `s`.
struct Deflation {
    w: DVector<f64>,
    beta: f64,
}

impl Deflation {
    fn new(s: &[f64]) -> Self {
        let mut w = DVector::from_column_slice(s);
        let norm = w.norm();
        w /= norm;
        // w = s + sign(s_0) e_0 avoids cancellation
        let sign = if w[0] >= 0.0 { 1.0 } else { -1.0 };
        w[0] += sign;
        let beta = 2.0 / w.norm_squared();
        Deflation { w, beta }
    }

    fn reflect(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.w * (self.beta * self.w.dot(v))
    }

    /// `R A R` with the first row and column dropped.
    fn restrict(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let u = a * &self.w;
        let wu = self.w.dot(&u);
        let b = self.beta;
        let full = DMatrix::from_fn(n, n, |i, j| {
            a[(i, j)] - b * self.w[i] * u[j] - b * u[i] * self.w[j]
                + b * b * wu * self.w[i] * self.w[j]
        });
        let mut sym = full.view((1, 1), (n - 1, n - 1)).into_owned();
        sym = (&sym + sym.transpose()) * 0.5;
        sym
    }

    /// Embeds a complement vector back into full coordinates.
    fn expand(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(y.len() + 1);
        z.rows_mut(1, y.len()).copy_from(y);
        self.reflect(&z)
    }
}

fn argmin(values: &DVector<f64>) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap()
}

/// Minimum eigenpair of a symmetric form on the complement of `s`.
fn min_on_complement(a: &DMatrix<f64>, s: &[f64]) -> (f64, DVector<f64>, f64) {
    let defl = Deflation::new(s);
    let b = defl.restrict(a);
    let eig = SymmetricEigen::new(b.clone());
    let k = argmin(&eig.eigenvalues);
    let value = eig.eigenvalues[k];
    let y = eig.eigenvectors.column(k).into_owned();
    let residual = (&b * &y - &y * value).norm();
    (value, defl.expand(&y), residual)
}

/// Minimum generalized eigenpair of `(a, b)` on the complement of `s`.
fn generalized_min_on_complement(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &[f64],
) -> Result<(f64, DVector<f64>, f64)> {
    let defl = Deflation::new(s);
    let ar = defl.restrict(a);
    let br = defl.restrict(b);
    let eb = SymmetricEigen::new(br);
    let max = eb.eigenvalues.max();
    let min = eb.eigenvalues.min();
    if !(min > 0.0) || max / min > ILL_CONDITIONED {
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(ZrpError::IllConditioned { condition });
    }
    // B = V Λ Vᵀ, W = V Λ^{-1/2}
    let mut w = eb.eigenvectors.clone();
    for (j, lam) in eb.eigenvalues.iter().enumerate() {
        w.column_mut(j).scale_mut(1.0 / lam.sqrt());
    }
    let mut c = w.transpose() * &ar * &w;
    c = (&c + c.transpose()) * 0.5;
    let ec = SymmetricEigen::new(c.clone());
    let k = argmin(&ec.eigenvalues);
    let value = ec.eigenvalues[k];
    let y = ec.eigenvectors.column(k).into_owned();
    let residual = (&c * &y - &y * value).norm();
    Ok((value, defl.expand(&(w * y)), residual))
}

fn unweight(z: &DVector<f64>, weights: &[f64]) -> Vec<f64> {
    z.iter().zip(weights).map(|(v, w)| v / w.sqrt()).collect()
}

fn sqrt_weights(w: &[f64]) -> Vec<f64> {
    w.iter().map(|v| v.sqrt()).collect()
}

/// λ(P): minimum of `E_P(φ,φ) / Var_π(φ)`.
pub fn poincare_jump(p: &JumpMatrix) -> Result<GapResult> {
    if p.sites() < 2 {
        return Err(ZrpError::Domain("λ(P) needs at least two sites".into()));
    }
    let pi = p.stationary();
    let (value, z, residual) = min_on_complement(&jump_form(p), &sqrt_weights(pi));
    Ok(GapResult {
        value,
        method: Method::Dense,
        residual,
        minimizer: unweight(&z, pi),
    })
}

/// λ(zrp(P, r, m)): minimum of `E_zrp(f,f) / Var_μ(f)`.
pub fn poincare_zrp(model: &ZrpModel) -> Result<GapResult> {
    poincare_zrp_within(model, &Budget::default())
}

pub fn poincare_zrp_within(model: &ZrpModel, budget: &Budget) -> Result<GapResult> {
    let sys = ZrpSystem::within(model, budget)?;
    poincare_system(&sys, budget)
}

pub fn poincare_system(sys: &ZrpSystem, budget: &Budget) -> Result<GapResult> {
    if sys.len() < 2 {
        return Err(ZrpError::Domain(
            "Poincaré constant needs at least two states".into(),
        ));
    }
    let op = sys.generator();
    let probs = sys.probabilities();
    if sys.len() <= budget.dense_states {
        let (value, z, residual) = min_on_complement(&zrp_form(&op, probs), &sqrt_weights(probs));
        Ok(GapResult {
            value,
            method: Method::Dense,
            residual,
            minimizer: unweight(&z, probs),
        })
    } else {
        let (value, z, residual) = lanczos_min(&op, probs)?;
        Ok(GapResult {
            value,
            method: Method::Iterative,
            residual,
            minimizer: unweight(&z, probs),
        })
    }
}

/// All eigenvalues of the symmetrized `−L`, ascending (the first is 0).
pub fn spectrum_zrp(model: &ZrpModel, budget: &Budget) -> Result<Vec<f64>> {
    let sys = ZrpSystem::within(model, budget)?;
    if sys.len() > budget.dense_states {
        return Err(ZrpError::BudgetExceeded {
            states: sys.len() as u64,
            cap: budget.dense_states as u64,
        });
    }
    let a = zrp_form(&sys.generator(), sys.probabilities());
    let mut ev: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// `x ↦ (Ax)` for the √μ-weighted symmetric form, applied matrix-free.
struct WeightedForm<'a> {
    op: &'a SparseOperator,
    probs: &'a [f64],
    sq: Vec<f64>,
}

impl WeightedForm<'_> {
    fn apply(&self, g: &DVector<f64>) -> DVector<f64> {
        let n = g.len();
        let h: Vec<f64> = (0..n).map(|i| g[i] / self.sq[i]).collect();
        let lh = self.op.apply(&h);
        let mh: Vec<f64> = (0..n).map(|i| self.probs[i] * h[i]).collect();
        let ltmh = self.op.apply_transpose(&mh);
        DVector::from_fn(n, |i, _| {
            -0.5 * (self.probs[i] * lh[i] + ltmh[i]) / self.sq[i]
        })
    }
}

fn project_out(v: &mut DVector<f64>, s: &DVector<f64>) {
    let c = s.dot(v);
    v.axpy(-c, s, 1.0);
}

/// Smallest eigenpair of the weighted form orthogonal to `√μ`, by restarted
/// Lanczos with full reorthogonalization.
fn lanczos_min(op: &SparseOperator, probs: &[f64]) -> Result<(f64, DVector<f64>, f64)> {
    let n = op.dim();
    let form = WeightedForm {
        op,
        probs,
        sq: sqrt_weights(probs),
    };
    let mut s = DVector::from_column_slice(&form.sq);
    s /= s.norm();
    let mut rng = ChaCha8Rng::seed_from_u64(LANCZOS_SEED);
    let mut start = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    let krylov = (n - 1).min(240);
    for _restart in 0..60 {
        project_out(&mut start, &s);
        start /= start.norm();
        let mut basis: Vec<DVector<f64>> = vec![start.clone()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for j in 0..krylov {
            let mut w = form.apply(&basis[j]);
            project_out(&mut w, &s);
            let a = basis[j].dot(&w);
            alpha.push(a);
            // full reorthogonalization, twice
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&w);
                    w.axpy(-c, q, 1.0);
                }
                project_out(&mut w, &s);
            }
            let b = w.norm();
            if j + 1 == krylov || b < 1e-13 {
                break;
            }
            beta.push(b);
            basis.push(w / b);
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let et = SymmetricEigen::new(t);
        let idx = argmin(&et.eigenvalues);
        let y = et.eigenvectors.column(idx);
        let mut v = DVector::zeros(n);
        for (q, c) in basis.iter().zip(y.iter()) {
            v.axpy(*c, q, 1.0);
        }
        project_out(&mut v, &s);
        v /= v.norm();
        let av = form.apply(&v);
        let rq = v.dot(&av);
        let mut r = av - &v * rq;
        project_out(&mut r, &s);
        let residual = r.norm();
        if residual <= ITERATIVE_TOL * rq.abs().max(1e-300) || k < krylov && residual < 1e-12 {
            return Ok((rq, v, residual));
        }
        start = v;
    }
    Err(ZrpError::NoConvergence(format!(
        "Lanczos did not reach relative residual {ITERATIVE_TOL:e} on {n} states"
    )))
}

fn check_same_law(p: &JumpMatrix, q: &JumpMatrix) -> Result<()> {
    if p.sites() != q.sites() {
        return Err(ZrpError::DimensionMismatch {
            expected: p.sites(),
            got: q.sites(),
        });
    }
    let deviation = p
        .stationary()
        .iter()
        .zip(q.stationary())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if deviation > STATIONARY_TOL {
        return Err(ZrpError::MismatchedStationaryLaw { deviation });
    }
    Ok(())
}

/// `min_φ E_P(φ,φ) / E_Q(φ,φ)` over non-constant φ.
pub fn comparison_constant_jump(p: &JumpMatrix, q: &JumpMatrix) -> Result<GapResult> {
    check_same_law(p, q)?;
    if p.sites() < 2 {
        return Err(ZrpError::Domain("comparison needs at least two sites".into()));
    }
    let pi = p.stationary();
    let (value, z, residual) =
        generalized_min_on_complement(&jump_form(p), &jump_form(q), &sqrt_weights(pi))?;
    Ok(GapResult {
        value,
        method: Method::Dense,
        residual,
        minimizer: unweight(&z, pi),
    })
}

/// `min_f E_zrp(P,r,m)(f,f) / E_zrp(Q,r,m)(f,f)` over non-constant f on Ω.
pub fn comparison_constant_zrp(
    p: &JumpMatrix,
    q: &JumpMatrix,
    rates: &RateSpec,
    m: usize,
) -> Result<GapResult> {
    comparison_constant_zrp_within(p, q, rates, m, &Budget::default())
}

pub fn comparison_constant_zrp_within(
    p: &JumpMatrix,
    q: &JumpMatrix,
    rates: &RateSpec,
    m: usize,
    budget: &Budget,
) -> Result<GapResult> {
    check_same_law(p, q)?;
    let mp = ZrpModel::new(p.clone(), rates.clone(), m)?;
    let mq = ZrpModel::new(q.clone(), rates.clone(), m)?;
    let sys_p = ZrpSystem::within(&mp, budget)?;
    if sys_p.len() > budget.dense_states {
        return Err(ZrpError::BudgetExceeded {
            states: sys_p.len() as u64,
            cap: budget.dense_states as u64,
        });
    }
    if sys_p.len() < 2 {
        return Err(ZrpError::Domain("comparison needs at least two states".into()));
    }
    // same π and rates, hence the same μ on the same Ω
    let probs = sys_p.probabilities();
    let op_q = ZrpSystem::within(&mq, budget)?.generator();
    let (value, z, residual) = generalized_min_on_complement(
        &zrp_form(&sys_p.generator(), probs),
        &zrp_form(&op_q, probs),
        &sqrt_weights(probs),
    )?;
    Ok(GapResult {
        value,
        method: Method::Dense,
        residual,
        minimizer: unweight(&z, probs),
    })
}

/// Both sides of the particle/single-site comparison identity, plus the
/// form ratio of the lifted single-site minimizer.
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub witness_ratio: f64,
    pub pass: bool,
}

pub fn verify_comparison_identity(
    p: &JumpMatrix,
    q: &JumpMatrix,
    rates: &RateSpec,
    m: usize,
    tol: f64,
) -> Result<ComparisonReport> {
    let lhs = comparison_constant_zrp(p, q, rates, m)?.value;
    let jump = comparison_constant_jump(p, q)?;
    let rhs = jump.value;
    let sys_p = ZrpSystem::new(&ZrpModel::new(p.clone(), rates.clone(), m)?)?;
    let sys_q = ZrpSystem::new(&ZrpModel::new(q.clone(), rates.clone(), m)?)?;
    let f = forms::lift(&jump.minimizer, p.sites(), m)?;
    let witness_ratio = sys_p.dirichlet(&f, &f)? / sys_q.dirichlet(&f, &f)?;
    let gap = (lhs - rhs).abs();
    let scale = rhs.abs().max(1.0);
    let pass = gap <= tol * scale && (witness_ratio - rhs).abs() <= tol * scale;
    Ok(ComparisonReport {
        lhs,
        rhs,
        gap,
        witness_ratio,
        pass,
    })
}
