//! Transition kernels, mixing times and the single-site escape probe.
//!
//! Kernels use uniformization: with `Λ` the largest exit rate and
//! `U = I + L/Λ`, `p_t = Σ_j Poisson(Λt; j) U^j`. The Poisson weights are
//! generated outward from the mode and truncated once the neglected mass on
//! each side is below `TRUNCATION / 2`.
//!
//! The total-variation statistic is `max_ξ Σ_η |p_t(ξ,η) − μ(η)|`, without
//! the factor ½ of the usual convention; both statistics are compared with
//! the threshold `1/e`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::configspace::Config;
use crate::error::{Result, ZrpError};
use crate::forms::{SparseOperator, ZrpSystem};
use crate::model::ZrpModel;
use crate::simulate::Gillespie;
use crate::Budget;

pub const TRUNCATION: f64 = 1e-12;
/// Relative width of the final bisection bracket.
pub const SEARCH_TOL: f64 = 1e-5;
const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct KernelSnapshot {
    pub time: f64,
    /// Row `ξ` holds `p_t(ξ, ·)`.
    pub matrix: DMatrix<f64>,
}

/// Normalized Poisson(`a`) weights on `[left, left + len)`.
fn poisson_window(a: f64) -> (usize, Vec<f64>) {
    if a <= 0.0 {
        return (0, vec![1.0]);
    }
    let half = TRUNCATION / 2.0;
    let mode = a.floor() as usize;
    let mut right = vec![1.0];
    let mut j = mode;
    loop {
        let w = right.last().copied().unwrap();
        let ratio = a / (j + 1) as f64;
        // geometric bound on everything past j once the ratio is below 1
        if ratio < 1.0 && w * ratio / (1.0 - ratio) <= half {
            break;
        }
        right.push(w * ratio);
        j += 1;
    }
    let mut left = Vec::new();
    let mut w = 1.0;
    let mut j = mode;
    while j > 0 {
        let ratio = j as f64 / a;
        if ratio < 1.0 && w * ratio / (1.0 - ratio) <= half {
            break;
        }
        w *= ratio;
        left.push(w);
        j -= 1;
    }
    let start = mode - left.len();
    left.reverse();
    left.extend(right);
    let total: f64 = left.iter().sum();
    left.iter_mut().for_each(|v| *v /= total);
    (start, left)
}

/// `v ← vᵀ U` for `U = I + L/Λ`.
fn step_uniformized(op: &SparseOperator, lambda: f64, v: &[f64], out: &mut [f64]) {
    out.copy_from_slice(v);
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for &(j, r) in op.row(i) {
            let flow = vi * r / lambda;
            out[j] += flow;
            out[i] -= flow;
        }
    }
}

fn kernel_from_operator(op: &SparseOperator, t: f64) -> KernelSnapshot {
    let n = op.dim();
    let lambda = op.max_exit_rate();
    if t == 0.0 || lambda == 0.0 {
        return KernelSnapshot {
            time: t,
            matrix: DMatrix::identity(n, n),
        };
    }
    let (start, weights) = poisson_window(lambda * t);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|xi| {
            let mut v = vec![0.0; n];
            v[xi] = 1.0;
            let mut next = vec![0.0; n];
            let mut acc = vec![0.0; n];
            for j in 0..start + weights.len() {
                if j >= start {
                    let w = weights[j - start];
                    acc.iter_mut().zip(&v).for_each(|(a, b)| *a += w * b);
                }
                step_uniformized(op, lambda, &v, &mut next);
                std::mem::swap(&mut v, &mut next);
            }
            acc
        })
        .collect();
    KernelSnapshot {
        time: t,
        matrix: DMatrix::from_fn(n, n, |i, j| rows[i][j]),
    }
}

/// `p_t = e^{tL}`.
pub fn transition_kernel(model: &ZrpModel, t: f64) -> Result<KernelSnapshot> {
    transition_kernel_within(model, t, &Budget::default())
}

pub fn transition_kernel_within(model: &ZrpModel, t: f64, budget: &Budget) -> Result<KernelSnapshot> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(ZrpError::Domain(format!("time must be finite and >= 0, got {t}")));
    }
    let sys = kernel_system(model, budget)?;
    Ok(kernel_from_operator(&sys.generator(), t))
}

fn kernel_system(model: &ZrpModel, budget: &Budget) -> Result<ZrpSystem> {
    let cap = budget.kernel_states.min(budget.exact_states);
    model.space_within(cap)?;
    ZrpSystem::within(model, budget)
}

/// `max_ξ Σ_η |p(ξ,η) − μ(η)|`.
pub fn tv_statistic(kernel: &KernelSnapshot, mu: &[f64]) -> f64 {
    kernel
        .matrix
        .row_iter()
        .map(|row| row.iter().zip(mu).map(|(p, m)| (p - m).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `max_{ξ,η} |p(ξ,η)/μ(η) − 1|`.
pub fn linf_statistic(kernel: &KernelSnapshot, mu: &[f64]) -> f64 {
    kernel
        .matrix
        .row_iter()
        .map(|row| {
            row.iter()
                .zip(mu)
                .map(|(p, m)| (p / m - 1.0).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distance {
    TotalVariation,
    Linf,
}

/// First time the chosen statistic reaches `1/e`, by doubling then bisection.
pub fn mixing_time(model: &ZrpModel, distance: Distance, budget: &Budget) -> Result<f64> {
    let sys = kernel_system(model, budget)?;
    if sys.len() == 1 {
        return Ok(0.0);
    }
    let op = sys.generator();
    let mu = sys.probabilities().to_vec();
    let stat = |t: f64| {
        let k = kernel_from_operator(&op, t);
        match distance {
            Distance::TotalVariation => tv_statistic(&k, &mu),
            Distance::Linf => linf_statistic(&k, &mu),
        }
    };
    search_threshold(stat, 1.0 / op.max_exit_rate())
}

fn search_threshold(stat: impl Fn(f64) -> f64, initial: f64) -> Result<f64> {
    let threshold = (-1.0f64).exp();
    let mut grid: Vec<(f64, f64)> = Vec::new();
    let mut eval = |t: f64| {
        let d = stat(t);
        grid.push((t, d));
        d
    };
    if eval(0.0) <= threshold {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = initial;
    let mut doublings = 0;
    while eval(hi) > threshold {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(ZrpError::NoConvergence("distance never reached 1/e".into()));
        }
    }
    while hi - lo > SEARCH_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if eval(mid) > threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in grid.windows(2) {
        let ((t0, d0), (t1, d1)) = (w[0], w[1]);
        if d1 > d0 + MONOTONE_SLACK {
            return Err(ZrpError::NonMonotone {
                t_early: t0,
                d_early: d0,
                t_late: t1,
                d_late: d1,
            });
        }
    }
    Ok(hi)
}

pub fn mixing_time_tv(model: &ZrpModel) -> Result<f64> {
    mixing_time(model, Distance::TotalVariation, &Budget::default())
}

pub fn mixing_time_linf(model: &ZrpModel) -> Result<f64> {
    mixing_time(model, Distance::Linf, &Budget::default())
}

/// `(2/λ) log(e / μ_min)`.
pub fn linf_upper_bound(lambda: f64, mu_min: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(ZrpError::Domain(format!("λ must be positive, got {lambda}")));
    }
    if !(mu_min > 0.0 && mu_min <= 1.0) {
        return Err(ZrpError::Domain(format!("μ_min must lie in (0, 1], got {mu_min}")));
    }
    Ok(2.0 / lambda * (1.0 - mu_min.ln()))
}

#[derive(Clone, Debug, Serialize)]
pub struct EscapeEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replicas: u64,
    pub departures: usize,
}

/// Expected time until `⌈m/2⌉` particles have left `site`, starting from
/// all `m` particles there, estimated over independent replicas.
pub fn single_site_escape_time(
    model: &ZrpModel,
    site: usize,
    replicas: u64,
    seed: u64,
) -> Result<EscapeEstimate> {
    let n = model.sites();
    if site >= n {
        return Err(ZrpError::Domain(format!("site {site} out of range for {n} sites")));
    }
    if replicas < 2 {
        return Err(ZrpError::Domain("need at least two replicas".into()));
    }
    let m = model.particles();
    let needed = m.div_ceil(2);
    let start = Config::concentrated(n, site, m);
    let times = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut g = Gillespie::new(model, &start, seed, r)?;
            let mut count = 0;
            loop {
                let e = g.step().ok_or_else(|| {
                    ZrpError::Domain("no particle can move".into())
                })?;
                if e.source == site && e.target != site {
                    count += 1;
                    if count == needed {
                        return Ok(e.time);
                    }
                }
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let k = times.len() as f64;
    let mean = times.iter().sum::<f64>() / k;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(EscapeEstimate {
        mean,
        std_error: (var / k).sqrt(),
        replicas,
        departures: needed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mean_field, JumpMatrix, RateSpec};

    fn swap() -> JumpMatrix {
        JumpMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn poisson_weights() {
        for a in [0.3, 1.0, 7.5, 120.0, 2500.0] {
            let (start, w) = poisson_window(a);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let mean: f64 = w.iter().enumerate().map(|(i, p)| (start + i) as f64 * p).sum();
            assert!((mean - a).abs() < 1e-8 * a.max(1.0), "a={a} mean={mean}");
        }
        // matches e^{-a} a^j / j! for small a
        let (start, w) = poisson_window(2.0);
        assert_eq!(start, 0);
        assert!((w[0] - (-2.0f64).exp()).abs() < 1e-13);
        assert!((w[3] - (-2.0f64).exp() * 8.0 / 6.0).abs() < 1e-13);
    }

    #[test]
    fn kernel_examples() {
        let m = ZrpModel::new(swap(), RateSpec::Unit, 1).unwrap();
        let k = transition_kernel(&m, 0.0).unwrap();
        assert_eq!(k.matrix, DMatrix::identity(2, 2));
        for t in [0.1, 0.7, 3.0] {
            let k = transition_kernel(&m, t).unwrap();
            let exact = 0.5 + 0.5 * (-2.0 * t).exp();
            assert!((k.matrix[(0, 0)] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn two_state_mixing_times() {
        let m = ZrpModel::new(swap(), RateSpec::Unit, 1).unwrap();
        let tv = mixing_time_tv(&m).unwrap();
        assert!((tv - 0.5).abs() <= 1e-3 * 0.5, "{tv}");
        let linf = mixing_time_linf(&m).unwrap();
        assert!((linf - 0.5).abs() <= 1e-3 * 0.5, "{linf}");
        let fast = m.with_rates(RateSpec::Unit.scaled(2.0)).unwrap();
        let tv2 = mixing_time_tv(&fast).unwrap();
        assert!((tv2 - tv / 2.0).abs() <= 1e-3 * tv2);
    }

    #[test]
    fn single_state_mixes_instantly() {
        let p = JumpMatrix::from_rows(&[vec![1.0]]).unwrap();
        let m = ZrpModel::new(p, RateSpec::Unit, 3).unwrap();
        assert_eq!(mixing_time_tv(&m).unwrap(), 0.0);
        assert_eq!(mixing_time_linf(&m).unwrap(), 0.0);
    }

    #[test]
    fn upper_bound_arithmetic() {
        assert!((linf_upper_bound(1.0, 1.0 / 3.0).unwrap() - 2.0 * (1.0 + 3f64.ln())).abs() < 1e-14);
        assert!((linf_upper_bound(2.0, 0.5).unwrap() - (1.0 + 2f64.ln())).abs() < 1e-14);
        assert!(linf_upper_bound(0.0, 0.5).is_err());
        assert!(linf_upper_bound(1.0, 1.5).is_err());
        assert!(linf_upper_bound(1.0, 0.0).is_err());
    }

    #[test]
    fn kernel_budget() {
        let m = ZrpModel::new(JumpMatrix::cycle(6).unwrap(), RateSpec::Unit, 6).unwrap();
        let b = Budget {
            kernel_states: 100,
            ..Budget::default()
        };
        assert!(matches!(
            transition_kernel_within(&m, 1.0, &b),
            Err(ZrpError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn escape_time_single_particle() {
        let m = ZrpModel::new(swap(), RateSpec::Unit, 1).unwrap();
        let e = single_site_escape_time(&m, 0, 4000, 5).unwrap();
        assert_eq!(e.departures, 1);
        assert!((e.mean - 1.0).abs() < 3.0 * e.std_error + 1e-3, "{e:?}");
    }

    #[test]
    fn escape_time_four_particles() {
        let k = mean_field(&[0.25; 4]).unwrap();
        let m = ZrpModel::new(k, RateSpec::Unit, 4).unwrap();
        let e = single_site_escape_time(&m, 0, 4000, 8).unwrap();
        // two waits of Exp(3/4): mean 8/3 >= 2
        assert!(e.mean >= 2.0 - 3.0 * e.std_error);
        assert!((e.mean - 8.0 / 3.0).abs() < 3.0 * e.std_error, "{e:?}");
    }
}
