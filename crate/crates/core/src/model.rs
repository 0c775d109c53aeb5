//! Geometry, kinetics and the product-form stationary measure.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::configspace::{ConfigIndex, ConfigSpace};
use crate::error::{Result, ZrpError};
use crate::Budget;

pub const ROW_SUM_TOL: f64 = 1e-12;
pub const STATIONARY_TOL: f64 = 1e-10;
pub const REVERSIBILITY_TOL: f64 = 1e-12;

/// Above this size π is found by power iteration instead of a dense solve.
const DENSE_SOLVE_LIMIT: usize = 2000;

/// Irreducible row-stochastic matrix with its stationary law.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpMatrix {
    entries: DMatrix<f64>,
    stationary: Vec<f64>,
    doubly_stochastic: bool,
}

impl JumpMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_rows_with(rows, false)
    }

    /// Like [`JumpMatrix::from_rows`], optionally rescaling each row to sum to one first.
    pub fn from_rows_with(rows: &[Vec<f64>], renormalize: bool) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(ZrpError::NotStochastic("empty matrix".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(ZrpError::NotStochastic(format!(
                    "row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
        }
        let mut m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        if renormalize {
            for i in 0..n {
                let s: f64 = m.row(i).sum();
                if s > 0.0 && s.is_finite() {
                    m.row_mut(i).scale_mut(1.0 / s);
                }
            }
        }
        Self::validate(m)
    }

    /// Checks stochasticity and irreducibility, then solves for π.
    pub fn validate(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(ZrpError::NotStochastic(format!(
                "matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                let v = entries[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(ZrpError::NotStochastic(format!(
                        "entry ({i},{j}) = {v} is negative or not finite"
                    )));
                }
                s += v;
            }
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(ZrpError::NotStochastic(format!("row {i} sums to {s}")));
            }
        }
        let components = strongly_connected_components(&entries);
        if components > 1 {
            return Err(ZrpError::NotIrreducible { components });
        }
        let stationary = solve_stationary(&entries)?;
        let doubly_stochastic = (0..n).all(|j| (entries.column(j).sum() - 1.0).abs() <= ROW_SUM_TOL);
        Ok(JumpMatrix {
            entries,
            stationary,
            doubly_stochastic,
        })
    }

    /// Simple random walk on an undirected graph given by its edge list.
    pub fn simple_random_walk(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![vec![false; n]; n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(ZrpError::NotStochastic(format!(
                    "edge ({a},{b}) out of range for {n} sites"
                )));
            }
            adj[a][b] = true;
            adj[b][a] = true;
        }
        let mut m = DMatrix::zeros(n, n);
        for x in 0..n {
            let deg = adj[x].iter().filter(|&&e| e).count();
            if deg == 0 {
                return Err(ZrpError::NotIrreducible { components: n.max(2) });
            }
            for y in 0..n {
                if adj[x][y] {
                    m[(x, y)] = 1.0 / deg as f64;
                }
            }
        }
        Self::validate(m)
    }

    /// Simple random walk on the cycle `Z/nZ`.
    pub fn cycle(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).map(|x| (x, (x + 1) % n)).collect();
        Self::simple_random_walk(n, &edges)
    }

    pub fn sites(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[(x, y)]
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        self.doubly_stochastic
    }

    /// Off-diagonal positive entries, row-major.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let n = self.sites();
        let mut out = Vec::new();
        for x in 0..n {
            for y in 0..n {
                if x != y && self.entries[(x, y)] > 0.0 {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        let n = self.sites();
        (0..n)
            .map(|i| (0..n).map(|j| self.entries[(i, j)]).collect())
            .collect()
    }

    pub fn is_reversible(&self) -> bool {
        check_reversibility(self)
    }
}

/// Tarjan's algorithm on the positive-entry support; returns the number of components.
fn strongly_connected_components(m: &DMatrix<f64>) -> usize {
    let n = m.nrows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|x| (0..n).filter(|&y| m[(x, y)] > 0.0).collect())
        .collect();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut components = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (vertex, next child position)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    components += 1;
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        if w == v {
                            break;
                        }
                    }
                }
            }
        }
    }
    components
}

fn solve_stationary(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    let mut pi = if n <= DENSE_SOLVE_LIMIT {
        // (I - P^T) π = 0 with the last balance equation replaced by Σπ = 1
        let mut a = DMatrix::<f64>::identity(n, n) - p.transpose();
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        a.lu()
            .solve(&b)
            .ok_or(ZrpError::NotIrreducible { components: 2 })?
            .iter()
            .copied()
            .collect::<Vec<_>>()
    } else {
        power_stationary(p)
    };
    for v in pi.iter_mut() {
        if *v < 0.0 && *v > -1e-14 {
            *v = 0.0;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    if pi.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(ZrpError::NotIrreducible { components: 2 });
    }
    let row = DVector::from_column_slice(&pi).transpose() * p;
    let dev = row
        .iter()
        .zip(&pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if dev > STATIONARY_TOL {
        return Err(ZrpError::NotStochastic(format!(
            "stationary solve residual {dev:e} above tolerance"
        )));
    }
    Ok(pi)
}

fn power_stationary(p: &DMatrix<f64>) -> Vec<f64> {
    let n = p.nrows();
    let pt = p.transpose();
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    // lazy chain (I + P)/2 avoids periodicity
    for _ in 0..1_000_000 {
        let next = (&pi + &pt * &pi) * 0.5;
        let diff = (&next - &pi).amax();
        pi = next;
        if diff < 1e-15 {
            break;
        }
    }
    pi.iter().copied().collect()
}

/// The rank-one matrix whose rows all equal `pi`.
pub fn mean_field(pi: &[f64]) -> Result<JumpMatrix> {
    validate_distribution(pi)?;
    let n = pi.len();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| pi.to_vec()).collect();
    let mut jm = JumpMatrix::from_rows(&rows)?;
    // exact, rather than the solved approximation
    jm.stationary = pi.to_vec();
    Ok(jm)
}

pub fn validate_distribution(pi: &[f64]) -> Result<()> {
    if pi.is_empty() {
        return Err(ZrpError::InvalidDistribution("empty".into()));
    }
    if pi.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(ZrpError::InvalidDistribution(
            "entries must be positive and finite".into(),
        ));
    }
    let s: f64 = pi.iter().sum();
    if (s - 1.0).abs() > ROW_SUM_TOL {
        return Err(ZrpError::InvalidDistribution(format!("sums to {s}")));
    }
    Ok(())
}

/// `π(x)P(x,y) = π(y)P(y,x)` for every pair.
pub fn check_reversibility(p: &JumpMatrix) -> bool {
    let n = p.sites();
    let pi = p.stationary();
    (0..n).all(|x| {
        (x + 1..n).all(|y| (pi[x] * p.get(x, y) - pi[y] * p.get(y, x)).abs() <= REVERSIBILITY_TOL)
    })
}

/// Exit rates `r(x, k)`. Table variants hold values for `k = 1..=K` and
/// repeat the last value beyond `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateSpec {
    Unit,
    Linear,
    Table { values: Vec<f64> },
    SiteTable { tables: Vec<Vec<f64>> },
    Affine { a: f64, b: f64 },
}

impl RateSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        let check_table = |t: &[f64]| -> Result<()> {
            if t.is_empty() {
                return Err(ZrpError::InvalidRates("empty rate table".into()));
            }
            if t.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(ZrpError::InvalidRates(
                    "table rates must be positive and finite".into(),
                ));
            }
            Ok(())
        };
        match self {
            RateSpec::Unit | RateSpec::Linear => Ok(()),
            RateSpec::Table { values } => check_table(values),
            RateSpec::SiteTable { tables } => {
                if tables.len() != n {
                    return Err(ZrpError::InvalidRates(format!(
                        "expected {n} site tables, got {}",
                        tables.len()
                    )));
                }
                tables.iter().try_for_each(|t| check_table(t))
            }
            RateSpec::Affine { a, b } => {
                if !a.is_finite() || !b.is_finite() || *a < 0.0 || a + b <= 0.0 {
                    Err(ZrpError::InvalidRates(format!(
                        "affine rate {a}k + {b} must be positive for all k >= 1"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    #[inline]
    pub fn rate(&self, x: usize, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            RateSpec::Unit => 1.0,
            RateSpec::Linear => k as f64,
            RateSpec::Table { values } => values[k.min(values.len()) - 1],
            RateSpec::SiteTable { tables } => {
                let t = &tables[x];
                t[k.min(t.len()) - 1]
            }
            RateSpec::Affine { a, b } => a * k as f64 + b,
        }
    }

    /// Same site for every x (site tables qualify when all tables agree).
    pub fn is_homogeneous(&self) -> bool {
        match self {
            RateSpec::SiteTable { tables } => {
                let first = &tables[0];
                tables.iter().all(|t| {
                    let len = t.len().max(first.len());
                    (1..=len).all(|k| t[k.min(t.len()) - 1] == first[k.min(first.len()) - 1])
                })
            }
            _ => true,
        }
    }

    /// Largest table length, i.e. the point past which table rates are constant.
    pub fn table_horizon(&self) -> Option<usize> {
        match self {
            RateSpec::Table { values } => Some(values.len()),
            RateSpec::SiteTable { tables } => tables.iter().map(Vec::len).max(),
            _ => None,
        }
    }

    /// Every rate multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> RateSpec {
        match self {
            RateSpec::Unit => RateSpec::Table { values: vec![c] },
            RateSpec::Linear => RateSpec::Affine { a: c, b: 0.0 },
            RateSpec::Table { values } => RateSpec::Table {
                values: values.iter().map(|v| v * c).collect(),
            },
            RateSpec::SiteTable { tables } => RateSpec::SiteTable {
                tables: tables
                    .iter()
                    .map(|t| t.iter().map(|v| v * c).collect())
                    .collect(),
            },
            RateSpec::Affine { a, b } => RateSpec::Affine { a: a * c, b: b * c },
        }
    }
}

/// `zrp(P, r, m)`.
#[derive(Clone, Debug)]
pub struct ZrpModel {
    geometry: JumpMatrix,
    rates: RateSpec,
    particles: usize,
}

impl ZrpModel {
    pub fn new(geometry: JumpMatrix, rates: RateSpec, particles: usize) -> Result<Self> {
        if particles == 0 {
            return Err(ZrpError::InvalidConfig("need at least one particle".into()));
        }
        rates.validate(geometry.sites())?;
        Ok(ZrpModel {
            geometry,
            rates,
            particles,
        })
    }

    pub fn geometry(&self) -> &JumpMatrix {
        &self.geometry
    }

    pub fn rates(&self) -> &RateSpec {
        &self.rates
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn sites(&self) -> usize {
        self.geometry.sites()
    }

    #[inline]
    pub fn rate(&self, x: usize, k: usize) -> f64 {
        self.rates.rate(x, k)
    }

    /// Ω.
    pub fn space(&self) -> Result<ConfigSpace> {
        ConfigSpace::new(self.sites(), self.particles)
    }

    /// Ω̂, one particle removed.
    pub fn reduced_space(&self) -> Result<ConfigSpace> {
        ConfigSpace::new(self.sites(), self.particles - 1)
    }

    /// Ω, refusing spaces above `cap` states.
    pub fn space_within(&self, cap: usize) -> Result<ConfigSpace> {
        let space = self.space()?;
        if space.len() > cap {
            return Err(ZrpError::BudgetExceeded {
                states: space.len() as u64,
                cap: cap as u64,
            });
        }
        Ok(space)
    }

    /// Same geometry swapped for `geometry`; rates and particle number kept.
    pub fn with_geometry(&self, geometry: JumpMatrix) -> Result<Self> {
        ZrpModel::new(geometry, self.rates.clone(), self.particles)
    }

    pub fn with_rates(&self, rates: RateSpec) -> Result<Self> {
        ZrpModel::new(self.geometry.clone(), rates, self.particles)
    }

    /// The mean-field model with the same π, rates and particle number.
    pub fn mean_field(&self) -> Result<Self> {
        self.with_geometry(mean_field(self.geometry.stationary())?)
    }

    /// Unnormalized log weight `Σ_x Σ_{k ≤ η(x)} (log π(x) − log r(x,k))`.
    pub fn log_weight(&self, occ: &[usize]) -> f64 {
        let pi = self.geometry.stationary();
        let mut w = 0.0;
        for (x, &eta) in occ.iter().enumerate() {
            let lp = pi[x].ln();
            for k in 1..=eta {
                w += lp - self.rate(x, k).ln();
            }
        }
        w
    }

    /// Total exit rate `Σ_x r(x, η(x))`.
    pub fn exit_rate(&self, occ: &[usize]) -> f64 {
        occ.iter().enumerate().map(|(x, &k)| self.rate(x, k)).sum()
    }
}

/// Probability weights stored in log space, normalized by the Ω partition function.
#[derive(Clone, Debug)]
pub struct Measure {
    pub log_weights: Vec<f64>,
    pub log_z: f64,
}

impl Measure {
    #[inline]
    pub fn prob(&self, i: ConfigIndex) -> f64 {
        (self.log_weights[i.0] - self.log_z).exp()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_weights
            .iter()
            .map(|w| (w - self.log_z).exp())
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.probabilities().iter().sum()
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn min_prob(&self) -> f64 {
        self.probabilities().into_iter().fold(f64::INFINITY, f64::min)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn log_weights(model: &ZrpModel, space: &ConfigSpace) -> Vec<f64> {
    let mut occ = vec![0; space.sites()];
    (0..space.len())
        .map(|i| {
            space.unrank_into(ConfigIndex(i), &mut occ);
            model.log_weight(&occ)
        })
        .collect()
}

/// μ on Ω.
pub fn stationary_measure(model: &ZrpModel) -> Result<Measure> {
    stationary_measure_within(model, &Budget::default())
}

pub fn stationary_measure_within(model: &ZrpModel, budget: &Budget) -> Result<Measure> {
    let space = model.space_within(budget.exact_states)?;
    let log_weights = log_weights(model, &space);
    let log_z = log_sum_exp(&log_weights);
    Ok(Measure { log_weights, log_z })
}

/// μ extended to Ω̂ by the same product formula and the same normalizer as Ω.
pub fn extended_measure(model: &ZrpModel) -> Result<Measure> {
    let full = stationary_measure(model)?;
    extended_measure_with(model, full.log_z)
}

pub(crate) fn extended_measure_with(model: &ZrpModel, log_z: f64) -> Result<Measure> {
    if model.particles() == 0 {
        return Err(ZrpError::InvalidConfig("Ω̂ needs at least one particle".into()));
    }
    let space = model.reduced_space()?;
    Ok(Measure {
        log_weights: log_weights(model, &space),
        log_z,
    })
}

/// Lipschitz and growth diagnostics for homogeneous rates over `k ≤ horizon`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateConditionReport {
    pub lipschitz_sup: f64,
    pub min_gap_at_delta: f64,
    pub delta: usize,
    pub horizon: usize,
    /// The horizon runs past a table's end: the minimum gap is only certified up to the table boundary.
    pub tail_flagged: bool,
}

pub fn check_rate_conditions(
    spec: &RateSpec,
    delta: usize,
    horizon: usize,
) -> Result<RateConditionReport> {
    if !spec.is_homogeneous() {
        return Err(ZrpError::NotHomogeneous);
    }
    if delta == 0 || horizon <= delta {
        return Err(ZrpError::Domain(format!(
            "need 1 <= delta < horizon, got delta={delta}, horizon={horizon}"
        )));
    }
    let r = |k: usize| spec.rate(0, k);
    let lipschitz_sup = (1..horizon)
        .map(|k| (r(k + 1) - r(k)).abs())
        .fold(0.0, f64::max);
    let mut min_gap = f64::INFINITY;
    for l in 1..=horizon {
        for k in (l + delta)..=horizon {
            min_gap = min_gap.min(r(k) - r(l));
        }
    }
    let tail_flagged = spec.table_horizon().is_some_and(|len| horizon > len);
    Ok(RateConditionReport {
        lipschitz_sup,
        min_gap_at_delta: min_gap,
        delta,
        horizon,
        tail_flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap() -> JumpMatrix {
        JumpMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn validate_examples() {
        let p = swap();
        assert!((p.stationary()[0] - 0.5).abs() < 1e-15);
        assert!(p.is_doubly_stochastic());
        let p = JumpMatrix::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        assert!((p.stationary()[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((p.stationary()[1] - 2.0 / 3.0).abs() < 1e-14);
        assert!(!p.is_doubly_stochastic());
        assert_eq!(
            JumpMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            Err(ZrpError::NotIrreducible { components: 2 })
        );
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(
            JumpMatrix::from_rows(&[vec![0.5, 0.6], vec![1.0, 0.0]]),
            Err(ZrpError::NotStochastic(_))
        ));
        assert!(matches!(
            JumpMatrix::from_rows(&[vec![1.5, -0.5], vec![1.0, 0.0]]),
            Err(ZrpError::NotStochastic(_))
        ));
        let p = JumpMatrix::from_rows_with(&[vec![1.0, 1.0], vec![2.0, 6.0]], true).unwrap();
        assert!((p.get(1, 1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn power_iteration_agrees_with_solve() {
        let p = JumpMatrix::from_rows(&[
            vec![0.1, 0.6, 0.3],
            vec![0.5, 0.0, 0.5],
            vec![0.2, 0.2, 0.6],
        ])
        .unwrap();
        let pi = power_stationary(p.entries());
        for (a, b) in pi.iter().zip(p.stationary()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scc_counts() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(strongly_connected_components(&m), 3);
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(strongly_connected_components(&m), 1);
    }

    #[test]
    fn mean_field_examples() {
        let k = mean_field(&[0.5, 0.5]).unwrap();
        assert_eq!(k.rows(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let k = mean_field(&[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert_eq!(k.get(1, 0), 1.0 / 3.0);
        assert_eq!(k.stationary(), &[1.0 / 3.0, 2.0 / 3.0]);
        let k = mean_field(&[0.25; 4]).unwrap();
        assert!(k.entries().iter().all(|&v| v == 0.25));
        assert!(k.is_doubly_stochastic());
        assert!(mean_field(&[0.5, 0.6]).is_err());
        assert!(mean_field(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn rate_examples() {
        assert_eq!(RateSpec::Unit.rate(0, 5), 1.0);
        assert_eq!(RateSpec::Linear.rate(1, 3), 3.0);
        let specs = [
            RateSpec::Unit,
            RateSpec::Linear,
            RateSpec::Table { values: vec![1.0, 2.0] },
            RateSpec::SiteTable { tables: vec![vec![3.0], vec![1.0, 4.0]] },
            RateSpec::Affine { a: 2.0, b: 1.0 },
        ];
        for s in &specs {
            s.validate(2).unwrap();
            assert_eq!(s.rate(1, 0), 0.0);
            for k in 1..20 {
                assert!(s.rate(1, k) > 0.0);
            }
        }
        let t = RateSpec::Table { values: vec![1.0, 2.0, 5.0] };
        assert_eq!(t.rate(0, 3), 5.0);
        assert_eq!(t.rate(0, 40), 5.0);
        assert!(RateSpec::Affine { a: -1.0, b: 5.0 }.validate(1).is_err());
        assert!(RateSpec::Table { values: vec![1.0, 0.0] }.validate(1).is_err());
        assert!(RateSpec::SiteTable { tables: vec![vec![1.0]] }.validate(2).is_err());
    }

    #[test]
    fn reversibility_examples() {
        let sym = JumpMatrix::from_rows(&[
            vec![0.2, 0.5, 0.3],
            vec![0.5, 0.1, 0.4],
            vec![0.3, 0.4, 0.3],
        ])
        .unwrap();
        assert!(check_reversibility(&sym));
        let rot = JumpMatrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(!check_reversibility(&rot));
        let mf = mean_field(&[0.1, 0.2, 0.7]).unwrap();
        assert!(check_reversibility(&mf));
    }

    #[test]
    fn rate_condition_examples() {
        let r = check_rate_conditions(&RateSpec::Unit, 1, 10).unwrap();
        assert_eq!((r.lipschitz_sup, r.min_gap_at_delta), (0.0, 0.0));
        let r = check_rate_conditions(&RateSpec::Linear, 1, 10).unwrap();
        assert_eq!((r.lipschitz_sup, r.min_gap_at_delta), (1.0, 1.0));
        let t = RateSpec::Table { values: vec![1.0, 2.0, 2.0, 3.0] };
        let r = check_rate_conditions(&t, 2, 4).unwrap();
        assert_eq!((r.lipschitz_sup, r.min_gap_at_delta), (1.0, 1.0));
        assert!(!r.tail_flagged);
        let r = check_rate_conditions(&t, 2, 8).unwrap();
        assert!(r.tail_flagged);
        assert_eq!(r.min_gap_at_delta, 0.0);
        let st = RateSpec::SiteTable { tables: vec![vec![1.0], vec![2.0]] };
        assert_eq!(check_rate_conditions(&st, 1, 4), Err(ZrpError::NotHomogeneous));
    }

    #[test]
    fn measure_examples() {
        let model = ZrpModel::new(swap(), RateSpec::Unit, 2).unwrap();
        let mu = stationary_measure(&model).unwrap();
        for p in mu.probabilities() {
            assert!((p - 1.0 / 3.0).abs() < 1e-14);
        }
        let ext = extended_measure(&model).unwrap();
        for p in ext.probabilities() {
            assert!((p - 2.0 / 3.0).abs() < 1e-14);
        }
        assert!((ext.total_mass() - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn linear_rates_give_poisson_product() {
        let p = JumpMatrix::from_rows(&[
            vec![0.1, 0.6, 0.3],
            vec![0.5, 0.0, 0.5],
            vec![0.2, 0.2, 0.6],
        ])
        .unwrap();
        let pi = p.stationary().to_vec();
        let model = ZrpModel::new(p, RateSpec::Linear, 4).unwrap();
        let mu = stationary_measure(&model).unwrap();
        let space = model.space().unwrap();
        let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
        let raw: Vec<f64> = space
            .iter()
            .map(|c| {
                c.occupations()
                    .iter()
                    .enumerate()
                    .map(|(x, &k)| pi[x].powi(k as i32) / fact(k))
                    .product()
            })
            .collect();
        let z: f64 = raw.iter().sum();
        for (a, b) in mu.probabilities().iter().zip(&raw) {
            assert!((a - b / z).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_particles_rejected() {
        assert!(ZrpModel::new(swap(), RateSpec::Unit, 0).is_err());
    }
}
