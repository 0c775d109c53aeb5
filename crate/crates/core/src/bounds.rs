//! Closed-form bounds on λ(zrp) and the canonical-path congestion bound on λ(P).

use std::collections::VecDeque;

use serde::Serialize;

use crate::configspace::ConfigIndex;
use crate::error::{Result, ZrpError};
use crate::forms::ZrpSystem;
use crate::model::{JumpMatrix, RateSpec, ZrpModel};
use crate::spectral;
use crate::Budget;

/// Law of the particle count at one site under μ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OccupancyLaw {
    pub probabilities: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

impl OccupancyLaw {
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        let mean: f64 = probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum();
        let variance = probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| p * (k as f64 - mean).powi(2))
            .sum();
        OccupancyLaw {
            probabilities,
            mean,
            variance,
        }
    }

    /// `E[h(ζ)]`.
    pub fn expect(&self, h: impl Fn(usize) -> f64) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| p * h(k))
            .sum()
    }

    /// Total variation distance `½ Σ_k |p(k) − q(k)|`.
    pub fn tv_distance(&self, other: &OccupancyLaw) -> f64 {
        let len = self.probabilities.len().max(other.probabilities.len());
        let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
        0.5 * (0..len)
            .map(|k| (at(&self.probabilities, k) - at(&other.probabilities, k)).abs())
            .sum::<f64>()
    }
}

/// Exact marginal of `η(site)` under μ.
pub fn occupancy_marginal(model: &ZrpModel, site: usize) -> Result<OccupancyLaw> {
    let sys = ZrpSystem::new(model)?;
    occupancy_marginal_of(&sys, site)
}

pub fn occupancy_marginal_of(sys: &ZrpSystem, site: usize) -> Result<OccupancyLaw> {
    let n = sys.model().sites();
    if site >= n {
        return Err(ZrpError::Domain(format!("site {site} out of range for {n} sites")));
    }
    let mut probs = vec![0.0; sys.model().particles() + 1];
    for (i, c) in sys.space().iter().enumerate() {
        probs[c.get(site)] += sys.measure().prob(ConfigIndex(i));
    }
    Ok(OccupancyLaw::from_probabilities(probs))
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (1..=k).fold(1.0, |acc, i| acc * (n - k + i) as f64 / i as f64)
}

/// Closed-form single-site law for unit rates and uniform π,
/// `P(ζ = k) = C(n+m−k−2, n−2) / C(n+m−1, n−1)`, with mean `m/n` and
/// variance `((n−1)/(n+1))(1 + m/n)(m/n)`.
pub fn unit_rate_occupancy(n: usize, m: usize) -> Result<OccupancyLaw> {
    if n < 2 {
        return Err(ZrpError::Domain("closed-form occupancy needs n >= 2".into()));
    }
    let denom = binomial(n + m - 1, n - 1);
    let probabilities = (0..=m)
        .map(|k| binomial(n + m - k - 2, n - 2) / denom)
        .collect();
    let (nf, mf) = (n as f64, m as f64);
    Ok(OccupancyLaw {
        probabilities,
        mean: mf / nf,
        variance: (nf - 1.0) / (nf + 1.0) * (1.0 + mf / nf) * (mf / nf),
    })
}

/// `E[r(ζ)] = m / (n + m − 1)` for unit rates.
pub fn unit_rate_expected_rate(n: usize, m: usize) -> Result<f64> {
    if n < 2 {
        return Err(ZrpError::Domain("closed-form occupancy needs n >= 2".into()));
    }
    Ok(m as f64 / (n + m - 1) as f64)
}

fn require_doubly_stochastic(p: &JumpMatrix) -> Result<()> {
    if !p.is_doubly_stochastic() {
        return Err(ZrpError::NotDoublyStochastic);
    }
    Ok(())
}

fn require_nondegenerate(n: usize) -> Result<()> {
    if n < 2 {
        return Err(ZrpError::Domain("bounds need at least two sites".into()));
    }
    Ok(())
}

/// `(1 − 1/n) λ(P) E[r(ζ)] / Var(ζ)`, for doubly stochastic P and homogeneous rates.
pub fn general_upper_bound(model: &ZrpModel) -> Result<f64> {
    let sys = ZrpSystem::new(model)?;
    general_upper_bound_of(&sys)
}

pub fn general_upper_bound_of(sys: &ZrpSystem) -> Result<f64> {
    let model = sys.model();
    require_nondegenerate(model.sites())?;
    require_doubly_stochastic(model.geometry())?;
    if !model.rates().is_homogeneous() {
        return Err(ZrpError::NotHomogeneous);
    }
    let lambda_p = spectral::poincare_jump(model.geometry())?.value;
    let law = occupancy_marginal_of(sys, 0)?;
    let expected_rate = law.expect(|k| model.rate(0, k));
    let n = model.sites() as f64;
    Ok((1.0 - 1.0 / n) * lambda_p * expected_rate / law.variance)
}

/// `λ(P) n(n+1) / ((n+m)(n+m−1))`.
pub fn unit_rate_upper_bound(n: usize, m: usize, lambda_p: f64) -> Result<f64> {
    if m == 0 {
        return Err(ZrpError::Domain("need at least one particle".into()));
    }
    require_nondegenerate(n)?;
    let (n, m) = (n as f64, m as f64);
    Ok(lambda_p * n * (n + 1.0) / ((n + m) * (n + m - 1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IncreasingRatesBound {
    /// `λ(P) · max(0, infimum)`.
    pub value: f64,
    pub infimum: f64,
    /// Set when the infimum comes from a constant table tail, making the bound vacuous.
    pub tail_warning: bool,
}

/// `inf_{x, k ≥ 1} r(x, k+1) − r(x, k)`, plus whether a constant table tail attained it.
pub fn rate_increment_infimum(rates: &RateSpec, n: usize) -> (f64, bool) {
    match rates {
        RateSpec::Unit => (0.0, false),
        RateSpec::Linear => (1.0, false),
        RateSpec::Affine { a, .. } => (*a, false),
        RateSpec::Table { .. } | RateSpec::SiteTable { .. } => {
            let horizon = rates.table_horizon().unwrap_or(1);
            let mut inf = f64::INFINITY;
            for x in 0..n {
                for k in 1..horizon {
                    inf = inf.min(rates.rate(x, k + 1) - rates.rate(x, k));
                }
            }
            // the constant tail contributes increments of exactly 0
            let warn = inf > 0.0;
            (inf.min(0.0), warn)
        }
    }
}

/// `λ(P) · inf_{x,k} (r(x,k+1) − r(x,k))`, clamped at 0.
pub fn increasing_rates_lower_bound(model: &ZrpModel) -> Result<IncreasingRatesBound> {
    require_nondegenerate(model.sites())?;
    require_doubly_stochastic(model.geometry())?;
    let lambda_p = spectral::poincare_jump(model.geometry())?.value;
    let (infimum, tail_warning) = rate_increment_infimum(model.rates(), model.sites());
    Ok(IncreasingRatesBound {
        value: lambda_p * infimum.max(0.0),
        infimum,
        tail_warning,
    })
}

/// `λ(P) · λ(zrp(Π, r, m))`.
pub fn mean_field_lower_bound(model: &ZrpModel) -> Result<f64> {
    mean_field_lower_bound_within(model, &Budget::default())
}

pub fn mean_field_lower_bound_within(model: &ZrpModel, budget: &Budget) -> Result<f64> {
    require_nondegenerate(model.sites())?;
    let lambda_p = spectral::poincare_jump(model.geometry())?.value;
    let mf = model.mean_field()?;
    Ok(lambda_p * spectral::poincare_zrp_within(&mf, budget)?.value)
}

/// One directed path per ordered pair of distinct sites.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSystem {
    n: usize,
    // paths[x * n + y]: vertex sequence x, ..., y
    paths: Vec<Vec<usize>>,
}

impl PathSystem {
    pub fn new(n: usize, paths: Vec<Vec<usize>>) -> Result<Self> {
        if paths.len() != n * n {
            return Err(ZrpError::InvalidPath(format!(
                "expected {} path slots, got {}",
                n * n,
                paths.len()
            )));
        }
        for x in 0..n {
            for y in 0..n {
                let p = &paths[x * n + y];
                if x == y {
                    continue;
                }
                if p.first() != Some(&x) || p.last() != Some(&y) {
                    return Err(ZrpError::InvalidPath(format!("path {x}->{y} has wrong endpoints")));
                }
                let mut seen = vec![false; n];
                for &v in p {
                    if v >= n || seen[v] {
                        return Err(ZrpError::InvalidPath(format!("path {x}->{y} is not simple")));
                    }
                    seen[v] = true;
                }
            }
        }
        Ok(PathSystem { n, paths })
    }

    pub fn path(&self, x: usize, y: usize) -> &[usize] {
        &self.paths[x * self.n + y]
    }

    /// Number of edges on the path.
    pub fn length(&self, x: usize, y: usize) -> usize {
        self.path(x, y).len().saturating_sub(1)
    }
}

/// Breadth-first shortest paths on the support of P, visiting neighbors in index order.
pub fn default_paths(p: &JumpMatrix) -> Result<PathSystem> {
    let n = p.sites();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|x| (0..n).filter(|&y| y != x && p.get(x, y) > 0.0).collect())
        .collect();
    let mut paths = vec![Vec::new(); n * n];
    for x in 0..n {
        let mut parent = vec![usize::MAX; n];
        parent[x] = x;
        let mut queue = VecDeque::from([x]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if parent[w] == usize::MAX {
                    parent[w] = v;
                    queue.push_back(w);
                }
            }
        }
        for y in 0..n {
            if y == x {
                continue;
            }
            if parent[y] == usize::MAX {
                return Err(ZrpError::NotIrreducible { components: 2 });
            }
            let mut path = vec![y];
            let mut v = y;
            while v != x {
                v = parent[v];
                path.push(v);
            }
            path.reverse();
            paths[x * n + y] = path;
        }
    }
    Ok(PathSystem { n, paths })
}

/// `max_{(a,b)} (π(a)P(a,b))^{-1} Σ_{x≠y} π(x)π(y) |γ_xy| 1{(a,b) ∈ γ_xy}`.
pub fn congestion_constant(p: &JumpMatrix, paths: &PathSystem) -> Result<f64> {
    let n = p.sites();
    if paths.n != n {
        return Err(ZrpError::DimensionMismatch {
            expected: n,
            got: paths.n,
        });
    }
    let pi = p.stationary();
    let mut load = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let path = paths.path(x, y);
            let weight = pi[x] * pi[y] * paths.length(x, y) as f64;
            for e in path.windows(2) {
                let (a, b) = (e[0], e[1]);
                if p.get(a, b) <= 0.0 {
                    return Err(ZrpError::InvalidPath(format!(
                        "path {x}->{y} uses edge ({a},{b}) with P(a,b) = 0"
                    )));
                }
                load[a * n + b] += weight;
            }
        }
    }
    let mut kappa: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let l = load[a * n + b];
            if l > 0.0 {
                kappa = kappa.max(l / (pi[a] * p.get(a, b)));
            }
        }
    }
    Ok(kappa)
}

/// `1/κ` for the default path system.
pub fn diaconis_stroock_bound(p: &JumpMatrix) -> Result<f64> {
    let kappa = congestion_constant(p, &default_paths(p)?)?;
    Ok(1.0 / kappa)
}

/// The comparison table for one model.
#[derive(Clone, Debug, Serialize)]
pub struct BoundsTable {
    pub lambda_p: f64,
    pub lower_mean_field: Option<f64>,
    pub lower_increasing_rates: Option<f64>,
    pub lower_congestion: f64,
    pub exact_lambda_zrp: Option<f64>,
    pub upper_general: Option<f64>,
    pub upper_unit_rate: Option<f64>,
    pub notes: Vec<String>,
}

/// Every bound that applies to `model`; inapplicable rows are `None` with a note.
pub fn bounds_table(model: &ZrpModel, budget: &Budget) -> Result<BoundsTable> {
    require_nondegenerate(model.sites())?;
    let p = model.geometry();
    let lambda_p = spectral::poincare_jump(p)?.value;
    let mut notes = Vec::new();
    let lower_congestion = diaconis_stroock_bound(p)?;

    let sys = match ZrpSystem::within(model, budget) {
        Ok(s) => Some(s),
        Err(e @ ZrpError::BudgetExceeded { .. }) => {
            notes.push(format!("exact quantities skipped: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let exact_lambda_zrp = match &sys {
        Some(s) => Some(spectral::poincare_system(s, budget)?.value),
        None => None,
    };
    let lower_mean_field = match &sys {
        Some(_) => Some(mean_field_lower_bound_within(model, budget)?),
        None => None,
    };
    let doubly = p.is_doubly_stochastic();
    let lower_increasing_rates = if doubly {
        let b = increasing_rates_lower_bound(model)?;
        if b.tail_warning {
            notes.push("increasing-rates bound: constant table tail makes the infimum 0".into());
        }
        Some(b.value)
    } else {
        notes.push("increasing-rates bound needs a doubly stochastic P".into());
        None
    };
    let upper_general = match (&sys, doubly, model.rates().is_homogeneous()) {
        (Some(s), true, true) => Some(general_upper_bound_of(s)?),
        (_, false, _) => {
            notes.push("general upper bound needs a doubly stochastic P".into());
            None
        }
        (_, _, false) => {
            notes.push("general upper bound needs homogeneous rates".into());
            None
        }
        _ => None,
    };
    let upper_unit_rate = if doubly && matches!(model.rates(), RateSpec::Unit) {
        Some(unit_rate_upper_bound(model.sites(), model.particles(), lambda_p)?)
    } else {
        None
    };
    if matches!(model.rates(), RateSpec::Affine { .. } | RateSpec::Table { .. }) {
        notes.push(
            "Lipschitz-rate lower bound c·λ(P) has a non-constructive constant; see the mean-field bound".into(),
        );
    }
    Ok(BoundsTable {
        lambda_p,
        lower_mean_field,
        lower_increasing_rates,
        lower_congestion,
        exact_lambda_zrp,
        upper_general,
        upper_unit_rate,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mean_field;

    fn swap() -> JumpMatrix {
        JumpMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn occupancy_examples() {
        let m = ZrpModel::new(swap(), RateSpec::Unit, 2).unwrap();
        let law = occupancy_marginal(&m, 0).unwrap();
        for p in &law.probabilities {
            assert!((p - 1.0 / 3.0).abs() < 1e-14);
        }
        assert!((law.variance - 2.0 / 3.0).abs() < 1e-14);
        let m = ZrpModel::new(swap(), RateSpec::Unit, 1).unwrap();
        let law = occupancy_marginal(&m, 1).unwrap();
        assert!((law.variance - 0.25).abs() < 1e-15);

        let cf = unit_rate_occupancy(2, 1).unwrap();
        assert!((cf.variance - 0.25).abs() < 1e-15);
        let cf = unit_rate_occupancy(2, 2).unwrap();
        assert!((cf.variance - 2.0 / 3.0).abs() < 1e-15);
        assert!((unit_rate_expected_rate(2, 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // uniform law on the 6 states of Ω(3,2): site 0 holds 0,1,2 in 3,2,1 states
        let cf = unit_rate_occupancy(3, 2).unwrap();
        for (p, e) in cf.probabilities.iter().zip([0.5, 1.0 / 3.0, 1.0 / 6.0]) {
            assert!((p - e).abs() < 1e-15);
        }
        assert!(unit_rate_occupancy(1, 3).is_err());
    }

    #[test]
    fn upper_bound_examples() {
        let m = ZrpModel::new(swap(), RateSpec::Unit, 2).unwrap();
        assert!((general_upper_bound(&m).unwrap() - 1.0).abs() < 1e-13);
        let m1 = ZrpModel::new(swap(), RateSpec::Unit, 1).unwrap();
        assert!((general_upper_bound(&m1).unwrap() - 2.0).abs() < 1e-13);
        assert_eq!(unit_rate_upper_bound(2, 2, 2.0).unwrap(), 1.0);
        assert_eq!(unit_rate_upper_bound(2, 1, 2.0).unwrap(), 2.0);
        assert!(unit_rate_upper_bound(3, 0, 1.0).is_err());

        let p = JumpMatrix::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let m = ZrpModel::new(p, RateSpec::Unit, 2).unwrap();
        assert_eq!(general_upper_bound(&m), Err(ZrpError::NotDoublyStochastic));
        let st = RateSpec::SiteTable { tables: vec![vec![1.0], vec![2.0]] };
        let m = ZrpModel::new(swap(), st, 2).unwrap();
        assert_eq!(general_upper_bound(&m), Err(ZrpError::NotHomogeneous));
    }

    #[test]
    fn lower_bound_examples() {
        let p = JumpMatrix::cycle(4).unwrap();
        let lp = spectral::poincare_jump(&p).unwrap().value;
        let lin = ZrpModel::new(p.clone(), RateSpec::Linear, 2).unwrap();
        assert!((increasing_rates_lower_bound(&lin).unwrap().value - lp).abs() < 1e-14);
        let unit = lin.with_rates(RateSpec::Unit).unwrap();
        assert_eq!(increasing_rates_lower_bound(&unit).unwrap().value, 0.0);
        let aff = lin.with_rates(RateSpec::Affine { a: 2.0, b: 1.0 }).unwrap();
        assert!((increasing_rates_lower_bound(&aff).unwrap().value - 2.0 * lp).abs() < 1e-14);
        let tab = lin.with_rates(RateSpec::Table { values: vec![1.0, 2.0, 4.0] }).unwrap();
        let b = increasing_rates_lower_bound(&tab).unwrap();
        assert_eq!(b.value, 0.0);
        assert!(b.tail_warning);

        let m = ZrpModel::new(swap(), RateSpec::Unit, 2).unwrap();
        assert!((mean_field_lower_bound(&m).unwrap() - 1.0).abs() < 1e-13);
        let k = ZrpModel::new(mean_field(&[0.25; 4]).unwrap(), RateSpec::Unit, 3).unwrap();
        let exact = spectral::poincare_zrp(&k).unwrap().value;
        assert!((mean_field_lower_bound(&k).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn path_examples() {
        let paths = default_paths(&JumpMatrix::cycle(3).unwrap()).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                if x != y {
                    assert_eq!(paths.length(x, y), 1);
                }
            }
        }
        let rot = JumpMatrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(default_paths(&rot).unwrap().path(0, 2), &[0, 1, 2]);
        let c4 = default_paths(&JumpMatrix::cycle(4).unwrap()).unwrap();
        assert_eq!(c4.path(0, 2), &[0, 1, 2]);
        assert_eq!(c4.path(1, 3), &[1, 0, 3]);
    }

    #[test]
    fn congestion_examples() {
        let c3 = JumpMatrix::cycle(3).unwrap();
        let kappa = congestion_constant(&c3, &default_paths(&c3).unwrap()).unwrap();
        assert!((kappa - 2.0 / 3.0).abs() < 1e-15);
        let k2 = mean_field(&[0.5, 0.5]).unwrap();
        let kappa = congestion_constant(&k2, &default_paths(&k2).unwrap()).unwrap();
        assert!((kappa - 1.0).abs() < 1e-15);

        let bad = PathSystem::new(3, {
            let mut v = vec![Vec::new(); 9];
            for x in 0..3 {
                for y in 0..3 {
                    if x != y {
                        v[x * 3 + y] = vec![x, y];
                    }
                }
            }
            v
        })
        .unwrap();
        let rot = JumpMatrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(matches!(congestion_constant(&rot, &bad), Err(ZrpError::InvalidPath(_))));
        assert!(PathSystem::new(2, vec![vec![], vec![0, 0, 1], vec![1, 0], vec![]]).is_err());
    }

    #[test]
    fn table_for_micro_instance() {
        let m = ZrpModel::new(swap(), RateSpec::Unit, 2).unwrap();
        let t = bounds_table(&m, &Budget::default()).unwrap();
        assert!((t.exact_lambda_zrp.unwrap() - 1.0).abs() < 1e-13);
        assert!((t.upper_unit_rate.unwrap() - 1.0).abs() < 1e-13);
        assert!((t.upper_general.unwrap() - 1.0).abs() < 1e-13);
        assert!((t.lower_mean_field.unwrap() - 1.0).abs() < 1e-13);
        assert_eq!(t.lower_increasing_rates, Some(0.0));
    }
}
