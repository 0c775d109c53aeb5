//! Exact-dynamics (Gillespie) simulation.
//!
//! Each replica draws from a ChaCha stream keyed by `(seed, replica)`, so
//! results do not depend on how replicas are scheduled across threads.

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::OccupancyLaw;
use crate::configspace::Config;
use crate::error::{Result, ZrpError};
use crate::model::ZrpModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub source: usize,
    pub target: usize,
}

impl Event {
    /// A particle that was expelled and landed back on its own site.
    pub fn is_self_jump(&self) -> bool {
        self.source == self.target
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub events: Vec<Event>,
    pub initial: Config,
    pub horizon: f64,
    pub seed: u64,
    pub replica: u64,
}

impl Trajectory {
    pub fn final_config(&self) -> Config {
        let mut c = self.initial.clone();
        for e in &self.events {
            if !e.is_self_jump() {
                c.occupations_mut()[e.source] -= 1;
                c.occupations_mut()[e.target] += 1;
            }
        }
        c
    }

    /// Writes `time,src,dst` lines.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,src,dst")?;
        for e in &self.events {
            writeln!(w, "{:.17e},{},{}", e.time, e.source, e.target)?;
        }
        Ok(())
    }
}

/// Binary sum tree over site exit rates: O(log n) update and sampling.
#[derive(Clone, Debug)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(values: &[f64]) -> Self {
        let leaves = values.len().next_power_of_two();
        let mut nodes = vec![0.0; 2 * leaves];
        nodes[leaves..leaves + values.len()].copy_from_slice(values);
        for i in (1..leaves).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        SumTree { leaves, nodes }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn set(&mut self, i: usize, v: f64) {
        let mut k = i + self.leaves;
        self.nodes[k] = v;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative range contains `u ∈ [0, total)`.
    fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if u < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }
}

/// Stepwise Gillespie sampler for one replica.
pub struct Gillespie<'a> {
    model: &'a ZrpModel,
    occ: Vec<usize>,
    time: f64,
    rng: ChaCha8Rng,
    exits: SumTree,
    targets: Vec<WeightedAliasIndex<f64>>,
}

impl<'a> Gillespie<'a> {
    pub fn new(model: &'a ZrpModel, initial: &Config, seed: u64, replica: u64) -> Result<Self> {
        let n = model.sites();
        if initial.sites() != n || initial.total() != model.particles() {
            return Err(ZrpError::InvalidConfig(format!(
                "initial configuration {initial} must hold {} particles on {n} sites",
                model.particles()
            )));
        }
        let occ = initial.occupations().to_vec();
        let rates: Vec<f64> = (0..n).map(|x| model.rate(x, occ[x])).collect();
        let p = model.geometry();
        let targets = (0..n)
            .map(|x| {
                WeightedAliasIndex::new((0..n).map(|y| p.get(x, y)).collect())
                    .map_err(|e| ZrpError::NotStochastic(format!("row {x}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replica);
        Ok(Gillespie {
            model,
            occ,
            time: 0.0,
            rng,
            exits: SumTree::new(&rates),
            targets,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn occupations(&self) -> &[usize] {
        &self.occ
    }

    /// Total exit rate `Σ_x r(x, η(x))` of the current state.
    pub fn total_rate(&self) -> f64 {
        self.exits.total()
    }

    /// Advances by one expulsion; `None` only when no site can fire.
    pub fn step(&mut self) -> Option<Event> {
        let total = self.exits.total();
        if !(total > 0.0) {
            return None;
        }
        let wait: f64 = self.rng.sample::<f64, _>(Exp1) / total;
        self.time += wait;
        let u = self.rng.random::<f64>() * total;
        let x = self.exits.find(u);
        let y = self.targets[x].sample(&mut self.rng);
        if x != y {
            self.occ[x] -= 1;
            self.occ[y] += 1;
            self.exits.set(x, self.model.rate(x, self.occ[x]));
            self.exits.set(y, self.model.rate(y, self.occ[y]));
            debug_assert_eq!(self.occ.iter().sum::<usize>(), self.model.particles());
        }
        Some(Event {
            time: self.time,
            source: x,
            target: y,
        })
    }
}

/// Runs one trajectory on `[0, horizon]`.
pub fn simulate(model: &ZrpModel, eta0: &Config, horizon: f64, seed: u64) -> Result<Trajectory> {
    simulate_replica(model, eta0, horizon, seed, 0)
}

pub fn simulate_replica(
    model: &ZrpModel,
    eta0: &Config,
    horizon: f64,
    seed: u64,
    replica: u64,
) -> Result<Trajectory> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(ZrpError::Domain(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    let mut g = Gillespie::new(model, eta0, seed, replica)?;
    let mut events = Vec::new();
    while let Some(e) = g.step() {
        if e.time > horizon {
            break;
        }
        events.push(e);
    }
    Ok(Trajectory {
        events,
        initial: eta0.clone(),
        horizon,
        seed,
        replica,
    })
}

/// Independent replicas `0..replicas`, returned in replica order.
pub fn simulate_replicas(
    model: &ZrpModel,
    eta0: &Config,
    horizon: f64,
    seed: u64,
    replicas: u64,
) -> Result<Vec<Trajectory>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| simulate_replica(model, eta0, horizon, seed, r))
        .collect()
}

/// Time-weighted histogram of `η(site)` over `[burn_in, horizon]`.
pub fn empirical_occupancy(
    trajectory: &Trajectory,
    site: usize,
    burn_in: f64,
) -> Result<OccupancyLaw> {
    let horizon = trajectory.horizon;
    if !(horizon > burn_in) {
        return Err(ZrpError::Domain(format!(
            "burn-in {burn_in} must be below the horizon {horizon}"
        )));
    }
    if site >= trajectory.initial.sites() {
        return Err(ZrpError::Domain(format!("site {site} out of range")));
    }
    let mut hist = vec![0.0; trajectory.initial.total() + 1];
    let mut count = trajectory.initial.get(site);
    let mut last = burn_in.max(0.0);
    for e in &trajectory.events {
        if e.is_self_jump() || (e.source != site && e.target != site) {
            continue;
        }
        if e.time > last {
            hist[count] += e.time - last;
            last = e.time;
        }
        if e.source == site {
            count -= 1;
        } else {
            count += 1;
        }
    }
    hist[count] += horizon - last;
    let span = horizon - burn_in.max(0.0);
    Ok(OccupancyLaw::from_probabilities(
        hist.into_iter().map(|h| h / span).collect(),
    ))
}

/// Times at which a particle left `site` for another site.
pub fn departure_counter(trajectory: &Trajectory, site: usize) -> Vec<f64> {
    trajectory
        .events
        .iter()
        .filter(|e| e.source == site && e.target != site)
        .map(|e| e.time)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpMatrix, RateSpec};

    fn micro() -> ZrpModel {
        let p = JumpMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        ZrpModel::new(p, RateSpec::Unit, 2).unwrap()
    }

    #[test]
    fn sum_tree_sampling() {
        let t = SumTree::new(&[1.0, 0.0, 2.0]);
        assert_eq!(t.total(), 3.0);
        assert_eq!(t.find(0.5), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(2.999), 2);
        let mut t = t;
        t.set(0, 0.0);
        assert_eq!(t.find(0.0), 2);
    }

    #[test]
    fn exit_rates() {
        let m = micro();
        let g = Gillespie::new(&m, &Config::new(vec![1, 1]), 1, 0).unwrap();
        assert_eq!(g.total_rate(), 2.0);
        let g = Gillespie::new(&m, &Config::new(vec![2, 0]), 1, 0).unwrap();
        assert_eq!(g.total_rate(), 1.0);
        assert!(Gillespie::new(&m, &Config::new(vec![1, 0]), 1, 0).is_err());
    }

    #[test]
    fn deterministic_and_conservative() {
        let m = ZrpModel::new(JumpMatrix::cycle(5).unwrap(), RateSpec::Linear, 7).unwrap();
        let eta0 = Config::concentrated(5, 2, 7);
        let a = simulate(&m, &eta0, 50.0, 42).unwrap();
        let b = simulate(&m, &eta0, 50.0, 42).unwrap();
        assert_eq!(a, b);
        let reps = simulate_replicas(&m, &eta0, 50.0, 42, 4).unwrap();
        assert_eq!(reps[0], a);
        assert_ne!(reps[1].events, a.events);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| simulate_replicas(&m, &eta0, 50.0, 42, 4).unwrap());
        assert_eq!(serial, reps);

        let mut occ = eta0.occupations().to_vec();
        let mut prev = 0.0;
        for e in &a.events {
            assert!(e.time > prev);
            prev = e.time;
            assert!(occ[e.source] >= 1);
            if !e.is_self_jump() {
                occ[e.source] -= 1;
                occ[e.target] += 1;
            }
            assert_eq!(occ.iter().sum::<usize>(), 7);
        }
        assert_eq!(a.final_config().occupations(), occ.as_slice());
    }

    #[test]
    fn occupancy_guards_and_walker() {
        let m = micro();
        let t = simulate(&m, &Config::new(vec![1, 1]), 10.0, 3).unwrap();
        assert!(empirical_occupancy(&t, 0, 10.0).is_err());
        let law = empirical_occupancy(&t, 0, 0.0).unwrap();
        assert!((law.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let p = JumpMatrix::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let one = ZrpModel::new(p, RateSpec::Unit, 1).unwrap();
        let t = simulate(&one, &Config::new(vec![1, 0]), 20_000.0, 9).unwrap();
        let law = empirical_occupancy(&t, 0, 100.0).unwrap();
        assert_eq!(law.probabilities.len(), 2);
        assert!((law.mean - 1.0 / 3.0).abs() < 0.02, "{}", law.mean);
    }

    #[test]
    fn departures() {
        let m = micro();
        let t = simulate(&m, &Config::new(vec![2, 0]), 0.0, 1).unwrap();
        assert!(departure_counter(&t, 0).is_empty());
        let short = simulate(&m, &Config::new(vec![2, 0]), 5.0, 1).unwrap();
        let long = simulate(&m, &Config::new(vec![2, 0]), 50.0, 1).unwrap();
        let a = departure_counter(&short, 0);
        let b = departure_counter(&long, 0);
        assert!(a.len() <= b.len());
        assert_eq!(a, b[..a.len()]);
    }

    #[test]
    fn first_departure_is_thinned_exponential() {
        // unit rate, P(0,0) = 1/2: first departure ~ Exp(1/2), mean 2
        let p = JumpMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let m = ZrpModel::new(p, RateSpec::Unit, 3).unwrap();
        let eta0 = Config::concentrated(2, 0, 3);
        let firsts: Vec<f64> = simulate_replicas(&m, &eta0, 200.0, 11, 4000)
            .unwrap()
            .iter()
            .map(|t| departure_counter(t, 0)[0])
            .collect();
        let mean = firsts.iter().sum::<f64>() / firsts.len() as f64;
        // sd of Exp(1/2) is 2, standard error 2/√4000 ≈ 0.032
        assert!((mean - 2.0).abs() < 0.1, "{mean}");
    }
}
