//! Invariant checks run by `zrp verify` on a single model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use zrp_core::bounds::bounds_table;
use zrp_core::forms::{dirichlet_jump, ZrpSystem};
use zrp_core::instances::random_vector;
use zrp_core::mixing::{self, Distance};
use zrp_core::spectral::{poincare_jump, poincare_system};
use zrp_core::{Budget, ConfigIndex, Result, ZrpModel};

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    /// Identities between forms and measures.
    pub identity: f64,
    /// Eigenvalue and Rayleigh-quotient agreement.
    pub spectral: f64,
    /// Slack allowed in inequalities.
    pub slack: f64,
    /// Random test functions per identity.
    pub draws: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: 1e-10,
            spectral: 1e-9,
            slack: 1e-10,
            draws: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct Property {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub states: usize,
    pub properties: Vec<Property>,
    pub pass: bool,
}

struct Suite {
    props: Vec<Property>,
}

impl Suite {
    fn check(&mut self, name: &'static str, ok: bool, detail: String) {
        let status = if ok { Status::Pass } else { Status::Fail };
        self.props.push(Property { name, status, detail });
    }

    fn skip(&mut self, name: &'static str, why: &str) {
        self.props.push(Property {
            name,
            status: Status::Skipped,
            detail: why.into(),
        });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn run(model: &ZrpModel, budget: &Budget, tol: &Tolerances, seed: u64) -> Result<Report> {
    let sys = ZrpSystem::within(model, budget)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Suite { props: Vec::new() };
    let n = model.sites();
    let probs = sys.probabilities();

    let mass: f64 = probs.iter().sum();
    s.check(
        "measure_normalized",
        (mass - 1.0).abs() <= tol.identity,
        format!("sum = {mass:.17e}"),
    );

    let ext = sys.extended_measure()?;
    let pi = model.geometry().stationary();
    let mut worst: f64 = 0.0;
    for (i, xi) in model.reduced_space()?.iter().enumerate() {
        let mu_xi = ext.prob(ConfigIndex(i));
        for x in 0..n {
            let j = sys.space().rank(&xi.with_added(x))?;
            let lhs = probs[j.0] * model.rate(x, xi.get(x) + 1);
            let rhs = mu_xi * pi[x];
            worst = worst.max((lhs - rhs).abs() / rhs);
        }
    }
    s.check(
        "product_identity",
        worst <= tol.identity,
        format!("worst relative error {worst:.3e}"),
    );

    let direct: f64 = sys
        .space()
        .iter()
        .enumerate()
        .map(|(i, c)| probs[i] * model.exit_rate(c.occupations()))
        .sum();
    let err = rel(ext.total_mass(), direct);
    s.check(
        "reduced_mass_identity",
        err <= tol.identity,
        format!("mu(reduced) = {:.17e}, expected exit flux {direct:.17e}", ext.total_mass()),
    );

    let op = sys.generator();
    let flow = op.apply_transpose(probs);
    let worst = flow.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    s.check(
        "generator_stationary",
        worst <= tol.identity,
        format!("max |mu L| = {worst:.3e}"),
    );
    let ones = vec![1.0; sys.len()];
    let worst = op.apply(&ones).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    s.check(
        "generator_conservative",
        worst <= tol.identity,
        format!("max |L 1| = {worst:.3e}"),
    );

    let mut main_worst: f64 = 0.0;
    let mut agree_worst: f64 = 0.0;
    let mut psd_min = f64::INFINITY;
    let mut adjoint_worst: f64 = 0.0;
    for _ in 0..tol.draws {
        let f = random_vector(sys.len(), &mut rng);
        let g = random_vector(sys.len(), &mut rng);
        let (lhs, rhs) = sys.main_identity_sides(&f, &g)?;
        main_worst = main_worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        let edge = sys.dirichlet(&f, &g)?;
        let via_op = sys.dirichlet_with(&op, &f, &g)?;
        agree_worst = agree_worst.max((edge - via_op).abs() / (1.0 + edge.abs()));
        psd_min = psd_min.min(sys.dirichlet(&f, &f)?);
        let a = sys.inner(&f, &op.apply(&g));
        let b = sys.inner(&op.apply(&f), &g);
        adjoint_worst = adjoint_worst.max((a - b).abs() / (1.0 + a.abs()));
    }
    s.check(
        "main_identity",
        main_worst <= tol.identity,
        format!("worst scaled error {main_worst:.3e}"),
    );
    s.check(
        "edgewise_operator_agreement",
        agree_worst <= tol.identity,
        format!("worst scaled error {agree_worst:.3e}"),
    );
    s.check(
        "dirichlet_nonnegative",
        psd_min >= -tol.slack,
        format!("smallest E(f,f) = {psd_min:.3e}"),
    );
    if model.geometry().is_reversible() {
        s.check(
            "self_adjoint",
            adjoint_worst <= tol.identity,
            format!("worst scaled asymmetry {adjoint_worst:.3e}"),
        );
    } else {
        s.skip("self_adjoint", "P is not reversible");
    }

    let mut lift_worst: f64 = 0.0;
    for _ in 0..tol.draws {
        let phi = random_vector(n, &mut rng);
        let f = sys.lift(&phi)?;
        let lhs = sys.dirichlet(&f, &f)?;
        let rhs = ext.total_mass() * dirichlet_jump(model.geometry(), &phi, &phi)?;
        lift_worst = lift_worst.max(rel(lhs, rhs));
    }
    s.check(
        "lift_identity",
        lift_worst <= tol.identity,
        format!("worst relative error {lift_worst:.3e}"),
    );

    if sys.len() < 2 || n < 2 {
        for name in [
            "minimizer_consistency",
            "mean_field_comparison",
            "rate_scaling",
            "bound_sandwich",
            "congestion_bound",
            "kernel_stochastic",
            "kernel_stationary",
            "semigroup",
            "linf_bound",
        ] {
            s.skip(name, "state space has a single configuration");
        }
        return Ok(finish(sys.len(), s));
    }

    let gap = poincare_system(&sys, budget)?;
    let lambda = gap.value;
    let f = &gap.minimizer;
    let rq = sys.dirichlet(f, f)? / sys.variance(f);
    s.check(
        "minimizer_consistency",
        rel(rq, lambda) <= tol.spectral,
        format!("lambda = {lambda:.17e}, Rayleigh quotient {rq:.17e}"),
    );

    let jump = poincare_jump(model.geometry())?;
    let sys_mf = ZrpSystem::within(&model.mean_field()?, budget)?;
    let mut cmp_min = f64::INFINITY;
    for _ in 0..tol.draws {
        let f = random_vector(sys.len(), &mut rng);
        let e_p = sys.dirichlet(&f, &f)?;
        let e_mf = sys_mf.dirichlet(&f, &f)?;
        cmp_min = cmp_min.min(e_p - jump.value * e_mf);
    }
    let lifted = sys.lift(&jump.minimizer)?;
    let eq = rel(
        sys.dirichlet(&lifted, &lifted)?,
        jump.value * sys_mf.dirichlet(&lifted, &lifted)?,
    );
    s.check(
        "mean_field_comparison",
        cmp_min >= -tol.slack && eq <= tol.spectral,
        format!("min E_P - lambda(P) E_mean_field = {cmp_min:.3e}, equality on lift {eq:.3e}"),
    );

    let doubled = ZrpSystem::within(&model.with_rates(model.rates().scaled(2.0))?, budget)?;
    let lambda2 = poincare_system(&doubled, budget)?.value;
    s.check(
        "rate_scaling",
        rel(lambda2, 2.0 * lambda) <= tol.spectral,
        format!("lambda(2r) = {lambda2:.17e}, 2 lambda(r) = {:.17e}", 2.0 * lambda),
    );

    let table = bounds_table(model, budget)?;
    let mut ok = true;
    let mut parts = Vec::new();
    if let Some(lo) = table.lower_mean_field {
        ok &= lo <= lambda + tol.slack;
        parts.push(format!("mean-field {lo:.6e}"));
    }
    if let Some(lo) = table.lower_increasing_rates {
        ok &= lo <= lambda + tol.slack;
        parts.push(format!("increasing-rates {lo:.6e}"));
    }
    if let Some(up) = table.upper_general {
        ok &= lambda <= up + tol.slack;
        parts.push(format!("general upper {up:.6e}"));
    }
    if let Some(up) = table.upper_unit_rate {
        ok &= lambda <= up + tol.slack;
        parts.push(format!("unit-rate upper {up:.6e}"));
    }
    s.check(
        "bound_sandwich",
        ok,
        format!("lambda = {lambda:.6e}; {}", parts.join(", ")),
    );
    s.check(
        "congestion_bound",
        table.lower_congestion <= jump.value + tol.slack,
        format!("1/kappa = {:.17e}, lambda(P) = {:.17e}", table.lower_congestion, jump.value),
    );

    if sys.len() > budget.kernel_states {
        for name in ["kernel_stochastic", "kernel_stationary", "semigroup", "linf_bound"] {
            s.skip(name, "state space above the kernel budget");
        }
        return Ok(finish(sys.len(), s));
    }
    let t = 1.0 / lambda;
    let k1 = mixing::transition_kernel_within(model, t, budget)?.matrix;
    let k2 = mixing::transition_kernel_within(model, 2.0 * t, budget)?.matrix;
    let row_err = k1
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0f64, f64::max);
    let neg = k1.iter().fold(0.0f64, |a, &v| a.min(v));
    s.check(
        "kernel_stochastic",
        row_err <= tol.identity && neg >= -tol.slack,
        format!("max row-sum error {row_err:.3e}, min entry {neg:.3e}"),
    );
    let d = sys.len();
    let stat_err = (0..d)
        .map(|j| ((0..d).map(|i| probs[i] * k1[(i, j)]).sum::<f64>() - probs[j]).abs())
        .fold(0.0f64, f64::max);
    s.check(
        "kernel_stationary",
        stat_err <= tol.identity,
        format!("max |mu K - mu| = {stat_err:.3e}"),
    );
    let semi = (&k1 * &k1 - &k2).amax();
    s.check(
        "semigroup",
        semi <= 1e-8,
        format!("max |K(t)K(t) - K(2t)| = {semi:.3e}"),
    );
    let t_linf = mixing::mixing_time(model, Distance::Linf, budget)?;
    let bound = mixing::linf_upper_bound(lambda, sys.measure().min_prob())?;
    s.check(
        "linf_bound",
        t_linf <= bound,
        format!("t_mix_linf = {t_linf:.6e}, bound {bound:.6e}"),
    );
    Ok(finish(sys.len(), s))
}

fn finish(states: usize, s: Suite) -> Report {
    let pass = s.props.iter().all(|p| p.status != Status::Fail);
    Report {
        states,
        properties: s.props,
        pass,
    }
}

