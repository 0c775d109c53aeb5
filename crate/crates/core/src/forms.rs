//! Generator assembly and Dirichlet forms.
//!
//! The generator acts as
//! `(Lf)(η) = Σ_{x,y} r(x, η(x)) P(x, y) (f(η + δ_y − δ_x) − f(η))`.
//! Self-jumps cancel and are never stored. Off-diagonal rates are kept
//! row-sparse and the diagonal is always recomputed as minus the row sum,
//! so constants are annihilated exactly.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::configspace::{Config, ConfigIndex, ConfigSpace};
use crate::error::{Result, ZrpError};
use crate::model::{self, JumpMatrix, Measure, ZrpModel};
use crate::Budget;

/// Off-diagonal part of a Markov generator; the diagonal is implied.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseOperator {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        SparseOperator { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Total exit rate of state `i`, i.e. `−L(i, i)`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, r)| r).sum()
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.dim()).map(|i| self.exit_rate(i)).fold(0.0, f64::max)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `L f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.rows
            .par_iter()
            .enumerate()
            .map(|(i, row)| row.iter().map(|&(j, r)| r * (f[j] - f[i])).sum())
            .collect()
    }

    /// `vᵀ L` as a column vector.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (i, row) in self.rows.iter().enumerate() {
            let mut exit = 0.0;
            for &(j, r) in row {
                out[j] += v[i] * r;
                exit += r;
            }
            out[i] -= v[i] * exit;
        }
        out
    }

    /// Coordinate triplets `(row, col, value)` including the diagonal.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz() + self.dim());
        for (i, row) in self.rows.iter().enumerate() {
            let mut entries: Vec<(usize, f64)> = row.clone();
            entries.push((i, -self.exit_rate(i)));
            entries.sort_by_key(|&(j, _)| j);
            out.extend(entries.into_iter().map(|(j, v)| (i, j, v)));
        }
        out
    }

    /// Writes one `row col value` line per entry.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:.17e}")?;
        }
        Ok(())
    }
}

pub fn generator(model: &ZrpModel) -> Result<SparseOperator> {
    generator_within(model, &Budget::default())
}

pub fn generator_within(model: &ZrpModel, budget: &Budget) -> Result<SparseOperator> {
    let space = model.space_within(budget.exact_states)?;
    Ok(assemble(model, &space))
}

fn assemble(model: &ZrpModel, space: &ConfigSpace) -> SparseOperator {
    let support = model.geometry().support();
    let p = model.geometry();
    let rows = (0..space.len())
        .into_par_iter()
        .map_init(
            || vec![0usize; space.sites()],
            |occ, i| {
                space.unrank_into(ConfigIndex(i), occ);
                let mut row = Vec::new();
                for &(x, y) in &support {
                    let k = occ[x];
                    if k == 0 {
                        continue;
                    }
                    let rate = model.rate(x, k) * p.get(x, y);
                    occ[x] -= 1;
                    occ[y] += 1;
                    row.push((space.rank_unchecked(occ).0, rate));
                    occ[y] -= 1;
                    occ[x] += 1;
                }
                row
            },
        )
        .collect();
    SparseOperator { rows }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(ZrpError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `E_P(φ, ψ) = ⟨φ, (I − P)ψ⟩_π`.
pub fn dirichlet_jump(p: &JumpMatrix, phi: &[f64], psi: &[f64]) -> Result<f64> {
    let n = p.sites();
    check_len(n, phi.len())?;
    check_len(n, psi.len())?;
    let pi = p.stationary();
    let mut acc = 0.0;
    for x in 0..n {
        let mut drift = 0.0;
        for y in 0..n {
            let pxy = p.get(x, y);
            if pxy > 0.0 && y != x {
                drift += pxy * (psi[x] - psi[y]);
            }
        }
        acc += pi[x] * phi[x] * drift;
    }
    Ok(acc)
}

/// The `μ`-weighted context for Dirichlet-form evaluations on one model.
#[derive(Clone, Debug)]
pub struct ZrpSystem {
    model: ZrpModel,
    space: ConfigSpace,
    measure: Measure,
    probs: Vec<f64>,
}

impl ZrpSystem {
    pub fn new(model: &ZrpModel) -> Result<Self> {
        Self::within(model, &Budget::default())
    }

    pub fn within(model: &ZrpModel, budget: &Budget) -> Result<Self> {
        let space = model.space_within(budget.exact_states)?;
        let measure = model::stationary_measure_within(model, budget)?;
        let probs = measure.probabilities();
        Ok(ZrpSystem {
            model: model.clone(),
            space,
            measure,
            probs,
        })
    }

    pub fn model(&self) -> &ZrpModel {
        &self.model
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    /// μ(η) in index order.
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn generator(&self) -> SparseOperator {
        assemble(&self.model, &self.space)
    }

    /// μ on Ω̂ with the Ω normalizer.
    pub fn extended_measure(&self) -> Result<Measure> {
        model::extended_measure_with(&self.model, self.measure.log_z)
    }

    /// `−⟨f, Lg⟩_μ`, summed move by move without assembling `L`.
    pub fn dirichlet(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        check_len(self.len(), f.len())?;
        check_len(self.len(), g.len())?;
        let support = self.model.geometry().support();
        let p = self.model.geometry();
        let total = (0..self.len())
            .into_par_iter()
            .map_init(
                || vec![0usize; self.space.sites()],
                |occ, i| {
                    self.space.unrank_into(ConfigIndex(i), occ);
                    let mut lg = 0.0;
                    for &(x, y) in &support {
                        let k = occ[x];
                        if k == 0 {
                            continue;
                        }
                        let rate = self.model.rate(x, k) * p.get(x, y);
                        occ[x] -= 1;
                        occ[y] += 1;
                        let j = self.space.rank_unchecked(occ).0;
                        occ[y] -= 1;
                        occ[x] += 1;
                        lg += rate * (g[j] - g[i]);
                    }
                    -self.probs[i] * f[i] * lg
                },
            )
            .collect::<Vec<f64>>();
        Ok(total.iter().sum())
    }

    /// `−⟨f, Lg⟩_μ` using an assembled operator.
    pub fn dirichlet_with(&self, op: &SparseOperator, f: &[f64], g: &[f64]) -> Result<f64> {
        check_len(self.len(), op.dim())?;
        check_len(self.len(), f.len())?;
        check_len(self.len(), g.len())?;
        let lg = op.apply(g);
        Ok(-(0..self.len())
            .map(|i| self.probs[i] * f[i] * lg[i])
            .sum::<f64>())
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        (0..self.len()).map(|i| self.probs[i] * f[i] * g[i]).sum()
    }

    pub fn variance(&self, f: &[f64]) -> f64 {
        let mean: f64 = (0..self.len()).map(|i| self.probs[i] * f[i]).sum();
        (0..self.len())
            .map(|i| self.probs[i] * (f[i] - mean).powi(2))
            .sum()
    }

    /// `x ↦ f(ξ + δ_x)`.
    pub fn restrict(&self, f: &[f64], xi: &Config) -> Result<Vec<f64>> {
        restrict(&self.space, f, xi)
    }

    /// Both sides of `E_zrp(f, g) = Σ_ξ μ(ξ) E_P(f_ξ, g_ξ)`.
    pub fn main_identity_sides(&self, f: &[f64], g: &[f64]) -> Result<(f64, f64)> {
        let lhs = self.dirichlet(f, g)?;
        let reduced = self.model.reduced_space()?;
        let ext = self.extended_measure()?;
        let p = self.model.geometry();
        let mut rhs = 0.0;
        for (i, xi) in reduced.iter().enumerate() {
            let fx = self.restrict(f, &xi)?;
            let gx = self.restrict(g, &xi)?;
            rhs += ext.prob(ConfigIndex(i)) * dirichlet_jump(p, &fx, &gx)?;
        }
        Ok((lhs, rhs))
    }

    pub fn lift(&self, phi: &[f64]) -> Result<Vec<f64>> {
        check_len(self.model.sites(), phi.len())?;
        Ok(lift_on(&self.space, phi))
    }
}

/// `−⟨f, Lg⟩_μ` for a one-off query.
pub fn dirichlet_zrp(model: &ZrpModel, f: &[f64], g: &[f64]) -> Result<f64> {
    ZrpSystem::new(model)?.dirichlet(f, g)
}

pub fn main_identity_sides(model: &ZrpModel, f: &[f64], g: &[f64]) -> Result<(f64, f64)> {
    ZrpSystem::new(model)?.main_identity_sides(f, g)
}

/// `f_ξ(x) = f(ξ + δ_x)` for `ξ` with one particle fewer than `space`.
pub fn restrict(space: &ConfigSpace, f: &[f64], xi: &Config) -> Result<Vec<f64>> {
    check_len(space.len(), f.len())?;
    if xi.sites() != space.sites() || xi.total() + 1 != space.particles() {
        return Err(ZrpError::InvalidConfig(format!(
            "restriction point {xi} must hold {} particles on {} sites",
            space.particles().saturating_sub(1),
            space.sites()
        )));
    }
    let mut occ = xi.clone();
    Ok((0..space.sites())
        .map(|x| {
            occ.occupations_mut()[x] += 1;
            let v = f[space.rank_unchecked(occ.occupations()).0];
            occ.occupations_mut()[x] -= 1;
            v
        })
        .collect())
}

/// The linear statistic `η ↦ Σ_x φ(x) η(x)` on Ω(n, m).
pub fn lift(phi: &[f64], n: usize, m: usize) -> Result<Vec<f64>> {
    check_len(n, phi.len())?;
    Ok(lift_on(&ConfigSpace::new(n, m)?, phi))
}

fn lift_on(space: &ConfigSpace, phi: &[f64]) -> Vec<f64> {
    space
        .iter()
        .map(|c| {
            c.occupations()
                .iter()
                .zip(phi)
                .map(|(&k, &p)| k as f64 * p)
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mean_field, RateSpec};

    fn swap() -> JumpMatrix {
        JumpMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn dense(op: &SparseOperator) -> Vec<Vec<f64>> {
        let n = op.dim();
        let mut m = vec![vec![0.0; n]; n];
        for (i, j, v) in op.triplets() {
            m[i][j] += v;
        }
        m
    }

    #[test]
    fn swap_generator() {
        let model = ZrpModel::new(swap(), RateSpec::Unit, 2).unwrap();
        let l = dense(&generator(&model).unwrap());
        let expected = [[-1.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l[i][j], expected[i][j]);
            }
        }
    }

    #[test]
    fn single_particle_is_the_jump_chain() {
        let p = JumpMatrix::from_rows(&[
            vec![0.2, 0.5, 0.3],
            vec![0.1, 0.1, 0.8],
            vec![0.6, 0.4, 0.0],
        ])
        .unwrap();
        let model = ZrpModel::new(p.clone(), RateSpec::Unit, 1).unwrap();
        let l = dense(&generator(&model).unwrap());
        // Ω(3,1) in colex order is δ_0, δ_1, δ_2
        for x in 0..3 {
            for y in 0..3 {
                let expected = p.get(x, y) - if x == y { 1.0 } else { 0.0 };
                assert!((l[x][y] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let model = ZrpModel::new(JumpMatrix::cycle(10).unwrap(), RateSpec::Unit, 10).unwrap();
        let tight = Budget {
            exact_states: 100,
            ..Budget::default()
        };
        assert!(matches!(
            generator_within(&model, &tight),
            Err(ZrpError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn micro_instance_forms() {
        let model = ZrpModel::new(swap(), RateSpec::Unit, 2).unwrap();
        let sys = ZrpSystem::new(&model).unwrap();
        let f = [2.0, 0.0, -2.0];
        assert!((sys.dirichlet(&f, &f).unwrap() - 8.0 / 3.0).abs() < 1e-14);
        let c = [5.0; 3];
        assert_eq!(sys.dirichlet(&c, &f).unwrap(), 0.0);
        let (l, r) = sys.main_identity_sides(&f, &f).unwrap();
        assert!((l - 8.0 / 3.0).abs() < 1e-14 && (r - 8.0 / 3.0).abs() < 1e-14);
        assert_eq!(sys.main_identity_sides(&c, &c).unwrap(), (0.0, 0.0));
        assert_eq!(sys.lift(&[1.0, -1.0]).unwrap(), vec![2.0, 0.0, -2.0]);
        assert_eq!(lift(&[3.0, 3.0], 2, 2).unwrap(), vec![6.0; 3]);
    }

    #[test]
    fn jump_form_examples() {
        assert_eq!(dirichlet_jump(&swap(), &[1.0, -1.0], &[1.0, -1.0]).unwrap(), 2.0);
        let k = mean_field(&[0.5, 0.5]).unwrap();
        assert_eq!(dirichlet_jump(&k, &[1.0, -1.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(dirichlet_jump(&swap(), &[2.0, 2.0], &[2.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(
            dirichlet_jump(&swap(), &[1.0], &[1.0, 2.0]),
            Err(ZrpError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn restrict_examples() {
        let space = ConfigSpace::new(2, 2).unwrap();
        let f = [2.0, 0.0, -2.0];
        assert_eq!(restrict(&space, &f, &Config::new(vec![1, 0])).unwrap(), vec![2.0, 0.0]);
        assert_eq!(restrict(&space, &f, &Config::new(vec![0, 1])).unwrap(), vec![0.0, -2.0]);
        assert!(restrict(&space, &f, &Config::new(vec![1, 1])).is_err());
        // restriction of a lift is a shifted copy of φ
        let space = ConfigSpace::new(3, 3).unwrap();
        let phi = [0.3, -1.2, 2.5];
        let f = lift_on(&space, &phi);
        for xi in ConfigSpace::new(3, 2).unwrap().iter() {
            let base: f64 = xi.occupations().iter().zip(&phi).map(|(&k, p)| k as f64 * p).sum();
            let fx = restrict(&space, &f, &xi).unwrap();
            for x in 0..3 {
                assert!((fx[x] - (base + phi[x])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn triplet_export() {
        let model = ZrpModel::new(swap(), RateSpec::Unit, 2).unwrap();
        let mut buf = Vec::new();
        generator(&model).unwrap().write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("0 0 -1.00000000000000000e0\n0 1 1.00000000000000000e0\n"));
    }
}
