//! Configuration spaces of `m` indistinguishable particles on `n` sites.
//!
//! States are weak compositions of `m` into `n` parts. They are indexed in
//! colexicographic order (last site most significant), so that
//! `(m, 0, .., 0)` has index 0 and `(0, .., 0, m)` has the largest index.
//! Rank and unrank use a single table of counts `C(p + k - 1, k - 1)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, ZrpError};

/// Occupation vector with a cached particle total.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Config {
    occupations: Vec<usize>,
    total: usize,
}

impl Config {
    pub fn new(occupations: Vec<usize>) -> Self {
        let total = occupations.iter().sum();
        Config { occupations, total }
    }

    /// `count` particles on `site`, nothing elsewhere.
    pub fn concentrated(n: usize, site: usize, count: usize) -> Self {
        let mut occupations = vec![0; n];
        occupations[site] = count;
        Config {
            occupations,
            total: count,
        }
    }

    pub fn occupations(&self) -> &[usize] {
        &self.occupations
    }

    pub fn sites(&self) -> usize {
        self.occupations.len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn get(&self, site: usize) -> usize {
        self.occupations[site]
    }

    /// `self + δ_site`.
    pub fn with_added(&self, site: usize) -> Config {
        let mut c = self.clone();
        c.occupations[site] += 1;
        c.total += 1;
        c
    }

    /// `self + δ_to − δ_from`, or `None` if `from` is empty.
    pub fn moved(&self, from: usize, to: usize) -> Option<Config> {
        if self.occupations[from] == 0 {
            return None;
        }
        let mut c = self.clone();
        c.occupations[from] -= 1;
        c.occupations[to] += 1;
        Some(c)
    }

    pub(crate) fn occupations_mut(&mut self) -> &mut [usize] {
        &mut self.occupations
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.occupations.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigIndex(pub usize);

/// Number of weak compositions of `m` into `n` parts, `C(n + m − 1, m)`.
pub fn state_count(n: usize, m: usize) -> Result<u64> {
    if n == 0 {
        return Err(ZrpError::InvalidConfig("need at least one site".into()));
    }
    // C(n+m-1, m) = prod_{i=1}^{m} (n-1+i)/i, exact at each step.
    let mut acc: u128 = 1;
    for i in 1..=m as u128 {
        acc = acc
            .checked_mul(n as u128 - 1 + i)
            .ok_or_else(|| overflow(n, m))?
            / i;
        if acc > u64::MAX as u128 {
            return Err(overflow(n, m));
        }
    }
    Ok(acc as u64)
}

fn overflow(n: usize, m: usize) -> ZrpError {
    ZrpError::SizeOverflow(format!("C({} + {} - 1, {}) does not fit in 64 bits", n, m, m))
}

/// Indexed state space Ω for fixed `(n, m)`.
#[derive(Clone, Debug)]
pub struct ConfigSpace {
    n: usize,
    m: usize,
    size: usize,
    // counts[k * (m + 1) + p] = number of configs of p particles on k sites
    counts: Arc<[usize]>,
}

impl ConfigSpace {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        let size = state_count(n, m)?;
        let size = usize::try_from(size).map_err(|_| overflow(n, m))?;
        let stride = m + 1;
        let mut counts = vec![0usize; (n + 1) * stride];
        for k in 1..=n {
            for p in 0..=m {
                let v = if k == 1 || p == 0 {
                    1
                } else {
                    counts[(k - 1) * stride + p]
                        .checked_add(counts[k * stride + p - 1])
                        .ok_or_else(|| overflow(n, m))?
                };
                counts[k * stride + p] = v;
            }
        }
        debug_assert_eq!(counts[n * stride + m], size);
        Ok(ConfigSpace {
            n,
            m,
            size,
            counts: counts.into(),
        })
    }

    pub fn sites(&self) -> usize {
        self.n
    }

    pub fn particles(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    #[inline]
    fn count(&self, sites: usize, particles: usize) -> usize {
        self.counts[sites * (self.m + 1) + particles]
    }

    pub fn validate(&self, config: &Config) -> Result<()> {
        if config.sites() != self.n {
            return Err(ZrpError::InvalidConfig(format!(
                "expected {} sites, got {}",
                self.n,
                config.sites()
            )));
        }
        let sum: usize = config.occupations.iter().sum();
        if sum != self.m || config.total != self.m {
            return Err(ZrpError::InvalidConfig(format!(
                "expected {} particles, got {}",
                self.m, sum
            )));
        }
        Ok(())
    }

    pub fn rank(&self, config: &Config) -> Result<ConfigIndex> {
        self.validate(config)?;
        Ok(self.rank_unchecked(config.occupations()))
    }

    /// Rank of an occupation vector assumed valid for this space.
    #[inline]
    pub fn rank_unchecked(&self, occ: &[usize]) -> ConfigIndex {
        let mut remaining = self.m;
        let mut idx = 0;
        for j in (1..self.n).rev() {
            let k = occ[j];
            // configs on sites 0..=j with a smaller value at j
            idx += self.count(j + 1, remaining) - self.count(j + 1, remaining - k);
            remaining -= k;
        }
        ConfigIndex(idx)
    }

    pub fn unrank(&self, index: ConfigIndex) -> Result<Config> {
        if index.0 >= self.size {
            return Err(ZrpError::InvalidConfig(format!(
                "index {} out of range for {} states",
                index.0, self.size
            )));
        }
        let mut occ = vec![0; self.n];
        self.unrank_into(index, &mut occ);
        Ok(Config {
            occupations: occ,
            total: self.m,
        })
    }

    pub(crate) fn unrank_into(&self, index: ConfigIndex, occ: &mut [usize]) {
        let mut rest = index.0;
        let mut remaining = self.m;
        for j in (1..self.n).rev() {
            let full = self.count(j + 1, remaining);
            let mut k = 0;
            while k < remaining && full - self.count(j + 1, remaining - k - 1) <= rest {
                k += 1;
            }
            rest -= full - self.count(j + 1, remaining - k);
            occ[j] = k;
            remaining -= k;
        }
        occ[0] = remaining;
    }

    /// All configurations in index order.
    pub fn iter(&self) -> impl Iterator<Item = Config> + '_ {
        (0..self.size).map(move |i| {
            let mut occ = vec![0; self.n];
            self.unrank_into(ConfigIndex(i), &mut occ);
            Config {
                occupations: occ,
                total: self.m,
            }
        })
    }
}

/// Moves `η → η + δ_y − δ_x` permitted by `support`, in support order.
pub fn neighbors(config: &Config, support: &[(usize, usize)]) -> Vec<(usize, usize, Config)> {
    support
        .iter()
        .filter(|&&(x, y)| x != y)
        .filter_map(|&(x, y)| config.moved(x, y).map(|c| (x, y, c)))
        .collect()
}
