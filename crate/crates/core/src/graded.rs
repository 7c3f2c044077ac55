//! Truncated tensor products `A × C^m` as a family of finite atom spaces.
//!
//! An atom of level `m` is `(a, c₀, …, c_{m-1})`, encoded in mixed radix with
//! the state least significant: `x = a + d·(c₀ + |C|·(c₁ + …))`. Dropping the
//! last noise coordinate is then `x mod size(m-1)`, which is the point map
//! dual to embedding level `m-1` functions as cylinder functions.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::finprob::{FinSpace, Partition};
use crate::rational::Rational;

pub const DEFAULT_ATOM_BUDGET: u128 = 2_000_000;

#[derive(Debug)]
pub struct GradedSpace {
    base: FinSpace,
    noise: FinSpace,
    max_level: usize,
    sizes: Vec<usize>,
    spaces: Vec<OnceLock<FinSpace>>,
}

impl Clone for GradedSpace {
    fn clone(&self) -> Self {
        GradedSpace::new(self.base.clone(), self.noise.clone(), self.max_level, u128::MAX)
            .expect("already validated")
    }
}

impl GradedSpace {
    /// Levels `0..=max_level`; fails when the top level exceeds `budget` atoms.
    pub fn new(base: FinSpace, noise: FinSpace, max_level: usize, budget: u128) -> Result<Self> {
        let (d, c) = (base.len() as u128, noise.len() as u128);
        let mut required = d;
        for _ in 0..max_level {
            required = required.saturating_mul(c);
        }
        if required > budget || required > usize::MAX as u128 {
            return Err(Error::Budget { required, budget });
        }
        let mut sizes = vec![base.len()];
        for m in 0..max_level {
            sizes.push(sizes[m] * noise.len());
        }
        let spaces = (0..=max_level).map(|_| OnceLock::new()).collect();
        Ok(GradedSpace { base, noise, max_level, sizes, spaces })
    }

    pub fn base(&self) -> &FinSpace {
        &self.base
    }

    pub fn noise(&self) -> &FinSpace {
        &self.noise
    }

    pub fn d(&self) -> usize {
        self.base.len()
    }

    pub fn c(&self) -> usize {
        self.noise.len()
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn size(&self, m: usize) -> usize {
        self.sizes[m]
    }

    /// Level `m` with product weights, built on first use.
    pub fn level(&self, m: usize) -> &FinSpace {
        self.spaces[m].get_or_init(|| {
            if m == 0 {
                return self.base.clone();
            }
            let prev = self.level(m - 1).weights();
            let mut w: Vec<Rational> = Vec::with_capacity(self.sizes[m]);
            for lc in self.noise.weights() {
                w.extend(prev.iter().map(|p| p * lc));
            }
            FinSpace::new(w).expect("product of faithful states")
        })
    }

    pub fn state(&self, x: usize) -> usize {
        x % self.d()
    }

    /// Noise coordinate `c_i` of an atom (any level above `i`).
    pub fn coord(&self, x: usize, i: usize) -> usize {
        (x / self.sizes[i]) % self.c()
    }

    pub fn encode(&self, a: usize, cs: &[usize]) -> usize {
        let mut x = a;
        for (i, &c) in cs.iter().enumerate() {
            x += self.sizes[i] * c;
        }
        x
    }

    pub fn decode(&self, m: usize, x: usize) -> (usize, Vec<usize>) {
        (self.state(x), (0..m).map(|i| self.coord(x, i)).collect())
    }

    /// The level-`j` truncation of a level-`m` atom, `j ≤ m`.
    pub fn truncate(&self, x: usize, j: usize) -> usize {
        x % self.sizes[j]
    }

    /// Partition of level `m` generated by the first `j` levels' coordinates.
    pub fn cylinder(&self, j: usize, m: usize) -> Partition {
        Partition::from_keys((0..self.sizes[m]).map(|x| x % self.sizes[j]))
    }

    /// Cylinder extension of a level-`j` partition to level `m ≥ j`.
    pub fn extend(&self, p: &Partition, j: usize, m: usize) -> Partition {
        assert_eq!(p.len(), self.sizes[j]);
        let n = self.sizes[j];
        p.pullback(self.sizes[m], |x| x % n)
    }

    /// The restriction of a level-`m` partition to level `j`, assuming it is
    /// measurable there.
    pub fn restrict(&self, p: &Partition, j: usize) -> Partition {
        Partition::from_keys(p.labels()[..self.sizes[j]].iter().copied())
    }

    /// Least level at which a level-`m` partition is measurable.
    pub fn measurable_level(&self, p: &Partition, m: usize) -> usize {
        (0..m)
            .find(|&j| self.extend(&self.restrict(p, j), j, m) == *p)
            .unwrap_or(m)
    }

    /// Partition of level `m` atoms by the base state.
    pub fn state_partition(&self, m: usize) -> Partition {
        Partition::from_keys((0..self.sizes[m]).map(|x| self.state(x)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn space() -> GradedSpace {
        let a = FinSpace::new(vec![rat(1, 3), rat(2, 3)]).unwrap();
        let c = FinSpace::new(vec![rat(1, 4), rat(1, 4), rat(1, 2)]).unwrap();
        GradedSpace::new(a, c, 3, DEFAULT_ATOM_BUDGET).unwrap()
    }

    #[test]
    fn encoding_round_trips() {
        let g = space();
        assert_eq!(g.size(3), 54);
        for x in 0..g.size(3) {
            let (a, cs) = g.decode(3, x);
            assert_eq!(g.encode(a, &cs), x);
        }
        let x = g.encode(1, &[2, 0, 1]);
        assert_eq!(g.truncate(x, 1), g.encode(1, &[2]));
    }

    #[test]
    fn level_weights_are_products() {
        let g = space();
        let x = g.encode(1, &[2, 0]);
        assert_eq!(g.level(2).weight(x), &(rat(2, 3) * rat(1, 2) * rat(1, 4)));
        for m in 0..=3 {
            assert_eq!(g.level(m).len(), g.size(m));
        }
    }

    #[test]
    fn budget_refusal() {
        let a = FinSpace::uniform(4);
        let c = FinSpace::uniform(13);
        assert!(matches!(GradedSpace::new(a, c, 6, DEFAULT_ATOM_BUDGET), Err(Error::Budget { .. })));
    }

    #[test]
    fn measurable_levels() {
        let g = space();
        assert_eq!(g.measurable_level(&g.cylinder(1, 3), 3), 1);
        assert_eq!(g.measurable_level(&g.state_partition(3), 3), 0);
        assert_eq!(g.measurable_level(&Partition::discrete(54), 3), 3);
        let p = g.cylinder(2, 3);
        assert_eq!(g.extend(&g.restrict(&p, 2), 2, 3), p);
    }
}
