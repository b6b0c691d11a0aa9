//! Rescaled empirical measures of the coalescent state.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{CoalescentState, Configuration};
use crate::model::ModelParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("lambda must be strictly positive componentwise")]
    NonPositiveLambda,
}

/// Finite atomic measure on the lattice `N_0^d / scale`.
///
/// Atoms are keyed by their integer configuration `k`; the atom sits at the
/// point `k / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub scale: f64,
    pub atoms: BTreeMap<Configuration, f64>,
}

impl EmpiricalMeasure {
    pub fn new(scale: f64) -> Self {
        EmpiricalMeasure {
            scale,
            atoms: BTreeMap::new(),
        }
    }

    pub fn add_mass(&mut self, k: Configuration, mass: f64) {
        *self.atoms.entry(k).or_insert(0.0) += mass;
    }

    /// Location of the atom keyed by `k`.
    pub fn point(&self, k: &Configuration) -> Vec<f64> {
        k.0.iter().map(|&x| f64::from(x) / self.scale).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.values().sum()
    }

    /// `<m, f>`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.atoms
            .iter()
            .map(|(k, &mass)| f(&self.point(k)) * mass)
            .sum()
    }

    /// `<m, <lambda, .>>`.
    pub fn linear_functional(&self, lambda: &[f64]) -> f64 {
        self.integrate(|x| dot(lambda, x))
    }

    /// `<m, 1 - exp(-<lambda, .>)>`.
    pub fn laplace_functional(&self, lambda: &[f64]) -> Result<f64, MeasureError> {
        if lambda.iter().any(|&l| !(l > 0.0)) {
            return Err(MeasureError::NonPositiveLambda);
        }
        Ok(self.integrate(|x| -(-dot(lambda, x)).exp_m1()))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `mu_i^K`: mass `1/K` at `k / s_K` for every block of colony `i`.
pub fn to_empirical(s: &CoalescentState, p: &ModelParams) -> Vec<EmpiricalMeasure> {
    let unit = 1.0 / p.k;
    s.colonies
        .iter()
        .map(|colony| EmpiricalMeasure {
            scale: p.s_k,
            atoms: colony
                .counts()
                .into_iter()
                .map(|(k, n)| (k, n as f64 * unit))
                .collect(),
        })
        .collect()
}

/// Per-block split of colony `i` into its colour-`i` part (mono-chromatic)
/// and its foreign-colour part (poly-chromatic).
///
/// Both parts use the same scale `s_K` as [`to_empirical`], so
/// `<mu_i, <lambda,.>> = <mono_i, <lambda,.>> + <poly_i, <lambda,.>>`.
pub fn mono_poly_split(
    s: &CoalescentState,
    p: &ModelParams,
) -> (Vec<EmpiricalMeasure>, Vec<EmpiricalMeasure>) {
    let unit = 1.0 / p.k;
    let mut mono = Vec::with_capacity(p.d);
    let mut poly = Vec::with_capacity(p.d);
    for (i, colony) in s.colonies.iter().enumerate() {
        let mut m = EmpiricalMeasure::new(p.s_k);
        let mut q = EmpiricalMeasure::new(p.s_k);
        for (k, n) in colony.counts() {
            let mut home = vec![0; p.d];
            home[i] = k.0[i];
            let mut away = k.0.clone();
            away[i] = 0;
            m.add_mass(Configuration(home), n as f64 * unit);
            q.add_mass(Configuration(away), n as f64 * unit);
        }
        mono.push(m);
        poly.push(q);
    }
    (mono, poly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalescent::init_state;
    use crate::model::{ModelSpec, Regime};
    use crate::rng::replicate_rng;
    use proptest::prelude::*;

    fn atom(k: &[u32], mass: f64, scale: f64) -> EmpiricalMeasure {
        let mut m = EmpiricalMeasure::new(scale);
        m.add_mass(Configuration(k.to_vec()), mass);
        m
    }

    fn params(regime: Regime, k: f64, l0: &[u64]) -> ModelParams {
        let d = l0.len();
        ModelSpec {
            d,
            w: (0..d).map(|i| (0..d).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect(),
            alpha: vec![1.0; d],
            k,
            n_k: l0.iter().sum(),
            l0: l0.to_vec(),
            regime,
            c: None,
            beta: None,
            seed: None,
        }
        .derive()
        .unwrap()
    }

    #[test]
    fn empirical_critical_and_empty() {
        let p = params(Regime::Critical, 10.0, &[3, 0]);
        let mu = to_empirical(&init_state(&p), &p);
        assert_eq!(mu[0].atoms.len(), 1);
        assert!((mu[0].atoms[&Configuration(vec![1, 0])] - 0.3).abs() < 1e-15);
        assert_eq!(mu[0].point(&Configuration(vec![1, 0])), vec![1.0, 0.0]);
        assert!(mu[1].atoms.is_empty());
        assert_eq!(mu[1].total_mass(), 0.0);
    }

    #[test]
    fn empirical_large_regime_rescales() {
        // N_K = 40, K = 10 -> s_K = 4; block (8,0) sits at (2,0) with mass 0.1.
        let p = params(Regime::Large, 10.0, &[40, 0]);
        assert_eq!(p.s_k, 4.0);
        let mut s = init_state(&p);
        let c = &mut s.colonies[0];
        while c.block_count() > 0 {
            c.swap_remove(0);
        }
        c.push(&[8, 0]);
        let mu = to_empirical(&s, &p);
        let (k, mass) = mu[0].atoms.iter().next().unwrap();
        assert_eq!(mu[0].point(k), vec![2.0, 0.0]);
        assert!((mass - 0.1).abs() < 1e-15);
    }

    #[test]
    fn integrate_examples() {
        assert_eq!(atom(&[1, 0], 0.5, 1.0).integrate(|_| 1.0), 0.5);
        let mut m = atom(&[1, 0], 0.2, 1.0);
        m.add_mass(Configuration(vec![2, 1]), 0.1);
        let sq = |x: &[f64]| x.iter().sum::<f64>().powi(2);
        assert!((m.integrate(sq) - 1.1).abs() < 1e-12);
        assert_eq!(EmpiricalMeasure::new(1.0).integrate(sq), 0.0);
    }

    #[test]
    fn laplace_examples() {
        let m = atom(&[1, 0], 0.5, 1.0);
        let v = m.laplace_functional(&[std::f64::consts::LN_2, 1.0]).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        assert_eq!(EmpiricalMeasure::new(1.0).laplace_functional(&[1.0, 2.0]).unwrap(), 0.0);
        assert!(m.laplace_functional(&[1e-9, 1e-9]).unwrap() > 0.0);
        assert_eq!(m.laplace_functional(&[0.0, 1.0]), Err(MeasureError::NonPositiveLambda));
    }

    #[test]
    fn mono_poly_examples() {
        let p = params(Regime::Critical, 10.0, &[2, 1]);
        let mut s = init_state(&p);
        s.colonies[0].swap_remove(0);
        s.colonies[0].swap_remove(0);
        s.colonies[0].push(&[2, 1]);
        s.colonies[1].swap_remove(0);
        s.colonies[1].push(&[0, 1]);
        let (mono, poly) = mono_poly_split(&s, &p);
        assert!(mono[0].atoms.contains_key(&Configuration(vec![2, 0])));
        assert!(poly[0].atoms.contains_key(&Configuration(vec![0, 1])));
        assert!(mono[1].atoms.contains_key(&Configuration(vec![0, 1])));
        assert!((poly[1].atoms[&Configuration(vec![0, 0])] - 0.1).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn split_is_linear_decomposition(seed in 0u64..1000, t in 0.01f64..2.0, l1 in 1.0f64..5.0) {
            let p = params(Regime::Large, 8.0, &[20, 12]);
            let mut s = init_state(&p);
            s.simulate_until(&p, t, &mut replicate_rng(seed, 0));
            let mu = to_empirical(&s, &p);
            let (mono, poly) = mono_poly_split(&s, &p);
            let lambda = [l1, 0.7];
            for i in 0..2 {
                let whole = mu[i].linear_functional(&lambda);
                let parts = mono[i].linear_functional(&lambda) + poly[i].linear_functional(&lambda);
                prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1.0));
                prop_assert!((mu[i].total_mass() - s.colonies[i].block_count() as f64 / p.k).abs() < 1e-12);
            }
        }
    }
}
