//! Generators of the rescaled measure-valued process acting on cylinder
//! functions `H(q) = F(<q_1, f_1>, ..., <q_d, f_d>)`.
//!
//! [`evaluate_generator`] enumerates every transition of the finite-K chain
//! exactly (migrations, coalescences of distinct configurations, and of two
//! blocks sharing a configuration). [`evaluate_limit_generator`] is its
//! first-order (K -> infinity) counterpart.

use super::measure::EmpiricalMeasure;
use crate::model::ModelParams;

type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// `H^{F,f}(q) = F(<q, f>)`.
pub struct CylinderFunction {
    outer: ScalarFn,
    inner: Vec<ScalarFn>,
    gradient: Option<GradientFn>,
}

impl CylinderFunction {
    pub fn new(outer: ScalarFn, inner: Vec<ScalarFn>) -> Self {
        CylinderFunction {
            outer,
            inner,
            gradient: None,
        }
    }

    /// Supplies `grad F` in closed form instead of finite differences.
    pub fn with_gradient(mut self, gradient: GradientFn) -> Self {
        self.gradient = Some(gradient);
        self
    }

    /// `F(x) = x_i` with the same `f` in every colony.
    pub fn projection<G>(d: usize, i: usize, f: G) -> Self
    where
        G: Fn(&[f64]) -> f64 + Clone + Send + Sync + 'static,
    {
        let inner = (0..d).map(|_| Box::new(f.clone()) as ScalarFn).collect();
        CylinderFunction::new(Box::new(move |x: &[f64]| x[i]), inner).with_gradient(Box::new(
            move |x: &[f64]| {
                let mut g = vec![0.0; x.len()];
                g[i] = 1.0;
                g
            },
        ))
    }

    pub fn d(&self) -> usize {
        self.inner.len()
    }

    pub fn outer(&self, x: &[f64]) -> f64 {
        (self.outer)(x)
    }

    pub fn inner(&self, i: usize, x: &[f64]) -> f64 {
        (self.inner[i])(x)
    }

    /// `<q, f> = (<q_i, f_i>)_i`.
    pub fn pairing(&self, q: &[EmpiricalMeasure]) -> Vec<f64> {
        q.iter()
            .zip(&self.inner)
            .map(|(qi, fi)| qi.integrate(|x| fi(x)))
            .collect()
    }

    pub fn value(&self, q: &[EmpiricalMeasure]) -> f64 {
        self.outer(&self.pairing(q))
    }

    /// `grad F` at `x`, central differences with `h = 1e-6 max(1, |x_i|)`
    /// unless a closed form was supplied.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.gradient {
            return g(x);
        }
        let mut y = x.to_vec();
        (0..x.len())
            .map(|i| {
                let h = 1e-6 * x[i].abs().max(1.0);
                y[i] = x[i] + h;
                let up = self.outer(&y);
                y[i] = x[i] - h;
                let down = self.outer(&y);
                y[i] = x[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}

/// Migration and coalescence contributions of a generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorParts {
    pub migration: f64,
    pub coalescence: f64,
}

impl GeneratorParts {
    pub fn total(&self) -> f64 {
        self.migration + self.coalescence
    }
}

struct Atom {
    k: Vec<u32>,
    point: Vec<f64>,
    mass: f64,
}

fn atoms(q: &EmpiricalMeasure) -> Vec<Atom> {
    q.atoms
        .iter()
        .map(|(k, &mass)| Atom {
            k: k.0.clone(),
            point: q.point(k),
            mass,
        })
        .collect()
}

fn merged_point(a: &Atom, b: &Atom, scale: f64) -> Vec<f64> {
    a.k.iter()
        .zip(&b.k)
        .map(|(x, y)| f64::from(x + y) / scale)
        .collect()
}

/// `A^K H(q)` by exact enumeration of the transitions out of `q`.
///
/// `q` must be an empirical measure of the finite chain: every atom mass is a
/// multiple of `1/K` and atoms sit on `N_0^d / s_K`.
pub fn evaluate_generator(q: &[EmpiricalMeasure], h: &CylinderFunction, p: &ModelParams) -> GeneratorParts {
    let d = p.d;
    let k = p.k;
    let x = h.pairing(q);
    let base = h.outer(&x);
    let mut y = x.clone();
    let mut delta = |i: usize, di: f64, j: usize, dj: f64| {
        y[i] += di;
        y[j] += dj;
        let v = h.outer(&y) - base;
        y[i] = x[i];
        y[j] = x[j];
        v
    };

    let mut migration = 0.0;
    let mut coalescence = 0.0;
    for i in 0..d {
        let list = atoms(&q[i]);
        for j in (0..d).filter(|&j| j != i && p.w[i][j] > 0.0) {
            let mut acc = 0.0;
            for a in &list {
                let fi = h.inner(i, &a.point);
                let fj = h.inner(j, &a.point);
                acc += a.mass * delta(i, -fi / k, j, fj / k);
            }
            migration += k * p.w[i][j] * acc;
        }
        if p.alpha[i] == 0.0 {
            continue;
        }
        let fvals: Vec<f64> = list.iter().map(|a| h.inner(i, &a.point)).collect();
        let mut distinct = 0.0;
        for (a_idx, a) in list.iter().enumerate() {
            for (b_off, b) in list[a_idx + 1..].iter().enumerate() {
                let b_idx = a_idx + 1 + b_off;
                let merged = h.inner(i, &merged_point(a, b, q[i].scale));
                let change = (merged - fvals[a_idx] - fvals[b_idx]) / k;
                distinct += a.mass * b.mass * delta(i, change, i, 0.0);
            }
        }
        // Ordered pairs c1 != c2 with prefactor K/2 equal unordered pairs times K.
        coalescence += p.alpha[i] * k * distinct;
        let mut same = 0.0;
        for (a_idx, a) in list.iter().enumerate() {
            let merged = h.inner(i, &merged_point(a, a, q[i].scale));
            let change = (merged - 2.0 * fvals[a_idx]) / k;
            same += a.mass * (k * a.mass - 1.0) * delta(i, change, i, 0.0);
        }
        coalescence += 0.5 * p.alpha[i] * same;
    }
    GeneratorParts {
        migration,
        coalescence,
    }
}

/// `A-bar H(q)`: the generator of the deterministic coagulation flow.
pub fn evaluate_limit_generator(
    q: &[EmpiricalMeasure],
    h: &CylinderFunction,
    p: &ModelParams,
) -> GeneratorParts {
    let d = p.d;
    let x = h.pairing(q);
    let grad = h.gradient(&x);

    let mut migration = 0.0;
    for i in 0..d {
        for j in (0..d).filter(|&j| j != i && p.w[i][j] > 0.0) {
            let fj_qi = q[i].integrate(|y| h.inner(j, y));
            migration += p.w[i][j] * (fj_qi * grad[j] - x[i] * grad[i]);
        }
    }

    let mut coalescence = 0.0;
    for i in 0..d {
        if p.alpha[i] == 0.0 {
            continue;
        }
        let list = atoms(&q[i]);
        let mut conv = 0.0;
        for a in &list {
            for b in &list {
                conv += a.mass * b.mass * h.inner(i, &merged_point(a, b, q[i].scale));
            }
        }
        let mass = q[i].total_mass();
        coalescence += 0.5 * p.alpha[i] * (conv - 2.0 * mass * x[i]) * grad[i];
    }
    GeneratorParts {
        migration,
        coalescence,
    }
}
