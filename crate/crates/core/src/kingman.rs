//! Comparison of the structured coalescent with single-type Kingman
//! coalescents.
//!
//! * [`coupled_simulate`] builds the total block count `|L|` jointly with two
//!   Kingman block-counting processes at rates `alpha_max` and
//!   `alpha_min(d) = min alpha_i / d^2` such that `Lhat <= |L| <= max(Ltilde, d+1)`.
//! * [`kingman_moment_bound`] is the analytic bound on `E[L(t)^p]`.
//! * [`simulate_emigration_bound`] runs the duplication process that
//!   dominates the number of leaves that have left their home colony.

use std::io;

use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::coalescent::pick_weighted;
use crate::model::ModelParams;
use crate::rng::{child_rng, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("rate bounds need more than d = {d} blocks, got {blocks}")]
    TooFewBlocks { d: usize, blocks: u64 },
}

/// The three sides of `alpha_min(d)|l|(|l|-1) <= sum_i alpha_i l_i(l_i-1) <= alpha_max|l|(|l|-1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBounds {
    pub lower: f64,
    pub middle: f64,
    pub upper: f64,
}

pub fn rate_bounds_check(l: &[u64], alpha: &[f64]) -> Result<RateBounds, BoundsError> {
    let d = l.len();
    let n: u64 = l.iter().sum();
    if n <= d as u64 {
        return Err(BoundsError::TooFewBlocks { d, blocks: n });
    }
    let amax = alpha.iter().copied().fold(0.0, f64::max);
    let amin = alpha.iter().copied().fold(f64::INFINITY, f64::min) / (d * d) as f64;
    let nn = n as f64 * (n as f64 - 1.0);
    let middle = l
        .iter()
        .zip(alpha)
        .map(|(&li, a)| a * li as f64 * (li as f64 - 1.0))
        .sum();
    let bounds = RateBounds {
        lower: amin * nn,
        middle,
        upper: amax * nn,
    };
    debug_assert!(bounds.lower <= bounds.middle * (1.0 + 1e-12));
    debug_assert!(bounds.middle <= bounds.upper * (1.0 + 1e-12));
    Ok(bounds)
}

/// `(N^{-1/p} + rho t / (4p))^{-p}`, an upper bound on `E[L(t)^p]` for a
/// Kingman coalescent started from `N` blocks with pair-merger rate `rho`.
pub fn kingman_moment_bound(n: u64, rho: f64, t: f64, p: f64) -> f64 {
    ((n as f64).powf(-1.0 / p) + rho * t / (4.0 * p)).powf(-p)
}

/// Block-counting path of a Kingman coalescent.
#[derive(Debug, Clone, PartialEq)]
pub struct KingmanPath {
    /// Jump times; `times[0] = start`.
    pub times: Vec<f64>,
    pub counts: Vec<u64>,
}

impl KingmanPath {
    pub fn count_at(&self, t: f64) -> u64 {
        let idx = self.times.partition_point(|&s| s <= t);
        self.counts[idx.max(1) - 1]
    }
}

fn pairs(n: u64) -> f64 {
    n as f64 * (n as f64 - 1.0) / 2.0
}

/// Pure death chain `n -> n-1` at rate `rho n(n-1)/2` on `[0, horizon]`.
pub fn kingman_simulate<R: Rng + ?Sized>(n: u64, rho: f64, horizon: f64, rng: &mut R) -> KingmanPath {
    kingman_from(n, rho, 0.0, horizon, rng)
}

fn kingman_from<R: Rng + ?Sized>(n: u64, rho: f64, start: f64, horizon: f64, rng: &mut R) -> KingmanPath {
    let mut path = KingmanPath {
        times: vec![start],
        counts: vec![n],
    };
    let mut t = start;
    let mut n = n;
    while n > 1 && rho > 0.0 {
        let e: f64 = rng.sample(Exp1);
        t += e / (rho * pairs(n));
        if t > horizon {
            break;
        }
        n -= 1;
        path.times.push(t);
        path.counts.push(n);
    }
    path
}

/// One joint state of the coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRecord {
    pub time: f64,
    pub lhat: u64,
    pub l: Vec<u64>,
    pub ltilde: u64,
}

impl CoupledRecord {
    pub fn l_total(&self) -> u64 {
        self.l.iter().sum()
    }

    pub fn ordered(&self, d: usize) -> bool {
        let total = self.l_total();
        self.lhat <= total && total <= self.ltilde.max(d as u64 + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPaths {
    pub records: Vec<CoupledRecord>,
    pub d: usize,
}

impl CoupledPaths {
    /// Index of the first record violating `Lhat <= |L| <= max(Ltilde, d+1)`.
    pub fn first_violation(&self) -> Option<usize> {
        self.records.iter().position(|r| !r.ordered(self.d))
    }

    /// CSV: `t,lhat,l_total,ltilde`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "lhat", "l_total", "ltilde"])?;
        for r in &self.records {
            wtr.write_record([
                r.time.to_string(),
                r.lhat.to_string(),
                r.l_total().to_string(),
                r.ltilde.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Which process moves in a coalescence event: the one with the highest
/// rate surely, the next with probability (its rate)/(higher rate), the last
/// only if the middle one moved. Ties keep the order of `rates`.
fn cascade<R: Rng + ?Sized>(rates: &[f64], rng: &mut R) -> Vec<bool> {
    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| rates[b].total_cmp(&rates[a]));
    let mut moved = vec![false; rates.len()];
    let mut prev = rates[order[0]];
    moved[order[0]] = true;
    for &idx in &order[1..] {
        let r = rates[idx];
        if r <= 0.0 || !(rng.random::<f64>() * prev < r) {
            break;
        }
        moved[idx] = true;
        prev = r;
    }
    moved
}

/// Joint construction of `(Lhat, L, Ltilde)` up to unscaled time `horizon`.
///
/// While `|L| >= d + 1` the three processes share one exponential clock of
/// rate `rho(l) + max(c_hat, c, c_tilde)`; migrations move only `L`, and a
/// coalescence event is resolved by the rate cascade. Once `|L| < d + 1`,
/// `Ltilde` continues on an independent random stream.
pub fn coupled_simulate(p: &ModelParams, horizon: f64, rng: &mut SimRng) -> CoupledPaths {
    let d = p.d;
    let amax = p.alpha_max();
    let amin = p.alpha_min_d();
    let mut l = p.l0.clone();
    let mut lhat = p.n_k;
    let mut ltilde = p.n_k;
    let mut t = 0.0;
    let mut records = vec![CoupledRecord {
        time: 0.0,
        lhat,
        l: l.clone(),
        ltilde,
    }];
    let out_rates: Vec<f64> = (0..d).map(|i| p.out_rate(i)).collect();
    let mut tilde_path: Option<KingmanPath> = None;

    loop {
        let total: u64 = l.iter().sum();
        let coupled = total > d as u64;
        if !coupled && tilde_path.is_none() {
            let mut tilde_rng = child_rng(rng);
            tilde_path = Some(kingman_from(ltilde, amin, t, horizon, &mut tilde_rng));
        }
        let mig: Vec<f64> = (0..d).map(|i| p.k * l[i] as f64 * out_rates[i]).collect();
        let rho: f64 = mig.iter().sum();
        let c_hat = amax * pairs(lhat);
        let c_mid: f64 = (0..d).map(|i| p.alpha[i] * pairs(l[i])).sum();
        let c_tilde = if coupled { amin * pairs(ltilde) } else { 0.0 };
        let c_top = c_hat.max(c_mid).max(c_tilde);
        let rate = rho + c_top;
        if !(rate > 0.0) {
            break;
        }
        let e: f64 = rng.sample(Exp1);
        let next = t + e / rate;
        if next > horizon {
            break;
        }
        t = next;
        if rng.random::<f64>() * rate < rho {
            let from = pick_weighted(&mig, rng);
            let to = pick_weighted(&p.w[from], rng);
            l[from] -= 1;
            l[to] += 1;
        } else {
            let moved = cascade(&[c_hat, c_mid, c_tilde], rng);
            if moved[0] {
                lhat -= 1;
            }
            if moved[1] {
                let weights: Vec<f64> = (0..d).map(|i| p.alpha[i] * pairs(l[i])).collect();
                l[pick_weighted(&weights, rng)] -= 1;
            }
            if moved[2] {
                ltilde -= 1;
            }
        }
        records.push(CoupledRecord {
            time: t,
            lhat,
            l: l.clone(),
            ltilde,
        });
    }

    if let Some(path) = tilde_path {
        records = merge_tilde(records, &path);
    }
    CoupledPaths { records, d }
}

/// Interleaves the independent `Ltilde` path with the coupled records.
fn merge_tilde(records: Vec<CoupledRecord>, path: &KingmanPath) -> Vec<CoupledRecord> {
    let start = path.times[0];
    let mut merged = Vec::with_capacity(records.len() + path.times.len());
    let mut tilde_iter = path.times.iter().zip(&path.counts).skip(1).peekable();
    for mut r in records {
        if r.time >= start {
            while let Some(&(&tt, &cnt)) = tilde_iter.peek() {
                if tt >= r.time {
                    break;
                }
                let last = merged.last().cloned().unwrap_or_else(|| r.clone());
                merged.push(CoupledRecord {
                    time: tt,
                    ltilde: cnt,
                    ..last
                });
                tilde_iter.next();
            }
            r.ltilde = path.count_at(r.time);
        }
        merged.push(r);
    }
    for (&tt, &cnt) in tilde_iter {
        let last = merged.last().cloned().expect("records start at time 0");
        merged.push(CoupledRecord {
            time: tt,
            ltilde: cnt,
            ..last
        });
    }
    merged
}

/// Path of the emigration upper-bound process `Ehat_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmigrantBoundPath {
    /// Rescaled jump times; `times[0] = 0`.
    pub times: Vec<f64>,
    /// Nondecreasing values, `values[0] = 0`.
    pub values: Vec<u64>,
    /// Block sizes of the auxiliary Kingman coalescent at the horizon.
    pub final_blocks: Vec<u64>,
}

impl EmigrantBoundPath {
    pub fn value_at(&self, t_scaled: f64) -> u64 {
        let idx = self.times.partition_point(|&s| s <= t_scaled);
        self.values[idx.max(1) - 1]
    }

    pub fn final_value(&self) -> u64 {
        *self.values.last().unwrap_or(&0)
    }

    /// CSV: `t,ehat`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "ehat"])?;
        for (t, v) in self.times.iter().zip(&self.values) {
            wtr.write_record([t.to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Single-type Kingman coalescent at rate `alpha_i` from `l0` singletons in
/// which every block, at rate `w_i K`, adds its current size to `Ehat`
/// (without leaving). Runs up to rescaled time `horizon_scaled`.
pub fn simulate_emigration_bound<R: Rng + ?Sized>(
    l0: u64,
    w_i: f64,
    alpha_i: f64,
    k: f64,
    horizon_scaled: f64,
    rng: &mut R,
) -> EmigrantBoundPath {
    let horizon = horizon_scaled / k;
    let mut blocks: Vec<u64> = vec![1; l0 as usize];
    let mut path = EmigrantBoundPath {
        times: vec![0.0],
        values: vec![0],
        final_blocks: Vec::new(),
    };
    let mut ehat = 0u64;
    let mut t = 0.0;
    loop {
        let n = blocks.len() as u64;
        let count_rate = w_i * k * n as f64;
        let merge_rate = alpha_i * pairs(n);
        let rate = count_rate + merge_rate;
        if !(rate > 0.0) {
            break;
        }
        let e: f64 = rng.sample(Exp1);
        t += e / rate;
        if t > horizon {
            break;
        }
        if rng.random::<f64>() * rate < count_rate {
            let idx = rng.random_range(0..blocks.len());
            ehat += blocks[idx];
            path.times.push(t * k);
            path.values.push(ehat);
        } else {
            let a = rng.random_range(0..blocks.len());
            let first = blocks.swap_remove(a);
            let b = rng.random_range(0..blocks.len());
            blocks[b] += first;
        }
    }
    path.final_blocks = blocks;
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, Regime};
    use crate::rng::replicate_rng;

    fn params(d: usize, w: f64, alpha: Vec<f64>, k: f64, l0: Vec<u64>) -> ModelParams {
        ModelSpec {
            d,
            w: (0..d).map(|i| (0..d).map(|j| if i == j { 0.0 } else { w }).collect()).collect(),
            alpha,
            k,
            n_k: l0.iter().sum(),
            l0,
            regime: Regime::Critical,
            c: None,
            beta: None,
            seed: None,
        }
        .derive()
        .unwrap()
    }

    #[test]
    fn rate_bounds_examples() {
        let b = rate_bounds_check(&[3, 3], &[1.0, 1.0]).unwrap();
        assert_eq!((b.lower, b.middle, b.upper), (7.5, 12.0, 30.0));
        for n in 2..30u64 {
            let b = rate_bounds_check(&[n], &[0.7]).unwrap();
            let expect = 0.7 * n as f64 * (n as f64 - 1.0);
            for v in [b.lower, b.middle, b.upper] {
                assert!((v - expect).abs() < 1e-12 * expect);
            }
        }
        assert_eq!(
            rate_bounds_check(&[1, 1], &[1.0, 1.0]),
            Err(BoundsError::TooFewBlocks { d: 2, blocks: 2 })
        );
    }

    #[test]
    fn moment_bound_examples() {
        assert!((kingman_moment_bound(100, 2.0, 1.0, 1.0) - 1.0 / 0.51).abs() < 1e-12);
        assert_eq!(kingman_moment_bound(100, 2.0, 0.0, 1.0), 100.0);
        assert!((kingman_moment_bound(100, 2.0, 0.0, 2.0) - 100.0).abs() < 1e-9);
        assert!((kingman_moment_bound(100, 2.0, 1.0, 2.0) - 1.0 / 0.35f64.powi(2)).abs() < 1e-9);
    }

    #[test]
    fn kingman_degenerate_cases() {
        let mut rng = replicate_rng(1, 0);
        let path = kingman_simulate(10, 0.0, 5.0, &mut rng);
        assert_eq!(path.counts, vec![10]);
        assert_eq!(path.count_at(4.0), 10);
        let path = kingman_simulate(2, 1.0, f64::INFINITY, &mut rng);
        assert_eq!(path.counts, vec![2, 1]);
    }

    #[test]
    fn two_block_holding_time_is_exponential() {
        // N = 2: a single Exp(rho) holding time.
        let rho = 3.0;
        let n = 20_000;
        let mean = (0..n)
            .map(|r| kingman_simulate(2, rho, f64::INFINITY, &mut replicate_rng(11, r)).times[1])
            .sum::<f64>()
            / n as f64;
        let se = 1.0 / rho / (n as f64).sqrt();
        assert!((mean - 1.0 / rho).abs() < 4.0 * se);
    }

    #[test]
    fn single_colony_coupling_is_equality() {
        let p = params(1, 0.0, vec![2.0], 10.0, vec![60]);
        for r in 0..50 {
            let paths = coupled_simulate(&p, 1.0, &mut replicate_rng(3, r));
            for rec in &paths.records {
                assert_eq!(rec.lhat, rec.l_total());
            }
            assert_eq!(paths.first_violation(), None);
        }
    }

    #[test]
    fn no_coalescence_keeps_all_counts() {
        let p = params(2, 1.0, vec![0.0, 0.0], 10.0, vec![25, 25]);
        let paths = coupled_simulate(&p, 1.0, &mut replicate_rng(4, 0));
        assert!(paths.records.len() > 1);
        for rec in &paths.records {
            assert_eq!((rec.lhat, rec.l_total(), rec.ltilde), (50, 50, 50));
        }
    }

    #[test]
    fn coupling_order_holds() {
        let p = params(2, 1.0, vec![1.0, 3.0], 10.0, vec![30, 20]);
        for r in 0..200 {
            let paths = coupled_simulate(&p, 1.0, &mut replicate_rng(5, r));
            assert_eq!(paths.first_violation(), None, "replicate {r}");
            let times: Vec<f64> = paths.records.iter().map(|x| x.time).collect();
            assert!(times.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn cascade_respects_ties_and_rates() {
        let mut rng = replicate_rng(6, 0);
        assert_eq!(cascade(&[2.0, 2.0, 2.0], &mut rng), vec![true, true, true]);
        assert_eq!(cascade(&[0.0, 5.0, 0.0], &mut rng), vec![false, true, false]);
        let n = 40_000;
        let moved = (0..n).filter(|_| cascade(&[4.0, 1.0, 0.5], &mut rng)[1]).count();
        let frac = moved as f64 / n as f64;
        assert!((frac - 0.25).abs() < 0.01);
    }

    #[test]
    fn emigration_bound_degenerate() {
        let mut rng = replicate_rng(7, 0);
        let path = simulate_emigration_bound(100, 0.0, 1.0, 10.0, 1.0, &mut rng);
        assert_eq!(path.values, vec![0]);
        assert_eq!(path.final_blocks.iter().sum::<u64>(), 100);
        let path = simulate_emigration_bound(40, 1.0, 0.0, 10.0, 1.0, &mut rng);
        assert_eq!(path.final_blocks.len(), 40);
        assert!(path.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn emigration_mean_is_linear_in_time() {
        // E[Ehat(t/K)] = w L0 t, for any coalescence rate.
        for alpha in [0.0, 2.0] {
            let (l0, w, k, t) = (50u64, 0.8, 20.0, 0.5);
            let n = 4000;
            let xs: Vec<f64> = (0..n)
                .map(|r| simulate_emigration_bound(l0, w, alpha, k, t, &mut replicate_rng(8, r)).final_value() as f64)
                .collect();
            let est = crate::stats::MeanEstimate::from_samples(&xs);
            assert!((est.mean - w * l0 as f64 * t).abs() < 3.0 * est.std_error, "{est:?}");
        }
    }
}
