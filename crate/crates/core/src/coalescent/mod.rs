//! Exact simulation of the structured coalescent.
//!
//! Each colony holds a multiset of block configurations (the vector of
//! leaf counts per colour). Blocks migrate from colony `i` to `j` at rate
//! `K w_ij` each and every unordered pair of blocks inside colony `i`
//! coalesces at rate `alpha_i`. Time is kept unscaled; the rescaled process
//! observes the state at unscaled time `t / K`.

mod generator;
mod measure;

pub use generator::{evaluate_generator, evaluate_limit_generator, CylinderFunction, GeneratorParts};
pub use measure::{mono_poly_split, to_empirical, EmpiricalMeasure, MeasureError};

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::model::ModelParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("no event has positive rate")]
    Absorbed,
}

/// Leaf counts per colour of one block.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration(pub Vec<u32>);

impl Configuration {
    pub fn unit(d: usize, i: usize) -> Self {
        let mut k = vec![0; d];
        k[i] = 1;
        Configuration(k)
    }

    pub fn size(&self) -> u64 {
        self.0.iter().map(|&x| u64::from(x)).sum()
    }

    pub fn add(&self, other: &Configuration) -> Configuration {
        Configuration(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `k1|k2|...|kd`
    pub fn encode(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|k| k.to_string()).collect();
        parts.join("|")
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// Blocks present in one colony.
///
/// Stored as a flat array of configurations so that a uniformly random block
/// can be drawn in constant time; [`ColonyState::counts`] gives the multiset view.
#[derive(Debug, Clone, PartialEq)]
pub struct ColonyState {
    d: usize,
    flat: Vec<u32>,
}

impl ColonyState {
    pub fn new(d: usize) -> Self {
        ColonyState { d, flat: Vec::new() }
    }

    pub fn block_count(&self) -> usize {
        self.flat.len() / self.d
    }

    pub fn block(&self, idx: usize) -> &[u32] {
        &self.flat[idx * self.d..(idx + 1) * self.d]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[u32]> {
        self.flat.chunks_exact(self.d)
    }

    pub fn push(&mut self, k: &[u32]) {
        debug_assert_eq!(k.len(), self.d);
        self.flat.extend_from_slice(k);
    }

    /// Removes block `idx`, moving the last block into its slot.
    pub fn swap_remove(&mut self, idx: usize) -> Configuration {
        let d = self.d;
        let last = self.block_count() - 1;
        let removed = self.block(idx).to_vec();
        if idx != last {
            self.flat.copy_within(last * d..(last + 1) * d, idx * d);
        }
        self.flat.truncate(last * d);
        Configuration(removed)
    }

    /// Configuration -> multiplicity.
    pub fn counts(&self) -> BTreeMap<Configuration, u64> {
        let mut map = BTreeMap::new();
        for k in self.blocks() {
            *map.entry(Configuration(k.to_vec())).or_insert(0) += 1;
        }
        map
    }

    /// Total number of leaves of each colour held by this colony.
    pub fn color_mass(&self) -> Vec<u64> {
        let mut mass = vec![0u64; self.d];
        for k in self.blocks() {
            for (m, &x) in mass.iter_mut().zip(k) {
                *m += u64::from(x);
            }
        }
        mass
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Migration {
        from: usize,
        to: usize,
        config: Configuration,
    },
    Coalescence {
        colony: usize,
        first: Configuration,
        second: Configuration,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    /// Unscaled model time of the jump.
    pub time: f64,
    pub kind: EventKind,
}

/// Jump rates of the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRates {
    /// `K L_i sum_{j != i} w_ij` per colony.
    pub migration_by_colony: Vec<f64>,
    /// `alpha_i L_i (L_i - 1) / 2` per colony.
    pub coalescence: Vec<f64>,
}

impl EventRates {
    pub fn migration(&self) -> f64 {
        self.migration_by_colony.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.migration() + self.coalescence.iter().sum::<f64>()
    }
}

/// What the simulation reports to an observer.
pub enum Observation<'a> {
    /// The state was held unchanged for `scaled_duration` (in rescaled time).
    Hold {
        state: &'a CoalescentState,
        scaled_duration: f64,
    },
    /// A jump just happened; `state` is the post-jump state.
    Jump {
        state: &'a CoalescentState,
        event: &'a Event,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalescentState {
    pub colonies: Vec<ColonyState>,
    /// Unscaled model time.
    pub time: f64,
    /// `E_i`: leaves of colour `i` currently outside colony `i`.
    pub emigrants: Vec<u64>,
    initial_color_mass: Vec<u64>,
}

/// Colony `i` holds `L0_i` singletons of colour `i`.
pub fn init_state(p: &ModelParams) -> CoalescentState {
    let d = p.d;
    let colonies = (0..d)
        .map(|i| {
            let mut c = ColonyState::new(d);
            let unit = Configuration::unit(d, i);
            c.flat.reserve(p.l0[i] as usize * d);
            for _ in 0..p.l0[i] {
                c.push(&unit.0);
            }
            c
        })
        .collect();
    CoalescentState {
        colonies,
        time: 0.0,
        emigrants: vec![0; d],
        initial_color_mass: p.l0.clone(),
    }
}

/// Migration and coalescence rates of `s`.
pub fn event_rates(s: &CoalescentState, p: &ModelParams) -> EventRates {
    let migration_by_colony = s
        .colonies
        .iter()
        .enumerate()
        .map(|(i, c)| p.k * c.block_count() as f64 * p.out_rate(i))
        .collect();
    let coalescence = s
        .colonies
        .iter()
        .zip(&p.alpha)
        .map(|(c, a)| {
            let l = c.block_count() as f64;
            a * l * (l - 1.0) / 2.0
        })
        .collect();
    EventRates {
        migration_by_colony,
        coalescence,
    }
}

/// Index drawn with probability proportional to `weights`.
pub(crate) fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return i;
            }
            u -= w;
            last = i;
        }
    }
    last
}

impl CoalescentState {
    pub fn d(&self) -> usize {
        self.colonies.len()
    }

    /// `L_i` per colony.
    pub fn block_counts(&self) -> Vec<usize> {
        self.colonies.iter().map(ColonyState::block_count).collect()
    }

    /// `L^K(t) = sum_i L_i`.
    pub fn total_blocks(&self) -> usize {
        self.colonies.iter().map(ColonyState::block_count).sum()
    }

    pub fn scaled_time(&self, p: &ModelParams) -> f64 {
        self.time * p.k
    }

    /// One Gillespie step: exponential holding time, then a jump.
    pub fn step<R: Rng + ?Sized>(&mut self, p: &ModelParams, rng: &mut R) -> Result<Event, SimError> {
        let rates = event_rates(self, p);
        let total = rates.total();
        if !(total > 0.0) {
            return Err(SimError::Absorbed);
        }
        let e: f64 = rng.sample(Exp1);
        self.time += e / total;
        Ok(self.jump(p, &rates, rng))
    }

    fn jump<R: Rng + ?Sized>(&mut self, p: &ModelParams, rates: &EventRates, rng: &mut R) -> Event {
        let migration = rates.migration();
        let u = rng.random::<f64>() * rates.total();
        let kind = if u < migration {
            let from = pick_weighted(&rates.migration_by_colony, rng);
            let to = pick_weighted(&p.w[from], rng);
            let idx = rng.random_range(0..self.colonies[from].block_count());
            let config = self.colonies[from].swap_remove(idx);
            self.colonies[to].push(&config.0);
            self.emigrants[from] += u64::from(config.0[from]);
            self.emigrants[to] -= u64::from(config.0[to]);
            EventKind::Migration { from, to, config }
        } else {
            let colony = pick_weighted(&rates.coalescence, rng);
            let c = &mut self.colonies[colony];
            let l = c.block_count();
            let a = rng.random_range(0..l);
            let mut b = rng.random_range(0..l - 1);
            if b >= a {
                b += 1;
            }
            let (hi, lo) = if a > b { (a, b) } else { (b, a) };
            let first = c.swap_remove(hi);
            let second = c.swap_remove(lo);
            let merged = first.add(&second);
            c.push(&merged.0);
            EventKind::Coalescence {
                colony,
                first,
                second,
            }
        };
        Event {
            time: self.time,
            kind,
        }
    }

    /// Runs until rescaled time `t_scaled` (unscaled `t_scaled / K`).
    pub fn simulate_until<R: Rng + ?Sized>(&mut self, p: &ModelParams, t_scaled: f64, rng: &mut R) {
        self.simulate_until_observed(p, t_scaled, rng, |_| {});
    }

    /// Like [`simulate_until`](Self::simulate_until), reporting every holding
    /// interval and jump to `observer`.
    pub fn simulate_until_observed<R, F>(&mut self, p: &ModelParams, t_scaled: f64, rng: &mut R, mut observer: F)
    where
        R: Rng + ?Sized,
        F: FnMut(Observation<'_>),
    {
        let target = t_scaled / p.k;
        if target <= self.time {
            return;
        }
        loop {
            let rates = event_rates(self, p);
            let total = rates.total();
            let dt = if total > 0.0 {
                let e: f64 = rng.sample(Exp1);
                e / total
            } else {
                f64::INFINITY
            };
            if self.time + dt >= target {
                observer(Observation::Hold {
                    state: self,
                    scaled_duration: (target - self.time) * p.k,
                });
                self.time = target;
                return;
            }
            observer(Observation::Hold {
                state: self,
                scaled_duration: dt * p.k,
            });
            self.time += dt;
            let event = self.jump(p, &rates, rng);
            observer(Observation::Jump { state: self, event: &event });
        }
    }

    /// Checks colour-mass conservation and the emigrant counters against a
    /// recount from scratch.
    pub fn check_invariants(&self) -> Result<(), String> {
        let d = self.d();
        let mut totals = vec![0u64; d];
        for (i, colony) in self.colonies.iter().enumerate() {
            let mass = colony.color_mass();
            for k in 0..d {
                totals[k] += mass[k];
            }
            for k in colony.blocks() {
                if k.iter().all(|&x| x == 0) {
                    return Err(format!("empty block in colony {i}"));
                }
            }
        }
        if totals != self.initial_color_mass {
            return Err(format!(
                "colour mass {totals:?} differs from initial {:?}",
                self.initial_color_mass
            ));
        }
        for i in 0..d {
            let home = self.colonies[i].color_mass()[i];
            let outside = totals[i] - home;
            if outside != self.emigrants[i] {
                return Err(format!(
                    "emigrant counter E_{i} = {} but {outside} leaves are away",
                    self.emigrants[i]
                ));
            }
        }
        Ok(())
    }

    /// Snapshot CSV: `colony,config,count`.
    pub fn write_snapshot<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["colony", "config", "count"])?;
        for (i, colony) in self.colonies.iter().enumerate() {
            for (config, count) in colony.counts() {
                wtr.write_record([i.to_string(), config.encode(), count.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Event-log CSV writer: `t_unscaled,kind,i,j,c1,c2`.
pub struct EventLog<W: io::Write> {
    wtr: csv::Writer<W>,
}

impl<W: io::Write> EventLog<W> {
    pub fn new(out: W) -> csv::Result<Self> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t_unscaled", "kind", "i", "j", "c1", "c2"])?;
        Ok(EventLog { wtr })
    }

    pub fn record(&mut self, event: &Event) -> csv::Result<()> {
        let t = event.time.to_string();
        match &event.kind {
            EventKind::Migration { from, to, config } => self.wtr.write_record([
                t,
                "migration".into(),
                from.to_string(),
                to.to_string(),
                config.encode(),
                String::new(),
            ]),
            EventKind::Coalescence {
                colony,
                first,
                second,
            } => self.wtr.write_record([
                t,
                "coalescence".into(),
                colony.to_string(),
                colony.to_string(),
                first.encode(),
                second.encode(),
            ]),
        }
    }

    pub fn finish(mut self) -> csv::Result<()> {
        self.wtr.flush()?;
        Ok(())
    }
}
