use rayon::prelude::*;

use super::checks::{audit_run, AuditCounts};
use super::config::{spec_for_k, ExperimentConfig, ExperimentKind, HarnessError};
use super::report::{ReportRow, Rule};
use crate::coag::{
    solve_discrete_at, solve_generating_function_at, solve_laplace_exponent_at, Lattice,
};
use crate::coalescent::{init_state, mono_poly_split, to_empirical, Configuration};
use crate::kingman::{
    coupled_simulate, kingman_moment_bound, kingman_simulate, simulate_emigration_bound,
};
use crate::model::{validate_params, Regime};
use crate::repr::{
    branching_params, diffusion_params, entrance_law_estimate, laplace_estimates, pgf_estimate,
    pmf_from_states, sample_branching, sample_diffusion,
};
use crate::rng::{derive_seed, replicate_rng, SimRng};
use crate::stats::{ks_two_sample, MeanEstimate};

const REL_CRITICAL: f64 = 0.05;
const REL_LARGE: f64 = 0.05;
const REL_INITIAL: f64 = 0.10;
const KS_LEVEL: f64 = 0.01;

fn seed_for(cfg: &ExperimentConfig, kind: ExperimentKind, idx: u64) -> u64 {
    derive_seed(cfg.seed(), kind.tag() * 1_000_003 + idx)
}

/// Runs `f` once per replicate on stream `r` of `seed` and returns the
/// per-coordinate mean estimates, aggregated in replicate order.
pub fn replicate_means<F>(replicates: usize, seed: u64, f: F) -> Vec<MeanEstimate>
where
    F: Fn(&mut SimRng) -> Vec<f64> + Sync + Send,
{
    let rows: Vec<Vec<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| f(&mut replicate_rng(seed, r)))
        .collect();
    column_means(&rows)
}

fn column_means(rows: &[Vec<f64>]) -> Vec<MeanEstimate> {
    let width = rows.first().map_or(0, Vec::len);
    (0..width)
        .map(|c| MeanEstimate::from_samples(&rows.iter().map(|r| r[c]).collect::<Vec<_>>()))
        .collect()
}

fn laplace_of(mu: &crate::coalescent::EmpiricalMeasure, lambda: &[f64]) -> f64 {
    mu.integrate(|x| -(-x.iter().zip(lambda).map(|(a, b)| a * b).sum::<f64>()).exp_m1())
}

fn lambda_label(l: &[f64]) -> String {
    l.iter().map(f64::to_string).collect::<Vec<_>>().join("|")
}

fn n_label(n: &[u32]) -> String {
    n.iter().map(u32::to_string).collect::<Vec<_>>().join("|")
}

fn check_regime(cfg: &ExperimentConfig, want: Regime) -> Result<(), HarnessError> {
    if cfg.model.regime != want {
        return Err(HarnessError::Config(format!(
            "experiment needs the {want:?} regime"
        )));
    }
    Ok(())
}

/// Error of a mean estimate against its reference, used for trend rows.
#[derive(Clone, Copy)]
struct ErrorEntry {
    err: f64,
    se: f64,
}

/// `(observable, t, colony, error, slack)` for one scale.
type ErrorRow = (String, Option<f64>, Option<usize>, ErrorEntry, f64);

/// Appends `|err_K| <= |err_prev| + slack * sqrt(se_K^2 + se_prev^2)` rows
/// for consecutive scales.
fn trend_rows(
    rows: &mut Vec<ReportRow>,
    experiment: &str,
    ks: &[f64],
    table: &[Vec<ErrorRow>],
) {
    for w in 1..ks.len() {
        for (prev, cur) in table[w - 1].iter().zip(&table[w]) {
            let (name, t, colony, e, slack) = cur;
            let se = e.se.hypot(prev.3.se);
            rows.push(ReportRow::new(
                experiment,
                Some(ks[w]),
                *t,
                *colony,
                format!("trend:{name}"),
                e.err,
                prev.3.err,
                se,
                slack * se,
                Rule::Upper,
            ));
        }
    }
}

/// Critical regime: `<mu_i^K(t), f>` for `f` in `{1, 1_n, 1 - exp(-<lambda,.>)}`
/// against the discrete coagulation system.
///
/// Rows at the largest `K` check `|mean - ref| <= 5% |ref| (+ 3 SE for point
/// masses and Laplace functionals)`; smaller `K` are reported. Trend rows
/// require the absolute error not to grow with `K` beyond 1 SE (mass) or
/// 3 SE (the others) of the difference.
pub fn run_convergence_critical(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, HarnessError> {
    check_regime(cfg, Regime::Critical)?;
    let name = ExperimentKind::ConvergenceCritical.name();
    let times = cfg.sorted_times();
    let lambdas = cfg.lambdas();
    let ks = cfg.k_values();
    let k_max = ks.iter().cloned().fold(f64::MIN, f64::max);
    let mut rows = Vec::new();
    let mut table = Vec::new();

    for (ki, &k) in ks.iter().enumerate() {
        let p = validate_params(&spec_for_k(&cfg.model, k)?)?;
        let d = p.d;
        let sol = solve_discrete_at(&p, &times, cfg.max_norm, cfg.dt)?;
        let points: Vec<Vec<u32>> = Lattice::new(d, cfg.max_norm).points().to_vec();
        let bp = branching_params(&p)?;
        let laplace_refs: Option<Vec<Vec<Vec<f64>>>> = if bp.valid {
            // [lambda][time][colony] of c beta_i (1 - v_i(t, exp(-lambda)))
            let mut out = Vec::new();
            for lam in &lambdas {
                let s: Vec<f64> = lam.iter().map(|l| (-l).exp()).collect();
                let g = solve_generating_function_at(&p, &s, &times, cfg.dt)?;
                out.push(
                    g.path
                        .v
                        .iter()
                        .map(|v| (0..d).map(|i| p.c * p.beta[i] * (1.0 - v[i])).collect())
                        .collect(),
                );
            }
            Some(out)
        } else {
            log::warn!("branching rates invalid; skipping Laplace observables");
            None
        };
        let n_lambda = if laplace_refs.is_some() { lambdas.len() } else { 0 };

        let est = replicate_means(cfg.replicates, seed_for(cfg, ExperimentKind::ConvergenceCritical, ki as u64), |rng| {
            let mut s = init_state(&p);
            let mut out = Vec::new();
            for &t in &times {
                s.simulate_until(&p, t, rng);
                let mu = to_empirical(&s, &p);
                for m in &mu {
                    out.push(m.total_mass());
                    for n in &points {
                        out.push(m.atoms.get(&Configuration(n.clone())).copied().unwrap_or(0.0));
                    }
                    for lam in lambdas.iter().take(n_lambda) {
                        out.push(laplace_of(m, lam));
                    }
                }
            }
            out
        });

        let last = k == k_max;
        let mut idx = 0;
        let mut errors = Vec::new();
        let mut push = |rows: &mut Vec<ReportRow>, t: f64, i: usize, obs: String, reference: f64, slack_se: f64, trend_slack: f64| {
            let e = est[idx];
            idx += 1;
            let (rule, tol) = if last {
                (Rule::Abs, REL_CRITICAL * reference.abs() + slack_se * e.std_error)
            } else {
                (Rule::Report, 0.0)
            };
            rows.push(ReportRow::new(name, Some(k), Some(t), Some(i), obs.clone(), e.mean, reference, e.std_error, tol, rule));
            errors.push((obs, Some(t), Some(i), ErrorEntry { err: (e.mean - reference).abs(), se: e.std_error }, trend_slack));
        };
        for (ti, &t) in times.iter().enumerate() {
            for i in 0..d {
                push(&mut rows, t, i, "mass".into(), sol.rho[ti][i], 0.0, 1.0);
                for n in &points {
                    push(&mut rows, t, i, format!("pmf:{}", n_label(n)), sol.value(ti, i, n), 3.0, 3.0);
                }
                if let Some(refs) = &laplace_refs {
                    for (li, lam) in lambdas.iter().enumerate() {
                        push(&mut rows, t, i, format!("laplace:{}", lambda_label(lam)), refs[li][ti][i], 3.0, 3.0);
                    }
                }
            }
        }
        table.push(errors);
    }
    trend_rows(&mut rows, name, &ks, &table);
    Ok(rows)
}

/// Large regime: `<mu_i^K(t), 1 - exp(-<lambda,.>)>` against
/// `beta_i v_i(t, lambda)` with `N_K = round(K^{3/2})`.
///
/// Rows at the largest `K` check a 5% relative error. When consecutive scales
/// double, a row checks that the median absolute error over the lambda grid
/// at least halves (up to 1 SE).
pub fn run_convergence_large(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, HarnessError> {
    check_regime(cfg, Regime::Large)?;
    let name = ExperimentKind::ConvergenceLarge.name();
    let times = cfg.sorted_times();
    if times.iter().any(|&t| t <= 0.0) {
        return Err(HarnessError::Config("times must be positive".into()));
    }
    let lambdas = cfg.lambdas();
    let ks = cfg.k_values();
    let k_max = ks.iter().cloned().fold(f64::MIN, f64::max);
    let mut rows = Vec::new();
    // per K: per time: (errors over lambda and colony, se)
    let mut medians: Vec<Vec<(f64, f64)>> = Vec::new();

    for (ki, &k) in ks.iter().enumerate() {
        let p = validate_params(&spec_for_k(&cfg.model, k)?)?;
        let d = p.d;
        let refs: Vec<Vec<Vec<f64>>> = lambdas
            .iter()
            .map(|lam| {
                solve_laplace_exponent_at(&p, lam, &times, cfg.dt)
                    .map(|v| v.v.iter().map(|vt| (0..d).map(|i| p.beta[i] * vt[i]).collect()).collect())
            })
            .collect::<Result<_, _>>()?;
        let est = replicate_means(cfg.replicates, seed_for(cfg, ExperimentKind::ConvergenceLarge, ki as u64), |rng| {
            let mut s = init_state(&p);
            let mut out = Vec::new();
            for &t in &times {
                s.simulate_until(&p, t, rng);
                let mu = to_empirical(&s, &p);
                for m in &mu {
                    out.extend(lambdas.iter().map(|lam| laplace_of(m, lam)));
                }
            }
            out
        });
        let last = k == k_max;
        let mut idx = 0;
        let mut per_time = Vec::new();
        for (ti, &t) in times.iter().enumerate() {
            let mut errs = Vec::new();
            for i in 0..d {
                for (li, lam) in lambdas.iter().enumerate() {
                    let e = est[idx];
                    idx += 1;
                    let reference = refs[li][ti][i];
                    let (rule, tol) = if last {
                        (Rule::Abs, REL_LARGE * reference.abs())
                    } else {
                        (Rule::Report, 0.0)
                    };
                    rows.push(ReportRow::new(
                        name,
                        Some(k),
                        Some(t),
                        Some(i),
                        format!("laplace:{}", lambda_label(lam)),
                        e.mean,
                        reference,
                        e.std_error,
                        tol,
                        rule,
                    ));
                    errs.push(((e.mean - reference).abs(), e.std_error));
                }
            }
            errs.sort_by(|a, b| a.0.total_cmp(&b.0));
            per_time.push(errs[errs.len() / 2]);
        }
        medians.push(per_time);
    }
    for w in 1..ks.len() {
        if (ks[w] / ks[w - 1] - 2.0).abs() > 1e-9 {
            continue;
        }
        for (ti, &t) in times.iter().enumerate() {
            let (cur, se) = medians[w][ti];
            let prev = medians[w - 1][ti].0;
            rows.push(ReportRow::new(
                name,
                Some(ks[w]),
                Some(t),
                None,
                "trend:median_error_halving",
                cur,
                prev / 2.0,
                se,
                se,
                Rule::Upper,
            ));
        }
    }
    Ok(rows)
}

/// Small-time behaviour in the large regime at each `epsilon` in `times`.
///
/// Reports `<mu_i^K(eps), 1 - exp(-<lambda,.>)>` against `lambda_i beta_i`
/// (10% relative check at the smallest epsilon), the mono/poly split with the
/// per-replicate identity `<mono_i, <lambda,.>> = lambda_i (L0_i - E_i)/N_K`,
/// the emigrant fraction against `w_i beta_i eps` and the mean of the
/// upper-bound process against `w_i L0_i eps`.
pub fn run_initial_condition(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, HarnessError> {
    check_regime(cfg, Regime::Large)?;
    let name = ExperimentKind::InitialCondition.name();
    let eps_list = cfg.sorted_times();
    if eps_list.iter().any(|&t| t <= 0.0) {
        return Err(HarnessError::Config("epsilon values must be positive".into()));
    }
    let lambdas = cfg.lambdas();
    let mut rows = Vec::new();

    for (ki, &k) in cfg.k_values().iter().enumerate() {
        let p = validate_params(&spec_for_k(&cfg.model, k)?)?;
        let d = p.d;
        let n = p.n_k as f64;
        let seed = seed_for(cfg, ExperimentKind::InitialCondition, ki as u64);
        // per eps: per colony: [E_i/N_K, identity violation] + per lambda [functional, mono, poly]
        let width = 2 + 3 * lambdas.len();
        let est = replicate_means(cfg.replicates, seed, |rng| {
            let mut s = init_state(&p);
            let mut out = Vec::new();
            for &eps in &eps_list {
                s.simulate_until(&p, eps, rng);
                let mu = to_empirical(&s, &p);
                let (mono, poly) = mono_poly_split(&s, &p);
                for i in 0..d {
                    out.push(s.emigrants[i] as f64 / n);
                    let mut violated = false;
                    let mut vals = Vec::new();
                    for lam in &lambdas {
                        let m = mono[i].linear_functional(lam);
                        let identity = lam[i] * (p.l0[i] as f64 - s.emigrants[i] as f64) / n;
                        if (m - identity).abs() > 1e-12 * identity.abs().max(1.0) {
                            violated = true;
                        }
                        vals.extend([laplace_of(&mu[i], lam), m, poly[i].linear_functional(lam)]);
                    }
                    out.push(if violated { 1.0 } else { 0.0 });
                    out.extend(vals);
                }
            }
            out
        });
        let ehat_seed = derive_seed(seed, 1);
        let ehat = replicate_means(cfg.replicates, ehat_seed, |rng| {
            let mut out = Vec::new();
            for i in 0..d {
                let path = simulate_emigration_bound(p.l0[i], p.out_rate(i), p.alpha[i], p.k, eps_list[eps_list.len() - 1], rng);
                out.extend(eps_list.iter().map(|&e| path.value_at(e) as f64));
            }
            out
        });

        for (ei, &eps) in eps_list.iter().enumerate() {
            let check = ei == 0;
            for i in 0..d {
                let base = (ei * d + i) * width;
                let beta_i = p.l0[i] as f64 / n;
                let frac = est[base];
                rows.push(ReportRow::new(name, Some(k), Some(eps), Some(i), "emigrant_fraction", frac.mean, p.out_rate(i) * beta_i * eps, frac.std_error, 3.0 * frac.std_error, Rule::Upper));
                let viol = est[base + 1];
                rows.push(ReportRow::new(name, Some(k), Some(eps), Some(i), "mono_identity_violations", viol.mean * viol.n as f64, 0.0, 0.0, 0.0, Rule::Upper));
                for (li, lam) in lambdas.iter().enumerate() {
                    let f = est[base + 2 + 3 * li];
                    let m = est[base + 3 + 3 * li];
                    let q = est[base + 4 + 3 * li];
                    let target = lam[i] * p.beta[i];
                    let (rule, tol) = if check {
                        (Rule::Abs, REL_INITIAL * target.abs())
                    } else {
                        (Rule::Report, 0.0)
                    };
                    let label = lambda_label(lam);
                    rows.push(ReportRow::new(name, Some(k), Some(eps), Some(i), format!("laplace:{label}"), f.mean, target, f.std_error, tol, rule));
                    rows.push(ReportRow::new(name, Some(k), Some(eps), Some(i), format!("mono:{label}"), m.mean, target, m.std_error, 0.0, Rule::Report));
                    rows.push(ReportRow::new(name, Some(k), Some(eps), Some(i), format!("poly:{label}"), q.mean, 0.0, q.std_error, 0.0, Rule::Report));
                }
                let e = ehat[i * eps_list.len() + ei];
                let mean_ref = p.out_rate(i) * p.l0[i] as f64 * eps;
                rows.push(ReportRow::new(name, Some(k), Some(eps), Some(i), "ehat_mean", e.mean, mean_ref, e.std_error, 3.0 * e.std_error, Rule::Abs));
            }
        }
    }
    Ok(rows)
}

/// Exact invariants of the coalescent along every event, the coupling order
/// on `replicates` coupled paths up to the unscaled horizon `max(times)`, and
/// KS checks of the coupled Kingman marginals.
pub fn run_coupling(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, HarnessError> {
    let name = ExperimentKind::Coupling.name();
    let horizon = cfg.sorted_times().last().copied().unwrap_or(1.0);
    let mut rows = Vec::new();
    for (ki, &k) in cfg.k_values().iter().enumerate() {
        let mut spec = cfg.model.clone();
        spec.k = k;
        let p = validate_params(&spec)?;
        let seed = seed_for(cfg, ExperimentKind::Coupling, ki as u64);

        let audits: Vec<AuditCounts> = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| audit_run(&p, horizon * p.k, &mut replicate_rng(derive_seed(seed, 1), r)))
            .collect();
        let total = audits.iter().fold(AuditCounts::default(), |a, b| a.merge(b));
        for (obs, v) in [
            ("color_mass_violations", total.color_mass),
            ("block_count_violations", total.block_count),
            ("additivity_violations", total.additivity),
            ("mono_split_violations", total.mono_split),
        ] {
            rows.push(ReportRow::new(name, Some(k), Some(horizon), None, obs, v as f64, 0.0, 0.0, 0.0, Rule::Upper));
        }
        rows.push(ReportRow::new(name, Some(k), Some(horizon), None, "events_audited", total.events as f64, 0.0, 0.0, 0.0, Rule::Report));

        let paths: Vec<(bool, u64, f64)> = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| {
                let path = coupled_simulate(&p, horizon, &mut replicate_rng(seed, r));
                let ok = path.first_violation().is_none();
                let last = path.records.last().expect("nonempty");
                let first_tilde = path
                    .records
                    .iter()
                    .find(|rec| rec.ltilde < p.n_k)
                    .map_or(horizon, |rec| rec.time);
                (ok, last.lhat, first_tilde)
            })
            .collect();
        let violations = paths.iter().filter(|x| !x.0).count();
        rows.push(ReportRow::new(name, Some(k), Some(horizon), None, "coupling_order_violations", violations as f64, 0.0, 0.0, 0.0, Rule::Upper));

        let oracle: Vec<(f64, f64)> = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = replicate_rng(derive_seed(seed, 2), r);
                let hat = kingman_simulate(p.n_k, p.alpha_max(), horizon, &mut rng).count_at(horizon) as f64;
                let tilde = kingman_simulate(p.n_k, p.alpha_min_d(), horizon, &mut rng);
                let first = tilde.times.get(1).copied().unwrap_or(horizon);
                (hat, first)
            })
            .collect();
        let lhat: Vec<f64> = paths.iter().map(|x| x.1 as f64).collect();
        let ks_hat = ks_two_sample(&lhat, &oracle.iter().map(|x| x.0).collect::<Vec<_>>());
        rows.push(ReportRow::new(name, Some(k), Some(horizon), None, "ks_pvalue:lhat", ks_hat.p_value, KS_LEVEL, ks_hat.statistic, 0.0, Rule::Lower));
        if p.n_k > p.d as u64 {
            let tilde: Vec<f64> = paths.iter().map(|x| x.2).collect();
            let ks_tilde = ks_two_sample(&tilde, &oracle.iter().map(|x| x.1).collect::<Vec<_>>());
            rows.push(ReportRow::new(name, Some(k), Some(horizon), None, "ks_pvalue:ltilde_first_merge", ks_tilde.p_value, KS_LEVEL, ks_tilde.statistic, 0.0, Rule::Lower));
        }
    }
    Ok(rows)
}

/// Kingman moment bound: for `N = N_K`, `rho = alpha_max`, each `p` in
/// `moments` and `t` in `times`, the mean of `L(t)^p` must not exceed
/// `(N^{-1/p} + rho t / (4p))^{-p}` by more than 3 SE.
pub fn run_kingman_moments(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, HarnessError> {
    let name = ExperimentKind::MomentBounds.name();
    let p = cfg.model.derive()?;
    let n = p.n_k;
    let rho = p.alpha_max();
    let times = cfg.sorted_times();
    let horizon = times.last().copied().unwrap_or(0.0);
    let moments = cfg.moments.clone();
    let est = replicate_means(cfg.replicates, seed_for(cfg, ExperimentKind::MomentBounds, 0), |rng| {
        let path = kingman_simulate(n, rho, horizon, rng);
        let mut out = Vec::new();
        for &q in &moments {
            out.extend(times.iter().map(|&t| (path.count_at(t) as f64).powf(q)));
        }
        out
    });
    let mut rows = Vec::new();
    for (qi, &q) in moments.iter().enumerate() {
        for (ti, &t) in times.iter().enumerate() {
            let e = est[qi * times.len() + ti];
            rows.push(ReportRow::new(
                name,
                None,
                Some(t),
                None,
                format!("kingman_moment:p={q}"),
                e.mean,
                kingman_moment_bound(n, rho, t, q),
                e.std_error,
                3.0 * e.std_error,
                Rule::Upper,
            ));
        }
    }
    Ok(rows)
}

/// Second-moment bounds for `S = sum_i <mu_i^K(t), |.|_1^2>` at every `K`
/// and `t`: `E[S] <= b^2 (1/gamma + alpha_max t)` and
/// `E[S^2] <= e^{2 alpha_max t / K} b^4 (1/gamma^2 + 2 alpha_max t / gamma + alpha_max^2 t^2)`,
/// each up to 3 SE.
pub fn run_second_moments(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, HarnessError> {
    let name = ExperimentKind::MomentBounds.name();
    let times = cfg.sorted_times();
    let mut rows = Vec::new();
    for (ki, &k) in cfg.k_values().iter().enumerate() {
        let p = validate_params(&spec_for_k(&cfg.model, k)?)?;
        let est = replicate_means(cfg.replicates, seed_for(cfg, ExperimentKind::MomentBounds, 1 + ki as u64), |rng| {
            let mut s = init_state(&p);
            let mut out = Vec::new();
            for &t in &times {
                s.simulate_until(&p, t, rng);
                let sm: f64 = to_empirical(&s, &p)
                    .iter()
                    .map(|m| m.integrate(|x| x.iter().sum::<f64>().powi(2)))
                    .sum();
                out.extend([sm, sm * sm]);
            }
            out
        });
        let (b, g, a) = (p.b, p.gamma, p.alpha_max());
        for (ti, &t) in times.iter().enumerate() {
            let first = est[2 * ti];
            let second = est[2 * ti + 1];
            let bound1 = b * b * (1.0 / g + a * t);
            let bound2 = (2.0 * a * t / p.k).exp() * b.powi(4) * (1.0 / (g * g) + 2.0 * a * t / g + a * a * t * t);
            rows.push(ReportRow::new(name, Some(k), Some(t), None, "second_moment", first.mean, bound1, first.std_error, 3.0 * first.std_error, Rule::Upper));
            rows.push(ReportRow::new(name, Some(k), Some(t), None, "second_moment_squared", second.mean, bound2, second.std_error, 3.0 * second.std_error, Rule::Upper));
        }
    }
    Ok(rows)
}

/// [`run_kingman_moments`] followed by [`run_second_moments`].
pub fn run_moment_bounds(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, HarnessError> {
    let mut rows = run_kingman_moments(cfg)?;
    rows.extend(run_second_moments(cfg)?);
    Ok(rows)
}

/// Critical regime: the discrete solution against `c beta_i P_{e_i}(Z(t) = n)`
/// for all `0 < |n|_1 <= max_norm` (tolerance `3 c beta_i SE + 1e-4`), and the
/// generating function at `0`, `1/2` and `1` against Monte Carlo (3 SE).
pub fn run_representation_critical(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, HarnessError> {
    check_regime(cfg, Regime::Critical)?;
    let name = ExperimentKind::Representation.name();
    let p = validate_params(&cfg.model)?;
    let d = p.d;
    let times = cfg.sorted_times();
    let bp = branching_params(&p)?;
    let sol = solve_discrete_at(&p, &times, cfg.max_norm, cfg.dt)?;
    let points = sol.lattice.points().to_vec();
    let pgf_args: Vec<Vec<f64>> = [0.0, 0.5, 1.0].iter().map(|&x| vec![x; d]).collect();
    let mut rows = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        for i in 0..d {
            let seed = seed_for(cfg, ExperimentKind::Representation, (ti * d + i) as u64);
            let sample = sample_branching(&bp, i, t, cfg.samples, seed)?;
            let w = p.c * p.beta[i];
            if sample.explosions > 0 {
                rows.push(ReportRow::new(name, None, Some(t), Some(i), "explosions", sample.explosions as f64, 0.0, 0.0, 0.0, Rule::Report));
            }
            for n in &points {
                let n64: Vec<u64> = n.iter().map(|&x| u64::from(x)).collect();
                let est = pmf_from_states(&sample, &n64)?;
                rows.push(ReportRow::new(
                    name,
                    None,
                    Some(t),
                    Some(i),
                    format!("pmf:{}", n_label(n)),
                    w * est.value,
                    sol.value(ti, i, n),
                    w * est.std_error,
                    3.0 * w * est.std_error + 1e-4,
                    Rule::Abs,
                ));
            }
            for lam in &pgf_args {
                let g = solve_generating_function_at(&p, lam, &[t], cfg.dt)?;
                let est = pgf_estimate(&sample, lam);
                rows.push(ReportRow::new(
                    name,
                    None,
                    Some(t),
                    Some(i),
                    format!("pgf:{}", lambda_label(lam)),
                    est.mean,
                    g.path.v[0][i],
                    est.std_error,
                    3.0 * est.std_error,
                    Rule::Abs,
                ));
            }
        }
    }
    Ok(rows)
}

/// Large regime: the Feller diffusion's Laplace transform against
/// `exp(-<x0, v(t, lambda)>)` over the lambda grid (3 SE), the same at
/// `dt/2` (difference below 2 SE), and for every colony the entrance-law
/// estimate against `v_i(t, lambda)` (3 SE) with its `x0/2` self-consistency
/// check (3 SE of the difference).
pub fn run_representation_large(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, HarnessError> {
    check_regime(cfg, Regime::Large)?;
    let name = ExperimentKind::Representation.name();
    let p = validate_params(&cfg.model)?;
    let d = p.d;
    let dp = diffusion_params(&p)?;
    let times = cfg.sorted_times();
    if times.iter().any(|&t| t <= 0.0) {
        return Err(HarnessError::Config("times must be positive".into()));
    }
    let lambdas = cfg.lambdas();
    let start = cfg.start.clone().unwrap_or_else(|| vec![1.0; d]);
    let mut rows = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        let v: Vec<Vec<f64>> = lambdas
            .iter()
            .map(|lam| solve_laplace_exponent_at(&p, lam, &[t], cfg.dt).map(|e| e.v[0].clone()))
            .collect::<Result<_, _>>()?;
        let seed = seed_for(cfg, ExperimentKind::Representation, 100 * ti as u64);
        let fine = sample_diffusion(&dp, &start, t, cfg.dt, cfg.scheme, cfg.samples, seed);
        let half = sample_diffusion(&dp, &start, t, cfg.dt / 2.0, cfg.scheme, cfg.samples, derive_seed(seed, 1));
        let est = laplace_estimates(&fine, &lambdas);
        let est_half = laplace_estimates(&half, &lambdas);
        for (li, lam) in lambdas.iter().enumerate() {
            let reference = (-start.iter().zip(&v[li]).map(|(x, y)| x * y).sum::<f64>()).exp();
            let label = lambda_label(lam);
            let e = est[li];
            rows.push(ReportRow::new(name, None, Some(t), None, format!("feller_laplace:{label}"), e.mean, reference, e.std_error, 3.0 * e.std_error, Rule::Abs));
            let h = est_half[li];
            let se = e.std_error.hypot(h.std_error);
            rows.push(ReportRow::new(name, None, Some(t), None, format!("feller_dt_halving:{label}"), h.mean, e.mean, se, 2.0 * se, Rule::Abs));
        }
        for i in 0..d {
            let s = derive_seed(seed, 10 + i as u64);
            let q = entrance_law_estimate(&dp, i, t, cfg.x0, cfg.samples, cfg.dt, cfg.scheme, s)?;
            let q_half = entrance_law_estimate(&dp, i, t, cfg.x0 / 2.0, cfg.samples, cfg.dt, cfg.scheme, derive_seed(s, 1))?;
            for (li, lam) in lambdas.iter().enumerate() {
                let label = lambda_label(lam);
                let e = q.laplace(lam);
                rows.push(ReportRow::new(name, None, Some(t), Some(i), format!("entrance_laplace:{label}"), e.mean, v[li][i], e.std_error, 3.0 * e.std_error, Rule::Abs));
                let h = q_half.laplace(lam);
                let se = e.std_error.hypot(h.std_error);
                rows.push(ReportRow::new(name, None, Some(t), Some(i), format!("entrance_x0_halving:{label}"), h.mean, e.mean, se, 3.0 * se, Rule::Abs));
            }
        }
    }
    Ok(rows)
}

pub fn run_representation(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, HarnessError> {
    match cfg.model.regime {
        Regime::Critical => run_representation_critical(cfg),
        Regime::Large => run_representation_large(cfg),
    }
}
