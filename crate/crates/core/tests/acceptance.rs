//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use coalcoag::coag::{solve_discrete, solve_generating_function, solve_laplace_exponent, solve_total_mass};
use coalcoag::coalescent::CylinderFunction;
use coalcoag::harness::{
    dynkin_check, mean_gap_ratio, run_convergence_critical, run_convergence_large, run_coupling,
    run_initial_condition, run_kingman_moments, run_representation_critical,
    run_representation_large, run_second_moments, spec_for_k, ExperimentConfig, ReportRow,
};
use coalcoag::model::{validate_params, ModelParams, ModelSpec, Regime};
use serde_json::{json, Value};

type Check = Result<String, String>;

fn config(v: Value) -> ExperimentConfig {
    ExperimentConfig::from_json(&v.to_string()).expect("valid config")
}

fn symmetric(k: f64, n: u64, alpha: [f64; 2], regime: &str) -> Value {
    json!({
        "d": 2,
        "W": [[0, 1], [1, 0]],
        "alpha": alpha,
        "K": k,
        "N_K": n,
        "L0": [n / 2, n - n / 2],
        "regime": regime,
        "beta": [0.5, 0.5],
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    for (k, v) in extra.as_object().unwrap() {
        base[k] = v.clone();
    }
    base
}

/// Fails with the offending rows unless every row passes and the row's own
/// columns reproduce its pass flag.
fn rows_pass(rows: &[ReportRow]) -> Result<usize, String> {
    if rows.is_empty() {
        return Err("no rows".into());
    }
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| !r.pass || !r.recheck())
        .map(|r| {
            format!(
                "{} K={:?} t={:?} colony={:?}: {} vs {} (tol {})",
                r.observable, r.k, r.t, r.colony, r.simulated, r.reference, r.tolerance
            )
        })
        .collect();
    if bad.is_empty() {
        Ok(rows.len())
    } else {
        Err(bad.join("; "))
    }
}

fn find<'a>(rows: &'a [ReportRow], observable: &str) -> impl Iterator<Item = &'a ReportRow> + 'a {
    let o = observable.to_string();
    rows.iter().filter(move |r| r.observable == o)
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    if (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: {a} vs {b} (tol {tol})"))
    }
}

fn one_dim() -> ModelParams {
    validate_params(&ModelSpec {
        d: 1,
        w: vec![vec![0.0]],
        alpha: vec![2.0],
        k: 100.0,
        n_k: 100,
        l0: vec![100],
        regime: Regime::Critical,
        c: Some(1.0),
        beta: Some(vec![1.0]),
        seed: None,
    })
    .unwrap()
}

/// Constant-kernel Smoluchowski solution summed over colours:
/// mass `m`, kernel `alpha`, `tau = alpha m t / 2`.
fn smoluchowski(m: f64, alpha: f64, t: f64, k: i32) -> f64 {
    let tau = alpha * m * t / 2.0;
    m / (1.0 + tau).powi(2) * (tau / (1.0 + tau)).powi(k - 1)
}

fn exact_invariants() -> Check {
    let cfg = config(merge(
        symmetric(20.0, 100, [1.0, 2.0], "critical"),
        json!({"seed": 101, "replicates": 1000, "times": [1.0]}),
    ));
    let rows = run_coupling(&cfg).map_err(|e| e.to_string())?;
    let events = find(&rows, "events_audited").next().map_or(0.0, |r| r.simulated);
    let mut checked = Vec::new();
    for name in [
        "color_mass_violations",
        "block_count_violations",
        "additivity_violations",
        "mono_split_violations",
        "coupling_order_violations",
    ] {
        checked.extend(find(&rows, name).cloned());
    }
    if checked.len() != 5 || events <= 0.0 {
        return Err(format!("missing rows or no events ({} rows, {events} events)", checked.len()));
    }
    rows_pass(&checked)?;
    Ok(format!("{events} events audited, 1000 coupled paths, zero violations"))
}

fn kingman_moments() -> Check {
    let cfg = config(merge(
        symmetric(1000.0, 1000, [2.0, 2.0], "critical"),
        json!({"seed": 102, "replicates": 2000, "times": [0.1, 0.5, 1.0], "moments": [1, 2]}),
    ));
    let rows = run_kingman_moments(&cfg).map_err(|e| e.to_string())?;
    if rows.len() != 6 {
        return Err(format!("expected 6 rows, got {}", rows.len()));
    }
    for r in &rows {
        let p: f64 = r.observable.trim_start_matches("kingman_moment:p=").parse().unwrap();
        let t = r.t.unwrap();
        let bound = (1000f64.powf(-1.0 / p) + 2.0 * t / (4.0 * p)).powf(-p);
        close(r.reference, bound, 1e-9 * bound, "bound")?;
        close(r.tolerance, 3.0 * r.std_error, 1e-15, "tolerance")?;
    }
    rows_pass(&rows)?;
    let worst = rows.iter().map(|r| r.simulated / r.reference).fold(0.0, f64::max);
    Ok(format!("6 (p, t) cells, largest mean/bound {worst:.3}"))
}

fn second_moments() -> Check {
    let cfg = config(merge(
        symmetric(100.0, 100, [1.0, 1.0], "critical"),
        json!({"c": 1.0, "seed": 103, "replicates": 1000, "times": [0.5, 1.0], "k_list": [50, 100]}),
    ));
    let rows = run_second_moments(&cfg).map_err(|e| e.to_string())?;
    if rows.len() != 8 {
        return Err(format!("expected 8 rows, got {}", rows.len()));
    }
    for r in &rows {
        let k = r.k.unwrap();
        let t = r.t.unwrap();
        // c = 1: gamma = 1, b = 1, alpha_max = 1
        let first = 1.0 + t;
        let second = (2.0 * t / k).exp() * (1.0 + 2.0 * t + t * t);
        let want = if r.observable == "second_moment" { first } else { second };
        close(r.reference, want, 1e-12, &r.observable)?;
    }
    let n = rows_pass(&rows)?;
    Ok(format!("{n} rows over K in {{50, 100}}, t in {{0.5, 1}}"))
}

fn closed_forms() -> Check {
    let p = one_dim();
    let rho = solve_total_mass(&p, 1.0, 1e-3).map_err(|e| e.to_string())?;
    close(*rho.rho.last().unwrap().first().unwrap(), 0.5, 1e-8, "rho(1)")?;
    let sol = solve_discrete(&p, 1.0, 6, 1e-3).map_err(|e| e.to_string())?;
    let last = sol.times.len() - 1;
    for n in 1..=6u32 {
        let exact = 1f64.powi(n as i32 - 1) / 2f64.powi(n as i32 + 1);
        close(sol.value(last, 0, &[n]), exact, 1e-6, &format!("u(1, {n})"))?;
    }
    let v = solve_laplace_exponent(&p, &[1.0], 1.0, 1e-3).map_err(|e| e.to_string())?;
    close(v.last()[0], 0.5, 1e-8, "v(1, 1)")?;
    let g = solve_generating_function(&p, &[0.0], 1.0, 1e-3).map_err(|e| e.to_string())?;
    close(g.path.last()[0], 0.5, 1e-8, "pgf v(1, 0)")?;
    Ok("rho(1), u(1, n <= 6), v(1, 1) and pgf v(1, 0) match".into())
}

fn critical_convergence() -> Check {
    let cfg = config(merge(
        symmetric(200.0, 200, [1.0, 1.0], "critical"),
        json!({"c": 1.0, "seed": 105, "replicates": 40000, "times": [1.0], "k_list": [50, 100, 200], "max_norm": 3}),
    ));
    let rows = run_convergence_critical(&cfg).map_err(|e| e.to_string())?;
    // references against the colour-blind constant-kernel solution
    let m = 0.5;
    for r in find(&rows, "mass").filter(|r| r.k == Some(200.0)) {
        close(r.reference, m / (1.0 + 0.25), 1e-8, "rho_i(1)")?;
    }
    for size in 1..=3 {
        let total: f64 = rows
            .iter()
            .filter(|r| r.k == Some(200.0) && r.colony == Some(0) && r.observable.starts_with("pmf:"))
            .filter(|r| r.observable[4..].split('|').map(|x| x.parse::<i32>().unwrap()).sum::<i32>() == size)
            .map(|r| r.reference)
            .sum();
        close(total, smoluchowski(m, 1.0, 1.0, size), 1e-8, &format!("colour-blind u(1, {size})"))?;
    }
    let checked: Vec<ReportRow> = rows.iter().filter(|r| r.rule != coalcoag::harness::Rule::Report).cloned().collect();
    let trend = checked.iter().filter(|r| r.observable.starts_with("trend:")).count();
    if trend == 0 {
        return Err("no trend rows".into());
    }
    rows_pass(&rows)?;
    let worst = find(&rows, "mass")
        .filter(|r| r.k == Some(200.0))
        .map(|r| (r.simulated - r.reference).abs() / r.reference)
        .fold(0.0, f64::max);
    Ok(format!(
        "{} checked rows ({trend} trend), mass relative error at K=200 {:.2}%",
        checked.len(),
        100.0 * worst
    ))
}

fn critical_representation() -> Check {
    let cfg = config(merge(
        symmetric(200.0, 200, [1.0, 1.0], "critical"),
        json!({"c": 1.0, "seed": 106, "times": [1.0], "samples": 100000, "max_norm": 4}),
    ));
    let rows = run_representation_critical(&cfg).map_err(|e| e.to_string())?;
    let pmf: Vec<ReportRow> = rows.iter().filter(|r| r.observable.starts_with("pmf:")).cloned().collect();
    // 14 lattice points with |n|_1 <= 4, two colonies
    if pmf.len() != 28 {
        return Err(format!("expected 28 pmf rows, got {}", pmf.len()));
    }
    for r in &pmf {
        close(r.tolerance, 3.0 * r.std_error + 1e-4, 1e-15, "tolerance")?;
    }
    for size in 1..=4 {
        let total: f64 = pmf
            .iter()
            .filter(|r| r.colony == Some(1))
            .filter(|r| r.observable[4..].split('|').map(|x| x.parse::<i32>().unwrap()).sum::<i32>() == size)
            .map(|r| r.reference)
            .sum();
        close(total, smoluchowski(0.5, 1.0, 1.0, size), 1e-8, &format!("colour-blind u(1, {size})"))?;
    }
    let n = rows_pass(&rows)?;
    Ok(format!("{n} rows (pmf on |n|_1 <= 4 and pgf), 1e5 samples per colony"))
}

fn grid() -> Value {
    let g: Vec<[f64; 2]> = [0.5, 1.0, 2.0]
        .iter()
        .flat_map(|&a| [0.5, 1.0, 2.0].map(|b| [a, b]))
        .collect();
    json!(g)
}

/// Symmetric colonies and equal lambda: `v = l / (1 + l sigma2 t / 2)` with
/// `sigma2 = 1/2`, `t = 1`.
fn diag(l: f64) -> f64 {
    l / (1.0 + l / 4.0)
}

fn large_representation() -> (Check, Check) {
    let n200 = 200f64.powf(1.5).round() as u64;
    let cfg = config(merge(
        symmetric(200.0, n200, [1.0, 1.0], "large"),
        json!({"seed": 107, "times": [1.0], "lambda_grid": grid(), "samples": 100000, "dt": 0.001, "x0": 0.01}),
    ));
    let rows = match run_representation_large(&cfg) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let feller: Vec<ReportRow> = rows.iter().filter(|r| r.observable.starts_with("feller_")).cloned().collect();
    let entrance: Vec<ReportRow> = rows.iter().filter(|r| r.observable.starts_with("entrance_")).cloned().collect();

    let a = (|| {
        if feller.iter().filter(|r| r.observable.starts_with("feller_laplace:")).count() != 9 {
            return Err("expected 9 grid points".to_string());
        }
        for l in [0.5, 1.0, 2.0] {
            let r = find(&feller, &format!("feller_laplace:{l}|{l}")).next().unwrap();
            close(r.reference, (-2.0 * diag(l)).exp(), 1e-8, "exp(-<x0, v>)")?;
        }
        let n = rows_pass(&feller)?;
        Ok(format!("{n} rows: 3x3 grid within 3 SE, dt vs dt/2 within 2 SE"))
    })();

    let b = (|| {
        for r in entrance.iter().filter(|r| r.observable.starts_with("entrance_laplace:")) {
            let lam = &r.observable["entrance_laplace:".len()..];
            let (x, y) = lam.split_once('|').unwrap();
            if x == y {
                close(r.reference, diag(x.parse().unwrap()), 1e-8, "v_i")?;
            }
        }
        let n = rows_pass(&entrance)?;
        Ok(format!("{n} rows: v_i within 3 SE at x0 = 0.01, x0/2 consistent"))
    })();

    (a, b)
}

fn large_convergence() -> Check {
    let n200 = 200f64.powf(1.5).round() as u64;
    let cfg = config(merge(
        symmetric(200.0, n200, [1.0, 1.0], "large"),
        json!({"seed": 108, "replicates": 10000, "times": [1.0], "lambda_grid": grid(), "k_list": [200]}),
    ));
    let spec = spec_for_k(&cfg.model, 200.0).map_err(|e| e.to_string())?;
    if spec.n_k != n200 {
        return Err(format!("N_K = {} at K = 200", spec.n_k));
    }
    let rows = run_convergence_large(&cfg).map_err(|e| e.to_string())?;
    for l in [0.5, 1.0, 2.0] {
        for r in find(&rows, &format!("laplace:{l}|{l}")) {
            close(r.reference, 0.5 * diag(l), 1e-8, "beta_i v_i")?;
        }
    }
    for r in &rows {
        close(r.tolerance, 0.05 * r.reference.abs(), 1e-15, "5% tolerance")?;
    }
    rows_pass(&rows)?;
    let worst = rows
        .iter()
        .map(|r| (r.simulated - r.reference).abs() / r.reference)
        .fold(0.0, f64::max);
    Ok(format!("{} rows at K=200, N_K={n200}, largest relative error {:.2}%", rows.len(), 100.0 * worst))
}

fn initial_condition() -> Check {
    let n = 500f64.powf(1.5).round() as u64;
    let cfg = config(merge(
        symmetric(500.0, n, [1.0, 1.0], "large"),
        json!({"seed": 109, "replicates": 500, "times": [0.01], "lambda_grid": [[1, 1]]}),
    ));
    let rows = run_initial_condition(&cfg).map_err(|e| e.to_string())?;
    let l0 = (n / 2) as f64;
    for r in find(&rows, "laplace:1|1") {
        close(r.reference, 0.5, 1e-12, "lambda_i beta_i")?;
        close(r.tolerance, 0.05, 1e-12, "10% tolerance")?;
    }
    for r in find(&rows, "ehat_mean") {
        close(r.reference, l0 * 0.01, 1e-9, "w_i L0_i eps")?;
    }
    for r in find(&rows, "emigrant_fraction") {
        close(r.reference, l0 / n as f64 * 0.01, 1e-12, "w_i beta_i eps")?;
    }
    let needed = ["laplace:1|1", "mono_identity_violations", "emigrant_fraction", "ehat_mean"];
    if needed.iter().any(|o| find(&rows, o).count() != 2) {
        return Err("missing rows".into());
    }
    let checked: Vec<ReportRow> = rows.iter().filter(|r| needed.contains(&r.observable.as_str())).cloned().collect();
    rows_pass(&checked)?;
    let f = find(&rows, "laplace:1|1").map(|r| r.simulated).fold(f64::MAX, f64::min);
    Ok(format!("functional >= {f:.4} vs 0.5, identity exact in every replicate"))
}

fn generator_checks() -> Check {
    let p = validate_params(&serde_json::from_value::<ModelSpec>(symmetric(20.0, 20, [1.0, 1.0], "critical")).unwrap())
        .map_err(|e| e.to_string())?;
    let lam = [0.7, 1.3];
    let mut notes = Vec::new();
    for (label, h) in [
        ("f=1", CylinderFunction::projection(2, 0, |_: &[f64]| 1.0)),
        (
            "f=exp",
            CylinderFunction::projection(2, 1, move |x: &[f64]| (-(lam[0] * x[0] + lam[1] * x[1])).exp()),
        ),
    ] {
        let r = dynkin_check(&p, &h, 1.0, 2000, 91);
        if !r.within(4.0) {
            return Err(format!(
                "Dynkin {label}: discrepancy {} with SE {}",
                r.discrepancy.mean, r.discrepancy.std_error
            ));
        }
        notes.push(format!("{label} |z|={:.2}", r.discrepancy.mean.abs() / r.discrepancy.std_error));
    }

    let template = serde_json::from_value::<ModelSpec>(merge(symmetric(25.0, 25, [1.0, 1.0], "critical"), json!({"c": 1.0})))
        .unwrap();
    let mut ratios = Vec::new();
    for k in [25.0, 50.0, 100.0, 200.0] {
        let p = validate_params(&spec_for_k(&template, k).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let h = CylinderFunction::new(
            Box::new(|x: &[f64]| x[0] * x[0] + x[0] * x[1] + x[1] * x[1]),
            (0..2)
                .map(|_| Box::new(move |x: &[f64]| (-(lam[0] * x[0] + lam[1] * x[1])).exp()) as Box<dyn Fn(&[f64]) -> f64 + Send + Sync>)
                .collect(),
        );
        ratios.push(mean_gap_ratio(&p, &h, 0.5, 200, 92 + k as u64).mean);
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    if !(max <= 2.0 * ratios[0]) || ratios.iter().any(|r| !r.is_finite()) {
        return Err(format!("gap ratios {ratios:?} exceed twice the K=25 value"));
    }
    notes.push(format!(
        "gap ratios {}",
        ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
    ));
    Ok(notes.join("; "))
}

fn rk4_order() -> Check {
    let p = one_dim();
    let err = |dt: f64| -> Result<f64, String> {
        let mut e: f64 = 0.0;
        let rho = solve_total_mass(&p, 1.0, dt).map_err(|e| e.to_string())?;
        e = e.max((rho.rho.last().unwrap()[0] - 0.5).abs());
        let sol = solve_discrete(&p, 1.0, 6, dt).map_err(|e| e.to_string())?;
        let last = sol.times.len() - 1;
        for n in 1..=6u32 {
            e = e.max((sol.value(last, 0, &[n]) - 0.5f64.powi(n as i32 + 1)).abs());
        }
        let v = solve_laplace_exponent(&p, &[1.0], 1.0, dt).map_err(|e| e.to_string())?;
        e = e.max((v.last()[0] - 0.5).abs());
        let g = solve_generating_function(&p, &[0.0], 1.0, dt).map_err(|e| e.to_string())?;
        Ok(e.max((g.path.last()[0] - 0.5).abs()))
    };
    let coarse = err(0.1)?;
    let fine = err(0.05)?;
    let ratio = coarse / fine;
    if ratio >= 8.0 {
        Ok(format!("max error {coarse:.2e} -> {fine:.2e}, ratio {ratio:.1}"))
    } else {
        Err(format!("error ratio {ratio:.2} below 8 ({coarse:.2e} -> {fine:.2e})"))
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: &str, what: &str, start: Instant, result: Check| {
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(msg) => println!("PASS [{id}] {what}: {msg} ({secs:.1}s)"),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{id}] {what}: {msg} ({secs:.1}s)");
            }
        }
    };
    let s = Instant::now();
    report("1", "exact invariants and coupling order", s, exact_invariants());
    let s = Instant::now();
    report("2", "Kingman moment bound", s, kingman_moments());
    let s = Instant::now();
    report("3", "second-moment bounds", s, second_moments());
    let s = Instant::now();
    report("4", "one-colony closed forms", s, closed_forms());
    let s = Instant::now();
    report("5", "critical-regime convergence", s, critical_convergence());
    let s = Instant::now();
    report("6", "critical stochastic representation", s, critical_representation());
    let s = Instant::now();
    let (a, b) = large_representation();
    report("7a", "Feller Laplace functional", s, a);
    report("7b", "entrance-law Laplace functional", s, b);
    let s = Instant::now();
    report("7c", "large-regime coalescent functional", s, large_convergence());
    let s = Instant::now();
    report("8", "initial condition", s, initial_condition());
    let s = Instant::now();
    report("9", "generator checks", s, generator_checks());
    let s = Instant::now();
    report("10", "RK4 order", s, rk4_order());
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
