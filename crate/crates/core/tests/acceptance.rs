//! Acceptance suite. Runs without the libtest harness so its output is never
//! captured: one PASS/FAIL line per criterion, nonzero exit on any failure.
//! Runtime bounds are wall-clock times of this binary.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bikenet::cli::{self, Cli, Payload};
use bikenet::desim::{self, SimConfig};
use bikenet::linalg::{compensated_sum, SolverOptions};
use bikenet::productform::{self, Convention};
use bikenet::routing::{self, ReachableClass};
use bikenet::statespace::NetworkState;
use bikenet::traffic::{self, VisitRatios};
use bikenet::{ctmc, metrics, NetworkParams, StateSpace};
use clap::Parser;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn load(name: &str) -> (NetworkParams, StateSpace) {
    let p = NetworkParams::from_path(fixture(name)).unwrap();
    p.checked().unwrap();
    let s = StateSpace::enumerate(&p).unwrap();
    (p, s)
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, format!("{what} took {:.3}s (limit {limit_s}s)", elapsed.as_secs_f64()))
}

fn zero_beta(p: &NetworkParams) -> VisitRatios {
    traffic::solve_node_level(p, &vec![0.0; p.stations]).unwrap()
}

fn exact_product_form() -> Check {
    let t = Instant::now();
    let (p, s) = load("t1.toml");
    let pi = ctmc::solve(&s, &p, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let (_, pf) =
        productform::normalize_direct(&s, &zero_beta(&p), &p, Convention::Standard).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let max = metrics::max_pointwise(&pi.probs, &pf.probs);
    let tv = metrics::total_variation(&pi.probs, &pf.probs);
    ensure(max <= 1e-10, format!("max pointwise {max:e}"))?;
    ensure(tv <= 1e-10, format!("TV {tv:e}"))?;
    within(elapsed, 1.0, "T1 solve")?;
    Ok(format!("max {max:.2e}, TV {tv:.2e}, {:.3}s", elapsed.as_secs_f64()))
}

fn simulation_oracle() -> Check {
    let (p, s) = load("t2.toml");
    let pi = ctmc::solve(&s, &p, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let class = ReachableClass::from_initial(&s, &p).map_err(|e| e.to_string())?;
    let cfg = SimConfig { horizon: 1e5, warmup: 1e3, replications: 20, base_seed: 1, ..SimConfig::default() };
    let t = Instant::now();
    let out = desim::simulate(&p, &s, &cfg).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();

    let inside = |est: f64, se: f64, exact: f64| (est - exact).abs() <= 3.0 * se;
    let hits = class
        .states
        .iter()
        .filter(|&&r| inside(out.state_estimates[r].mean, out.state_estimates[r].std_error, pi.probs[r]))
        .count();
    let frac = hits as f64 / class.len() as f64;
    ensure(frac >= 0.95, format!("{hits}/{} states within 3 SE", class.len()))?;

    let q = metrics::mean_queues(&pi, &s).map_err(|e| e.to_string())?;
    let find = |name: &str| out.estimates.iter().find(|e| e.target == name).cloned();
    let mut checked = 0;
    for i in 0..p.stations {
        let pr = metrics::problematic(&pi, &s, i).map_err(|e| e.to_string())?;
        for (name, exact) in
            [(format!("problematic_{}", i + 1), pr.problematic), (format!("Q_{}", i + 1), q.stations[i])]
        {
            let est = find(&name).ok_or(format!("no estimate {name}"))?;
            ensure(
                inside(est.mean, est.std_error, exact),
                format!("{name}: {} +- {} vs {exact}", est.mean, est.std_error),
            )?;
            checked += 1;
        }
    }
    within(elapsed, 60.0, "T2 simulation")?;
    Ok(format!("{hits}/{} states, {checked} station measures within 3 SE, {:.1}s", class.len(), elapsed.as_secs_f64()))
}

fn state_level_fidelity() -> Check {
    let mut worst_row = 0.0f64;
    let mut worst_res = 0.0f64;
    let mut worst_embed = 0.0f64;
    for name in ["t1.toml", "t2.toml"] {
        let (p, s) = load(name);
        let opts = SolverOptions::default();
        let jump = routing::jump_chain(&s, &p).map_err(|e| e.to_string())?;
        for r in jump.row_sums() {
            worst_row = worst_row.max((r - 1.0).abs());
        }
        let class = ReachableClass::from_initial(&s, &p).map_err(|e| e.to_string())?;
        let sol = traffic::solve_state_level(&jump.restrict(&class.states), &opts).map_err(|e| e.to_string())?;
        ensure(sol.values.iter().all(|&x| x > 0.0), format!("{name}: non-positive fixed vector"))?;
        worst_res = worst_res.max(sol.residual);

        let pi = ctmc::solve(&s, &p, &opts).map_err(|e| e.to_string())?;
        let scaled: Vec<f64> =
            class.states.iter().zip(&sol.values).map(|(&g, &x)| x / routing::exit_rate(&p, s.components(g))).collect();
        let total = compensated_sum(scaled.iter().copied());
        let implied: Vec<f64> = scaled.iter().map(|x| x / total).collect();
        worst_embed = worst_embed.max(metrics::max_pointwise(&implied, &class.gather(&pi.probs)));
    }
    ensure(worst_row <= 1e-12, format!("row sum error {worst_row:e}"))?;
    ensure(worst_res <= 1e-10, format!("state-level residual {worst_res:e}"))?;
    ensure(worst_embed <= 1e-8, format!("embedded identity error {worst_embed:e}"))?;
    Ok(format!("rows {worst_row:.1e}, residual {worst_res:.1e}, embedded {worst_embed:.1e}"))
}

fn product_form_consistency() -> Check {
    let mut worst_sum = 0.0f64;
    let mut worst_scale = 0.0f64;
    let mut compared = 0usize;
    for name in ["t1.toml", "t2.toml", "t3.toml"] {
        let (p, s) = load(name);
        let beta = if p.regime() == bikenet::Regime::NoFull { vec![0.0; p.stations] } else { vec![0.3; p.stations] };
        let ratios = traffic::solve_node_level(&p, &beta).map_err(|e| e.to_string())?;
        for conv in [Convention::Standard, Convention::Literal] {
            let (_, d) = productform::normalize_direct(&s, &ratios, &p, conv).map_err(|e| e.to_string())?;
            worst_sum = worst_sum.max((d.total() - 1.0).abs());
            let (_, d2) =
                productform::normalize_direct(&s, &ratios.scaled(3.7), &p, conv).map_err(|e| e.to_string())?;
            worst_scale = worst_scale.max(metrics::max_pointwise(&d.probs, &d2.probs));
        }
        // Literal and standard weights agree bit for bit when every road
        // carries at most one bike in total.
        let roads = p.num_roads();
        for comps in s.iter() {
            let m1 = &comps[p.stations..p.stations + roads];
            let m2 = &comps[p.stations + roads..];
            if m1.iter().zip(m2).any(|(a, b)| a + b > 1) {
                continue;
            }
            let st = NetworkState::from_components(p.stations, comps);
            let a = productform::weight(&st, &ratios, &p, Convention::Literal);
            let b = productform::weight(&st, &ratios, &p, Convention::Standard);
            ensure(a == b, format!("{name} {comps:?}: literal {a} != standard {b}"))?;
            compared += 1;
        }
    }
    ensure(worst_sum <= 1e-12, format!("sum error {worst_sum:e}"))?;
    ensure(worst_scale <= 1e-12, format!("rescaling changed probabilities by {worst_scale:e}"))?;
    Ok(format!("sum {worst_sum:.1e}, rescale {worst_scale:.1e}, {compared} single-bike-road states equal"))
}

fn brute_force_count(p: &NetworkParams) -> usize {
    let dim = p.stations * (2 * p.stations - 1);
    let total = p.total_bikes();
    let mut count = 0;
    let mut v = vec![0u32; dim];
    loop {
        let ok = v.iter().sum::<u32>() == total && v[..p.stations].iter().all(|&n| n <= p.capacity);
        count += ok as usize;
        let mut i = 0;
        loop {
            if i == dim {
                return count;
            }
            let cap = if i < p.stations { p.capacity } else { total };
            if v[i] < cap {
                v[i] += 1;
                break;
            }
            v[i] = 0;
            i += 1;
        }
    }
}

fn conservation_and_counting() -> Check {
    let mut q0_worst = 0.0f64;
    let mut counts = Vec::new();
    for (name, expected) in [("t1.toml", 21), ("t2.toml", 114)] {
        let (p, s) = load(name);
        let brute = brute_force_count(&p);
        ensure(s.len() == expected && brute == expected, format!("{name}: |states| {} brute {brute}", s.len()))?;
        ensure(
            s.iter().all(|c| c.iter().sum::<u32>() == p.total_bikes()),
            format!("{name}: enumerated state breaks conservation"),
        )?;
        counts.push(s.len());

        let cfg = SimConfig { horizon: 2e3, warmup: 0.0, replications: 1, trace_events: 5000, ..SimConfig::default() };
        let out = desim::simulate(&p, &s, &cfg).map_err(|e| e.to_string())?;
        ensure(!out.trace.is_empty(), "empty trace")?;
        ensure(
            out.trace.iter().all(|t| t.state.iter().sum::<u32>() == p.total_bikes()),
            format!("{name}: simulated state breaks conservation"),
        )?;

        let opts = SolverOptions::default();
        let ratios = zero_beta(&p);
        let mut dists = vec![ctmc::solve(&s, &p, &opts).map_err(|e| e.to_string())?];
        for conv in [Convention::Standard, Convention::Literal] {
            dists.push(productform::normalize_direct(&s, &ratios, &p, conv).map_err(|e| e.to_string())?.1);
        }
        for d in &dists {
            let q = metrics::mean_queues(d, &s).map_err(|e| e.to_string())?;
            q0_worst = q0_worst.max((q.q0_direct - q.q0_complement).abs());
        }
    }
    ensure(q0_worst <= 1e-12, format!("Q0 direct vs complement {q0_worst:e}"))?;
    Ok(format!("counts {counts:?}, Q0 gap {q0_worst:.1e}"))
}

fn convolution() -> Check {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut sizes = Vec::new();
    for name in ["t1.toml", "t3.toml"] {
        let (p, s) = load(name);
        let ratios = zero_beta(&p);
        let (direct, _) =
            productform::normalize_direct(&s, &ratios, &p, Convention::Standard).map_err(|e| e.to_string())?;
        let conv = productform::normalize_convolution(&p, &ratios).map_err(|e| e.to_string())?;
        let rel = ((conv.log_g - direct.log_g).exp() - 1.0).abs();
        worst = worst.max(rel);
        sizes.push(s.len());
    }
    let elapsed = t.elapsed();
    ensure(worst <= 1e-10, format!("relative G error {worst:e}"))?;
    within(elapsed, 5.0, "convolution check")?;
    Ok(format!("states {sizes:?}, relative error {worst:.1e}, {:.3}s", elapsed.as_secs_f64()))
}

fn crosscheck_once() -> Result<(Vec<u8>, Payload), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = fixture("t2.toml");
    let args = [
        "bikenet",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--timestamp",
        "2000-01-01T00:00:00Z",
        "crosscheck",
        "--config",
        cfg.to_str().unwrap(),
    ];
    let cli = Cli::try_parse_from(args).map_err(|e| e.to_string())?;
    let outcome = cli::run(&cli).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for f in &outcome.files {
        bytes.extend(std::fs::read(f).map_err(|e| e.to_string())?);
    }
    Ok((bytes, outcome.result.payload))
}

fn full_regime_report() -> Check {
    let (a, payload) = crosscheck_once()?;
    let (b, _) = crosscheck_once()?;
    ensure(a == b, "crosscheck output differs between runs")?;
    let Payload::Crosscheck { summary: c } = payload else {
        return Err("unexpected payload".into());
    };
    ensure(c.tv_standard_vs_ctmc.is_finite() && c.tv_literal_vs_ctmc.is_finite(), "non-finite TV")?;
    ensure(c.fixed_point_standard.iterations > 0, "no fixed-point metadata")?;
    Ok(format!(
        "TV(std, ctmc) {:.4}, TV(lit, ctmc) {:.4}, fixed point {} iterations (converged {})",
        c.tv_standard_vs_ctmc,
        c.tv_literal_vs_ctmc,
        c.fixed_point_standard.iterations,
        c.fixed_point_standard.converged
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("1 exact product form (T1)", exact_product_form),
        ("2 simulation vs CTMC (T2)", simulation_oracle),
        ("3 jump chain and state-level solution", state_level_fidelity),
        ("4 product-form consistency", product_form_consistency),
        ("5 conservation and counting", conservation_and_counting),
        ("6 convolution vs direct G", convolution),
        ("7 full-station crosscheck report", full_regime_report),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        ExitCode::FAILURE
    }
}
