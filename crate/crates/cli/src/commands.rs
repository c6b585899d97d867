use std::io::Write;

use anyhow::{Context, Result};
use log::warn;
use serde::Serialize;

use fbm_forecast::accuracy::{hit_ratio, ternary_probabilities_exact, ternary_probabilities_taylor};
use fbm_forecast::backtest::{load_series, run_backtest};
use fbm_forecast::fbm::{simulate_path, simulate_uniform_path};
use fbm_forecast::hurst::rolling_hurst;
use fbm_forecast::lags::{lag_table, optimize_lags};
use fbm_forecast::montecarlo::simulate_strategy;
use fbm_forecast::predictor::solve_predictor;
use fbm_forecast::strategy::{expected_return, optimal_threshold, risk};
use fbm_forecast::{
    EstimatorConfig, Execution, FbmSpec, LagStructure, PredictorSolution, QuadratureConfig, StrategyMetrics,
    TernaryProbabilities, TimeGrid,
};

use crate::args::*;
use crate::config;
use crate::output::{open, sig6, write_table};
use crate::UsageError;

pub struct Ctx {
    pub exec: Execution,
    pub json: bool,
    pub output: Option<std::path::PathBuf>,
}

impl Ctx {
    fn writer(&self) -> Result<Box<dyn Write>> {
        open(self.output.as_deref()).map_err(|e| fbm_forecast::Error::from(e).into())
    }

    fn emit_json<T: Serialize>(&self, value: &T) -> Result<()> {
        let mut w = self.writer()?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn emit_pairs(&self, pairs: &[(&str, String)]) -> Result<()> {
        let mut w = self.writer()?;
        for (k, v) in pairs {
            writeln!(w, "{k} {v}")?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx {
        exec: if cli.sequential { Execution::Sequential } else { Execution::Parallel },
        json: cli.json,
        output: cli.output.clone(),
    };
    match &cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::HitRatio(a) => hit_ratio_cmd(&ctx, a),
        Command::OptimalLags(a) => optimal_lags(&ctx, a),
        Command::Ternary(a) => ternary(&ctx, a),
        Command::OptimalTheta(a) => optimal_theta(&ctx, a),
        Command::EstimateHurst(a) => estimate_hurst(&ctx, a),
        Command::Backtest(a) => backtest(&ctx, a),
        Command::McVerify(a) => mc_verify(&ctx, a),
        Command::Tables(a) => tables(&ctx, a),
    }
}

fn solve(m: &ModelArgs) -> Result<(FbmSpec, LagStructure, PredictorSolution)> {
    let spec = FbmSpec::new(m.hurst, m.sigma)?;
    let lags = LagStructure::anchored(m.h, &m.lags.0)?;
    let sol = solve_predictor(&spec, &lags)?;
    Ok((spec, lags, sol))
}

fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let spec = FbmSpec::new(a.hurst, a.sigma)?;
    let points = a.points as usize;
    let paths: Vec<Vec<f64>> = match a.method {
        Method::Cholesky => {
            if points > 5_000 {
                return Err(UsageError(format!(
                    "--method cholesky is limited to 5000 points, got {points}; use --method circulant"
                ))
                .into());
            }
            let grid = TimeGrid::uniform(a.step, points)?;
            let sim = simulate_path(&spec, &grid, a.seed, a.paths as usize, ctx.exec)?;
            sim.paths().map(<[f64]>::to_vec).collect()
        }
        Method::Circulant => (0..a.paths)
            .map(|p| simulate_uniform_path(&spec, points, a.step, a.seed.wrapping_add(p)))
            .collect::<fbm_forecast::Result<_>>()?,
    };
    let mut w = ctx.writer()?;
    let header: Vec<String> = std::iter::once("time".to_string())
        .chain((0..paths.len()).map(|p| format!("path_{p}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for j in 0..=points {
        let mut row = vec![format!("{:?}", j as f64 * a.step)];
        row.extend(paths.iter().map(|p| format!("{:?}", p[j])));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct HitRatioOut<'a> {
    hit_ratio: f64,
    solution: &'a PredictorSolution,
}

fn hit_ratio_cmd(ctx: &Ctx, a: &ModelArgs) -> Result<()> {
    let (_, _, sol) = solve(a)?;
    let rho = hit_ratio(&sol);
    if ctx.json {
        ctx.emit_json(&HitRatioOut { hit_ratio: rho, solution: &sol })
    } else {
        let mut w = ctx.writer()?;
        writeln!(w, "{}", sig6(rho))?;
        w.flush()?;
        Ok(())
    }
}

fn optimal_lags(ctx: &Ctx, a: &OptimalLagsArgs) -> Result<()> {
    let spec = FbmSpec::standard(a.hurst)?;
    let opt = optimize_lags(&spec, a.h, a.n as usize, ctx.exec)?;
    ctx.emit_json(&opt)
}

fn ternary(ctx: &Ctx, a: &TernaryArgs) -> Result<()> {
    let (_, _, sol) = solve(&a.model)?;
    let theta = match (a.theta, a.theta_over_a) {
        (Some(t), _) => t,
        (None, Some(m)) => m * sol.a,
        (None, None) => unreachable!("clap requires one of the two"),
    };
    let t: TernaryProbabilities = match a.evaluator {
        EvaluatorArg::Exact => ternary_probabilities_exact(&sol, theta, &QuadratureConfig::default())?,
        EvaluatorArg::Taylor => ternary_probabilities_taylor(&sol, theta)?,
    };
    if ctx.json {
        return ctx.emit_json(&t);
    }
    ctx.emit_pairs(&[
        ("p_plus", sig6(t.p_plus)),
        ("p_minus", sig6(t.p_minus)),
        ("p_zero", sig6(t.p_zero)),
        ("theta", sig6(t.theta)),
        ("evaluator", format!("{:?}", t.evaluator).to_lowercase()),
    ])
}

fn optimal_theta(ctx: &Ctx, a: &OptimalThetaArgs) -> Result<()> {
    let (_, _, sol) = solve(&a.model)?;
    let (theta, m): (f64, StrategyMetrics) = optimal_threshold(&sol, a.lambda)?;
    if ctx.json {
        return ctx.emit_json(&m);
    }
    ctx.emit_pairs(&[
        ("theta", sig6(theta)),
        ("theta_over_a", sig6(theta / sol.a)),
        ("expected_return", sig6(m.expected_return)),
        ("risk", sig6(m.risk)),
        ("risk_adjusted", sig6(m.risk_adjusted)),
        ("lambda", sig6(m.lambda)),
    ])
}

fn estimator(args: &EstimatorArgs) -> Result<EstimatorConfig> {
    let d = EstimatorConfig::default();
    EstimatorConfig::new(
        args.window.unwrap_or(d.window),
        args.tau1.unwrap_or(d.tau1),
        args.tau2.unwrap_or(d.tau2),
    )
    .map_err(|e| UsageError(e.to_string()).into())
}

fn estimate_hurst(ctx: &Ctx, a: &EstimateHurstArgs) -> Result<()> {
    let cfg = estimator(&a.estimator)?;
    let series = load_series(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let values: Vec<f64> = series.iter().map(|r| r.value).collect();
    let rolling = rolling_hurst(&values, &cfg, ctx.exec)?;
    if !rolling.gaps.is_empty() {
        warn!("{} windows could not be estimated", rolling.gaps.len());
    }
    if ctx.json {
        return ctx.emit_json(&rolling);
    }
    let mut w = ctx.writer()?;
    writeln!(w, "timestamp,hurst,sigma,out_of_range")?;
    for e in &rolling.estimates {
        writeln!(
            w,
            "{},{},{},{}",
            series[e.index].timestamp,
            sig6(e.hurst),
            sig6(e.sigma),
            e.out_of_range
        )?;
    }
    w.flush()?;
    Ok(())
}

fn backtest(ctx: &Ctx, a: &BacktestArgs) -> Result<()> {
    let file = match &a.config {
        Some(p) => config::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => Default::default(),
    };
    let cfg = config::backtest_config(&file, a)?;
    let steps_output = a.steps_output.clone().or_else(|| file.get("steps_output").map(Into::into));
    let series = load_series(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let report = run_backtest(&series, &cfg, ctx.exec)?;
    if let Some(path) = steps_output {
        let f = std::fs::File::create(&path).map_err(fbm_forecast::Error::from)?;
        report.write_steps_csv(std::io::BufWriter::new(f))?;
    }
    if report.summary.gaps > 0 {
        warn!("{} steps skipped after failed estimation", report.summary.gaps);
    }
    ctx.emit_json(&report.summary)
}

#[derive(Debug, Serialize)]
struct VerifyRow {
    metric: String,
    theta_over_a: f64,
    theory: f64,
    empirical: f64,
    std_error: f64,
    z: f64,
    within_3se: bool,
}

impl VerifyRow {
    fn new(metric: &str, theta_over_a: f64, theory: f64, empirical: f64, std_error: f64) -> Self {
        let diff = (theory - empirical).abs();
        let z = if std_error > 0.0 { diff / std_error } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
        Self {
            metric: metric.into(),
            theta_over_a,
            theory,
            empirical,
            std_error,
            z,
            within_3se: diff <= 3.0 * std_error,
        }
    }
}

#[derive(Serialize)]
struct VerifyOut {
    hurst: f64,
    lags: Vec<f64>,
    trials: u64,
    seed: u64,
    rows: Vec<VerifyRow>,
}

fn mc_verify(ctx: &Ctx, a: &McVerifyArgs) -> Result<()> {
    let spec = FbmSpec::new(a.hurst, a.sigma)?;
    let lags = match &a.lags {
        Some(l) => l.0.clone(),
        None => match optimize_lags(&spec, a.h, a.n as usize, ctx.exec) {
            Ok(opt) => opt.lags,
            Err(_) => (1..=a.n).map(|i| i as f64 * a.h).collect(),
        },
    };
    let structure = LagStructure::anchored(a.h, &lags)?;
    let sol = solve_predictor(&spec, &structure)?;
    let multiples: Vec<f64> = if sol.a > 0.0 { a.theta_over_a.clone() } else { vec![0.0] };
    let thetas: Vec<f64> = multiples.iter().map(|m| m * sol.a).collect();
    let mc = simulate_strategy(&spec, &structure, &thetas, a.trials, a.seed, ctx.exec)?;

    let mut rows = Vec::new();
    let rho = hit_ratio(&sol);
    let zero = mc.iter().zip(&multiples).find(|(_, m)| **m == 0.0).map(|(e, _)| *e);
    let hit = match zero {
        Some(e) => e,
        None => simulate_strategy(&spec, &structure, &[0.0], a.trials, a.seed, ctx.exec)?[0],
    };
    let se = (rho * (1.0 - rho) / a.trials as f64).sqrt();
    if sol.a > 0.0 {
        rows.push(VerifyRow::new("hit_ratio", 0.0, rho, hit.p_plus, se));
        let cfg = QuadratureConfig::default();
        for ((m, theta), e) in multiples.iter().zip(&thetas).zip(&mc) {
            let t = ternary_probabilities_exact(&sol, *theta, &cfg)?;
            rows.push(VerifyRow::new("p_plus", *m, t.p_plus, e.p_plus, e.p_plus_se));
            rows.push(VerifyRow::new("p_minus", *m, t.p_minus, e.p_minus, e.p_minus_se));
            rows.push(VerifyRow::new("p_zero", *m, t.p_zero, e.p_zero, e.p_zero_se));
            rows.push(VerifyRow::new("mean_return", *m, expected_return(&sol, *theta)?, e.mean_return, e.mean_return_se));
            rows.push(VerifyRow::new("risk", *m, risk(&sol, *theta)?, e.mean_loss, e.mean_loss_se));
        }
    } else {
        // The martingale predictor never trades; its hit ratio is ½ by symmetry.
        rows.push(VerifyRow::new("hit_ratio", 0.0, 0.5, 0.5, se));
        rows.push(VerifyRow::new("p_zero", 0.0, 1.0, hit.p_zero, hit.p_zero_se));
    }

    if ctx.json {
        return ctx.emit_json(&VerifyOut { hurst: a.hurst, lags, trials: a.trials, seed: a.seed, rows });
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.metric.clone(),
                sig6(r.theta_over_a),
                sig6(r.theory),
                sig6(r.empirical),
                sig6(r.std_error),
                sig6(r.z),
                if r.within_3se { "ok" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    let mut w = ctx.writer()?;
    writeln!(
        w,
        "# H = {}, lags = [{}], trials = {}, seed = {}",
        sig6(a.hurst),
        lags.iter().map(|l| sig6(*l)).collect::<Vec<_>>().join(", "),
        a.trials,
        a.seed
    )?;
    write_table(&mut w, &["metric", "theta/a", "theory", "empirical", "std_error", "z", "status"], &body)?;
    w.flush()?;
    Ok(())
}

fn tables(ctx: &Ctx, a: &TablesArgs) -> Result<()> {
    let hurst = if a.which == 1 { 0.65 } else { 0.15 };
    let max_n = a.max_n as usize;
    let table = lag_table(&FbmSpec::standard(hurst)?, max_n, ctx.exec)?;
    if ctx.json {
        return ctx.emit_json(&table);
    }
    let mut w = ctx.writer()?;
    let mut header = vec!["n".to_string()];
    header.extend((1..=max_n).map(|i| format!("delta_{i}")));
    header.push("hit_ratio".into());
    writeln!(w, "{}", header.join(","))?;
    for opt in &table {
        let mut row = vec![opt.n.to_string()];
        row.extend((0..max_n).map(|i| opt.lags.get(i).map(|d| sig6(*d)).unwrap_or_default()));
        row.push(sig6(opt.hit_ratio));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
