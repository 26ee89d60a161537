use std::path::Path;
use std::time::Instant;

use flockring::config::{bundled, ConfigError, ScenarioConfig};
use flockring::formation::plan_report;
use flockring::io::{emit_run, format_sig};
use flockring::optimizer::{scenario_bounds, tune, OptimizerConfig};
use flockring::sim::{run, SimError};
use flockring::Mode;

use crate::manifest::RunManifest;
use crate::{Failure, OptimizeArgs, PlanArgs, SimulateArgs};

/// A file path, or failing that the name of a bundled scenario.
pub fn load_config(source: &str) -> Result<ScenarioConfig, Failure> {
    let path = Path::new(source);
    let loaded = if path.exists() {
        ScenarioConfig::load(path)
    } else {
        match bundled(source) {
            Err(ConfigError::UnknownBundled(_)) => ScenarioConfig::load(path),
            other => other,
        }
    };
    loaded.map_err(|e| Failure::input(format!("{source}: {e}")))
}

fn sim_failure(err: SimError) -> Failure {
    match err {
        SimError::Divergence { .. } => Failure {
            code: 3,
            message: err.to_string(),
        },
        other => Failure::input(other.to_string()),
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = run(&cfg).map_err(sim_failure)?;
    let mut artifacts = emit_run(&out, &args.out).map_err(Failure::output)?;
    let resolved = args.out.join("scenario.toml");
    std::fs::write(&resolved, cfg.to_toml_string())
        .map_err(|e| Failure::output(format!("cannot write {}: {e}", resolved.display())))?;
    artifacts.push(resolved);
    RunManifest::write(
        "simulate",
        &args.config,
        cfg.seed,
        &args.out,
        &artifacts,
        started,
    )?;

    let last = out.metrics.last();
    println!(
        "{}: {} steps, {} events, {} violations, final N = {}",
        if cfg.name.is_empty() {
            &args.config
        } else {
            &cfg.name
        },
        out.metrics.len(),
        out.events.len(),
        out.violations.len(),
        last.map(|m| m.n_alive).unwrap_or(cfg.agents.count)
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn optimize(args: &OptimizeArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let mut base = load_config(&args.config)?;
    if !matches!(base.mode, Mode::Single) {
        return Err(Failure::input(
            "optimization needs a single-circle base scenario",
        ));
    }
    if let Some(n) = args.agents {
        base.agents.count = n;
        base.validate().map_err(|e| Failure::input(e.to_string()))?;
    }
    let space = scenario_bounds(args.scenario).map_err(|e| Failure::input(e.to_string()))?;
    let cfg = OptimizerConfig {
        algorithm: args.algorithm.into(),
        population: args.population,
        iterations: args.iterations,
        seed: args.seed,
    };
    let report = tune(&base, space, cfg).map_err(|e| Failure::input(e.to_string()))?;
    let artifacts = report.emit(&base, &args.out).map_err(Failure::output)?;
    RunManifest::write(
        "optimize",
        &args.config,
        args.seed,
        &args.out,
        &artifacts,
        started,
    )?;

    println!(
        "{} scenario {}: {} free parameters, best cost {} (initial {})",
        cfg.algorithm,
        args.scenario,
        report.space.dim(),
        format_sig(report.result.best_cost),
        format_sig(report.result.initial_best())
    );
    for (b, v) in report.space.free.iter().zip(&report.result.best) {
        println!("  {:<10} {}", b.param.name(), format_sig(*v));
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn plan(args: &PlanArgs) -> Result<(), Failure> {
    let (counts, d_l1, d_eps, kappa) = match &args.config {
        Some(source) => {
            let cfg = load_config(source)?;
            let Mode::MultiCircle(spec) = &cfg.mode else {
                return Err(Failure::input(format!(
                    "{source} is not a multi-circle scenario"
                )));
            };
            (
                spec.counts.clone(),
                cfg.params.d_l,
                spec.d_eps,
                cfg.params.kappa,
            )
        }
        None => (args.counts.clone(), args.d_l1, args.d_eps, args.kappa),
    };
    let report = plan_report(&counts, d_l1, d_eps, kappa);
    let join = |xs: &[f64]| {
        xs.iter()
            .map(|x| format!("{x:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("counts          {counts:?}");
    println!("spacing d       {:.4}", report.spacing);
    println!("range r = k*d   {:.4}", report.interaction_range);
    println!("radii           {}", join(&report.radii));
    println!("cut-offs        {}", join(&report.cutoffs));
    println!("gap - r margins {}", join(&report.range_margins));
    if report.violations.is_empty() {
        println!("valid");
        Ok(())
    } else {
        for v in &report.violations {
            println!("violated: {v}");
        }
        Err(Failure {
            code: 4,
            message: format!("plan invalid ({} violations)", report.violations.len()),
        })
    }
}
