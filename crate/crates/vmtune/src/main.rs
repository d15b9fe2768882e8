//! Command-line entry point: simulate presets or system files, tune
//! controllers, sweep cost landscapes, query the LTI oracle, and dump
//! preset configurations. Outputs are plot-ready CSV/JSON files, each run
//! accompanied by a manifest recording configuration hash, seed, and
//! version.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure.

use clap::{Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use vmtune::closedloop::{simulate_from, ClosedLoopSystem};
use vmtune::experiments::ExperimentPreset;
use vmtune::lti::{cart_closed_loop, gain_curve, hinf_gain, oracle_optimum};
use vmtune::optimize::{
    cost_landscape, tune_adversarial, tune_sampled, Aggregate, ParameterMap,
};
use vmtune::scenarios::{grid_scenarios, LiftedScenario, Scenario, ScenarioSet};
use vmtune::schema::{RunManifest, SystemDoc};
use vmtune::sim::{write_trajectory_csv, SimConfig};
use vmtune::Error;

#[derive(Parser)]
#[command(name = "vmtune", version, about = "Virtual-mechanism controller design and tuning")]
struct Cli {
    /// Worker threads for scenario evaluation (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed (falls back to VMTUNE_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write trajectory CSV + loss JSON.
    Simulate {
        /// Preset name (cart|reach|rcm) or path to a system JSON file.
        #[arg(long)]
        system: String,
        /// Scenario index into the preset set, "zero", or a scenario JSON file.
        #[arg(long, default_value = "zero")]
        scenario: String,
        /// Comma-separated θ values (defaults to the preset θ₀).
        #[arg(long)]
        theta: Option<String>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Initial state override, comma-separated.
        #[arg(long)]
        x0: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Record every k-th step in the CSV.
        #[arg(long, default_value_t = 10)]
        record_every: usize,
    },
    /// Tune a preset controller over sampled or adversarial scenarios.
    Tune {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value = "sampled")]
        mode: String,
        /// Sampled-mode scenario count (grid probes).
        #[arg(long, default_value_t = 400)]
        n_scenarios: usize,
        /// Outer iterations (sampled) — defaults to the preset's setting.
        #[arg(long)]
        iters: Option<usize>,
        /// Adversarial outer rounds.
        #[arg(long, default_value_t = 22)]
        rounds: usize,
        /// Adversarial initial scenario count.
        #[arg(long, default_value_t = 3)]
        n_initial: usize,
        /// Aggregate across scenarios: max or sum.
        #[arg(long, default_value = "max")]
        aggregate: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Record the θ trajectory in the result JSON.
        #[arg(long, default_value_t = false)]
        theta_history: bool,
    },
    /// Dense (k, b) cost landscape of the cart preset, CSV "k,b,cost".
    Landscape {
        #[arg(long, default_value = "cart")]
        preset: String,
        #[arg(long, default_value = "sampled")]
        mode: String,
        #[arg(long, default_value_t = 24)]
        n_scenarios: usize,
        #[arg(long, default_value_t = 25)]
        resolution: usize,
        #[arg(long, default_value_t = 50.0)]
        k_min: f64,
        #[arg(long, default_value_t = 500.0)]
        k_max: f64,
        #[arg(long, default_value_t = 10.0)]
        b_min: f64,
        #[arg(long, default_value_t = 100.0)]
        b_max: f64,
        /// Also run the optimizer and emit its (k, b) trajectory CSV.
        #[arg(long, default_value_t = true)]
        trajectory: bool,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Frequency-sweep gain of the weighted LTI cart closed loop.
    Oracle {
        #[arg(long, default_value_t = 237.68)]
        k: f64,
        #[arg(long, default_value_t = 50.0)]
        b: f64,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        /// Search (k, b) for the minimum gain instead of evaluating one point.
        #[arg(long, default_value_t = false)]
        sweep: bool,
        /// Write the gain curve CSV "omega,sigma_max" to this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Preset inspection.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// Print the full system JSON of a preset.
    Dump { name: String },
    /// List available presets.
    List,
}

fn main() {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
    let seed = cli.seed.unwrap_or_else(|| {
        std::env::var("VMTUNE_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(0)
    });
    let code = match run(cli.command, seed) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Contract(_) | Error::Json(_) => 2,
                Error::Integration { .. } | Error::SingularMass { .. } => 3,
                Error::Io(_) => 2,
            }
        }
    };
    std::process::exit(code);
}

fn load_system(spec: &str) -> vmtune::Result<(ClosedLoopSystem, ParameterMap, Vec<f64>, ScenarioSet, f64, bool)> {
    if let Ok(preset) = ExperimentPreset::by_name(spec) {
        return Ok((
            preset.system,
            preset.map,
            preset.theta0,
            preset.scenarios,
            preset.base_dt,
            preset.banded_dt,
        ));
    }
    let text = std::fs::read_to_string(spec)?;
    let (sys, map, theta0) = SystemDoc::from_json(&text)?.into_parts()?;
    let dims = sys.channel_dims();
    let scenarios = ScenarioSet {
        scenarios: vec![Scenario::zero(&dims, "zero")],
        provenance: vmtune::scenarios::Provenance::Handcrafted,
    };
    Ok((sys, map, theta0, scenarios, 1e-3, false))
}

fn parse_csv_floats(text: &str) -> vmtune::Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number '{s}': {e}")))
        })
        .collect()
}

fn write_manifest(
    out: &Path,
    command: &str,
    config: &str,
    seed: u64,
    dt: f64,
    t_final: f64,
    outputs: &[String],
) -> vmtune::Result<()> {
    let mut manifest = RunManifest::new(command.to_string(), config, seed, dt, t_final);
    manifest.outputs = outputs.to_vec();
    let path = out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn run(command: Command, seed: u64) -> vmtune::Result<()> {
    match command {
        Command::Simulate {
            system,
            scenario,
            theta,
            t,
            dt,
            x0,
            out,
            record_every,
        } => {
            let (sys, map, theta0, scenarios, base_dt, _) = load_system(&system)?;
            let theta = match theta {
                Some(s) => parse_csv_floats(&s)?,
                None => theta0,
            };
            if theta.len() != map.len() {
                return Err(Error::Config(format!(
                    "θ has {} entries, system expects {}",
                    theta.len(),
                    map.len()
                )));
            }
            let sc: Scenario = if scenario == "zero" {
                Scenario::zero(&sys.channel_dims(), "zero")
            } else if let Ok(idx) = scenario.parse::<usize>() {
                scenarios
                    .scenarios
                    .get(idx)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("scenario index {idx} out of range")))?
            } else {
                serde_json::from_str(&std::fs::read_to_string(&scenario)?)?
            };
            let dt = dt.unwrap_or(base_dt);
            let t_final = t.unwrap_or_else(|| sc.horizon());
            let cfg = SimConfig { dt, t_final, record_every };
            let x_start = match x0 {
                Some(s) => {
                    let v = parse_csv_floats(&s)?;
                    if v.len() != sys.state_dim() {
                        return Err(Error::Config(format!(
                            "x0 has {} entries, state dimension is {}",
                            v.len(),
                            sys.state_dim()
                        )));
                    }
                    v
                }
                None => sys.x0.clone(),
            };
            let theta_hat = map.apply(&theta);
            let res = simulate_from(&sys, &x_start, &theta_hat, &LiftedScenario::lift(&sc), &cfg)?;
            std::fs::create_dir_all(&out)?;
            let traj_path = out.join("trajectory.csv");
            let mut file = std::fs::File::create(&traj_path)?;
            write_trajectory_csv(&res, sys.n_r(), sys.n_c(), &mut file)?;
            let [c_w1, c_y1, c_w2, c_y2] = res.cost_states();
            let loss = serde_json::json!({
                "l2": res.loss_l2(),
                "linf": res.loss_linf(),
                "aggregate": res.aggregate_loss(),
                "c_w1": c_w1, "c_y1": c_y1, "c_w2": c_w2, "c_y2": c_y2,
                "t_final": res.final_time,
                "scenario": sc.label,
            });
            let loss_path = out.join("loss.json");
            std::fs::write(&loss_path, serde_json::to_string_pretty(&loss)?)?;
            let config = format!("{system}|{}|{theta:?}|{dt}|{t_final}", sc.label);
            write_manifest(
                &out,
                "simulate",
                &config,
                seed,
                dt,
                t_final,
                &["trajectory.csv".into(), "loss.json".into()],
            )?;
            println!(
                "simulated '{}' for {t_final:.3} s: L2 = {:.6}, L∞ = {:.6}",
                sc.label,
                res.loss_l2(),
                res.loss_linf()
            );
            Ok(())
        }

        Command::Tune {
            preset,
            mode,
            n_scenarios,
            iters,
            rounds,
            n_initial,
            aggregate,
            out,
            theta_history,
        } => {
            let p = ExperimentPreset::by_name(&preset)?;
            let mut opts = p.tune_options();
            opts.seed = seed;
            opts.record_theta_history = theta_history;
            if let Some(it) = iters {
                opts.iters = it;
            }
            opts.aggregate = match aggregate.as_str() {
                "max" => Aggregate::Max,
                "sum" => Aggregate::Sum,
                other => return Err(Error::Config(format!("unknown aggregate '{other}'"))),
            };
            std::fs::create_dir_all(&out)?;
            let dims = p.system.channel_dims();
            let (result, set_len) = match mode.as_str() {
                "sampled" => {
                    let set = if preset == "cart" {
                        grid_scenarios(n_scenarios, seed, &dims)?
                    } else {
                        p.scenarios.clone()
                    };
                    let r = tune_sampled(&p.system, &p.map, &set, &p.theta0, &opts)?;
                    let n = set.scenarios.len();
                    (r, n)
                }
                "adversarial" => {
                    let w0 = grid_scenarios(n_initial, seed, &dims)?;
                    let (r, grown) =
                        tune_adversarial(&p.system, &p.map, &w0, &p.theta0, rounds, &opts)?;
                    std::fs::write(
                        out.join("scenarios.json"),
                        serde_json::to_string_pretty(&grown)?,
                    )?;
                    let n = grown.scenarios.len();
                    (r, n)
                }
                other => return Err(Error::Config(format!("unknown mode '{other}'"))),
            };
            let result_path = out.join("tune_result.json");
            std::fs::write(&result_path, serde_json::to_string_pretty(&result)?)?;
            let mut hist = String::from("iter,cost\n");
            for (i, c) in result.cost_history.iter().enumerate() {
                hist.push_str(&format!("{i},{c}\n"));
            }
            std::fs::write(out.join("cost_history.csv"), hist)?;
            let config = format!("{preset}|{mode}|{n_scenarios}|{:?}|{seed}", opts.iters);
            write_manifest(
                &out,
                "tune",
                &config,
                seed,
                opts.base_dt,
                0.0,
                &["tune_result.json".into(), "cost_history.csv".into()],
            )?;
            let max_cost = result
                .per_scenario_final
                .iter()
                .fold(0.0_f64, |a, &b| a.max(b));
            println!(
                "{mode} tuning of '{preset}' over {set_len} scenarios: cost {max_cost:.4}, θ̂ = {:?}",
                result
                    .theta_hat
                    .iter()
                    .map(|v| (v * 100.0).round() / 100.0)
                    .collect::<Vec<_>>()
            );
            Ok(())
        }

        Command::Landscape {
            preset,
            mode,
            n_scenarios,
            resolution,
            k_min,
            k_max,
            b_min,
            b_max,
            trajectory,
            iters,
            out,
        } => {
            if preset != "cart" {
                return Err(Error::Config("landscape supports the cart preset".into()));
            }
            let p = ExperimentPreset::by_name(&preset)?;
            let mut opts = p.tune_options();
            opts.seed = seed;
            opts.record_theta_history = true;
            if let Some(it) = iters {
                opts.iters = it;
            }
            let dims = p.system.channel_dims();
            let set = match mode.as_str() {
                "sampled" => grid_scenarios(n_scenarios, seed, &dims)?,
                "adversarial" => {
                    let w0 = grid_scenarios(3, seed, &dims)?;
                    let (_, grown) = tune_adversarial(
                        &p.system, &p.map, &w0, &p.theta0, n_scenarios, &opts,
                    )?;
                    grown
                }
                other => return Err(Error::Config(format!("unknown mode '{other}'"))),
            };
            std::fs::create_dir_all(&out)?;
            let grid = cost_landscape(
                &p.system,
                &p.map,
                &set,
                (k_min, k_max),
                (b_min, b_max),
                resolution,
                &opts,
            )?;
            let mut csv = String::from("k,b,cost\n");
            for (k, b, c) in &grid {
                csv.push_str(&format!("{k},{b},{c}\n"));
            }
            std::fs::write(out.join("landscape.csv"), csv)?;
            let mut outputs = vec!["landscape.csv".into()];
            if trajectory {
                let r = tune_sampled(&p.system, &p.map, &set, &p.theta0, &opts)?;
                let mut csv = String::from("iter,k,b\n");
                if let Some(hist) = &r.theta_history {
                    for (i, th) in hist.iter().enumerate() {
                        csv.push_str(&format!("{i},{},{}\n", th[0], th[1]));
                    }
                }
                std::fs::write(out.join("optimizer_path.csv"), csv)?;
                outputs.push("optimizer_path.csv".into());
            }
            let config = format!("{preset}|{mode}|{n_scenarios}|{resolution}|{seed}");
            write_manifest(&out, "landscape", &config, seed, opts.base_dt, 0.0, &outputs)?;
            println!("landscape {resolution}×{resolution} written to {}", out.display());
            Ok(())
        }

        Command::Oracle { k, b, m, sweep, out } => {
            if k <= 0.0 || b <= 0.0 || m <= 0.0 {
                return Err(Error::Config("oracle needs positive k, b, m".into()));
            }
            let w_w = vmtune::experiments::CART_INPUT_WEIGHTS;
            let w_y = vmtune::experiments::CART_OUTPUT_WEIGHTS;
            if sweep {
                let (k_star, b_star, gain) =
                    oracle_optimum(m, &w_w, &w_y, (20.0, 2000.0), (5.0, 300.0))?;
                println!("optimum: k = {k_star:.4}, b = {b_star:.4}, gain = {gain:.6}");
            }
            let ss = cart_closed_loop(k, b, m, &w_w, &w_y)?;
            let (gain, w_peak) = hinf_gain(&ss, 2000)?;
            println!("gain({k}, {b}, m={m}) = {gain:.6} at ω = {w_peak:.4} rad/s");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let mut csv = String::from("omega,sigma_max\n");
                for (w, s) in gain_curve(&ss, 400) {
                    csv.push_str(&format!("{w},{s}\n"));
                }
                std::fs::write(dir.join("gain_curve.csv"), csv)?;
                let config = format!("oracle|{k}|{b}|{m}");
                write_manifest(&dir, "oracle", &config, seed, 0.0, 0.0, &["gain_curve.csv".into()])?;
            }
            Ok(())
        }

        Command::Preset { action } => match action {
            PresetAction::Dump { name } => {
                let preset = ExperimentPreset::by_name(&name)?;
                let json = preset.to_doc().to_json_pretty()?;
                let mut stdout = std::io::stdout().lock();
                writeln!(stdout, "{json}")?;
                Ok(())
            }
            PresetAction::List => {
                println!("cart  — 1-DOF cart with tunable PD (k, b), linear benchmark");
                println!("reach — planar arm coupled to a driven cart on a rail");
                println!("rcm   — 6-DOF arm with a virtual instrument pinned to an RCM");
                Ok(())
            }
        },
    }
}
