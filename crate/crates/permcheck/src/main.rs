// full cart sampled tuning: convergence + timing check
use std::time::Instant;
use vmtune::experiments::{build_cart, CART_INPUT_WEIGHTS, CART_OUTPUT_WEIGHTS};
use vmtune::lti::oracle_optimum;
use vmtune::optimize::tune_sampled;
use vmtune::scenarios::grid_scenarios;

fn main() {
    let preset = build_cart();
    let mut opts = preset.tune_options();
    opts.iters = 300;
    opts.seed = 1;
    let set = grid_scenarios(400, 1, &[1, 1, 1]).unwrap();
    let t0 = Instant::now();
    let res = tune_sampled(&preset.system, &preset.map, &set, &preset.theta0, &opts).unwrap();
    let elapsed = t0.elapsed();
    let max_final = res.per_scenario_final.iter().cloned().fold(0.0f64, f64::max);
    println!("tuned in {elapsed:?}: θ = ({:.2}, {:.2}), max cost {max_final:.4}", res.theta[0], res.theta[1]);
    println!("history: first {:.3} mid {:.3} last {:.3}",
        res.cost_history[0], res.cost_history[150], res.cost_history[299]);
    let t0 = Instant::now();
    let (k_star, b_star, g_star) = oracle_optimum(1.0, &CART_INPUT_WEIGHTS, &CART_OUTPUT_WEIGHTS, (50.0, 800.0), (10.0, 150.0)).unwrap();
    println!("oracle optimum ({:?}): k* = {k_star:.2}, b* = {b_star:.2}, gain* = {g_star:.4}", t0.elapsed());
    println!("k rel err {:.3}, b rel err {:.3}", (res.theta[0]-k_star).abs()/k_star, (res.theta[1]-b_star).abs()/b_star);
}
