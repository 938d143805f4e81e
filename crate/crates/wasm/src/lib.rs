//! WebAssembly bindings for the browser demo.
//!
//! Each export returns a JSON string; the plain-Rust functions behind them
//! are public so they can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use randproj::bounds::omega_grid;
use randproj::solver::mean_trajectory;
use randproj::{
    b_bound, c_bound, ensemble_from_system, ingredients, make_hilbert, make_parter, make_random, make_random_spd,
    make_toy, normalize, optimal_omega, Ingredients, LinearSystem, SolveConfig, SuperOperators, TrialRunner,
};

/// Largest `n` for which the exact rate is computed in the browser.
pub const RHO_MAX_N: usize = 12;
const MAX_POINTS: usize = 401;
const MAX_WORK: usize = 2_000_000;

#[derive(Debug, Serialize)]
pub struct Curves {
    pub omegas: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Exact rate, present for `n <= RHO_MAX_N`.
    pub rho: Option<Vec<f64>>,
    pub mu1: f64,
    pub mu2: f64,
    pub xi: f64,
    pub omega_star: f64,
    pub c_at_omega_star: f64,
}

#[derive(Debug, Serialize)]
pub struct Simulation {
    pub omega: f64,
    pub iterations: Vec<usize>,
    pub mean_sq_error: Vec<f64>,
    pub b_bound: Vec<f64>,
    pub c_bound: Vec<f64>,
}

fn system(generator: &str, n: usize, kappa: f64, seed: u64) -> Result<LinearSystem, String> {
    let sys = match generator {
        "toy" => make_toy(),
        "hilbert" => make_hilbert(n, seed),
        "parter" => make_parter(n, seed),
        "random" => make_random(n, n, kappa, seed),
        "random-spd" => make_random_spd(n, kappa, seed),
        other => return Err(format!("unknown generator {other:?}")),
    };
    sys.map_err(|e| e.to_string())
}

fn check_points(points: usize) -> Result<(), String> {
    if (2..=MAX_POINTS).contains(&points) {
        Ok(())
    } else {
        Err(format!("points must lie in 2..={MAX_POINTS}"))
    }
}

fn curves_from(ing: &Ingredients, omegas: Vec<f64>, rho: Option<Vec<f64>>) -> Result<Curves, String> {
    let b = omegas.iter().map(|&w| b_bound(ing, w)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let c = omegas.iter().map(|&w| c_bound(ing, w)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let (omega_star, c_at_omega_star) = optimal_omega(ing);
    Ok(Curves { omegas, b, c, rho, mu1: ing.mu1, mu2: ing.mu2, xi: ing.xi, omega_star, c_at_omega_star })
}

/// B, C and (small problems) the exact rate over `[0, 2]`.
pub fn bound_curves_for(generator: &str, n: usize, kappa: f64, seed: u64, points: usize) -> Result<Curves, String> {
    check_points(points)?;
    let sys = system(generator, n, kappa, seed)?;
    let ns = normalize(&sys).map_err(|e| e.to_string())?;
    let ens = ensemble_from_system(&ns).map_err(|e| e.to_string())?;
    let ing = ingredients(&ens).map_err(|e| e.to_string())?;
    let omegas = omega_grid(0.0, 2.0, points);
    let rho = if ens.n() <= RHO_MAX_N {
        let so = SuperOperators::new(&ens).map_err(|e| e.to_string())?;
        Some(omegas.iter().map(|&w| so.lam_max_symmetric(w)).collect())
    } else {
        None
    };
    curves_from(&ing, omegas, rho)
}

/// B and C curves straight from the three ingredients.
pub fn explore_for(mu1: f64, mu2: f64, xi: f64, points: usize) -> Result<Curves, String> {
    check_points(points)?;
    let ing = Ingredients::from_scalars(mu1, mu2, xi).map_err(|e| e.to_string())?;
    curves_from(&ing, omega_grid(0.0, 2.0, points), None)
}

/// Mean squared error of `trials` randomized runs against `e0 B^k`, `e0 C^k`.
pub fn simulate_for(
    generator: &str,
    n: usize,
    kappa: f64,
    seed: u64,
    omega: f64,
    trials: usize,
    iters: usize,
) -> Result<Simulation, String> {
    if trials == 0 || trials.saturating_mul(iters) > MAX_WORK {
        return Err(format!("need 1 <= trials and trials * iters <= {MAX_WORK}"));
    }
    let sys = system(generator, n, kappa, seed)?;
    let ns = normalize(&sys).map_err(|e| e.to_string())?;
    let ens = ensemble_from_system(&ns).map_err(|e| e.to_string())?;
    let ing = ingredients(&ens).map_err(|e| e.to_string())?;
    let omega = if omega <= 0.0 { optimal_omega(&ing).0 } else { omega };
    let runner = TrialRunner::new(&sys, &ens).map_err(|e| e.to_string())?;
    let every = (iters / 200).max(1);
    let cfg = SolveConfig::new(omega, iters, seed).map_err(|e| e.to_string())?.record_every(every);
    let records = runner.run_trials(&cfg, trials).map_err(|e| e.to_string())?;
    let mean = mean_trajectory(&records);
    let iterations: Vec<usize> = records[0].iterations().collect();
    let (b, c) = (b_bound(&ing, omega).map_err(|e| e.to_string())?, c_bound(&ing, omega).map_err(|e| e.to_string())?);
    let e0 = mean[0];
    Ok(Simulation {
        omega,
        b_bound: iterations.iter().map(|&k| e0 * b.powi(k as i32)).collect(),
        c_bound: iterations.iter().map(|&k| e0 * c.powi(k as i32)).collect(),
        iterations,
        mean_sq_error: mean,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn bound_curves(generator: &str, n: usize, kappa: f64, seed: u32, points: usize) -> Result<String, JsError> {
    to_json(bound_curves_for(generator, n, kappa, seed as u64, points))
}

#[wasm_bindgen]
pub fn explore(mu1: f64, mu2: f64, xi: f64, points: usize) -> Result<String, JsError> {
    to_json(explore_for(mu1, mu2, xi, points))
}

/// A non-positive `omega` selects the C-bound optimum.
#[wasm_bindgen]
pub fn simulate(
    generator: &str,
    n: usize,
    kappa: f64,
    seed: u32,
    omega: f64,
    trials: usize,
    iters: usize,
) -> Result<String, JsError> {
    to_json(simulate_for(generator, n, kappa, seed as u64, omega, trials, iters))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_are_ordered() {
        let c = bound_curves_for("hilbert", 3, 1.0, 0, 41).unwrap();
        let rho = c.rho.as_ref().unwrap();
        for k in 0..41 {
            assert!(rho[k] <= c.c[k] + 1e-10 && c.c[k] <= c.b[k] + 1e-12);
        }
        assert!(c.omega_star > 1.0);
        assert!(bound_curves_for("parter", 20, 1.0, 0, 11).unwrap().rho.is_none());
    }

    #[test]
    fn explorer_matches_known_value() {
        let c = explore_for(1.0 / 3.0, 2.0 / 3.0, 1.0 / 9.0, 3).unwrap();
        assert_eq!(c.omegas, vec![0.0, 1.0, 2.0]);
        assert!((c.c[1] - 0.5891972930813327).abs() < 1e-14);
        assert!(explore_for(0.5, 0.2, 0.1, 3).is_err());
    }

    #[test]
    fn simulation_beats_b_bound() {
        let s = simulate_for("toy", 5, 1.0, 3, 0.0, 50, 600).unwrap();
        assert!(s.omega > 1.0);
        assert_eq!(s.iterations.len(), s.mean_sq_error.len());
        assert!(s.mean_sq_error.last().unwrap() < s.b_bound.last().unwrap());
        assert!(simulate_for("nope", 5, 1.0, 0, 1.0, 1, 1).is_err());
        assert!(simulate_for("toy", 5, 1.0, 0, 1.0, 10_000, 10_000).is_err());
    }

    #[test]
    fn json_shape() {
        let text = serde_json::to_string(&explore_for(0.1, 0.3, 0.02, 5).unwrap()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["omegas"].as_array().unwrap().len(), 5);
        assert!(v["rho"].is_null());
    }
}
