//! Simulated cohort benchmark: TGL vs ridge vs OLS on held-out patients.
//!
//! ```text
//! cargo run --release --example benchmark -- [seed]
//! ```

use std::time::Instant;

use tglasso::model_selection::{evaluate, grid_search_cv, log_space, ridge_cv, CvGrid};
use tglasso::simulation::{simulate_cohort, SimulationConfig};
use tglasso::solvers::{fit_ols, fit_ridge, fit_tgl, selected_features, SolverConfig, SELECTION_EPS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(42);
    let cfg = SimulationConfig { seed, ..SimulationConfig::default() };
    let cohort = simulate_cohort(&cfg)?;
    let t = cohort.test.n_times();
    for c in 0..t {
        let col = cohort.full.y().column(c);
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64).sqrt();
        print!("{m:.3}±{sd:.3} ");
    }
    println!();

    let start = Instant::now();
    let solver = SolverConfig::default();
    let scale = tglasso::model_selection::default_lambda_scale(&cohort.train)?;
    println!("scale {scale}");
    let grid = CvGrid::new(
        log_space(1e-3 * scale, 1e-1 * scale, 3),
        log_space(1e-3 * scale, 1e0 * scale, 4),
        log_space(3e-2 * scale, 6e-1 * scale, 9),
        5,
        seed,
    );
    let report = grid_search_cv(&cohort.train, &grid, &solver)?;
    println!("cv took {:?}, best {:?}", start.elapsed(), report.best_config);
    for c in &report.cells {
        println!("  {:>10.3} {:>10.3} {:>10.3} {:.5} {}", c.lambda1, c.lambda2, c.lambda3, c.mean_rmse, c.converged_folds);
    }
    let tgl = fit_tgl(&cohort.train, &report.best_config, &solver)?;
    let rr_report = ridge_cv(&cohort.train, &log_space(1e-2 * scale, 1e3 * scale, 21), 5, seed)?;
    let rr = fit_ridge(&cohort.train, rr_report.best_config.lambda1)?;
    let ols = fit_ols(&cohort.train)?;
    let m_tgl = evaluate(&tgl, &cohort.test)?;
    let m_rr = evaluate(&rr, &cohort.test)?;
    let m_ols = evaluate(&ols, &cohort.test)?;
    println!("ridge lambda {}", rr_report.best_config.lambda1);
    println!("hour  mean   sd     rmse   tgl_r2 rr_r2  mlr_r2");
    for c in 0..t {
        println!(
            "{:>4} {:.3} {:.3} {:.3} {:.3} {:.3} {:.3}",
            m_tgl.time_labels[c], m_tgl.mean[c], m_tgl.sd[c], m_tgl.rmse[c], m_tgl.r2[c], m_rr.r2[c], m_ols.r2[c]
        );
    }
    let sel = selected_features(&tgl, SELECTION_EPS);
    let truth = &cohort.truth.informative_indices;
    let tp = sel.iter().filter(|i| truth.binary_search(i).is_ok()).count();
    println!(
        "selected {} features, {} informative of {} (recall {:.2}, fdr {:.2}); total {:?}",
        sel.len(),
        tp,
        truth.len(),
        tp as f64 / truth.len() as f64,
        1.0 - tp as f64 / sel.len().max(1) as f64,
        start.elapsed()
    );
    Ok(())
}
