//! Experiment runners. Each builds a [`ResultTable`] deterministically from
//! `(params, seed)`: replicas derive their RNG stream from the replica
//! index, rows are written in replica-index order, and aggregates are
//! pairwise sums in that order, so output is identical for any thread count.

use linrisk::design::{empirical_bias_variance, sample_design_with_rng, DesignKind};
use linrisk::det_equiv::predict_risk;
use linrisk::features::{
    concentration_diagnostic, feature_risk_mc, nt_empirical_kernel, FeatureEnsemble, FeatureKind,
};
use linrisk::funspace::Activation;
use linrisk::krr::{krr_risk_mc, staircase_prediction, KernelShape, KernelSpec, Regime};
use linrisk::latent::{latent_risk, simulate_latent, LatentParams};
use linrisk::mc::{replica_rng, run_replicas, MeanSem};
use linrisk::meanfield::{
    online_sgd, particle_flow, reduced_flow_step, reduced_population_risk, single_neuron_gd,
    MeanFieldProblem, ParticleEnsemble, ReducedEnsemble, SecondLayerInit,
};

use crate::config::*;
use crate::table::ResultTable;

/// Failure taxonomy mapped to exit codes (2 = validation, 3 = numerical).
#[derive(Debug)]
pub enum RunError {
    Validation(String),
    Numerical(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Validation(m) => write!(f, "validation error: {m}"),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

fn validation(e: impl std::fmt::Display) -> RunError {
    RunError::Validation(e.to_string())
}

fn numerical(e: impl std::fmt::Display) -> RunError {
    RunError::Numerical(e.to_string())
}

pub struct RunOutcome {
    pub table: ResultTable,
    /// Some replica or grid point failed numerically (rows are flagged).
    pub had_failures: bool,
}

fn regime_code(r: &Regime) -> f64 {
    match r {
        Regime::InBand { .. } => 0.0,
        Regime::NearThreshold { .. } => 1.0,
    }
}

fn echo<T: serde::Serialize>(params: &T, seed: u64, reps: usize) -> serde_json::Value {
    serde_json::json!({ "params": params, "seed": seed, "reps": reps })
}

pub fn predict_risk_exp(p: &PredictRiskParams, seed: u64) -> Result<RunOutcome, RunError> {
    let model = build_model(&p.spectrum, &p.beta).map_err(validation)?;
    let mut table = ResultTable::new(
        "predict-risk",
        &["lambda", "lambda_star", "bias", "variance", "omega_sq", "k_star", "valid", "seed"],
        seed,
        echo(p, seed, 1),
    );
    for &lambda in &p.lambdas {
        let pred = predict_risk(&model, p.n, lambda, p.tau).map_err(numerical)?;
        table.push(vec![
            lambda,
            pred.lambda_star,
            pred.bias,
            pred.variance,
            pred.omega_sq,
            pred.k_star as f64,
            1.0,
            seed as f64,
        ]);
    }
    Ok(RunOutcome { table, had_failures: false })
}

pub fn simulate_ridge_exp(
    p: &SimulateRidgeParams,
    seed: u64,
    reps: usize,
) -> Result<RunOutcome, RunError> {
    let model = build_model(&p.spectrum, &p.beta).map_err(validation)?;
    let kind = match p.design.as_str() {
        "gaussian" => DesignKind::Gaussian,
        "rademacher" => DesignKind::Rademacher,
        other => return Err(RunError::Validation(format!("unknown design kind `{other}`"))),
    };
    let theory = predict_risk(&model, p.n, p.lambda, p.tau).map_err(numerical)?;
    let per: Vec<Result<(f64, f64), String>> = run_replicas(seed, reps, |_, mut rng| {
        let sample = sample_design_with_rng(&model, p.n, p.tau, kind, &mut rng)
            .map_err(|e| e.to_string())?;
        empirical_bias_variance(&sample, &model, p.lambda, p.tau).map_err(|e| e.to_string())
    });
    let mut table = ResultTable::new(
        "simulate-ridge",
        &["replica", "b_emp", "v_emp", "theory_bias", "theory_var", "failed", "seed"],
        seed,
        echo(p, seed, reps),
    );
    let mut had_failures = false;
    for (r, res) in per.into_iter().enumerate() {
        match res {
            Ok((b, v)) => table.push(vec![
                r as f64,
                b,
                v,
                theory.bias,
                theory.variance,
                0.0,
                seed as f64,
            ]),
            Err(_) => {
                had_failures = true;
                table.push(vec![
                    r as f64,
                    f64::NAN,
                    f64::NAN,
                    theory.bias,
                    theory.variance,
                    1.0,
                    seed as f64,
                ]);
            }
        }
    }
    Ok(RunOutcome { table, had_failures })
}

pub fn latent_exp(p: &LatentParamsCfg, seed: u64, reps: usize) -> Result<RunOutcome, RunError> {
    let mut table = ResultTable::new(
        "latent",
        &[
            "gamma",
            "psi",
            "mu",
            "lambda",
            "theory_bias",
            "theory_var",
            "theory_total",
            "mc_mean",
            "mc_sem",
            "mc_full_mean",
            "approx_floor",
            "reps",
            "failed",
            "seed",
        ],
        seed,
        echo(p, seed, reps),
    );
    let mut had_failures = false;
    for (gi, &gamma) in p.gammas.iter().enumerate() {
        let pp = (gamma * p.n as f64).round() as usize;
        let psi = p.d as f64 / pp as f64;
        let params = LatentParams {
            psi,
            gamma: pp as f64 / p.n as f64,
            mu: p.mu,
            r_theta: p.r_theta,
            tau: p.tau,
        };
        let theory = if p.lambda == 0.0 {
            let t = latent_risk(&params).map_err(validation)?;
            (t.bias, t.variance)
        } else {
            let t = linrisk::latent::latent_theory(p.d, pp, p.n, p.mu, p.r_theta, p.tau, p.lambda)
                .map_err(numerical)?;
            (t.bias, t.variance)
        };
        // Stream offset per grid point keeps replicas disjoint across γ.
        let grid_seed = seed.wrapping_add(1 + gi as u64);
        match simulate_latent(p.d, pp, p.n, p.mu, p.r_theta, p.tau, p.lambda, grid_seed, reps) {
            Ok(mc) => table.push(vec![
                params.gamma,
                psi,
                p.mu,
                p.lambda,
                theory.0,
                theory.1,
                theory.0 + theory.1,
                mc.excess_over_oracle.mean,
                mc.excess_over_oracle.sem,
                mc.excess_full.mean,
                mc.approx_floor,
                reps as f64,
                0.0,
                grid_seed as f64,
            ]),
            Err(_) => {
                had_failures = true;
                table.push(vec![
                    params.gamma,
                    psi,
                    p.mu,
                    p.lambda,
                    theory.0,
                    theory.1,
                    theory.0 + theory.1,
                    f64::NAN,
                    f64::NAN,
                    f64::NAN,
                    params.approx_floor(),
                    reps as f64,
                    1.0,
                    grid_seed as f64,
                ]);
            }
        }
    }
    Ok(RunOutcome { table, had_failures })
}

pub fn krr_staircase_exp(
    p: &KrrStaircaseParams,
    seed: u64,
    reps: usize,
) -> Result<RunOutcome, RunError> {
    let target = p.target.build(p.d).map_err(validation)?;
    let spec = KernelSpec::new(p.d, p.kernel.build(), 10).map_err(validation)?;
    let mut table = ResultTable::new(
        "krr-staircase",
        &[
            "d",
            "n",
            "lambda",
            "ell",
            "regime",
            "theory_risk",
            "mc_risk",
            "mc_sem",
            "train_err",
            "failed",
            "seed",
        ],
        seed,
        echo(p, seed, reps),
    );
    let mut had_failures = false;
    for (gi, &n) in p.n_grid.iter().enumerate() {
        let pred = staircase_prediction(&spec, &target, n, p.delta).map_err(validation)?;
        let grid_seed = seed.wrapping_add(1 + gi as u64);
        match krr_risk_mc(&spec, &target, n, p.lambda, p.tau, p.n_test, reps, grid_seed) {
            Ok(mc) => table.push(vec![
                p.d as f64,
                n as f64,
                p.lambda,
                pred.ell as f64,
                regime_code(&pred.regime),
                pred.predicted_risk,
                mc.risk.mean,
                mc.risk.sem,
                mc.train_err.mean,
                0.0,
                grid_seed as f64,
            ]),
            Err(_) => {
                had_failures = true;
                table.push(vec![
                    p.d as f64,
                    n as f64,
                    p.lambda,
                    pred.ell as f64,
                    regime_code(&pred.regime),
                    pred.predicted_risk,
                    f64::NAN,
                    f64::NAN,
                    f64::NAN,
                    1.0,
                    grid_seed as f64,
                ]);
            }
        }
    }
    Ok(RunOutcome { table, had_failures })
}

pub fn rf_double_descent_exp(
    p: &RfDoubleDescentParams,
    seed: u64,
    reps: usize,
) -> Result<RunOutcome, RunError> {
    let target = p.target.build(p.d).map_err(validation)?;
    let activation = p.activation.build();
    let n = p.n_over_d * p.d;
    let mut table = ResultTable::new(
        "rf-double-descent",
        &["d", "n", "N", "lambda", "mc_risk", "mc_sem", "theory", "regime", "failed", "seed"],
        seed,
        echo(p, seed, reps),
    );
    let mut had_failures = false;
    let mut gi = 0u64;
    for &lambda in &p.lambdas {
        for &ratio in &p.width_ratios {
            gi += 1;
            let width = ((ratio * n as f64).round() as usize).max(1);
            let stair = linrisk::features::rf_staircase_prediction(&target, n, width, 0.1)
                .map_err(validation)?;
            let grid_seed = seed.wrapping_add(gi);
            match feature_risk_mc(
                &target,
                &activation,
                FeatureKind::Rf,
                n,
                width,
                lambda,
                p.tau,
                p.n_test,
                reps,
                grid_seed,
            ) {
                Ok(mc) => table.push(vec![
                    p.d as f64,
                    n as f64,
                    width as f64,
                    lambda,
                    mc.risk.mean,
                    mc.risk.sem,
                    stair.predicted_risk,
                    if stair.separated { 0.0 } else { 1.0 },
                    0.0,
                    grid_seed as f64,
                ]),
                Err(_) => {
                    had_failures = true;
                    table.push(vec![
                        p.d as f64,
                        n as f64,
                        width as f64,
                        lambda,
                        f64::NAN,
                        f64::NAN,
                        stair.predicted_risk,
                        if stair.separated { 0.0 } else { 1.0 },
                        1.0,
                        grid_seed as f64,
                    ]);
                }
            }
        }
    }
    Ok(RunOutcome { table, had_failures })
}

pub fn nt_concentration_exp(
    p: &NtConcentrationParams,
    seed: u64,
) -> Result<RunOutcome, RunError> {
    let activation = p.activation.build();
    let spec = KernelSpec::new(p.d, KernelShape::NtD(activation.clone()), 10).map_err(validation)?;
    // One X draw shared across widths; the diagnostic varies over W draws.
    let mut rng = replica_rng(seed, 0);
    let (x, _) = linrisk::krr::sample_task(
        &linrisk::funspace::TargetFunction::linear(vec![0.0; p.d]),
        p.n,
        0.0,
        &mut rng,
    );
    let k_inf = spec.kernel_matrix(&x).map_err(numerical)?;
    let gamma_event = linrisk::linalg::sym_eigenvalues(&k_inf)[0] > 0.0;
    let mut table = ResultTable::new(
        "nt-concentration",
        &["d", "n", "N", "draw", "diag_opnorm", "gamma_event", "failed", "seed"],
        seed,
        echo(p, seed, p.draws),
    );
    let mut had_failures = false;
    for (mi, &m) in p.width_multipliers.iter().enumerate() {
        let width = m * p.n / p.d;
        let per: Vec<Result<f64, String>> =
            run_replicas(seed.wrapping_add(1 + mi as u64), p.draws, |_, mut wrng| {
                let ens = FeatureEnsemble::sample(
                    width,
                    p.d,
                    activation.clone(),
                    FeatureKind::Nt,
                    &mut wrng,
                );
                let k_n = nt_empirical_kernel(&ens, &x).map_err(|e| e.to_string())?;
                concentration_diagnostic(&k_n, &k_inf).map_err(|e| e.to_string())
            });
        for (draw, res) in per.into_iter().enumerate() {
            match res {
                Ok(v) => table.push(vec![
                    p.d as f64,
                    p.n as f64,
                    width as f64,
                    draw as f64,
                    v,
                    if gamma_event { 1.0 } else { 0.0 },
                    0.0,
                    seed.wrapping_add(1 + mi as u64) as f64,
                ]),
                Err(_) => {
                    had_failures = true;
                    table.push(vec![
                        p.d as f64,
                        p.n as f64,
                        width as f64,
                        draw as f64,
                        f64::NAN,
                        if gamma_event { 1.0 } else { 0.0 },
                        1.0,
                        seed.wrapping_add(1 + mi as u64) as f64,
                    ]);
                }
            }
        }
    }
    Ok(RunOutcome { table, had_failures })
}

pub fn nt_vs_krr_exp(p: &NtVsKrrParams, seed: u64, reps: usize) -> Result<RunOutcome, RunError> {
    let activation = p.activation.build();
    let target = p.target.build(p.d).map_err(validation)?;
    let spec = KernelSpec::new(p.d, KernelShape::NtD(activation.clone()), 10).map_err(validation)?;
    let krr = krr_risk_mc(&spec, &target, p.n, p.lambda, p.tau, p.n_test, reps, seed)
        .map_err(numerical)?;
    let mut table = ResultTable::new(
        "nt-vs-krr",
        &["d", "n", "N", "lambda", "nt_risk", "nt_sem", "krr_risk", "krr_sem", "failed", "seed"],
        seed,
        echo(p, seed, reps),
    );
    let mut had_failures = false;
    for (gi, &ratio) in p.param_ratios.iter().enumerate() {
        let width = ((ratio * p.n as f64) / p.d as f64).ceil() as usize;
        let grid_seed = seed.wrapping_add(1 + gi as u64);
        match feature_risk_mc(
            &target,
            &activation,
            FeatureKind::Nt,
            p.n,
            width,
            p.lambda,
            p.tau,
            p.n_test,
            reps,
            grid_seed,
        ) {
            Ok(nt) => table.push(vec![
                p.d as f64,
                p.n as f64,
                width as f64,
                p.lambda,
                nt.risk.mean,
                nt.risk.sem,
                krr.risk.mean,
                krr.risk.sem,
                0.0,
                grid_seed as f64,
            ]),
            Err(_) => {
                had_failures = true;
                table.push(vec![
                    p.d as f64,
                    p.n as f64,
                    width as f64,
                    p.lambda,
                    f64::NAN,
                    f64::NAN,
                    krr.risk.mean,
                    krr.risk.sem,
                    1.0,
                    grid_seed as f64,
                ]);
            }
        }
    }
    Ok(RunOutcome { table, had_failures })
}

pub fn meanfield_exp(p: &MeanfieldParams, seed: u64) -> Result<RunOutcome, RunError> {
    let mut problem = MeanFieldProblem::new(p.activation.build(), p.phi.build(), p.d);
    problem.tau = p.tau;
    problem.gamma = p.gamma;
    problem.p_a = SecondLayerInit::Delta(p.a_init);
    let eta = if p.eta > 0.0 { p.eta } else { 1.0 / (4.0 * p.d as f64) };
    let steps = if p.steps > 0 {
        p.steps
    } else {
        (8.0 * p.d as f64 * (p.d as f64).ln()).round() as usize
    };
    let mut table = ResultTable::new(
        "meanfield",
        &["t", "risk", "mean_a", "mean_s", "mean_r", "seed"],
        seed,
        echo(p, seed, 1),
    );
    let mut rng = replica_rng(seed, 0);
    let mean3 = |coords: &[(f64, f64, f64)]| -> (f64, f64, f64) {
        let n = coords.len() as f64;
        (
            coords.iter().map(|c| c.0).sum::<f64>() / n,
            coords.iter().map(|c| c.1).sum::<f64>() / n,
            coords.iter().map(|c| c.2).sum::<f64>() / n,
        )
    };
    let final_state: serde_json::Value;
    match p.mode.as_str() {
        "sgd" => {
            let run = online_sgd(&problem, p.n_particles, eta, steps, &mut rng, p.record_every)
                .map_err(numerical)?;
            // Risk checkpoints; coordinate means recorded at the end.
            for &(t, risk) in &run.checkpoints {
                table.push(vec![t, risk, f64::NAN, f64::NAN, f64::NAN, seed as f64]);
            }
            let coords = run.ensemble.reduced_coords(&problem.w_star);
            let (ma, ms, mr) = mean3(&coords);
            if let Some(last) = table.rows.last_mut() {
                last[2] = ma;
                last[3] = ms;
                last[4] = mr;
            }
            final_state = serde_json::json!({
                "a": run.ensemble.a,
                "coords": coords,
                "time": run.ensemble.time,
            });
        }
        "flow" => {
            let init = ParticleEnsemble::init(&problem, p.n_particles, &mut rng);
            let run = particle_flow(&problem, init, p.dt, steps, true).map_err(numerical)?;
            for (t, r) in run.times.iter().zip(&run.risks) {
                table.push(vec![*t, *r, f64::NAN, f64::NAN, f64::NAN, seed as f64]);
            }
            let coords = run.ensemble.reduced_coords(&problem.w_star);
            let (ma, ms, mr) = mean3(&coords);
            if let Some(last) = table.rows.last_mut() {
                last[2] = ma;
                last[3] = ms;
                last[4] = mr;
            }
            final_state = serde_json::json!({
                "a": run.ensemble.a,
                "coords": coords,
                "time": run.ensemble.time,
            });
        }
        "reduced" => {
            let mut ens = ReducedEnsemble::init(&problem, p.n_particles, &mut rng);
            for step in 0..=steps {
                if step > 0 {
                    ens = reduced_flow_step(&problem, &ens, p.dt);
                }
                let risk = reduced_population_risk(&problem, &ens);
                let coords = ens.coords();
                let (ma, ms, mr) = mean3(&coords);
                table.push(vec![ens.time, risk, ma, ms, mr, seed as f64]);
            }
            final_state = serde_json::json!({
                "a": ens.a,
                "coords": ens.coords(),
                "time": ens.time,
            });
        }
        other => return Err(RunError::Validation(format!("unknown meanfield mode `{other}`"))),
    }
    if let Some(path) = &p.state_out {
        std::fs::write(path, serde_json::to_string_pretty(&final_state).unwrap())
            .map_err(|e| RunError::Validation(format!("cannot write state file: {e}")))?;
    }
    Ok(RunOutcome { table, had_failures: false })
}

pub fn single_neuron_exp(p: &SingleNeuronParams, seed: u64) -> Result<RunOutcome, RunError> {
    let n = if p.n > 0 {
        p.n
    } else {
        (40.0 * p.d as f64 * (p.d as f64).ln()).round() as usize
    };
    let report = single_neuron_gd(&p.activation.build(), p.d, n, p.tau, p.starts, seed)
        .map_err(numerical)?;
    let guard = (p.d as f64 * (n as f64).ln() / n as f64).sqrt();
    let mut table = ResultTable::new(
        "single-neuron",
        &["d", "n", "tau", "max_pairwise_dist", "excess_risk", "rate_scale", "seed"],
        seed,
        echo(p, seed, 1),
    );
    table.push(vec![
        p.d as f64,
        n as f64,
        p.tau,
        report.max_pairwise_dist,
        report.excess_risk,
        guard,
        seed as f64,
    ]);
    Ok(RunOutcome { table, had_failures: false })
}

/// Aggregate helper for downstream consumers of per-replica tables.
pub fn column_stats(table: &ResultTable, column: &str) -> Option<MeanSem> {
    let j = table.columns.iter().position(|c| c == column)?;
    let vals: Vec<f64> = table.rows.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect();
    if vals.is_empty() {
        None
    } else {
        Some(MeanSem::from_samples(&vals))
    }
}
