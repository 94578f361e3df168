//! Scenario implementations. Each writes its artifacts into a [`RunDir`] and
//! returns a short JSON summary that also goes into the manifest.

use fhn_waves::bloch::{critical_coefficients, critical_curve, critical_curve_extended};
use fhn_waves::dispersion::{
    curve_derivatives, curve_to_csv, default_fd_step, instability_scan, singular_period, DispersionPrediction,
};
use fhn_waves::dns::{extract_deff, run_perturbation_experiment, ExperimentConfig, Perturbation};
use fhn_waves::model::singular_limit;
use fhn_waves::wavetrain::{continue_in_c, continue_in_epsilon, wavetrain_at, WaveTrain};
use fhn_waves::{ModelKind, ReactionModel, SingularLimit};
use serde_json::{json, Value};

use crate::config::{Config, PerturbationKind, Scenario};
use crate::output::{fmt17, RunDir};
use crate::CliError;

pub fn run_scenario(cfg: &Config, out: &mut RunDir) -> Result<Value, CliError> {
    let model = cfg.model().build();
    let c = cfg.speed();
    match cfg.scenario {
        Scenario::SingularLimit => singular(&model, c, out),
        Scenario::DispersionCurve => dispersion(cfg, &model, c, out),
        Scenario::WavetrainContinue => continuation(cfg, &model, out),
        Scenario::BlochSpectrum => bloch(cfg, &model, c, out),
        Scenario::DeffSweep => deff_sweep(cfg, &model, c, out),
        Scenario::DnsPerturb => dns(cfg, &model, c, out),
        Scenario::InstabilityDemo => instability(cfg, &model, c, out),
    }
}

fn analytic(sl: &SingularLimit, eps: f64) -> Option<DispersionPrediction> {
    (sl.kind == ModelKind::ClassicFhn).then(|| DispersionPrediction::new(sl, eps).ok()).flatten()
}

fn estimate(source: &str, eps: f64, c: f64, d_eff: f64) -> Value {
    json!({ "source": source, "epsilon": eps, "c": c, "d_eff": d_eff })
}

fn singular(model: &ReactionModel, c: f64, out: &mut RunDir) -> Result<Value, CliError> {
    let sl = singular_limit(model, c)?;
    let eps = model.epsilon();
    let pred = analytic(&sl, eps);
    let mut estimates = Vec::new();
    if let Some(p) = &pred {
        estimates.push(estimate("analytic", eps, c, p.d_eff_leading));
    }
    let summary = json!({ "singular_limit": sl, "prediction": pred, "estimates": estimates });
    out.write_json("singular_limit.json", &summary)?;
    Ok(summary)
}

fn symmetric_grid(rho_max: f64, n: usize) -> Vec<f64> {
    let half = n / 2;
    (0..=2 * half).map(|k| rho_max * (k as f64 - half as f64) / half as f64).collect()
}

fn dispersion(cfg: &Config, model: &ReactionModel, c: f64, out: &mut RunDir) -> Result<Value, CliError> {
    let sl = singular_limit(model, c)?;
    let eps = model.epsilon();
    let l = cfg.numerics.l_eps.unwrap_or_else(|| singular_period(&sl, eps));
    let rho_max = cfg.numerics.rho_max.unwrap_or(2.0 * eps.powf(1.0 / 6.0) / c);
    let grid = symmetric_grid(rho_max, cfg.numerics.n_rho);
    let report = instability_scan(&sl, eps, l, &grid, &[])?;
    let (lp, lpp) = curve_derivatives(&sl, eps, l, default_fd_step(&sl, eps))?;
    out.write("dispersion_curve.csv", &curve_to_csv(&report.samples))?;
    let summary = json!({
        "epsilon": eps,
        "c": c,
        "l_eps": l,
        "l_eps_source": if cfg.numerics.l_eps.is_some() { "config" } else { "singular" },
        "lambda_p0": [lp.re, lp.im],
        "lambda_pp0": lpp.re,
        "max_re": report.max_re,
        "unstable_windows": report.unstable_windows,
        "prediction": analytic(&sl, eps),
        "heuristic": sl.kind == ModelKind::ModifiedFhn,
    });
    out.write_json("dispersion_summary.json", &summary)?;
    Ok(summary)
}

fn continuation(cfg: &Config, model: &ReactionModel, out: &mut RunDir) -> Result<Value, CliError> {
    let nm = &cfg.numerics;
    let rec = continue_in_c(model, nm.c_range, nm.c_steps, nm.n)?;
    let mut csv = String::from("c,l_eps,ell,omega,amplitude,residual\n");
    for s in &rec.samples {
        let row = [s.c, s.l_eps, s.ell, s.omega, s.amplitude, s.residual].map(fmt17).join(",");
        csv.push_str(&row);
        csv.push('\n');
    }
    out.write("continuation.csv", &csv)?;
    let summary = json!({
        "epsilon": model.epsilon(),
        "samples": rec.samples.len(),
        "monotone_increasing": rec.is_monotone_increasing(),
        "max_residual": rec.samples.iter().map(|s| s.residual).fold(0.0, f64::max),
    });
    out.write_json("continuation_summary.json", &summary)?;
    Ok(summary)
}

fn write_train(wt: &WaveTrain, out: &mut RunDir) -> Result<(), CliError> {
    out.write("wavetrain.csv", &wt.to_csv())?;
    out.write_json("wavetrain.json", &wt.metadata_json())
}

fn bloch(cfg: &Config, model: &ReactionModel, c: f64, out: &mut RunDir) -> Result<Value, CliError> {
    let eps = model.epsilon();
    let wt = wavetrain_at(model, c, cfg.numerics.n)?;
    write_train(&wt, out)?;
    let coeffs = critical_coefficients(&wt)?;
    let curve = critical_curve(&wt, cfg.numerics.n_rho)?;
    out.write("bloch_curve.csv", &curve.to_csv())?;
    let sl = singular_limit(model, c)?;
    let pred = analytic(&sl, eps);
    let mut estimates = vec![estimate("bloch", eps, c, -coeffs.lambda_pp)];
    if let Some(p) = &pred {
        estimates.push(estimate("analytic", eps, c, p.d_eff_leading));
    }
    let summary = json!({
        "epsilon": eps,
        "c": c,
        "l_eps": wt.l_eps,
        "coefficients": coeffs,
        "curve": curve.summary_json(),
        "prediction": pred,
        "estimates": estimates,
    });
    out.write_json("bloch_summary.json", &summary)?;
    Ok(summary)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn deff_sweep(cfg: &Config, model: &ReactionModel, c: f64, out: &mut RunDir) -> Result<Value, CliError> {
    let mut eps_list = cfg.numerics.epsilons.clone();
    eps_list.sort_by(|a, b| b.total_cmp(a));
    eps_list.dedup();
    let n = cfg.numerics.n;
    let mut wt = wavetrain_at(&model.with_epsilon(eps_list[0]), c, n)?;
    let mut rows = Vec::new();
    let mut csv = String::from("epsilon,l_eps,lambda_pp,analytic_lambda_pp,relative_error,scaled_error\n");
    for (k, &eps) in eps_list.iter().enumerate() {
        if k > 0 {
            wt = continue_in_epsilon(&wt, &[eps], n)?.pop().expect("one target");
        }
        let lpp = critical_coefficients(&wt)?.lambda_pp;
        let sl = singular_limit(&wt.model, c)?;
        let pred = analytic(&sl, eps).map(|p| p.lambda_pp_leading).unwrap_or(f64::NAN);
        let rel = (lpp - pred) / pred;
        let scaled = (lpp - pred).abs() / eps.powf(2.0 / 3.0);
        csv.push_str(&[eps, wt.l_eps, lpp, pred, rel, scaled].map(fmt17).join(","));
        csv.push('\n');
        rows.push((eps, lpp, pred));
    }
    out.write("deff_sweep.csv", &csv)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.0, r.1)).unzip();
    let estimates: Vec<Value> = rows.iter().map(|r| estimate("bloch", r.0, c, -r.1)).collect();
    let summary = json!({
        "c": c,
        "log_log_slope": log_log_slope(&xs, &ys),
        "all_negative": ys.iter().all(|&v| v < 0.0),
        "estimates": estimates,
    });
    out.write_json("deff_sweep_summary.json", &summary)?;
    Ok(summary)
}

fn dns(cfg: &Config, model: &ReactionModel, c: f64, out: &mut RunDir) -> Result<Value, CliError> {
    let nm = &cfg.numerics;
    let eps = model.epsilon();
    let wt = wavetrain_at(model, c, nm.n)?;
    write_train(&wt, out)?;
    let perturbation = match nm.perturbation {
        PerturbationKind::None => Perturbation::None,
        PerturbationKind::Bump => Perturbation::Gaussian { amplitude: nm.amplitude, width_sq: 100.0 },
        PerturbationKind::Random => Perturbation::Uniform { amplitude: nm.amplitude, seed: cfg.seed },
    };
    let exp = ExperimentConfig {
        repeats: nm.repeats,
        perturbation,
        t_end: nm.t_end,
        sample_dt: nm.sample_dt,
        dt: nm.dt,
        dx: nm.dx,
        frame: nm.frame,
        threshold: nm.threshold,
        snapshot_every: None,
    };
    let run = run_perturbation_experiment(&wt, &exp)?;
    out.write("widths.csv", &run.series.to_csv())?;
    let mut fields = String::from("x,u,perturbation\n");
    let last = run.final_state.u.len();
    let fit = fhn_waves::dns::phase_fit(&run.final_state.u, &fhn_waves::dns::TiledTrain::new(&wt, &run.grid)?);
    for j in 0..last {
        let row = [j as f64 * run.grid.dx, run.final_state.u[j], fit.perturbation[j]].map(fmt17).join(",");
        fields.push_str(&row);
        fields.push('\n');
    }
    out.write("final_state.csv", &fields)?;
    let fit_deff = extract_deff(&run.series, nm.transient_cut).ok();
    let mut estimates = Vec::new();
    if let Some(f) = &fit_deff {
        estimates.push(estimate("dns", eps, c, f.d_eff));
    }
    let summary = json!({
        "epsilon": eps,
        "c": c,
        "l_eps": wt.l_eps,
        "grid": { "n": run.grid.n, "dx": run.grid.dx, "l_domain": run.grid.l_domain },
        "seed": cfg.seed,
        "fit": fit_deff,
        "final_amplitude": run.amplitudes.last(),
        "estimates": estimates,
    });
    out.write_json("dns_summary.json", &summary)?;
    Ok(summary)
}

fn instability(cfg: &Config, model: &ReactionModel, c: f64, out: &mut RunDir) -> Result<Value, CliError> {
    let nm = &cfg.numerics;
    let eps = model.epsilon();
    let wt = wavetrain_at(model, c, nm.n)?;
    write_train(&wt, out)?;
    let curve = critical_curve_extended(&wt, nm.n_nu, nm.rho_max_extended)?;
    out.write("bloch_extended.csv", &curve.to_csv())?;
    let lam0 = curve
        .rho_samples
        .iter()
        .zip(&curve.lam_samples)
        .find(|(r, _)| **r == 0.0)
        .map(|(_, l)| l.norm());
    let sl = singular_limit(model, c)?;
    // fine enough that the main-formula continuation never skips a winding
    let steps = ((nm.rho_max_extended * wt.l_eps / c).ceil() as usize).max(nm.n_rho);
    let grid = symmetric_grid(nm.rho_max_extended, 2 * steps + 1);
    let scan = instability_scan(&sl, eps, wt.l_eps, &grid, &[])?;
    out.write("dispersion_scan.csv", &curve_to_csv(&scan.samples))?;
    let summary = json!({
        "epsilon": eps,
        "c": c,
        "l_eps": wt.l_eps,
        "lambda_at_zero": lam0,
        "bloch": curve.summary_json(),
        "main_formula": {
            "max_re": scan.max_re,
            "rho_at_max": scan.rho_at_max,
            "unstable_windows": scan.unstable_windows,
            "heuristic": sl.kind == ModelKind::ModifiedFhn,
        },
    });
    out.write_json("instability_summary.json", &summary)?;
    Ok(summary)
}
