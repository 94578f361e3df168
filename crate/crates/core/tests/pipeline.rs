//! End-to-end checks at a moderate epsilon where every pipeline runs in seconds.

use std::sync::OnceLock;

use fhn_waves::bloch::{critical_coefficients, critical_curve, lambda_pp_perturbative, spectrum};
use fhn_waves::dns::{phase_fit, Etdrk4, Frame, TiledTrain};
use fhn_waves::wavetrain::{continue_in_c, kinetic_cycle, relax_seed, wavetrain_from_kinetics, RelaxOptions, WaveTrain};
use fhn_waves::{Error, ReactionModel};

const EPS: f64 = 1e-2;
const N: usize = 257;

fn train() -> &'static WaveTrain {
    static WT: OnceLock<WaveTrain> = OnceLock::new();
    WT.get_or_init(|| wavetrain_from_kinetics(&ReactionModel::classic(0.2, 1.0, EPS), 2.0, N).unwrap())
}

#[test]
fn train_converges_and_period_grows_with_speed() {
    assert!(train().residual() < 1e-9);
    let rec = continue_in_c(&ReactionModel::classic(0.2, 1.0, EPS), (1.0, 2.0), 4, N).unwrap();
    assert!(rec.is_monotone_increasing());
    assert!(rec.samples.iter().all(|s| s.residual < 1e-9));
    let last = rec.samples.last().unwrap();
    assert!((last.l_eps - train().l_eps).abs() < 1e-6 * train().l_eps);
}

#[test]
fn translation_mode_sits_at_origin() {
    let spec = spectrum(train(), 0.0).unwrap();
    let nearest = spec.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
    assert!(nearest < 1e-8, "closest eigenvalue {nearest}");
}

#[test]
fn critical_curve_is_stable_and_matches_adjoint_coefficients() {
    let wt = train();
    let curve = critical_curve(wt, 21).unwrap();
    assert!(curve.max_re < 0.0);
    assert!(curve.unstable_rho.is_empty());
    let coeffs = critical_coefficients(wt).unwrap();
    assert!(coeffs.lambda_pp < 0.0);
    assert!((curve.lam_pp0 - coeffs.lambda_pp).abs() < 1e-4 * coeffs.lambda_pp.abs());
    assert!((curve.lam_p0.im - coeffs.lambda_p.im).abs() < 1e-6);
    let pert = lambda_pp_perturbative(wt).unwrap();
    assert!((pert - coeffs.lambda_pp).abs() < 1e-6 * coeffs.lambda_pp.abs());
}

#[test]
fn tiled_train_is_an_equilibrium_in_the_comoving_frame() {
    let wt = train();
    let grid = TiledTrain::grid_for(wt, 2, 0.1).unwrap();
    let tiled = TiledTrain::new(wt, &grid).unwrap();
    let mut state = tiled.state(Frame::Comoving);
    let mut integ = Etdrk4::new(grid.clone(), wt.model, 0.1, wt.c).unwrap();
    integ.advance(&mut state, 200).unwrap();
    let drift = state.u.iter().zip(&tiled.u).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    assert!(drift < 1e-6, "drift {drift}");

    let shifted = tiled.translate(3.3);
    let fit = phase_fit(&shifted, &tiled);
    assert!((fit.xi0 - 3.3).abs() < 1e-6);
    assert!(fit.perturbation.iter().all(|p| p.abs() < 1e-8));
}

#[test]
fn relaxed_seed_recovers_train_speed() {
    let wt = train();
    let model = ReactionModel::classic(0.2, 1.0, EPS);
    let r = relax_seed(&model, 2.0, wt.l_eps, 2000.0, N, &RelaxOptions::default()).unwrap();
    assert!(r.derivative_norm < 1e-4);
    assert!((r.speed - 2.0).abs() < 1e-2, "speed {}", r.speed);
}

#[test]
fn no_kinetic_cycle_outside_relaxation_regime() {
    let err = kinetic_cycle(&ReactionModel::classic(0.2, 1.0, 0.5)).unwrap_err();
    assert!(matches!(err, Error::RegimeViolation(_)));
}
