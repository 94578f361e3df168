//! Quadrature helpers: Gauss-Legendre rules and adaptive Gauss-Kronrod.

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

// Gauss-Kronrod 7/15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration of `f` over [a, b] to the given
/// absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut stack = vec![(a, b, gk15(&f, a, b))];
    let mut total = 0.0;
    let mut err_total = 0.0;
    let mut evaluations = 0usize;
    while let Some((lo, hi, (val, err))) = stack.pop() {
        let local_tol = tol * (hi - lo).abs() / (b - a).abs().max(f64::MIN_POSITIVE);
        if err <= local_tol.max(1e-15 * val.abs()) || (hi - lo).abs() < 1e-12 * (b - a).abs() {
            total += val;
            err_total += err;
            continue;
        }
        evaluations += 1;
        if evaluations > 20_000 {
            return Err(Error::QuadratureFailure { tol, estimate: err_total + err });
        }
        let mid = 0.5 * (lo + hi);
        stack.push((lo, mid, gk15(&f, lo, mid)));
        stack.push((mid, hi, gk15(&f, mid, hi)));
    }
    if err_total > 10.0 * tol.max(1e-15 * total.abs()) {
        return Err(Error::QuadratureFailure { tol, estimate: err_total });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(16);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // degree 30 monomial
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((v - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn kronrod_matches_closed_forms() {
        let v = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let v = integrate(|x: f64| 1.0 / (1.0 + x * x), -50.0, 50.0, 1e-12).unwrap();
        assert!((v - 2.0 * 50f64.atan()).abs() < 1e-11);
    }
}
