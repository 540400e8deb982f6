//! Special functions needed by the antenna and correlation models.

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Sine and cosine integrals `(Si(x), Ci(x))` for `x > 0`.
///
/// Power series below `x = 2`, complex continued fraction (modified Lentz)
/// above. `Ci(0)` is returned as `-inf`.
pub fn sine_cosine_integrals(x: f64) -> (f64, f64) {
    const MAX_ITER: usize = 200;
    const TINY: f64 = 1e-300;
    let t = x.abs();
    if t == 0.0 {
        return (0.0, f64::NEG_INFINITY);
    }
    let (si, ci) = if t > 2.0 {
        let one = Complex64::new(1.0, 0.0);
        let mut b = Complex64::new(1.0, t);
        let mut cf = Complex64::new(1.0 / TINY, 0.0);
        let mut d = one / b;
        let mut h = d;
        for i in 2..MAX_ITER {
            let a = -(((i - 1) * (i - 1)) as f64);
            b += 2.0;
            d = one / (d * a + b);
            cf = b + Complex64::new(a, 0.0) / cf;
            let del = cf * d;
            h *= del;
            if (del.re - 1.0).abs() + del.im.abs() < f64::EPSILON {
                break;
            }
        }
        h *= Complex64::new(t.cos(), -t.sin());
        (FRAC_PI_2 + h.im, -h.re)
    } else {
        let (mut sum, mut sums, mut sumc) = (0.0, 0.0, 0.0);
        let (mut sign, mut fact) = (1.0, 1.0);
        let mut odd = true;
        for k in 1..MAX_ITER {
            fact *= t / k as f64;
            let term = fact / k as f64;
            sum += sign * term;
            let err = term / sum.abs();
            if odd {
                sign = -sign;
                sums = sum;
                sum = sumc;
            } else {
                sumc = sum;
                sum = sums;
            }
            if err < f64::EPSILON {
                break;
            }
            odd = !odd;
        }
        (sums, sumc + t.ln() + EULER_GAMMA)
    };
    if x < 0.0 {
        (-si, ci)
    } else {
        (si, ci)
    }
}

/// Bessel function of the first kind, order zero.
///
/// Trapezoidal rule on `(1/pi) * integral_0^pi cos(x sin t) dt`; the
/// integrand is smooth and periodic so the rule converges geometrically.
pub fn bessel_j0(x: f64) -> f64 {
    let n = 64 + 2 * x.abs().ceil() as usize;
    let h = PI / n as f64;
    let sum: f64 = (0..n).map(|i| (x * (i as f64 * h).sin()).cos()).sum();
    sum / n as f64
}
