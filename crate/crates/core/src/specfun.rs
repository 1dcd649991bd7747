//! Special functions and the inverse-Laplace kernels of the step potential.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::units::UnitSystem;

const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Faddeeva function `w(z) = exp(-z²) erfc(-iz)` for `Im z >= 0`.
///
/// Poppe & Wijers' algorithm: power series near the origin, a truncated
/// Laplace continued fraction far away and the Gautschi-type series with
/// a finite step `h` in between. Relative accuracy is about 1e-14.
fn wofz_upper(z: Complex64) -> Complex64 {
    let xi = z.re;
    let yi = z.im;
    debug_assert!(yi >= 0.0);
    let xabs = xi.abs();
    let yabs = yi;
    let x = xabs / 6.3;
    let y = yabs / 4.4;
    let mut qrho = x * x + y * y;
    let xquad = xabs * xabs - yabs * yabs;
    let yquad = 2.0 * xabs * yabs;

    let (u, v);
    if qrho < 0.085264 {
        // Power series of erfc around the origin.
        qrho = (1.0 - 0.85 * y) * qrho.sqrt();
        let n = (6.0 + 72.0 * qrho).round() as i64;
        let mut j = 2 * n + 1;
        let mut xsum = 1.0 / j as f64;
        let mut ysum = 0.0;
        for i in (1..=n).rev() {
            j -= 2;
            let xaux = (xsum * xquad - ysum * yquad) / i as f64;
            ysum = (xsum * yquad + ysum * xquad) / i as f64;
            xsum = xaux + 1.0 / j as f64;
        }
        let u1 = -TWO_OVER_SQRT_PI * (xsum * yabs + ysum * xabs) + 1.0;
        let v1 = TWO_OVER_SQRT_PI * (xsum * xabs - ysum * yabs);
        let daux = (-xquad).exp();
        let u2 = daux * yquad.cos();
        let v2 = -daux * yquad.sin();
        u = u1 * u2 - v1 * v2;
        v = u1 * v2 + v1 * u2;
    } else {
        let (h, kapn, nu);
        if qrho > 1.0 {
            h = 0.0;
            kapn = 0i64;
            qrho = qrho.sqrt();
            nu = (3.0 + 1442.0 / (26.0 * qrho + 77.0)) as i64;
        } else {
            qrho = (1.0 - y) * (1.0 - qrho).sqrt();
            h = 1.88 * qrho;
            kapn = (7.0 + 34.0 * qrho).round() as i64;
            nu = (16.0 + 26.0 * qrho).round() as i64;
        }
        let h2 = 2.0 * h;
        let with_h = h > 0.0;
        let mut qlambda = if with_h { h2.powi(kapn as i32) } else { 0.0 };
        let (mut rx, mut ry, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0);
        for n in (0..=nu).rev() {
            let np1 = (n + 1) as f64;
            let tx = yabs + h + np1 * rx;
            let ty = xabs - np1 * ry;
            let c = 0.5 / (tx * tx + ty * ty);
            rx = c * tx;
            ry = c * ty;
            if with_h && n <= kapn {
                let tx = qlambda + sx;
                sx = rx * tx - ry * sy;
                sy = ry * tx + rx * sy;
                qlambda /= h2;
            }
        }
        if with_h {
            u = TWO_OVER_SQRT_PI * sx;
            v = TWO_OVER_SQRT_PI * sy;
        } else {
            u = TWO_OVER_SQRT_PI * rx;
            v = TWO_OVER_SQRT_PI * ry;
        }
    }
    let u = if yabs == 0.0 { (-xabs * xabs).exp() } else { u };
    if xi < 0.0 {
        Complex64::new(u, -v)
    } else {
        Complex64::new(u, v)
    }
}

/// Faddeeva function `w(z) = exp(-z²) erfc(-iz)` on the whole plane.
///
/// In the lower half plane `w(z) = 2 exp(-z²) - w(-z)`, which overflows
/// once `Im(z)² - Re(z)²` exceeds roughly 700.
pub fn faddeeva(z: Complex64) -> Result<Complex64> {
    check_finite(z)?;
    if z.im >= 0.0 {
        Ok(wofz_upper(z))
    } else {
        Ok(2.0 * (-z * z).exp() - wofz_upper(-z))
    }
}

fn check_finite(z: Complex64) -> Result<()> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("non-finite argument {z}")))
    }
}

/// Complementary error function of a complex argument.
pub fn erfc_complex(z: Complex64) -> Result<Complex64> {
    Ok(exp_erfc(Complex64::new(0.0, 0.0), z)?)
}

/// `exp(a) · erfc(w)` without intermediate overflow.
///
/// The propagator kernels multiply large exponentials with tiny
/// complementary error functions; combining the exponents first keeps
/// the product representable.
pub fn exp_erfc(a: Complex64, w: Complex64) -> Result<Complex64> {
    check_finite(a)?;
    check_finite(w)?;
    let e = a - w * w;
    if w.re >= 0.0 {
        Ok(exp_or_zero(e) * wofz_upper(I * w))
    } else {
        Ok(2.0 * exp_or_zero(a) - exp_or_zero(e) * wofz_upper(-I * w))
    }
}

fn exp_or_zero(z: Complex64) -> Complex64 {
    if z.re < -745.0 {
        Complex64::new(0.0, 0.0)
    } else {
        z.exp()
    }
}

/// Bessel function of the first kind for integer order `n >= 0`.
pub fn bessel_j(n: i64, x: f64) -> Result<f64> {
    if n < 0 {
        return Err(invalid(format!("Bessel order must be non-negative, got {n}")));
    }
    if !x.is_finite() {
        return Err(invalid(format!("non-finite Bessel argument {x}")));
    }
    Ok(bessel_jn(n as usize, x))
}

pub(crate) fn bessel_jn(n: usize, x: f64) -> f64 {
    let sign = if x < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
    let ax = x.abs();
    if ax == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    let v = if ax > 25.0 + 0.5 * nf * nf {
        hankel_asymptotic(n, ax)
    } else {
        miller(n, ax)
    };
    sign * v
}

/// Hankel's asymptotic expansion, summed until the terms start to grow.
fn hankel_asymptotic(n: usize, x: f64) -> f64 {
    let mu = 4.0 * (n as f64) * (n as f64);
    let z8 = 8.0 * x;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..80 {
        let kf = k as f64;
        let t = term * (mu - (2.0 * kf - 1.0).powi(2)) / (kf * z8);
        if t.abs() > last {
            break;
        }
        last = t.abs();
        term = t;
        match k % 4 {
            1 => q += t,
            2 => p -= t,
            3 => q -= t,
            _ => p += t,
        }
        if t.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - (0.5 * n as f64 + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Miller's backward recurrence normalised by `J0 + 2 Σ J_2k = 1`.
fn miller(n: usize, x: f64) -> f64 {
    let m = n.max(x as usize);
    let mut start = m + 20 + (40.0 * m as f64).sqrt() as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut jp1 = 0.0;
    let mut j = 1e-300;
    let mut sum = 0.0;
    let mut result = 0.0;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp1 *= 1e-250;
            sum *= 1e-250;
            result *= 1e-250;
        }
        if k - 1 == n {
            result = j;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            sum += 2.0 * j;
        }
    }
    sum += j;
    result / sum
}

/// `J_n(x) / x` with the finite limit at `x = 0`.
fn bessel_over_x(n: usize, x: f64) -> f64 {
    if x.abs() < 1e-8 {
        // Leading series term (x/2)^n / n! divided by x.
        return match n {
            0 => {
                if x == 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / x
                }
            }
            1 => 0.5 - x * x / 16.0,
            2 => x / 8.0,
            _ => 0.0,
        };
    }
    bessel_jn(n, x) / x
}

/// `ρ(s) = 2 / (1 + √(1 - V/(ħ s i))) - 1` with the principal square root.
pub fn rho_of_s(s: Complex64, v: f64, u: &UnitSystem) -> Result<Complex64> {
    check_finite(s)?;
    if s == Complex64::new(0.0, 0.0) {
        return Err(Error::Singularity("rho(s) is singular at s = 0".into()));
    }
    let root = (1.0 - v / (u.hbar() * s * I)).sqrt();
    Ok(2.0 / (1.0 + root) - 1.0)
}

/// Inverse Laplace transform of `ρ(s)`:
/// `r(t) = J₁(Vt/2ħ) e^{-iVt/2ħ} / (i t)`.
pub fn r_kernel(t: f64, v: f64, u: &UnitSystem) -> Result<Complex64> {
    m_kernel(1, t, v, u)
}

/// Inverse Laplace transform of `ρ(s)^k`:
/// `M(k,t) = k J_k(Vt/2ħ) e^{-iVt/2ħ} / (i^k t)`.
pub fn m_kernel(k: i64, t: f64, v: f64, u: &UnitSystem) -> Result<Complex64> {
    if k < 1 {
        return Err(invalid(format!("M(k, t) needs k >= 1, got {k}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("kernel time must be non-negative, got {t}")));
    }
    Ok(m_kernel_unchecked(k as usize, t, v, u.hbar()))
}

pub(crate) fn m_kernel_unchecked(k: usize, t: f64, v: f64, hbar: f64) -> Complex64 {
    let c = v / (2.0 * hbar);
    let x = c * t;
    // k J_k(x)/t = k c J_k(x)/x
    let mag = k as f64 * c * bessel_over_x(k, x);
    let phase = Complex64::from_polar(1.0, -x);
    let ipow = match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    };
    ipow * phase * mag
}

/// Inverse Laplace transform of `(ρ(s) + 1) ρ(s)^k` without the delta
/// distribution that appears for `k = 0`.
///
/// For `k >= 1` this is `M(k,t) + M(k+1,t)`. For `k = 0` the transform is
/// `δ(t) + r(t)`; only `r(t)` is returned and callers add the unconvolved
/// term themselves.
pub fn l_kernel(k: i64, t: f64, v: f64, u: &UnitSystem) -> Result<Complex64> {
    if k < 0 {
        return Err(invalid(format!("L(k, t) needs k >= 0, got {k}")));
    }
    if k == 0 {
        return r_kernel(t, v, u);
    }
    Ok(m_kernel(k, t, v, u)? + m_kernel(k + 1, t, v, u)?)
}

/// Envelope `|r(t)| <= (V/2ħ) min(1/2, 0.6/x)` with `x = Vt/2ħ`, based on
/// `|J₁(x)| <= min(x/2, 0.6)`.
pub fn r_kernel_envelope(t: f64, v: f64, u: &UnitSystem) -> f64 {
    let c = v / (2.0 * u.hbar());
    let x = c * t;
    if x <= 1.2 {
        0.5 * c
    } else {
        0.6 / t
    }
}

/// Value of the reflection coefficient together with `k = p²/(2mV)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionCoefficient {
    pub value: Complex64,
    pub k_ratio: f64,
}

/// Stationary reflection coefficient of the step.
///
/// Above the step (`k > 1`) `R = -1 + 2k - 2√(k(k-1))` is real; below it
/// the value is the boundary value of `ρ(s)` approached from `Re s > 0`,
/// `R = 2k - 1 - 2i√(k(1-k))`, which has modulus one.
pub fn reflection_r(p: f64, v: f64, u: &UnitSystem) -> Result<ReflectionCoefficient> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(format!("step height must be positive, got {v}")));
    }
    if !p.is_finite() {
        return Err(invalid(format!("non-finite momentum {p}")));
    }
    let k = p * p / (2.0 * u.mass() * v);
    let value = if k >= 1.0 {
        // 2k - 1 - 2√(k(k-1)) = 1 / (2k - 1 + 2√(k(k-1))) avoids cancellation.
        Complex64::new(1.0 / (2.0 * k - 1.0 + 2.0 * (k * (k - 1.0)).sqrt()), 0.0)
    } else {
        Complex64::new(2.0 * k - 1.0, -2.0 * (k * (1.0 - k)).sqrt())
    };
    Ok(ReflectionCoefficient { value, k_ratio: k })
}

pub(crate) fn reflection_value(p: f64, v: f64, mass: f64) -> Complex64 {
    let k = p * p / (2.0 * mass * v);
    if k >= 1.0 {
        Complex64::new(1.0 / (2.0 * k - 1.0 + 2.0 * (k * (k - 1.0)).sqrt()), 0.0)
    } else {
        Complex64::new(2.0 * k - 1.0, -2.0 * (k * (1.0 - k)).sqrt())
    }
}
