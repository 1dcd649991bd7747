//! Adaptive quadrature, convolutions and momentum-space integrals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::packets::{GaussianPacket, MomentumAmplitude, Packet};
use crate::units::{SeriesPolicy, UnitSystem};

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600339973480,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

// Gauss weights belong to the odd entries of XGK.
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

/// Tolerances of the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Bisections allowed beyond the initial panels.
    pub max_subdiv: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_subdiv: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn new(rel_tol: f64, abs_tol: f64, max_subdiv: usize) -> Result<Self> {
        let spec = Self {
            rel_tol,
            abs_tol,
            max_subdiv,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(invalid("quadrature tolerances must be positive"));
        }
        if self.max_subdiv < 8 {
            return Err(invalid("max_subdiv must be at least 8"));
        }
        Ok(())
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

/// A quadrature result with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
}

impl Estimate {
    pub fn exact(value: Complex64) -> Self {
        Self {
            value,
            error: 0.0,
            evaluations: 0,
        }
    }

    pub fn zero() -> Self {
        Self::exact(Complex64::new(0.0, 0.0))
    }

    pub fn scale(self, factor: Complex64) -> Self {
        Self {
            value: self.value * factor,
            error: self.error * factor.norm(),
            evaluations: self.evaluations,
        }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, rhs: Estimate) -> Estimate {
        Estimate {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
            evaluations: self.evaluations + rhs.evaluations,
        }
    }
}

impl std::ops::Sub for Estimate {
    type Output = Estimate;
    fn sub(self, rhs: Estimate) -> Estimate {
        Estimate {
            value: self.value - rhs.value,
            error: self.error + rhs.error,
            evaluations: self.evaluations + rhs.evaluations,
        }
    }
}

impl std::iter::Sum for Estimate {
    fn sum<It: Iterator<Item = Estimate>>(iter: It) -> Estimate {
        iter.fold(Estimate::zero(), |a, b| a + b)
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    at_floor: bool,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[10];
    let mut resabs = fc.norm() * WGK[10];
    let mut gauss = Complex64::new(0.0, 0.0);
    for j in 0..10 {
        let dx = h * XGK[j];
        let (lo, hi) = (f(c - dx), f(c + dx));
        let pair = lo + hi;
        kronrod += pair * WGK[j];
        resabs += (lo.norm() + hi.norm()) * WGK[j];
        if j % 2 == 1 {
            gauss += pair * WG[j / 2];
        }
    }
    let value = kronrod * h;
    // Rounding floor as in QUADPACK.
    let diff = ((kronrod - gauss) * h).norm();
    let floor = 50.0 * f64::EPSILON * resabs * h.abs();
    Segment {
        a,
        b,
        value,
        error: diff.max(floor),
        at_floor: diff <= floor,
    }
}

/// Adaptive 21-point Gauss–Kronrod quadrature of a complex integrand over
/// `[a, b]`, starting from `panels` equal sub-intervals.
///
/// The error estimate is the Kronrod–Gauss difference per segment, summed.
/// It is deliberately pessimistic for smooth integrands.
pub fn integrate<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(invalid(format!("integration limits must be finite: [{a}, {b}]")));
    }
    if a == b {
        return Ok(Estimate::zero());
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let panels = panels.max(1);
    let width = (hi - lo) / panels as f64;
    let mut heap = BinaryHeap::with_capacity(2 * panels + 16);
    let mut total = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    for i in 0..panels {
        let x0 = lo + width * i as f64;
        let x1 = if i + 1 == panels { hi } else { x0 + width };
        let seg = gk21(&mut f, x0, x1);
        total += seg.value;
        err += seg.error;
        heap.push(seg);
    }
    let mut evaluations = 21 * panels;
    let mut count = panels;
    // Error carried by segments that cannot improve: rounding-limited or
    // too narrow to split.
    let mut parked = 0.0;
    loop {
        let tol = spec.abs_tol.max(spec.rel_tol * total.norm());
        if err <= tol {
            break;
        }
        if heap.is_empty() {
            // Only rounding-limited segments remain; nothing more to gain.
            if parked >= 0.5 * err {
                break;
            }
        }
        if count >= panels + spec.max_subdiv || heap.is_empty() {
            return Err(Error::AccuracyFailure {
                message: format!(
                    "adaptive quadrature on [{lo}, {hi}] stopped after {count} segments"
                ),
                estimate: total * sign,
                error: err,
            });
        }
        let seg = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (seg.a + seg.b);
        if seg.at_floor || !(mid > seg.a && mid < seg.b) || (seg.b - seg.a) < 1e-13 * (hi - lo) {
            parked += seg.error;
            continue;
        }
        let left = gk21(&mut f, seg.a, mid);
        let right = gk21(&mut f, mid, seg.b);
        evaluations += 42;
        count += 1;
        total += left.value + right.value - seg.value;
        err += left.error + right.error - seg.error;
        heap.push(left);
        heap.push(right);
    }
    Ok(Estimate {
        value: total * sign,
        error: err.max(0.0),
        evaluations,
    })
}

/// Integrates over consecutive intervals given by sorted `breaks`.
pub fn integrate_breaks<F: FnMut(f64) -> Complex64>(
    mut f: F,
    breaks: &[f64],
    panels_per_interval: usize,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    let mut acc = Estimate::zero();
    for w in breaks.windows(2) {
        acc = acc + integrate(&mut f, w[0], w[1], panels_per_interval, spec)?;
    }
    Ok(acc)
}

/// Number of initial panels so that each holds about one oscillation of a
/// phase changing at most at rate `max_rate` (radians per unit).
pub fn panels_for_phase(max_rate: f64, width: f64) -> usize {
    let n = (max_rate.abs() * width.abs() / (2.0 * PI)).ceil();
    (n as usize).clamp(4, 4000)
}

/// `(κ/√(2πti)) ∫ exp(iκ²(Q + sign·y)²/(2t)) ψ_g(y, 0) dy` over the real line,
/// evaluated in closed form.
///
/// With `sign = -1` this is the freely evolved packet at `Q`; with
/// `sign = +1` it is the freely evolved packet at `-Q`, the image term.
pub fn fresnel_gaussian_integral(
    q: f64,
    sign: i32,
    t: f64,
    g: &GaussianPacket,
    u: &UnitSystem,
) -> Result<Complex64> {
    if !(t > 0.0) {
        return Err(invalid(format!("time must be positive, got {t}")));
    }
    match sign {
        -1 => Ok(g.free(q, t, u)),
        1 => Ok(g.free(-q, t, u)),
        _ => Err(invalid(format!("sign must be +1 or -1, got {sign}"))),
    }
}

/// `∫_a^b kernel(y) ψ0(y) dy` by adaptive quadrature.
pub fn oscillatory_integral<K: FnMut(f64) -> Complex64>(
    mut kernel: K,
    psi0: &Packet,
    support: (f64, f64),
    spec: &QuadratureSpec,
    u: &UnitSystem,
) -> Result<Estimate> {
    let (a, b) = support;
    if !(a.is_finite() && b.is_finite()) {
        return Err(invalid("oscillatory_integral needs a finite support"));
    }
    let rate = psi0.mean_momentum(u).abs() / u.hbar();
    let panels = panels_for_phase(rate, b - a);
    integrate(|y| kernel(y) * psi0.position(y, u), a, b, panels, spec)
}

/// `∫_0^t F(t-τ) kern(τ) dτ`.
///
/// The substitution `τ = t - σ²` removes an inverse square-root behaviour of
/// `F` at zero argument, which the free propagator on a finite support has.
pub fn convolve_with_kernel<F, K>(
    mut big_f: F,
    mut kern: K,
    t: f64,
    spec: &QuadratureSpec,
    policy: &SeriesPolicy,
) -> Result<Estimate>
where
    F: FnMut(f64) -> Complex64,
    K: FnMut(f64) -> Complex64,
{
    if !(t >= 0.0) {
        return Err(invalid(format!("convolution time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(Estimate::zero());
    }
    let spec = QuadratureSpec {
        rel_tol: spec.rel_tol.max(policy.tau_quad_tol),
        ..*spec
    };
    let panels = 8;
    integrate(
        |sigma| {
            let s = sigma * sigma;
            big_f(s) * kern(t - s) * (2.0 * sigma)
        },
        0.0,
        t.sqrt(),
        panels,
        &spec,
    )
}

/// `(1/√(2πħ)) ∫ exp(-ipx/ħ) exp(-ip²t/(2mħ)) f(p) w(p) dp` over the
/// effective support of `f`.
///
/// With `w ≡ 1` the value equals the freely evolved packet at `-x`.
pub fn momentum_integral<W: FnMut(f64) -> Complex64>(
    f: &MomentumAmplitude,
    mut weight: W,
    x: f64,
    t: f64,
    spec: &QuadratureSpec,
    u: &UnitSystem,
) -> Result<Estimate> {
    let (lo, hi) = f.support();
    let hbar = u.hbar();
    let m = u.mass();
    let rate = (x.abs() + hi.abs().max(lo.abs()) * t.abs() / m + f.position_spread() * 4.0) / hbar;
    let panels = panels_for_phase(rate, hi - lo);
    let norm = 1.0 / (2.0 * PI * hbar).sqrt();
    let est = integrate(
        |p| {
            let phase = -p * x / hbar - p * p * t / (2.0 * m * hbar);
            Complex64::from_polar(1.0, phase) * f.eval(p) * weight(p)
        },
        lo,
        hi,
        panels,
        spec,
    )?;
    Ok(est.scale(Complex64::new(norm, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::r_kernel;
    use proptest::prelude::*;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn kronrod_is_exact_for_polynomials() {
        // The Kronrod rule is exact to degree 31, the embedded Gauss rule to 19.
        let mut f = |x: f64| Complex64::new(x.powi(30), x.powi(31));
        let seg = gk21(&mut f, -1.0, 1.0);
        assert!((seg.value.re - 2.0 / 31.0).abs() < 1e-15);
        assert!(seg.value.im.abs() < 1e-15);
        let val = integrate(|x| Complex64::new(3.0 * x.powi(18), x.powi(19)), -1.0, 1.0, 1, &spec())
            .unwrap();
        assert!((val.value.re - 6.0 / 19.0).abs() < 1e-15);
        assert_eq!(val.evaluations, 21);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let f = |x: f64| Complex64::new(x.cos(), x.sin());
        let a = integrate(f, 0.0, 2.0, 1, &spec()).unwrap();
        let b = integrate(f, 2.0, 0.0, 1, &spec()).unwrap();
        assert!((a.value + b.value).norm() < 1e-15);
        assert!((a.value - Complex64::new(2f64.sin(), 1.0 - 2f64.cos())).norm() < 1e-13);
    }

    #[test]
    fn failure_carries_best_estimate() {
        let tight = QuadratureSpec::new(1e-15, 1e-300, 8).unwrap();
        let res = integrate(|x| Complex64::new((200.0 * x).sin() / x.sqrt(), 0.0), 1e-9, 1.0, 1, &tight);
        match res {
            Err(Error::AccuracyFailure { estimate, error, .. }) => {
                assert!(estimate.re.is_finite());
                assert!(error > 0.0);
            }
            other => panic!("expected AccuracyFailure, got {other:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::new(0.0, 1e-12, 100).is_err());
        assert!(QuadratureSpec::new(1e-8, 1e-12, 4).is_err());
        spec().validate().unwrap();
    }

    #[test]
    fn fresnel_matches_quadrature() {
        let u = UnitSystem::natural();
        let g = GaussianPacket::new(1.0, -2.0, 3.0).unwrap();
        let t = 0.7;
        let psi0 = Packet::Gaussian(g);
        for &q in &[-1.0, 0.0, 0.5, 2.5] {
            for &sign in &[-1, 1] {
                let closed = fresnel_gaussian_integral(q, sign, t, &g, &u).unwrap();
                let pref = Complex64::new(u.kappa(), 0.0) / (Complex64::new(0.0, 2.0 * PI * t)).sqrt();
                let num = oscillatory_integral(
                    |y| {
                        let d = q + sign as f64 * y;
                        pref * Complex64::from_polar(1.0, u.kappa().powi(2) * d * d / (2.0 * t))
                    },
                    &psi0,
                    (-16.0, 12.0),
                    &spec().with_rel_tol(1e-11),
                    &u,
                )
                .unwrap();
                assert!((closed - num.value).norm() < 1e-9, "q={q} sign={sign}");
            }
        }
        assert!(fresnel_gaussian_integral(0.0, -1, 0.0, &g, &u).is_err());
        assert!(fresnel_gaussian_integral(0.0, 2, 1.0, &g, &u).is_err());
    }

    #[test]
    fn fresnel_short_time_limit() {
        let u = UnitSystem::natural();
        let g = GaussianPacket::new(1.0, 0.5, 2.0).unwrap();
        let x = 0.8;
        let v = fresnel_gaussian_integral(x, -1, 1e-9, &g, &u).unwrap();
        assert!((v - g.position(x, &u)).norm() < 1e-7);
    }

    #[test]
    fn fresnel_sign_symmetry_for_centred_packet() {
        let u = UnitSystem::natural();
        let g = GaussianPacket::new(1.3, 0.0, 0.0).unwrap();
        for &q in &[0.3, 1.7] {
            let a = fresnel_gaussian_integral(q, 1, 0.9, &g, &u).unwrap();
            let b = fresnel_gaussian_integral(-q, -1, 0.9, &g, &u).unwrap();
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }
    }

    #[test]
    fn oscillatory_integral_trivial_cases() {
        let u = UnitSystem::natural();
        let g = GaussianPacket::new(1.0, 0.0, 0.0).unwrap();
        let psi0 = Packet::Gaussian(g);
        let v = oscillatory_integral(|_| Complex64::new(1.0, 0.0), &psi0, (-15.0, 15.0), &spec(), &u)
            .unwrap();
        // ∫ (π)^{-1/4} e^{-y²/2} dy = √2 π^{1/4}
        assert!((v.value.re - 2f64.sqrt() * PI.powf(0.25)).abs() < 1e-10);
        let zero = Packet::Gaussian(g);
        let v = oscillatory_integral(|_| Complex64::new(0.0, 0.0), &zero, (-1.0, 1.0), &spec(), &u)
            .unwrap();
        assert_eq!(v.value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn convolution_basics() {
        let policy = SeriesPolicy::default();
        let zero = convolve_with_kernel(|_| Complex64::new(1.0, 0.0), |_| Complex64::new(0.0, 0.0), 2.0, &spec(), &policy)
            .unwrap();
        assert_eq!(zero.value, Complex64::new(0.0, 0.0));
        // ∫_0^t (t-τ) e^{iτ} dτ
        let t = 1.7;
        let got = convolve_with_kernel(
            |s| Complex64::new(s, 0.0),
            |tau| Complex64::from_polar(1.0, tau),
            t,
            &spec(),
            &policy,
        )
        .unwrap();
        let i = Complex64::new(0.0, 1.0);
        let want = 1.0 + i * t - (i * t).exp();
        assert!((got.value - want).norm() < 1e-12);
    }

    #[test]
    fn convolution_with_r_matches_riemann_sum() {
        let u = UnitSystem::natural();
        let v = 3.0;
        let t = 4.0;
        let got = convolve_with_kernel(
            |_| Complex64::new(1.0, 0.0),
            |tau| r_kernel(tau, v, &u).unwrap(),
            t,
            &spec(),
            &SeriesPolicy::default(),
        )
        .unwrap();
        let n = 400_000;
        let h = t / n as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            acc += r_kernel((i as f64 + 0.5) * h, v, &u).unwrap() * h;
        }
        assert!((got.value - acc).norm() < 1e-9);
    }

    #[test]
    fn momentum_integral_reproduces_free_evolution() {
        let u = UnitSystem::new(1.0, 2.0).unwrap();
        let g = GaussianPacket::new(0.8, -3.0, 4.0).unwrap();
        let f = Packet::Gaussian(g).momentum_rep(&u).unwrap();
        for &(x, t) in &[(-3.0, 0.0), (-1.0, 0.5), (0.4, 1.2), (2.0, 2.0)] {
            let m = momentum_integral(&f, |_| Complex64::new(1.0, 0.0), -x, t, &spec(), &u).unwrap();
            let free = g.free(x, t, &u);
            assert!((m.value - free).norm() < 1e-8, "x={x} t={t}");
        }
        let zero = momentum_integral(&f, |_| Complex64::new(0.0, 0.0), 1.0, 1.0, &spec(), &u).unwrap();
        assert_eq!(zero.value, Complex64::new(0.0, 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn error_estimate_bounds_true_error(
            alpha in 0.2f64..3.0,
            x0 in -3.0f64..3.0,
            p0 in -6.0f64..6.0,
            x in -4.0f64..4.0,
            t in 0.05f64..2.0,
        ) {
            let u = UnitSystem::natural();
            let g = GaussianPacket::new(alpha, x0, p0).unwrap();
            let f = Packet::Gaussian(g).momentum_rep(&u).unwrap();
            let loose = QuadratureSpec::new(1e-5, 1e-9, 2000).unwrap();
            let m = momentum_integral(&f, |_| Complex64::new(1.0, 0.0), -x, t, &loose, &u).unwrap();
            // The support truncation at ±10 spreads contributes ~e^{-100}.
            let truth = g.free(x, t, &u);
            prop_assert!((m.value - truth).norm() <= m.error + 1e-15, "{} vs {} err {}", m.value, truth, m.error);
        }

        #[test]
        fn convolution_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, t in 0.1f64..3.0) {
            let policy = SeriesPolicy::default();
            let kern = |tau: f64| Complex64::from_polar(1.0 / (1.0 + tau), 3.0 * tau);
            let f1 = |s: f64| Complex64::new(s.cos(), s);
            let f2 = |s: f64| Complex64::new((-s).exp(), 0.5);
            let lhs = convolve_with_kernel(|s| a * f1(s) + b * f2(s), kern, t, &spec(), &policy).unwrap();
            let r1 = convolve_with_kernel(f1, kern, t, &spec(), &policy).unwrap();
            let r2 = convolve_with_kernel(f2, kern, t, &spec(), &policy).unwrap();
            prop_assert!((lhs.value - (a * r1.value + b * r2.value)).norm() < 1e-10);
        }
    }
}
