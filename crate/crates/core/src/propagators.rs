//! Time-domain solutions for the infinite well, the potential step and the
//! asymmetric well, both the exact convolution forms and their
//! semiclassical approximations.
//!
//! Coordinates follow each potential: the well occupies `[0, d]`, the step
//! sits at `x = 0` with height `V` on the right, and the asymmetric well is
//! `[-d, 0]` with the infinite wall at `-d` and the step at `0`.
//!
//! Convolution integrals are only evaluated over the time window in which
//! the propagated packet is non-negligible at the observation point. For
//! Gaussians the window follows from the exact envelope; for sampled
//! packets it uses the Gaussian with the same first and second moments.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::diagnostics::{box_conditions, climbing_diagnostics, forbidden_diagnostics};
use crate::error::{invalid, Error, Result};
use crate::numerics::{integrate, momentum_integral, panels_for_phase, Estimate, QuadratureSpec};
use crate::packets::{deformed_packet, GaussianPacket, MomentumAmplitude, Packet};
use crate::specfun::{exp_erfc, m_kernel_unchecked, reflection_value};
use crate::units::{classical_reflection_time, SeriesPolicy, UnitSystem};

/// Half-width of propagation windows in standard deviations. At this
/// distance a Gaussian density has dropped by `e^{-64}`.
pub const WINDOW_SIGMAS: f64 = 11.313708498984761;

/// Largest probability a packet may carry outside the region the solution
/// assumes it starts in.
pub const SUPPORT_MASS_LIMIT: f64 = 1e-10;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Units, quadrature tolerances and series truncation shared by all
/// propagators.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Context {
    pub units: UnitSystem,
    pub quad: QuadratureSpec,
    pub policy: SeriesPolicy,
}

impl Context {
    pub fn new(units: UnitSystem) -> Self {
        Self {
            units,
            ..Self::default()
        }
    }

    pub fn with_quad(mut self, quad: QuadratureSpec) -> Self {
        self.quad = quad;
        self
    }

    pub fn with_policy(mut self, policy: SeriesPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.quad.validate()?;
        self.policy.validate()
    }

    /// Tolerance for the outer time convolutions.
    fn conv_spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            rel_tol: self.quad.rel_tol.max(self.policy.tau_quad_tol),
            ..self.quad
        }
    }

    /// Tolerance for integrals nested inside a convolution.
    fn inner_spec(&self) -> QuadratureSpec {
        let outer = self.conv_spec();
        QuadratureSpec {
            rel_tol: (outer.rel_tol * 0.1).max(1e-14),
            abs_tol: outer.abs_tol * 0.1,
            ..outer
        }
    }
}

/// Which of the step solutions to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepSolutionMode {
    ExactLeft,
    ExactRight,
    ApproxClimb,
    ApproxForbidden,
}

/// Evanescent factor `(1 + R(p0)) e^{-κ_e x}` of the forbidden-region
/// approximation, with `κ_e = √(2mV - p0²)/ħ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvanescentProfile {
    pub decay_rate: f64,
    pub prefactor: Complex64,
}

impl EvanescentProfile {
    pub fn new(p0: f64, v: f64, u: &UnitSystem) -> Result<Self> {
        check_height(v)?;
        let gap = 2.0 * u.mass() * v - p0 * p0;
        if !(gap > 0.0) {
            return Err(Error::PreconditionViolation(format!(
                "p0 = {p0} is not below the step threshold {:.6}",
                (2.0 * u.mass() * v).sqrt()
            )));
        }
        Ok(Self {
            decay_rate: gap.sqrt() / u.hbar(),
            prefactor: 1.0 + reflection_value(p0, v, u.mass()),
        })
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.prefactor * (-self.decay_rate * x).exp()
    }
}

/// An initial packet with its momentum representation and the moments
/// used to place propagation windows.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    packet: Packet,
    f: MomentumAmplitude,
    units: UnitSystem,
    x_centre: f64,
    x_spread: f64,
    peak: f64,
}

impl InitialState {
    pub fn new(packet: Packet, u: &UnitSystem) -> Result<Self> {
        let f = packet.momentum_rep(u)?;
        let peak = match &packet {
            Packet::Gaussian(g) => (PI * g.alpha).powf(-0.25),
            Packet::Sampled(w) => w.amps().iter().map(|a| a.norm()).fold(0.0, f64::max),
        };
        Ok(Self {
            x_centre: f.position_centre(),
            x_spread: f.position_spread(),
            packet,
            f,
            units: *u,
            peak,
        })
    }

    pub fn gaussian(g: GaussianPacket, u: &UnitSystem) -> Result<Self> {
        Self::new(Packet::Gaussian(g), u)
    }

    pub fn packet(&self) -> &Packet {
        &self.packet
    }

    pub fn amplitude(&self) -> &MomentumAmplitude {
        &self.f
    }

    pub fn units(&self) -> &UnitSystem {
        &self.units
    }

    pub fn mean_position(&self) -> f64 {
        self.x_centre
    }

    pub fn mean_momentum(&self) -> f64 {
        self.f.p0
    }

    /// `ψ(x, 0)`.
    pub fn initial(&self, x: f64) -> Complex64 {
        self.packet.position(x, &self.units)
    }

    /// Freely evolved packet `ψ_free(x, t)`.
    pub fn free(&self, x: f64, t: f64, spec: &QuadratureSpec) -> Result<Complex64> {
        match &self.packet {
            Packet::Gaussian(g) => Ok(g.free(x, t, &self.units)),
            Packet::Sampled(w) => {
                if t == 0.0 {
                    return Ok(w.interpolate(x));
                }
                // (1/√(2πħ)) ∫ e^{ipx/ħ - ip²t/(2mħ)} f(p) dp
                Ok(momentum_integral(&self.f, |_| Complex64::new(1.0, 0.0), -x, t, spec, &self.units)?
                    .value)
            }
        }
    }

    /// Upper estimate of `|ψ_free(x, t)|`.
    pub fn envelope(&self, x: f64, t: f64) -> f64 {
        let g = self.equivalent_gaussian();
        self.peak * (PI * g.alpha).powf(0.25) * g.free_modulus(x, t, &self.units)
    }

    fn equivalent_gaussian(&self) -> GaussianPacket {
        match &self.packet {
            Packet::Gaussian(g) => *g,
            Packet::Sampled(_) => GaussianPacket {
                alpha: 2.0 * self.x_spread * self.x_spread,
                x0: self.x_centre,
                p0: self.f.p0,
            },
        }
    }

    /// Largest kinetic energy carried by the packet.
    fn max_energy(&self) -> f64 {
        let p = self.f.p0.abs() + WINDOW_SIGMAS * self.f.spread;
        p * p / (2.0 * self.units.mass())
    }

    /// Times `s` in `[0, t]` for which the freely evolved packet can be
    /// non-negligible at `x`.
    fn free_window(&self, x: f64, t: f64) -> Option<(f64, f64)> {
        let m = self.units.mass();
        let n2 = WINDOW_SIGMAS * WINDOW_SIGMAS;
        let v = self.f.p0 / m;
        let sv = self.f.spread / m;
        let d = x - self.x_centre;
        // (d - v s)² <= n² (σx² + σv² s²)
        quadratic_hull(
            v * v - n2 * sv * sv,
            -2.0 * v * d,
            d * d - n2 * self.x_spread * self.x_spread,
            0.0,
            t,
        )
    }

    /// Probability outside `[lo, hi]` at `t = 0`.
    pub fn mass_outside(&self, lo: f64, hi: f64) -> f64 {
        match &self.packet {
            Packet::Gaussian(g) => {
                let s = g.alpha.sqrt();
                let below = if lo.is_finite() { 0.5 * erfc_real((g.x0 - lo) / s) } else { 0.0 };
                let above = if hi.is_finite() { 0.5 * erfc_real((hi - g.x0) / s) } else { 0.0 };
                below + above
            }
            Packet::Sampled(w) => w.integrate_density(|x| x < lo || x > hi) / w.norm(),
        }
    }

    fn require_inside(&self, lo: f64, hi: f64, what: &str) -> Result<()> {
        let out = self.mass_outside(lo, hi);
        if out > SUPPORT_MASS_LIMIT {
            return Err(Error::PreconditionViolation(format!(
                "initial packet must lie in {what}; probability outside is {out:.3e} (limit {SUPPORT_MASS_LIMIT:e})"
            )));
        }
        Ok(())
    }
}

fn erfc_real(z: f64) -> f64 {
    crate::specfun::erfc_complex(Complex64::new(z, 0.0))
        .map(|c| c.re)
        .unwrap_or(if z > 0.0 { 0.0 } else { 2.0 })
}

/// Smallest interval containing `{s ∈ [lo, hi] : a s² + b s + c <= 0}`.
fn quadratic_hull(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let q = |s: f64| (a * s + b) * s + c;
    let mut pts = vec![lo, hi];
    let scale = a.abs().max(b.abs()).max(c.abs());
    if a.abs() > 1e-14 * scale {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let qq = -0.5 * (b + b.signum() * sq);
            if qq != 0.0 {
                pts.push(qq / a);
                pts.push(c / qq);
            } else {
                pts.push(0.0);
            }
        }
    } else if b != 0.0 {
        pts.push(-c / b);
    }
    pts.retain(|s| s.is_finite() && *s >= lo && *s <= hi);
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup();
    let mut first = None;
    let mut last = None;
    if pts.len() == 1 {
        return (q(pts[0]) <= 0.0).then_some((pts[0], pts[0]));
    }
    for w in pts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if q(mid) <= 0.0 || q(w[0]) <= 0.0 && q(w[1]) <= 0.0 {
            first.get_or_insert(w[0]);
            last = Some(w[1]);
        }
    }
    Some((first?, last?))
}

/// Adaptive quadrature of an integrand that may fail; the first failure is
/// returned.
fn integrate_try<F: FnMut(f64) -> Result<Complex64>>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    let mut failure = None;
    let est = integrate(
        |x| {
            if failure.is_some() {
                return ZERO;
            }
            f(x).unwrap_or_else(|e| {
                failure = Some(e);
                ZERO
            })
        },
        a,
        b,
        panels,
        spec,
    );
    match failure {
        Some(e) => Err(e),
        None => est,
    }
}

fn check_height(v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(format!("step height must be positive, got {v}")));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be non-negative, got {t}")));
    }
    Ok(())
}

fn check_width(d: f64) -> Result<()> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(invalid(format!("well width must be positive, got {d}")));
    }
    Ok(())
}

/// Convolution kernels in time.
#[derive(Debug, Clone, Copy)]
enum Kernel {
    /// `M(k, τ)`, the inverse transform of `ρ(s)^k`, `k >= 1`.
    M(usize),
    /// `M(k, τ) + M(k+1, τ)`; for `k = 0` only `r(τ)`.
    L(usize),
}

impl Kernel {
    fn eval(self, tau: f64, v: f64, hbar: f64) -> Complex64 {
        match self {
            Kernel::M(k) => m_kernel_unchecked(k, tau, v, hbar),
            Kernel::L(0) => m_kernel_unchecked(1, tau, v, hbar),
            Kernel::L(k) => m_kernel_unchecked(k, tau, v, hbar) + m_kernel_unchecked(k + 1, tau, v, hbar),
        }
    }
}

/// `∫_0^t ψ_free(X, t-τ) kernel(τ) dτ`, restricted to the window where the
/// free field is non-negligible at `X`.
fn convolve_free(
    state: &InitialState,
    target: f64,
    t: f64,
    kernel: Kernel,
    v: f64,
    ctx: &Context,
) -> Result<Estimate> {
    let Some((s_lo, s_hi)) = state.free_window(target, t) else {
        return Ok(Estimate::zero());
    };
    if !(s_hi > s_lo) {
        return Ok(Estimate::zero());
    }
    let hbar = ctx.units.hbar();
    let rate = (state.max_energy() + v) / hbar;
    let panels = panels_for_phase(rate, s_hi - s_lo);
    let inner = ctx.inner_spec();
    integrate_try(
        |s| Ok(state.free(target, s, &inner)? * kernel.eval(t - s, v, hbar)),
        s_lo,
        s_hi,
        panels,
        &ctx.conv_spec(),
    )
}

/// `∫_0^t min(V/2ħ, k/τ) dτ`, a bound on `∫|M(k, τ)| dτ`.
fn kernel_mass_bound(k: usize, t: f64, v: f64, hbar: f64) -> f64 {
    let c = v / (2.0 * hbar);
    let k = k.max(1) as f64;
    if c * t <= k {
        c * t
    } else {
        k * (1.0 + (c * t / k).ln())
    }
}

/// `sup_{0 <= s <= t} |ψ_free(X, s)|` estimated on a uniform time grid.
fn envelope_sup(state: &InitialState, x: f64, t: f64) -> f64 {
    (0..=256)
        .map(|i| state.envelope(x, t * i as f64 / 256.0))
        .fold(0.0, f64::max)
}

/// Freely evolved packet; at `t = 0` the initial packet itself.
pub fn free_evolve(state: &InitialState, t: f64, x: f64, ctx: &Context) -> Result<Complex64> {
    check_time(t)?;
    state.free(x, t, &ctx.quad)
}

/// Mirror solution of the infinite well on `[0, d]`:
/// `Σ_n [ψ_free(x + 2dn, t) - ψ_free(2dn - x, t)]` for `|n| <= k_max`.
pub fn mirror_well(state: &InitialState, d: f64, t: f64, x: f64, ctx: &Context) -> Result<Estimate> {
    check_width(d)?;
    check_time(t)?;
    if !(0.0..=d).contains(&x) {
        return Err(Error::DomainError(format!("x = {x} lies outside the well [0, {d}]")));
    }
    state.require_inside(0.0, d, "the well")?;
    let v0 = state.mean_momentum() / ctx.units.mass();
    let k_max = ctx.policy.image_count(v0, state.f.spread / ctx.units.mass(), t, d);
    let spec = ctx.quad;
    let mut sum = state.free(x, t, &spec)? - state.free(-x, t, &spec)?;
    for k in 1..=k_max {
        let s = 2.0 * d * k as f64;
        sum += state.free(s + x, t, &spec)? - state.free(-s - x, t, &spec)?
            + state.free(x - s, t, &spec)?
            - state.free(s - x, t, &spec)?;
    }
    let mut tail = 0.0;
    for k in k_max + 1..=k_max + 8 {
        let s = 2.0 * d * k as f64;
        tail += [s + x, -s - x, x - s, s - x]
            .iter()
            .map(|&y| state.envelope(y, t))
            .sum::<f64>();
    }
    Ok(Estimate {
        value: sum,
        error: tail,
        evaluations: 4 * k_max + 2,
    })
}

/// Exact solution left of the step:
/// `ψ_free(x, t) + ∫_0^t ψ_free(-x, t-τ) r(τ) dτ`.
pub fn step_left_exact(state: &InitialState, v: f64, t: f64, x: f64, ctx: &Context) -> Result<Estimate> {
    check_height(v)?;
    check_time(t)?;
    if x > 0.0 {
        return Err(Error::DomainError(format!("x = {x} lies right of the step")));
    }
    state.require_inside(f64::NEG_INFINITY, 0.0, "x < 0")?;
    let direct = Estimate::exact(state.free(x, t, &ctx.quad)?);
    if t == 0.0 {
        return Ok(direct);
    }
    Ok(direct + convolve_free(state, -x, t, Kernel::M(1), v, ctx)?)
}

/// Semiclassical solution left of the step,
/// `ψ_free(x, t) + (1/√(2πħ)) ∫ e^{-ipx/ħ - ip²t/(2mħ)} f(p) R(p) dp`.
pub fn step_left_approx(state: &InitialState, v: f64, t: f64, x: f64, ctx: &Context) -> Result<Complex64> {
    check_height(v)?;
    check_time(t)?;
    if x > 0.0 {
        return Err(Error::DomainError(format!("x = {x} lies right of the step")));
    }
    let u = ctx.units;
    let t_r = classical_reflection_time(state.mean_position(), state.mean_momentum(), &u)?;
    let measure = t_r * v / u.hbar();
    if !(measure > ctx.policy.conv_extend_threshold) {
        return Err(Error::PreconditionViolation(format!(
            "t_R V / hbar = {measure:.4} must exceed {}",
            ctx.policy.conv_extend_threshold
        )));
    }
    let mass = u.mass();
    let reflected = momentum_integral(&state.f, |p| reflection_value(p, v, mass), x, t, &ctx.quad, &u)?;
    Ok(state.free(x, t, &ctx.quad)? + reflected.value)
}

/// Momentum amplitude of a translated, possibly mirrored, copy of the
/// initial packet: `e^{ipK/ħ} f(p)` or, mirrored, `e^{ipK/ħ} f(-p)`.
#[derive(Debug, Clone, Copy)]
struct MomentumImage<'a> {
    f: &'a MomentumAmplitude,
    shift: f64,
    mirrored: bool,
}

impl<'a> MomentumImage<'a> {
    fn direct(f: &'a MomentumAmplitude) -> Self {
        Self {
            f,
            shift: 0.0,
            mirrored: false,
        }
    }

    fn eval(&self, p: f64) -> Complex64 {
        let h = self.f.units().hbar();
        let q = if self.mirrored { -p } else { p };
        Complex64::from_polar(1.0, p * self.shift / h) * self.f.eval(q)
    }

    fn support(&self) -> (f64, f64) {
        let (lo, hi) = self.f.support();
        if self.mirrored {
            (-hi, -lo)
        } else {
            (lo, hi)
        }
    }

    fn centre(&self) -> f64 {
        let c = self.f.position_centre();
        if self.mirrored {
            -c - self.shift
        } else {
            c - self.shift
        }
    }

    fn momentum(&self) -> f64 {
        if self.mirrored {
            -self.f.p0
        } else {
            self.f.p0
        }
    }

    /// Times `s` in `[0, t]` at which waves from this packet can be present
    /// at `x > 0`, from the classical flight of the packet's phase-space box.
    fn arrival_window(&self, x: f64, t: f64, v: f64) -> Option<(f64, f64)> {
        let m = self.f.units().mass();
        let n = WINDOW_SIGMAS;
        let sx = self.f.position_spread();
        let sp = self.f.spread;
        let (y_lo, y_hi) = (self.centre() - n * sx, self.centre() + n * sx);
        let (p_lo, p_hi) = (self.momentum() - n * sp, self.momentum() + n * sp);
        if p_hi <= 0.0 {
            return None;
        }
        let thr = (2.0 * m * v).sqrt();
        let travel = |p: f64| if p > thr { x * m / (p * p - thr * thr).sqrt() } else { 0.0 };
        let reach = |y: f64, p: f64| (-y).max(0.0) * m / p;
        let mut s_lo = reach(y_hi, p_hi) + travel(p_hi);
        if p_lo < thr {
            // Evanescent components are present as soon as they reach the step.
            s_lo = s_lo.min(reach(y_hi, thr.min(p_hi)));
        }
        let s_hi = if p_lo > thr {
            reach(y_lo, p_lo) + travel(p_lo)
        } else {
            f64::INFINITY
        };
        let s_lo = 0.9 * s_lo;
        let s_hi = 1.1 * s_hi;
        if s_lo > t {
            return None;
        }
        Some((s_lo, s_hi.min(t)))
    }
}

/// Transmission kernel right of the step,
/// `K(x,p,t) = (1/(2√(2πħ))) e^{-iVt/ħ - itZ²/(2ħm)}
///   [e^{-ixZ/ħ} erfc(w₁) + e^{ixZ/ħ} erfc(w₂)]`,
/// `w₁,₂ = -i√(2mi/(ħt)) x/2 ∓ i√(it/(2ħm)) Z`, `Z = √(p² - 2mV)`.
#[derive(Debug, Clone, Copy)]
pub struct TransmissionKernel {
    x: f64,
    t: f64,
    two_mv: f64,
    hbar: f64,
    mass: f64,
    w_x: Complex64,
    w_z: Complex64,
    pref: f64,
}

impl TransmissionKernel {
    pub fn new(x: f64, t: f64, v: f64, u: &UnitSystem) -> Result<Self> {
        if !(t > 0.0) {
            return Err(invalid(format!("kernel time must be positive, got {t}")));
        }
        let h = u.hbar();
        let m = u.mass();
        let a = (Complex64::new(0.0, 2.0 * m / (h * t))).sqrt();
        let b = (Complex64::new(0.0, t / (2.0 * h * m))).sqrt();
        Ok(Self {
            x,
            t,
            two_mv: 2.0 * m * v,
            hbar: h,
            mass: m,
            w_x: -I * a * (x / 2.0),
            w_z: I * b,
            pref: 1.0 / (2.0 * (2.0 * PI * h).sqrt()),
        })
    }

    pub fn eval(&self, p: f64) -> Result<Complex64> {
        let z = Complex64::new(p * p - self.two_mv, 0.0).sqrt();
        let w1 = self.w_x - self.w_z * z;
        let w2 = self.w_x + self.w_z * z;
        // e^{-iVt/ħ - itZ²/(2ħm)} = e^{-ip²t/(2mħ)}
        let common = Complex64::new(0.0, -p * p * self.t / (2.0 * self.mass * self.hbar));
        let xz = I * z * (self.x / self.hbar);
        Ok((exp_erfc(common - xz, w1)? + exp_erfc(common + xz, w2)?) * self.pref)
    }
}

/// `∫ K(x, p, s) f_img(p) dp`.
fn transmitted_free(img: &MomentumImage, x: f64, s: f64, v: f64, spec: &QuadratureSpec) -> Result<Complex64> {
    let u = *img.f.units();
    let h = u.hbar();
    let m = u.mass();
    let kern = TransmissionKernel::new(x, s, v, &u)?;
    let (lo, hi) = img.support();
    let p0 = img.momentum();
    let z2 = p0 * p0 - 2.0 * m * v;
    // Phase slope of the integrand at p0 and its variation over the support.
    let (slope_x, curv_x) = if z2 > 0.2 * m * v {
        let z = z2.sqrt();
        (x * p0 / z, x * 2.0 * m * v / (z * z * z))
    } else {
        (0.0, 0.0)
    };
    let sp = img.f.spread;
    let rate = ((slope_x - p0 * s / m - img.centre()).abs()
        + 6.0 * sp * (curv_x + s / m)
        + 4.0 * img.f.position_spread())
        / h;
    // GK21 resolves a few oscillations per panel.
    let panels = (panels_for_phase(rate, hi - lo) / 4).max(4);
    Ok(integrate_try(|p| Ok(kern.eval(p)? * img.eval(p)), lo, hi, panels, spec)?.value)
}

/// `[δ-term] + ∫_0^t Φ(x, t-τ) kernel(τ) dτ` with `Φ` the transmitted free
/// field of one momentum image.
fn transmitted_convolution(
    img: &MomentumImage,
    x: f64,
    t: f64,
    kernel: Kernel,
    with_direct: bool,
    v: f64,
    ctx: &Context,
) -> Result<Estimate> {
    let Some((s_lo, s_hi)) = img.arrival_window(x, t, v) else {
        return Ok(Estimate::zero());
    };
    let inner = ctx.inner_spec();
    let mut acc = Estimate::zero();
    if with_direct {
        acc = acc + Estimate::exact(transmitted_free(img, x, t, v, &ctx.quad)?);
    }
    if s_hi > s_lo {
        let hbar = ctx.units.hbar();
        let p = img.momentum().abs() + WINDOW_SIGMAS * img.f.spread;
        let rate = (p * p / (2.0 * ctx.units.mass()) + v) / hbar;
        let panels = panels_for_phase(0.2 * rate, s_hi - s_lo);
        acc = acc
            + integrate_try(
                |s| Ok(transmitted_free(img, x, s, v, &inner)? * kernel.eval(t - s, v, hbar)),
                s_lo,
                s_hi,
                panels,
                &ctx.conv_spec(),
            )?;
    }
    Ok(acc)
}

/// Exact solution right of the step,
/// `∫ K(x,p,t) f(p) dp + ∫_0^t ∫ K(x,p,t-τ) f(p) dp r(τ) dτ`.
pub fn step_right_exact(f: &MomentumAmplitude, v: f64, t: f64, x: f64, ctx: &Context) -> Result<Estimate> {
    check_height(v)?;
    check_time(t)?;
    if !(x > 0.0) {
        return Err(Error::DomainError(format!("x = {x} does not lie right of the step")));
    }
    if t == 0.0 {
        return Ok(Estimate::zero());
    }
    transmitted_convolution(&MomentumImage::direct(f), x, t, Kernel::L(0), true, v, ctx)
}

/// Exact step solution on either side of the step.
pub fn step_exact(state: &InitialState, v: f64, t: f64, x: f64, ctx: &Context) -> Result<Estimate> {
    if x <= 0.0 {
        step_left_exact(state, v, t, x, ctx)
    } else {
        step_right_exact(&state.f, v, t, x, ctx)
    }
}

/// Semiclassical solution for a packet climbing the step (`k0 > 1`): an
/// incoming plus a reflected packet scaled by `R(p0)` on the left, and the
/// freely evolving deformed packet scaled by `1 + R(p0)` on the right.
pub fn step_climb_approx(state: &InitialState, v: f64, t: f64, x: f64, ctx: &Context) -> Result<Complex64> {
    check_height(v)?;
    check_time(t)?;
    let u = ctx.units;
    climbing_diagnostics(&state.f, v, &ctx.quad)?.require()?;
    let r0 = reflection_value(state.f.p0, v, u.mass());
    if x <= 0.0 {
        return Ok(state.free(x, t, &ctx.quad)? + r0 * state.free(-x, t, &ctx.quad)?);
    }
    let deformed = deformed_packet(&state.f, v, &u)?;
    let phase = Complex64::from_polar(1.0, -v * t / u.hbar());
    Ok((1.0 + r0) * phase * deformed.evolve(x, t, &ctx.quad)?.value)
}

/// Semiclassical solution for a packet below the step (`k0 < 1`): the
/// reflected form on the left and an evanescent tail on the right.
pub fn step_forbidden_approx(state: &InitialState, v: f64, t: f64, x: f64, ctx: &Context) -> Result<Complex64> {
    check_height(v)?;
    check_time(t)?;
    let u = ctx.units;
    forbidden_diagnostics(&state.f, v, &ctx.quad)?.require()?;
    let r0 = reflection_value(state.f.p0, v, u.mass());
    if x <= 0.0 {
        return Ok(state.free(x, t, &ctx.quad)? + r0 * state.free(-x, t, &ctx.quad)?);
    }
    let profile = EvanescentProfile::new(state.f.p0, v, &u)?;
    Ok(profile.eval(x) * state.free(0.0, t, &ctx.quad)?)
}

/// Dispatches to the step solution selected by `mode`.
pub fn step_solution(
    mode: StepSolutionMode,
    state: &InitialState,
    v: f64,
    t: f64,
    x: f64,
    ctx: &Context,
) -> Result<Complex64> {
    match mode {
        StepSolutionMode::ExactLeft => Ok(step_left_exact(state, v, t, x, ctx)?.value),
        StepSolutionMode::ExactRight => Ok(step_right_exact(&state.f, v, t, x, ctx)?.value),
        StepSolutionMode::ApproxClimb => step_climb_approx(state, v, t, x, ctx),
        StepSolutionMode::ApproxForbidden => step_forbidden_approx(state, v, t, x, ctx),
    }
}

/// One image term of the box solution: `sign · (ψ_free(X, ·) ∗ M(order))(t)`
/// with `M(0) = δ`.
#[derive(Debug, Clone, Copy)]
struct BoxTerm {
    target: f64,
    order: usize,
    sign: f64,
}

/// Image terms of the exact box solution at `x ∈ [-d, 0]` for
/// `k = k_from..=k_to`.
fn box_terms(d: f64, x: f64, k_from: usize, k_to: usize) -> Vec<BoxTerm> {
    let mut terms = Vec::new();
    for k in k_from..=k_to {
        let s = 2.0 * d * (k + 1) as f64;
        let alt = if k % 2 == 0 { 1.0 } else { -1.0 };
        terms.push(BoxTerm { target: -s - x, order: k, sign: -alt });
        terms.push(BoxTerm { target: s + x, order: k + 1, sign: -alt });
        terms.push(BoxTerm { target: x - s, order: k + 1, sign: -alt });
        terms.push(BoxTerm { target: s - x, order: k + 2, sign: -alt });
    }
    terms
}

/// Exact solution inside the asymmetric well `[-d, 0]`: the two step terms
/// plus the mirror images at `∓2d(k+1) ± x`, each convolved with `M(k, t)`.
pub fn asym_inside_exact(
    state: &InitialState,
    d: f64,
    v: f64,
    t: f64,
    x: f64,
    ctx: &Context,
) -> Result<Estimate> {
    check_width(d)?;
    check_height(v)?;
    check_time(t)?;
    if !(-d..=0.0).contains(&x) {
        return Err(Error::DomainError(format!("x = {x} lies outside the well [{}, 0]", -d)));
    }
    state.require_inside(-d, 0.0, "the well")?;
    let mut acc = Estimate::exact(state.free(x, t, &ctx.quad)?);
    if t == 0.0 {
        return Ok(acc);
    }
    acc = acc + convolve_free(state, -x, t, Kernel::M(1), v, ctx)?;
    let v0 = state.mean_momentum() / ctx.units.mass();
    let k_max = ctx.policy.image_count(v0, state.f.spread / ctx.units.mass(), t, d);
    for term in box_terms(d, x, 0, k_max) {
        let value = if term.order == 0 {
            Estimate::exact(state.free(term.target, t, &ctx.quad)?)
        } else {
            convolve_free(state, term.target, t, Kernel::M(term.order), v, ctx)?
        };
        acc = acc + value.scale(Complex64::new(term.sign, 0.0));
    }
    let hbar = ctx.units.hbar();
    let tail: f64 = box_terms(d, x, k_max + 1, k_max + 8)
        .iter()
        .map(|term| envelope_sup(state, term.target, t) * kernel_mass_bound(term.order, t, v, hbar))
        .sum();
    acc.error += tail;
    Ok(acc)
}

/// Exact solution right of the asymmetric well,
/// `Σ_k (-1)^k [G_k(f(2dk, ·)) - G_k(f̄(2d(k+1), ·))]` where `G_k` is the
/// transmitted field convolved with `L(k, t)` and `f̄` the mirrored packet.
pub fn asym_outside_exact(
    f: &MomentumAmplitude,
    d: f64,
    v: f64,
    t: f64,
    x: f64,
    ctx: &Context,
) -> Result<Estimate> {
    check_width(d)?;
    check_height(v)?;
    check_time(t)?;
    if !(x > 0.0) {
        return Err(Error::DomainError(format!("x = {x} does not lie right of the well")));
    }
    if t == 0.0 {
        return Ok(Estimate::zero());
    }
    let u = ctx.units;
    let v0 = f.p0 / u.mass();
    let k_max = ctx.policy.image_count(v0, f.spread / u.mass(), t, d);
    let mut acc = Estimate::zero();
    for k in 0..=k_max {
        let alt = if k % 2 == 0 { 1.0 } else { -1.0 };
        let direct = MomentumImage {
            f,
            shift: 2.0 * d * k as f64,
            mirrored: false,
        };
        let mirrored = MomentumImage {
            f,
            shift: 2.0 * d * (k + 1) as f64,
            mirrored: true,
        };
        let a = transmitted_convolution(&direct, x, t, Kernel::L(k), k == 0, v, ctx)?;
        let b = transmitted_convolution(&mirrored, x, t, Kernel::L(k), k == 0, v, ctx)?;
        acc = acc + (a - b).scale(Complex64::new(alt, 0.0));
    }
    // Omitted images: |K| <= 3/(2√(2πħ)) and ∫|L(k)| <= ∫|M(k)| + ∫|M(k+1)|.
    let hbar = u.hbar();
    let f_l1 = f.weighted_norm(|_| 1.0, &ctx.quad).map(|e| e.value.re).unwrap_or(1.0);
    let mut tail = 0.0;
    for k in k_max + 1..=k_max + 8 {
        for (shift, mirrored) in [(2.0 * d * k as f64, false), (2.0 * d * (k + 1) as f64, true)] {
            let img = MomentumImage { f, shift, mirrored };
            if img.arrival_window(x, t, v).is_some() {
                let width = f.support().1 - f.support().0;
                tail += 1.5 / (2.0 * PI * hbar).sqrt()
                    * (f_l1 * width).sqrt()
                    * (kernel_mass_bound(k, t, v, hbar) + kernel_mass_bound(k + 1, t, v, hbar));
            }
        }
    }
    acc.error += tail;
    Ok(acc)
}

/// Exact asymmetric-well solution on either side of the step.
pub fn asym_exact(state: &InitialState, d: f64, v: f64, t: f64, x: f64, ctx: &Context) -> Result<Estimate> {
    if x <= 0.0 {
        asym_inside_exact(state, d, v, t, x, ctx)
    } else {
        asym_outside_exact(&state.f, d, v, t, x, ctx)
    }
}

/// Semiclassical solution inside the asymmetric well: the mirror terms
/// weighted by powers of `R(p0)` up to the limits `L₁ … L₄`.
pub fn asym_inside_approx(
    state: &InitialState,
    d: f64,
    v: f64,
    t: f64,
    x: f64,
    ctx: &Context,
) -> Result<Complex64> {
    check_width(d)?;
    check_height(v)?;
    check_time(t)?;
    if !(-d..=0.0).contains(&x) {
        return Err(Error::DomainError(format!("x = {x} lies outside the well [{}, 0]", -d)));
    }
    state.require_inside(-d, 0.0, "the well")?;
    let u = ctx.units;
    let v0 = state.mean_momentum() / u.mass();
    let cond = box_conditions(v0, t, d, v, &u, &ctx.policy)?;
    cond.require(&ctx.policy)?;
    let k0 = state.f.p0 * state.f.p0 / (2.0 * u.mass() * v);
    if k0 > 1.0 {
        climbing_diagnostics(&state.f, v, &ctx.quad)?.require()?;
    } else {
        forbidden_diagnostics(&state.f, v, &ctx.quad)?.require()?;
    }
    let limits = ctx.policy.l_limits.unwrap_or(cond.limits);
    let r0 = reflection_value(state.f.p0, v, u.mass());
    let spec = ctx.quad;
    let mut sum = state.free(x, t, &spec)? + r0 * state.free(-x, t, &spec)?;
    // Limits L₁ … L₄ apply to the four image families in turn.
    for k in 0..=limits[0] {
        let s = 2.0 * d * (k + 1) as f64;
        sum -= alt(k) * r0.powu(k as u32) * state.free(-s - x, t, &spec)?;
    }
    for k in 0..=limits[1] {
        let s = 2.0 * d * (k + 1) as f64;
        sum += alt(k + 1) * r0.powu(k as u32 + 1) * state.free(x - s, t, &spec)?;
    }
    for k in 0..=limits[2] {
        let s = 2.0 * d * (k + 1) as f64;
        sum += alt(k + 1) * r0.powu(k as u32 + 1) * state.free(s + x, t, &spec)?;
    }
    for k in 0..=limits[3] {
        let s = 2.0 * d * (k + 1) as f64;
        sum -= alt(k + 2) * r0.powu(k as u32 + 2) * state.free(s - x, t, &spec)?;
    }
    Ok(sum)
}

fn alt(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}
