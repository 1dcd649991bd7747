//! Initial wave packets, their momentum representation and the deformed
//! packet that describes transmission over the step.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::numerics::{integrate, panels_for_phase, Estimate, QuadratureSpec};
use crate::specfun::erfc_complex;
use crate::units::{UnitSystem, WaveField};

/// Normalised Gaussian `(πα)^{-1/4} exp(-(x-x0)²/(2α)) exp(i p0 x/ħ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPacket {
    pub alpha: f64,
    pub x0: f64,
    pub p0: f64,
}

impl GaussianPacket {
    pub fn new(alpha: f64, x0: f64, p0: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid(format!("alpha must be positive, got {alpha}")));
        }
        if !(x0.is_finite() && p0.is_finite()) {
            return Err(invalid("packet centre and momentum must be finite"));
        }
        Ok(Self { alpha, x0, p0 })
    }

    /// Position spread `√(α/2)`.
    pub fn dx0(&self) -> f64 {
        (self.alpha / 2.0).sqrt()
    }

    /// Momentum spread `ħ/√(2α)`.
    pub fn dp0(&self, u: &UnitSystem) -> f64 {
        u.hbar() / (2.0 * self.alpha).sqrt()
    }

    pub fn velocity(&self, u: &UnitSystem) -> f64 {
        self.p0 / u.mass()
    }

    pub fn position(&self, x: f64, u: &UnitSystem) -> Complex64 {
        let d = x - self.x0;
        let amp = (PI * self.alpha).powf(-0.25) * (-d * d / (2.0 * self.alpha)).exp();
        Complex64::from_polar(amp, self.p0 * x / u.hbar())
    }

    /// `f(p) = (α/(πħ²))^{1/4} exp(-α(p-p0)²/(2ħ²)) exp(-i(p-p0)x0/ħ)`.
    pub fn momentum(&self, p: f64, u: &UnitSystem) -> Complex64 {
        let h = u.hbar();
        let d = p - self.p0;
        let amp = (self.alpha / (PI * h * h)).powf(0.25)
            * (-self.alpha * d * d / (2.0 * h * h)).exp();
        Complex64::from_polar(amp, -d * self.x0 / h)
    }

    /// Freely evolved packet in closed form,
    /// `(πα)^{-1/4} √(α/σ) exp(-(x-x0-p0t/m)²/(2σ)) exp(i p0 x/ħ - i p0² t/(2mħ))`
    /// with `σ = α + iħt/m`.
    pub fn free(&self, x: f64, t: f64, u: &UnitSystem) -> Complex64 {
        let h = u.hbar();
        let m = u.mass();
        let sigma = Complex64::new(self.alpha, h * t / m);
        let d = x - self.x0 - self.p0 * t / m;
        let expo = -Complex64::new(d * d, 0.0) / (2.0 * sigma)
            + Complex64::new(0.0, self.p0 * x / h - self.p0 * self.p0 * t / (2.0 * m * h));
        if expo.re < -745.0 {
            return Complex64::new(0.0, 0.0);
        }
        (PI * self.alpha).powf(-0.25) * (self.alpha / sigma).sqrt() * expo.exp()
    }

    /// `|free(x, t)|`, cheaper than the full value.
    pub fn free_modulus(&self, x: f64, t: f64, u: &UnitSystem) -> f64 {
        let bt = u.hbar() * t / u.mass();
        let s2 = self.alpha * self.alpha + bt * bt;
        let d = x - self.x0 - self.p0 * t / u.mass();
        (PI * self.alpha).powf(-0.25) * (self.alpha * self.alpha / s2).powf(0.25)
            * (-self.alpha * d * d / (2.0 * s2)).exp()
    }

    /// Position spread at time `t`.
    pub fn dx(&self, t: f64, u: &UnitSystem) -> f64 {
        let a = self.dx0();
        let b = self.dp0(u) * t / u.mass();
        (a * a + b * b).sqrt()
    }

    pub fn translated(&self, dx: f64) -> Self {
        Self {
            x0: self.x0 + dx,
            ..*self
        }
    }
}

/// Normalised Gaussian in position space.
pub fn gaussian_position(g: &GaussianPacket, x: f64, u: &UnitSystem) -> Complex64 {
    g.position(x, u)
}

/// An initial condition: analytic Gaussian or a sampled field.
#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Gaussian(GaussianPacket),
    Sampled(WaveField),
}

impl Packet {
    pub fn position(&self, x: f64, u: &UnitSystem) -> Complex64 {
        match self {
            Self::Gaussian(g) => g.position(x, u),
            Self::Sampled(w) => w.interpolate(x),
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianPacket> {
        match self {
            Self::Gaussian(g) => Some(g),
            Self::Sampled(_) => None,
        }
    }

    /// Interval outside which the packet is negligible.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Gaussian(g) => {
                let w = 12.0 * g.alpha.sqrt();
                (g.x0 - w, g.x0 + w)
            }
            Self::Sampled(w) => (w.xs()[0], *w.xs().last().expect("non-empty")),
        }
    }

    pub fn mean_position(&self) -> f64 {
        match self {
            Self::Gaussian(g) => g.x0,
            Self::Sampled(w) => sampled_moments(w, 1.0).0,
        }
    }

    pub fn mean_momentum(&self, u: &UnitSystem) -> f64 {
        match self {
            Self::Gaussian(g) => g.p0,
            Self::Sampled(w) => sampled_moments(w, u.hbar()).1,
        }
    }

    pub fn momentum_rep(&self, u: &UnitSystem) -> Result<MomentumAmplitude> {
        momentum_rep(self, u)
    }
}

/// Mean position, mean momentum, position spread and momentum spread of a
/// sampled field (trapezoid rule and neighbour differences).
pub(crate) fn sampled_moments(w: &WaveField, hbar: f64) -> (f64, f64, f64, f64) {
    let xs = w.xs();
    let a = w.amps();
    let norm = w.norm();
    let mut mx = 0.0;
    let mut mx2 = 0.0;
    let mut mp = 0.0;
    let mut mp2 = 0.0;
    for i in 0..xs.len() - 1 {
        let h = xs[i + 1] - xs[i];
        let (d0, d1) = (a[i].norm_sqr(), a[i + 1].norm_sqr());
        mx += 0.5 * h * (xs[i] * d0 + xs[i + 1] * d1);
        mx2 += 0.5 * h * (xs[i] * xs[i] * d0 + xs[i + 1] * xs[i + 1] * d1);
        // |ψ'|² = A'² + A²φ'² with the phase slope taken from the phase
        // difference, which is exact for a local plane wave.
        let cross = a[i].conj() * a[i + 1];
        let slope = cross.arg() / h;
        let da = (a[i + 1].norm() - a[i].norm()) / h;
        let w = 0.5 * (d0 + d1);
        mp += h * w * slope * hbar;
        mp2 += h * (da * da + w * slope * slope) * hbar * hbar;
    }
    let mx = mx / norm;
    let mp = mp / norm;
    let sx = (mx2 / norm - mx * mx).max(0.0).sqrt();
    let sp = (mp2 / norm - mp * mp).max(0.0).sqrt();
    (mx, mp, sx, sp)
}

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Gaussian(GaussianPacket),
    Sampled { field: WaveField },
}

/// `f(p) = (1/√(2πħ)) ∫ ψ(x,0) exp(-ipx/ħ) dx` with its centre and spread.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumAmplitude {
    source: Source,
    units: UnitSystem,
    pub p0: f64,
    pub spread: f64,
    x_centre: f64,
    x_spread: f64,
}

impl MomentumAmplitude {
    pub fn eval(&self, p: f64) -> Complex64 {
        match &self.source {
            Source::Gaussian(g) => g.momentum(p, &self.units),
            Source::Sampled { field } => linear_fourier(field, p / self.units.hbar())
                / (2.0 * PI * self.units.hbar()).sqrt(),
        }
    }

    /// Momentum interval holding all but a negligible part of the weight.
    pub fn support(&self) -> (f64, f64) {
        (self.p0 - 12.0 * self.spread, self.p0 + 12.0 * self.spread)
    }

    pub fn position_spread(&self) -> f64 {
        self.x_spread
    }

    /// Mean position of the packet in position space.
    pub fn position_centre(&self) -> f64 {
        self.x_centre
    }

    pub fn units(&self) -> &UnitSystem {
        &self.units
    }

    pub fn gaussian(&self) -> Option<&GaussianPacket> {
        match &self.source {
            Source::Gaussian(g) => Some(g),
            Source::Sampled { .. } => None,
        }
    }

    /// `∫_{-∞}^{pc} |f(p)|² dp`.
    pub fn mass_below(&self, pc: f64, spec: &QuadratureSpec) -> Result<f64> {
        match &self.source {
            Source::Gaussian(g) => {
                let z = (g.p0 - pc) * (g.alpha).sqrt() / self.units.hbar();
                Ok(0.5 * erfc_complex(Complex64::new(z, 0.0))?.re)
            }
            Source::Sampled { .. } => {
                let (lo, hi) = self.support();
                if pc <= lo {
                    return Ok(0.0);
                }
                let top = pc.min(hi);
                let est = integrate(
                    |p| Complex64::new(self.eval(p).norm_sqr(), 0.0),
                    lo,
                    top,
                    16,
                    spec,
                )?;
                Ok(est.value.re.max(0.0))
            }
        }
    }

    /// `∫ |f(p)|² w(p) dp` over the support.
    pub fn weighted_norm<W: FnMut(f64) -> f64>(
        &self,
        mut w: W,
        spec: &QuadratureSpec,
    ) -> Result<Estimate> {
        let (lo, hi) = self.support();
        integrate(
            |p| Complex64::new(self.eval(p).norm_sqr() * w(p), 0.0),
            lo,
            hi,
            16,
            spec,
        )
    }
}

/// Exact `∫ φ(x) exp(-ikx) dx` of the piecewise-linear interpolant `φ`.
pub(crate) fn linear_fourier(field: &WaveField, k: f64) -> Complex64 {
    let xs = field.xs();
    let a = field.amps();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..xs.len() - 1 {
        let h = xs[i + 1] - xs[i];
        let th = k * h;
        let (phi1, phi2) = segment_moments(th);
        let seg = a[i] * phi1 + (a[i + 1] - a[i]) * phi2;
        acc += seg * h * Complex64::from_polar(1.0, -k * xs[i]);
    }
    acc
}

/// `(∫_0^1 e^{-iθu} du, ∫_0^1 u e^{-iθu} du)`.
fn segment_moments(th: f64) -> (Complex64, Complex64) {
    if th.abs() < 0.05 {
        let z = Complex64::new(0.0, -th);
        let mut zn = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        let mut p1 = Complex64::new(0.0, 0.0);
        let mut p2 = Complex64::new(0.0, 0.0);
        for n in 0..9 {
            if n > 0 {
                zn *= z;
                fact *= n as f64;
            }
            p1 += zn / (fact * (n as f64 + 1.0));
            p2 += zn / (fact * (n as f64 + 2.0));
        }
        (p1, p2)
    } else {
        let i = Complex64::new(0.0, 1.0);
        let e = Complex64::from_polar(1.0, -th);
        let p1 = (1.0 - e) / (i * th);
        let p2 = e * (i / th + 1.0 / (th * th)) - 1.0 / (th * th);
        (p1, p2)
    }
}

/// Momentum representation of a packet: closed form for Gaussians, the
/// transform of the linear interpolant for sampled fields.
pub fn momentum_rep(packet: &Packet, u: &UnitSystem) -> Result<MomentumAmplitude> {
    match packet {
        Packet::Gaussian(g) => Ok(MomentumAmplitude {
            source: Source::Gaussian(*g),
            units: *u,
            p0: g.p0,
            spread: g.dp0(u),
            x_centre: g.x0,
            x_spread: g.dx0(),
        }),
        Packet::Sampled(w) => {
            let norm = w.norm();
            if !(norm > 0.0) {
                return Err(Error::DegenerateInput("sampled packet has zero norm".into()));
            }
            let (mx, mp, sx, sp) = sampled_moments(w, u.hbar());
            if !(sp > 0.0) {
                return Err(Error::DegenerateInput("sampled packet has no momentum spread".into()));
            }
            Ok(MomentumAmplitude {
                source: Source::Sampled { field: w.clone() },
                units: *u,
                p0: mp,
                spread: sp,
                x_centre: mx,
                x_spread: sx,
            })
        }
    }
}

/// `f(K, p) = exp(ipK/ħ) f(p)`.
pub fn shifted_momentum(f: &MomentumAmplitude, k_shift: f64, p: f64) -> Complex64 {
    Complex64::from_polar(1.0, p * k_shift / f.units.hbar()) * f.eval(p)
}

/// The transmitted packet's effective initial shape,
/// `ψ̃(y) = (1/√(2πħ)) ∫_{√(2mV)}^∞ exp(i√(p²-2mV) y/ħ) f(p) dp`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformedPacket {
    f: MomentumAmplitude,
    v: f64,
    /// `√(1 - 2mV/p0²)`.
    pub lambda: f64,
    /// `√(p0² - 2mV)`.
    pub q0: f64,
    /// Weight of `|f|²` below `√(2mV)`.
    pub mass_below_threshold: f64,
}

/// Largest admissible weight below the step threshold.
pub const THRESHOLD_MASS_LIMIT: f64 = 1e-6;

pub fn deformed_packet(f: &MomentumAmplitude, v: f64, u: &UnitSystem) -> Result<DeformedPacket> {
    if !(v >= 0.0) {
        return Err(invalid(format!("step height must be non-negative, got {v}")));
    }
    let pc = (2.0 * u.mass() * v).sqrt();
    let mass = if v == 0.0 {
        f.mass_below(0.0, &QuadratureSpec::default())?
    } else {
        f.mass_below(pc, &QuadratureSpec::default())?
    };
    if mass > THRESHOLD_MASS_LIMIT || f.p0 <= pc {
        return Err(Error::PreconditionViolation(format!(
            "momentum weight below sqrt(2mV) = {pc:.6} is {mass:.3e} (limit {THRESHOLD_MASS_LIMIT:e})"
        )));
    }
    let q0 = (f.p0 * f.p0 - pc * pc).sqrt();
    Ok(DeformedPacket {
        f: f.clone(),
        v,
        lambda: q0 / f.p0,
        q0,
        mass_below_threshold: mass,
    })
}

impl DeformedPacket {
    pub fn step_height(&self) -> f64 {
        self.v
    }

    pub fn amplitude(&self) -> &MomentumAmplitude {
        &self.f
    }

    /// Substituted momentum `q ↦ f(√(q²+2mV)) q/√(q²+2mV)`.
    pub fn q_amplitude(&self, q: f64) -> Complex64 {
        let u = &self.f.units;
        let p = (q * q + 2.0 * u.mass() * self.v).sqrt();
        if p == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        self.f.eval(p) * (q / p)
    }

    /// Interval in `q` carrying the packet.
    pub fn q_support(&self) -> (f64, f64) {
        let u = &self.f.units;
        let pc2 = 2.0 * u.mass() * self.v;
        let (lo, hi) = self.f.support();
        let qlo = if lo * lo > pc2 && lo > 0.0 {
            (lo * lo - pc2).sqrt()
        } else {
            0.0
        };
        (qlo, (hi * hi - pc2).max(0.0).sqrt())
    }

    /// `(1/√(2πħ)) ∫_0^∞ exp(iqy/ħ - iq²t/(2mħ)) g(q) dq`: the deformed packet
    /// evolved freely for time `t` (`t = 0` gives `ψ̃(y)` itself).
    pub fn evolve(&self, y: f64, t: f64, spec: &QuadratureSpec) -> Result<Estimate> {
        let u = self.f.units;
        let h = u.hbar();
        let m = u.mass();
        let (lo, hi) = self.q_support();
        if !(hi > lo) {
            return Ok(Estimate::zero());
        }
        let rate = (y.abs() + hi * t / m + 4.0 * self.f.x_spread / self.lambda.max(1e-3)) / h;
        let panels = panels_for_phase(rate, hi - lo);
        let est = integrate(
            |q| Complex64::from_polar(1.0, q * y / h - q * q * t / (2.0 * m * h)) * self.q_amplitude(q),
            lo,
            hi,
            panels,
            spec,
        )?;
        Ok(est.scale(Complex64::new(1.0 / (2.0 * PI * h).sqrt(), 0.0)))
    }

    pub fn eval(&self, y: f64, spec: &QuadratureSpec) -> Result<Estimate> {
        self.evolve(y, 0.0, spec)
    }

    /// Gaussian-chirp approximation of `ψ̃(y)` obtained by expanding the
    /// substituted amplitude around `q0`; only for Gaussian packets.
    pub fn eval_approx(&self, y: f64) -> Result<Complex64> {
        let g = self.f.gaussian().ok_or_else(|| {
            invalid("the chirped closed form exists for Gaussian packets only")
        })?;
        let u = &self.f.units;
        let h = u.hbar();
        let lam = self.lambda;
        let q0 = self.q0;
        let x0 = g.x0;
        let k0 = g.p0 * g.p0 / (2.0 * u.mass() * self.v);
        // f(p) = e^{-ipx0/ħ} F(p - p0) with F Gaussian times e^{ip0x0/ħ}.
        let a = Complex64::new(g.alpha * lam * lam / (2.0 * h * h), x0 * lam / (2.0 * h * q0 * k0));
        let b = Complex64::new(0.0, (y - x0 * lam) / h);
        let gauss = (Complex64::new(PI, 0.0) / a).sqrt() * (b * b / (4.0 * a)).exp();
        let pref = (g.alpha / (PI * h * h)).powf(0.25) * lam / (2.0 * PI * h).sqrt();
        let phase = q0 * y / h - q0 * x0 / (lam * h) + g.p0 * x0 / h;
        Ok(gauss * Complex64::from_polar(pref, phase))
    }
}
