//! Observables of sampled wave functions, the reflection-probability bound,
//! box survival, and the measurable forms of the "sufficiently peaked"
//! conditions behind the semiclassical solutions.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::numerics::{integrate, QuadratureSpec};
use crate::packets::{sampled_moments, MomentumAmplitude};
use crate::specfun::reflection_value;
use crate::units::{SeriesPolicy, UnitSystem, WaveField};

/// Moments of a sampled wave function and its mass on either side of a split
/// point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableReport {
    pub t: f64,
    pub norm: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub sd_x: f64,
    pub sd_p: f64,
    pub left_mass: f64,
    pub right_mass: f64,
}

/// Trapezoid-rule moments of `psi`. The momentum moments use the phase
/// difference between neighbouring samples.
pub fn observables(psi: &WaveField, split_at: f64, u: &UnitSystem) -> Result<ObservableReport> {
    let norm = psi.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(invalid(format!("field is not normalizable (norm {norm})")));
    }
    let (mean_x, mean_p, sd_x, sd_p) = sampled_moments(psi, u.hbar());
    let left_mass = psi.integrate_density(|x| x < split_at);
    let right_mass = psi.integrate_density(|x| x >= split_at);
    Ok(ObservableReport {
        t: psi.t,
        norm,
        mean_x,
        mean_p,
        sd_x,
        sd_p,
        left_mass,
        right_mass,
    })
}

/// The samples of `psi` with `lo <= x <= hi`.
pub fn restrict(psi: &WaveField, lo: f64, hi: f64) -> Result<WaveField> {
    let (xs, amps): (Vec<f64>, Vec<Complex64>) = psi
        .xs()
        .iter()
        .zip(psi.amps())
        .filter(|(x, _)| **x >= lo && **x <= hi)
        .map(|(x, a)| (*x, *a))
        .unzip();
    WaveField::new(psi.t, xs, amps)
}

/// Upper bound on the asymptotic reflection probability and the sign test
/// deciding whether it is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionBound {
    /// `∫ |f(p) R(p)|² dp`.
    pub bound: f64,
    /// `∫ p |f(-p) R(p)|² dp`.
    pub condition: f64,
    /// The bound is attained when `condition < 0`.
    pub saturated: bool,
}

pub fn asymptotic_reflection_bound(
    f: &MomentumAmplitude,
    v: f64,
    spec: &QuadratureSpec,
) -> Result<ReflectionBound> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(format!("step height must be positive, got {v}")));
    }
    let mass = f.units().mass();
    let (lo, hi) = f.support();
    let bound = integrate(
        |p| Complex64::new((f.eval(p) * reflection_value(p, v, mass)).norm_sqr(), 0.0),
        lo,
        hi,
        16,
        spec,
    )?
    .value
    .re;
    let condition = integrate(
        |p| Complex64::new(p * (f.eval(-p) * reflection_value(p, v, mass)).norm_sqr(), 0.0),
        -hi,
        -lo,
        16,
        spec,
    )?
    .value
    .re;
    Ok(ReflectionBound {
        bound,
        condition,
        saturated: condition < 0.0,
    })
}

/// Probability inside the asymmetric well `[-d, 0]`.
pub fn box_survival(psi: &WaveField, d: f64) -> f64 {
    psi.integrate_density(|x| x >= -d && x <= 0.0)
}

/// Timing of right-wall reflections for a packet starting at `x0 ∈ [-d, 0]`
/// with momentum `p0 > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionSchedule {
    /// Time of the first arrival at the step.
    pub first: f64,
    /// Round-trip time `2dm/p0`.
    pub period: f64,
    /// Guard time `4 Δx0 m / p0` around each wall contact.
    pub guard: f64,
}

impl ReflectionSchedule {
    pub fn new(x0: f64, p0: f64, dx0: f64, d: f64, u: &UnitSystem) -> Result<Self> {
        if !(p0 > 0.0) {
            return Err(Error::DegenerateInput(
                "the packet must move towards the step".into(),
            ));
        }
        let m = u.mass();
        Ok(Self {
            first: x0.abs() * m / p0,
            period: 2.0 * d * m / p0,
            guard: 4.0 * dx0 * m / p0,
        })
    }

    /// Time of the `n`-th right-wall reflection, `n >= 1`.
    pub fn reflection(&self, n: usize) -> f64 {
        self.first + (n.max(1) - 1) as f64 * self.period
    }

    /// Interval after the `n`-th reflection during which the packet stays
    /// clear of the step.
    pub fn window(&self, n: usize) -> (f64, f64) {
        let t = self.reflection(n);
        (t + self.guard, t + self.period - self.guard)
    }

    /// Quarter period after the `n`-th reflection: the packet is then
    /// halfway between the walls.
    pub fn midpoint(&self, n: usize) -> f64 {
        self.reflection(n) + 0.25 * self.period
    }
}

/// Momentum-space cut-off used by the peakedness conditions, in spreads.
pub const CUTOFF_SPREADS: f64 = 5.0;
/// Largest tolerated weight beyond the cut-off.
pub const TAIL_MASS_LIMIT: f64 = 1e-6;
/// Admissible range of the threshold factor.
pub const FACTOR_RANGE: (f64, f64) = (0.2, 5.0);
/// Largest admissible `p0 Δp / (mV)`.
pub const APPROX_MEASURE_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Energy above the step, `k0 > 1`.
    Climbing,
    /// Energy below the step, `0 < k0 < 1`.
    Forbidden,
}

/// Measured peakedness of a momentum distribution relative to a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peakedness {
    pub regime: Regime,
    pub k0: f64,
    /// Threshold momentum `√(2mV)`.
    pub threshold: f64,
    /// Cut-off `p0 ∓ 5Δp`.
    pub p_m: f64,
    /// Weight of `|f|²` on the wrong side of the cut-off.
    pub tail_mass: f64,
    /// `1/√|p_m²/(2mV) - 1|`.
    pub factor: f64,
    /// `p0 Δp / (mV)`.
    pub approx_measure: f64,
}

impl Peakedness {
    /// Human-readable list of failed checks with their margins.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.regime {
            Regime::Climbing => {
                if !(self.p_m > self.threshold) {
                    out.push(format!(
                        "cut-off p_m = {:.6} does not exceed the threshold {:.6}",
                        self.p_m, self.threshold
                    ));
                }
            }
            Regime::Forbidden => {
                if !(self.p_m < self.threshold) {
                    out.push(format!(
                        "cut-off p_m = {:.6} is not below the threshold {:.6}",
                        self.p_m, self.threshold
                    ));
                }
                if !(self.k0 > 0.0) {
                    out.push("the packet does not move towards the step".into());
                }
            }
        }
        if !(self.tail_mass < TAIL_MASS_LIMIT) {
            out.push(format!(
                "tail mass {:.3e} beyond the cut-off exceeds {TAIL_MASS_LIMIT:e}",
                self.tail_mass
            ));
        }
        if !(self.factor >= FACTOR_RANGE.0 && self.factor <= FACTOR_RANGE.1) {
            out.push(format!(
                "threshold factor {:.4} outside [{}, {}]",
                self.factor, FACTOR_RANGE.0, FACTOR_RANGE.1
            ));
        }
        if !(self.approx_measure < APPROX_MEASURE_LIMIT) {
            out.push(format!(
                "p0 dp / (mV) = {:.4} is not below {APPROX_MEASURE_LIMIT}",
                self.approx_measure
            ));
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn require(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::PreconditionViolation(v.join("; ")))
        }
    }
}

fn peakedness_common(f: &MomentumAmplitude, v: f64) -> Result<(f64, f64, f64)> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(format!("step height must be positive, got {v}")));
    }
    let m = f.units().mass();
    let k0 = f.p0 * f.p0.abs() / (2.0 * m * v);
    let threshold = (2.0 * m * v).sqrt();
    let approx = f.p0.abs() * f.spread / (m * v);
    Ok((k0, threshold, approx))
}

/// Checks for a packet climbing the step: almost no weight below
/// `p_m = p0 - 5Δp`, `p_m` above the threshold, and the threshold factor
/// `1/√(p_m²/(2mV) - 1)` of order one.
pub fn climbing_diagnostics(f: &MomentumAmplitude, v: f64, spec: &QuadratureSpec) -> Result<Peakedness> {
    let (k0, threshold, approx_measure) = peakedness_common(f, v)?;
    let p_m = f.p0 - CUTOFF_SPREADS * f.spread;
    let tail_mass = f.mass_below(p_m, spec)?;
    let ratio = p_m * p_m / (threshold * threshold);
    let factor = if p_m > threshold {
        1.0 / (ratio - 1.0).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(Peakedness {
        regime: Regime::Climbing,
        k0,
        threshold,
        p_m,
        tail_mass,
        factor,
        approx_measure,
    })
}

/// Checks for a packet below the step: almost no weight above
/// `p_m = p0 + 5Δp` or below zero, `p_m` below the threshold, and
/// `1/√(1 - p_m²/(2mV))` of order one.
pub fn forbidden_diagnostics(f: &MomentumAmplitude, v: f64, spec: &QuadratureSpec) -> Result<Peakedness> {
    let (k0, threshold, approx_measure) = peakedness_common(f, v)?;
    let p_m = f.p0 + CUTOFF_SPREADS * f.spread;
    let below_zero = f.mass_below(0.0, spec)?;
    let above = (1.0 - f.mass_below(p_m, spec)?).max(0.0);
    let ratio = p_m * p_m / (threshold * threshold);
    let factor = if p_m < threshold {
        1.0 / (1.0 - ratio).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(Peakedness {
        regime: Regime::Forbidden,
        k0,
        threshold,
        p_m,
        tail_mass: below_zero + above,
        factor,
        approx_measure,
    })
}

/// Truncation conditions for the semiclassical box solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxConditions {
    /// `t² ħ √(V/m³) / d³`.
    pub cond1: f64,
    /// `(2ħ/(Vt))^ε l(l-1)/2`.
    pub cond2: f64,
    /// Smallest positive integer with `2dl >= v0 t + 3d`.
    pub l: usize,
    /// Series limits `L₁ … L₄ = l - 1`.
    pub limits: [usize; 4],
}

impl BoxConditions {
    pub fn require(&self, policy: &SeriesPolicy) -> Result<()> {
        if self.cond1 < policy.cond1_max && self.cond2 < policy.cond2_max {
            return Ok(());
        }
        Err(Error::PreconditionViolation(format!(
            "box truncation conditions: cond1 = {:.4e} (limit {}), cond2 = {:.4e} (limit {})",
            self.cond1, policy.cond1_max, self.cond2, policy.cond2_max
        )))
    }
}

pub fn box_conditions(
    v0: f64,
    t: f64,
    d: f64,
    v: f64,
    u: &UnitSystem,
    policy: &SeriesPolicy,
) -> Result<BoxConditions> {
    if !(d > 0.0 && v > 0.0 && t > 0.0) {
        return Err(invalid(format!(
            "box conditions need positive d, V and t (got {d}, {v}, {t})"
        )));
    }
    let h = u.hbar();
    let m = u.mass();
    let l = ((v0.abs() * t + 3.0 * d) / (2.0 * d)).ceil().max(1.0) as usize;
    let cond1 = t * t * h * (v / (m * m * m)).sqrt() / (d * d * d);
    let pairs = (l * (l - 1)) as f64 / 2.0;
    let cond2 = (2.0 * h / (v * t)).powf(policy.cond2_epsilon) * pairs;
    Ok(BoxConditions {
        cond1,
        cond2,
        l,
        limits: [l - 1; 4],
    })
}
