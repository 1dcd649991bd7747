//! Unit system, potentials, sampled fields and truncation policy.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// Reduced Planck constant and particle mass. `kappa = sqrt(mass / hbar)` is
/// cached because every free-propagator kernel uses it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem {
    hbar: f64,
    mass: f64,
    kappa: f64,
}

impl UnitSystem {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(invalid(format!("hbar must be positive, got {hbar}")));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid(format!("mass must be positive, got {mass}")));
        }
        Ok(Self {
            hbar,
            mass,
            kappa: (mass / hbar).sqrt(),
        })
    }

    /// hbar = m = 1.
    pub fn natural() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            kappa: 1.0,
        }
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Kinetic energy p^2 / 2m.
    pub fn energy(&self, p: f64) -> f64 {
        p * p / (2.0 * self.mass)
    }
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self::natural()
    }
}

/// The three piecewise-constant potentials.
///
/// Coordinates follow one convention per potential: the infinite well
/// occupies `[0, d]`, the step rises at `x = 0`, and the asymmetric well is
/// the box `[-d, 0]` with an infinite wall at `-d` and the step at `0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialSpec {
    InfiniteWell { d: f64 },
    Step { v: f64 },
    AsymmetricWell { d: f64, v: f64 },
}

impl PotentialSpec {
    pub fn infinite_well(d: f64) -> Result<Self> {
        check_positive("well width d", d)?;
        Ok(Self::InfiniteWell { d })
    }

    pub fn step(v: f64) -> Result<Self> {
        check_positive("step height V", v)?;
        Ok(Self::Step { v })
    }

    pub fn asymmetric_well(d: f64, v: f64) -> Result<Self> {
        check_positive("well width d", d)?;
        check_positive("step height V", v)?;
        Ok(Self::AsymmetricWell { d, v })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::InfiniteWell { .. } => "infinite_well",
            Self::Step { .. } => "step",
            Self::AsymmetricWell { .. } => "asymmetric_well",
        }
    }

    /// Step height, if the potential has a finite step.
    pub fn step_height(&self) -> Option<f64> {
        match *self {
            Self::InfiniteWell { .. } => None,
            Self::Step { v } | Self::AsymmetricWell { v, .. } => Some(v),
        }
    }

    /// Potential value; `f64::INFINITY` inside hard walls. At the step
    /// discontinuity the mean of both sides is returned.
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Self::InfiniteWell { d } => {
                if x <= 0.0 || x >= d {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Self::Step { v } => step_value(x, v),
            Self::AsymmetricWell { d, v } => {
                if x <= -d {
                    f64::INFINITY
                } else {
                    step_value(x, v)
                }
            }
        }
    }
}

fn step_value(x: f64, v: f64) -> f64 {
    if x > 0.0 {
        v
    } else if x == 0.0 {
        0.5 * v
    } else {
        0.0
    }
}

fn check_positive(what: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{what} must be positive, got {value}")))
    }
}

/// A complex wave function sampled on a strictly increasing grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub t: f64,
    xs: Vec<f64>,
    amps: Vec<Complex64>,
}

impl WaveField {
    pub fn new(t: f64, xs: Vec<f64>, amps: Vec<Complex64>) -> Result<Self> {
        if xs.len() != amps.len() {
            return Err(invalid(format!(
                "grid has {} points but {} amplitudes",
                xs.len(),
                amps.len()
            )));
        }
        if xs.len() < 2 {
            return Err(invalid("a wave field needs at least two samples"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("grid must be strictly increasing"));
        }
        if amps.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(invalid("non-finite amplitude"));
        }
        Ok(Self { t, xs, amps })
    }

    /// Samples `f` on a uniform grid of `n` points over `[x_min, x_max]`.
    pub fn sample(
        t: f64,
        x_min: f64,
        x_max: f64,
        n: usize,
        mut f: impl FnMut(f64) -> Complex64,
    ) -> Result<Self> {
        let xs = uniform_grid(x_min, x_max, n)?;
        let amps = xs.iter().map(|&x| f(x)).collect();
        Self::new(t, xs, amps)
    }

    /// Like [`WaveField::sample`] with a fallible evaluator.
    pub fn try_sample(
        t: f64,
        x_min: f64,
        x_max: f64,
        n: usize,
        mut f: impl FnMut(f64) -> Result<Complex64>,
    ) -> Result<Self> {
        let xs = uniform_grid(x_min, x_max, n)?;
        let amps = xs.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
        Self::new(t, xs, amps)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Trapezoid rule for `∫ |ψ|² dx`.
    pub fn norm(&self) -> f64 {
        self.integrate_density(|_| true)
    }

    /// Trapezoid rule for `∫ w(x) |ψ|² dx` restricted to the samples where
    /// `keep(x)` holds; segments straddling the boundary contribute half.
    pub fn integrate_density(&self, keep: impl Fn(f64) -> bool) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.xs.len() - 1 {
            let h = self.xs[i + 1] - self.xs[i];
            let a = if keep(self.xs[i]) { self.amps[i].norm_sqr() } else { 0.0 };
            let b = if keep(self.xs[i + 1]) {
                self.amps[i + 1].norm_sqr()
            } else {
                0.0
            };
            acc += 0.5 * h * (a + b);
        }
        acc
    }

    /// Linear interpolation; zero outside the sampled range.
    pub fn interpolate(&self, x: f64) -> Complex64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return Complex64::new(0.0, 0.0);
        }
        let i = match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return self.amps[i],
            Err(i) => i - 1,
        };
        let s = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.amps[i] * (1.0 - s) + self.amps[i + 1] * s
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            t: self.t,
            xs: self.xs.clone(),
            amps: self.amps.iter().map(|a| a * factor).collect(),
        }
    }

    /// L² and L∞ distance to another field on the same grid.
    pub fn distance(&self, other: &WaveField) -> Result<(f64, f64)> {
        if self.xs != other.xs {
            return Err(invalid("fields live on different grids"));
        }
        let diff = WaveField {
            t: self.t,
            xs: self.xs.clone(),
            amps: self
                .amps
                .iter()
                .zip(&other.amps)
                .map(|(a, b)| a - b)
                .collect(),
        };
        let linf = diff.amps.iter().map(|a| a.norm()).fold(0.0, f64::max);
        Ok((diff.norm().sqrt(), linf))
    }
}

pub fn uniform_grid(x_min: f64, x_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(x_max > x_min) {
        return Err(invalid(format!(
            "bad grid [{x_min}, {x_max}] with {n} points"
        )));
    }
    let h = (x_max - x_min) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i == n - 1 { x_max } else { x_min + h * i as f64 })
        .collect())
}

/// Truncation orders and thresholds for the image and reflection series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPolicy {
    /// Image-series cut-off; `None` picks `ceil((|v0| + 10 dv) t / 2d) + 3`
    /// per call, `dv` being the velocity spread.
    pub k_max: Option<usize>,
    /// Reflection-series limits for the semiclassical box solution; `None`
    /// derives them from the classical reach of the packet.
    pub l_limits: Option<[usize; 4]>,
    pub tau_quad_tol: f64,
    pub x_quad_tol: f64,
    /// The convolution may be extended to infinity once `t V / hbar` exceeds this.
    pub conv_extend_threshold: f64,
    /// Largest admissible value of the short-time condition `t² ħ √(V/m³) / d³`.
    pub cond1_max: f64,
    /// Largest admissible value of the convolution-tail condition.
    pub cond2_max: f64,
    /// Exponent used in the convolution-tail condition, in (0, 1/2).
    pub cond2_epsilon: f64,
}

impl Default for SeriesPolicy {
    fn default() -> Self {
        Self {
            k_max: None,
            l_limits: None,
            tau_quad_tol: 1e-8,
            x_quad_tol: 1e-8,
            conv_extend_threshold: 50.0,
            cond1_max: 0.1,
            cond2_max: 0.1,
            cond2_epsilon: 0.25,
        }
    }
}

impl SeriesPolicy {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau_quad_tol", self.tau_quad_tol),
            ("x_quad_tol", self.x_quad_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.conv_extend_threshold > 0.0) {
            return Err(invalid("conv_extend_threshold must be positive"));
        }
        if !(self.cond2_epsilon > 0.0 && self.cond2_epsilon < 0.5) {
            return Err(invalid("cond2_epsilon must lie in (0, 1/2)"));
        }
        Ok(())
    }

    /// Image count for a packet moving at speed `v0` inside a box of width `d`.
    pub fn image_count(&self, v0: f64, dv: f64, t: f64, d: f64) -> usize {
        self.k_max
            .unwrap_or_else(|| ((v0.abs() + 10.0 * dv) * t / (2.0 * d)).ceil() as usize + 3)
    }
}

/// Time a classical particle starting at `x0` with momentum `p0` needs to
/// reach the origin.
pub fn classical_reflection_time(x0: f64, p0: f64, u: &UnitSystem) -> Result<f64> {
    if p0 == 0.0 || !p0.is_finite() {
        return Err(Error::DegenerateInput(
            "zero momentum never reaches the step".into(),
        ));
    }
    Ok(x0.abs() * u.mass() / p0.abs())
}
