//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `cargo test -p lapwave --test acceptance -- 3 5` runs a subset.

use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64;

use lapwave::diagnostics::{box_survival, observables, ReflectionSchedule};
use lapwave::numerics::{integrate, QuadratureSpec};
use lapwave::oracle::{
    free_gaussian_analytic, revival_time, CrankNicolson, EigenExpansion, FdGrid,
};
use lapwave::propagators::{
    asym_inside_exact, asym_outside_exact, mirror_well, step_climb_approx, step_left_exact,
    step_right_exact, Context, InitialState,
};
use lapwave::specfun::{m_kernel, reflection_r, rho_of_s};
use lapwave::{GaussianPacket, Packet, PotentialSpec, Result, UnitSystem, WaveField};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(usize, &str, fn() -> Result<Outcome>); 9] = [
        (1, "mirror solution vs sine eigenbasis", criterion_1),
        (2, "transmitted momentum at 2 t_R (k0 = 1.5)", criterion_2),
        (3, "reflection probability (k0 = 1.5)", criterion_3),
        (4, "forbidden region (k0 = 1/4)", criterion_4),
        (5, "kernel Laplace transforms", criterion_5),
        (6, "unitarity identity", criterion_6),
        (7, "asymmetric well leakage", criterion_7),
        (8, "exact vs Crank-Nicolson on the full line", criterion_8),
        (9, "oracle self-checks", criterion_9),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id} {verdict}: {name}: {} [{:.1}s]",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        if !outcome.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn natural() -> UnitSystem {
    UnitSystem::natural()
}

/// Context for the step-right solutions, where each sample costs a
/// double integral.
fn coarse_context() -> Context {
    Context::new(natural()).with_quad(QuadratureSpec::new(1e-6, 1e-10, 2000).expect("valid spec"))
}

/// Step height with `p0²/(2mV) = k0`.
fn step_height(p0: f64, k0: f64, u: &UnitSystem) -> f64 {
    p0 * p0 / (2.0 * u.mass() * k0)
}

fn points(lo: f64, hi: f64, dx: f64) -> usize {
    ((hi - lo) / dx).round() as usize + 1
}

/// Potential with the exact midpoint value at the step even when the grid
/// node misses `x = 0` by rounding.
fn grid_potential(pot: PotentialSpec, dx: f64) -> impl Fn(f64) -> f64 {
    move |x| {
        if x.abs() < 1e-6 * dx {
            pot.value(0.0)
        } else {
            pot.value(x)
        }
    }
}

fn crank_nicolson(
    g: &GaussianPacket,
    pot: PotentialSpec,
    x_min: f64,
    x_max: f64,
    dx: f64,
    dt: f64,
) -> Result<CrankNicolson> {
    let u = natural();
    let grid = FdGrid::with_spacing(x_min, x_max, dx, dt)?;
    let psi0 = WaveField::sample(0.0, x_min, x_max, grid.n_points, |x| g.position(x, &u))?;
    CrankNicolson::with_potential(&psi0, grid_potential(pot, grid.dx()), grid, &u)
}

/// `Σ |a - b|² Δx` over a sampled field against a reference evaluated at
/// the same points (trapezoid rule).
fn squared_distance(field: &WaveField, reference: impl Fn(f64) -> Complex64) -> Result<f64> {
    let diff: Vec<Complex64> = field
        .xs()
        .iter()
        .zip(field.amps())
        .map(|(&x, &a)| a - reference(x))
        .collect();
    Ok(WaveField::new(field.t, field.xs().to_vec(), diff)?.norm())
}

fn criterion_1() -> Result<Outcome> {
    let u = natural();
    let alpha: f64 = 1.0;
    let d = 20.0 * alpha.sqrt();
    let g = GaussianPacket::new(alpha, d / 2.0, 30.0 / alpha.sqrt())?;
    let st = InitialState::gaussian(g, &u)?;
    let ctx = Context::new(u);
    let eigen = EigenExpansion::new(&Packet::Gaussian(g), d, 400, &u)?;
    let period = 2.0 * d * u.mass() / g.p0;
    let mut worst: f64 = 0.0;
    for i in 0..=16 {
        let t = 2.0 * period * i as f64 / 16.0;
        for j in 1..400 {
            let x = d * j as f64 / 400.0;
            let a = mirror_well(&st, d, t, x, &ctx)?.value;
            worst = worst.max((a - eigen.eval(x, t)).norm());
        }
    }
    Ok(Outcome::new(
        worst < 1e-6,
        format!("L-inf {worst:.3e} over 17 times in [0, 2T] (limit 1e-6)"),
    ))
}

/// Figure 1 packet: `x0 = -10`, `p0 = 100`, `α = 1`, `k0 = 1.5`.
fn climbing_packet() -> Result<GaussianPacket> {
    GaussianPacket::new(1.0, -10.0, 100.0)
}

/// One Crank–Nicolson run for the climbing packet with snapshots at `2t_R`
/// and `4t_R`.
fn climbing_cn_snapshots(v: f64, t_r: f64) -> Result<(WaveField, WaveField)> {
    static SNAPSHOTS: OnceLock<(WaveField, WaveField)> = OnceLock::new();
    if let Some(s) = SNAPSHOTS.get() {
        return Ok(s.clone());
    }
    let g = climbing_packet()?;
    let mut cn = crank_nicolson(&g, PotentialSpec::step(v)?, -45.0, 30.0, 0.002, 1e-5)?;
    cn.advance_to(2.0 * t_r)?;
    let first = cn.field();
    cn.advance_to(4.0 * t_r)?;
    Ok(SNAPSHOTS.get_or_init(|| (first, cn.field())).clone())
}

fn criterion_2() -> Result<Outcome> {
    let u = natural();
    let g = climbing_packet()?;
    let k0 = 1.5;
    let v = step_height(g.p0, k0, &u);
    let t_r = g.x0.abs() * u.mass() / g.p0;
    let t = 2.0 * t_r;
    let st = InitialState::gaussian(g, &u)?;
    let ctx = coarse_context();
    let target = ((k0 - 1.0) / k0).sqrt();

    let exact = WaveField::try_sample(t, 2.0, 10.0, points(2.0, 10.0, 0.04), |x| {
        Ok(step_right_exact(st.amplitude(), v, t, x, &ctx)?.value)
    })?;
    let approx = WaveField::try_sample(t, 1e-3, 15.0, points(0.0, 15.0, 0.01), |x| {
        step_climb_approx(&st, v, t, x, &ctx)
    })?;
    let (cn, _) = climbing_cn_snapshots(v, t_r)?;
    let cn = lapwave::diagnostics::restrict(&cn, 1e-9, 30.0)?;

    let ratios = [
        observables(&exact, 0.0, &u)?.mean_p / g.p0,
        observables(&approx, 0.0, &u)?.mean_p / g.p0,
        observables(&cn, 0.0, &u)?.mean_p / g.p0,
    ];
    let near = |a: f64, b: f64| (a / b - 1.0).abs() <= 0.02;
    let pass = ratios.iter().all(|&r| near(r, target))
        && near(ratios[0], ratios[1])
        && near(ratios[0], ratios[2])
        && near(ratios[1], ratios[2]);
    Ok(Outcome::new(
        pass,
        format!(
            "<p>/p0: exact {:.5}, approx {:.5}, CN {:.5}; target {target:.5} (2%)",
            ratios[0], ratios[1], ratios[2]
        ),
    ))
}

fn criterion_3() -> Result<Outcome> {
    let u = natural();
    let g = climbing_packet()?;
    let v = step_height(g.p0, 1.5, &u);
    let t_r = g.x0.abs() * u.mass() / g.p0;
    let t = 4.0 * t_r;
    let st = InitialState::gaussian(g, &u)?;
    let ctx = Context::new(u);
    let left = WaveField::try_sample(t, -45.0, 0.0, points(-45.0, 0.0, 0.005), |x| {
        Ok(step_left_exact(&st, v, t, x, &ctx)?.value)
    })?;
    let exact = left.norm();
    let (_, late) = climbing_cn_snapshots(v, t_r)?;
    let cn = late.integrate_density(|x| x < 0.0);
    let target = (2.0 - 3f64.sqrt()).powi(2);
    let pass = ((exact - target) / target).abs() <= 0.05 && (exact - cn).abs() <= 1e-3;
    Ok(Outcome::new(
        pass,
        format!("left mass exact {exact:.6}, CN {cn:.6}, (2-sqrt 3)^2 = {target:.6}"),
    ))
}

fn criterion_4() -> Result<Outcome> {
    let u = natural();
    let g = GaussianPacket::new(1.0, -10.0, 10.0)?;
    let v = step_height(g.p0, 0.25, &u);
    let t_r = g.x0.abs() * u.mass() / g.p0;
    let st = InitialState::gaussian(g, &u)?;
    let ctx = coarse_context();

    // Least-squares slope of ln|ψ|² near the step at t_R.
    let xs: Vec<f64> = (1..=10).map(|i| 0.02 * i as f64).collect();
    let mut ys = Vec::with_capacity(xs.len());
    for &x in &xs {
        ys.push(step_right_exact(st.amplitude(), v, t_r, x, &ctx)?.value.norm_sqr().ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let want = -2.0 * (2.0 * u.mass() * v - g.p0 * g.p0).sqrt() / u.hbar();
    let slope_ok = ((slope - want) / want).abs() <= 0.05;

    let t2 = 2.0 * t_r;
    let right = WaveField::try_sample(t2, 1e-4, 1.2, points(0.0, 1.2, 0.01), |x| {
        Ok(step_right_exact(st.amplitude(), v, t2, x, &ctx)?.value)
    })?;
    let right_mass = right.norm();
    let modulus = reflection_r(g.p0, v, &u)?.value.norm();
    let pass = slope_ok && right_mass < 1e-2 && (modulus - 1.0).abs() <= 1e-12;
    Ok(Outcome::new(
        pass,
        format!(
            "slope {slope:.4} vs {want:.4}; right mass at 2t_R {right_mass:.3e}; |R(p0)| - 1 = {:.1e}",
            modulus - 1.0
        ),
    ))
}

fn criterion_5() -> Result<Outcome> {
    let u = natural();
    let v = 1.0;
    let spec = QuadratureSpec::new(1e-12, 1e-15, 20000)?;
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let s = 0.5 * 40f64.powf(i as f64 / 9.0);
        let rho = rho_of_s(Complex64::new(s, 0.0), v, &u)?;
        let t_end = 45.0 / s;
        for k in 1..=3i64 {
            let lhs = integrate(
                |t| m_kernel(k, t, v, &u).expect("valid kernel time") * (-s * t).exp(),
                0.0,
                t_end,
                64,
                &spec,
            )?
            .value;
            worst = worst.max((lhs - rho.powi(k as i32)).norm());
        }
    }
    Ok(Outcome::new(
        worst < 1e-6,
        format!("max |L[M(k)](s) - rho(s)^k| = {worst:.3e} over 10 s in [0.5, 20], k = 1..3"),
    ))
}

fn criterion_6() -> Result<Outcome> {
    let u = natural();
    let v = 1.0;
    let mut worst: f64 = 0.0;
    for i in 1..=50 {
        let k = 1.0 + 99.0 * (i as f64 / 50.0).powi(2);
        let p = (2.0 * u.mass() * v * k).sqrt();
        let r = reflection_r(p, v, &u)?.value.re;
        let lambda = (1.0 - 1.0 / k).sqrt();
        worst = worst.max(((r + 1.0).powi(2) * lambda - (1.0 - r * r)).abs());
    }
    Ok(Outcome::new(
        worst <= 1e-12,
        format!("max |(R+1)^2 lambda - (1 - R^2)| = {worst:.2e} over 50 k in (1, 100]"),
    ))
}

fn criterion_7() -> Result<Outcome> {
    let u = natural();
    let alpha: f64 = 1.0;
    let d = 20.0 * alpha.sqrt();
    let g = climbing_packet()?;
    let v = step_height(g.p0, 1.5, &u);
    let st = InitialState::gaussian(g, &u)?;
    let ctx = Context::new(u);
    let schedule = ReflectionSchedule::new(g.x0, g.p0, g.dx0(), d, &u)?;
    let r2 = reflection_r(g.p0, v, &u)?.value.norm_sqr();
    let mut cn = crank_nicolson(&g, PotentialSpec::asymmetric_well(d, v)?, -d, 40.0, 0.002, 2e-5)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for m in 1..=2 {
        let t = schedule.midpoint(m);
        let (lo, hi) = schedule.window(m);
        pass &= t > lo && t < hi;
        let field = WaveField::try_sample(t, -d, 0.0, points(-d, 0.0, 0.01), |x| {
            Ok(asym_inside_exact(&st, d, v, t, x, &ctx)?.value)
        })?;
        let exact = box_survival(&field, d);
        cn.advance_to(t)?;
        let oracle = box_survival(&cn.field(), d);
        let want = r2.powi(m as i32);
        pass &= ((exact - want) / want).abs() <= 0.05 && ((oracle - want) / want).abs() <= 0.05;
        parts.push(format!("m={m} t={t:.3}: exact {exact:.5}, CN {oracle:.5}, |R|^2m {want:.5}"));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

/// Milder packet for the full-line comparisons: `p0 = 5`, `k0 = 1.5`.
fn mild_packet() -> Result<GaussianPacket> {
    GaussianPacket::new(1.0, -10.0, 5.0)
}

fn criterion_8() -> Result<Outcome> {
    let u = natural();
    let g = mild_packet()?;
    let v = step_height(g.p0, 1.5, &u);
    let t_r = g.x0.abs() * u.mass() / g.p0;
    let times: Vec<f64> = (1..=5).map(|i| 0.4 * t_r * i as f64).collect();
    let st = InitialState::gaussian(g, &u)?;
    let ctx = Context::new(u);
    let coarse = coarse_context();
    let d = 20.0;

    let mut step_cn = crank_nicolson(&g, PotentialSpec::step(v)?, -45.0, 45.0, 0.0025, 2.5e-4)?;
    let mut box_cn = crank_nicolson(&g, PotentialSpec::asymmetric_well(d, v)?, -d, 45.0, 0.0025, 2.5e-4)?;
    let mut worst_step: f64 = 0.0;
    let mut worst_box: f64 = 0.0;
    for &t in &times {
        step_cn.advance_to(t)?;
        let oracle = step_cn.field();
        let left = WaveField::try_sample(t, -40.0, 0.0, points(-40.0, 0.0, 0.05), |x| {
            Ok(step_left_exact(&st, v, t, x, &ctx)?.value)
        })?;
        let right = WaveField::try_sample(t, 1e-9, 30.0, points(0.0, 30.0, 0.25), |x| {
            Ok(step_right_exact(st.amplitude(), v, t, x, &coarse)?.value)
        })?;
        let gap = squared_distance(&left, |x| oracle.interpolate(x))?
            + squared_distance(&right, |x| oracle.interpolate(x))?
            + oracle.integrate_density(|x| x < -40.0 || x > 30.0);
        worst_step = worst_step.max(gap.sqrt());

        box_cn.advance_to(t)?;
        let oracle = box_cn.field();
        let inside = WaveField::try_sample(t, -d, 0.0, points(-d, 0.0, 0.05), |x| {
            Ok(asym_inside_exact(&st, d, v, t, x, &ctx)?.value)
        })?;
        let outside = WaveField::try_sample(t, 1e-9, 30.0, points(0.0, 30.0, 0.25), |x| {
            Ok(asym_outside_exact(st.amplitude(), d, v, t, x, &coarse)?.value)
        })?;
        let gap = squared_distance(&inside, |x| oracle.interpolate(x))?
            + squared_distance(&outside, |x| oracle.interpolate(x))?
            + oracle.integrate_density(|x| x > 30.0);
        worst_box = worst_box.max(gap.sqrt());
    }
    Ok(Outcome::new(
        worst_step < 1e-3 && worst_box < 1e-3,
        format!(
            "max L2 step {worst_step:.3e}, asymmetric well {worst_box:.3e} at t = {} (limit 1e-3)",
            times.iter().map(|t| format!("{t:.2}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn criterion_9() -> Result<Outcome> {
    let u = natural();

    // Norm drift over 1000 steps with the step potential.
    let g = GaussianPacket::new(1.0, -5.0, 3.0)?;
    let mut cn = crank_nicolson(&g, PotentialSpec::step(3.0)?, -30.0, 30.0, 0.01, 1e-3)?;
    let n0 = cn.norm();
    for _ in 0..1000 {
        cn.step();
    }
    let drift = (cn.norm() - n0).abs() / n0;

    // Free evolution against the closed form.
    let g = GaussianPacket::new(1.0, -2.0, 1.0)?;
    let t = 1.0;
    let mut free = CrankNicolson::with_potential(
        &WaveField::sample(0.0, -15.0, 15.0, points(-15.0, 15.0, 5e-4), |x| g.position(x, &u))?,
        |_| 0.0,
        FdGrid::with_spacing(-15.0, 15.0, 5e-4, 5e-4)?,
        &u,
    )?;
    free.advance_to(t)?;
    let free_err = squared_distance(&free.field(), |x| free_gaussian_analytic(&g, t, x, &u))?.sqrt();

    // Revival of the well packet at 4md²/ħ.
    let d = 20.0;
    let g = GaussianPacket::new(1.0, d / 2.0, 30.0)?;
    let eigen = EigenExpansion::new(&Packet::Gaussian(g), d, 400, &u)?;
    let t_rev = 4.0 * u.mass() * d * d / u.hbar();
    let overlap = eigen.autocorrelation(t_rev).norm();
    let exact_period = eigen.autocorrelation(revival_time(d, &u)).norm();

    let pass = drift < 1e-10 && free_err < 1e-6 && (overlap - 1.0).abs() <= 1e-6;
    Ok(Outcome::new(
        pass,
        format!(
            "norm drift {drift:.2e}/1000 steps; CN vs free L2 {free_err:.2e}; \
             |<psi(4md^2/hbar)|psi(0)>| = {overlap:.6} (at 4md^2/(pi hbar): {exact_period:.12})"
        ),
    ))
}
