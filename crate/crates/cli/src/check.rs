//! Self-test suite: kernel identities and cross-oracle agreement.

use anyhow::Result;
use num_complex::Complex64;

use lapwave::numerics::integrate;
use lapwave::oracle::{free_gaussian_analytic, CrankNicolson, EigenExpansion, FdGrid};
use lapwave::propagators::{mirror_well, Context};
use lapwave::specfun::{m_kernel, reflection_r, rho_of_s};
use lapwave::{GaussianPacket, InitialState, Packet, PotentialSpec, QuadratureSpec, UnitSystem, WaveField};

pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type CheckFn = fn() -> Result<(bool, String)>;

const CHECKS: &[(&str, CheckFn)] = &[
    ("laplace", laplace),
    ("unitarity", unitarity),
    ("mirror_vs_eigen", mirror_vs_eigen),
    ("cn_vs_free_gaussian", cn_vs_free),
    ("cn_vs_eigen", cn_vs_eigen),
    ("cn_norm_drift", cn_norm_drift),
];

pub fn run_all() -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, f)| match f() {
            Ok((passed, detail)) => CheckResult { name, passed, detail },
            Err(e) => CheckResult {
                name,
                passed: false,
                detail: format!("error: {e:#}"),
            },
        })
        .collect()
}

fn grid_field(g: &GaussianPacket, lo: f64, hi: f64, dx: f64, u: &UnitSystem) -> Result<WaveField> {
    let n = ((hi - lo) / dx).round() as usize + 1;
    Ok(WaveField::sample(0.0, lo, hi, n, |x| g.position(x, u))?)
}

fn l2_against(field: &WaveField, reference: impl Fn(f64) -> Complex64) -> Result<f64> {
    let exact = WaveField::new(field.t, field.xs().to_vec(), field.xs().iter().map(|&x| reference(x)).collect())?;
    Ok(field.distance(&exact)?.0)
}

fn laplace() -> Result<(bool, String)> {
    let u = UnitSystem::natural();
    let v = 1.0;
    let spec = QuadratureSpec::new(1e-12, 1e-15, 20000)?;
    let mut worst: f64 = 0.0;
    for s in [0.5, 2.0, 8.0] {
        let rho = rho_of_s(Complex64::new(s, 0.0), v, &u)?;
        for k in 1..=3i64 {
            let lhs = integrate(
                |t| m_kernel(k, t, v, &u).unwrap_or_default() * (-s * t).exp(),
                0.0,
                45.0 / s,
                64,
                &spec,
            )?
            .value;
            worst = worst.max((lhs - rho.powi(k as i32)).norm());
        }
    }
    Ok((worst < 1e-6, format!("max |L[M(k)] - rho^k| = {worst:.2e}")))
}

fn unitarity() -> Result<(bool, String)> {
    let u = UnitSystem::natural();
    let v = 1.0;
    let mut worst: f64 = 0.0;
    for i in 1..=50 {
        let k = 1.0 + 99.0 * (i as f64 / 50.0).powi(2);
        let p = (2.0 * v * k).sqrt();
        let r = reflection_r(p, v, &u)?.value.re;
        let lambda = (1.0 - 1.0 / k).sqrt();
        worst = worst.max(((r + 1.0).powi(2) * lambda - (1.0 - r * r)).abs());
    }
    Ok((worst <= 1e-12, format!("max residual {worst:.2e}")))
}

fn mirror_vs_eigen() -> Result<(bool, String)> {
    let u = UnitSystem::natural();
    let d = 10.0;
    let g = GaussianPacket::new(1.0, 5.0, 2.0)?;
    let state = InitialState::gaussian(g, &u)?;
    let ctx = Context::new(u);
    let eigen = EigenExpansion::new(&Packet::Gaussian(g), d, 400, &u)?;
    let mut worst: f64 = 0.0;
    for t in [0.0, 1.3, 7.0, 25.0] {
        for j in 1..200 {
            let x = d * j as f64 / 200.0;
            let a = mirror_well(&state, d, t, x, &ctx)?.value;
            worst = worst.max((a - eigen.eval(x, t)).norm());
        }
    }
    Ok((worst < 1e-6, format!("max |mirror - eigen| = {worst:.2e}")))
}

fn cn_vs_free() -> Result<(bool, String)> {
    let u = UnitSystem::natural();
    let g = GaussianPacket::new(1.0, -2.0, 1.0)?;
    let (h, t) = (5e-4, 1.0);
    let mut cn = CrankNicolson::with_potential(
        &grid_field(&g, -15.0, 15.0, h, &u)?,
        |_| 0.0,
        FdGrid::with_spacing(-15.0, 15.0, h, h)?,
        &u,
    )?;
    cn.advance_to(t)?;
    let err = l2_against(&cn.field(), |x| free_gaussian_analytic(&g, t, x, &u))?;
    Ok((err < 1e-6, format!("L2 distance {err:.2e}")))
}

fn cn_vs_eigen() -> Result<(bool, String)> {
    let u = UnitSystem::natural();
    let d = 16.0;
    let g = GaussianPacket::new(1.0, 8.0, 1.0)?;
    let (h, t) = (5e-4, 1.0);
    let pot = PotentialSpec::infinite_well(d)?;
    let mut cn = CrankNicolson::new(&grid_field(&g, 0.0, d, h, &u)?, &pot, FdGrid::with_spacing(0.0, d, h, h)?, &u)?;
    cn.advance_to(t)?;
    let eigen = EigenExpansion::new(&Packet::Gaussian(g), d, 400, &u)?;
    let err = l2_against(&cn.field(), |x| eigen.eval(x, t))?;
    Ok((err < 1e-6, format!("L2 distance {err:.2e}")))
}

fn cn_norm_drift() -> Result<(bool, String)> {
    let u = UnitSystem::natural();
    let g = GaussianPacket::new(1.0, -5.0, 3.0)?;
    let pot = PotentialSpec::step(3.0)?;
    let mut cn = CrankNicolson::new(
        &grid_field(&g, -30.0, 30.0, 0.01, &u)?,
        &pot,
        FdGrid::with_spacing(-30.0, 30.0, 0.01, 1e-3)?,
        &u,
    )?;
    let n0 = cn.norm();
    for _ in 0..1000 {
        cn.step();
    }
    let drift = (cn.norm() - n0).abs() / n0;
    Ok((drift < 1e-10, format!("relative drift {drift:.2e} over 1000 steps")))
}
