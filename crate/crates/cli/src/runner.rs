//! Evaluates a scenario with one method and writes the output bundle.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context as _, Result};
use num_complex::Complex64;

use lapwave::diagnostics::{observables, ObservableReport};
use lapwave::oracle::{CrankNicolson, EigenExpansion, FdGrid};
use lapwave::propagators::{
    asym_exact, asym_inside_approx, mirror_well, step_climb_approx, step_exact, step_forbidden_approx,
    Context,
};
use lapwave::{Error, Estimate, InitialState, Packet, PotentialSpec, WaveField};

use crate::config::{num, Method, PacketSource, Scenario};

/// One output time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub field: WaveField,
    pub max_error: f64,
    /// Points where the integrator missed its tolerance; the best estimate
    /// was kept.
    pub flagged: Vec<f64>,
    pub report: Option<ObservableReport>,
}

#[derive(Debug, Clone)]
pub struct Run {
    pub scenario: Scenario,
    pub snapshots: Vec<Snapshot>,
    /// Derived settings worth recording, e.g. the CN grid actually used.
    pub notes: Vec<(String, String)>,
}

impl Run {
    pub fn flagged_count(&self) -> usize {
        self.snapshots.iter().map(|s| s.flagged.len()).sum()
    }

    pub fn status(&self) -> &'static str {
        if self.flagged_count() > 0 {
            "accuracy_failure"
        } else {
            "ok"
        }
    }
}

/// Reads a CSV packet with columns `x, re, im`. A non-numeric first line
/// is taken as a header.
pub fn load_packet_file(path: &Path) -> Result<WaveField> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut xs = Vec::new();
    let mut amps = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> = cols.iter().map(|c| c.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 3 => {
                xs.push(v[0]);
                amps.push(Complex64::new(v[1], v[2]));
            }
            None if xs.is_empty() && no == 0 => continue,
            _ => bail!("{}:{}: expected three numbers x,re,im", path.display(), no + 1),
        }
    }
    Ok(WaveField::new(0.0, xs, amps)?)
}

pub fn packet(s: &Scenario) -> Result<Packet> {
    Ok(match &s.packet {
        PacketSource::Gaussian(g) => Packet::Gaussian(*g),
        PacketSource::File(p) => Packet::Sampled(load_packet_file(p)?),
    })
}

pub fn output_grid(s: &Scenario) -> Vec<f64> {
    let h = (s.x_max - s.x_min) / (s.n_points - 1) as f64;
    (0..s.n_points)
        .map(|i| if i + 1 == s.n_points { s.x_max } else { s.x_min + h * i as f64 })
        .collect()
}

/// Evaluates `s` with its configured method.
pub fn execute(s: &Scenario) -> Result<Run> {
    s.check_method(s.method)?;
    let packet = packet(s)?;
    let xs = output_grid(s);
    let mut notes = Vec::new();
    let snapshots = match s.method {
        Method::OracleCn => run_cn(s, &packet, &xs, &mut notes)?,
        Method::OracleEigen => run_eigen(s, &packet, &xs)?,
        _ => run_pointwise(s, packet, &xs)?,
    };
    Ok(Run {
        scenario: s.clone(),
        snapshots,
        notes,
    })
}

fn finish(s: &Scenario, field: WaveField, max_error: f64, flagged: Vec<f64>) -> Snapshot {
    let report = observables(&field, s.split_at, &s.units).ok();
    Snapshot {
        field,
        max_error,
        flagged,
        report,
    }
}

fn run_pointwise(s: &Scenario, packet: Packet, xs: &[f64]) -> Result<Vec<Snapshot>> {
    let u = s.units;
    let state = InitialState::new(packet, &u)?;
    let ctx = Context::new(u).with_quad(s.quad).with_policy(s.policy);
    let mut out = Vec::with_capacity(s.times.len());
    for &t in &s.times {
        let mut amps = Vec::with_capacity(xs.len());
        let mut max_error: f64 = 0.0;
        let mut flagged = Vec::new();
        for &x in xs {
            match point(s.method, &s.potential, &state, t, x, &ctx) {
                Ok(e) => {
                    max_error = max_error.max(e.error);
                    amps.push(e.value);
                }
                Err(Error::AccuracyFailure { estimate, error, .. }) => {
                    max_error = max_error.max(error);
                    flagged.push(x);
                    amps.push(estimate);
                }
                Err(e) => return Err(anyhow::Error::new(e).context(format!("at t = {t}, x = {x}"))),
            }
        }
        out.push(finish(s, WaveField::new(t, xs.to_vec(), amps)?, max_error, flagged));
    }
    Ok(out)
}

fn point(
    method: Method,
    pot: &PotentialSpec,
    state: &InitialState,
    t: f64,
    x: f64,
    ctx: &Context,
) -> lapwave::Result<Estimate> {
    let u = ctx.units;
    match (method, *pot) {
        (Method::Mirror, PotentialSpec::InfiniteWell { d }) => {
            if x <= 0.0 || x >= d {
                Ok(Estimate::zero())
            } else {
                mirror_well(state, d, t, x, ctx)
            }
        }
        (Method::StepExact, PotentialSpec::Step { v }) => step_exact(state, v, t, x, ctx),
        (Method::StepApprox, PotentialSpec::Step { v }) => {
            let p0 = state.mean_momentum();
            let value = if p0 * p0 > 2.0 * u.mass() * v {
                step_climb_approx(state, v, t, x, ctx)?
            } else {
                step_forbidden_approx(state, v, t, x, ctx)?
            };
            Ok(Estimate::exact(value))
        }
        (Method::AsymExact, PotentialSpec::AsymmetricWell { d, v }) => {
            if x <= -d {
                Ok(Estimate::zero())
            } else {
                asym_exact(state, d, v, t, x, ctx)
            }
        }
        (Method::AsymApprox, PotentialSpec::AsymmetricWell { d, v }) => {
            if x <= -d {
                Ok(Estimate::zero())
            } else {
                asym_inside_approx(state, d, v, t, x, ctx).map(Estimate::exact)
            }
        }
        _ => Err(Error::InvalidArgument(format!(
            "method {method} does not apply to the {} potential",
            pot.name()
        ))),
    }
}

fn run_eigen(s: &Scenario, packet: &Packet, xs: &[f64]) -> Result<Vec<Snapshot>> {
    let PotentialSpec::InfiniteWell { d } = s.potential else {
        bail!("oracle_eigen needs the infinite well");
    };
    let eigen = EigenExpansion::new(packet, d, s.n_max, &s.units)?;
    s.times
        .iter()
        .map(|&t| {
            let amps = xs
                .iter()
                .map(|&x| if x <= 0.0 || x >= d { Complex64::new(0.0, 0.0) } else { eigen.eval(x, t) })
                .collect();
            Ok(finish(s, WaveField::new(t, xs.to_vec(), amps)?, 0.0, Vec::new()))
        })
        .collect()
}

/// CN grid settings: explicit values win, the rest follow from the packet.
/// The default spacing is half the resolution limit and the default step
/// keeps `E_max dt / ħ` at 0.05.
fn cn_grid(s: &Scenario, state: &InitialState) -> Result<FdGrid> {
    let u = s.units;
    let f = state.amplitude();
    let p_max = f.p0.abs() + 8.0 * f.spread;
    let v = s.potential.step_height().unwrap_or(0.0);
    let dx = s.cn.dx.unwrap_or(0.5 * FdGrid::max_spacing(p_max, &u));
    let e_max = p_max * p_max / (2.0 * u.mass()) + v;
    let dt = s.cn.dt.unwrap_or(0.05 * u.hbar() / e_max);
    let t_end = s.times.last().copied().unwrap_or(0.0);
    let reach = p_max / u.mass() * t_end + 12.0 * f.position_spread();
    let (lo, hi) = state.packet().support();
    let (x_min, x_max) = match s.potential {
        PotentialSpec::InfiniteWell { d } => (0.0, d),
        PotentialSpec::Step { .. } => (
            s.cn.x_min.unwrap_or(s.x_min.min(lo - reach)),
            s.cn.x_max.unwrap_or(s.x_max.max(hi + reach)),
        ),
        PotentialSpec::AsymmetricWell { d, .. } => (-d, s.cn.x_max.unwrap_or(s.x_max.max(reach))),
    };
    Ok(FdGrid::with_spacing(x_min, x_max, dx, dt)?)
}

fn run_cn(
    s: &Scenario,
    packet: &Packet,
    xs: &[f64],
    notes: &mut Vec<(String, String)>,
) -> Result<Vec<Snapshot>> {
    let u = s.units;
    let state = InitialState::new(packet.clone(), &u)?;
    let grid = cn_grid(s, &state)?;
    notes.push(("cn_grid_x_min".into(), num(grid.x_min)));
    notes.push(("cn_grid_x_max".into(), num(grid.x_max)));
    notes.push(("cn_grid_dx".into(), num(grid.dx())));
    notes.push(("cn_grid_dt".into(), num(grid.dt)));
    let psi0 = WaveField::new(0.0, grid.xs(), grid.xs().iter().map(|&x| packet.position(x, &u)).collect())?;
    let pot = s.potential;
    let h = grid.dx();
    // Grid nodes at the step sit exactly on the discontinuity.
    let mut cn = CrankNicolson::with_potential(
        &psi0,
        move |x| if x.abs() < 1e-6 * h { pot.value(0.0) } else { pot.value(x) },
        grid,
        &u,
    )?;
    let mut out = Vec::with_capacity(s.times.len());
    for &t in &s.times {
        cn.advance_to(t)?;
        let field = cn.field();
        let (a, b) = (grid.x_min, grid.x_max);
        let amps = xs
            .iter()
            .map(|&x| if x < a || x > b { Complex64::new(0.0, 0.0) } else { field.interpolate(x) })
            .collect();
        out.push(finish(s, WaveField::new(t, xs.to_vec(), amps)?, 0.0, Vec::new()));
    }
    notes.push(("cn_final_norm".into(), num(cn.norm())));
    Ok(out)
}

fn snapshot_file(i: usize) -> String {
    format!("snapshot_{i:03}.csv")
}

fn snapshot_csv(field: &WaveField) -> String {
    let mut out = String::with_capacity(field.len() * 100 + 16);
    out.push_str("x,re,im,abs2\n");
    for (x, a) in field.xs().iter().zip(field.amps()) {
        let _ = writeln!(out, "{x:.16e},{:.16e},{:.16e},{:.16e}", a.re, a.im, a.norm_sqr());
    }
    out
}

fn diagnostics_csv(run: &Run) -> String {
    let mut out = String::from("t,norm,mean_x,mean_p,sd_x,sd_p,left_mass,right_mass\n");
    for s in &run.snapshots {
        match s.report {
            Some(r) => {
                let _ = writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    r.t, r.norm, r.mean_x, r.mean_p, r.sd_x, r.sd_p, r.left_mass, r.right_mass
                );
            }
            None => {
                let _ = writeln!(out, "{:.16e},0,nan,nan,nan,nan,0,0", s.field.t);
            }
        }
    }
    out
}

fn manifest(run: &Run) -> String {
    let mut out = String::from("# lapwave run manifest\n");
    let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
    for (k, v) in run.scenario.to_entries() {
        let _ = writeln!(out, "{k} = {v}");
    }
    for (k, v) in &run.notes {
        let _ = writeln!(out, "{k} = {v}");
    }
    for (i, s) in run.snapshots.iter().enumerate() {
        let _ = writeln!(out, "snapshot.{i}.t = {}", num(s.field.t));
        let _ = writeln!(out, "snapshot.{i}.file = {}", snapshot_file(i));
        let _ = writeln!(out, "snapshot.{i}.max_error = {:e}", s.max_error);
        let _ = writeln!(out, "snapshot.{i}.flagged_points = {}", s.flagged.len());
        if !s.flagged.is_empty() {
            let xs: Vec<String> = s.flagged.iter().map(|x| num(*x)).collect();
            let _ = writeln!(out, "snapshot.{i}.flagged_x = {}", xs.join(","));
        }
    }
    let _ = writeln!(out, "status = {}", run.status());
    out
}

/// Gnuplot script drawing every snapshot. With `scale`, densities are
/// multiplied by it and the label says so.
fn gnuplot(run: &Run, scale: Option<f64>) -> String {
    let mut out = String::new();
    out.push_str("set terminal pngcairo size 1000,600\n");
    out.push_str("set output 'density.png'\n");
    out.push_str("set datafile separator ','\n");
    out.push_str("set key top left\n");
    out.push_str("set xlabel 'x'\n");
    let factor = scale.unwrap_or(1.0);
    match scale {
        Some(_) => out.push_str("set ylabel '|psi|^2 (pi alpha)^{1/2}'\n"),
        None => out.push_str("set ylabel '|psi|^2'\n"),
    }
    let _ = writeln!(out, "set title '{} ({})'", run.scenario.name, run.scenario.method);
    let curves: Vec<String> = run
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "'{}' every ::1 using 1:($4*{}) with lines title 't = {}'",
                snapshot_file(i),
                num(factor),
                num(s.field.t)
            )
        })
        .collect();
    let _ = writeln!(out, "plot {}", curves.join(", \\\n     "));
    out
}

/// Writes snapshots, diagnostics, manifest and plot script into `dir`.
pub fn write_run(run: &Run, dir: &Path, density_scale: Option<f64>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    };
    for (i, s) in run.snapshots.iter().enumerate() {
        write(&snapshot_file(i), snapshot_csv(&s.field))?;
    }
    write("diagnostics.csv", diagnostics_csv(run))?;
    write("manifest.txt", manifest(run))?;
    write("plot.gp", gnuplot(run, density_scale))?;
    Ok(())
}
