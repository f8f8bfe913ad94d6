//! One function per scenario. Each returns its tables and acceptance checks; nothing here
//! touches the filesystem.

use anyhow::{bail, Result};
use num_complex::Complex64;
use rayon::prelude::*;

use ohmlab_core::ac_measure::{ac_form_check, random_ac_pulse, spectral_measure};
use ohmlab_core::correlations::{decay_profile, fluctuation_inner, CurrentElement, TwoPointMatrix};
use ohmlab_core::disorder::{reduce_samples, sample_realization, self_averaging_diagnostic};
use ohmlab_core::dynamics::{evolve, padded_half_side_with, FieldCoupling};
use ohmlab_core::energetics::{
    current_densities, energy_cell, energy_increments, joule_cell, joule_predictions, EnergyDensities,
    EnergyLedger, EnergySweepConfig, FieldResponse,
};
use ohmlab_core::error::Error as CoreError;
use ohmlab_core::fock::{current_operator, Fock, Gibbs};
use ohmlab_core::lattice_fields::{
    build_box, build_range, check_ac, ProfileKind, SpatialProfile, VectorPotential, SITE_CAP,
};
use ohmlab_core::onebody::{diagonalize, fermi_symbol, EigenSystem};
use ohmlab_core::scalar::max_abs_diff;
use ohmlab_core::stats::{linear_fit, loglog_slope, mean, mean_stderr, median};
use ohmlab_core::transport::{
    green_kubo_check, kernel_for_realization, max_eigenvalue, realization_system, xi_d_l, xi_p_l,
};

use crate::config::{RunConfig, Scenario};
use crate::output::{Check, Outcome, Provenance, Table};

pub fn run_scenario(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.scenario {
        Scenario::Transport => transport(cfg),
        Scenario::Greenkubo => greenkubo(cfg),
        Scenario::Ohm => ohm(cfg),
        Scenario::Joule => joule(cfg),
        Scenario::Acmeasure => acmeasure(cfg),
        Scenario::Ergodic => ergodic(cfg),
        Scenario::Decay => decay(cfg),
    }
}

fn prov(cfg: &RunConfig, realization: Option<u64>, l: usize, eta: f64) -> Provenance {
    Provenance {
        seed: cfg.model.master_seed,
        realization,
        l,
        beta: cfg.model.beta,
        lambda: cfg.model.lambda,
        eta,
    }
}

fn fmax(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn fmin(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::INFINITY, f64::min)
}

/// The value farthest from `target`; NaN wins, so a degenerate fit cannot pass.
fn farthest(values: &[f64], target: f64) -> f64 {
    let dev = |x: f64| if x.is_nan() { f64::INFINITY } else { (x - target).abs() };
    values.iter().copied().reduce(|w, x| if dev(x) > dev(w) { x } else { w }).unwrap_or(f64::NAN)
}

fn indices(n: usize) -> Vec<u64> {
    (0..n as u64).collect()
}

/// Uniform lags `0, step, …` reaching at least `span`.
fn lag_grid(span: f64, step: f64) -> Vec<f64> {
    let n = (span / step).ceil().max(1.0) as usize;
    (0..=n).map(|i| step * i as f64).collect()
}

// ---------------------------------------------------------------------------
// transport

fn transport(cfg: &RunConfig) -> Result<Outcome> {
    let m = &cfg.model;
    let tol = &cfg.numerics.tolerances;
    let tg = cfg.numerics.tgrid.points();
    let spec = cfg.disorder();
    let d = m.d;
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|k| (0..d).map(move |q| (k, q))).collect();

    let mut per = Table::new("realizations", &["xi_p_zero", "xi_p_symmetry", "xi_p_max_eig", "xi_d_min", "xi_d_max"]);
    let mut cols = vec!["t".to_string()];
    for &(k, q) in &pairs {
        cols.push(format!("xi_p_{k}{q}_mean"));
        cols.push(format!("xi_p_{k}{q}_stderr"));
    }
    for k in 0..d {
        cols.push(format!("xi_d_{k}{k}_mean"));
        cols.push(format!("xi_d_{k}{k}_stderr"));
    }
    let mut ens = Table::with_columns("kernel", cols);

    let (mut zero, mut sym, mut neg) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    let mut range_ok = true;
    let mut iso = 0.0f64;
    let mut iso_deterministic = false;
    let (mut offdiag, mut diag) = (0.0f64, 0.0f64);
    for &l in &m.l_list {
        let kernels = indices(m.n)
            .into_par_iter()
            .map(|i| kernel_for_realization(&spec, d, m.beta, l, m.margin, i, &tg))
            .collect::<Result<Vec<_>, _>>()?;
        let mut samples = Vec::with_capacity(m.n);
        for (i, k) in kernels.iter().enumerate() {
            let z = k.xi_p[0].amax();
            let s = fmax(k.xi_p.iter().map(|x| (x - x.transpose()).amax()));
            let e = fmax(k.xi_p.iter().map(max_eigenvalue));
            let dmin = k.xi_d.min();
            let dmax = k.xi_d.max();
            zero = zero.max(z);
            sym = sym.max(s);
            neg = neg.max(e);
            range_ok &= dmin >= -tol.xi_d_bound && dmax <= tol.xi_d_bound;
            per.push(prov(cfg, Some(i as u64), l, 0.0), vec![z, s, e, dmin, dmax]);
            let mut flat: Vec<f64> = k.xi_p.iter().flat_map(|x| pairs.iter().map(move |&(a, b)| x[(a, b)])).collect();
            flat.extend((0..d).map(|a| k.xi_d[(a, a)]));
            samples.push(flat);
        }
        let (mu, se) = reduce_samples(&samples);
        let np = pairs.len();
        for (ti, &t) in tg.iter().enumerate() {
            let mut row = vec![t];
            for j in 0..np {
                row.push(mu[ti * np + j]);
                row.push(se[ti * np + j]);
            }
            for a in 0..d {
                row.push(mu[tg.len() * np + a]);
                row.push(se[tg.len() * np + a]);
            }
            ens.push(prov(cfg, None, l, 0.0), row);
        }
        // scalarity of the ensemble mean, in units of the standard error
        for ti in 0..tg.len() {
            let at = |a: usize, b: usize| {
                let j = ti * np + a * d + b;
                (mu[j], se[j])
            };
            for a in 0..d {
                for b in 0..d {
                    if a == b {
                        continue;
                    }
                    let (x, s) = at(a, b);
                    let (xa, sa) = at(a, a);
                    let (xb, sb) = at(b, b);
                    offdiag = offdiag.max(x.abs());
                    diag = diag.max(xa.abs());
                    for (dev, sigma) in [(x.abs(), s), ((xa - xb).abs(), (sa * sa + sb * sb).sqrt())] {
                        if sigma > 0.0 {
                            iso = iso.max(dev / sigma);
                        } else if dev > 0.0 {
                            iso_deterministic = true;
                            iso = f64::INFINITY;
                        }
                    }
                }
            }
        }
    }

    let mut out = Outcome::default();
    out.checks.push(Check::at_most("xi_p_zero_residual", 1, zero, tol.xi_p_zero));
    out.checks.push(Check::at_most("xi_p_symmetry_residual", 1, sym, tol.xi_p_symmetry));
    out.checks.push(Check::at_most("xi_p_negativity_max_eig", 1, neg, tol.xi_p_negativity));
    out.checks.push(Check::holds("xi_d_range_ok", 1, range_ok));
    if d >= 2 {
        out.info.insert("xi_p_offdiag_max".into(), offdiag);
        out.info.insert("xi_p_offdiag_relative".into(), offdiag / diag.max(f64::MIN_POSITIVE));
        if m.lambda > 0.0 {
            out.checks.push(
                Check::at_most("xi_p_isotropy_sigmas", 2, iso, tol.sigmas)
                    .with_note("largest off-diagonal entry or diagonal spread of E[Ξ_p], in standard errors"),
            );
        } else {
            out.info.insert("xi_p_isotropy_sigmas".into(), iso);
            out.warnings.push(format!(
                "isotropy not asserted at λ = 0: the ensemble is deterministic{}",
                if iso_deterministic { " and carries the finite-l boundary term" } else { "" }
            ));
        }
    }
    out.tables = vec![per, ens];
    Ok(out)
}

// ---------------------------------------------------------------------------
// greenkubo

fn greenkubo(cfg: &RunConfig) -> Result<Outcome> {
    let m = &cfg.model;
    let tg = cfg.numerics.tgrid.points();
    let spec = cfg.disorder();
    let l = m.l_list[0];
    let residuals = indices(m.n)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let eig = realization_system::<f64>(&spec, m.d, l + m.margin, i)?;
            let mut worst = 0.0f64;
            for k in 0..m.d {
                for q in 0..m.d {
                    worst = worst.max(green_kubo_check(&eig, m.beta, l, &tg, k, q)?);
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new("green_kubo", &["residual"]);
    for (i, &r) in residuals.iter().enumerate() {
        table.push(prov(cfg, Some(i as u64), l, 0.0), vec![r]);
    }
    let mut out = Outcome::default();
    out.checks.push(Check::at_most(
        "green_kubo_residual",
        3,
        fmax(residuals.iter().copied()),
        cfg.numerics.tolerances.green_kubo,
    ));
    out.tables.push(table);
    Ok(out)
}

// ---------------------------------------------------------------------------
// ohm

struct OhmRealization {
    /// Per `η`: `(err_p, err_d, drift)`.
    errors: Vec<(f64, f64, f64)>,
    rows: Vec<(f64, Vec<f64>)>,
    magnus: Option<(f64, f64, f64)>,
}

/// Field of unit strength at scale `l + 1` with the indicator profile, so every averaged
/// bond sees the same field.
fn ohm_field(cfg: &RunConfig, l: usize) -> Result<VectorPotential> {
    Ok(VectorPotential::new(
        cfg.field.pulse.clone(),
        SpatialProfile::new(ProfileKind::Indicator, cfg.model.d),
        cfg.direction(),
        (l + 1) as f64,
        1.0,
    )?)
}

fn ohm_realization(cfg: &RunConfig, l: usize, index: u64, magnus: bool) -> Result<OhmRealization> {
    let m = &cfg.model;
    let dt = cfg.numerics.dt;
    let tg = cfg.numerics.tgrid.points();
    let spec = cfg.disorder();
    let vp = ohm_field(cfg, l)?;
    let t0 = vp.t0();
    let t_end = tg.last().copied().unwrap_or(0.0).max(t0);
    let half = padded_half_side_with(&vp, t_end - t0, cfg.v_buf()).max(l + 2);
    let bx = build_box(m.d, half)?;
    let r = sample_realization::<f64>(&spec, &bx, index);
    let base = FieldCoupling::new(&bx, &r, &spec, &vp)?.base;
    let eig = diagonalize(&base)?;
    let d0 = fermi_symbol(&eig, m.beta)?;
    let response = FieldResponse::new(&eig, m.beta, &vp, l)?;
    let xi_d = xi_d_l(&d0, l, &bx)?;
    let w = cfg.direction();
    let checkpoints: Vec<f64> = tg.iter().copied().filter(|&t| t >= t0).collect();

    let mut errors = Vec::new();
    let mut rows = Vec::new();
    for &eta in cfg.field.eta_list.iter().filter(|&&e| e != 0.0) {
        let c = FieldCoupling::new(&bx, &r, &spec, &vp.with_eta(eta))?;
        let run = evolve(c, t0, t_end, dt, &checkpoints)?;
        let cur = current_densities(&run, &d0, l, &tg)?;
        let (mut ep, mut ed) = (0.0f64, 0.0f64);
        for (i, &t) in tg.iter().enumerate() {
            let lin_p = response.paramagnetic(t);
            let a = vp.pulse.primitive(t);
            for k in 0..m.d {
                let lin_d = xi_d[(k, k)] * w[k] * a;
                let (jp, jd) = (cur.j_p[i][k] / eta, cur.j_d[i][k] / eta);
                ep = ep.max((jp - lin_p[k]).abs());
                ed = ed.max((jd - lin_d).abs());
                rows.push((eta, vec![t, k as f64, jp, jd, lin_p[k], lin_d]));
            }
        }
        errors.push((ep, ed, run.drift));
    }

    let magnus = if magnus {
        // self-convergence of the propagator at the strongest field
        let eta = cfg.field.eta_list[0];
        let c = FieldCoupling::new(&bx, &r, &spec, &vp.with_eta(eta))?;
        let u = |h: f64| -> Result<_> {
            Ok(evolve(c.clone(), t0, t_end, h, &[t_end])?.checkpoint(t_end)?.clone())
        };
        let reference = u(dt / 4.0)?;
        let e1 = max_abs_diff(&u(2.0 * dt)?, &reference);
        let e2 = max_abs_diff(&u(dt)?, &reference);
        Some(((e1 / e2).log2(), e1, e2))
    } else {
        None
    };
    Ok(OhmRealization { errors, rows, magnus })
}

fn ohm(cfg: &RunConfig) -> Result<Outcome> {
    let m = &cfg.model;
    let tol = &cfg.numerics.tolerances;
    let l = m.l_list[0];
    let etas: Vec<f64> = cfg.field.eta_list.iter().copied().filter(|&e| e != 0.0).collect();
    if etas.len() < 2 {
        bail!(CoreError::Degenerate("Ohm fit needs at least two nonzero field strengths".into()));
    }
    let reals = indices(m.n)
        .into_par_iter()
        .map(|i| ohm_realization(cfg, l, i, i == 0))
        .collect::<Result<Vec<_>>>()?;

    let mut currents = Table::new("currents", &["t", "k", "j_p_over_eta", "j_d_over_eta", "lin_p", "lin_d"]);
    let mut fits = Table::new("ohm_errors", &["err_p", "err_d", "drift"]);
    let x: Vec<f64> = etas.iter().map(|e| e.abs()).collect();
    let (mut slopes_p, mut slopes_d) = (Vec::new(), Vec::new());
    let mut drift = 0.0f64;
    for (i, r) in reals.iter().enumerate() {
        for (eta, row) in &r.rows {
            currents.push(prov(cfg, Some(i as u64), l, *eta), row.clone());
        }
        for (&eta, &(ep, ed, dr)) in etas.iter().zip(&r.errors) {
            fits.push(prov(cfg, Some(i as u64), l, eta), vec![ep, ed, dr]);
            drift = drift.max(dr);
        }
        slopes_p.push(loglog_slope(&x, &r.errors.iter().map(|e| e.0).collect::<Vec<_>>()));
        slopes_d.push(loglog_slope(&x, &r.errors.iter().map(|e| e.1).collect::<Vec<_>>()));
    }
    let (worst_p, worst_d) = (farthest(&slopes_p, 1.0), farthest(&slopes_d, 1.0));
    let mut out = Outcome::default();
    out.checks.push(
        Check::within("ohm_slope_paramagnetic", 4, worst_p, 1.0, tol.slope)
            .with_note("worst realization; error against the same-realization first-order current"),
    );
    out.checks.push(
        Check::within("ohm_slope_diamagnetic", 4, worst_d, 1.0, tol.slope)
            .with_note("worst realization; error against (Ξ_d w)∫𝓔"),
    );
    out.checks.push(Check::at_most("unitarity_drift", 11, drift, tol.drift));
    let (order, e1, e2) = reals[0].magnus.expect("realization 0 runs the convergence study");
    out.checks.push(Check::within("magnus_order", 11, order, 2.0, tol.magnus_order));
    out.info.insert("magnus_error_2dt".into(), e1);
    out.info.insert("magnus_error_dt".into(), e2);
    if cfg.field.profile != ProfileKind::Indicator {
        out.warnings.push("field.profile ignored: Ohm runs use the indicator profile at scale l + 1".into());
    }
    out.tables = vec![currents, fits];
    Ok(out)
}

// ---------------------------------------------------------------------------
// joule

fn sweep_config(cfg: &RunConfig, index: u64, l: usize) -> EnergySweepConfig {
    let m = &cfg.model;
    EnergySweepConfig {
        spec: cfg.disorder(),
        index,
        d: m.d,
        beta: m.beta,
        pulse: cfg.field.pulse.clone(),
        profile: cfg.field.profile,
        direction: cfg.direction(),
        eta_list: cfg.field.eta_list.iter().copied().filter(|&e| e != 0.0).collect(),
        l_list: vec![l],
        dt: cfg.numerics.dt,
        tgrid: cfg.numerics.tgrid.points(),
        v_buf: cfg.v_buf(),
        antisymmetrize: false,
    }
}

/// Ledger of one realization with the evolution and trace box of half-side `half`.
fn ledger_on_box(sc: &EnergySweepConfig, eta: f64, l: usize, half: usize) -> Result<EnergyLedger<f64>> {
    let vp = VectorPotential::new(sc.pulse.clone(), SpatialProfile::new(sc.profile, sc.d), sc.direction.clone(), l as f64, eta)?;
    let t0 = vp.t0();
    let t_end = sc.tgrid.iter().copied().fold(t0, f64::max);
    let bx = build_box(sc.d, half)?;
    let r = sample_realization::<f64>(&sc.spec, &bx, sc.index);
    let c = FieldCoupling::new(&bx, &r, &sc.spec, &vp)?;
    let d0 = fermi_symbol(&diagonalize(&c.base)?, sc.beta)?;
    let checkpoints: Vec<f64> = sc.tgrid.iter().copied().filter(|&t| t >= t0).collect();
    let run = evolve(c, t0, t_end, sc.dt, &checkpoints)?;
    Ok(energy_increments(&run, &d0, half, &sc.tgrid)?)
}

/// Largest change of each density channel, relative to that channel's sup norm.
fn relative_change(a: &EnergyDensities<f64>, b: &EnergyDensities<f64>) -> f64 {
    let mut worst = 0.0f64;
    for (x, y) in [(&a.s, &b.s), (&a.p, &b.p), (&a.ip, &b.ip), (&a.id, &b.id)] {
        let scale = fmax(x.iter().map(|v| v.abs()));
        let diff = fmax(x.iter().zip(y.iter()).map(|(u, v)| (u - v).abs()));
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        } else if diff > 0.0 {
            worst = f64::INFINITY;
        }
    }
    worst
}

struct JouleRow {
    index: u64,
    l: usize,
    measured_ip: f64,
    predicted_ip: f64,
    uniform_ip: f64,
    /// Criterion-6 quantities after the pulse: `max |id|, |p|` measured, and the prediction
    /// identities.
    endgame: Option<(f64, f64, f64)>,
    ledgers: Vec<(f64, EnergyLedger<f64>)>,
}

fn joule_realization(cfg: &RunConfig, index: u64, l: usize) -> Result<JouleRow> {
    let m = &cfg.model;
    let sc = sweep_config(cfg, index, l);
    let tg = &sc.tgrid;
    let t0 = sc.pulse.support().0;
    let t_end = tg.iter().copied().fold(t0, f64::max);
    let kg = lag_grid(t_end - t0, cfg.numerics.kernel_step);
    let (cell, pred) = joule_cell::<f64>(&sc, l, &kg)?;
    let last = tg.len() - 1;

    let mut ledgers = Vec::new();
    for &eta in &sc.eta_list[..sc.eta_list.len() - 1] {
        ledgers.push((eta, energy_cell::<f64>(&sc, eta, l)?.ledger));
    }
    ledgers.push((cell.eta, cell.ledger.clone()));

    // same prediction with the kernel averaged uniformly over Λ_l
    let uniform = kernel_for_realization(&sc.spec, m.d, m.beta, l, m.margin, index, &kg)?;
    let vp = VectorPotential::new(sc.pulse.clone(), SpatialProfile::new(sc.profile, sc.d), sc.direction.clone(), l as f64, cell.eta)?;
    let upred = joule_predictions(&uniform, &vp, tg)?;

    let endgame = if sc.pulse.is_ac() {
        let t1 = check_ac(&sc.pulse);
        let after: Vec<usize> = (0..tg.len()).filter(|&i| tg[i] >= t1).collect();
        let dens = &cell.densities;
        let measured = fmax(after.iter().map(|&i| dens.id[i].abs().max(dens.p[i].abs())));
        let identity = fmax(after.iter().map(|&i| {
            (pred.e_lin[i] - pred.s[i]).abs().max((pred.s[i] - pred.ip[i]).abs())
        }));
        let floor = fmin(after.iter().map(|&i| pred.ip[i]));
        Some((measured, identity, floor))
    } else {
        None
    };
    Ok(JouleRow {
        index,
        l,
        measured_ip: cell.densities.ip[last],
        predicted_ip: pred.ip[last],
        uniform_ip: upred.ip[last],
        endgame,
        ledgers,
    })
}

fn joule(cfg: &RunConfig) -> Result<Outcome> {
    let m = &cfg.model;
    let tol = &cfg.numerics.tolerances;
    let tg = cfg.numerics.tgrid.points();
    let jobs: Vec<(usize, u64)> = m.l_list.iter().flat_map(|&l| indices(m.n).into_iter().map(move |i| (l, i))).collect();
    let rows = jobs.par_iter().map(|&(l, i)| joule_realization(cfg, i, l)).collect::<Result<Vec<_>>>()?;

    let mut ledger_t = Table::new("ledger", &["t", "s", "p", "ip", "id", "s_density", "p_density", "ip_density", "id_density"]);
    let mut joule_t = Table::new("joule", &["measured_ip", "predicted_ip", "relative_error", "uniform_ip", "uniform_relative_error"]);
    let (mut balance, mut heat) = (0.0f64, f64::INFINITY);
    for r in &rows {
        for (eta, led) in &r.ledgers {
            balance = balance.max(led.balance_residual);
            heat = heat.min(fmin(led.s.iter().copied()));
            let dens = led.densities();
            for (i, &t) in tg.iter().enumerate() {
                ledger_t.push(
                    prov(cfg, Some(r.index), r.l, *eta),
                    vec![t, led.s[i], led.p[i], led.ip[i], led.id[i], dens.s[i], dens.p[i], dens.ip[i], dens.id[i]],
                );
            }
        }
        let rel = (r.measured_ip - r.predicted_ip).abs() / r.predicted_ip.abs();
        let urel = (r.measured_ip - r.uniform_ip).abs() / r.uniform_ip.abs();
        let eta = *cfg.field.eta_list.last().unwrap();
        joule_t.push(prov(cfg, Some(r.index), r.l, eta), vec![r.measured_ip, r.predicted_ip, rel, r.uniform_ip, urel]);
    }

    let mut out = Outcome::default();
    out.checks.push(Check::at_most("energy_balance_residual", 5, balance, tol.balance));
    out.checks.push(Check::at_least("heat_min", 5, heat, -tol.heat_floor));
    if cfg.field.pulse.is_ac() {
        let eg: Vec<(f64, f64, f64)> = rows.iter().filter_map(|r| r.endgame).collect();
        out.checks.push(Check::at_most("ac_endgame_id_p_max", 6, fmax(eg.iter().map(|e| e.0)), tol.ac_endgame));
        out.checks.push(Check::at_most("ac_endgame_identity_residual", 6, fmax(eg.iter().map(|e| e.1)), tol.identity));
        out.checks.push(Check::at_least("ac_endgame_heat_min", 6, fmin(eg.iter().map(|e| e.2)), -tol.heat_floor));
    } else {
        out.warnings.push("pulse is not AC: endgame checks skipped".into());
    }

    // ensemble mean of the per-realization relative error at the final time
    let err_at = |l: usize, uniform: bool| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.l == l)
            .map(|r| {
                let p = if uniform { r.uniform_ip } else { r.predicted_ip };
                (r.measured_ip - p).abs() / p.abs()
            })
            .collect();
        mean(&v)
    };
    let errs: Vec<f64> = m.l_list.iter().map(|&l| err_at(l, false)).collect();
    for (&l, &e) in m.l_list.iter().zip(&errs) {
        out.info.insert(format!("joule_relative_error_l{l}"), e);
        out.info.insert(format!("joule_uniform_kernel_relative_error_l{l}"), err_at(l, true));
    }
    out.checks.push(
        Check::at_most("joule_relative_error", 7, errs[0], tol.joule_relative)
            .with_note(format!("ensemble mean at l = {}, final time", m.l_list[0])),
    );
    for (w, e) in m.l_list.windows(2).zip(errs.windows(2)) {
        if w[1] == 2 * w[0] {
            out.checks.push(Check::at_most(&format!("joule_error_ratio_l{}_l{}", w[0], w[1]), 7, e[1] / e[0], tol.joule_ratio));
        }
    }

    // trace truncation: doubling the evolution box must not move the densities
    let sc = sweep_config(cfg, 0, m.l_list[0]);
    let eta = *sc.eta_list.last().unwrap();
    let vp = VectorPotential::new(sc.pulse.clone(), SpatialProfile::new(sc.profile, sc.d), sc.direction.clone(), m.l_list[0] as f64, eta)?;
    let t0 = vp.t0();
    let t_end = tg.iter().copied().fold(t0, f64::max);
    let half = padded_half_side_with(&vp, t_end - t0, sc.v_buf);
    let (a, b) = rayon::join(
        || ledger_on_box(&sc, eta, m.l_list[0], half),
        || ledger_on_box(&sc, eta, m.l_list[0], 2 * half),
    );
    let change = relative_change(&a?.densities(), &b?.densities());
    out.checks.push(Check::at_most("box_doubling_change", 11, change, tol.box_doubling));
    out.tables = vec![ledger_t, joule_t];
    Ok(out)
}

// ---------------------------------------------------------------------------
// acmeasure

fn interpolate(grid: &[f64], values: &[f64], t: f64) -> Result<f64, CoreError> {
    let s = t.abs();
    let hi = grid.iter().position(|&u| u >= s).ok_or_else(|| CoreError::Contract(format!("lag {s} beyond the kernel grid")))?;
    if hi == 0 || grid[hi] == s {
        return Ok(values[hi]);
    }
    let w = (s - grid[hi - 1]) / (grid[hi] - grid[hi - 1]);
    Ok(values[hi - 1] * (1.0 - w) + values[hi] * w)
}

fn acmeasure(cfg: &RunConfig) -> Result<Outcome> {
    let m = &cfg.model;
    let tol = &cfg.numerics.tolerances;
    let tg = cfg.numerics.tgrid.points();
    let spec = cfg.disorder();
    let l = m.l_list[0];
    let systems = indices(m.n)
        .into_par_iter()
        .map(|i| realization_system::<f64>(&spec, m.d, l + m.margin, i))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Outcome::default();
    let measure = match spectral_measure(&systems, m.beta, l, 0, cfg.numerics.bin_width, &tg) {
        Ok(ms) => ms,
        Err(CoreError::Calibration(msg)) => {
            out.checks.push(Check::holds("reconstruction_residual", 8, false).with_note(msg));
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    };
    out.checks.push(Check::at_least("measure_min_weight", 8, fmin(measure.weights.iter().copied()), -tol.weight_floor));
    out.checks.push(Check::at_most("reconstruction_residual", 8, measure.calibration_residual, tol.reconstruction));
    out.info.insert("measure_mass".into(), measure.mass());
    out.info.insert("measure_symmetry_residual".into(), measure.symmetry_residual());
    out.info.insert("bin_width".into(), measure.bin_width());

    let pulses: Vec<_> = cfg.field.ac_seeds.iter().map(|&s| (s, random_ac_pulse(s))).collect();
    let span = pulses.iter().map(|(_, p)| p.support().1 - p.support().0).fold(0.0, f64::max);
    let kg = lag_grid(span, cfg.numerics.kernel_step);
    let end = pulses.iter().map(|(_, p)| p.support().1).fold(0.0, f64::max);
    let nodes = lag_grid(end, cfg.numerics.kernel_step);
    let per = systems
        .par_iter()
        .map(|e| xi_p_l(e, m.beta, l, &kg).map(|v| v.iter().map(|x| x[(0, 0)]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;
    let (sigma_mean, _) = reduce_samples(&per);
    let sigma = |t: f64| interpolate(&kg, &sigma_mean, t);

    let mut forms = Table::new("quadratic_forms", &["pulse_seed", "lhs", "rhs", "relative_gap"]);
    let (mut gap, mut lhs_min) = (0.0f64, f64::INFINITY);
    for (seed, p) in &pulses {
        let c = ac_form_check(&measure, &sigma, p, &nodes)?;
        gap = gap.max(c.relative_gap());
        lhs_min = lhs_min.min(c.lhs);
        forms.push(prov(cfg, None, l, 0.0), vec![*seed as f64, c.lhs, c.rhs, c.relative_gap()]);
    }
    out.checks.push(Check::at_most("dual_form_relative_gap", 8, gap, tol.dual_form));
    out.checks.push(Check::at_least("form_lhs_min", 8, lhs_min, -tol.form_floor));

    let mut bins = Table::new("measure", &["nu_center", "weight"]);
    for (c, w) in measure.centers().iter().zip(&measure.weights) {
        bins.push(prov(cfg, None, l, 0.0), vec![*c, *w]);
    }
    let mut recon = Table::new("reconstruction", &["t", "atoms", "binned"]);
    for &t in &tg {
        recon.push(prov(cfg, None, l, 0.0), vec![t, measure.reconstruct_atoms(t), measure.reconstruct(t)]);
    }
    out.tables = vec![bins, recon, forms];
    Ok(out)
}

// ---------------------------------------------------------------------------
// ergodic

fn ergodic(cfg: &RunConfig) -> Result<Outcome> {
    let m = &cfg.model;
    let tol = &cfg.numerics.tolerances;
    let spec = cfg.disorder();
    let mut out = Outcome::default();
    let mut var_t = Table::new("self_averaging", &["k", "volume", "mean", "variance"]);
    let mut slopes = Vec::new();
    for k in 0..m.d {
        let obs = |r: &ohmlab_core::disorder::Realization<f64>, bx: &ohmlab_core::lattice_fields::LatticeBox| {
            let eig = realization_system::<f64>(&spec, m.d, bx.l() + m.margin, r.index)?;
            let sym = fermi_symbol(&eig, m.beta)?;
            Ok(xi_d_l(&sym, bx.l(), &eig.bx)?[(k, k)])
        };
        let tab = self_averaging_diagnostic(obs, &spec, m.d, &m.l_list, m.n)?;
        for row in &tab.rows {
            var_t.push(prov(cfg, None, row.l, 0.0), vec![k as f64, row.volume as f64, row.mean, row.variance]);
        }
        slopes.push(tab.slope);
    }
    out.checks.push(Check::within("xi_d_variance_slope", 10, farthest(&slopes, -1.0), -1.0, tol.slope));

    // equilibrium bond currents of each realization
    let mut th = Table::new("thermal_current", &["k", "j_th"]);
    let mut bias = f64::NEG_INFINITY;
    let mut medians = Vec::new();
    for &l in &m.l_list {
        let vals = indices(m.n)
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let half = l + m.margin;
                let bx = build_box(m.d, half)?;
                let r = sample_realization::<f64>(&spec, &bx, i);
                let vp = VectorPotential::new(
                    cfg.field.pulse.clone(),
                    SpatialProfile::new(cfg.field.profile, m.d),
                    cfg.direction(),
                    l as f64,
                    0.0,
                )?;
                let c = FieldCoupling::new(&bx, &r, &spec, &vp)?;
                let d0 = fermi_symbol(&diagonalize(&c.base)?, m.beta)?;
                let run = evolve(c, 0.0, 0.0, cfg.numerics.dt, &[0.0])?;
                Ok(current_densities(&run, &d0, l, &[0.0])?.j_th)
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, v) in vals.iter().enumerate() {
            for (k, &j) in v.iter().enumerate() {
                th.push(prov(cfg, Some(i as u64), l, 0.0), vec![k as f64, j]);
            }
        }
        for k in 0..m.d {
            let col: Vec<f64> = vals.iter().map(|v| v[k]).collect();
            let (mu, se) = mean_stderr(&col);
            bias = bias.max(mu.abs() - tol.sigmas * se);
        }
        let mags: Vec<f64> = vals.iter().flat_map(|v| v.iter().map(|x| x.abs())).collect();
        medians.push(median(&mags));
    }
    for (&l, &md) in m.l_list.iter().zip(&medians) {
        out.info.insert(format!("thermal_current_median_l{l}"), md);
    }
    out.checks.push(
        Check::at_most("thermal_current_mean_excess", 9, bias, 0.0)
            .with_note("max over l, k of |E[J_th]| − sigmas·stderr"),
    );
    let growth = fmax(medians.windows(2).map(|w| w[1] - w[0]));
    out.checks.push(
        Check::at_most("thermal_current_median_growth", 9, if medians.len() < 2 { 0.0 } else { growth }, 0.0)
            .with_note("largest increase of the per-realization median |J_th| between consecutive l"),
    );
    out.tables = vec![var_t, th];
    Ok(out)
}

// ---------------------------------------------------------------------------
// decay

/// Smallest box used for the many-body comparison: a handful of sites around the origin.
fn wick_system(cfg: &RunConfig) -> Result<EigenSystem<f64>> {
    let d = cfg.model.d;
    let bx = match d {
        1 => build_box(1, 2)?,
        2 => build_box(2, 1)?,
        _ => build_range(d, 0, 1, SITE_CAP)?,
    };
    let spec = cfg.disorder();
    let r = sample_realization::<f64>(&spec, &bx, 0);
    Ok(diagonalize(&ohmlab_core::onebody::hamiltonian(&bx, &r, &spec, None, 0.0)?)?)
}

fn probe_elements(d: usize) -> Vec<CurrentElement<f64>> {
    let origin = vec![0i64; d];
    let unit = |k: usize| {
        let mut e = origin.clone();
        e[k] = 1;
        e
    };
    let mut v: Vec<CurrentElement<f64>> = (0..d).map(|k| CurrentElement::bond(unit(k), origin.clone())).collect();
    v.push(CurrentElement::General {
        psi1: vec![(origin.clone(), Complex64::new(0.3, 0.2)), (unit(0), Complex64::new(-1.0, 0.0))],
        psi2: vec![(unit(0), Complex64::new(0.5, -0.7)), (origin.clone(), Complex64::new(0.1, 0.0))],
    });
    v
}

fn wick_residual(cfg: &RunConfig) -> Result<f64> {
    let eig = wick_system(cfg)?;
    let beta = cfg.model.beta;
    let fock = Fock::new(eig.dim());
    let h = eig.spectral(&eig.values.iter().map(|&e| Complex64::new(e, 0.0)).collect::<Vec<_>>());
    let gibbs = Gibbs::new(&fock, &h, beta);
    let elems = probe_elements(cfg.model.d);
    let mut worst = 0.0f64;
    for a in &elems {
        for b in &elems {
            let fa = current_operator(&fock, &eig.bx, a);
            let fb = current_operator(&fock, &eig.bx, b);
            let truncated = gibbs.expect(&(fa.adjoint() * &fb)) - gibbs.expect(&fa).conj() * gibbs.expect(&fb);
            let got = fluctuation_inner(&eig, beta, 0, a, b)?;
            worst = worst.max((got - truncated).norm());
        }
    }
    Ok(worst)
}

fn decay(cfg: &RunConfig) -> Result<Outcome> {
    let m = &cfg.model;
    let tol = &cfg.numerics.tolerances;
    let spec = cfg.disorder();
    let l = m.l_list[0];
    let elems = probe_elements(m.d);
    let per = indices(m.n)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, Vec<(usize, f64)>)> {
            let eig = realization_system::<f64>(&spec, m.d, l + m.margin, i)?;
            let zero = TwoPointMatrix::new(&eig, m.beta, 0.0, 0.0)?;
            let full = TwoPointMatrix::new(&eig, m.beta, 0.0, m.beta)?;
            let kms = fmax((0..eig.dim()).map(|x| (zero.value(x, x) + full.value(x, x) - 1.0).norm()));
            let mut form = f64::INFINITY;
            for scale in [0, l] {
                for e in &elems {
                    form = form.min(fluctuation_inner(&eig, m.beta, scale, e, e)?.re);
                }
            }
            let rows = decay_profile(&eig, m.beta, 0.0, 0.5 * m.beta)?;
            Ok((kms, form, rows.iter().map(|r| (r.radius, r.max_abs)).collect()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut kms_t = Table::new("kms", &["kms_residual", "fluctuation_min"]);
    let mut prof = Table::new("decay_profile", &["radius", "max_abs"]);
    let mut rates = Vec::new();
    for (i, (kms, form, rows)) in per.iter().enumerate() {
        kms_t.push(prov(cfg, Some(i as u64), l, 0.0), vec![*kms, *form]);
        for &(r, a) in rows {
            prof.push(prov(cfg, Some(i as u64), l, 0.0), vec![r as f64, a]);
        }
        let tail: Vec<&(usize, f64)> = rows.iter().skip(1).filter(|r| r.1 > 0.0).collect();
        if tail.len() >= 2 {
            let x: Vec<f64> = tail.iter().map(|r| r.0 as f64).collect();
            let y: Vec<f64> = tail.iter().map(|r| r.1.ln()).collect();
            rates.push(-linear_fit(&x, &y).0);
        }
    }
    let mut out = Outcome::default();
    out.checks.push(Check::at_most("kms_edge_residual", 12, fmax(per.iter().map(|p| p.0)), tol.kms));
    out.checks.push(Check::at_least("fluctuation_min", 11, fmin(per.iter().map(|p| p.1)), -tol.fluctuation_floor));
    out.checks.push(Check::at_most("wick_residual", 11, wick_residual(cfg)?, tol.wick));
    if !rates.is_empty() {
        out.info.insert("decay_rate_mean".into(), mean(&rates));
    }
    out.tables = vec![kms_t, prof];
    Ok(out)
}
