//! Current densities of the driven state, their linear response, the energy increments and
//! the Joule-type predictions built from the transport kernels.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::disorder::{sample_realization, DisorderSpec};
use crate::dynamics::{evolve, evolve_symbol, padded_half_side_with, EvolutionRun, FieldCoupling};
use crate::error::{contract, geometry, Result};
use crate::lattice_fields::{
    build_box, gauss_legendre, nearest_bonds, Bond, BondMode, LatticeBox, ProfileKind, Pulse,
    SpatialProfile, VectorPotential,
};
use crate::onebody::{diagonalize, fermi_symbol, EigenSystem, Symbol};
use crate::scalar::{cis, cr, CMat, C};
use crate::stats::linear_fit;
use crate::transport::{averaged_current, CommutatorKernel, Provenance, TransportKernel};
use crate::Scalar;

fn state_at<T: Scalar>(run: &EvolutionRun<T>, d0: &Symbol<T>, t: T) -> Result<CMat<T>> {
    if t <= run.t0 {
        Ok(d0.mat.clone())
    } else {
        Ok(evolve_symbol(d0, run, t)?.mat)
    }
}

fn bond_pair(bx: &LatticeBox, b: &Bond) -> Result<(usize, usize)> {
    match (bx.index(&b.from), bx.index(&b.to)) {
        (Some(i), Some(j)) => Ok((i, j)),
        _ => Err(geometry("averaging box plus one bond does not fit in the evolution box")),
    }
}

fn volume<T: Scalar>(d: usize, l: usize) -> Result<T> {
    Ok(T::from_usize(build_box(d, l)?.len()).unwrap())
}

// ---------------------------------------------------------------------------
// Currents.

#[derive(Clone, Debug)]
pub struct CurrentReport<T: Scalar> {
    pub tgrid: Vec<T>,
    /// Equilibrium bond average, one entry per direction.
    pub j_th: Vec<T>,
    /// `j_p[i][k]` at `tgrid[i]`.
    pub j_p: Vec<Vec<T>>,
    pub j_d: Vec<Vec<T>>,
    /// `max_{t,k}` gap between the summed densities and the velocity trace on `Λ_l`.
    pub trace_check_residual: T,
}

impl<T: Scalar> CurrentReport<T> {
    pub fn total(&self, i: usize) -> Vec<T> {
        (0..self.j_th.len()).map(|k| self.j_th[k] + self.j_p[i][k] + self.j_d[i][k]).collect()
    }
}

/// Bond averages over `Λ_l` of `I_(x+e_k, x)` in `d0` and `d_t − d0`, and of the
/// field-dependent observable `−2 Im((e^{−iθ} − 1) a*_x a_{x+e_k})`.
pub fn current_densities<T: Scalar>(
    run: &EvolutionRun<T>,
    d0: &Symbol<T>,
    l: usize,
    tgrid: &[T],
) -> Result<CurrentReport<T>> {
    let bx = &run.coupling.base.bx;
    let vp = run.coupling.vp();
    let d = bx.d();
    let avg = build_box(d, l)?;
    let vol = T::from_usize(avg.len()).unwrap();
    let two = T::lit(2.0);
    let mut bonds = vec![Vec::with_capacity(avg.len()); d];
    for (k, list) in bonds.iter_mut().enumerate() {
        for x in avg.sites() {
            let b = Bond::backward(x, k);
            let (i, j) = bond_pair(bx, &b)?;
            list.push((i, j, T::lit(vp.bond_weight(&b)?)));
        }
    }
    let j_th: Vec<T> = bonds
        .iter()
        .map(|list| list.iter().fold(T::zero(), |a, &(i, j, _)| a - two * d0.mat[(i, j)].im) / vol)
        .collect();
    let inside: Vec<usize> = (0..bx.len()).filter(|&i| avg.contains(bx.site(i))).collect();

    let mut j_p = Vec::with_capacity(tgrid.len());
    let mut j_d = Vec::with_capacity(tgrid.len());
    let mut residual = T::zero();
    for &t in tgrid {
        let dt = state_at(run, d0, t)?;
        let amp = run.coupling.amplitude(t);
        let h = run.coupling.at(t);
        let mut jp = Vec::with_capacity(d);
        let mut jd = Vec::with_capacity(d);
        for k in 0..d {
            let (mut p, mut dia) = (T::zero(), T::zero());
            for &(i, j, g) in &bonds[k] {
                let delta = dt[(i, j)] - d0.mat[(i, j)];
                p -= two * delta.im;
                let phase = cis(-amp * g) - cr(T::one());
                dia -= two * (phase * dt[(i, j)]).im;
            }
            jp.push(p / vol);
            jd.push(dia / vol);
            // −|Λ_l|⁻¹ Tr[d_t P i[H, X_k] P], with i[H, X_k]_{ab} = i H_ab (x_b − x_a)
            let mut tr = C::new(T::zero(), T::zero());
            for &a in &inside {
                for &b in &inside {
                    let dx = bx.site(b)[k] - bx.site(a)[k];
                    if dx != 0 && h[(a, b)] != C::new(T::zero(), T::zero()) {
                        let c = C::new(T::zero(), T::from_i64(dx).unwrap()) * h[(a, b)];
                        tr += dt[(b, a)] * c;
                    }
                }
            }
            let total = j_th[k] + jp[k] + jd[k];
            residual = residual.max((total + tr.re / vol).abs());
        }
        j_p.push(jp);
        j_d.push(jd);
    }
    Ok(CurrentReport { tgrid: tgrid.to_vec(), j_th, j_p, j_d, trace_check_residual: residual })
}

// ---------------------------------------------------------------------------
// Linear response.

/// First-order currents of one realization under the actual field shape: the commutator
/// kernel of `J_k` against the field's own perturbation `∂H/∂(η𝒜)`.
#[derive(Clone, Debug)]
pub struct FieldResponse<T: Scalar> {
    kernels: Vec<CommutatorKernel<T>>,
    /// `|Λ_l|⁻¹ Σ 2 g_b Re d0[x¹][x²]` per direction.
    dia: Vec<T>,
    vol: T,
    pulse: Pulse,
}

impl<T: Scalar> FieldResponse<T> {
    pub fn new(eig: &EigenSystem<T>, beta: T, vp: &VectorPotential, l: usize) -> Result<Self> {
        let bx = &eig.bx;
        let d = bx.d();
        let vol = volume::<T>(d, l)?;
        // ∂H/∂(η𝒜) at zero field: entry (x, y) is −i g_{x→y}
        let mut field = CMat::zeros(bx.len(), bx.len());
        for b in nearest_bonds(bx, BondMode::Interior).bonds {
            let g = vp.bond_weight(&b)?;
            if g != 0.0 {
                let (i, j) = bond_pair(bx, &b)?;
                field[(i, j)] = C::new(T::zero(), -T::lit(g));
            }
        }
        let field = eig.to_eigenbasis(&field);
        let sym = fermi_symbol(eig, beta)?;
        let avg = build_box(d, l)?;
        let mut kernels = Vec::with_capacity(d);
        let mut dia = Vec::with_capacity(d);
        for k in 0..d {
            let jk = eig.to_eigenbasis(&averaged_current(bx, l, k)?);
            kernels.push(CommutatorKernel::from_eigenbasis(eig, beta, &jk, &field));
            let mut acc = T::zero();
            for x in avg.sites() {
                let b = Bond::backward(x, k);
                let (i, j) = bond_pair(bx, &b)?;
                acc += T::lit(2.0 * vp.bond_weight(&b)?) * sym.entry(i, j).re;
            }
            dia.push(acc / vol);
        }
        Ok(FieldResponse { kernels, dia, vol, pulse: vp.pulse.clone() })
    }

    /// `∫_{t0}^t Φ_k(t − s) 𝓔_s ds` per direction, per unit `η`.
    pub fn paramagnetic(&self, t: T) -> Vec<T> {
        let (a, b) = self.pulse.support();
        let tf = t.as_f64();
        let hi = tf.min(b);
        if hi <= a {
            return vec![T::zero(); self.kernels.len()];
        }
        let panels = ((hi - a) * 40.0).ceil().max(4.0) as usize;
        self.kernels
            .iter()
            .map(|ker| {
                let v = gauss_legendre(
                    |s| ker.eval(T::lit(tf - s)).re.as_f64() * self.pulse.value(s),
                    a,
                    hi,
                    panels,
                );
                T::lit(v) / self.vol
            })
            .collect()
    }

    /// `𝒜_t |Λ_l|⁻¹ Σ 2 g_b Re d0[x¹][x²]` per direction, per unit `η`.
    pub fn diamagnetic(&self, t: T) -> Vec<T> {
        let a = T::lit(self.pulse.primitive(t.as_f64()));
        self.dia.iter().map(|&c| c * a).collect()
    }
}

#[derive(Clone, Debug)]
pub struct LinearCurrent<T: Scalar> {
    pub tgrid: Vec<T>,
    pub j_p: Vec<Vec<T>>,
    pub j_d: Vec<Vec<T>>,
}

impl<T: Scalar> LinearCurrent<T> {
    pub fn total(&self, i: usize) -> Vec<T> {
        self.j_p[i].iter().zip(&self.j_d[i]).map(|(a, b)| *a + *b).collect()
    }
}

/// Macroscopic linear response per unit `η` for `A = η w 𝒜_t`: paramagnetic part
/// `−∫_{t0}^t Ξ_p(t − s) w 𝓔_s ds` (trapezoid on `tgrid`) and diamagnetic part `Ξ_d w 𝒜_t`.
pub fn linear_response_current<T: Scalar>(
    kernel: &TransportKernel<T>,
    pulse: &Pulse,
    w: &[f64],
    tgrid: &[T],
) -> Result<LinearCurrent<T>> {
    let d = kernel.xi_d.nrows();
    if w.len() != d {
        return Err(contract("direction has wrong dimension"));
    }
    let wv = DMatrix::from_fn(d, 1, |k, _| T::lit(w[k]));
    let t0 = T::lit(pulse.support().0);
    let field = |s: T| T::lit(pulse.value(s.as_f64()));
    let mut j_p = Vec::with_capacity(tgrid.len());
    let mut j_d = Vec::with_capacity(tgrid.len());
    for &t in tgrid {
        let a = T::lit(pulse.primitive(t.as_f64()));
        j_d.push((&kernel.xi_d * &wv).iter().map(|&x| x * a).collect());
        if t <= t0 {
            j_p.push(vec![T::zero(); d]);
            continue;
        }
        let mut nodes = vec![t0];
        nodes.extend(tgrid.iter().copied().filter(|&s| s > t0 && s < t));
        nodes.push(t);
        let mut acc = DMatrix::<T>::zeros(d, 1);
        let mut prev = kernel.xi_p_at(t - t0)? * &wv * field(t0);
        for win in nodes.windows(2) {
            let cur = kernel.xi_p_at(t - win[1])? * &wv * field(win[1]);
            acc += (&prev + &cur) * ((win[1] - win[0]) * T::lit(0.5));
            prev = cur;
        }
        j_p.push(acc.iter().map(|&x| -x).collect());
    }
    Ok(LinearCurrent { tgrid: tgrid.to_vec(), j_p, j_d })
}

// ---------------------------------------------------------------------------
// Energy increments.

#[derive(Clone, Debug)]
pub struct EnergyLedger<T: Scalar> {
    pub tgrid: Vec<T>,
    pub s: Vec<T>,
    pub p: Vec<T>,
    pub ip: Vec<T>,
    pub id: Vec<T>,
    /// `η² |Λ_l|` with `l` the field scale.
    pub norm: T,
    pub balance_residual: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyDensities<T: Scalar> {
    pub s: Vec<T>,
    pub p: Vec<T>,
    pub ip: Vec<T>,
    pub id: Vec<T>,
}

impl<T: Scalar> EnergyLedger<T> {
    pub fn densities(&self) -> EnergyDensities<T> {
        let scale = |v: &[T]| -> Vec<T> {
            if self.norm == T::zero() {
                vec![T::zero(); v.len()]
            } else {
                v.iter().map(|&x| x / self.norm).collect()
            }
        };
        EnergyDensities { s: scale(&self.s), p: scale(&self.p), ip: scale(&self.ip), id: scale(&self.id) }
    }
}

/// `Σ_{a,b ∈ L} X_ba Y_ab`.
fn restricted_trace<T: Scalar>(x: &CMat<T>, y: &CMat<T>, idx: &[usize]) -> T {
    let mut acc = C::new(T::zero(), T::zero());
    for &a in idx {
        for &b in idx {
            acc += x[(b, a)] * y[(a, b)];
        }
    }
    acc.re
}

/// Normalization `η² |Λ_l|` with `l` the rounded field scale.
pub fn energy_norm<T: Scalar>(vp: &VectorPotential) -> Result<T> {
    let l = vp.scale.round().max(0.0) as usize;
    Ok(T::lit(vp.eta * vp.eta) * volume::<T>(vp.profile.d, l)?)
}

/// `S, P, 𝕴_p, 𝕴_d` as traces over `Λ_L` (`L = l_trace`) of the evolution box.
pub fn energy_increments<T: Scalar>(
    run: &EvolutionRun<T>,
    d0: &Symbol<T>,
    l_trace: usize,
    tgrid: &[T],
) -> Result<EnergyLedger<T>> {
    let bx = &run.coupling.base.bx;
    let vp = run.coupling.vp();
    if l_trace > bx.l() {
        return Err(geometry("trace box exceeds the evolution box"));
    }
    if (l_trace as f64) < vp.support_radius().ceil() + 1.0 {
        return Err(geometry("trace box does not cover the field support plus one site"));
    }
    let avg = build_box(bx.d(), l_trace)?;
    let idx: Vec<usize> = (0..bx.len()).filter(|&i| avg.contains(bx.site(i))).collect();
    let h0 = &run.coupling.base.mat;
    let n = tgrid.len();
    let (mut s, mut p, mut ip, mut id) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut residual = T::zero();
    for &t in tgrid {
        let dt = state_at(run, d0, t)?;
        let w = run.coupling.perturbation(t);
        let diff = &dt - &d0.mat;
        let s_t = restricted_trace(&diff, h0, &idx);
        let p_t = restricted_trace(&dt, &w, &idx);
        let ip_t = s_t + restricted_trace(&diff, &w, &idx);
        let id_t = restricted_trace(&d0.mat, &w, &idx);
        residual = residual.max((s_t + p_t - ip_t - id_t).abs());
        s.push(s_t);
        p.push(p_t);
        ip.push(ip_t);
        id.push(id_t);
    }
    Ok(EnergyLedger {
        tgrid: tgrid.to_vec(),
        s,
        p,
        ip,
        id,
        norm: energy_norm(vp)?,
        balance_residual: residual,
    })
}

// ---------------------------------------------------------------------------
// Joule-type predictions.

/// Largest node spacing of the temporal double integrals.
pub const JOULE_MAX_STEP: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct JoulePrediction<T: Scalar> {
    pub tgrid: Vec<T>,
    pub ip: Vec<T>,
    pub id: Vec<T>,
    pub s: Vec<T>,
    pub p: Vec<T>,
    pub e_lin: Vec<T>,
    pub q: Vec<T>,
}

/// `[t0] ∪ {t ∈ tgrid : t > t0}`, each interval split evenly into pieces no longer than
/// `max_step`; also returns the fine index of every `tgrid` point (`None` before `t0`).
fn fine_nodes<T: Scalar>(tgrid: &[T], t0: T, max_step: T) -> (Vec<T>, Vec<Option<usize>>) {
    let mut coarse = vec![t0];
    coarse.extend(tgrid.iter().copied().filter(|&t| t > t0));
    let mut nodes = vec![t0];
    for w in coarse.windows(2) {
        let refine = ((w[1] - w[0]) / max_step).ceil().to_usize().unwrap_or(1).max(1);
        let h = (w[1] - w[0]) / T::from_usize(refine).unwrap();
        for j in 1..=refine {
            nodes.push(if j == refine { w[1] } else { w[0] + h * T::from_usize(j).unwrap() });
        }
    }
    let at = tgrid
        .iter()
        .map(|&t| {
            if t < t0 {
                None
            } else if t == t0 {
                Some(0)
            } else {
                nodes.iter().position(|&u| u == t)
            }
        })
        .collect();
    (nodes, at)
}

/// `g(s_j) = ∫_{t0}^{s_j} K(s_j − u) e(u) du` and `∫_{t0}^{s_j} e(s) g(s) ds` on the nodes.
fn causal_double_integral<T: Scalar>(
    nodes: &[T],
    e: &[T],
    kernel: &dyn Fn(T) -> Result<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let n = nodes.len();
    let half = T::lit(0.5);
    let mut g = vec![T::zero(); n];
    for j in 1..n {
        let mut acc = T::zero();
        let mut prev = kernel(nodes[j] - nodes[0])? * e[0];
        for i in 1..=j {
            let cur = kernel(nodes[j] - nodes[i])? * e[i];
            acc += (prev + cur) * (nodes[i] - nodes[i - 1]) * half;
            prev = cur;
        }
        g[j] = acc;
    }
    let mut outer = vec![T::zero(); n];
    for j in 1..n {
        outer[j] = outer[j - 1] + (e[j - 1] * g[j - 1] + e[j] * g[j]) * (nodes[j] - nodes[j - 1]) * half;
    }
    Ok((g, outer))
}

pub fn joule_predictions<T: Scalar>(
    kernel: &TransportKernel<T>,
    vp: &VectorPotential,
    tgrid: &[T],
) -> Result<JoulePrediction<T>> {
    joule_predictions_with(kernel, vp, tgrid, T::lit(JOULE_MAX_STEP))
}

/// Densities per `η²` for `A = η w ψ(x/l) 𝒜_t`. The spatial integral factorizes into
/// `l^d ∫ψ² / |Λ_l|`; the temporal parts are trapezoid double integrals.
pub fn joule_predictions_with<T: Scalar>(
    kernel: &TransportKernel<T>,
    vp: &VectorPotential,
    tgrid: &[T],
    max_step: T,
) -> Result<JoulePrediction<T>> {
    let d = kernel.xi_d.nrows();
    if vp.direction.len() != d || !(max_step > T::zero()) {
        return Err(contract("direction dimension or quadrature step invalid"));
    }
    let w = DMatrix::from_fn(d, 1, |k, _| T::lit(vp.direction[k]));
    let quad = |m: &DMatrix<T>| (w.transpose() * m * &w)[(0, 0)];
    let l = vp.scale.round().max(0.0) as usize;
    let spatial = T::lit(vp.scale.powi(d as i32) * vp.profile.norm2) / volume::<T>(d, l)?;
    let xi_d = quad(&kernel.xi_d);
    let mean_diag = |m: &DMatrix<T>| (0..d).fold(T::zero(), |a, k| a + m[(k, k)]) / T::from_usize(d).unwrap();
    let sigma_d = mean_diag(&kernel.xi_d);
    let w2 = T::lit(vp.direction.iter().map(|x| x * x).sum::<f64>());

    let t0 = T::lit(vp.t0());
    let (nodes, at) = fine_nodes(tgrid, t0, max_step);
    // physical field profile per unit η and ψ: E = −∂_t A
    let e: Vec<T> = nodes.iter().map(|&s| -T::lit(vp.pulse.value(s.as_f64()))).collect();
    let kp = |tau: T| kernel.xi_p_at(tau).map(|m| quad(&m));
    let ks = |tau: T| kernel.xi_p_at(tau).map(|m| (mean_diag(&m) - sigma_d) * w2);
    let (g, ip_t) = causal_double_integral(&nodes, &e, &kp)?;
    let (_, q_t) = causal_double_integral(&nodes, &e, &ks)?;

    let n = tgrid.len();
    let mut out = JoulePrediction {
        tgrid: tgrid.to_vec(),
        ip: Vec::with_capacity(n),
        id: Vec::with_capacity(n),
        s: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
        e_lin: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
    };
    for (i, &t) in tgrid.iter().enumerate() {
        let Some(j) = at[i] else {
            for v in [&mut out.ip, &mut out.id, &mut out.s, &mut out.p, &mut out.e_lin, &mut out.q] {
                v.push(T::zero());
            }
            continue;
        };
        // ∫E = −𝒜_t; the diamagnetic coefficient of the measured current is −Ξ_d
        let a = T::lit(vp.pulse.primitive(t.as_f64()));
        let ip = spatial * ip_t[j];
        let id = -spatial * xi_d * a * a * T::lit(0.5);
        let cross = spatial * (-a) * g[j];
        out.ip.push(ip);
        out.id.push(id);
        out.s.push(ip - cross);
        out.p.push(id + cross);
        out.e_lin.push(ip + id);
        out.q.push(spatial * q_t[j]);
    }
    Ok(out)
}

/// Kernel of one realization seen through the field profile: bonds `(x + e_k, x)` weighted
/// by `ψ̄_b²` respond to a uniform field on every bond of the box. This is the local form of
/// the coefficient that multiplies `|E(x)|²` in the heat density.
pub fn profile_kernel<T: Scalar>(
    eig: &EigenSystem<T>,
    beta: T,
    vp: &VectorPotential,
    tgrid: &[T],
    spec: &DisorderSpec,
    index: u64,
) -> Result<TransportKernel<T>> {
    let bx = &eig.bx;
    let d = bx.d();
    let bonds = nearest_bonds(bx, BondMode::Interior).bonds;
    let mean = |b: &Bond| -> f64 {
        let a: Vec<f64> = b.from.iter().map(|&c| c as f64 / vp.scale).collect();
        let e: Vec<f64> = b.to.iter().map(|&c| c as f64 / vp.scale).collect();
        vp.profile.segment_mean(&a, &e)
    };
    let sym = fermi_symbol(eig, beta)?;
    let mut weighted = Vec::with_capacity(d);
    let mut uniform = Vec::with_capacity(d);
    let mut mass = Vec::with_capacity(d);
    let mut xi_d = DMatrix::zeros(d, d);
    for k in 0..d {
        let (mut a, mut u) = (CMat::zeros(bx.len(), bx.len()), CMat::zeros(bx.len(), bx.len()));
        let (mut m, mut dia) = (T::zero(), T::zero());
        for b in bonds.iter().filter(|b| b.from[k] == b.to[k] + 1) {
            let (i, j) = bond_pair(bx, b)?;
            crate::correlations::add_bond_current(&mut u, i, j, cr(T::one()));
            let rho = T::lit(mean(b).powi(2));
            if rho > T::zero() {
                crate::correlations::add_bond_current(&mut a, i, j, cr(rho));
                m += rho;
                dia -= rho * T::lit(2.0) * sym.entry(i, j).re;
            }
        }
        if m == T::zero() {
            return Err(geometry("field profile misses every bond of the box"));
        }
        xi_d[(k, k)] = dia / m;
        weighted.push(eig.to_eigenbasis(&a));
        uniform.push(eig.to_eigenbasis(&u));
        mass.push(m);
    }
    let mut xi_p = vec![DMatrix::zeros(d, d); tgrid.len()];
    for k in 0..d {
        for q in 0..d {
            let ker = CommutatorKernel::from_eigenbasis(eig, beta, &weighted[k], &uniform[q]);
            for (i, &t) in tgrid.iter().enumerate() {
                xi_p[i][(k, q)] = ker.eval(t).re / mass[k];
            }
        }
    }
    Ok(TransportKernel {
        tgrid: tgrid.to_vec(),
        xi_p,
        xi_d,
        provenance: Provenance::Realization { master_seed: spec.master_seed, index },
        l: vp.scale.round() as usize,
        beta,
        lambda: T::lit(spec.lambda),
    })
}

// ---------------------------------------------------------------------------
// Sweeps.

#[derive(Clone, Debug)]
pub struct EnergySweepConfig {
    pub spec: DisorderSpec,
    pub index: u64,
    pub d: usize,
    pub beta: f64,
    pub pulse: Pulse,
    pub profile: ProfileKind,
    pub direction: Vec<f64>,
    /// Decreasing.
    pub eta_list: Vec<f64>,
    /// Increasing field scales.
    pub l_list: Vec<usize>,
    pub dt: f64,
    pub tgrid: Vec<f64>,
    /// Light-cone speed used to pad the evolution box.
    pub v_buf: f64,
    /// Also run `−η` and report the field-odd part of the ledger.
    pub antisymmetrize: bool,
}

#[derive(Clone, Debug)]
pub struct EnergyCell<T: Scalar> {
    pub eta: f64,
    pub l: usize,
    pub half_side: usize,
    pub ledger: EnergyLedger<T>,
    pub densities: EnergyDensities<T>,
    /// Field-odd part of the ledger, `max_t |X(η) − X(−η)| / (2 η |Λ_l|)` over the four
    /// increments, when antisymmetrized.
    pub thermal_work: Option<T>,
}

#[derive(Clone, Debug)]
pub struct EnergySweep<T: Scalar> {
    pub cells: Vec<EnergyCell<T>>,
    /// Per `l`: log–log slope of consecutive-`η` ledger differences against `η`.
    pub eta_slopes: Vec<(usize, f64)>,
    /// Per `η`: largest ledger change between consecutive `l`.
    pub l_changes: Vec<(f64, Vec<f64>)>,
}

/// `max_t` over the four normalized densities.
pub fn density_distance<T: Scalar>(a: &EnergyDensities<T>, b: &EnergyDensities<T>) -> f64 {
    let mut m = 0.0f64;
    for (x, y) in [(&a.s, &b.s), (&a.p, &b.p), (&a.ip, &b.ip), (&a.id, &b.id)] {
        for (u, v) in x.iter().zip(y.iter()) {
            m = m.max((*u - *v).abs().as_f64());
        }
    }
    m
}

struct CellSystem<T: Scalar> {
    vp: VectorPotential,
    half: usize,
    bx: LatticeBox,
    realization: crate::disorder::Realization<T>,
    eig: EigenSystem<T>,
    d0: Symbol<T>,
    t_end: f64,
}

fn cell_system<T: Scalar>(cfg: &EnergySweepConfig, eta: f64, l: usize) -> Result<CellSystem<T>> {
    let vp = VectorPotential::new(
        cfg.pulse.clone(),
        SpatialProfile::new(cfg.profile, cfg.d),
        cfg.direction.clone(),
        l as f64,
        eta,
    )?;
    let t_end = cfg.tgrid.iter().copied().fold(vp.t0(), f64::max);
    let half = padded_half_side_with(&vp, t_end - vp.t0(), cfg.v_buf);
    let bx = build_box(cfg.d, half)?;
    let realization = sample_realization::<T>(&cfg.spec, &bx, cfg.index);
    let base = FieldCoupling::new(&bx, &realization, &cfg.spec, &vp)?.base;
    let eig = diagonalize(&base)?;
    let d0 = fermi_symbol(&eig, T::lit(cfg.beta))?;
    Ok(CellSystem { vp, half, bx, realization, eig, d0, t_end })
}

fn cell_from_system<T: Scalar>(cfg: &EnergySweepConfig, sys: &CellSystem<T>, l: usize) -> Result<EnergyCell<T>> {
    let eta = sys.vp.eta;
    let tg: Vec<T> = cfg.tgrid.iter().map(|&t| T::lit(t)).collect();
    let ledger_for = |vp: &VectorPotential| -> Result<EnergyLedger<T>> {
        let c = FieldCoupling::new(&sys.bx, &sys.realization, &cfg.spec, vp)?;
        let run = evolve(c, T::lit(vp.t0()), T::lit(sys.t_end), T::lit(cfg.dt), &tg)?;
        energy_increments(&run, &sys.d0, sys.half, &tg)
    };
    let ledger = ledger_for(&sys.vp)?;
    let thermal_work = if cfg.antisymmetrize && eta != 0.0 {
        let mirrored = ledger_for(&sys.vp.with_eta(-eta))?;
        let vol = volume::<T>(cfg.d, l)?;
        let mut m = T::zero();
        for (x, y) in [
            (&ledger.s, &mirrored.s),
            (&ledger.p, &mirrored.p),
            (&ledger.ip, &mirrored.ip),
            (&ledger.id, &mirrored.id),
        ] {
            m = x.iter().zip(y).fold(m, |a, (u, v)| a.max((*u - *v).abs()));
        }
        Some(m / (T::lit(2.0 * eta.abs()) * vol))
    } else {
        None
    };
    let densities = ledger.densities();
    Ok(EnergyCell { eta, l, half_side: sys.half, ledger, densities, thermal_work })
}

/// One `(η, l)` cell: realization on the padded box, Fermi state, evolution and ledger.
pub fn energy_cell<T: Scalar>(cfg: &EnergySweepConfig, eta: f64, l: usize) -> Result<EnergyCell<T>> {
    let sys = cell_system::<T>(cfg, eta, l)?;
    cell_from_system(cfg, &sys, l)
}

/// Measured densities at the smallest `η` next to the Joule predictions of the same
/// realization, using [`profile_kernel`] sampled on `kernel_tgrid`.
pub fn joule_cell<T: Scalar>(
    cfg: &EnergySweepConfig,
    l: usize,
    kernel_tgrid: &[T],
) -> Result<(EnergyCell<T>, JoulePrediction<T>)> {
    let eta = *cfg.eta_list.last().ok_or_else(|| contract("eta_list is empty"))?;
    if eta == 0.0 {
        return Err(contract("Joule comparison needs η ≠ 0"));
    }
    let sys = cell_system::<T>(cfg, eta, l)?;
    let cell = cell_from_system(cfg, &sys, l)?;
    let kernel = profile_kernel(&sys.eig, T::lit(cfg.beta), &sys.vp, kernel_tgrid, &cfg.spec, cfg.index)?;
    let tg: Vec<T> = cfg.tgrid.iter().map(|&t| T::lit(t)).collect();
    let pred = joule_predictions(&kernel, &sys.vp, &tg)?;
    Ok((cell, pred))
}

pub fn energy_densities<T: Scalar>(cfg: &EnergySweepConfig) -> Result<EnergySweep<T>> {
    if cfg.eta_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(contract("eta_list must decrease"));
    }
    if cfg.l_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(contract("l_list must increase"));
    }
    let jobs: Vec<(f64, usize)> =
        cfg.l_list.iter().flat_map(|&l| cfg.eta_list.iter().map(move |&e| (e, l))).collect();
    let cells: Vec<EnergyCell<T>> = jobs
        .par_iter()
        .map(|&(eta, l)| energy_cell(cfg, eta, l))
        .collect::<Result<_>>()?;
    let find = |eta: f64, l: usize| cells.iter().find(|c| c.eta == eta && c.l == l).unwrap();

    let mut eta_slopes = Vec::new();
    for &l in &cfg.l_list {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for w in cfg.eta_list.windows(2) {
            let diff = density_distance(&find(w[0], l).densities, &find(w[1], l).densities);
            if diff > 0.0 && w[1] > 0.0 {
                x.push(w[1].ln());
                y.push(diff.ln());
            }
        }
        let slope = if x.len() >= 2 { linear_fit(&x, &y).0 } else { f64::NAN };
        eta_slopes.push((l, slope));
    }
    let l_changes = cfg
        .eta_list
        .iter()
        .map(|&eta| {
            let v = cfg
                .l_list
                .windows(2)
                .map(|w| density_distance(&find(eta, w[0]).densities, &find(eta, w[1]).densities))
                .collect();
            (eta, v)
        })
        .collect();
    Ok(EnergySweep { cells, eta_slopes, l_changes })
}
