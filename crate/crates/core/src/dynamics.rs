//! Non-autonomous one-particle evolution by midpoint exponentials, and the Liouville flow of
//! the symbol.

use crate::disorder::{DisorderSpec, Realization};
use crate::error::{contract, Error, Result};
use crate::lattice_fields::{nearest_bonds, BondMode, LatticeBox, VectorPotential};
use crate::onebody::{eigh_raw, hamiltonian, HermitianOp, Symbol};
use crate::scalar::{cis, max_abs_diff, CMat, C};
use crate::Scalar;

/// Drift beyond which a run is aborted.
const DRIFT_ABORT: f64 = 1e-6;

/// Half-side of the padded box for a field of scale `l_field` acting during `duration`.
pub fn padded_half_side(vp: &VectorPotential, d: usize, duration: f64) -> usize {
    padded_half_side_with(vp, duration, 6.0 * d as f64)
}

pub fn padded_half_side_with(vp: &VectorPotential, duration: f64, v_buf: f64) -> usize {
    vp.support_radius().ceil() as usize + (v_buf * duration.max(0.0)).ceil() as usize
}

/// Static Hamiltonian plus the bonds the field touches, so `H(t)` is cheap to rebuild.
#[derive(Clone, Debug)]
pub struct FieldCoupling<T: Scalar> {
    pub base: HermitianOp<T>,
    /// `(i, j, g)`: entry `(i, j)` becomes `−exp(i η 𝒜_t g)`.
    links: Vec<(usize, usize, T)>,
    vp: VectorPotential,
}

impl<T: Scalar> FieldCoupling<T> {
    pub fn new(
        bx: &LatticeBox,
        realization: &Realization<T>,
        spec: &DisorderSpec,
        vp: &VectorPotential,
    ) -> Result<Self> {
        let base = hamiltonian(bx, realization, spec, None, T::zero())?;
        let mut links = Vec::new();
        for b in nearest_bonds(bx, BondMode::Interior).bonds {
            let g = vp.bond_weight(&b)?;
            if g != 0.0 {
                links.push((bx.index(&b.from).unwrap(), bx.index(&b.to).unwrap(), T::lit(g)));
            }
        }
        Ok(FieldCoupling { base, links, vp: vp.clone() })
    }

    pub fn vp(&self) -> &VectorPotential {
        &self.vp
    }

    /// `η 𝒜_t`.
    pub fn amplitude(&self, t: T) -> T {
        T::lit(self.vp.eta * self.vp.pulse.primitive(t.as_f64()))
    }

    pub fn at(&self, t: T) -> CMat<T> {
        self.with_amplitude(self.amplitude(t))
    }

    fn with_amplitude(&self, a: T) -> CMat<T> {
        let mut m = self.base.mat.clone();
        if a != T::zero() {
            for &(i, j, g) in &self.links {
                m[(i, j)] = -cis(a * g);
            }
        }
        m
    }

    /// `W_t = Δ^{A(t)} − Δ` restricted to the box.
    pub fn perturbation(&self, t: T) -> CMat<T> {
        let a = self.amplitude(t);
        let n = self.base.dim();
        let mut w = CMat::zeros(n, n);
        if a != T::zero() {
            for &(i, j, g) in &self.links {
                w[(i, j)] = -cis(a * g) + C::new(T::one(), T::zero());
            }
        }
        w
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionRun<T: Scalar> {
    pub coupling: FieldCoupling<T>,
    pub t0: T,
    pub t_end: T,
    /// Step actually used (the grid is snapped so that `t_end` is a grid point).
    pub dt: T,
    pub checkpoints: Vec<(T, CMat<T>)>,
    pub drift: T,
}

fn step_exponential<T: Scalar>(h: &CMat<T>, dt: T) -> CMat<T> {
    let (vals, vecs) = eigh_raw(h);
    let mut w = vecs.clone();
    for (j, &e) in vals.iter().enumerate() {
        let z = cis(-dt * e);
        for x in w.column_mut(j).iter_mut() {
            *x *= z;
        }
    }
    w * vecs.adjoint()
}

fn unitarity_defect<T: Scalar>(u: &CMat<T>) -> T {
    let n = u.nrows();
    max_abs_diff(&(u.adjoint() * u), &CMat::identity(n, n))
}

/// Evolves `U_{t,t0}` with `U ← exp(−i dt H(t + dt/2)) U`, storing the requested checkpoints.
pub fn evolve<T: Scalar>(
    coupling: FieldCoupling<T>,
    t0: T,
    t_end: T,
    dt: T,
    checkpoint_times: &[T],
) -> Result<EvolutionRun<T>> {
    if !(t_end >= t0) {
        return Err(contract("t_end must be ≥ t0"));
    }
    if !(dt > T::zero()) {
        return Err(contract("dt must be positive"));
    }
    let span = t_end - t0;
    let steps = (span / dt).ceil().to_usize().unwrap_or(0);
    let h = if steps == 0 { dt } else { span / T::from_usize(steps).unwrap() };
    let mut wanted: Vec<usize> = checkpoint_times
        .iter()
        .map(|&t| {
            let k = ((t - t0) / h).round().to_i64().unwrap_or(-1);
            k.clamp(0, steps as i64) as usize
        })
        .collect();
    wanted.sort_unstable();
    wanted.dedup();

    let n = coupling.base.dim();
    let mut u = CMat::<T>::identity(n, n);
    let mut checkpoints = Vec::with_capacity(wanted.len());
    let mut next = 0;
    let mut drift = T::zero();
    let mut cache: Option<(T, CMat<T>)> = None;
    let half = T::lit(0.5);
    for k in 0..=steps {
        while next < wanted.len() && wanted[next] == k {
            let defect = unitarity_defect(&u);
            drift = drift.max(defect);
            if defect > T::tol(DRIFT_ABORT) {
                return Err(Error::Numerical(format!(
                    "unitarity drift {} at step {k} exceeds {DRIFT_ABORT}",
                    defect.as_f64()
                )));
            }
            checkpoints.push((t0 + h * T::from_usize(k).unwrap(), u.clone()));
            next += 1;
        }
        if k == steps {
            break;
        }
        let mid = t0 + h * (T::from_usize(k).unwrap() + half);
        let a = coupling.amplitude(mid);
        let w = match &cache {
            Some((a_c, w)) if *a_c == a => w,
            _ => {
                let w = step_exponential(&coupling.with_amplitude(a), h);
                cache = Some((a, w));
                &cache.as_ref().unwrap().1
            }
        };
        u = w * u;
    }
    Ok(EvolutionRun { coupling, t0, t_end, dt: h, checkpoints, drift })
}

impl<T: Scalar> EvolutionRun<T> {
    pub fn checkpoint(&self, t: T) -> Result<&CMat<T>> {
        let tol = self.dt * T::lit(0.5);
        self.checkpoints
            .iter()
            .find(|(s, _)| (*s - t).abs() <= tol)
            .map(|(_, u)| u)
            .ok_or_else(|| contract(format!("no checkpoint at t = {}", t.as_f64())))
    }

    pub fn times(&self) -> Vec<T> {
        self.checkpoints.iter().map(|(t, _)| *t).collect()
    }
}

/// `d_t = U_{t,t0} d0 U_{t,t0}†`.
pub fn evolve_symbol<T: Scalar>(d0: &Symbol<T>, run: &EvolutionRun<T>, t: T) -> Result<Symbol<T>> {
    let u = run.checkpoint(t)?;
    Ok(Symbol { mat: u * &d0.mat * u.adjoint() })
}
