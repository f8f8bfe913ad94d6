//! Finite-volume paramagnetic and diamagnetic transport coefficients, their ensemble
//! averages, the conductivity, `Γ_{k,q}` and the Green–Kubo cross-check.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::correlations::{add_bond_current, CurrentElement, FluctuationPair};
use crate::disorder::{reduce_samples, sample_realization, DisorderSpec};
use crate::error::{contract, geometry, Error, Result};
use crate::lattice_fields::{build_box, Bond, LatticeBox};
use crate::onebody::{diagonalize, fermi_symbol, hamiltonian, phase_integral, EigenSystem, Symbol};
use crate::scalar::{ci, cis, cr, CMat, C};
use crate::Scalar;

fn bond_indices(bx: &LatticeBox, b: &Bond) -> Result<(usize, usize)> {
    match (bx.index(&b.from), bx.index(&b.to)) {
        (Some(i), Some(j)) => Ok((i, j)),
        _ => Err(geometry(format!("bond {:?} → {:?} outside the box", b.from, b.to))),
    }
}

/// One-particle matrix of the bond current `I_x`.
pub fn bond_current<T: Scalar>(bx: &LatticeBox, b: &Bond) -> Result<CMat<T>> {
    let (i, j) = bond_indices(bx, b)?;
    let mut m = CMat::zeros(bx.len(), bx.len());
    add_bond_current(&mut m, i, j, cr(T::one()));
    Ok(m)
}

/// `J_k = Σ_{y ∈ Λ_l} I_(y+e_k, y)`.
pub fn averaged_current<T: Scalar>(bx: &LatticeBox, l: usize, k: usize) -> Result<CMat<T>> {
    let avg = build_box(bx.d(), l)?;
    let mut m = CMat::zeros(bx.len(), bx.len());
    for y in avg.sites() {
        let (i, j) = bond_indices(bx, &Bond::backward(y, k))?;
        add_bond_current(&mut m, i, j, cr(T::one()));
    }
    Ok(m)
}

/// `∫_0^t ϱ(i[A, τ_s(B)]) ds` for one-particle observables `A`, `B` given in the site basis,
/// tabulated on many `t` at `O(N²)` per point.
#[derive(Clone, Debug)]
pub struct CommutatorKernel<T: Scalar> {
    /// `A_mn B_nm (f_m − f_n)`.
    weights: CMat<T>,
    values: Vec<T>,
    thresh: T,
}

impl<T: Scalar> CommutatorKernel<T> {
    pub fn new(eig: &EigenSystem<T>, beta: T, a: &CMat<T>, b: &CMat<T>) -> Result<Self> {
        if !(beta > T::zero()) {
            return Err(contract("beta must be positive"));
        }
        let a = eig.to_eigenbasis(a);
        let b = eig.to_eigenbasis(b);
        Ok(Self::from_eigenbasis(eig, beta, &a, &b))
    }

    pub(crate) fn from_eigenbasis(eig: &EigenSystem<T>, beta: T, a: &CMat<T>, b: &CMat<T>) -> Self {
        let f = eig.occupations(beta);
        let n = eig.dim();
        let weights = CMat::from_fn(n, n, |m, k| a[(m, k)] * b[(k, m)] * cr(f[m] - f[k]));
        CommutatorKernel { weights, values: eig.values.clone(), thresh: eig.degeneracy_threshold() }
    }

    pub fn eval(&self, t: T) -> C<T> {
        let n = self.values.len();
        let mut acc = C::new(T::zero(), T::zero());
        for k in 0..n {
            let mut col = C::new(T::zero(), T::zero());
            for m in 0..n {
                let w = self.weights[(m, k)];
                if w.re != T::zero() || w.im != T::zero() {
                    col += w * phase_integral(self.values[k] - self.values[m], t, self.thresh);
                }
            }
            acc += col;
        }
        ci(T::one()) * acc
    }
}

/// `σ_p(x, y, t) = ∫_0^t ϱ(i[I_y, τ_s(I_x)]) ds`.
pub fn sigma_p<T: Scalar>(eig: &EigenSystem<T>, beta: T, x: &Bond, y: &Bond, t: T) -> Result<T> {
    let bx = &eig.bx;
    let k = CommutatorKernel::new(eig, beta, &bond_current(bx, y)?, &bond_current(bx, x)?)?;
    Ok(k.eval(t).re)
}

/// `σ_d(x) = ϱ(P_x) = −2 Re d[x¹][x²]`.
pub fn sigma_d<T: Scalar>(symbol: &Symbol<T>, bx: &LatticeBox, x: &Bond) -> Result<T> {
    let (i, j) = bond_indices(bx, x)?;
    Ok(-T::lit(2.0) * symbol.entry(i, j).re)
}

/// `{Ξ_{p,l}(t)}_{k,q}` on `tgrid`.
pub fn xi_p_l<T: Scalar>(
    eig: &EigenSystem<T>,
    beta: T,
    l: usize,
    tgrid: &[T],
) -> Result<Vec<DMatrix<T>>> {
    let d = eig.bx.d();
    let vol = T::from_usize(build_box(d, l)?.len()).unwrap();
    let currents: Vec<CMat<T>> = (0..d)
        .map(|k| averaged_current(&eig.bx, l, k).map(|j| eig.to_eigenbasis(&j)))
        .collect::<Result<_>>()?;
    let mut out = vec![DMatrix::zeros(d, d); tgrid.len()];
    for k in 0..d {
        for q in 0..d {
            let ker = CommutatorKernel::from_eigenbasis(eig, beta, &currents[k], &currents[q]);
            for (i, &t) in tgrid.iter().enumerate() {
                out[i][(k, q)] = ker.eval(t).re / vol;
            }
        }
    }
    Ok(out)
}

/// `{Ξ_{d,l}}_{k,k} = |Λ_l|⁻¹ Σ_{x ∈ Λ_l} σ_d(x + e_k, x)`.
pub fn xi_d_l<T: Scalar>(symbol: &Symbol<T>, l: usize, bx: &LatticeBox) -> Result<DMatrix<T>> {
    let d = bx.d();
    let avg = build_box(d, l)?;
    let vol = T::from_usize(avg.len()).unwrap();
    let mut out = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut acc = T::zero();
        for x in avg.sites() {
            acc += sigma_d(symbol, bx, &Bond::backward(x, k))?;
        }
        out[(k, k)] = acc / vol;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub enum Provenance<T: Scalar> {
    Realization { master_seed: u64, index: u64 },
    Ensemble { n: usize, xi_p_stderr: Vec<DMatrix<T>>, xi_d_stderr: DMatrix<T> },
}

#[derive(Clone, Debug)]
pub struct TransportKernel<T: Scalar> {
    pub tgrid: Vec<T>,
    pub xi_p: Vec<DMatrix<T>>,
    pub xi_d: DMatrix<T>,
    pub provenance: Provenance<T>,
    pub l: usize,
    pub beta: T,
    pub lambda: T,
}

impl<T: Scalar> TransportKernel<T> {
    /// `Ξ_p` at an arbitrary lag, by linear interpolation in `|t|`.
    pub fn xi_p_at(&self, t: T) -> Result<DMatrix<T>> {
        let s = t.abs();
        let g = &self.tgrid;
        let Some(hi) = g.iter().position(|&u| u >= s) else {
            return Err(contract(format!("lag {} beyond the kernel grid", s.as_f64())));
        };
        if g[hi] == s || hi == 0 {
            if hi == 0 && g[0] != s {
                return Err(contract(format!("lag {} below the kernel grid", s.as_f64())));
            }
            return Ok(self.xi_p[hi].clone());
        }
        let w = (s - g[hi - 1]) / (g[hi] - g[hi - 1]);
        Ok(&self.xi_p[hi - 1] * (T::one() - w) + &self.xi_p[hi] * w)
    }

    pub fn is_ensemble(&self) -> bool {
        matches!(self.provenance, Provenance::Ensemble { .. })
    }
}

/// The eigensystem of realization `index` on `Λ_{l + margin}`.
pub fn realization_system<T: Scalar>(
    spec: &DisorderSpec,
    d: usize,
    ambient: usize,
    index: u64,
) -> Result<EigenSystem<T>> {
    let bx = build_box(d, ambient)?;
    let r = sample_realization(spec, &bx, index);
    diagonalize(&hamiltonian(&bx, &r, spec, None, T::zero())?)
}

pub fn kernel_from_system<T: Scalar>(
    eig: &EigenSystem<T>,
    beta: T,
    l: usize,
    tgrid: &[T],
) -> Result<(Vec<DMatrix<T>>, DMatrix<T>)> {
    if l + 1 > eig.bx.l() {
        return Err(geometry("averaging box plus one bond does not fit in the ambient box"));
    }
    let sym = fermi_symbol(eig, beta)?;
    Ok((xi_p_l(eig, beta, l, tgrid)?, xi_d_l(&sym, l, &eig.bx)?))
}

pub fn kernel_for_realization<T: Scalar>(
    spec: &DisorderSpec,
    d: usize,
    beta: T,
    l: usize,
    margin: usize,
    index: u64,
    tgrid: &[T],
) -> Result<TransportKernel<T>> {
    if margin == 0 {
        return Err(geometry("the ambient box needs a margin of at least one site"));
    }
    let eig = realization_system(spec, d, l + margin, index)?;
    let (xi_p, xi_d) = kernel_from_system(&eig, beta, l, tgrid)?;
    Ok(TransportKernel {
        tgrid: tgrid.to_vec(),
        xi_p,
        xi_d,
        provenance: Provenance::Realization { master_seed: spec.master_seed, index },
        l,
        beta,
        lambda: T::lit(spec.lambda),
    })
}

fn flatten<T: Scalar>(xi_p: &[DMatrix<T>], xi_d: &DMatrix<T>) -> Vec<T> {
    let mut v: Vec<T> = xi_p.iter().flat_map(|m| m.iter().copied()).collect();
    v.extend(xi_d.iter().copied());
    v
}

fn unflatten<T: Scalar>(v: &[T], d: usize, nt: usize) -> (Vec<DMatrix<T>>, DMatrix<T>) {
    let dd = d * d;
    let xi_p = (0..nt).map(|i| DMatrix::from_column_slice(d, d, &v[i * dd..(i + 1) * dd])).collect();
    let xi_d = DMatrix::from_column_slice(d, d, &v[nt * dd..]);
    (xi_p, xi_d)
}

#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub l: usize,
    pub xi_d_mean: Vec<f64>,
    pub xi_d_stderr: Vec<f64>,
    /// Max entrywise change of `E[Ξ_d]` and `E[Ξ_p]` from the previous `l`.
    pub cauchy_xi_d: Option<f64>,
    pub cauchy_xi_p: Option<f64>,
    /// Max entrywise deviation of a single realization from the ensemble mean.
    pub realization_spread_xi_d: f64,
    pub realization_spread_xi_p: f64,
}

#[derive(Clone, Debug)]
pub struct MacroTransport<T: Scalar> {
    pub kernels: Vec<TransportKernel<T>>,
    pub table: Vec<ConvergenceRow>,
}

impl<T: Scalar> MacroTransport<T> {
    /// `E[Ξ_d]` at the largest `l` with uncertainty `stderr + last Cauchy difference`.
    pub fn xi_d_limit(&self) -> (DMatrix<T>, T) {
        let last = self.kernels.last().expect("non-empty sweep");
        let row = self.table.last().unwrap();
        let se = row.xi_d_stderr.iter().fold(0.0f64, |a, &b| a.max(b));
        let unc = se + row.cauchy_xi_d.unwrap_or(0.0);
        (last.xi_d.clone(), T::lit(unc))
    }
}

fn max_abs_entry<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((*x - *y).abs().as_f64()))
}

/// Ensemble kernels over `l_list` with Cauchy differences across consecutive `l`.
#[allow(clippy::too_many_arguments)]
pub fn macro_transport<T: Scalar>(
    spec: &DisorderSpec,
    d: usize,
    beta: T,
    l_list: &[usize],
    margin: usize,
    n: usize,
    tgrid: &[T],
) -> Result<MacroTransport<T>> {
    if n < 2 {
        return Err(contract("ensemble needs N ≥ 2"));
    }
    let nt = tgrid.len();
    let dd = d * d;
    let mut kernels = Vec::new();
    let mut table: Vec<ConvergenceRow> = Vec::new();
    let mut prev: Option<Vec<T>> = None;
    for &l in l_list {
        let samples: Vec<Vec<T>> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                kernel_for_realization(spec, d, beta, l, margin, i, tgrid)
                    .map(|k| flatten(&k.xi_p, &k.xi_d))
                    .map_err(|e| Error::Realization { index: i, source: Box::new(e) })
            })
            .collect::<Result<_>>()?;
        let (mean, err) = reduce_samples(&samples);
        let (xi_p, xi_d) = unflatten(&mean, d, nt);
        let (xi_p_stderr, xi_d_stderr) = unflatten(&err, d, nt);
        let split = nt * dd;
        let spread = |range: std::ops::Range<usize>| {
            samples
                .iter()
                .map(|s| max_abs_entry(&s[range.clone()], &mean[range.clone()]))
                .fold(0.0f64, f64::max)
        };
        let row = ConvergenceRow {
            l,
            xi_d_mean: (0..d).map(|k| xi_d[(k, k)].as_f64()).collect(),
            xi_d_stderr: (0..d).map(|k| xi_d_stderr[(k, k)].as_f64()).collect(),
            cauchy_xi_d: prev.as_ref().map(|p| max_abs_entry(&p[split..], &mean[split..])),
            cauchy_xi_p: prev.as_ref().map(|p| max_abs_entry(&p[..split], &mean[..split])),
            realization_spread_xi_d: spread(split..mean.len()),
            realization_spread_xi_p: spread(0..split),
        };
        table.push(row);
        prev = Some(mean);
        kernels.push(TransportKernel {
            tgrid: tgrid.to_vec(),
            xi_p,
            xi_d,
            provenance: Provenance::Ensemble { n, xi_p_stderr, xi_d_stderr },
            l,
            beta,
            lambda: T::lit(spec.lambda),
        });
    }
    Ok(MacroTransport { kernels, table })
}

#[derive(Clone, Debug)]
pub struct Conductivity<T: Scalar> {
    pub tgrid: Vec<T>,
    /// `Σ(t)`: zero for `t < 0`, `Ξ_d + Ξ_p(t)` for `t ≥ 0`.
    pub sigma: Vec<DMatrix<T>>,
    /// `σ(t) = σ_d + σ_p(t)` (zero for `t < 0`).
    pub scalar: Vec<T>,
    pub sigma_p: Vec<T>,
    pub sigma_d: T,
    /// `Ξ_d⁻¹ ∂_t Ξ_p(t)`; `None` when `Ξ_d` is singular.
    pub viscosity: Option<Vec<DMatrix<T>>>,
}

fn mean_diag<T: Scalar>(m: &DMatrix<T>) -> T {
    let d = m.nrows();
    (0..d).fold(T::zero(), |a, k| a + m[(k, k)]) / T::from_usize(d).unwrap()
}

pub fn conductivity<T: Scalar>(kernel: &TransportKernel<T>) -> Result<Conductivity<T>> {
    if !kernel.is_ensemble() {
        return Err(contract("conductivity expects an ensemble kernel"));
    }
    let g = &kernel.tgrid;
    let d = kernel.xi_d.nrows();
    let zero = DMatrix::zeros(d, d);
    let sigma_d = mean_diag(&kernel.xi_d);
    let mut sigma = Vec::with_capacity(g.len());
    let mut scalar = Vec::with_capacity(g.len());
    let mut sigma_p = Vec::with_capacity(g.len());
    for (i, &t) in g.iter().enumerate() {
        let sp = mean_diag(&kernel.xi_p[i]);
        sigma_p.push(sp);
        if t < T::zero() {
            sigma.push(zero.clone());
            scalar.push(T::zero());
        } else {
            sigma.push(&kernel.xi_d + &kernel.xi_p[i]);
            scalar.push(sigma_d + sp);
        }
    }
    let det = kernel.xi_d.determinant();
    let viscosity = if det.abs() < T::lit(1e-12) {
        None
    } else {
        let inv = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                T::one() / kernel.xi_d[(i, i)]
            } else {
                T::zero()
            }
        });
        Some(
            derivative(g, &kernel.xi_p)
                .into_iter()
                .map(|m| &inv * m)
                .collect(),
        )
    };
    Ok(Conductivity { tgrid: g.clone(), sigma, scalar, sigma_p, sigma_d, viscosity })
}

/// Central differences; at a leading `t = 0` the even extension is used, other ends are
/// one-sided.
fn derivative<T: Scalar>(g: &[T], f: &[DMatrix<T>]) -> Vec<DMatrix<T>> {
    let n = g.len();
    (0..n)
        .map(|i| {
            if n < 2 {
                return f[i].clone() * T::zero();
            }
            if i == 0 {
                if g[0] == T::zero() {
                    return f[0].clone() * T::zero();
                }
                return (&f[1] - &f[0]) / (g[1] - g[0]);
            }
            if i == n - 1 {
                return (&f[i] - &f[i - 1]) / (g[i] - g[i - 1]);
            }
            (&f[i + 1] - &f[i - 1]) / (g[i + 1] - g[i - 1])
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct GammaReport<T: Scalar> {
    pub tgrid: Vec<T>,
    pub gamma: Vec<T>,
    /// `max_t |Ξ_{p,l}(t)_{k,q} − (Γ(t) − Γ(0))|`.
    pub residual: T,
}

/// Finite-volume `Γ_{k,q}(t) = |Λ_l|⁻¹ Σ_{x,y} ∫_0^β 𝔠_{t+iα}((x+e_q, x), (y+e_k, y)) dα`,
/// with the `α` integral done in closed form.
pub fn gamma<T: Scalar>(
    eig: &EigenSystem<T>,
    beta: T,
    l: usize,
    k: usize,
    q: usize,
    tgrid: &[T],
) -> Result<GammaReport<T>> {
    let vol = T::from_usize(build_box(eig.bx.d(), l)?.len()).unwrap();
    let jk = eig.to_eigenbasis(&averaged_current(&eig.bx, l, k)?);
    let jq = eig.to_eigenbasis(&averaged_current(&eig.bx, l, q)?);
    let f = eig.occupations(beta);
    let e = &eig.values;
    let n = eig.dim();
    let thresh = eig.degeneracy_threshold();
    // ∫_0^β F_α(ε_n) F_{β−α}(ε_m) dα = (f_m − f_n)/(ε_n − ε_m)
    let w = DMatrix::from_fn(n, n, |a, b| {
        let de = e[a] - e[b];
        if de.abs() <= thresh {
            beta * f[a] * (T::one() - f[a])
        } else {
            (f[b] - f[a]) / de
        }
    });
    let gamma_at = |t: T| -> T {
        let mut acc = C::new(T::zero(), T::zero());
        for a in 0..n {
            for b in 0..n {
                acc += jq[(b, a)] * jk[(a, b)] * cr(w[(a, b)]) * cis(t * (e[b] - e[a]));
            }
        }
        acc.re / vol
    };
    let gamma: Vec<T> = tgrid.iter().map(|&t| gamma_at(t)).collect();
    let g0 = gamma_at(T::zero());
    let xi = xi_p_l(eig, beta, l, tgrid)?;
    let residual = xi
        .iter()
        .zip(&gamma)
        .fold(T::zero(), |m, (x, g)| m.max((x[(k, q)] - (*g - g0)).abs()));
    Ok(GammaReport { tgrid: tgrid.to_vec(), gamma, residual })
}

/// `max_t |∫_0^t −2 Im⟨I_{(e_k,0)}, τ_s I_{(e_q,0)}⟩_{𝓘,l} ds − {Ξ_{p,l}(t)}_{k,q}|`.
pub fn green_kubo_check<T: Scalar>(
    eig: &EigenSystem<T>,
    beta: T,
    l: usize,
    tgrid: &[T],
    k: usize,
    q: usize,
) -> Result<T> {
    let d = eig.bx.d();
    let unit = |k: usize| Bond::backward(&vec![0; d], k);
    let pair = FluctuationPair::new(
        eig,
        beta,
        l,
        &CurrentElement::Bond(unit(k)),
        &CurrentElement::Bond(unit(q)),
    )?;
    let xi = xi_p_l(eig, beta, l, tgrid)?;
    let mut worst = T::zero();
    for (i, &t) in tgrid.iter().enumerate() {
        let gk = -T::lit(2.0) * pair.integrated(t).im;
        worst = worst.max((gk - xi[i][(k, q)]).abs());
    }
    Ok(worst)
}

/// Largest eigenvalue of a real symmetric matrix (after symmetrization).
pub fn max_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    let s = (m + m.transpose()) * T::lit(0.5);
    s.symmetric_eigen().eigenvalues.iter().fold(T::min_value().unwrap(), |a, &b| a.max(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::ComplexField;
    use crate::correlations::FourPointMap;
    use crate::fock::{Fock, Gibbs};
    use crate::lattice_fields::{build_range, gauss_legendre};
    use crate::onebody::laplacian;
    use num_complex::Complex64;

    fn system(d: usize, l: usize, lambda: f64, seed: u64) -> EigenSystem<f64> {
        realization_system(&DisorderSpec::uniform(lambda, seed), d, l, 0).unwrap()
    }

    fn two_site() -> EigenSystem<f64> {
        let bx = build_range(1, 0, 1, 8).unwrap();
        let mut h = laplacian::<f64>(&bx);
        h.mat[(0, 0)] += cr(0.3);
        h.mat[(1, 1)] -= cr(0.45);
        diagonalize(&h).unwrap()
    }

    fn simpson(f: impl Fn(f64) -> f64, t: f64, n: usize) -> f64 {
        let h = t / n as f64;
        let mut s = f(0.0) + f(t);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn sigma_p_matches_fock_quadrature() {
        for eig in [two_site(), system(1, 1, 1.0, 3)] {
            let beta = 1.2;
            let bx = &eig.bx;
            let fock = Fock::new(eig.dim());
            let h = eig.spectral(&eig.values.iter().map(|&e| cr(e)).collect::<Vec<_>>());
            let gibbs = Gibbs::new(&fock, &h, beta);
            let (lo, _) = bx.bounds();
            let x = Bond::new(vec![lo + 1], vec![lo]);
            let y = Bond::new(vec![lo], vec![lo + 1]);
            let ix = fock.quadratic(&bond_current::<f64>(bx, &x).unwrap());
            let iy = fock.quadratic(&bond_current::<f64>(bx, &y).unwrap());
            let integrand = |s: f64| {
                let ev = gibbs.evolve(&ix, s);
                let c = &iy * &ev - &ev * &iy;
                (gibbs.expect(&c) * Complex64::new(0.0, 1.0)).re
            };
            for t in [0.0, 0.8, 2.5] {
                let want = simpson(integrand, t, 400);
                let got = sigma_p(&eig, beta, &x, &y, t).unwrap();
                assert!((got - want).abs() < 1e-8, "{got} {want}");
                let back = sigma_p(&eig, beta, &x, &y, -t).unwrap();
                assert!((got - back).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sigma_d_examples() {
        let eig = system(1, 3, 1.0, 2);
        let half = Symbol { mat: CMat::identity(eig.dim(), eig.dim()) * cr(0.5) };
        let b = Bond::new(vec![1], vec![0]);
        assert_eq!(sigma_d(&half, &eig.bx, &b).unwrap(), 0.0);
        let sym = fermi_symbol(&eig, 3.0).unwrap();
        for x in -3..3 {
            let v = sigma_d(&sym, &eig.bx, &Bond::backward(&[x], 0)).unwrap();
            assert!(v.abs() <= 2.0);
        }
        // clean chain: −(2/π) ∫_0^π cos p f(2 − 2cos p) dp
        let beta = 1.0;
        let clean = system(1, 120, 0.0, 0);
        let sym = fermi_symbol(&clean, beta).unwrap();
        let got = sigma_d(&sym, &clean.bx, &Bond::backward(&[0], 0)).unwrap();
        let pi = std::f64::consts::PI;
        let want = -2.0 / pi
            * gauss_legendre(|p| p.cos() / (1.0 + (beta * (2.0 - 2.0 * p.cos())).exp()), 0.0, pi, 64);
        assert!((got - want).abs() < 1e-8, "{got} {want}");
    }

    #[test]
    fn xi_structure() {
        for (d, l) in [(1, 4), (2, 2)] {
            let eig = system(d, l + 2, 1.0, 7);
            let beta = 1.5;
            let tgrid = [0.0, 0.3, 1.0, 4.0];
            let xi = xi_p_l(&eig, beta, l, &tgrid).unwrap();
            assert!(xi[0].iter().all(|&v| v == 0.0));
            for m in &xi {
                assert!((m - m.transpose()).amax() < 1e-10);
                assert!(max_eigenvalue(m) <= 1e-8);
            }
            let neg = xi_p_l(&eig, beta, l, &[-1.0, 1.0]).unwrap();
            assert!((&neg[0] - &neg[1]).amax() < 1e-10);
            let sym = fermi_symbol(&eig, beta).unwrap();
            let xd = xi_d_l(&sym, l, &eig.bx).unwrap();
            for i in 0..d {
                for j in 0..d {
                    if i == j {
                        assert!(xd[(i, i)].abs() <= 2.0);
                    } else {
                        assert_eq!(xd[(i, j)], 0.0);
                    }
                }
            }
            assert!(xi_p_l(&eig, beta, l + 2, &tgrid).is_err());
        }
        let clean = system(2, 4, 0.0, 0);
        let xd = xi_d_l(&fermi_symbol(&clean, 1.0).unwrap(), 3, &clean.bx).unwrap();
        assert!((xd[(0, 0)] - xd[(1, 1)]).abs() < 1e-10);
        let hot = system(1, 6, 1.0, 1);
        let xd = xi_d_l(&fermi_symbol(&hot, 1e-3).unwrap(), 5, &hot.bx).unwrap();
        assert!(xd[(0, 0)].abs() < 1e-2);
    }

    #[test]
    fn chemical_potential_only_enters_fermi_factors() {
        let eig = system(1, 6, 1.0, 5);
        let tgrid = [0.0, 0.7, 2.0];
        let base = xi_p_l(&eig, 1.0, 4, &tgrid).unwrap();
        let bx = eig.bx.clone();
        let spec = DisorderSpec::uniform(1.0, 5);
        let r = sample_realization::<f64>(&spec, &bx, 0);
        let h = hamiltonian(&bx, &r, &spec, None, 0.0).unwrap();
        let same = diagonalize(&h.clone().shifted(0.0)).unwrap();
        let again = xi_p_l(&same, 1.0, 4, &tgrid).unwrap();
        for (a, b) in base.iter().zip(&again) {
            assert_eq!(a, b);
        }
        let shifted = diagonalize(&h.shifted(0.8)).unwrap();
        let moved = xi_p_l(&shifted, 1.0, 4, &tgrid).unwrap();
        assert!((&moved[2] - &base[2]).amax() > 1e-6);
        // a shift by c is the same as evaluating at f(ε + c)
        let manual = {
            let mut e = eig.clone();
            for v in e.values.iter_mut() {
                *v += 0.8;
            }
            xi_p_l(&e, 1.0, 4, &tgrid).unwrap()
        };
        assert!((&moved[2] - &manual[2]).amax() < 1e-9);
    }

    #[test]
    fn gamma_identity_and_quadrature() {
        let eig = two_site();
        let beta = 1.0;
        // averaging box Λ_0 = {0}, bond (1, 0)
        let tgrid = [0.0, 0.5, 1.3];
        let rep = gamma(&eig, beta, 0, 0, 0, &tgrid).unwrap();
        assert!(rep.residual <= 1e-7);
        let (i1, i0) = (eig.bx.index(&[1]).unwrap(), eig.bx.index(&[0]).unwrap());
        for (t, g) in tgrid.iter().zip(&rep.gamma) {
            let lit = gauss_legendre(
                |a| FourPointMap::new(&eig, beta, *t, a).unwrap().value([i1, i0], [i1, i0]).re,
                0.0,
                beta,
                20,
            );
            assert!((lit - g).abs() < 1e-10, "{lit} {g}");
        }
        let big = system(1, 6, 1.0, 4);
        assert!(gamma(&big, beta, 4, 0, 0, &[0.0, 0.4, 2.0]).unwrap().residual <= 1e-7);
        // clean isotropy: the off-diagonal change is a boundary term of the bond set
        let off = |l: usize| {
            let clean = system(2, l + 2, 0.0, 0);
            let g = gamma(&clean, beta, l, 0, 1, &[0.0, 0.5, 1.5]).unwrap().gamma;
            let d = gamma(&clean, beta, l, 0, 0, &[0.0, 0.5, 1.5]).unwrap().gamma;
            let o = g.iter().map(|x| (x - g[0]).abs()).fold(0.0, f64::max);
            let n = d.iter().map(|x| (x - d[0]).abs()).fold(0.0, f64::max);
            o / n
        };
        let (a, b) = (off(2), off(4));
        assert!(b < a && b < 0.05, "{a} {b}");
        let fine = gamma(&big, beta, 4, 0, 0, &[1.0, 1.0 + 1e-6]).unwrap();
        assert!((fine.gamma[1] - fine.gamma[0]).abs() < 1e-4);
    }

    #[test]
    fn green_kubo_examples() {
        let eig = two_site();
        assert!(green_kubo_check(&eig, 1.0, 0, &[0.0, 0.4, 1.7], 0, 0).unwrap() <= 1e-8);
        let eig = system(1, 5, 1.0, 1);
        let r = green_kubo_check(&eig, 1.0, 4, &[0.0, 0.5, 1.0, 3.0, 8.0], 0, 0).unwrap();
        assert!(r <= 1e-7, "{r}");
        let eig2 = system(2, 3, 1.0, 1);
        assert!(green_kubo_check(&eig2, 1.0, 2, &[0.0, 1.0], 0, 1).unwrap() <= 1e-7);
    }

    #[test]
    fn ensemble_and_conductivity() {
        let spec = DisorderSpec::new(crate::disorder::Distribution::TwoPoint, 0.0, 3).unwrap();
        let tgrid = [0.0, 0.5, 1.0];
        let m = macro_transport(&spec, 1, 1.0, &[3, 5], 2, 3, &tgrid).unwrap();
        if let Provenance::Ensemble { xi_d_stderr, .. } = &m.kernels[0].provenance {
            assert_eq!(xi_d_stderr[(0, 0)], 0.0);
        }
        assert!(m.table[0].cauchy_xi_d.is_none() && m.table[1].cauchy_xi_d.is_some());
        let c = conductivity(&m.kernels[1]).unwrap();
        assert_eq!(c.sigma[0], m.kernels[1].xi_d);
        let v = c.viscosity.unwrap();
        assert_eq!(v[0][(0, 0)], 0.0);
        let single = kernel_for_realization(&spec, 1, 1.0, 3, 2, 0, &tgrid).unwrap();
        assert!(conductivity(&single).is_err());
        let mut neg = m.kernels[1].clone();
        neg.tgrid = vec![-1.0, 0.0, 1.0];
        let c = conductivity(&neg).unwrap();
        assert!(c.sigma[0].iter().all(|&x| x == 0.0));
        let mut sing = m.kernels[1].clone();
        sing.xi_d *= 0.0;
        assert!(conductivity(&sing).unwrap().viscosity.is_none());
        assert!(macro_transport(&spec, 1, 1.0, &[3], 2, 1, &tgrid).is_err());
    }

    #[test]
    fn kernel_interpolation() {
        let k = kernel_for_realization(&DisorderSpec::uniform(1.0, 2), 1, 1.0, 3, 2, 0, &[0.0, 1.0, 2.0])
            .unwrap();
        let mid = k.xi_p_at(-0.5).unwrap();
        assert!((mid[(0, 0)] - 0.5 * k.xi_p[1][(0, 0)]).abs() < 1e-14);
        assert!(k.xi_p_at(3.0).is_err());
    }
}
