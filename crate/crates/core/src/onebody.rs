//! One-particle operators: Laplacian, Peierls Hamiltonian, eigensystems, Fermi symbol.

use nalgebra::ComplexField;

use crate::disorder::{DisorderSpec, Realization};
use crate::error::{contract, Error, Result};
use crate::lattice_fields::{nearest_bonds, Bond, BondMode, LatticeBox, VectorPotential};
use crate::scalar::{ci, cis, cr, max_abs, CMat, C};
use crate::Scalar;

/// Default cap on the dimension handed to the dense eigensolver.
pub const EIGEN_CAP: usize = 2500;

/// Eigenvalue gap below which eigenvectors are treated as one cluster.
const CLUSTER_GAP: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct HermitianOp<T: Scalar> {
    pub bx: LatticeBox,
    pub mat: CMat<T>,
}

impl<T: Scalar> HermitianOp<T> {
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// `‖M − M†‖_max`.
    pub fn hermiticity_defect(&self) -> T {
        crate::scalar::max_abs_diff(&self.mat, &self.mat.adjoint())
    }

    /// Adds `c·1`, a constant chemical potential.
    pub fn shifted(mut self, c: T) -> Self {
        for i in 0..self.dim() {
            self.mat[(i, i)] += cr(c);
        }
        self
    }
}

#[derive(Clone, Debug)]
pub struct EigenSystem<T: Scalar> {
    pub bx: LatticeBox,
    /// Ascending.
    pub values: Vec<T>,
    /// Columns are eigenvectors.
    pub vectors: CMat<T>,
    pub residual: T,
}

/// One-particle density matrix.
#[derive(Clone, Debug)]
pub struct Symbol<T: Scalar> {
    pub mat: CMat<T>,
}

impl<T: Scalar> Symbol<T> {
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// `ϱ(a*_{x²} a_{x¹}) = ⟨e_{x¹}, d e_{x²}⟩` for site indices.
    pub fn entry(&self, i1: usize, i2: usize) -> C<T> {
        self.mat[(i1, i2)]
    }
}

pub fn laplacian<T: Scalar>(bx: &LatticeBox) -> HermitianOp<T> {
    let n = bx.len();
    let mut mat = CMat::<T>::zeros(n, n);
    let diag = T::from_usize(2 * bx.d()).unwrap();
    for i in 0..n {
        mat[(i, i)] = cr(diag);
    }
    for b in nearest_bonds(bx, BondMode::Interior).bonds {
        let (i, j) = (bx.index(&b.from).unwrap(), bx.index(&b.to).unwrap());
        mat[(i, j)] = cr(-T::one());
    }
    HermitianOp { bx: bx.clone(), mat }
}

/// `exp(i ∫_0^1 A(t, αy + (1−α)x)·(y − x) dα)` for the bond `(x, y)`.
pub fn peierls_phase<T: Scalar>(vp: &VectorPotential, t: T, bond: &Bond) -> Result<C<T>> {
    Ok(cis(vp.line_integral(t, bond)?))
}

/// `Δ_d^{A(t)} + λ V_ω` on the box (open boundary).
pub fn hamiltonian<T: Scalar>(
    bx: &LatticeBox,
    realization: &Realization<T>,
    spec: &DisorderSpec,
    vp: Option<&VectorPotential>,
    t: T,
) -> Result<HermitianOp<T>> {
    if &realization.bx != bx {
        return Err(contract("realization was sampled on a different box"));
    }
    let mut h = laplacian::<T>(bx);
    let lambda = T::lit(spec.lambda);
    for (i, v) in realization.values.iter().enumerate() {
        h.mat[(i, i)] += cr(lambda * *v);
    }
    if let Some(vp) = vp {
        for b in nearest_bonds(bx, BondMode::Interior).bonds {
            let (i, j) = (bx.index(&b.from).unwrap(), bx.index(&b.to).unwrap());
            h.mat[(i, j)] = -peierls_phase(vp, t, &b)?;
        }
    }
    Ok(h)
}

fn is_real<T: Scalar>(m: &CMat<T>) -> bool {
    m.iter().all(|z| z.im == T::zero())
}

/// Raw eigenpairs, ascending, without canonicalization or residual check. The
/// decomposition runs in double precision whatever `T` is.
pub(crate) fn eigh_raw<T: Scalar>(m: &CMat<T>) -> (Vec<T>, CMat<T>) {
    let n = m.nrows();
    let (vals, vecs) = if is_real(m) {
        let a = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)].re.as_f64());
        let e = a.self_adjoint_eigen(faer::Side::Lower).expect("eigendecomposition failed");
        let u = e.U();
        let vals: Vec<f64> = (0..n).map(|k| e.S()[k]).collect();
        (vals, CMat::from_fn(n, n, |i, j| cr(T::lit(u[(i, j)]))))
    } else {
        let a = faer::Mat::<faer::c64>::from_fn(n, n, |i, j| {
            faer::c64::new(m[(i, j)].re.as_f64(), m[(i, j)].im.as_f64())
        });
        let e = a.self_adjoint_eigen(faer::Side::Lower).expect("eigendecomposition failed");
        let u = e.U();
        let vals: Vec<f64> = (0..n).map(|k| e.S()[k].re).collect();
        (vals, CMat::from_fn(n, n, |i, j| C::new(T::lit(u[(i, j)].re), T::lit(u[(i, j)].im))))
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let values = order.iter().map(|&k| T::lit(vals[k])).collect();
    let vectors = CMat::from_fn(n, n, |i, j| vecs[(i, order[j])]);
    (values, vectors)
}

/// Makes the eigenbasis reproducible: phases fixed on non-degenerate vectors, degenerate
/// clusters rebuilt by Gram–Schmidt of the cluster projector against the coordinate basis.
/// Returns the largest eigenvalue spread inside a rebuilt cluster.
fn canonicalize<T: Scalar>(values: &[T], vectors: &mut CMat<T>) -> T {
    let n = values.len();
    let gap = T::lit(CLUSTER_GAP);
    let mut spread = T::zero();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[end] - values[end - 1] < gap {
            end += 1;
        }
        if end - start == 1 {
            let col = vectors.column(start);
            let top = col.iter().fold(T::zero(), |a, z| a.max(z.modulus()));
            let thresh = top * T::lit(1e-3);
            if let Some(z) = col.iter().find(|z| z.modulus() >= thresh) {
                let phase = z.conj() / cr(z.modulus());
                vectors.column_mut(start).scale_mut_complex(phase);
            }
        } else {
            rebuild_cluster(vectors, start, end);
            spread = spread.max(values[end - 1] - values[start]);
        }
        start = end;
    }
    spread
}

trait ScaleComplex<T: Scalar> {
    fn scale_mut_complex(&mut self, s: C<T>);
}

impl<T: Scalar, S> ScaleComplex<T> for nalgebra::Matrix<C<T>, nalgebra::Dyn, nalgebra::U1, S>
where
    S: nalgebra::StorageMut<C<T>, nalgebra::Dyn, nalgebra::U1>,
{
    fn scale_mut_complex(&mut self, s: C<T>) {
        for z in self.iter_mut() {
            *z *= s;
        }
    }
}

fn rebuild_cluster<T: Scalar>(vectors: &mut CMat<T>, start: usize, end: usize) {
    let n = vectors.nrows();
    let k = end - start;
    let block = vectors.columns(start, k).into_owned();
    let mut basis: Vec<nalgebra::DVector<C<T>>> = Vec::with_capacity(k);
    let floor = T::lit(1e-6);
    for j in 0..n {
        if basis.len() == k {
            break;
        }
        // P e_j = block · (row j of block)†
        let coeff = block.row(j).adjoint();
        let mut u = &block * coeff;
        for w in &basis {
            let p = w.dotc(&u);
            u -= w * p;
        }
        let norm = u.norm();
        if norm > floor {
            basis.push(u.unscale(norm));
        }
    }
    if basis.len() == k {
        for (c, w) in basis.into_iter().enumerate() {
            vectors.set_column(start + c, &w);
        }
    }
}

pub fn diagonalize<T: Scalar>(h: &HermitianOp<T>) -> Result<EigenSystem<T>> {
    diagonalize_capped(h, EIGEN_CAP)
}

pub fn diagonalize_capped<T: Scalar>(h: &HermitianOp<T>, cap: usize) -> Result<EigenSystem<T>> {
    let n = h.dim();
    if n > cap {
        return Err(Error::Capacity(format!("dimension {n} exceeds eigensolver cap {cap}")));
    }
    let (values, mut vectors) = eigh_raw(&h.mat);
    // mixing a near-degenerate cluster costs up to its spread in the residual
    let spread = canonicalize(&values, &mut vectors);
    let mut hv = &h.mat * &vectors;
    for j in 0..n {
        let e = cr(values[j]);
        for i in 0..n {
            hv[(i, j)] -= vectors[(i, j)] * e;
        }
    }
    let residual = (0..n)
        .map(|j| hv.column(j).norm())
        .fold(T::zero(), |a, b| a.max(b));
    let scale = T::one().max(max_abs(&h.mat)) * T::from_usize(n.max(1)).unwrap().sqrt();
    if residual > T::tol(1e-10) * scale + spread || !residual.is_finite() {
        return Err(Error::Numerical(format!(
            "eigensolver residual {} exceeds tolerance",
            residual.as_f64()
        )));
    }
    Ok(EigenSystem { bx: h.bx.clone(), values, vectors, residual })
}

impl<T: Scalar> EigenSystem<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(g) V†`.
    pub fn spectral(&self, g: &[C<T>]) -> CMat<T> {
        let mut w = self.vectors.clone();
        for (j, gj) in g.iter().enumerate() {
            for z in w.column_mut(j).iter_mut() {
                *z *= *gj;
            }
        }
        w * self.vectors.adjoint()
    }

    /// `V† M V`.
    pub fn to_eigenbasis(&self, m: &CMat<T>) -> CMat<T> {
        self.vectors.adjoint() * m * &self.vectors
    }

    pub fn norm_op(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |a, v| a.max(v.abs()))
    }

    /// Frequency differences below this are treated as degenerate.
    pub fn degeneracy_threshold(&self) -> T {
        T::lit(1e-12) * T::one().max(self.norm_op())
    }

    /// Fermi factors `f(ε_n)`.
    pub fn occupations(&self, beta: T) -> Vec<T> {
        self.values.iter().map(|&e| fermi_weight(T::zero(), beta, e)).collect()
    }
}

/// `F_α^β(κ) = e^{ακ} / (1 + e^{βκ})`, evaluated without overflow for `0 ≤ α ≤ β`.
pub fn fermi_weight<T: Scalar>(alpha: T, beta: T, kappa: T) -> T {
    if kappa > T::zero() {
        ((alpha - beta) * kappa).exp() / (T::one() + (-beta * kappa).exp())
    } else {
        (alpha * kappa).exp() / (T::one() + (beta * kappa).exp())
    }
}

pub fn operator_function<T: Scalar>(
    eig: &EigenSystem<T>,
    f: impl Fn(T) -> T,
) -> Result<HermitianOp<T>> {
    let mut g = Vec::with_capacity(eig.dim());
    for &e in &eig.values {
        let v = f(e);
        if !v.is_finite() {
            return Err(Error::Numerical(format!("f is not finite at eigenvalue {}", e.as_f64())));
        }
        g.push(cr(v));
    }
    Ok(HermitianOp { bx: eig.bx.clone(), mat: eig.spectral(&g) })
}

/// `d_fermi = (1 + e^{βH})^{-1}`.
pub fn fermi_symbol<T: Scalar>(eig: &EigenSystem<T>, beta: T) -> Result<Symbol<T>> {
    if !(beta > T::zero()) {
        return Err(contract("beta must be positive"));
    }
    let op = operator_function(eig, |e| fermi_weight(T::zero(), beta, e))?;
    Ok(Symbol { mat: op.mat })
}

/// `∫_0^t e^{isΔ} ds`; the linear branch is used for `|Δ| ≤ thresh`.
pub fn phase_integral<T: Scalar>(delta: T, t: T, thresh: T) -> C<T> {
    if delta.abs() <= thresh {
        cr(t)
    } else {
        (cis(t * delta) - cr(T::one())) / ci(delta)
    }
}

/// `e^{−itH}`.
pub fn propagator<T: Scalar>(eig: &EigenSystem<T>, t: T) -> CMat<T> {
    let g: Vec<C<T>> = eig.values.iter().map(|&e| cis(-t * e)).collect();
    eig.spectral(&g)
}
