//! Complex-time two-point functions, the four-point map, current fluctuations and decay.

use nalgebra::ComplexField;

use crate::error::{contract, geometry, Result};
use crate::lattice_fields::{build_box, Bond, LatticeBox};
use crate::onebody::{fermi_weight, phase_integral, EigenSystem};
use crate::scalar::{ci, cis, cr, CMat, C};
use crate::Scalar;

fn check_alpha<T: Scalar>(beta: T, alpha: T) -> Result<()> {
    if !(beta > T::zero()) {
        return Err(contract("beta must be positive"));
    }
    if !(alpha >= T::zero() && alpha <= beta) {
        return Err(contract(format!(
            "alpha = {} outside [0, beta = {}]",
            alpha.as_f64(),
            beta.as_f64()
        )));
    }
    Ok(())
}

fn site_index(bx: &LatticeBox, x: &[i64]) -> Result<usize> {
    bx.index(x).ok_or_else(|| geometry(format!("site {x:?} outside the box")))
}

/// `e^{−itH} F_α^β(H)` on the whole box.
#[derive(Clone, Debug)]
pub struct TwoPointMatrix<T: Scalar> {
    pub t: T,
    pub alpha: T,
    pub beta: T,
    mat: CMat<T>,
}

impl<T: Scalar> TwoPointMatrix<T> {
    pub fn new(eig: &EigenSystem<T>, beta: T, t: T, alpha: T) -> Result<Self> {
        check_alpha(beta, alpha)?;
        let g: Vec<C<T>> = eig
            .values
            .iter()
            .map(|&e| cis(-t * e) * cr(fermi_weight(alpha, beta, e)))
            .collect();
        Ok(TwoPointMatrix { t, alpha, beta, mat: eig.spectral(&g) })
    }

    /// `C_{t+iα}(x¹, x²)` by site index.
    #[inline]
    pub fn value(&self, i1: usize, i2: usize) -> C<T> {
        self.mat[(i2, i1)]
    }

    pub fn matrix(&self) -> &CMat<T> {
        &self.mat
    }
}

pub fn two_point<T: Scalar>(
    eig: &EigenSystem<T>,
    beta: T,
    t: T,
    alpha: T,
    x1: &[i64],
    x2: &[i64],
) -> Result<C<T>> {
    check_alpha(beta, alpha)?;
    let (i1, i2) = (site_index(&eig.bx, x1)?, site_index(&eig.bx, x2)?);
    // a single entry does not need the full matrix
    let mut acc = C::new(T::zero(), T::zero());
    for (n, &e) in eig.values.iter().enumerate() {
        let w = cis(-t * e) * cr(fermi_weight(alpha, beta, e));
        acc += w * eig.vectors[(i2, n)] * eig.vectors[(i1, n)].conj();
    }
    Ok(acc)
}

/// The map `𝔠_{t+iα}` backed by the two cached two-point matrices it needs.
#[derive(Clone, Debug)]
pub struct FourPointMap<T: Scalar> {
    fwd: TwoPointMatrix<T>,
    bwd: TwoPointMatrix<T>,
}

impl<T: Scalar> FourPointMap<T> {
    pub fn new(eig: &EigenSystem<T>, beta: T, t: T, alpha: T) -> Result<Self> {
        Ok(FourPointMap {
            fwd: TwoPointMatrix::new(eig, beta, t, alpha)?,
            bwd: TwoPointMatrix::new(eig, beta, -t, beta - alpha)?,
        })
    }

    /// `𝔠(x, y)` for ordered site-index pairs.
    pub fn value(&self, x: [usize; 2], y: [usize; 2]) -> C<T> {
        let mut acc = C::new(T::zero(), T::zero());
        for (p, sp) in [([0, 1], 1), ([1, 0], -1)] {
            for (q, sq) in [([0, 1], 1), ([1, 0], -1)] {
                let term = self.fwd.value(y[q[0]], x[p[0]]) * self.bwd.value(x[p[1]], y[q[1]]);
                if sp * sq > 0 {
                    acc += term;
                } else {
                    acc -= term;
                }
            }
        }
        acc
    }
}

pub fn four_point<T: Scalar>(
    eig: &EigenSystem<T>,
    beta: T,
    t: T,
    alpha: T,
    x: (&[i64], &[i64]),
    y: (&[i64], &[i64]),
) -> Result<C<T>> {
    let bx = &eig.bx;
    let xi = [site_index(bx, x.0)?, site_index(bx, x.1)?];
    let yi = [site_index(bx, y.0)?, site_index(bx, y.1)?];
    Ok(FourPointMap::new(eig, beta, t, alpha)?.value(xi, yi))
}

/// Sparse coefficient vector over sites.
pub type SiteVector<T> = Vec<(Vec<i64>, C<T>)>;

/// A short-range current observable.
#[derive(Clone, Debug)]
pub enum CurrentElement<T: Scalar> {
    /// `I_(x¹,x²) = −2 Im(a*_{x²} a_{x¹})`.
    Bond(Bond),
    /// `Im(a*(ψ₁) a(ψ₂))`.
    General { psi1: SiteVector<T>, psi2: SiteVector<T> },
}

/// Adds the one-particle matrix of the bond current `I_(x¹,x²)` times `w`.
pub(crate) fn add_bond_current<T: Scalar>(m: &mut CMat<T>, i1: usize, i2: usize, w: C<T>) {
    m[(i2, i1)] += ci(T::one()) * w;
    m[(i1, i2)] -= ci(T::one()) * w;
}

impl<T: Scalar> CurrentElement<T> {
    pub fn bond(from: Vec<i64>, to: Vec<i64>) -> Self {
        CurrentElement::Bond(Bond::new(from, to))
    }

    /// Adds `h(χ_z I)`, the one-particle matrix of the translate, so that the observable is
    /// `Σ h_ij a*_i a_j`.
    fn add_translate(&self, bx: &LatticeBox, z: &[i64], m: &mut CMat<T>) -> Result<()> {
        let shift = |x: &[i64]| -> Result<usize> {
            let y: Vec<i64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
            bx.index(&y)
                .ok_or_else(|| geometry(format!("translate {y:?} leaves the ambient box")))
        };
        match self {
            CurrentElement::Bond(b) => {
                add_bond_current(m, shift(&b.from)?, shift(&b.to)?, cr(T::one()));
            }
            CurrentElement::General { psi1, psi2 } => {
                // (|ψ₁⟩⟨ψ₂| − |ψ₂⟩⟨ψ₁|) / 2i
                let half = -ci(T::lit(0.5));
                for (x, a) in psi1 {
                    let i = shift(x)?;
                    for (y, b) in psi2 {
                        let j = shift(y)?;
                        m[(i, j)] += half * *a * b.conj();
                        m[(j, i)] -= half * *b * a.conj();
                    }
                }
            }
        }
        Ok(())
    }

    /// Real coefficients `c` with `I = Σ c · Im(a*_i a_j)` over index pairs `(i, j)`, if any.
    fn real_pairs(&self, bx: &LatticeBox, z: &[i64]) -> Result<Option<Vec<([usize; 2], T)>>> {
        let shift = |x: &[i64]| -> Result<usize> {
            let y: Vec<i64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
            bx.index(&y)
                .ok_or_else(|| geometry(format!("translate {y:?} leaves the ambient box")))
        };
        match self {
            CurrentElement::Bond(b) => {
                Ok(Some(vec![([shift(&b.to)?, shift(&b.from)?], T::lit(-2.0))]))
            }
            CurrentElement::General { psi1, psi2 } => {
                if psi1.iter().chain(psi2).any(|(_, c)| c.im != T::zero()) {
                    return Ok(None);
                }
                let mut out = Vec::new();
                for (x, a) in psi1 {
                    for (y, b) in psi2 {
                        out.push(([shift(x)?, shift(y)?], a.re * b.re));
                    }
                }
                Ok(Some(out))
            }
        }
    }
}

/// `Σ_{z ∈ Λ_l} h(χ_z I)`.
pub fn fluctuation_matrix<T: Scalar>(
    bx: &LatticeBox,
    l: usize,
    elem: &CurrentElement<T>,
) -> Result<CMat<T>> {
    let avg = build_box(bx.d(), l)?;
    let n = bx.len();
    let mut m = CMat::zeros(n, n);
    for z in avg.sites() {
        elem.add_translate(bx, z, &mut m)?;
    }
    Ok(m)
}

/// Fluctuation data of a pair of elements, kept in the eigenbasis so that time translates
/// are diagonal phases.
#[derive(Clone, Debug)]
pub struct FluctuationPair<T: Scalar> {
    /// `conj(B̃_nm) Ã_nm (1 − f_n) f_m / |Λ_l|`.
    weights: CMat<T>,
    values: Vec<T>,
    thresh: T,
}

impl<T: Scalar> FluctuationPair<T> {
    pub fn new(
        eig: &EigenSystem<T>,
        beta: T,
        l: usize,
        first: &CurrentElement<T>,
        second: &CurrentElement<T>,
    ) -> Result<Self> {
        check_alpha(beta, T::zero())?;
        let vol = T::from_usize(build_box(eig.bx.d(), l)?.len()).unwrap();
        let b = eig.to_eigenbasis(&fluctuation_matrix(&eig.bx, l, first)?);
        let a = eig.to_eigenbasis(&fluctuation_matrix(&eig.bx, l, second)?);
        let f = eig.occupations(beta);
        let n = eig.dim();
        let weights = CMat::from_fn(n, n, |i, j| {
            b[(i, j)].conj() * a[(i, j)] * cr((T::one() - f[i]) * f[j] / vol)
        });
        Ok(FluctuationPair { weights, values: eig.values.clone(), thresh: eig.degeneracy_threshold() })
    }

    /// `⟨I, τ_s(I')⟩_{𝓘,l}`.
    pub fn inner_at(&self, s: T) -> C<T> {
        self.sum(|delta| cis(s * delta))
    }

    /// `∫_0^t ⟨I, τ_s(I')⟩_{𝓘,l} ds`.
    pub fn integrated(&self, t: T) -> C<T> {
        self.sum(|delta| phase_integral(delta, t, self.thresh))
    }

    fn sum(&self, phase: impl Fn(T) -> C<T>) -> C<T> {
        let n = self.values.len();
        let mut acc = C::new(T::zero(), T::zero());
        for j in 0..n {
            let mut col = C::new(T::zero(), T::zero());
            for i in 0..n {
                let w = self.weights[(i, j)];
                if w.re != T::zero() || w.im != T::zero() {
                    col += w * phase(self.values[i] - self.values[j]);
                }
            }
            acc += col;
        }
        acc
    }
}

/// `⟨I, I'⟩_{𝓘,l} = ϱ(𝔽^(l)(I)* 𝔽^(l)(I'))` via the quasi-free contraction
/// `|Λ_l|⁻¹ tr(B† (1 − d) A d)`.
pub fn fluctuation_inner<T: Scalar>(
    eig: &EigenSystem<T>,
    beta: T,
    l: usize,
    first: &CurrentElement<T>,
    second: &CurrentElement<T>,
) -> Result<C<T>> {
    Ok(FluctuationPair::new(eig, beta, l, first, second)?.inner_at(T::zero()))
}

/// Same form as [`fluctuation_inner`], evaluated as the double translate sum of
/// `𝔠_{0}` over the elements' `Im(a*_i a_j)` expansions. Elements must have real coefficients.
pub fn fluctuation_inner_four_point<T: Scalar>(
    eig: &EigenSystem<T>,
    beta: T,
    l: usize,
    first: &CurrentElement<T>,
    second: &CurrentElement<T>,
) -> Result<C<T>> {
    let avg = build_box(eig.bx.d(), l)?;
    let map = FourPointMap::new(eig, beta, T::zero(), T::zero())?;
    let expand = |e: &CurrentElement<T>| -> Result<Vec<([usize; 2], T)>> {
        let mut all = Vec::new();
        for z in avg.sites() {
            all.extend(
                e.real_pairs(&eig.bx, z)?
                    .ok_or_else(|| contract("four-point form needs real coefficients"))?,
            );
        }
        Ok(all)
    };
    let ys = expand(first)?;
    let xs = expand(second)?;
    let mut acc = C::new(T::zero(), T::zero());
    for (y, cy) in &ys {
        for (x, cx) in &xs {
            acc += map.value(*x, *y) * cr(*cx * *cy);
        }
    }
    let vol = T::from_usize(avg.len()).unwrap();
    Ok(acc / cr(T::lit(4.0) * vol))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayRow {
    /// `ℓ¹` distance from the origin.
    pub radius: usize,
    pub max_abs: f64,
}

/// `max |C_{t+iα}(0, x)|` over shells of fixed `|x|₁`.
pub fn decay_profile<T: Scalar>(
    eig: &EigenSystem<T>,
    beta: T,
    t: T,
    alpha: T,
) -> Result<Vec<DecayRow>> {
    check_alpha(beta, alpha)?;
    let delta = beta / T::lit(10.0);
    if alpha < delta || alpha > beta - delta {
        return Err(contract("alpha must lie in [β/10, 9β/10]"));
    }
    let c = TwoPointMatrix::new(eig, beta, t, alpha)?;
    let o = eig.bx.index_of_origin();
    let mut rows: Vec<DecayRow> = Vec::new();
    for (i, x) in eig.bx.sites().enumerate() {
        let r = x.iter().map(|c| c.unsigned_abs() as usize).sum::<usize>();
        if rows.len() <= r {
            rows.resize_with(r + 1, || DecayRow { radius: 0, max_abs: 0.0 });
        }
        rows[r].radius = r;
        rows[r].max_abs = rows[r].max_abs.max(c.value(o, i).modulus().as_f64());
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{sample_realization, DisorderSpec};
    use crate::lattice_fields::build_range;
    use crate::fock::{current_operator as fock_current, Fock, Gibbs, M};
    use crate::onebody::{diagonalize, fermi_symbol, hamiltonian, laplacian, propagator};
    use crate::scalar::max_abs_diff;
    use num_complex::Complex64;

    fn system(d: usize, l: usize, lambda: f64, seed: u64) -> EigenSystem<f64> {
        let bx = build_box(d, l).unwrap();
        let spec = DisorderSpec::uniform(lambda, seed);
        let r = sample_realization::<f64>(&spec, &bx, 0);
        diagonalize(&hamiltonian(&bx, &r, &spec, None, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn two_point_examples() {
        let eig = system(1, 3, 1.0, 5);
        let beta = 1.3;
        let d = fermi_symbol(&eig, beta).unwrap();
        for x in -3..=3i64 {
            let c = two_point(&eig, beta, 0.0, 0.0, &[x], &[x]).unwrap();
            let i = eig.bx.index(&[x]).unwrap();
            assert!((c - d.mat[(i, i)]).modulus() < 1e-13);
            assert!(c.re > 0.0 && c.re < 1.0);
            // KMS edges
            let c_beta = two_point(&eig, beta, 0.0, beta, &[x], &[x]).unwrap();
            assert!((c + c_beta - cr(1.0)).modulus() < 1e-10);
        }
        assert!(two_point(&eig, beta, 0.0, 1.5, &[0], &[0]).is_err());
        assert!(two_point(&eig, beta, 0.0, -0.1, &[0], &[0]).is_err());
        let clean = system(1, 4, 0.0, 1);
        let t = 0.9;
        let alpha = 0.4;
        let f = crate::onebody::operator_function(&clean, |e| fermi_weight(alpha, beta, e)).unwrap();
        let dense = propagator(&clean, t) * f.mat;
        let cm = TwoPointMatrix::new(&clean, beta, t, alpha).unwrap();
        for x1 in -4..=4i64 {
            for x2 in -4..=4i64 {
                let (i1, i2) = (clean.bx.index(&[x1]).unwrap(), clean.bx.index(&[x2]).unwrap());
                let v = two_point(&clean, beta, t, alpha, &[x1], &[x2]).unwrap();
                assert!((v - dense[(i2, i1)]).modulus() < 1e-12);
                assert!((v - cm.value(i1, i2)).modulus() < 1e-12);
                assert!(v.modulus() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn four_point_examples() {
        let eig = system(1, 2, 1.0, 8);
        let (beta, t, alpha) = (1.0, 0.7, 0.3);
        let map = FourPointMap::new(&eig, beta, t, alpha).unwrap();
        let n = eig.dim();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for e in 0..n {
                        let v = map.value([a, b], [c, e]);
                        assert!((v + map.value([b, a], [c, e])).modulus() < 1e-14);
                        assert!(v.modulus() <= 4.0 + 1e-12);
                    }
                }
            }
        }
        // two sites, hand expansion
        let bx = build_range(1, -1, 0, 8).unwrap();
        let eig = diagonalize(&laplacian::<f64>(&bx)).unwrap();
        let c1 = TwoPointMatrix::new(&eig, beta, t, alpha).unwrap();
        let c2 = TwoPointMatrix::new(&eig, beta, -t, beta - alpha).unwrap();
        let (x, y) = ([0usize, 1], [1usize, 0]);
        let want = c1.value(y[0], x[0]) * c2.value(x[1], y[1])
            - c1.value(y[0], x[1]) * c2.value(x[0], y[1])
            - c1.value(y[1], x[0]) * c2.value(x[1], y[0])
            + c1.value(y[1], x[1]) * c2.value(x[0], y[0]);
        let got = four_point(&eig, beta, t, alpha, (&[-1], &[0]), (&[0], &[-1])).unwrap();
        assert!((got - want).modulus() < 1e-14);
    }

    #[test]
    fn wick_oracle_single_translate() {
        let eig = system(1, 2, 1.0, 21);
        let beta = 0.8;
        let fock = Fock::new(eig.dim());
        let h = eig.spectral(&eig.values.iter().map(|&e| cr(e)).collect::<Vec<_>>());
        let gibbs = Gibbs::new(&fock, &h, beta);
        let n = eig.dim();
        // ϱ(a*_i a_j) = d[j][i]
        let d = fermi_symbol(&eig, beta).unwrap();
        for i in 0..n {
            for j in 0..n {
                let v = gibbs.expect(&(fock.create(i) * &fock.ann[j]));
                assert!((v - d.mat[(j, i)]).modulus() < 1e-10);
            }
        }
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let elems = [
            CurrentElement::bond(vec![0], vec![1]),
            CurrentElement::bond(vec![-1], vec![-2]),
            CurrentElement::General {
                psi1: vec![(vec![0], c(0.3, 0.2)), (vec![1], c(-1.0, 0.0))],
                psi2: vec![(vec![-1], c(0.5, -0.7)), (vec![0], c(0.1, 0.0))],
            },
        ];
        for e1 in &elems {
            for e2 in &elems {
                let a = fock_current(&fock, &eig.bx, e1);
                let b = fock_current(&fock, &eig.bx, e2);
                let truncated =
                    gibbs.expect(&(a.adjoint() * &b)) - gibbs.expect(&a).conj() * gibbs.expect(&b);
                let got = fluctuation_inner(&eig, beta, 0, e1, e2).unwrap();
                assert!((got - truncated).modulus() < 1e-10, "{got} vs {truncated}");
                // adding a constant to the observable is invisible after centering
                let id = M::identity(fock.dim(), fock.dim()) * c(2.5, 0.0);
                let a2 = &a + &id;
                let t2 =
                    gibbs.expect(&(a2.adjoint() * &b)) - gibbs.expect(&a2).conj() * gibbs.expect(&b);
                assert!((t2 - truncated).modulus() < 1e-10);
            }
        }
        // bond current as a general element
        let general = CurrentElement::General {
            psi1: vec![(vec![1], c(-2.0, 0.0))],
            psi2: vec![(vec![0], c(1.0, 0.0))],
        };
        let a = fluctuation_matrix(&eig.bx, 0, &general).unwrap();
        let b = fluctuation_matrix(&eig.bx, 0, &elems[0]).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-15);
    }

    #[test]
    fn four_point_form_agrees_with_trace_form() {
        let eig = system(1, 6, 1.0, 4);
        let beta = 1.0;
        let c = |re: f64| Complex64::new(re, 0.0);
        let elems = [
            CurrentElement::bond(vec![1], vec![0]),
            CurrentElement::General {
                psi1: vec![(vec![0], c(0.5)), (vec![1], c(-1.0))],
                psi2: vec![(vec![1], c(2.0))],
            },
        ];
        for l in [0, 2] {
            for e1 in &elems {
                for e2 in &elems {
                    let a = fluctuation_inner(&eig, beta, l, e1, e2).unwrap();
                    let b = fluctuation_inner_four_point(&eig, beta, l, e1, e2).unwrap();
                    assert!((a - b).modulus() < 1e-12, "{a} {b}");
                    let swapped = fluctuation_inner(&eig, beta, l, e2, e1).unwrap();
                    assert!((a - swapped.conj()).modulus() < 1e-12);
                }
                let diag = fluctuation_inner(&eig, beta, l, e1, e1).unwrap();
                assert!(diag.im.abs() < 1e-12 && diag.re >= -1e-12);
            }
        }
        let cplx = CurrentElement::General {
            psi1: vec![(vec![0], Complex64::new(0.0, 1.0))],
            psi2: vec![(vec![1], c(1.0))],
        };
        assert!(fluctuation_inner_four_point(&eig, beta, 0, &cplx, &elems[0]).is_err());
        // translates must stay inside the ambient box
        assert!(fluctuation_inner(&eig, beta, 6, &elems[0], &elems[0]).is_err());
    }

    #[test]
    fn fluctuations_stabilize_with_l() {
        let eig = system(1, 40, 1.0, 12);
        let e = CurrentElement::bond(vec![1], vec![0]);
        let vals: Vec<f64> = [4, 8, 16, 32]
            .iter()
            .map(|&l| fluctuation_inner(&eig, 1.0, l, &e, &e).unwrap().re)
            .collect();
        let diffs: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        assert!(diffs[2] < diffs[0], "{vals:?}");
    }

    #[test]
    fn decay_examples() {
        let eig = system(1, 12, 5.0, 3);
        let beta = 2.0;
        let rows = decay_profile(&eig, beta, 0.0, 1.0).unwrap();
        assert!(rows[0].max_abs <= 1.0);
        let xs: Vec<f64> = rows[1..].iter().map(|r| r.radius as f64).collect();
        let ys: Vec<f64> = rows[1..].iter().map(|r| r.max_abs.max(1e-300).ln()).collect();
        let (slope, _) = crate::stats::linear_fit(&xs, &ys);
        assert!(slope < 0.0);
        assert!(decay_profile(&eig, beta, 0.0, 0.1).is_err());
        let clean = system(1, 6, 0.0, 0);
        let c = TwoPointMatrix::new(&clean, 1.0, 0.0, 0.5).unwrap();
        assert!(c.matrix().iter().all(|z| z.im.abs() < 1e-12));
    }
}
