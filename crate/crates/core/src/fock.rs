//! Brute-force many-body oracle on the full Fock space of a few sites. Dimension `2^n`, so
//! keep `n` small.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::correlations::{CurrentElement, SiteVector};
use crate::lattice_fields::LatticeBox;

pub type M = DMatrix<Complex64>;

pub struct Fock {
    pub modes: usize,
    pub ann: Vec<M>,
}

impl Fock {
    /// Jordan–Wigner annihilators for `modes` sites.
    pub fn new(modes: usize) -> Self {
        let dim = 1usize << modes;
        let ann = (0..modes)
            .map(|j| {
                let mut a = M::zeros(dim, dim);
                for b in 0..dim {
                    if b & (1 << j) != 0 {
                        let sign = if (b & ((1 << j) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                        a[(b ^ (1 << j), b)] = Complex64::new(sign, 0.0);
                    }
                }
                a
            })
            .collect();
        Fock { modes, ann }
    }

    pub fn dim(&self) -> usize {
        1 << self.modes
    }

    pub fn create(&self, i: usize) -> M {
        self.ann[i].adjoint()
    }

    /// `Σ h_ij a*_i a_j`.
    pub fn quadratic(&self, h: &M) -> M {
        let mut q = M::zeros(self.dim(), self.dim());
        for i in 0..self.modes {
            for j in 0..self.modes {
                if h[(i, j)] != Complex64::new(0.0, 0.0) {
                    q += (self.create(i) * &self.ann[j]) * h[(i, j)];
                }
            }
        }
        q
    }

    /// `a*(ψ)` with `ψ` linear.
    pub fn create_vec(&self, psi: &[Complex64]) -> M {
        let mut m = M::zeros(self.dim(), self.dim());
        for (i, c) in psi.iter().enumerate() {
            m += self.create(i) * *c;
        }
        m
    }

    pub fn ann_vec(&self, psi: &[Complex64]) -> M {
        self.create_vec(psi).adjoint()
    }
}

/// `f(Q)` for Hermitian `Q`.
pub fn herm_fn(q: &M, f: impl Fn(f64) -> Complex64) -> M {
    let (vals, vecs) = crate::onebody::eigh_raw(q);
    let n = q.nrows();
    let mut w = vecs.clone();
    for (j, &e) in vals.iter().enumerate() {
        let z = f(e);
        for i in 0..n {
            w[(i, j)] *= z;
        }
    }
    w * vecs.adjoint()
}

pub struct Gibbs {
    pub rho: M,
    pub q: M,
}

impl Gibbs {
    pub fn new(fock: &Fock, h: &M, beta: f64) -> Self {
        let q = fock.quadratic(h);
        let mut rho = herm_fn(&q, |e| Complex64::new((-beta * e).exp(), 0.0));
        let z = rho.trace();
        rho /= z;
        Gibbs { rho, q }
    }

    pub fn expect(&self, x: &M) -> Complex64 {
        (&self.rho * x).trace()
    }

    /// `τ_s(X) = e^{isQ} X e^{−isQ}`.
    pub fn evolve(&self, x: &M, s: f64) -> M {
        let u = herm_fn(&self.q, |e| Complex64::from_polar(1.0, s * e));
        &u * x * u.adjoint()
    }
}

/// The current observable of `elem` built directly from creation and annihilation operators.
pub fn current_operator(fock: &Fock, bx: &LatticeBox, elem: &CurrentElement<f64>) -> M {
    let vector = |psi: &SiteVector<f64>| {
        let mut v = vec![Complex64::new(0.0, 0.0); bx.len()];
        for (x, c) in psi {
            v[bx.index(x).expect("site outside the box")] += *c;
        }
        v
    };
    let (p1, p2) = match elem {
        CurrentElement::Bond(b) => (
            vector(&vec![(b.to.clone(), Complex64::new(-2.0, 0.0))]),
            vector(&vec![(b.from.clone(), Complex64::new(1.0, 0.0))]),
        ),
        CurrentElement::General { psi1, psi2 } => (vector(psi1), vector(psi2)),
    };
    let x = fock.create_vec(&p1) * fock.ann_vec(&p2);
    (&x - x.adjoint()) * Complex64::new(0.0, -0.5)
}
