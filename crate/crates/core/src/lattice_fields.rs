//! Boxes, bonds, pulses, spatial profiles and the Peierls vector potential.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::Scalar;

/// Default cap on the number of sites of a box.
pub const SITE_CAP: usize = 1 << 20;

/// A cube `[lo, hi]^d ∩ ℤ^d`, sites in lexicographic order. Usually `Λ_l = [−l, l]^d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeBox {
    d: usize,
    lo: i64,
    hi: i64,
    coords: Vec<i64>,
}

pub fn build_box(d: usize, l: usize) -> Result<LatticeBox> {
    build_box_capped(d, l, SITE_CAP)
}

pub fn build_box_capped(d: usize, l: usize, cap: usize) -> Result<LatticeBox> {
    build_range(d, -(l as i64), l as i64, cap)
}

/// `[lo, hi]^d`; used for small non-centred systems such as a two-site chain.
pub fn build_range(d: usize, lo: i64, hi: i64, cap: usize) -> Result<LatticeBox> {
    if d == 0 {
        return Err(contract("dimension must be positive"));
    }
    if hi < lo {
        return Err(contract("empty coordinate range"));
    }
    let side = (hi - lo + 1) as usize;
    let n = (0..d)
        .try_fold(1usize, |acc, _| acc.checked_mul(side))
        .filter(|&n| n <= cap)
        .ok_or_else(|| Error::Capacity(format!("box d={d}, side {side} exceeds {cap} sites")))?;
    let mut coords = Vec::with_capacity(n * d);
    for i in 0..n {
        let mut rem = i;
        let mut x = vec![0i64; d];
        for k in (0..d).rev() {
            x[k] = (rem % side) as i64 + lo;
            rem /= side;
        }
        coords.extend_from_slice(&x);
    }
    Ok(LatticeBox { d, lo, hi, coords })
}

impl LatticeBox {
    pub fn d(&self) -> usize {
        self.d
    }

    /// Half-side of a centred box (the upper coordinate bound in general).
    pub fn l(&self) -> usize {
        self.hi.max(0) as usize
    }

    pub fn bounds(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn site(&self, i: usize) -> &[i64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn sites(&self) -> impl Iterator<Item = &[i64]> {
        self.coords.chunks(self.d)
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.len() == self.d && x.iter().all(|&c| self.lo <= c && c <= self.hi)
    }

    pub fn index(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let side = (self.hi - self.lo + 1) as usize;
        Some(x.iter().fold(0usize, |acc, &c| acc * side + (c - self.lo) as usize))
    }

    /// Index of `0`, if the box contains it.
    pub fn index_of_origin(&self) -> usize {
        self.index(&vec![0; self.d]).expect("box does not contain the origin")
    }
}

/// Ordered bond `(x¹, x²)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub from: Vec<i64>,
    pub to: Vec<i64>,
}

impl Bond {
    pub fn new(from: Vec<i64>, to: Vec<i64>) -> Self {
        Bond { from, to }
    }

    /// `(x + e_k, x)`, the orientation used by the averaged coefficients.
    pub fn backward(x: &[i64], k: usize) -> Self {
        let mut y = x.to_vec();
        y[k] += 1;
        Bond { from: y, to: x.to_vec() }
    }

    pub fn is_unit(&self) -> bool {
        self.from.len() == self.to.len()
            && self
                .from
                .iter()
                .zip(&self.to)
                .map(|(a, b)| (a - b).abs())
                .sum::<i64>()
                == 1
    }

    pub fn reversed(&self) -> Self {
        Bond { from: self.to.clone(), to: self.from.clone() }
    }

    pub fn shifted(&self, z: &[i64]) -> Self {
        let add = |x: &[i64]| x.iter().zip(z).map(|(a, b)| a + b).collect();
        Bond { from: add(&self.from), to: add(&self.to) }
    }

    /// `x² − x¹`.
    pub fn step(&self) -> Vec<i64> {
        self.to.iter().zip(&self.from).map(|(b, a)| b - a).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BondMode {
    Interior,
    Crossing,
}

#[derive(Clone, Debug)]
pub struct BondList {
    pub mode: BondMode,
    pub bonds: Vec<Bond>,
}

pub fn nearest_bonds(bx: &LatticeBox, mode: BondMode) -> BondList {
    let mut bonds = Vec::new();
    for x in bx.sites() {
        for k in 0..bx.d() {
            for s in [-1i64, 1] {
                let mut y = x.to_vec();
                y[k] += s;
                let inside = bx.contains(&y);
                match (mode, inside) {
                    (_, true) => bonds.push(Bond::new(x.to_vec(), y)),
                    (BondMode::Crossing, false) => {
                        bonds.push(Bond::new(x.to_vec(), y.clone()));
                        bonds.push(Bond::new(y, x.to_vec()));
                    }
                    (BondMode::Interior, false) => {}
                }
            }
        }
    }
    bonds.sort();
    BondList { mode, bonds }
}

// ---------------------------------------------------------------------------
// Quadrature and bump functions.

const GL8_X: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL8_W: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `∫_a^b f` by 8-node Gauss–Legendre on `panels` equal panels.
pub fn gauss_legendre(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        let part: f64 = GL8_X
            .iter()
            .zip(GL8_W.iter())
            .map(|(x, w)| w * f(c + 0.5 * h * x))
            .sum();
        acc += 0.5 * h * part;
    }
    acc
}

/// Mollifier `exp(1 − 1/(1 − u²))` on `(−1, 1)`, peak 1.
pub fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

pub fn bump_prime(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - u * u;
        -2.0 * u / (q * q) * bump(u)
    }
}

fn bump_primitive(u: f64) -> f64 {
    if u <= -1.0 {
        return 0.0;
    }
    let u = u.min(1.0);
    gauss_legendre(bump, -1.0, u, 24)
}

// ---------------------------------------------------------------------------
// Pulses.

/// Temporal profile `𝓔_t` with its primitive `𝒜_t = ∫_{−∞}^t 𝓔`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pulse {
    /// `𝒜 = amplitude · bump`, so `𝓔` integrates to zero.
    BumpDerivative { start: f64, end: f64, amplitude: f64 },
    /// `𝓔 = amplitude · bump`.
    Bump { start: f64, end: f64, amplitude: f64 },
    /// Piecewise linear `𝓔` through the nodes, zero outside.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
    Sum { parts: Vec<Pulse> },
}

impl Pulse {
    pub fn validate(&self) -> Result<()> {
        match self {
            Pulse::BumpDerivative { start, end, .. } | Pulse::Bump { start, end, .. } => {
                if !(end > start) {
                    return Err(contract("pulse support must have end > start"));
                }
            }
            Pulse::Tabulated { times, values } => {
                if times.len() != values.len() || times.len() < 2 {
                    return Err(contract("tabulated pulse needs ≥2 matching nodes"));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(contract("tabulated pulse times must increase"));
                }
            }
            Pulse::Sum { parts } => {
                if parts.is_empty() {
                    return Err(contract("empty pulse sum"));
                }
                for p in parts {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            Pulse::BumpDerivative { start, end, .. } | Pulse::Bump { start, end, .. } => {
                (*start, *end)
            }
            Pulse::Tabulated { times, .. } => (times[0], *times.last().unwrap()),
            Pulse::Sum { parts } => parts.iter().map(|p| p.support()).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(a, b), (c, e)| (a.min(c), b.max(e)),
            ),
        }
    }

    /// `𝓔_t`.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Pulse::BumpDerivative { start, end, amplitude } => {
                let (c, h) = (0.5 * (start + end), 0.5 * (end - start));
                amplitude * bump_prime((t - c) / h) / h
            }
            Pulse::Bump { start, end, amplitude } => {
                let (c, h) = (0.5 * (start + end), 0.5 * (end - start));
                amplitude * bump((t - c) / h)
            }
            Pulse::Tabulated { times, values } => {
                if t <= times[0] || t >= *times.last().unwrap() {
                    return 0.0;
                }
                let j = times.partition_point(|&s| s <= t) - 1;
                let a = (t - times[j]) / (times[j + 1] - times[j]);
                values[j] * (1.0 - a) + values[j + 1] * a
            }
            Pulse::Sum { parts } => parts.iter().map(|p| p.value(t)).sum(),
        }
    }

    /// `𝒜_t`.
    pub fn primitive(&self, t: f64) -> f64 {
        match self {
            Pulse::BumpDerivative { start, end, amplitude } => {
                let (c, h) = (0.5 * (start + end), 0.5 * (end - start));
                amplitude * bump((t - c) / h)
            }
            Pulse::Bump { start, end, amplitude } => {
                let (c, h) = (0.5 * (start + end), 0.5 * (end - start));
                amplitude * h * bump_primitive((t - c) / h)
            }
            Pulse::Tabulated { times, values } => {
                let mut acc = 0.0;
                for j in 0..times.len() - 1 {
                    let (a, b) = (times[j], times[j + 1]);
                    if t <= a {
                        break;
                    }
                    if t >= b {
                        acc += 0.5 * (values[j] + values[j + 1]) * (b - a);
                    } else {
                        let v = self.value(t);
                        acc += 0.5 * (values[j] + v) * (t - a);
                    }
                }
                acc
            }
            Pulse::Sum { parts } => parts.iter().map(|p| p.primitive(t)).sum(),
        }
    }

    pub fn max_abs_primitive(&self) -> f64 {
        let (a, b) = self.support();
        let n = 4096;
        (0..=n)
            .map(|i| self.primitive(a + (b - a) * i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }

    pub fn tol_ac(&self) -> f64 {
        1e-10 * self.max_abs_primitive()
    }

    pub fn is_ac(&self) -> bool {
        self.primitive(self.support().1).abs() <= self.tol_ac()
    }
}

/// Field-off time `t1`; `f64::INFINITY` when the AC condition never holds.
pub fn check_ac(pulse: &Pulse) -> f64 {
    let (a, b) = pulse.support();
    let tol = pulse.tol_ac();
    if pulse.primitive(b).abs() > tol {
        return f64::INFINITY;
    }
    let n = 20_000;
    let grid = |i: usize| a + (b - a) * i as f64 / n as f64;
    let Some(last_bad) = (0..=n).rev().find(|&i| pulse.primitive(grid(i)).abs() > tol) else {
        return a;
    };
    let (mut lo, mut hi) = (grid(last_bad), grid(last_bad + 1));
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if pulse.primitive(mid).abs() > tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

// ---------------------------------------------------------------------------
// Spatial profiles.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    /// Indicator of `[−1, 1]^d`.
    Indicator,
    /// Product mollifier supported in `[−1/2, 1/2]^d`.
    Bump,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialProfile {
    pub kind: ProfileKind,
    pub d: usize,
    /// `∫ψ² d^dx`.
    pub norm2: f64,
}

impl SpatialProfile {
    pub fn new(kind: ProfileKind, d: usize) -> Self {
        let norm2 = match kind {
            ProfileKind::Indicator => 2f64.powi(d as i32),
            ProfileKind::Bump => {
                let one = 0.5 * gauss_legendre(|u| bump(u) * bump(u), -1.0, 1.0, 64);
                one.powi(d as i32)
            }
        };
        SpatialProfile { kind, d, norm2 }
    }

    /// Support half-width in units of the scale.
    pub fn radius(&self) -> f64 {
        match self.kind {
            ProfileKind::Indicator => 1.0,
            ProfileKind::Bump => 0.5,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            ProfileKind::Indicator => {
                if x.iter().all(|c| c.abs() <= 1.0) {
                    1.0
                } else {
                    0.0
                }
            }
            ProfileKind::Bump => x.iter().map(|&c| bump(2.0 * c)).product(),
        }
    }

    /// `∫_0^1 ψ(a + α(b − a)) dα`.
    pub fn segment_mean(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            ProfileKind::Indicator => {
                // exact: intersect the parameter interval with each slab
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for (&p, &q) in a.iter().zip(b) {
                    let dq = q - p;
                    if dq == 0.0 {
                        if p.abs() > 1.0 {
                            return 0.0;
                        }
                    } else {
                        let (s1, s2) = ((-1.0 - p) / dq, (1.0 - p) / dq);
                        lo = lo.max(s1.min(s2));
                        hi = hi.min(s1.max(s2));
                    }
                }
                (hi - lo).max(0.0)
            }
            ProfileKind::Bump => {
                let mut x = vec![0.0; a.len()];
                gauss_legendre(
                    |s| {
                        for k in 0..a.len() {
                            x[k] = a[k] + s * (b[k] - a[k]);
                        }
                        self.value(&x)
                    },
                    0.0,
                    1.0,
                    1,
                )
            }
        }
    }
}

/// `A(t, x) = η w ψ(x/l) 𝒜_t` in Weyl gauge.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorPotential {
    pub pulse: Pulse,
    pub profile: SpatialProfile,
    pub direction: Vec<f64>,
    pub scale: f64,
    pub eta: f64,
    pub t1: f64,
}

impl VectorPotential {
    pub fn new(
        pulse: Pulse,
        profile: SpatialProfile,
        direction: Vec<f64>,
        scale: f64,
        eta: f64,
    ) -> Result<Self> {
        pulse.validate()?;
        if direction.len() != profile.d {
            return Err(contract("direction has wrong dimension"));
        }
        let n: f64 = direction.iter().map(|w| w * w).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-12 {
            return Err(contract("direction must be a unit vector"));
        }
        if !(scale > 0.0) {
            return Err(contract("scale must be positive"));
        }
        let t1 = check_ac(&pulse);
        Ok(VectorPotential { pulse, profile, direction, scale, eta, t1 })
    }

    pub fn t0(&self) -> f64 {
        self.pulse.support().0
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        VectorPotential { eta, ..self.clone() }
    }

    /// Half-width of the field support in lattice units.
    pub fn support_radius(&self) -> f64 {
        self.scale * self.profile.radius()
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|c| c / self.scale).collect()
    }

    pub fn potential<T: Scalar>(&self, t: T, x: &[f64]) -> Vec<T> {
        let s = self.eta * self.profile.value(&self.scaled(x)) * self.pulse.primitive(t.as_f64());
        self.direction.iter().map(|w| T::lit(w * s)).collect()
    }

    /// `E_A(t, x) = −∂_t A(t, x)`.
    pub fn electric_field<T: Scalar>(&self, t: T, x: &[f64]) -> Vec<T> {
        let s = -self.eta * self.profile.value(&self.scaled(x)) * self.pulse.value(t.as_f64());
        self.direction.iter().map(|w| T::lit(w * s)).collect()
    }

    /// `⟨w, x² − x¹⟩ ∫_0^1 ψ((αx² + (1−α)x¹)/l) dα`; the time-independent part of every
    /// bond line integral.
    pub fn bond_weight(&self, bond: &Bond) -> Result<f64> {
        if !bond.is_unit() || bond.from.len() != self.profile.d {
            return Err(contract("bond is not a unit bond of the right dimension"));
        }
        let a: Vec<f64> = bond.from.iter().map(|&c| c as f64 / self.scale).collect();
        let b: Vec<f64> = bond.to.iter().map(|&c| c as f64 / self.scale).collect();
        let proj: f64 = bond.step().iter().zip(&self.direction).map(|(s, w)| *s as f64 * w).sum();
        if proj == 0.0 {
            return Ok(0.0);
        }
        Ok(proj * self.profile.segment_mean(&a, &b))
    }

    /// `∫_0^1 A(t, αx² + (1−α)x¹)·(x² − x¹) dα`.
    pub fn line_integral<T: Scalar>(&self, t: T, bond: &Bond) -> Result<T> {
        Ok(T::lit(self.eta * self.pulse.primitive(t.as_f64()) * self.bond_weight(bond)?))
    }

    pub fn integrated_bond_field<T: Scalar>(&self, t: T, bond: &Bond) -> Result<T> {
        Ok(T::lit(-self.eta * self.pulse.value(t.as_f64()) * self.bond_weight(bond)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ac() -> Pulse {
        Pulse::BumpDerivative { start: 0.0, end: 1.0, amplitude: 1.0 }
    }

    #[test]
    fn box_counts() {
        assert_eq!(build_box(1, 1).unwrap().len(), 3);
        assert_eq!(build_box(2, 2).unwrap().len(), 25);
        assert_eq!(build_box(3, 4).unwrap().len(), 729);
        let b = build_box(1, 1).unwrap();
        let s: Vec<i64> = b.sites().map(|x| x[0]).collect();
        assert_eq!(s, vec![-1, 0, 1]);
    }

    #[test]
    fn box_capacity_error() {
        assert!(matches!(build_box_capped(3, 10, 1000), Err(Error::Capacity(_))));
        assert!(matches!(build_box(0, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn index_is_bijection() {
        let b = build_box(2, 3).unwrap();
        for (i, x) in b.sites().enumerate() {
            assert_eq!(b.index(x), Some(i));
        }
        assert_eq!(b.site(b.index_of_origin()), &[0, 0]);
        assert_eq!(b.index(&[4, 0]), None);
    }

    #[test]
    fn bond_counts() {
        let b1 = build_box(1, 1).unwrap();
        let inner = nearest_bonds(&b1, BondMode::Interior);
        assert_eq!(inner.bonds.len(), 4);
        let want = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        for (bond, (a, c)) in inner.bonds.iter().zip(want) {
            assert_eq!((bond.from[0], bond.to[0]), (a, c));
        }
        assert_eq!(nearest_bonds(&build_box(2, 1).unwrap(), BondMode::Interior).bonds.len(), 24);
        let cross = nearest_bonds(&b1, BondMode::Crossing);
        assert_eq!(cross.bonds.len(), 8);
        assert!(cross.bonds.contains(&Bond::new(vec![2], vec![1])));
        assert!(cross.bonds.contains(&Bond::new(vec![-1], vec![-2])));
    }

    #[test]
    fn check_ac_examples() {
        let t1 = check_ac(&unit_ac());
        // the primitive drops below 1e-10 of its peak shortly before the support end
        assert!(t1 > 0.95 && t1 <= 1.0, "{t1}");
        assert!(unit_ac().is_ac());
        let pos = Pulse::Bump { start: 0.0, end: 1.0, amplitude: 1.0 };
        assert!(check_ac(&pos).is_infinite());
        let two = Pulse::Sum {
            parts: vec![
                Pulse::Bump { start: 0.0, end: 1.0, amplitude: 1.0 },
                Pulse::Bump { start: 2.0, end: 3.0, amplitude: -1.0 },
            ],
        };
        let t1 = check_ac(&two);
        assert!(t1 > 2.95 && t1 <= 3.0, "{t1}");
    }

    #[test]
    fn primitive_is_antiderivative() {
        for p in [
            unit_ac(),
            Pulse::Bump { start: -1.0, end: 2.0, amplitude: 0.7 },
            Pulse::Tabulated { times: vec![0.0, 0.5, 1.5, 2.0], values: vec![0.0, 1.0, -2.0, 0.0] },
        ] {
            // panels aligned with the tabulation nodes keep the oracle exact on kinks
            let mut knots = vec![-1.5, -1.0, 0.0, 0.5, 1.5, 2.0, 2.5];
            knots.sort_by(f64::total_cmp);
            for i in 1..20 {
                let t = -1.0 + 0.17 * i as f64;
                let mut num = 0.0;
                for w in knots.windows(2) {
                    if w[0] < t {
                        num += gauss_legendre(|s| p.value(s), w[0], w[1].min(t), 50);
                    }
                }
                assert!((num - p.primitive(t)).abs() < 1e-9, "{p:?} at {t}");
            }
        }
    }

    #[test]
    fn electric_field_examples() {
        let prof = SpatialProfile::new(ProfileKind::Indicator, 2);
        let vp = VectorPotential::new(unit_ac(), prof.clone(), vec![1.0, 0.0], 3.0, 0.0).unwrap();
        assert_eq!(vp.electric_field(0.3f64, &[0.0, 0.0]), vec![0.0, 0.0]);
        let vp = vp.with_eta(1.0);
        assert_eq!(vp.electric_field(1.5f64, &[0.0, 0.0]), vec![0.0, 0.0]);
        // derivative of the stored primitive
        let (t, h) = (0.37, 1e-5);
        let x = [1.0, -2.0];
        let fd = -(vp.potential(t + h, &x)[0] - vp.potential(t - h, &x)[0]) / (2.0 * h);
        let e: f64 = vp.electric_field(t, &x)[0];
        assert!((fd - e).abs() < 1e-8);
        assert!((e + unit_ac().value(t)).abs() < 1e-15);
    }

    #[test]
    fn integrated_bond_field_examples() {
        let prof = SpatialProfile::new(ProfileKind::Indicator, 2);
        let w = vec![0.6, 0.8];
        let vp = VectorPotential::new(unit_ac(), prof, w.clone(), 4.0, 0.3).unwrap();
        let t = 0.3f64;
        let b = Bond::new(vec![1, 1], vec![1, 2]);
        let want = -0.3 * unit_ac().value(t) * 0.8;
        assert!((vp.integrated_bond_field(t, &b).unwrap() - want).abs() < 1e-12);
        assert!(vp.integrated_bond_field(t, &Bond::new(vec![0, 0], vec![1, 1])).is_err());
        let r: f64 = vp.integrated_bond_field(t, &b.reversed()).unwrap();
        assert!((r + want).abs() < 1e-15);
        assert_eq!(vp.with_eta(0.0).integrated_bond_field(t, &b).unwrap(), 0.0);
    }

    #[test]
    fn bump_bond_straddling_edge() {
        let prof = SpatialProfile::new(ProfileKind::Bump, 1);
        let vp = VectorPotential::new(unit_ac(), prof.clone(), vec![1.0], 8.0, 1.0).unwrap();
        let b = Bond::new(vec![3], vec![4]);
        let t = 0.3f64;
        let v: f64 = vp.integrated_bond_field(t, &b).unwrap();
        let e3 = vp.electric_field(t, &[3.0])[0];
        let e4 = vp.electric_field(t, &[4.0])[0];
        assert!(v >= e3.min(e4) && v <= e3.max(e4));
        let fine = gauss_legendre(|s| prof.value(&[(3.0 + s) / 8.0]), 0.0, 1.0, 10);
        let oracle = -unit_ac().value(0.3) * fine;
        // 8 nodes resolve the flat edge of the mollifier to about 1e-5
        assert!((v - oracle).abs() <= 1e-4 * oracle.abs());
    }

    #[test]
    fn bump_norm() {
        let p = SpatialProfile::new(ProfileKind::Bump, 2);
        let one = 0.5 * gauss_legendre(|u| bump(u).powi(2), -1.0, 1.0, 400);
        assert!((p.norm2 - one * one).abs() < 1e-12);
        assert_eq!(p.value(&[0.5, 0.0]), 0.0);
        assert_eq!(p.value(&[0.0, 0.0]), 1.0);
    }
}
