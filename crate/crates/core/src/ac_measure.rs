//! Finite-volume spectral measure of the in-phase paramagnetic conductivity and the AC
//! quadratic-form identities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{contract, Error, Result};
use crate::lattice_fields::{build_box, gauss_legendre, Pulse};
use crate::onebody::EigenSystem;
use crate::stats::pairwise_sum;
use crate::transport::{averaged_current, xi_p_l, TransportKernel};
use crate::Scalar;

/// Bins per unit of spectral width when no bin width is given.
pub const DEFAULT_BINS: f64 = 400.0;
/// Allowed gap between the atoms and `{Ξ_{p,l}}_{k,k}`.
pub const CALIBRATION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureProvenance {
    pub n: usize,
    pub l: usize,
    pub beta: f64,
    pub k: usize,
}

#[derive(Clone, Debug)]
pub struct SpectralMeasure<T: Scalar> {
    /// Ascending edges, symmetric about 0; `bins.len() == weights.len() + 1`.
    pub bins: Vec<T>,
    pub weights: Vec<T>,
    pub zero_excluded: bool,
    pub provenance: MeasureProvenance,
    /// Ensemble-averaged point masses `(ν, w)` before binning.
    pub atoms: Vec<(T, T)>,
    /// `max_t` gap between the atoms and the transport kernel on the check grid.
    pub calibration_residual: T,
}

impl<T: Scalar> SpectralMeasure<T> {
    pub fn bin_width(&self) -> T {
        self.bins[1] - self.bins[0]
    }

    pub fn centers(&self) -> Vec<T> {
        self.bins.windows(2).map(|w| (w[0] + w[1]) * T::lit(0.5)).collect()
    }

    pub fn mass(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, &w| a + w)
    }

    /// `Σ_bins w (cos(ν t) − 1)` at bin centres.
    pub fn reconstruct(&self, t: T) -> T {
        self.centers()
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |a, (&c, &w)| a + w * ((c * t).cos() - T::one()))
    }

    /// Same sum over the unbinned atoms.
    pub fn reconstruct_atoms(&self, t: T) -> T {
        self.atoms.iter().fold(T::zero(), |a, &(nu, w)| a + w * ((nu * t).cos() - T::one()))
    }

    /// `max |w(ν) − w(−ν)|` over mirrored bins.
    pub fn symmetry_residual(&self) -> T {
        let n = self.weights.len();
        (0..n / 2).fold(T::zero(), |a, j| a.max((self.weights[j] - self.weights[n - 1 - j]).abs()))
    }
}

fn bin_index<T: Scalar>(nu: T, width: T, half: usize) -> usize {
    let j = (nu.abs() / width).floor().to_usize().unwrap_or(usize::MAX).min(half - 1);
    if nu > T::zero() {
        half + j
    } else {
        half - 1 - j
    }
}

/// Point masses `(ε_m − ε_n, |Λ_l|⁻¹ |⟨m|J_k|n⟩|² (f_n − f_m)/(ε_m − ε_n))` over ordered
/// pairs of one realization, degenerate pairs dropped.
pub fn measure_atoms<T: Scalar>(eig: &EigenSystem<T>, beta: T, l: usize, k: usize) -> Result<Vec<(T, T)>> {
    if !(beta > T::zero()) {
        return Err(contract("beta must be positive"));
    }
    if k >= eig.bx.d() {
        return Err(contract("direction index out of range"));
    }
    let vol = T::from_usize(build_box(eig.bx.d(), l)?.len()).unwrap();
    let j = eig.to_eigenbasis(&averaged_current(&eig.bx, l, k)?);
    let f = eig.occupations(beta);
    let thresh = eig.degeneracy_threshold();
    let n = eig.dim();
    let mut out = Vec::with_capacity(n * n);
    for m in 0..n {
        for q in 0..n {
            let nu = eig.values[m] - eig.values[q];
            if nu.abs() <= thresh {
                continue;
            }
            let w = j[(m, q)].norm_sqr() * (f[q] - f[m]) / nu / vol;
            if w < -T::lit(1e-10) {
                return Err(Error::Numerical(format!("negative spectral weight {}", w.as_f64())));
            }
            out.push((nu, w.max(T::zero())));
        }
    }
    Ok(out)
}

/// Ensemble-averaged measure of `{Ξ_{p,l}}_{k,k}`, calibrated against the transport module
/// on `check_grid` before binning.
pub fn spectral_measure<T: Scalar>(
    systems: &[EigenSystem<T>],
    beta: T,
    l: usize,
    k: usize,
    bin_width: Option<T>,
    check_grid: &[T],
) -> Result<SpectralMeasure<T>> {
    if systems.is_empty() {
        return Err(contract("empty ensemble"));
    }
    if let Some(w) = bin_width {
        if !(w > T::zero()) {
            return Err(contract("bin_width must be positive"));
        }
    }
    let n = T::from_usize(systems.len()).unwrap();
    let per: Vec<(Vec<(T, T)>, Vec<T>)> = systems
        .par_iter()
        .map(|eig| {
            let atoms = measure_atoms(eig, beta, l, k)?;
            let xi: Vec<T> = xi_p_l(eig, beta, l, check_grid)?.iter().map(|m| m[(k, k)]).collect();
            Ok((atoms, xi))
        })
        .collect::<Result<_>>()?;
    let mut atoms = Vec::with_capacity(per.iter().map(|p| p.0.len()).sum());
    let mut target = vec![T::zero(); check_grid.len()];
    for (a, xi) in &per {
        atoms.extend(a.iter().map(|&(nu, w)| (nu, w / n)));
        for (t, x) in target.iter_mut().zip(xi) {
            *t += *x / n;
        }
    }

    let mut measure = SpectralMeasure {
        bins: Vec::new(),
        weights: Vec::new(),
        zero_excluded: true,
        provenance: MeasureProvenance { n: systems.len(), l, beta: beta.as_f64(), k },
        atoms,
        calibration_residual: T::zero(),
    };
    for (&t, &x) in check_grid.iter().zip(&target) {
        let r = (measure.reconstruct_atoms(t) - x).abs();
        measure.calibration_residual = measure.calibration_residual.max(r);
    }
    if !(measure.calibration_residual <= T::lit(CALIBRATION_TOL)) {
        return Err(Error::Calibration(format!(
            "atoms miss the paramagnetic kernel by {:e}",
            measure.calibration_residual.as_f64()
        )));
    }

    let first = (systems[0].values[0], *systems[0].values.last().unwrap());
    let (lo, hi) = systems.iter().fold(first, |(a, b), e| {
        (a.min(e.values[0]), b.max(*e.values.last().unwrap()))
    });
    let width = bin_width.unwrap_or((hi - lo) / T::lit(DEFAULT_BINS));
    if !(width > T::zero()) {
        return Err(Error::Degenerate("spectrum has zero width".into()));
    }
    let nu_max = measure.atoms.iter().fold(T::zero(), |a, &(nu, _)| a.max(nu.abs()));
    let half = (nu_max / width).floor().to_usize().unwrap() + 1;
    measure.bins = (0..=2 * half)
        .map(|i| width * (T::from_usize(i).unwrap() - T::from_usize(half).unwrap()))
        .collect();
    measure.weights = vec![T::zero(); 2 * half];
    for &(nu, w) in &measure.atoms {
        measure.weights[bin_index(nu, width, half)] += w;
    }
    Ok(measure)
}

/// Largest bin-wise difference between two measures of equal bin width, over the union of
/// their bins.
pub fn cauchy_difference<T: Scalar>(a: &SpectralMeasure<T>, b: &SpectralMeasure<T>) -> Result<T> {
    let (wa, wb) = (a.bin_width(), b.bin_width());
    if (wa - wb).abs() > T::lit(1e-12) * wa {
        return Err(contract("measures have different bin widths"));
    }
    let (ha, hb) = (a.weights.len() / 2, b.weights.len() / 2);
    let h = ha.max(hb);
    let get = |w: &[T], half: usize, i: usize| -> T {
        // i indexes the larger grid; shift into the smaller one
        let off = h - half;
        if i < off || i - off >= w.len() {
            T::zero()
        } else {
            w[i - off]
        }
    };
    Ok((0..2 * h).fold(T::zero(), |m, i| m.max((get(&a.weights, ha, i) - get(&b.weights, hb, i)).abs())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcFormCheck<T: Scalar> {
    pub lhs: T,
    pub rhs: T,
    pub positivity: bool,
}

impl<T: Scalar> AcFormCheck<T> {
    pub fn relative_gap(&self) -> T {
        (self.lhs - self.rhs).abs() / self.lhs.abs().max(T::lit(1e-12))
    }
}

/// `𝓔̂(ν) = ∫ e^{iνs} 𝓔_s ds` by Gauss–Legendre on the pulse support.
pub fn pulse_transform(pulse: &Pulse, nu: f64) -> (f64, f64) {
    let (a, b) = pulse.support();
    let panels = (((b - a) * (1.0 + nu.abs())) * 4.0).ceil().max(16.0) as usize;
    let re = gauss_legendre(|s| (nu * s).cos() * pulse.value(s), a, b, panels);
    let im = gauss_legendre(|s| (nu * s).sin() * pulse.value(s), a, b, panels);
    (re, im)
}

/// `lhs = ½ ∫∫ σ(s₁ − s₂) 𝓔_{s₂} 𝓔_{s₁}` by trapezoid on the `tgrid` nodes inside the pulse
/// support (plus its endpoints) and `rhs = ½ Σ_bins w |𝓔̂(ν)|²`.
pub fn ac_form_check<T: Scalar>(
    measure: &SpectralMeasure<T>,
    sigma: &dyn Fn(T) -> Result<T>,
    pulse: &Pulse,
    tgrid: &[T],
) -> Result<AcFormCheck<T>> {
    if !pulse.is_ac() {
        return Err(contract("pulse is not AC"));
    }
    let (a, b) = pulse.support();
    let mut nodes = vec![a];
    nodes.extend(tgrid.iter().map(|t| t.as_f64()).filter(|&t| t > a && t < b));
    nodes.push(b);
    let n = nodes.len();
    let mut qw = vec![0.0; n];
    for i in 0..n - 1 {
        let h = 0.5 * (nodes[i + 1] - nodes[i]);
        qw[i] += h;
        qw[i + 1] += h;
    }
    let e: Vec<f64> = nodes.iter().map(|&s| pulse.value(s)).collect();
    let mut lhs = T::zero();
    for i in 0..n {
        if e[i] == 0.0 {
            continue;
        }
        let mut row = T::zero();
        for j in 0..n {
            if e[j] != 0.0 {
                row += sigma(T::lit(nodes[i] - nodes[j]))? * T::lit(qw[j] * e[j]);
            }
        }
        lhs += row * T::lit(qw[i] * e[i]);
    }
    lhs *= T::lit(0.5);

    let centers = measure.centers();
    // collected in bin order so the sum does not depend on the thread schedule
    let terms: Vec<T> = centers
        .par_iter()
        .zip(measure.weights.par_iter())
        .filter(|(_, &w)| w != T::zero())
        .map(|(&c, &w)| {
            let (re, im) = pulse_transform(pulse, c.as_f64());
            w * T::lit(re * re + im * im)
        })
        .collect();
    let rhs = pairwise_sum(&terms) * T::lit(0.5);
    Ok(AcFormCheck { lhs, rhs, positivity: lhs >= -T::lit(1e-8) })
}

/// `σ(t) = {Ξ_p(t)}_{k,k}` of a transport kernel, interpolated in `|t|`.
pub fn kernel_diagonal<T: Scalar>(kernel: &TransportKernel<T>, k: usize) -> impl Fn(T) -> Result<T> + '_ {
    move |t| kernel.xi_p_at(t).map(|m| m[(k, k)])
}

/// A sum of two or three bump-derivative pulses with seeded random supports in `[0, 3]` and
/// amplitudes in `[−1, 1]`; always AC.
pub fn random_ac_pulse(seed: u64) -> Pulse {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(2..=3);
    let parts = (0..count)
        .map(|_| {
            let start = rng.gen_range(0.0..1.0);
            let len = rng.gen_range(0.5..2.0);
            Pulse::BumpDerivative { start, end: start + len, amplitude: rng.gen_range(-1.0..1.0) }
        })
        .collect();
    Pulse::Sum { parts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::DisorderSpec;
    use crate::lattice_fields::build_range;
    use crate::onebody::{diagonalize, laplacian};
    use crate::scalar::cr;
    use crate::transport::{kernel_from_system, realization_system, Provenance};

    fn two_site() -> EigenSystem<f64> {
        let bx = build_range(1, 0, 1, 8).unwrap();
        let mut h = laplacian::<f64>(&bx);
        h.mat[(0, 0)] += cr(0.3);
        h.mat[(1, 1)] -= cr(0.45);
        diagonalize(&h).unwrap()
    }

    fn ensemble(n: u64, l: usize) -> Vec<EigenSystem<f64>> {
        let spec = DisorderSpec::uniform(1.0, 21);
        (0..n).map(|i| realization_system(&spec, 1, l + 4, i).unwrap()).collect()
    }

    fn grid(n: usize, h: f64) -> Vec<f64> {
        (0..=n).map(|i| h * i as f64).collect()
    }

    #[test]
    fn two_site_measure_reconstructs_kernel() {
        // Λ_0 is a single site; its bond (1, 0) is the only bond of the two-site box
        let m = spectral_measure(&[two_site()], 1.0, 0, 0, None, &grid(40, 0.25)).unwrap();
        assert!(m.calibration_residual <= 1e-6);
        assert_eq!(m.atoms.len(), 2);
        assert!(m.weights.iter().all(|&w| w >= 0.0));
        assert_eq!(m.reconstruct(0.0), 0.0);
        assert_eq!(m.reconstruct_atoms(0.0), 0.0);
    }

    #[test]
    fn ensemble_measure_is_positive_and_even() {
        let m = spectral_measure(&ensemble(4, 6), 1.0, 6, 0, None, &grid(50, 0.1)).unwrap();
        assert!(m.weights.iter().all(|&w| w >= -1e-10));
        assert!(m.symmetry_residual() <= 1e-10);
        assert!(m.zero_excluded);
        assert_eq!(m.weights.len() + 1, m.bins.len());
        assert!(m.bins.windows(2).all(|w| w[1] > w[0]));
        assert!((m.bins[0] + m.bins.last().unwrap()).abs() < 1e-12);
        assert!(m.mass() > 0.0);
    }

    #[test]
    fn doubled_weights_miss_the_kernel() {
        let systems = ensemble(1, 4);
        let mut m = spectral_measure(&systems, 1.0, 4, 0, None, &grid(20, 0.2)).unwrap();
        for a in &mut m.atoms {
            a.1 *= 2.0;
        }
        let xi = xi_p_l(&systems[0], 1.0, 4, &[1.0]).unwrap()[0][(0, 0)];
        assert!((m.reconstruct_atoms(1.0) - xi).abs() > 1e-3);
        assert!(spectral_measure(&systems, 1.0, 4, 0, Some(0.0), &[1.0]).is_err());
        assert!(spectral_measure::<f64>(&[], 1.0, 4, 0, None, &[1.0]).is_err());
    }

    #[test]
    fn quadratic_forms_agree_for_random_ac_pulses() {
        let l = 6;
        let systems = ensemble(1, l);
        let m = spectral_measure(&systems, 1.0, l, 0, None, &grid(40, 0.1)).unwrap();
        let kg = grid(600, 0.01);
        let (xp, xd) = kernel_from_system(&systems[0], 1.0, l, &kg).unwrap();
        let ker = TransportKernel {
            tgrid: kg.clone(),
            xi_p: xp,
            xi_d: xd,
            provenance: Provenance::Realization { master_seed: 21, index: 0 },
            l,
            beta: 1.0,
            lambda: 1.0,
        };
        let sigma = kernel_diagonal(&ker, 0);
        for seed in 0..3 {
            let p = random_ac_pulse(seed);
            assert!(p.is_ac());
            let c = ac_form_check(&m, &sigma, &p, &kg).unwrap();
            assert!(c.positivity && c.lhs > 0.0);
            assert!(c.relative_gap() <= 1e-3, "seed {seed}: {c:?}");
        }
    }

    #[test]
    fn no_conductivity_no_form() {
        let m = spectral_measure(&[two_site()], 1.0, 0, 0, None, &[0.5]).unwrap();
        let empty = SpectralMeasure { weights: vec![0.0; m.weights.len()], ..m };
        let zero = |_: f64| -> Result<f64> { Ok(0.0) };
        let p = random_ac_pulse(4);
        let c = ac_form_check(&empty, &zero, &p, &grid(400, 0.01)).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        let dc = Pulse::Bump { start: 0.0, end: 1.0, amplitude: 1.0 };
        assert!(ac_form_check(&empty, &zero, &dc, &grid(10, 0.1)).is_err());
    }

    #[test]
    fn halving_bins_barely_moves_the_form() {
        let systems = ensemble(2, 6);
        let g = grid(20, 0.2);
        let coarse = spectral_measure(&systems, 1.0, 6, 0, None, &g).unwrap();
        let fine = spectral_measure(&systems, 1.0, 6, 0, Some(coarse.bin_width() / 2.0), &g).unwrap();
        let zero = |_: f64| -> Result<f64> { Ok(0.0) };
        let p = random_ac_pulse(9);
        let a = ac_form_check(&coarse, &zero, &p, &[]).unwrap().rhs;
        let b = ac_form_check(&fine, &zero, &p, &[]).unwrap().rhs;
        assert!((a - b).abs() <= 1e-3 * b.abs(), "{a} {b}");
        assert!(cauchy_difference(&coarse, &coarse).unwrap() == 0.0);
        assert!(cauchy_difference(&coarse, &fine).is_err());
    }

    #[test]
    fn f32_measure_matches_f64() {
        let e64 = two_site();
        let bx = e64.bx.clone();
        let mut h = laplacian::<f32>(&bx);
        h.mat[(0, 0)] += cr(0.3);
        h.mat[(1, 1)] -= cr(0.45);
        let e32 = diagonalize(&h).unwrap();
        let a = measure_atoms(&e64, 1.0, 0, 0).unwrap();
        let b = measure_atoms(&e32, 1.0f32, 0, 0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.1 - y.1 as f64).abs() < 1e-5);
        }
    }
}
