//! i.i.d. on-site disorder, ensemble averages and self-averaging diagnostics.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::lattice_fields::{build_box, LatticeBox};
use crate::stats;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Uniform,
    TwoPoint,
    /// Discrete atoms with probabilities.
    Atoms { values: Vec<f64>, probs: Vec<f64> },
    /// Piecewise constant density on the bins `edges[i]..edges[i+1]`.
    Tabulated { edges: Vec<f64>, density: Vec<f64> },
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution::Uniform
    }
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        let in_range = |v: &f64| (-1.0..=1.0).contains(v);
        match self {
            Distribution::Uniform | Distribution::TwoPoint => Ok(()),
            Distribution::Atoms { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(contract("atoms need matching non-empty values/probs"));
                }
                if !values.iter().all(in_range) || probs.iter().any(|&p| p < 0.0) {
                    return Err(contract("atoms must lie in [-1,1] with p ≥ 0"));
                }
                if probs.iter().sum::<f64>() <= 0.0 {
                    return Err(contract("atom probabilities sum to zero"));
                }
                Ok(())
            }
            Distribution::Tabulated { edges, density } => {
                if edges.len() != density.len() + 1 || density.is_empty() {
                    return Err(contract("tabulated density needs len(edges) = len(density)+1"));
                }
                if !edges.iter().all(in_range) || edges.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(contract("tabulated edges must increase inside [-1,1]"));
                }
                if density.iter().any(|&p| p < 0.0) || density.iter().sum::<f64>() <= 0.0 {
                    return Err(contract("tabulated density must be non-negative, non-zero"));
                }
                Ok(())
            }
        }
    }

    /// Inverse CDF at `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Distribution::Uniform => 2.0 * u - 1.0,
            Distribution::TwoPoint => {
                if u < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            Distribution::Atoms { values, probs } => {
                let total: f64 = probs.iter().sum();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p / total;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
            Distribution::Tabulated { edges, density } => {
                let mass: Vec<f64> =
                    density.iter().zip(edges.windows(2)).map(|(p, w)| p * (w[1] - w[0])).collect();
                let total: f64 = mass.iter().sum();
                let mut target = u * total;
                for (i, m) in mass.iter().enumerate() {
                    if target < *m || i + 1 == mass.len() {
                        let frac = if *m > 0.0 { (target / m).min(1.0) } else { 0.0 };
                        return edges[i] + frac * (edges[i + 1] - edges[i]);
                    }
                    target -= m;
                }
                edges[edges.len() - 1]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub distribution: Distribution,
    pub lambda: f64,
    pub master_seed: u64,
}

impl DisorderSpec {
    pub fn new(distribution: Distribution, lambda: f64, master_seed: u64) -> Result<Self> {
        distribution.validate()?;
        if !(lambda >= 0.0) {
            return Err(contract("lambda must be ≥ 0"));
        }
        Ok(DisorderSpec { distribution, lambda, master_seed })
    }

    pub fn uniform(lambda: f64, master_seed: u64) -> Self {
        DisorderSpec { distribution: Distribution::Uniform, lambda, master_seed }
    }
}

/// One sample `ω` restricted to a box.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization<T: Scalar> {
    pub values: Vec<T>,
    pub master_seed: u64,
    pub index: u64,
    pub bx: LatticeBox,
}

/// Box-independent site label, so that larger boxes extend a realization.
fn site_key(x: &[i64]) -> u128 {
    // zigzag each coordinate into 20 bits, then concatenate; the cipher counter has 68 bits
    x.iter().fold(0u128, |acc, &c| {
        let z = if c >= 0 { 2 * c as u64 } else { (-2 * c - 1) as u64 };
        (acc << 20) | (z as u128 & 0xf_ffff)
    })
}

fn site_uniform(seed: u64, index: u64, x: &[i64]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    // two 32-bit words per site
    rng.set_word_pos(site_key(x) * 2);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn sample_realization<T: Scalar>(
    spec: &DisorderSpec,
    bx: &LatticeBox,
    index: u64,
) -> Realization<T> {
    let values = bx
        .sites()
        .map(|x| T::lit(spec.distribution.quantile(site_uniform(spec.master_seed, index, x))))
        .collect();
    Realization { values, master_seed: spec.master_seed, index, bx: bx.clone() }
}

impl<T: Scalar> Realization<T> {
    pub fn at(&self, x: &[i64]) -> Option<T> {
        self.bx.index(x).map(|i| self.values[i])
    }
}

/// Componentwise `(mean, stderr)` over realizations `0..n`, reduced in index order.
pub fn ensemble_mean<T, F>(
    estimator: F,
    spec: &DisorderSpec,
    bx: &LatticeBox,
    n: usize,
) -> Result<(Vec<T>, Vec<T>)>
where
    T: Scalar,
    F: Fn(&Realization<T>) -> Result<Vec<T>> + Sync,
{
    if n < 2 {
        return Err(contract("ensemble needs N ≥ 2"));
    }
    let samples: Vec<Vec<T>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let r = sample_realization(spec, bx, i);
            estimator(&r).map_err(|e| Error::Realization { index: i, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    Ok(reduce_samples(&samples))
}

/// Componentwise mean and stderr of equally shaped samples.
pub fn reduce_samples<T: Scalar>(samples: &[Vec<T>]) -> (Vec<T>, Vec<T>) {
    let width = samples.first().map_or(0, |s| s.len());
    let mut mean = Vec::with_capacity(width);
    let mut err = Vec::with_capacity(width);
    for j in 0..width {
        let col: Vec<T> = samples.iter().map(|s| s[j]).collect();
        let (m, e) = stats::mean_stderr(&col);
        mean.push(m);
        err.push(e);
    }
    (mean, err)
}

#[derive(Clone, Debug)]
pub struct SelfAveragingRow {
    pub l: usize,
    pub volume: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Debug)]
pub struct SelfAveragingTable {
    pub rows: Vec<SelfAveragingRow>,
    /// Log–log slope of variance against `|Λ_l|`; NaN when a variance vanishes.
    pub slope: f64,
}

pub fn self_averaging_diagnostic<T, F>(
    observable: F,
    spec: &DisorderSpec,
    d: usize,
    l_list: &[usize],
    n: usize,
) -> Result<SelfAveragingTable>
where
    T: Scalar,
    F: Fn(&Realization<T>, &LatticeBox) -> Result<T> + Sync,
{
    if n < 10 {
        return Err(contract("self-averaging needs N ≥ 10"));
    }
    if l_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(contract("l_list must increase"));
    }
    let mut rows = Vec::new();
    for &l in l_list {
        let bx = build_box(d, l)?;
        let values: Vec<T> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let r = sample_realization(spec, &bx, i);
                observable(&r, &bx).map_err(|e| Error::Realization { index: i, source: Box::new(e) })
            })
            .collect::<Result<_>>()?;
        rows.push(SelfAveragingRow {
            l,
            volume: bx.len(),
            mean: stats::mean(&values).as_f64(),
            variance: stats::variance(&values).as_f64(),
        });
    }
    let vols: Vec<f64> = rows.iter().map(|r| r.volume as f64).collect();
    let vars: Vec<f64> = rows.iter().map(|r| r.variance).collect();
    let slope = if vars.iter().all(|&v| v > 0.0) && rows.len() >= 2 {
        stats::loglog_slope(&vols, &vars)
    } else {
        f64::NAN
    };
    Ok(SelfAveragingTable { rows, slope })
}
