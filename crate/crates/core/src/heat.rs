//! The heat semigroup `exp(t eps D)` on cell functions, its stochastic checks,
//! the convolution kernel on translation-invariant coverings, and Monte Carlo
//! simulation of the attached jump process.
//!
//! A function `h` constant on cells splits on each member into its mean and a
//! mean-zero remainder. The means evolve under `exp(t eps M)`; the remainder is
//! a combination of wavelets sharing the eigenvalue `-deg(U)` and so decays by
//! the scalar `exp(-t eps deg(U))`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinoid::{Ball, CellLayout};
use crate::error::{invalid, Error, Result};
use crate::exact::{format_rational, rational_to_f64};
use crate::localfield::canonical_center;
use crate::operator::{expm, linalg::weighted_laplacian, KernelSpec};

/// Generator `M = B diag(w) - diag(B w)` on member averages, with the weights
/// `w` that make it self-adjoint (member measures, or their invariant analogue).
#[derive(Clone, Debug)]
pub struct HeatGenerator {
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
    pub matrix: DMatrix<f64>,
    pub rates: Vec<f64>,
}

impl HeatGenerator {
    pub fn new(labels: Vec<String>, b: &DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if b.nrows() != n || b.ncols() != n || weights.len() != n {
            return invalid("generator data sizes disagree");
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return invalid("generator weights must be positive");
        }
        let matrix = weighted_laplacian(b, &weights);
        let rates = (0..n).map(|u| -matrix[(u, u)]).collect();
        Ok(HeatGenerator {
            labels,
            weights,
            matrix,
            rates,
        })
    }

    pub fn from_spec(spec: &KernelSpec) -> Result<Self> {
        HeatGenerator::new(
            spec.covering.labels.clone(),
            &spec.b_alpha().to_dmatrix(),
            spec.measures_f64(),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `P(t) = exp(t eps M)`.
    pub fn transition(&self, epsilon: f64, t: f64) -> DMatrix<f64> {
        expm(&(&self.matrix * (epsilon * t)))
    }
}

#[derive(Clone, Debug)]
pub struct HeatProblem<'a> {
    pub generator: &'a HeatGenerator,
    pub layout: &'a CellLayout,
    pub epsilon: f64,
    pub times: Vec<f64>,
    pub h0: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatSolution {
    pub times: Vec<f64>,
    /// Cell values of `h(t)` for each time.
    pub values: Vec<Vec<f64>>,
    /// Member averages of `h(t)`.
    pub averages: Vec<Vec<f64>>,
    /// `weights_U * average_U`, the mass carried by each member.
    pub member_masses: Vec<Vec<f64>>,
    /// `exp(-t eps deg(U))` per member.
    pub decay: Vec<Vec<f64>>,
}

impl HeatSolution {
    pub fn total_mass(&self, i: usize) -> f64 {
        self.member_masses[i].iter().sum()
    }
}

impl HeatProblem<'_> {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return invalid("epsilon must be positive");
        }
        if self.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return invalid("times must be finite and non-negative");
        }
        if self.times.windows(2).any(|w| w[1] < w[0]) {
            return invalid("times must be ascending");
        }
        if self.h0.len() != self.layout.len() {
            return invalid(format!(
                "initial datum has {} cells, layout has {}",
                self.h0.len(),
                self.layout.len()
            ));
        }
        if self.generator.len() != self.layout.ranges.len() {
            return invalid("generator and layout disagree on the number of members");
        }
        Ok(())
    }

    pub fn averages(&self) -> Vec<f64> {
        member_averages(self.layout, &self.h0)
    }

    pub fn solve(&self) -> Result<HeatSolution> {
        self.validate()?;
        let g = self.generator;
        let a0 = DVector::from_vec(self.averages());
        let mut sol = HeatSolution {
            times: self.times.clone(),
            values: Vec::new(),
            averages: Vec::new(),
            member_masses: Vec::new(),
            decay: Vec::new(),
        };
        for &t in &self.times {
            let decay: Vec<f64> = g.rates.iter().map(|r| (-t * self.epsilon * r).exp()).collect();
            let (values, avg) = if t == 0.0 {
                (self.h0.clone(), a0.iter().copied().collect::<Vec<_>>())
            } else {
                let a = g.transition(self.epsilon, t) * &a0;
                let values = self
                    .h0
                    .iter()
                    .zip(&self.layout.member)
                    .map(|(h, &u)| a[u] + decay[u] * (h - a0[u]))
                    .collect();
                (values, a.iter().copied().collect())
            };
            sol.member_masses
                .push(avg.iter().zip(&g.weights).map(|(a, w)| a * w).collect());
            sol.values.push(values);
            sol.averages.push(avg);
            sol.decay.push(decay);
        }
        Ok(sol)
    }
}

pub fn member_averages(layout: &CellLayout, h: &[f64]) -> Vec<f64> {
    layout
        .ranges
        .iter()
        .map(|r| h[r.clone()].iter().sum::<f64>() / r.len() as f64)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticityReport {
    pub t: f64,
    pub max_row_error: f64,
    pub min_entry: f64,
    pub inf_norm: f64,
    pub passed: bool,
}

/// Checks that `exp(t eps M)` is a row-stochastic contraction. Violations are
/// reported, not raised.
pub fn stochasticity_check(g: &HeatGenerator, epsilon: f64, t: f64) -> Result<StochasticityReport> {
    if t < 0.0 || !t.is_finite() {
        return invalid("t must be non-negative");
    }
    let p = g.transition(epsilon, t);
    let rows: Vec<f64> = p.row_iter().map(|r| r.sum()).collect();
    let max_row_error = rows.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let min_entry = p.iter().copied().fold(f64::INFINITY, f64::min);
    let inf_norm = p
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(StochasticityReport {
        t,
        max_row_error,
        min_entry,
        inf_norm,
        passed: max_row_error <= 1e-12 && min_entry >= -1e-12 && inf_norm <= 1.0 + 1e-12,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpProcessPath {
    pub seed: u64,
    pub index: u64,
    /// `(jump time, cell)`, starting at time 0.
    pub states: Vec<(f64, usize)>,
}

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn pick(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            if x < *w {
                return i;
            }
            x -= w;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

struct Sampler<'a> {
    g: &'a HeatGenerator,
    layout: &'a CellLayout,
    epsilon: f64,
    start: Vec<f64>,
    start_total: f64,
}

impl Sampler<'_> {
    fn run(&self, t_end: f64, rng: &mut ChaCha8Rng, mut record: impl FnMut(f64, usize)) -> usize {
        let mut cell = pick(&self.start, self.start_total, rng);
        let mut now = 0.0;
        record(now, cell);
        let n = self.g.len();
        loop {
            let u = self.layout.member[cell];
            let rate = self.epsilon * self.g.rates[u];
            if rate <= 0.0 {
                return cell;
            }
            let hold = -(1.0 - rng.random::<f64>()).ln() / rate;
            now += hold;
            if now > t_end {
                return cell;
            }
            let jumps: Vec<f64> = (0..n)
                .map(|v| if v == u { 0.0 } else { self.g.matrix[(u, v)].max(0.0) })
                .collect();
            let v = pick(&jumps, self.g.rates[u], rng);
            let range = self.layout.ranges[v].clone();
            cell = range.start + rng.random_range(0..range.len());
            record(now, cell);
        }
    }
}

fn sampler<'a>(g: &'a HeatGenerator, layout: &'a CellLayout, epsilon: f64, h0: &[f64]) -> Result<Sampler<'a>> {
    if h0.len() != layout.len() {
        return invalid("initial datum does not match the layout");
    }
    if h0.iter().any(|x| *x < 0.0 || !x.is_finite()) {
        return invalid("initial datum must be a non-negative density");
    }
    let start_total: f64 = h0.iter().sum();
    if start_total <= 0.0 {
        return invalid("initial datum has zero mass");
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return invalid("epsilon must be positive");
    }
    Ok(Sampler {
        g,
        layout,
        epsilon,
        start: h0.to_vec(),
        start_total,
    })
}

/// One path; the starting cell is drawn from `h0` (cells have equal measure).
pub fn sample_path(
    g: &HeatGenerator,
    layout: &CellLayout,
    epsilon: f64,
    h0: &[f64],
    t_end: f64,
    seed: u64,
    index: u64,
) -> Result<JumpProcessPath> {
    let s = sampler(g, layout, epsilon, h0)?;
    let mut states = Vec::new();
    s.run(t_end, &mut path_rng(seed, index), |t, c| states.push((t, c)));
    Ok(JumpProcessPath { seed, index, states })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub labels: Vec<String>,
    pub t: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub empirical: Vec<f64>,
    pub analytic: Vec<f64>,
    pub total_variation: f64,
}

/// Member occupancy at time `t` of `n_paths` independent paths; path `i` uses
/// its own stream of a generator seeded by `seed`, so the result does not
/// depend on scheduling.
pub fn simulate(
    g: &HeatGenerator,
    layout: &CellLayout,
    epsilon: f64,
    h0: &[f64],
    t: f64,
    n_paths: u64,
    seed: u64,
) -> Result<SimulationReport> {
    if n_paths == 0 {
        return invalid("n_paths must be at least 1");
    }
    if t < 0.0 || !t.is_finite() {
        return invalid("t must be non-negative");
    }
    let s = sampler(g, layout, epsilon, h0)?;
    let n = g.len();
    let counts = (0..n_paths)
        .into_par_iter()
        .fold(
            || vec![0u64; n],
            |mut acc, i| {
                let cell = s.run(t, &mut path_rng(seed, i), |_, _| {});
                acc[layout.member[cell]] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let empirical: Vec<f64> = counts.iter().map(|c| *c as f64 / n_paths as f64).collect();
    let analytic = analytic_occupancy(g, layout, epsilon, h0, t);
    let total_variation = total_variation(&empirical, &analytic);
    Ok(SimulationReport {
        labels: g.labels.clone(),
        t,
        n_paths,
        seed,
        empirical,
        analytic,
        total_variation,
    })
}

/// Law of the member occupied at time `t`: `pi_0 exp(t eps M)`.
pub fn analytic_occupancy(g: &HeatGenerator, layout: &CellLayout, epsilon: f64, h0: &[f64], t: f64) -> Vec<f64> {
    let total: f64 = h0.iter().sum();
    let pi0 = DVector::from_iterator(
        g.len(),
        layout
            .ranges
            .iter()
            .map(|r| h0[r.clone()].iter().sum::<f64>() / total),
    );
    let p = g.transition(epsilon, t);
    (p.transpose() * pi0).iter().copied().collect()
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Transition density `k_t(z)` on the cells of `B(0, k_G)` at the layout depth,
/// for a covering by all cosets of one ball inside a ball `G`, with a kernel
/// invariant under translation.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvolutionKernel {
    pub p: u64,
    pub depth: i64,
    pub cell_measure: BigRational,
    pub offsets: Vec<BigRational>,
    pub values: Vec<f64>,
}

impl ConvolutionKernel {
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * rational_to_f64(&self.cell_measure)
    }

    fn index(&self) -> HashMap<BigRational, usize> {
        self.offsets.iter().cloned().enumerate().map(|(i, z)| (z, i)).collect()
    }

    /// `(k * h)(x) = sum_y k(x - y) h(y) mu(cell)` on the layout's cells.
    pub fn convolve(&self, layout: &CellLayout, h: &[f64]) -> Result<Vec<f64>> {
        let cells = layout
            .cells
            .as_ref()
            .ok_or_else(|| Error::UnsupportedStructure("convolution needs cell geometry".into()))?;
        let index = self.index();
        let m = rational_to_f64(&self.cell_measure);
        cells
            .iter()
            .map(|x| {
                cells.iter().zip(h).try_fold(0.0, |acc, (y, hy)| {
                    let z = canonical_center(&(&x.center - &y.center), self.p, self.depth);
                    let i = index
                        .get(&z)
                        .ok_or_else(|| Error::UnsupportedStructure(format!("offset {} outside kernel support", format_rational(&z))))?;
                    Ok(acc + self.values[*i] * hy * m)
                })
            })
            .collect()
    }
}

pub fn convolution_kernel(spec: &KernelSpec, epsilon: f64, t: f64, layout: &CellLayout) -> Result<ConvolutionKernel> {
    let cov = &spec.covering;
    let p = cov.p();
    let unsupported = |m: &str| Err(Error::UnsupportedStructure(m.into()));
    let members = match &cov.members {
        Some(m) => m,
        None => return unsupported("convolution form needs member geometry"),
    };
    let cells = layout.cells.as_ref().expect("geometric layout");
    if members.iter().any(|m| !m.holes.is_empty()) {
        return unsupported("members must be balls");
    }
    let k_h = members[0].outer.radius_exp;
    if members.iter().any(|m| m.outer.radius_exp != k_h) {
        return unsupported("members must be balls of one radius");
    }
    let n = members.len() as i64;
    let mut k_g = k_h;
    let mut count = 1i64;
    while count < n {
        count *= p as i64;
        k_g -= 1;
    }
    let g_ball = Ball::new(members[0].outer.center.clone(), k_g, p);
    if count != n || !members.iter().all(|m| g_ball.contains_ball(&m.outer, p)) {
        return unsupported("members must be all cosets of one ball inside a ball");
    }
    let find = |x: &BigRational| members.iter().position(|m| m.outer.contains_point(x, p));
    for (u, mu) in members.iter().enumerate() {
        for (v, mv) in members.iter().enumerate() {
            for w in members {
                let shift = &w.outer.center - &members[0].outer.center;
                let (su, sv) = (find(&(&mu.outer.center + &shift)), find(&(&mv.outer.center + &shift)));
                match (su, sv) {
                    (Some(su), Some(sv)) if spec.adjacency.entries[su][sv] == spec.adjacency.entries[u][v] => {}
                    _ => return unsupported("kernel is not translation invariant"),
                }
            }
        }
    }

    let origin = cells
        .iter()
        .position(|c| c.contains_point(&g_ball.center, p))
        .expect("centre of G lies in a cell");
    let mut h0 = vec![0.0; layout.len()];
    h0[origin] = rational_to_f64(&layout.cell_measure.recip());
    let g = HeatGenerator::from_spec(spec)?;
    let sol = HeatProblem {
        generator: &g,
        layout,
        epsilon,
        times: vec![t],
        h0,
    }
    .solve()?;
    let offsets = cells
        .iter()
        .map(|c| canonical_center(&(&c.center - &cells[origin].center), p, layout.depth))
        .collect();
    Ok(ConvolutionKernel {
        p,
        depth: layout.depth,
        cell_measure: layout.cell_measure.clone(),
        offsets,
        values: sol.values[0].clone(),
    })
}

/// Cell values of an initial datum given by member indicators scaled to unit
/// mass on the chosen member, or explicit per-cell values.
pub fn indicator(layout: &CellLayout, member: usize, measure: &BigRational) -> Result<Vec<f64>> {
    if member >= layout.ranges.len() {
        return Err(Error::IndexOutOfRange {
            index: member,
            max: layout.ranges.len().saturating_sub(1),
        });
    }
    if measure.is_zero() {
        return invalid("member has zero measure");
    }
    let height = rational_to_f64(&measure.recip());
    Ok(layout
        .member
        .iter()
        .map(|&u| if u == member { height } else { 0.0 })
        .collect())
}
