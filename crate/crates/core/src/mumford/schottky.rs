//! Schottky groups acting on a covered fundamental domain: word enumeration,
//! the weights `m_{gamma,U}^{-s}`, invariant degrees with tail bounds, and the
//! invariant spectrum.

use std::collections::HashSet;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::affinoid::{discretize, AbstractCovering, HoledDisc};
use crate::error::{invalid, Error, Result};
use crate::exact::{rational_to_f64, Alpha, Real};
use crate::mumford::mobius::Mobius;
use crate::operator::{wavelet_basis, weighted_laplacian_pairs, KernelSpec, UMatrix};

/// Relative slack added to floating-point tail bounds.
const TAIL_SLACK: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SchottkyData {
    pub generators: Vec<Mobius>,
    pub spec: KernelSpec,
    pub cutoff: usize,
    pub depth: i64,
    /// Whether the fundamental domain is claimed to be a holed disc in `O_K`
    /// of maximal volume; only the built-in Tate construction sets this itself.
    pub assumption_claimed: bool,
}

/// A reduced word over the generators and their inverses.
#[derive(Clone, Debug)]
pub struct Word {
    /// `(generator, inverted)` letters, applied left to right as a product.
    pub letters: Vec<(usize, bool)>,
    pub map: Mobius,
}

#[derive(Clone, Debug)]
pub struct WordEnumeration {
    pub words: Vec<Word>,
    /// Number of words that coincide with an earlier one as transformations.
    pub collisions: usize,
}

/// One word's contribution on one member.
#[derive(Clone, Debug)]
pub struct WordTerm {
    pub length: usize,
    /// Smallest exponent of `|gamma'|` on the member, so `max |gamma'| = p^{-max_exp}`.
    pub max_exp: i64,
    /// `int_V |gamma'|`.
    pub integral: BigRational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSum {
    pub label: String,
    pub value: f64,
    pub exact: Option<String>,
    pub tail_bound: f64,
    pub cutoff: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantDegree {
    pub label: String,
    pub value: f64,
    pub exact: Option<String>,
    pub tail_bound: f64,
    pub cutoff: usize,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantWaveletNorm {
    pub label: String,
    pub index: usize,
    pub norm_sq: f64,
    pub tail_bound: f64,
    /// `||Psi||_s^{-1}`.
    pub normalisation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapKind {
    Wavelet,
    Laplacian,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantWaveletEigenvalue {
    pub label: String,
    pub eigenvalue: f64,
    pub exact: Option<String>,
    pub tail_bound: f64,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSpectrumReport {
    pub labels: Vec<String>,
    pub s: f64,
    pub cutoff: usize,
    pub depth: i64,
    /// Eigenvalues of the Laplacian of `B^alpha`, ascending.
    pub laplacian: Vec<f64>,
    /// Eigenvalues of the invariant generator on member-constant functions.
    pub generator: Vec<f64>,
    pub wavelet: Vec<InvariantWaveletEigenvalue>,
    pub zero_multiplicity: usize,
    pub spectral_gap: f64,
    pub gap_kind: GapKind,
    /// Largest `||M_Gamma e - lambda e||` over the `B^alpha` Laplacian eigenvectors.
    pub graph_residual: f64,
}

/// Minimum over nonzero magnitudes of the two eigenvalue lists.
pub fn spectral_gap(laplacian: &[f64], wavelet: &[f64]) -> (f64, GapKind) {
    let mut best = (f64::INFINITY, GapKind::None);
    for (vals, kind) in [(wavelet, GapKind::Wavelet), (laplacian, GapKind::Laplacian)] {
        for v in vals {
            let a = v.abs();
            if a > 1e-12 && a < best.0 {
                best = (a, kind);
            }
        }
    }
    if best.1 == GapKind::None {
        (0.0, GapKind::None)
    } else {
        best
    }
}

impl SchottkyData {
    pub fn new(
        generators: Vec<Mobius>,
        spec: KernelSpec,
        cutoff: Option<usize>,
        depth: Option<i64>,
        assumption_claimed: bool,
    ) -> Result<Self> {
        let cov = &spec.covering;
        cov.field.require_qp("Schottky data")?;
        let p = cov.p();
        let members = cov.members.clone().ok_or_else(|| {
            Error::UnsupportedStructure("Schottky data needs a fundamental cover with member geometry".into())
        })?;
        if let Some(i) = generators.iter().position(|g| !g.is_hyperbolic(p)) {
            return invalid(format!("generator {i} is not hyperbolic"));
        }
        if spec.adjacency.entries.iter().flatten().any(|a| a.is_negative()) {
            return invalid("adjacency entries must be non-negative");
        }
        let required = cov.required_depth()?;
        let depth = depth.unwrap_or(required);
        if depth < required {
            return Err(Error::RefineDepth { requested: depth, required });
        }
        let cutoff = cutoff.unwrap_or(if generators.len() <= 1 { 20 } else { 8 });
        let data = SchottkyData {
            generators,
            spec,
            cutoff,
            depth,
            assumption_claimed,
        };
        data.check_translates_disjoint(&members)?;
        Ok(data)
    }

    pub fn genus(&self) -> usize {
        self.generators.len()
    }

    pub fn covering(&self) -> &AbstractCovering {
        &self.spec.covering
    }

    pub fn p(&self) -> u64 {
        self.spec.covering.p()
    }

    /// Every generator and inverse moves each cell of the domain off the domain.
    fn check_translates_disjoint(&self, members: &[HoledDisc]) -> Result<()> {
        let p = self.p();
        for (i, g) in self.generators.iter().enumerate() {
            for h in [g.clone(), g.inverse()] {
                for m in members {
                    for cell in m.maximal_balls(p).iter().flat_map(|b| b.cells(self.depth, p)) {
                        let image = h.image_ball(&cell, p)?;
                        if members.iter().any(|n| !n.disjoint_from_ball(&image, p)) {
                            return invalid(format!(
                                "generator {i} maps part of the fundamental domain into itself"
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Reduced words of length at most `cutoff`, by length.
    pub fn enumerate_words(&self, cutoff: usize) -> WordEnumeration {
        let letters: Vec<(usize, bool, Mobius)> = self
            .generators
            .iter()
            .enumerate()
            .flat_map(|(i, g)| [(i, false, g.clone()), (i, true, g.inverse())])
            .collect();
        let mut words = vec![Word {
            letters: Vec::new(),
            map: Mobius::identity(),
        }];
        let mut seen: HashSet<Mobius> = HashSet::from([Mobius::identity()]);
        let mut collisions = 0;
        let mut frontier = 0..1;
        for _ in 0..cutoff {
            let start = words.len();
            for w in frontier.clone() {
                for (i, inv, m) in &letters {
                    if words[w].letters.last() == Some(&(*i, !*inv)) {
                        continue;
                    }
                    let mut l = words[w].letters.clone();
                    l.push((*i, *inv));
                    let map = words[w].map.compose(m);
                    if !seen.insert(map.clone()) {
                        collisions += 1;
                    }
                    words.push(Word { letters: l, map });
                }
            }
            frontier = start..words.len();
        }
        if collisions > 0 {
            log::warn!("{collisions} word collisions: the group is not free on these generators (not Schottky)");
        }
        WordEnumeration { words, collisions }
    }

    /// Terms of every word on every member.
    pub fn term_table(&self, cutoff: usize) -> Result<Vec<Vec<WordTerm>>> {
        let p = self.p();
        let members = self.covering().members.as_ref().expect("validated geometry");
        let words = self.enumerate_words(cutoff).words;
        members
            .iter()
            .map(|m| {
                words
                    .iter()
                    .map(|w| {
                        let d = w.map.derivative_magnitude(m, self.depth, p)?;
                        Ok(WordTerm {
                            length: w.letters.len(),
                            max_exp: d.max_exp,
                            integral: d.integral(p),
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// `sum_gamma m_{gamma,V}^{-s} int_V |gamma'|` over enumerated words.
    fn weighted_integral(&self, terms: &[WordTerm], s: &Alpha) -> Real {
        let p = self.p();
        terms
            .iter()
            .map(|t| {
                let m = (-t.max_exp).max(0);
                &s.power_of_magnitude(p, 1, m) * &Real::from_rational(t.integral.clone())
            })
            .sum()
    }

    /// Bound on the omitted words' `sum m^{-s} (1/mu(V)) int_V |gamma'|`: each
    /// word of length `cutoff` is continued geometrically with exponent step `lambda`.
    fn tail(&self, terms: &[WordTerm], cutoff: usize, s: f64) -> f64 {
        let g = self.genus();
        if g == 0 {
            return 0.0;
        }
        let p = self.p() as f64;
        let lambda = exponent_gap(terms);
        let branch = (2 * g - 1) as f64;
        let first = if cutoff == 0 { 2 * g } else { 2 * g - 1 } as f64;
        let chain = |x: f64, c: f64| {
            let rho = p.powf(-c * lambda);
            if branch * rho >= 1.0 {
                f64::INFINITY
            } else {
                first * p.powf(-c * x) * rho / (1.0 - branch * rho)
            }
        };
        let total: f64 = terms
            .iter()
            .filter(|t| t.length == cutoff)
            .map(|t| {
                let x = t.max_exp.abs() as f64;
                match t.max_exp.signum() {
                    1 => chain(x, 1.0),
                    -1 => chain(x, s - 1.0),
                    _ => chain(x, 1.0).max(chain(x, s - 1.0)),
                }
            })
            .sum();
        total * (1.0 + TAIL_SLACK)
    }

    fn check_s(s: &Alpha) -> Result<()> {
        if s.to_f64() <= 1.0 || !s.to_f64().is_finite() {
            return Err(Error::Parameter(format!("s must exceed 1, got {}", s.to_f64())));
        }
        Ok(())
    }

    /// `(sum_gamma m_{gamma,U}^{-s} int_U |gamma'|) / mu(U)` with a tail bound.
    pub fn weight_sum(&self, u: usize, s: &Alpha, cutoff: usize) -> Result<(Real, f64)> {
        Self::check_s(s)?;
        self.check_index(u)?;
        let table = self.term_table(cutoff)?;
        let mu = self.covering().measures[u].recip();
        let value = &self.weighted_integral(&table[u], s) * &Real::from_rational(mu);
        Ok((value, self.tail(&table[u], cutoff, s.to_f64())))
    }

    pub fn weight_sum_report(&self, u: usize, s: &Alpha, cutoff: usize) -> Result<WeightSum> {
        let (v, tail) = self.weight_sum(u, s, cutoff)?;
        Ok(WeightSum {
            label: self.covering().labels[u].clone(),
            value: v.to_f64(),
            exact: v.exact_string(),
            tail_bound: tail,
            cutoff,
        })
    }

    fn check_index(&self, u: usize) -> Result<()> {
        let n = self.covering().len();
        if u >= n {
            return Err(Error::IndexOutOfRange { index: u, max: n - 1 });
        }
        Ok(())
    }

    /// `W_V = sum_gamma m_{gamma,V}^{-s} int_V |gamma'|` and its tail bound, per member.
    pub fn invariant_weights(&self, s: &Alpha, cutoff: usize) -> Result<Vec<(Real, f64)>> {
        Self::check_s(s)?;
        let table = self.term_table(cutoff)?;
        Ok(table
            .iter()
            .zip(&self.covering().measures)
            .map(|(terms, mu)| (self.weighted_integral(terms, s), self.tail(terms, cutoff, s.to_f64()) * rational_to_f64(mu)))
            .collect())
    }

    /// `deg_Gamma(U) = sum_V A_UV d(U,V)^alpha W_V` with its tail bound.
    pub fn invariant_degree_real(&self, u: usize, s: &Alpha, cutoff: usize) -> Result<(Real, f64)> {
        self.check_index(u)?;
        let w = self.invariant_weights(s, cutoff)?;
        Ok(self.degree_from_weights(u, &w))
    }

    fn degree_from_weights(&self, u: usize, w: &[(Real, f64)]) -> (Real, f64) {
        let mut value = Real::zero();
        let mut tail = 0.0;
        for (v, (wv, tv)) in w.iter().enumerate() {
            let b = self.spec.weight(u, v);
            if b.is_zero() {
                continue;
            }
            tail += b.to_f64() * tv;
            value = &value + &(&b * wv);
        }
        (value, tail)
    }

    pub fn invariant_degree(&self, u: usize, s: &Alpha, cutoff: usize) -> Result<InvariantDegree> {
        let (v, tail) = self.invariant_degree_real(u, s, cutoff)?;
        Ok(InvariantDegree {
            label: self.covering().labels[u].clone(),
            value: v.to_f64(),
            exact: v.exact_string(),
            tail_bound: tail,
            cutoff,
            s: s.to_f64(),
        })
    }

    pub fn invariant_degrees(&self, s: &Alpha, cutoff: usize) -> Result<Vec<InvariantDegree>> {
        let w = self.invariant_weights(s, cutoff)?;
        Ok((0..self.covering().len())
            .map(|u| {
                let (v, tail) = self.degree_from_weights(u, &w);
                InvariantDegree {
                    label: self.covering().labels[u].clone(),
                    value: v.to_f64(),
                    exact: v.exact_string(),
                    tail_bound: tail,
                    cutoff,
                    s: s.to_f64(),
                }
            })
            .collect())
    }

    /// `||Psi_{j,U}||_s^2 = sum_gamma m_{gamma,U}^{-s} int_U |psi_j|^2 |gamma'|`
    /// for the `j`-th wavelet supported in `U` at the data's depth.
    pub fn invariant_wavelet_norm(&self, u: usize, j: usize, s: &Alpha, cutoff: usize) -> Result<InvariantWaveletNorm> {
        Self::check_s(s)?;
        self.check_index(u)?;
        let p = self.p();
        let cov = self.covering();
        let layout = discretize(cov, self.depth)?;
        let basis = wavelet_basis(cov, &layout)?;
        let own: Vec<_> = basis.iter().filter(|w| w.member == u).collect();
        let w = own.get(j).ok_or(Error::IndexOutOfRange {
            index: j,
            max: own.len().saturating_sub(1),
        })?;
        let cells = w.cells(cov, &layout)?;
        let balls = layout.cells.as_ref().expect("geometric layout");
        let table = self.term_table(cutoff)?;
        let words = self.enumerate_words(cutoff).words;
        let mut norm_sq = 0.0;
        for (word, term) in words.iter().zip(&table[u]) {
            let m = (-term.max_exp).max(0) as f64;
            let weight = (p as f64).powf(-m * s.to_f64());
            let mut mass = BigRational::zero();
            for (cell, coeff, _) in &cells.entries {
                let k = word.map.derivative_exp(&balls[*cell].center, p)?;
                mass += coeff * coeff * &layout.cell_measure * crate::exact::p_pow(p, -k);
            }
            norm_sq += weight * rational_to_f64(&(mass * &cells.norm_sq));
        }
        Ok(InvariantWaveletNorm {
            label: cov.labels[u].clone(),
            index: j,
            norm_sq,
            tail_bound: self.tail(&table[u], cutoff, s.to_f64()),
            normalisation: 1.0 / norm_sq.sqrt(),
        })
    }

    /// `deg_G(U) max_V mu(V) d(U,V)^alpha C(s, lambda_V)` with
    /// `C(s, lambda) = 1/(1 - p^{-lambda}) + p^{-lambda(s-1)}/(1 - p^{-lambda(s-1)})`.
    pub fn degree_upper_bound(&self, u: usize, s: &Alpha) -> Result<f64> {
        Self::check_s(s)?;
        self.check_index(u)?;
        let p = self.p() as f64;
        let s = s.to_f64();
        let table = self.term_table(self.cutoff)?;
        let cov = self.covering();
        let mut deg_g = 0.0;
        let mut max_term: f64 = 0.0;
        let mut max_c: f64 = 0.0;
        for v in 0..cov.len() {
            let a = rational_to_f64(&self.spec.adjacency.entries[u][v]);
            if v == u || a == 0.0 {
                continue;
            }
            deg_g += a;
            let dm = self.spec.distance_power(u, v).to_f64() * rational_to_f64(&cov.measures[v]);
            max_term = max_term.max(dm);
            let lambda = exponent_gap(&table[v]);
            let (r1, r2) = (p.powf(-lambda), p.powf(-lambda * (s - 1.0)));
            max_c = max_c.max(1.0 / (1.0 - r1) + r2 / (1.0 - r2));
        }
        Ok(deg_g * max_term * max_c)
    }

    /// Heat generator on member-constant invariant functions:
    /// `M_Gamma = B diag(W) - diag(B W)`.
    pub fn invariant_generator(&self, s: &Alpha) -> Result<crate::heat::HeatGenerator> {
        let w = self.invariant_weights(s, self.cutoff)?;
        crate::heat::HeatGenerator::new(
            self.covering().labels.clone(),
            &self.spec.b_alpha().to_dmatrix(),
            w.iter().map(|(x, _)| x.to_f64()).collect(),
        )
    }

    pub fn invariant_spectrum(&self, s: &Alpha) -> Result<InvariantSpectrumReport> {
        let cov = self.covering();
        let n = cov.len();
        let b = self.spec.b_alpha().to_dmatrix();
        let pairs = weighted_laplacian_pairs(&b, &vec![1.0; n])?;
        let laplacian: Vec<f64> = pairs.iter().map(|p| p.value).collect();
        let w = self.invariant_weights(s, self.cutoff)?;
        let wf: Vec<f64> = w.iter().map(|(x, _)| x.to_f64()).collect();
        let generator = weighted_laplacian_pairs(&b, &wf)?.iter().map(|p| p.value).collect();
        let m_gamma = crate::operator::linalg::weighted_laplacian(&b, &wf);
        let graph_residual = pairs
            .iter()
            .map(|pr| (&m_gamma * &pr.vector - &pr.vector * pr.value).norm() / pr.vector.norm())
            .fold(0.0, f64::max);
        let layout = discretize(cov, self.depth)?;
        let wavelet: Vec<InvariantWaveletEigenvalue> = (0..n)
            .map(|u| {
                let (d, tail) = self.degree_from_weights(u, &w);
                let e = -&d;
                InvariantWaveletEigenvalue {
                    label: cov.labels[u].clone(),
                    eigenvalue: e.to_f64(),
                    exact: e.exact_string(),
                    tail_bound: tail,
                    multiplicity: layout.count(u) - 1,
                }
            })
            .collect();
        let wv: Vec<f64> = wavelet.iter().map(|w| w.eigenvalue).collect();
        let (spectral_gap, gap_kind) = spectral_gap(&laplacian, &wv);
        Ok(InvariantSpectrumReport {
            labels: cov.labels.clone(),
            s: s.to_f64(),
            cutoff: self.cutoff,
            depth: self.depth,
            laplacian,
            generator,
            wavelet,
            zero_multiplicity: self.spec.adjacency.components(),
            spectral_gap,
            gap_kind,
            graph_residual,
        })
    }

    pub fn with_adjacency(&self, adjacency: UMatrix) -> Result<Self> {
        let spec = KernelSpec::new(self.spec.covering.clone(), adjacency, self.spec.alpha.clone())?;
        Ok(SchottkyData { spec, ..self.clone() })
    }
}

/// Smallest gap between distinct exponents, or 1 when fewer than three are seen.
fn exponent_gap(terms: &[WordTerm]) -> f64 {
    let mut exps: Vec<i64> = terms.iter().map(|t| t.max_exp).collect();
    exps.sort_unstable();
    exps.dedup();
    if exps.len() < 3 {
        1.0
    } else {
        exps.windows(2).map(|w| w[1] - w[0]).min().expect("several exponents") as f64
    }
}
