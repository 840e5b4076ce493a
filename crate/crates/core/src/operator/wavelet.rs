//! Mean-zero wavelets on covering members.
//!
//! On a ball `B = B(c, k)` of `Q_p` the family is
//! `psi_j(x) = mu(B)^{-1/2} chi(p^{-(k+1)} j x) 1_B(x)` for `j = 1, ..., p-1`;
//! it is constant on the children of `B` and sums to zero over them. A member
//! that is a holed disc is a disjoint union of maximal balls; on top of the
//! ball families it carries one extra family spread over those pieces, built
//! from the `r`-th roots of unity when the pieces have equal measure and from
//! Helmert contrasts otherwise. Members without geometry get the roots-of-unity
//! family over their cells.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::affinoid::{AbstractCovering, Ball, CellLayout};
use crate::error::{Error, Result};
use crate::exact::{int, rat, rational_to_f64};
use crate::localfield::{fractional_part, unit_phase, FieldParams, PointQp};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WaveletShape {
    Ball { ball: Ball, j: u64 },
    Cyclic { pieces: Vec<Ball>, j: usize },
    Helmert { pieces: Vec<Ball>, index: usize },
    Cells { j: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Wavelet {
    pub member: usize,
    pub shape: WaveletShape,
}

/// Exact cell values `sqrt(norm_sq) * coeff * exp(2 pi i phase)` on the support.
#[derive(Clone, Debug)]
pub struct WaveletCells {
    pub norm_sq: BigRational,
    pub entries: Vec<(usize, BigRational, BigRational)>,
}

impl WaveletCells {
    pub fn to_complex(&self, n_cells: usize) -> Vec<Complex64> {
        let scale = rational_to_f64(&self.norm_sq).sqrt();
        let mut out = vec![Complex64::new(0.0, 0.0); n_cells];
        for (cell, coeff, phase) in &self.entries {
            out[*cell] = unit_phase(phase) * (scale * rational_to_f64(coeff));
        }
        out
    }

    /// Exact test that the wavelet integrates to zero.
    pub fn is_mean_zero(&self) -> bool {
        root_of_unity_sum_is_zero(self.entries.iter().map(|(_, c, ph)| (c.clone(), ph.clone())))
    }

    /// Exact squared L2 norm for cells of the given measure.
    pub fn l2_norm_sq(&self, cell_measure: &BigRational) -> BigRational {
        let s = self
            .entries
            .iter()
            .fold(BigRational::zero(), |acc, (_, c, _)| acc + c * c);
        s * cell_measure * &self.norm_sq
    }
}

impl Wavelet {
    pub fn cells(&self, cov: &AbstractCovering, layout: &CellLayout) -> Result<WaveletCells> {
        let p = cov.p();
        let range = layout.ranges[self.member].clone();
        let geometry = || {
            layout
                .cells
                .as_ref()
                .ok_or_else(|| Error::UnsupportedStructure("wavelet needs cell geometry".into()))
        };
        match &self.shape {
            WaveletShape::Ball { ball, j } => {
                let cells = geometry()?;
                let scale = crate::exact::p_pow(p, -(ball.radius_exp + 1));
                let entries = range
                    .filter(|&i| ball.contains_ball(&cells[i], p))
                    .map(|i| {
                        let arg = &cells[i].center * &scale * int(*j as i64);
                        (i, BigRational::one(), fractional_part(&arg, p))
                    })
                    .collect();
                Ok(WaveletCells {
                    norm_sq: ball.measure(p).recip(),
                    entries,
                })
            }
            WaveletShape::Cyclic { pieces, j } => {
                let cells = geometry()?;
                let r = pieces.len() as i64;
                let mut entries = Vec::new();
                for i in range {
                    if let Some(idx) = pieces.iter().position(|b| b.contains_ball(&cells[i], p)) {
                        let phase = rat((*j as i64 * idx as i64) % r, r);
                        entries.push((i, BigRational::one(), phase));
                    }
                }
                Ok(WaveletCells {
                    norm_sq: cov.measures[self.member].recip(),
                    entries,
                })
            }
            WaveletShape::Helmert { pieces, index } => {
                let cells = geometry()?;
                let before = pieces[..*index]
                    .iter()
                    .fold(BigRational::zero(), |a, b| a + b.measure(p));
                let own = pieces[*index].measure(p);
                let mut entries = Vec::new();
                for i in range {
                    match pieces.iter().position(|b| b.contains_ball(&cells[i], p)) {
                        Some(idx) if idx < *index => {
                            entries.push((i, before.recip(), BigRational::zero()))
                        }
                        Some(idx) if idx == *index => {
                            entries.push((i, -own.recip(), BigRational::zero()))
                        }
                        _ => {}
                    }
                }
                Ok(WaveletCells {
                    norm_sq: (before.recip() + own.recip()).recip(),
                    entries,
                })
            }
            WaveletShape::Cells { j } => {
                let n = range.len() as i64;
                let entries = range
                    .clone()
                    .enumerate()
                    .map(|(t, i)| (i, BigRational::one(), rat((*j as i64 * t as i64) % n, n)))
                    .collect();
                Ok(WaveletCells {
                    norm_sq: cov.measures[self.member].recip(),
                    entries,
                })
            }
        }
    }
}

/// Value of a geometric wavelet at a point of `Q_p`.
pub fn eval_wavelet(w: &Wavelet, x: &PointQp, params: &FieldParams) -> Result<Complex64> {
    params.require_qp("wavelet evaluation")?;
    let p = params.p;
    let x = &x.0;
    let value = |norm_sq: BigRational, coeff: BigRational, phase: BigRational| {
        unit_phase(&phase) * (rational_to_f64(&norm_sq).sqrt() * rational_to_f64(&coeff))
    };
    let zero = Complex64::new(0.0, 0.0);
    Ok(match &w.shape {
        WaveletShape::Ball { ball, j } => {
            if !ball.contains_point(x, p) {
                return Ok(zero);
            }
            let arg = x * crate::exact::p_pow(p, -(ball.radius_exp + 1)) * int(*j as i64);
            value(ball.measure(p).recip(), BigRational::one(), fractional_part(&arg, p))
        }
        WaveletShape::Cyclic { pieces, j } => match pieces.iter().position(|b| b.contains_point(x, p)) {
            Some(idx) => {
                let r = pieces.len() as i64;
                let total = pieces.iter().fold(BigRational::zero(), |a, b| a + b.measure(p));
                value(total.recip(), BigRational::one(), rat((*j as i64 * idx as i64) % r, r))
            }
            None => zero,
        },
        WaveletShape::Helmert { pieces, index } => {
            let before = pieces[..*index]
                .iter()
                .fold(BigRational::zero(), |a, b| a + b.measure(p));
            let own = pieces[*index].measure(p);
            let norm_sq = (before.recip() + own.recip()).recip();
            match pieces.iter().position(|b| b.contains_point(x, p)) {
                Some(idx) if idx < *index => value(norm_sq, before.recip(), BigRational::zero()),
                Some(idx) if idx == *index => value(norm_sq, -own.recip(), BigRational::zero()),
                _ => zero,
            }
        }
        WaveletShape::Cells { .. } => {
            return Err(Error::UnsupportedStructure(
                "member has no point geometry".into(),
            ))
        }
    })
}

/// Orthonormal mean-zero basis of the functions on each member that are
/// constant on the layout's cells; `N_U - 1` functions for a member of `N_U` cells.
pub fn wavelet_basis(cov: &AbstractCovering, layout: &CellLayout) -> Result<Vec<Wavelet>> {
    let p = cov.p();
    let mut out = Vec::new();
    for u in 0..cov.len() {
        match &cov.members {
            Some(members) if layout.cells.is_some() => {
                let pieces = members[u].maximal_balls(p);
                let r = pieces.len();
                if r > 1 {
                    let m0 = pieces[0].measure(p);
                    if pieces.iter().all(|b| b.measure(p) == m0) {
                        out.extend((1..r).map(|j| Wavelet {
                            member: u,
                            shape: WaveletShape::Cyclic {
                                pieces: pieces.clone(),
                                j,
                            },
                        }));
                    } else {
                        out.extend((1..r).map(|index| Wavelet {
                            member: u,
                            shape: WaveletShape::Helmert {
                                pieces: pieces.clone(),
                                index,
                            },
                        }));
                    }
                }
                for piece in &pieces {
                    for level in piece.radius_exp..layout.depth {
                        for ball in piece.cells(level, p) {
                            out.extend((1..p).map(|j| Wavelet {
                                member: u,
                                shape: WaveletShape::Ball {
                                    ball: ball.clone(),
                                    j,
                                },
                            }));
                        }
                    }
                }
            }
            _ => {
                let n = layout.count(u);
                out.extend((1..n).map(|j| Wavelet {
                    member: u,
                    shape: WaveletShape::Cells { j },
                }));
            }
        }
    }
    Ok(out)
}

fn poly_divmod(mut num: Vec<BigInt>, den: &[BigInt]) -> (Vec<BigInt>, Vec<BigInt>) {
    // den is monic
    let dn = den.len() - 1;
    if num.len() <= dn {
        return (vec![], num);
    }
    let mut quot = vec![BigInt::zero(); num.len() - dn];
    for i in (0..quot.len()).rev() {
        let c = num[i + dn].clone();
        if c.is_zero() {
            continue;
        }
        for (k, d) in den.iter().enumerate() {
            num[i + k] -= &c * d;
        }
        quot[i] = c;
    }
    num.truncate(dn);
    (quot, num)
}

/// Coefficients (lowest degree first) of the cyclotomic polynomial `Phi_n`.
pub fn cyclotomic(n: u64) -> Vec<BigInt> {
    let mut poly = vec![BigInt::zero(); n as usize + 1];
    poly[0] = -BigInt::one();
    poly[n as usize] = BigInt::one();
    for d in 1..n {
        if n.is_multiple_of(d) {
            let (q, r) = poly_divmod(poly, &cyclotomic(d));
            debug_assert!(r.iter().all(Zero::is_zero));
            poly = q;
        }
    }
    poly
}

/// Decides exactly whether `sum c_k exp(2 pi i phase_k) = 0`.
pub fn root_of_unity_sum_is_zero(terms: impl IntoIterator<Item = (BigRational, BigRational)>) -> bool {
    let mut grouped: BTreeMap<BigRational, BigRational> = BTreeMap::new();
    for (c, ph) in terms {
        let ph = &ph - BigRational::from_integer(ph.floor().to_integer());
        *grouped.entry(ph).or_insert_with(BigRational::zero) += c;
    }
    grouped.retain(|_, c| !c.is_zero());
    if grouped.is_empty() {
        return true;
    }
    let n = grouped
        .keys()
        .fold(BigInt::one(), |acc, ph| acc.lcm(ph.denom()));
    let n = match n.to_u64() {
        Some(n) if n <= 1 << 16 => n,
        _ => return false,
    };
    let den = grouped
        .values()
        .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
    let mut poly = vec![BigInt::zero(); n as usize];
    for (ph, c) in &grouped {
        let idx = (ph * BigRational::from_integer(n.into())).to_integer();
        let idx = idx.to_usize().expect("phase index below n");
        poly[idx] += (c * BigRational::from_integer(den.clone())).to_integer();
    }
    let (_, rem) = poly_divmod(poly, &cyclotomic(n));
    rem.iter().all(Zero::is_zero)
}
