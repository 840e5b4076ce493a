//! Schottky-invariant operators on Mumford curves and the Tate-curve closed forms.

pub mod mobius;
pub mod schottky;
pub mod tate;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exact::{rational_to_f64, Alpha};

pub use mobius::{DerivativeMap, Mobius};
pub use schottky::{
    spectral_gap, GapKind, InvariantDegree, InvariantSpectrumReport, InvariantWaveletEigenvalue,
    InvariantWaveletNorm, SchottkyData, WeightSum, Word, WordEnumeration, WordTerm,
};
pub use tate::{TateCurve, TateDegree};

/// A curve in a gap scan.
#[derive(Clone, Debug)]
pub enum GapScanMember {
    Tate(TateCurve),
    Schottky { name: String, data: Box<SchottkyData> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub name: String,
    pub spectral_gap: f64,
    pub kind: GapKind,
    pub min_measure: f64,
}

/// Spectral gap of every curve, ordered by decreasing smallest member measure.
pub fn gap_scan(family: &[GapScanMember], alpha: &Alpha, s: &Alpha) -> Result<Vec<GapRow>> {
    if family.is_empty() {
        return invalid("gap scan needs at least one curve");
    }
    let mut rows = family
        .iter()
        .map(|m| match m {
            GapScanMember::Tate(t) => {
                let lap = t.laplacian_eigenvalues(alpha)?;
                let sq = t.s_q(s)?;
                let wav = (0..=t.n)
                    .map(|i| Ok(-(t.c_alpha(alpha, i)?.to_f64() * sq.to_f64())))
                    .collect::<Result<Vec<f64>>>()?;
                let (gap, kind) = spectral_gap(&lap, &wav);
                Ok(GapRow {
                    name: format!("tate p={} n={}", t.params.p, t.n),
                    spectral_gap: gap,
                    kind,
                    min_measure: rational_to_f64(&t.measure(t.n)),
                })
            }
            GapScanMember::Schottky { name, data } => {
                let r = data.invariant_spectrum(s)?;
                let min_measure = data
                    .covering()
                    .measures
                    .iter()
                    .map(rational_to_f64)
                    .fold(f64::INFINITY, f64::min);
                Ok(GapRow {
                    name: name.clone(),
                    spectral_gap: r.spectral_gap,
                    kind: r.gap_kind,
                    min_measure,
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.min_measure.total_cmp(&a.min_measure));
    Ok(rows)
}
