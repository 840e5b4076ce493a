//! Tate curves `K^x / <q>` with `|q| = p^{-(n+1)/e}`, covered by the spheres
//! `U_i = {|x| = p^{-i/e}}`, `i = 0..=n`, whose reduction graph is an
//! `(n+1)`-cycle.

use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::affinoid::{build_reduction_tree, compile, verticial_cover, AbstractCovering, Ball, HoledDisc};
use crate::error::{invalid, Error, Result};
use crate::exact::{int, p_pow, Alpha, Real};
use crate::localfield::FieldParams;
use crate::mumford::mobius::Mobius;
use crate::mumford::schottky::SchottkyData;
use crate::operator::{weighted_laplacian_pairs, KernelSpec, UMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TateCurve {
    #[serde(flatten)]
    pub params: FieldParams,
    pub n: usize,
}

/// `deg(U_i) = C_alpha(i) S_q(s)` together with its `s -> infinity` limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TateDegree {
    pub label: String,
    pub c_alpha: String,
    pub limit_exact: Option<String>,
    pub limit: f64,
    pub value_exact: Option<String>,
    pub value: f64,
}

pub(crate) fn real_inv(x: &Real) -> Real {
    match x {
        Real::Exact(s) => s.inv().map(Real::Exact).unwrap_or(Real::Float(f64::INFINITY)),
        Real::Float(f) => Real::Float(1.0 / f),
    }
}

impl TateCurve {
    pub fn new(params: FieldParams, n: usize) -> Result<Self> {
        if n < 2 {
            return invalid(format!("a Tate curve needs n >= 2, got {n}"));
        }
        Ok(TateCurve { params, n })
    }

    pub fn validated(self) -> Result<Self> {
        TateCurve::new(FieldParams::new(self.params.p, self.params.e, self.params.f)?, self.n)
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> Vec<String> {
        (0..=self.n).map(|i| format!("U_{i}")).collect()
    }

    /// `mu(U_i) = p^{-i f} (1 - p^{-f})`.
    pub fn measure(&self, i: usize) -> BigRational {
        let (p, f) = (self.params.p, self.params.f as i64);
        p_pow(p, -(i as i64) * f) * (BigRational::one() - p_pow(p, -f))
    }

    fn neighbours(&self, i: usize) -> [usize; 2] {
        let m = self.n + 1;
        [(i + 1) % m, (i + m - 1) % m]
    }

    pub fn adjacency(&self) -> UMatrix {
        let m = self.n + 1;
        let mut a = vec![vec![int(0); m]; m];
        for (i, row) in a.iter_mut().enumerate() {
            for j in self.neighbours(i) {
                row[j] = int(1);
            }
        }
        UMatrix::new(a).expect("cycle adjacency is valid")
    }

    pub fn abstract_cover(&self) -> Result<AbstractCovering> {
        let m = self.n + 1;
        let dist = (0..m)
            .map(|i| (0..m).map(|j| i.min(j) as i64).collect())
            .collect();
        AbstractCovering::new(self.params, self.labels(), (0..m).map(|i| self.measure(i)).collect(), dist)
    }

    pub fn spec(&self, alpha: Alpha) -> Result<KernelSpec> {
        KernelSpec::new(self.abstract_cover()?, self.adjacency(), alpha)
    }

    /// `C_alpha(i) = sum over the two neighbours j of mu(U_j) p^{-min(i,j) alpha / e}`.
    pub fn c_alpha(&self, alpha: &Alpha, i: usize) -> Result<Real> {
        if i > self.n {
            return Err(Error::IndexOutOfRange { index: i, max: self.n });
        }
        Ok(self
            .neighbours(i)
            .iter()
            .map(|&j| {
                &alpha.power_of_magnitude(self.params.p, self.params.e, i.min(j) as i64)
                    * &Real::from_rational(self.measure(j))
            })
            .sum())
    }

    /// `|q|^x` as a real, for an exponent given as `Alpha`.
    fn q_power(&self, x: &Alpha) -> Real {
        x.power_of_magnitude(self.params.p, self.params.e, self.n as i64 + 1)
    }

    /// `1 / (1 - |q|)`, the limit of `S_q(s)` as `s -> infinity`.
    pub fn limit_factor(&self) -> Real {
        real_inv(&(Real::from_rational(BigRational::one()) - self.q_power(&Alpha::integer(1))))
    }

    /// `S_q(s) = 1/(1 - |q|) + |q|^{s-1} / (1 - |q|^{s-1})`.
    pub fn s_q(&self, s: &Alpha) -> Result<Real> {
        if s.to_f64() <= 1.0 || !s.to_f64().is_finite() {
            return Err(Error::Parameter(format!("s must exceed 1, got {}", s.to_f64())));
        }
        let sm1 = match s {
            Alpha::Exact(r) => Alpha::Exact(r - int(1)),
            Alpha::Float(x) => Alpha::Float(x - 1.0),
        };
        let t = self.q_power(&sm1);
        let one = Real::from_rational(BigRational::one());
        Ok(self.limit_factor() + &t * &real_inv(&(&one - &t)))
    }

    pub fn tate_degree(&self, alpha: &Alpha, s: &Alpha, i: usize) -> Result<TateDegree> {
        let c = self.c_alpha(alpha, i)?;
        let limit = &c * &self.limit_factor();
        let value = &c * &self.s_q(s)?;
        Ok(TateDegree {
            label: format!("U_{i}"),
            c_alpha: c.to_string(),
            limit_exact: limit.exact_string(),
            limit: limit.to_f64(),
            value_exact: value.exact_string(),
            value: value.to_f64(),
        })
    }

    pub fn degree_table(&self, alpha: &Alpha, s: &Alpha) -> Result<Vec<TateDegree>> {
        (0..=self.n).map(|i| self.tate_degree(alpha, s, i)).collect()
    }

    /// Eigenvalues of the Laplacian of `B^alpha` on the cycle, ascending.
    pub fn laplacian_eigenvalues(&self, alpha: &Alpha) -> Result<Vec<f64>> {
        let spec = self.spec(alpha.clone())?;
        let b = spec.b_alpha().to_dmatrix();
        Ok(weighted_laplacian_pairs(&b, &vec![1.0; self.n + 1])?
            .iter()
            .map(|p| p.value)
            .collect())
    }

    /// Exact Laplacian eigenvalues for the triangle `n = 2`: with
    /// `b = p^{-alpha/e}` they are `-3`, `-(1 + 2b)` and `0`.
    pub fn laplacian_closed_form(&self, alpha: &Alpha) -> Option<Vec<Real>> {
        (self.n == 2).then(|| {
            let b = alpha.power_of_magnitude(self.params.p, self.params.e, 1);
            let one = Real::from_rational(BigRational::one());
            vec![
                Real::from_rational(int(-3)),
                -&(&one + &(&Real::from_rational(int(2)) * &b)),
                Real::zero(),
            ]
        })
    }

    /// The fundamental domain `Z_p \ p^{n+1} Z_p` with its verticial cover;
    /// requires `K = Q_p`.
    pub fn fundamental_cover(&self) -> Result<AbstractCovering> {
        self.params.require_qp("the Tate fundamental domain")?;
        let p = self.params.p;
        let f = HoledDisc::new(Ball::new(int(0), 0, p), vec![Ball::new(int(0), self.n as i64 + 1, p)], p)?;
        let cov = compile(&verticial_cover(&build_reduction_tree(&f, &self.params)?)?)?;
        if cov.labels != self.labels() || cov.measures != (0..=self.n).map(|i| self.measure(i)).collect::<Vec<_>>() {
            return Err(Error::PropertyFailure("Tate cover does not consist of the expected spheres".into()));
        }
        Ok(cov)
    }

    /// Schottky data for `<z -> p^{n+1} z>` on the fundamental domain.
    pub fn schottky(&self, alpha: Alpha, cutoff: Option<usize>, depth: Option<i64>) -> Result<SchottkyData> {
        let cov = self.fundamental_cover()?;
        let spec = KernelSpec::new(cov, self.adjacency(), alpha)?;
        let q = Mobius::scaling(p_pow(self.params.p, self.n as i64 + 1))?;
        SchottkyData::new(vec![q], spec, cutoff, depth, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use crate::operator::linalg::weighted_laplacian;

    fn tate(p: u64, n: usize) -> TateCurve {
        TateCurve::new(FieldParams::qp(p).unwrap(), n).unwrap()
    }

    fn exact_rational(r: &Real) -> BigRational {
        r.exact().and_then(|s| s.as_rational()).cloned().expect("rational value")
    }

    /// Direct evaluation of the neighbour sum from the sphere measures.
    fn c_oracle(p: u64, n: usize, i: usize) -> BigRational {
        let m = n + 1;
        [(i + 1) % m, (i + m - 1) % m]
            .iter()
            .map(|&j| (p_pow(p, -(j as i64)) - p_pow(p, -(j as i64) - 1)) * p_pow(p, -(i.min(j) as i64)))
            .fold(int(0), |a, b| a + b)
    }

    #[test]
    fn table_limits() {
        let expected = [
            (2, [rat(3, 7), rat(9, 14), rat(5, 7)]),
            (3, [rat(4, 13), rat(28, 39), rat(10, 13)]),
            (5, [rat(6, 31), rat(126, 155), rat(26, 31)]),
        ];
        for (p, vals) in expected {
            let t = tate(p, 2);
            for (i, v) in vals.iter().enumerate() {
                let c = t.c_alpha(&Alpha::integer(1), i).unwrap();
                assert_eq!(exact_rational(&c), c_oracle(p, 2, i));
                let lim = &c * &t.limit_factor();
                assert_eq!(&exact_rational(&lim), v, "p={p} i={i}");
            }
        }
    }

    #[test]
    fn s_q_values() {
        let t = tate(2, 2);
        assert_eq!(exact_rational(&t.s_q(&Alpha::integer(2)).unwrap()), rat(9, 7));
        assert!(t.s_q(&Alpha::integer(1)).is_err());
        let big = t.s_q(&Alpha::integer(64)).unwrap().to_f64();
        assert!((big - 8.0 / 7.0).abs() < 1e-15);
        let half = t.s_q(&Alpha::Exact(rat(5, 2))).unwrap();
        let direct = 8.0 / 7.0 + 2f64.powf(-4.5) / (1.0 - 2f64.powf(-4.5));
        assert!(half.exact().is_some());
        assert!((half.to_f64() - direct).abs() < 1e-14);
    }

    #[test]
    fn laplacian_closed_form_matches_solver() {
        for p in [2u64, 3, 5, 7] {
            let t = tate(p, 2);
            let a = Alpha::integer(1);
            let exact: Vec<f64> = t.laplacian_closed_form(&a).unwrap().iter().map(Real::to_f64).collect();
            let num = t.laplacian_eigenvalues(&a).unwrap();
            for (x, y) in exact.iter().zip(&num) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!((exact[1] + (p as f64 + 2.0) / p as f64).abs() < 1e-15);
            let b = t.spec(a).unwrap().b_alpha().to_dmatrix();
            let l = weighted_laplacian(&b, &[1.0; 3]);
            assert!((l.trace() - exact.iter().sum::<f64>()).abs() < 1e-12);
        }
    }

    #[test]
    fn fundamental_cover_is_spheres() {
        for p in [2u64, 3] {
            let t = tate(p, 2);
            let cov = t.fundamental_cover().unwrap();
            assert_eq!(cov.dist_exp, t.abstract_cover().unwrap().dist_exp);
        }
        assert!(TateCurve::new(FieldParams::new(2, 2, 1).unwrap(), 2).unwrap().fundamental_cover().is_err());
        assert!(TateCurve::new(FieldParams::qp(2).unwrap(), 1).is_err());
    }

    #[test]
    fn ramified_closed_form() {
        let t = TateCurve::new(FieldParams::new(2, 2, 1).unwrap(), 2).unwrap();
        let c = t.c_alpha(&Alpha::integer(1), 0).unwrap();
        assert!((c.to_f64() - (0.25 + 0.125)).abs() < 1e-15);
        let c1 = t.c_alpha(&Alpha::integer(1), 1).unwrap();
        assert!((c1.to_f64() - (0.5 + 0.125 * 2f64.powf(-0.5))).abs() < 1e-15);
        assert!((t.limit_factor().to_f64() - 1.0 / (1.0 - 2f64.powf(-1.5))).abs() < 1e-14);
    }
}
