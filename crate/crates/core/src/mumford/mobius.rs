//! Moebius transformations over `Q_p` with rational entries.

use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::affinoid::{Ball, HoledDisc};
use crate::error::{invalid, Error, Result};
use crate::exact::{format_rational, p_pow, rational_matrix};
use crate::localfield::rational_valuation;

/// `z -> (a z + b) / (c z + d)`, stored with its first nonzero entry scaled
/// to 1 so that equal transformations have equal representatives.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawMobius", into = "RawMobius")]
pub struct Mobius {
    m: [BigRational; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct RawMobius(#[serde(with = "rational_matrix")] Vec<Vec<BigRational>>);

impl TryFrom<RawMobius> for Mobius {
    type Error = Error;
    fn try_from(r: RawMobius) -> Result<Self> {
        match r.0.as_slice() {
            [r0, r1] if r0.len() == 2 && r1.len() == 2 => {
                Mobius::new(r0[0].clone(), r0[1].clone(), r1[0].clone(), r1[1].clone())
            }
            _ => invalid("a Moebius transformation is a 2x2 matrix"),
        }
    }
}

impl From<Mobius> for RawMobius {
    fn from(g: Mobius) -> Self {
        let [a, b, c, d] = g.m;
        RawMobius(vec![vec![a, b], vec![c, d]])
    }
}

impl fmt::Display for Mobius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.m.iter().map(format_rational).collect();
        write!(f, "[[{}, {}], [{}, {}]]", s[0], s[1], s[2], s[3])
    }
}

/// `|gamma'|` on the cells of a set, as exponents `k` with `|gamma'| = p^{-k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeMap {
    /// Smallest exponent, i.e. the largest value of `|gamma'|`.
    pub max_exp: i64,
    /// True when `|gamma'|` is constant on the whole set.
    pub constant: bool,
    pub cells: Vec<(Ball, i64)>,
}

impl DerivativeMap {
    /// `int_S |gamma'|`.
    pub fn integral(&self, p: u64) -> BigRational {
        self.cells
            .iter()
            .fold(BigRational::zero(), |acc, (b, k)| acc + b.measure(p) * p_pow(p, -k))
    }
}

impl Mobius {
    pub fn new(a: BigRational, b: BigRational, c: BigRational, d: BigRational) -> Result<Self> {
        if (&a * &d - &b * &c).is_zero() {
            return invalid("Moebius matrix has zero determinant");
        }
        Ok(Mobius { m: [a, b, c, d] }.normalised())
    }

    pub fn identity() -> Self {
        Mobius {
            m: [BigRational::one(), BigRational::zero(), BigRational::zero(), BigRational::one()],
        }
    }

    /// `z -> q z`.
    pub fn scaling(q: BigRational) -> Result<Self> {
        Mobius::new(q, BigRational::zero(), BigRational::zero(), BigRational::one())
    }

    fn normalised(mut self) -> Self {
        let lead = self.m.iter().find(|x| !x.is_zero()).expect("nonzero matrix").clone();
        for x in self.m.iter_mut() {
            *x = &*x / &lead;
        }
        self
    }

    pub fn entries(&self) -> &[BigRational; 4] {
        &self.m
    }

    pub fn trace(&self) -> BigRational {
        &self.m[0] + &self.m[3]
    }

    pub fn det(&self) -> BigRational {
        &self.m[0] * &self.m[3] - &self.m[1] * &self.m[2]
    }

    /// `self o other`.
    pub fn compose(&self, other: &Mobius) -> Mobius {
        let [a, b, c, d] = &self.m;
        let [e, f, g, h] = &other.m;
        Mobius {
            m: [a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h],
        }
        .normalised()
    }

    pub fn inverse(&self) -> Mobius {
        let [a, b, c, d] = &self.m;
        Mobius {
            m: [d.clone(), -b, -c, a.clone()],
        }
        .normalised()
    }

    /// `gamma(z)`, or `None` when `z` is the pole.
    pub fn apply(&self, z: &BigRational) -> Option<BigRational> {
        let [a, b, c, d] = &self.m;
        let den = c * z + d;
        (!den.is_zero()).then(|| (a * z + b) / den)
    }

    /// `-d/c`, absent for affine maps.
    pub fn pole(&self) -> Option<BigRational> {
        let [_, _, c, d] = &self.m;
        (!c.is_zero()).then(|| -d / c)
    }

    /// `|tr|^2 > |det|`, which does not depend on the scalar representative.
    pub fn is_hyperbolic(&self, p: u64) -> bool {
        let det = rational_valuation(&self.det(), p).expect("nonzero determinant");
        match rational_valuation(&self.trace(), p) {
            Some(t) => 2 * t < det,
            None => false,
        }
    }

    /// Exponent `k` with `|gamma'(z)| = |det| / |c z + d|^2 = p^{-k}`.
    pub fn derivative_exp(&self, z: &BigRational, p: u64) -> Result<i64> {
        let [_, _, c, d] = &self.m;
        let den = c * z + d;
        let vd = rational_valuation(&den, p).ok_or_else(|| Error::PoleInDomain {
            pole: format_rational(z),
        })?;
        Ok(rational_valuation(&self.det(), p).expect("nonzero determinant") - 2 * vd)
    }

    /// Whether `|c z + d|` is constant on the ball.
    fn constant_on(&self, ball: &Ball, p: u64) -> bool {
        let [_, _, c, d] = &self.m;
        if c.is_zero() {
            return true;
        }
        match rational_valuation(&(c * &ball.center + d), p) {
            Some(v) => v < rational_valuation(c, p).expect("nonzero") + ball.radius_exp,
            None => false,
        }
    }

    /// `|gamma'|` per cell of depth `depth` on `s`. When `|c z + d|` is constant on
    /// the outer ball the map has a single entry, the outer ball minus nothing,
    /// weighted by the measure of `s`.
    pub fn derivative_magnitude(&self, s: &HoledDisc, depth: i64, p: u64) -> Result<DerivativeMap> {
        if let Some(pole) = self.pole() {
            if s.contains_point(&pole, p) {
                return Err(Error::PoleInDomain {
                    pole: format_rational(&pole),
                });
            }
        }
        if self.constant_on(&s.outer, p) {
            let k = self.derivative_exp(&s.outer.center, p)?;
            let cells = s
                .maximal_balls(p)
                .into_iter()
                .map(|b| (b, k))
                .collect();
            return Ok(DerivativeMap {
                max_exp: k,
                constant: true,
                cells,
            });
        }
        let need = s.structural_depth(p);
        if depth < need {
            return Err(Error::RefineDepth {
                requested: depth,
                required: need,
            });
        }
        let cells = s
            .maximal_balls(p)
            .iter()
            .flat_map(|b| b.cells(depth, p))
            .map(|b| {
                let k = self.derivative_exp(&b.center, p)?;
                Ok((b, k))
            })
            .collect::<Result<Vec<_>>>()?;
        let max_exp = cells.iter().map(|(_, k)| *k).min().expect("nonempty set");
        let constant = cells.iter().all(|(_, k)| *k == max_exp);
        Ok(DerivativeMap {
            max_exp,
            constant,
            cells,
        })
    }

    /// `gamma(B)` for a ball on which `|gamma'|` is constant and which avoids the pole.
    pub fn image_ball(&self, ball: &Ball, p: u64) -> Result<Ball> {
        if !self.constant_on(ball, p) {
            return Err(Error::PoleInDomain {
                pole: self.pole().map(|x| format_rational(&x)).unwrap_or_default(),
            });
        }
        let k = self.derivative_exp(&ball.center, p)?;
        let c = self.apply(&ball.center).expect("centre is not the pole");
        Ok(Ball::new(c, ball.radius_exp + k, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{int, rat};
    use proptest::prelude::*;

    fn mob(a: i64, b: i64, c: i64, d: i64) -> Mobius {
        Mobius::new(int(a), int(b), int(c), int(d)).unwrap()
    }

    #[test]
    fn hyperbolicity() {
        assert!(mob(8, 0, 0, 1).is_hyperbolic(2));
        assert!(!mob(0, 1, -1, 0).is_hyperbolic(2));
        assert!(!Mobius::identity().is_hyperbolic(3));
        assert!(!mob(1, 1, 0, 1).is_hyperbolic(5));
        assert!(Mobius::new(int(1), int(0), int(0), rat(1, 9)).unwrap().is_hyperbolic(3));
    }

    #[test]
    fn derivatives_on_sets() {
        let zp = HoledDisc::ball(Ball::new(int(0), 0, 2));
        let q = mob(8, 0, 0, 1).derivative_magnitude(&zp, 3, 2).unwrap();
        assert!(q.constant && q.max_exp == 3);
        let t = mob(1, 1, 0, 1).derivative_magnitude(&zp, 3, 2).unwrap();
        assert!(t.constant && t.max_exp == 0);
        // 1/z on the unit sphere of Q_3
        let sphere = HoledDisc::new(Ball::new(int(0), 0, 3), vec![Ball::new(int(0), 1, 3)], 3).unwrap();
        let inv = mob(0, 1, 1, 0);
        let d = inv.derivative_magnitude(&sphere, 2, 3).unwrap();
        assert!(d.constant && d.max_exp == 0);
        assert_eq!(d.integral(3), sphere.measure(3));
        assert!(matches!(inv.derivative_magnitude(&zp, 2, 3), Err(Error::PoleInDomain { .. })));
    }

    #[test]
    fn per_cell_derivative_matches_pointwise() {
        // pole at 1/2 + ... outside Z_2 + 4: take z -> 1/(z - 1/2) on Z_2
        let g = Mobius::new(int(0), int(1), int(1), rat(-1, 2)).unwrap();
        let zp = HoledDisc::ball(Ball::new(int(0), 0, 2));
        let d = g.derivative_magnitude(&zp, 3, 2).unwrap();
        for (b, k) in &d.cells {
            let z = &b.center + p_pow(2, 5);
            assert_eq!(g.derivative_exp(&z, 2).unwrap(), *k);
        }
    }

    #[test]
    fn images_of_balls() {
        let g = mob(8, 0, 0, 1);
        let b = g.image_ball(&Ball::new(int(1), 1, 2), 2).unwrap();
        assert_eq!(b, Ball::new(int(8), 4, 2));
    }

    #[test]
    fn json_round_trip() {
        let g = Mobius::new(rat(2, 3), int(1), int(0), int(5)).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: Mobius = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        assert!(serde_json::from_str::<Mobius>(r#"[["1","2"],["2","4"]]"#).is_err());
    }

    proptest! {
        #[test]
        fn hyperbolicity_is_scale_invariant(a in -50i64..50, b in -50i64..50, c in -50i64..50, d in -50i64..50, s in 1i64..40) {
            prop_assume!(a * d - b * c != 0);
            let g = mob(a, b, c, d);
            let h = Mobius::new(int(a * s), int(b * s), int(c * s), int(d * s)).unwrap();
            prop_assert_eq!(&g, &h);
            for p in [2u64, 3, 5] {
                prop_assert_eq!(g.is_hyperbolic(p), h.is_hyperbolic(p));
            }
        }

        #[test]
        fn compose_with_inverse_is_identity(a in -20i64..20, b in -20i64..20, c in -20i64..20, d in -20i64..20) {
            prop_assume!(a * d - b * c != 0);
            let g = mob(a, b, c, d);
            prop_assert_eq!(g.compose(&g.inverse()), Mobius::identity());
        }
    }
}
