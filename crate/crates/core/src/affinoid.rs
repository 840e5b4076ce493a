//! Holed discs in `Q_p`, their reduction trees and verticial coverings, and
//! the abstract (measure, distance) data that the operators consume.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::ops::Range;

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exact::{format_rational, int, p_pow, rational_str, rational_vec};
use crate::localfield::{canonical_center, int_valuation, rational_valuation, FieldParams};

/// The closed ball `{x : |x - center| <= p^{-radius_exp}}` in `Q_p`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ball {
    #[serde(with = "rational_str")]
    pub center: BigRational,
    pub radius_exp: i64,
}

impl Ord for Ball {
    fn cmp(&self, other: &Self) -> Ordering {
        self.radius_exp
            .cmp(&other.radius_exp)
            .then_with(|| self.center.cmp(&other.center))
    }
}

impl PartialOrd for Ball {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::fmt::Display for Ball {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "B({}, {})", format_rational(&self.center), self.radius_exp)
    }
}

impl Ball {
    pub fn new(center: BigRational, radius_exp: i64, p: u64) -> Self {
        Ball {
            center: canonical_center(&center, p, radius_exp),
            radius_exp,
        }
    }

    pub fn canonical(&self, p: u64) -> Self {
        Ball::new(self.center.clone(), self.radius_exp, p)
    }

    pub fn contains_point(&self, x: &BigRational, p: u64) -> bool {
        rational_valuation(&(x - &self.center), p).is_none_or(|v| v >= self.radius_exp)
    }

    pub fn contains_ball(&self, other: &Ball, p: u64) -> bool {
        other.radius_exp >= self.radius_exp && self.contains_point(&other.center, p)
    }

    pub fn disjoint(&self, other: &Ball, p: u64) -> bool {
        !self.contains_ball(other, p) && !other.contains_ball(self, p)
    }

    pub fn measure(&self, p: u64) -> BigRational {
        p_pow(p, -self.radius_exp)
    }

    /// The `p` maximal proper sub-balls, ordered by centre digit.
    pub fn children(&self, p: u64) -> Vec<Ball> {
        let step = p_pow(p, self.radius_exp);
        (0..p as i64)
            .map(|j| Ball::new(&self.center + &step * int(j), self.radius_exp + 1, p))
            .collect()
    }

    /// All sub-balls of radius exponent `depth`, ordered by residue digits.
    pub fn cells(&self, depth: i64, p: u64) -> Vec<Ball> {
        let mut out = vec![self.clone()];
        for _ in self.radius_exp..depth {
            out = out.iter().flat_map(|b| b.children(p)).collect();
        }
        out
    }

    /// Exponent of `|x - y|` for `x` in `self`, `y` in `other`, when the balls are disjoint.
    pub fn distance_exp(&self, other: &Ball, p: u64) -> Option<i64> {
        if self.disjoint(other, p) {
            rational_valuation(&(&self.center - &other.center), p)
        } else {
            None
        }
    }
}

/// A closed ball with finitely many disjoint closed sub-balls removed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoledDisc {
    pub outer: Ball,
    #[serde(default)]
    pub holes: Vec<Ball>,
}

impl HoledDisc {
    pub fn new(outer: Ball, holes: Vec<Ball>, p: u64) -> Result<Self> {
        let outer = outer.canonical(p);
        let mut holes: Vec<Ball> = holes.iter().map(|h| h.canonical(p)).collect();
        holes.sort();
        for h in &holes {
            if h.radius_exp <= outer.radius_exp || !outer.contains_point(&h.center, p) {
                return invalid(format!("hole {h} is not strictly inside {outer}"));
            }
        }
        for (i, a) in holes.iter().enumerate() {
            for b in &holes[i + 1..] {
                if !a.disjoint(b, p) {
                    return invalid(format!("holes {a} and {b} overlap"));
                }
            }
        }
        let disc = HoledDisc { outer, holes };
        if disc.measure(p).is_zero() {
            return invalid("holed disc has measure zero");
        }
        Ok(disc)
    }

    pub fn ball(b: Ball) -> Self {
        HoledDisc {
            outer: b,
            holes: Vec::new(),
        }
    }

    /// Re-validates a deserialized value against the prime `p`.
    pub fn validated(&self, p: u64) -> Result<Self> {
        HoledDisc::new(self.outer.clone(), self.holes.clone(), p)
    }

    pub fn contains_point(&self, x: &BigRational, p: u64) -> bool {
        self.outer.contains_point(x, p) && !self.holes.iter().any(|h| h.contains_point(x, p))
    }

    pub fn measure(&self, p: u64) -> BigRational {
        self.holes
            .iter()
            .fold(self.outer.measure(p), |acc, h| acc - h.measure(p))
    }

    /// Decomposition into maximal balls, sorted.
    pub fn maximal_balls(&self, p: u64) -> Vec<Ball> {
        let mut out = Vec::new();
        let mut stack = vec![self.outer.clone()];
        while let Some(b) = stack.pop() {
            if self.holes.iter().any(|h| h.contains_ball(&b, p)) {
                continue;
            }
            if self.holes.iter().all(|h| b.disjoint(h, p)) {
                out.push(b);
            } else {
                stack.extend(b.children(p));
            }
        }
        out.sort();
        out
    }

    /// Finest radius exponent needed to write the disc as a union of balls.
    pub fn structural_depth(&self, p: u64) -> i64 {
        self.maximal_balls(p)
            .iter()
            .map(|b| b.radius_exp)
            .max()
            .unwrap_or(self.outer.radius_exp)
    }

    /// All holes sit one level below the outer ball, so the disc is a union of
    /// maximal sub-balls of equal radius.
    pub fn is_verticial(&self) -> bool {
        self.holes
            .iter()
            .all(|h| h.radius_exp == self.outer.radius_exp + 1)
    }

    pub fn disjoint_from_ball(&self, b: &Ball, p: u64) -> bool {
        self.maximal_balls(p).iter().all(|m| m.disjoint(b, p))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeVertex {
    pub id: usize,
    pub ball: Ball,
    pub parent: Option<usize>,
    /// The holed disc `U_v`: the vertex ball minus the maximal sub-discs
    /// leading to children and holes.
    pub region: HoledDisc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub parent: usize,
    pub child: usize,
    pub length: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionTree {
    pub params: FieldParams,
    pub disc: HoledDisc,
    pub vertices: Vec<TreeVertex>,
    pub edges: Vec<TreeEdge>,
}

/// Builds the subtree of the Bruhat-Tits tree spanned by the boundary points
/// of `disc` and infinity.
pub fn build_reduction_tree(disc: &HoledDisc, params: &FieldParams) -> Result<ReductionTree> {
    params.require_qp("reduction trees")?;
    let p = params.p;
    let disc = disc.validated(p)?;
    let k0 = disc.outer.radius_exp;

    let mut points = vec![disc.outer.center.clone(), &disc.outer.center + p_pow(p, k0)];
    for h in &disc.holes {
        let step = p_pow(p, h.radius_exp - 1);
        let b = (1..p as i64)
            .map(|u| &h.center + &step * int(u))
            .find(|b| !disc.holes.iter().any(|o| o.contains_point(b, p)))
            .unwrap_or_else(|| &h.center + &step);
        points.push(h.center.clone());
        points.push(b);
    }
    points.sort();
    points.dedup();

    let mut balls = BTreeSet::new();
    for (i, x) in points.iter().enumerate() {
        for y in &points[i + 1..] {
            let v = rational_valuation(&(x - y), p).expect("distinct points");
            balls.insert(Ball::new(x.clone(), v, p));
        }
    }
    let balls: Vec<Ball> = balls
        .into_iter()
        .filter(|b| !disc.holes.iter().any(|h| h.contains_ball(b, p)))
        .collect();

    let parents: Vec<Option<usize>> = balls
        .iter()
        .map(|b| {
            balls
                .iter()
                .enumerate()
                .filter(|(_, c)| c.radius_exp < b.radius_exp && c.contains_ball(b, p))
                .max_by_key(|(_, c)| c.radius_exp)
                .map(|(i, _)| i)
        })
        .collect();

    let mut vertices = Vec::with_capacity(balls.len());
    let mut edges = Vec::new();
    for (id, ball) in balls.iter().enumerate() {
        let k = ball.radius_exp;
        let mut removed: BTreeSet<Ball> = disc
            .holes
            .iter()
            .filter(|h| h.radius_exp == k + 1 && ball.contains_ball(h, p))
            .cloned()
            .collect();
        for (child, parent) in parents.iter().enumerate() {
            if *parent == Some(id) {
                removed.insert(Ball::new(balls[child].center.clone(), k + 1, p));
                edges.push(TreeEdge {
                    parent: id,
                    child,
                    length: balls[child].radius_exp - k,
                });
            }
        }
        vertices.push(TreeVertex {
            id,
            ball: ball.clone(),
            parent: parents[id],
            region: HoledDisc {
                outer: ball.clone(),
                holes: removed.into_iter().collect(),
            },
        });
    }
    Ok(ReductionTree {
        params: *params,
        disc,
        vertices,
        edges,
    })
}

/// A disjoint covering by holed discs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricCovering {
    pub params: FieldParams,
    pub labels: Vec<String>,
    pub members: Vec<HoledDisc>,
}

impl GeometricCovering {
    pub fn new(params: FieldParams, labels: Vec<String>, members: Vec<HoledDisc>) -> Result<Self> {
        params.require_qp("geometric coverings")?;
        let p = params.p;
        if labels.len() != members.len() {
            return invalid("labels and members differ in length");
        }
        if members.is_empty() {
            return invalid("empty covering");
        }
        check_unique(&labels)?;
        let members = members
            .iter()
            .map(|m| m.validated(p))
            .collect::<Result<Vec<_>>>()?;
        let pieces: Vec<Vec<Ball>> = members.iter().map(|m| m.maximal_balls(p)).collect();
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                for a in &pieces[i] {
                    for b in &pieces[j] {
                        if !a.disjoint(b, p) {
                            return invalid(format!(
                                "members {} and {} overlap",
                                labels[i], labels[j]
                            ));
                        }
                    }
                }
            }
        }
        Ok(GeometricCovering {
            params,
            labels,
            members,
        })
    }

    pub fn p(&self) -> u64 {
        self.params.p
    }

    pub fn is_verticial(&self) -> bool {
        self.members.iter().all(HoledDisc::is_verticial)
    }

    pub fn structural_depth(&self) -> i64 {
        self.members
            .iter()
            .map(|m| m.structural_depth(self.p()))
            .max()
            .unwrap_or(0)
    }

    pub fn member_of(&self, x: &BigRational) -> Option<usize> {
        self.members
            .iter()
            .position(|m| m.contains_point(x, self.p()))
    }
}

fn check_unique(labels: &[String]) -> Result<()> {
    let set: BTreeSet<&String> = labels.iter().collect();
    if set.len() != labels.len() {
        return invalid("duplicate member labels");
    }
    Ok(())
}

/// One holed disc per vertex of the tree, with long edges subdivided so that
/// each intermediate sphere becomes its own member. Members without points are
/// dropped. Labels are `U_0, U_1, ...` in order of (radius, centre).
pub fn verticial_cover(tree: &ReductionTree) -> Result<GeometricCovering> {
    let p = tree.params.p;
    let mut regions: Vec<HoledDisc> = Vec::new();
    for v in &tree.vertices {
        regions.push(v.region.clone());
    }
    for e in &tree.edges {
        let top = tree.vertices[e.parent].ball.radius_exp;
        let child = &tree.vertices[e.child].ball;
        for j in top + 1..child.radius_exp {
            regions.push(HoledDisc {
                outer: Ball::new(child.center.clone(), j, p),
                holes: vec![Ball::new(child.center.clone(), j + 1, p)],
            });
        }
    }
    regions.retain(|r| r.measure(p).is_positive());
    regions.sort_by(|a, b| a.outer.cmp(&b.outer));
    let labels = (0..regions.len()).map(|i| format!("U_{i}")).collect();
    GeometricCovering::new(tree.params, labels, regions)
}

/// Operator-facing covering data: labels, exact measures and the exponents
/// `k` of the pairwise distances `d(U, V) = p^{-k/e}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCovering")]
pub struct AbstractCovering {
    pub field: FieldParams,
    pub labels: Vec<String>,
    #[serde(with = "rational_vec")]
    pub measures: Vec<BigRational>,
    pub dist_exp: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<HoledDisc>>,
}

#[derive(Deserialize)]
struct RawCovering {
    field: FieldParams,
    labels: Vec<String>,
    #[serde(with = "rational_vec")]
    measures: Vec<BigRational>,
    dist_exp: Vec<Vec<i64>>,
    #[serde(default)]
    members: Option<Vec<HoledDisc>>,
}

impl TryFrom<RawCovering> for AbstractCovering {
    type Error = Error;
    fn try_from(r: RawCovering) -> Result<Self> {
        let mut cov = AbstractCovering::new(r.field, r.labels, r.measures, r.dist_exp)?;
        if let Some(members) = r.members {
            let geo = GeometricCovering::new(cov.field, cov.labels.clone(), members)?;
            let compiled = compile(&geo)?;
            if compiled.measures != cov.measures || compiled.dist_exp != cov.dist_exp {
                return invalid("member geometry disagrees with measures or distances");
            }
            cov.members = Some(geo.members);
        }
        Ok(cov)
    }
}

impl AbstractCovering {
    pub fn new(
        field: FieldParams,
        labels: Vec<String>,
        measures: Vec<BigRational>,
        mut dist_exp: Vec<Vec<i64>>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return invalid("empty covering");
        }
        check_unique(&labels)?;
        if measures.len() != n || dist_exp.len() != n || dist_exp.iter().any(|r| r.len() != n) {
            return invalid("covering arrays have inconsistent sizes");
        }
        if let Some(i) = measures.iter().position(|m| !m.is_positive()) {
            return invalid(format!("measure of {} is not positive", labels[i]));
        }
        for (i, row) in dist_exp.iter_mut().enumerate() {
            row[i] = 0;
        }
        let (p, f) = (field.p, field.f as i64);
        for u in 0..n {
            for v in u + 1..n {
                let k = dist_exp[u][v];
                if dist_exp[v][u] != k {
                    return invalid(format!("distance {}-{} is not symmetric", labels[u], labels[v]));
                }
                let (mu, mv) = (&measures[u], &measures[v]);
                if mu + mv > p_pow(p, -k * f) || mu.min(mv) > &p_pow(p, -(k + 1) * f) {
                    return invalid(format!(
                        "measures of {} and {} do not fit at distance exponent {k}",
                        labels[u], labels[v]
                    ));
                }
                for w in 0..n {
                    if w == u || w == v {
                        continue;
                    }
                    if k < dist_exp[u][w].min(dist_exp[w][v]) {
                        return invalid(format!(
                            "distances violate the ultrametric inequality at {}, {}, {}",
                            labels[u], labels[w], labels[v]
                        ));
                    }
                }
            }
        }
        Ok(AbstractCovering {
            field,
            labels,
            measures,
            dist_exp,
            members: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn p(&self) -> u64 {
        self.field.p
    }

    pub fn total_measure(&self) -> BigRational {
        self.measures.iter().fold(BigRational::zero(), |a, b| a + b)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::InvalidInput(format!("unknown member {label:?}")))
    }

    pub fn geometry(&self) -> Option<GeometricCovering> {
        self.members.as_ref().map(|m| GeometricCovering {
            params: self.field,
            labels: self.labels.clone(),
            members: m.clone(),
        })
    }

    /// Smallest depth at which every member is a whole number of cells.
    pub fn required_depth(&self) -> Result<i64> {
        let p = self.p();
        let f = self.field.f as i64;
        let mut need = i64::MIN;
        for (label, m) in self.labels.iter().zip(&self.measures) {
            let d = m.denom();
            let v = int_valuation(d, p);
            let rest = d / num_bigint::BigInt::from(p).pow(v as u32);
            if !rest.is_one() {
                return invalid(format!("measure of {label} is not a p-adic cell count"));
            }
            let num_v = int_valuation(m.numer(), p);
            // m = p^{num_v - v} * unit; need p^{mf} * m integral
            let needed = -(num_v - v);
            need = need.max(needed.div_euclid(f) + i64::from(needed.rem_euclid(f) != 0));
        }
        if let Some(geo) = self.geometry() {
            need = need.max(geo.structural_depth());
        }
        Ok(need)
    }
}

/// Compiles a geometric covering to its measures and pairwise distance exponents.
pub fn compile(cov: &GeometricCovering) -> Result<AbstractCovering> {
    let p = cov.p();
    let pieces: Vec<Vec<Ball>> = cov.members.iter().map(|m| m.maximal_balls(p)).collect();
    let n = cov.members.len();
    let mut dist = vec![vec![0i64; n]; n];
    for u in 0..n {
        for v in u + 1..n {
            let mut seen: Option<i64> = None;
            for a in &pieces[u] {
                for b in &pieces[v] {
                    let k = a.distance_exp(b, p).ok_or_else(|| {
                        Error::InvalidInput(format!("{} and {} overlap", cov.labels[u], cov.labels[v]))
                    })?;
                    match seen {
                        None => seen = Some(k),
                        Some(s) if s != k => {
                            return Err(Error::NotVerticial(format!(
                                "|x - y| between {} and {} takes values p^-{s} and p^-{k}",
                                cov.labels[u], cov.labels[v]
                            )))
                        }
                        _ => {}
                    }
                }
            }
            let k = seen.expect("members are nonempty");
            dist[u][v] = k;
            dist[v][u] = k;
        }
    }
    let measures = cov.members.iter().map(|m| m.measure(p)).collect();
    let mut out = AbstractCovering::new(cov.params, cov.labels.clone(), measures, dist)?;
    out.members = Some(cov.members.clone());
    Ok(out)
}

/// Uniform cells of radius exponent `depth`, grouped by member.
#[derive(Clone, Debug, PartialEq)]
pub struct CellLayout {
    pub depth: i64,
    pub cell_measure: BigRational,
    /// Member index of every cell.
    pub member: Vec<usize>,
    /// Cell index range of every member.
    pub ranges: Vec<Range<usize>>,
    /// Cell balls, when the covering carries geometry.
    pub cells: Option<Vec<Ball>>,
}

impl CellLayout {
    pub fn len(&self) -> usize {
        self.member.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member.is_empty()
    }

    pub fn count(&self, u: usize) -> usize {
        self.ranges[u].len()
    }
}

/// Partitions every member into cells of measure `p^{-depth f}`.
pub fn discretize(cov: &AbstractCovering, depth: i64) -> Result<CellLayout> {
    let required = cov.required_depth()?;
    if depth < required {
        return Err(Error::RefineDepth {
            requested: depth,
            required,
        });
    }
    let p = cov.p();
    let cell_measure = p_pow(p, -depth * cov.field.f as i64);
    let mut member = Vec::new();
    let mut ranges = Vec::new();
    let mut cells = cov.members.as_ref().map(|_| Vec::new());
    for (u, mu) in cov.measures.iter().enumerate() {
        let start = member.len();
        match (&cov.members, cells.as_mut()) {
            (Some(members), Some(cells)) => {
                let mut own: Vec<Ball> = members[u]
                    .maximal_balls(p)
                    .iter()
                    .flat_map(|b| b.cells(depth, p))
                    .collect();
                own.sort_by(|a, b| a.center.cmp(&b.center));
                member.extend(std::iter::repeat_n(u, own.len()));
                cells.extend(own);
            }
            _ => {
                let count = (mu / &cell_measure).to_integer();
                let count = count
                    .to_usize()
                    .ok_or_else(|| Error::InvalidInput("cell count too large".into()))?;
                member.extend(std::iter::repeat_n(u, count));
            }
        }
        ranges.push(start..member.len());
    }
    Ok(CellLayout {
        depth,
        cell_measure,
        member,
        ranges,
        cells,
    })
}

/// A function constant on the cells of a layout.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstant<T> {
    pub depth: i64,
    pub values: Vec<T>,
}

impl<T> PiecewiseConstant<T> {
    pub fn new(depth: i64, values: Vec<T>) -> Self {
        PiecewiseConstant { depth, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use proptest::prelude::*;

    fn ball(c: i64, k: i64, p: u64) -> Ball {
        Ball::new(int(c), k, p)
    }

    fn qp(p: u64) -> FieldParams {
        FieldParams::qp(p).unwrap()
    }

    #[test]
    fn annulus_tree_has_two_vertices() {
        for p in [2u64, 3, 5] {
            let x = HoledDisc::new(ball(0, 0, p), vec![ball(0, 2, p)], p).unwrap();
            let tree = build_reduction_tree(&x, &qp(p)).unwrap();
            assert_eq!(tree.vertices.len(), 2);
            assert_eq!(tree.edges, vec![TreeEdge { parent: 0, child: 1, length: 1 }]);
            let cov = verticial_cover(&tree).unwrap();
            assert_eq!(cov.members.len(), 2);
            // {|x| = 1} and {|x| = p^-1}
            assert_eq!(cov.members[0], HoledDisc::new(ball(0, 0, p), vec![ball(0, 1, p)], p).unwrap());
            assert_eq!(cov.members[1], HoledDisc::new(ball(0, 1, p), vec![ball(0, 2, p)], p).unwrap());
        }
    }

    #[test]
    fn ball_gives_single_vertex() {
        let x = HoledDisc::ball(ball(1, 2, 3));
        let tree = build_reduction_tree(&x, &qp(3)).unwrap();
        assert_eq!(tree.vertices.len(), 1);
        let cov = verticial_cover(&tree).unwrap();
        assert_eq!(cov.members, vec![x]);
    }

    /// Builds the tree by brute force: the vertex set is every ball
    /// `B(x, v(x - y))` for boundary points `x != y`.
    fn pairwise_vertices(points: &[i64], p: u64) -> BTreeSet<Ball> {
        let mut out = BTreeSet::new();
        for &x in points {
            for &y in points {
                if x != y {
                    let v = int_valuation(&(x - y).into(), p);
                    out.insert(ball(x, v, p));
                }
            }
        }
        out
    }

    #[test]
    fn two_holes_in_z2() {
        let x = HoledDisc::new(ball(0, 0, 2), vec![ball(0, 2, 2), ball(1, 2, 2)], 2).unwrap();
        let tree = build_reduction_tree(&x, &qp(2)).unwrap();
        let got: BTreeSet<Ball> = tree.vertices.iter().map(|v| v.ball.clone()).collect();
        assert_eq!(got, pairwise_vertices(&[0, 1, 0, 2, 1, 3], 2));
        assert_eq!(tree.vertices.len(), 3);
        // the root sphere is fully covered by the two child discs
        let cov = verticial_cover(&tree).unwrap();
        assert_eq!(cov.members.len(), 2);
        let total = cov.members.iter().fold(BigRational::zero(), |a, m| a + m.measure(2));
        assert_eq!(total, x.measure(2));
    }

    #[test]
    fn three_holes_in_z3_keep_every_vertex() {
        let x = HoledDisc::new(ball(0, 0, 3), vec![ball(0, 2, 3), ball(1, 2, 3)], 3).unwrap();
        let tree = build_reduction_tree(&x, &qp(3)).unwrap();
        assert_eq!(tree.vertices.len(), 3);
        let cov = verticial_cover(&tree).unwrap();
        assert_eq!(cov.members.len(), 3);
        let total = cov.members.iter().fold(BigRational::zero(), |a, m| a + m.measure(3));
        assert_eq!(total, x.measure(3));
    }

    #[test]
    fn long_edge_is_subdivided() {
        // Z_2 minus 8Z_2: spheres |x| = 1, 1/2, 1/4
        let x = HoledDisc::new(ball(0, 0, 2), vec![ball(0, 3, 2)], 2).unwrap();
        let tree = build_reduction_tree(&x, &qp(2)).unwrap();
        assert_eq!(tree.edges[0].length, 2);
        let cov = verticial_cover(&tree).unwrap();
        let abs = compile(&cov).unwrap();
        assert_eq!(abs.measures, vec![rat(1, 2), rat(1, 4), rat(1, 8)]);
        assert_eq!(abs.dist_exp, vec![vec![0, 0, 0], vec![0, 0, 1], vec![0, 1, 0]]);
    }

    #[test]
    fn rejects_overlapping_holes() {
        let r = HoledDisc::new(ball(0, 0, 2), vec![ball(0, 1, 2), ball(2, 2, 2)], 2);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
        let r = HoledDisc::new(ball(0, 1, 2), vec![ball(1, 2, 2)], 2);
        assert!(r.is_err());
    }

    #[test]
    fn compile_cosets() {
        let cov = GeometricCovering::new(
            qp(2),
            vec!["U".into(), "V".into()],
            vec![HoledDisc::ball(ball(0, 1, 2)), HoledDisc::ball(ball(1, 1, 2))],
        )
        .unwrap();
        let abs = compile(&cov).unwrap();
        assert_eq!(abs.measures, vec![rat(1, 2), rat(1, 2)]);
        assert_eq!(abs.dist_exp[0][1], 0);

        let single = GeometricCovering::new(qp(5), vec!["X".into()], vec![HoledDisc::ball(ball(0, 0, 5))]).unwrap();
        let abs = compile(&single).unwrap();
        assert_eq!(abs.dist_exp, vec![vec![0]]);
    }

    #[test]
    fn compile_detects_non_constant_distance() {
        // U = 4Z_2 u (2 + 8Z_2) sees W = 6 + 8Z_2 at distances 1/2 and 1/4
        let u = HoledDisc::new(ball(0, 1, 2), vec![ball(6, 3, 2)], 2).unwrap();
        let w = HoledDisc::ball(ball(6, 3, 2));
        let cov = GeometricCovering::new(qp(2), vec!["U".into(), "W".into()], vec![u, w]).unwrap();
        assert!(matches!(compile(&cov), Err(Error::NotVerticial(_))));
    }

    #[test]
    fn tate_spheres_compile() {
        for p in [2u64, 3, 5] {
            let f = HoledDisc::new(ball(0, 0, p), vec![ball(0, 3, p)], p).unwrap();
            let cov = verticial_cover(&build_reduction_tree(&f, &qp(p)).unwrap()).unwrap();
            let abs = compile(&cov).unwrap();
            for i in 0..3 {
                // sphere measure p^-i - p^-i-1
                assert_eq!(abs.measures[i], p_pow(p, -(i as i64)) - p_pow(p, -(i as i64) - 1));
                for j in 0..3 {
                    if i != j {
                        assert_eq!(abs.dist_exp[i][j], i.min(j) as i64);
                    }
                }
            }
        }
    }

    #[test]
    fn discretize_examples() {
        let z2 = compile(&GeometricCovering::new(qp(2), vec!["Z".into()], vec![HoledDisc::ball(ball(0, 0, 2))]).unwrap()).unwrap();
        assert_eq!(discretize(&z2, 2).unwrap().len(), 4);

        let sphere = HoledDisc::new(ball(0, 0, 3), vec![ball(0, 1, 3)], 3).unwrap();
        let cov = compile(&GeometricCovering::new(qp(3), vec!["S".into()], vec![sphere]).unwrap()).unwrap();
        let layout = discretize(&cov, 1).unwrap();
        let centers: Vec<BigRational> = layout.cells.unwrap().into_iter().map(|b| b.center).collect();
        assert_eq!(centers, vec![int(1), int(2)]);

        // Tate U_1 in Q_2: 2 cells at depth 3, found by enumerating residues mod 8
        let f = HoledDisc::new(ball(0, 0, 2), vec![ball(0, 3, 2)], 2).unwrap();
        let cov = compile(&verticial_cover(&build_reduction_tree(&f, &qp(2)).unwrap()).unwrap()).unwrap();
        let layout = discretize(&cov, 3).unwrap();
        let by_enum = (0..8).filter(|r| *r != 0 && int_valuation(&num_bigint::BigInt::from(*r), 2) == 1).count();
        assert_eq!(layout.count(1), by_enum);
        assert_eq!(layout.count(1), 2);
        assert!(matches!(discretize(&cov, 2), Err(Error::RefineDepth { requested: 2, required: 3 })));
    }

    #[test]
    fn abstract_depth_from_measures() {
        let cov = AbstractCovering::new(
            FieldParams::new(3, 2, 2).unwrap(),
            vec!["a".into(), "b".into()],
            vec![rat(1, 81), rat(8, 729)],
            vec![vec![0, 1], vec![1, 0]],
        )
        .unwrap();
        assert_eq!(cov.required_depth().unwrap(), 3);
        let layout = discretize(&cov, 3).unwrap();
        assert_eq!(layout.count(0), 9);
        assert_eq!(layout.count(1), 8);
    }

    #[test]
    fn abstract_validation() {
        let p2 = qp(2);
        let bad_ultra = AbstractCovering::new(
            p2,
            vec!["a".into(), "b".into(), "c".into()],
            vec![rat(1, 8), rat(1, 8), rat(1, 8)],
            vec![vec![0, 1, 2], vec![1, 0, 2], vec![2, 2, 0]],
        );
        assert!(bad_ultra.is_err());
        let too_big = AbstractCovering::new(
            p2,
            vec!["a".into(), "b".into()],
            vec![rat(1, 2), rat(1, 2)],
            vec![vec![0, 1], vec![1, 0]],
        );
        assert!(too_big.is_err());
        let json = r#"{"field":{"p":2},"labels":["U","V"],"measures":["1/2","1/2"],"dist_exp":[[0,0],[0,0]]}"#;
        let cov: AbstractCovering = serde_json::from_str(json).unwrap();
        let back: AbstractCovering = serde_json::from_str(&serde_json::to_string(&cov).unwrap()).unwrap();
        assert_eq!(cov, back);
    }

    fn random_disc() -> impl Strategy<Value = (u64, HoledDisc)> {
        (prop::sample::select(vec![2u64, 3]), prop::collection::vec((0i64..27, 1i64..4), 0..5)).prop_map(|(p, raw)| {
            let mut holes: Vec<Ball> = Vec::new();
            for (c, k) in raw {
                let b = ball(c, k, p);
                if holes.iter().all(|h| h.disjoint(&b, p)) {
                    holes.push(b);
                }
            }
            let outer = ball(0, 0, p);
            let disc = HoledDisc { outer: outer.clone(), holes: holes.clone() };
            if disc.measure(p).is_positive() {
                (p, HoledDisc::new(outer, holes, p).unwrap())
            } else {
                (p, HoledDisc::ball(outer))
            }
        })
    }

    proptest! {
        #[test]
        fn verticial_cover_partitions(input in random_disc()) {
            let (p, disc) = input;
            let params = qp(p);
            let cov = verticial_cover(&build_reduction_tree(&disc, &params).unwrap()).unwrap();
            prop_assert!(cov.is_verticial());
            let total = cov.members.iter().fold(BigRational::zero(), |a, m| a + m.measure(p));
            prop_assert_eq!(&total, &disc.measure(p));
            // every cell of the disc at depth 4 lies in exactly one member
            for b in disc.outer.cells(4, p) {
                let inside = disc.contains_point(&b.center, p);
                let hits = cov.members.iter().filter(|m| m.contains_point(&b.center, p)).count();
                prop_assert_eq!(hits, usize::from(inside));
            }
            let abs = compile(&cov).unwrap();
            let layout = discretize(&abs, 4).unwrap();
            let cells = layout.cells.as_ref().unwrap();
            for i in 0..cells.len() {
                for j in 0..cells.len() {
                    let (u, v) = (layout.member[i], layout.member[j]);
                    if u != v {
                        let k = rational_valuation(&(&cells[i].center - &cells[j].center), p).unwrap();
                        prop_assert_eq!(k, abs.dist_exp[u][v]);
                    }
                }
            }
            for u in 0..abs.len() {
                prop_assert_eq!(int(layout.count(u) as i64) * &layout.cell_measure, abs.measures[u].clone());
            }
        }
    }
}
