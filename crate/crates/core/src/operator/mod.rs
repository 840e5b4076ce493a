//! Kernel operators on a covering: degrees, the generator matrix, wavelet and
//! graph-Laplacian spectra, and exact operator application on cell functions.
//!
//! For a kernel equal to `A_UV |x - y|^alpha` on `U x V` (and zero on `U x U`),
//! the operator `Df(x) = int A(x, y) (f(y) - f(x)) dy` sends a function that is
//! constant on members, `f = sum_V c_V 1_V`, to `sum_U (M c)_U 1_U` with
//! `M_UV = A_UV d(U,V)^alpha mu(V)` off the diagonal and `M_UU = -deg(U)`.
//! Every mean-zero function supported in a member `U` is an eigenfunction with
//! eigenvalue `-deg(U)`. `M` is self-adjoint for the weights `mu`, so its
//! spectrum comes from the symmetric matrix `diag(mu)^{1/2} M diag(mu)^{-1/2}`.

pub mod linalg;
pub mod wavelet;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::affinoid::{discretize, AbstractCovering, CellLayout, PiecewiseConstant};
use crate::error::{invalid, Error, Result};
use crate::exact::{rational_matrix, rational_to_f64, Alpha, Real, Surd};

pub use linalg::{expm, weighted_laplacian_pairs, WeightedPair};
pub use wavelet::{eval_wavelet, wavelet_basis, Wavelet, WaveletShape};

/// Symmetric, non-negative adjacency with zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UMatrix {
    #[serde(with = "rational_matrix")]
    pub entries: Vec<Vec<BigRational>>,
}

impl UMatrix {
    pub fn new(entries: Vec<Vec<BigRational>>) -> Result<Self> {
        let n = entries.len();
        if entries.iter().any(|r| r.len() != n) {
            return invalid("adjacency matrix is not square");
        }
        for u in 0..n {
            if !entries[u][u].is_zero() {
                return invalid("adjacency matrix has a nonzero diagonal entry");
            }
            for v in 0..n {
                if entries[u][v].is_negative() {
                    return invalid("adjacency matrix has a negative entry");
                }
                if entries[u][v] != entries[v][u] {
                    return invalid("adjacency matrix is not symmetric");
                }
            }
        }
        Ok(UMatrix { entries })
    }

    pub fn zeros(n: usize) -> Self {
        UMatrix {
            entries: vec![vec![BigRational::zero(); n]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of connected components of the graph with edges where `A_UV > 0`.
    pub fn components(&self) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for v in 0..n {
                    if !seen[v] && self.entries[u][v].is_positive() {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    /// Squared norm `sum_UV A_UV^2 mu(U) mu(V)`.
    pub fn norm_sq(&self, measures: &[BigRational]) -> BigRational {
        let mut acc = BigRational::zero();
        for (u, row) in self.entries.iter().enumerate() {
            for (v, a) in row.iter().enumerate() {
                acc += a * a * &measures[u] * &measures[v];
            }
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel")]
pub struct KernelSpec {
    pub covering: AbstractCovering,
    pub adjacency: UMatrix,
    pub alpha: Alpha,
}

#[derive(Deserialize)]
struct RawKernel {
    covering: AbstractCovering,
    adjacency: UMatrix,
    alpha: Alpha,
}

impl TryFrom<RawKernel> for KernelSpec {
    type Error = Error;
    fn try_from(r: RawKernel) -> Result<Self> {
        KernelSpec::new(r.covering, r.adjacency, r.alpha)
    }
}

/// Matrix of real entries, exact where possible.
#[derive(Clone, Debug, PartialEq)]
pub struct RealMatrix {
    pub entries: Vec<Vec<Real>>,
}

impl RealMatrix {
    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let n = self.entries.len();
        DMatrix::from_fn(n, n, |u, v| self.entries[u][v].to_f64())
    }

    /// True when every row sums to exactly zero (requires exact entries).
    pub fn rows_sum_to_zero(&self) -> bool {
        self.entries
            .iter()
            .all(|row| row.iter().cloned().sum::<Real>().exact().is_some_and(Surd::is_zero))
    }
}

pub type BAlphaMatrix = RealMatrix;
pub type GeneratorMatrix = RealMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub value: f64,
    /// Coefficients `e_V = mu(V) c_V` of the eigenfunction.
    pub coefficients: Vec<f64>,
    /// Values `c_V` of the eigenfunction on each member; `sum mu_V c_V^2 = 1`.
    pub function_values: Vec<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveletEigenvalue {
    pub label: String,
    pub eigenvalue: f64,
    pub exact: Option<String>,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub labels: Vec<String>,
    pub depth: i64,
    pub laplacian: Vec<Eigenpair>,
    pub wavelet: Vec<WaveletEigenvalue>,
    pub zero_multiplicity: usize,
    pub bound_constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub wavelet_dim: usize,
    pub coboundary_dim: usize,
    pub component_dim: usize,
    pub total_cells: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsometryReport {
    pub matrix_norm_sq: BigRational,
    pub kernel_norm_sq: BigRational,
}

impl IsometryReport {
    pub fn matrix_norm(&self) -> f64 {
        rational_to_f64(&self.matrix_norm_sq).sqrt()
    }

    pub fn kernel_norm(&self) -> f64 {
        rational_to_f64(&self.kernel_norm_sq).sqrt()
    }
}

/// Scalars that cell functions may take.
pub trait FieldValue: Clone {
    fn zero() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn from_real(r: &Real) -> Result<Self>;
}

impl FieldValue for Surd {
    fn zero() -> Self {
        Surd::zero()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn from_real(r: &Real) -> Result<Self> {
        r.exact()
            .cloned()
            .ok_or(Error::UnsupportedMode("exact application with a non-rational exponent"))
    }
}

impl FieldValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn from_real(r: &Real) -> Result<Self> {
        Ok(Complex64::new(r.to_f64(), 0.0))
    }
}

impl FieldValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn from_real(r: &Real) -> Result<Self> {
        Ok(r.to_f64())
    }
}

impl KernelSpec {
    pub fn new(covering: AbstractCovering, adjacency: UMatrix, alpha: Alpha) -> Result<Self> {
        let adjacency = UMatrix::new(adjacency.entries)?;
        if adjacency.len() != covering.len() {
            return invalid(format!(
                "adjacency has {} rows for {} members",
                adjacency.len(),
                covering.len()
            ));
        }
        if !alpha.to_f64().is_finite() {
            return invalid("alpha must be finite");
        }
        Ok(KernelSpec {
            covering,
            adjacency,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.covering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covering.is_empty()
    }

    /// `d(U, V)^alpha`.
    pub fn distance_power(&self, u: usize, v: usize) -> Real {
        let f = &self.covering.field;
        self.alpha
            .power_of_magnitude(f.p, f.e, self.covering.dist_exp[u][v])
    }

    /// `B_UV = A_UV d(U, V)^alpha`, zero on the diagonal.
    pub fn weight(&self, u: usize, v: usize) -> Real {
        let a = &self.adjacency.entries[u][v];
        if u == v || a.is_zero() {
            return Real::zero();
        }
        &Real::from_rational(a.clone()) * &self.distance_power(u, v)
    }

    pub fn b_alpha(&self) -> BAlphaMatrix {
        let n = self.len();
        RealMatrix {
            entries: (0..n)
                .map(|u| (0..n).map(|v| self.weight(u, v)).collect())
                .collect(),
        }
    }

    pub fn degree(&self, u: usize) -> Real {
        (0..self.len())
            .map(|v| &self.weight(u, v) * &Real::from_rational(self.covering.measures[v].clone()))
            .sum()
    }

    pub fn degrees(&self) -> Vec<Real> {
        (0..self.len()).map(|u| self.degree(u)).collect()
    }

    pub fn generator(&self) -> GeneratorMatrix {
        let n = self.len();
        let entries = (0..n)
            .map(|u| {
                (0..n)
                    .map(|v| {
                        if u == v {
                            -&self.degree(u)
                        } else {
                            &self.weight(u, v)
                                * &Real::from_rational(self.covering.measures[v].clone())
                        }
                    })
                    .collect()
            })
            .collect();
        RealMatrix { entries }
    }

    pub fn measures_f64(&self) -> Vec<f64> {
        self.covering.measures.iter().map(rational_to_f64).collect()
    }

    /// Eigenpairs of the generator, ascending.
    pub fn laplacian_spectrum(&self) -> Result<Vec<Eigenpair>> {
        let b = self.b_alpha().to_dmatrix();
        let mu = self.measures_f64();
        Ok(weighted_laplacian_pairs(&b, &mu)?
            .into_iter()
            .map(|pair| Eigenpair {
                value: pair.value,
                coefficients: pair.vector.iter().zip(&mu).map(|(c, m)| c * m).collect(),
                function_values: pair.vector.iter().copied().collect(),
                residual: pair.residual,
            })
            .collect())
    }

    /// Eigenvalue `-deg(U)` per member with its multiplicity at the given depth.
    pub fn wavelet_eigenvalues(&self, depth: i64) -> Result<Vec<WaveletEigenvalue>> {
        let layout = discretize(&self.covering, depth)?;
        Ok((0..self.len())
            .map(|u| {
                let d = -&self.degree(u);
                WaveletEigenvalue {
                    label: self.covering.labels[u].clone(),
                    eigenvalue: d.to_f64(),
                    exact: d.exact_string(),
                    multiplicity: layout.count(u) - 1,
                }
            })
            .collect())
    }

    /// `2 (sum_U deg(U)^2 mu(U))^{1/2}`, a bound on the operator norm.
    pub fn bound_constant(&self) -> f64 {
        let s: f64 = (0..self.len())
            .map(|u| {
                let d = self.degree(u).to_f64();
                d * d * rational_to_f64(&self.covering.measures[u])
            })
            .sum();
        2.0 * s.sqrt()
    }

    pub fn spectrum_report(&self, depth: i64) -> Result<SpectrumReport> {
        let laplacian = self.laplacian_spectrum()?;
        let wavelet = self.wavelet_eigenvalues(depth)?;
        Ok(SpectrumReport {
            labels: self.covering.labels.clone(),
            depth,
            laplacian,
            wavelet,
            zero_multiplicity: self.adjacency.components(),
            bound_constant: self.bound_constant(),
        })
    }

    fn check_layout<T>(&self, layout: &CellLayout, g: &PiecewiseConstant<T>) -> Result<()> {
        if g.depth != layout.depth || g.values.len() != layout.len() {
            return Err(Error::RefineDepth {
                requested: g.depth,
                required: layout.depth,
            });
        }
        Ok(())
    }

    fn member_integrals<T: FieldValue>(&self, layout: &CellLayout, g: &PiecewiseConstant<T>) -> Result<Vec<T>> {
        let cell = T::from_real(&Real::from_rational(layout.cell_measure.clone()))?;
        Ok(layout
            .ranges
            .iter()
            .map(|r| {
                g.values[r.clone()]
                    .iter()
                    .fold(T::zero(), |acc, x| acc.add(x))
                    .mul(&cell)
            })
            .collect())
    }

    /// `(Dg)(x) = sum_V B_UV (int_V g - mu(V) g(x))` for `x` in `U`.
    pub fn apply_operator<T: FieldValue>(
        &self,
        layout: &CellLayout,
        g: &PiecewiseConstant<T>,
    ) -> Result<PiecewiseConstant<T>> {
        self.check_layout(layout, g)?;
        let integrals = self.member_integrals(layout, g)?;
        let n = self.len();
        let mut weights = vec![vec![T::zero(); n]; n];
        let mut degs = Vec::with_capacity(n);
        for u in 0..n {
            for v in 0..n {
                weights[u][v] = T::from_real(&self.weight(u, v))?;
            }
            degs.push(T::from_real(&self.degree(u))?);
        }
        let values = (0..layout.len())
            .map(|i| {
                let u = layout.member[i];
                let gathered = (0..n).fold(T::zero(), |acc, v| acc.add(&weights[u][v].mul(&integrals[v])));
                gathered.sub(&degs[u].mul(&g.values[i]))
            })
            .collect();
        Ok(PiecewiseConstant::new(layout.depth, values))
    }

    /// The integral part `sum_V B_UV int_V g` alone.
    pub fn kernel_part<T: FieldValue>(
        &self,
        layout: &CellLayout,
        g: &PiecewiseConstant<T>,
    ) -> Result<PiecewiseConstant<T>> {
        self.check_layout(layout, g)?;
        let integrals = self.member_integrals(layout, g)?;
        let n = self.len();
        let mut per_member = Vec::with_capacity(n);
        for u in 0..n {
            let mut acc = T::zero();
            for (v, int_v) in integrals.iter().enumerate() {
                acc = acc.add(&T::from_real(&self.weight(u, v))?.mul(int_v));
            }
            per_member.push(acc);
        }
        Ok(PiecewiseConstant::new(
            layout.depth,
            layout.member.iter().map(|&u| per_member[u].clone()).collect(),
        ))
    }

    /// Wavelets followed by the lifted Laplacian eigenfunctions, as cell vectors.
    pub fn assembled_basis(&self, layout: &CellLayout) -> Result<Vec<Vec<Complex64>>> {
        let mut out = Vec::new();
        for w in wavelet_basis(&self.covering, layout)? {
            out.push(w.cells(&self.covering, layout)?.to_complex(layout.len()));
        }
        for pair in self.laplacian_spectrum()? {
            out.push(
                layout
                    .member
                    .iter()
                    .map(|&u| Complex64::new(pair.function_values[u], 0.0))
                    .collect(),
            );
        }
        Ok(out)
    }
}

/// Largest deviation of the Gram matrix of `vectors` from the identity.
pub fn gram_deviation(vectors: &[Vec<Complex64>], cell_measure: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate().skip(i) {
            let g: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>() * cell_measure;
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).norm());
        }
    }
    worst
}

/// Squared norms of `A` as a matrix and of the kernel `sum A_UV 1_U(x) 1_V(y)`,
/// the latter by a double sum over cells.
pub fn dictionary_isometry_check(a: &UMatrix, cov: &AbstractCovering) -> Result<IsometryReport> {
    if a.len() != cov.len() {
        return invalid("adjacency size does not match the covering");
    }
    let layout = discretize(cov, cov.required_depth()?)?;
    let cell_sq = &layout.cell_measure * &layout.cell_measure;
    let mut kernel = BigRational::zero();
    for &u in &layout.member {
        for &v in &layout.member {
            let x = &a.entries[u][v];
            kernel += x * x * &cell_sq;
        }
    }
    Ok(IsometryReport {
        matrix_norm_sq: a.norm_sq(&cov.measures),
        kernel_norm_sq: kernel,
    })
}

pub fn l2_decomposition_report(
    a: &UMatrix,
    cov: &AbstractCovering,
    depth: i64,
) -> Result<DecompositionReport> {
    if a.len() != cov.len() {
        return invalid("adjacency size does not match the covering");
    }
    let layout = discretize(cov, depth)?;
    let b0 = a.components();
    Ok(DecompositionReport {
        wavelet_dim: (0..cov.len()).map(|u| layout.count(u) - 1).sum(),
        coboundary_dim: cov.len() - b0,
        component_dim: b0,
        total_cells: layout.len(),
    })
}
