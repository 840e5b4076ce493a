//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use padic_heat::affinoid::{
    build_reduction_tree, compile, discretize, verticial_cover, AbstractCovering, Ball, CellLayout,
    GeometricCovering, HoledDisc, PiecewiseConstant,
};
use padic_heat::cli::{run, Cli};
use padic_heat::exact::{int, p_pow, rat, Alpha, Surd};
use padic_heat::heat::{indicator, simulate, stochasticity_check, HeatGenerator, HeatProblem};
use padic_heat::localfield::{rational_valuation, FieldParams};
use padic_heat::mumford::{gap_scan, GapScanMember, TateCurve};
use padic_heat::operator::linalg::symmetrized;
use padic_heat::operator::{dictionary_isometry_check, gram_deviation, KernelSpec, UMatrix};

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn qp(p: u64) -> FieldParams {
    FieldParams::qp(p).unwrap()
}

fn tate(p: u64, n: usize) -> TateCurve {
    TateCurve::new(qp(p), n).unwrap()
}

/// `Z_2 = 2Z_2 + (1 + 2Z_2)`, the two halves coupled with unit weight.
fn exa_non_comp() -> AbstractCovering {
    let geo = GeometricCovering::new(
        qp(2),
        vec!["U".into(), "V".into()],
        vec![
            HoledDisc::ball(Ball::new(int(0), 1, 2)),
            HoledDisc::ball(Ball::new(int(1), 1, 2)),
        ],
    )
    .unwrap();
    compile(&geo).unwrap()
}

fn swap() -> UMatrix {
    UMatrix::new(vec![vec![int(0), int(1)], vec![int(1), int(0)]]).unwrap()
}

/// A verticial covering of `Z_p` minus up to five random holes, with at most
/// six members and structure no finer than depth 3.
fn random_cover(rng: &mut ChaCha8Rng) -> AbstractCovering {
    loop {
        let p: u64 = if rng.random_bool(0.5) { 2 } else { 3 };
        let mut holes: Vec<Ball> = Vec::new();
        for _ in 0..rng.random_range(1..=5) {
            let k = rng.random_range(1..=3i64);
            let c = rng.random_range(0..p.pow(k as u32)) as i64;
            let b = Ball::new(int(c), k, p);
            if holes.iter().all(|h| h.disjoint(&b, p)) {
                holes.push(b);
            }
        }
        let Ok(disc) = HoledDisc::new(Ball::new(int(0), 0, p), holes, p) else {
            continue;
        };
        let Ok(tree) = build_reduction_tree(&disc, &qp(p)) else {
            continue;
        };
        let cov = compile(&verticial_cover(&tree).unwrap()).unwrap();
        if (2..=6).contains(&cov.len()) && cov.required_depth().unwrap() <= 3 {
            return cov;
        }
    }
}

fn random_rational(rng: &mut ChaCha8Rng) -> BigRational {
    rat(rng.random_range(0..=12), rng.random_range(1..=9))
}

/// Random symmetric adjacency with at least one nonzero coupling.
fn random_adjacency(rng: &mut ChaCha8Rng, n: usize) -> UMatrix {
    loop {
        let mut a = vec![vec![int(0); n]; n];
        for u in 0..n {
            for v in u + 1..n {
                let x = random_rational(rng);
                a[u][v] = x.clone();
                a[v][u] = x;
            }
        }
        if a.iter().flatten().any(|x| !x.is_zero()) {
            return UMatrix::new(a).unwrap();
        }
    }
}

fn random_alpha(rng: &mut ChaCha8Rng) -> Alpha {
    let choices = [rat(0, 1), rat(1, 1), rat(2, 1), rat(1, 2), rat(3, 2), rat(-1, 2)];
    Alpha::Exact(choices[rng.random_range(0..choices.len())].clone())
}

fn ac1() -> Check {
    let start = Instant::now();
    let table = [
        (2u64, ["3/7", "9/14", "5/7"], "-2"),
        (3, ["4/13", "28/39", "10/13"], "-5/3"),
        (5, ["6/31", "126/155", "26/31"], "-7/5"),
    ];
    for (p, limits, lambda1) in table {
        let ps = p.to_string();
        let cli = Cli::try_parse_from(["padic-heat", "tate", "--p", &ps, "--n", "2", "--alpha", "1", "--s", "64"])
            .map_err(e2s)?;
        let out = run(&cli).map_err(e2s)?;
        for (i, want) in limits.iter().enumerate() {
            let row = &out.rows[i];
            ensure(row[0] == format!("U_{i}") && row[1] == *want, || {
                format!("p={p} U_{i}: got {} want {want}", row[1])
            })?;
        }
        let lam: Vec<(String, f64)> = out.rows[3..]
            .iter()
            .map(|r| (r[1].clone(), r[2].parse::<f64>().unwrap()))
            .collect();
        let targets = [(-3.0, "-3"), (-(p as f64 + 2.0) / p as f64, lambda1), (0.0, "0")];
        for ((exact, x), (t, te)) in lam.iter().zip(targets) {
            ensure((x - t).abs() <= 1e-10 && exact == te, || {
                format!("p={p}: eigenvalue {x} ({exact}) vs {t} ({te})")
            })?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 1.0, || format!("runtime {secs:.3}s"))?;
    Ok(format!("9 limits exact, Laplacian within 1e-10, {secs:.3}s"))
}

fn ac2() -> Check {
    let start = Instant::now();
    let t = tate(2, 2);
    let d = t.schottky(Alpha::integer(1), Some(20), None).map_err(e2s)?;
    let s = Alpha::integer(3);
    let mut worst_tail: f64 = 0.0;
    let mut worst_diff: f64 = 0.0;
    for u in 0..3 {
        let inv = d.invariant_degree(u, &s, 20).map_err(e2s)?;
        let closed = t.tate_degree(&Alpha::integer(1), &s, u).map_err(e2s)?;
        let diff = (inv.value - closed.value).abs();
        ensure(diff <= inv.tail_bound, || format!("U_{u}: |diff| {diff:e} > tail {:e}", inv.tail_bound))?;
        ensure(inv.tail_bound < 1e-6, || format!("U_{u}: tail {:e}", inv.tail_bound))?;
        worst_tail = worst_tail.max(inv.tail_bound);
        worst_diff = worst_diff.max(diff);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("runtime {secs:.3}s"))?;
    Ok(format!("max |diff| {worst_diff:.2e} <= tail, max tail {worst_tail:.2e}, {secs:.3}s"))
}

/// Degree and operator action computed cell by cell from `|x - y|` of cell centres.
struct CellOracle {
    kernel: Vec<Vec<BigRational>>,
    cell_measure: BigRational,
}

impl CellOracle {
    fn new(spec: &KernelSpec, layout: &CellLayout, alpha: i64) -> Self {
        let p = spec.covering.p();
        let cells = layout.cells.as_ref().expect("geometric layout");
        let n = cells.len();
        let mut kernel = vec![vec![int(0); n]; n];
        for i in 0..n {
            for j in 0..n {
                let (u, v) = (layout.member[i], layout.member[j]);
                let a = &spec.adjacency.entries[u][v];
                if i == j || a.is_zero() {
                    continue;
                }
                let k = rational_valuation(&(&cells[i].center - &cells[j].center), p).expect("distinct cells");
                kernel[i][j] = a * p_pow(p, -k * alpha);
            }
        }
        CellOracle {
            kernel,
            cell_measure: layout.cell_measure.clone(),
        }
    }

    fn degree(&self, i: usize) -> BigRational {
        self.kernel[i].iter().fold(int(0), |acc, k| acc + k) * &self.cell_measure
    }

    fn apply(&self, g: &[BigRational]) -> Vec<BigRational> {
        (0..g.len())
            .map(|i| {
                self.kernel[i]
                    .iter()
                    .zip(g)
                    .fold(int(0), |acc, (k, gy)| acc + k * (gy - &g[i]))
                    * &self.cell_measure
            })
            .collect()
    }
}

fn ac3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases = [("exaNonComp", exa_non_comp(), swap()), (
        "tate",
        tate(2, 2).fundamental_cover().unwrap(),
        tate(2, 2).adjacency(),
    )];
    let mut checked = 0usize;
    for (name, cov, adj) in cases {
        let layout = discretize(&cov, 6).map_err(e2s)?;
        for a in 0..=2i64 {
            let spec = KernelSpec::new(cov.clone(), adj.clone(), Alpha::integer(a)).map_err(e2s)?;
            let oracle = CellOracle::new(&spec, &layout, a);
            for i in 0..layout.len() {
                let u = layout.member[i];
                let got = spec.degree(u);
                let got = got.exact().and_then(Surd::as_rational).ok_or("degree is not rational")?;
                ensure(*got == oracle.degree(i), || format!("{name} alpha={a} cell {i}: degree differs"))?;
            }
            let g: Vec<BigRational> = (0..layout.len())
                .map(|_| rat(rng.random_range(-20..=20), rng.random_range(1..=7)))
                .collect();
            let pc = PiecewiseConstant::new(layout.depth, g.iter().cloned().map(Surd::from_rational).collect());
            let got = spec.apply_operator(&layout, &pc).map_err(e2s)?;
            let want = oracle.apply(&g);
            for (i, (x, y)) in got.values.iter().zip(&want).enumerate() {
                ensure(x.as_rational() == Some(y), || format!("{name} alpha={a} cell {i}: D g differs"))?;
            }
            checked += layout.len();
        }
    }
    Ok(format!("{checked} cells at depth 6 agree exactly"))
}

fn ac4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut sym, mut res, mut gram): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut sizes = Vec::new();
    for trial in 0..20 {
        let cov = random_cover(&mut rng);
        sizes.push(cov.len());
        let adj = random_adjacency(&mut rng, cov.len());
        let spec = KernelSpec::new(cov.clone(), adj, random_alpha(&mut rng)).map_err(e2s)?;
        ensure(spec.generator().rows_sum_to_zero(), || format!("trial {trial}: rows do not sum to 0"))?;
        let s = symmetrized(&spec.b_alpha().to_dmatrix(), &spec.measures_f64());
        sym = sym.max((&s - s.transpose()).abs().max());
        for pair in spec.laplacian_spectrum().map_err(e2s)? {
            res = res.max(pair.residual);
        }
        let layout = discretize(&cov, 3).map_err(e2s)?;
        let basis = spec.assembled_basis(&layout).map_err(e2s)?;
        ensure(basis.len() == layout.len(), || {
            format!("trial {trial}: {} basis vectors for {} cells", basis.len(), layout.len())
        })?;
        let cm = padic_heat::exact::rational_to_f64(&layout.cell_measure);
        gram = gram.max(gram_deviation(&basis, cm));
    }
    ensure(sym <= 1e-14, || format!("asymmetry {sym:e}"))?;
    ensure(res <= 1e-10, || format!("residual {res:e}"))?;
    ensure(gram <= 1e-10, || format!("Gram deviation {gram:e}"))?;
    Ok(format!(
        "20 covers of {}..={} members: asymmetry {sym:.1e}, residual {res:.1e}, Gram {gram:.1e}",
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap()
    ))
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn ac5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let times = [0.1, 1.0, 10.0];
    let (mut row_err, mut mass_err, mut semi_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for trial in 0..10 {
        let cov = random_cover(&mut rng);
        let adj = random_adjacency(&mut rng, cov.len());
        let spec = KernelSpec::new(cov.clone(), adj, random_alpha(&mut rng)).map_err(e2s)?;
        let g = HeatGenerator::from_spec(&spec).map_err(e2s)?;
        let eps = rng.random_range(0.25..4.0);
        let layout = discretize(&cov, cov.required_depth().map_err(e2s)?).map_err(e2s)?;
        let h0: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(0.0..2.0)).collect();

        for &t in &times {
            let r = stochasticity_check(&g, eps, t).map_err(e2s)?;
            ensure(r.passed, || format!("trial {trial} t={t}: not stochastic {r:?}"))?;
            row_err = row_err.max(r.max_row_error);
            for &s in &times {
                let lhs = g.transition(eps, s) * g.transition(eps, t);
                semi_err = semi_err.max(max_abs(&(lhs - g.transition(eps, s + t))));
            }
        }

        let problem = HeatProblem {
            generator: &g,
            layout: &layout,
            epsilon: eps,
            times: std::iter::once(0.0).chain(times).collect(),
            h0: h0.clone(),
        };
        let sol = problem.solve().map_err(e2s)?;
        let cm = padic_heat::exact::rational_to_f64(&layout.cell_measure);
        let direct: f64 = h0.iter().sum::<f64>() * cm;
        for i in 0..sol.times.len() {
            let cells: f64 = sol.values[i].iter().sum::<f64>() * cm;
            mass_err = mass_err
                .max((sol.total_mass(i) - direct).abs() / direct)
                .max((cells - direct).abs() / direct);
        }

        let small: Vec<f64> = (0..=10).map(|k| 10f64.powi(-k)).collect();
        let near = HeatProblem {
            times: small.iter().rev().copied().collect(),
            ..problem.clone()
        }
        .solve()
        .map_err(e2s)?;
        let dist: Vec<f64> = near
            .values
            .iter()
            .rev()
            .map(|h| (h.iter().zip(&h0).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * cm).sqrt())
            .collect();
        ensure(dist.windows(2).all(|w| w[1] < w[0]), || {
            format!("trial {trial}: ||h(10^-k) - h0|| not decreasing: {dist:?}")
        })?;
        ensure(*dist.last().unwrap() < 1e-8, || format!("trial {trial}: h(1e-10) far from h0"))?;
    }
    ensure(row_err <= 1e-12, || format!("row error {row_err:e}"))?;
    ensure(mass_err <= 1e-12, || format!("mass error {mass_err:e}"))?;
    ensure(semi_err <= 1e-10, || format!("semigroup error {semi_err:e}"))?;
    Ok(format!(
        "10 specs: row error {row_err:.1e}, mass error {mass_err:.1e}, semigroup {semi_err:.1e}, h(t) -> h0 monotone"
    ))
}

fn ac6() -> Check {
    let start = Instant::now();
    let t2 = tate(2, 2);
    let cases = [
        ("exaNonComp", KernelSpec::new(exa_non_comp(), swap(), Alpha::integer(1)).unwrap()),
        ("tate", t2.spec(Alpha::integer(1)).unwrap()),
    ];
    let mut tvs = Vec::new();
    for (name, spec) in cases {
        let g = HeatGenerator::from_spec(&spec).map_err(e2s)?;
        let layout = discretize(&spec.covering, spec.covering.required_depth().map_err(e2s)?).map_err(e2s)?;
        let h0 = indicator(&layout, 0, &spec.covering.measures[0]).map_err(e2s)?;
        let r = simulate(&g, &layout, 1.0, &h0, 1.0, 100_000, 6).map_err(e2s)?;
        ensure(r.total_variation < 0.01, || format!("{name}: TV {}", r.total_variation))?;
        tvs.push(format!("{name} TV {:.4}", r.total_variation));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("runtime {secs:.2}s"))?;
    Ok(format!("{}, {secs:.2}s", tvs.join(", ")))
}

fn ac7() -> Check {
    let fam: Vec<GapScanMember> = (2..=12).map(|n| GapScanMember::Tate(tate(2, n))).collect();
    let rows = gap_scan(&fam, &Alpha::integer(1), &Alpha::integer(10)).map_err(e2s)?;
    ensure(rows.len() == 11, || format!("{} rows", rows.len()))?;
    ensure(rows.windows(2).all(|w| w[1].spectral_gap < w[0].spectral_gap), || {
        format!("gaps not strictly decreasing: {:?}", rows.iter().map(|r| r.spectral_gap).collect::<Vec<_>>())
    })?;
    let last = rows.last().unwrap().spectral_gap;
    ensure(last < 0.05, || format!("final gap {last}"))?;
    Ok(format!("gaps {:.4} .. {last:.2e}, strictly decreasing", rows[0].spectral_gap))
}

fn ac8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..20 {
        let cov = random_cover(&mut rng);
        let a = random_adjacency(&mut rng, cov.len());
        let r = dictionary_isometry_check(&a, &cov).map_err(e2s)?;
        ensure(r.matrix_norm_sq == r.kernel_norm_sq, || {
            format!("trial {trial}: {} vs {}", r.matrix_norm_sq, r.kernel_norm_sq)
        })?;
        ensure(!r.matrix_norm_sq.is_negative(), || format!("trial {trial}: negative norm"))?;
    }
    Ok("20 random matrices, norms equal exactly".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("AC1 Tate table", ac1),
        ("AC2 closed form vs enumeration", ac2),
        ("AC3 oracle equivalence", ac3),
        ("AC4 eigenbasis properties", ac4),
        ("AC5 heat semigroup", ac5),
        ("AC6 Monte-Carlo consistency", ac6),
        ("AC7 spectral gap scan", ac7),
        ("AC8 dictionary isometry", ac8),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {name} ({secs:.2}s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name} ({secs:.2}s): {msg}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
