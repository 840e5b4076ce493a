//! Command-line front end: JSON configs in, CSV or JSON tables out.

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::affinoid::{
    build_reduction_tree, compile, discretize, verticial_cover, AbstractCovering, CellLayout, GeometricCovering,
    HoledDisc, ReductionTree,
};
use crate::error::{invalid, Error, Result};
use crate::exact::{format_rational, Alpha};
use crate::heat::{
    indicator, simulate, stochasticity_check, HeatGenerator, HeatProblem, HeatSolution, SimulationReport,
    StochasticityReport,
};
use crate::localfield::FieldParams;
use crate::mumford::{
    gap_scan, GapRow, GapScanMember, InvariantDegree, InvariantSpectrumReport, Mobius, SchottkyData, TateCurve,
    TateDegree,
};
use crate::operator::{KernelSpec, SpectrumReport, UMatrix};

#[derive(Parser, Debug)]
#[command(name = "padic-heat", version, about = "Heat operators and their spectra on p-adic clopen sets and Mumford curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Output path prefix; the extension is added from --format. Standard output when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Discretisation depth (cells of radius exponent `depth`).
    #[arg(long, global = true)]
    pub depth: Option<i64>,
    /// Maximal word length for group sums.
    #[arg(long, global = true)]
    pub cutoff: Option<usize>,
    /// Tolerance of the stochasticity check in `heat`.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Reduction tree and verticial cover of a holed disc.
    Tree,
    /// Laplacian and wavelet spectrum of a kernel on a covering.
    Spectrum,
    /// Solve the heat equation on a time grid.
    Heat,
    /// Monte Carlo simulation of the jump process against the semigroup.
    Simulate,
    /// Degree eigenvalues of a Tate curve.
    Tate(TateArgs),
    /// Spectral gaps over a family of curves.
    GapScan(GapScanArgs),
    /// Spectrum of the invariant operator on a Mumford curve.
    InvariantSpectrum(InvariantArgs),
}

#[derive(clap::Args, Debug)]
pub struct TateArgs {
    #[arg(long, default_value_t = 2)]
    pub p: u64,
    #[arg(long, default_value_t = 1)]
    pub e: u32,
    #[arg(long, default_value_t = 1)]
    pub f: u32,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value = "1")]
    pub alpha: Alpha,
    #[arg(long, default_value = "64")]
    pub s: Alpha,
}

#[derive(clap::Args, Debug)]
pub struct GapScanArgs {
    #[arg(long, default_value_t = 2)]
    pub p: u64,
    #[arg(long, default_value_t = 2)]
    pub n_min: usize,
    #[arg(long, default_value_t = 12)]
    pub n_max: usize,
    #[arg(long, default_value = "1")]
    pub alpha: Alpha,
    #[arg(long, default_value = "10")]
    pub s: Alpha,
}

#[derive(clap::Args, Debug)]
pub struct InvariantArgs {
    #[arg(long)]
    pub alpha: Option<Alpha>,
    #[arg(long)]
    pub s: Option<Alpha>,
}

/// A finished table, ready to be written as CSV or JSON.
pub struct Output {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub json: Value,
}

impl Output {
    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => Ok(serde_json::to_string_pretty(&self.json)? + "\n"),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
                w.write_record(&self.header).map_err(io)?;
                for r in &self.rows {
                    w.write_record(r).map_err(io)?;
                }
                let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
                Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
            }
        }
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

fn opt(s: &Option<String>) -> String {
    s.clone().unwrap_or_default()
}

fn read_input(cli: &Cli) -> Result<Value> {
    let path = cli
        .input
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("this command needs --input".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn field_of(v: &Value, fallback: Option<FieldParams>) -> Result<Option<FieldParams>> {
    match v.get("field") {
        Some(f) => Ok(Some(serde_json::from_value(f.clone())?)),
        None => Ok(fallback),
    }
}

fn get<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| Error::InvalidInput(format!("missing field {key:?}")))
}

fn parse_alpha(v: &Value, key: &str, default: Option<Alpha>) -> Result<Alpha> {
    match v.get(key) {
        Some(a) => Ok(serde_json::from_value(a.clone())?),
        None => default.ok_or_else(|| Error::InvalidInput(format!("missing field {key:?}"))),
    }
}

/// A covering given abstractly, by member geometry, or as the verticial cover
/// of a holed disc.
pub fn parse_covering(v: &Value, field: Option<FieldParams>) -> Result<AbstractCovering> {
    let field = field_of(v, field)?;
    if let Some(disc) = v.get("disc") {
        let field = field.ok_or_else(|| Error::InvalidInput("a disc needs a \"field\"".into()))?;
        let disc: HoledDisc = serde_json::from_value(disc.clone())?;
        let tree = build_reduction_tree(&disc.validated(field.p)?, &field)?;
        return compile(&verticial_cover(&tree)?);
    }
    if v.get("measures").is_none() {
        if let Some(members) = v.get("members") {
            let field = field.ok_or_else(|| Error::InvalidInput("members need a \"field\"".into()))?;
            let members: Vec<HoledDisc> = serde_json::from_value(members.clone())?;
            let labels = match v.get("labels") {
                Some(l) => serde_json::from_value(l.clone())?,
                None => (0..members.len()).map(|i| format!("U_{i}")).collect(),
            };
            return compile(&GeometricCovering::new(field, labels, members)?);
        }
    }
    let mut obj = v.clone();
    if obj.get("field").is_none() {
        if let (Some(f), Some(map)) = (field, obj.as_object_mut()) {
            map.insert("field".into(), serde_json::to_value(f)?);
        }
    }
    Ok(serde_json::from_value(obj)?)
}

pub fn parse_kernel(v: &Value) -> Result<KernelSpec> {
    let field = field_of(v, None)?;
    let covering = parse_covering(get(v, "covering")?, field)?;
    let adjacency: UMatrix = serde_json::from_value(get(v, "adjacency")?.clone())?;
    KernelSpec::new(covering, adjacency, parse_alpha(v, "alpha", None)?)
}

/// Schottky data from `{"generators", "fundamental_cover", "graph", "alpha", ...}`
/// or the shortcut `{"tate": {"p", "e", "f", "n"}, "alpha", ...}`.
pub fn parse_schottky(v: &Value, cli: &Cli, alpha: Option<Alpha>) -> Result<SchottkyData> {
    let cutoff = cli
        .cutoff
        .or(v.get("cutoff").and_then(Value::as_u64).map(|c| c as usize));
    let depth = cli.depth.or(v.get("depth").and_then(Value::as_i64));
    let alpha = match alpha {
        Some(a) => a,
        None => parse_alpha(v, "alpha", Some(Alpha::integer(1)))?,
    };
    if let Some(t) = v.get("tate") {
        let curve: TateCurve = serde_json::from_value(t.clone())?;
        return curve.validated()?.schottky(alpha, cutoff, depth);
    }
    let field = field_of(v, None)?;
    let generators: Vec<Mobius> = serde_json::from_value(get(v, "generators")?.clone())?;
    let covering = parse_covering(get(v, "fundamental_cover")?, field)?;
    let graph: UMatrix = serde_json::from_value(get(v, "graph")?.clone())?;
    let claimed = v.get("assumption_claimed").and_then(Value::as_bool).unwrap_or(false);
    SchottkyData::new(generators, KernelSpec::new(covering, graph, alpha)?, cutoff, depth, claimed)
}

pub fn run(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Tree => run_tree(cli),
        Command::Spectrum => run_spectrum(cli),
        Command::Heat => run_heat(cli),
        Command::Simulate => run_simulate(cli),
        Command::Tate(a) => run_tate(cli, a),
        Command::GapScan(a) => run_gap_scan(cli, a),
        Command::InvariantSpectrum(a) => run_invariant(cli, a),
    }
}

/// Runs the command and writes its output; returns the process exit code.
pub fn main_with(cli: &Cli) -> i32 {
    let result = run(cli).and_then(|out| {
        let text = out.render(cli.format)?;
        match &cli.output {
            Some(prefix) => {
                let ext = match cli.format {
                    Format::Csv => "csv",
                    Format::Json => "json",
                };
                let mut path = prefix.clone().into_os_string();
                path.push(format!(".{ext}"));
                fs::write(PathBuf::from(path), text)?;
            }
            None => print!("{text}"),
        }
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct TreeReport {
    pub tree: ReductionTree,
    pub cover: AbstractCovering,
}

fn run_tree(cli: &Cli) -> Result<Output> {
    let v = read_input(cli)?;
    let field: FieldParams = serde_json::from_value(get(&v, "field")?.clone())?;
    let disc: HoledDisc = serde_json::from_value(get(&v, "disc")?.clone())?;
    let tree = build_reduction_tree(&disc.validated(field.p)?, &field)?;
    let cover = compile(&verticial_cover(&tree)?)?;
    let rows = tree
        .vertices
        .iter()
        .map(|vx| {
            let length = tree
                .edges
                .iter()
                .find(|e| e.child == vx.id)
                .map(|e| e.length.to_string())
                .unwrap_or_default();
            vec![
                vx.id.to_string(),
                vx.parent.map(|p| p.to_string()).unwrap_or_default(),
                vx.ball.to_string(),
                length,
                format_rational(&vx.region.measure(field.p)),
            ]
        })
        .collect();
    Ok(Output {
        header: vec!["vertex", "parent", "ball", "edge_length", "region_measure"],
        rows,
        json: serde_json::to_value(TreeReport { tree, cover })?,
    })
}

fn run_spectrum(cli: &Cli) -> Result<Output> {
    let v = read_input(cli)?;
    let spec = parse_kernel(&v)?;
    let depth = match cli.depth.or(v.get("depth").and_then(Value::as_i64)) {
        Some(d) => d,
        None => spec.covering.required_depth()?,
    };
    let report = spec.spectrum_report(depth)?;
    let mut rows: Vec<Vec<String>> = report
        .laplacian
        .iter()
        .enumerate()
        .map(|(i, e)| vec!["laplacian".into(), format!("lambda_{i}"), fmt_f64(e.value), String::new(), "1".into(), fmt_f64(e.residual)])
        .collect();
    rows.extend(report.wavelet.iter().map(|w| {
        vec!["wavelet".into(), w.label.clone(), fmt_f64(w.eigenvalue), opt(&w.exact), w.multiplicity.to_string(), String::new()]
    }));
    Ok(Output {
        header: vec!["kind", "label", "eigenvalue", "exact", "multiplicity", "residual"],
        rows,
        json: serde_json::to_value::<&SpectrumReport>(&report)?,
    })
}

/// Generator, covering and layout for `heat` and `simulate`.
struct HeatSetup {
    generator: HeatGenerator,
    covering: AbstractCovering,
    layout: CellLayout,
}

fn heat_setup(v: &Value, cli: &Cli) -> Result<HeatSetup> {
    let (generator, covering, depth) = if let Some(spec) = v.get("spec") {
        let spec = parse_kernel(spec)?;
        (HeatGenerator::from_spec(&spec)?, spec.covering, None)
    } else if let Some(inv) = v.get("schottky") {
        let data = parse_schottky(inv, cli, None)?;
        let s = parse_alpha(inv, "s", None)?;
        let depth = data.depth;
        (data.invariant_generator(&s)?, data.spec.covering, Some(depth))
    } else {
        return invalid("heat input needs \"spec\" or \"schottky\"");
    };
    let depth = match cli.depth.or(v.get("depth").and_then(Value::as_i64)).or(depth) {
        Some(d) => d,
        None => covering.required_depth()?,
    };
    let layout = discretize(&covering, depth)?;
    Ok(HeatSetup {
        generator,
        covering,
        layout,
    })
}

fn initial_datum(v: &Value, setup: &HeatSetup) -> Result<Vec<f64>> {
    let h0 = get(v, "h0")?;
    match h0.get("kind").and_then(Value::as_str) {
        Some("indicator") => {
            let label = get(h0, "member")?
                .as_str()
                .ok_or_else(|| Error::InvalidInput("member must be a label".into()))?;
            let u = setup.covering.index_of(label)?;
            indicator(&setup.layout, u, &setup.covering.measures[u])
        }
        Some("cellwise") => {
            let values: Vec<f64> = serde_json::from_value(get(h0, "values")?.clone())?;
            if values.len() != setup.layout.len() {
                return invalid(format!(
                    "h0 has {} values, the layout has {} cells",
                    values.len(),
                    setup.layout.len()
                ));
            }
            Ok(values)
        }
        _ => invalid("h0.kind must be \"indicator\" or \"cellwise\""),
    }
}

fn times(v: &Value) -> Result<Vec<f64>> {
    match get(v, "t")? {
        Value::Array(_) => Ok(serde_json::from_value(v["t"].clone())?),
        t => Ok(vec![t
            .as_f64()
            .ok_or_else(|| Error::InvalidInput("t must be a number or a list".into()))?]),
    }
}

fn epsilon(v: &Value) -> Result<f64> {
    get(v, "epsilon")?
        .as_f64()
        .ok_or_else(|| Error::InvalidInput("epsilon must be a number".into()))
}

#[derive(Serialize, Deserialize)]
pub struct HeatReport {
    pub labels: Vec<String>,
    pub depth: i64,
    pub solution: HeatSolution,
    pub stochasticity: Vec<StochasticityReport>,
}

fn run_heat(cli: &Cli) -> Result<Output> {
    let v = read_input(cli)?;
    let setup = heat_setup(&v, cli)?;
    let eps = epsilon(&v)?;
    let h0 = initial_datum(&v, &setup)?;
    let ts = times(&v)?;
    let solution = HeatProblem {
        generator: &setup.generator,
        layout: &setup.layout,
        epsilon: eps,
        times: ts.clone(),
        h0,
    }
    .solve()?;
    let tol = cli.tolerance.unwrap_or(1e-12);
    let stochasticity = ts
        .iter()
        .map(|&t| stochasticity_check(&setup.generator, eps, t))
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = stochasticity
        .iter()
        .find(|r| r.max_row_error > tol || r.min_entry < -tol || r.inf_norm > 1.0 + tol)
    {
        return Err(Error::PropertyFailure(format!(
            "transition matrix at t = {} is not stochastic (row error {:e}, min entry {:e})",
            bad.t, bad.max_row_error, bad.min_entry
        )));
    }
    let mut rows = Vec::new();
    for (i, t) in ts.iter().enumerate() {
        for (u, label) in setup.generator.labels.iter().enumerate() {
            rows.push(vec![
                fmt_f64(*t),
                label.clone(),
                fmt_f64(solution.averages[i][u]),
                fmt_f64(solution.member_masses[i][u]),
                fmt_f64(solution.decay[i][u]),
            ]);
        }
    }
    let report = HeatReport {
        labels: setup.generator.labels.clone(),
        depth: setup.layout.depth,
        solution,
        stochasticity,
    };
    Ok(Output {
        header: vec!["t", "label", "average", "mass", "decay"],
        rows,
        json: serde_json::to_value(report)?,
    })
}

fn run_simulate(cli: &Cli) -> Result<Output> {
    let v = read_input(cli)?;
    let setup = heat_setup(&v, cli)?;
    let eps = epsilon(&v)?;
    let h0 = initial_datum(&v, &setup)?;
    let n_paths = v.get("n_paths").and_then(Value::as_u64).unwrap_or(100_000);
    let seed = cli.seed.or(v.get("seed").and_then(Value::as_u64)).unwrap_or(0);
    let reports = times(&v)?
        .iter()
        .map(|&t| simulate(&setup.generator, &setup.layout, eps, &h0, t, n_paths, seed))
        .collect::<Result<Vec<SimulationReport>>>()?;
    let rows = reports
        .iter()
        .flat_map(|r| {
            r.labels.iter().enumerate().map(move |(u, l)| {
                vec![fmt_f64(r.t), l.clone(), fmt_f64(r.analytic[u]), fmt_f64(r.empirical[u]), fmt_f64(r.total_variation)]
            })
        })
        .collect();
    Ok(Output {
        header: vec!["t", "label", "analytic", "empirical", "total_variation"],
        rows,
        json: serde_json::to_value(&reports)?,
    })
}

#[derive(Serialize, Deserialize)]
pub struct TateReport {
    pub curve: TateCurve,
    pub alpha: Alpha,
    pub s: Alpha,
    pub degrees: Vec<TateDegree>,
    pub laplacian: Vec<f64>,
    pub laplacian_exact: Option<Vec<String>>,
}

fn run_tate(cli: &Cli, a: &TateArgs) -> Result<Output> {
    let (curve, alpha, s) = match &cli.input {
        Some(_) => {
            let v = read_input(cli)?;
            let curve: TateCurve = serde_json::from_value(get(&v, "tate")?.clone())?;
            (curve, parse_alpha(&v, "alpha", Some(a.alpha.clone()))?, parse_alpha(&v, "s", Some(a.s.clone()))?)
        }
        None => (
            TateCurve {
                params: FieldParams::new(a.p, a.e, a.f)?,
                n: a.n,
            },
            a.alpha.clone(),
            a.s.clone(),
        ),
    };
    let curve = curve.validated()?;
    let degrees = curve.degree_table(&alpha, &s)?;
    let laplacian = curve.laplacian_eigenvalues(&alpha)?;
    let closed = curve.laplacian_closed_form(&alpha);
    let mut rows: Vec<Vec<String>> = degrees
        .iter()
        .map(|d| vec![d.label.clone(), opt(&d.limit_exact), fmt_f64(d.value)])
        .collect();
    for (i, x) in laplacian.iter().enumerate() {
        let exact = closed
            .as_ref()
            .and_then(|c| c[i].exact_string())
            .unwrap_or_default();
        rows.push(vec![format!("lambda_{i}"), exact, fmt_f64(*x)]);
    }
    let report = TateReport {
        curve,
        alpha,
        s,
        degrees,
        laplacian,
        laplacian_exact: closed.map(|c| c.iter().map(ToString::to_string).collect()),
    };
    Ok(Output {
        header: vec!["label", "limit_exact", "value"],
        rows,
        json: serde_json::to_value(report)?,
    })
}

fn run_gap_scan(cli: &Cli, a: &GapScanArgs) -> Result<Output> {
    let (family, alpha, s) = match &cli.input {
        Some(_) => {
            let v = read_input(cli)?;
            let alpha = parse_alpha(&v, "alpha", Some(a.alpha.clone()))?;
            let s = parse_alpha(&v, "s", Some(a.s.clone()))?;
            let items = get(&v, "family")?
                .as_array()
                .ok_or_else(|| Error::InvalidInput("family must be a list".into()))?;
            let family = items
                .iter()
                .enumerate()
                .map(|(i, item)| match (item.get("tate"), item.get("generators")) {
                    (Some(t), None) => {
                        let curve: TateCurve = serde_json::from_value(t.clone())?;
                        Ok(GapScanMember::Tate(curve.validated()?))
                    }
                    _ => Ok(GapScanMember::Schottky {
                        name: item
                            .get("name")
                            .and_then(Value::as_str)
                            .map(str::to_string)
                            .unwrap_or_else(|| format!("curve {i}")),
                        data: Box::new(parse_schottky(item, cli, Some(alpha.clone()))?),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            (family, alpha, s)
        }
        None => {
            let params = FieldParams::qp(a.p)?;
            let family = (a.n_min..=a.n_max)
                .map(|n| TateCurve::new(params, n).map(GapScanMember::Tate))
                .collect::<Result<Vec<_>>>()?;
            (family, a.alpha.clone(), a.s.clone())
        }
    };
    let rows: Vec<GapRow> = gap_scan(&family, &alpha, &s)?;
    let table = rows
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                fmt_f64(r.spectral_gap),
                serde_json::to_value(r.kind)
                    .ok()
                    .and_then(|k| k.as_str().map(str::to_string))
                    .unwrap_or_default(),
                fmt_f64(r.min_measure),
            ]
        })
        .collect();
    Ok(Output {
        header: vec!["name", "spectral_gap", "kind", "min_measure"],
        rows: table,
        json: serde_json::to_value(&rows)?,
    })
}

#[derive(Serialize, Deserialize)]
pub struct InvariantReport {
    pub spectrum: InvariantSpectrumReport,
    pub degrees: Vec<InvariantDegree>,
    pub degree_bounds: Vec<f64>,
    pub assumption_claimed: bool,
}

fn run_invariant(cli: &Cli, a: &InvariantArgs) -> Result<Output> {
    let v = read_input(cli)?;
    let data = parse_schottky(&v, cli, a.alpha.clone())?;
    let s = match &a.s {
        Some(s) => s.clone(),
        None => parse_alpha(&v, "s", None)?,
    };
    let spectrum = data.invariant_spectrum(&s)?;
    let degrees = data.invariant_degrees(&s, data.cutoff)?;
    let degree_bounds = (0..data.covering().len())
        .map(|u| data.degree_upper_bound(u, &s))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<Vec<String>> = spectrum
        .laplacian
        .iter()
        .enumerate()
        .map(|(i, x)| vec!["laplacian".into(), format!("lambda_{i}"), fmt_f64(*x), String::new(), String::new(), String::new(), String::new()])
        .collect();
    for ((w, d), b) in spectrum.wavelet.iter().zip(&degrees).zip(&degree_bounds) {
        rows.push(vec![
            "wavelet".into(),
            w.label.clone(),
            fmt_f64(w.eigenvalue),
            opt(&d.exact),
            fmt_f64(d.tail_bound),
            fmt_f64(*b),
            w.multiplicity.to_string(),
        ]);
    }
    rows.push(vec![
        "gap".into(),
        serde_json::to_value(spectrum.gap_kind)?
            .as_str()
            .unwrap_or_default()
            .to_string(),
        fmt_f64(spectrum.spectral_gap),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    ]);
    let report = InvariantReport {
        spectrum,
        degrees,
        degree_bounds,
        assumption_claimed: data.assumption_claimed,
    };
    Ok(Output {
        header: vec!["kind", "label", "eigenvalue", "degree_exact", "tail_bound", "degree_bound", "multiplicity"],
        rows,
        json: serde_json::to_value(report)?,
    })
}
