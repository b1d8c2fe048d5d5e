//! `lorext` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lorext::extrapolation::{
    dual_maximal_bound, gamma, grand_pairing, k1_lorentz, k_diag, k_diag_from_norms, k_offdiag, k_offdiag_from_norms, kle,
    marcinkiewicz_maximal_bound, n_up_certificate, psi_ratio_sweep, K1Params, KleForm, RateFunction,
};
use lorext::lorentz::{eps_grid, grand_lorentz_norm, FunctionNorm, NormSpec};
use lorext::operators::{operator_norm, OperatorSpec};
use lorext::rearrange::rearrangement;
use lorext::space::{CbarMode, SpaceSpec};
use lorext::util::geometric_desc;
use lorext::verify::{verify_all, Report, Scenario};
use lorext::weights::{
    a1_ball_form, a1_characteristic, ainf_characteristics, ap_characteristic, apq_characteristic, aps_constant,
    characteristics, openness_eps0, Characteristic, CharacteristicReport,
};
use lorext::{interval_grid, Space, Weight};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "lorext", version, about = "Weighted Lorentz and grand Lorentz norms, weights and extrapolation constants")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// `grid:N` for the uniform interval grid, or a JSON space file.
    #[arg(long, global = true, default_value = "grid:1")]
    space: String,
    /// `ones`, `power:A` (grids only) or a JSON array file.
    #[arg(long, global = true, default_value = "ones")]
    weight: String,
    /// `ones` or a JSON array file.
    #[arg(long, global = true, default_value = "ones")]
    sample: String,
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Accepts `inf`.
    #[arg(long, global = true)]
    s: Option<String>,
    #[arg(long, global = true)]
    q: Option<f64>,
    #[arg(long, global = true)]
    r: Option<f64>,
    #[arg(long, global = true, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    m: Option<u32>,
    /// Comma-separated, strictly decreasing ε values.
    #[arg(long, global = true, value_delimiter = ',')]
    eps_grid: Option<Vec<f64>>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; falls back to LOREXT_THREADS, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum NormKind {
    Lorentz,
    Banach,
    Grand,
    IwaniecSbordone,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum WeightKind {
    Ap,
    A1,
    A1Ball,
    AinfExp,
    AinfFw,
    Apq,
    Aps,
    Eps0,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Formula {
    Gamma,
    KDiag,
    KDiagNorms,
    KOffdiag,
    KOffdiagNorms,
    Kle,
    KlePrinted,
    MaximalBound,
    DualMaximalBound,
    K1,
    NUp,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum SweepKind {
    PowerFamily,
    Psi,
    Pairing,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Evaluate a norm of the sample.
    Norm {
        #[arg(long, value_enum, default_value_t = NormKind::Lorentz)]
        kind: NormKind,
    },
    /// Decreasing rearrangement of the sample with respect to `w dμ`.
    Rearrange,
    /// Weight characteristics.
    WeightConst {
        #[arg(long, value_enum, default_value_t = WeightKind::Ap)]
        kind: WeightKind,
    },
    /// Apply an operator to the sample, or estimate its norm.
    Operator {
        /// identity, maximal, maximal^K, frac_maximal, frac_integral, hilbert, commutator_cz, commutator_frac.
        #[arg(long)]
        op: String,
        /// Symbol for commutators: JSON array file.
        #[arg(long)]
        symbol: Option<String>,
        /// Estimate the operator norm on the norm selected by `--kind` instead of applying it.
        #[arg(long)]
        estimate: bool,
        #[arg(long, value_enum, default_value_t = NormKind::Lorentz)]
        kind: NormKind,
        #[arg(long, default_value_t = 32)]
        budget: usize,
    },
    /// Evaluate an extrapolation constant.
    ExtrapolateConst {
        #[arg(long, value_enum)]
        formula: Formula,
        /// Weight characteristic; computed from `--weight` when omitted.
        #[arg(long)]
        ap: Option<f64>,
        #[arg(long)]
        m_norm: Option<f64>,
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long)]
        q0: Option<f64>,
        /// Defaults to the space's formula-mode constant.
        #[arg(long)]
        c_bar: Option<f64>,
        /// `N(x) = coef·x^exp`.
        #[arg(long, default_value_t = 1.0)]
        rate_coef: f64,
        #[arg(long, default_value_t = 1.0)]
        rate_exp: f64,
        #[arg(long, default_value_t = 32)]
        budget: usize,
    },
    /// Run verification scenarios; exit 1 when any fails.
    Verify {
        #[arg(long, required = true, num_args = 1..)]
        scenario: Vec<PathBuf>,
    },
    /// Plot-ready sweeps.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        #[arg(long, default_value_t = -0.5)]
        from: f64,
        #[arg(long, default_value_t = 0.9)]
        to: f64,
        #[arg(long, default_value_t = 8)]
        steps: usize,
    },
}

/// Rendered command output.
struct Output {
    json: Value,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    pass: bool,
}

impl Output {
    fn new(json: Value, header: Vec<&'static str>, rows: Vec<Vec<String>>) -> Output {
        Output { json, header, rows, pass: true }
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_space(arg: &str) -> Result<Space> {
    if let Some(n) = arg.strip_prefix("grid:") {
        return Ok(interval_grid(n.parse().context("grid size")?)?);
    }
    let spec: SpaceSpec = read_json(Path::new(arg))?;
    Ok(Space::try_from(spec)?)
}

fn load_vector(arg: &str, space: &Space) -> Result<Vec<f64>> {
    if arg == "ones" {
        return Ok(vec![1.0; space.len()]);
    }
    read_json(Path::new(arg))
}

fn load_weight(arg: &str, space: &Space) -> Result<Weight> {
    if let Some(a) = arg.strip_prefix("power:") {
        return Ok(Weight::power(space, a.parse().context("power exponent")?)?);
    }
    Ok(Weight::new(space, load_vector(arg, space)?)?)
}

fn parse_s(s: &Option<String>) -> Result<Option<f64>> {
    s.as_deref()
        .map(|v| match v {
            "inf" | "infinity" => Ok(f64::INFINITY),
            _ => v.parse::<f64>().map_err(|e| anyhow!("--s: {e}")),
        })
        .transpose()
}

struct Inputs {
    space: Space,
    w: Weight,
    c: Common,
    s: Option<f64>,
}

impl Inputs {
    fn p(&self) -> Result<f64> {
        self.c.p.ok_or_else(|| anyhow!("--p is required"))
    }

    fn s(&self) -> Result<f64> {
        self.s.ok_or_else(|| anyhow!("--s is required"))
    }

    fn sample(&self) -> Result<Vec<f64>> {
        load_vector(&self.c.sample, &self.space)
    }

    fn norm_spec(&self, kind: NormKind) -> Result<NormSpec> {
        let p = self.p()?;
        let grid = self.c.eps_grid.clone();
        Ok(match kind {
            NormKind::Lorentz => NormSpec::Lorentz { p, s: self.s.unwrap_or(p) },
            NormKind::Banach => NormSpec::Banach { p, s: self.s.unwrap_or(p) },
            NormKind::Grand => NormSpec::Grand { p, s: self.s.unwrap_or(p), theta: self.c.theta, eps_grid: grid },
            NormKind::IwaniecSbordone => NormSpec::IwaniecSbordone { p, theta: self.c.theta, eps_grid: grid },
        })
    }
}

fn norm(inp: &Inputs, kind: NormKind) -> Result<Output> {
    let f = inp.sample()?;
    let spec = inp.norm_spec(kind)?;
    let value = FunctionNorm::new(&inp.space, spec.clone(), &inp.w)?.eval(&f);
    let mut j = json!({ "norm": to_json(&spec), "value": value });
    if kind == NormKind::Grand {
        let g = grand_lorentz_norm(&inp.space, &f, &inp.w, inp.p()?, spec_s(&spec), inp.c.theta, inp.c.eps_grid.as_deref())?;
        j["witness_eps"] = json!(g.witness_eps);
    }
    let row = vec![format!("{kind:?}").to_lowercase(), num(value)];
    Ok(Output::new(j, vec!["kind", "value"], vec![row]))
}

fn spec_s(spec: &NormSpec) -> f64 {
    match spec {
        NormSpec::Lorentz { s, .. } | NormSpec::Banach { s, .. } | NormSpec::Grand { s, .. } => *s,
        NormSpec::IwaniecSbordone { p, .. } => *p,
    }
}

fn rearrange(inp: &Inputs) -> Result<Output> {
    let fs = rearrangement(&inp.space, &inp.sample()?, &inp.w)?;
    let rows = fs
        .segments()
        .map(|(a, b, v)| vec![num(a), num(b), num(v)])
        .collect();
    let j = json!({ "ends": fs.ends(), "levels": fs.levels(), "total": fs.total() });
    Ok(Output::new(j, vec!["t_start", "t_end", "level"], rows))
}

fn report(kind: &str, p: Option<f64>, q: Option<f64>, c: Characteristic) -> CharacteristicReport {
    CharacteristicReport { kind: kind.into(), p, q, value: c.value, witness_ball: c.witness }
}

fn weight_const(inp: &Inputs, kind: WeightKind) -> Result<Output> {
    let (s, w) = (&inp.space, &inp.w);
    let header = vec!["kind", "p", "q", "value", "witness_center", "witness_radius"];
    let rep = match kind {
        WeightKind::Ap => report("ap", Some(inp.p()?), None, ap_characteristic(s, w, inp.p()?)?),
        WeightKind::A1 => report("a1", None, None, a1_characteristic(s, w)?),
        WeightKind::A1Ball => report("a1_ball", None, None, a1_ball_form(s, w)?),
        WeightKind::AinfExp => report("ainf_exp", None, None, ainf_characteristics(s, w)?.exponential),
        WeightKind::AinfFw => report("ainf_fw", None, None, ainf_characteristics(s, w)?.fujii_wilson),
        WeightKind::Apq => {
            let q = inp.c.q.ok_or_else(|| anyhow!("--q is required"))?;
            report("apq", Some(inp.p()?), Some(q), apq_characteristic(s, w, inp.p()?, q)?)
        }
        WeightKind::Aps => report("aps", Some(inp.p()?), inp.s, aps_constant(s, w, inp.p()?, inp.s()?)?),
        WeightKind::Eps0 => {
            let v = openness_eps0(s, w, inp.p()?)?;
            let j = json!({ "kind": "eps0", "p": inp.p()?, "value": v });
            return Ok(Output::new(j, vec!["kind", "p", "value"], vec![vec!["eps0".into(), num(inp.p()?), num(v)]]));
        }
        WeightKind::All => {
            let all = characteristics(s, w, inp.p()?, inp.c.q)?;
            let mut rows = Vec::new();
            for (k, c) in [("ap", &all.ap), ("a1", &all.a1), ("ainf_exp", &all.ainf_exp), ("ainf_fw", &all.ainf_fw)]
                .into_iter()
                .chain(all.apq.as_ref().map(|c| ("apq", c)))
            {
                rows.push(vec![
                    k.into(),
                    num(all.p),
                    inp.c.q.map(num).unwrap_or_default(),
                    num(c.value),
                    c.witness.center.to_string(),
                    num(c.witness.radius),
                ]);
            }
            return Ok(Output::new(to_json(&all), header, rows));
        }
    };
    let row = vec![
        rep.kind.clone(),
        rep.p.map(num).unwrap_or_default(),
        rep.q.map(num).unwrap_or_default(),
        num(rep.value),
        rep.witness_ball.center.to_string(),
        num(rep.witness_ball.radius),
    ];
    Ok(Output::new(to_json(&rep), header, vec![row]))
}

fn operator(inp: &Inputs, name: &str, symbol: Option<&str>, estimate: bool, kind: NormKind, budget: usize) -> Result<Output> {
    let b = symbol.map(|p| load_vector(p, &inp.space)).transpose()?;
    let op = OperatorSpec::from_name(name, inp.c.alpha, inp.c.m, b)?;
    if estimate {
        let norm = FunctionNorm::new(&inp.space, inp.norm_spec(kind)?, &inp.w)?;
        let sigma: Vec<f64> = inp.w.values().iter().map(|v| v.powf(1.0 - lorext::util::conj(inp.p().unwrap_or(2.0)))).collect();
        let est = operator_norm(&inp.space, &op, &norm, &norm, Some(&sigma), budget, inp.c.seed)?;
        let row = vec![name.to_string(), num(est.lower), num(est.upper), est.evaluations.to_string()];
        let j = json!({ "operator": to_json(&op), "norm": to_json(norm.spec()), "estimate": to_json(&est) });
        return Ok(Output::new(j, vec!["operator", "lower", "upper", "evaluations"], vec![row]));
    }
    let tf = op.apply(&inp.space, &inp.sample()?)?;
    let rows = tf
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i.to_string(), inp.space.ids()[i].clone(), num(*v)])
        .collect();
    Ok(Output::new(json!({ "operator": to_json(&op), "values": tf }), vec!["index", "id", "value"], rows))
}

#[allow(clippy::too_many_arguments)]
fn extrapolate(
    inp: &Inputs,
    formula: Formula,
    ap: Option<f64>,
    m_norm: Option<f64>,
    p0: Option<f64>,
    q0: Option<f64>,
    c_bar: Option<f64>,
    rate: RateFunction,
    budget: usize,
) -> Result<Output> {
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| anyhow!("--{flag} is required"));
    let c_bar = match c_bar {
        Some(c) => c,
        None => inp.space.structural_constants(CbarMode::Formula)?.c_bar,
    };
    let char_at = |p: f64| -> Result<f64> {
        match ap {
            Some(a) => Ok(a),
            None => Ok(ap_characteristic(&inp.space, &inp.w, p)?.value),
        }
    };
    let j = match formula {
        Formula::Gamma => json!({ "formula": "gamma", "value": gamma(need(p0, "p0")?, need(q0, "q0")?)? }),
        Formula::KDiag => {
            let p = inp.p()?;
            to_json(&k_diag(char_at(p)?, p, need(p0, "p0")?, &rate, c_bar)?)
        }
        Formula::KDiagNorms => {
            let p = inp.p()?;
            to_json(&k_diag_from_norms(char_at(p)?, need(m_norm, "m-norm")?, p, need(p0, "p0")?, &rate)?)
        }
        Formula::KOffdiag => {
            let (p, q) = (inp.p()?, need(inp.c.q, "q")?);
            let ch = char_at(1.0 + q / lorext::util::conj(p))?;
            to_json(&k_offdiag(ch, p, q, need(p0, "p0")?, need(q0, "q0")?, &rate, c_bar)?)
        }
        Formula::KOffdiagNorms => {
            let (p, q) = (inp.p()?, need(inp.c.q, "q")?);
            let ch = char_at(1.0 + q / lorext::util::conj(p))?;
            to_json(&k_offdiag_from_norms(ch, need(m_norm, "m-norm")?, p, q, need(p0, "p0")?, need(q0, "q0")?, &rate)?)
        }
        Formula::Kle => to_json(&kle(need(m_norm, "m-norm")?, need(q0, "q0")?, need(p0, "p0")?, &rate, c_bar, KleForm::Proof)?),
        Formula::KlePrinted => {
            let form = KleForm::Printed { p: inp.p()? };
            to_json(&kle(need(m_norm, "m-norm")?, need(q0, "q0")?, need(p0, "p0")?, &rate, c_bar, form)?)
        }
        Formula::MaximalBound => to_json(&marcinkiewicz_maximal_bound(&inp.space, &inp.w, inp.p()?, inp.s()?)?),
        Formula::DualMaximalBound => to_json(&dual_maximal_bound(&inp.space, &inp.w, inp.p()?, inp.s()?)?),
        Formula::K1 => {
            let prm = K1Params {
                p: inp.p()?,
                s: inp.s()?,
                q0: need(q0, "q0")?,
                p0: need(p0, "p0")?,
                budget,
                seed: inp.c.seed,
                stability_grid: inp.c.eps_grid.clone().unwrap_or_default(),
            };
            to_json(&k1_lorentz(&inp.space, &inp.w, &prm, &rate)?)
        }
        Formula::NUp => {
            let norm = FunctionNorm::new(&inp.space, inp.norm_spec(NormKind::Lorentz)?, &inp.w)?;
            to_json(&n_up_certificate(&inp.space, &inp.w, &norm)?)
        }
    };
    let value = j
        .get("value")
        .or_else(|| j.get("constant").and_then(|c| c.get("value")))
        .and_then(Value::as_f64)
        .unwrap_or(f64::NAN);
    let name = format!("{formula:?}");
    Ok(Output::new(j, vec!["formula", "value"], vec![vec![name, num(value)]]))
}

fn run_verify(paths: &[PathBuf]) -> Result<Output> {
    let scenarios = paths.iter().map(|p| read_json::<Scenario>(p)).collect::<Result<Vec<_>>>()?;
    let reports: Vec<Report> = verify_all(&scenarios)?;
    let pass = reports.iter().all(|r| r.pass);
    let mut rows = Vec::new();
    for r in &reports {
        let text = r.to_csv();
        let mut lines = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        for rec in lines.records() {
            rows.push(rec?.iter().map(String::from).collect());
        }
    }
    let json = if reports.len() == 1 { to_json(&reports[0]) } else { to_json(&reports) };
    let header = vec!["id", "theorem", "weight", "parameter", "characteristic", "leg", "value", "witness", "pass"];
    Ok(Output { json, header, rows, pass })
}

fn sweep(inp: &Inputs, kind: SweepKind, from: f64, to: f64, steps: usize) -> Result<Output> {
    if steps == 0 {
        bail!("--steps must be positive");
    }
    let p = inp.p()?;
    let mut items = Vec::new();
    let mut rows = Vec::new();
    let header = match kind {
        SweepKind::PowerFamily => {
            let f = inp.sample()?;
            for k in 0..steps {
                let a = if steps == 1 { from } else { from + (to - from) * k as f64 / (steps - 1) as f64 };
                let w = Weight::power(&inp.space, a)?;
                let ap = ap_characteristic(&inp.space, &w, p)?.value;
                let eps0 = openness_eps0(&inp.space, &w, p).ok();
                let grand = grand_lorentz_norm(&inp.space, &f, &w, p, inp.s.unwrap_or(p), inp.c.theta, inp.c.eps_grid.as_deref())?;
                items.push(json!({ "a": a, "ap": ap, "eps0": eps0, "grand_norm": grand.value, "witness_eps": grand.witness_eps }));
                rows.push(vec![num(a), num(ap), eps0.map(num).unwrap_or_default(), num(grand.value), num(grand.witness_eps)]);
            }
            vec!["a", "ap", "eps0", "grand_norm", "witness_eps"]
        }
        SweepKind::Psi => {
            let q = inp.c.q.ok_or_else(|| anyhow!("--q is required"))?;
            let a = inp.c.alpha.unwrap_or(1.0 / p - 1.0 / q);
            let grid = geometric_desc(1e-2, 1e-6, steps.max(2));
            let sw = psi_ratio_sweep(&grid, p, q, inp.c.theta, a)?;
            for (x, r) in &sw.points {
                items.push(json!({ "x": x, "ratio": r }));
                rows.push(vec![num(*x), num(*r)]);
            }
            vec!["x", "ratio"]
        }
        SweepKind::Pairing => {
            let q = inp.c.q.ok_or_else(|| anyhow!("--q is required"))?;
            let a = inp.c.alpha.unwrap_or(1.0 / p - 1.0 / q);
            for e in eps_grid(q, inp.c.eps_grid.as_deref())? {
                if let Ok(eta) = grand_pairing(e, p, q, a) {
                    items.push(json!({ "eps": e, "eta": eta }));
                    rows.push(vec![num(e), num(eta)]);
                }
            }
            vec!["eps", "eta"]
        }
    };
    Ok(Output::new(Value::Array(items), header, rows))
}

fn configure_threads(c: &Common) -> Result<()> {
    let n = match c.threads {
        Some(n) => Some(n),
        None => match std::env::var("LOREXT_THREADS") {
            Ok(v) => Some(v.parse().context("LOREXT_THREADS")?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("thread pool")?;
    }
    Ok(())
}

fn render(out: &Output, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(&out.json)? + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&out.header)?;
            for r in &out.rows {
                w.write_record(r)?;
            }
            Ok(String::from_utf8(w.into_inner()?)?)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads(&cli.common)?;
    let space = load_space(&cli.common.space)?;
    let w = load_weight(&cli.common.weight, &space)?;
    let s = parse_s(&cli.common.s)?;
    let inp = Inputs { space, w, c: cli.common, s };
    let out = match &cli.cmd {
        Cmd::Norm { kind } => norm(&inp, *kind)?,
        Cmd::Rearrange => rearrange(&inp)?,
        Cmd::WeightConst { kind } => weight_const(&inp, *kind)?,
        Cmd::Operator { op, symbol, estimate, kind, budget } => operator(&inp, op, symbol.as_deref(), *estimate, *kind, *budget)?,
        Cmd::ExtrapolateConst { formula, ap, m_norm, p0, q0, c_bar, rate_coef, rate_exp, budget } => {
            let rate = RateFunction::Power { coef: *rate_coef, exponent: *rate_exp };
            extrapolate(&inp, *formula, *ap, *m_norm, *p0, *q0, *c_bar, rate, *budget)?
        }
        Cmd::Verify { scenario } => run_verify(scenario)?,
        Cmd::Sweep { kind, from, to, steps } => sweep(&inp, *kind, *from, *to, *steps)?,
    };
    let text = render(&out, inp.c.format)?;
    match &inp.c.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(out.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
