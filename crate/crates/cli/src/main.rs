//! Command-line front end: potential theory tables, soup samplers and
//! verification experiments.

use std::collections::BTreeMap;
use std::io::Write;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use interlace2d::config::{parse_kv, parse_points, parse_set_file, Format, Overrides, Params, RunConfig};
use interlace2d::dirichlet::{capacity_scan, capacity_with, green_dirichlet, harmonic_methods};
use interlace2d::gaussian::{build_spec, FieldKind};
use interlace2d::lab::experiments;
use interlace2d::lattice::{Domain, LatticePoint, PointSet, ORIGIN};
use interlace2d::massive::{massive_capacity_scan, MassivePotential, MassiveRegime};
use interlace2d::potential::potential_kernel;
use interlace2d::rng::{replicas, tags};
use interlace2d::solver::DirichletSolver;
use interlace2d::soup::dirichlet::DirichletSoup;
use interlace2d::soup::massive::MassiveSoup;
use interlace2d::soup::tilted::{level_for_local_times, level_for_vacancy, TiltedSoup, TiltedWalkKernel};
use interlace2d::{Error, Result};

const EXIT_VERIFY_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_ACCURACY: u8 = 3;
const EXIT_OTHER: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "interlace2d", version, about = "Planar random interlacements: potential theory, soups and isomorphism checks")]
struct Cli {
    /// Master seed for all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (outputs do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    out: Option<String>,
    /// Output format: csv or json.
    #[arg(long, global = true)]
    format: Option<Format>,
    /// key=value configuration file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Potential kernel a(x) at points or on a ball.
    Potential(PotentialArgs),
    /// Dirichlet Green function g_{B_N}(x, y).
    Green(GreenArgs),
    /// Capacity of a finite set.
    Capacity(CapacityArgs),
    /// Finite-N capacity along a list of box radii.
    CapacityScan(ScanArgs),
    /// Massive capacity along the canonical schedule.
    MassiveScan(ScanArgs),
    /// Dirichlet soup replicas.
    SoupSample(SoupArgs),
    /// Tilted-walk soup replicas.
    TiltedSample(TiltedArgs),
    /// Massive soup replicas on the canonical schedule.
    MassiveSample(MassiveArgs),
    /// Gaussian field samples.
    GffSample(GffArgs),
    /// Run a verification experiment.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct PotentialArgs {
    /// Points `x,y;x,y`.
    #[arg(long)]
    points: Option<String>,
    /// Tabulate the octant of the ball of this radius instead.
    #[arg(long)]
    radius: Option<String>,
    #[arg(long)]
    tol: Option<String>,
}

#[derive(Args, Debug)]
struct GreenArgs {
    #[arg(long = "N")]
    n: Option<String>,
    #[arg(long)]
    x: Option<String>,
    /// Points `x,y;x,y`.
    #[arg(long)]
    y: Option<String>,
}

#[derive(Args, Debug)]
struct CapacityArgs {
    #[arg(long)]
    set: Option<String>,
    /// kernel or richardson.
    #[arg(long)]
    method: Option<String>,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long)]
    set: Option<String>,
    #[arg(long = "N")]
    n: Option<String>,
}

#[derive(Args, Debug)]
struct SoupArgs {
    #[arg(long = "K")]
    k: Option<String>,
    #[arg(long = "Kp")]
    kp: Option<String>,
    #[arg(long = "A")]
    a: Option<String>,
    #[arg(long)]
    u: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    /// Probe points `x,y;x,y` (default: the points of A).
    #[arg(long)]
    probes: Option<String>,
}

#[derive(Args, Debug)]
struct TiltedArgs {
    #[arg(long = "A")]
    a: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    #[arg(long)]
    guard: Option<String>,
    /// exact-return or truncate.
    #[arg(long)]
    strategy: Option<String>,
    /// vacancy: level (pi/2) alpha; local-time: level alpha.
    #[arg(long)]
    convention: Option<String>,
    #[arg(long)]
    probes: Option<String>,
}

#[derive(Args, Debug)]
struct MassiveArgs {
    #[arg(long = "A")]
    a: Option<String>,
    #[arg(long = "N")]
    n: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    /// Condition on the origin staying vacant.
    #[arg(long)]
    pinned: Option<String>,
    #[arg(long)]
    probes: Option<String>,
}

#[derive(Args, Debug)]
struct GffArgs {
    /// box:N, pinned_box:N, pinned_infinite, massive:EPS, massive_pinned:EPS.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Experiment name (see --list).
    name: Option<String>,
    /// Experiment parameter `key=value` (repeatable).
    #[arg(short = 'p', long = "param")]
    params: Vec<String>,
    /// List experiments and their parameters.
    #[arg(long)]
    list: bool,
}

/// Flags of a subcommand as (key, value) pairs.
fn flag_pairs(pairs: &[(&str, &Option<String>)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect()
}

struct Output {
    cfg: RunConfig,
    command: String,
}

impl Output {
    fn header(&self) -> Vec<String> {
        let mut h = vec![
            format!("# interlace2d {}", env!("CARGO_PKG_VERSION")),
            format!("# command={}", self.command),
        ];
        h.extend(self.cfg.echo().into_iter().map(|l| format!("# {l}")));
        h
    }

    fn write(&self, text: &str) -> Result<()> {
        match &self.cfg.out {
            Some(path) => std::fs::write(path, text)?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }

    fn table(&self, columns: &[String], rows: &[Vec<String>]) -> Result<()> {
        match self.cfg.format {
            Format::Csv => {
                let mut s = self.header().join("\n");
                s.push('\n');
                s.push_str(&columns.join(","));
                s.push('\n');
                for r in rows {
                    s.push_str(&r.join(","));
                    s.push('\n');
                }
                self.write(&s)
            }
            Format::Json => {
                let obj = serde_json::json!({
                    "version": env!("CARGO_PKG_VERSION"),
                    "command": self.command,
                    "seed": self.cfg.seed,
                    "config": self.cfg.params,
                    "columns": columns,
                    "rows": rows,
                });
                self.write(&(to_json(&obj)? + "\n"))
            }
        }
    }
}

fn cols(c: &[&str]) -> Vec<String> {
    c.iter().map(|s| s.to_string()).collect()
}

fn read_set(path: &str) -> Result<PointSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
    parse_set_file(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{path}: {message}"),
        },
        other => other,
    })
}

fn required<'a>(p: &'a Params, key: &str) -> Result<&'a str> {
    match p.raw(key)? {
        "" => Err(Error::domain(format!("missing required option `{key}`"))),
        v => Ok(v),
    }
}

fn point(s: &str) -> Result<LatticePoint> {
    let v = parse_points(s)?;
    match v.as_slice() {
        [p] => Ok(*p),
        _ => Err(Error::domain(format!("expected a single point `x,y`, got `{s}`"))),
    }
}

fn probes_or(p: &Params, set: &PointSet) -> Result<Vec<LatticePoint>> {
    match p.raw("probes")? {
        "" => Ok(set.iter().copied().collect()),
        s => parse_points(s),
    }
}

fn run(cli: Cli) -> Result<u8> {
    let file = match &cli.config {
        Some(path) => parse_kv(&std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))?)?,
        None => Vec::new(),
    };
    let mut flags = Overrides {
        seed: cli.seed,
        threads: cli.threads,
        out: cli.out.clone(),
        format: cli.format,
        params: BTreeMap::new(),
    };
    let (command, defaults): (String, Vec<(&str, &str)>) = match &cli.command {
        Command::Potential(a) => {
            flags.params = flag_pairs(&[("points", &a.points), ("radius", &a.radius), ("tol", &a.tol)]);
            ("potential".into(), vec![("points", ""), ("radius", ""), ("tol", "1e-12")])
        }
        Command::Green(a) => {
            flags.params = flag_pairs(&[("N", &a.n), ("x", &a.x), ("y", &a.y)]);
            ("green".into(), vec![("N", "8"), ("x", "0,0"), ("y", "0,0")])
        }
        Command::Capacity(a) => {
            flags.params = flag_pairs(&[("set", &a.set), ("method", &a.method)]);
            ("capacity".into(), vec![("set", ""), ("method", "kernel")])
        }
        Command::CapacityScan(a) => {
            flags.params = flag_pairs(&[("set", &a.set), ("N", &a.n)]);
            ("capacity-scan".into(), vec![("set", ""), ("N", "64,128,256,512")])
        }
        Command::MassiveScan(a) => {
            flags.params = flag_pairs(&[("set", &a.set), ("N", &a.n)]);
            ("massive-scan".into(), vec![("set", ""), ("N", "64,128,256")])
        }
        Command::SoupSample(a) => {
            flags.params = flag_pairs(&[
                ("K", &a.k),
                ("Kp", &a.kp),
                ("A", &a.a),
                ("u", &a.u),
                ("replicas", &a.replicas),
                ("probes", &a.probes),
            ]);
            (
                "soup-sample".into(),
                vec![("K", "0,0"), ("Kp", "ball:32"), ("A", ""), ("u", "1"), ("replicas", "1000"), ("probes", "")],
            )
        }
        Command::TiltedSample(a) => {
            flags.params = flag_pairs(&[
                ("A", &a.a),
                ("alpha", &a.alpha),
                ("replicas", &a.replicas),
                ("guard", &a.guard),
                ("strategy", &a.strategy),
                ("convention", &a.convention),
                ("probes", &a.probes),
            ]);
            (
                "tilted-sample".into(),
                vec![
                    ("A", ""),
                    ("alpha", "1"),
                    ("replicas", "1000"),
                    ("guard", "16"),
                    ("strategy", "exact-return"),
                    ("convention", "vacancy"),
                    ("probes", ""),
                ],
            )
        }
        Command::MassiveSample(a) => {
            flags.params = flag_pairs(&[
                ("A", &a.a),
                ("N", &a.n),
                ("alpha", &a.alpha),
                ("replicas", &a.replicas),
                ("pinned", &a.pinned),
                ("probes", &a.probes),
            ]);
            (
                "massive-sample".into(),
                vec![("A", ""), ("N", "16"), ("alpha", "1"), ("replicas", "1000"), ("pinned", "false"), ("probes", "")],
            )
        }
        Command::GffSample(a) => {
            flags.params = flag_pairs(&[("kind", &a.kind), ("window", &a.window), ("replicas", &a.replicas)]);
            ("gff-sample".into(), vec![("kind", "pinned_infinite"), ("window", ""), ("replicas", "1000")])
        }
        Command::Verify(v) => {
            let reg = experiments();
            if v.list {
                let mut s = String::new();
                for e in reg.iter() {
                    s.push_str(&format!("{}: {}\n", e.name(), e.describe()));
                    for (k, d, h) in e.parameters() {
                        s.push_str(&format!("    {k} = {d}    # {h}\n"));
                    }
                }
                print!("{s}");
                return Ok(0);
            }
            let name = v
                .name
                .clone()
                .ok_or_else(|| Error::domain(format!("verify needs an experiment name; available: {}", reg.names().join(", "))))?;
            for kv in &v.params {
                let (k, val) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::domain(format!("--param expects key=value, got `{kv}`")))?;
                flags.params.insert(k.trim().to_string(), val.trim().to_string());
            }
            let exp = reg.get(&name)?;
            let defaults: Vec<(&str, &str)> = exp.parameters().into_iter().map(|(k, d, _)| (k, d)).collect();
            let cfg = RunConfig::resolve(&file, &flags, &defaults)?;
            init_threads(cfg.threads)?;
            let out = Output {
                cfg: cfg.clone(),
                command: format!("verify {name}"),
            };
            let report = exp.run(&Params(cfg.params.clone()), cfg.seed)?;
            eprint!("{}", report.text());
            match cfg.format {
                Format::Csv => {
                    let mut s = out.header().join("\n");
                    s.push_str(&format!("\n# runtime_seconds={:.3}\n", report.runtime_seconds));
                    s.push_str(&report.csv_body());
                    out.write(&s)?;
                }
                Format::Json => out.write(&(to_json(&report)? + "\n"))?,
            }
            return Ok(if report.passed() { 0 } else { EXIT_VERIFY_FAIL });
        }
    };
    let cfg = RunConfig::resolve(&file, &flags, &defaults)?;
    init_threads(cfg.threads)?;
    let p = Params(cfg.params.clone());
    let out = Output { cfg, command };
    match &cli.command {
        Command::Potential(_) => {
            let tol = p.f64("tol")?;
            let pts: Vec<LatticePoint> = match (p.raw("points")?, p.raw("radius")?) {
                ("", "") => return Err(Error::domain("give --points or --radius")),
                (s, "") => parse_points(s)?,
                (_, r) => {
                    let r: i32 = r.parse().map_err(|_| Error::domain("invalid radius"))?;
                    (0..=r)
                        .flat_map(|x| (0..=x).map(move |y| LatticePoint::new(x, y)))
                        .filter(|q| q.norm() <= r as f64)
                        .collect()
                }
            };
            let rows = pts
                .iter()
                .map(|x| {
                    potential_kernel(*x, tol)
                        .map(|e| vec![x.x1.to_string(), x.x2.to_string(), e.value.to_string(), e.error.to_string()])
                })
                .collect::<Result<Vec<_>>>()?;
            out.table(&cols(&["x1", "x2", "a", "error_estimate"]), &rows)?;
        }
        Command::Green(_) => {
            let solver = DirichletSolver::new(Domain::ball(p.u32("N")?));
            let x = point(p.raw("x")?)?;
            let rows = p
                .points("y")?
                .iter()
                .map(|y| {
                    green_dirichlet(&solver, x, *y).map(|g| {
                        vec![x.x1.to_string(), x.x2.to_string(), y.x1.to_string(), y.x2.to_string(), g.to_string()]
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            out.table(&cols(&["x1", "x2", "y1", "y2", "g"]), &rows)?;
        }
        Command::Capacity(_) => {
            let set = read_set(required(&p, "set")?)?;
            let method = p.str("method")?;
            let reg = harmonic_methods();
            let c = capacity_with(&set, reg.get(&method)?)?;
            let mut rows = vec![vec!["capacity".into(), c.value.to_string(), c.error.to_string()]];
            for (x, w) in c.harmonic_measure.iter() {
                rows.push(vec![format!("hm {} {}", x.x1, x.x2), w.to_string(), String::new()]);
            }
            out.table(&cols(&["quantity", "value", "error_estimate"]), &rows)?;
        }
        Command::CapacityScan(_) => {
            let set = read_set(required(&p, "set")?)?;
            let rows = capacity_scan(&set, &p.list::<u32>("N")?)?
                .into_iter()
                .map(|(n, v, e)| vec![n.to_string(), v.to_string(), e.to_string()])
                .collect::<Vec<_>>();
            out.table(&cols(&["N", "value", "error_estimate"]), &rows)?;
        }
        Command::MassiveScan(_) => {
            let set = read_set(required(&p, "set")?)?;
            let rows = massive_capacity_scan(&set, &p.list::<u32>("N")?)?
                .into_iter()
                .map(|(n, eps, v, e)| vec![n.to_string(), eps.to_string(), v.to_string(), e.to_string()])
                .collect::<Vec<_>>();
            out.table(&cols(&["N", "eps", "capacity_massive", "error_estimate"]), &rows)?;
        }
        Command::SoupSample(_) => {
            let k: PointSet = parse_points(p.raw("K")?)?.into_iter().collect();
            let solver = DirichletSolver::new(Domain::parse(p.raw("Kp")?)?);
            let mut a = read_set(required(&p, "A")?)?;
            a.extend(k.iter().copied());
            let probes = probes_or(&p, &a)?;
            let u = p.f64("u")?;
            let soup = DirichletSoup::new(&solver, &k, &a)?;
            let rows = replicas(out.cfg.seed, tags::SOUP, p.usize("replicas")?, |rng, i| {
                soup.sample_occupation(rng, u, &probes).map(|(n, occ)| {
                    let mut r = vec![i.to_string(), n.to_string(), ((n == 0) as u8).to_string()];
                    r.extend(occ.iter().map(|v| v.to_string()));
                    r
                })
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let mut c = cols(&["replica", "n_trajectories", "vacancy_indicator"]);
            c.extend(probes.iter().map(|x| format!("L({} {})", x.x1, x.x2)));
            out.table(&c, &rows)?;
        }
        Command::TiltedSample(_) => {
            let mut a = read_set(required(&p, "A")?)?;
            a.insert(ORIGIN);
            let window: PointSet = probes_or(&p, &a)?.into_iter().filter(|x| !x.is_origin()).collect();
            let alpha = p.f64("alpha")?;
            let level = match p.raw("convention")? {
                "vacancy" => level_for_vacancy(alpha),
                "local-time" => level_for_local_times(alpha),
                other => return Err(Error::domain(format!("unknown convention `{other}`"))),
            };
            let extra = a.iter().map(|x| x.norm()).fold(0.0, f64::max).ceil() as u32 + 1;
            let kernel = Arc::new(TiltedWalkKernel::with_radius(p.u32("guard")?, extra)?);
            let soup = TiltedSoup::new(kernel, &a, &window, &p.str("strategy")?)?;
            let max_bound = 1e-4;
            if soup.truncation_bound() > max_bound {
                return Err(Error::accuracy("tilted guard truncation", soup.truncation_bound(), max_bound));
            }
            let rows = replicas(out.cfg.seed, tags::TILTED, p.usize("replicas")?, |rng, i| {
                soup.sample_occupation(rng, level, max_bound).map(|(n, occ)| {
                    let mut r = vec![i.to_string(), n.to_string(), ((n == 0) as u8).to_string()];
                    r.extend(occ.iter().map(|v| v.to_string()));
                    r
                })
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let mut c = cols(&["replica", "count", "vacancy_indicator"]);
            c.extend(soup.window().iter().map(|x| format!("L({} {})", x.x1, x.x2)));
            out.table(&c, &rows)?;
        }
        Command::MassiveSample(_) => {
            let mut a = read_set(required(&p, "A")?)?;
            let pinned = match p.raw("pinned")? {
                "true" => true,
                "false" => false,
                other => return Err(Error::domain(format!("pinned must be true or false, got `{other}`"))),
            };
            if pinned {
                a.insert(ORIGIN);
            }
            let probes = probes_or(&p, &a)?;
            let reg = MassiveRegime::canonical(p.u32("N")?)?;
            let u = reg.level(p.f64("alpha")?);
            let soup = MassiveSoup::new(MassivePotential::shared(reg.eps)?, &a)?;
            let rows = replicas(out.cfg.seed, tags::MASSIVE, p.usize("replicas")?, |rng, i| {
                soup.sample_occupation(rng, u, &probes, pinned).map(|o| {
                    let mut r = vec![
                        i.to_string(),
                        o.count.to_string(),
                        ((o.count == 0) as u8).to_string(),
                        o.rejected.to_string(),
                    ];
                    r.extend(o.occupation.iter().map(|v| v.to_string()));
                    r
                })
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let mut c = cols(&["replica", "count", "vacancy_indicator", "rejected"]);
            c.extend(probes.iter().map(|x| format!("L({} {})", x.x1, x.x2)));
            out.table(&c, &rows)?;
        }
        Command::GffSample(_) => {
            let window: Vec<LatticePoint> = read_set(required(&p, "window")?)?.into_iter().collect();
            let spec = build_spec(FieldKind::parse(p.raw("kind")?)?, &window)?;
            let rows = replicas(out.cfg.seed, tags::FIELD, p.usize("replicas")?, |rng, i| {
                let mut f = vec![0.0; window.len()];
                spec.sample_into(rng, &mut f);
                std::iter::once(i.to_string()).chain(f.iter().map(|v| v.to_string())).collect::<Vec<_>>()
            });
            let mut c = cols(&["replica"]);
            c.extend(window.iter().map(|x| format!("phi({} {})", x.x1, x.x2)));
            out.table(&c, &rows)?;
        }
        Command::Verify(_) => unreachable!(),
    }
    Ok(0)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Io(format!("json encoding: {e}")))
}

fn init_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Io(format!("thread pool: {e}")))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::UnknownKey(_) => EXIT_USAGE,
        Error::Accuracy { .. } => EXIT_ACCURACY,
        _ => EXIT_OTHER,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let obj = serde_json::json!({ "error": e, "message": e.to_string() });
            eprintln!("{obj}");
            ExitCode::from(exit_code(&e))
        }
    }
}
