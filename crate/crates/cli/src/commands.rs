use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use vtwist::dynamics::{frequencies, mass_ratio_for_resonance, mu1, Cr3bp, MassRatio};
use vtwist::integrate::IntegratorConfig;
use vtwist::normalform::{normal_form, short_period_w_of_e, DEFAULT_DEGREE};
use vtwist::rotation::{default_config, ray_seeds, rotation_profile, short_period_fixed_point};
use vtwist::scan::{run_sweep, write_sweep_csv, Axis, CellResult, SweepSpec, SweepTask, MAX_SWEEP_ENERGY};
use vtwist::section::{section_streams, trace_orbit, SectionPoint, DEFAULT_DIRECTION};
use vtwist::twist::{
    action_action_chart, critical_mass_ratio, reconnection_locus_nf, reconnection_mu_nf,
    reconnection_search_numeric, write_chart_grid_csv, write_chart_lines_csv, ActionCap, GridSpec, ProfileSearch,
    Rational, DEFAULT_CAP_ENERGY,
};

use crate::args::{Cli, Command, Common, Format, Method, Orbits};
use crate::output::{extension, pretty, stem, write_file, write_sidecar, Table};
use crate::CliError;

const CONFIG_KEYS: &[&str] = &[
    "mu", "E", "seed_ray", "max_crossings", "tol", "grid", "out", "format", "rational", "method", "degree", "depth",
    "tasks", "workers",
];

const DEFAULT_TOL: f64 = 1e-9;
const DEFAULT_RAY_LENGTH: f64 = 0.03;
const DEFAULT_RAY_SEEDS: usize = 16;
/// Integration steps between samples of an orbit trace.
const TRACE_EVERY: usize = 10;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Flag defaults read from `--config`.
struct Config(Map<String, Value>);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Config(Map::new()));
        };
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        let Value::Object(map) = value else {
            return Err(usage("config must be a JSON object"));
        };
        if let Some(k) = map.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(usage(format!("unknown config key `{k}`")));
        }
        Ok(Config(map))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v.as_f64().map(Some).ok_or_else(|| usage(format!("config key `{key}` must be a number"))),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(|x| Some(x as usize))
                .ok_or_else(|| usage(format!("config key `{key}` must be a non-negative integer"))),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(usage(format!("config key `{key}` must be a string"))),
        }
    }
}

/// Output settings shared by every subcommand.
struct Sink {
    dir: PathBuf,
    format: Format,
}

impl Sink {
    fn new(common: &Common, cfg: &Config) -> Result<Self, CliError> {
        let dir = match &common.out {
            Some(d) => d.clone(),
            None => cfg.string("out")?.map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
        };
        let format = match common.format {
            Some(f) => f,
            None => match cfg.string("format")?.as_deref() {
                None | Some("csv") => Format::Csv,
                Some("json") => Format::Json,
                Some(other) => return Err(usage(format!("unknown format `{other}`"))),
            },
        };
        Ok(Sink { dir, format })
    }

    fn table(&self, stem: &str, table: &Table) -> Result<PathBuf, CliError> {
        write_file(&self.dir, &format!("{stem}.{}", extension(self.format)), &table.render(self.format))
    }

    fn meta(&self, stem: &str, command: &str, params: Value, notes: Value) -> Result<PathBuf, CliError> {
        write_sidecar(&self.dir, stem, command, params, notes)
    }
}

fn parse_numbers(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("{what}: `{t}` is not a number"))))
        .collect()
}

fn as_count(x: f64, what: &str) -> Result<usize, CliError> {
    if x >= 1.0 && x.fract() == 0.0 && x < 1e7 {
        Ok(x as usize)
    } else {
        Err(usage(format!("{what}: count must be a positive integer, got {x}")))
    }
}

fn parse_grid(s: &str) -> Result<(Axis, Axis), CliError> {
    let v = parse_numbers(s, "--grid")?;
    if v.len() != 6 {
        return Err(usage("--grid needs mu_min,mu_max,n_mu,E_min,E_max,n_E"));
    }
    let mu = Axis::new(v[0], v[1], as_count(v[2], "--grid")?)?;
    let energy = Axis::new(v[3], v[4], as_count(v[5], "--grid")?)?;
    Ok((mu, energy))
}

fn check_mu(mu: f64) -> Result<f64, CliError> {
    MassRatio::elliptic(mu)?;
    Ok(mu)
}

fn check_mu_axis(axis: &Axis) -> Result<(), CliError> {
    if !(axis.min > 0.0 && axis.max < mu1()) {
        return Err(usage(format!("mu must lie in (0, {:.10}), got [{}, {}]", mu1(), axis.min, axis.max)));
    }
    Ok(())
}

fn check_energy_axis(axis: &Axis, allow_zero: bool) -> Result<(), CliError> {
    let low_ok = if allow_zero { axis.min >= 0.0 } else { axis.min > 0.0 };
    if !(low_ok && axis.max <= MAX_SWEEP_ENERGY) {
        return Err(usage(format!("E must lie in (0, {MAX_SWEEP_ENERGY}], got [{}, {}]", axis.min, axis.max)));
    }
    Ok(())
}

fn check_energy(e: f64) -> Result<f64, CliError> {
    if e > 0.0 && e.is_finite() {
        Ok(e)
    } else {
        Err(usage(format!("E must be positive, got {e}")))
    }
}

fn required_mu(flag: Option<f64>, cfg: &Config) -> Result<f64, CliError> {
    let mu = flag.or(cfg.f64("mu")?).ok_or_else(|| usage("--mu is required"))?;
    check_mu(mu)
}

/// Validated orbit parameters for `section`, `orbit` and `profile`.
struct OrbitRun {
    mu: f64,
    energy: f64,
    seed_ray: Option<(f64, f64, f64, f64, usize)>,
    crossings: usize,
    tol: f64,
}

impl OrbitRun {
    fn new(mu: Option<f64>, o: &Orbits, cfg: &Config, default_crossings: usize) -> Result<Self, CliError> {
        let mu = required_mu(mu, cfg)?;
        let energy = check_energy(o.energy.or(cfg.f64("E")?).ok_or_else(|| usage("--E is required"))?)?;
        let seed_ray = match o.seed_ray.clone().or(cfg.string("seed_ray")?) {
            None => None,
            Some(s) => {
                let v = parse_numbers(&s, "--seed-ray")?;
                if v.len() != 5 {
                    return Err(usage("--seed-ray needs a0,pa0,a1,pa1,count"));
                }
                Some((v[0], v[1], v[2], v[3], as_count(v[4], "--seed-ray")?))
            }
        };
        let crossings = o.max_crossings.or(cfg.usize("max_crossings")?).unwrap_or(default_crossings);
        if crossings == 0 {
            return Err(usage("--max-crossings must be at least 1"));
        }
        let tol = o.tol.or(cfg.f64("tol")?).unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(usage(format!("--tol must be positive, got {tol}")));
        }
        Ok(OrbitRun { mu, energy, seed_ray, crossings, tol })
    }

    fn system(&self) -> Result<(Cr3bp, IntegratorConfig), CliError> {
        let sys = Cr3bp::with_mu(self.mu)?;
        let mut config = default_config(&sys)?;
        config.drift_tolerance = self.tol;
        Ok((sys, config))
    }

    /// Fixed point at `E` plus the seeds; explicit seeds lie on the same
    /// energy surface and crossing direction.
    fn seeds(&self, sys: &Cr3bp) -> Result<(SectionPoint, Vec<SectionPoint>), CliError> {
        let fp = short_period_fixed_point(sys, self.energy, DEFAULT_DIRECTION, &default_config(sys)?)?;
        let seeds = match self.seed_ray {
            None => ray_seeds(&fp.point, 0.0, DEFAULT_RAY_LENGTH, DEFAULT_RAY_SEEDS),
            Some((a0, pa0, a1, pa1, count)) => (0..count)
                .map(|k| {
                    let t = if count == 1 { 0.0 } else { k as f64 / (count - 1) as f64 };
                    SectionPoint::new(a0 + t * (a1 - a0), pa0 + t * (pa1 - pa0), self.energy, DEFAULT_DIRECTION)
                })
                .collect(),
        };
        Ok((fp.point, seeds))
    }

    fn params(&self) -> Value {
        json!({
            "mu": self.mu,
            "E": self.energy,
            "seed_ray": self.seed_ray.map(|s| json!([s.0, s.1, s.2, s.3, s.4])),
            "max_crossings": self.crossings,
            "tol": self.tol,
            "direction": DEFAULT_DIRECTION.label(),
        })
    }
}

pub fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::ResonanceTable { common } => resonance_table(&common),
        Command::Section { common, mu, orbits } => section(&common, mu.mu, &orbits),
        Command::Orbit { common, mu, orbits } => orbit(&common, mu.mu, &orbits),
        Command::Profile { common, mu, orbits } => profile(&common, mu.mu, &orbits),
        Command::FixedPointContours { common, grid } => fixed_point_contours(&common, grid),
        Command::Reconnect { common, rational, method, grid, energy, max_crossings, tol } => {
            reconnect(&common, rational, method, grid, energy, max_crossings, tol)
        }
        Command::Nf { common, mu, degree } => nf(&common, mu.mu, degree),
        Command::NfContours { common, grid } => nf_contours(&common, grid),
        Command::Chart { common, mu, grid, depth } => chart(&common, mu.mu, grid, depth),
        Command::Sweep { common, grid, tasks, workers } => sweep(&common, grid, tasks, workers),
    }
}

fn resonance_table(common: &Common) -> Result<Vec<PathBuf>, CliError> {
    let cfg = Config::load(common.config.as_deref())?;
    let sink = Sink::new(common, &cfg)?;
    let mut table = Table::new(&["label", "r", "mu", "mu_5dp"]);
    let mut row = |label: &str, r: f64, mu: f64| {
        table.push(vec![label.into(), r.into(), mu.into(), format!("{mu:.5}").into()]);
    };
    for (label, r) in [("4", 4.0), ("11/3", 11.0 / 3.0), ("7/2", 3.5)] {
        row(label, r, mass_ratio_for_resonance(r)?.value());
    }
    let mu_c = critical_mass_ratio()?;
    row("c", frequencies(MassRatio::new(mu_c)?)?.ratio(), mu_c);
    row("10/3", 10.0 / 3.0, mass_ratio_for_resonance(10.0 / 3.0)?.value());
    // the Earth-Moon mass ratio, where the frequency ratio is close to 16/5
    let earth_moon = 0.01215;
    row("~16/5", frequencies(MassRatio::new(earth_moon)?)?.ratio(), earth_moon);
    row("3", 3.0, mass_ratio_for_resonance(3.0)?.value());
    let name = "resonance_table";
    Ok(vec![
        sink.table(name, &table)?,
        sink.meta(name, "resonance-table", json!({}), json!({"c": "critical mass ratio, twist vanishes at L4"}))?,
    ])
}

fn section(common: &Common, mu: Option<f64>, orbits: &Orbits) -> Result<Vec<PathBuf>, CliError> {
    let cfg = Config::load(common.config.as_deref())?;
    let sink = Sink::new(common, &cfg)?;
    let run = OrbitRun::new(mu, orbits, &cfg, 1000)?;
    let (sys, config) = run.system()?;
    let (_, seeds) = run.seeds(&sys)?;
    let mut table = Table::new(&["seed", "a", "pa", "E", "mu", "direction", "t_cross"]);
    let mut failures = Vec::new();
    for (k, (points, err)) in section_streams(&sys, &seeds, run.crossings, &config).into_iter().enumerate() {
        for p in &points {
            table.push(vec![
                k.into(),
                p.a.into(),
                p.pa.into(),
                p.energy.into(),
                run.mu.into(),
                p.direction.label().into(),
                p.t_cross.into(),
            ]);
        }
        if let Some(e) = err {
            failures.push(json!({"seed": k, "crossings": points.len(), "error": e.code(), "message": e.to_string()}));
        }
    }
    let name = stem("section", Some(run.mu), Some(run.energy));
    Ok(vec![sink.table(&name, &table)?, sink.meta(&name, "section", run.params(), json!({ "failures": failures }))?])
}

fn orbit(common: &Common, mu: Option<f64>, orbits: &Orbits) -> Result<Vec<PathBuf>, CliError> {
    let cfg = Config::load(common.config.as_deref())?;
    let sink = Sink::new(common, &cfg)?;
    let run = OrbitRun::new(mu, orbits, &cfg, 7)?;
    let (sys, config) = run.system()?;
    let (center, seeds) = run.seeds(&sys)?;
    // without an explicit ray the trace follows the fixed point itself
    let seed = if run.seed_ray.is_some() { seeds[0] } else { center };
    let trace = trace_orbit(&sys, &seed, run.crossings, TRACE_EVERY, &config)?;
    let mut table = Table::new(&["t", "x", "y"]);
    for (t, s) in &trace {
        table.push(vec![(*t).into(), s.x.into(), s.y.into()]);
    }
    let name = stem("orbit", Some(run.mu), Some(run.energy));
    let notes = json!({ "seed": [seed.a, seed.pa], "sample_every_steps": TRACE_EVERY });
    Ok(vec![sink.table(&name, &table)?, sink.meta(&name, "orbit", run.params(), notes)?])
}

fn profile(common: &Common, mu: Option<f64>, orbits: &Orbits) -> Result<Vec<PathBuf>, CliError> {
    let cfg = Config::load(common.config.as_deref())?;
    let sink = Sink::new(common, &cfg)?;
    let run = OrbitRun::new(mu, orbits, &cfg, 2000)?;
    let (sys, config) = run.system()?;
    let (center, seeds) = run.seeds(&sys)?;
    let entries = rotation_profile(&sys, &center, &seeds, run.crossings, &config);
    let mut table = Table::new(&["index", "I", "W", "error", "flag"]);
    for e in &entries {
        table.push(vec![e.index.into(), e.action.into(), e.w.into(), e.error.into(), e.flag.clone().into()]);
    }
    let name = stem("profile", Some(run.mu), Some(run.energy));
    let notes = json!({ "center": [center.a, center.pa] });
    Ok(vec![sink.table(&name, &table)?, sink.meta(&name, "profile", run.params(), notes)?])
}

fn workers_default() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn fixed_point_contours(common: &Common, grid: Option<String>) -> Result<Vec<PathBuf>, CliError> {
    let cfg = Config::load(common.config.as_deref())?;
    let sink = Sink::new(common, &cfg)?;
    let grid = grid.or(cfg.string("grid")?).unwrap_or_else(|| "0.0075,0.0115,9,0.01,0.1,10".into());
    let (mu, energy) = parse_grid(&grid)?;
    check_mu_axis(&mu)?;
    check_energy_axis(&energy, false)?;
    let spec = SweepSpec { mu, energy, tasks: vec![SweepTask::FixedPointW], workers: workers_default() };
    spec.validate()?;
    let name = "fixed_point_contours";
    let results = run_sweep(&spec, &sink.dir.join(format!("{name}.ndjson")))?;
    let mut table = Table::new(&["mu", "E", "W0", "status"]);
    for r in &results {
        table.push(vec![r.mu.into(), r.energy.into(), r.value.into(), r.status.clone().into()]);
    }
    let params = json!({ "grid": grid, "direction": DEFAULT_DIRECTION.label() });
    Ok(vec![sink.table(name, &table)?, sink.meta(name, "fixed-point-contours", params, json!({}))?])
}

fn reconnect(
    common: &Common,
    rational: Option<String>,
    method: Option<Method>,
    grid: Option<String>,
    energy: Option<f64>,
    max_crossings: Option<usize>,
    tol: Option<f64>,
) -> Result<Vec<PathBuf>, CliError> {
    let cfg = Config::load(common.config.as_deref())?;
    let sink = Sink::new(common, &cfg)?;
    let text = rational.or(cfg.string("rational")?).ok_or_else(|| usage("--rational is required"))?;
    let rational: Rational = text.parse()?;
    let method = match method {
        Some(m) => m,
        None => match cfg.string("method")?.as_deref() {
            None | Some("nf") => Method::Nf,
            Some("numeric") => Method::Numeric,
            Some(other) => return Err(usage(format!("unknown method `{other}`"))),
        },
    };
    let grid = grid.or(cfg.string("grid")?);
    let label = rational.to_string().replace('/', "_");
    let mut table = Table::new(&["rational", "method", "mu", "E", "status"]);
    match method {
        Method::Nf => {
            let grid = grid.unwrap_or_else(|| "0.0088,0.0105,18".into());
            let v = parse_numbers(&grid, "--grid")?;
            if v.len() != 3 {
                return Err(usage("--grid for the nf method needs mu_min,mu_max,n_mu"));
            }
            let axis = Axis::new(v[0], v[1], as_count(v[2], "--grid")?)?;
            check_mu_axis(&axis)?;
            let locus = reconnection_locus_nf(rational, &axis.values(), DEFAULT_CAP_ENERGY);
            let mut rows: Vec<(f64, Option<f64>, String)> =
                locus.points.iter().map(|&(m, e)| (m, Some(e), "ok".to_string())).collect();
            rows.extend(locus.failures.iter().map(|(m, s)| (*m, None, s.clone())));
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (m, e, s) in rows {
                table.push(vec![text.clone().into(), "normal_form".into(), m.into(), e.into(), s.into()]);
            }
            let name = format!("reconnect_{label}_nf");
            let data = match sink.format {
                Format::Csv => table.to_csv(),
                Format::Json => {
                    let mut s = locus.to_json()?;
                    s.push('\n');
                    s
                }
            };
            let path = write_file(&sink.dir, &format!("{name}.{}", extension(sink.format)), &data)?;
            let params = json!({ "rational": text, "method": "nf", "grid": grid, "cap_energy": DEFAULT_CAP_ENERGY });
            Ok(vec![path, sink.meta(&name, "reconnect", params, json!({}))?])
        }
        Method::Numeric => {
            let energy = energy.or(cfg.f64("E")?).unwrap_or(0.02);
            check_energy_axis(&Axis::new(energy, energy, 1)?, false)?;
            let crossings = max_crossings.or(cfg.usize("max_crossings")?).unwrap_or(2000);
            if crossings < 1000 {
                return Err(usage("--max-crossings must be at least 1000 for rotation numbers"));
            }
            let tol = tol.or(cfg.f64("tol")?).unwrap_or(2e-5);
            if !(tol > 0.0) {
                return Err(usage(format!("--tol must be positive, got {tol}")));
            }
            let bracket = match grid {
                Some(g) => {
                    let v = parse_numbers(&g, "--grid")?;
                    if v.len() != 2 {
                        return Err(usage("--grid for the numeric method needs mu_min,mu_max"));
                    }
                    check_mu_axis(&Axis::new(v[0], v[1], 2)?)?;
                    (v[0], v[1])
                }
                None => {
                    // bracket the normal-form estimate
                    let guess = reconnection_mu_nf(rational, energy, (0.0076, 0.0114))?;
                    (guess - 3e-4, guess + 3e-4)
                }
            };
            let search = ProfileSearch { crossings, ..ProfileSearch::default() };
            let res = reconnection_search_numeric(rational, energy, bracket, tol, &search)?;
            table.push(vec![text.clone().into(), "numeric".into(), res.mu.into(), energy.into(), "ok".into()]);
            let name = stem(&format!("reconnect_{label}_numeric"), None, Some(energy));
            let data = match sink.format {
                Format::Csv => table.to_csv(),
                Format::Json => {
                    let mut s = res.locus().to_json()?;
                    s.push('\n');
                    s
                }
            };
            let path = write_file(&sink.dir, &format!("{name}.{}", extension(sink.format)), &data)?;
            let params = json!({
                "rational": text, "method": "numeric", "E": energy, "bracket": [bracket.0, bracket.1],
                "tol": tol, "search": search,
            });
            let notes = json!({ "w_max": res.w_max, "evaluations": res.evaluations });
            Ok(vec![path, sink.meta(&name, "reconnect", params, notes)?])
        }
    }
}

fn nf(common: &Common, mu: Option<f64>, degree: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
    let cfg = Config::load(common.config.as_deref())?;
    let sink = Sink::new(common, &cfg)?;
    let mu = required_mu(mu, &cfg)?;
    let degree = degree.or(cfg.usize("degree")?).unwrap_or(DEFAULT_DEGREE);
    if !(4..=12).contains(&degree) || degree % 2 == 1 {
        return Err(usage(format!("--degree must be even and in 4..=12, got {degree}")));
    }
    let n = normal_form(mu, degree)?;
    let name = stem("nf", Some(mu), None);
    let data = match sink.format {
        Format::Json => {
            let mut s = n.normal_form.to_json()?;
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut t = Table::new(&["j", "k", "value"]);
            for (&(j, k), &c) in &n.normal_form.coefficients {
                t.push(vec![(j as usize).into(), (k as usize).into(), c.into()]);
            }
            t.to_csv()
        }
    };
    let path = write_file(&sink.dir, &format!("{name}.{}", extension(sink.format)), &data)?;
    let notes = json!({
        "omega_s": n.normal_form.omega_s,
        "omega_l": n.normal_form.omega_l,
        "residual": n.normal_form.residual,
        "imaginary_residue": n.normal_form.imaginary_residue,
    });
    Ok(vec![path, sink.meta(&name, "nf", json!({ "mu": mu, "degree": degree }), notes)?])
}

fn nf_contours(common: &Common, grid: Option<String>) -> Result<Vec<PathBuf>, CliError> {
    let cfg = Config::load(common.config.as_deref())?;
    let sink = Sink::new(common, &cfg)?;
    let grid = grid.or(cfg.string("grid")?).unwrap_or_else(|| "0.0075,0.0115,81,0,0.1,51".into());
    let (mu_axis, energy_axis) = parse_grid(&grid)?;
    check_mu_axis(&mu_axis)?;
    check_energy_axis(&energy_axis, true)?;
    let mut table = Table::new(&["mu", "E", "W", "status"]);
    for mu in mu_axis.values() {
        let nf = normal_form(mu, DEFAULT_DEGREE).map(|n| n.normal_form);
        for e in energy_axis.values() {
            let w = nf.as_ref().map_err(Clone::clone).and_then(|nf| short_period_w_of_e(nf, e));
            let (value, status) = match w {
                Ok(w) => (Some(w), "ok".to_string()),
                Err(err) => (None, err.code().to_string()),
            };
            table.push(vec![mu.into(), e.into(), value.into(), status.into()]);
        }
    }
    let name = "nf_contours";
    let params = json!({ "grid": grid, "degree": DEFAULT_DEGREE });
    Ok(vec![sink.table(name, &table)?, sink.meta(name, "nf-contours", params, json!({}))?])
}

fn chart(common: &Common, mu: Option<f64>, grid: Option<String>, depth: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
    let cfg = Config::load(common.config.as_deref())?;
    let sink = Sink::new(common, &cfg)?;
    let mu = required_mu(mu, &cfg)?;
    let depth = depth.or(cfg.usize("depth")?).unwrap_or(3);
    if depth > 8 {
        return Err(usage(format!("--depth must be at most 8, got {depth}")));
    }
    let grid_text = grid.or(cfg.string("grid")?);
    let nf = normal_form(mu, DEFAULT_DEGREE)?.normal_form;
    let spec = match &grid_text {
        Some(g) => {
            let v = parse_numbers(g, "--grid")?;
            if v.len() != 4 {
                return Err(usage("--grid needs Is_max,Il_max,n_Is,n_Il"));
            }
            GridSpec::new(v[0], v[1], as_count(v[2], "--grid")?, as_count(v[3], "--grid")?)?
        }
        None => {
            let cap = ActionCap::default_for(&nf)?;
            GridSpec::new(cap.is_max, cap.il_max, 61, 61)?
        }
    };
    let dataset = action_action_chart(&nf, &spec, depth)?;
    let name = stem("chart", Some(mu), None);
    let params = json!({ "mu": mu, "grid": [spec.is_max, spec.il_max, spec.n_is, spec.n_il], "depth": depth });
    let mut paths = Vec::new();
    match sink.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_chart_grid_csv(&mut buf, &dataset)?;
            paths.push(write_file(&sink.dir, &format!("{name}_grid.csv"), &String::from_utf8_lossy(&buf))?);
            let mut buf = Vec::new();
            write_chart_lines_csv(&mut buf, &dataset)?;
            paths.push(write_file(&sink.dir, &format!("{name}_lines.csv"), &String::from_utf8_lossy(&buf))?);
        }
        Format::Json => {
            let value = serde_json::to_value(&dataset).map_err(|e| CliError::Compute(e.into()))?;
            paths.push(write_file(&sink.dir, &format!("{name}.json"), &pretty(&value))?);
        }
    }
    paths.push(sink.meta(&name, "chart", params, json!({}))?);
    Ok(paths)
}

fn sweep(common: &Common, grid: Option<String>, tasks: Option<String>, workers: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
    let cfg = Config::load(common.config.as_deref())?;
    let sink = Sink::new(common, &cfg)?;
    let grid = grid.or(cfg.string("grid")?).ok_or_else(|| usage("--grid is required"))?;
    let (mu, energy) = parse_grid(&grid)?;
    let tasks = match tasks.or(cfg.string("tasks")?) {
        None => SweepTask::ALL.to_vec(),
        Some(t) => t.split(',').map(|s| SweepTask::parse(s.trim())).collect::<Result<Vec<_>, _>>()?,
    };
    let workers = workers.or(cfg.usize("workers")?).unwrap_or_else(workers_default);
    let spec = SweepSpec { mu, energy, tasks, workers };
    spec.validate()?;
    let name = "sweep";
    let results: Vec<CellResult> = run_sweep(&spec, &sink.dir.join("sweep_checkpoint.ndjson"))?;
    let path = match sink.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_sweep_csv(&mut buf, &results)?;
            write_file(&sink.dir, "sweep.csv", &String::from_utf8_lossy(&buf))?
        }
        Format::Json => {
            let value = serde_json::to_value(&results).map_err(|e| CliError::Compute(e.into()))?;
            write_file(&sink.dir, "sweep.json", &pretty(&value))?
        }
    };
    let params = json!({ "grid": grid, "tasks": spec.tasks.iter().map(|t| t.label()).collect::<Vec<_>>() });
    // worker count does not change the data, so it only goes in the sidecar
    Ok(vec![path, sink.meta(name, "sweep", params, json!({ "workers": workers }))?])
}
