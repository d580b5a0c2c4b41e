//! Command-line driver: JSON experiment configs in, CSV and JSON artifacts out.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::admissible::{schrodinger_rho, AdmissibleFn, Potential, PotentialSpec};
use crate::counterexample::{
    blo_divergence, bmo_boundedness_scan, max_feasible_m, psi_lower_star_u, solve_rk,
    solve_rk_bisection, verify_shape, ScanSpec,
};
use crate::error::{Error, Result};
use crate::functions::{default_suite, evaluate_suite, FunctionSpec};
use crate::geometry::{
    annular_decay_certificate, chain_ball_construct, lattice_resolver, monotone_geodesic_certificate,
    p_tau_cross_check, trace_growth_holds, weak_geodesic_certificate, AnnularSampling,
    ChainBallWitness, GeodesicCertificate, GeodesicStatus, WeakGeodesicSampling,
};
use crate::kernels::{decay_certificate, verify_decay_certificate, DecaySampling, KernelFamily, ScaleGridSpec};
use crate::norms::{blo_rho_norm, bmo_rho_norm, BallFamily, FamilySpec};
use crate::space::{doubling_certificate, Ball, DiscreteSpace, SpaceSpec, DEFAULT_RADIUS_COUNT};
use crate::sqfun::{domination, l2_norm, lambda_sweep, boundedness_experiment, ScaleData};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Norms,
    Squarefn,
    Bounds,
    Counterexample,
    Geometry,
    CertifyKernels,
}

#[derive(Debug, Parser)]
#[command(name = "locbmo", version, about = "Localized BMO/BLO and square-function experiments")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Replaces the seed of every random suite member.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhoSpec {
    Constant { value: f64 },
    /// The auxiliary function of the potential.
    Schrodinger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryParams {
    pub annular: AnnularSampling,
    pub weak: WeakGeodesicSampling,
    pub c4: f64,
    /// s values of the monotone check, in spacings.
    pub monotone_s_spacings: Vec<f64>,
    pub monotone_center_budget: usize,
    /// Base-ball radii of the chain construction, in spacings.
    pub chain_radii_spacings: Vec<f64>,
    pub chain_center_budget: usize,
    pub tau: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            annular: AnnularSampling::default(),
            weak: WeakGeodesicSampling::default(),
            c4: 2.0,
            monotone_s_spacings: vec![1.0, 2.0, 4.0],
            monotone_center_budget: 8,
            chain_radii_spacings: vec![9.5, 12.5, 15.5],
            chain_center_budget: 3,
            tau: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub q: Vec<f64>,
    /// Lambda values for the square functions; defaults to the sweep
    /// `{n+1, 2n, 3n+1, 4n}`.
    pub lambda_list: Option<Vec<f64>>,
    pub m_list: Vec<u32>,
    /// Inclusive range of critical-radius indices.
    pub k_range: [u32; 2],
    pub shape_samples: usize,
    pub scan: Option<ScanSpec>,
    pub decay: DecaySampling,
    pub geometry: GeometryParams,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            q: vec![1.0, 2.0],
            lambda_list: None,
            m_list: (1..=8).collect(),
            k_range: [2, 20],
            shape_samples: 1000,
            scan: Some(ScanSpec::default()),
            decay: DecaySampling::default(),
            geometry: GeometryParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_space")]
    pub space: SpaceSpec,
    #[serde(default = "default_potential")]
    pub potential: PotentialSpec,
    #[serde(default = "default_rho")]
    pub rho: RhoSpec,
    #[serde(default)]
    pub scale_grid: ScaleGridSpec,
    #[serde(default)]
    pub family: FamilySpec,
    #[serde(default = "default_suite")]
    pub suite: Vec<FunctionSpec>,
    #[serde(default)]
    pub params: Params,
}

fn default_space() -> SpaceSpec {
    SpaceSpec::lebesgue(1, 4.0, 0.01)
}

fn default_potential() -> PotentialSpec {
    PotentialSpec::Constant { value: 1.0 }
}

fn default_rho() -> RhoSpec {
    RhoSpec::Constant { value: 1.0 }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            space: default_space(),
            potential: default_potential(),
            rho: default_rho(),
            scale_grid: ScaleGridSpec::default(),
            family: FamilySpec::default(),
            suite: default_suite(),
            params: Params::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config {
                path: "schema_version".into(),
                message: format!("unsupported version {}, expected {SCHEMA_VERSION}", cfg.schema_version),
            });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.suite = self.suite.iter().map(|f| f.with_seed(seed)).collect();
        self
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Writes CSV files that start with a `# config_hash=` comment line.
struct Artifacts {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path, hash: String) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf(), hash, written: Vec::new() })
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let path = self.dir.join(name);
        let mut file = File::create(&path)?;
        writeln!(file, "# config_hash={}", self.hash)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header).map_err(std::io::Error::other)?;
        for row in rows {
            w.write_record(&row).map_err(std::io::Error::other)?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        let body = serde_json::json!({ "config_hash": self.hash, "data": value });
        fs::write(&path, serde_json::to_string_pretty(&body).map_err(std::io::Error::other)?)?;
        self.written.push(path);
        Ok(())
    }
}

fn s<T: ToString>(v: T) -> String {
    v.to_string()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn build_rho(cfg: &ExperimentConfig, space: &DiscreteSpace) -> Result<AdmissibleFn> {
    match cfg.rho {
        RhoSpec::Constant { value } => AdmissibleFn::constant(space, value),
        RhoSpec::Schrodinger => {
            let v = Potential::from_spec(space, &cfg.potential)?;
            schrodinger_rho(space, &v, &space.radius_grid(DEFAULT_RADIUS_COUNT))
        }
    }
}

fn build_kernels(cfg: &ExperimentConfig, space: &DiscreteSpace) -> Result<KernelFamily> {
    let v = Potential::from_spec(space, &cfg.potential)?;
    KernelFamily::for_space(space, &v, &cfg.scale_grid)
}

fn lambdas(cfg: &ExperimentConfig, n: f64) -> Vec<f64> {
    cfg.params.lambda_list.clone().unwrap_or_else(|| lambda_sweep(n))
}

/// Runs one command and returns the paths it wrote.
pub fn run(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut art = Artifacts::new(out, cfg.hash())?;
    match command {
        Command::Norms => run_norms(cfg, &mut art)?,
        Command::Squarefn => run_squarefn(cfg, &mut art)?,
        Command::Bounds => run_bounds(cfg, &mut art)?,
        Command::Counterexample => run_counterexample(cfg, &mut art)?,
        Command::Geometry => run_geometry(cfg, &mut art)?,
        Command::CertifyKernels => run_certify_kernels(cfg, &mut art)?,
    }
    Ok(art.written)
}

fn run_norms(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let space = cfg.space.build()?;
    let rho = build_rho(cfg, &space)?;
    let family = BallFamily::enumerate(&space, &rho, &cfg.family);
    let needs_family = cfg.suite.iter().any(|f| matches!(f, FunctionSpec::Eigenvector { .. }));
    let kernels = if needs_family { Some(build_kernels(cfg, &space)?) } else { None };
    let suite = evaluate_suite(&space, &cfg.suite, kernels.as_ref())?;
    let header = ["function", "q", "oscillation_part", "local_part", "total", "max_part"];
    let (mut bmo_rows, mut blo_rows) = (Vec::new(), Vec::new());
    for (id, f) in &suite {
        for &q in &cfg.params.q {
            let b = bmo_rho_norm(&space, f, q, &family)?;
            bmo_rows.push(vec![id.clone(), s(q), s(b.oscillation_part), s(b.local_part), s(b.total), s(b.max_part())]);
            let l = blo_rho_norm(&space, f, q, &family)?;
            blo_rows.push(vec![id.clone(), s(q), s(l.oscillation_part), s(l.local_part), s(l.total), s(l.max_part())]);
        }
    }
    art.csv("bmo_norms.csv", &header, bmo_rows)?;
    art.csv("blo_norms.csv", &header, blo_rows)
}

fn run_squarefn(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let space = cfg.space.build()?;
    let kernels = build_kernels(cfg, &space)?;
    let suite = evaluate_suite(&space, &cfg.suite, Some(&kernels))?;
    let n = space.dim() as f64;
    let lams = lambdas(cfg, n);
    let vt = crate::sqfun::scale_volumes(&space, &kernels);
    let xs = space.abscissae();
    let mut values = Vec::new();
    let mut summary = Vec::new();
    for (id, f) in &suite {
        let data = ScaleData::with_volumes(&space, &kernels, f, vt.clone())?;
        let g = data.g();
        let area = data.lusin_area();
        for &lam in &lams {
            let gl = data.g_lambda_star(lam)?;
            let dom = domination(&area, &gl);
            let g2 = l2_norm(&space, &g.values);
            summary.push(vec![
                id.clone(),
                s(lam),
                s(g2),
                s(l2_norm(&space, &area.values)),
                s(l2_norm(&space, &gl.values)),
                s(if g2 > 0.0 { l2_norm(&space, &gl.values) / g2 } else { 0.0 }),
                s(dom.max_excess),
                s(dom.violations),
            ]);
            for (i, x) in xs.iter().enumerate() {
                values.push(vec![id.clone(), s(lam), s(x), s(g.values[i]), s(area.values[i]), s(gl.values[i])]);
            }
        }
    }
    art.csv("squarefn_values.csv", &["function", "lambda", "x", "g", "s", "g_lambda_star"], values)?;
    art.csv(
        "squarefn_summary.csv",
        &["function", "lambda", "g_l2", "s_l2", "g_lambda_l2", "g_lambda_over_g", "max_s_minus_g_lambda", "violations"],
        summary,
    )
}

fn run_bounds(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let space = cfg.space.build()?;
    let rho = build_rho(cfg, &space)?;
    let balls = BallFamily::enumerate(&space, &rho, &cfg.family);
    let kernels = build_kernels(cfg, &space)?;
    let suite = evaluate_suite(&space, &cfg.suite, Some(&kernels))?;
    let n = space.dim() as f64;
    let lams = lambdas(cfg, n);
    let table = boundedness_experiment(&space, &kernels, &balls, &suite, &lams, n)?;
    let header = ["function", "lambda", "norm_kind", "numerator", "denominator", "ratio", "outside_hypothesis"];
    let row = |r: &crate::sqfun::ExperimentRow| {
        vec![
            r.function_id.clone(),
            opt(r.lambda),
            s(r.norm_kind),
            s(r.numerator),
            s(r.denominator),
            s(r.ratio),
            s(r.outside_hypothesis),
        ]
    };
    let primary = 3.0 * n + 1.0;
    let main: Vec<Vec<String>> = table
        .rows
        .iter()
        .filter(|r| r.lambda.is_none_or(|l| l == primary))
        .map(row)
        .collect();
    let sweep: Vec<Vec<String>> = table.rows.iter().filter(|r| r.lambda.is_some()).map(row).collect();
    art.csv("bounds.csv", &header, main)?;
    art.csv("bounds_lambda_sweep.csv", &header, sweep)?;
    art.csv(
        "bounds_skipped.csv",
        &["function", "reason"],
        table.skipped.iter().map(|id| vec![id.clone(), s("zero bmo norm")]).collect(),
    )
}

fn run_counterexample(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let p = &cfg.params;
    let (rows, skipped) = blo_divergence(&p.m_list);
    let mut div: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                s(r.m),
                s(r.log2_r_8m3),
                s(r.interval_average),
                s(r.lower_bound),
                s(r.ratio),
                s(r.quadrature_error),
                String::new(),
            ]
        })
        .collect();
    for (m, why) in skipped {
        div.push(vec![s(m), String::new(), String::new(), String::new(), String::new(), String::new(), why]);
    }
    art.csv(
        "divergence.csv",
        &["m", "log2_r_8m3", "interval_average", "lower_bound", "ratio", "quadrature_error", "skipped"],
        div,
    )?;

    let mut shape = Vec::new();
    let feasible = max_feasible_m();
    for &m in p.m_list.iter().filter(|&&m| m <= feasible) {
        let r = verify_shape(m, p.shape_samples)?;
        shape.push(vec![
            s(m),
            s(r.samples),
            s(r.min_fg),
            s(r.min_first_derivative),
            s(r.max_second_derivative),
            s(r.endpoint_value),
            s(r.endpoint_expected),
            s(r.endpoint_rel_error),
        ]);
    }
    art.csv(
        "shape.csv",
        &["m", "samples", "min_fg", "min_x_dfg", "max_x2_d2fg", "endpoint", "endpoint_expected", "endpoint_rel_error"],
        shape,
    )?;

    let mut radii = Vec::new();
    for k in p.k_range[0]..=p.k_range[1] {
        let c = solve_rk(k)?;
        let target = std::f64::consts::FRAC_PI_4 * k as f64;
        let residual = psi_lower_star_u(c.u) - target;
        let u_quad = solve_rk_bisection(k)?;
        radii.push(vec![s(k), s(c.u), s(c.log2_r), s(c.r), s(residual), s(u_quad), s((u_quad - c.u).abs() / c.u)]);
    }
    art.csv(
        "critical_radii.csv",
        &["k", "u", "log2_r", "r", "residual", "u_quadrature", "u_rel_diff"],
        radii,
    )?;

    if let Some(scan) = &p.scan {
        let rep = bmo_boundedness_scan(scan)?;
        let rows = rep
            .levels
            .iter()
            .map(|l| vec![s(l.spacing), s(l.bmo), s(l.blo), s(l.blo_extended), s(l.composition_violations)])
            .collect();
        art.csv("bmo_scan.csv", &["spacing", "bmo", "blo", "blo_extended", "composition_violations"], rows)?;
    }
    Ok(())
}

fn status_str(c: &GeodesicCertificate) -> &'static str {
    match c.status {
        GeodesicStatus::Holds => "holds",
        GeodesicStatus::Fails { .. } => "fails",
    }
}

fn run_geometry(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let g = &cfg.params.geometry;
    let space = cfg.space.build()?;
    let h = space.spacing();
    let mut rows = Vec::new();

    let c1 = doubling_certificate(&space, &[2.0])?.c1;
    rows.push(vec![s("doubling"), s(c1), String::new(), s("holds"), String::new()]);

    let annular = annular_decay_certificate(&space, &g.annular)?;
    let worst = annular.worst_triple.map(|t| format!("x={} r={} s={}", t.x, t.r, t.s));
    rows.push(vec![s("annular_decay"), s(annular.k_const), s(annular.delta), s("holds"), opt(worst)]);

    let cross = p_tau_cross_check(&space, &g.annular, g.tau, c1)?;
    rows.push(vec![
        s("p_tau_converted"),
        s(cross.converted),
        s(cross.direct.delta),
        s(if cross.dominates { "holds" } else { "fails" }),
        format!("tau={} c_p_tau={} direct_k={}", cross.tau, cross.c_p_tau, cross.direct.k_const),
    ]);

    let weak = weak_geodesic_certificate(&space, &g.weak)?;
    let weak_note = if weak.trivial { "trivial" } else { "" };
    rows.push(vec![s("weak_geodesic"), s(weak.constant), String::new(), s(status_str(&weak)), s(weak_note)]);
    art.json("weak_geodesic.json", &weak)?;

    let s_values: Vec<f64> = g.monotone_s_spacings.iter().map(|k| k * h).collect();
    let mono = monotone_geodesic_certificate(&space, g.c4, &s_values, g.monotone_center_budget)?;
    rows.push(vec![s("monotone_geodesic"), s(mono.constant), String::new(), s(status_str(&mono)), String::new()]);
    art.json("monotone_geodesic.json", &mono)?;

    // chain balls around sampled centers, every member as target
    let mut witnesses: Vec<ChainBallWitness> = Vec::new();
    let (mut built, mut failed, mut growth_ok, mut max_k) = (0usize, Vec::new(), true, 0usize);
    for z in space.center_sample(g.chain_center_budget) {
        for &m in &g.chain_radii_spacings {
            let base = Ball::new(z, m * h);
            for x in space.members(&base, false) {
                match chain_ball_construct(&space, base, x, g.c4, lattice_resolver(&space, g.c4, h)) {
                    Ok(w) => {
                        built += 1;
                        growth_ok &= trace_growth_holds(&w.t_values, g.c4);
                        if w.k() > max_k {
                            max_k = w.k();
                            witnesses.push(w);
                        }
                    }
                    Err(e) => failed.push(format!("z={z} r={} x={x}: {e}", base.radius)),
                }
            }
        }
    }
    rows.push(vec![
        s("chain_ball"),
        format!("{}", 4.0 * g.c4 / 3.0),
        format!("{}", 4.0 / 3.0),
        s(if failed.is_empty() && growth_ok { "holds" } else { "fails" }),
        format!("built={built} failed={} max_k={max_k} growth={growth_ok}", failed.len()),
    ]);
    art.json("chain_ball_witnesses.json", &serde_json::json!({ "longest": witnesses, "failures": failed }))?;

    art.csv("certificates.csv", &["property", "constant", "exponent", "status", "witness"], rows)
}

fn run_certify_kernels(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let space = cfg.space.build()?;
    let rho = build_rho(cfg, &space)?;
    let kernels = build_kernels(cfg, &space)?;
    let cert = decay_certificate(&space, &kernels, &rho, &cfg.params.decay)?;
    let violations = verify_decay_certificate(&space, &kernels, &rho, &cert);
    let mut rows = Vec::new();
    for c in &cert.size_table {
        rows.push(vec![s("size"), s(c.gamma), s(c.delta1), String::new(), s(c.c)]);
    }
    for c in &cert.mass_table {
        rows.push(vec![s("mass"), String::new(), String::new(), s(c.delta2), s(c.c)]);
    }
    art.csv("kernel_certificates.csv", &["condition", "gamma", "delta1", "delta2", "constant"], rows)?;
    art.csv(
        "kernel_summary.csv",
        &["c_i", "gamma", "delta1", "c_ii", "delta2", "max_multiplier", "rows_sampled", "violations"],
        vec![vec![
            s(cert.c_i),
            s(cert.gamma),
            s(cert.delta1),
            s(cert.c_ii),
            s(cert.delta2),
            s(kernels.max_multiplier()),
            s(cert.sample.len()),
            s(violations),
        ]],
    )
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool already configured: {e}");
        }
    }
    let outcome = ExperimentConfig::load(&cli.config).and_then(|cfg| {
        let cfg = match cli.seed {
            Some(seed) => cfg.with_seed(seed),
            None => cfg,
        };
        run(cli.command, &cfg, &cli.out)
    });
    match outcome {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
