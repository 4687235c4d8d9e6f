use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use mixlab_core::measures::{tv_distance, Grid, GridDensity};
use mixlab_core::mixing::{
    certify_coupling, certify_recurrence, decay_curve, estimate_stationary, fit_rate, minorizing_measure,
    verify_domination, CouplingConfig, DecayConfig, DominationConfig, MinorizingConfig, RecurrenceConfig,
    StationaryConfig,
};
use mixlab_core::noise::MarkovKernel;
use mixlab_core::pushforward::{pushforward_density, KernelDensity, PushforwardConfig, SystemStep};
use mixlab_core::reduction::{
    law_equality_test, simulate_extended, ExtendedState, LawEqualityConfig, NoiseModel, DEFAULT_SPACING,
    MAX_LAW_HORIZON,
};
use mixlab_core::rng::{child_seed, stream, Purpose};
use mixlab_core::{Error, RdsSystem};

use crate::config::{Command, ConfigError, RunConfig};
use crate::report::{emit_plotdata, write_manifest, IoError, OutDir, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERIC: i32 = 1;
pub const EXIT_CERTIFICATE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

/// Trajectories written out in full by `simulate`.
const SHOWN_PATHS: usize = 10;
/// Monte-Carlo samples per parallel chunk.
const CHUNK: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{stage}: {source}")]
    Numeric { stage: String, source: Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Io(_) | RunError::Numeric { .. } => EXIT_NUMERIC,
        }
    }
}

/// Errors that report a refuted hypothesis rather than a broken computation.
fn is_refutation(e: &Error) -> bool {
    matches!(
        e,
        Error::MinorizationFails { .. }
            | Error::EmptyMinorization
            | Error::CertificateContradicted(_)
            | Error::BudgetExceeded { .. }
            | Error::NotDissipative { .. }
            | Error::SurjectivityLost { .. }
    )
}

struct Ctx {
    cfg: RunConfig,
    sys: RdsSystem,
    kernel: std::sync::Arc<dyn MarkovKernel>,
    model: NoiseModel,
    out: OutDir,
    stages: BTreeMap<String, f64>,
    verdicts: BTreeMap<String, String>,
    results: BTreeMap<String, f64>,
    notes: BTreeMap<String, String>,
    rate_fit: Option<String>,
    numeric_failure: bool,
}

impl Ctx {
    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&Self) -> T) -> T {
        let t = Instant::now();
        let r = f(self);
        let secs = t.elapsed().as_secs_f64();
        log::info!("{stage}: {secs:.2} s");
        self.stages.insert(stage.to_string(), secs);
        r
    }

    fn verdict(&mut self, name: &str, pass: bool) {
        self.verdicts.insert(name.to_string(), if pass { "pass" } else { "fail" }.to_string());
    }

    /// Records a stage error: a refutation fails the certificate, anything
    /// else marks the run as numerically failed.
    fn failed(&mut self, name: &str, e: &Error) {
        log::warn!("{name}: {e}");
        self.notes.insert(name.to_string(), e.to_string());
        if is_refutation(e) {
            self.verdict(name, false);
        } else {
            self.verdicts.insert(name.to_string(), "error".to_string());
            self.numeric_failure = true;
        }
    }

    fn start_state(&self) -> Vec<f64> {
        self.cfg.start.state.clone().unwrap_or_else(|| self.sys.invariant_set().bounding_box().hi().to_vec())
    }

    fn cells(&self, default: usize) -> usize {
        self.cfg.grid.cells.unwrap_or(default)
    }

    fn numeric(stage: &str) -> impl FnOnce(Error) -> RunError + '_ {
        move |source| RunError::Numeric { stage: stage.to_string(), source }
    }
}

/// Runs `cfg` and writes the CSV reports and `manifest.toml` into
/// `out_dir`. Returns the exit status.
pub fn run(cfg: RunConfig, out_dir: PathBuf) -> Result<i32, RunError> {
    cfg.validate()?;
    if cfg.command == Command::ReduceCheck && cfg.ensemble.horizon > MAX_LAW_HORIZON {
        return Err(ConfigError::Invalid(format!("reduce-check needs horizon ≤ {MAX_LAW_HORIZON}")).into());
    }
    let mut ctx = Ctx {
        sys: cfg.system()?,
        kernel: cfg.kernel()?,
        model: cfg.noise_model()?,
        out: OutDir::create(&out_dir)?,
        cfg,
        stages: BTreeMap::new(),
        verdicts: BTreeMap::new(),
        results: BTreeMap::new(),
        notes: BTreeMap::new(),
        rate_fit: None,
        numeric_failure: false,
    };
    log::info!("{} on {} + {}", ctx.cfg.command.name(), ctx.sys.name(), ctx.model.name());
    let outcome = match ctx.cfg.command {
        Command::Simulate => simulate(&mut ctx),
        Command::ReduceCheck => reduce_check(&mut ctx),
        Command::Mixing => mixing(&mut ctx),
        Command::Certify => certify(&mut ctx),
        Command::PushforwardCheck => pushforward_check(&mut ctx),
    };
    let code = match outcome {
        Ok(()) if ctx.numeric_failure => EXIT_NUMERIC,
        Ok(()) if ctx.verdicts.values().any(|v| v == "fail") => EXIT_CERTIFICATE,
        Ok(()) => EXIT_OK,
        Err(RunError::Numeric { stage, source }) => {
            ctx.notes.insert(stage.clone(), source.to_string());
            log::error!("{stage}: {source}");
            EXIT_NUMERIC
        }
        Err(e) => return Err(e),
    };
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        exit_code: code,
        config: ctx.cfg.clone(),
        stages: ctx.stages,
        verdicts: ctx.verdicts,
        results: ctx.results,
        notes: ctx.notes,
        rate_fit: ctx.rate_fit,
        files: ctx.out.files().to_vec(),
    };
    write_manifest(&manifest, ctx.out.root())?;
    Ok(code)
}

fn simulate(ctx: &mut Ctx) -> Result<(), RunError> {
    let (n, horizon, seed) = (ctx.cfg.ensemble.n, ctx.cfg.ensemble.horizon, ctx.cfg.seed);
    let u0 = ctx.start_state();
    let paths = ctx.timed("simulate", |c| {
        let starts = c.model.harvest(n, DEFAULT_SPACING, child_seed(seed, 1), false)?;
        let base = child_seed(seed, 2);
        starts
            .into_par_iter()
            .enumerate()
            .map(|(i, noise)| {
                let x0 = ExtendedState { state: u0.clone(), noise };
                let mut path = vec![x0.clone()];
                path.extend(simulate_extended(&c.sys, &c.model, &x0, horizon, child_seed(base, i as u64))?);
                Ok(path)
            })
            .collect::<Result<Vec<_>, Error>>()
    });
    let paths = paths.map_err(Ctx::numeric("simulate"))?;
    let d = ctx.sys.dim_state();
    let mut summary = String::from("k,axis,mean,sd,q05,q50,q95\n");
    for k in 0..=horizon {
        for axis in 0..d {
            let mut xs: Vec<f64> = paths.iter().map(|p| p[k].state[axis]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
            xs.sort_by(f64::total_cmp);
            let q = |p: f64| xs[((p * (n - 1) as f64).round() as usize).min(n - 1)];
            summary.push_str(&format!("{k},{axis},{mean},{},{},{},{}\n", var.sqrt(), q(0.05), q(0.5), q(0.95)));
        }
    }
    ctx.out.write("simulate.csv", summary.as_bytes())?;
    let e = ctx.sys.dim_noise();
    let mut shown = String::from("path,k");
    (0..d).for_each(|j| shown.push_str(&format!(",u{j}")));
    (0..e).for_each(|j| shown.push_str(&format!(",eta{j}")));
    shown.push('\n');
    for (i, p) in paths.iter().take(SHOWN_PATHS).enumerate() {
        for (k, u) in p.iter().enumerate() {
            shown.push_str(&format!("{i},{k}"));
            u.state.iter().chain(u.noise.latest()).for_each(|x| shown.push_str(&format!(",{x}")));
            shown.push('\n');
        }
    }
    ctx.out.write("paths.csv", shown.as_bytes())?;
    Ok(())
}

fn reduce_check(ctx: &mut Ctx) -> Result<(), RunError> {
    let lcfg = LawEqualityConfig {
        horizon_k: ctx.cfg.ensemble.horizon,
        ensemble_n: ctx.cfg.ensemble.n,
        cells: ctx.cells(40),
        seed: ctx.cfg.seed,
        ..Default::default()
    };
    let u0 = ctx.start_state();
    let rep = ctx
        .timed("law_equality", |c| law_equality_test(&c.sys, &c.model, &u0, &lcfg))
        .map_err(Ctx::numeric("law_equality"))?;
    ctx.out.write_with("law.csv", |w| rep.write_csv(w))?;
    for r in &rep.rows {
        ctx.results.insert(format!("law_tv_k{}", r.k), r.tv);
    }
    ctx.verdict("law_equality", rep.passed());
    Ok(())
}

fn mixing(ctx: &mut Ctx) -> Result<(), RunError> {
    let seed = ctx.cfg.seed;
    let scfg = StationaryConfig { cells: ctx.cells(256), seed: child_seed(seed, 1), ..Default::default() };
    let est = ctx
        .timed("stationary", |c| estimate_stationary(&c.sys, &c.model, &scfg))
        .map_err(Ctx::numeric("stationary"))?;
    ctx.out.write_with("stationary.csv", |w| est.marginals[0].write_csv(w))?;
    let dcfg = DecayConfig {
        horizon: ctx.cfg.ensemble.horizon,
        ensemble_n: ctx.cfg.ensemble.n,
        seed: child_seed(seed, 2),
        ..Default::default()
    };
    let u0 = ctx.start_state();
    let curve = ctx
        .timed("decay", |c| decay_curve(&c.sys, &c.model, &u0, &est.marginals[0], &dcfg))
        .map_err(Ctx::numeric("decay"))?;
    ctx.out.write_with("decay.csv", |w| curve.write_csv(w))?;
    ctx.results.insert("noise_floor".into(), curve.noise_floor);
    let fit = fit_rate(&curve);
    let worst = emit_plotdata(&curve, fit.as_ref().ok(), &mut ctx.out, "decay")?;
    match fit {
        Ok(fit) => {
            ctx.rate_fit = Some(fit.to_text());
            ctx.results.insert("gamma_fit".into(), fit.gamma_fit);
            ctx.results.insert("c_fit".into(), fit.c_fit);
            ctx.results.insert("r_squared".into(), fit.r_squared);
            ctx.results.insert("max_abs_residual".into(), worst);
        }
        Err(e) => ctx.failed("rate_fit", &e),
    }
    Ok(())
}

fn certify(ctx: &mut Ctx) -> Result<(), RunError> {
    let seed = ctx.cfg.seed;
    let n = ctx.cfg.ensemble.n;
    let cc = ctx.cfg.certify.clone();
    let mut rows = String::from("certificate,verdict,value,bound\n");

    let rcfg = RecurrenceConfig { trials: n, seed: child_seed(seed, 1), ..Default::default() };
    let (radius, budget) = (cc.radius.unwrap_or(1.0), cc.budget.unwrap_or(50));
    match ctx.timed("recurrence", |c| certify_recurrence(&c.sys, &c.kernel, radius, budget, &rcfg)) {
        Ok(r) => {
            ctx.results.insert("p_bound".into(), r.p_bound);
            ctx.results.insert("recurrence_steps".into(), r.m_steps as f64);
            ctx.results.insert("mc_hitting_frequency".into(), r.mc_frequency);
            ctx.verdict("recurrence", true);
            rows.push_str(&format!("recurrence,pass,{},{}\n", r.mc_frequency, r.p_bound));
        }
        Err(e) => {
            ctx.failed("recurrence", &e);
            rows.push_str("recurrence,fail,,\n");
        }
    }

    let mm = ctx.timed("minorization", |c| minorizing_measure(&c.sys, &c.kernel, &MinorizingConfig::default()));
    let mm = match mm {
        Ok(mm) => {
            ctx.results.insert("epsilon".into(), mm.mass);
            ctx.results.insert("delta".into(), mm.delta);
            ctx.results.insert("gamma".into(), mm.gamma);
            ctx.results.insert("envelope_mass".into(), mm.envelope_mass);
            ctx.verdict("minorization", true);
            rows.push_str(&format!("minorization,pass,{},0\n", mm.mass));
            Some(mm)
        }
        Err(e) => {
            ctx.failed("minorization", &e);
            rows.push_str("minorization,fail,,\n");
            None
        }
    };

    if let Some(mm) = mm {
        let dcfg = DominationConfig {
            probes: cc.probes.unwrap_or(20),
            samples: cc.probe_samples.unwrap_or(n),
            seed: child_seed(seed, 2),
        };
        match ctx.timed("domination", |c| verify_domination(&c.sys, &c.kernel, &mm, &dcfg)) {
            Ok(d) => {
                ctx.results.insert("domination_worst_margin".into(), d.worst_margin());
                ctx.verdict("domination", d.passed());
                let verdict = if d.passed() { "pass" } else { "fail" };
                rows.push_str(&format!("domination,{verdict},{},0\n", d.worst_margin()));
            }
            Err(e) => {
                ctx.failed("domination", &e);
                rows.push_str("domination,fail,,\n");
            }
        }
        let ccfg = CouplingConfig {
            ball_radius: mm.delta,
            pairs: cc.pairs.unwrap_or(50),
            ensemble_n: n,
            seed: child_seed(seed, 3),
            ..Default::default()
        };
        let eps = mm.mass.min(1.0 - 1e-12);
        match ctx.timed("coupling", |c| certify_coupling(&c.sys, &c.kernel, eps, &ccfg)) {
            Ok(cert) => {
                ctx.results.insert("worst_pair_tv".into(), cert.worst_pair_tv);
                ctx.verdict("coupling", true);
                rows.push_str(&format!("coupling,pass,{},{}\n", cert.worst_pair_tv, 1.0 - eps + cert.worst_band_hi));
            }
            Err(e) => {
                ctx.failed("coupling", &e);
                rows.push_str("coupling,fail,,\n");
            }
        }
    } else {
        for name in ["domination", "coupling"] {
            ctx.verdicts.insert(name.into(), "skipped".into());
            rows.push_str(&format!("{name},skipped,,\n"));
        }
    }
    ctx.out.write("certificates.csv", rows.as_bytes())?;
    Ok(())
}

fn pushforward_check(ctx: &mut Ctx) -> Result<(), RunError> {
    let d = ctx.sys.dim_state();
    let v = ctx.cfg.start.state.clone().unwrap_or_else(|| ctx.sys.invariant_set().bounding_box().center());
    let xi = ctx.cfg.start.noise.clone().unwrap_or_else(|| ctx.kernel.support().center());
    let default_cells = if d == 1 { 128 } else { 32 };
    let grid = Grid::uniform(ctx.sys.invariant_set().bounding_box(), ctx.cells(default_cells))
        .map_err(Ctx::numeric("pushforward"))?;
    let mut param = v.clone();
    param.extend_from_slice(&xi);
    let map = SystemStep::new(ctx.sys.clone(), 1.0);
    let lam = KernelDensity::new(ctx.kernel.clone(), d);
    let g = ctx
        .timed("pushforward", |_| pushforward_density(&map, &lam, &param, &grid, &PushforwardConfig::default()))
        .map_err(Ctx::numeric("pushforward"))?;
    let n = ctx.cfg.ensemble.n;
    let seed = ctx.cfg.seed;
    let counts = ctx
        .timed("monte_carlo", |c| {
            let chunks = n.div_ceil(CHUNK);
            (0..chunks)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream(seed, Purpose::Trajectory, i as u64);
                    let mut counts = vec![0u64; grid.len()];
                    for _ in i * CHUNK..((i + 1) * CHUNK).min(n) {
                        let z = c.kernel.sample(&xi, &mut rng)?;
                        let cell = grid.locate(&c.sys.apply(&v, &z)).ok_or(Error::SampleOutOfBox { index: i })?;
                        counts[cell] += 1;
                    }
                    Ok(counts)
                })
                .collect::<Result<Vec<_>, Error>>()
        })
        .map_err(Ctx::numeric("monte_carlo"))?;
    let mut total = vec![0u64; grid.len()];
    for c in counts {
        total.iter_mut().zip(c).for_each(|(t, x)| *t += x);
    }
    let mc: Vec<f64> = total.iter().map(|&c| c as f64 / n as f64).collect();
    let mc = GridDensity::from_masses(grid.clone(), &mc).map_err(Ctx::numeric("monte_carlo"))?;
    let tv = tv_distance(&g.density, &mc).map_err(Ctx::numeric("monte_carlo"))?;
    // mean TV of an n-sample histogram from its own law, at most
    let allowance = 0.5 * (2.0 / std::f64::consts::PI).sqrt() * (grid.len() as f64 / n as f64).sqrt();
    ctx.results.insert("tv".into(), tv);
    ctx.results.insert("tv_allowance".into(), 2e-2 + allowance);
    ctx.results.insert("mass_defect".into(), g.mass_defect);
    ctx.verdict("pushforward", tv <= 2e-2 + allowance && g.mass_defect <= 1e-3);
    let mut csv = String::from("cell");
    (0..d).for_each(|j| csv.push_str(&format!(",x{j}")));
    csv.push_str(",density_mass,mc_mass\n");
    let (gm, mm) = (g.density.masses(), mc.masses());
    for i in 0..grid.len() {
        csv.push_str(&i.to_string());
        grid.center(i).iter().for_each(|x| csv.push_str(&format!(",{x}")));
        csv.push_str(&format!(",{},{}\n", gm[i], mm[i]));
    }
    ctx.out.write("pushforward.csv", csv.as_bytes())?;
    Ok(())
}
