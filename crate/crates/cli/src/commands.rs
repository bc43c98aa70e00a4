use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lidar_restore::cda::{run_cda, CdaConfig, CdaTrace};
use lidar_restore::io::{read_cube, read_image, write_cube, write_image};
use lidar_restore::mcmc::{run_mcmc, trace_csv, McmcConfig};
use lidar_restore::metrics::{self, evaluate, evaluate_by_level, pct_nonempty, EvalContext, EvalReport, Truth};
use lidar_restore::model::{
    alpha_per_m, fit_impulse, ml0_estimates, synthesize_cube, xcorr_baseline, ImpulseModel, PhotonCube,
    SceneImages,
};
use lidar_restore::scene::{staircase_scene, Acquisition, GroundTruthScene};
use lidar_restore::Image;

use crate::config::RunConfig;
use crate::{CliError, EvalArgs, FitIrfArgs, RestoreArgs, SynthArgs};

const DEFAULT_C1: f64 = 1000.0;
const DEFAULT_SIGMA2: f64 = 100.0;
const DEFAULT_BG: f64 = 1.0;

fn base_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

fn write_text(path: PathBuf, text: &str) -> Result<(), CliError> {
    fs::write(&path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn irf_from(cfg: &RunConfig) -> Result<ImpulseModel, CliError> {
    Ok(ImpulseModel::new(
        cfg.f64_or("c1", DEFAULT_C1),
        cfg.f64_or("sigma2", DEFAULT_SIGMA2),
        cfg.f64_or("alpha", 0.0),
    )?)
}

pub fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&a.config)?;
    cfg.set_opt("scene", a.scene)?;
    cfg.set_opt("rows", a.rows)?;
    cfg.set_opt("cols", a.cols)?;
    cfg.set_opt("bins", a.bins)?;
    cfg.set_opt("depth", a.depth)?;
    cfg.set_opt("refl", a.refl)?;
    cfg.set_opt("bg", a.bg)?;
    cfg.set_opt("alpha", a.alpha)?;
    cfg.set_opt("c1", a.c1)?;
    cfg.set_opt("sigma2", a.sigma2)?;
    cfg.set_opt("seed", a.seed)?;

    let scene = match cfg.str_or("scene", "v-b") {
        "v-b" => {
            for key in ["bins", "depth", "refl", "bg", "alpha"] {
                if cfg.contains(key) {
                    return Err(CliError::usage(format!("'{key}' applies to the flat scene only")));
                }
            }
            let s = staircase_scene(cfg.usize_or("rows", 100), cfg.usize_or("cols", 100))?;
            cfg.set("bg", "1")?;
            cfg.set("alpha", "0")?;
            s
        }
        _ => {
            let bins = cfg.usize_or("bins", 2000);
            let acq = Acquisition::new(
                bins,
                cfg.f64_or("bin_width_ps", 2.0),
                cfg.f64_or("refractive_index", 1.0),
            );
            let scene = GroundTruthScene::uniform(
                (cfg.usize_or("rows", 32), cfg.usize_or("cols", 32)),
                cfg.f64_or("depth", bins as f64 / 2.0),
                cfg.f64_or("refl", 1.0),
                cfg.f64_or("bg", DEFAULT_BG),
                cfg.f64_or("alpha", 0.0),
                acq,
            );
            scene.validate()?;
            scene
        }
    };
    let irf = irf_from(&cfg)?;
    let cube = synthesize_cube(&scene, &irf, cfg.u64_or("seed", 0))?;

    out_dir(&a.out_dir)?;
    write_cube(a.out_dir.join("cube.spc"), &cube)?;
    write_image(a.out_dir.join("truth_depth.spi"), &scene.depth)?;
    write_image(a.out_dir.join("truth_refl.spi"), &scene.refl)?;
    write_text(a.out_dir.join("scene.cfg"), &cfg.to_string())
}

fn cda_trace_csv(trace: &CdaTrace) -> String {
    let mut out = String::from("iteration,cost,admm_iterations\n");
    for (n, cost) in trace.costs.iter().enumerate() {
        let admm = if n == 0 { 0 } else { trace.admm_iterations[n - 1] };
        let _ = writeln!(out, "{n},{cost},{admm}");
    }
    out
}

fn cda_config(cfg: &RunConfig, eta: f64, zeta: f64) -> CdaConfig {
    let mut c = CdaConfig::new(eta, zeta);
    c.delta = cfg.f64_or("delta", c.delta);
    c.n_max = cfg.usize_or("n_max", c.n_max);
    c.admm.mu = cfg.f64_or("mu", c.admm.mu);
    c.admm.max_iters = cfg.usize_or("admm_max_iters", c.admm.max_iters);
    c.admm.primal_tol = cfg.f64_or("admm_tol", c.admm.primal_tol);
    c
}

struct Scoring {
    truth_depth: Image,
    truth_refl: Option<Image>,
    ctx: EvalContext,
}

fn sbr_series(label: &str, levels: &[EvalReport], out: &mut String) {
    for r in levels {
        let _ = writeln!(out, "{label},{},{},{}", r.sbr, r.sre_depth, r.sre_refl);
    }
}

const SBR_HEADER: &str = "estimate,sbr,sre_depth_db,sre_refl_db\n";

fn write_reports(dir: &Path, label: &str, truth: Truth<'_>, depth: &Image, refl: &Image, ctx: &EvalContext) -> Result<(), CliError> {
    let levels = evaluate_by_level(truth, depth, refl, ctx)?;
    let all = evaluate(label, truth, depth, refl, ctx)?;
    write_text(dir.join("report.csv"), &metrics::reports_csv(&levels))?;
    write_text(dir.join("overall.csv"), &metrics::reports_csv(&[all]))?;
    let mut series = String::from(SBR_HEADER);
    sbr_series(label, &levels, &mut series);
    write_text(dir.join("sbr_sre.csv"), &series)
}

pub fn restore(a: RestoreArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&a.config)?;
    cfg.set_opt("method", a.method)?;
    cfg.set_opt("c1", a.c1)?;
    cfg.set_opt("sigma2", a.sigma2)?;
    cfg.set_opt("alpha", a.alpha)?;
    cfg.set_opt("eta", a.eta)?;
    cfg.set_opt("zeta", a.zeta)?;
    cfg.set_opt("eta_grid", a.eta_grid)?;
    cfg.set_opt("zeta_grid", a.zeta_grid)?;
    cfg.set_opt("acq_subsample", a.acq_subsample)?;
    cfg.set_opt("seed", a.seed)?;
    cfg.set_opt("delta", a.delta)?;
    cfg.set_opt("n_max", a.n_max)?;
    cfg.set_opt("n_bi", a.n_bi)?;
    cfg.set_opt("n_mc", a.n_mc)?;
    cfg.set_opt("eta0", a.eta0)?;
    cfg.set_opt("zeta0", a.zeta0)?;
    cfg.set_opt("bg", a.bg)?;
    if let Some(g) = &a.gate {
        cfg.set("gate_first", &g[0].to_string())?;
        cfg.set("gate_last", &g[1].to_string())?;
    }
    let method = cfg.str_or("method", "cda").to_string();
    let grid = cfg.contains("eta_grid") || cfg.contains("zeta_grid");
    if grid && method != "cda" {
        return Err(CliError::usage("hyperparameter grids apply to --method cda only"));
    }
    if grid && a.truth_depth.is_none() {
        return Err(CliError::usage("grid search needs --truth-depth"));
    }
    if a.truth_refl.is_some() && a.truth_depth.is_none() {
        return Err(CliError::usage("--truth-refl needs --truth-depth"));
    }

    let full = read_cube(&a.cube)?;
    let offset = match (cfg.contains("gate_first"), cfg.contains("gate_last")) {
        (false, false) => 0,
        (true, true) => cfg.usize_or("gate_first", 1) - 1,
        _ => return Err(CliError::config("gate_first and gate_last go together")),
    };
    let mut cube: PhotonCube = if offset > 0 || cfg.contains("gate_last") {
        full.gate(offset + 1, cfg.usize_or("gate_last", full.bins()))?
    } else {
        full
    };
    let seed = cfg.u64_or("seed", 0);
    cube = cube.thin(cfg.f64_or("acq_subsample", 1.0), seed)?;
    let irf = irf_from(&cfg)?;

    let scoring = match &a.truth_depth {
        Some(p) => {
            let truth_depth = read_image(p)?;
            let truth_refl = a.truth_refl.as_ref().map(read_image).transpose()?;
            let bin_m = cube.bin_depth_m();
            let mean_depth = truth_depth.mean().unwrap_or(0.0);
            let ctx = EvalContext {
                c1: irf.c1,
                background: cfg.f64_or("bg", DEFAULT_BG),
                alpha_per_m: alpha_per_m(irf.alpha, bin_m),
                distance_m: mean_depth * bin_m,
                pct_nonempty: pct_nonempty(&cube),
            };
            Some(Scoring { truth_depth, truth_refl, ctx })
        }
        None => None,
    };

    let ml0 = ml0_estimates(&cube, &irf);
    let init = SceneImages::from_prelim(&xcorr_baseline(&cube, &irf));
    out_dir(&a.out_dir)?;

    let (mut est, aux) = match method.as_str() {
        "xcorr" => {
            let r = ml0.r.clone();
            (SceneImages { r, ..init }, false)
        }
        "cda" if grid => {
            let scoring = scoring.as_ref().expect("checked above");
            let etas = cfg.list("eta_grid").unwrap_or_else(|| vec![cfg.f64_or("eta", 1.0)]);
            let zetas = cfg.list("zeta_grid").unwrap_or_else(|| vec![cfg.f64_or("zeta", 1.0)]);
            let mut table = String::from("eta,zeta,sre_depth_db,iterations\n");
            let mut best: Option<(f64, f64, f64, SceneImages, CdaTrace)> = None;
            for &eta in &etas {
                for &zeta in &zetas {
                    let (est, trace) = run_cda(&ml0, &irf, &cda_config(&cfg, eta, zeta), &init)?;
                    let mut t = est.t.clone();
                    t += offset as f64;
                    let score = metrics::sre(&scoring.truth_depth, &t)?;
                    let _ = writeln!(table, "{eta},{zeta},{score},{}", trace.iterations);
                    if best.as_ref().is_none_or(|b| score > b.0) {
                        best = Some((score, eta, zeta, est, trace));
                    }
                }
            }
            let (_, eta, zeta, est, trace) = best.expect("grids are non-empty");
            write_text(a.out_dir.join("grid.csv"), &table)?;
            write_text(a.out_dir.join("trace.csv"), &cda_trace_csv(&trace))?;
            cfg.set("eta", &eta.to_string())?;
            cfg.set("zeta", &zeta.to_string())?;
            (est, true)
        }
        "cda" => {
            let c = cda_config(&cfg, cfg.f64_or("eta", 1.0), cfg.f64_or("zeta", 1.0));
            let (est, trace) = run_cda(&ml0, &irf, &c, &init)?;
            write_text(a.out_dir.join("trace.csv"), &cda_trace_csv(&trace))?;
            (est, true)
        }
        _ => {
            let defaults = McmcConfig::default();
            let c = McmcConfig {
                n_bi: cfg.usize_or("n_bi", defaults.n_bi),
                n_mc: cfg.usize_or("n_mc", defaults.n_mc),
                eta0: cfg.f64_or("eta0", defaults.eta0),
                zeta0: cfg.f64_or("zeta0", defaults.zeta0),
                initial_step: cfg.f64_or("initial_step", defaults.initial_step),
                seed,
                ..defaults
            };
            let res = run_mcmc(&ml0, &irf, &c, &init)?;
            write_text(a.out_dir.join("trace.csv"), &trace_csv(&res.trace))?;
            cfg.set("eta", &res.eta.to_string())?;
            cfg.set("zeta", &res.zeta.to_string())?;
            (res.mmse, true)
        }
    };
    est.t += offset as f64;

    write_image(a.out_dir.join("depth.spi"), &est.t)?;
    write_image(a.out_dir.join("refl.spi"), &est.r)?;
    if aux {
        write_image(a.out_dir.join("aux.spi"), &est.w)?;
    }
    write_text(a.out_dir.join("run.cfg"), &cfg.to_string())?;

    if let Some(s) = &scoring {
        let refl_truth = s.truth_refl.clone().unwrap_or_else(|| Image::ones(s.truth_depth.raw_dim()));
        let truth = Truth { depth: &s.truth_depth, refl: &refl_truth };
        write_reports(&a.out_dir, &method, truth, &est.t, &est.r, &s.ctx)?;
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&a.config)?;
    cfg.set_opt("c1", a.c1)?;
    cfg.set_opt("bg", a.bg)?;
    cfg.set_opt("alpha_per_m", a.alpha_per_m)?;
    cfg.set_opt("distance_m", a.distance_m)?;
    if a.depth.len() != a.refl.len() {
        return Err(CliError::usage(format!(
            "{} --depth images but {} --refl images",
            a.depth.len(),
            a.refl.len()
        )));
    }
    if !a.tacq.is_empty() && a.tacq.len() != a.depth.len() {
        return Err(CliError::usage(format!("{} --tacq values for {} estimates", a.tacq.len(), a.depth.len())));
    }
    if let Some(bad) = a.tacq.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(CliError::usage(format!("acquisition time {bad} must be positive")));
    }

    let truth_depth = read_image(&a.truth_depth)?;
    let truth_refl = read_image(&a.truth_refl)?;
    let truth = Truth { depth: &truth_depth, refl: &truth_refl };
    let ctx = EvalContext {
        c1: cfg.f64_or("c1", DEFAULT_C1),
        background: cfg.f64_or("bg", DEFAULT_BG),
        alpha_per_m: cfg.f64_or("alpha_per_m", 0.0),
        distance_m: cfg.f64_or("distance_m", 0.0),
        pct_nonempty: match &a.cube {
            Some(p) => pct_nonempty(&read_cube(p)?),
            None => 100.0,
        },
    };
    out_dir(&a.out_dir)?;

    if a.depth.len() == 1 {
        let depth = read_image(&a.depth[0])?;
        let refl = read_image(&a.refl[0])?;
        write_reports(&a.out_dir, "all", truth, &depth, &refl, &ctx)?;
        if let Some(&t) = a.tacq.first() {
            let all = evaluate("all", truth, &depth, &refl, &ctx)?;
            let text = format!("t_acq,sre_depth_db,sre_refl_db\n{t},{},{}\n", all.sre_depth, all.sre_refl);
            write_text(a.out_dir.join("tacq_sre.csv"), &text)?;
        }
        return Ok(());
    }

    let mut levels = Vec::new();
    let mut overall = Vec::new();
    let mut series = String::from(SBR_HEADER);
    for (k, (dp, rp)) in a.depth.iter().zip(&a.refl).enumerate() {
        let label = format!("est{k}");
        let depth = read_image(dp)?;
        let refl = read_image(rp)?;
        let mut rows = evaluate_by_level(truth, &depth, &refl, &ctx)?;
        sbr_series(&label, &rows, &mut series);
        for r in &mut rows {
            r.label = format!("{label}_{}", r.label);
        }
        levels.extend(rows);
        overall.push(evaluate(&label, truth, &depth, &refl, &ctx)?);
    }
    write_text(a.out_dir.join("report.csv"), &metrics::reports_csv(&levels))?;
    write_text(a.out_dir.join("overall.csv"), &metrics::reports_csv(&overall))?;
    write_text(a.out_dir.join("sbr_sre.csv"), &series)?;
    if !a.tacq.is_empty() {
        let mut text = String::from("t_acq,sre_depth_db,sre_refl_db\n");
        for (t, r) in a.tacq.iter().zip(&overall) {
            let _ = writeln!(text, "{t},{},{}", r.sre_depth, r.sre_refl);
        }
        write_text(a.out_dir.join("tacq_sre.csv"), &text)?;
    }
    Ok(())
}

fn read_samples(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if rec.len() != 2 {
            return Err(CliError::config(format!("{}: line {}: expected 2 columns", path.display(), n + 1)));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => out.push((x, y)),
            _ if n == 0 => continue,
            _ => {
                return Err(CliError::config(format!("{}: line {}: not numeric", path.display(), n + 1)));
            }
        }
    }
    Ok(out)
}

pub fn fit_irf(a: FitIrfArgs) -> Result<(), CliError> {
    let samples = read_samples(&a.samples)?;
    let fit = fit_impulse(&samples)?;
    let mut cfg = RunConfig::default();
    cfg.set("c1", &fit.c1.to_string())?;
    cfg.set("sigma2", &fit.sigma2.to_string())?;
    cfg.set("irf_center", &fit.center.to_string())?;
    match a.out {
        Some(p) => write_text(p, &cfg.to_string()),
        None => {
            print!("{cfg}");
            Ok(())
        }
    }
}
