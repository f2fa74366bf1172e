use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use vic_core::estimation::io::{load_palpation, load_survey, save_palpation, save_survey};
use vic_core::estimation::{
    fit_hc, fit_kv, generate_load_unload, grid_nodes, node_palpation, refine_surface, survey_grid_with,
};
use vic_core::sim::safety_summary;
use vic_core::{build_body_map, BodyMap, Mode, Phantom, SafetySummary, ScanLog, ScanPlan, StrategyConfig};

use crate::config::{DisturbKind, RunConfig};
use crate::manifest::RunManifest;
use crate::{plots, InputError};

pub const SURVEY_CSV: &str = "survey.csv";
pub const PALPATION_DIR: &str = "palpations";
pub const MAP_JSON: &str = "map.json";

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load_phantom(path: &Path) -> Result<Phantom> {
    if !path.is_file() {
        return Err(InputError(format!("phantom file {} does not exist", path.display())).into());
    }
    Phantom::load(path).map_err(|e| InputError(format!("phantom {}: {e}", path.display())).into())
}

/// Resolves a stage input that must have been produced by `stage`.
fn stage_input(path: &Path, file: &str, stage: &str) -> Result<PathBuf> {
    let p = if path.is_dir() { path.join(file) } else { path.to_path_buf() };
    if !p.is_file() {
        return Err(InputError(format!("{} not found; run `vic {stage}` first", p.display())).into());
    }
    Ok(p)
}

fn palpation_file(i: usize) -> PathBuf {
    Path::new(PALPATION_DIR).join(format!("node_{i:05}.csv"))
}

pub fn phantom(cfg: &RunConfig, out: &Path) -> Result<()> {
    prepare_out(out)?;
    let mut pc = vic_core::PhantomConfig::default();
    if let Some(b) = cfg.beta {
        pc.beta = b;
    }
    let ph = Phantom::new(pc).map_err(|e| InputError(e.to_string()))?;
    write(&out.join("phantom.json"), &ph.to_json())?;
    RunManifest::new("phantom", cfg, vec![], vec!["phantom.json".into()]).write(out)?;
    println!("phantom written to {}", out.join("phantom.json").display());
    Ok(())
}

pub fn palpate(cfg: &RunConfig, phantom_path: &Path, out: &Path, raw: bool) -> Result<()> {
    let ph = load_phantom(phantom_path)?;
    prepare_out(out)?;
    let survey = survey_grid_with(&ph, cfg.spacing, &cfg.protocol, cfg.seed, &cfg.survey)
        .map_err(|e| InputError(e.to_string()))?;
    save_survey(out.join(SURVEY_CSV), &survey)?;
    let mut outputs = vec![PathBuf::from(SURVEY_CSV)];
    if raw {
        std::fs::create_dir_all(out.join(PALPATION_DIR))?;
        grid_nodes(&ph.bounds(), cfg.spacing)
            .par_iter()
            .enumerate()
            .try_for_each(|(i, &(x, y))| -> Result<()> {
                let samples = node_palpation(&ph, x, y, &cfg.protocol, cfg.seed, i as u64)?;
                save_palpation(out.join(palpation_file(i)), &samples)?;
                Ok(())
            })?;
        outputs.push(PALPATION_DIR.into());
    }
    RunManifest::new("palpate", cfg, vec![phantom_path.into()], outputs).write(out)?;
    let usable = survey.iter().filter(|p| p.flag.usable()).count();
    println!("{} nodes palpated, {usable} usable", survey.len());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct BetaRow {
    source: String,
    model: &'static str,
    beta: f64,
    residual: f64,
    relative: f64,
}

fn relative(rows: &mut [BetaRow]) {
    let best = rows.iter().map(|r| r.residual).fold(f64::INFINITY, f64::min);
    for r in rows {
        r.relative = r.residual / best;
    }
}

/// Load/unload residuals of Kelvin-Voigt and Hunt-Crossley fits at `at`,
/// plus the mean palpation residual per exponent over a survey when given.
pub fn estimate(cfg: &RunConfig, phantom_path: &Path, survey: Option<&Path>, at: [f64; 2], out: &Path) -> Result<()> {
    let ph = load_phantom(phantom_path)?;
    let mut inputs = vec![phantom_path.to_path_buf()];
    let survey = match survey {
        Some(dir) => {
            let csv = stage_input(dir, SURVEY_CSV, "palpate")?;
            let raw = dir.join(PALPATION_DIR);
            if !raw.is_dir() {
                return Err(InputError(format!("{} not found; run `vic palpate` with raw output", raw.display())).into());
            }
            inputs.push(dir.to_path_buf());
            Some((load_survey(&csv, ph.beta())?, dir.to_path_buf()))
        }
        None => None,
    };
    prepare_out(out)?;

    let data = generate_load_unload(&ph, at[0], at[1], &cfg.load_unload, cfg.seed)
        .map_err(|e| InputError(e.to_string()))?;
    let s = ph.query(at[0], at[1]).map_err(|e| InputError(e.to_string()))?.surface;
    let m = ph.indenter_mass();
    let mut table = vec![BetaRow {
        source: "load-unload".into(),
        model: "kelvin-voigt",
        beta: 1.0,
        residual: fit_kv(&data, s, m)?.residual,
        relative: 0.0,
    }];
    for &b in &cfg.betas {
        table.push(BetaRow {
            source: "load-unload".into(),
            model: "hunt-crossley",
            beta: b,
            residual: fit_hc(&data, s, b, m)?.residual,
            relative: 0.0,
        });
    }
    relative(&mut table);

    if let Some((nodes, dir)) = survey {
        let usable: Vec<(usize, f64)> = nodes
            .iter()
            .enumerate()
            .filter(|(_, p)| p.flag.usable())
            .map(|(i, p)| (i, p.surface_z))
            .collect();
        let mut rows = Vec::new();
        for &b in &cfg.betas {
            let total: f64 = usable
                .par_iter()
                .map(|&(i, z)| -> Result<f64> {
                    let samples = load_palpation(dir.join(palpation_file(i)))?;
                    Ok(refine_surface(&samples, z - 0.002, z + 0.002, b, m, 1e-8)?.1.residual)
                })
                .collect::<Result<Vec<f64>>>()?
                .iter()
                .sum();
            rows.push(BetaRow {
                source: "survey-mean".into(),
                model: "hunt-crossley",
                beta: b,
                residual: total / usable.len().max(1) as f64,
                relative: 0.0,
            });
        }
        relative(&mut rows);
        table.extend(rows);
    }

    let mut csv = String::from("source,model,beta,residual,relative\n");
    let mut shown = String::new();
    for r in &table {
        writeln!(csv, "{},{},{},{:.9e},{:.6}", r.source, r.model, r.beta, r.residual, r.relative)?;
        writeln!(shown, "{:<12} {:<14} {:>5.2} {:>10.5} N {:>8.3}", r.source, r.model, r.beta, r.residual, r.relative)?;
    }
    write(&out.join("beta_table.csv"), &csv)?;
    RunManifest::new("estimate", cfg, inputs, vec!["beta_table.csv".into()]).write(out)?;
    print!("{shown}");
    Ok(())
}

pub fn map(cfg: &RunConfig, survey_dir: &Path, out: &Path) -> Result<()> {
    let csv = stage_input(survey_dir, SURVEY_CSV, "palpate")?;
    let beta = cfg.beta.unwrap_or(1.35);
    let survey = load_survey(&csv, beta)?;
    prepare_out(out)?;
    let map = build_body_map(&survey, beta, &cfg.grid, &cfg.gpr).map_err(|e| InputError(e.to_string()))?;
    map.save(out.join(MAP_JSON), out.join("grid.csv"))?;

    let g = &map.grid;
    let nodes: Vec<(f64, f64, f64)> = (0..g.ny())
        .flat_map(|j| (0..g.nx()).map(move |i| (i, j)))
        .map(|(i, j)| (g.x_nodes()[i], g.y_nodes()[j], g.node(i, j)))
        .collect();
    let lines: Vec<String> = nodes
        .par_iter()
        .map(|&(x, y, z)| {
            let (k, l) = (map.kappa_at(x, y), map.lambda_at(x, y));
            format!(
                "{x:.6},{y:.6},{z:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                k.mean,
                k.variance.max(0.0).sqrt(),
                l.mean,
                l.variance.max(0.0).sqrt()
            )
        })
        .collect();
    let mut text = String::from("x,y,z,kappa,kappa_std,lambda,lambda_std\n");
    for (n, line) in lines.iter().enumerate() {
        text.push_str(line);
        text.push('\n');
        if (n + 1) % g.nx() == 0 {
            text.push('\n');
        }
    }
    write(&out.join("maps.csv"), &text)?;
    write(&out.join("maps.gp"), &plots::map_script("maps.csv"))?;
    let outputs = ["map.json", "grid.csv", "maps.csv", "maps.gp"].map(PathBuf::from).to_vec();
    RunManifest::new("map", cfg, vec![csv], outputs).write(out)?;
    println!("map over {} x {} nodes written to {}", g.nx(), g.ny(), out.display());
    Ok(())
}

fn load_map(path: &Path) -> Result<(BodyMap, PathBuf)> {
    let p = stage_input(path, MAP_JSON, "map")?;
    let map = BodyMap::load(&p).map_err(|e| InputError(format!("{}: {e}", p.display())))?;
    Ok((map, p))
}

/// Headline numbers of one run, computed after the settling phase.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub disturb: DisturbKind,
    /// RMS of `F − F_ref` while in contact, N.
    pub force_error_rms: f64,
    /// Spread of the tissue force while in contact, N.
    pub force_range: f64,
    pub safety: SafetySummary,
}

fn report(cfg: &StrategyConfig, plan: &ScanPlan, disturb: DisturbKind, log: &ScanLog) -> RunReport {
    let t0 = plan.settle + 1.0;
    let f: Vec<f64> = log.rows.iter().filter(|r| r.t >= t0 && r.contact).map(|r| r.f_tissue).collect();
    let n = f.len().max(1) as f64;
    let rms = (f.iter().map(|v| (v - cfg.f_ref).powi(2)).sum::<f64>() / n).sqrt();
    let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
    RunReport {
        mode: cfg.mode,
        disturb,
        force_error_rms: rms,
        force_range: if f.is_empty() { 0.0 } else { hi - lo },
        safety: safety_summary(cfg, log, disturb != DisturbKind::None),
    }
}

fn certificates(s: &SafetySummary) -> String {
    if s.pass {
        "pass".into()
    } else {
        let mut failed = Vec::new();
        for (name, c) in [
            ("tank_floor", s.tank_floor),
            ("power_valve", s.power_valve),
            ("floor_stiffness", s.floor_stiffness),
            ("recontact_power", s.recontact_power),
            ("stiffness_box", s.stiffness_box),
            ("cf_pursues_target", s.cf_pursues_target),
        ] {
            if c.is_some_and(|c| !c.pass) {
                failed.push(name);
            }
        }
        format!("FAIL({})", failed.join(" "))
    }
}

pub fn scan(cfg: &RunConfig, phantom_path: &Path, map_path: &Path, out: &Path) -> Result<()> {
    let ph = load_phantom(phantom_path)?;
    let (map, map_file) = load_map(map_path)?;
    prepare_out(out)?;
    let dist = cfg.disturb.build(&cfg.plan);
    let log = vic_core::run_scan(&cfg.strategy, &ph, &map, &cfg.plan, &dist, cfg.seed)?;
    log.save(out.join("scan.csv"))?;
    let r = report(&cfg.strategy, &cfg.plan, cfg.disturb, &log);
    write(&out.join("safety.json"), &serde_json::to_string_pretty(&r)?)?;
    let title = format!("{} disturbance {}", cfg.strategy.mode, cfg.disturb.as_str());
    write(&out.join("scan.gp"), &plots::scan_script("scan.csv", &title))?;
    let outputs = ["scan.csv", "safety.json", "scan.gp"].map(PathBuf::from).to_vec();
    RunManifest::new("scan", cfg, vec![phantom_path.into(), map_file], outputs).write(out)?;
    println!(
        "{} ({}): force error rms {:.3} N, force range {:.2} N, certificates {}",
        r.mode,
        r.disturb.as_str(),
        r.force_error_rms,
        r.force_range,
        certificates(&r.safety)
    );
    Ok(())
}

pub fn compare(cfg: &RunConfig, phantom_path: &Path, map_path: &Path, disturb: &[DisturbKind], out: &Path) -> Result<()> {
    let ph = load_phantom(phantom_path)?;
    let (map, map_file) = load_map(map_path)?;
    prepare_out(out)?;
    std::fs::create_dir_all(out.join("runs"))?;
    let modes: Vec<StrategyConfig> = Mode::ALL
        .into_iter()
        .map(|mode| StrategyConfig {
            mode,
            ..cfg.strategy.clone()
        })
        .collect();
    let mut reports = Vec::new();
    let mut outputs = vec![PathBuf::from("summary.json"), "summary.csv".into(), "compare.gp".into()];
    let mut curves = Vec::new();
    for &d in disturb {
        let runs = vic_core::run_disturbance_suite(&ph, &map, &cfg.plan, &d.build(&cfg.plan), &modes, cfg.seed)?;
        for ((log, _), mode_cfg) in runs.iter().zip(&modes) {
            let name = format!("runs/{}-{}.csv", mode_cfg.mode, d.as_str());
            log.save(out.join(&name))?;
            outputs.push(name.into());
            curves.push((mode_cfg.mode.to_string(), d.as_str().to_string()));
            reports.push(report(mode_cfg, &cfg.plan, d, log));
        }
    }
    write(&out.join("summary.json"), &serde_json::to_string_pretty(&reports)?)?;
    let mut csv = String::from("mode,disturb,force_error_rms,force_range,max_force,max_penetration,contact_loss_rows,min_tank_energy,certificates\n");
    let mut shown = format!(
        "{:<6} {:<6} {:>10} {:>10} {:>9} {:>9}  certificates\n",
        "mode", "dist", "err rms N", "range N", "max F N", "max ε mm"
    );
    for r in &reports {
        let s = &r.safety;
        let t_min = s.min_tank_energy.map_or(String::new(), |t| format!("{t:.6}"));
        writeln!(
            csv,
            "{},{},{:.6},{:.6},{:.6},{:.6},{},{t_min},{}",
            r.mode,
            r.disturb.as_str(),
            r.force_error_rms,
            r.force_range,
            s.max_force,
            s.max_penetration,
            s.contact_loss_rows,
            certificates(s)
        )?;
        writeln!(
            shown,
            "{:<6} {:<6} {:>10.3} {:>10.2} {:>9.2} {:>9.2}  {}",
            r.mode.as_str(),
            r.disturb.as_str(),
            r.force_error_rms,
            r.force_range,
            s.max_force,
            s.max_penetration * 1e3,
            certificates(s)
        )?;
    }
    write(&out.join("summary.csv"), &csv)?;
    write(&out.join("compare.gp"), &plots::compare_script(&curves))?;
    RunManifest::new("compare", cfg, vec![phantom_path.into(), map_file], outputs).write(out)?;
    print!("{shown}");
    Ok(())
}
