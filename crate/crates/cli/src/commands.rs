use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use isomesh::geometry::{build_icosphere, io};
use isomesh::metrics::{add_noise, pm_distance, NoiseSpec, PmReport};
use isomesh::pipeline::{run_pipeline_outcome, Stage};
use isomesh::{fixtures, TriangleMesh};

use crate::args::{Cli, Command, FitArgs};
use crate::config::FitConfig;
use crate::report::{error_kind, FitReport, MeshArtifact, StageFailure};
use crate::{four_significant, io_err, CliError};

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenRef { frequency, radius, out } => gen_ref(frequency, radius, &out),
        Command::MakeFixture {
            shape,
            count,
            scale,
            seed,
            truth,
            out,
        } => {
            if count == 0 {
                return Err(CliError::Usage("count must be positive".into()));
            }
            let cloud = fixtures::cloud(shape, scale, count, seed);
            io::save_cloud(&cloud, &out)?;
            if let Some(t) = truth {
                io::save_mesh(&fixtures::truth_mesh(shape, scale), &t)?;
            }
            Ok(())
        }
        Command::AddNoise {
            cloud,
            delta,
            sigma,
            seed,
            out,
        } => {
            let input = io::load_cloud(&cloud)?;
            let spec = NoiseSpec { delta, sigma, seed };
            let noisy = add_noise(&input, &spec)?;
            log::info!("moved {} of {} points", spec.affected(input.len()), input.len());
            io::save_cloud(&noisy, &out)?;
            Ok(())
        }
        Command::Fit(args) => fit(&args).map(|_| ()),
        Command::Evaluate { mesh, truth, csv } => {
            let report = evaluate(&mesh, &truth, csv.as_deref())?;
            println!("{}", four_significant(report.distance));
            Ok(())
        }
    }
}

pub fn gen_ref(frequency: usize, radius: f64, out: &Path) -> Result<(), CliError> {
    if !(1..=64).contains(&frequency) {
        return Err(CliError::Usage(format!("frequency must lie in 1..=64, got {frequency}")));
    }
    if !(radius > 0.0) {
        return Err(CliError::Usage(format!("radius must be positive, got {radius}")));
    }
    io::save_mesh(&build_icosphere(frequency, radius), out)?;
    Ok(())
}

/// Resolves the effective configuration of a `fit` invocation.
pub fn fit_config(args: &FitArgs) -> Result<FitConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => FitConfig::load(path, args.profile)?,
        None => FitConfig::for_profile(args.profile),
    };
    cfg.apply(&args.overrides);
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    cfg.pipeline.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::Global => "global",
        Stage::Coarse => "coarse",
        Stage::Fine => "fine",
    }
}

fn write_json(path: &Path, report: &FitReport) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Runs the pipeline and writes `r1`/`r2`/`r3` meshes, `config.toml` and
/// `report.json` into the output directory. Meshes of stages that finished
/// are kept when a later stage fails.
pub fn fit(args: &FitArgs) -> Result<FitReport, CliError> {
    let cfg = fit_config(args)?;
    let cloud = io::load_cloud(&args.cloud)?;
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml()).map_err(|e| io_err(&cfg_path, e))?;

    let mut report = FitReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        config: cfg.pipeline.clone(),
        input: args.cloud.clone(),
        input_points: cloud.len(),
        normalization: None,
        status: "running".into(),
        error: None,
        meshes: Vec::new(),
        stages: Vec::new(),
        fine_regions: None,
        block_count: None,
        wall_seconds: 0.0,
    };
    let report_path = dir.join("report.json");
    let t = Instant::now();
    let outcome = match run_pipeline_outcome(&cloud, &cfg.pipeline) {
        Ok(o) => o,
        Err(e) => {
            report.status = "failed".into();
            report.error = Some(StageFailure {
                stage: "setup".into(),
                kind: error_kind(&e).into(),
                message: e.to_string(),
            });
            write_json(&report_path, &report)?;
            return Err(CliError::Usage(e.to_string()));
        }
    };
    report.wall_seconds = t.elapsed().as_secs_f64();
    let result = outcome.result;
    report.normalization = Some(result.normalization);
    let ext = cfg.output.mesh_format.extension();
    let meshes: [(&str, &Option<TriangleMesh>); 3] = [("r1", &result.r1), ("r2", &result.r2), ("r3", &result.r3)];
    for (stage, (name, mesh)) in ["global", "coarse", "fine"].into_iter().zip(meshes) {
        if let Some(m) = mesh {
            let path = dir.join(format!("{name}.{ext}"));
            io::save_mesh(m, &path)?;
            report.meshes.push(MeshArtifact {
                stage: stage.into(),
                path,
                vertices: m.vertex_count(),
                patches: m.patch_count(),
            });
        }
    }
    if let Some(fine) = result.reports.iter().find(|r| r.stage == Stage::Fine) {
        report.fine_regions = Some(fine.region_count());
        report.block_count = fine.block_count;
    }
    report.stages = result.reports;

    match outcome.failure {
        None => {
            report.status = "ok".into();
            write_json(&report_path, &report)?;
            log::info!("wrote {}", dir.display());
            Ok(report)
        }
        Some((stage, e)) => {
            report.status = "failed".into();
            report.error = Some(StageFailure {
                stage: stage_name(stage).into(),
                kind: error_kind(&e).into(),
                message: e.to_string(),
            });
            write_json(&report_path, &report)?;
            Err(CliError::Pipeline {
                stage: stage_name(stage).into(),
                source: e,
                out: dir,
            })
        }
    }
}

fn default_csv(mesh: &Path) -> PathBuf {
    let stem = mesh.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh");
    mesh.with_file_name(format!("{stem}_pm.csv"))
}

/// PM distance of `mesh` against `truth`, with a per-vertex CSV of each
/// mesh vertex's distance to the truth surface followed by summary rows.
pub fn evaluate(mesh: &Path, truth: &Path, csv: Option<&Path>) -> Result<PmReport, CliError> {
    let r = io::load_mesh(mesh)?;
    let g = io::load_mesh(truth)?;
    let report = pm_distance(&r, &g);
    let mut text = String::from("vertex,distance_to_truth\n");
    for (i, d) in report.per_vertex.iter().enumerate() {
        let _ = writeln!(text, "{i},{d}");
    }
    let _ = writeln!(text, "mean_to_truth,{}", report.mean_r_to_g);
    let _ = writeln!(text, "mean_to_mesh,{}", report.mean_g_to_r);
    let _ = writeln!(text, "pm_distance,{}", report.distance);
    let path = csv.map(Path::to_path_buf).unwrap_or_else(|| default_csv(mesh));
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(report)
}
