//! Command-line front end: synthetic scene generation, training,
//! evaluation, relighting, environment prefiltering, gradient verification,
//! and ablation runs.

use clap::{Parser, Subcommand};
use sgia::core::{load_checkpoint, save_checkpoint, Checkpoint};
use sgia::harness::{
    apply_bundle, evaluate, generate_synthetic_scene, initial_model, load_environment, model_from_checkpoint, relight,
    run_gradcheck, run_training, write_report, GeneratorSpec, SceneDataset,
};
use sgia::shading::env_to_equirect;
use sgia::splatter::save_plane;
use sgia::training::{train, TrainConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sgia", about = "Differentiable inverse rendering of articulated subjects")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic ground-truth scene.
    Generate {
        /// Generator spec (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Image resolution override.
        #[arg(long)]
        resolution: Option<usize>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset.
    Train {
        /// Dataset directory (contains manifest.json).
        dataset: PathBuf,
        /// Training configuration (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Rescale the whole schedule to this many steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Output directory for checkpoints and the training log.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint against a dataset.
    Evaluate {
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relight a checkpoint under an external environment map over the
    /// dataset's pose/camera sequence.
    Relight {
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Equirectangular environment map (SGFP float plane or PNG).
        #[arg(long)]
        env: PathBuf,
        /// Cubemap resolution for prefiltering.
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prefilter an equirectangular environment map and export it as an
    /// equirectangular float plane plus a raw cubemap plane.
    BakeEnv {
        input: PathBuf,
        /// Cubemap resolution.
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the randomized finite-difference verification suites.
    Gradcheck,
    /// Train with a named ablation bundle applied.
    Ablate {
        dataset: PathBuf,
        /// Bundle name: freeze-shape, no-progressive, l1-consistency,
        /// 3d-primitive-normals, no-occlusion, no-white-reg, no-smooth-reg,
        /// clothed-mesh-ao.
        #[arg(long)]
        bundle: String,
        /// Occluder mesh template (clothed-mesh-ao bundle).
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_train_config(path: Option<&Path>, seed: Option<u64>, steps: Option<usize>) -> sgia::Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| sgia::SgiaError::InvalidInput(format!("training config: {e}")))?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = steps {
        cfg = cfg.with_total_steps(n);
    }
    Ok(cfg)
}

fn final_checkpoint(outcome: &sgia::training::TrainOutcome, ds: &SceneDataset, cfg: &TrainConfig, out: &Path) -> sgia::Result<()> {
    let m = &outcome.model;
    let ck = Checkpoint {
        surfels: m.surfels.clone(),
        template: ds.template.clone(),
        net_layout: m.net.layout.clone(),
        net_weights: m.net.weights.clone(),
        env_params: m.env.params.clone(),
        env_res: m.env.res,
        config_toml: toml::to_string(cfg).unwrap_or_default(),
        step: cfg.total_steps as u64,
        stage: 2,
    };
    save_checkpoint(&ck, &out.join("model.sgia"))
}

fn run(cmd: Cmd) -> sgia::Result<bool> {
    match cmd {
        Cmd::Generate {
            config,
            seed,
            resolution,
            out,
        } => {
            let mut spec = match config {
                Some(p) => GeneratorSpec::from_toml(&std::fs::read_to_string(p)?)?,
                None => GeneratorSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(r) = resolution {
                spec.resolution = r;
            }
            std::fs::create_dir_all(&out)?;
            let report = generate_synthetic_scene(&spec, &out)?;
            let mean = report.self_psnr_db.iter().sum::<f64>() / report.self_psnr_db.len().max(1) as f64;
            println!("generated {} frames, mean self-consistency PSNR {mean:.2} dB", report.self_psnr_db.len());
            for (m, d) in report.oracle_rel_diff.iter().enumerate() {
                println!("oracle frame {m}: mean relative difference {:.2}%", 100.0 * d);
            }
        }
        Cmd::Train {
            dataset,
            config,
            seed,
            steps,
            out,
        } => {
            let ds = SceneDataset::load(&dataset)?;
            let cfg = load_train_config(config.as_deref(), seed, steps)?;
            std::fs::create_dir_all(&out)?;
            let outcome = run_training(&ds, &cfg, Some(&out))?;
            final_checkpoint(&outcome, &ds, &cfg, &out)?;
            println!("trained {} steps; final loss {:.6}", cfg.total_steps, outcome.log.last().map(|r| r.bd.total).unwrap_or(0.0));
        }
        Cmd::Evaluate { dataset, checkpoint, out } => {
            let ds = SceneDataset::load(&dataset)?;
            let model = model_from_checkpoint(&load_checkpoint(&checkpoint)?)?;
            let report = evaluate(&model, &ds)?;
            write_report(&report, &out)?;
            println!("photometric PSNR {:.2} dB", report.mean_photo_psnr_db);
            match report.mean_albedo_psnr_db {
                Some(p) => println!("albedo PSNR (scale-aligned) {p:.2} dB"),
                None => println!("albedo PSNR unavailable (no ground truth)"),
            }
            match report.mean_normal_error_deg {
                Some(e) => println!("normal error {e:.2} deg"),
                None => println!("normal error unavailable (no ground truth)"),
            }
        }
        Cmd::Relight {
            dataset,
            checkpoint,
            env,
            resolution,
            out,
        } => {
            let ds = SceneDataset::load(&dataset)?;
            let model = model_from_checkpoint(&load_checkpoint(&checkpoint)?)?;
            let env = load_environment(&env, resolution)?;
            let r = relight(&model, &env, &ds, &out)?;
            println!("relit {} frames at {}x{}", r.images.len(), r.width, r.height);
        }
        Cmd::BakeEnv { input, resolution, out } => {
            let mut env = load_environment(&input, resolution)?;
            env.refresh();
            std::fs::create_dir_all(&out)?;
            let eq = env_to_equirect(&env, 4 * resolution, 2 * resolution);
            save_plane(&out.join("env_equirect.sgfp"), &eq, 4 * resolution, 2 * resolution, 3)?;
            // raw cubemap: six faces stacked vertically, planar RGB radiance
            let npix = 6 * resolution * resolution;
            let mut cube = vec![0.0; npix * 3];
            for t in 0..npix {
                for c in 0..3 {
                    cube[c * npix + t] = sgia::math::softplus(env.params[3 * t + c]);
                }
            }
            save_plane(&out.join("env_cubemap.sgfp"), &cube, resolution, 6 * resolution, 3)?;
            println!("baked environment at cubemap resolution {resolution}");
        }
        Cmd::Gradcheck => {
            let results = run_gradcheck()?;
            let mut ok = true;
            for r in &results {
                println!("{}", r.line());
                ok &= r.pass();
            }
            return Ok(ok);
        }
        Cmd::Ablate {
            dataset,
            bundle,
            mesh,
            config,
            seed,
            steps,
            out,
        } => {
            let ds = SceneDataset::load(&dataset)?;
            let base = load_train_config(config.as_deref(), seed, steps)?;
            let cfg = apply_bundle(&base, &bundle, mesh.as_deref().and_then(|p| p.to_str()))?;
            let diff = sgia::harness::config_diff(&base, &cfg);
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("ablation.txt"), format!("bundle: {bundle}\nchanged keys: {}\n", diff.join(", ")))?;
            let frames = ds.frames()?;
            let model = initial_model(&ds, &cfg)?;
            let outcome = train(&frames, &ds.template, model, &cfg, Some(&out))?;
            final_checkpoint(&outcome, &ds, &cfg, &out)?;
            println!("ablation '{bundle}' trained {} steps (changed keys: {})", cfg.total_steps, diff.join(", "));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
