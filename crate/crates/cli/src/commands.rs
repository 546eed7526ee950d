use std::path::Path;
use std::time::Instant;

use lidar_normals::density::vmf_kde;
use lidar_normals::energy::{refine_with_terms, RefineConfig, TermSelection};
use lidar_normals::estimate::{
    create_estimator, estimator_names, orient_viewpoint, EstimatorParams,
};
use lidar_normals::frame::NormalField;
use lidar_normals::io::{
    load_refine_config, load_scene, load_sensor, read_normal_field, read_sequence, write_frame,
    write_manifest, write_normal_field, FrameEntry, Sequence, SequenceManifest,
};
use lidar_normals::metrics::{angular_errors, summarize, DEFAULT_THRESHOLDS_DEG};
use lidar_normals::sim::simulate_sequence;

use crate::{AnalyzeArgs, BenchArgs, CliError, EstimateArgs, EvalArgs, GenerateArgs, RefineArgs};

fn frame_file_name(id: u32) -> String {
    format!("frame_{id:06}.lsnf")
}

fn normals_file_name(id: u32) -> String {
    format!("normals_{id:06}.lsnf")
}

pub fn generate(args: GenerateArgs) -> Result<(), CliError> {
    if args.frames == 0 {
        return Err(CliError::usage("--frames must be >= 1"));
    }
    let split = args.split.parse().map_err(|e: String| CliError::usage(e))?;

    let (scene, trajectory_spec) = load_scene(&args.scene)?;
    let sensor = match &args.sensor {
        Some(path) => load_sensor(path)?,
        None => lidar_normals::SensorConfig::default(),
    };
    let trajectory = trajectory_spec.build(args.frames, sensor.rotation_hz)?;

    let frames = simulate_sequence(&scene, &sensor, &trajectory, args.seed)
        .map_err(|e| CliError::data(e.to_string()))?;

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::data(e.to_string()))?;
    let mut entries = Vec::with_capacity(frames.len());
    let mut total = 0usize;
    for frame in &frames {
        let name = frame_file_name(frame.frame_id);
        write_frame(frame, args.out.join(&name))?;
        println!("frame {}: {} points", frame.frame_id, frame.len());
        total += frame.len();
        entries.push(FrameEntry {
            id: frame.frame_id,
            path: name,
        });
    }
    let manifest = SequenceManifest {
        scene: scene.name.clone(),
        split,
        sensor,
        frames: entries,
    };
    let manifest_path = args.out.join("sequence.toml");
    write_manifest(&manifest, &manifest_path)?;
    println!(
        "wrote {} frame(s), {} points total, manifest {}",
        frames.len(),
        total,
        manifest_path.display()
    );
    Ok(())
}

pub fn estimate(args: EstimateArgs) -> Result<(), CliError> {
    let params = EstimatorParams {
        k: args.k,
        degree: args.degree,
    };
    let estimator = create_estimator(&args.method, &params).ok_or_else(|| {
        CliError::usage(format!(
            "unknown method '{}'; available: {}",
            args.method,
            estimator_names().join(", ")
        ))
    })?;

    let sequence = read_sequence(&args.input)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::data(e.to_string()))?;
    for frame in &sequence.frames {
        let output = estimator
            .estimate(frame)
            .map_err(|e| CliError::data(format!("frame {}: {e}", frame.frame_id)))?;
        write_normal_field(
            &output.field,
            &frame.pose,
            frame.timestamp,
            args.out.join(normals_file_name(frame.frame_id)),
        )?;
        println!(
            "frame {}: {} normals ({} degenerate)",
            frame.frame_id,
            output.field.len(),
            output.degenerate.len()
        );
    }
    Ok(())
}

fn load_init_fields(sequence: &Sequence, dir: &Path) -> Result<Vec<NormalField>, CliError> {
    sequence
        .frames
        .iter()
        .map(|frame| {
            let path = dir.join(normals_file_name(frame.frame_id));
            let (mut field, _, _) = read_normal_field(&path)?;
            field.frame_id = frame.frame_id;
            if field.len() != frame.len() {
                return Err(CliError::data(format!(
                    "{}: {} normals for a frame of {} points",
                    path.display(),
                    field.len(),
                    frame.len()
                )));
            }
            Ok(field)
        })
        .collect()
}

fn build_refine_config(args: &RefineArgs) -> Result<RefineConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => load_refine_config(path)?,
        None => RefineConfig::default(),
    };
    if let Some(gamma) = args.gamma {
        config.gamma = gamma;
    }
    if let Some(k) = args.k {
        config.graph_k = k;
    }
    if let Some(sigma) = args.sigma {
        config.graph_sigma = sigma;
    }
    if let Some(iters) = args.iters {
        config.max_iters = iters;
    }
    if let Some(step) = args.step {
        config.step_size = step;
    }
    if let Some(delta) = args.huber_delta {
        config.huber_delta = delta;
    }
    if let Some(tol) = args.tol {
        config.convergence_tol = tol;
    }
    if args.renormalize {
        config.renormalize_each_iter = true;
    }
    config
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(config)
}

pub fn refine(args: RefineArgs) -> Result<(), CliError> {
    let config = build_refine_config(&args)?;
    let sequence = read_sequence(&args.input)?;
    let init_fields = load_init_fields(&sequence, &args.init)?;

    let outcome = refine_with_terms(
        &sequence.frames,
        &init_fields,
        &config,
        TermSelection::default(),
    )
    .map_err(|e| CliError::data(e.to_string()))?;

    println!("initial objective {:.9e}", outcome.objective_trace[0]);
    for (i, value) in outcome.objective_trace.iter().enumerate().skip(1) {
        println!("iter {i} objective {value:.9e}");
    }
    println!(
        "{} after {} iteration(s)",
        if outcome.converged {
            "converged"
        } else {
            "stopped"
        },
        outcome.iterations
    );

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::data(e.to_string()))?;
    for (frame, field) in sequence.frames.iter().zip(&outcome.fields) {
        // Refined fields are viewpoint-oriented like estimator outputs.
        let oriented = orient_viewpoint(field, frame).map_err(|e| CliError::data(e.to_string()))?;
        write_normal_field(
            &oriented,
            &frame.pose,
            frame.timestamp,
            args.out.join(normals_file_name(frame.frame_id)),
        )?;
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let sequence = read_sequence(&args.gt)?;
    let mut pooled = Vec::new();
    for frame in &sequence.frames {
        let gt = frame.gt_field().ok_or_else(|| {
            CliError::data(format!(
                "frame {} carries no ground-truth normals",
                frame.frame_id
            ))
        })?;
        let path = args.pred.join(normals_file_name(frame.frame_id));
        let (pred, _, _) = read_normal_field(&path)?;
        let errors = angular_errors(&pred, &gt)
            .map_err(|e| CliError::data(format!("frame {}: {e}", frame.frame_id)))?;
        pooled.extend(errors.degrees);
    }

    let report = summarize(&pooled, &DEFAULT_THRESHOLDS_DEG, 0.0)
        .map_err(|e| CliError::data(e.to_string()))?;
    let text = report.canonical_text();
    std::fs::write(&args.out, &text).map_err(|e| CliError::data(e.to_string()))?;
    print!("{text}");
    Ok(())
}

pub fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let sequence = read_sequence(&args.input)?;
    let mut normals = Vec::new();
    for frame in &sequence.frames {
        let gt = frame.gt_normals.as_ref().ok_or_else(|| {
            CliError::data(format!(
                "frame {} carries no ground-truth normals",
                frame.frame_id
            ))
        })?;
        normals.extend(gt.iter().map(|n| *n.as_vec()));
    }
    let total = normals.len();
    if args.sample > 0 && total > args.sample {
        let stride = total.div_ceil(args.sample);
        normals = normals.into_iter().step_by(stride).collect();
    }

    let field = NormalField::new(normals, 0);
    let map =
        vmf_kde(&field, args.kappa, args.grid_res).map_err(|e| CliError::data(e.to_string()))?;
    std::fs::write(&args.out, map.to_csv()).map_err(|e| CliError::data(e.to_string()))?;
    println!(
        "wrote {} density cells from {} of {} normals (integral {:.4})",
        map.cells.len(),
        field.len(),
        total,
        map.integral()
    );
    Ok(())
}

pub fn bench(args: BenchArgs) -> Result<(), CliError> {
    let params = EstimatorParams {
        k: args.k,
        degree: 2,
    };
    let estimator = create_estimator(&args.method, &params).ok_or_else(|| {
        CliError::usage(format!(
            "unknown method '{}'; available: {}",
            args.method,
            estimator_names().join(", ")
        ))
    })?;
    let sequence = read_sequence(&args.input)?;
    let config = RefineConfig {
        max_iters: args.iters,
        ..RefineConfig::default()
    };

    let mut estimate_times = Vec::new();
    let mut refine_times = Vec::new();
    for frame in &sequence.frames {
        let start = Instant::now();
        let output = estimator
            .estimate(frame)
            .map_err(|e| CliError::data(format!("frame {}: {e}", frame.frame_id)))?;
        let estimate_s = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let frames = std::slice::from_ref(frame);
        refine_with_terms(
            frames,
            std::slice::from_ref(&output.field),
            &config,
            TermSelection::default(),
        )
        .map_err(|e| CliError::data(e.to_string()))?;
        let refine_s = start.elapsed().as_secs_f64();

        println!(
            "frame {}: estimate {:.3} s, refine {:.3} s ({} points)",
            frame.frame_id,
            estimate_s,
            refine_s,
            frame.len()
        );
        estimate_times.push(estimate_s);
        refine_times.push(refine_s);
    }

    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    println!(
        "mean: estimate {:.3} s/frame, refine {:.3} s/frame over {} frame(s)",
        mean(&estimate_times),
        mean(&refine_times),
        sequence.frames.len()
    );
    Ok(())
}
