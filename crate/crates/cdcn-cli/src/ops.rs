//! Command bodies and the mapping from library errors to exit codes.

use std::path::{Path, PathBuf};

use cdcn_core::degradation::{decompose_labels, DegradationConfig};
use cdcn_core::error::{DegradationError, EvalError, IoError, ModelError, TrainError};
use cdcn_core::image::Image;
use cdcn_core::kernel::{
    load_kernel_text, make_anisotropic_gaussian, make_isotropic_gaussian, save_kernel_text,
    AnisoKernelSpec, IsoKernelSpec, Kernel,
};
use cdcn_core::model::{load_checkpoint, param_count, peek_config, CdcnRestorer, ModelConfig};
use cdcn_core::protocol::{evaluate_anisotropic, evaluate_gaussian8, BicubicBaseline, Restorer};
use cdcn_core::train::{parse_config, resume as train_resume, train as train_run};

use crate::{
    Baseline, CliError, DecomposeArgs, DegradeArgs, EvalArgs, KernelArgs, KernelSource,
    KernelType, LabelsArgs, ParamsArgs, Protocol, TrainArgs,
};

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn model_code(e: &ModelError) -> u8 {
    match e {
        ModelError::CheckpointMismatch(_) | ModelError::MalformedCheckpoint(_) => 4,
        _ => 2,
    }
}

fn degradation_code(e: &DegradationError) -> u8 {
    match e {
        DegradationError::MalformedKernelFile(_) => 4,
        _ => 2,
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError {
            code: model_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<DegradationError> for CliError {
    fn from(e: DegradationError) -> Self {
        CliError {
            code: degradation_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let code = match &e {
            TrainError::NonFiniteLoss { .. } => 3,
            TrainError::Io(_) => 1,
            TrainError::Model(m) => model_code(m),
            TrainError::Degradation(d) => degradation_code(d),
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let code = match &e {
            EvalError::Io(_) => 1,
            EvalError::MalformedReport(_) => 4,
            EvalError::Model(m) => model_code(m),
            EvalError::Degradation(d) => degradation_code(d),
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::new(dir, e).into())
}

fn out_dir_of(out: &Option<PathBuf>, input: &Path) -> PathBuf {
    out.clone()
        .unwrap_or_else(|| input.parent().unwrap_or(Path::new(".")).to_path_buf())
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

impl KernelSource {
    /// Resolves to a kernel plus a provenance token, validating that
    /// exactly one source was given.
    fn resolve(&self) -> Result<(Kernel, String), CliError> {
        match (&self.kernel, self.width) {
            (Some(path), None) => {
                let (k, token) = load_kernel_text(path)?;
                Ok((k, token))
            }
            (None, Some(width)) => {
                let size = self.size.unwrap_or(21);
                let k = make_isotropic_gaussian(IsoKernelSpec::with_size(width, size))?;
                Ok((k, format!("{width}")))
            }
            _ => Err(CliError::usage(
                "provide exactly one of --kernel <file> or --width <sigma>",
            )),
        }
    }
}

pub fn kernel(args: KernelArgs) -> Result<(), CliError> {
    let (kernel, token) = match args.kind {
        KernelType::Iso => {
            let width = args
                .width
                .ok_or_else(|| CliError::usage("--type iso requires --width"))?;
            let size = args.size.unwrap_or(21);
            let k = make_isotropic_gaussian(IsoKernelSpec::with_size(width, size))?;
            (k, format!("{width}"))
        }
        KernelType::Aniso => {
            let (Some(l1), Some(l2), Some(theta)) = (args.l1, args.l2, args.theta) else {
                return Err(CliError::usage("--type aniso requires --l1, --l2 and --theta"));
            };
            let mut spec = AnisoKernelSpec::new(l1, l2, theta, args.noise, args.seed);
            spec.size = args.size.unwrap_or(11);
            let k = make_anisotropic_gaussian(spec)?;
            let token = format!(
                "aniso,l1={l1},l2={l2},theta={theta},noise={},seed={}",
                args.noise, args.seed
            );
            (k, token)
        }
    };
    save_kernel_text(&kernel, &token, &args.out)?;
    println!(
        "kernel {}x{} sum={:.9} center={:.9} -> {}",
        kernel.size(),
        kernel.size(),
        kernel.sum(),
        kernel.center_value(),
        args.out.display()
    );
    Ok(())
}

/// Loads the HR image, center-cropping to a multiple of the scale with a
/// warning when pixels are shaved off.
fn load_hr_cropped(path: &Path, scale: usize) -> Result<Image, CliError> {
    let img = Image::load_png(path)?;
    let cropped = img.center_crop_to_multiple(scale);
    if cropped.height() != img.height() || cropped.width() != img.width() {
        eprintln!(
            "warning: {} is {}x{}; center-cropped to {}x{} for scale {scale}",
            path.display(),
            img.height(),
            img.width(),
            cropped.height(),
            cropped.width()
        );
    }
    Ok(cropped)
}

pub fn degrade(args: DegradeArgs) -> Result<(), CliError> {
    let (kernel, _) = args.kernel.resolve()?;
    let hr = load_hr_cropped(&args.hr, args.scale)?;
    let out_dir = out_dir_of(&args.out, &args.hr);
    ensure_dir(&out_dir)?;
    let lr = cdcn_core::degradation::degrade(&hr, &kernel, &DegradationConfig::new(args.scale))?;
    let path = out_dir.join(format!("{}_lr.png", stem_of(&args.hr)));
    lr.save_png(&path)?;
    println!("{} ({}x{})", path.display(), lr.height(), lr.width());
    Ok(())
}

pub fn labels(args: LabelsArgs) -> Result<(), CliError> {
    let (kernel, _) = args.kernel.resolve()?;
    let hr = load_hr_cropped(&args.hr, args.scale)?;
    let out_dir = out_dir_of(&args.out, &args.hr);
    ensure_dir(&out_dir)?;
    let triple = decompose_labels(&hr, &kernel, &DegradationConfig::new(args.scale))?;

    let stem = stem_of(&args.hr);
    let path = |suffix: &str, ext: &str| out_dir.join(format!("{stem}_{suffix}.{ext}"));
    triple.structure.save_png(&path("s", "png"))?;
    // The detail image is a signed residual; exported shifted to mid-gray.
    triple.detail.shift(0.5).save_png(&path("d", "png"))?;
    triple.lr.save_png(&path("lr", "png"))?;
    if args.float_out {
        hr.save_f32(&path("hr", "f32"))?;
        triple.structure.save_f32(&path("s", "f32"))?;
        triple.detail.save_f32(&path("d", "f32"))?;
        triple.lr.save_f32(&path("lr", "f32"))?;
    }
    println!(
        "{stem}: structure/detail {}x{}, lr {}x{} -> {}",
        hr.height(),
        hr.width(),
        triple.lr.height(),
        triple.lr.width(),
        out_dir.display()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut text = std::fs::read_to_string(&args.config)
        .map_err(|e| IoError::new(&args.config, e))?;
    // Command-line overrides win by being appended after the file keys.
    for kv in &args.overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set wants KEY=VALUE, got {kv:?}")))?;
        text.push_str(&format!("\n{key} = {value}\n"));
    }
    let (train_cfg, model_cfg) = parse_config(&text)?;
    train_cfg.validate(&model_cfg)?;
    if !args.data.is_dir() {
        return Err(CliError::usage(format!(
            "data directory {} does not exist",
            args.data.display()
        )));
    }
    print!("resolved config:\n{}", train_cfg.to_text());
    println!(
        "model: groups={} blocks={} channels={} ablation={}",
        model_cfg.num_groups,
        model_cfg.blocks_per_group,
        model_cfg.channels,
        model_cfg.ablation.name()
    );

    let summary = match &args.resume {
        Some(ckpt) => {
            let stored = peek_config(ckpt)?;
            if stored != model_cfg {
                return Err(ModelError::CheckpointMismatch(format!(
                    "{} was trained with a different model config than {}",
                    ckpt.display(),
                    args.config.display()
                ))
                .into());
            }
            train_resume(ckpt, &train_cfg, &args.data, &args.out)?
        }
        None => train_run(&train_cfg, model_cfg, &args.data, &args.out)?,
    };
    println!(
        "trained {} iterations: loss {:.6} -> {:.6}; log {}; {} checkpoints",
        summary.iters_run,
        summary.first_loss,
        summary.final_loss,
        summary.loss_log.display(),
        summary.checkpoints.len()
    );
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let restorer: Box<dyn Restorer> = match (&args.checkpoint, args.baseline) {
        (Some(path), None) => {
            let cfg = peek_config(path)?;
            if cfg.scale != args.scale {
                return Err(ModelError::CheckpointMismatch(format!(
                    "checkpoint is x{}, requested x{}",
                    cfg.scale, args.scale
                ))
                .into());
            }
            Box::new(CdcnRestorer::new(load_checkpoint(path)?.params))
        }
        (None, Some(Baseline::Bicubic)) => Box::new(BicubicBaseline),
        _ => {
            return Err(CliError::usage(
                "provide exactly one of --checkpoint <file> or --baseline bicubic",
            ))
        }
    };

    let report = match args.protocol {
        Protocol::Gaussian8 => {
            evaluate_gaussian8(restorer.as_ref(), &args.data, args.scale, args.workers)?
        }
        Protocol::Anisotropic => {
            let seeds: Vec<u64> = if args.seeds.is_empty() {
                (0..8).collect()
            } else {
                args.seeds.clone()
            };
            evaluate_anisotropic(
                restorer.as_ref(),
                &args.data,
                args.scale,
                &seeds,
                args.workers,
            )?
        }
    };
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    report.save(&args.out)?;
    println!(
        "aggregate,{},{},{}",
        report.rows.len(),
        report.mean_psnr,
        report.mean_ssim
    );
    Ok(())
}

pub fn decompose(args: DecomposeArgs) -> Result<(), CliError> {
    let loaded = load_checkpoint(&args.checkpoint)?;
    let scale = loaded.params.cfg().scale;
    ensure_dir(&args.out)?;

    let (lr, stem) = match (&args.lr, &args.hr) {
        (Some(path), None) => (Image::load_png(path)?, stem_of(path)),
        (None, Some(path)) => {
            let (kernel, _) = args.kernel.resolve()?;
            let hr = load_hr_cropped(path, scale)?;
            let triple = decompose_labels(&hr, &kernel, &DegradationConfig::new(scale))?;
            let stem = stem_of(path);
            triple
                .structure
                .save_png(&args.out.join(format!("{stem}_s_gt.png")))?;
            triple
                .detail
                .shift(0.5)
                .save_png(&args.out.join(format!("{stem}_d_gt.png")))?;
            triple
                .lr
                .save_png(&args.out.join(format!("{stem}_lr.png")))?;
            (triple.lr, stem)
        }
        _ => {
            return Err(CliError::usage(
                "provide exactly one of --lr <image> or --hr <image> (with a kernel)",
            ))
        }
    };

    let output = cdcn_core::model::cdcn_forward(&lr, &loaded.params)?;
    output
        .sr
        .save_png(&args.out.join(format!("{stem}_sr.png")))?;
    if let Some(s_hat) = &output.structure_hat {
        s_hat.save_png(&args.out.join(format!("{stem}_s_hat.png")))?;
    }
    if let Some(d_hat) = &output.detail_hat {
        d_hat
            .shift(0.5)
            .save_png(&args.out.join(format!("{stem}_d_hat.png")))?;
    }
    println!(
        "{stem}: sr {}x{} -> {}",
        output.sr.height(),
        output.sr.width(),
        args.out.display()
    );
    Ok(())
}

pub fn params(args: ParamsArgs) -> Result<(), CliError> {
    let ablation = cdcn_core::model::Ablation::parse(&args.ablation)?;
    let cfg = ModelConfig {
        num_groups: args.groups,
        blocks_per_group: args.blocks,
        channels: args.channels,
        scale: args.scale,
        leaky_slope: 0.2,
        ca_reduction: args.ca_reduction,
        ablation,
    };
    let count = param_count(&cfg)?;
    println!("parameters: {count} ({:.1}M)", count as f64 / 1e6);
    Ok(())
}
