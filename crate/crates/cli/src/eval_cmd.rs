use gas_eval::{evaluate, HashEmbedder, MeanAbsPerceptual, PixelImage};

use crate::args::{CommonArgs, EvalArgs};
use crate::config::JobConfig;
use crate::edit_cmd::{load_plan, record};
use crate::error::{CliError, CliResult, EXIT_OK};
use crate::files::{read_bytes, sha256_hex, write_json};
use crate::manifest::{RunManifest, Stopwatch};

/// Scores with the deterministic mock embedder and the mean-absolute
/// perceptual stand-in.
pub fn cmd_eval(common: &CommonArgs, args: &EvalArgs) -> CliResult<i32> {
    let cfg = common.resolve(JobConfig::default())?;
    let watch = Stopwatch::new(!common.no_timings);
    let mut inputs = Vec::new();
    let mut load = |role: &str, path: &std::path::Path| -> CliResult<PixelImage> {
        let bytes = read_bytes("input", path)?;
        inputs.push(record(role, path, sha256_hex(&bytes)));
        PixelImage::load(path).map_err(|e| CliError::eval("input", e))
    };
    let source = load("source_image", &args.source)?;
    let edited = load("edited_image", &args.edited)?;
    let plan = load_plan(&args.plan, &mut inputs)?;

    let report = evaluate(
        &source,
        &edited,
        &plan,
        &HashEmbedder::new(cfg.eval.embedding_dim),
        &MeanAbsPerceptual,
    )
    .map_err(|e| CliError::eval("evaluation", e))?;

    let dir = cfg.output_dir.clone();
    write_json("output", &dir.join("metrics.json"), &report)?;
    let mut manifest = RunManifest::new("eval", inputs, &cfg, cfg.optimizer.seed);
    manifest
        .artifacts
        .insert("metrics".into(), "metrics.json".into());
    manifest.metrics = Some(report.clone());
    manifest.timings = watch.finish();
    manifest.write(&dir)?;
    print!("{}", report.to_table());
    Ok(EXIT_OK)
}
