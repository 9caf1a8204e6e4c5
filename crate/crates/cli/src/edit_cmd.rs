use std::path::{Path, PathBuf};

use gas_core::backend::http::{HttpBackend, HttpBackendConfig};
use gas_core::optimizer::StepStatus;
use gas_core::{
    AnalyticBackend, EditPlan, EditSession, GradientReport, LatentGrid, RegularizerRegistry,
    ScoreBackend,
};
use gas_prep::PlanFile;
use rayon::prelude::*;

use crate::args::{CommonArgs, EditArgs};
use crate::config::{BackendKind, JobConfig};
use crate::error::{CliError, CliResult, EXIT_OK};
use crate::files::{
    read_bytes, read_json, sha256_hex, write_bytes, write_json, AnalyticSpecFile, LatentFile,
};
use crate::manifest::{InputRecord, RunManifest, Stopwatch};

pub enum Backend {
    Analytic(AnalyticBackend),
    Http(HttpBackend),
}

impl Backend {
    pub fn score(&self) -> &dyn ScoreBackend {
        match self {
            Backend::Analytic(b) => b,
            Backend::Http(b) => b,
        }
    }

    pub fn http(&self) -> Option<&HttpBackend> {
        match self {
            Backend::Http(b) => Some(b),
            Backend::Analytic(_) => None,
        }
    }
}

/// Builds the configured backend; the analytic one also records its spec file as an input.
pub fn build_backend(
    cfg: &JobConfig,
    spec_flag: Option<&Path>,
    inputs: &mut Vec<InputRecord>,
) -> CliResult<Backend> {
    match cfg.backend.kind {
        BackendKind::Analytic => {
            let path = spec_flag
                .map(Path::to_path_buf)
                .or_else(|| cfg.backend.analytic_spec.clone())
                .ok_or_else(|| {
                    CliError::validation(
                        "backend",
                        "the analytic backend needs --analytic-spec or backend.analytic_spec",
                    )
                })?;
            let (file, sha): (AnalyticSpecFile, String) = read_json("backend", &path)?;
            inputs.push(record("analytic_spec", &path, sha));
            let spec = file.to_spec().map_err(|e| CliError::gas("backend", e))?;
            Ok(Backend::Analytic(AnalyticBackend::new(
                spec,
                cfg.schedule()?,
            )))
        }
        BackendKind::Http => {
            let mut hc = HttpBackendConfig::new(cfg.backend.url.clone().unwrap_or_default());
            hc.max_attempts = cfg.backend.max_attempts;
            hc.timeout = std::time::Duration::from_secs(cfg.backend.timeout_secs);
            Ok(Backend::Http(
                HttpBackend::new(hc).map_err(|e| CliError::gas("backend", e))?,
            ))
        }
    }
}

pub fn record(role: &str, path: &Path, sha256: String) -> InputRecord {
    InputRecord {
        role: role.into(),
        path: path.display().to_string(),
        sha256,
    }
}

pub fn load_plan(path: &Path, inputs: &mut Vec<InputRecord>) -> CliResult<EditPlan> {
    let bytes = read_bytes("plan", path)?;
    let text = String::from_utf8_lossy(&bytes);
    let file = PlanFile::from_json(&text).map_err(|e| CliError::prep("plan", e))?;
    inputs.push(record("plan", path, sha256_hex(&bytes)));
    file.to_plan().map_err(|e| CliError::prep("plan", e))
}

pub fn reports_csv(reports: &[GradientReport]) -> CliResult<Vec<u8>> {
    let n = reports.first().map_or(0, |r| r.gamma.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string(), "timestep".into(), "alpha_used".into()];
    header.extend((0..n).map(|k| format!("gamma_{k}")));
    header.extend(["grad_norm_inside".to_string(), "grad_norm_outside".into()]);
    let csv_err =
        |e: csv::Error| CliError::new(crate::error::EXIT_INTERNAL, "output", e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (i, r) in reports.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            r.timestep.to_string(),
            r.alpha_used.to_string(),
        ];
        row.extend(r.gamma.iter().map(f64::to_string));
        row.extend([
            r.grad_norm_inside.to_string(),
            r.grad_norm_outside.to_string(),
        ]);
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::new(crate::error::EXIT_INTERNAL, "output", e.to_string()))
}

/// Everything a single optimization job needs besides its seed and directory.
pub struct EditJob<'a> {
    pub command: &'a str,
    pub cfg: &'a JobConfig,
    pub z0: &'a LatentGrid,
    pub plan: &'a EditPlan,
    pub backend: &'a Backend,
    pub inputs: &'a [InputRecord],
    pub checkpoint_every: Option<usize>,
    pub timings: bool,
}

impl EditJob<'_> {
    /// Runs the optimization in `dir` and writes outputs plus manifest.
    /// A diverged run still writes its last finite latent.
    pub fn run(&self, seed: u64, dir: &Path) -> CliResult<RunManifest> {
        let mut watch = Stopwatch::new(self.timings);
        let mut cfg = self.cfg.clone();
        cfg.optimizer.seed = seed;
        let sched = cfg.schedule()?;
        let mut manifest = RunManifest::new(self.command, self.inputs.to_vec(), &cfg, seed);
        let registry = RegularizerRegistry::new();
        let mut session = EditSession::new(
            self.z0.clone(),
            self.plan,
            self.backend.score(),
            &sched,
            &cfg.gas,
            &cfg.optimizer,
            &registry,
        )
        .map_err(|e| CliError::gas("optimization", e))?;

        let mut failure = None;
        loop {
            match session.step() {
                Ok(StepStatus::Running) => {
                    if let Some(every) = self.checkpoint_every {
                        let k = session.steps_run();
                        if k % every == 0 {
                            let rel = format!("checkpoints/step_{k:06}.json");
                            write_json(
                                "output",
                                &dir.join(&rel),
                                &LatentFile::from_grid(session.latent()),
                            )?;
                            manifest.artifacts.insert(format!("checkpoint_{k:06}"), rel);
                        }
                    }
                }
                Ok(_) => break,
                Err(e) => {
                    failure = Some(CliError::gas("optimization", e));
                    break;
                }
            }
        }
        watch.lap("optimization");
        manifest.steps_run = Some(session.steps_run());
        manifest.converged = Some(session.status() == StepStatus::Converged);
        manifest.reports = session.reports().to_vec();
        let latent = session.latent().clone();

        write_json(
            "output",
            &dir.join("final_latent.json"),
            &LatentFile::from_grid(&latent),
        )?;
        manifest
            .artifacts
            .insert("final_latent".into(), "final_latent.json".into());
        write_bytes(
            "output",
            &dir.join("gradient_reports.csv"),
            &reports_csv(&manifest.reports)?,
        )?;
        manifest
            .artifacts
            .insert("gradient_reports".into(), "gradient_reports.csv".into());

        if let (Some(http), None) = (self.backend.http(), &failure) {
            match http.decode_latent(&latent) {
                Ok(png) => {
                    write_bytes("output", &dir.join("edited.png"), &png)?;
                    manifest
                        .artifacts
                        .insert("edited_image".into(), "edited.png".into());
                }
                Err(e) => failure = Some(CliError::gas("decode", e)),
            }
            watch.lap("decode");
        }

        if let Some(e) = &failure {
            let status = if e.code == crate::error::EXIT_DIVERGED {
                "diverged"
            } else {
                "failed"
            };
            manifest.fail(status, e);
        }
        manifest.timings = watch.finish();
        manifest.write(dir)?;
        match failure {
            Some(e) => Err(e),
            None => Ok(manifest),
        }
    }
}

/// Runs `jobs` copies of the job: a single job uses the configured seed and
/// directory; a batch derives one seed per job and writes to `job_<i>/`.
pub fn run_batch(job: &EditJob<'_>, jobs: usize) -> CliResult<Vec<RunManifest>> {
    let out = job.cfg.output_dir.clone();
    let seed = job.cfg.optimizer.seed;
    if jobs == 1 {
        return Ok(vec![job.run(seed, &out)?]);
    }
    let results: Vec<CliResult<RunManifest>> = (0..jobs)
        .into_par_iter()
        .map(|i| {
            let dir: PathBuf = out.join(format!("job_{i}"));
            job.run(gas_core::optimizer::derive_job_seed(seed, i as u64), &dir)
        })
        .collect();
    results.into_iter().collect()
}

pub fn cmd_edit(common: &CommonArgs, args: &EditArgs) -> CliResult<i32> {
    let cfg = common.resolve(JobConfig::default())?;
    eprintln!(
        "resolved config: {}",
        serde_json::to_string(&cfg).unwrap_or_default()
    );
    let mut inputs = Vec::new();
    let plan = load_plan(&args.plan, &mut inputs)?;
    let backend = build_backend(&cfg, args.analytic_spec.as_deref(), &mut inputs)?;

    let z0 = match (&args.latent, &args.image) {
        (Some(path), _) => {
            let (file, sha): (LatentFile, String) = read_json("input", path)?;
            inputs.push(record("latent", path, sha));
            file.to_grid().map_err(|e| CliError::gas("input", e))?
        }
        (None, Some(path)) => {
            let Some(http) = backend.http() else {
                return Err(CliError::validation(
                    "input",
                    "the analytic backend is latent-only; pass --latent or use --backend http",
                ));
            };
            let png = read_bytes("input", path)?;
            inputs.push(record("image", path, sha256_hex(&png)));
            http.encode_image(&png)
                .map_err(|e| CliError::gas("encode", e))?
        }
        (None, None) => return Err(CliError::validation("input", "pass --latent or --image")),
    };

    let job = EditJob {
        command: "edit",
        cfg: &cfg,
        z0: &z0,
        plan: &plan,
        backend: &backend,
        inputs: &inputs,
        checkpoint_every: args.checkpoint_every,
        timings: !common.no_timings,
    };
    for m in run_batch(&job, common.jobs)? {
        eprintln!(
            "job {}: {} after {} step(s), converged: {}",
            m.job_id,
            m.status,
            m.steps_run.unwrap_or(0),
            m.converged.unwrap_or(false)
        );
    }
    Ok(EXIT_OK)
}
