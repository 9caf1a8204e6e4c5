use std::path::Path;

use gas_core::optimizer::NoiseSampler;
use gas_core::{dds_gradient, gas_gradient, AnalyticBackend, Condition, Mask};
use gas_prep::PlanFile;

use crate::args::{CommonArgs, SynthArgs};
use crate::config::BackendKind;
use crate::demo::{demo_config, demo_problem, DemoProblem};
use crate::edit_cmd::{record, run_batch, Backend, EditJob};
use crate::error::{CliError, CliResult, EXIT_OK};
use crate::files::{sha256_hex, to_canonical_json, write_bytes, AnalyticSpecFile, LatentFile};
use crate::manifest::{CheckResult, RunManifest};

fn quick_checks(
    p: &DemoProblem,
    backend: &AnalyticBackend,
    m: &RunManifest,
    job_dir: &Path,
) -> CliResult<Vec<CheckResult>> {
    let cfg = &m.config;
    let sched = cfg.schedule()?;
    let mut sampler = NoiseSampler::new(cfg.optimizer.seed ^ 0x5eed, 0, sched.num_timesteps() - 1);
    let mut outside_max = 0.0f64;
    let mut pair_max = 0.0f64;
    let outside = Mask::from_fn(8, 8, |(y, x)| !p.plan.union_mask().contains(y, x));
    let gas_err = |e| CliError::gas("checks", e);
    for _ in 0..20 {
        let (t, eps) = sampler.sample(p.z0.shape());
        let (_, z) = sampler.sample(p.z0.shape());
        let (g, _) = gas_gradient(backend, &z, &p.z0, &p.plan, t, &eps, &sched, &cfg.gas)
            .map_err(gas_err)?;
        outside_max = outside_max.max(
            g.masked(&outside)
                .array()
                .iter()
                .fold(0.0, |a, v| a.max(v.abs())),
        );
        let c = Condition::full_prompt(p.plan.target_prompt());
        let d =
            dds_gradient(backend, &z, &z, t, &eps, &c, &c, &sched, &cfg.gas).map_err(gas_err)?;
        pair_max = pair_max.max(d.array().iter().fold(0.0, |a, v| a.max(v.abs())));
    }
    let mut checks = vec![
        CheckResult {
            name: "gradient_zero_outside_masks".into(),
            passed: outside_max == 0.0,
            detail: format!("max |g| outside = {outside_max:e}"),
        },
        CheckResult {
            name: "matched_pair_zero".into(),
            passed: pair_max == 0.0,
            detail: format!("max |g| = {pair_max:e}"),
        },
    ];
    if m.status == "ok" {
        let path = job_dir.join("final_latent.json");
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io("checks", &path, e))?;
        let z: LatentFile =
            serde_json::from_str(&text).map_err(|e| CliError::io("checks", &path, e))?;
        let z = z.to_grid().map_err(gas_err)?;
        for (k, (s, target)) in p.plan.subtasks().iter().zip(&p.target_means).enumerate() {
            // With shared noise the edit settles at z0 + omega * (target - source) on each mask.
            let want = cfg.gas.omega * target;
            let got = z.masked_mean(&s.mask);
            checks.push(CheckResult {
                name: format!("subtask_{k}_fixed_point"),
                passed: (got - want).abs() < 0.1,
                detail: format!("mask mean {got:.6}, expected {want}"),
            });
        }
    }
    Ok(checks)
}

pub fn cmd_synth(common: &CommonArgs, args: &SynthArgs) -> CliResult<i32> {
    let mut cfg = common.resolve(demo_config())?;
    if cfg.backend.kind != BackendKind::Analytic {
        return Err(CliError::validation(
            "config",
            "synth runs on the analytic backend only",
        ));
    }
    cfg.backend.analytic_spec = Some("inputs/analytic_spec.json".into());
    eprintln!(
        "resolved config: {}",
        serde_json::to_string(&cfg).unwrap_or_default()
    );
    let p = demo_problem();
    let dir = cfg.output_dir.clone();

    let spec_json = to_canonical_json(&AnalyticSpecFile::from_spec(&p.spec));
    let latent_json = to_canonical_json(&LatentFile::from_grid(&p.z0));
    let plan_json = PlanFile::from_plan(&p.plan, &[])
        .map_err(|e| CliError::prep("assembly", e))?
        .to_json();
    let mut inputs = Vec::new();
    for (role, rel, body) in [
        ("analytic_spec", "inputs/analytic_spec.json", &spec_json),
        ("latent", "inputs/initial_latent.json", &latent_json),
        ("plan", "inputs/plan.json", &plan_json),
    ] {
        write_bytes("output", &dir.join(rel), body.as_bytes())?;
        inputs.push(record(role, Path::new(rel), sha256_hex(body.as_bytes())));
    }

    let analytic = AnalyticBackend::new(p.spec.clone(), cfg.schedule()?);
    let backend = Backend::Analytic(analytic.clone());
    let job = EditJob {
        command: "synth",
        cfg: &cfg,
        z0: &p.z0,
        plan: &p.plan,
        backend: &backend,
        inputs: &inputs,
        checkpoint_every: args.checkpoint_every,
        timings: !common.no_timings,
    };
    let manifests = run_batch(&job, common.jobs)?;
    let mut all_passed = true;
    for (i, mut m) in manifests.into_iter().enumerate() {
        let job_dir = if common.jobs == 1 {
            dir.clone()
        } else {
            dir.join(format!("job_{i}"))
        };
        m.checks = quick_checks(&p, &analytic, &m, &job_dir)?;
        for c in &m.checks {
            all_passed &= c.passed;
            println!(
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        m.write(&job_dir)?;
    }
    if !all_passed {
        eprintln!("some synthetic checks failed");
    }
    Ok(EXIT_OK)
}
