use std::io::{BufRead, Write};
use std::time::Duration;

use gas_prep::{
    assemble_plan, decompose_request, generate_scenario, ground_phrases, rasterize_mask,
    CachedChatClient, ChatClient, DetectorClient, HttpChatClient, HttpChatConfig,
    HttpDetectorClient, HttpDetectorConfig, MockChatClient, MockDetectorClient, MockFixture,
    PlanFile, SourceImage, Transport, UserRequest,
};

use crate::args::{CommonArgs, PlanArgs};
use crate::config::JobConfig;
use crate::edit_cmd::record;
use crate::error::{CliError, CliResult, EXIT_OK};
use crate::files::{sha256_hex, write_bytes, write_json};
use crate::manifest::{RunManifest, Stopwatch};

pub struct Clients {
    pub chat: Box<dyn ChatClient>,
    pub detector: Box<dyn DetectorClient>,
}

/// Mock clients replay the fixture's sections; a client whose section is
/// missing or empty talks to its configured endpoint instead.
pub fn build_clients(cfg: &JobConfig, fixture: Option<&MockFixture>) -> CliResult<Clients> {
    let c = &cfg.clients;
    let transport = Transport {
        max_attempts: c.max_attempts,
        timeout: Duration::from_secs(c.timeout_secs),
        ..Transport::default()
    };
    let missing = |key: &str| {
        CliError::validation(
            "config",
            format!("clients.{key} is not set (or pass --mock-clients)"),
        )
    };

    let chat: Box<dyn ChatClient> = match fixture.filter(|f| !f.chat.is_empty()) {
        Some(f) => Box::new(MockChatClient::new(f.chat.clone())),
        None => {
            let http = HttpChatClient::new(HttpChatConfig {
                endpoint: c
                    .chat_endpoint
                    .clone()
                    .ok_or_else(|| missing("chat_endpoint"))?,
                model: c.chat_model.clone(),
                transport: transport.clone(),
            })
            .map_err(|e| CliError::prep("decomposition", e))?;
            match &c.cache_dir {
                Some(dir) => Box::new(
                    CachedChatClient::new(http, dir)
                        .map_err(|e| CliError::prep("decomposition", e))?,
                ),
                None => Box::new(http),
            }
        }
    };
    let detector: Box<dyn DetectorClient> = match fixture.filter(|f| !f.detector.is_empty()) {
        Some(f) => Box::new(
            MockDetectorClient::new(f.detector.clone()).with_threshold(c.detector_threshold),
        ),
        None => Box::new(
            HttpDetectorClient::new(HttpDetectorConfig {
                endpoint: c
                    .detector_endpoint
                    .clone()
                    .ok_or_else(|| missing("detector_endpoint"))?,
                score_threshold: c.detector_threshold,
                transport,
            })
            .map_err(|e| CliError::prep("grounding", e))?,
        ),
    };
    Ok(Clients { chat, detector })
}

/// Runs decomposition, grounding and assembly for one request, naming the
/// failing stage on error.
pub fn plan_for_request(
    cfg: &JobConfig,
    image: &SourceImage,
    request: &str,
    clients: &Clients,
) -> CliResult<PlanFile> {
    let req = UserRequest::new(image.clone(), request).map_err(|e| CliError::prep("input", e))?;
    let draft = decompose_request(&req, clients.chat.as_ref())
        .map_err(|e| CliError::prep("decomposition", e))?;
    let phrases: Vec<String> = draft.subtasks().map(|(s, _, _)| s.to_string()).collect();
    let boxes = ground_phrases(image, &phrases, clients.detector.as_ref())
        .map_err(|e| CliError::prep("grounding", e))?;
    let latent = (cfg.latent.height, cfg.latent.width);
    let masks = boxes
        .iter()
        .map(|b| rasterize_mask(b, image.dims(), latent))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::prep("grounding", e))?;
    let plan =
        assemble_plan(&draft, &masks, &cfg.gas).map_err(|e| CliError::prep("assembly", e))?;
    PlanFile::from_plan(&plan, &boxes).map_err(|e| CliError::prep("assembly", e))
}

pub fn review_table(file: &PlanFile) -> String {
    let mut rows = vec![[
        "#".to_string(),
        "source".into(),
        "target".into(),
        "cells".into(),
        "keep form".into(),
        "penalty".into(),
    ]];
    let total = (file.latent_dims[0] * file.latent_dims[1]) as f64;
    for (i, s) in file.subtasks.iter().enumerate() {
        let cells: usize = s.mask_rle.iter().skip(1).step_by(2).sum();
        rows.push([
            i.to_string(),
            s.source_phrase.clone(),
            s.target_phrase.clone(),
            format!("{cells} ({:.1}%)", 100.0 * cells as f64 / total),
            if s.preserve_form { "yes" } else { "no" }.into(),
            if s.penalty_eligible { "yes" } else { "no" }.into(),
        ]);
    }
    let widths: Vec<usize> = (0..6)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = format!(
        "source: {}\ntarget: {}\n",
        file.source_prompt, file.target_prompt
    );
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(v, &w)| format!("{v:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn confirm(file: &PlanFile) -> CliResult<()> {
    print!("{}", review_table(file));
    eprint!("write this plan? [y/N] ");
    std::io::stderr().flush().ok();
    let mut line = String::new();
    std::io::stdin().lock().read_line(&mut line).ok();
    match line.trim().to_ascii_lowercase().as_str() {
        "y" | "yes" => Ok(()),
        _ => Err(CliError::validation("review", "plan rejected at review")),
    }
}

pub fn cmd_plan(common: &CommonArgs, args: &PlanArgs) -> CliResult<i32> {
    let cfg = common.resolve(JobConfig::default())?;
    eprintln!(
        "resolved config: {}",
        serde_json::to_string(&cfg).unwrap_or_default()
    );
    let mut watch = Stopwatch::new(!common.no_timings);
    let image = SourceImage::load(&args.image).map_err(|e| CliError::prep("input", e))?;
    let mut inputs = vec![record(
        "image",
        &args.image,
        sha256_hex(&std::fs::read(&args.image).map_err(|e| CliError::io("input", &args.image, e))?),
    )];
    let fixture = match &args.mock_clients {
        Some(p) => {
            let f = MockFixture::load(p).map_err(|e| CliError::prep("input", e))?;
            let bytes = std::fs::read(p).map_err(|e| CliError::io("input", p, e))?;
            inputs.push(record("mock_clients", p, sha256_hex(&bytes)));
            Some(f)
        }
        None => None,
    };
    let clients = build_clients(&cfg, fixture.as_ref())?;

    let requests = match &args.request {
        Some(r) => vec![r.clone()],
        None => {
            let r = generate_scenario(&image, clients.chat.as_ref())
                .map_err(|e| CliError::prep("scenario", e))?;
            watch.lap("scenario");
            r
        }
    };
    let mut plans = Vec::with_capacity(requests.len());
    for r in &requests {
        plans.push(plan_for_request(&cfg, &image, r, &clients)?);
    }
    watch.lap("planning");
    if args.review {
        for p in &plans {
            confirm(p)?;
        }
    }

    let dir = cfg.output_dir.clone();
    let mut manifest = RunManifest::new("plan", inputs, &cfg, cfg.optimizer.seed);
    if args.scenario {
        write_json("output", &dir.join("scenario.json"), &requests)?;
        manifest
            .artifacts
            .insert("scenario".into(), "scenario.json".into());
        for (i, p) in plans.iter().enumerate() {
            let rel = format!("plan_{i}.json");
            write_bytes("output", &dir.join(&rel), p.to_json().as_bytes())?;
            manifest.artifacts.insert(format!("plan_{i}"), rel);
        }
    } else {
        write_bytes(
            "output",
            &dir.join("plan.json"),
            plans[0].to_json().as_bytes(),
        )?;
        manifest.artifacts.insert("plan".into(), "plan.json".into());
    }
    manifest.timings = watch.finish();
    manifest.write(&dir)?;
    for p in &plans {
        eprintln!(
            "planned {} subtask(s): {}",
            p.subtasks.len(),
            p.target_prompt
        );
    }
    Ok(EXIT_OK)
}
