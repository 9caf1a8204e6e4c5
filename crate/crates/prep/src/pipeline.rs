//! End-to-end preparation: request to draft, draft to grounded plan.

use gas_core::{EditPlan, GasConfig};

use crate::clients::{ChatClient, ChatRequest, ChatTask, DetectorClient};
use crate::error::Result;
use crate::grounding::{ground_phrases, rasterize_mask, GroundingBox};
use crate::parse::{parse_plan_response, parse_scenario_response, PlanDraft};
use crate::plan_file::{assemble_plan, PlanFile};
use crate::prompts::{render_decompose_prompt, SCENARIO_PROMPT};
use crate::request::{SourceImage, UserRequest};

/// Sends the decomposition prompt with the image and parses the answer.
pub fn decompose_request(req: &UserRequest, chat: &dyn ChatClient) -> Result<PlanDraft> {
    let prompt = render_decompose_prompt(req.request_text.trim());
    let raw = chat.complete(&ChatRequest {
        task: ChatTask::Decompose,
        request_text: Some(&req.request_text),
        prompt: &prompt,
        image_png: req.image.png(),
    })?;
    parse_plan_response(&raw)
}

/// Asks the chat model for three synthetic edit requests for `image`.
pub fn generate_scenario(image: &SourceImage, chat: &dyn ChatClient) -> Result<Vec<String>> {
    let raw = chat.complete(&ChatRequest {
        task: ChatTask::Scenario,
        request_text: None,
        prompt: SCENARIO_PROMPT,
        image_png: image.png(),
    })?;
    parse_scenario_response(&raw)
}

#[derive(Debug, Clone)]
pub struct PreparedPlan {
    pub draft: PlanDraft,
    pub boxes: Vec<GroundingBox>,
    pub plan: EditPlan,
    pub file: PlanFile,
}

/// Decomposes, grounds each source phrase, rasterizes to `latent_dims`
/// and assembles the plan.
pub fn prepare_plan(
    req: &UserRequest,
    chat: &dyn ChatClient,
    detector: &dyn DetectorClient,
    latent_dims: (usize, usize),
    gas: &GasConfig,
) -> Result<PreparedPlan> {
    let draft = decompose_request(req, chat)?;
    let phrases: Vec<String> = draft.subtasks().map(|(s, _, _)| s.to_string()).collect();
    let boxes = ground_phrases(&req.image, &phrases, detector)?;
    let masks = boxes
        .iter()
        .map(|b| rasterize_mask(b, req.image.dims(), latent_dims))
        .collect::<Result<Vec<_>>>()?;
    let plan = assemble_plan(&draft, &masks, gas)?;
    let file = PlanFile::from_plan(&plan, &boxes)?;
    Ok(PreparedPlan {
        draft,
        boxes,
        plan,
        file,
    })
}
