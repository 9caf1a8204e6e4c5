//! Turns an image and a free-form edit request into a grounded edit plan:
//! chat-model decomposition into per-object phrases, zero-shot detection of
//! each source phrase, and rasterization of the boxes to latent masks.

pub mod clients;
mod error;
pub mod grounding;
pub mod parse;
pub mod pipeline;
pub mod plan_file;
pub mod prompts;
pub mod request;

pub use clients::{
    CachedChatClient, ChatClient, ChatRequest, ChatTask, Detections, DetectorClient,
    HttpChatClient, HttpChatConfig, HttpDetectorClient, HttpDetectorConfig, MockChatClient,
    MockDetectorClient, MockFixture, Transport,
};
pub use error::{PrepError, Result};
pub use grounding::{ground_phrases, rasterize_mask, GroundingBox};
pub use parse::{parse_plan_response, parse_scenario_response, PlanDraft};
pub use pipeline::{decompose_request, generate_scenario, prepare_plan, PreparedPlan};
pub use plan_file::{assemble_plan, decode_rle, encode_rle, PlanFile, PlanFileSubtask};
pub use request::{SourceImage, UserRequest};
