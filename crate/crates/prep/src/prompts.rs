//! Chain-of-thought prompt templates sent to the multimodal chat model.
//! The source image is attached to each message separately.

/// Template asking the model for three synthetic edit suggestions.
pub const SCENARIO_PROMPT: &str = include_str!("../assets/scenario_prompt.txt");

/// Template asking the model to split a request into per-object phrases.
/// Contains the single substitution slot [`REQUEST_SLOT`].
pub const DECOMPOSE_PROMPT: &str = include_str!("../assets/decompose_prompt.txt");

pub const REQUEST_SLOT: &str = "{responses}";

/// Fills the request slot of [`DECOMPOSE_PROMPT`].
pub fn render_decompose_prompt(request_text: &str) -> String {
    DECOMPOSE_PROMPT.replacen(REQUEST_SLOT, request_text, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decompose_template_has_one_slot() {
        assert_eq!(DECOMPOSE_PROMPT.matches(REQUEST_SLOT).count(), 1);
        let p = render_decompose_prompt("Change a dog into a cat.");
        assert!(p.contains("Requests:Change a dog into a cat.\n"));
        assert!(!p.contains(REQUEST_SLOT));
    }

    #[test]
    fn templates_carry_format_instructions() {
        assert!(SCENARIO_PROMPT
            .trim_end()
            .ends_with("change = [change A into B. change C into D. change E into F.]"));
        assert!(DECOMPOSE_PROMPT.contains("'preserve_form': [1, 0, 0, 0]"));
        assert!(!SCENARIO_PROMPT.contains('{'));
    }
}
