//! LLM knowledge generation: prompt the backend with handpicked
//! Context/Question/LLM_Knowledge triplets and the test input left blank.

use crate::backend::{CompletionBackend, CompletionRequest};
use crate::domain::VqaSample;
use crate::prompting::{build_knowledge_prompt, ExampleRecord};

use super::ToolError;

/// Generate background knowledge for a sample. An empty completion yields
/// empty knowledge; the agent proceeds without it.
pub fn generate_llm_knowledge(
    sample: &VqaSample,
    examples: &[ExampleRecord],
    backend: &dyn CompletionBackend,
) -> Result<String, ToolError> {
    let test = ExampleRecord::new(sample.caption.clone(), sample.question.clone());
    let prompt = build_knowledge_prompt(examples, &test)?;
    let request = CompletionRequest::knowledge(prompt)?;
    let result = backend.complete(&request)?;
    Ok(result.text.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;

    fn sample() -> VqaSample {
        VqaSample::new(
            "s1",
            "What type of terrain is this sport practiced in?",
            "A man riding skis down a snow covered slope.",
            None,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn scripted_knowledge_passes_through() {
        let mut mock = MockBackend::new();
        mock.script_substring("LLM_Knowledge:", "A slope is snow-covered terrain.");
        let knowledge = generate_llm_knowledge(&sample(), &[], &mock).unwrap();
        assert_eq!(knowledge, "A slope is snow-covered terrain.");
    }

    #[test]
    fn separator_in_completion_is_truncated_by_stop_sequence() {
        let mut mock = MockBackend::new();
        mock.script_substring(
            "LLM_Knowledge:",
            "First part of the knowledge.\n=====\nContext: leaked next block",
        );
        let knowledge = generate_llm_knowledge(&sample(), &[], &mock).unwrap();
        assert_eq!(knowledge, "First part of the knowledge.");
    }

    #[test]
    fn prompt_ends_with_blank_knowledge_line() {
        let mock = MockBackend::new().with_fallback("anything");
        generate_llm_knowledge(&sample(), &[], &mock).unwrap();
        let prompts = mock.requests();
        assert_eq!(prompts.len(), 1);
        assert!(prompts[0].ends_with("LLM_Knowledge:"));
    }

    #[test]
    fn backend_errors_carry_tool_context() {
        let mock = MockBackend::new();
        let err = generate_llm_knowledge(&sample(), &[], &mock).unwrap_err();
        assert!(matches!(err, ToolError::KnowledgeBackend(_)));
    }
}
