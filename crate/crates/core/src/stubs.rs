//! Prompt-aware stand-ins for a generation model, used by `gateway.mode = stub`
//! and by tests. Each one reads the rendered template it is given and answers
//! deterministically from it.

use crate::gateway::StubGenerator;
use crate::raft::DEFAULT_IDK_LABEL;
use crate::templates;

/// Answers a refinement prompt with the original answer, unchanged.
pub fn refine_echo() -> StubGenerator {
    StubGenerator::from_fn(|prompt| {
        let answer = prompt.rsplit_once("ANSWER:\n").map(|(_, a)| a).unwrap_or(prompt);
        Ok(answer.trim().to_string())
    })
}

/// Answers a synthesis prompt with a question about the document's opening
/// words and the document's first sentence as the answer.
pub fn synth_from_document() -> StubGenerator {
    StubGenerator::from_fn(|prompt| {
        let body = prompt
            .split_once("DOCUMENT:\n")
            .map(|(_, rest)| rest.rsplit_once("\n\nWrite your analysis first").map_or(rest, |(b, _)| b))
            .unwrap_or(prompt);
        let words: Vec<&str> = body.split_whitespace().collect();
        let topic = words.iter().take(6).copied().collect::<Vec<_>>().join(" ");
        let flat = words.join(" ");
        let first_sentence = match flat.find(". ") {
            Some(i) => &flat[..=i],
            None => flat.as_str(),
        };
        let answer: String = first_sentence.chars().take(400).collect();
        Ok(format!(
            "Analysis: the document is short reference text, so a general question fits.\n\
             QUESTION: What does the documentation say about {topic}?\n\
             ANSWER: {answer}"
        ))
    })
}

/// Answers a RAFT prompt with the text of its first context passage, or with
/// the IDK label when the prompt carries no context.
pub fn rag_first_context() -> StubGenerator {
    StubGenerator::from_fn(|prompt| {
        let Some((_, ctx)) = prompt.split_once("CONTEXT:\n") else {
            return Ok(DEFAULT_IDK_LABEL.to_string());
        };
        let Some(first) = ctx.strip_prefix("[1] ") else {
            return Ok(DEFAULT_IDK_LABEL.to_string());
        };
        let text = first.split_once('\n').map_or("", |(_, t)| t);
        let end = text.find("\n\n[2] ").or_else(|| text.rfind("\n\nQuestion: ")).unwrap_or(text.len());
        let answer = text[..end].trim();
        Ok(if answer.is_empty() { DEFAULT_IDK_LABEL.to_string() } else { answer.to_string() })
    })
}

fn template_head(template: &str) -> &str {
    template.split("{{").next().unwrap_or(template)
}

/// Routes each prompt to the stub for the template it was rendered from,
/// recognized by the template's fixed leading text. Anything else is echoed.
pub fn dispatching() -> StubGenerator {
    let (synth, refine, rag) = (synth_from_document(), refine_echo(), rag_first_context());
    StubGenerator::from_fn(move |prompt| {
        use crate::gateway::{GenerationRequest, Generator};
        let req = GenerationRequest::new(prompt);
        if prompt.starts_with(template_head(templates::SYNTHESIZE)) {
            synth.generate(&req)
        } else if prompt.starts_with(template_head(templates::REFINE)) {
            refine.generate(&req)
        } else if prompt.starts_with(template_head(templates::RAFT_PROMPT)) {
            rag.generate(&req)
        } else {
            Ok(prompt.to_string())
        }
    })
}
