use crate::corpus::Chunk;
use crate::templates;

/// Stands in for the passages when nothing was retrieved.
pub const NO_CONTEXT_BLOCK: &str = "[no context available]\nNo authorized passages matched this question.";

/// Numbered passages, `[i] chunk_id` followed by the chunk text, separated by
/// blank lines.
pub fn render_context(chunks: &[&Chunk]) -> String {
    if chunks.is_empty() {
        return NO_CONTEXT_BLOCK.to_string();
    }
    chunks
        .iter()
        .enumerate()
        .map(|(i, c)| format!("[{}] {}\n{}", i + 1, c.chunk_id, c.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Renders the RAFT prompt for `question` over `chunks` (best first). When the
/// result exceeds `max_chars`, the lowest-ranked chunks are dropped until it
/// fits. Returns the prompt and how many chunks it holds.
pub fn render_raft_prompt(question: &str, chunks: &[&Chunk], max_chars: usize) -> (String, usize) {
    let mut kept = chunks.len();
    loop {
        let prompt = templates::render(
            templates::RAFT_PROMPT,
            &[("context", &render_context(&chunks[..kept])), ("question", question)],
        );
        if kept == 0 || prompt.chars().count() <= max_chars {
            if kept == 0 && prompt.chars().count() > max_chars {
                tracing::warn!(max_chars, "question alone exceeds the prompt limit");
            }
            return (prompt, kept);
        }
        kept -= 1;
    }
}
