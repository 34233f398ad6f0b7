//! Prompt templates shipped in the repository's `templates/` directory.
//!
//! The same RAFT template renders training prompts and inference prompts.

use sha2::{Digest, Sha256};

pub const REFINE: &str = include_str!("../../../templates/refine.txt");
pub const SYNTHESIZE: &str = include_str!("../../../templates/synthesize.txt");
pub const FEW_SHOT_BLOCK: &str = include_str!("../../../templates/few_shot_block.txt");
pub const RAFT_PROMPT: &str = include_str!("../../../templates/raft_prompt.txt");

/// Replaces `{{name}}` placeholders in one left-to-right pass. Substituted
/// values are never rescanned, so text containing `{{...}}` is inserted
/// verbatim. Unknown placeholders are left as-is.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = &after[..close];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, value)) => out.push_str(value),
                    None => {
                        out.push_str("{{");
                        out.push_str(name);
                        out.push_str("}}");
                    }
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Content hash identifying the template set, recorded in dataset manifests.
pub fn template_version() -> String {
    let mut h = Sha256::new();
    for t in [REFINE, SYNTHESIZE, FEW_SHOT_BLOCK, RAFT_PROMPT] {
        h.update((t.len() as u64).to_le_bytes());
        h.update(t.as_bytes());
    }
    let digest = h.finalize();
    format!("sha256:{}", digest[..8].iter().map(|b| format!("{b:02x}")).collect::<String>())
}
