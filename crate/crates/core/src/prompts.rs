//! Editable prompt templates.
//!
//! Defaults are compiled in from `assets/prompts/`; a directory holding files
//! of the same names overrides them at startup.

use std::path::Path;

use crate::error::StorageError;

/// Text with `{key}` placeholders. Unknown `{...}` spans are left verbatim so
/// templates can contain literal JSON.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    text: String,
}

impl Template {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Single pass: substituted values are never re-scanned.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let hit = after.find('}').and_then(|close| {
                let key = &after[..close];
                vars.iter()
                    .find(|(k, _)| *k == key)
                    .map(|(_, v)| (close, *v))
            });
            match hit {
                Some((close, value)) => {
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptAssets {
    /// Placeholders: `{description}`, `{voices}`.
    pub persona: Template,
    /// Placeholders: `{name}`, `{traits}`, `{speaking_style}`, `{backstory}`,
    /// `{mood_seed}`, `{history}`, `{relevant}`, `{transcript}`, `{format}`.
    pub dialogue: Template,
    /// Placeholders: `{name}`.
    pub summary: Template,
    /// Spoken at Transformation. Placeholders: `{name}`.
    pub reflection: Template,
}

impl Default for PromptAssets {
    fn default() -> Self {
        Self {
            persona: Template::new(include_str!("../assets/prompts/persona.txt")),
            dialogue: Template::new(include_str!("../assets/prompts/dialogue.txt")),
            summary: Template::new(include_str!("../assets/prompts/summary.txt")),
            reflection: Template::new(include_str!("../assets/prompts/reflection.txt")),
        }
    }
}

impl PromptAssets {
    /// Defaults, with any of `persona.txt`, `dialogue.txt`, `summary.txt`,
    /// `reflection.txt` found in `dir` taking precedence.
    pub fn load_overrides(dir: &Path) -> Result<Self, StorageError> {
        let mut assets = Self::default();
        for (name, slot) in [
            ("persona.txt", &mut assets.persona),
            ("dialogue.txt", &mut assets.dialogue),
            ("summary.txt", &mut assets.summary),
            ("reflection.txt", &mut assets.reflection),
        ] {
            let path = dir.join(name);
            match std::fs::read_to_string(&path) {
                Ok(text) => *slot = Template::new(text),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(StorageError::io(&path, e)),
            }
        }
        Ok(assets)
    }
}
