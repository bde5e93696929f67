//! Prompt templates with `{rubric}` and `{prompt}` placeholders. Templates
//! ship as editable text files; the built-in default is used when no path is
//! configured.

use std::path::Path;

use super::JudgeError;

const DEFAULT_BINARY: &str = include_str!("../../templates/judge_binary.txt");

#[derive(Debug, Clone)]
pub struct Template {
    text: String,
}

impl Template {
    /// The built-in yes/no scoring template.
    pub fn binary_default() -> Self {
        Self {
            text: DEFAULT_BINARY.to_string(),
        }
    }

    pub fn from_text(text: &str) -> Self {
        Self {
            text: text.to_string(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, JudgeError> {
        Ok(Self {
            text: std::fs::read_to_string(path)?,
        })
    }

    pub fn render(&self, rubric: &str, prompt: &str) -> String {
        self.text
            .replace("{rubric}", rubric)
            .replace("{prompt}", prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_both_placeholders() {
        let template = Template::from_text("R: {rubric}\nP: {prompt}\n");
        let rendered = template.render("faces are sharp", "a portrait");
        assert_eq!(rendered, "R: faces are sharp\nP: a portrait\n");
    }

    #[test]
    fn default_template_has_both_placeholders() {
        let rendered = Template::binary_default().render("CRIT", "PROMPT");
        assert!(rendered.contains("CRIT"));
        assert!(rendered.contains("PROMPT"));
        assert!(!rendered.contains("{rubric}"));
        assert!(!rendered.contains("{prompt}"));
    }
}
