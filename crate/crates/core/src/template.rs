//! Prompt template file loading and placeholder rendering.
//!
//! The template file is TOML with one table per locale. The built-in file is
//! compiled into the binary; deployments may point at their own copy, which
//! is validated the same way at startup.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::prompt::{FunctionScene, Skill};

/// The template file shipped with the crate.
pub const DEFAULT_TEMPLATE_TOML: &str = include_str!("../templates/prompts.toml");

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("failed to read template file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("template file is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("template {locale}.{key} is missing placeholder {{{placeholder}}}")]
    MissingPlaceholder {
        locale: Locale,
        key: &'static str,
        placeholder: &'static str,
    },
    #[error("template {locale}.{key} must not be empty")]
    Empty { locale: Locale, key: &'static str },
    #[error("template {locale}.{key} must be a single line")]
    Multiline { locale: Locale, key: &'static str },
    #[error("template {locale}: skill lines for {first} and {second} render identically")]
    AmbiguousSkillLine {
        locale: Locale,
        first: String,
        second: String,
    },
}

/// Output language of prompts and requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Locale {
    #[default]
    En,
    Zh,
}

impl Locale {
    pub const ALL: [Locale; 2] = [Locale::En, Locale::Zh];

    pub fn as_str(self) -> &'static str {
        match self {
            Locale::En => "en",
            Locale::Zh => "zh",
        }
    }
}

impl std::fmt::Display for Locale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Locale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Locale::En),
            "zh" => Ok(Locale::Zh),
            other => Err(format!("unknown locale {other:?} (expected en or zh)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SkillLabels {
    pub general: String,
    pub psychology: String,
    pub socrates: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct FunctionLabels {
    pub retrieval_qa: String,
    pub essay_assessment: String,
    pub emotional_support: String,
    pub socratic_teaching: String,
    pub general_chat: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct RequestTemplates {
    /// Self-check question; `{question}`.
    pub self_check: String,
    /// Injected snippet; `{title}`, `{text}`, `{url}`.
    pub context_message: String,
    /// Essay assessment request; `{essay}`.
    pub essay: String,
    /// Multiple-choice question; `{question}`, `{a}`..`{d}`.
    pub multiple_choice: String,
}

/// Everything rendered for one locale.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct LocaleTemplates {
    pub profile: String,
    pub tools_header: String,
    pub tool_separator: String,
    pub tool_enabled: String,
    pub tool_disabled: String,
    /// Final system prompt line; `{function}` and `{skill}`.
    pub skill_line: String,
    /// Lowercased first tokens accepted as "yes" by the self-check.
    pub affirmatives: Vec<String>,
    pub skills: SkillLabels,
    pub functions: FunctionLabels,
    pub requests: RequestTemplates,
}

impl LocaleTemplates {
    pub fn skill_label(&self, skill: Skill) -> &str {
        match skill {
            Skill::General => &self.skills.general,
            Skill::Psychology => &self.skills.psychology,
            Skill::Socrates => &self.skills.socrates,
        }
    }

    pub fn function_label(&self, scene: FunctionScene) -> &str {
        match scene {
            FunctionScene::RetrievalQA => &self.functions.retrieval_qa,
            FunctionScene::EssayAssessment => &self.functions.essay_assessment,
            FunctionScene::EmotionalSupport => &self.functions.emotional_support,
            FunctionScene::SocraticTeaching => &self.functions.socratic_teaching,
            FunctionScene::GeneralChat => &self.functions.general_chat,
        }
    }

    pub fn render_skill_line(&self, scene: FunctionScene, skill: Skill) -> String {
        render(
            &self.skill_line,
            &[
                ("function", self.function_label(scene)),
                ("skill", self.skill_label(skill)),
            ],
        )
    }

    fn validate(&self, locale: Locale) -> Result<(), TemplateError> {
        let single_lines: [(&'static str, &str); 6] = [
            ("profile", &self.profile),
            ("tools_header", &self.tools_header),
            ("tool_separator", &self.tool_separator),
            ("tool_enabled", &self.tool_enabled),
            ("tool_disabled", &self.tool_disabled),
            ("skill_line", &self.skill_line),
        ];
        for (key, value) in single_lines {
            if value.trim().is_empty() {
                return Err(TemplateError::Empty { locale, key });
            }
            if value.contains('\n') || value.contains('\r') {
                return Err(TemplateError::Multiline { locale, key });
            }
        }
        if self.tool_enabled == self.tool_disabled {
            return Err(TemplateError::Empty {
                locale,
                key: "tool_disabled",
            });
        }
        if self.affirmatives.is_empty() {
            return Err(TemplateError::Empty {
                locale,
                key: "affirmatives",
            });
        }

        let required: [(&'static str, &str, &[&'static str]); 5] = [
            ("skill_line", &self.skill_line, &["function", "skill"]),
            ("requests.self_check", &self.requests.self_check, &["question"]),
            (
                "requests.context_message",
                &self.requests.context_message,
                &["title", "text", "url"],
            ),
            ("requests.essay", &self.requests.essay, &["essay"]),
            (
                "requests.multiple_choice",
                &self.requests.multiple_choice,
                &["question", "a", "b", "c", "d"],
            ),
        ];
        for (key, template, placeholders) in required {
            for &placeholder in placeholders {
                if !template.contains(&format!("{{{placeholder}}}")) {
                    return Err(TemplateError::MissingPlaceholder {
                        locale,
                        key,
                        placeholder,
                    });
                }
            }
        }

        // Parsing a prompt recovers (scene, skill) from the last line, so all
        // combinations must render differently.
        let mut seen: Vec<(String, String)> = Vec::new();
        for scene in FunctionScene::ALL {
            for skill in Skill::ALL {
                let line = self.render_skill_line(scene, skill);
                if line.contains('\n') {
                    return Err(TemplateError::Multiline {
                        locale,
                        key: "skill_line",
                    });
                }
                let name = format!("{scene:?}/{skill:?}");
                if let Some((other, _)) = seen.iter().find(|(_, l)| *l == line) {
                    return Err(TemplateError::AmbiguousSkillLine {
                        locale,
                        first: other.clone(),
                        second: name,
                    });
                }
                seen.push((name, line));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
struct TemplateFile {
    en: LocaleTemplates,
    zh: LocaleTemplates,
}

/// Validated templates for every locale. Cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    inner: Arc<TemplateFile>,
}

impl Templates {
    pub fn from_toml(text: &str) -> Result<Self, TemplateError> {
        let file: TemplateFile = toml::from_str(text)?;
        file.en.validate(Locale::En)?;
        file.zh.validate(Locale::Zh)?;
        Ok(Self {
            inner: Arc::new(file),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn locale(&self, locale: Locale) -> &LocaleTemplates {
        match locale {
            Locale::En => &self.inner.en,
            Locale::Zh => &self.inner.zh,
        }
    }
}

impl Default for Templates {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TEMPLATE_TOML).expect("built-in template file is valid")
    }
}

/// Substitutes `{name}` placeholders in a single left-to-right pass.
///
/// Substituted values are never rescanned, and braces that do not enclose a
/// known name are copied through unchanged.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replaced = after.find('}').and_then(|close| {
            let name = &after[..close];
            values
                .iter()
                .find(|(key, _)| *key == name)
                .map(|(_, value)| (close, *value))
        });
        match replaced {
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
