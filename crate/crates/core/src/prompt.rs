//! Three-part system prompt: personal profile, tool usage, skill selection.
//!
//! Rendered layout (blank lines separate the sections):
//!
//! ```text
//! <profile>
//!
//! <tools header>
//! <tool name><separator><Enable|Disable>     (one line per tool, config order)
//!
//! <skill line naming the function and skill>
//! ```
//!
//! [`PromptComposer::parse`] is the exact inverse of [`PromptComposer::compose`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::template::{Locale, LocaleTemplates, Templates};

pub const WEB_SEARCH: &str = "Web search";
pub const CALCULATOR: &str = "Calculator";
pub const SELF_CHECK: &str = "Self-check";

/// Behavioral mode named at the end of the system prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skill {
    General,
    Psychology,
    Socrates,
}

impl Skill {
    pub const ALL: [Skill; 3] = [Skill::General, Skill::Psychology, Skill::Socrates];
}

/// A user-selectable function of the assistant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionScene {
    #[serde(rename = "retrieval_qa")]
    RetrievalQA,
    EssayAssessment,
    EmotionalSupport,
    SocraticTeaching,
    GeneralChat,
}

impl FunctionScene {
    pub const ALL: [FunctionScene; 5] = [
        FunctionScene::RetrievalQA,
        FunctionScene::EssayAssessment,
        FunctionScene::EmotionalSupport,
        FunctionScene::SocraticTeaching,
        FunctionScene::GeneralChat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionScene::RetrievalQA => "retrieval_qa",
            FunctionScene::EssayAssessment => "essay_assessment",
            FunctionScene::EmotionalSupport => "emotional_support",
            FunctionScene::SocraticTeaching => "socratic_teaching",
            FunctionScene::GeneralChat => "general_chat",
        }
    }

    pub fn default_skill(self) -> Skill {
        match self {
            FunctionScene::EmotionalSupport => Skill::Psychology,
            FunctionScene::SocraticTeaching => Skill::Socrates,
            FunctionScene::RetrievalQA | FunctionScene::EssayAssessment | FunctionScene::GeneralChat => {
                Skill::General
            }
        }
    }

    /// How this scene treats one of the recognized tools.
    pub fn tool_rule(self, tool: &str) -> ToolRule {
        match (self, tool) {
            (FunctionScene::RetrievalQA, WEB_SEARCH | SELF_CHECK) => ToolRule::Fixed(true),
            (FunctionScene::EssayAssessment, WEB_SEARCH | SELF_CHECK) => {
                ToolRule::Optional { default: false }
            }
            _ => ToolRule::Fixed(false),
        }
    }
}

impl fmt::Display for FunctionScene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FunctionScene {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FunctionScene::ALL
            .into_iter()
            .find(|scene| scene.as_str() == s)
            .ok_or_else(|| format!("unknown scene {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToolRule {
    Fixed(bool),
    Optional { default: bool },
}

impl ToolRule {
    pub fn default_value(self) -> bool {
        match self {
            ToolRule::Fixed(value) | ToolRule::Optional { default: value } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolEntry {
    pub name: String,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ToolConfigError {
    #[error("duplicate tool name {0:?}")]
    Duplicate(String),
    #[error("tool names must be non-empty single lines, got {0:?}")]
    InvalidName(String),
}

/// Ordered tool availability list. Names are unique; order is insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<ToolEntry>", into = "Vec<ToolEntry>")]
pub struct ToolConfig {
    entries: Vec<ToolEntry>,
}

impl ToolConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// The recognized tools in their canonical order.
    pub fn standard(web_search: bool, calculator: bool, self_check: bool) -> Self {
        Self {
            entries: vec![
                ToolEntry { name: WEB_SEARCH.into(), enabled: web_search },
                ToolEntry { name: CALCULATOR.into(), enabled: calculator },
                ToolEntry { name: SELF_CHECK.into(), enabled: self_check },
            ],
        }
    }

    pub fn push(&mut self, name: impl Into<String>, enabled: bool) -> Result<(), ToolConfigError> {
        let name = name.into();
        if name.is_empty() || name.contains(['\n', '\r']) {
            return Err(ToolConfigError::InvalidName(name));
        }
        if self.get(&name).is_some() {
            return Err(ToolConfigError::Duplicate(name));
        }
        self.entries.push(ToolEntry { name, enabled });
        Ok(())
    }

    /// Updates an existing tool in place, or appends it.
    pub fn set(&mut self, name: &str, enabled: bool) -> Result<(), ToolConfigError> {
        match self.entries.iter_mut().find(|e| e.name == name) {
            Some(entry) => {
                entry.enabled = enabled;
                Ok(())
            }
            None => self.push(name, enabled),
        }
    }

    pub fn get(&self, name: &str) -> Option<bool> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.enabled)
    }

    pub fn is_enabled(&self, name: &str) -> bool {
        self.get(name).unwrap_or(false)
    }

    pub fn entries(&self) -> &[ToolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl TryFrom<Vec<ToolEntry>> for ToolConfig {
    type Error = ToolConfigError;

    fn try_from(entries: Vec<ToolEntry>) -> Result<Self, Self::Error> {
        let mut config = ToolConfig::new();
        for entry in entries {
            config.push(entry.name, entry.enabled)?;
        }
        Ok(config)
    }
}

impl From<ToolConfig> for Vec<ToolEntry> {
    fn from(config: ToolConfig) -> Self {
        config.entries
    }
}

/// Composable representation of a system prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemPromptSpec {
    pub profile_text: String,
    pub tools: ToolConfig,
    pub skill: Skill,
    pub scene: FunctionScene,
    #[serde(default)]
    pub locale: Locale,
}

impl SystemPromptSpec {
    pub fn retrieval_enabled(&self) -> bool {
        self.tools.is_enabled(WEB_SEARCH)
    }

    pub fn self_check_enabled(&self) -> bool {
        self.tools.is_enabled(SELF_CHECK)
    }
}

/// Partial tool configuration supplied when a conversation is created.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolOverrides {
    #[serde(default, alias = "retrieval", skip_serializing_if = "Option::is_none")]
    pub web_search: Option<bool>,
    #[serde(default, alias = "self-check", skip_serializing_if = "Option::is_none")]
    pub self_check: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calculator: Option<bool>,
}

impl ToolOverrides {
    pub fn is_empty(&self) -> bool {
        self.web_search.is_none() && self.self_check.is_none() && self.calculator.is_none()
    }

    fn iter(&self) -> impl Iterator<Item = (&'static str, bool)> {
        [
            (WEB_SEARCH, self.web_search),
            (SELF_CHECK, self.self_check),
            (CALCULATOR, self.calculator),
        ]
        .into_iter()
        .filter_map(|(name, value)| value.map(|v| (name, v)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OverrideError {
    #[error(
        "scene {scene} fixes {tool} to {}; only essay_assessment may toggle Web search and Self-check",
        if *.fixed { "Enable" } else { "Disable" }
    )]
    FixedTool {
        scene: FunctionScene,
        tool: &'static str,
        fixed: bool,
    },
    #[error("Self-check filters web search results and cannot be enabled while Web search is disabled")]
    SelfCheckWithoutRetrieval,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ComposeError {
    #[error("profile text must be non-empty")]
    EmptyProfile,
    #[error("profile text must be a single line")]
    MultilineProfile,
}

/// Which part of the prompt a parse error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Profile = 1,
    Tools = 2,
    Skill = 3,
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Section::Profile => "personal profile",
            Section::Tools => "tool usage",
            Section::Skill => "skill selection",
        };
        write!(f, "section {} ({name})", *self as u8)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: {section}: {reason}")]
    Malformed {
        section: Section,
        line: usize,
        reason: String,
    },
    #[error("line {line}: {section}: duplicate tool {name:?}")]
    DuplicateTool {
        section: Section,
        line: usize,
        name: String,
    },
    #[error("line {line}: {section}: unknown skill line {text:?}")]
    UnknownSkill {
        section: Section,
        line: usize,
        text: String,
    },
}

impl ParseError {
    pub fn section(&self) -> Section {
        match self {
            ParseError::Malformed { section, .. }
            | ParseError::DuplicateTool { section, .. }
            | ParseError::UnknownSkill { section, .. } => *section,
        }
    }

    pub fn line(&self) -> usize {
        match self {
            ParseError::Malformed { line, .. }
            | ParseError::DuplicateTool { line, .. }
            | ParseError::UnknownSkill { line, .. } => *line,
        }
    }
}

/// Renders and parses system prompts using a template set.
#[derive(Debug, Clone, Default)]
pub struct PromptComposer {
    templates: Templates,
}

impl PromptComposer {
    pub fn new(templates: Templates) -> Self {
        Self { templates }
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    pub fn scene_defaults(&self, scene: FunctionScene, locale: Locale) -> SystemPromptSpec {
        let tools = ToolConfig::standard(
            scene.tool_rule(WEB_SEARCH).default_value(),
            scene.tool_rule(CALCULATOR).default_value(),
            scene.tool_rule(SELF_CHECK).default_value(),
        );
        SystemPromptSpec {
            profile_text: self.templates.locale(locale).profile.clone(),
            tools,
            skill: scene.default_skill(),
            scene,
            locale,
        }
    }

    /// Scene defaults merged with per-conversation overrides, checked against
    /// the scene's tool rules. Overrides equal to a fixed value are accepted.
    pub fn effective_spec(
        &self,
        scene: FunctionScene,
        locale: Locale,
        overrides: &ToolOverrides,
    ) -> Result<SystemPromptSpec, OverrideError> {
        let mut spec = self.scene_defaults(scene, locale);
        for (tool, value) in overrides.iter() {
            if let ToolRule::Fixed(fixed) = scene.tool_rule(tool) {
                if fixed != value {
                    return Err(OverrideError::FixedTool { scene, tool, fixed });
                }
            }
            spec.tools
                .set(tool, value)
                .expect("recognized tool names are valid");
        }
        if spec.self_check_enabled() && !spec.retrieval_enabled() {
            return Err(OverrideError::SelfCheckWithoutRetrieval);
        }
        Ok(spec)
    }

    pub fn compose(&self, spec: &SystemPromptSpec) -> Result<String, ComposeError> {
        if spec.profile_text.trim().is_empty() {
            return Err(ComposeError::EmptyProfile);
        }
        if spec.profile_text.contains(['\n', '\r']) {
            return Err(ComposeError::MultilineProfile);
        }
        let t = self.templates.locale(spec.locale);

        let mut out = String::with_capacity(256);
        out.push_str(&spec.profile_text);
        out.push_str("\n\n");
        out.push_str(&t.tools_header);
        out.push('\n');
        for entry in spec.tools.entries() {
            out.push_str(&entry.name);
            out.push_str(&t.tool_separator);
            out.push_str(if entry.enabled { &t.tool_enabled } else { &t.tool_disabled });
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&t.render_skill_line(spec.scene, spec.skill));
        Ok(out)
    }

    pub fn parse(&self, text: &str) -> Result<SystemPromptSpec, ParseError> {
        let lines: Vec<&str> = text.split('\n').collect();
        let malformed = |section, line: usize, reason: &str| ParseError::Malformed {
            section,
            line,
            reason: reason.to_string(),
        };

        let profile = lines[0];
        if profile.trim().is_empty() || profile.contains('\r') {
            return Err(malformed(Section::Profile, 1, "expected a non-empty profile line"));
        }
        if lines.get(1) != Some(&"") {
            return Err(malformed(Section::Profile, 2, "expected a blank line after the profile"));
        }

        let header = lines.get(2).copied();
        let (locale, t) = Locale::ALL
            .into_iter()
            .map(|locale| (locale, self.templates.locale(locale)))
            .find(|(_, t)| header == Some(t.tools_header.as_str()))
            .ok_or_else(|| malformed(Section::Tools, 3, "missing tools header"))?;

        let mut tools = ToolConfig::new();
        let mut idx = 3;
        loop {
            let Some(&line) = lines.get(idx) else {
                return Err(malformed(Section::Tools, idx + 1, "unexpected end of prompt"));
            };
            if line.is_empty() {
                break;
            }
            let (name, enabled) = parse_tool_line(t, line)
                .ok_or_else(|| malformed(Section::Tools, idx + 1, "expected `<tool><separator><status>`"))?;
            tools.push(name, enabled).map_err(|err| match err {
                ToolConfigError::Duplicate(name) => ParseError::DuplicateTool {
                    section: Section::Tools,
                    line: idx + 1,
                    name,
                },
                ToolConfigError::InvalidName(_) => {
                    malformed(Section::Tools, idx + 1, "empty tool name")
                }
            })?;
            idx += 1;
        }

        let skill_idx = idx + 1;
        let Some(&skill_line) = lines.get(skill_idx) else {
            return Err(malformed(Section::Skill, skill_idx + 1, "missing skill line"));
        };
        let (scene, skill) = FunctionScene::ALL
            .into_iter()
            .flat_map(|scene| Skill::ALL.into_iter().map(move |skill| (scene, skill)))
            .find(|&(scene, skill)| t.render_skill_line(scene, skill) == skill_line)
            .ok_or_else(|| ParseError::UnknownSkill {
                section: Section::Skill,
                line: skill_idx + 1,
                text: skill_line.to_string(),
            })?;
        if lines.len() > skill_idx + 1 {
            return Err(malformed(
                Section::Skill,
                skill_idx + 2,
                "unexpected content after the skill line",
            ));
        }

        Ok(SystemPromptSpec {
            profile_text: profile.to_string(),
            tools,
            skill,
            scene,
            locale,
        })
    }
}

fn parse_tool_line<'a>(t: &LocaleTemplates, line: &'a str) -> Option<(&'a str, bool)> {
    [(t.tool_enabled.as_str(), true), (t.tool_disabled.as_str(), false)]
        .into_iter()
        .find_map(|(status, enabled)| {
            line.strip_suffix(status)
                .and_then(|rest| rest.strip_suffix(t.tool_separator.as_str()))
                .filter(|name| !name.is_empty())
                .map(|name| (name, enabled))
        })
}

/// English defaults for a scene using the built-in templates.
pub fn scene_defaults(scene: FunctionScene) -> SystemPromptSpec {
    PromptComposer::default().scene_defaults(scene, Locale::En)
}
