use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use std::sync::LazyLock;

use super::{GatewayError, TaskKind, Var};

static SLOT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{\{\s*([a-z_]+)\s*\}\}").unwrap());

/// Values for the prompt variables. A present-but-empty value counts as supplied.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarBundle {
    values: BTreeMap<Var, String>,
}

impl VarBundle {
    pub fn new() -> Self {
        VarBundle::default()
    }

    pub fn set(&mut self, var: Var, value: impl Into<String>) -> &mut Self {
        self.values.insert(var, value.into());
        self
    }

    pub fn with(mut self, var: Var, value: impl Into<String>) -> Self {
        self.set(var, value);
        self
    }

    pub fn get(&self, var: Var) -> Option<&str> {
        self.values.get(&var).map(String::as_str)
    }

    pub fn remove(&mut self, var: Var) {
        self.values.remove(&var);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub task: TaskKind,
    pub body: String,
}

impl PromptTemplate {
    /// Checks that every slot is a known variable and every required one appears.
    pub fn new(task: TaskKind, body: impl Into<String>) -> Result<Self, GatewayError> {
        let body = body.into();
        let mut seen = Vec::new();
        for cap in SLOT.captures_iter(&body) {
            let name = &cap[1];
            let var = Var::from_slot(name).ok_or_else(|| GatewayError::Template {
                task,
                reason: format!("unknown slot {{{{{name}}}}}"),
            })?;
            seen.push(var);
        }
        for v in task.required_vars() {
            if !seen.contains(v) {
                return Err(GatewayError::Template {
                    task,
                    reason: format!("required var {} ({}) has no slot", v.index(), v.slot()),
                });
            }
        }
        Ok(PromptTemplate { task, body })
    }

    /// Substitutes every slot. Required variables must be present in `bundle`;
    /// optional ones render as empty text when absent.
    pub fn render(&self, bundle: &VarBundle) -> Result<String, GatewayError> {
        for v in self.task.required_vars() {
            if bundle.get(*v).is_none() {
                return Err(GatewayError::MissingVar { task: self.task, index: v.index(), name: v.slot() });
            }
        }
        let out = SLOT.replace_all(&self.body, |cap: &regex::Captures<'_>| {
            Var::from_slot(&cap[1]).and_then(|v| bundle.get(v)).unwrap_or("").to_string()
        });
        Ok(out.into_owned())
    }
}

fn builtin(task: TaskKind) -> &'static str {
    match task {
        TaskKind::InitialPlan => include_str!("../../templates/initial_plan.txt"),
        TaskKind::Reaction => include_str!("../../templates/reaction.txt"),
        TaskKind::ExtractPathInfo => include_str!("../../templates/extract_path_info.txt"),
        TaskKind::DailyReflection => include_str!("../../templates/daily_reflection.txt"),
        TaskKind::ChatInitiateNewDay => include_str!("../../templates/chat_initiate_new_day.txt"),
        TaskKind::ChatInitiateDuringDay => include_str!("../../templates/chat_initiate_during_day.txt"),
        TaskKind::ChatResponse => include_str!("../../templates/chat_response.txt"),
        TaskKind::ChatSummary => include_str!("../../templates/chat_summary.txt"),
        TaskKind::ImportanceScore => include_str!("../../templates/importance_score.txt"),
    }
}

/// One template per task.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<TaskKind, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let templates = TaskKind::ALL
            .into_iter()
            .map(|t| (t, PromptTemplate::new(t, builtin(t)).expect("bundled template is valid")))
            .collect();
        TemplateSet { templates }
    }
}

impl TemplateSet {
    /// Bundled templates, replaced by any `<task>.txt` found in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, GatewayError> {
        let mut set = TemplateSet::default();
        for t in TaskKind::ALL {
            let p = dir.join(format!("{}.txt", t.as_str()));
            if p.exists() {
                let body = std::fs::read_to_string(&p)
                    .map_err(|e| GatewayError::Template { task: t, reason: format!("{}: {e}", p.display()) })?;
                set.templates.insert(t, PromptTemplate::new(t, body)?);
            }
        }
        Ok(set)
    }

    pub fn get(&self, task: TaskKind) -> &PromptTemplate {
        &self.templates[&task]
    }

    pub fn render(&self, task: TaskKind, bundle: &VarBundle) -> Result<String, GatewayError> {
        self.get(task).render(bundle)
    }
}

/// True when `text` still contains a `{{slot}}` marker.
pub fn has_slot_marker(text: &str) -> bool {
    SLOT.is_match(text)
}
