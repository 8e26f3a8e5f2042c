use std::sync::{Arc, Condvar, Mutex};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{route, GatewayError, ModelTier, TaskKind, TemplateSet, VarBundle};

/// One generation request.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub task: TaskKind,
    pub tier: ModelTier,
    pub agent: String,
    pub system: String,
    pub prompt: String,
    /// Structured form of the prompt inputs.
    pub context: serde_json::Value,
    /// 0 for the first ask, 1 for the re-ask after malformed output.
    pub attempt: u32,
}

/// Something that turns a request into raw (JSON) text.
pub trait CognitionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError>;
}

/// Counting semaphore bounding concurrent backend calls.
#[derive(Debug)]
pub struct InFlightLimit {
    max: usize,
    used: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a> {
    limit: &'a InFlightLimit,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        InFlightLimit { max: max.max(1), used: Mutex::new(0), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.max {
            used = self.cv.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        Permit { limit: self }
    }

    pub fn in_use(&self) -> usize {
        *self.used.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.limit.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.limit.cv.notify_one();
    }
}

const SYSTEM_PROMPT: &str = "You role-play a resident of a small simulated city. Answer only with the JSON object requested.";

/// Template rendering, backend dispatch and output parsing for all tasks.
pub struct Gateway {
    backend: Arc<dyn CognitionBackend>,
    fallback: Option<Arc<dyn CognitionBackend>>,
    templates: TemplateSet,
    limit: InFlightLimit,
    pub simulation_description: String,
    pub network_description: String,
}

impl Gateway {
    pub fn new(backend: Arc<dyn CognitionBackend>, templates: TemplateSet, max_in_flight: usize) -> Self {
        Gateway {
            backend,
            fallback: None,
            templates,
            limit: InFlightLimit::new(max_in_flight),
            simulation_description: String::new(),
            network_description: String::new(),
        }
    }

    /// Backend used when the primary one fails with a transport error.
    pub fn with_fallback(mut self, fallback: Arc<dyn CognitionBackend>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn limit(&self) -> &InFlightLimit {
        &self.limit
    }

    /// Adds the simulation and network descriptions (vars 1 and 2).
    pub fn base_bundle(&self) -> VarBundle {
        use super::Var;
        VarBundle::new()
            .with(Var::SimulationDescription, self.simulation_description.clone())
            .with(Var::NetworkDescription, self.network_description.clone())
    }

    pub fn render(&self, task: TaskKind, bundle: &VarBundle) -> Result<String, GatewayError> {
        self.templates.render(task, bundle)
    }

    /// Renders, asks the backend and parses the answer into `T`. Malformed output gets
    /// one re-ask, then a brace-extraction repair, then a schema error.
    pub fn complete<C: Serialize, T: DeserializeOwned>(
        &self,
        task: TaskKind,
        agent: &str,
        bundle: &VarBundle,
        context: &C,
    ) -> Result<T, GatewayError> {
        let prompt = self.render(task, bundle)?;
        let mut req = CompletionRequest {
            task,
            tier: route(task),
            agent: agent.to_string(),
            system: SYSTEM_PROMPT.to_string(),
            prompt,
            context: serde_json::to_value(context).map_err(|e| GatewayError::Schema { task, reason: e.to_string() })?,
            attempt: 0,
        };
        let first = self.call(&req)?;
        if let Ok(v) = serde_json::from_str::<T>(first.trim()) {
            return Ok(v);
        }
        req.attempt = 1;
        req.prompt.push_str("\n\nYour previous answer was not valid JSON for the requested schema. Reply with the JSON object only.");
        let second = self.call(&req)?;
        for raw in [&second, &first] {
            if let Ok(v) = serde_json::from_str::<T>(raw.trim()) {
                return Ok(v);
            }
            if let Some(inner) = extract_json_object(raw) {
                if let Ok(v) = serde_json::from_str::<T>(inner) {
                    return Ok(v);
                }
            }
        }
        Err(GatewayError::Schema { task, reason: format!("unparseable output: {}", truncate(&second, 200)) })
    }

    fn call(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let _permit = self.limit.acquire();
        match self.backend.complete(req) {
            Ok(s) => Ok(s),
            Err(e @ GatewayError::Transport { .. }) => match &self.fallback {
                Some(fb) => {
                    tracing::warn!(task = %req.task, agent = %req.agent, error = %e, "backend failed; using fallback");
                    fb.complete(req)
                }
                None => Err(e),
            },
            Err(e) => Err(e),
        }
    }
}

/// Outermost `{...}` span of `text`, if balanced.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ImportanceContext, ImportanceOutput, Var};
    use crate::memory::ConceptKind;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Scripted {
        answers: Vec<&'static str>,
        calls: AtomicUsize,
    }

    impl CognitionBackend for Scripted {
        fn name(&self) -> &str {
            "scripted"
        }
        fn complete(&self, _req: &CompletionRequest) -> Result<String, GatewayError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.answers[i.min(self.answers.len() - 1)].to_string())
        }
    }

    fn gateway(answers: Vec<&'static str>) -> (Gateway, Arc<Scripted>) {
        let b = Arc::new(Scripted { answers, calls: AtomicUsize::new(0) });
        (Gateway::new(b.clone(), TemplateSet::default(), 2), b)
    }

    fn ask(g: &Gateway) -> Result<ImportanceOutput, GatewayError> {
        let bundle = g.base_bundle().with(Var::ConceptType, "event").with(Var::ConceptDescription, "x");
        g.complete(TaskKind::ImportanceScore, "a", &bundle, &ImportanceContext { kind: ConceptKind::Event, description: "x".into() })
    }

    #[test]
    fn reask_then_repair() {
        let (g, b) = gateway(vec!["not json", "Sure! {\"score\": 0.4} hope that helps"]);
        assert_eq!(ask(&g).unwrap().score, 0.4);
        assert_eq!(b.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn schema_error_after_retry() {
        let (g, _) = gateway(vec!["nope", "still nope"]);
        assert!(matches!(ask(&g), Err(GatewayError::Schema { task: TaskKind::ImportanceScore, .. })));
    }

    #[test]
    fn limit_blocks_and_releases() {
        let l = InFlightLimit::new(2);
        let a = l.acquire();
        let _b = l.acquire();
        assert_eq!(l.in_use(), 2);
        drop(a);
        assert_eq!(l.in_use(), 1);
    }
}
