//! Tool registry, planning and link rendering. Tools are surfaced as links,
//! never executed.

use std::collections::{BTreeMap, BTreeSet};

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result};
use crate::providers::RequestContext;

/// Everything except RFC 3986 unreserved characters.
const COMPONENT: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticType {
    LocationName,
    FreeText,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub semantic_type: SemanticType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationSpec {
    pub url_template: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub function_desc: String,
    pub primary_application: String,
    pub invocation: InvocationSpec,
    /// Trigger terms for the built-in planner.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
}

/// Placeholder names of a `{param}` template, in order.
fn placeholders(template: &str) -> std::result::Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err("unmatched '}'".into());
        }
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or("unclosed '{'")?;
        let name = &after[..close];
        if name.is_empty() || name.contains('{') {
            return Err(format!("bad placeholder {{{name}}}"));
        }
        out.push(name.to_string());
        rest = &after[close + 1..];
    }
    Ok(out)
}

impl ToolSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::MalformedTemplate {
            tool: self.name.clone(),
            reason,
        };
        let holes = placeholders(&self.invocation.url_template).map_err(bad)?;
        let params: BTreeSet<&str> = self
            .invocation
            .params
            .iter()
            .map(|p| p.name.as_str())
            .collect();
        if params.len() != self.invocation.params.len() {
            return Err(bad("duplicate parameter name".into()));
        }
        if let Some(h) = holes.iter().find(|h| !params.contains(h.as_str())) {
            return Err(bad(format!("placeholder {{{h}}} has no parameter")));
        }
        if let Some(p) = params.iter().find(|p| !holes.iter().any(|h| h == *p)) {
            return Err(bad(format!(
                "parameter {p} does not appear in the template"
            )));
        }
        Ok(())
    }

    fn primary_param(&self) -> Option<&ParamSpec> {
        self.invocation.params.first()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ToolRegistry {
    tools: Vec<ToolSpec>,
}

impl ToolRegistry {
    pub fn register_tool(&mut self, spec: ToolSpec) -> Result<()> {
        if self.get(&spec.name).is_some() {
            return Err(Error::DuplicateToolName(spec.name));
        }
        spec.validate()?;
        self.tools.push(spec);
        Ok(())
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut reg = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let spec: ToolSpec = serde_json::from_str(line).map_err(|e| Error::Schema {
                line: i + 1,
                message: e.to_string(),
            })?;
            reg.register_tool(spec)?;
        }
        Ok(reg)
    }

    pub fn bundled() -> Self {
        Self::from_jsonl(crate::assets::TOOLS).expect("bundled tools are valid")
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }
}

/// Known place names for the location tool.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer {
    names: BTreeSet<String>,
}

impl Gazetteer {
    pub fn new(names: impl IntoIterator<Item = String>) -> Self {
        Self {
            names: names
                .into_iter()
                .map(|n| n.trim().to_string())
                .filter(|n| !n.is_empty())
                .collect(),
        }
    }

    /// One name per line; `#` starts a comment line.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string),
        )
    }

    pub fn extend(&mut self, names: impl IntoIterator<Item = String>) {
        self.names
            .extend(names.into_iter().filter(|n| !n.trim().is_empty()));
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Names occurring in `text` (case-insensitive), by first occurrence.
    /// A name contained in a longer matched name at the same spot is dropped.
    pub fn find(&self, text: &str) -> Vec<String> {
        let hay = text.to_lowercase();
        let mut hits: Vec<(usize, usize, &String)> = Vec::new();
        for n in &self.names {
            let needle = n.to_lowercase();
            if let Some(pos) = hay.find(&needle) {
                hits.push((pos, pos + needle.len(), n));
            }
        }
        hits.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut kept: Vec<(usize, usize, &String)> = Vec::new();
        for h in hits {
            if !kept.iter().any(|k| k.0 <= h.0 && h.1 <= k.1) {
                kept.push(h);
            }
        }
        kept.into_iter().map(|(_, _, n)| n.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposedInvocation {
    pub tool: String,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub tool: String,
    pub args: BTreeMap<String, String>,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

pub trait Planner: Send + Sync {
    fn plan(
        &self,
        response: &str,
        tools: &[ToolSpec],
    ) -> std::result::Result<Vec<ProposedInvocation>, ProviderError>;
}

pub fn validate_invocation(p: ProposedInvocation, registry: &ToolRegistry) -> ToolInvocation {
    let reason = match registry.get(&p.tool) {
        None => Some(format!("unknown tool {:?}", p.tool)),
        Some(spec) => {
            let wanted: BTreeSet<&str> = spec
                .invocation
                .params
                .iter()
                .map(|x| x.name.as_str())
                .collect();
            if let Some(x) = p.args.keys().find(|k| !wanted.contains(k.as_str())) {
                Some(format!("unexpected argument {x:?}"))
            } else {
                wanted
                    .iter()
                    .find(|w| p.args.get(**w).is_none_or(|v| v.trim().is_empty()))
                    .map(|w| format!("missing argument {w:?}"))
            }
        }
    };
    ToolInvocation {
        tool: p.tool,
        args: p.args,
        valid: reason.is_none(),
        reason,
    }
}

/// What the built-in planner reads.
#[derive(Debug, Clone, Copy)]
pub struct PlanInput<'a> {
    pub draft: &'a str,
    pub query_pivot: &'a str,
    pub evidence_titles: &'a [&'a str],
}

fn builtin_plan(
    input: &PlanInput<'_>,
    registry: &ToolRegistry,
    gazetteer: &Gazetteer,
) -> Vec<ProposedInvocation> {
    let mut scan = String::from(input.draft);
    for t in input.evidence_titles {
        scan.push('\n');
        scan.push_str(t);
    }
    let places = gazetteer.find(&scan);
    let lowered = format!("{}\n{}", scan, input.query_pivot).to_lowercase();
    let mut out = Vec::new();
    for tool in registry.tools() {
        let params = &tool.invocation.params;
        let location_only = !params.is_empty()
            && params
                .iter()
                .all(|p| p.semantic_type == SemanticType::LocationName);
        if location_only {
            for place in &places {
                out.push(ProposedInvocation {
                    tool: tool.name.clone(),
                    args: params
                        .iter()
                        .map(|p| (p.name.clone(), place.clone()))
                        .collect(),
                });
            }
        } else if params.is_empty()
            && tool
                .keywords
                .iter()
                .any(|k| lowered.contains(&k.to_lowercase()))
        {
            out.push(ProposedInvocation {
                tool: tool.name.clone(),
                args: BTreeMap::new(),
            });
        }
    }
    out
}

/// Provider proposals are validated against the registry; invalid ones are
/// kept with `valid = false`. Provider failure uses the built-in planner.
pub fn plan_tools(
    input: &PlanInput<'_>,
    registry: &ToolRegistry,
    gazetteer: &Gazetteer,
    planner: Option<&dyn Planner>,
    ctx: &mut RequestContext,
) -> Vec<ToolInvocation> {
    if registry.is_empty() {
        return Vec::new();
    }
    ctx.call("plan");
    let proposals = match planner.map(|p| p.plan(input.draft, registry.tools())) {
        Some(Ok(p)) => p,
        Some(Err(e)) => {
            ctx.fell_back(&e);
            builtin_plan(input, registry, gazetteer)
        }
        None => builtin_plan(input, registry, gazetteer),
    };
    let mut seen = BTreeSet::new();
    proposals
        .into_iter()
        .map(|p| validate_invocation(p, registry))
        .filter(|inv| seen.insert((inv.tool.clone(), inv.args.clone())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolLink {
    pub label: String,
    pub url: String,
    pub tool_name: String,
}

pub fn encode_component(s: &str) -> String {
    utf8_percent_encode(s, COMPONENT).to_string()
}

pub fn decode_component(s: &str) -> String {
    percent_decode_str(s).decode_utf8_lossy().into_owned()
}

/// Valid invocations only, one link per distinct (tool, args).
pub fn render_links(invocations: &[ToolInvocation], registry: &ToolRegistry) -> Vec<ToolLink> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for inv in invocations.iter().filter(|i| i.valid) {
        let Some(spec) = registry.get(&inv.tool) else {
            continue;
        };
        if !seen.insert((inv.tool.clone(), inv.args.clone())) {
            continue;
        }
        let mut url = spec.invocation.url_template.clone();
        for p in &spec.invocation.params {
            let value = inv
                .args
                .get(&p.name)
                .map(String::as_str)
                .unwrap_or_default();
            url = url.replace(&format!("{{{}}}", p.name), &encode_component(value));
        }
        let label = match spec.primary_param().and_then(|p| inv.args.get(&p.name)) {
            Some(arg) => format!("{}: {}", spec.name, arg),
            None => spec.name.clone(),
        };
        out.push(ToolLink {
            label,
            url,
            tool_name: spec.name.clone(),
        });
    }
    out
}
