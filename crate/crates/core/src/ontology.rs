//! Event ontologies, bracketed event templates, prompt rendering, and
//! label mapping between ontologies.
//!
//! A template is plain text in which every argument role appears once as a
//! bracketed placeholder, e.g. `[Entity] met at [Place].`. Offsets stored here
//! are byte offsets into the relevant string and always fall on `char`
//! boundaries, so they can be used to slice directly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const M2E2_TOML: &str = include_str!("../data/m2e2.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Literal(String),
    Placeholder { role: String },
}

/// A parsed event template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventTemplate {
    raw_text: String,
    segments: Vec<Segment>,
    /// `(role, range of "[role]" in raw_text)`, in template order.
    placeholder_spans: Vec<(String, Range<usize>)>,
}

impl EventTemplate {
    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn placeholder_spans(&self) -> &[(String, Range<usize>)] {
        &self.placeholder_spans
    }

    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.placeholder_spans.iter().map(|(r, _)| r.as_str())
    }

    pub fn role_count(&self) -> usize {
        self.placeholder_spans.len()
    }

    /// Rebuilds the raw text from the segment list.
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.raw_text.len());
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Placeholder { role } => {
                    out.push('[');
                    out.push_str(role);
                    out.push(']');
                }
            }
        }
        out
    }
}

impl fmt::Display for EventTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw_text)
    }
}

/// Parses a bracketed template such as `[Attacker] attacked [Target].`
pub fn parse_template(raw_text: &str) -> Result<EventTemplate> {
    if raw_text.is_empty() {
        return Err(Error::Validation("template text is empty".into()));
    }
    let mut segments = Vec::new();
    let mut placeholder_spans: Vec<(String, Range<usize>)> = Vec::new();
    let mut literal_start = 0usize;
    let mut open: Option<usize> = None;

    for (pos, ch) in raw_text.char_indices() {
        match ch {
            '[' => {
                if let Some(prev) = open {
                    return Err(Error::TemplateParse {
                        position: char_pos(raw_text, pos),
                        message: format!(
                            "nested '[' (placeholder opened at char {} is still open)",
                            char_pos(raw_text, prev)
                        ),
                    });
                }
                if pos > literal_start {
                    segments.push(Segment::Literal(raw_text[literal_start..pos].to_string()));
                }
                open = Some(pos);
            }
            ']' => {
                let Some(start) = open.take() else {
                    return Err(Error::TemplateParse {
                        position: char_pos(raw_text, pos),
                        message: "unmatched ']'".into(),
                    });
                };
                let role = raw_text[start + 1..pos].trim();
                if role.is_empty() {
                    return Err(Error::Validation(format!(
                        "empty placeholder at char {}",
                        char_pos(raw_text, start)
                    )));
                }
                if role != &raw_text[start + 1..pos] {
                    return Err(Error::Validation(format!(
                        "placeholder [{}] has surrounding whitespace",
                        &raw_text[start + 1..pos]
                    )));
                }
                if placeholder_spans.iter().any(|(r, _)| r == role) {
                    return Err(Error::Validation(format!("duplicate role '{role}' in template")));
                }
                placeholder_spans.push((role.to_string(), start..pos + 1));
                segments.push(Segment::Placeholder { role: role.to_string() });
                literal_start = pos + 1;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        return Err(Error::TemplateParse {
            position: char_pos(raw_text, start),
            message: "unclosed '['".into(),
        });
    }
    if literal_start < raw_text.len() {
        segments.push(Segment::Literal(raw_text[literal_start..].to_string()));
    }
    Ok(EventTemplate { raw_text: raw_text.to_string(), segments, placeholder_spans })
}

fn char_pos(s: &str, byte: usize) -> usize {
    s[..byte].chars().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    Concatenation,
    #[default]
    Standard,
    Enriched,
}

impl std::str::FromStr for PromptVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concatenation" => Ok(Self::Concatenation),
            "standard" => Ok(Self::Standard),
            "enriched" => Ok(Self::Enriched),
            other => Err(Error::Config(format!("unknown prompt variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PromptOptions {
    pub variant: PromptVariant,
    pub event_type_prefix: bool,
}

/// A rendered prompt with the byte span of each role inside `text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRendering {
    pub text: String,
    pub role_spans: Vec<(String, Range<usize>)>,
}

impl PromptRendering {
    pub fn span(&self, role: &str) -> Option<&Range<usize>> {
        self.role_spans.iter().find(|(r, _)| r == role).map(|(_, s)| s)
    }
}

/// Renders a template as a query prompt.
///
/// `event_type`, when given, is prepended as `"Conflict Attack: "` (colons in
/// the type name become spaces). Enriched prompts append `" (definition)"`
/// after each role name, and the role span covers name plus definition.
pub fn render_prompt(
    template: &EventTemplate,
    event_type: Option<&str>,
    variant: PromptVariant,
    role_definitions: Option<&BTreeMap<String, String>>,
) -> Result<PromptRendering> {
    let mut text = String::new();
    if let Some(name) = event_type {
        text.push_str(&name.replace(':', " "));
        text.push_str(": ");
    }
    let mut role_spans = Vec::with_capacity(template.role_count());

    if template.role_count() == 0 {
        text.push_str(template.raw_text());
        return Ok(PromptRendering { text, role_spans });
    }

    match variant {
        PromptVariant::Concatenation => {
            for (i, role) in template.roles().enumerate() {
                if i > 0 {
                    text.push(' ');
                }
                let start = text.len();
                text.push_str(role);
                role_spans.push((role.to_string(), start..text.len()));
            }
        }
        PromptVariant::Standard | PromptVariant::Enriched => {
            let definitions = if variant == PromptVariant::Enriched {
                let defs = role_definitions.ok_or_else(|| {
                    Error::Config("enriched prompts need role definitions".into())
                })?;
                if let Some(missing) = template.roles().find(|r| !defs.contains_key(*r)) {
                    return Err(Error::Config(format!("no definition for role '{missing}'")));
                }
                Some(defs)
            } else {
                None
            };
            for seg in template.segments() {
                match seg {
                    Segment::Literal(s) => text.push_str(s),
                    Segment::Placeholder { role } => {
                        let start = text.len();
                        text.push_str(role);
                        if let Some(defs) = definitions {
                            text.push_str(" (");
                            text.push_str(&defs[role]);
                            text.push(')');
                        }
                        role_spans.push((role.clone(), start..text.len()));
                    }
                }
            }
        }
    }
    Ok(PromptRendering { text, role_spans })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventTypeDef {
    pub name: String,
    pub template: EventTemplate,
    pub definitions: BTreeMap<String, String>,
}

impl EventTypeDef {
    pub fn new(name: impl Into<String>, template: &str) -> Result<Self> {
        Ok(Self { name: name.into(), template: parse_template(template)?, definitions: BTreeMap::new() })
    }

    /// Roles in template order.
    pub fn roles(&self) -> Vec<&str> {
        self.template.roles().collect()
    }

    pub fn render(&self, options: &PromptOptions) -> Result<PromptRendering> {
        render_prompt(
            &self.template,
            options.event_type_prefix.then_some(self.name.as_str()),
            options.variant,
            Some(&self.definitions),
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct OntologyFile {
    name: String,
    #[serde(default)]
    roles: Vec<String>,
    #[serde(default, rename = "event")]
    events: Vec<EventEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventEntry {
    name: String,
    template: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    definitions: BTreeMap<String, String>,
}

/// A named set of event types with their templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    name: String,
    event_types: Vec<EventTypeDef>,
    role_vocabulary: BTreeSet<String>,
}

impl Ontology {
    /// Builds an ontology; the role vocabulary is the union of template roles
    /// and `extra_roles`.
    pub fn new(
        name: impl Into<String>,
        event_types: Vec<EventTypeDef>,
        extra_roles: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        let name = name.into();
        let mut seen = BTreeSet::new();
        for ev in &event_types {
            if !seen.insert(ev.name.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate event type '{}' in ontology '{name}'",
                    ev.name
                )));
            }
            for role in ev.definitions.keys() {
                if !ev.template.roles().any(|r| r == role) {
                    return Err(Error::Validation(format!(
                        "definition for role '{role}' not in template of '{}'",
                        ev.name
                    )));
                }
            }
        }
        let mut role_vocabulary: BTreeSet<String> = extra_roles.into_iter().collect();
        for ev in &event_types {
            role_vocabulary.extend(ev.template.roles().map(str::to_string));
        }
        Ok(Self { name, event_types, role_vocabulary })
    }

    /// The eight M2E2 event types with their hand-written templates.
    pub fn m2e2() -> Self {
        Self::from_toml_str(M2E2_TOML).expect("bundled M2E2 ontology is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: OntologyFile = toml::from_str(text)
            .map_err(|e| Error::Validation(format!("ontology file: {e}")))?;
        let events = file
            .events
            .into_iter()
            .map(|e| {
                let mut def = EventTypeDef::new(e.name, &e.template)?;
                def.definitions = e.definitions;
                Ok(def)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.name, events, file.roles)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        let template_roles: BTreeSet<&str> =
            self.event_types.iter().flat_map(|e| e.template.roles()).collect();
        let file = OntologyFile {
            name: self.name.clone(),
            roles: self
                .role_vocabulary
                .iter()
                .filter(|r| !template_roles.contains(r.as_str()))
                .cloned()
                .collect(),
            events: self
                .event_types
                .iter()
                .map(|e| EventEntry {
                    name: e.name.clone(),
                    template: e.template.raw_text().to_string(),
                    definitions: e.definitions.clone(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("ontology serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn event_types(&self) -> &[EventTypeDef] {
        &self.event_types
    }

    pub fn role_vocabulary(&self) -> &BTreeSet<String> {
        &self.role_vocabulary
    }

    pub fn event(&self, name: &str) -> Option<&EventTypeDef> {
        self.event_types.iter().find(|e| e.name == name)
    }

    pub fn require_event(&self, name: &str) -> Result<&EventTypeDef> {
        self.event(name).ok_or_else(|| {
            Error::Ontology(format!("no template for event type '{name}' in ontology '{}'", self.name))
        })
    }

    pub fn contains_event(&self, name: &str) -> bool {
        self.event(name).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapTarget {
    To(String),
    Drop,
}

impl MapTarget {
    fn parse(s: &str) -> Self {
        if s == "DROP" {
            MapTarget::Drop
        } else {
            MapTarget::To(s.to_string())
        }
    }
}

/// Relabels events and roles from a source ontology into a target ontology.
///
/// The identity mapping passes every label of its ontology through unchanged.
/// Role rules are keyed by `(source event, source role)`; a role named `*`
/// acts as the default for that event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OntologyMapping {
    source: String,
    target: String,
    identity: Option<Ontology>,
    events: BTreeMap<String, MapTarget>,
    roles: BTreeMap<(String, String), MapTarget>,
}

impl OntologyMapping {
    pub fn identity(ontology: &Ontology) -> Self {
        Self {
            source: ontology.name().to_string(),
            target: ontology.name().to_string(),
            identity: Some(ontology.clone()),
            events: BTreeMap::new(),
            roles: BTreeMap::new(),
        }
    }

    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            identity: None,
            events: BTreeMap::new(),
            roles: BTreeMap::new(),
        }
    }

    pub fn with_event(mut self, from: &str, to: MapTarget) -> Self {
        self.events.insert(from.to_string(), to);
        self
    }

    pub fn with_role(mut self, event: &str, role: &str, to: MapTarget) -> Self {
        self.roles.insert((event.to_string(), role.to_string()), to);
        self
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn is_identity(&self) -> bool {
        self.identity.is_some()
    }

    /// Parses the tab-separated mapping format:
    ///
    /// ```text
    /// @source	swig
    /// @target	m2e2
    /// event	attacking	Conflict:Attack
    /// role	attacking	agent	Attacker
    /// role	attacking	*	DROP
    /// event	cooking	DROP
    /// ```
    pub fn from_tsv_str(text: &str) -> Result<Self> {
        let mut source = None;
        let mut target = None;
        let mut events = BTreeMap::new();
        let mut roles = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Validation(format!("mapping line {}: malformed '{line}'", lineno + 1));
            match cols.as_slice() {
                ["@source", name] => source = Some(name.to_string()),
                ["@target", name] => target = Some(name.to_string()),
                ["event", from, to] => {
                    if events.insert(from.to_string(), MapTarget::parse(to)).is_some() {
                        return Err(Error::Validation(format!(
                            "mapping line {}: event '{from}' mapped twice",
                            lineno + 1
                        )));
                    }
                }
                ["role", event, role, to] => {
                    roles.insert((event.to_string(), role.to_string()), MapTarget::parse(to));
                }
                _ => return Err(bad()),
            }
        }
        let source = source.ok_or_else(|| Error::Validation("mapping has no @source line".into()))?;
        let target = target.ok_or_else(|| Error::Validation("mapping has no @target line".into()))?;
        Ok(Self { source, target, identity: None, events, roles })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv_str(&text)
    }

    /// Checks that every mapped target label exists in `target` and, when a
    /// source ontology is available, that every source label exists there.
    pub fn validate(&self, source: Option<&Ontology>, target: &Ontology) -> Result<()> {
        if target.name() != self.target {
            return Err(Error::Validation(format!(
                "mapping targets '{}' but ontology is '{}'",
                self.target,
                target.name()
            )));
        }
        if let Some(id) = &self.identity {
            return if id == target {
                Ok(())
            } else {
                Err(Error::Validation("identity mapping built for a different ontology".into()))
            };
        }
        for (from, to) in &self.events {
            if let MapTarget::To(ev) = to {
                if !target.contains_event(ev) {
                    return Err(Error::Validation(format!(
                        "event '{from}' maps to '{ev}', which is not in '{}'",
                        target.name()
                    )));
                }
            }
            if let Some(src) = source {
                if !src.contains_event(from) {
                    return Err(Error::Validation(format!("source event '{from}' not in '{}'", src.name())));
                }
            }
        }
        for ((event, role), to) in &self.roles {
            let Some(MapTarget::To(target_event)) = self.events.get(event) else {
                continue;
            };
            if let MapTarget::To(r) = to {
                let def = target.require_event(target_event)?;
                if !def.template.roles().any(|x| x == r) {
                    return Err(Error::Validation(format!(
                        "role ({event}, {role}) maps to '{r}', which is not a role of '{target_event}'"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Maps one event label. `Ok(None)` means the event is dropped.
    pub fn map_event(&self, event: &str) -> Result<Option<String>> {
        if let Some(id) = &self.identity {
            return if id.contains_event(event) {
                Ok(Some(event.to_string()))
            } else {
                Err(Error::Lookup(format!("event '{event}' not in ontology '{}'", id.name())))
            };
        }
        match self.events.get(event) {
            Some(MapTarget::To(t)) => Ok(Some(t.clone())),
            Some(MapTarget::Drop) => Ok(None),
            None => Err(Error::Lookup(format!("event '{event}' has no mapping to '{}'", self.target))),
        }
    }

    /// Maps one role label of `event`. `Ok(None)` means the role is dropped.
    pub fn map_role(&self, event: &str, role: &str) -> Result<Option<String>> {
        if let Some(id) = &self.identity {
            let def = id
                .event(event)
                .ok_or_else(|| Error::Lookup(format!("event '{event}' not in ontology '{}'", id.name())))?;
            return if def.template.roles().any(|r| r == role) {
                Ok(Some(role.to_string()))
            } else {
                Err(Error::Lookup(format!("role '{role}' not in event '{event}'")))
            };
        }
        let key = (event.to_string(), role.to_string());
        let rule = self
            .roles
            .get(&key)
            .or_else(|| self.roles.get(&(event.to_string(), "*".to_string())));
        match rule {
            Some(MapTarget::To(r)) => Ok(Some(r.clone())),
            Some(MapTarget::Drop) => Ok(None),
            None => Err(Error::Lookup(format!("role ({event}, {role}) has no mapping"))),
        }
    }
}

/// Relabels an event and its role assignments. Dropped events give `None`;
/// dropped roles are removed from the list.
pub fn map_labels<T: Clone>(
    mapping: &OntologyMapping,
    event: &str,
    role_assignments: &[(String, T)],
) -> Result<Option<(String, Vec<(String, T)>)>> {
    let Some(target_event) = mapping.map_event(event)? else {
        return Ok(None);
    };
    let mut out = Vec::with_capacity(role_assignments.len());
    for (role, value) in role_assignments {
        if let Some(r) = mapping.map_role(event, role)? {
            out.push((r, value.clone()));
        }
    }
    Ok(Some((target_event, out)))
}
