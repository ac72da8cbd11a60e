use std::collections::BTreeMap;
use std::path::Path;

use crate::{Error, Result};

const BUILTIN_EN: &str = include_str!("../../templates/en.toml");

/// Message templates keyed by id, with `{placeholder}` markers.
#[derive(Debug, Clone, PartialEq)]
pub struct Templates {
    entries: BTreeMap<String, String>,
}

impl Templates {
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN_EN).expect("built-in templates parse")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let entries = toml::from_str(text).map_err(|e| Error::Template(e.to_string()))?;
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Template(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn render(&self, template_id: &str, values: &[(&str, &str)]) -> Result<String> {
        let template = self
            .entries
            .get(template_id)
            .ok_or_else(|| Error::Template(format!("unknown template `{template_id}`")))?;
        substitute(template, |name| values.iter().find(|(k, _)| *k == name).map(|(_, v)| *v))
            .map_err(|name| Error::Template(format!("{template_id}: unbound placeholder `{name}`")))
    }
}

/// Replaces `{name}` markers; returns the first unbound name on failure.
fn substitute<'v>(template: &str, lookup: impl Fn(&str) -> Option<&'v str>) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        if let Some(stripped) = after.strip_prefix('{') {
            out.push('{');
            rest = stripped;
            continue;
        }
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name {
            Some(name) if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => {
                out.push_str(lookup(name).ok_or_else(|| name.to_string())?);
                rest = &after[name.len() + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}
