use std::fmt::Write as _;
use std::path::Path;

use crate::envs::{EnvSpec, FeatureKind};
use crate::error::{Error, Result};

const BACKGROUND: &str = include_str!("../../assets/prompts/background.txt");
const PROPOSAL: &str = include_str!("../../assets/prompts/proposal.txt");
const PROPOSAL_SCHEMA: &str = include_str!("../../assets/prompts/proposal_schema.txt");
const RANKING: &str = include_str!("../../assets/prompts/ranking.txt");
const REFLECTION: &str = include_str!("../../assets/prompts/reflection.txt");

/// Prompt texts with `{placeholder}` slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplates {
    pub background: String,
    pub proposal: String,
    pub proposal_schema: String,
    pub ranking: String,
    pub reflection: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            background: BACKGROUND.into(),
            proposal: PROPOSAL.into(),
            proposal_schema: PROPOSAL_SCHEMA.into(),
            ranking: RANKING.into(),
            reflection: REFLECTION.into(),
        }
    }
}

impl PromptTemplates {
    /// Shipped templates, with any of `background.txt`, `proposal.txt`,
    /// `proposal_schema.txt`, `ranking.txt`, `reflection.txt` found in `dir`
    /// taking precedence.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut t = Self::default();
        for (file, slot) in [
            ("background.txt", &mut t.background),
            ("proposal.txt", &mut t.proposal),
            ("proposal_schema.txt", &mut t.proposal_schema),
            ("ranking.txt", &mut t.ranking),
            ("reflection.txt", &mut t.reflection),
        ] {
            let path = dir.join(file);
            if path.exists() {
                *slot = std::fs::read_to_string(&path)?;
            }
        }
        Ok(t)
    }
}

/// Substitute `{key}` slots. Any `{identifier}` left afterwards is an error;
/// other braces (dictionary examples and the like) pass through.
pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let key = close.map(|c| &after[..c]);
        match key {
            Some(k) if is_placeholder(k) => {
                let value = vars
                    .iter()
                    .find(|(name, _)| *name == k)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| Error::Template(k.to_string()))?;
                out.push_str(value);
                rest = &after[k.len() + 1..];
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

fn is_placeholder(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

/// Numbered observation list for the background prompt.
pub fn render_observations(env: &EnvSpec) -> Result<String> {
    if env.features.is_empty() {
        return Err(Error::Template(format!(
            "observations (environment `{}` has no features)",
            env.name
        )));
    }
    let mut out = String::new();
    for (i, (name, kind)) in env.features.iter().zip(&env.feature_kinds).enumerate() {
        let what = match kind {
            FeatureKind::Real => "a scalar value",
            FeatureKind::Bool => "a boolean value",
        };
        let _ = writeln!(out, "{}. obs['{name}']: {what}", i + 1);
    }
    out.pop();
    Ok(out)
}

pub fn render_background(templates: &PromptTemplates, env: &EnvSpec) -> Result<String> {
    let obs = render_observations(env)?;
    render(&templates.background, &[("observations", &obs)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_and_flags_unknowns() {
        assert_eq!(render("a {x} b", &[("x", "1")]).unwrap(), "a 1 b");
        assert_eq!(render("{'param_a': 1.0}", &[]).unwrap(), "{'param_a': 1.0}");
        let err = render("{missing}", &[]).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn shipped_templates_resolve() {
        let t = PromptTemplates::default();
        let vars = [
            ("task_description", "t"),
            ("reward_function", "r"),
            ("descriptions", "d"),
        ];
        render(&t.ranking, &vars).unwrap();
        render(&t.reflection, &vars).unwrap();
        render(&t.proposal, &vars).unwrap();
        let env = crate::envs::make_env("drawer-pull-1d").unwrap();
        let bg = render_background(&t, env.spec()).unwrap();
        assert!(bg.contains("obs['drawer_joint_value']"));
    }
}
