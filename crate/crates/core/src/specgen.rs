//! Reward-proposal prompts and validation of the structured reply.
//!
//! The model is asked to design a reward function and then restate it as a
//! TOML block in the reward-spec file format. Only that block is read; any
//! code in the reply is ignored.

use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::oracle::{render, render_background, PromptTemplates};
use crate::reward::{RewardSpec, SpecFile};

/// Background, task and output-format prompts joined into one message.
pub fn render_proposal_prompt(
    templates: &PromptTemplates,
    env: &EnvSpec,
    task_description: &str,
) -> Result<String> {
    let background = render_background(templates, env)?;
    let task = render(
        &templates.proposal,
        &[("task_description", task_description)],
    )?;
    Ok(format!(
        "{}\n\n{}\n\n{}",
        background.trim_end(),
        task.trim_end(),
        templates.proposal_schema.trim_end()
    ))
}

/// The last fenced TOML block, or the whole reply when it has no fence.
fn structured_block(reply: &str) -> &str {
    let mut found = None;
    let mut rest = reply;
    let mut offset = 0;
    while let Some(i) = rest.find("```toml") {
        let body_start = offset + i + "```toml".len();
        let body = &reply[body_start..];
        let Some(end) = body.find("```") else { break };
        found = Some(&body[..end]);
        offset = body_start + end + 3;
        rest = &reply[offset..];
    }
    found.unwrap_or(reply)
}

/// Validate the structured block of a proposal reply into a spec.
///
/// With `schema`, every referenced feature must be one of its names. All
/// problems are reported together as [`Error::Validation`].
pub fn parse_proposal(reply: &str, schema: Option<&[String]>) -> Result<RewardSpec> {
    if reply.trim().is_empty() {
        return Err(Error::Validation(vec!["reply is empty".into()]));
    }
    let block = structured_block(reply);
    let file: SpecFile = toml::from_str(block)
        .map_err(|e| Error::Validation(vec![format!("structured block is not valid TOML: {e}")]))?;
    let mut problems = Vec::new();
    if file.terms.is_empty() {
        problems.push("the block declares no terms".to_string());
    }
    if file.parameters.is_empty() {
        problems.push("the block declares no parameters".to_string());
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    file.into_spec(schema).map_err(Error::Validation)
}
