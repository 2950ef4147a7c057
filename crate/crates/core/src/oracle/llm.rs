use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::describe::{describe_execution, render_descriptions};
use super::reflect::{parse_reflection, ReflectionResult};
use super::templates::{render, render_background, PromptTemplates};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::ranking::{Provenance, Ranking};
use crate::reward::{ParamVector, RewardSpec, Trajectory};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChatReply {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// A chat-completions endpoint.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply>;
}

/// Chat-completions over HTTP with temperature 0.
pub struct HttpTransport {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            agent,
        }
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply> {
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": 0,
        });
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| Error::Transport(format!("{}: {e}", self.endpoint)))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(format!("reading response: {e}")))?;
        if !status.is_success() {
            return Err(Error::Transport(format!("HTTP {status}: {text}")));
        }
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let content = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| Error::Transport("response has no choices[0].message.content".into()))?
            .to_string();
        Ok(ChatReply {
            content,
            prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt + self.completion
    }
}

/// Run-wide token accounting, safe to share across threads.
#[derive(Debug, Default)]
pub struct TokenCounter {
    prompt: AtomicU64,
    completion: AtomicU64,
}

impl TokenCounter {
    pub fn record(&self, reply: &ChatReply) {
        self.prompt
            .fetch_add(reply.prompt_tokens, Ordering::Relaxed);
        self.completion
            .fetch_add(reply.completion_tokens, Ordering::Relaxed);
    }

    pub fn usage(&self) -> TokenUsage {
        TokenUsage {
            prompt: self.prompt.load(Ordering::Relaxed),
            completion: self.completion.load(Ordering::Relaxed),
        }
    }
}

/// Everything the prompts need besides the batch.
#[derive(Clone, Copy, Debug)]
pub struct PromptContext<'a> {
    pub env: &'a EnvSpec,
    pub task_description: &'a str,
    pub spec: &'a RewardSpec,
    pub params: &'a ParamVector,
}

fn indent(text: &str) -> String {
    // continuation lines of the function sit under the first one
    text.trim_end().replace('\n', "\n    ")
}

pub fn render_ranking_prompt(
    templates: &PromptTemplates,
    ctx: &PromptContext<'_>,
    batch: &[Trajectory],
) -> Result<String> {
    let descriptions = render_descriptions(&describe_execution(batch)?);
    let reward = indent(&ctx.spec.render_python(ctx.params));
    render(
        &templates.ranking,
        &[
            ("reward_function", &reward),
            ("descriptions", &descriptions),
            ("task_description", ctx.task_description),
        ],
    )
}

pub fn render_reflection_prompt(
    templates: &PromptTemplates,
    ctx: &PromptContext<'_>,
    batch: &[Trajectory],
) -> Result<String> {
    let descriptions = render_descriptions(&describe_execution(batch)?);
    let reward = indent(&ctx.spec.render_python(ctx.params));
    render(
        &templates.reflection,
        &[
            ("reward_function", &reward),
            ("descriptions", &descriptions),
            ("task_description", ctx.task_description),
        ],
    )
}

/// Parse the last non-empty line of a ranking reply as `[i, j, ...]`.
pub fn parse_ranking_reply(reply: &str) -> Result<Vec<usize>> {
    let err = |reason: &str| Error::Parse {
        reason: reason.to_string(),
        reply: reply.to_string(),
    };
    let line = reply
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or_else(|| err("empty reply"))?;
    let inner = line
        .strip_prefix('[')
        .and_then(|l| l.strip_suffix(']'))
        .ok_or_else(|| err("last line is not a bracketed list"))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| err("list holds a non-integer entry"))
        })
        .collect()
}

/// Map sample indices from a reply onto the batch's trajectory ids.
pub fn indices_to_ranking(indices: &[usize], batch: &[Trajectory]) -> Result<Ranking> {
    let mut seen = vec![false; batch.len()];
    for &i in indices {
        if i >= batch.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::RankingMismatch(format!(
                "reply ranks {indices:?} but the batch has samples 0..{}",
                batch.len()
            )));
        }
    }
    if indices.len() != batch.len() {
        return Err(Error::RankingMismatch(format!(
            "reply ranks {} of {} samples",
            indices.len(),
            batch.len()
        )));
    }
    Ranking::new(
        indices.iter().map(|&i| batch[i].id()).collect(),
        Provenance::Oracle,
    )
}

fn log_exchange(transcript: &mut String, messages: &[ChatMessage], reply: &ChatReply) {
    for m in messages {
        let _ = write!(transcript, "### {}\n{}\n\n", m.role, m.content.trim_end());
    }
    let _ = write!(
        transcript,
        "### assistant (prompt_tokens={}, completion_tokens={})\n{}\n\n",
        reply.prompt_tokens, reply.completion_tokens, reply.content
    );
}

/// Send `prompt`; on a parse failure, point at the format rule and ask once more.
fn ask_with_retry<T>(
    transport: &dyn ChatTransport,
    tokens: &TokenCounter,
    system: String,
    prompt: String,
    reminder: &str,
    transcript: &mut String,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<T> {
    let mut messages = vec![
        ChatMessage::new("system", system),
        ChatMessage::new("user", prompt),
    ];
    let reply = transport.complete(&messages)?;
    tokens.record(&reply);
    log_exchange(transcript, &messages, &reply);
    match parse(&reply.content) {
        Ok(v) => Ok(v),
        Err(Error::Parse { .. }) => {
            messages.push(ChatMessage::new("assistant", reply.content));
            messages.push(ChatMessage::new("user", reminder));
            let retry = transport.complete(&messages)?;
            tokens.record(&retry);
            log_exchange(transcript, &messages[messages.len() - 1..], &retry);
            parse(&retry.content)
        }
        Err(e) => Err(e),
    }
}

/// Rank a batch with a chat model. The exchange is appended to `transcript`.
pub fn llm_rank(
    batch: &[Trajectory],
    templates: &PromptTemplates,
    ctx: &PromptContext<'_>,
    transport: &dyn ChatTransport,
    tokens: &TokenCounter,
    transcript: &mut String,
) -> Result<Ranking> {
    let system = render_background(templates, ctx.env)?;
    let prompt = render_ranking_prompt(templates, ctx, batch)?;
    let indices = ask_with_retry(
        transport,
        tokens,
        system,
        prompt,
        "Make sure the last line of the reply contains and only contains the final list.",
        transcript,
        parse_ranking_reply,
    )?;
    indices_to_ranking(&indices, batch)
}

pub fn llm_reflect(
    batch: &[Trajectory],
    templates: &PromptTemplates,
    ctx: &PromptContext<'_>,
    transport: &dyn ChatTransport,
    tokens: &TokenCounter,
    transcript: &mut String,
) -> Result<ReflectionResult> {
    if batch.is_empty() {
        return Err(Error::Stage("reflection needs a nonempty batch".into()));
    }
    let system = render_background(templates, ctx.env)?;
    let prompt = render_reflection_prompt(templates, ctx, batch)?;
    ask_with_retry(
        transport,
        tokens,
        system,
        prompt,
        "Lastly, output the identified hyper-parameter as a dictionary. Comment behind each \
         to indicate if the value is suggested to increase or decrease.",
        transcript,
        |reply| parse_reflection(reply, ctx.params),
    )
}
