//! Ranking and reflection oracles.
//!
//! The scripted oracle ranks by stage rules with Boltzmann-style adjacent
//! swaps and reflects through a per-environment lookup; the LLM oracle sends
//! the shipped prompt templates to a chat-completions endpoint. Both produce
//! a transcript per call that the run directory keeps.

mod describe;
mod llm;
mod reflect;
mod stage;
mod templates;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::Ranking;
use crate::reward::Trajectory;
use crate::seed;

pub use describe::{
    describe_execution, describe_record, format_value, render_descriptions, ExecutionDescription,
};
pub use llm::{
    indices_to_ranking, llm_rank, llm_reflect, parse_ranking_reply, render_ranking_prompt,
    render_reflection_prompt, ChatMessage, ChatReply, ChatTransport, HttpTransport, PromptContext,
    TokenCounter, TokenUsage,
};
pub use reflect::{parse_reflection, scripted_reflection, Adjustment, ReflectionResult};
pub use stage::{
    classify, furthest_stage, scripted_rank, validate_stages, Condition, Direction, ScriptedConfig,
    StageRule, StageScore, SwapModel,
};
pub use templates::{render, render_background, render_observations, PromptTemplates};

pub const DEFAULT_API_KEY_ENV: &str = "REWARD_ALIGN_API_KEY";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Scripted,
    LlmHttp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub backend: Backend,
    /// Scripted noise rationality; 0 makes every same-stage swap a coin flip.
    pub beta: f64,
    pub swap: SwapModel,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Directory whose prompt files override the shipped ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Scripted,
            beta: crate::preference::DEFAULT_BETA,
            swap: SwapModel::BoltzmannAdjacent,
            seed: 0,
            endpoint: None,
            model: None,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            templates: None,
            timeout_secs: 120,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta.is_nan() || self.beta < 0.0 {
            return Err(Error::Config(format!(
                "oracle.beta must be >= 0, got {}",
                self.beta
            )));
        }
        if self.backend == Backend::LlmHttp {
            if self.endpoint.is_none() {
                return Err(Error::Config(
                    "oracle.endpoint is required for llm-http".into(),
                ));
            }
            if self.model.is_none() {
                return Err(Error::Config(
                    "oracle.model is required for llm-http".into(),
                ));
            }
        }
        if let Some(dir) = &self.templates {
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "oracle.templates: `{}` is not a directory",
                    dir.display()
                )));
            }
        }
        Ok(())
    }
}

/// An oracle answer plus the text exchanged to get it.
#[derive(Clone, Debug)]
pub struct OracleCall<T> {
    pub value: T,
    pub transcript: String,
}

pub trait Oracle: Send {
    fn rank(
        &mut self,
        batch: &[Trajectory],
        ctx: &PromptContext<'_>,
    ) -> Result<OracleCall<Ranking>>;

    fn reflect(
        &mut self,
        batch: &[Trajectory],
        ctx: &PromptContext<'_>,
    ) -> Result<OracleCall<ReflectionResult>>;

    fn tokens(&self) -> TokenUsage {
        TokenUsage::default()
    }
}

/// Stage-rule oracle. Each ranking call draws its noise from a fresh stream
/// keyed on the call count, so results depend only on the seed and call order.
pub struct ScriptedOracle {
    config: OracleConfig,
    templates: PromptTemplates,
    calls: u64,
}

impl ScriptedOracle {
    pub fn new(config: OracleConfig, templates: PromptTemplates) -> Self {
        Self {
            config,
            templates,
            calls: 0,
        }
    }
}

fn index_list(ranking: &Ranking, batch: &[Trajectory]) -> String {
    let idx: Vec<String> = ranking
        .ids()
        .iter()
        .map(|id| {
            batch
                .iter()
                .position(|t| t.id() == *id)
                .expect("ranking covers the batch")
                .to_string()
        })
        .collect();
    format!("[{}]", idx.join(", "))
}

impl Oracle for ScriptedOracle {
    fn rank(
        &mut self,
        batch: &[Trajectory],
        ctx: &PromptContext<'_>,
    ) -> Result<OracleCall<Ranking>> {
        let call = self.calls;
        self.calls += 1;
        let cfg = ScriptedConfig {
            beta: self.config.beta,
            swap: self.config.swap,
            seed: seed::derive(self.config.seed, "oracle-call", call),
        };
        let ranking = scripted_rank(batch, &ctx.env.stages, &cfg)?;
        let mut transcript = String::new();
        let _ = write!(
            transcript,
            "### user\n{}\n\n### scripted oracle (beta={}, swap={:?})\n",
            render_ranking_prompt(&self.templates, ctx, batch)?.trim_end(),
            cfg.beta,
            cfg.swap
        );
        for t in batch {
            let rule = classify(t.last_features(), &ctx.env.stages)?;
            let _ = writeln!(
                transcript,
                "trajectory {}: stage {} ({})",
                t.id(),
                rule.index,
                rule.name
            );
        }
        let _ = writeln!(transcript, "{}", index_list(&ranking, batch));
        Ok(OracleCall {
            value: ranking,
            transcript,
        })
    }

    fn reflect(
        &mut self,
        batch: &[Trajectory],
        ctx: &PromptContext<'_>,
    ) -> Result<OracleCall<ReflectionResult>> {
        let result = scripted_reflection(ctx.env.name, batch, &ctx.env.stages, ctx.params)?;
        let stage = furthest_stage(batch, &ctx.env.stages)?;
        let mut transcript = format!(
            "### user\n{}\n\n### scripted reflection (furthest stage {stage})\nResult:\n{{",
            render_reflection_prompt(&self.templates, ctx, batch)?.trim_end()
        );
        let entries: Vec<String> = result
            .directions
            .iter()
            .map(|(k, d)| {
                let word = match d {
                    Adjustment::Increase => "increase",
                    Adjustment::Decrease => "decrease",
                    Adjustment::NoChange => "no change",
                };
                format!("'{k}': {}, # {word}", ctx.params.get(k).unwrap_or(f64::NAN))
            })
            .collect();
        transcript.push_str(&entries.join("\n "));
        transcript.push_str("}\n");
        Ok(OracleCall {
            value: result,
            transcript,
        })
    }
}

/// Chat-model oracle sharing a token counter with the caller.
pub struct LlmOracle {
    transport: Box<dyn ChatTransport>,
    templates: PromptTemplates,
    tokens: Arc<TokenCounter>,
}

impl LlmOracle {
    pub fn new(transport: Box<dyn ChatTransport>, templates: PromptTemplates) -> Self {
        Self {
            transport,
            templates,
            tokens: Arc::new(TokenCounter::default()),
        }
    }

    pub fn token_counter(&self) -> Arc<TokenCounter> {
        Arc::clone(&self.tokens)
    }
}

impl Oracle for LlmOracle {
    fn rank(
        &mut self,
        batch: &[Trajectory],
        ctx: &PromptContext<'_>,
    ) -> Result<OracleCall<Ranking>> {
        let mut transcript = String::new();
        let value = llm_rank(
            batch,
            &self.templates,
            ctx,
            self.transport.as_ref(),
            &self.tokens,
            &mut transcript,
        )?;
        Ok(OracleCall { value, transcript })
    }

    fn reflect(
        &mut self,
        batch: &[Trajectory],
        ctx: &PromptContext<'_>,
    ) -> Result<OracleCall<ReflectionResult>> {
        let mut transcript = String::new();
        let value = llm_reflect(
            batch,
            &self.templates,
            ctx,
            self.transport.as_ref(),
            &self.tokens,
            &mut transcript,
        )?;
        Ok(OracleCall { value, transcript })
    }

    fn tokens(&self) -> TokenUsage {
        self.tokens.usage()
    }
}

pub fn make_oracle(config: &OracleConfig) -> Result<Box<dyn Oracle>> {
    config.validate()?;
    let templates = match &config.templates {
        Some(dir) => PromptTemplates::load_dir(dir)?,
        None => PromptTemplates::default(),
    };
    Ok(match config.backend {
        Backend::Scripted => Box::new(ScriptedOracle::new(config.clone(), templates)),
        Backend::LlmHttp => {
            let key = std::env::var(&config.api_key_env).ok();
            let transport = HttpTransport::new(
                config.endpoint.as_deref().expect("validated"),
                config.model.as_deref().expect("validated"),
                key,
                Duration::from_secs(config.timeout_secs),
            );
            Box::new(LlmOracle::new(Box::new(transport), templates))
        }
    })
}
