//! Language-model decider: prompt building, the chat client and reply parsing, plus the
//! scripted mock used for offline runs.

mod client;
mod mock;
mod prompt;
mod reply;

pub use client::{
    ChatMessage, ChatRequest, ChatTransport, Exchange, HttpTransport, LlmClient, LlmClientConfig, LlmDecision, LlmError,
};
pub use mock::{mock_choose, MockPolicy};
pub use prompt::{build_prompt, compact_number, PromptBundle, PromptContext, Section, SYSTEM_TEXT};
pub use reply::{parse_reply, LlmReply, ReplyError};
