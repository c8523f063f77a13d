//! Zero-shot pronunciation assessment from textual descriptions of speech.
//!
//! Recognized phoneme sequences are aligned against dictionary pronunciations
//! of the transcript, an LLM scores accuracy and fluency from the cues, and the
//! two signals are normalized and combined per run.

pub mod align;
pub mod bundle;
pub mod cli;
pub mod config;
pub mod dimension;
pub mod eval;
pub mod fusion;
pub mod lexicon;
pub mod llm;
pub mod phoneme;
pub mod pipeline;
pub mod prompt;
