//! Vision-context-aware expressive speech synthesis pipeline.
//!
//! A video and a neutral transcript go through three stages: visual cue
//! analysis over keyframes ([`media`], [`vision`]), knowledge-infused
//! chain-of-thought translation into a speech instruction ([`kb`],
//! [`instruct`]), and instruct-to-speech synthesis ([`synth`]) whose audio is
//! muxed back onto the video ([`compose`]). [`pipeline`] runs the stages with
//! a content-addressed cache; [`eval`] reproduces the study metrics.

pub mod backend;
pub mod compose;
pub mod digest;
pub mod error;
pub mod eval;
pub mod instruct;
pub mod kb;
pub mod media;
pub mod pipeline;
pub mod prompts;
pub mod rawvid;
pub mod sections;
pub mod synth;
pub mod vision;
pub mod wav;

pub use error::{Error, Result};
