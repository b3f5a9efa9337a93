//! Free-fall skydiving simulator with a hierarchical posture-control stack.
//!
//! Layers, bottom up: a segmented body model ([`biomech`]), six-DOF flight
//! dynamics ([`dynamics`]), movement patterns mapping two pattern angles to a
//! full posture ([`patterns`]), QFT controllers ([`control`]), path guidance
//! ([`guidance`]), training cues ([`cues`]), trainee models ([`trainee`]),
//! training sessions ([`session`]) and a real-time WebSocket service
//! ([`service`]).

pub mod biomech;
pub mod config;
pub mod control;
pub mod cues;
pub mod dynamics;
pub mod error;
pub mod guidance;
pub mod patterns;
pub mod service;
pub mod session;
pub mod trainee;

pub use error::{Error, Result};
