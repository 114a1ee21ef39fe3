//! Teacher-student distillation for short, noisy social-media text.
//!
//! The pipeline has four offline stages that hand artifacts to each other
//! through files:
//!
//! 1. [`acquisition`]: expand prompt templates, query a teacher model, and
//!    collect prompt/response pairs.
//! 2. [`text`]: tokenize, filter and serialize the pairs.
//! 3. [`analyzers`] + [`masking`]: score every token (TF-IDF, part of speech,
//!    dependency role, noise) and sample a binary attention mask per example.
//! 4. [`model`] + [`training`]: fine-tune a small decoder-only transformer
//!    whose attention honours the masks, with AdamW and early stopping.

pub mod acquisition;
pub mod analyzers;
pub mod config;
pub mod masking;
pub mod model;
pub mod seed;
pub mod text;
pub mod training;
