//! Clone detection over typed Java tokens.
//!
//! A method is lexed into fifteen syntactic categories, each category is
//! encoded by its own self-attention block, and a second attention block
//! combines the category vectors into one 100-dimensional method vector.
//! The encoder is trained with a supervised contrastive objective; clones
//! are reported by a cosine threshold or by a fine-tuned classifier head.

mod binio;
pub mod bench;
pub mod config;
pub mod dataset;
pub mod detect;
pub mod embed;
pub mod encoder;
pub mod explain;
pub mod lexcat;
pub mod nn;
pub mod train;

pub use binio::FileError;
pub use embed::{EmbedConfig, EmbeddingTable, Vocabulary};
pub use encoder::{AttentionTrace, EncoderParams, MethodVector};
pub use lexcat::{categorize, tokenize, CategorizedMethod, TokenCategory, TokenStream};
