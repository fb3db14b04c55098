//! Engine for keeping codes of conduct present, current, and enforced on
//! software forges.
//!
//! The crate is organized around the path an incoming contribution travels:
//! [`text`] turns raw documents into lemma tokens, [`taxonomy`] names the ten
//! ethical flags and loads the keyword lexicon, [`coc`] grades a
//! code-of-conduct document, [`repo`] locates the document and scores its
//! freshness, and [`contribution`] classifies comments with either the
//! keyword backend or an LLM backend. [`orchestrator`] folds those pieces
//! into an action plan executed against a [`forge`]; [`persistence`] keeps
//! the append-only audit stores; [`miner`] builds corpus reports;
//! [`evaluation`] scores classifier backends against labeled datasets.

pub mod cli;
pub mod coc;
pub mod config;
pub mod contribution;
pub mod evaluation;
pub mod forge;
pub mod miner;
pub mod notify;
pub mod orchestrator;
pub mod persistence;
pub mod repo;
pub mod taxonomy;
pub mod text;
