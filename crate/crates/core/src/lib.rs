//! Supply-chain risk retrieval over a knowledge graph, factor exposures and
//! news, with an agent loop that decides when to fetch context.

pub mod agents;
pub mod centrality;
pub mod cli;
pub mod config;
pub mod kg;
pub mod numfmt;
pub mod service;
pub mod synthetic;
pub mod traversal;
pub mod vecstore;
pub mod verbalizer;
