//! File formats, chat and embedding transports, the session journal, the
//! HTTP service and the command line for `layplan-core`.
//!
//! Network endpoints and credentials are read from the environment only:
//!
//! | variable | meaning |
//! |---|---|
//! | `LAYPLAN_BACKEND_URL` | chat-completion endpoint |
//! | `LAYPLAN_BACKEND_KEY` | bearer token for the chat endpoint |
//! | `LAYPLAN_BACKEND_MODEL` | model name sent with each request |
//! | `LAYPLAN_EMBED_URL` | embedding endpoint for open-set matching |
//! | `LAYPLAN_EMBED_KEY` | bearer token for the embedding endpoint |
//! | `LAYPLAN_EMBED_MODEL` | embedding model name |
//! | `LAYPLAN_SERVICE_TOKEN` | static token required by `serve` when set |

pub mod cli;
pub mod config;
pub mod generations;
pub mod http_backend;
pub mod ingest;
pub mod io;
pub mod journal;
pub mod parallel;
pub mod remote_embed;
pub mod service;
