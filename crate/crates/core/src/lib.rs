//! Editorial workflow for an open-source software journal: submissions,
//! chat-ops commands, reviewer checklists, article publishing and
//! operational analytics.

pub mod analytics;
pub mod article;
pub mod checklist;
pub mod clock;
pub mod command;
pub mod config;
pub mod forge;
pub mod journal;
pub mod person;
pub mod scenario;
pub mod store;
pub mod workflow;
