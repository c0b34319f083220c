//! Server side of crowdfit: the durable event log, the HTTP service and
//! its engine scheduler, file exports and the command-line tool.

pub mod cli;
pub mod config;
pub mod export;
pub mod journal;
pub mod service;
pub mod simdir;
