//! Network layer: star-topology routing, topic pub/sub with two QoS classes
//! and a periodic batch channel, all in simulated time.

mod batch;
mod network;
mod topic;

use thiserror::Error;

pub use batch::{BatchChannel, BatchConfig, BatchTransfer};
pub use network::{
    Delivery, Envelope, Hop, HopStreams, LinkDraws, LinkModel, Payload, Qos, Route, StarNetwork, Topology,
    TransportStats,
};
pub use topic::{
    alert_topic, command_topic, telemetry_topic, topic_matches, validate_topic, TopicFilter,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("invalid topic filter {filter:?}: {reason}")]
    InvalidFilter { filter: String, reason: &'static str },
    #[error("invalid topic {topic:?}: {reason}")]
    InvalidTopic { topic: String, reason: &'static str },
    #[error("unknown publisher {0:?}")]
    UnknownPublisher(String),
    #[error("payload of {size} bytes exceeds the {limit}-byte limit")]
    PayloadTooLarge { size: usize, limit: usize },
    #[error("invalid link: {0}")]
    InvalidLink(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
}
