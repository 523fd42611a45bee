//! Topic filters with MQTT wildcard rules.

use super::TransportError;

const SEPARATOR: char = '/';

#[derive(Debug, Clone, PartialEq, Eq)]
enum Level {
    Exact(String),
    Single,
    Multi,
}

/// A parsed subscription filter. `+` matches exactly one level, a trailing `#`
/// matches any number of remaining levels, including none.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicFilter {
    raw: String,
    levels: Vec<Level>,
}

impl TopicFilter {
    pub fn parse(filter: &str) -> Result<Self, TransportError> {
        if filter.is_empty() {
            return Err(TransportError::InvalidFilter {
                filter: filter.to_owned(),
                reason: "empty filter",
            });
        }
        let parts: Vec<&str> = filter.split(SEPARATOR).collect();
        let last = parts.len() - 1;
        let mut levels = Vec::with_capacity(parts.len());
        for (i, part) in parts.iter().enumerate() {
            let level = match *part {
                "+" => Level::Single,
                "#" if i == last => Level::Multi,
                "#" => {
                    return Err(TransportError::InvalidFilter {
                        filter: filter.to_owned(),
                        reason: "'#' must be the last level",
                    })
                }
                p if p.contains(['+', '#']) => {
                    return Err(TransportError::InvalidFilter {
                        filter: filter.to_owned(),
                        reason: "wildcards must occupy a whole level",
                    })
                }
                p => Level::Exact(p.to_owned()),
            };
            levels.push(level);
        }
        Ok(TopicFilter {
            raw: filter.to_owned(),
            levels,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    /// `topic` must be a concrete topic name; wildcard characters in it never match.
    pub fn matches(&self, topic: &str) -> bool {
        if topic.contains(['+', '#']) {
            return false;
        }
        let mut names = topic.split(SEPARATOR);
        for level in &self.levels {
            match level {
                Level::Multi => return true,
                Level::Single => {
                    if names.next().is_none() {
                        return false;
                    }
                }
                Level::Exact(want) => match names.next() {
                    Some(name) if name == want => {}
                    _ => return false,
                },
            }
        }
        names.next().is_none()
    }
}

impl std::fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.raw)
    }
}

/// True iff `topic` matches `filter`.
pub fn topic_matches(filter: &str, topic: &str) -> Result<bool, TransportError> {
    if topic.contains(['+', '#']) {
        return Err(TransportError::InvalidTopic {
            topic: topic.to_owned(),
            reason: "topic names cannot contain wildcards",
        });
    }
    Ok(TopicFilter::parse(filter)?.matches(topic))
}

/// Checks a concrete topic against the plant grammar: non-empty,
/// slash-delimited levels without wildcards.
pub fn validate_topic(topic: &str) -> Result<(), TransportError> {
    let bad = |reason| TransportError::InvalidTopic {
        topic: topic.to_owned(),
        reason,
    };
    if topic.contains(['+', '#']) {
        return Err(bad("topic names cannot contain wildcards"));
    }
    if topic.split(SEPARATOR).any(str::is_empty) {
        return Err(bad("levels must be non-empty"));
    }
    Ok(())
}

pub fn telemetry_topic(machine_id: &str, kind: crate::plant::SensorKind) -> String {
    format!("plant/{machine_id}/{}", kind.topic_level())
}

pub fn command_topic(machine_id: &str) -> String {
    format!("plant/{machine_id}/cmd")
}

pub fn alert_topic(kind: &str) -> String {
    format!("plant/alerts/{kind}")
}
