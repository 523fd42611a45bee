//! Periodic request/acknowledge batch channel (the HTTP-style path).
//!
//! Batches carry edge window summaries from a gateway to the cloud store.
//! A batch is retried with exponential backoff until acknowledged or until
//! `max_retries` is exhausted, after which it is dead-lettered. The store
//! deduplicates by batch id, so an acknowledged batch lands exactly once.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Hop, LinkDraws, LinkModel};
use crate::edge::WindowSummary;
use crate::Id;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub period_ticks: u64,
    pub max_retries: u32,
    /// First backoff added to the ack timeout; doubles with each retry.
    pub backoff_base_ticks: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            period_ticks: 60,
            max_retries: 5,
            backoff_base_ticks: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchTransfer {
    pub batch_id: u64,
    pub gateway_id: Id,
    pub records: Vec<WindowSummary>,
    pub request_tick: u64,
    pub ack_tick: Option<u64>,
    pub retry_count: u32,
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    /// The request reaches the store.
    Arrive { batch_id: u64 },
    /// The acknowledgement reaches the gateway.
    Ack { batch_id: u64 },
    /// Ack deadline for the given attempt.
    Timeout { batch_id: u64, attempt: u32 },
}

#[derive(Debug)]
pub struct BatchChannel {
    link: LinkModel,
    config: BatchConfig,
    next_id: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64, Event)>>,
    pending: BTreeMap<u64, BatchTransfer>,
    in_store: HashSet<u64>,
    acknowledged: Vec<BatchTransfer>,
    dead_letters: Vec<BatchTransfer>,
}

impl BatchChannel {
    pub fn new(link: LinkModel, config: BatchConfig) -> Self {
        BatchChannel {
            link,
            config,
            next_id: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            pending: BTreeMap::new(),
            in_store: HashSet::new(),
            acknowledged: Vec::new(),
            dead_letters: Vec::new(),
        }
    }

    pub fn config(&self) -> &BatchConfig {
        &self.config
    }

    pub fn set_link(&mut self, link: LinkModel) {
        self.link = link;
    }

    /// Moves the buffer into one batch and sends it. Empty buffers emit nothing.
    pub fn flush_batch(
        &mut self,
        gateway_id: &Id,
        buffer: &mut Vec<WindowSummary>,
        now: u64,
        draws: &mut impl LinkDraws,
    ) -> Option<u64> {
        if buffer.is_empty() {
            return None;
        }
        let batch_id = self.next_id;
        self.next_id += 1;
        self.pending.insert(
            batch_id,
            BatchTransfer {
                batch_id,
                gateway_id: gateway_id.clone(),
                records: std::mem::take(buffer),
                request_tick: now,
                ack_tick: None,
                retry_count: 0,
            },
        );
        self.attempt(batch_id, now, draws);
        Some(batch_id)
    }

    /// Advances the channel to `now`; returns batches newly accepted by the store.
    pub fn poll(&mut self, now: u64, draws: &mut impl LinkDraws) -> Vec<BatchTransfer> {
        let mut stored = Vec::new();
        while self.queue.peek().is_some_and(|Reverse((t, _, _))| *t <= now) {
            let Reverse((_, _, event)) = self.queue.pop().expect("peeked");
            match event {
                Event::Arrive { batch_id } => {
                    if self.in_store.insert(batch_id) {
                        if let Some(b) = self.pending.get(&batch_id) {
                            stored.push(b.clone());
                        }
                    }
                }
                Event::Ack { batch_id } => {
                    if let Some(mut b) = self.pending.remove(&batch_id) {
                        b.ack_tick = Some(now);
                        self.acknowledged.push(b);
                    }
                }
                Event::Timeout { batch_id, attempt } => {
                    let Some(b) = self.pending.get_mut(&batch_id) else {
                        continue;
                    };
                    if b.retry_count != attempt {
                        continue;
                    }
                    if b.retry_count >= self.config.max_retries {
                        let b = self.pending.remove(&batch_id).expect("present");
                        self.dead_letters.push(b);
                    } else {
                        b.retry_count += 1;
                        self.attempt(batch_id, now, draws);
                    }
                }
            }
        }
        stored
    }

    pub fn acknowledged(&self) -> &[BatchTransfer] {
        &self.acknowledged
    }

    pub fn dead_letters(&self) -> &[BatchTransfer] {
        &self.dead_letters
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    fn attempt(&mut self, batch_id: u64, now: u64, draws: &mut impl LinkDraws) {
        let retry = self.pending[&batch_id].retry_count;
        let link = self.link;
        let request_lost = draws.dropped(Hop::ToCloud, &link);
        let there = link.base_latency + draws.jitter(Hop::ToCloud, &link);
        if !request_lost {
            self.schedule(now + there, Event::Arrive { batch_id });
            let ack_lost = draws.dropped(Hop::ToCloud, &link);
            let back = link.base_latency + draws.jitter(Hop::ToCloud, &link);
            if !ack_lost {
                self.schedule(now + there + back, Event::Ack { batch_id });
            }
        }
        let backoff = self.config.backoff_base_ticks << retry.min(32);
        self.schedule(
            now + link.ack_timeout() + backoff,
            Event::Timeout {
                batch_id,
                attempt: retry,
            },
        );
    }

    fn schedule(&mut self, tick: u64, event: Event) {
        self.seq += 1;
        self.queue.push(Reverse((tick, self.seq, event)));
    }
}
