use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::{validate_topic, TransportError};
use crate::plant::{MachineEvent, SensorReading};
use crate::rng::RngStream;
use crate::Id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Qos {
    AtMostOnce,
    AtLeastOnce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkModel {
    pub base_latency: u64,
    pub jitter: u64,
    pub drop_probability: f64,
}

impl LinkModel {
    pub fn new(base_latency: u64, jitter: u64, drop_probability: f64) -> Result<Self, TransportError> {
        let link = LinkModel {
            base_latency,
            jitter,
            drop_probability,
        };
        link.validate()?;
        Ok(link)
    }

    /// A link that loses every message. Only for outage experiments; scenario
    /// files cannot configure one.
    pub fn dead(base_latency: u64, jitter: u64) -> Self {
        LinkModel {
            base_latency,
            jitter,
            drop_probability: 1.0,
        }
    }

    pub fn lossless(base_latency: u64) -> Self {
        LinkModel {
            base_latency,
            jitter: 0,
            drop_probability: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(TransportError::InvalidLink(format!(
                "drop_probability {} outside [0, 1)",
                self.drop_probability
            )));
        }
        Ok(())
    }

    /// Retransmission timeout: the worst-case round trip plus one tick.
    pub fn ack_timeout(&self) -> u64 {
        2 * (self.base_latency + self.jitter) + 1
    }
}

/// Source of loss and jitter decisions. Implemented by [`RngStream`] and
/// [`HopStreams`]; tests can script exact loss patterns.
pub trait LinkDraws {
    fn dropped(&mut self, hop: Hop, link: &LinkModel) -> bool;
    fn jitter(&mut self, hop: Hop, link: &LinkModel) -> u64;
}

impl LinkDraws for RngStream {
    fn dropped(&mut self, _: Hop, link: &LinkModel) -> bool {
        self.bernoulli(link.drop_probability)
    }

    fn jitter(&mut self, _: Hop, link: &LinkModel) -> u64 {
        if link.jitter == 0 {
            0
        } else {
            self.uniform_u64(0, link.jitter)
        }
    }
}

/// Separate streams per hop, so uplink settings never shift the draws seen
/// by device links.
#[derive(Debug, Clone)]
pub struct HopStreams {
    pub device: RngStream,
    pub uplink: RngStream,
}

impl HopStreams {
    fn stream(&mut self, hop: Hop) -> &mut RngStream {
        match hop {
            Hop::ToGateway => &mut self.device,
            Hop::ToCloud => &mut self.uplink,
        }
    }
}

impl LinkDraws for HopStreams {
    fn dropped(&mut self, hop: Hop, link: &LinkModel) -> bool {
        self.stream(hop).dropped(hop, link)
    }

    fn jitter(&mut self, hop: Hop, link: &LinkModel) -> u64 {
        self.stream(hop).jitter(hop, link)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Payload {
    Reading(SensorReading),
    Event {
        machine_id: Id,
        tick: u64,
        #[serde(flatten)]
        event: MachineEvent,
    },
}

impl Payload {
    /// Encoded size estimate: fixed numeric fields plus identifier bytes.
    pub fn wire_size(&self) -> usize {
        match self {
            Payload::Reading(r) => 40 + r.sensor_id.len() + r.machine_id.len(),
            Payload::Event { machine_id, .. } => 24 + machine_id.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    /// Originating device; `None` for gateway-originated messages.
    pub device: Option<Id>,
    pub gateway: Option<usize>,
    pub hops: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub msg_id: u64,
    pub topic: Id,
    pub qos: Qos,
    pub payload: Payload,
    pub published_tick: u64,
    pub delivered_tick: Option<u64>,
    pub dup: bool,
    pub route: Route,
}

/// Devices attach to exactly one gateway; every gateway has a single uplink
/// to the cloud. There are no device-to-device edges.
#[derive(Debug, Clone, Default)]
pub struct Topology {
    gateways: Vec<Id>,
    device_gateway: HashMap<Id, usize>,
}

impl Topology {
    pub fn new(
        gateways: Vec<Id>,
        edges: impl IntoIterator<Item = (Id, Id)>,
    ) -> Result<Self, TransportError> {
        let index: HashMap<&str, usize> = gateways
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_ref(), i))
            .collect();
        if index.len() != gateways.len() {
            return Err(TransportError::InvalidTopology("duplicate gateway id".into()));
        }
        let mut device_gateway = HashMap::new();
        for (device, gateway) in edges {
            let g = *index.get(gateway.as_ref()).ok_or_else(|| {
                TransportError::InvalidTopology(format!("unknown gateway {gateway:?}"))
            })?;
            if index.contains_key(device.as_ref()) {
                return Err(TransportError::InvalidTopology(format!(
                    "device {device:?} collides with a gateway id"
                )));
            }
            if device_gateway.insert(device.clone(), g).is_some() {
                return Err(TransportError::InvalidTopology(format!(
                    "device {device:?} attached to more than one gateway"
                )));
            }
        }
        Ok(Topology {
            gateways,
            device_gateway,
        })
    }

    pub fn gateway_of(&self, device: &str) -> Option<usize> {
        self.device_gateway.get(device).copied()
    }

    pub fn gateway_id(&self, index: usize) -> &Id {
        &self.gateways[index]
    }

    pub fn gateways(&self) -> &[Id] {
        &self.gateways
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hop {
    ToGateway,
    ToCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub hop: Hop,
    pub gateway: usize,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TransportStats {
    pub published: u64,
    pub delivered_to_gateway: u64,
    pub delivered_to_cloud: u64,
    pub dropped: u64,
    pub retransmissions: u64,
}

#[derive(Debug)]
struct Pending {
    tick: u64,
    seq: u64,
    hop: Hop,
    gateway: usize,
    retry: bool,
    envelope: Envelope,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        (self.tick, self.seq) == (other.tick, other.seq)
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.tick, self.seq).cmp(&(other.tick, other.seq))
    }
}

/// In-simulation broker for a star network.
///
/// A device publishes to its gateway; the gateway (the edge node) decides
/// what to forward over its uplink to the cloud. AT_MOST_ONCE messages lost
/// on a hop are gone; AT_LEAST_ONCE messages are retransmitted on that hop
/// after [`LinkModel::ack_timeout`] until an ack makes it back, so the
/// receiver may see duplicates (flagged `dup`).
#[derive(Debug)]
pub struct StarNetwork {
    topology: Topology,
    device_link: LinkModel,
    uplink: LinkModel,
    max_payload_bytes: usize,
    queue: BinaryHeap<Reverse<Pending>>,
    next_seq: u64,
    next_msg_id: u64,
    stats: TransportStats,
}

impl StarNetwork {
    pub fn new(topology: Topology, device_link: LinkModel, uplink: LinkModel, max_payload_bytes: usize) -> Self {
        StarNetwork {
            topology,
            device_link,
            uplink,
            max_payload_bytes,
            queue: BinaryHeap::new(),
            next_seq: 0,
            next_msg_id: 0,
            stats: TransportStats::default(),
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn uplink(&self) -> &LinkModel {
        &self.uplink
    }

    pub fn device_link(&self) -> &LinkModel {
        &self.device_link
    }

    pub fn set_uplink(&mut self, link: LinkModel) {
        self.uplink = link;
    }

    pub fn stats(&self) -> TransportStats {
        self.stats
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    /// Publishes from a device toward its gateway. Returns the message id.
    pub fn publish(
        &mut self,
        device: &str,
        topic: Id,
        qos: Qos,
        payload: Payload,
        now: u64,
        draws: &mut impl LinkDraws,
    ) -> Result<u64, TransportError> {
        let gateway = self
            .topology
            .gateway_of(device)
            .ok_or_else(|| TransportError::UnknownPublisher(device.to_owned()))?;
        let envelope = self.envelope(topic, qos, payload, now, Some(device.into()))?;
        let id = envelope.msg_id;
        self.send(envelope, Hop::ToGateway, gateway, now, draws);
        Ok(id)
    }

    /// Publishes a gateway-originated message straight onto its uplink.
    pub fn publish_from_gateway(
        &mut self,
        gateway: usize,
        topic: Id,
        qos: Qos,
        payload: Payload,
        now: u64,
        draws: &mut impl LinkDraws,
    ) -> Result<u64, TransportError> {
        if gateway >= self.topology.gateways.len() {
            return Err(TransportError::UnknownPublisher(format!("gateway #{gateway}")));
        }
        let mut envelope = self.envelope(topic, qos, payload, now, None)?;
        envelope.route.gateway = Some(gateway);
        let id = envelope.msg_id;
        self.send(envelope, Hop::ToCloud, gateway, now, draws);
        Ok(id)
    }

    /// Relays an envelope that reached `gateway` on to the cloud with `qos`.
    pub fn forward(&mut self, gateway: usize, mut envelope: Envelope, qos: Qos, now: u64, draws: &mut impl LinkDraws) {
        envelope.qos = qos;
        envelope.dup = false;
        envelope.delivered_tick = None;
        self.send(envelope, Hop::ToCloud, gateway, now, draws);
    }

    /// Deliveries due at or before `now`, in schedule order.
    pub fn poll(&mut self, now: u64, draws: &mut impl LinkDraws) -> Vec<Delivery> {
        let mut out = Vec::new();
        while self.queue.peek().is_some_and(|p| p.0.tick <= now) {
            let Reverse(p) = self.queue.pop().expect("peeked");
            if p.retry {
                self.stats.retransmissions += 1;
                self.send(p.envelope, p.hop, p.gateway, now, draws);
                continue;
            }
            let mut envelope = p.envelope;
            envelope.delivered_tick = Some(now);
            envelope.route.hops += 1;
            match p.hop {
                Hop::ToGateway => {
                    envelope.route.gateway = Some(p.gateway);
                    self.stats.delivered_to_gateway += 1;
                }
                Hop::ToCloud => self.stats.delivered_to_cloud += 1,
            }
            out.push(Delivery {
                hop: p.hop,
                gateway: p.gateway,
                envelope,
            });
        }
        out
    }

    fn envelope(
        &mut self,
        topic: Id,
        qos: Qos,
        payload: Payload,
        now: u64,
        device: Option<Id>,
    ) -> Result<Envelope, TransportError> {
        validate_topic(&topic)?;
        let size = payload.wire_size();
        if size > self.max_payload_bytes {
            return Err(TransportError::PayloadTooLarge {
                size,
                limit: self.max_payload_bytes,
            });
        }
        let msg_id = self.next_msg_id;
        self.next_msg_id += 1;
        self.stats.published += 1;
        Ok(Envelope {
            msg_id,
            topic,
            qos,
            payload,
            published_tick: now,
            delivered_tick: None,
            dup: false,
            route: Route {
                device,
                gateway: None,
                hops: 0,
            },
        })
    }

    fn send(&mut self, envelope: Envelope, hop: Hop, gateway: usize, now: u64, draws: &mut impl LinkDraws) {
        let link = match hop {
            Hop::ToGateway => self.device_link,
            Hop::ToCloud => self.uplink,
        };
        let lost = draws.dropped(hop, &link);
        let delay = link.base_latency + draws.jitter(hop, &link);
        let resend = envelope.qos == Qos::AtLeastOnce && (lost || draws.dropped(hop, &link));
        if resend {
            let mut again = envelope.clone();
            again.dup = true;
            self.push(now + link.ack_timeout(), hop, gateway, true, again);
        }
        if lost {
            self.stats.dropped += 1;
        } else {
            self.push(now + delay, hop, gateway, false, envelope);
        }
    }

    fn push(&mut self, tick: u64, hop: Hop, gateway: usize, retry: bool, envelope: Envelope) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Pending {
            tick,
            seq,
            hop,
            gateway,
            retry,
            envelope,
        }));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::SensorKind;
    use crate::rng::split_rng;

    fn reading(seq: u64) -> Payload {
        Payload::Reading(SensorReading {
            sensor_id: "m1-energy".into(),
            machine_id: "m1".into(),
            kind: SensorKind::Energy,
            tick: 0,
            value: 1.0,
            seq_no: seq,
        })
    }

    fn star(device: LinkModel, uplink: LinkModel) -> StarNetwork {
        let topo = Topology::new(
            vec!["gw1".into(), "gw2".into()],
            [("m1-energy".into(), "gw1".into()), ("m2-energy".into(), "gw2".into())],
        )
        .unwrap();
        StarNetwork::new(topo, device, uplink, 256)
    }

    /// Relays every gateway arrival to the cloud; returns cloud deliveries.
    fn run_relay(net: &mut StarNetwork, rng: &mut RngStream, until: u64) -> Vec<Delivery> {
        let mut at_cloud = Vec::new();
        for now in 0..=until {
            for d in net.poll(now, rng) {
                match d.hop {
                    Hop::ToGateway => {
                        let qos = d.envelope.qos;
                        net.forward(d.gateway, d.envelope, qos, now, rng)
                    }
                    Hop::ToCloud => at_cloud.push(d),
                }
            }
        }
        at_cloud
    }

    #[test]
    fn lossless_star_delivers_after_two_hops() {
        let link = LinkModel::lossless(1);
        let mut net = star(link, link);
        let mut rng = split_rng(1, "link-loss");
        net.publish("m1-energy", "plant/m1/energy".into(), Qos::AtMostOnce, reading(0), 5, &mut rng)
            .unwrap();
        let got = run_relay(&mut net, &mut rng, 20);
        assert_eq!(got.len(), 1);
        let env = &got[0].envelope;
        assert_eq!(env.delivered_tick, Some(7));
        assert_eq!(env.route.device.as_deref(), Some("m1-energy"));
        assert_eq!(env.route.gateway, Some(0));
        assert_eq!(env.route.hops, 2);
    }

    #[test]
    fn routing_errors() {
        let mut net = star(LinkModel::lossless(1), LinkModel::lossless(1));
        let mut rng = split_rng(1, "link-loss");
        assert_eq!(
            net.publish("ghost", "plant/m1/energy".into(), Qos::AtMostOnce, reading(0), 0, &mut rng),
            Err(TransportError::UnknownPublisher("ghost".into()))
        );
        let big = Payload::Reading(SensorReading {
            sensor_id: "x".repeat(300).into(),
            machine_id: "m1".into(),
            kind: SensorKind::Energy,
            tick: 0,
            value: 0.0,
            seq_no: 0,
        });
        assert!(matches!(
            net.publish("m1-energy", "plant/m1/energy".into(), Qos::AtMostOnce, big, 0, &mut rng),
            Err(TransportError::PayloadTooLarge { .. })
        ));
        assert!(net
            .publish("m1-energy", "plant/+/energy".into(), Qos::AtMostOnce, reading(0), 0, &mut rng)
            .is_err());
    }

    #[test]
    fn topology_rejects_non_star_shapes() {
        assert!(Topology::new(vec!["g".into()], [("d".into(), "g".into()), ("d".into(), "g".into())]).is_err());
        assert!(Topology::new(vec!["g".into()], [("d".into(), "nope".into())]).is_err());
        assert!(Topology::new(vec!["g".into()], [("g".into(), "g".into())]).is_err());
    }

    #[test]
    fn link_validation() {
        assert!(LinkModel::new(1, 0, 1.0).is_err());
        assert!(LinkModel::new(1, 0, -0.1).is_err());
        assert!(LinkModel::new(1, 1, 0.99).is_ok());
    }

    #[test]
    fn at_least_once_duplicates_are_flagged() {
        let lossy = LinkModel::new(1, 1, 0.5).unwrap();
        let mut net = star(lossy, lossy);
        let mut rng = split_rng(3, "link-loss");
        for i in 0..200 {
            net.publish("m1-energy", "plant/m1/energy".into(), Qos::AtLeastOnce, reading(i), 0, &mut rng)
                .unwrap();
        }
        let got = run_relay(&mut net, &mut rng, 2000);
        let mut firsts = std::collections::HashSet::new();
        for d in &got {
            if !firsts.insert(d.envelope.msg_id) {
                continue;
            }
        }
        assert_eq!(firsts.len(), 200);
        assert!(got.len() > 200);
        assert!(net.stats().retransmissions > 0);
    }
}
