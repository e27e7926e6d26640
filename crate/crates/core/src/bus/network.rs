use std::collections::{BTreeMap, VecDeque};

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::adversary::AdversaryAction;
use super::frame::{fragment, CanFdFrame, Reassembler, FRAG_HEADER_LEN};
use super::latency::{NodeClass, OpTally};
use super::{frame_time_us, BusConfig};
use crate::error::{SimError, StateError};
use crate::group::GroupParams;
use crate::kem::{EcuKeyPair, KemCiphertext};
use crate::protocol::{
    Destination, EcuState, MessageKind, NodeId, Outcome, ProtocolConfig, RejectReason, SecuState,
    WireMessage, SECU_ID,
};

/// Station id used for injected traffic.
pub const ADVERSARY_ID: NodeId = 0x7FF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: u8,
    pub start_us: u64,
    pub end_us: u64,
    pub elapsed_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rejection {
    pub time_us: u64,
    pub node: NodeId,
    pub kind: MessageKind,
    pub reason: RejectReason,
}

/// Metrics accumulated over a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimReport {
    /// Messages emitted by protocol nodes.
    pub logical_messages: u64,
    pub adversary_messages: u64,
    /// All frames that went over the bus, injected ones included.
    pub frames: u64,
    pub protocol_frames: u64,
    /// Frame receptions summed over nodes.
    pub deliveries: u64,
    pub phases: Vec<PhaseTiming>,
    /// Group-wide session refreshes (one per rollover, however many ECUs take part).
    pub refresh_events: u64,
    pub session_round: u64,
    pub rejections: Vec<Rejection>,
    pub adversary_actions_fired: u64,
}

impl SimReport {
    pub fn phase(&self, phase: u8) -> Option<&PhaseTiming> {
        self.phases.iter().find(|p| p.phase == phase)
    }

    pub fn elapsed_us(&self, phase: u8) -> Option<u64> {
        self.phase(phase).map(|p| p.elapsed_us)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub timestamp_us: u64,
    pub can_id: u16,
    pub frag_index: u8,
    pub frag_total: u8,
    pub payload: Vec<u8>,
}

impl TraceRecord {
    pub const CSV_HEADER: &'static str = "timestamp_us,can_id,frag,payload_hex";

    /// `timestamp_us,can_id,frag,payload_hex`.
    pub fn to_csv(&self) -> String {
        format!(
            "{},0x{:03x},{}/{},{}",
            self.timestamp_us,
            self.can_id,
            self.frag_index,
            self.frag_total,
            hex::encode(&self.payload)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Protocol { occurrence: usize },
    Adversary,
}

#[derive(Debug, Clone)]
struct FrameTag {
    station: NodeId,
    origin: Origin,
    last: bool,
}

#[derive(Debug)]
enum Event {
    JobReady {
        station: NodeId,
        msg: WireMessage,
        adversarial: bool,
    },
    TxDone,
    Arbitrate,
}

#[derive(Debug)]
struct Station {
    can_id: u16,
    next_seq: u16,
    tx: VecDeque<(CanFdFrame, FrameTag)>,
    jobs: VecDeque<(u64, WireMessage)>,
    cpu_free: u64,
    job_in_flight: bool,
}

impl Station {
    fn new(can_id: u16) -> Self {
        Self {
            can_id,
            next_seq: 0,
            tx: VecDeque::new(),
            jobs: VecDeque::new(),
            cpu_free: 0,
            job_in_flight: false,
        }
    }
}

/// A SECU, `N` ECUs and an optional adversary sharing one CAN-FD bus.
pub struct Network {
    params: GroupParams,
    cfg: BusConfig,
    secu: SecuState,
    ecus: Vec<EcuState>,
    stations: BTreeMap<NodeId, Station>,
    rng: ChaCha20Rng,
    adv_rng: ChaCha20Rng,
    now: u64,
    seq: u64,
    events: BTreeMap<(u64, u8, u64), Event>,
    on_air: Option<(CanFdFrame, FrameTag)>,
    reassembler: Reassembler,
    emitted: BTreeMap<MessageKind, usize>,
    adversary: Vec<(AdversaryAction, bool)>,
    activity_end: u64,
    report: SimReport,
    trace: Vec<TraceRecord>,
    phase4_sender: NodeId,
}

impl Network {
    /// `rng` drives protocol randomness; `adv_rng` the adversary's fabricated bodies.
    pub fn new(
        params: GroupParams,
        keypairs: Vec<EcuKeyPair>,
        protocol: ProtocolConfig,
        cfg: BusConfig,
        rng: ChaCha20Rng,
        adv_rng: ChaCha20Rng,
    ) -> Self {
        let registry = keypairs
            .iter()
            .map(|kp| (kp.ecu_id, kp.public.clone()))
            .collect();
        let mut stations = BTreeMap::new();
        stations.insert(SECU_ID, Station::new(cfg.secu_can_id));
        stations.insert(ADVERSARY_ID, Station::new(cfg.adversary_can_id));
        for kp in &keypairs {
            stations.insert(kp.ecu_id, Station::new(cfg.ecu_can_base + kp.ecu_id));
        }
        let phase4_sender = keypairs.iter().map(|k| k.ecu_id).min().unwrap_or(1);
        let ecus = keypairs
            .into_iter()
            .map(|kp| EcuState::new(params.clone(), kp, protocol))
            .collect();
        Self {
            secu: SecuState::new(params.clone(), registry),
            params,
            cfg,
            ecus,
            stations,
            rng,
            adv_rng,
            now: 0,
            seq: 0,
            events: BTreeMap::new(),
            on_air: None,
            reassembler: Reassembler::default(),
            emitted: BTreeMap::new(),
            adversary: Vec::new(),
            activity_end: 0,
            report: SimReport::default(),
            trace: Vec::new(),
            phase4_sender,
        }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn config(&self) -> &BusConfig {
        &self.cfg
    }

    pub fn secu(&self) -> &SecuState {
        &self.secu
    }

    pub fn ecus(&self) -> &[EcuState] {
        &self.ecus
    }

    pub fn ecu(&self, id: NodeId) -> Option<&EcuState> {
        self.ecus.iter().find(|e| e.id() == id)
    }

    pub fn report(&self) -> &SimReport {
        &self.report
    }

    pub fn into_report(self) -> SimReport {
        self.report
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn phase4_sender(&self) -> NodeId {
        self.phase4_sender
    }

    pub fn set_phase4_sender(&mut self, id: NodeId) {
        self.phase4_sender = id;
    }

    pub fn set_can_id(&mut self, station: NodeId, can_id: u16) {
        self.stations
            .entry(station)
            .or_insert_with(|| Station::new(can_id))
            .can_id = can_id;
    }

    pub fn inject_adversary(&mut self, action: AdversaryAction) {
        self.adversary.push((action, false));
    }

    fn node_count(&self) -> u64 {
        1 + self.ecus.len() as u64
    }

    fn push_event(&mut self, at: u64, event: Event) {
        // arbitration runs after every other event sharing its timestamp
        let class = u8::from(matches!(event, Event::Arbitrate));
        self.seq += 1;
        self.events.insert((at, class, self.seq), event);
    }

    /// Queues `msg` for transmission by `node` at `at_us`, bypassing compute latency.
    pub fn schedule_send(&mut self, node: NodeId, msg: WireMessage, at_us: u64) {
        self.push_event(
            at_us.max(self.now),
            Event::JobReady {
                station: node,
                msg,
                adversarial: node == ADVERSARY_ID,
            },
        );
    }

    fn enqueue_jobs(&mut self, station: NodeId, jobs: Vec<(u64, WireMessage)>) {
        let st = self.stations.get_mut(&station).expect("known station");
        st.jobs.extend(jobs);
        if !st.job_in_flight {
            self.start_next_job(station);
        }
    }

    fn start_next_job(&mut self, station: NodeId) {
        let now = self.now;
        let st = self.stations.get_mut(&station).expect("known station");
        let Some((cost, msg)) = st.jobs.pop_front() else {
            st.job_in_flight = false;
            return;
        };
        let ready = now.max(st.cpu_free) + cost;
        st.cpu_free = ready;
        st.job_in_flight = true;
        self.activity_end = self.activity_end.max(ready);
        self.push_event(
            ready,
            Event::JobReady {
                station,
                msg,
                adversarial: false,
            },
        );
    }

    /// Drains the event queue.
    pub fn run_to_quiescence(&mut self) -> Result<(), SimError> {
        while let Some(((at, _, _), event)) = self.events.pop_first() {
            debug_assert!(at >= self.now, "time went backwards");
            self.now = at;
            self.activity_end = self.activity_end.max(at);
            match event {
                Event::JobReady {
                    station,
                    msg,
                    adversarial,
                } => self.on_job_ready(station, msg, adversarial),
                Event::Arbitrate => self.on_arbitrate(),
                Event::TxDone => self.on_tx_done(),
            }
        }
        Ok(())
    }

    fn on_job_ready(&mut self, station: NodeId, msg: WireMessage, adversarial: bool) {
        let origin = if adversarial {
            self.report.adversary_messages += 1;
            Origin::Adversary
        } else {
            self.report.logical_messages += 1;
            let n = self.emitted.entry(msg.kind).or_insert(0);
            *n += 1;
            Origin::Protocol { occurrence: *n - 1 }
        };
        let st = self.stations.get_mut(&station).expect("known station");
        let seq = st.next_seq;
        st.next_seq = st.next_seq.wrapping_add(1);
        let frames = fragment(msg.kind, msg.receiver, &msg.body, st.can_id, seq)
            .expect("protocol bodies fit the fragment budget");
        let count = frames.len();
        for (i, f) in frames.into_iter().enumerate() {
            st.tx.push_back((
                f,
                FrameTag {
                    station,
                    origin,
                    last: i + 1 == count,
                },
            ));
        }
        self.push_event(self.now, Event::Arbitrate);
    }

    fn on_arbitrate(&mut self) {
        if self.on_air.is_some() {
            return;
        }
        let winner = self
            .stations
            .iter()
            .filter_map(|(id, st)| st.tx.front().map(|(f, _)| (f.can_id, *id)))
            .min();
        let Some((_, station)) = winner else {
            return;
        };
        let (mut frame, tag) = self
            .stations
            .get_mut(&station)
            .and_then(|st| st.tx.pop_front())
            .expect("winner has a frame");
        frame.timestamp_us = self.now;
        self.apply_tamper(&mut frame, &tag);
        let done = self.now + frame_time_us(&frame, &self.cfg);
        self.on_air = Some((frame, tag));
        self.push_event(done, Event::TxDone);
    }

    fn apply_tamper(&mut self, frame: &mut CanFdFrame, tag: &FrameTag) {
        let Origin::Protocol { occurrence } = tag.origin else {
            return;
        };
        let Some(hdr) = frame.header() else { return };
        for (action, fired) in self.adversary.iter_mut() {
            if *fired {
                continue;
            }
            if let AdversaryAction::Tamper {
                kind,
                occurrence: occ,
                fragment,
                bit,
            } = action
            {
                let data_bits = (frame.payload.len() - FRAG_HEADER_LEN) * 8;
                if *kind == frame.kind
                    && *occ == occurrence
                    && *fragment == hdr.frag_index
                    && data_bits > 0
                {
                    let b = *bit % data_bits;
                    frame.payload[FRAG_HEADER_LEN + b / 8] ^= 1 << (b % 8);
                    *fired = true;
                    self.report.adversary_actions_fired += 1;
                }
            }
        }
    }

    fn on_tx_done(&mut self) {
        let (frame, tag) = self.on_air.take().expect("a frame is on the air");
        self.report.frames += 1;
        if tag.origin != Origin::Adversary {
            self.report.protocol_frames += 1;
        }
        self.report.deliveries += self.node_count();
        let hdr = frame.header().expect("well-formed header");
        self.trace.push(TraceRecord {
            timestamp_us: frame.timestamp_us,
            can_id: frame.can_id,
            frag_index: hdr.frag_index,
            frag_total: hdr.frag_total,
            payload: frame.payload.clone(),
        });
        if let Some(body) = self.reassembler.push(&frame) {
            let msg = WireMessage {
                kind: frame.kind,
                sender: tag.station,
                receiver: frame.dest,
                body,
            };
            self.dispatch(&msg);
            if let Origin::Protocol { occurrence } = tag.origin {
                self.schedule_replays(&msg, occurrence);
            }
        }
        if tag.last && tag.origin != Origin::Adversary {
            let st = self.stations.get_mut(&tag.station).expect("known station");
            if st.job_in_flight {
                st.job_in_flight = false;
                self.start_next_job(tag.station);
            }
        }
        self.push_event(self.now, Event::Arbitrate);
    }

    fn schedule_replays(&mut self, msg: &WireMessage, occurrence: usize) {
        let mut replays = Vec::new();
        for (action, fired) in self.adversary.iter_mut() {
            if let AdversaryAction::Replay {
                kind,
                occurrence: occ,
                delay_us,
                can_id,
            } = action
            {
                if !*fired && *kind == msg.kind && *occ == occurrence {
                    *fired = true;
                    replays.push((*delay_us, *can_id));
                }
            }
        }
        for (delay, can_id) in replays {
            self.report.adversary_actions_fired += 1;
            let adv_can = can_id.unwrap_or(self.cfg.adversary_can_id);
            self.set_can_id(ADVERSARY_ID, adv_can);
            let replay = WireMessage {
                sender: ADVERSARY_ID,
                ..msg.clone()
            };
            self.push_event(
                self.now + delay,
                Event::JobReady {
                    station: ADVERSARY_ID,
                    msg: replay,
                    adversarial: true,
                },
            );
        }
    }

    /// Hands a reassembled message to every node and charges its handler latency.
    fn dispatch(&mut self, msg: &WireMessage) {
        let now = self.now;
        let tally = OpTally::receive(msg.kind);
        let secu_outcome = self.secu.handle(msg);
        let secu_tally = match msg.kind {
            MessageKind::SeedBroadcast => OpTally::SEED_OBSERVE,
            _ => tally,
        };
        self.charge(
            SECU_ID,
            NodeClass::Secu,
            &secu_tally,
            secu_outcome,
            msg.kind,
            now,
        );
        for i in 0..self.ecus.len() {
            let outcome = self.ecus[i].handle(msg);
            let id = self.ecus[i].id();
            self.charge(id, NodeClass::Ecu, &tally, outcome, msg.kind, now);
        }
    }

    fn charge(
        &mut self,
        node: NodeId,
        class: NodeClass,
        tally: &OpTally,
        outcome: Outcome,
        kind: MessageKind,
        now: u64,
    ) {
        if outcome == Outcome::Ignored {
            return;
        }
        let cost = self.cfg.latency.cost_us(class, tally);
        let st = self.stations.get_mut(&node).expect("known station");
        let end = now.max(st.cpu_free) + cost;
        st.cpu_free = end;
        self.activity_end = self.activity_end.max(end);
        if let Outcome::Rejected(reason) = outcome {
            self.report.rejections.push(Rejection {
                time_us: end,
                node,
                kind,
                reason,
            });
        }
    }

    fn forge_body(&mut self, kind: MessageKind, body_hex: &Option<String>) -> Vec<u8> {
        if let Some(h) = body_hex {
            if let Ok(b) = hex::decode(h) {
                return b;
            }
        }
        match kind {
            MessageKind::PairwiseCipher => {
                let p = &self.params;
                let c = p.exp_gen(&p.random_scalar(&mut self.adv_rng));
                let alpha = p.exp_gen(&p.random_scalar(&mut self.adv_rng));
                KemCiphertext { c, alpha }.encode(p)
            }
            _ => {
                let mut b = vec![0u8; kind.body_len(&self.params)];
                self.adv_rng.fill_bytes(&mut b);
                b
            }
        }
    }

    fn schedule_forgeries(&mut self, phase: u8) {
        let mut forged = Vec::new();
        for (action, fired) in self.adversary.iter_mut() {
            if let AdversaryAction::Forge {
                kind,
                receiver,
                offset_us,
                body_hex,
            } = action
            {
                if !*fired && kind.phase() == phase {
                    *fired = true;
                    forged.push((*kind, *receiver, *offset_us, body_hex.clone()));
                }
            }
        }
        for (kind, receiver, offset, body_hex) in forged {
            self.report.adversary_actions_fired += 1;
            let body = self.forge_body(kind, &body_hex);
            let msg = WireMessage {
                kind,
                sender: ADVERSARY_ID,
                receiver: receiver.map_or(Destination::Broadcast, Destination::Node),
                body,
            };
            self.push_event(
                self.now + offset,
                Event::JobReady {
                    station: ADVERSARY_ID,
                    msg,
                    adversarial: true,
                },
            );
        }
    }

    /// Kicks off the initiator of `phase` (2, 3 or 4) and runs until the bus and
    /// every node are idle.
    pub fn run_phase(&mut self, phase: u8) -> Result<PhaseTiming, SimError> {
        let start = self.now;
        self.activity_end = start;
        let secu_costs = |net: &Network, t: &OpTally| net.cfg.latency.cost_us(NodeClass::Secu, t);
        match phase {
            2 => {
                let msgs = self.secu.run_phase2(&mut self.rng)?;
                let cost = secu_costs(self, &OpTally::ENCAPSULATE);
                self.enqueue_jobs(SECU_ID, msgs.into_iter().map(|m| (cost, m)).collect());
            }
            3 => {
                let msgs = self.secu.run_phase3(&mut self.rng)?;
                let cost = secu_costs(self, &OpTally::WRAP_GROUP_SECRET);
                self.enqueue_jobs(SECU_ID, msgs.into_iter().map(|m| (cost, m)).collect());
            }
            4 => {
                let sender = self.phase4_sender;
                let Some(idx) = self.ecus.iter().position(|e| e.id() == sender) else {
                    return Err(SimError::Deadlock {
                        phase,
                        reason: format!("elected sender {sender} is not on the bus"),
                    });
                };
                let msg = match self.ecus[idx].run_phase4(&mut self.rng) {
                    Ok(m) => m,
                    Err(StateError::NoGroupSecret) => {
                        return Err(SimError::Deadlock {
                            phase,
                            reason: format!("elected sender {sender} holds no group secret"),
                        })
                    }
                    Err(e) => return Err(e.into()),
                };
                let cost = self
                    .cfg
                    .latency
                    .cost_us(NodeClass::Ecu, &OpTally::SEED_SEND);
                self.enqueue_jobs(sender, vec![(cost, msg)]);
            }
            other => {
                return Err(SimError::Deadlock {
                    phase: other,
                    reason: "only phases 2, 3 and 4 use the bus".into(),
                })
            }
        }
        self.schedule_forgeries(phase);
        self.run_to_quiescence()?;
        let end = self.activity_end.max(start);
        self.now = end;
        let timing = PhaseTiming {
            phase,
            start_us: start,
            end_us: end,
            elapsed_us: end - start,
        };
        self.report.phases.push(timing);
        Ok(timing)
    }

    /// Phases 2 through 4 back to back.
    pub fn establish(&mut self) -> Result<(), SimError> {
        for phase in [2, 3, 4] {
            self.run_phase(phase)?;
        }
        Ok(())
    }

    /// Counts `ticks` data frames at every ECU holding a session. Refreshes happen
    /// locally; nothing is put on the bus.
    pub fn run_ticks(&mut self, ticks: u64) -> Result<u64, SimError> {
        let mut events = 0;
        for _ in 0..ticks {
            let mut refreshed = false;
            for ecu in self.ecus.iter_mut().filter(|e| e.session().is_some()) {
                refreshed |= ecu.tick_counter()?.is_some();
            }
            events += u64::from(refreshed);
        }
        self.report.refresh_events += events;
        self.report.session_round = self
            .ecus
            .iter()
            .filter_map(|e| e.session().map(|s| s.round))
            .max()
            .unwrap_or(0);
        Ok(events)
    }
}
