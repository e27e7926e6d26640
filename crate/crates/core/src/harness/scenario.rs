use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{comparison_table, ComparisonRow, ParamFile, SchemeModel};
use crate::bus::{
    frag_count, AdversaryAction, BusConfig, LatencyProfile, Network, SimReport, TraceRecord,
    DEFAULT_BITRATE_BPS, DEFAULT_FRAME_OVERHEAD_BITS,
};
use crate::error::{ConfigError, ScenarioError};
use crate::group::GroupId;
use crate::kem::{keygen, EcuKeyPair};
use crate::protocol::{MessageKind, ProtocolConfig, DEFAULT_CTR_MAX, DEFAULT_REPLAY_CACHE};

const MIN_BITRATE_BPS: u64 = 125_000;
const MAX_BITRATE_BPS: u64 = 20_000_000;

// independent ChaCha streams under one seed
const KEYGEN_STREAM: u64 = 0;
const PROTOCOL_STREAM: u64 = 1;
const ADVERSARY_STREAM: u64 = 2;

fn default_profile() -> String {
    "stm32".into()
}
fn default_bitrate() -> u64 {
    DEFAULT_BITRATE_BPS
}
fn default_overhead() -> u64 {
    DEFAULT_FRAME_OVERHEAD_BITS
}
fn default_ctr_max() -> u64 {
    DEFAULT_CTR_MAX
}
fn default_replay_cache() -> usize {
    DEFAULT_REPLAY_CACHE
}

/// JSON scenario description. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub group: GroupId,
    pub n_ecus: u16,
    /// `stm32`, `w806`, `uno`, `zero` or `custom:<path to profile json>`.
    #[serde(default = "default_profile")]
    pub latency_profile: String,
    #[serde(default = "default_bitrate")]
    pub bitrate_bps: u64,
    #[serde(default = "default_overhead")]
    pub frame_overhead_bits: u64,
    #[serde(default = "default_ctr_max")]
    pub ctr_max: u64,
    /// Data frames counted after key establishment.
    #[serde(default)]
    pub post_ticks: u64,
    pub rng_seed: u64,
    #[serde(default)]
    pub adversary: Vec<AdversaryAction>,
    /// Provisioned keys from `canvault keygen`; generated from the seed otherwise.
    #[serde(default)]
    pub params_file: Option<String>,
    /// Lowest ECU id when absent.
    #[serde(default)]
    pub phase4_sender: Option<u16>,
    #[serde(default = "default_replay_cache")]
    pub replay_cache: usize,
}

impl ScenarioConfig {
    /// Honest run with defaults for everything but the essentials.
    pub fn new(group: GroupId, n_ecus: u16, rng_seed: u64) -> Self {
        Self {
            group,
            n_ecus,
            latency_profile: default_profile(),
            bitrate_bps: DEFAULT_BITRATE_BPS,
            frame_overhead_bits: DEFAULT_FRAME_OVERHEAD_BITS,
            ctr_max: DEFAULT_CTR_MAX,
            post_ticks: 0,
            rng_seed,
            adversary: Vec::new(),
            params_file: None,
            phase4_sender: None,
            replay_cache: DEFAULT_REPLAY_CACHE,
        }
    }

    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&s)
    }

    fn max_ecus() -> u16 {
        let cfg = BusConfig::default();
        cfg.adversary_can_id - cfg.ecu_can_base - 1
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.n_ecus < 1 || self.n_ecus > Self::max_ecus() {
            return invalid(format!(
                "n_ecus must be in 1..={}, got {}",
                Self::max_ecus(),
                self.n_ecus
            ));
        }
        if !(MIN_BITRATE_BPS..=MAX_BITRATE_BPS).contains(&self.bitrate_bps) {
            return invalid(format!(
                "bitrate_bps must be in {MIN_BITRATE_BPS}..={MAX_BITRATE_BPS}, got {}",
                self.bitrate_bps
            ));
        }
        if self.frame_overhead_bits == 0 {
            return invalid("frame_overhead_bits must be positive".into());
        }
        if self.ctr_max == 0 {
            return invalid("ctr_max must be positive".into());
        }
        if self.replay_cache == 0 {
            return invalid("replay_cache must be positive".into());
        }
        let in_group = |id: u16| (1..=self.n_ecus).contains(&id);
        if let Some(s) = self.phase4_sender {
            if !in_group(s) {
                return invalid(format!("phase4_sender {s} is not an ECU of this group"));
            }
        }
        match self.latency_profile.strip_prefix("custom:") {
            Some("") => return invalid("custom latency profile needs a path".into()),
            Some(_) => {}
            None if LatencyProfile::preset(&self.latency_profile).is_none() => {
                return invalid(format!(
                    "unknown latency profile `{}`",
                    self.latency_profile
                ))
            }
            None => {}
        }
        for a in &self.adversary {
            if let AdversaryAction::Forge {
                receiver, body_hex, ..
            } = a
            {
                if let Some(r) = receiver {
                    if !in_group(*r) {
                        return invalid(format!("forge receiver {r} is not an ECU of this group"));
                    }
                }
                if let Some(h) = body_hex {
                    if hex::decode(h).is_err() {
                        return invalid("forge body_hex is not valid hex".into());
                    }
                }
            }
        }
        Ok(())
    }

    fn resolve(base: &Path, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Relative custom-profile paths resolve against `base`.
    pub fn latency(&self, base: &Path) -> Result<LatencyProfile, ConfigError> {
        match self.latency_profile.strip_prefix("custom:") {
            Some(p) => {
                let path = Self::resolve(base, p);
                let s = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                serde_json::from_str(&s).map_err(|e| ConfigError::Parse(e.to_string()))
            }
            None => LatencyProfile::preset(&self.latency_profile).ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "unknown latency profile `{}`",
                    self.latency_profile
                ))
            }),
        }
    }

    pub fn bus_config(&self, latency: LatencyProfile) -> BusConfig {
        BusConfig {
            bitrate_bps: self.bitrate_bps,
            frame_overhead_bits: self.frame_overhead_bits,
            latency,
            ..BusConfig::default()
        }
    }

    fn rng(&self, stream: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(stream);
        rng
    }

    /// The keypairs the run uses: provisioned ones, or a fresh draw from the seed.
    pub fn keypairs(&self, base: &Path) -> Result<Vec<EcuKeyPair>, ConfigError> {
        let Some(p) = &self.params_file else {
            let params = self.group.params();
            let mut rng = self.rng(KEYGEN_STREAM);
            return Ok((1..=self.n_ecus)
                .map(|id| keygen(&params, id, &mut rng))
                .collect());
        };
        let file = ParamFile::load(&Self::resolve(base, p))?;
        if file.group != self.group {
            return Err(ConfigError::Invalid(format!(
                "parameter file is for {}, scenario uses {}",
                file.group, self.group
            )));
        }
        let (_, keys) = file.keypairs()?;
        let ids: Vec<u16> = keys.iter().map(|k| k.ecu_id).collect();
        if ids != (1..=self.n_ecus).collect::<Vec<_>>() {
            return Err(ConfigError::Invalid(format!(
                "parameter file must hold ECUs 1..={} in order",
                self.n_ecus
            )));
        }
        Ok(keys)
    }

    /// The keygen stream of this seed, for provisioning files that reproduce an
    /// inline run.
    pub fn keygen_rng(&self) -> ChaCha20Rng {
        self.rng(KEYGEN_STREAM)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Whether the run fails when this check does.
    pub required: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub group: GroupId,
    pub n_ecus: u16,
    pub latency: LatencyProfile,
    pub bitrate_bps: u64,
    pub ctr_max: u64,
    pub post_ticks: u64,
    pub rng_seed: u64,
    pub phase4_sender: u16,
    pub adversary: Vec<AdversaryAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: ScenarioSummary,
    pub expected_messages: u64,
    pub sim: SimReport,
    /// ECUs holding a session key at the end of the run.
    pub keyed_ecus: u64,
    pub frames_during_ticks: u64,
    /// Scheme operation tallies priced with the ECU costs of the profile.
    pub computation_tally_us: Vec<(SchemeModel, u64)>,
    pub comparison: Vec<ComparisonRow>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

pub struct ScenarioRun {
    pub report: Report,
    pub trace: Vec<TraceRecord>,
    pub network: Network,
}

impl ScenarioRun {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from(TraceRecord::CSV_HEADER);
        out.push('\n');
        for r in &self.trace {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }
}

fn check(name: &str, passed: bool, required: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        required,
        detail,
    }
}

/// Runs phases 2 to 4, then `post_ticks` counter ticks, and checks the outcome
/// against the closed-form expectations. `base` anchors relative paths in `cfg`.
pub fn run_scenario(cfg: &ScenarioConfig, base: &Path) -> Result<ScenarioRun, ScenarioError> {
    cfg.validate()?;
    let latency = cfg.latency(base)?;
    let keys = cfg.keypairs(base)?;
    let params = cfg.group.params();
    let n = u64::from(cfg.n_ecus);
    let protocol = ProtocolConfig {
        ctr_max: cfg.ctr_max,
        replay_cache: cfg.replay_cache,
    };
    let mut net = Network::new(
        params.clone(),
        keys,
        protocol,
        cfg.bus_config(latency.clone()),
        cfg.rng(PROTOCOL_STREAM),
        cfg.rng(ADVERSARY_STREAM),
    );
    if let Some(s) = cfg.phase4_sender {
        net.set_phase4_sender(s);
    }
    for a in &cfg.adversary {
        net.inject_adversary(a.clone());
    }

    net.establish()?;
    let frames_before = net.report().frames;
    net.run_ticks(cfg.post_ticks)?;
    let sim = net.report().clone();
    let frames_during_ticks = sim.frames - frames_before;

    let expected = SchemeModel::Ours.messages(n).expect("n_ecus validated");
    let honest = cfg.adversary.is_empty();
    let ecus = net.ecus();
    let keyed: Vec<_> = ecus.iter().filter_map(|e| e.session()).collect();
    let mut checks = Vec::new();

    checks.push(check(
        "message_count",
        sim.logical_messages == expected,
        true,
        format!(
            "{} logical messages, expected {expected}",
            sim.logical_messages
        ),
    ));

    let expected_frames: u64 = MessageKind::ALL
        .iter()
        .map(|&k| {
            let count = if k == MessageKind::SeedBroadcast {
                1
            } else {
                n
            };
            count * frag_count(k.body_len(&params)) as u64
        })
        .sum();
    checks.push(check(
        "frame_accounting",
        sim.protocol_frames == expected_frames
            && sim.frames >= sim.logical_messages
            && sim.deliveries == sim.frames * (n + 1),
        true,
        format!(
            "{} protocol frames (expected {expected_frames}), {} total, {} deliveries",
            sim.protocol_frames, sim.frames, sim.deliveries
        ),
    ));

    let ordered = sim.phases.iter().map(|p| p.phase).eq([2, 3, 4])
        && sim.phases.windows(2).all(|w| w[0].end_us <= w[1].start_us);
    checks.push(check(
        "phase_order",
        ordered,
        true,
        sim.phases
            .iter()
            .map(|p| format!("phase {}: {} us", p.phase, p.elapsed_us))
            .collect::<Vec<_>>()
            .join(", "),
    ));

    let consistent = keyed
        .windows(2)
        .all(|w| w[0].key == w[1].key && w[0].round == w[1].round);
    checks.push(check(
        "session_consistency",
        consistent,
        true,
        format!("{} of {n} ECUs keyed", keyed.len()),
    ));

    let secu = net.secu();
    let converged = keyed.len() as u64 == n
        && consistent
        && ecus.iter().all(|e| {
            e.pairwise() == secu.pairwise().get(&e.id())
                && e.group_secret().is_some()
                && e.group_secret() == secu.group_secret()
        });
    checks.push(check(
        "key_agreement",
        converged,
        honest,
        if converged {
            "every ECU shares the SECU's pairwise key, group secret and session key".into()
        } else {
            format!("{} of {n} ECUs reached a session key", keyed.len())
        },
    ));

    let expected_refresh = if keyed.is_empty() {
        0
    } else {
        cfg.post_ticks / (cfg.ctr_max + 1)
    };
    checks.push(check(
        "silent_refresh",
        sim.refresh_events == expected_refresh && frames_during_ticks == 0,
        true,
        format!(
            "{} refresh events (expected {expected_refresh}), {frames_during_ticks} frames while ticking",
            sim.refresh_events
        ),
    ));

    let passed = checks.iter().all(|c| c.passed || !c.required);
    let report = Report {
        scenario: ScenarioSummary {
            group: cfg.group,
            n_ecus: cfg.n_ecus,
            latency: latency.clone(),
            bitrate_bps: cfg.bitrate_bps,
            ctr_max: cfg.ctr_max,
            post_ticks: cfg.post_ticks,
            rng_seed: cfg.rng_seed,
            phase4_sender: net.phase4_sender(),
            adversary: cfg.adversary.clone(),
        },
        expected_messages: expected,
        keyed_ecus: keyed.len() as u64,
        frames_during_ticks,
        computation_tally_us: SchemeModel::ALL
            .iter()
            .map(|&s| (s, s.computation_us(&latency)))
            .collect(),
        comparison: comparison_table(&[n]).expect("n_ecus validated"),
        checks,
        passed,
        sim,
    };
    Ok(ScenarioRun {
        report,
        trace: net.trace().to_vec(),
        network: net,
    })
}
