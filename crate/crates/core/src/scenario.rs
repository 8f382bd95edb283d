//! Network model: nodes, streams, channel gains, power and channel budgets.
//!
//! A [`NetworkScenario`] is built once from a scenario file (or a TOML string),
//! validated, and then shared read-only by every solver. Candidate relays whose
//! source-relay channel is no better than the direct channel are dropped during
//! the build, so every DF link that survives can in principle beat direct
//! transmission.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polytope::PolytopeB;

/// Minimum admissible channel share used when a scenario does not set one.
pub const DEFAULT_THETA_MIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelayId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for RelayId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ControlId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read scenario file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("infeasible channel budget at control node {control}: beta = {beta} < theta_min x links = {floor}")]
    InfeasibleBudget { control: ControlId, beta: f64, floor: f64 },
    #[error("coincident nodes at distance {distance}: gain would be infinite")]
    CoincidentNodes { distance: f64 },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub position: Option<Position>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relay {
    pub id: RelayId,
    pub position: Option<Position>,
}

/// A source-destination data stream. Node, relay and control references are
/// dense indices into the owning scenario's tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub id: u32,
    pub source: usize,
    pub destination: usize,
    pub control: usize,
    pub candidates: Vec<usize>,
}

/// Normalized channel qualities `|h|^2 / (N0 W)`.
///
/// `sr` and `rd` are indexed `[stream][relay]` over all relays; only the
/// entries of candidate relays are meaningful to the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub sd: Vec<f64>,
    pub sr: Vec<Vec<f64>>,
    pub rd: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerLimits {
    pub p_s_max: Vec<f64>,
    pub p_r_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBudget {
    pub controls: Vec<ControlId>,
    pub beta: Vec<f64>,
    pub theta_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Radio {
    pub snr_ref_db: f64,
    pub path_loss_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    Direct,
    Relayed { relay: usize },
}

/// One candidate wireless link: the DT link of a stream, or one of its DF links.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub stream: usize,
    pub kind: LinkKind,
}

impl Link {
    pub fn relay(&self) -> Option<usize> {
        match self.kind {
            LinkKind::Direct => None,
            LinkKind::Relayed { relay } => Some(relay),
        }
    }
}

/// Which links draw on which node's power or control node's channel budget.
/// This is the sparse form of the power incidence matrix: row `l` of the
/// source block lists the links whose source power is spent by node `l`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Incidence {
    pub source_links: Vec<Vec<usize>>,
    pub relay_links: Vec<Vec<usize>>,
    pub control_links: Vec<Vec<usize>>,
}

/// Optional algorithm settings carried inside a scenario file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub c: Option<f64>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
    pub max_iters: Option<usize>,
    pub stop_tol: Option<f64>,
    pub classic_proximal: Option<bool>,
    pub delta: Option<f64>,
    pub delta_schedule: Option<String>,
    pub outer_iters: Option<usize>,
    pub inner_iters: Option<usize>,
    pub outer_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkScenario {
    pub name: Option<String>,
    pub nodes: Vec<Node>,
    pub relays: Vec<Relay>,
    pub streams: Vec<Stream>,
    pub radio: Option<Radio>,
    pub gains: Gains,
    pub limits: PowerLimits,
    pub channel: ChannelBudget,
    pub polytope: PolytopeB,
    pub params: ParamsSection,
    links: Vec<Link>,
    incidence: Incidence,
}

/// Channel gain at `distance` for a reference SNR (dB) at unit distance.
pub fn path_gain(distance: f64, path_loss_exponent: f64, snr_ref_db: f64) -> Result<f64, ScenarioError> {
    if !(path_loss_exponent > 0.0) {
        return Err(invalid("radio.path_loss_exponent", "must be > 0"));
    }
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(ScenarioError::CoincidentNodes { distance });
    }
    Ok(10f64.powf(snr_ref_db / 10.0) * distance.powf(-path_loss_exponent))
}

/// Derives every stream's gains from node coordinates under a pure path-loss
/// model.
pub fn gains_from_geometry(
    nodes: &[Node],
    relays: &[Relay],
    streams: &[Stream],
    radio: &Radio,
) -> Result<Gains, ScenarioError> {
    let node_pos = |i: usize| {
        nodes[i]
            .position
            .ok_or_else(|| invalid(format!("nodes[{}]", nodes[i].id), "position required by `radio`"))
    };
    let relay_pos = |j: usize| {
        relays[j]
            .position
            .ok_or_else(|| invalid(format!("relays[{}]", relays[j].id), "position required by `radio`"))
    };
    let gain = |a: Position, b: Position| path_gain(a.distance(&b), radio.path_loss_exponent, radio.snr_ref_db);

    let mut sd = Vec::with_capacity(streams.len());
    let mut sr = Vec::with_capacity(streams.len());
    let mut rd = Vec::with_capacity(streams.len());
    for s in streams {
        let src = node_pos(s.source)?;
        let dst = node_pos(s.destination)?;
        sd.push(gain(src, dst)?);
        let mut row_sr = Vec::with_capacity(relays.len());
        let mut row_rd = Vec::with_capacity(relays.len());
        for j in 0..relays.len() {
            let r = relay_pos(j)?;
            row_sr.push(gain(src, r)?);
            row_rd.push(gain(r, dst)?);
        }
        sr.push(row_sr);
        rd.push(row_rd);
    }
    Ok(Gains { sd, sr, rd })
}

// ---------------------------------------------------------------------------
// File model

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeEntry {
    id: u32,
    x: Option<f64>,
    y: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StreamEntry {
    id: u32,
    source: u32,
    dest: u32,
    control: u32,
    #[serde(default)]
    candidates: Vec<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsEntry {
    sd: Vec<f64>,
    #[serde(default)]
    sr: Vec<Vec<f64>>,
    #[serde(default)]
    rd: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsEntry {
    p_s_max: ScalarOrList,
    #[serde(default)]
    p_r_max: Option<ScalarOrList>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ScalarOrList {
    fn expand(&self, len: usize, field: &str) -> Result<Vec<f64>, ScenarioError> {
        match self {
            ScalarOrList::Scalar(v) => Ok(vec![*v; len]),
            ScalarOrList::List(v) if v.len() == len => Ok(v.clone()),
            ScalarOrList::List(v) => Err(invalid(field, format!("expected {len} entries, found {}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlEntry {
    id: u32,
    beta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelEntry {
    theta_min: Option<f64>,
    controls: Vec<ControlEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolytopeRowEntry {
    coeffs: Vec<f64>,
    rhs: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    nodes: Vec<NodeEntry>,
    #[serde(default)]
    relays: Vec<NodeEntry>,
    streams: Vec<StreamEntry>,
    radio: Option<Radio>,
    gains: Option<GainsEntry>,
    limits: LimitsEntry,
    channel: ChannelEntry,
    #[serde(default)]
    polytope: Vec<PolytopeRowEntry>,
    #[serde(default)]
    params: ParamsSection,
}

fn index_by_id(ids: impl Iterator<Item = u32>, field: &str) -> Result<HashMap<u32, usize>, ScenarioError> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if map.insert(id, i).is_some() {
            return Err(invalid(field, format!("duplicate id {id}")));
        }
    }
    Ok(map)
}

fn position(entry: &NodeEntry, field: &str) -> Result<Option<Position>, ScenarioError> {
    match (entry.x, entry.y) {
        (Some(x), Some(y)) => Ok(Some(Position { x, y })),
        (None, None) => Ok(None),
        _ => Err(invalid(format!("{field}[{}]", entry.id), "both x and y are required")),
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<NetworkScenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    NetworkScenario::from_toml_str(&text)
}

impl NetworkScenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let node_index = index_by_id(file.nodes.iter().map(|n| n.id), "nodes")?;
        let relay_index = index_by_id(file.relays.iter().map(|n| n.id), "relays")?;
        let control_index = index_by_id(file.channel.controls.iter().map(|c| c.id), "channel.controls")?;
        index_by_id(file.streams.iter().map(|s| s.id), "streams")?;

        let nodes = file
            .nodes
            .iter()
            .map(|n| {
                Ok(Node {
                    id: NodeId(n.id),
                    position: position(n, "nodes")?,
                })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let relays = file
            .relays
            .iter()
            .map(|n| {
                Ok(Relay {
                    id: RelayId(n.id),
                    position: position(n, "relays")?,
                })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;

        let mut streams = Vec::with_capacity(file.streams.len());
        for s in &file.streams {
            let field = format!("streams[{}]", s.id);
            let source = *node_index
                .get(&s.source)
                .ok_or_else(|| invalid(format!("{field}.source"), format!("unknown node {}", s.source)))?;
            let destination = *node_index
                .get(&s.dest)
                .ok_or_else(|| invalid(format!("{field}.dest"), format!("unknown node {}", s.dest)))?;
            if source == destination {
                return Err(invalid(field, "source and destination must differ"));
            }
            let control = *control_index.get(&s.control).ok_or_else(|| {
                invalid(
                    format!("{field}.control"),
                    format!("unknown control node {}", s.control),
                )
            })?;
            let mut candidates = Vec::with_capacity(s.candidates.len());
            for r in &s.candidates {
                let j = *relay_index
                    .get(r)
                    .ok_or_else(|| invalid(format!("{field}.candidates"), format!("unknown relay {r}")))?;
                if candidates.contains(&j) {
                    return Err(invalid(
                        format!("{field}.candidates"),
                        format!("relay {r} listed twice"),
                    ));
                }
                candidates.push(j);
            }
            streams.push(Stream {
                id: s.id,
                source,
                destination,
                control,
                candidates,
            });
        }

        let gains = match (&file.radio, &file.gains) {
            (Some(_), Some(_)) => return Err(invalid("gains", "give either `radio` or `gains`, not both")),
            (None, None) => return Err(invalid("radio", "either `radio` or `gains` is required")),
            (Some(radio), None) => gains_from_geometry(&nodes, &relays, &streams, radio)?,
            (None, Some(g)) => explicit_gains(g, streams.len(), relays.len())?,
        };

        let limits = PowerLimits {
            p_s_max: file.limits.p_s_max.expand(nodes.len(), "limits.p_s_max")?,
            p_r_max: match &file.limits.p_r_max {
                Some(v) => v.expand(relays.len(), "limits.p_r_max")?,
                None if relays.is_empty() => Vec::new(),
                None => return Err(invalid("limits.p_r_max", "required when relays are present")),
            },
        };

        let mut beta = Vec::with_capacity(file.channel.controls.len());
        for c in &file.channel.controls {
            match c.beta {
                Some(b) => beta.push(b),
                None => return Err(invalid(format!("channel.controls[{}].beta", c.id), "missing")),
            }
        }
        let channel = ChannelBudget {
            controls: file.channel.controls.iter().map(|c| ControlId(c.id)).collect(),
            beta,
            theta_min: file.channel.theta_min.unwrap_or(DEFAULT_THETA_MIN),
        };

        let t = channel.controls.len();
        let polytope = if file.polytope.is_empty() {
            PolytopeB::simplex_cap(t, 1.0)
        } else {
            let mut rows = Vec::with_capacity(file.polytope.len());
            for (i, row) in file.polytope.iter().enumerate() {
                if row.coeffs.len() != t {
                    return Err(invalid(
                        format!("polytope[{i}].coeffs"),
                        format!("expected {t} coefficients, found {}", row.coeffs.len()),
                    ));
                }
                rows.push((row.coeffs.clone(), row.rhs));
            }
            PolytopeB::new(rows)
        };

        let mut scenario = NetworkScenario {
            name: file.name,
            nodes,
            relays,
            streams,
            radio: file.radio,
            gains,
            limits,
            channel,
            polytope,
            params: file.params,
            links: Vec::new(),
            incidence: Incidence::default(),
        };
        scenario.validate_values()?;
        scenario.filter_candidate_relays();
        scenario.validate_budgets()?;
        Ok(scenario)
    }

    fn validate_values(&self) -> Result<(), ScenarioError> {
        if self.streams.is_empty() {
            return Err(invalid("streams", "at least one stream is required"));
        }
        for (m, s) in self.streams.iter().enumerate() {
            check_gain(self.gains.sd[m], format!("gains.sd[{m}]"))?;
            for &j in &s.candidates {
                check_gain(self.gains.sr[m][j], format!("gains.sr[{m}][{j}]"))?;
                check_gain(self.gains.rd[m][j], format!("gains.rd[{m}][{j}]"))?;
            }
        }
        for (l, p) in self.limits.p_s_max.iter().enumerate() {
            if !(*p > 0.0 && p.is_finite()) {
                return Err(invalid(format!("limits.p_s_max[{l}]"), "must be positive and finite"));
            }
        }
        for (j, p) in self.limits.p_r_max.iter().enumerate() {
            if !(*p > 0.0 && p.is_finite()) {
                return Err(invalid(format!("limits.p_r_max[{j}]"), "must be positive and finite"));
            }
        }
        if !(self.channel.theta_min > 0.0 && self.channel.theta_min.is_finite()) {
            return Err(invalid("channel.theta_min", "must be positive"));
        }
        for (t, b) in self.channel.beta.iter().enumerate() {
            if !b.is_finite() || *b < 0.0 {
                return Err(invalid(
                    format!("channel.controls[{}].beta", self.channel.controls[t]),
                    "must be >= 0",
                ));
            }
        }
        if !self.polytope.is_bounded() {
            return Err(invalid("polytope", "must bound every control node's budget"));
        }
        Ok(())
    }

    fn validate_budgets(&self) -> Result<(), ScenarioError> {
        let floors = self.budget_floors();
        for (t, (&beta, &floor)) in self.channel.beta.iter().zip(&floors).enumerate() {
            if beta < floor * (1.0 - 1e-12) {
                return Err(ScenarioError::InfeasibleBudget {
                    control: self.channel.controls[t],
                    beta,
                    floor,
                });
            }
        }
        if self.polytope.find_feasible(&floors).is_none() {
            return Err(invalid(
                "polytope",
                "no budget vector in the polytope meets every control node's floor",
            ));
        }
        Ok(())
    }

    /// Drops every candidate relay with `g_sr <= g_sd` and rebuilds the link
    /// table. Returns the removed `(stream id, relay id)` pairs.
    pub fn filter_candidate_relays(&mut self) -> Vec<(u32, RelayId)> {
        let mut removed = Vec::new();
        for (m, s) in self.streams.iter_mut().enumerate() {
            let sd = self.gains.sd[m];
            let sr = &self.gains.sr[m];
            s.candidates.retain(|&j| {
                let keep = sr[j] > sd;
                if !keep {
                    removed.push((s.id, self.relays[j].id));
                }
                keep
            });
        }
        for (stream, relay) in &removed {
            log::info!("stream {stream}: relay {relay} dropped (g_sr <= g_sd)");
        }
        self.rebuild_links();
        removed
    }

    fn rebuild_links(&mut self) {
        let mut links = Vec::new();
        let mut inc = Incidence {
            source_links: vec![Vec::new(); self.nodes.len()],
            relay_links: vec![Vec::new(); self.relays.len()],
            control_links: vec![Vec::new(); self.channel.controls.len()],
        };
        for (m, s) in self.streams.iter().enumerate() {
            let idx = links.len();
            links.push(Link {
                stream: m,
                kind: LinkKind::Direct,
            });
            inc.source_links[s.source].push(idx);
            inc.control_links[s.control].push(idx);
            for &j in &s.candidates {
                let idx = links.len();
                links.push(Link {
                    stream: m,
                    kind: LinkKind::Relayed { relay: j },
                });
                inc.source_links[s.source].push(idx);
                inc.relay_links[j].push(idx);
                inc.control_links[s.control].push(idx);
            }
        }
        self.links = links;
        self.incidence = inc;
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn incidence(&self) -> &Incidence {
        &self.incidence
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_relays(&self) -> usize {
        self.relays.len()
    }

    pub fn num_controls(&self) -> usize {
        self.channel.controls.len()
    }

    pub fn theta_min(&self) -> f64 {
        self.channel.theta_min
    }

    /// Smallest feasible budget of every control node: `theta_min` per link.
    pub fn budget_floors(&self) -> Vec<f64> {
        self.incidence
            .control_links
            .iter()
            .map(|links| self.channel.theta_min * links.len() as f64)
            .collect()
    }

    /// Power caps in dual-row order: sources first, then relays.
    pub fn power_caps(&self) -> Vec<f64> {
        self.limits
            .p_s_max
            .iter()
            .chain(&self.limits.p_r_max)
            .copied()
            .collect()
    }

    /// Channel gains `(g_sr, g_sd, g_rd)` of a relayed link.
    pub fn df_gains(&self, link: &Link) -> Option<(f64, f64, f64)> {
        link.relay().map(|j| {
            let m = link.stream;
            (self.gains.sr[m][j], self.gains.sd[m], self.gains.rd[m][j])
        })
    }

    /// Returns a copy with different per-control-node budgets.
    pub fn with_budgets(&self, beta: &[f64]) -> Result<Self, ScenarioError> {
        if beta.len() != self.num_controls() {
            return Err(invalid(
                "channel.beta",
                format!("expected {} entries", self.num_controls()),
            ));
        }
        let mut out = self.clone();
        out.channel.beta = beta.to_vec();
        out.validate_budgets()?;
        Ok(out)
    }

    /// Returns a copy with a different minimum channel share.
    pub fn with_theta_min(&self, theta_min: f64) -> Result<Self, ScenarioError> {
        let mut out = self.clone();
        out.channel.theta_min = theta_min;
        out.validate_values()?;
        out.validate_budgets()?;
        Ok(out)
    }

    /// Returns a copy where every stream uses direct transmission only.
    pub fn without_relays(&self) -> Self {
        let mut out = self.clone();
        for s in &mut out.streams {
            s.candidates.clear();
        }
        out.rebuild_links();
        out
    }

    /// Short human-readable summary used by the CLI.
    pub fn summary(&self) -> String {
        let df = self.links.iter().filter(|l| l.relay().is_some()).count();
        format!(
            "{} nodes, {} relays, {} control nodes, {} streams, {} links ({} DT, {} DF)",
            self.nodes.len(),
            self.relays.len(),
            self.num_controls(),
            self.streams.len(),
            self.links.len(),
            self.links.len() - df,
            df
        )
    }
}

fn check_gain(g: f64, field: String) -> Result<(), ScenarioError> {
    if g > 0.0 && g.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, "gain must be positive and finite"))
    }
}

fn explicit_gains(g: &GainsEntry, streams: usize, relays: usize) -> Result<Gains, ScenarioError> {
    if g.sd.len() != streams {
        return Err(invalid(
            "gains.sd",
            format!("expected {streams} entries, found {}", g.sd.len()),
        ));
    }
    let table = |rows: &Vec<Vec<f64>>, field: &str| -> Result<Vec<Vec<f64>>, ScenarioError> {
        if relays == 0 && rows.is_empty() {
            return Ok(vec![Vec::new(); streams]);
        }
        if rows.len() != streams {
            return Err(invalid(field, format!("expected {streams} rows, found {}", rows.len())));
        }
        for (m, row) in rows.iter().enumerate() {
            if row.len() != relays {
                return Err(invalid(
                    format!("{field}[{m}]"),
                    format!("expected {relays} entries, found {}", row.len()),
                ));
            }
        }
        Ok(rows.clone())
    };
    Ok(Gains {
        sd: g.sd.clone(),
        sr: table(&g.sr, "gains.sr")?,
        rd: table(&g.rd, "gains.rd")?,
    })
}

/// Largest number of links a single source or relay node participates in:
/// a source counts `1 + |candidates|` for every stream it originates, a relay
/// counts the streams that list it as a candidate.
pub fn compute_s_bound(scenario: &NetworkScenario) -> usize {
    let mut per_source = vec![0usize; scenario.num_nodes()];
    let mut per_relay = vec![0usize; scenario.num_relays()];
    for s in &scenario.streams {
        per_source[s.source] += 1 + s.candidates.len();
        for &j in &s.candidates {
            per_relay[j] += 1;
        }
    }
    per_source.into_iter().chain(per_relay).max().unwrap_or(0)
}
