//! In-process simulation of the representative approach over several
//! nodes. Nodes keep their rows; only coefficient broadcasts and
//! representative uploads cross the simulated wire, and every message is
//! logged with its size in 8-byte words.

use std::fmt;
use std::io::Write;

use crate::data::{Dataset, WeightedData};
use crate::error::{Error, Result};
use crate::glm::{self, FitResult, GlmFamily};
use crate::partition::PartitionSpec;
use crate::representatives::{mean_representatives, smr_representatives, RepPoint, SmrParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    BetaBroadcast,
    RepresentativeUpload,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageKind::BetaBroadcast => "beta-broadcast",
            MessageKind::RepresentativeUpload => "representative-upload",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    Beta(Vec<f64>),
    Representatives(Vec<RepPoint>),
}

/// One message on the simulated wire.
#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub round: usize,
    pub node: usize,
    pub kind: MessageKind,
    pub words: u64,
    payload: Payload,
}

impl WireMessage {
    fn beta(round: usize, node: usize, beta: &[f64]) -> Self {
        Self {
            round,
            node,
            kind: MessageKind::BetaBroadcast,
            words: beta.len() as u64,
            payload: Payload::Beta(beta.to_vec()),
        }
    }

    fn upload(round: usize, node: usize, points: Vec<RepPoint>, p: usize) -> Self {
        Self {
            round,
            node,
            kind: MessageKind::RepresentativeUpload,
            words: (points.len() * (p + 2)) as u64,
            payload: Payload::Representatives(points),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: usize,
    data: Dataset,
    part: PartitionSpec,
    words_sent: u64,
    words_received: u64,
}

impl NodeState {
    pub fn new(id: usize, data: Dataset, part: PartitionSpec) -> Result<Self> {
        if part.n() != data.n() {
            return Err(Error::Dimension(format!(
                "node {id}: partition covers {} rows, shard has {}",
                part.n(),
                data.n()
            )));
        }
        Ok(Self {
            id,
            data,
            part,
            words_sent: 0,
            words_received: 0,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn partition(&self) -> &PartitionSpec {
        &self.part
    }

    pub fn words_sent(&self) -> u64 {
        self.words_sent
    }

    pub fn words_received(&self) -> u64 {
        self.words_received
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficRow {
    pub round: usize,
    pub node: usize,
    pub kind: MessageKind,
    pub words: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficReport {
    pub rows: Vec<TrafficRow>,
    /// Words needed to ship every raw row (`N (p + 1)`).
    pub raw_shuffle_words: u64,
}

impl TrafficReport {
    pub fn total_words(&self) -> u64 {
        self.rows.iter().map(|r| r.words).sum()
    }

    pub fn round_words(&self, round: usize) -> u64 {
        self.rows.iter().filter(|r| r.round == round).map(|r| r.words).sum()
    }

    /// Wire traffic relative to shipping the raw data once.
    pub fn ratio_to_raw(&self) -> f64 {
        if self.raw_shuffle_words == 0 {
            0.0
        } else {
            self.total_words() as f64 / self.raw_shuffle_words as f64
        }
    }

    /// `round,node,kind,words`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "round,node,kind,words")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.round, r.node, r.kind, r.words)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-message traffic table from the log kept by [`distributed_smr`]; the
/// raw-shuffle baseline counts `p + 1` words per row held by `nodes`.
pub fn traffic_report(log: &[WireMessage], nodes: &[NodeState]) -> TrafficReport {
    let raw = nodes.iter().map(|n| (n.data.n() * (n.data.p() + 1)) as u64).sum();
    TrafficReport {
        rows: log
            .iter()
            .map(|m| TrafficRow {
                round: m.round,
                node: m.node,
                kind: m.kind,
                words: m.words,
            })
            .collect(),
        raw_shuffle_words: raw,
    }
}

#[derive(Debug, Clone)]
pub struct DistributedFit {
    pub beta: Vec<f64>,
    pub fit: FitResult,
    pub log: Vec<WireMessage>,
    pub traffic: TrafficReport,
    pub nodes_used: usize,
}

fn collect(log: &[WireMessage], round: usize, p: usize) -> Result<WeightedData> {
    let (mut w, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
    let mut uploads: Vec<&WireMessage> = log
        .iter()
        .filter(|m| m.round == round && m.kind == MessageKind::RepresentativeUpload)
        .collect();
    uploads.sort_by_key(|m| m.node);
    for m in uploads {
        if let Payload::Representatives(points) = &m.payload {
            for r in points {
                w.push(r.weight);
                x.extend_from_slice(&r.x);
                y.push(r.y);
            }
        }
    }
    WeightedData::new(w, x, y, p)
}

/// Round 0: every node uploads its mean representatives and the
/// coordinator fits them (skipped when `params.init_beta` is set). Rounds
/// 1..=T: broadcast the current coefficients, each node builds its
/// score-matching representatives locally, uploads them, and the
/// coordinator refits warm-started. Uploads are consumed in node-id order,
/// so the result equals a single-process fit on the concatenated shards.
pub fn distributed_smr(nodes: &mut [NodeState], family: &GlmFamily, params: &SmrParams) -> Result<DistributedFit> {
    let active: Vec<usize> = (0..nodes.len())
        .filter(|&i| {
            let empty = nodes[i].data.n() == 0;
            if empty {
                log::warn!("node {} has an empty shard and is excluded", nodes[i].id);
            }
            !empty
        })
        .collect();
    let Some(&first) = active.first() else {
        return Err(Error::Data("no node holds any data".into()));
    };
    let p = nodes[first].data.p();
    if let Some(&bad) = active.iter().find(|&&i| nodes[i].data.p() != p) {
        return Err(Error::Dimension(format!("node {} has a different predictor count", nodes[bad].id)));
    }
    let mut order = active.clone();
    order.sort_by_key(|&i| nodes[i].id);

    let mut log: Vec<WireMessage> = Vec::new();
    let (mut beta, mut fit) = match &params.init_beta {
        Some(b) => {
            if params.iterations == 0 {
                return Err(Error::Config("SMR started from given coefficients needs T >= 1".into()));
            }
            (b.clone(), None)
        }
        None => {
            for &i in &order {
                let node = &mut nodes[i];
                let points = mean_representatives(&node.data, &node.part).points;
                let msg = WireMessage::upload(0, node.id, points, p);
                node.words_sent += msg.words;
                log.push(msg);
            }
            let wd = collect(&log, 0, p)?;
            let init = glm::initial_beta(&wd, family);
            let f = glm::fit(&wd, family, &init, &params.solver)?;
            (f.beta.clone(), Some(f))
        }
    };
    for round in 1..=params.iterations {
        for &i in &order {
            let node = &mut nodes[i];
            let msg = WireMessage::beta(round, node.id, &beta);
            node.words_received += msg.words;
            let local_beta = match &msg.payload {
                Payload::Beta(b) => b.clone(),
                Payload::Representatives(_) => unreachable!("broadcast carries coefficients"),
            };
            log.push(msg);
            let reps = smr_representatives(&node.data, &node.part, family, &local_beta, params)?;
            let up = WireMessage::upload(round, node.id, reps.points, p);
            node.words_sent += up.words;
            log.push(up);
        }
        let wd = collect(&log, round, p)?;
        let f = glm::fit(&wd, family, &beta, &params.solver)?;
        beta = f.beta.clone();
        fit = Some(f);
    }
    let used: Vec<NodeState> = order.iter().map(|&i| nodes[i].clone()).collect();
    let traffic = traffic_report(&log, &used);
    Ok(DistributedFit {
        beta,
        fit: fit.expect("round 0 or a later round produced a fit"),
        log,
        traffic,
        nodes_used: order.len(),
    })
}

/// Split `data` into `nodes` contiguous row shards of near-equal size.
pub fn shard_rows(data: &Dataset, nodes: usize) -> Result<Vec<Dataset>> {
    if nodes == 0 {
        return Err(Error::Config("need at least one node".into()));
    }
    let n = data.n();
    (0..nodes)
        .map(|j| {
            let rows: Vec<usize> = (j * n / nodes..(j + 1) * n / nodes).collect();
            if rows.is_empty() {
                Ok(Dataset::empty_like(data))
            } else {
                data.select_rows(&rows)
            }
        })
        .collect()
}
