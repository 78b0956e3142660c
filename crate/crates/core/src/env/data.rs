use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DomainName, DomainSpec, EnvError, Point, Room, Segment, MERIDIAN_Y};
use crate::grad::SeededRng;

const REJECTION_CAP: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
}

/// Gaussian random walk with rejection of moves that leave the box, hit a
/// wall or exceed the one-step reach budget. The key is picked up when a move
/// passes through the key region.
pub fn random_walk(
    domain: &DomainSpec,
    start: &[f64],
    steps: usize,
    step_scale: f64,
    rng: &mut SeededRng,
) -> Result<Trajectory, EnvError> {
    let mut cur = start.to_vec();
    let mut obs = Vec::with_capacity(steps + 1);
    obs.push(cur.clone());
    for _ in 0..steps {
        let holding = domain.has_key() && domain.key_bit(cur[2]);
        let p = Point::new(cur[0], cur[1]);
        let max_len = DomainSpec::reach_budget(1, step_scale);
        let mut accepted = None;
        for _ in 0..REJECTION_CAP {
            let q = Point::new(p.x + step_scale * rng.normal(), p.y + step_scale * rng.normal());
            if p.dist(q) <= max_len && domain.is_free(q) && domain.segment_clear(p, q, holding) {
                accepted = Some(q);
                break;
            }
        }
        let q = accepted.ok_or(EnvError::RejectionCap(REJECTION_CAP))?;
        let mut next = vec![q.x, q.y];
        if let Some(disc) = domain.key_region {
            let picked = holding || disc.intersects_segment(&Segment::new(p, q));
            next.push(if picked { domain.key_scale } else { 0.0 });
        }
        obs.push(next.clone());
        cur = next;
    }
    Ok(Trajectory { observations: obs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_trajectories: usize,
    pub traj_len: usize,
    pub horizon_range: (usize, usize),
    pub step_scale: f64,
    /// Key-noise standard deviation as a fraction of `key_scale`.
    pub key_noise_frac: f64,
    /// Fraction of trajectory starts drawn near a tunnel mouth.
    pub start_bias_frac: f64,
    pub start_bias_radius: f64,
}

impl DatasetConfig {
    pub fn for_domain(name: DomainName) -> Self {
        let (n_trajectories, traj_len) = match name {
            DomainName::Tunnel => (1000, 200),
            _ => (1000, 100),
        };
        Self {
            n_trajectories,
            traj_len,
            horizon_range: name.horizon_range(),
            step_scale: name.step_scale(),
            key_noise_frac: 0.2,
            start_bias_frac: 0.5,
            start_bias_radius: 0.3,
        }
    }
}

/// One training pair: observations `gap` steps apart on trajectory `traj`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub o: Vec<f64>,
    pub op: Vec<f64>,
    pub gap: usize,
    pub traj: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairDataset {
    pub pairs: Vec<PairRecord>,
    pub horizon_range: (usize, usize),
    /// Observed trajectories, key noise included.
    pub trajectories: Vec<Trajectory>,
}

impl PairDataset {
    /// Every observation that appears in the trajectories.
    pub fn observations(&self) -> Vec<Vec<f64>> {
        self.trajectories
            .iter()
            .flat_map(|t| t.observations.iter().cloned())
            .collect()
    }
}

pub(crate) fn uniform_free(domain: &DomainSpec, rng: &mut SeededRng, room: Option<Room>) -> Point {
    let (lo, hi) = domain.bounds;
    loop {
        let (ylo, yhi) = match room {
            Some(Room::Top) => (MERIDIAN_Y, hi),
            Some(Room::Bottom) => (lo, MERIDIAN_Y),
            None => (lo, hi),
        };
        let p = Point::new(rng.uniform_in(lo, hi), rng.uniform_in(ylo, yhi));
        if domain.is_free(p) && room.is_none_or(|r| domain.room(p) == r) {
            return p;
        }
    }
}

/// Centers of the gaps between left and right halves.
fn tunnel_mouths(domain: &DomainSpec) -> Vec<Point> {
    domain
        .walls
        .iter()
        .filter(|w| w.segment.a.x == w.segment.b.x)
        .flat_map(|w| {
            w.gaps
                .iter()
                .map(move |&(g0, g1)| Point::new(w.segment.a.x, 0.5 * (g0 + g1)))
        })
        .collect()
}

fn sample_start(domain: &DomainSpec, cfg: &DatasetConfig, rng: &mut SeededRng) -> Vec<f64> {
    let mouths = tunnel_mouths(domain);
    let p = if !mouths.is_empty() && rng.bernoulli(cfg.start_bias_frac) {
        let m = mouths[rng.index(mouths.len())];
        loop {
            let r = cfg.start_bias_radius * rng.uniform().sqrt();
            let th = rng.uniform_in(0.0, std::f64::consts::TAU);
            let p = Point::new(m.x + r * th.cos(), m.y + r * th.sin());
            if domain.is_free(p) {
                break p;
            }
        }
    } else {
        uniform_free(domain, rng, None)
    };
    let mut o = vec![p.x, p.y];
    if domain.has_key() {
        o.push(0.0);
    }
    o
}

/// Random-walk trajectories and the pairs cut from them.
pub fn generate_dataset(
    domain: &DomainSpec,
    cfg: &DatasetConfig,
    rng: &SeededRng,
) -> Result<PairDataset, EnvError> {
    let (hmin, hmax) = cfg.horizon_range;
    if hmin == 0 || hmin > hmax {
        return Err(EnvError::Horizon(hmin, hmax));
    }
    let noise_std = cfg.key_noise_frac * domain.key_scale;
    let mut trajectories = Vec::with_capacity(cfg.n_trajectories);
    let mut pairs = Vec::new();
    for i in 0..cfg.n_trajectories {
        let mut r = rng.fork(&format!("traj{i}"));
        let start = sample_start(domain, cfg, &mut r);
        let mut traj = random_walk(domain, &start, cfg.traj_len, cfg.step_scale, &mut r)?;
        if domain.has_key() {
            for o in &mut traj.observations {
                o[2] += noise_std * r.normal();
            }
        }
        let n = traj.observations.len();
        for t in 0..n {
            let gap = r.int_in(hmin, hmax);
            if t + gap < n {
                pairs.push(PairRecord {
                    o: traj.observations[t].clone(),
                    op: traj.observations[t + gap].clone(),
                    gap,
                    traj: i,
                });
            }
        }
        trajectories.push(traj);
    }
    Ok(PairDataset {
        pairs,
        horizon_range: cfg.horizon_range,
        trajectories,
    })
}

pub fn write_pairs_jsonl(path: &Path, pairs: &[PairRecord]) -> Result<(), EnvError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs_jsonl(path: &Path) -> Result<Vec<PairRecord>, EnvError> {
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// A start/goal query for the planners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalTask {
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub connected: bool,
}

fn sample_task(domain: &DomainSpec, i: usize, rng: &mut SeededRng) -> EvalTask {
    let (start, goal) = if domain.has_key() {
        // Every key-domain task needs the key: top room without it, to the
        // bottom room holding it.
        let s = uniform_free(domain, rng, Some(Room::Top));
        let g = uniform_free(domain, rng, Some(Room::Bottom));
        (vec![s.x, s.y, 0.0], vec![g.x, g.y, domain.key_scale])
    } else {
        let s = uniform_free(domain, rng, None);
        let own = domain.room(s);
        let room = if i % 4 == 3 {
            match own {
                Room::Top => Room::Bottom,
                Room::Bottom => Room::Top,
            }
        } else {
            own
        };
        let g = uniform_free(domain, rng, Some(room));
        (vec![s.x, s.y], vec![g.x, g.y])
    };
    let connected = domain.connected(&start, &goal);
    EvalTask {
        start,
        goal,
        connected,
    }
}

/// Disjoint validation and test task sets. In the tunnel domain every
/// fourth task joins the two unconnected rooms.
pub fn sample_eval_tasks(
    domain: &DomainSpec,
    n_val: usize,
    n_test: usize,
    rng: &SeededRng,
) -> (Vec<EvalTask>, Vec<EvalTask>) {
    let mut rv = rng.fork("val");
    let val: Vec<EvalTask> = (0..n_val).map(|i| sample_task(domain, i, &mut rv)).collect();
    let mut rt = rng.fork("test");
    let mut test = Vec::with_capacity(n_test);
    let mut i = 0;
    while test.len() < n_test {
        let t = sample_task(domain, test.len(), &mut rt);
        if !val.contains(&t) {
            test.push(t);
        }
        i += 1;
        debug_assert!(i < 10 * n_test + 10);
    }
    (val, test)
}
