//! The 2D particle domains and their geometric feasibility oracle.
//!
//! All domains live in the box `[-1, 1]^2`. Walls are zero-thickness,
//! axis-aligned segments; a move is blocked when its straight segment touches
//! a solid wall piece. Door-key domains add a third observation coordinate,
//! the key indicator, which takes values in `{0, key_scale}`.

mod data;
mod geometry;

pub use data::{
    generate_dataset, random_walk, read_pairs_jsonl, sample_eval_tasks, write_pairs_jsonl,
    DatasetConfig, EvalTask, PairDataset, PairRecord, Trajectory,
};
pub use geometry::{Disc, Point, Segment};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Multiplier in the reach budget `h * REACH_FACTOR * step_scale`.
pub const REACH_FACTOR: f64 = 3.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("observation {0:?} is outside the domain")]
    OutOfBounds(Vec<f64>),
    #[error("observation has {got} coordinates, domain expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("random walk step rejected {0} times in a row")]
    RejectionCap(usize),
    #[error("invalid horizon range {0}..={1}")]
    Horizon(usize, usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainName {
    Tunnel,
    DoorKey,
    RescaledDoorKey,
}

impl DomainName {
    pub const ALL: [DomainName; 3] = [Self::Tunnel, Self::DoorKey, Self::RescaledDoorKey];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tunnel => "tunnel",
            Self::DoorKey => "door_key",
            Self::RescaledDoorKey => "rescaled_door_key",
        }
    }

    pub fn parse(s: &str) -> Result<Self, EnvError> {
        match s {
            "tunnel" => Ok(Self::Tunnel),
            "door_key" | "door-key" => Ok(Self::DoorKey),
            "rescaled_door_key" | "rescaled-door-key" => Ok(Self::RescaledDoorKey),
            _ => Err(EnvError::UnknownDomain(s.to_string())),
        }
    }

    /// Random-walk step standard deviation used to generate data.
    pub fn step_scale(self) -> f64 {
        match self {
            Self::Tunnel => 0.05,
            _ => 0.3,
        }
    }

    /// Temporal gap range of training pairs.
    pub fn horizon_range(self) -> (usize, usize) {
        match self {
            Self::Tunnel => (5, 9),
            _ => (1, 4),
        }
    }

    /// Distance at which a plan endpoint counts as the requested observation.
    pub fn goal_tol(self) -> f64 {
        match self {
            Self::Tunnel => 0.15,
            _ => 0.25,
        }
    }
}

/// An axis-aligned wall with optional gaps cut out of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub segment: Segment,
    /// Open intervals along the wall's varying coordinate.
    pub gaps: Vec<(f64, f64)>,
}

impl Wall {
    /// The solid pieces left after removing the gaps.
    pub fn solid_pieces(&self) -> Vec<Segment> {
        let s = &self.segment;
        let horizontal = s.a.y == s.b.y;
        let (lo, hi) = if horizontal {
            (s.a.x.min(s.b.x), s.a.x.max(s.b.x))
        } else {
            (s.a.y.min(s.b.y), s.a.y.max(s.b.y))
        };
        let mut gaps = self.gaps.clone();
        gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut pieces = Vec::new();
        let mut cur = lo;
        for (g0, g1) in gaps {
            if g0 > cur {
                pieces.push((cur, g0));
            }
            cur = cur.max(g1);
        }
        if cur < hi {
            pieces.push((cur, hi));
        }
        pieces
            .into_iter()
            .map(|(u0, u1)| {
                if horizontal {
                    Segment::new(Point::new(u0, s.a.y), Point::new(u1, s.a.y))
                } else {
                    Segment::new(Point::new(s.a.x, u0), Point::new(s.a.x, u1))
                }
            })
            .collect()
    }
}

/// Canonical geometry of one domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: DomainName,
    pub bounds: (f64, f64),
    pub walls: Vec<Wall>,
    /// Wall piece that is open only while the key is held.
    pub door: Option<Segment>,
    pub key_region: Option<Disc>,
    pub key_scale: f64,
}

/// Height of the wall separating the two rooms.
pub const MERIDIAN_Y: f64 = -0.1;

pub fn make_domain(name: DomainName) -> DomainSpec {
    let meridian = Segment::new(Point::new(-1.0, MERIDIAN_Y), Point::new(1.0, MERIDIAN_Y));
    match name {
        DomainName::Tunnel => DomainSpec {
            name,
            bounds: (-1.0, 1.0),
            walls: vec![
                Wall {
                    segment: meridian,
                    gaps: vec![],
                },
                Wall {
                    segment: Segment::new(Point::new(0.0, MERIDIAN_Y), Point::new(0.0, 1.0)),
                    gaps: vec![(0.35, 0.55)],
                },
                Wall {
                    segment: Segment::new(Point::new(0.0, -1.0), Point::new(0.0, MERIDIAN_Y)),
                    gaps: vec![(-0.65, -0.45)],
                },
            ],
            door: None,
            key_region: None,
            key_scale: 1.0,
        },
        DomainName::DoorKey | DomainName::RescaledDoorKey => DomainSpec {
            name,
            bounds: (-1.0, 1.0),
            walls: vec![Wall {
                segment: meridian,
                gaps: vec![(-0.15, 0.15)],
            }],
            door: Some(Segment::new(
                Point::new(-0.15, MERIDIAN_Y),
                Point::new(0.15, MERIDIAN_Y),
            )),
            key_region: Some(Disc {
                center: Point::new(0.8, 0.8),
                radius: 0.15,
            }),
            key_scale: if name == DomainName::DoorKey { 1.0 } else { 0.1 },
        },
    }
}

/// Which side of the meridian a position is on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Room {
    Top,
    Bottom,
}

impl DomainSpec {
    pub fn parse(name: &str) -> Result<Self, EnvError> {
        Ok(make_domain(DomainName::parse(name)?))
    }

    pub fn has_key(&self) -> bool {
        self.key_region.is_some()
    }

    /// Observation dimension: position plus key indicator in door-key domains.
    pub fn obs_dim(&self) -> usize {
        if self.has_key() {
            3
        } else {
            2
        }
    }

    pub fn solid_segments(&self) -> Vec<Segment> {
        self.walls.iter().flat_map(Wall::solid_pieces).collect()
    }

    pub fn in_bounds(&self, p: Point) -> bool {
        let (lo, hi) = self.bounds;
        p.x >= lo && p.x <= hi && p.y >= lo && p.y <= hi
    }

    /// Inside the box and not on a wall.
    pub fn is_free(&self, p: Point) -> bool {
        self.in_bounds(p)
            && !self.solid_segments().iter().any(|s| s.contains(p))
            && !self.door.is_some_and(|d| d.contains(p))
    }

    pub fn room(&self, p: Point) -> Room {
        if p.y > MERIDIAN_Y {
            Room::Top
        } else {
            Room::Bottom
        }
    }

    /// Whether a key value counts as holding the key.
    pub fn key_bit(&self, key: f64) -> bool {
        self.has_key() && key >= self.key_scale / 2.0
    }

    /// True when the straight move `a -> b` hits no solid wall.
    pub fn segment_clear(&self, a: Point, b: Point, holding_key: bool) -> bool {
        let mv = Segment::new(a, b);
        if self.solid_segments().iter().any(|w| w.intersects(&mv)) {
            return false;
        }
        match self.door {
            Some(d) if !holding_key => !d.intersects(&mv),
            _ => true,
        }
    }

    pub fn reach_budget(h: usize, step_scale: f64) -> f64 {
        h as f64 * REACH_FACTOR * step_scale
    }

    fn check_obs(&self, o: &[f64]) -> Result<(), EnvError> {
        if o.len() != self.obs_dim() {
            return Err(EnvError::Dimension {
                expected: self.obs_dim(),
                got: o.len(),
            });
        }
        if !self.in_bounds(Point::new(o[0], o[1])) || o.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::OutOfBounds(o.to_vec()));
        }
        Ok(())
    }

    fn key_of(&self, o: &[f64]) -> bool {
        self.has_key() && self.key_bit(o[2])
    }

    /// Whether `o2` is reachable from `o1` within `h` steps.
    ///
    /// Walls are checked on the straight segment; a closed door blocks it.
    /// The key may be picked up but never dropped; picking it up requires a
    /// detour `o1 -> p -> o2` through some point `p` of the key region whose
    /// legs are clear and whose length fits the reach budget. A segment that
    /// passes through the key region is the zero-detour case.
    pub fn step_feasible(
        &self,
        o1: &[f64],
        o2: &[f64],
        h: usize,
        step_scale: f64,
    ) -> Result<bool, EnvError> {
        self.check_obs(o1)?;
        self.check_obs(o2)?;
        let (a, b) = (Point::new(o1[0], o1[1]), Point::new(o2[0], o2[1]));
        let budget = Self::reach_budget(h, step_scale);
        let (k1, k2) = (self.key_of(o1), self.key_of(o2));
        if k1 && !k2 {
            return Ok(false);
        }
        if k1 == k2 {
            return Ok(a.dist(b) <= budget && self.segment_clear(a, b, k1));
        }
        let disc = self.key_region.expect("key bits imply a key region");
        Ok(disc.detour_points(a, b).into_iter().any(|p| {
            a.dist(p) + p.dist(b) <= budget
                && self.segment_clear(a, p, false)
                && self.segment_clear(p, b, true)
        }))
    }

    /// Whether an environment path exists at all between two observations.
    pub fn connected(&self, start: &[f64], goal: &[f64]) -> bool {
        let (ra, rb) = (
            self.room(Point::new(start[0], start[1])),
            self.room(Point::new(goal[0], goal[1])),
        );
        if !self.has_key() {
            return ra == rb;
        }
        match (self.key_of(start), self.key_of(goal)) {
            (true, false) => false,
            (true, true) => true,
            (false, false) => ra == rb,
            // the key lies in the top room and the door is closed without it
            (false, true) => ra == Room::Top,
        }
    }

    fn near(&self, a: &[f64], b: &[f64], tol: f64) -> bool {
        Point::new(a[0], a[1]).dist(Point::new(b[0], b[1])) <= tol
            && self.key_of(a) == self.key_of(b)
    }

    /// Scores a plan. `None` is the planner's "no path" answer, correct iff
    /// the endpoints are disconnected.
    pub fn plan_feasible(
        &self,
        plan: Option<&[Vec<f64>]>,
        start: &[f64],
        goal: &[f64],
        h: usize,
        step_scale: f64,
        goal_tol: f64,
    ) -> bool {
        let Some(plan) = plan else {
            return !self.connected(start, goal);
        };
        let (Some(first), Some(last)) = (plan.first(), plan.last()) else {
            return false;
        };
        if plan.iter().any(|o| self.check_obs(o).is_err()) {
            return false;
        }
        self.near(first, start, goal_tol)
            && self.near(last, goal, goal_tol)
            && plan
                .windows(2)
                .all(|w| self.step_feasible(&w[0], &w[1], h, step_scale).unwrap_or(false))
    }
}

/// [`DomainSpec::step_feasible`] as a free function.
pub fn oracle_step_feasible(
    domain: &DomainSpec,
    o1: &[f64],
    o2: &[f64],
    h: usize,
    step_scale: f64,
) -> Result<bool, EnvError> {
    domain.step_feasible(o1, o2, h, step_scale)
}

/// [`DomainSpec::plan_feasible`] as a free function.
pub fn oracle_plan_feasible(
    domain: &DomainSpec,
    plan: Option<&[Vec<f64>]>,
    start: &[f64],
    goal: &[f64],
    h: usize,
    step_scale: f64,
    goal_tol: f64,
) -> bool {
    domain.plan_feasible(plan, start, goal, h, step_scale, goal_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_geometry() {
        let t = make_domain(DomainName::Tunnel);
        assert!(t.walls.iter().any(|w| w.segment.a.y == -0.1
            && w.segment.b.y == -0.1
            && w.segment.a.x == -1.0
            && w.segment.b.x == 1.0
            && w.gaps.is_empty()));
        assert_eq!(make_domain(DomainName::RescaledDoorKey).key_scale, 0.1);
        assert_eq!(make_domain(DomainName::DoorKey).key_scale, 1.0);
        assert!(DomainSpec::parse("maze").is_err());
        for name in DomainName::ALL {
            let d = make_domain(name);
            for w in &d.walls {
                assert!(d.in_bounds(w.segment.a) && d.in_bounds(w.segment.b));
            }
            assert_eq!(d.key_region.is_some(), d.door.is_some());
        }
    }

    #[test]
    fn tunnel_wall_blocks() {
        let t = make_domain(DomainName::Tunnel);
        assert!(!t.step_feasible(&[0.5, 0.5], &[0.5, -0.5], 9, 0.05).unwrap());
        assert!(t.step_feasible(&[0.5, 0.5], &[0.5, 0.5], 1, 0.05).unwrap());
        // through the upper tunnel
        assert!(t.step_feasible(&[-0.2, 0.45], &[0.2, 0.45], 9, 0.05).unwrap());
        assert!(!t.step_feasible(&[-0.2, 0.2], &[0.2, 0.2], 9, 0.05).unwrap());
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let t = make_domain(DomainName::Tunnel);
        assert!(t.step_feasible(&[1.5, 0.0], &[0.5, 0.5], 1, 0.05).is_err());
        assert!(t.step_feasible(&[0.5, 0.0, 0.0], &[0.5, 0.5], 1, 0.05).is_err());
    }

    #[test]
    fn door_needs_key() {
        let d = make_domain(DomainName::DoorKey);
        assert!(d.step_feasible(&[0.0, 0.2, 1.0], &[0.0, -0.4, 1.0], 2, 0.3).unwrap());
        assert!(!d.step_feasible(&[0.0, 0.2, 0.0], &[0.0, -0.4, 0.0], 2, 0.3).unwrap());
        // key is never dropped
        assert!(!d.step_feasible(&[0.0, 0.2, 1.0], &[0.0, 0.3, 0.0], 2, 0.3).unwrap());
    }

    #[test]
    fn disconnected_rooms() {
        let t = make_domain(DomainName::Tunnel);
        assert!(!t.connected(&[-0.5, 0.5], &[0.5, -0.5]));
        assert!(t.plan_feasible(None, &[-0.5, 0.5], &[0.5, -0.5], 9, 0.05, 0.15));
        assert!(!t.plan_feasible(None, &[-0.5, 0.5], &[0.5, 0.5], 9, 0.05, 0.15));
        let start = vec![0.3, 0.3];
        assert!(t.plan_feasible(Some(&[start.clone()]), &start, &start, 9, 0.05, 0.15));
    }
}
