use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::baselines::Clustering;
use crate::env::{DomainSpec, Point};
use crate::model::CausalModel;
use crate::plan::Walkthrough;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 10.0;

/// What colors a map: a trained model or a fitted clustering with its
/// transition matrix.
#[derive(Clone, Copy)]
pub enum Source<'a> {
    Model(&'a CausalModel),
    Clustering(&'a Clustering, &'a [Vec<f64>]),
}

impl Source<'_> {
    fn label(&self, o: &[f64]) -> Result<usize, EvalError> {
        Ok(match self {
            Source::Model(m) => m.encode(o)?.index(m.kind()),
            Source::Clustering(c, _) => c.assign(o),
        })
    }
}

fn px(domain: &DomainSpec, p: Point) -> (f64, f64) {
    let (lo, hi) = domain.bounds;
    let s = SIZE / (hi - lo);
    (MARGIN + (p.x - lo) * s, MARGIN + (hi - p.y) * s)
}

/// Free-space cell centers of a `grid x grid` lattice, row by row from the top.
fn grid_points(domain: &DomainSpec, grid: usize) -> Vec<Point> {
    let (lo, hi) = domain.bounds;
    let cell = (hi - lo) / grid as f64;
    let mut out = Vec::with_capacity(grid * grid);
    for r in 0..grid {
        for c in 0..grid {
            let p = Point::new(lo + (c as f64 + 0.5) * cell, hi - (r as f64 + 0.5) * cell);
            if domain.is_free(p) {
                out.push(p);
            }
        }
    }
    out
}

fn with_key(domain: &DomainSpec, p: Point, key: f64) -> Vec<f64> {
    if domain.has_key() {
        vec![p.x, p.y, key]
    } else {
        vec![p.x, p.y]
    }
}

fn header(title: &str) -> String {
    let side = SIZE + 2.0 * MARGIN;
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{side}\" height=\"{side}\" viewBox=\"0 0 {side} {side}\">\n\
         <title>{title}</title>\n\
         <rect x=\"0\" y=\"0\" width=\"{side}\" height=\"{side}\" fill=\"white\"/>\n"
    )
}

fn geometry(domain: &DomainSpec) -> String {
    let mut s = String::new();
    let (a, b) = (px(domain, Point::new(domain.bounds.0, domain.bounds.1)), px(domain, Point::new(domain.bounds.1, domain.bounds.0)));
    let _ = writeln!(
        s,
        "<rect class=\"bounds\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>",
        a.0,
        a.1,
        b.0 - a.0,
        b.1 - a.1
    );
    for w in domain.solid_segments() {
        let (p, q) = (px(domain, w.a), px(domain, w.b));
        let _ = writeln!(
            s,
            "<line class=\"wall\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"3\"/>",
            p.0, p.1, q.0, q.1
        );
    }
    if let Some(d) = domain.door {
        let (p, q) = (px(domain, d.a), px(domain, d.b));
        let _ = writeln!(
            s,
            "<line class=\"door\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"saddlebrown\" stroke-width=\"3\" stroke-dasharray=\"4 3\"/>",
            p.0, p.1, q.0, q.1
        );
    }
    if let Some(k) = domain.key_region {
        let c = px(domain, k.center);
        let r = k.radius * SIZE / (domain.bounds.1 - domain.bounds.0);
        let _ = writeln!(
            s,
            "<circle class=\"key-region\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"none\" stroke=\"red\" stroke-width=\"2\"/>",
            c.0, c.1, r
        );
    }
    s
}

/// Distinct fill for label `i`, spread around the hue circle.
fn color(i: usize) -> String {
    let hue = (i as f64 * 137.507_764) % 360.0;
    let light = if i % 2 == 0 { 55 } else { 40 };
    format!("hsl({hue:.1},70%,{light}%)")
}

/// Colors a `grid x grid` lattice of free-space points by hard assignment.
/// In door-key domains the points carry key value `key`.
pub fn plot_clusters(source: Source, domain: &DomainSpec, grid: usize, key: f64) -> Result<String, EvalError> {
    let mut s = header("hard assignment map");
    let cell = SIZE / grid as f64;
    for p in grid_points(domain, grid) {
        let l = source.label(&with_key(domain, p, key))?;
        let (x, y) = px(domain, p);
        let _ = writeln!(
            s,
            "<rect class=\"cell\" data-label=\"{l}\" x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"{}\"/>",
            x - cell / 2.0,
            y - cell / 2.0,
            color(l)
        );
    }
    s.push_str(&geometry(domain));
    s.push_str("</svg>\n");
    Ok(s)
}

/// Probability of picking up the key at each free grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyField {
    pub grid: usize,
    /// `(x, y, value)` per free grid point.
    pub points: Vec<(f64, f64, f64)>,
}

impl KeyField {
    /// Mean value over points inside and outside the key region.
    pub fn inside_outside(&self, domain: &DomainSpec) -> Option<(f64, f64)> {
        let disc = domain.key_region?;
        let (mut si, mut ni, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
        for &(x, y, v) in &self.points {
            if disc.contains(Point::new(x, y)) {
                si += v;
                ni += 1;
            } else {
                so += v;
                no += 1;
            }
        }
        (ni > 0 && no > 0).then(|| (si / ni as f64, so / no as f64))
    }
}

/// For each free grid point `(x, y)`: the total transition probability from
/// the encoding of `(x, y, 0)` into the has-key states. For a model the
/// has-key states are the encodings of `(x', y', key_scale)` over the grid
/// that never encode a key-free point (all has-key encodings when that set is
/// empty); for a clustering they are the clusters whose representative holds
/// the key.
pub fn key_transition_field(source: Source, domain: &DomainSpec, grid: usize) -> Result<KeyField, EvalError> {
    if !domain.has_key() {
        return Err(EvalError::Plot("domain has no key".into()));
    }
    let pts = grid_points(domain, grid);
    let (kernel, target): (Vec<Vec<f64>>, BTreeSet<usize>) = match source {
        Source::Model(m) => {
            let kernel = m.transition_matrix()?;
            let mut with = BTreeSet::new();
            let mut without = BTreeSet::new();
            for p in &pts {
                with.insert(source.label(&with_key(domain, *p, domain.key_scale))?);
                without.insert(source.label(&with_key(domain, *p, 0.0))?);
            }
            let only: BTreeSet<usize> = with.difference(&without).copied().collect();
            (kernel, if only.is_empty() { with } else { only })
        }
        Source::Clustering(c, t) => {
            let target = c
                .centroids
                .iter()
                .enumerate()
                .filter(|(_, r)| domain.key_bit(r[2]))
                .map(|(i, _)| i)
                .collect();
            (t.to_vec(), target)
        }
    };
    let mut points = Vec::with_capacity(pts.len());
    for p in pts {
        let from = source.label(&with_key(domain, p, 0.0))?;
        let v: f64 = target.iter().map(|&j| kernel[from][j]).sum();
        points.push((p.x, p.y, v.clamp(0.0, 1.0)));
    }
    Ok(KeyField { grid, points })
}

/// Heat map of [`key_transition_field`] with the key region overlaid.
pub fn plot_key_transition(field: &KeyField, domain: &DomainSpec) -> String {
    let mut s = header("key pickup probability");
    let cell = SIZE / field.grid as f64;
    for &(x, y, v) in &field.points {
        let (cx, cy) = px(domain, Point::new(x, y));
        let shade = (255.0 * (1.0 - v)).round() as u8;
        let _ = writeln!(
            s,
            "<rect class=\"cell\" data-value=\"{v:.6}\" x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"rgb(255,{shade},{shade})\"/>",
            cx - cell / 2.0,
            cy - cell / 2.0
        );
    }
    s.push_str(&geometry(domain));
    s.push_str("</svg>\n");
    s
}

/// Plans from one start to several goals. A goal without a plan is drawn
/// as a hollow circle and nothing else.
pub fn plot_walkthroughs(start: &[f64], plans: &[(Vec<f64>, Walkthrough)], domain: &DomainSpec) -> String {
    let mut s = header("walkthroughs");
    s.push_str(&geometry(domain));
    for (i, (goal, w)) in plans.iter().enumerate() {
        let col = color(i);
        let (gx, gy) = px(domain, Point::new(goal[0], goal[1]));
        if let Some(obs) = w.plan() {
            let pts: Vec<String> = obs
                .iter()
                .map(|o| {
                    let (x, y) = px(domain, Point::new(o[0], o[1]));
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                "<polyline class=\"plan\" points=\"{}\" fill=\"none\" stroke=\"{col}\" stroke-width=\"2\"/>",
                pts.join(" ")
            );
            let _ = writeln!(s, "<circle class=\"goal\" cx=\"{gx:.2}\" cy=\"{gy:.2}\" r=\"5\" fill=\"{col}\"/>");
        } else {
            let _ = writeln!(
                s,
                "<circle class=\"goal unreached\" cx=\"{gx:.2}\" cy=\"{gy:.2}\" r=\"5\" fill=\"none\" stroke=\"{col}\" stroke-width=\"2\"/>"
            );
        }
    }
    let (sx, sy) = px(domain, Point::new(start[0], start[1]));
    let _ = writeln!(s, "<rect class=\"start\" x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"black\"/>", sx - 5.0, sy - 5.0);
    s.push_str("</svg>\n");
    s
}
