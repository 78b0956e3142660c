use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

fn orient(a: Point, b: Point, c: Point) -> i8 {
    let v = b.sub(a).cross(c.sub(a));
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn within_box(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        Self { a, b }
    }

    pub fn len(&self) -> f64 {
        self.a.dist(self.b)
    }

    /// Closed-segment intersection, touching included.
    pub fn intersects(&self, o: &Segment) -> bool {
        let (p1, p2, q1, q2) = (self.a, self.b, o.a, o.b);
        let d1 = orient(q1, q2, p1);
        let d2 = orient(q1, q2, p2);
        let d3 = orient(p1, p2, q1);
        let d4 = orient(p1, p2, q2);
        if d1 * d2 < 0 && d3 * d4 < 0 {
            return true;
        }
        (d1 == 0 && within_box(q1, q2, p1))
            || (d2 == 0 && within_box(q1, q2, p2))
            || (d3 == 0 && within_box(p1, p2, q1))
            || (d4 == 0 && within_box(p1, p2, q2))
    }

    pub fn contains(&self, p: Point) -> bool {
        orient(self.a, self.b, p) == 0 && within_box(self.a, self.b, p)
    }

    /// Point of the segment closest to `p`.
    pub fn closest_point(&self, p: Point) -> Point {
        let d = self.b.sub(self.a);
        let l2 = d.dot(d);
        if l2 == 0.0 {
            return self.a;
        }
        let t = (p.sub(self.a).dot(d) / l2).clamp(0.0, 1.0);
        Point::new(self.a.x + t * d.x, self.a.y + t * d.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: Point,
    pub radius: f64,
}

impl Disc {
    pub fn contains(&self, p: Point) -> bool {
        self.center.dist(p) <= self.radius
    }

    pub fn intersects_segment(&self, s: &Segment) -> bool {
        self.contains(s.closest_point(self.center))
    }

    /// Candidate waypoints inside the disc for a detour `a -> p -> b`.
    ///
    /// When the segment crosses the disc the crossing point is first, so the
    /// straight move is tried before any detour; then the center and a ring
    /// of boundary points follow.
    pub fn detour_points(&self, a: Point, b: Point) -> Vec<Point> {
        let mut pts = Vec::with_capacity(66);
        let closest = Segment::new(a, b).closest_point(self.center);
        if self.contains(closest) {
            pts.push(closest);
        }
        pts.push(self.center);
        let r = self.radius * (1.0 - 1e-9);
        for k in 0..64 {
            let th = k as f64 * std::f64::consts::TAU / 64.0;
            pts.push(Point::new(self.center.x + r * th.cos(), self.center.y + r * th.sin()));
        }
        pts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(a: (f64, f64), b: (f64, f64)) -> Segment {
        Segment::new(Point::new(a.0, a.1), Point::new(b.0, b.1))
    }

    #[test]
    fn crossing_and_touching() {
        let wall = seg((-1.0, 0.0), (1.0, 0.0));
        assert!(seg((0.0, -1.0), (0.0, 1.0)).intersects(&wall));
        assert!(seg((0.0, 0.0), (0.0, 1.0)).intersects(&wall));
        assert!(!seg((0.0, 0.1), (0.5, 1.0)).intersects(&wall));
        assert!(!seg((1.1, -1.0), (1.1, 1.0)).intersects(&wall));
        // collinear overlap
        assert!(seg((0.5, 0.0), (2.0, 0.0)).intersects(&wall));
    }

    #[test]
    fn disc_segment() {
        let d = Disc {
            center: Point::new(0.8, 0.8),
            radius: 0.15,
        };
        assert!(d.intersects_segment(&seg((0.5, 0.8), (1.0, 0.8))));
        assert!(!d.intersects_segment(&seg((0.5, 0.5), (0.6, 0.5))));
        assert!(d.detour_points(Point::new(0.0, 0.0), Point::new(0.1, 0.0)).iter().all(|p| d.contains(*p)));
    }
}
