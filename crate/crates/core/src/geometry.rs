//! Planar scene geometry: the ramp/highway dividing polyline, the ramp end
//! and the region of interest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// Which side of the boundary (looking along its vertex order) the ramp lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Right,
    Left,
}

/// Point projected onto the boundary polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length along the polyline; extrapolated past either end.
    pub s: f64,
    /// Signed perpendicular offset, ramp side positive.
    pub offset: f64,
    /// Unit tangent of the segment the point projects onto.
    pub tangent: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGeometry {
    pub lane_boundary: Vec<Point>,
    pub ramp_end: Point,
    pub region_of_interest: Rect,
    #[serde(default)]
    pub ramp_side: Side,
}

impl SceneGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.lane_boundary.len() < 2 {
            return Err(Error::Config(
                "lane_boundary needs at least 2 vertices".into(),
            ));
        }
        if self
            .lane_boundary
            .windows(2)
            .any(|w| dist(w[0], w[1]) == 0.0)
        {
            return Err(Error::Config(
                "lane_boundary has a zero-length segment".into(),
            ));
        }
        if self
            .lane_boundary
            .iter()
            .chain(std::iter::once(&self.ramp_end))
            .any(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::Config("non-finite geometry coordinate".into()));
        }
        let r = &self.region_of_interest;
        if !(r.min[0] < r.max[0] && r.min[1] < r.max[1]) {
            return Err(Error::Config("region_of_interest is empty".into()));
        }
        if !r.contains(self.ramp_end) {
            return Err(Error::Config(
                "ramp_end lies outside region_of_interest".into(),
            ));
        }
        Ok(())
    }

    pub fn project(&self, p: Point) -> Projection {
        let pts = &self.lane_boundary;
        let n_seg = pts.len() - 1;
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        let mut acc = 0.0;
        let mut seg_start = Vec::with_capacity(n_seg);
        for k in 0..n_seg {
            let (a, b) = (pts[k], pts[k + 1]);
            seg_start.push(acc);
            let len = dist(a, b);
            let t = (((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (len * len))
                .clamp(0.0, 1.0);
            let q = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let d = dist(p, q);
            if d < best.0 {
                best = (d, k, t);
            }
            acc += len;
        }
        let (_, k, t_clamped) = best;
        let (a, b) = (pts[k], pts[k + 1]);
        let len = dist(a, b);
        let tangent = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
        // Unclamped parameter on the end segments so positions past the
        // polyline still get a monotone arc length.
        let t_raw = ((p[0] - a[0]) * tangent[0] + (p[1] - a[1]) * tangent[1]) / len;
        let t = if (k == 0 && t_raw < 0.0) || (k == n_seg - 1 && t_raw > 1.0) {
            t_raw
        } else {
            t_clamped
        };
        let s = seg_start[k] + t * len;
        // Left-normal offset; cross(tangent, p - a).
        let left = tangent[0] * (p[1] - a[1]) - tangent[1] * (p[0] - a[0]);
        let offset = match self.ramp_side {
            Side::Right => -left,
            Side::Left => left,
        };
        Projection { s, offset, tangent }
    }

    /// Unit vector perpendicular to `tangent`, pointing from the ramp toward the highway.
    pub fn toward_highway(&self, tangent: Point) -> Point {
        let left = [-tangent[1], tangent[0]];
        match self.ramp_side {
            Side::Right => left,
            Side::Left => [-left[0], -left[1]],
        }
    }
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
