//! Annotated retinal vasculature: centerline segments with width samples,
//! bifurcation junctions, and optic-disc-centered measurement zones.
//!
//! Zones are annuli around the disc center with radii in disc-diameter (DD)
//! units. The defaults put zone A at 0.5–1.0 DD, zone B at 1.0–1.5 DD and
//! zone C at 1.0–2.5 DD from the center, i.e. 0–0.5, 0.5–1.0 and 0.5–2.0 DD
//! beyond the disc margin.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numfmt::Sig9;

/// Tolerance (pixels) for a junction location to coincide with segment ends.
pub const JOIN_EPSILON: f64 = 1.5;

#[derive(Debug, Error)]
pub enum VesselError {
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid zone: inner radius {inner} must be >= 0 and below outer radius {outer}")]
    InvalidZone { inner: f64, outer: f64 },
    #[error("malformed vessel graph JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Point at parameter `t` on the segment `self -> other`; exact at 0 and 1.
    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        if t == 0.0 {
            self
        } else if t == 1.0 {
            other
        } else {
            Point2::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
        }
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Optic disc: center and diameter in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscSpec {
    pub center: Point2,
    pub diameter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ZoneId {
    A,
    B,
    C,
}

impl ZoneId {
    pub const ALL: [ZoneId; 3] = [ZoneId::A, ZoneId::B, ZoneId::C];

    pub fn letter(self) -> char {
        match self {
            ZoneId::A => 'A',
            ZoneId::B => 'B',
            ZoneId::C => 'C',
        }
    }

    pub fn from_letter(c: char) -> Option<ZoneId> {
        match c {
            'A' => Some(ZoneId::A),
            'B' => Some(ZoneId::B),
            'C' => Some(ZoneId::C),
            _ => None,
        }
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Annulus `[inner_radius, outer_radius)` around the disc center, in disc
/// diameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub zone_id: ZoneId,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

impl ZoneSpec {
    pub fn new(zone_id: ZoneId, inner_radius: f64, outer_radius: f64) -> Result<Self, VesselError> {
        let z = Self { zone_id, inner_radius, outer_radius };
        z.check()?;
        Ok(z)
    }

    /// Default annulus for a zone letter.
    pub fn standard(zone_id: ZoneId) -> Self {
        let (inner_radius, outer_radius) = match zone_id {
            ZoneId::A => (0.5, 1.0),
            ZoneId::B => (1.0, 1.5),
            ZoneId::C => (1.0, 2.5),
        };
        Self { zone_id, inner_radius, outer_radius }
    }

    /// Zones B and C, the pair every feature table is built from by default.
    pub fn default_pair() -> Vec<ZoneSpec> {
        vec![Self::standard(ZoneId::B), Self::standard(ZoneId::C)]
    }

    pub fn check(&self) -> Result<(), VesselError> {
        let ok = self.inner_radius.is_finite()
            && self.outer_radius.is_finite()
            && self.inner_radius >= 0.0
            && self.inner_radius < self.outer_radius;
        if ok {
            Ok(())
        } else {
            Err(VesselError::InvalidZone { inner: self.inner_radius, outer: self.outer_radius })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VesselKind {
    Arteriole,
    Venule,
}

impl VesselKind {
    pub fn suffix(self) -> char {
        match self {
            VesselKind::Arteriole => 'a',
            VesselKind::Venule => 'v',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub kind: VesselKind,
    pub points: Vec<Point2>,
    /// One width per point, or empty when widths were not annotated.
    pub widths: Vec<f64>,
    pub parent: Option<String>,
    /// 0 for trunks emerging at the disc margin.
    pub generation: u32,
}

impl Segment {
    pub fn length(&self) -> f64 {
        polyline_length(&self.points).unwrap_or(0.0)
    }

    pub fn mean_width(&self) -> Option<f64> {
        if self.widths.is_empty() {
            None
        } else {
            Some(self.widths.iter().sum::<f64>() / self.widths.len() as f64)
        }
    }
}

/// Bifurcation: `trunk` ends at `location`, both daughters start there.
#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub location: Point2,
    pub trunk: String,
    pub daughters: [String; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct VesselGraph {
    pub disc: DiscSpec,
    pub segments: Vec<Segment>,
    pub junctions: Vec<Junction>,
    /// (width, height) in pixels.
    pub image_size: (u32, u32),
}

/// Sum of Euclidean distances between consecutive points.
pub fn polyline_length(points: &[Point2]) -> Result<f64, VesselError> {
    if points.len() < 2 {
        return Err(VesselError::TooFewPoints(points.len()));
    }
    Ok(points.windows(2).map(|w| w[0].distance(w[1])).sum())
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "subject", content = "id", rename_all = "lowercase")]
pub enum Subject {
    Graph,
    Segment(String),
    Junction(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    #[serde(flatten)]
    pub subject: Subject,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.subject {
            Subject::Graph => write!(f, "graph: {}", self.reason),
            Subject::Segment(id) => write!(f, "segment {id}: {}", self.reason),
            Subject::Junction(i) => write!(f, "junction #{i}: {}", self.reason),
        }
    }
}

impl VesselGraph {
    /// Every invariant violation; empty iff the graph is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let graph = |reason: String| Violation { subject: Subject::Graph, reason };
        if !(self.disc.diameter.is_finite() && self.disc.diameter > 0.0) {
            out.push(graph(format!("disc diameter must be > 0, got {}", self.disc.diameter)));
        }
        if !self.disc.center.is_finite() {
            out.push(graph("disc center is not finite".into()));
        }
        let (w, h) = (f64::from(self.image_size.0), f64::from(self.image_size.1));
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            out.push(graph("image size must be positive".into()));
        }

        let mut by_id: HashMap<&str, &Segment> = HashMap::new();
        for s in &self.segments {
            if by_id.insert(s.id.as_str(), s).is_some() {
                out.push(Violation {
                    subject: Subject::Segment(s.id.clone()),
                    reason: "duplicate segment id".into(),
                });
            }
        }

        for s in &self.segments {
            let mut bad = |reason: String| {
                out.push(Violation { subject: Subject::Segment(s.id.clone()), reason })
            };
            if s.points.len() < 2 {
                bad(format!("needs at least 2 points, has {}", s.points.len()));
            }
            if let Some(i) = s.points.iter().position(|p| !p.is_finite()) {
                bad(format!("point {i} is not finite"));
            }
            if let Some(i) = s.points.windows(2).position(|p| p[0] == p[1]) {
                bad(format!("points {i} and {} coincide", i + 1));
            }
            if let Some(i) = s
                .points
                .iter()
                .position(|p| p.x < 0.0 || p.y < 0.0 || p.x > w || p.y > h)
            {
                bad(format!("point {i} lies outside the {}x{} image", self.image_size.0, self.image_size.1));
            }
            if !s.widths.is_empty() && s.widths.len() != s.points.len() {
                bad(format!(
                    "width count {} does not match point count {}",
                    s.widths.len(),
                    s.points.len()
                ));
            }
            if let Some(i) = s.widths.iter().position(|&v| !(v.is_finite() && v > 0.0)) {
                bad(format!("width {i} must be positive"));
            }
            if let Some(pid) = &s.parent {
                match by_id.get(pid.as_str()) {
                    None => bad(format!("parent {pid} does not exist")),
                    Some(p) if p.generation + 1 != s.generation => bad(format!(
                        "generation {} is not parent {pid}'s generation {} + 1",
                        s.generation, p.generation
                    )),
                    Some(_) => {}
                }
                if pid == &s.id {
                    bad("segment is its own parent".into());
                }
            }
        }

        let mut daughter_of: HashMap<&str, usize> = HashMap::new();
        for (ji, j) in self.junctions.iter().enumerate() {
            let mut bad = |reason: String| out.push(Violation { subject: Subject::Junction(ji), reason });
            match by_id.get(j.trunk.as_str()) {
                None => bad(format!("trunk {} does not exist", j.trunk)),
                Some(t) => {
                    if let Some(end) = t.points.last() {
                        if end.distance(j.location) > JOIN_EPSILON {
                            bad(format!("trunk {} does not end at the junction", j.trunk));
                        }
                    }
                }
            }
            if j.daughters[0] == j.daughters[1] {
                bad(format!("daughters repeat {}", j.daughters[0]));
            }
            for d in &j.daughters {
                match by_id.get(d.as_str()) {
                    None => bad(format!("daughter {d} does not exist")),
                    Some(s) => {
                        if let Some(start) = s.points.first() {
                            if start.distance(j.location) > JOIN_EPSILON {
                                bad(format!("daughter {d} does not start at the junction"));
                            }
                        }
                    }
                }
                if d == &j.trunk {
                    bad(format!("{d} is both trunk and daughter"));
                }
                if let Some(prev) = daughter_of.insert(d.as_str(), ji) {
                    if prev != ji {
                        bad(format!("daughter {d} already has a parent junction #{prev}"));
                    }
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }

    /// Copy with every point mapped through `f` (widths untouched).
    pub fn map_points(&self, f: impl Fn(Point2) -> Point2) -> VesselGraph {
        let mut g = self.clone();
        g.disc.center = f(g.disc.center);
        for s in &mut g.segments {
            for p in &mut s.points {
                *p = f(*p);
            }
        }
        for j in &mut g.junctions {
            j.location = f(j.location);
        }
        g
    }

    /// Uniform scaling of coordinates, widths, disc and image by `s`.
    pub fn scaled(&self, s: f64) -> VesselGraph {
        let mut g = self.map_points(|p| p * s);
        g.disc.diameter *= s;
        for seg in &mut g.segments {
            for w in &mut seg.widths {
                *w *= s;
            }
        }
        g.image_size = (
            (f64::from(g.image_size.0) * s).ceil() as u32,
            (f64::from(g.image_size.1) * s).ceil() as u32,
        );
        g
    }
}

// ---------------------------------------------------------------------------
// Zone clipping
// ---------------------------------------------------------------------------

/// Zone-clipped graph plus, for each kept segment, the id of the original
/// segment it came from.
#[derive(Debug, Clone)]
pub struct ClippedGraph {
    pub graph: VesselGraph,
    pub origins: Vec<String>,
}

struct Annulus {
    center: Point2,
    r_in: f64,
    r_out: f64,
    tol: f64,
}

impl Annulus {
    fn new(disc: &DiscSpec, zone: &ZoneSpec) -> Self {
        Self {
            center: disc.center,
            r_in: zone.inner_radius * disc.diameter,
            r_out: zone.outer_radius * disc.diameter,
            tol: 1e-9 * disc.diameter.abs().max(1.0),
        }
    }

    fn contains(&self, p: Point2) -> bool {
        let r = (p - self.center).norm();
        r >= self.r_in - self.tol && r <= self.r_out + self.tol
    }

    fn contains_strict(&self, p: Point2) -> bool {
        let r = (p - self.center).norm();
        r >= self.r_in && r <= self.r_out
    }

    fn min_distance_on_edge(&self, a: Point2, b: Point2) -> f64 {
        let d = b - a;
        let len2 = d.x * d.x + d.y * d.y;
        let t = if len2 > 0.0 {
            (((self.center - a).x * d.x + (self.center - a).y * d.y) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (a.lerp(b, t) - self.center).norm()
    }

    fn whole_inside(&self, pts: &[Point2]) -> bool {
        pts.iter().all(|&p| self.contains(p))
            && pts
                .windows(2)
                .all(|w| self.min_distance_on_edge(w[0], w[1]) >= self.r_in - self.tol)
    }

    /// Parameters in (0, 1) where the edge crosses either circle.
    fn crossings(&self, a: Point2, b: Point2) -> Vec<f64> {
        const SNAP: f64 = 1e-12;
        let d = b - a;
        let f = a - self.center;
        let qa = d.x * d.x + d.y * d.y;
        let qb = 2.0 * (f.x * d.x + f.y * d.y);
        let mut ts = Vec::with_capacity(4);
        for r in [self.r_in, self.r_out] {
            if r <= 0.0 {
                continue;
            }
            let qc = f.x * f.x + f.y * f.y - r * r;
            let disc = qb * qb - 4.0 * qa * qc;
            if disc <= 0.0 || qa == 0.0 {
                continue;
            }
            let sq = disc.sqrt();
            // numerically stable pair of roots; q != 0 since disc > 0
            let q = -0.5 * (qb + qb.signum() * sq);
            let roots = [q / qa, qc / q];
            ts.extend(roots.into_iter().filter(|&t| t > SNAP && t < 1.0 - SNAP));
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }
}

struct Piece {
    points: Vec<Point2>,
    widths: Vec<f64>,
    starts_at_first: bool,
    ends_at_last: bool,
}

fn split_segment(seg: &Segment, ann: &Annulus) -> Vec<Piece> {
    let has_w = !seg.widths.is_empty() && seg.widths.len() == seg.points.len();
    let n_edges = seg.points.len().saturating_sub(1);
    let mut pieces = Vec::new();
    let mut current: Option<Piece> = None;
    let mut continuing = false;

    let flush = |cur: &mut Option<Piece>, pieces: &mut Vec<Piece>| {
        if let Some(mut p) = cur.take() {
            let mut pts = Vec::with_capacity(p.points.len());
            let mut ws = Vec::with_capacity(p.widths.len());
            for (i, q) in p.points.iter().enumerate() {
                if pts.last() != Some(q) {
                    pts.push(*q);
                    if !p.widths.is_empty() {
                        ws.push(p.widths[i]);
                    }
                }
            }
            p.points = pts;
            p.widths = ws;
            if p.points.len() >= 2 {
                pieces.push(p);
            }
        }
    };

    for e in 0..n_edges {
        let (a, b) = (seg.points[e], seg.points[e + 1]);
        let (wa, wb) = if has_w { (seg.widths[e], seg.widths[e + 1]) } else { (0.0, 0.0) };
        let mut ts = vec![0.0];
        ts.extend(ann.crossings(a, b));
        ts.push(1.0);
        for k in 0..ts.len() - 1 {
            let (t0, t1) = (ts[k], ts[k + 1]);
            if t1 <= t0 {
                continue;
            }
            let mid = a.lerp(b, 0.5 * (t0 + t1));
            if ann.contains_strict(mid) {
                let p1 = a.lerp(b, t1);
                let w1 = if t1 == 1.0 { wb } else { wa + t1 * (wb - wa) };
                match current.as_mut() {
                    Some(cur) if continuing && t0 == 0.0 => {
                        cur.points.push(p1);
                        if has_w {
                            cur.widths.push(w1);
                        }
                        cur.ends_at_last = e + 1 == n_edges && t1 == 1.0;
                    }
                    _ => {
                        flush(&mut current, &mut pieces);
                        let p0 = a.lerp(b, t0);
                        let w0 = if t0 == 0.0 { wa } else { wa + t0 * (wb - wa) };
                        current = Some(Piece {
                            points: vec![p0, p1],
                            widths: if has_w { vec![w0, w1] } else { Vec::new() },
                            starts_at_first: e == 0 && t0 == 0.0,
                            ends_at_last: e + 1 == n_edges && t1 == 1.0,
                        });
                    }
                }
                continuing = t1 == 1.0;
            } else {
                flush(&mut current, &mut pieces);
                continuing = false;
            }
        }
    }
    flush(&mut current, &mut pieces);
    pieces
}

/// Restricts `graph` to the zone annulus; see [`zone_clip_traced`].
pub fn zone_clip(graph: &VesselGraph, zone: &ZoneSpec) -> Result<VesselGraph, VesselError> {
    Ok(zone_clip_traced(graph, zone)?.graph)
}

/// Keeps the portions of every segment lying in the zone annulus.
///
/// Segments fully inside keep their id. Segments crossing a boundary are cut
/// there (points and widths interpolated linearly) and their parts are named
/// `<id>~<k>` in order along the polyline. A junction survives when its
/// location is inside and the trunk end and both daughter starts survive.
pub fn zone_clip_traced(graph: &VesselGraph, zone: &ZoneSpec) -> Result<ClippedGraph, VesselError> {
    zone.check()?;
    let ann = Annulus::new(&graph.disc, zone);

    let mut segments = Vec::new();
    let mut origins = Vec::new();
    // original id -> (piece holding the first vertex, piece holding the last vertex)
    let mut ends: HashMap<&str, (Option<String>, Option<String>)> = HashMap::new();
    let mut pending_parent: Vec<Option<&str>> = Vec::new();

    for seg in &graph.segments {
        if seg.points.len() >= 2 && ann.whole_inside(&seg.points) {
            ends.insert(&seg.id, (Some(seg.id.clone()), Some(seg.id.clone())));
            pending_parent.push(seg.parent.as_deref());
            segments.push(Segment { parent: None, ..seg.clone() });
            origins.push(seg.id.clone());
            continue;
        }
        let mut first = None;
        let mut last = None;
        for (k, piece) in split_segment(seg, &ann).into_iter().enumerate() {
            let id = format!("{}~{}", seg.id, k);
            if piece.starts_at_first {
                first = Some(id.clone());
            }
            if piece.ends_at_last {
                last = Some(id.clone());
            }
            pending_parent.push(if piece.starts_at_first { seg.parent.as_deref() } else { None });
            segments.push(Segment {
                id,
                kind: seg.kind,
                points: piece.points,
                widths: piece.widths,
                parent: None,
                generation: seg.generation,
            });
            origins.push(seg.id.clone());
        }
        ends.insert(&seg.id, (first, last));
    }

    for (s, parent) in segments.iter_mut().zip(pending_parent) {
        s.parent = parent.and_then(|pid| ends.get(pid)).and_then(|(_, last)| last.clone());
    }

    let junctions = graph
        .junctions
        .iter()
        .filter(|j| ann.contains(j.location))
        .filter_map(|j| {
            let trunk = ends.get(j.trunk.as_str())?.1.clone()?;
            let d0 = ends.get(j.daughters[0].as_str())?.0.clone()?;
            let d1 = ends.get(j.daughters[1].as_str())?.0.clone()?;
            Some(Junction { location: j.location, trunk, daughters: [d0, d1] })
        })
        .collect();

    Ok(ClippedGraph {
        graph: VesselGraph {
            disc: graph.disc,
            segments,
            junctions,
            image_size: graph.image_size,
        },
        origins,
    })
}

// ---------------------------------------------------------------------------
// JSON wire format
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct WireDiscOut {
    cx: Sig9,
    cy: Sig9,
    d: Sig9,
}

#[derive(Serialize)]
struct WireSegmentOut<'a> {
    id: &'a str,
    kind: VesselKind,
    parent: Option<&'a str>,
    generation: u32,
    pts: Vec<[Sig9; 2]>,
    widths: Vec<Sig9>,
}

#[derive(Serialize)]
struct WireJunctionOut<'a> {
    at: [Sig9; 2],
    trunk: &'a str,
    daughters: [&'a str; 2],
}

#[derive(Serialize)]
struct WireGraphOut<'a> {
    disc: WireDiscOut,
    image: [u32; 2],
    segments: Vec<WireSegmentOut<'a>>,
    junctions: Vec<WireJunctionOut<'a>>,
}

#[derive(Deserialize)]
struct WireDiscIn {
    cx: f64,
    cy: f64,
    d: f64,
}

#[derive(Deserialize)]
struct WireSegmentIn {
    id: String,
    kind: VesselKind,
    #[serde(default)]
    parent: Option<String>,
    #[serde(default)]
    generation: u32,
    pts: Vec<[f64; 2]>,
    #[serde(default)]
    widths: Vec<f64>,
}

#[derive(Deserialize)]
struct WireJunctionIn {
    at: [f64; 2],
    trunk: String,
    daughters: [String; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireGraphIn {
    disc: WireDiscIn,
    image: [u32; 2],
    segments: Vec<WireSegmentIn>,
    #[serde(default)]
    junctions: Vec<WireJunctionIn>,
    /// free-form metadata written by tools; ignored on read
    #[serde(default, rename = "provenance")]
    _provenance: Option<serde::de::IgnoredAny>,
}

impl VesselGraph {
    /// Compact JSON document with fixed field order and at most nine
    /// significant digits per number.
    pub fn to_json(&self) -> String {
        let wire = WireGraphOut {
            disc: WireDiscOut {
                cx: Sig9(self.disc.center.x),
                cy: Sig9(self.disc.center.y),
                d: Sig9(self.disc.diameter),
            },
            image: [self.image_size.0, self.image_size.1],
            segments: self
                .segments
                .iter()
                .map(|s| WireSegmentOut {
                    id: &s.id,
                    kind: s.kind,
                    parent: s.parent.as_deref(),
                    generation: s.generation,
                    pts: s.points.iter().map(|p| [Sig9(p.x), Sig9(p.y)]).collect(),
                    widths: s.widths.iter().map(|&w| Sig9(w)).collect(),
                })
                .collect(),
            junctions: self
                .junctions
                .iter()
                .map(|j| WireJunctionOut {
                    at: [Sig9(j.location.x), Sig9(j.location.y)],
                    trunk: &j.trunk,
                    daughters: [&j.daughters[0], &j.daughters[1]],
                })
                .collect(),
        };
        serde_json::to_string(&wire).expect("graph serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<VesselGraph, VesselError> {
        let w: WireGraphIn = serde_json::from_str(text)?;
        Ok(VesselGraph {
            disc: DiscSpec { center: Point2::new(w.disc.cx, w.disc.cy), diameter: w.disc.d },
            image_size: (w.image[0], w.image[1]),
            segments: w
                .segments
                .into_iter()
                .map(|s| Segment {
                    id: s.id,
                    kind: s.kind,
                    points: s.pts.into_iter().map(|[x, y]| Point2::new(x, y)).collect(),
                    widths: s.widths,
                    parent: s.parent,
                    generation: s.generation,
                })
                .collect(),
            junctions: w
                .junctions
                .into_iter()
                .map(|j| Junction {
                    location: Point2::new(j.at[0], j.at[1]),
                    trunk: j.trunk,
                    daughters: j.daughters,
                })
                .collect(),
        })
    }

    /// The same graph after a write/read through the JSON format.
    pub fn quantized(&self) -> VesselGraph {
        VesselGraph::from_json(&self.to_json()).expect("own JSON parses")
    }
}
