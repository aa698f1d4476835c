//! Vascular parameters computed from a vessel graph, per zone and per
//! vessel kind: calibers (CRAE/CRVE/AVR), fractal dimension, width
//! statistics, tortuosity, bifurcation geometry and vessel counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::features::names::{registry, FeatureName, KindSel, Param};
use crate::raster::BinaryRaster;
use crate::vessel::{
    polyline_length, zone_clip_traced, Point2, Segment, VesselError, VesselGraph, VesselKind,
    Violation, ZoneId, ZoneSpec,
};

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("caliber needs at least one width")]
    EmptyWidths,
    #[error("width #{index} must be positive, got {value}")]
    NonPositiveWidth { index: usize, value: f64 },
    #[error("CRVE must be positive, got {0}")]
    NonPositiveCrve(f64),
    #[error("raster has no foreground pixels")]
    EmptyRaster,
    #[error("need at least 4 box sizes, got {0}")]
    TooFewBoxSizes(usize),
    #[error("box sizes {0:?} do not form a geometric ladder")]
    NotGeometric(Vec<usize>),
    #[error("tortuosity needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("polyline endpoints coincide (zero chord)")]
    ZeroChord,
    #[error("invalid junction geometry: {0}")]
    InvalidJunction(String),
    #[error("at least one zone is required")]
    NoZones,
    #[error("zone {0} listed twice")]
    DuplicateZone(ZoneId),
    #[error("graph is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidGraph(Vec<Violation>),
    #[error(transparent)]
    Vessel(#[from] VesselError),
}

// ---------------------------------------------------------------------------
// Calibers
// ---------------------------------------------------------------------------

/// Branch coefficients of the revised Knudtson pairing formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KnudtsonConstants {
    pub arteriole: f64,
    pub venule: f64,
}

impl Default for KnudtsonConstants {
    fn default() -> Self {
        Self { arteriole: 0.88, venule: 0.95 }
    }
}

impl KnudtsonConstants {
    pub fn factor(&self, kind: VesselKind) -> f64 {
        match kind {
            VesselKind::Arteriole => self.arteriole,
            VesselKind::Venule => self.venule,
        }
    }
}

/// Central retinal vessel equivalent (CRAE for arterioles, CRVE for venules)
/// of the six largest widths.
pub fn vessel_equivalent(widths: &[f64], kind: VesselKind) -> Result<f64, ParamError> {
    vessel_equivalent_with(widths, KnudtsonConstants::default().factor(kind))
}

/// Iterative pairing: sort descending, combine largest with smallest as
/// `k * sqrt(w1² + w2²)`, carry the middle value of an odd round, repeat.
pub fn vessel_equivalent_with(widths: &[f64], k: f64) -> Result<f64, ParamError> {
    if widths.is_empty() {
        return Err(ParamError::EmptyWidths);
    }
    if let Some((index, &value)) = widths.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
        return Err(ParamError::NonPositiveWidth { index, value });
    }
    let desc = |v: &mut Vec<f64>| v.sort_by(|a, b| b.total_cmp(a));
    let mut round = widths.to_vec();
    desc(&mut round);
    round.truncate(6);
    while round.len() > 1 {
        let mut next = Vec::with_capacity(round.len().div_ceil(2));
        let (mut i, mut j) = (0, round.len() - 1);
        while i < j {
            next.push(k * round[i].hypot(round[j]));
            i += 1;
            j -= 1;
        }
        if i == j {
            next.push(round[i]);
        }
        desc(&mut next);
        round = next;
    }
    Ok(round[0])
}

pub fn avr(crae: f64, crve: f64) -> Result<f64, ParamError> {
    if !(crve > 0.0) {
        return Err(ParamError::NonPositiveCrve(crve));
    }
    Ok(crae / crve)
}

// ---------------------------------------------------------------------------
// Fractal dimension
// ---------------------------------------------------------------------------

pub const FD_CANVAS: usize = 1024;
pub const FD_BOX_SIZES: [usize; 8] = [2, 4, 8, 16, 32, 64, 128, 256];

/// Box-counting dimension: least-squares slope of `ln N(s)` against `ln(1/s)`.
pub fn fractal_dimension(raster: &BinaryRaster, box_sizes: &[usize]) -> Result<f64, ParamError> {
    if box_sizes.len() < 4 {
        return Err(ParamError::TooFewBoxSizes(box_sizes.len()));
    }
    let ratio = box_sizes[1] as f64 / box_sizes[0] as f64;
    let geometric = box_sizes[0] > 0
        && ratio > 1.0
        && box_sizes
            .windows(2)
            .all(|w| ((w[1] as f64 / w[0] as f64) - ratio).abs() <= 1e-9 * ratio);
    if !geometric {
        return Err(ParamError::NotGeometric(box_sizes.to_vec()));
    }
    if raster.is_empty() {
        return Err(ParamError::EmptyRaster);
    }
    let pts: Vec<(f64, f64)> = box_sizes
        .iter()
        .map(|&s| (-(s as f64).ln(), (raster.box_count(s) as f64).ln()))
        .collect();
    Ok(ls_slope(&pts))
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Draws the centerlines of `segments` 1 pixel wide on a square canvas
/// covering `[-outer, outer]` disc diameters around the disc center.
///
/// The canvas is turned so the mean centerline point of the whole graph lies
/// on the +x axis. Box counts depend on grid phase, so without this a rotated
/// image would give a different FD.
pub fn zone_raster<'a>(
    graph: &VesselGraph,
    zone: &ZoneSpec,
    segments: impl IntoIterator<Item = &'a Segment>,
) -> BinaryRaster {
    let half = FD_CANVAS as f64 / 2.0;
    let extent = graph.disc.diameter * zone.outer_radius;
    let c = graph.disc.center;
    let (cos, sin) = canonical_turn(graph);
    let map = |p: Point2| {
        let (x, y) = (p.x - c.x, p.y - c.y);
        let (u, v) = (cos * x + sin * y, -sin * x + cos * y);
        (u / extent * half + half, v / extent * half + half)
    };
    let mut r = BinaryRaster::new(FD_CANVAS, FD_CANVAS);
    for s in segments {
        for w in s.points.windows(2) {
            r.draw_line(map(w[0]), map(w[1]));
        }
    }
    r
}

/// (cos, sin) of the angle from the disc center to the mean centerline point;
/// identity when that point sits on the center.
fn canonical_turn(graph: &VesselGraph) -> (f64, f64) {
    let c = graph.disc.center;
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for s in &graph.segments {
        for p in &s.points {
            sx += p.x - c.x;
            sy += p.y - c.y;
            n += 1;
        }
    }
    let r = sx.hypot(sy);
    if n == 0 || r <= 1e-9 * n as f64 * graph.disc.diameter {
        return (1.0, 0.0);
    }
    (sx / r, sy / r)
}

// ---------------------------------------------------------------------------
// Tortuosity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tortuosity {
    /// arc / chord - 1
    pub simple: f64,
    /// mean squared curvature along the smoothed centerline (1/px²)
    pub curvature: f64,
}

const RESAMPLE_INTERVALS: usize = 256;
const SMOOTH_HALF_WINDOW: usize = 4;

/// Simple and curvature tortuosity of a centerline.
///
/// The curvature term resamples the polyline at 257 points equally spaced in
/// arc length, smooths them with a cubic Savitzky–Golay filter (9 taps),
/// takes three-point (circumscribed circle) curvature of the smoothed points
/// and averages `κ²` weighted by arc length. Resampling depends only on the
/// traced curve, so inserting collinear vertices does not change the result.
pub fn tortuosity(points: &[Point2]) -> Result<Tortuosity, ParamError> {
    if points.len() < 3 {
        return Err(ParamError::TooFewPoints(points.len()));
    }
    let arc = polyline_length(points)?;
    let chord = points[0].distance(points[points.len() - 1]);
    if !(chord > 1e-12 * arc) {
        return Err(ParamError::ZeroChord);
    }
    let simple = (arc / chord - 1.0).max(0.0);
    let resampled = resample(points, arc, RESAMPLE_INTERVALS);
    let smooth = savitzky_golay_cubic(&resampled, SMOOTH_HALF_WINDOW);
    let (mut num, mut den) = (0.0, 0.0);
    for w in smooth.windows(3) {
        let k = menger_curvature(w[0], w[1], w[2]);
        let ds = 0.5 * (w[0].distance(w[1]) + w[1].distance(w[2]));
        num += k * k * ds;
        den += ds;
    }
    let curvature = if den > 0.0 { num / den } else { 0.0 };
    Ok(Tortuosity { simple, curvature })
}

fn resample(points: &[Point2], arc: f64, intervals: usize) -> Vec<Point2> {
    let mut cum = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in points.windows(2) {
        acc += w[0].distance(w[1]);
        cum.push(acc);
    }
    let mut out = Vec::with_capacity(intervals + 1);
    let mut e = 0;
    for k in 0..=intervals {
        if k == intervals {
            out.push(points[points.len() - 1]);
            break;
        }
        let s = arc * k as f64 / intervals as f64;
        while e + 2 < cum.len() && cum[e + 1] <= s {
            e += 1;
        }
        let len = cum[e + 1] - cum[e];
        let t = if len > 0.0 { ((s - cum[e]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(points[e].lerp(points[e + 1], t));
    }
    out
}

/// Cubic Savitzky–Golay smoothing; returns only the points with a full window.
fn savitzky_golay_cubic(p: &[Point2], h: usize) -> Vec<Point2> {
    if p.len() < 2 * h + 1 {
        return p.to_vec();
    }
    let hf = h as f64;
    let norm = (2.0 * hf - 1.0) * (2.0 * hf + 1.0) * (2.0 * hf + 3.0);
    let coef: Vec<f64> = (-(h as i64)..=h as i64)
        .map(|j| (3.0 * (3.0 * hf * hf + 3.0 * hf - 1.0) - 15.0 * (j * j) as f64) / norm)
        .collect();
    (h..p.len() - h)
        .map(|i| {
            let mut q = Point2::default();
            for (c, pt) in coef.iter().zip(&p[i - h..=i + h]) {
                q.x += c * pt.x;
                q.y += c * pt.y;
            }
            q
        })
        .collect()
}

fn menger_curvature(a: Point2, b: Point2, c: Point2) -> f64 {
    let (ab, bc, ca) = (a.distance(b), b.distance(c), c.distance(a));
    let denom = ab * bc * ca;
    if denom == 0.0 {
        return 0.0;
    }
    let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    2.0 * cross.abs() / denom
}

/// Tortuosity of a segment, treating two-point segments as straight.
fn segment_tortuosity(points: &[Point2]) -> Result<Tortuosity, ParamError> {
    if points.len() == 2 {
        if points[0] == points[1] {
            return Err(ParamError::ZeroChord);
        }
        return Ok(Tortuosity { simple: 0.0, curvature: 0.0 });
    }
    tortuosity(points)
}

// ---------------------------------------------------------------------------
// Width statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WidthStats {
    pub mean: f64,
    pub std_dev: f64,
    pub length_to_diameter: f64,
}

fn width_stats_of<'a>(segments: impl IntoIterator<Item = &'a Segment>) -> Option<WidthStats> {
    let mut samples = Vec::new();
    let mut ldr = Vec::new();
    for s in segments {
        if s.widths.is_empty() {
            continue;
        }
        samples.extend_from_slice(&s.widths);
        if let Some(mw) = s.mean_width() {
            ldr.push(s.length() / mw);
        }
    }
    if samples.is_empty() {
        return None;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
    Some(WidthStats {
        mean,
        std_dev: var.sqrt(),
        length_to_diameter: ldr.iter().sum::<f64>() / ldr.len() as f64,
    })
}

/// MW, STDW and LDR of the zone-clipped vessels of `kind`; `None` when the
/// zone holds no width samples of that kind.
pub fn width_stats(
    graph: &VesselGraph,
    zone: &ZoneSpec,
    kind: KindSel,
) -> Result<Option<WidthStats>, ParamError> {
    let clipped = zone_clip_traced(graph, zone)?;
    Ok(width_stats_of(clipped.graph.segments.iter().filter(|s| kind.matches(s.kind))))
}

// ---------------------------------------------------------------------------
// Junctions
// ---------------------------------------------------------------------------

/// Bifurcation geometry with the wider daughter first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JunctionGeometry {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    /// deviation of the wider daughter from the trunk direction (degrees)
    pub theta1: f64,
    pub theta2: f64,
}

impl JunctionGeometry {
    /// Orders the daughters so that `d1 >= d2` (angles follow their daughter).
    pub fn new(d0: f64, da: f64, db: f64, theta_a: f64, theta_b: f64) -> Result<Self, ParamError> {
        for (name, w) in [("d0", d0), ("d1", da), ("d2", db)] {
            if !(w.is_finite() && w > 0.0) {
                return Err(ParamError::InvalidJunction(format!("{name} = {w} is not positive")));
            }
        }
        for t in [theta_a, theta_b] {
            if !(t.is_finite() && (0.0..180.0).contains(&t)) {
                return Err(ParamError::InvalidJunction(format!("angle {t} outside [0, 180)")));
            }
        }
        Ok(if da >= db {
            Self { d0, d1: da, d2: db, theta1: theta_a, theta2: theta_b }
        } else {
            Self { d0, d1: db, d2: da, theta1: theta_b, theta2: theta_a }
        })
    }
}

/// Why a junction exponent could not be reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JeIssue {
    /// trunk not strictly wider than both daughters: no positive root
    TrunkNotWidest,
    /// root lies below the search range
    RootBelowRange,
    /// root lies above the search range
    RootAboveRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JunctionParams {
    pub bc: f64,
    pub af: f64,
    pub ba: f64,
    pub aa: f64,
    pub je: Result<f64, JeIssue>,
}

pub const JE_RANGE: (f64, f64) = (0.5, 20.0);
pub const JE_TOLERANCE: f64 = 1e-10;

pub fn junction_params(j: &JunctionGeometry) -> JunctionParams {
    let d0sq = j.d0 * j.d0;
    JunctionParams {
        bc: (j.d1 * j.d1 + j.d2 * j.d2) / d0sq,
        af: (j.d2 * j.d2) / (j.d1 * j.d1),
        ba: j.theta1 + j.theta2,
        aa: (j.theta1 - j.theta2).abs(),
        je: junction_exponent(j.d0, j.d1, j.d2),
    }
}

/// Solves `d1^x + d2^x = d0^x` by bisection on `[0.5, 20]`, in the
/// normalized form `(d1/d0)^x + (d2/d0)^x - 1 = 0` (same root, bounded
/// magnitudes), to a residual of at most 1e-10.
pub fn junction_exponent(d0: f64, d1: f64, d2: f64) -> Result<f64, JeIssue> {
    if d0 <= d1.max(d2) {
        return Err(JeIssue::TrunkNotWidest);
    }
    let (a, b) = (d1 / d0, d2 / d0);
    let g = |x: f64| a.powf(x) + b.powf(x) - 1.0;
    let (mut lo, mut hi) = JE_RANGE;
    let (glo, ghi) = (g(lo), g(hi));
    if glo < 0.0 {
        return Err(JeIssue::RootBelowRange);
    }
    if ghi > 0.0 {
        return Err(JeIssue::RootAboveRange);
    }
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }
    // g is strictly decreasing; run to bracket collapse
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    debug_assert!(g(x).abs() <= JE_TOLERANCE);
    Ok(x)
}

/// Unit direction of travel at one end of a polyline, measured over the
/// first `reach` pixels of arc from that end.
fn end_direction(points: &[Point2], at_start: bool, reach: f64) -> Option<Point2> {
    let pts: Vec<Point2> = if at_start { points.to_vec() } else { points.iter().rev().copied().collect() };
    let mut remaining = reach;
    let mut q = pts[0];
    for w in pts.windows(2) {
        let len = w[0].distance(w[1]);
        if len >= remaining {
            q = w[0].lerp(w[1], remaining / len);
            remaining = 0.0;
            break;
        }
        remaining -= len;
        q = w[1];
    }
    let _ = remaining;
    let d = if at_start { q - pts[0] } else { pts[0] - q };
    let n = d.norm();
    (n > 0.0).then(|| d * (1.0 / n))
}

fn angle_deg(u: Point2, v: Point2) -> f64 {
    let cross = u.x * v.y - u.y * v.x;
    let dot = u.x * v.x + u.y * v.y;
    cross.abs().atan2(dot).to_degrees()
}

/// Direction reach for junction angles, in multiples of the trunk width.
pub const ANGLE_REACH_WIDTHS: f64 = 3.0;

/// Geometry of a junction in `graph`, or the reason it is degenerate.
pub fn junction_geometry(graph: &VesselGraph, index: usize) -> Result<JunctionGeometry, String> {
    let j = &graph.junctions[index];
    let find = |id: &str| graph.segment(id).ok_or_else(|| format!("segment {id} missing"));
    let trunk = find(&j.trunk)?;
    let da = find(&j.daughters[0])?;
    let db = find(&j.daughters[1])?;
    let w = |s: &Segment| s.mean_width().ok_or_else(|| format!("segment {} has no widths", s.id));
    let (d0, wa, wb) = (w(trunk)?, w(da)?, w(db)?);
    if !(d0 > 0.0 && wa > 0.0 && wb > 0.0) {
        return Err("non-positive width".into());
    }
    if wa > d0 || wb > d0 {
        return Err(format!("daughter wider than trunk ({wa:.4}, {wb:.4} > {d0:.4})"));
    }
    let reach = ANGLE_REACH_WIDTHS * d0;
    let u = end_direction(&trunk.points, false, reach).ok_or("trunk has no direction")?;
    let va = end_direction(&da.points, true, reach).ok_or("daughter has no direction")?;
    let vb = end_direction(&db.points, true, reach).ok_or("daughter has no direction")?;
    let (ta, tb) = (angle_deg(u, va), angle_deg(u, vb));
    JunctionGeometry::new(d0, wa, wb, ta, tb).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// Counts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub n_branches: usize,
    pub n_first_branches: usize,
    pub n_arterioles: usize,
    pub n_venules: usize,
    pub arteriolar_branches: usize,
    pub venular_branches: usize,
    pub arteriolar_first_branches: usize,
    pub venular_first_branches: usize,
}

fn counts_of(clipped: &VesselGraph, origins: &[String]) -> Counts {
    let mut c = Counts::default();
    let mut trunks: [BTreeSet<&str>; 2] = [BTreeSet::new(), BTreeSet::new()];
    for (s, origin) in clipped.segments.iter().zip(origins) {
        if s.generation == 0 {
            trunks[(s.kind == VesselKind::Venule) as usize].insert(origin);
        }
    }
    c.n_arterioles = trunks[0].len();
    c.n_venules = trunks[1].len();
    for j in &clipped.junctions {
        let Some(t) = clipped.segment(&j.trunk) else { continue };
        let first = t.generation == 0;
        c.n_branches += 1;
        c.n_first_branches += first as usize;
        match t.kind {
            VesselKind::Arteriole => {
                c.arteriolar_branches += 1;
                c.arteriolar_first_branches += first as usize;
            }
            VesselKind::Venule => {
                c.venular_branches += 1;
                c.venular_first_branches += first as usize;
            }
        }
    }
    c
}

/// Branch and trunk counts inside a zone. Trunks are counted once per
/// original generation-0 segment even when the zone cuts them in pieces.
pub fn counts(graph: &VesselGraph, zone: &ZoneSpec) -> Result<Counts, ParamError> {
    let clipped = zone_clip_traced(graph, zone)?;
    Ok(counts_of(&clipped.graph, &clipped.origins))
}

// ---------------------------------------------------------------------------
// Quantification
// ---------------------------------------------------------------------------

/// Named per-image parameters; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FeatureVector {
    values: BTreeMap<FeatureName, Option<f64>>,
}

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_names(names: &[FeatureName]) -> Self {
        Self { values: names.iter().map(|&n| (n, None)).collect() }
    }

    pub fn set(&mut self, name: FeatureName, value: Option<f64>) {
        self.values.insert(name, value);
    }

    /// Value of `name`; `None` when missing or not part of the vector.
    pub fn get(&self, name: FeatureName) -> Option<f64> {
        self.values.get(&name).copied().flatten()
    }

    pub fn get_str(&self, name: &str) -> Option<f64> {
        name.parse().ok().and_then(|n| self.get(n))
    }

    pub fn contains(&self, name: FeatureName) -> bool {
        self.values.contains_key(&name)
    }

    pub fn is_missing(&self, name: FeatureName) -> bool {
        matches!(self.values.get(&name), Some(None))
    }

    pub fn names(&self) -> impl Iterator<Item = FeatureName> + '_ {
        self.values.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureName, Option<f64>)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticCode {
    DegenerateJunction,
    JunctionExponentMissing,
    ZeroChord,
    FractalDimensionOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub zone: ZoneId,
    pub code: DiagnosticCode,
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantification {
    pub features: FeatureVector,
    pub diagnostics: Vec<Diagnostic>,
}

/// Configuration for [`quantify_with`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct QuantifyOptions {
    pub knudtson: KnudtsonConstants,
}

pub fn quantify(graph: &VesselGraph, zones: &[ZoneSpec]) -> Result<FeatureVector, ParamError> {
    Ok(quantify_with(graph, zones, &QuantifyOptions::default())?.features)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Every parameter for every zone and vessel kind, plus diagnostics for
/// skipped junctions and other excluded measurements.
pub fn quantify_with(
    graph: &VesselGraph,
    zones: &[ZoneSpec],
    opts: &QuantifyOptions,
) -> Result<Quantification, ParamError> {
    if zones.is_empty() {
        return Err(ParamError::NoZones);
    }
    let mut seen = BTreeSet::new();
    for z in zones {
        z.check()?;
        if !seen.insert(z.zone_id) {
            return Err(ParamError::DuplicateZone(z.zone_id));
        }
    }
    let violations = graph.validate();
    if !violations.is_empty() {
        return Err(ParamError::InvalidGraph(violations));
    }

    let ids: Vec<ZoneId> = zones.iter().map(|z| z.zone_id).collect();
    let mut fv = FeatureVector::with_names(&registry(&ids));
    let mut diagnostics = Vec::new();

    for zone in zones {
        let zid = zone.zone_id;
        let clipped = zone_clip_traced(graph, zone)?;
        let g = &clipped.graph;
        let mut order: Vec<usize> = (0..g.segments.len()).collect();
        order.sort_by(|&a, &b| g.segments[a].id.cmp(&g.segments[b].id));
        let segs: Vec<&Segment> = order.iter().map(|&i| &g.segments[i]).collect();

        // per-segment tortuosity, shared by all kind selections
        let mut tort: HashMap<&str, Tortuosity> = HashMap::new();
        for s in &segs {
            match segment_tortuosity(&s.points) {
                Ok(t) => {
                    tort.insert(&s.id, t);
                }
                Err(e) => diagnostics.push(Diagnostic {
                    zone: zid,
                    code: DiagnosticCode::ZeroChord,
                    subject: s.id.clone(),
                    message: e.to_string(),
                }),
            }
        }

        // junction parameters, in junction order sorted by trunk id
        let mut jorder: Vec<usize> = (0..g.junctions.len()).collect();
        jorder.sort_by(|&a, &b| g.junctions[a].trunk.cmp(&g.junctions[b].trunk));
        let mut jparams: Vec<(VesselKind, JunctionParams)> = Vec::new();
        for &ji in &jorder {
            let trunk = &g.junctions[ji].trunk;
            let kind = g.segment(trunk).map(|s| s.kind).unwrap_or(VesselKind::Arteriole);
            match junction_geometry(g, ji) {
                Ok(geom) => {
                    let p = junction_params(&geom);
                    if let Err(issue) = p.je {
                        diagnostics.push(Diagnostic {
                            zone: zid,
                            code: DiagnosticCode::JunctionExponentMissing,
                            subject: trunk.clone(),
                            message: format!("{issue:?}"),
                        });
                    }
                    jparams.push((kind, p));
                }
                Err(message) => diagnostics.push(Diagnostic {
                    zone: zid,
                    code: DiagnosticCode::DegenerateJunction,
                    subject: trunk.clone(),
                    message,
                }),
            }
        }

        let counts = counts_of(g, &clipped.origins);

        for sel in KindSel::ALL {
            let kseg: Vec<&Segment> = segs.iter().copied().filter(|s| sel.matches(s.kind)).collect();
            let name = |p: Param| FeatureName::kinded(p, zid, sel);

            if !kseg.is_empty() {
                let raster = zone_raster(graph, zone, kseg.iter().copied());
                if let Ok(fd) = fractal_dimension(&raster, &FD_BOX_SIZES) {
                    if fd > 0.0 && fd <= 2.2 {
                        fv.set(name(Param::Fd), Some(fd));
                    } else {
                        diagnostics.push(Diagnostic {
                            zone: zid,
                            code: DiagnosticCode::FractalDimensionOutOfRange,
                            subject: format!("FD-{zid}{}", sel.suffix()),
                            message: format!("box-counting slope {fd:.4} outside (0, 2.2]"),
                        });
                    }
                }
            }

            if let Some(ws) = width_stats_of(kseg.iter().copied()) {
                fv.set(name(Param::Mw), Some(ws.mean));
                fv.set(name(Param::Stdw), Some(ws.std_dev));
                fv.set(name(Param::Ldr), Some(ws.length_to_diameter));
            }

            let ts: Vec<Tortuosity> = kseg.iter().filter_map(|s| tort.get(s.id.as_str()).copied()).collect();
            let simple: Vec<f64> = ts.iter().map(|t| t.simple).collect();
            let curv: Vec<f64> = ts.iter().map(|t| t.curvature).collect();
            fv.set(name(Param::Tort), mean(&simple));
            fv.set(name(Param::CTort), mean(&curv));

            let js: Vec<&JunctionParams> =
                jparams.iter().filter(|(k, _)| sel.matches(*k)).map(|(_, p)| p).collect();
            let col = |f: fn(&JunctionParams) -> f64| mean(&js.iter().map(|p| f(p)).collect::<Vec<_>>());
            fv.set(name(Param::Bc), col(|p| p.bc));
            fv.set(name(Param::Af), col(|p| p.af));
            fv.set(name(Param::Ba), col(|p| p.ba));
            fv.set(name(Param::Aa), col(|p| p.aa));
            let jes: Vec<f64> = js.iter().filter_map(|p| p.je.ok()).collect();
            fv.set(name(Param::Je), mean(&jes));

            let (nb, nfb) = match sel {
                KindSel::Arteriole => (counts.arteriolar_branches, counts.arteriolar_first_branches),
                KindSel::Venule => (counts.venular_branches, counts.venular_first_branches),
                KindSel::All => (counts.n_branches, counts.n_first_branches),
            };
            fv.set(name(Param::Nb), Some(nb as f64));
            fv.set(name(Param::Nfb), Some(nfb as f64));
        }

        let calibers = |kind: VesselKind| -> Option<f64> {
            let widths: Vec<f64> =
                segs.iter().filter(|s| s.kind == kind).filter_map(|s| s.mean_width()).collect();
            vessel_equivalent_with(&widths, opts.knudtson.factor(kind)).ok()
        };
        let crae = calibers(VesselKind::Arteriole);
        let crve = calibers(VesselKind::Venule);
        fv.set(FeatureName::zonal(Param::Crae, zid), crae);
        fv.set(FeatureName::zonal(Param::Crve, zid), crve);
        let ratio = match (crae, crve) {
            (Some(a), Some(v)) => avr(a, v).ok(),
            _ => None,
        };
        fv.set(FeatureName::zonal(Param::Avr, zid), ratio);
        fv.set(FeatureName::zonal(Param::Na, zid), Some(counts.n_arterioles as f64));
        fv.set(FeatureName::zonal(Param::Nv, zid), Some(counts.n_venules as f64));
    }

    Ok(Quantification { features: fv, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Hand-executed pairing for six equal widths: three pairs, then a pair
    /// plus a carried value, then the final pair.
    fn six_equal_oracle(k: f64) -> f64 {
        let r1 = k * (2.0f64).sqrt(); // each of three
        let r2_pair = k * (r1 * r1 + r1 * r1).sqrt();
        let r2_carry = r1;
        k * (r2_pair * r2_pair + r2_carry * r2_carry).sqrt()
    }

    #[test]
    fn knudtson_six_equal_widths() {
        let w = 7.0;
        let a = vessel_equivalent(&[w; 6], VesselKind::Arteriole).unwrap();
        assert!((a / w - six_equal_oracle(0.88)).abs() < 1e-12);
        assert!((a / w - 1.7485).abs() < 1e-4);
        let v = vessel_equivalent(&[w; 6], VesselKind::Venule).unwrap();
        assert!((v / w - six_equal_oracle(0.95)).abs() < 1e-12);
        assert!((v / w - 2.13761).abs() < 1e-5);
    }

    #[test]
    fn knudtson_single_and_errors() {
        assert_eq!(vessel_equivalent(&[4.2], VesselKind::Venule).unwrap(), 4.2);
        assert!(matches!(vessel_equivalent(&[], VesselKind::Venule), Err(ParamError::EmptyWidths)));
        assert!(matches!(
            vessel_equivalent(&[3.0, 0.0], VesselKind::Venule),
            Err(ParamError::NonPositiveWidth { index: 1, .. })
        ));
        // only the six largest take part
        let seven = [10.0, 9.0, 8.0, 7.0, 6.0, 5.0, 0.5];
        assert_eq!(
            vessel_equivalent(&seven, VesselKind::Arteriole).unwrap(),
            vessel_equivalent(&seven[..6], VesselKind::Arteriole).unwrap()
        );
    }

    #[test]
    fn avr_cases() {
        assert_eq!(avr(10.0, 10.0).unwrap(), 1.0);
        assert_eq!(avr(7.5, 10.0).unwrap(), 0.75);
        assert!(avr(10.0, 0.0).is_err());
    }

    #[test]
    fn junction_examples() {
        let p = junction_params(&JunctionGeometry::new(2.0, 1.0, 1.0, 30.0, 30.0).unwrap());
        assert!((p.bc - 0.5).abs() < 1e-15);
        assert_eq!(p.af, 1.0);
        assert!((p.je.unwrap() - 1.0).abs() < 1e-12);

        let d0 = 2f64.powf(1.0 / 3.0);
        let p = junction_params(&JunctionGeometry::new(d0, 1.0, 1.0, 30.0, 30.0).unwrap());
        assert!((p.bc - 2f64.powf(1.0 / 3.0)).abs() < 1e-12);
        assert!((p.je.unwrap() - 3.0).abs() < 1e-9);

        let p = junction_params(&JunctionGeometry::new(2f64.sqrt(), 1.0, 1.0, 35.0, 25.0).unwrap());
        assert!((p.je.unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(p.ba, 60.0);
        assert_eq!(p.aa, 10.0);
    }

    #[test]
    fn junction_exponent_missing_cases() {
        assert_eq!(junction_exponent(1.0, 1.0, 0.5), Err(JeIssue::TrunkNotWidest));
        // d0 >> d1 + d2: root below 0.5
        assert_eq!(junction_exponent(10.0, 1.0, 1.0), Err(JeIssue::RootBelowRange));
        // daughters almost as wide as the trunk: root above 20
        assert_eq!(junction_exponent(1.0, 0.999, 0.99), Err(JeIssue::RootAboveRange));
    }

    #[test]
    fn daughters_are_ordered_by_width() {
        let g = JunctionGeometry::new(3.0, 1.0, 2.0, 40.0, 10.0).unwrap();
        assert_eq!((g.d1, g.d2, g.theta1, g.theta2), (2.0, 1.0, 10.0, 40.0));
        assert!(JunctionGeometry::new(3.0, -1.0, 2.0, 0.0, 0.0).is_err());
        assert!(JunctionGeometry::new(3.0, 1.0, 2.0, 180.0, 0.0).is_err());
    }

    fn line_raster(len: usize) -> BinaryRaster {
        let mut r = BinaryRaster::new(1024, 1024);
        r.draw_line((10.5, 500.5), (10.5 + len as f64, 500.5));
        r
    }

    #[test]
    fn fd_of_line_and_square() {
        let fd = fractal_dimension(&line_raster(1000), &FD_BOX_SIZES).unwrap();
        assert!((0.95..=1.05).contains(&fd), "{fd}");
        let mut sq = BinaryRaster::new(1024, 1024);
        sq.fill_rect(0, 0, 1024, 1024);
        let fd = fractal_dimension(&sq, &FD_BOX_SIZES).unwrap();
        assert!((1.9..=2.0 + 1e-12).contains(&fd), "{fd}");
    }

    #[test]
    fn fd_errors() {
        let empty = BinaryRaster::new(64, 64);
        assert!(matches!(fractal_dimension(&empty, &FD_BOX_SIZES), Err(ParamError::EmptyRaster)));
        assert!(matches!(fractal_dimension(&line_raster(50), &[2, 4, 8]), Err(ParamError::TooFewBoxSizes(3))));
        assert!(matches!(fractal_dimension(&line_raster(50), &[2, 4, 8, 20]), Err(ParamError::NotGeometric(_))));
    }

    fn semicircle(r: f64, n: usize) -> Vec<Point2> {
        (0..=n)
            .map(|i| {
                let t = PI * i as f64 / n as f64;
                Point2::new(300.0 + r * t.cos(), 300.0 + r * t.sin())
            })
            .collect()
    }

    #[test]
    fn tortuosity_straight_is_zero() {
        let pts: Vec<Point2> = (0..10).map(|i| Point2::new(3.0 * i as f64, 2.0 * i as f64)).collect();
        let t = tortuosity(&pts).unwrap();
        assert!(t.simple.abs() < 1e-12);
        assert!(t.curvature.abs() < 1e-12);
    }

    #[test]
    fn tortuosity_semicircle() {
        let r = 50.0;
        let t = tortuosity(&semicircle(r, 4000)).unwrap();
        assert!((t.simple - (PI / 2.0 - 1.0)).abs() < 1e-6, "{}", t.simple);
        let rel = (t.curvature * r * r - 1.0).abs();
        assert!(rel < 1e-3, "curvature off by {rel}");
    }

    #[test]
    fn tortuosity_invariant_under_densification() {
        let pts = semicircle(40.0, 60);
        let mut dense = Vec::new();
        for w in pts.windows(2) {
            dense.push(w[0]);
            dense.push(w[0].lerp(w[1], 0.5));
        }
        dense.push(*pts.last().unwrap());
        let (a, b) = (tortuosity(&pts).unwrap(), tortuosity(&dense).unwrap());
        assert!((a.simple - b.simple).abs() < 1e-6);
        assert!((a.curvature - b.curvature).abs() < 1e-6);
    }

    #[test]
    fn tortuosity_errors() {
        let p = |x: f64, y: f64| Point2::new(x, y);
        assert!(matches!(tortuosity(&[p(0.0, 0.0), p(1.0, 0.0)]), Err(ParamError::TooFewPoints(2))));
        let loop_ = [p(0.0, 0.0), p(5.0, 0.0), p(5.0, 5.0), p(0.0, 0.0)];
        assert!(matches!(tortuosity(&loop_), Err(ParamError::ZeroChord)));
    }

    #[test]
    fn width_stats_two_samples() {
        use crate::vessel::{DiscSpec, ZoneId};
        let g = VesselGraph {
            disc: DiscSpec { center: Point2::new(500.0, 500.0), diameter: 100.0 },
            segments: vec![Segment {
                id: "a0".into(),
                kind: VesselKind::Arteriole,
                points: vec![Point2::new(610.0, 500.0), Point2::new(640.0, 500.0)],
                widths: vec![4.0, 6.0],
                parent: None,
                generation: 0,
            }],
            junctions: vec![],
            image_size: (1000, 1000),
        };
        let z = ZoneSpec::standard(ZoneId::B);
        let ws = width_stats(&g, &z, KindSel::Arteriole).unwrap().unwrap();
        assert_eq!(ws.mean, 5.0);
        assert_eq!(ws.std_dev, 1.0);
        assert!((ws.length_to_diameter - 6.0).abs() < 1e-12);
        assert_eq!(width_stats(&g, &z, KindSel::Venule).unwrap(), None);
    }
}
