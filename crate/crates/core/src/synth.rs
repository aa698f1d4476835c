//! Seeded synthetic fixtures with analytically known parameters: branching
//! vessel trees, Koch-curve rasters and separable feature tables.
//!
//! Random draws come from ChaCha8 streams (see [`crate::rng`]), so fixtures
//! are identical across platforms and thread counts.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::names::{registry, FeatureName, KindSel, Param};
use crate::features::table::{Disease, FeatureTable, GradeSchema, Record};
use crate::raster::BinaryRaster;
use crate::rng;
use crate::vessel::{DiscSpec, Junction, Point2, Segment, VesselGraph, VesselKind, ZoneId, ZoneSpec};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid tree spec: {0}")]
    InvalidSpec(String),
    #[error("Koch level {level} needs a canvas of at least {min} pixels, got {size}")]
    CanvasTooSmall { level: u32, size: usize, min: usize },
    #[error("Koch level must be at most 7, got {0}")]
    LevelTooHigh(u32),
    #[error("invalid dataset spec: {0}")]
    InvalidDataset(String),
}

fn d_murray() -> f64 {
    3.0
}
fn d_one() -> f64 {
    1.0
}
fn d_zero() -> f64 {
    0.0
}
fn d_waves() -> u32 {
    2
}
fn d_image() -> u32 {
    1024
}
fn d_disc() -> f64 {
    100.0
}
fn d_trunk_len() -> f64 {
    80.0
}
fn d_seg_len() -> f64 {
    60.0
}
fn d_decay() -> f64 {
    0.75
}

/// Parameters of a synthetic vessel tree. Trunks start radially at the disc
/// margin (half a disc diameter from the center), interleaving arterioles
/// and venules around the disc; every segment bifurcates until `depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSpec {
    pub n_arterioles: usize,
    pub n_venules: usize,
    pub depth: u32,
    pub trunk_width: f64,
    #[serde(default = "d_murray")]
    pub murray_exponent: f64,
    /// peak perpendicular displacement as a fraction of segment length
    #[serde(default = "d_zero")]
    pub tortuosity_amplitude: f64,
    /// half-periods of the sinusoidal displacement per segment
    #[serde(default = "d_waves")]
    pub tortuosity_waves: u32,
    /// total angle between the two daughters (degrees)
    pub branch_angle: f64,
    /// difference between the two daughters' deviation angles (degrees)
    #[serde(default = "d_zero")]
    pub angle_asymmetry: f64,
    /// narrower / wider daughter width, in (0, 1]
    #[serde(default = "d_one")]
    pub asymmetry: f64,
    pub seed: u64,
    #[serde(default = "d_image")]
    pub image_size: u32,
    #[serde(default = "d_disc")]
    pub disc_diameter: f64,
    #[serde(default = "d_trunk_len")]
    pub trunk_length: f64,
    #[serde(default = "d_seg_len")]
    pub segment_length: f64,
    #[serde(default = "d_decay")]
    pub length_decay: f64,
}

impl TreeSpec {
    pub fn new(n_arterioles: usize, n_venules: usize, depth: u32, seed: u64) -> Self {
        Self {
            n_arterioles,
            n_venules,
            depth,
            trunk_width: 12.0,
            murray_exponent: 3.0,
            tortuosity_amplitude: 0.0,
            tortuosity_waves: 2,
            branch_angle: 75.0,
            angle_asymmetry: 0.0,
            asymmetry: 1.0,
            seed,
            image_size: 1024,
            disc_diameter: 100.0,
            trunk_length: 80.0,
            segment_length: 60.0,
            length_decay: 0.75,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_arterioles == 0 || self.n_venules == 0 {
            return bad("n_arterioles and n_venules must be >= 1".into());
        }
        if self.depth > 8 {
            return bad(format!("depth {} exceeds 8", self.depth));
        }
        if !(self.trunk_width.is_finite() && self.trunk_width > 0.0) {
            return bad(format!("trunk_width {} must be positive", self.trunk_width));
        }
        if !(0.5..=20.0).contains(&self.murray_exponent) {
            return bad(format!("murray_exponent {} outside [0.5, 20]", self.murray_exponent));
        }
        if !(0.0..=1.0).contains(&self.tortuosity_amplitude) {
            return bad(format!("tortuosity_amplitude {} outside [0, 1]", self.tortuosity_amplitude));
        }
        if self.tortuosity_waves == 0 {
            return bad("tortuosity_waves must be >= 1".into());
        }
        if !(self.branch_angle > 0.0 && self.branch_angle < 180.0) {
            return bad(format!("branch_angle {} outside (0, 180)", self.branch_angle));
        }
        if !(self.angle_asymmetry >= 0.0 && self.angle_asymmetry <= self.branch_angle) {
            return bad(format!("angle_asymmetry {} outside [0, branch_angle]", self.angle_asymmetry));
        }
        if !(self.asymmetry > 0.0 && self.asymmetry <= 1.0) {
            return bad(format!("asymmetry {} outside (0, 1]", self.asymmetry));
        }
        if !(self.disc_diameter > 0.0 && self.trunk_length > 0.0 && self.segment_length > 0.0) {
            return bad("disc_diameter, trunk_length and segment_length must be positive".into());
        }
        if !(self.length_decay > 0.0 && self.length_decay < 1.0) {
            return bad(format!("length_decay {} outside (0, 1)", self.length_decay));
        }
        // farthest reach: margin + trunk + geometric series of children + wiggle
        let reach = 0.5 * self.disc_diameter
            + 1.1 * self.trunk_length
            + 1.1 * self.segment_length / (1.0 - self.length_decay)
            + self.tortuosity_amplitude * 1.1 * self.trunk_length.max(self.segment_length);
        if 2.0 * reach + 2.0 >= self.image_size as f64 {
            return bad(format!("tree reach {reach:.1} px does not fit a {} px image", self.image_size));
        }
        Ok(())
    }
}

/// An expected feature value and the construction it follows from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthEntry {
    pub value: f64,
    pub formula: String,
}

/// Per-segment construction facts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentTruth {
    pub id: String,
    pub kind: VesselKind,
    pub generation: u32,
    pub width: f64,
    pub arc_length: f64,
    pub chord: f64,
    pub arc_chord_ratio: f64,
}

/// Per-junction construction facts (wider daughter first).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JunctionTruth {
    pub trunk: String,
    pub kind: VesselKind,
    pub location: Point2,
    pub bc: f64,
    pub af: f64,
    pub je: f64,
    /// `None` for tortuous trees, whose end tangents differ from the chords
    pub ba: Option<f64>,
    pub aa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub features: BTreeMap<FeatureName, TruthEntry>,
    pub segments: Vec<SegmentTruth>,
    pub junctions: Vec<JunctionTruth>,
}

impl GroundTruth {
    pub fn get(&self, name: FeatureName) -> Option<f64> {
        self.features.get(&name).map(|e| e.value)
    }
}

/// Construction record of one segment.
#[derive(Debug, Clone)]
struct Built {
    id: String,
    kind: VesselKind,
    generation: u32,
    start: Point2,
    dir: Point2,
    len: f64,
    width: f64,
    /// peak displacement in pixels (0 = straight)
    amp: f64,
    waves: u32,
    intervals: usize,
}

impl Built {
    fn end(&self) -> Point2 {
        self.start + self.dir * self.len
    }

    fn at(&self, s: f64) -> Point2 {
        let n = Point2::new(-self.dir.y, self.dir.x);
        self.start + self.dir * s + n * (self.amp * (PI * self.waves as f64 * s / self.len).sin())
    }

    fn points(&self) -> Vec<Point2> {
        if self.amp == 0.0 {
            return vec![self.start, self.end()];
        }
        let n = self.intervals;
        let mut pts: Vec<Point2> = (0..n).map(|i| self.at(self.len * i as f64 / n as f64)).collect();
        pts.push(self.end());
        pts
    }

    /// Arc length by 64-node Gauss–Legendre quadrature of the analytic curve.
    fn arc_length(&self) -> f64 {
        if self.amp == 0.0 {
            return self.len;
        }
        let w = PI * self.waves as f64 / self.len;
        let a = self.amp * w;
        gauss_legendre_64(0.0, self.len, |s| (1.0 + (a * (w * s).cos()).powi(2)).sqrt())
    }
}

/// Nodes and weights of n-point Gauss–Legendre quadrature on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn gauss_legendre_64(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (x, w) = GL.get_or_init(|| gauss_legendre(64));
    let (h, m) = (0.5 * (b - a), 0.5 * (b + a));
    h * x.iter().zip(w).map(|(xi, wi)| wi * f(m + h * xi)).sum::<f64>()
}

fn rotate(v: Point2, deg: f64) -> Point2 {
    let (s, c) = deg.to_radians().sin_cos();
    Point2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Smallest power-of-two interval count whose polyline length is within
/// 1e-7 of the excess `arc - chord`.
fn tortuous_intervals(b: &Built, arc: f64) -> usize {
    let tol = 1e-7 * (arc - b.len);
    let mut n = 64;
    while n < 1 << 16 {
        let mut len = 0.0;
        let mut prev = b.start;
        for i in 1..=n {
            let p = if i == n { b.end() } else { b.at(b.len * i as f64 / n as f64) };
            len += prev.distance(p);
            prev = p;
        }
        if arc - len <= tol {
            break;
        }
        n *= 2;
    }
    n
}

/// Seeded vessel tree plus the parameters implied by its construction,
/// evaluated for the default zones (B and C).
pub fn generate_tree(spec: &TreeSpec) -> Result<(VesselGraph, GroundTruth), SynthError> {
    generate_tree_for_zones(spec, &ZoneSpec::default_pair())
}

pub fn generate_tree_for_zones(
    spec: &TreeSpec,
    zones: &[ZoneSpec],
) -> Result<(VesselGraph, GroundTruth), SynthError> {
    spec.validate()?;
    for z in zones {
        z.check().map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    }
    let mut rng = rng::stream(spec.seed, 0);
    let size = spec.image_size as f64;
    let disc = DiscSpec { center: Point2::new(size / 2.0, size / 2.0), diameter: spec.disc_diameter };
    let x = spec.murray_exponent;
    let r = spec.asymmetry;
    let wide_frac = (1.0 + r.powf(x)).powf(-1.0 / x);
    let theta_wide = 0.5 * (spec.branch_angle - spec.angle_asymmetry);
    let theta_narrow = 0.5 * (spec.branch_angle + spec.angle_asymmetry);
    let amp_frac = spec.tortuosity_amplitude;

    let total = spec.n_arterioles + spec.n_venules;
    let mut built: Vec<Built> = Vec::new();
    let mut junctions: Vec<(usize, [usize; 2])> = Vec::new();
    let (mut na, mut nv) = (0usize, 0usize);
    for slot in 0..total {
        // spread arterioles evenly among the slots
        let is_art = (slot + 1) * spec.n_arterioles / total > slot * spec.n_arterioles / total;
        let (kind, id) = if is_art {
            na += 1;
            (VesselKind::Arteriole, format!("a{}", na - 1))
        } else {
            nv += 1;
            (VesselKind::Venule, format!("v{}", nv - 1))
        };
        let jitter: f64 = rng.random_range(-0.25..0.25);
        let phi = 2.0 * PI * (slot as f64 + 0.5 + jitter) / total as f64;
        let dir = Point2::new(phi.cos(), phi.sin());
        let len = spec.trunk_length * rng.random_range(0.9..1.1);
        built.push(Built {
            id,
            kind,
            generation: 0,
            start: disc.center + dir * (0.5 * spec.disc_diameter),
            dir,
            len,
            width: spec.trunk_width,
            amp: amp_frac * len,
            waves: spec.tortuosity_waves,
            intervals: 1,
        });
        // breadth-first growth of this trunk's tree
        let mut frontier = vec![built.len() - 1];
        for g in 1..=spec.depth {
            let mut next = Vec::new();
            for &pi in &frontier {
                let parent = built[pi].clone();
                let wide_left: bool = rng.random();
                let sign = if wide_left { 1.0 } else { -1.0 };
                let mut kids = [0usize; 2];
                for (k, (theta, width)) in [
                    (sign * theta_wide, parent.width * wide_frac),
                    (-sign * theta_narrow, parent.width * wide_frac * r),
                ]
                .into_iter()
                .enumerate()
                {
                    let len = spec.segment_length
                        * spec.length_decay.powi(g as i32 - 1)
                        * rng.random_range(0.9..1.1);
                    built.push(Built {
                        id: format!("{}.{}", parent.id, k + 1),
                        kind: parent.kind,
                        generation: g,
                        start: parent.end(),
                        dir: rotate(parent.dir, theta),
                        len,
                        width,
                        amp: amp_frac * len,
                        waves: spec.tortuosity_waves,
                        intervals: 1,
                    });
                    kids[k] = built.len() - 1;
                }
                junctions.push((pi, kids));
                next.extend(kids);
            }
            frontier = next;
        }
    }

    let mut seg_truth = Vec::with_capacity(built.len());
    for b in &mut built {
        let arc = b.arc_length();
        if b.amp > 0.0 {
            b.intervals = tortuous_intervals(b, arc);
        }
        seg_truth.push(SegmentTruth {
            id: b.id.clone(),
            kind: b.kind,
            generation: b.generation,
            width: b.width,
            arc_length: arc,
            chord: b.len,
            arc_chord_ratio: arc / b.len,
        });
    }

    let graph = VesselGraph {
        disc,
        segments: built
            .iter()
            .map(|b| {
                let points = b.points();
                Segment {
                    id: b.id.clone(),
                    kind: b.kind,
                    widths: vec![b.width; points.len()],
                    points,
                    parent: junctions
                        .iter()
                        .find(|(_, kids)| kids.iter().any(|&k| built[k].id == b.id))
                        .map(|(p, _)| built[*p].id.clone()),
                    generation: b.generation,
                }
            })
            .collect(),
        junctions: junctions
            .iter()
            .map(|&(p, [k1, k2])| Junction {
                location: built[p].end(),
                trunk: built[p].id.clone(),
                daughters: [built[k1].id.clone(), built[k2].id.clone()],
            })
            .collect(),
        image_size: (spec.image_size, spec.image_size),
    };

    let straight = amp_frac == 0.0;
    let jt: Vec<JunctionTruth> = junctions
        .iter()
        .map(|&(p, _)| JunctionTruth {
            trunk: built[p].id.clone(),
            kind: built[p].kind,
            location: built[p].end(),
            bc: (1.0 + r * r) * (1.0 + r.powf(x)).powf(-2.0 / x),
            af: r * r,
            je: x,
            ba: straight.then_some(spec.branch_angle),
            aa: straight.then_some(spec.angle_asymmetry),
        })
        .collect();

    let mut features = BTreeMap::new();
    for zone in zones {
        zone_truth(&built, &jt, &disc, zone, &mut features);
    }
    Ok((graph, GroundTruth { features, segments: seg_truth, junctions: jt }))
}

/// Parameter intervals `[t0, t1] ⊂ [0, 1]` of the straight segment `a -> b`
/// lying inside the closed annulus, solved on the line/circle quadratic.
fn annulus_intervals(a: Point2, b: Point2, c: Point2, r_in: f64, r_out: f64) -> Vec<(f64, f64)> {
    let inside_circle = |r: f64| -> Option<(f64, f64)> {
        let d = b - a;
        let f = a - c;
        let qa = d.x * d.x + d.y * d.y;
        let qb = d.x * f.x + d.y * f.y;
        let qc = f.x * f.x + f.y * f.y - r * r;
        let disc = qb * qb - qa * qc;
        if disc <= 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let (t0, t1) = ((-qb - sq) / qa, (-qb + sq) / qa);
        let (lo, hi) = (t0.max(0.0), t1.min(1.0));
        (lo < hi).then_some((lo, hi))
    };
    let Some((o0, o1)) = inside_circle(r_out) else { return vec![] };
    let mut out = Vec::new();
    match inside_circle(r_in) {
        None => out.push((o0, o1)),
        Some((i0, i1)) => {
            if i0 > o0 {
                out.push((o0, i0.min(o1)));
            }
            if i1 < o1 {
                out.push((i1.max(o0), o1));
            }
        }
    }
    out.retain(|(s, e)| e - s > 1e-12);
    out
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn zone_truth(
    built: &[Built],
    jt: &[JunctionTruth],
    disc: &DiscSpec,
    zone: &ZoneSpec,
    out: &mut BTreeMap<FeatureName, TruthEntry>,
) {
    let zid = zone.zone_id;
    let (r_in, r_out) = (zone.inner_radius * disc.diameter, zone.outer_radius * disc.diameter);
    let c = disc.center;

    // pieces: (kind, generation, original index, length, width samples, tort)
    struct Piece {
        kind: VesselKind,
        generation: u32,
        origin: usize,
        length: f64,
        width: f64,
        samples: usize,
        tort: f64,
    }
    let mut pieces = Vec::new();
    let mut tortuous_ok = true;
    for (i, b) in built.iter().enumerate() {
        if b.amp == 0.0 {
            for (t0, t1) in annulus_intervals(b.start, b.end(), c, r_in, r_out) {
                pieces.push(Piece {
                    kind: b.kind,
                    generation: b.generation,
                    origin: i,
                    length: (t1 - t0) * b.len,
                    width: b.width,
                    samples: 2,
                    tort: 0.0,
                });
            }
        } else {
            // analytic samples decide whether the curve lies wholly inside
            let margin = 1e-6 * disc.diameter;
            let radii: Vec<f64> = (0..=4096).map(|k| (b.at(b.len * k as f64 / 4096.0) - c).norm()).collect();
            let inside = radii.iter().all(|&rr| rr >= r_in + margin && rr <= r_out - margin);
            let outside = radii.iter().all(|&rr| rr < r_in - margin || rr > r_out + margin)
                && (radii.iter().all(|&rr| rr < r_in) || radii.iter().all(|&rr| rr > r_out));
            if inside {
                let arc = b.arc_length();
                pieces.push(Piece {
                    kind: b.kind,
                    generation: b.generation,
                    origin: i,
                    length: arc,
                    width: b.width,
                    samples: b.intervals + 1,
                    tort: arc / b.len - 1.0,
                });
            } else if !outside {
                tortuous_ok = false;
            }
        }
    }

    let mut put = |name: FeatureName, value: Option<f64>, formula: &str| {
        if let Some(value) = value {
            out.insert(name, TruthEntry { value, formula: formula.to_string() });
        }
    };

    for sel in KindSel::ALL {
        let name = |p: Param| FeatureName::kinded(p, zid, sel);
        let js: Vec<&JunctionTruth> = jt
            .iter()
            .filter(|j| sel.matches(j.kind))
            .filter(|j| {
                let rr = (j.location - c).norm();
                rr >= r_in && rr <= r_out
            })
            .collect();
        put(name(Param::Bc), mean(&js.iter().map(|j| j.bc).collect::<Vec<_>>()), "(1+r^2)(1+r^x)^(-2/x)");
        put(name(Param::Af), mean(&js.iter().map(|j| j.af).collect::<Vec<_>>()), "r^2");
        put(name(Param::Je), mean(&js.iter().map(|j| j.je).collect::<Vec<_>>()), "x (Murray exponent)");
        if js.iter().all(|j| j.ba.is_some()) {
            put(name(Param::Ba), mean(&js.iter().filter_map(|j| j.ba).collect::<Vec<_>>()), "branch_angle");
            put(name(Param::Aa), mean(&js.iter().filter_map(|j| j.aa).collect::<Vec<_>>()), "angle_asymmetry");
        }
        if !tortuous_ok {
            continue;
        }
        let ks: Vec<&Piece> = pieces.iter().filter(|p| sel.matches(p.kind)).collect();
        let n: usize = ks.iter().map(|p| p.samples).sum();
        if n > 0 {
            let mw = ks.iter().map(|p| p.width * p.samples as f64).sum::<f64>() / n as f64;
            let var = ks.iter().map(|p| (p.width - mw).powi(2) * p.samples as f64).sum::<f64>() / n as f64;
            put(name(Param::Mw), Some(mw), "sample-weighted mean of constant segment widths");
            put(name(Param::Stdw), Some(var.sqrt()), "population SD of width samples");
            put(
                name(Param::Ldr),
                mean(&ks.iter().map(|p| p.length / p.width).collect::<Vec<_>>()),
                "mean of in-zone length / width",
            );
            put(
                name(Param::Tort),
                mean(&ks.iter().map(|p| p.tort).collect::<Vec<_>>()),
                "mean of arc/chord - 1 (Gauss-Legendre arc)",
            );
        }
        let nb = js.len() as f64;
        let nfb = js.iter().filter(|j| built.iter().any(|b| b.id == j.trunk && b.generation == 0)).count();
        put(name(Param::Nb), Some(nb), "junctions located in the zone");
        put(name(Param::Nfb), Some(nfb as f64), "junctions on a trunk located in the zone");
    }
    if tortuous_ok {
        for (param, kind) in [(Param::Na, VesselKind::Arteriole), (Param::Nv, VesselKind::Venule)] {
            let mut trunks: Vec<usize> =
                pieces.iter().filter(|p| p.kind == kind && p.generation == 0).map(|p| p.origin).collect();
            trunks.dedup();
            put(FeatureName::zonal(param, zid), Some(trunks.len() as f64), "trunks crossing the zone");
        }
    }
}

// ---------------------------------------------------------------------------
// Rasters
// ---------------------------------------------------------------------------

const KOCH_MARGIN: usize = 8;

/// Koch curve of the given level drawn with a 1-pixel stroke across a
/// `size` x `size` canvas. Each generator edge must span at least 2 pixels.
pub fn koch_raster(level: u32, size: usize) -> Result<BinaryRaster, SynthError> {
    if level > 7 {
        return Err(SynthError::LevelTooHigh(level));
    }
    let min = (2 * 3usize.pow(level) + 2 * KOCH_MARGIN).max(256);
    if size < min {
        return Err(SynthError::CanvasTooSmall { level, size, min });
    }
    let span = (size - 2 * KOCH_MARGIN) as f64;
    let y0 = KOCH_MARGIN as f64 + span * (0.5 + 3f64.sqrt() / 12.0);
    let mut pts = vec![(KOCH_MARGIN as f64, y0), (KOCH_MARGIN as f64 + span, y0)];
    let (s60, c60) = (-(PI / 3.0).sin(), (PI / 3.0).cos());
    for _ in 0..level {
        let mut next = Vec::with_capacity(pts.len() * 4);
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let d = ((b.0 - a.0) / 3.0, (b.1 - a.1) / 3.0);
            let p1 = (a.0 + d.0, a.1 + d.1);
            let p3 = (a.0 + 2.0 * d.0, a.1 + 2.0 * d.1);
            let peak = (p1.0 + c60 * d.0 - s60 * d.1, p1.1 + s60 * d.0 + c60 * d.1);
            next.extend([a, p1, peak, p3]);
        }
        next.push(*pts.last().unwrap());
        pts = next;
    }
    let mut r = BinaryRaster::new(size, size);
    for w in pts.windows(2) {
        r.draw_line(w[0], w[1]);
    }
    Ok(r)
}

/// Canvas with a filled `side` x `side` square at the origin.
pub fn filled_square(size: usize, side: usize) -> BinaryRaster {
    let mut r = BinaryRaster::new(size, size);
    r.fill_rect(0, 0, side, side);
    r
}

// ---------------------------------------------------------------------------
// Feature tables
// ---------------------------------------------------------------------------

/// Class sizes of the diabetic-retinopathy training split (grades 0-4).
pub const DR_TRAIN_COUNTS: [usize; 5] = [52, 20, 51, 40, 32];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    /// records per class; the class count is its length (2 to 5)
    pub class_counts: Vec<usize>,
    pub n_features: usize,
    pub separation: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn balanced(n_per_class: usize, n_classes: usize, n_features: usize, separation: f64, seed: u64) -> Self {
        Self { class_counts: vec![n_per_class; n_classes], n_features, separation, seed }
    }
}

/// Gaussian class clusters (unit variance) whose means sit on a regular
/// polygon with adjacent spacing `separation`, inside a random 2-D subspace;
/// the orthogonal directions carry pure noise. Columns use the first
/// `n_features` names of the default registry and labels use the DR schema.
pub fn make_separable_dataset(spec: &DatasetSpec) -> Result<FeatureTable, SynthError> {
    let k = spec.class_counts.len();
    let names = registry(&[ZoneId::B, ZoneId::C]);
    if !(2..=5).contains(&k) {
        return Err(SynthError::InvalidDataset(format!("need 2 to 5 classes, got {k}")));
    }
    if spec.n_features < 2 || spec.n_features > names.len() {
        return Err(SynthError::InvalidDataset(format!(
            "n_features must lie in [2, {}], got {}",
            names.len(),
            spec.n_features
        )));
    }
    if !(spec.separation >= 0.0 && spec.separation.is_finite()) {
        return Err(SynthError::InvalidDataset(format!("separation {} must be >= 0", spec.separation)));
    }
    let p = spec.n_features;
    let mut rng = rng::stream(spec.seed, 0);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };

    // orthonormal pair spanning the informative plane
    let mut u: Vec<f64> = (0..p).map(|_| gauss()).collect();
    let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= nu);
    let mut w: Vec<f64> = (0..p).map(|_| gauss()).collect();
    let dot: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
    w.iter_mut().zip(&u).for_each(|(b, a)| *b -= dot * a);
    let nw = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.iter_mut().for_each(|v| *v /= nw);

    let radius = spec.separation / (2.0 * (PI / k as f64).sin());
    let mut table = FeatureTable::new(GradeSchema::new(Disease::Dr), names[..p].to_vec());
    for (class, &count) in spec.class_counts.iter().enumerate() {
        let ang = 2.0 * PI * class as f64 / k as f64;
        let (a, b) = (radius * ang.cos(), radius * ang.sin());
        let mut crng = rng::stream(spec.seed, 1 + class as u64);
        for i in 0..count {
            let row: Vec<Option<f64>> = (0..p)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut crng);
                    Some(a * u[j] + b * w[j] + z)
                })
                .collect();
            table
                .push(Record::new(format!("syn-{class}-{i:03}"), class as u8, row))
                .map_err(|e| SynthError::InvalidDataset(e.to_string()))?;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let v = gauss_legendre_64(0.0, 2.0, |x| x.powi(9));
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-10);
        let (_, w) = gauss_legendre(64);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn straight_tree_is_valid_and_deterministic() {
        let spec = TreeSpec::new(2, 3, 3, 11);
        let (g1, gt) = generate_tree(&spec).unwrap();
        let (g2, _) = generate_tree(&spec).unwrap();
        assert!(g1.validate().is_empty(), "{:?}", g1.validate());
        assert_eq!(g1.to_json(), g2.to_json());
        assert_eq!(g1.segments.len(), 5 * 15);
        assert!(gt.segments.iter().all(|s| s.arc_chord_ratio == 1.0));
        assert!(gt.features.keys().all(|n| registry(&[ZoneId::B, ZoneId::C]).contains(n)));
    }

    #[test]
    fn murray_truth_for_symmetric_daughters() {
        let (_, gt) = generate_tree(&TreeSpec::new(1, 1, 2, 5)).unwrap();
        for j in &gt.junctions {
            assert_eq!(j.je, 3.0);
            assert!((j.bc - 2f64.powf(1.0 / 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn tortuous_tree_arc_is_accurate() {
        let mut spec = TreeSpec::new(1, 1, 1, 2);
        spec.tortuosity_amplitude = 0.05;
        let (g, gt) = generate_tree(&spec).unwrap();
        assert!(g.validate().is_empty());
        for (s, t) in g.segments.iter().zip(&gt.segments) {
            let excess = t.arc_length - t.chord;
            assert!(excess > 0.0);
            assert!((t.arc_length - s.length()).abs() <= 1e-7 * excess);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = TreeSpec::new(0, 1, 1, 0);
        assert!(generate_tree(&s).is_err());
        s.n_arterioles = 1;
        s.trunk_width = 0.0;
        assert!(generate_tree(&s).is_err());
    }

    #[test]
    fn koch_guards() {
        assert!(koch_raster(8, 4096).is_err());
        assert!(matches!(koch_raster(6, 1024), Err(SynthError::CanvasTooSmall { .. })));
        assert!(koch_raster(0, 256).unwrap().count() > 200);
    }

    #[test]
    fn dataset_shape_and_determinism() {
        let spec = DatasetSpec { class_counts: DR_TRAIN_COUNTS.to_vec(), n_features: 10, separation: 6.0, seed: 3 };
        let t = make_separable_dataset(&spec).unwrap();
        assert_eq!(t.class_counts(None), DR_TRAIN_COUNTS.to_vec());
        assert_eq!(t, make_separable_dataset(&spec).unwrap());
    }
}
