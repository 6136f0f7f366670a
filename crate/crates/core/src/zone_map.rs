//! The cell map: named polygonal organelle zones on a bounded sheet, with a
//! single background zone covering everything else.
//!
//! Coordinates are millimetres with the origin at the top-left corner of the
//! landscape sheet, x to the right and y downwards. Polygon winding is judged
//! by the sign of the shoelace area computed directly on those coordinates
//! (positive = counter-clockwise).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, Containment, Vec2};

pub const MAP_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("map parse error: {0}")]
    Parse(String),
    #[error("map validation error: {0}")]
    Validation(String),
    #[error("point ({x}, {y}) is outside the map bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("unknown zone id {0:?}")]
    UnknownZone(String),
    #[error("background has no centroid (zone {0:?})")]
    BackgroundHasNoCentroid(String),
}

fn invalid(msg: impl Into<String>) -> MapError {
    MapError::Validation(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneKind {
    Organelle,
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub kind: ZoneKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polygon: Vec<Vec2>,
    pub color: [u8; 3],
    #[serde(default)]
    pub info_text: String,
}

impl Zone {
    pub fn is_organelle(&self) -> bool {
        self.kind == ZoneKind::Organelle
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MapFile {
    version: u32,
    width_mm: f64,
    height_mm: f64,
    zones: Vec<Zone>,
}

/// A validated, immutable cell map.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneMap {
    width_mm: f64,
    height_mm: f64,
    zones: Vec<Zone>,
    background_zone_id: String,
    background_target: Vec2,
}

impl ZoneMap {
    /// Parses and validates a map document.
    pub fn load(document: &[u8]) -> Result<ZoneMap, MapError> {
        let text = std::str::from_utf8(document).map_err(|e| MapError::Parse(e.to_string()))?;
        let file: MapFile = serde_json::from_str(text).map_err(|e| MapError::Parse(e.to_string()))?;
        Self::from_parts(file.version, file.width_mm, file.height_mm, file.zones)
    }

    /// The map shipped with the crate.
    pub fn default_map() -> ZoneMap {
        Self::load(crate::DEFAULT_MAP_JSON.as_bytes()).expect("packaged map is valid")
    }

    pub fn from_zones(width_mm: f64, height_mm: f64, zones: Vec<Zone>) -> Result<ZoneMap, MapError> {
        Self::from_parts(MAP_FORMAT_VERSION, width_mm, height_mm, zones)
    }

    fn from_parts(version: u32, width_mm: f64, height_mm: f64, mut zones: Vec<Zone>) -> Result<ZoneMap, MapError> {
        if version != MAP_FORMAT_VERSION {
            return Err(invalid(format!("unsupported map version {version}")));
        }
        if !(width_mm.is_finite() && height_mm.is_finite() && width_mm > 0.0 && height_mm > 0.0) {
            return Err(invalid("map dimensions must be finite and positive"));
        }
        for z in &mut zones {
            if z.name.is_empty() {
                z.name = z.id.clone();
            }
        }
        validate_zones(width_mm, height_mm, &zones)?;
        let background_zone_id = zones
            .iter()
            .find(|z| z.kind == ZoneKind::Background)
            .map(|z| z.id.clone())
            .expect("validated");
        let mut map = ZoneMap {
            width_mm,
            height_mm,
            zones,
            background_zone_id,
            background_target: Vec2::ZERO,
        };
        map.background_target = map.compute_background_target();
        Ok(map)
    }

    pub fn width_mm(&self) -> f64 {
        self.width_mm
    }

    pub fn height_mm(&self) -> f64 {
        self.height_mm
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn organelles(&self) -> impl Iterator<Item = &Zone> {
        self.zones.iter().filter(|z| z.is_organelle())
    }

    pub fn background_zone_id(&self) -> &str {
        &self.background_zone_id
    }

    pub fn zone(&self, id: &str) -> Option<&Zone> {
        self.zones.iter().find(|z| z.id == id)
    }

    pub fn contains_zone(&self, id: &str) -> bool {
        self.zone(id).is_some()
    }

    pub fn in_bounds(&self, p: Vec2) -> bool {
        p.is_finite() && (0.0..=self.width_mm).contains(&p.x_mm) && (0.0..=self.height_mm).contains(&p.y_mm)
    }

    pub fn clamp_to_bounds(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x_mm.clamp(0.0, self.width_mm), p.y_mm.clamp(0.0, self.height_mm))
    }

    /// Zone containing `p`. Boundaries belong to the organelle; the first
    /// organelle in file order wins on a shared boundary.
    pub fn locate(&self, p: Vec2) -> Result<&str, MapError> {
        if !self.in_bounds(p) {
            return Err(MapError::OutOfBounds { x: p.x_mm, y: p.y_mm });
        }
        Ok(self
            .organelles()
            .find(|z| geom::contains(&z.polygon, p) != Containment::Outside)
            .map(|z| z.id.as_str())
            .unwrap_or(&self.background_zone_id))
    }

    pub fn zone_centroid(&self, zone_id: &str) -> Result<Vec2, MapError> {
        let zone = self.zone(zone_id).ok_or_else(|| MapError::UnknownZone(zone_id.to_string()))?;
        match zone.kind {
            ZoneKind::Organelle => Ok(geom::polygon_centroid(&zone.polygon)),
            ZoneKind::Background => Err(MapError::BackgroundHasNoCentroid(zone_id.to_string())),
        }
    }

    /// A representative point to steer toward: the centroid for organelles,
    /// and for the background the point that stays furthest from every
    /// organelle and every sheet edge.
    pub fn target_point(&self, zone_id: &str) -> Result<Vec2, MapError> {
        match self.zone_centroid(zone_id) {
            Err(MapError::BackgroundHasNoCentroid(_)) => Ok(self.background_target),
            other => other,
        }
    }

    fn compute_background_target(&self) -> Vec2 {
        const STEP_MM: f64 = 2.5;
        let nx = (self.width_mm / STEP_MM).floor() as usize;
        let ny = (self.height_mm / STEP_MM).floor() as usize;
        let mut best = (f64::NEG_INFINITY, Vec2::new(self.width_mm / 2.0, self.height_mm / 2.0));
        for i in 1..nx {
            for j in 1..ny {
                let p = Vec2::new(i as f64 * STEP_MM, j as f64 * STEP_MM);
                let mut clearance = p
                    .x_mm
                    .min(p.y_mm)
                    .min(self.width_mm - p.x_mm)
                    .min(self.height_mm - p.y_mm);
                for z in self.organelles() {
                    if geom::contains(&z.polygon, p) != Containment::Outside {
                        clearance = f64::NEG_INFINITY;
                        break;
                    }
                    let n = z.polygon.len();
                    for k in 0..n {
                        clearance = clearance.min(geom::segment_distance(p, z.polygon[k], z.polygon[(k + 1) % n]));
                    }
                }
                if clearance > best.0 {
                    best = (clearance, p);
                }
            }
        }
        best.1
    }

    /// Serializes back to the map file schema.
    pub fn to_json(&self) -> String {
        let file = MapFile {
            version: MAP_FORMAT_VERSION,
            width_mm: self.width_mm,
            height_mm: self.height_mm,
            zones: self.zones.clone(),
        };
        serde_json::to_string_pretty(&file).expect("map serializes")
    }
}

fn is_snake_id(id: &str) -> bool {
    let mut chars = id.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
}

fn validate_zones(width: f64, height: f64, zones: &[Zone]) -> Result<(), MapError> {
    let mut seen = std::collections::BTreeSet::new();
    for z in zones {
        if !is_snake_id(&z.id) {
            return Err(invalid(format!("zone id {:?} is not a lowercase snake identifier", z.id)));
        }
        if !seen.insert(z.id.as_str()) {
            return Err(invalid(format!("duplicate zone id {:?}", z.id)));
        }
    }
    match zones.iter().filter(|z| z.kind == ZoneKind::Background).count() {
        0 => return Err(invalid("no background zone")),
        1 => {}
        n => return Err(invalid(format!("expected exactly one background zone, found {n}"))),
    }
    for z in zones {
        match z.kind {
            ZoneKind::Background if !z.polygon.is_empty() => {
                return Err(invalid(format!("background zone {:?} must not have a polygon", z.id)));
            }
            ZoneKind::Background => {}
            ZoneKind::Organelle => validate_polygon(width, height, z)?,
        }
    }
    let organelles: Vec<&Zone> = zones.iter().filter(|z| z.is_organelle()).collect();
    for (i, a) in organelles.iter().enumerate() {
        for b in &organelles[i + 1..] {
            if polygons_overlap(&a.polygon, &b.polygon) {
                return Err(invalid(format!("zones overlap: {:?} and {:?}", a.id, b.id)));
            }
        }
    }
    Ok(())
}

fn validate_polygon(width: f64, height: f64, z: &Zone) -> Result<(), MapError> {
    let poly = &z.polygon;
    let n = poly.len();
    if n < 3 {
        return Err(invalid(format!("zone {:?} polygon needs at least 3 vertices", z.id)));
    }
    for v in poly {
        if !v.is_finite() {
            return Err(invalid(format!("zone {:?} has a non-finite vertex", z.id)));
        }
        if v.x_mm < 0.0 || v.x_mm > width || v.y_mm < 0.0 || v.y_mm > height {
            return Err(invalid(format!(
                "zone {:?} vertex ({}, {}) out of bounds",
                z.id, v.x_mm, v.y_mm
            )));
        }
    }
    for i in 0..n {
        if poly[i] == poly[(i + 1) % n] {
            return Err(invalid(format!("zone {:?} has a repeated vertex", z.id)));
        }
    }
    // Simplicity: non-adjacent edges must be disjoint, adjacent edges may
    // only share their common vertex.
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in i + 1..n {
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let bad = if adjacent {
                let (far_a, far_b) = if j == i + 1 { (a, d) } else { (b, c) };
                geom::on_segment(far_b, a, b) || geom::on_segment(far_a, c, d)
            } else {
                geom::segments_intersect(a, b, c, d)
            };
            if bad {
                return Err(invalid(format!("zone {:?} polygon is self-intersecting", z.id)));
            }
        }
    }
    if geom::signed_area2(poly) <= 0.0 {
        return Err(invalid(format!(
            "zone {:?} has bad winding (vertices must be counter-clockwise)",
            z.id
        )));
    }
    Ok(())
}

/// Interior overlap between two simple polygons. Touching along edges or at
/// vertices is allowed.
fn polygons_overlap(a: &[Vec2], b: &[Vec2]) -> bool {
    let (na, nb) = (a.len(), b.len());
    for i in 0..na {
        for j in 0..nb {
            if geom::segments_cross_properly(a[i], a[(i + 1) % na], b[j], b[(j + 1) % nb]) {
                return true;
            }
        }
    }
    probe_inside(a, b) || probe_inside(b, a)
}

/// Whether any probe point of `src` (vertices, edge midpoints, and points
/// just inside each edge) lies strictly inside `dst`.
fn probe_inside(src: &[Vec2], dst: &[Vec2]) -> bool {
    let n = src.len();
    let strictly = |p: Vec2| geom::contains(dst, p) == Containment::Inside;
    (0..n).any(|i| {
        let (p, q) = (src[i], src[(i + 1) % n]);
        let mid = (p + q) * 0.5;
        let edge = q - p;
        // Left normal points into a counter-clockwise polygon.
        let inward = Vec2::new(-edge.y_mm, edge.x_mm) * (1e-6 / edge.norm());
        strictly(p) || strictly(mid) || strictly(mid + inward)
    })
}
