//! Choropleth export: a hex-keyed numeric layer joined to a boundary lookup
//! and written as a GeoJSON FeatureCollection of polygons.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::HexId;

pub const BOUNDARY_HEADER: &str = "hex,ring";

/// Closed, counter-clockwise `[lon, lat]` rings keyed by hex.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryTable {
    pub rings: BTreeMap<HexId, Vec<[f64; 2]>>,
}

fn malformed(source: &str, row: usize, message: impl Into<String>) -> Error {
    Error::Malformed {
        path: source.to_string(),
        row,
        message: message.into(),
    }
}

/// Twice the signed area; positive for counter-clockwise rings.
fn signed_area2(ring: &[[f64; 2]]) -> f64 {
    ring.windows(2)
        .map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1])
        .sum()
}

fn parse_ring(text: &str) -> std::result::Result<Vec<[f64; 2]>, String> {
    let mut ring = Vec::new();
    for pair in text.split(';') {
        let mut it = pair.split_whitespace();
        let (Some(lon), Some(lat), None) = (it.next(), it.next(), it.next()) else {
            return Err(format!("expected `lon lat`, found {pair:?}"));
        };
        let lon: f64 = lon.parse().map_err(|_| format!("bad longitude {lon:?}"))?;
        let lat: f64 = lat.parse().map_err(|_| format!("bad latitude {lat:?}"))?;
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(format!("position ({lon}, {lat}) out of range"));
        }
        ring.push([lon, lat]);
    }
    if ring.first() != ring.last() {
        ring.push(ring[0]);
    }
    if ring.len() < 4 {
        return Err("a ring needs at least three distinct positions".into());
    }
    let area = signed_area2(&ring);
    if area == 0.0 {
        return Err("ring has zero area".into());
    }
    if area < 0.0 {
        ring.reverse();
    }
    Ok(ring)
}

pub fn read_boundaries<R: Read>(input: R, source: &str) -> Result<BoundaryTable> {
    let mut table = BoundaryTable::default();
    let mut lines = BufReader::new(input).lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(source, e))?,
        None => String::new(),
    };
    let header = header.trim_start_matches('\u{feff}').trim_end();
    if header != BOUNDARY_HEADER {
        return Err(Error::Header {
            path: source.to_string(),
            found: header.to_string(),
            expected: BOUNDARY_HEADER.to_string(),
        });
    }
    for (i, line) in lines {
        let row = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let (hex, ring) = line
            .split_once(',')
            .ok_or_else(|| malformed(source, row, "expected `hex,ring`"))?;
        let hex = HexId::parse(hex).map_err(|e| malformed(source, row, e.to_string()))?;
        let ring = parse_ring(ring).map_err(|m| malformed(source, row, m))?;
        if table.rings.insert(hex, ring).is_some() {
            return Err(malformed(source, row, format!("duplicate hex {hex}")));
        }
    }
    Ok(table)
}

pub fn load_boundaries(path: impl AsRef<Path>) -> Result<BoundaryTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_boundaries(file, &path.display().to_string())
}

/// Reads a `hex,<value>[,...]` CSV layer, taking the second column as the
/// value.
pub fn read_layer<R: Read>(input: R, source: &str) -> Result<BTreeMap<HexId, f64>> {
    let mut layer = BTreeMap::new();
    let mut lines = BufReader::new(input).lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(source, e))?,
        None => String::new(),
    };
    if !header.trim_start_matches('\u{feff}').starts_with("hex,") {
        return Err(Error::Header {
            path: source.to_string(),
            found: header,
            expected: "hex,<value>".into(),
        });
    }
    for (i, line) in lines {
        let row = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let hex = HexId::parse(fields.next().unwrap_or_default())
            .map_err(|e| malformed(source, row, e.to_string()))?;
        let value: f64 = fields
            .next()
            .and_then(|v| v.parse().ok())
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| malformed(source, row, "missing or non-numeric value"))?;
        if layer.insert(hex, value).is_some() {
            return Err(malformed(source, row, format!("duplicate hex {hex}")));
        }
    }
    Ok(layer)
}

pub fn load_layer(path: impl AsRef<Path>) -> Result<BTreeMap<HexId, f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_layer(file, &path.display().to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeoJsonExport {
    pub collection: Value,
    pub features: usize,
    /// Layer hexes without a boundary; skipped.
    pub missing: Vec<HexId>,
}

/// One Polygon feature with properties `{hex, value}` per layer hex that
/// has a boundary, in hex order.
pub fn export_geojson(
    layer: &BTreeMap<HexId, f64>,
    boundaries: &BoundaryTable,
) -> Result<GeoJsonExport> {
    let mut features = Vec::new();
    let mut missing = Vec::new();
    for (hex, &value) in layer {
        if !value.is_finite() {
            return Err(Error::Domain(format!("value for {hex} is not finite")));
        }
        match boundaries.rings.get(hex) {
            Some(ring) => features.push(json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {"hex": hex.as_str(), "value": value},
            })),
            None => missing.push(*hex),
        }
    }
    Ok(GeoJsonExport {
        features: features.len(),
        collection: json!({"type": "FeatureCollection", "features": features}),
        missing,
    })
}

fn check_position(p: &Value) -> std::result::Result<[f64; 2], String> {
    let arr = p.as_array().ok_or("position is not an array")?;
    if arr.len() < 2 {
        return Err("position needs two numbers".into());
    }
    let lon = arr[0].as_f64().ok_or("longitude is not a number")?;
    let lat = arr[1].as_f64().ok_or("latitude is not a number")?;
    if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
        return Err(format!("position ({lon}, {lat}) out of range"));
    }
    Ok([lon, lat])
}

/// Structural check of a FeatureCollection of Polygon features: member
/// types, closed linear rings of at least four positions, counter-clockwise
/// exterior rings and in-range lon/lat. Returns the feature count.
pub fn validate_feature_collection(v: &Value) -> std::result::Result<usize, String> {
    if v.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err("top-level type is not FeatureCollection".into());
    }
    let features = v
        .get("features")
        .and_then(Value::as_array)
        .ok_or("features is not an array")?;
    for (i, f) in features.iter().enumerate() {
        let fail = |m: &str| format!("feature {i}: {m}");
        if f.get("type").and_then(Value::as_str) != Some("Feature") {
            return Err(fail("type is not Feature"));
        }
        if !f
            .get("properties")
            .is_some_and(|p| p.is_object() || p.is_null())
        {
            return Err(fail("properties must be an object or null"));
        }
        let geom = f.get("geometry").ok_or_else(|| fail("no geometry"))?;
        if geom.get("type").and_then(Value::as_str) != Some("Polygon") {
            return Err(fail("geometry is not a Polygon"));
        }
        let rings = geom
            .get("coordinates")
            .and_then(Value::as_array)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| fail("polygon has no rings"))?;
        for (r, ring) in rings.iter().enumerate() {
            let positions = ring
                .as_array()
                .ok_or_else(|| fail("ring is not an array"))?;
            let ring: Vec<[f64; 2]> = positions
                .iter()
                .map(check_position)
                .collect::<std::result::Result<_, _>>()
                .map_err(|m| fail(&m))?;
            if ring.len() < 4 || ring.first() != ring.last() {
                return Err(fail("ring is not a closed linear ring"));
            }
            if r == 0 && signed_area2(&ring) <= 0.0 {
                return Err(fail("exterior ring is not counter-clockwise"));
            }
        }
    }
    Ok(features.len())
}
