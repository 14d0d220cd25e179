//! Map file parsers: lanelet2-tagged OpenStreetMap XML and OpenDrive XML.

mod opendrive;
mod osm;
mod plan_view;

use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::map::{MapError, TrafficMap};

pub use opendrive::{parse_opendrive, DEFAULT_SAMPLE_STEP};
pub use osm::{default_projection, parse_osm_lanelet2};
pub use plan_view::{sample_plan_view, stations, PlanViewSegment, SampledPose, SegmentShape};

pub const EARTH_RADIUS: f64 = 6_371_000.0;

/// Local tangent-plane (equirectangular) projection anchored at an origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub origin_lat: f64,
    pub origin_lon: f64,
    #[serde(default = "default_radius")]
    pub earth_radius: f64,
}

fn default_radius() -> f64 {
    EARTH_RADIUS
}

impl ProjectionSpec {
    pub fn new(origin_lat: f64, origin_lon: f64) -> Result<Self, MapError> {
        if !(origin_lat.is_finite() && origin_lon.is_finite()) || origin_lat.abs() >= 90.0 {
            return Err(MapError::malformed(
                "projection",
                format!("invalid origin ({origin_lat}, {origin_lon})"),
            ));
        }
        Ok(Self {
            origin_lat,
            origin_lon,
            earth_radius: EARTH_RADIUS,
        })
    }
}

pub fn project_wgs84(lat: f64, lon: f64, spec: &ProjectionSpec) -> Point2 {
    let r = spec.earth_radius;
    let lat0 = spec.origin_lat.to_radians();
    Point2::new(
        r * (lon - spec.origin_lon).to_radians() * lat0.cos(),
        r * (lat - spec.origin_lat).to_radians(),
    )
}

/// Inverse of [`project_wgs84`]; returns `(lat, lon)` in degrees.
pub fn unproject_wgs84(p: Point2, spec: &ProjectionSpec) -> (f64, f64) {
    let r = spec.earth_radius;
    let lat0 = spec.origin_lat.to_radians();
    (
        spec.origin_lat + (p.y / r).to_degrees(),
        spec.origin_lon + (p.x / (r * lat0.cos())).to_degrees(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapFormat {
    Osm,
    Xodr,
}

impl MapFormat {
    pub fn from_path(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "osm" => Some(MapFormat::Osm),
            "xodr" => Some(MapFormat::Xodr),
            _ => None,
        }
    }
}

impl std::str::FromStr for MapFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "osm" => Ok(MapFormat::Osm),
            "xodr" => Ok(MapFormat::Xodr),
            other => Err(format!(
                "unknown map format '{other}' (expected osm or xodr)"
            )),
        }
    }
}

/// Parses map text in the given format. OSM maps without an explicit origin
/// are projected around their first node.
pub fn parse_map(
    text: &str,
    format: MapFormat,
    origin: Option<(f64, f64)>,
    ds: Option<f64>,
) -> Result<TrafficMap, MapError> {
    match format {
        MapFormat::Osm => {
            let proj = match origin {
                Some((lat, lon)) => ProjectionSpec::new(lat, lon)?,
                None => default_projection(text)?,
            };
            parse_osm_lanelet2(text, &proj)
        }
        MapFormat::Xodr => parse_opendrive(text, ds.unwrap_or(DEFAULT_SAMPLE_STEP)),
    }
}

pub(crate) fn xml_document(text: &str) -> Result<roxmltree::Document<'_>, MapError> {
    roxmltree::Document::parse(text).map_err(|e| MapError::Xml(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let spec = ProjectionSpec::new(0.0, 0.0).unwrap();
        assert_eq!(project_wgs84(0.0, 0.0, &spec), Point2::ORIGIN);
        let p = project_wgs84(0.0, 0.001, &spec);
        assert!((p.x - 111.194_926_644_558_73).abs() < 1e-6 && p.y == 0.0);
        let q = project_wgs84(0.001, 0.0, &spec);
        assert!(q.x == 0.0 && (q.y - 111.194_926_644_558_73).abs() < 1e-6);
    }

    #[test]
    fn origin_validation() {
        assert!(ProjectionSpec::new(90.0, 0.0).is_err());
        assert!(ProjectionSpec::new(f64::NAN, 0.0).is_err());
        assert!(ProjectionSpec::new(49.0, 8.4).is_ok());
    }
}
