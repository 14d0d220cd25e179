//! Lanelet2-tagged OpenStreetMap XML.
//!
//! Nodes become projected points (nodes carrying `local_x`/`local_y` tags use
//! those metric coordinates directly), ways become linestrings, and relations
//! typed `lanelet`, `multipolygon` or `regulatory_element` become lanes, areas
//! and regulatory elements. Connectivity is inferred from shared boundary
//! endpoints.

use std::collections::{BTreeMap, BTreeSet};

use roxmltree::Node;

use crate::geometry::{convex_decomposition, Point2, Polyline};
use crate::map::{
    infer_adjacency, infer_successors, AreaRegion, AreaSubtype, BoundaryRef, Id, LaneDraft,
    LaneSubtype, Linestring, MapError, RegulatoryElement, RegulatoryKind, TrafficMap,
};

use super::{project_wgs84, xml_document, ProjectionSpec};

const LANELET_TAGS: &[&str] = &[
    "type",
    "subtype",
    "location",
    "one_way",
    "speed_limit",
    "junction",
    "region",
    "name",
    "turn_direction",
];

struct Member<'a> {
    kind: &'a str,
    id: Id,
    role: &'a str,
}

struct Relation<'a> {
    id: Id,
    tags: BTreeMap<String, String>,
    members: Vec<Member<'a>>,
}

fn attr_id(node: &Node, name: &str, what: &str) -> Result<Id, MapError> {
    let raw = node
        .attribute(name)
        .ok_or_else(|| MapError::malformed(what.to_string(), format!("missing '{name}'")))?;
    raw.trim()
        .parse()
        .map_err(|_| MapError::malformed(what.to_string(), format!("bad id '{raw}'")))
}

fn tags_of(node: &Node) -> BTreeMap<String, String> {
    node.children()
        .filter(|c| c.has_tag_name("tag"))
        .filter_map(|t| Some((t.attribute("k")?.to_string(), t.attribute("v")?.to_string())))
        .collect()
}

/// Projection centred on the document's first node (or the null island when empty).
pub fn default_projection(xml: &str) -> Result<ProjectionSpec, MapError> {
    let doc = xml_document(xml)?;
    let first = doc
        .root_element()
        .children()
        .find(|n| n.has_tag_name("node") && n.attribute("lat").is_some());
    match first {
        Some(n) => {
            let lat = n
                .attribute("lat")
                .and_then(|v| v.parse().ok())
                .unwrap_or(0.0);
            let lon = n
                .attribute("lon")
                .and_then(|v| v.parse().ok())
                .unwrap_or(0.0);
            ProjectionSpec::new(lat, lon)
        }
        None => ProjectionSpec::new(0.0, 0.0),
    }
}

/// Parses speed strings such as `50`, `50 km/h`, `30 mph` or `13.9 m/s`
/// (bare numbers are km/h). Returns m/s.
fn parse_speed(raw: &str) -> Option<f64> {
    let t = raw.trim().to_ascii_lowercase();
    let (num, factor) = if let Some(n) = t.strip_suffix("km/h").or_else(|| t.strip_suffix("kmh")) {
        (n, 1.0 / 3.6)
    } else if let Some(n) = t.strip_suffix("mph") {
        (n, 0.447_04)
    } else if let Some(n) = t.strip_suffix("m/s") {
        (n, 1.0)
    } else {
        (t.as_str(), 1.0 / 3.6)
    };
    let v: f64 = num.trim().parse().ok()?;
    (v.is_finite() && v > 0.0).then_some(v * factor)
}

fn lane_subtype(raw: &str) -> Option<LaneSubtype> {
    Some(match raw {
        "road" => LaneSubtype::Road,
        "highway" => LaneSubtype::Highway,
        "parking" | "parking_aisle" => LaneSubtype::ParkingAisle,
        "bicycle_lane" | "bicycle" => LaneSubtype::Bicycle,
        "crosswalk" | "walkway" => LaneSubtype::Crosswalk,
        _ => return None,
    })
}

fn area_subtype(raw: &str) -> Option<AreaSubtype> {
    Some(match raw {
        "parking_spot" | "parking" => AreaSubtype::ParkingSpot,
        "freespace" | "parking_lot" | "road" => AreaSubtype::Freespace,
        "keepout" | "building" | "vegetation" | "obstacle" => AreaSubtype::Keepout,
        _ => return None,
    })
}

pub fn parse_osm_lanelet2(xml: &str, projection: &ProjectionSpec) -> Result<TrafficMap, MapError> {
    let doc = xml_document(xml)?;
    let root = doc.root_element();
    if !root.has_tag_name("osm") {
        return Err(MapError::malformed(
            "document",
            format!(
                "root element is <{}>, expected <osm>",
                root.tag_name().name()
            ),
        ));
    }
    let mut warnings = Vec::new();
    let mut nodes: BTreeMap<Id, Point2> = BTreeMap::new();
    let mut ways: Vec<(Id, Vec<Id>, BTreeMap<String, String>)> = Vec::new();
    let mut relations: Vec<Relation> = Vec::new();

    for el in root.children().filter(|n| n.is_element()) {
        match el.tag_name().name() {
            "node" => {
                let id = attr_id(&el, "id", "node")?;
                let what = format!("node {id}");
                let tags = tags_of(&el);
                let local = tags
                    .get("local_x")
                    .zip(tags.get("local_y"))
                    .and_then(|(x, y)| Some(Point2::new(x.parse().ok()?, y.parse().ok()?)));
                let p = match local {
                    Some(p) => p,
                    None => {
                        let coord = |k: &str| -> Result<f64, MapError> {
                            el.attribute(k)
                                .and_then(|v| v.parse::<f64>().ok())
                                .filter(|v| v.is_finite())
                                .ok_or_else(|| {
                                    MapError::malformed(what.clone(), format!("bad '{k}'"))
                                })
                        };
                        project_wgs84(coord("lat")?, coord("lon")?, projection)
                    }
                };
                nodes.insert(id, p);
            }
            "way" => {
                let id = attr_id(&el, "id", "way")?;
                let refs = el
                    .children()
                    .filter(|c| c.has_tag_name("nd"))
                    .map(|c| attr_id(&c, "ref", &format!("way {id}")))
                    .collect::<Result<Vec<_>, _>>()?;
                ways.push((id, refs, tags_of(&el)));
            }
            "relation" => {
                let id = attr_id(&el, "id", "relation")?;
                let members = el
                    .children()
                    .filter(|c| c.has_tag_name("member"))
                    .map(|m| {
                        Ok(Member {
                            kind: m.attribute("type").unwrap_or(""),
                            id: attr_id(&m, "ref", &format!("relation {id}"))?,
                            role: m.attribute("role").unwrap_or(""),
                        })
                    })
                    .collect::<Result<Vec<_>, MapError>>()?;
                relations.push(Relation {
                    id,
                    tags: tags_of(&el),
                    members,
                });
            }
            "bounds" => {}
            other => warnings.push(format!("unsupported element <{other}>")),
        }
    }

    let mut linestrings: BTreeMap<Id, Linestring> = BTreeMap::new();
    for (id, refs, tags) in ways {
        let pts = refs
            .iter()
            .map(|r| {
                nodes.get(r).copied().ok_or_else(|| {
                    MapError::malformed(format!("way {id}"), format!("node {r} not found"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        match Polyline::new_dedup(pts) {
            Ok(geometry) => {
                linestrings.insert(id, Linestring { id, geometry, tags });
            }
            Err(_) => warnings.push(format!("way {id}: fewer than 2 distinct points, skipped")),
        }
    }

    let way_of = |rel: Id, member: &Member| -> Result<&Linestring, MapError> {
        linestrings.get(&member.id).ok_or_else(|| {
            MapError::malformed(
                format!("relation {rel}"),
                format!("way {} not found", member.id),
            )
        })
    };

    // first pass: regulatory elements, so lanelets can validate their references
    let mut regs: BTreeMap<Id, RegulatoryElement> = BTreeMap::new();
    let reg_ids: BTreeSet<Id> = relations
        .iter()
        .filter(|r| r.tags.get("type").map(String::as_str) == Some("regulatory_element"))
        .map(|r| r.id)
        .collect();
    for rel in relations
        .iter()
        .filter(|r| r.tags.get("type").map(String::as_str) == Some("regulatory_element"))
    {
        let elem = format!("relation {}", rel.id);
        let subtype = rel.tags.get("subtype").map(String::as_str).unwrap_or("");
        let kind = match subtype {
            "traffic_light" => RegulatoryKind::TrafficLightGroup,
            "speed_limit" => RegulatoryKind::SpeedLimit,
            "right_of_way" | "all_way_stop" => RegulatoryKind::RightOfWay,
            "turn_restriction" => RegulatoryKind::TurnRestriction,
            other => {
                warnings.push(format!(
                    "{elem}: unsupported regulatory subtype '{other}', skipped"
                ));
                continue;
            }
        };
        let mut parameters: BTreeMap<String, String> = rel
            .tags
            .iter()
            .filter(|(k, _)| k.as_str() != "type" && k.as_str() != "subtype")
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut stop_lines = Vec::new();
        let mut role_refs: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for m in &rel.members {
            match m.role {
                "ref_line" => {
                    way_of(rel.id, m)?;
                    stop_lines.push(m.id);
                }
                "refers" | "right_of_way" | "yield" | "cancels" => {
                    if m.kind == "way" {
                        way_of(rel.id, m)?;
                    }
                    role_refs.entry(m.role).or_default().push(m.id.to_string());
                }
                other => warnings.push(format!("{elem}: unsupported member role '{other}'")),
            }
        }
        for (role, ids) in role_refs {
            parameters.insert(role.to_string(), ids.join(","));
        }
        if kind == RegulatoryKind::TrafficLightGroup && stop_lines.len() != 1 {
            return Err(MapError::malformed(
                elem,
                format!(
                    "traffic light needs exactly one ref_line, found {}",
                    stop_lines.len()
                ),
            ));
        }
        if stop_lines.len() > 1 {
            warnings.push(format!(
                "{elem}: multiple ref_line members, using the first"
            ));
        }
        regs.insert(
            rel.id,
            RegulatoryElement {
                id: rel.id,
                kind,
                stop_line: stop_lines.first().copied(),
                governed_lanes: Vec::new(),
                parameters,
            },
        );
    }

    let mut lanes: Vec<LaneDraft> = Vec::new();
    let mut areas: Vec<AreaRegion> = Vec::new();
    for rel in &relations {
        let elem = format!("relation {}", rel.id);
        match rel.tags.get("type").map(String::as_str) {
            Some("lanelet") => {
                let mut left = None;
                let mut right = None;
                let mut reg_refs = Vec::new();
                for m in &rel.members {
                    match m.role {
                        "left" => left = Some(way_of(rel.id, m)?),
                        "right" => right = Some(way_of(rel.id, m)?),
                        "regulatory_element" => {
                            if !reg_ids.contains(&m.id) {
                                return Err(MapError::malformed(
                                    elem,
                                    format!("regulatory element {} not found", m.id),
                                ));
                            }
                            reg_refs.push(m.id);
                        }
                        "centerline" => {}
                        other => {
                            warnings.push(format!("{elem}: unsupported member role '{other}'"))
                        }
                    }
                }
                let left =
                    left.ok_or_else(|| MapError::malformed(elem.clone(), "missing left member"))?;
                let right = right
                    .ok_or_else(|| MapError::malformed(elem.clone(), "missing right member"))?;
                let lg = &left.geometry;
                let rg = &right.geometry;
                let same = lg.first().distance(rg.first()) + lg.last().distance(rg.last());
                let flipped = lg.first().distance(rg.last()) + lg.last().distance(rg.first());
                let mut lane = LaneDraft::new(
                    rel.id,
                    BoundaryRef::forward(left.id),
                    BoundaryRef {
                        id: right.id,
                        inverted: flipped < same,
                    },
                );
                for (k, v) in &rel.tags {
                    match k.as_str() {
                        "subtype" => match lane_subtype(v) {
                            Some(s) => lane.subtype = s,
                            None => warnings.push(format!("{elem}: unknown lanelet subtype '{v}'")),
                        },
                        "one_way" => lane.one_way = v != "no",
                        "speed_limit" => match parse_speed(v) {
                            Some(s) => lane.speed_limit = Some(s),
                            None => warnings.push(format!("{elem}: unparseable speed_limit '{v}'")),
                        },
                        "junction" => match v.parse() {
                            Ok(j) => lane.junction = Some(j),
                            Err(_) => warnings.push(format!("{elem}: non-numeric junction '{v}'")),
                        },
                        key if LANELET_TAGS.contains(&key) || key.starts_with("participant:") => {}
                        key => warnings.push(format!("{elem}: unknown tag '{key}'")),
                    }
                    if !matches!(k.as_str(), "type") {
                        lane.tags.insert(k.clone(), v.clone());
                    }
                }
                for r in reg_refs {
                    if let Some(reg) = regs.get_mut(&r) {
                        reg.governed_lanes.push(rel.id);
                    }
                }
                lanes.push(lane);
            }
            Some("multipolygon") => {
                let mut ring: Vec<Point2> = Vec::new();
                for m in &rel.members {
                    match m.role {
                        "outer" => {
                            let pts = way_of(rel.id, m)?.geometry.points();
                            append_ring_part(&mut ring, pts);
                        }
                        "inner" => {
                            warnings.push(format!("{elem}: inner rings are not supported, ignored"))
                        }
                        other => {
                            warnings.push(format!("{elem}: unsupported member role '{other}'"))
                        }
                    }
                }
                if ring.len() < 3 {
                    return Err(MapError::malformed(elem, "multipolygon without outer ring"));
                }
                let raw_sub = rel.tags.get("subtype").map(String::as_str).unwrap_or("");
                let subtype = area_subtype(raw_sub).unwrap_or_else(|| {
                    warnings.push(format!(
                        "{elem}: unknown area subtype '{raw_sub}', treated as keepout"
                    ));
                    AreaSubtype::Keepout
                });
                let outer = convex_decomposition(&ring);
                if outer.is_empty() {
                    return Err(MapError::malformed(elem, "degenerate outer ring"));
                }
                let tags = rel
                    .tags
                    .iter()
                    .filter(|(k, _)| k.as_str() != "type")
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                areas.push(AreaRegion {
                    id: rel.id,
                    outer,
                    subtype,
                    tags,
                });
            }
            Some("regulatory_element") => {}
            Some(other) => warnings.push(format!("{elem}: unsupported relation type '{other}'")),
            None => warnings.push(format!("{elem}: relation without type tag")),
        }
    }

    infer_successors(&mut lanes, &linestrings);
    infer_adjacency(&mut lanes);
    for reg in regs.values_mut() {
        reg.governed_lanes.sort_unstable();
        reg.governed_lanes.dedup();
    }
    TrafficMap::new(
        linestrings.into_values().collect(),
        lanes,
        areas,
        regs.into_values().collect(),
        warnings,
    )
}

/// Chains way geometry into a ring, reversing parts whose end joins the ring tail.
fn append_ring_part(ring: &mut Vec<Point2>, pts: &[Point2]) {
    if ring.is_empty() {
        ring.extend_from_slice(pts);
        return;
    }
    let tail = *ring.last().unwrap();
    let mut part = pts.to_vec();
    if part.last().unwrap().distance(tail) < part[0].distance(tail) {
        part.reverse();
    }
    let skip = usize::from(part[0].distance(tail) <= 1e-9);
    ring.extend_from_slice(&part[skip..]);
}
