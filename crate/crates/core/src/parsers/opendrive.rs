//! OpenDrive XML subset: plan view, lane sections with cubic widths, lane and
//! road links, junction connections and signals.
//!
//! Identifiers in the output map are generated sequentially in document order
//! from a single counter; source identifiers are kept in tags
//! (`source_road`, `section`, `source_lane`).

use std::collections::BTreeMap;

use roxmltree::Node;

use crate::geometry::{Point2, Polyline, Pose2};
use crate::map::{
    infer_adjacency, BoundaryRef, Id, LaneDraft, LaneSubtype, Linestring, MapError,
    RegulatoryElement, RegulatoryKind, TrafficMap,
};

use super::plan_view::{stations, PlanViewSegment, SegmentShape};
use super::xml_document;

pub const DEFAULT_SAMPLE_STEP: f64 = 0.5;

/// Cubic record `a + b·t + c·t² + d·t³` with `t` measured from `start`.
#[derive(Debug, Clone, Copy)]
struct CubicRecord {
    start: f64,
    coeffs: [f64; 4],
}

fn eval_records(records: &[CubicRecord], s: f64) -> f64 {
    let Some(r) = records
        .iter()
        .rev()
        .find(|r| r.start <= s + 1e-9)
        .or(records.first())
    else {
        return 0.0;
    };
    let t = s - r.start;
    let c = r.coeffs;
    c[0] + t * (c[1] + t * (c[2] + t * c[3]))
}

#[derive(Debug)]
struct LaneRecord {
    id: i64,
    kind: String,
    widths: Vec<CubicRecord>,
    speed: Option<f64>,
    predecessor: Option<i64>,
    successor: Option<i64>,
}

#[derive(Debug)]
struct Section {
    s: f64,
    left: Vec<LaneRecord>,
    right: Vec<LaneRecord>,
}

#[derive(Debug, Clone)]
struct RoadLink {
    element_type: String,
    element_id: String,
    contact_end: bool,
}

#[derive(Debug)]
struct Signal {
    s: f64,
    source_id: String,
    orientation: String,
    attributes: BTreeMap<String, String>,
}

#[derive(Debug)]
struct Road {
    id: String,
    length: f64,
    junction: Option<String>,
    kind: Option<String>,
    speed: Option<f64>,
    predecessor: Option<RoadLink>,
    successor: Option<RoadLink>,
    geometry: Vec<PlanViewSegment>,
    offsets: Vec<CubicRecord>,
    sections: Vec<Section>,
    signals: Vec<Signal>,
}

#[derive(Debug)]
struct Connection {
    incoming: String,
    connecting: String,
    contact_end: bool,
    links: Vec<(i64, i64)>,
}

fn attr<'a>(node: &Node<'a, '_>, name: &str, elem: &str) -> Result<&'a str, MapError> {
    node.attribute(name)
        .ok_or_else(|| MapError::malformed(elem.to_string(), format!("missing '{name}'")))
}

fn num(node: &Node, name: &str, elem: &str) -> Result<f64, MapError> {
    let raw = attr(node, name, elem)?;
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            MapError::malformed(
                elem.to_string(),
                format!("non-finite or invalid '{name}' = '{raw}'"),
            )
        })
}

fn num_or(node: &Node, name: &str, default: f64, elem: &str) -> Result<f64, MapError> {
    if node.attribute(name).is_some() {
        num(node, name, elem)
    } else {
        Ok(default)
    }
}

fn int(node: &Node, name: &str, elem: &str) -> Result<i64, MapError> {
    let raw = attr(node, name, elem)?;
    raw.trim().parse().map_err(|_| {
        MapError::malformed(
            elem.to_string(),
            format!("invalid integer '{name}' = '{raw}'"),
        )
    })
}

fn cubic_record(node: &Node, start_attr: &str, elem: &str) -> Result<CubicRecord, MapError> {
    Ok(CubicRecord {
        start: num_or(node, start_attr, 0.0, elem)?,
        coeffs: [
            num_or(node, "a", 0.0, elem)?,
            num_or(node, "b", 0.0, elem)?,
            num_or(node, "c", 0.0, elem)?,
            num_or(node, "d", 0.0, elem)?,
        ],
    })
}

fn speed_mps(node: &Node, elem: &str) -> Result<Option<f64>, MapError> {
    if node.attribute("max").is_none() {
        return Ok(None);
    }
    let raw = attr(node, "max", elem)?;
    if raw == "no limit" || raw == "undefined" {
        return Ok(None);
    }
    let v = num(node, "max", elem)?;
    let factor = match node.attribute("unit").unwrap_or("m/s") {
        "km/h" => 1.0 / 3.6,
        "mph" => 0.447_04,
        _ => 1.0,
    };
    Ok((v > 0.0).then_some(v * factor))
}

fn road_link(node: &Node) -> Option<RoadLink> {
    Some(RoadLink {
        element_type: node.attribute("elementType").unwrap_or("road").to_string(),
        element_id: node.attribute("elementId")?.to_string(),
        contact_end: node.attribute("contactPoint") == Some("end"),
    })
}

fn parse_geometry(
    node: &Node,
    elem: &str,
    warnings: &mut Vec<String>,
) -> Result<Option<PlanViewSegment>, MapError> {
    let s_offset = num(node, "s", elem)?;
    let start = Pose2::new(
        num(node, "x", elem)?,
        num(node, "y", elem)?,
        num(node, "hdg", elem)?,
    );
    let length = num(node, "length", elem)?;
    let Some(shape_node) = node.children().find(|c| c.is_element()) else {
        return Err(MapError::malformed(
            elem.to_string(),
            "geometry without shape",
        ));
    };
    let shape = match shape_node.tag_name().name() {
        "line" => SegmentShape::Line,
        "arc" => SegmentShape::Arc {
            curvature: num(&shape_node, "curvature", elem)?,
        },
        "spiral" => SegmentShape::Spiral {
            curv_start: num(&shape_node, "curvStart", elem)?,
            curv_end: num(&shape_node, "curvEnd", elem)?,
        },
        "poly3" => SegmentShape::Poly3 {
            a: num_or(&shape_node, "a", 0.0, elem)?,
            b: num_or(&shape_node, "b", 0.0, elem)?,
            c: num_or(&shape_node, "c", 0.0, elem)?,
            d: num_or(&shape_node, "d", 0.0, elem)?,
        },
        "paramPoly3" => {
            let g = |k: &str| num_or(&shape_node, k, 0.0, elem);
            SegmentShape::ParamPoly3 {
                u: [g("aU")?, g("bU")?, g("cU")?, g("dU")?],
                v: [g("aV")?, g("bV")?, g("cV")?, g("dV")?],
                normalized: shape_node.attribute("pRange") != Some("arcLength"),
            }
        }
        other => {
            warnings.push(format!("{elem}: unsupported geometry <{other}>, skipped"));
            return Ok(None);
        }
    };
    let seg = PlanViewSegment {
        s_offset,
        start,
        length,
        shape,
    };
    seg.validate()?;
    Ok(Some(seg))
}

fn parse_lanes(
    side: &Node,
    elem: &str,
    warnings: &mut Vec<String>,
) -> Result<Vec<LaneRecord>, MapError> {
    let mut out = Vec::new();
    for lane in side.children().filter(|c| c.has_tag_name("lane")) {
        let id = int(&lane, "id", elem)?;
        let lelem = format!("{elem} lane {id}");
        let mut rec = LaneRecord {
            id,
            kind: lane.attribute("type").unwrap_or("driving").to_string(),
            widths: Vec::new(),
            speed: None,
            predecessor: None,
            successor: None,
        };
        for child in lane.children().filter(|c| c.is_element()) {
            match child.tag_name().name() {
                "width" => rec.widths.push(cubic_record(&child, "sOffset", &lelem)?),
                "speed" => {
                    if rec.speed.is_none() {
                        rec.speed = speed_mps(&child, &lelem)?;
                    }
                }
                "link" => {
                    for l in child.children().filter(|c| c.is_element()) {
                        match l.tag_name().name() {
                            "predecessor" => rec.predecessor = Some(int(&l, "id", &lelem)?),
                            "successor" => rec.successor = Some(int(&l, "id", &lelem)?),
                            other => warnings.push(format!("{lelem}: unsupported link <{other}>")),
                        }
                    }
                }
                "roadMark" | "userData" => {}
                other => warnings.push(format!("{lelem}: unsupported record <{other}>")),
            }
        }
        rec.widths.sort_by(|a, b| a.start.total_cmp(&b.start));
        out.push(rec);
    }
    out.sort_by_key(|l| l.id.abs());
    Ok(out)
}

fn parse_road(node: &Node, warnings: &mut Vec<String>) -> Result<Road, MapError> {
    let id = attr(node, "id", "road")?.to_string();
    let elem = format!("road {id}");
    let junction = node
        .attribute("junction")
        .filter(|j| *j != "-1" && !j.is_empty())
        .map(str::to_string);
    let mut road = Road {
        length: num(node, "length", &elem)?,
        id,
        junction,
        kind: None,
        speed: None,
        predecessor: None,
        successor: None,
        geometry: Vec::new(),
        offsets: Vec::new(),
        sections: Vec::new(),
        signals: Vec::new(),
    };
    for child in node.children().filter(|c| c.is_element()) {
        match child.tag_name().name() {
            "link" => {
                for l in child.children().filter(|c| c.is_element()) {
                    match l.tag_name().name() {
                        "predecessor" => road.predecessor = road_link(&l),
                        "successor" => road.successor = road_link(&l),
                        other => warnings.push(format!("{elem}: unsupported link <{other}>")),
                    }
                }
            }
            "type" => {
                if road.kind.is_none() {
                    road.kind = child.attribute("type").map(str::to_string);
                    if let Some(sp) = child.children().find(|c| c.has_tag_name("speed")) {
                        road.speed = speed_mps(&sp, &elem)?;
                    }
                }
            }
            "planView" => {
                for g in child.children().filter(|c| c.has_tag_name("geometry")) {
                    let gelem = format!("{elem} geometry {}", road.geometry.len());
                    if let Some(seg) = parse_geometry(&g, &gelem, warnings)? {
                        road.geometry.push(seg);
                    }
                }
            }
            "lanes" => {
                for rec in child.children().filter(|c| c.is_element()) {
                    match rec.tag_name().name() {
                        "laneOffset" => road.offsets.push(cubic_record(&rec, "s", &elem)?),
                        "laneSection" => {
                            let selem = format!("{elem} section {}", road.sections.len());
                            let s = num_or(&rec, "s", 0.0, &selem)?;
                            let mut section = Section {
                                s,
                                left: Vec::new(),
                                right: Vec::new(),
                            };
                            for side in rec.children().filter(|c| c.is_element()) {
                                match side.tag_name().name() {
                                    "left" => section.left = parse_lanes(&side, &selem, warnings)?,
                                    "right" => {
                                        section.right = parse_lanes(&side, &selem, warnings)?
                                    }
                                    "center" => {}
                                    other => warnings
                                        .push(format!("{selem}: unsupported record <{other}>")),
                                }
                            }
                            if section.left.iter().any(|l| l.id <= 0)
                                || section.right.iter().any(|l| l.id >= 0)
                            {
                                return Err(MapError::malformed(
                                    selem,
                                    "lane id sign does not match its side",
                                ));
                            }
                            road.sections.push(section);
                        }
                        other => warnings.push(format!("{elem}: unsupported record <{other}>")),
                    }
                }
            }
            "signals" => {
                for sig in child.children().filter(|c| c.is_element()) {
                    if sig.tag_name().name() != "signal" {
                        warnings.push(format!(
                            "{elem}: unsupported record <{}>",
                            sig.tag_name().name()
                        ));
                        continue;
                    }
                    let source_id = sig.attribute("id").unwrap_or("").to_string();
                    let selem = format!("{elem} signal {source_id}");
                    let attributes = ["name", "type", "subtype", "dynamic", "country"]
                        .iter()
                        .filter_map(|k| Some((k.to_string(), sig.attribute(*k)?.to_string())))
                        .collect();
                    road.signals.push(Signal {
                        s: num(&sig, "s", &selem)?,
                        orientation: sig.attribute("orientation").unwrap_or("none").to_string(),
                        source_id,
                        attributes,
                    });
                }
            }
            "userData" => {}
            other => warnings.push(format!("{elem}: unsupported record <{other}>")),
        }
    }
    if !(road.length > 0.0) {
        return Err(MapError::malformed(elem, "non-positive length"));
    }
    if road.geometry.is_empty() && !road.sections.is_empty() {
        return Err(MapError::malformed(
            elem,
            "lanes without plan view geometry",
        ));
    }
    road.geometry
        .sort_by(|a, b| a.s_offset.total_cmp(&b.s_offset));
    road.offsets.sort_by(|a, b| a.start.total_cmp(&b.start));
    road.sections.sort_by(|a, b| a.s.total_cmp(&b.s));
    Ok(road)
}

impl Road {
    /// Reference poses at ascending road stations.
    fn reference_poses(&self, ss: &[f64]) -> Result<Vec<Pose2>, MapError> {
        let mut out = Vec::with_capacity(ss.len());
        let mut i = 0;
        while i < ss.len() {
            let s = ss[i];
            let g = self
                .geometry
                .iter()
                .rposition(|g| g.s_offset <= s + 1e-9)
                .unwrap_or(0);
            let seg = &self.geometry[g];
            let next_start = self
                .geometry
                .get(g + 1)
                .map_or(f64::INFINITY, |n| n.s_offset);
            let mut j = i;
            let mut local = Vec::new();
            while j < ss.len() && (ss[j] < next_start - 1e-9 || g + 1 == self.geometry.len()) {
                local.push((ss[j] - seg.s_offset).clamp(0.0, seg.length));
                j += 1;
            }
            if local.is_empty() {
                local.push((s - seg.s_offset).clamp(0.0, seg.length));
                j = i + 1;
            }
            out.extend(seg.poses_at(&local)?.into_iter().map(|p| p.pose));
            i = j;
        }
        Ok(out)
    }
}

struct LaneKey {
    road: usize,
    section: usize,
    lane: i64,
}

struct Builder {
    next_id: Id,
    linestrings: Vec<Linestring>,
    lanes: Vec<LaneDraft>,
    regs: Vec<RegulatoryElement>,
    lane_ids: BTreeMap<(usize, usize, i64), Id>,
}

impl Builder {
    fn fresh(&mut self) -> Id {
        self.next_id += 1;
        self.next_id
    }

    fn linestring(
        &mut self,
        pts: Vec<Point2>,
        tags: BTreeMap<String, String>,
        elem: &str,
    ) -> Result<Id, MapError> {
        let geometry = Polyline::new_dedup(pts).map_err(|e| {
            MapError::malformed(elem.to_string(), format!("degenerate boundary: {e}"))
        })?;
        let id = self.fresh();
        self.linestrings.push(Linestring { id, geometry, tags });
        Ok(id)
    }

    fn lane_id(&self, k: &LaneKey) -> Option<Id> {
        self.lane_ids.get(&(k.road, k.section, k.lane)).copied()
    }

    /// Records a directed edge implied by a link from lane `from` at its
    /// section end (`at_end`) or start to lane `to`.
    fn link(&self, edges: &mut Vec<(Id, Id)>, from: LaneKey, at_end: bool, to: LaneKey) {
        let (Some(a), Some(b)) = (self.lane_id(&from), self.lane_id(&to)) else {
            return;
        };
        let forward = from.lane < 0;
        if forward == at_end {
            edges.push((a, b));
        } else {
            edges.push((b, a));
        }
    }
}

fn lane_subtype(kind: &str, road_kind: Option<&str>) -> Option<LaneSubtype> {
    let highway = road_kind == Some("motorway");
    Some(match kind {
        "driving" | "entry" | "exit" | "onRamp" | "offRamp" | "connectingRamp"
        | "bidirectional" => {
            if highway {
                LaneSubtype::Highway
            } else {
                LaneSubtype::Road
            }
        }
        "parking" => LaneSubtype::ParkingAisle,
        "biking" => LaneSubtype::Bicycle,
        "sidewalk" | "crosswalk" => LaneSubtype::Crosswalk,
        _ => return None,
    })
}

fn tags(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

pub fn parse_opendrive(xml: &str, ds: f64) -> Result<TrafficMap, MapError> {
    if !(ds.is_finite() && ds > 0.0) {
        return Err(MapError::malformed(
            "sampling",
            format!("step must be positive, got {ds}"),
        ));
    }
    let doc = xml_document(xml)?;
    let root = doc.root_element();
    if !root.has_tag_name("OpenDRIVE") {
        return Err(MapError::malformed(
            "document",
            format!(
                "root element is <{}>, expected <OpenDRIVE>",
                root.tag_name().name()
            ),
        ));
    }
    let mut warnings = Vec::new();
    let mut roads = Vec::new();
    let mut connections = Vec::new();
    let mut junction_ids: BTreeMap<String, Id> = BTreeMap::new();
    for el in root.children().filter(|n| n.is_element()) {
        match el.tag_name().name() {
            "header" => {}
            "road" => roads.push(parse_road(&el, &mut warnings)?),
            "junction" => {
                let jid = attr(&el, "id", "junction")?.to_string();
                let jelem = format!("junction {jid}");
                let next = junction_ids.len() as Id + 1;
                junction_ids.entry(jid).or_insert(next);
                for c in el.children().filter(|c| c.is_element()) {
                    if c.tag_name().name() != "connection" {
                        warnings.push(format!(
                            "{jelem}: unsupported record <{}>",
                            c.tag_name().name()
                        ));
                        continue;
                    }
                    let links = c
                        .children()
                        .filter(|l| l.has_tag_name("laneLink"))
                        .map(|l| Ok((int(&l, "from", &jelem)?, int(&l, "to", &jelem)?)))
                        .collect::<Result<Vec<_>, MapError>>()?;
                    connections.push(Connection {
                        incoming: attr(&c, "incomingRoad", &jelem)?.to_string(),
                        connecting: attr(&c, "connectingRoad", &jelem)?.to_string(),
                        contact_end: c.attribute("contactPoint") == Some("end"),
                        links,
                    });
                }
            }
            other => warnings.push(format!("unsupported record <{other}>")),
        }
    }
    for road in &roads {
        if let Some(j) = &road.junction {
            let next = junction_ids.len() as Id + 1;
            junction_ids.entry(j.clone()).or_insert(next);
        }
    }

    let mut b = Builder {
        next_id: 0,
        linestrings: Vec::new(),
        lanes: Vec::new(),
        regs: Vec::new(),
        lane_ids: BTreeMap::new(),
    };

    for (ri, road) in roads.iter().enumerate() {
        for (si, section) in road.sections.iter().enumerate() {
            let s0 = section.s;
            let s1 = road.sections.get(si + 1).map_or(road.length, |n| n.s);
            let selem = format!("road {} section {si}", road.id);
            if s1 - s0 <= 1e-9 {
                warnings.push(format!("{selem}: zero-length lane section, skipped"));
                continue;
            }
            let ss: Vec<f64> = stations(s1 - s0, ds).into_iter().map(|d| s0 + d).collect();
            let poses = road.reference_poses(&ss)?;
            let offsets: Vec<f64> = ss.iter().map(|&s| eval_records(&road.offsets, s)).collect();
            let base_tags = |kind: &str| {
                tags(&[
                    ("kind", kind.to_string()),
                    ("source_road", road.id.clone()),
                    ("section", si.to_string()),
                ])
            };
            let at = |t: &[f64]| -> Vec<Point2> {
                poses
                    .iter()
                    .zip(t)
                    .map(|(p, &t)| p.position + Point2::from_angle(p.heading).perp() * t)
                    .collect()
            };
            let center = b.linestring(at(&offsets), base_tags("reference"), &selem)?;
            for (side, records) in [(1.0, &section.left), (-1.0, &section.right)] {
                let mut inner_id = center;
                let mut inner_t = offsets.clone();
                for rec in records.iter() {
                    let outer_t: Vec<f64> = inner_t
                        .iter()
                        .zip(&ss)
                        .map(|(t, &s)| t + side * eval_records(&rec.widths, s - s0).max(0.0))
                        .collect();
                    let mut btags = base_tags("boundary");
                    btags.insert("source_lane".into(), rec.id.to_string());
                    let outer_id = b.linestring(at(&outer_t), btags, &selem)?;
                    if let Some(subtype) = lane_subtype(&rec.kind, road.kind.as_deref()) {
                        let inverted = rec.id > 0;
                        let id = b.fresh();
                        let mut lane = LaneDraft::new(
                            id,
                            BoundaryRef {
                                id: inner_id,
                                inverted,
                            },
                            BoundaryRef {
                                id: outer_id,
                                inverted,
                            },
                        );
                        lane.subtype = subtype;
                        lane.one_way = rec.kind != "bidirectional";
                        lane.speed_limit = rec.speed.or(road.speed);
                        lane.junction = road.junction.as_ref().map(|j| junction_ids[j]);
                        lane.tags = tags(&[
                            ("source_road", road.id.clone()),
                            ("section", si.to_string()),
                            ("source_lane", rec.id.to_string()),
                            ("type", rec.kind.clone()),
                        ]);
                        b.lane_ids.insert((ri, si, rec.id), id);
                        b.lanes.push(lane);
                    }
                    inner_id = outer_id;
                    inner_t = outer_t;
                }
            }
        }
    }

    let road_index: BTreeMap<&str, usize> = roads
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let target_section = |ri: usize, contact_end: bool| -> usize {
        if contact_end {
            roads[ri].sections.len().saturating_sub(1)
        } else {
            0
        }
    };
    let mut edges: Vec<(Id, Id)> = Vec::new();
    for (ri, road) in roads.iter().enumerate() {
        let last = road.sections.len().saturating_sub(1);
        for (si, section) in road.sections.iter().enumerate() {
            for rec in section.left.iter().chain(&section.right) {
                let key = |lane| LaneKey {
                    road: ri,
                    section: si,
                    lane,
                };
                if let Some(to) = rec.successor {
                    if si < last {
                        b.link(
                            &mut edges,
                            key(rec.id),
                            true,
                            LaneKey {
                                road: ri,
                                section: si + 1,
                                lane: to,
                            },
                        );
                    } else if let Some(l) =
                        road.successor.as_ref().filter(|l| l.element_type == "road")
                    {
                        if let Some(&other) = road_index.get(l.element_id.as_str()) {
                            let ts = target_section(other, l.contact_end);
                            b.link(
                                &mut edges,
                                key(rec.id),
                                true,
                                LaneKey {
                                    road: other,
                                    section: ts,
                                    lane: to,
                                },
                            );
                        }
                    }
                }
                if let Some(to) = rec.predecessor {
                    if si > 0 {
                        b.link(
                            &mut edges,
                            key(rec.id),
                            false,
                            LaneKey {
                                road: ri,
                                section: si - 1,
                                lane: to,
                            },
                        );
                    } else if let Some(l) = road
                        .predecessor
                        .as_ref()
                        .filter(|l| l.element_type == "road")
                    {
                        if let Some(&other) = road_index.get(l.element_id.as_str()) {
                            let ts = target_section(other, l.contact_end);
                            b.link(
                                &mut edges,
                                key(rec.id),
                                false,
                                LaneKey {
                                    road: other,
                                    section: ts,
                                    lane: to,
                                },
                            );
                        }
                    }
                }
            }
        }
    }
    for c in &connections {
        let (Some(&inc), Some(&con)) = (
            road_index.get(c.incoming.as_str()),
            road_index.get(c.connecting.as_str()),
        ) else {
            warnings.push(format!(
                "junction connection {} -> {}: unknown road, skipped",
                c.incoming, c.connecting
            ));
            continue;
        };
        let incoming = &roads[inc];
        // the incoming road touches the junction at whichever end links to it
        let links_to = |l: &Option<RoadLink>| {
            l.as_ref().is_some_and(|l| {
                (l.element_type == "junction"
                    && Some(&l.element_id) == roads[con].junction.as_ref())
                    || (l.element_type == "road" && l.element_id == c.connecting)
            })
        };
        let at_end = if links_to(&incoming.successor) {
            true
        } else if links_to(&incoming.predecessor) {
            false
        } else {
            true
        };
        let from_section = if at_end {
            incoming.sections.len().saturating_sub(1)
        } else {
            0
        };
        let to_section = target_section(con, c.contact_end);
        for &(from, to) in &c.links {
            b.link(
                &mut edges,
                LaneKey {
                    road: inc,
                    section: from_section,
                    lane: from,
                },
                at_end,
                LaneKey {
                    road: con,
                    section: to_section,
                    lane: to,
                },
            );
        }
    }
    let lane_pos: BTreeMap<Id, usize> =
        b.lanes.iter().enumerate().map(|(i, l)| (l.id, i)).collect();
    for (from, to) in edges {
        b.lanes[lane_pos[&from]].successors.push(to);
    }

    for (ri, road) in roads.iter().enumerate() {
        for sig in &road.signals {
            let selem = format!("road {} signal {}", road.id, sig.source_id);
            let Some(si) = road.sections.iter().rposition(|sec| sec.s <= sig.s + 1e-9) else {
                warnings.push(format!("{selem}: outside lane sections, skipped"));
                continue;
            };
            let section = &road.sections[si];
            let s = sig.s.clamp(0.0, road.length);
            let use_right = sig.orientation != "-";
            let use_left = sig.orientation != "+";
            let mut governed = Vec::new();
            let mut t_min = f64::INFINITY;
            let mut t_max = f64::NEG_INFINITY;
            let offset = eval_records(&road.offsets, s);
            for (side, records, used) in [
                (1.0, &section.left, use_left),
                (-1.0, &section.right, use_right),
            ] {
                let mut t = offset;
                for rec in records.iter() {
                    let outer = t + side * eval_records(&rec.widths, s - section.s).max(0.0);
                    if used {
                        if let Some(id) = b.lane_id(&LaneKey {
                            road: ri,
                            section: si,
                            lane: rec.id,
                        }) {
                            governed.push(id);
                            t_min = t_min.min(t.min(outer));
                            t_max = t_max.max(t.max(outer));
                        }
                    }
                    t = outer;
                }
            }
            if governed.is_empty() || t_max - t_min <= 1e-9 {
                warnings.push(format!("{selem}: no governed lanes, skipped"));
                continue;
            }
            let pose = road.reference_poses(&[s])?[0];
            let normal = Point2::from_angle(pose.heading).perp();
            let line = b.linestring(
                vec![
                    pose.position + normal * t_max,
                    pose.position + normal * t_min,
                ],
                tags(&[
                    ("kind", "stop_line".to_string()),
                    ("source_road", road.id.clone()),
                    ("source_signal", sig.source_id.clone()),
                ]),
                &selem,
            )?;
            let mut parameters = sig.attributes.clone();
            parameters.insert("source_signal".into(), sig.source_id.clone());
            parameters.insert("source_road".into(), road.id.clone());
            governed.sort_unstable();
            let id = b.fresh();
            b.regs.push(RegulatoryElement {
                id,
                kind: RegulatoryKind::TrafficLightGroup,
                stop_line: Some(line),
                governed_lanes: governed,
                parameters,
            });
        }
    }

    infer_adjacency(&mut b.lanes);
    TrafficMap::new(b.linestrings, b.lanes, Vec::new(), b.regs, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    const STRAIGHT: &str = r#"<OpenDRIVE>
  <header revMajor="1" revMinor="6"/>
  <road id="1" length="50" junction="-1">
    <planView><geometry s="0" x="0" y="0" hdg="0" length="50"><line/></geometry></planView>
    <lanes><laneSection s="0">
      <center><lane id="0" type="none"/></center>
      <right><lane id="-1" type="driving"><width sOffset="0" a="3.5" b="0" c="0" d="0"/></lane></right>
    </laneSection></lanes>
  </road>
</OpenDRIVE>"#;

    #[test]
    fn straight_road_one_lane() {
        let m = parse_opendrive(STRAIGHT, DEFAULT_SAMPLE_STEP).unwrap();
        assert_eq!(m.lanes.len(), 1);
        let lane = m.lanes.values().next().unwrap();
        let left = &m.linestrings[&lane.left_boundary.id].geometry;
        let right = &m.linestrings[&lane.right_boundary.id].geometry;
        assert_eq!(left.points().len(), right.points().len());
        for (a, b) in left.points().iter().zip(right.points()) {
            assert!((a.distance(*b) - 3.5).abs() < 1e-9);
        }
        assert!(m.warnings.is_empty(), "{:?}", m.warnings);
    }

    #[test]
    fn zero_roads() {
        let m = parse_opendrive("<OpenDRIVE><header/></OpenDRIVE>", 0.5).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn unsupported_records_warn() {
        let xml = STRAIGHT.replace("<planView>", "<elevationProfile/><planView>");
        let m = parse_opendrive(&xml, 0.5).unwrap();
        assert_eq!(m.warnings.len(), 1);
        assert!(m.warnings[0].contains("elevationProfile"));
    }

    #[test]
    fn non_positive_step_rejected() {
        assert!(parse_opendrive(STRAIGHT, 0.0).is_err());
    }

    #[test]
    fn left_lane_travels_against_reference() {
        let xml = STRAIGHT.replace(
            "<center>",
            r#"<left><lane id="1" type="driving"><width sOffset="0" a="3"/></lane></left><center>"#,
        );
        let m = parse_opendrive(&xml, 1.0).unwrap();
        assert_eq!(m.lanes.len(), 2);
        let left_lane = m
            .lanes
            .values()
            .find(|l| l.tags["source_lane"] == "1")
            .unwrap();
        let c = &left_lane.centerline;
        assert!(c.first().x > c.last().x);
        assert!((c.first().y - 1.5).abs() < 1e-9);
        let right_lane = m
            .lanes
            .values()
            .find(|l| l.tags["source_lane"] == "-1")
            .unwrap();
        assert!(right_lane.adjacent_left.is_none());
    }
}
