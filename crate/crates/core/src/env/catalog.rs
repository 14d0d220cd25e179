//! Scenario families and the recorded datasets their maps pair with.

use serde::Serialize;

use super::config::ScenarioKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetPairing {
    pub dataset: &'static str,
    /// Number of maps annotated at the dataset's recording sites.
    pub maps: usize,
    /// Built-in track schema able to read the dataset, if any.
    pub adapter: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CatalogEntry {
    pub family: &'static str,
    pub kind: ScenarioKind,
    pub datasets: Vec<DatasetPairing>,
    pub notes: &'static str,
}

impl CatalogEntry {
    pub fn adapters(&self) -> Vec<&'static str> {
        self.datasets.iter().filter_map(|d| d.adapter).collect()
    }
}

fn pairing(dataset: &'static str, maps: usize, adapter: Option<&'static str>) -> DatasetPairing {
    DatasetPairing {
        dataset,
        maps,
        adapter,
    }
}

pub fn scenario_catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            family: "highway",
            kind: ScenarioKind::Highway,
            datasets: vec![
                pairing("highD", 6, Some("levelx_like")),
                pairing("INTERACTION", 2, Some("interaction_like")),
            ],
            notes: "multi-lane carriageways; drone recordings at 25 Hz",
        },
        CatalogEntry {
            family: "intersection",
            kind: ScenarioKind::Urban,
            datasets: vec![
                pairing("inD", 4, Some("levelx_like")),
                pairing("INTERACTION", 5, Some("interaction_like")),
            ],
            notes: "signalized and unsignalized junctions",
        },
        CatalogEntry {
            family: "roundabout",
            kind: ScenarioKind::Roundabout,
            datasets: vec![
                pairing("rounD", 3, Some("levelx_like")),
                pairing("INTERACTION", 5, Some("interaction_like")),
            ],
            notes: "circulating traffic with yield entries",
        },
        CatalogEntry {
            family: "parking lot",
            kind: ScenarioKind::Parking,
            datasets: vec![pairing("ParkPredict", 1, None)],
            notes: "area-based maps; recordings need a custom adapter",
        },
        CatalogEntry {
            family: "racing",
            kind: ScenarioKind::Racing,
            datasets: Vec::new(),
            notes: "map-only circuits",
        },
    ]
}
