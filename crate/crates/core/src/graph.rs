//! Yearly mobility graphs over FSAs.
//!
//! An edge joins two FSAs when at least one user reviewed venues in both
//! during the year; its weight is the number of distinct such users and its
//! group counts tally those users by group profile. Vertex features are the
//! 15 cultural dimensions followed by the 7 census features; scenario masks
//! hide feature blocks without ever changing the edge set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Census, Dataset, CENSUS_DIMS, SCENE_DIMS};
use crate::scenes::SceneTable;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("no scene entry for FSA {fsa} in {year}")]
    MissingScene { fsa: String, year: i32 },
    #[error(transparent)]
    Census(#[from] crate::ingest::IngestError),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Undirected edge between vertex indices `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub group_counts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityGraph {
    pub city: String,
    pub year: i32,
    /// sorted FSA codes; vertex i is vertices[i]
    pub vertices: Vec<String>,
    /// n rows of [T (15) | D (7)] — or just [T] after masking area info off
    pub vertex_features: Vec<Vec<f64>>,
    pub edges: Vec<Edge>,
}

impl MobilityGraph {
    pub fn vertex_width(&self) -> usize {
        self.vertex_features.first().map_or(0, Vec::len)
    }

    /// 1 for the weight plus the group-count block.
    pub fn edge_width(&self) -> usize {
        1 + self.edges.first().map_or(0, |e| e.group_counts.len())
    }
}

/// On/off mask for the three optional feature blocks. The cultural-dimension
/// block T is always retained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub use_area_info: bool,
    pub use_mobility: bool,
    pub use_group_profile: bool,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario { use_area_info: true, use_mobility: true, use_group_profile: true },
        Scenario { use_area_info: true, use_mobility: true, use_group_profile: false },
        Scenario { use_area_info: true, use_mobility: false, use_group_profile: true },
        Scenario { use_area_info: true, use_mobility: false, use_group_profile: false },
        Scenario { use_area_info: false, use_mobility: true, use_group_profile: true },
        Scenario { use_area_info: false, use_mobility: true, use_group_profile: false },
        Scenario { use_area_info: false, use_mobility: false, use_group_profile: true },
        Scenario { use_area_info: false, use_mobility: false, use_group_profile: false },
    ];

    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if self.use_area_info {
            parts.push("Area info");
        }
        if self.use_mobility {
            parts.push("mobility");
        }
        if self.use_group_profile {
            parts.push("group profile");
        }
        if parts.is_empty() {
            return "None".to_string();
        }
        let mut name = parts.join(" + ");
        // names are capitalized as titles
        let mut chars = name.chars();
        if let Some(first) = chars.next() {
            name = first.to_uppercase().collect::<String>() + chars.as_str();
        }
        name
    }

    pub fn from_name(name: &str) -> Option<Scenario> {
        Scenario::ALL
            .iter()
            .copied()
            .find(|s| s.name().eq_ignore_ascii_case(name))
    }
}

/// Build the full-featured graph for one year.
///
/// Every user contributes each unordered pair of distinct FSAs they reviewed
/// in `year` exactly once; users missing from `assignment` count toward the
/// weight but not toward any group bucket.
pub fn build_year_graph(
    dataset: &Dataset,
    year: i32,
    assignment: &BTreeMap<String, usize>,
    n_groups: usize,
    census: &Census,
    scenes: &SceneTable,
) -> Result<MobilityGraph> {
    let vertices = dataset.fsas();
    let index: BTreeMap<&str, usize> = vertices
        .iter()
        .enumerate()
        .map(|(i, f)| (f.as_str(), i))
        .collect();

    // distinct FSAs per user for the year
    let mut user_fsas: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for review in &dataset.reviews {
        if review.year != year {
            continue;
        }
        let Some(venue) = dataset.venues.get(&review.venue_id) else {
            continue;
        };
        let Some(&v) = index.get(venue.fsa.as_str()) else {
            continue;
        };
        user_fsas.entry(review.user_id.as_str()).or_default().insert(v);
    }

    let mut edge_map: BTreeMap<(usize, usize), (f64, Vec<f64>)> = BTreeMap::new();
    for (user, fsas) in &user_fsas {
        let fsas: Vec<usize> = fsas.iter().copied().collect();
        let group = assignment.get(*user).copied();
        for a in 0..fsas.len() {
            for b in (a + 1)..fsas.len() {
                let key = (fsas[a], fsas[b]);
                let entry = edge_map
                    .entry(key)
                    .or_insert_with(|| (0.0, vec![0.0; n_groups]));
                entry.0 += 1.0;
                if let Some(g) = group {
                    entry.1[g] += 1.0;
                }
            }
        }
    }
    let edges: Vec<Edge> = edge_map
        .into_iter()
        .map(|((i, j), (weight, group_counts))| Edge {
            i,
            j,
            weight,
            group_counts,
        })
        .collect();

    let mut vertex_features = Vec::with_capacity(vertices.len());
    for fsa in &vertices {
        let scene = scenes.get(year, fsa).ok_or_else(|| GraphError::MissingScene {
            fsa: fsa.clone(),
            year,
        })?;
        let census_row = census.row(year, fsa)?;
        let mut row = Vec::with_capacity(SCENE_DIMS + CENSUS_DIMS);
        row.extend_from_slice(&scene.dims);
        row.extend_from_slice(census_row);
        vertex_features.push(row);
    }

    Ok(MobilityGraph {
        city: dataset.city.clone(),
        year,
        vertices,
        vertex_features,
        edges,
    })
}

/// Mask feature blocks per scenario. The edge set is untouched: mobility off
/// replaces weights with 1, group profile off drops the count block, area
/// info off truncates vertex rows to the 15 cultural dimensions.
pub fn apply_scenario(graph: &MobilityGraph, scenario: Scenario) -> MobilityGraph {
    let vertex_features: Vec<Vec<f64>> = graph
        .vertex_features
        .iter()
        .map(|row| {
            if scenario.use_area_info {
                row.clone()
            } else {
                row[..SCENE_DIMS.min(row.len())].to_vec()
            }
        })
        .collect();
    let edges: Vec<Edge> = graph
        .edges
        .iter()
        .map(|e| Edge {
            i: e.i,
            j: e.j,
            weight: if scenario.use_mobility { e.weight } else { 1.0 },
            group_counts: if scenario.use_group_profile {
                e.group_counts.clone()
            } else {
                Vec::new()
            },
        })
        .collect();
    MobilityGraph {
        city: graph.city.clone(),
        year: graph.year,
        vertices: graph.vertices.clone(),
        vertex_features,
        edges,
    }
}
