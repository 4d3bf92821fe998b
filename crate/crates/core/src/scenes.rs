//! Per-FSA cultural-dimension ("scene") scores.
//!
//! Each venue category carries 15 codebook scores in [1, 5]. A venue's vector
//! is the mean over its categories; an FSA's vector for a year is the mean
//! over the venues active there that year. A venue counts as active in a year
//! if it received at least one review dated that year.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ingest::{Dataset, DimensionCodebook, SCENE_DIMS};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("category {category:?} (venue {venue}) missing from codebook")]
    MissingCategory { category: String, venue: String },
    #[error("FSA {fsa} has no active venue in {year} and no earlier scored year")]
    NoHistory { fsa: String, year: i32 },
    #[error("no venues supplied for scoring")]
    EmptyFsa,
}

pub type Result<T> = std::result::Result<T, SceneError>;

pub type SceneVector = [f64; SCENE_DIMS];

/// One FSA-year cell: the 15 scores and the number of venues behind them.
/// `omega == 0` marks a carried-forward vector.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceneEntry {
    pub dims: SceneVector,
    pub omega: usize,
}

/// fsa -> scored entry, for one year.
pub type YearScenes = BTreeMap<String, SceneEntry>;

/// All scored years for one city.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceneTable {
    pub city: String,
    pub years: BTreeMap<i32, YearScenes>,
}

impl SceneTable {
    pub fn get(&self, year: i32, fsa: &str) -> Option<&SceneEntry> {
        self.years.get(&year)?.get(fsa)
    }

    /// CSV with columns city, year, fsa, dim_1..dim_15, omega.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("city,year,fsa");
        for i in 1..=SCENE_DIMS {
            out.push_str(&format!(",dim_{i}"));
        }
        out.push_str(",omega\n");
        for (year, fsas) in &self.years {
            for (fsa, entry) in fsas {
                out.push_str(&format!("{},{},{}", self.city, year, fsa));
                for v in entry.dims {
                    out.push_str(&format!(",{v}"));
                }
                out.push_str(&format!(",{}\n", entry.omega));
            }
        }
        out
    }
}

/// Mean over venues of the per-venue mean over its categories.
pub fn score_fsa<'a, I>(venues_in_fsa: I, codebook: &DimensionCodebook) -> Result<SceneVector>
where
    I: IntoIterator<Item = &'a crate::ingest::Venue>,
{
    let mut acc = [0.0; SCENE_DIMS];
    let mut omega = 0usize;
    for venue in venues_in_fsa {
        let m = venue.categories.len() as f64;
        let mut venue_mean = [0.0; SCENE_DIMS];
        for cat in &venue.categories {
            let scores =
                codebook
                    .scores
                    .get(cat)
                    .ok_or_else(|| SceneError::MissingCategory {
                        category: cat.clone(),
                        venue: venue.venue_id.clone(),
                    })?;
            for i in 0..SCENE_DIMS {
                venue_mean[i] += scores[i] / m;
            }
        }
        for i in 0..SCENE_DIMS {
            acc[i] += venue_mean[i];
        }
        omega += 1;
    }
    if omega == 0 {
        return Err(SceneError::EmptyFsa);
    }
    for slot in &mut acc {
        *slot /= omega as f64;
    }
    Ok(acc)
}

/// Venue ids with at least one review in `year`, grouped by FSA.
fn active_venues_by_fsa(dataset: &Dataset, year: i32) -> BTreeMap<&str, BTreeSet<&str>> {
    let mut active: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for review in &dataset.reviews {
        if review.year != year {
            continue;
        }
        if let Some(venue) = dataset.venues.get(&review.venue_id) {
            active
                .entry(venue.fsa.as_str())
                .or_default()
                .insert(venue.venue_id.as_str());
        }
    }
    active
}

/// Score every FSA of the dataset for one year. FSAs with no active venue
/// reuse `previous` (the latest scored year); without history that is an
/// error.
pub fn score_city_year(
    dataset: &Dataset,
    codebook: &DimensionCodebook,
    year: i32,
    previous: Option<&YearScenes>,
) -> Result<YearScenes> {
    let active = active_venues_by_fsa(dataset, year);
    let mut out = YearScenes::new();
    for fsa in dataset.fsa_venues.keys() {
        match active.get(fsa.as_str()) {
            Some(venue_ids) if !venue_ids.is_empty() => {
                let venues = venue_ids.iter().map(|id| &dataset.venues[*id]);
                let dims = score_fsa(venues, codebook)?;
                out.insert(
                    fsa.clone(),
                    SceneEntry {
                        dims,
                        omega: venue_ids.len(),
                    },
                );
            }
            _ => {
                let prev_entry = previous.and_then(|p| p.get(fsa)).ok_or_else(|| {
                    SceneError::NoHistory {
                        fsa: fsa.clone(),
                        year,
                    }
                })?;
                out.insert(
                    fsa.clone(),
                    SceneEntry {
                        dims: prev_entry.dims,
                        omega: 0,
                    },
                );
            }
        }
    }
    Ok(out)
}

/// Score an inclusive year range in chronological order with carry-forward.
pub fn build_scene_table(
    dataset: &Dataset,
    codebook: &DimensionCodebook,
    years: std::ops::RangeInclusive<i32>,
) -> Result<SceneTable> {
    let mut table = SceneTable {
        city: dataset.city.clone(),
        years: BTreeMap::new(),
    };
    let mut previous: Option<YearScenes> = None;
    for year in years {
        let scored = score_city_year(dataset, codebook, year, previous.as_ref())?;
        table.years.insert(year, scored.clone());
        previous = Some(scored);
    }
    Ok(table)
}
