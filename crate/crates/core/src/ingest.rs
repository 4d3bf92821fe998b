//! Loading, validation, and filtering of city datasets: venues, reviews, and
//! users in JSON Lines (review-platform academic-dump field names), census
//! tables and the cultural-dimension codebook as CSV.
//!
//! An FSA is the first three characters of a Canadian postal code. Venues are
//! assigned to FSAs via their postal code when present, otherwise through an
//! optional lat/lon bounding-box table.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

/// Names of the seven census columns, in feature order.
pub const CENSUS_COLUMNS: [&str; 7] = [
    "pct_ba_or_higher",
    "avg_rent",
    "pct_visible_minorities",
    "median_income",
    "pct_age_20_34",
    "pct_walk_to_work",
    "pct_arts_employment",
];

/// Indices of CENSUS_COLUMNS that are percentages and must lie in [0, 100].
const PERCENT_COLUMNS: [usize; 5] = [0, 2, 4, 5, 6];

/// Number of census features per area.
pub const CENSUS_DIMS: usize = 7;

/// Number of cultural dimensions per area.
pub const SCENE_DIMS: usize = 15;

/// Census vintages with available tables.
pub const CENSUS_VINTAGES: [i32; 2] = [2011, 2016];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {msg}")]
    MalformedLine {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("reviews reference unknown venue ids: {0:?}")]
    DanglingVenueRefs(Vec<String>),
    #[error("reviews reference unknown user ids: {0:?}")]
    DanglingUserRefs(Vec<String>),
    #[error("no FSA has at least {min_venues} venues; cannot proceed")]
    NoFsasSurvive { min_venues: usize },
    #[error("{path}: census column {column} for {fsa} is {value}, outside [0, 100]")]
    CensusPercentOutOfRange {
        path: String,
        fsa: String,
        column: String,
        value: f64,
    },
    #[error("{path}: codebook score for {category} dim_{dim} is {value}, outside [1, 5]")]
    CodebookScoreOutOfRange {
        path: String,
        category: String,
        dim: usize,
        value: f64,
    },
    #[error("{path}: unexpected header, want {want:?}")]
    BadHeader { path: String, want: Vec<String> },
    #[error("census vintage {vintage} has no row for FSA {fsa}")]
    MissingCensusRow { vintage: i32, fsa: String },
    #[error("dataset is empty after loading {what}")]
    EmptySource { what: String },
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Venue {
    pub venue_id: String,
    pub fsa: String,
    pub categories: Vec<String>,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Review {
    pub user_id: String,
    pub venue_id: String,
    pub year: i32,
}

/// Half-open is not needed: boxes are inclusive on all sides; first match wins.
#[derive(Debug, Clone, Deserialize)]
pub struct BoundaryBox {
    pub fsa: String,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub city: String,
    /// inclusive year range; reviews outside it are omitted
    pub study_window: (i32, i32),
    /// lat/lon fallback for venues without a usable postal code
    pub boundary: Vec<BoundaryBox>,
}

impl LoadOptions {
    pub fn new(city: &str) -> Self {
        LoadOptions {
            city: city.to_string(),
            study_window: (2011, 2018),
            boundary: Vec::new(),
        }
    }
}

/// A loaded (and possibly FSA-filtered) city dataset.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Dataset {
    pub city: String,
    pub venues: BTreeMap<String, Venue>,
    pub reviews: Vec<Review>,
    pub users: BTreeSet<String>,
    /// fsa -> sorted venue ids, rebuilt on every construction
    pub fsa_venues: BTreeMap<String, Vec<String>>,
    /// venues dropped at load (no categories or unresolvable FSA)
    pub dropped_venues: usize,
    /// reviews dropped at load (outside window or on a dropped venue)
    pub dropped_reviews: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct DatasetStats {
    pub venues: usize,
    pub reviews: usize,
    pub users: usize,
    pub categories: usize,
}

impl Dataset {
    /// Assemble a dataset from in-memory parts, building the FSA index.
    pub fn from_parts(
        city: &str,
        venues: BTreeMap<String, Venue>,
        reviews: Vec<Review>,
        users: BTreeSet<String>,
    ) -> Self {
        let mut ds = Dataset {
            city: city.to_string(),
            venues,
            reviews,
            users,
            fsa_venues: BTreeMap::new(),
            dropped_venues: 0,
            dropped_reviews: 0,
        };
        ds.rebuild_index();
        ds
    }

    pub fn stats(&self) -> DatasetStats {
        let categories: BTreeSet<&str> = self
            .venues
            .values()
            .flat_map(|v| v.categories.iter().map(String::as_str))
            .collect();
        DatasetStats {
            venues: self.venues.len(),
            reviews: self.reviews.len(),
            users: self.users.len(),
            categories: categories.len(),
        }
    }

    /// Sorted list of FSA codes present.
    pub fn fsas(&self) -> Vec<String> {
        self.fsa_venues.keys().cloned().collect()
    }

    fn rebuild_index(&mut self) {
        let mut idx: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for v in self.venues.values() {
            idx.entry(v.fsa.clone()).or_default().push(v.venue_id.clone());
        }
        for ids in idx.values_mut() {
            ids.sort();
        }
        self.fsa_venues = idx;
    }
}

#[derive(Deserialize)]
struct RawVenue {
    business_id: String,
    #[serde(default)]
    categories: Option<String>,
    #[serde(default)]
    postal_code: Option<String>,
    #[serde(default)]
    latitude: Option<f64>,
    #[serde(default)]
    longitude: Option<f64>,
}

#[derive(Deserialize)]
struct RawReview {
    user_id: String,
    business_id: String,
    date: String,
}

#[derive(Deserialize)]
struct RawUser {
    user_id: String,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = open(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| IngestError::MalformedLine {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// `A1A`-shaped code from a postal string, or None.
fn normalize_fsa(postal: &str) -> Option<String> {
    let code: String = postal.trim().chars().take(3).collect::<String>().to_uppercase();
    let b = code.as_bytes();
    if b.len() == 3
        && b[0].is_ascii_uppercase()
        && b[1].is_ascii_digit()
        && b[2].is_ascii_uppercase()
    {
        Some(code)
    } else {
        None
    }
}

fn resolve_fsa(raw: &RawVenue, boundary: &[BoundaryBox]) -> Option<String> {
    if let Some(pc) = raw.postal_code.as_deref() {
        if let Some(fsa) = normalize_fsa(pc) {
            return Some(fsa);
        }
    }
    if let (Some(lat), Some(lon)) = (raw.latitude, raw.longitude) {
        for b in boundary {
            if lat >= b.lat_min && lat <= b.lat_max && lon >= b.lon_min && lon <= b.lon_max {
                return normalize_fsa(&b.fsa);
            }
        }
    }
    None
}

fn split_categories(raw: Option<&str>) -> Vec<String> {
    raw.unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn year_of(date: &str) -> Option<i32> {
    date.trim().get(..4)?.parse().ok()
}

/// Load one city's venues/reviews/users, enforcing referential integrity and
/// the study window. Venues without categories or a resolvable FSA are
/// dropped (with their reviews), not treated as errors.
pub fn load_dataset(
    venue_path: &Path,
    review_path: &Path,
    user_path: &Path,
    opts: &LoadOptions,
) -> Result<Dataset> {
    let raw_venues: Vec<RawVenue> = parse_jsonl(venue_path)?;
    let raw_reviews: Vec<RawReview> = parse_jsonl(review_path)?;
    let raw_users: Vec<RawUser> = parse_jsonl(user_path)?;

    let mut venues = BTreeMap::new();
    let mut dropped_venue_ids = BTreeSet::new();
    for rv in &raw_venues {
        let categories = split_categories(rv.categories.as_deref());
        let fsa = resolve_fsa(rv, &opts.boundary);
        match (categories.is_empty(), fsa) {
            (false, Some(fsa)) => {
                venues.insert(
                    rv.business_id.clone(),
                    Venue {
                        venue_id: rv.business_id.clone(),
                        fsa,
                        categories,
                        lat: rv.latitude,
                        lon: rv.longitude,
                    },
                );
            }
            _ => {
                dropped_venue_ids.insert(rv.business_id.clone());
            }
        }
    }
    if venues.is_empty() {
        return Err(IngestError::EmptySource {
            what: format!("venues ({})", venue_path.display()),
        });
    }

    let users: BTreeSet<String> = raw_users.into_iter().map(|u| u.user_id).collect();

    let (lo, hi) = opts.study_window;
    let mut reviews = Vec::new();
    let mut dropped_reviews = 0usize;
    let mut dangling_venues = BTreeSet::new();
    let mut dangling_users = BTreeSet::new();
    for (i, rr) in raw_reviews.iter().enumerate() {
        let year = match year_of(&rr.date) {
            Some(y) => y,
            None => {
                return Err(IngestError::MalformedLine {
                    path: review_path.display().to_string(),
                    line: i + 1,
                    msg: format!("unparseable date {:?}", rr.date),
                })
            }
        };
        if year < lo || year > hi {
            dropped_reviews += 1;
            continue;
        }
        if dropped_venue_ids.contains(&rr.business_id) {
            dropped_reviews += 1;
            continue;
        }
        if !venues.contains_key(&rr.business_id) {
            dangling_venues.insert(rr.business_id.clone());
            continue;
        }
        if !users.contains(&rr.user_id) {
            dangling_users.insert(rr.user_id.clone());
            continue;
        }
        reviews.push(Review {
            user_id: rr.user_id.clone(),
            venue_id: rr.business_id.clone(),
            year,
        });
    }
    if !dangling_venues.is_empty() {
        return Err(IngestError::DanglingVenueRefs(
            dangling_venues.into_iter().collect(),
        ));
    }
    if !dangling_users.is_empty() {
        return Err(IngestError::DanglingUserRefs(
            dangling_users.into_iter().collect(),
        ));
    }

    let mut ds = Dataset {
        city: opts.city.clone(),
        venues,
        reviews,
        users,
        fsa_venues: BTreeMap::new(),
        dropped_venues: dropped_venue_ids.len(),
        dropped_reviews,
    };
    ds.rebuild_index();
    Ok(ds)
}

/// Keep only FSAs with at least `min_venues` unique venues; restrict reviews
/// and users to the retained venues.
pub fn filter_fsas(dataset: &Dataset, min_venues: usize) -> Result<Dataset> {
    let keep_fsas: BTreeSet<&String> = dataset
        .fsa_venues
        .iter()
        .filter(|(_, venues)| venues.len() >= min_venues)
        .map(|(fsa, _)| fsa)
        .collect();
    if keep_fsas.is_empty() {
        return Err(IngestError::NoFsasSurvive { min_venues });
    }
    let venues: BTreeMap<String, Venue> = dataset
        .venues
        .iter()
        .filter(|(_, v)| keep_fsas.contains(&v.fsa))
        .map(|(id, v)| (id.clone(), v.clone()))
        .collect();
    let reviews: Vec<Review> = dataset
        .reviews
        .iter()
        .filter(|r| venues.contains_key(&r.venue_id))
        .cloned()
        .collect();
    let users: BTreeSet<String> = reviews.iter().map(|r| r.user_id.clone()).collect();
    let mut out = Dataset {
        city: dataset.city.clone(),
        venues,
        reviews,
        users,
        fsa_venues: BTreeMap::new(),
        dropped_venues: dataset.dropped_venues,
        dropped_reviews: dataset.dropped_reviews,
    };
    out.rebuild_index();
    Ok(out)
}

/// The census vintage closest to `year`; ties break toward the earlier one.
pub fn map_census_vintage(year: i32) -> i32 {
    let mut best = CENSUS_VINTAGES[0];
    for &v in &CENSUS_VINTAGES[1..] {
        if (year - v).abs() < (year - best).abs() {
            best = v;
        }
    }
    best
}

/// One vintage's rows: fsa -> 7 census features in [`CENSUS_COLUMNS`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusTable {
    pub vintage: i32,
    pub rows: BTreeMap<String, [f64; CENSUS_DIMS]>,
}

/// All loaded vintages, addressable by study year.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Census {
    pub tables: BTreeMap<i32, CensusTable>,
}

impl Census {
    /// Table for the vintage nearest to `year`.
    pub fn for_year(&self, year: i32) -> Result<&CensusTable> {
        let vintage = map_census_vintage(year);
        self.tables
            .get(&vintage)
            .ok_or(IngestError::MissingCensusRow {
                vintage,
                fsa: "<no table for vintage>".to_string(),
            })
    }

    pub fn row(&self, year: i32, fsa: &str) -> Result<&[f64; CENSUS_DIMS]> {
        let table = self.for_year(year)?;
        table.rows.get(fsa).ok_or(IngestError::MissingCensusRow {
            vintage: table.vintage,
            fsa: fsa.to_string(),
        })
    }

    /// Hard error if any filtered FSA lacks a row in any loaded vintage.
    pub fn validate_coverage(&self, fsas: &[String]) -> Result<()> {
        for table in self.tables.values() {
            for fsa in fsas {
                if !table.rows.contains_key(fsa) {
                    return Err(IngestError::MissingCensusRow {
                        vintage: table.vintage,
                        fsa: fsa.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Category -> 15 scores in [1, 5].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DimensionCodebook {
    pub scores: BTreeMap<String, [f64; SCENE_DIMS]>,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::Reader::from_path(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
    })
}

/// Census CSV columns: fsa, the seven [`CENSUS_COLUMNS`], vintage. One file
/// may mix vintages.
pub fn load_census(path: &Path) -> Result<Census> {
    let mut want: Vec<String> = vec!["fsa".to_string()];
    want.extend(CENSUS_COLUMNS.iter().map(|s| s.to_string()));
    want.push("vintage".to_string());

    let mut rdr = csv_reader(path)?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| IngestError::MalformedLine {
            path: path.display().to_string(),
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if headers != want {
        return Err(IngestError::BadHeader {
            path: path.display().to_string(),
            want,
        });
    }

    let mut census = Census::default();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| IngestError::MalformedLine {
            path: path.display().to_string(),
            line: i + 2,
            msg: e.to_string(),
        })?;
        let parse = |j: usize| -> Result<f64> {
            record[j].trim().parse().map_err(|_| IngestError::MalformedLine {
                path: path.display().to_string(),
                line: i + 2,
                msg: format!("bad number {:?} in column {}", &record[j], j),
            })
        };
        let fsa = record[0].trim().to_uppercase();
        let mut row = [0.0; CENSUS_DIMS];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = parse(j + 1)?;
        }
        for &j in &PERCENT_COLUMNS {
            if !(0.0..=100.0).contains(&row[j]) {
                return Err(IngestError::CensusPercentOutOfRange {
                    path: path.display().to_string(),
                    fsa,
                    column: CENSUS_COLUMNS[j].to_string(),
                    value: row[j],
                });
            }
        }
        let vintage = parse(1 + CENSUS_DIMS)? as i32;
        census
            .tables
            .entry(vintage)
            .or_insert_with(|| CensusTable {
                vintage,
                rows: BTreeMap::new(),
            })
            .rows
            .insert(fsa, row);
    }
    if census.tables.is_empty() {
        return Err(IngestError::EmptySource {
            what: format!("census ({})", path.display()),
        });
    }
    Ok(census)
}

/// Codebook CSV columns: category, dim_1..dim_15.
pub fn load_codebook(path: &Path) -> Result<DimensionCodebook> {
    let mut want = vec!["category".to_string()];
    want.extend((1..=SCENE_DIMS).map(|i| format!("dim_{i}")));

    let mut rdr = csv_reader(path)?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| IngestError::MalformedLine {
            path: path.display().to_string(),
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if headers != want {
        return Err(IngestError::BadHeader {
            path: path.display().to_string(),
            want,
        });
    }

    let mut codebook = DimensionCodebook::default();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| IngestError::MalformedLine {
            path: path.display().to_string(),
            line: i + 2,
            msg: e.to_string(),
        })?;
        let category = record[0].trim().to_string();
        let mut row = [0.0; SCENE_DIMS];
        for (j, slot) in row.iter_mut().enumerate() {
            let value: f64 =
                record[j + 1]
                    .trim()
                    .parse()
                    .map_err(|_| IngestError::MalformedLine {
                        path: path.display().to_string(),
                        line: i + 2,
                        msg: format!("bad number {:?}", &record[j + 1]),
                    })?;
            if !(1.0..=5.0).contains(&value) {
                return Err(IngestError::CodebookScoreOutOfRange {
                    path: path.display().to_string(),
                    category,
                    dim: j + 1,
                    value,
                });
            }
            *slot = value;
        }
        codebook.scores.insert(category, row);
    }
    if codebook.scores.is_empty() {
        return Err(IngestError::EmptySource {
            what: format!("codebook ({})", path.display()),
        });
    }
    Ok(codebook)
}

/// Boundary CSV columns: fsa, lat_min, lat_max, lon_min, lon_max.
pub fn load_boundary(path: &Path) -> Result<Vec<BoundaryBox>> {
    let mut rdr = csv_reader(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<BoundaryBox>().enumerate() {
        out.push(rec.map_err(|e| IngestError::MalformedLine {
            path: path.display().to_string(),
            line: i + 2,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
