//! Synthetic city generator for pipeline validation.
//!
//! Emits a schema-valid dataset (venues, reviews, users), census, and
//! codebook in which next-year cultural dimensions follow a known planted
//! process:
//!
//! * `area_driven` — dimensions track each FSA's (static) census attributes
//!   with a year-growing amplitude, so area features carry the signal and a
//!   historical-mean forecast degrades with the drift.
//! * `flow_driven` — each year a random subset of FSAs is "activated" by
//!   visits from group-0 reviewers, and next-year dimensions jump exactly for
//!   the activated FSAs, so edge group counts carry the signal.
//! * `none` — dimensions are pure noise around the midpoint; nothing beats
//!   predicting the midpoint.
//!
//! The trick that makes planted values exact: every (FSA, year) gets its own
//! venue category whose codebook row *is* the planted vector, and venues are
//! only ever reviewed in their own year, so the scene-scoring pipeline
//! reproduces the planted table to float precision.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baselines::FeatureTable;
use crate::eval::{fsa_centroids, CityArtifacts};
use crate::graph::build_year_graph;
use crate::ingest::{
    Census, CensusTable, Dataset, DimensionCodebook, Review, Venue, CENSUS_COLUMNS, CENSUS_DIMS,
    CENSUS_VINTAGES, SCENE_DIMS,
};
use crate::scenes::{SceneEntry, SceneTable};
use crate::seeds::stream_rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible config: {0}")]
    Infeasible(String),
    #[error("failed writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Features(#[from] crate::baselines::BaselineError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// What drives next-year dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DependenceMode {
    AreaDriven,
    FlowDriven,
    /// Pure noise; nothing to learn.
    NoSignal,
}

impl DependenceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DependenceMode::AreaDriven => "area_driven",
            DependenceMode::FlowDriven => "flow_driven",
            DependenceMode::NoSignal => "none",
        }
    }

    pub fn from_str(name: &str) -> Option<DependenceMode> {
        match name.to_lowercase().as_str() {
            "area_driven" => Some(DependenceMode::AreaDriven),
            "flow_driven" => Some(DependenceMode::FlowDriven),
            "none" => Some(DependenceMode::NoSignal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub city: String,
    pub mode: DependenceMode,
    pub n_fsas: usize,
    pub n_users: usize,
    pub n_groups: usize,
    /// Inclusive year range.
    pub years: (i32, i32),
    /// Std-dev of the noise added to every planted dimension.
    pub noise: f64,
    /// area_driven only: per-year trend magnitude. The trend direction comes
    /// from census components that never appear in scene levels, so a larger
    /// drift both widens the census advantage and hurts the historical-mean
    /// forecast.
    pub drift: f64,
    /// Venues created per (FSA, year); each carries that cell's category.
    pub venues_per_fsa_year: usize,
}

impl SynthConfig {
    pub fn new(city: &str, mode: DependenceMode) -> SynthConfig {
        SynthConfig {
            city: city.to_string(),
            mode,
            n_fsas: 8,
            n_users: 60,
            n_groups: 3,
            years: (2011, 2018),
            noise: 0.05,
            drift: 0.08,
            venues_per_fsa_year: 4,
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(SynthError::Infeasible(msg.to_string()));
        if self.n_fsas < 2 {
            return fail("mobility needs at least 2 FSAs");
        }
        if self.mode == DependenceMode::FlowDriven && self.n_fsas < 3 {
            return fail("flow_driven needs at least 3 FSAs");
        }
        if self.n_users < self.n_fsas {
            return fail("need at least one resident user per FSA");
        }
        if self.n_groups < 1 || (self.mode == DependenceMode::FlowDriven && self.n_groups < 2) {
            return fail("flow_driven needs at least 2 reviewer groups");
        }
        if self.years.1 <= self.years.0 {
            return fail("need at least two years");
        }
        if self.venues_per_fsa_year < 1 {
            return fail("need at least one venue per FSA-year");
        }
        if self.noise < 0.0 {
            return fail("noise must be non-negative");
        }
        if self.n_fsas > 260 {
            return fail("at most 260 FSAs can be coded");
        }
        Ok(())
    }
}

/// A generated city plus everything needed to check models against the
/// planted ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticCity {
    pub config: SynthConfig,
    pub seed: u64,
    pub dataset: Dataset,
    pub census: Census,
    pub codebook: DimensionCodebook,
    /// The planted dimensions the pipeline should reproduce.
    pub truth: SceneTable,
    /// Planted reviewer groups (every user is profiled).
    pub groups: BTreeMap<String, usize>,
    /// flow_driven only: the activated FSA indices per year.
    pub activated: BTreeMap<i32, BTreeSet<usize>>,
}

fn fsa_code(i: usize) -> String {
    let letter = (b'A' + (i / 10) as u8) as char;
    format!("Z{}{}", i % 10, letter)
}

/// Letters-only index encoding (digits vanish in token normalization).
fn alpha_code(mut i: usize) -> String {
    let mut out = String::new();
    loop {
        out.insert(0, (b'a' + (i % 26) as u8) as char);
        i /= 26;
        if i == 0 {
            break;
        }
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    // Box-Muller; both uniforms strictly inside (0, 1)
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

const BASE_LEVEL: f64 = 3.0;
const AREA_BASE_AMPLITUDE: f64 = 0.5;
const FLOW_JUMP: f64 = 0.45;
/// area_driven: latent components below this index set static scene levels;
/// the remaining components drive each FSA's yearly trend. Levels alone are
/// then a strictly underdetermined view of the trend, so the census block
/// carries real predictive information.
const AREA_LEVEL_COMPONENTS: usize = 5;

pub fn generate_synthetic_city(config: &SynthConfig, seed: u64) -> Result<SyntheticCity> {
    config.validate()?;
    let (y0, y1) = config.years;
    let years: Vec<i32> = (y0..=y1).collect();
    let n_fsas = config.n_fsas;

    // latent census attributes in [-1, 1], reused cyclically by dimensions
    let mut rng = stream_rng(seed, "synth_census");
    let latent: Vec<[f64; CENSUS_DIMS]> = (0..n_fsas)
        .map(|_| {
            let mut row = [0.0; CENSUS_DIMS];
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            row
        })
        .collect();

    let mut census = Census::default();
    for &vintage in &CENSUS_VINTAGES {
        let mut rows = BTreeMap::new();
        for (f, u) in latent.iter().enumerate() {
            let mut row = [0.0; CENSUS_DIMS];
            for (c, v) in row.iter_mut().enumerate() {
                *v = match c {
                    1 => 1200.0 + 400.0 * u[c],   // avg_rent
                    3 => 60_000.0 + 15_000.0 * u[c], // median_income
                    _ => 50.0 + 40.0 * u[c],      // percent columns
                };
            }
            rows.insert(fsa_code(f), row);
        }
        census.tables.insert(vintage, CensusTable { vintage, rows });
    }

    // flow mode: activated FSA subset per year, redrawn independently
    let mut rng = stream_rng(seed, "synth_flows");
    let mut activated: BTreeMap<i32, BTreeSet<usize>> = BTreeMap::new();
    if config.mode == DependenceMode::FlowDriven {
        let subset_size = (n_fsas / 3).max(1);
        for &year in &years {
            let mut all: Vec<usize> = (0..n_fsas).collect();
            all.shuffle(&mut rng);
            activated.insert(year, all.into_iter().take(subset_size).collect());
        }
    }

    // planted truth
    let mut rng = stream_rng(seed, "synth_dims");
    let mut truth = SceneTable {
        city: config.city.clone(),
        years: BTreeMap::new(),
    };
    for (yi, &year) in years.iter().enumerate() {
        let mut year_scenes = BTreeMap::new();
        for f in 0..n_fsas {
            let mut dims = [0.0; SCENE_DIMS];
            for (d, v) in dims.iter_mut().enumerate() {
                let signal = match config.mode {
                    DependenceMode::AreaDriven => {
                        let trend_components = CENSUS_DIMS - AREA_LEVEL_COMPONENTS;
                        let trend = latent[f][AREA_LEVEL_COMPONENTS + d % trend_components];
                        AREA_BASE_AMPLITUDE * latent[f][d % AREA_LEVEL_COMPONENTS]
                            + config.drift * yi as f64 * trend
                    }
                    DependenceMode::FlowDriven => {
                        if yi == 0 {
                            0.0
                        } else {
                            // previous year's activation drives this year
                            let prev = &activated[&years[yi - 1]];
                            if prev.contains(&f) {
                                FLOW_JUMP
                            } else {
                                -FLOW_JUMP
                            }
                        }
                    }
                    DependenceMode::NoSignal => 0.0,
                };
                *v = (BASE_LEVEL + signal + gaussian(&mut rng, config.noise)).clamp(1.0, 5.0);
            }
            year_scenes.insert(
                fsa_code(f),
                SceneEntry {
                    dims,
                    omega: config.venues_per_fsa_year,
                },
            );
        }
        truth.years.insert(year, year_scenes);
    }

    // codebook + venues: one category per (FSA, year) whose row is the
    // planted vector; venues carrying it exist only for that year
    let mut codebook = DimensionCodebook::default();
    let mut venues: BTreeMap<String, Venue> = BTreeMap::new();
    let venue_id = |f: usize, yi: usize, k: usize| format!("v{f:03}y{yi:02}k{k}");
    let mut rng = stream_rng(seed, "synth_venues");
    for (yi, &year) in years.iter().enumerate() {
        for f in 0..n_fsas {
            let category = format!("taste {} {}", alpha_code(f), alpha_code(yi));
            codebook
                .scores
                .insert(category.clone(), truth.years[&year][&fsa_code(f)].dims);
            for k in 0..config.venues_per_fsa_year {
                let id = venue_id(f, yi, k);
                venues.insert(
                    id.clone(),
                    Venue {
                        venue_id: id,
                        fsa: fsa_code(f),
                        categories: vec![category.clone()],
                        lat: Some(43.0 + rng.gen_range(-0.02..0.02)),
                        lon: Some(-79.6 + 0.1 * f as f64 + rng.gen_range(-0.02..0.02)),
                    },
                );
            }
        }
    }

    // users, groups, reviews
    let user_id = |i: usize| format!("u{i:04}");
    let mut groups = BTreeMap::new();
    let mut users = BTreeSet::new();
    for i in 0..config.n_users {
        groups.insert(user_id(i), i % config.n_groups);
        users.insert(user_id(i));
    }

    let mut rng = stream_rng(seed, "synth_reviews");
    let mut reviews: Vec<Review> = Vec::new();
    let mut reviewed: BTreeSet<String> = BTreeSet::new();
    let push_review = |reviews: &mut Vec<Review>,
                           reviewed: &mut BTreeSet<String>,
                           user: usize,
                           vid: String,
                           year: i32| {
        reviewed.insert(vid.clone());
        reviews.push(Review {
            user_id: user_id(user),
            venue_id: vid,
            year,
        });
    };
    for (yi, &year) in years.iter().enumerate() {
        for i in 0..config.n_users {
            let home = i % n_fsas;
            let group = i % config.n_groups;
            // two distinct home venues (or the single one)
            let mut ks: Vec<usize> = (0..config.venues_per_fsa_year).collect();
            ks.shuffle(&mut rng);
            for &k in ks.iter().take(2.min(ks.len())) {
                push_review(&mut reviews, &mut reviewed, i, venue_id(home, yi, k), year);
            }
            // one trip to another FSA
            let dest = if config.mode == DependenceMode::FlowDriven && group == 0 {
                let targets: Vec<usize> = activated[&year]
                    .iter()
                    .copied()
                    .filter(|&f| f != home)
                    .collect();
                match targets.as_slice() {
                    [] => (home + 1) % n_fsas, // home is the only activated FSA
                    t => t[rng.gen_range(0..t.len())],
                }
            } else {
                let mut d = rng.gen_range(0..n_fsas - 1);
                if d >= home {
                    d += 1;
                }
                d
            };
            let k = rng.gen_range(0..config.venues_per_fsa_year);
            push_review(&mut reviews, &mut reviewed, i, venue_id(dest, yi, k), year);
        }
    }
    // coverage pass: every venue gets at least one review in its year from a
    // resident, so each (FSA, year) scene is scored from all its venues
    for (yi, &year) in years.iter().enumerate() {
        for f in 0..n_fsas {
            for k in 0..config.venues_per_fsa_year {
                let vid = venue_id(f, yi, k);
                if !reviewed.contains(&vid) {
                    push_review(&mut reviews, &mut reviewed, f, vid, year);
                }
            }
        }
    }

    let dataset = Dataset::from_parts(&config.city, venues, reviews, users);
    Ok(SyntheticCity {
        config: config.clone(),
        seed,
        dataset,
        census,
        codebook,
        truth,
        groups,
        activated,
    })
}

/// Builds the evaluation inputs (yearly graphs over planted groups, scene
/// table recomputed through the scoring pipeline, feature table, centroids).
pub fn prepare_artifacts(city: &SyntheticCity) -> Result<CityArtifacts> {
    let (y0, y1) = city.config.years;
    let scenes = crate::scenes::build_scene_table(&city.dataset, &city.codebook, y0..=y1)
        .map_err(|e| SynthError::Infeasible(format!("scene scoring failed: {e}")))?;
    let mut graphs = BTreeMap::new();
    for year in y0..=y1 {
        graphs.insert(
            year,
            build_year_graph(
                &city.dataset,
                year,
                &city.groups,
                city.config.n_groups,
                &city.census,
                &scenes,
            )?,
        );
    }
    let features = FeatureTable::build(&scenes, Some(&city.census), y0..=y1)?;
    let centroid_lon = fsa_centroids(&city.dataset)
        .into_iter()
        .map(|(fsa, (_, lon))| (fsa, lon))
        .collect();
    Ok(CityArtifacts {
        city: city.config.city.clone(),
        graphs,
        scenes,
        features,
        centroid_lon,
    })
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

fn json_escape(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

/// Writes the generated city as loadable input files plus ground-truth
/// sidecars; returns the paths written.
pub fn write_city(city: &SyntheticCity, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| SynthError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();

    let mut venues = String::new();
    for v in city.dataset.venues.values() {
        writeln!(
            venues,
            "{{\"business_id\":{},\"categories\":{},\"postal_code\":{},\"latitude\":{},\"longitude\":{}}}",
            json_escape(&v.venue_id),
            json_escape(&v.categories.join(", ")),
            json_escape(&format!("{}1A1", v.fsa)),
            v.lat.unwrap_or(0.0),
            v.lon.unwrap_or(0.0)
        )
        .expect("write to string");
    }
    written.push(write_file(dir, "venues.jsonl", &venues)?);

    let mut reviews = String::new();
    for r in &city.dataset.reviews {
        writeln!(
            reviews,
            "{{\"user_id\":{},\"business_id\":{},\"date\":\"{}-06-15\"}}",
            json_escape(&r.user_id),
            json_escape(&r.venue_id),
            r.year
        )
        .expect("write to string");
    }
    written.push(write_file(dir, "reviews.jsonl", &reviews)?);

    let mut users = String::new();
    for u in &city.dataset.users {
        writeln!(users, "{{\"user_id\":{}}}", json_escape(u)).expect("write to string");
    }
    written.push(write_file(dir, "users.jsonl", &users)?);

    let mut census = format!("fsa,{},vintage\n", CENSUS_COLUMNS.join(","));
    for table in city.census.tables.values() {
        for (fsa, row) in &table.rows {
            census.push_str(fsa);
            for v in row {
                census.push_str(&format!(",{v}"));
            }
            census.push_str(&format!(",{}\n", table.vintage));
        }
    }
    written.push(write_file(dir, "census.csv", &census)?);

    let mut codebook = String::from("category");
    for i in 1..=SCENE_DIMS {
        codebook.push_str(&format!(",dim_{i}"));
    }
    codebook.push('\n');
    for (category, row) in &city.codebook.scores {
        codebook.push_str(category);
        for v in row {
            codebook.push_str(&format!(",{v}"));
        }
        codebook.push('\n');
    }
    written.push(write_file(dir, "codebook.csv", &codebook)?);

    written.push(write_file(dir, "truth_scenes.csv", &city.truth.to_csv_string())?);

    let mut groups = String::from("user_id,group\n");
    for (user, group) in &city.groups {
        groups.push_str(&format!("{user},{group}\n"));
    }
    written.push(write_file(dir, "groups.csv", &groups)?);

    Ok(written)
}
