//! Per-business guest-composition estimates from positive detections, and GeoJSON export.
//!
//! An estimate is a share of nationality *mentions*, not of guests: one count per distinct
//! country per positive sentence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{Sentence, SentenceId};
use crate::country::CountryCode;
use crate::gazetteer::Gazetteer;

#[derive(Debug, Error)]
pub enum CompositionError {
    #[error("{sentences} sentences but {predictions} predictions")]
    Misaligned {
        sentences: usize,
        predictions: usize,
    },
    #[error("business '{business_id}': invalid coordinates lat={lat}, lon={lon}")]
    InvalidCoordinates {
        business_id: String,
        lat: f64,
        lon: f64,
    },
    #[error("nothing to export")]
    NoEstimates,
    #[error("unknown window '{0}' (expected month, quarter or all)")]
    UnknownWindow(String),
    #[error("line {line}: {message}")]
    Locations { line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub business_id: String,
    pub country: CountryCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    pub sentence_id: SentenceId,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MentionExtraction {
    pub records: Vec<MentionRecord>,
    /// Positive sentences without any gazetteer span.
    pub unattributed: usize,
}

/// One record per distinct country among the spans of each positive sentence.
pub fn extract_mentions(
    sentences: &[Sentence],
    predictions: &[bool],
    gazetteer: &Gazetteer,
) -> Result<MentionExtraction, CompositionError> {
    if sentences.len() != predictions.len() {
        return Err(CompositionError::Misaligned {
            sentences: sentences.len(),
            predictions: predictions.len(),
        });
    }
    let mut out = MentionExtraction::default();
    for (s, _) in sentences.iter().zip(predictions).filter(|(_, &p)| p) {
        let countries: BTreeSet<CountryCode> = gazetteer
            .match_sentence(s)
            .into_iter()
            .map(|span| span.country)
            .collect();
        if countries.is_empty() {
            out.unattributed += 1;
        }
        out.records
            .extend(countries.into_iter().map(|country| MentionRecord {
                business_id: s.business_id.clone(),
                country,
                date: s.date,
                sentence_id: s.sentence_id,
            }));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Month,
    Quarter,
    All,
}

impl FromStr for Window {
    type Err = CompositionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "month" => Ok(Window::Month),
            "quarter" => Ok(Window::Quarter),
            "all" | "all-time" => Ok(Window::All),
            other => Err(CompositionError::UnknownWindow(other.to_string())),
        }
    }
}

/// `(start, end]`: `start` is the day before the first covered day, `end` the last.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowKey {
    Range {
        label: String,
        start: NaiveDate,
        end: NaiveDate,
    },
    AllTime,
}

impl WindowKey {
    pub fn label(&self) -> &str {
        match self {
            WindowKey::Range { label, .. } => label,
            WindowKey::AllTime => "all-time",
        }
    }

    fn of(window: Window, date: Option<NaiveDate>) -> Option<WindowKey> {
        let months = match window {
            Window::All => return Some(WindowKey::AllTime),
            Window::Month => 1,
            Window::Quarter => 3,
        };
        let date = date?;
        let first_month = (date.month0() / months) * months + 1;
        let first = NaiveDate::from_ymd_opt(date.year(), first_month, 1)?;
        let (ny, nm) = if first_month + months > 12 {
            (date.year() + 1, first_month + months - 12)
        } else {
            (date.year(), first_month + months)
        };
        let next = NaiveDate::from_ymd_opt(ny, nm, 1)?;
        let label = match window {
            Window::Month => format!("{:04}-{:02}", date.year(), first_month),
            _ => format!("{:04}-Q{}", date.year(), (first_month - 1) / 3 + 1),
        };
        Some(WindowKey::Range {
            label,
            start: first - Duration::days(1),
            end: next - Duration::days(1),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionEstimate {
    pub business_id: String,
    pub window: WindowKey,
    pub shares: BTreeMap<CountryCode, f64>,
    pub counts: BTreeMap<CountryCode, usize>,
    pub support: usize,
}

pub const DEFAULT_MIN_SUPPORT: usize = 30;

/// Groups records by business and window, dropping groups with fewer than `min_support`
/// mentions. Undated records only count towards [`Window::All`]. Output is sorted by
/// business and window.
pub fn aggregate(
    records: &[MentionRecord],
    window: Window,
    min_support: usize,
) -> Vec<CompositionEstimate> {
    let mut groups: BTreeMap<(String, WindowKey), BTreeMap<CountryCode, usize>> = BTreeMap::new();
    for r in records {
        let Some(key) = WindowKey::of(window, r.date) else {
            continue;
        };
        *groups
            .entry((r.business_id.clone(), key))
            .or_default()
            .entry(r.country)
            .or_default() += 1;
    }
    groups
        .into_iter()
        .filter_map(|((business_id, window), counts)| {
            let support: usize = counts.values().sum();
            if support == 0 || support < min_support {
                return None;
            }
            let shares = counts
                .iter()
                .map(|(&c, &n)| (c, n as f64 / support as f64))
                .collect();
            Some(CompositionEstimate {
                business_id,
                window,
                shares,
                counts,
                support,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub lat: f64,
    pub lon: f64,
}

impl Location {
    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && self.lat.abs() <= 90.0
            && self.lon.abs() <= 180.0
    }
}

/// Locations CSV with header `business_id,lat,lon`.
pub fn read_locations<R: Read>(reader: R) -> Result<HashMap<String, Location>, CompositionError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let err = |line: usize, message: String| CompositionError::Locations { line, message };
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(b), Some(la), Some(lo)) = (col("business_id"), col("lat"), col("lon")) else {
        return Err(err(1, "header must contain business_id, lat, lon".into()));
    };
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<f64, CompositionError> {
            let v = rec.get(i).unwrap_or("").trim();
            v.parse()
                .map_err(|_| err(line, format!("invalid number '{v}'")))
        };
        let business = rec.get(b).unwrap_or("").trim().to_string();
        out.insert(
            business,
            Location {
                lat: num(la)?,
                lon: num(lo)?,
            },
        );
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnlocatedEstimate {
    pub business_id: String,
    pub window: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeoJsonExport {
    pub collection: Value,
    pub unlocated: Vec<UnlocatedEstimate>,
}

impl GeoJsonExport {
    /// Canonical text: object keys sorted, two-space indentation.
    pub fn to_string_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.collection).expect("GeoJSON value serializes")
    }
}

/// One `Point` feature per estimate with a known business location. Coordinates are
/// `[lon, lat]`. Estimates without a location are returned in `unlocated`.
pub fn export_geojson(
    estimates: &[CompositionEstimate],
    locations: &HashMap<String, Location>,
) -> Result<GeoJsonExport, CompositionError> {
    if estimates.is_empty() {
        return Err(CompositionError::NoEstimates);
    }
    let mut features = Vec::new();
    let mut unlocated = Vec::new();
    for e in estimates {
        let Some(loc) = locations.get(&e.business_id) else {
            unlocated.push(UnlocatedEstimate {
                business_id: e.business_id.clone(),
                window: e.window.label().to_string(),
            });
            continue;
        };
        if !loc.is_valid() {
            return Err(CompositionError::InvalidCoordinates {
                business_id: e.business_id.clone(),
                lat: loc.lat,
                lon: loc.lon,
            });
        }
        let shares: serde_json::Map<String, Value> = e
            .shares
            .iter()
            .map(|(c, &s)| (c.to_string(), json!(s)))
            .collect();
        let mut properties = json!({
            "business_id": e.business_id,
            "window": e.window.label(),
            "support": e.support,
            "shares": shares,
        });
        if let WindowKey::Range { start, end, .. } = &e.window {
            properties["window_start"] = json!(start.to_string());
            properties["window_end"] = json!(end.to_string());
        }
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": [loc.lon, loc.lat] },
            "properties": properties,
        }));
    }
    Ok(GeoJsonExport {
        collection: json!({ "type": "FeatureCollection", "features": features }),
        unlocated,
    })
}
