//! Right-censored survival data, risk sets, CSV ingestion and synthetic generators.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub event: bool,
}

/// Borrowed view of one row.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub index: usize,
    pub features: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RiskSet {
    pub anchor: usize,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SurvivalDataset {
    features: Vec<f64>,
    d: usize,
    observations: Vec<Observation>,
    feature_names: Vec<String>,
    classes: Option<Vec<usize>>,
    order: Vec<usize>,
    rank: Vec<usize>,
    tie_start: Vec<usize>,
}

impl SurvivalDataset {
    /// `features` is row-major with `d` columns.
    pub fn new(features: Vec<f64>, d: usize, observations: Vec<Observation>) -> Result<Self> {
        let n = observations.len();
        if n == 0 {
            return Err(invalid("dataset must contain at least one sample"));
        }
        if features.len() != n * d {
            return Err(invalid(format!(
                "feature buffer has {} entries, expected {n} x {d}",
                features.len()
            )));
        }
        if let Some(k) = features.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite feature in row {}",
                k / d.max(1)
            )));
        }
        for (i, o) in observations.iter().enumerate() {
            if !(o.time.is_finite() && o.time > 0.0) {
                return Err(invalid(format!(
                    "row {i}: time must be positive and finite, got {}",
                    o.time
                )));
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            observations[a]
                .time
                .total_cmp(&observations[b].time)
                .then(a.cmp(&b))
        });
        let mut rank = vec![0; n];
        for (p, &i) in order.iter().enumerate() {
            rank[i] = p;
        }
        let mut tie_start = vec![0; n];
        let mut first = 0;
        for p in 0..n {
            if observations[order[p]].time != observations[order[first]].time {
                first = p;
            }
            tie_start[order[p]] = first;
        }
        let feature_names = (0..d).map(|k| format!("f{k}")).collect();
        Ok(Self {
            features,
            d,
            observations,
            feature_names,
            classes: None,
            order,
            rank,
            tie_start,
        })
    }

    pub fn from_columns(
        times: &[f64],
        events: &[bool],
        features: Vec<f64>,
        d: usize,
    ) -> Result<Self> {
        if times.len() != events.len() {
            return Err(invalid("times and events differ in length"));
        }
        let obs = times
            .iter()
            .zip(events)
            .map(|(&time, &event)| Observation { time, event })
            .collect();
        Self::new(features, d, obs)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            return Err(invalid("feature name count does not match d"));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn with_classes(mut self, classes: Vec<usize>) -> Result<Self> {
        if classes.len() != self.n() {
            return Err(invalid("class vector length does not match n"));
        }
        self.classes = Some(classes);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        Sample {
            index: i,
            features: self.x(i),
        }
    }

    pub fn time(&self, i: usize) -> f64 {
        self.observations[i].time
    }

    pub fn event(&self, i: usize) -> bool {
        self.observations[i].event
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn classes(&self) -> Option<&[usize]> {
        self.classes.as_deref()
    }

    /// Sample indices by ascending time, ties broken by index.
    pub fn sorted_order(&self) -> &[usize] {
        &self.order
    }

    /// Position of sample `i` in `sorted_order`.
    pub fn rank(&self, i: usize) -> usize {
        self.rank[i]
    }

    /// First position in `sorted_order` whose time equals `O_i`; the risk set
    /// of `i` is the suffix of `sorted_order` starting there.
    pub fn risk_start(&self, i: usize) -> usize {
        self.tie_start[i]
    }

    pub fn risk_members(&self, i: usize) -> &[usize] {
        &self.order[self.tie_start[i]..]
    }

    pub fn risk_set(&self, i: usize) -> Result<RiskSet> {
        if i >= self.n() {
            return Err(invalid(format!(
                "sample index {i} out of range (n = {})",
                self.n()
            )));
        }
        let mut members = self.risk_members(i).to_vec();
        members.sort_unstable();
        Ok(RiskSet { anchor: i, members })
    }

    pub fn n_events(&self) -> usize {
        self.observations.iter().filter(|o| o.event).count()
    }

    pub fn censoring_rate(&self) -> f64 {
        1.0 - self.n_events() as f64 / self.n() as f64
    }

    pub fn has_ties(&self) -> bool {
        self.order
            .windows(2)
            .any(|w| self.time(w[0]) == self.time(w[1]))
    }

    pub fn time_range(&self) -> (f64, f64) {
        (
            self.time(self.order[0]),
            self.time(self.order[self.n() - 1]),
        )
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut feats = Vec::with_capacity(indices.len() * self.d);
        let mut obs = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n() {
                return Err(invalid(format!("subset index {i} out of range")));
            }
            feats.extend_from_slice(self.x(i));
            obs.push(self.observations[i]);
        }
        let mut out =
            Self::new(feats, self.d, obs)?.with_feature_names(self.feature_names.clone())?;
        if let Some(c) = &self.classes {
            out.classes = Some(indices.iter().map(|&i| c[i]).collect());
        }
        Ok(out)
    }

    /// Seeded split into (train, holdout) with `holdout_frac` of rows held out.
    pub fn split(&self, holdout_frac: f64, seed: u64) -> Result<(Self, Self)> {
        let n = self.n();
        let n_hold = ((n as f64) * holdout_frac).round() as usize;
        if n_hold == 0 || n_hold >= n {
            return Err(invalid("holdout split leaves an empty side"));
        }
        let mut rng = seed::stream(seed, "split");
        let mut held = sample_indices(&mut rng, n, n_hold).into_vec();
        held.sort_unstable();
        let mut is_held = vec![false; n];
        for &i in &held {
            is_held[i] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&i| !is_held[i]).collect();
        Ok((self.subset(&train)?, self.subset(&held)?))
    }

    /// Append a constant-one feature column.
    pub fn with_intercept(&self) -> Self {
        let d = self.d + 1;
        let mut feats = Vec::with_capacity(self.n() * d);
        for i in 0..self.n() {
            feats.extend_from_slice(self.x(i));
            feats.push(1.0);
        }
        let mut names = self.feature_names.clone();
        names.push("intercept".into());
        let mut out =
            Self::new(feats, d, self.observations.clone()).expect("valid by construction");
        out.feature_names = names;
        out.classes = self.classes.clone();
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.feature_names.clone();
        header.push("time".into());
        header.push("event".into());
        if self.classes.is_some() {
            header.push("class".into());
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut row: Vec<String> = self.x(i).iter().map(|v| v.to_string()).collect();
            row.push(self.time(i).to_string());
            row.push(if self.event(i) { "1" } else { "0" }.into());
            if let Some(c) = &self.classes {
                row.push(c[i].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Column mapping for [`load_csv`]. `features = None` takes every column
/// other than time, event and class.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub time: String,
    pub event: String,
    pub class: Option<String>,
    pub features: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time: "time".into(),
            event: "event".into(),
            class: None,
            features: None,
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
}

fn parse_f64(s: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| invalid(format!("row {row}: column `{col}` is not a number: `{s}`")))?;
    if !v.is_finite() {
        return Err(invalid(format!("row {row}: column `{col}` is not finite")));
    }
    Ok(v)
}

fn parse_flag(s: &str, row: usize, col: &str) -> Result<bool> {
    match s.trim() {
        "1" | "1.0" | "true" => Ok(true),
        "0" | "0.0" | "false" => Ok(false),
        other => Err(invalid(format!(
            "row {row}: column `{col}` must be 0/1, got `{other}`"
        ))),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<SurvivalDataset> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers()?.clone();
    let t_col = column(&headers, &schema.time)?;
    let e_col = column(&headers, &schema.event)?;
    let c_col = schema
        .class
        .as_deref()
        .map(|c| column(&headers, c))
        .transpose()?;
    let feat_names: Vec<String> = match &schema.features {
        Some(f) => f.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != t_col && *k != e_col && Some(*k) != c_col)
            .map(|(_, h)| h.trim().to_string())
            .collect(),
    };
    let f_cols = feat_names
        .iter()
        .map(|f| column(&headers, f))
        .collect::<Result<Vec<_>>>()?;

    let mut feats = Vec::new();
    let mut obs = Vec::new();
    let mut classes = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        for (name, &k) in feat_names.iter().zip(&f_cols) {
            feats.push(parse_f64(&rec[k], row, name)?);
        }
        let time = parse_f64(&rec[t_col], row, &schema.time)?;
        if time <= 0.0 {
            return Err(invalid(format!(
                "row {row}: time must be positive, got {time}"
            )));
        }
        let event = parse_flag(&rec[e_col], row, &schema.event)?;
        obs.push(Observation { time, event });
        if let Some(k) = c_col {
            let c: usize = rec[k]
                .trim()
                .parse()
                .map_err(|_| invalid(format!("row {row}: class must be a non-negative integer")))?;
            classes.push(c);
        }
    }
    let ds = SurvivalDataset::new(feats, feat_names.len(), obs)?.with_feature_names(feat_names)?;
    if c_col.is_some() {
        ds.with_classes(classes)
    } else {
        Ok(ds)
    }
}

/// Finds `c` such that the fraction of `event_times[i] > c * base[i]` is within
/// 0.05 of `target`. The fraction is non-increasing in `c`.
fn calibrate_censoring(event_times: &[f64], base: &[f64], target: f64) -> Result<f64> {
    let frac = |c: f64| {
        event_times
            .iter()
            .zip(base)
            .filter(|(t, b)| c * **b < **t)
            .count() as f64
            / event_times.len() as f64
    };
    let t_max = event_times.iter().cloned().fold(0.0, f64::max);
    let b_min = base
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .max(1e-300);
    let (mut lo, mut hi) = (0.0, 2.0 * t_max / b_min);
    let mut best = (f64::INFINITY, hi);
    for _ in 0..100 {
        let c = 0.5 * (lo + hi);
        let f = frac(c);
        if (f - target).abs() < best.0 {
            best = ((f - target).abs(), c);
        }
        if f > target {
            lo = c;
        } else {
            hi = c;
        }
    }
    if best.0 <= 0.05 {
        Ok(best.1)
    } else {
        Err(Error::Calibration {
            target,
            reached: frac(best.1),
        })
    }
}

/// Linear Cox data with unit baseline hazard. When `theta` is `None` it is
/// drawn uniformly on `[-1, 1]^d / sqrt(d)`.
pub fn generate_linear_cox(
    n: usize,
    d: usize,
    theta: Option<&[f64]>,
    censor_frac: f64,
    seed: u64,
) -> Result<(SurvivalDataset, Vec<f64>)> {
    if n < 2 || d < 1 {
        return Err(invalid("generator needs n >= 2 and d >= 1"));
    }
    if !(0.0..=1.0).contains(&censor_frac) {
        return Err(invalid("censor_frac must lie in [0, 1]"));
    }
    let theta: Vec<f64> = match theta {
        Some(t) if t.len() == d => t.to_vec(),
        Some(_) => return Err(invalid("theta length does not match d")),
        None => {
            let mut rng = seed::stream(seed, "theta");
            let scale = (d as f64).sqrt();
            (0..d)
                .map(|_| rng.random_range(-1.0..1.0) / scale)
                .collect()
        }
    };
    let mut rng = seed::stream(seed, "features");
    let feats: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let mut rng = seed::stream(seed, "event-times");
    let times: Vec<f64> = (0..n)
        .map(|i| {
            let eta: f64 = feats[i * d..(i + 1) * d]
                .iter()
                .zip(&theta)
                .map(|(x, t)| x * t)
                .sum();
            Exp::new(eta.exp()).expect("positive rate").sample(&mut rng)
        })
        .collect();
    let obs: Vec<Observation> = if censor_frac == 0.0 {
        times
            .iter()
            .map(|&time| Observation { time, event: true })
            .collect()
    } else {
        let mut rng = seed::stream(seed, "censoring");
        let base: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
        let c = calibrate_censoring(&times, &base, censor_frac)?;
        times
            .iter()
            .zip(&base)
            .map(|(&t, &b)| {
                let cens = c * b;
                if t <= cens {
                    Observation {
                        time: t,
                        event: true,
                    }
                } else {
                    Observation {
                        time: cens,
                        event: false,
                    }
                }
            })
            .collect()
    };
    Ok((SurvivalDataset::new(feats, d, obs)?, theta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Impression {
    pub item: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Journey {
    pub id: usize,
    pub impressions: Vec<Impression>,
    /// Clicked item and click time.
    pub event: Option<(usize, f64)>,
    /// Click time for events, censoring time otherwise.
    pub end_time: f64,
}

impl Journey {
    /// Items still at risk at the journey's end time.
    pub fn at_risk(&self) -> impl Iterator<Item = usize> + '_ {
        self.impressions
            .iter()
            .filter(move |im| im.time <= self.end_time)
            .map(|im| im.item)
    }
}

#[derive(Debug, Clone)]
pub struct JourneyDataset {
    pub journeys: Vec<Journey>,
    items: Vec<f64>,
    d: usize,
}

pub const ADS_DIM: usize = 50;
pub const ADS_CENSORING: f64 = 0.483;

impl JourneyDataset {
    pub fn new(journeys: Vec<Journey>, items: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 || items.len() % d != 0 {
            return Err(invalid("item feature table has the wrong shape"));
        }
        let n_items = items.len() / d;
        for j in &journeys {
            if j.impressions.is_empty() {
                return Err(invalid(format!("journey {} has no impressions", j.id)));
            }
            for im in &j.impressions {
                if im.item >= n_items {
                    return Err(invalid(format!(
                        "journey {}: unknown item {}",
                        j.id, im.item
                    )));
                }
            }
            if let Some((item, t)) = j.event {
                let shown = j
                    .impressions
                    .iter()
                    .any(|im| im.item == item && im.time <= t);
                if !shown {
                    return Err(invalid(format!(
                        "journey {}: event item {item} absent from its impressions",
                        j.id
                    )));
                }
            }
        }
        Ok(Self { journeys, items, d })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_items(&self) -> usize {
        self.items.len() / self.d
    }

    pub fn item(&self, k: usize) -> &[f64] {
        &self.items[k * self.d..(k + 1) * self.d]
    }

    pub fn item_features(&self) -> &[f64] {
        &self.items
    }

    pub fn n_events(&self) -> usize {
        self.journeys.iter().filter(|j| j.event.is_some()).count()
    }

    pub fn censoring_rate(&self) -> f64 {
        1.0 - self.n_events() as f64 / self.journeys.len().max(1) as f64
    }

    pub fn n_impressions(&self) -> usize {
        self.journeys.iter().map(|j| j.impressions.len()).sum()
    }

    /// Writes the impression table and the item sidecar.
    pub fn write_csv(&self, journeys: &Path, items: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(journeys)?;
        w.write_record([
            "journey_id",
            "item_id",
            "impression_time",
            "event",
            "end_time",
        ])?;
        for j in &self.journeys {
            for im in &j.impressions {
                let clicked = j.event.is_some_and(|(it, _)| it == im.item);
                w.write_record([
                    j.id.to_string(),
                    im.item.to_string(),
                    im.time.to_string(),
                    (clicked as u8).to_string(),
                    j.end_time.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(journeys, e))?;
        let mut w = csv::Writer::from_path(items)?;
        let mut header = vec!["item_id".to_string()];
        header.extend((0..self.d).map(|k| format!("f{k}")));
        w.write_record(&header)?;
        for k in 0..self.n_items() {
            let mut row = vec![k.to_string()];
            row.extend(self.item(k).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(items, e))?;
        Ok(())
    }

    pub fn load_csv(journeys: &Path, items: &Path) -> Result<Self> {
        let mut rdr = open_csv(items)?;
        let headers = rdr.headers()?.clone();
        let id_col = column(&headers, "item_id")?;
        let f_cols: Vec<usize> = (0..headers.len()).filter(|&k| k != id_col).collect();
        let mut rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let id: usize = rec[id_col]
                .parse()
                .map_err(|_| invalid(format!("item row {}: bad item_id", r + 1)))?;
            let f = f_cols
                .iter()
                .map(|&k| parse_f64(&rec[k], r + 1, &headers[k]))
                .collect::<Result<Vec<_>>>()?;
            rows.insert(id, f);
        }
        let d = f_cols.len();
        let n_items = rows.len();
        if rows.keys().enumerate().any(|(k, &id)| k != id) {
            return Err(invalid("item ids must be 0..n_items without gaps"));
        }
        let items: Vec<f64> = rows.into_values().flatten().collect();

        let mut rdr = open_csv(journeys)?;
        let headers = rdr.headers()?.clone();
        let j_col = column(&headers, "journey_id")?;
        let i_col = column(&headers, "item_id")?;
        let t_col = column(&headers, "impression_time")?;
        let e_col = column(&headers, "event")?;
        let end_col = column(&headers, "end_time")?;
        let mut map: BTreeMap<usize, Journey> = BTreeMap::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = r + 1;
            let id: usize = rec[j_col]
                .parse()
                .map_err(|_| invalid(format!("row {row}: bad journey_id")))?;
            let item: usize = rec[i_col]
                .parse()
                .map_err(|_| invalid(format!("row {row}: bad item_id")))?;
            if item >= n_items {
                return Err(invalid(format!("row {row}: unknown item {item}")));
            }
            let time = parse_f64(&rec[t_col], row, "impression_time")?;
            let clicked = parse_flag(&rec[e_col], row, "event")?;
            let end_time = parse_f64(&rec[end_col], row, "end_time")?;
            let j = map.entry(id).or_insert_with(|| Journey {
                id,
                impressions: Vec::new(),
                event: None,
                end_time,
            });
            j.impressions.push(Impression { item, time });
            if clicked {
                if j.event.is_some() {
                    return Err(invalid(format!("journey {id} has more than one event row")));
                }
                j.event = Some((item, end_time));
            }
        }
        Self::new(map.into_values().collect(), items, d)
    }
}

/// ADS-style journey data for the default split.
pub fn generate_ads(n_journeys: usize, max_items: usize, seed: u64) -> Result<JourneyDataset> {
    generate_ads_split(n_journeys, max_items, seed, "train")
}

/// ADS-style journey data. The hidden coefficient vector depends only on
/// `seed`; the item pool and journeys also depend on `split`, so different
/// splits share the model but not the items.
pub fn generate_ads_split(
    n_journeys: usize,
    max_items: usize,
    seed: u64,
    split: &str,
) -> Result<JourneyDataset> {
    generate_ads_with(n_journeys, max_items, seed, split, Some(ADS_CENSORING))
}

pub fn generate_ads_with(
    n_journeys: usize,
    max_items: usize,
    seed: u64,
    split: &str,
    censoring: Option<f64>,
) -> Result<JourneyDataset> {
    if n_journeys == 0 || max_items == 0 {
        return Err(invalid("n_journeys and max_items must be positive"));
    }
    let d = ADS_DIM;
    let mut rng = seed::stream(seed, "ads-theta");
    let scale = (d as f64).sqrt();
    let theta: Vec<f64> = (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal) / scale)
        .collect();

    let n_items = n_journeys.max(max_items);
    let mut rng = seed::stream(seed, &format!("ads-items-{split}"));
    let items: Vec<f64> = (0..n_items * d)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let rate: Vec<f64> = (0..n_items)
        .map(|k| {
            items[k * d..(k + 1) * d]
                .iter()
                .zip(&theta)
                .map(|(x, t)| x * t)
                .sum::<f64>()
                .exp()
        })
        .collect();

    let mut rng = seed::stream(seed, &format!("ads-journeys-{split}"));
    let mut shown = Vec::with_capacity(n_journeys);
    let mut first = Vec::with_capacity(n_journeys);
    for _ in 0..n_journeys {
        let m = rng.random_range(1..=max_items);
        let picks = sample_indices(&mut rng, n_items, m).into_vec();
        let mut imps = Vec::with_capacity(m);
        let mut best: (f64, usize) = (f64::INFINITY, usize::MAX);
        for (k, &item) in picks.iter().enumerate() {
            let start = if k == 0 { 0.0 } else { rng.random::<f64>() };
            let clock = start
                + Exp::new(rate[item])
                    .expect("positive rate")
                    .sample(&mut rng);
            if clock < best.0 {
                best = (clock, item);
            }
            imps.push(Impression { item, time: start });
        }
        shown.push(imps);
        first.push(best);
    }
    let mut rng = seed::stream(seed, &format!("ads-censoring-{split}"));
    let base: Vec<f64> = (0..n_journeys).map(|_| 1.0 - rng.random::<f64>()).collect();
    let firsts: Vec<f64> = first.iter().map(|f| f.0).collect();
    let c = match censoring {
        Some(target) if target > 0.0 => Some(calibrate_censoring(&firsts, &base, target)?),
        _ => None,
    };

    let journeys = shown
        .into_iter()
        .zip(first)
        .zip(base)
        .enumerate()
        .map(|(id, ((impressions, (t, item)), b))| match c {
            Some(c) if c * b < t => Journey {
                id,
                impressions,
                event: None,
                end_time: c * b,
            },
            _ => Journey {
                id,
                impressions,
                event: Some((item, t)),
                end_time: t,
            },
        })
        .collect();
    JourneyDataset::new(journeys, items, d)
}
