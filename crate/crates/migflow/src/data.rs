//! Region metadata, flow panels with interval-valued observations, distances,
//! the dense ordered-pair index, and plausible flow-path sampling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// IUGG mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Two-sided 90% standard normal quantile; a 90% CI spans 2·Z90 standard
/// deviations.
pub const Z90: f64 = 1.6449;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub name: String,
    pub capital_lat: f64,
    pub capital_lon: f64,
    pub land_area_sqmi: f64,
}

impl Region {
    fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.capital_lat) {
            return Err(Error::validation(format!(
                "region {}: latitude {} out of [-90, 90]",
                self.id, self.capital_lat
            )));
        }
        if !(-180.0..=180.0).contains(&self.capital_lon) {
            return Err(Error::validation(format!(
                "region {}: longitude {} out of [-180, 180]",
                self.id, self.capital_lon
            )));
        }
        if !(self.land_area_sqmi > 0.0) {
            return Err(Error::validation(format!(
                "region {}: land area must be positive, got {}",
                self.id, self.land_area_sqmi
            )));
        }
        Ok(())
    }
}

/// One observed bilateral flow, reported as a 90% confidence interval.
/// `origin`/`dest` are indices into the panel's region list.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowObservation {
    pub origin: usize,
    pub dest: usize,
    pub year: i32,
    pub flow_lo: f64,
    pub flow_hi: f64,
}

/// Fully joined panel: regions, interval flows, populations, and named
/// per-(region, year) covariates. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowPanel {
    pub regions: Vec<Region>,
    pub observations: Vec<FlowObservation>,
    pub populations: HashMap<(usize, i32), f64>,
    pub covariates: BTreeMap<String, HashMap<(usize, i32), f64>>,
}

impl FlowPanel {
    pub fn new(
        regions: Vec<Region>,
        observations: Vec<FlowObservation>,
        populations: HashMap<(usize, i32), f64>,
        covariates: BTreeMap<String, HashMap<(usize, i32), f64>>,
    ) -> Result<Self> {
        let mut ids = HashSet::new();
        for r in &regions {
            r.validate()?;
            if !ids.insert(r.id.clone()) {
                return Err(Error::validation(format!("duplicate region id {}", r.id)));
            }
        }
        let mut years = Vec::new();
        for (row, obs) in observations.iter().enumerate() {
            if obs.origin == obs.dest {
                return Err(Error::validation(format!(
                    "observation {row}: origin equals destination ({})",
                    regions[obs.origin].id
                )));
            }
            if !(0.0 <= obs.flow_lo && obs.flow_lo <= obs.flow_hi) {
                return Err(Error::validation(format!(
                    "observation {row}: need 0 <= flow_lo <= flow_hi, got [{}, {}]",
                    obs.flow_lo, obs.flow_hi
                )));
            }
            for idx in [obs.origin, obs.dest] {
                if !populations.contains_key(&(idx, obs.year)) {
                    return Err(Error::validation(format!(
                        "missing population for region {} in year {}",
                        regions[idx].id, obs.year
                    )));
                }
            }
            years.push(obs.year);
        }
        if let (Some(&lo), Some(&hi)) = (years.iter().min(), years.iter().max()) {
            let have: HashSet<i32> = years.into_iter().collect();
            for y in lo..=hi {
                if !have.contains(&y) {
                    return Err(Error::validation(format!(
                        "observation years are not contiguous: {y} missing in {lo}..={hi}"
                    )));
                }
            }
        }
        Ok(FlowPanel {
            regions,
            observations,
            populations,
            covariates,
        })
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn region_index(&self, id: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.id == id)
    }

    pub fn population(&self, region: usize, year: i32) -> Result<f64> {
        self.populations.get(&(region, year)).copied().ok_or_else(|| {
            Error::validation(format!(
                "missing population for region {} in year {}",
                self.regions[region].id, year
            ))
        })
    }

    /// Observed years, ascending.
    pub fn years(&self) -> Vec<i32> {
        let mut ys: Vec<i32> = self
            .observations
            .iter()
            .map(|o| o.year)
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        ys.sort_unstable();
        ys
    }

    /// Pairwise great-circle distances between region capitals, km.
    pub fn distance_matrix(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.regions.len();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let km = great_circle_km(
                    (self.regions[i].capital_lat, self.regions[i].capital_lon),
                    (self.regions[j].capital_lat, self.regions[j].capital_lon),
                )?;
                d[i][j] = km;
                d[j][i] = km;
            }
        }
        Ok(d)
    }
}

/// Canonical enumeration of the N(N-1) ordered region pairs, lexicographic
/// by (origin id, destination id).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairIndex {
    pairs: Vec<(usize, usize)>,
    lookup: HashMap<(usize, usize), usize>,
}

impl PairIndex {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, k: usize) -> (usize, usize) {
        self.pairs[k]
    }

    pub fn index(&self, origin: usize, dest: usize) -> Option<usize> {
        self.lookup.get(&(origin, dest)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, (usize, usize))> + '_ {
        self.pairs.iter().copied().enumerate()
    }
}

/// build_pair_index: all ordered pairs (i, j), i != j, with dense
/// indices in lexicographic order of the region id strings.
pub fn build_pair_index(regions: &[Region]) -> Result<PairIndex> {
    if regions.len() < 2 {
        return Err(Error::validation("need at least 2 regions"));
    }
    let mut ids = HashSet::new();
    for r in regions {
        if !ids.insert(r.id.as_str()) {
            return Err(Error::validation(format!("duplicate region id {}", r.id)));
        }
    }
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by(|&a, &b| regions[a].id.cmp(&regions[b].id));
    let mut pairs = Vec::with_capacity(regions.len() * (regions.len() - 1));
    for &i in &order {
        for &j in &order {
            if i != j {
                pairs.push((i, j));
            }
        }
    }
    let lookup = pairs.iter().enumerate().map(|(k, &p)| (p, k)).collect();
    Ok(PairIndex { pairs, lookup })
}

/// great_circle_km: haversine distance on a sphere of radius
/// `EARTH_RADIUS_KM` between (lat, lon) points in degrees.
pub fn great_circle_km(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    for (lat, lon) in [a, b] {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::validation(format!(
                "coordinates ({lat}, {lon}) out of range"
            )));
        }
    }
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

/// One plausible realization of the flow panel drawn from the observation CIs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampledPath {
    pub path_id: usize,
    pub seed: u64,
    /// (origin, dest, year) -> drawn flow, zeros dropped. Kept in the
    /// canonical observation order of the source panel.
    pub flows: Vec<(usize, usize, i32, f64)>,
}

impl SampledPath {
    pub fn flow_map(&self) -> HashMap<(usize, usize, i32), f64> {
        self.flows
            .iter()
            .map(|&(i, j, t, m)| ((i, j, t), m))
            .collect()
    }
}

/// Draw from Normal(mu, sigma) truncated to [0, inf) by inverse CDF.
pub(crate) fn draw_truncated_normal<R: Rng>(rng: &mut R, mu: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mu.max(0.0);
    }
    let std = Normal::standard();
    let p_lo = std.cdf(-mu / sigma);
    let u: f64 = rng.gen();
    let v = (p_lo + u * (1.0 - p_lo)).clamp(f64::MIN_POSITIVE, 1.0 - 1e-16);
    mu + sigma * std.inverse_cdf(v)
}

/// sample_flow_paths: for each observation draw
/// flow ~ Normal(midpoint, (hi - lo) / (2·Z90)) truncated at 0, round to the
/// nearest integer, and drop zeros. Deterministic per (seed, path id).
pub fn sample_flow_paths(panel: &FlowPanel, n_paths: usize, seed: u64) -> Result<Vec<SampledPath>> {
    if n_paths < 1 {
        return Err(Error::validation("n_paths must be >= 1"));
    }
    let mut paths = Vec::with_capacity(n_paths);
    for path_id in 0..n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_id as u64 + 1);
        let mut flows = Vec::with_capacity(panel.observations.len());
        for obs in &panel.observations {
            let mid = 0.5 * (obs.flow_lo + obs.flow_hi);
            let sigma = (obs.flow_hi - obs.flow_lo) / (2.0 * Z90);
            let drawn = draw_truncated_normal(&mut rng, mid, sigma).round();
            if drawn >= 1.0 {
                flows.push((obs.origin, obs.dest, obs.year, drawn));
            }
        }
        paths.push(SampledPath {
            path_id,
            seed,
            flows,
        });
    }
    Ok(paths)
}

fn parse_field(field: &str, name: &str, row: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::validation(format!("row {row}: non-numeric {name} field {field:?}"))
    })
}

/// load_panel: join the four CSV inputs into a validated panel.
///
/// Schemas (header row required):
///   regions.csv:     id,name,capital_lat,capital_lon,land_area_sqmi
///   flows.csv:       origin,dest,year,flow_lo,flow_hi
///   populations.csv: id,year,population
///   covariates.csv:  id,year,<numeric columns...> (carried through by name)
pub fn load_panel(
    flows_csv: &Path,
    populations_csv: &Path,
    regions_csv: &Path,
    covariates_csv: &Path,
) -> Result<FlowPanel> {
    let mut regions = Vec::new();
    let mut rdr = csv::Reader::from_path(regions_csv)?;
    expect_headers(&mut rdr, &["id", "name", "capital_lat", "capital_lon", "land_area_sqmi"])?;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        regions.push(Region {
            id: rec[0].trim().to_string(),
            name: rec[1].trim().to_string(),
            capital_lat: parse_field(&rec[2], "capital_lat", row)?,
            capital_lon: parse_field(&rec[3], "capital_lon", row)?,
            land_area_sqmi: parse_field(&rec[4], "land_area_sqmi", row)?,
        });
    }
    let index: HashMap<String, usize> = regions
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.clone(), i))
        .collect();
    let region_of = |id: &str, row: usize| -> Result<usize> {
        index
            .get(id.trim())
            .copied()
            .ok_or_else(|| Error::validation(format!("row {row}: unknown region id {id:?}")))
    };

    let mut populations = HashMap::new();
    let mut rdr = csv::Reader::from_path(populations_csv)?;
    expect_headers(&mut rdr, &["id", "year", "population"])?;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let r = region_of(&rec[0], row)?;
        let year = parse_field(&rec[1], "year", row)? as i32;
        populations.insert((r, year), parse_field(&rec[2], "population", row)?);
    }

    let mut covariates: BTreeMap<String, HashMap<(usize, i32), f64>> = BTreeMap::new();
    let mut rdr = csv::Reader::from_path(covariates_csv)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.len() < 3 || headers[0] != "id" || headers[1] != "year" {
        return Err(Error::validation(format!(
            "covariates csv must start with id,year headers, got {headers:?}"
        )));
    }
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let r = region_of(&rec[0], row)?;
        let year = parse_field(&rec[1], "year", row)? as i32;
        for (col, name) in headers.iter().enumerate().skip(2) {
            let value = parse_field(&rec[col], name, row)?;
            covariates.entry(name.clone()).or_default().insert((r, year), value);
        }
    }

    let mut observations = Vec::new();
    let mut rdr = csv::Reader::from_path(flows_csv)?;
    expect_headers(&mut rdr, &["origin", "dest", "year", "flow_lo", "flow_hi"])?;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let origin = region_of(&rec[0], row)?;
        let dest = region_of(&rec[1], row)?;
        if origin == dest {
            return Err(Error::validation(format!(
                "row {row}: origin equals destination ({})",
                rec[0].trim()
            )));
        }
        observations.push(FlowObservation {
            origin,
            dest,
            year: parse_field(&rec[2], "year", row)? as i32,
            flow_lo: parse_field(&rec[3], "flow_lo", row)?,
            flow_hi: parse_field(&rec[4], "flow_hi", row)?,
        });
    }

    FlowPanel::new(regions, observations, populations, covariates)
}

impl FlowPanel {
    /// Write the four-CSV representation that `load_panel` reads back.
    /// Files: regions.csv, flows.csv, populations.csv, covariates.csv.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join("regions.csv"))?;
        w.write_record(["id", "name", "capital_lat", "capital_lon", "land_area_sqmi"])?;
        for r in &self.regions {
            w.write_record([
                r.id.as_str(),
                r.name.as_str(),
                &r.capital_lat.to_string(),
                &r.capital_lon.to_string(),
                &r.land_area_sqmi.to_string(),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("flows.csv"))?;
        w.write_record(["origin", "dest", "year", "flow_lo", "flow_hi"])?;
        for o in &self.observations {
            w.write_record([
                self.regions[o.origin].id.as_str(),
                self.regions[o.dest].id.as_str(),
                &o.year.to_string(),
                &o.flow_lo.to_string(),
                &o.flow_hi.to_string(),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("populations.csv"))?;
        w.write_record(["id", "year", "population"])?;
        let mut pop_keys: Vec<&(usize, i32)> = self.populations.keys().collect();
        pop_keys.sort();
        for &&(r, year) in &pop_keys {
            w.write_record([
                self.regions[r].id.as_str(),
                &year.to_string(),
                &self.populations[&(r, year)].to_string(),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("covariates.csv"))?;
        let names: Vec<&String> = self.covariates.keys().collect();
        let mut header = vec!["id".to_string(), "year".to_string()];
        header.extend(names.iter().map(|n| n.to_string()));
        w.write_record(&header)?;
        let mut cov_keys: Vec<(usize, i32)> = self
            .covariates
            .values()
            .flat_map(|m| m.keys().copied())
            .collect();
        cov_keys.sort();
        cov_keys.dedup();
        for (r, year) in cov_keys {
            let mut rec = vec![self.regions[r].id.clone(), year.to_string()];
            for name in &names {
                let v = self.covariates[*name].get(&(r, year)).copied().ok_or_else(|| {
                    Error::validation(format!(
                        "covariate {name} missing for region {} year {year}",
                        self.regions[r].id
                    ))
                })?;
                rec.push(v.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn expect_headers(rdr: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let got: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if got != expected {
        return Err(Error::validation(format!(
            "csv header mismatch: expected {expected:?}, got {got:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(id: &str, lat: f64, lon: f64) -> Region {
        Region {
            id: id.to_string(),
            name: id.to_string(),
            capital_lat: lat,
            capital_lon: lon,
            land_area_sqmi: 1000.0,
        }
    }

    fn simple_panel() -> FlowPanel {
        let regions = vec![region("A", 0.0, 0.0), region("B", 1.0, 1.0)];
        let observations = vec![
            FlowObservation { origin: 0, dest: 1, year: 2000, flow_lo: 90.0, flow_hi: 110.0 },
            FlowObservation { origin: 1, dest: 0, year: 2000, flow_lo: 100.0, flow_hi: 100.0 },
        ];
        let mut populations = HashMap::new();
        populations.insert((0, 2000), 1000.0);
        populations.insert((1, 2000), 2000.0);
        FlowPanel::new(regions, observations, populations, BTreeMap::new()).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let mut panel = simple_panel();
        let mut housing = HashMap::new();
        housing.insert((0, 2000), 120.5);
        housing.insert((1, 2000), 90.25);
        panel.covariates.insert("housing_index_pct".into(), housing);
        let dir = tempfile::tempdir().unwrap();
        panel.write_csvs(dir.path()).unwrap();
        let loaded = load_panel(
            &dir.path().join("flows.csv"),
            &dir.path().join("populations.csv"),
            &dir.path().join("regions.csv"),
            &dir.path().join("covariates.csv"),
        )
        .unwrap();
        assert_eq!(
            serde_json::to_string(&loaded.regions).unwrap(),
            serde_json::to_string(&panel.regions).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&loaded.observations).unwrap(),
            serde_json::to_string(&panel.observations).unwrap()
        );
        assert_eq!(loaded.populations, panel.populations);
        assert_eq!(loaded.covariates, panel.covariates);
    }

    #[test]
    fn pair_index_counts() {
        let r3 = vec![region("A", 0.0, 0.0), region("B", 1.0, 1.0), region("C", 2.0, 2.0)];
        assert_eq!(build_pair_index(&r3[..2]).unwrap().len(), 2);
        assert_eq!(build_pair_index(&r3).unwrap().len(), 6);
        let r51: Vec<Region> = (0..51).map(|i| region(&format!("S{i:02}"), 0.0, i as f64)).collect();
        assert_eq!(build_pair_index(&r51).unwrap().len(), 2550);
    }

    #[test]
    fn pair_index_round_trip_and_order() {
        let regions = vec![region("C", 0.0, 0.0), region("A", 1.0, 1.0), region("B", 2.0, 2.0)];
        let idx = build_pair_index(&regions).unwrap();
        for (k, pair) in idx.iter() {
            assert_eq!(idx.index(pair.0, pair.1), Some(k));
        }
        // Lexicographic by id: first pair is (A, B).
        let (i, j) = idx.pair(0);
        assert_eq!(regions[i].id, "A");
        assert_eq!(regions[j].id, "B");
    }

    #[test]
    fn pair_index_rejects_duplicates() {
        let regions = vec![region("A", 0.0, 0.0), region("A", 1.0, 1.0)];
        assert!(build_pair_index(&regions).is_err());
    }

    #[test]
    fn great_circle_basics() {
        assert_eq!(great_circle_km((10.0, 20.0), (10.0, 20.0)).unwrap(), 0.0);
        let anti = great_circle_km((0.0, 0.0), (0.0, 180.0)).unwrap();
        assert!((anti - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-6);
        assert!(great_circle_km((91.0, 0.0), (0.0, 0.0)).is_err());
    }

    #[test]
    fn great_circle_matches_haversine_oracle() {
        // Independent re-derivation: spherical law of cosines form.
        let (a, b) = ((42.6526_f64, -73.7562_f64), (38.5816_f64, -121.4944_f64));
        let (p1, l1) = (a.0.to_radians(), a.1.to_radians());
        let (p2, l2) = (b.0.to_radians(), b.1.to_radians());
        let central = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * (l2 - l1).cos()).acos();
        let oracle = EARTH_RADIUS_KM * central;
        let got = great_circle_km(a, b).unwrap();
        assert!((got - oracle).abs() < 0.1, "got {got}, oracle {oracle}");
    }

    #[test]
    fn sampled_paths_are_deterministic_and_positive() {
        let panel = simple_panel();
        let a = sample_flow_paths(&panel, 3, 7).unwrap();
        let b = sample_flow_paths(&panel, 3, 7).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(pa.flows, pb.flows);
            for &(_, _, _, m) in &pa.flows {
                assert!(m >= 1.0 && m.is_finite());
            }
        }
        // Zero-width CI reproduces the point value on every path.
        for p in &a {
            let m = p.flow_map();
            assert_eq!(m[&(1, 0, 2000)], 100.0);
        }
    }

    #[test]
    fn sampling_rule_moments() {
        // CI [90, 110]: mean ~ 100, sd ~ 20 / (2 * 1.6449).
        let regions = vec![region("A", 0.0, 0.0), region("B", 1.0, 1.0)];
        let mut populations = HashMap::new();
        populations.insert((0, 2000), 1.0);
        populations.insert((1, 2000), 1.0);
        let obs = vec![FlowObservation { origin: 0, dest: 1, year: 2000, flow_lo: 90.0, flow_hi: 110.0 }];
        let panel = FlowPanel::new(regions, obs, populations, BTreeMap::new()).unwrap();
        let paths = sample_flow_paths(&panel, 10_000, 42).unwrap();
        let draws: Vec<f64> = paths.iter().map(|p| p.flows[0].3).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!((mean - 100.0).abs() < 0.5, "mean {mean}");
        let expected_sd = 20.0 / (2.0 * Z90);
        assert!((var.sqrt() - expected_sd).abs() < 0.1 * expected_sd, "sd {}", var.sqrt());
    }

    #[test]
    fn panel_rejects_missing_population() {
        let regions = vec![region("A", 0.0, 0.0), region("B", 1.0, 1.0)];
        let obs = vec![FlowObservation { origin: 0, dest: 1, year: 2000, flow_lo: 1.0, flow_hi: 2.0 }];
        let err = FlowPanel::new(regions, obs, HashMap::new(), BTreeMap::new()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('A') && msg.contains("2000"), "{msg}");
    }
}
