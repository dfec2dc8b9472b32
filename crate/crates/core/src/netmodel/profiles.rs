use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::netmodel::Feeder;

/// Power factor applied when a profile carries no reactive column.
pub const DEFAULT_POWER_FACTOR: f64 = 0.95;

/// Per-user demand time series, SI units, aligned with `Feeder::users`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSeries {
    /// Seconds between consecutive samples (0 for a single sample).
    pub resolution: f64,
    /// `p[user][t]`, watts, positive for consumption.
    pub p: Vec<Vec<f64>>,
    /// `q[user][t]`, var.
    pub q: Vec<Vec<f64>>,
}

impl LoadSeries {
    /// Builds a series, checking that every user has the same number of samples.
    pub fn new(resolution: f64, p: Vec<Vec<f64>>, q: Vec<Vec<f64>>) -> Result<LoadSeries> {
        if p.len() != q.len() {
            return Err(Error::LengthMismatch { expected: p.len(), actual: q.len() });
        }
        let horizon = p.first().map_or(0, Vec::len);
        for series in p.iter().chain(q.iter()) {
            if series.len() != horizon {
                return Err(Error::Profile(format!(
                    "ragged series: {} samples where {horizon} expected",
                    series.len()
                )));
            }
            if series.iter().any(|v| !v.is_finite()) {
                return Err(Error::Profile("non-finite sample".into()));
            }
        }
        Ok(LoadSeries { resolution, p, q })
    }

    /// Constant demand over `horizon` steps.
    pub fn constant(p: &[f64], q: &[f64], horizon: usize) -> LoadSeries {
        LoadSeries {
            resolution: 3600.0,
            p: p.iter().map(|&v| vec![v; horizon]).collect(),
            q: q.iter().map(|&v| vec![v; horizon]).collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    pub fn num_users(&self) -> usize {
        self.p.len()
    }

    /// Time-mean active demand of one user, watts.
    pub fn mean_p(&self, user: usize) -> f64 {
        let s = &self.p[user];
        if s.is_empty() {
            0.0
        } else {
            s.iter().sum::<f64>() / s.len() as f64
        }
    }

    /// Restricts the series to steps `range`.
    pub fn window(&self, range: std::ops::Range<usize>) -> LoadSeries {
        LoadSeries {
            resolution: self.resolution,
            p: self.p.iter().map(|s| s[range.clone()].to_vec()).collect(),
            q: self.q.iter().map(|s| s[range.clone()].to_vec()).collect(),
        }
    }

    pub fn check_against(&self, feeder: &Feeder) -> Result<()> {
        if self.num_users() != feeder.users.len() {
            return Err(Error::LengthMismatch { expected: feeder.users.len(), actual: self.num_users() });
        }
        Ok(())
    }

    /// Serializes to the profile CSV layout (`t,<id>:p,<id>:q,...`).
    pub fn to_csv(&self, feeder: &Feeder) -> String {
        let mut out = String::from("t");
        for u in &feeder.users {
            out.push_str(&format!(",{0}:p,{0}:q", u.id));
        }
        out.push('\n');
        for t in 0..self.horizon() {
            out.push_str(&format_number(t as f64 * self.resolution));
            for ui in 0..self.num_users() {
                out.push(',');
                out.push_str(&format_number(self.p[ui][t]));
                out.push(',');
                out.push_str(&format_number(self.q[ui][t]));
            }
            out.push('\n');
        }
        out
    }
}

fn format_number(v: f64) -> String {
    // Shortest representation that parses back to the same f64.
    format!("{v:?}")
}

/// Reads a profile CSV for `feeder`; reactive power defaults to `DEFAULT_POWER_FACTOR`.
pub fn load_profiles(path: impl AsRef<Path>, feeder: &Feeder) -> Result<LoadSeries> {
    load_profiles_with_pf(path, feeder, DEFAULT_POWER_FACTOR)
}

pub fn load_profiles_with_pf(path: impl AsRef<Path>, feeder: &Feeder, power_factor: f64) -> Result<LoadSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_profiles(file, feeder, power_factor)
}

pub fn read_profiles<R: Read>(reader: R, feeder: &Feeder, power_factor: f64) -> Result<LoadSeries> {
    if !(power_factor > 0.0 && power_factor <= 1.0) {
        return Err(Error::Profile(format!("power factor {power_factor} outside (0, 1]")));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse(format!("profile header: {e}")))?.clone();
    if headers.get(0) != Some("t") {
        return Err(Error::Parse("profile header must start with column 't'".into()));
    }

    let mut p_col = HashMap::new();
    let mut q_col = HashMap::new();
    for (c, name) in headers.iter().enumerate().skip(1) {
        let (id, kind) = name
            .rsplit_once(':')
            .ok_or_else(|| Error::Parse(format!("column '{name}' is not '<user>:p' or '<user>:q'")))?;
        let slot = match kind {
            "p" => &mut p_col,
            "q" => &mut q_col,
            _ => return Err(Error::Parse(format!("column '{name}': unknown quantity '{kind}'"))),
        };
        if slot.insert(id.to_string(), c).is_some() {
            return Err(Error::Parse(format!("duplicate column '{name}'")));
        }
    }
    for id in p_col.keys().chain(q_col.keys()) {
        if feeder.user_index(id).is_none() {
            log::warn!("profile column for unknown user {id} ignored");
        }
    }
    let missing: Vec<&str> =
        feeder.users.iter().filter(|u| !p_col.contains_key(&u.id)).map(|u| u.id.as_str()).collect();
    if !missing.is_empty() {
        return Err(Error::Profile(format!("missing profile for user(s) {}", missing.join(", "))));
    }

    let mut times = Vec::new();
    let mut p = vec![Vec::new(); feeder.users.len()];
    let mut q = vec![Vec::new(); feeder.users.len()];
    let tan_phi = (1.0 / (power_factor * power_factor) - 1.0).max(0.0).sqrt();
    for (row_no, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => Error::Profile(format!("ragged row {}: {e}", row_no + 1)),
            _ => Error::Parse(format!("profile row {}: {e}", row_no + 1)),
        })?;
        let cell = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse::<f64>().map_err(|_| {
                Error::Profile(format!(
                    "row {}, column '{}': missing or invalid value '{raw}'",
                    row_no + 1,
                    &headers[c]
                ))
            })
        };
        times.push(cell(0)?);
        for (ui, u) in feeder.users.iter().enumerate() {
            let pv = cell(p_col[&u.id])?;
            let qv = match q_col.get(&u.id) {
                Some(&c) => cell(c)?,
                None => pv * tan_phi,
            };
            p[ui].push(pv);
            q[ui].push(qv);
        }
    }
    if times.is_empty() {
        return Err(Error::Profile("profile has no rows".into()));
    }
    let resolution = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
    LoadSeries::new(resolution, p, q)
}
