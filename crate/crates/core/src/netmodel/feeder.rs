use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the three supply phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    One,
    Two,
    Three,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::One, Phase::Two, Phase::Three];

    pub fn from_number(n: u8) -> Option<Phase> {
        match n {
            1 => Some(Phase::One),
            2 => Some(Phase::Two),
            3 => Some(Phase::Three),
            _ => None,
        }
    }

    pub fn from_index(i: usize) -> Phase {
        Phase::ALL[i]
    }

    /// Zero-based index into per-phase arrays.
    pub fn index(self) -> usize {
        match self {
            Phase::One => 0,
            Phase::Two => 1,
            Phase::Three => 2,
        }
    }

    /// Phase number as written in files (1, 2 or 3).
    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    /// Cyclic rotation 1 -> 2 -> 3 -> 1.
    pub fn rotated(self) -> Phase {
        Phase::from_index((self.index() + 1) % 3)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl Serialize for Phase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let n = u8::deserialize(d)?;
        Phase::from_number(n).ok_or_else(|| serde::de::Error::custom(format!("phase {n} not in {{1,2,3}}")))
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// Series resistance, ohms.
    pub r: Matrix3<f64>,
    /// Series reactance, ohms.
    pub x: Matrix3<f64>,
    /// Per-phase current limit, amps.
    pub ampacity: Option<f64>,
    /// Per-phase apparent power limit, VA.
    pub power_limit: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct User {
    pub id: String,
    pub bus: usize,
    pub original_phase: Phase,
    pub reconfigurable: bool,
}

/// A radial three-wire feeder with its single-phase users.
///
/// Branches are stored in file order but always oriented away from the
/// reference bus. Topology queries are precomputed at construction.
#[derive(Debug, Clone)]
pub struct Feeder {
    pub buses: Vec<String>,
    pub branches: Vec<Branch>,
    pub reference_bus: usize,
    pub users: Vec<User>,
    /// Line-to-neutral base voltage, volts.
    pub base_voltage: f64,
    /// Per-phase base power, VA.
    pub base_power: f64,
    bus_index: HashMap<String, usize>,
    parent_branch: Vec<Option<usize>>,
    sweep_order: Vec<usize>,
    downstream: Vec<Vec<usize>>,
    reconfigurable: Vec<usize>,
}

// ---- file schema -------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum BusKey {
    Int(i64),
    Str(String),
}

impl BusKey {
    fn key(&self) -> String {
        match self {
            BusKey::Int(i) => i.to_string(),
            BusKey::Str(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchFile {
    pub from: BusKey,
    pub to: BusKey,
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    #[serde(rename = "X")]
    pub x: [[f64; 3]; 3],
    #[serde(rename = "ampacity_A", default, skip_serializing_if = "Option::is_none")]
    pub ampacity: Option<f64>,
    #[serde(rename = "power_limit_VA", default, skip_serializing_if = "Option::is_none")]
    pub power_limit: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserFile {
    pub id: String,
    pub bus: BusKey,
    pub phase: u8,
    #[serde(default = "default_true")]
    pub reconfigurable: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeederFile {
    #[serde(rename = "base_voltage_V")]
    pub base_voltage: f64,
    #[serde(rename = "base_power_VA")]
    pub base_power: f64,
    pub reference_bus: BusKey,
    pub buses: Vec<BusKey>,
    pub branches: Vec<BranchFile>,
    pub users: Vec<UserFile>,
}

fn to_matrix(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

fn from_matrix(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

pub(crate) fn complex_impedance(r: &Matrix3<f64>, x: &Matrix3<f64>) -> Matrix3<Complex64> {
    Matrix3::from_fn(|i, j| Complex64::new(r[(i, j)], x[(i, j)]))
}

/// Reads and validates a feeder JSON file.
pub fn load_feeder(path: impl AsRef<Path>) -> Result<Feeder> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: FeederFile = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Feeder::from_file(file)
}

impl Feeder {
    pub fn from_json(text: &str) -> Result<Feeder> {
        let file: FeederFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Feeder::from_file(file)
    }

    pub fn from_file(file: FeederFile) -> Result<Feeder> {
        if !(file.base_voltage > 0.0 && file.base_power > 0.0) {
            return Err(Error::Validation("base_voltage_V and base_power_VA must be positive".into()));
        }
        let mut bus_index = HashMap::new();
        let mut buses = Vec::with_capacity(file.buses.len());
        for b in &file.buses {
            let key = b.key();
            if bus_index.insert(key.clone(), buses.len()).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {key}")));
            }
            buses.push(key);
        }
        let lookup = |k: &BusKey, what: &str| -> Result<usize> {
            bus_index
                .get(&k.key())
                .copied()
                .ok_or_else(|| Error::Validation(format!("{what} references unknown bus {}", k.key())))
        };
        let reference_bus = lookup(&file.reference_bus, "reference_bus")?;

        let mut branches = Vec::with_capacity(file.branches.len());
        for (k, bf) in file.branches.iter().enumerate() {
            let name = format!("branch {k} ({}->{})", bf.from.key(), bf.to.key());
            let from = lookup(&bf.from, &name)?;
            let to = lookup(&bf.to, &name)?;
            if from == to {
                return Err(Error::Validation(format!("{name}: self-loop")));
            }
            let r = to_matrix(&bf.r);
            let x = to_matrix(&bf.x);
            validate_impedance(&name, &r, &x)?;
            for (label, v) in [("ampacity_A", bf.ampacity), ("power_limit_VA", bf.power_limit)] {
                if let Some(v) = v {
                    if !(v > 0.0) {
                        return Err(Error::Validation(format!("{name}: {label} must be positive")));
                    }
                }
            }
            branches.push(Branch { from, to, r, x, ampacity: bf.ampacity, power_limit: bf.power_limit });
        }

        let mut users = Vec::with_capacity(file.users.len());
        let mut seen = HashMap::new();
        for uf in &file.users {
            if seen.insert(uf.id.clone(), ()).is_some() {
                return Err(Error::Validation(format!("duplicate user id {}", uf.id)));
            }
            let bus = lookup(&uf.bus, &format!("user {}", uf.id))?;
            let original_phase = Phase::from_number(uf.phase)
                .ok_or_else(|| Error::Validation(format!("user {}: phase {} not in {{1,2,3}}", uf.id, uf.phase)))?;
            users.push(User { id: uf.id.clone(), bus, original_phase, reconfigurable: uf.reconfigurable });
        }

        Feeder::new(buses, branches, reference_bus, users, file.base_voltage, file.base_power)
    }

    /// Assembles a feeder from already-indexed parts and checks every invariant.
    pub fn new(
        buses: Vec<String>,
        mut branches: Vec<Branch>,
        reference_bus: usize,
        users: Vec<User>,
        base_voltage: f64,
        base_power: f64,
    ) -> Result<Feeder> {
        let n = buses.len();
        if reference_bus >= n {
            return Err(Error::Validation("reference bus out of range".into()));
        }
        if branches.len() + 1 != n {
            return Err(Error::Validation(format!("non-radial network: {} branches for {} buses", branches.len(), n)));
        }
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, br) in branches.iter().enumerate() {
            if br.from >= n || br.to >= n {
                return Err(Error::Validation(format!("branch {k}: bus index out of range")));
            }
            validate_impedance(&format!("branch {k}"), &br.r, &br.x)?;
            adjacency[br.from].push(k);
            adjacency[br.to].push(k);
        }

        // BFS from the reference orients every branch and yields a parents-first order.
        let mut parent_branch = vec![None; n];
        let mut visited = vec![false; n];
        let mut sweep_order = Vec::with_capacity(branches.len());
        let mut queue = VecDeque::from([reference_bus]);
        visited[reference_bus] = true;
        while let Some(bus) = queue.pop_front() {
            for &k in &adjacency[bus] {
                let other = if branches[k].from == bus { branches[k].to } else { branches[k].from };
                if visited[other] {
                    if parent_branch[bus] != Some(k) {
                        return Err(Error::Validation(format!(
                            "non-radial network: cycle through bus {}",
                            buses[other]
                        )));
                    }
                    continue;
                }
                visited[other] = true;
                if branches[k].to != other {
                    let br = &mut branches[k];
                    std::mem::swap(&mut br.from, &mut br.to);
                }
                parent_branch[other] = Some(k);
                sweep_order.push(k);
                queue.push_back(other);
            }
        }
        if let Some(orphan) = visited.iter().position(|v| !v) {
            return Err(Error::Validation(format!(
                "non-radial network: bus {} unreachable from reference",
                buses[orphan]
            )));
        }

        for u in &users {
            if u.bus >= n {
                return Err(Error::Validation(format!("user {} on unknown bus", u.id)));
            }
            if u.bus == reference_bus {
                return Err(Error::Validation(format!("user {} connected to the reference bus", u.id)));
            }
        }

        let mut downstream = vec![Vec::new(); branches.len()];
        for (ui, u) in users.iter().enumerate() {
            let mut bus = u.bus;
            while let Some(k) = parent_branch[bus] {
                downstream[k].push(ui);
                bus = branches[k].from;
            }
        }

        let bus_index = buses.iter().enumerate().map(|(i, b)| (b.clone(), i)).collect();
        let reconfigurable = users.iter().enumerate().filter(|(_, u)| u.reconfigurable).map(|(i, _)| i).collect();
        Ok(Feeder {
            buses,
            branches,
            reference_bus,
            users,
            base_voltage,
            base_power,
            bus_index,
            parent_branch,
            sweep_order,
            downstream,
            reconfigurable,
        })
    }

    pub fn to_file(&self) -> FeederFile {
        FeederFile {
            base_voltage: self.base_voltage,
            base_power: self.base_power,
            reference_bus: BusKey::Str(self.buses[self.reference_bus].clone()),
            buses: self.buses.iter().map(|b| BusKey::Str(b.clone())).collect(),
            branches: self
                .branches
                .iter()
                .map(|b| BranchFile {
                    from: BusKey::Str(self.buses[b.from].clone()),
                    to: BusKey::Str(self.buses[b.to].clone()),
                    r: from_matrix(&b.r),
                    x: from_matrix(&b.x),
                    ampacity: b.ampacity,
                    power_limit: b.power_limit,
                })
                .collect(),
            users: self
                .users
                .iter()
                .map(|u| UserFile {
                    id: u.id.clone(),
                    bus: BusKey::Str(self.buses[u.bus].clone()),
                    phase: u.original_phase.number(),
                    reconfigurable: u.reconfigurable,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("feeder serializes")
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.bus_index.get(id).copied()
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.users.iter().position(|u| u.id == id)
    }

    pub fn branch_between(&self, from: &str, to: &str) -> Option<usize> {
        let (a, b) = (self.bus_index(from)?, self.bus_index(to)?);
        self.branches.iter().position(|br| (br.from == a && br.to == b) || (br.from == b && br.to == a))
    }

    /// Impedance base in ohms.
    pub fn z_base(&self) -> f64 {
        self.base_voltage * self.base_voltage / self.base_power
    }

    /// Current base in amps.
    pub fn i_base(&self) -> f64 {
        self.base_power / self.base_voltage
    }

    /// (R, X) of a branch in per-unit.
    pub fn impedance_pu(&self, branch: usize) -> (Matrix3<f64>, Matrix3<f64>) {
        let zb = self.z_base();
        let br = &self.branches[branch];
        (br.r / zb, br.x / zb)
    }

    /// Branch feeding `bus` from the reference side; `None` for the reference bus.
    pub fn parent_branch(&self, bus: usize) -> Option<usize> {
        self.parent_branch[bus]
    }

    /// Branch indices ordered so that every branch comes after the branch feeding it.
    pub fn sweep_order(&self) -> &[usize] {
        &self.sweep_order
    }

    /// Branches on the path from the reference bus to `bus`, reference side first.
    pub fn path_branches(&self, bus: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut b = bus;
        while let Some(k) = self.parent_branch[b] {
            path.push(k);
            b = self.branches[k].from;
        }
        path.reverse();
        path
    }

    /// Indices of users whose bus is reached through `branch`.
    pub fn downstream_users(&self, branch: usize) -> Result<&[usize]> {
        self.downstream
            .get(branch)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Validation(format!("unknown branch {branch}")))
    }

    pub fn is_downstream(&self, branch: usize, user: usize) -> bool {
        self.downstream[branch].binary_search(&user).is_ok()
    }

    /// Branches leaving the reference bus.
    pub fn head_branches(&self) -> Vec<usize> {
        self.sweep_order.iter().copied().filter(|&k| self.branches[k].from == self.reference_bus).collect()
    }

    /// Distinct buses hosting at least one user, ascending.
    pub fn user_buses(&self) -> Vec<usize> {
        let mut buses: Vec<usize> = self.users.iter().map(|u| u.bus).collect();
        buses.sort_unstable();
        buses.dedup();
        buses
    }

    /// Indices (into `users`) of reconfigurable users; the order of phase-assignment entries.
    pub fn reconfigurable_users(&self) -> &[usize] {
        &self.reconfigurable
    }
}

fn validate_impedance(name: &str, r: &Matrix3<f64>, x: &Matrix3<f64>) -> Result<()> {
    if !r.iter().chain(x.iter()).all(|v| v.is_finite()) {
        return Err(Error::Validation(format!("{name}: non-finite impedance entry")));
    }
    let scale = r.amax().max(x.amax());
    let z = complex_impedance(r, x);
    if scale == 0.0 || z.determinant().norm() <= 1e-12 * scale.powi(3) {
        return Err(Error::Validation(format!("{name}: singular impedance")));
    }
    let sym_tol = 1e-9 * scale;
    if (r - r.transpose()).amax() > sym_tol || (x - x.transpose()).amax() > sym_tol {
        return Err(Error::Validation(format!("{name}: R and X must be symmetric")));
    }
    if (0..3).any(|i| r[(i, i)] <= 0.0) {
        return Err(Error::Validation(format!("{name}: diagonal resistance must be strictly positive")));
    }
    Ok(())
}
