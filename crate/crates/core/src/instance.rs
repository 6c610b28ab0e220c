//! Problem instances: cargo types, vehicle types, vertices, travel times.
//!
//! Instances are read from a UTF-8 JSON document with top-level keys
//! `{"name","modes","cargo_types","vehicle_types","vertices","travel_time",
//! "integrality"}`. All cross references (mode, cargo, vertex and vehicle
//! type names) are resolved at parse time; the in-memory form works with
//! dense integer ids. An instance is immutable after parsing.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

pub type Qty = f64;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
        pub struct $name(pub usize);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(ModeId);
id_type!(CargoId);
id_type!(VtId);
id_type!(VertexId);

/// Per-cargo quantity map. Zero and missing entries mean the same thing.
pub type QtyMap = BTreeMap<CargoId, Qty>;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CargoKind {
    Pickup,
    Delivery,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrality {
    Integer,
    Continuous,
}

#[derive(Clone, Debug)]
pub struct CargoType {
    pub name: String,
    pub kind: CargoKind,
    pub unit_volume: f64,
    pub unit_weight: f64,
}

#[derive(Clone, Debug)]
pub struct VehicleType {
    pub name: String,
    pub modes: BTreeSet<ModeId>,
    pub volume_cap: f64,
    pub weight_cap: f64,
    pub open_trip: bool,
    pub compatible: BTreeSet<CargoId>,
    /// Time units per unit of cargo loaded or unloaded; defined exactly for
    /// the compatible cargos.
    pub load_unload_time: BTreeMap<CargoId, f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexKind {
    VehicleDepot,
    Warehouse,
    ReliefCentre,
    NodeSimultaneous,
    NodeSplit,
    TranshipmentPort,
}

impl VertexKind {
    pub fn is_node(self) -> bool {
        matches!(self, VertexKind::NodeSimultaneous | VertexKind::NodeSplit)
    }
    /// Primary resource vertex: holds delivery stock or accepts pickups.
    pub fn is_prv(self) -> bool {
        matches!(self, VertexKind::Warehouse | VertexKind::ReliefCentre)
    }
}

#[derive(Clone, Debug)]
pub struct Vertex {
    pub name: String,
    pub kind: VertexKind,
    pub modes: BTreeSet<ModeId>,
    /// Depots only: vehicles of each type stationed here.
    pub fleet: BTreeMap<VtId, u32>,
    /// Warehouses only: available delivery stock.
    pub stock: QtyMap,
    /// Relief centres only: acceptable pickup intake.
    pub capacity: QtyMap,
    /// Nodes only: requested quantities per cargo.
    pub demand: QtyMap,
    /// Ports only: cargos that may cross this port.
    pub transhippable: BTreeSet<CargoId>,
}

/// One concrete vehicle: depot, type and 1-based index within the depot's
/// fleet of that type.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Vehicle {
    pub depot: VertexId,
    pub vt: VtId,
    pub index: u32,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub name: String,
    pub modes: Vec<String>,
    pub cargo_types: Vec<CargoType>,
    pub vehicle_types: Vec<VehicleType>,
    pub vertices: Vec<Vertex>,
    /// `travel[k][i][j]` is the time for vehicle type `k` from vertex `i` to
    /// vertex `j`; `None` means unreachable. Asymmetry is allowed and no
    /// symmetry is ever assumed.
    pub travel: Vec<Vec<Vec<Option<f64>>>>,
    pub big_m_default: f64,
    pub integrality: Integrality,
}

#[derive(Error, Debug)]
pub enum ParseError {
    #[error("json syntax error at line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("unknown {what} name '{name}' referenced by {context}")]
    UnknownName { what: &'static str, name: String, context: String },
    #[error("duplicate {what} name '{name}'")]
    DuplicateName { what: &'static str, name: String },
    #[error("vertex '{vertex}' ({kind:?}): {msg}")]
    KindFieldMismatch { vertex: String, kind: VertexKind, msg: String },
    #[error("{context}: {msg}")]
    BadValue { context: String, msg: String },
    #[error("travel_time entry {vt}:{from}->{to}: endpoints must share a mode with the vehicle type")]
    TravelModeMismatch { vt: String, from: String, to: String },
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CargoDoc {
    name: String,
    kind: CargoKind,
    unit_volume: f64,
    unit_weight: f64,
}

#[derive(Serialize, Deserialize)]
struct VehicleTypeDoc {
    name: String,
    modes: Vec<String>,
    volume_cap: f64,
    weight_cap: f64,
    open_trip: bool,
    compatible_cargos: Vec<String>,
    load_unload_time: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct VertexDoc {
    name: String,
    kind: VertexKind,
    modes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fleet: Option<BTreeMap<String, u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stock: Option<BTreeMap<String, Qty>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    capacity: Option<BTreeMap<String, Qty>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    demand: Option<BTreeMap<String, Qty>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transhippable: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    name: String,
    modes: Vec<String>,
    cargo_types: Vec<CargoDoc>,
    vehicle_types: Vec<VehicleTypeDoc>,
    vertices: Vec<VertexDoc>,
    travel_time: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    integrality: Integrality,
}

fn index_names<'a, I: Iterator<Item = &'a str>>(
    what: &'static str,
    names: I,
) -> Result<BTreeMap<String, usize>, ParseError> {
    let mut map = BTreeMap::new();
    for (i, n) in names.enumerate() {
        if map.insert(n.to_string(), i).is_some() {
            return Err(ParseError::DuplicateName { what, name: n.to_string() });
        }
    }
    Ok(map)
}

/// Parse an instance document, resolving every cross reference.
pub fn parse_instance(text: &str) -> Result<Instance, ParseError> {
    let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    link_instance(doc)
}

fn link_instance(doc: InstanceDoc) -> Result<Instance, ParseError> {
    let mode_idx = index_names("mode", doc.modes.iter().map(|s| s.as_str()))?;
    let cargo_idx = index_names("cargo", doc.cargo_types.iter().map(|c| c.name.as_str()))?;
    let vt_idx = index_names("vehicle type", doc.vehicle_types.iter().map(|v| v.name.as_str()))?;
    let vertex_idx = index_names("vertex", doc.vertices.iter().map(|v| v.name.as_str()))?;

    let lookup_mode = |name: &str, ctx: &str| {
        mode_idx.get(name).copied().map(ModeId).ok_or_else(|| ParseError::UnknownName {
            what: "mode",
            name: name.to_string(),
            context: ctx.to_string(),
        })
    };
    let lookup_cargo = |name: &str, ctx: &str| {
        cargo_idx.get(name).copied().map(CargoId).ok_or_else(|| ParseError::UnknownName {
            what: "cargo",
            name: name.to_string(),
            context: ctx.to_string(),
        })
    };

    let integral = doc.integrality == Integrality::Integer;
    let check_qty = |v: Qty, ctx: String| -> Result<Qty, ParseError> {
        if !v.is_finite() || v < 0.0 {
            return Err(ParseError::BadValue { context: ctx, msg: format!("quantity {v} must be finite and >= 0") });
        }
        if integral && v.fract() != 0.0 {
            return Err(ParseError::BadValue {
                context: ctx,
                msg: format!("quantity {v} must be integral in integer mode"),
            });
        }
        Ok(v)
    };

    let cargo_types: Vec<CargoType> = doc
        .cargo_types
        .iter()
        .map(|c| -> Result<CargoType, ParseError> {
            for (label, v) in [("unit_volume", c.unit_volume), ("unit_weight", c.unit_weight)] {
                if !v.is_finite() || v < 0.0 {
                    return Err(ParseError::BadValue {
                        context: format!("cargo '{}'", c.name),
                        msg: format!("{label} must be finite and >= 0"),
                    });
                }
            }
            Ok(CargoType { name: c.name.clone(), kind: c.kind, unit_volume: c.unit_volume, unit_weight: c.unit_weight })
        })
        .collect::<Result<_, _>>()?;

    let mut vehicle_types = Vec::with_capacity(doc.vehicle_types.len());
    for vt in &doc.vehicle_types {
        let ctx = format!("vehicle type '{}'", vt.name);
        if vt.volume_cap <= 0.0 || vt.weight_cap <= 0.0 {
            return Err(ParseError::BadValue { context: ctx, msg: "volume_cap and weight_cap must be > 0".into() });
        }
        let modes = vt.modes.iter().map(|m| lookup_mode(m, &ctx)).collect::<Result<BTreeSet<_>, _>>()?;
        let compatible =
            vt.compatible_cargos.iter().map(|c| lookup_cargo(c, &ctx)).collect::<Result<BTreeSet<_>, _>>()?;
        let mut load_unload_time = BTreeMap::new();
        for (c, t) in &vt.load_unload_time {
            let cid = lookup_cargo(c, &ctx)?;
            if *t < 0.0 || !t.is_finite() {
                return Err(ParseError::BadValue { context: ctx.clone(), msg: format!("load_unload_time[{c}] must be >= 0") });
            }
            load_unload_time.insert(cid, *t);
        }
        // load/unload times must be given exactly for the compatible cargos
        if load_unload_time.keys().copied().collect::<BTreeSet<_>>() != compatible {
            return Err(ParseError::BadValue {
                context: ctx,
                msg: "load_unload_time keys must equal compatible_cargos".into(),
            });
        }
        vehicle_types.push(VehicleType {
            name: vt.name.clone(),
            modes,
            volume_cap: vt.volume_cap,
            weight_cap: vt.weight_cap,
            open_trip: vt.open_trip,
            compatible,
            load_unload_time,
        });
    }

    let mut vertices = Vec::with_capacity(doc.vertices.len());
    for v in &doc.vertices {
        let ctx = format!("vertex '{}'", v.name);
        let modes = v.modes.iter().map(|m| lookup_mode(m, &ctx)).collect::<Result<BTreeSet<_>, _>>()?;
        let mismatch = |msg: &str| ParseError::KindFieldMismatch {
            vertex: v.name.clone(),
            kind: v.kind,
            msg: msg.to_string(),
        };
        let expect = |present: bool, field: &str, wanted: bool| -> Result<(), ParseError> {
            match (present, wanted) {
                (true, false) => Err(mismatch(&format!("field '{field}' not allowed for this kind"))),
                (false, true) => Err(mismatch(&format!("field '{field}' required for this kind"))),
                _ => Ok(()),
            }
        };
        use VertexKind::*;
        expect(v.fleet.is_some(), "fleet", v.kind == VehicleDepot)?;
        expect(v.stock.is_some(), "stock", v.kind == Warehouse)?;
        expect(v.capacity.is_some(), "capacity", v.kind == ReliefCentre)?;
        expect(v.demand.is_some(), "demand", v.kind.is_node())?;
        expect(v.transhippable.is_some(), "transhippable", v.kind == TranshipmentPort)?;

        let mut fleet = BTreeMap::new();
        if let Some(f) = &v.fleet {
            for (vt, n) in f {
                let id = vt_idx.get(vt).copied().map(VtId).ok_or_else(|| ParseError::UnknownName {
                    what: "vehicle type",
                    name: vt.clone(),
                    context: ctx.clone(),
                })?;
                fleet.insert(id, *n);
            }
        }
        let qty_map = |m: &Option<BTreeMap<String, Qty>>, field: &str| -> Result<QtyMap, ParseError> {
            let mut out = QtyMap::new();
            if let Some(m) = m {
                for (c, q) in m {
                    let cid = lookup_cargo(c, &ctx)?;
                    out.insert(cid, check_qty(*q, format!("{ctx} {field}[{c}]"))?);
                }
            }
            Ok(out)
        };
        let stock = qty_map(&v.stock, "stock")?;
        let capacity = qty_map(&v.capacity, "capacity")?;
        let demand = qty_map(&v.demand, "demand")?;
        for (cid, what) in stock.keys().map(|c| (c, "stock")).chain(capacity.keys().map(|c| (c, "capacity"))) {
            let want = if what == "stock" { CargoKind::Delivery } else { CargoKind::Pickup };
            if cargo_types[cid.0].kind != want {
                return Err(mismatch(&format!("{what} cargo '{}' has the wrong direction", cargo_types[cid.0].name)));
            }
        }
        if v.kind == NodeSimultaneous && demand.is_empty() {
            return Err(mismatch("a simultaneous node needs a nonempty demand mapping"));
        }
        let transhippable = match &v.transhippable {
            Some(list) => list.iter().map(|c| lookup_cargo(c, &ctx)).collect::<Result<BTreeSet<_>, _>>()?,
            None => BTreeSet::new(),
        };
        vertices.push(Vertex {
            name: v.name.clone(),
            kind: v.kind,
            modes,
            fleet,
            stock,
            capacity,
            demand,
            transhippable,
        });
    }

    let nv = vertices.len();
    let mut travel = vec![vec![vec![None; nv]; nv]; vehicle_types.len()];
    for (vt_name, by_from) in &doc.travel_time {
        let k = vt_idx.get(vt_name).copied().ok_or_else(|| ParseError::UnknownName {
            what: "vehicle type",
            name: vt_name.clone(),
            context: "travel_time".into(),
        })?;
        for (from, by_to) in by_from {
            let i = vertex_idx.get(from).copied().ok_or_else(|| ParseError::UnknownName {
                what: "vertex",
                name: from.clone(),
                context: format!("travel_time[{vt_name}]"),
            })?;
            for (to, t) in by_to {
                let j = vertex_idx.get(to).copied().ok_or_else(|| ParseError::UnknownName {
                    what: "vertex",
                    name: to.clone(),
                    context: format!("travel_time[{vt_name}][{from}]"),
                })?;
                if *t < 0.0 || !t.is_finite() {
                    return Err(ParseError::BadValue {
                        context: format!("travel_time[{vt_name}][{from}][{to}]"),
                        msg: "travel times must be finite and >= 0".into(),
                    });
                }
                let vt = &vehicle_types[k];
                let ok = |v: &Vertex| v.modes.iter().any(|m| vt.modes.contains(m));
                if !ok(&vertices[i]) || !ok(&vertices[j]) {
                    return Err(ParseError::TravelModeMismatch {
                        vt: vt_name.clone(),
                        from: from.clone(),
                        to: to.clone(),
                    });
                }
                travel[k][i][j] = Some(*t);
            }
        }
    }

    Ok(Instance {
        name: doc.name,
        modes: doc.modes,
        cargo_types,
        vehicle_types,
        vertices,
        travel,
        big_m_default: 3000.0,
        integrality: doc.integrality,
    })
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

impl Instance {
    pub fn cargo(&self, c: CargoId) -> &CargoType {
        &self.cargo_types[c.0]
    }
    pub fn vt(&self, k: VtId) -> &VehicleType {
        &self.vehicle_types[k.0]
    }
    pub fn vertex(&self, v: VertexId) -> &Vertex {
        &self.vertices[v.0]
    }
    pub fn travel_time(&self, k: VtId, from: VertexId, to: VertexId) -> Option<f64> {
        if from == to {
            return Some(0.0);
        }
        self.travel[k.0][from.0][to.0]
    }

    pub fn cargo_ids(&self) -> impl Iterator<Item = CargoId> {
        (0..self.cargo_types.len()).map(CargoId)
    }
    pub fn vt_ids(&self) -> impl Iterator<Item = VtId> {
        (0..self.vehicle_types.len()).map(VtId)
    }
    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertices.len()).map(VertexId)
    }

    pub fn find_vertex(&self, name: &str) -> Option<VertexId> {
        self.vertices.iter().position(|v| v.name == name).map(VertexId)
    }
    pub fn find_vt(&self, name: &str) -> Option<VtId> {
        self.vehicle_types.iter().position(|v| v.name == name).map(VtId)
    }
    pub fn find_cargo(&self, name: &str) -> Option<CargoId> {
        self.cargo_types.iter().position(|c| c.name == name).map(CargoId)
    }

    pub fn shares_mode(&self, k: VtId, v: VertexId) -> bool {
        self.vertex(v).modes.iter().any(|m| self.vt(k).modes.contains(m))
    }

    /// Vertices reachable by vehicle type `k`: they share a mode with `k` and
    /// have at least one finite travel-time entry under `k`.
    pub fn accessible_set(&self, k: VtId) -> BTreeSet<VertexId> {
        let mut out = BTreeSet::new();
        for i in self.vertex_ids() {
            if !self.shares_mode(k, i) {
                continue;
            }
            let any = self
                .vertex_ids()
                .any(|j| j != i && (self.travel[k.0][i.0][j.0].is_some() || self.travel[k.0][j.0][i.0].is_some()));
            if any {
                out.insert(i);
            }
        }
        out
    }

    /// Full fleet in deterministic order: vertices, then vehicle types, then
    /// 1-based index.
    pub fn vehicles(&self) -> Vec<Vehicle> {
        let mut out = Vec::new();
        for v in self.vertex_ids() {
            for (&vt, &n) in &self.vertex(v).fleet {
                for index in 1..=n {
                    out.push(Vehicle { depot: v, vt, index });
                }
            }
        }
        out
    }

    pub fn vehicle_label(&self, v: &Vehicle) -> String {
        format!("({},{},{})", self.vertex(v.depot).name, self.vt(v.vt).name, v.index)
    }

    /// Volume of a quantity map under this instance's cargo unit volumes.
    pub fn volume_of(&self, m: &QtyMap) -> f64 {
        m.iter().map(|(c, q)| q * self.cargo(*c).unit_volume).sum()
    }
    pub fn weight_of(&self, m: &QtyMap) -> f64 {
        m.iter().map(|(c, q)| q * self.cargo(*c).unit_weight).sum()
    }

    /// Re-serialize to the wire format; parsing the result yields an equal
    /// instance.
    pub fn to_document(&self) -> serde_json::Value {
        let mode_name = |m: &ModeId| self.modes[m.0].clone();
        let cargo_name = |c: &CargoId| self.cargo_types[c.0].name.clone();
        let doc = InstanceDoc {
            name: self.name.clone(),
            modes: self.modes.clone(),
            cargo_types: self
                .cargo_types
                .iter()
                .map(|c| CargoDoc {
                    name: c.name.clone(),
                    kind: c.kind,
                    unit_volume: c.unit_volume,
                    unit_weight: c.unit_weight,
                })
                .collect(),
            vehicle_types: self
                .vehicle_types
                .iter()
                .map(|v| VehicleTypeDoc {
                    name: v.name.clone(),
                    modes: v.modes.iter().map(mode_name).collect(),
                    volume_cap: v.volume_cap,
                    weight_cap: v.weight_cap,
                    open_trip: v.open_trip,
                    compatible_cargos: v.compatible.iter().map(cargo_name).collect(),
                    load_unload_time: v.load_unload_time.iter().map(|(c, t)| (cargo_name(c), *t)).collect(),
                })
                .collect(),
            vertices: self
                .vertices
                .iter()
                .map(|v| VertexDoc {
                    name: v.name.clone(),
                    kind: v.kind,
                    modes: v.modes.iter().map(mode_name).collect(),
                    fleet: (v.kind == VertexKind::VehicleDepot)
                        .then(|| v.fleet.iter().map(|(k, n)| (self.vt(*k).name.clone(), *n)).collect()),
                    stock: (v.kind == VertexKind::Warehouse)
                        .then(|| v.stock.iter().map(|(c, q)| (cargo_name(c), *q)).collect()),
                    capacity: (v.kind == VertexKind::ReliefCentre)
                        .then(|| v.capacity.iter().map(|(c, q)| (cargo_name(c), *q)).collect()),
                    demand: v.kind.is_node().then(|| v.demand.iter().map(|(c, q)| (cargo_name(c), *q)).collect()),
                    transhippable: (v.kind == VertexKind::TranshipmentPort)
                        .then(|| v.transhippable.iter().map(cargo_name).collect()),
                })
                .collect(),
            travel_time: {
                let mut by_vt = BTreeMap::new();
                for k in self.vt_ids() {
                    let mut by_from: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
                    for i in self.vertex_ids() {
                        for j in self.vertex_ids() {
                            if let Some(t) = self.travel[k.0][i.0][j.0] {
                                by_from
                                    .entry(self.vertex(i).name.clone())
                                    .or_default()
                                    .insert(self.vertex(j).name.clone(), t);
                            }
                        }
                    }
                    if !by_from.is_empty() {
                        by_vt.insert(self.vt(k).name.clone(), by_from);
                    }
                }
                by_vt
            },
            integrality: self.integrality,
        };
        serde_json::to_value(doc).expect("instance document serializes")
    }
}

// ---------------------------------------------------------------------------
// Instance sanity checks
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IssueCode {
    OrphanCargoDemand,
    NoFeasibleSingleTripVehicle,
    FleetModeMismatch,
    NonIntegralQuantity,
    NegativeQuantity,
}

#[derive(Clone, Debug)]
pub struct Issue {
    pub code: IssueCode,
    pub message: String,
}

/// Cheap feasibility pre-checks. Issues are data, not failures.
pub fn validate_instance(inst: &Instance) -> Vec<Issue> {
    let mut issues = Vec::new();
    for v in inst.vertex_ids() {
        let vert = inst.vertex(v);
        match vert.kind {
            VertexKind::VehicleDepot => {
                for (&vt, &n) in &vert.fleet {
                    if n > 0 && !inst.shares_mode(vt, v) {
                        issues.push(Issue {
                            code: IssueCode::FleetModeMismatch,
                            message: format!(
                                "depot '{}' hosts vehicle type '{}' but shares no mode with it",
                                vert.name,
                                inst.vt(vt).name
                            ),
                        });
                    }
                }
            }
            VertexKind::NodeSimultaneous | VertexKind::NodeSplit => {
                for (&c, &q) in &vert.demand {
                    if q <= 0.0 {
                        continue;
                    }
                    let served = inst
                        .vt_ids()
                        .any(|k| inst.vt(k).compatible.contains(&c) && inst.accessible_set(k).contains(&v));
                    if !served {
                        issues.push(Issue {
                            code: IssueCode::OrphanCargoDemand,
                            message: format!(
                                "node '{}' demands cargo '{}' but no compatible vehicle type can reach it",
                                vert.name,
                                inst.cargo(c).name
                            ),
                        });
                    }
                }
                if vert.kind == VertexKind::NodeSimultaneous {
                    let demanded: Vec<CargoId> =
                        vert.demand.iter().filter(|(_, q)| **q > 0.0).map(|(c, _)| *c).collect();
                    if !demanded.is_empty() {
                        let (dv, dw, pv, pw) = directional_load(inst, &vert.demand);
                        let feasible = inst.vt_ids().any(|k| {
                            let t = inst.vt(k);
                            demanded.iter().all(|c| t.compatible.contains(c))
                                && inst.accessible_set(k).contains(&v)
                                && t.volume_cap + 1e-9 >= dv.max(pv)
                                && t.weight_cap + 1e-9 >= dw.max(pw)
                        });
                        if !feasible {
                            issues.push(Issue {
                                code: IssueCode::NoFeasibleSingleTripVehicle,
                                message: format!(
                                    "simultaneous node '{}' cannot be served by any single compatible vehicle",
                                    vert.name
                                ),
                            });
                        }
                    }
                }
            }
            _ => {}
        }
        if inst.integrality == Integrality::Integer {
            for (label, map) in
                [("stock", &vert.stock), ("capacity", &vert.capacity), ("demand", &vert.demand)]
            {
                for (&c, &q) in map {
                    if q.fract() != 0.0 {
                        issues.push(Issue {
                            code: IssueCode::NonIntegralQuantity,
                            message: format!(
                                "vertex '{}' {label}[{}] = {q} is not integral",
                                vert.name,
                                inst.cargo(c).name
                            ),
                        });
                    }
                    if q < 0.0 {
                        issues.push(Issue {
                            code: IssueCode::NegativeQuantity,
                            message: format!("vertex '{}' {label}[{}] = {q} is negative", vert.name, inst.cargo(c).name),
                        });
                    }
                }
            }
        }
    }
    issues
}

/// (delivery volume, delivery weight, pickup volume, pickup weight) of a map.
pub fn directional_load(inst: &Instance, m: &QtyMap) -> (f64, f64, f64, f64) {
    let (mut dv, mut dw, mut pv, mut pw) = (0.0, 0.0, 0.0, 0.0);
    for (&c, &q) in m {
        let ct = inst.cargo(c);
        match ct.kind {
            CargoKind::Delivery => {
                dv += q * ct.unit_volume;
                dw += q * ct.unit_weight;
            }
            CargoKind::Pickup => {
                pv += q * ct.unit_volume;
                pw += q * ct.unit_weight;
            }
        }
    }
    (dv, dw, pv, pw)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "name": "minimal",
        "modes": ["road"],
        "cargo_types": [{"name": "water", "kind": "delivery", "unit_volume": 1, "unit_weight": 1}],
        "vehicle_types": [{
            "name": "van", "modes": ["road"], "volume_cap": 10, "weight_cap": 10,
            "open_trip": false, "compatible_cargos": ["water"], "load_unload_time": {"water": 0.5}
        }],
        "vertices": [
            {"name": "D", "kind": "vehicle_depot", "modes": ["road"], "fleet": {"van": 1}},
            {"name": "W", "kind": "warehouse", "modes": ["road"], "stock": {"water": 5}},
            {"name": "N", "kind": "node_split", "modes": ["road"], "demand": {"water": 5}}
        ],
        "travel_time": {"van": {
            "D": {"W": 1.0, "N": 2.0},
            "W": {"D": 1.0, "N": 1.5},
            "N": {"D": 2.0, "W": 1.5}
        }},
        "integrality": "integer"
    }"#;

    #[test]
    fn parses_minimal_document() {
        let inst = parse_instance(MINIMAL).unwrap();
        assert_eq!(inst.vertices.len(), 3);
        assert_eq!(inst.vehicle_types.len(), 1);
        assert_eq!(inst.vehicles().len(), 1);
        assert!(validate_instance(&inst).is_empty());
    }

    #[test]
    fn unknown_cargo_in_demand_is_an_error() {
        let bad = MINIMAL.replace(r#""demand": {"water": 5}"#, r#""demand": {"food": 5}"#);
        match parse_instance(&bad) {
            Err(ParseError::UnknownName { what: "cargo", name, .. }) => assert_eq!(name, "food"),
            other => panic!("expected unknown-name error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_vertex_name_is_an_error() {
        let bad = MINIMAL.replace(r#""name": "W", "kind": "warehouse""#, r#""name": "D", "kind": "warehouse""#);
        assert!(matches!(parse_instance(&bad), Err(ParseError::DuplicateName { .. })));
    }

    #[test]
    fn non_integral_quantity_rejected_in_integer_mode() {
        let bad = MINIMAL.replace(r#""stock": {"water": 5}"#, r#""stock": {"water": 5.5}"#);
        assert!(matches!(parse_instance(&bad), Err(ParseError::BadValue { .. })));
        let ok = bad.replace(r#""integrality": "integer""#, r#""integrality": "continuous""#);
        assert!(parse_instance(&ok).is_ok());
    }

    #[test]
    fn travel_time_mode_mismatch_rejected() {
        let bad = MINIMAL.replace(
            r#"{"name": "N", "kind": "node_split", "modes": ["road"]"#,
            r#"{"name": "N", "kind": "node_split", "modes": []"#,
        );
        assert!(matches!(parse_instance(&bad), Err(ParseError::TravelModeMismatch { .. })));
    }

    #[test]
    fn parse_emit_identity() {
        let inst = parse_instance(MINIMAL).unwrap();
        let text = serde_json::to_string_pretty(&inst.to_document()).unwrap();
        let again = parse_instance(&text).unwrap();
        assert_eq!(serde_json::to_string(&again.to_document()).unwrap(), serde_json::to_string(&inst.to_document()).unwrap());
    }

    #[test]
    fn accessible_set_respects_modes() {
        let inst = parse_instance(MINIMAL).unwrap();
        let van = inst.find_vt("van").unwrap();
        let acc = inst.accessible_set(van);
        assert_eq!(acc.len(), 3);
        for v in &acc {
            assert!(inst.shares_mode(van, *v));
        }
    }

    #[test]
    fn orphan_demand_issue() {
        let bad = MINIMAL.replace(r#""compatible_cargos": ["water"], "load_unload_time": {"water": 0.5}"#,
            r#""compatible_cargos": [], "load_unload_time": {}"#);
        let inst = parse_instance(&bad).unwrap();
        let issues = validate_instance(&inst);
        assert!(issues.iter().any(|i| i.code == IssueCode::OrphanCargoDemand));
    }
}
