//! Decision trees and preference scores.
//!
//! For every node and port a tree Trunk -> Branches -> Twigs -> Leaves is
//! built once per main iteration: branches are vehicle types that can serve
//! the trunk (with their candidate depots), twigs are the warehouses, relief
//! centres and ports the branch can reach, leaves are the cargo types that
//! survive every compatibility filter. Leaves carry randomly drawn multiplier
//! and exponent weights; twigs carry a multi-trip weight. Preference scores
//! rank twigs for satisfying a trunk's requirement, and a recursive estimator
//! prices resources that are only reachable through chains of transhipments.

use crate::hyper::{sample_leaf_weight, GlobalHyperParams};
use crate::instance::{
    CargoId, CargoKind, Instance, Qty, QtyMap, VertexId, VertexKind, VtId,
};
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum DtsError {
    #[error("vertex '{0}' cannot be a trunk (must be a node or a transhipment port)")]
    BadTrunk(String),
    #[error("vertex '{0}' cannot be compared (must be a warehouse or relief centre)")]
    BadTwig(String),
    #[error("score denominator is zero (all leaf multipliers zero)")]
    UndefinedScore,
    #[error("adjusted degree of an empty entry list")]
    EmptyDegree,
    #[error("nonpositive adjusted degree with the multiplier toggle on")]
    BadDegree,
}

/// Live remaining stock / intake capacity, consumed as SREs are generated.
#[derive(Clone, Debug)]
pub struct Stocks {
    stock: Vec<QtyMap>,
    capacity: Vec<QtyMap>,
}

impl Stocks {
    pub fn new(inst: &Instance) -> Self {
        Stocks {
            stock: inst.vertices.iter().map(|v| v.stock.clone()).collect(),
            capacity: inst.vertices.iter().map(|v| v.capacity.clone()).collect(),
        }
    }

    /// Remaining amount a PRV can provide (warehouse) or absorb (relief
    /// centre) for `cargo`; zero for any other vertex kind.
    pub fn available(&self, inst: &Instance, v: VertexId, cargo: CargoId) -> Qty {
        match inst.vertex(v).kind {
            VertexKind::Warehouse => self.stock[v.0].get(&cargo).copied().unwrap_or(0.0),
            VertexKind::ReliefCentre => self.capacity[v.0].get(&cargo).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    pub fn consume(&mut self, inst: &Instance, v: VertexId, cargo: CargoId, qty: Qty) {
        let map = match inst.vertex(v).kind {
            VertexKind::Warehouse => &mut self.stock[v.0],
            VertexKind::ReliefCentre => &mut self.capacity[v.0],
            _ => return,
        };
        let e = map.entry(cargo).or_insert(0.0);
        *e = (*e - qty).max(0.0);
    }
}

// ---------------------------------------------------------------------------
// Tree structure
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct Leaf {
    pub cargo: CargoId,
    /// Multiplier weight, in (0, 1].
    pub m: f64,
    /// Exponent weight, in (0, 1].
    pub p: f64,
    /// Multi-trip weight of the owning twig, copied here for convenience.
    pub multi_trip: f64,
    /// Estimation result for port twigs, filled on first use.
    pub cached_component2: Option<ComponentTwo>,
}

#[derive(Clone, Debug)]
pub struct Twig {
    pub vertex: VertexId,
    pub multi_trip: f64,
    pub leaves: Vec<Leaf>,
}

impl Twig {
    pub fn leaf(&self, cargo: CargoId) -> Option<&Leaf> {
        self.leaves.iter().find(|l| l.cargo == cargo)
    }
    pub fn leaf_mut(&mut self, cargo: CargoId) -> Option<&mut Leaf> {
        self.leaves.iter_mut().find(|l| l.cargo == cargo)
    }
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub vt: VtId,
    pub candidate_depots: BTreeSet<VertexId>,
    pub twigs: Vec<Twig>,
}

#[derive(Clone, Debug)]
pub struct DecisionTree {
    pub trunk: VertexId,
    pub branches: Vec<Branch>,
}

/// Requirement of a trunk: positive demanded quantities per cargo.
pub fn requirement_code(inst: &Instance, v: VertexId) -> QtyMap {
    inst.vertex(v).demand.iter().filter(|(_, q)| **q > 0.0).map(|(c, q)| (*c, *q)).collect()
}

/// Build the decision tree for one trunk (node or port).
pub fn build_dts<R: Rng>(
    inst: &Instance,
    trunk: VertexId,
    _hp: &GlobalHyperParams,
    rng: &mut R,
) -> Result<DecisionTree, DtsError> {
    let tv = inst.vertex(trunk);
    if !tv.kind.is_node() && tv.kind != VertexKind::TranshipmentPort {
        return Err(DtsError::BadTrunk(tv.name.clone()));
    }
    let trunk_port_filter: Option<&BTreeSet<CargoId>> =
        (tv.kind == VertexKind::TranshipmentPort).then_some(&tv.transhippable);
    let req = requirement_code(inst, trunk);
    let mut branches = Vec::new();
    for vt in inst.vt_ids() {
        // depots hosting this type on a segment from which the trunk is
        // directly reachable
        let depots: BTreeSet<VertexId> = inst
            .vertex_ids()
            .filter(|d| {
                let dv = inst.vertex(*d);
                dv.kind == VertexKind::VehicleDepot
                    && dv.fleet.get(&vt).copied().unwrap_or(0) > 0
                    && inst.shares_mode(vt, *d)
                    && inst.travel_time(vt, *d, trunk).is_some()
            })
            .collect();
        if depots.is_empty() {
            continue;
        }
        if tv.kind == VertexKind::NodeSimultaneous {
            // the single serving vehicle must carry everything at once
            let all_compatible = req.keys().all(|c| inst.vt(vt).compatible.contains(c));
            let (dv, dw, pv, pw) = crate::instance::directional_load(inst, &req);
            let t = inst.vt(vt);
            if !all_compatible || t.volume_cap + 1e-9 < dv.max(pv) || t.weight_cap + 1e-9 < dw.max(pw) {
                continue;
            }
        }
        let accessible = inst.accessible_set(vt);
        let mut twigs = Vec::new();
        for v in &accessible {
            if *v == trunk {
                continue;
            }
            let vert = inst.vertex(*v);
            let candidates: Vec<CargoId> = match vert.kind {
                VertexKind::Warehouse => vert.stock.keys().copied().collect(),
                VertexKind::ReliefCentre => vert.capacity.keys().copied().collect(),
                VertexKind::TranshipmentPort => vert.transhippable.iter().copied().collect(),
                _ => continue,
            };
            let multi_trip = rng.gen::<f64>();
            let leaves: Vec<Leaf> = candidates
                .into_iter()
                .filter(|c| inst.vt(vt).compatible.contains(c))
                .filter(|c| trunk_port_filter.map_or(true, |b| b.contains(c)))
                .map(|cargo| Leaf {
                    cargo,
                    m: sample_leaf_weight(rng),
                    p: sample_leaf_weight(rng),
                    multi_trip,
                    cached_component2: None,
                })
                .collect();
            if !leaves.is_empty() {
                twigs.push(Twig { vertex: *v, multi_trip, leaves });
            }
        }
        branches.push(Branch { vt, candidate_depots: depots, twigs });
    }
    Ok(DecisionTree { trunk, branches })
}

/// All trees of one main iteration, keyed by trunk.
#[derive(Clone, Debug, Default)]
pub struct Forest {
    pub trees: BTreeMap<VertexId, DecisionTree>,
}

impl Forest {
    pub fn build<R: Rng>(inst: &Instance, hp: &GlobalHyperParams, rng: &mut R) -> Result<Self, DtsError> {
        let mut trees = BTreeMap::new();
        for v in inst.vertex_ids() {
            let kind = inst.vertex(v).kind;
            if kind.is_node() || kind == VertexKind::TranshipmentPort {
                trees.insert(v, build_dts(inst, v, hp, rng)?);
            }
        }
        Ok(Forest { trees })
    }

    pub fn tree(&self, trunk: VertexId) -> &DecisionTree {
        &self.trees[&trunk]
    }
    pub fn tree_mut(&mut self, trunk: VertexId) -> &mut DecisionTree {
        self.trees.get_mut(&trunk).expect("tree exists")
    }
}

// ---------------------------------------------------------------------------
// Compare codes and scores
// ---------------------------------------------------------------------------

/// Per cargo in `filter`, the amount of the requirement the twig can satisfy
/// right now; cargos of the wrong direction for the twig map to 0.
pub fn compare_code(
    req: &QtyMap,
    inst: &Instance,
    stocks: &Stocks,
    twig: VertexId,
    filter: &BTreeSet<CargoId>,
) -> Result<QtyMap, DtsError> {
    let kind = inst.vertex(twig).kind;
    if !kind.is_prv() {
        return Err(DtsError::BadTwig(inst.vertex(twig).name.clone()));
    }
    let mut out = QtyMap::new();
    for (&c, &need) in req {
        if !filter.contains(&c) {
            continue;
        }
        let right_direction = match kind {
            VertexKind::Warehouse => inst.cargo(c).kind == CargoKind::Delivery,
            VertexKind::ReliefCentre => inst.cargo(c).kind == CargoKind::Pickup,
            _ => unreachable!(),
        };
        let value = if right_direction { need.min(stocks.available(inst, twig, c)) } else { 0.0 };
        out.insert(c, value);
    }
    Ok(out)
}

/// Leaf weights used by the scoring functions: (cargo, multiplier, exponent).
pub type LeafWeights<'a> = &'a [(CargoId, f64, f64)];

pub fn leaf_weights(twig: &Twig) -> Vec<(CargoId, f64, f64)> {
    twig.leaves.iter().map(|l| (l.cargo, l.m, l.p)).collect()
}

/// Preference score of a PRV twig: satisfied fractions raised to leaf
/// exponents and weighted by leaf multipliers, over the total multiplier
/// mass of the twig (all leaves, demanded or not).
pub fn score_basic(
    req: &QtyMap,
    cmp: &QtyMap,
    leaves: LeafWeights,
    hp: &GlobalHyperParams,
    travel_time: f64,
) -> Result<f64, DtsError> {
    let mut numerator = 0.0;
    for &(c, m, p) in leaves {
        let need = req.get(&c).copied().unwrap_or(0.0);
        if need > 0.0 {
            let f = cmp.get(&c).copied().unwrap_or(0.0) / need;
            numerator += m * f.powf(p);
        }
    }
    let denominator = if hp.denominator_enabled {
        let mass: f64 = leaves.iter().map(|(_, m, _)| m).sum();
        let d = if hp.time_in_denominator { mass * travel_time } else { mass };
        if d == 0.0 {
            return Err(DtsError::UndefinedScore);
        }
        d
    } else {
        1.0
    };
    Ok(numerator / denominator)
}

/// How the degrees of several contributions collapse into one number.
#[derive(Clone, Copy, Debug)]
pub enum DegreePolicy {
    /// Quantity-weighted mean of the degrees.
    Weighted,
    /// Interpolate between the minimum and maximum degree.
    Slider(f64),
}

/// Collapse `(degree, quantity)` entries into a single adjusted degree.
pub fn adjusted_degree(entries: &[(u32, Qty)], policy: DegreePolicy) -> Result<f64, DtsError> {
    if entries.is_empty() || entries.iter().any(|(_, q)| *q <= 0.0) {
        return Err(DtsError::EmptyDegree);
    }
    Ok(match policy {
        DegreePolicy::Weighted => {
            let num: f64 = entries.iter().map(|(d, q)| *d as f64 * q).sum();
            let den: f64 = entries.iter().map(|(_, q)| q).sum();
            num / den
        }
        DegreePolicy::Slider(s) => {
            let lo = entries.iter().map(|(d, _)| *d).min().unwrap() as f64;
            let hi = entries.iter().map(|(d, _)| *d).max().unwrap() as f64;
            lo + (hi - lo) * s
        }
    })
}

/// Preference score of a port twig from its satisfaction estimate; the
/// adjusted degree optionally dampens the leaf weights.
pub fn score_tp(
    satisfaction: &QtyMap,
    transhipment_code: &QtyMap,
    degrees: &BTreeMap<CargoId, f64>,
    leaves: LeafWeights,
    hp: &GlobalHyperParams,
    travel_time: f64,
) -> Result<f64, DtsError> {
    let adjust = |c: CargoId, m: f64, p: f64| -> Result<(f64, f64), DtsError> {
        let mut m = m;
        let mut p = p;
        if let Some(&d) = degrees.get(&c) {
            if hp.degree_affects_multiplier {
                if d <= 0.0 {
                    return Err(DtsError::BadDegree);
                }
                m /= d;
            }
            if hp.degree_affects_exponent {
                p *= d;
            }
        }
        Ok((m, p))
    };
    let mut numerator = 0.0;
    let mut mass = 0.0;
    for &(c, m0, p0) in leaves {
        let (m, p) = adjust(c, m0, p0)?;
        mass += m;
        let need = transhipment_code.get(&c).copied().unwrap_or(0.0);
        if need > 0.0 {
            let f = satisfaction.get(&c).copied().unwrap_or(0.0) / need;
            numerator += m * f.powf(p);
        }
    }
    let denominator = if hp.denominator_enabled {
        let d = if hp.time_in_denominator { mass * travel_time } else { mass };
        if d == 0.0 {
            return Err(DtsError::UndefinedScore);
        }
        d
    } else {
        1.0
    };
    Ok(numerator / denominator)
}

// ---------------------------------------------------------------------------
// Transhipment estimation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComponentOneEntry {
    pub degree: u32,
    pub satisfiable: Qty,
    pub available: Qty,
}

/// PRVs that can ultimately source (or absorb) the requested cargo, each at
/// its cheapest transhipment depth.
pub type ComponentOne = BTreeMap<VertexId, ComponentOneEntry>;

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentTwoEntry {
    pub adjusted_degree: f64,
    pub satisfiable: Qty,
    /// degree -> PRV -> available quantity reachable through this vertex.
    pub downstream: BTreeMap<u32, BTreeMap<VertexId, Qty>>,
}

/// The same potential grouped by the first vertex of each onward journey.
pub type ComponentTwo = BTreeMap<VertexId, ComponentTwoEntry>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComponentPair {
    pub component_one: ComponentOne,
    pub component_two: ComponentTwo,
}

fn merge_c1(into: &mut ComponentOne, from: &ComponentOne) {
    for (v, e) in from {
        into.entry(*v)
            .and_modify(|cur| {
                // duplicates keep the lowest degree and the highest amounts
                if e.degree < cur.degree {
                    cur.degree = e.degree;
                }
                if e.satisfiable > cur.satisfiable {
                    cur.satisfiable = e.satisfiable;
                }
                if e.available > cur.available {
                    cur.available = e.available;
                }
            })
            .or_insert(*e);
    }
}

fn weighted_degree(c1: &ComponentOne) -> f64 {
    let entries: Vec<(u32, Qty)> =
        c1.values().filter(|e| e.satisfiable > 0.0).map(|e| (e.degree, e.satisfiable)).collect();
    if entries.is_empty() {
        return 0.0;
    }
    adjusted_degree(&entries, DegreePolicy::Weighted).unwrap_or(0.0)
}

fn c2_entry_from(c1: &ComponentOne, requested: Qty) -> ComponentTwoEntry {
    let mut downstream: BTreeMap<u32, BTreeMap<VertexId, Qty>> = BTreeMap::new();
    for (v, e) in c1 {
        downstream.entry(e.degree).or_default().insert(*v, e.available);
    }
    let total: Qty = c1.values().map(|e| e.satisfiable).sum();
    ComponentTwoEntry {
        adjusted_degree: weighted_degree(c1),
        satisfiable: total.min(requested),
        downstream,
    }
}

fn pair_from_direct(direct: &ComponentOne) -> ComponentPair {
    let mut c2 = ComponentTwo::new();
    for (v, e) in direct {
        let mut single = ComponentOne::new();
        single.insert(*v, *e);
        c2.insert(*v, c2_entry_from(&single, e.satisfiable));
    }
    ComponentPair { component_one: direct.clone(), component_two: c2 }
}

/// Recursively estimate how much of `cargo` the port `tp` can leverage from
/// beyond, excluding the vehicle type that raised the request and any PRVs
/// already counted. Returns what is reachable (component one) and the same
/// information grouped by first onward hop (component two).
#[allow(clippy::too_many_arguments)]
pub fn estimate_transhipment(
    inst: &Instance,
    forest: &Forest,
    stocks: &Stocks,
    hp: &GlobalHyperParams,
    considered_prvs: &BTreeSet<VertexId>,
    prev_vt: VtId,
    cargo: CargoId,
    qty: Qty,
    tp: VertexId,
    degree: u32,
    tabu: &BTreeSet<(VtId, VertexId)>,
) -> ComponentPair {
    let depth_left = inst
        .vertices
        .iter()
        .filter(|v| v.kind == VertexKind::TranshipmentPort)
        .count() as u32
        + 1;
    estimate_inner(inst, forest, stocks, hp, considered_prvs, prev_vt, cargo, qty, tp, degree, tabu, depth_left)
}

#[allow(clippy::too_many_arguments)]
fn estimate_inner(
    inst: &Instance,
    forest: &Forest,
    stocks: &Stocks,
    hp: &GlobalHyperParams,
    considered_prvs: &BTreeSet<VertexId>,
    prev_vt: VtId,
    cargo: CargoId,
    qty: Qty,
    tp: VertexId,
    degree: u32,
    tabu: &BTreeSet<(VtId, VertexId)>,
    depth_left: u32,
) -> ComponentPair {
    if qty <= 0.0 {
        return ComponentPair::default();
    }
    let tree = match forest.trees.get(&tp) {
        Some(t) => t,
        None => return ComponentPair::default(),
    };

    // degree-scan of the PRVs one hop away
    let mut direct = ComponentOne::new();
    let mut counter = 0.0;
    for branch in &tree.branches {
        if branch.vt == prev_vt {
            continue;
        }
        for twig in &branch.twigs {
            if inst.vertex(twig.vertex).kind == VertexKind::TranshipmentPort {
                continue;
            }
            if considered_prvs.contains(&twig.vertex) || direct.contains_key(&twig.vertex) {
                continue;
            }
            if twig.leaf(cargo).is_none() {
                continue;
            }
            let available = stocks.available(inst, twig.vertex, cargo);
            let satisfiable = available.min(qty);
            if satisfiable <= 0.0 {
                continue;
            }
            direct.insert(twig.vertex, ComponentOneEntry { degree, satisfiable, available });
            counter += satisfiable;
        }
    }

    if counter >= qty && !hp.global_transhipment_fathom {
        return pair_from_direct(&direct);
    }
    if depth_left == 0 {
        return pair_from_direct(&direct);
    }

    let mut excl = considered_prvs.clone();
    excl.extend(direct.keys().copied());

    let mut merged_c1 = direct.clone();
    let ComponentPair { component_two: mut merged_c2, .. } = pair_from_direct(&direct);
    // per-port component-one accumulators, used to aggregate repeats of the
    // same port reached over different branches
    let mut per_port: BTreeMap<VertexId, (ComponentOne, Qty)> = BTreeMap::new();

    for branch in &tree.branches {
        if branch.vt == prev_vt {
            continue;
        }
        for twig in &branch.twigs {
            if inst.vertex(twig.vertex).kind != VertexKind::TranshipmentPort {
                continue;
            }
            if tabu.contains(&(branch.vt, twig.vertex)) {
                continue;
            }
            if twig.leaf(cargo).is_none() {
                continue;
            }
            let new_q = if hp.full_fathom { qty } else { qty - counter };
            if new_q <= 0.0 {
                continue;
            }
            let mut dynamic_tabu = tabu.clone();
            dynamic_tabu.insert((prev_vt, tp));
            let sub = estimate_inner(
                inst,
                forest,
                stocks,
                hp,
                &excl,
                branch.vt,
                cargo,
                new_q,
                twig.vertex,
                degree + 1,
                &dynamic_tabu,
                depth_left - 1,
            );
            if sub.component_one.is_empty() {
                continue;
            }
            merge_c1(&mut merged_c1, &sub.component_one);
            let slot = per_port.entry(twig.vertex).or_insert_with(|| (ComponentOne::new(), 0.0));
            merge_c1(&mut slot.0, &sub.component_one);
            slot.1 = slot.1.max(new_q);
        }
    }

    for (port, (c1, requested)) in &per_port {
        merged_c2.insert(*port, c2_entry_from(c1, *requested));
    }
    ComponentPair { component_one: merged_c1, component_two: merged_c2 }
}

/// Current leveraging potential of a port twig for one cargo: the sum of the
/// live availability at the distinct PRVs recorded in its cached estimate.
pub fn current_estimate_for(inst: &Instance, stocks: &Stocks, c2: &ComponentTwo, cargo: CargoId) -> Qty {
    let mut seen = BTreeSet::new();
    let mut total = 0.0;
    for entry in c2.values() {
        for prvs in entry.downstream.values() {
            for v in prvs.keys() {
                if inst.vertex(*v).kind.is_prv() && seen.insert(*v) {
                    total += stocks.available(inst, *v, cargo);
                }
            }
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Preference generation
// ---------------------------------------------------------------------------

/// One scored twig of some tree.
#[derive(Clone, Debug)]
pub struct ScoredTwig {
    pub trunk: VertexId,
    pub branch: usize,
    pub twig: usize,
    pub vertex: VertexId,
    pub is_port: bool,
    pub score: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SplitPrefs {
    pub scored: Vec<ScoredTwig>,
    /// Amounts that cannot come from same-segment PRVs and must tranship.
    pub transhipment_code: QtyMap,
}

fn travel_or_back(inst: &Instance, vt: VtId, from: VertexId, to: VertexId) -> f64 {
    inst.travel_time(vt, from, to).or_else(|| inst.travel_time(vt, to, from)).unwrap_or(f64::INFINITY)
}

/// Score every twig of a split node's tree and derive the transhipment code.
/// Port estimates are cached on the scanned leaves for later live lookups.
pub fn split_preferences(
    inst: &Instance,
    forest: &mut Forest,
    stocks: &Stocks,
    node: VertexId,
    hp: &GlobalHyperParams,
) -> Result<SplitPrefs, DtsError> {
    let req = requirement_code(inst, node);
    if req.is_empty() {
        return Ok(SplitPrefs::default());
    }
    let tree = forest.tree(node);
    let mut scored = Vec::new();
    let mut covered: QtyMap = QtyMap::new();
    let mut seen_prvs: BTreeSet<VertexId> = BTreeSet::new();
    for (bi, branch) in tree.branches.iter().enumerate() {
        let filter: BTreeSet<CargoId> = inst.vt(branch.vt).compatible.clone();
        for (ti, twig) in branch.twigs.iter().enumerate() {
            if inst.vertex(twig.vertex).kind != VertexKind::TranshipmentPort {
                let cmp = compare_code(&req, inst, stocks, twig.vertex, &filter)?;
                if seen_prvs.insert(twig.vertex) {
                    for (c, q) in &cmp {
                        *covered.entry(*c).or_insert(0.0) += q;
                    }
                }
                let t = travel_or_back(inst, branch.vt, node, twig.vertex);
                let score = score_basic(&req, &cmp, &leaf_weights(twig), hp, t)?;
                scored.push(ScoredTwig {
                    trunk: node,
                    branch: bi,
                    twig: ti,
                    vertex: twig.vertex,
                    is_port: false,
                    score,
                });
            }
        }
    }

    let mut trans = QtyMap::new();
    for (&c, &need) in &req {
        let extra = if hp.full_demand_for_variability {
            need
        } else {
            need - covered.get(&c).copied().unwrap_or(0.0)
        };
        if extra > 0.0 {
            trans.insert(c, extra);
        }
    }

    if !trans.is_empty() {
        let considered = seen_prvs;
        let branch_count = tree.branches.len();
        for bi in 0..branch_count {
            let twig_count = forest.tree(node).branches[bi].twigs.len();
            for ti in 0..twig_count {
                let (vt, vertex) = {
                    let b = &forest.tree(node).branches[bi];
                    (b.vt, b.twigs[ti].vertex)
                };
                if inst.vertex(vertex).kind != VertexKind::TranshipmentPort {
                    continue;
                }
                let mut satisfaction = QtyMap::new();
                let mut degrees = BTreeMap::new();
                for (&c, &need) in &trans {
                    if forest.tree(node).branches[bi].twigs[ti].leaf(c).is_none() {
                        continue;
                    }
                    let pair = estimate_transhipment(
                        inst,
                        forest,
                        stocks,
                        hp,
                        &considered,
                        vt,
                        c,
                        need,
                        vertex,
                        1,
                        &BTreeSet::new(),
                    );
                    let total: Qty = pair.component_one.values().map(|e| e.satisfiable).sum();
                    satisfaction.insert(c, total.min(need));
                    let entries: Vec<(u32, Qty)> = pair
                        .component_one
                        .values()
                        .filter(|e| e.satisfiable > 0.0)
                        .map(|e| (e.degree, e.satisfiable))
                        .collect();
                    if !entries.is_empty() {
                        degrees.insert(
                            c,
                            adjusted_degree(&entries, DegreePolicy::Slider(hp.transhipment_degree_slider_np))?,
                        );
                    }
                    forest.tree_mut(node).branches[bi].twigs[ti]
                        .leaf_mut(c)
                        .expect("leaf present")
                        .cached_component2 = Some(pair.component_two);
                }
                let twig = &forest.tree(node).branches[bi].twigs[ti];
                let t = travel_or_back(inst, vt, node, vertex);
                let score = score_tp(&satisfaction, &trans, &degrees, &leaf_weights(twig), hp, t)?;
                scored.push(ScoredTwig { trunk: node, branch: bi, twig: ti, vertex, is_port: true, score });
            }
        }
    }

    Ok(SplitPrefs { scored, transhipment_code: trans })
}

#[derive(Clone, Debug)]
pub struct SimBranchPref {
    pub branch: usize,
    pub score_sum: f64,
    pub twig_scores: Vec<(usize, f64)>,
    pub needs_transhipment: bool,
}

/// Rank the branches of a simultaneous node: only branches that could fully
/// satisfy the requirement (directly or through ports) are returned.
pub fn simultaneous_preferences(
    inst: &Instance,
    forest: &mut Forest,
    stocks: &Stocks,
    node: VertexId,
    hp: &GlobalHyperParams,
) -> Result<Vec<SimBranchPref>, DtsError> {
    let req = requirement_code(inst, node);
    if req.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let branch_count = forest.tree(node).branches.len();
    for bi in 0..branch_count {
        let vt = forest.tree(node).branches[bi].vt;
        let filter: BTreeSet<CargoId> = inst.vt(vt).compatible.clone();
        let mut twig_scores = Vec::new();
        let mut covered = QtyMap::new();
        let mut prv_vertices = BTreeSet::new();
        let twig_count = forest.tree(node).branches[bi].twigs.len();
        for ti in 0..twig_count {
            let twig_vertex = forest.tree(node).branches[bi].twigs[ti].vertex;
            if inst.vertex(twig_vertex).kind == VertexKind::TranshipmentPort {
                continue;
            }
            prv_vertices.insert(twig_vertex);
            let cmp = compare_code(&req, inst, stocks, twig_vertex, &filter)?;
            for (c, q) in &cmp {
                *covered.entry(*c).or_insert(0.0) += q;
            }
            let twig = &forest.tree(node).branches[bi].twigs[ti];
            let t = travel_or_back(inst, vt, node, twig_vertex);
            twig_scores.push((ti, score_basic(&req, &cmp, &leaf_weights(twig), hp, t)?));
        }
        let mut shortfall = QtyMap::new();
        for (&c, &need) in &req {
            let missing = need - covered.get(&c).copied().unwrap_or(0.0);
            if missing > 0.0 {
                shortfall.insert(c, missing);
            }
        }
        let needs_transhipment = !shortfall.is_empty();
        let target = if hp.full_demand_for_variability { req.clone() } else { shortfall.clone() };
        let mut port_covered: BTreeMap<CargoId, BTreeMap<VertexId, Qty>> = BTreeMap::new();
        if !target.is_empty() {
            for ti in 0..twig_count {
                let twig_vertex = forest.tree(node).branches[bi].twigs[ti].vertex;
                if inst.vertex(twig_vertex).kind != VertexKind::TranshipmentPort {
                    continue;
                }
                let mut satisfaction = QtyMap::new();
                let mut degrees = BTreeMap::new();
                for (&c, &need) in &target {
                    if forest.tree(node).branches[bi].twigs[ti].leaf(c).is_none() {
                        continue;
                    }
                    let pair = estimate_transhipment(
                        inst,
                        forest,
                        stocks,
                        hp,
                        &prv_vertices,
                        vt,
                        c,
                        need,
                        twig_vertex,
                        1,
                        &BTreeSet::new(),
                    );
                    let total: Qty = pair.component_one.values().map(|e| e.satisfiable).sum();
                    satisfaction.insert(c, total.min(need));
                    // pool the reachable PRVs branch-wide without double counting
                    for (v, e) in &pair.component_one {
                        let slot = port_covered.entry(c).or_default();
                        let cur = slot.entry(*v).or_insert(0.0);
                        *cur = cur.max(e.available);
                    }
                    let entries: Vec<(u32, Qty)> = pair
                        .component_one
                        .values()
                        .filter(|e| e.satisfiable > 0.0)
                        .map(|e| (e.degree, e.satisfiable))
                        .collect();
                    if !entries.is_empty() {
                        degrees.insert(
                            c,
                            adjusted_degree(&entries, DegreePolicy::Slider(hp.transhipment_degree_slider))?,
                        );
                    }
                    forest.tree_mut(node).branches[bi].twigs[ti]
                        .leaf_mut(c)
                        .expect("leaf present")
                        .cached_component2 = Some(pair.component_two);
                }
                let twig = &forest.tree(node).branches[bi].twigs[ti];
                let t = travel_or_back(inst, vt, node, twig_vertex);
                twig_scores.push((ti, score_tp(&satisfaction, &target, &degrees, &leaf_weights(twig), hp, t)?));
            }
        }
        // can the branch satisfy everything?
        let full = req.iter().all(|(c, need)| {
            let direct = covered.get(c).copied().unwrap_or(0.0);
            let via_ports: Qty = port_covered.get(c).map(|m| m.values().sum()).unwrap_or(0.0);
            direct + via_ports + 1e-9 >= *need
        });
        if full {
            let score_sum = twig_scores.iter().map(|(_, s)| s).sum();
            out.push(SimBranchPref { branch: bi, score_sum, twig_scores, needs_transhipment });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::parse_instance;
    use crate::rng::derive;

    const STUDY: &str = include_str!("../data/study_example.json");

    fn hp_plain() -> GlobalHyperParams {
        GlobalHyperParams {
            time_in_denominator: false,
            denominator_enabled: true,
            degree_affects_multiplier: false,
            degree_affects_exponent: false,
            transhipment_degree_slider: 0.5,
            transhipment_degree_slider_np: 0.5,
            full_demand_for_variability: false,
            global_transhipment_fathom: false,
            full_fathom: false,
            transhipment_trip_setting: true,
            shuffle_logics: false,
            degree_score_reduction: 1.0,
        }
    }

    #[test]
    fn study_example_parses_to_expected_shape() {
        let inst = parse_instance(STUDY).unwrap();
        assert_eq!(inst.vertices.len(), 17);
        assert_eq!(inst.vehicle_types.len(), 4);
        assert!(crate::instance::validate_instance(&inst).is_empty());
        let vt2 = inst.find_vt("VT2").unwrap();
        let acc = inst.accessible_set(vt2);
        for p in ["TP1", "TP2", "TP3"] {
            assert!(acc.contains(&inst.find_vertex(p).unwrap()), "{p} must be air-accessible");
        }
    }

    #[test]
    fn tp2_tree_has_two_branches_four_twigs_eight_leaves() {
        let inst = parse_instance(STUDY).unwrap();
        let hp = hp_plain();
        let mut rng = derive(1, &[0]);
        let tree = build_dts(&inst, inst.find_vertex("TP2").unwrap(), &hp, &mut rng).unwrap();
        let names: Vec<&str> = tree.branches.iter().map(|b| inst.vt(b.vt).name.as_str()).collect();
        assert_eq!(names, ["VT2", "VT5"]);
        assert_eq!(
            tree.branches[0].candidate_depots,
            [inst.find_vertex("VD3").unwrap()].into_iter().collect()
        );
        assert_eq!(
            tree.branches[1].candidate_depots,
            [inst.find_vertex("VD2").unwrap()].into_iter().collect()
        );
        let twigs: usize = tree.branches.iter().map(|b| b.twigs.len()).sum();
        let leaves: usize = tree.branches.iter().flat_map(|b| &b.twigs).map(|t| t.leaves.len()).sum();
        assert_eq!(twigs, 4);
        assert_eq!(leaves, 8);
        let twig_names: BTreeSet<&str> = tree
            .branches
            .iter()
            .flat_map(|b| &b.twigs)
            .map(|t| inst.vertex(t.vertex).name.as_str())
            .collect();
        assert_eq!(twig_names, ["RC2", "TP1", "TP3", "WH2"].into_iter().collect());
    }

    #[test]
    fn simultaneous_trunk_excludes_undersized_branches() {
        let inst = parse_instance(STUDY).unwrap();
        let hp = hp_plain();
        let mut rng = derive(1, &[1]);
        // NM2 demands 1P:20 which only VT3 may carry
        let tree = build_dts(&inst, inst.find_vertex("NM2").unwrap(), &hp, &mut rng).unwrap();
        assert_eq!(tree.branches.len(), 1);
        assert_eq!(inst.vt(tree.branches[0].vt).name, "VT3");
    }

    #[test]
    fn trunk_without_depots_has_no_branches() {
        let inst = parse_instance(STUDY).unwrap();
        let doc = inst.to_document();
        let mut doc = doc;
        // remove the Road_A fleet so NP1 sees no branch
        doc["vertices"][3]["fleet"] = serde_json::json!({});
        let inst2 = parse_instance(&doc.to_string()).unwrap();
        let hp = hp_plain();
        let mut rng = derive(1, &[2]);
        let tree = build_dts(&inst2, inst2.find_vertex("NP1").unwrap(), &hp, &mut rng).unwrap();
        assert!(tree.branches.is_empty());
    }

    // Compare-code fixtures.
    #[test]
    fn compare_code_np3_vs_wh1() {
        let inst = parse_instance(STUDY).unwrap();
        let stocks = Stocks::new(&inst);
        let np3 = inst.find_vertex("NP3").unwrap();
        let wh1 = inst.find_vertex("WH1").unwrap();
        let req = requirement_code(&inst, np3);
        let filter: BTreeSet<CargoId> = inst.cargo_ids().collect();
        let cmp = compare_code(&req, &inst, &stocks, wh1, &filter).unwrap();
        let get = |n: &str| cmp[&inst.find_cargo(n).unwrap()];
        assert_eq!(get("2P"), 0.0);
        assert_eq!(get("1D"), 11.0);
        assert_eq!(get("2D"), 13.0);
    }

    #[test]
    fn compare_code_clamps_to_stock() {
        let inst = parse_instance(STUDY).unwrap();
        let stocks = Stocks::new(&inst);
        let wh1 = inst.find_vertex("WH1").unwrap();
        let c = |n: &str| inst.find_cargo(n).unwrap();
        let req: QtyMap = [(c("2P"), 6.0), (c("1D"), 41.0), (c("2D"), 33.0)].into_iter().collect();
        let filter: BTreeSet<CargoId> = inst.cargo_ids().collect();
        let cmp = compare_code(&req, &inst, &stocks, wh1, &filter).unwrap();
        assert_eq!(cmp[&c("2P")], 0.0);
        assert_eq!(cmp[&c("1D")], 20.0);
        assert_eq!(cmp[&c("2D")], 20.0);
    }

    #[test]
    fn compare_code_nm2_vs_rc1() {
        let inst = parse_instance(STUDY).unwrap();
        let stocks = Stocks::new(&inst);
        let rc1 = inst.find_vertex("RC1").unwrap();
        let nm2 = inst.find_vertex("NM2").unwrap();
        let req = requirement_code(&inst, nm2);
        let filter: BTreeSet<CargoId> = inst.cargo_ids().collect();
        let cmp = compare_code(&req, &inst, &stocks, rc1, &filter).unwrap();
        let c = |n: &str| inst.find_cargo(n).unwrap();
        assert_eq!(cmp[&c("1P")], 20.0);
        assert_eq!(cmp[&c("1D")], 0.0);
        assert_eq!(cmp[&c("2D")], 0.0);
    }

    #[test]
    fn score_basic_fixtures() {
        let hp = hp_plain();
        let c0 = CargoId(0);
        let c1 = CargoId(1);
        let c2 = CargoId(2);
        // three unit leaves, fractions 0.5 / 0 / 0
        let req: QtyMap = [(c0, 10.0), (c1, 4.0), (c2, 4.0)].into_iter().collect();
        let cmp: QtyMap = [(c0, 5.0), (c1, 0.0), (c2, 0.0)].into_iter().collect();
        let leaves = [(c0, 1.0, 1.0), (c1, 1.0, 1.0), (c2, 1.0, 1.0)];
        let s = score_basic(&req, &cmp, &leaves, &hp, 1.0).unwrap();
        assert!((s - 1.0 / 6.0).abs() < 1e-12);

        // a fully satisfied single leaf scores 1 regardless of m and p
        let req: QtyMap = [(c0, 10.0)].into_iter().collect();
        let cmp: QtyMap = [(c0, 10.0)].into_iter().collect();
        let leaves = [(c0, 2.0, 3.0)];
        let s = score_basic(&req, &cmp, &leaves, &hp, 1.0).unwrap();
        assert!((s - 1.0).abs() < 1e-12);

        // time in the denominator halves the score at T=2
        let mut hp2 = hp_plain();
        hp2.time_in_denominator = true;
        let s = score_basic(&req, &cmp, &leaves, &hp2, 2.0).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn adjusted_degree_fixtures() {
        let w = |e: &[(u32, f64)]| adjusted_degree(e, DegreePolicy::Weighted).unwrap();
        assert_eq!(w(&[(1, 20.0), (2, 15.0)]), 10.0 / 7.0);
        assert_eq!(w(&[(1, 15.0), (2, 10.0), (3, 10.0)]), 13.0 / 7.0);
        // the mixed aggregate over five warehouses
        assert_eq!(w(&[(1, 20.0), (2, 25.0), (1, 15.0), (2, 10.0), (2, 10.0)]), 125.0 / 80.0);
        // single entry collapses to its own degree
        assert_eq!(w(&[(4, 9.0)]), 4.0);
        // slider interpolates between the extremes
        let s = adjusted_degree(&[(1, 5.0), (3, 5.0)], DegreePolicy::Slider(0.5)).unwrap();
        assert_eq!(s, 2.0);
        assert!(adjusted_degree(&[], DegreePolicy::Weighted).is_err());
    }

    #[test]
    fn score_tp_degree_toggles() {
        let c0 = CargoId(0);
        let trans: QtyMap = [(c0, 10.0)].into_iter().collect();
        let sat: QtyMap = [(c0, 10.0)].into_iter().collect();
        let degrees: BTreeMap<CargoId, f64> = [(c0, 2.0)].into_iter().collect();
        let leaves = [(c0, 1.0, 1.0)];
        let mut hp = hp_plain();
        hp.denominator_enabled = false;

        // toggles off: same as the basic score
        let s = score_tp(&sat, &trans, &degrees, &leaves, &hp, 1.0).unwrap();
        assert!((s - 1.0).abs() < 1e-12);

        hp.degree_affects_multiplier = true;
        let s = score_tp(&sat, &trans, &degrees, &leaves, &hp, 1.0).unwrap();
        assert!((s - 0.5).abs() < 1e-12);

        hp.degree_affects_multiplier = false;
        hp.degree_affects_exponent = true;
        let sat_half: QtyMap = [(c0, 5.0)].into_iter().collect();
        let s = score_tp(&sat_half, &trans, &degrees, &leaves, &hp, 1.0).unwrap();
        assert!((s - 0.25).abs() < 1e-12);
    }

    #[test]
    fn estimate_transhipment_study_fixture() {
        // request 1D:5 at TP3, raised from the Road_A side (VT3), with RC1
        // already considered: the warehouses sit two transfers away.
        let inst = parse_instance(STUDY).unwrap();
        let hp = hp_plain();
        let mut rng = derive(1, &[3]);
        let forest = Forest::build(&inst, &hp, &mut rng).unwrap();
        let stocks = Stocks::new(&inst);
        let considered: BTreeSet<VertexId> = [inst.find_vertex("RC1").unwrap()].into_iter().collect();
        let pair = estimate_transhipment(
            &inst,
            &forest,
            &stocks,
            &hp,
            &considered,
            inst.find_vt("VT3").unwrap(),
            inst.find_cargo("1D").unwrap(),
            5.0,
            inst.find_vertex("TP3").unwrap(),
            1,
            &BTreeSet::new(),
        );
        let wh1 = inst.find_vertex("WH1").unwrap();
        let wh2 = inst.find_vertex("WH2").unwrap();
        assert_eq!(pair.component_one[&wh1], ComponentOneEntry { degree: 2, satisfiable: 5.0, available: 20.0 });
        assert_eq!(pair.component_one[&wh2], ComponentOneEntry { degree: 2, satisfiable: 5.0, available: 20.0 });
        let tp1 = inst.find_vertex("TP1").unwrap();
        let tp2 = inst.find_vertex("TP2").unwrap();
        let e1 = &pair.component_two[&tp1];
        assert_eq!(e1.adjusted_degree, 2.0);
        assert_eq!(e1.satisfiable, 5.0);
        assert_eq!(e1.downstream[&2][&wh1], 20.0);
        let e2 = &pair.component_two[&tp2];
        assert_eq!(e2.adjusted_degree, 2.0);
        assert_eq!(e2.satisfiable, 5.0);
        assert_eq!(e2.downstream[&2][&wh2], 20.0);
    }

    #[test]
    fn estimate_prefers_single_degree_when_fathom_off() {
        // a port whose own segment already holds the goods returns only the
        // degree-1 PRV
        let inst = parse_instance(STUDY).unwrap();
        let hp = hp_plain();
        let mut rng = derive(1, &[4]);
        let forest = Forest::build(&inst, &hp, &mut rng).unwrap();
        let stocks = Stocks::new(&inst);
        let pair = estimate_transhipment(
            &inst,
            &forest,
            &stocks,
            &hp,
            &BTreeSet::new(),
            inst.find_vt("VT2").unwrap(),
            inst.find_cargo("1D").unwrap(),
            5.0,
            inst.find_vertex("TP1").unwrap(),
            1,
            &BTreeSet::new(),
        );
        let wh1 = inst.find_vertex("WH1").unwrap();
        assert_eq!(pair.component_one.len(), 1);
        assert_eq!(pair.component_one[&wh1].degree, 1);
        assert_eq!(pair.component_two.len(), 1);
    }

    #[test]
    fn split_preferences_study_road_a_needs_transhipment() {
        let inst = parse_instance(STUDY).unwrap();
        let hp = hp_plain();
        let mut rng = derive(1, &[5]);
        let mut forest = Forest::build(&inst, &hp, &mut rng).unwrap();
        let stocks = Stocks::new(&inst);
        let np1 = inst.find_vertex("NP1").unwrap();
        let prefs = split_preferences(&inst, &mut forest, &stocks, np1, &hp).unwrap();
        let c = |n: &str| inst.find_cargo(n).unwrap();
        // no warehouse on the segment: full delivery demand goes to ports
        assert_eq!(prefs.transhipment_code.get(&c("1D")), Some(&5.0));
        assert_eq!(prefs.transhipment_code.get(&c("2D")), Some(&6.0));
        // pickups are absorbed by RC1 directly
        assert!(prefs.transhipment_code.get(&c("1P")).is_none());
        assert!(prefs.scored.iter().any(|s| s.is_port));
    }

    #[test]
    fn split_preferences_full_demand_toggle() {
        let inst = parse_instance(STUDY).unwrap();
        let mut hp = hp_plain();
        hp.full_demand_for_variability = true;
        let mut rng = derive(1, &[6]);
        let mut forest = Forest::build(&inst, &hp, &mut rng).unwrap();
        let stocks = Stocks::new(&inst);
        let np3 = inst.find_vertex("NP3").unwrap();
        let prefs = split_preferences(&inst, &mut forest, &stocks, np3, &hp).unwrap();
        assert_eq!(prefs.transhipment_code, requirement_code(&inst, np3));
    }

    #[test]
    fn simultaneous_preferences_first_branch_full() {
        let inst = parse_instance(STUDY).unwrap();
        let hp = hp_plain();
        let mut rng = derive(1, &[7]);
        let mut forest = Forest::build(&inst, &hp, &mut rng).unwrap();
        let stocks = Stocks::new(&inst);
        let nm3 = inst.find_vertex("NM3").unwrap();
        let prefs = simultaneous_preferences(&inst, &mut forest, &stocks, nm3, &hp).unwrap();
        // NM3 needs both warehouse goods and a port for its pickups
        assert_eq!(prefs.len(), 1);
        assert!(prefs[0].needs_transhipment);
        let expected: f64 = prefs[0].twig_scores.iter().map(|(_, s)| s).sum();
        assert_eq!(prefs[0].score_sum, expected);
    }
}
