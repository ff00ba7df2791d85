//! Absolute rotation estimation over a pose subgraph: spanning-tree plus
//! Weiszfeld l1 initialization, tangent-space L1-IRLS, angular-bound edge
//! pruning, and the spectral global-optimality certificate.
//!
//! Pruning replaces a high-residual measurement with the relative rotation
//! implied by the current estimates, which zeroes its residual and thereby
//! removes its influence; the edge itself stays in the graph so connectivity
//! bookkeeping never changes. The spectral quantities (Fiedler value, maximal
//! degree) are always computed over the active edges only.

use crate::geom::{angular_distance, chordal_distance, relative_rotation, so3_exp, Rotation};
use crate::la::*;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RotAvgError {
    #[error("graph is disconnected or too small for spectral analysis")]
    DisconnectedGraph,
    #[error("edge references a vertex that is not in the graph")]
    UnknownVertex,
    #[error("gauge vertex is not in the graph")]
    MissingGauge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeStatus {
    Active,
    Replaced,
}

/// Relative rotation measurement between two frames: `meas ~ R_j R_i^T`.
#[derive(Debug, Clone)]
pub struct RotEdge {
    pub i: usize,
    pub j: usize,
    pub measurement: Rotation,
    pub status: EdgeStatus,
}

/// Pose graph restricted to rotations: vertex estimates plus relative
/// measurements, with one gauge vertex whose rotation the solvers never touch.
#[derive(Debug, Clone)]
pub struct RotGraph {
    vertices: BTreeMap<usize, Rotation>,
    edges: Vec<RotEdge>,
    gauge: usize,
}

impl RotGraph {
    pub fn new(gauge: usize, gauge_rotation: Rotation) -> Self {
        let mut vertices = BTreeMap::new();
        vertices.insert(gauge, gauge_rotation);
        RotGraph { vertices, edges: Vec::new(), gauge }
    }

    pub fn add_vertex(&mut self, id: usize) {
        self.vertices.entry(id).or_insert_with(Rotation::identity);
    }

    pub fn add_edge(&mut self, i: usize, j: usize, measurement: Rotation) -> Result<(), RotAvgError> {
        if !self.vertices.contains_key(&i) || !self.vertices.contains_key(&j) {
            return Err(RotAvgError::UnknownVertex);
        }
        self.edges.push(RotEdge { i, j, measurement, status: EdgeStatus::Active });
        Ok(())
    }

    pub fn gauge(&self) -> usize {
        self.gauge
    }

    pub fn vertex_ids(&self) -> Vec<usize> {
        self.vertices.keys().copied().collect()
    }

    pub fn rotation(&self, id: usize) -> Option<&Rotation> {
        self.vertices.get(&id)
    }

    pub fn rotations(&self) -> &BTreeMap<usize, Rotation> {
        &self.vertices
    }

    pub fn set_rotation(&mut self, id: usize, r: Rotation) -> Result<(), RotAvgError> {
        match self.vertices.get_mut(&id) {
            Some(slot) => {
                *slot = r;
                Ok(())
            }
            None => Err(RotAvgError::UnknownVertex),
        }
    }

    pub fn edges(&self) -> &[RotEdge] {
        &self.edges
    }

    pub fn active_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.status == EdgeStatus::Active).count()
    }

    /// Angular residual of an edge at the current estimates (Eq. of the
    /// pruning bound): the geodesic angle between the measurement-composed
    /// prediction and the estimate of vertex j.
    pub fn edge_residual(&self, e: &RotEdge) -> f64 {
        let r_i = &self.vertices[&e.i];
        let r_j = &self.vertices[&e.j];
        angular_distance(&e.measurement.compose(r_i), r_j)
    }

    /// l1 chordal objective over the active edges.
    pub fn objective(&self) -> f64 {
        self.edges
            .iter()
            .filter(|e| e.status == EdgeStatus::Active)
            .map(|e| chordal_distance(&relative_rotation(&self.vertices[&e.i], &self.vertices[&e.j]), &e.measurement))
            .sum()
    }

    fn solve_order(&self) -> Vec<usize> {
        self.vertices.keys().copied().filter(|&v| v != self.gauge).collect()
    }

    /// Deduplicated active vertex pairs.
    fn active_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.edges
            .iter()
            .filter(|e| e.status == EdgeStatus::Active)
            .map(|e| if e.i < e.j { (e.i, e.j) } else { (e.j, e.i) })
            .collect()
    }

    /// Vertices reachable from the gauge through active edges.
    fn active_component(&self) -> BTreeSet<usize> {
        let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (a, b) in self.active_pairs() {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.gauge];
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                if let Some(ns) = adj.get(&v) {
                    stack.extend(ns.iter().copied().filter(|n| !seen.contains(n)));
                }
            }
        }
        seen
    }
}

/// Record of one pruning round.
#[derive(Debug, Clone)]
pub struct PruneReport {
    pub iteration: usize,
    /// (i, j, angular residual at replacement time)
    pub replaced_edges: Vec<(usize, usize, f64)>,
    /// Effective threshold used by this round (capped Eq. 9 value).
    pub alpha_max: f64,
}

/// Per-IRLS-run diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct IrlsReport {
    pub iterations: usize,
    pub final_update: f64,
    pub converged: bool,
    pub objective: f64,
}

/// Result of the global-optimality check (strong-duality condition).
#[derive(Debug, Clone, Copy)]
pub struct Certificate {
    pub certified: bool,
    pub max_residual: f64,
    /// Uncapped spectral bound; infinite when no active edges remain.
    pub alpha_max: f64,
    pub all_constraints_removed: bool,
}

#[derive(Debug, Clone)]
pub struct RotAvgOutcome {
    pub prune_reports: Vec<PruneReport>,
    pub irls_reports: Vec<IrlsReport>,
    /// Pruning stopped early because replacements disconnected the active
    /// subgraph; remaining residuals were left as-is.
    pub pruning_stopped_disconnected: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct RotAvgParams {
    pub l1_max_iters: usize,
    pub irls_tol: f64,
    pub irls_max_iters: usize,
    /// Floor on IRLS residual norms when forming l1 weights `1/max(||r||, floor)`.
    pub weight_floor: f64,
    pub prune_rounds: usize,
    /// Practical cap on the pruning threshold (radians).
    pub alpha_cap: f64,
}

impl Default for RotAvgParams {
    fn default() -> Self {
        RotAvgParams {
            l1_max_iters: 5,
            irls_tol: 1e-6,
            irls_max_iters: 100,
            weight_floor: 1e-5,
            prune_rounds: 3,
            alpha_cap: 45.0 * core::f64::consts::PI / 180.0,
        }
    }
}

/// Second-smallest eigenvalue of the unweighted graph Laplacian over active
/// edges. Positive exactly when the active subgraph is connected.
pub fn fiedler_value(graph: &RotGraph) -> Result<f64, RotAvgError> {
    let ids = graph.vertex_ids();
    let n = ids.len();
    if n < 2 {
        return Err(RotAvgError::DisconnectedGraph);
    }
    let index: BTreeMap<usize, usize> = ids.iter().copied().enumerate().map(|(k, v)| (v, k)).collect();
    let mut lap = DMat::zeros(n, n);
    for (a, b) in graph.active_pairs() {
        let (a, b) = (index[&a], index[&b]);
        lap[(a, a)] += 1.0;
        lap[(b, b)] += 1.0;
        lap[(a, b)] -= 1.0;
        lap[(b, a)] -= 1.0;
    }
    let mut eigs: Vec<f64> = lap.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let lambda2 = eigs[1];
    if lambda2 < 1e-12 {
        return Err(RotAvgError::DisconnectedGraph);
    }
    Ok(lambda2)
}

fn max_active_degree(graph: &RotGraph) -> usize {
    let mut deg: BTreeMap<usize, usize> = BTreeMap::new();
    for (a, b) in graph.active_pairs() {
        *deg.entry(a).or_insert(0) += 1;
        *deg.entry(b).or_insert(0) += 1;
    }
    deg.values().copied().max().unwrap_or(0)
}

/// Theoretical angular residual bound `2 asin(sqrt(1/4 + l2/(2 d_max)) - 1/2)`
/// (uncapped). The pruning rounds cap this at `RotAvgParams::alpha_cap`.
pub fn alpha_max(graph: &RotGraph) -> Result<f64, RotAvgError> {
    let lambda2 = fiedler_value(graph)?;
    let d_max = max_active_degree(graph) as f64;
    Ok(alpha_max_from_spectrum(lambda2, d_max))
}

fn alpha_max_from_spectrum(lambda2: f64, d_max: f64) -> f64 {
    if d_max <= 0.0 {
        return 0.0;
    }
    let arg = (0.25 + lambda2 / (2.0 * d_max)).sqrt() - 0.5;
    2.0 * arg.clamp(-1.0, 1.0).asin()
}

/// Tangent vector of a rotation, defined on all of SO(3). Matches `so3_log`
/// away from pi and falls back to the axis extracted from `R + I` at the
/// antipode, where the ordinary formula loses the axis.
fn tangent(r: &Rotation) -> Vec3 {
    let theta = r.angle();
    let m = r.matrix();
    if theta < core::f64::consts::PI - 1e-6 {
        let v = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        if theta < 1e-10 {
            v * 0.5
        } else {
            v * (theta / (2.0 * theta.sin()))
        }
    } else {
        let q = m + Mat3::identity();
        let k = (0..3).max_by(|&a, &b| q[(a, a)].partial_cmp(&q[(b, b)]).unwrap()).unwrap();
        let axis = q.column(k).normalize();
        let sign = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).dot(&axis);
        if sign >= 0.0 {
            axis * theta
        } else {
            -axis * theta
        }
    }
}

/// Tangent discrepancy pulling vertex `v`'s estimate towards the target
/// implied by one incident edge: `target = exp(d) R_v`.
fn vertex_suggestion(graph: &RotGraph, e: &RotEdge, v: usize) -> Vec3 {
    let r_v = &graph.vertices[&v];
    let target = if e.j == v {
        e.measurement.compose(&graph.vertices[&e.i])
    } else {
        e.measurement.inverse().compose(&graph.vertices[&e.j])
    };
    tangent(&target.compose(&r_v.inverse()))
}

/// Spanning-tree chaining of measurements from the gauge, then at most
/// `l1_max_iters` Weiszfeld-style l1 averaging sweeps in the tangent space.
/// Returns the current iterate whether or not the sweeps converged.
pub fn l1ra_init(graph: &mut RotGraph, params: &RotAvgParams) -> Result<(), RotAvgError> {
    if !graph.vertices.contains_key(&graph.gauge) {
        return Err(RotAvgError::MissingGauge);
    }
    // Tree chaining uses every edge (replaced measurements are consistent by
    // construction) so the start point exists whenever the graph invariant
    // "connected over active + replaced" holds.
    let mut adj: BTreeMap<usize, Vec<(usize, Rotation)>> = BTreeMap::new();
    for e in &graph.edges {
        adj.entry(e.i).or_default().push((e.j, e.measurement));
        adj.entry(e.j).or_default().push((e.i, e.measurement.inverse()));
    }
    let mut visited = BTreeSet::new();
    let mut frontier = vec![graph.gauge];
    visited.insert(graph.gauge);
    while let Some(u) = frontier.pop() {
        let r_u = graph.vertices[&u];
        if let Some(ns) = adj.get(&u) {
            for (v, rel) in ns.clone() {
                if visited.insert(v) {
                    graph.vertices.insert(v, rel.compose(&r_u));
                    frontier.push(v);
                }
            }
        }
    }
    if visited.len() != graph.vertices.len() {
        return Err(RotAvgError::DisconnectedGraph);
    }

    // Weiszfeld sweeps over active edges.
    let order = graph.solve_order();
    for _ in 0..params.l1_max_iters {
        let mut max_update: f64 = 0.0;
        for &v in &order {
            let mut num = Vec3::zeros();
            let mut den = 0.0;
            for e in &graph.edges {
                if e.status != EdgeStatus::Active || (e.i != v && e.j != v) {
                    continue;
                }
                let d = vertex_suggestion(graph, e, v);
                let w = 1.0 / d.norm().max(params.weight_floor);
                num += d * w;
                den += w;
            }
            if den > 0.0 {
                let step = num / den;
                max_update = max_update.max(step.norm());
                let updated = so3_exp(&step).compose(&graph.vertices[&v]);
                graph.vertices.insert(v, updated);
            }
        }
        if max_update < params.irls_tol {
            break;
        }
    }
    Ok(())
}

/// Iteratively reweighted least squares in the tangent space with l1 weights
/// `1/max(||r||, floor)`, gauge vertex held fixed. A backtracking step keeps
/// the l1 chordal objective non-increasing.
pub fn irls_solve(graph: &mut RotGraph, params: &RotAvgParams) -> Result<IrlsReport, RotAvgError> {
    let component = graph.active_component();
    let free: Vec<usize> = graph
        .solve_order()
        .into_iter()
        .filter(|v| component.contains(v))
        .collect();
    let index: BTreeMap<usize, usize> = free.iter().copied().enumerate().map(|(k, v)| (v, k)).collect();
    let n = free.len();
    if n == 0 {
        return Ok(IrlsReport { iterations: 0, final_update: 0.0, converged: true, objective: graph.objective() });
    }

    let mut objective = graph.objective();
    let mut final_update = 0.0;
    let mut iterations = 0;
    let mut converged = false;

    for iter in 0..params.irls_max_iters {
        iterations = iter + 1;
        let mut h = DMat::zeros(3 * n, 3 * n);
        let mut g = DVec::zeros(3 * n);
        for e in &graph.edges {
            if e.status != EdgeStatus::Active {
                continue;
            }
            // deviation D = R_j^T meas R_i; residual r = log(D), |r| = angular residual
            let d = graph.vertices[&e.j].inverse().compose(&e.measurement).compose(&graph.vertices[&e.i]);
            let r = tangent(&d);
            let w = 1.0 / r.norm().max(params.weight_floor);
            let a = index.get(&e.i).copied();
            let b = index.get(&e.j).copied();
            if let Some(a) = a {
                for k in 0..3 {
                    h[(3 * a + k, 3 * a + k)] += w;
                    g[3 * a + k] += w * r[k];
                }
            }
            if let Some(b) = b {
                for k in 0..3 {
                    h[(3 * b + k, 3 * b + k)] += w;
                    g[3 * b + k] -= w * r[k];
                }
            }
            if let (Some(a), Some(b)) = (a, b) {
                for k in 0..3 {
                    h[(3 * a + k, 3 * b + k)] -= w;
                    h[(3 * b + k, 3 * a + k)] -= w;
                }
            }
        }
        let delta = match h.clone().cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => return Err(RotAvgError::DisconnectedGraph),
        };

        // Backtrack until the objective stops increasing.
        let saved: Vec<Rotation> = free.iter().map(|v| graph.vertices[v]).collect();
        let mut step = 1.0;
        let mut accepted = false;
        let mut applied_norm = 0.0;
        for _ in 0..24 {
            let mut max_norm: f64 = 0.0;
            for (k, &v) in free.iter().enumerate() {
                let dv = Vec3::new(delta[3 * k], delta[3 * k + 1], delta[3 * k + 2]) * step;
                max_norm = max_norm.max(dv.norm());
                graph.vertices.insert(v, saved[k].compose(&so3_exp(&dv)));
            }
            let new_obj = graph.objective();
            if new_obj <= objective + 1e-15 {
                objective = new_obj;
                applied_norm = max_norm;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            for (k, &v) in free.iter().enumerate() {
                graph.vertices.insert(v, saved[k]);
            }
            final_update = 0.0;
            converged = true;
            break;
        }
        final_update = applied_norm;
        if final_update < params.irls_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        converged = final_update <= 1e-3;
    }
    Ok(IrlsReport { iterations, final_update, converged, objective })
}

/// Replaces every active edge whose angular residual exceeds the effective
/// threshold `min(alpha_max, cap)` with the pseudo-optimal relative rotation
/// `R_j* R_i*^T`. Graph topology is unchanged.
pub fn prune_edges(graph: &mut RotGraph, params: &RotAvgParams) -> Result<PruneReport, RotAvgError> {
    let threshold = alpha_max(graph)?.min(params.alpha_cap);
    let mut replaced = Vec::new();
    for k in 0..graph.edges.len() {
        if graph.edges[k].status != EdgeStatus::Active {
            continue;
        }
        let alpha = graph.edge_residual(&graph.edges[k]);
        if alpha > threshold {
            let e = &graph.edges[k];
            let pseudo = relative_rotation(&graph.vertices[&e.i], &graph.vertices[&e.j]);
            let (i, j) = (e.i, e.j);
            graph.edges[k].measurement = pseudo;
            graph.edges[k].status = EdgeStatus::Replaced;
            replaced.push((i, j, alpha));
        }
    }
    Ok(PruneReport { iteration: 0, replaced_edges: replaced, alpha_max: threshold })
}

/// Full window solve: l1 initialization, then up to `prune_rounds` rounds of
/// IRLS followed by pruning, stopping early once a round replaces nothing.
pub fn rotation_averaging(graph: &mut RotGraph, params: &RotAvgParams) -> Result<RotAvgOutcome, RotAvgError> {
    l1ra_init(graph, params)?;
    let mut outcome = RotAvgOutcome {
        prune_reports: Vec::new(),
        irls_reports: Vec::new(),
        pruning_stopped_disconnected: false,
    };
    for round in 1..=params.prune_rounds {
        outcome.irls_reports.push(irls_solve(graph, params)?);
        let mut report = match prune_edges(graph, params) {
            Ok(r) => r,
            Err(RotAvgError::DisconnectedGraph) if round > 1 => {
                // Earlier replacements disconnected the active subgraph; the
                // spectral threshold is no longer defined, so stop pruning.
                outcome.pruning_stopped_disconnected = true;
                break;
            }
            Err(e) => return Err(e),
        };
        report.iteration = round;
        let empty = report.replaced_edges.is_empty();
        outcome.prune_reports.push(report);
        if empty {
            break;
        }
    }
    Ok(outcome)
}

/// Post-solve check of the strong-duality condition: every active-edge
/// residual within the *uncapped* spectral bound.
pub fn certify_global_optimality(graph: &RotGraph) -> Certificate {
    let active: Vec<&RotEdge> = graph.edges.iter().filter(|e| e.status == EdgeStatus::Active).collect();
    if active.is_empty() {
        return Certificate {
            certified: true,
            max_residual: 0.0,
            alpha_max: f64::INFINITY,
            all_constraints_removed: true,
        };
    }
    let max_residual = active.iter().map(|e| graph.edge_residual(e)).fold(0.0, f64::max);
    let bound = match fiedler_value(graph) {
        Ok(lambda2) => alpha_max_from_spectrum(lambda2, max_active_degree(graph) as f64),
        Err(_) => 0.0,
    };
    Certificate {
        certified: max_residual <= bound,
        max_residual,
        alpha_max: bound,
        all_constraints_removed: false,
    }
}
