//! Maximum-weight matching on general graphs.
//!
//! The exact solver is Edmonds' blossom algorithm in the primal-dual form of
//! Galil ("Efficient algorithms for finding maximum matching in graphs",
//! 1986), following the structure of van Rantwijk's reference implementation.
//! Weights are quantized to integers relative to the largest weight so that
//! all dual updates are exact; edges whose quantized weight is zero are never
//! selected by the exact solvers.
//!
//! Ties between optimal matchings: for graphs small enough for the brute-force
//! oracle the result is normalized to the lexicographically smallest ascending
//! edge-index list among optima. Larger graphs get the solver's own
//! (deterministic, fixed-pivot) choice.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Largest edge count accepted by `brute_force_matching`; also the size up to
/// which `max_weight_matching` canonicalizes ties.
pub const BRUTE_FORCE_MAX_EDGES: usize = 24;

const QUANT_SCALE: f64 = (1u64 << 40) as f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEdge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedGraph {
    pub node_count: usize,
    pub edges: Vec<WeightedEdge>,
}

impl WeightedGraph {
    pub fn new(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let g = WeightedGraph {
            node_count,
            edges: edges
                .into_iter()
                .map(|(u, v, w)| WeightedEdge { u, v, w })
                .collect(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (i, e) in self.edges.iter().enumerate() {
            if e.u >= self.node_count || e.v >= self.node_count {
                return Err(Error::Structure(format!(
                    "edge {i} ({}, {}) outside {} nodes",
                    e.u, e.v, self.node_count
                )));
            }
            if e.u == e.v {
                return Err(Error::Structure(format!("edge {i} is a self-loop")));
            }
            if !(e.w.is_finite() && e.w >= 0.0) {
                return Err(Error::Range(format!("edge {i} has weight {}", e.w)));
            }
            if !seen.insert(crate::mesh::edge_key(e.u, e.v)) {
                return Err(Error::Structure(format!(
                    "edge {i} duplicates pair ({}, {})",
                    e.u, e.v
                )));
            }
        }
        Ok(())
    }

    /// Integer weights used by the exact solvers.
    fn quantized(&self) -> Vec<i64> {
        let wmax = self.edges.iter().fold(0.0f64, |m, e| m.max(e.w));
        if !(wmax > 0.0) {
            return vec![0; self.edges.len()];
        }
        self.edges
            .iter()
            .map(|e| (e.w / wmax * QUANT_SCALE).round() as i64)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Matching {
    /// Selected edge indices, ascending.
    pub selected: Vec<usize>,
    pub total_weight: f64,
}

impl Matching {
    fn from_selected(g: &WeightedGraph, mut selected: Vec<usize>) -> Self {
        selected.sort_unstable();
        let total_weight = selected.iter().map(|&i| g.edges[i].w).sum();
        Matching {
            selected,
            total_weight,
        }
    }

    /// No node is covered twice and every index is in range.
    pub fn is_valid(&self, g: &WeightedGraph) -> bool {
        let mut used = vec![false; g.node_count];
        for &i in &self.selected {
            let Some(e) = g.edges.get(i) else {
                return false;
            };
            if used[e.u] || used[e.v] {
                return false;
            }
            used[e.u] = true;
            used[e.v] = true;
        }
        true
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Exact maximum-weight (not maximum-cardinality) matching.
pub fn max_weight_matching(g: &WeightedGraph) -> Matching {
    let q = g.quantized();
    let edges: Vec<(usize, usize, i64, usize)> = g
        .edges
        .iter()
        .zip(&q)
        .enumerate()
        .filter(|(_, (_, &w))| w > 0)
        .map(|(i, (e, &w))| (e.u, e.v, w, i))
        .collect();
    let selected = if g.edges.len() <= BRUTE_FORCE_MAX_EDGES {
        canonical_selection(g.node_count, &edges)
    } else {
        solve_indices(g.node_count, &edges)
    };
    Matching::from_selected(g, selected)
}

/// Runs the blossom solver on `(u, v, w, original_index)` edges and returns the
/// original indices of the selected edges.
fn solve_indices(node_count: usize, edges: &[(usize, usize, i64, usize)]) -> Vec<usize> {
    if edges.is_empty() {
        return Vec::new();
    }
    let plain: Vec<(usize, usize, i64)> = edges.iter().map(|&(u, v, w, _)| (u, v, w)).collect();
    let mate = Blossom::new(node_count, &plain).solve();
    let mut out = Vec::new();
    for (k, &(u, v, _, idx)) in edges.iter().enumerate() {
        let _ = k;
        if mate[u] == Some(v) && mate[v] == Some(u) {
            out.push(idx);
        }
    }
    out.sort_unstable();
    out
}

fn int_weight(edges: &[(usize, usize, i64, usize)], selected: &[usize]) -> i64 {
    selected
        .iter()
        .map(|&s| edges.iter().find(|e| e.3 == s).map_or(0, |e| e.2))
        .sum()
}

/// Lexicographically smallest optimal index list, built one edge at a time:
/// the next edge is the smallest index whose inclusion still admits a
/// completion (over larger indices) reaching the optimum.
fn canonical_selection(node_count: usize, edges: &[(usize, usize, i64, usize)]) -> Vec<usize> {
    let optimum = int_weight(edges, &solve_indices(node_count, edges));
    let mut remaining = optimum;
    let mut used = vec![false; node_count];
    let mut chosen = Vec::new();
    let mut last: Option<usize> = None;
    while remaining > 0 {
        let mut picked = false;
        for &(u, v, w, idx) in edges {
            if last.is_some_and(|l| idx <= l) || used[u] || used[v] {
                continue;
            }
            let rest: Vec<_> = edges
                .iter()
                .copied()
                .filter(|&(a, b, _, j)| {
                    j > idx && !used[a] && !used[b] && a != u && a != v && b != u && b != v
                })
                .collect();
            let best_rest = int_weight(&rest, &solve_indices(node_count, &rest));
            if w + best_rest == remaining {
                used[u] = true;
                used[v] = true;
                chosen.push(idx);
                remaining -= w;
                last = Some(idx);
                picked = true;
                break;
            }
        }
        if !picked {
            // Unreachable for a correct solver; keep the plain result.
            return solve_indices(node_count, edges);
        }
    }
    chosen
}

/// Repeatedly takes the heaviest edge with both endpoints free (ties by
/// ascending edge index).
pub fn greedy_matching(g: &WeightedGraph) -> Matching {
    let mut order: Vec<usize> = (0..g.edges.len()).collect();
    order.sort_by(|&a, &b| g.edges[b].w.total_cmp(&g.edges[a].w).then(a.cmp(&b)));
    let mut used = vec![false; g.node_count];
    let mut selected = Vec::new();
    for i in order {
        let e = g.edges[i];
        if !used[e.u] && !used[e.v] {
            used[e.u] = true;
            used[e.v] = true;
            selected.push(i);
        }
    }
    Matching::from_selected(g, selected)
}

/// Exhaustive search over all matchings; refuses more than
/// `BRUTE_FORCE_MAX_EDGES` edges. Uses the same integer weights and
/// tie-break as `max_weight_matching`.
pub fn brute_force_matching(g: &WeightedGraph) -> Result<Matching> {
    if g.edges.len() > BRUTE_FORCE_MAX_EDGES {
        return Err(Error::TooLarge(format!(
            "{} edges exceed the brute-force limit of {BRUTE_FORCE_MAX_EDGES}",
            g.edges.len()
        )));
    }
    let q = g.quantized();
    let mut best: (i64, Vec<usize>) = (0, Vec::new());
    let mut used = vec![false; g.node_count];
    let mut current = Vec::new();
    brute_rec(g, &q, 0, 0, &mut used, &mut current, &mut best);
    Ok(Matching::from_selected(g, best.1))
}

fn brute_rec(
    g: &WeightedGraph,
    q: &[i64],
    next: usize,
    weight: i64,
    used: &mut [bool],
    current: &mut Vec<usize>,
    best: &mut (i64, Vec<usize>),
) {
    if next == g.edges.len() {
        if weight > best.0 || (weight == best.0 && *current < best.1) {
            *best = (weight, current.clone());
        }
        return;
    }
    let e = g.edges[next];
    if q[next] > 0 && !used[e.u] && !used[e.v] {
        used[e.u] = true;
        used[e.v] = true;
        current.push(next);
        brute_rec(g, q, next + 1, weight + q[next], used, current, best);
        current.pop();
        used[e.u] = false;
        used[e.v] = false;
    }
    brute_rec(g, q, next + 1, weight, used, current, best);
}

/// Text edge list `u v w [selected]`, one edge per line, preceded by a
/// `nodes <n>` header.
pub fn write_edge_list(g: &WeightedGraph, m: Option<&Matching>) -> String {
    let mut out = format!("nodes {}\n", g.node_count);
    for (i, e) in g.edges.iter().enumerate() {
        let _ = write!(out, "{} {} {}", e.u, e.v, e.w);
        if let Some(m) = m {
            let sel = m.selected.binary_search(&i).is_ok();
            let _ = write!(out, " {}", u8::from(sel));
        }
        out.push('\n');
    }
    out
}

/// Parses the format written by `write_edge_list`; a fourth column, if
/// present, is returned as the selection.
pub fn parse_edge_list(text: &str) -> Result<(WeightedGraph, Option<Vec<usize>>)> {
    let mut node_count = None;
    let mut edges = Vec::new();
    let mut selected = Vec::new();
    let mut has_sel = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parts: Vec<&str> = content.split_whitespace().collect();
        let perr = |msg: String| Error::Parse { line, msg };
        if parts[0] == "nodes" {
            let n = parts
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| perr("bad nodes header".into()))?;
            node_count = Some(n);
            continue;
        }
        if parts.len() < 3 {
            return Err(perr("edge line needs `u v w`".into()));
        }
        let u: usize = parts[0]
            .parse()
            .map_err(|_| perr(format!("bad node `{}`", parts[0])))?;
        let v: usize = parts[1]
            .parse()
            .map_err(|_| perr(format!("bad node `{}`", parts[1])))?;
        let w: f64 = parts[2]
            .parse()
            .map_err(|_| perr(format!("bad weight `{}`", parts[2])))?;
        if let Some(s) = parts.get(3) {
            has_sel = true;
            if *s == "1" {
                selected.push(edges.len());
            }
        }
        edges.push((u, v, w));
    }
    let inferred = edges
        .iter()
        .map(|&(u, v, _)| u.max(v) + 1)
        .max()
        .unwrap_or(0);
    let g = WeightedGraph::new(node_count.unwrap_or(inferred), edges)?;
    Ok((g, has_sel.then_some(selected)))
}

const NONE: usize = usize::MAX;

/// Primal-dual blossom state. Vertices are `0..n`, blossoms `n..2n`.
/// Endpoint `p` of edge `k = p / 2` is `edges[k].0` for even `p` and
/// `edges[k].1` for odd `p`.
struct Blossom<'a> {
    n: usize,
    edges: &'a [(usize, usize, i64)],
    endpoint: Vec<usize>,
    neighbend: Vec<Vec<usize>>,
    mate: Vec<usize>,
    label: Vec<u8>,
    labelend: Vec<usize>,
    inblossom: Vec<usize>,
    blossomparent: Vec<usize>,
    blossomchilds: Vec<Vec<usize>>,
    blossombase: Vec<usize>,
    blossomendps: Vec<Vec<usize>>,
    bestedge: Vec<usize>,
    blossombestedges: Vec<Option<Vec<usize>>>,
    unusedblossoms: Vec<usize>,
    dualvar: Vec<i64>,
    allowedge: Vec<bool>,
    queue: Vec<usize>,
}

impl<'a> Blossom<'a> {
    fn new(n: usize, edges: &'a [(usize, usize, i64)]) -> Self {
        let maxweight = edges.iter().map(|e| e.2).max().unwrap_or(0).max(0);
        let mut endpoint = Vec::with_capacity(2 * edges.len());
        let mut neighbend = vec![Vec::new(); n];
        for (k, &(i, j, _)) in edges.iter().enumerate() {
            endpoint.push(i);
            endpoint.push(j);
            neighbend[i].push(2 * k + 1);
            neighbend[j].push(2 * k);
        }
        let mut dualvar = vec![maxweight; n];
        dualvar.extend(std::iter::repeat_n(0, n));
        Blossom {
            n,
            edges,
            endpoint,
            neighbend,
            mate: vec![NONE; n],
            label: vec![0; 2 * n],
            labelend: vec![NONE; 2 * n],
            inblossom: (0..n).collect(),
            blossomparent: vec![NONE; 2 * n],
            blossomchilds: vec![Vec::new(); 2 * n],
            blossombase: (0..n).chain(std::iter::repeat_n(NONE, n)).collect(),
            blossomendps: vec![Vec::new(); 2 * n],
            bestedge: vec![NONE; 2 * n],
            blossombestedges: vec![None; 2 * n],
            unusedblossoms: (n..2 * n).collect(),
            dualvar,
            allowedge: vec![false; edges.len()],
            queue: Vec::new(),
        }
    }

    fn slack(&self, k: usize) -> i64 {
        let (i, j, w) = self.edges[k];
        self.dualvar[i] + self.dualvar[j] - 2 * w
    }

    fn leaves(&self, b: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![b];
        while let Some(t) = stack.pop() {
            if t < self.n {
                out.push(t);
            } else {
                for &c in self.blossomchilds[t].iter().rev() {
                    stack.push(c);
                }
            }
        }
        out
    }

    fn assign_label(&mut self, w: usize, t: u8, p: usize) {
        let mut w = w;
        let mut t = t;
        let mut p = p;
        loop {
            let b = self.inblossom[w];
            self.label[w] = t;
            self.label[b] = t;
            self.labelend[w] = p;
            self.labelend[b] = p;
            self.bestedge[w] = NONE;
            self.bestedge[b] = NONE;
            if t == 1 {
                let leaves = self.leaves(b);
                self.queue.extend(leaves);
                return;
            }
            let base = self.blossombase[b];
            let mb = self.mate[base];
            w = self.endpoint[mb];
            t = 1;
            p = mb ^ 1;
        }
    }

    fn scan_blossom(&mut self, v: usize, w: usize) -> usize {
        let mut path = Vec::new();
        let mut base = NONE;
        let (mut v, mut w) = (v, w);
        while v != NONE || w != NONE {
            let mut b = self.inblossom[v];
            if self.label[b] & 4 != 0 {
                base = self.blossombase[b];
                break;
            }
            path.push(b);
            self.label[b] = 5;
            if self.labelend[b] == NONE {
                v = NONE;
            } else {
                v = self.endpoint[self.labelend[b]];
                b = self.inblossom[v];
                v = self.endpoint[self.labelend[b]];
            }
            if w != NONE {
                std::mem::swap(&mut v, &mut w);
            }
        }
        for b in path {
            self.label[b] = 1;
        }
        base
    }

    fn add_blossom(&mut self, base: usize, k: usize) {
        let (mut v, mut w, _) = self.edges[k];
        let bb = self.inblossom[base];
        let mut bv = self.inblossom[v];
        let mut bw = self.inblossom[w];
        let b = self.unusedblossoms.pop().expect("blossom slots exhausted");
        self.blossombase[b] = base;
        self.blossomparent[b] = NONE;
        self.blossomparent[bb] = b;
        let mut path = Vec::new();
        let mut endps = Vec::new();
        while bv != bb {
            self.blossomparent[bv] = b;
            path.push(bv);
            endps.push(self.labelend[bv]);
            v = self.endpoint[self.labelend[bv]];
            bv = self.inblossom[v];
        }
        path.push(bb);
        path.reverse();
        endps.reverse();
        endps.push(2 * k);
        while bw != bb {
            self.blossomparent[bw] = b;
            path.push(bw);
            endps.push(self.labelend[bw] ^ 1);
            w = self.endpoint[self.labelend[bw]];
            bw = self.inblossom[w];
        }
        self.label[b] = 1;
        self.labelend[b] = self.labelend[bb];
        self.dualvar[b] = 0;
        self.blossomchilds[b] = path.clone();
        self.blossomendps[b] = endps;
        for leaf in self.leaves(b) {
            if self.label[self.inblossom[leaf]] == 2 {
                self.queue.push(leaf);
            }
            self.inblossom[leaf] = b;
        }
        let mut bestedgeto = vec![NONE; 2 * self.n];
        for &sub in &path {
            let nblists: Vec<Vec<usize>> = match self.blossombestedges[sub].take() {
                Some(list) => vec![list],
                None => self
                    .leaves(sub)
                    .into_iter()
                    .map(|leaf| self.neighbend[leaf].iter().map(|p| p / 2).collect())
                    .collect(),
            };
            for nblist in nblists {
                for kk in nblist {
                    let (mut i, mut j, _) = self.edges[kk];
                    if self.inblossom[j] == b {
                        std::mem::swap(&mut i, &mut j);
                    }
                    let _ = i;
                    let bj = self.inblossom[j];
                    if bj != b
                        && self.label[bj] == 1
                        && (bestedgeto[bj] == NONE || self.slack(kk) < self.slack(bestedgeto[bj]))
                    {
                        bestedgeto[bj] = kk;
                    }
                }
            }
            self.bestedge[sub] = NONE;
        }
        let list: Vec<usize> = bestedgeto.into_iter().filter(|&k| k != NONE).collect();
        let mut best = NONE;
        for &kk in &list {
            if best == NONE || self.slack(kk) < self.slack(best) {
                best = kk;
            }
        }
        self.blossombestedges[b] = Some(list);
        self.bestedge[b] = best;
    }

    fn expand_blossom(&mut self, b: usize, endstage: bool) {
        let childs = self.blossomchilds[b].clone();
        for &s in &childs {
            self.blossomparent[s] = NONE;
            if s < self.n {
                self.inblossom[s] = s;
            } else if endstage && self.dualvar[s] == 0 {
                self.expand_blossom(s, endstage);
            } else {
                for leaf in self.leaves(s) {
                    self.inblossom[leaf] = s;
                }
            }
        }
        if !endstage && self.label[b] == 2 {
            let len = childs.len() as isize;
            let at = |j: isize| -> usize { childs[j.rem_euclid(len) as usize] };
            let endps = self.blossomendps[b].clone();
            let endp_at = |j: isize| -> usize { endps[j.rem_euclid(len) as usize] };
            let entrychild = self.inblossom[self.endpoint[self.labelend[b] ^ 1]];
            let mut j = childs.iter().position(|&c| c == entrychild).unwrap() as isize;
            let (jstep, endptrick): (isize, usize);
            if j & 1 != 0 {
                j -= len;
                jstep = 1;
                endptrick = 0;
            } else {
                jstep = -1;
                endptrick = 1;
            }
            let mut p = self.labelend[b];
            while j != 0 {
                self.label[self.endpoint[p ^ 1]] = 0;
                let q = endp_at(j - endptrick as isize) ^ endptrick ^ 1;
                self.label[self.endpoint[q]] = 0;
                self.assign_label(self.endpoint[p ^ 1], 2, p);
                self.allowedge[endp_at(j - endptrick as isize) / 2] = true;
                j += jstep;
                p = endp_at(j - endptrick as isize) ^ endptrick;
                self.allowedge[p / 2] = true;
                j += jstep;
            }
            let bv = at(j);
            let ep = self.endpoint[p ^ 1];
            self.label[ep] = 2;
            self.label[bv] = 2;
            self.labelend[ep] = p;
            self.labelend[bv] = p;
            self.bestedge[bv] = NONE;
            j += jstep;
            while at(j) != entrychild {
                let bv = at(j);
                if self.label[bv] == 1 {
                    j += jstep;
                    continue;
                }
                let leaves = self.leaves(bv);
                let labelled = leaves.iter().copied().find(|&v| self.label[v] != 0);
                if let Some(v) = labelled {
                    self.label[v] = 0;
                    let m = self.mate[self.blossombase[bv]];
                    self.label[self.endpoint[m]] = 0;
                    let le = self.labelend[v];
                    self.assign_label(v, 2, le);
                }
                j += jstep;
            }
        }
        self.label[b] = 0;
        self.labelend[b] = NONE;
        self.blossomchilds[b].clear();
        self.blossomendps[b].clear();
        self.blossombase[b] = NONE;
        self.blossombestedges[b] = None;
        self.bestedge[b] = NONE;
        self.unusedblossoms.push(b);
    }

    fn augment_blossom(&mut self, b: usize, v: usize) {
        let mut t = v;
        while self.blossomparent[t] != b {
            t = self.blossomparent[t];
        }
        if t >= self.n {
            self.augment_blossom(t, v);
        }
        let len = self.blossomchilds[b].len() as isize;
        let i = self.blossomchilds[b].iter().position(|&c| c == t).unwrap();
        let mut j = i as isize;
        let (jstep, endptrick): (isize, usize);
        if i & 1 != 0 {
            j -= len;
            jstep = 1;
            endptrick = 0;
        } else {
            jstep = -1;
            endptrick = 1;
        }
        while j != 0 {
            j += jstep;
            let t = self.blossomchilds[b][j.rem_euclid(len) as usize];
            let p =
                self.blossomendps[b][(j - endptrick as isize).rem_euclid(len) as usize] ^ endptrick;
            if t >= self.n {
                self.augment_blossom(t, self.endpoint[p]);
            }
            j += jstep;
            let t = self.blossomchilds[b][j.rem_euclid(len) as usize];
            if t >= self.n {
                self.augment_blossom(t, self.endpoint[p ^ 1]);
            }
            self.mate[self.endpoint[p]] = p ^ 1;
            self.mate[self.endpoint[p ^ 1]] = p;
        }
        self.blossomchilds[b].rotate_left(i);
        self.blossomendps[b].rotate_left(i);
        self.blossombase[b] = self.blossombase[self.blossomchilds[b][0]];
        debug_assert_eq!(self.blossombase[b], v);
    }

    fn augment_matching(&mut self, k: usize) {
        let (v, w, _) = self.edges[k];
        for (s0, p0) in [(v, 2 * k + 1), (w, 2 * k)] {
            let mut s = s0;
            let mut p = p0;
            loop {
                let bs = self.inblossom[s];
                if bs >= self.n {
                    self.augment_blossom(bs, s);
                }
                self.mate[s] = p;
                if self.labelend[bs] == NONE {
                    break;
                }
                let t = self.endpoint[self.labelend[bs]];
                let bt = self.inblossom[t];
                s = self.endpoint[self.labelend[bt]];
                let j = self.endpoint[self.labelend[bt] ^ 1];
                if bt >= self.n {
                    self.augment_blossom(bt, j);
                }
                self.mate[j] = self.labelend[bt];
                p = self.labelend[bt] ^ 1;
            }
        }
    }

    fn solve(mut self) -> Vec<Option<usize>> {
        let n = self.n;
        for _stage in 0..n {
            self.label.iter_mut().for_each(|l| *l = 0);
            self.bestedge.iter_mut().for_each(|e| *e = NONE);
            for b in n..2 * n {
                self.blossombestedges[b] = None;
            }
            self.allowedge.iter_mut().for_each(|a| *a = false);
            self.queue.clear();
            for v in 0..n {
                if self.mate[v] == NONE && self.label[self.inblossom[v]] == 0 {
                    self.assign_label(v, 1, NONE);
                }
            }
            let mut augmented = false;
            loop {
                while let Some(v) = self.queue.pop() {
                    if augmented {
                        break;
                    }
                    for idx in 0..self.neighbend[v].len() {
                        let p = self.neighbend[v][idx];
                        let k = p / 2;
                        let w = self.endpoint[p];
                        if self.inblossom[v] == self.inblossom[w] {
                            continue;
                        }
                        let mut kslack = 0;
                        if !self.allowedge[k] {
                            kslack = self.slack(k);
                            if kslack <= 0 {
                                self.allowedge[k] = true;
                            }
                        }
                        if self.allowedge[k] {
                            if self.label[self.inblossom[w]] == 0 {
                                self.assign_label(w, 2, p ^ 1);
                            } else if self.label[self.inblossom[w]] == 1 {
                                let base = self.scan_blossom(v, w);
                                if base != NONE {
                                    self.add_blossom(base, k);
                                } else {
                                    self.augment_matching(k);
                                    augmented = true;
                                    break;
                                }
                            } else if self.label[w] == 0 {
                                self.label[w] = 2;
                                self.labelend[w] = p ^ 1;
                            }
                        } else if self.label[self.inblossom[w]] == 1 {
                            let b = self.inblossom[v];
                            if self.bestedge[b] == NONE || kslack < self.slack(self.bestedge[b]) {
                                self.bestedge[b] = k;
                            }
                        } else if self.label[w] == 0
                            && (self.bestedge[w] == NONE || kslack < self.slack(self.bestedge[w]))
                        {
                            self.bestedge[w] = k;
                        }
                    }
                }
                if augmented {
                    break;
                }

                // Dual adjustment.
                let mut deltatype = 1;
                let mut delta = *self.dualvar[..n].iter().min().unwrap();
                let mut deltaedge = NONE;
                let mut deltablossom = NONE;
                for v in 0..n {
                    if self.label[self.inblossom[v]] == 0 && self.bestedge[v] != NONE {
                        let d = self.slack(self.bestedge[v]);
                        if d < delta {
                            delta = d;
                            deltatype = 2;
                            deltaedge = self.bestedge[v];
                        }
                    }
                }
                for b in 0..2 * n {
                    if self.blossomparent[b] == NONE
                        && self.label[b] == 1
                        && self.bestedge[b] != NONE
                    {
                        let kslack = self.slack(self.bestedge[b]);
                        debug_assert_eq!(kslack % 2, 0);
                        let d = kslack / 2;
                        if d < delta {
                            delta = d;
                            deltatype = 3;
                            deltaedge = self.bestedge[b];
                        }
                    }
                }
                for b in n..2 * n {
                    if self.blossombase[b] != NONE
                        && self.blossomparent[b] == NONE
                        && self.label[b] == 2
                        && self.dualvar[b] < delta
                    {
                        delta = self.dualvar[b];
                        deltatype = 4;
                        deltablossom = b;
                    }
                }
                for v in 0..n {
                    match self.label[self.inblossom[v]] {
                        1 => self.dualvar[v] -= delta,
                        2 => self.dualvar[v] += delta,
                        _ => {}
                    }
                }
                for b in n..2 * n {
                    if self.blossombase[b] != NONE && self.blossomparent[b] == NONE {
                        match self.label[b] {
                            1 => self.dualvar[b] += delta,
                            2 => self.dualvar[b] -= delta,
                            _ => {}
                        }
                    }
                }
                match deltatype {
                    1 => break,
                    2 => {
                        self.allowedge[deltaedge] = true;
                        let (mut i, j, _) = self.edges[deltaedge];
                        if self.label[self.inblossom[i]] == 0 {
                            i = j;
                        }
                        self.queue.push(i);
                    }
                    3 => {
                        self.allowedge[deltaedge] = true;
                        let (i, _, _) = self.edges[deltaedge];
                        self.queue.push(i);
                    }
                    _ => self.expand_blossom(deltablossom, false),
                }
            }
            if !augmented {
                break;
            }
            for b in n..2 * n {
                if self.blossomparent[b] == NONE
                    && self.blossombase[b] != NONE
                    && self.label[b] == 1
                    && self.dualvar[b] == 0
                {
                    self.expand_blossom(b, true);
                }
            }
        }
        (0..n)
            .map(|v| (self.mate[v] != NONE).then(|| self.endpoint[self.mate[v]]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> WeightedGraph {
        WeightedGraph::new(n, edges.iter().copied()).unwrap()
    }

    #[test]
    fn path_of_two() {
        let g = graph(3, &[(0, 1, 2.0), (1, 2, 3.0)]);
        let m = max_weight_matching(&g);
        assert_eq!(m.selected, vec![1]);
        assert_eq!(m.total_weight, 3.0);
        assert_eq!(brute_force_matching(&g).unwrap(), m);
    }

    #[test]
    fn triangle_tie_breaks_to_smallest_index() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        let m = max_weight_matching(&g);
        assert_eq!(m.selected, vec![0]);
        assert_eq!(brute_force_matching(&g).unwrap().selected, vec![0]);
    }

    #[test]
    fn path_of_three_beats_greedy() {
        let g = graph(4, &[(0, 1, 1.0), (1, 2, 1.5), (2, 3, 1.0)]);
        let m = max_weight_matching(&g);
        assert_eq!(m.selected, vec![0, 2]);
        assert_eq!(m.total_weight, 2.0);
        let gr = greedy_matching(&g);
        assert_eq!(gr.selected, vec![1]);
        assert_eq!(gr.total_weight, 1.5);
    }

    #[test]
    fn greedy_examples() {
        let g = graph(2, &[(0, 1, 0.3)]);
        assert_eq!(greedy_matching(&g).selected, vec![0]);
        let star = graph(4, &[(0, 1, 0.8), (0, 2, 0.9), (0, 3, 0.7)]);
        assert_eq!(greedy_matching(&star).selected, vec![1]);
    }

    #[test]
    fn empty_and_zero_weight() {
        let g = graph(0, &[]);
        assert!(max_weight_matching(&g).is_empty());
        assert_eq!(brute_force_matching(&g).unwrap().total_weight, 0.0);
        let z = graph(2, &[(0, 1, 0.0)]);
        assert!(max_weight_matching(&z).is_empty());
        assert!(brute_force_matching(&z).unwrap().is_empty());
    }

    #[test]
    fn k4_by_enumeration() {
        // Weights 1..6 on the six edges of K4.
        let e = [
            (0, 1, 1.0),
            (0, 2, 2.0),
            (0, 3, 3.0),
            (1, 2, 4.0),
            (1, 3, 5.0),
            (2, 3, 6.0),
        ];
        let g = graph(4, &e);
        // Three perfect matchings: {01,23}=7, {02,13}=7, {03,12}=7, all ties.
        let m = max_weight_matching(&g);
        assert_eq!(m.total_weight, 7.0);
        assert_eq!(m.selected, vec![0, 5]);
        assert_eq!(brute_force_matching(&g).unwrap(), m);
    }

    #[test]
    fn brute_force_refuses_large() {
        let edges: Vec<_> = (0..25).map(|i| (i, i + 1, 1.0)).collect();
        let g = graph(26, &edges);
        assert!(matches!(brute_force_matching(&g), Err(Error::TooLarge(_))));
    }

    #[test]
    fn blossom_needed() {
        // Odd cycle with a pendant: optimum requires shrinking the 5-cycle.
        let g = graph(
            6,
            &[
                (0, 1, 0.9),
                (1, 2, 0.9),
                (2, 3, 0.9),
                (3, 4, 0.9),
                (4, 0, 0.9),
                (4, 5, 1.0),
            ],
        );
        let bf = brute_force_matching(&g).unwrap();
        let m = max_weight_matching(&g);
        assert_eq!(m, bf);
        assert!((m.total_weight - 2.8).abs() < 1e-12);
    }

    #[test]
    fn large_path_uses_solver_result() {
        let n = 41;
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        let g = graph(n, &edges);
        let m = max_weight_matching(&g);
        assert!(m.is_valid(&g));
        assert_eq!(m.len(), 20);
    }

    #[test]
    fn invalid_graphs() {
        assert!(WeightedGraph::new(2, [(0, 0, 1.0)]).is_err());
        assert!(WeightedGraph::new(2, [(0, 1, -1.0)]).is_err());
        assert!(WeightedGraph::new(2, [(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(WeightedGraph::new(2, [(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = graph(4, &[(0, 1, 0.25), (1, 2, 1.0 / 3.0), (2, 3, 0.5)]);
        let m = max_weight_matching(&g);
        let text = write_edge_list(&g, Some(&m));
        assert!(text.contains("0 1 0.25 1"));
        let (back, sel) = parse_edge_list(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(sel.unwrap(), m.selected);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_graph(max_nodes: usize, max_edges: usize) -> impl Strategy<Value = WeightedGraph> {
            (2..=max_nodes).prop_flat_map(move |n| {
                let pairs: Vec<(usize, usize)> = (0..n)
                    .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
                    .collect();
                let cap = pairs.len().min(max_edges);
                (
                    Just(n),
                    proptest::sample::subsequence(pairs, 0..=cap).prop_shuffle(),
                    proptest::collection::vec(0.0f64..1.0, cap),
                )
                    .prop_map(|(n, pairs, ws)| {
                        let edges = pairs.into_iter().zip(ws).map(|((a, b), w)| (a, b, w));
                        WeightedGraph::new(n, edges).unwrap()
                    })
            })
        }

        fn arb_tied_graph() -> impl Strategy<Value = WeightedGraph> {
            arb_graph(8, 16).prop_flat_map(|g| {
                let m = g.edges.len();
                proptest::collection::vec(1u8..4, m).prop_map(move |levels| {
                    let mut g = g.clone();
                    for (e, l) in g.edges.iter_mut().zip(levels) {
                        e.w = f64::from(l) * 0.25;
                    }
                    g
                })
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(300))]

            #[test]
            fn matches_brute_force(g in arb_graph(10, 24)) {
                let m = max_weight_matching(&g);
                let bf = brute_force_matching(&g).unwrap();
                prop_assert!(m.is_valid(&g));
                prop_assert_eq!(&m, &bf);
            }

            #[test]
            fn matches_brute_force_with_ties(g in arb_tied_graph()) {
                prop_assert_eq!(max_weight_matching(&g), brute_force_matching(&g).unwrap());
            }

            #[test]
            fn global_dominates_greedy(g in arb_graph(30, 80)) {
                let m = max_weight_matching(&g);
                let gr = greedy_matching(&g);
                prop_assert!(m.is_valid(&g) && gr.is_valid(&g));
                prop_assert!(m.total_weight >= gr.total_weight - 1e-9);
            }

            #[test]
            fn scale_invariance(g in arb_graph(10, 24), e in -3i32..4) {
                let c = 2f64.powi(e);
                let mut scaled = g.clone();
                for edge in &mut scaled.edges {
                    edge.w *= c;
                }
                prop_assert_eq!(max_weight_matching(&g).selected, max_weight_matching(&scaled).selected);
            }
        }
    }
}
