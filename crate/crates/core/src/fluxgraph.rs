//! Intercell flux graph, strongly connected components and the topological
//! ordering of the transport solve.
//!
//! An edge `i -> j` means the residual of cell `j` depends on the state of
//! cell `i`, so `i` must be solved first.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FluxGraph {
    succ: Vec<Vec<usize>>,
}

impl FluxGraph {
    pub fn new(n: usize) -> Self {
        FluxGraph {
            succ: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = FluxGraph::new(n);
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn add_edge(&mut self, from: usize, to: usize) {
        let s = &mut self.succ[from];
        if let Err(pos) = s.binary_search(&to) {
            s.insert(pos, to);
        }
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.succ[from].binary_search(&to).is_ok()
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.succ[i]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&j| (i, j)))
    }

    pub fn num_edges(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    /// Adds every edge of `other`.
    pub fn union_with(&mut self, other: &FluxGraph) {
        for (a, b) in other.edges() {
            self.add_edge(a, b);
        }
    }

    /// Predecessor lists.
    pub fn reversed(&self) -> Vec<Vec<usize>> {
        let mut pred = vec![Vec::new(); self.len()];
        for (a, b) in self.edges() {
            pred[b].push(a);
        }
        pred
    }
}

/// Strongly connected components by Tarjan's algorithm with an explicit
/// stack. Components come out in reverse topological order.
pub fn tarjan_scc(graph: &FluxGraph) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = graph.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut next = 0;
    let mut out = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos == 0 {
                index[v] = next;
                low[v] = next;
                next += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            let succ = graph.successors(v);
            if *pos < succ.len() {
                let w = succ[*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                out.push(comp);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ordering {
    /// Components in solve order; cells inside a component in ascending index.
    pub components: Vec<Vec<usize>>,
    pub component_of: Vec<usize>,
    /// Old cell index to position in the permuted order.
    pub permutation: Vec<usize>,
    /// Position in the permuted order to old cell index.
    pub order: Vec<usize>,
    pub is_cycle: Vec<bool>,
}

impl Ordering {
    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn cycle_count(&self) -> usize {
        self.is_cycle.iter().filter(|&&c| c).count()
    }

    pub fn max_cycle_size(&self) -> usize {
        self.cycles().map(Vec::len).max().unwrap_or(0)
    }

    pub fn mean_cycle_size(&self) -> f64 {
        let n = self.cycle_count();
        if n == 0 {
            0.0
        } else {
            self.cycles().map(Vec::len).sum::<usize>() as f64 / n as f64
        }
    }

    fn cycles(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.components
            .iter()
            .zip(&self.is_cycle)
            .filter(|(_, &c)| c)
            .map(|(c, _)| c)
    }

    /// True if every edge between different components points forward.
    pub fn is_topological(&self, graph: &FluxGraph) -> bool {
        graph
            .edges()
            .all(|(a, b)| self.component_of[a] <= self.component_of[b])
    }

    /// Text histogram of component sizes: `size count` per line.
    pub fn histogram(&self) -> String {
        let mut counts = std::collections::BTreeMap::new();
        for c in &self.components {
            *counts.entry(c.len()).or_insert(0usize) += 1;
        }
        let mut s = String::from("# component_size count\n");
        for (size, n) in counts {
            let _ = writeln!(s, "{size} {n}");
        }
        s
    }
}

/// Condenses the strongly connected components and sorts them
/// topologically; ready components are taken by smallest cell index.
pub fn condense_and_sort(graph: &FluxGraph) -> Ordering {
    let n = graph.len();
    let sccs = tarjan_scc(graph);
    let mut comp_id = vec![0; n];
    for (c, cells) in sccs.iter().enumerate() {
        for &v in cells {
            comp_id[v] = c;
        }
    }
    let nc = sccs.len();
    let mut indeg = vec![0usize; nc];
    let mut dag: Vec<Vec<usize>> = vec![Vec::new(); nc];
    for (a, b) in graph.edges() {
        let (ca, cb) = (comp_id[a], comp_id[b]);
        if ca != cb {
            dag[ca].push(cb);
        }
    }
    for d in &mut dag {
        d.sort_unstable();
        d.dedup();
        for &cb in d.iter() {
            indeg[cb] += 1;
        }
    }
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..nc)
        .filter(|&c| indeg[c] == 0)
        .map(|c| Reverse((sccs[c][0], c)))
        .collect();
    let mut components = Vec::with_capacity(nc);
    let mut is_cycle = Vec::with_capacity(nc);
    let mut component_of = vec![0; n];
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((_, c))) = heap.pop() {
        let k = components.len();
        let cells = &sccs[c];
        for &v in cells {
            component_of[v] = k;
            order.push(v);
        }
        is_cycle.push(cells.len() > 1 || graph.has_edge(cells[0], cells[0]));
        components.push(cells.clone());
        for &cb in &dag[c] {
            indeg[cb] -= 1;
            if indeg[cb] == 0 {
                heap.push(Reverse((sccs[cb][0], cb)));
            }
        }
    }
    let mut permutation = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        permutation[old] = new;
    }
    Ordering {
        components,
        component_of,
        permutation,
        order,
        is_cycle,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveUnit {
    pub cells: Vec<usize>,
    /// Range of component indices covered by the unit.
    pub components: std::ops::Range<usize>,
    /// True if the unit contains a multi-cell or self-coupled component.
    pub has_cycle: bool,
}

/// Groups consecutive components into units of at most `n_b` cells. A
/// component is never split; one larger than `n_b` forms its own unit.
pub fn block_partition(ordering: &Ordering, n_b: usize) -> Vec<SolveUnit> {
    assert!(n_b >= 1, "block size must be at least 1");
    let mut units = Vec::new();
    let mut start = 0;
    let mut cells: Vec<usize> = Vec::new();
    let mut has_cycle = false;
    for (k, comp) in ordering.components.iter().enumerate() {
        if !cells.is_empty() && cells.len() + comp.len() > n_b {
            units.push(SolveUnit {
                cells: std::mem::take(&mut cells),
                components: start..k,
                has_cycle,
            });
            start = k;
            has_cycle = false;
        }
        cells.extend_from_slice(comp);
        has_cycle |= ordering.is_cycle[k];
    }
    if !cells.is_empty() {
        units.push(SolveUnit {
            cells,
            components: start..ordering.components.len(),
            has_cycle,
        });
    }
    units
}

/// Nonzero pattern of a matrix with square blocks of size `block` on each
/// cell, in permuted cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    pub dim: usize,
    pub block: usize,
    /// Sorted, deduplicated `(row, col)` entries.
    pub entries: Vec<(usize, usize)>,
}

impl SparsityPattern {
    /// Builds the pattern from cell couplings `(row_cell, col_cell)` given in
    /// permuted indices.
    pub fn from_cell_couplings(
        n_cells: usize,
        block: usize,
        couplings: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut entries = Vec::new();
        for (r, c) in couplings {
            for a in 0..block {
                for b in 0..block {
                    entries.push((r * block + a, c * block + b));
                }
            }
        }
        entries.sort_unstable();
        entries.dedup();
        SparsityPattern {
            dim: n_cells * block,
            block,
            entries,
        }
    }

    /// Entries lying above the diagonal blocks of the given component ranges
    /// (in permuted cell positions); empty means block-lower-triangular.
    pub fn entries_above_blocks(&self, ordering: &Ordering) -> Vec<(usize, usize)> {
        let comp_of_pos = |pos: usize| ordering.component_of[ordering.order[pos / self.block]];
        self.entries
            .iter()
            .copied()
            .filter(|&(r, c)| comp_of_pos(c) > comp_of_pos(r))
            .collect()
    }

    /// Binary PGM image, nonzeros black; large matrices are downsampled.
    pub fn to_pgm(&self, max_pixels: usize) -> Vec<u8> {
        let side = self.dim.clamp(1, max_pixels.max(1));
        let mut img = vec![255u8; side * side];
        for &(r, c) in &self.entries {
            let (y, x) = (r * side / self.dim, c * side / self.dim);
            img[y * side + x] = 0;
        }
        let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
        out.extend(img);
        out
    }
}

/// Pattern of the permuted transport Jacobian: diagonal blocks plus one block
/// per graph edge (the downstream row depends on the upstream column).
pub fn permuted_sparsity(ordering: &Ordering, graph: &FluxGraph, n_dof: usize) -> SparsityPattern {
    let p = &ordering.permutation;
    let n = graph.len();
    let couplings = (0..n)
        .map(|i| (p[i], p[i]))
        .chain(graph.edges().map(|(a, b)| (p[b], p[a])));
    SparsityPattern::from_cell_couplings(n, n_dof, couplings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_is_all_singletons() {
        let g = FluxGraph::from_edges(10, (0..9).map(|i| (i, i + 1)));
        let o = condense_and_sort(&g);
        assert_eq!(o.num_components(), 10);
        assert_eq!(o.cycle_count(), 0);
        assert_eq!(o.order, (0..10).collect::<Vec<_>>());
        assert!(o.is_topological(&g));
    }

    #[test]
    fn reversed_chain_order() {
        let g = FluxGraph::from_edges(5, (0..4).map(|i| (i + 1, i)));
        let o = condense_and_sort(&g);
        assert_eq!(o.order, vec![4, 3, 2, 1, 0]);
    }

    #[test]
    fn four_cycle_precedes_downstream() {
        let mut edges = vec![(0, 1), (1, 2), (2, 3), (3, 0)];
        edges.extend([(3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9)]);
        let g = FluxGraph::from_edges(10, edges);
        let o = condense_and_sort(&g);
        assert_eq!(o.num_components(), 7);
        assert_eq!(o.components[0], vec![0, 1, 2, 3]);
        assert!(o.is_cycle[0]);
        assert_eq!(o.cycle_count(), 1);
        assert_eq!(o.max_cycle_size(), 4);
    }

    #[test]
    fn single_global_cycle() {
        let g = FluxGraph::from_edges(6, (0..6).map(|i| (i, (i + 1) % 6)));
        assert_eq!(condense_and_sort(&g).num_components(), 1);
    }

    #[test]
    fn self_edge_is_cycle() {
        let g = FluxGraph::from_edges(2, [(0, 0), (0, 1)]);
        let o = condense_and_sort(&g);
        assert_eq!(o.is_cycle, vec![true, false]);
    }

    #[test]
    fn ties_by_smallest_index() {
        let g = FluxGraph::from_edges(4, [(3, 0), (2, 1)]);
        assert_eq!(condense_and_sort(&g).order, vec![2, 1, 3, 0]);
    }

    #[test]
    fn block_sizes() {
        let g = FluxGraph::new(10);
        let o = condense_and_sort(&g);
        let sizes: Vec<usize> = block_partition(&o, 4)
            .iter()
            .map(|u| u.cells.len())
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert_eq!(block_partition(&o, 1).len(), 10);
    }

    #[test]
    fn cycle_never_split() {
        let g = FluxGraph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 1), (3, 4), (4, 5)]);
        let o = condense_and_sort(&g);
        let units = block_partition(&o, 2);
        let sizes: Vec<usize> = units.iter().map(|u| u.cells.len()).collect();
        assert_eq!(sizes, vec![1, 3, 2]);
        assert!(units[1].has_cycle);
    }

    #[test]
    fn two_cycle_has_one_block_above_diagonal() {
        let g = FluxGraph::from_edges(4, [(0, 1), (1, 2), (2, 1), (2, 3)]);
        let o = condense_and_sort(&g);
        let pat = permuted_sparsity(&o, &g, 1);
        let upper: Vec<_> = pat.entries.iter().filter(|(r, c)| c > r).collect();
        assert_eq!(upper.len(), 1);
        assert!(pat.entries_above_blocks(&o).is_empty());
    }

    #[test]
    fn acyclic_pattern_is_lower_triangular() {
        let g = FluxGraph::from_edges(5, [(4, 2), (2, 0), (4, 1), (1, 3)]);
        let o = condense_and_sort(&g);
        for nd in [1, 3] {
            let pat = permuted_sparsity(&o, &g, nd);
            for &(r, c) in &pat.entries {
                assert!(c / nd <= r / nd);
            }
        }
    }

    #[test]
    fn pgm_header() {
        let g = FluxGraph::from_edges(3, [(0, 1)]);
        let o = condense_and_sort(&g);
        let img = permuted_sparsity(&o, &g, 1).to_pgm(100);
        assert!(img.starts_with(b"P5\n3 3\n255\n"));
        assert_eq!(img.len(), 11 + 9);
    }
}
