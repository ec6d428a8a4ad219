//! Maximum-weight bipartite matching with a deterministic tie-break.

use super::AssociationGraph;

/// Minimum-cost perfect assignment on an `n x m` matrix with `n <= m`
/// (shortest augmenting paths with potentials). Returns the column of each row.
fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return vec![];
    }
    let m = cost[0].len();
    debug_assert!(n <= m);
    // 1-based arrays; column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            col[row_of[j] - 1] = j - 1;
        }
    }
    col
}

/// Best total weight over matchings of a dense non-negative weight matrix,
/// where zero entries mean "no edge".
fn best_total(weights: &[Vec<f64>]) -> f64 {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let (n, m, transpose) = if rows <= cols { (rows, cols, false) } else { (cols, rows, true) };
    let at = |i: usize, j: usize| if transpose { weights[j][i] } else { weights[i][j] };
    let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|j| -at(i, j)).collect()).collect();
    min_cost_assignment(&cost)
        .iter()
        .enumerate()
        .map(|(i, &j)| at(i, j))
        .sum()
}

struct Component {
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn components(graph: &AssociationGraph) -> Vec<Component> {
    let nf = graph.nodes_f.len();
    let mut parent: Vec<usize> = (0..nf + graph.nodes_g.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut touched = vec![false; parent.len()];
    for e in graph.edges.iter().filter(|e| e.admissible) {
        let (a, b) = (find(&mut parent, e.i), find(&mut parent, nf + e.j));
        parent[a.max(b)] = a.min(b);
        touched[e.i] = true;
        touched[nf + e.j] = true;
    }
    let mut by_root: std::collections::BTreeMap<usize, Component> = Default::default();
    for x in 0..parent.len() {
        if !touched[x] {
            continue;
        }
        let r = find(&mut parent, x);
        let c = by_root.entry(r).or_insert(Component { rows: vec![], cols: vec![] });
        if x < nf {
            c.rows.push(x);
        } else {
            c.cols.push(x - nf);
        }
    }
    by_root.into_values().collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Maximum-weight matching over the admissible edges.
///
/// Among optimal matchings the one whose `(i, j)` pairs, sorted by `i`,
/// form the lexicographically smallest sequence is returned. Pairs are
/// `(f node, g node)` and come back sorted.
pub fn solve_matching(graph: &AssociationGraph) -> Vec<(usize, usize)> {
    let mut weight = std::collections::HashMap::new();
    for e in graph.edges.iter().filter(|e| e.admissible) {
        weight.insert((e.i, e.j), e.weight);
    }
    let mut pairs = Vec::new();
    for comp in components(graph) {
        let w = |i: usize, j: usize| weight.get(&(i, j)).copied().unwrap_or(0.0);
        let matrix = |rows: &[usize], cols: &[usize]| -> Vec<Vec<f64>> {
            rows.iter().map(|&i| cols.iter().map(|&j| w(i, j)).collect()).collect()
        };
        let optimum = best_total(&matrix(&comp.rows, &comp.cols));
        let mut fixed = 0.0;
        let mut cols = comp.cols.clone();
        for (k, &i) in comp.rows.iter().enumerate() {
            let later = &comp.rows[k + 1..];
            let candidates: Vec<usize> = cols.iter().copied().filter(|&j| weight.contains_key(&(i, j))).collect();
            let mut chosen = None;
            for j in candidates {
                let rest: Vec<usize> = cols.iter().copied().filter(|&c| c != j).collect();
                if close(fixed + w(i, j) + best_total(&matrix(later, &rest)), optimum) {
                    chosen = Some(j);
                    break;
                }
            }
            if let Some(j) = chosen {
                fixed += w(i, j);
                cols.retain(|&c| c != j);
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Total weight of a set of pairs under the graph's admissible edges.
pub fn matching_weight(graph: &AssociationGraph, pairs: &[(usize, usize)]) -> f64 {
    pairs
        .iter()
        .map(|&(i, j)| {
            graph
                .edges
                .iter()
                .find(|e| e.i == i && e.j == j && e.admissible)
                .map_or(0.0, |e| e.weight)
        })
        .sum()
}
