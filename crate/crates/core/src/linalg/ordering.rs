use super::CsrMatrix;

/// Subgraphs at or below this size are numbered directly.
const LEAF_SIZE: usize = 48;

/// Fill-reducing symmetric ordering by recursive graph bisection.
///
/// The graph is the symmetrized sparsity pattern of `a`. Each piece is split
/// by a BFS level set rooted at a pseudo-peripheral node; the two halves are
/// numbered first and the separator last. Returns `perm` with `perm[new] = old`.
pub fn nested_dissection(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let adj = symmetric_adjacency(a);
    let mut perm = Vec::with_capacity(n);
    let mut scratch = Scratch {
        level: vec![usize::MAX; n],
        in_set: vec![false; n],
    };
    let all: Vec<usize> = (0..n).collect();
    // Explicit work stack: (nodes, separator to emit after both halves).
    enum Work {
        Split(Vec<usize>),
        Emit(Vec<usize>),
    }
    let mut stack = vec![Work::Split(all)];
    while let Some(item) = stack.pop() {
        match item {
            Work::Emit(nodes) => perm.extend(nodes),
            Work::Split(nodes) => {
                if nodes.len() <= LEAF_SIZE {
                    perm.extend(nodes);
                    continue;
                }
                let (left, right, sep) = bisect(&adj, &nodes, &mut scratch);
                // Stack is LIFO: push in reverse of numbering order.
                stack.push(Work::Emit(sep));
                if !right.is_empty() {
                    stack.push(Work::Split(right));
                }
                if !left.is_empty() {
                    stack.push(Work::Split(left));
                }
            }
        }
    }
    debug_assert_eq!(perm.len(), n);
    perm
}

struct Scratch {
    level: Vec<usize>,
    in_set: Vec<bool>,
}

fn symmetric_adjacency(a: &CsrMatrix) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut adj = vec![Vec::new(); n];
    for (r, c, _) in a.triplets() {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// BFS restricted to `in_set`; returns nodes in visit order and fills `level`.
fn bfs(adj: &[Vec<usize>], root: usize, s: &mut Scratch, order: &mut Vec<usize>) -> usize {
    order.clear();
    order.push(root);
    s.level[root] = 0;
    let mut head = 0;
    let mut depth = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        let lv = s.level[v];
        for &w in &adj[v] {
            if s.in_set[w] && s.level[w] == usize::MAX {
                s.level[w] = lv + 1;
                depth = depth.max(lv + 1);
                order.push(w);
            }
        }
    }
    depth
}

fn reset_levels(s: &mut Scratch, nodes: &[usize]) {
    for &v in nodes {
        s.level[v] = usize::MAX;
    }
}

fn bisect(
    adj: &[Vec<usize>],
    nodes: &[usize],
    s: &mut Scratch,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    for &v in nodes {
        s.in_set[v] = true;
    }
    let mut order = Vec::with_capacity(nodes.len());

    // Pseudo-peripheral root: repeat BFS from the farthest, lowest-degree node.
    let mut root = nodes[0];
    let mut depth = bfs(adj, root, s, &mut order);
    for _ in 0..8 {
        let last = s.level[*order.last().unwrap()];
        let candidate = order
            .iter()
            .copied()
            .filter(|&v| s.level[v] == last)
            .min_by_key(|&v| adj[v].iter().filter(|&&w| s.in_set[w]).count())
            .unwrap();
        reset_levels(s, &order);
        let d = bfs(adj, candidate, s, &mut order);
        if d <= depth {
            reset_levels(s, &order);
            bfs(adj, root, s, &mut order);
            break;
        }
        root = candidate;
        depth = d;
    }

    let result = if order.len() < nodes.len() {
        // Disconnected: the reached component goes left, the rest right.
        let left = order.clone();
        let right: Vec<usize> = nodes
            .iter()
            .copied()
            .filter(|&v| s.level[v] == usize::MAX)
            .collect();
        (left, right, Vec::new())
    } else if depth < 2 {
        (Vec::new(), Vec::new(), nodes.to_vec())
    } else {
        let mut counts = vec![0usize; depth + 1];
        for &v in &order {
            counts[s.level[v]] += 1;
        }
        // Smallest level set among those splitting the node count roughly evenly.
        let total = order.len();
        let mut below = 0usize;
        let mut best: Option<(usize, usize)> = None;
        for (lvl, &cnt) in counts.iter().enumerate().take(depth).skip(1) {
            below += counts[lvl - 1];
            let above = total - below - cnt;
            let balanced = 10 * below >= 3 * total && 10 * above >= 3 * total;
            if balanced && best.map_or(true, |(_, c)| cnt < c) {
                best = Some((lvl, cnt));
            }
        }
        let split = match best {
            Some((lvl, _)) => lvl,
            None => {
                // Fall back to the median level.
                let mut acc = 0;
                let mut lvl = 1;
                for (l, &c) in counts.iter().enumerate() {
                    acc += c;
                    if 2 * acc >= total {
                        lvl = l.clamp(1, depth - 1);
                        break;
                    }
                }
                lvl
            }
        };
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut sep = Vec::new();
        for &v in &order {
            let l = s.level[v];
            if l < split {
                left.push(v);
            } else if l > split {
                right.push(v);
            } else {
                sep.push(v);
            }
        }
        (left, right, sep)
    };

    reset_levels(s, nodes);
    for &v in nodes {
        s.in_set[v] = false;
    }
    result
}
