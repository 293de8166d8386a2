use std::collections::VecDeque;

use super::CsrMatrix;

fn symmetric_adjacency<N>(a: &CsrMatrix<N>) -> Vec<Vec<usize>>
where
    N: Copy + num_traits::Zero + std::ops::AddAssign + std::ops::Mul<Output = N> + PartialEq,
{
    let n = a.nrows();
    let mut adj = vec![Vec::new(); n];
    for r in 0..n {
        for (c, _) in a.row(r) {
            if c != r {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Breadth-first level structure from `root`; returns (last level, depth).
fn levels(adj: &[Vec<usize>], root: usize, mark: &mut [usize], stamp: usize) -> (Vec<usize>, usize) {
    let mut current = vec![root];
    mark[root] = stamp;
    let mut depth = 0;
    loop {
        let mut next = Vec::new();
        for &v in &current {
            for &w in &adj[v] {
                if mark[w] != stamp {
                    mark[w] = stamp;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return (current, depth);
        }
        depth += 1;
        current = next;
    }
}

/// Reverse Cuthill-McKee ordering of the symmetrised pattern of `a`.
///
/// Returns `perm` with `perm[new] = old`. Each connected component is
/// started from a pseudo-peripheral vertex (George-Liu search).
pub fn reverse_cuthill_mckee<N>(a: &CsrMatrix<N>) -> Vec<usize>
where
    N: Copy + num_traits::Zero + std::ops::AddAssign + std::ops::Mul<Output = N> + PartialEq,
{
    assert_eq!(a.nrows(), a.ncols(), "ordering needs a square pattern");
    let n = a.nrows();
    let adj = symmetric_adjacency(a);
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut mark = vec![usize::MAX; n];
    let mut stamp = 0;
    let mut order = Vec::with_capacity(n);

    while order.len() < n {
        let seed = (0..n).filter(|&v| !visited[v]).min_by_key(|&v| (degree[v], v)).unwrap();
        // pseudo-peripheral root
        let mut root = seed;
        let (mut last, mut depth) = levels(&adj, root, &mut mark, stamp);
        stamp += 1;
        for _ in 0..8 {
            let cand = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            let (l2, d2) = levels(&adj, cand, &mut mark, stamp);
            stamp += 1;
            if d2 > depth {
                root = cand;
                last = l2;
                depth = d2;
            } else {
                break;
            }
        }

        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_unstable_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Lower and upper bandwidth of `a` under the symmetric permutation `perm`.
pub(crate) fn bandwidth<N>(a: &CsrMatrix<N>, perm: &[usize]) -> (usize, usize)
where
    N: Copy + num_traits::Zero + std::ops::AddAssign + std::ops::Mul<Output = N> + PartialEq,
{
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let (mut kl, mut ku) = (0, 0);
    for r in 0..a.nrows() {
        for (c, _) in a.row(r) {
            let (i, j) = (inv[r], inv[c]);
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
    }
    (kl, ku)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rcm_is_permutation_and_narrows_band() {
        // 1D chain numbered in a scrambled order
        let n = 50;
        let scramble: Vec<usize> = (0..n).map(|i| (i * 17) % n).collect();
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((scramble[i], scramble[i], 2.0));
            if i + 1 < n {
                trip.push((scramble[i], scramble[i + 1], -1.0));
                trip.push((scramble[i + 1], scramble[i], -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, trip);
        let perm = reverse_cuthill_mckee(&a);
        let mut sorted = perm.clone();
        sorted.sort();
        assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        assert_eq!(bandwidth(&a, &perm), (1, 1));
    }
}
