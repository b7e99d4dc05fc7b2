//! Reachability and period analysis on the positive-entry digraph of a chain.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    let mut queue = VecDeque::new();
    level[start] = Some(0);
    queue.push_back(start);
    while let Some(u) = queue.pop_front() {
        let next = level[u].map(|l| l + 1);
        for &v in &adj[u] {
            if level[v].is_none() {
                level[v] = next;
                queue.push_back(v);
            }
        }
    }
    level
}

/// Returns true iff the digraph is strongly connected and has period 1.
///
/// The period is the gcd of `level(u) + 1 - level(v)` over all edges, with
/// levels taken from a BFS out of vertex 0. For a strongly connected graph
/// this equals the gcd of all cycle lengths.
pub fn is_ergodic_graph(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    if n == 0 {
        return false;
    }
    let level = bfs_levels(adj, 0);
    if level.iter().any(Option::is_none) {
        return false;
    }
    let mut reverse = vec![Vec::new(); n];
    for (u, targets) in adj.iter().enumerate() {
        for &v in targets {
            reverse[v].push(u);
        }
    }
    if bfs_levels(&reverse, 0).iter().any(Option::is_none) {
        return false;
    }
    let mut period = 0;
    for (u, targets) in adj.iter().enumerate() {
        let lu = level[u].unwrap_or(0);
        for &v in targets {
            let lv = level[v].unwrap_or(0);
            period = gcd(period, (lu + 1).abs_diff(lv));
            if period == 1 {
                return true;
            }
        }
    }
    period == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cycle_is_periodic() {
        assert!(!is_ergodic_graph(&[vec![1], vec![0]]));
    }

    #[test]
    fn self_loop_breaks_period() {
        assert!(is_ergodic_graph(&[vec![0, 1], vec![0]]));
    }

    #[test]
    fn cycles_of_length_two_and_three() {
        // 0 -> 1 -> 2 -> 0 and 2 -> 1: cycle lengths 3 and 2.
        assert!(is_ergodic_graph(&[vec![1], vec![2], vec![0, 1]]));
    }

    #[test]
    fn disconnected_is_not_ergodic() {
        assert!(!is_ergodic_graph(&[vec![0], vec![1]]));
        assert!(!is_ergodic_graph(&[vec![0, 1], vec![1]]));
    }
}
