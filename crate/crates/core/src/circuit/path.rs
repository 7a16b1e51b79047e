use std::collections::VecDeque;

use super::CircuitError;

/// Joins picked vertices into a path along grid edges.
///
/// Each gap between consecutive picks is filled with a shortest grid path.
/// Among equally short continuations the step along the axis of the previous
/// step wins, then the lower vertex index. The previous step carries over
/// from one gap to the next.
pub fn complete_path(nx: usize, ny: usize, picks: &[usize]) -> Result<Vec<usize>, CircuitError> {
    let n = nx * ny;
    if let Some(&v) = picks.iter().find(|&&v| v >= n) {
        return Err(CircuitError::InvalidVertex(v));
    }
    let mut picks = picks.to_vec();
    picks.dedup();
    if picks.len() < 2 {
        return Err(CircuitError::PathTooShort);
    }
    let mut path = vec![picks[0]];
    for pair in picks.windows(2) {
        let (from, to) = (pair[0], pair[1]);
        let dist = distances_to(nx, ny, to);
        if dist[from] == usize::MAX {
            return Err(CircuitError::DisconnectedPick { from, to });
        }
        let mut u = from;
        while u != to {
            let prev_x = match path.len() {
                0 | 1 => None,
                k => Some(path[k - 1].abs_diff(path[k - 2]) == 1),
            };
            let next = neighbors(nx, ny, u)
                .filter(|&w| dist[w] + 1 == dist[u])
                .min_by_key(|&w| {
                    let along_x = u.abs_diff(w) == 1;
                    (prev_x != Some(along_x), w)
                })
                .expect("distance field has a descent");
            path.push(next);
            u = next;
        }
    }
    if let Some(k) = (2..path.len()).find(|&k| path[k] == path[k - 2]) {
        return Err(CircuitError::Backtracking(path[k - 1]));
    }
    Ok(path)
}

fn neighbors(nx: usize, ny: usize, v: usize) -> impl Iterator<Item = usize> {
    let (i, j) = (v % nx, v / nx);
    [
        (i > 0).then(|| v - 1),
        (i + 1 < nx).then(|| v + 1),
        (j > 0).then(|| v - nx),
        (j + 1 < ny).then(|| v + nx),
    ]
    .into_iter()
    .flatten()
}

fn distances_to(nx: usize, ny: usize, target: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; nx * ny];
    dist[target] = 0;
    let mut queue = VecDeque::from([target]);
    while let Some(u) = queue.pop_front() {
        for w in neighbors(nx, ny, u) {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}
