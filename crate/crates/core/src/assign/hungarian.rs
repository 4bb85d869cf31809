/// Maximum-weight assignment on a rectangular score matrix.
///
/// `scores[row][col]`; returns, for each row, the column it is matched to.
/// Rows and columns are padded to a square with zero-score dummies, so when
/// there are more rows than columns some rows come back as `None`.
///
/// Shortest-augmenting-path Hungarian method with potentials, run on costs
/// `-score`. Comparisons are strict, so among equal-cost choices the lowest
/// column index wins and results are reproducible.
pub fn max_weight_assignment(scores: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = scores.len();
    let cols = scores.first().map_or(0, Vec::len);
    if rows == 0 {
        return Vec::new();
    }
    let n = rows.max(cols);
    let cost = |r: usize, c: usize| -> f64 {
        if r < rows && c < cols {
            -scores[r][c]
        } else {
            0.0
        }
    };

    // 1-based arrays; index 0 is the virtual root column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1]; // column -> row (1-based; 0 = free)
    let mut way = vec![0usize; n + 1];
    for r in 1..=n {
        owner[0] = r;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let reduced = cost(r0 - 1, c - 1) - u[r0] - v[c];
                if reduced < minv[c] {
                    minv[c] = reduced;
                    way[c] = col0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut result = vec![None; rows];
    for c in 1..=n {
        let r = owner[c];
        if r >= 1 && r <= rows && c <= cols {
            result[r - 1] = Some(c - 1);
        }
    }
    result
}
