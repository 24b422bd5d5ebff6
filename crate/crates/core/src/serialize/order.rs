use crate::corpus::{BBox, Token};

/// Two boxes share a line when their vertical extents intersect and the
/// overlap covers at least half of the smaller height.
pub(crate) fn same_line(a: &BBox, b: &BBox) -> bool {
    let top = a.y1.max(b.y1);
    let bottom = a.y2.min(b.y2);
    if top > bottom {
        return false;
    }
    let overlap = bottom - top;
    2 * overlap >= a.height().min(b.height())
}

/// Top-left to bottom-right permutation of `tokens`.
///
/// Tokens are grouped into lines (connected components of [`same_line`]),
/// lines are ordered by their top edge, tokens within a line by `x1`. Ties
/// fall back to the remaining box coordinates, then text, then input index.
pub fn reading_order(tokens: &[Token]) -> Vec<usize> {
    let n = tokens.len();
    let mut by_top: Vec<usize> = (0..n).collect();
    by_top.sort_by_key(|&i| (tokens[i].bbox.y1, i));

    // Sweep by top edge; only boxes whose bottom is not above the current top
    // can still intersect it.
    let mut parent: Vec<usize> = (0..n).collect();
    let mut active: Vec<usize> = Vec::new();
    for &i in &by_top {
        let b = &tokens[i].bbox;
        active.retain(|&j| tokens[j].bbox.y2 >= b.y1);
        for &j in &active {
            if same_line(b, &tokens[j].bbox) {
                union(&mut parent, i, j);
            }
        }
        active.push(i);
    }

    let mut lines: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        lines.entry(root).or_default().push(i);
    }
    let key = |i: usize| {
        let t = &tokens[i];
        (t.bbox.x1, t.bbox.y1, t.bbox.x2, t.bbox.y2, t.text.as_str(), i)
    };
    let mut lines: Vec<Vec<usize>> = lines.into_values().collect();
    for line in &mut lines {
        line.sort_by(|&a, &b| key(a).cmp(&key(b)));
    }
    lines.sort_by(|a, b| {
        let top = |l: &[usize]| l.iter().map(|&i| tokens[i].bbox.y1).min();
        top(a).cmp(&top(b)).then_with(|| key(a[0]).cmp(&key(b[0])))
    });
    lines.into_iter().flatten().collect()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}
