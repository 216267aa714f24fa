/// Enumerates every alignment path and keeps the lexicographic minimum of
/// (edits, insertions + deletions). Returns (S, I, D).
pub fn best_counts<T: PartialEq>(r: &[T], h: &[T]) -> (usize, usize, usize) {
    let mut best = None;
    walk(r, h, (0, 0, 0), &mut best);
    best.unwrap().1
}

type Best = Option<((usize, usize), (usize, usize, usize))>;

fn walk<T: PartialEq>(r: &[T], h: &[T], c: (usize, usize, usize), best: &mut Best) {
    if r.is_empty() && h.is_empty() {
        let key = (c.0 + c.1 + c.2, c.1 + c.2);
        if best.is_none_or(|(k, _)| key < k) {
            *best = Some((key, c));
        }
        return;
    }
    if !r.is_empty() && !h.is_empty() {
        let sub = usize::from(r[0] != h[0]);
        walk(&r[1..], &h[1..], (c.0 + sub, c.1, c.2), best);
    }
    if !h.is_empty() {
        walk(r, &h[1..], (c.0, c.1 + 1, c.2), best);
    }
    if !r.is_empty() {
        walk(&r[1..], h, (c.0, c.1, c.2 + 1), best);
    }
}
