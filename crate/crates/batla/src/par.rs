//! Minimal fork-join helper with deterministic work assignment.

/// Calls `f(i, &mut items[i])` for every item, with item `i` handled by worker
/// `i % workers`. Items must be independent, so results do not depend on the
/// worker count.
pub fn for_each_round_robin<X, F>(items: &mut [X], workers: usize, f: F)
where
    X: Send,
    F: Fn(usize, &mut X) + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        for (i, x) in items.iter_mut().enumerate() {
            f(i, x);
        }
        return;
    }
    let mut buckets: Vec<Vec<(usize, &mut X)>> = (0..workers).map(|_| Vec::new()).collect();
    for (i, x) in items.iter_mut().enumerate() {
        buckets[i % workers].push((i, x));
    }
    let f = &f;
    std::thread::scope(|scope| {
        let mut it = buckets.into_iter();
        let first = it.next().unwrap();
        for bucket in it {
            scope.spawn(move || {
                for (i, x) in bucket {
                    f(i, x);
                }
            });
        }
        for (i, x) in first {
            f(i, x);
        }
    });
}
