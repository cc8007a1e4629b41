//! Per-thread count of multiply-add operations issued by the kernels.
//!
//! Counts are analytic: each kernel call adds the number of fused
//! multiply-adds one lane performs. Divisions and square roots are not
//! counted.

use std::cell::Cell;

thread_local! {
    static COUNT: Cell<u64> = const { Cell::new(0) };
}

pub fn add(n: u64) {
    COUNT.with(|c| c.set(c.get() + n));
}

pub fn get() -> u64 {
    COUNT.with(|c| c.get())
}

pub fn reset() {
    COUNT.with(|c| c.set(0));
}

/// Runs `f` and returns its result with the operations it issued on this thread.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let before = get();
    let r = f();
    (r, get() - before)
}
