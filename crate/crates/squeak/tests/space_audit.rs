//! Allocation audit for the factored solver's `O(t m)` space claim.
//!
//! A counting global allocator watches every Rust-side allocation while
//! `solve` runs on a `t = 2048` problem and asserts that no single work
//! buffer comes anywhere near `t x t` doubles — the largest temporary is
//! the `t x m` factor itself. The exact solver is measured as a control:
//! it *must* trip the same counter with a full `t x t` shift, proving
//! the instrument actually fires at that scale.
//!
//! This file is a separate test binary on purpose: a global allocator
//! applies to the whole binary, and the other suites should not pay the
//! bookkeeping overhead.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicIsize, AtomicUsize, Ordering};

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use squeak::baselines::uniform_sample;
use squeak::dataset::gaussian_expansion;
use squeak::kernels::{full_matrix, GramKernel, KernelFunction};
use squeak::nystrom::{build_sketch, solve_exact};

struct CountingAllocator;

static ENABLED: AtomicBool = AtomicBool::new(false);
/// Net live bytes since the last `reset` (may dip negative when buffers
/// allocated before the window are freed inside it).
static LIVE: AtomicIsize = AtomicIsize::new(0);
static PEAK: AtomicIsize = AtomicIsize::new(0);
static MAX_SINGLE: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for CountingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() && ENABLED.load(Ordering::Relaxed) {
            let live = LIVE.fetch_add(layout.size() as isize, Ordering::Relaxed)
                + layout.size() as isize;
            PEAK.fetch_max(live, Ordering::Relaxed);
            MAX_SINGLE.fetch_max(layout.size(), Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        if ENABLED.load(Ordering::Relaxed) {
            LIVE.fetch_sub(layout.size() as isize, Ordering::Relaxed);
        }
        System.dealloc(ptr, layout);
    }
}

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

/// Runs `f` with the counters armed; returns (peak net live bytes,
/// largest single allocation in bytes).
fn audited<T>(f: impl FnOnce() -> T) -> (T, isize, usize) {
    LIVE.store(0, Ordering::SeqCst);
    PEAK.store(0, Ordering::SeqCst);
    MAX_SINGLE.store(0, Ordering::SeqCst);
    ENABLED.store(true, Ordering::SeqCst);
    let out = f();
    ENABLED.store(false, Ordering::SeqCst);
    (out, PEAK.load(Ordering::SeqCst), MAX_SINGLE.load(Ordering::SeqCst))
}

#[test]
fn factored_solve_never_builds_a_dense_square_buffer() {
    let t = 2048usize;
    let mu = 1.0f64;
    let kernel = KernelFunction::gaussian(2.0).unwrap();
    let data = gaussian_expansion(t, 3, 10, &kernel, 0.1, 17).unwrap();
    let k = full_matrix(&kernel, &data, t).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let dict = uniform_sample(t, 64, &mut rng).unwrap();
    let access = GramKernel(k.view());
    let sketch = build_sketch(&dict, &access, mu).unwrap();
    let m = sketch.indices().len();
    assert!(m >= 16, "degenerate sample ({m} distinct indices)");
    let y = Array1::from_shape_fn(t, |i| (i as f64 * 0.37).sin());

    let (w, peak, max_single) = audited(|| sketch.solve(y.view(), mu).unwrap());
    assert_eq!(w.values.len(), t);
    assert!(w.values.iter().all(|v| v.is_finite()));

    let factor_bytes = 8 * t * m;
    let square_bytes = 8 * t * t;
    // The largest temporary is a t x m factor (with 2x slack for a
    // solver-side copy of the right-hand side), a far cry from t x t.
    assert!(
        max_single <= 2 * factor_bytes,
        "largest solve allocation {max_single} B exceeds twice the t x m factor ({factor_bytes} B)"
    );
    // Net live memory stays within a handful of t x m buffers.
    assert!(
        peak <= (8 * factor_bytes) as isize,
        "solve held {peak} B live, more than 8 factors of {factor_bytes} B"
    );
    assert!(
        max_single < square_bytes / 4,
        "largest solve allocation {max_single} B is within 4x of a dense t x t buffer"
    );

    // Control: the dense solver must allocate a full t x t shift, which
    // proves the counter sees buffers of that size when they exist.
    let (exact, _, exact_single) = audited(|| solve_exact(k.view(), y.view(), mu).unwrap());
    assert_eq!(exact.values.len(), t);
    assert!(
        exact_single >= square_bytes,
        "control failed: dense solve's largest allocation was {exact_single} B (< {square_bytes} B)"
    );

    println!(
        "space audit: PASS (t = {t}, m = {m}: solve peaked at {:.2} MiB live, largest buffer {:.2} MiB; dense control allocated {:.2} MiB)",
        peak as f64 / (1024.0 * 1024.0),
        max_single as f64 / (1024.0 * 1024.0),
        exact_single as f64 / (1024.0 * 1024.0),
    );
}
