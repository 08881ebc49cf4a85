//! Library surface of the `qlimit` command-line tool; the binary is a thin
//! argument-parsing shell over [`commands`].

pub mod commands;
pub mod config;
pub mod output;

use std::sync::Once;

/// Cap rayon's parallelism from `QLIMIT_THREADS` (once per process; later
/// calls and invalid values are ignored).
pub fn init_thread_pool() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        if let Ok(v) = std::env::var("QLIMIT_THREADS") {
            if let Ok(n) = v.parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    });
}
