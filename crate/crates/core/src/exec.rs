//! Execution policy for the data-parallel loops.
//!
//! With the `parallel` feature (on by default) independent jobs are spread
//! over the current rayon pool. Without it, or with [`Execution::Sequential`],
//! the same closures run in order on the calling thread. Every job writes to
//! its own output slot, so results never depend on the policy or thread count.

/// How independent jobs are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.into_par_iter().map(f).collect()
            }
            _ => items.into_iter().map(f).collect(),
        }
    }

    /// Runs `f` on every item for its side effects.
    pub fn for_each<T, F>(self, items: Vec<T>, f: F)
    where
        T: Send,
        F: Fn(T) + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.into_par_iter().for_each(f)
            }
            _ => items.into_iter().for_each(f),
        }
    }
}
