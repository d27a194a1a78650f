//! Data-parallel map with a deterministic, order-preserving result.
//!
//! With the `parallel` feature and more than one worker, items are spread
//! over a dedicated rayon pool; otherwise they run in sequence. Results are
//! always returned in input order, so any reduction over them is performed
//! in a fixed order and is independent of the worker count.

#[derive(Debug)]
pub struct Workers {
    count: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Default for Workers {
    fn default() -> Self {
        Workers::sequential()
    }
}

impl Clone for Workers {
    fn clone(&self) -> Self {
        Workers::new(self.count)
    }
}

impl Workers {
    pub fn sequential() -> Self {
        Workers {
            count: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// `count = 0` means one worker per available core.
    pub fn new(count: usize) -> Self {
        let count = if count == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            count
        };
        #[cfg(feature = "parallel")]
        {
            let pool = (count > 1)
                .then(|| rayon::ThreadPoolBuilder::new().num_threads(count).build().ok())
                .flatten();
            Workers { count, pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            Workers { count }
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }

    /// `map` over `0..n`.
    pub fn map_range<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        let idx: Vec<usize> = (0..n).collect();
        self.map(&idx, |&i| f(i))
    }
}
