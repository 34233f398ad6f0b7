use parking_lot::{Condvar, Mutex};

/// Counting semaphore bounding concurrent requests to one endpoint.
#[derive(Debug)]
pub struct InflightLimiter {
    max: usize,
    current: Mutex<usize>,
    released: Condvar,
}

pub struct InflightPermit<'a> {
    limiter: &'a InflightLimiter,
}

impl InflightLimiter {
    pub fn new(max: usize) -> Self {
        InflightLimiter { max: max.max(1), current: Mutex::new(0), released: Condvar::new() }
    }

    /// Blocks until a slot is free.
    pub fn acquire(&self) -> InflightPermit<'_> {
        let mut current = self.current.lock();
        while *current >= self.max {
            self.released.wait(&mut current);
        }
        *current += 1;
        InflightPermit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.current.lock()
    }

    pub fn max(&self) -> usize {
        self.max
    }
}

impl Drop for InflightPermit<'_> {
    fn drop(&mut self) {
        *self.limiter.current.lock() -= 1;
        self.limiter.released.notify_one();
    }
}
