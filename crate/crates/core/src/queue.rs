//! Bounded single-consumer queue that evicts the oldest element when full.
//!
//! Used between the acquisition producer and the pipeline consumer, and for
//! per-client writer queues in the streaming service. Only whole elements are
//! ever dropped.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

#[derive(Debug)]
pub struct DropOldestQueue<T> {
    state: Mutex<State<T>>,
    ready: Condvar,
    capacity: usize,
    dropped: AtomicU64,
}

#[derive(Debug)]
struct State<T> {
    items: VecDeque<T>,
    closed: bool,
}

impl<T> DropOldestQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        DropOldestQueue {
            state: Mutex::new(State { items: VecDeque::with_capacity(capacity), closed: false }),
            ready: Condvar::new(),
            capacity,
            dropped: AtomicU64::new(0),
        }
    }

    /// Enqueues `item`, evicting the oldest element if the queue is full.
    /// Returns `false` if the queue has been closed.
    pub fn push(&self, item: T) -> bool {
        let mut st = self.state.lock().expect("queue poisoned");
        if st.closed {
            return false;
        }
        if st.items.len() == self.capacity {
            st.items.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        st.items.push_back(item);
        drop(st);
        self.ready.notify_one();
        true
    }

    pub fn try_pop(&self) -> Option<T> {
        self.state.lock().expect("queue poisoned").items.pop_front()
    }

    /// Waits up to `timeout` for an element. Returns `None` on timeout or once
    /// the queue is closed and drained.
    pub fn pop_timeout(&self, timeout: Duration) -> Option<T> {
        let st = self.state.lock().expect("queue poisoned");
        let (mut st, _) = self
            .ready
            .wait_timeout_while(st, timeout, |s| s.items.is_empty() && !s.closed)
            .expect("queue poisoned");
        st.items.pop_front()
    }

    pub fn close(&self) {
        self.state.lock().expect("queue poisoned").closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().expect("queue poisoned").closed
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("queue poisoned").items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::thread;

    #[test]
    fn evicts_oldest() {
        let q = DropOldestQueue::new(3);
        for i in 0..5 {
            q.push(i);
        }
        assert_eq!(q.dropped(), 2);
        let rest: Vec<_> = std::iter::from_fn(|| q.try_pop()).collect();
        assert_eq!(rest, vec![2, 3, 4]);
    }

    #[test]
    fn close_wakes_consumer() {
        let q = Arc::new(DropOldestQueue::<u32>::new(4));
        let q2 = Arc::clone(&q);
        let h = thread::spawn(move || q2.pop_timeout(Duration::from_secs(5)));
        thread::sleep(Duration::from_millis(20));
        q.close();
        assert_eq!(h.join().unwrap(), None);
        assert!(!q.push(1));
    }

    #[test]
    fn producer_consumer_preserves_order() {
        let q = Arc::new(DropOldestQueue::new(10_000));
        let q2 = Arc::clone(&q);
        let producer = thread::spawn(move || {
            for i in 0..5_000u32 {
                q2.push(i);
            }
            q2.close();
        });
        let mut got = Vec::new();
        while let Some(v) = q.pop_timeout(Duration::from_secs(5)) {
            got.push(v);
        }
        producer.join().unwrap();
        assert_eq!(got, (0..5_000).collect::<Vec<_>>());
    }
}
