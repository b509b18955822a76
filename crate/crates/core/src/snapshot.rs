//! Wait-free single-reader snapshot hand-off.
//!
//! A writer publishes complete values; the real-time reader adopts the newest
//! one at the start of its tick. The reader never blocks, never allocates,
//! and never frees: superseded snapshots are handed back to the writer side
//! to be dropped there.

use std::sync::Arc;

use crossbeam_queue::ArrayQueue;

const RETIRE_SLOTS: usize = 8;

struct Shared<G> {
    pending: ArrayQueue<Arc<G>>,
    retired: ArrayQueue<Arc<G>>,
}

/// Writer half. Cloneable; may live on any thread.
pub struct SnapshotWriter<G> {
    shared: Arc<Shared<G>>,
}

impl<G> Clone for SnapshotWriter<G> {
    fn clone(&self) -> Self {
        Self { shared: Arc::clone(&self.shared) }
    }
}

/// Reader half, owned by the control loop.
pub struct SnapshotReader<G> {
    shared: Arc<Shared<G>>,
    current: Arc<G>,
}

pub fn snapshot_channel<G>(initial: G) -> (SnapshotWriter<G>, SnapshotReader<G>) {
    let shared = Arc::new(Shared { pending: ArrayQueue::new(1), retired: ArrayQueue::new(RETIRE_SLOTS) });
    (
        SnapshotWriter { shared: Arc::clone(&shared) },
        SnapshotReader { shared, current: Arc::new(initial) },
    )
}

impl<G> SnapshotWriter<G> {
    /// Publishes a prebuilt snapshot. An unread older snapshot is replaced.
    pub fn publish_arc(&self, snapshot: Arc<G>) {
        self.collect();
        drop(self.shared.pending.force_push(snapshot));
    }

    pub fn publish(&self, snapshot: G) {
        self.publish_arc(Arc::new(snapshot));
    }

    /// Drops snapshots the reader has retired.
    pub fn collect(&self) {
        while self.shared.retired.pop().is_some() {}
    }
}

impl<G> SnapshotReader<G> {
    /// Adopts the newest published snapshot, if any. Returns whether it changed.
    pub fn refresh(&mut self) -> bool {
        match self.shared.pending.pop() {
            Some(next) => {
                let old = std::mem::replace(&mut self.current, next);
                // When the retire queue is full the old value is freed here;
                // only reachable if the writer never calls `collect`.
                let _ = self.shared.retired.push(old);
                true
            }
            None => false,
        }
    }

    pub fn current(&self) -> &G {
        &self.current
    }

    pub fn current_arc(&self) -> &Arc<G> {
        &self.current
    }
}
