//! Byte accounting for transient buffers.
//!
//! The ledger tracks score tiles, masks, per-tile top-k scratch and running
//! buffers. Inputs and outputs are never charged. Every charge is an RAII
//! [`Charge`] guard, so live bytes return to zero once all guards drop.

use std::sync::{Mutex, MutexGuard};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerEvent {
    pub label: &'static str,
    /// Positive on allocation, negative on release.
    pub delta: i64,
}

#[derive(Debug, Default)]
struct LedgerState {
    live: u64,
    peak: u64,
    events: Option<Vec<LedgerEvent>>,
}

/// Live and peak transient bytes of one run. Shareable across workers;
/// updates are serialized through an internal lock.
#[derive(Debug, Default)]
pub struct MemoryLedger {
    state: Mutex<LedgerState>,
}

impl MemoryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// A ledger that also keeps the ordered list of allocation events.
    pub fn with_event_log() -> Self {
        Self {
            state: Mutex::new(LedgerState {
                events: Some(Vec::new()),
                ..LedgerState::default()
            }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, LedgerState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Records an allocation of `bytes`, released when the guard drops.
    pub fn charge(&self, label: &'static str, bytes: u64) -> Charge<'_> {
        let mut st = self.lock();
        st.live += bytes;
        st.peak = st.peak.max(st.live);
        if let Some(ev) = st.events.as_mut() {
            ev.push(LedgerEvent {
                label,
                delta: bytes as i64,
            });
        }
        Charge {
            ledger: self,
            label,
            bytes,
        }
    }

    fn release(&self, label: &'static str, bytes: u64) {
        let mut st = self.lock();
        assert!(st.live >= bytes, "ledger underflow releasing {label}");
        st.live -= bytes;
        if let Some(ev) = st.events.as_mut() {
            ev.push(LedgerEvent {
                label,
                delta: -(bytes as i64),
            });
        }
    }

    pub fn live_bytes(&self) -> u64 {
        self.lock().live
    }

    pub fn peak_bytes(&self) -> u64 {
        self.lock().peak
    }

    /// Ordered event log; empty unless built with [`Self::with_event_log`].
    pub fn events(&self) -> Vec<LedgerEvent> {
        self.lock().events.clone().unwrap_or_default()
    }
}

/// An outstanding ledger allocation.
#[derive(Debug)]
#[must_use = "dropping a charge releases it immediately"]
pub struct Charge<'a> {
    ledger: &'a MemoryLedger,
    label: &'static str,
    bytes: u64,
}

impl Charge<'_> {
    pub fn bytes(&self) -> u64 {
        self.bytes
    }
    pub fn label(&self) -> &'static str {
        self.label
    }
}

impl Drop for Charge<'_> {
    fn drop(&mut self) {
        self.ledger.release(self.label, self.bytes);
    }
}
