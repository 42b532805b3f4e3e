use std::sync::Mutex;

use cotrr_core::ChatRequest;

use super::{Transport, TransportError};

/// Wraps a transport and keeps a copy of every request that reaches it.
pub struct RecordingTransport<T> {
    inner: T,
    log: Mutex<Vec<ChatRequest>>,
}

impl<T> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.log.lock().expect("log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        self.log.lock().expect("log poisoned").push(request.clone());
        self.inner.send(request)
    }
}
