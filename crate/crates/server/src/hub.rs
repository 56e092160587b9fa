use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use decomp_core::service::SinkFactory;
use decomp_core::session::Event;
use tokio::sync::broadcast;

const CHANNEL_CAPACITY: usize = 1024;

/// One broadcast channel per session. Sessions publish through the sink the
/// manager installs; SSE handlers subscribe.
#[derive(Default)]
pub struct Hub {
    channels: Mutex<HashMap<String, broadcast::Sender<Arc<Event>>>>,
}

impl Hub {
    fn sender(&self, session: &str) -> broadcast::Sender<Arc<Event>> {
        let mut map = self.channels.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(session.to_string())
            .or_insert_with(|| broadcast::channel(CHANNEL_CAPACITY).0)
            .clone()
    }

    pub fn subscribe(&self, session: &str) -> broadcast::Receiver<Arc<Event>> {
        self.sender(session).subscribe()
    }

    pub fn sink_factory(self: Arc<Self>) -> SinkFactory {
        Arc::new(move |session: &str| {
            let tx = self.sender(session);
            Arc::new(move |ev: &Event| {
                // no subscribers is fine; the log is the source of truth
                let _ = tx.send(Arc::new(ev.clone()));
            })
        })
    }
}
