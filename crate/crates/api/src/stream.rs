use std::convert::Infallible;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use serde::Deserialize;
use smartfab_core::transport::TopicFilter;
use tokio::sync::broadcast::error::RecvError;
use tokio::sync::mpsc;

use crate::error::ApiError;
use crate::model::ControlLine;
use crate::session::Shared;
use crate::AppState;

#[derive(Debug, Deserialize)]
pub(crate) struct StreamQuery {
    filter: Option<String>,
    /// Last sequence number the client has seen; replay resumes after it.
    since: Option<u64>,
}

pub(crate) async fn get_stream(
    State(app): State<Arc<AppState>>,
    Query(q): Query<StreamQuery>,
) -> Result<Response, ApiError> {
    let filter = TopicFilter::parse(q.filter.as_deref().unwrap_or("#"))
        .map_err(|e| ApiError::new(axum::http::StatusCode::BAD_REQUEST, "invalid-filter", e.to_string()))?;
    let shared = app.session.shared().clone();
    let (tx, rx) = mpsc::channel::<Bytes>(1024);
    tokio::spawn(pump(shared, filter, q.since, tx));
    let body = Body::from_stream(futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|b| (Ok::<_, Infallible>(b), rx))
    }));
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

/// Sends retained events after `*last`, announcing a gap if some are gone.
/// Returns false once the client has disconnected.
async fn replay(shared: &Shared, filter: &TopicFilter, last: &mut u64, tx: &mpsc::Sender<Bytes>) -> bool {
    let (gap, events) = shared.retained_after(*last);
    if let Some(to_seq) = gap {
        let line = ControlLine::Gap {
            from_seq: *last + 1,
            to_seq,
        };
        if tx.send(Bytes::from(line.encode())).await.is_err() {
            return false;
        }
        *last = to_seq;
    }
    for e in events {
        *last = e.seq;
        if filter.matches(&e.topic) && tx.send(e.line).await.is_err() {
            return false;
        }
    }
    true
}

async fn pump(shared: Arc<Shared>, filter: TopicFilter, since: Option<u64>, tx: mpsc::Sender<Bytes>) {
    let mut live = shared.events.subscribe();
    let mut last = since.unwrap_or_else(|| shared.latest_seq());
    if !replay(&shared, &filter, &mut last, &tx).await {
        return;
    }
    let mut heartbeat = tokio::time::interval(shared.heartbeat);
    loop {
        tokio::select! {
            r = live.recv() => match r {
                Ok(e) => {
                    if e.seq <= last {
                        continue;
                    }
                    if e.seq > last + 1 && !replay(&shared, &filter, &mut last, &tx).await {
                        return;
                    }
                    if e.seq <= last {
                        continue;
                    }
                    last = e.seq;
                    if filter.matches(&e.topic) && tx.send(e.line).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(_)) => {
                    if !replay(&shared, &filter, &mut last, &tx).await {
                        return;
                    }
                }
                Err(RecvError::Closed) => return,
            },
            _ = heartbeat.tick() => {
                let line = ControlLine::Heartbeat { seq: last, tick: shared.snapshot().tick };
                if tx.send(Bytes::from(line.encode())).await.is_err() {
                    return;
                }
            }
            _ = tx.closed() => return,
        }
    }
}
