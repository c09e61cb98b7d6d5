//! Replay-then-follow stream of notification and packet records.

use std::convert::Infallible;

use axum::body::Bytes;
use futures::Stream;

use crate::AppState;

/// JSON lines for every streamed record at or after `from_offset`: first
/// the stored backlog, then new records as the log grows. Ends only when
/// the client disconnects or the server drops the state.
pub fn records(state: AppState, from_offset: u64) -> impl Stream<Item = Result<Bytes, Infallible>> {
    let rx = state.subscribe();
    futures::stream::unfold(
        (state, rx, from_offset),
        |(state, mut rx, cursor)| async move {
            loop {
                rx.borrow_and_update();
                let (chunk, next) = state.with_sim(|s| {
                    let log = s.control().log();
                    let mut out = String::new();
                    for r in log.replay_from(cursor).filter(|r| r.is_streamed()) {
                        out.push_str(&r.to_json_line());
                        out.push('\n');
                    }
                    (out, (log.len() as u64).max(cursor))
                });
                if !chunk.is_empty() {
                    return Some((Ok(Bytes::from(chunk)), (state, rx, next)));
                }
                if rx.changed().await.is_err() {
                    return None;
                }
            }
        },
    )
}
