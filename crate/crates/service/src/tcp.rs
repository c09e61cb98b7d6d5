//! Length-delimited TCP ingest for live helmets.
//!
//! Every frame is a 4-byte big-endian length then that many bytes. The first
//! frame a client sends is its bearer token as UTF-8; each later frame is one
//! JSON telemetry packet. The server answers every packet frame with one
//! JSON [`TcpAck`] frame.

use minesentinel_core::control::wire::{decode_packet, MAX_FRAME_BYTES};
use minesentinel_core::Millis;
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};

use crate::AppState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcpAck {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_ms: Option<Millis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

async fn read_frame(s: &mut TcpStream) -> std::io::Result<Option<Vec<u8>>> {
    let len = match s.read_u32().await {
        Ok(n) => n as usize,
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    };
    if len > MAX_FRAME_BYTES {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds {MAX_FRAME_BYTES}"),
        ));
    }
    let mut buf = vec![0; len];
    s.read_exact(&mut buf).await?;
    Ok(Some(buf))
}

async fn write_frame(s: &mut TcpStream, payload: &[u8]) -> std::io::Result<()> {
    s.write_u32(payload.len() as u32).await?;
    s.write_all(payload).await?;
    s.flush().await
}

async fn handle(state: AppState, mut s: TcpStream) -> std::io::Result<()> {
    let Some(token) = read_frame(&mut s).await? else {
        return Ok(());
    };
    let token = String::from_utf8_lossy(&token).trim().to_string();
    while let Some(frame) = read_frame(&mut s).await? {
        let result = std::str::from_utf8(&frame)
            .map_err(|e| e.to_string())
            .and_then(|text| decode_packet(text).map_err(|e| e.to_string()))
            .and_then(|p| {
                state
                    .with_sim(|sim| sim.submit(p, &token))
                    .map_err(|e| e.to_string())
            });
        let ack = match result {
            Ok(at) => TcpAck {
                ok: true,
                arrival_ms: Some(at),
                error: None,
            },
            Err(e) => TcpAck {
                ok: false,
                arrival_ms: None,
                error: Some(e),
            },
        };
        write_frame(&mut s, &serde_json::to_vec(&ack).expect("ack serializes")).await?;
    }
    Ok(())
}

/// Accept connections until the listener fails.
pub async fn serve_tcp(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    loop {
        let (sock, peer) = listener.accept().await?;
        let state = state.clone();
        tokio::spawn(async move {
            if let Err(e) = handle(state, sock).await {
                tracing::warn!(%peer, error = %e, "tcp ingest connection closed");
            }
        });
    }
}
