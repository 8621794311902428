//! Wire format: a 4-byte big-endian payload length followed by that many
//! bytes of UTF-8 JSON `{"op", "topic", "ts", "body"}`.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

use crate::BusError;

/// Largest accepted payload, bytes.
pub const MAX_FRAME_LEN: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Sub,
    Unsub,
    Pub,
    Msg,
    Ping,
    Pong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub op: Op,
    #[serde(default)]
    pub topic: String,
    #[serde(default)]
    pub ts: f64,
    #[serde(default)]
    pub body: Map<String, Value>,
}

impl Frame {
    pub fn new(op: Op, topic: impl Into<String>, ts: f64, body: Map<String, Value>) -> Self {
        Frame { op, topic: topic.into(), ts, body }
    }

    pub fn control(op: Op, topic: impl Into<String>) -> Self {
        Frame::new(op, topic, crate::now(), Map::new())
    }

    /// Length prefix plus payload.
    pub fn encode(&self) -> Result<Vec<u8>, BusError> {
        let payload = serde_json::to_vec(self).map_err(|e| BusError::Protocol(e.to_string()))?;
        if payload.len() > MAX_FRAME_LEN {
            return Err(BusError::FrameTooLarge(payload.len()));
        }
        let mut out = Vec::with_capacity(4 + payload.len());
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn decode(payload: &[u8]) -> Result<Frame, BusError> {
        serde_json::from_slice(payload).map_err(|e| BusError::Protocol(e.to_string()))
    }
}

/// Reads one frame. `Ok(None)` on a clean end of stream at a frame boundary.
pub async fn read_frame<R: AsyncRead + Unpin>(reader: &mut R) -> Result<Option<Frame>, BusError> {
    let mut len_buf = [0u8; 4];
    match reader.read_exact(&mut len_buf).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len_buf) as usize;
    if len > MAX_FRAME_LEN {
        return Err(BusError::FrameTooLarge(len));
    }
    let mut payload = vec![0u8; len];
    reader.read_exact(&mut payload).await?;
    Frame::decode(&payload).map(Some)
}

pub async fn write_bytes<W: AsyncWrite + Unpin>(writer: &mut W, bytes: &[u8]) -> Result<(), BusError> {
    writer.write_all(bytes).await?;
    Ok(())
}
