//! Running the protocol over a byte stream, typically one TCP connection.
//!
//! Alice opens with HELLO carrying the code-table checksum; Bob answers
//! HELLO_ACK and refuses to continue if his table differs. Alice then
//! streams DISCLOSE frames while reading RESULT frames back, with at most
//! `window` blocks in flight; results must come back in disclosure order.
//! BYE ends the run. If the connection drops, every block still awaiting a
//! verdict counts as discarded.

use std::io::{BufReader, BufWriter, Read, Write};
use std::sync::mpsc;
use std::thread;

use thiserror::Error;

use super::wire::{read_frame, write_frame, Frame, WireError};
use super::{BobDecoder, Outcome, ReconcileError, ReconciliationSession};
use crate::channel::{ChannelModel, Observations};
use crate::construction::PolarCode;
use crate::polar_core::BitBlock;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("code table mismatch: local checksum {local:#018x} (n = {local_n}), peer {peer:#018x} (n = {peer_n})")]
    TableMismatch {
        local: u64,
        local_n: u8,
        peer: u64,
        peer_n: u8,
    },
    #[error("peer rejected the handshake")]
    HandshakeRejected,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("observations for block {block_id}: {reason}")]
    Observations { block_id: u64, reason: String },
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Reconcile(#[from] ReconcileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockVerdict {
    pub block_id: u64,
    pub outcome: Outcome,
    pub leakage_bits: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub verdicts: Vec<BlockVerdict>,
    /// Sum of `leakage_bits` over the DISCLOSE frames this side sent or received.
    pub leakage_bits: usize,
    /// Set when the connection dropped before BYE.
    pub interrupted: Option<String>,
}

impl RunSummary {
    pub fn verified(&self) -> usize {
        self.verdicts.iter().filter(|v| v.outcome == Outcome::Verified).count()
    }

    pub fn discarded(&self) -> usize {
        self.verdicts.len() - self.verified()
    }
}

/// Alice's side. `blocks` yields `(block_id, x)` pairs; ids must be distinct.
pub fn run_alice<R, W, I>(reader: R, writer: W, code: &PolarCode, blocks: I, window: usize) -> Result<RunSummary, NetError>
where
    R: Read,
    W: Write + Send,
    I: IntoIterator<Item = (u64, BitBlock)>,
    I::IntoIter: Send,
{
    let mut reader = BufReader::new(reader);
    let mut writer = BufWriter::new(writer);
    write_frame(
        &mut writer,
        &Frame::Hello {
            checksum: code.checksum(),
            n: code.n(),
        },
    )?;
    writer.flush().map_err(WireError::from)?;
    match read_frame(&mut reader)? {
        Some(Frame::HelloAck { accepted: true }) => {}
        Some(Frame::HelloAck { accepted: false }) => return Err(NetError::HandshakeRejected),
        Some(other) => return Err(NetError::Protocol(format!("expected HELLO_ACK, got {}", other.kind_name()))),
        None => return Err(NetError::Protocol("connection closed during handshake".into())),
    }

    let blocks = blocks.into_iter();
    let (tx, rx) = mpsc::sync_channel::<ReconciliationSession<'_>>(window.max(1));
    thread::scope(|scope| {
        let sender = scope.spawn(move || -> Result<(), NetError> {
            for (block_id, x) in blocks {
                let (session, disclosure) = ReconciliationSession::alice(code, block_id, &x)?;
                if tx.send(session).is_err() {
                    // the reader gave up; stop sending
                    return Ok(());
                }
                write_frame(&mut writer, &Frame::Disclose(disclosure))?;
                writer.flush().map_err(WireError::from)?;
            }
            drop(tx);
            write_frame(&mut writer, &Frame::Bye)?;
            writer.flush().map_err(WireError::from)?;
            Ok(())
        });

        let mut summary = RunSummary::default();
        let mut pending = rx.into_iter();
        while let Some(mut session) = pending.next() {
            let verdict = match read_frame(&mut reader) {
                Ok(Some(Frame::Result { block_id, outcome })) if block_id == session.block_id() => outcome,
                Ok(Some(Frame::Result { block_id, .. })) => {
                    return Err(NetError::Protocol(format!(
                        "RESULT for block {block_id} while waiting for {}",
                        session.block_id()
                    )));
                }
                Ok(Some(other)) => {
                    return Err(NetError::Protocol(format!("expected RESULT, got {}", other.kind_name())));
                }
                Ok(None) | Err(WireError::Io(_)) => {
                    let reason = "connection lost with blocks in flight".to_string();
                    log::warn!("{reason}");
                    summary.interrupted = Some(reason);
                    // this block and everything queued behind it is lost
                    for mut s in std::iter::once(session).chain(pending.by_ref()) {
                        s.settle(Outcome::Discarded)?;
                        summary.leakage_bits += s.leakage_bits();
                        summary.verdicts.push(BlockVerdict {
                            block_id: s.block_id(),
                            outcome: Outcome::Discarded,
                            leakage_bits: s.leakage_bits(),
                        });
                    }
                    break;
                }
                Err(e) => return Err(e.into()),
            };
            session.settle(verdict)?;
            log::debug!("block {} {:?}", session.block_id(), verdict);
            summary.leakage_bits += session.leakage_bits();
            summary.verdicts.push(BlockVerdict {
                block_id: session.block_id(),
                outcome: verdict,
                leakage_bits: session.leakage_bits(),
            });
        }
        drop(pending);
        match sender.join().expect("sender thread panicked") {
            Ok(()) => {}
            // a write failure after the peer vanished is already reported
            Err(NetError::Wire(WireError::Io(_))) if summary.interrupted.is_some() => {}
            Err(e) => return Err(e),
        }
        if summary.interrupted.is_none() {
            match read_frame(&mut reader) {
                Ok(Some(Frame::Bye)) | Ok(None) => {}
                Ok(Some(other)) => {
                    return Err(NetError::Protocol(format!("expected BYE, got {}", other.kind_name())));
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(summary)
    })
}

/// Bob's side. `observations` supplies his channel output for a block id;
/// `on_block` sees each verdict with the decoded estimate.
pub fn run_bob<R, W>(
    reader: R,
    writer: W,
    code: &PolarCode,
    channel: &ChannelModel,
    decoder: &mut BobDecoder,
    mut observations: impl FnMut(u64) -> Result<Observations, String>,
    mut on_block: impl FnMut(&BlockVerdict, &BitBlock),
) -> Result<RunSummary, NetError>
where
    R: Read,
    W: Write,
{
    let mut reader = BufReader::new(reader);
    let mut writer = BufWriter::new(writer);
    match read_frame(&mut reader)? {
        Some(Frame::Hello { checksum, n }) => {
            let ok = checksum == code.checksum() && n == code.n();
            write_frame(&mut writer, &Frame::HelloAck { accepted: ok })?;
            writer.flush().map_err(WireError::from)?;
            if !ok {
                return Err(NetError::TableMismatch {
                    local: code.checksum(),
                    local_n: code.n(),
                    peer: checksum,
                    peer_n: n,
                });
            }
        }
        Some(other) => return Err(NetError::Protocol(format!("expected HELLO, got {}", other.kind_name()))),
        None => return Err(NetError::Protocol("connection closed before HELLO".into())),
    }

    let mut summary = RunSummary::default();
    loop {
        let frame = match read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) | Err(WireError::Io(_)) => {
                summary.interrupted = Some("connection lost before BYE".into());
                return Ok(summary);
            }
            Err(e) => return Err(e.into()),
        };
        match frame {
            Frame::Disclose(d) => {
                if d.n != code.n() {
                    return Err(NetError::Protocol(format!("DISCLOSE for n = {}, code has n = {}", d.n, code.n())));
                }
                let mut session = ReconciliationSession::bob(code, &d)?;
                let obs = observations(d.block_id).map_err(|reason| NetError::Observations {
                    block_id: d.block_id,
                    reason,
                })?;
                let res = session.decode(decoder, &obs, channel)?;
                let verdict = BlockVerdict {
                    block_id: d.block_id,
                    outcome: res.outcome,
                    leakage_bits: session.leakage_bits(),
                };
                summary.leakage_bits += verdict.leakage_bits;
                summary.verdicts.push(verdict);
                on_block(&verdict, &res.estimate);
                write_frame(
                    &mut writer,
                    &Frame::Result {
                        block_id: d.block_id,
                        outcome: res.outcome,
                    },
                )?;
                writer.flush().map_err(WireError::from)?;
            }
            Frame::Bye => {
                write_frame(&mut writer, &Frame::Bye)?;
                writer.flush().map_err(WireError::from)?;
                return Ok(summary);
            }
            other => return Err(NetError::Protocol(format!("unexpected {} frame", other.kind_name()))),
        }
    }
}
