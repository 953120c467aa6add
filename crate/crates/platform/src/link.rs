use std::io::{BufWriter, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender};
use std::thread::{self, JoinHandle};

use agentmesh_acl::{encode_frame, AclMessage};

use crate::PlatformError;

enum Outbound {
    Frame(Vec<u8>),
    Close,
}

/// Write half of a container connection.
///
/// Frames are queued and written by a dedicated thread, so senders never
/// block on the network and frames leave in the order they were queued.
pub(crate) struct Link {
    tx: Sender<Outbound>,
    stream: TcpStream,
    writer: Option<JoinHandle<()>>,
}

impl Link {
    pub(crate) fn new(stream: &TcpStream) -> std::io::Result<Link> {
        let write_half = stream.try_clone()?;
        let (tx, rx) = mpsc::channel();
        let writer = thread::Builder::new()
            .name("link-writer".into())
            .spawn(move || write_loop(write_half, rx))?;
        Ok(Link { tx, stream: stream.try_clone()?, writer: Some(writer) })
    }

    pub(crate) fn send(&self, msg: &AclMessage) -> Result<(), PlatformError> {
        let frame = encode_frame(msg)?;
        self.tx.send(Outbound::Frame(frame)).map_err(|_| PlatformError::ContainerGone)
    }

    /// Flushes queued frames, then closes the connection.
    pub(crate) fn close(&self) {
        if self.tx.send(Outbound::Close).is_err() {
            let _ = self.stream.shutdown(Shutdown::Both);
        }
    }

    /// Drops the connection immediately, discarding queued frames.
    pub(crate) fn abort(&self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

impl Drop for Link {
    fn drop(&mut self) {
        let _ = self.tx.send(Outbound::Close);
        if let Some(h) = self.writer.take() {
            if h.thread().id() != thread::current().id() {
                let _ = h.join();
            }
        }
    }
}

fn write_loop(stream: TcpStream, rx: Receiver<Outbound>) {
    let mut out = BufWriter::new(&stream);
    'outer: while let Ok(item) = rx.recv() {
        let mut next = Some(item);
        // Batch whatever is already queued into one flush.
        while let Some(item) = next.take() {
            match item {
                Outbound::Frame(bytes) => {
                    if out.write_all(&bytes).is_err() {
                        break 'outer;
                    }
                }
                Outbound::Close => {
                    let _ = out.flush();
                    break 'outer;
                }
            }
            next = rx.try_recv().ok();
        }
        if out.flush().is_err() {
            break;
        }
    }
    let _ = out.flush();
    drop(out);
    let _ = stream.shutdown(Shutdown::Both);
}
