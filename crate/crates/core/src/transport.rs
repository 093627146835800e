//! MMIO over a byte stream.
//!
//! Frames (all fields little-endian):
//!
//! | request | bytes                         |
//! |---------|-------------------------------|
//! | WRITE32 | `01 addr[4] data[4]`          |
//! | READ32  | `02 addr[4]`, answered by `data[4]` |
//!
//! The pump decodes requests on its own thread and forwards them through a
//! [`Mailbox`] that the kernel drains once per tick, so the shell only ever
//! sees one writer.

use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use std::os::unix::net::UnixStream;

use crate::arch::{CommitRecord, InputScript};
use crate::image::ProgramImage;
use crate::kernel::{Kernel, KernelConfig, KernelError, RunOutcome, RunPredicate, RunSummary};
use crate::pshell::{ControlReg, Mmio, PShell};
use crate::timing::TimingError;
use crate::vps::{HostJob, Vps, VpsConfig};

pub const OP_WRITE32: u8 = 0x01;
pub const OP_READ32: u8 = 0x02;
pub const WRITE32_LEN: usize = 9;
pub const READ32_LEN: usize = 5;
pub const RESPONSE_LEN: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Request {
    Write32 { addr: u32, data: u32 },
    Read32 { addr: u32 },
}

impl Request {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(WRITE32_LEN);
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match *self {
            Request::Write32 { addr, data } => {
                out.push(OP_WRITE32);
                out.extend_from_slice(&addr.to_le_bytes());
                out.extend_from_slice(&data.to_le_bytes());
            }
            Request::Read32 { addr } => {
                out.push(OP_READ32);
                out.extend_from_slice(&addr.to_le_bytes());
            }
        }
    }

    pub fn apply(&self, shell: &mut PShell) -> Option<u32> {
        match *self {
            Request::Write32 { addr, data } => {
                shell.mmio_write(addr, data);
                None
            }
            Request::Read32 { addr } => Some(shell.mmio_read(addr)),
        }
    }
}

/// Incremental frame decoder. Bytes that cannot start a frame are skipped;
/// each run of skipped bytes counts as one protocol error.
#[derive(Clone, Debug, Default)]
pub struct Decoder {
    buf: Vec<u8>,
    errors: u64,
    skipping: bool,
}

impl Decoder {
    pub fn new() -> Decoder {
        Decoder::default()
    }

    pub fn errors(&self) -> u64 {
        self.errors
    }

    /// Bytes held back waiting for the rest of a frame.
    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn next_request(&mut self) -> Option<Request> {
        let mut skip = 0;
        while skip < self.buf.len() && !matches!(self.buf[skip], OP_WRITE32 | OP_READ32) {
            skip += 1;
        }
        if skip > 0 {
            if !self.skipping {
                self.errors += 1;
                self.skipping = true;
            }
            self.buf.drain(..skip);
        }
        let len = match self.buf.first()? {
            &OP_WRITE32 => WRITE32_LEN,
            _ => READ32_LEN,
        };
        if self.buf.len() < len {
            return None;
        }
        let word = |at: usize| u32::from_le_bytes(self.buf[at..at + 4].try_into().unwrap());
        let req = if len == WRITE32_LEN {
            Request::Write32 { addr: word(1), data: word(5) }
        } else {
            Request::Read32 { addr: word(1) }
        };
        self.buf.drain(..len);
        self.skipping = false;
        Some(req)
    }
}

/// Kernel-side end of the pump: requests in arrival order.
pub struct Mailbox {
    rx: Receiver<MailboxMsg>,
    held: Option<MailboxMsg>,
    disconnected: bool,
}

pub struct MailboxMsg {
    pub request: Request,
    pub reply: Option<Sender<u32>>,
}

#[derive(Clone)]
pub struct MailboxSender {
    tx: Sender<MailboxMsg>,
}

pub fn mailbox() -> (MailboxSender, Mailbox) {
    let (tx, rx) = mpsc::channel();
    (MailboxSender { tx }, Mailbox { rx, held: None, disconnected: false })
}

impl MailboxSender {
    /// Fire-and-forget write.
    pub fn write(&self, addr: u32, data: u32) -> bool {
        self.tx.send(MailboxMsg { request: Request::Write32 { addr, data }, reply: None }).is_ok()
    }

    /// Read that blocks the caller (not the kernel) until answered.
    pub fn read(&self, addr: u32) -> Option<u32> {
        let (tx, rx) = mpsc::channel();
        self.tx.send(MailboxMsg { request: Request::Read32 { addr }, reply: Some(tx) }).ok()?;
        rx.recv().ok()
    }
}

impl Mailbox {
    /// Applies every queued request without blocking. Returns how many.
    pub fn drain(&mut self, shell: &mut PShell) -> usize {
        let mut n = 0;
        loop {
            let msg = match self.held.take() {
                Some(m) => m,
                None => match self.rx.try_recv() {
                    Ok(m) => m,
                    Err(TryRecvError::Empty) => return n,
                    Err(TryRecvError::Disconnected) => {
                        self.disconnected = true;
                        return n;
                    }
                },
            };
            let value = msg.request.apply(shell);
            if let (Some(tx), Some(v)) = (msg.reply, value) {
                let _ = tx.send(v);
            }
            n += 1;
        }
    }

    /// Blocks up to `timeout` for the next request without applying it.
    pub fn wait(&mut self, timeout: Duration) {
        if self.held.is_some() || self.disconnected {
            return;
        }
        match self.rx.recv_timeout(timeout) {
            Ok(m) => self.held = Some(m),
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => self.disconnected = true,
        }
    }

    /// True once every sender is gone.
    pub fn disconnected(&self) -> bool {
        self.disconnected && self.held.is_none()
    }
}

/// Shared counters of a running pump.
#[derive(Debug, Default)]
pub struct BridgeStats {
    pub frames: AtomicU64,
    pub protocol_errors: AtomicU64,
}

/// Decodes frames from `input`, forwards them to the kernel and writes
/// READ32 responses to `output` in request order. Returns when the stream
/// closes or the kernel goes away.
pub fn bridge_pump<R: Read, W: Write>(
    mut input: R,
    mut output: W,
    mailbox: MailboxSender,
    stats: Arc<BridgeStats>,
) -> io::Result<()> {
    let mut dec = Decoder::new();
    let mut buf = [0u8; 4096];
    loop {
        let n = match input.read(&mut buf) {
            Ok(0) => return Ok(()),
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        dec.push(&buf[..n]);
        while let Some(req) = dec.next_request() {
            stats.frames.fetch_add(1, Ordering::Relaxed);
            match req {
                Request::Write32 { addr, data } => {
                    if !mailbox.write(addr, data) {
                        return Ok(());
                    }
                }
                Request::Read32 { addr } => match mailbox.read(addr) {
                    Some(v) => output.write_all(&v.to_le_bytes())?,
                    None => return Ok(()),
                },
            }
        }
        output.flush()?;
        stats.protocol_errors.store(dec.errors(), Ordering::Relaxed);
    }
}

/// Host-side MMIO over a byte stream.
pub struct BridgeClient<S> {
    stream: S,
    frame: Vec<u8>,
}

impl<S: Read + Write> BridgeClient<S> {
    pub fn new(stream: S) -> BridgeClient<S> {
        BridgeClient { stream, frame: Vec::with_capacity(WRITE32_LEN) }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

impl<S: Read + Write> Mmio for BridgeClient<S> {
    type Error = io::Error;

    fn write32(&mut self, addr: u32, data: u32) -> io::Result<()> {
        self.frame.clear();
        Request::Write32 { addr, data }.encode_into(&mut self.frame);
        self.stream.write_all(&self.frame)
    }

    fn read32(&mut self, addr: u32) -> io::Result<u32> {
        self.frame.clear();
        Request::Read32 { addr }.encode_into(&mut self.frame);
        self.stream.write_all(&self.frame)?;
        self.stream.flush()?;
        let mut resp = [0u8; RESPONSE_LEN];
        self.stream.read_exact(&mut resp)?;
        Ok(u32::from_le_bytes(resp))
    }
}

/// In-process MMIO through the mailbox, for a host agent on another thread.
pub struct MailboxClient(pub MailboxSender);

impl Mmio for MailboxClient {
    type Error = io::Error;

    fn write32(&mut self, addr: u32, data: u32) -> io::Result<()> {
        if self.0.write(addr, data) {
            Ok(())
        } else {
            Err(io::ErrorKind::BrokenPipe.into())
        }
    }

    fn read32(&mut self, addr: u32) -> io::Result<u32> {
        self.0.read(addr).ok_or_else(|| io::ErrorKind::BrokenPipe.into())
    }
}

const STATUS_HALTED: u32 = 1 << 1;

/// Drives a host agent over any MMIO link until the DUT has halted and
/// everything it produced has been drained.
pub fn run_remote_host<M: Mmio>(vps: &mut Vps, mmio: &mut M) -> Result<(), M::Error> {
    let mut now = 0u64;
    loop {
        now += 1;
        vps.deliver_due(now, mmio)?;
        if vps.poll(now, mmio)? == HostJob::Idle
            && !vps.has_pending_events()
            && mmio.read32(ControlReg::Status.addr())? & STATUS_HALTED != 0
            && vps.poll(now, mmio)? == HostJob::Idle
        {
            return Ok(());
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BridgeRunError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error("bridge i/o: {0}")]
    Io(#[from] io::Error),
    #[error("host agent thread panicked")]
    HostPanicked,
}

pub struct BridgedRun {
    pub outcome: RunOutcome,
    pub summary: RunSummary,
    /// DUT-side commit trace, when the config records it.
    pub commits: Vec<CommitRecord>,
    pub host: Vps,
    pub host_result: io::Result<()>,
    pub protocol_errors: u64,
}

/// Runs to halt with the host agent on its own thread, talking to the
/// kernel through the wire protocol over a socket pair.
pub fn run_bridged(
    image: &ProgramImage,
    input: &InputScript,
    config: KernelConfig,
) -> Result<BridgedRun, BridgeRunError> {
    let (client, server) = UnixStream::pair()?;
    let (tx, mb) = mailbox();
    let stats = Arc::new(BridgeStats::default());
    let reader = server.try_clone()?;
    let pump_stats = stats.clone();
    let pump = std::thread::spawn(move || bridge_pump(reader, server, tx, pump_stats));
    let mut vps = Vps::new(
        VpsConfig {
            dram: config.dram,
            seed: config.cost.seed,
            data_delay_max: config.cost.data_delay_max,
            lockstep: config.lockstep,
            record_commits: false,
        },
        image,
        input,
    )?;
    let host = std::thread::spawn(move || {
        let mut link = BridgeClient::new(client);
        let r = run_remote_host(&mut vps, &mut link);
        (vps, r)
    });
    let mut kernel = Kernel::new_bridged(image, input, config, mb)?;
    let outcome = kernel.run_until(RunPredicate::Halted);
    if outcome.is_err() {
        // Unblock the host agent so it can be joined.
        drop(kernel);
        let _ = host.join();
        let _ = pump.join();
        return Err(outcome.unwrap_err().into());
    }
    let (vps, host_result) = host.join().map_err(|_| BridgeRunError::HostPanicked)?;
    let _ = pump.join();
    Ok(BridgedRun {
        outcome: outcome?,
        summary: kernel.summary(),
        commits: kernel.commits().to_vec(),
        host: vps,
        host_result,
        protocol_errors: stats.protocol_errors.load(Ordering::Relaxed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pshell::{AddressMap, PShellConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_request(rng: &mut ChaCha8Rng) -> Request {
        if rng.gen_bool(0.5) {
            Request::Write32 { addr: rng.gen(), data: rng.gen() }
        } else {
            Request::Read32 { addr: rng.gen() }
        }
    }

    #[test]
    fn frame_layouts() {
        assert_eq!(
            Request::Write32 { addr: 0x4000_0000, data: 7 }.encode(),
            [0x01, 0x00, 0x00, 0x00, 0x40, 0x07, 0x00, 0x00, 0x00]
        );
        assert_eq!(Request::Read32 { addr: 0x4000_3004 }.encode(), [0x02, 0x04, 0x30, 0x00, 0x40]);
        assert_eq!(2u32.to_le_bytes(), [0x02, 0, 0, 0]);
    }

    #[test]
    fn random_chunking_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reqs: Vec<Request> = (0..1000).map(|_| random_request(&mut rng)).collect();
        let bytes: Vec<u8> = reqs.iter().flat_map(|r| r.encode()).collect();
        let mut dec = Decoder::new();
        let mut got = Vec::new();
        let mut at = 0;
        while at < bytes.len() {
            let n = rng.gen_range(1..=13).min(bytes.len() - at);
            dec.push(&bytes[at..at + n]);
            at += n;
            while let Some(r) = dec.next_request() {
                got.push(r);
            }
        }
        assert_eq!(got, reqs);
        assert_eq!(dec.errors(), 0);
        assert_eq!(dec.buffered(), 0);
    }

    #[test]
    fn garbage_is_skipped_and_counted() {
        let mut dec = Decoder::new();
        dec.push(&[0xAA, 0xBB, 0x00]);
        let frame = Request::Read32 { addr: 0x4000_4008 }.encode();
        dec.push(&frame);
        assert_eq!(dec.next_request(), Some(Request::Read32 { addr: 0x4000_4008 }));
        assert_eq!(dec.errors(), 1);
        dec.push(&[0x77]);
        assert_eq!(dec.next_request(), None);
        assert_eq!(dec.errors(), 2);
    }

    fn spawn_bridge(shell: PShell) -> (UnixStream, std::thread::JoinHandle<PShell>, Arc<BridgeStats>) {
        let (client, server) = UnixStream::pair().unwrap();
        let (tx, mut mb) = mailbox();
        let stats = Arc::new(BridgeStats::default());
        let st = stats.clone();
        let reader = server.try_clone().unwrap();
        std::thread::spawn(move || bridge_pump(reader, server, tx, st));
        let kernel = std::thread::spawn(move || {
            let mut shell = shell;
            while !mb.disconnected() {
                mb.drain(&mut shell);
                mb.wait(Duration::from_millis(1));
            }
            shell
        });
        (client, kernel, stats)
    }

    #[test]
    fn bridged_csr_matches_in_process() {
        let mut direct = PShell::new(PShellConfig::default()).unwrap();
        direct.mmio_write(AddressMap::csr_out(0), 0x1234);
        let expected = direct.mmio_read(AddressMap::csr_out(0));

        let (client, kernel, _) = spawn_bridge(PShell::new(PShellConfig::default()).unwrap());
        let mut c = BridgeClient::new(client);
        c.write32(AddressMap::csr_out(0), 0x1234).unwrap();
        assert_eq!(c.read32(AddressMap::csr_out(0)).unwrap(), expected);
        drop(c);
        let shell = kernel.join().unwrap();
        assert_eq!(shell.csr_out(0), 0x1234);
    }

    #[test]
    fn responses_follow_request_order() {
        let mut shell = PShell::new(PShellConfig { num_fifos_d2h: 2, ..Default::default() }).unwrap();
        shell.dut_fifo_push(0, 1);
        shell.dut_fifo_push(1, 1);
        shell.dut_fifo_push(1, 1);
        let (client, kernel, _) = spawn_bridge(shell);
        let mut c = BridgeClient::new(client);
        // pipeline both reads before reading either response
        let mut frames = Request::Read32 { addr: AddressMap::d2h_occupancy(0) }.encode();
        frames.extend(Request::Read32 { addr: AddressMap::d2h_occupancy(1) }.encode());
        let mut s = c.into_inner();
        s.write_all(&frames).unwrap();
        let mut resp = [0u8; 8];
        s.read_exact(&mut resp).unwrap();
        assert_eq!(resp, [1, 0, 0, 0, 2, 0, 0, 0]);
        c = BridgeClient::new(s);
        drop(c);
        kernel.join().unwrap();
    }

    #[test]
    fn pump_survives_garbage_and_resyncs() {
        let (client, kernel, stats) = spawn_bridge(PShell::new(PShellConfig::default()).unwrap());
        let mut s = client;
        s.write_all(&[0xEE, 0x13, 0x99]).unwrap();
        let mut c = BridgeClient::new(s);
        c.write32(AddressMap::csr_out(1), 5).unwrap();
        assert_eq!(c.read32(AddressMap::csr_out(1)).unwrap(), 5);
        assert!(stats.protocol_errors.load(Ordering::Relaxed) >= 1);
        drop(c);
        kernel.join().unwrap();
    }

    #[test]
    fn bridged_run_matches_in_process() {
        let img = crate::asm::assemble(
            "lui s0, 0x10000\nli s1, 6\nloop: lw t0, 0(s0)\nadd t1, t1, t0\naddi s0, s0, 4\naddi s1, s1, -1\nbnez s1, loop\nli a7, 1\nli a0, 33\necall\nli a7, 3\necall\n",
        )
        .unwrap();
        let cfg = KernelConfig { lockstep: true, record_commits: true, sample_interval: Some(3), fifo_depth: 2, ..Default::default() };
        let mut local = Kernel::new(&img, &InputScript::default(), cfg).unwrap();
        local.run_until(RunPredicate::Halted).unwrap();
        let bridged = run_bridged(&img, &InputScript::default(), cfg).unwrap();
        assert!(matches!(bridged.outcome, RunOutcome::Halted { .. }));
        bridged.host_result.as_ref().unwrap();
        assert_eq!(bridged.summary.dut_cycles, local.summary().dut_cycles);
        assert_eq!(bridged.commits, local.commits());
        assert_eq!(bridged.host.output, b"!");
        assert_eq!(bridged.host.samples, local.samples());
        let mut host = bridged.host;
        assert!(matches!(host.lockstep_mut().unwrap().finish(), crate::golden::LockstepVerdict::Clean { .. }));
    }
}
