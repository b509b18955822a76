use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::run::{tick_counts, RunOutput, Session};
use super::scenario::Scenario;
use super::HarnessError;
use crate::scalar::Real;
use crate::simulator::SimError;
use crate::trajectory::{CommandMailbox, WireDecoder};

const POLL: Duration = Duration::from_millis(20);

/// A bound streaming socket. Clients send wire-format records, one per
/// line; each complete command is applied on arrival (the `t=` field of
/// `SP` and `TRAJ` is ignored). Malformed lines get an `ERR` reply.
pub struct Server {
    listener: TcpListener,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self, HarnessError> {
        Ok(Self { listener: TcpListener::bind(addr)? })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, HarnessError> {
        Ok(self.listener.local_addr()?)
    }

    /// Runs the scenario paced to wall-clock time while accepting clients.
    pub fn run<T>(self, sc: &Scenario<T>, seed: Option<u64>) -> Result<RunOutput, HarnessError>
    where
        T: Real + Send + Sync,
    {
        let (steps, ticks) = tick_counts(sc);
        let mut session = Session::new(sc, seed.unwrap_or(sc.seed), ticks)?;
        let stop = Arc::new(AtomicBool::new(false));
        self.listener.set_nonblocking(true)?;
        let acceptor = {
            let stop = Arc::clone(&stop);
            let mailbox = Arc::clone(&session.mailbox);
            let listener = self.listener;
            thread::spawn(move || accept_loop(listener, mailbox, stop))
        };

        let dt = Duration::from_secs_f64(sc.dt.as_f64());
        let start = Instant::now();
        let mut diverged = None;
        for k in 0..ticks {
            if let Some(wait) = (start + dt * k as u32).checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
            if let Err(e) = session.tick(k, k < steps) {
                match e {
                    SimError::Divergence { t } => diverged = Some(t),
                    other => {
                        stop.store(true, Ordering::Relaxed);
                        return Err(HarnessError::Runtime(other.to_string()));
                    }
                }
                break;
            }
        }
        stop.store(true, Ordering::Relaxed);
        let _ = acceptor.join();
        session.finish(diverged, None)
    }
}

fn accept_loop<T: Real + Send + Sync>(listener: TcpListener, mailbox: Arc<CommandMailbox<T>>, stop: Arc<AtomicBool>) {
    let mut clients = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                let mailbox = Arc::clone(&mailbox);
                let stop = Arc::clone(&stop);
                clients.push(thread::spawn(move || {
                    let _ = client_loop(stream, &mailbox, &stop);
                }));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(_) => thread::sleep(POLL),
        }
    }
    for c in clients {
        let _ = c.join();
    }
}

fn client_loop<T: Real>(stream: TcpStream, mailbox: &CommandMailbox<T>, stop: &AtomicBool) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut decoder = WireDecoder::<T>::new();
    let mut line = String::new();
    while !stop.load(Ordering::Relaxed) {
        match reader.read_line(&mut line) {
            Ok(0) => return Ok(()),
            Ok(_) => {
                match decoder.push_line(&line) {
                    Ok(Some(cmd)) => mailbox.send(cmd.command),
                    Ok(None) => {}
                    Err(e) => writeln!(writer, "ERR {e}")?,
                }
                line.clear();
            }
            // A timeout may leave a partial line in `line`; keep it and read on.
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
