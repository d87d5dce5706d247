use std::io::{self, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use tungstenite::{Message, WebSocket};

use crate::protocol::{Ack, CommandMessage, Frame, Scene};
use relaymesh::sim::SteerCommand;

const POLL: Duration = Duration::from_millis(10);

/// A command received from a client, waiting for the next tick boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Inbound {
    pub client: u64,
    pub id: Option<u64>,
    pub command: SteerCommand,
}

struct Client {
    id: u64,
    tx: Sender<String>,
}

struct Shared {
    clients: Mutex<Vec<Client>>,
    stop: AtomicBool,
    next_client: AtomicU64,
    scene: String,
}

/// WebSocket server: one broadcaster, one command queue.
pub struct Bridge {
    addr: SocketAddr,
    shared: Arc<Shared>,
    inbox: Receiver<Inbound>,
    acceptor: Option<JoinHandle<()>>,
}

impl Bridge {
    /// Binds and starts accepting clients. Each new client first receives
    /// `scene`.
    pub fn bind(addr: impl ToSocketAddrs, scene: &Scene) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            clients: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
            next_client: AtomicU64::new(0),
            scene: serde_json::to_string(scene).expect("serializable"),
        });
        let (tx, inbox) = mpsc::channel();
        let acceptor = {
            let shared = shared.clone();
            thread::spawn(move || accept_loop(listener, shared, tx))
        };
        Ok(Self {
            addr,
            shared,
            inbox,
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn client_count(&self) -> usize {
        self.shared.clients.lock().expect("client list").len()
    }

    /// Queues `frame` for every connected client without waiting.
    pub fn broadcast(&self, frame: &Frame) {
        let text = serde_json::to_string(frame).expect("serializable");
        self.shared
            .clients
            .lock()
            .expect("client list")
            .retain(|c| c.tx.send(text.clone()).is_ok());
    }

    /// Every command received since the last call, in arrival order.
    pub fn drain(&self) -> Vec<Inbound> {
        self.inbox.try_iter().collect()
    }

    pub fn ack(&self, client: u64, ack: &Ack) {
        send_to(&self.shared, client, serde_json::to_string(ack).expect("serializable"));
    }
}

impl Drop for Bridge {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

fn send_to(shared: &Shared, client: u64, text: String) {
    let clients = shared.clients.lock().expect("client list");
    if let Some(c) = clients.iter().find(|c| c.id == client) {
        let _ = c.tx.send(text);
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, inbox: Sender<Inbound>) {
    let mut workers = Vec::new();
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let shared = shared.clone();
                let inbox = inbox.clone();
                workers.push(thread::spawn(move || {
                    if let Err(e) = client_loop(stream, &shared, &inbox) {
                        log::debug!("client {peer}: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn client_loop(stream: TcpStream, shared: &Shared, inbox: &Sender<Inbound>) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::Io(ErrorKind::WouldBlock.into()),
    })?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let id = shared.next_client.fetch_add(1, Ordering::SeqCst);
    let (tx, rx) = mpsc::channel();
    ws.send(Message::text(shared.scene.clone()))?;
    shared.clients.lock().expect("client list").push(Client { id, tx });
    let result = serve_client(&mut ws, id, shared, inbox, &rx);
    shared.clients.lock().expect("client list").retain(|c| c.id != id);
    let _ = ws.close(None);
    let _ = ws.flush();
    result
}

fn serve_client(
    ws: &mut WebSocket<TcpStream>,
    id: u64,
    shared: &Shared,
    inbox: &Sender<Inbound>,
    outgoing: &Receiver<String>,
) -> Result<(), tungstenite::Error> {
    while !shared.stop.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(text)) => match CommandMessage::parse(text.as_str()) {
                Ok(m) => {
                    let _ = inbox.send(Inbound {
                        client: id,
                        id: m.id,
                        command: m.command,
                    });
                }
                Err(reason) => ws.send(Message::text(serde_json::to_string(&Ack::rejected(None, reason)).expect("serializable")))?,
            },
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed) => return Ok(()),
            Err(e) => return Err(e),
        }
        for text in outgoing.try_iter() {
            ws.send(Message::text(text))?;
        }
    }
    Ok(())
}
