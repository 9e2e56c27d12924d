//! Local socket service in front of a live twin.
//!
//! Clients speak line-delimited JSON over TCP. One simulation task owns the
//! twin and advances it on the configured clock; every client connection is
//! its own task and talks to the simulation task only through channels.
//!
//! Client to service:
//!
//! ```text
//! {"cmd":"auth","password":"mima1234"}
//! {"cmd":"set_level","level":"off"|"low"|"medium"|"high"}
//! {"cmd":"off"}
//! {"cmd":"ping"}
//! {"cmd":"power_cycle"}
//! ```
//!
//! Service to client:
//!
//! ```text
//! {"ev":"session","role":"controller"|"observer","status":"ok"|"busy"}
//! {"ev":"auth_result","ok":true}
//! {"ev":"mode","t":12.0,"mode":"heating","level":"high","target":50.0}
//! {"ev":"telemetry","t":13.0,"temps":[..3],"duties":[..3],"battery_mv":12345,
//!  "battery_wh":25.1,"mode":"heating","fault":"none","target":50.0}
//! {"ev":"fault","t":40.0,"code":"link_lost"}
//! {"ev":"error","message":"...","status":"busy"|"invalid"}
//! ```
//!
//! The first client to connect controls the device; later ones observe and
//! get `busy` for any command. The service forwards a heartbeat to the
//! device each simulated second only while the controlling client is
//! connected and has sent something (a `ping` will do) within the liveness
//! window, so a dead or silent app starves the device watchdog exactly as a
//! dropped Bluetooth link would.

use std::collections::BTreeMap;
use std::fs::File;
use std::future::Future;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::time::MissedTickBehavior;

use crate::controller::CONTROL_DT;
use crate::plant::Duties;
use crate::protocol::{make_auth, Frame, FrameType};
use crate::types::{FaultCode, Level, Mode};

use super::{CsvLogWriter, ScenarioConfig, Twin, TwinError, TICKS_PER_SECOND};

pub const ADDR_ENV: &str = "MIMA_TWIN_ADDR";
pub const DEFAULT_ADDR: &str = "127.0.0.1:7878";

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum ClientCommand {
    Auth { password: String },
    SetLevel { level: Level },
    Off,
    Ping,
    PowerCycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Controller,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum ServerEvent {
    Session {
        role: Role,
        status: String,
    },
    AuthResult {
        ok: bool,
    },
    Mode {
        t: f64,
        mode: Mode,
        level: Level,
        target: Option<f64>,
    },
    Telemetry {
        t: f64,
        temps: [f64; 3],
        duties: Duties,
        battery_mv: u16,
        battery_wh: f64,
        mode: Mode,
        fault: FaultCode,
        target: Option<f64>,
    },
    Fault {
        t: f64,
        code: FaultCode,
    },
    Error {
        message: String,
        status: String,
    },
}

impl ServerEvent {
    fn line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("event serialises");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceOptions {
    /// Simulated seconds the controlling client may stay silent before the
    /// service stops heartbeating on its behalf.
    pub client_liveness_s: f64,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self { client_liveness_s: 1.5 }
    }
}

/// Listen address from `MIMA_TWIN_ADDR`, else the default.
pub fn listen_addr_from_env() -> String {
    std::env::var(ADDR_ENV).unwrap_or_else(|_| DEFAULT_ADDR.to_string())
}

enum SessionMsg {
    Connect { id: u64, tx: mpsc::UnboundedSender<String> },
    Command { id: u64, cmd: ClientCommand },
    Disconnect { id: u64 },
}

pub struct TwinServer {
    listener: TcpListener,
    config: ScenarioConfig,
    options: ServiceOptions,
}

impl TwinServer {
    pub async fn bind(config: ScenarioConfig, addr: &str) -> Result<Self, TwinError> {
        config.validate()?;
        let listener = TcpListener::bind(addr).await.map_err(|e| TwinError::Io(format!("bind {addr}: {e}")))?;
        Ok(Self { listener, config, options: ServiceOptions::default() })
    }

    pub fn with_options(mut self, options: ServiceOptions) -> Self {
        self.options = options;
        self
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    /// Serve until `shutdown` resolves or the simulation fails.
    pub async fn run_until(self, shutdown: impl Future<Output = ()>) -> Result<(), TwinError> {
        let twin = Twin::new(self.config.twin_setup()?)?;
        let log = match &self.config.log_path {
            Some(path) => {
                let file = File::create(path).map_err(|e| TwinError::Io(format!("{}: {e}", path.display())))?;
                Some(CsvLogWriter::new(BufWriter::new(file))?)
            }
            None => None,
        };
        let (tx, rx) = mpsc::channel(256);
        let factor = self.config.time_mode.factor().unwrap_or(1.0);
        let sim = Simulation {
            twin,
            rx,
            sessions: BTreeMap::new(),
            controller: None,
            last_client_msg: f64::NEG_INFINITY,
            last_mode: None,
            log,
            options: self.options,
        };
        let listener = self.listener;
        let accept = async move {
            let mut next_id = 0u64;
            loop {
                match listener.accept().await {
                    Ok((stream, _)) => {
                        next_id += 1;
                        tokio::spawn(session(stream, next_id, tx.clone()));
                    }
                    Err(e) => eprintln!("accept failed: {e}"),
                }
            }
        };
        tokio::select! {
            res = sim.run(factor) => res,
            _ = accept => Ok(()),
            _ = shutdown => Ok(()),
        }
    }
}

/// Bind `addr` and serve until Ctrl-C.
pub async fn serve(config: ScenarioConfig, addr: &str) -> Result<(), TwinError> {
    let server = TwinServer::bind(config, addr).await?;
    eprintln!("mima-twin service listening on {}", server.local_addr());
    server
        .run_until(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn session(stream: TcpStream, id: u64, sim: mpsc::Sender<SessionMsg>) {
    let (read, mut write) = stream.into_split();
    let mut lines = BufReader::new(read).lines();
    let (tx, mut events) = mpsc::unbounded_channel::<String>();
    if sim.send(SessionMsg::Connect { id, tx: tx.clone() }).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            line = lines.next_line() => match line {
                Ok(Some(line)) if line.trim().is_empty() => {}
                Ok(Some(line)) => match serde_json::from_str::<ClientCommand>(&line) {
                    Ok(cmd) => {
                        if sim.send(SessionMsg::Command { id, cmd }).await.is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let ev = ServerEvent::Error { message: format!("malformed message: {e}"), status: "invalid".into() };
                        let _ = tx.send(ev.line());
                    }
                },
                _ => break,
            },
            ev = events.recv() => match ev {
                Some(line) => {
                    if write.write_all(line.as_bytes()).await.is_err() {
                        break;
                    }
                }
                None => break,
            },
        }
    }
    let _ = sim.send(SessionMsg::Disconnect { id }).await;
}

struct Simulation {
    twin: Twin,
    rx: mpsc::Receiver<SessionMsg>,
    sessions: BTreeMap<u64, mpsc::UnboundedSender<String>>,
    controller: Option<u64>,
    last_client_msg: f64,
    last_mode: Option<Mode>,
    log: Option<CsvLogWriter<BufWriter<File>>>,
    options: ServiceOptions,
}

impl Simulation {
    async fn run(mut self, factor: f64) -> Result<(), TwinError> {
        let mut interval = tokio::time::interval(Duration::from_secs_f64(CONTROL_DT / factor));
        interval.set_missed_tick_behavior(MissedTickBehavior::Burst);
        loop {
            interval.tick().await;
            self.tick()?;
        }
    }

    fn send_to(&self, id: u64, ev: &ServerEvent) {
        if let Some(tx) = self.sessions.get(&id) {
            let _ = tx.send(ev.line());
        }
    }

    fn broadcast(&self, ev: &ServerEvent) {
        let line = ev.line();
        for tx in self.sessions.values() {
            let _ = tx.send(line.clone());
        }
    }

    fn handle(&mut self, msg: SessionMsg, now: f64) {
        match msg {
            SessionMsg::Connect { id, tx } => {
                self.sessions.insert(id, tx);
                let (role, status) = if self.controller.is_none() {
                    self.controller = Some(id);
                    self.last_client_msg = now;
                    (Role::Controller, "ok")
                } else {
                    (Role::Observer, "busy")
                };
                self.send_to(id, &ServerEvent::Session { role, status: status.into() });
            }
            SessionMsg::Disconnect { id } => {
                self.sessions.remove(&id);
                if self.controller == Some(id) {
                    self.controller = None;
                }
            }
            SessionMsg::Command { id, cmd } => {
                if self.controller != Some(id) {
                    self.send_to(
                        id,
                        &ServerEvent::Error {
                            message: "another session controls the device".into(),
                            status: "busy".into(),
                        },
                    );
                    return;
                }
                self.last_client_msg = now;
                let frame = match cmd {
                    ClientCommand::Auth { password } => match make_auth(&password) {
                        Ok(f) => Some(f),
                        Err(e) => {
                            self.send_to(id, &ServerEvent::Error { message: e.to_string(), status: "invalid".into() });
                            None
                        }
                    },
                    ClientCommand::SetLevel { level } => Some(Frame::set_level(level)),
                    ClientCommand::Off => Some(Frame::set_level(Level::Off)),
                    ClientCommand::Ping => None,
                    ClientCommand::PowerCycle => {
                        self.twin.power_cycle();
                        None
                    }
                };
                if let Some(frame) = frame {
                    self.twin.app_send(&frame, now);
                }
            }
        }
    }

    fn tick(&mut self) -> Result<(), TwinError> {
        let now = self.twin.now();
        while let Ok(msg) = self.rx.try_recv() {
            self.handle(msg, now);
        }
        let client_alive = self.controller.is_some() && now - self.last_client_msg <= self.options.client_liveness_s;
        if client_alive && self.twin.tick_index().is_multiple_of(TICKS_PER_SECOND) {
            self.twin.app_send(&Frame::heartbeat(), now);
        }

        let record = self.twin.step()?;
        if let (Some(log), Some(row)) = (self.log.as_mut(), record.telemetry.as_ref()) {
            log.append(row)?;
            log.flush()?;
        }

        for frame in self.twin.app_receive(now) {
            self.relay(&frame, now);
        }
        Ok(())
    }

    /// Translate a device frame into client events.
    fn relay(&mut self, frame: &Frame, now: f64) {
        let ctrl = self.twin.controller();
        let level = ctrl.active_preset;
        match frame.frame_type() {
            FrameType::AuthAck => {
                let ok = frame.as_auth_status().unwrap_or(false);
                self.broadcast(&ServerEvent::AuthResult { ok });
            }
            FrameType::Ack => {
                if let Some((_, Some(mode), Some(level))) = frame.as_ack() {
                    self.last_mode = Some(mode);
                    let target = if mode == Mode::Heating { level.target_temp() } else { None };
                    self.broadcast(&ServerEvent::Mode { t: now, mode, level, target });
                }
            }
            FrameType::FaultEvt => {
                let code = frame.as_fault().unwrap_or(FaultCode::None);
                self.broadcast(&ServerEvent::Fault { t: now, code });
            }
            FrameType::Telemetry => {
                let Some(t) = frame.as_telemetry() else { return };
                let mode = Mode::from_byte(t.mode).unwrap_or(Mode::Fault);
                let target = if mode == Mode::Heating { level.target_temp() } else { None };
                let duties = ctrl.duties;
                let battery_wh = self.twin.plant().battery_remaining;
                if self.last_mode != Some(mode) {
                    self.last_mode = Some(mode);
                    self.broadcast(&ServerEvent::Mode { t: now, mode, level, target });
                }
                self.broadcast(&ServerEvent::Telemetry {
                    t: now,
                    temps: t.zone_temps_c(),
                    duties,
                    battery_mv: t.battery_mv,
                    battery_wh,
                    mode,
                    fault: FaultCode::from_flags(t.fault_flags),
                    target,
                });
            }
            _ => {}
        }
    }
}
