use std::path::PathBuf;
use std::time::Duration;

use agentmesh_messenger::{ChatClient, ConversationKind};
use agentmesh_sensitivity::servers::find_server;
use agentmesh_sensitivity::{geofence_check, list_servers, FenceState, Geofence};
use agentmesh_store::GeoPoint;

use crate::command::{parse_command, Command, HELP};
use crate::config::ClientConfig;
use crate::error::CliError;
use crate::render::Renderer;

/// Result of one command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// Text to show, possibly empty.
    Output(String),
    Quit,
}

type Confirm = Box<dyn FnMut(&str) -> bool + Send>;

/// A client session driven one command line at a time.
pub struct Shell {
    client: Option<ChatClient>,
    config: ClientConfig,
    config_path: Option<PathBuf>,
    renderer: Renderer,
    assume_yes: bool,
    confirm: Confirm,
    fences: Vec<Geofence>,
    fence_state: FenceState,
}

/// Splits `host:port`; anything else is a server name.
fn host_port(s: &str) -> Option<(String, u16)> {
    let (host, port) = s.rsplit_once(':')?;
    Some((host.to_string(), port.parse().ok()?))
}

impl Shell {
    pub fn new(config: ClientConfig, config_path: Option<PathBuf>, renderer: Renderer) -> Shell {
        Shell {
            client: None,
            config,
            config_path,
            renderer,
            assume_yes: false,
            confirm: Box::new(|_| false),
            fences: Vec::new(),
            fence_state: FenceState::default(),
        }
    }

    /// Skip confirmation of deletions.
    pub fn assume_yes(mut self, yes: bool) -> Shell {
        self.assume_yes = yes;
        self
    }

    /// Asks before deletions; without it deletions are cancelled unless
    /// `assume_yes` is set.
    pub fn with_confirm(mut self, confirm: impl FnMut(&str) -> bool + Send + 'static) -> Shell {
        self.confirm = Box::new(confirm);
        self
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn user(&self) -> Option<&str> {
        self.client.as_ref().and_then(|c| c.user())
    }

    pub fn is_connected(&self) -> bool {
        self.client.as_ref().is_some_and(|c| c.is_connected())
    }

    fn client(&mut self) -> Result<&mut ChatClient, CliError> {
        match &mut self.client {
            Some(c) if c.is_connected() => Ok(c),
            _ => Err(CliError::NotConnected("connect to a server first")),
        }
    }

    fn session(&mut self) -> Result<(&mut ChatClient, String), CliError> {
        let client = self.client()?;
        let user = client.user().ok_or(CliError::NotConnected("log in first"))?.to_string();
        Ok((client, user))
    }

    fn save_config(&self) -> Result<(), CliError> {
        match &self.config_path {
            Some(p) => self.config.save(p),
            None => Ok(()),
        }
    }

    fn confirmed(&mut self, question: &str) -> bool {
        self.assume_yes || (self.confirm)(question)
    }

    /// Connects to `host:port` and remembers it as the last server.
    pub fn connect(&mut self, host: &str, port: u16) -> Result<String, CliError> {
        self.client = None;
        let client = ChatClient::connect((host, port))?;
        self.client = Some(client);
        self.config.host = Some(host.to_string());
        self.config.port = Some(port);
        self.save_config()?;
        Ok(format!("connected to {host}:{port}\n"))
    }

    /// Parses and runs one line.
    pub fn run(&mut self, line: &str) -> Result<Outcome, CliError> {
        match parse_command(line)? {
            Some(cmd) => self.execute(cmd),
            None => Ok(Outcome::Output(String::new())),
        }
    }

    pub fn execute(&mut self, cmd: Command) -> Result<Outcome, CliError> {
        let out = match cmd {
            Command::Connect(target) => {
                let (host, port) = match target {
                    None => self.config.last_server().ok_or(CliError::Usage("connect <server-name>|<host:port>"))?,
                    Some(t) => match host_port(&t) {
                        Some(hp) => hp,
                        None => {
                            let path = self.config.servers.clone().ok_or(CliError::UnknownServer(t.clone()))?;
                            let entries = list_servers(&path)?;
                            let e = find_server(&entries, &t).ok_or(CliError::UnknownServer(t.clone()))?;
                            (e.host.clone(), e.port)
                        }
                    },
                };
                self.connect(&host, port)?
            }
            Command::Servers => {
                let entries = match &self.config.servers {
                    Some(p) => list_servers(p)?,
                    None => Vec::new(),
                };
                entries.iter().map(|e| format!("{:<20} {}:{}\n", e.display_name, e.host, e.port)).collect()
            }
            Command::Register { name, password } => {
                self.client()?.register(&name, &password)?;
                format!("registered {name}\n")
            }
            Command::Login { name, password } => {
                let name = name
                    .or_else(|| self.config.user_name.clone())
                    .ok_or(CliError::Usage("login <name> <password>"))?;
                self.client()?.login(&name, &password)?;
                self.config.user_name = Some(name.clone());
                self.save_config()?;
                format!("logged in as {name}\n")
            }
            Command::Logout => {
                self.client()?.logout()?;
                "logged out\n".into()
            }
            Command::Users { filter, group } => {
                let (c, _) = self.session()?;
                let users = c.list_users(filter, group.as_deref())?;
                self.renderer.users(&users)
            }
            Command::Chats => {
                let (c, _) = self.session()?;
                let convs = c.list_conversations(ConversationKind::Direct)?;
                self.renderer.conversations(&convs)
            }
            Command::Groups => {
                let (c, _) = self.session()?;
                let convs = c.list_conversations(ConversationKind::Group)?;
                self.renderer.conversations(&convs)
            }
            Command::Members(group) => {
                let (c, _) = self.session()?;
                let users = c.list_group_members(&group)?;
                self.renderer.users(&users)
            }
            Command::History { peer, limit } => {
                let (c, me) = self.session()?;
                let msgs = c.fetch_history(&peer, limit, None)?;
                self.renderer.conversation(&msgs, &me)
            }
            Command::MkGroup(group) => {
                let (c, _) = self.session()?;
                let g = c.create_group(&group)?;
                format!("created #{}\n", g.group_name)
            }
            Command::JoinAdd { user, group } => {
                let (c, _) = self.session()?;
                c.add_to_group(&user, &group)?;
                format!("added {user} to #{group}\n")
            }
            Command::Leave(group) => {
                let (c, _) = self.session()?;
                c.leave_group(&group)?;
                format!("left #{group}\n")
            }
            Command::Block { user, reason } => {
                let (c, _) = self.session()?;
                c.block_user(&user, reason.as_deref())?;
                format!("blocked {user}\n")
            }
            Command::Unblock(user) => {
                let (c, _) = self.session()?;
                c.unblock_user(&user)?;
                format!("unblocked {user}\n")
            }
            Command::Send { peer, text } => {
                let (c, me) = self.session()?;
                let m = c.send_message(&peer, &text)?;
                self.renderer.message(&m, &me) + "\n"
            }
            Command::Del(id) => {
                self.session()?;
                if !self.confirmed(&format!("delete message #{id} for you?")) {
                    return Err(CliError::Cancelled);
                }
                self.session()?.0.delete_message(id)?;
                format!("deleted #{id}\n")
            }
            Command::DelConv(user) => {
                self.session()?;
                if !self.confirmed(&format!("delete the whole conversation with {user} for you?")) {
                    return Err(CliError::Cancelled);
                }
                let n = self.session()?.0.delete_conversation(&user)?;
                format!("deleted {n} messages with {user}\n")
            }
            Command::Pos { lat, lon } => {
                let point = GeoPoint::new(lat, lon).map_err(|_| CliError::Usage("pos <lat> <lon> within range"))?;
                self.session()?.0.report_position(lat, lon)?;
                let mut out = String::from("position reported\n");
                for fence in &self.fences {
                    if let Some(e) = geofence_check(&mut self.fence_state, fence, point) {
                        out.push_str(&format!("entered {} ({:.0} m from center)\n", e.label, e.distance_m));
                    }
                }
                out
            }
            Command::Fence { label, lat, lon, radius_m } => {
                let center = GeoPoint::new(lat, lon).map_err(|_| CliError::Usage("fence center out of range"))?;
                let fence = Geofence::new(label.clone(), center, radius_m)?;
                self.fences.retain(|f| f.label != label);
                self.fences.push(fence);
                format!("watching {label}\n")
            }
            Command::Suggest(prefix) => {
                let (c, _) = self.session()?;
                c.suggest(&prefix, 5)?.into_iter().map(|s| s + "\n").collect()
            }
            Command::AutoUnblock(on) => {
                let (c, _) = self.session()?;
                c.set_auto_unblock(on)?;
                format!("auto-unblock {}\n", if on { "on" } else { "off" })
            }
            Command::Inbox(secs) => self.inbox(Duration::from_secs_f64(secs.max(0.0)))?,
            Command::Help => format!("{HELP}\n"),
            Command::Quit => return Ok(Outcome::Quit),
        };
        Ok(Outcome::Output(out))
    }

    /// Rendered events already waiting, without blocking.
    pub fn pending_events(&mut self) -> String {
        let Some(c) = &self.client else { return String::new() };
        let me = c.user().unwrap_or_default().to_string();
        c.drain_events().iter().map(|e| self.renderer.event(e, &me) + "\n").collect()
    }

    /// Waits up to `wait` for a first event, then collects until the
    /// stream has been quiet briefly.
    fn inbox(&mut self, wait: Duration) -> Result<String, CliError> {
        const QUIET: Duration = Duration::from_millis(250);
        const MAX_EVENTS: usize = 1000;
        let (c, me) = self.session()?;
        let mut events: Vec<_> = c.next_event(wait).into_iter().collect();
        if !events.is_empty() {
            while let Some(e) = c.next_event(QUIET) {
                events.push(e);
                if events.len() >= MAX_EVENTS {
                    break;
                }
            }
        }
        Ok(events.iter().map(|e| self.renderer.event(e, &me) + "\n").collect())
    }
}
