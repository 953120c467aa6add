//! Parsing of client command lines.

use agentmesh_messenger::UserFilter;
use agentmesh_store::Target;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    /// `None` reconnects to the last server.
    Connect(Option<String>),
    Servers,
    Register { name: String, password: String },
    Login { name: Option<String>, password: String },
    Logout,
    Users { filter: UserFilter, group: Option<String> },
    Chats,
    Groups,
    Members(String),
    History { peer: Target, limit: usize },
    MkGroup(String),
    JoinAdd { user: String, group: String },
    Leave(String),
    Block { user: String, reason: Option<String> },
    Unblock(String),
    Send { peer: Target, text: String },
    Del(u64),
    DelConv(String),
    Pos { lat: f64, lon: f64 },
    Fence { label: String, lat: f64, lon: f64, radius_m: f64 },
    Suggest(String),
    AutoUnblock(bool),
    /// Waits up to the given seconds for pushed events.
    Inbox(f64),
    Help,
    Quit,
}

pub const HELP: &str = "\
connect [<server-name>|<host:port>]   connect (no argument: last server)
servers                               list the server directory
register <name> <password>            create an account
login [<name>] <password>             log in (name defaults to the last user)
logout
users [all|blocked|notin <group>]     list users and their status
chats                                 direct conversations, newest first
groups                                group conversations, newest first
members <group>                       group roster with statuses
history <peer> [limit]                conversation with a user or #group
mkgroup <group>                       create a group
join-add <user> <group>               add a user to a group you belong to
leave <group>
block <user> [reason]                 harassment, impersonation, offensive-language, spam,
                                      unwanted-contact or free text
unblock <user>
send <peer> <text>                    peer is a user name or #group
del <id>                              delete a message for yourself
delconv <user>                        delete a direct conversation for yourself
pos <lat> <lon>                       report your position
fence <label> <lat> <lon> <radius-m>  watch a circular area on this client
suggest <prefix>                      phrase completions
autounblock on|off                    let good reputation lift your blocks
inbox [seconds]                       show pushed messages and notices
help
quit";

/// A user name, or `#name` for a group.
pub fn parse_peer(s: &str) -> Result<Target, CliError> {
    match s.strip_prefix('#') {
        Some("") => Err(CliError::Usage("#<group>")),
        Some(g) => Ok(Target::Group(g.to_string())),
        None => Ok(Target::User(s.to_string())),
    }
}

fn group_arg(s: &str) -> String {
    s.strip_prefix('#').unwrap_or(s).to_string()
}

fn split_word(s: &str) -> (&str, &str) {
    let s = s.trim_start();
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim_start()),
        None => (s, ""),
    }
}

fn number<T: std::str::FromStr>(s: &str, usage: &'static str) -> Result<T, CliError> {
    s.parse().map_err(|_| CliError::Usage(usage))
}

/// Parses one line. Blank lines and lines starting with `//` are `None`.
pub fn parse_command(line: &str) -> Result<Option<Command>, CliError> {
    let line = line.trim();
    if line.is_empty() || line.starts_with("//") {
        return Ok(None);
    }
    let (verb, rest) = split_word(line);
    let args: Vec<&str> = rest.split_whitespace().collect();
    let exact = |n: usize, usage: &'static str| if args.len() == n { Ok(()) } else { Err(CliError::Usage(usage)) };
    let cmd = match verb {
        "connect" => match args.as_slice() {
            [] => Command::Connect(None),
            [s] => Command::Connect(Some(s.to_string())),
            _ => return Err(CliError::Usage("connect [<server-name>|<host:port>]")),
        },
        "servers" => Command::Servers,
        "register" => {
            exact(2, "register <name> <password>")?;
            Command::Register { name: args[0].into(), password: args[1].into() }
        }
        "login" => match args.as_slice() {
            [p] => Command::Login { name: None, password: p.to_string() },
            [n, p] => Command::Login { name: Some(n.to_string()), password: p.to_string() },
            _ => return Err(CliError::Usage("login [<name>] <password>")),
        },
        "logout" => Command::Logout,
        "users" => match args.as_slice() {
            [] | ["all"] => Command::Users { filter: UserFilter::All, group: None },
            ["blocked"] => Command::Users { filter: UserFilter::Blocked, group: None },
            ["notin", g] => Command::Users { filter: UserFilter::NotInGroup, group: Some(group_arg(g)) },
            _ => return Err(CliError::Usage("users [all|blocked|notin <group>]")),
        },
        "chats" => Command::Chats,
        "groups" => Command::Groups,
        "members" => {
            exact(1, "members <group>")?;
            Command::Members(group_arg(args[0]))
        }
        "history" => match args.as_slice() {
            [p] => Command::History { peer: parse_peer(p)?, limit: 50 },
            [p, n] => Command::History { peer: parse_peer(p)?, limit: number(n, "history <peer> [limit]")? },
            _ => return Err(CliError::Usage("history <peer> [limit]")),
        },
        "mkgroup" => {
            exact(1, "mkgroup <group>")?;
            Command::MkGroup(group_arg(args[0]))
        }
        "join-add" => {
            exact(2, "join-add <user> <group>")?;
            Command::JoinAdd { user: args[0].into(), group: group_arg(args[1]) }
        }
        "leave" => {
            exact(1, "leave <group>")?;
            Command::Leave(group_arg(args[0]))
        }
        "block" => {
            let (user, reason) = split_word(rest);
            if user.is_empty() {
                return Err(CliError::Usage("block <user> [reason]"));
            }
            Command::Block { user: user.into(), reason: (!reason.is_empty()).then(|| reason.to_string()) }
        }
        "unblock" => {
            exact(1, "unblock <user>")?;
            Command::Unblock(args[0].into())
        }
        "send" => {
            let (peer, text) = split_word(rest);
            if peer.is_empty() || text.is_empty() {
                return Err(CliError::Usage("send <peer> <text>"));
            }
            Command::Send { peer: parse_peer(peer)?, text: text.to_string() }
        }
        "del" => {
            exact(1, "del <id>")?;
            Command::Del(number(args[0].trim_start_matches('#'), "del <id>")?)
        }
        "delconv" => {
            exact(1, "delconv <user>")?;
            Command::DelConv(args[0].into())
        }
        "pos" => {
            exact(2, "pos <lat> <lon>")?;
            Command::Pos { lat: number(args[0], "pos <lat> <lon>")?, lon: number(args[1], "pos <lat> <lon>")? }
        }
        "fence" => {
            const USAGE: &str = "fence <label> <lat> <lon> <radius-m>";
            exact(4, USAGE)?;
            Command::Fence {
                label: args[0].into(),
                lat: number(args[1], USAGE)?,
                lon: number(args[2], USAGE)?,
                radius_m: number(args[3], USAGE)?,
            }
        }
        "suggest" => Command::Suggest(rest.to_string()),
        "autounblock" => match args.as_slice() {
            ["on"] => Command::AutoUnblock(true),
            ["off"] => Command::AutoUnblock(false),
            _ => return Err(CliError::Usage("autounblock on|off")),
        },
        "inbox" => match args.as_slice() {
            [] => Command::Inbox(0.0),
            [s] => Command::Inbox(number(s, "inbox [seconds]")?),
            _ => return Err(CliError::Usage("inbox [seconds]")),
        },
        "help" | "?" => Command::Help,
        "quit" | "exit" => Command::Quit,
        other => return Err(CliError::UnknownCommand(other.to_string())),
    };
    Ok(Some(cmd))
}
