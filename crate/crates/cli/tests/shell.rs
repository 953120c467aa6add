use std::sync::Arc;
use std::time::Duration;

use agentmesh_cli::{ClientConfig, CliError, Outcome, Renderer, Shell};
use agentmesh_messenger::{ChatServer, ManualClock, ServerConfig, ServiceConfig};
use agentmesh_platform::PlatformConfig;

const T0: u64 = 1_000_000;
const STAMP: &str = "1970-01-01T00:16:40+00:00";

fn server() -> ChatServer {
    ChatServer::start(ServerConfig {
        platform: PlatformConfig { port: 0, ..PlatformConfig::default() },
        service: ServiceConfig { pbkdf2_rounds: 1, ..ServiceConfig::default() },
        maintenance_interval: None,
        clock: Arc::new(ManualClock::new(T0)),
        ..ServerConfig::default()
    })
    .unwrap()
}

fn shell() -> Shell {
    Shell::new(ClientConfig::default(), None, Renderer { width: 40, offset: Renderer::utc().offset }).assume_yes(true)
}

fn out(shell: &mut Shell, line: &str) -> String {
    match shell.run(line) {
        Ok(Outcome::Output(s)) => s,
        other => panic!("{line}: {other:?}"),
    }
}

/// Runs each line, echoing it like `chat --script` does.
fn transcript(shell: &mut Shell, lines: &[&str]) -> String {
    lines.iter().map(|l| format!("> {l}\n{}", out(shell, l))).collect()
}

/// Pushed events rendered by `inbox`, waiting until `n` lines arrived.
fn inbox(shell: &mut Shell, n: usize) -> String {
    let mut got = String::new();
    for _ in 0..20 {
        got.push_str(&out(shell, "inbox 0.5"));
        if got.lines().count() >= n {
            break;
        }
    }
    got
}

fn right(text: &str) -> String {
    format!("{text:>40}")
}

#[test]
fn scripted_two_client_session() {
    let server = server();
    let addr = server.address();
    let (mut alice, mut bob) = (shell(), shell());

    let connect = format!("connect 127.0.0.1:{}", addr.port());
    let a = transcript(&mut alice, &[&connect, "register alice pass1", "login alice pass1"]);
    let b = transcript(&mut bob, &[&connect, "register bob pass1", "login bob pass1"]);
    let expected_login = |name: &str| {
        format!(
            "> {connect}\nconnected to 127.0.0.1:{}\n> register {name} pass1\nregistered {name}\n> login {name} pass1\nlogged in as {name}\n",
            addr.port()
        )
    };
    assert_eq!(a, expected_login("alice"));
    assert_eq!(b, expected_login("bob"));

    assert_eq!(out(&mut alice, "send bob hi bob"), right(&format!("hi bob [{STAMP} #1]")) + "\n");
    assert_eq!(inbox(&mut bob, 1), format!("[{STAMP} #1] alice: hi bob\n"));
    assert_eq!(out(&mut bob, "send alice hello"), right(&format!("hello [{STAMP} #2]")) + "\n");
    assert_eq!(out(&mut alice, "send bob how are you?"), right(&format!("how are you? [{STAMP} #3]")) + "\n");
    assert_eq!(inbox(&mut alice, 1), format!("[{STAMP} #2] bob: hello\n"));
    assert_eq!(inbox(&mut bob, 1), format!("[{STAMP} #3] alice: how are you?\n"));

    let alice_view = [
        right(&format!("hi bob [{STAMP} #1]")),
        format!("[{STAMP} #2] bob: hello"),
        right(&format!("how are you? [{STAMP} #3]")),
    ];
    let bob_view = [
        format!("[{STAMP} #1] alice: hi bob"),
        right(&format!("hello [{STAMP} #2]")),
        format!("[{STAMP} #3] alice: how are you?"),
    ];
    assert_eq!(out(&mut alice, "history bob"), alice_view.join("\n") + "\n");
    assert_eq!(out(&mut bob, "history alice"), bob_view.join("\n") + "\n");

    // the same script against the same state renders the same way
    assert_eq!(out(&mut alice, "history bob"), out(&mut alice, "history bob"));
    assert_eq!(out(&mut alice, "chats"), format!("{:<21} {STAMP}\n", "bob"));
}

#[test]
fn groups_blocks_and_deletion_through_the_shell() {
    let server = server();
    let connect = format!("connect 127.0.0.1:{}", server.address().port());
    let (mut alice, mut bob, mut carol) = (shell(), shell(), shell());
    for (sh, name) in [(&mut alice, "alice"), (&mut bob, "bob"), (&mut carol, "carol")] {
        out(sh, &connect);
        out(sh, &format!("register {name} pass1"));
        out(sh, &format!("login {name} pass1"));
    }

    assert_eq!(out(&mut alice, "mkgroup team"), "created #team\n");
    assert_eq!(out(&mut alice, "join-add bob team"), "added bob to #team\n");
    assert_eq!(inbox(&mut bob, 1), "** alice added you to #team\n");
    let notin = out(&mut alice, "users notin team");
    assert!(notin.starts_with("carol"), "{notin}");
    assert!(!notin.contains("bob"));

    out(&mut alice, "send #team standup at 10");
    assert_eq!(inbox(&mut bob, 1), format!("[{STAMP} #1] alice@#team: standup at 10\n"));
    assert!(out(&mut carol, "inbox 0.3").is_empty());

    assert_eq!(out(&mut bob, "block carol spam"), "blocked carol\n");
    let err = carol.run("send bob hey").unwrap_err();
    assert_eq!(err.to_string().split(':').next(), Some("BlockedByTarget"));
    let blocked = out(&mut bob, "users blocked");
    assert!(blocked.contains("carol") && blocked.contains("spam"), "{blocked}");
    assert_eq!(out(&mut bob, "unblock carol"), "unblocked carol\n");

    assert_eq!(out(&mut bob, "del #1"), "deleted #1\n");
    assert!(out(&mut bob, "history #team").is_empty());
    assert!(out(&mut alice, "history #team").contains("standup at 10"));
    assert_eq!(out(&mut alice, "leave team"), "left #team\n");
}

#[test]
fn deletion_asks_first() {
    let server = server();
    let mut sh = Shell::new(ClientConfig::default(), None, Renderer::utc()).with_confirm(|q| q.contains("#7"));
    out(&mut sh, &format!("connect 127.0.0.1:{}", server.address().port()));
    out(&mut sh, "register alice pass1");
    out(&mut sh, "login alice pass1");
    assert!(matches!(sh.run("delconv bob"), Err(CliError::Cancelled)));
    // confirmed, then refused by the server: nothing to delete
    let err = sh.run("del 7").unwrap_err();
    assert!(matches!(err, CliError::Client(_)), "{err}");
}

#[test]
fn send_before_login_is_not_connected() {
    let server = server();
    let mut sh = shell();
    out(&mut sh, &format!("connect 127.0.0.1:{}", server.address().port()));
    assert!(matches!(sh.run("send bob hi"), Err(CliError::NotConnected(_))));
    assert!(matches!(sh.run("frobnicate"), Err(CliError::UnknownCommand(_))));
}

#[test]
fn connect_by_name_from_the_server_list() {
    let server = server();
    let dir = tempfile::tempdir().unwrap();
    let servers = dir.path().join("servers.json");
    std::fs::write(
        &servers,
        format!(
            r#"[{{"display_name":"elsewhere","host":"127.0.0.1","port":9}},
                {{"display_name":"campus","host":"127.0.0.1","port":{}}}]"#,
            server.address().port()
        ),
    )
    .unwrap();
    let config_path = dir.path().join("client.json");
    let config = ClientConfig { servers: Some(servers), ..ClientConfig::default() };
    let mut sh = Shell::new(config, Some(config_path.clone()), Renderer::utc());

    let listing = out(&mut sh, "servers");
    assert_eq!(listing.lines().count(), 2);
    assert!(listing.lines().nth(1).unwrap().starts_with("campus"));
    assert!(matches!(sh.run("connect nowhere"), Err(CliError::UnknownServer(_))));

    let port = server.address().port();
    assert_eq!(out(&mut sh, "connect campus"), format!("connected to 127.0.0.1:{port}\n"));
    out(&mut sh, "register dana pass1");
    out(&mut sh, "login dana pass1");

    let saved = ClientConfig::load(&config_path).unwrap();
    assert_eq!(saved.last_server(), Some(("127.0.0.1".to_string(), port)));
    assert_eq!(saved.user_name.as_deref(), Some("dana"));

    assert_eq!(out(&mut sh, "logout"), "logged out\n");

    // a fresh shell from the saved settings reconnects and logs in without the host or name
    let mut again = Shell::new(saved, Some(config_path), Renderer::utc());
    out(&mut again, "connect");
    assert_eq!(out(&mut again, "login pass1"), "logged in as dana\n");
}

#[test]
fn client_side_geofence_reports_entry_once() {
    let server = server();
    let mut sh = shell();
    out(&mut sh, &format!("connect 127.0.0.1:{}", server.address().port()));
    out(&mut sh, "register erin pass1");
    out(&mut sh, "login erin pass1");
    assert_eq!(out(&mut sh, "fence plaza 40.0 -3.0 500"), "watching plaza\n");
    assert_eq!(out(&mut sh, "pos 41.0 -3.0"), "position reported\n");
    let entered = out(&mut sh, "pos 40.001 -3.0");
    assert!(entered.starts_with("position reported\nentered plaza (111 m"), "{entered}");
    assert_eq!(out(&mut sh, "pos 40.002 -3.0"), "position reported\n");
    assert!(matches!(sh.run("pos 91 0"), Err(CliError::Usage(_))));
    std::thread::sleep(Duration::from_millis(10));
}
