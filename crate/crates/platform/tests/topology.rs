use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use agentmesh_acl::{AclMessage, AgentId, MessageTemplate, Performative};
use agentmesh_platform::{
    handler, AgentContext, AgentState, AttachOptions, Container, ContainerEvent, DeliveryStatus, PlatformConfig,
    PlatformError, ServiceEntry,
};

const WAIT: Duration = Duration::from_secs(10);

fn main_container() -> Container {
    Container::start_main(PlatformConfig::ephemeral()).expect("main starts")
}

fn satellite(main: &Container) -> Container {
    Container::attach(main.main_address().unwrap()).expect("satellite attaches")
}

fn echo(ctx: &AgentContext, msg: AclMessage) {
    if msg.performative() == Performative::Request {
        ctx.send(msg.reply(ctx.id().clone(), Performative::Inform, msg.content()));
    }
}

fn to(name: &str) -> AgentId {
    AgentId::local(name).unwrap()
}

fn request(from: &AgentId, receiver: &str, content: &str) -> AclMessage {
    AclMessage::new(Performative::Request, from.clone(), vec![to(receiver)], content).unwrap()
}

#[test]
fn main_hosts_ams_and_df() {
    let main = main_container();
    let names = main.descriptor().agent_names();
    assert!(names.contains("ams") && names.contains("df"));
    assert_eq!(main.agent_state("ams"), Some(AgentState::Active));
    assert!(main.is_main());
}

#[test]
fn second_main_on_same_port_is_port_in_use() {
    let main = main_container();
    let port = main.main_address().unwrap().port();
    let err = Container::start_main(PlatformConfig { port, ..PlatformConfig::default() }).err().unwrap();
    assert!(matches!(err, PlatformError::PortInUse(_)), "{err:?}");
}

#[test]
fn port_is_reusable_after_shutdown() {
    let main = main_container();
    let port = main.main_address().unwrap().port();
    main.shutdown();
    drop(main);
    let again = Container::start_main(PlatformConfig { port, ..PlatformConfig::default() });
    assert!(again.is_ok(), "{:?}", again.err());
}

#[test]
fn satellites_get_distinct_ids() {
    let main = main_container();
    let a = satellite(&main);
    let b = satellite(&main);
    assert_ne!(a.container_id(), b.container_id());
    assert!(!a.is_main());
    let listed = a.list_containers().unwrap();
    let ids: Vec<_> = listed.iter().map(|d| d.container_id.as_str()).collect();
    assert_eq!(ids.len(), 3);
    assert!(ids.contains(&"main") && ids.contains(&a.container_id()) && ids.contains(&b.container_id()));
}

#[test]
fn attach_to_nothing_is_main_unreachable() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let err = Container::attach(("127.0.0.1", port)).err().unwrap();
    assert!(matches!(err, PlatformError::MainUnreachable(_)), "{err:?}");
}

#[test]
fn wrong_protocol_version_is_rejected() {
    let main = main_container();
    let opts = AttachOptions { protocol_version: "agentmesh/0".into(), ..AttachOptions::default() };
    let err = Container::attach_with(main.main_address().unwrap(), opts).err().unwrap();
    assert!(matches!(err, PlatformError::HandshakeRejected(_)), "{err:?}");
}

#[test]
fn duplicate_names_rejected_across_containers() {
    let main = main_container();
    let sat = satellite(&main);
    let _a = main.spawn_external("alice").unwrap();
    assert!(matches!(sat.spawn_external("alice").err(), Some(PlatformError::DuplicateName(_))));
    assert!(matches!(main.spawn_external("alice").err(), Some(PlatformError::DuplicateName(_))));
    assert!(matches!(sat.spawn_external("ams").err(), Some(PlatformError::DuplicateName(_))));
    let _b = sat.spawn_external("bob").unwrap();
    assert!(matches!(main.spawn_external("bob").err(), Some(PlatformError::DuplicateName(_))));
}

#[test]
fn killed_name_can_be_reused() {
    let main = main_container();
    let sat = satellite(&main);
    let a = sat.spawn_external("carol").unwrap();
    a.kill().unwrap();
    assert_eq!(main.agent_state("carol"), Some(AgentState::Stopped));
    let _again = sat.spawn_external("carol").unwrap();
    assert_eq!(main.agent_state("carol"), Some(AgentState::Active));
}

#[test]
fn echo_across_containers() {
    let main = main_container();
    let sat = satellite(&main);
    for i in 0..100 {
        main.spawn_agent(&format!("echo-{i}"), handler(echo)).unwrap();
    }
    let client = sat.spawn_external("client").unwrap();
    for i in 0..100 {
        let report = client.send(request(client.id(), &format!("echo-{i}"), &format!("ping {i}")));
        assert!(report.all_delivered(), "{report:?}");
    }
    let mut got = Vec::new();
    for _ in 0..100 {
        let m = client.receive_timeout(Some(&MessageTemplate::performative(Performative::Inform)), WAIT).unwrap();
        got.push(m.content().to_string());
    }
    got.sort();
    let mut want: Vec<_> = (0..100).map(|i| format!("ping {i}")).collect();
    want.sort();
    assert_eq!(got, want);
}

#[test]
fn ordering_preserved_between_satellites() {
    let main = main_container();
    let s1 = satellite(&main);
    let s2 = satellite(&main);
    let a = s1.spawn_external("a").unwrap();
    let b = s2.spawn_external("b").unwrap();
    for i in 0..1000 {
        a.send(AclMessage::new(Performative::Inform, a.id().clone(), vec![to("b")], i.to_string()).unwrap());
    }
    for i in 0..1000 {
        let m = b.receive_timeout(None, WAIT).expect("message arrives");
        assert_eq!(m.content(), i.to_string());
        assert_eq!(m.sender().name(), "a");
    }
}

#[test]
fn unknown_receiver_gets_not_understood() {
    let main = main_container();
    let sat = satellite(&main);
    let a = sat.spawn_external("asker").unwrap();
    let report = a.send(request(a.id(), "ghost", "hello?"));
    assert_eq!(report.status("ghost"), Some(DeliveryStatus::UnknownAgent));
    let reply = a.receive_timeout(None, WAIT).unwrap();
    assert_eq!(reply.performative(), Performative::NotUnderstood);
    assert_eq!(reply.sender().name(), "ams");
    assert!(reply.content().contains("ghost"));
}

#[test]
fn multicast_reports_per_receiver() {
    let main = main_container();
    let sat = satellite(&main);
    let x = main.spawn_external("x").unwrap();
    let y = sat.spawn_external("y").unwrap();
    let z = sat.spawn_external("z").unwrap();
    let msg = AclMessage::new(Performative::Inform, z.id().clone(), vec![to("x"), to("y"), to("nobody")], "hi").unwrap();
    let report = z.send(msg);
    assert_eq!(report.status("x"), Some(DeliveryStatus::Delivered));
    assert_eq!(report.status("y"), Some(DeliveryStatus::Delivered));
    assert_eq!(report.status("nobody"), Some(DeliveryStatus::UnknownAgent));
    assert_eq!(x.receive_timeout(None, WAIT).unwrap().receivers().len(), 3);
    assert_eq!(y.receive_timeout(None, WAIT).unwrap().content(), "hi");
}

#[test]
fn df_register_search_in_registration_order() {
    let main = main_container();
    let sat = satellite(&main);
    let p1 = sat.spawn_external("p1").unwrap();
    let p2 = main.spawn_external("p2").unwrap();
    let p3 = sat.spawn_external("p3").unwrap();
    p1.df_register("chat", "first").unwrap();
    p2.df_register("chat", "second").unwrap();
    p3.df_register("other", "third").unwrap();
    assert!(matches!(p1.df_register("chat", "again"), Err(PlatformError::DuplicateService { .. })));
    let found = sat.df_search("chat").unwrap();
    let names: Vec<_> = found.iter().map(|e| e.provider.name().to_string()).collect();
    assert_eq!(names, ["p1", "p2"]);
    assert_eq!(found[0].task_description, "first");
    p1.df_deregister("chat").unwrap();
    assert!(matches!(p1.df_deregister("chat"), Err(PlatformError::UnknownEntry { .. })));
    assert_eq!(main.df_search("chat").unwrap().len(), 1);
}

#[test]
fn df_rejects_unregistered_provider() {
    let main = main_container();
    let err = main.df_register(ServiceEntry::new(to("phantom"), "chat", "")).unwrap_err();
    assert!(matches!(err, PlatformError::UnknownAgent(_)));
}

#[test]
fn df_agent_answers_requests() {
    let main = main_container();
    let sat = satellite(&main);
    let a = sat.spawn_external("svc").unwrap();
    let content = agentmesh_platform::protocol::ControlRequest::new(
        "register",
        serde_json::json!({"service_type": "weather", "task_description": "forecasts"}),
    )
    .to_content();
    a.send(AclMessage::new(Performative::Request, a.id().clone(), vec![a.df().clone()], content).unwrap());
    let reply = a.receive_timeout(None, WAIT).unwrap();
    assert_eq!(reply.performative(), Performative::Inform, "{}", reply.content());
    assert_eq!(main.df_search("weather").unwrap()[0].provider.name(), "svc");

    a.send(AclMessage::new(Performative::QueryRef, a.id().clone(), vec![a.df().clone()], "?").unwrap());
    assert_eq!(a.receive_timeout(None, WAIT).unwrap().performative(), Performative::NotUnderstood);
}

#[test]
fn kill_removes_agent_and_its_services() {
    let main = main_container();
    let sat = satellite(&main);
    sat.spawn_agent("worker", handler(echo)).unwrap();
    main.df_register(ServiceEntry::new(to("worker"), "work", "")).unwrap();
    main.kill_agent("worker").unwrap();
    assert_eq!(main.agent_state("worker"), Some(AgentState::Stopped));
    assert!(main.df_search("work").unwrap().is_empty());
    assert!(sat.events().wait_for(WAIT, |e| matches!(e, ContainerEvent::AgentStopped { name } if name == "worker")));
    assert!(matches!(main.kill_agent("worker"), Err(PlatformError::UnknownAgent(_))));
}

#[test]
fn liveness_is_visible_from_every_container() {
    let main = main_container();
    let s1 = satellite(&main);
    let s2 = satellite(&main);
    let watcher = s1.spawn_external("watcher").unwrap();
    let on_main = main.spawn_external("on-main").unwrap();
    let target = s2.spawn_external("target").unwrap();
    assert!(watcher.is_live("target").unwrap());
    assert!(on_main.is_live("target").unwrap());
    assert!(watcher.is_live("on-main").unwrap());
    target.kill().unwrap();
    assert!(!watcher.is_live("target").unwrap());
    assert!(!on_main.is_live("target").unwrap());
    assert!(!on_main.is_live("never-existed").unwrap());
}

#[test]
fn satellite_crash_removes_exactly_its_agents() {
    let main = main_container();
    let s1 = satellite(&main);
    let s2 = satellite(&main);
    let _m = main.spawn_external("m-agent").unwrap();
    let a = s1.spawn_external("s1-agent").unwrap();
    let b = s2.spawn_external("s2-agent").unwrap();
    a.df_register("svc", "").unwrap();
    b.df_register("svc", "").unwrap();
    let gone = s1.container_id().to_string();
    s1.abort();
    assert!(main.events().wait_for(WAIT, |e| matches!(e, ContainerEvent::SatelliteLost { container_id, .. } if *container_id == gone)));
    assert_eq!(main.agent_state("s1-agent"), None);
    assert_eq!(main.agent_state("s2-agent"), Some(AgentState::Active));
    assert_eq!(main.agent_state("m-agent"), Some(AgentState::Active));
    let names: Vec<_> = main.df_search("svc").unwrap().iter().map(|e| e.provider.name().to_string()).collect();
    assert_eq!(names, ["s2-agent"]);
    assert_eq!(main.list_containers().unwrap().len(), 2);
}

#[test]
fn silent_satellite_is_declared_dead() {
    let config = PlatformConfig {
        heartbeat_interval: Duration::from_millis(100),
        missed_heartbeats: 3,
        ..PlatformConfig::ephemeral()
    };
    let main = Container::start_main(config).unwrap();
    let quiet = AttachOptions { heartbeat_interval: Duration::from_secs(3600), ..AttachOptions::default() };
    let chatty = AttachOptions { heartbeat_interval: Duration::from_millis(50), ..AttachOptions::default() };
    let s_quiet = Container::attach_with(main.main_address().unwrap(), quiet).unwrap();
    let s_chatty = Container::attach_with(main.main_address().unwrap(), chatty).unwrap();
    let _q = s_quiet.spawn_external("quiet").unwrap();
    let _c = s_chatty.spawn_external("chatty").unwrap();
    let id = s_quiet.container_id().to_string();
    assert!(main.events().wait_for(WAIT, |e| matches!(e, ContainerEvent::SatelliteLost { container_id, .. } if *container_id == id)));
    assert!(s_quiet.events().wait_for(WAIT, |e| matches!(e, ContainerEvent::Disconnected { .. })));
    assert!(!s_quiet.is_connected());
    assert!(s_chatty.is_connected());
    assert_eq!(main.agent_state("quiet"), None);
    assert_eq!(main.agent_state("chatty"), Some(AgentState::Active));
}

#[test]
fn main_shutdown_disconnects_satellites() {
    let main = main_container();
    let sat = satellite(&main);
    let _a = sat.spawn_external("a").unwrap();
    main.shutdown();
    assert!(sat.events().wait_for(WAIT, |e| matches!(e, ContainerEvent::Disconnected { .. })));
    assert!(!sat.is_connected());
    assert!(matches!(sat.spawn_external("b").err(), Some(PlatformError::ContainerGone)));
}

#[test]
fn detach_deregisters_satellite_agents() {
    let main = main_container();
    let sat = satellite(&main);
    let _a = sat.spawn_external("leaver").unwrap();
    sat.shutdown();
    assert!(main.events().wait_for(WAIT, |e| matches!(e, ContainerEvent::SatelliteLost { .. })));
    assert_eq!(main.agent_state("leaver"), None);
}

#[test]
fn panicking_agent_is_contained() {
    let main = main_container();
    let sat = satellite(&main);
    sat.spawn_agent("fragile", handler(|_ctx: &AgentContext, _m: AclMessage| panic!("boom"))).unwrap();
    sat.spawn_agent("steady", handler(echo)).unwrap();
    let client = main.spawn_external("client").unwrap();
    client.send(request(client.id(), "fragile", "x"));
    let stopped = || main.agent_state("fragile") == Some(AgentState::Stopped);
    let deadline = std::time::Instant::now() + WAIT;
    while !stopped() && std::time::Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(20));
    }
    assert!(stopped());
    client.send(request(client.id(), "steady", "still here"));
    let reply = client.receive_timeout(Some(&MessageTemplate::performative(Performative::Inform)), WAIT).unwrap();
    assert_eq!(reply.content(), "still here");
    assert!(sat.is_connected());
}

#[test]
fn queue_overflow_bounces_failure_to_sender() {
    let config = PlatformConfig { queue_limit: 4, ..PlatformConfig::ephemeral() };
    let main = Container::start_main(config).unwrap();
    let sink = main.spawn_external("sink").unwrap();
    let src = main.spawn_external("src").unwrap();
    let mut statuses = Vec::new();
    for i in 0..6 {
        let r = src.send(AclMessage::new(Performative::Inform, src.id().clone(), vec![to("sink")], i.to_string()).unwrap());
        statuses.push(r.status("sink").unwrap());
    }
    assert_eq!(statuses.iter().filter(|s| **s == DeliveryStatus::QueueFull).count(), 2);
    let f = src.receive_timeout(None, WAIT).unwrap();
    assert_eq!(f.performative(), Performative::Failure);
    assert!(f.content().contains("QueueFull"));
    let kept: Vec<_> = (0..4).map(|_| sink.receive(None).unwrap().content().to_string()).collect();
    assert_eq!(kept, ["0", "1", "2", "3"]);
}

#[test]
fn behaviors_run_serially_until_done() {
    struct Counter {
        n: usize,
        seen: Arc<Mutex<Vec<usize>>>,
    }
    impl agentmesh_platform::Behavior for Counter {
        fn step(&mut self, _ctx: &AgentContext) {
            self.n += 1;
            self.seen.lock().unwrap().push(self.n);
        }
        fn done(&self) -> bool {
            self.n >= 5
        }
    }
    let main = main_container();
    let seen = Arc::new(Mutex::new(Vec::new()));
    main.spawn_agent("counter", Counter { n: 0, seen: Arc::clone(&seen) }).unwrap();
    assert!(main.events().wait_for(WAIT, |e| matches!(e, ContainerEvent::AgentStopped { name } if name == "counter")));
    assert_eq!(*seen.lock().unwrap(), [1, 2, 3, 4, 5]);
    let deadline = std::time::Instant::now() + WAIT;
    while main.agent_state("counter") != Some(AgentState::Stopped) && std::time::Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(10));
    }
    assert_eq!(main.agent_state("counter"), Some(AgentState::Stopped));
}
