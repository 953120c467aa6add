//! Acceptance run: one PASS or FAIL line per criterion.
//!
//! Runs with `cargo test -p agentmesh-messenger --test acceptance`. Every
//! criterion runs even when an earlier one fails; the process exits non-zero
//! if any failed.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{self, AssertUnwindSafe};
use std::str::FromStr;
use std::time::{Duration, Instant};

use agentmesh_acl::{decode_frame, encode_frame, AclMessage, AgentId, ContainerAddr, Performative};
use agentmesh_messenger::protocol::ops;
use agentmesh_messenger::{ChatClient, ChatServer, Event, Notice, Presence, ServerConfig, ServiceConfig, UserFilter};
use agentmesh_platform::{Container, ContainerEvent, PlatformConfig, PlatformError};
use agentmesh_sensitivity::{geofence_check, haversine_distance, FenceState, Geofence, Lexicon, EARTH_RADIUS_M};
use agentmesh_store::{ActionLogEntry, ChatMessage, GeoPoint, GroupRecord, NewMessage, Outcome, Store, Target, UserRecord};
use common::{g, u, Harness};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::json;

const WAIT: Duration = Duration::from_secs(10);

type Check = fn() -> Result<(), String>;

fn ensure(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn main() {
    let criteria: [(&str, Check); 12] = [
        ("performative closure", performative_closure),
        ("frame round-trip", frame_round_trip),
        ("platform topology", platform_topology),
        ("name uniqueness", name_uniqueness),
        ("blocking triple rule", blocking_triple_rule),
        ("group semantics", group_semantics),
        ("per-viewer deletion", per_viewer_deletion),
        ("storage oracle", storage_oracle),
        ("geofence", geofence),
        ("lexicon auto-block", lexicon_auto_block),
        ("mining oracle", mining_oracle),
        ("crisis", crisis),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS  {name} ({secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1}s): {why}");
            }
        }
    }
    let _ = panic::take_hook();
    println!("{} of {} criteria passed", 12 - failed, 12);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---- performatives and frames ------------------------------------------

fn performative_closure() -> Result<(), String> {
    let names: BTreeSet<&str> = Performative::ALL.iter().map(|p| p.as_str()).collect();
    ensure(Performative::ALL.len() == 22 && names.len() == 22, "expected 22 distinct performatives")?;
    for p in Performative::ALL {
        ensure(Performative::from_str(&p.to_string()) == Ok(p), format!("{p} does not parse back"))?;
        let wire = serde_json::to_string(&p).map_err(|e| e.to_string())?;
        ensure(serde_json::from_str::<Performative>(&wire).ok() == Some(p), format!("{p} does not decode from JSON"))?;
    }
    ensure(Performative::from_str("Not-Understood") == Ok(Performative::NotUnderstood), "parsing is case-sensitive")?;
    for extra in ["query", "broadcast", "inform ", "not_understood", ""] {
        ensure(Performative::from_str(extra).is_err(), format!("{extra:?} accepted"))?;
        ensure(serde_json::from_str::<Performative>(&format!("{extra:?}")).is_err(), format!("{extra:?} decoded"))?;
    }
    Ok(())
}

fn random_text(rng: &mut StdRng, max: usize) -> String {
    let pool = ['"', '\\', '\n', '\t', '\0', '/', 'é', '漢', '🦀', '\u{7f}', '\u{2028}'];
    (0..rng.gen_range(0..=max))
        .map(|_| match rng.gen_range(0..4) {
            0 => *pool.choose(rng).unwrap(),
            1 => rng.gen::<char>(),
            _ => rng.gen_range(' '..='~'),
        })
        .collect()
}

fn random_agent(rng: &mut StdRng) -> AgentId {
    let name: String = loop {
        let n = random_text(rng, 24);
        if !n.is_empty() && !n.chars().any(|c| c == '@' || c.is_control()) {
            break n;
        }
    };
    let container = if rng.gen_bool(0.3) {
        ContainerAddr::Local
    } else {
        ContainerAddr::net(format!("h{}.example", rng.gen_range(0..100)), rng.gen())
    };
    AgentId::new(name, container).unwrap()
}

fn frame_round_trip() -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(0xf4a3e);
    for i in 0..10_000 {
        let receivers = (0..rng.gen_range(1..4)).map(|_| random_agent(&mut rng)).collect();
        let p = *Performative::ALL.choose(&mut rng).unwrap();
        let mut m = AclMessage::new(p, random_agent(&mut rng), receivers, random_text(&mut rng, 200))
            .map_err(|e| e.to_string())?
            .with_timestamp(rng.gen_range(1..u64::MAX));
        if rng.gen_bool(0.5) {
            m = m.with_conversation_id(random_text(&mut rng, 20));
        }
        if rng.gen_bool(0.5) {
            m = m.with_reply_with(random_text(&mut rng, 20));
        }
        if rng.gen_bool(0.5) {
            m = m.with_in_reply_to(random_text(&mut rng, 20));
        }
        let bytes = encode_frame(&m).map_err(|e| e.to_string())?;
        let back = decode_frame(&bytes).map_err(|e| format!("message {i}: {e}"))?;
        ensure(back == m, format!("message {i} changed in transit"))?;
        ensure(encode_frame(&back).unwrap() == bytes, format!("message {i} re-encodes differently"))?;
        ensure(encode_frame(&m.clone()).unwrap() == bytes, format!("message {i} encodes non-deterministically"))?;
    }
    Ok(())
}

// ---- platform ----------------------------------------------------------

fn platform_topology() -> Result<(), String> {
    let main = Container::start_main(PlatformConfig::ephemeral()).map_err(|e| e.to_string())?;
    let addr = main.main_address().unwrap();
    let s1 = Container::attach(addr).map_err(|e| e.to_string())?;
    let s2 = Container::attach(addr).map_err(|e| e.to_string())?;
    let agents = [
        main.spawn_external("on-main").unwrap(),
        s1.spawn_external("on-s1").unwrap(),
        s2.spawn_external("on-s2").unwrap(),
    ];
    for a in &agents {
        a.df_register("relay", "test service").map_err(|e| e.to_string())?;
    }
    for from in &agents {
        for to in &agents {
            if from.id().name() == to.id().name() {
                continue;
            }
            let target = AgentId::local(to.id().name()).unwrap();
            for seq in 0..1000 {
                let m = AclMessage::new(Performative::Inform, from.id().clone(), vec![target.clone()], seq.to_string()).unwrap();
                from.send(m);
            }
            for seq in 0..1000 {
                let m = to.receive_timeout(None, WAIT).ok_or(format!("{} -> {}: message {seq} missing", from.id().name(), to.id().name()))?;
                ensure(m.sender().name() == from.id().name() && m.content() == seq.to_string(),
                    format!("{} -> {}: expected {seq}, got {} from {}", from.id().name(), to.id().name(), m.content(), m.sender().name()))?;
            }
        }
    }
    let gone = s1.container_id().to_string();
    s1.abort();
    let lost = main.events().wait_for(WAIT, |e| matches!(e, ContainerEvent::SatelliteLost { container_id, .. } if *container_id == gone));
    ensure(lost, "satellite loss not detected")?;
    ensure(main.ams_entry("on-s1").is_none(), "AMS still lists the crashed satellite's agent")?;
    ensure(main.ams_entry("on-main").is_some() && main.ams_entry("on-s2").is_some(), "AMS lost a surviving agent")?;
    let providers: BTreeSet<String> =
        main.df_search("relay").unwrap().iter().map(|e| e.provider.name().to_string()).collect();
    ensure(providers == BTreeSet::from(["on-main".into(), "on-s2".into()]), format!("DF after crash: {providers:?}"))?;
    let m = AclMessage::new(Performative::Inform, agents[0].id().clone(), vec![AgentId::local("on-s2").unwrap()], "still up").unwrap();
    agents[0].send(m);
    ensure(agents[2].receive_timeout(None, WAIT).is_some_and(|m| m.content() == "still up"), "main stopped routing")?;
    Ok(())
}

// ---- messenger over the platform ---------------------------------------

fn server(lexicon: Lexicon, data_dir: Option<std::path::PathBuf>) -> ChatServer {
    ChatServer::start(ServerConfig {
        platform: PlatformConfig::ephemeral(),
        data_dir,
        lexicon,
        service: ServiceConfig { pbkdf2_rounds: 1, ..ServiceConfig::default() },
        maintenance_interval: None,
        ..ServerConfig::default()
    })
    .expect("server starts")
}

fn client(server: &ChatServer, name: &str) -> ChatClient {
    let mut c = ChatClient::connect(server.address()).expect("client connects");
    let _ = c.register(name, "pass");
    c.login(name, "pass").expect("login");
    c
}

fn code(r: Result<impl std::fmt::Debug, agentmesh_messenger::ClientError>) -> String {
    match r {
        Ok(v) => format!("ok({v:?})"),
        Err(e) => e.code().map(str::to_string).unwrap_or_else(|| e.to_string()),
    }
}

/// Events that arrive within a short quiet period.
fn settle(c: &ChatClient) -> Vec<Event> {
    let mut out = Vec::new();
    while let Some(e) = c.next_event(Duration::from_millis(400)) {
        out.push(e);
    }
    out
}

fn name_uniqueness() -> Result<(), String> {
    let srv = server(Lexicon::default(), None);
    let mut alice = client(&srv, "alice");
    let mut other = ChatClient::connect(srv.address()).unwrap();
    ensure(code(other.register("alice", "different")) == "DuplicateUserName", "duplicate user name accepted")?;
    ensure(code(other.login("alice", "pass")) == "AlreadyOnline", "second session for the same user")?;
    let sat = Container::attach(srv.address()).unwrap();
    let _x = sat.spawn_external("agent-x").unwrap();
    let main_dup = srv.container().spawn_external("agent-x");
    ensure(matches!(main_dup, Err(PlatformError::DuplicateName(_))), "duplicate agent name accepted across containers")?;
    ensure(matches!(sat.spawn_external("chat"), Err(PlatformError::DuplicateName(_))), "manager name reused")?;
    alice.logout().unwrap();
    other.login("alice", "pass").map_err(|e| e.to_string())?;
    Ok(())
}

fn blocking_triple_rule() -> Result<(), String> {
    let srv = server(Lexicon::default(), None);
    let mut alice = client(&srv, "alice");
    let mut bob = client(&srv, "bob");
    alice.create_group("club").unwrap();
    let status = |c: &mut ChatClient| -> Result<Presence, String> {
        let list = c.list_users(UserFilter::All, None).map_err(|e| e.to_string())?;
        Ok(list.into_iter().find(|e| e.user_name == "bob").ok_or("bob missing")?.status)
    };
    ensure(status(&mut alice)? == Presence::Online, "bob not online before block")?;
    alice.block_user("bob", Some("spam")).map_err(|e| e.to_string())?;
    ensure(code(bob.send_message(&u("alice"), "hi")) == "BlockedByTarget", "blocked send accepted")?;
    ensure(status(&mut alice)? == Presence::Hidden, "blocked user's status visible")?;
    ensure(code(alice.add_to_group("bob", "club")) == "TargetBlocked", "blocked user added to group")?;
    alice.unblock_user("bob").map_err(|e| e.to_string())?;
    let sent = bob.send_message(&u("alice"), "hi").map_err(|e| e.to_string())?;
    ensure(settle(&alice).contains(&Event::Message(sent)), "send after unblock not delivered")?;
    ensure(status(&mut alice)? == Presence::Online, "status still hidden after unblock")?;
    alice.add_to_group("bob", "club").map_err(|e| e.to_string())?;
    Ok(())
}

fn group_semantics() -> Result<(), String> {
    let srv = server(Lexicon::default(), None);
    let names: Vec<String> = (0..10).map(|i| format!("m{i}")).collect();
    let mut clients: Vec<ChatClient> = names.iter().map(|n| client(&srv, n)).collect();
    let mut outsider = client(&srv, "outsider");
    for size in 2..=10usize {
        let group = format!("size{size}");
        clients[0].create_group(&group).unwrap();
        ensure(code(outsider.add_to_group("outsider", &group)) == "NotAMember", "non-member add accepted")?;
        for (i, n) in names.iter().enumerate().take(size).skip(1) {
            // each new member is added by the previous one
            clients[i - 1].add_to_group(n, &group).map_err(|e| format!("{group}: {e}"))?;
        }
        let mut sent = Vec::new();
        for (s, c) in clients.iter_mut().enumerate().take(size) {
            sent.push(c.send_message(&g(&group), &format!("from {s}")).map_err(|e| e.to_string())?);
        }
        let mut inbox: Vec<Vec<Event>> = vec![Vec::new(); clients.len()];
        let deadline = Instant::now() + WAIT;
        while Instant::now() < deadline && inbox.iter().take(size).any(|got| got.len() < size - 1) {
            std::thread::sleep(Duration::from_millis(20));
            for (c, got) in clients.iter().zip(inbox.iter_mut()) {
                got.extend(c.drain_events());
            }
        }
        // late duplicates would show up here
        std::thread::sleep(Duration::from_millis(300));
        for (c, got) in clients.iter().zip(inbox.iter_mut()) {
            got.extend(c.drain_events());
        }
        for (s, m) in sent.iter().enumerate() {
            for (r, got) in inbox.iter().enumerate() {
                let copies = got.iter().filter(|e| **e == Event::Message(m.clone())).count();
                let expected = usize::from(r < size && r != s);
                ensure(copies == expected, format!("{group}: m{r} got {copies} copies of m{s}'s message"))?;
            }
        }
        ensure(outsider.drain_events().is_empty(), "outsider received group traffic")?;
    }
    Ok(())
}

fn per_viewer_deletion() -> Result<(), String> {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = StdRng::seed_from_u64(0xde1);
    let mut hidden: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
    let mut ids = Vec::new();
    let views = |a: &mut ChatClient, b: &mut ChatClient| -> Result<(Vec<u64>, Vec<u64>), String> {
        let f = |c: &mut ChatClient, peer: &str| -> Result<Vec<u64>, String> {
            Ok(c.fetch_history(&u(peer), 1000, None).map_err(|e| e.to_string())?.iter().map(|m| m.message_id).collect())
        };
        Ok((f(a, "bob")?, f(b, "alice")?))
    };
    {
        let srv = server(Lexicon::default(), Some(dir.path().to_path_buf()));
        let mut alice = client(&srv, "alice");
        let mut bob = client(&srv, "bob");
        for i in 0..60 {
            let m = if rng.gen_bool(0.5) { alice.send_message(&u("bob"), &format!("a{i}")) } else { bob.send_message(&u("alice"), &format!("b{i}")) };
            ids.push(m.map_err(|e| e.to_string())?.message_id);
        }
        for _ in 0..30 {
            let id = *ids.choose(&mut rng).unwrap();
            if rng.gen_bool(0.5) {
                alice.delete_message(id).map_err(|e| e.to_string())?;
                hidden.entry("alice").or_default().insert(id);
            } else {
                bob.delete_message(id).map_err(|e| e.to_string())?;
                hidden.entry("bob").or_default().insert(id);
            }
        }
        let expect = |who: &str| -> Vec<u64> {
            ids.iter().rev().copied().filter(|id| !hidden.get(who).is_some_and(|h| h.contains(id))).collect()
        };
        let (va, vb) = views(&mut alice, &mut bob)?;
        ensure(va == expect("alice"), "alice's view differs from the oracle")?;
        ensure(vb == expect("bob"), "bob's view differs from the oracle")?;
        drop((alice, bob));
        srv.shutdown();
    }
    let srv = server(Lexicon::default(), Some(dir.path().to_path_buf()));
    let mut alice = client(&srv, "alice");
    let mut bob = client(&srv, "bob");
    let (va, vb) = views(&mut alice, &mut bob)?;
    let expect = |who: &str| -> Vec<u64> {
        ids.iter().rev().copied().filter(|id| !hidden.get(who).is_some_and(|h| h.contains(id))).collect()
    };
    ensure(va == expect("alice") && vb == expect("bob"), "tombstones changed across restart")?;
    Ok(())
}

fn lexicon_auto_block() -> Result<(), String> {
    let lexicon = Lexicon::new(["scum"], ["thanks"]).unwrap();
    let srv = server(lexicon, None);
    let mut mallory = client(&srv, "mallory");
    let mut bob = client(&srv, "bob");
    mallory.send_message(&u("bob"), "what a scumbag").map_err(|e| e.to_string())?;
    ensure(!settle(&mallory).iter().any(|e| matches!(e, Event::Notice(_))), "substring triggered a notice")?;
    let blocked = bob.list_users(UserFilter::Blocked, None).map_err(|e| e.to_string())?;
    ensure(blocked.is_empty(), "substring triggered a block")?;
    let sent = mallory.send_message(&u("bob"), "you are SCUM.").map_err(|e| e.to_string())?;
    let expected = Event::Notice(Notice::AutoBlock { message_id: sent.message_id, token: "scum".into(), blocked_by: vec!["bob".into()] });
    ensure(settle(&mallory).contains(&expected), "sender not notified")?;
    let blocked = bob.list_users(UserFilter::Blocked, None).map_err(|e| e.to_string())?;
    ensure(blocked.len() == 1 && blocked[0].user_name == "mallory", "recipient did not block the sender")?;
    ensure(blocked[0].reason.as_deref() == Some("auto:scum"), format!("block reason {:?}", blocked[0].reason))?;
    ensure(code(mallory.send_message(&u("bob"), "hello")) == "BlockedByTarget", "auto-block not enforced")?;
    Ok(())
}

// ---- store -------------------------------------------------------------

const S_USERS: [&str; 6] = ["ana", "ben", "cai", "dee", "eli", "fay"];
const S_GROUPS: [&str; 3] = ["g0", "g1", "g2"];

/// Linear scan over every appended message.
fn scan(all: &[ChatMessage], members: &BTreeMap<String, BTreeSet<String>>, viewer: &str, peer: &Target, limit: usize, before: Option<u64>) -> Vec<ChatMessage> {
    let mut hits: Vec<ChatMessage> = all
        .iter()
        .filter(|m| match (peer, &m.target) {
            (Target::User(p), Target::User(to)) => (m.sender == viewer && to == p) || (m.sender == *p && to == viewer),
            (Target::Group(g), Target::Group(t)) => g == t && members[g].contains(viewer),
            _ => false,
        })
        .filter(|m| !m.deleted_for.contains(viewer) && before.is_none_or(|b| m.message_id < b))
        .cloned()
        .collect();
    hits.sort_by_key(|m| std::cmp::Reverse(m.message_id));
    hits.truncate(limit);
    hits
}

fn storage_oracle() -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(100_000);
    let mut store = Store::in_memory();
    let mut members: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for u in S_USERS {
        store.add_user(UserRecord::new(u, "d", 0)).unwrap();
    }
    for (i, g) in S_GROUPS.iter().enumerate() {
        store.create_group(GroupRecord::new(*g, S_USERS[i], 0)).unwrap();
        members.insert(g.to_string(), BTreeSet::from([S_USERS[i].to_string()]));
    }
    let mut all: Vec<ChatMessage> = Vec::new();
    let mut t = 1_000u64;
    while all.len() < 100_000 {
        t += rng.gen_range(0..3);
        let roll = rng.gen_range(0..100);
        if roll < 88 || all.is_empty() {
            let target = if rng.gen_bool(0.7) {
                Target::User(S_USERS.choose(&mut rng).unwrap().to_string())
            } else {
                Target::Group(S_GROUPS.choose(&mut rng).unwrap().to_string())
            };
            let sender = S_USERS.choose(&mut rng).unwrap().to_string();
            let m = store.append_message(NewMessage { sender, target, body: format!("b{}", rng.gen_range(0..999)), sent_at: t }).unwrap();
            all.push(m);
        } else if roll < 97 {
            let i = rng.gen_range(0..all.len());
            let who = *S_USERS.choose(&mut rng).unwrap();
            store.delete_for(all[i].message_id, who).unwrap();
            all[i].deleted_for.insert(who.to_string());
        } else {
            let (g, who) = (*S_GROUPS.choose(&mut rng).unwrap(), *S_USERS.choose(&mut rng).unwrap());
            let set = members.get_mut(g).unwrap();
            if set.remove(who) {
                store.remove_member(g, who).unwrap();
            } else {
                store.add_member(g, who).unwrap();
                set.insert(who.to_string());
            }
        }
    }
    let peers: Vec<Target> = S_USERS.iter().map(|u| u_(u)).chain(S_GROUPS.iter().map(|g| Target::Group(g.to_string()))).collect();
    let max_id = store.next_message_id();
    let compare = |store: &Store, rng: &mut StdRng| -> Result<(), String> {
        for viewer in S_USERS {
            for peer in &peers {
                ensure(store.query_history(viewer, peer, usize::MAX, None) == scan(&all, &members, viewer, peer, usize::MAX, None),
                    format!("{viewer}/{peer}: full history differs"))?;
                for _ in 0..10 {
                    let limit = rng.gen_range(0..40);
                    let before = rng.gen_bool(0.7).then(|| rng.gen_range(0..=max_id));
                    ensure(store.query_history(viewer, peer, limit, before) == scan(&all, &members, viewer, peer, limit, before),
                        format!("{viewer}/{peer} limit {limit} before {before:?} differs"))?;
                }
            }
        }
        Ok(())
    };
    compare(&store, &mut rng)?;

    for i in 0..2_000u64 {
        store.log_action(ActionLogEntry::new(t - 2_000 + i, "chat", "sendMessage", Outcome::Ok)).unwrap();
    }
    let purged = store.purge_expired_logs(t, 1_000).map_err(|e| e.to_string())?;
    ensure(purged == 1_000, format!("purged {purged} of 1000 expired entries"))?;
    compare(&store, &mut rng)?;

    let dir = tempfile::tempdir().unwrap();
    let mut durable = Store::open(dir.path()).map_err(|e| e.to_string())?;
    durable.add_user(UserRecord::new("ana", "d", 0)).unwrap();
    durable.add_user(UserRecord::new("ben", "d", 0)).unwrap();
    durable.create_group(GroupRecord::new("old", "ana", 0)).unwrap();
    durable.add_member("old", "ben").unwrap();
    let original: Vec<ChatMessage> = (0..500)
        .map(|i| {
            let sender = if i % 2 == 0 { "ana" } else { "ben" };
            let body = random_text(&mut rng, 60);
            durable.append_message(NewMessage { sender: sender.into(), target: Target::Group("old".into()), body, sent_at: 10 + i }).unwrap()
        })
        .collect();
    let archived = durable.archive_inactive_groups(1_000_000, 1_000).map_err(|e| e.to_string())?;
    ensure(archived == ["old"], format!("archived {archived:?}"))?;
    ensure(durable.expand_archive("old").map_err(|e| e.to_string())? == original, "archive expansion differs")?;
    drop(durable);
    let reopened = Store::open(dir.path()).map_err(|e| e.to_string())?;
    ensure(reopened.expand_archive("old").map_err(|e| e.to_string())? == original, "archive differs after reopen")?;
    Ok(())
}

fn u_(name: &str) -> Target {
    Target::User(name.to_string())
}

// ---- sensitivity -------------------------------------------------------

/// Great-circle distance from the spherical law of cosines.
fn great_circle(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * (b.lon - a.lon).to_radians().cos();
    EARTH_RADIUS_M * c.clamp(-1.0, 1.0).acos()
}

fn geofence() -> Result<(), String> {
    let fence = Geofence::new("office", GeoPoint::new(45.7489, 21.2087).unwrap(), 250.0).map_err(|e| e.to_string())?;
    let path = [(45.80, 21.30), (45.7490, 21.2088), (45.7488, 21.2086), (45.7600, 21.2087), (45.7489, 21.2087)];
    let mut state = FenceState::default();
    let events = path.iter().filter(|&&(lat, lon)| geofence_check(&mut state, &fence, GeoPoint::new(lat, lon).unwrap()).is_some()).count();
    ensure(events == 2, format!("{events} enter events on far, in, in, out, in"))?;

    let mut rng = StdRng::seed_from_u64(1_000);
    let mut checked = 0;
    while checked < 1_000 {
        let a = GeoPoint::new(rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0)).unwrap();
        let b = GeoPoint::new(rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0)).unwrap();
        let oracle = great_circle(a, b);
        if oracle < 1_000.0 {
            // the cosine form is ill-conditioned for nearby points
            continue;
        }
        let rel = ((haversine_distance(a, b) - oracle) / oracle).abs();
        ensure(rel <= 1e-6, format!("{a:?} {b:?}: relative error {rel:e}"))?;
        checked += 1;
    }
    Ok(())
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

fn mining_oracle() -> Result<(), String> {
    let mut h = Harness::new();
    let people = ["ana", "ben", "cai", "dee"];
    for p in people {
        h.user(p);
    }
    let vocab = ["good", "Morning", "night", "see", "you", "soon", "thanks", "lunch", "at", "noon"];
    let seps = [" ", ", ", "! ", "-", "  "];
    let mut rng = StdRng::seed_from_u64(10_000);
    let mut corpus = Vec::new();
    for _ in 0..10_000 {
        let n = rng.gen_range(1..8);
        let body: Vec<String> = (0..n).map(|_| vocab.choose(&mut rng).unwrap().to_string()).collect();
        let sep = seps.choose(&mut rng).unwrap();
        let body = body.join(sep);
        let from = *people.choose(&mut rng).unwrap();
        let to = *people.choose(&mut rng).unwrap();
        h.send(from, u(to), &body).map_err(|e| e.to_string())?;
        corpus.push(body);
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for text in &corpus {
        let w = words(text);
        for n in 1..=3 {
            for gram in w.windows(n) {
                *counts.entry(gram.join(" ")).or_default() += 1;
            }
        }
    }
    let built = h.call("ana", ops::BUILD_PHRASES, json!({"admin_key": "k"})).map_err(|e| e.to_string())?;
    ensure(built["built_from"] == 10_000, format!("model built from {}", built["built_from"]))?;
    let model = h.svc.phrases().current();
    ensure(model.counts.len() == counts.len(), format!("{} phrases, oracle has {}", model.counts.len(), counts.len()))?;
    for (phrase, n) in &counts {
        ensure(model.counts.get(phrase) == Some(n), format!("count of {phrase:?}"))?;
    }
    for prefix in ["good", "see you", "lunch at ", "th", "noon "] {
        let typed = words(prefix);
        let partial = !prefix.ends_with(' ');
        let mut expected: Vec<(&String, &u64)> = counts
            .iter()
            .filter(|(phrase, _)| {
                let gram: Vec<&str> = phrase.split(' ').collect();
                let last = typed.len() - 1;
                gram.len() >= typed.len()
                    && (0..last).all(|i| gram[i] == typed[i])
                    && if partial {
                        gram[last].starts_with(typed[last].as_str()) && **phrase != typed.join(" ")
                    } else {
                        gram[last] == typed[last] && gram.len() > typed.len()
                    }
            })
            .collect();
        expected.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        let expected: Vec<String> = expected.into_iter().take(5).map(|(p, _)| p.clone()).collect();
        let got = h.call("ben", ops::SUGGEST, json!({"prefix": prefix, "k": 5})).map_err(|e| e.to_string())?;
        ensure(got == json!(expected), format!("suggestions for {prefix:?}: {got}"))?;
    }

    let _ = h.call("ana", ops::BLOCK_USER, json!({"user": "ana"}));
    let _ = h.call("ana", ops::FETCH_HISTORY, json!({"peer": u("nobody")}));
    let now = h.clock.advance(1);
    let report = h.call("ana", ops::USAGE_REPORT, json!({"from": 0, "to": now + 1, "admin_key": "k"})).map_err(|e| e.to_string())?;
    let mut ops_scan: BTreeMap<String, u64> = BTreeMap::new();
    let mut failures: BTreeMap<String, u64> = BTreeMap::new();
    for e in h.svc.store().actions() {
        if e.at <= now {
            *ops_scan.entry(e.action.clone()).or_default() += 1;
            if e.outcome == Outcome::Error {
                *failures.entry(e.action.clone()).or_default() += 1;
            }
        }
    }
    ensure(report["operations"] == json!(ops_scan), format!("operations {} vs scan {ops_scan:?}", report["operations"]))?;
    ensure(report["failures"] == json!(failures), format!("failures {} vs scan {failures:?}", report["failures"]))?;
    Ok(())
}

fn crisis() -> Result<(), String> {
    let mut h = Harness::new();
    let epicenter = GeoPoint::new(45.75, 21.23).unwrap();
    let mut rng = StdRng::seed_from_u64(12);
    let mut expected = BTreeSet::new();
    for i in 0..40 {
        let name = format!("user{i:02}");
        h.user(&name);
        if i % 7 == 0 {
            continue; // never reported a position
        }
        let p = GeoPoint::new(45.75 + rng.gen_range(-0.5..0.5), 21.23 + rng.gen_range(-0.5..0.5)).unwrap();
        h.call(&name, ops::REPORT_POSITION, json!({"lat": p.lat, "lon": p.lon})).map_err(|e| e.to_string())?;
        let d = great_circle(epicenter, p);
        if (d - 25_000.0).abs() < 1.0 {
            continue; // too close to the edge to classify independently
        }
        if d <= 25_000.0 {
            expected.insert(name);
        }
    }
    ensure(!expected.is_empty() && expected.len() < 34, format!("degenerate fixture: {} in radius", expected.len()))?;
    let alert = json!({"alert_id": "tm-1", "kind": "earthquake", "epicenter": epicenter, "radius_m": 25_000.0, "at": 5});
    let first = h.raw("admin", ops::INJECT_ALERT, json!({"alert": alert, "admin_key": "k"}));
    let out = first.reply.map_err(|e| e.to_string())?;
    let members: BTreeSet<String> = serde_json::from_value(out["members"].clone()).unwrap();
    ensure(members == expected, format!("grouped {members:?}, expected {expected:?}"))?;
    let notified: BTreeSet<String> = first
        .pushes
        .iter()
        .filter(|p| matches!(&p.event, Event::Notice(Notice::Crisis { group, .. }) if group == "crisis-tm-1"))
        .map(|p| p.agent.clone())
        .collect();
    ensure(notified == expected, "crisis notice recipients differ from the group")?;
    let roster: BTreeSet<String> = h.svc.store().group("crisis-tm-1").ok_or("no crisis group")?.members.clone();
    ensure(roster == expected, "stored roster differs")?;

    let replay = h.raw("admin", ops::INJECT_ALERT, json!({"alert": alert, "admin_key": "k"}));
    let again: BTreeSet<String> = serde_json::from_value(replay.reply.map_err(|e| e.to_string())?["members"].clone()).unwrap();
    ensure(again == expected && replay.pushes.is_empty(), "replay changed the group or notified again")?;
    ensure(h.svc.store().groups().filter(|g| g.group_name.starts_with("crisis-")).count() == 1, "replay created a second group")?;
    Ok(())
}
