//! Brute-force reference implementations the library is checked against.
//! Each one is written from the textbook definition and shares no code
//! with the crate.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use tactix_core::{Vec2, ZoneMap};

/// r = cov(a, b) / (sd(a) sd(b)) with population moments.
pub fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    cov /= n;
    va /= n;
    vb /= n;
    cov / (va.sqrt() * vb.sqrt())
}

/// Two-sided permutation p-value drawn from a generator unrelated to the
/// crate's (rand's StdRng), so only agreement in distribution is expected.
pub fn perm_pvalue_oracle(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> f64 {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let r_obs = pearson_oracle(a, b).abs();
    let mut perm = b.to_vec();
    let mut extreme = 0;
    for _ in 0..n_perm {
        perm.shuffle(&mut rng);
        if pearson_oracle(a, &perm).abs() >= r_obs * (1.0 - 1e-12) {
            extreme += 1;
        }
    }
    (1 + extreme) as f64 / (n_perm + 1) as f64
}

/// Even-odd ray casting toward +x; vertices count as inside.
pub fn ray_cast_contains(poly: &[Vec2], p: Vec2) -> bool {
    if poly.contains(&p) {
        return true;
    }
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi.y_mm > p.y_mm) != (pj.y_mm > p.y_mm) {
            let x_cross = pj.x_mm + (p.y_mm - pj.y_mm) * (pi.x_mm - pj.x_mm) / (pi.y_mm - pj.y_mm);
            if p.x_mm < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// First organelle (file order) containing `p`, else the background.
pub fn oracle_locate(map: &ZoneMap, p: Vec2) -> String {
    map.organelles()
        .find(|z| ray_cast_contains(&z.polygon, p))
        .map(|z| z.id.clone())
        .unwrap_or_else(|| map.background_zone_id().to_string())
}

pub fn random_series(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-100.0..100.0)).collect()
}

pub fn random_walk(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            x += rng.random_range(-1.0..1.0);
            x
        })
        .collect()
}

pub fn uniform_point(rng: &mut impl Rng, map: &ZoneMap) -> Vec2 {
    Vec2::new(rng.random_range(0.0..=map.width_mm()), rng.random_range(0.0..=map.height_mm()))
}

pub mod relay {
    //! Drives a [`SessionHub`] with two raw clients over simulated links.
    //! Client A streams poses; client B only listens.

    use tactix_core::experiment::World;
    use tactix_core::haptics::HapticMode;
    use tactix_core::session::wire::{Hello, Pose};
    use tactix_core::session::{
        decode, encode, ConnId, Envelope, HubInput, HubOutput, LatencyProfile, Message, Sender, SessionConfig, SessionHub,
        SimDuplex,
    };

    pub struct RelayRun {
        pub sent: Vec<Envelope>,
        /// Everything B received, in arrival order.
        pub at_b: Vec<Envelope>,
        pub protocol_errors: u64,
        pub decode_errors: u64,
        pub trace_len: usize,
        pub events: Vec<Envelope>,
    }

    pub fn run(world: &World, mode: HapticMode, profile: LatencyProfile, n_poses: u64) -> RelayRun {
        let config = SessionConfig::new("relay", mode, world.map_hash.clone());
        let mut hub = SessionHub::new(config, world.dynamics, world.map.clone(), &world.activity);
        let mut links = [SimDuplex::new(profile, 0), SimDuplex::new(profile, 1)];
        let conns = [ConnId(1), ConnId(2)];
        let mut inbox: [Vec<Envelope>; 2] = [Vec::new(), Vec::new()];
        let mut decode_errors = 0;
        let mut sent = Vec::new();
        let mut outputs = Vec::new();
        let hello = |i: usize| {
            let env = Envelope::new(
                1,
                0,
                Sender::Server,
                Message::Hello(Hello {
                    map_hash: world.map_hash.clone(),
                    client: Some(format!("raw-{i}")),
                }),
            );
            encode(&env)
        };
        for c in conns {
            outputs.extend(hub.handle(0, HubInput::Connected(c)));
        }
        links[0].up.send(0, hello(0));
        // B says hello only once A holds its role, so roles are fixed.
        let mut b_hello = false;
        let mut started = false;
        let mut next_seq = 2;
        let mut now = 0u64;
        let limit = 10 * n_poses + 60_000;
        loop {
            for (i, link) in links.iter_mut().enumerate() {
                for frame in link.up.poll(now) {
                    match decode(&frame) {
                        Ok(env) => outputs.extend(hub.handle(now, HubInput::Frame(conns[i], env))),
                        Err(e) => outputs.extend(hub.handle(now, HubInput::Malformed(conns[i], e))),
                    }
                }
            }
            if !b_hello && hub.role_of(conns[0]).is_some() {
                links[1].up.send(now, hello(1));
                b_hello = true;
            }
            outputs.extend(hub.tick(now));
            for out in outputs.drain(..) {
                if let HubOutput::Send(c, env) = out {
                    let i = conns.iter().position(|x| *x == c).expect("known conn");
                    links[i].down.send(now, encode(&env));
                }
            }
            for (i, link) in links.iter_mut().enumerate() {
                for frame in link.down.poll(now) {
                    match decode(&frame) {
                        Ok(env) => {
                            if matches!(env.msg, Message::SessionStart(_)) && i == 0 {
                                started = true;
                            }
                            inbox[i].push(env);
                        }
                        Err(_) => decode_errors += 1,
                    }
                }
            }
            if started && now % 10 == 0 && (sent.len() as u64) < n_poses {
                let k = sent.len() as f64;
                let pose = Pose {
                    x_mm: 148.5 + 100.0 * (k / 300.0).sin(),
                    y_mm: 105.0 + 80.0 * (k / 170.0).cos(),
                    theta_rad: 0.0,
                };
                let env = Envelope::new(next_seq, now, Sender::A, Message::Pose(pose));
                next_seq += 1;
                links[0].up.send(now, encode(&env));
                sent.push(env);
            }
            let drained = links.iter().all(|l| l.up.in_flight() == 0 && l.down.in_flight() == 0);
            if (sent.len() as u64 == n_poses && drained) || now > limit {
                break;
            }
            now += 1;
        }
        let record = hub.finish();
        RelayRun {
            sent,
            at_b: std::mem::take(&mut inbox[1]),
            protocol_errors: record.protocol_errors,
            decode_errors,
            trace_len: record.trace.len(),
            events: record.events,
        }
    }

    /// Poses B saw from A, in arrival order.
    pub fn poses_at_b(run: &RelayRun) -> Vec<(u64, u64, Pose)> {
        run.at_b
            .iter()
            .filter_map(|e| match (&e.msg, e.from) {
                (Message::Pose(p), Sender::A) => Some((e.seq, e.t_ms, *p)),
                _ => None,
            })
            .collect()
    }

    /// In order, exactly once, unaltered, with non-decreasing server stamps.
    pub fn relay_is_faithful(run: &RelayRun) -> Result<(), String> {
        let got = poses_at_b(run);
        if got.len() != run.sent.len() {
            return Err(format!("B received {} of {} poses", got.len(), run.sent.len()));
        }
        let mut last_t = 0;
        for (k, ((seq, t, pose), sent)) in got.iter().zip(&run.sent).enumerate() {
            let Message::Pose(want) = &sent.msg else { unreachable!() };
            if *seq != sent.seq || pose != want {
                return Err(format!("pose {k}: got seq {seq} {pose:?}, sent seq {} {want:?}", sent.seq));
            }
            if *t < last_t {
                return Err(format!("pose {k}: stamp {t} after {last_t}"));
            }
            last_t = *t;
        }
        Ok(())
    }
}

pub mod gate {
    //! Randomized check of the quiz agreement gate against a straight-line
    //! restatement of the rules, kept apart from the library so the two can
    //! disagree.

    use std::collections::{BTreeMap, HashSet};

    use rand::seq::IndexedRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tactix_core::activity::{Activity, ActivityError, Participant, QuizState, RejectReason};
    use tactix_core::ZoneMap;

    use Participant::{A, B};

    #[derive(Default, Clone)]
    struct Shadow {
        proposals: BTreeMap<Participant, String>,
        votes: BTreeMap<Participant, String>,
        result: Option<(String, bool)>,
    }

    enum Op {
        Propose(usize, Participant, String),
        Vote(usize, Participant, String),
        Submit(usize, Option<String>, Option<String>),
    }

    fn random_op(rng: &mut ChaCha8Rng, zones: &[String]) -> Op {
        let q = rng.random_range(0..5);
        let who = if rng.random_bool(0.5) { A } else { B };
        let zone = zones.choose(rng).expect("zones").clone();
        // Live zones come from a narrow pool so co-location happens often.
        let mut live = || (!rng.random_bool(0.1)).then(|| zones[rng.random_range(0..2)].clone());
        let (la, lb) = (live(), live());
        match rng.random_range(0..3) {
            0 => Op::Propose(q, who, zone),
            1 => Op::Vote(q, who, zone),
            _ => Op::Submit(q, la, lb),
        }
    }

    pub struct Coverage {
        pub reasons: HashSet<RejectReason>,
        pub accepted: usize,
        pub sequences: usize,
    }

    macro_rules! ensure {
        ($cond:expr, $($fmt:tt)+) => {
            if !$cond {
                return Err(format!($($fmt)+));
            }
        };
    }

    pub fn check(seed: u64, n_sequences: usize) -> Result<Coverage, String> {
        let map = ZoneMap::default_map();
        let activity = Activity::default_activity();
        let key = activity.answer_key();
        let q_ids: Vec<String> = activity.questions.iter().map(|q| q.id.clone()).collect();
        let mut zones: Vec<String> = map.zones().iter().map(|z| z.id.clone()).collect();
        zones.push("ribosome".into());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cov = Coverage {
            reasons: HashSet::new(),
            accepted: 0,
            sequences: n_sequences,
        };

        for n in 0..n_sequences {
            let mut quiz = QuizState::new(&activity);
            let mut shadow = vec![Shadow::default(); q_ids.len()];
            let len = rng.random_range(1..60);
            for t in 0..len {
                match random_op(&mut rng, &zones) {
                    Op::Propose(q, who, zone) | Op::Vote(q, who, zone) if !map.contains_zone(&zone) => {
                        let got = quiz.propose_answer(&q_ids[q], who, &zone, &map, t);
                        ensure!(got == Err(ActivityError::UnknownZone(zone.clone())), "seq {n}: unknown zone {zone} gave {got:?}");
                    }
                    Op::Propose(q, who, zone) => {
                        let got = quiz.propose_answer(&q_ids[q], who, &zone, &map, t);
                        let s = &mut shadow[q];
                        if s.result.is_some() {
                            ensure!(matches!(got, Err(ActivityError::AlreadyAnswered(_))), "seq {n}: proposal on answered question gave {got:?}");
                        } else {
                            ensure!(got.is_ok(), "seq {n}: proposal failed: {got:?}");
                            if s.votes.get(&who).is_some_and(|v| *v != zone) {
                                s.votes.remove(&who);
                            }
                            s.proposals.insert(who, zone);
                        }
                    }
                    Op::Vote(q, who, zone) => {
                        let got = quiz.cast_vote(&q_ids[q], who, &zone, &map, t);
                        let s = &mut shadow[q];
                        if s.result.is_some() {
                            ensure!(matches!(got, Err(ActivityError::AlreadyAnswered(_))), "seq {n}: vote on answered question gave {got:?}");
                        } else {
                            ensure!(got.is_ok(), "seq {n}: vote failed: {got:?}");
                            s.proposals.insert(who, zone.clone());
                            s.votes.insert(who, zone);
                        }
                    }
                    Op::Submit(q, la, lb) => {
                        let out = quiz
                            .try_submit(&q_ids[q], la.as_deref(), lb.as_deref(), t)
                            .map_err(|e| format!("seq {n}: submit errored: {e}"))?;
                        let s = &mut shadow[q];
                        let want = if s.result.is_some() {
                            Err(RejectReason::AlreadyAnswered)
                        } else if la.is_none() || la != lb {
                            Err(RejectReason::NotColocated)
                        } else {
                            let z = la.clone().expect("checked");
                            let agreed = [A, B].iter().all(|p| s.votes.get(p) == Some(&z) && s.proposals.get(p) == Some(&z));
                            if agreed {
                                Ok(z)
                            } else {
                                Err(RejectReason::AwaitingPartner)
                            }
                        };
                        match want {
                            Ok(z) => {
                                ensure!(out.accepted, "seq {n}: gate refused an agreed, co-located answer");
                                // Both robots stand on the zone both voted for.
                                ensure!(la.as_deref() == Some(z.as_str()) && lb.as_deref() == Some(z.as_str()), "seq {n}: accepted off-zone");
                                let correct = key[&q_ids[q]] == z;
                                ensure!(out.correct == Some(correct), "seq {n}: wrong correctness flag");
                                s.result = Some((z, correct));
                                cov.accepted += 1;
                            }
                            Err(reason) => {
                                ensure!(!out.accepted && out.reason == Some(reason), "seq {n}: expected {reason:?}, got {out:?}");
                                cov.reasons.insert(reason);
                            }
                        }
                    }
                }
                for (q, s) in shadow.iter().enumerate() {
                    let real = &quiz.questions[q];
                    ensure!(real.proposals == s.proposals && real.votes == s.votes, "seq {n}: {} ballots diverged", q_ids[q]);
                    let result = real.result.as_ref().map(|r| (r.zone_id.clone(), r.correct));
                    ensure!(result == s.result, "seq {n}: {} result diverged", q_ids[q]);
                }
            }
            let score = shadow.iter().filter(|s| s.result.as_ref().is_some_and(|r| r.1)).count() as u32;
            ensure!(quiz.score() == score, "seq {n}: score {} vs {score}", quiz.score());
            ensure!(quiz.is_finished() == shadow.iter().all(|s| s.result.is_some()), "seq {n}: finish flag diverged");
        }
        Ok(cov)
    }
}
