//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use hexcommand::behaviors::{named_policy, BehaviorModel, ScriptedPolicy};
use hexcommand::cli::TrainSpec;
use hexcommand::engine::{
    run_episode, Action, DecisionTrace, EpisodeLog, Event, Faction, GameState, Scenario, Snapshot, Terrain, UnitId,
};
use hexcommand::fuzz::{self, FuzzParams};
use hexcommand::hexgrid::{disk, disk_size, distance, radial_target, ring, HexCoord};
use hexcommand::hierarchy::{at_boundary, partition_units, ActiveSubgoal, HierarchicalPolicy, MAX_GROUP, MIN_GROUP};
use hexcommand::learn::{
    state_key, tabular_q_learn, train_dqn, train_score_model, Approximator, DqnPolicy, ScoreConfig, ScorePredictor,
    StateKey, TabularConfig, TrainConfig,
};
use hexcommand::multimodel::{select, ModelPair, MultiModel};
use hexcommand::observation::{decay_weight, encode_local, EncoderParams, LocalEncoder, NUM_CHANNELS};
use hexcommand::playserver::{session_loop, ProtocolMessage, ScriptedTransport};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn scenario(name: &str) -> Scenario {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "scenarios", name].iter().collect();
    Scenario::load(path).expect("bundled scenario loads")
}

fn stochastic(mut s: Scenario) -> Scenario {
    s.combat.deterministic = false;
    s
}

fn policy(name: &str, seed: u64) -> Box<dyn BehaviorModel> {
    if name == "hierarchy" {
        return Box::new(HierarchicalPolicy::scripted());
    }
    named_policy(name, seed).expect("known scripted policy")
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// One-sided Welch test of `mean(a) > mean(b)`; returns (t, df, p).
fn welch_greater(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let p = if ma > mb { 0.0 } else { 1.0 };
        return (if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY }, f64::NAN, p);
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / (sa.powi(2) / (a.len() as f64 - 1.0) + sb.powi(2) / (b.len() as f64 - 1.0));
    let p = 1.0 - StudentsT::new(0.0, 1.0, df).expect("valid df").cdf(t);
    (t, df, p)
}

// ---------------------------------------------------------------------------

fn hex_oracle() -> Outcome {
    let t0 = Instant::now();
    let cells = disk(HexCoord::ORIGIN, 8);
    let mut pairs = 0usize;
    for &a in &cells {
        let mut seen = HashMap::from([(a, 0u32)]);
        let mut queue = VecDeque::from([a]);
        while let Some(c) = queue.pop_front() {
            let d = seen[&c];
            if d == 16 {
                continue;
            }
            for n in c.neighbors() {
                seen.entry(n).or_insert_with(|| {
                    queue.push_back(n);
                    d + 1
                });
            }
        }
        for &b in &cells {
            ensure!(distance(a, b) == seen[&b], "distance{a}{b} = {} but BFS gives {}", distance(a, b), seen[&b]);
            pairs += 1;
        }
    }
    for r in 1..=6u32 {
        let rg = ring(HexCoord::new(2, -5), r).map_err(|e| e.to_string())?;
        ensure!(rg.len() == 6 * r as usize, "ring {r} has {} cells", rg.len());
        ensure!(rg.iter().collect::<HashSet<_>>().len() == rg.len(), "ring {r} repeats cells");
        ensure!(rg.iter().all(|&c| distance(HexCoord::new(2, -5), c) == r), "ring {r} off radius");
        let dk = disk(HexCoord::ORIGIN, r);
        ensure!(dk.len() == 1 + 3 * (r * (r + 1)) as usize, "disk {r} has {} cells", dk.len());
        ensure!(dk.len() == disk_size(r), "disk_size({r})");
        ensure!(dk.iter().collect::<HashSet<_>>().len() == dk.len(), "disk {r} repeats cells");
    }
    let el = t0.elapsed();
    ensure!(el < Duration::from_secs(1), "took {el:?}");
    Ok(format!("{pairs} pairs within radius 8 match BFS; rings/disks r=1..6; {} ms", el.as_millis()))
}

fn determinism() -> Outcome {
    let sc = stochastic(scenario("skirmish.json"));
    let pairs = [("random", "greedy"), ("goal", "random"), ("hierarchy", "random"), ("random", "random")];
    let mut records = 0;
    for seed in 0..100u64 {
        let (b, r) = pairs[seed as usize % pairs.len()];
        let run = || run_episode(&sc, policy(b, 1).as_mut(), policy(r, 2).as_mut(), seed).map_err(|e| e.to_string());
        let (x, y) = (run()?, run()?);
        let (tx, ty) = (x.to_ndjson(), y.to_ndjson());
        ensure!(tx == ty, "seed {seed}: logs differ");
        let parsed = EpisodeLog::from_ndjson(&tx).map_err(|e| e.to_string())?;
        ensure!(parsed == x, "seed {seed}: log does not round-trip");
        parsed.replay().map_err(|e| format!("seed {seed}: {e}"))?;
        records += x.records.len();
    }
    Ok(format!("100 episodes byte-identical, {records} snapshots replayed"))
}

fn objective_points(objs: &[(HexCoord, i64)], units: &[hexcommand::engine::Unit]) -> i64 {
    objs.iter().filter_map(|(c, v)| units.iter().find(|u| u.pos == *c).map(|u| u.faction.sign() * v)).sum()
}

fn conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let names = ["random", "greedy", "goal", "hold", "pass"];
    let mut steps = 0usize;
    for ep in 0..1000u64 {
        let sc = fuzz::random_scenario(&mut rng);
        let (b, r) = (names[rng.random_range(0..names.len())], names[rng.random_range(0..names.len())]);
        let log =
            run_episode(&sc, policy(b, ep).as_mut(), policy(r, ep + 7).as_mut(), ep).map_err(|e| e.to_string())?;
        let final_state = log.replay().map_err(|e| format!("episode {ep}: {e}"))?;
        let objs: Vec<(HexCoord, i64)> = sc.objectives.iter().map(|o| (HexCoord::new(o.q, o.r), o.value)).collect();
        let mut total = 0i64;
        ensure!(log.records.first().is_none_or(|r| r.state.score == 0), "episode {ep}: nonzero initial score");
        for (k, rec) in log.records.iter().enumerate() {
            let after: &[hexcommand::engine::Unit] = match log.records.get(k + 1) {
                Some(next) => &next.state.units,
                None => &final_state.units,
            };
            let before_str: i64 = rec.state.units.iter().map(|u| u.strength as i64).sum();
            let after_str: i64 = after.iter().map(|u| u.strength as i64).sum();
            let mut lost = 0i64;
            let mut expected = 0i64;
            for e in &rec.events {
                match e {
                    Event::Attacked { damage, counter, .. } => {
                        lost += (*damage + *counter) as i64;
                        expected += rec.faction.sign() * (*damage as i64 - *counter as i64);
                    }
                    Event::TurnEnded { .. } => expected += objective_points(&objs, after),
                    _ => {}
                }
            }
            ensure!(after_str <= before_str, "episode {ep} step {k}: strength rose {before_str} -> {after_str}");
            ensure!(
                before_str - after_str == lost,
                "episode {ep} step {k}: strength change {} != combat losses {lost}",
                before_str - after_str
            );
            ensure!(rec.reward == expected, "episode {ep} step {k}: reward {} != recomputed {expected}", rec.reward);
            if let Some(next) = log.records.get(k + 1) {
                ensure!(next.state.score == rec.state.score + rec.reward, "episode {ep} step {k}: score chain broken");
            }
            total += expected;
            steps += 1;
        }
        ensure!(total == log.final_score, "episode {ep}: recomputed {total} != final {}", log.final_score);
    }
    Ok(format!("1000 fuzzed episodes, {steps} steps audited"))
}

// ---------------------------------------------------------------------------

fn embed(sc: &Scenario, s: &GameState, off: HexCoord, side: u32) -> GameState {
    let mut rows = vec![vec!['w'; side as usize]; side as usize];
    for r in 0..sc.height as i32 {
        for q in 0..sc.width as i32 {
            let t = sc.terrain_at(HexCoord::new(q, r)).expect("in bounds");
            rows[(r + off.r) as usize][(q + off.q) as usize] = t.to_char();
        }
    }
    let mut big = sc.clone();
    big.width = side;
    big.height = side;
    big.terrain = rows.into_iter().map(|r| r.into_iter().collect()).collect();
    for u in &mut big.units {
        u.q += off.q;
        u.r += off.r;
    }
    for o in &mut big.objectives {
        o.q += off.q;
        o.r += off.r;
    }
    let base = GameState::new(&big, 0);
    let mut units = s.units.clone();
    for u in &mut units {
        u.pos = u.pos + off;
    }
    base.with_snapshot(&Snapshot { turn: s.turn, phase: s.phase, score: s.score, units })
}

fn channel_oracle(s: &GameState, unit: UnitId, radius: u32, horizon: u32, subgoal: Option<HexCoord>) -> Vec<f64> {
    let me = s.unit(unit).expect("living");
    let n = disk_size(radius);
    let window = disk(me.pos, radius);
    let slot_of = |h: HexCoord| -> Option<(usize, f64)> {
        let d = distance(me.pos, h);
        if d <= radius {
            Some((window.iter().position(|&c| c == h).unwrap(), 1.0))
        } else if d < horizon {
            let t = radial_target(me.pos, h, radius).unwrap();
            Some((window.iter().position(|&c| c == t).unwrap(), (horizon - d) as f64 / (horizon - radius) as f64))
        } else {
            None
        }
    };
    let mut v = vec![0.0; NUM_CHANNELS * n + 2];
    for u in &s.units {
        if let Some((slot, w)) = slot_of(u.pos) {
            let ch = if u.faction == me.faction { 0 } else { 1 };
            v[ch * n + slot] += w * u.strength as f64 / 100.0;
        }
    }
    let max_obj = s.board.objectives.iter().map(|o| o.value).max().unwrap_or(0);
    for o in &s.board.objectives {
        if let Some((slot, w)) = slot_of(o.pos) {
            v[2 * n + slot] += w * o.value as f64 / max_obj as f64;
        }
    }
    for h in disk(me.pos, horizon - 1) {
        let (slot, w) = slot_of(h).expect("inside horizon");
        let (cost, def) = match s.board.terrain(h) {
            None | Some(Terrain::Water) => (1.0, 0.0),
            Some(Terrain::Clear) => (0.5, 1.0),
            Some(Terrain::Rough) => (1.0, 0.75),
            Some(Terrain::Urban) => (0.5, 0.5),
        };
        v[3 * n + slot] += w * cost;
        v[4 * n + slot] += w * def;
    }
    if let Some(g) = subgoal {
        if let Some((slot, w)) = slot_of(g) {
            v[5 * n + slot] += w;
        }
    }
    v[NUM_CHANNELS * n] = me.strength as f64 / 100.0;
    v[NUM_CHANNELS * n + 1] = s.turn as f64 / s.max_turns as f64;
    v
}

fn observation_invariance() -> Outcome {
    let (radius, horizon) = (3, 12);
    let enc = LocalEncoder::new(radius, horizon).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(77);

    // Translation: a 5x5 board embedded in a 50x50 sea.
    let small = FuzzParams { min_side: 5, max_side: 5, ..FuzzParams::default() };
    let mut translated = 0;
    for _ in 0..200 {
        let sc = fuzz::random_scenario_with(&mut rng, &small);
        let s = GameState::new(&sc, 1);
        let off = HexCoord::new(rng.random_range(12..=33), rng.random_range(12..=33));
        let big = embed(&sc, &s, off, 50);
        for u in &s.units {
            let a = encode_local(&s, u.id, radius, horizon).map_err(|e| e.to_string())?;
            let b = encode_local(&big, u.id, radius, horizon).map_err(|e| e.to_string())?;
            ensure!(a == b, "unit {} differs after translation by {off}", u.id);
            translated += 1;
        }
    }

    // Perturbations at distance >= D0 leave the vector unchanged.
    let large = FuzzParams { min_side: 30, max_side: 40, max_units_per_side: 6, ..FuzzParams::default() };
    let mut perturbed = 0;
    for _ in 0..100 {
        let sc = fuzz::random_scenario_with(&mut rng, &large);
        let s = GameState::new(&sc, 0);
        let me = s.units[rng.random_range(0..s.units.len())].clone();
        let base = enc.encode(&s, me.id, None).map_err(|e| e.to_string())?;
        let mut p = sc.clone();
        let occupied: HashSet<HexCoord> = sc.units.iter().map(|u| HexCoord::new(u.q, u.r)).collect();
        let far: Vec<HexCoord> = (0..p.height as i32)
            .flat_map(|r| (0..p.width as i32).map(move |q| HexCoord::new(q, r)))
            .filter(|&c| distance(c, me.pos) >= horizon)
            .collect();
        for &c in &far {
            if rng.random_bool(0.3) && !occupied.contains(&c) {
                let row: &mut String = &mut p.terrain[c.r as usize];
                let mut chars: Vec<char> = row.chars().collect();
                chars[c.q as usize] = ['c', 'r', 'u', 'w'][rng.random_range(0..4)];
                *row = chars.into_iter().collect();
            }
        }
        let free: Vec<HexCoord> = far
            .iter()
            .copied()
            .filter(|c| !occupied.contains(c) && p.terrain_at(*c).is_some_and(|t| t.passable()))
            .collect();
        let mut next_id = sc.units.iter().map(|u| u.id).max().unwrap() + 1;
        for &c in free.iter().take(rng.random_range(0..6)) {
            let faction = if rng.random_bool(0.5) { Faction::Blue } else { Faction::Red };
            p.units.push(hexcommand::engine::UnitSpec {
                id: next_id,
                faction,
                kind: hexcommand::engine::UnitKind::Infantry,
                strength: rng.random_range(1..=100),
                q: c.q,
                r: c.r,
            });
            next_id += 1;
        }
        if let Some(maxv) = sc.objectives.iter().map(|o| o.value).max() {
            let taken: HashSet<HexCoord> = sc.objectives.iter().map(|o| HexCoord::new(o.q, o.r)).collect();
            if let Some(&c) = far.iter().find(|c| !taken.contains(c)) {
                p.objectives.push(hexcommand::engine::ObjectiveSpec {
                    q: c.q,
                    r: c.r,
                    value: rng.random_range(1..=maxv),
                });
            }
        }
        p.validate().map_err(|e| e.to_string())?;
        let ps = GameState::new(&p, 0);
        let after = enc.encode(&ps, me.id, None).map_err(|e| e.to_string())?;
        ensure!(base == after, "perturbation beyond D0 changed unit {}", me.id);
        perturbed += 1;
    }

    // Far-field accumulation against a per-entity brute force.
    let mut worst: f64 = 0.0;
    let mid =
        FuzzParams { min_side: 4, max_side: 24, max_units_per_side: 10, max_objectives: 4, ..FuzzParams::default() };
    for _ in 0..300 {
        let sc = fuzz::random_scenario_with(&mut rng, &mid);
        let s = GameState::new(&sc, 0);
        let u = s.units[rng.random_range(0..s.units.len())].id;
        let goal = HexCoord::new(rng.random_range(0..sc.width as i32), rng.random_range(0..sc.height as i32));
        let got = enc.encode_unclamped(&s, u, Some(goal)).map_err(|e| e.to_string())?;
        let want = channel_oracle(&s, u, radius, horizon, Some(goal));
        for (a, b) in got.values.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure!(worst <= 1e-12, "accumulation differs from brute force by {worst:e}");
    Ok(format!("{translated} translated encodings equal, {perturbed} far perturbations inert, max accumulation error {worst:.1e}"))
}

fn decay_properties() -> Outcome {
    let (r, d0) = (3u32, 12u32);
    let mut prev = f64::INFINITY;
    for d in 0..=40u32 {
        let w = decay_weight(d, r, d0).map_err(|e| e.to_string())?;
        let expected = if d <= r {
            1.0
        } else if d >= d0 {
            0.0
        } else {
            (d0 - d) as f64 / (d0 - r) as f64
        };
        ensure!(w == expected, "w({d}) = {w}, expected {expected}");
        ensure!(w <= prev, "w not monotone at {d}");
        prev = w;
    }
    // Linear: constant first difference across the band.
    for d in r..d0 {
        let step = decay_weight(d, r, d0).unwrap() - decay_weight(d + 1, r, d0).unwrap();
        ensure!((step - 1.0 / 9.0).abs() < 1e-15, "slope at {d} is {step}");
    }
    Ok("w(d) exact for d = 0..40 with R=3, D0=12".into())
}

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut sizes = vec![rng.random_range(1..=8)];
        for _ in 0..rng.random_range(1..=3) {
            sizes.push(rng.random_range(2..=10));
        }
        sizes.push(rng.random_range(1..=5));
        let mut f = Approximator::random(&sizes, &mut rng).map_err(|e| e.to_string())?;
        let jitter: Vec<f64> = f.params().iter().map(|p| p + rng.random_range(-0.1..0.1)).collect();
        f.set_params(&jitter).map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic: Vec<f64> = f.gradient(&x, &up).map_err(|e| e.to_string())?.iter().collect();
        let objective = |p: &[f64]| {
            let g = Approximator::from_params(&sizes, p).unwrap();
            g.forward(&x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
        };
        let base = f.params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            let plus = objective(&p);
            p[i] -= 2.0 * h;
            let minus = objective(&p);
            let fd = (plus - minus) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((analytic[i] - fd).abs() / denom);
        }
    }
    let el = t0.elapsed();
    ensure!(worst < 1e-4, "max relative error {worst:e}");
    ensure!(el < Duration::from_secs(60), "took {el:?}");
    Ok(format!("100 random approximators, max relative error {worst:.2e}, {:.1} s", el.as_secs_f64()))
}

// ---------------------------------------------------------------------------

/// Blue-on-move states of the toy game against a passing red, with Q* by
/// backward induction over the finite turn horizon.
struct ValueIteration {
    q: HashMap<StateKey, Vec<(Action, f64)>>,
}

impl ValueIteration {
    fn solve(sc: &Scenario, gamma: f64) -> Self {
        let mut vi = Self { q: HashMap::new() };
        vi.value(&GameState::new(sc, 0), gamma);
        vi
    }

    /// Advances through red's passes; returns (blue-signed reward, next blue state).
    fn successor(s: &GameState, unit: UnitId, a: Action) -> (f64, Option<GameState>) {
        let mut n = s.clone();
        let mut r = n.apply(unit, a).unwrap().reward as f64;
        while let Some(u) = n.unit_on_move() {
            if n.phase == Faction::Blue {
                return (r, Some(n));
            }
            r += n.apply(u, Action::Pass).unwrap().reward as f64;
        }
        (r, None)
    }

    fn value(&mut self, s: &GameState, gamma: f64) -> f64 {
        let key = state_key(s);
        if let Some(qs) = self.q.get(&key) {
            return qs.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        }
        let unit = s.unit_on_move().unwrap();
        let mut qs = Vec::new();
        for a in s.legal_actions(unit).unwrap() {
            let (r, next) = Self::successor(s, unit, a);
            let v = next.map_or(0.0, |n| self.value(&n, gamma));
            qs.push((a, r + gamma * v));
        }
        let best = qs.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        self.q.insert(key, qs);
        best
    }

    fn optimal(&self, key: &StateKey) -> Option<Vec<Action>> {
        let qs = self.q.get(key)?;
        let best = qs.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        Some(qs.iter().filter(|x| x.1 >= best - 1e-9 * best.abs().max(1.0)).map(|x| x.0).collect())
    }
}

fn tabular_oracle() -> Outcome {
    let t0 = Instant::now();
    let sc = Scenario::from_json(
        r#"{"name":"toy","width":4,"height":4,"max_turns":6,
            "terrain":["cccc","crcc","ccuc","cccc"],
            "objectives":[{"q":2,"r":1,"value":3},{"q":1,"r":3,"value":2}],
            "units":[{"id":1,"faction":"blue","strength":100,"q":0,"r":1},
                     {"id":2,"faction":"red","strength":100,"q":3,"r":2}]}"#,
    )
    .map_err(|e| e.to_string())?;
    let cfg = TabularConfig {
        steps: 50_000,
        gamma: 0.9,
        seed: 3,
        alpha: 1.0,
        epsilon_end: 0.2,
        epsilon_decay_steps: 40_000,
        ..TabularConfig::default()
    };
    let out = tabular_q_learn(&sc, &mut ScriptedPolicy::pass(), &cfg).map_err(|e| e.to_string())?;
    let vi = ValueIteration::solve(&sc, cfg.gamma);
    let mut matched = 0usize;
    for key in &out.visited {
        let optimal = vi.optimal(key).ok_or("visited state missing from the enumerated MDP")?;
        let legal: Vec<Action> = vi.q[key].iter().map(|x| x.0).collect();
        if optimal.contains(&out.table.greedy(key, &legal)) {
            matched += 1;
        }
    }
    let frac = matched as f64 / out.visited.len() as f64;
    let el = t0.elapsed();
    ensure!(frac >= 0.95, "greedy matches optimal on {matched}/{} visited states ({frac:.3})", out.visited.len());
    ensure!(el < Duration::from_secs(120), "took {el:?}");
    Ok(format!(
        "{matched}/{} visited states optimal ({:.1}%), {} states enumerated",
        out.visited.len(),
        100.0 * frac,
        vi.q.len()
    ))
}

fn eval_scores(
    sc: &Scenario,
    blue: &mut dyn BehaviorModel,
    red: &mut dyn BehaviorModel,
    seeds: std::ops::Range<u64>,
) -> Result<Vec<f64>, String> {
    seeds.map(|s| run_episode(sc, blue, red, s).map(|l| l.final_score as f64).map_err(|e| e.to_string())).collect()
}

fn dqn_learning() -> Outcome {
    let t0 = Instant::now();
    let sc = scenario("duel5.json");
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "scenarios", "configs", "dqn_duel5.toml"].iter().collect();
    let spec: TrainSpec =
        toml::from_str(&std::fs::read_to_string(path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let TrainSpec::Dqn(cfg) = spec else { return Err("config is not a dqn config".into()) };
    ensure!(cfg.episodes == 20_000, "config trains {} episodes", cfg.episodes);
    let out = train_dqn(&sc, &mut ScriptedPolicy::pass(), &cfg).map_err(|e| e.to_string())?;
    let mut learned = out.policy;
    let seeds = 100_000..100_100;
    let dqn = eval_scores(&sc, &mut learned, &mut ScriptedPolicy::pass(), seeds.clone())?;
    let random = eval_scores(&sc, &mut ScriptedPolicy::random(5), &mut ScriptedPolicy::pass(), seeds)?;
    let (t, _, p) = welch_greater(&dqn, &random);
    let el = t0.elapsed();
    let detail = format!(
        "dqn mean {:.2} vs random {:.2} over 100 episodes, t = {t:.2}, p = {p:.2e}, {:.0} s",
        mean_var(&dqn).0,
        mean_var(&random).0,
        el.as_secs_f64()
    );
    ensure!(p < 0.05, "{detail}");
    ensure!(el < Duration::from_secs(1800), "{detail}");
    Ok(detail)
}

fn score_model() -> Outcome {
    let t0 = Instant::now();
    let sc = stochastic(scenario("skirmish.json"));
    let mut blue = ScriptedPolicy::random(1);
    let mut red = ScriptedPolicy::greedy();
    let logs: Vec<EpisodeLog> = (0..2000)
        .map(|s| run_episode(&sc, &mut blue, &mut red, s))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let (_, report) = train_score_model(&logs, &ScoreConfig::default()).map_err(|e| e.to_string())?;
    let el = t0.elapsed();
    let detail = format!(
        "held-out MSE {:.2} vs constant-mean baseline {:.2} on 2000 episodes, {:.0} s",
        report.heldout_mse,
        report.baseline_mse,
        el.as_secs_f64()
    );
    ensure!(report.heldout_mse < report.baseline_mse, "{detail}");
    ensure!(el < Duration::from_secs(600), "{detail}");
    Ok(detail)
}

// ---------------------------------------------------------------------------

fn random_predictor(rng: &mut ChaCha8Rng, grid: u32) -> ScorePredictor {
    let mut p = ScorePredictor::constant("b", "a", grid, rng.random_range(-5.0..5.0));
    p.net = Approximator::random(&[4 * (grid * grid) as usize + 1, 6, 1], rng).unwrap();
    p
}

fn multimodel() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let enc = EncoderParams::default();
    let dqn_net = Approximator::random(&TrainConfig::default().layer_sizes(), &mut rng).unwrap();

    // Singleton equivalence.
    let mut states = 0;
    while states < 1000 {
        let (s, u) = fuzz::random_live_state(&mut rng);
        let seed = rng.random();
        let behaviors: Vec<(Box<dyn BehaviorModel>, Box<dyn BehaviorModel>)> = vec![
            (Box::new(ScriptedPolicy::greedy()), Box::new(ScriptedPolicy::greedy())),
            (Box::new(ScriptedPolicy::goal()), Box::new(ScriptedPolicy::goal())),
            (Box::new(ScriptedPolicy::random(seed)), Box::new(ScriptedPolicy::random(seed))),
            (
                Box::new(DqnPolicy::new(dqn_net.clone(), enc).unwrap()),
                Box::new(DqnPolicy::new(dqn_net.clone(), enc).unwrap()),
            ),
        ];
        for (mut alone, inner) in behaviors {
            let mut mm =
                MultiModel::new(s.phase, vec![ModelPair { behavior: inner, predictor: random_predictor(&mut rng, 4) }])
                    .map_err(|e| e.to_string())?;
            let a = alone.act(&s, u).map_err(|e| e.to_string())?;
            let b = mm.act(&s, u).map_err(|e| e.to_string())?;
            ensure!(a == b, "{} alone chose {a}, singleton multi-model chose {b}", alone.name());
        }
        states += 1;
    }

    // Invariance under strictly increasing transforms.
    let transforms: [fn(f64) -> f64; 4] = [|x| 3.0 * x + 7.0, |x| x.powi(3), f64::atan, |x| (x / 10.0).exp()];
    let mut selections = 0;
    for _ in 0..1000 {
        let (s, _) = fuzz::random_live_state(&mut rng);
        let k = rng.random_range(2..6);
        let repo: Vec<ModelPair> = (0..k)
            .map(|_| ModelPair { behavior: Box::new(ScriptedPolicy::pass()), predictor: random_predictor(&mut rng, 4) })
            .collect();
        let mm = MultiModel::new(s.phase, repo).map_err(|e| e.to_string())?;
        let scores = mm.predict_all(&s).map_err(|e| e.to_string())?;
        for f in [Faction::Blue, Faction::Red] {
            let base = select(f, &scores);
            for t in transforms {
                let mapped: Vec<f64> = scores.iter().map(|&x| t(x)).collect();
                ensure!(select(f, &mapped) == base, "selection changed under a monotone transform");
                selections += 1;
            }
        }
    }

    // Forced predictor: the dominant pair always acts.
    for _ in 0..1000 {
        let (s, u) = fuzz::random_live_state(&mut rng);
        let k = rng.random_range(2..6);
        let dominant = rng.random_range(0..k);
        let sign = s.phase.sign() as f64;
        let repo: Vec<ModelPair> = (0..k)
            .map(|i| {
                let mut p = random_predictor(&mut rng, 4);
                p.net = Approximator::zeros(&[p.net.input_len(), 1]).unwrap();
                p.target_mean = if i == dominant { 1e6 * sign } else { rng.random_range(-100.0..100.0) };
                let behavior: Box<dyn BehaviorModel> =
                    if i == dominant { Box::new(ScriptedPolicy::greedy()) } else { Box::new(ScriptedPolicy::pass()) };
                ModelPair { behavior, predictor: p }
            })
            .collect();
        let mut mm = MultiModel::new(s.phase, repo).map_err(|e| e.to_string())?;
        mm.act(&s, u).map_err(|e| e.to_string())?;
        ensure!(mm.records()[0].chosen == dominant, "chose {} instead of dominant {dominant}", mm.records()[0].chosen);
    }
    Ok(format!(
        "1000 singleton states x 4 behaviors equal, {selections} transformed selections stable, 1000 forced selections"
    ))
}

// ---------------------------------------------------------------------------

fn check_persistence(log: &EpisodeLog) -> Result<usize, String> {
    let base = GameState::new(&log.header.scenario, log.header.seed);
    let mut active: BTreeMap<UnitId, ActiveSubgoal> = BTreeMap::new();
    let mut reissues = 0;
    for rec in log.records.iter().filter(|r| r.faction == Faction::Blue) {
        let Some(DecisionTrace::Hierarchy { subgoal, issued_turn, .. }) = rec.trace else {
            return Err(format!("blue step at turn {} has no hierarchy trace", rec.turn));
        };
        let s = base.with_snapshot(&rec.state);
        match active.get(&rec.unit) {
            Some(prev) if prev.issued_turn == issued_turn => {
                if prev.subgoal != subgoal {
                    return Err(format!("unit {} subgoal changed without reissue at turn {}", rec.unit, rec.turn));
                }
            }
            prev => {
                if issued_turn != rec.turn {
                    return Err(format!("unit {} new subgoal stamped {issued_turn} at turn {}", rec.unit, rec.turn));
                }
                if !at_boundary(&s, rec.unit, prev) {
                    return Err(format!("unit {} reissued mid-horizon at turn {}", rec.unit, rec.turn));
                }
                reissues += 1;
            }
        }
        active.insert(rec.unit, ActiveSubgoal { subgoal, issued_turn });
    }
    Ok(reissues)
}

fn hierarchy() -> Outcome {
    // Partition on fuzzed states.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = FuzzParams { min_side: 6, max_side: 20, max_units_per_side: 20, ..FuzzParams::default() };
    let mut groups_seen = 0;
    let mut flagged = 0;
    for _ in 0..200 {
        let sc = fuzz::random_scenario_with(&mut rng, &params);
        let mut s = GameState::new(&sc, 0);
        for _ in 0..rng.random_range(0..30) {
            let Some(u) = s.unit_on_move() else { break };
            let legal = s.legal_actions(u).unwrap();
            s.apply(u, legal[rng.random_range(0..legal.len())]).unwrap();
        }
        for f in [Faction::Blue, Faction::Red] {
            let groups = partition_units(&s, f);
            let mut covered: Vec<UnitId> = groups.iter().flat_map(|g| g.units.iter().copied()).collect();
            covered.sort_unstable();
            let expected: Vec<UnitId> = s.faction_units(f).map(|u| u.id).collect();
            ensure!(covered == expected, "groups {covered:?} do not partition {expected:?}");
            for g in &groups {
                if g.flagged {
                    ensure!(g.units.len() < MIN_GROUP, "flagged group of size {}", g.units.len());
                    flagged += 1;
                } else {
                    ensure!((MIN_GROUP..=MAX_GROUP).contains(&g.units.len()), "group of size {}", g.units.len());
                }
                groups_seen += 1;
            }
        }
    }

    // 20-unit agent vs greedy red, stochastic combat.
    let sc = stochastic(scenario("battle20.json"));
    ensure!(sc.units.iter().filter(|u| u.faction == Faction::Blue).count() == 20, "battle20 needs 20 blue units");
    let mut hier_scores = Vec::new();
    let mut reissues = 0;
    let mut agent = HierarchicalPolicy::scripted();
    let mut red = ScriptedPolicy::greedy();
    for seed in 0..100 {
        let log = run_episode(&sc, &mut agent, &mut red, seed).map_err(|e| format!("seed {seed}: {e}"))?;
        log.replay().map_err(|e| format!("seed {seed}: {e}"))?;
        let base = GameState::new(&sc, seed);
        for rec in &log.records {
            ensure!(
                base.with_snapshot(&rec.state).is_legal(rec.unit, rec.action),
                "seed {seed}: illegal {}",
                rec.action
            );
        }
        reissues += check_persistence(&log).map_err(|e| format!("seed {seed}: {e}"))?;
        hier_scores.push(log.final_score as f64);
    }
    let random = eval_scores(&sc, &mut ScriptedPolicy::random(3), &mut ScriptedPolicy::greedy(), 0..100)?;
    let (t, _, p) = welch_greater(&hier_scores, &random);
    let detail = format!(
        "{groups_seen} groups ({flagged} flagged) on 200 states; 100 episodes, 0 illegal, {reissues} reissues at boundaries; mean {:.1} vs random {:.1}, t = {t:.1}, p = {p:.1e}",
        mean_var(&hier_scores).0,
        mean_var(&random).0
    );
    ensure!(p < 0.05, "{detail}");
    Ok(detail)
}

/// Plays a fixed list of blue actions in order.
struct Scripted(VecDeque<(UnitId, Action)>);

impl BehaviorModel for Scripted {
    fn name(&self) -> &str {
        "scripted-list"
    }

    fn act(&mut self, _s: &GameState, unit: UnitId) -> hexcommand::Result<Action> {
        let (u, a) = self.0.pop_front().expect("action list long enough");
        assert_eq!(u, unit);
        Ok(a)
    }
}

fn server_equivalence() -> Outcome {
    let sc = stochastic(scenario("skirmish.json"));
    for seed in 0..20u64 {
        let source = run_episode(&sc, &mut ScriptedPolicy::random(seed), &mut ScriptedPolicy::greedy(), seed)
            .map_err(|e| e.to_string())?;
        let actions: VecDeque<(UnitId, Action)> =
            source.records.iter().filter(|r| r.faction == Faction::Blue).map(|r| (r.unit, r.action)).collect();

        let direct = run_episode(&sc, &mut Scripted(actions.clone()), &mut ScriptedPolicy::greedy(), seed)
            .map_err(|e| e.to_string())?;
        let mut transport = ScriptedTransport::default();
        transport.incoming =
            actions.iter().map(|&(unit, action)| ProtocolMessage::Act { unit, action }.to_line()).collect();
        let served = session_loop(&sc, Box::new(ScriptedPolicy::greedy()), seed, &mut transport, None)
            .map_err(|e| e.to_string())?;
        let over = transport
            .sent
            .iter()
            .filter_map(|l| match serde_json::from_str::<ProtocolMessage>(l) {
                Ok(ProtocolMessage::Gameover { final_score }) => Some(final_score),
                _ => None,
            })
            .next_back()
            .ok_or("no gameover message")?;
        ensure!(!served.truncated, "seed {seed}: session ended early");
        ensure!(over == direct.final_score, "seed {seed}: server {over} vs direct {}", direct.final_score);
        ensure!(served.final_score == direct.final_score, "seed {seed}: logged final score differs");
        let strip = |l: &EpisodeLog| {
            l.records.iter().map(|r| (r.unit, r.action, r.reward, r.state.clone())).collect::<Vec<_>>()
        };
        ensure!(strip(&served) == strip(&direct), "seed {seed}: step sequences differ");
    }
    Ok("20 scripted protocol sessions match run_episode exactly".into())
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("hex-oracle", hex_oracle),
        ("engine-determinism", determinism),
        ("conservation", conservation),
        ("observation-invariance", observation_invariance),
        ("decay-properties", decay_properties),
        ("gradient-check", gradient_check),
        ("tabular-oracle", tabular_oracle),
        ("dqn-learning-sanity", dqn_learning),
        ("score-model", score_model),
        ("multi-model", multimodel),
        ("hierarchy", hierarchy),
        ("server-equivalence", server_equivalence),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
