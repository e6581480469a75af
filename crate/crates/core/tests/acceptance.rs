//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so every criterion is evaluated and reported even
//! when an earlier one fails. Set `RTIFORM_ACCEPTANCE_STRICT=1` to turn any
//! failure into a non-zero exit status.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtiform::feasibility::{
    constraint_residual, maintenance_velocity, synthesize_spec, tau, FormationKind, LimitPair, VelocityLimits,
};
use rtiform::lie::{adjoint, exp_se3, log_se3, Pose, Rotation, Twist, Vec3};
use rtiform::sim::{run, run_with, write_csv, RunOptions, Scenario, TrajectoryLog};
use rtiform::topology::{virtual_parent, ParentSnapshot, SwarmTopology};

const SEED: u64 = 0x5eed_f0a3;
const SAMPLES: usize = 10_000;

type Check = Box<dyn FnOnce(&mut ChaCha8Rng) -> Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> Scenario {
    Scenario::load(&scenario_dir().join(format!("{name}.toml"))).expect("shipped scenario loads")
}

fn in_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm() <= 1.0 {
            return v * radius;
        }
    }
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = in_ball(rng, 1.0);
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

/// Pose built through nalgebra's own axis-angle map.
fn random_pose(rng: &mut ChaCha8Rng, max_angle: f64, max_offset: f64) -> Pose {
    let r = Rotation3::from_scaled_axis(in_ball(rng, max_angle));
    Pose::new(Rotation::from_matrix_unchecked(*r.matrix()), in_ball(rng, max_offset))
}

fn homogeneous_hat(xi: &Twist) -> Matrix4<f64> {
    let (w, v) = (xi.angular, xi.linear);
    Matrix4::new(
        0.0, -w.z, w.y, v.x, //
        w.z, 0.0, -w.x, v.y, //
        -w.y, w.x, 0.0, v.z, //
        0.0, 0.0, 0.0, 0.0,
    )
}

fn homogeneous_vee(m: &Matrix4<f64>) -> Vector6<f64> {
    Vector6::new(m[(2, 1)], m[(0, 2)], m[(1, 0)], m[(0, 3)], m[(1, 3)], m[(2, 3)])
}

/// `Rz(yaw) Ry(pitch) Rx(roll)` from elementary rotations.
fn zyx(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

fn lie_roundtrips(rng: &mut ChaCha8Rng) -> Outcome {
    let start = Instant::now();
    let mut roundtrip: f64 = 0.0;
    let mut conjugation: f64 = 0.0;
    for _ in 0..SAMPLES {
        let xi = Twist::new(in_ball(rng, PI - 0.05), in_ball(rng, 10.0));
        let back = match log_se3(&exp_se3(&xi)) {
            Ok(b) => b,
            Err(e) => return outcome(false, format!("log failed on {xi:?}: {e}")),
        };
        roundtrip = roundtrip.max((back - xi).norm());

        let g = random_pose(rng, PI - 0.05, 10.0);
        let h = g.to_homogeneous();
        let h_inv = h.try_inverse().expect("rigid transforms are invertible");
        let oracle = homogeneous_vee(&(h * homogeneous_hat(&xi) * h_inv));
        conjugation = conjugation.max((adjoint(&g, &xi).to_vector() - oracle).norm());
    }
    let elapsed = start.elapsed();
    outcome(
        roundtrip <= 1e-9 && conjugation <= 1e-12 && elapsed < Duration::from_secs(5),
        format!(
            "max |log(exp xi) - xi| = {roundtrip:.2e}, max adjoint vs conjugation = {conjugation:.2e}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn nonholonomic_twist(rng: &mut ChaCha8Rng) -> Twist {
    Twist::new(in_ball(rng, 1.0), Vec3::new(rng.random_range(0.5..10.0), 0.0, 0.0))
}

fn virtual_parent_closure(rng: &mut ChaCha8Rng) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..SAMPLES {
        let k = rng.random_range(2..=4usize);
        let child = k + 1;
        let mut edges: Vec<(usize, usize)> = (1..=k).map(|p| (0, p)).collect();
        edges.extend((1..=k).map(|p| (p, child)));
        let lambdas: Vec<f64> = (1..k).map(|_| rng.random_range(0.0..=1.0)).collect();
        let weights = BTreeMap::from([(child, lambdas)]);
        let topo = SwarmTopology::new(k + 2, &edges, &weights).expect("valid graph");
        let snapshot = ParentSnapshot {
            poses: (0..k).map(|_| random_pose(rng, 1.0, 20.0)).collect(),
            twists: (0..k).map(|_| nonholonomic_twist(rng)).collect(),
        };
        let (_, xi) = match virtual_parent(&topo, child, &snapshot) {
            Ok(v) => v,
            Err(e) => return outcome(false, format!("virtual parent failed: {e}")),
        };
        worst = worst.max(xi.linear.y.abs()).max(xi.linear.z.abs());
    }
    outcome(
        worst <= 1e-12,
        format!("max lateral/vertical speed {worst:.2e} over {SAMPLES} nodes"),
    )
}

fn synthesis(rng: &mut ChaCha8Rng) -> Outcome {
    let mut residual: f64 = 0.0;
    let mut speed_gap: f64 = 0.0;
    let mut min_speed = f64::INFINITY;
    let mut done = 0;
    while done < SAMPLES {
        let leader = Twist::new(in_ball(rng, 1.0), Vec3::new(rng.random_range(1.0..=10.0), 0.0, 0.0));
        let p = in_ball(rng, 10.0);
        let roll = rng.random_range(-PI..PI);
        let t = leader.angular.cross(&p) + leader.linear;
        if tau(&leader, &p).is_err() {
            continue;
        }
        done += 1;
        let spec = synthesize_spec(&leader, &p, roll, FormationKind::Rti).expect("tau is non-zero");
        let a = spec.angles;
        // the follower body axes must see tau purely along x
        let in_body = zyx(a.roll, a.pitch, a.yaw).transpose() * t;
        residual = residual.max(in_body.y.abs()).max(in_body.z.abs());
        residual = residual.max(constraint_residual(&spec, &leader));
        let forward = maintenance_velocity(&spec, &leader).linear.x;
        speed_gap = speed_gap.max((forward - t.norm()).abs() / t.norm().max(1.0));
        min_speed = min_speed.min(forward);
    }
    outcome(
        residual <= 1e-10 && speed_gap <= 1e-12 && min_speed > 0.0,
        format!("max residual {residual:.2e}, max |v_x - |tau|| (rel) {speed_gap:.2e}, min v_x {min_speed:.3e}"),
    )
}

fn saturation(rng: &mut ChaCha8Rng) -> Outcome {
    let mut norm_gap: f64 = 0.0;
    let mut band_violation: f64 = 0.0;
    let mut checks = 0usize;
    for _ in 0..SAMPLES {
        let leader = Twist::new(in_ball(rng, 2.0), Vec3::new(rng.random_range(1.0..10.0), 0.0, 0.0));
        let p = in_ball(rng, 20.0);
        if let Ok(spec) = synthesize_spec(&leader, &p, rng.random_range(-PI..PI), FormationKind::Rti) {
            let w = maintenance_velocity(&spec, &leader).angular.norm();
            norm_gap = norm_gap.max((w - leader.angular.norm()).abs());
        }
    }
    for _ in 0..1000 {
        let alpha = rng.random_range(0.05..1.0);
        let low = rng.random_range(2.0..6.0);
        let up = low + rng.random_range(0.5..5.0);
        let leader = VelocityLimits::new(alpha, low, up).unwrap();
        let follower = VelocityLimits::new(
            alpha,
            low * rng.random_range(0.1..0.95),
            up + rng.random_range(0.1..5.0),
        )
        .unwrap();
        let pair = LimitPair::new(leader, follower).unwrap();
        let c2 = pair.max_offset(true).value().expect("turning leader has a bound");
        let p = unit(rng) * c2 * rng.random_range(0.0..=1.0);
        for speed in [low, up] {
            for _ in 0..8 {
                let xi = Twist::new(unit(rng) * alpha, Vec3::new(speed, 0.0, 0.0));
                let spec = synthesize_spec(&xi, &p, 0.0, FormationKind::Rti).expect("leader speed exceeds alpha c2");
                let v = maintenance_velocity(&spec, &xi).linear.x;
                let direct = (xi.angular.cross(&p) + xi.linear).norm();
                band_violation = band_violation
                    .max(follower.linear_lower - v)
                    .max(v - follower.linear_upper)
                    .max((v - direct).abs());
                checks += 1;
            }
        }
    }
    outcome(
        norm_gap <= 1e-12 && band_violation <= 1e-12,
        format!(
            "max ||w_F| - |w_L|| = {norm_gap:.2e}; {checks} worst-case twists, worst band excess {band_violation:.2e}"
        ),
    )
}

fn maintenance() -> Outcome {
    let s = load("wedge5_helix");
    let log = run(&s).expect("wedge runs");
    let ticks = log.ticks() - 1;
    let worst = log.max_error(0, log.ticks());
    outcome(
        worst <= 1e-9 && ticks >= SAMPLES,
        format!("{} followers, {ticks} ticks, max |X| = {worst:.2e}", s.followers.len()),
    )
}

/// Per-follower error samples at whole seconds `0..=until`.
fn error_samples(log: &TrajectoryLog, id: usize, until: usize) -> Vec<f64> {
    (0..=until)
        .map(|s| log.row(log.tick_at(s as f64), id).err_norm)
        .collect()
}

fn first_increase(samples: &[f64], threshold: f64) -> Option<usize> {
    samples.windows(2).position(|w| w[0] >= threshold && w[1] >= w[0])
}

fn random_perturbations(s: &mut Scenario, rng: &mut ChaCha8Rng, max_norm: f64) {
    for f in s.followers.iter_mut() {
        let dir = Twist::new(in_ball(rng, 1.0), in_ball(rng, 1.0));
        f.perturb = dir * (rng.random_range(0.05..=max_norm) / dir.norm());
    }
}

fn line_convergence(rng: &mut ChaCha8Rng) -> Outcome {
    let start = Instant::now();
    let base = load("wedge5_line");
    let mut cases = vec![base.clone()];
    for _ in 0..9 {
        let mut s = base.clone();
        random_perturbations(&mut s, rng, 0.5);
        cases.push(s);
    }
    let mut worst_angle: f64 = 0.0;
    let mut worst_error: f64 = 0.0;
    let mut worst_initial: f64 = 0.0;
    let mut increases = Vec::new();
    let mut late_increases = 0;
    for (c, s) in cases.iter().enumerate() {
        let log = run(s).expect("line wedge runs");
        let from = log.tick_at(20.0);
        for k in from..log.ticks() {
            for r in &log.tick(k)[1..] {
                worst_angle = worst_angle
                    .max(r.rel.roll.abs())
                    .max(r.rel.pitch.abs())
                    .max(r.rel.yaw.abs());
            }
        }
        worst_error = worst_error.max(log.max_error(from, log.ticks()));
        for f in &s.followers {
            worst_initial = worst_initial.max(log.row(0, f.id).err_norm);
            let e = error_samples(&log, f.id, 20);
            late_increases += usize::from(first_increase(&e[1..], 1e-3).is_some());
            if let Some(i) = first_increase(&e, 1e-3) {
                increases.push(format!(
                    "case {c} uav {} {:.3}->{:.3} over [{i}, {}] s",
                    f.id,
                    e[i],
                    e[i + 1],
                    i + 1
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    let monotone = increases.is_empty();
    let mut detail = format!(
        "{} cases, initial |X| <= {worst_initial:.3}; after 20 s max angle {worst_angle:.2e}, max |X| {worst_error:.2e}; {:.2} s",
        cases.len(),
        elapsed.as_secs_f64()
    );
    if !monotone {
        detail.push_str(&format!(
            "; 1 s error samples not strictly decreasing in {} follower run(s) ({late_increases} after the first second), e.g. {}",
            increases.len(),
            increases[0]
        ));
    }
    outcome(
        worst_initial <= 0.5 + 1e-12
            && worst_angle <= 1e-3
            && worst_error < 1e-3
            && monotone
            && elapsed < Duration::from_secs(10),
        detail,
    )
}

fn helix_convergence(rng: &mut ChaCha8Rng) -> Outcome {
    let base = load("echelon5_helix");
    let mut cases = vec![base.clone()];
    for _ in 0..4 {
        let mut s = base.clone();
        random_perturbations(&mut s, rng, 0.5);
        cases.push(s);
    }
    let mut worst: f64 = 0.0;
    for s in &cases {
        assert!(s.followers.iter().all(|f| s.topology.parents(f.id) == [0]));
        let xi = s.profile.twist_at(0.0).unwrap();
        let log = run(s).expect("echelon runs");
        for f in &s.followers {
            let t = xi.angular.cross(&f.offset) + xi.linear;
            let yaw = t.y.atan2(t.x);
            let pitch = (-t.z).atan2(t.x.hypot(t.y));
            for k in log.tick_at(20.0)..log.ticks() {
                let rel = log.row(k, f.id).rel;
                worst = worst
                    .max((rel.pitch - pitch).abs())
                    .max((rel.yaw - yaw).abs())
                    .max((rel.roll - f.roll).abs());
            }
        }
    }
    outcome(
        worst <= 1e-3,
        format!(
            "{} cases; after 20 s max deviation from synthesized angles {worst:.2e} rad",
            cases.len()
        ),
    )
}

fn speed_ordering() -> Outcome {
    let s = load("circle3");
    let xi = s.profile.twist_at(0.0).unwrap();
    let w = xi.angular.z;
    let log = run(&s).expect("circle runs");
    let settled = (0..log.ticks())
        .rev()
        .find(|&k| log.tick(k)[1..].iter().any(|r| r.err_norm >= 1e-3))
        .map_or(0, |k| k + 1);
    if settled + log.ticks() / 2 > log.ticks() {
        return outcome(false, format!("transient lasts until tick {settled}"));
    }
    let (inner, outer): (Vec<_>, Vec<_>) = s.followers.iter().partition(|f| f.offset.y * w > 0.0);
    let mut margin = f64::INFINITY;
    let mut required: f64 = 0.0;
    for k in settled..log.ticks() {
        let leader = log.row(k, 0).twist.linear.x;
        for f in &outer {
            let m = log.row(k, f.id).twist.linear.x - leader;
            required = required.max(0.9 * w.abs() * f.offset.y.abs());
            margin = margin.min(m / (w.abs() * f.offset.y.abs()));
        }
        for f in &inner {
            let m = leader - log.row(k, f.id).twist.linear.x;
            required = required.max(0.9 * w.abs() * f.offset.y.abs());
            margin = margin.min(m / (w.abs() * f.offset.y.abs()));
        }
    }
    let counts = !inner.is_empty() && !outer.is_empty();
    outcome(
        counts && margin >= 0.9,
        format!(
            "{} ticks after the transient; smallest margin {margin:.4} x |w| d (need 0.9, i.e. {required:.3} m/s)",
            log.ticks() - settled
        ),
    )
}

fn swarm_schedule() -> Outcome {
    let s = load("swarm10_piecewise");
    let start = Instant::now();
    let log = run(&s).expect("swarm runs");
    let elapsed = start.elapsed();
    let breaks = s.profile.breakpoints();
    let end = log.row(log.ticks() - 1, 0).t;
    let mut parts = Vec::new();
    let mut ok = s.node_count() == 10 && (end - 100.0).abs() < 1e-9;
    for (i, &b) in breaks.iter().enumerate() {
        let from = log.tick_at(b + 10.0);
        let next = breaks.get(i + 1).copied().unwrap_or(end).max(b + 10.0);
        let to = log.tick_at(next) + 1;
        let worst = log.max_error(from, to);
        ok &= worst < 1e-2;
        parts.push(format!("{b} s: {worst:.1e}"));
    }
    let finite = log.is_finite();
    ok &= finite && elapsed < Duration::from_secs(60);
    outcome(
        ok,
        format!(
            "{} vehicles, {:.2} s wall; max |X| from 10 s after each breakpoint [{}]; finite: {finite}",
            s.node_count(),
            elapsed.as_secs_f64(),
            parts.join(", ")
        ),
    )
}

fn csv_bytes(s: &Scenario, options: RunOptions) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&run_with(s, options).expect("shipped scenario runs"), &mut buf).expect("csv writes");
    buf
}

fn determinism() -> Outcome {
    let mut names: Vec<String> = std::fs::read_dir(scenario_dir())
        .expect("scenario directory")
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "toml").then(|| p.file_stem()?.to_str().map(str::to_string))?
        })
        .collect();
    names.sort();
    let mut differing = Vec::new();
    for name in &names {
        let s = load(name);
        let a = csv_bytes(&s, RunOptions::default());
        let b = csv_bytes(&s, RunOptions::default());
        let c = csv_bytes(&s, RunOptions { parallel: true });
        if a != b || a != c {
            differing.push(name.clone());
        }
    }
    outcome(
        differing.is_empty() && !names.is_empty(),
        format!(
            "{} scenarios run twice sequentially and once in parallel; differing: {:?}",
            names.len(),
            differing
        ),
    )
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let criteria: Vec<(&str, Check)> = vec![
        ("Lie-core roundtrips", Box::new(lie_roundtrips)),
        ("virtual parent stays nonholonomic", Box::new(virtual_parent_closure)),
        ("attitude synthesis", Box::new(synthesis)),
        ("speed limits and offset bound", Box::new(saturation)),
        ("formation maintenance is exact", Box::new(|_| maintenance())),
        ("convergence, straight line", Box::new(line_convergence)),
        ("convergence, helix", Box::new(helix_convergence)),
        ("speed ordering in a level turn", Box::new(|_| speed_ordering())),
        ("10-UAV scheduled maneuver", Box::new(|_| swarm_schedule())),
        ("deterministic CSV output", Box::new(|_| determinism())),
    ];
    let total = criteria.len();
    let mut passed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let o = check(&mut rng);
        passed += usize::from(o.pass);
        println!(
            "{} {:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!("acceptance: {passed}/{total} criteria passed");
    if passed < total && std::env::var_os("RTIFORM_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
