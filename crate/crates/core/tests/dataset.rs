use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use visnav::dataset::{
    generate_synthetic_dataset, load_dataset, DatasetEnv, DatasetEnvConfig, DatasetError, DatasetTask, GenerateConfig,
    LoadOptions, NoiseConfig, REWARD_COLLISION, REWARD_GOAL,
};
use visnav::env::{EnvError, NavEnv};
use visnav::grid::{shortest_path_length, success, Action, Heading, MotionModel, Pose};

fn small(seed: u64, w: usize, h: usize, per_pose: usize, noise: NoiseConfig) -> GenerateConfig {
    let mut cfg = GenerateConfig { seed, width: w, height: h, images_per_pose: per_pose, noise, ..Default::default() };
    cfg.render.size = 24;
    cfg
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
        out.push((rel, fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn five_by_five_has_100_pose_keys() {
    let ds = generate_synthetic_dataset(&small(1, 5, 5, 1, NoiseConfig::NONE)).unwrap();
    assert_eq!(ds.pose_count(), 100);
}

#[test]
fn record_count_for_4x4_with_three_images() {
    let ds = generate_synthetic_dataset(&small(2, 4, 4, 3, NoiseConfig::level(1.0))).unwrap();
    assert_eq!(ds.records().len(), 192);
}

#[test]
fn zero_noise_gives_identical_images_per_pose() {
    let ds = generate_synthetic_dataset(&small(3, 4, 4, 3, NoiseConfig::NONE)).unwrap();
    for pose in ds.map().free_poses() {
        let recs: Vec<_> = ds.records_at(&pose).collect();
        assert_eq!(recs.len(), 3);
        for r in &recs[1..] {
            assert_eq!(r.rgb.data, recs[0].rgb.data);
            assert_eq!(r.depth.data, recs[0].depth.data);
        }
    }
}

#[test]
fn same_seed_writes_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small(4, 4, 4, 2, NoiseConfig::level(1.0));
    generate_synthetic_dataset(&cfg).unwrap().write(a.path()).unwrap();
    generate_synthetic_dataset(&cfg).unwrap().write(b.path()).unwrap();
    assert_eq!(dir_files(a.path()), dir_files(b.path()));
}

#[test]
fn write_load_write_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ds = generate_synthetic_dataset(&small(5, 4, 3, 2, NoiseConfig::level(2.0))).unwrap();
    ds.write(a.path()).unwrap();
    let loaded = load_dataset(a.path(), LoadOptions::default()).unwrap();
    assert_eq!(loaded.records().len(), ds.records().len());
    assert_eq!(loaded.goal_poses(), ds.goal_poses());
    loaded.write(b.path()).unwrap();
    assert_eq!(dir_files(a.path()), dir_files(b.path()));
}

#[test]
fn missing_heading_is_reported_with_its_pose() {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&small(6, 5, 5, 1, NoiseConfig::NONE)).unwrap().write(dir.path()).unwrap();
    let index = dir.path().join("index.csv");
    let text = fs::read_to_string(&index).unwrap();
    // Drop the record of (2, 3, W): x = 0.4, y = 0.6.
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("0.4,0.6") || !l.contains(",W,")).collect();
    assert_eq!(kept.len(), text.lines().count() - 1);
    fs::write(&index, kept.join("\n") + "\n").unwrap();
    match load_dataset(dir.path(), LoadOptions::default()) {
        Err(e @ DatasetError::MissingPose(p)) => {
            assert_eq!(p, Pose::new(2, 3, Heading::W));
            assert!(e.to_string().contains("(2,3,W)"), "{e}");
        }
        other => panic!("expected missing pose, got {other:?}"),
    }
}

#[test]
fn off_grid_coordinate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&small(7, 3, 3, 1, NoiseConfig::NONE)).unwrap().write(dir.path()).unwrap();
    let index = dir.path().join("index.csv");
    let text = fs::read_to_string(&index).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let fields: Vec<&str> = lines[1].split(',').collect();
    let mut edited = fields.clone();
    let x: f64 = fields[0].parse::<f64>().unwrap() + 0.01;
    let xs = x.to_string();
    edited[0] = &xs;
    lines[1] = edited.join(",");
    fs::write(&index, lines.join("\n") + "\n").unwrap();
    let err = load_dataset(dir.path(), LoadOptions { snap_tolerance_cells: 0.02 }).unwrap_err();
    assert!(matches!(err, DatasetError::OffGrid { line: 2, .. }), "{err}");
    // The default tolerance accepts the same file.
    load_dataset(dir.path(), LoadOptions::default()).unwrap();
}

#[test]
fn goal_poses_face_obstacles() {
    let ds = generate_synthetic_dataset(&small(8, 6, 6, 1, NoiseConfig::NONE)).unwrap();
    assert!(!ds.goal_poses().is_empty());
    for g in ds.goal_poses() {
        assert!(ds.map().faces_obstacle(g));
    }
}

fn task(seed: u64, per_pose: usize, noise: NoiseConfig) -> Arc<DatasetTask> {
    let ds = generate_synthetic_dataset(&small(seed, 6, 6, per_pose, noise)).unwrap();
    Arc::new(DatasetTask::new(Arc::new(ds), MotionModel::default()))
}

#[test]
fn diameter_matches_forward_bfs() {
    let t = task(9, 1, NoiseConfig::NONE);
    let map = t.data.map();
    let mut best = 0;
    for (gi, g) in t.data.goal_poses().iter().enumerate() {
        for p in map.free_poses() {
            let d = shortest_path_length(p, &[*g], map, MotionModel::default()).unwrap().unwrap();
            assert_eq!(t.distance(gi, &p), Some(d));
            best = best.max(d);
        }
    }
    assert_eq!(t.diameter(), best);
}

#[test]
fn observations_replay_stored_records() {
    let t = task(10, 3, NoiseConfig::level(1.0));
    let mut env = DatasetEnv::new(t.clone(), DatasetEnvConfig::default(), 11);
    let stored = |pose: &Pose, img: &Arc<visnav::image::Image>| t.data.records_at(pose).any(|r| Arc::ptr_eq(&r.rgb, img) || r.rgb.data == img.data);
    let mut rng_actions = [Action::MoveForward, Action::TurnLeft, Action::MoveBackward, Action::TurnRight].iter().cycle();
    for _ in 0..20 {
        let obs = env.reset(0);
        let pose = env.ground_truth().pose;
        assert!(stored(&pose, &obs.rgb));
        let goal = env.ground_truth().goals[0];
        assert!(t.data.records_at(&goal).any(|r| r.rgb.data == obs.target.data));
        for _ in 0..10 {
            let out = env.step(*rng_actions.next().unwrap()).unwrap();
            let pose = env.ground_truth().pose;
            assert!(stored(&pose, &out.observation.rgb));
            let depth = out.observation.depth.unwrap();
            assert!(t.data.records_at(&pose).any(|r| r.depth.data == depth.data));
            if out.done {
                break;
            }
        }
    }
}

#[test]
fn rewards_follow_the_dataset_scheme() {
    let t = task(12, 1, NoiseConfig::NONE);
    let map = t.data.map().clone();
    let res = map.resolution();
    let cfg = DatasetEnvConfig { max_episode_steps: 40, ..Default::default() };
    let mut env = DatasetEnv::new(t.clone(), cfg, 13);
    env.set_curriculum(false);
    let mut seen = HashMap::new();
    for ep in 0..300 {
        env.reset(0);
        for k in 0.. {
            let a = Action::ALL[(ep * 7 + k * 3) % 4];
            let a = if k % 9 == 8 { Action::Terminate } else { a };
            let before = env.ground_truth().pose;
            let goal = env.ground_truth().goals[0];
            let out = env.step(a).unwrap();
            *seen.entry(out.reward.to_bits()).or_insert(0) += 1;
            match a {
                Action::Terminate => {
                    assert!(out.done);
                    assert_eq!(out.reward, if success(&before, &goal, res) { REWARD_GOAL } else { 0.0 });
                }
                _ => assert_eq!(out.reward, if out.info.collided { REWARD_COLLISION } else { 0.0 }),
            }
            if out.done {
                assert_eq!(env.step(Action::TurnLeft).unwrap_err(), EnvError::EpisodeFinished);
                break;
            }
        }
    }
    let allowed: Vec<u32> = [1.0f32, -0.01, 0.0].iter().map(|v| v.to_bits()).collect();
    for bits in seen.keys() {
        assert!(allowed.contains(bits), "unexpected reward {}", f32::from_bits(*bits));
    }
    assert_eq!(REWARD_GOAL, 1.0);
    assert_eq!(REWARD_COLLISION, -0.01);
}

#[test]
fn terminate_two_cells_from_goal_ends_with_zero() {
    let t = task(14, 1, NoiseConfig::NONE);
    let res = t.data.map().resolution();
    let mut env = DatasetEnv::new(t.clone(), DatasetEnvConfig::default(), 15);
    env.set_curriculum(false);
    // Search for an episode whose start is exactly two cells from the goal
    // with the same heading, then terminate immediately.
    for _ in 0..5000 {
        env.reset(0);
        let gt = env.ground_truth();
        let (p, g) = (gt.pose, gt.goals[0]);
        let two_cells = p.heading == g.heading && ((p.col - g.col).abs() + (p.row - g.row).abs() == 2) && (p.col == g.col || p.row == g.row);
        if two_cells {
            assert!((p.metric_distance(&g, res) - 0.4).abs() < 1e-9);
            assert!(!success(&p, &g, res));
            let out = env.step(Action::Terminate).unwrap();
            assert_eq!((out.reward, out.done, out.info.success), (0.0, true, false));
            return;
        }
    }
    panic!("no start two cells from its goal was sampled");
}

#[test]
fn moving_into_a_wall_costs_a_hundredth() {
    let t = task(16, 1, NoiseConfig::NONE);
    let mut env = DatasetEnv::new(t, DatasetEnvConfig::default(), 17);
    env.reset(0);
    // Turning to face the boundary and walking forward must eventually collide.
    for _ in 0..20 {
        let out = env.step(Action::MoveForward).unwrap();
        if out.info.collided {
            assert_eq!((out.reward, out.done), (-0.01, false));
            return;
        }
    }
    panic!("never collided");
}

#[test]
fn curriculum_at_frame_zero_limits_start_distance() {
    let t = task(18, 1, NoiseConfig::NONE);
    let res = t.data.map().resolution();
    let mut env = DatasetEnv::new(t.clone(), DatasetEnvConfig::default(), 19);
    for _ in 0..500 {
        env.reset(0);
        let gt = env.ground_truth();
        let d = shortest_path_length(gt.pose, gt.goals, gt.map, MotionModel::default()).unwrap().unwrap();
        assert!((1..=3).contains(&d), "start distance {d}");
        assert!(!success(&gt.pose, &gt.goals[0], res));
    }
    // Without curriculum, longer starts appear.
    env.set_curriculum(false);
    let longest = (0..500)
        .map(|_| {
            env.reset(0);
            let gt = env.ground_truth();
            shortest_path_length(gt.pose, gt.goals, gt.map, MotionModel::default()).unwrap().unwrap()
        })
        .max()
        .unwrap();
    assert!(longest > 3);
}

#[test]
fn goals_are_sampled_uniformly() {
    let t = task(20, 1, NoiseConfig::NONE);
    let goals = t.data.goal_poses().to_vec();
    let mut env = DatasetEnv::new(t, DatasetEnvConfig::default(), 21);
    env.set_curriculum(false);
    let n = 1000 * goals.len();
    let mut counts: HashMap<Pose, usize> = HashMap::new();
    for _ in 0..n {
        env.reset(0);
        *counts.entry(env.ground_truth().goals[0]).or_default() += 1;
    }
    let expected = 1.0 / goals.len() as f64;
    for g in &goals {
        let f = counts.get(g).copied().unwrap_or(0) as f64 / n as f64;
        assert!((f - expected).abs() <= 0.05, "goal {g}: {f} vs {expected}");
    }
}

#[test]
fn zero_noise_single_image_is_deterministic() {
    let t = task(22, 1, NoiseConfig::NONE);
    let run = || {
        let mut env = DatasetEnv::new(t.clone(), DatasetEnvConfig::default(), 23);
        let mut trace = Vec::new();
        for ep in 0..5 {
            let obs = env.reset(ep * 1000);
            trace.push(obs.rgb.data.clone());
            for k in 0..30 {
                let out = env.step(Action::ALL[(k * 5 + ep as usize) % 5]).unwrap();
                trace.push(out.observation.rgb.data.clone());
                trace.push(vec![out.reward]);
                if out.done {
                    break;
                }
            }
        }
        trace
    };
    assert_eq!(run(), run());
}

#[test]
fn timeout_ends_with_zero_reward() {
    let t = task(24, 1, NoiseConfig::NONE);
    let cfg = DatasetEnvConfig { max_episode_steps: 4, ..Default::default() };
    let mut env = DatasetEnv::new(t, cfg, 25);
    env.reset(0);
    for k in 0..4 {
        let out = env.step(Action::TurnLeft).unwrap();
        assert_eq!(out.done, k == 3);
        assert_eq!(out.reward, 0.0);
        assert_eq!(out.info.timeout, k == 3);
    }
}
