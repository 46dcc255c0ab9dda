use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::robot::{link_cylinders, JointConfig, KinematicChain, VoxelObstacles};

use super::PlannerConfig;

/// Whole-body collision oracle with a check counter; the counter is the
/// planner's deterministic work budget (modeled seconds = checks / rate).
pub(crate) struct CollisionWorld<'a> {
    chain: &'a KinematicChain,
    voxels: &'a VoxelObstacles,
    pub checks: u64,
}

impl<'a> CollisionWorld<'a> {
    pub fn new(chain: &'a KinematicChain, voxels: &'a VoxelObstacles) -> Self {
        Self {
            chain,
            voxels,
            checks: 0,
        }
    }

    pub fn is_free(&mut self, q: &JointConfig) -> bool {
        self.checks += 1;
        match link_cylinders(self.chain, q, 0.0) {
            Ok(cylinders) => !self.voxels.collides(&cylinders),
            Err(_) => false,
        }
    }

    /// Validates the segment `from -> to` by checking interpolated configs
    /// spaced at most `resolution` apart, endpoint included; `from` is
    /// assumed already validated.
    pub fn edge_free(&mut self, from: &JointConfig, to: &JointConfig, resolution: f64) -> bool {
        let steps = ((from.distance(to) / resolution).ceil() as usize).max(1);
        for i in 1..=steps {
            if !self.is_free(&from.lerp(to, i as f64 / steps as f64)) {
                return false;
            }
        }
        true
    }
}

struct Tree {
    nodes: Vec<JointConfig>,
    parents: Vec<usize>,
}

impl Tree {
    fn new(root: JointConfig) -> Self {
        Self {
            nodes: vec![root],
            parents: vec![usize::MAX],
        }
    }

    fn nearest(&self, q: &JointConfig) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, node) in self.nodes.iter().enumerate() {
            let d = node.distance(q);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    fn add(&mut self, q: JointConfig, parent: usize) -> usize {
        self.nodes.push(q);
        self.parents.push(parent);
        self.nodes.len() - 1
    }

    /// Path from `index` back to the root, root last.
    fn trace(&self, mut index: usize) -> Vec<JointConfig> {
        let mut path = Vec::new();
        while index != usize::MAX {
            path.push(self.nodes[index]);
            index = self.parents[index];
        }
        path
    }
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

fn extend(
    tree: &mut Tree,
    target: &JointConfig,
    world: &mut CollisionWorld,
    config: &PlannerConfig,
) -> Extend {
    let near = tree.nearest(target);
    let q_near = tree.nodes[near];
    let q_new = q_near.step_toward(target, config.extend_step);
    if q_new == q_near {
        return Extend::Reached(near);
    }
    if !world.edge_free(&q_near, &q_new, config.check_resolution()) {
        return Extend::Trapped;
    }
    let index = tree.add(q_new, near);
    if q_new == *target {
        Extend::Reached(index)
    } else {
        Extend::Advanced(index)
    }
}

fn sample(rng: &mut ChaCha8Rng, chain: &KinematicChain) -> JointConfig {
    let mut q = [0.0; 6];
    for (v, lim) in q.iter_mut().zip(&chain.joint_limits) {
        *v = rng.gen_range(lim[0]..=lim[1]);
    }
    JointConfig(q)
}

/// Bidirectional RRT-Connect over joint space. Grows a tree from each end,
/// alternating extend and greedy connect, and keeps collecting distinct
/// paths until the per-attempt work budget (or the candidate cap) is hit,
/// so the caller can choose among several. Returns the waypoint lists plus
/// the modeled planning seconds spent.
pub(crate) fn rrt_connect_paths(
    start: &JointConfig,
    goal: &JointConfig,
    chain: &KinematicChain,
    voxels: &VoxelObstacles,
    config: &PlannerConfig,
) -> Result<(Vec<Vec<JointConfig>>, f64)> {
    chain.check_limits(start)?;
    chain.check_limits(goal)?;
    let mut world = CollisionWorld::new(chain, voxels);
    if !world.is_free(start) {
        return Err(Error::PlanningFailed("start configuration in collision"));
    }
    if !world.is_free(goal) {
        return Err(Error::PlanningFailed("goal configuration in collision"));
    }
    if start == goal {
        return Ok((vec![vec![*start]], 0.0));
    }

    let budget = (config.max_planning_time * config.modeled_check_rate) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut total_checks = world.checks;
    let mut paths: Vec<Vec<JointConfig>> = Vec::new();

    for _attempt in 0..config.attempts.max(1) {
        world.checks = 0;
        let mut start_tree = Tree::new(*start);
        let mut goal_tree = Tree::new(*goal);
        // `from_start` tells which tree extends this iteration.
        let mut from_start = true;
        while world.checks < budget && paths.len() < config.max_candidates {
            let (tree_a, tree_b) = if from_start {
                (&mut start_tree, &mut goal_tree)
            } else {
                (&mut goal_tree, &mut start_tree)
            };
            let target = if rng.gen_bool(config.goal_bias) {
                tree_b.nodes[0]
            } else {
                sample(&mut rng, chain)
            };
            if let Extend::Advanced(new_a) | Extend::Reached(new_a) =
                extend(tree_a, &target, &mut world, config)
            {
                let q_bridge = tree_a.nodes[new_a];
                let mut status = extend(tree_b, &q_bridge, &mut world, config);
                while let Extend::Advanced(_) = status {
                    if world.checks >= budget {
                        break;
                    }
                    status = extend(tree_b, &q_bridge, &mut world, config);
                }
                if let Extend::Reached(end_b) = status {
                    let half_a = tree_a.trace(new_a);
                    let half_b = tree_b.trace(end_b);
                    let path = join_halves(half_a, half_b, from_start);
                    if !paths.contains(&path) {
                        paths.push(path);
                    }
                }
            }
            from_start = !from_start;
        }
        total_checks += world.checks;
        if !paths.is_empty() {
            break;
        }
    }

    let planning_time = total_checks as f64 / config.modeled_check_rate;
    if paths.is_empty() {
        return Err(Error::PlanningFailed("no path found within budget"));
    }
    Ok((paths, planning_time))
}

/// Stitches the two root-bound traces into one start-to-goal waypoint list.
/// Both traces contain the bridge configuration, so one copy is dropped.
fn join_halves(
    half_a: Vec<JointConfig>,
    half_b: Vec<JointConfig>,
    a_is_start: bool,
) -> Vec<JointConfig> {
    // half_a: bridge .. start-or-goal root; half_b: bridge .. other root.
    let (from_start_half, from_goal_half) = if a_is_start {
        (half_a, half_b)
    } else {
        (half_b, half_a)
    };
    let mut path: Vec<JointConfig> = from_start_half.into_iter().rev().collect();
    for q in from_goal_half.into_iter().skip(1) {
        path.push(q);
    }
    path
}
