use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, OrientedBox, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CollisionKind {
    Front,
    Side,
    RearEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub frame: usize,
    pub agent_id: u32,
    pub kind: CollisionKind,
    /// Other agent's yaw minus the ego yaw, wrapped to (−π, π].
    pub relative_heading: f64,
}

/// Classifies a contact from the other box's placement in the ego frame.
///
/// Rear-end: the other vehicle is behind the ego centre, travelling the same
/// way (within 45°), laterally within one ego width (same lane), and its
/// front centre lies in the ego's rear half. Front: the other box is ahead of
/// the ego centre with lateral overlap. Everything else is a side impact.
pub fn classify(ego: &OrientedBox, other: &OrientedBox) -> CollisionKind {
    let c = ego.pose.to_local(other.pose.position());
    let rel = normalize_angle(other.pose.yaw - ego.pose.yaw);
    let front = ego
        .pose
        .to_local(other.pose.to_world(Vec2::new(other.length / 2.0, 0.0)));
    if c.x < 0.0 && rel.abs() < FRAC_PI_4 && c.y.abs() < ego.width && front.x < 0.0 {
        return CollisionKind::RearEnd;
    }
    if c.x > 0.0 && c.y.abs() < (ego.width + other.width) / 2.0 {
        return CollisionKind::Front;
    }
    CollisionKind::Side
}

/// Separating-axis contacts between the ego and each agent box.
pub fn check_collision(
    frame: usize,
    ego: &OrientedBox,
    agents: &[(u32, OrientedBox)],
) -> Vec<CollisionEvent> {
    agents
        .iter()
        .filter(|(_, b)| ego.intersects(b))
        .map(|(id, b)| CollisionEvent {
            frame,
            agent_id: *id,
            kind: classify(ego, b),
            relative_heading: normalize_angle(b.pose.yaw - ego.pose.yaw),
        })
        .collect()
}
