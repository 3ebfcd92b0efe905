#![allow(dead_code)]

use std::collections::BTreeMap;
use std::time::Duration;

use coaug_core::geometry::Vec3;
use coaug_core::session::{EventKind, Role, SessionConfig};
use coaug_core::skeleton::{FrameTag, JointId, PoseFrame, TrackingMode};
use coaug_server::client::{Client, ClientError};
use coaug_server::protocol::{Delta, Envelope, HelloAck, WireMessage};
use coaug_server::{serve, ServerConfig, ServerHandle};

pub const STEP: Duration = Duration::from_secs(5);

/// Upright seated pose in shared coordinates, arms hanging with forearms
/// forward.
pub fn seated_pose(t_ms: u64) -> PoseFrame {
    use JointId::*;
    let p = |x, y, z| Vec3::new(x, y, z);
    let joints: BTreeMap<JointId, Vec3> = [
        (SpineBase, p(0.0, 0.50, -0.45)),
        (SpineMid, p(0.0, 0.75, -0.45)),
        (SpineShoulder, p(0.0, 1.00, -0.45)),
        (Neck, p(0.0, 1.07, -0.45)),
        (Head, p(0.0, 1.20, -0.45)),
        (ShoulderL, p(0.18, 1.00, -0.45)),
        (ShoulderR, p(-0.18, 1.00, -0.45)),
        (ElbowL, p(0.18, 0.72, -0.45)),
        (ElbowR, p(-0.18, 0.72, -0.45)),
        (WristL, p(0.18, 0.72, -0.20)),
        (WristR, p(-0.18, 0.72, -0.20)),
        (HandL, p(0.18, 0.72, -0.12)),
        (HandR, p(-0.18, 0.72, -0.12)),
    ]
    .into_iter()
    .collect();
    PoseFrame::new(t_ms, TrackingMode::Sitting, FrameTag::Shared, joints).unwrap()
}

pub fn pose_event(t_ms: u64) -> EventKind {
    EventKind::PoseUpdate { frame: seated_pose(t_ms) }
}

pub async fn start(config: ServerConfig) -> ServerHandle {
    serve(config).await.expect("server starts")
}

pub async fn start_default() -> ServerHandle {
    start(ServerConfig::ephemeral(SessionConfig::default())).await
}

pub async fn join(server: &ServerHandle, role: Role) -> (Client, HelloAck) {
    let mut c = Client::connect(server.tcp_addr()).await.unwrap();
    let ack = tokio::time::timeout(STEP, c.hello(role, None)).await.unwrap().unwrap();
    (c, ack)
}

pub async fn recv(c: &mut Client) -> Result<Envelope, ClientError> {
    tokio::time::timeout(STEP, c.recv()).await.expect("message within timeout")
}

/// Next delta, skipping reports.
pub async fn next_delta(c: &mut Client) -> Delta {
    loop {
        match recv(c).await.unwrap().message {
            WireMessage::Delta(d) => return d,
            WireMessage::Report(_) => continue,
            other => panic!("expected delta, got {other:?}"),
        }
    }
}
