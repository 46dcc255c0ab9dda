//! Multi-camera depth perception: simulated pinhole depth cameras, point
//! cloud filtering (range gate, statistical outlier removal, voxel grid
//! downsampling), ICP extrinsic refinement and fusion into the base frame.

mod camera;
mod filters;
mod icp;

pub use camera::{simulate_depth_frame, CameraModel};
pub use filters::{range_filter, statistical_outlier_removal, voxel_downsample};
pub use icp::icp_refine;

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};

/// Point cloud tagged with the sensor frame it is expressed in and the
/// capture time in seconds of simulated time.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub frame: String,
    pub timestamp: f64,
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(frame: impl Into<String>, timestamp: f64, points: Vec<Point3>) -> Self {
        Self {
            frame: frame.into(),
            timestamp,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Returns the cloud transformed into another frame.
    pub fn transformed(&self, transform: &RigidTransform, frame: impl Into<String>) -> Self {
        Self {
            frame: frame.into(),
            timestamp: self.timestamp,
            points: self.points.iter().map(|p| transform.apply(p)).collect(),
        }
    }

    /// Serializes as text: `frame <name>`, `t <seconds>`, then one
    /// `x y z` line per point in storage order.
    pub fn write_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "frame {}", self.frame);
        let _ = writeln!(out, "t {:.6}", self.timestamp);
        for p in &self.points {
            let _ = writeln!(out, "{:.6} {:.6} {:.6}", p.x, p.y, p.z);
        }
        out
    }

    /// Parses the text form produced by [`write_text`](Self::write_text).
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let frame = lines
            .next()
            .and_then(|l| l.strip_prefix("frame "))
            .ok_or_else(|| Error::Parse("point cloud missing 'frame' header".into()))?
            .to_string();
        let timestamp: f64 = lines
            .next()
            .and_then(|l| l.strip_prefix("t "))
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse("point cloud missing 't' header".into()))?;
        let mut points = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(|s| s.parse::<f64>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), Some(Ok(z))) => points.push(Point3::new(x, y, z)),
                _ => return Err(Error::Parse(format!("bad point line '{line}'"))),
            }
        }
        Ok(Self {
            frame,
            timestamp,
            points,
        })
    }
}

/// Transforms each cloud by its extrinsic (sensor frame to base frame) and
/// concatenates them, in input order, into one cloud in the `base` frame.
/// The merged timestamp is the latest input timestamp.
pub fn merge_clouds(clouds: &[(&PointCloud, &RigidTransform)]) -> PointCloud {
    let mut points = Vec::with_capacity(clouds.iter().map(|(c, _)| c.len()).sum());
    let mut timestamp: f64 = 0.0;
    for (cloud, extrinsic) in clouds {
        timestamp = timestamp.max(cloud.timestamp);
        points.extend(cloud.points.iter().map(|p| extrinsic.apply(p)));
    }
    PointCloud::new("base", timestamp, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vector3;
    use approx::assert_relative_eq;

    #[test]
    fn cloud_text_roundtrip_is_byte_identical() {
        let cloud = PointCloud::new(
            "cam_left",
            1.25,
            vec![
                Point3::new(0.1, -0.2, 1.5),
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(-1.0, 2.0, 0.333333),
            ],
        );
        let text = cloud.write_text();
        let parsed = PointCloud::parse_text(&text).unwrap();
        assert_eq!(parsed.write_text(), text);
        assert_eq!(parsed.frame, "cam_left");
    }

    #[test]
    fn merge_applies_extrinsics_in_order() {
        let a = PointCloud::new("cam_a", 0.0, vec![Point3::new(0.0, 0.0, 1.0)]);
        let b = PointCloud::new("cam_b", 0.5, vec![Point3::new(0.0, 0.0, 2.0)]);
        let ta = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let tb = RigidTransform::from_translation(Vector3::new(0.0, 1.0, 0.0));
        let merged = merge_clouds(&[(&a, &ta), (&b, &tb)]);
        assert_eq!(merged.frame, "base");
        assert_eq!(merged.len(), 2);
        assert_relative_eq!((merged.points[0] - Point3::new(1.0, 0.0, 1.0)).norm(), 0.0);
        assert_relative_eq!((merged.points[1] - Point3::new(0.0, 1.0, 2.0)).norm(), 0.0);
        assert_relative_eq!(merged.timestamp, 0.5);
    }
}
