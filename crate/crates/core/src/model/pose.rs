//! 17-keypoint COCO body topology.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    Nose,
    LeftEye,
    RightEye,
    LeftEar,
    RightEar,
    LeftShoulder,
    RightShoulder,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftHip,
    RightHip,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
}

impl Joint {
    pub const ALL: [Joint; NUM_JOINTS] = [
        Joint::Nose,
        Joint::LeftEye,
        Joint::RightEye,
        Joint::LeftEar,
        Joint::RightEar,
        Joint::LeftShoulder,
        Joint::RightShoulder,
        Joint::LeftElbow,
        Joint::RightElbow,
        Joint::LeftWrist,
        Joint::RightWrist,
        Joint::LeftHip,
        Joint::RightHip,
        Joint::LeftKnee,
        Joint::RightKnee,
        Joint::LeftAnkle,
        Joint::RightAnkle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Joint> {
        Joint::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::Nose => "nose",
            Joint::LeftEye => "left_eye",
            Joint::RightEye => "right_eye",
            Joint::LeftEar => "left_ear",
            Joint::RightEar => "right_ear",
            Joint::LeftShoulder => "left_shoulder",
            Joint::RightShoulder => "right_shoulder",
            Joint::LeftElbow => "left_elbow",
            Joint::RightElbow => "right_elbow",
            Joint::LeftWrist => "left_wrist",
            Joint::RightWrist => "right_wrist",
            Joint::LeftHip => "left_hip",
            Joint::RightHip => "right_hip",
            Joint::LeftKnee => "left_knee",
            Joint::RightKnee => "right_knee",
            Joint::LeftAnkle => "left_ankle",
            Joint::RightAnkle => "right_ankle",
        }
    }

    /// Joints moved together with this one when it is used as a rotation pivot.
    ///
    /// Only the four limb chains (shoulder-elbow-wrist, hip-knee-ankle) have
    /// downstream joints; every other joint returns an empty slice.
    pub fn chain_descendants(self) -> &'static [Joint] {
        use Joint::*;
        match self {
            LeftShoulder => &[LeftElbow, LeftWrist],
            LeftElbow => &[LeftWrist],
            RightShoulder => &[RightElbow, RightWrist],
            RightElbow => &[RightWrist],
            LeftHip => &[LeftKnee, LeftAnkle],
            LeftKnee => &[LeftAnkle],
            RightHip => &[RightKnee, RightAnkle],
            RightKnee => &[RightAnkle],
            _ => &[],
        }
    }
}

/// Limb topology as (parent, child) pairs. The list forms a tree rooted at the nose.
pub const LIMBS: [(Joint, Joint); 16] = [
    (Joint::Nose, Joint::LeftEye),
    (Joint::Nose, Joint::RightEye),
    (Joint::LeftEye, Joint::LeftEar),
    (Joint::RightEye, Joint::RightEar),
    (Joint::Nose, Joint::LeftShoulder),
    (Joint::Nose, Joint::RightShoulder),
    (Joint::LeftShoulder, Joint::LeftElbow),
    (Joint::LeftElbow, Joint::LeftWrist),
    (Joint::RightShoulder, Joint::RightElbow),
    (Joint::RightElbow, Joint::RightWrist),
    (Joint::LeftShoulder, Joint::LeftHip),
    (Joint::RightShoulder, Joint::RightHip),
    (Joint::LeftHip, Joint::LeftKnee),
    (Joint::LeftKnee, Joint::LeftAnkle),
    (Joint::RightHip, Joint::RightKnee),
    (Joint::RightKnee, Joint::RightAnkle),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub fn missing() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn is_present(&self) -> bool {
        self.confidence > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    keypoints: [Keypoint; NUM_JOINTS],
}

impl Skeleton {
    pub fn new(keypoints: [Keypoint; NUM_JOINTS]) -> Result<Self> {
        for (joint, kp) in Joint::ALL.iter().zip(&keypoints) {
            if !(0.0..=1.0).contains(&kp.confidence) {
                return Err(Error::invalid(
                    "keypoint confidence",
                    format!("{} has confidence {}", joint.name(), kp.confidence),
                ));
            }
            if kp.is_present() && !(kp.x.is_finite() && kp.y.is_finite()) {
                return Err(Error::NonFinite("keypoint"));
            }
        }
        Ok(Self { keypoints })
    }

    pub fn from_slice(keypoints: &[Keypoint]) -> Result<Self> {
        let arr: [Keypoint; NUM_JOINTS] = keypoints
            .try_into()
            .map_err(|_| Error::shape("skeleton keypoints", NUM_JOINTS, keypoints.len()))?;
        Self::new(arr)
    }

    pub fn empty() -> Self {
        Self {
            keypoints: [Keypoint::missing(); NUM_JOINTS],
        }
    }

    pub fn keypoints(&self) -> &[Keypoint; NUM_JOINTS] {
        &self.keypoints
    }

    pub fn get(&self, joint: Joint) -> &Keypoint {
        &self.keypoints[joint.index()]
    }

    pub(crate) fn get_mut(&mut self, joint: Joint) -> &mut Keypoint {
        &mut self.keypoints[joint.index()]
    }

    /// Position of a present joint.
    pub fn position(&self, joint: Joint) -> Result<(f64, f64)> {
        let kp = self.get(joint);
        if kp.is_present() {
            Ok((kp.x, kp.y))
        } else {
            Err(Error::MissingJoint(joint.name()))
        }
    }

    pub fn is_present(&self, joint: Joint) -> bool {
        self.get(joint).is_present()
    }

    pub fn with_keypoint(mut self, joint: Joint, kp: Keypoint) -> Self {
        self.keypoints[joint.index()] = kp;
        self
    }
}
