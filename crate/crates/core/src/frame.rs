use crate::frontend::{DopplerPoint, GyroSample};
use crate::image::{RaImage, RdImage};

/// One radar measurement epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarFrame {
    pub index: usize,
    pub timestamp: f64,
    pub ra: RaImage,
    pub rd: RdImage,
    pub points: Vec<DopplerPoint>,
    /// Yaw rate over the interval ending at this frame.
    pub gyro: GyroSample,
}
