//! Keyframe backend: pose refinement against the map, sliding-window
//! mapping and windowed bundle adjustment, all driven by rendered-image
//! gradients, plus the streaming session that ties them to the frontend.

mod adam;
mod keyframe;
mod session;
mod stages;

pub use adam::{Adam, OptimizerConfig};
pub use keyframe::{select_window, should_create_keyframe, Keyframe, KeyframeStore, WindowSpec};
pub use session::{LossRecord, Mode, Session, SessionConfig};
pub use stages::{bundle_adjust, refine_pose, update_map, StageContext, StageReport};
