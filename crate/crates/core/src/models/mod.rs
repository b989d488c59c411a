//! The three attribute networks and their shared forward/backward machinery.

mod config;
mod network;

pub use config::{Architecture, ChannelGroup, NetworkConfig, Pooling};
pub use network::{
    build_attr_cnn, build_attr_cnn_imu, build_attr_deepconvlstm, Gradients, Network, Trace,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
