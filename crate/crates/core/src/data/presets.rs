//! Channel layouts for the public datasets the pipeline was designed for.
//!
//! These are templates: confirm them against the column order of your
//! own export before running.

use crate::models::ChannelGroup;

/// Opportunity, 113 body-worn channels grouped around 7 IMUs.
///
/// Assumed column order: 12 three-axis accelerometers (channels 0-35, in
/// the order RKN^, HIP, LUA^, RUA_, LH, BACK, RKN_, RWR, RUA^, LUA_, LWR,
/// RH), then 5 upper-body IMUs with 9 channels each (BACK, RUA, RLA, LUA,
/// LLA; channels 36-80), then the two shoe IMUs with 16 channels each
/// (L-SHOE, R-SHOE; channels 81-112). Each accelerometer joins the IMU
/// nearest to it on the body.
pub fn opportunity_groups() -> Vec<ChannelGroup> {
    let acc = |i: usize| (3 * i..3 * i + 3).collect::<Vec<_>>();
    let imu = |i: usize| (36 + 9 * i..45 + 9 * i).collect::<Vec<_>>();
    let shoe = |i: usize| (81 + 16 * i..97 + 16 * i).collect::<Vec<_>>();
    let group = |name: &str, parts: Vec<Vec<usize>>| {
        let mut channels: Vec<usize> = parts.into_iter().flatten().collect();
        channels.sort_unstable();
        ChannelGroup {
            name: name.into(),
            channels,
        }
    };
    vec![
        group("BACK", vec![imu(0), acc(1), acc(5)]),
        group("RUA", vec![imu(1), acc(3), acc(8)]),
        group("RLA", vec![imu(2), acc(7), acc(11)]),
        group("LUA", vec![imu(3), acc(2), acc(9)]),
        group("LLA", vec![imu(4), acc(4), acc(10)]),
        group("L-SHOE", vec![shoe(0)]),
        group("R-SHOE", vec![shoe(1), acc(0), acc(6)]),
    ]
}

/// Pamap2, 40 channels: heart rate (channel 0) then 13 channels each for
/// the hand, chest and ankle IMUs. The heart-rate channel is attached to
/// the chest group.
pub fn pamap2_groups() -> Vec<ChannelGroup> {
    let imu = |i: usize| (1 + 13 * i..14 + 13 * i).collect::<Vec<_>>();
    let mut chest = vec![0];
    chest.extend(imu(1));
    vec![
        ChannelGroup {
            name: "hand".into(),
            channels: imu(0),
        },
        ChannelGroup {
            name: "chest".into(),
            channels: chest,
        },
        ChannelGroup {
            name: "ankle".into(),
            channels: imu(2),
        },
    ]
}
