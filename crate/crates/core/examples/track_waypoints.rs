//! Tracks every root-to-leaf path of the Y phantom and prints per-tick errors.

use bronchosim::anatomy::{build_from_mask, AnatomyOptions};
use bronchosim::phantom::{Phantom, YPhantom};
use bronchosim::robot::{track_waypoints_with, NoiseSwitches, RobotParams, TrackingOptions};

fn main() -> bronchosim::Result<()> {
    env_logger::init();
    let noisy = std::env::args().any(|a| a == "--noise");
    let mask = Phantom::Y(YPhantom::default()).mask(0.5e-3, 2)?;
    let anatomy = build_from_mask(&mask, &AnatomyOptions::default())?;
    let params = RobotParams::default();
    let opts = TrackingOptions {
        noise: if noisy { NoiseSwitches::ON } else { NoiseSwitches::OFF },
        ..Default::default()
    };
    for seq in &anatomy.sequences {
        let log = track_waypoints_with(seq, &anatomy.sdf, &params, 7, &opts)?;
        println!("path to node {} ({} frames)", seq.endpoint, log.entries.len());
        for e in &log.entries {
            println!(
                "  t={:4.1}s q=({:+.5}, {:+.3}, {:.4})  ik {:.3} mm  tip {:.3} mm  contacts {}{}",
                e.t_sec,
                e.q_eff.q1,
                e.q_eff.q2,
                e.q_eff.q3,
                e.ik_error * 1e3,
                e.tip_error * 1e3,
                e.contacts.len(),
                if e.unresolved { "  unresolved" } else { "" }
            );
        }
    }
    Ok(())
}
