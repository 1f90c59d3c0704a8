//! Sweeps tendon displacement through the rod model and compares the tip
//! chord with the circular-arc closed form, then runs the actuator noise
//! model on a ramp of commands.

use std::time::Instant;

use bronchosim::robot::actuator::MAX_DELAY;
use bronchosim::robot::{rod_shape, ActuatorState, NoiseSwitches, RobotConfig, RobotParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = RobotParams::default();
    println!("bending length {} mm, gamma {}, q1 limit {} mm", p.l * 1e3, p.gamma, p.q1_max * 1e3);
    println!("{:>8} {:>10} {:>12} {:>12} {:>10}", "q1 mm", "u0x rad/m", "chord mm", "arc mm", "solve µs");
    for step in 1..=8 {
        let q = RobotConfig::new(p.q1_max * step as f64 / 8.0, 0.3, 0.0);
        let t = Instant::now();
        let shape = rod_shape(&q, &p)?;
        let us = t.elapsed().as_secs_f64() * 1e6;
        let k = shape.u.x.abs();
        let chord = (shape.tip() - shape.positions[0]).norm();
        let arc = 2.0 / k * (k * p.l / 2.0).sin();
        println!("{:>8.3} {:>10.3} {:>12.6} {:>12.6} {:>10.1}", q.q1 * 1e3, shape.u.x, chord * 1e3, arc * 1e3, us);
    }

    let mut actuator = ActuatorState::new(7, NoiseSwitches::ON, &p, RobotConfig::default());
    println!("\ncommand ramp with delays up to {MAX_DELAY} s:");
    for k in 0..6 {
        let now = k as f64 * 0.1;
        let cmd = RobotConfig::new(p.q1_max * k as f64 / 5.0, 0.5 * k as f64, 0.002 * k as f64);
        let delay = actuator.issue(cmd, now, k);
        let eff = actuator.effective_at(now + 0.05);
        println!(
            "t={now:.1}s cmd q1={:.3} mm delay {:.3} s -> effective q1={:.4} mm q2={:.3} rad",
            cmd.q1 * 1e3,
            delay,
            eff.q1 * 1e3,
            eff.q2
        );
    }
    Ok(())
}
