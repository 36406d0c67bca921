//! Orientation-preserving versus reflection-allowing distances for the
//! three-bump family: a mirror image is far in the oriented distance but at
//! distance zero once reflections are allowed.

use gsd::align::{dsd, DsdOptions};
use gsd::shapes::three_bump;
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reference = three_bump(0.0, 3);
    let opts = DsdOptions { allow_reflection: true, ..DsdOptions::default() };
    println!("{:>8} {:>10} {:>12} {:>9}", "theta", "oriented", "unoriented", "reversed");
    for k in 0..=4 {
        let theta = k as f64 * PI / 4.0;
        let r = dsd(&three_bump(theta, 3), &reference, &opts)?;
        let oriented = r
            .per_seed
            .iter()
            .filter(|s| !s.reflected && s.energy.is_finite())
            .map(|s| s.energy)
            .fold(f64::INFINITY, f64::min);
        println!("{theta:>8.4} {oriented:>10.5} {:>12.5} {:>9}", r.d_sd, r.orientation_reversed);
    }
    Ok(())
}
