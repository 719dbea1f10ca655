//! Random scene geometry: shoebox rooms, compact microphone arrays, and
//! speaker placements under the corpus constraints.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Pairwise microphone distance bounds (meters).
pub const MIC_DIST_MIN: f64 = 0.05;
pub const MIC_DIST_MAX: f64 = 0.25;
/// Minimum speaker-to-speaker distance (meters).
pub const SPEAKER_DIST_MIN: f64 = 1.0;
/// Minimum speaker distance from the array centroid (meters).
pub const SPEAKER_TO_ARRAY_MIN: f64 = 0.5;
/// Reverberation-time sampling range (seconds); 0 means anechoic.
pub const T60_MIN: f64 = 0.2;
pub const T60_MAX: f64 = 0.6;
/// Room dimension ranges (meters). The source paper does not publish its
/// room distribution; these are stated assumptions.
pub const ROOM_XY: (f64, f64) = (5.0, 10.0);
pub const ROOM_Z: (f64, f64) = (2.8, 4.0);
/// Keep-out distance from every wall for mics and speakers.
pub const WALL_MARGIN: f64 = 0.5;

/// Total random draws allowed while rejection-sampling one scene.
pub const REJECTION_BUDGET: usize = 100_000;

pub type Point = [f64; 3];

/// One acoustic scene: a shoebox room with an `M`-mic array and `K`
/// speakers. `t60 == 0` means anechoic. Microphone 1 (`mics[0]`) is the
/// reference channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub room: Point,
    pub mics: Vec<Point>,
    pub speakers: Vec<Point>,
    pub t60: f64,
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

pub fn centroid(points: &[Point]) -> Point {
    let mut c = [0.0; 3];
    for p in points {
        for i in 0..3 {
            c[i] += p[i] / points.len() as f64;
        }
    }
    c
}

impl Scene {
    /// Checks every geometric invariant; sampled scenes always pass, scenes
    /// built by hand can be vetted with this before simulation.
    pub fn validate(&self) -> Result<()> {
        if self.mics.is_empty() {
            return Err(Error::invalid("scene needs at least one microphone"));
        }
        if self.speakers.len() < 2 {
            return Err(Error::invalid("scene needs at least two speakers"));
        }
        if self.room.iter().any(|&d| d <= 0.0) {
            return Err(Error::invalid("room dimensions must be positive"));
        }
        let inside = |p: &Point| (0..3).all(|i| p[i] > 0.0 && p[i] < self.room[i]);
        if !self.mics.iter().chain(&self.speakers).all(inside) {
            return Err(Error::invalid("positions must lie strictly inside the room"));
        }
        for (i, a) in self.mics.iter().enumerate() {
            for b in &self.mics[i + 1..] {
                let d = distance(a, b);
                if !(MIC_DIST_MIN..=MIC_DIST_MAX).contains(&d) {
                    return Err(Error::invalid(format!("mic pair distance {d:.3} m out of range")));
                }
            }
        }
        for (i, a) in self.speakers.iter().enumerate() {
            for b in &self.speakers[i + 1..] {
                if distance(a, b) < SPEAKER_DIST_MIN {
                    return Err(Error::invalid("speakers too close together"));
                }
            }
        }
        let c = centroid(&self.mics);
        if self.speakers.iter().any(|s| distance(s, &c) < SPEAKER_TO_ARRAY_MIN) {
            return Err(Error::invalid("speaker too close to the array"));
        }
        if self.t60 != 0.0 && !(T60_MIN..=T60_MAX).contains(&self.t60) {
            return Err(Error::invalid(format!("t60 {} outside {{0}} ∪ [0.2, 0.6]", self.t60)));
        }
        Ok(())
    }

    /// Azimuth difference of the two speakers seen from the array centroid,
    /// folded to [0, 180] degrees.
    pub fn angle_difference(&self) -> Result<f64> {
        if self.speakers.len() != 2 {
            return Err(Error::invalid("angle difference is defined for exactly two speakers"));
        }
        let c = centroid(&self.mics);
        let az = |s: &Point| (s[1] - c[1]).atan2(s[0] - c[0]).to_degrees();
        let mut d = (az(&self.speakers[0]) - az(&self.speakers[1])).abs() % 360.0;
        if d > 180.0 {
            d = 360.0 - d;
        }
        Ok(d)
    }
}

struct Budget(usize);

impl Budget {
    fn spend(&mut self) -> Result<()> {
        if self.0 == 0 {
            return Err(Error::SamplingFailure(REJECTION_BUDGET));
        }
        self.0 -= 1;
        Ok(())
    }
}

/// Draws a scene satisfying every invariant: room from the documented
/// ranges, an array of `m` mics with pairwise spacing in
/// [[`MIC_DIST_MIN`], [`MIC_DIST_MAX`]], `k` speakers at least 1 m apart
/// and 0.5 m from the array, and T60 uniform in [0.2, 0.6] s when
/// `reverberant` (0 otherwise). The whole draw is rejection-sampled within
/// a fixed budget.
pub fn sample_geometry(rng: &mut ChaCha8Rng, m: usize, k: usize, reverberant: bool) -> Result<Scene> {
    if m < 1 || k < 2 {
        return Err(Error::invalid("need at least one mic and two speakers"));
    }
    let mut budget = Budget(REJECTION_BUDGET);
    let room = [
        rng.gen_range(ROOM_XY.0..ROOM_XY.1),
        rng.gen_range(ROOM_XY.0..ROOM_XY.1),
        rng.gen_range(ROOM_Z.0..ROOM_Z.1),
    ];
    let point_in = |rng: &mut ChaCha8Rng, margin: f64| -> Point {
        [
            rng.gen_range(margin..room[0] - margin),
            rng.gen_range(margin..room[1] - margin),
            rng.gen_range(margin..room[2] - margin),
        ]
    };

    // array: a centroid plus mics in a ball of radius MIC_DIST_MAX/2, so the
    // upper pairwise bound holds by construction and only the lower bound
    // needs rejection
    let mics = loop {
        budget.spend()?;
        let center = point_in(rng, WALL_MARGIN);
        let mut mics: Vec<Point> = Vec::with_capacity(m);
        let mut tries = 0;
        while mics.len() < m && tries < 64 {
            budget.spend()?;
            tries += 1;
            let r = MIC_DIST_MAX / 2.0;
            let cand = [
                center[0] + rng.gen_range(-r..r),
                center[1] + rng.gen_range(-r..r),
                center[2] + rng.gen_range(-r..r),
            ];
            if distance(&cand, &center) > r {
                continue;
            }
            if mics.iter().all(|p| distance(p, &cand) >= MIC_DIST_MIN) {
                mics.push(cand);
            }
        }
        if mics.len() == m {
            break mics;
        }
    };
    let array_center = centroid(&mics);

    let mut speakers: Vec<Point> = Vec::with_capacity(k);
    while speakers.len() < k {
        budget.spend()?;
        let cand = point_in(rng, WALL_MARGIN);
        if distance(&cand, &array_center) < SPEAKER_TO_ARRAY_MIN {
            continue;
        }
        if speakers.iter().any(|p| distance(p, &cand) < SPEAKER_DIST_MIN) {
            continue;
        }
        speakers.push(cand);
    }

    let t60 = if reverberant { rng.gen_range(T60_MIN..T60_MAX) } else { 0.0 };
    let scene = Scene { room, mics, speakers, t60 };
    scene.validate()?;
    Ok(scene)
}
