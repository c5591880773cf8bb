//! Built-in closed tracks.
//!
//! Each track is two copies of a half-lap whose net turn is exactly pi; the
//! second copy then starts at the half-lap's end pose rotated by pi, which
//! guarantees closure for any choice of segments.

use super::{Track, TrackSegment};
use crate::scalar::Scalar;

pub const BUILTIN_TRACKS: [&str; 4] = ["oval", "river", "switchback", "loop"];

pub const DEFAULT_HALF_WIDTH: f64 = 5.0;

pub fn builtin_names() -> &'static [&'static str] {
    &BUILTIN_TRACKS
}

enum Piece {
    Straight(f64),
    /// (turn in units of pi, radius in m; sign of the turn gives the direction)
    Turn(f64, f64),
}

use Piece::{Straight, Turn};

fn half_lap(name: &str) -> Option<&'static [Piece]> {
    let pieces: &'static [Piece] = match name {
        // long straights joined by wide hairpins
        "oval" => &[Straight(1000.0), Turn(1.0, 120.0)],
        // gentle alternating curves
        "river" => &[
            Straight(300.0),
            Turn(1.0 / 3.0, 200.0),
            Straight(150.0),
            Turn(-1.0 / 6.0, 250.0),
            Straight(100.0),
            Turn(0.5, 150.0),
            Turn(1.0 / 3.0, 300.0),
        ],
        // tight bends in alternating directions
        "switchback" => &[
            Straight(150.0),
            Turn(0.5, 40.0),
            Straight(60.0),
            Turn(-0.5, 35.0),
            Straight(60.0),
            Turn(1.0, 40.0),
            Straight(80.0),
            Turn(-0.5, 45.0),
            Turn(0.5, 50.0),
        ],
        // almost all curve
        "loop" => &[
            Turn(0.25, 80.0),
            Straight(80.0),
            Turn(0.5, 60.0),
            Turn(-0.25, 100.0),
            Straight(120.0),
            Turn(0.5, 70.0),
        ],
        _ => return None,
    };
    Some(pieces)
}

pub fn builtin<T: Scalar>(name: &str) -> Option<Track<T>> {
    let pieces = half_lap(name)?;
    let half: Vec<TrackSegment<T>> = pieces
        .iter()
        .map(|p| match *p {
            Straight(len) => TrackSegment::straight(T::lit(len)),
            Turn(turn, radius) => {
                let kappa = T::lit(turn.signum() / radius);
                TrackSegment::arc_turn(T::lit(turn.abs()) * T::PI(), kappa)
            }
        })
        .collect();
    let segments = half.iter().chain(half.iter()).copied().collect();
    Some(Track::new(name, T::lit(DEFAULT_HALF_WIDTH), true, segments).expect("built-in track is valid"))
}
