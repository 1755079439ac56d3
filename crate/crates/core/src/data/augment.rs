use rand::Rng;

use super::TypedPhrase;

pub const SHIFT_PROBABILITY: f64 = 0.5;
pub const MAX_SHIFT_PX: i32 = 3;

/// Random decisions consumed by [`augment`].
pub trait ShiftSource {
    /// Whether the current point gets shifted.
    fn trigger(&mut self) -> bool;
    /// Integer pixel offset in `-MAX_SHIFT_PX..=MAX_SHIFT_PX`.
    fn offset(&mut self) -> i32;
}

impl<R: Rng + ?Sized> ShiftSource for R {
    fn trigger(&mut self) -> bool {
        self.random_bool(SHIFT_PROBABILITY)
    }

    fn offset(&mut self) -> i32 {
        self.random_range(-MAX_SHIFT_PX..=MAX_SHIFT_PX)
    }
}

/// Returns a copy where each point, with probability one half, is moved by an
/// independent integer offset per axis. Characters are untouched.
pub fn augment<S: ShiftSource + ?Sized>(phrase: &TypedPhrase, rng: &mut S) -> TypedPhrase {
    let mut out = phrase.clone();
    for k in &mut out.points {
        if rng.trigger() {
            let dx = rng.offset().clamp(-MAX_SHIFT_PX, MAX_SHIFT_PX);
            let dy = rng.offset().clamp(-MAX_SHIFT_PX, MAX_SHIFT_PX);
            k.point.x += f64::from(dx);
            k.point.y += f64::from(dy);
        }
    }
    out
}
