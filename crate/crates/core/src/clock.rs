//! Virtual clock constants and helpers.

/// Simulated time in integer milliseconds.
pub type Millis = u64;

/// Global virtual clock tick. Every sensor period is a multiple of it.
pub const TICK_MS: Millis = 100;

pub const MS_PER_HOUR: f64 = 3_600_000.0;

/// Smallest tick boundary that is `>= t`.
pub fn ceil_to_tick(t: Millis) -> Millis {
    t.div_ceil(TICK_MS) * TICK_MS
}

pub fn is_tick_aligned(t: Millis) -> bool {
    t.is_multiple_of(TICK_MS)
}
