pub mod bench;
pub mod eval;
pub mod preprocess;
pub mod presets;
pub mod roundtrip;
pub mod sample;
pub mod synth;
pub mod train;

/// `skip_serializing_if` helper for boolean flags: only `true` overrides.
pub(crate) fn is_false(b: &bool) -> bool {
    !*b
}
