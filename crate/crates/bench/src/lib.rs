//! Bench-only crate; the measurements live in `benches/protocols.rs`.
