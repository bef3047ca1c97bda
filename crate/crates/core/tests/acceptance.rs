fn main() {
    // Placeholder while the crate is under construction; the real checks are
    // added once the full pipeline exists.
}
