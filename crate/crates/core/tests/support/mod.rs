pub mod random;
pub mod bundles;
