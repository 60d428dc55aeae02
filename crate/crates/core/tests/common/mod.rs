#![allow(dead_code)]

pub mod models;
pub mod ops;
pub mod oracles;
