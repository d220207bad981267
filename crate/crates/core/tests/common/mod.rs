//! Independent reference implementations on plain `Vec` arithmetic.
#![allow(dead_code)]

pub mod oracle;
