#![allow(dead_code)]

pub mod http_stub;
pub mod oracles;
pub mod records;
pub mod refine_script;
pub mod skeleton;
