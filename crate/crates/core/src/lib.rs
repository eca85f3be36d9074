pub mod coeffspace;
pub mod error;
pub mod linalg;
pub mod par;
pub mod report;
pub mod matpoly;
pub mod wire;
pub mod bcl;
pub mod canon;
pub mod blhfactor;
pub mod cstar;
