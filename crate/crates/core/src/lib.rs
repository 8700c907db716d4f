pub mod automaton;
pub mod certificate;
pub mod formula;
pub mod hybrid;
pub mod linalg;
pub mod plant;
pub mod reproduce;
pub mod scenario;
pub mod svg;
