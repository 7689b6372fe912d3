pub mod cli;
pub mod excited;
pub mod numerics;
pub mod oracle;
pub mod resummation;
pub mod series;
pub mod tuner;
pub mod wavefn;
