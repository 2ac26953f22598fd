use super::gradcheck::fd_relative_error;
use super::{Tape, Tensor, Var};

pub(crate) fn fd_check<F>(leaves: &[Tensor], h: f64, build: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    fd_relative_error(leaves, h, |t, v| Ok(build(t, v))).unwrap()
}
