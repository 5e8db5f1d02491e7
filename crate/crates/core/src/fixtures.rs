//! Named mechanisms shipped with the tool, mirrored by `fixtures/*.json`.

use crate::discrete::DiscreteBranching;
use crate::error::{Error, Result};
use crate::mechanism::BranchingMechanism;

pub const CONTINUOUS: [&str; 5] = [
    "feller",
    "stable_plus_half",
    "stable_minus_half",
    "linear_stable_minus",
    "truncated_pareto_half",
];

pub const DISCRETE: [&str; 1] = ["sibuya_half"];

pub fn feller() -> BranchingMechanism {
    BranchingMechanism::StablePlus { c: 1.0, alpha: 1.0 }
}

pub fn stable_plus_half() -> BranchingMechanism {
    BranchingMechanism::StablePlus { c: 1.0, alpha: 0.5 }
}

pub fn stable_minus_half() -> BranchingMechanism {
    BranchingMechanism::StableMinus { k: 1.0, alpha: 0.5 }
}

/// Small linear rate so that `e^{ct/α}` stays representable at `t = 10⁴`.
pub fn linear_stable_minus() -> BranchingMechanism {
    BranchingMechanism::LinearStableMinus {
        c: 0.01,
        k: 1.0,
        alpha: 0.5,
    }
}

pub fn truncated_pareto_half() -> BranchingMechanism {
    BranchingMechanism::TruncatedPareto {
        rho: 1.0,
        alpha: 0.5,
        h0: 1.0,
    }
}

pub fn sibuya_half() -> DiscreteBranching {
    DiscreteBranching::sibuya(1.0, 0.5)
}

pub fn continuous(name: &str) -> Result<BranchingMechanism> {
    Ok(match name {
        "feller" => feller(),
        "stable_plus_half" => stable_plus_half(),
        "stable_minus_half" => stable_minus_half(),
        "linear_stable_minus" => linear_stable_minus(),
        "truncated_pareto_half" => truncated_pareto_half(),
        other => return Err(Error::Config(format!("unknown mechanism fixture {other:?}"))),
    })
}

pub fn discrete(name: &str) -> Result<DiscreteBranching> {
    match name {
        "sibuya_half" => Ok(sibuya_half()),
        other => Err(Error::Config(format!("unknown DSBP fixture {other:?}"))),
    }
}
