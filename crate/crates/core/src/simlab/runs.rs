use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class returned when both classes reach the same longest run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    Zero,
    One,
}

fn longest_runs(seq: &[u8]) -> Result<[usize; 2]> {
    if seq.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut best = [0usize; 2];
    let mut run = 0;
    let mut prev = None;
    for &s in seq {
        if s > 1 {
            return Err(Error::DomainMismatch(format!("sequence value {s} is not 0 or 1")));
        }
        run = if prev == Some(s) { run + 1 } else { 1 };
        prev = Some(s);
        best[s as usize] = best[s as usize].max(run);
    }
    Ok(best)
}

/// The class with the longest consecutive run in `seq`; ties go to class 0.
pub fn longest_run_classify(seq: &[u8]) -> Result<u8> {
    longest_run_classify_with(seq, TieBreak::Zero)
}

pub fn longest_run_classify_with(seq: &[u8], tie: TieBreak) -> Result<u8> {
    let [zero, one] = longest_runs(seq)?;
    Ok(match zero.cmp(&one) {
        std::cmp::Ordering::Greater => 0,
        std::cmp::Ordering::Less => 1,
        std::cmp::Ordering::Equal => match tie {
            TieBreak::Zero => 0,
            TieBreak::One => 1,
        },
    })
}
