use std::fmt;

use serde::{Deserialize, Serialize};

/// One of the six activities. Codes follow the dataset's label files (1..=6).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityLabel {
    Walking,
    WalkingUpstairs,
    WalkingDownstairs,
    Sitting,
    Standing,
    Laying,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 6] = [
        ActivityLabel::Walking,
        ActivityLabel::WalkingUpstairs,
        ActivityLabel::WalkingDownstairs,
        ActivityLabel::Sitting,
        ActivityLabel::Standing,
        ActivityLabel::Laying,
    ];

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1..=6 => Some(Self::ALL[(code - 1) as usize]),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    /// Zero-based position in [`ActivityLabel::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityLabel::Walking => "walking",
            ActivityLabel::WalkingUpstairs => "walking_upstairs",
            ActivityLabel::WalkingDownstairs => "walking_downstairs",
            ActivityLabel::Sitting => "sitting",
            ActivityLabel::Standing => "standing",
            ActivityLabel::Laying => "laying",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }

    /// Walking variants move the body; the rest are postures.
    pub fn is_dynamic(self) -> bool {
        matches!(
            self,
            ActivityLabel::Walking | ActivityLabel::WalkingUpstairs | ActivityLabel::WalkingDownstairs
        )
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_and_name_are_bijective() {
        for (i, label) in ActivityLabel::ALL.into_iter().enumerate() {
            assert_eq!(label.code() as usize, i + 1);
            assert_eq!(ActivityLabel::from_code(label.code() as i64), Some(label));
            assert_eq!(ActivityLabel::from_name(label.name()), Some(label));
        }
        assert_eq!(ActivityLabel::from_code(0), None);
        assert_eq!(ActivityLabel::from_code(7), None);
        assert_eq!(ActivityLabel::from_code(4), Some(ActivityLabel::Sitting));
    }
}
