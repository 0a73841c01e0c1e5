use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Fine-grained community rule categories.
///
/// Serialized names are stable and match the display names used in rule
/// annotation files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FineRuleType {
    #[serde(rename = "Advertising")]
    Advertising,
    #[serde(rename = "Moderation Enforcement")]
    ModerationEnforcement,
    #[serde(rename = "Copyright/Piracy")]
    CopyrightPiracy,
    #[serde(rename = "Doxxing")]
    Doxxing,
    #[serde(rename = "Format")]
    Format,
    #[serde(rename = "Harassment")]
    Harassment,
    #[serde(rename = "Hate Speech")]
    HateSpeech,
    #[serde(rename = "Images")]
    Images,
    #[serde(rename = "Outside Content")]
    OutsideContent,
    #[serde(rename = "Low-Quality Content")]
    LowQualityContent,
    #[serde(rename = "NSFW")]
    Nsfw,
    #[serde(rename = "Off-topic")]
    OffTopic,
    #[serde(rename = "Personal Army")]
    PersonalArmy,
    #[serde(rename = "Personality")]
    Personality,
    #[serde(rename = "Politics")]
    Politics,
    #[serde(rename = "Reddiquette")]
    Reddiquette,
    #[serde(rename = "Reposting")]
    Reposting,
    #[serde(rename = "Spam")]
    Spam,
    #[serde(rename = "Spoilers")]
    Spoilers,
    #[serde(rename = "Trolling")]
    Trolling,
    #[serde(rename = "Voting")]
    Voting,
}

impl FineRuleType {
    pub const ALL: [FineRuleType; 21] = [
        FineRuleType::Advertising,
        FineRuleType::ModerationEnforcement,
        FineRuleType::CopyrightPiracy,
        FineRuleType::Doxxing,
        FineRuleType::Format,
        FineRuleType::Harassment,
        FineRuleType::HateSpeech,
        FineRuleType::Images,
        FineRuleType::OutsideContent,
        FineRuleType::LowQualityContent,
        FineRuleType::Nsfw,
        FineRuleType::OffTopic,
        FineRuleType::PersonalArmy,
        FineRuleType::Personality,
        FineRuleType::Politics,
        FineRuleType::Reddiquette,
        FineRuleType::Reposting,
        FineRuleType::Spam,
        FineRuleType::Spoilers,
        FineRuleType::Trolling,
        FineRuleType::Voting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FineRuleType::Advertising => "Advertising",
            FineRuleType::ModerationEnforcement => "Moderation Enforcement",
            FineRuleType::CopyrightPiracy => "Copyright/Piracy",
            FineRuleType::Doxxing => "Doxxing",
            FineRuleType::Format => "Format",
            FineRuleType::Harassment => "Harassment",
            FineRuleType::HateSpeech => "Hate Speech",
            FineRuleType::Images => "Images",
            FineRuleType::OutsideContent => "Outside Content",
            FineRuleType::LowQualityContent => "Low-Quality Content",
            FineRuleType::Nsfw => "NSFW",
            FineRuleType::OffTopic => "Off-topic",
            FineRuleType::PersonalArmy => "Personal Army",
            FineRuleType::Personality => "Personality",
            FineRuleType::Politics => "Politics",
            FineRuleType::Reddiquette => "Reddiquette",
            FineRuleType::Reposting => "Reposting",
            FineRuleType::Spam => "Spam",
            FineRuleType::Spoilers => "Spoilers",
            FineRuleType::Trolling => "Trolling",
            FineRuleType::Voting => "Voting",
        }
    }

    /// The coarse category this fine type folds into.
    ///
    /// Advertising has no coarse category of its own and goes to Spam.
    /// Rules about links count as Outside Content.
    pub fn coarse(self) -> CoarseRuleType {
        use CoarseRuleType as C;
        use FineRuleType as F;
        match self {
            F::Personality => C::Incivility,
            F::Harassment | F::Doxxing => C::Harassment,
            F::Spam | F::Reposting | F::CopyrightPiracy | F::Advertising => C::Spam,
            F::Format | F::Images | F::OutsideContent => C::Format,
            F::LowQualityContent | F::Nsfw | F::Spoilers => C::Content,
            F::OffTopic | F::Politics => C::OffTopic,
            F::HateSpeech => C::HateSpeech,
            F::Trolling | F::PersonalArmy => C::Trolling,
            F::Voting | F::ModerationEnforcement | F::Reddiquette => C::MetaRules,
        }
    }
}

impl fmt::Display for FineRuleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FineRuleType {
    type Err = UnknownRuleType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = normalize_type_name(s);
        FineRuleType::ALL
            .into_iter()
            .find(|t| normalize_type_name(t.name()) == key)
            .or(match key.as_str() {
                "links" => Some(FineRuleType::OutsideContent),
                "copyright" | "piracy" => Some(FineRuleType::CopyrightPiracy),
                "hatespeech" => Some(FineRuleType::HateSpeech),
                _ => None,
            })
            .ok_or_else(|| UnknownRuleType(s.to_string()))
    }
}

/// Coarse violation categories used by the detectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CoarseRuleType {
    #[serde(rename = "Incivility")]
    Incivility,
    #[serde(rename = "Harassment")]
    Harassment,
    #[serde(rename = "Spam")]
    Spam,
    #[serde(rename = "Format")]
    Format,
    #[serde(rename = "Content")]
    Content,
    #[serde(rename = "Off-topic")]
    OffTopic,
    #[serde(rename = "Hate speech")]
    HateSpeech,
    #[serde(rename = "Trolling")]
    Trolling,
    #[serde(rename = "Meta-rules")]
    MetaRules,
}

impl CoarseRuleType {
    pub const ALL: [CoarseRuleType; 9] = [
        CoarseRuleType::Incivility,
        CoarseRuleType::Harassment,
        CoarseRuleType::Spam,
        CoarseRuleType::Format,
        CoarseRuleType::Content,
        CoarseRuleType::OffTopic,
        CoarseRuleType::HateSpeech,
        CoarseRuleType::Trolling,
        CoarseRuleType::MetaRules,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CoarseRuleType::Incivility => "Incivility",
            CoarseRuleType::Harassment => "Harassment",
            CoarseRuleType::Spam => "Spam",
            CoarseRuleType::Format => "Format",
            CoarseRuleType::Content => "Content",
            CoarseRuleType::OffTopic => "Off-topic",
            CoarseRuleType::HateSpeech => "Hate speech",
            CoarseRuleType::Trolling => "Trolling",
            CoarseRuleType::MetaRules => "Meta-rules",
        }
    }

    /// Filesystem-friendly identifier.
    pub fn slug(self) -> &'static str {
        match self {
            CoarseRuleType::Incivility => "incivility",
            CoarseRuleType::Harassment => "harassment",
            CoarseRuleType::Spam => "spam",
            CoarseRuleType::Format => "format",
            CoarseRuleType::Content => "content",
            CoarseRuleType::OffTopic => "off-topic",
            CoarseRuleType::HateSpeech => "hate-speech",
            CoarseRuleType::Trolling => "trolling",
            CoarseRuleType::MetaRules => "meta-rules",
        }
    }

    pub fn fine_members(self) -> Vec<FineRuleType> {
        FineRuleType::ALL
            .into_iter()
            .filter(|f| f.coarse() == self)
            .collect()
    }
}

impl fmt::Display for CoarseRuleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CoarseRuleType {
    type Err = UnknownRuleType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = normalize_type_name(s);
        CoarseRuleType::ALL
            .into_iter()
            .find(|t| normalize_type_name(t.name()) == key || normalize_type_name(t.slug()) == key)
            .ok_or_else(|| UnknownRuleType(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown rule type `{0}`")]
pub struct UnknownRuleType(pub String);

fn normalize_type_name(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Maps a set of fine types onto the coarse categories they belong to.
pub fn coarsen<'a, I>(fine_types: I) -> BTreeSet<CoarseRuleType>
where
    I: IntoIterator<Item = &'a FineRuleType>,
{
    fine_types.into_iter().map(|f| f.coarse()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harassment_and_doxxing_fold_together() {
        let got = coarsen(&[FineRuleType::Harassment, FineRuleType::Doxxing]);
        assert_eq!(got, BTreeSet::from([CoarseRuleType::Harassment]));
    }

    #[test]
    fn voting_is_meta() {
        assert_eq!(
            coarsen(&[FineRuleType::Voting]),
            BTreeSet::from([CoarseRuleType::MetaRules])
        );
    }

    #[test]
    fn empty_set_maps_to_empty() {
        assert!(coarsen(&[]).is_empty());
    }

    #[test]
    fn every_coarse_type_has_a_member() {
        for c in CoarseRuleType::ALL {
            assert!(!c.fine_members().is_empty(), "{c} has no fine members");
        }
    }

    #[test]
    fn names_round_trip() {
        for f in FineRuleType::ALL {
            assert_eq!(f.name().parse::<FineRuleType>().unwrap(), f);
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json, format!("\"{}\"", f.name()));
        }
        for c in CoarseRuleType::ALL {
            assert_eq!(c.name().parse::<CoarseRuleType>().unwrap(), c);
            assert_eq!(c.slug().parse::<CoarseRuleType>().unwrap(), c);
        }
        assert_eq!("Links".parse::<FineRuleType>().unwrap(), FineRuleType::OutsideContent);
        assert!("Tone".parse::<FineRuleType>().is_err());
    }
}
