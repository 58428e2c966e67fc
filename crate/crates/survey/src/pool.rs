use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::SurveyError;

/// One comparison in the pool. The transformed prompts stay server-side
/// until the rater has voted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyPair {
    pub pair_id: String,
    pub original_prompt: String,
    pub method_a: String,
    pub method_b: String,
    pub image_a: String,
    pub image_b: String,
    pub prompt_a: String,
    pub prompt_b: String,
}

/// What a rater sees before voting. Method names are withheld as well.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindedPair {
    pub pair_id: String,
    pub original_prompt: String,
    pub image_a: String,
    pub image_b: String,
}

/// Returned after a vote, in the orientation the rater saw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reveal {
    pub pair_id: String,
    pub prompt_a: String,
    pub prompt_b: String,
}

impl SurveyPair {
    pub fn blinded(&self, swapped: bool) -> BlindedPair {
        let (a, b) = if swapped {
            (&self.image_b, &self.image_a)
        } else {
            (&self.image_a, &self.image_b)
        };
        BlindedPair {
            pair_id: self.pair_id.clone(),
            original_prompt: self.original_prompt.clone(),
            image_a: a.clone(),
            image_b: b.clone(),
        }
    }

    pub fn reveal(&self, swapped: bool) -> Reveal {
        let (a, b) = if swapped {
            (&self.prompt_b, &self.prompt_a)
        } else {
            (&self.prompt_a, &self.prompt_b)
        };
        Reveal {
            pair_id: self.pair_id.clone(),
            prompt_a: a.clone(),
            prompt_b: b.clone(),
        }
    }
}

/// Parses a line-delimited pair pool, rejecting self-comparisons and
/// repeated ids.
pub fn read_pool(text: &str) -> Result<Vec<SurveyPair>, SurveyError> {
    let mut seen = HashSet::new();
    let mut pool = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: SurveyPair = serde_json::from_str(line)
            .map_err(|e| SurveyError::Pool(format!("line {}: {e}", i + 1)))?;
        if pair.method_a == pair.method_b {
            return Err(SurveyError::Pool(format!(
                "line {}: pair {} compares {} with itself",
                i + 1,
                pair.pair_id,
                pair.method_a
            )));
        }
        if !seen.insert(pair.pair_id.clone()) {
            return Err(SurveyError::Pool(format!(
                "line {}: duplicate pair id {}",
                i + 1,
                pair.pair_id
            )));
        }
        pool.push(pair);
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> SurveyPair {
        SurveyPair {
            pair_id: "p1".into(),
            original_prompt: "a cat".into(),
            method_a: "tipo".into(),
            method_b: "plain".into(),
            image_a: "a.png".into(),
            image_b: "b.png".into(),
            prompt_a: "a cat, long".into(),
            prompt_b: "a cat".into(),
        }
    }

    #[test]
    fn blinded_view_has_no_prompts_or_methods() {
        let json = serde_json::to_string(&pair().blinded(false)).unwrap();
        assert!(!json.contains("prompt_a") && !json.contains("tipo"));
        assert_eq!(pair().blinded(true).image_a, "b.png");
        assert_eq!(pair().reveal(true).prompt_a, "a cat");
    }

    #[test]
    fn pool_validation() {
        let line = serde_json::to_string(&pair()).unwrap();
        assert_eq!(read_pool(&line).unwrap().len(), 1);
        assert!(read_pool(&format!("{line}\n{line}")).is_err());
        let mut same = pair();
        same.method_b = "tipo".into();
        assert!(read_pool(&serde_json::to_string(&same).unwrap()).is_err());
    }
}
