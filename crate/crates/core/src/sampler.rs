//! Deterministic factorized scene-description sampler.
//!
//! Scene prompts are assembled from independent vocabulary factors. Every
//! factor draws from its own RNG stream keyed by the factor name and the
//! seed, so editing one factor's vocabulary never perturbs another factor's
//! draw, and `(vocabulary, regime, seed)` fully determines the output bytes.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math::{fnv1a64, stream_seed};
use crate::{Error, Result};

/// One semantic factor: an ordered item list, optionally extended by an
/// omit-this-clause sentinel.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub name: String,
    pub items: Vec<String>,
    /// When set, the draw may select "none", omitting the factor's clause.
    pub optional: bool,
}

/// Factor vocabulary with stable iteration order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FactorVocabulary {
    factors: Vec<Factor>,
}

/// Reserved factor holding the negative-prompt artifact terms.
pub const NEGATIVE_FACTOR: &str = "negative";

impl FactorVocabulary {
    pub fn new(factors: Vec<Factor>) -> Result<FactorVocabulary> {
        for f in &factors {
            if f.items.is_empty() && !f.optional {
                return Err(Error::invalid_arg(format!(
                    "factor {:?} has no items and no sentinel",
                    f.name
                )));
            }
            for (i, item) in f.items.iter().enumerate() {
                if f.items[..i].contains(item) {
                    return Err(Error::DuplicateItem {
                        factor: f.name.clone(),
                        item: item.clone(),
                    });
                }
            }
        }
        Ok(FactorVocabulary { factors })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn get(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    /// Content hash covering names, items, order, and sentinel flags.
    pub fn content_hash(&self) -> u64 {
        let mut repr = String::new();
        for f in &self.factors {
            repr.push_str(&f.name);
            repr.push('\x1e');
            repr.push(if f.optional { '1' } else { '0' });
            for item in &f.items {
                repr.push('\x1f');
                repr.push_str(item);
            }
            repr.push('\n');
        }
        fnv1a64(repr.as_bytes())
    }
}

/// Composition regime: clothing factors spelled out, or a role archetype.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Outfit,
    Role,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Outfit => "outfit",
            Regime::Role => "role",
        }
    }

    /// Factors the regime's template consumes.
    pub fn required_factors(&self) -> &'static [&'static str] {
        match self {
            Regime::Outfit => &[
                "time_of_day",
                "lighting",
                "shot_size",
                "age",
                "gender_noun",
                "region",
                "top_color",
                "top_fabric",
                "top",
                "top_decoration",
                "outer_color",
                "outerwear",
                "outerwear_detail",
                "accessory",
                "hair_color",
                "hairstyle",
                "action",
            ],
            Regime::Role => &[
                "time_of_day",
                "lighting",
                "shot_size",
                "age",
                "gender_noun",
                "region",
                "role",
                "hair_color",
                "hairstyle",
                "action",
            ],
        }
    }
}

/// A fully composed scene description.
#[derive(Clone, Debug, PartialEq)]
pub struct ComposedScene {
    pub regime: Regime,
    /// Factor name -> drawn item (`None` = sentinel drawn, clause omitted),
    /// in the regime's factor order.
    pub assignments: Vec<(String, Option<String>)>,
    pub prompt: String,
    pub negative: String,
    pub seed: u64,
    pub vocab_hash: u64,
}

fn draw(vocab: &FactorVocabulary, name: &str, seed: u64) -> Result<Option<String>> {
    let factor = vocab
        .get(name)
        .ok_or_else(|| Error::MissingFactor(name.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&format!("factor:{name}"), seed));
    let n = factor.items.len() + usize::from(factor.optional);
    if n == 0 {
        return Err(Error::MissingFactor(name.to_string()));
    }
    let idx = rng.random_range(0..n);
    Ok(factor.items.get(idx).cloned())
}

/// "A" or "An" by the leading vowel of the following word.
fn article(following: &str) -> &'static str {
    match following.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "An",
        _ => "A",
    }
}

const CLOSING: &str = ", in a waist-up, standing, fixed-camera shot with arms and hands visible; \
lighting remains stable and physically plausible.";

/// Default number of negative terms.
pub const DEFAULT_NEGATIVE_TERMS: usize = 5;

fn draw_recorded(
    vocab: &FactorVocabulary,
    name: &str,
    seed: u64,
    assignments: &mut Vec<(String, Option<String>)>,
) -> Result<Option<String>> {
    let v = draw(vocab, name, seed)?;
    assignments.push((name.to_string(), v.clone()));
    Ok(v)
}

/// Compose one scene: one independent uniform draw per factor, sentinel
/// draws omit their clause, and the template fills left to right. Byte
/// deterministic in `(vocab, regime, seed)`.
pub fn sample_scene(vocab: &FactorVocabulary, regime: Regime, seed: u64) -> Result<ComposedScene> {
    let mut assignments = Vec::new();
    macro_rules! value {
        ($name:literal) => {
            draw_recorded(vocab, $name, seed, &mut assignments)?
        };
    }
    let need = |v: Option<String>, name: &str| -> Result<String> {
        v.ok_or_else(|| {
            Error::invalid_arg(format!("factor {name:?} must not be sentinel-only here"))
        })
    };

    let time_of_day = need(value!("time_of_day"), "time_of_day")?;
    let lighting = need(value!("lighting"), "lighting")?;
    let shot_size = need(value!("shot_size"), "shot_size")?;
    let age = need(value!("age"), "age")?;
    let gender = need(value!("gender_noun"), "gender_noun")?;
    let region = need(value!("region"), "region")?;

    let mut prompt = format!("{time_of_day}, {lighting}, {shot_size}, center composition. ");

    match regime {
        Regime::Outfit => {
            let top_color = need(value!("top_color"), "top_color")?;
            let top_fabric = need(value!("top_fabric"), "top_fabric")?;
            let top = need(value!("top"), "top")?;
            let top_decoration = value!("top_decoration");
            // The whole outerwear clause hinges on the outerwear draw; its
            // sub-factors are drawn on their own streams but recorded as
            // unassigned when the clause is omitted.
            let outerwear = value!("outerwear");
            let outer_color = draw(vocab, "outer_color", seed)?;
            let outerwear_detail = draw(vocab, "outerwear_detail", seed)?;
            let (outer_color, outerwear_detail) = if outerwear.is_some() {
                (outer_color, outerwear_detail)
            } else {
                (None, None)
            };
            assignments.push(("outer_color".to_string(), outer_color.clone()));
            assignments.push(("outerwear_detail".to_string(), outerwear_detail.clone()));
            let accessory = value!("accessory");
            let hair_color = need(value!("hair_color"), "hair_color")?;
            let hairstyle = need(value!("hairstyle"), "hairstyle")?;
            let action = need(value!("action"), "action")?;

            prompt.push_str(&format!(
                "{} {age} {gender} (from {region}) wearing a {top_color} {top_fabric} {top}",
                article(&age)
            ));
            if let Some(dec) = top_decoration {
                prompt.push_str(&format!(" featuring {dec}"));
            }
            if let Some(outer) = &outerwear {
                let color = outer_color.as_deref().unwrap_or("plain");
                prompt.push_str(&format!(" paired with a {color} {outer}"));
                if let Some(detail) = outerwear_detail {
                    prompt.push_str(&format!(" {detail}"));
                }
            }
            if let Some(acc) = accessory {
                prompt.push_str(&format!(" and {acc}"));
            }
            prompt.push_str(&format!(", with {hair_color} {hairstyle}. "));
            prompt.push_str(&format!("The person {action}{CLOSING}"));
        }
        Regime::Role => {
            let role = need(value!("role"), "role")?;
            let hair_color = need(value!("hair_color"), "hair_color")?;
            let hairstyle = need(value!("hairstyle"), "hairstyle")?;
            let action = need(value!("action"), "action")?;

            prompt.push_str(&format!(
                "{} {age} {gender} {role} from {region}, wearing characteristic \
{role}-specific clothing and accessories, with {hair_color} {hairstyle}. ",
                article(&age)
            ));
            prompt.push_str(&format!("The person {action}{CLOSING}"));
        }
    }

    let negative = compose_negative(vocab, seed, DEFAULT_NEGATIVE_TERMS)?;
    Ok(ComposedScene {
        regime,
        assignments,
        prompt,
        negative,
        seed,
        vocab_hash: vocab.content_hash(),
    })
}

/// Sample `k` distinct undesired-artifact terms, comma-joined, order
/// determined by the seed. `k` may not exceed the list length.
pub fn compose_negative(vocab: &FactorVocabulary, seed: u64, k: usize) -> Result<String> {
    let factor = vocab
        .get(NEGATIVE_FACTOR)
        .ok_or_else(|| Error::MissingFactor(NEGATIVE_FACTOR.to_string()))?;
    if k > factor.items.len() {
        return Err(Error::invalid_arg(format!(
            "requested {k} negative terms, vocabulary has {}",
            factor.items.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed("factor:negative", seed));
    let mut pool: Vec<&String> = factor.items.iter().collect();
    pool.shuffle(&mut rng);
    let chosen: Vec<&str> = pool.into_iter().take(k).map(|s| s.as_str()).collect();
    Ok(chosen.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn factor(name: &str, items: &[&str], optional: bool) -> Factor {
        Factor {
            name: name.into(),
            items: items.iter().map(|s| s.to_string()).collect(),
            optional,
        }
    }

    fn test_vocab() -> FactorVocabulary {
        FactorVocabulary::new(vec![
            factor("time_of_day", &["golden hour", "noon", "dusk", "dawn"], false),
            factor("lighting", &["soft key light", "window light", "overcast"], false),
            factor("shot_size", &["medium shot", "medium close-up"], false),
            factor("age", &["adult", "elderly", "young adult"], false),
            factor("gender_noun", &["man", "woman", "person"], false),
            factor("region", &["East Asia", "Northern Europe", "West Africa"], false),
            factor("top_color", &["navy", "ochre", "ivory"], false),
            factor("top_fabric", &["cotton", "linen", "wool"], false),
            factor("top", &["shirt", "sweater", "tunic"], false),
            factor("top_decoration", &["embroidered cuffs", "a chest pocket"], true),
            factor("outer_color", &["charcoal", "olive"], false),
            factor("outerwear", &["blazer", "cardigan"], true),
            factor("outerwear_detail", &["with patch pockets"], true),
            factor("accessory", &["a scarf", "round glasses"], true),
            factor("hair_color", &["black", "auburn", "silver"], false),
            factor("hairstyle", &["a short crop", "a low bun"], false),
            factor("role", &["florist", "harbor pilot", "archivist"], false),
            factor(
                "action",
                &["speaks to the camera", "adjusts their collar and returns to rest"],
                false,
            ),
            factor(
                "negative",
                &["low resolution", "motion jitter", "flicker", "overexposure", "underexposure", "extreme torso crop", "seated pose"],
                false,
            ),
        ])
        .unwrap()
    }

    #[test]
    fn duplicate_items_rejected() {
        let err = FactorVocabulary::new(vec![factor("x", &["a", "b", "a"], false)]).unwrap_err();
        assert!(matches!(err, Error::DuplicateItem { .. }));
    }

    #[test]
    fn sentinel_only_factor_loads() {
        let v = FactorVocabulary::new(vec![factor("opt", &[], true)]).unwrap();
        assert!(v.get("opt").unwrap().optional);
    }

    #[test]
    fn single_item_vocab_fully_determines_prompt() {
        let v = FactorVocabulary::new(
            test_vocab()
                .factors()
                .iter()
                .map(|f| Factor {
                    name: f.name.clone(),
                    // The negative factor keeps its full list (the default
                    // negative draw needs five terms).
                    items: if f.name == NEGATIVE_FACTOR {
                        f.items.clone()
                    } else {
                        f.items.iter().take(1).cloned().collect()
                    },
                    optional: false,
                })
                .collect(),
        )
        .unwrap();
        let a = sample_scene(&v, Regime::Role, 1).unwrap();
        let b = sample_scene(&v, Regime::Role, 999).unwrap();
        assert_eq!(a.prompt, b.prompt, "one item per factor leaves no freedom");
        assert!(a.prompt.contains("florist"));
    }

    #[test]
    fn same_seed_same_bytes() {
        let v = test_vocab();
        let a = sample_scene(&v, Regime::Outfit, 123).unwrap();
        let b = sample_scene(&v, Regime::Outfit, 123).unwrap();
        assert_eq!(a, b);
        let c = sample_scene(&v, Regime::Outfit, 124).unwrap();
        assert_ne!(a.prompt, c.prompt);
    }

    #[test]
    fn assigned_items_appear_verbatim() {
        let v = test_vocab();
        for seed in 0..50 {
            for regime in [Regime::Outfit, Regime::Role] {
                let s = sample_scene(&v, regime, seed).unwrap();
                for (name, item) in &s.assignments {
                    let _ = name;
                    if let Some(item) = item {
                        assert!(
                            s.prompt.contains(item.as_str()),
                            "item {item:?} missing from {:?}",
                            s.prompt
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn factor_independence_under_vocab_edits() {
        let v = test_vocab();
        let before = sample_scene(&v, Regime::Role, 7).unwrap();
        // Change an unrelated factor's vocabulary (hair colors); every other
        // factor's draw must stay identical.
        let edited = FactorVocabulary::new(
            v.factors()
                .iter()
                .map(|f| {
                    if f.name == "hair_color" {
                        factor("hair_color", &["green", "violet", "cyan", "amber"], false)
                    } else {
                        f.clone()
                    }
                })
                .collect(),
        )
        .unwrap();
        let after = sample_scene(&edited, Regime::Role, 7).unwrap();
        for ((name_a, item_a), (name_b, item_b)) in
            before.assignments.iter().zip(&after.assignments)
        {
            assert_eq!(name_a, name_b);
            if name_a != "hair_color" {
                assert_eq!(item_a, item_b, "factor {name_a} drifted");
            }
        }
    }

    #[test]
    fn missing_factor_is_named() {
        let v = FactorVocabulary::new(vec![factor("time_of_day", &["noon"], false)]).unwrap();
        let err = sample_scene(&v, Regime::Role, 0).unwrap_err();
        assert!(matches!(err, Error::MissingFactor(name) if name == "lighting"));
    }

    #[test]
    fn uniformity_over_ten_item_factor() {
        // 10k role draws over a 10-item role factor: each count in
        // [800, 1200] (4 sigma of a multinomial cell).
        let mut factors = test_vocab().factors().to_vec();
        for f in factors.iter_mut() {
            if f.name == "role" {
                f.items = (0..10).map(|i| format!("role-{i}")).collect();
            }
        }
        let v = FactorVocabulary::new(factors).unwrap();
        let mut counts = [0usize; 10];
        for seed in 0..10_000u64 {
            let s = sample_scene(&v, Regime::Role, seed).unwrap();
            let role = s
                .assignments
                .iter()
                .find(|(n, _)| n == "role")
                .and_then(|(_, i)| i.clone())
                .unwrap();
            let idx: usize = role.strip_prefix("role-").unwrap().parse().unwrap();
            counts[idx] += 1;
        }
        for (i, c) in counts.iter().enumerate() {
            assert!((800..=1200).contains(c), "role-{i} drawn {c} times");
        }
    }

    #[test]
    fn negative_composition_rules() {
        let v = test_vocab();
        assert_eq!(compose_negative(&v, 5, 0).unwrap(), "");
        let all = compose_negative(&v, 5, 7).unwrap();
        let parts: Vec<&str> = all.split(", ").collect();
        assert_eq!(parts.len(), 7);
        let list = &v.get("negative").unwrap().items;
        for p in &parts {
            assert!(list.iter().any(|i| i == p));
        }
        // distinct
        for (i, p) in parts.iter().enumerate() {
            assert!(!parts[..i].contains(p));
        }
        assert!(compose_negative(&v, 5, 8).is_err());

        let k3a = compose_negative(&v, 11, 3).unwrap();
        let k3b = compose_negative(&v, 11, 3).unwrap();
        assert_eq!(k3a, k3b);
    }

    #[test]
    fn sentinel_omits_clause() {
        let v = test_vocab();
        let mut saw_some = false;
        let mut saw_none = false;
        for seed in 0..60 {
            let s = sample_scene(&v, Regime::Outfit, seed).unwrap();
            let acc = s
                .assignments
                .iter()
                .find(|(n, _)| n == "accessory")
                .unwrap()
                .1
                .clone();
            match acc {
                Some(item) => {
                    saw_some = true;
                    assert!(s.prompt.contains(&format!("and {item}")));
                }
                None => {
                    saw_none = true;
                    assert!(!s.prompt.contains(" and a scarf"));
                }
            }
        }
        assert!(saw_some && saw_none, "sentinel should fire sometimes");
    }

    #[test]
    fn article_agrees_with_vowels() {
        assert_eq!(article("elderly"), "An");
        assert_eq!(article("young adult"), "A");
        let v = test_vocab();
        for seed in 0..30 {
            let s = sample_scene(&v, Regime::Role, seed).unwrap();
            let age = s
                .assignments
                .iter()
                .find(|(n, _)| n == "age")
                .unwrap()
                .1
                .clone()
                .unwrap();
            assert!(s.prompt.contains(&format!("{} {age}", article(&age))));
        }
    }

    #[test]
    fn vocab_hash_tracks_content() {
        let a = test_vocab();
        let mut factors = a.factors().to_vec();
        factors[0].items[0] = "midnight".into();
        let b = FactorVocabulary::new(factors).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash(), test_vocab().content_hash());
    }
}
