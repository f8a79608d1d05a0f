//! Prompt strings for building boundary reference images, and a tolerant
//! parser for the grouping answers they elicit.
//!
//! Class names inside the analysis prompt are wrapped in single quotes. A
//! backslash or single quote inside a name is preceded by a backslash, so
//! `o'brien` becomes `'o\'brien'`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::ClassCatalog;

const GROUPING: &str = "Please group the classes I'm talking about without using any other class names. Ask for similar features in appearance, a group of two class names, and tell me what the features of similar appearance are, a sentence description is fine. Format: desk and dining_table - Both have flat horizontal surfaces with legs for support";

const CONFIRMATION: &str =
    "Is there any other combination with similar appearance? If not, answer no";

const GENERATION_SUFFIX: &str = "As realistic as possible. More fit for life.";

/// Two easily confused classes and what they have in common.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub class_a: String,
    pub class_b: String,
    pub common_features: String,
}

impl GroupRecord {
    pub fn validate(&self, catalog: &ClassCatalog) -> Result<()> {
        for name in [&self.class_a, &self.class_b] {
            if catalog.index_of(name).is_none() {
                return Err(Error::Validation(format!("unknown class {name:?}")));
            }
        }
        if self.class_a == self.class_b {
            return Err(Error::Validation(format!(
                "class {:?} grouped with itself",
                self.class_a
            )));
        }
        if self.common_features.trim().is_empty() {
            return Err(Error::Validation(
                "empty common-features description".into(),
            ));
        }
        Ok(())
    }

    pub fn involves(&self, class: &str) -> bool {
        self.class_a == class || self.class_b == class
    }
}

pub fn quote_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len() + 2);
    out.push('\'');
    for ch in name.chars() {
        if ch == '\'' || ch == '\\' {
            out.push('\\');
        }
        out.push(ch);
    }
    out.push('\'');
    out
}

/// Inverse of [`quote_name`].
pub fn unquote_name(quoted: &str) -> Option<String> {
    let inner = quoted.strip_prefix('\'')?.strip_suffix('\'')?;
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(ch) = chars.next() {
        match ch {
            '\\' => out.push(chars.next()?),
            '\'' => return None,
            c => out.push(c),
        }
    }
    Some(out)
}

pub fn analysis_prompt<S: AsRef<str>>(classes: &[S]) -> Result<String> {
    if classes.is_empty() {
        return Err(Error::InvalidParameter("no classes to analyze".into()));
    }
    let list: Vec<String> = classes.iter().map(|c| quote_name(c.as_ref())).collect();
    Ok(format!(
        "Please analyze the appearance characteristics of these classes [{}]",
        list.join(", ")
    ))
}

pub fn grouping_prompt() -> &'static str {
    GROUPING
}

pub fn confirmation_prompt() -> &'static str {
    CONFIRMATION
}

pub fn similarity_prompt(a: &str, b: &str) -> Result<String> {
    if a == b {
        return Err(Error::InvalidParameter(format!(
            "similarity prompt needs two different classes, got {a:?} twice"
        )));
    }
    if a.trim().is_empty() || b.trim().is_empty() {
        return Err(Error::InvalidParameter("empty class name".into()));
    }
    Ok(format!(
        "What does the similarity between {a} and {b} in appearance? Please answer in the format of: both {a} and {b} have A, B, C...., where A, B, and C are phrases to describe the similarities between {a} and {b}. Please state specific similarities, not just generalizations such as similar shape!"
    ))
}

/// Image-generation prompt. With common features the image is pushed toward
/// the confusable class; an empty or missing description gives the plain form.
pub fn generation_prompt(class: &str, common_features: Option<&str>) -> Result<String> {
    if class.trim().is_empty() {
        return Err(Error::InvalidParameter("empty class name".into()));
    }
    Ok(
        match common_features.map(str::trim).filter(|s| !s.is_empty()) {
            Some(cc) => format!("generate an image of {class} that has {cc}. {GENERATION_SUFFIX}"),
            None => format!("generate an image of {class}. {GENERATION_SUFFIX}"),
        },
    )
}

pub fn format_grouping_line(r: &GroupRecord) -> String {
    format!("{} and {} - {}", r.class_a, r.class_b, r.common_features)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedGroups {
    pub records: Vec<GroupRecord>,
    pub warnings: Vec<String>,
}

fn strip_list_marker(line: &str) -> &str {
    let l = line.trim_start();
    if let Some(rest) = l.strip_prefix("- ").or_else(|| l.strip_prefix("* ")) {
        return rest.trim_start();
    }
    let digits = l.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &l[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim_start();
        }
    }
    l
}

fn is_negative_answer(line: &str) -> bool {
    let l = line.trim().trim_end_matches('.').to_ascii_lowercase();
    l == "no"
}

/// Splits `<a> and <b>` into its two names. With a catalog, every " and "
/// position is tried and the one naming two catalog classes wins; without,
/// the first occurrence is used.
fn split_pair(pair: &str, catalog: Option<&ClassCatalog>) -> Option<(String, String)> {
    const SEP: &str = " and ";
    let positions: Vec<usize> = pair.match_indices(SEP).map(|(i, _)| i).collect();
    let cut = |i: usize| {
        (
            pair[..i].trim().to_owned(),
            pair[i + SEP.len()..].trim().to_owned(),
        )
    };
    let chosen = match catalog {
        Some(cat) => positions
            .iter()
            .map(|&i| cut(i))
            .find(|(a, b)| cat.index_of(a).is_some() && cat.index_of(b).is_some()),
        None => positions.first().map(|&i| cut(i)),
    };
    chosen.filter(|(a, b)| !a.is_empty() && !b.is_empty())
}

/// Parses lines of the form `<a> and <b> - <description>`. Blank lines and a
/// bare "no" are skipped; anything else that does not parse, or that fails
/// validation against `catalog`, becomes a warning.
pub fn parse_grouping_response(text: &str, catalog: Option<&ClassCatalog>) -> ParsedGroups {
    let mut out = ParsedGroups::default();
    for (lineno, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() || is_negative_answer(raw) {
            continue;
        }
        let line = strip_list_marker(raw).trim_end();
        let parsed = line.split_once(" - ").and_then(|(pair, desc)| {
            let desc = desc.trim();
            if desc.is_empty() {
                return None;
            }
            split_pair(pair, catalog).map(|(a, b)| GroupRecord {
                class_a: a,
                class_b: b,
                common_features: desc.to_owned(),
            })
        });
        match parsed {
            Some(rec) => {
                let check = match catalog {
                    Some(cat) => rec.validate(cat),
                    None if rec.class_a == rec.class_b => Err(Error::Validation(format!(
                        "class {:?} grouped with itself",
                        rec.class_a
                    ))),
                    None => Ok(()),
                };
                match check {
                    Ok(()) => out.records.push(rec),
                    Err(e) => out.warnings.push(format!("line {}: {e}", lineno + 1)),
                }
            }
            None => out.warnings.push(format!(
                "line {}: not a grouping line: {:?}",
                lineno + 1,
                raw.trim()
            )),
        }
    }
    out
}

/// One image-generation request for the external generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub class: String,
    /// Common features shared with a confusable class, if any.
    pub common_features: Option<String>,
    /// The class it is confused with, if any.
    pub confused_with: Option<String>,
    pub prompt: String,
}

/// Prompt batch consumed by the image-generation client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBatch {
    pub images_per_prompt: usize,
    pub requests: Vec<GenerationRequest>,
}

/// One boundary prompt per (class, group) membership, and a plain prompt for
/// every class that is in no group. Requests follow catalog order.
pub fn build_prompt_batch(
    catalog: &ClassCatalog,
    groups: &[GroupRecord],
    images_per_prompt: usize,
) -> Result<PromptBatch> {
    if images_per_prompt == 0 {
        return Err(Error::InvalidParameter(
            "images per prompt must be >= 1".into(),
        ));
    }
    for g in groups {
        g.validate(catalog)?;
    }
    let mut requests = Vec::new();
    for class in catalog.names() {
        let mut any = false;
        for g in groups.iter().filter(|g| g.involves(class)) {
            any = true;
            let other = if g.class_a == class {
                &g.class_b
            } else {
                &g.class_a
            };
            requests.push(GenerationRequest {
                class: class.to_owned(),
                common_features: Some(g.common_features.clone()),
                confused_with: Some(other.clone()),
                prompt: generation_prompt(class, Some(&g.common_features))?,
            });
        }
        if !any {
            requests.push(GenerationRequest {
                class: class.to_owned(),
                common_features: None,
                confused_with: None,
                prompt: generation_prompt(class, None)?,
            });
        }
    }
    Ok(PromptBatch {
        images_per_prompt,
        requests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{ClassEntry, Split};

    #[test]
    fn analysis_two_classes() {
        assert_eq!(
            analysis_prompt(&["goldfish", "bullfrog"]).unwrap(),
            "Please analyze the appearance characteristics of these classes ['goldfish', 'bullfrog']"
        );
        assert_eq!(
            analysis_prompt(&["car"]).unwrap(),
            "Please analyze the appearance characteristics of these classes ['car']"
        );
        assert!(analysis_prompt::<&str>(&[]).is_err());
    }

    #[test]
    fn quoting_roundtrip() {
        for name in ["o'brien", r"back\slash", "plain", "''", r"\'"] {
            let q = quote_name(name);
            assert_eq!(unquote_name(&q).as_deref(), Some(name), "{q}");
        }
        assert_eq!(quote_name("o'brien"), r"'o\'brien'");
        let p = analysis_prompt(&["o'brien"]).unwrap();
        assert!(p.ends_with(r"['o\'brien']"));
    }

    #[test]
    fn fixed_prompts() {
        assert!(grouping_prompt().contains(
            "desk and dining_table - Both have flat horizontal surfaces with legs for support"
        ));
        assert!(confirmation_prompt().ends_with("If not, answer no"));
        assert_eq!(grouping_prompt(), grouping_prompt());
    }

    #[test]
    fn similarity_train_car() {
        assert_eq!(
            similarity_prompt("train", "car").unwrap(),
            "What does the similarity between train and car in appearance? Please answer in the format of: both train and car have A, B, C...., where A, B, and C are phrases to describe the similarities between train and car. Please state specific similarities, not just generalizations such as similar shape!"
        );
        let p = similarity_prompt("desk", "dining_table").unwrap();
        assert!(p.contains("both desk and dining_table have A, B, C"));
        assert!(similarity_prompt("x", "x").is_err());
    }

    #[test]
    fn generation_forms() {
        assert_eq!(
            generation_prompt("car", Some("elongated metal bodies, wheels")).unwrap(),
            "generate an image of car that has elongated metal bodies, wheels. As realistic as possible. More fit for life."
        );
        assert_eq!(
            generation_prompt("goldfish", None).unwrap(),
            "generate an image of goldfish. As realistic as possible. More fit for life."
        );
        assert_eq!(
            generation_prompt("goldfish", Some("")).unwrap(),
            generation_prompt("goldfish", None).unwrap()
        );
        assert!(generation_prompt(" ", None).is_err());
    }

    #[test]
    fn parse_exemplar_line() {
        let g = parse_grouping_response(
            "desk and dining_table - Both have flat horizontal surfaces with legs for support",
            None,
        );
        assert!(g.warnings.is_empty());
        assert_eq!(
            g.records,
            vec![GroupRecord {
                class_a: "desk".into(),
                class_b: "dining_table".into(),
                common_features: "Both have flat horizontal surfaces with legs for support".into(),
            }]
        );
    }

    #[test]
    fn parse_empty_and_noise() {
        assert_eq!(parse_grouping_response("", None), ParsedGroups::default());
        let text = "Sure, here are the groups:\n\n1. cat and dog - Both are furry\n- truck and automobile - Both have four wheels\nNo.\n";
        let g = parse_grouping_response(text, None);
        assert_eq!(g.records.len(), 2);
        assert_eq!(g.warnings.len(), 1);
        assert!(g.warnings[0].contains("line 1"));
        assert_eq!(g.records[1].class_a, "truck");
    }

    #[test]
    fn parse_with_catalog_disambiguates_and_filters() {
        let cat = ClassCatalog::new(
            ["salt and pepper", "sand", "frog"]
                .iter()
                .map(|n| ClassEntry::new(*n, Split::Closed))
                .collect(),
        )
        .unwrap();
        let g = parse_grouping_response(
            "salt and pepper and sand - Both are granular\nfrog and toad - Both are amphibians",
            Some(&cat),
        );
        assert_eq!(g.records.len(), 1);
        assert_eq!(g.records[0].class_a, "salt and pepper");
        assert_eq!(g.records[0].class_b, "sand");
        assert_eq!(g.warnings.len(), 1);
    }

    #[test]
    fn prompt_batch_covers_every_class() {
        let cat = ClassCatalog::new(
            ["car", "train", "goldfish"]
                .iter()
                .map(|n| ClassEntry::new(*n, Split::Closed))
                .collect(),
        )
        .unwrap();
        let groups = vec![GroupRecord {
            class_a: "train".into(),
            class_b: "car".into(),
            common_features: "wheels, windows".into(),
        }];
        let batch = build_prompt_batch(&cat, &groups, 3).unwrap();
        let classes: Vec<&str> = batch.requests.iter().map(|r| r.class.as_str()).collect();
        assert_eq!(classes, vec!["car", "train", "goldfish"]);
        assert_eq!(batch.requests[0].confused_with.as_deref(), Some("train"));
        assert!(batch.requests[2].common_features.is_none());
        assert!(build_prompt_batch(&cat, &groups, 0).is_err());
    }
}
