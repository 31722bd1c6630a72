//! Versioned prompt templates, one text asset per stage.
//!
//! A template must contain the `{{payload}}` placeholder. The payload is
//! spliced in between `<<<PAYLOAD` and `PAYLOAD>>>` marker lines; the offline
//! backend reads the last such block of a prompt.

use std::collections::BTreeMap;
use std::path::Path;

use super::StageTag;

pub const PAYLOAD_PLACEHOLDER: &str = "{{payload}}";
pub const PAYLOAD_OPEN: &str = "<<<PAYLOAD";
pub const PAYLOAD_CLOSE: &str = "PAYLOAD>>>";

#[derive(Debug, Clone)]
pub struct Templates {
    by_stage: BTreeMap<StageTag, String>,
}

fn bundled_text(stage: StageTag) -> &'static str {
    match stage {
        StageTag::Extract => include_str!("../../templates/extract.txt"),
        StageTag::AttributeMerge => include_str!("../../templates/attribute_merge.txt"),
        StageTag::ValueMerge => include_str!("../../templates/value_merge.txt"),
        StageTag::Contrast => include_str!("../../templates/contrast.txt"),
        StageTag::Usefulness => include_str!("../../templates/usefulness.txt"),
        StageTag::Critique => include_str!("../../templates/critique.txt"),
        StageTag::Revise => include_str!("../../templates/revise.txt"),
        StageTag::Autorate => include_str!("../../templates/autorate.txt"),
    }
}

pub fn file_name(stage: StageTag) -> String {
    format!("{}.txt", stage.as_str().to_ascii_lowercase())
}

impl Templates {
    pub fn bundled() -> Self {
        Self {
            by_stage: StageTag::ALL
                .into_iter()
                .map(|s| (s, bundled_text(s).to_string()))
                .collect(),
        }
    }

    /// Bundled templates overridden by any `<stage>.txt` found in `dir`.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut t = Self::bundled();
        for stage in StageTag::ALL {
            let path = dir.join(file_name(stage));
            if path.exists() {
                let text = std::fs::read_to_string(&path)?;
                if !text.contains(PAYLOAD_PLACEHOLDER) {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("{} lacks the {PAYLOAD_PLACEHOLDER} placeholder", path.display()),
                    ));
                }
                t.by_stage.insert(stage, text);
            }
        }
        Ok(t)
    }

    /// First line of each template, which carries its version tag.
    pub fn versions(&self) -> BTreeMap<StageTag, String> {
        self.by_stage
            .iter()
            .map(|(s, t)| (*s, t.lines().next().unwrap_or_default().to_string()))
            .collect()
    }

    pub fn render(&self, stage: StageTag, payload: &str) -> String {
        let block = format!("{PAYLOAD_OPEN}\n{payload}\n{PAYLOAD_CLOSE}");
        self.by_stage[&stage].replace(PAYLOAD_PLACEHOLDER, &block)
    }
}

/// The payload of the last marker block in `prompt`, if any.
pub fn extract_payload(prompt: &str) -> Option<&str> {
    let open = format!("{PAYLOAD_OPEN}\n");
    let start = prompt.rfind(&open)? + open.len();
    let rest = &prompt[start..];
    let end = rest.rfind(&format!("\n{PAYLOAD_CLOSE}"))?;
    Some(&rest[..end])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_template_has_a_placeholder() {
        for stage in StageTag::ALL {
            let text = bundled_text(stage);
            assert!(text.contains(PAYLOAD_PLACEHOLDER), "{stage}");
            assert!(text.starts_with("# template:"), "{stage}");
        }
    }

    #[test]
    fn payload_survives_rendering() {
        let t = Templates::bundled();
        let prompt = t.render(StageTag::Extract, "ENTITY\tX\nline two");
        assert_eq!(extract_payload(&prompt), Some("ENTITY\tX\nline two"));
        let retried = format!("{prompt}\n\nREMINDER: format");
        assert_eq!(extract_payload(&retried), Some("ENTITY\tX\nline two"));
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("contrast.txt"), "# template: contrast custom\n{{payload}}").unwrap();
        let t = Templates::from_dir(dir.path()).unwrap();
        assert_eq!(t.versions()[&StageTag::Contrast], "# template: contrast custom");
        std::fs::write(dir.path().join("extract.txt"), "no placeholder").unwrap();
        assert!(Templates::from_dir(dir.path()).is_err());
    }
}
