//! Command line front end and labelling service for glyphforge.

pub mod cli;
pub mod server;

use std::path::Path;

use glyphforge::bundle::{self, BundleError, Component, LangBundle};

/// Loads the bundle for `lang` from `dir` if any of its files exist.
/// A directory without bundle files yields `Ok(None)`; a partial or
/// corrupt bundle is an error.
pub fn load_optional_bundle(dir: &Path, lang: &str) -> Result<Option<LangBundle>, BundleError> {
    bundle::validate_lang_code(lang)?;
    let any = Component::ALL.iter().any(|c| dir.join(c.file_name(lang)).exists());
    if any {
        bundle::load_bundle(dir, lang).map(Some)
    } else {
        Ok(None)
    }
}
