//! compose-prompts: deterministic scene-description sampling with an
//! optional external refinement hook.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use avatar_core::sampler::{sample_scene, ComposedScene, FactorVocabulary, Regime};

use crate::jsonio::{read_vocab, SceneJson};
use crate::Result;

/// Vocabulary shipped with the binary (used when no `--vocab` is given).
pub const BUILTIN_VOCAB: &str = include_str!("../../assets/factors.json");

pub struct ComposePromptsArgs {
    pub regime: Regime,
    pub count: usize,
    pub seed: u64,
    pub vocab: Option<PathBuf>,
    pub refine_cmd: Option<String>,
}

/// Pipe a prompt through a user-supplied shell command. Returns the refined
/// text and `true`, or the original prompt and `false` when the command is
/// absent, fails to spawn, or exits non-zero (pass-through behavior).
pub fn refine_external(prompt: &str, command: Option<&str>) -> (String, bool) {
    let Some(command) = command else {
        return (prompt.to_string(), false);
    };
    let spawned = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn();
    let mut child = match spawned {
        Ok(c) => c,
        Err(_) => return (prompt.to_string(), false),
    };
    if let Some(stdin) = child.stdin.take() {
        let mut stdin = stdin;
        if stdin.write_all(prompt.as_bytes()).is_err() {
            let _ = child.kill();
            let _ = child.wait();
            return (prompt.to_string(), false);
        }
    }
    match child.wait_with_output() {
        Ok(output) if output.status.success() => {
            match String::from_utf8(output.stdout) {
                Ok(text) => (text.trim_end_matches('\n').to_string(), true),
                Err(_) => (prompt.to_string(), false),
            }
        }
        _ => (prompt.to_string(), false),
    }
}

/// Compose `count` scenes for seeds `seed .. seed + count` and emit one JSON
/// object per line.
pub fn cmd_compose_prompts(args: &ComposePromptsArgs, out: &mut impl Write) -> Result<Vec<ComposedScene>> {
    let vocab: FactorVocabulary = match &args.vocab {
        Some(path) => read_vocab(path)?,
        None => crate::jsonio::parse_vocab(BUILTIN_VOCAB)?,
    };
    let mut scenes = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let scene = sample_scene(&vocab, args.regime, args.seed.wrapping_add(i as u64))?;
        let (refined, refine_ok) = match &args.refine_cmd {
            Some(cmd) => {
                let (text, ok) = refine_external(&scene.prompt, Some(cmd));
                (Some(text), ok)
            }
            None => (None, false),
        };
        let line = SceneJson::from_scene(&scene, refined, refine_ok);
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
        scenes.push(scene);
    }
    Ok(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_vocab_parses_and_has_enough_items() {
        let vocab = crate::jsonio::parse_vocab(BUILTIN_VOCAB).unwrap();
        for regime in [Regime::Outfit, Regime::Role] {
            for name in regime.required_factors() {
                let f = vocab
                    .get(name)
                    .unwrap_or_else(|| panic!("factor {name} missing"));
                assert!(
                    f.items.len() >= 8,
                    "factor {name} has only {} items",
                    f.items.len()
                );
            }
        }
        assert!(vocab.get("negative").unwrap().items.len() >= 8);
        // Both regimes compose.
        sample_scene(&vocab, Regime::Outfit, 0).unwrap();
        sample_scene(&vocab, Regime::Role, 0).unwrap();
    }

    #[test]
    fn refine_identity_and_transform() {
        let (out, ok) = refine_external("hello prompt", None);
        assert_eq!(out, "hello prompt");
        assert!(!ok);

        let (out, ok) = refine_external("hello prompt", Some("cat"));
        assert_eq!(out, "hello prompt");
        assert!(ok);

        let (out, ok) = refine_external("hello prompt", Some("tr 'a-z' 'A-Z'"));
        assert_eq!(out, "HELLO PROMPT");
        assert!(ok);
    }

    #[test]
    fn refine_failure_passes_through() {
        let (out, ok) = refine_external("keep me", Some("exit 3"));
        assert_eq!(out, "keep me");
        assert!(!ok);

        let (out, ok) = refine_external("keep me", Some("/no/such/binary_xyz"));
        assert_eq!(out, "keep me");
        assert!(!ok);
    }
}
