//! `--config FILE` support: `key=value` lines become `--key=value` flags
//! placed before the command-line flags, which therefore win.

use std::fs;

use fbmlab_core::Error;

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("config line {}: expected key=value, got '{line}'", ln + 1)))?;
        let key = k.trim().trim_start_matches("--");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::Usage(format!("config line {}: bad key '{k}'", ln + 1)));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Removes `--config FILE` / `--config=FILE` from `argv` and splices the
/// file's settings in right after the subcommand name.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>, Error> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or_else(|| Error::Usage("--config needs a file".into()))?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = fs::read_to_string(&path).map_err(|e| Error::Usage(format!("cannot read config '{path}': {e}")))?;
    let flags: Vec<String> = parse_config(&text)?
        .into_iter()
        .map(|(k, v)| format!("--{k}={v}"))
        .collect();
    // argv[0] is the program, argv[1] the subcommand
    let at = rest.len().min(2);
    rest.splice(at..at, flags);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let c = parse_config("# run\nH = 0.7\n\npaths=200\n").unwrap();
        assert_eq!(c, vec![("H".into(), "0.7".into()), ("paths".into(), "200".into())]);
        assert!(parse_config("nonsense\n").is_err());
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = std::env::temp_dir().join(format!("fbmlab-config-{}", std::process::id()));
        fs::write(&dir, "H=0.6\nseed=3\n").unwrap();
        let argv: Vec<String> = ["fbmlab", "fbm", "--config", dir.to_str().unwrap(), "--H", "0.8"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = expand_config(argv).unwrap();
        assert_eq!(out, vec!["fbmlab", "fbm", "--H=0.6", "--seed=3", "--H", "0.8"]);
        fs::remove_file(dir).ok();
    }
}
