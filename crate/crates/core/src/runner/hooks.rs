//! Platform pinning hooks (fan speed, CPU clock, temperature).
//!
//! The exact commands differ per board and OS image, so they are plain
//! configuration. Every hook is optional; a missing hook is a no-op.

use std::path::Path;
use std::process::{Command, Stdio};

use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HookCommand {
    pub program: String,
    pub args: Vec<String>,
}

impl HookCommand {
    /// Whitespace-split command line. Use `sh -c '...'` style configs for
    /// anything needing a shell.
    pub fn parse(line: &str) -> Option<Self> {
        let mut parts = line.split_whitespace().map(str::to_owned);
        let program = parts.next()?;
        Some(Self {
            program,
            args: parts.collect(),
        })
    }

    pub fn shell(script: &str) -> Self {
        Self {
            program: "sh".into(),
            args: vec!["-c".into(), script.into()],
        }
    }

    fn output(&self) -> Result<String, String> {
        let out = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::null())
            .output()
            .map_err(|e| format!("{}: {e}", self.program))?;
        if !out.status.success() {
            return Err(format!("{} exited with {}", self.program, out.status));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlatformHooks {
    pub set_fan_max: Option<HookCommand>,
    pub pin_cpu_clock: Option<HookCommand>,
    pub restore: Option<HookCommand>,
    pub read_temp: Option<HookCommand>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HookFile {
    set_fan_max: Option<String>,
    pin_cpu_clock: Option<String>,
    restore: Option<String>,
    read_temp: Option<String>,
}

fn shell_hook(script: Option<String>) -> Option<HookCommand> {
    script.filter(|s| !s.trim().is_empty()).map(|s| HookCommand::shell(&s))
}

impl PlatformHooks {
    /// Hooks file: TOML with optional `set_fan_max`, `pin_cpu_clock`,
    /// `restore`, `read_temp` keys, each a shell command line.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let raw: HookFile = toml::from_str(text).map_err(|e| e.to_string())?;
        Ok(Self {
            set_fan_max: shell_hook(raw.set_fan_max),
            pin_cpu_clock: shell_hook(raw.pin_cpu_clock),
            restore: shell_hook(raw.restore),
            read_temp: shell_hook(raw.read_temp),
        })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text)
    }

    /// Run the fan and clock hooks. Returns `true` only when both exist and
    /// succeeded; failures are logged and otherwise ignored.
    pub fn pin(&self) -> bool {
        let mut pinned = true;
        for (name, hook) in [("set_fan_max", &self.set_fan_max), ("pin_cpu_clock", &self.pin_cpu_clock)] {
            match hook {
                None => pinned = false,
                Some(cmd) => {
                    if let Err(e) = cmd.output() {
                        log::warn!("{name} hook failed, continuing unpinned: {e}");
                        pinned = false;
                    }
                }
            }
        }
        pinned
    }

    pub fn restore(&self) {
        if let Some(cmd) = &self.restore {
            if let Err(e) = cmd.output() {
                log::warn!("restore hook failed: {e}");
            }
        }
    }

    pub fn read_temperature(&self) -> Option<f64> {
        let out = self.read_temp.as_ref()?.output().map_err(|e| log::warn!("read_temp hook failed: {e}")).ok()?;
        parse_temperature(&out)
    }
}

/// First number in the output, in °C. Accepts `vcgencmd measure_temp` output
/// (`temp=48.3'C`) and sysfs thermal zones in millidegrees (`48312`).
pub fn parse_temperature(text: &str) -> Option<f64> {
    let start = text.find(|c: char| c.is_ascii_digit() || c == '-')?;
    let rest = &text[start..];
    let end = rest
        .char_indices()
        .skip(1)
        .find(|(_, c)| !(c.is_ascii_digit() || *c == '.'))
        .map_or(rest.len(), |(i, _)| i);
    let value: f64 = rest[..end].parse().ok()?;
    Some(if value.abs() >= 1000.0 { value / 1000.0 } else { value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temperature_formats() {
        assert_eq!(parse_temperature("temp=48.3'C\n"), Some(48.3));
        assert_eq!(parse_temperature("48312\n"), Some(48.312));
        assert_eq!(parse_temperature("-5.5"), Some(-5.5));
        assert_eq!(parse_temperature("n/a"), None);
    }

    #[test]
    fn parse_command_line() {
        let cmd = HookCommand::parse("  vcgencmd  measure_temp ").unwrap();
        assert_eq!(cmd.program, "vcgencmd");
        assert_eq!(cmd.args, vec!["measure_temp"]);
        assert!(HookCommand::parse("   ").is_none());
    }

    #[test]
    fn missing_hooks_are_unpinned_noops() {
        let hooks = PlatformHooks::default();
        assert!(!hooks.pin());
        hooks.restore();
        assert_eq!(hooks.read_temperature(), None);
    }

    #[test]
    fn shell_hooks_run() {
        let hooks = PlatformHooks::from_toml(
            "set_fan_max = \"true\"\npin_cpu_clock = \"exit 0\"\nread_temp = \"echo temp=51.0\\\\'C\"\n",
        )
        .unwrap();
        assert!(hooks.pin());
        assert_eq!(hooks.read_temperature(), Some(51.0));
    }

    #[test]
    fn failing_hook_leaves_unpinned() {
        let hooks = PlatformHooks {
            set_fan_max: Some(HookCommand::shell("exit 1")),
            pin_cpu_clock: Some(HookCommand::shell("true")),
            ..Default::default()
        };
        assert!(!hooks.pin());
        let missing = PlatformHooks {
            set_fan_max: Some(HookCommand::parse("/nonexistent/fanctl").unwrap()),
            pin_cpu_clock: Some(HookCommand::shell("true")),
            ..Default::default()
        };
        assert!(!missing.pin());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PlatformHooks::from_toml("fan = \"x\"").is_err());
    }
}
