//! Run settings shared by every subcommand, loaded from a `key = value`
//! config file and then overridden by command-line flags.
//!
//! Config schema (one pair per line, `#` starts a comment, keys may use `-`
//! or `_`):
//!
//! | key          | value                                          | default     |
//! |--------------|------------------------------------------------|-------------|
//! | `seed`       | unsigned 64-bit integer                        | `0`         |
//! | `dtype`      | `f32` or `f64`                                 | `f64`       |
//! | `len`        | `N` or an inclusive doubling sweep `A..B`      | `1024`      |
//! | `filter-len` | taps per filter                                | `7`         |
//! | `block-size` | two-stage chunk length                         | `16`        |
//! | `width`      | channel count                                  | `8`         |
//! | `group-size` | channels per filter group                      | `1`         |
//! | `ranks`      | simulated ranks (power of two)                 | `4`         |
//! | `scheme`     | `a2a`, `a2a-pipe`, `p2p`, `p2p-overlap`, `p2p-fft` | `a2a`   |
//! | `layout`     | `seq` or `zigzag`                              | `seq`       |
//! | `pipe`       | a2a pipeline depth                             | `2`         |
//! | `op`         | bench operation                                | `two_stage` |
//! | `reps`       | timed repetitions (at least 5)                 | `5`         |
//! | `steps`      | smoke-training steps                           | `200`       |
//! | `lr`         | smoke-training learning rate                   | `0.05`      |
//! | `csv`        | output path for CSV records                    | stdout      |
//! | `log`        | output path for the cpsim message log          | none        |

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use convmix::cpsim::{Layout, Scheme};
use convmix::DType;

/// Timed repetitions never drop below this.
pub const MIN_REPS: usize = 5;

/// Sequence lengths: a single value or an inclusive doubling sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LenSpec {
    pub start: usize,
    pub end: usize,
}

impl LenSpec {
    pub fn single(len: usize) -> Self {
        Self { start: len, end: len }
    }

    pub fn is_single(&self) -> bool {
        self.start == self.end
    }

    /// `start, 2 start, 4 start, ...` below `end`, then `end`.
    pub fn values(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut l = self.start;
        while l < self.end {
            out.push(l);
            l *= 2;
        }
        out.push(self.end);
        out
    }
}

impl FromStr for LenSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |v: &str| -> Result<usize, String> {
            match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(format!("invalid length `{v}`")),
            }
        };
        match s.split_once("..") {
            Some((a, b)) => {
                let (start, end) = (num(a)?, num(b.trim_start_matches('='))?);
                if start > end {
                    return Err(format!("empty length sweep `{s}`"));
                }
                Ok(Self { start, end })
            }
            None => num(s).map(Self::single),
        }
    }
}

impl fmt::Display for LenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_single() {
            write!(f, "{}", self.start)
        } else {
            write!(f, "{}..{}", self.start, self.end)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub dtype: DType,
    pub len: LenSpec,
    pub filter_len: usize,
    pub block_size: usize,
    pub width: usize,
    pub group_size: usize,
    pub ranks: usize,
    pub scheme: Scheme,
    pub layout: Layout,
    pub pipe: usize,
    pub op: String,
    pub reps: usize,
    pub steps: usize,
    pub lr: f64,
    pub csv: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 0,
            dtype: DType::F64,
            len: LenSpec::single(1024),
            filter_len: 7,
            block_size: 16,
            width: 8,
            group_size: 1,
            ranks: 4,
            scheme: Scheme::A2a,
            layout: Layout::Sequential,
            pipe: 2,
            op: "two_stage".into(),
            reps: MIN_REPS,
            steps: 200,
            lr: 0.05,
            csv: None,
            log: None,
        }
    }
}

fn positive(key: &str, value: &str) -> Result<usize, String> {
    match value.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("`{key}` must be a positive integer, got `{value}`")),
    }
}

impl Settings {
    /// Sets one key; accepts the config-file and flag spellings alike.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key.trim().replace('_', "-").as_str() {
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| format!("`seed` must be an unsigned integer, got `{value}`"))?
            }
            "dtype" => self.dtype = value.parse()?,
            "len" => self.len = value.parse()?,
            "filter-len" => self.filter_len = positive(key, value)?,
            "block-size" => self.block_size = positive(key, value)?,
            "width" => self.width = positive(key, value)?,
            "group-size" => self.group_size = positive(key, value)?,
            "ranks" => self.ranks = positive(key, value)?,
            "scheme" => self.scheme = value.parse().map_err(|e: convmix::Error| e.to_string())?,
            "layout" => self.layout = value.parse().map_err(|e: convmix::Error| e.to_string())?,
            "pipe" => self.pipe = positive(key, value)?,
            "op" => self.op = value.to_string(),
            "reps" => {
                let reps = positive(key, value)?;
                if reps < MIN_REPS {
                    return Err(format!("`reps` must be at least {MIN_REPS}"));
                }
                self.reps = reps;
            }
            "steps" => self.steps = value.parse().map_err(|_| format!("`steps` must be an integer, got `{value}`"))?,
            "lr" => match value.parse::<f64>() {
                Ok(lr) if lr.is_finite() && lr >= 0.0 => self.lr = lr,
                _ => return Err(format!("`lr` must be a finite non-negative number, got `{value}`")),
            },
            "csv" => self.csv = Some(PathBuf::from(value)),
            "log" => self.log = Some(PathBuf::from(value)),
            other => return Err(format!("unknown setting `{other}`")),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_config(&mut self, text: &str) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected `key = value`", i + 1))?;
            self.set(key, value).map_err(|e| format!("config line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    pub fn from_config_file(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut s = Self::default();
        s.apply_config(&text)?;
        Ok(s)
    }

    /// The single sequence length, or an error naming `what` on a sweep.
    pub fn single_len(&self, what: &str) -> Result<usize, String> {
        if self.len.is_single() {
            Ok(self.len.start)
        } else {
            Err(format!("{what} takes a single --len, got the sweep {}", self.len))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_values() {
        let s: LenSpec = "1024..16384".parse().unwrap();
        assert_eq!(s.values(), vec![1024, 2048, 4096, 8192, 16384]);
        let s: LenSpec = "100..300".parse().unwrap();
        assert_eq!(s.values(), vec![100, 200, 300]);
        assert_eq!("64".parse::<LenSpec>().unwrap().values(), vec![64]);
        assert!("8..4".parse::<LenSpec>().is_err());
        assert!("0".parse::<LenSpec>().is_err());
    }

    #[test]
    fn config_overrides_defaults() {
        let mut s = Settings::default();
        s.apply_config("# comment\nwidth = 4\nfilter_len=9  # trailing\n\nscheme = p2p\nlayout=zigzag\n")
            .unwrap();
        assert_eq!((s.width, s.filter_len, s.scheme, s.layout), (4, 9, Scheme::P2p, Layout::Zigzag));
    }

    #[test]
    fn corrupted_config_is_rejected() {
        let mut s = Settings::default();
        assert!(s.apply_config("width 4").unwrap_err().contains("line 1"));
        assert!(s.apply_config("colour = red").is_err());
        assert!(s.apply_config("ranks = -2").is_err());
        assert!(s.apply_config("reps = 2").is_err());
        assert!(s.apply_config("dtype = f16").is_err());
    }
}
