//! Line reader shared by the model file formats.

use crate::error::{Error, Result};

pub(crate) struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
        }
    }

    pub(crate) fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Format("unexpected end of file".into()))
    }

    /// Next line, which must be `key` optionally followed by a value.
    pub(crate) fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (no, line) = self.next_line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((no, v.trim())),
            _ if line == key => Ok((no, "")),
            _ => Err(Error::Format(format!("line {no}: expected `{key}`"))),
        }
    }

    pub(crate) fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (no, v) = self.field(key)?;
        v.parse()
            .map_err(|_| Error::Format(format!("line {no}: bad value for `{key}`")))
    }
}
